//! Contract with the in-page instrumentation bundle.
//!
//! The bundle is a self-contained script built separately; once evaluated it
//! installs `window.__cogweb` with `collectInteractives`, `highlight`,
//! `clearHighlights` and `cssPath`. This module loads the bundle text and
//! decodes what its entrypoints return.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Browser, BrowserError};
use crate::geometry::Rect;

pub const BUNDLE_ENV: &str = "COGWEB_INSTRUMENTATION";
pub const NAMESPACE: &str = "__cogweb";
pub const COLLECT_ENTRYPOINT: &str = "__cogweb.collectInteractives()";
pub const CLEAR_ENTRYPOINT: &str = "__cogweb.clearHighlights()";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewportBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl From<ViewportBox> for Rect {
    fn from(b: ViewportBox) -> Rect {
        Rect::from_f64(b.x, b.y, b.width, b.height)
    }
}

/// One element as reported by `collectInteractives`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InPageElementRecord {
    pub css: String,
    pub allcss: String,
    pub outer_html: String,
    pub bbox: ViewportBox,
    pub visible: bool,
}

#[derive(Debug, Clone)]
pub struct InstrumentationBundle {
    source: String,
}

impl InstrumentationBundle {
    pub fn from_source(source: impl Into<String>) -> Self {
        Self { source: source.into() }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_source(std::fs::read_to_string(path)?))
    }

    /// Bundle from an explicit path or `COGWEB_INSTRUMENTATION`.
    pub fn resolve(path: Option<&Path>) -> std::io::Result<Option<Self>> {
        match path {
            Some(p) => Self::load(p).map(Some),
            None => match std::env::var_os(BUNDLE_ENV) {
                Some(p) => Self::load(Path::new(&p)).map(Some),
                None => Ok(None),
            },
        }
    }

    /// Script that installs the bundle if needed, then evaluates `call`.
    pub fn invocation(&self, call: &str) -> String {
        format!(
            "(() => {{ if (!window.{NAMESPACE}) {{ {} }} return JSON.stringify(window.{call}); }})()",
            self.source
        )
    }

    /// Visible interactive elements in document order.
    pub fn collect_interactives<B: Browser + ?Sized>(&self, browser: &mut B) -> Result<Vec<InPageElementRecord>, BrowserError> {
        let raw = browser.evaluate_script(&self.invocation(COLLECT_ENTRYPOINT))?;
        let records: Vec<InPageElementRecord> = decode(raw)?;
        Ok(records.into_iter().filter(|r| r.visible).collect())
    }

    pub fn clear_highlights<B: Browser + ?Sized>(&self, browser: &mut B) -> Result<u64, BrowserError> {
        let raw = browser.evaluate_script(&self.invocation(CLEAR_ENTRYPOINT))?;
        decode(raw)
    }
}

fn decode<T: serde::de::DeserializeOwned>(raw: Value) -> Result<T, BrowserError> {
    let value = match raw {
        Value::String(s) => serde_json::from_str(&s).map_err(|e| BrowserError::ScriptError(format!("bad bundle output: {e}")))?,
        other => other,
    };
    serde_json::from_value(value).map_err(|e| BrowserError::ScriptError(format!("bad bundle output: {e}")))
}
