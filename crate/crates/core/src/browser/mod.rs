//! Browser access: the driver trait the rest of the crate programs against,
//! a devtools-protocol implementation, and an in-process fake site.

mod cdp;
pub mod fake;
pub mod instrumentation;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Rect, Viewport};
use crate::imaging::Image;

pub use cdp::{CdpSession, ConnectOptions};

/// Default page-settle cap used by callers that do not pass their own.
pub const DEFAULT_SETTLE: Duration = Duration::from_secs(10);
/// Duration realized by the `wait` primitive.
pub const WAIT_DURATION: Duration = Duration::from_secs(1);
pub const CDP_ENV: &str = "COGWEB_CDP";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrowserError {
    #[error("connect failed: {0}")]
    ConnectFailed(String),
    #[error("invalid viewport {width}x{height}")]
    InvalidViewport { width: u32, height: u32 },
    #[error("navigation to {url} did not settle in time")]
    NavigationTimeout { url: String },
    #[error("navigation to {url} failed: {reason}")]
    NavigationFailed { url: String, reason: String },
    #[error("screenshot failed: {0}")]
    CaptureFailed(String),
    #[error("accessibility snapshot failed: {0}")]
    SnapshotFailed(String),
    #[error("target is no longer attached: {0}")]
    StaleTarget(String),
    #[error("target cannot be resolved: {0}")]
    TargetUnresolvable(String),
    #[error("script error: {0}")]
    ScriptError(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("browser connection lost: {0}")]
    Disconnected(String),
}

impl BrowserError {
    /// Errors after which the session cannot be used any more.
    pub fn is_fatal(&self) -> bool {
        matches!(self, BrowserError::Disconnected(_) | BrowserError::ConnectFailed(_))
    }
}

/// One node of the browser's raw accessibility snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RawAXNode {
    pub backend_id: i64,
    pub role: String,
    pub name: String,
    pub description: String,
    pub state_flags: Vec<(String, String)>,
    pub children: Vec<RawAXNode>,
}

impl RawAXNode {
    pub fn new(backend_id: i64, role: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            backend_id,
            role: role.into(),
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn with_children(mut self, children: Vec<RawAXNode>) -> Self {
        self.children = children;
        self
    }

    pub fn with_state(mut self, flag: &str, value: &str) -> Self {
        self.state_flags.push((flag.to_string(), value.to_string()));
        self
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&RawAXNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InputTarget {
    Point { x: f64, y: f64 },
    Node(i64),
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScrollDirection {
    Up,
    Down,
}

impl ScrollDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScrollDirection::Up => "up",
            ScrollDirection::Down => "down",
        }
    }
}

/// Low-level input the driver knows how to dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputPrimitive {
    Click(InputTarget),
    DbClick(InputTarget),
    Hover(InputTarget),
    TypeText { target: InputTarget, text: String },
    Scroll { target: InputTarget, direction: ScrollDirection },
    HistoryBack,
    HistoryForward,
    Wait,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputOutcome {
    Dispatched,
    /// The pointer target was occluded and the click was delivered through the DOM.
    DomFallback,
    /// history_back/forward with no entry to move to.
    NoHistoryEntry,
    Waited,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageReady {
    pub url: String,
}

/// Everything the crawler and agent loop need from a live page.
///
/// Implementations execute one command at a time; `&mut self` on every
/// call keeps a session from being driven concurrently.
pub trait Browser {
    fn viewport(&self) -> Viewport;

    fn navigate(&mut self, url: &str, settle: Duration) -> Result<PageReady, BrowserError>;

    fn current_url(&mut self) -> Result<String, BrowserError>;

    fn capture_screenshot(&mut self) -> Result<Image, BrowserError>;

    fn fetch_raw_ax(&mut self) -> Result<RawAXNode, BrowserError>;

    fn execute_input(&mut self, input: &InputPrimitive) -> Result<InputOutcome, BrowserError>;

    fn evaluate_script(&mut self, script: &str) -> Result<serde_json::Value, BrowserError>;

    /// Bounding box of an accessibility node's DOM element, `None` when detached.
    fn node_box(&mut self, backend_id: i64) -> Result<Option<Rect>, BrowserError>;

    /// Bounding box of the first element matching `css`, `None` when absent.
    fn locate(&mut self, css: &str) -> Result<Option<Rect>, BrowserError>;

    /// Drops back/forward entries so a restarted episode starts clean.
    fn reset_history(&mut self) -> Result<(), BrowserError>;
}

impl<B: Browser + ?Sized> Browser for Box<B> {
    fn viewport(&self) -> Viewport {
        (**self).viewport()
    }
    fn navigate(&mut self, url: &str, settle: Duration) -> Result<PageReady, BrowserError> {
        (**self).navigate(url, settle)
    }
    fn current_url(&mut self) -> Result<String, BrowserError> {
        (**self).current_url()
    }
    fn capture_screenshot(&mut self) -> Result<Image, BrowserError> {
        (**self).capture_screenshot()
    }
    fn fetch_raw_ax(&mut self) -> Result<RawAXNode, BrowserError> {
        (**self).fetch_raw_ax()
    }
    fn execute_input(&mut self, input: &InputPrimitive) -> Result<InputOutcome, BrowserError> {
        (**self).execute_input(input)
    }
    fn evaluate_script(&mut self, script: &str) -> Result<serde_json::Value, BrowserError> {
        (**self).evaluate_script(script)
    }
    fn node_box(&mut self, backend_id: i64) -> Result<Option<Rect>, BrowserError> {
        (**self).node_box(backend_id)
    }
    fn locate(&mut self, css: &str) -> Result<Option<Rect>, BrowserError> {
        (**self).locate(css)
    }
    fn reset_history(&mut self) -> Result<(), BrowserError> {
        (**self).reset_history()
    }
}

/// Endpoint from an explicit flag value, falling back to `COGWEB_CDP`.
pub fn resolve_endpoint(flag: Option<&str>) -> Option<String> {
    flag.map(str::to_string).or_else(|| std::env::var(CDP_ENV).ok())
}
