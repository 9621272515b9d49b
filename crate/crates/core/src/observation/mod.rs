//! Agent-facing observations: screenshot plus indexed accessibility tree.

pub mod ax;
pub mod html;

use serde::{Deserialize, Serialize};

use crate::browser::{Browser, BrowserError};
use crate::geometry::Rect;
use crate::imaging::Image;

pub use ax::{normalize_ax, parse_ax_text, serialize_ax, AXError, AXNode, AXTree};
pub use html::{infer_name, infer_role, ParseError};
pub use crate::imaging::{draw_marker, MarkerStyle};

/// Roles treated as interactive when crawling and when filling node boxes.
pub const INTERACTIVE_ROLES: &[&str] = &[
    "button", "link", "checkbox", "radio", "combobox", "textbox", "searchbox", "tab", "menuitem", "switch", "slider",
    "option",
];

pub fn is_interactive_role(role: &str) -> bool {
    INTERACTIVE_ROLES.contains(&role)
}

/// Per-element crawl metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementMeta {
    pub css: String,
    /// Ancestor selector chain, outermost first, joined with " > ".
    pub allcss: String,
    pub outer_html: String,
    pub location: Rect,
    pub role: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub screenshot: Image,
    pub ax: AXTree,
    pub ax_text: String,
    pub url: String,
    pub step: u32,
}

impl Observation {
    pub fn new(screenshot: Image, ax: AXTree, url: impl Into<String>, step: u32) -> Self {
        let ax_text = serialize_ax(&ax);
        Self { screenshot, ax, ax_text, url: url.into(), step }
    }
}

const MAX_RECAPTURE: usize = 3;

/// Captures screenshot and accessibility tree from one settled page state.
///
/// The tree is fetched before and after the screenshot; if the two differ the
/// page was still changing and the pair is captured again.
pub fn compose_observation<B: Browser + ?Sized>(browser: &mut B, step: u32) -> Result<Observation, BrowserError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        let before = normalize_ax(&browser.fetch_raw_ax()?);
        let screenshot = browser.capture_screenshot()?;
        let after = normalize_ax(&browser.fetch_raw_ax()?);
        if before != after && attempt < MAX_RECAPTURE {
            tracing::debug!(attempt, "page changed during capture, retrying");
            continue;
        }
        let mut ax = after;
        let targets: Vec<(u32, i64)> = ax
            .nodes()
            .iter()
            .filter(|n| is_interactive_role(&n.role))
            .map(|n| (n.id, n.backend_id))
            .collect();
        for (id, backend) in targets {
            let bbox = browser.node_box(backend)?;
            ax.set_bbox(id, bbox);
        }
        let url = browser.current_url()?;
        return Ok(Observation::new(screenshot, ax, url, step));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::browser::fake::{FakeBrowser, FIXTURE_ROOT};
    use crate::browser::DEFAULT_SETTLE;

    #[test]
    fn fixture_observation() {
        let mut b = FakeBrowser::fixture();
        b.navigate(FIXTURE_ROOT, DEFAULT_SETTLE).unwrap();
        let o1 = compose_observation(&mut b, 1).unwrap();
        let o2 = compose_observation(&mut b, 2).unwrap();
        assert!(!o1.ax_text.is_empty());
        assert_eq!((o1.screenshot.width(), o1.screenshot.height()), (1280, 720));
        assert_eq!(o1.ax_text, o2.ax_text);
        assert_eq!((o1.step, o2.step), (1, 2));
        assert_eq!(o1.ax_text, serialize_ax(&o1.ax));
        assert!(o1.ax_text.contains("button 'Go'"));
        let go = o1.ax.nodes().iter().find(|n| n.name == "Go").unwrap();
        assert_eq!(go.bbox, Some(Rect::new(40, 200, 160, 48)));
    }
}
