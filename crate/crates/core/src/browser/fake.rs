//! In-process stand-in for a browser, driven by a small declarative site model.
//!
//! Pages are rendered as flat colored rectangles, accessibility snapshots are
//! derived from the same element list, and the instrumentation entrypoints
//! are answered natively. Good enough to exercise the crawler and the agent
//! loop without a real browser.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Duration;

use image::Rgba;
use serde_json::{json, Value};

use super::instrumentation::{InPageElementRecord, ViewportBox, CLEAR_ENTRYPOINT, COLLECT_ENTRYPOINT};
use super::{Browser, BrowserError, InputOutcome, InputPrimitive, InputTarget, PageReady, RawAXNode, WAIT_DURATION};
use crate::geometry::{Rect, Viewport};
use crate::imaging::{self, Image};

#[derive(Debug, Clone, PartialEq)]
pub enum ClickBehavior {
    Nothing,
    Navigate(String),
    /// Toggles visibility of the element's children (dropdowns, menus).
    Reveal,
    SetSentinel(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FakeElement {
    pub css: String,
    pub outer_html: String,
    pub role: String,
    pub name: String,
    pub rect: Rect,
    pub color: Rgba<u8>,
    pub hover_color: Option<Rgba<u8>>,
    pub hidden: bool,
    pub on_click: ClickBehavior,
    pub children: Vec<FakeElement>,
}

fn color_for(seed: &str) -> Rgba<u8> {
    let h = seed.bytes().fold(0x811c9dc5u32, |h, b| (h ^ b as u32).wrapping_mul(0x0100_0193));
    Rgba([(h & 0x7f) as u8 + 40, ((h >> 8) & 0x7f) as u8 + 40, ((h >> 16) & 0x7f) as u8 + 40, 255])
}

impl FakeElement {
    fn new(css: &str, role: &str, name: &str, outer_html: String, rect: Rect) -> Self {
        Self {
            css: css.into(),
            outer_html,
            role: role.into(),
            name: name.into(),
            rect,
            color: color_for(css),
            hover_color: None,
            hidden: false,
            on_click: ClickBehavior::Nothing,
            children: Vec::new(),
        }
    }

    fn id_attr(css: &str) -> String {
        css.trim_start_matches('#').to_string()
    }

    pub fn button(css: &str, name: &str, rect: Rect) -> Self {
        let html = format!("<button id=\"{}\">{}</button>", Self::id_attr(css), name);
        Self::new(css, "button", name, html, rect)
    }

    pub fn link(css: &str, name: &str, rect: Rect, href: &str) -> Self {
        let html = format!("<a id=\"{}\" href=\"{}\">{}</a>", Self::id_attr(css), href, name);
        let mut e = Self::new(css, "link", name, html, rect);
        e.on_click = ClickBehavior::Navigate(href.into());
        e
    }

    pub fn menu_item(css: &str, name: &str, rect: Rect) -> Self {
        let html = format!("<li role=\"menuitem\" id=\"{}\">{}</li>", Self::id_attr(css), name);
        Self::new(css, "menuitem", name, html, rect)
    }

    pub fn textbox(css: &str, label: &str, rect: Rect) -> Self {
        let html = format!("<input id=\"{}\" type=\"text\" aria-label=\"{}\">", Self::id_attr(css), label);
        Self::new(css, "textbox", label, html, rect)
    }

    pub fn on_click(mut self, b: ClickBehavior) -> Self {
        self.on_click = b;
        self
    }

    pub fn hover(mut self, color: Rgba<u8>) -> Self {
        self.hover_color = Some(color);
        self
    }

    pub fn hidden(mut self) -> Self {
        self.hidden = true;
        self
    }

    pub fn reveals(mut self, children: Vec<FakeElement>) -> Self {
        self.on_click = ClickBehavior::Reveal;
        self.children = children;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FakePage {
    pub title: String,
    pub background: Rgba<u8>,
    pub elements: Vec<FakeElement>,
    pub load_time: Duration,
}

impl FakePage {
    pub fn new(title: &str, elements: Vec<FakeElement>) -> Self {
        Self {
            title: title.into(),
            background: Rgba([245, 245, 245, 255]),
            elements,
            load_time: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FakeSite {
    pub pages: BTreeMap<String, FakePage>,
}

pub const FIXTURE_ROOT: &str = "http://fixture.local/";
pub const FIXTURE_PRODUCTS: &str = "http://fixture.local/products";
pub const FIXTURE_ABOUT: &str = "http://fixture.local/about";
pub const FIXTURE_SLOW: &str = "http://fixture.local/slow";

impl FakeSite {
    pub fn with_page(mut self, url: &str, page: FakePage) -> Self {
        self.pages.insert(url.into(), page);
        self
    }

    /// Three-page site: navigation links, a dropdown menu, a hover-styled
    /// button that sets a sentinel, a text box and one hidden button.
    pub fn fixture() -> Self {
        let home = FakePage::new(
            "Fixture Home",
            vec![
                FakeElement::link("#nav-products", "Products", Rect::new(20, 20, 120, 32), FIXTURE_PRODUCTS),
                FakeElement::link("#nav-about", "About", Rect::new(160, 20, 100, 32), FIXTURE_ABOUT),
                FakeElement::button("#menu", "Menu", Rect::new(280, 20, 100, 32)).reveals(vec![
                    FakeElement::menu_item("#menu-a", "A", Rect::new(280, 60, 100, 28))
                        .on_click(ClickBehavior::SetSentinel("picked A".into())),
                    FakeElement::menu_item("#menu-b", "B", Rect::new(280, 92, 100, 28))
                        .on_click(ClickBehavior::Navigate(FIXTURE_ABOUT.into())),
                ]),
                FakeElement::button("#go", "Go", Rect::new(40, 200, 160, 48))
                    .hover(Rgba([250, 200, 40, 255]))
                    .on_click(ClickBehavior::SetSentinel("clicked".into())),
                FakeElement::textbox("#q", "Search", Rect::new(240, 200, 300, 40)),
                FakeElement::button("#secret", "Secret", Rect::new(600, 200, 100, 40)).hidden(),
            ],
        );
        let products = FakePage::new(
            "Products",
            vec![
                FakeElement::link("#home", "Home", Rect::new(20, 20, 100, 32), FIXTURE_ROOT),
                FakeElement::button("#buy", "Buy", Rect::new(40, 160, 140, 48))
                    .on_click(ClickBehavior::SetSentinel("bought".into())),
                FakeElement::link("#details", "Details", Rect::new(220, 160, 140, 48), FIXTURE_ABOUT),
            ],
        );
        let about = FakePage::new(
            "About",
            vec![
                FakeElement::link("#home", "Home", Rect::new(20, 20, 100, 32), FIXTURE_ROOT),
                FakeElement::button("#contact", "Contact", Rect::new(40, 160, 140, 48))
                    .on_click(ClickBehavior::SetSentinel("contacted".into())),
            ],
        );
        let mut slow = FakePage::new("Slow", vec![]);
        slow.load_time = Duration::from_millis(500);
        FakeSite::default()
            .with_page(FIXTURE_ROOT, home)
            .with_page(FIXTURE_PRODUCTS, products)
            .with_page(FIXTURE_ABOUT, about)
            .with_page(FIXTURE_SLOW, slow)
    }

    /// (role, name) of every element that can become visible on `url`.
    pub fn ground_truth(&self, url: &str) -> Vec<(String, String)> {
        fn walk(els: &[FakeElement], out: &mut Vec<(String, String)>) {
            for e in els.iter().filter(|e| !e.hidden) {
                out.push((e.role.clone(), e.name.clone()));
                walk(&e.children, out);
            }
        }
        let mut out = Vec::new();
        if let Some(p) = self.pages.get(url) {
            walk(&p.elements, &mut out);
        }
        out
    }
}

const ROOT_BACKEND: i64 = 1;
const WRAPPER_BACKEND: i64 = 2;
const SENTINEL_BACKEND: i64 = 3;

/// Browser double over a [`FakeSite`].
#[derive(Debug, Clone)]
pub struct FakeBrowser {
    site: FakeSite,
    viewport: Viewport,
    url: String,
    back: Vec<String>,
    forward: Vec<String>,
    revealed: BTreeSet<String>,
    sentinel: Option<String>,
    values: HashMap<String, String>,
    pointer: Option<(f64, f64)>,
    log: Vec<String>,
}

impl FakeBrowser {
    pub fn new(site: FakeSite, viewport: Viewport) -> Self {
        Self {
            site,
            viewport,
            url: "about:blank".into(),
            back: Vec::new(),
            forward: Vec::new(),
            revealed: BTreeSet::new(),
            sentinel: None,
            values: HashMap::new(),
            pointer: None,
            log: Vec::new(),
        }
    }

    pub fn fixture() -> Self {
        Self::new(FakeSite::fixture(), Viewport::DEFAULT)
    }

    pub fn sentinel(&self) -> Option<&str> {
        self.sentinel.as_deref()
    }

    pub fn value_of(&self, css: &str) -> Option<&str> {
        self.values.get(css).map(String::as_str)
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Commands received, in order.
    pub fn command_log(&self) -> &[String] {
        &self.log
    }

    fn page(&self) -> Option<&FakePage> {
        self.site.pages.get(&self.url)
    }

    /// Visible elements in paint order with stable backend ids.
    fn visible(&self) -> Vec<(i64, &FakeElement, usize)> {
        fn walk<'a>(
            els: &'a [FakeElement],
            revealed: &BTreeSet<String>,
            depth: usize,
            next: &mut i64,
            out: &mut Vec<(i64, &'a FakeElement, usize)>,
        ) {
            for e in els {
                let id = *next;
                *next += 1;
                let shown = !e.hidden;
                if shown {
                    out.push((id, e, depth));
                }
                if shown && revealed.contains(&e.css) {
                    walk(&e.children, revealed, depth + 1, next, out);
                } else {
                    *next += count(&e.children) as i64;
                }
            }
        }
        fn count(els: &[FakeElement]) -> usize {
            els.iter().map(|e| 1 + count(&e.children)).sum()
        }
        let mut out = Vec::new();
        if let Some(p) = self.page() {
            let mut next = 10;
            walk(&p.elements, &self.revealed, 0, &mut next, &mut out);
        }
        out
    }

    fn element_at(&self, x: f64, y: f64) -> Option<(i64, FakeElement)> {
        self.visible()
            .into_iter()
            .rev()
            .find(|(_, e, _)| e.rect.contains_point(x, y))
            .map(|(id, e, _)| (id, e.clone()))
    }

    fn element_by_backend(&self, backend: i64) -> Option<FakeElement> {
        self.visible().into_iter().find(|(id, _, _)| *id == backend).map(|(_, e, _)| e.clone())
    }

    fn resolve(&self, target: &InputTarget) -> Result<Option<FakeElement>, BrowserError> {
        match *target {
            InputTarget::Point { x, y } => {
                if !self.viewport.bounds().contains_point(x, y) {
                    return Err(BrowserError::TargetUnresolvable(format!("point ({x}, {y}) outside viewport")));
                }
                Ok(self.element_at(x, y).map(|(_, e)| e))
            }
            InputTarget::Node(id) => self
                .element_by_backend(id)
                .map(Some)
                .ok_or_else(|| BrowserError::StaleTarget(format!("node {id}"))),
            InputTarget::Window => Ok(None),
        }
    }

    fn load(&mut self, url: &str) -> Result<Duration, BrowserError> {
        let page = self.site.pages.get(url).ok_or_else(|| BrowserError::NavigationFailed {
            url: url.into(),
            reason: "net::ERR_NAME_NOT_RESOLVED".into(),
        })?;
        let load_time = page.load_time;
        self.url = url.into();
        self.revealed.clear();
        self.sentinel = None;
        self.values.clear();
        self.pointer = None;
        Ok(load_time)
    }

    fn go(&mut self, url: &str) -> Result<Duration, BrowserError> {
        let prev = self.url.clone();
        let t = self.load(url)?;
        if prev != "about:blank" {
            self.back.push(prev);
        }
        self.forward.clear();
        Ok(t)
    }

    fn activate(&mut self, e: &FakeElement) -> Result<(), BrowserError> {
        match &e.on_click {
            ClickBehavior::Nothing => {}
            ClickBehavior::Navigate(url) => {
                self.go(url)?;
            }
            ClickBehavior::Reveal => {
                if !self.revealed.remove(&e.css) {
                    self.revealed.insert(e.css.clone());
                }
            }
            ClickBehavior::SetSentinel(text) => self.sentinel = Some(text.clone()),
        }
        Ok(())
    }
}

impl Browser for FakeBrowser {
    fn viewport(&self) -> Viewport {
        self.viewport
    }

    fn navigate(&mut self, url: &str, settle: Duration) -> Result<PageReady, BrowserError> {
        self.log.push(format!("navigate {url}"));
        let load_time = self.go(url)?;
        if settle < load_time {
            return Err(BrowserError::NavigationTimeout { url: url.into() });
        }
        Ok(PageReady { url: url.into() })
    }

    fn current_url(&mut self) -> Result<String, BrowserError> {
        Ok(self.url.clone())
    }

    fn capture_screenshot(&mut self) -> Result<Image, BrowserError> {
        self.log.push("screenshot".into());
        let bg = self.page().map(|p| p.background).unwrap_or(Rgba([255, 255, 255, 255]));
        let mut img = imaging::solid(self.viewport.width, self.viewport.height, bg);
        for (_, e, _) in self.visible() {
            let hovered = self.pointer.is_some_and(|(x, y)| e.rect.contains_point(x, y));
            let color = match (hovered, e.hover_color) {
                (true, Some(c)) => c,
                _ => e.color,
            };
            imaging::fill_rect(&mut img, e.rect, color);
            if let Some(v) = self.values.get(&e.css) {
                let bar = Rect::new(e.rect.x + 4, e.rect.y + 4, (v.len() as u32 * 6).min(e.rect.width.saturating_sub(8)), 6);
                imaging::fill_rect(&mut img, bar, Rgba([20, 20, 20, 255]));
            }
        }
        if let Some(s) = &self.sentinel {
            imaging::fill_rect(&mut img, Rect::new(0, self.viewport.height as i32 - 16, 200, 16), color_for(s));
        }
        Ok(img)
    }

    fn fetch_raw_ax(&mut self) -> Result<RawAXNode, BrowserError> {
        self.log.push("ax".into());
        let Some(page) = self.page() else {
            return Ok(RawAXNode::new(ROOT_BACKEND, "RootWebArea", ""));
        };
        let title = page.title.clone();
        let visible = self.visible();
        // Rebuild nesting from the paint-order walk.
        let mut stack: Vec<(usize, RawAXNode)> = Vec::new();
        let mut top: Vec<RawAXNode> = Vec::new();
        fn close(stack: &mut Vec<(usize, RawAXNode)>, top: &mut Vec<RawAXNode>, depth: usize) {
            while stack.last().is_some_and(|(d, _)| *d >= depth) {
                let (_, node) = stack.pop().unwrap();
                match stack.last_mut() {
                    Some((_, parent)) => parent.children.push(node),
                    None => top.push(node),
                }
            }
        }
        for (id, e, depth) in visible {
            close(&mut stack, &mut top, depth);
            let mut node = RawAXNode::new(id, e.role.clone(), e.name.clone());
            if matches!(e.on_click, ClickBehavior::Reveal) {
                let open = self.revealed.contains(&e.css);
                node = node.with_state("expanded", if open { "true" } else { "false" });
            }
            stack.push((depth, node));
        }
        close(&mut stack, &mut top, 0);
        if let Some(s) = &self.sentinel {
            top.push(RawAXNode::new(SENTINEL_BACKEND, "StaticText", s.clone()));
        }
        let wrapper = RawAXNode::new(WRAPPER_BACKEND, "generic", "").with_children(top);
        Ok(RawAXNode::new(ROOT_BACKEND, "RootWebArea", title).with_children(vec![wrapper]))
    }

    fn execute_input(&mut self, input: &InputPrimitive) -> Result<InputOutcome, BrowserError> {
        self.log.push(format!("input {input:?}"));
        match input {
            InputPrimitive::Click(t) | InputPrimitive::DbClick(t) => {
                if let Some(e) = self.resolve(t)? {
                    self.activate(&e)?;
                }
                Ok(InputOutcome::Dispatched)
            }
            InputPrimitive::Hover(t) => {
                self.pointer = match *t {
                    InputTarget::Point { x, y } => Some((x, y)),
                    _ => self.resolve(t)?.map(|e| e.rect.center()),
                };
                Ok(InputOutcome::Dispatched)
            }
            InputPrimitive::TypeText { target, text } => {
                let e = self
                    .resolve(target)?
                    .ok_or_else(|| BrowserError::TargetUnresolvable("no element to type into".into()))?;
                self.values.insert(e.css.clone(), text.clone());
                Ok(InputOutcome::Dispatched)
            }
            InputPrimitive::Scroll { target, .. } => {
                self.resolve(target)?;
                Ok(InputOutcome::Dispatched)
            }
            InputPrimitive::HistoryBack => match self.back.pop() {
                Some(prev) => {
                    let cur = self.url.clone();
                    self.load(&prev)?;
                    self.forward.push(cur);
                    Ok(InputOutcome::Dispatched)
                }
                None => Ok(InputOutcome::NoHistoryEntry),
            },
            InputPrimitive::HistoryForward => match self.forward.pop() {
                Some(next) => {
                    let cur = self.url.clone();
                    self.load(&next)?;
                    self.back.push(cur);
                    Ok(InputOutcome::Dispatched)
                }
                None => Ok(InputOutcome::NoHistoryEntry),
            },
            InputPrimitive::Wait => {
                std::thread::sleep(WAIT_DURATION);
                Ok(InputOutcome::Waited)
            }
        }
    }

    fn evaluate_script(&mut self, script: &str) -> Result<Value, BrowserError> {
        self.log.push("evaluate".into());
        if script.contains(COLLECT_ENTRYPOINT) {
            let records: Vec<InPageElementRecord> = self
                .visible()
                .into_iter()
                .map(|(_, e, _)| InPageElementRecord {
                    css: e.css.clone(),
                    allcss: format!("html > body > {}", e.css),
                    outer_html: e.outer_html.clone(),
                    bbox: ViewportBox {
                        x: e.rect.x as f64,
                        y: e.rect.y as f64,
                        width: e.rect.width as f64,
                        height: e.rect.height as f64,
                    },
                    visible: true,
                })
                .collect();
            return Ok(Value::String(serde_json::to_string(&records).unwrap_or_default()));
        }
        if script.contains(CLEAR_ENTRYPOINT) {
            return Ok(Value::String("0".into()));
        }
        let trimmed = script.trim();
        if trimmed.starts_with("throw") {
            return Err(BrowserError::ScriptError(trimmed.trim_start_matches("throw").trim().to_string()));
        }
        if trimmed == "location.href" {
            return Ok(json!(self.url));
        }
        if let Some((a, b)) = trimmed.split_once('+') {
            if let (Ok(a), Ok(b)) = (a.trim().parse::<i64>(), b.trim().parse::<i64>()) {
                return Ok(json!(a + b));
            }
        }
        Ok(Value::Null)
    }

    fn node_box(&mut self, backend_id: i64) -> Result<Option<Rect>, BrowserError> {
        Ok(self.element_by_backend(backend_id).map(|e| e.rect))
    }

    fn locate(&mut self, css: &str) -> Result<Option<Rect>, BrowserError> {
        Ok(self.visible().into_iter().find(|(_, e, _)| e.css == css).map(|(_, e, _)| e.rect))
    }

    fn reset_history(&mut self) -> Result<(), BrowserError> {
        self.back.clear();
        self.forward.clear();
        Ok(())
    }
}
