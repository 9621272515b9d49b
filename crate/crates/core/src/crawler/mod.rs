//! Layered site traversal: click every interactive element, capture the five
//! interaction screenshots, and record the accessibility-tree change.

mod store;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::browser::instrumentation::{InPageElementRecord, InstrumentationBundle};
use crate::browser::{Browser, BrowserError, InputOutcome, InputPrimitive, InputTarget, DEFAULT_SETTLE};
use crate::geometry::Rect;
use crate::imaging::{self, Image, MarkerStyle};
use crate::observation::{infer_name, infer_role, normalize_ax, AXTree, ElementMeta};

pub use store::{read_store, site_name, write_store, PageEntry, RecordMeta};

pub const MAX_LAYERS: u32 = 6;
/// Click chains longer than this are not replayed; such states are re-entered by URL.
pub const MAX_REPLAY_DEPTH: usize = 3;
pub const CROP_PADDING: u32 = 8;

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("max_layers must be within 1..={MAX_LAYERS}, got {0}")]
    InvalidLayers(u32),
    #[error(transparent)]
    Browser(#[from] BrowserError),
    #[error("store error: {0}")]
    Store(String),
}

/// (role, name, ancestor path) of one tree node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AXTriple {
    pub role: String,
    pub name: String,
    pub parent_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AXDiff {
    pub added: Vec<AXTriple>,
    pub removed: Vec<AXTriple>,
    pub url_changed: bool,
}

fn triples(tree: &AXTree) -> Vec<AXTriple> {
    tree.nodes()
        .iter()
        .zip(tree.parent_paths())
        .map(|(n, p)| AXTriple { role: n.role.clone(), name: n.name.clone(), parent_path: p })
        .collect()
}

/// Items of `a` not matched by an equal item of `b`, multiset-wise, in `a`'s order.
fn multiset_minus(a: &[AXTriple], b: &[AXTriple]) -> Vec<AXTriple> {
    let mut counts: HashMap<&AXTriple, usize> = HashMap::new();
    for t in b {
        *counts.entry(t).or_default() += 1;
    }
    a.iter()
        .filter(|t| match counts.get_mut(t) {
            Some(c) if *c > 0 => {
                *c -= 1;
                false
            }
            _ => true,
        })
        .cloned()
        .collect()
}

/// Multiset difference of node triples. `added` follows the document order
/// of `after`, `removed` that of `before`.
pub fn diff_ax(before: &AXTree, after: &AXTree) -> AXDiff {
    let (b, a) = (triples(before), triples(after));
    AXDiff { added: multiset_minus(&a, &b), removed: multiset_minus(&b, &a), url_changed: false }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shots {
    pub standalone: Image,
    pub base: Image,
    pub base_rect: Image,
    pub hover: Image,
    pub click: Image,
}

impl Shots {
    pub const NAMES: [&'static str; 5] = ["standalone", "base", "base_rect", "hover", "click"];

    pub fn images(&self) -> [&Image; 5] {
        [&self.standalone, &self.base, &self.base_rect, &self.hover, &self.click]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub id: String,
    pub element: ElementMeta,
    pub shots: Shots,
    pub pre_ax: AXTree,
    pub post_ax: AXTree,
    pub diff: AXDiff,
    pub layer: u32,
    pub pre_url: String,
    pub post_url: String,
    /// Selectors clicked after loading `pre_url` to reach the pre-click state.
    pub chain: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlBudget {
    pub max_elements_per_page: usize,
    pub max_records: usize,
}

impl Default for CrawlBudget {
    fn default() -> Self {
        Self { max_elements_per_page: 50, max_records: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrawlConfig {
    pub max_layers: u32,
    pub budget: CrawlBudget,
    pub settle: Duration,
    /// Pause after hover and click inputs before capturing.
    pub input_settle: Duration,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        Self { max_layers: 2, budget: CrawlBudget::default(), settle: DEFAULT_SETTLE, input_settle: Duration::from_millis(500) }
    }
}

/// Everything crawled from one site.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrawlStore {
    pub site: String,
    pub records: Vec<InteractionRecord>,
    /// Pages seen, keyed by URL.
    pub pages: BTreeMap<String, PageEntry>,
    /// Per-element failures, as human-readable lines.
    pub failures: Vec<String>,
}

impl CrawlStore {
    pub fn record(&self, id: &str) -> Option<&InteractionRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Records captured from the same pre-click state as `r`, `r` included.
    pub fn siblings(&self, r: &InteractionRecord) -> Vec<&InteractionRecord> {
        self.records.iter().filter(|o| o.pre_url == r.pre_url && o.chain == r.chain && o.layer == r.layer).collect()
    }
}

/// Element metadata from an in-page record; role and name come from the
/// element's markup.
pub fn element_meta(rec: &InPageElementRecord, viewport: Rect) -> ElementMeta {
    let b = &rec.bbox;
    let raw = Rect::from_f64(b.x, b.y, b.width, b.height);
    let location = raw.intersection(&viewport).unwrap_or(Rect::new(raw.x.max(0), raw.y.max(0), 0, 0));
    ElementMeta {
        css: rec.css.clone(),
        allcss: rec.allcss.clone(),
        outer_html: rec.outer_html.clone(),
        location,
        role: infer_role(&rec.outer_html).unwrap_or_else(|_| "generic".into()),
        name: infer_name(&rec.outer_html).unwrap_or_default(),
    }
}

fn css_tail(css: &str) -> String {
    let segs: Vec<&str> = css.split('>').map(str::trim).filter(|s| !s.is_empty()).collect();
    segs[segs.len().saturating_sub(2)..].join(" > ")
}

/// (role, name, last two selector segments).
pub fn element_signature(e: &ElementMeta) -> (String, String, String) {
    (e.role.clone(), e.name.clone(), css_tail(&e.css))
}

fn pause(d: Duration) {
    if !d.is_zero() {
        std::thread::sleep(d);
    }
}

/// Captures standalone, base, base_rect, hover and click images for one
/// element, with the tree before and after the click. The browser is left
/// in the post-click state.
pub fn capture_interaction_states<B: Browser + ?Sized>(
    browser: &mut B,
    element: &ElementMeta,
    input_settle: Duration,
) -> Result<(Shots, AXTree, AXTree, String, String), BrowserError> {
    let location = browser
        .locate(&element.css)?
        .ok_or_else(|| BrowserError::StaleTarget(element.css.clone()))?;
    let viewport = browser.viewport().bounds();
    let location = location.intersection(&viewport).ok_or_else(|| BrowserError::TargetUnresolvable(element.css.clone()))?;
    let pre_url = browser.current_url()?;
    let pre_ax = normalize_ax(&browser.fetch_raw_ax()?);
    let base = browser.capture_screenshot()?;
    let standalone = imaging::crop(&base, location.inflate(CROP_PADDING))
        .map_err(|e| BrowserError::CaptureFailed(e.to_string()))?;
    let base_rect =
        imaging::draw_marker(&base, location, MarkerStyle::default()).map_err(|e| BrowserError::CaptureFailed(e.to_string()))?;
    let (cx, cy) = location.center();
    let point = InputTarget::Point { x: cx, y: cy };
    browser.execute_input(&InputPrimitive::Hover(point))?;
    pause(input_settle);
    let hover = browser.capture_screenshot()?;
    browser.execute_input(&InputPrimitive::Click(point))?;
    pause(input_settle);
    let click = browser.capture_screenshot()?;
    let post_ax = normalize_ax(&browser.fetch_raw_ax()?);
    let post_url = browser.current_url()?;
    Ok((Shots { standalone, base, base_rect, hover, click }, pre_ax, post_ax, pre_url, post_url))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State {
    url: String,
    chain: Vec<String>,
}

/// Loads `state.url` and replays its click chain.
fn enter<B: Browser + ?Sized>(browser: &mut B, state: &State, settle: Duration, input_settle: Duration) -> Result<(), BrowserError> {
    match browser.navigate(&state.url, settle) {
        Ok(_) | Err(BrowserError::NavigationTimeout { .. }) => {}
        Err(e) => return Err(e),
    }
    for css in &state.chain {
        let rect = browser.locate(css)?.ok_or_else(|| BrowserError::StaleTarget(css.clone()))?;
        let (x, y) = rect.center();
        browser.execute_input(&InputPrimitive::Click(InputTarget::Point { x, y }))?;
        pause(input_settle);
    }
    Ok(())
}

/// Returns to `state` after probing an element: back through history when
/// the click navigated away from a plain URL state, else re-entry.
fn restore<B: Browser + ?Sized>(
    browser: &mut B,
    state: &State,
    url_changed: bool,
    cfg: &CrawlConfig,
) -> Result<(), BrowserError> {
    if url_changed && state.chain.is_empty() {
        if let Ok(InputOutcome::Dispatched) = browser.execute_input(&InputPrimitive::HistoryBack) {
            pause(cfg.input_settle);
            if browser.current_url()? == state.url {
                return Ok(());
            }
        }
    }
    enter(browser, state, cfg.settle, cfg.input_settle)
}

/// Breadth-first crawl by layer. Layer k holds the elements of every state
/// reached by k−1 clicks from `start_url`. Per-element failures are recorded
/// in `failures` and never abort the crawl.
pub fn crawl_site<B: Browser + ?Sized>(
    browser: &mut B,
    start_url: &str,
    bundle: &InstrumentationBundle,
    cfg: &CrawlConfig,
) -> Result<CrawlStore, CrawlError> {
    if !(1..=MAX_LAYERS).contains(&cfg.max_layers) {
        return Err(CrawlError::InvalidLayers(cfg.max_layers));
    }
    let viewport = browser.viewport().bounds();
    let mut store = CrawlStore { site: site_name(start_url), ..Default::default() };
    let mut visited: HashSet<State> = HashSet::new();
    let mut seen_outcomes: HashSet<(String, String, String, String)> = HashSet::new();
    let mut probed: HashSet<(u32, String, String)> = HashSet::new();
    let start = State { url: start_url.to_string(), chain: Vec::new() };
    visited.insert(start.clone());
    let mut frontier = vec![start];
    'layers: for layer in 1..=cfg.max_layers {
        let mut next: Vec<State> = Vec::new();
        for state in &frontier {
            if let Err(e) = enter(browser, state, cfg.settle, cfg.input_settle) {
                if e.is_fatal() {
                    return Err(e.into());
                }
                store.failures.push(format!("layer {layer}: cannot enter {} via {:?}: {e}", state.url, state.chain));
                continue;
            }
            let elements = match bundle.collect_interactives(browser) {
                Ok(v) => v,
                Err(e) => {
                    if e.is_fatal() {
                        return Err(e.into());
                    }
                    store.failures.push(format!("layer {layer}: element discovery failed on {}: {e}", state.url));
                    continue;
                }
            };
            if let Ok(shot) = browser.capture_screenshot() {
                store.pages.entry(state.url.clone()).or_insert_with(|| PageEntry { first_layer: layer, hash: imaging::content_hash(&shot) });
            }
            let metas: Vec<ElementMeta> =
                elements.iter().take(cfg.budget.max_elements_per_page).map(|r| element_meta(r, viewport)).collect();
            for meta in metas {
                if store.records.len() >= cfg.budget.max_records {
                    break 'layers;
                }
                if !probed.insert((layer, meta.css.clone(), state.url.clone())) {
                    continue;
                }
                let captured = capture_interaction_states(browser, &meta, cfg.input_settle);
                let (shots, pre_ax, post_ax, pre_url, post_url) = match captured {
                    Ok(v) => v,
                    Err(e) => {
                        if e.is_fatal() {
                            return Err(e.into());
                        }
                        store.failures.push(format!("layer {layer}: {} on {}: {e}", meta.css, state.url));
                        if let Err(e) = enter(browser, state, cfg.settle, cfg.input_settle) {
                            if e.is_fatal() {
                                return Err(e.into());
                            }
                        }
                        continue;
                    }
                };
                let mut diff = diff_ax(&pre_ax, &post_ax);
                diff.url_changed = pre_url != post_url;
                let url_changed = diff.url_changed;
                let (role, name, tail) = element_signature(&meta);
                let fresh = seen_outcomes.insert((role, name, tail, post_url.clone()));
                if fresh {
                    if let Ok(shot) = browser.capture_screenshot() {
                        store.pages.entry(post_url.clone()).or_insert_with(|| PageEntry {
                            first_layer: layer + 1,
                            hash: imaging::content_hash(&shot),
                        });
                    }
                    if layer < cfg.max_layers {
                        let successor = if url_changed {
                            Some(State { url: post_url.clone(), chain: Vec::new() })
                        } else if !diff.added.is_empty() && state.chain.len() < MAX_REPLAY_DEPTH {
                            let mut chain = state.chain.clone();
                            chain.push(meta.css.clone());
                            Some(State { url: state.url.clone(), chain })
                        } else {
                            None
                        };
                        if let Some(s) = successor {
                            if visited.insert(s.clone()) {
                                next.push(s);
                            }
                        }
                    }
                    let id = format!("r{:05}", store.records.len());
                    store.records.push(InteractionRecord {
                        id,
                        element: meta,
                        shots,
                        pre_ax,
                        post_ax,
                        diff,
                        layer,
                        pre_url,
                        post_url,
                        chain: state.chain.clone(),
                    });
                }
                if let Err(e) = restore(browser, state, url_changed, cfg) {
                    if e.is_fatal() {
                        return Err(e.into());
                    }
                    store.failures.push(format!("layer {layer}: cannot restore {}: {e}", state.url));
                    break;
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(store)
}
