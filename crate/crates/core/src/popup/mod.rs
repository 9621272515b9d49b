//! Popup augmentation: composite popup images onto page screenshots, splice
//! the popup's accessibility subtree into the page tree, enumerate closing
//! strategies, and inject popups into recorded trajectories.

mod asset;
mod composite;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Action, Step, Thought, Trajectory};
use crate::observation::{AXError, AXNode, AXTree, Observation};

pub use asset::{CloseMethod, CloseVerb, PopupAsset};
pub use composite::{adjust_brightness, adjust_sharpness, composite_popup, composite_popup_at, JitterRanges, Placement};

pub const MAX_CLOSE_METHODS: usize = 10;

#[derive(Debug, Error)]
pub enum PopupError {
    #[error("popup does not fit the background even at the minimum scale")]
    AssetTooLarge,
    #[error("placement {0:?} is not inside the background")]
    OutOfBounds(Placement),
    #[error("{0} closing methods exceed the limit of {MAX_CLOSE_METHODS}")]
    TooManyMethods(usize),
    #[error("a popup needs at least one closing method")]
    NoMethods,
    #[error("step {t} is outside 1..={len}")]
    StepOutOfRange { t: usize, len: usize },
    #[error("invalid popup asset: {0}")]
    InvalidAsset(String),
    #[error(transparent)]
    Tree(#[from] AXError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// All nonempty subsets in ascending bitmask order; members keep input order.
pub fn enumerate_close_subsets<T: Clone>(methods: &[T]) -> Result<Vec<Vec<T>>, PopupError> {
    let n = methods.len();
    if n == 0 {
        return Err(PopupError::NoMethods);
    }
    if n > MAX_CLOSE_METHODS {
        return Err(PopupError::TooManyMethods(n));
    }
    Ok((1u32..(1 << n))
        .map(|mask| methods.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, m)| m.clone()).collect())
        .collect())
}

/// A page tree with a popup fragment spliced in.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub tree: AXTree,
    /// New id of each page node, indexed by old id.
    pub page_ids: Vec<u32>,
    /// New id of each popup node, indexed by fragment id.
    pub popup_ids: Vec<u32>,
    /// Position in the page's node list where the fragment was inserted.
    pub position: usize,
}

/// Inserts `popup` as a child subtree of the page root at a uniformly chosen
/// top-level slot, then renumbers every node in document order. Popup nodes
/// get fresh negative node handles distinct from the page's.
pub fn inject_popup_ax(page: &AXTree, popup: &AXTree, rng: &mut impl Rng) -> Result<Injection, PopupError> {
    let identity = |n: usize| (0..n as u32).collect::<Vec<_>>();
    if popup.is_empty() {
        return Ok(Injection { tree: page.clone(), page_ids: identity(page.len()), popup_ids: vec![], position: page.len() });
    }
    if page.is_empty() {
        let tree = AXTree::from_nodes(popup.nodes().to_vec())?;
        return Ok(Injection { tree, page_ids: vec![], popup_ids: identity(popup.len()), position: 0 });
    }
    let slots = page.top_level_slots();
    let position = *slots.choose(rng).expect("slot list always holds the end position");
    let min_backend = page.nodes().iter().map(|n| n.backend_id).min().unwrap_or(0).min(0);
    let popup_nodes: Vec<AXNode> = popup
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut n = n.clone();
            n.depth += 1;
            n.backend_id = min_backend - 1 - i as i64;
            n
        })
        .collect();
    let mut nodes = Vec::with_capacity(page.len() + popup.len());
    nodes.extend_from_slice(&page.nodes()[..position]);
    nodes.extend(popup_nodes);
    nodes.extend_from_slice(&page.nodes()[position..]);
    let tree = AXTree::from_nodes(nodes)?;
    let k = popup.len() as u32;
    let page_ids = (0..page.len() as u32).map(|i| if (i as usize) < position { i } else { i + k }).collect();
    let popup_ids = (0..k).map(|i| position as u32 + i).collect();
    Ok(Injection { tree, page_ids, popup_ids, position })
}

/// Text of the synthetic reasoning recorded for an inserted dismiss step.
fn dismiss_thought(asset: &PopupAsset, action: &Action) -> (Thought, String) {
    let title = asset.ax.nodes().first().map(|n| n.name.as_str()).unwrap_or("");
    let mut thought = Thought::empty();
    let mut set = |i: usize, s: String| thought.sections[i].body = s;
    set(0, format!("A popup window '{title}' covers part of the page."));
    set(1, "The popup blocks the elements needed for the task and offers a way to close it.".into());
    set(4, "The popup must be dismissed before continuing with the task.".into());
    set(5, format!("Close the popup.\n{}", action.format()));
    let raw = thought
        .sections
        .iter()
        .filter(|s| !s.body.is_empty())
        .map(|s| format!("## {}\n{}", s.title, s.body))
        .collect::<Vec<_>>()
        .join("\n");
    thought.raw = raw.clone();
    (thought, raw)
}

/// Composites `asset` over the screenshot of step `t` (1-based) and inserts
/// a dismiss step there; the original step `t` and everything after it move
/// one position later with their step numbers shifted by one.
pub fn build_noisy_trajectory(
    traj: &Trajectory,
    asset: &PopupAsset,
    t: usize,
    seed: u64,
    ranges: &JitterRanges,
) -> Result<Trajectory, PopupError> {
    let len = traj.steps.len();
    if t == 0 || t > len {
        return Err(PopupError::StepOutOfRange { t, len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let original = &traj.steps[t - 1];
    let (image, placement) = composite_popup(&original.observation.screenshot, asset, rng.gen(), ranges)?;
    let fragment = asset.placed_fragment(&placement)?;
    let injection = inject_popup_ax(&original.observation.ax, &fragment, &mut rng)?;
    let method = asset.close_methods.choose(&mut rng).ok_or(PopupError::NoMethods)?;
    let action = method.to_action(injection.popup_ids[method.element as usize]);
    let (thought, raw) = dismiss_thought(asset, &action);
    let observation = Observation::new(image, injection.tree, original.observation.url.clone(), original.observation.step);
    let mut steps = Vec::with_capacity(len + 1);
    steps.extend(traj.steps[..t - 1].iter().cloned());
    steps.push(Step { observation, thought, action, raw_output: raw, note: None });
    for s in &traj.steps[t - 1..] {
        let mut s = s.clone();
        s.observation.step += 1;
        steps.push(s);
    }
    Ok(Trajectory { steps, ..traj.clone() })
}

/// One popup-close benchmark item before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct PopupScene {
    pub image: crate::imaging::Image,
    pub placement: Placement,
    pub injection: Injection,
    /// Canonical close actions against the merged tree.
    pub methods: Vec<String>,
    pub strategies: Vec<Vec<String>>,
}

/// Composite + inject + enumerate for one background page.
pub fn synthesize_scene(
    screenshot: &crate::imaging::Image,
    page: &AXTree,
    asset: &PopupAsset,
    seed: u64,
    ranges: &JitterRanges,
) -> Result<PopupScene, PopupError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (image, placement) = composite_popup(screenshot, asset, rng.gen(), ranges)?;
    let fragment = asset.placed_fragment(&placement)?;
    let injection = inject_popup_ax(page, &fragment, &mut rng)?;
    let methods: Vec<String> =
        asset.close_methods.iter().map(|m| m.to_action(injection.popup_ids[m.element as usize]).format()).collect();
    let strategies = enumerate_close_subsets(&methods)?;
    Ok(PopupScene { image, placement, injection, methods, strategies })
}

/// Serializable record of a placement and the closing gold, written next to
/// composited images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub asset: String,
    pub placement: Placement,
    pub methods: Vec<String>,
}
