use std::fs;
use std::path::Path;

use image::Rgba;
use serde::{Deserialize, Serialize};

use super::composite::Placement;
use super::PopupError;
use crate::agent::Action;
use crate::geometry::Rect;
use crate::imaging::{self, Image};
use crate::observation::{parse_ax_text, serialize_ax, AXTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseVerb {
    Click,
    Dbclick,
}

/// One way to dismiss a popup: an action on a node of the popup fragment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloseMethod {
    /// Node id within the popup's own tree.
    pub element: u32,
    pub action: CloseVerb,
}

impl CloseMethod {
    pub fn click(element: u32) -> Self {
        Self { element, action: CloseVerb::Click }
    }

    /// The action against the node's id in a merged tree.
    pub fn to_action(&self, merged_id: u32) -> Action {
        match self.action {
            CloseVerb::Click => Action::Click(merged_id),
            CloseVerb::Dbclick => Action::DbClick(merged_id),
        }
    }
}

/// Popup image with alpha, its accessibility fragment (root at depth 0) and
/// the ways to close it. Node boxes in the fragment are in image pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PopupAsset {
    pub name: String,
    pub image: Image,
    pub ax: AXTree,
    pub close_methods: Vec<CloseMethod>,
}

#[derive(Serialize, Deserialize)]
struct CloseFile {
    methods: Vec<CloseMethod>,
    /// Optional node boxes in image pixels, by fragment id.
    #[serde(default)]
    boxes: Vec<(u32, Rect)>,
}

impl PopupAsset {
    pub fn validate(&self) -> Result<(), PopupError> {
        if self.close_methods.is_empty() {
            return Err(PopupError::NoMethods);
        }
        if let Some(m) = self.close_methods.iter().find(|m| m.element as usize >= self.ax.len()) {
            return Err(PopupError::InvalidAsset(format!("close method targets missing node {}", m.element)));
        }
        if self.image.width() == 0 || self.image.height() == 0 {
            return Err(PopupError::InvalidAsset("empty image".into()));
        }
        Ok(())
    }

    /// Reads `popup.png`, `ax.txt` and `close.json` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, PopupError> {
        let bad = |e: &dyn std::fmt::Display| PopupError::InvalidAsset(format!("{}: {e}", dir.display()));
        let image = imaging::load_png(&dir.join("popup.png")).map_err(|e| bad(&e))?;
        let mut ax = parse_ax_text(&fs::read_to_string(dir.join("ax.txt"))?)?;
        let close: CloseFile = serde_json::from_str(&fs::read_to_string(dir.join("close.json"))?).map_err(|e| bad(&e))?;
        for (id, rect) in close.boxes {
            ax.set_bbox(id, Some(rect));
        }
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let asset = Self { name, image, ax, close_methods: close.methods };
        asset.validate()?;
        Ok(asset)
    }

    pub fn save(&self, dir: &Path) -> Result<(), PopupError> {
        fs::create_dir_all(dir)?;
        imaging::save_png(&self.image, &dir.join("popup.png")).map_err(|e| PopupError::InvalidAsset(e.to_string()))?;
        fs::write(dir.join("ax.txt"), serialize_ax(&self.ax))?;
        let boxes = self.ax.nodes().iter().filter_map(|n| n.bbox.map(|b| (n.id, b))).collect();
        let close = CloseFile { methods: self.close_methods.clone(), boxes };
        let json = serde_json::to_string_pretty(&close).map_err(|e| PopupError::InvalidAsset(e.to_string()))?;
        fs::write(dir.join("close.json"), json + "\n")?;
        Ok(())
    }

    /// Loads every asset directory under `root`, sorted by name.
    pub fn load_all(root: &Path) -> Result<Vec<Self>, PopupError> {
        let mut dirs: Vec<_> = fs::read_dir(root)?.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
        dirs.sort();
        dirs.iter().map(|d| Self::load(d)).collect()
    }

    /// The fragment with node boxes moved into background coordinates.
    pub fn placed_fragment(&self, placement: &Placement) -> Result<AXTree, PopupError> {
        let sx = placement.width as f64 / self.image.width() as f64;
        let sy = placement.height as f64 / self.image.height() as f64;
        let mut nodes = self.ax.nodes().to_vec();
        for n in &mut nodes {
            n.bbox = n.bbox.map(|b| {
                Rect::from_f64(
                    placement.x as f64 + b.x as f64 * sx,
                    placement.y as f64 + b.y as f64 * sy,
                    b.width as f64 * sx,
                    b.height as f64 * sy,
                )
            });
        }
        Ok(AXTree::from_nodes(nodes)?)
    }

    /// Built-in assets used when no asset directory is supplied.
    pub fn builtin() -> Vec<PopupAsset> {
        vec![newsletter(), cookie_banner()]
    }
}

const WHITE: Rgba<u8> = Rgba([255, 255, 255, 255]);
const CLEAR: Rgba<u8> = Rgba([0, 0, 0, 0]);

/// Box with a transparent margin so corner pixels exercise alpha blending.
fn canvas(w: u32, h: u32, header: Rgba<u8>) -> Image {
    let mut img = imaging::solid(w, h, CLEAR);
    imaging::fill_rect(&mut img, Rect::new(4, 4, w - 8, h - 8), WHITE);
    imaging::fill_rect(&mut img, Rect::new(4, 4, w - 8, 48), header);
    img
}

fn with_boxes(text: &str, boxes: &[(u32, Rect)]) -> AXTree {
    let mut ax = parse_ax_text(text).expect("built-in popup tree");
    for (id, r) in boxes {
        ax.set_bbox(*id, Some(*r));
    }
    ax
}

fn newsletter() -> PopupAsset {
    let mut image = canvas(480, 320, Rgba([40, 70, 140, 255]));
    let close = Rect::new(436, 12, 32, 32);
    let decline = Rect::new(150, 250, 180, 40);
    let subscribe = Rect::new(150, 196, 180, 44);
    imaging::fill_rect(&mut image, close, Rgba([220, 60, 60, 255]));
    imaging::fill_rect(&mut image, subscribe, Rgba([40, 150, 80, 255]));
    imaging::fill_rect(&mut image, decline, Rgba([200, 200, 200, 255]));
    let ax = with_boxes(
        "[0] dialog 'Subscribe to our newsletter'\n  [1] button 'Close'\n  [2] StaticText 'Get 10% off your first order'\n  [3] textbox 'Email address'\n  [4] button 'Subscribe'\n  [5] button 'No thanks'\n",
        &[(0, Rect::new(4, 4, 472, 312)), (1, close), (3, Rect::new(60, 130, 360, 44)), (4, subscribe), (5, decline)],
    );
    PopupAsset {
        name: "newsletter".into(),
        image,
        ax,
        close_methods: vec![CloseMethod::click(1), CloseMethod::click(5)],
    }
}

fn cookie_banner() -> PopupAsset {
    let mut image = canvas(640, 200, Rgba([60, 60, 60, 255]));
    let accept = Rect::new(340, 130, 130, 40);
    let reject = Rect::new(486, 130, 130, 40);
    let close = Rect::new(596, 12, 32, 32);
    imaging::fill_rect(&mut image, accept, Rgba([40, 120, 200, 255]));
    imaging::fill_rect(&mut image, reject, Rgba([180, 180, 180, 255]));
    imaging::fill_rect(&mut image, close, Rgba([220, 60, 60, 255]));
    let ax = with_boxes(
        "[0] dialog 'Cookie preferences'\n  [1] StaticText 'We use cookies to improve your experience'\n  [2] button 'Accept all'\n  [3] button 'Reject all'\n  [4] button 'Close'\n",
        &[(0, Rect::new(4, 4, 632, 192)), (2, accept), (3, reject), (4, close)],
    );
    PopupAsset {
        name: "cookie_banner".into(),
        image,
        ax,
        close_methods: vec![CloseMethod::click(2), CloseMethod::click(3), CloseMethod::click(4)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for a in PopupAsset::builtin() {
            a.validate().unwrap();
            let d = dir.path().join(&a.name);
            a.save(&d).unwrap();
            let back = PopupAsset::load(&d).unwrap();
            assert_eq!(back, a);
        }
        assert_eq!(PopupAsset::load_all(dir.path()).unwrap().len(), 2);
    }

    #[test]
    fn method_must_reference_fragment() {
        let mut a = PopupAsset::builtin().remove(0);
        a.close_methods.push(CloseMethod::click(99));
        assert!(matches!(a.validate(), Err(PopupError::InvalidAsset(_))));
    }
}
