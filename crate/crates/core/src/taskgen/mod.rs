//! Turns crawl records, popup assets, trajectories and external corpora into
//! task instances, and writes datasets to disk.

mod annotate;
mod external;
mod generators;
pub mod prompts;

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Rect;
use crate::imaging::{self, Image};
use crate::model::ModelError;
use crate::task::{TaskFamily, TaskInstance};

pub use annotate::{annotate, parse_annotation, Annotation, ACCEPT_THRESHOLD, MAX_ANNOTATION_ATTEMPTS};
pub use external::{convert_external, ExternalSchema};
pub use generators::*;
pub use prompts::PROMPT_PACK_VERSION;

#[derive(Debug, Error)]
pub enum TaskgenError {
    #[error("record skipped: {0}")]
    SkipRecord(String),
    #[error("annotation rejected (confidence {confidence:.2} after {attempts} attempts)")]
    AnnotationRejected { confidence: f64, attempts: u32 },
    #[error("only {found} distinct distractor pages, need at least 3")]
    InsufficientDistractors { found: usize },
    #[error("only {found} candidate elements, need at least 4")]
    InsufficientCandidates { found: usize },
    #[error("annotation is missing sections: {0:?}")]
    MissingSections(Vec<String>),
    #[error("record {index} does not match the {schema} schema: {reason}")]
    SchemaMismatch { schema: String, index: usize, reason: String },
    #[error("annotator unreachable: {0}")]
    AnnotatorUnreachable(ModelError),
    #[error(transparent)]
    Image(#[from] imaging::ImageError),
    #[error(transparent)]
    Popup(#[from] crate::popup::PopupError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// An instance plus the images it references, keyed by manifest path.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub instance: TaskInstance,
    pub images: Vec<(String, Image)>,
    /// Labeled candidate boxes drawn on the first image, if any.
    pub markers: Vec<(String, Rect)>,
}

impl Generated {
    fn new(instance: TaskInstance, images: Vec<(String, Image)>) -> Self {
        Self { instance, images, markers: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub family: TaskFamily,
    pub record: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub items: Vec<Generated>,
    pub skipped: Vec<Skip>,
}

impl Dataset {
    pub fn instances(&self) -> impl Iterator<Item = &TaskInstance> {
        self.items.iter().map(|g| &g.instance)
    }

    pub fn extend(&mut self, other: Dataset) {
        self.items.extend(other.items);
        self.skipped.extend(other.skipped);
    }
}

/// Stable per-item seed so one item's randomness does not depend on which
/// other items were generated.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn image_path(task_id: &str, name: &str) -> String {
    format!("images/{task_id}/{name}.png")
}

/// Writes `tasks.jsonl` and every referenced image under `out`. Output is a
/// pure function of the dataset.
pub fn write_dataset(out: &Path, dataset: &Dataset) -> Result<(), TaskgenError> {
    fs::create_dir_all(out)?;
    let mut seen = BTreeSet::new();
    let mut lines = String::new();
    for g in &dataset.items {
        lines.push_str(&g.instance.to_json_line());
        lines.push('\n');
        for (path, img) in &g.images {
            if seen.insert(path.clone()) {
                let p = out.join(path);
                if let Some(parent) = p.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&p, imaging::encode_png(img)?)?;
            }
        }
    }
    fs::write(out.join("tasks.jsonl"), lines)?;
    if !dataset.skipped.is_empty() {
        let mut s = String::new();
        for k in &dataset.skipped {
            s.push_str(&serde_json::to_string(k).expect("skip serializes"));
            s.push('\n');
        }
        fs::write(out.join("skipped.jsonl"), s)?;
    }
    Ok(())
}
