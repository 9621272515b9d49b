//! Disk layout: `<root>/<site>/<layer>/<record-id>/` with the five PNGs,
//! `meta.json`, `pre_ax.txt`, `post_ax.txt` and `diff.json`, plus
//! `<root>/<site>/pages.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AXDiff, CrawlError, CrawlStore, InteractionRecord, Shots};
use crate::imaging;
use crate::observation::{parse_ax_text, serialize_ax, ElementMeta};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageEntry {
    pub first_layer: u32,
    /// Content hash of the page's first screenshot.
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub id: String,
    pub element: ElementMeta,
    pub layer: u32,
    pub pre_url: String,
    pub post_url: String,
    #[serde(default)]
    pub chain: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PagesFile {
    site: String,
    pages: BTreeMap<String, PageEntry>,
    #[serde(default)]
    failures: Vec<String>,
}

/// Directory-safe site label from a URL's host (and port).
pub fn site_name(url: &str) -> String {
    let host = url::Url::parse(url)
        .ok()
        .and_then(|u| u.host_str().map(|h| match u.port() {
            Some(p) => format!("{h}_{p}"),
            None => h.to_string(),
        }))
        .unwrap_or_else(|| "site".into());
    host.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn err(e: impl std::fmt::Display) -> CrawlError {
    CrawlError::Store(e.to_string())
}

fn record_dir(site_dir: &Path, r: &InteractionRecord) -> PathBuf {
    site_dir.join(r.layer.to_string()).join(&r.id)
}

/// Writes the store under `root/<site>/` and returns that directory.
pub fn write_store(root: &Path, store: &CrawlStore) -> Result<PathBuf, CrawlError> {
    let site_dir = root.join(&store.site);
    fs::create_dir_all(&site_dir).map_err(err)?;
    for r in &store.records {
        let dir = record_dir(&site_dir, r);
        fs::create_dir_all(&dir).map_err(err)?;
        for (name, img) in Shots::NAMES.iter().zip(r.shots.images()) {
            imaging::save_png(img, &dir.join(format!("{name}.png"))).map_err(err)?;
        }
        let meta = RecordMeta {
            id: r.id.clone(),
            element: r.element.clone(),
            layer: r.layer,
            pre_url: r.pre_url.clone(),
            post_url: r.post_url.clone(),
            chain: r.chain.clone(),
        };
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta).map_err(err)? + "\n").map_err(err)?;
        fs::write(dir.join("pre_ax.txt"), serialize_ax(&r.pre_ax)).map_err(err)?;
        fs::write(dir.join("post_ax.txt"), serialize_ax(&r.post_ax)).map_err(err)?;
        fs::write(dir.join("diff.json"), serde_json::to_string_pretty(&r.diff).map_err(err)? + "\n").map_err(err)?;
    }
    let pages = PagesFile { site: store.site.clone(), pages: store.pages.clone(), failures: store.failures.clone() };
    fs::write(site_dir.join("pages.json"), serde_json::to_string_pretty(&pages).map_err(err)? + "\n").map_err(err)?;
    Ok(site_dir)
}

/// Reads a store written by [`write_store`]. Records come back sorted by id.
pub fn read_store(site_dir: &Path) -> Result<CrawlStore, CrawlError> {
    let pages: PagesFile =
        serde_json::from_str(&fs::read_to_string(site_dir.join("pages.json")).map_err(err)?).map_err(err)?;
    let mut dirs: Vec<PathBuf> = Vec::new();
    for layer in fs::read_dir(site_dir).map_err(err)? {
        let layer = layer.map_err(err)?.path();
        if !layer.is_dir() {
            continue;
        }
        for rec in fs::read_dir(&layer).map_err(err)? {
            let rec = rec.map_err(err)?.path();
            if rec.join("meta.json").is_file() {
                dirs.push(rec);
            }
        }
    }
    let mut records = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let meta: RecordMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json")).map_err(err)?).map_err(err)?;
        let load = |n: &str| imaging::load_png(&dir.join(format!("{n}.png"))).map_err(err);
        let shots =
            Shots { standalone: load("standalone")?, base: load("base")?, base_rect: load("base_rect")?, hover: load("hover")?, click: load("click")? };
        let pre_ax = parse_ax_text(&fs::read_to_string(dir.join("pre_ax.txt")).map_err(err)?).map_err(err)?;
        let post_ax = parse_ax_text(&fs::read_to_string(dir.join("post_ax.txt")).map_err(err)?).map_err(err)?;
        let diff: AXDiff = serde_json::from_str(&fs::read_to_string(dir.join("diff.json")).map_err(err)?).map_err(err)?;
        records.push(InteractionRecord {
            id: meta.id,
            element: meta.element,
            shots,
            pre_ax,
            post_ax,
            diff,
            layer: meta.layer,
            pre_url: meta.pre_url,
            post_url: meta.post_url,
            chain: meta.chain,
        });
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(CrawlStore { site: pages.site, records, pages: pages.pages, failures: pages.failures })
}
