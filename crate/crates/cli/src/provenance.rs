use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    /// sha256 of the file, or of every file under a directory (sorted by
    /// relative path). `None` when the path does not exist.
    pub sha256: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub tool: &'static str,
    pub task_schema: &'static str,
    pub prompt_pack: &'static str,
    pub agent_prompt: &'static str,
    pub judge_rubric: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            tool: env!("CARGO_PKG_VERSION"),
            task_schema: cogweb::task::TASK_SCHEMA,
            prompt_pack: cogweb::taskgen::PROMPT_PACK_VERSION,
            agent_prompt: cogweb::agent::PROMPT_VERSION,
            judge_rubric: cogweb::model::JudgeRubric::default().version,
        }
    }
}

/// What a run consumed and how it was configured. Deliberately free of
/// timestamps so pure stages reproduce it exactly.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub versions: Versions,
}

impl Provenance {
    pub fn new(command: &str, argv: &[String], seed: Option<u64>, inputs: &[&Path]) -> io::Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| Ok(InputDigest { path: p.display().to_string(), sha256: digest_path(p)? }))
            .collect::<io::Result<_>>()?;
        Ok(Self { command: command.into(), argv: argv.to_vec(), seed, inputs, versions: Versions::default() })
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(dir.join("provenance.json"), text + "\n")
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).unwrap_or(&p).to_path_buf());
        }
    }
    Ok(())
}

pub fn digest_path(p: &Path) -> io::Result<Option<String>> {
    if !p.exists() {
        return Ok(None);
    }
    let mut h = Sha256::new();
    if p.is_dir() {
        let mut files = Vec::new();
        collect_files(p, p, &mut files)?;
        files.sort();
        for f in files {
            h.update(f.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(fs::read(p.join(&f))?);
        }
    } else {
        h.update(fs::read(p)?);
    }
    Ok(Some(hex::encode(h.finalize())))
}
