//! On-disk trajectory layout: `trajectory.json` plus one PNG per step.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::imaging;
use crate::observation::{parse_ax_text, Observation};

use super::action::Action;
use super::episode::{Step, Termination, Trajectory};
use super::thought::Thought;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub url: String,
    pub screenshot: String,
    pub ax_text: String,
    pub thought: Thought,
    pub action: String,
    pub raw_output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub query: String,
    pub initial_url: String,
    pub termination: Termination,
    pub reward: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub steps: Vec<StepRecord>,
}

pub fn step_image_name(step: u32) -> String {
    format!("step_{step:03}.png")
}

fn invalid(e: impl ToString) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e.to_string())
}

pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> io::Result<TrajectoryRecord> {
    fs::create_dir_all(dir)?;
    let mut steps = Vec::with_capacity(traj.steps.len());
    for s in &traj.steps {
        let name = step_image_name(s.observation.step);
        imaging::save_png(&s.observation.screenshot, &dir.join(&name)).map_err(invalid)?;
        steps.push(StepRecord {
            step: s.observation.step,
            url: s.observation.url.clone(),
            screenshot: name,
            ax_text: s.observation.ax_text.clone(),
            thought: s.thought.clone(),
            action: s.action.format(),
            raw_output: s.raw_output.clone(),
            note: s.note.clone(),
        });
    }
    let record = TrajectoryRecord {
        query: traj.query.clone(),
        initial_url: traj.initial_url.clone(),
        termination: traj.termination,
        reward: traj.reward,
        answer: traj.answer.clone(),
        rejected: traj.rejected.clone(),
        error: traj.error.clone(),
        steps,
    };
    let json = serde_json::to_string_pretty(&record).map_err(invalid)?;
    fs::write(dir.join("trajectory.json"), json + "\n")?;
    Ok(record)
}

/// Loads a stored trajectory. Node boxes and browser node handles are not
/// stored, so observations carry synthetic handles.
pub fn read_trajectory(dir: &Path) -> io::Result<Trajectory> {
    let text = fs::read_to_string(dir.join("trajectory.json"))?;
    let record: TrajectoryRecord = serde_json::from_str(&text).map_err(invalid)?;
    let mut steps = Vec::with_capacity(record.steps.len());
    for s in record.steps {
        let screenshot = imaging::load_png(&dir.join(&s.screenshot)).map_err(invalid)?;
        let ax = parse_ax_text(&s.ax_text).map_err(invalid)?;
        let action = Action::parse(&s.action).map_err(invalid)?;
        steps.push(Step {
            observation: Observation::new(screenshot, ax, s.url, s.step),
            thought: s.thought,
            action,
            raw_output: s.raw_output,
            note: s.note,
        });
    }
    Ok(Trajectory {
        query: record.query,
        initial_url: record.initial_url,
        steps,
        termination: record.termination,
        reward: record.reward,
        answer: record.answer,
        rejected: record.rejected,
        error: record.error,
    })
}
