use std::collections::VecDeque;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::browser::{Browser, BrowserError, InputOutcome, InputPrimitive, InputTarget, DEFAULT_SETTLE};
use crate::model::{JudgeRubric, ModelClient, ModelError};
use crate::observation::{compose_observation, AXTree, Observation};

use super::action::{parse_action, Action, ScrollTarget, Unparseable};
use super::prompt::{build_prompt, Prompt, DEFAULT_IMAGE_WINDOW};
use super::thought::Thought;

pub const DEFAULT_MAX_STEPS: usize = 15;
/// Consecutive unparseable responses that end an episode.
pub const MAX_UNPARSEABLE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stopped,
    MaxSteps,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Observation,
    pub thought: Thought,
    pub action: Action,
    pub raw_output: String,
    /// Feedback about the action's execution, shown to the policy next turn.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub query: String,
    pub initial_url: String,
    pub steps: Vec<Step>,
    pub termination: Termination,
    pub reward: u8,
    /// Content of the final `stop` action.
    pub answer: Option<String>,
    /// Responses that did not contain a valid action, in order.
    pub rejected: Vec<String>,
    pub error: Option<String>,
}

impl Trajectory {
    /// The latest observation: that of the final step.
    pub fn final_observation(&self) -> Option<&Observation> {
        self.steps.last().map(|s| &s.observation)
    }

    /// Structural checks: at most one stop, and only as the last step;
    /// strictly increasing observation steps.
    pub fn is_well_formed(&self) -> bool {
        let stops: Vec<usize> =
            self.steps.iter().enumerate().filter(|(_, s)| matches!(s.action, Action::Stop(_))).map(|(i, _)| i).collect();
        let stop_ok = match stops.as_slice() {
            [] => true,
            [i] => *i + 1 == self.steps.len(),
            _ => false,
        };
        let steps_ok = self.steps.windows(2).all(|w| w[0].observation.step < w[1].observation.step);
        stop_ok && steps_ok && self.reward <= 1
    }
}

/// One agent task: a query, where it starts, and how success is checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTask {
    pub task_id: String,
    pub query: String,
    pub start_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<FixturePredicate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub window: usize,
    pub settle: Duration,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { max_steps: DEFAULT_MAX_STEPS, window: DEFAULT_IMAGE_WINDOW, settle: DEFAULT_SETTLE }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("policy script exhausted")]
    Exhausted,
}

/// Maps a prompt to raw model text.
pub trait Policy {
    fn act(&mut self, prompt: &Prompt) -> Result<String, PolicyError>;
}

/// Policy backed by a chat model endpoint.
#[derive(Debug, Clone)]
pub struct ModelPolicy {
    pub client: ModelClient,
}

impl Policy for ModelPolicy {
    fn act(&mut self, prompt: &Prompt) -> Result<String, PolicyError> {
        Ok(self.client.chat(prompt.to_messages())?)
    }
}

/// Replays fixed responses; after the script runs out, repeats `fallback`
/// or fails with `Exhausted`.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    script: VecDeque<String>,
    fallback: Option<String>,
    /// Every prompt received, in order.
    pub prompts: Vec<Prompt>,
}

impl ScriptedPolicy {
    pub fn new<S: Into<String>>(script: impl IntoIterator<Item = S>) -> Self {
        Self { script: script.into_iter().map(Into::into).collect(), ..Default::default() }
    }

    pub fn repeating(response: impl Into<String>) -> Self {
        Self { fallback: Some(response.into()), ..Default::default() }
    }

    pub fn then_repeat(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }
}

impl Policy for ScriptedPolicy {
    fn act(&mut self, prompt: &Prompt) -> Result<String, PolicyError> {
        self.prompts.push(prompt.clone());
        self.script.pop_front().or_else(|| self.fallback.clone()).ok_or(PolicyError::Exhausted)
    }
}

/// Splits a model response into thought and action. A response without any
/// section headings is accepted when its last line is an action; the action
/// line then stands in for the final summary.
pub fn parse_model_output(raw: &str) -> Result<(Thought, Action), Unparseable> {
    let (mut thought, found) = Thought::parse(raw);
    let summary = if found && !thought.final_summary().is_empty() { Some(thought.final_summary().to_string()) } else { None };
    let action = parse_action(raw, summary.as_deref())?;
    if thought.final_summary().is_empty() {
        thought.set_final_summary(action.format());
    }
    Ok((thought, action))
}

/// Result of executing one action.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    Next { observation: Observation, note: Option<String> },
    Terminal(String),
}

fn node_target(tree: &AXTree, id: u32) -> Result<InputTarget, String> {
    tree.backend_of(id).map(InputTarget::Node).ok_or_else(|| format!("element [{id}] does not exist on the current page"))
}

/// Lowers `action` to driver input using `tree`'s id→node map, executes it
/// and observes the result. Unresolvable or stale targets become a note
/// for the policy; only fatal driver errors are returned.
pub fn apply_action<B: Browser + ?Sized>(
    browser: &mut B,
    action: &Action,
    tree: &AXTree,
    initial_url: &str,
    settle: Duration,
    next_step: u32,
) -> Result<Applied, BrowserError> {
    let input = match action {
        Action::Stop(content) => return Ok(Applied::Terminal(content.clone())),
        Action::Click(id) => node_target(tree, *id).map(InputPrimitive::Click),
        Action::DbClick(id) => node_target(tree, *id).map(InputPrimitive::DbClick),
        Action::Type { id, content } => node_target(tree, *id).map(|t| InputPrimitive::TypeText { target: t, text: content.clone() }),
        Action::Scroll { target, direction } => match target {
            ScrollTarget::Window => Ok(InputPrimitive::Scroll { target: InputTarget::Window, direction: *direction }),
            ScrollTarget::Element(id) => node_target(tree, *id).map(|t| InputPrimitive::Scroll { target: t, direction: *direction }),
        },
        Action::GoBack => Ok(InputPrimitive::HistoryBack),
        Action::GoForward => Ok(InputPrimitive::HistoryForward),
        Action::Wait => Ok(InputPrimitive::Wait),
        Action::Restart => {
            let note = match browser.navigate(initial_url, settle) {
                Ok(_) => None,
                Err(BrowserError::NavigationTimeout { .. }) => Some("page did not finish loading".to_string()),
                Err(e) if e.is_fatal() => return Err(e),
                Err(e) => Some(e.to_string()),
            };
            browser.reset_history()?;
            let observation = compose_observation(browser, next_step)?;
            return Ok(Applied::Next { observation, note });
        }
    };
    let note = match input {
        Err(msg) => Some(msg),
        Ok(p) => match browser.execute_input(&p) {
            Ok(InputOutcome::NoHistoryEntry) => Some("no history entry to move to".to_string()),
            Ok(_) => None,
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => Some(e.to_string()),
        },
    };
    let observation = compose_observation(browser, next_step)?;
    Ok(Applied::Next { observation, note })
}

const CORRECTION: &str = "Your previous response did not end with a valid action. Finish with the required \
sections and put exactly one action from the list on the last line.";

fn error_trajectory(task: &AgentTask, steps: Vec<Step>, rejected: Vec<String>, err: String) -> Trajectory {
    Trajectory {
        query: task.query.clone(),
        initial_url: task.start_url.clone(),
        steps,
        termination: Termination::Error,
        reward: 0,
        answer: None,
        rejected,
        error: Some(err),
    }
}

/// Observe, prompt, parse, act until `stop`, the step limit, three
/// consecutive unparseable responses, or a fatal driver error. The reward is
/// left at 0; see [`evaluate_reward`].
pub fn run_episode<B: Browser + ?Sized, P: Policy + ?Sized>(
    task: &AgentTask,
    policy: &mut P,
    browser: &mut B,
    config: &EpisodeConfig,
) -> Trajectory {
    let max_steps = config.max_steps.max(1);
    let mut steps: Vec<Step> = Vec::new();
    let mut rejected: Vec<String> = Vec::new();
    match browser.navigate(&task.start_url, config.settle) {
        Ok(_) | Err(BrowserError::NavigationTimeout { .. }) => {}
        Err(e) => return error_trajectory(task, steps, rejected, e.to_string()),
    }
    if let Err(e) = browser.reset_history() {
        return error_trajectory(task, steps, rejected, e.to_string());
    }
    let mut obs = match compose_observation(browser, 1) {
        Ok(o) => o,
        Err(e) => return error_trajectory(task, steps, rejected, e.to_string()),
    };
    let mut bad_in_a_row = 0;
    while steps.len() < max_steps {
        let mut prompt = build_prompt(&task.query, &obs, &steps, config.window);
        if bad_in_a_row > 0 {
            prompt.correction = Some(CORRECTION.to_string());
        }
        let raw = match policy.act(&prompt) {
            Ok(r) => r,
            Err(e) => return error_trajectory(task, steps, rejected, e.to_string()),
        };
        let (thought, action) = match parse_model_output(&raw) {
            Ok(v) => v,
            Err(e) => {
                tracing::warn!(step = obs.step, error = %e, "unparseable policy output");
                rejected.push(raw);
                bad_in_a_row += 1;
                if bad_in_a_row >= MAX_UNPARSEABLE {
                    return error_trajectory(task, steps, rejected, format!("{MAX_UNPARSEABLE} consecutive unparseable outputs"));
                }
                continue;
            }
        };
        bad_in_a_row = 0;
        let next_step = obs.step + 1;
        match apply_action(browser, &action, &obs.ax, &task.start_url, config.settle, next_step) {
            Ok(Applied::Terminal(answer)) => {
                steps.push(Step { observation: obs, thought, action, raw_output: raw, note: None });
                return Trajectory {
                    query: task.query.clone(),
                    initial_url: task.start_url.clone(),
                    steps,
                    termination: Termination::Stopped,
                    reward: 0,
                    answer: Some(answer),
                    rejected,
                    error: None,
                };
            }
            Ok(Applied::Next { observation, note }) => {
                let current = std::mem::replace(&mut obs, observation);
                steps.push(Step { observation: current, thought, action, raw_output: raw, note });
            }
            Err(e) => {
                steps.push(Step { observation: obs, thought, action, raw_output: raw, note: Some(e.to_string()) });
                return error_trajectory(task, steps, rejected, e.to_string());
            }
        }
    }
    Trajectory {
        query: task.query.clone(),
        initial_url: task.start_url.clone(),
        steps,
        termination: Termination::MaxSteps,
        reward: 0,
        answer: None,
        rejected,
        error: None,
    }
}

/// Programmatic success check over the final page state and answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FixturePredicate {
    UrlEquals { url: String },
    AxContains { role: String, name: String },
    AnswerContains { text: String },
    All { of: Vec<FixturePredicate> },
}

impl FixturePredicate {
    pub fn holds(&self, traj: &Trajectory) -> bool {
        let obs = traj.final_observation();
        match self {
            FixturePredicate::UrlEquals { url } => obs.is_some_and(|o| &o.url == url),
            FixturePredicate::AxContains { role, name } => {
                obs.is_some_and(|o| o.ax.nodes().iter().any(|n| &n.role == role && &n.name == name))
            }
            FixturePredicate::AnswerContains { text } => traj
                .answer
                .as_deref()
                .is_some_and(|a| a.to_lowercase().contains(&text.to_lowercase())),
            FixturePredicate::All { of } => of.iter().all(|p| p.holds(traj)),
        }
    }
}

#[derive(Debug, Clone)]
pub enum RewardCheck {
    Fixture(FixturePredicate),
    Judge { client: ModelClient, rubric: JudgeRubric },
}

/// Binary reward. Checker-based tasks require a `stop`; judge-based tasks
/// send the last screenshots and the answer for a verdict.
pub fn evaluate_reward(traj: &Trajectory, check: &RewardCheck) -> Result<u8, ModelError> {
    match check {
        RewardCheck::Fixture(p) => Ok(u8::from(traj.termination == Termination::Stopped && p.holds(traj))),
        RewardCheck::Judge { client, rubric } => {
            let images: Vec<_> = traj.steps.iter().rev().take(DEFAULT_IMAGE_WINDOW).rev().map(|s| s.observation.screenshot.clone()).collect();
            let answer = traj.answer.clone().unwrap_or_default();
            Ok(u8::from(client.verdict(&traj.query, &answer, &images, rubric)?))
        }
    }
}
