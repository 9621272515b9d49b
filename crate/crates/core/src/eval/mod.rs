//! Benchmark scoring: per-instance metrics, aggregation to cognition-level
//! and overall figures, and manifest validation.

mod manifest;
mod rouge;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Action, Trajectory};
use crate::imaging::{self, Image};
use crate::model::{JudgeRubric, ModelClient, ModelError};
use crate::task::{Cognition, Gold, Metric, TaskFamily, TaskInstance};

pub use manifest::{validate_manifest, ManifestFlag, ManifestReport, SchemaError, BENCH_COUNTS};
pub use rouge::{lcs_len, rouge_l, rouge_l_f1, rouge_l_tokens, tokenize, RougeL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no scores to aggregate")]
    EmptyInput,
    #[error("instance {0} needs a judge but none is configured")]
    JudgeRequired(String),
    #[error(transparent)]
    Judge(#[from] ModelError),
    #[error("could not load judge context image {path}: {message}")]
    Image { path: String, message: String },
}

/// Trim, case-fold and collapse internal whitespace.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

pub fn exact_match(pred: &str, gold: &str) -> bool {
    normalize_answer(pred) == normalize_answer(gold)
}

/// Percentage mapping for 1–5 judge scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeScale {
    /// score × 20, so 5 → 100 and 1 → 20.
    #[default]
    Times20,
    /// (score − 1) / 4 × 100, so 1 → 0.
    Linear,
}

impl JudgeScale {
    pub fn percent(self, score: u8) -> f64 {
        match self {
            JudgeScale::Times20 => f64::from(score) * 20.0,
            JudgeScale::Linear => f64::from(score.saturating_sub(1)) * 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreDetail {
    Rouge(RougeL),
    Match { correct: bool },
    Judge { score: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub task_id: String,
    pub family: TaskFamily,
    pub metric: Metric,
    pub value: f64,
    pub detail: ScoreDetail,
}

impl Score {
    /// A score carrying only a value, for aggregating externally computed means.
    pub fn from_value(family: TaskFamily, value: f64) -> Self {
        let metric = family.bench_binding().map(|(_, m)| m).unwrap_or(family.allowed_metrics()[0]);
        Self { task_id: String::new(), family, metric, value, detail: ScoreDetail::Match { correct: value > 0.0 } }
    }
}

/// One model output for one benchmark item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub task_id: String,
    pub prediction: String,
}

/// Text form of a gold answer used as the ROUGE-L reference and judge reference.
pub fn gold_text(gold: &Gold) -> String {
    match gold {
        Gold::Text { value } | Gold::Action { value } => value.clone(),
        Gold::Choice { label } => label.clone(),
        Gold::Element { id } => id.to_string(),
        Gold::Strategies { methods, .. } => methods.join("\n"),
        Gold::ActionSequence { actions } => actions.join("\n"),
    }
}

fn canonical_action(s: &str) -> Option<String> {
    Action::parse(s).ok().map(|a| a.format())
}

fn action_lines(pred: &str) -> Option<Vec<String>> {
    let lines: Vec<&str> = pred.lines().flat_map(|l| l.split(';')).map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.is_empty() {
        return None;
    }
    lines.into_iter().map(canonical_action).collect()
}

/// Binary correctness for accuracy and success-rate items.
pub fn is_correct(gold: &Gold, pred: &str) -> bool {
    match gold {
        Gold::Choice { label } => exact_match(pred, label),
        Gold::Text { value } => exact_match(pred, value),
        Gold::Element { id } => {
            let p = pred.trim().trim_start_matches('[').trim_end_matches(']').trim();
            p.parse::<u32>().map(|n| n == *id).unwrap_or(false)
        }
        Gold::Action { value } => match (canonical_action(pred), canonical_action(value)) {
            (Some(p), Some(g)) => p == g,
            _ => exact_match(pred, value),
        },
        Gold::Strategies { sets, .. } => {
            let Some(mut predicted) = action_lines(pred) else { return false };
            predicted.sort();
            predicted.dedup();
            sets.iter().any(|set| {
                let mut canon: Vec<String> = set.iter().map(|s| canonical_action(s).unwrap_or_else(|| s.clone())).collect();
                canon.sort();
                canon.dedup();
                canon == predicted
            })
        }
        Gold::ActionSequence { actions } => {
            let gold: Vec<String> = actions.iter().map(|s| canonical_action(s).unwrap_or_else(|| s.clone())).collect();
            action_lines(pred).is_some_and(|p| p == gold)
        }
    }
}

/// Scores predictions. The judge, when present, receives the instance's
/// images resolved against `images_root`.
#[derive(Debug, Clone, Default)]
pub struct Scorer {
    pub judge: Option<ModelClient>,
    pub rubric: JudgeRubric,
    pub scale: JudgeScale,
    pub images_root: Option<PathBuf>,
}

impl Scorer {
    pub fn without_judge() -> Self {
        Self::default()
    }

    pub fn with_judge(judge: ModelClient) -> Self {
        Self { judge: Some(judge), ..Self::default() }
    }

    fn context_images(&self, inst: &TaskInstance) -> Result<Vec<Image>, EvalError> {
        let Some(root) = &self.images_root else { return Ok(Vec::new()) };
        inst.inputs
            .images
            .iter()
            .map(|p| {
                imaging::load_png(&root.join(p)).map_err(|e| EvalError::Image { path: p.clone(), message: e.to_string() })
            })
            .collect()
    }

    pub fn score(&self, inst: &TaskInstance, pred: &str) -> Result<Score, EvalError> {
        let (value, detail) = match inst.metric {
            Metric::RougeL => {
                let r = rouge_l(pred, &gold_text(&inst.gold));
                (r.f1 * 100.0, ScoreDetail::Rouge(r))
            }
            Metric::Accuracy | Metric::SuccessRate => {
                let correct = is_correct(&inst.gold, pred);
                (if correct { 100.0 } else { 0.0 }, ScoreDetail::Match { correct })
            }
            Metric::LvmJudge => {
                let judge = self.judge.as_ref().ok_or_else(|| EvalError::JudgeRequired(inst.task_id.clone()))?;
                let images = self.context_images(inst)?;
                let score = judge.judge(pred, &gold_text(&inst.gold), &images, &self.rubric)?;
                (self.scale.percent(score), ScoreDetail::Judge { score })
            }
        };
        Ok(Score { task_id: inst.task_id.clone(), family: inst.family, metric: inst.metric, value, detail })
    }
}

/// Scores one instance with the default judge mapping.
pub fn score_instance(inst: &TaskInstance, pred: &str, judge: Option<&ModelClient>) -> Result<Score, EvalError> {
    Scorer { judge: judge.cloned(), ..Scorer::default() }.score(inst, pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub per_task: BTreeMap<TaskFamily, f64>,
    pub per_cognition: BTreeMap<Cognition, f64>,
    /// Mean over the benchmark family means present; `None` if none are.
    pub overall: Option<f64>,
    pub counts: BTreeMap<TaskFamily, usize>,
    /// True when all eight benchmark families contributed to `overall`.
    pub complete: bool,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Unweighted means: per family, then cognition over family means, then
/// overall over the benchmark family means.
pub fn aggregate(scores: &[Score]) -> Result<Report, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut sums: BTreeMap<TaskFamily, (f64, usize)> = BTreeMap::new();
    for s in scores {
        let e = sums.entry(s.family).or_default();
        e.0 += s.value;
        e.1 += 1;
    }
    let per_task: BTreeMap<_, _> = sums.iter().map(|(f, (sum, n))| (*f, sum / *n as f64)).collect();
    let counts = sums.iter().map(|(f, (_, n))| (*f, *n)).collect();
    Ok(report_from_means(per_task, counts))
}

/// Aggregation over already-computed family means (one instance each).
pub fn aggregate_means(means: &BTreeMap<TaskFamily, f64>) -> Result<Report, EvalError> {
    if means.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(report_from_means(means.clone(), means.keys().map(|f| (*f, 1)).collect()))
}

fn report_from_means(per_task: BTreeMap<TaskFamily, f64>, counts: BTreeMap<TaskFamily, usize>) -> Report {
    let per_cognition = Cognition::ALL
        .into_iter()
        .filter_map(|c| {
            mean(TaskFamily::BENCH.iter().filter(|f| f.cognition() == Some(c)).filter_map(|f| per_task.get(f).copied()))
                .map(|m| (c, m))
        })
        .collect();
    let bench: Vec<f64> = TaskFamily::BENCH.iter().filter_map(|f| per_task.get(f).copied()).collect();
    let complete = bench.len() == TaskFamily::BENCH.len();
    Report { overall: mean(bench), per_task, per_cognition, counts, complete }
}

/// Half-up rounding to `decimals` places, tolerant of binary representation
/// error (46.375 → 46.4, 0.15 → 0.2).
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let p = 10f64.powi(decimals as i32);
    let scaled = x * p;
    let eps = 1e-9 * scaled.abs().max(1.0);
    if scaled >= 0.0 {
        (scaled + 0.5 + eps).floor() / p
    } else {
        -((-scaled + 0.5 + eps).floor()) / p
    }
}

impl Report {
    /// Copy with every figure rounded to one decimal, half-up.
    pub fn rounded(&self) -> Report {
        let r = |x: f64| round_half_up(x, 1);
        Report {
            per_task: self.per_task.iter().map(|(k, v)| (*k, r(*v))).collect(),
            per_cognition: self.per_cognition.iter().map(|(k, v)| (*k, r(*v))).collect(),
            overall: self.overall.map(r),
            counts: self.counts.clone(),
            complete: self.complete,
        }
    }

    /// Two-row CSV: benchmark columns, cognition columns, overall.
    pub fn to_csv(&self) -> String {
        let rounded = self.rounded();
        let mut header: Vec<String> = TaskFamily::BENCH.iter().map(|f| f.as_str().to_string()).collect();
        let mut row: Vec<String> =
            TaskFamily::BENCH.iter().map(|f| rounded.per_task.get(f).map(|v| format!("{v:.1}")).unwrap_or_default()).collect();
        for c in Cognition::ALL {
            header.push(c.to_string().to_lowercase());
            row.push(rounded.per_cognition.get(&c).map(|v| format!("{v:.1}")).unwrap_or_default());
        }
        header.push("overall".into());
        row.push(rounded.overall.map(|v| format!("{v:.1}")).unwrap_or_default());
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

/// Percentage of episodes with reward 1.
pub fn success_rate(trajs: &[Trajectory]) -> Result<f64, EvalError> {
    if trajs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let ok = trajs.iter().filter(|t| t.reward == 1).count();
    Ok(100.0 * ok as f64 / trajs.len() as f64)
}
