//! Dataset and benchmark items shared by task generation and evaluation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TASK_SCHEMA: &str = "cogweb/task/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    ElementAttributeRecognition,
    SubElementsPrediction,
    PageChangePrediction,
    NextPagePrediction,
    SourceElementPrediction,
    ElementUnderstanding,
    WebpageUnderstanding,
    CaptionQa,
    UserIntentionPrediction,
    PopupClose,
    SingleStepWebTask,
    NoisyMultiStepWebTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knowledge {
    Factual,
    Conceptual,
    Procedural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RougeL,
    Accuracy,
    LvmJudge,
    SuccessRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cognition {
    Memorizing,
    Understanding,
    Exploring,
}

impl Cognition {
    pub const ALL: [Cognition; 3] = [Cognition::Memorizing, Cognition::Understanding, Cognition::Exploring];
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 12] = [
        TaskFamily::ElementAttributeRecognition,
        TaskFamily::SubElementsPrediction,
        TaskFamily::PageChangePrediction,
        TaskFamily::NextPagePrediction,
        TaskFamily::SourceElementPrediction,
        TaskFamily::ElementUnderstanding,
        TaskFamily::WebpageUnderstanding,
        TaskFamily::CaptionQa,
        TaskFamily::UserIntentionPrediction,
        TaskFamily::PopupClose,
        TaskFamily::SingleStepWebTask,
        TaskFamily::NoisyMultiStepWebTask,
    ];

    /// The eight benchmark families, in report column order.
    pub const BENCH: [TaskFamily; 8] = [
        TaskFamily::ElementAttributeRecognition,
        TaskFamily::NextPagePrediction,
        TaskFamily::SourceElementPrediction,
        TaskFamily::ElementUnderstanding,
        TaskFamily::WebpageUnderstanding,
        TaskFamily::UserIntentionPrediction,
        TaskFamily::PopupClose,
        TaskFamily::SingleStepWebTask,
    ];

    pub fn knowledge(self) -> Knowledge {
        use TaskFamily::*;
        match self {
            ElementAttributeRecognition | SubElementsPrediction | PageChangePrediction | NextPagePrediction
            | SourceElementPrediction => Knowledge::Factual,
            ElementUnderstanding | WebpageUnderstanding | CaptionQa => Knowledge::Conceptual,
            UserIntentionPrediction | PopupClose | SingleStepWebTask | NoisyMultiStepWebTask => Knowledge::Procedural,
        }
    }

    /// Metrics an instance of this family may carry in a dataset manifest.
    pub fn allowed_metrics(self) -> &'static [Metric] {
        use TaskFamily::*;
        match self {
            ElementAttributeRecognition | SubElementsPrediction | PageChangePrediction => &[Metric::RougeL],
            NextPagePrediction => &[Metric::Accuracy, Metric::RougeL],
            SourceElementPrediction | PopupClose | SingleStepWebTask => &[Metric::Accuracy],
            ElementUnderstanding | WebpageUnderstanding | UserIntentionPrediction => &[Metric::LvmJudge],
            CaptionQa => &[Metric::RougeL, Metric::LvmJudge],
            NoisyMultiStepWebTask => &[Metric::SuccessRate],
        }
    }

    /// Benchmark binding: cognition dimension and the single metric scored.
    pub fn bench_binding(self) -> Option<(Cognition, Metric)> {
        use TaskFamily::*;
        match self {
            ElementAttributeRecognition => Some((Cognition::Memorizing, Metric::RougeL)),
            NextPagePrediction => Some((Cognition::Memorizing, Metric::Accuracy)),
            SourceElementPrediction => Some((Cognition::Memorizing, Metric::Accuracy)),
            ElementUnderstanding => Some((Cognition::Understanding, Metric::LvmJudge)),
            WebpageUnderstanding => Some((Cognition::Understanding, Metric::LvmJudge)),
            UserIntentionPrediction => Some((Cognition::Exploring, Metric::LvmJudge)),
            PopupClose => Some((Cognition::Exploring, Metric::Accuracy)),
            SingleStepWebTask => Some((Cognition::Exploring, Metric::Accuracy)),
            _ => None,
        }
    }

    pub fn cognition(self) -> Option<Cognition> {
        self.bench_binding().map(|(c, _)| c)
    }

    pub fn as_str(self) -> &'static str {
        use TaskFamily::*;
        match self {
            ElementAttributeRecognition => "element_attribute_recognition",
            SubElementsPrediction => "sub_elements_prediction",
            PageChangePrediction => "page_change_prediction",
            NextPagePrediction => "next_page_prediction",
            SourceElementPrediction => "source_element_prediction",
            ElementUnderstanding => "element_understanding",
            WebpageUnderstanding => "webpage_understanding",
            CaptionQa => "caption_qa",
            UserIntentionPrediction => "user_intention_prediction",
            PopupClose => "popup_close",
            SingleStepWebTask => "single_step_web_task",
            NoisyMultiStepWebTask => "noisy_multi_step_web_task",
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskFamily::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| format!("unknown task family '{s}'"))
    }
}

impl fmt::Display for Cognition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::RougeL => "rouge_l",
            Metric::Accuracy => "accuracy",
            Metric::LvmJudge => "lvm_judge",
            Metric::SuccessRate => "success_rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskInputs {
    /// Paths relative to the dataset root, in presentation order.
    pub images: Vec<String>,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<Choice>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ax_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Gold {
    Text { value: String },
    Choice { label: String },
    Element { id: u32 },
    Action { value: String },
    /// Every nonempty subset of valid closing actions.
    Strategies { methods: Vec<String>, sets: Vec<Vec<String>> },
    ActionSequence { actions: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub schema: String,
    pub task_id: String,
    pub family: TaskFamily,
    pub knowledge: Knowledge,
    pub inputs: TaskInputs,
    pub gold: Gold,
    pub metric: Metric,
    pub source: Provenance,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstanceError {
    #[error("schema '{0}' is not {TASK_SCHEMA}")]
    Schema(String),
    #[error("{family} carries knowledge {found:?}, expected {expected:?}")]
    KnowledgeMismatch { family: TaskFamily, found: Knowledge, expected: Knowledge },
    #[error("{family} cannot be scored with {metric:?}")]
    MetricMismatch { family: TaskFamily, metric: Metric },
    #[error("choices present without a choice answer, or the reverse")]
    ChoicesMismatch,
    #[error("gold label {0} is not among the choices")]
    GoldNotInChoices(String),
}

impl TaskInstance {
    pub fn new(task_id: impl Into<String>, family: TaskFamily, metric: Metric, inputs: TaskInputs, gold: Gold, source: Provenance) -> Self {
        Self {
            schema: TASK_SCHEMA.into(),
            task_id: task_id.into(),
            family,
            knowledge: family.knowledge(),
            inputs,
            gold,
            metric,
            source,
        }
    }

    /// Checks the family→knowledge and family→metric maps and choice consistency.
    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.schema != TASK_SCHEMA {
            return Err(InstanceError::Schema(self.schema.clone()));
        }
        if self.knowledge != self.family.knowledge() {
            return Err(InstanceError::KnowledgeMismatch {
                family: self.family,
                found: self.knowledge,
                expected: self.family.knowledge(),
            });
        }
        if !self.family.allowed_metrics().contains(&self.metric) {
            return Err(InstanceError::MetricMismatch { family: self.family, metric: self.metric });
        }
        match (&self.inputs.choices, &self.gold) {
            (Some(choices), Gold::Choice { label }) => {
                if !choices.iter().any(|c| &c.label == label) {
                    return Err(InstanceError::GoldNotInChoices(label.clone()));
                }
            }
            (None, Gold::Choice { .. }) | (Some(_), _) => return Err(InstanceError::ChoicesMismatch),
            _ => {}
        }
        Ok(())
    }

    /// Additionally requires the benchmark's single metric for the family.
    pub fn validate_bench(&self) -> Result<(), InstanceError> {
        self.validate()?;
        match self.family.bench_binding() {
            Some((_, m)) if m == self.metric => Ok(()),
            _ => Err(InstanceError::MetricMismatch { family: self.family, metric: self.metric }),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("task instances serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knowledge_groups_match_dataset_table() {
        let count = |k| TaskFamily::ALL.iter().filter(|f| f.knowledge() == k).count();
        assert_eq!((count(Knowledge::Factual), count(Knowledge::Conceptual), count(Knowledge::Procedural)), (5, 3, 4));
    }

    #[test]
    fn bench_bindings() {
        let bound: Vec<_> = TaskFamily::ALL.iter().filter(|f| f.bench_binding().is_some()).copied().collect();
        assert_eq!(bound, {
            let mut b = TaskFamily::BENCH.to_vec();
            b.sort();
            b
        });
        for f in TaskFamily::BENCH {
            let (_, m) = f.bench_binding().unwrap();
            assert!(f.allowed_metrics().contains(&m));
        }
    }

    #[test]
    fn family_names_round_trip() {
        for f in TaskFamily::ALL {
            assert_eq!(f.as_str().parse::<TaskFamily>().unwrap(), f);
            assert_eq!(serde_json::to_string(&f).unwrap(), format!("\"{}\"", f.as_str()));
        }
    }

    #[test]
    fn validator_rejects_mismatches() {
        let inst = TaskInstance::new(
            "t",
            TaskFamily::ElementAttributeRecognition,
            Metric::Accuracy,
            TaskInputs::default(),
            Gold::Text { value: "x".into() },
            Provenance::default(),
        );
        assert!(matches!(inst.validate(), Err(InstanceError::MetricMismatch { .. })));
        let mut ok = inst.clone();
        ok.metric = Metric::RougeL;
        assert!(ok.validate().is_ok());
        ok.knowledge = Knowledge::Procedural;
        assert!(matches!(ok.validate(), Err(InstanceError::KnowledgeMismatch { .. })));
    }

    #[test]
    fn choice_gold_must_be_listed() {
        let inputs = TaskInputs {
            choices: Some(vec![Choice { label: "A".into(), image: None, text: None }]),
            ..Default::default()
        };
        let inst = TaskInstance::new(
            "t",
            TaskFamily::NextPagePrediction,
            Metric::Accuracy,
            inputs,
            Gold::Choice { label: "B".into() },
            Provenance::default(),
        );
        assert_eq!(inst.validate(), Err(InstanceError::GoldNotInChoices("B".into())));
    }
}
