use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::task::{InstanceError, TaskFamily, TaskInstance};

/// Benchmark item counts per family, in report column order.
pub const BENCH_COUNTS: [(TaskFamily, usize); 8] = [
    (TaskFamily::ElementAttributeRecognition, 249),
    (TaskFamily::NextPagePrediction, 93),
    (TaskFamily::SourceElementPrediction, 32),
    (TaskFamily::ElementUnderstanding, 200),
    (TaskFamily::WebpageUnderstanding, 77),
    (TaskFamily::UserIntentionPrediction, 105),
    (TaskFamily::PopupClose, 58),
    (TaskFamily::SingleStepWebTask, 62),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFlag {
    pub line: usize,
    pub task_id: String,
    pub family: TaskFamily,
    pub problem: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ManifestReport {
    pub counts: BTreeMap<TaskFamily, usize>,
    pub total: usize,
    pub errors: Vec<SchemaError>,
    pub flags: Vec<ManifestFlag>,
}

impl ManifestReport {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty() && self.flags.is_empty()
    }

    /// Families whose count differs from `expected`, as (family, found, expected).
    pub fn count_mismatches(&self, expected: &[(TaskFamily, usize)]) -> Vec<(TaskFamily, usize, usize)> {
        expected
            .iter()
            .filter_map(|(f, n)| {
                let found = self.counts.get(f).copied().unwrap_or(0);
                (found != *n).then_some((*f, found, *n))
            })
            .collect()
    }
}

/// Counts a JSONL manifest per family. Lines that do not parse are listed as
/// schema errors and not counted; parsed lines that violate the
/// family→knowledge or benchmark family→metric binding are counted and flagged.
/// With `bench` false, any metric the family allows in the dataset passes.
pub fn validate_manifest(text: &str, bench: bool) -> ManifestReport {
    let mut report = ManifestReport::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inst: TaskInstance = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                report.errors.push(SchemaError { line: i + 1, message: e.to_string() });
                continue;
            }
        };
        *report.counts.entry(inst.family).or_default() += 1;
        report.total += 1;
        let checked: Result<(), InstanceError> = if bench { inst.validate_bench() } else { inst.validate() };
        if let Err(e) = checked {
            report.flags.push(ManifestFlag { line: i + 1, task_id: inst.task_id.clone(), family: inst.family, problem: e.to_string() });
        }
    }
    report
}
