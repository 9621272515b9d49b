//! Converters for external corpora. Each record is one JSON object; image
//! paths are carried through unchanged (relative to the dataset root).
//!
//! caption_qa:     {"id", "image", "kind": "caption"|"qa", "question"?, "answer"}
//! single_step:    {"id", "image", "instruction", "candidates": [{"label", "bbox": [x,y,w,h]}], "answer"}
//! trajectory:     {"id", "instruction", "screenshots": [path, ...]}

use std::str::FromStr;

use serde_json::Value;

use super::prompts::task_prompt;
use super::{Generated, TaskgenError};
use crate::task::{Choice, Gold, Metric, Provenance, TaskFamily, TaskInputs, TaskInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalSchema {
    CaptionQa,
    SingleStep,
    Trajectory,
}

impl ExternalSchema {
    pub fn as_str(self) -> &'static str {
        match self {
            ExternalSchema::CaptionQa => "caption_qa",
            ExternalSchema::SingleStep => "single_step",
            ExternalSchema::Trajectory => "trajectory",
        }
    }

    pub fn family(self) -> TaskFamily {
        match self {
            ExternalSchema::CaptionQa => TaskFamily::CaptionQa,
            ExternalSchema::SingleStep => TaskFamily::SingleStepWebTask,
            ExternalSchema::Trajectory => TaskFamily::UserIntentionPrediction,
        }
    }
}

impl FromStr for ExternalSchema {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [ExternalSchema::CaptionQa, ExternalSchema::SingleStep, ExternalSchema::Trajectory]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown external schema '{s}'"))
    }
}

fn str_field<'a>(v: &'a Value, key: &str) -> Result<&'a str, String> {
    match v.get(key).and_then(Value::as_str) {
        Some(s) if !s.trim().is_empty() => Ok(s),
        Some(_) => Err(format!("field '{key}' is empty")),
        None => Err(format!("missing string field '{key}'")),
    }
}

fn source(schema: ExternalSchema, id: &str) -> Provenance {
    Provenance { generator: format!("external/{}", schema.as_str()), record: Some(id.into()), seed: None, note: None }
}

fn convert_one(schema: ExternalSchema, v: &Value) -> Result<TaskInstance, String> {
    let id = str_field(v, "id")?;
    match schema {
        ExternalSchema::CaptionQa => {
            let image = str_field(v, "image")?;
            let answer = str_field(v, "answer")?;
            let family = TaskFamily::CaptionQa;
            let (metric, prompt) = match str_field(v, "kind")? {
                "caption" => (Metric::LvmJudge, "Describe this webpage screenshot.".to_string()),
                "qa" => (Metric::RougeL, format!("{}\nQuestion: {}", task_prompt(family), str_field(v, "question")?)),
                other => return Err(format!("unknown kind '{other}'")),
            };
            Ok(TaskInstance::new(
                format!("{}-{id}", family.as_str()),
                family,
                metric,
                TaskInputs { images: vec![image.into()], prompt, choices: None, ax_text: None },
                Gold::Text { value: answer.into() },
                source(schema, id),
            ))
        }
        ExternalSchema::SingleStep => {
            let image = str_field(v, "image")?;
            let instruction = str_field(v, "instruction")?;
            let answer = str_field(v, "answer")?;
            let cands = v.get("candidates").and_then(Value::as_array).ok_or("missing array field 'candidates'")?;
            let mut choices = Vec::new();
            for c in cands {
                let label = str_field(c, "label")?;
                let bbox = c.get("bbox").and_then(Value::as_array).filter(|b| b.len() == 4 && b.iter().all(Value::is_number));
                let bbox = bbox.ok_or_else(|| format!("candidate {label} needs bbox [x, y, w, h]"))?;
                let nums: Vec<String> = bbox.iter().map(|n| n.to_string()).collect();
                choices.push(Choice { label: label.into(), image: None, text: Some(format!("[{}]", nums.join(", "))) });
            }
            if choices.len() < 2 {
                return Err("need at least two candidates".into());
            }
            if !choices.iter().any(|c| c.label == answer) {
                return Err(format!("answer '{answer}' is not a candidate label"));
            }
            let family = TaskFamily::SingleStepWebTask;
            Ok(TaskInstance::new(
                format!("{}-{id}", family.as_str()),
                family,
                Metric::Accuracy,
                TaskInputs {
                    images: vec![image.into()],
                    prompt: format!("{}\nInstruction: {instruction}", task_prompt(family)),
                    choices: Some(choices),
                    ax_text: None,
                },
                Gold::Choice { label: answer.into() },
                source(schema, id),
            ))
        }
        ExternalSchema::Trajectory => {
            let instruction = str_field(v, "instruction")?;
            let shots = v.get("screenshots").and_then(Value::as_array).ok_or("missing array field 'screenshots'")?;
            let images: Vec<String> =
                shots.iter().map(|s| s.as_str().map(String::from).ok_or("screenshot paths must be strings")).collect::<Result<_, _>>()?;
            if images.is_empty() {
                return Err("no screenshots".into());
            }
            let family = TaskFamily::UserIntentionPrediction;
            Ok(TaskInstance::new(
                format!("{}-{id}", family.as_str()),
                family,
                Metric::LvmJudge,
                TaskInputs { images, prompt: task_prompt(family).into(), choices: None, ax_text: None },
                Gold::Text { value: instruction.into() },
                source(schema, id),
            ))
        }
    }
}

/// Converts every record that matches `schema`; the rest are returned as
/// `SchemaMismatch` errors in input order.
pub fn convert_external(schema: ExternalSchema, records: &[Value]) -> (Vec<Generated>, Vec<TaskgenError>) {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (index, v) in records.iter().enumerate() {
        match convert_one(schema, v) {
            Ok(instance) => ok.push(Generated::new(instance, Vec::new())),
            Err(reason) => bad.push(TaskgenError::SchemaMismatch { schema: schema.as_str().into(), index, reason }),
        }
    }
    (ok, bad)
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    #[test]
    fn caption_and_qa_metrics() {
        let recs = vec![
            json!({"id": "c1", "image": "img/a.png", "kind": "caption", "answer": "A shop front page."}),
            json!({"id": "q1", "image": "img/b.png", "kind": "qa", "question": "What is sold?", "answer": "Shoes"}),
            json!({"id": "bad", "image": "img/c.png", "kind": "qa", "answer": "no question"}),
        ];
        let (ok, bad) = convert_external(ExternalSchema::CaptionQa, &recs);
        assert_eq!(ok.len(), 2);
        assert_eq!(ok[0].instance.metric, Metric::LvmJudge);
        assert_eq!(ok[1].instance.metric, Metric::RougeL);
        assert!(ok.iter().all(|g| g.instance.validate().is_ok()));
        assert!(matches!(&bad[..], [TaskgenError::SchemaMismatch { index: 2, .. }]));
    }

    #[test]
    fn single_step_is_bench_valid() {
        let rec = json!({"id": "s1", "image": "x.png", "instruction": "Open the cart",
            "candidates": [{"label": "A", "bbox": [0, 0, 10, 10]}, {"label": "B", "bbox": [20, 0, 10, 10]}], "answer": "B"});
        let (ok, bad) = convert_external(ExternalSchema::SingleStep, &[rec, json!({"id": "s2"})]);
        assert_eq!(bad.len(), 1);
        ok[0].instance.validate_bench().unwrap();
        assert_eq!(ok[0].instance.gold, Gold::Choice { label: "B".into() });
    }

    #[test]
    fn trajectory_keeps_image_order() {
        let rec = json!({"id": "t1", "instruction": "Buy a red scarf", "screenshots": ["s/1.png", "s/2.png", "s/3.png"]});
        let (ok, _) = convert_external(ExternalSchema::Trajectory, &[rec]);
        let inst = &ok[0].instance;
        inst.validate_bench().unwrap();
        assert_eq!(inst.inputs.images, vec!["s/1.png", "s/2.png", "s/3.png"]);
        assert_eq!(inst.gold, Gold::Text { value: "Buy a red scarf".into() });
    }
}
