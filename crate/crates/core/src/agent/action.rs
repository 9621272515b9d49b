//! The agent's action grammar.
//!
//! ```text
//! click [id]            type [id] [content]     scroll [id|WINDOW] [up|down]
//! dbclick [id]          go_back                 go_forward
//! stop [content]        restart                 wait
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::browser::ScrollDirection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScrollTarget {
    Window,
    Element(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Click(u32),
    Type { id: u32, content: String },
    Scroll { target: ScrollTarget, direction: ScrollDirection },
    DbClick(u32),
    GoBack,
    GoForward,
    Stop(String),
    Restart,
    Wait,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unparseable action '{line}': {reason}")]
pub struct Unparseable {
    pub line: String,
    pub reason: String,
}

fn fail(line: &str, reason: impl Into<String>) -> Unparseable {
    Unparseable { line: line.to_string(), reason: reason.into() }
}

/// Splits a leading `[...]` group (no nested brackets) off `s`.
fn bracket_arg(s: &str) -> Option<(&str, &str)> {
    let s = s.trim_start();
    let rest = s.strip_prefix('[')?;
    let end = rest.find(']')?;
    Some((rest[..end].trim(), &rest[end + 1..]))
}

fn parse_id(s: &str) -> Option<u32> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Content between the first `[` and the final `]` of `rest`, which must
/// close the line.
fn trailing_content(rest: &str) -> Option<String> {
    let rest = rest.trim();
    let inner = rest.strip_prefix('[')?.strip_suffix(']')?;
    Some(inner.to_string())
}

impl Action {
    /// Parses exactly one action line. Verbs are case-insensitive.
    pub fn parse(line: &str) -> Result<Action, Unparseable> {
        let line = line.trim();
        let verb_end = line.find(|c: char| c.is_whitespace() || c == '[').unwrap_or(line.len());
        let verb = line[..verb_end].to_ascii_lowercase();
        let rest = &line[verb_end..];
        let no_args = |a: Action| if rest.trim().is_empty() { Ok(a) } else { Err(fail(line, "takes no arguments")) };
        let single_id = || -> Result<u32, Unparseable> {
            let (arg, tail) = bracket_arg(rest).ok_or_else(|| fail(line, "expected [id]"))?;
            if !tail.trim().is_empty() {
                return Err(fail(line, "unexpected trailing text"));
            }
            parse_id(arg).ok_or_else(|| fail(line, "id must be a nonnegative integer"))
        };
        match verb.as_str() {
            "click" => single_id().map(Action::Click),
            "dbclick" => single_id().map(Action::DbClick),
            "type" => {
                let (arg, tail) = bracket_arg(rest).ok_or_else(|| fail(line, "expected [id]"))?;
                let id = parse_id(arg).ok_or_else(|| fail(line, "id must be a nonnegative integer"))?;
                let content = trailing_content(tail).ok_or_else(|| fail(line, "expected [content]"))?;
                Ok(Action::Type { id, content })
            }
            "scroll" => {
                let (target, tail) = bracket_arg(rest).ok_or_else(|| fail(line, "expected [id|WINDOW]"))?;
                let target = if target.eq_ignore_ascii_case("window") {
                    ScrollTarget::Window
                } else {
                    ScrollTarget::Element(parse_id(target).ok_or_else(|| fail(line, "bad scroll target"))?)
                };
                let (dir, tail) = bracket_arg(tail).ok_or_else(|| fail(line, "expected [up|down]"))?;
                if !tail.trim().is_empty() {
                    return Err(fail(line, "unexpected trailing text"));
                }
                let direction = match dir.to_ascii_lowercase().as_str() {
                    "up" => ScrollDirection::Up,
                    "down" => ScrollDirection::Down,
                    _ => return Err(fail(line, "direction must be up or down")),
                };
                Ok(Action::Scroll { target, direction })
            }
            "stop" => trailing_content(rest).map(Action::Stop).ok_or_else(|| fail(line, "expected [content]")),
            "go_back" | "goback" => no_args(Action::GoBack),
            "go_forward" | "goforward" => no_args(Action::GoForward),
            "restart" => no_args(Action::Restart),
            "wait" => no_args(Action::Wait),
            "" => Err(fail(line, "empty line")),
            other => Err(fail(line, format!("unknown verb '{other}'"))),
        }
    }

    /// Canonical lowercase rendering; `Action::parse(&a.format()) == Ok(a)`
    /// for any content without line breaks.
    pub fn format(&self) -> String {
        match self {
            Action::Click(id) => format!("click [{id}]"),
            Action::Type { id, content } => format!("type [{id}] [{content}]"),
            Action::Scroll { target, direction } => {
                let t = match target {
                    ScrollTarget::Window => "WINDOW".to_string(),
                    ScrollTarget::Element(id) => id.to_string(),
                };
                format!("scroll [{t}] [{}]", direction.as_str())
            }
            Action::DbClick(id) => format!("dbclick [{id}]"),
            Action::GoBack => "go_back".into(),
            Action::GoForward => "go_forward".into(),
            Action::Stop(content) => format!("stop [{content}]"),
            Action::Restart => "restart".into(),
            Action::Wait => "wait".into(),
        }
    }

    /// Element id the action refers to, if any.
    pub fn target_id(&self) -> Option<u32> {
        match self {
            Action::Click(id) | Action::DbClick(id) | Action::Type { id, .. } => Some(*id),
            Action::Scroll { target: ScrollTarget::Element(id), .. } => Some(*id),
            _ => None,
        }
    }

    pub fn with_target(&self, id: u32) -> Action {
        match self {
            Action::Click(_) => Action::Click(id),
            Action::DbClick(_) => Action::DbClick(id),
            Action::Type { content, .. } => Action::Type { id, content: content.clone() },
            Action::Scroll { target: ScrollTarget::Element(_), direction } => {
                Action::Scroll { target: ScrollTarget::Element(id), direction: *direction }
            }
            other => other.clone(),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format())
    }
}

impl std::str::FromStr for Action {
    type Err = Unparseable;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::parse(s)
    }
}

/// Strips markdown decoration and a `Label:` prefix from a candidate line.
fn candidates(line: &str) -> Vec<String> {
    let cleaned = line.trim().trim_matches(|c| c == '`' || c == '*').trim();
    let cleaned = cleaned.trim_start_matches(['-', '>']).trim();
    let mut out = vec![cleaned.to_string()];
    if let Some(colon) = cleaned.find(':') {
        let head = &cleaned[..colon];
        if !head.is_empty() && head.chars().all(|c| c.is_alphabetic() || c == ' ' || c == '_') {
            out.push(cleaned[colon + 1..].trim().trim_matches('`').to_string());
        }
    }
    out
}

/// Parses the action out of a full model response: the last nonempty line
/// of `summary` when given, else the last nonempty line of `text`.
pub fn parse_action(text: &str, summary: Option<&str>) -> Result<Action, Unparseable> {
    let source = summary.filter(|s| !s.trim().is_empty()).unwrap_or(text);
    let line = source.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
    let mut first_err = None;
    for c in candidates(line) {
        match Action::parse(&c) {
            Ok(a) => return Ok(a),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.unwrap_or_else(|| fail(line, "empty line")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_examples() {
        assert_eq!(Action::parse("click [12]"), Ok(Action::Click(12)));
        assert_eq!(Action::parse("type [5] [New York hotels]"), Ok(Action::Type { id: 5, content: "New York hotels".into() }));
        assert_eq!(
            Action::parse("scroll [WINDOW] [down]"),
            Ok(Action::Scroll { target: ScrollTarget::Window, direction: ScrollDirection::Down })
        );
        assert_eq!(Action::parse("stop [Answer: [42]]"), Ok(Action::Stop("Answer: [42]".into())));
        assert!(Action::parse("clik [3]").is_err());
    }

    #[test]
    fn verbs_are_case_insensitive() {
        assert_eq!(Action::parse("CLICK [1]"), Ok(Action::Click(1)));
        assert_eq!(Action::parse("Restart"), Ok(Action::Restart));
        assert_eq!(Action::parse("Wait"), Ok(Action::Wait));
        assert_eq!(Action::parse("Scroll [3] [UP]"), Ok(Action::Scroll { target: ScrollTarget::Element(3), direction: ScrollDirection::Up }));
    }

    #[test]
    fn arity_is_checked() {
        for bad in ["click", "click []", "click [x]", "click [1] [2]", "type [1]", "stop", "wait [1]", "scroll [1]", "scroll [1] [left]", "click [-1]"] {
            assert!(Action::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(Action::Click(12).format(), "click [12]");
        assert_eq!(Action::Wait.format(), "wait");
        assert_eq!(Action::GoBack.format(), "go_back");
    }

    #[test]
    fn model_output_line_selection() {
        let text = "Some reasoning\n\n**Final Action Summary**\nI will click the button.\n`click [4]`\n";
        assert_eq!(parse_action(text, None), Ok(Action::Click(4)));
        assert_eq!(parse_action("x", Some("Action: type [2] [a: b]")), Ok(Action::Type { id: 2, content: "a: b".into() }));
        assert_eq!(parse_action("stop [x: y]", None), Ok(Action::Stop("x: y".into())));
        assert!(parse_action("nothing here", None).is_err());
    }
}
