use serde::{Deserialize, Serialize};

/// Section headings of the reasoning scaffold, in output order.
pub const COT_SECTIONS: [&str; 6] = [
    "Webpage Layout Description",
    "Key Element Analysis",
    "Task Recap",
    "Task Decomposition",
    "Step-by-Step Reasoning",
    "Final Action Summary",
];

pub const FINAL_SECTION: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThoughtSection {
    pub title: String,
    pub body: String,
}

/// Parsed reasoning for one step. Always holds all six sections in scaffold
/// order; sections the model skipped are empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thought {
    pub sections: Vec<ThoughtSection>,
    pub raw: String,
}

fn canonical_heading(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

/// If `line` is a section heading, its index and any text after a colon.
fn heading(line: &str) -> Option<(usize, String)> {
    let t = line.trim().trim_start_matches(|c: char| c == '#' || c == '*' || c == '-' || c.is_whitespace());
    let t = t.trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ')').trim_start();
    let (head, inline) = match t.find(':') {
        Some(i) => (&t[..i], t[i + 1..].trim().trim_start_matches('*').trim().to_string()),
        None => (t, String::new()),
    };
    let key = canonical_heading(head);
    if key.is_empty() {
        return None;
    }
    COT_SECTIONS.iter().position(|s| canonical_heading(s) == key).map(|i| (i, inline))
}

impl Thought {
    pub fn empty() -> Self {
        Self {
            sections: COT_SECTIONS.iter().map(|t| ThoughtSection { title: t.to_string(), body: String::new() }).collect(),
            raw: String::new(),
        }
    }

    /// Lenient parse: headings may carry markdown markers, numbering or a
    /// trailing colon; missing sections stay empty. Returns the thought and
    /// whether any heading was found.
    pub fn parse(raw: &str) -> (Thought, bool) {
        let mut t = Thought::empty();
        t.raw = raw.to_string();
        let mut current: Option<usize> = None;
        let mut found = false;
        let mut bodies: Vec<Vec<String>> = vec![Vec::new(); COT_SECTIONS.len()];
        for line in raw.lines() {
            if let Some((idx, inline)) = heading(line) {
                found = true;
                current = Some(idx);
                if !inline.is_empty() {
                    bodies[idx].push(inline);
                }
                continue;
            }
            if let Some(idx) = current {
                bodies[idx].push(line.to_string());
            }
        }
        for (section, lines) in t.sections.iter_mut().zip(bodies) {
            section.body = lines.join("\n").trim().to_string();
        }
        (t, found)
    }

    pub fn section(&self, title: &str) -> &str {
        self.sections.iter().find(|s| s.title == title).map(|s| s.body.as_str()).unwrap_or("")
    }

    pub fn final_summary(&self) -> &str {
        &self.sections[FINAL_SECTION].body
    }

    pub fn set_final_summary(&mut self, text: impl Into<String>) {
        self.sections[FINAL_SECTION].body = text.into();
    }

    /// Rendering used in prompt history.
    pub fn render(&self) -> String {
        self.sections
            .iter()
            .filter(|s| !s.body.is_empty())
            .map(|s| format!("## {}\n{}", s.title, s.body))
            .collect::<Vec<_>>()
            .join("\n")
    }
}
