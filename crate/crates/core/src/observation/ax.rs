//! Indexed accessibility tree shown to the agent, and its text form.
//!
//! Text form, one line per node in id order:
//!
//! ```text
//! [0] RootWebArea 'Fixture Home'
//!   [1] link 'Products'
//!   [2] checkbox 'News' (checked)
//! ```

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::html::normalize_whitespace;
use crate::browser::RawAXNode;
use crate::geometry::Rect;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AXNode {
    pub id: u32,
    pub role: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<String>,
    pub depth: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Rect>,
    pub backend_id: i64,
}

impl AXNode {
    pub fn new(role: impl Into<String>, name: impl Into<String>, depth: u32) -> Self {
        Self {
            id: 0,
            role: role.into(),
            name: name.into(),
            description: String::new(),
            states: Vec::new(),
            depth,
            bbox: None,
            backend_id: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AXError {
    #[error("line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("depth jumps from {prev} to {next} at node {index}")]
    DepthJump { index: usize, prev: u32, next: u32 },
}

/// Pre-order node list; tree shape is carried by `depth`.
///
/// Ids equal positions and are consecutive from 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AXTree {
    nodes: Vec<AXNode>,
}

impl AXTree {
    /// Builds a tree from pre-order nodes, reassigning ids to positions.
    pub fn from_nodes(mut nodes: Vec<AXNode>) -> Result<Self, AXError> {
        let mut prev: Option<u32> = None;
        for (i, n) in nodes.iter_mut().enumerate() {
            let ok = match prev {
                None => n.depth == 0,
                Some(p) => n.depth <= p + 1,
            };
            if !ok {
                return Err(AXError::DepthJump { index: i, prev: prev.unwrap_or(0), next: n.depth });
            }
            prev = Some(n.depth);
            n.id = i as u32;
        }
        Ok(Self { nodes })
    }

    pub fn root_only(role: &str, name: &str, backend_id: i64) -> Self {
        let mut n = AXNode::new(role, name, 0);
        n.backend_id = backend_id;
        Self { nodes: vec![n] }
    }

    pub fn nodes(&self) -> &[AXNode] {
        &self.nodes
    }

    pub fn into_nodes(self) -> Vec<AXNode> {
        self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&AXNode> {
        self.nodes.get(id as usize)
    }

    pub fn backend_of(&self, id: u32) -> Option<i64> {
        self.get(id).map(|n| n.backend_id)
    }

    pub fn set_bbox(&mut self, id: u32, bbox: Option<Rect>) {
        if let Some(n) = self.nodes.get_mut(id as usize) {
            n.bbox = bbox;
        }
    }

    /// Index of each node's parent (None for depth-0 nodes).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut stack: Vec<usize> = Vec::new();
        let mut out = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            stack.truncate(n.depth as usize);
            out.push(stack.last().copied());
            stack.push(i);
        }
        out
    }

    /// `role 'name'` of each ancestor, root first, joined by " > ".
    pub fn parent_paths(&self) -> Vec<String> {
        let parents = self.parents();
        let mut paths: Vec<String> = Vec::with_capacity(self.nodes.len());
        for (i, p) in parents.iter().enumerate() {
            let path = match p {
                None => String::new(),
                Some(p) => {
                    let seg = format!("{} '{}'", self.nodes[*p].role, self.nodes[*p].name);
                    if paths[*p].is_empty() {
                        seg
                    } else {
                        format!("{} > {seg}", paths[*p])
                    }
                }
            };
            debug_assert_eq!(paths.len(), i);
            paths.push(path);
        }
        paths
    }

    /// Positions of the root's direct children, plus the end position.
    /// These are the slots where a sibling subtree can be spliced in.
    pub fn top_level_slots(&self) -> Vec<usize> {
        let mut slots: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.depth == 1)
            .map(|(i, _)| i)
            .collect();
        slots.push(self.nodes.len());
        slots
    }

    pub fn serialize(&self) -> String {
        serialize_ax(self)
    }
}

const STATE_FLAGS: &[&str] = &[
    "checked", "selected", "expanded", "pressed", "disabled", "focused", "required", "invalid", "modal", "readonly",
];

fn states_from_flags(flags: &[(String, String)]) -> Vec<String> {
    let mut out = Vec::new();
    for flag in STATE_FLAGS {
        let Some((_, value)) = flags.iter().find(|(f, _)| f == flag) else { continue };
        match value.as_str() {
            "true" => out.push(flag.to_string()),
            "false" | "" => {}
            other => out.push(format!("{flag}={}", sanitize_state(other))),
        }
    }
    out
}

fn sanitize_state(s: &str) -> String {
    s.chars().filter(|c| !matches!(c, '(' | ')' | ',' | '\'' | '\n' | '\r')).collect::<String>().trim().to_string()
}

const PRUNABLE: &[&str] = &["generic", "none", "Ignored", "ignored", "InlineTextBox", "LineBreak"];

/// Flattens unnamed wrapper nodes, drops text boxes and label text that
/// repeats its parent's name, and numbers the remaining nodes depth-first.
pub fn normalize_ax(raw: &RawAXNode) -> AXTree {
    fn visit(node: &RawAXNode, depth: u32, parent_name: &str, out: &mut Vec<AXNode>) {
        let role = node.role.split_whitespace().collect::<String>();
        if role == "InlineTextBox" {
            return;
        }
        let name = normalize_whitespace(&node.name);
        let redundant_text = role == "StaticText" && (name.is_empty() || name == parent_name);
        let keep = !redundant_text && !(PRUNABLE.contains(&role.as_str()) && name.is_empty());
        if keep {
            out.push(AXNode {
                id: 0,
                role: if role.is_empty() { "generic".into() } else { role },
                name: name.clone(),
                description: normalize_whitespace(&node.description),
                states: states_from_flags(&node.state_flags),
                depth,
                bbox: None,
                backend_id: node.backend_id,
            });
        }
        let (child_depth, child_parent) = if keep { (depth + 1, name.as_str()) } else { (depth, parent_name) };
        for c in &node.children {
            visit(c, child_depth, child_parent, out);
        }
    }
    let mut nodes = Vec::new();
    let role = raw.role.split_whitespace().collect::<String>();
    let mut root = AXNode::new(if role.is_empty() { "RootWebArea".to_string() } else { role }, normalize_whitespace(&raw.name), 0);
    root.backend_id = raw.backend_id;
    root.states = states_from_flags(&raw.state_flags);
    let root_name = root.name.clone();
    nodes.push(root);
    for c in &raw.children {
        visit(c, 1, &root_name, &mut nodes);
    }
    AXTree::from_nodes(nodes).expect("pre-order walk yields valid depths")
}

/// One line per node: indent, `[id] role 'name'`, then `(states)` when present.
pub fn serialize_ax(tree: &AXTree) -> String {
    let mut out = String::new();
    for n in &tree.nodes {
        for _ in 0..n.depth {
            out.push_str("  ");
        }
        out.push_str(&format!("[{}] {} '{}'", n.id, n.role, n.name));
        if !n.states.is_empty() {
            out.push_str(&format!(" ({})", n.states.join(", ")));
        }
        out.push('\n');
    }
    out
}

/// Parses the text form back into a tree. Backend ids are not part of the
/// text, so each node gets the synthetic id `-(id + 1)`.
pub fn parse_ax_text(text: &str) -> Result<AXTree, AXError> {
    let mut nodes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| AXError::BadLine { line: lineno + 1, reason: reason.into() };
        let indent = line.len() - line.trim_start_matches(' ').len();
        if indent % 2 != 0 {
            return Err(bad("odd indentation"));
        }
        let rest = &line[indent..];
        let rest = rest.strip_prefix('[').ok_or_else(|| bad("missing '['"))?;
        let (id, rest) = rest.split_once("] ").ok_or_else(|| bad("missing '] '"))?;
        let id: u32 = id.parse().map_err(|_| bad("id is not an integer"))?;
        let (role, rest) = rest.split_once(" '").ok_or_else(|| bad("missing name"))?;
        let last_quote = rest.rfind('\'').ok_or_else(|| bad("unterminated name"))?;
        let name = &rest[..last_quote];
        let tail = &rest[last_quote + 1..];
        let states = if tail.is_empty() {
            Vec::new()
        } else {
            let inner = tail
                .strip_prefix(" (")
                .and_then(|t| t.strip_suffix(')'))
                .ok_or_else(|| bad("malformed states"))?;
            inner.split(", ").map(str::to_string).collect()
        };
        let mut node = AXNode::new(role, name, (indent / 2) as u32);
        node.id = id;
        node.states = states;
        node.backend_id = -(id as i64) - 1;
        nodes.push(node);
    }
    let ids: Vec<u32> = nodes.iter().map(|n| n.id).collect();
    let tree = AXTree::from_nodes(nodes)?;
    if ids.iter().enumerate().any(|(i, id)| *id as usize != i) {
        return Err(AXError::BadLine { line: 0, reason: "ids are not consecutive from 0".into() });
    }
    Ok(tree)
}

/// Maps `(role, name)` to the ids carrying it; handy for lookups in tests and tasks.
pub fn index_by_label(tree: &AXTree) -> HashMap<(String, String), Vec<u32>> {
    let mut m: HashMap<(String, String), Vec<u32>> = HashMap::new();
    for n in tree.nodes() {
        m.entry((n.role.clone(), n.name.clone())).or_default().push(n.id);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wrapped_button() -> RawAXNode {
        RawAXNode::new(1, "RootWebArea", "Page").with_children(vec![RawAXNode::new(2, "generic", "")
            .with_children(vec![RawAXNode::new(3, "generic", "").with_children(vec![RawAXNode::new(4, "button", "Go")
                .with_children(vec![RawAXNode::new(5, "StaticText", "Go")
                    .with_children(vec![RawAXNode::new(6, "InlineTextBox", "Go")])])])])])
    }

    #[test]
    fn wrappers_pruned_and_depth_follows_pruned_tree() {
        let t = normalize_ax(&wrapped_button());
        assert_eq!(t.len(), 2);
        let b = &t.nodes()[1];
        assert_eq!((b.id, b.role.as_str(), b.name.as_str(), b.depth, b.backend_id), (1, "button", "Go", 1, 4));
    }

    #[test]
    fn root_only_stays_root_only() {
        let t = normalize_ax(&RawAXNode::new(1, "RootWebArea", ""));
        assert_eq!(t.len(), 1);
        assert_eq!(serialize_ax(&t), "[0] RootWebArea ''\n");
    }

    #[test]
    fn identical_snapshots_number_identically() {
        assert_eq!(normalize_ax(&wrapped_button()), normalize_ax(&wrapped_button()));
    }

    #[test]
    fn named_generic_is_kept() {
        let raw = RawAXNode::new(1, "RootWebArea", "")
            .with_children(vec![RawAXNode::new(2, "generic", "Banner text").with_children(vec![RawAXNode::new(3, "link", "x")])]);
        let t = normalize_ax(&raw);
        assert_eq!(t.len(), 3);
        assert_eq!(t.nodes()[2].depth, 2);
    }

    #[test]
    fn line_format() {
        let mut n = AXNode::new("button", "Go", 1);
        n.id = 3;
        let mut nodes: Vec<AXNode> = vec![AXNode::new("RootWebArea", "", 0), AXNode::new("x", "", 1), AXNode::new("y", "", 1)];
        nodes.push(n);
        let t = AXTree::from_nodes(nodes).unwrap();
        assert_eq!(serialize_ax(&t).lines().nth(3).unwrap(), "  [3] button 'Go'");

        let raw = RawAXNode::new(1, "RootWebArea", "")
            .with_children(vec![RawAXNode::new(2, "checkbox", "News").with_state("checked", "true").with_state("focusable", "true")]);
        let t = normalize_ax(&raw);
        assert_eq!(serialize_ax(&t).lines().nth(1).unwrap(), "  [1] checkbox 'News' (checked)");
    }

    #[test]
    fn mixed_state_values_are_rendered_with_value() {
        let raw = RawAXNode::new(1, "RootWebArea", "")
            .with_children(vec![RawAXNode::new(2, "checkbox", "All").with_state("checked", "mixed").with_state("expanded", "false")]);
        assert_eq!(normalize_ax(&raw).nodes()[1].states, vec!["checked=mixed".to_string()]);
    }

    #[test]
    fn rejects_malformed_text() {
        assert!(parse_ax_text("[0 RootWebArea ''").is_err());
        assert!(parse_ax_text("[0] RootWebArea ''\n      [1] link 'x'").is_err());
        assert!(parse_ax_text("[1] RootWebArea ''").is_err());
    }

    fn arb_tree() -> impl Strategy<Value = AXTree> {
        let name = "[a-zA-Z0-9 '()\\[\\],.:-]{0,12}".prop_map(|s| normalize_whitespace(&s));
        let role = prop::sample::select(vec!["button", "link", "heading", "StaticText", "textbox", "menuitem"]);
        let states = prop::collection::vec(prop::sample::select(vec!["checked", "expanded", "disabled", "level=2"]), 0..3);
        prop::collection::vec((role, name, states, 0u32..3), 0..20).prop_map(|items| {
            let mut nodes = vec![AXNode::new("RootWebArea", "root", 0)];
            let mut prev = 0u32;
            for (role, name, states, up) in items {
                let depth = (prev + 1).saturating_sub(up).max(1);
                let mut n = AXNode::new(role, name, depth);
                n.states = states.into_iter().map(String::from).collect();
                nodes.push(n);
                prev = depth;
            }
            AXTree::from_nodes(nodes).unwrap()
        })
    }

    proptest! {
        #[test]
        fn text_round_trip_recovers_tuples(tree in arb_tree()) {
            let parsed = parse_ax_text(&serialize_ax(&tree)).unwrap();
            prop_assert_eq!(parsed.len(), tree.len());
            for (a, b) in tree.nodes().iter().zip(parsed.nodes()) {
                prop_assert_eq!((a.id, &a.role, &a.name, &a.states, a.depth), (b.id, &b.role, &b.name, &b.states, b.depth));
            }
        }

        #[test]
        fn ids_are_a_bijection(tree in arb_tree()) {
            let max = tree.nodes().iter().map(|n| n.id).max().unwrap();
            prop_assert_eq!(max as usize, tree.len() - 1);
        }
    }
}
