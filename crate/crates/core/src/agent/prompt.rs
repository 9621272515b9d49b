use crate::imaging::Image;
use crate::model::ChatMessage;
use crate::observation::Observation;

use super::episode::Step;
use super::thought::COT_SECTIONS;

pub const PROMPT_VERSION: &str = "cogweb-agent/1";
pub const DEFAULT_IMAGE_WINDOW: usize = 3;

const SYSTEM_HEAD: &str = "You are a web agent operating a real browser. Each turn you receive a screenshot of the \
current page and its accessibility tree, where every element is listed as `[id] role 'name'`. Complete the user's \
task one action at a time.

Answer in the following sections, using these headings exactly and in this order:";

const SYSTEM_TAIL: &str = "Under Webpage Layout Description, describe the regions of the page. Under Key Element \
Analysis, list the elements relevant to the task with their ids. Task Recap restates the goal; Task Decomposition \
splits it into sub-goals and notes which are done; Step-by-Step Reasoning decides what to do next. The last line of \
Final Action Summary must be exactly one action from this list:

click [id]
type [id] [content]
scroll [id or WINDOW] [up or down]
dbclick [id]
go_back
go_forward
stop [answer]   (finish the task; put the answer or a short result inside the brackets)
restart
wait";

/// Versioned system instructions with the six reasoning headings verbatim.
pub fn system_prompt() -> String {
    let headings: Vec<String> = COT_SECTIONS.iter().map(|h| format!("## {h}")).collect();
    format!("{SYSTEM_HEAD}\n\n{}\n\n{SYSTEM_TAIL}", headings.join("\n"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub system: String,
    pub query: String,
    /// Prior thoughts, actions and observations, in step order.
    pub history: String,
    /// Current observation rendered as text.
    pub current: String,
    /// Attached screenshots, oldest first.
    pub images: Vec<Image>,
    /// Step number of each attached screenshot.
    pub image_steps: Vec<u32>,
    /// Set after an unparseable response.
    pub correction: Option<String>,
}

impl Prompt {
    pub fn user_text(&self) -> String {
        let mut s = format!("Task: {}\n", self.query);
        if !self.history.is_empty() {
            s.push_str("\n# History\n");
            s.push_str(&self.history);
        }
        s.push_str("\n# Current observation\n");
        s.push_str(&self.current);
        if let Some(c) = &self.correction {
            s.push_str("\n# Note\n");
            s.push_str(c);
            s.push('\n');
        }
        s
    }

    pub fn to_messages(&self) -> Vec<ChatMessage> {
        vec![ChatMessage::system(self.system.clone()), ChatMessage::user(self.user_text()).with_images(self.images.clone())]
    }
}

fn render_observation(obs: &Observation, with_image: bool) -> String {
    let shot = if with_image { format!(" (screenshot {} attached)", obs.step) } else { String::new() };
    format!("Step {} URL: {}{}\nAccessibility tree:\n{}", obs.step, obs.url, shot, obs.ax_text)
}

/// Assembles the prompt for `obs`. Every prior step is rendered as text;
/// only the last `window` screenshots (current included) are attached.
pub fn build_prompt(query: &str, obs: &Observation, history: &[Step], window: usize) -> Prompt {
    let first_windowed = obs.step.saturating_sub(window as u32) + 1;
    let mut images = Vec::new();
    let mut image_steps = Vec::new();
    let mut text = String::new();
    for step in history {
        let o = &step.observation;
        let attach = window > 0 && o.step >= first_windowed;
        if attach {
            images.push(o.screenshot.clone());
            image_steps.push(o.step);
        }
        text.push_str(&render_observation(o, attach));
        text.push('\n');
        let thought = step.thought.render();
        if !thought.is_empty() {
            text.push_str(&thought);
            text.push('\n');
        }
        text.push_str(&format!("Action {}: {}\n", o.step, step.action.format()));
        if let Some(note) = &step.note {
            text.push_str(&format!("Result: {note}\n"));
        }
        text.push('\n');
    }
    let attach_current = window > 0;
    if attach_current {
        images.push(obs.screenshot.clone());
        image_steps.push(obs.step);
    }
    Prompt {
        system: system_prompt(),
        query: query.to_string(),
        history: text,
        current: render_observation(obs, attach_current),
        images,
        image_steps,
        correction: None,
    }
}
