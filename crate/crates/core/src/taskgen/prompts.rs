//! Fixed per-family prompt templates.

use crate::task::TaskFamily;

pub const PROMPT_PACK_VERSION: &str = "cogweb-prompts/1";

pub const ELEMENT_SECTIONS: [&str; 3] = ["Visible Traits", "On-page Location", "User-facing Function"];
pub const PAGE_SECTIONS: [&str; 3] = ["Layout Organization", "Key Element Analysis", "Summary"];

/// Prompt shown to the model for an instance of `family`.
pub fn task_prompt(family: TaskFamily) -> &'static str {
    use TaskFamily::*;
    match family {
        ElementAttributeRecognition => {
            "The element highlighted by the red bounding box is interactive. State its semantic role and its accessible \
name in the form `role: <role>, name: <name>`."
        }
        SubElementsPrediction => {
            "Predict which new elements will appear after clicking the element highlighted by the red bounding box. \
List one element per line as `<role> '<name>'`."
        }
        PageChangePrediction => {
            "Describe how the page will change after clicking the element highlighted by the red bounding box."
        }
        NextPagePrediction => {
            "The first image shows a page with one element highlighted by a red bounding box. Which of the candidate \
screenshots shows the page after clicking it? Answer with the letter of the candidate only."
        }
        SourceElementPrediction => {
            "The first image shows a page with several candidate elements marked by labeled boxes. The second image \
shows the page reached by clicking one of them. Which candidate was clicked? Answer with its letter only."
        }
        ElementUnderstanding => {
            "Describe the element highlighted by the red bounding box under three headings: Visible Traits, On-page \
Location, User-facing Function."
        }
        WebpageUnderstanding => {
            "Describe this webpage under three headings: Layout Organization, Key Element Analysis, Summary."
        }
        CaptionQa => "Answer the request about this webpage screenshot.",
        UserIntentionPrediction => {
            "The screenshots show, in order, the pages a user went through while completing a task on a website. \
What was the user's original instruction?"
        }
        PopupClose => {
            "A popup covers part of this webpage. Using the accessibility tree, give every action that closes it, one \
action per line, in the form `click [id]`."
        }
        SingleStepWebTask => {
            "Candidate elements are marked with labeled boxes. Which element should be clicked to carry out the \
instruction? Answer with its letter only."
        }
        NoisyMultiStepWebTask => {
            "Complete the task in the browser. Output one action per step; if a popup appears, close it first."
        }
    }
}

/// Annotator instruction for page-change descriptions.
pub const ANNOTATE_PAGE_CHANGE: &str = "The first image shows a page with one element highlighted by a red bounding \
box; the second shows the page after that element was clicked. Describe in two or three sentences what changed \
on the page as a result of the click.";

pub const ANNOTATE_NEXT_PAGE: &str = "The image shows the page reached after a click. Describe the page in two or \
three sentences: what kind of page it is and its main content.";

pub fn annotate_element() -> String {
    format!(
        "Describe the element highlighted by the red bounding box. Use exactly these headings, each on its own line \
followed by a short paragraph: {}.",
        ELEMENT_SECTIONS.join(", ")
    )
}

pub fn annotate_page() -> String {
    format!(
        "Describe this webpage. Use exactly these headings, each on its own line followed by a short paragraph: {}.",
        PAGE_SECTIONS.join(", ")
    )
}

/// Appended to every annotation request.
pub const CONFIDENCE_SUFFIX: &str = "Reply with a JSON object {\"text\": <your answer>, \"confidence\": <number \
between 0 and 1 saying how sure you are that the answer is correct>}.";
