//! Role and accessible-name inference from an element's outerHTML.

use scraper::{ElementRef, Html, Node};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("fragment does not contain exactly one element: {0}")]
    NotSingleElement(String),
}

/// Parsed single-element fragment.
struct Fragment {
    html: Html,
    tag: String,
}

fn leading_tag(fragment: &str) -> Option<String> {
    let rest = fragment.trim_start().strip_prefix('<')?;
    let tag: String = rest.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '-').collect();
    (!tag.is_empty()).then(|| tag.to_ascii_lowercase())
}

impl Fragment {
    fn parse(fragment: &str) -> Result<Self, ParseError> {
        let err = || ParseError::NotSingleElement(truncate(fragment));
        let tag = leading_tag(fragment).ok_or_else(err)?;
        // Table parts are dropped by the parser outside a table context.
        let (prefix, suffix) = match tag.as_str() {
            "td" | "th" => ("<table><tbody><tr>", "</tr></tbody></table>"),
            "tr" => ("<table><tbody>", "</tbody></table>"),
            "thead" | "tbody" | "tfoot" | "caption" | "colgroup" => ("<table>", "</table>"),
            "col" => ("<table><colgroup>", "</colgroup></table>"),
            _ => ("", ""),
        };
        let html = Html::parse_fragment(&format!("{prefix}{fragment}{suffix}"));
        let frag = Fragment { html, tag };
        if prefix.is_empty() {
            let root = frag.html.root_element();
            let mut elements = 0;
            for child in root.children() {
                match child.value() {
                    Node::Element(_) => elements += 1,
                    Node::Text(t) if !t.trim().is_empty() => return Err(err()),
                    _ => {}
                }
            }
            if elements != 1 {
                return Err(err());
            }
        }
        if frag.element().is_none() {
            return Err(err());
        }
        Ok(frag)
    }

    fn element(&self) -> Option<ElementRef<'_>> {
        self.html
            .root_element()
            .descendants()
            .filter_map(ElementRef::wrap)
            .find(|e| e.value().name() == self.tag)
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(80).collect()
}

/// Implicit ARIA role of an HTML element (HTML-AAM mapping).
pub fn implicit_role(tag: &str, attr: impl Fn(&str) -> Option<String>) -> &'static str {
    let has = |name: &str| attr(name).is_some();
    match tag {
        "a" | "area" => {
            if has("href") {
                "link"
            } else {
                "generic"
            }
        }
        "article" => "article",
        "aside" => "complementary",
        "button" => "button",
        "datalist" => "listbox",
        "dd" => "definition",
        "details" => "group",
        "dialog" => "dialog",
        "dt" => "term",
        "fieldset" => "group",
        "figure" => "figure",
        "footer" => "contentinfo",
        "form" => "form",
        "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => "heading",
        "header" => "banner",
        "hr" => "separator",
        "img" => match attr("alt") {
            Some(alt) if alt.is_empty() => "presentation",
            _ => "img",
        },
        "input" => {
            let ty = attr("type").map(|t| t.to_ascii_lowercase()).unwrap_or_default();
            match ty.as_str() {
                "button" | "submit" | "reset" | "image" => "button",
                "checkbox" => "checkbox",
                "radio" => "radio",
                "range" => "slider",
                "number" => "spinbutton",
                "search" => {
                    if has("list") {
                        "combobox"
                    } else {
                        "searchbox"
                    }
                }
                "hidden" | "file" | "color" | "date" | "datetime-local" | "month" | "time" | "week" | "password" => {
                    "generic"
                }
                _ => {
                    if has("list") {
                        "combobox"
                    } else {
                        "textbox"
                    }
                }
            }
        }
        "li" => "listitem",
        "main" => "main",
        "math" => "math",
        "menu" | "ol" | "ul" => "list",
        "meter" => "meter",
        "nav" => "navigation",
        "optgroup" => "group",
        "option" => "option",
        "output" => "status",
        "p" => "paragraph",
        "progress" => "progressbar",
        "section" => "region",
        "select" => {
            let size = attr("size").and_then(|s| s.parse::<u32>().ok()).unwrap_or(0);
            if has("multiple") || size > 1 {
                "listbox"
            } else {
                "combobox"
            }
        }
        "summary" => "button",
        "table" => "table",
        "tbody" | "thead" | "tfoot" => "rowgroup",
        "td" => "cell",
        "textarea" => "textbox",
        "th" => "columnheader",
        "tr" => "row",
        "svg" => "graphics-document",
        "blockquote" => "blockquote",
        "code" => "code",
        "em" => "emphasis",
        "strong" => "strong",
        "label" | "span" | "div" | "b" | "i" | "u" | "small" | "body" => "generic",
        _ => "generic",
    }
}

/// Explicit `role` attribute wins, else the implicit mapping by tag, else "generic".
pub fn infer_role(outer_html: &str) -> Result<String, ParseError> {
    let frag = Fragment::parse(outer_html)?;
    let el = frag.element().expect("checked in parse");
    if let Some(role) = el.value().attr("role") {
        if let Some(first) = role.split_whitespace().next() {
            return Ok(first.to_ascii_lowercase());
        }
    }
    let attr = |name: &str| el.value().attr(name).map(str::to_string);
    Ok(implicit_role(&frag.tag, attr).to_string())
}

fn is_hidden(el: &ElementRef<'_>) -> bool {
    let v = el.value();
    if v.attr("hidden").is_some() || v.attr("aria-hidden") == Some("true") {
        return true;
    }
    if matches!(v.name(), "script" | "style" | "template" | "noscript") {
        return true;
    }
    v.attr("style").is_some_and(|s| {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
        s.contains("display:none") || s.contains("visibility:hidden")
    })
}

fn collect_text(el: ElementRef<'_>, out: &mut String) {
    for child in el.children() {
        match child.value() {
            Node::Text(t) => out.push_str(t),
            Node::Element(_) => {
                if let Some(e) = ElementRef::wrap(child) {
                    if !is_hidden(&e) {
                        collect_text(e, out);
                    }
                }
            }
            _ => {}
        }
    }
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `aria-label` if present, else whitespace-normalized visible text content.
/// Elements without text (inputs, images) fall back to alt, title, placeholder, value.
pub fn infer_name(outer_html: &str) -> Result<String, ParseError> {
    let frag = Fragment::parse(outer_html)?;
    let el = frag.element().expect("checked in parse");
    if let Some(label) = el.value().attr("aria-label") {
        let label = normalize_whitespace(label);
        if !label.is_empty() {
            return Ok(label);
        }
    }
    let mut text = String::new();
    if !is_hidden(&el) {
        collect_text(el, &mut text);
    }
    let text = normalize_whitespace(&text);
    if !text.is_empty() {
        return Ok(text);
    }
    for attr in ["alt", "title", "placeholder", "value"] {
        if let Some(v) = el.value().attr(attr) {
            let v = normalize_whitespace(v);
            if !v.is_empty() {
                return Ok(v);
            }
        }
    }
    Ok(String::new())
}
