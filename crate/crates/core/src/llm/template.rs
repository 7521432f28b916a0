//! The prompt templates shipped as versioned text assets, and rendering of
//! chat requests against them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LlmError;

/// The nine prompt templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    /// Log summarization.
    P1,
    /// Entity types extraction.
    P2,
    /// Entity extraction (pairs + names).
    P3,
    /// Edge extraction (direction + timestamps).
    P4,
    /// Regex rule generator.
    P5,
    /// Functional label assignment.
    P6,
    /// Unknown-entity flagging (YES/NO).
    P7,
    /// Attack-graph summarization and tactic identification.
    P8,
    /// LLM judge.
    P9,
}

impl TemplateId {
    pub const ALL: [TemplateId; 9] = [
        TemplateId::P1,
        TemplateId::P2,
        TemplateId::P3,
        TemplateId::P4,
        TemplateId::P5,
        TemplateId::P6,
        TemplateId::P7,
        TemplateId::P8,
        TemplateId::P9,
    ];
}

/// Raw template text for a prompt.
pub fn template_text(id: TemplateId) -> &'static str {
    match id {
        TemplateId::P1 => include_str!("../../assets/prompts/p1_log_summarization.txt"),
        TemplateId::P2 => include_str!("../../assets/prompts/p2_entity_types.txt"),
        TemplateId::P3 => include_str!("../../assets/prompts/p3_entity_extraction.txt"),
        TemplateId::P4 => include_str!("../../assets/prompts/p4_edge_extraction.txt"),
        TemplateId::P5 => include_str!("../../assets/prompts/p5_rule_generator.txt"),
        TemplateId::P6 => include_str!("../../assets/prompts/p6_functional_label.txt"),
        TemplateId::P7 => include_str!("../../assets/prompts/p7_unknown_entity.txt"),
        TemplateId::P8 => include_str!("../../assets/prompts/p8_attack_summary.txt"),
        TemplateId::P9 => include_str!("../../assets/prompts/p9_judge.txt"),
    }
}

/// Placeholder names a template requires. Placeholders appear in the asset
/// as `<Name>`; literal angle-bracket text in output-format sections is not
/// in this list and is left untouched.
pub fn template_placeholders(id: TemplateId) -> &'static [&'static str] {
    match id {
        TemplateId::P1 => &["Platform Name", "Log Entry"],
        TemplateId::P2 | TemplateId::P3 => &["Platform Name", "Log Entry", "Summary"],
        TemplateId::P4 => &["Platform Name", "Log Entry", "Summary", "Entity Pairs"],
        TemplateId::P5 => &["Log Entry", "Field Name", "Field Value", "Correction Context"],
        TemplateId::P6 => &["Platform Name", "Entity Name"],
        TemplateId::P7 => &["Entity Name"],
        TemplateId::P8 => &["Edge Lines", "Malicious Nodes", "Node Metadata", "Tactic List"],
        TemplateId::P9 => &["Model Reasoning", "MITRE Reference"],
    }
}

/// Default sampling temperature. Extraction and judgment prompts run at
/// zero; the prompts that feed direction voting run warmer so the votes
/// carry information.
pub fn default_temperature(id: TemplateId) -> f64 {
    match id {
        TemplateId::P1 | TemplateId::P4 | TemplateId::P8 => 0.7,
        _ => 0.0,
    }
}

/// One prior exchange prepended as an in-context example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InContextExample {
    pub input: String,
    pub output: String,
}

/// A fully bound request against one template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub template_id: TemplateId,
    pub bindings: BTreeMap<String, String>,
    pub in_context_examples: Vec<InContextExample>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(template_id: TemplateId) -> Self {
        ChatRequest {
            template_id,
            bindings: BTreeMap::new(),
            in_context_examples: Vec::new(),
            temperature: default_temperature(template_id),
            max_tokens: 2048,
        }
    }

    pub fn bind(mut self, name: &str, value: impl Into<String>) -> Self {
        self.bindings.insert(name.to_string(), value.into());
        self
    }

    pub fn with_examples(mut self, examples: Vec<InContextExample>) -> Self {
        self.in_context_examples = examples;
        self
    }
}

/// Render a request: in-context examples in request order, then the
/// template with every placeholder substituted verbatim. Pure function.
pub fn render_prompt(request: &ChatRequest) -> Result<String, LlmError> {
    let mut rendered = String::new();
    for (idx, example) in request.in_context_examples.iter().enumerate() {
        rendered.push_str(&format!(
            "Example {n} Input:\n{input}\nExample {n} Output:\n{output}\n\n",
            n = idx + 1,
            input = example.input,
            output = example.output,
        ));
    }
    let mut body = template_text(request.template_id).to_string();
    for placeholder in template_placeholders(request.template_id) {
        let needle = format!("<{placeholder}>");
        let value = request
            .bindings
            .get(*placeholder)
            .ok_or_else(|| LlmError::MissingBinding((*placeholder).to_string()))?;
        body = body.replace(&needle, value);
    }
    rendered.push_str(&body);
    Ok(rendered)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p7_contains_yes_no_instruction() {
        let request = ChatRequest::new(TemplateId::P7).bind("Entity Name", "vmtoolsd.exe");
        let rendered = render_prompt(&request).unwrap();
        assert!(rendered.contains("Respond with ONLY \"YES\" or \"NO\""));
        assert!(rendered.contains("vmtoolsd.exe"));
    }

    #[test]
    fn p1_without_examples_is_the_base_template() {
        let request = ChatRequest::new(TemplateId::P1)
            .bind("Platform Name", "<Platform Name>")
            .bind("Log Entry", "<Log Entry>");
        let rendered = render_prompt(&request).unwrap();
        assert_eq!(rendered, template_text(TemplateId::P1));
    }

    #[test]
    fn p4_renders_both_pairs() {
        let request = ChatRequest::new(TemplateId::P4)
            .bind("Platform Name", "Linux audit")
            .bind("Log Entry", "some log")
            .bind("Summary", "some summary")
            .bind("Entity Pairs", "(ID-1, ID-2)\n(ID-1, ID-3)");
        let rendered = render_prompt(&request).unwrap();
        assert!(rendered.contains("(ID-1, ID-2)\n(ID-1, ID-3)"));
    }

    #[test]
    fn missing_binding_names_the_placeholder() {
        let request = ChatRequest::new(TemplateId::P7);
        match render_prompt(&request) {
            Err(LlmError::MissingBinding(name)) => assert_eq!(name, "Entity Name"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rendering_is_pure() {
        let request = ChatRequest::new(TemplateId::P6)
            .bind("Platform Name", "Windows")
            .bind("Entity Name", "winword.exe");
        assert_eq!(
            render_prompt(&request).unwrap(),
            render_prompt(&request).unwrap()
        );
    }

    #[test]
    fn literal_output_format_markers_survive_rendering() {
        let request = ChatRequest::new(TemplateId::P6)
            .bind("Platform Name", "Windows")
            .bind("Entity Name", "winword.exe");
        let rendered = render_prompt(&request).unwrap();
        assert!(rendered.contains("<functional_label>"));
        assert!(rendered.contains("<NO LABEL>"));
    }

    #[test]
    fn examples_are_prepended_in_order() {
        let request = ChatRequest::new(TemplateId::P7)
            .bind("Entity Name", "x")
            .with_examples(vec![
                InContextExample {
                    input: "first-in".into(),
                    output: "first-out".into(),
                },
                InContextExample {
                    input: "second-in".into(),
                    output: "second-out".into(),
                },
            ]);
        let rendered = render_prompt(&request).unwrap();
        let a = rendered.find("first-in").unwrap();
        let b = rendered.find("second-in").unwrap();
        let c = rendered.find("Respond with ONLY").unwrap();
        assert!(a < b && b < c);
    }
}
