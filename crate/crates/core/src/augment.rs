//! Edit augmentation: renders each edit into the diverse textual forms that
//! get embedded and stored (QA, declarative, paraphrased, reversed).
//!
//! Two modes are provided. The rule-based mode fills fixed templates and
//! needs no model, so the whole pipeline can run offline and reproducibly.
//! The LLM-backed mode asks a completion backend to reword the edit, using
//! prompt templates that can be swapped at runtime.

use std::path::Path;

use crate::backend::CompletionBackend;
use crate::edit::{AugmentedEdit, Edit, EditForm};
use crate::error::Error;

/// Renders the canonical QA form: query and answer joined by one space.
pub fn render_qa(edit: &Edit) -> String {
    format!("{} {}", edit.query.trim(), edit.answer.trim())
}

/// Deterministic augmentation from fixed templates. Produces exactly four
/// forms: QA, declarative (query with any trailing "?" stripped, then the
/// answer), one paraphrase, and the reversed answer-first rendering.
pub fn augment_rule_based(edit: &Edit) -> AugmentedEdit {
    let query = edit.query.trim();
    let answer = edit.answer.trim();
    let statement_query = query.strip_suffix('?').unwrap_or(query).trim_end();
    let forms = vec![
        (EditForm::Qa, render_qa(edit)),
        (EditForm::Declarative, format!("{statement_query} {answer}.")),
        (EditForm::Paraphrased(1), format!("Regarding: {query} The answer is {answer}.")),
        (EditForm::Reversed, format!("{answer} is the answer to: {query}")),
    ];
    AugmentedEdit::new(&edit.id, forms).expect("rule templates always produce valid forms")
}

/// The three rewording prompts sent to the augmentation backend. Each
/// template must contain the "{query}" and "{answer}" placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub declarative: String,
    pub paraphrased: String,
    pub reversed: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            declarative: include_str!("../templates/declarative.txt").to_string(),
            paraphrased: include_str!("../templates/paraphrased.txt").to_string(),
            reversed: include_str!("../templates/reversed.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    /// Loads `declarative.txt`, `paraphrased.txt`, and `reversed.txt` from a
    /// directory, checking that each contains both placeholders.
    pub fn load_dir(dir: &Path) -> Result<Self, Error> {
        let read = |file: &str| -> Result<String, Error> {
            let path = dir.join(file);
            let text = std::fs::read_to_string(&path)?;
            for placeholder in ["{query}", "{answer}"] {
                if !text.contains(placeholder) {
                    return Err(Error::schema(format!(
                        "template '{}' lacks the {placeholder} placeholder",
                        path.display()
                    )));
                }
            }
            Ok(text)
        };
        Ok(PromptTemplates {
            declarative: read("declarative.txt")?,
            paraphrased: read("paraphrased.txt")?,
            reversed: read("reversed.txt")?,
        })
    }
}

/// Augmentation via a completion backend: one prompt each for the
/// declarative, paraphrased (three variants), and reversed forms.
///
/// A failed backend call fails the whole augmentation. A reply that parses
/// to nothing merely omits that form; the QA form is always present, so an
/// edit can be applied even when every rewording comes back unusable.
pub fn augment_with_llm(
    edit: &Edit,
    client: &dyn CompletionBackend,
    templates: &PromptTemplates,
) -> Result<AugmentedEdit, Error> {
    let mut forms = vec![(EditForm::Qa, render_qa(edit))];

    let reply = client.complete(&fill_template(&templates.declarative, edit))?;
    if let Some(text) = parse_statement_reply(&reply) {
        forms.push((EditForm::Declarative, text));
    }

    let reply = client.complete(&fill_template(&templates.paraphrased, edit))?;
    for (i, text) in parse_paraphrase_reply(&reply).into_iter().enumerate() {
        forms.push((EditForm::Paraphrased(i as u8 + 1), text));
    }

    let reply = client.complete(&fill_template(&templates.reversed, edit))?;
    if let Some(text) = parse_statement_reply(&reply) {
        forms.push((EditForm::Reversed, text));
    }

    AugmentedEdit::new(&edit.id, forms)
}

/// Splits a paraphrase reply into at most three reworded statements: one
/// per line, list markers ("1.", "2)", "-", "*") stripped, blanks dropped.
pub fn parse_paraphrase_reply(reply: &str) -> Vec<String> {
    reply
        .lines()
        .map(strip_list_marker)
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .take(3)
        .map(str::to_string)
        .collect()
}

/// Extracts the statement from a single-form reply: the first non-empty
/// line, with any echoed "Statement:" label removed.
fn parse_statement_reply(reply: &str) -> Option<String> {
    let line = reply.lines().map(str::trim).find(|line| !line.is_empty())?;
    let line = line.strip_prefix("Statement:").map(str::trim_start).unwrap_or(line);
    if line.is_empty() {
        None
    } else {
        Some(line.to_string())
    }
}

fn strip_list_marker(line: &str) -> &str {
    let trimmed = line.trim_start();
    if let Some(rest) = trimmed.strip_prefix(&['-', '*'][..]) {
        return rest.trim_start();
    }
    let digits = trimmed.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = trimmed[digits..].strip_prefix(&['.', ')', ':'][..]) {
            return rest.trim_start();
        }
    }
    trimmed
}

fn fill_template(template: &str, edit: &Edit) -> String {
    template.replace("{query}", edit.query.trim()).replace("{answer}", edit.answer.trim())
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;
    use crate::backend::ScriptedBackend;

    fn edit(query: &str, answer: &str) -> Edit {
        Edit::new("e1", query, answer, 1).unwrap()
    }

    #[test]
    fn render_qa_joins_with_one_space() {
        assert_eq!(
            render_qa(&edit("What year was JS 7.62 made?", "1963")),
            "What year was JS 7.62 made? 1963"
        );
        assert_eq!(render_qa(&edit("Q", "A")), "Q A");
        assert_eq!(
            render_qa(&edit("The current US president is", "Donald Trump")),
            "The current US president is Donald Trump"
        );
    }

    #[test]
    fn rule_based_produces_the_four_fixed_forms() {
        let augmented = augment_rule_based(&edit("What year was JS 7.62 made?", "1963"));
        let forms = augmented.forms();
        assert_eq!(forms.len(), 4);
        assert_eq!(forms[0], (EditForm::Qa, "What year was JS 7.62 made? 1963".into()));
        assert_eq!(forms[1], (EditForm::Declarative, "What year was JS 7.62 made 1963.".into()));
        assert_eq!(
            forms[2],
            (
                EditForm::Paraphrased(1),
                "Regarding: What year was JS 7.62 made? The answer is 1963.".into()
            )
        );
        assert_eq!(forms[3], (EditForm::Reversed, "1963 is the answer to: What year was JS 7.62 made?".into()));
    }

    #[test]
    fn rule_based_reversed_keeps_the_question_mark() {
        let augmented = augment_rule_based(&edit("X?", "Y"));
        let reversed = augmented
            .forms()
            .iter()
            .find(|(form, _)| *form == EditForm::Reversed)
            .map(|(_, text)| text.as_str());
        assert_eq!(reversed, Some("Y is the answer to: X?"));
    }

    #[test]
    fn parse_paraphrase_reply_handles_markers_and_blanks() {
        assert_eq!(parse_paraphrase_reply("1. A\n2. B\n3. C"), vec!["A", "B", "C"]);
        assert_eq!(parse_paraphrase_reply(""), Vec::<String>::new());
        assert_eq!(parse_paraphrase_reply("only one line"), vec!["only one line"]);
        assert_eq!(parse_paraphrase_reply("- A\n\n* B\n2) C\n4. D"), vec!["A", "B", "C"]);
        assert_eq!(parse_paraphrase_reply("10: ten"), vec!["ten"]);
    }

    #[test]
    fn llm_mode_yields_six_forms_on_clean_replies() {
        let client = ScriptedBackend::new(
            "augmenter",
            vec![
                "The year JS 7.62 was made is 1963.".into(),
                "1. JS 7.62 was produced in the year 1963.\n2. The production year of JS 7.62 is 1963.\n3. In 1963, JS 7.62 was made.".into(),
                "1963 is the year JS 7.62 was made.".into(),
            ],
        );
        let augmented =
            augment_with_llm(&edit("What year was JS 7.62 made?", "1963"), &client, &PromptTemplates::default())
                .unwrap();
        let forms = augmented.forms();
        assert_eq!(forms.len(), 6);
        assert_eq!(forms[1], (EditForm::Declarative, "The year JS 7.62 was made is 1963.".into()));
        assert_eq!(forms[5], (EditForm::Reversed, "1963 is the year JS 7.62 was made.".into()));
        assert_eq!(client.remaining(), 0);
    }

    #[test]
    fn llm_mode_omits_forms_with_unusable_replies() {
        let client = ScriptedBackend::new(
            "augmenter",
            vec!["A statement.".into(), "".into(), "Reversed statement.".into()],
        );
        let augmented = augment_with_llm(&edit("Q?", "A"), &client, &PromptTemplates::default()).unwrap();
        let kinds: Vec<EditForm> = augmented.forms().iter().map(|(form, _)| *form).collect();
        assert_eq!(kinds, vec![EditForm::Qa, EditForm::Declarative, EditForm::Reversed]);
    }

    #[test]
    fn llm_mode_fails_when_the_backend_fails() {
        let client = ScriptedBackend::new("augmenter", vec!["only one reply".into()]);
        let err = augment_with_llm(&edit("Q?", "A"), &client, &PromptTemplates::default()).unwrap_err();
        assert!(matches!(err, Error::Backend { .. }));
    }

    #[test]
    fn llm_mode_is_a_pure_function_of_the_replies() {
        let replies: Vec<String> =
            vec!["Decl.".into(), "1. P1\n2. P2\n3. P3".into(), "Rev.".into()];
        let a = augment_with_llm(
            &edit("Q?", "A"),
            &ScriptedBackend::new("x", replies.clone()),
            &PromptTemplates::default(),
        )
        .unwrap();
        let b = augment_with_llm(
            &edit("Q?", "A"),
            &ScriptedBackend::new("x", replies),
            &PromptTemplates::default(),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prompts_substitute_both_placeholders() {
        struct Recorder(Mutex<Vec<String>>);
        impl CompletionBackend for Recorder {
            fn name(&self) -> &str {
                "recorder"
            }
            fn complete(&self, prompt: &str) -> Result<String, Error> {
                self.0.lock().unwrap().push(prompt.to_string());
                Ok("reply".into())
            }
        }
        let recorder = Recorder(Mutex::new(Vec::new()));
        augment_with_llm(&edit("Who made X?", "Maker"), &recorder, &PromptTemplates::default()).unwrap();
        let prompts = recorder.0.into_inner().unwrap();
        assert_eq!(prompts.len(), 3);
        for prompt in &prompts {
            assert!(prompt.contains("Who made X?"));
            assert!(prompt.contains("Maker"));
            assert!(!prompt.contains("{query}"));
            assert!(!prompt.contains("{answer}"));
        }
    }

    #[test]
    fn templates_load_from_a_directory_and_validate_placeholders() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("declarative.txt"), "D {query} {answer}").unwrap();
        std::fs::write(dir.path().join("paraphrased.txt"), "P {query} {answer}").unwrap();
        std::fs::write(dir.path().join("reversed.txt"), "R {query} {answer}").unwrap();
        let templates = PromptTemplates::load_dir(dir.path()).unwrap();
        assert_eq!(templates.declarative, "D {query} {answer}");

        std::fs::write(dir.path().join("reversed.txt"), "R {query} only").unwrap();
        assert!(PromptTemplates::load_dir(dir.path()).is_err());
    }
}
