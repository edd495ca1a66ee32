//! Task-specific prompt templates.
//!
//! ```text
//! ID: transfer sentence to intents : <utterance>
//! SF: transfer sentence to pairs with <intents> : <utterance>
//! SP: transfer sentence to slots with <intents> : <utterance>
//! ```
//!
//! `<intents>` is the intent guidance segment. Removing it (and the `with`)
//! gives the ablated SF/SP templates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief_span::{IntentSpan, EMPTY_SPAN, ITEM_SEPARATOR, KEY_VALUE_SEPARATOR};
use crate::bio::Utterance;

pub const INTENT_PREFIX: &str = "transfer sentence to intents";
pub const PAIR_PREFIX: &str = "transfer sentence to pairs";
pub const SLOT_PREFIX: &str = "transfer sentence to slots";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("{0} prompts need intents unless intent guidance is disabled")]
    MissingIntents(TaskKind),
    #[error("intent detection prompts take no intents")]
    UnexpectedIntents,
    #[error("intent detection has no intent blank to remove")]
    NoAblatedIntentDetection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "ID")]
    IntentDetection,
    #[serde(rename = "SF")]
    SlotFilling,
    #[serde(rename = "SP")]
    SlotPrediction,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::IntentDetection,
        TaskKind::SlotFilling,
        TaskKind::SlotPrediction,
    ];

    pub fn code(self) -> &'static str {
        match self {
            TaskKind::IntentDetection => "ID",
            TaskKind::SlotFilling => "SF",
            TaskKind::SlotPrediction => "SP",
        }
    }

    pub fn template_prefix(self) -> &'static str {
        match self {
            TaskKind::IntentDetection => INTENT_PREFIX,
            TaskKind::SlotFilling => PAIR_PREFIX,
            TaskKind::SlotPrediction => SLOT_PREFIX,
        }
    }

    /// Recovers the task from a prompt rendered by this module.
    pub fn of_prompt(text: &str) -> Option<TaskKind> {
        TaskKind::ALL
            .into_iter()
            .find(|task| text.starts_with(task.template_prefix()))
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ID" => Ok(TaskKind::IntentDetection),
            "SF" => Ok(TaskKind::SlotFilling),
            "SP" => Ok(TaskKind::SlotPrediction),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// How intents are rendered inside SF/SP prompts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentEmbedding {
    /// `airport, flight`
    #[default]
    Phrases,
    /// `intent : airport, intent : flight`
    FullSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub task: TaskKind,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PromptBuilder {
    pub embedding: IntentEmbedding,
}

impl PromptBuilder {
    pub fn new(embedding: IntentEmbedding) -> Self {
        Self { embedding }
    }

    /// The intent guidance segment for `intents`.
    pub fn intent_segment(&self, intents: &IntentSpan) -> String {
        match self.embedding {
            IntentEmbedding::FullSpan => intents.serialize(),
            IntentEmbedding::Phrases if intents.is_empty() => EMPTY_SPAN.to_string(),
            IntentEmbedding::Phrases => intents.intents().join(ITEM_SEPARATOR),
        }
    }

    pub fn build(
        &self,
        task: TaskKind,
        utt: &Utterance,
        intents: Option<&IntentSpan>,
    ) -> Result<Prompt, PromptError> {
        let text = match (task, intents) {
            (TaskKind::IntentDetection, None) => {
                format!("{INTENT_PREFIX}{KEY_VALUE_SEPARATOR}{}", utt.raw_text())
            }
            (TaskKind::IntentDetection, Some(_)) => return Err(PromptError::UnexpectedIntents),
            (_, None) => return Err(PromptError::MissingIntents(task)),
            (_, Some(intents)) => format!(
                "{} with {}{KEY_VALUE_SEPARATOR}{}",
                task.template_prefix(),
                self.intent_segment(intents),
                utt.raw_text()
            ),
        };
        Ok(Prompt { text, task })
    }

    /// SF/SP prompt without the intent guidance segment.
    pub fn build_ablated(&self, task: TaskKind, utt: &Utterance) -> Result<Prompt, PromptError> {
        if task == TaskKind::IntentDetection {
            return Err(PromptError::NoAblatedIntentDetection);
        }
        Ok(Prompt {
            text: format!(
                "{}{KEY_VALUE_SEPARATOR}{}",
                task.template_prefix(),
                utt.raw_text()
            ),
            task,
        })
    }
}

/// [`PromptBuilder::build`] with phrase embedding.
pub fn build_prompt(
    task: TaskKind,
    utt: &Utterance,
    intents: Option<&IntentSpan>,
) -> Result<Prompt, PromptError> {
    PromptBuilder::default().build(task, utt, intents)
}

pub fn build_ablated_prompt(task: TaskKind, utt: &Utterance) -> Result<Prompt, PromptError> {
    PromptBuilder::default().build_ablated(task, utt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn utt(text: &str) -> Utterance {
        Utterance::from_text(text).unwrap()
    }

    #[test]
    fn intent_detection_template() {
        let p = build_prompt(TaskKind::IntentDetection, &utt("show me flights"), None).unwrap();
        assert_eq!(p.text, "transfer sentence to intents : show me flights");
        assert_eq!(p.task, TaskKind::IntentDetection);
        assert_eq!(
            build_prompt(
                TaskKind::IntentDetection,
                &utt("a"),
                Some(&IntentSpan::empty())
            ),
            Err(PromptError::UnexpectedIntents)
        );
    }

    #[test]
    fn guided_templates() {
        let u = utt("describe pittsburgh airport and then list flights from denver to san francisco no denver to philadelphia");
        let intents = IntentSpan::new(["airport", "flight"]).unwrap();
        let p = build_prompt(TaskKind::SlotFilling, &u, Some(&intents)).unwrap();
        assert_eq!(
            p.text,
            "transfer sentence to pairs with airport, flight : describe pittsburgh airport and then list flights from denver to san francisco no denver to philadelphia"
        );
        let p = build_prompt(
            TaskKind::SlotPrediction,
            &utt("x y"),
            Some(&IntentSpan::empty()),
        )
        .unwrap();
        assert_eq!(p.text, "transfer sentence to slots with none : x y");
        assert_eq!(
            build_prompt(TaskKind::SlotFilling, &u, None),
            Err(PromptError::MissingIntents(TaskKind::SlotFilling))
        );
    }

    #[test]
    fn full_span_embedding() {
        let builder = PromptBuilder::new(IntentEmbedding::FullSpan);
        let intents = IntentSpan::new(["airport", "flight"]).unwrap();
        let p = builder
            .build(TaskKind::SlotFilling, &utt("a b"), Some(&intents))
            .unwrap();
        assert_eq!(
            p.text,
            "transfer sentence to pairs with intent : airport, intent : flight : a b"
        );
    }

    #[test]
    fn ablated_templates() {
        let u = utt("book a table");
        assert_eq!(
            build_ablated_prompt(TaskKind::SlotFilling, &u)
                .unwrap()
                .text,
            "transfer sentence to pairs : book a table"
        );
        assert_eq!(
            build_ablated_prompt(TaskKind::SlotPrediction, &u)
                .unwrap()
                .text,
            "transfer sentence to slots : book a table"
        );
        assert_eq!(
            build_ablated_prompt(TaskKind::IntentDetection, &u),
            Err(PromptError::NoAblatedIntentDetection)
        );
    }

    #[test]
    fn task_codes() {
        for task in TaskKind::ALL {
            assert_eq!(task.code().parse::<TaskKind>().unwrap(), task);
            let p = build_ablated_prompt(task, &utt("a")).ok();
            if let Some(p) = p {
                assert_eq!(TaskKind::of_prompt(&p.text), Some(task));
            }
        }
        assert_eq!(
            serde_json::to_string(&TaskKind::SlotPrediction).unwrap(),
            "\"SP\""
        );
    }

    proptest! {
        #[test]
        fn utterance_is_the_final_segment(
            words in prop::collection::vec("[a-z']{1,8}", 1..10),
            intents in prop::collection::vec("[a-z]{1,6}( [a-z]{1,6})?", 0..4),
        ) {
            let u = Utterance::new(words).unwrap();
            let span = IntentSpan::new(intents).unwrap();
            for task in [TaskKind::SlotFilling, TaskKind::SlotPrediction] {
                let p = build_prompt(task, &u, Some(&span)).unwrap();
                let (_, suffix) = p.text.rsplit_once(KEY_VALUE_SEPARATOR).unwrap();
                prop_assert_eq!(suffix, u.raw_text());
                prop_assert_eq!(&p, &build_prompt(task, &u, Some(&span)).unwrap());
            }
            let p = build_prompt(TaskKind::IntentDetection, &u, None).unwrap();
            let expected_tail = format!(" : {}", u.raw_text());
            prop_assert!(p.text.ends_with(&expected_tail));
        }
    }
}
