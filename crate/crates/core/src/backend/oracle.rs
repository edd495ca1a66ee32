use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use super::{BackendError, GenerationBackend, GenerationRequest, GenerationResponse};
use crate::belief_span::KEY_VALUE_SEPARATOR;
use crate::dataset::{gold_frame, DatasetError, GoldFrame, RawSample};
use crate::lexicon::LabelLexicon;
use crate::prompt::TaskKind;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("utterances shared by samples with different annotations: {0:?}")]
    Ambiguous(Vec<String>),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Answers prompts built from corpus utterances with the gold target.
///
/// The utterance is located as the suffix of the prompt following one of its
/// ` : ` separators, so SF/SP prompts resolve whatever intents they embed.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    gold: HashMap<String, GoldFrame>,
}

impl OracleBackend {
    pub fn new(corpus: &[RawSample], lexicon: &LabelLexicon) -> Result<Self, OracleError> {
        let mut gold: HashMap<String, GoldFrame> = HashMap::new();
        let mut collisions = BTreeSet::new();
        for sample in corpus {
            let frame = gold_frame(sample, lexicon)?;
            let text = sample.utterance.raw_text();
            match gold.get(text) {
                // exact duplicates are harmless
                Some(existing) if *existing == frame => {}
                Some(_) => {
                    collisions.insert(text.to_string());
                }
                None => {
                    gold.insert(text.to_string(), frame);
                }
            }
        }
        if !collisions.is_empty() {
            return Err(OracleError::Ambiguous(collisions.into_iter().collect()));
        }
        Ok(Self { gold })
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    fn lookup(&self, prompt: &str) -> Option<&GoldFrame> {
        prompt
            .match_indices(KEY_VALUE_SEPARATOR)
            .find_map(|(idx, sep)| self.gold.get(&prompt[idx + sep.len()..]))
    }
}

impl GenerationBackend for OracleBackend {
    fn backend_id(&self) -> &str {
        "oracle"
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let not_found = || BackendError::NotInCorpus(req.prompt.clone());
        let task = TaskKind::of_prompt(&req.prompt).ok_or_else(not_found)?;
        let frame = self.lookup(&req.prompt).ok_or_else(not_found)?;
        Ok(GenerationResponse {
            text: frame.target(task),
            backend_id: self.backend_id().to_string(),
        })
    }
}
