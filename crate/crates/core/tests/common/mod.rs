#![allow(dead_code)]

use std::path::PathBuf;

use prompt_slu::dataset::{parse_corpus, register_corpus_labels, CorpusSplits, RawSample, Split};
use prompt_slu::LabelLexicon;

/// Sample counts of the bundled mini-corpus.
pub const MINI_COUNTS: [(Split, usize); 3] =
    [(Split::Train, 12), (Split::Dev, 4), (Split::Test, 4)];

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn mini_corpus() -> CorpusSplits {
    CorpusSplits::load_dir(data_dir().join("mini")).expect("mini-corpus loads")
}

pub fn lexicon_for<'a>(samples: impl IntoIterator<Item = &'a RawSample>) -> LabelLexicon {
    let mut lexicon = LabelLexicon::empty();
    register_corpus_labels(&mut lexicon, samples).expect("labels register");
    lexicon
}

pub const CASE_ONE_TEXT: &str = "describe pittsburgh airport and then list flights from denver to san francisco no denver to philadelphia";
pub const CASE_TWO_TEXT: &str =
    "what are the costs of car rental in dallas and also ground transportation denver";

/// The two case-study utterances with their gold annotation.
pub fn case_study() -> Vec<RawSample> {
    let source = "\
describe O
pittsburgh B-airport_name
airport I-airport_name
and O
then O
list O
flights O
from O
denver B-fromloc.city_name
to O
san B-toloc.city_name
francisco I-toloc.city_name
no O
denver O
to O
philadelphia B-toloc.city_name
atis_airport#atis_flight

what O
are O
the O
costs O
of O
car B-transport_type
rental I-transport_type
in O
dallas B-city_name
and O
also O
ground O
transportation O
denver B-city_name
atis_ground_service#atis_ground_fare
";
    parse_corpus(source, "case").expect("case study parses")
}
