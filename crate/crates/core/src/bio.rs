//! Conversion between BIO-tagged token sequences and ordered slot-value pairs.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::belief_span::{PairSpan, SlotValuePair, SpanError};
use crate::lexicon::{LabelLexicon, LexiconError, Namespace};

#[derive(Debug, Error)]
pub enum BioError {
    #[error("utterance has no tokens")]
    EmptyUtterance,
    #[error("token {0:?} is empty or contains whitespace")]
    InvalidToken(String),
    #[error("malformed tag {0:?}")]
    MalformedTag(String),
    #[error("{tokens} tokens but {tags} tags")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error("chunk cannot be encoded as a slot-value pair: {0}")]
    Span(#[from] SpanError),
}

/// A tokenized utterance. `raw_text` is always the tokens joined by single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Utterance {
    tokens: Vec<String>,
    raw_text: String,
}

impl Utterance {
    pub fn new<I, S>(tokens: I) -> Result<Self, BioError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(BioError::EmptyUtterance);
        }
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(BioError::InvalidToken(bad.clone()));
        }
        let raw_text = tokens.join(" ");
        Ok(Self { tokens, raw_text })
    }

    /// Tokenizes on whitespace.
    pub fn from_text(text: &str) -> Result<Self, BioError> {
        Self::new(text.split_whitespace())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BioTag {
    Outside,
    Begin(String),
    Inside(String),
}

impl BioTag {
    pub fn slot(&self) -> Option<&str> {
        match self {
            BioTag::Outside => None,
            BioTag::Begin(s) | BioTag::Inside(s) => Some(s),
        }
    }
}

impl FromStr for BioTag {
    type Err = BioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(BioTag::Outside);
        }
        let malformed = || BioError::MalformedTag(s.to_string());
        let (prefix, slot) = s.split_once('-').ok_or_else(malformed)?;
        if slot.is_empty() || slot.chars().any(char::is_whitespace) {
            return Err(malformed());
        }
        match prefix {
            "B" => Ok(BioTag::Begin(slot.to_string())),
            "I" => Ok(BioTag::Inside(slot.to_string())),
            _ => Err(malformed()),
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioTag::Outside => f.write_str("O"),
            BioTag::Begin(s) => write!(f, "B-{s}"),
            BioTag::Inside(s) => write!(f, "I-{s}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BioSequence(Vec<BioTag>);

impl BioSequence {
    pub fn new(tags: Vec<BioTag>) -> Self {
        Self(tags)
    }

    pub fn outside(len: usize) -> Self {
        Self(vec![BioTag::Outside; len])
    }

    pub fn parse<'a, I>(tags: I) -> Result<Self, BioError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        tags.into_iter()
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }

    pub fn tags(&self) -> &[BioTag] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Raw slot labels carried by this sequence, in order, with repeats.
    pub fn slot_labels(&self) -> impl Iterator<Item = &str> {
        self.0.iter().filter_map(BioTag::slot)
    }
}

/// A contiguous tagged span `[start, end)` with its raw slot label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub slot: String,
    pub start: usize,
    pub end: usize,
}

/// Chunks in start order plus the number of orphan `I-` tags that had to be
/// treated as chunk starts.
pub fn extract_chunks(
    utt: &Utterance,
    tags: &BioSequence,
) -> Result<(Vec<Chunk>, usize), BioError> {
    if utt.len() != tags.len() {
        return Err(BioError::LengthMismatch {
            tokens: utt.len(),
            tags: tags.len(),
        });
    }
    let mut chunks: Vec<Chunk> = Vec::new();
    let mut open = false;
    let mut repairs = 0;
    for (i, tag) in tags.tags().iter().enumerate() {
        match tag {
            BioTag::Outside => open = false,
            BioTag::Begin(slot) => {
                chunks.push(Chunk {
                    slot: slot.clone(),
                    start: i,
                    end: i + 1,
                });
                open = true;
            }
            BioTag::Inside(slot) => match chunks.last_mut() {
                Some(last) if open && last.slot == *slot => last.end = i + 1,
                _ => {
                    repairs += 1;
                    chunks.push(Chunk {
                        slot: slot.clone(),
                        start: i,
                        end: i + 1,
                    });
                    open = true;
                }
            },
        }
    }
    Ok((chunks, repairs))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioConversion {
    pub pairs: PairSpan,
    pub repairs: usize,
}

/// Extracts slot-value pairs in order of appearance, with slots rendered
/// through the lexicon.
pub fn bio_to_pairs(
    utt: &Utterance,
    tags: &BioSequence,
    lexicon: &LabelLexicon,
) -> Result<BioConversion, BioError> {
    let (chunks, repairs) = extract_chunks(utt, tags)?;
    let pairs = chunks
        .iter()
        .map(|chunk| {
            let slot = lexicon.describe(Namespace::Slot, &chunk.slot)?;
            let value = utt.tokens()[chunk.start..chunk.end].join(" ");
            Ok(SlotValuePair::new(slot, value)?)
        })
        .collect::<Result<PairSpan, BioError>>()?;
    Ok(BioConversion { pairs, repairs })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagAlignment {
    pub tags: BioSequence,
    /// Pairs whose value was not found or whose slot the lexicon does not know.
    pub unmatched: usize,
}

/// Places each pair on the leftmost still-untagged token run equal to its value.
pub fn pairs_to_bio(utt: &Utterance, span: &PairSpan, lexicon: &LabelLexicon) -> TagAlignment {
    let tokens = utt.tokens();
    let mut tags = vec![BioTag::Outside; tokens.len()];
    let mut taken = vec![false; tokens.len()];
    let mut unmatched = 0;

    for pair in span.pairs() {
        let raw = lexicon.unlabel(Namespace::Slot, pair.slot());
        if !raw.is_known() {
            unmatched += 1;
            continue;
        }
        let value: Vec<&str> = pair.value().split(' ').collect();
        let width = value.len();
        let found = (0..=tokens.len().saturating_sub(width)).find(|&start| {
            start + width <= tokens.len()
                && (start..start + width).all(|i| !taken[i] && tokens[i] == value[i - start])
        });
        match found {
            Some(start) => {
                let raw = raw.into_string();
                tags[start] = BioTag::Begin(raw.clone());
                for tag in &mut tags[start + 1..start + width] {
                    *tag = BioTag::Inside(raw.clone());
                }
                taken[start..start + width].fill(true);
            }
            None => unmatched += 1,
        }
    }
    TagAlignment {
        tags: BioSequence(tags),
        unmatched,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn utt(text: &str) -> Utterance {
        Utterance::from_text(text).unwrap()
    }

    fn tags(text: &str) -> BioSequence {
        BioSequence::parse(text.split_whitespace()).unwrap()
    }

    fn lexicon_for(seq: &BioSequence) -> LabelLexicon {
        let mut lex = LabelLexicon::empty();
        lex.register_inventory(Namespace::Slot, seq.slot_labels())
            .unwrap();
        lex
    }

    const CASE_ONE: &str = "describe pittsburgh airport and then list flights from denver to san francisco no denver to philadelphia";
    const CASE_ONE_TAGS: &str = "O B-airport_name I-airport_name O O O O O B-fromloc.city_name O B-toloc.city_name I-toloc.city_name O O O B-toloc.city_name";

    #[test]
    fn utterance_validation() {
        assert!(matches!(
            Utterance::new(Vec::<String>::new()),
            Err(BioError::EmptyUtterance)
        ));
        assert!(matches!(
            Utterance::new(["a b"]),
            Err(BioError::InvalidToken(_))
        ));
        assert_eq!(utt("show  me\tflights").raw_text(), "show me flights");
    }

    #[test]
    fn tag_parsing() {
        assert_eq!("O".parse::<BioTag>().unwrap(), BioTag::Outside);
        assert_eq!(
            "B-fromloc.city_name".parse::<BioTag>().unwrap(),
            BioTag::Begin("fromloc.city_name".into())
        );
        for bad in ["B-", "X-city", "B", "o", ""] {
            assert!(bad.parse::<BioTag>().is_err(), "{bad}");
        }
        assert_eq!(BioTag::Inside("x".into()).to_string(), "I-x");
    }

    #[test]
    fn extracts_case_study_pairs() {
        let u = utt(CASE_ONE);
        let t = tags(CASE_ONE_TAGS);
        let conv = bio_to_pairs(&u, &t, &LabelLexicon::empty()).unwrap();
        assert_eq!(conv.repairs, 0);
        assert_eq!(
            conv.pairs.serialize(),
            "airport name : pittsburgh airport, fromloc city name : denver, \
             toloc city name : san francisco, toloc city name : philadelphia"
        );
        let back = pairs_to_bio(&u, &conv.pairs, &lexicon_for(&t));
        assert_eq!(back.unmatched, 0);
        assert_eq!(back.tags, t);
    }

    #[test]
    fn all_outside_is_empty() {
        let conv = bio_to_pairs(&utt("a b c"), &tags("O O O"), &LabelLexicon::empty()).unwrap();
        assert!(conv.pairs.is_empty());
        let back = pairs_to_bio(&utt("a b c"), &PairSpan::empty(), &LabelLexicon::empty());
        assert_eq!(back.tags, BioSequence::outside(3));
    }

    #[test]
    fn orphan_inside_is_repaired() {
        let conv = bio_to_pairs(
            &utt("in dallas please"),
            &tags("O I-city_name O"),
            &LabelLexicon::empty(),
        )
        .unwrap();
        assert_eq!(conv.repairs, 1);
        assert_eq!(conv.pairs.serialize(), "city name : dallas");

        // I- of a different slot after a chunk also starts a new chunk
        let (chunks, repairs) = extract_chunks(&utt("a b c"), &tags("B-x I-y I-y")).unwrap();
        assert_eq!(repairs, 1);
        assert_eq!(chunks.len(), 2);
        assert_eq!((chunks[1].start, chunks[1].end), (1, 3));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            bio_to_pairs(&utt("a b"), &tags("O"), &LabelLexicon::empty()),
            Err(BioError::LengthMismatch { tokens: 2, tags: 1 })
        ));
    }

    #[test]
    fn unmatched_values_and_unknown_slots() {
        let mut lex = LabelLexicon::empty();
        lex.register_inventory(Namespace::Slot, ["city_name"])
            .unwrap();
        let span = PairSpan::new(vec![SlotValuePair::new("city name", "xyzzy").unwrap()]);
        let out = pairs_to_bio(&utt("fly to denver"), &span, &lex);
        assert_eq!(out.unmatched, 1);
        assert_eq!(out.tags, BioSequence::outside(3));

        let span = PairSpan::new(vec![SlotValuePair::new("mystery", "denver").unwrap()]);
        assert_eq!(
            pairs_to_bio(&utt("fly to denver"), &span, &lex).unmatched,
            1
        );
    }

    #[test]
    fn repeated_value_resolves_leftmost() {
        let mut lex = LabelLexicon::empty();
        lex.register_inventory(Namespace::Slot, ["x", "y"]).unwrap();
        let span = PairSpan::new(vec![
            SlotValuePair::new("x", "a").unwrap(),
            SlotValuePair::new("y", "a").unwrap(),
        ]);
        let out = pairs_to_bio(&utt("a b a"), &span, &lex);
        assert_eq!(out.tags, tags("B-x O B-y"));
    }

    /// Random well-formed tags over a small, repetitive vocabulary.
    fn tagged_with_repeats() -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
        prop::collection::vec(
            (
                0..4usize,
                prop::sample::select(vec!["a", "b", "c"]),
                1..3usize,
            ),
            1..12,
        )
        .prop_map(|segments| {
            let mut tokens = Vec::new();
            let mut tags = Vec::new();
            for (kind, word, width) in segments {
                for i in 0..width {
                    tokens.push(word.to_string());
                    tags.push(match (kind, i) {
                        (0, _) => "O".to_string(),
                        (k, 0) => format!("B-s{k}"),
                        (k, _) => format!("I-s{k}"),
                    });
                }
            }
            (tokens, tags)
        })
    }

    proptest! {
        #[test]
        fn pairs_survive_realignment((tokens, raw_tags) in tagged_with_repeats()) {
            let u = Utterance::new(tokens).unwrap();
            let t = BioSequence::parse(raw_tags.iter().map(String::as_str)).unwrap();
            let lex = lexicon_for(&t);
            let conv = bio_to_pairs(&u, &t, &lex).unwrap();
            prop_assert_eq!(conv.repairs, 0);
            let begins = t.tags().iter().filter(|t| matches!(t, BioTag::Begin(_))).count();
            prop_assert_eq!(conv.pairs.len(), begins);
            for p in conv.pairs.pairs() {
                prop_assert!(u.raw_text().contains(p.value()));
            }
            // repeated values can move, but the multiset of pairs is kept
            let back = pairs_to_bio(&u, &conv.pairs, &lex);
            prop_assert_eq!(back.unmatched, 0);
            let mut again = bio_to_pairs(&u, &back.tags, &lex).unwrap().pairs.into_pairs();
            let mut orig = conv.pairs.into_pairs();
            again.sort();
            orig.sort();
            prop_assert_eq!(again, orig);
        }
    }
}
