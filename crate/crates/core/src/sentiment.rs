//! Rule-based VADER sentiment scoring, per-group sentiment statistics, and
//! the hate content rate over ingested classifier scores.
//!
//! The scorer follows the NLTK implementation of VADER token for token,
//! including its quirks (a repeated token is always scored at the position
//! of its first occurrence, idioms are only looked up for words with at
//! least three predecessors, and so on), so its compound scores agree with
//! that implementation to floating-point rounding.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::Attribute;
use crate::corpus::CorpusView;
use crate::error::{Error, Result};
use crate::io;

const BUILTIN_LEXICON: &str = include_str!("../data/vader_lexicon.txt");

const B_INCR: f64 = 0.293;
const B_DECR: f64 = -0.293;
const C_INCR: f64 = 0.733;
const N_SCALAR: f64 = -0.74;
const NORMALIZE_ALPHA: f64 = 15.0;

const NEGATE: &[&str] = &[
    "aint", "arent", "cannot", "cant", "couldnt", "darent", "didnt", "doesnt", "ain't", "aren't", "can't",
    "couldn't", "daren't", "didn't", "doesn't", "dont", "hadnt", "hasnt", "havent", "isnt", "mightnt", "mustnt",
    "neither", "don't", "hadn't", "hasn't", "haven't", "isn't", "mightn't", "mustn't", "neednt", "needn't",
    "never", "none", "nope", "nor", "not", "nothing", "nowhere", "oughtnt", "shant", "shouldnt", "uhuh",
    "wasnt", "werent", "oughtn't", "shan't", "shouldn't", "uh-uh", "wasn't", "weren't", "without", "wont",
    "wouldnt", "won't", "wouldn't", "rarely", "seldom", "despite",
];

const BOOSTERS: &[(&str, f64)] = &[
    ("absolutely", B_INCR),
    ("amazingly", B_INCR),
    ("awfully", B_INCR),
    ("completely", B_INCR),
    ("considerably", B_INCR),
    ("decidedly", B_INCR),
    ("deeply", B_INCR),
    ("effing", B_INCR),
    ("enormously", B_INCR),
    ("entirely", B_INCR),
    ("especially", B_INCR),
    ("exceptionally", B_INCR),
    ("extremely", B_INCR),
    ("fabulously", B_INCR),
    ("flipping", B_INCR),
    ("flippin", B_INCR),
    ("fricking", B_INCR),
    ("frickin", B_INCR),
    ("frigging", B_INCR),
    ("friggin", B_INCR),
    ("fully", B_INCR),
    ("fucking", B_INCR),
    ("greatly", B_INCR),
    ("hella", B_INCR),
    ("highly", B_INCR),
    ("hugely", B_INCR),
    ("incredibly", B_INCR),
    ("intensely", B_INCR),
    ("majorly", B_INCR),
    ("more", B_INCR),
    ("most", B_INCR),
    ("particularly", B_INCR),
    ("purely", B_INCR),
    ("quite", B_INCR),
    ("really", B_INCR),
    ("remarkably", B_INCR),
    ("so", B_INCR),
    ("substantially", B_INCR),
    ("thoroughly", B_INCR),
    ("totally", B_INCR),
    ("tremendously", B_INCR),
    ("uber", B_INCR),
    ("unbelievably", B_INCR),
    ("unusually", B_INCR),
    ("utterly", B_INCR),
    ("very", B_INCR),
    ("almost", B_DECR),
    ("barely", B_DECR),
    ("hardly", B_DECR),
    ("just enough", B_DECR),
    ("kind of", B_DECR),
    ("kinda", B_DECR),
    ("kindof", B_DECR),
    ("kind-of", B_DECR),
    ("less", B_DECR),
    ("little", B_DECR),
    ("marginally", B_DECR),
    ("occasionally", B_DECR),
    ("partly", B_DECR),
    ("scarcely", B_DECR),
    ("slightly", B_DECR),
    ("somewhat", B_DECR),
    ("sort of", B_DECR),
    ("sorta", B_DECR),
    ("sortof", B_DECR),
    ("sort-of", B_DECR),
];

const IDIOMS: &[(&str, f64)] = &[
    ("the shit", 3.0),
    ("the bomb", 3.0),
    ("bad ass", 1.5),
    ("yeah right", -2.0),
    ("cut the mustard", 2.0),
    ("kiss of death", -1.5),
    ("hand to mouth", -2.0),
];

/// Punctuation stripped from either end of a token when the remainder is a word.
const PUNC_LIST: &[&str] = &[
    ".", "!", "?", ",", ";", ":", "-", "'", "\"", "!!", "!!!", "??", "???", "?!?", "!?!", "?!?!", "!?!?",
];

#[derive(Debug, Clone, Default)]
pub struct SentimentLexicon {
    valence: HashMap<String, f64>,
    boosters: HashMap<String, f64>,
    negations: HashSet<String>,
    idioms: HashMap<String, f64>,
}

impl SentimentLexicon {
    /// Parses `token<TAB>mean<TAB>...` lines (only the first two columns are
    /// read; a later line for the same token wins) and attaches the standard
    /// booster, negation and idiom tables.
    pub fn parse(text: &str) -> Result<Self> {
        let mut valence = HashMap::new();
        for (row, line) in io::numbered_lines(text) {
            let mut cols = line.trim().split('\t');
            let token = cols.next().unwrap_or_default();
            let value = cols
                .next()
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Record {
                    source_name: "sentiment lexicon".into(),
                    row,
                    message: "expected `token<TAB>valence`".into(),
                })?;
            valence.insert(token.to_string(), value);
        }
        Ok(SentimentLexicon {
            valence,
            boosters: BOOSTERS.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            negations: NEGATE.iter().map(|s| s.to_string()).collect(),
            idioms: IDIOMS.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&io::read_to_string(path)?)
    }

    /// The published VADER lexicon.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_LEXICON).expect("builtin lexicon is valid")
    }

    pub fn len(&self) -> usize {
        self.valence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valence.is_empty()
    }

    pub fn valence(&self, token: &str) -> Option<f64> {
        self.valence.get(token).copied()
    }

    /// A copy with every valence negated.
    pub fn negated_valences(&self) -> Self {
        let mut out = self.clone();
        out.valence.values_mut().for_each(|v| *v = -*v);
        out
    }

    fn negated(&self, word: &str) -> bool {
        let lower = word.to_lowercase();
        self.negations.contains(&lower) || lower.contains("n't")
    }

    fn scalar_inc_dec(&self, word: &str, valence: f64, cap_diff: bool) -> f64 {
        let Some(&b) = self.boosters.get(&word.to_lowercase()) else {
            return 0.0;
        };
        let mut scalar = if valence < 0.0 { -b } else { b };
        if is_upper(word) && cap_diff {
            if valence > 0.0 {
                scalar += C_INCR;
            } else {
                scalar -= C_INCR;
            }
        }
        scalar
    }
}

/// Whitespace as understood by Python's `str.split()`.
fn is_split_space(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

fn is_titlecase(c: char) -> bool {
    matches!(c,
        '\u{1c5}' | '\u{1c8}' | '\u{1cb}' | '\u{1f2}'
        | '\u{1f88}'..='\u{1f8f}' | '\u{1f98}'..='\u{1f9f}' | '\u{1fa8}'..='\u{1faf}'
        | '\u{1fbc}' | '\u{1fcc}' | '\u{1ffc}')
}

/// Python's `str.isupper()`: at least one cased character and none lowercase.
fn is_upper(s: &str) -> bool {
    let mut cased = false;
    for c in s.chars() {
        if c.is_lowercase() || is_titlecase(c) {
            return false;
        }
        if c.is_uppercase() {
            cased = true;
        }
    }
    cased
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Tokens with leading or trailing punctuation removed where the remainder
/// is a word of the punctuation-free text; emoticons and contractions stay.
fn words_and_emoticons(text: &str) -> Vec<String> {
    let stripped: String = text.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let words: HashSet<&str> = stripped
        .split(is_split_space)
        .filter(|w| char_len(w) > 1)
        .collect();
    text.split(is_split_space)
        .filter(|w| char_len(w) > 1)
        .map(|tok| {
            for p in PUNC_LIST {
                if let Some(rest) = tok.strip_prefix(p) {
                    if words.contains(rest) {
                        return rest.to_string();
                    }
                }
                if let Some(rest) = tok.strip_suffix(p) {
                    if words.contains(rest) {
                        return rest.to_string();
                    }
                }
            }
            tok.to_string()
        })
        .collect()
}

/// True when some but not all tokens are ALL CAPS.
fn allcap_differential(words: &[String]) -> bool {
    let caps = words.iter().filter(|w| is_upper(w)).count();
    let diff = words.len() - caps;
    0 < diff && diff < words.len()
}

struct Sentence<'a> {
    lex: &'a SentimentLexicon,
    words: Vec<String>,
    lower: Vec<String>,
    cap_diff: bool,
}

impl Sentence<'_> {
    fn in_lexicon(&self, i: usize) -> bool {
        self.lex.valence.contains_key(&self.lower[i])
    }

    fn valence_at(&self, item: &str, i: usize) -> f64 {
        let item_lower = item.to_lowercase();
        let Some(mut valence) = self.lex.valence(&item_lower) else {
            return 0.0;
        };
        if is_upper(item) && self.cap_diff {
            if valence > 0.0 {
                valence += C_INCR;
            } else {
                valence -= C_INCR;
            }
        }
        for start in 0..3 {
            if i > start && !self.in_lexicon(i - (start + 1)) {
                let mut s = self.lex.scalar_inc_dec(&self.words[i - (start + 1)], valence, self.cap_diff);
                if start == 1 && s != 0.0 {
                    s *= 0.95;
                }
                if start == 2 && s != 0.0 {
                    s *= 0.9;
                }
                valence += s;
                valence = self.never_check(valence, start, i);
                if start == 2 {
                    valence = self.idioms_check(valence, i);
                }
            }
        }
        self.least_check(valence, i)
    }

    fn never_check(&self, valence: f64, start: usize, i: usize) -> f64 {
        let w = &self.words;
        let so_this = |s: &str| s == "so" || s == "this";
        match start {
            0 if self.lex.negated(&w[i - 1]) => valence * N_SCALAR,
            1 if w[i - 2] == "never" && so_this(&w[i - 1]) => valence * 1.5,
            1 if self.lex.negated(&w[i - 2]) => valence * N_SCALAR,
            2 if (w[i - 3] == "never" && so_this(&w[i - 2])) || so_this(&w[i - 1]) => valence * 1.25,
            2 if self.lex.negated(&w[i - 3]) => valence * N_SCALAR,
            _ => valence,
        }
    }

    fn idioms_check(&self, mut valence: f64, i: usize) -> f64 {
        let w = &self.words;
        let onezero = format!("{} {}", w[i - 1], w[i]);
        let twoonezero = format!("{} {} {}", w[i - 2], w[i - 1], w[i]);
        let twoone = format!("{} {}", w[i - 2], w[i - 1]);
        let threetwoone = format!("{} {} {}", w[i - 3], w[i - 2], w[i - 1]);
        let threetwo = format!("{} {}", w[i - 3], w[i - 2]);
        for seq in [&onezero, &twoonezero, &twoone, &threetwoone, &threetwo] {
            if let Some(&v) = self.lex.idioms.get(seq.as_str()) {
                valence = v;
                break;
            }
        }
        if w.len() - 1 > i {
            if let Some(&v) = self.lex.idioms.get(&format!("{} {}", w[i], w[i + 1])) {
                valence = v;
            }
        }
        if w.len() - 1 > i + 1 {
            if let Some(&v) = self.lex.idioms.get(&format!("{} {} {}", w[i], w[i + 1], w[i + 2])) {
                valence = v;
            }
        }
        if self.lex.boosters.contains_key(&threetwo) || self.lex.boosters.contains_key(&twoone) {
            valence += B_DECR;
        }
        valence
    }

    fn least_check(&self, valence: f64, i: usize) -> f64 {
        let prev_is_least = |j: usize| !self.in_lexicon(j) && self.lower[j] == "least";
        if i > 1 && prev_is_least(i - 1) {
            if self.lower[i - 2] != "at" && self.lower[i - 2] != "very" {
                return valence * N_SCALAR;
            }
            valence
        } else if i > 0 && prev_is_least(i - 1) {
            valence * N_SCALAR
        } else {
            valence
        }
    }
}

fn punctuation_emphasis(text: &str) -> f64 {
    let ep = text.matches('!').count().min(4);
    let qm = text.matches('?').count();
    let qm_amp = match qm {
        0 | 1 => 0.0,
        2 | 3 => qm as f64 * 0.18,
        _ => 0.96,
    };
    ep as f64 * 0.292 + qm_amp
}

/// Summed adjusted valence before punctuation emphasis and normalization.
pub fn raw_valence_sum(text: &str, lex: &SentimentLexicon) -> Option<f64> {
    let words = words_and_emoticons(text);
    if words.is_empty() {
        return None;
    }
    let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
    let cap_diff = allcap_differential(&words);
    let sentence = Sentence {
        lex,
        words,
        lower,
        cap_diff,
    };
    let mut first: HashMap<&str, usize> = HashMap::new();
    for (i, w) in sentence.words.iter().enumerate() {
        first.entry(w.as_str()).or_insert(i);
    }
    let n = sentence.words.len();
    let mut sentiments: Vec<f64> = sentence
        .words
        .iter()
        .map(|item| {
            let i = first[item.as_str()];
            let lower = &sentence.lower[i];
            let kind_of = i < n - 1 && lower == "kind" && sentence.lower[i + 1] == "of";
            if kind_of || lex.boosters.contains_key(lower) {
                0.0
            } else {
                sentence.valence_at(item, i)
            }
        })
        .collect();
    if let Some(bi) = sentence.lower.iter().position(|w| w == "but") {
        for (idx, s) in sentiments.iter_mut().enumerate() {
            if idx < bi {
                *s *= 0.5;
            } else if idx > bi {
                *s *= 1.5;
            }
        }
    }
    Some(sentiments.iter().fold(0.0, |acc, s| acc + s))
}

/// VADER compound score in [−1, 1] (not rounded).
pub fn vader_compound(text: &str, lex: &SentimentLexicon) -> f64 {
    let Some(mut sum) = raw_valence_sum(text, lex) else {
        return 0.0;
    };
    let amp = punctuation_emphasis(text);
    if sum > 0.0 {
        sum += amp;
    } else if sum < 0.0 {
        sum -= amp;
    }
    sum / (sum * sum + NORMALIZE_ALPHA).sqrt()
}

/// Scores every caption of the corpus, in image order.
pub fn score_captions(corpus: &CorpusView, lex: &SentimentLexicon) -> Vec<f64> {
    corpus
        .images()
        .par_iter()
        .map(|im| vader_compound(&im.alt_text, lex))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub group: String,
    /// count(compound < 0) / count(compound ≠ 0)
    pub negative_ratio: f64,
    pub mean_compound: f64,
    pub counted: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSentiment {
    pub attribute: Attribute,
    pub rows: Vec<GroupRow>,
    /// Groups without a single non-neutral caption.
    pub empty_groups: Vec<String>,
}

/// Sentiment per image-level group (mixed/unclear excluded), ignoring
/// captions with a compound score of exactly zero. `scores[i]` belongs to
/// image `i`.
pub fn group_sentiment(corpus: &CorpusView, scores: &[f64], attr: Attribute) -> Result<GroupSentiment> {
    if scores.len() != corpus.images().len() {
        return Err(Error::DimensionMismatch {
            expected: corpus.images().len(),
            got: scores.len(),
        });
    }
    let mut acc: BTreeMap<&str, (u64, u64, f64)> = attr.support().into_iter().map(|g| (g, (0, 0, 0.0))).collect();
    for (im, &s) in corpus.images().iter().zip(scores) {
        if s == 0.0 {
            continue;
        }
        let label = match attr {
            Attribute::Gender => im.image_gender.as_str(),
            Attribute::Race => im.image_race.as_str(),
        };
        if let Some((n, neg, sum)) = acc.get_mut(label) {
            *n += 1;
            *neg += u64::from(s < 0.0);
            *sum += s;
        }
    }
    let mut rows = Vec::new();
    let mut empty_groups = Vec::new();
    for (g, (n, neg, sum)) in acc {
        if n == 0 {
            empty_groups.push(g.to_string());
        } else {
            rows.push(GroupRow {
                group: g.to_string(),
                negative_ratio: neg as f64 / n as f64,
                mean_compound: sum / n as f64,
                counted: n,
            });
        }
    }
    Ok(GroupSentiment {
        attribute: attr,
        rows,
        empty_groups,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub image_id: String,
    pub compound: f64,
}

pub fn scores_to_ndjson(records: &[ScoreRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("score serializes") + "\n")
        .collect()
}

pub fn parse_scores(text: &str) -> Result<Vec<ScoreRecord>> {
    parse_ndjson(text, "score cache", |r: &ScoreRecord| {
        (r.compound.is_finite() && (-1.0..=1.0).contains(&r.compound))
            .then_some(())
            .ok_or("compound outside [-1, 1]")
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HateKind {
    Hateful,
    Targeted,
    Aggressive,
}

impl HateKind {
    pub const ALL: [HateKind; 3] = [HateKind::Hateful, HateKind::Targeted, HateKind::Aggressive];

    pub fn as_str(self) -> &'static str {
        match self {
            HateKind::Hateful => "hateful",
            HateKind::Targeted => "targeted",
            HateKind::Aggressive => "aggressive",
        }
    }
}

impl FromStr for HateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HateKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown hate score type `{s}`")))
    }
}

impl fmt::Display for HateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HateScore {
    pub image_id: String,
    pub hateful: f64,
    pub targeted: f64,
    pub aggressive: f64,
}

impl HateScore {
    pub fn get(&self, kind: HateKind) -> f64 {
        match kind {
            HateKind::Hateful => self.hateful,
            HateKind::Targeted => self.targeted,
            HateKind::Aggressive => self.aggressive,
        }
    }
}

pub fn parse_hate_scores(text: &str) -> Result<Vec<HateScore>> {
    parse_ndjson(text, "hate scores", |r: &HateScore| {
        HateKind::ALL
            .iter()
            .all(|&k| (0.0..=1.0).contains(&r.get(k)))
            .then_some(())
            .ok_or("score outside [0, 1]")
    })
}

fn parse_ndjson<T, F>(text: &str, source_name: &str, check: F) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    F: Fn(&T) -> std::result::Result<(), &'static str>,
{
    io::numbered_lines(text)
        .into_iter()
        .map(|(row, line)| {
            let err = |message: String| Error::Record {
                source_name: source_name.to_string(),
                row,
                message,
            };
            let rec: T = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            check(&rec).map_err(|m| err(m.to_string()))?;
            Ok(rec)
        })
        .collect()
}

/// Percentage of scores strictly above `tau`.
pub fn hcr(scores: &[HateScore], kind: HateKind, tau: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("hate scores".into()));
    }
    let above = scores.iter().filter(|s| s.get(kind) > tau).count();
    Ok(100.0 * above as f64 / scores.len() as f64)
}
