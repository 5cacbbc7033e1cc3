//! Composition and co-occurrence statistics over an annotated corpus:
//! label distributions, box histograms, keyword-subset relative change (Δ)
//! and country mention counts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{CorpusView, Gender, Race};
use crate::error::{Error, Result};
use crate::io;
use crate::textindex::{InvertedIndex, KeywordQuery, LemmaDictionary};

pub const BUILTIN_CRIME_KEYWORDS: &str = include_str!("../data/crime_keywords.txt");
pub const BUILTIN_COUNTRIES: &str = include_str!("../data/countries.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Attribute {
    Gender,
    Race,
}

impl Attribute {
    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Gender => "gender",
            Attribute::Race => "race",
        }
    }

    /// Every label of the attribute, including mixed/unclear.
    pub fn categories(self) -> Vec<&'static str> {
        match self {
            Attribute::Gender => Gender::ALL.iter().map(|g| g.as_str()).collect(),
            Attribute::Race => Race::ALL.iter().map(|r| r.as_str()).collect(),
        }
    }

    /// Labels that form the Δ support (male/female, or the known races).
    pub fn support(self) -> Vec<&'static str> {
        match self {
            Attribute::Gender => vec![Gender::Female.as_str(), Gender::Male.as_str()],
            Attribute::Race => Race::KNOWN.iter().map(|r| r.as_str()).collect(),
        }
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gender" => Ok(Attribute::Gender),
            "race" => Ok(Attribute::Race),
            _ => Err(Error::invalid(format!("unknown attribute `{s}`"))),
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Box,
    Image,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Box => "box",
            Level::Image => "image",
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(Level::Box),
            "image" => Ok(Level::Image),
            _ => Err(Error::invalid(format!("unknown level `{s}`"))),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Category counts and their shares of the total.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Distribution {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl Distribution {
    pub fn from_counts<I, S>(counts: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut d = Distribution::default();
        for (k, c) in counts {
            *d.counts.entry(k.into()).or_default() += c;
            d.total += c;
        }
        d
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, category: &str) -> u64 {
        self.counts.get(category).copied().unwrap_or(0)
    }

    /// Share of `category`; 0 when the distribution is empty.
    pub fn share(&self, category: &str) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(category) as f64 / self.total as f64
        }
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn shares(&self) -> BTreeMap<String, f64> {
        self.counts.keys().map(|k| (k.clone(), self.share(k))).collect()
    }
}

fn label_of(corpus: &CorpusView, attr: Attribute, level: Level, i: usize) -> &'static str {
    match (attr, level) {
        (Attribute::Gender, Level::Box) => corpus.boxes()[i].gender.as_str(),
        (Attribute::Race, Level::Box) => corpus.boxes()[i].race.as_str(),
        (Attribute::Gender, Level::Image) => corpus.images()[i].image_gender.as_str(),
        (Attribute::Race, Level::Image) => corpus.images()[i].image_race.as_str(),
    }
}

fn count_labels(
    corpus: &CorpusView,
    attr: Attribute,
    level: Level,
    units: impl IndexedParallelIterator<Item = usize>,
) -> BTreeMap<&'static str, u64> {
    let cats = attr.categories();
    let counts = units
        .fold(
            || vec![0u64; cats.len()],
            |mut acc, i| {
                let label = label_of(corpus, attr, level, i);
                let pos = cats.iter().position(|c| *c == label).expect("closed label set");
                acc[pos] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; cats.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    cats.into_iter().zip(counts).collect()
}

/// Counts every box (or image) by its label, including mixed and unclear.
pub fn composition(corpus: &CorpusView, attr: Attribute, level: Level) -> Result<Distribution> {
    let n = match level {
        Level::Box => corpus.boxes().len(),
        Level::Image => corpus.images().len(),
    };
    if n == 0 {
        return Err(Error::Empty(format!("no {}s in corpus", level.as_str())));
    }
    Ok(Distribution::from_counts(count_labels(corpus, attr, level, (0..n).into_par_iter())))
}

pub const AREA_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoxStats {
    /// Boxes per 10% band of box-area / image-area; the last band includes 1.0.
    pub area_bins: [u64; AREA_BINS],
    /// Number of images per box count.
    pub count_hist: BTreeMap<usize, u64>,
    pub max_count: usize,
    pub images: usize,
    pub boxes: usize,
}

impl BoxStats {
    /// Fraction of boxes whose area ratio is below `bins / 10`.
    pub fn fraction_below(&self, bins: usize) -> f64 {
        if self.boxes == 0 {
            return 0.0;
        }
        self.area_bins[..bins.min(AREA_BINS)].iter().sum::<u64>() as f64 / self.boxes as f64
    }
}

/// Band index of `(w·h)/(width·height)` in exact integer arithmetic.
pub fn area_bin(w: u32, h: u32, width: u32, height: u32) -> usize {
    let num = 10 * u128::from(w) * u128::from(h);
    let den = u128::from(width) * u128::from(height);
    ((num / den) as usize).min(AREA_BINS - 1)
}

pub fn box_stats(corpus: &CorpusView) -> BoxStats {
    let mut s = BoxStats {
        images: corpus.images().len(),
        boxes: corpus.boxes().len(),
        ..BoxStats::default()
    };
    for (i, im) in corpus.images().iter().enumerate() {
        let n = corpus.box_count(i);
        *s.count_hist.entry(n).or_default() += 1;
        s.max_count = s.max_count.max(n);
        for b in corpus.boxes_of(i) {
            s.area_bins[area_bin(b.w, b.h, im.width, im.height)] += 1;
        }
    }
    s
}

/// A named list of keyword queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSet {
    pub name: String,
    pub queries: Vec<KeywordQuery>,
}

impl KeywordSet {
    /// One phrase per line; `#` comments and blank lines are ignored.
    pub fn parse(name: &str, text: &str, dict: &LemmaDictionary) -> Result<Self> {
        let queries = io::parse_list(text)
            .iter()
            .map(|p| KeywordQuery::new(p, dict))
            .collect::<Result<Vec<_>>>()?;
        if queries.is_empty() {
            return Err(Error::Empty(format!("keyword set `{name}`")));
        }
        Ok(KeywordSet {
            name: name.to_string(),
            queries,
        })
    }

    pub fn builtin_crime(dict: &LemmaDictionary) -> Self {
        KeywordSet::parse("crime", BUILTIN_CRIME_KEYWORDS, dict).expect("builtin keywords are valid")
    }

    /// Every indexed term as a single-lemma query.
    pub fn vocabulary(index: &InvertedIndex, dict: &LemmaDictionary) -> Result<Self> {
        let queries = index
            .terms()
            .filter_map(|t| KeywordQuery::new(t, dict).ok())
            .collect::<Vec<_>>();
        if queries.is_empty() {
            return Err(Error::Empty("index vocabulary".into()));
        }
        Ok(KeywordSet {
            name: "vocabulary".into(),
            queries,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRow {
    pub category: String,
    pub baseline_count: u64,
    pub baseline_share: f64,
    pub subset_count: u64,
    pub subset_share: f64,
    /// `None` when the baseline share is zero or the subset is empty.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaReport {
    pub attribute: Attribute,
    pub level: Level,
    pub keyword_set: String,
    /// Images whose caption matched at least one keyword.
    pub matched_images: usize,
    pub baseline_total: u64,
    pub subset_total: u64,
    pub rows: Vec<DeltaRow>,
}

fn delta_rows(attr: Attribute, baseline: &Distribution, subset: &Distribution) -> Vec<DeltaRow> {
    attr.support()
        .into_iter()
        .map(|c| {
            let (bs, ss) = (baseline.share(c), subset.share(c));
            DeltaRow {
                category: c.to_string(),
                baseline_count: baseline.count(c),
                baseline_share: bs,
                subset_count: subset.count(c),
                subset_share: ss,
                delta: (bs > 0.0 && subset.total() > 0).then(|| ss / bs - 1.0),
            }
        })
        .collect()
}

fn restrict(counts: BTreeMap<&'static str, u64>, attr: Attribute) -> Distribution {
    let support = attr.support();
    Distribution::from_counts(counts.into_iter().filter(|(k, _)| support.contains(k)))
}

/// Relative change of each group's share in the keyword-matched subset
/// against the whole corpus, over the male/female (or known-race) support.
///
/// Documents of `index` must be image positions in `corpus`. At box level
/// the subset is every box of a matched image.
pub fn relative_change(
    corpus: &CorpusView,
    index: &InvertedIndex,
    keywords: &KeywordSet,
    attr: Attribute,
    level: Level,
) -> DeltaReport {
    let matched = index.query_any(&keywords.queries);
    let (all, sub): (Vec<usize>, Vec<usize>) = match level {
        Level::Image => ((0..corpus.images().len()).collect(), matched.iter().map(|&d| d as usize).collect()),
        Level::Box => (
            (0..corpus.boxes().len()).collect(),
            matched.iter().flat_map(|&d| corpus.box_positions(d as usize).iter().copied()).collect(),
        ),
    };
    let baseline = restrict(count_labels(corpus, attr, level, all.into_par_iter()), attr);
    let subset = restrict(count_labels(corpus, attr, level, sub.into_par_iter()), attr);
    DeltaReport {
        attribute: attr,
        level,
        keyword_set: keywords.name.clone(),
        matched_images: matched.len(),
        baseline_total: baseline.total(),
        subset_total: subset.total(),
        rows: delta_rows(attr, &baseline, &subset),
    }
}

/// Synonyms, names and adjectives that all refer to one country.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountryGroup {
    pub country: String,
    /// Region tag from the `[region]` header in force, if any.
    pub region: Option<String>,
    pub queries: Vec<KeywordQuery>,
}

/// Parses one country per line (`Canonical, synonym, adjective, ...`), with
/// optional `[region]` header lines.
pub fn parse_country_groups(text: &str, dict: &LemmaDictionary) -> Result<Vec<CountryGroup>> {
    let mut region = None;
    let mut out = Vec::new();
    for (row, line) in io::numbered_lines(text) {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(tag) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            region = Some(tag.trim().to_string());
            continue;
        }
        let terms: Vec<&str> = line.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
        let queries = terms
            .iter()
            .map(|t| KeywordQuery::new(t, dict))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Record {
                source_name: "country list".into(),
                row,
                message: e.to_string(),
            })?;
        out.push(CountryGroup {
            country: terms[0].to_string(),
            region: region.clone(),
            queries,
        });
    }
    Ok(out)
}

pub fn builtin_country_groups(dict: &LemmaDictionary) -> Vec<CountryGroup> {
    parse_country_groups(BUILTIN_COUNTRIES, dict).expect("builtin country list is valid")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountryCount {
    pub country: String,
    pub total: u64,
    /// Matched images with at least one box labeled male or female.
    pub with_person: u64,
    pub rank_total: usize,
    pub rank_with_person: usize,
}

/// Images mentioning each country (once per image whatever the number of
/// matching synonyms), ranked by count descending then country name.
pub fn country_mentions(corpus: &CorpusView, index: &InvertedIndex, groups: &[CountryGroup]) -> Vec<CountryCount> {
    let mut counts: Vec<CountryCount> = groups
        .par_iter()
        .map(|g| {
            let hits = index.query_any(&g.queries);
            let with_person = hits
                .iter()
                .filter(|&&d| corpus.boxes_of(d as usize).any(|b| b.gender.is_binary()))
                .count() as u64;
            CountryCount {
                country: g.country.clone(),
                total: hits.len() as u64,
                with_person,
                rank_total: 0,
                rank_with_person: 0,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].with_person.cmp(&counts[a].with_person).then(counts[a].country.cmp(&counts[b].country)));
    for (r, &i) in order.iter().enumerate() {
        counts[i].rank_with_person = r + 1;
    }
    counts.sort_by(|a, b| b.total.cmp(&a.total).then(a.country.cmp(&b.country)));
    for (r, c) in counts.iter_mut().enumerate() {
        c.rank_total = r + 1;
    }
    counts
}
