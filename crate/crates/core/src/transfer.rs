//! First-order bias transfer: how strongly a social category's gender skew
//! in the corpus predicts the skew of models trained on it.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{CorpusView, Gender};
use crate::embedding::{cosine, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::io;
use crate::textindex::{InvertedIndex, KeywordQuery, LemmaDictionary};

pub const DEFAULT_MIN_COUNT: u64 = 100;
pub const GENERATION_QUOTA: usize = 100;
pub const GENERATION_ATTEMPTS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CategorySource {
    Guilbeault,
    Sobit,
}

impl CategorySource {
    pub fn as_str(self) -> &'static str {
        match self {
            CategorySource::Guilbeault => "guilbeault",
            CategorySource::Sobit => "sobit",
        }
    }
}

impl fmt::Display for CategorySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CategorySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "guilbeault" => Ok(CategorySource::Guilbeault),
            "sobit" => Ok(CategorySource::Sobit),
            other => Err(Error::invalid(format!("unknown category source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocialCategory {
    pub label: String,
    pub source: CategorySource,
    pub is_adjective: bool,
    /// Captions matching the category; filled in by [`filter_categories`].
    pub count: u64,
}

/// Parses a `label,source,is_adjective` CSV.
pub fn parse_categories(text: &str, source_name: &str) -> Result<Vec<SocialCategory>> {
    let (header, rows) = io::read_csv(text, source_name)?;
    if header != ["label", "source", "is_adjective"] {
        return Err(Error::Format(format!("{source_name}: expected header `label,source,is_adjective`")));
    }
    rows.into_iter()
        .map(|(row, r)| {
            let bad = |message: String| Error::Record {
                source_name: source_name.to_string(),
                row,
                message,
            };
            let is_adjective = match r[2].as_str() {
                "true" | "1" => true,
                "false" | "0" => false,
                other => return Err(bad(format!("is_adjective must be true/false, got `{other}`"))),
            };
            Ok(SocialCategory {
                label: r[0].trim().to_string(),
                source: r[1].parse().map_err(|e: Error| bad(e.to_string()))?,
                is_adjective,
                count: 0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub kept: Vec<SocialCategory>,
    pub kept_per_source: BTreeMap<CategorySource, usize>,
    pub not_a_lemma: usize,
    pub too_rare: usize,
}

/// Multiword lemmas are written with underscores in lemma lists.
fn lemma_key(label: &str) -> String {
    label.trim().to_lowercase().split_whitespace().collect::<Vec<_>>().join("_")
}

/// Keeps categories that are valid lemmas and whose caption occurrence
/// count reaches `min_count`. Categories that normalize to nothing (all
/// stopwords) count as zero occurrences.
pub fn filter_categories(
    cats: &[SocialCategory],
    lemma_set: &HashSet<String>,
    index: &InvertedIndex,
    dict: &LemmaDictionary,
    min_count: u64,
) -> FilterReport {
    let counted: Vec<(SocialCategory, bool)> = cats
        .par_iter()
        .map(|c| {
            let valid = lemma_set.contains(&lemma_key(&c.label));
            let count = match KeywordQuery::new(&c.label, dict) {
                Ok(q) if valid => index.query(&q).len() as u64,
                _ => 0,
            };
            (SocialCategory { count, ..c.clone() }, valid)
        })
        .collect();
    let mut report = FilterReport {
        kept: Vec::new(),
        kept_per_source: BTreeMap::new(),
        not_a_lemma: 0,
        too_rare: 0,
    };
    for (c, valid) in counted {
        if !valid {
            report.not_a_lemma += 1;
        } else if c.count < min_count {
            report.too_rare += 1;
        } else {
            *report.kept_per_source.entry(c.source).or_default() += 1;
            report.kept.push(c);
        }
    }
    report
}

/// Reads a lemma list (one per line), normalizing spaces to underscores.
pub fn parse_lemma_set(text: &str) -> HashSet<String> {
    io::parse_list(text).iter().map(|l| lemma_key(l)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBias {
    pub matched_images: usize,
    pub female: u64,
    pub male: u64,
    /// female / (female + male); `None` when no matched image is single-gender.
    pub ratio: Option<f64>,
}

/// Female share among caption-matched images that show only women or only men.
pub fn dataset_bias(corpus: &CorpusView, index: &InvertedIndex, query: &KeywordQuery) -> DatasetBias {
    let hits = index.query(query);
    let (mut female, mut male) = (0u64, 0u64);
    for &doc in &hits {
        match corpus.images()[doc as usize].image_gender {
            Gender::Female => female += 1,
            Gender::Male => male += 1,
            _ => {}
        }
    }
    let ratio = (female + male > 0).then(|| female as f64 / (female + male) as f64);
    DatasetBias {
        matched_images: hits.len(),
        female,
        male,
        ratio,
    }
}

/// Cosine similarities of one category's text embedding to female and male
/// image embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityPanel {
    pub female: Vec<f64>,
    pub male: Vec<f64>,
}

impl SimilarityPanel {
    pub fn new(female: Vec<f64>, male: Vec<f64>) -> Result<Self> {
        if female.len() < 2 || male.len() < 2 {
            return Err(Error::invalid("similarity panel needs at least two images per gender"));
        }
        if let Some(v) = female.iter().chain(&male).find(|v| !(-1.0 - 1e-9..=1.0 + 1e-9).contains(*v)) {
            return Err(Error::invalid(format!("similarity {v} outside [-1, 1]")));
        }
        Ok(SimilarityPanel { female, male })
    }

    /// Compares `text` against every image row tagged female or male.
    pub fn from_embeddings(text: &[f32], images: &EmbeddingMatrix) -> Result<Self> {
        let tags = images
            .identities()
            .ok_or_else(|| Error::invalid("image embeddings carry no identity tags"))?;
        let (mut female, mut male) = (Vec::new(), Vec::new());
        for (i, tag) in tags.iter().enumerate() {
            match tag.map(|t| t.gender) {
                Some(Gender::Female) => female.push(cosine(text, images.row(i))),
                Some(Gender::Male) => male.push(cosine(text, images.row(i))),
                _ => {}
            }
        }
        SimilarityPanel::new(female, male)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standardized difference of mean similarity to female vs male images,
/// using the population standard deviation of the pooled similarities.
pub fn model_bias(panel: &SimilarityPanel) -> Result<f64> {
    let pooled: Vec<f64> = panel.female.iter().chain(&panel.male).copied().collect();
    let mu = mean(&pooled);
    let var = pooled.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / pooled.len() as f64;
    if var <= 0.0 {
        return Err(Error::Undefined("all similarities are identical".into()));
    }
    Ok((mean(&panel.female) - mean(&panel.male)) / var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationBias {
    pub ratio: f64,
    pub qualifying: usize,
    pub attempts: usize,
    /// Fewer than the quota qualified within the attempt cap.
    pub under_quota: bool,
}

/// Female share among the first `quota` images labeled male or female,
/// looking at no more than `max_attempts` generations. Other labels mark
/// images that did not qualify.
pub fn generation_bias(labels: &[Option<Gender>], quota: usize, max_attempts: usize) -> Result<GenerationBias> {
    let (mut female, mut qualifying, mut attempts) = (0usize, 0usize, 0usize);
    for label in labels.iter().take(max_attempts) {
        if qualifying == quota {
            break;
        }
        attempts += 1;
        match label {
            Some(Gender::Female) => {
                female += 1;
                qualifying += 1;
            }
            Some(Gender::Male) => qualifying += 1,
            _ => {}
        }
    }
    if qualifying == 0 {
        return Err(Error::Empty("no qualifying generated images".into()));
    }
    Ok(GenerationBias {
        ratio: female as f64 / qualifying as f64,
        qualifying,
        attempts,
        under_quota: qualifying < quota,
    })
}

/// The prompt for the external image generator.
pub fn prompt(category: &SocialCategory) -> String {
    if category.is_adjective {
        format!("A picture of a {} person", category.label)
    } else {
        format!("A picture of a {}", category.label)
    }
}

/// Reads `category,attempt,label` rows. Labels are `female`, `male`, or
/// anything else for an image that did not qualify; attempts are ordered
/// by their number.
pub fn parse_generation_labels(text: &str, source_name: &str) -> Result<BTreeMap<String, Vec<Option<Gender>>>> {
    let (header, rows) = io::read_csv(text, source_name)?;
    if header != ["category", "attempt", "label"] {
        return Err(Error::Format(format!("{source_name}: expected header `category,attempt,label`")));
    }
    let mut by_cat: BTreeMap<String, Vec<(u32, Option<Gender>)>> = BTreeMap::new();
    for (row, r) in rows {
        let attempt: u32 = r[1].parse().map_err(|_| Error::Record {
            source_name: source_name.to_string(),
            row,
            message: format!("attempt `{}` is not a non-negative integer", r[1]),
        })?;
        let label = match r[2].as_str() {
            "female" => Some(Gender::Female),
            "male" => Some(Gender::Male),
            _ => None,
        };
        by_cat.entry(r[0].clone()).or_default().push((attempt, label));
    }
    Ok(by_cat
        .into_iter()
        .map(|(c, mut v)| {
            v.sort_by_key(|&(a, _)| a);
            (c, v.into_iter().map(|(_, l)| l).collect())
        })
        .collect())
}

pub fn generation_labels_to_csv(labels: &BTreeMap<String, Vec<Option<Gender>>>) -> String {
    let mut t = io::CsvTable::new(&["category", "attempt", "label"]);
    for (c, v) in labels {
        for (a, l) in v.iter().enumerate() {
            t.row([c.as_str(), &a.to_string(), l.map_or("none", Gender::as_str)]);
        }
    }
    t.into_string()
}

pub fn categories_to_csv(cats: &[SocialCategory]) -> String {
    let mut t = io::CsvTable::new(&["label", "source", "is_adjective"]);
    for c in cats {
        t.row([c.label.as_str(), c.source.as_str(), if c.is_adjective { "true" } else { "false" }]);
    }
    t.into_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasPoint {
    pub category: String,
    pub dataset_bias: f64,
    pub model_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub rho: f64,
    pub r2: f64,
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
    /// Fraction of points where dataset bias (centred at 0.5) and model
    /// bias (centred at 0) lean the same way.
    pub sign_agreement: f64,
}

/// Ordinary least squares of model bias on dataset bias.
pub fn fit(points: &[BiasPoint]) -> Result<FitSummary> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|p| !p.dataset_bias.is_finite() || !p.model_bias.is_finite()) {
        return Err(Error::invalid("non-finite bias value"));
    }
    // Sort so the floating-point sums do not depend on input order.
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.dataset_bias, p.model_bias)).collect();
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in &xy {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Undefined("dataset bias has zero variance".into()));
    }
    if syy == 0.0 {
        return Err(Error::Undefined("model bias has zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xy.iter().map(|&(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let rho = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let r2 = (1.0 - ss_res / syy).clamp(0.0, 1.0);
    let agree = xy
        .iter()
        .filter(|&&(x, y)| (x - 0.5).partial_cmp(&0.0) == y.partial_cmp(&0.0))
        .count();
    Ok(FitSummary {
        rho,
        r2,
        slope,
        intercept,
        n: xy.len(),
        sign_agreement: agree as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ImageRecord, PersonBox, Race};
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<BiasPoint> {
        v.iter()
            .map(|&(x, y)| BiasPoint {
                category: String::new(),
                dataset_bias: x,
                model_bias: y,
            })
            .collect()
    }

    #[test]
    fn hand_computed_standardized_difference() {
        let p = SimilarityPanel::new(vec![0.3, 0.5], vec![0.2, 0.4]).unwrap();
        let d = model_bias(&p).unwrap();
        assert!((d - 0.1 / 0.0125f64.sqrt()).abs() < 1e-12);
        assert!((d - 0.894).abs() < 1e-3);
        let same = SimilarityPanel::new(vec![0.1, 0.2], vec![0.2, 0.1]).unwrap();
        assert_eq!(model_bias(&same).unwrap(), 0.0);
        let flat = SimilarityPanel::new(vec![0.2, 0.2], vec![0.2, 0.2]).unwrap();
        assert!(model_bias(&flat).is_err());
        assert!(SimilarityPanel::new(vec![0.2], vec![0.1, 0.3]).is_err());
    }

    #[test]
    fn exact_lines() {
        let f = fit(&pts(&[(0.0, 1.0), (0.5, 2.0), (1.0, 3.0)])).unwrap();
        assert!((f.rho - 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        let g = fit(&pts(&[(0.1, -0.1), (0.2, -0.2), (0.7, -0.7)])).unwrap();
        assert!((g.rho + 1.0).abs() < 1e-12 && (g.r2 - 1.0).abs() < 1e-12);
        assert!(fit(&pts(&[(0.3, 1.0), (0.3, 2.0), (0.3, 0.0)])).is_err());
        assert!(fit(&pts(&[(0.3, 1.0), (0.4, 2.0)])).is_err());
    }

    #[test]
    fn sign_agreement_centres() {
        let f = fit(&pts(&[(0.9, 1.0), (0.1, -1.0), (0.8, -0.5), (0.2, 0.3)])).unwrap();
        assert_eq!(f.sign_agreement, 0.5);
    }

    #[test]
    fn generation_counts() {
        let mut labels = vec![Some(Gender::Female); 41];
        labels.extend(vec![Some(Gender::Male); 59]);
        labels.push(Some(Gender::Female));
        let g = generation_bias(&labels, 100, 500).unwrap();
        assert_eq!((g.qualifying, g.attempts, g.under_quota), (100, 100, false));
        assert!((g.ratio - 0.41).abs() < 1e-15);
        let mostly_junk: Vec<Option<Gender>> = (0..600).map(|i| if i % 10 == 0 { Some(Gender::Male) } else { None }).collect();
        let g = generation_bias(&mostly_junk, 100, 500).unwrap();
        assert_eq!((g.qualifying, g.attempts, g.under_quota, g.ratio), (50, 500, true, 0.0));
        assert!(generation_bias(&[None, Some(Gender::Mixed)], 100, 500).is_err());
    }

    #[test]
    fn prompts() {
        let mut c = SocialCategory {
            label: "nurse".into(),
            source: CategorySource::Guilbeault,
            is_adjective: false,
            count: 0,
        };
        assert_eq!(prompt(&c), "A picture of a nurse");
        c.label = "brave".into();
        c.is_adjective = true;
        assert_eq!(prompt(&c), "A picture of a brave person");
    }

    fn corpus_with(captions: &[(&str, Gender)]) -> CorpusView {
        let mut images = Vec::new();
        let mut boxes = Vec::new();
        for (i, (cap, g)) in captions.iter().enumerate() {
            let id = format!("img{i}");
            images.push(ImageRecord::new(&id, 100, 100, *cap));
            boxes.push(PersonBox {
                image_id: id,
                x: 0,
                y: 0,
                w: 50,
                h: 50,
                confidence: 0.9,
                gender: *g,
                race: Race::White,
                person_caption: None,
            });
        }
        let mut c = CorpusView::new(images, boxes).unwrap();
        c.aggregate_labels();
        c
    }

    #[test]
    fn dataset_ratio_and_filter() {
        let dict = LemmaDictionary::builtin();
        let corpus = corpus_with(&[
            ("a nurse at work", Gender::Female),
            ("nurses on shift", Gender::Female),
            ("the nurse smiles", Gender::Female),
            ("nurse portrait", Gender::Male),
            ("nurse and friend", Gender::Mixed),
            ("a pilot", Gender::Male),
        ]);
        let index = InvertedIndex::over_captions(corpus.images(), &dict);
        let q = KeywordQuery::new("nurse", &dict).unwrap();
        let b = dataset_bias(&corpus, &index, &q);
        assert_eq!((b.matched_images, b.female, b.male, b.ratio), (5, 3, 1, Some(0.75)));
        let none = dataset_bias(&corpus, &index, &KeywordQuery::new("surgeon", &dict).unwrap());
        assert_eq!(none.ratio, None);

        let cats = parse_categories(
            "label,source,is_adjective\nnurse,guilbeault,false\npilot,sobit,false\nzzyzx,sobit,false\n",
            "cats.csv",
        )
        .unwrap();
        let lemmas = parse_lemma_set("nurse\npilot\n");
        let r = filter_categories(&cats, &lemmas, &index, &dict, 5);
        assert_eq!(r.kept.len(), 1);
        assert_eq!(r.kept[0].count, 5);
        assert_eq!((r.not_a_lemma, r.too_rare), (1, 1));
        assert_eq!(filter_categories(&cats, &lemmas, &index, &dict, 6).kept.len(), 0);
    }

    proptest! {
        #[test]
        fn standardized_difference_is_affine_invariant(
            f in prop::collection::vec(-0.4f64..0.4, 2..12),
            m in prop::collection::vec(-0.4f64..0.4, 2..12),
            shift in -0.5f64..0.5,
            scale in 0.1f64..1.2,
        ) {
            let base = SimilarityPanel { female: f.clone(), male: m.clone() };
            let moved = SimilarityPanel {
                female: f.iter().map(|v| v * scale + shift).collect(),
                male: m.iter().map(|v| v * scale + shift).collect(),
            };
            if let (Ok(a), Ok(b)) = (model_bias(&base), model_bias(&moved)) {
                prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
            }
        }

        #[test]
        fn fit_is_order_free_and_bounded(
            mut v in prop::collection::vec((0.0f64..1.0, -2.0f64..2.0), 3..40),
            rot in 0usize..40,
        ) {
            if let Ok(a) = fit(&pts(&v)) {
                let k = rot % v.len();
                v.rotate_left(k);
                v.reverse();
                let b = fit(&pts(&v)).unwrap();
                prop_assert_eq!(&a, &b);
                prop_assert!((0.0..=1.0).contains(&a.r2));
                prop_assert!((a.rho * a.rho - a.r2).abs() < 1e-12);
            }
        }
    }
}
