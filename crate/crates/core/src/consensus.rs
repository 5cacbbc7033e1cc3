//! Agreement between annotators, consensus policies, image-level label
//! aggregation, balanced stratified sampling and detection recall.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Gender, Race};
use crate::error::{Error, Result};
use crate::io;

/// One annotator's labels, keyed by item id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Labeling {
    pub annotator: String,
    pub labels: BTreeMap<String, String>,
}

impl Labeling {
    pub fn new(annotator: impl Into<String>) -> Self {
        Labeling {
            annotator: annotator.into(),
            labels: BTreeMap::new(),
        }
    }

    pub fn from_pairs<I, K, V>(annotator: impl Into<String>, pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Labeling {
            annotator: annotator.into(),
            labels: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    fn items_with(&self, label: &str) -> BTreeSet<&str> {
        self.labels
            .iter()
            .filter(|(_, l)| l.as_str() == label)
            .map(|(i, _)| i.as_str())
            .collect()
    }
}

fn same_items(a: &Labeling, b: &Labeling) -> Result<()> {
    if a.labels.len() != b.labels.len() || !a.labels.keys().eq(b.labels.keys()) {
        return Err(Error::invalid(format!(
            "annotators `{}` and `{}` labeled different item sets",
            a.annotator, b.annotator
        )));
    }
    Ok(())
}

/// Cohen's κ with marginal-product chance agreement.
///
/// Returns exactly 1 when both annotators use one and the same label for
/// every item (chance agreement is 1).
pub fn cohen_kappa(a: &Labeling, b: &Labeling) -> Result<f64> {
    same_items(a, b)?;
    let n = a.labels.len() as u128;
    if n == 0 {
        return Err(Error::Empty("no items to compare".into()));
    }
    let mut agree = 0u128;
    let mut ca: BTreeMap<&str, u128> = BTreeMap::new();
    let mut cb: BTreeMap<&str, u128> = BTreeMap::new();
    for (la, lb) in a.labels.values().zip(b.labels.values()) {
        agree += u128::from(la == lb);
        *ca.entry(la).or_default() += 1;
        *cb.entry(lb).or_default() += 1;
    }
    // κ = (p_o − p_e)/(1 − p_e) scaled by n² so the sums stay integral.
    let chance: u128 = ca.iter().map(|(l, c)| c * cb.get(l).copied().unwrap_or(0)).sum();
    if chance == n * n {
        return Ok(1.0);
    }
    let num = (n * agree) as f64 - chance as f64;
    let den = (n * n) as f64 - chance as f64;
    Ok(num / den)
}

/// Fleiss' κ over an items × labels count matrix.
pub fn fleiss_kappa(counts: &[Vec<u64>], raters_per_item: u64) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::Empty("no items".into()));
    }
    if raters_per_item < 2 {
        return Err(Error::invalid("fleiss kappa needs at least 2 raters per item"));
    }
    let width = counts[0].len();
    for (i, row) in counts.iter().enumerate() {
        if row.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: row.len(),
            });
        }
        if row.iter().sum::<u64>() != raters_per_item {
            return Err(Error::invalid(format!(
                "item {i} has {} ratings, expected {raters_per_item}",
                row.iter().sum::<u64>()
            )));
        }
    }
    let n = raters_per_item as f64;
    let items = counts.len() as f64;
    let p_bar = counts
        .iter()
        .map(|row| {
            let sq: u64 = row.iter().map(|c| c * c).sum();
            (sq - raters_per_item) as f64 / (n * (n - 1.0))
        })
        .sum::<f64>()
        / items;
    let mut col = vec![0u64; width];
    for row in counts {
        for (c, v) in col.iter_mut().zip(row) {
            *c += v;
        }
    }
    let total = raters_per_item * counts.len() as u64;
    if col.contains(&total) {
        // Every rating falls in one label: chance agreement is 1.
        return if p_bar == 1.0 {
            Ok(1.0)
        } else {
            Err(Error::Undefined("undefined kappa".into()))
        };
    }
    let p_e: f64 = col
        .iter()
        .map(|&c| {
            let p = c as f64 / total as f64;
            p * p
        })
        .sum();
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// |A∩B| / |A∪B| over the items each annotator gave `label`; 1 when both are empty.
pub fn jaccard_per_label(a: &Labeling, b: &Labeling, label: &str) -> f64 {
    let sa = a.items_with(label);
    let sb = b.items_with(label);
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsensusPolicy {
    Unanimous,
    /// A label needs at least `k` supporting annotators.
    KOfN(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConsensusOutcome {
    pub labels: BTreeMap<String, String>,
    /// Items without a qualifying label.
    pub dropped: usize,
    /// Items where two or more labels qualified with equal support.
    pub ties: usize,
}

pub fn consensus_filter(labelings: &[Labeling], policy: ConsensusPolicy) -> Result<ConsensusOutcome> {
    if labelings.len() < 2 {
        return Err(Error::invalid("consensus needs at least 2 labelings"));
    }
    for other in &labelings[1..] {
        same_items(&labelings[0], other)?;
    }
    let n = labelings.len();
    let k = match policy {
        ConsensusPolicy::Unanimous => n,
        ConsensusPolicy::KOfN(k) if (1..=n).contains(&k) => k,
        ConsensusPolicy::KOfN(k) => {
            return Err(Error::invalid(format!("policy k = {k} outside 1..={n}")));
        }
    };
    let mut out = ConsensusOutcome::default();
    for item in labelings[0].labels.keys() {
        let mut support: BTreeMap<&str, usize> = BTreeMap::new();
        for l in labelings {
            *support.entry(l.labels[item].as_str()).or_default() += 1;
        }
        let best = support.values().copied().max().unwrap_or(0);
        if best < k {
            out.dropped += 1;
            continue;
        }
        let mut winners = support.iter().filter(|(_, &c)| c == best);
        let (label, _) = winners.next().expect("max exists");
        if winners.next().is_some() {
            out.ties += 1;
            out.dropped += 1;
            continue;
        }
        out.labels.insert(item.clone(), label.to_string());
    }
    Ok(out)
}

/// Image-level gender from the genders of its person boxes.
pub fn image_gender(boxes: &[Gender]) -> Gender {
    let has = |g: Gender| boxes.contains(&g);
    let (male, female) = (has(Gender::Male), has(Gender::Female));
    if has(Gender::Mixed) || (male && female) {
        Gender::Mixed
    } else if male {
        Gender::Male
    } else if female {
        Gender::Female
    } else {
        Gender::Unclear
    }
}

/// Image-level race: the single known race among its boxes, else unclear.
pub fn image_race(boxes: &[Race]) -> Race {
    let mut found: Option<Race> = None;
    for &r in boxes.iter().filter(|r| r.is_known()) {
        match found {
            None => found = Some(r),
            Some(f) if f != r => return Race::Unclear,
            Some(_) => {}
        }
    }
    found.unwrap_or(Race::Unclear)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// Sizes of an 80/10/10 split of `n`, rounded by largest remainder
/// (ties favour train, then validation).
pub fn split_sizes(n: usize) -> [usize; 3] {
    let parts = [8usize, 1, 1];
    let mut sizes = parts.map(|p| p * n / 10);
    let mut rems: Vec<(usize, usize)> = parts.iter().enumerate().map(|(i, p)| (p * n % 10, i)).collect();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - sizes.iter().sum::<usize>();
    for &(_, i) in rems.iter().take(short) {
        sizes[i] += 1;
    }
    sizes
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumReport {
    pub stratum: String,
    pub quota: usize,
    pub available: usize,
    pub taken: usize,
    /// quota − taken when the stratum could not fill its quota.
    pub shortfall: usize,
    /// Items taken beyond the quota to absorb other strata's shortfall.
    pub extra: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedSample {
    /// (item id, stratum, split), grouped by stratum in name order.
    pub assignments: Vec<(String, String, Split)>,
    pub strata: Vec<StratumReport>,
}

impl BalancedSample {
    pub fn ids_in(&self, split: Split) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, _, s)| *s == split)
            .map(|(id, _, _)| id.as_str())
            .collect()
    }
}

/// Distributes `amount` over `weights` proportionally, rounding by largest
/// remainder with ties to the earlier entry.
fn apportion(amount: usize, weights: &[usize]) -> Vec<usize> {
    let total: u128 = weights.iter().map(|&w| w as u128).sum();
    if total == 0 {
        return apportion(amount, &vec![1; weights.len()]);
    }
    let mut shares: Vec<usize> = weights
        .iter()
        .map(|&w| (amount as u128 * w as u128 / total) as usize)
        .collect();
    let mut rems: Vec<(u128, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (amount as u128 * w as u128 % total, i))
        .collect();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let left = amount - shares.iter().sum::<usize>();
    for &(_, i) in rems.iter().take(left) {
        shares[i] += 1;
    }
    shares
}

/// Draws a quota-balanced sample from `pool` (item id, stratum) and assigns
/// an 80/10/10 train/validation/test split within every stratum.
///
/// A stratum holding fewer items than its quota gives all it has; its
/// shortfall is spread over the strata with spare items in proportion to
/// their quotas, repeating until the shortfall is absorbed or no spare items
/// remain. Pool items of strata without a quota are ignored.
pub fn balanced_sample(
    pool: &[(String, String)],
    quotas: &BTreeMap<String, usize>,
    seed: u64,
) -> Result<BalancedSample> {
    if pool.is_empty() {
        return Err(Error::Empty("sampling pool".into()));
    }
    let mut members: BTreeMap<&str, Vec<&str>> = quotas.keys().map(|s| (s.as_str(), Vec::new())).collect();
    for (id, stratum) in pool {
        if let Some(m) = members.get_mut(stratum.as_str()) {
            m.push(id.as_str());
        }
    }
    let names: Vec<&str> = members.keys().copied().collect();
    let avail: Vec<usize> = names.iter().map(|s| members[s].len()).collect();
    let quota: Vec<usize> = names.iter().map(|s| quotas[*s]).collect();
    let mut target: Vec<usize> = quota.iter().zip(&avail).map(|(&q, &a)| q.min(a)).collect();
    let mut deficit: usize = quota.iter().zip(&target).map(|(q, t)| q - t).sum();
    while deficit > 0 {
        let open: Vec<usize> = (0..names.len()).filter(|&i| avail[i] > target[i]).collect();
        if open.is_empty() {
            break;
        }
        let weights: Vec<usize> = open.iter().map(|&i| quota[i]).collect();
        let shares = apportion(deficit, &weights);
        for (&i, share) in open.iter().zip(shares) {
            let add = share.min(avail[i] - target[i]);
            target[i] += add;
            deficit -= add;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = Vec::new();
    let mut strata = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let mut ids = members[name].clone();
        ids.shuffle(&mut rng);
        ids.truncate(target[i]);
        let [tr, va, _] = split_sizes(ids.len());
        for (pos, id) in ids.iter().enumerate() {
            let split = if pos < tr {
                Split::Train
            } else if pos < tr + va {
                Split::Validation
            } else {
                Split::Test
            };
            assignments.push((id.to_string(), name.to_string(), split));
        }
        strata.push(StratumReport {
            stratum: name.to_string(),
            quota: quota[i],
            available: avail[i],
            taken: target[i],
            shortfall: quota[i].saturating_sub(target[i]),
            extra: target[i].saturating_sub(quota[i]),
        });
    }
    Ok(BalancedSample { assignments, strata })
}

/// Axis-aligned box, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn iou(&self, o: &Rect) -> f64 {
        let ix = ((self.x + self.w).min(o.x + o.w) - self.x.max(o.x)).max(0.0);
        let iy = ((self.y + self.h).min(o.y + o.h) - self.y.max(o.y)).max(0.0);
        let inter = ix * iy;
        let union = self.w * self.h + o.w * o.h - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Predictions and ground truth for one image.
#[derive(Debug, Clone, Default)]
pub struct ImageDetections {
    pub pred: Vec<(Rect, f64)>,
    pub gt: Vec<Rect>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtMatchConfig {
    thresholds: Vec<f64>,
}

impl GtMatchConfig {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::invalid("no IoU thresholds"));
        }
        if thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::invalid("IoU thresholds must lie in (0, 1]"));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("IoU thresholds must be strictly increasing"));
        }
        Ok(GtMatchConfig { thresholds })
    }

    /// 0.50, 0.55, …, 0.95.
    pub fn standard() -> Self {
        GtMatchConfig {
            thresholds: (0..10).map(|q| (50 + 5 * q) as f64 / 100.0).collect(),
        }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallReport {
    pub thresholds: Vec<f64>,
    pub matched: Vec<usize>,
    pub gt_total: usize,
    pub recall: Vec<f64>,
    pub mean_recall: f64,
}

/// Number of ground-truth boxes matched by greedy confidence-ordered
/// one-to-one assignment at IoU threshold `t`.
pub fn greedy_matches(det: &ImageDetections, t: f64) -> usize {
    let mut order: Vec<usize> = (0..det.pred.len()).collect();
    order.sort_by(|&a, &b| det.pred[b].1.total_cmp(&det.pred[a].1).then(a.cmp(&b)));
    let mut taken = vec![false; det.gt.len()];
    let mut matched = 0;
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in det.gt.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = det.pred[p].0.iou(gt);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, iou)) = best {
            if iou >= t {
                taken[g] = true;
                matched += 1;
            }
        }
    }
    matched
}

pub fn detection_recall(images: &[ImageDetections], cfg: &GtMatchConfig) -> Result<RecallReport> {
    let gt_total: usize = images.iter().map(|d| d.gt.len()).sum();
    if gt_total == 0 {
        return Err(Error::Empty("no ground-truth boxes".into()));
    }
    let thresholds = cfg.thresholds.clone();
    let matched: Vec<usize> = images
        .par_iter()
        .map(|d| thresholds.iter().map(|&t| greedy_matches(d, t)).collect::<Vec<_>>())
        .reduce(
            || vec![0; thresholds.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let recall: Vec<f64> = matched.iter().map(|&m| m as f64 / gt_total as f64).collect();
    let mean_recall = recall.iter().sum::<f64>() / recall.len() as f64;
    Ok(RecallReport {
        thresholds,
        matched,
        gt_total,
        recall,
        mean_recall,
    })
}

/// Reads `annotator,item_id,label` rows into one labeling per annotator,
/// ordered by annotator name.
pub fn parse_labelings(text: &str, source_name: &str) -> Result<Vec<Labeling>> {
    let (header, rows) = io::read_csv(text, source_name)?;
    if header != ["annotator", "item_id", "label"] {
        return Err(Error::Format(format!("{source_name}: expected header `annotator,item_id,label`")));
    }
    let mut by_annotator: BTreeMap<String, Labeling> = BTreeMap::new();
    for (row, r) in rows {
        let l = by_annotator.entry(r[0].clone()).or_insert_with(|| Labeling::new(r[0].clone()));
        if l.labels.insert(r[1].clone(), r[2].clone()).is_some() {
            return Err(Error::Record {
                source_name: source_name.to_string(),
                row,
                message: format!("annotator `{}` labels item `{}` twice", r[0], r[1]),
            });
        }
    }
    Ok(by_annotator.into_values().collect())
}

pub fn labelings_to_csv(labelings: &[Labeling]) -> String {
    let mut t = io::CsvTable::new(&["annotator", "item_id", "label"]);
    for l in labelings {
        for (item, label) in &l.labels {
            t.row([l.annotator.as_str(), item.as_str(), label.as_str()]);
        }
    }
    t.into_string()
}

/// One line of a detection file: boxes as `[x, y, w, h]`, predictions
/// with a trailing confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub image_id: String,
    pub pred: Vec<[f64; 5]>,
    pub gt: Vec<[f64; 4]>,
}

impl DetectionRecord {
    pub fn detections(&self) -> ImageDetections {
        ImageDetections {
            pred: self.pred.iter().map(|p| (Rect::new(p[0], p[1], p[2], p[3]), p[4])).collect(),
            gt: self.gt.iter().map(|g| Rect::new(g[0], g[1], g[2], g[3])).collect(),
        }
    }
}

pub fn parse_detections(text: &str, source_name: &str) -> Result<Vec<DetectionRecord>> {
    io::numbered_lines(text)
        .into_iter()
        .map(|(row, line)| {
            let bad = |message: String| Error::Record {
                source_name: source_name.to_string(),
                row,
                message,
            };
            let r: DetectionRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let mut sizes = r.pred.iter().map(|p| (p[2], p[3])).chain(r.gt.iter().map(|g| (g[2], g[3])));
            if sizes.any(|(w, h)| !(w >= 0.0 && h >= 0.0)) {
                return Err(bad("negative or non-finite box size".into()));
            }
            Ok(r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lab(name: &str, labels: &[&str]) -> Labeling {
        Labeling::from_pairs(name, labels.iter().enumerate().map(|(i, l)| (format!("{i:03}"), *l)))
    }

    #[test]
    fn cohen_examples() {
        let a = lab("a", &["1", "1", "0", "0"]);
        let b = lab("b", &["1", "0", "1", "0"]);
        assert_eq!(cohen_kappa(&a, &b).unwrap(), 0.0);
        assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
        let one = lab("c", &["x", "x"]);
        assert_eq!(cohen_kappa(&one, &one).unwrap(), 1.0);
        assert!(cohen_kappa(&lab("e", &[]), &lab("f", &[])).is_err());
        assert!(cohen_kappa(&a, &lab("g", &["1"])).is_err());
    }

    #[test]
    fn fleiss_examples() {
        assert_eq!(fleiss_kappa(&[vec![3, 0], vec![0, 3]], 3).unwrap(), 1.0);
        let k = fleiss_kappa(&[vec![2, 1], vec![1, 2], vec![3, 0], vec![0, 3]], 3).unwrap();
        assert!((k - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(fleiss_kappa(&[vec![3, 0], vec![3, 0]], 3).unwrap(), 1.0);
        assert!(fleiss_kappa(&[vec![2, 0]], 3).is_err());
    }

    #[test]
    fn jaccard_examples() {
        let a = Labeling::from_pairs("a", [("1", "m"), ("2", "m"), ("3", "f")]);
        let b = Labeling::from_pairs("b", [("1", "f"), ("2", "m"), ("3", "m")]);
        assert!((jaccard_per_label(&a, &b, "m") - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard_per_label(&a, &b, "unclear"), 1.0);
    }

    #[test]
    fn consensus_examples() {
        let ls = [lab("a", &["male", "male"]), lab("b", &["male", "female"]), lab("c", &["male", "unclear"])];
        let u = consensus_filter(&ls, ConsensusPolicy::Unanimous).unwrap();
        assert_eq!(u.labels.len(), 1);
        assert_eq!(u.labels["000"], "male");
        let mixed = [lab("a", &["mixed"]), lab("b", &["mixed"]), lab("c", &["male"])];
        let k = consensus_filter(&mixed, ConsensusPolicy::KOfN(2)).unwrap();
        assert_eq!(k.labels["000"], "mixed");
        assert!(consensus_filter(&mixed, ConsensusPolicy::KOfN(4)).is_err());
        let tie = [lab("a", &["x"]), lab("b", &["y"]), lab("c", &["x"]), lab("d", &["y"])];
        let t = consensus_filter(&tie, ConsensusPolicy::KOfN(2)).unwrap();
        assert_eq!((t.labels.len(), t.ties, t.dropped), (0, 1, 1));
    }

    #[test]
    fn image_label_rules() {
        use Gender::*;
        assert_eq!(image_gender(&[Male, Unclear]), Male);
        assert_eq!(image_gender(&[Female]), Female);
        assert_eq!(image_gender(&[Male, Female]), Mixed);
        assert_eq!(image_gender(&[Mixed, Unclear]), Mixed);
        assert_eq!(image_gender(&[]), Unclear);
        assert_eq!(image_race(&[Race::White, Race::Unclear]), Race::White);
        assert_eq!(image_race(&[Race::Black, Race::White]), Race::Unclear);
        assert_eq!(image_race(&[]), Race::Unclear);
    }

    fn pool(spec: &[(&str, usize)]) -> Vec<(String, String)> {
        spec.iter()
            .flat_map(|(s, n)| (0..*n).map(move |i| (format!("{s}{i}"), s.to_string())))
            .collect()
    }

    #[test]
    fn sample_redistributes_shortfall() {
        let quotas: BTreeMap<String, usize> = [("A".into(), 100), ("B".into(), 100)].into();
        let s = balanced_sample(&pool(&[("A", 80), ("B", 200)]), &quotas, 7).unwrap();
        assert_eq!((s.strata[0].taken, s.strata[0].shortfall), (80, 20));
        assert_eq!((s.strata[1].taken, s.strata[1].extra), (120, 20));
        assert_eq!(s, balanced_sample(&pool(&[("A", 80), ("B", 200)]), &quotas, 7).unwrap());
        let exact: BTreeMap<String, usize> = [("A".into(), 10)].into();
        assert_eq!(balanced_sample(&pool(&[("A", 10)]), &exact, 1).unwrap().assignments.len(), 10);
        assert!(balanced_sample(&[], &exact, 1).is_err());
    }

    #[test]
    fn split_sizes_round_by_remainder() {
        assert_eq!(split_sizes(10), [8, 1, 1]);
        assert_eq!(split_sizes(0), [0, 0, 0]);
        assert_eq!(split_sizes(7), [5, 1, 1]);
        assert_eq!(split_sizes(19), [15, 2, 2]);
    }

    #[test]
    fn recall_examples() {
        let gt = Rect::new(0.0, 0.0, 10.0, 10.0);
        let half = ImageDetections {
            pred: vec![(Rect::new(0.0, 0.0, 10.0, 5.0), 0.9)],
            gt: vec![gt],
        };
        let r = detection_recall(&[half], &GtMatchConfig::standard()).unwrap();
        assert_eq!(r.recall[0], 1.0);
        assert_eq!(r.recall[1], 0.0);
        let same = ImageDetections {
            pred: vec![(gt, 0.5)],
            gt: vec![gt],
        };
        let r = detection_recall(&[same], &GtMatchConfig::standard()).unwrap();
        assert!(r.recall.iter().all(|&x| x == 1.0));
        assert!(detection_recall(&[ImageDetections::default()], &GtMatchConfig::standard()).is_err());
        assert!(GtMatchConfig::new(vec![0.5, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn kappa_symmetric(a in prop::collection::vec(0u8..3, 1..12), b in prop::collection::vec(0u8..3, 1..12)) {
            let n = a.len().min(b.len());
            let la = Labeling::from_pairs("a", a[..n].iter().enumerate().map(|(i, v)| (i.to_string(), v.to_string())));
            let lb = Labeling::from_pairs("b", b[..n].iter().enumerate().map(|(i, v)| (i.to_string(), v.to_string())));
            prop_assert_eq!(cohen_kappa(&la, &lb).unwrap(), cohen_kappa(&lb, &la).unwrap());
        }

        #[test]
        fn gender_permutation_invariant(mut gs in prop::collection::vec(0usize..4, 0..8), seed in any::<u64>()) {
            let labels: Vec<Gender> = gs.iter().map(|&i| Gender::ALL[i]).collect();
            let want = image_gender(&labels);
            gs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<Gender> = gs.iter().map(|&i| Gender::ALL[i]).collect();
            prop_assert_eq!(image_gender(&shuffled), want);
        }

        #[test]
        fn unanimous_subset_of_k_of_n(rows in prop::collection::vec(prop::collection::vec(0u8..3, 3), 1..20), k in 1usize..=3) {
            let ls: Vec<Labeling> = (0..3)
                .map(|a| Labeling::from_pairs(a.to_string(), rows.iter().enumerate().map(|(i, r)| (i.to_string(), r[a].to_string()))))
                .collect();
            let u = consensus_filter(&ls, ConsensusPolicy::Unanimous).unwrap();
            let kk = consensus_filter(&ls, ConsensusPolicy::KOfN(k)).unwrap();
            for (item, l) in &u.labels {
                prop_assert_eq!(kk.labels.get(item), Some(l));
            }
        }

        #[test]
        fn split_deviation_at_most_one(n in 0usize..500) {
            let s = split_sizes(n);
            prop_assert_eq!(s.iter().sum::<usize>(), n);
            for (size, part) in s.iter().zip([8usize, 1, 1]) {
                let exact = (n * part) as f64 / 10.0;
                prop_assert!((*size as f64 - exact).abs() < 1.0);
            }
        }
    }
}
