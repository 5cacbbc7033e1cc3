//! Topic clustering over a threshold sweep, feature→topic distributions from
//! SAE decoder rows, identity–topic PMI marginalized over features, and
//! aggregation of PMI scores across SAE runs and clusterings.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::Identity;
use crate::embedding::{cosine, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::io;
use crate::sae::{ActivationCounts, SaeModel, Scalar};

/// Floor applied to every probability before division and logarithm.
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_TOP_N: usize = 5;
pub const DEFAULT_TOP_TOPICS: usize = 20;

/// Twenty thresholds evenly spaced strictly inside (0.8, 0.95).
pub fn tau_sweep() -> Vec<f64> {
    (1..=20).map(|q| 0.8 + q as f64 * (0.15 / 21.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicVocabulary {
    pub labels: Vec<String>,
    pub sources: Vec<String>,
    pub embeddings: EmbeddingMatrix,
}

impl TopicVocabulary {
    pub fn new(labels: Vec<String>, sources: Vec<String>, embeddings: EmbeddingMatrix) -> Result<Self> {
        if labels.len() != embeddings.rows() || sources.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: embeddings.rows(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateId(l.clone()));
            }
        }
        if let Some((i, _)) = labels.iter().enumerate().find(|(i, l)| embeddings.ids()[*i] != **l) {
            return Err(Error::invalid(format!(
                "embedding row {i} is `{}`, expected topic `{}`",
                embeddings.ids()[i],
                labels[i]
            )));
        }
        Ok(TopicVocabulary {
            labels,
            sources,
            embeddings,
        })
    }

    /// Reads a `label,source` CSV and an embedding file whose row ids are the labels.
    pub fn load(csv_path: &Path, embedding_path: &Path) -> Result<Self> {
        let name = csv_path.display().to_string();
        let (header, rows) = io::read_csv(&io::read_to_string(csv_path)?, &name)?;
        if header != ["label", "source"] {
            return Err(Error::Format(format!("{name}: expected header `label,source`")));
        }
        let (labels, sources) = rows.into_iter().map(|(_, r)| (r[0].clone(), r[1].clone())).unzip();
        TopicVocabulary::new(labels, sources, EmbeddingMatrix::load(embedding_path)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicClustering {
    pub tau: f64,
    /// Clusters of topic indices, each sorted, ordered by smallest member.
    pub clusters: Vec<Vec<usize>>,
}

impl TopicClustering {
    /// Cluster index of every topic.
    pub fn assignment(&self, topics: usize) -> Vec<usize> {
        let mut a = vec![usize::MAX; topics];
        for (c, members) in self.clusters.iter().enumerate() {
            for &t in members {
                a[t] = c;
            }
        }
        a
    }

    /// The comma-separated label list whose embedding represents a cluster.
    pub fn cluster_text(&self, c: usize, labels: &[String]) -> String {
        self.clusters[c].iter().map(|&t| labels[t].as_str()).collect::<Vec<_>>().join(", ")
    }
}

/// Cache key of a cluster's embedding: SHA-256 of its label list text.
pub fn cluster_key(text: &str) -> String {
    io::sha256_hex(text.as_bytes())
}

fn sim_matrix(emb: &EmbeddingMatrix) -> Vec<f64> {
    let n = emb.rows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| cosine(emb.row(i), emb.row(j))).collect())
        .collect();
    rows.concat()
}

/// Greedy complete-linkage agglomeration: repeatedly merges the two
/// clusters whose least similar cross pair is most similar, while that
/// similarity exceeds `tau`. Ties go to the lexicographically smallest
/// (cluster, cluster) pair; a merged cluster keeps the lower index.
pub fn cluster_topics(vocab: &TopicVocabulary, tau: f64) -> Result<TopicClustering> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("tau = {tau} outside (0, 1)")));
    }
    let n = vocab.len();
    let mut link = sim_matrix(&vocab.embeddings);
    let mut active = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // best[i]: most similar active cluster k > i (ties to lower k).
    let row_best = |link: &[f64], active: &[bool], i: usize| -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for k in i + 1..n {
            if active[k] && best.is_none_or(|(v, _)| link[i * n + k] > v) {
                best = Some((link[i * n + k], k));
            }
        }
        best
    };
    let mut best: Vec<Option<(f64, usize)>> = (0..n).map(|i| row_best(&link, &active, i)).collect();
    loop {
        let mut pick: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if let (true, Some((v, k))) = (active[i], best[i]) {
                if pick.is_none_or(|(pv, _, _)| v > pv) {
                    pick = Some((v, i, k));
                }
            }
        }
        let Some((v, i, j)) = pick else { break };
        if v <= tau {
            break;
        }
        active[j] = false;
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        for k in 0..n {
            if active[k] && k != i {
                let l = link[i * n + k].min(link[j * n + k]);
                link[i * n + k] = l;
                link[k * n + i] = l;
            }
        }
        best[j] = None;
        best[i] = row_best(&link, &active, i);
        for k in 0..i {
            if active[k] && matches!(best[k], Some((_, b)) if b == i || b == j) {
                best[k] = row_best(&link, &active, k);
            }
        }
        for k in i + 1..j {
            if active[k] && matches!(best[k], Some((_, b)) if b == j) {
                best[k] = row_best(&link, &active, k);
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = members
        .into_iter()
        .zip(&active)
        .filter(|(_, &a)| a)
        .map(|(mut m, _)| {
            m.sort_unstable();
            m
        })
        .collect();
    clusters.sort_by_key(|c| c[0]);
    Ok(TopicClustering { tau, clusters })
}

/// Looks up every cluster's embedding by content hash in `cache`.
/// Singletons fall back to the topic's own embedding; with
/// `mean_fallback`, larger clusters missing from the cache use the mean of
/// their members' embeddings instead of failing.
pub fn cluster_embeddings(
    clustering: &TopicClustering,
    vocab: &TopicVocabulary,
    cache: Option<&EmbeddingMatrix>,
    mean_fallback: bool,
) -> Result<EmbeddingMatrix> {
    let d = vocab.embeddings.dim();
    let index: BTreeMap<&str, usize> = cache
        .map(|c| c.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect())
        .unwrap_or_default();
    if let Some(c) = cache {
        if c.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: c.dim(),
            });
        }
    }
    let mut data = Vec::with_capacity(clustering.clusters.len() * d);
    let mut ids = Vec::with_capacity(clustering.clusters.len());
    for (c, members) in clustering.clusters.iter().enumerate() {
        let text = clustering.cluster_text(c, &vocab.labels);
        let key = cluster_key(&text);
        if let Some(&row) = index.get(key.as_str()) {
            data.extend_from_slice(cache.expect("index implies cache").row(row));
        } else if members.len() == 1 {
            data.extend_from_slice(vocab.embeddings.row(members[0]));
        } else if mean_fallback {
            let mut acc = vec![0.0f64; d];
            for &t in members {
                acc.iter_mut().zip(vocab.embeddings.row(t)).for_each(|(a, &v)| *a += f64::from(v));
            }
            data.extend(acc.iter().map(|a| (a / members.len() as f64) as f32));
        } else {
            return Err(Error::invalid(format!("no cached embedding for cluster `{text}` (key {key})")));
        }
        ids.push(key);
    }
    EmbeddingMatrix::new(d, data, ids)
}

/// Row-stochastic feature → topic probabilities, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTopicDist {
    pub topics: usize,
    /// Per feature: (topic, probability) pairs with nonzero probability.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Features whose decoder row is all zeros (given a uniform distribution).
    pub zero_rows: Vec<usize>,
}

impl FeatureTopicDist {
    pub fn dense_row(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.topics];
        for &(t, p) in &self.rows[j] {
            out[t] = p;
        }
        out
    }
}

/// For each decoder row, the `top_n` most cosine-similar topics (ties to the
/// lower topic index), with similarities floored at 0 and normalized to sum
/// to 1; uniform over those topics if none is positive.
pub fn feature_topic_dist<T: Scalar>(model: &SaeModel<T>, topics: &EmbeddingMatrix, top_n: usize) -> Result<FeatureTopicDist> {
    if topics.dim() != model.d {
        return Err(Error::DimensionMismatch {
            expected: model.d,
            got: topics.dim(),
        });
    }
    let decoder: Vec<Vec<f32>> = (0..model.m)
        .map(|j| model.decoder_row(j).iter().map(|v| v.to_f32().expect("finite")).collect())
        .collect();
    feature_topic_dist_rows(&decoder, topics, top_n)
}

pub fn feature_topic_dist_rows(decoder: &[Vec<f32>], topics: &EmbeddingMatrix, top_n: usize) -> Result<FeatureTopicDist> {
    let nt = topics.rows();
    if nt == 0 || top_n == 0 {
        return Err(Error::Empty("topics".into()));
    }
    let n = top_n.min(nt);
    let rows: Vec<(Vec<(usize, f64)>, bool)> = decoder
        .par_iter()
        .map(|row| {
            if row.iter().all(|&v| v == 0.0) {
                let p = 1.0 / nt as f64;
                return ((0..nt).map(|t| (t, p)).collect(), true);
            }
            let sims: Vec<f64> = (0..nt).map(|t| cosine(row, topics.row(t))).collect();
            let mut order: Vec<usize> = (0..nt).collect();
            order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
            order.truncate(n);
            let weights: Vec<f64> = order.iter().map(|&t| sims[t].max(0.0)).collect();
            let total: f64 = weights.iter().sum();
            let probs: Vec<(usize, f64)> = if total > 0.0 {
                order.iter().zip(&weights).map(|(&t, &w)| (t, w / total)).collect()
            } else {
                order.iter().map(|&t| (t, 1.0 / n as f64)).collect()
            };
            let mut probs: Vec<(usize, f64)> = probs.into_iter().filter(|&(_, p)| p > 0.0).collect();
            probs.sort_by_key(|&(t, _)| t);
            (probs, false)
        })
        .collect();
    let zero_rows = rows.iter().enumerate().filter(|(_, (_, z))| *z).map(|(j, _)| j).collect();
    Ok(FeatureTopicDist {
        topics: nt,
        rows: rows.into_iter().map(|(r, _)| r).collect(),
        zero_rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmiResult {
    pub identities: usize,
    pub topics: usize,
    /// identities × topics, row-major.
    pub pmi: Vec<f64>,
    /// Joint probabilities P(i, t), identities × topics.
    pub joint: Vec<f64>,
    pub p_identity: Vec<f64>,
    pub p_topic: Vec<f64>,
    /// Which SAE run and threshold produced this result.
    pub source: String,
}

impl PmiResult {
    pub fn get(&self, identity: usize, topic: usize) -> f64 {
        self.pmi[identity * self.topics + topic]
    }
}

const FEATURE_CHUNK: usize = 256;

/// PMI between identities and topics, assuming identity and topic are
/// conditionally independent given the SAE feature. `counts` is
/// identities × features, row-major.
pub fn pmi(counts: &[u64], identities: usize, dist: &FeatureTopicDist, source: &str) -> Result<PmiResult> {
    let m = dist.rows.len();
    if counts.len() != identities * m {
        return Err(Error::DimensionMismatch {
            expected: identities * m,
            got: counts.len(),
        });
    }
    let nt = dist.topics;
    let totals: Vec<u64> = (0..m).map(|j| (0..identities).map(|i| counts[i * m + j]).sum()).collect();
    let grand: u64 = totals.iter().sum();
    if grand == 0 {
        return Err(Error::Empty("all activation counts are zero".into()));
    }
    let grand = grand as f64;
    // Partial sums over fixed feature chunks, combined in chunk order.
    let chunks: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..m)
        .step_by(FEATURE_CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut joint = vec![0.0; identities * nt];
            let mut p_i = vec![0.0; identities];
            let mut p_t = vec![0.0; nt];
            for j in start..(start + FEATURE_CHUNK).min(m) {
                if totals[j] == 0 {
                    continue;
                }
                let p_f = totals[j] as f64 / grand;
                for i in 0..identities {
                    let p_if = counts[i * m + j] as f64 / totals[j] as f64;
                    p_i[i] += p_if * p_f;
                    if p_if == 0.0 {
                        continue;
                    }
                    for &(t, p_tf) in &dist.rows[j] {
                        joint[i * nt + t] += p_if * p_tf * p_f;
                    }
                }
                for &(t, p_tf) in &dist.rows[j] {
                    p_t[t] += p_tf * p_f;
                }
            }
            (joint, p_i, p_t)
        })
        .collect();
    let mut joint = vec![0.0; identities * nt];
    let mut p_identity = vec![0.0; identities];
    let mut p_topic = vec![0.0; nt];
    for (jn, pi, pt) in chunks {
        joint.iter_mut().zip(jn).for_each(|(a, b)| *a += b);
        p_identity.iter_mut().zip(pi).for_each(|(a, b)| *a += b);
        p_topic.iter_mut().zip(pt).for_each(|(a, b)| *a += b);
    }
    let pmi = (0..identities * nt)
        .map(|x| {
            let (i, t) = (x / nt, x % nt);
            let num = joint[x].max(PROB_FLOOR);
            let den = p_identity[i].max(PROB_FLOOR) * p_topic[t].max(PROB_FLOOR);
            (num / den).ln()
        })
        .collect();
    Ok(PmiResult {
        identities,
        topics: nt,
        pmi,
        joint,
        p_identity,
        p_topic,
        source: source.to_string(),
    })
}

pub fn pmi_from_counts(counts: &ActivationCounts, dist: &FeatureTopicDist, source: &str) -> Result<PmiResult> {
    pmi(&counts.counts, Identity::COUNT, dist, source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AggregateOrder {
    /// Average over SAE runs, then sum over clusterings.
    #[default]
    MeanThenSum,
    /// Sum over SAE runs, then average over clusterings.
    SumThenMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedTopic {
    pub label: String,
    pub score: f64,
    pub rank: usize,
}

/// Per-topic scores: each topic receives its cluster's PMI in every
/// clustering, combined across SAE runs and clusterings per `order`.
/// `results[c][s]` is the PMI of SAE run `s` over the clusters of
/// `clusterings[c]`. Returns identities × topics.
pub fn topic_scores(
    results: &[Vec<PmiResult>],
    clusterings: &[TopicClustering],
    topics: usize,
    order: AggregateOrder,
) -> Result<Vec<Vec<f64>>> {
    if results.is_empty() || results.len() != clusterings.len() {
        return Err(Error::invalid("need one PMI result set per clustering"));
    }
    let runs = results[0].len();
    if runs == 0 {
        return Err(Error::Empty("SAE runs".into()));
    }
    let identities = results[0][0].identities;
    for (c, set) in results.iter().enumerate() {
        if set.len() != runs {
            return Err(Error::invalid("every clustering needs a result for every SAE run"));
        }
        for r in set {
            if r.identities != identities {
                return Err(Error::invalid("PMI results cover different identity sets"));
            }
            if r.topics != clusterings[c].clusters.len() {
                return Err(Error::DimensionMismatch {
                    expected: clusterings[c].clusters.len(),
                    got: r.topics,
                });
            }
        }
    }
    let mut scores = vec![vec![0.0; topics]; identities];
    for (set, clustering) in results.iter().zip(clusterings) {
        let assign = clustering.assignment(topics);
        for (i, row) in scores.iter_mut().enumerate() {
            for (t, s) in row.iter_mut().enumerate() {
                let c = assign[t];
                let sum: f64 = set.iter().map(|r| r.get(i, c)).sum();
                *s += match order {
                    AggregateOrder::MeanThenSum => sum / runs as f64,
                    AggregateOrder::SumThenMean => sum / clusterings.len() as f64,
                };
            }
        }
    }
    Ok(scores)
}

/// The `top` highest-scoring labels per identity, descending, ties by label.
pub fn top_topics(scores: &[Vec<f64>], labels: &[String], top: usize) -> Vec<Vec<RankedTopic>> {
    scores
        .iter()
        .map(|row| {
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(labels[a].cmp(&labels[b])));
            order
                .into_iter()
                .take(top)
                .enumerate()
                .map(|(r, t)| RankedTopic {
                    label: labels[t].clone(),
                    score: row[t],
                    rank: r + 1,
                })
                .collect()
        })
        .collect()
}

/// One trained SAE with its activation counts.
pub struct SaeRun<'a> {
    pub name: String,
    pub model: &'a SaeModel<f32>,
    pub counts: &'a ActivationCounts,
}

/// Clusters the vocabulary at every threshold and evaluates PMI for every
/// SAE run over each clustering. Returns the clusterings and
/// `results[clustering][run]`.
pub fn sweep(
    runs: &[SaeRun<'_>],
    vocab: &TopicVocabulary,
    taus: &[f64],
    cache: Option<&EmbeddingMatrix>,
    mean_fallback: bool,
    top_n: usize,
) -> Result<(Vec<TopicClustering>, Vec<Vec<PmiResult>>)> {
    let mut clusterings = Vec::with_capacity(taus.len());
    let mut results = Vec::with_capacity(taus.len());
    for &tau in taus {
        let clustering = cluster_topics(vocab, tau)?;
        let emb = cluster_embeddings(&clustering, vocab, cache, mean_fallback)?;
        let set = runs
            .iter()
            .map(|run| {
                let dist = feature_topic_dist(run.model, &emb, top_n)?;
                pmi_from_counts(run.counts, &dist, &format!("{}@{tau:.6}", run.name))
            })
            .collect::<Result<Vec<_>>>()?;
        clusterings.push(clustering);
        results.push(set);
    }
    Ok((clusterings, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab_from(vectors: &[[f32; 2]]) -> TopicVocabulary {
        let labels: Vec<String> = (0..vectors.len()).map(|i| format!("t{i}")).collect();
        let data = vectors.iter().flatten().copied().collect();
        let emb = EmbeddingMatrix::new(2, data, labels.clone()).unwrap();
        TopicVocabulary::new(labels.clone(), vec!["x".into(); labels.len()], emb).unwrap()
    }

    fn angle(deg: f32) -> [f32; 2] {
        let r = deg.to_radians();
        [r.cos(), r.sin()]
    }

    #[test]
    fn sweep_grid() {
        let taus = tau_sweep();
        assert_eq!(taus.len(), 20);
        assert!(taus[0] > 0.8 && taus[19] < 0.95);
        assert!(taus.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hand_linkage_trace() {
        // cos(25.84°) ≈ 0.9; topic 2 is nearly orthogonal to both.
        let v = vocab_from(&[angle(0.0), angle(25.84), angle(95.0)]);
        let c = cluster_topics(&v, 0.8).unwrap();
        assert_eq!(c.clusters, vec![vec![0, 1], vec![2]]);
        let singles = cluster_topics(&v, 0.95).unwrap();
        assert_eq!(singles.clusters.len(), 3);
    }

    #[test]
    fn topic_distribution_normalizes() {
        let topics = EmbeddingMatrix::new(2, vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0], vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let dist = feature_topic_dist_rows(&[vec![0.8, 0.2], vec![0.0, 0.0], vec![-1.0, -0.0001]], &topics, 2).unwrap();
        let r0 = dist.dense_row(0);
        let (s0, s1) = (0.8 / 0.68f64.sqrt(), 0.2 / 0.68f64.sqrt());
        assert!((r0[0] - s0 / (s0 + s1)).abs() < 1e-6);
        assert_eq!(dist.zero_rows, vec![1]);
        assert!((dist.dense_row(1).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let r2 = dist.dense_row(2);
        assert_eq!(r2[2], 1.0);
    }

    #[test]
    fn uniform_conditionals_give_zero_pmi() {
        let dist = FeatureTopicDist {
            topics: 2,
            rows: vec![vec![(0, 0.7), (1, 0.3)], vec![(1, 1.0)], vec![(0, 0.5), (1, 0.5)]],
            zero_rows: vec![],
        };
        let counts = [2, 4, 6, 1, 2, 3];
        let r = pmi(&counts, 2, &dist, "t").unwrap();
        assert!(r.pmi.iter().all(|v| v.abs() < 1e-10), "{:?}", r.pmi);
        assert!((r.joint.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(pmi(&[0, 0, 0, 0, 0, 0], 2, &dist, "t").is_err());
    }

    #[test]
    fn aggregation_adds_over_clusterings() {
        let mk = |v: Vec<f64>, topics| PmiResult {
            identities: 1,
            topics,
            pmi: v,
            joint: vec![],
            p_identity: vec![],
            p_topic: vec![],
            source: String::new(),
        };
        let singles = TopicClustering {
            tau: 0.9,
            clusters: vec![vec![0], vec![1]],
        };
        let merged = TopicClustering {
            tau: 0.85,
            clusters: vec![vec![0, 1]],
        };
        let results = vec![vec![mk(vec![1.0, 2.0], 2)], vec![mk(vec![0.5], 1)]];
        let s = topic_scores(&results, &[singles, merged], 2, AggregateOrder::MeanThenSum).unwrap();
        assert_eq!(s, vec![vec![1.5, 2.5]]);
        let labels = vec!["b".to_string(), "a".to_string()];
        let top = top_topics(&[vec![1.0, 1.0]], &labels, 20);
        assert_eq!(top[0][0].label, "a");
    }

    proptest! {
        #[test]
        fn clustering_is_valid_partition(angles in prop::collection::vec(0.0f32..180.0, 1..25), tau in 0.05f64..0.99) {
            let vecs: Vec<[f32; 2]> = angles.iter().map(|&a| angle(a)).collect();
            let v = vocab_from(&vecs);
            let c = cluster_topics(&v, tau).unwrap();
            let mut seen = vec![0; vecs.len()];
            for cl in &c.clusters {
                for &a in cl {
                    seen[a] += 1;
                    for &b in cl {
                        if a != b {
                            prop_assert!(cosine(v.embeddings.row(a), v.embeddings.row(b)) > tau);
                        }
                    }
                }
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
        }

        #[test]
        fn aggregate_orders_rank_alike(vals in prop::collection::vec(-2.0f64..2.0, 12)) {
            let mk = |v: &[f64]| PmiResult { identities: 2, topics: 3, pmi: v.to_vec(), joint: vec![], p_identity: vec![], p_topic: vec![], source: String::new() };
            let clustering = TopicClustering { tau: 0.9, clusters: vec![vec![0], vec![1], vec![2]] };
            let results = vec![vec![mk(&vals[..6]), mk(&vals[6..])]];
            let labels: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
            let a = topic_scores(&results, std::slice::from_ref(&clustering), 3, AggregateOrder::MeanThenSum).unwrap();
            let b = topic_scores(&results, &[clustering], 3, AggregateOrder::SumThenMean).unwrap();
            let ra: Vec<Vec<String>> = top_topics(&a, &labels, 3).into_iter().map(|r| r.into_iter().map(|x| x.label).collect()).collect();
            let rb: Vec<Vec<String>> = top_topics(&b, &labels, 3).into_iter().map(|r| r.into_iter().map(|x| x.label).collect()).collect();
            prop_assert_eq!(ra, rb);
        }
    }
}
