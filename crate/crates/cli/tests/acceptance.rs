//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line with
//! the measured value and its pinned tolerance, then asserts.
//!
//! Run with `cargo test -p demaudit-cli --test acceptance -- --nocapture`
//! to see the lines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use demaudit_core::audit::{self, Attribute, KeywordSet, Level};
use demaudit_core::consensus::{self, ImageDetections, Labeling, Rect};
use demaudit_core::corpus::{CorpusView, Gender, ImageRecord, PersonBox, Race};
use demaudit_core::sae::{self, SaeConfig, SaeModel, Variant};
use demaudit_core::sentiment::{self, HateKind, HateScore, SentimentLexicon};
use demaudit_core::textindex::{InvertedIndex, KeywordQuery, LemmaDictionary};
use demaudit_core::topics::{self, FeatureTopicDist};
use demaudit_core::transfer::{self, BiasPoint, SimilarityPanel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    println!("[{}] criterion {n:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn labeling(name: &str, labels: &[&str]) -> Labeling {
    Labeling::from_pairs(name, labels.iter().enumerate().map(|(i, l)| (format!("item{i}"), *l)))
}

#[test]
fn criterion_01_agreement_oracle() {
    let t = Instant::now();
    // 4 yes/yes, 2 yes/no, 1 no/yes, 3 no/no: p_o = 0.7, p_e = 0.5, κ = 0.4.
    let a = labeling("a", &["y", "y", "y", "y", "y", "y", "n", "n", "n", "n"]);
    let b = labeling("b", &["y", "y", "y", "y", "n", "n", "y", "n", "n", "n"]);
    let mut errs = vec![
        (consensus::cohen_kappa(&a, &b).unwrap() - 0.4).abs(),
        (consensus::cohen_kappa(&a, &a).unwrap() - 1.0).abs(),
        // yes: |A∩B| = 4, |A∪B| = 7. no: 3 of 6.
        (consensus::jaccard_per_label(&a, &b, "y") - 4.0 / 7.0).abs(),
        (consensus::jaccard_per_label(&a, &b, "n") - 3.0 / 6.0).abs(),
    ];
    // 10 items, 14 raters, 5 categories; exact value 4211/20059.
    let table = [
        [0, 0, 0, 0, 14],
        [0, 2, 6, 4, 2],
        [0, 0, 3, 5, 6],
        [0, 3, 9, 2, 0],
        [2, 2, 8, 1, 1],
        [7, 7, 0, 0, 0],
        [3, 2, 6, 3, 0],
        [2, 5, 3, 2, 2],
        [6, 5, 2, 1, 0],
        [0, 2, 2, 3, 7],
    ];
    let counts: Vec<Vec<u64>> = table.iter().map(|r| r.to_vec()).collect();
    errs.push((consensus::fleiss_kappa(&counts, 14).unwrap() - 4211.0 / 20059.0).abs());
    let max = errs.iter().cloned().fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    verdict(
        1,
        "agreement oracle",
        max <= 1e-12 && secs < 1.0,
        format!("max |err| = {max:.2e} (tol 1e-12), {secs:.3} s (limit 1 s)"),
    );
}

#[derive(serde::Deserialize)]
struct VaderCase {
    text: String,
    compound: f64,
}

#[test]
fn criterion_02_sentiment_oracle() {
    let t = Instant::now();
    let lex = SentimentLexicon::builtin();
    let cases: Vec<VaderCase> = include_str!("../../core/tests/fixtures/vader_reference.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let max = cases
        .iter()
        .map(|c| (sentiment::vader_compound(&c.text, &lex) - c.compound).abs())
        .fold(0.0, f64::max);
    let empty = sentiment::vader_compound("", &lex);
    let secs = t.elapsed().as_secs_f64();
    verdict(
        2,
        "sentiment oracle",
        cases.len() == 100 && max <= 1e-9 && empty == 0.0 && secs < 1.0,
        format!(
            "{} sentences, max |err| = {max:.2e} (tol 1e-9), empty -> {empty}, {secs:.3} s (limit 1 s)",
            cases.len()
        ),
    );
}

/// One single-box image per (gender, race) cell: `n` images of which `k`
/// carry a crime keyword in the caption.
fn programmed_corpus(cells: &[(Gender, Race, usize, usize)]) -> CorpusView {
    let mut images = Vec::new();
    let mut boxes = Vec::new();
    for &(g, r, n, k) in cells {
        for i in 0..n {
            let id = format!("{}_{}_{i}", g.as_str(), r.as_str());
            let caption = if i < k { "a thief on the street" } else { "a person on the street" };
            images.push(ImageRecord::new(&id, 640, 480, caption));
            boxes.push(PersonBox {
                image_id: id,
                x: 10,
                y: 10,
                w: 100,
                h: 200,
                confidence: 0.9,
                gender: g,
                race: r,
                person_caption: None,
            });
        }
    }
    let mut c = CorpusView::new(images, boxes).unwrap();
    c.aggregate_labels();
    c
}

#[test]
fn criterion_03_delta_closed_form() {
    let mut cells = Vec::new();
    for (gi, g) in Gender::BINARY.into_iter().enumerate() {
        for (ri, r) in Race::KNOWN.into_iter().enumerate() {
            let n = 20 + 7 * ri + 13 * gi;
            let k = 1 + (3 * ri + 5 * gi) % 9;
            cells.push((g, r, n, k));
        }
    }
    let corpus = programmed_corpus(&cells);
    let dict = LemmaDictionary::builtin();
    let index = InvertedIndex::over_captions(corpus.images(), &dict);
    let crime = KeywordSet::builtin_crime(&dict);
    let vocab = KeywordSet::vocabulary(&index, &dict).unwrap();
    let n_total: usize = cells.iter().map(|c| c.2).sum();
    let k_total: usize = cells.iter().map(|c| c.3).sum();
    let analytic = |attr: Attribute, cat: &str| {
        let pick = |c: &&(Gender, Race, usize, usize)| match attr {
            Attribute::Gender => c.0.as_str() == cat,
            Attribute::Race => c.1.as_str() == cat,
        };
        let n: usize = cells.iter().filter(pick).map(|c| c.2).sum();
        let k: usize = cells.iter().filter(pick).map(|c| c.3).sum();
        (k as f64 / k_total as f64) / (n as f64 / n_total as f64) - 1.0
    };
    let (mut max_err, mut max_vocab, mut rows) = (0.0f64, 0.0f64, 0);
    for attr in [Attribute::Gender, Attribute::Race] {
        for level in [Level::Box, Level::Image] {
            for row in audit::relative_change(&corpus, &index, &crime, attr, level).rows {
                max_err = max_err.max((row.delta.unwrap() - analytic(attr, &row.category)).abs());
                rows += 1;
            }
            for row in audit::relative_change(&corpus, &index, &vocab, attr, level).rows {
                max_vocab = max_vocab.max(row.delta.unwrap().abs());
            }
        }
    }
    verdict(
        3,
        "delta closed form",
        max_err <= 1e-12 && max_vocab == 0.0 && rows == 18,
        format!("{rows} group rows, max |Δ − analytic| = {max_err:.2e} (tol 1e-12), full vocabulary max |Δ| = {max_vocab}"),
    );
}

#[test]
fn criterion_04_index_equivalence() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dict = LemmaDictionary::builtin();
    let words: Vec<String> = (0..400).map(|i| format!("w{i}")).collect();
    let extra = ["children", "child", "women", "woman", "running", "the", "and", "thieves", "thief"];
    let docs: Vec<String> = (0..10_000)
        .map(|_| {
            let n = rng.gen_range(1..12);
            (0..n)
                .map(|_| {
                    if rng.gen_bool(0.15) {
                        extra[rng.gen_range(0..extra.len())].to_string()
                    } else {
                        // Skewed so common terms get long posting lists.
                        let r: f64 = rng.gen();
                        words[(r * r * words.len() as f64) as usize].clone()
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let ids: Vec<(u32, &str)> = docs.iter().enumerate().map(|(i, d)| (i as u32, d.as_str())).collect();
    let index = InvertedIndex::build(&ids, &dict).unwrap();
    let doc_lemmas: Vec<std::collections::HashSet<String>> = docs.iter().map(|d| dict.normalize(d).into_iter().collect()).collect();
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=3);
        let phrase: Vec<String> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    extra[rng.gen_range(0..extra.len())].to_string()
                } else {
                    words[rng.gen_range(0..40)].clone()
                }
            })
            .collect();
        let Ok(q) = KeywordQuery::new(&phrase.join(" "), &dict) else { continue };
        let naive: Vec<u32> = (0..docs.len() as u32)
            .filter(|&d| q.lemmas().iter().all(|l| doc_lemmas[d as usize].contains(l)))
            .collect();
        if index.query(&q) != naive {
            mismatches += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        4,
        "index equivalence",
        mismatches == 0 && secs < 5.0,
        format!("100 queries over 10000 docs, {mismatches} mismatches (tol 0), {secs:.2} s (limit 5 s)"),
    );
}

fn fd_gradient_error(variant: Variant, shards: usize) -> f64 {
    let d = 4;
    let cfg = SaeConfig {
        variant,
        expansion: 2,
        k: 3,
        learning_rate: 1e-3,
        batch_size: 5,
        epochs: 1,
        seed: 21,
        grad_shards: shards,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut model = SaeModel::<f64>::init(d, &cfg).unwrap();
    model.b_enc.iter_mut().for_each(|b| *b = rng.gen_range(-0.2..0.2));
    model.b_dec.iter_mut().for_each(|b| *b = rng.gen_range(-0.2..0.2));
    let rows = 5;
    let x: Vec<f64> = (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, grad) = model.batch_gradient(&x, rows, shards).unwrap();
    let base = model.params();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += h;
        model.set_params(&p);
        let up = model.loss(&x, rows).unwrap();
        p[i] -= 2.0 * h;
        model.set_params(&p);
        let down = model.loss(&x, rows).unwrap();
        let fd = (up - down) / (2.0 * h);
        worst = worst.max(sae::relative_error(grad[i], fd));
    }
    worst
}

#[test]
fn criterion_05_sae_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Top-K keeps exactly k of m distinct positive activations.
    let mut card_ok = true;
    let mut batch_ok = true;
    for _ in 0..200 {
        let m = rng.gen_range(4..64);
        let k = rng.gen_range(1..m);
        let v: Vec<f64> = (0..m).map(|_| rng.gen_range(0.001..1.0)).collect();
        let mut a = v.clone();
        sae::topk_in_place(&mut a, k);
        card_ok &= a.iter().filter(|&&x| x != 0.0).count() == k;
        let mut b = v.clone();
        sae::batch_topk_in_place(&mut b, 1, k);
        batch_ok &= a == b;
    }
    let grad_err = [
        fd_gradient_error(Variant::TopK, 1),
        fd_gradient_error(Variant::TopK, 3),
        fd_gradient_error(Variant::BatchTopK, 2),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    // Rank-2 data in 8 dimensions.
    let t = Instant::now();
    let (d, rows) = (8, 256);
    let basis: Vec<f32> = (0..2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x: Vec<f32> = (0..rows)
        .flat_map(|_| {
            let (a, b): (f32, f32) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let basis = &basis;
            (0..d).map(move |j| a * basis[j] + b * basis[d + j]).collect::<Vec<_>>()
        })
        .collect();
    let cfg = SaeConfig {
        variant: Variant::TopK,
        expansion: 16,
        k: 2,
        learning_rate: 1e-3,
        batch_size: 32,
        epochs: 200,
        seed: 7,
        grad_shards: 1,
    };
    let out = sae::train::<f32>(&x, rows, d, &cfg).unwrap();
    let (first, last) = (out.loss_trace[0], *out.loss_trace.last().unwrap());
    let secs = t.elapsed().as_secs_f64();
    let ratio = last / first;
    verdict(
        5,
        "SAE checks",
        card_ok && batch_ok && grad_err < 1e-4 && ratio < 0.1 && secs < 30.0,
        format!(
            "top-k cardinality {card_ok}, batch(B=1) = top-k {batch_ok}, max gradient rel err {grad_err:.2e} (tol 1e-4), \
             final/initial loss {ratio:.4} (limit 0.1) in {secs:.1} s (limit 30 s)"
        ),
    );
}

/// Direct marginalization with dense matrices, independent of the sparse
/// chunked implementation.
fn brute_pmi(counts: &[Vec<u64>], dist: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let (ni, nf, nt) = (counts.len(), dist.len(), dist[0].len());
    let total: f64 = counts.iter().flatten().map(|&c| c as f64).sum();
    let mut joint = vec![vec![0.0; nt]; ni];
    let mut pi = vec![0.0; ni];
    let mut pt = vec![0.0; nt];
    for f in 0..nf {
        for i in 0..ni {
            let p_if = counts[i][f] as f64 / total;
            pi[i] += p_if;
            for t in 0..nt {
                joint[i][t] += p_if * dist[f][t];
                pt[t] += p_if * dist[f][t];
            }
        }
    }
    let floor = |p: f64| p.max(1e-12);
    let pmi = (0..ni)
        .map(|i| (0..nt).map(|t| (floor(joint[i][t]) / (floor(pi[i]) * floor(pt[t]))).ln()).collect())
        .collect();
    (pmi, joint.iter().flatten().sum())
}

fn random_dist(rng: &mut ChaCha8Rng, nf: usize, nt: usize) -> Vec<Vec<f64>> {
    (0..nf)
        .map(|_| {
            let mut row: Vec<f64> = (0..nt).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen() }).collect();
            if row.iter().all(|&p| p == 0.0) {
                row[rng.gen_range(0..nt)] = 1.0;
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
            row
        })
        .collect()
}

fn sparse(dist: &[Vec<f64>]) -> FeatureTopicDist {
    FeatureTopicDist {
        topics: dist[0].len(),
        rows: dist
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(t, &p)| (t, p)).collect())
            .collect(),
        zero_rows: vec![],
    }
}

#[test]
fn criterion_06_pmi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut max_err, mut max_uniform, mut max_mass, mut instances) = (0.0f64, 0.0f64, 0.0f64, 0);
    for ni in 1..=4 {
        for nf in 1..=6 {
            for nt in 1..=8 {
                for _ in 0..3 {
                    let mut counts: Vec<Vec<u64>> =
                        (0..ni).map(|_| (0..nf).map(|_| if rng.gen_bool(0.25) { 0 } else { rng.gen_range(1..50) }).collect()).collect();
                    if counts.iter().flatten().all(|&c| c == 0) {
                        counts[0][0] = 1;
                    }
                    let dist = random_dist(&mut rng, nf, nt);
                    let flat: Vec<u64> = counts.iter().flatten().copied().collect();
                    let got = topics::pmi(&flat, ni, &sparse(&dist), "oracle").unwrap();
                    let (want, _) = brute_pmi(&counts, &dist);
                    for i in 0..ni {
                        for t in 0..nt {
                            max_err = max_err.max((got.get(i, t) - want[i][t]).abs());
                        }
                    }
                    max_mass = max_mass.max((got.joint.iter().sum::<f64>() - 1.0).abs());

                    // Identity conditionals identical across features.
                    let weights: Vec<u64> = (0..ni).map(|_| rng.gen_range(1..5)).collect();
                    let uniform: Vec<u64> = (0..ni)
                        .flat_map(|i| {
                            let w = weights[i];
                            (0..nf).map(move |f| w * (f as u64 + 1))
                        })
                        .collect();
                    let u = topics::pmi(&uniform, ni, &sparse(&dist), "uniform").unwrap();
                    for i in 0..ni {
                        for t in 0..nt {
                            if u.p_topic[t] > 0.0 {
                                max_uniform = max_uniform.max(u.get(i, t).abs());
                            }
                        }
                    }
                    instances += 1;
                }
            }
        }
    }
    verdict(
        6,
        "PMI oracle",
        max_err <= 1e-10 && max_uniform < 1e-10 && max_mass <= 1e-10,
        format!(
            "{instances} instances up to 4×6×8: max |err| {max_err:.2e} (tol 1e-10), uniform max |PMI| {max_uniform:.2e} (tol 1e-10), \
             max |ΣP(i,t) − 1| {max_mass:.2e} (tol 1e-10)"
        ),
    );
}

#[test]
fn criterion_07_transfer() {
    let d = transfer::model_bias(&SimilarityPanel::new(vec![0.3, 0.5], vec![0.2, 0.4]).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut max_affine = 0.0f64;
    let mut scale_exact = true;
    for _ in 0..200 {
        let f: Vec<f64> = (0..rng.gen_range(2..20)).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let m: Vec<f64> = (0..rng.gen_range(2..20)).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let base = transfer::model_bias(&SimilarityPanel::new(f.clone(), m.clone()).unwrap()).unwrap();
        // Power-of-two scaling is exact in floating point, so d must be bit-identical.
        let p = SimilarityPanel::new(f.iter().map(|v| v * 0.5).collect(), m.iter().map(|v| v * 0.5).collect()).unwrap();
        scale_exact &= transfer::model_bias(&p).unwrap() == base;
        let (shift, scale) = (rng.gen_range(-0.3..0.3), rng.gen_range(0.2..1.0));
        let moved = |v: &Vec<f64>| v.iter().map(|x| x * scale + shift).collect::<Vec<_>>();
        let q = SimilarityPanel { female: moved(&f), male: moved(&m) };
        max_affine = max_affine.max((transfer::model_bias(&q).unwrap() - base).abs());
    }

    let points: Vec<BiasPoint> = (0..500)
        .map(|i| {
            let x: f64 = rng.gen();
            BiasPoint {
                category: format!("c{i}"),
                dataset_bias: x,
                model_bias: 0.8 * x + rng.gen_range(-0.2..0.2),
            }
        })
        .collect();
    let fit = transfer::fit(&points).unwrap();
    // Normal equations on raw sums.
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.dataset_bias, b + p.model_bias));
    let sxx: f64 = points.iter().map(|p| p.dataset_bias * p.dataset_bias).sum();
    let syy: f64 = points.iter().map(|p| p.model_bias * p.model_bias).sum();
    let sxy: f64 = points.iter().map(|p| p.dataset_bias * p.model_bias).sum();
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let rho = (n * sxy - sx * sy) / (det.sqrt() * (n * syy - sy * sy).sqrt());
    let fit_err = [(fit.slope - slope).abs(), (fit.intercept - intercept).abs(), (fit.rho - rho).abs(), (fit.r2 - rho * rho).abs()]
        .into_iter()
        .fold(0.0, f64::max);
    let r2_gap = (fit.rho * fit.rho - fit.r2).abs();
    verdict(
        7,
        "transfer",
        (d - 0.894).abs() <= 1e-3 && scale_exact && max_affine <= 1e-12 && fit_err <= 1e-9 && r2_gap <= 1e-12,
        format!(
            "d = {d:.6} (0.894 ± 1e-3), power-of-two scaling bit-exact {scale_exact}, max affine drift {max_affine:.2e} (tol 1e-12), \
             OLS vs normal equations {fit_err:.2e} (tol 1e-9), |ρ² − R²| {r2_gap:.2e} (tol 1e-12)"
        ),
    );
}

/// Greedy trace written out directly: every (prediction, ground truth)
/// pair, predictions by descending confidence, each taking its best free
/// ground truth if that clears the threshold.
fn brute_recall(images: &[ImageDetections], t: f64) -> usize {
    let mut matched = 0;
    for det in images {
        let mut preds: Vec<(usize, f64)> = det.pred.iter().enumerate().map(|(i, p)| (i, p.1)).collect();
        preds.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut free: Vec<bool> = vec![true; det.gt.len()];
        for (p, _) in preds {
            let cands: Vec<(usize, f64)> =
                (0..det.gt.len()).filter(|&g| free[g]).map(|g| (g, det.pred[p].0.iou(&det.gt[g]))).collect();
            let best = cands.iter().fold(None, |acc: Option<(usize, f64)>, &(g, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((g, v)),
            });
            if let Some((g, v)) = best {
                if v >= t {
                    free[g] = false;
                    matched += 1;
                }
            }
        }
    }
    matched
}

#[test]
fn criterion_08_recall() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut images = Vec::new();
    let mut gt_total = 0;
    while gt_total < 100 {
        let n = rng.gen_range(1..=5).min(100 - gt_total);
        let gt: Vec<Rect> = (0..n)
            .map(|_| Rect::new(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0), rng.gen_range(20.0..150.0), rng.gen_range(20.0..150.0)))
            .collect();
        let mut pred: Vec<(Rect, f64)> = Vec::new();
        for g in &gt {
            if rng.gen_bool(0.85) {
                let s = rng.gen_range(0.8..1.2);
                let r = Rect::new(g.x + rng.gen_range(-0.2..0.2) * g.w, g.y + rng.gen_range(-0.2..0.2) * g.h, g.w * s, g.h * s);
                pred.push((r, rng.gen()));
            }
        }
        for _ in 0..rng.gen_range(0..3) {
            pred.push((Rect::new(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0), 60.0, 60.0), rng.gen()));
        }
        gt_total += n;
        images.push(ImageDetections { pred, gt });
    }
    let cfg = consensus::GtMatchConfig::standard();
    let report = consensus::detection_recall(&images, &cfg).unwrap();
    let brute: Vec<usize> = cfg.thresholds().iter().map(|&t| brute_recall(&images, t)).collect();
    let monotone = report.recall.windows(2).all(|w| w[0] >= w[1]);
    verdict(
        8,
        "recall",
        report.gt_total == 100 && report.matched == brute && monotone && report.thresholds.len() == 10,
        format!("100 boxes, matched {:?} vs brute force {:?}, monotone {monotone}", report.matched, brute),
    );
}

#[test]
fn criterion_09_hcr() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scores: Vec<HateScore> = (0..1000)
        .map(|i| {
            let mut s = || {
                // Quantized so many scores sit exactly on grid thresholds.
                if rng.gen_bool(0.2) {
                    (rng.gen_range(0..=20) as f64) * 0.05
                } else {
                    rng.gen()
                }
            };
            HateScore { image_id: format!("i{i}"), hateful: s(), targeted: s(), aggressive: s() }
        })
        .collect();
    let grid: Vec<f64> = (0..=20).map(|q| q as f64 * 0.05).collect();
    let (mut mismatches, mut monotone) = (0, true);
    for kind in HateKind::ALL {
        let mut prev = f64::INFINITY;
        for &tau in &grid {
            let got = sentiment::hcr(&scores, kind, tau).unwrap();
            let direct = 100.0 * scores.iter().filter(|s| s.get(kind) > tau).count() as f64 / scores.len() as f64;
            if got != direct {
                mismatches += 1;
            }
            monotone &= got <= prev;
            prev = got;
        }
    }
    verdict(
        9,
        "HCR",
        mismatches == 0 && monotone,
        format!("3 types × {} thresholds, {mismatches} mismatches vs direct count, monotone {monotone}", grid.len()),
    );
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_pipeline(out: &Path, threads: usize) -> (i32, f64) {
    let config = repo_root().join("configs/sample.toml");
    let t = Instant::now();
    let code = demaudit_cli::run([
        "demaudit".to_string(),
        "--config".into(),
        config.display().to_string(),
        "--threads".into(),
        threads.to_string(),
        "--out".into(),
        out.display().to_string(),
        "pipeline".into(),
    ]);
    (code, t.elapsed().as_secs_f64())
}

fn report_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            if p.is_dir() {
                if rel != "manifests" {
                    walk(root, &p, out);
                }
            } else {
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn criterion_10_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("t1"), tmp.path().join("t4"), tmp.path().join("t1_again"));
    let (code_a, secs) = run_pipeline(&a, 1);
    let (code_b, _) = run_pipeline(&b, 4);
    let (code_c, _) = run_pipeline(&c, 1);
    let (fa, fb, fc) = (report_files(&a), report_files(&b), report_files(&c));
    let differing: Vec<&String> = fa.keys().filter(|k| fb.get(*k) != fa.get(*k) || fc.get(*k) != fa.get(*k)).collect();

    let fixture: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(repo_root().join("data/sample/fixture.json")).unwrap()).unwrap();
    let ingest: serde_json::Value = serde_json::from_slice(&fa["ingest/ingest.json"]).unwrap();
    let counts_match = ingest["images"] == fixture["images"] && ingest["boxes_loaded"] == fixture["boxes"];
    let all_have_hash = fa
        .iter()
        .filter(|(k, _)| k.ends_with(".csv") || k.ends_with(".json"))
        .all(|(_, v)| String::from_utf8_lossy(v).contains("config_hash"));
    verdict(
        10,
        "end-to-end",
        code_a == 0 && code_b == 0 && code_c == 0 && secs < 60.0 && differing.is_empty() && counts_match && all_have_hash,
        format!(
            "exit codes {code_a}/{code_b}/{code_c}, one-thread run {secs:.1} s (limit 60 s), {} report files, \
             {} differ across runs and thread counts (tol 0), ingest counts match fixture {counts_match}, config hash in every report {all_have_hash}",
            fa.len(),
            differing.len()
        ),
    );
}
