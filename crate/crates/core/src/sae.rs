//! Sparse autoencoders with Top-K and Batch-Top-K sparsity, trained with
//! Adam on mean squared reconstruction error, and per-identity feature
//! activation counts.
//!
//! Shapes: `w_enc` is d × m, `w_dec` is m × d (both row-major), with
//! `code = sparsify(relu((x − b_dec) · w_enc + b_enc))` and
//! `x̂ = code · w_dec + b_dec`. Parameters are stored in the scalar type `T`
//! (f32 for real data, f64 for numerical checks); every reduction
//! accumulates in f64.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_traits::Float;
use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Identity;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::io;

pub trait Scalar: Float + Send + Sync + fmt::Debug + 'static {}
impl<T: Float + Send + Sync + fmt::Debug + 'static> Scalar for T {}

#[inline]
fn f<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("finite scalar")
}

#[inline]
fn t<T: Scalar>(v: f64) -> T {
    T::from(v).expect("representable scalar")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "topk")]
    TopK,
    #[serde(rename = "batch_topk")]
    BatchTopK,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::TopK => "topk",
            Variant::BatchTopK => "batch_topk",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(Variant::TopK),
            "batch_topk" => Ok(Variant::BatchTopK),
            _ => Err(Error::invalid(format!("unknown SAE variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaeConfig {
    pub variant: Variant,
    /// Dictionary size as a multiple of the input dimension.
    pub expansion: usize,
    pub k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Number of contiguous batch shards whose gradients are computed in
    /// parallel and summed in shard order. 1 is the reference serial loop;
    /// other values may differ from it in the last bits but never depend
    /// on the thread count.
    #[serde(default = "one")]
    pub grad_shards: usize,
}

fn one() -> usize {
    1
}

impl Default for SaeConfig {
    fn default() -> Self {
        SaeConfig {
            variant: Variant::TopK,
            expansion: 16,
            k: 20,
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 10,
            seed: 0,
            grad_shards: 1,
        }
    }
}

impl SaeConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.expansion == 0 || self.k == 0 || self.batch_size == 0 || self.grad_shards == 0 {
            return Err(Error::invalid("SAE expansion, k, batch size and grad shards must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("SAE learning rate must be positive"));
        }
        if d == 0 || self.k > self.expansion * d {
            return Err(Error::invalid(format!(
                "k = {} exceeds dictionary size {}",
                self.k,
                self.expansion * d
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel<T: Scalar> {
    pub d: usize,
    pub m: usize,
    pub w_enc: Vec<T>,
    pub b_enc: Vec<T>,
    pub w_dec: Vec<T>,
    pub b_dec: Vec<T>,
    pub config: SaeConfig,
    /// Activation threshold used to encode single rows with a Batch-Top-K
    /// model: the mean, over training batches, of the smallest activation
    /// kept by the batch selection.
    pub threshold: Option<f64>,
}

/// Keeps the `k` largest positive entries (ties to the lower index) and
/// zeroes the rest.
pub fn topk_in_place<T: Scalar>(a: &mut [T], k: usize) {
    let mut pos: Vec<usize> = (0..a.len()).filter(|&j| a[j] > T::zero()).collect();
    if pos.len() <= k {
        return;
    }
    let cmp = |&x: &usize, &y: &usize| a[y].partial_cmp(&a[x]).unwrap_or(Ordering::Equal).then(x.cmp(&y));
    pos.select_nth_unstable_by(k, cmp);
    for &j in &pos[k..] {
        a[j] = T::zero();
    }
}

/// Keeps the `k·B` largest positive entries across a batch of `B` rows
/// (ties to the lower flat index).
pub fn batch_topk_in_place<T: Scalar>(codes: &mut [T], rows: usize, k: usize) {
    let keep = k * rows;
    let mut pos: Vec<usize> = (0..codes.len()).filter(|&j| codes[j] > T::zero()).collect();
    if pos.len() <= keep {
        return;
    }
    let cmp = |&x: &usize, &y: &usize| codes[y].partial_cmp(&codes[x]).unwrap_or(Ordering::Equal).then(x.cmp(&y));
    pos.select_nth_unstable_by(keep, cmp);
    for &j in &pos[keep..] {
        codes[j] = T::zero();
    }
}

impl<T: Scalar> SaeModel<T> {
    /// Encoder uniform in ±1/√d, decoder its row-normalized transpose, zero biases.
    pub fn init(d: usize, config: &SaeConfig) -> Result<Self> {
        config.validate(d)?;
        let m = config.expansion * d;
        let bound = 1.0 / (d as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w_enc: Vec<T> = (0..d * m).map(|_| t(dist.sample(&mut rng))).collect();
        let mut w_dec = vec![T::zero(); m * d];
        for i in 0..d {
            for j in 0..m {
                w_dec[j * d + i] = w_enc[i * m + j];
            }
        }
        let mut model = SaeModel {
            d,
            m,
            w_enc,
            b_enc: vec![T::zero(); m],
            w_dec,
            b_dec: vec![T::zero(); d],
            config: config.clone(),
            threshold: None,
        };
        model.normalize_decoder();
        Ok(model)
    }

    pub fn normalize_decoder(&mut self) {
        let d = self.d;
        for row in self.w_dec.chunks_mut(d) {
            let norm = row.iter().map(|&v| f(v) * f(v)).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v = t(f(*v) / norm));
            }
        }
    }

    pub fn decoder_row(&self, j: usize) -> &[T] {
        &self.w_dec[j * self.d..(j + 1) * self.d]
    }

    /// Rectified pre-activations of one row.
    pub fn activations(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let (d, m) = (self.d, self.m);
        let mut acc: Vec<f64> = self.b_enc.iter().map(|&b| f(b)).collect();
        for i in 0..d {
            let xc = f(x[i]) - f(self.b_dec[i]);
            if xc == 0.0 {
                continue;
            }
            let w = &self.w_enc[i * m..(i + 1) * m];
            for (a, &wij) in acc.iter_mut().zip(w) {
                *a += xc * f(wij);
            }
        }
        Ok(acc.into_iter().map(|v| t(v.max(0.0))).collect())
    }

    /// Per-row Top-K code. A Batch-Top-K model with a learned threshold
    /// keeps the activations above the threshold instead.
    pub fn encode(&self, x: &[T]) -> Result<Vec<T>> {
        let mut a = self.activations(x)?;
        match (self.config.variant, self.threshold) {
            (Variant::BatchTopK, Some(theta)) => a.iter_mut().filter(|v| f(**v) < theta).for_each(|v| *v = T::zero()),
            _ => topk_in_place(&mut a, self.config.k),
        }
        Ok(a)
    }

    /// Codes for a batch of rows (row-major, `rows × d`) under the
    /// training-time sparsity rule of the configured variant.
    pub fn encode_batch(&self, x: &[T], rows: usize) -> Result<Vec<T>> {
        if rows == 0 {
            return Err(Error::Empty("batch".into()));
        }
        if x.len() != rows * self.d {
            return Err(Error::DimensionMismatch {
                expected: rows * self.d,
                got: x.len(),
            });
        }
        let mut codes: Vec<T> = Vec::with_capacity(rows * self.m);
        let acts: Vec<Vec<T>> = x
            .par_chunks(self.d)
            .map(|row| self.activations(row).expect("row width checked"))
            .collect();
        for a in acts {
            codes.extend(a);
        }
        match self.config.variant {
            Variant::TopK => codes.chunks_mut(self.m).for_each(|c| topk_in_place(c, self.config.k)),
            Variant::BatchTopK => batch_topk_in_place(&mut codes, rows, self.config.k),
        }
        Ok(codes)
    }

    pub fn decode(&self, code: &[T]) -> Vec<T> {
        let d = self.d;
        let mut acc: Vec<f64> = self.b_dec.iter().map(|&b| f(b)).collect();
        for (j, &z) in code.iter().enumerate() {
            let z = f(z);
            if z == 0.0 {
                continue;
            }
            for (a, &w) in acc.iter_mut().zip(&self.w_dec[j * d..(j + 1) * d]) {
                *a += z * f(w);
            }
        }
        acc.into_iter().map(t).collect()
    }

    /// Mean over rows of the squared reconstruction error, with codes from
    /// [`SaeModel::encode_batch`] applied to consecutive batches.
    pub fn loss(&self, x: &[T], rows: usize) -> Result<f64> {
        let bs = self.config.batch_size.max(1);
        let mut total = 0.0;
        for start in (0..rows).step_by(bs) {
            let end = (start + bs).min(rows);
            let xb = &x[start * self.d..end * self.d];
            let codes = self.encode_batch(xb, end - start)?;
            total += self.batch_sse(xb, &codes);
        }
        Ok(total / rows as f64)
    }

    fn batch_sse(&self, x: &[T], codes: &[T]) -> f64 {
        x.chunks(self.d)
            .zip(codes.chunks(self.m))
            .map(|(xr, z)| {
                self.decode(z)
                    .iter()
                    .zip(xr)
                    .map(|(&h, &xi)| {
                        let r = f(h) - f(xi);
                        r * r
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    /// Loss of one batch under fixed `codes` support, and its gradient with
    /// respect to every parameter (flattened as w_enc, b_enc, w_dec, b_dec).
    pub fn batch_gradient(&self, x: &[T], rows: usize, shards: usize) -> Result<(f64, Vec<f64>)> {
        let codes = self.encode_batch(x, rows)?;
        let shard_len = rows.div_ceil(shards.max(1));
        let parts: Vec<(f64, Vec<f64>)> = (0..rows)
            .step_by(shard_len.max(1))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|start| {
                let end = (start + shard_len).min(rows);
                self.shard_gradient(x, &codes, start, end, rows)
            })
            .collect();
        let mut iter = parts.into_iter();
        let (mut loss, mut grad) = iter.next().expect("at least one shard");
        for (l, g) in iter {
            loss += l;
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        Ok((loss, grad))
    }

    fn param_count(&self) -> usize {
        2 * self.d * self.m + self.m + self.d
    }

    fn shard_gradient(&self, x: &[T], codes: &[T], start: usize, end: usize, rows: usize) -> (f64, Vec<f64>) {
        let (d, m) = (self.d, self.m);
        let scale = 2.0 / rows as f64;
        let mut g = vec![0.0f64; self.param_count()];
        let (g_wenc, rest) = g.split_at_mut(d * m);
        let (g_benc, rest) = rest.split_at_mut(m);
        let (g_wdec, g_bdec) = rest.split_at_mut(m * d);
        let mut loss = 0.0;
        for r in start..end {
            let xr = &x[r * d..(r + 1) * d];
            let z = &codes[r * m..(r + 1) * m];
            let xhat = self.decode(z);
            let resid: Vec<f64> = xhat.iter().zip(xr).map(|(&h, &xi)| f(h) - f(xi)).collect();
            loss += resid.iter().map(|v| v * v).sum::<f64>();
            let dx: Vec<f64> = resid.iter().map(|v| v * scale).collect();
            for (gb, &v) in g_bdec.iter_mut().zip(&dx) {
                *gb += v;
            }
            let xc: Vec<f64> = xr.iter().zip(&self.b_dec).map(|(&xi, &b)| f(xi) - f(b)).collect();
            for j in 0..m {
                let zj = f(z[j]);
                if zj == 0.0 {
                    continue;
                }
                let wrow = &self.w_dec[j * d..(j + 1) * d];
                let mut dz = 0.0;
                for i in 0..d {
                    g_wdec[j * d + i] += zj * dx[i];
                    dz += f(wrow[i]) * dx[i];
                }
                g_benc[j] += dz;
                for i in 0..d {
                    g_wenc[i * m + j] += xc[i] * dz;
                    // b_dec also enters the encoder input with a negative sign.
                    g_bdec[i] -= f(self.w_enc[i * m + j]) * dz;
                }
            }
        }
        (loss / rows as f64, g)
    }

    /// Parameters flattened in gradient order.
    pub fn params(&self) -> Vec<f64> {
        self.w_enc
            .iter()
            .chain(&self.b_enc)
            .chain(&self.w_dec)
            .chain(&self.b_dec)
            .map(|&v| f(v))
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().map(|&v| t::<T>(v));
        for slot in self
            .w_enc
            .iter_mut()
            .chain(self.b_enc.iter_mut())
            .chain(self.w_dec.iter_mut())
            .chain(self.b_dec.iter_mut())
        {
            *slot = it.next().expect("parameter count");
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T: Scalar> {
    pub model: SaeModel<T>,
    /// Full-data loss before training and after every epoch.
    pub loss_trace: Vec<f64>,
}

/// Trains an SAE on `rows × d` row-major data.
pub fn train<T: Scalar>(x: &[T], rows: usize, d: usize, config: &SaeConfig) -> Result<TrainOutcome<T>> {
    if x.len() != rows * d {
        return Err(Error::DimensionMismatch {
            expected: rows * d,
            got: x.len(),
        });
    }
    if rows < config.batch_size {
        return Err(Error::invalid(format!(
            "{rows} rows is fewer than the batch size {}",
            config.batch_size
        )));
    }
    let mut model = SaeModel::<T>::init(d, config)?;
    let mut params = model.params();
    let mut adam = Adam::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..rows).collect();
    let mut trace = vec![check_loss(model.loss(x, rows)?, 0)?];
    let mut kept_min_sum = 0.0;
    let mut kept_min_count = 0u64;
    let mut batch = Vec::with_capacity(config.batch_size * d);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            for &r in chunk {
                batch.extend_from_slice(&x[r * d..(r + 1) * d]);
            }
            if config.variant == Variant::BatchTopK {
                let codes = model.encode_batch(&batch, chunk.len())?;
                if let Some(min) = codes.iter().filter(|&&v| v > T::zero()).map(|&v| f(v)).reduce(f64::min) {
                    kept_min_sum += min;
                    kept_min_count += 1;
                }
            }
            let (_, grad) = model.batch_gradient(&batch, chunk.len(), config.grad_shards)?;
            adam.update(&mut params, &grad, config.learning_rate);
            model.set_params(&params);
            model.normalize_decoder();
            params = model.params();
        }
        trace.push(check_loss(model.loss(x, rows)?, epoch)?);
    }
    if config.variant == Variant::BatchTopK && kept_min_count > 0 {
        model.threshold = Some(kept_min_sum / kept_min_count as f64);
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
    })
}

fn check_loss(loss: f64, epoch: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Diverged(format!("loss is {loss} after epoch {epoch}")))
    }
}

/// |a − b| / (|a| + |b|), or the absolute difference when both are tiny.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs() + b.abs();
    if denom < 1e-12 {
        (a - b).abs()
    } else {
        (a - b).abs() / denom
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"DASAE\0\0\0";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    d: usize,
    m: usize,
    config: SaeConfig,
    threshold: Option<f64>,
    loss_trace: Vec<f64>,
}

impl SaeModel<f32> {
    /// Versioned binary checkpoint: magic, version, JSON header length and
    /// header, then little-endian f32 blocks w_enc, b_enc, w_dec, b_dec.
    pub fn to_bytes(&self, loss_trace: &[f64]) -> Vec<u8> {
        let header = CheckpointHeader {
            d: self.d,
            m: self.m,
            config: self.config.clone(),
            threshold: self.threshold,
            loss_trace: loss_trace.to_vec(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for block in [&self.w_enc, &self.b_enc, &self.w_dec, &self.b_dec] {
            for v in block.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Returns the model and the loss trace stored with it.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, Vec<f64>)> {
        let bad = |m: &str| Error::Format(format!("SAE checkpoint: {m}"));
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        if word(8) != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {}", word(8))));
        }
        let hlen = word(12) as usize;
        let body = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[16..body]).map_err(|e| bad(&e.to_string()))?;
        let (d, m) = (header.d, header.m);
        if m != header.config.expansion * d {
            return Err(bad("dictionary size disagrees with config"));
        }
        let sizes = [d * m, m, m * d, d];
        if bytes.len() - body != sizes.iter().sum::<usize>() * 4 {
            return Err(bad("weight block size mismatch"));
        }
        let mut floats = bytes[body..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        let mut take = |n: usize| -> Vec<f32> { floats.by_ref().take(n).collect() };
        let model = SaeModel {
            d,
            m,
            w_enc: take(sizes[0]),
            b_enc: take(sizes[1]),
            w_dec: take(sizes[2]),
            b_dec: take(sizes[3]),
            config: header.config,
            threshold: header.threshold,
        };
        if model.params().iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite weight"));
        }
        Ok((model, header.loss_trace))
    }

    pub fn save(&self, path: &Path, loss_trace: &[f64]) -> Result<()> {
        io::write_bytes(path, &self.to_bytes(loss_trace))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<f64>)> {
        Self::from_bytes(&io::read_bytes(path)?)
    }
}

/// How often each feature fires for rows of each identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationCounts {
    /// `Identity::COUNT × m`, row-major in [`Identity::index`] order.
    pub counts: Vec<u64>,
    pub m: usize,
    pub rows: u64,
    /// Rows skipped because they carry no identity tag.
    pub untagged: u64,
}

impl ActivationCounts {
    pub fn new(m: usize) -> Self {
        ActivationCounts {
            counts: vec![0; Identity::COUNT * m],
            m,
            rows: 0,
            untagged: 0,
        }
    }

    pub fn get(&self, identity: usize, feature: usize) -> u64 {
        self.counts[identity * self.m + feature]
    }

    /// Column sums: activations of each feature over all identities.
    pub fn feature_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.m];
        for row in self.counts.chunks(self.m) {
            totals.iter_mut().zip(row).for_each(|(t, c)| *t += c);
        }
        totals
    }

    /// Increments `identity`'s count for every nonzero entry of `code`.
    pub fn record<T: Scalar>(&mut self, identity: usize, code: &[T]) {
        for (j, &z) in code.iter().enumerate() {
            if z != T::zero() {
                self.counts[identity * self.m + j] += 1;
            }
        }
        self.rows += 1;
    }

    fn merge(mut self, other: ActivationCounts) -> Self {
        self.counts.iter_mut().zip(other.counts).for_each(|(a, b)| *a += b);
        self.rows += other.rows;
        self.untagged += other.untagged;
        self
    }
}

/// Counts feature activations per identity over identity-tagged rows.
pub fn activation_stats(model: &SaeModel<f32>, data: &EmbeddingMatrix) -> Result<ActivationCounts> {
    if data.dim() != model.d {
        return Err(Error::DimensionMismatch {
            expected: model.d,
            got: data.dim(),
        });
    }
    let tags = data
        .identities()
        .ok_or_else(|| Error::invalid("embedding rows carry no identity tags"))?;
    let out = (0..data.rows())
        .into_par_iter()
        .fold(
            || ActivationCounts::new(model.m),
            |mut acc, r| {
                match tags[r] {
                    Some(id) => {
                        let code = model.encode(data.row(r)).expect("dimension checked");
                        acc.record(id.index(), &code);
                    }
                    None => acc.untagged += 1,
                }
                acc
            },
        )
        .reduce(|| ActivationCounts::new(model.m), ActivationCounts::merge);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(variant: Variant, expansion: usize, k: usize) -> SaeConfig {
        SaeConfig {
            variant,
            expansion,
            k,
            learning_rate: 1e-3,
            batch_size: 4,
            epochs: 1,
            seed: 3,
            grad_shards: 1,
        }
    }

    #[test]
    fn topk_selection() {
        let mut a = [3.0, 1.0, 2.0];
        topk_in_place(&mut a, 2);
        assert_eq!(a, [3.0, 0.0, 2.0]);
        let mut tie = [2.0, 2.0, 1.0];
        topk_in_place(&mut tie, 1);
        assert_eq!(tie, [2.0, 0.0, 0.0]);
        let mut b = [5.0, 0.0, 1.0, 2.0];
        batch_topk_in_place(&mut b, 2, 1);
        assert_eq!(b, [5.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn zero_data_has_zero_initial_loss() {
        let x = vec![0.0f64; 8 * 3];
        let out = train(&x, 8, 3, &cfg(Variant::TopK, 2, 2)).unwrap();
        assert_eq!(out.loss_trace[0], 0.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = SaeModel::<f32>::init(3, &cfg(Variant::BatchTopK, 2, 2)).unwrap();
        let bytes = model.to_bytes(&[1.0, 0.5]);
        let (back, trace) = SaeModel::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(trace, vec![1.0, 0.5]);
        assert!(SaeModel::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn decoder_rows_unit_norm_after_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dist = Uniform::new(-1.0, 1.0);
        let x: Vec<f64> = (0..16 * 4).map(|_| dist.sample(&mut rng)).collect();
        let mut c = cfg(Variant::TopK, 4, 3);
        c.epochs = 3;
        let out = train(&x, 16, 4, &c).unwrap();
        for j in 0..out.model.m {
            let n: f64 = out.model.decoder_row(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-10, "row {j} norm {n}");
        }
    }

    #[test]
    fn untagged_rows_are_counted() {
        let model = SaeModel::<f32>::init(2, &cfg(Variant::TopK, 2, 1)).unwrap();
        let data = EmbeddingMatrix::new(2, vec![1.0, 0.5, -1.0, 2.0], vec!["a".into(), "b".into()])
            .unwrap()
            .with_identities(vec![Identity::from_index(0), None])
            .unwrap();
        let c = activation_stats(&model, &data).unwrap();
        assert_eq!((c.rows, c.untagged), (1, 1));
        let totals = c.feature_totals();
        assert_eq!(totals.iter().sum::<u64>(), c.counts.iter().sum::<u64>());
    }

    proptest! {
        #[test]
        fn topk_cardinality(vals in prop::collection::vec(-3.0f64..3.0, 1..40), k in 1usize..10) {
            let positives = vals.iter().filter(|&&v| v > 0.0).count();
            let mut a: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
            topk_in_place(&mut a, k);
            prop_assert_eq!(a.iter().filter(|&&v| v != 0.0).count(), k.min(positives));
        }

        #[test]
        fn batch_of_one_equals_topk(seed in any::<u64>(), k in 1usize..6) {
            let model = SaeModel::<f64>::init(3, &cfg(Variant::BatchTopK, 4, k)).unwrap();
            let mut topk = model.clone();
            topk.config.variant = Variant::TopK;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dist = Uniform::new(-1.0, 1.0);
            let x: Vec<f64> = (0..3).map(|_| dist.sample(&mut rng)).collect();
            prop_assert_eq!(model.encode_batch(&x, 1).unwrap(), topk.encode(&x).unwrap());
        }
    }
}
