//! Embedding ingestion, projection, normalization and supervised
//! contrastive refinement.
//!
//! Vectors enter either as raw features that still need a projection head
//! and L2 normalization, or already in final form. The EMBD binary format
//! (see [`save_dataset`]) carries that distinction in its header flag.

use std::fs;
use std::ops::Deref;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};

/// A point in feature space. Unit-norm after [`normalize_project`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

impl Deref for EmbeddingVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl From<Vec<f64>> for EmbeddingVector {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// One embedding with its integer class id. Open samples carry label `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub embedding: EmbeddingVector,
    pub label: i32,
}

impl LabeledSample {
    pub fn new(embedding: impl Into<EmbeddingVector>, label: i32) -> Self {
        Self {
            embedding: embedding.into(),
            label,
        }
    }
}

/// A set of labeled embeddings of one shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<LabeledSample>,
    pub n: usize,
    pub class_count: usize,
    /// True when vectors are final representations; false when they are raw
    /// features awaiting projection and normalization.
    pub final_form: bool,
}

impl LabeledDataset {
    /// Validates uniform dimension and derives `class_count` from the labels.
    pub fn new(samples: Vec<LabeledSample>, final_form: bool) -> Result<Self> {
        let n = samples.first().map_or(0, |s| s.embedding.dim());
        for s in &samples {
            if s.embedding.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.embedding.dim(),
                });
            }
            if s.label < -1 {
                return Err(Error::Format(format!("invalid label {}", s.label)));
            }
        }
        let class_count = samples
            .iter()
            .filter(|s| s.label >= 0)
            .map(|s| s.label as usize + 1)
            .max()
            .unwrap_or(0);
        Ok(Self {
            samples,
            n,
            class_count,
            final_form,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample indices grouped by class id, open samples excluded.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.class_count];
        for (i, s) in self.samples.iter().enumerate() {
            if s.label >= 0 {
                groups[s.label as usize].push(i);
            }
        }
        groups
    }
}

/// Linear projection `x -> W x + b`; rows of `weight` index output
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl ProjectionHead {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::DimensionMismatch {
                expected: weight.rows(),
                found: bias.len(),
            });
        }
        for i in 0..weight.rows() {
            if weight.row(i).iter().all(|v| *v == 0.0) {
                return Err(Error::Format(format!(
                    "projection row {i} is all zero; head is degenerate"
                )));
            }
        }
        Ok(Self { weight, bias })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            weight: Matrix::identity(n),
            bias: vec![0.0; n],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// `W x + b` without normalization.
    pub fn apply_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut u = self.weight.matvec(x)?;
        for (ui, bi) in u.iter_mut().zip(&self.bias) {
            *ui += bi;
        }
        Ok(u)
    }
}

/// Projects `x` through the head and scales the result to unit norm.
pub fn normalize_project(x: &[f64], head: &ProjectionHead) -> Result<EmbeddingVector> {
    let u = head.apply_raw(x)?;
    let nrm = norm(&u);
    if nrm < 1e-12 {
        return Err(Error::ZeroVector);
    }
    Ok(EmbeddingVector::new(u.iter().map(|v| v / nrm).collect()))
}

/// Applies [`normalize_project`] to every sample, producing a final-form
/// dataset.
pub fn project_dataset(data: &LabeledDataset, head: &ProjectionHead) -> Result<LabeledDataset> {
    let samples = data
        .samples
        .iter()
        .map(|s| {
            Ok(LabeledSample {
                embedding: normalize_project(&s.embedding, head)?,
                label: s.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(samples, true)
}

/// Gaussian-perturb `z` and renormalize. `sigma == 0` returns `z` unchanged.
pub fn augment(z: &EmbeddingVector, sigma: f64, rng: &mut Pcg64) -> EmbeddingVector {
    if sigma == 0.0 {
        return z.clone();
    }
    let mut v: Vec<f64> = z
        .values
        .iter()
        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let nrm = norm(&v);
    if nrm < 1e-12 {
        return z.clone();
    }
    for x in &mut v {
        *x /= nrm;
    }
    EmbeddingVector::new(v)
}

/// Per-anchor contrastive term: mean over positives of
/// `-(s_ip/tau - logsumexp_a(s_ia/tau))` with `a` ranging over every other
/// batch entry.
fn anchor_term(batch: &[LabeledSample], i: usize, tau: f64) -> Result<f64> {
    let zi = &batch[i].embedding;
    let mut sims = Vec::with_capacity(batch.len() - 1);
    let mut positives = Vec::new();
    for (a, sample) in batch.iter().enumerate() {
        if a == i {
            continue;
        }
        let s = dot(zi, &sample.embedding) / tau;
        if sample.label == batch[i].label {
            positives.push(s);
        }
        sims.push(s);
    }
    if positives.is_empty() {
        return Err(Error::NoPositives { anchor: i });
    }
    let max = sims.iter().fold(f64::NEG_INFINITY, |m, s| m.max(*s));
    let lse = max + sims.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    let mean_pos = positives.iter().sum::<f64>() / positives.len() as f64;
    Ok(lse - mean_pos)
}

/// Supervised contrastive loss over an augmented batch: the mean over
/// anchors of the per-anchor term. Inputs are expected unit-norm.
pub fn scl_loss(batch: &[LabeledSample], tau: f64) -> Result<f64> {
    if batch.len() < 2 {
        return Err(Error::NoPositives { anchor: 0 });
    }
    let mut acc = 0.0;
    for i in 0..batch.len() {
        acc += anchor_term(batch, i, tau)?;
    }
    Ok(acc / batch.len() as f64)
}

/// Gradient of [`scl_loss`] with respect to every batch embedding.
fn scl_loss_gradient(embeddings: &[Vec<f64>], labels: &[i32], tau: f64) -> Result<Vec<Vec<f64>>> {
    let m = embeddings.len();
    let n = embeddings[0].len();
    let mut grads = vec![vec![0.0; n]; m];
    for i in 0..m {
        let zi = &embeddings[i];
        let mut partner = Vec::with_capacity(m - 1);
        for (a, za) in embeddings.iter().enumerate() {
            if a != i {
                partner.push((a, dot(zi, za) / tau));
            }
        }
        let max = partner
            .iter()
            .fold(f64::NEG_INFINITY, |mx, (_, s)| mx.max(*s));
        let denom: f64 = partner.iter().map(|(_, s)| (s - max).exp()).sum();
        let pos_count = partner
            .iter()
            .filter(|(a, _)| labels[*a] == labels[i])
            .count();
        if pos_count == 0 {
            return Err(Error::NoPositives { anchor: i });
        }
        // d(loss)/d(s_ia) accumulated into both endpoints of the pair.
        for (a, s) in &partner {
            let q = (s - max).exp() / denom;
            let indicator = if labels[*a] == labels[i] {
                1.0 / pos_count as f64
            } else {
                0.0
            };
            let g = (q - indicator) / (tau * m as f64);
            for (d, za) in embeddings[*a].iter().enumerate() {
                grads[i][d] += g * za;
                grads[*a][d] += g * zi[d];
            }
        }
    }
    Ok(grads)
}

/// Hyperparameters for the contrastive refinement stage.
#[derive(Debug, Clone)]
pub struct SclConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub sigma: f64,
    pub batch_size: usize,
}

impl Default for SclConfig {
    fn default() -> Self {
        Self {
            epochs: 0,
            learning_rate: 2e-5,
            tau: 0.07,
            sigma: 0.1,
            batch_size: 64,
        }
    }
}

/// Result of projection-head refinement.
#[derive(Debug, Clone)]
pub struct SclOutcome {
    pub head: ProjectionHead,
    pub epoch_losses: Vec<f64>,
}

/// Refines a projection head by gradient descent on the contrastive loss.
///
/// Batches are uniform random; each sample contributes itself and one
/// Gaussian augmentation, so every anchor has a positive partner.
pub fn train_projection_head(
    data: &LabeledDataset,
    head: ProjectionHead,
    cfg: &SclConfig,
    rng: &mut Pcg64,
) -> Result<SclOutcome> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut head = head;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for _ in 0..cfg.epochs {
        shuffle(&mut order, rng);
        let mut loss_acc = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            loss_acc += scl_step(data, &mut head, chunk, cfg, rng)?;
            batches += 1;
        }
        epoch_losses.push(loss_acc / batches.max(1) as f64);
    }
    Ok(SclOutcome { head, epoch_losses })
}

fn scl_step(
    data: &LabeledDataset,
    head: &mut ProjectionHead,
    chunk: &[usize],
    cfg: &SclConfig,
    rng: &mut Pcg64,
) -> Result<f64> {
    let b = chunk.len();
    let out_dim = head.out_dim();

    // Forward pass: base view and augmented view per sample.
    let mut pre_norms = Vec::with_capacity(b);
    let mut base = Vec::with_capacity(b);
    let mut aug = Vec::with_capacity(b);
    for &idx in chunk {
        let u = head.apply_raw(&data.samples[idx].embedding)?;
        let un = norm(&u);
        if un < 1e-12 {
            return Err(Error::ZeroVector);
        }
        let z: Vec<f64> = u.iter().map(|v| v / un).collect();
        let v: Vec<f64> = z
            .iter()
            .map(|a| a + cfg.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let vn = norm(&v);
        if vn < 1e-12 {
            return Err(Error::ZeroVector);
        }
        let zp: Vec<f64> = v.iter().map(|x| x / vn).collect();
        pre_norms.push((un, vn));
        base.push(z);
        aug.push(zp);
    }

    let mut embeddings = base.clone();
    embeddings.extend(aug.iter().cloned());
    let mut labels: Vec<i32> = chunk.iter().map(|&i| data.samples[i].label).collect();
    labels.extend(labels.clone());

    let loss = {
        let samples: Vec<LabeledSample> = embeddings
            .iter()
            .zip(&labels)
            .map(|(e, l)| LabeledSample::new(e.clone(), *l))
            .collect();
        scl_loss(&samples, cfg.tau)?
    };
    let grads = scl_loss_gradient(&embeddings, &labels, cfg.tau)?;

    // Backward pass through the two normalizations onto W and b.
    let mut grad_w = Matrix::zeros(head.out_dim(), head.in_dim());
    let mut grad_b = vec![0.0; out_dim];
    for (slot, &idx) in chunk.iter().enumerate() {
        let (un, vn) = pre_norms[slot];
        // Augmented view: d/dv = (g - (z'.g) z') / |v|, and dv/dz = I.
        let zp = &aug[slot];
        let g_aug = &grads[b + slot];
        let proj = dot(zp, g_aug);
        let mut dz: Vec<f64> = g_aug
            .iter()
            .zip(zp)
            .map(|(g, z)| (g - proj * z) / vn)
            .collect();
        // Base view contributes directly.
        for (d, g) in dz.iter_mut().zip(&grads[slot]) {
            *d += g;
        }
        // Through z = u / |u|.
        let z = &base[slot];
        let proj_u = dot(z, &dz);
        let du: Vec<f64> = dz
            .iter()
            .zip(z)
            .map(|(g, zi)| (g - proj_u * zi) / un)
            .collect();
        grad_w.add_outer_scaled(&du, &data.samples[idx].embedding, 1.0);
        for (gb, d) in grad_b.iter_mut().zip(&du) {
            *gb += d;
        }
    }

    head.weight.add_scaled(&grad_w, -cfg.learning_rate);
    for (bi, g) in head.bias.iter_mut().zip(&grad_b) {
        *bi -= cfg.learning_rate * g;
    }
    Ok(loss)
}

/// Fisher-Yates shuffle driven by the given stream.
pub(crate) fn shuffle(order: &mut [usize], rng: &mut Pcg64) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// Rounds through `f32`, the precision embeddings carry on disk.
pub fn quantize_f32(v: f64) -> f64 {
    v as f32 as f64
}

const EMBD_MAGIC: &[u8; 4] = b"ELID";
const EMBD_VERSION: u32 = 1;
const EMBD_HEADER_LEN: usize = 17;

/// Writes the dataset in the EMBD binary format.
///
/// Layout: magic `ELID`, u32 version, u32 row count, u32 dimension,
/// u8 form flag (0 raw / 1 final), then row-major f32 values and i32
/// labels, all little-endian. Values are stored in f32 precision.
pub fn save_dataset(data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut buf =
        Vec::with_capacity(EMBD_HEADER_LEN + data.len() * (4 * data.n + 4));
    buf.extend_from_slice(EMBD_MAGIC);
    buf.extend_from_slice(&EMBD_VERSION.to_le_bytes());
    buf.extend_from_slice(&(data.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(data.n as u32).to_le_bytes());
    buf.push(u8::from(data.final_form));
    for s in &data.samples {
        if s.embedding.dim() != data.n {
            return Err(Error::DimensionMismatch {
                expected: data.n,
                found: s.embedding.dim(),
            });
        }
        for v in &s.embedding.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    for s in &data.samples {
        buf.extend_from_slice(&s.label.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Reads an EMBD file written by [`save_dataset`].
pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let bytes = fs::read(path)?;
    parse_embd(&bytes)
}

fn parse_embd(bytes: &[u8]) -> Result<LabeledDataset> {
    if bytes.is_empty() {
        return Err(Error::Format("empty file".into()));
    }
    if bytes.len() < EMBD_HEADER_LEN {
        return Err(Error::Format("truncated header".into()));
    }
    if &bytes[0..4] != EMBD_MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != EMBD_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let flag = bytes[16];
    if flag > 1 {
        return Err(Error::Format(format!("unknown form flag {flag}")));
    }

    let payload = bytes.len() - EMBD_HEADER_LEN;
    let expected = rows * (4 * n + 4);
    if payload != expected {
        // A consistent-but-different row width reads as a dimension problem,
        // anything else as corruption.
        if rows > 0 && payload > 4 * rows && (payload - 4 * rows).is_multiple_of(4 * rows) {
            let found = (payload - 4 * rows) / (4 * rows);
            if found != n {
                return Err(Error::DimensionMismatch { expected: n, found });
            }
        }
        return Err(Error::Format(format!(
            "payload is {payload} bytes, header implies {expected}"
        )));
    }

    let mut offset = EMBD_HEADER_LEN;
    let mut samples = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
            values.push(f64::from(v));
            offset += 4;
        }
        samples.push(LabeledSample::new(values, 0));
    }
    for s in samples.iter_mut() {
        let l = i32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        offset += 4;
        if l < -1 {
            return Err(Error::Format(format!("invalid label {l}")));
        }
        s.label = l;
    }
    LabeledDataset::new(samples, flag == 1)
}
