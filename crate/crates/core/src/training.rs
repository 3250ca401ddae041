//! Boundary optimization: centroid and scale estimation, the dual
//! expansion/contraction losses with their analytic matrix gradients, and
//! the SGD loop that fits one matrix per known class.
//!
//! Centroids and scales are frozen once computed; only the matrices learn.
//! Samples are brought into a canonical order before anything random
//! happens, so results depend on the seed and the data values, never on the
//! order samples arrive in.

use serde::Serialize;

use crate::baselines::ClabParams;
use crate::ellipsoid::{BoundarySet, Ellipsoid};
use crate::error::{Error, Result};
use crate::feature_space::{shuffle, LabeledDataset, LabeledSample};
use crate::linalg::{norm, sub, KahanSum, Matrix};
use crate::pseudo_open::{synthesize_batch, MixConfig};
use crate::rng::substream;

/// Which negative loss drives boundary contraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeStrategy {
    /// Dual contraction loss on synthesized pseudo-open samples.
    EliDecide,
    /// Compression hinge on in-class samples inside their own boundary.
    Adb,
    /// Compression hinge plus band hinges on a random other-class sample.
    Clab,
    /// Compression hinge on synthesized pseudo-open samples.
    AdbGen,
}

impl NegativeStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EliDecide => "elidecide",
            Self::Adb => "adb",
            Self::Clab => "clab",
            Self::AdbGen => "adbgen",
        }
    }
}

impl std::str::FromStr for NegativeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elidecide" => Ok(Self::EliDecide),
            "adb" => Ok(Self::Adb),
            "clab" => Ok(Self::Clab),
            "adbgen" => Ok(Self::AdbGen),
            other => Err(Error::Format(format!(
                "unknown negative loss '{other}' (expected adb|clab|adbgen|elidecide)"
            ))),
        }
    }
}

/// Boundary training hyperparameters. Defaults follow the reference
/// configuration: lr 1e-3, beta 0.5, P=3, alpha=0.6.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub boundary_lr: f64,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub mix: MixConfig,
    pub seed: u64,
    pub patience: usize,
    pub strategy: NegativeStrategy,
    pub clab: ClabParams,
    /// Apply each negative only to its nearest class instead of all classes.
    pub nearest_class_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            boundary_lr: 1e-3,
            beta: 0.5,
            epochs: 100,
            batch_size: 64,
            mix: MixConfig::default(),
            seed: 0,
            patience: 10,
            strategy: NegativeStrategy::EliDecide,
            clab: ClabParams::default(),
            nearest_class_only: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.boundary_lr <= 0.0 || self.boundary_lr.is_nan() {
            return Err(Error::Format(format!(
                "boundary learning rate {} must be positive",
                self.boundary_lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Format("batch size must be at least 1".into()));
        }
        if self.beta < 0.0 {
            return Err(Error::Format(format!(
                "penalty strength {} must be nonnegative",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Componentwise mean of the samples.
pub fn compute_centroid(samples: &[&[f64]]) -> Result<Vec<f64>> {
    let first = samples.first().ok_or(Error::EmptyClass(-1))?;
    let n = first.len();
    let mut acc = vec![0.0; n];
    for s in samples {
        if s.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: s.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(*s) {
            *a += v;
        }
    }
    let count = samples.len() as f64;
    for a in &mut acc {
        *a /= count;
    }
    Ok(acc)
}

/// Mean Euclidean distance from the samples to the centroid.
pub fn compute_delta(samples: &[&[f64]], centroid: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyClass(-1));
    }
    let mut acc = KahanSum::new();
    for s in samples {
        acc.add(crate::linalg::distance(s, centroid));
    }
    let delta = acc.value() / samples.len() as f64;
    if delta < 1e-12 {
        return Err(Error::DegenerateClass(-1));
    }
    Ok(delta)
}

/// Hinge pulling the boundary outward over an exterior in-class sample:
/// `max(r - delta, 0)`.
pub fn expansion_loss(e: &Ellipsoid, z: &[f64]) -> Result<f64> {
    let r = crate::ellipsoid::radius(e, z)?;
    Ok((r - e.scale).max(0.0))
}

pub(crate) fn contraction_from_radius(r: f64, delta: f64, beta: f64) -> f64 {
    if r < delta {
        (delta - r) + beta
    } else {
        beta * (delta - r).exp()
    }
}

/// Penalty pushing the boundary inward against a negative sample: linear in
/// the penetration depth inside, exponentially decaying outside, equal to
/// `beta` exactly on the boundary.
pub fn contraction_loss(e: &Ellipsoid, z: &[f64], beta: f64) -> Result<f64> {
    let r = crate::ellipsoid::radius(e, z)?;
    Ok(contraction_from_radius(r, e.scale, beta))
}

/// Expansion and contraction sums over one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub expansion_total: f64,
    pub contraction_total: f64,
    pub total: f64,
}

/// Batch objective: expansion summed over in-class samples against their
/// own boundary, contraction summed over every (class, negative) pair.
/// Requires the negative batch to match the positive batch in size.
pub fn total_loss(
    bs: &BoundarySet,
    batch: &[LabeledSample],
    negatives: &[Vec<f64>],
    beta: f64,
) -> Result<LossBreakdown> {
    if negatives.len() != batch.len() {
        return Err(Error::SizeMismatch {
            batch: batch.len(),
            negatives: negatives.len(),
        });
    }
    let classes = bs.class_count();
    let mut expansion = KahanSum::new();
    for s in batch {
        let k = class_index(s.label, classes)?;
        expansion.add(expansion_loss(&bs.ellipsoids[k], &s.embedding)?);
    }
    let mut contraction = KahanSum::new();
    for e in &bs.ellipsoids {
        for z in negatives {
            contraction.add(contraction_loss(e, z, beta)?);
        }
    }
    Ok(LossBreakdown {
        expansion_total: expansion.value(),
        contraction_total: contraction.value(),
        total: expansion.value() + contraction.value(),
    })
}

fn class_index(label: i32, classes: usize) -> Result<usize> {
    if label < 0 || label as usize >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(label as usize)
}

/// Whether a gradient is taken of the expansion or the contraction loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientKind {
    Expansion,
    Contraction,
}

/// Counters for numerically degenerate gradient evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GradientDiagnostics {
    /// Times an active-branch gradient was clamped to zero because the
    /// radius fell below 1e-12.
    pub near_singular_clamps: u64,
}

/// Analytic gradient of the selected loss with respect to the matrix `A`.
///
/// With `v = z - c` and `r = |A v|`, every active branch is a scalar
/// multiple of `(A v) v^T / r`; inactive branches are the zero matrix.
/// Gradients at radii below 1e-12 are clamped to zero and counted.
pub fn loss_gradient(
    e: &Ellipsoid,
    z: &[f64],
    kind: GradientKind,
    beta: f64,
    diag: &mut GradientDiagnostics,
) -> Result<Matrix> {
    let n = e.dim();
    let mut out = Matrix::zeros(n, n);
    let v = sub_checked(e, z)?;
    let av = e.matrix.matvec(&v)?;
    let r = norm(&av);
    if let Some(scale) = branch_scale(kind, r, e.scale, beta, diag) {
        out.add_outer_scaled(&av, &v, scale);
    }
    Ok(out)
}

fn sub_checked(e: &Ellipsoid, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != e.dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            found: z.len(),
        });
    }
    Ok(sub(z, &e.centroid))
}

/// The scalar multiplying `(A v) v^T` for the active branch, or `None` for
/// branches with zero gradient.
fn branch_scale(
    kind: GradientKind,
    r: f64,
    delta: f64,
    beta: f64,
    diag: &mut GradientDiagnostics,
) -> Option<f64> {
    match kind {
        GradientKind::Expansion => {
            if r > delta {
                guarded(1.0, r, diag)
            } else {
                None
            }
        }
        GradientKind::Contraction => {
            if r < delta {
                guarded(-1.0, r, diag)
            } else {
                guarded(-beta * (delta - r).exp(), r, diag)
            }
        }
    }
}

fn guarded(numerator: f64, r: f64, diag: &mut GradientDiagnostics) -> Option<f64> {
    if r < 1e-12 {
        diag.near_singular_clamps += 1;
        None
    } else {
        Some(numerator / r)
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub expansion_total: f64,
    pub contraction_total: f64,
    pub total: f64,
    pub val_total: f64,
}

/// Trained boundaries plus the run's bookkeeping.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub boundaries: BoundarySet,
    pub log: Vec<EpochRecord>,
    /// Epoch whose snapshot was returned; `None` when zero epochs ran.
    pub best_epoch: Option<usize>,
    pub diagnostics: GradientDiagnostics,
    /// Anchors for which the CLAB band hinges had no other-class partner.
    pub clab_skipped_anchors: u64,
    /// Smallest singular value of each returned matrix.
    pub min_singular_values: Vec<f64>,
}

struct ClassStats {
    centroids: Vec<Vec<f64>>,
    deltas: Vec<f64>,
}

fn annotate_class(err: Error, class: i32) -> Error {
    match err {
        Error::EmptyClass(_) => Error::EmptyClass(class),
        Error::DegenerateClass(_) => Error::DegenerateClass(class),
        other => other,
    }
}

fn class_stats(data: &LabeledDataset) -> Result<ClassStats> {
    let groups = data.class_indices();
    let mut centroids = Vec::with_capacity(groups.len());
    let mut deltas = Vec::with_capacity(groups.len());
    for (k, group) in groups.iter().enumerate() {
        let rows: Vec<&[f64]> = group
            .iter()
            .map(|i| data.samples[*i].embedding.values.as_slice())
            .collect();
        let centroid =
            compute_centroid(&rows).map_err(|e| annotate_class(e, k as i32))?;
        let delta =
            compute_delta(&rows, &centroid).map_err(|e| annotate_class(e, k as i32))?;
        centroids.push(centroid);
        deltas.push(delta);
    }
    Ok(ClassStats { centroids, deltas })
}

/// Sorts samples by label, then lexicographically by value, so downstream
/// randomness is a function of the seed and the data alone.
fn canonical_order(data: &LabeledDataset) -> LabeledDataset {
    let mut samples = data.samples.clone();
    samples.sort_by(|a, b| {
        a.label.cmp(&b.label).then_with(|| {
            for (x, y) in a.embedding.values.iter().zip(&b.embedding.values) {
                let ord = x.total_cmp(y);
                if ord != std::cmp::Ordering::Equal {
                    return ord;
                }
            }
            std::cmp::Ordering::Equal
        })
    });
    LabeledDataset {
        samples,
        n: data.n,
        class_count: data.class_count,
        final_form: data.final_form,
    }
}

struct RadiusParts {
    v: Vec<f64>,
    av: Vec<f64>,
    r: f64,
}

fn radius_parts(matrix: &Matrix, centroid: &[f64], z: &[f64]) -> RadiusParts {
    let v = sub(z, centroid);
    let av = matrix.matvec(&v).expect("dimensions validated upfront");
    let r = norm(&av);
    RadiusParts { v, av, r }
}

/// Fits one boundary matrix per known class.
///
/// Centroids and scales come from the training split and stay frozen; each
/// matrix starts at identity, so zero epochs yields plain balls of radius
/// `delta_k`. Per epoch, shuffled mini-batches and equal-sized negative
/// batches drive summed gradient steps; the snapshot with the lowest
/// validation loss is returned, with early stopping after `patience`
/// epochs without improvement.
pub fn train_boundaries(
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = train.class_count;
    let groups = train.class_indices();
    for (k, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(Error::EmptyClass(k as i32));
        }
    }
    for s in val.samples.iter() {
        class_index(s.label, classes)?;
    }

    let train = canonical_order(train);
    let val = canonical_order(val);
    let stats = class_stats(&train)?;
    let n = train.n;

    let mut matrices: Vec<Matrix> = (0..classes).map(|_| Matrix::identity(n)).collect();
    let mut diagnostics = GradientDiagnostics::default();
    let mut clab_skipped = 0u64;

    if cfg.epochs == 0 {
        let boundaries = assemble(&matrices, &stats)?;
        let min_singular_values = boundaries.min_singular_values()?;
        return Ok(TrainOutcome {
            boundaries,
            log: Vec::new(),
            best_epoch: None,
            diagnostics,
            clab_skipped_anchors: 0,
            min_singular_values,
        });
    }

    let mut rng_shuffle = substream(cfg.seed, "boundary");
    let mut rng_neg = substream(cfg.seed, "negatives");

    // Fixed validation negatives keep the early-stopping metric comparable
    // across epochs.
    let uses_pseudo = matches!(
        cfg.strategy,
        NegativeStrategy::EliDecide | NegativeStrategy::AdbGen
    );
    let val_negatives = if uses_pseudo && !val.is_empty() {
        let mut rng_val = substream(cfg.seed, "negatives.val");
        synthesize_batch(&train, val.len(), &cfg.mix, &mut rng_val)?
    } else {
        Vec::new()
    };
    let val_pairs = if cfg.strategy == NegativeStrategy::Clab {
        let mut rng_pair = substream(cfg.seed, "negatives.valpair");
        pair_other_class(&val.samples, (0..val.len()).collect(), &mut rng_pair)
    } else {
        Vec::new()
    };

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_snapshot = matrices.clone();
    let mut stale = 0usize;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng_shuffle);
        let mut exp_acc = KahanSum::new();
        let mut con_acc = KahanSum::new();
        for chunk in order.chunks(cfg.batch_size) {
            let (exp, con) = batch_step(
                &train,
                chunk,
                &mut matrices,
                &stats,
                cfg,
                &mut rng_neg,
                &mut diagnostics,
                &mut clab_skipped,
            )?;
            exp_acc.add(exp);
            con_acc.add(con);
        }

        let val_total = validation_loss(
            &val,
            &matrices,
            &stats,
            cfg,
            &val_negatives,
            &val_pairs,
        )?;
        log.push(EpochRecord {
            epoch,
            expansion_total: exp_acc.value(),
            contraction_total: con_acc.value(),
            total: exp_acc.value() + con_acc.value(),
            val_total,
        });

        if val_total < best_val {
            best_val = val_total;
            best_epoch = epoch;
            best_snapshot = matrices.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let boundaries = assemble(&best_snapshot, &stats)?;
    let min_singular_values = boundaries.min_singular_values()?;
    Ok(TrainOutcome {
        boundaries,
        log,
        best_epoch: Some(best_epoch),
        diagnostics,
        clab_skipped_anchors: clab_skipped,
        min_singular_values,
    })
}

fn assemble(matrices: &[Matrix], stats: &ClassStats) -> Result<BoundarySet> {
    let ellipsoids = matrices
        .iter()
        .zip(&stats.centroids)
        .zip(&stats.deltas)
        .map(|((m, c), d)| Ellipsoid::new(c.clone(), m.clone(), *d))
        .collect::<Result<Vec<_>>>()?;
    BoundarySet::new(ellipsoids)
}

/// For each listed anchor, a random other-class sample index, or `None`
/// when the pool holds no other class.
fn pair_other_class(
    samples: &[LabeledSample],
    anchors: Vec<usize>,
    rng: &mut rand_pcg::Pcg64,
) -> Vec<Option<usize>> {
    use rand::Rng;
    anchors
        .iter()
        .map(|&i| {
            let candidates: Vec<usize> = anchors
                .iter()
                .copied()
                .filter(|&j| samples[j].label != samples[i].label)
                .collect();
            if candidates.is_empty() {
                None
            } else {
                Some(candidates[rng.random_range(0..candidates.len())])
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn batch_step(
    train: &LabeledDataset,
    chunk: &[usize],
    matrices: &mut [Matrix],
    stats: &ClassStats,
    cfg: &TrainConfig,
    rng_neg: &mut rand_pcg::Pcg64,
    diagnostics: &mut GradientDiagnostics,
    clab_skipped: &mut u64,
) -> Result<(f64, f64)> {
    let classes = matrices.len();
    let n = train.n;
    let mut grads: Vec<Matrix> = (0..classes).map(|_| Matrix::zeros(n, n)).collect();
    let mut exp_acc = KahanSum::new();
    let mut con_acc = KahanSum::new();

    // Expansion over in-class samples, always on.
    for &idx in chunk {
        let sample = &train.samples[idx];
        let k = class_index(sample.label, classes)?;
        let parts = radius_parts(&matrices[k], &stats.centroids[k], &sample.embedding);
        if parts.r > stats.deltas[k] {
            exp_acc.add(parts.r - stats.deltas[k]);
            if let Some(scale) =
                branch_scale(GradientKind::Expansion, parts.r, stats.deltas[k], 0.0, diagnostics)
            {
                grads[k].add_outer_scaled(&parts.av, &parts.v, scale);
            }
        }
    }

    // Contraction, per strategy.
    match cfg.strategy {
        NegativeStrategy::EliDecide | NegativeStrategy::AdbGen => {
            let beta = if cfg.strategy == NegativeStrategy::EliDecide {
                cfg.beta
            } else {
                0.0
            };
            let negatives = synthesize_batch(train, chunk.len(), &cfg.mix, rng_neg)?;
            for z in &negatives {
                let targets = contraction_targets(z, stats, cfg, classes);
                for k in targets {
                    let parts = radius_parts(&matrices[k], &stats.centroids[k], z);
                    if cfg.strategy == NegativeStrategy::EliDecide {
                        con_acc.add(contraction_from_radius(parts.r, stats.deltas[k], beta));
                        if let Some(scale) = branch_scale(
                            GradientKind::Contraction,
                            parts.r,
                            stats.deltas[k],
                            beta,
                            diagnostics,
                        ) {
                            grads[k].add_outer_scaled(&parts.av, &parts.v, scale);
                        }
                    } else if parts.r < stats.deltas[k] {
                        con_acc.add(stats.deltas[k] - parts.r);
                        if let Some(scale) = guarded(-1.0, parts.r, diagnostics) {
                            grads[k].add_outer_scaled(&parts.av, &parts.v, scale);
                        }
                    }
                }
            }
        }
        NegativeStrategy::Adb => {
            for &idx in chunk {
                let sample = &train.samples[idx];
                let k = class_index(sample.label, classes)?;
                adb_contraction(
                    &matrices[k],
                    &stats.centroids[k],
                    stats.deltas[k],
                    &sample.embedding,
                    1.0,
                    &mut grads[k],
                    &mut con_acc,
                    diagnostics,
                );
            }
        }
        NegativeStrategy::Clab => {
            let pairs = pair_other_class(&train.samples, chunk.to_vec(), rng_neg);
            for (slot, &idx) in chunk.iter().enumerate() {
                let sample = &train.samples[idx];
                let k = class_index(sample.label, classes)?;
                adb_contraction(
                    &matrices[k],
                    &stats.centroids[k],
                    stats.deltas[k],
                    &sample.embedding,
                    1.0,
                    &mut grads[k],
                    &mut con_acc,
                    diagnostics,
                );
                match pairs[slot] {
                    Some(j) => {
                        clab_band(
                            &matrices[k],
                            &stats.centroids[k],
                            stats.deltas[k],
                            &train.samples[j].embedding,
                            &cfg.clab,
                            &mut grads[k],
                            &mut con_acc,
                            diagnostics,
                        );
                    }
                    None => *clab_skipped += 1,
                }
            }
        }
    }

    for (m, g) in matrices.iter_mut().zip(&grads) {
        m.add_scaled(g, -cfg.boundary_lr);
    }
    Ok((exp_acc.value(), con_acc.value()))
}

/// Classes a negative sample applies to: all of them, or just the nearest
/// centroid when configured.
fn contraction_targets(
    z: &[f64],
    stats: &ClassStats,
    cfg: &TrainConfig,
    classes: usize,
) -> Vec<usize> {
    if !cfg.nearest_class_only {
        return (0..classes).collect();
    }
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for (k, c) in stats.centroids.iter().enumerate() {
        let d = crate::linalg::distance(z, c);
        if d < best_dist {
            best = k;
            best_dist = d;
        }
    }
    vec![best]
}

#[allow(clippy::too_many_arguments)]
fn adb_contraction(
    matrix: &Matrix,
    centroid: &[f64],
    delta: f64,
    z: &[f64],
    weight: f64,
    grad: &mut Matrix,
    acc: &mut KahanSum,
    diagnostics: &mut GradientDiagnostics,
) {
    let parts = radius_parts(matrix, centroid, z);
    if parts.r < delta {
        acc.add(weight * (delta - parts.r));
        if let Some(scale) = guarded(-weight, parts.r, diagnostics) {
            grad.add_outer_scaled(&parts.av, &parts.v, scale);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn clab_band(
    matrix: &Matrix,
    centroid: &[f64],
    delta: f64,
    z_neg: &[f64],
    params: &ClabParams,
    grad: &mut Matrix,
    acc: &mut KahanSum,
    diagnostics: &mut GradientDiagnostics,
) {
    let parts = radius_parts(matrix, centroid, z_neg);
    let lower = delta + params.shrink_threshold;
    let upper = delta + params.expand_threshold;
    if parts.r < lower {
        acc.add(params.eta * (lower - parts.r));
        if let Some(scale) = guarded(-params.eta, parts.r, diagnostics) {
            grad.add_outer_scaled(&parts.av, &parts.v, scale);
        }
    }
    if parts.r > upper {
        acc.add(params.eta * (parts.r - upper));
        if let Some(scale) = guarded(params.eta, parts.r, diagnostics) {
            grad.add_outer_scaled(&parts.av, &parts.v, scale);
        }
    }
}

fn validation_loss(
    val: &LabeledDataset,
    matrices: &[Matrix],
    stats: &ClassStats,
    cfg: &TrainConfig,
    val_negatives: &[Vec<f64>],
    val_pairs: &[Option<usize>],
) -> Result<f64> {
    let classes = matrices.len();
    let mut acc = KahanSum::new();
    let mut diag = GradientDiagnostics::default();
    for s in &val.samples {
        let k = class_index(s.label, classes)?;
        let parts = radius_parts(&matrices[k], &stats.centroids[k], &s.embedding);
        if parts.r > stats.deltas[k] {
            acc.add(parts.r - stats.deltas[k]);
        }
    }
    match cfg.strategy {
        NegativeStrategy::EliDecide | NegativeStrategy::AdbGen => {
            let beta = if cfg.strategy == NegativeStrategy::EliDecide {
                cfg.beta
            } else {
                0.0
            };
            for z in val_negatives {
                for k in contraction_targets(z, stats, cfg, classes) {
                    let parts = radius_parts(&matrices[k], &stats.centroids[k], z);
                    if cfg.strategy == NegativeStrategy::EliDecide {
                        acc.add(contraction_from_radius(parts.r, stats.deltas[k], beta));
                    } else if parts.r < stats.deltas[k] {
                        acc.add(stats.deltas[k] - parts.r);
                    }
                }
            }
        }
        NegativeStrategy::Adb => {
            for s in &val.samples {
                let k = class_index(s.label, classes)?;
                let parts = radius_parts(&matrices[k], &stats.centroids[k], &s.embedding);
                if parts.r < stats.deltas[k] {
                    acc.add(stats.deltas[k] - parts.r);
                }
            }
        }
        NegativeStrategy::Clab => {
            for (i, s) in val.samples.iter().enumerate() {
                let k = class_index(s.label, classes)?;
                let parts = radius_parts(&matrices[k], &stats.centroids[k], &s.embedding);
                if parts.r < stats.deltas[k] {
                    acc.add(stats.deltas[k] - parts.r);
                }
                if let Some(j) = val_pairs.get(i).copied().flatten() {
                    let mut unused_grad = Matrix::zeros(val.n, val.n);
                    clab_band(
                        &matrices[k],
                        &stats.centroids[k],
                        stats.deltas[k],
                        &val.samples[j].embedding,
                        &cfg.clab,
                        &mut unused_grad,
                        &mut acc,
                        &mut diag,
                    );
                }
            }
        }
    }
    Ok(acc.value())
}
