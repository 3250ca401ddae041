//! Pseudo-open sample synthesis: convex mixtures of known samples from
//! distinct classes with Dirichlet-drawn weights. Concentrations below one
//! make a single coefficient dominate, so mixtures hug one known class while
//! carrying traces of the others.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rand_pcg::Pcg64;

use crate::error::{Error, Result};
use crate::feature_space::LabeledDataset;
use crate::linalg::norm;

/// Mixture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MixConfig {
    /// Number of known samples mixed per pseudo-open sample.
    pub p: usize,
    /// Dirichlet concentration.
    pub alpha: f64,
    /// Rescale mixtures back to the unit sphere. Off by default: mixtures
    /// are used exactly as the convex combination produces them.
    pub renormalize: bool,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            p: 3,
            alpha: 0.6,
            renormalize: false,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::InsufficientClasses {
                needed: 2,
                available: self.p,
            });
        }
        if self.alpha <= 0.0 || self.alpha.is_nan() {
            return Err(Error::Format(format!(
                "dirichlet alpha {} must be positive",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Draws a symmetric Dirichlet weight vector of length `p` as `p`
/// independent Gamma(alpha, 1) variates normalized by their sum.
///
/// Requires `p >= 2` and `alpha > 0`.
pub fn sample_dirichlet(alpha: f64, p: usize, rng: &mut Pcg64) -> Vec<f64> {
    assert!(p >= 2, "dirichlet needs at least two components");
    assert!(alpha > 0.0 && alpha.is_finite(), "alpha must be positive");
    let gamma = Gamma::new(alpha, 1.0).expect("validated alpha");
    loop {
        let mut draws: Vec<f64> = (0..p).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        // All-zero draws can occur for tiny alpha when every variate
        // underflows; redraw rather than divide by zero.
        if total > 0.0 && total.is_finite() {
            for d in &mut draws {
                *d /= total;
            }
            return draws;
        }
    }
}

/// Synthesizes `count` pseudo-open vectors from the known classes of
/// `data`. Each mixture draws `cfg.p` pairwise-distinct classes uniformly
/// without replacement, one sample uniformly per class, and combines them
/// with Dirichlet weights.
pub fn synthesize_batch(
    data: &LabeledDataset,
    count: usize,
    cfg: &MixConfig,
    rng: &mut Pcg64,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let groups: Vec<Vec<usize>> = data
        .class_indices()
        .into_iter()
        .filter(|g| !g.is_empty())
        .collect();
    if groups.len() < cfg.p {
        return Err(Error::InsufficientClasses {
            needed: cfg.p,
            available: groups.len(),
        });
    }

    let mut class_order: Vec<usize> = (0..groups.len()).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        // Partial Fisher-Yates: the first p entries become the chosen classes.
        for i in 0..cfg.p {
            let j = rng.random_range(i..class_order.len());
            class_order.swap(i, j);
        }
        let weights = sample_dirichlet(cfg.alpha, cfg.p, rng);
        let mut mixed = vec![0.0; data.n];
        for (slot, w) in weights.iter().enumerate() {
            let group = &groups[class_order[slot]];
            let pick = group[rng.random_range(0..group.len())];
            for (m, v) in mixed.iter_mut().zip(&data.samples[pick].embedding.values) {
                *m += w * v;
            }
        }
        if cfg.renormalize {
            let nrm = norm(&mixed);
            if nrm > 1e-12 {
                for m in &mut mixed {
                    *m /= nrm;
                }
            }
        }
        out.push(mixed);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_space::LabeledSample;
    use crate::rng::substream;

    fn three_class_data() -> LabeledDataset {
        LabeledDataset::new(
            vec![
                LabeledSample::new(vec![1.0, 0.0, 0.0], 0),
                LabeledSample::new(vec![0.9, 0.1, 0.0], 0),
                LabeledSample::new(vec![0.0, 1.0, 0.0], 1),
                LabeledSample::new(vec![0.1, 0.9, 0.0], 1),
                LabeledSample::new(vec![0.0, 0.0, 1.0], 2),
                LabeledSample::new(vec![0.0, 0.1, 0.9], 2),
            ],
            true,
        )
        .unwrap()
    }

    #[test]
    fn dirichlet_simplex_constraints() {
        let mut rng = substream(0, "negatives");
        for _ in 0..1000 {
            let w = sample_dirichlet(0.6, 3, &mut rng);
            assert_eq!(w.len(), 3);
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            for x in &w {
                assert!((0.0..=1.0).contains(x));
            }
        }
    }

    #[test]
    fn dirichlet_low_alpha_dominates() {
        let mut rng = substream(1, "negatives");
        let mean_max = |alpha: f64, rng: &mut Pcg64| -> f64 {
            let mut acc = 0.0;
            for _ in 0..10_000 {
                let w = sample_dirichlet(alpha, 3, rng);
                acc += w.iter().fold(0.0f64, |m, x| m.max(*x));
            }
            acc / 10_000.0
        };
        let low = mean_max(0.6, &mut rng);
        let high = mean_max(10.0, &mut rng);
        assert!(
            low > high,
            "expected dominance at low alpha: {low} vs {high}"
        );
    }

    #[test]
    fn dirichlet_deterministic_per_seed() {
        let a = sample_dirichlet(0.6, 4, &mut substream(7, "negatives"));
        let b = sample_dirichlet(0.6, 4, &mut substream(7, "negatives"));
        assert_eq!(a, b);
    }

    #[test]
    fn mixture_midpoint_case() {
        // lambda = (0.5, 0.5) over unit axes gives the midpoint.
        let sources = [vec![1.0, 0.0], vec![0.0, 1.0]];
        let weights = [0.5, 0.5];
        let mut mixed = vec![0.0; 2];
        for (w, s) in weights.iter().zip(&sources) {
            for (m, v) in mixed.iter_mut().zip(s) {
                *m += w * v;
            }
        }
        assert_eq!(mixed, vec![0.5, 0.5]);
    }

    #[test]
    fn mixture_degenerate_weight_returns_source() {
        let sources = [vec![0.3, -0.7], vec![0.9, 0.2]];
        let weights = [1.0, 0.0];
        let mut mixed = vec![0.0; 2];
        for (w, s) in weights.iter().zip(&sources) {
            for (m, v) in mixed.iter_mut().zip(s) {
                *m += w * v;
            }
        }
        assert_eq!(mixed, sources[0]);
    }

    #[test]
    fn synthesized_points_stay_in_source_bounding_box() {
        let data = three_class_data();
        let cfg = MixConfig::default();
        let mut rng = substream(3, "negatives");
        let batch = synthesize_batch(&data, 1000, &cfg, &mut rng).unwrap();
        // Every coordinate of a convex mixture is bounded by the extreme
        // coordinate over all known samples.
        let mut lo = vec![f64::INFINITY; data.n];
        let mut hi = vec![f64::NEG_INFINITY; data.n];
        for s in &data.samples {
            for (d, v) in s.embedding.values.iter().enumerate() {
                lo[d] = lo[d].min(*v);
                hi[d] = hi[d].max(*v);
            }
        }
        for z in &batch {
            for d in 0..data.n {
                assert!(z[d] >= lo[d] - 1e-12 && z[d] <= hi[d] + 1e-12);
            }
        }
    }

    #[test]
    fn synthesis_requires_enough_classes() {
        let data = LabeledDataset::new(
            vec![
                LabeledSample::new(vec![1.0, 0.0], 0),
                LabeledSample::new(vec![0.0, 1.0], 1),
            ],
            true,
        )
        .unwrap();
        let cfg = MixConfig::default(); // p = 3
        let mut rng = substream(0, "negatives");
        assert!(matches!(
            synthesize_batch(&data, 4, &cfg, &mut rng),
            Err(Error::InsufficientClasses { needed: 3, available: 2 })
        ));
    }

    #[test]
    fn synthesis_is_deterministic_per_seed() {
        let data = three_class_data();
        let cfg = MixConfig::default();
        let a = synthesize_batch(&data, 32, &cfg, &mut substream(9, "negatives")).unwrap();
        let b = synthesize_batch(&data, 32, &cfg, &mut substream(9, "negatives")).unwrap();
        assert_eq!(a, b);
    }
}
