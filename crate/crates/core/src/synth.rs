//! Synthetic anisotropic Gaussian cluster datasets. The stock `aniso-k4`
//! scenario produces elongated known clusters with open clusters parked
//! near them, the regime where axis-aware boundaries pay off over balls.

use rand::Rng;
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::DatasetSplits;
use crate::feature_space::{quantize_f32, shuffle, LabeledDataset, LabeledSample};
use crate::linalg::{dot, norm};
use crate::rng::substream;

/// One Gaussian cluster: a mean plus orthonormal axis directions with
/// per-axis standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub mean: Vec<f64>,
    /// `(direction, std_dev)` pairs; directions must be orthonormal.
    pub axes: Vec<(Vec<f64>, f64)>,
    pub count: usize,
    pub label: i32,
}

impl ClusterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Format("cluster count must be at least 1".into()));
        }
        let n = self.mean.len();
        for (dir, std) in &self.axes {
            if dir.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: dir.len(),
                });
            }
            if *std <= 0.0 || std.is_nan() {
                return Err(Error::Format(format!(
                    "axis std {std} must be positive"
                )));
            }
            if (norm(dir) - 1.0).abs() > 1e-8 {
                return Err(Error::Format("axis direction is not unit length".into()));
            }
        }
        for i in 0..self.axes.len() {
            for j in (i + 1)..self.axes.len() {
                if dot(&self.axes[i].0, &self.axes[j].0).abs() > 1e-8 {
                    return Err(Error::Format(format!(
                        "axis directions {i} and {j} are not orthogonal"
                    )));
                }
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut Pcg64) -> Vec<f64> {
        let mut z = self.mean.clone();
        for (dir, std) in &self.axes {
            let g: f64 = rng.sample(StandardNormal);
            for (zi, di) in z.iter_mut().zip(dir) {
                *zi += std * g * di;
            }
        }
        for zi in &mut z {
            *zi = quantize_f32(*zi);
        }
        z
    }
}

/// Everything needed to regenerate a dataset, written next to the EMBD files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSidecar {
    pub known: Vec<ClusterSpec>,
    pub open: Vec<ClusterSpec>,
    pub seed: u64,
}

/// Draws every cluster and splits known samples 70/10/20 into
/// train/val/test per cluster; open-cluster samples all go to test with
/// label `-1`. Values are quantized to f32, the precision of the file
/// format, so in-memory data and files agree exactly.
pub fn generate(
    known: &[ClusterSpec],
    open: &[ClusterSpec],
    seed: u64,
) -> Result<DatasetSplits> {
    if known.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = known[0].mean.len();
    for spec in known.iter().chain(open) {
        spec.validate()?;
        if spec.mean.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: spec.mean.len(),
            });
        }
    }
    let mut labels: Vec<i32> = known.iter().map(|s| s.label).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() != known.len()
        || labels.first() != Some(&0)
        || *labels.last().unwrap() as usize != known.len() - 1
    {
        return Err(Error::Format(
            "known cluster labels must be exactly 0..K-1".into(),
        ));
    }

    let mut rng_draw = substream(seed, "synth");
    let mut rng_split = substream(seed, "synth.split");
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();

    for spec in known {
        let mut samples: Vec<LabeledSample> = (0..spec.count)
            .map(|_| LabeledSample::new(spec.draw(&mut rng_draw), spec.label))
            .collect();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        shuffle(&mut order, &mut rng_split);
        let t = (spec.count as f64 * 0.7).floor() as usize;
        let v = (spec.count as f64 * 0.1).floor() as usize;
        // drain in shuffled order without disturbing indices
        let mut taken = vec![false; samples.len()];
        for (pos, &idx) in order.iter().enumerate() {
            taken[idx] = true;
            let sample = samples[idx].clone();
            if pos < t {
                train.push(sample);
            } else if pos < t + v {
                val.push(sample);
            } else {
                test.push(sample);
            }
        }
        debug_assert!(taken.iter().all(|x| *x));
        samples.clear();
    }

    for spec in open {
        for _ in 0..spec.count {
            test.push(LabeledSample::new(spec.draw(&mut rng_draw), -1));
        }
    }

    Ok(DatasetSplits {
        train: LabeledDataset::new(train, true)?,
        val: LabeledDataset::new(val, true)?,
        test: LabeledDataset::new(test, true)?,
    })
}

/// Random orthonormal basis by Gram-Schmidt over Gaussian draws.
fn random_orthonormal_basis(n: usize, rng: &mut Pcg64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for b in &basis {
            let proj = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= proj * bi;
            }
        }
        let nrm = norm(&v);
        if nrm < 1e-6 {
            continue;
        }
        for vi in &mut v {
            *vi /= nrm;
        }
        basis.push(v);
    }
    basis
}

/// The stock benchmark: four known clusters in R^8 with 4:1 anisotropy
/// along random orthogonal directions (four major axes, four minor), 500
/// samples each, plus two open clusters placed three major-axis deviations
/// from their nearest known mean. Half the axes are major so the radial
/// spread of a cluster reaches past the open clusters: no single ball
/// radius can cover the known tails without swallowing opens.
pub fn aniso_k4(seed: u64) -> (Vec<ClusterSpec>, Vec<ClusterSpec>) {
    const DIM: usize = 8;
    const MAJOR_STD: f64 = 1.0;
    const MINOR_STD: f64 = 0.25;
    const MAJOR_AXES: usize = 4;
    const COUNT: usize = 500;
    const MEAN_SCALE: f64 = 6.0;
    const OPEN_DISTANCE: f64 = 3.0 * MAJOR_STD;
    /// Open clusters stretch back toward their anchor so their inner tail
    /// probes the contested band just outside the known boundary.
    const OPEN_STD_RADIAL: f64 = 1.3;
    const OPEN_STD_TANGENT: f64 = 0.3;

    let mut rng = substream(seed, "synth.scenario");
    let mean_dirs = random_orthonormal_basis(DIM, &mut rng);

    let mut known = Vec::with_capacity(4);
    for (k, mean_dir) in mean_dirs.iter().take(4).enumerate() {
        let mean: Vec<f64> = mean_dir.iter().map(|d| MEAN_SCALE * d).collect();
        let cluster_basis = random_orthonormal_basis(DIM, &mut rng);
        let axes: Vec<(Vec<f64>, f64)> = cluster_basis
            .into_iter()
            .enumerate()
            .map(|(i, dir)| {
                (dir, if i < MAJOR_AXES { MAJOR_STD } else { MINOR_STD })
            })
            .collect();
        known.push(ClusterSpec {
            mean,
            axes,
            count: COUNT,
            label: k as i32,
        });
    }

    let mut open = Vec::with_capacity(2);
    for anchor in 0..2 {
        // Toward the other known means: the region pseudo-open mixtures
        // populate, where the contraction margin is contested.
        let mut u = vec![0.0; DIM];
        for (j, spec) in known.iter().enumerate() {
            if j == anchor {
                continue;
            }
            for (ui, (mj, ma)) in u.iter_mut().zip(spec.mean.iter().zip(&known[anchor].mean)) {
                *ui += (mj - ma) / 3.0;
            }
        }
        let nrm = norm(&u);
        for ui in &mut u {
            *ui /= nrm;
        }
        let mean: Vec<f64> = known[anchor]
            .mean
            .iter()
            .zip(&u)
            .map(|(m, ui)| m + OPEN_DISTANCE * ui)
            .collect();
        let axes = radial_axes(&u, OPEN_STD_RADIAL, OPEN_STD_TANGENT, &mut rng);
        open.push(ClusterSpec {
            mean,
            axes,
            count: COUNT,
            label: -1,
        });
    }

    (known, open)
}

/// Axes with `radial_std` along `u` and `tangent_std` along an orthonormal
/// completion of `u`.
fn radial_axes(
    u: &[f64],
    radial_std: f64,
    tangent_std: f64,
    rng: &mut Pcg64,
) -> Vec<(Vec<f64>, f64)> {
    let n = u.len();
    let mut basis = vec![u.to_vec()];
    while basis.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for b in &basis {
            let proj = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= proj * bi;
            }
        }
        let nrm = norm(&v);
        if nrm < 1e-6 {
            continue;
        }
        for vi in &mut v {
            *vi /= nrm;
        }
        basis.push(v);
    }
    basis
        .into_iter()
        .enumerate()
        .map(|(i, dir)| (dir, if i == 0 { radial_std } else { tangent_std }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_dataset() {
        let (known, open) = aniso_k4(0);
        let a = generate(&known, &open, 0).unwrap();
        let b = generate(&known, &open, 0).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_eq!(a.test, b.test);
        let c = generate(&known, &open, 1).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn open_samples_only_in_test() {
        let (known, open) = aniso_k4(1);
        let out = generate(&known, &open, 1).unwrap();
        assert!(out.train.samples.iter().all(|s| s.label >= 0));
        assert!(out.val.samples.iter().all(|s| s.label >= 0));
        let open_count = out.test.samples.iter().filter(|s| s.label == -1).count();
        assert_eq!(open_count, 1000);
    }

    #[test]
    fn split_fractions_per_cluster() {
        let (known, open) = aniso_k4(2);
        let out = generate(&known, &open, 2).unwrap();
        // 500 per cluster: 350 train, 50 val, 100 test per known class
        for k in 0..4 {
            assert_eq!(
                out.train.samples.iter().filter(|s| s.label == k).count(),
                350
            );
            assert_eq!(out.val.samples.iter().filter(|s| s.label == k).count(), 50);
            assert_eq!(
                out.test.samples.iter().filter(|s| s.label == k).count(),
                100
            );
        }
    }

    #[test]
    fn isotropic_covariance_is_near_diagonal() {
        let basis: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let spec = ClusterSpec {
            mean: vec![0.0; 3],
            axes: basis.into_iter().map(|d| (d, 1.0)).collect(),
            count: 10_000,
            label: 0,
        };
        let out = generate(std::slice::from_ref(&spec), &[], 11).unwrap();
        let all: Vec<&LabeledSample> = out
            .train
            .samples
            .iter()
            .chain(&out.val.samples)
            .chain(&out.test.samples)
            .collect();
        assert_eq!(all.len(), 10_000);
        let mut mean = vec![0.0; 3];
        for s in &all {
            for (m, v) in mean.iter_mut().zip(&s.embedding.values) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= all.len() as f64;
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                let mut cov = 0.0;
                for s in &all {
                    cov += (s.embedding.values[i] - mean[i])
                        * (s.embedding.values[j] - mean[j]);
                }
                cov /= all.len() as f64;
                assert!(cov.abs() < 0.05, "off-diagonal covariance {cov}");
            }
        }
    }

    #[test]
    fn anisotropy_shows_in_axis_variances() {
        let mut rng = substream(12, "synth.scenario");
        let basis = random_orthonormal_basis(4, &mut rng);
        let major = basis[0].clone();
        let minor = basis[1].clone();
        let spec = ClusterSpec {
            mean: vec![1.0, -1.0, 0.5, 0.0],
            axes: basis
                .into_iter()
                .enumerate()
                .map(|(i, d)| (d, if i == 0 { 2.0 } else { 0.5 }))
                .collect(),
            count: 1000,
            label: 0,
        };
        let out = generate(std::slice::from_ref(&spec), &[], 12).unwrap();
        let all: Vec<&LabeledSample> = out
            .train
            .samples
            .iter()
            .chain(&out.val.samples)
            .chain(&out.test.samples)
            .collect();
        let project_var = |dir: &[f64]| {
            let proj: Vec<f64> = all
                .iter()
                .map(|s| {
                    dot(&s.embedding.values, dir) - dot(&spec.mean, dir)
                })
                .collect();
            let m = proj.iter().sum::<f64>() / proj.len() as f64;
            proj.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / proj.len() as f64
        };
        let ratio = project_var(&major) / project_var(&minor);
        // 4:1 std ratio means roughly 16x variance, within sampling noise
        assert!(
            (12.8..=19.2).contains(&ratio),
            "variance ratio {ratio} outside 16 +/- 20%"
        );
    }

    #[test]
    fn cluster_means_converge() {
        let (known, _) = aniso_k4(3);
        let out = generate(&known, &[], 3).unwrap();
        for spec in &known {
            let members: Vec<&LabeledSample> = out
                .train
                .samples
                .iter()
                .chain(&out.val.samples)
                .chain(&out.test.samples)
                .filter(|s| s.label == spec.label)
                .collect();
            assert_eq!(members.len(), spec.count);
            let mut mean = vec![0.0; spec.mean.len()];
            for s in &members {
                for (m, v) in mean.iter_mut().zip(&s.embedding.values) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= members.len() as f64;
            }
            let err = crate::linalg::distance(&mean, &spec.mean);
            // total std budget: E|err|^2 = sum_i sigma_i^2 / count
            let sigma_total = spec
                .axes
                .iter()
                .map(|(_, s)| s * s)
                .sum::<f64>()
                .sqrt();
            assert!(
                err < 3.0 * sigma_total / (spec.count as f64).sqrt(),
                "mean error {err}"
            );
        }
    }

    #[test]
    fn rejects_non_orthogonal_axes() {
        let spec = ClusterSpec {
            mean: vec![0.0, 0.0],
            axes: vec![
                (vec![1.0, 0.0], 1.0),
                (vec![0.9, (1.0f64 - 0.81).sqrt()], 1.0),
            ],
            count: 10,
            label: 0,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn open_means_sit_three_sigma_from_anchor() {
        let (known, open) = aniso_k4(4);
        for (anchor, spec) in open.iter().enumerate() {
            let d = crate::linalg::distance(&spec.mean, &known[anchor].mean);
            assert!((d - 3.0).abs() < 1e-9);
            // and no other known mean is closer
            for other in &known {
                let od = crate::linalg::distance(&spec.mean, &other.mean);
                assert!(od >= d - 1e-9);
            }
        }
    }
}
