//! Comparison boundaries and negative-loss variants: coverage-fraction
//! balls and the three hinge losses the boundary trainer can swap in for
//! its own contraction term.

use crate::error::{Error, Result};
use crate::feature_space::{EmbeddingVector, LabeledSample};
use crate::linalg::distance;
use crate::ellipsoid::{radius, BoundarySet, Ellipsoid};

/// A spherical boundary: centroid plus radius.
#[derive(Debug, Clone, PartialEq)]
pub struct BallBoundary {
    pub centroid: Vec<f64>,
    pub radius: f64,
}

impl BallBoundary {
    /// The equivalent ellipsoid: identity matrix, scale = radius.
    pub fn to_ellipsoid(&self) -> Result<Ellipsoid> {
        Ellipsoid::ball(self.centroid.clone(), self.radius)
    }
}

/// Builds one boundary set from per-class balls so ball baselines run
/// through the same inference rule as ellipsoids.
pub fn balls_to_boundary_set(balls: Vec<BallBoundary>) -> Result<BoundarySet> {
    BoundarySet::new(
        balls
            .iter()
            .map(BallBoundary::to_ellipsoid)
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Ball radius from a coverage fraction: the distance from the centroid to
/// the `floor(cf * m)`-th nearest training sample (1-indexed, distances
/// ascending, ties broken by sample index).
pub fn ball_from_cf(
    samples: &[EmbeddingVector],
    centroid: &[f64],
    cf: f64,
) -> Result<BallBoundary> {
    let m = samples.len();
    // The nudge recovers decimal semantics: 0.975 * 40 must select rank 39.
    let rank = (cf * m as f64 + 1e-9).floor() as usize;
    if rank == 0 {
        return Err(Error::EmptyQuantile { cf, samples: m });
    }
    let mut dists: Vec<f64> = samples
        .iter()
        .map(|s| distance(s, centroid))
        .collect();
    // Stable sort keeps equal distances in sample order.
    dists.sort_by(|a, b| a.total_cmp(b));
    Ok(BallBoundary {
        centroid: centroid.to_vec(),
        radius: dists[rank - 1],
    })
}

/// Hinge that compresses the boundary when an in-class sample sits inside
/// it: `max(delta - r(z), 0)`.
pub fn adb_negative_loss(e: &Ellipsoid, z: &[f64]) -> Result<f64> {
    let r = radius(e, z)?;
    Ok((e.scale - r).max(0.0))
}

/// Thresholds for the expanded/shrunk dead zone around the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClabParams {
    pub eta: f64,
    pub shrink_threshold: f64,
    pub expand_threshold: f64,
}

impl Default for ClabParams {
    fn default() -> Self {
        Self {
            eta: 0.1,
            shrink_threshold: 0.1,
            expand_threshold: 0.5,
        }
    }
}

/// Compression hinge on the anchor plus two hinges holding a random
/// other-class sample inside the band `[delta + s, delta + e]`.
pub fn clab_negative_loss(
    e: &Ellipsoid,
    anchor: &LabeledSample,
    negative: &LabeledSample,
    params: &ClabParams,
) -> Result<f64> {
    if anchor.label == negative.label {
        return Err(Error::SameClassNegative(anchor.label));
    }
    let base = adb_negative_loss(e, &anchor.embedding)?;
    let r_neg = radius(e, &negative.embedding)?;
    let shrink = ((e.scale + params.shrink_threshold) - r_neg).max(0.0);
    let expand = (r_neg - (e.scale + params.expand_threshold)).max(0.0);
    Ok(base + params.eta * shrink + params.eta * expand)
}

/// The compression hinge applied to a synthesized pseudo-open sample.
/// Identical to the contraction loss with the penalty strength set to zero.
pub fn adbgen_negative_loss(e: &Ellipsoid, pseudo: &[f64]) -> Result<f64> {
    let r = radius(e, pseudo)?;
    Ok((e.scale - r).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::training::contraction_loss;
    use rand::Rng;

    fn ev(values: Vec<f64>) -> EmbeddingVector {
        EmbeddingVector::new(values)
    }

    #[test]
    fn cf_one_covers_every_sample() {
        let samples = vec![
            ev(vec![1.0, 0.0]),
            ev(vec![0.0, 2.0]),
            ev(vec![-3.0, 0.0]),
            ev(vec![0.0, -0.5]),
        ];
        let ball = ball_from_cf(&samples, &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(ball.radius, 3.0);
        for s in &samples {
            assert!(distance(s, &ball.centroid) <= ball.radius);
        }
    }

    #[test]
    fn cf_half_of_four_takes_second_nearest() {
        let samples = vec![
            ev(vec![1.0, 0.0]),
            ev(vec![2.0, 0.0]),
            ev(vec![3.0, 0.0]),
            ev(vec![4.0, 0.0]),
        ];
        let ball = ball_from_cf(&samples, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(ball.radius, 2.0);
    }

    #[test]
    fn cf_too_small_is_empty_quantile() {
        let samples = vec![ev(vec![1.0]), ev(vec![2.0]), ev(vec![3.0])];
        assert!(matches!(
            ball_from_cf(&samples, &[0.0], 0.1),
            Err(Error::EmptyQuantile { .. })
        ));
    }

    #[test]
    fn cf_decimal_grid_is_exact() {
        // 0.975 * 40 must land on rank 39 despite binary rounding.
        let samples: Vec<EmbeddingVector> =
            (1..=40).map(|i| ev(vec![i as f64])).collect();
        let ball = ball_from_cf(&samples, &[0.0], 0.975).unwrap();
        assert_eq!(ball.radius, 39.0);
    }

    #[test]
    fn adb_hinge_cases() {
        let e = Ellipsoid::ball(vec![0.0, 0.0], 1.0).unwrap();
        // on the boundary
        assert_eq!(adb_negative_loss(&e, &[1.0, 0.0]).unwrap(), 0.0);
        // inside at r = 0.25
        assert!((adb_negative_loss(&e, &[0.25, 0.0]).unwrap() - 0.75).abs() < 1e-12);
        // outside
        assert_eq!(adb_negative_loss(&e, &[3.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn clab_all_terms_active_case() {
        let e = Ellipsoid::ball(vec![0.0, 0.0], 1.0).unwrap();
        let params = ClabParams::default();
        // anchor at r = 0.5, negative at r = 1.0 (inside delta + s)
        let anchor = LabeledSample::new(vec![0.5, 0.0], 0);
        let negative = LabeledSample::new(vec![1.0, 0.0], 1);
        let loss = clab_negative_loss(&e, &anchor, &negative, &params).unwrap();
        assert!((loss - 0.51).abs() < 1e-12);
    }

    #[test]
    fn clab_far_negative_only_third_hinge() {
        let e = Ellipsoid::ball(vec![0.0, 0.0], 1.0).unwrap();
        let params = ClabParams::default();
        let anchor = LabeledSample::new(vec![2.0, 0.0], 0); // outside: base 0
        let negative = LabeledSample::new(vec![0.0, 2.0], 1); // r = 2.0
        let loss = clab_negative_loss(&e, &anchor, &negative, &params).unwrap();
        assert!((loss - 0.05).abs() < 1e-12);
    }

    #[test]
    fn clab_dead_zone_is_zero() {
        let e = Ellipsoid::ball(vec![0.0, 0.0], 1.0).unwrap();
        let params = ClabParams::default();
        let anchor = LabeledSample::new(vec![1.5, 0.0], 0); // outside
        let negative = LabeledSample::new(vec![0.0, 1.3], 1); // in [1.1, 1.5]
        let loss = clab_negative_loss(&e, &anchor, &negative, &params).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn clab_rejects_same_class_negative() {
        let e = Ellipsoid::ball(vec![0.0, 0.0], 1.0).unwrap();
        let anchor = LabeledSample::new(vec![0.5, 0.0], 3);
        let negative = LabeledSample::new(vec![1.5, 0.0], 3);
        assert!(matches!(
            clab_negative_loss(&e, &anchor, &negative, &ClabParams::default()),
            Err(Error::SameClassNegative(3))
        ));
    }

    #[test]
    fn adbgen_equals_contraction_with_zero_beta() {
        let mut rng = substream(13, "test");
        let e = Ellipsoid::new(
            vec![0.2, -0.3, 0.5],
            crate::linalg::Matrix::from_rows(&[
                vec![1.2, 0.1, 0.0],
                vec![0.0, 0.8, -0.2],
                vec![0.3, 0.0, 1.1],
            ])
            .unwrap(),
            0.9,
        )
        .unwrap();
        for _ in 0..1000 {
            let z: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let a = adbgen_negative_loss(&e, &z).unwrap();
            let b = contraction_loss(&e, &z, 0.0).unwrap();
            assert_eq!(a, b);
        }
    }
}
