//! Per-class ellipsoid boundaries.
//!
//! A class boundary is the region `{ z : |A (z - c)| <= delta }`. The
//! learnable matrix `A` encodes axis directions and scales at once; its Gram
//! matrix `A^T A` exposes them through an eigen-decomposition.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, sub, symmetric_eigen, Matrix};

/// One class boundary: centroid `c`, matrix `A` and scale `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub centroid: Vec<f64>,
    pub matrix: Matrix,
    pub scale: f64,
}

impl Ellipsoid {
    pub fn new(centroid: Vec<f64>, matrix: Matrix, scale: f64) -> Result<Self> {
        let n = centroid.len();
        if matrix.rows() != n || matrix.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.rows().max(matrix.cols()),
            });
        }
        if scale <= 0.0 || scale.is_nan() {
            return Err(Error::Format(format!("scale {scale} must be positive")));
        }
        Ok(Self {
            centroid,
            matrix,
            scale,
        })
    }

    /// Ball of radius `delta`: identity matrix around the centroid.
    pub fn ball(centroid: Vec<f64>, delta: f64) -> Result<Self> {
        let n = centroid.len();
        Self::new(centroid, Matrix::identity(n), delta)
    }

    pub fn dim(&self) -> usize {
        self.centroid.len()
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: z.len(),
            });
        }
        Ok(())
    }

    /// Smallest singular value of `A`, from the Gram spectrum.
    pub fn min_singular_value(&self) -> Result<f64> {
        let g = gram(&self.matrix);
        let (eigenvalues, _) = symmetric_eigen(&g.values)?;
        Ok(eigenvalues[0].max(0.0).sqrt())
    }
}

/// The map `z -> A (z - c)` carrying the ellipsoid to a centered ball.
pub fn affine_map(e: &Ellipsoid, z: &[f64]) -> Result<Vec<f64>> {
    e.check_dim(z)?;
    e.matrix.matvec(&sub(z, &e.centroid))
}

/// `|A (z - c)|`, the sample's radius in the ball frame.
pub fn radius(e: &Ellipsoid, z: &[f64]) -> Result<f64> {
    Ok(norm(&affine_map(e, z)?))
}

/// Closed membership test: `radius(e, z) <= delta`.
pub fn contains(e: &Ellipsoid, z: &[f64]) -> Result<bool> {
    Ok(radius(e, z)? <= e.scale)
}

/// Symmetric positive matrix `A^T A`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: Matrix,
}

/// Builds `A^T A` from explicit column sums, mirroring the upper triangle so
/// symmetry holds entrywise, not just to tolerance.
pub fn gram(a: &Matrix) -> GramMatrix {
    let n = a.cols();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for m in 0..a.rows() {
                acc += a.get(m, i) * a.get(m, j);
            }
            g.set(i, j, acc);
            g.set(j, i, acc);
        }
    }
    GramMatrix { values: g }
}

/// Principal axes of an ellipsoid: orthonormal directions with the
/// corresponding semi-axis lengths `delta / sqrt(lambda)`, ordered from the
/// longest axis (smallest eigenvalue) to the shortest.
#[derive(Debug, Clone)]
pub struct AxisDecomposition {
    pub directions: Vec<Vec<f64>>,
    pub lengths: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

pub fn axis_decomposition(e: &Ellipsoid) -> Result<AxisDecomposition> {
    let g = gram(&e.matrix);
    let (eigenvalues, directions) = symmetric_eigen(&g.values)?;
    if let Some(lambda) = eigenvalues.iter().find(|l| **l <= 1e-12) {
        return Err(Error::SingularMatrix(*lambda));
    }
    let lengths = eigenvalues.iter().map(|l| e.scale / l.sqrt()).collect();
    Ok(AxisDecomposition {
        directions,
        lengths,
        eigenvalues,
    })
}

impl AxisDecomposition {
    /// Membership via the axis parameterization:
    /// `sum_i (d_i . (z - c))^2 / a_i^2 <= 1`.
    pub fn contains(&self, centroid: &[f64], z: &[f64]) -> bool {
        let v = sub(z, centroid);
        let mut acc = 0.0;
        for (d, a) in self.directions.iter().zip(&self.lengths) {
            let p = dot(d, &v) / a;
            acc += p * p;
        }
        acc <= 1.0
    }
}

/// All class boundaries, indexed by class id.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySet {
    pub ellipsoids: Vec<Ellipsoid>,
}

impl BoundarySet {
    pub fn new(ellipsoids: Vec<Ellipsoid>) -> Result<Self> {
        if let Some(first) = ellipsoids.first() {
            let n = first.dim();
            for e in &ellipsoids {
                if e.dim() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: e.dim(),
                    });
                }
            }
        }
        Ok(Self { ellipsoids })
    }

    pub fn dim(&self) -> usize {
        self.ellipsoids.first().map_or(0, Ellipsoid::dim)
    }

    pub fn class_count(&self) -> usize {
        self.ellipsoids.len()
    }

    /// Smallest singular value of each `A_k`; values at or below 1e-10 mean
    /// the matrix has drifted toward singularity.
    pub fn min_singular_values(&self) -> Result<Vec<f64>> {
        self.ellipsoids
            .iter()
            .map(Ellipsoid::min_singular_value)
            .collect()
    }

    /// Index of the centroid nearest to `z` by Euclidean distance, ties
    /// resolved to the smallest class id.
    pub fn nearest_class(&self, z: &[f64]) -> Result<usize> {
        if self.ellipsoids.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: z.len(),
            });
        }
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (k, e) in self.ellipsoids.iter().enumerate() {
            let d = crate::linalg::distance(z, &e.centroid);
            if d < best_dist {
                best = k;
                best_dist = d;
            }
        }
        Ok(best)
    }
}

fn fmt_float(v: f64) -> String {
    // 17 significant digits: lossless decimal round trip for f64.
    format!("{v:.16e}")
}

fn write_float_array(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_float(*v));
    }
    out.push(']');
}

/// Serializes the boundary set as the versioned JSON model document, floats
/// written with 17 significant digits so reloading is exact.
pub fn boundaries_to_json(bs: &BoundarySet) -> Result<String> {
    for (k, e) in bs.ellipsoids.iter().enumerate() {
        if !e.scale.is_finite()
            || !e.matrix.is_finite()
            || e.centroid.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Format(format!("class {k} has non-finite values")));
        }
    }
    let mut out = String::new();
    let _ = write!(
        out,
        "{{\"version\":1,\"n\":{},\"classes\":[",
        bs.dim()
    );
    for (k, e) in bs.ellipsoids.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "{{\"id\":{k},\"centroid\":");
        write_float_array(&mut out, &e.centroid);
        let _ = write!(out, ",\"delta\":{},\"matrix\":[", fmt_float(e.scale));
        for i in 0..e.matrix.rows() {
            if i > 0 {
                out.push(',');
            }
            write_float_array(&mut out, e.matrix.row(i));
        }
        out.push_str("]}");
    }
    out.push_str("]}");
    Ok(out)
}

pub fn save_boundaries(bs: &BoundarySet, path: &Path) -> Result<()> {
    fs::write(path, boundaries_to_json(bs)?)?;
    Ok(())
}

#[derive(Deserialize)]
struct ModelFile {
    version: u32,
    n: usize,
    classes: Vec<ModelClass>,
}

#[derive(Deserialize)]
struct ModelClass {
    id: usize,
    centroid: Vec<f64>,
    delta: f64,
    matrix: Vec<Vec<f64>>,
}

pub fn boundaries_from_json(text: &str) -> Result<BoundarySet> {
    let doc: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if doc.version != 1 {
        return Err(Error::Format(format!(
            "unsupported model version {}",
            doc.version
        )));
    }
    let mut ellipsoids = Vec::with_capacity(doc.classes.len());
    for (idx, class) in doc.classes.into_iter().enumerate() {
        if class.id != idx {
            return Err(Error::Format(format!(
                "class ids must be dense and ordered; found {} at position {idx}",
                class.id
            )));
        }
        if class.centroid.len() != doc.n {
            return Err(Error::Format(format!(
                "class {idx}: centroid has {} entries, model n is {}",
                class.centroid.len(),
                doc.n
            )));
        }
        let matrix = Matrix::from_rows(&class.matrix)
            .map_err(|_| Error::Format(format!("class {idx}: ragged matrix rows")))?;
        if matrix.rows() != doc.n || matrix.cols() != doc.n {
            return Err(Error::Format(format!(
                "class {idx}: matrix is {}x{}, model n is {}",
                matrix.rows(),
                matrix.cols(),
                doc.n
            )));
        }
        if class.delta <= 0.0 || class.delta.is_nan() {
            return Err(Error::Format(format!(
                "class {idx}: delta {} must be positive",
                class.delta
            )));
        }
        ellipsoids.push(Ellipsoid {
            centroid: class.centroid,
            matrix,
            scale: class.delta,
        });
    }
    BoundarySet::new(ellipsoids)
}

pub fn load_boundaries(path: &Path) -> Result<BoundarySet> {
    let text = fs::read_to_string(path)?;
    boundaries_from_json(&text)
}
