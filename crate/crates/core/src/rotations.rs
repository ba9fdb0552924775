//! Euler angles, rotation matrices and exponential maps.
//!
//! Euler triples hold the angles about the X, Y and Z axes, in that order,
//! and compose as intrinsic rotations about Z, then Y, then X:
//! `R = Rz(z) * Ry(y) * Rx(x)`. Angles come back from [`rotmat_to_euler`] in
//! `(-pi, pi]` with the middle (Y) angle in `[-pi/2, pi/2]`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::skeleton::SkeletonSpec;

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Default standard-deviation threshold below which a dimension is still.
pub const DEFAULT_STILL_THRESHOLD: f64 = 1e-4;

/// Angles about X, Y, Z in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerTriple(pub [f64; 3]);

/// Axis scaled by angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpMap(pub [f64; 3]);

impl ExpMap {
    pub fn angle(&self) -> f64 {
        norm(self.0)
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, o) in row.iter_mut().enumerate() {
            *o = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose3(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[j][i] = a[i][j];
        }
    }
    out
}

pub fn det3(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff3(a: &Mat3, b: &Mat3) -> f64 {
    let mut m = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

/// `max |R^T R - I|` over entries.
pub fn orthogonality_error(r: &Mat3) -> f64 {
    max_abs_diff3(&matmul3(&transpose3(r), r), &IDENTITY)
}

pub fn skew(v: [f64; 3]) -> Mat3 {
    [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
}

/// Wrap an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

pub fn euler_to_rotmat(e: EulerTriple) -> Mat3 {
    let [x, y, z] = e.0;
    let (sx, cx) = x.sin_cos();
    let (sy, cy) = y.sin_cos();
    let (sz, cz) = z.sin_cos();
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

/// Inverse of [`euler_to_rotmat`].
///
/// When the Y angle is within 1e-6 of +-pi/2 the X angle is fixed to 0 and
/// the remaining freedom goes to Z.
pub fn rotmat_to_euler(r: &Mat3) -> EulerTriple {
    let y = (-r[2][0]).clamp(-1.0, 1.0).asin();
    let (x, z) = if (FRAC_PI_2 - y.abs()) < 1e-6 {
        (0.0, (-r[0][1]).atan2(r[1][1]))
    } else {
        (r[2][1].atan2(r[2][2]), r[1][0].atan2(r[0][0]))
    };
    EulerTriple([normalize_angle(x), normalize_angle(y), normalize_angle(z)])
}

/// Rodrigues formula, with a second-order Taylor expansion for tiny angles.
pub fn expmap_to_rotmat(v: ExpMap) -> Mat3 {
    let theta = v.angle();
    let k = skew(v.0);
    let k2 = matmul3(&k, &k);
    let (a, b) = if theta < 1e-8 { (1.0, 0.5) } else { (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta)) };
    let mut out = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    out
}

/// Choose the representative with angle in `[0, pi]`.
pub fn canonicalize_expmap(v: ExpMap) -> ExpMap {
    let theta = v.angle();
    if theta <= PI {
        return v;
    }
    let wrapped = normalize_angle(theta);
    let s = wrapped / theta;
    ExpMap([v.0[0] * s, v.0[1] * s, v.0[2] * s])
}

/// Check that `r` is a rotation (orthogonal, determinant +1) within `tol`.
pub fn validate_rotation(r: &Mat3, tol: f64) -> Result<()> {
    if r.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Validation("rotation matrix has non-finite entries".into()));
    }
    let ortho = orthogonality_error(r);
    let det = det3(r);
    if ortho > tol || (det - 1.0).abs() > tol {
        return Err(Error::Validation(format!("not a rotation matrix: |R^T R - I| = {ortho:e}, det = {det}")));
    }
    Ok(())
}

/// Inverse Rodrigues map. Result has angle in `[0, pi]`.
pub fn rotmat_to_expmap(r: &Mat3) -> Result<ExpMap> {
    validate_rotation(r, 1e-9)?;
    // sin(theta) * axis from the skew part, cos(theta) from the trace
    let w = [0.5 * (r[2][1] - r[1][2]), 0.5 * (r[0][2] - r[2][0]), 0.5 * (r[1][0] - r[0][1])];
    let s = norm(w);
    let c = ((r[0][0] + r[1][1] + r[2][2] - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = s.atan2(c);

    if theta < 1e-12 {
        return Ok(ExpMap([0.0; 3]));
    }
    if theta < PI - 1e-4 {
        let k = theta / s;
        return Ok(ExpMap([w[0] * k, w[1] * k, w[2] * k]));
    }

    // Near a half turn the skew part vanishes; recover the axis from the
    // symmetric part R = c I + (1 - c) a a^T + s [a]x.
    let one_c = 1.0 - c;
    let diag = [r[0][0], r[1][1], r[2][2]];
    let i = (0..3).max_by(|&a, &b| diag[a].partial_cmp(&diag[b]).unwrap()).unwrap();
    let mut axis = [0.0; 3];
    axis[i] = ((diag[i] - c) / one_c).max(0.0).sqrt();
    for j in 0..3 {
        if j != i {
            axis[j] = (r[i][j] + r[j][i]) / (2.0 * one_c * axis[i]);
        }
    }
    let n = norm(axis);
    axis.iter_mut().for_each(|a| *a /= n);
    // orient the axis so that s * axis agrees with the skew part
    let dot = axis[0] * w[0] + axis[1] * w[1] + axis[2] * w[2];
    if dot < 0.0 {
        axis.iter_mut().for_each(|a| *a = -*a);
    }
    Ok(canonicalize_expmap(ExpMap([axis[0] * theta, axis[1] * theta, axis[2] * theta])))
}

pub fn expmap_to_euler(v: [f64; 3]) -> EulerTriple {
    rotmat_to_euler(&expmap_to_rotmat(ExpMap(v)))
}

/// Squared Euler-angle error of every joint; global joints contribute zero.
pub fn joint_sq_errors(pred: &[f64], truth: &[f64], spec: &SkeletonSpec) -> Result<Vec<f64>> {
    let d = spec.dim();
    if pred.len() != d || truth.len() != d {
        return Err(Error::ShapeMismatch { op: "frame_euler_error", left: vec![pred.len()], right: vec![truth.len()] });
    }
    spec.joints()
        .iter()
        .map(|j| {
            if j.global {
                return Ok(0.0);
            }
            if j.len % 3 != 0 {
                return Err(Error::Validation(format!(
                    "joint `{}` spans {} dims; rotational joints need a multiple of 3",
                    j.name, j.len
                )));
            }
            let mut sq = 0.0;
            for c in (j.start..j.start + j.len).step_by(3) {
                let ep = expmap_to_euler([pred[c], pred[c + 1], pred[c + 2]]);
                let et = expmap_to_euler([truth[c], truth[c + 1], truth[c + 2]]);
                for k in 0..3 {
                    let diff = ep.0[k] - et.0[k];
                    sq += diff * diff;
                }
            }
            Ok(sq)
        })
        .collect()
}

/// Euclidean distance between two raw exponential-map frames in Euler space,
/// skipping joints flagged global.
pub fn frame_euler_error(pred: &[f64], truth: &[f64], spec: &SkeletonSpec) -> Result<f64> {
    Ok(joint_sq_errors(pred, truth, spec)?.iter().sum::<f64>().sqrt())
}

/// Per-dimension statistics fitted on a training split.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PreprocessStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Raw indices of dimensions dropped as still, ascending.
    pub still: Vec<usize>,
    /// Raw indices of dimensions kept, ascending.
    pub retained: Vec<usize>,
    pub still_threshold: f64,
}

impl PreprocessStats {
    pub fn raw_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn retained_dim(&self) -> usize {
        self.retained.len()
    }
}

/// Fit mean / population std over every frame of `train` (each `[frames, dim]`).
pub fn fit_preprocess(train: &[&Tensor], dim: usize, still_threshold: f64) -> Result<PreprocessStats> {
    if train.is_empty() {
        return Err(Error::Validation("empty training split".into()));
    }
    let mut count = 0usize;
    let mut sum = vec![0.0; dim];
    for seq in train {
        if seq.cols() != dim {
            return Err(Error::ShapeMismatch { op: "fit_preprocess", left: seq.shape().to_vec(), right: vec![dim] });
        }
        for r in 0..seq.rows() {
            for (s, x) in sum.iter_mut().zip(seq.row_slice(r)) {
                *s += x;
            }
        }
        count += seq.rows();
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut var = vec![0.0; dim];
    for seq in train {
        for r in 0..seq.rows() {
            for ((v, x), m) in var.iter_mut().zip(seq.row_slice(r)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / count as f64).sqrt()).collect();
    let (still, retained): (Vec<usize>, Vec<usize>) = (0..dim).partition(|&i| std[i] < still_threshold);
    if let Some(&bad) = retained.iter().find(|&&i| std[i] <= 0.0) {
        return Err(Error::Validation(format!(
            "internal: retained dimension {bad} has zero variance (threshold {still_threshold})"
        )));
    }
    Ok(PreprocessStats { mean, std, still, retained, still_threshold })
}

/// Drop still dimensions and standardize the rest.
pub fn apply_preprocess(seq: &Tensor, stats: &PreprocessStats) -> Result<Tensor> {
    if seq.cols() != stats.raw_dim() {
        return Err(Error::ShapeMismatch {
            op: "apply_preprocess",
            left: seq.shape().to_vec(),
            right: vec![stats.raw_dim()],
        });
    }
    if stats.retained.is_empty() {
        return Err(Error::Validation("every dimension is still".into()));
    }
    let mut data = Vec::with_capacity(seq.rows() * stats.retained_dim());
    for r in 0..seq.rows() {
        let row = seq.row_slice(r);
        data.extend(stats.retained.iter().map(|&i| (row[i] - stats.mean[i]) / stats.std[i]));
    }
    Tensor::new(vec![seq.rows(), stats.retained_dim()], data)
}

/// Undo [`apply_preprocess`], restoring still dimensions to their constants.
pub fn invert_preprocess(seq: &Tensor, stats: &PreprocessStats) -> Result<Tensor> {
    if seq.cols() != stats.retained_dim() {
        return Err(Error::ShapeMismatch {
            op: "invert_preprocess",
            left: seq.shape().to_vec(),
            right: vec![stats.retained_dim()],
        });
    }
    let d = stats.raw_dim();
    let mut data = Vec::with_capacity(seq.rows() * d);
    for r in 0..seq.rows() {
        let row = seq.row_slice(r);
        let mut frame = stats.mean.clone();
        for (k, &i) in stats.retained.iter().enumerate() {
            frame[i] = row[k] * stats.std[i] + stats.mean[i];
        }
        data.extend(frame);
    }
    Tensor::new(vec![seq.rows(), d], data)
}
