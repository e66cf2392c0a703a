//! Affine transform algebra and the sparse bilinear resampling operator.
//!
//! Matrices act on row vectors by right-multiplication: `(x', y', 1) =
//! (x, y, 1) · M`. Every matrix produced here is affine, i.e. its third
//! column is (0, 0, 1)ᵀ, and the composition order is rotation, then scale,
//! then translation, conjugated so the transform pivots about the feature
//! map center.
//!
//! [`SamplerPlan`] is the interpolation coefficient matrix in sparse form:
//! one row per output pixel holding at most four (source index, weight)
//! pairs. [`apply`] multiplies by it, [`apply_transpose`] by its transpose,
//! which is exactly how gradients flow back through a warp.

use crate::tensor::Tensor;
use crate::{Error, Real, Result};

/// One sampled transform instance: rotation angle in degrees, scale factors,
/// and translation as a fraction of the feature-map width/height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineParams {
    pub theta_deg: Real,
    pub sx: Real,
    pub sy: Real,
    pub dx: Real,
    pub dy: Real,
}

impl AffineParams {
    pub fn identity() -> AffineParams {
        AffineParams { theta_deg: 0.0, sx: 1.0, sy: 1.0, dx: 0.0, dy: 0.0 }
    }
}

/// 3x3 affine matrix acting on row vectors (x, y, 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformMatrix {
    m: [[Real; 3]; 3],
}

impl TransformMatrix {
    pub fn identity() -> TransformMatrix {
        TransformMatrix { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    /// Translation by whole pixels: (x, y) -> (x + dx_px, y + dy_px).
    pub fn translation(dx_px: Real, dy_px: Real) -> TransformMatrix {
        TransformMatrix { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [dx_px, dy_px, 1.0]] }
    }

    /// Axis scaling: (x, y) -> (sx·x, sy·y). Zero factors are rejected.
    pub fn scale(sx: Real, sy: Real) -> Result<TransformMatrix> {
        if sx == 0.0 || sy == 0.0 {
            return Err(Error::Input(format!("scale factors must be nonzero, got ({sx}, {sy})")));
        }
        Ok(TransformMatrix { m: [[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]] })
    }

    /// Rotation by an angle in degrees within [-180, 180]:
    /// (x, y) -> (x·cosθ − y·sinθ, x·sinθ + y·cosθ).
    pub fn rotation_deg(theta_deg: Real) -> Result<TransformMatrix> {
        if !(-180.0..=180.0).contains(&theta_deg) {
            return Err(Error::Input(format!(
                "rotation angle must lie in [-180, 180] degrees, got {theta_deg}"
            )));
        }
        let rad = theta_deg.to_radians();
        let (sin, cos) = rad.sin_cos();
        Ok(TransformMatrix { m: [[cos, sin, 0.0], [-sin, cos, 0.0], [0.0, 0.0, 1.0]] })
    }

    /// Matrix product `self · other`; as a map this applies `self` first.
    pub fn then(&self, other: &TransformMatrix) -> TransformMatrix {
        let a = &self.m;
        let b = &other.m;
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        TransformMatrix { m: out }
    }

    /// Map a point: (x, y, 1) · M.
    pub fn apply_point(&self, x: Real, y: Real) -> (Real, Real) {
        (
            x * self.m[0][0] + y * self.m[1][0] + self.m[2][0],
            x * self.m[0][1] + y * self.m[1][1] + self.m[2][1],
        )
    }

    /// Inverse of an affine matrix. Fails when the linear 2x2 block is
    /// numerically singular (|det| <= 1e-9).
    pub fn inverse(&self) -> Result<TransformMatrix> {
        let [[a, b, _], [c, d, _], [e, f, _]] = self.m;
        let det = a * d - b * c;
        if det.abs() <= 1e-9 {
            return Err(Error::Numeric(format!("transform matrix is singular (det {det})")));
        }
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        // translation row maps through the inverted linear block
        let ie = -(e * ia + f * ic);
        let if_ = -(e * ib + f * id);
        Ok(TransformMatrix { m: [[ia, ib, 0.0], [ic, id, 0.0], [ie, if_, 1.0]] })
    }

    pub fn entries(&self) -> &[[Real; 3]; 3] {
        &self.m
    }
}

/// Build the full transform for a feature map of the given spatial shape:
/// rotate, then scale, then translate, all about the map center
/// ((w−1)/2, (h−1)/2). Translation fractions are converted to pixels against
/// the map dimensions.
pub fn compose(params: &AffineParams, h: usize, w: usize) -> Result<TransformMatrix> {
    if h == 0 || w == 0 {
        return Err(Error::Shape(format!("map shape must be >= 1, got ({h}, {w})")));
    }
    let cx = (w as Real - 1.0) / 2.0;
    let cy = (h as Real - 1.0) / 2.0;
    let to_center = TransformMatrix::translation(-cx, -cy);
    let from_center = TransformMatrix::translation(cx, cy);
    let r = TransformMatrix::rotation_deg(params.theta_deg)?;
    let s = TransformMatrix::scale(params.sx, params.sy)?;
    let d = TransformMatrix::translation(params.dx * w as Real, params.dy * h as Real);
    Ok(to_center.then(&r).then(&s).then(&d).then(&from_center))
}

/// Sparse bilinear interpolation operator for one spatial shape.
///
/// Row `p` (one per output pixel, row-major) lists the source pixels feeding
/// that output and their weights. Rows whose source point falls outside the
/// input grid are empty — those outputs are zero, matching zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerPlan {
    h: usize,
    w: usize,
    row_offsets: Vec<u32>,
    entries: Vec<(u32, Real)>,
}

impl SamplerPlan {
    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    /// Entries of one output pixel's row.
    pub fn row(&self, p: usize) -> &[(u32, Real)] {
        let lo = self.row_offsets[p] as usize;
        let hi = self.row_offsets[p + 1] as usize;
        &self.entries[lo..hi]
    }

    pub fn num_pixels(&self) -> usize {
        self.h * self.w
    }

    /// The identity plan: every output pixel reads its own index with
    /// weight 1.
    pub fn identity(h: usize, w: usize) -> SamplerPlan {
        let n = h * w;
        SamplerPlan {
            h,
            w,
            row_offsets: (0..=n as u32).collect(),
            entries: (0..n as u32).map(|i| (i, 1.0)).collect(),
        }
    }
}

/// Build a sampler by mapping every output pixel through the inverse of
/// `matrix` and interpolating bilinearly among its four integer neighbours.
pub fn build_sampler(matrix: &TransformMatrix, h: usize, w: usize) -> Result<SamplerPlan> {
    let inv = matrix.inverse()?;
    let n = h * w;
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut entries: Vec<(u32, Real)> = Vec::with_capacity(n);
    row_offsets.push(0u32);
    let (h_max, w_max) = (h as Real - 1.0, w as Real - 1.0);
    for oy in 0..h {
        for ox in 0..w {
            let (sx, sy) = inv.apply_point(ox as Real, oy as Real);
            if sx >= 0.0 && sx <= w_max && sy >= 0.0 && sy <= h_max {
                let x0 = sx.floor();
                let y0 = sy.floor();
                let fx = sx - x0;
                let fy = sy - y0;
                let (x0, y0) = (x0 as usize, y0 as usize);
                let corners = [
                    (y0, x0, (1.0 - fy) * (1.0 - fx)),
                    (y0, x0 + 1, (1.0 - fy) * fx),
                    (y0 + 1, x0, fy * (1.0 - fx)),
                    (y0 + 1, x0 + 1, fy * fx),
                ];
                for (y, x, weight) in corners {
                    if weight > 0.0 {
                        entries.push(((y * w + x) as u32, weight));
                    }
                }
            }
            row_offsets.push(entries.len() as u32);
        }
    }
    Ok(SamplerPlan { h, w, row_offsets, entries })
}

fn check_plan_shape(plan: &SamplerPlan, t: &Tensor) -> Result<()> {
    let s = t.shape();
    if s.h != plan.h || s.w != plan.w {
        return Err(Error::Shape(format!(
            "plan built for ({}, {}) applied to tensor of shape {s}",
            plan.h, plan.w
        )));
    }
    Ok(())
}

/// Warp every (n, c) slice of `x` by the plan: out[p] = Σ wₖ·x[srcₖ].
pub fn apply(plan: &SamplerPlan, x: &Tensor) -> Result<Tensor> {
    check_plan_shape(plan, x)?;
    let mut out = Tensor::zeros(x.shape())?;
    apply_into(plan, x.data(), out.data_mut());
    Ok(out)
}

/// Adjoint of [`apply`]: scatter each output-pixel gradient back onto the
/// source pixels it was interpolated from.
pub fn apply_transpose(plan: &SamplerPlan, dout: &Tensor) -> Result<Tensor> {
    check_plan_shape(plan, dout)?;
    let mut dx = Tensor::zeros(dout.shape())?;
    apply_transpose_into(plan, dout.data(), dx.data_mut());
    Ok(dx)
}

/// Warp a run of (h·w)-sized planes; `out` must be zeroed by the caller.
pub(crate) fn apply_into(plan: &SamplerPlan, x: &[Real], out: &mut [Real]) {
    let px = plan.num_pixels();
    debug_assert_eq!(x.len() % px, 0);
    for (xs, os) in x.chunks_exact(px).zip(out.chunks_exact_mut(px)) {
        for p in 0..px {
            let mut acc = 0.0;
            for &(src, weight) in plan.row(p) {
                acc += weight * xs[src as usize];
            }
            os[p] = acc;
        }
    }
}

/// Transposed warp over a run of planes; `dx` must be zeroed by the caller.
pub(crate) fn apply_transpose_into(plan: &SamplerPlan, dout: &[Real], dx: &mut [Real]) {
    let px = plan.num_pixels();
    debug_assert_eq!(dout.len() % px, 0);
    for (ds, xs) in dout.chunks_exact(px).zip(dx.chunks_exact_mut(px)) {
        for p in 0..px {
            let g = ds[p];
            for &(src, weight) in plan.row(p) {
                xs[src as usize] += weight * g;
            }
        }
    }
}
