//! Internal dense kernels: a strided gemm wrapper plus im2col/col2im.
//!
//! Convolution is expressed as patch extraction followed by a matrix
//! product. The gemm itself is delegated to `matrixmultiply`, which is
//! single-threaded and therefore bitwise deterministic for a fixed problem
//! size; all parallelism in this crate happens over disjoint output slices.

use crate::Real;

/// C(m x n) = alpha * A(m x k) * B(k x n) + beta * C, with explicit element
/// strides per matrix. Bounds are checked against the slice lengths.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: Real,
    a: &[Real],
    rsa: isize,
    csa: isize,
    b: &[Real],
    rsb: isize,
    csb: isize,
    beta: Real,
    c: &mut [Real],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let max_index = |rows: usize, cols: usize, rs: isize, cs: isize| -> usize {
        ((rows as isize - 1) * rs + (cols as isize - 1) * cs) as usize
    };
    assert!(max_index(m, k, rsa, csa) < a.len());
    assert!(max_index(k, n, rsb, csb) < b.len());
    assert!(max_index(m, n, rsc, csc) < c.len());

    #[cfg(not(feature = "f32"))]
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
            c.as_mut_ptr(), rsc, csc,
        );
    }
    #[cfg(feature = "f32")]
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
            c.as_mut_ptr(), rsc, csc,
        );
    }
}

/// Patch geometry shared by im2col and col2im.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PatchGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl PatchGeom {
    pub fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Expand one example (c, h, w) into a row-major (out_h*out_w, c*kh*kw)
/// patch matrix. Out-of-image taps read as zero.
pub(crate) fn im2col(x: &[Real], g: &PatchGeom, col: &mut [Real]) {
    debug_assert_eq!(x.len(), g.c * g.h * g.w);
    debug_assert_eq!(col.len(), g.out_len() * g.patch_len());
    let patch = g.patch_len();
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &mut col[(oy * g.out_w + ox) * patch..][..patch];
            let mut i = 0;
            for c in 0..g.c {
                let plane = &x[c * g.h * g.w..][..g.h * g.w];
                for ky in 0..g.kh {
                    let sy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if sy < 0 || sy >= g.h as isize {
                        row[i..i + g.kw].fill(0.0);
                        i += g.kw;
                        continue;
                    }
                    let line = &plane[sy as usize * g.w..][..g.w];
                    for kx in 0..g.kw {
                        let sx = (ox * g.stride + kx) as isize - g.padding as isize;
                        row[i] = if sx < 0 || sx >= g.w as isize {
                            0.0
                        } else {
                            line[sx as usize]
                        };
                        i += 1;
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add a patch matrix back onto one example.
/// `dx` must be zeroed by the caller beforehand.
pub(crate) fn col2im(col: &[Real], g: &PatchGeom, dx: &mut [Real]) {
    debug_assert_eq!(dx.len(), g.c * g.h * g.w);
    debug_assert_eq!(col.len(), g.out_len() * g.patch_len());
    let patch = g.patch_len();
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &col[(oy * g.out_w + ox) * patch..][..patch];
            let mut i = 0;
            for c in 0..g.c {
                let plane = &mut dx[c * g.h * g.w..][..g.h * g.w];
                for ky in 0..g.kh {
                    let sy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if sy < 0 || sy >= g.h as isize {
                        i += g.kw;
                        continue;
                    }
                    let line = &mut plane[sy as usize * g.w..][..g.w];
                    for kx in 0..g.kw {
                        let sx = (ox * g.stride + kx) as isize - g.padding as isize;
                        if sx >= 0 && sx < g.w as isize {
                            line[sx as usize] += row[i];
                        }
                        i += 1;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_small_known_product() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, 1.0, &a, 2, 1, &b, 2, 1, 0.0, &mut c, 2, 1);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = PatchGeom {
            c: 2,
            h: 5,
            w: 4,
            kh: 3,
            kw: 2,
            stride: 1,
            padding: 1,
            out_h: 5,
            out_w: 5,
        };
        let x: Vec<Real> = (0..g.c * g.h * g.w).map(|_| rng.gen::<Real>() - 0.5).collect();
        let y: Vec<Real> = (0..g.out_len() * g.patch_len())
            .map(|_| rng.gen::<Real>() - 0.5)
            .collect();
        let mut cx = vec![0.0; y.len()];
        im2col(&x, &g, &mut cx);
        let mut xy = vec![0.0; x.len()];
        col2im(&y, &g, &mut xy);
        let lhs: Real = cx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: Real = x.iter().zip(&xy).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }
}
