//! Row-major matrix kernels shared by the convolution and dense layers.
//!
//! All kernels are written in saxpy form: the inner loop runs elementwise
//! over a contiguous output row, so there is no floating-point reduction to
//! reorder and the result is identical whether rows are processed in
//! parallel or sequentially.

use super::Scalar;
use crate::exec;

/// `out[r, :] = bias + Σ_j x[r, j] · w[j, :]`
///
/// `x` is rows×in_dim, `w` is in_dim×out_dim, `bias` is out_dim.
pub fn addmm<S: Scalar>(
    x: &[S],
    w: &[S],
    bias: &[S],
    rows: usize,
    in_dim: usize,
    out_dim: usize,
    out: &mut [S],
) {
    debug_assert_eq!(x.len(), rows * in_dim);
    debug_assert_eq!(w.len(), in_dim * out_dim);
    debug_assert_eq!(bias.len(), out_dim);
    debug_assert_eq!(out.len(), rows * out_dim);
    exec::for_each_chunk_mut(out, out_dim, |r, out_row| {
        out_row.copy_from_slice(bias);
        let x_row = &x[r * in_dim..(r + 1) * in_dim];
        for (j, &xv) in x_row.iter().enumerate() {
            let w_row = &w[j * out_dim..(j + 1) * out_dim];
            for (o, &wv) in out_row.iter_mut().zip(w_row) {
                *o = *o + xv * wv;
            }
        }
    });
}

/// Accumulate weight and bias gradients:
/// `dw[j, :] += Σ_r x[r, j] · dy[r, :]`, `db += Σ_r dy[r, :]`.
///
/// Runs sequentially over rows; `dw`/`db` are shared accumulators.
pub fn addmm_grad_wb<S: Scalar>(
    x: &[S],
    dy: &[S],
    rows: usize,
    in_dim: usize,
    out_dim: usize,
    dw: &mut [S],
    db: &mut [S],
) {
    debug_assert_eq!(dw.len(), in_dim * out_dim);
    debug_assert_eq!(db.len(), out_dim);
    for r in 0..rows {
        let x_row = &x[r * in_dim..(r + 1) * in_dim];
        let dy_row = &dy[r * out_dim..(r + 1) * out_dim];
        for (d, &g) in db.iter_mut().zip(dy_row) {
            *d = *d + g;
        }
        for (j, &xv) in x_row.iter().enumerate() {
            let dw_row = &mut dw[j * out_dim..(j + 1) * out_dim];
            for (d, &g) in dw_row.iter_mut().zip(dy_row) {
                *d = *d + xv * g;
            }
        }
    }
}

/// `dx[r, :] = Σ_o dy[r, o] · wt[o, :]` where `wt` is the out_dim×in_dim
/// transpose of the weight matrix.
pub fn addmm_grad_x<S: Scalar>(
    dy: &[S],
    wt: &[S],
    rows: usize,
    in_dim: usize,
    out_dim: usize,
    dx: &mut [S],
) {
    debug_assert_eq!(wt.len(), in_dim * out_dim);
    debug_assert_eq!(dx.len(), rows * in_dim);
    exec::for_each_chunk_mut(dx, in_dim, |r, dx_row| {
        dx_row.fill(S::zero());
        let dy_row = &dy[r * out_dim..(r + 1) * out_dim];
        for (o, &g) in dy_row.iter().enumerate() {
            let wt_row = &wt[o * in_dim..(o + 1) * in_dim];
            for (d, &wv) in dx_row.iter_mut().zip(wt_row) {
                *d = *d + g * wv;
            }
        }
    });
}

/// Transpose an in_dim×out_dim row-major matrix.
pub fn transpose<S: Scalar>(w: &[S], in_dim: usize, out_dim: usize) -> Vec<S> {
    let mut wt = vec![S::zero(); w.len()];
    for j in 0..in_dim {
        for o in 0..out_dim {
            wt[o * in_dim + j] = w[j * out_dim + o];
        }
    }
    wt
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn addmm_matches_hand_computation() {
        // x = [[1, 2], [3, 4]], w = [[1, 0, 2], [0, 1, 1]], bias = [10, 20, 30]
        let x = [1.0, 2.0, 3.0, 4.0];
        let w = [1.0, 0.0, 2.0, 0.0, 1.0, 1.0];
        let bias = [10.0, 20.0, 30.0];
        let mut out = [0.0f64; 6];
        addmm(&x, &w, &bias, 2, 2, 3, &mut out);
        assert_eq!(out, [11.0, 22.0, 34.0, 13.0, 24.0, 40.0]);
    }

    #[test]
    fn grad_kernels_match_naive_loops() {
        let rows = 3;
        let (in_dim, out_dim) = (4, 2);
        let x: Vec<f64> = (0..rows * in_dim).map(|i| (i as f64) * 0.3 - 1.0).collect();
        let w: Vec<f64> = (0..in_dim * out_dim).map(|i| (i as f64) * 0.1).collect();
        let dy: Vec<f64> = (0..rows * out_dim).map(|i| 1.0 - (i as f64) * 0.2).collect();

        let mut dw = vec![0.0; in_dim * out_dim];
        let mut db = vec![0.0; out_dim];
        addmm_grad_wb(&x, &dy, rows, in_dim, out_dim, &mut dw, &mut db);
        for j in 0..in_dim {
            for o in 0..out_dim {
                let expected: f64 = (0..rows)
                    .map(|r| x[r * in_dim + j] * dy[r * out_dim + o])
                    .sum();
                assert!((dw[j * out_dim + o] - expected).abs() < 1e-12);
            }
        }
        for o in 0..out_dim {
            let expected: f64 = (0..rows).map(|r| dy[r * out_dim + o]).sum();
            assert!((db[o] - expected).abs() < 1e-12);
        }

        let wt = transpose(&w, in_dim, out_dim);
        let mut dx = vec![0.0; rows * in_dim];
        addmm_grad_x(&dy, &wt, rows, in_dim, out_dim, &mut dx);
        for r in 0..rows {
            for j in 0..in_dim {
                let expected: f64 = (0..out_dim)
                    .map(|o| dy[r * out_dim + o] * w[j * out_dim + o])
                    .sum();
                assert!((dx[r * in_dim + j] - expected).abs() < 1e-12);
            }
        }
    }
}
