//! Non-negative least squares via the Lawson-Hanson active-set method.
//!
//! Solves `min ||A x - b||_2` subject to `x >= 0`. The least-squares
//! subproblems on the passive set are solved with an SVD, which keeps the
//! method stable when many columns are duplicates (common here: different
//! types often best-respond with the same position).

use nalgebra::{DMatrix, DVector};

/// Returns the solution and the residual norm `||A x - b||_2`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-10 * a.amax().max(1.0) * b.amax().max(1.0);
    let max_outer = 3 * n.max(10);

    for _ in 0..max_outer {
        let residual = b - a * &x;
        let w = a.transpose() * &residual;
        // Most-improving inactive coordinate.
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if !passive[j] && w[j] > tol
                && best.is_none_or(|(_, bw)| w[j] > bw) {
                    best = Some((j, w[j]));
                }
        }
        let Some((enter, _)) = best else { break };
        passive[enter] = true;

        // Inner loop: restrict to the passive set and back off along the
        // segment towards feasibility while any passive coordinate would
        // go non-positive.
        loop {
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = a.select_columns(cols.iter());
            let svd = sub.svd(true, true);
            let z_sub = svd.solve(b, 1e-12).expect("svd solve");
            if z_sub.iter().all(|&v| v > tol) {
                x.fill(0.0);
                for (idx, &j) in cols.iter().enumerate() {
                    x[j] = z_sub[idx];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (idx, &j) in cols.iter().enumerate() {
                if z_sub[idx] <= tol {
                    let denom = x[j] - z_sub[idx];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                // All-degenerate step; drop the entering column and stop.
                passive[enter] = false;
                break;
            }
            for (idx, &j) in cols.iter().enumerate() {
                x[j] += alpha * (z_sub[idx] - x[j]);
            }
            for &j in &cols {
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    let residual = (b - a * &x).norm();
    (x, residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn exact_single_row_target() {
        // Target equals 3x the second column.
        let a = mat(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![0.0, 3.0, 3.0]);
        let (x, res) = nnls(&a, &b);
        assert_abs_diff_eq!(x[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(res, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn disjoint_rows_recover_weights() {
        // Columns cover disjoint ticks; target = 2*(c1 + c2).
        let a = mat(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0, 2.0, 2.0]);
        let (x, res) = nnls(&a, &b);
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(res, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn negativity_constraint_binds() {
        // Unconstrained solution would need a negative coefficient.
        let a = mat(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -0.5]);
        let (x, _) = nnls(&a, &b);
        assert!(x.iter().all(|&v| v >= 0.0));
        assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn beats_random_nonnegative_candidates() {
        let mut rng = crate::rng::stream_rng(13, 0);
        let m = 8;
        let n = 12;
        let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(0.0..1.0));
        let b = DVector::from_fn(m, |_, _| rng.gen_range(0.0..4.0));
        let (x, res) = nnls(&a, &b);
        assert!(x.iter().all(|&v| v >= 0.0));
        for _ in 0..1000 {
            let cand = DVector::from_fn(n, |_, _| {
                if rng.gen_bool(0.5) {
                    0.0
                } else {
                    rng.gen_range(0.0..2.0)
                }
            });
            let cand_res = (&b - &a * cand).norm();
            assert!(res <= cand_res + 1e-9);
        }
    }

    #[test]
    fn duplicate_columns_do_not_break() {
        let a = mat(2, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 3.0]);
        let (x, res) = nnls(&a, &b);
        assert!(x.iter().all(|&v| v >= 0.0));
        assert_abs_diff_eq!(res, 0.0, epsilon = 1e-9);
    }
}
