use nalgebra::{DMatrix, DVector};

use super::lstsq::lstsq;

/// Lawson–Hanson active-set solver for `min ‖A x − b‖₂` subject to `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    assert_eq!(m, b.len(), "row mismatch");
    let mut x = DVector::zeros(n);
    if n == 0 {
        return x;
    }
    let mut passive = vec![false; n];
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())) * b.amax().max(1.0);
    let tol = 10.0 * f64::EPSILON * scale * (m.max(n) as f64);
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let w = a.tr_mul(&(b - a * &x));
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let j = match candidate {
            Some(j) if w[j] > tol => j,
            _ => break,
        };
        passive[j] = true;

        loop {
            let s = solve_on(a, b, &passive);
            if (0..n).all(|k| !passive[k] || s[k] > tol) {
                x = s;
                break;
            }
            // Step toward s until the first passive variable hits zero.
            let mut alpha = f64::INFINITY;
            for k in 0..n {
                if passive[k] && s[k] <= tol {
                    let denom = x[k] - s[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[k] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            let alpha = if alpha.is_finite() { alpha } else { 0.0 };
            x += (s - &x) * alpha;
            let mut moved = false;
            for k in 0..n {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                    moved = true;
                }
            }
            if !moved || !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

/// Unconstrained least squares restricted to the passive columns.
fn solve_on(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&k| passive[k]).collect();
    let sub = a.select_columns(&idx);
    let (z, _) = lstsq(&sub, b, f64::EPSILON * a.nrows().max(idx.len()) as f64);
    let mut s = DVector::zeros(passive.len());
    for (k, &i) in idx.iter().enumerate() {
        s[i] = z[k];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn objective(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
        (a * x - b).norm_squared()
    }

    /// Exhaustive search over supports: each support's unconstrained LS
    /// solution is a candidate when it is nonnegative.
    fn brute_force(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
        let n = a.ncols();
        let mut best = b.norm_squared();
        for mask in 1u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|k| mask & (1 << k) != 0).collect();
            let sub = a.select_columns(&idx);
            let z = (sub.transpose() * &sub)
                .try_inverse()
                .map(|inv| inv * sub.transpose() * b);
            if let Some(z) = z {
                if z.iter().all(|&v| v >= 0.0) {
                    best = best.min((&sub * z - b).norm_squared());
                }
            }
        }
        best
    }

    #[test]
    fn interior_solution_matches_least_squares() {
        let a = DMatrix::from_row_slice(3, 2, &[1., 0., 0., 1., 1., 1.]);
        let b = DVector::from_vec(vec![1., 2., 3.]);
        let x = nnls(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn clamps_negative_direction() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![-1., 2.]);
        let x = nnls(&a, &b);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_support_search(
            vals in prop::collection::vec(-1f64..1.0, 12 * 5),
            rhs in prop::collection::vec(-2f64..2.0, 12),
            cols in 1usize..=5,
        ) {
            let a = DMatrix::from_column_slice(12, cols, &vals[..12 * cols]);
            let b = DVector::from_vec(rhs);
            let x = nnls(&a, &b);
            prop_assert!(x.iter().all(|&v| v >= 0.0));
            let got = objective(&a, &b, &x);
            let want = brute_force(&a, &b);
            prop_assert!(got <= want + 1e-9 * (1.0 + want), "{} vs {}", got, want);
        }
    }
}
