use nalgebra::{DMatrix, DVector};

use super::{
    build_phi, lstsq, predict_output, to_vec, zero_result, BlindIdProblem, BlindIdResult,
    Diagnostics, Method, ScaleMode,
};
use crate::error::{Error, Result};

/// Lifted least-squares baseline.
///
/// Solves `y ≈ Φ θ` for `θ = vec(x qᵀ)`, reshapes the estimate into the
/// `n × p` matrix `Θ̂` and keeps its leading singular pair: `q̂` is the first
/// left singular vector and `x̂ = σ₁ v₁`. No sign constraint is put on `x̂`
/// beyond choosing the sign with nonnegative mean.
pub fn baseline_identify(problem: &BlindIdProblem) -> Result<BlindIdResult> {
    let h = problem.event_matrix();
    let (n, p) = (problem.order, problem.segments());
    let phi = build_phi(&h, n)?;
    let cols = phi.ncols();

    let rows = phi.nrows();
    let sv = phi.singular_values();
    let tol = f64::EPSILON * rows.max(cols) as f64 * sv.max();
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < cols {
        return Err(Error::Identifiability { rank, cols });
    }

    let y = DVector::from_column_slice(&problem.y);
    if y.iter().all(|&v| v == 0.0) {
        let mut r = zero_result(Method::Baseline, problem, ScaleMode::UnitQNorm);
        r.diagnostics.rank = Some(rank);
        return Ok(r);
    }
    let (theta, _) = lstsq(&phi, &y, f64::EPSILON * rows.max(cols) as f64);
    let big_theta = DMatrix::from_row_slice(n, p, theta.as_slice());
    let (q, x) = leading_pair(&big_theta);

    let y_hat = predict_output(&q, &x, &h);
    Ok(BlindIdResult {
        method: Method::Baseline,
        q,
        x,
        y_hat,
        scale_mode: ScaleMode::UnitQNorm,
        diagnostics: Diagnostics {
            iterations: 1,
            converged: true,
            order: n,
            rank: Some(rank),
            ..Default::default()
        },
    })
}

/// Best rank-one factorisation `Θ ≈ q xᵀ` with `‖q‖ = 1` and `Σ x ≥ 0`.
pub(crate) fn leading_pair(theta: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    // Leading eigenpair of ΘᵀΘ gives v₁ and σ₁²; then q = Θ v₁ / σ₁.
    let eig = theta.tr_mul(theta).symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(k).into_owned();
    let u = theta * &v;
    let sigma = u.norm();
    if sigma == 0.0 {
        return (vec![0.0; theta.nrows()], vec![0.0; theta.ncols()]);
    }
    let mut q = to_vec(&(u / sigma));
    let mut x: Vec<f64> = v.iter().map(|c| c * sigma).collect();
    if x.iter().sum::<f64>() < 0.0 {
        q.iter_mut().for_each(|v| *v = -*v);
        x.iter_mut().for_each(|v| *v = -*v);
    }
    (q, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_output_gives_zero_factors() {
        let p = BlindIdProblem::new(vec![0.0; 60], vec![20, 40, 60], 4).unwrap();
        let r = baseline_identify(&p).unwrap();
        assert!(r.q.iter().chain(&r.x).chain(&r.y_hat).all(|&v| v == 0.0));
    }

    #[test]
    fn rank_deficient_when_last_segment_shorter_than_order() {
        // Shifts of the last 3-sample segment beyond lag 2 fall off the end.
        let p = BlindIdProblem::new(vec![1.0; 40], vec![37, 40], 5).unwrap();
        match baseline_identify(&p) {
            Err(Error::Identifiability { rank, cols }) => {
                assert_eq!(cols, 10);
                assert_eq!(rank, 7);
            }
            other => panic!("expected identifiability error, got {other:?}"),
        }
    }

    #[test]
    fn leading_pair_is_best_rank_one() {
        let theta = DMatrix::from_row_slice(3, 2, &[3.0, 1.0, 2.0, 0.5, -1.0, 0.2]);
        let (q, x) = leading_pair(&theta);
        let approx = DMatrix::from_fn(3, 2, |i, j| q[i] * x[j]);
        let err = (&theta - approx).norm();
        // Eckart–Young: the error equals the trailing singular value.
        let sv = theta.singular_values();
        assert!((err - sv.min()).abs() < 1e-12);
        assert!(x.iter().sum::<f64>() >= 0.0);
    }

    #[test]
    fn leading_pair_of_exact_rank_one() {
        let q = [0.0834, 0.3019, 0.5688, 0.4405, -0.8453];
        let x = [1.1774, 1.4464, 1.7173];
        let theta = DMatrix::from_fn(5, 3, |i, j| q[i] * x[j] * (1.0 + 1e-16 * (i + j) as f64));
        let (qh, xh) = leading_pair(&theta);
        let approx = DMatrix::from_fn(5, 3, |i, j| qh[i] * xh[j]);
        assert!((&theta - approx).norm() < 1e-13 * theta.norm());
    }

    #[test]
    fn dimension_error_when_underdetermined() {
        let p = BlindIdProblem::new(vec![1.0; 20], vec![5, 10, 15, 20], 6).unwrap();
        assert!(matches!(baseline_identify(&p), Err(Error::Dimension(_))));
    }
}
