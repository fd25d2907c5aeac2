use nalgebra::{DMatrix, DVector};

/// Least squares `min ‖A z − b‖` by Householder QR with column-norm pivoting.
///
/// Elimination stops once the largest remaining column norm drops to
/// `rtol · |R₀₀|`; the coefficients of the columns left out are zero (a
/// basic solution). Returns the solution and the number of columns used.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rtol: f64) -> (DVector<f64>, usize) {
    assert_eq!(a.nrows(), b.len());
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut rhs = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    let mut lead = 0.0;

    for k in 0..m.min(n) {
        let (j, norm) = (k..n)
            .map(|j| (j, r.column(j).rows(k, m - k).norm()))
            .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if k == 0 {
            lead = norm;
        }
        if norm == 0.0 || norm <= rtol * lead {
            break;
        }
        r.swap_columns(k, j);
        perm.swap(k, j);

        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: DVector<f64> = r.column(k).rows(k, m - k).into_owned();
        v[0] -= alpha;
        let vv = v.norm_squared();
        if vv > 0.0 {
            for c in k + 1..n {
                let mut col = r.column_mut(c);
                let mut seg = col.rows_mut(k, m - k);
                let s = 2.0 * v.dot(&seg) / vv;
                seg.axpy(-s, &v, 1.0);
            }
            let mut tail = rhs.rows_mut(k, m - k);
            let s = 2.0 * v.dot(&tail) / vv;
            tail.axpy(-s, &v, 1.0);
        }
        r[(k, k)] = alpha;
        for i in k + 1..m {
            r[(i, k)] = 0.0;
        }
        rank = k + 1;
    }

    let mut z = DVector::zeros(rank);
    for i in (0..rank).rev() {
        let s: f64 = (i + 1..rank).map(|c| r[(i, c)] * z[c]).sum();
        z[i] = (rhs[i] - s) / r[(i, i)];
    }
    let mut x = DVector::zeros(n);
    for (i, &p) in perm.iter().take(rank).enumerate() {
        x[p] = z[i];
    }
    (x, rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_system() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let z = DVector::from_vec(vec![0.5, -2.0]);
        let (x, rank) = lstsq(&a, &(&a * &z), 1e-12);
        assert_eq!(rank, 2);
        assert!((x - z).amax() < 1e-14);
    }

    #[test]
    fn rank_deficient_drops_columns() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 1.0, 3.0, 6.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (x, rank) = lstsq(&a, &b, 1e-12);
        assert_eq!(rank, 2);
        assert!((&a * &x - &b).norm() < 1e-12);
    }

    proptest! {
        // Normal equations hold at the solution of a full-rank problem.
        #[test]
        fn residual_is_orthogonal(
            m in 4usize..12,
            n in 1usize..4,
            seed in proptest::collection::vec(-1.0f64..1.0, 64),
        ) {
            let a = DMatrix::from_fn(m, n, |i, j| seed[(i * 5 + j * 3) % 64] + if i == j { 2.0 } else { 0.0 });
            let b = DVector::from_fn(m, |i, _| seed[(i * 7 + 1) % 64]);
            let (x, rank) = lstsq(&a, &b, 1e-12);
            prop_assert_eq!(rank, n);
            let g = a.tr_mul(&(&a * &x - &b));
            prop_assert!(g.amax() < 1e-10);
        }
    }
}
