//! Tiny dense linear solves (at most 9x9) with a condition estimate.

use crate::scalar::Scalar;

pub(crate) const WARN_CONDITION: f64 = 1e8;
pub(crate) const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub(crate) struct Solved<T> {
    pub x: Vec<T>,
    /// 1-norm condition number of the row-equilibrated matrix.
    pub condition: f64,
}

struct Lu<T> {
    lu: Vec<Vec<T>>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    /// Gaussian elimination with partial pivoting; `None` on an exactly zero pivot.
    fn factor(mut a: Vec<Vec<T>>) -> Option<Self> {
        let n = a.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let pivot = (k..n)
                .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
            if a[pivot][k].is_zero() {
                return None;
            }
            a.swap(k, pivot);
            perm.swap(k, pivot);
            for i in (k + 1)..n {
                let factor = a[i][k].clone() / a[k][k].clone();
                for j in (k + 1)..n {
                    let delta = factor.clone() * a[k][j].clone();
                    a[i][j] = a[i][j].clone() - delta;
                }
                a[i][k] = factor;
            }
        }
        Some(Self { lu: a, perm })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.len();
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p].clone()).collect();
        for i in 0..n {
            for j in 0..i {
                let delta = self.lu[i][j].clone() * y[j].clone();
                y[i] = y[i].clone() - delta;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let delta = self.lu[i][j].clone() * y[j].clone();
                y[i] = y[i].clone() - delta;
            }
            y[i] = y[i].clone() / self.lu[i][i].clone();
        }
        y
    }
}

fn one_norm<T: Scalar>(cols: impl Iterator<Item = Vec<T>>) -> f64 {
    cols.map(|c| c.iter().map(|v| v.abs().to_f64_lossy()).sum::<f64>()).fold(0.0, f64::max)
}

/// Solve `a x = b`. Returns `None` when the matrix is exactly singular.
///
/// Rows are equilibrated by their largest entry unless `row_scale` supplies
/// the magnitude at which each row was computed; rows that lost digits to
/// cancellation then show up in the condition estimate.
pub(crate) fn solve<T: Scalar>(a: &[Vec<T>], b: &[T], row_scale: Option<&[T]>) -> Option<Solved<T>> {
    let n = a.len();
    if n == 0 {
        return Some(Solved { x: Vec::new(), condition: 1.0 });
    }
    let mut rows = a.to_vec();
    let mut rhs = b.to_vec();
    for (i, (row, r)) in rows.iter_mut().zip(rhs.iter_mut()).enumerate() {
        let scale = match row_scale {
            Some(s) => s[i].clone(),
            None => row.iter().map(|v| v.abs()).fold(T::zero(), |m, v| if v > m { v } else { m }),
        };
        if scale.is_zero() {
            return None;
        }
        for v in row.iter_mut() {
            *v = v.clone() / scale.clone();
        }
        *r = r.clone() / scale;
    }
    let norm_a = one_norm((0..n).map(|j| rows.iter().map(|r| r[j].clone()).collect()));
    let lu = Lu::factor(rows)?;
    let x = lu.solve(&rhs);
    let inverse_cols = (0..n).map(|j| {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        lu.solve(&e)
    });
    let condition = norm_a * one_norm(inverse_cols);
    Some(Solved { x, condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn solves_small_system_with_pivoting() {
        let a = vec![vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]];
        let b = [5.0, 3.0, 6.0];
        let s = solve(&a, &b, None).unwrap();
        for (i, row) in a.iter().enumerate() {
            let lhs: f64 = row.iter().zip(&s.x).map(|(a, x)| a * x).sum();
            assert!((lhs - b[i]).abs() < 1e-14);
        }
        assert!(s.condition >= 1.0 && s.condition < 100.0);
    }

    #[test]
    fn exact_rational_solution() {
        let r = |n, d| BigRational::from_ratio(n, d);
        let a = vec![vec![r(1, 2), r(1, 3)], vec![r(1, 4), r(1, 5)]];
        let s = solve(&a, &[r(1, 1), r(0, 1)], None).unwrap();
        // inverse of [[1/2,1/3],[1/4,1/5]] applied to e1
        assert_eq!(s.x, vec![r(12, 1), r(-15, 1)]);
    }

    #[test]
    fn singular_and_ill_conditioned() {
        assert!(solve(&[vec![1.0, 2.0], vec![2.0, 4.0]], &[1.0, 2.0], None).is_none());
        let s = solve(&[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-10]], &[1.0, 1.0], None).unwrap();
        assert!(s.condition > 1e9);
        // a row computed at magnitude 1 whose entries cancelled down to 1e-14
        let s = solve(&[vec![1.0, 0.0], vec![0.0, 1e-14]], &[1.0, 1.0], Some(&[1.0, 1.0])).unwrap();
        assert!(s.condition > 1e13);
    }
}
