//! Dense Gaussian elimination over any [`Scalar`], exact for rationals.

use thiserror::Error;

use crate::scalar::{abs, to_f64, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular (zero pivot in column {column})")]
    Singular { column: usize },
    #[error("right-hand side has {got} entries, expected {expected}")]
    RhsLength { expected: usize, got: usize },
}

fn check_square<T>(m: &[Vec<T>]) -> Result<usize, LinalgError> {
    let n = m.len();
    if let Some(row) = m.iter().find(|r| r.len() != n) {
        return Err(LinalgError::NotSquare { rows: n, cols: row.len() });
    }
    Ok(n)
}

/// Solves `M X = B` for several right-hand sides with partial pivoting.
pub fn solve_many<T: Scalar>(m: &[Vec<T>], rhs: &[Vec<T>]) -> Result<Vec<Vec<T>>, LinalgError> {
    let n = check_square(m)?;
    if let Some(r) = rhs.iter().find(|r| r.len() != n) {
        return Err(LinalgError::RhsLength { expected: n, got: r.len() });
    }
    let k = rhs.len();
    // augmented rows: [M | B^T]
    let mut aug: Vec<Vec<T>> = (0..n)
        .map(|i| {
            let mut row = m[i].clone();
            row.extend(rhs.iter().map(|b| b[i].clone()));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| abs(&aug[a][col]).partial_cmp(&abs(&aug[b][col])).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty range");
        if aug[pivot][col].is_zero() {
            return Err(LinalgError::Singular { column: col });
        }
        aug.swap(col, pivot);
        let p = aug[col][col].clone();
        for r in col + 1..n {
            let f = aug[r][col].clone() / p.clone();
            if f.is_zero() {
                continue;
            }
            let (upper, lower) = aug.split_at_mut(r);
            for (x, v) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x = x.clone() - f.clone() * v.clone();
            }
        }
    }
    let mut out = vec![vec![T::zero(); n]; k];
    for j in 0..k {
        for i in (0..n).rev() {
            let mut s = aug[i][n + j].clone();
            for c in i + 1..n {
                s = s - aug[i][c].clone() * out[j][c].clone();
            }
            out[j][i] = s / aug[i][i].clone();
        }
    }
    Ok(out)
}

pub fn solve<T: Scalar>(m: &[Vec<T>], rhs: &[T]) -> Result<Vec<T>, LinalgError> {
    Ok(solve_many(m, &[rhs.to_vec()])?.pop().expect("one solution"))
}

pub fn inverse<T: Scalar>(m: &[Vec<T>]) -> Result<Vec<Vec<T>>, LinalgError> {
    let n = check_square(m)?;
    let eye: Vec<Vec<T>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect()).collect();
    // columns of the inverse come back as rows
    let cols = solve_many(m, &eye)?;
    Ok((0..n).map(|i| (0..n).map(|j| cols[j][i].clone()).collect()).collect())
}

pub fn norm_inf<T: Scalar>(m: &[Vec<T>]) -> f64 {
    m.iter().map(|r| r.iter().map(|x| to_f64(x).abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn vec_norm_inf<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| to_f64(x).abs()).fold(0.0, f64::max)
}

/// `‖M‖∞ ‖M⁻¹‖∞`
pub fn condition_inf<T: Scalar>(m: &[Vec<T>]) -> Result<f64, LinalgError> {
    Ok(norm_inf(m) * norm_inf(&inverse(m)?))
}

pub fn mat_vec<T: Scalar>(m: &[Vec<T>], x: &[T]) -> Vec<T> {
    m.iter().map(|r| r.iter().zip(x).fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn solves_small_system() {
        let m = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve::<f64>(&m, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8f64).abs() < 1e-15 && (x[1] - 1.4f64).abs() < 1e-15);
    }

    #[test]
    fn exact_over_rationals() {
        let r = |v: i64| BigRational::from_integer(v.into());
        let m = vec![vec![r(3), r(1)], vec![r(1), r(3)]];
        let x = solve(&m, &[r(1), r(0)]).unwrap();
        assert_eq!(x, vec![BigRational::new(3.into(), 8.into()), BigRational::new((-1).into(), 8.into())]);
    }

    #[test]
    fn singular_and_shape_errors() {
        assert_eq!(solve(&[vec![1.0, 2.0], vec![2.0, 4.0]], &[1.0, 1.0]), Err(LinalgError::Singular { column: 1 }));
        assert!(matches!(solve(&[vec![1.0, 2.0]], &[1.0]), Err(LinalgError::NotSquare { .. })));
        assert!(matches!(solve(&[vec![1.0]], &[1.0, 2.0]), Err(LinalgError::RhsLength { .. })));
    }

    #[test]
    fn condition_of_identity() {
        assert_eq!(condition_inf(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), 1.0);
    }
}
