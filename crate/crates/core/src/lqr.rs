//! Continuous-time LQ regulator: Hamiltonian, Riccati solution and the
//! determinant identity `P(−s)P(s) = (−1)^n det(sI − H)` for monic `P`.
//!
//! The stabilizing Riccati solution comes from the stable invariant subspace
//! of `H`, read off the matrix sign function, then polished by Newton steps
//! (each a Lyapunov solve in Kronecker form).

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::poly::{PolyError, Polynomial};
use crate::scalar::{lit, to_f64, Real};
use crate::scdm::{square_poly, SquaredPolynomial};
use crate::statespace::eigenvalues;

/// Hamiltonian eigenvalues with `|Re λ| ≤ AXIS_TOL·max(1, |λ|)` are on the axis.
pub const AXIS_TOL: f64 = 1e-8;
/// Required `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖∞ / (1 + ‖P‖∞)`.
pub const RESIDUAL_TOL: f64 = 1e-8;
const SIGN_MAX_ITER: usize = 100;
const NEWTON_MAX_ITER: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqrError {
    #[error("{what}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    Dimension { what: &'static str, rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("R is singular")]
    SingularR,
    #[error("R is not symmetric positive definite")]
    RNotPositiveDefinite,
    #[error("Q is not positive semidefinite (smallest eigenvalue {0}); use the Hamiltonian path")]
    QIndefinite(f64),
    #[error("Hamiltonian eigenvalue {re} + {im}i lies on the imaginary axis")]
    ImaginaryAxis { re: f64, im: f64 },
    #[error("(A, B) is not stabilizable for this weighting")]
    NotStabilizable,
    #[error("matrix sign iteration did not converge")]
    NoConvergence,
    #[error("Riccati residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LqDesign<T: Real> {
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
    pub p_riccati: DMatrix<T>,
    pub k: DMatrix<T>,
    pub closed_loop_poles: Vec<Complex<T>>,
    /// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖∞ / (1 + ‖P‖∞)`
    pub residual: f64,
}

impl<T: Real> LqDesign<T> {
    /// Monic `det(sI − A + BK)`.
    pub fn closed_loop_poly(&self) -> Result<Polynomial<T>, PolyError> {
        Polynomial::from_roots(&self.closed_loop_poles, T::one())
    }
}

fn dim_check<T: Real>(
    what: &'static str,
    m: &DMatrix<T>,
    expected_rows: usize,
    expected_cols: usize,
) -> Result<(), LqrError> {
    if m.nrows() != expected_rows || m.ncols() != expected_cols {
        return Err(LqrError::Dimension { what, rows: m.nrows(), cols: m.ncols(), expected_rows, expected_cols });
    }
    Ok(())
}

fn check_dims<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, q: &DMatrix<T>, r: &DMatrix<T>) -> Result<(), LqrError> {
    let n = a.nrows();
    let m = b.ncols();
    dim_check("A", a, n, n)?;
    dim_check("B", b, n, m)?;
    dim_check("Q", q, n, n)?;
    dim_check("R", r, m, m)
}

pub(crate) fn norm_inf<T: Real>(m: &DMatrix<T>) -> T {
    m.row_iter().map(|r| r.iter().fold(T::zero(), |acc, x| acc + x.abs())).fold(T::zero(), |a, b| a.max(b))
}

fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// `[[A, −B R⁻¹ Bᵀ], [−Q, −Aᵀ]]`
pub fn hamiltonian<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<DMatrix<T>, LqrError> {
    check_dims(a, b, q, r)?;
    let n = a.nrows();
    let r_inv = r.clone().try_inverse().ok_or(LqrError::SingularR)?;
    let g = b * r_inv * b.transpose();
    let mut h = DMatrix::<T>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&-g);
    h.view_mut((n, 0), (n, n)).copy_from(&-q);
    h.view_mut((n, n), (n, n)).copy_from(&-a.transpose());
    Ok(h)
}

/// Monic characteristic polynomial from the eigenvalues.
pub fn char_poly<T: Real>(m: &DMatrix<T>) -> Result<Polynomial<T>, PolyError> {
    Polynomial::from_roots(&eigenvalues(m)?, T::one())
}

/// Newton iteration `Z ← (cZ + (cZ)⁻¹)/2` with determinant scaling.
fn matrix_sign<T: Real>(h: &DMatrix<T>) -> Result<DMatrix<T>, LqrError> {
    let dim = h.nrows();
    let mut z = h.clone();
    let half: T = lit(0.5);
    let tol: T = lit(1e-13);
    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let u = lu.u();
        let log_det = (0..dim).fold(T::zero(), |acc, i| acc + u[(i, i)].abs().ln());
        let inv = lu.try_inverse().ok_or(LqrError::NoConvergence)?;
        let c = (-log_det / lit(dim as f64)).exp();
        let next = (&z * c + inv / c) * half;
        let change = (&next - &z).norm();
        let size = next.norm();
        if !size.is_finite() {
            return Err(LqrError::NoConvergence);
        }
        z = next;
        if change <= tol * size {
            return Ok(z);
        }
    }
    // slow tail: accept when idempotent enough (Z² ≈ I)
    let err = (&z * &z - DMatrix::identity(dim, dim)).norm();
    if err <= lit(1e-8) {
        Ok(z)
    } else {
        Err(LqrError::NoConvergence)
    }
}

/// Solves `Acᵀ X + X Ac = −C` through the Kronecker-sum system.
fn lyapunov<T: Real>(ac: &DMatrix<T>, c: &DMatrix<T>) -> Option<DMatrix<T>> {
    let n = ac.nrows();
    let eye = DMatrix::<T>::identity(n, n);
    let act = ac.transpose();
    let op = eye.kronecker(&act) + act.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, c.iter().map(|x| -*x));
    let x = op.lu().solve(&rhs)?;
    Some(symmetrize(&DMatrix::from_vec(n, n, x.data.as_vec().clone())))
}

fn riccati_residual<T: Real>(a: &DMatrix<T>, g: &DMatrix<T>, q: &DMatrix<T>, p: &DMatrix<T>) -> DMatrix<T> {
    a.transpose() * p + p * a - p * g * p + q
}

fn relative_residual<T: Real>(res: &DMatrix<T>, p: &DMatrix<T>) -> f64 {
    to_f64(&norm_inf(res)) / (1.0 + to_f64(&norm_inf(p)))
}

/// Stabilizing solution for any symmetric `Q` (definite or not), provided the
/// Hamiltonian has no imaginary-axis eigenvalues.
pub fn solve_hamiltonian<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<LqDesign<T>, LqrError> {
    let q = symmetrize(q);
    let h = hamiltonian(a, b, &q, r)?;
    let n = a.nrows();
    let axis: T = lit(AXIS_TOL);
    for ev in eigenvalues(&h)? {
        let size = ev.re.hypot(ev.im).max(T::one());
        if ev.re.abs() <= axis * size {
            return Err(LqrError::ImaginaryAxis { re: to_f64(&ev.re), im: to_f64(&ev.im) });
        }
    }
    let r_inv = r.clone().try_inverse().ok_or(LqrError::SingularR)?;
    let g = b * &r_inv * b.transpose();
    let p = if n == 0 {
        DMatrix::zeros(0, 0)
    } else {
        let w = matrix_sign(&h)?;
        let eye = DMatrix::<T>::identity(n, n);
        let mut lhs = DMatrix::<T>::zeros(2 * n, n);
        lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
        lhs.view_mut((n, 0), (n, n)).copy_from(&(w.view((n, n), (n, n)) + &eye));
        let mut rhs = DMatrix::<T>::zeros(2 * n, n);
        rhs.view_mut((0, 0), (n, n)).copy_from(&-(w.view((0, 0), (n, n)) + &eye));
        rhs.view_mut((n, 0), (n, n)).copy_from(&-w.view((n, 0), (n, n)));
        let svd = lhs.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > smax * lit(1e-12)) {
            return Err(LqrError::NotStabilizable);
        }
        symmetrize(&svd.solve(&rhs, T::zero()).map_err(|_| LqrError::NotStabilizable)?)
    };
    let p = newton_refine(a, b, &g, &r_inv, &q, p);
    let k = &r_inv * b.transpose() * &p;
    let closed = a - b * &k;
    let poles = eigenvalues(&closed)?;
    if poles.iter().any(|z| z.re >= T::zero()) {
        return Err(LqrError::NotStabilizable);
    }
    let residual = relative_residual(&riccati_residual(a, &g, &q, &p), &p);
    if !(residual <= RESIDUAL_TOL) {
        return Err(LqrError::Residual(residual));
    }
    Ok(LqDesign { q, r: r.clone(), p_riccati: p, k, closed_loop_poles: poles, residual })
}

/// Newton steps `(A − GP)ᵀ X + X (A − GP) = −Res(P)`, `P ← P + X`, kept only
/// while the residual shrinks.
fn newton_refine<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    g: &DMatrix<T>,
    r_inv: &DMatrix<T>,
    q: &DMatrix<T>,
    mut p: DMatrix<T>,
) -> DMatrix<T> {
    let mut res = riccati_residual(a, g, q, &p);
    let mut err = norm_inf(&res);
    for _ in 0..NEWTON_MAX_ITER {
        if err == T::zero() {
            break;
        }
        let k = r_inv * b.transpose() * &p;
        let ac = a - b * k;
        let Some(x) = lyapunov(&ac, &res) else { break };
        let candidate = &p + x;
        let cand_res = riccati_residual(a, g, q, &candidate);
        let cand_err = norm_inf(&cand_res);
        if !(cand_err < err) {
            break;
        }
        let gain = err / cand_err;
        p = candidate;
        res = cand_res;
        err = cand_err;
        if gain < lit(1.5) {
            break;
        }
    }
    p
}

/// Riccati path: requires `R` positive definite and `Q` positive semidefinite.
pub fn solve_care<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<LqDesign<T>, LqrError> {
    check_dims(a, b, q, r)?;
    if symmetrize(r).cholesky().is_none() {
        return Err(LqrError::RNotPositiveDefinite);
    }
    let qs = symmetrize(q);
    if qs.nrows() > 0 {
        let min_eig = qs.clone().symmetric_eigen().eigenvalues.min();
        let scale = norm_inf(&qs).max(T::one());
        if min_eig < -scale * lit(1e-12) {
            return Err(LqrError::QIndefinite(to_f64(&min_eig)));
        }
    }
    solve_hamiltonian(a, b, &qs, r)
}

/// Both sides of the determinant identity in `Ω = −s²`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetIdentityReport<T> {
    /// Monic closed-loop polynomial `P(s)`.
    pub closed_loop: Polynomial<T>,
    /// `P(−s)P(s)` from the closed-loop poles.
    pub pp_from_poles: SquaredPolynomial<T>,
    /// `(−1)^n det(sI − H)` re-expressed in `Ω`.
    pub pp_from_h: SquaredPolynomial<T>,
    /// See [`squared_coeff_error`].
    pub max_relative_error: f64,
}

/// Per-coefficient error of two squared polynomials of `p`, each measured
/// against the magnitude of the terms summed into that coefficient,
/// `Σ_j |a_j a_{2i−j}|`. Coefficients that cancel (such as a vanishing
/// `Ω^{n−1}` term) are therefore judged on the scale of their ingredients.
pub fn squared_coeff_error<T: Real>(p: &Polynomial<T>, a: &[T], b: &[T]) -> f64 {
    let mags: Vec<f64> = p.coeffs().iter().map(|c| to_f64(c).abs()).collect();
    let n = a.len().max(b.len());
    let get = |v: &[T], i: usize| v.get(i).map(to_f64).unwrap_or(0.0);
    (0..n)
        .map(|i| {
            let ingredients: f64 = (0..mags.len())
                .filter_map(|j| (2 * i).checked_sub(j).and_then(|k| mags.get(k)).map(|m| m * mags[j]))
                .sum();
            let (x, y) = (get(a, i), get(b, i));
            let scale = x.abs().max(y.abs()).max(ingredients);
            if scale == 0.0 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Computes the LQ design on the Hamiltonian path and compares
/// `square_poly(P)` against `(−1)^n char_poly(H)` in `Ω`.
pub fn verify_det_identity<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<DetIdentityReport<T>, LqrError> {
    let design = solve_hamiltonian(a, b, q, r)?;
    let closed_loop = design.closed_loop_poly()?;
    let pp_from_poles = square_poly(&closed_loop);
    let h = hamiltonian(a, b, &design.q, r)?;
    let ch = char_poly(&h)?;
    let n = a.nrows();
    let omega: Vec<T> = (0..=n)
        .map(|i| {
            let c = ch.coeff(2 * i);
            if (n + i).is_multiple_of(2) {
                c
            } else {
                -c
            }
        })
        .collect();
    let pp_from_h = SquaredPolynomial(Polynomial::new(omega)?);
    let max_relative_error = squared_coeff_error(&closed_loop, pp_from_poles.coeffs(), pp_from_h.coeffs());
    Ok(DetIdentityReport { closed_loop, pp_from_poles, pp_from_h, max_relative_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::max_rel_coeff_error;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    fn s(x: f64) -> DMatrix<f64> {
        m(1, 1, &[x])
    }

    #[test]
    fn hamiltonian_blocks() {
        let h = hamiltonian(&s(-1.0), &s(1.0), &s(0.0), &s(1.0)).unwrap();
        assert_eq!(h, m(2, 2, &[-1.0, -1.0, 0.0, 1.0]));
        let h = hamiltonian(&s(1.0), &s(1.0), &s(3.0), &s(1.0)).unwrap();
        let mut ev: Vec<f64> = eigenvalues(&h).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] + 2.0).abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12);
        assert_eq!(hamiltonian(&s(1.0), &s(1.0), &s(1.0), &s(0.0)), Err(LqrError::SingularR));
    }

    #[test]
    fn scalar_riccati() {
        let d = solve_care(&s(1.0), &s(1.0), &s(3.0), &s(1.0)).unwrap();
        assert!((d.p_riccati[(0, 0)] - 3.0).abs() < 1e-10);
        assert!((d.k[(0, 0)] - 3.0).abs() < 1e-10);
        assert!((d.closed_loop_poles[0].re + 2.0).abs() < 1e-10);
    }

    #[test]
    fn zero_weight_on_stable_plant() {
        let a = m(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let d = solve_care(&a, &b, &DMatrix::zeros(2, 2), &s(1.0)).unwrap();
        assert!(d.k.amax() < 1e-12 && d.p_riccati.amax() < 1e-12);
        let rep = verify_det_identity(&a, &b, &DMatrix::zeros(2, 2), &s(1.0)).unwrap();
        assert!(max_rel_coeff_error(rep.closed_loop.coeffs(), &[2.0, 3.0, 1.0]) < 1e-10);
    }

    #[test]
    fn refusals() {
        assert!(matches!(solve_care(&s(1.0), &s(1.0), &s(-1.0), &s(1.0)), Err(LqrError::QIndefinite(_))));
        assert_eq!(solve_care(&s(1.0), &s(1.0), &s(1.0), &s(-1.0)), Err(LqrError::RNotPositiveDefinite));
        assert_eq!(solve_care(&s(1.0), &s(0.0), &s(0.0), &s(1.0)), Err(LqrError::NotStabilizable));
        // undamped oscillator, no state weight: eigenvalues ±i stay on the axis
        let a = m(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        assert!(matches!(solve_care(&a, &b, &DMatrix::zeros(2, 2), &s(1.0)), Err(LqrError::ImaginaryAxis { .. })));
        assert!(matches!(
            solve_care(&a, &b, &DMatrix::zeros(3, 3), &s(1.0)),
            Err(LqrError::Dimension { what: "Q", .. })
        ));
    }

    #[test]
    fn indefinite_weight_on_hamiltonian_path() {
        // q = −0.5 still leaves a² + q > 0, so a stabilizing solution exists
        let d = solve_hamiltonian(&s(1.0), &s(1.0), &s(-0.5), &s(1.0)).unwrap();
        assert!((d.closed_loop_poles[0].re + 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn char_poly_examples() {
        let cp = char_poly(&m(2, 2, &[0.0, 1.0, -1.0, -2.0])).unwrap();
        assert!(max_rel_coeff_error(cp.coeffs(), &[1.0, 2.0, 1.0]) < 1e-7);
        assert_eq!(char_poly(&DMatrix::<f64>::zeros(3, 3)).unwrap(), Polynomial::monomial(3, 1.0));
    }

    #[test]
    fn scalar_det_identity() {
        let rep = verify_det_identity(&s(1.0), &s(1.0), &s(3.0), &s(1.0)).unwrap();
        assert!(max_rel_coeff_error(rep.pp_from_poles.coeffs(), &[4.0, 1.0]) < 1e-10);
        assert!(max_rel_coeff_error(rep.pp_from_h.coeffs(), &[4.0, 1.0]) < 1e-10);
        assert!(rep.max_relative_error < 1e-10);
    }

    #[test]
    fn two_state_design() {
        let a = m(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let q = m(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let d = solve_care(&a, &b, &q, &s(1.0)).unwrap();
        // double integrator: K = [1, sqrt 2]
        assert!((d.k[(0, 0)] - 1.0).abs() < 1e-10 && (d.k[(0, 1)] - 2f64.sqrt()).abs() < 1e-10);
        assert!(d.residual <= RESIDUAL_TOL);
    }
}
