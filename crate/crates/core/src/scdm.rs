//! Squared polynomials `PP(Ω) = P(−s)P(s)` with `Ω = −s²`, their stable
//! square roots, and analytical LQ weight recovery.

use std::fmt::Write as _;

use nalgebra::{Complex, ComplexField, DMatrix, DVector};
use thiserror::Error;

use crate::plant::PlantTF;
use crate::poly::{modulus, PolyError, Polynomial, CONJUGATE_TOL};
use crate::scalar::{lit, to_f64, Real, Scalar};
use crate::statespace::{StateSpace, StateSpaceError};
use crate::text::fmt_num;

/// An `s`-root with `|Re s| ≤ AXIS_TOL·|s|` counts as lying on the imaginary axis.
pub const AXIS_TOL: f64 = 1e-8;
/// Singular values below this fraction of the largest (after column scaling)
/// mark the weight system as rank deficient.
pub const RANK_TOL: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScdmError {
    #[error("squared polynomial has a positive real Omega-root {0}; no stable real square root exists")]
    PositiveRealRoot(f64),
    #[error("square root would have a root on the imaginary axis near {re} + {im}i")]
    ImaginaryAxisRoot { re: f64, im: f64 },
    #[error("leading coefficient {0} of the squared polynomial must be positive")]
    NonPositiveLeading(f64),
    #[error("degree bookkeeping: nc + np = {got} but the target has degree {expected}")]
    DegreeMismatch { expected: usize, got: usize },
    #[error("weight system is rank deficient (rank {rank} of {unknowns})")]
    RankDeficient { rank: usize, unknowns: usize },
    #[error("weight identity residual {0:e} is too large; target is not reachable")]
    Inconsistent(f64),
    #[error("hover realization needs a monic plant denominator of degree >= 1")]
    BadDenominator,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    StateSpace(#[from] StateSpaceError),
}

/// Polynomial in `Ω = −s²`, ascending powers.
#[derive(Clone, Debug, PartialEq)]
pub struct SquaredPolynomial<T>(pub Polynomial<T>);

impl<T: Scalar> SquaredPolynomial<T> {
    pub fn coeffs(&self) -> &[T] {
        self.0.coeffs()
    }

    pub fn degree(&self) -> usize {
        self.0.degree()
    }

    /// `PP` as a polynomial in `s` (even powers only).
    pub fn to_s_domain(&self) -> Polynomial<T> {
        let mut c = vec![T::zero(); 2 * self.degree() + 1];
        for (i, a) in self.coeffs().iter().enumerate() {
            c[2 * i] = if i % 2 == 0 { a.clone() } else { -a.clone() };
        }
        Polynomial::from_trusted(c)
    }
}

impl<T: Real> SquaredPolynomial<T> {
    /// `PP(−z²)`, which equals `P(−z) P(z)` for a squared polynomial.
    pub fn eval_at_s(&self, z: &Complex<T>) -> Complex<T> {
        self.0.eval(&-(z * z))
    }
}

/// `aq_i = a_i² + 2 Σ_{j=1..min(i,n−i)} (−1)^j a_{i−j} a_{i+j}`.
pub fn square_poly<T: Scalar>(p: &Polynomial<T>) -> SquaredPolynomial<T> {
    let a = p.coeffs();
    let n = p.degree();
    let two = T::one() + T::one();
    let aq = (0..=n)
        .map(|i| {
            let mut acc = a[i].clone() * a[i].clone();
            for j in 1..=i.min(n - i) {
                let term = two.clone() * a[i - j].clone() * a[i + j].clone();
                acc = if j % 2 == 0 { acc + term } else { acc - term };
            }
            acc
        })
        .collect();
    SquaredPolynomial(Polynomial::from_trusted(aq))
}

/// The stable `P(s)` with `square_poly(P) = pp`, leading coefficient `sqrt(aq_n)`.
pub fn square_root_poly<T: Real>(pp: &SquaredPolynomial<T>) -> Result<Polynomial<T>, ScdmError> {
    let lead = *pp.0.leading();
    if lead <= T::zero() {
        return Err(ScdmError::NonPositiveLeading(to_f64(&lead)));
    }
    let scale = lead.sqrt();
    if pp.degree() == 0 {
        return Ok(Polynomial::constant(scale));
    }
    let tol: T = lit(CONJUGATE_TOL);
    let axis: T = lit(AXIS_TOL);
    let mut s_roots = Vec::with_capacity(pp.degree());
    for w in pp.0.roots()? {
        if w.re > T::zero() && w.im.abs() <= tol * modulus(&w) {
            return Err(ScdmError::PositiveRealRoot(to_f64(&w.re)));
        }
        let mut s = <Complex<T> as ComplexField>::sqrt(-w);
        if s.re > T::zero() {
            s = -s;
        }
        if -s.re <= axis * modulus(&s) {
            return Err(ScdmError::ImaginaryAxisRoot { re: to_f64(&s.re), im: to_f64(&s.im) });
        }
        s_roots.push(s);
    }
    Ok(Polynomial::from_roots(&s_roots, scale)?)
}

/// Multiplies the denominator by `s^nc`; numerators are unchanged.
pub fn augment_integrator<T: Scalar>(plant: &PlantTF<T>, nc: usize) -> PlantTF<T> {
    let mut out = plant.clone();
    out.den = plant.den.shift(nc);
    out
}

/// Weight polynomials `Q_u(Ω) = Σ qu_i Ω^i` (with `qu_nc` acting as `R`) and
/// `Q_y(Ω) = Σ qy_i Ω^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct HoverFormulation<T> {
    pub nc: usize,
    pub np: usize,
    pub mp: usize,
    pub qu: Vec<T>,
    pub qy: Vec<T>,
    /// `‖M q − pp‖∞ / ‖pp‖∞` of the coefficient-matching system.
    pub residual: f64,
}

impl<T: Scalar> HoverFormulation<T> {
    pub fn q_u(&self) -> Polynomial<T> {
        Polynomial::from_trusted(self.qu.clone())
    }

    pub fn q_y(&self) -> Polynomial<T> {
        Polynomial::from_trusted(self.qy.clone())
    }

    /// Control weight `R = qu_nc`.
    pub fn r_weight(&self) -> T {
        self.qu[self.nc].clone()
    }

    /// Labels of negative state weights; non-empty means `Q` is indefinite.
    pub fn negative_weights(&self) -> Vec<String> {
        let neg = |v: &T| *v < T::zero();
        let qu = self.qu[..self.nc].iter().enumerate().filter(|(_, v)| neg(v)).map(|(i, _)| format!("qu[{i}]"));
        let qy = self.qy.iter().enumerate().filter(|(_, v)| neg(v)).map(|(i, _)| format!("qy[{i}]"));
        qu.chain(qy).collect()
    }

    /// `key = value` text with `nc`, `np`, `mp`, `qu[i]`, `qy[i]`, `residual`.
    pub fn to_text(&self) -> String {
        let mut out = format!("nc = {}\nnp = {}\nmp = {}\n", self.nc, self.np, self.mp);
        for (i, v) in self.qu.iter().enumerate() {
            let _ = writeln!(out, "qu[{i}] = {}", fmt_num(to_f64(v)));
        }
        for (i, v) in self.qy.iter().enumerate() {
            let _ = writeln!(out, "qy[{i}] = {}", fmt_num(to_f64(v)));
        }
        let _ = writeln!(out, "residual = {}", fmt_num(self.residual));
        for w in self.negative_weights() {
            let _ = writeln!(out, "# warning: {w} is negative; Q is not positive semidefinite");
        }
        out
    }
}

/// Solves `PP = Q_u·AA_p + Q_y·BB_p` for `qu_0..qu_nc`, `qy_0..qy_{np−1}` by
/// column-scaled least squares with a rank check.
pub fn recover_weights<T: Real>(
    pp_target: &SquaredPolynomial<T>,
    plant_den_sq: &SquaredPolynomial<T>,
    plant_num_sq: &SquaredPolynomial<T>,
    nc: usize,
    np: usize,
) -> Result<HoverFormulation<T>, ScdmError> {
    if nc + np != pp_target.degree() {
        return Err(ScdmError::DegreeMismatch { expected: pp_target.degree(), got: nc + np });
    }
    let columns: Vec<Polynomial<T>> =
        (0..=nc).map(|i| plant_den_sq.0.shift(i)).chain((0..np).map(|j| plant_num_sq.0.shift(j))).collect();
    let rows = columns.iter().map(|c| c.degree()).chain([pp_target.degree()]).max().unwrap_or(0) + 1;
    let unknowns = columns.len();
    let mut m = DMatrix::<T>::zeros(rows, unknowns);
    let mut norms = vec![T::one(); unknowns];
    for (k, col) in columns.iter().enumerate() {
        let norm = col.coeffs().iter().fold(T::zero(), |acc, c| acc + *c * *c).sqrt();
        if norm > T::zero() {
            norms[k] = norm;
        }
        for r in 0..rows {
            m[(r, k)] = col.coeff(r) / norms[k];
        }
    }
    let rhs = DVector::from_iterator(rows, (0..rows).map(|r| pp_target.0.coeff(r)));
    // singular values decide the rank; the solve itself goes through
    // Householder QR, whose backward error does not depend on how well the
    // SVD iteration resolved the small singular vectors
    let sv = m.clone().singular_values();
    let smax = sv.iter().fold(T::zero(), |a, b| a.max(*b));
    let cutoff = smax * lit(RANK_TOL);
    let rank = sv.iter().filter(|s| **s > cutoff).count();
    if rows < unknowns || rank < unknowns {
        return Err(ScdmError::RankDeficient { rank, unknowns });
    }
    let qr = m.clone().qr();
    let (qm, r) = (qr.q(), qr.r());
    let ls = |b: &DVector<T>| r.solve_upper_triangular(&(qm.transpose() * b));
    let mut scaled = ls(&rhs).ok_or(ScdmError::RankDeficient { rank, unknowns })?;
    for _ in 0..2 {
        let res = &rhs - &m * &scaled;
        scaled += ls(&res).ok_or(ScdmError::RankDeficient { rank, unknowns })?;
    }
    let q: Vec<T> = scaled.iter().zip(&norms).map(|(x, n)| *x / *n).collect();
    let fitted = &m * &scaled;
    let diff = (fitted - &rhs).amax();
    let scale = rhs.amax();
    let residual = if scale > T::zero() { to_f64(&(diff / scale)) } else { to_f64(&diff) };
    if residual > 1e-6 {
        return Err(ScdmError::Inconsistent(residual));
    }
    Ok(HoverFormulation {
        nc,
        np,
        mp: plant_num_sq.degree(),
        qu: q[..=nc].to_vec(),
        qy: q[nc + 1..].to_vec(),
        residual,
    })
}

/// `diag(qu_{nc−1}, …, qu_0, qy_{np−1}, …, qy_0)`.
pub fn assemble_q<T: Real>(f: &HoverFormulation<T>) -> DMatrix<T> {
    let diag: Vec<T> = f.qu[..f.nc].iter().rev().chain(f.qy.iter().rev()).copied().collect();
    DMatrix::from_diagonal(&DVector::from_vec(diag))
}

/// Augmented hover model whose state ordering matches [`assemble_q`].
///
/// With `D(s) z = u`, `s^nc u = u_nc` and the output taken as `z`, the state
/// is `[u^(nc−1) … u, z^(np−1) … z]` and the single input is `u_nc`.
pub fn hover_state_space<T: Real>(den: &Polynomial<T>, nc: usize) -> Result<StateSpace<T>, ScdmError> {
    let np = den.degree();
    if np == 0 || *den.leading() != T::one() {
        return Err(ScdmError::BadDenominator);
    }
    let n = nc + np;
    let mut a = DMatrix::<T>::zeros(n, n);
    let mut b = DMatrix::<T>::zeros(n, 1);
    let mut c = DMatrix::<T>::zeros(1, n);
    for k in 1..nc {
        a[(k, k - 1)] = T::one();
    }
    // u_nc drives u^(nc−1), or the top of the z chain when nc = 0
    b[(0, 0)] = T::one();
    // z^(np) = u − Σ d_j z^(j); row `nc` is the top of the z chain
    if nc > 0 {
        a[(nc, nc - 1)] = T::one();
    }
    for k in 0..np {
        a[(nc, nc + k)] = -den.coeff(np - 1 - k);
    }
    for k in 1..np {
        a[(nc + k, nc + k - 1)] = T::one();
    }
    c[(0, n - 1)] = T::one();
    let states = (0..nc).rev().map(|i| format!("u^{i}")).chain((0..np).rev().map(|j| format!("z^{j}"))).collect();
    Ok(StateSpace::new(a, b, c, DMatrix::zeros(1, 1))?.with_labels(
        states,
        vec![format!("u^{nc}")],
        vec!["y".into()],
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdm::{standard_gammas, synth_target};
    use crate::poly::max_rel_coeff_error;
    use num_rational::BigRational;

    fn p(c: &[f64]) -> Polynomial<f64> {
        Polynomial::from_f64s(c).unwrap()
    }

    #[test]
    fn square_examples() {
        assert_eq!(square_poly(&p(&[1.0, 1.0])).0, p(&[1.0, 1.0]));
        let long = p(&[0.9581, 11.0203, 41.4357, 321.7496, 31.6547, 1.0]);
        let printed = [0.9179, 42.0507, -5313.9622, 100921.5997, 358.5208, 1.0];
        assert!(max_rel_coeff_error(square_poly(&long).coeffs(), &printed) < 1e-3);
    }

    #[test]
    fn square_matches_convolution() {
        let q = p(&[2.0, -1.0, 3.0, 0.5]);
        let conv = q.reflect().mul(&q);
        assert_eq!(square_poly(&q).to_s_domain(), conv);
    }

    #[test]
    fn standard_target_squares_exactly() {
        let r = |v: i64| BigRational::from_integer(v.into());
        let gamma = vec![BigRational::new(5.into(), 2.into()), r(2), r(2), r(2), r(2)];
        let a0 = BigRational::new(3125.into(), 2.into());
        let t = synth_target(6, &r(2), &gamma, &a0).unwrap();
        let sq = square_poly(&t);
        let expected =
            [BigRational::new(9765625.into(), 4.into()), r(1953125), r(625000), r(121875), r(5000), r(0), r(1)];
        assert_eq!(sq.coeffs(), &expected);
    }

    #[test]
    fn square_root_examples() {
        let pp = SquaredPolynomial(p(&[1.0, 1.0]));
        assert_eq!(square_root_poly(&pp).unwrap(), p(&[1.0, 1.0]));
        let t = synth_target(6, &2.0, &standard_gammas::<f64>(6), &1562.5).unwrap();
        let back = square_root_poly(&square_poly(&t)).unwrap();
        assert!(max_rel_coeff_error(back.coeffs(), t.coeffs()) < 1e-9);
    }

    #[test]
    fn square_root_rejects_boundary_cases() {
        // Ω − 1 has Ω = 1: s = ±i
        assert!(matches!(square_root_poly(&SquaredPolynomial(p(&[-1.0, 1.0]))), Err(ScdmError::PositiveRealRoot(_))));
        // Ω alone: s = 0
        assert!(matches!(
            square_root_poly(&SquaredPolynomial(p(&[0.0, 1.0]))),
            Err(ScdmError::ImaginaryAxisRoot { .. })
        ));
        assert!(matches!(square_root_poly(&SquaredPolynomial(p(&[1.0, -1.0]))), Err(ScdmError::NonPositiveLeading(_))));
    }

    #[test]
    fn augment_examples() {
        let plant = PlantTF::new(p(&[1.0, 1.0]), "u").unwrap();
        assert_eq!(augment_integrator(&plant, 0), plant);
        assert_eq!(augment_integrator(&plant, 1).den, p(&[0.0, 1.0, 1.0]));
    }

    #[test]
    fn trivial_weight_recovery() {
        let one = SquaredPolynomial(p(&[1.0]));
        let f = recover_weights(&SquaredPolynomial(p(&[1.0, 1.0])), &one, &one, 1, 0).unwrap();
        assert_eq!(f.qu.len(), 2);
        assert!((f.qu[0] - 1.0).abs() < 1e-12 && (f.qu[1] - 1.0).abs() < 1e-12);
        assert!(f.qy.is_empty());
    }

    #[test]
    fn weight_recovery_round_trip() {
        let aa = square_poly(&p(&[2.0, 3.0, 1.0]));
        let bb = square_poly(&p(&[3.0, 1.0]));
        let qu = p(&[0.7, 1.3]);
        let qy = p(&[4.0, 2.5]);
        let pp = SquaredPolynomial(qu.mul(&aa.0).add(&qy.mul(&bb.0)));
        let f = recover_weights(&pp, &aa, &bb, 1, 2).unwrap();
        assert!(max_rel_coeff_error(&f.qu, qu.coeffs()) < 1e-9);
        assert!(max_rel_coeff_error(&f.qy, qy.coeffs()) < 1e-9);
        assert!(f.negative_weights().is_empty());
    }

    #[test]
    fn weight_recovery_errors() {
        let one = SquaredPolynomial(p(&[1.0]));
        let pp = SquaredPolynomial(p(&[1.0, 1.0]));
        assert!(matches!(recover_weights(&pp, &one, &one, 2, 0), Err(ScdmError::DegreeMismatch { .. })));
        // AA and BB identical: columns coincide
        assert!(matches!(recover_weights(&pp, &one, &one, 0, 1), Err(ScdmError::RankDeficient { .. })));
    }

    #[test]
    fn assemble_q_ordering() {
        let f = HoverFormulation { nc: 1, np: 2, mp: 0, qu: vec![1.0, 9.0], qy: vec![2.0, 3.0], residual: 0.0 };
        assert_eq!(assemble_q(&f), DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0])));
        assert_eq!(f.r_weight(), 9.0);
        let zero = HoverFormulation { qy: vec![0.0, 0.0], ..f.clone() };
        assert_eq!(assemble_q(&zero)[(1, 1)], 0.0);
        let neg = HoverFormulation { qu: vec![-1.0, 1.0], ..f };
        assert_eq!(neg.negative_weights(), vec!["qu[0]".to_string()]);
        assert!(neg.to_text().contains("# warning: qu[0] is negative"));
    }

    #[test]
    fn hover_realization_has_augmented_denominator() {
        let den = p(&[2.0, 3.0, 1.0]);
        let ss = hover_state_space(&den, 1).unwrap();
        assert_eq!(ss.state_labels, vec!["u^0", "z^1", "z^0"]);
        let poles = ss.poles().unwrap();
        let cp = Polynomial::from_roots(&poles, 1.0).unwrap();
        assert!(max_rel_coeff_error(cp.coeffs(), &[0.0, 2.0, 3.0, 1.0]) < 1e-12);
        assert!(matches!(hover_state_space(&p(&[1.0, 2.0]), 1), Err(ScdmError::BadDenominator)));
    }
}
