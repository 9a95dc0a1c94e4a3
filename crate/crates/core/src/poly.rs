//! Real-coefficient polynomials in ascending powers of `s`.
//!
//! `coeffs[i]` multiplies `s^i`. Trailing zeros are trimmed exactly (no
//! epsilon), and the zero polynomial is stored as the single coefficient `0`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

use crate::scalar::{is_finite, lit, to_f64, Real, Scalar};
use crate::text::{self, TextError};

/// Imaginary parts below this fraction of the root modulus are treated as zero.
pub const CONJUGATE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("polynomial coefficient {index} is not finite")]
    NonFinite { index: usize },
    #[error("root finding needs degree >= 1 and a nonzero leading coefficient")]
    Degenerate,
    #[error("complex root {re} + {im}i has no conjugate partner")]
    UnpairedRoot { re: f64, im: f64 },
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<T> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Polynomial<T> {
    /// Builds a polynomial from ascending coefficients, trimming trailing zeros.
    pub fn new(coeffs: Vec<T>) -> Result<Self, PolyError> {
        if let Some(index) = coeffs.iter().position(|c| !is_finite(c)) {
            return Err(PolyError::NonFinite { index });
        }
        Ok(Self::from_trusted(coeffs))
    }

    pub(crate) fn from_trusted(mut coeffs: Vec<T>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(T::zero());
        }
        Self { coeffs }
    }

    /// Convenience constructor from `f64` literals.
    pub fn from_f64s(values: &[f64]) -> Result<Self, PolyError> {
        if let Some(index) = values.iter().position(|c| !c.is_finite()) {
            return Err(PolyError::NonFinite { index });
        }
        Ok(Self::from_trusted(values.iter().map(|&v| lit(v)).collect()))
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![T::zero()] }
    }

    pub fn one() -> Self {
        Self::constant(T::one())
    }

    pub fn constant(c: T) -> Self {
        Self::from_trusted(vec![c])
    }

    /// `c * s^power`
    pub fn monomial(power: usize, c: T) -> Self {
        let mut coeffs = vec![T::zero(); power + 1];
        coeffs[power] = c;
        Self::from_trusted(coeffs)
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    /// Coefficient of `s^power`, zero beyond the degree.
    pub fn coeff(&self, power: usize) -> T {
        self.coeffs.get(power).cloned().unwrap_or_else(T::zero)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_zero()
    }

    pub fn leading(&self) -> &T {
        self.coeffs.last().expect("never empty")
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::from_trusted((0..n).map(|i| self.coeff(i) + other.coeff(i)).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::from_trusted((0..n).map(|i| self.coeff(i) - other.coeff(i)).collect())
    }

    /// Coefficient convolution.
    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![T::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Self::from_trusted(out)
    }

    pub fn scale(&self, c: &T) -> Self {
        Self::from_trusted(self.coeffs.iter().map(|a| a.clone() * c.clone()).collect())
    }

    /// Multiplies by `s^k`.
    pub fn shift(&self, k: usize) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        let mut coeffs = vec![T::zero(); k];
        coeffs.extend(self.coeffs.iter().cloned());
        Self::from_trusted(coeffs)
    }

    /// `p(-s)`
    pub fn reflect(&self) -> Self {
        Self::from_trusted(
            self.coeffs.iter().enumerate().map(|(i, a)| if i % 2 == 1 { -a.clone() } else { a.clone() }).collect(),
        )
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::zero();
        }
        Self::from_trusted(
            self.coeffs.iter().enumerate().skip(1).map(|(i, a)| a.clone() * lit::<T>(i as f64)).collect(),
        )
    }

    /// Horner evaluation at a complex point.
    pub fn eval(&self, z: &Complex<T>) -> Complex<T> {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex::new(T::zero(), T::zero()), |acc, a| acc * z.clone() + Complex::new(a.clone(), T::zero()))
    }

    pub fn eval_real(&self, x: &T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, a| acc * x.clone() + a.clone())
    }

    pub fn to_f64(&self) -> Polynomial<f64> {
        Polynomial::from_trusted(self.coeffs.iter().map(to_f64).collect())
    }

    /// Infinity norm of the coefficient vector, in `f64`.
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| to_f64(c).abs()).fold(0.0, f64::max)
    }

    /// One line of ascending coefficients at 12 significant digits.
    pub fn to_text_line(&self) -> String {
        text::join_nums(self.coeffs.iter().map(to_f64))
    }

    /// Parses the polynomial file format: one data line of ascending reals,
    /// `#` comment lines ignored.
    pub fn parse(input: &str) -> Result<Self, PolyError> {
        let mut lines = text::data_lines(input);
        let (no, line) = lines
            .next()
            .ok_or_else(|| TextError::Shape { expected: "one line of coefficients".into(), found: "no data".into() })?;
        if let Some((extra, _)) = lines.next() {
            return Err(
                TextError::Malformed { line: extra, message: "expected a single coefficient line".into() }.into()
            );
        }
        let values = text::parse_reals(no, line)?;
        if values.is_empty() {
            return Err(TextError::Malformed { line: no, message: "no coefficients".into() }.into());
        }
        Self::from_f64s(&values)
    }
}

impl<T: Real> Polynomial<T> {
    /// All complex roots via eigenvalues of the balanced companion matrix,
    /// refined by guarded Newton steps on the original polynomial.
    pub fn roots(&self) -> Result<Vec<Complex<T>>, PolyError> {
        if self.degree() == 0 {
            return Err(PolyError::Degenerate);
        }
        // Exact zero roots are split off before the eigenvalue solve.
        let zeros = self.coeffs.iter().take_while(|c| c.is_zero()).count();
        let reduced = &self.coeffs[zeros..];
        let mut roots = vec![Complex::new(T::zero(), T::zero()); zeros];
        let n = reduced.len() - 1;
        if n == 1 {
            roots.push(Complex::new(-reduced[0] / reduced[1], T::zero()));
        } else if n > 1 {
            let lead = reduced[n];
            let mut companion = DMatrix::<T>::zeros(n, n);
            for i in 1..n {
                companion[(i, i - 1)] = T::one();
            }
            for i in 0..n {
                companion[(i, n - 1)] = -reduced[i] / lead;
            }
            balance(&mut companion);
            let schur = nalgebra::linalg::Schur::try_new(companion, T::default_epsilon(), 100 * n * n)
                .ok_or(PolyError::NoConvergence)?;
            let mut found: Vec<Complex<T>> = schur.complex_eigenvalues().iter().cloned().collect();
            let base = Polynomial::from_trusted(reduced.to_vec());
            polish(&base, &mut found);
            roots.extend(found);
        }
        roots.sort_by(|a, b| {
            a.re.partial_cmp(&b.re)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
        });
        Ok(roots)
    }

    /// Real polynomial `leading * prod (s - r)`. Complex roots must come in
    /// conjugate pairs; residual imaginary parts within tolerance are dropped.
    pub fn from_roots(roots: &[Complex<T>], leading: T) -> Result<Self, PolyError> {
        let tol: T = lit(CONJUGATE_TOL);
        let mut real = Vec::new();
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for r in roots {
            let m = modulus(r);
            if r.im.abs() <= tol * m {
                real.push(r.re);
            } else if r.im > T::zero() {
                upper.push(*r);
            } else {
                lower.push(*r);
            }
        }
        if upper.len() != lower.len() {
            let r = upper.first().or(lower.first()).expect("unbalanced set is non-empty");
            return Err(unpaired(r));
        }
        let mut out = Polynomial::constant(leading);
        for x in real {
            out = out.mul(&Polynomial::from_trusted(vec![-x, T::one()]));
        }
        let mut used = vec![false; lower.len()];
        for z in &upper {
            let zc = z.conj();
            let best = lower
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .map(|(j, w)| (j, modulus(&(*w - zc))))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
            let (j, dist) = best.ok_or_else(|| unpaired(z))?;
            if dist > tol * modulus(z) {
                return Err(unpaired(z));
            }
            used[j] = true;
            let w = lower[j];
            let sum = (*z + w).re;
            let prod = (*z * w).re;
            out = out.mul(&Polynomial::from_trusted(vec![prod, -sum, T::one()]));
        }
        Ok(out)
    }
}

fn unpaired<T: Real>(r: &Complex<T>) -> PolyError {
    PolyError::UnpairedRoot { re: to_f64(&r.re), im: to_f64(&r.im) }
}

pub(crate) fn modulus<T: Real>(z: &Complex<T>) -> T {
    z.re.hypot(z.im)
}

/// Evaluates `p` and `p'` at `z` in one Horner pass.
fn eval_with_derivative<T: Real>(p: &Polynomial<T>, z: Complex<T>) -> (Complex<T>, Complex<T>) {
    let zero = Complex::new(T::zero(), T::zero());
    let mut val = zero;
    let mut der = zero;
    for a in p.coeffs.iter().rev() {
        der = der * z + val;
        val = val * z + Complex::new(*a, T::zero());
    }
    (val, der)
}

fn polish<T: Real>(p: &Polynomial<T>, roots: &mut [Complex<T>]) {
    let snapshot: Vec<Complex<T>> = roots.to_vec();
    let quarter: T = lit(0.25);
    for (k, root) in roots.iter_mut().enumerate() {
        let separation = snapshot
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, w)| modulus(&(*w - snapshot[k])))
            .fold(T::max_value().unwrap_or(T::one() / T::default_epsilon()), |a, b| a.min(b));
        let max_step = separation * quarter;
        let mut z = *root;
        let (mut val, mut der) = eval_with_derivative(p, z);
        for _ in 0..8 {
            if modulus(&der) == T::zero() {
                break;
            }
            let step = val / der;
            if modulus(&step) > max_step {
                break;
            }
            let candidate = z - step;
            let (cv, cd) = eval_with_derivative(p, candidate);
            if modulus(&cv) >= modulus(&val) {
                break;
            }
            z = candidate;
            val = cv;
            der = cd;
        }
        *root = z;
    }
}

/// Parlett-Reinsch balancing by powers of two, in place.
pub(crate) fn balance<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let radix: T = lit(2.0);
    let radix_sq = radix * radix;
    let threshold: T = lit(0.95);
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = T::zero();
            let mut r = T::zero();
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == T::zero() || r == T::zero() {
                continue;
            }
            let sum = c + r;
            let mut g = r / radix;
            let mut f = T::one();
            while c < g {
                f *= radix;
                c *= radix_sq;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= radix_sq;
            }
            if (c + r) / f < threshold * sum {
                converged = false;
                let inv = T::one() / f;
                for j in 0..n {
                    m[(i, j)] *= inv;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

impl<T: Scalar> Add for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn add(self, rhs: Self) -> Polynomial<T> {
        Polynomial::add(self, rhs)
    }
}

impl<T: Scalar> Sub for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn sub(self, rhs: Self) -> Polynomial<T> {
        Polynomial::sub(self, rhs)
    }
}

impl<T: Scalar> Mul for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn mul(self, rhs: Self) -> Polynomial<T> {
        Polynomial::mul(self, rhs)
    }
}

impl<T: Scalar> Neg for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn neg(self) -> Polynomial<T> {
        Polynomial::from_trusted(self.coeffs.iter().map(|a| -a.clone()).collect())
    }
}

impl<T: Scalar> fmt::Display for Polynomial<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text_line())
    }
}

/// Largest relative coefficient mismatch, with each coefficient compared
/// against the larger of the two magnitudes.
pub fn max_rel_coeff_error<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let x = a.get(i).map(to_f64).unwrap_or(0.0);
            let y = b.get(i).map(to_f64).unwrap_or(0.0);
            crate::scalar::rel_diff(x, y)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn p(c: &[f64]) -> Polynomial<f64> {
        Polynomial::from_f64s(c).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn add_examples() {
        assert_eq!(p(&[1.0, 1.0]).add(&p(&[-1.0, 1.0])), p(&[0.0, 2.0]));
        let q = p(&[3.0, 0.0, 2.0]);
        assert_eq!(q.add(&Polynomial::zero()), q);
        assert_eq!(p(&[1.0, 0.0, 1.0]).add(&p(&[0.0, 2.0])), p(&[1.0, 2.0, 1.0]));
    }

    #[test]
    fn cancellation_trims_to_zero() {
        let z = p(&[1.0, 2.0]).sub(&p(&[1.0, 2.0]));
        assert!(z.is_zero());
        assert_eq!(z.coeffs(), &[0.0]);
        assert_eq!(z.degree(), 0);
    }

    #[test]
    fn mul_examples() {
        assert_eq!(p(&[1.0, 1.0]).mul(&p(&[-1.0, 1.0])), p(&[-1.0, 0.0, 1.0]));
        assert_eq!(p(&[1.0, 1.0]).mul(&p(&[1.0, 1.0])), p(&[1.0, 2.0, 1.0]));
        let q = p(&[0.5, -2.0, 7.0]);
        assert_eq!(q.mul(&Polynomial::one()), q);
        assert!(q.mul(&Polynomial::zero()).is_zero());
    }

    #[test]
    fn eval_examples() {
        let v = p(&[1.0, 0.0, 1.0]).eval(&c(0.0, 1.0));
        assert_eq!(v, c(0.0, 0.0));
        assert_eq!(p(&[2.0, 1.0]).eval(&c(3.0, 0.0)), c(5.0, 0.0));
        let long_ver = p(&[0.9581, 11.0203, 41.4357, 321.7496, 31.6547, 1.0]);
        assert_eq!(long_ver.eval(&c(0.0, 0.0)), c(0.9581, 0.0));
    }

    #[test]
    fn roots_of_double_root() {
        let r = p(&[1.0, 2.0, 1.0]).roots().unwrap();
        assert_eq!(r.len(), 2);
        for z in r {
            assert!((z - c(-1.0, 0.0)).norm() < 1e-7, "{z}");
        }
    }

    #[test]
    fn roots_of_unit_circle_pair() {
        let r = p(&[1.0, 0.0, 1.0]).roots().unwrap();
        assert!((r[0] - c(0.0, -1.0)).norm() < 1e-12);
        assert!((r[1] - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn lateral_plant_has_two_unstable_real_roots() {
        // Descending coefficients 1, 50.7, 603.7, 42.5, -17.85, 0.666 change
        // sign twice, so Descartes allows 0 or 2 positive roots; the lone
        // negative a1 makes a local minimum below zero between them.
        let lat = p(&[0.6663, -17.8504, 42.5467, 603.6828, 50.7248, 1.0]);
        assert!(lat.eval_real(&0.0) > 0.0);
        assert!(lat.eval_real(&0.07) < 0.0);
        assert!(lat.eval_real(&1.0) > 0.0);
        let roots = lat.roots().unwrap();
        let unstable: Vec<_> = roots.iter().filter(|z| z.re > 0.0).collect();
        assert_eq!(unstable.len(), 2);
        for z in unstable {
            assert_eq!(z.im, 0.0);
            assert!(lat.eval_real(&z.re).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_roots_are_exact() {
        let r = p(&[0.0, 0.0, 2.0, 1.0]).roots().unwrap();
        assert_eq!(r.iter().filter(|z| z.re == 0.0 && z.im == 0.0).count(), 2);
        assert!(r.iter().any(|z| (z - c(-2.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn degenerate_roots_rejected() {
        assert_eq!(p(&[3.0]).roots(), Err(PolyError::Degenerate));
        assert_eq!(Polynomial::<f64>::zero().roots(), Err(PolyError::Degenerate));
    }

    #[test]
    fn from_roots_examples() {
        assert_eq!(Polynomial::from_roots(&[c(-1.0, 0.0), c(-1.0, 0.0)], 1.0).unwrap(), p(&[1.0, 2.0, 1.0]));
        assert_eq!(Polynomial::from_roots(&[c(0.0, 1.0), c(0.0, -1.0)], 1.0).unwrap(), p(&[1.0, 0.0, 1.0]));
        let err = Polynomial::from_roots(&[c(0.0, 1.0), c(-1.0, 0.0)], 1.0).unwrap_err();
        assert!(matches!(err, PolyError::UnpairedRoot { .. }));
        let err = Polynomial::from_roots(&[c(0.0, 1.0), c(0.0, -1.1)], 1.0).unwrap_err();
        assert!(matches!(err, PolyError::UnpairedRoot { .. }));
    }

    #[test]
    fn residual_imaginary_part_dropped() {
        let q = Polynomial::from_roots(&[c(-2.0, 1e-12)], 3.0).unwrap();
        assert_eq!(q, p(&[6.0, 3.0]));
    }

    #[test]
    fn rejects_non_finite() {
        assert_eq!(Polynomial::<f64>::from_f64s(&[1.0, f64::NAN]), Err(PolyError::NonFinite { index: 1 }));
    }

    #[test]
    fn text_format() {
        let q = Polynomial::<f64>::parse("# Delta\n0.9581 11.0203  41.4357\n").unwrap();
        assert_eq!(q, p(&[0.9581, 11.0203, 41.4357]));
        assert_eq!(q.to_text_line(), "0.9581 11.0203 41.4357");
        assert!(Polynomial::<f64>::parse("# only comments\n").is_err());
        assert!(Polynomial::<f64>::parse("1 2\n3 4\n").is_err());
    }

    #[test]
    fn exact_rational_arithmetic() {
        let a = Polynomial::<BigRational>::from_f64s(&[0.5, 1.0]).unwrap();
        let b = a.mul(&a);
        assert_eq!(b, Polynomial::from_f64s(&[0.25, 1.0, 1.0]).unwrap());
        assert_eq!(b.reflect(), Polynomial::from_f64s(&[0.25, -1.0, 1.0]).unwrap());
    }

    #[test]
    fn single_precision_roots() {
        let q = Polynomial::<f32>::from_f64s(&[2.0, 3.0, 1.0]).unwrap();
        let r = q.roots().unwrap();
        assert!((r[0].re + 2.0).abs() < 1e-5 && (r[1].re + 1.0).abs() < 1e-5);
    }
}
