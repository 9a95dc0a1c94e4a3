//! Coefficient diagram method design parameters.
//!
//! For a characteristic polynomial `a_0 + a_1 s + ... + a_n s^n`:
//!
//! * stability index `γ_i = a_i² / (a_{i+1} a_{i-1})`, `i = 1..n-1`
//! * equivalent time constant `τ = a_1 / a_0`, and `τ_i = a_{i+1} / a_i`
//! * stability limit `γ*_i = 1/γ_{i+1} + 1/γ_{i-1}` with `γ_0 = γ_n = ∞`
//!
//! Everything here is exact field arithmetic, so the module runs unchanged
//! over `f64` or exact rationals.

use std::fmt::Write as _;

use thiserror::Error;

use crate::poly::Polynomial;
use crate::scalar::{abs, lit, to_f64, Scalar};
use crate::text::fmt_num;

/// Factor in the sufficient stability condition `γ_i > 1.12 γ*_i`.
pub const STABILITY_MARGIN_FACTOR: f64 = 1.12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CdmError {
    #[error("polynomial degree {degree} is below the required {required}")]
    DegreeTooLow { degree: usize, required: usize },
    #[error("a_0 = 0, equivalent time constant undefined")]
    UndefinedTau,
    #[error("zero coefficient leaves stability indices {indices:?} undefined")]
    UndefinedIndices { indices: Vec<usize> },
    #[error("{what} must be positive")]
    NonPositive { what: String },
    #[error("expected {expected} stability indices, got {got}")]
    GammaCount { expected: usize, got: usize },
    #[error("coefficient diagram needs at least one polynomial")]
    EmptyDiagram,
}

/// CDM parameters of one polynomial. Index vectors are 1-based in meaning:
/// `gamma[0]` is `γ_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityProfile<T> {
    pub gamma: Vec<T>,
    pub gamma_star: Vec<T>,
    pub tau: T,
    pub tau_i: Vec<T>,
}

impl<T: Scalar> StabilityProfile<T> {
    /// Structured text with `tau`, `gamma[i]`, `gamma_star[i]` and `tau_i[i]` keys.
    pub fn to_text(&self) -> String {
        let mut out = format!("tau = {}\n", fmt_num(to_f64(&self.tau)));
        for (i, g) in self.gamma.iter().enumerate() {
            let _ = writeln!(out, "gamma[{}] = {}", i + 1, fmt_num(to_f64(g)));
        }
        for (i, g) in self.gamma_star.iter().enumerate() {
            let _ = writeln!(out, "gamma_star[{}] = {}", i + 1, fmt_num(to_f64(g)));
        }
        for (i, t) in self.tau_i.iter().enumerate() {
            let _ = writeln!(out, "tau_i[{}] = {}", i + 1, fmt_num(to_f64(t)));
        }
        out
    }
}

/// `γ_1..γ_{n-1}`, `None` where a neighbouring coefficient is zero.
fn gamma_values<T: Scalar>(p: &Polynomial<T>) -> Vec<Option<T>> {
    let a = p.coeffs();
    let n = p.degree();
    (1..n)
        .map(|i| {
            let den = a[i + 1].clone() * a[i - 1].clone();
            if den.is_zero() {
                None
            } else {
                Some(a[i].clone() * a[i].clone() / den)
            }
        })
        .collect()
}

fn limit_indices<T: Scalar>(gamma: &[T]) -> Vec<T> {
    let m = gamma.len();
    (0..m)
        .map(|k| {
            let mut s = T::zero();
            if k + 1 < m {
                s = s + T::one() / gamma[k + 1].clone();
            }
            if k >= 1 {
                s = s + T::one() / gamma[k - 1].clone();
            }
            s
        })
        .collect()
}

fn defined_gammas<T: Scalar>(p: &Polynomial<T>) -> Result<Vec<T>, CdmError> {
    let raw = gamma_values(p);
    let undefined: Vec<usize> = raw.iter().enumerate().filter(|(_, g)| g.is_none()).map(|(i, _)| i + 1).collect();
    if !undefined.is_empty() {
        return Err(CdmError::UndefinedIndices { indices: undefined });
    }
    Ok(raw.into_iter().map(|g| g.expect("checked")).collect())
}

pub fn stability_indices<T: Scalar>(p: &Polynomial<T>) -> Result<StabilityProfile<T>, CdmError> {
    let n = p.degree();
    if n < 2 {
        return Err(CdmError::DegreeTooLow { degree: n, required: 2 });
    }
    let a = p.coeffs();
    if a[0].is_zero() {
        return Err(CdmError::UndefinedTau);
    }
    let gamma = defined_gammas(p)?;
    let gamma_star = limit_indices(&gamma);
    let tau = a[1].clone() / a[0].clone();
    let tau_i = (1..n).map(|i| a[i + 1].clone() / a[i].clone()).collect();
    Ok(StabilityProfile { gamma, gamma_star, tau, tau_i })
}

/// Default indices `γ_1 = 2.5`, `γ_{i≥2} = 2` for an order-`n` target.
pub fn standard_gammas<T: Scalar>(n: usize) -> Vec<T> {
    (1..n).map(|i| if i == 1 { lit(2.5) } else { lit(2.0) }).collect()
}

/// Target characteristic polynomial from `(τ, γ)` and a free `a_0`:
/// `a_i = a_0 τ^i / (γ_{i-1} γ_{i-2}² ... γ_1^{i-1})`.
pub fn synth_target<T: Scalar>(n: usize, tau: &T, gamma: &[T], a0: &T) -> Result<Polynomial<T>, CdmError> {
    if n < 2 {
        return Err(CdmError::DegreeTooLow { degree: n, required: 2 });
    }
    if gamma.len() != n - 1 {
        return Err(CdmError::GammaCount { expected: n - 1, got: gamma.len() });
    }
    let zero = T::zero();
    if *tau <= zero {
        return Err(CdmError::NonPositive { what: "tau".into() });
    }
    if *a0 <= zero {
        return Err(CdmError::NonPositive { what: "a0".into() });
    }
    if let Some(i) = gamma.iter().position(|g| *g <= zero) {
        return Err(CdmError::NonPositive { what: format!("gamma[{}]", i + 1) });
    }
    // a_{i+1} = a_i τ_i with τ_0 = τ and τ_i = τ_{i-1} / γ_i.
    let mut coeffs = Vec::with_capacity(n + 1);
    coeffs.push(a0.clone());
    let mut step = tau.clone();
    for i in 1..=n {
        let next = coeffs[i - 1].clone() * step.clone();
        coeffs.push(next);
        if i < n {
            step = step / gamma[i - 1].clone();
        }
    }
    Ok(Polynomial::from_trusted(coeffs))
}

/// Outcome of the sufficient stability / instability tests.
///
/// `None` means the test does not apply at this degree.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityVerdict<T> {
    pub sufficiently_stable: Option<bool>,
    pub sufficiently_unstable: Option<bool>,
    /// `(i, γ_i − 1.12 γ*_i)` for `i = 2..n-2`.
    pub margins: Vec<(usize, T)>,
}

pub fn check_stability<T: Scalar>(p: &Polynomial<T>) -> Result<StabilityVerdict<T>, CdmError> {
    let n = p.degree();
    if n < 3 {
        return Ok(StabilityVerdict { sufficiently_stable: None, sufficiently_unstable: None, margins: Vec::new() });
    }
    let gamma = defined_gammas(p)?;
    let gamma_star = limit_indices(&gamma);
    let factor: T = lit(STABILITY_MARGIN_FACTOR);
    // gamma[k] holds γ_{k+1}
    let margins: Vec<(usize, T)> = (2..=n.saturating_sub(2))
        .map(|i| (i, gamma[i - 1].clone() - factor.clone() * gamma_star[i - 1].clone()))
        .collect();
    let sufficiently_stable = if n >= 4 { Some(margins.iter().all(|(_, m)| *m > T::zero())) } else { None };
    let sufficiently_unstable = Some((1..=n - 2).any(|i| gamma[i].clone() * gamma[i - 1].clone() <= T::one()));
    Ok(StabilityVerdict { sufficiently_stable, sufficiently_unstable, margins })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagramPoint<T> {
    pub index: usize,
    pub coefficient: T,
    pub abs_coefficient: T,
    pub sign: i8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagramSeries<T> {
    pub label: String,
    pub points: Vec<DiagramPoint<T>>,
    pub profile: Option<StabilityProfile<T>>,
}

/// Coefficient-diagram data for external log-scale plotting.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagramData<T> {
    pub series: Vec<DiagramSeries<T>>,
}

pub fn coefficient_diagram<T: Scalar>(polys: &[(String, Polynomial<T>)]) -> Result<DiagramData<T>, CdmError> {
    if polys.is_empty() {
        return Err(CdmError::EmptyDiagram);
    }
    let series = polys
        .iter()
        .map(|(label, p)| {
            let points = p
                .coeffs()
                .iter()
                .enumerate()
                .map(|(index, c)| DiagramPoint {
                    index,
                    coefficient: c.clone(),
                    abs_coefficient: abs(c),
                    sign: if c.is_zero() {
                        0
                    } else if *c > T::zero() {
                        1
                    } else {
                        -1
                    },
                })
                .collect();
            DiagramSeries { label: label.clone(), points, profile: stability_indices(p).ok() }
        })
        .collect();
    Ok(DiagramData { series })
}

impl<T: Scalar> DiagramData<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,index,coefficient,abs_coefficient,sign\n");
        for s in &self.series {
            for pt in &s.points {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    s.label,
                    pt.index,
                    fmt_num(to_f64(&pt.coefficient)),
                    fmt_num(to_f64(&pt.abs_coefficient)),
                    pt.sign
                );
            }
        }
        out
    }

    /// Per-series stability profiles as `[label]` sections.
    pub fn profiles_text(&self) -> String {
        let mut out = String::new();
        for s in &self.series {
            let _ = writeln!(out, "[{}]", s.label);
            match &s.profile {
                Some(p) => out.push_str(&p.to_text()),
                None => out.push_str("profile = undefined\n"),
            }
        }
        out
    }
}
