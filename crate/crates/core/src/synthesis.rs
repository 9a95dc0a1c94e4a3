//! Closed-loop polynomial algebra and algebraic gain synthesis.
//!
//! With plant `y_k = N_k/D (u + d)` and controller `A u = F r − Σ B_k y_k`,
//! the closed-loop polynomial is `P = A D + Σ B_k N_k`. A [`GainStructure`]
//! fixes `A = s^nc` and writes each `B_k` as a polynomial of named unknown
//! gains; matching coefficients of `P` against a target gives a linear
//! (Diophantine) system in those gains.

use std::fmt::Write as _;

use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::plant::PlantTF;
use crate::poly::Polynomial;
use crate::scalar::{lit, to_f64, Scalar};
use crate::text::{self, fmt_num, TextError};

/// Systems whose infinity-norm condition estimate exceeds this are refused.
pub const MAX_CONDITION: f64 = 1e14;
/// Required bound on `‖M k − rhs‖∞ / ‖rhs‖∞` after solving.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("controller channel `{0}` is not a plant output")]
    LabelMismatch(String),
    #[error("controller denominator A(s) is identically zero")]
    ZeroDenominator,
    #[error("{unknowns} unknowns but {rows} matched powers")]
    NonSquare { unknowns: usize, rows: usize },
    #[error("unknown `{0}` does not appear in any matched coefficient")]
    StructurallySingular(String),
    #[error("target degree {target} differs from integrator-augmented plant degree {expected}")]
    TargetDegree { target: usize, expected: usize },
    #[error("matched power {0} listed twice")]
    DuplicatePower(usize),
    #[error("gain system is singular or ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },
    #[error("residual {residual:e} exceeds the solve tolerance")]
    Residual { residual: f64 },
    #[error("no value for gain `{0}`")]
    MissingGain(String),
    #[error("reference gain `{0}` is not one of the structure's unknowns")]
    UnknownReference(String),
    #[error("DC-matched reference needs N_{0}(0) != 0")]
    ZeroDcNumerator(String),
    #[error(transparent)]
    Text(#[from] TextError),
}

/// Controller polynomials of the block diagram: `A u = F r − Σ B_k y_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerABF<T> {
    pub a_poly: Polynomial<T>,
    pub b_polys: Vec<(String, Polynomial<T>)>,
    pub f_poly: Polynomial<T>,
}

impl<T: Scalar> ControllerABF<T> {
    pub fn new(
        a_poly: Polynomial<T>,
        b_polys: Vec<(String, Polynomial<T>)>,
        f_poly: Polynomial<T>,
    ) -> Result<Self, SynthesisError> {
        if a_poly.is_zero() {
            return Err(SynthesisError::ZeroDenominator);
        }
        Ok(Self { a_poly, b_polys, f_poly })
    }

    fn check_labels(&self, plant: &PlantTF<T>) -> Result<(), SynthesisError> {
        match self.b_polys.iter().find(|(l, _)| plant.num(l).is_none()) {
            Some((l, _)) => Err(SynthesisError::LabelMismatch(l.clone())),
            None => Ok(()),
        }
    }
}

/// `P(s) = A(s) D(s) + Σ_k B_k(s) N_k(s)`
pub fn close_loop<T: Scalar>(
    controller: &ControllerABF<T>,
    plant: &PlantTF<T>,
) -> Result<Polynomial<T>, SynthesisError> {
    controller.check_labels(plant)?;
    let mut p = controller.a_poly.mul(&plant.den);
    for (label, b) in &controller.b_polys {
        let n = plant.num(label).expect("checked");
        p = p.add(&b.mul(n));
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rational<T> {
    pub num: Polynomial<T>,
    pub den: Polynomial<T>,
}

impl<T: Scalar> Rational<T> {
    /// Value at `s = 0` in `f64`, `None` when the denominator vanishes there.
    pub fn dc_gain(&self) -> Option<f64> {
        let d = to_f64(&self.den.coeff(0));
        (d != 0.0).then(|| to_f64(&self.num.coeff(0)) / d)
    }
}

/// Per-output closed-loop transfer functions.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopTransfers<T> {
    /// `N_k F / P`
    pub y_from_r: Vec<(String, Rational<T>)>,
    /// `A N_k / P`
    pub y_from_d: Vec<(String, Rational<T>)>,
    /// `(output k, noise channel j, −N_k B_j / P)`
    pub y_from_n: Vec<(String, String, Rational<T>)>,
}

pub fn closed_loop_transfers<T: Scalar>(
    controller: &ControllerABF<T>,
    plant: &PlantTF<T>,
) -> Result<ClosedLoopTransfers<T>, SynthesisError> {
    let p = close_loop(controller, plant)?;
    let rat = |num: Polynomial<T>| Rational { num, den: p.clone() };
    let mut out = ClosedLoopTransfers { y_from_r: Vec::new(), y_from_d: Vec::new(), y_from_n: Vec::new() };
    for ch in &plant.channels {
        out.y_from_r.push((ch.label.clone(), rat(ch.num.mul(&controller.f_poly))));
        out.y_from_d.push((ch.label.clone(), rat(controller.a_poly.mul(&ch.num))));
        for (j, b) in &controller.b_polys {
            out.y_from_n.push((ch.label.clone(), j.clone(), rat(-&ch.num.mul(b))));
        }
    }
    Ok(out)
}

/// How the reference numerator `F` is formed from the solved gains.
#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceGain {
    /// `F` equals one of the feedback unknowns.
    Gain(String),
    /// `F = P(0) / N_k(0)`, giving unit DC gain from `r` to output `k`.
    DcMatched(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelGains {
    pub label: String,
    /// Unknown names multiplying `s^0, s^1, ...`.
    pub gains: Vec<String>,
}

/// Controller template: `s^nc u = F r − Σ_k (Σ_j g_kj s^j) y_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct GainStructure {
    pub channels: Vec<ChannelGains>,
    pub integrator_order: usize,
    pub reference: ReferenceGain,
}

impl GainStructure {
    /// Unknown names in order of first appearance.
    pub fn unknowns(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.channels {
            for g in &c.gains {
                if !out.contains(g) {
                    out.push(g.clone());
                }
            }
        }
        out
    }

    /// Structure-file text: `integrator = nc`, `channel.<label> = g0 g1 ...`,
    /// `reference = <gain>` or `reference = dc:<label>`.
    pub fn to_text(&self) -> String {
        let mut out = format!("integrator = {}\n", self.integrator_order);
        for c in &self.channels {
            let _ = writeln!(out, "channel.{} = {}", c.label, c.gains.join(" "));
        }
        match &self.reference {
            ReferenceGain::Gain(g) => {
                let _ = writeln!(out, "reference = {g}");
            }
            ReferenceGain::DcMatched(l) => {
                let _ = writeln!(out, "reference = dc:{l}");
            }
        }
        out
    }

    pub fn parse(input: &str) -> Result<Self, SynthesisError> {
        let mut integrator = 0usize;
        let mut channels = Vec::new();
        let mut reference = None;
        for (no, line) in text::data_lines(input) {
            let bad = |message: String| SynthesisError::Text(TextError::Malformed { line: no, message });
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "integrator" {
                integrator = value.parse().map_err(|_| bad(format!("bad integrator order `{value}`")))?;
            } else if key == "reference" {
                reference = Some(match value.strip_prefix("dc:") {
                    Some(l) => ReferenceGain::DcMatched(l.trim().to_string()),
                    None => ReferenceGain::Gain(value.to_string()),
                });
            } else if let Some(label) = key.strip_prefix("channel.") {
                let gains: Vec<String> = value.split_whitespace().map(str::to_string).collect();
                if gains.is_empty() {
                    return Err(bad(format!("channel `{label}` lists no gains")));
                }
                channels.push(ChannelGains { label: label.to_string(), gains });
            } else {
                return Err(bad(format!("unknown key `{key}`")));
            }
        }
        let reference = reference.ok_or_else(|| {
            SynthesisError::Text(TextError::Shape { expected: "a `reference = ...` line".into(), found: "none".into() })
        })?;
        let s = GainStructure { channels, integrator_order: integrator, reference };
        if let ReferenceGain::Gain(g) = &s.reference {
            if !s.unknowns().contains(g) {
                return Err(SynthesisError::UnknownReference(g.clone()));
            }
        }
        Ok(s)
    }

    /// The controller template of the speed-control design:
    /// `s δ_lon = k0 u_r − [(k0 + k1 s) u + (k2 + k3 s) θ + k4 w]`.
    pub fn speed_pid() -> Self {
        let ch = |label: &str, gains: &[&str]| ChannelGains {
            label: label.to_string(),
            gains: gains.iter().map(|g| g.to_string()).collect(),
        };
        GainStructure {
            channels: vec![ch("u", &["k0", "k1"]), ch("theta", &["k2", "k3"]), ch("w", &["k4"])],
            integrator_order: 1,
            reference: ReferenceGain::Gain("k0".into()),
        }
    }
}

/// Square coefficient-matching system `M k = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct GainSystem<T> {
    pub matrix: Vec<Vec<T>>,
    pub rhs: Vec<T>,
    pub unknowns: Vec<String>,
    /// Power of `s` asserted by each row.
    pub powers: Vec<usize>,
}

impl<T: Scalar> GainSystem<T> {
    /// One row per line: `s^j: c1*k1 + ... = rhs`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (r, row) in self.matrix.iter().enumerate() {
            let terms: Vec<String> = row
                .iter()
                .zip(&self.unknowns)
                .filter(|(c, _)| !c.is_zero())
                .map(|(c, n)| format!("{}*{}", fmt_num(to_f64(c)), n))
                .collect();
            let _ = writeln!(out, "s^{}: {} = {}", self.powers[r], terms.join(" + "), fmt_num(to_f64(&self.rhs[r])));
        }
        out
    }
}

pub fn build_gain_system<T: Scalar>(
    structure: &GainStructure,
    plant: &PlantTF<T>,
    target: &Polynomial<T>,
    matched_powers: &[usize],
) -> Result<GainSystem<T>, SynthesisError> {
    let unknowns = structure.unknowns();
    if unknowns.len() != matched_powers.len() {
        return Err(SynthesisError::NonSquare { unknowns: unknowns.len(), rows: matched_powers.len() });
    }
    for (i, p) in matched_powers.iter().enumerate() {
        if matched_powers[..i].contains(p) {
            return Err(SynthesisError::DuplicatePower(*p));
        }
    }
    for c in &structure.channels {
        if plant.num(&c.label).is_none() {
            return Err(SynthesisError::LabelMismatch(c.label.clone()));
        }
    }
    let expected = structure.integrator_order + plant.den.degree();
    if target.degree() != expected {
        return Err(SynthesisError::TargetDegree { target: target.degree(), expected });
    }
    let open = plant.den.shift(structure.integrator_order);
    // column polynomial for each unknown: Σ s^j N_k over its occurrences
    let columns: Vec<Polynomial<T>> = unknowns
        .iter()
        .map(|name| {
            let mut col = Polynomial::zero();
            for c in &structure.channels {
                let n = plant.num(&c.label).expect("checked");
                for (j, g) in c.gains.iter().enumerate() {
                    if g == name {
                        col = col.add(&n.shift(j));
                    }
                }
            }
            col
        })
        .collect();
    let matrix: Vec<Vec<T>> = matched_powers.iter().map(|&j| columns.iter().map(|c| c.coeff(j)).collect()).collect();
    for (k, name) in unknowns.iter().enumerate() {
        if matrix.iter().all(|row| row[k].is_zero()) {
            return Err(SynthesisError::StructurallySingular(name.clone()));
        }
    }
    let rhs = matched_powers.iter().map(|&j| target.coeff(j) - open.coeff(j)).collect();
    Ok(GainSystem { matrix, rhs, unknowns, powers: matched_powers.to_vec() })
}

/// Solved gains with solve diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct GainSolution<T> {
    pub values: Vec<(String, T)>,
    /// `‖M k − rhs‖∞`
    pub residual: f64,
    pub condition: f64,
}

impl<T: Scalar> GainSolution<T> {
    pub fn get(&self, name: &str) -> Option<&T> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// `name=value` lines.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(n, v)| format!("{n}={}\n", fmt_num(to_f64(v)))).collect()
    }
}

/// Parses `name=value` lines.
pub fn parse_gains<T: Scalar>(input: &str) -> Result<Vec<(String, T)>, SynthesisError> {
    text::data_lines(input)
        .map(|(no, line)| {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TextError::Malformed { line: no, message: "expected `name=value`".into() })?;
            let vals = text::parse_reals(no, v)?;
            if vals.len() != 1 {
                return Err(TextError::Malformed { line: no, message: "expected one value".into() }.into());
            }
            Ok((k.trim().to_string(), lit(vals[0])))
        })
        .collect()
}

pub fn solve_gains<T: Scalar>(system: &GainSystem<T>) -> Result<GainSolution<T>, SynthesisError> {
    let condition = match linalg::condition_inf(&system.matrix) {
        Ok(c) => c,
        Err(LinalgError::Singular { .. }) => return Err(SynthesisError::IllConditioned { condition: f64::INFINITY }),
        Err(LinalgError::NotSquare { rows, cols }) => return Err(SynthesisError::NonSquare { unknowns: cols, rows }),
        Err(LinalgError::RhsLength { .. }) => unreachable!("no right-hand side in condition estimate"),
    };
    if !(condition <= MAX_CONDITION) {
        return Err(SynthesisError::IllConditioned { condition });
    }
    let k = linalg::solve(&system.matrix, &system.rhs).map_err(|_| SynthesisError::IllConditioned { condition })?;
    let fitted = linalg::mat_vec(&system.matrix, &k);
    let diff: Vec<T> = fitted.into_iter().zip(&system.rhs).map(|(a, b)| a - b.clone()).collect();
    let residual = linalg::vec_norm_inf(&diff);
    if residual > RESIDUAL_TOL * linalg::vec_norm_inf(&system.rhs) {
        return Err(SynthesisError::Residual { residual });
    }
    Ok(GainSolution { values: system.unknowns.iter().cloned().zip(k).collect(), residual, condition })
}

/// Assembles `A = s^nc`, `B_k = Σ g_kj s^j` and `F` from solved gains.
pub fn controller_from_gains<T: Scalar>(
    structure: &GainStructure,
    gains: &[(String, T)],
    plant: &PlantTF<T>,
) -> Result<ControllerABF<T>, SynthesisError> {
    let value = |name: &str| -> Result<T, SynthesisError> {
        gains
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| SynthesisError::MissingGain(name.to_string()))
    };
    let a_poly = Polynomial::monomial(structure.integrator_order, T::one());
    let mut b_polys = Vec::new();
    for c in &structure.channels {
        let coeffs = c.gains.iter().map(|g| value(g)).collect::<Result<Vec<T>, _>>()?;
        b_polys.push((c.label.clone(), Polynomial::from_trusted(coeffs)));
    }
    let mut controller = ControllerABF::new(a_poly, b_polys, Polynomial::zero())?;
    controller.f_poly = match &structure.reference {
        ReferenceGain::Gain(g) => Polynomial::constant(value(g)?),
        ReferenceGain::DcMatched(label) => {
            let p = close_loop(&controller, plant)?;
            let n0 = plant.num(label).ok_or_else(|| SynthesisError::LabelMismatch(label.clone()))?.coeff(0);
            if n0.is_zero() {
                return Err(SynthesisError::ZeroDcNumerator(label.clone()));
            }
            Polynomial::constant(p.coeff(0) / n0)
        }
    };
    Ok(controller)
}
