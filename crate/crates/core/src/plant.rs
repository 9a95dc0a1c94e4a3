//! Single-input plants as a common denominator plus labelled numerators,
//! their controllable-canonical realization, coefficient perturbation, and
//! the bundled X-Cell 60 hover/speed corpus.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::poly::{PolyError, Polynomial};
use crate::scalar::{lit, Real, Scalar};
use crate::statespace::{StateSpace, StateSpaceError};
use crate::text::{self, TextError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("unknown corpus plant `{0}`")]
    UnknownPlant(String),
    #[error("unknown perturbation target `{0}`")]
    UnknownTarget(String),
    #[error("perturbation fraction {fraction} for `{target}` is outside (-1, 1)")]
    BadFraction { target: String, fraction: f64 },
    #[error("`{0}` is the leading denominator coefficient; perturbing it breaks the monic form")]
    LeadingCoefficient(String),
    #[error("channel `{0}` is improper (numerator degree exceeds denominator degree)")]
    NotProper(String),
    #[error("denominator is identically zero")]
    ZeroDenominator,
    #[error("duplicate channel `{0}`")]
    DuplicateChannel(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    StateSpace(#[from] StateSpaceError),
}

/// Location of a single plant coefficient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoefficientRef {
    Den(usize),
    Num(String, usize),
}

impl CoefficientRef {
    /// Parses `den[i]` or `num.<label>[i]`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let open = s.find('[')?;
        let idx: usize = s.strip_suffix(']')?[open + 1..].parse().ok()?;
        let head = &s[..open];
        if head == "den" {
            Some(Self::Den(idx))
        } else {
            head.strip_prefix("num.").filter(|l| !l.is_empty()).map(|l| Self::Num(l.to_string(), idx))
        }
    }

    pub fn render(&self) -> String {
        match self {
            Self::Den(i) => format!("den[{i}]"),
            Self::Num(l, i) => format!("num.{l}[{i}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputChannel<T> {
    pub label: String,
    pub num: Polynomial<T>,
    pub unit: Option<String>,
}

/// `y_k = N_k(s) / D(s) · (u + d)` for every labelled output `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantTF<T> {
    pub den: Polynomial<T>,
    pub channels: Vec<OutputChannel<T>>,
    pub input_label: String,
    /// Named perturbation targets, e.g. stability-derivative labels.
    pub aliases: Vec<(String, CoefficientRef)>,
}

impl<T: Scalar> PlantTF<T> {
    pub fn new(den: Polynomial<T>, input_label: impl Into<String>) -> Result<Self, PlantError> {
        if den.is_zero() {
            return Err(PlantError::ZeroDenominator);
        }
        Ok(Self { den, channels: Vec::new(), input_label: input_label.into(), aliases: Vec::new() })
    }

    pub fn with_channel(
        mut self,
        label: impl Into<String>,
        num: Polynomial<T>,
        unit: Option<&str>,
    ) -> Result<Self, PlantError> {
        let label = label.into();
        if self.channel(&label).is_some() {
            return Err(PlantError::DuplicateChannel(label));
        }
        if num.degree() > self.den.degree() && !num.is_zero() {
            return Err(PlantError::NotProper(label));
        }
        self.channels.push(OutputChannel { label, num, unit: unit.map(str::to_string) });
        Ok(self)
    }

    pub fn with_alias(mut self, name: impl Into<String>, target: CoefficientRef) -> Self {
        self.aliases.push((name.into(), target));
        self
    }

    pub fn channel(&self, label: &str) -> Option<&OutputChannel<T>> {
        self.channels.iter().find(|c| c.label == label)
    }

    pub fn num(&self, label: &str) -> Option<&Polynomial<T>> {
        self.channel(label).map(|c| &c.num)
    }

    pub fn labels(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.label.clone()).collect()
    }

    fn resolve(&self, target: &str) -> Result<CoefficientRef, PlantError> {
        if let Some((_, r)) = self.aliases.iter().find(|(n, _)| n == target) {
            return Ok(r.clone());
        }
        let r = CoefficientRef::parse(target).ok_or_else(|| PlantError::UnknownTarget(target.to_string()))?;
        let ok = match &r {
            CoefficientRef::Den(i) => *i <= self.den.degree(),
            CoefficientRef::Num(l, i) => self.num(l).is_some_and(|n| *i <= n.degree()),
        };
        if ok {
            Ok(r)
        } else {
            Err(PlantError::UnknownTarget(target.to_string()))
        }
    }

    /// Plant file text: `input = ..`, `den = ..`, `num.<label> = ..`,
    /// optional `unit.<label> = ..` and `alias.<name> = den[i]`.
    pub fn to_text(&self) -> String {
        let mut out = format!("input = {}\nden = {}\n", self.input_label, self.den.to_text_line());
        for c in &self.channels {
            let _ = writeln!(out, "num.{} = {}", c.label, c.num.to_text_line());
        }
        for c in &self.channels {
            if let Some(u) = &c.unit {
                let _ = writeln!(out, "unit.{} = {}", c.label, u);
            }
        }
        for (name, r) in &self.aliases {
            let _ = writeln!(out, "alias.{} = {}", name, r.render());
        }
        out
    }

    pub fn parse(input: &str) -> Result<Self, PlantError> {
        let mut den = None;
        let mut input_label = None;
        let mut nums: Vec<(String, Polynomial<T>)> = Vec::new();
        let mut units: Vec<(String, String)> = Vec::new();
        let mut aliases = Vec::new();
        for (no, line) in text::data_lines(input) {
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| TextError::Malformed { line: no, message: "expected `key = value`".into() })?;
            if key == "den" {
                den = Some(Polynomial::from_f64s(&text::parse_reals(no, value)?)?);
            } else if key == "input" {
                input_label = Some(value.to_string());
            } else if let Some(l) = key.strip_prefix("num.") {
                nums.push((l.to_string(), Polynomial::from_f64s(&text::parse_reals(no, value)?)?));
            } else if let Some(l) = key.strip_prefix("unit.") {
                units.push((l.to_string(), value.to_string()));
            } else if let Some(n) = key.strip_prefix("alias.") {
                let r = CoefficientRef::parse(value)
                    .ok_or_else(|| TextError::Malformed { line: no, message: format!("bad alias target `{value}`") })?;
                aliases.push((n.to_string(), r));
            } else {
                return Err(TextError::Malformed { line: no, message: format!("unknown key `{key}`") }.into());
            }
        }
        let den =
            den.ok_or_else(|| TextError::Shape { expected: "a `den = ...` line".into(), found: "none".into() })?;
        let mut plant = PlantTF::new(den, input_label.unwrap_or_else(|| "u".to_string()))?;
        for (l, n) in nums {
            let unit = units.iter().find(|(k, _)| *k == l).map(|(_, u)| u.as_str());
            plant = plant.with_channel(l, n, unit)?;
        }
        for (n, r) in aliases {
            plant = plant.with_alias(n, r);
        }
        Ok(plant)
    }
}

/// Scales each targeted coefficient by `1 + draw·fraction`, `draw ~ U[-1, 1]`,
/// one draw per target in the given order from a ChaCha8 stream seeded by `seed`.
pub fn perturb<T: Scalar>(plant: &PlantTF<T>, spec: &[(String, f64)], seed: u64) -> Result<PlantTF<T>, PlantError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = plant.clone();
    for (target, fraction) in spec {
        if !(*fraction > -1.0 && *fraction < 1.0) {
            return Err(PlantError::BadFraction { target: target.clone(), fraction: *fraction });
        }
        let r = plant.resolve(target)?;
        let draw: f64 = rng.random_range(-1.0..=1.0);
        let factor: T = lit(1.0 + draw * fraction);
        match r {
            CoefficientRef::Den(i) => {
                if i == plant.den.degree() {
                    return Err(PlantError::LeadingCoefficient(target.clone()));
                }
                let mut c = out.den.coeffs().to_vec();
                c[i] = c[i].clone() * factor;
                out.den = Polynomial::new(c)?;
            }
            CoefficientRef::Num(label, i) => {
                let ch = out.channels.iter_mut().find(|c| c.label == label).expect("resolved");
                let mut c = ch.num.coeffs().to_vec();
                c[i] = c[i].clone() * factor;
                ch.num = Polynomial::new(c)?;
            }
        }
    }
    Ok(out)
}

/// Controllable canonical realization with states ordered from the highest
/// derivative of the partial state `z` (with `D(s) z = u`) down to `z` itself.
pub fn realize<T: Real>(plant: &PlantTF<T>) -> Result<StateSpace<T>, PlantError> {
    let den = &plant.den;
    let n = den.degree();
    let lead = *den.leading();
    for ch in &plant.channels {
        if ch.num.degree() > n && !ch.num.is_zero() {
            return Err(PlantError::NotProper(ch.label.clone()));
        }
    }
    let p = plant.channels.len();
    let mut a = DMatrix::<T>::zeros(n, n);
    let mut b = DMatrix::<T>::zeros(n, 1);
    let mut c = DMatrix::<T>::zeros(p, n);
    let mut d = DMatrix::<T>::zeros(p, 1);
    // state k holds z^(n-1-k)
    if n > 0 {
        for k in 0..n {
            a[(0, k)] = -den.coeff(n - 1 - k) / lead;
        }
        for k in 1..n {
            a[(k, k - 1)] = T::one();
        }
        b[(0, 0)] = T::one() / lead;
    }
    for (row, ch) in plant.channels.iter().enumerate() {
        let feedthrough = ch.num.coeff(n) / lead;
        d[(row, 0)] = feedthrough;
        for k in 0..n {
            let power = n - 1 - k;
            c[(row, k)] = ch.num.coeff(power) - feedthrough * den.coeff(power);
        }
    }
    let states = (0..n).rev().map(|k| format!("z{k}")).collect();
    Ok(StateSpace::new(a, b, c, d)?.with_labels(states, vec![plant.input_label.clone()], plant.labels())?)
}

/// Names accepted by [`corpus_load`].
pub const CORPUS_NAMES: [&str; 4] =
    ["longitudinal_speed", "longitudinal_speed_printed", "longitudinal_hover", "lateral_hover"];

fn poly<T: Scalar>(c: &[f64]) -> Polynomial<T> {
    Polynomial::from_f64s(c).expect("finite corpus data")
}

fn derivative_aliases<T: Scalar>(p: PlantTF<T>) -> PlantTF<T> {
    // coefficient-level stand-ins for the x_u, x_a1s and m_q derivatives
    p.with_alias("x_u", CoefficientRef::Den(0))
        .with_alias("x_a1s", CoefficientRef::Den(1))
        .with_alias("m_q", CoefficientRef::Den(2))
}

/// Pitch-cyclic numerators at the precision of the speed-controller gain system.
fn longitudinal_channels<T: Scalar>(den: Polynomial<T>) -> PlantTF<T> {
    PlantTF::new(den, "delta_lon")
        .and_then(|p| p.with_channel("u", poly(&[-12522.15, -131287.6, -8918.95, -840.09, -41.80]), Some("m/s")))
        .and_then(|p| p.with_channel("q", poly(&[0.0, 4.0, 1710.0, 13457.0, 904.0]), Some("rad/s")))
        .and_then(|p| p.with_channel("theta", poly(&[40.846, 1705.16, 13416.5, 901.27]), Some("rad")))
        .and_then(|p| p.with_channel("w", poly(&[0.0, 6.85, 214.61, 14.53, 0.676]), Some("m/s")))
        .map(derivative_aliases)
        .expect("corpus channels are proper")
}

/// Bundled X-Cell 60 plants.
///
/// * `longitudinal_speed`: speed-control model at the digits used to build the
///   gain system (canonical).
/// * `longitudinal_speed_printed`: the same model at the rounded digits of
///   the channel listing.
/// * `longitudinal_hover`, `lateral_hover`: hover characteristic polynomials;
///   the longitudinal one shares the pitch-cyclic numerators.
pub fn corpus_load<T: Scalar>(name: &str) -> Result<PlantTF<T>, PlantError> {
    match name {
        "longitudinal_speed" => Ok(longitudinal_channels(poly(&[0.9583, 11.020, 41.42, 321.74, 31.65, 1.0]))),
        "longitudinal_speed_printed" => PlantTF::new(poly(&[0.9, 11.02, 41.4, 321.7, 31.65, 1.0]), "delta_lon")
            .and_then(|p| p.with_channel("u", poly(&[-12522.0, -131290.0, -8919.0, -840.0, -41.8]), Some("m/s")))
            .and_then(|p| p.with_channel("q", poly(&[0.0, 4.0, 1710.0, 13457.0, 904.0]), Some("rad/s")))
            .and_then(|p| p.with_channel("theta", poly(&[4.0, 1705.0, 13417.0, 901.0]), Some("rad")))
            .and_then(|p| p.with_channel("w", poly(&[6.85, 214.0, 14.5, 0.67]), Some("m/s")))
            .map(derivative_aliases),
        "longitudinal_hover" => Ok(longitudinal_channels(poly(&[0.9581, 11.0203, 41.4357, 321.7496, 31.6547, 1.0]))),
        "lateral_hover" => PlantTF::new(poly(&[0.6663, -17.8504, 42.5467, 603.6828, 50.7248, 1.0]), "delta_lat"),
        other => Err(PlantError::UnknownPlant(other.to_string())),
    }
}
