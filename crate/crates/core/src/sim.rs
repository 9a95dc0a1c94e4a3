//! Linear time-domain simulation, quadratic cost and robustness sweeps.
//!
//! External signals are held constant over each step at their exact average
//! on that step, so rectangles (steps, doublets, impulses) keep their area
//! whatever their alignment to the grid. The state then advances by a
//! classical fourth-order Runge-Kutta step; [`simulate_exact`] advances the
//! same held inputs through the matrix exponential instead.

use std::fmt::Write as _;
use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::plant::{perturb, realize, PlantError, PlantTF};
use crate::poly::{modulus, PolyError};
use crate::scalar::{lit, to_f64, Real};
use crate::statespace::{eigenvalues, StateSpace, StateSpaceError};
use crate::synthesis::{close_loop, ControllerABF, SynthesisError};
use crate::text::fmt_num;

/// Largest allowed `dt·|λ|max`.
pub const STEP_LIMIT: f64 = 0.2;
/// State infinity norm treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("dt = {dt} exceeds {limit} = 0.2/|lambda|max")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("dt and t_end must be positive and finite")]
    BadHorizon,
    #[error("simulation diverged at t = {0}")]
    Diverged(f64),
    #[error("signal width must be positive and start time non-negative")]
    BadSignal,
    #[error("system has no input for {0:?} injection")]
    NoInput(Injection),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("initial state has {got} entries, expected {expected}")]
    InitialState { expected: usize, got: usize },
    #[error("{what} is {rows}x{cols}, expected {expected}x{expected}")]
    Dimension { what: &'static str, rows: usize, cols: usize, expected: usize },
    #[error("controller polynomial degree exceeds deg A(s); controller is improper")]
    ImproperController,
    #[error("algebraic loop through feedthrough terms is singular")]
    IllPosedLoop,
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    StateSpace(#[from] StateSpaceError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalKind {
    Step,
    Doublet,
    Impulse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Injection {
    /// Closed-loop input labeled `r`.
    Reference,
    /// Closed-loop input labeled `d` (added to the plant input).
    InputDisturbance,
}

impl Injection {
    fn input_label(self) -> &'static str {
        match self {
            Injection::Reference => "r",
            Injection::InputDisturbance => "d",
        }
    }
}

/// One external signal. `channel` names the output it is judged on.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalSpec {
    pub kind: SignalKind,
    pub amplitude: f64,
    pub start_time: f64,
    /// Doublet half-width or impulse duration; an impulse defaults to one step.
    pub width: Option<f64>,
    pub channel: String,
    pub injection: Injection,
}

impl SignalSpec {
    pub fn step(channel: &str, amplitude: f64, start_time: f64) -> Self {
        SignalSpec {
            kind: SignalKind::Step,
            amplitude,
            start_time,
            width: None,
            channel: channel.to_string(),
            injection: Injection::Reference,
        }
    }

    pub fn impulse_disturbance(channel: &str, amplitude: f64, start_time: f64) -> Self {
        SignalSpec {
            kind: SignalKind::Impulse,
            amplitude,
            start_time,
            width: None,
            channel: channel.to_string(),
            injection: Injection::InputDisturbance,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let width_ok = self.width.is_none_or(|w| w > 0.0 && w.is_finite());
        if !(self.start_time >= 0.0 && self.amplitude.is_finite() && width_ok) {
            return Err(SimError::BadSignal);
        }
        Ok(())
    }

    /// Integral of the signal over `[t0, t1]`.
    fn integral(&self, t0: f64, t1: f64, dt: f64) -> f64 {
        let overlap = |a: f64, b: f64| (t1.min(b) - t0.max(a)).max(0.0);
        let s = self.start_time;
        match self.kind {
            SignalKind::Step => self.amplitude * overlap(s, f64::INFINITY),
            SignalKind::Doublet => {
                let w = self.width.unwrap_or(dt);
                self.amplitude * (overlap(s, s + w) - overlap(s + w, s + 2.0 * w))
            }
            SignalKind::Impulse => {
                let w = self.width.unwrap_or(dt);
                self.amplitude / w * overlap(s, s + w)
            }
        }
    }
}

/// Performance metrics on one output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceMetrics {
    pub channel: String,
    /// `|y(t_end) − target|`, target = total step amplitude (0 without steps).
    pub steady_state_error: f64,
    /// Peak excursion beyond the target relative to the step amplitude.
    pub overshoot_fraction: f64,
    /// First time after which `|y − target|` stays within 2% of the step
    /// amplitude (or of the peak deviation when there is no step).
    pub settling_time_2pct: Option<f64>,
    pub cost_j: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    pub outputs: Vec<DVector<T>>,
    /// External inputs as held over the step starting at each time.
    pub inputs: Vec<DVector<T>>,
    pub state_labels: Vec<String>,
    pub output_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub metrics: Option<TraceMetrics>,
}

impl<T: Real> SimTrace<T> {
    pub fn output(&self, label: &str) -> Option<Vec<f64>> {
        let i = self.output_labels.iter().position(|l| l == label)?;
        Some(self.outputs.iter().map(|y| to_f64(&y[i])).collect())
    }

    /// Header `time,<states>,<outputs>,<inputs>`, one row per step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time");
        for l in self.state_labels.iter().chain(&self.output_labels).chain(&self.input_labels) {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for k in 0..self.times.len() {
            let row: Vec<String> = std::iter::once(&self.times[k])
                .chain(self.states[k].iter())
                .chain(self.outputs[k].iter())
                .chain(self.inputs[k].iter())
                .map(|v| fmt_num(to_f64(v)))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn metrics_text(&self) -> String {
        let Some(m) = &self.metrics else { return String::new() };
        let mut out = format!("channel = {}\n", m.channel);
        let _ = writeln!(out, "steady_state_error = {}", fmt_num(m.steady_state_error));
        let _ = writeln!(out, "overshoot_fraction = {}", fmt_num(m.overshoot_fraction));
        match m.settling_time_2pct {
            Some(t) => writeln!(out, "settling_time_2pct = {}", fmt_num(t)),
            None => writeln!(out, "settling_time_2pct = none"),
        }
        .expect("writing to a String");
        if let Some(j) = m.cost_j {
            let _ = writeln!(out, "cost_J = {}", fmt_num(j));
        }
        out
    }
}

fn input_index<T: Real>(sys: &StateSpace<T>, injection: Injection) -> Result<usize, SimError> {
    match sys.input_labels.iter().position(|l| l == injection.input_label()) {
        Some(i) => Ok(i),
        None if sys.n_inputs() == 1 => Ok(0),
        None => Err(SimError::NoInput(injection)),
    }
}

/// `|λ|max` of the state matrix.
pub fn spectral_radius<T: Real>(a: &DMatrix<T>) -> Result<f64, PolyError> {
    Ok(eigenvalues(a)?.iter().map(|z| to_f64(&modulus(z))).fold(0.0, f64::max))
}

/// Largest step accepted by [`simulate`] for this system.
pub fn max_step<T: Real>(sys: &StateSpace<T>) -> Result<f64, PolyError> {
    let rho = spectral_radius(&sys.a)?;
    Ok(if rho == 0.0 { f64::INFINITY } else { STEP_LIMIT / rho })
}

struct Plan<T: Real> {
    steps: usize,
    dt: f64,
    held: Vec<DVector<T>>,
}

fn plan<T: Real>(sys: &StateSpace<T>, signals: &[SignalSpec], t_end: f64, dt: f64) -> Result<Plan<T>, SimError> {
    if !(dt > 0.0 && dt.is_finite() && t_end > 0.0 && t_end.is_finite()) {
        return Err(SimError::BadHorizon);
    }
    let limit = max_step(sys)?;
    if dt > limit {
        return Err(SimError::StepTooLarge { dt, limit });
    }
    let mut routes = Vec::with_capacity(signals.len());
    for s in signals {
        s.validate()?;
        if !sys.output_labels.contains(&s.channel) {
            return Err(SimError::UnknownChannel(s.channel.clone()));
        }
        routes.push(input_index(sys, s.injection)?);
    }
    let steps = (t_end / dt).round() as usize;
    let held = (0..=steps)
        .map(|k| {
            let t0 = k as f64 * dt;
            let mut u = DVector::<T>::zeros(sys.n_inputs());
            for (s, &i) in signals.iter().zip(&routes) {
                u[i] += lit::<T>(s.integral(t0, t0 + dt, dt) / dt);
            }
            u
        })
        .collect();
    Ok(Plan { steps, dt, held })
}

fn record<T: Real>(sys: &StateSpace<T>, plan: Plan<T>, states: Vec<DVector<T>>, signals: &[SignalSpec]) -> SimTrace<T> {
    let outputs = states.iter().zip(&plan.held).map(|(x, u)| &sys.c * x + &sys.d * u).collect();
    let mut trace = SimTrace {
        times: (0..=plan.steps).map(|k| lit::<T>(k as f64 * plan.dt)).collect(),
        states,
        outputs,
        inputs: plan.held,
        state_labels: sys.state_labels.clone(),
        output_labels: sys.output_labels.clone(),
        input_labels: sys.input_labels.clone(),
        metrics: None,
    };
    if let Some(first) = signals.first() {
        trace.metrics = compute_metrics(&trace, &first.channel, signals);
    }
    trace
}

fn check_x0<T: Real>(sys: &StateSpace<T>, x0: &DVector<T>) -> Result<(), SimError> {
    if x0.len() != sys.n_states() {
        return Err(SimError::InitialState { expected: sys.n_states(), got: x0.len() });
    }
    Ok(())
}

/// Fixed-step RK4 from the zero state.
pub fn simulate<T: Real>(
    sys: &StateSpace<T>,
    signals: &[SignalSpec],
    t_end: f64,
    dt: f64,
) -> Result<SimTrace<T>, SimError> {
    simulate_from(sys, &DVector::zeros(sys.n_states()), signals, t_end, dt)
}

pub fn simulate_from<T: Real>(
    sys: &StateSpace<T>,
    x0: &DVector<T>,
    signals: &[SignalSpec],
    t_end: f64,
    dt: f64,
) -> Result<SimTrace<T>, SimError> {
    check_x0(sys, x0)?;
    let plan = plan(sys, signals, t_end, dt)?;
    let h: T = lit(plan.dt);
    let half = h * lit(0.5);
    let sixth = h / lit(6.0);
    let two: T = lit(2.0);
    let mut x = x0.clone();
    let mut states = Vec::with_capacity(plan.steps + 1);
    states.push(x.clone());
    for k in 0..plan.steps {
        let bu = &sys.b * &plan.held[k];
        let f = |x: &DVector<T>| &sys.a * x + &bu;
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * half));
        let k3 = f(&(&x + &k2 * half));
        let k4 = f(&(&x + &k3 * h));
        x += (k1 + k2 * two + k3 * two + k4) * sixth;
        if !(to_f64(&x.amax()) <= DIVERGENCE_LIMIT) {
            return Err(SimError::Diverged((k + 1) as f64 * plan.dt));
        }
        states.push(x.clone());
    }
    Ok(record(sys, plan, states, signals))
}

/// Same held inputs advanced through the exact zero-order-hold
/// discretization `x⁺ = e^{A dt} x + Γ u`.
pub fn simulate_exact<T: Real>(
    sys: &StateSpace<T>,
    x0: &DVector<T>,
    signals: &[SignalSpec],
    t_end: f64,
    dt: f64,
) -> Result<SimTrace<T>, SimError> {
    check_x0(sys, x0)?;
    let plan = plan(sys, signals, t_end, dt)?;
    let (n, m) = (sys.n_states(), sys.n_inputs());
    let mut aug = DMatrix::<T>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    aug.view_mut((0, n), (n, m)).copy_from(&sys.b);
    let e = (aug * lit::<T>(plan.dt)).exp();
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma = e.view((0, n), (n, m)).into_owned();
    let mut x = x0.clone();
    let mut states = Vec::with_capacity(plan.steps + 1);
    states.push(x.clone());
    for k in 0..plan.steps {
        x = &phi * &x + &gamma * &plan.held[k];
        if !(to_f64(&x.amax()) <= DIVERGENCE_LIMIT) {
            return Err(SimError::Diverged((k + 1) as f64 * plan.dt));
        }
        states.push(x.clone());
    }
    Ok(record(sys, plan, states, signals))
}

/// Metrics of `channel` given the signals that drove the run.
pub fn compute_metrics<T: Real>(trace: &SimTrace<T>, channel: &str, signals: &[SignalSpec]) -> Option<TraceMetrics> {
    let y = trace.output(channel)?;
    let steps: Vec<&SignalSpec> =
        signals.iter().filter(|s| s.kind == SignalKind::Step && s.injection == Injection::Reference).collect();
    let target: f64 = steps.iter().map(|s| s.amplitude).sum();
    let last = *y.last()?;
    let step_amp = target.abs();
    let overshoot_fraction = if step_amp > 0.0 {
        let beyond = y.iter().map(|v| (v - target) * target.signum()).fold(0.0, f64::max);
        beyond / step_amp
    } else {
        0.0
    };
    let band_base = if step_amp > 0.0 { step_amp } else { y.iter().map(|v| (v - target).abs()).fold(0.0, f64::max) };
    let band = 0.02 * band_base;
    let settling_time_2pct = match y.iter().rposition(|v| (v - target).abs() > band) {
        None => Some(0.0),
        Some(i) if i + 1 < y.len() => Some(to_f64(&trace.times[i + 1])),
        Some(_) => None,
    };
    Some(TraceMetrics {
        channel: channel.to_string(),
        steady_state_error: (last - target).abs(),
        overshoot_fraction,
        settling_time_2pct,
        cost_j: None,
    })
}

/// Trapezoidal `∫ (xᵀQx + uᵀRu) dt` over sampled states and controls.
pub fn quadratic_cost<T: Real>(
    times: &[T],
    states: &[DVector<T>],
    controls: &[DVector<T>],
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<T, SimError> {
    let integrand = |k: usize| -> Result<T, SimError> {
        let x = &states[k];
        let u = &controls[k];
        if q.nrows() != x.len() || q.ncols() != x.len() {
            return Err(SimError::Dimension { what: "Q", rows: q.nrows(), cols: q.ncols(), expected: x.len() });
        }
        if r.nrows() != u.len() || r.ncols() != u.len() {
            return Err(SimError::Dimension { what: "R", rows: r.nrows(), cols: r.ncols(), expected: u.len() });
        }
        Ok(x.dot(&(q * x)) + u.dot(&(r * u)))
    };
    let mut total = T::zero();
    let mut prev = if times.is_empty() { T::zero() } else { integrand(0)? };
    for k in 1..times.len() {
        let cur = integrand(k)?;
        total += (times[k] - times[k - 1]) * (prev + cur) * lit(0.5);
        prev = cur;
    }
    Ok(total)
}

/// `J` with the trace states and its external inputs as `ū`.
pub fn cost_integral<T: Real>(trace: &SimTrace<T>, q: &DMatrix<T>, r: &DMatrix<T>) -> Result<T, SimError> {
    quadratic_cost(&trace.times, &trace.states, &trace.inputs, q, r)
}

/// `(A, B, C, D)`
type Matrices<T> = (DMatrix<T>, DMatrix<T>, DMatrix<T>, DMatrix<T>);

/// Observable canonical realization of `[N_1/A, …, N_k/A]`.
fn miso_realization<T: Real>(
    a_poly: &crate::poly::Polynomial<T>,
    nums: &[crate::poly::Polynomial<T>],
) -> Result<Matrices<T>, SimError> {
    let m = a_poly.degree();
    let lead = *a_poly.leading();
    if nums.iter().any(|n| !n.is_zero() && n.degree() > m) {
        return Err(SimError::ImproperController);
    }
    let alpha = |i: usize| a_poly.coeff(i) / lead;
    let mut a = DMatrix::<T>::zeros(m, m);
    for i in 0..m {
        a[(i, 0)] = -alpha(m - 1 - i);
        if i + 1 < m {
            a[(i, i + 1)] = T::one();
        }
    }
    let mut b = DMatrix::<T>::zeros(m, nums.len());
    let mut d = DMatrix::<T>::zeros(1, nums.len());
    for (j, num) in nums.iter().enumerate() {
        let dj = num.coeff(m) / lead;
        d[(0, j)] = dj;
        for i in 0..m {
            let power = m - 1 - i;
            b[(i, j)] = num.coeff(power) / lead - dj * alpha(power);
        }
    }
    let mut c = DMatrix::<T>::zeros(1, m);
    if m > 0 {
        c[(0, 0)] = T::one();
    }
    Ok((a, b, c, d))
}

/// Closed loop of Fig.-2 form: plant input `u + d`, controller
/// `A u = F r − Σ B_k y_k`. Inputs `[r, d]`; outputs the plant channels
/// followed by the actuator signal.
pub fn closed_loop_state_space<T: Real>(
    controller: &ControllerABF<T>,
    plant: &PlantTF<T>,
) -> Result<StateSpace<T>, SimError> {
    close_loop(controller, plant)?;
    let ps = realize(plant)?;
    let np = ps.n_states();
    let p = ps.n_outputs();
    // controller inputs: r, then y_k in plant channel order
    let mut nums = vec![controller.f_poly.clone()];
    for ch in &plant.channels {
        let b = controller.b_polys.iter().find(|(l, _)| *l == ch.label).map(|(_, b)| -b);
        nums.push(b.unwrap_or_else(crate::poly::Polynomial::zero));
    }
    let (ac, bc, cc, dc) = miso_realization(&controller.a_poly, &nums)?;
    let nc = ac.nrows();
    let dr = dc[(0, 0)];
    let dy = dc.view((0, 1), (1, p)).into_owned();
    let by = bc.view((0, 1), (nc, p)).into_owned();
    let br = bc.column(0).into_owned();
    // u = g (Cc xc + Dy Cp xp + Dr r + Dy Dp d)
    let loop_gain = (&dy * &ps.d)[(0, 0)];
    let denom = T::one() - loop_gain;
    if denom.abs() <= lit(1e-12) {
        return Err(SimError::IllPosedLoop);
    }
    let g = T::one() / denom;
    let n = np + nc;
    // u = ux·x + ur·r + ud·d
    let mut ux = DMatrix::<T>::zeros(1, n);
    ux.view_mut((0, 0), (1, np)).copy_from(&(&dy * &ps.c * g));
    ux.view_mut((0, np), (1, nc)).copy_from(&(&cc * g));
    let ur = dr * g;
    let ud = loop_gain * g;
    let mut a = DMatrix::<T>::zeros(n, n);
    let mut b = DMatrix::<T>::zeros(n, 2);
    let bp = ps.b.column(0).into_owned();
    // plant: ẋp = Ap xp + Bp (u + d)
    a.view_mut((0, 0), (np, np)).copy_from(&ps.a);
    a.view_mut((0, 0), (np, n)).add_assign(&(&bp * &ux));
    b.view_mut((0, 0), (np, 1)).copy_from(&(&bp * ur));
    b.view_mut((0, 1), (np, 1)).copy_from(&(&bp * (ud + T::one())));
    // controller: ẋc = Ac xc + Br r + By (Cp xp + Dp (u + d))
    let dp = ps.d.column(0).into_owned();
    let by_dp = &by * &dp;
    a.view_mut((np, np), (nc, nc)).copy_from(&ac);
    a.view_mut((np, 0), (nc, np)).add_assign(&(&by * &ps.c));
    a.view_mut((np, 0), (nc, n)).add_assign(&(&by_dp * &ux));
    b.view_mut((np, 0), (nc, 1)).copy_from(&(&br + &by_dp * ur));
    b.view_mut((np, 1), (nc, 1)).copy_from(&(&by_dp * (ud + T::one())));
    // outputs: y = Cp xp + Dp (u + d), then u
    let mut c = DMatrix::<T>::zeros(p + 1, n);
    let mut d = DMatrix::<T>::zeros(p + 1, 2);
    c.view_mut((0, 0), (p, np)).copy_from(&ps.c);
    c.view_mut((0, 0), (p, n)).add_assign(&(&dp * &ux));
    d.view_mut((0, 0), (p, 1)).copy_from(&(&dp * ur));
    d.view_mut((0, 1), (p, 1)).copy_from(&(&dp * (ud + T::one())));
    c.view_mut((p, 0), (1, n)).copy_from(&ux);
    d[(p, 0)] = ur;
    d[(p, 1)] = ud;
    let states = ps.state_labels.iter().cloned().chain((0..nc).map(|i| format!("c{i}"))).collect();
    let outputs = plant.labels().into_iter().chain([plant.input_label.clone()]).collect();
    Ok(StateSpace::new(a, b, c, d)?.with_labels(states, vec!["r".into(), "d".into()], outputs)?)
}

/// One perturbed plant of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSample {
    pub index: usize,
    pub seed: u64,
    pub stable: bool,
    pub max_pole_re: f64,
    pub metrics: Option<TraceMetrics>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub samples: Vec<SweepSample>,
}

/// `(min, max)` over the samples that produced a value.
fn envelope(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

impl SweepReport {
    pub fn stable_count(&self) -> usize {
        self.samples.iter().filter(|s| s.stable).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("samples = {}\nstable = {}\n", self.samples.len(), self.stable_count());
        let mut env = |name: &str, values: Vec<f64>| {
            if let Some((lo, hi)) = envelope(values.into_iter()) {
                let _ = writeln!(out, "{name} = {} .. {}", fmt_num(lo), fmt_num(hi));
            }
        };
        env("max_pole_re", self.samples.iter().map(|s| s.max_pole_re).collect());
        let ms: Vec<&TraceMetrics> = self.samples.iter().filter_map(|s| s.metrics.as_ref()).collect();
        env("steady_state_error", ms.iter().map(|m| m.steady_state_error).collect());
        env("overshoot_fraction", ms.iter().map(|m| m.overshoot_fraction).collect());
        env("settling_time_2pct", ms.iter().filter_map(|m| m.settling_time_2pct).collect());
        let failed = self.samples.iter().filter(|s| s.error.is_some()).count();
        let _ = writeln!(out, "errors = {failed}");
        out
    }

    /// Header `index,seed,stable,max_pole_re,steady_state_error,overshoot_fraction,settling_time_2pct,error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "index,seed,stable,max_pole_re,steady_state_error,overshoot_fraction,settling_time_2pct,error\n",
        );
        for s in &self.samples {
            let m = s.metrics.as_ref();
            let num = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.index,
                s.seed,
                s.stable,
                fmt_num(s.max_pole_re),
                num(m.map(|m| m.steady_state_error)),
                num(m.map(|m| m.overshoot_fraction)),
                num(m.and_then(|m| m.settling_time_2pct)),
                s.error.as_deref().unwrap_or("").replace(',', ";"),
            );
        }
        out
    }
}

/// Settings shared by every sample of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub perturbation: Vec<(String, f64)>,
    pub n_samples: usize,
    pub seed: u64,
    pub signals: Vec<SignalSpec>,
    pub t_end: f64,
    pub dt: f64,
}

/// Per-sample seeds drawn sequentially from the master seed, so the
/// report does not depend on evaluation order.
pub fn sample_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

fn evaluate_sample<T: Real>(
    index: usize,
    seed: u64,
    nominal: &PlantTF<T>,
    controller: &ControllerABF<T>,
    cfg: &SweepConfig,
) -> SweepSample {
    let mut sample = SweepSample { index, seed, stable: false, max_pole_re: f64::NAN, metrics: None, error: None };
    let outcome = (|| -> Result<(), SimError> {
        let plant = perturb(nominal, &cfg.perturbation, seed)?;
        let poly = close_loop(controller, &plant)?;
        let poles = poly.roots()?;
        sample.max_pole_re = poles.iter().map(|z| to_f64(&z.re)).fold(f64::NEG_INFINITY, f64::max);
        sample.stable = sample.max_pole_re < 0.0;
        if sample.stable && !cfg.signals.is_empty() {
            let sys = closed_loop_state_space(controller, &plant)?;
            sample.metrics = simulate(&sys, &cfg.signals, cfg.t_end, cfg.dt)?.metrics;
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        sample.error = Some(e.to_string());
    }
    sample
}

/// Evaluates perturbed closed loops in parallel; samples are reported in
/// index order, so the result is identical to a serial run.
pub fn robustness_sweep<T: Real>(
    nominal: &PlantTF<T>,
    controller: &ControllerABF<T>,
    cfg: &SweepConfig,
) -> SweepReport {
    let seeds = sample_seeds(cfg.seed, cfg.n_samples);
    let samples = seeds.par_iter().enumerate().map(|(i, &s)| evaluate_sample(i, s, nominal, controller, cfg)).collect();
    SweepReport { samples }
}
