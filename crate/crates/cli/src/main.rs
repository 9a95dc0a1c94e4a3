//! `cdm`: coefficient-diagram and squared-polynomial control design from the
//! command line.
//!
//! Exit status is 0 on success, 1 when the computation itself fails (singular
//! gain system, no stable square root, unstable loop, ...) and 2 for usage
//! problems, including unreadable or degenerate input files.

mod io;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cdm_core::cdm::{check_stability, coefficient_diagram, stability_indices, standard_gammas, synth_target};
use cdm_core::lqr::{solve_care, solve_hamiltonian, verify_det_identity};
use cdm_core::plant::{corpus_load, CORPUS_NAMES};
use cdm_core::scdm::{assemble_q, hover_state_space, recover_weights, square_poly, square_root_poly};
use cdm_core::sim::{
    closed_loop_state_space, cost_integral, max_step, robustness_sweep, simulate, simulate_exact, SignalKind,
    SignalSpec, SweepConfig,
};
use cdm_core::statespace::matrix_text;
use cdm_core::synthesis::{build_gain_system, close_loop, controller_from_gains, solve_gains};
use cdm_core::text::{fmt_num, join_nums};
use cdm_core::{Controller, Plant, Polynomial, System};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::io::{emit, emit_dir, usage, Usage};

#[derive(Parser)]
#[command(name = "cdm", version, about = "Coefficient Diagram Method and s-CDM control design toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output file (a directory for `sweep` and `corpus --all`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output flavour; each subcommand picks its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Stability indices, time constants and the sufficient stability tests.
    Indices { file: PathBuf },
    /// Target characteristic polynomial from tau and the stability indices.
    Target {
        #[arg(long)]
        order: usize,
        #[arg(long)]
        tau: f64,
        /// gamma_1..gamma_{n-1}; defaults to 2.5, 2, 2, ...
        #[arg(long, value_delimiter = ',')]
        gamma: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1.0)]
        a0: f64,
    },
    /// Solve controller gains so the closed loop matches a target polynomial.
    Design {
        /// Plant file or `corpus:<name>`.
        #[arg(long)]
        plant: String,
        #[arg(long)]
        structure: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Matched powers of s; defaults to the highest powers below the leading one.
        #[arg(long, value_delimiter = ',')]
        powers: Option<Vec<usize>>,
        /// Also print the coefficient-matching system.
        #[arg(long)]
        show_system: bool,
    },
    /// Squared polynomial P(-s)P(s) in Omega = -s^2.
    Square { file: PathBuf },
    /// Stable square root of a squared polynomial.
    Sqroot { file: PathBuf },
    /// Recover LQ weights from a squared target polynomial.
    LqWeights {
        /// Squared target polynomial file.
        #[arg(long)]
        target: PathBuf,
        /// Plant file or `corpus:<name>`.
        #[arg(long)]
        plant: String,
        /// Output numerator used for B_p; a unit numerator when omitted.
        #[arg(long)]
        channel: Option<String>,
        #[arg(long, default_value_t = 1)]
        nc: usize,
        /// Run the LQ design on the augmented plant with the recovered weights.
        #[arg(long)]
        design: bool,
    },
    /// Riccati solve plus the Hamiltonian determinant identity.
    Lqr {
        /// State-space file (`n m p` header, then A, B, C, D rows).
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        q: PathBuf,
        #[arg(long)]
        r: PathBuf,
        /// Accept an indefinite Q (stable-subspace path).
        #[arg(long)]
        indefinite: bool,
    },
    /// Closed-loop time response.
    Simulate {
        #[command(flatten)]
        lp: LoopArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Quadratic cost weights over states and external inputs.
        #[arg(long, requires = "cost_r")]
        cost_q: Option<PathBuf>,
        #[arg(long, requires = "cost_q")]
        cost_r: Option<PathBuf>,
        /// Advance with the exact zero-order-hold discretization instead of RK4.
        #[arg(long)]
        exact: bool,
    },
    /// Seeded robustness sweep over perturbed plants.
    Sweep {
        #[command(flatten)]
        lp: LoopArgs,
        #[command(flatten)]
        run: RunArgs,
        /// TARGET=FRACTION, e.g. `x_u=0.3` or `den[1]=0.3`.
        #[arg(long = "perturb", required = true)]
        perturb: Vec<String>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Coefficient-diagram data for one or more polynomial files.
    Diagram {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Export bundled plants.
    Corpus {
        name: Option<String>,
        #[arg(long, conflicts_with = "name")]
        all: bool,
    },
}

#[derive(Args)]
struct LoopArgs {
    /// Plant file or `corpus:<name>`.
    #[arg(long, required_unless_present = "system")]
    plant: Option<String>,
    #[arg(long, requires = "plant")]
    structure: Option<PathBuf>,
    #[arg(long, requires = "structure")]
    gains: Option<PathBuf>,
    /// Ready-made state-space file instead of plant + controller.
    #[arg(long, conflicts_with_all = ["plant", "structure", "gains"])]
    system: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Reference step CHANNEL=AMP[@START].
    #[arg(long)]
    step: Vec<String>,
    /// Reference doublet CHANNEL=AMP[@START]/HALF_WIDTH.
    #[arg(long)]
    doublet: Vec<String>,
    /// Input-disturbance impulse CHANNEL=AREA[@START][/WIDTH].
    #[arg(long)]
    impulse: Vec<String>,
    #[arg(long, default_value_t = 20.0)]
    t_end: f64,
    /// Fixed step; defaults to min(0.01, 0.2/|lambda|max).
    #[arg(long)]
    dt: Option<f64>,
}

impl RunArgs {
    fn signals(&self) -> Result<Vec<SignalSpec>> {
        let mut out = Vec::new();
        for (kind, list) in
            [(SignalKind::Step, &self.step), (SignalKind::Doublet, &self.doublet), (SignalKind::Impulse, &self.impulse)]
        {
            for s in list {
                out.push(io::parse_signal(kind, s)?);
            }
        }
        Ok(out)
    }

    fn dt(&self, sys: &System) -> Result<f64> {
        match self.dt {
            Some(dt) => Ok(dt),
            None => Ok(max_step(sys).context("estimating the step limit")?.min(0.01)),
        }
    }
}

fn controller(plant: &Plant, lp: &LoopArgs) -> Result<Controller> {
    let (Some(structure), Some(gains)) = (&lp.structure, &lp.gains) else {
        return Err(usage("a closed loop needs --plant, --structure and --gains"));
    };
    let structure = io::read_structure(structure)?;
    let gains = io::read_gains(gains)?;
    controller_from_gains(&structure, &gains, plant).context("assembling the controller")
}

fn closed_loop(lp: &LoopArgs) -> Result<System> {
    if let Some(path) = &lp.system {
        return io::read_system(path);
    }
    let plant = io::load_plant(lp.plant.as_deref().expect("clap requires plant or system"))?;
    let c = controller(&plant, lp)?;
    closed_loop_state_space(&c, &plant).context("forming the closed loop")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Indices { file } => indices(file, cli.format, out),
        Command::Target { order, tau, gamma, a0 } => {
            let gamma = gamma.clone().unwrap_or_else(|| standard_gammas(*order));
            let p = synth_target(*order, tau, &gamma, a0).context("synthesizing the target")?;
            emit(out, &format!("{}\n", p.to_text_line()))
        }
        Command::Design { plant, structure, target, powers, show_system } => design(
            &io::load_plant(plant)?,
            &io::read_structure(structure)?,
            &io::read_poly(target)?,
            powers.as_deref(),
            *show_system,
            out,
        ),
        Command::Square { file } => emit(out, &format!("{}\n", square_poly(&io::read_poly(file)?).0.to_text_line())),
        Command::Sqroot { file } => {
            let p = square_root_poly(&io::read_squared(file)?).context("factoring the squared polynomial")?;
            emit(out, &format!("{}\n", p.to_text_line()))
        }
        Command::LqWeights { target, plant, channel, nc, design } => {
            lq_weights(&io::read_squared(target)?, &io::load_plant(plant)?, channel.as_deref(), *nc, *design, out)
        }
        Command::Lqr { system, q, r, indefinite } => {
            lqr(&io::read_system(system)?, &io::read_matrix(q)?, &io::read_matrix(r)?, *indefinite, out)
        }
        Command::Simulate { lp, run, cost_q, cost_r, exact } => {
            let sys = closed_loop(lp)?;
            let signals = run.signals()?;
            let dt = run.dt(&sys)?;
            let x0 = nalgebra::DVector::zeros(sys.n_states());
            let mut trace = if *exact {
                simulate_exact(&sys, &x0, &signals, run.t_end, dt)
            } else {
                simulate(&sys, &signals, run.t_end, dt)
            }
            .context("simulating")?;
            if let (Some(q), Some(r)) = (cost_q, cost_r) {
                let j = cost_integral(&trace, &io::read_matrix(q)?, &io::read_matrix(r)?)
                    .context("integrating the cost")?;
                if let Some(m) = trace.metrics.as_mut() {
                    m.cost_j = Some(j);
                }
            }
            match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => emit(out, &trace.to_csv()),
                Format::Text => emit(out, &trace.metrics_text()),
            }
        }
        Command::Sweep { lp, run, perturb, samples } => {
            if lp.system.is_some() {
                return Err(usage("sweep perturbs a plant; give --plant, --structure and --gains"));
            }
            if *samples == 0 {
                return Err(usage("--samples must be at least 1"));
            }
            let plant = io::load_plant(lp.plant.as_deref().expect("clap requires plant or system"))?;
            let c = controller(&plant, lp)?;
            let signals = run.signals()?;
            let dt = match run.dt {
                Some(dt) => dt,
                None if signals.is_empty() => 0.0,
                None => run.dt(&closed_loop_state_space(&c, &plant).context("forming the closed loop")?)?,
            };
            let cfg = SweepConfig {
                perturbation: perturb.iter().map(|p| io::parse_perturbation(p)).collect::<Result<_>>()?,
                n_samples: *samples,
                seed: cli.seed,
                signals,
                t_end: run.t_end,
                dt,
            };
            // surface bad targets before fanning out
            cdm_core::perturb(&plant, &cfg.perturbation, cfg.seed).map_err(|e| usage(e.to_string()))?;
            let report = robustness_sweep(&plant, &c, &cfg);
            match (out, cli.format) {
                (Some(dir), None) => {
                    emit_dir(dir, &[("report.txt".into(), report.to_text()), ("samples.csv".into(), report.to_csv())])
                }
                (_, Some(Format::Csv)) => emit(out, &report.to_csv()),
                (_, _) => emit(out, &report.to_text()),
            }
        }
        Command::Diagram { files } => {
            let mut polys = Vec::new();
            for f in files {
                let label =
                    f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| f.display().to_string());
                polys.push((label, io::read_poly(f)?));
            }
            let d = coefficient_diagram(&polys).context("building the diagram")?;
            match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => emit(out, &d.to_csv()),
                Format::Text => emit(out, &d.profiles_text()),
            }
        }
        Command::Corpus { name, all } => corpus(name.as_deref(), *all, out),
    }
}

fn indices(file: &Path, format: Option<Format>, out: Option<&Path>) -> Result<()> {
    let p = io::read_poly(file)?;
    if p.degree() < 2 {
        return Err(usage(format!("{}: stability indices need a polynomial of degree 2 or more", file.display())));
    }
    let prof = stability_indices(&p).context("computing stability indices")?;
    let verdict = check_stability(&p).context("checking stability")?;
    if format == Some(Format::Csv) {
        let mut s = String::from("index,gamma,gamma_star,tau_i\n");
        for i in 0..prof.gamma.len() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                i + 1,
                fmt_num(prof.gamma[i]),
                fmt_num(prof.gamma_star[i]),
                fmt_num(prof.tau_i[i])
            );
        }
        return emit(out, &s);
    }
    let flag = |v: Option<bool>| v.map_or("n/a".to_string(), |b| b.to_string());
    let mut s = prof.to_text();
    let _ = writeln!(s, "sufficiently_stable = {}", flag(verdict.sufficiently_stable));
    let _ = writeln!(s, "sufficiently_unstable = {}", flag(verdict.sufficiently_unstable));
    for (i, m) in &verdict.margins {
        let _ = writeln!(s, "margin[{i}] = {}", fmt_num(*m));
    }
    emit(out, &s)
}

fn design(
    plant: &Plant,
    structure: &cdm_core::GainStructure,
    target: &Polynomial<f64>,
    powers: Option<&[usize]>,
    show_system: bool,
    out: Option<&Path>,
) -> Result<()> {
    let n = structure.unknowns().len();
    let powers: Vec<usize> = match powers {
        Some(p) => p.to_vec(),
        None => {
            let top = target.degree();
            if n >= top {
                return Err(usage(format!("{n} unknowns cannot be matched below s^{top}; pass --powers")));
            }
            (top - n..top).rev().collect()
        }
    };
    let system = build_gain_system(structure, plant, target, &powers).context("building the gain system")?;
    let sol = solve_gains(&system).context("solving for the gains")?;
    let c = controller_from_gains(structure, &sol.values, plant).context("assembling the controller")?;
    let p = close_loop(&c, plant).context("closing the loop")?;
    let mut s = String::new();
    if show_system {
        for line in system.to_text().lines() {
            let _ = writeln!(s, "# {line}");
        }
    }
    let _ = writeln!(s, "# residual = {}", fmt_num(sol.residual));
    let _ = writeln!(s, "# condition = {}", fmt_num(sol.condition));
    let _ = writeln!(s, "# closed_loop = {}", p.to_text_line());
    let _ = writeln!(s, "# reference = {}", c.f_poly.to_text_line());
    s.push_str(&sol.to_text());
    emit(out, &s)
}

fn lq_weights(
    pp: &cdm_core::SquaredPoly,
    plant: &Plant,
    channel: Option<&str>,
    nc: usize,
    run_design: bool,
    out: Option<&Path>,
) -> Result<()> {
    let num = match channel {
        Some(label) => plant.num(label).cloned().ok_or_else(|| usage(format!("plant has no channel `{label}`")))?,
        None => Polynomial::one(),
    };
    let aa = square_poly(&plant.den);
    let bb = square_poly(&num);
    let np = plant.den.degree();
    if nc + np != pp.degree() {
        return Err(usage(format!("target degree {} does not equal nc + np = {}", pp.degree(), nc + np)));
    }
    let f = recover_weights(pp, &aa, &bb, nc, np).context("recovering the weights")?;
    let q = assemble_q(&f);
    let mut s = f.to_text();
    let _ = writeln!(s, "q_diag = {}", join_nums(q.diagonal().iter().copied()));
    let _ = writeln!(s, "r = {}", fmt_num(f.r_weight()));
    if run_design {
        if channel.is_some() {
            return Err(usage("--design realizes the unit-numerator model; drop --channel"));
        }
        let ss = hover_state_space(&plant.den, nc).context("realizing the augmented plant")?;
        let r = DMatrix::from_element(1, 1, f.r_weight());
        let d = solve_hamiltonian(&ss.a, &ss.b, &q, &r).context("solving the LQ problem")?;
        let p = d.closed_loop_poly().context("forming the closed-loop polynomial")?;
        let _ = writeln!(s, "k = {}", join_nums(d.k.iter().copied()));
        let _ = writeln!(s, "closed_loop = {}", p.to_text_line());
        let _ = writeln!(s, "riccati_residual = {}", fmt_num(d.residual));
    }
    emit(out, &s)
}

fn lqr(sys: &System, q: &DMatrix<f64>, r: &DMatrix<f64>, indefinite: bool, out: Option<&Path>) -> Result<()> {
    let d = if indefinite { solve_hamiltonian(&sys.a, &sys.b, q, r) } else { solve_care(&sys.a, &sys.b, q, r) }
        .context("solving the Riccati equation")?;
    let rep = verify_det_identity(&sys.a, &sys.b, q, r).context("checking the determinant identity")?;
    let mut s = String::from("K\n");
    s.push_str(&matrix_text(&d.k));
    s.push_str("P\n");
    s.push_str(&matrix_text(&d.p_riccati));
    let mut poles = d.closed_loop_poles.clone();
    poles.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    s.push_str("poles\n");
    for z in poles {
        let _ = writeln!(s, "{} {}", fmt_num(z.re), fmt_num(z.im));
    }
    let _ = writeln!(s, "closed_loop = {}", rep.closed_loop.to_text_line());
    let _ = writeln!(s, "pp_from_h = {}", rep.pp_from_h.0.to_text_line());
    let _ = writeln!(s, "riccati_residual = {}", fmt_num(d.residual));
    let _ = writeln!(s, "det_identity_error = {}", fmt_num(rep.max_relative_error));
    emit(out, &s)
}

fn corpus(name: Option<&str>, all: bool, out: Option<&Path>) -> Result<()> {
    let text = |n: &str| -> Result<String> { Ok(corpus_load::<f64>(n).map_err(|e| usage(e.to_string()))?.to_text()) };
    match (name, all) {
        (Some(n), _) => emit(out, &text(n)?),
        (None, true) => match out {
            Some(dir) => {
                let files =
                    CORPUS_NAMES.iter().map(|n| Ok((format!("{n}.plant"), text(n)?))).collect::<Result<Vec<_>>>()?;
                emit_dir(dir, &files)
            }
            None => {
                let mut s = String::new();
                for n in CORPUS_NAMES {
                    let _ = writeln!(s, "# {n}");
                    s.push_str(&text(n)?);
                }
                emit(None, &s)
            }
        },
        (None, false) => {
            if out.is_some() {
                bail!(Usage("name a plant or pass --all".into()));
            }
            emit(None, &CORPUS_NAMES.iter().map(|n| format!("{n}\n")).collect::<String>())
        }
    }
}
