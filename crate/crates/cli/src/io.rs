//! Input loading, argument mini-parsers and output routing.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cdm_core::plant::corpus_load;
use cdm_core::sim::{Injection, SignalKind, SignalSpec};
use cdm_core::synthesis::{parse_gains, GainStructure};
use cdm_core::{Plant, Poly, Polynomial, SquaredPoly, SquaredPolynomial, System};
use nalgebra::DMatrix;

/// Bad invocation or unreadable input; maps to exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn parsed<T, E: fmt::Display>(path: &Path, r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn read_poly(path: &Path) -> Result<Poly> {
    parsed(path, Polynomial::parse(&read(path)?))
}

pub fn read_squared(path: &Path) -> Result<SquaredPoly> {
    read_poly(path).map(SquaredPolynomial)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parsed(path, cdm_core::statespace::parse_matrix(&read(path)?))
}

pub fn read_system(path: &Path) -> Result<System> {
    parsed(path, System::parse(&read(path)?))
}

pub fn read_structure(path: &Path) -> Result<GainStructure> {
    parsed(path, GainStructure::parse(&read(path)?))
}

pub fn read_gains(path: &Path) -> Result<Vec<(String, f64)>> {
    parsed(path, parse_gains(&read(path)?))
}

/// `corpus:<name>` or a plant file path.
pub fn load_plant(source: &str) -> Result<Plant> {
    match source.strip_prefix("corpus:") {
        Some(name) => corpus_load(name).map_err(|e| usage(e.to_string())),
        None => {
            let path = PathBuf::from(source);
            parsed(&path, Plant::parse(&read(&path)?))
        }
    }
}

/// `<channel>=<amplitude>[@<start>][/<width>]`.
pub fn parse_signal(kind: SignalKind, spec: &str) -> Result<SignalSpec> {
    let bad = || usage(format!("bad signal `{spec}`; expected CHANNEL=AMPLITUDE[@START][/WIDTH]"));
    let (channel, rest) = spec.split_once('=').ok_or_else(bad)?;
    let (rest, width) = match rest.split_once('/') {
        Some((r, w)) => (r, Some(w.parse::<f64>().map_err(|_| bad())?)),
        None => (rest, None),
    };
    let (amp, start) = match rest.split_once('@') {
        Some((a, s)) => (a, s.parse::<f64>().map_err(|_| bad())?),
        None => (rest, 0.0),
    };
    let amplitude = amp.parse::<f64>().map_err(|_| bad())?;
    if channel.is_empty() {
        return Err(bad());
    }
    if kind == SignalKind::Doublet && width.is_none() {
        return Err(usage(format!("doublet `{spec}` needs a /WIDTH")));
    }
    let injection = match kind {
        SignalKind::Impulse => Injection::InputDisturbance,
        _ => Injection::Reference,
    };
    Ok(SignalSpec { kind, amplitude, start_time: start, width, channel: channel.to_string(), injection })
}

/// `<target>=<fraction>`.
pub fn parse_perturbation(spec: &str) -> Result<(String, f64)> {
    let (t, f) =
        spec.split_once('=').ok_or_else(|| usage(format!("bad perturbation `{spec}`; expected TARGET=FRACTION")))?;
    let f = f.parse::<f64>().map_err(|_| usage(format!("bad fraction in `{spec}`")))?;
    Ok((t.trim().to_string(), f))
}

/// Writes to `out`, or stdout when absent.
pub fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Writes several named files into the directory `dir`.
pub fn emit_dir(dir: &Path, files: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, content) in files {
        let path = dir.join(name);
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
