//! Continuous-time state-space models `ẋ = Ax + Bu`, `y = Cx + Du`.

use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

use crate::poly::PolyError;
use crate::scalar::{lit, to_f64, Real};
use crate::text::{self, fmt_num, TextError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateSpaceError {
    #[error("{matrix} is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Dimension { matrix: &'static str, rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("{matrix} has a non-finite entry")]
    NonFinite { matrix: &'static str },
    #[error("expected {expected} labels for {what}, got {got}")]
    Labels { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub output_labels: Vec<String>,
}

fn check_dims<T: Real>(
    matrix: &'static str,
    m: &DMatrix<T>,
    expected_rows: usize,
    expected_cols: usize,
) -> Result<(), StateSpaceError> {
    if m.nrows() != expected_rows || m.ncols() != expected_cols {
        return Err(StateSpaceError::Dimension {
            matrix,
            rows: m.nrows(),
            cols: m.ncols(),
            expected_rows,
            expected_cols,
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(StateSpaceError::NonFinite { matrix });
    }
    Ok(())
}

fn default_labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

impl<T: Real> StateSpace<T> {
    /// Validates dimensions and finiteness; labels default to `x1..`, `u1..`, `y1..`.
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self, StateSpaceError> {
        let n = a.nrows();
        check_dims("A", &a, n, n)?;
        let m = b.ncols();
        check_dims("B", &b, n, m)?;
        let p = c.nrows();
        check_dims("C", &c, p, n)?;
        check_dims("D", &d, p, m)?;
        Ok(Self {
            a,
            b,
            c,
            d,
            state_labels: default_labels("x", n),
            input_labels: default_labels("u", m),
            output_labels: default_labels("y", p),
        })
    }

    pub fn with_labels(
        mut self,
        states: Vec<String>,
        inputs: Vec<String>,
        outputs: Vec<String>,
    ) -> Result<Self, StateSpaceError> {
        for (what, expected, got) in [
            ("states", self.n_states(), states.len()),
            ("inputs", self.n_inputs(), inputs.len()),
            ("outputs", self.n_outputs(), outputs.len()),
        ] {
            if expected != got {
                return Err(StateSpaceError::Labels { what, expected, got });
            }
        }
        self.state_labels = states;
        self.input_labels = inputs;
        self.output_labels = outputs;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn poles(&self) -> Result<Vec<Complex<T>>, PolyError> {
        eigenvalues(&self.a)
    }

    /// `C (zI − A)^{-1} B + D` at one complex frequency.
    pub fn transfer_at(&self, z: Complex<T>) -> Option<DMatrix<Complex<T>>> {
        let n = self.n_states();
        let to_c = |m: &DMatrix<T>| m.map(|x| Complex::new(x, T::zero()));
        let mut resolvent = -to_c(&self.a);
        for i in 0..n {
            resolvent[(i, i)] += z;
        }
        let solved = resolvent.lu().solve(&to_c(&self.b))?;
        Some(to_c(&self.c) * solved + to_c(&self.d))
    }

    /// Matrix text format: header `n m p`, then the rows of A, B, C and D.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.n_states(), self.n_inputs(), self.n_outputs());
        for m in [&self.a, &self.b, &self.c, &self.d] {
            for r in 0..m.nrows() {
                let _ = writeln!(out, "{}", text::join_nums(m.row(r).iter().map(to_f64)));
            }
        }
        out
    }

    pub fn parse(input: &str) -> Result<Self, StateSpaceError> {
        let mut lines = text::data_lines(input);
        let (hno, header) = lines
            .next()
            .ok_or_else(|| TextError::Shape { expected: "header `n m p`".into(), found: "no data".into() })?;
        let dims = text::parse_reals(hno, header)?;
        if dims.len() != 3 || dims.iter().any(|d| *d < 0.0 || d.fract() != 0.0) {
            return Err(TextError::Malformed {
                line: hno,
                message: "header must be three non-negative integers `n m p`".into(),
            }
            .into());
        }
        let (n, m, p) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
        let mut read = |rows: usize, cols: usize| -> Result<DMatrix<T>, StateSpaceError> {
            let mut mat = DMatrix::<T>::zeros(rows, cols);
            for r in 0..rows {
                let (no, line) = lines.next().ok_or_else(|| TextError::Shape {
                    expected: format!("{rows} rows of {cols} values"),
                    found: "end of input".into(),
                })?;
                let vals = text::parse_reals(no, line)?;
                if vals.len() != cols {
                    return Err(TextError::Malformed {
                        line: no,
                        message: format!("expected {cols} values, got {}", vals.len()),
                    }
                    .into());
                }
                for (c, v) in vals.into_iter().enumerate() {
                    mat[(r, c)] = lit(v);
                }
            }
            Ok(mat)
        };
        let a = read(n, n)?;
        let b = read(n, m)?;
        let c = read(p, n)?;
        let d = read(p, m)?;
        if let Some((no, _)) = lines.next() {
            return Err(TextError::Malformed { line: no, message: "trailing data after D".into() }.into());
        }
        Self::new(a, b, c, d)
    }
}

/// Eigenvalues of a real square matrix: balancing, then the real Schur form.
pub fn eigenvalues<T: Real>(m: &DMatrix<T>) -> Result<Vec<Complex<T>>, PolyError> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let n = m.nrows();
    let mut balanced = m.clone();
    crate::poly::balance(&mut balanced);
    let schur = nalgebra::linalg::Schur::try_new(balanced, T::default_epsilon(), 200 * n * n)
        .ok_or(PolyError::NoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

/// Bare matrix: one row per line, every row the same length.
pub fn parse_matrix<T: Real>(input: &str) -> Result<DMatrix<T>, StateSpaceError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (no, line) in text::data_lines(input) {
        let vals = text::parse_reals(no, line)?;
        if let Some(first) = rows.first() {
            if vals.len() != first.len() {
                return Err(TextError::Malformed {
                    line: no,
                    message: format!("expected {} values, got {}", first.len(), vals.len()),
                }
                .into());
            }
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(TextError::Shape { expected: "at least one matrix row".into(), found: "no data".into() }.into());
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| lit(rows[r][c])))
}

/// Pretty matrix block used by text reports.
pub fn matrix_text<T: Real>(m: &DMatrix<T>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|x| fmt_num(to_f64(x))).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}
