//! Plain-text number formatting and line parsing shared by every file format.
//!
//! Numbers are written with 12 significant digits in the shortest of fixed or
//! scientific notation (the `%.12g` convention), so repeated runs produce
//! byte-identical files.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextError {
    #[error("line {line}: cannot parse `{token}` as a number")]
    BadNumber { line: usize, token: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("expected {expected}, found {found}")]
    Shape { expected: String, found: String },
}

/// Formats `x` with 12 significant digits, `%.12g` style.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_fraction(&format!("{:.*}", decimals, x))
    } else {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_fraction(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".to_string()
    } else {
        t.to_string()
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
pub fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            None
        } else {
            Some((i + 1, t))
        }
    })
}

/// Parses whitespace- or comma-separated reals.
pub fn parse_reals(line_no: usize, line: &str) -> Result<Vec<f64>, TextError> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| TextError::BadNumber { line: line_no, token: t.to_string() })
        })
        .collect()
}

pub fn join_nums<I: IntoIterator<Item = f64>>(values: I) -> String {
    values.into_iter().map(fmt_num).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(1562.5), "1562.5");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-0.09194694469843), "-0.0919469446984");
        assert_eq!(fmt_num(77073466.2926), "77073466.2926");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(2.5e-7), "2.5e-07");
        assert_eq!(fmt_num(6.02e23), "6.02e+23");
        assert_eq!(fmt_num(-0.0), "0");
    }

    #[test]
    fn parses_comments_and_separators() {
        let text = "# header\n\n 1 2.5,-3\n# tail\n";
        let lines: Vec<_> = data_lines(text).collect();
        assert_eq!(lines.len(), 1);
        assert_eq!(parse_reals(lines[0].0, lines[0].1).unwrap(), vec![1.0, 2.5, -3.0]);
        assert!(parse_reals(1, "1 x").is_err());
        assert!(parse_reals(1, "1 inf").is_err());
    }
}
