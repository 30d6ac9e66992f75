//! System files, path files and deterministic report serialization.
//!
//! A system file is TOML:
//!
//! ```toml
//! [system]
//! f  = "y"
//! X1 = ["x + y - 1", "-x + y - 1"]
//! X2 = ["-x^2 + (3/2)*x - 1/2 - mu", "1"]
//!
//! [analysis]            # optional
//! sigma_window = [-5.0, 5.0]
//! mu = 0.25
//! ```
//!
//! The identifier `mu` is replaced textually by a numeric value before the
//! expressions are parsed. Floats in every emitted report use the C
//! `%.12e` layout.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::expr::{self, Expr};
use crate::geometry::Vec2;
use crate::system::{NonSmoothSystem, Tolerances};

/// `v` formatted like C's `%.12e`, e.g. `-2.500000000000e-03`. Negative
/// zero prints as zero.
pub fn sci(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{:.12e}", v + 0.0);
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Io(String),
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: in {key}: {message}")]
    Expression {
        key: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("{key} must have exactly 2 components")]
    Arity { key: String },
    #[error("0 is not a regular value of f: the gradient vanishes at ({}, {}) where f = 0", witness.x + 0.0, witness.y + 0.0)]
    NotRegular { witness: Vec2 },
    #[error("expressions use `mu` but no value was given")]
    MissingMu,
    #[error("{0}")]
    Invalid(String),
}

/// Optional analysis overrides of a system file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    /// Range of the Σ parameter to scan.
    pub sigma_window: [f64; 2],
    pub t_max: f64,
    pub epsilon_list: Vec<f64>,
    pub mu_range: Option<[f64; 2]>,
    /// Value substituted for `mu` when no other value is supplied.
    pub mu: Option<f64>,
    pub tolerances: Tolerances,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            sigma_window: [-5.0, 5.0],
            t_max: 1e3,
            epsilon_list: vec![0.1, 0.05, 0.02, 0.01],
            mu_range: None,
            mu: None,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    system: Option<RawSystem>,
    #[serde(default)]
    analysis: AnalysisSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    f: Option<Spanned<String>>,
    #[serde(rename = "X1")]
    x1: Option<Spanned<Vec<Spanned<String>>>>,
    #[serde(rename = "X2")]
    x2: Option<Spanned<Vec<Spanned<String>>>>,
}

/// Expression source with its byte position in the file.
#[derive(Clone, Debug, PartialEq)]
struct Source {
    text: String,
    offset: usize,
}

/// A parsed and syntax-checked system file, before `mu` is fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemFile {
    file_text: String,
    f: Source,
    x1: [Source; 2],
    x2: [Source; 2],
    pub analysis: AnalysisSettings,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |p| offset - p - 1) + 1;
    (line, column)
}

fn spanned_source(s: Spanned<String>) -> Source {
    // span covers the surrounding quote
    let offset = s.span().start + 1;
    Source {
        text: s.into_inner(),
        offset,
    }
}

fn pair(key: &str, v: Option<Spanned<Vec<Spanned<String>>>>) -> Result<[Source; 2], ConfigError> {
    let v = v.ok_or_else(|| ConfigError::MissingKey(format!("system.{key}")))?;
    let items = v.into_inner();
    if items.len() != 2 {
        return Err(ConfigError::Arity { key: key.into() });
    }
    let mut it = items.into_iter().map(spanned_source);
    Ok([it.next().unwrap(), it.next().unwrap()])
}

/// Parse a system file from text.
pub fn parse_system_file(text: &str) -> Result<SystemFile, ConfigError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        ConfigError::Syntax {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    let system = raw
        .system
        .ok_or_else(|| ConfigError::MissingKey("system".into()))?;
    let f = system.f.map(spanned_source).unwrap_or(Source {
        text: "y".into(),
        offset: 0,
    });
    let x1 = pair("X1", system.x1)?;
    let x2 = pair("X2", system.x2)?;
    let [w0, w1] = raw.analysis.sigma_window;
    if !(w0 < w1) {
        return Err(ConfigError::Invalid(format!(
            "sigma_window [{w0}, {w1}] is empty"
        )));
    }
    let file = SystemFile {
        file_text: text.to_string(),
        f,
        x1,
        x2,
        analysis: raw.analysis,
    };
    // syntax check with a placeholder parameter value
    file.expressions(Some(0.0))?;
    Ok(file)
}

/// Replace the identifier `mu` by a parenthesized literal.
pub fn substitute_mu(text: &str, mu: f64) -> String {
    let mut out = String::with_capacity(text.len());
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let ident = &text[start..i];
            if ident == "mu" {
                out.push_str(&format!("({mu:?})"));
            } else {
                out.push_str(ident);
            }
        } else if c.is_ascii_digit() || c == b'.' {
            // numeric literal, possibly with an exponent
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push_str(&text[start..i]);
        } else {
            let ch = text[i..].chars().next().unwrap();
            out.push(ch);
            i += ch.len_utf8();
        }
    }
    out
}

fn mentions_mu(text: &str) -> bool {
    substitute_mu(text, 0.0) != text
}

impl SystemFile {
    pub fn uses_mu(&self) -> bool {
        self.sources().iter().any(|(_, s)| mentions_mu(&s.text))
    }

    fn sources(&self) -> [(&'static str, &Source); 5] {
        [
            ("system.f", &self.f),
            ("system.X1[0]", &self.x1[0]),
            ("system.X1[1]", &self.x1[1]),
            ("system.X2[0]", &self.x2[0]),
            ("system.X2[1]", &self.x2[1]),
        ]
    }

    /// Parsed `[f, X1_0, X1_1, X2_0, X2_1]` for a parameter value.
    fn expressions(&self, mu: Option<f64>) -> Result<[Expr; 5], ConfigError> {
        let mu = match (self.uses_mu(), mu.or(self.analysis.mu)) {
            (false, _) => 0.0,
            (true, Some(m)) => m,
            (true, None) => return Err(ConfigError::MissingMu),
        };
        let mut out = Vec::with_capacity(5);
        for (key, src) in self.sources() {
            let text = substitute_mu(&src.text, mu);
            let e = expr::parse(&text).map_err(|e| {
                // offsets past a substitution are approximate
                let within = e.offset().unwrap_or(0).min(src.text.len());
                let (line, column) = line_col(&self.file_text, src.offset + within);
                ConfigError::Expression {
                    key: key.into(),
                    line,
                    column,
                    message: e.to_string(),
                }
            })?;
            out.push(e);
        }
        Ok(out.try_into().expect("five expressions"))
    }

    /// Build the system for a value of `mu` (or the file's default) and
    /// check that 0 is a regular value of `f` on the analysis window.
    pub fn instantiate(&self, mu: Option<f64>) -> Result<NonSmoothSystem, ConfigError> {
        let [f, a0, a1, b0, b1] = self.expressions(mu)?;
        check_regular_value(&f, self.analysis.sigma_window)?;
        Ok(NonSmoothSystem::new([a0, a1], [b0, b1], f).with_tolerances(self.analysis.tolerances))
    }

    /// Re-emit the file with the expressions as written.
    pub fn to_toml(&self) -> String {
        system_toml(
            &self.f.text,
            [&self.x1[0].text, &self.x1[1].text],
            [&self.x2[0].text, &self.x2[1].text],
        )
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn system_toml(f: &str, x1: [&str; 2], x2: [&str; 2]) -> String {
    format!(
        "[system]\nf = {}\nX1 = [{}, {}]\nX2 = [{}, {}]\n",
        toml_string(f),
        toml_string(x1[0]),
        toml_string(x1[1]),
        toml_string(x2[0]),
        toml_string(x2[1]),
    )
}

/// System file text for an in-memory system, expressions printed in full.
pub fn emit_system(sys: &NonSmoothSystem) -> String {
    let p = |e: &Expr| e.to_string();
    let (a, b) = (sys.x1(), sys.x2());
    system_toml(&p(sys.f()), [&p(&a[0]), &p(&a[1])], [&p(&b[0]), &p(&b[1])])
}

/// Reject `f` whose gradient vanishes on `{f = 0}` inside the square
/// spanned by the window. Newton projections started on a grid converge
/// to such points when they exist.
pub fn check_regular_value(f: &Expr, window: [f64; 2]) -> Result<(), ConfigError> {
    let grad = f.gradient();
    let n = 21;
    let [lo, hi] = window;
    for i in 0..n {
        for j in 0..n {
            let mut q = Vec2::new(
                lo + (hi - lo) * i as f64 / (n - 1) as f64,
                lo + (hi - lo) * j as f64 / (n - 1) as f64,
            );
            let mut ok = true;
            for _ in 0..80 {
                let (Ok(v), Ok(gx), Ok(gy)) = (
                    f.eval(q.x, q.y),
                    grad[0].eval(q.x, q.y),
                    grad[1].eval(q.x, q.y),
                ) else {
                    ok = false;
                    break;
                };
                let g2 = gx * gx + gy * gy;
                if v == 0.0 || g2 == 0.0 || !g2.is_finite() {
                    break;
                }
                q = q - Vec2::new(gx, gy) * (v / g2);
            }
            if !ok || !q.is_finite() {
                continue;
            }
            let (Ok(v), Ok(gx), Ok(gy)) = (
                f.eval(q.x, q.y),
                grad[0].eval(q.x, q.y),
                grad[1].eval(q.x, q.y),
            ) else {
                continue;
            };
            let inside = q.x >= lo && q.x <= hi && q.y >= lo && q.y <= hi;
            if inside && v.abs() <= 1e-12 && gx.hypot(gy) <= 1e-6 {
                let round = |c: f64| if c.abs() < 1e-9 { 0.0 } else { c };
                return Err(ConfigError::NotRegular {
                    witness: Vec2::new(round(q.x), round(q.y)),
                });
            }
        }
    }
    Ok(())
}

/// Read, parse and validate a system file.
pub fn load_system(
    path: &Path,
    mu: Option<f64>,
) -> Result<(NonSmoothSystem, SystemFile), ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    let file = parse_system_file(&text)?;
    let sys = file.instantiate(mu)?;
    Ok((sys, file))
}

// -- path files ----------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct PathFileError {
    pub line: usize,
    pub message: String,
}

/// Parse `x,y` (or whitespace separated) vertices, one per line, `#`
/// comments allowed. At least three vertices are required.
pub fn parse_path_file(text: &str) -> Result<Vec<Vec2>, PathFileError> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| PathFileError {
            line: k + 1,
            message,
        };
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(err(format!(
                "expected two coordinates, found {}",
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64, PathFileError> {
            let v: f64 = s
                .parse()
                .map_err(|_| err(format!("`{s}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(format!("`{s}` is not finite")))
            }
        };
        out.push(Vec2::new(num(fields[0])?, num(fields[1])?));
    }
    if out.len() < 3 {
        return Err(PathFileError {
            line: text.lines().count().max(1),
            message: format!(
                "a closed path needs at least 3 vertices, found {}",
                out.len()
            ),
        });
    }
    Ok(out)
}

// -- reports -------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(sci(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        writer.write_all(sci(value as f64).as_bytes())
    }
}

/// JSON with sorted keys and `%.12e` floats. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(report: &T) -> String {
    let value = serde_json::to_value(report).expect("report serializes to JSON");
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    value.serialize(&mut ser).expect("in-memory write");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// A CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => sci(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

impl std::fmt::Display for CsvTable {
    fn fmt(&self, out: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(out, "{}", self.header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Write a report in the requested format.
pub fn emit_report<T, W>(
    report: &T,
    table: Option<&CsvTable>,
    format: Format,
    sink: &mut W,
) -> io::Result<()>
where
    T: Serialize + ?Sized,
    W: Write + ?Sized,
{
    match (format, table) {
        (Format::Json, _) => writeln!(sink, "{}", to_json(report)),
        (Format::Csv, Some(t)) => write!(sink, "{t}"),
        (Format::Csv, None) => Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "this report has no CSV form",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEC61: &str = r#"
# two-zone example with a fold at (-1, 0)
[system]
f = "y"
X1 = ["x+y-1", "-x+y-1"]
X2 = ["-x^2+(3/2)*x-1/2", "1"]
"#;

    #[test]
    fn sci_layout() {
        assert_eq!(sci(1.0), "1.000000000000e+00");
        assert_eq!(sci(-0.0025), "-2.500000000000e-03");
        assert_eq!(sci(6.02e123), "6.020000000000e+123");
        assert_eq!(sci(0.0), "0.000000000000e+00");
    }

    #[test]
    fn loads_and_defaults() {
        let file = parse_system_file(SEC61).unwrap();
        assert_eq!(file.analysis, AnalysisSettings::default());
        let sys = file.instantiate(None).unwrap();
        assert_eq!(sys.f().to_string(), "y");
    }

    #[test]
    fn arity_and_missing_keys() {
        let bad = SEC61.replace(r#"X1 = ["x+y-1", "-x+y-1"]"#, r#"X1 = ["x", "y", "1"]"#);
        assert_eq!(
            parse_system_file(&bad).unwrap_err().to_string(),
            "X1 must have exactly 2 components"
        );
        let bad = SEC61.replace(r#"X2 = ["-x^2+(3/2)*x-1/2", "1"]"#, "");
        assert_eq!(
            parse_system_file(&bad).unwrap_err(),
            ConfigError::MissingKey("system.X2".into())
        );
    }

    #[test]
    fn expression_errors_carry_position() {
        let bad = SEC61.replace("-x+y-1", "-x+*y-1");
        match parse_system_file(&bad).unwrap_err() {
            ConfigError::Expression {
                key, line, column, ..
            } => {
                assert_eq!(key, "system.X1[1]");
                assert_eq!(line, 5);
                assert_eq!(column, 20);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn singular_switching_function_rejected() {
        let bad = SEC61.replace(r#"f = "y""#, r#"f = "x^2""#);
        match parse_system_file(&bad)
            .unwrap()
            .instantiate(None)
            .unwrap_err()
        {
            ConfigError::NotRegular { witness } => assert_eq!(witness.x, 0.0),
            other => panic!("unexpected {other:?}"),
        }
        let circle = SEC61.replace(r#"f = "y""#, r#"f = "x^2+y^2-1""#);
        assert!(parse_system_file(&circle)
            .unwrap()
            .instantiate(None)
            .is_ok());
    }

    #[test]
    fn mu_substitution() {
        assert_eq!(
            substitute_mu("x - mu + mux + 2e-3*mu", 0.5),
            "x - (0.5) + mux + 2e-3*(0.5)"
        );
        let fam = SEC61.replace("-1/2\"", "-1/2-mu\"");
        let file = parse_system_file(&fam).unwrap();
        assert!(file.uses_mu());
        assert_eq!(file.instantiate(None).unwrap_err(), ConfigError::MissingMu);
        let sys = file.instantiate(Some(0.25)).unwrap();
        assert!((sys.direction_function(1.0).unwrap() + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn path_file() {
        let pts = parse_path_file("# square\n0,0\n1 0\n1,1\n\n0,1 # last\n").unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[1], Vec2::new(1.0, 0.0));
        assert_eq!(parse_path_file("0,0\n1,x\n").unwrap_err().line, 2);
        assert!(parse_path_file("0,0\n1,1\n").is_err());
    }

    #[test]
    fn json_is_sorted_and_deterministic() {
        #[derive(Serialize)]
        struct R {
            zeta: f64,
            alpha: Vec<f64>,
        }
        let r = R {
            zeta: 1.0,
            alpha: vec![-0.5],
        };
        let a = to_json(&r);
        assert_eq!(
            a,
            r#"{"alpha":[-5.000000000000e-01],"zeta":1.000000000000e+00}"#
        );
        assert_eq!(a, to_json(&r));
    }
}
