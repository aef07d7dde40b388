use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SuiteConfig;
use crate::CliError;

/// How `pass` is decided from `measured`, `expected` and `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `|measured − expected| ≤ tol`.
    Within,
    /// `measured ≥ expected`; `tol` is zero.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    /// The identity being checked, in words.
    pub identity: String,
    pub measured: f64,
    pub expected: f64,
    pub tol: f64,
    pub rule: Rule,
    pub pass: bool,
}

impl Check {
    pub fn within(id: impl Into<String>, identity: impl Into<String>, measured: f64, expected: f64, tol: f64) -> Self {
        let pass = measured.is_finite() && (measured - expected).abs() <= tol;
        Self { id: id.into(), identity: identity.into(), measured, expected, tol, rule: Rule::Within, pass }
    }

    /// `0 ≤ measured ≤ bound` for residuals.
    pub fn at_most(id: impl Into<String>, identity: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::within(id, identity, measured, 0.0, bound)
    }

    pub fn at_least(id: impl Into<String>, identity: impl Into<String>, measured: f64, threshold: f64) -> Self {
        let pass = measured.is_finite() && measured >= threshold;
        Self { id: id.into(), identity: identity.into(), measured, expected: threshold, tol: 0.0, rule: Rule::AtLeast, pass }
    }

    pub fn holds(id: impl Into<String>, identity: impl Into<String>, ok: bool) -> Self {
        Self::within(id, identity, if ok { 1.0 } else { 0.0 }, 1.0, 0.0)
    }

    /// A library error turned into a failing check.
    pub fn error(id: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Self { id: id.into(), identity: format!("error: {err}"), measured: f64::NAN, expected: 0.0, tol: 0.0, rule: Rule::Within, pass: false }
    }
}

/// Sign and orientation choices, recorded so reports are comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub metric: String,
    pub box_product: String,
    pub lambda: String,
    pub j_orientation: String,
    pub wedge: String,
    pub richardson_window: [f64; 2],
}

impl Default for Conventions {
    fn default() -> Self {
        let w = codazzi::fields::RICHARDSON_WINDOW;
        Self {
            metric: "<x, y> = x1 y1 + x2 y2 − x3 y3".into(),
            box_product: "<u ⊠ v, w> = det(u, v, w)".into(),
            lambda: "Λ(t) x = t ⊠ x, tr(Λ(t)Λ(s)) = 2<t, s>, B = ¼ tr".into(),
            j_orientation: "J = Λ(x) on T_x H², rotation by +π/2 in the oriented frame".into(),
            wedge: "<s ∧ s'>(e1, e2) = ½(<s e1, s' e2> − <s e2, s' e1>)".into(),
            richardson_window: [*w.start(), *w.end()],
        }
    }
}

/// Columns of a plot data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub i: usize,
    pub j: usize,
    pub omega_b_cup: f64,
    pub omega_b_trace: f64,
    pub omega_wp: f64,
    pub ratio_cup: Option<f64>,
    pub ratio_trace: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingTables {
    pub spacing: f64,
    pub wedge: Vec<Vec<f64>>,
    pub trace_half: Vec<Vec<f64>>,
    pub cup: Vec<Vec<f64>>,
    pub ratios: Vec<RatioRow>,
}

/// What one suite contributes to a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub checks: Vec<Check>,
    pub profiles: Vec<Profile>,
    pub pairing: Option<PairingTables>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Requested suites joined by `+`; empty when none ran.
    pub suite: String,
    pub version: String,
    pub config: SuiteConfig,
    pub conventions: Conventions,
    pub checks: Vec<Check>,
    pub profiles: Vec<Profile>,
    pub pairing: Option<PairingTables>,
}

impl Report {
    pub fn new(suite: String, config: SuiteConfig) -> Self {
        Self {
            suite,
            version: codazzi::VERSION.to_string(),
            config,
            conventions: Conventions::default(),
            checks: Vec::new(),
            profiles: Vec::new(),
            pairing: None,
        }
    }

    pub fn merge(&mut self, s: Section) {
        self.checks.extend(s.checks);
        self.profiles.extend(s.profiles);
        if s.pairing.is_some() {
            self.pairing = s.pairing;
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Gnuplot,
}

/// 17 significant digits, fixed exponent form.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
    written.push(path);
    Ok(())
}

fn matrix_csv(m: &[Vec<f64>]) -> String {
    m.iter().map(|row| row.iter().map(|v| num(*v)).collect::<Vec<_>>().join(",") + "\n").collect()
}

/// Writes the report in `format` under `dir`, returning the files written.
pub fn emit_report(r: &Report, format: Format, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    match format {
        Format::Json => write(dir.join("report.json"), &(r.to_json()? + "\n"), &mut written)?,
        Format::Csv => {
            let mut s = String::from("id,measured,expected,tol,rule,pass\n");
            for c in &r.checks {
                let rule = match c.rule {
                    Rule::Within => "within",
                    Rule::AtLeast => "at_least",
                };
                let _ = writeln!(s, "{},{},{},{},{rule},{}", c.id, num(c.measured), num(c.expected), num(c.tol), c.pass);
            }
            write(dir.join("checks.csv"), &s, &mut written)?;
            if let Some(p) = &r.pairing {
                write(dir.join("pairing_wedge.csv"), &matrix_csv(&p.wedge), &mut written)?;
                write(dir.join("pairing_trace_half.csv"), &matrix_csv(&p.trace_half), &mut written)?;
                write(dir.join("pairing_cup.csv"), &matrix_csv(&p.cup), &mut written)?;
                let mut s = String::from("i,j,omega_b_cup,omega_b_trace,omega_wp,ratio_cup,ratio_trace\n");
                for row in &p.ratios {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{}",
                        row.i,
                        row.j,
                        num(row.omega_b_cup),
                        num(row.omega_b_trace),
                        num(row.omega_wp),
                        opt(row.ratio_cup),
                        opt(row.ratio_trace)
                    );
                }
                write(dir.join("pairing_ratios.csv"), &s, &mut written)?;
            }
        }
        Format::Gnuplot => {
            for p in &r.profiles {
                let mut s = format!("# {}\n", p.columns.join(" "));
                for row in &p.rows {
                    s += &row.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ");
                    s.push('\n');
                }
                write(dir.join(format!("{}.dat", p.name)), &s, &mut written)?;
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules() {
        assert!(Check::at_most("a", "t", 1e-13, 1e-12).pass);
        assert!(!Check::at_most("a", "t", -1e-11, 1e-12).pass);
        assert!(!Check::at_most("a", "t", f64::NAN, 1.0).pass);
        assert!(Check::within("r", "t", 4.1, 4.0, 0.7).pass);
        assert!(Check::at_least("g", "t", 12.0, 10.0).pass);
        assert!(!Check::at_least("g", "t", 9.0, 10.0).pass);
        assert!(!Check::holds("h", "t", false).pass);
        assert!(!Check::error("e", "boom").pass);
    }

    #[test]
    fn number_format_has_17_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn json_round_trips() {
        let mut r = Report::new("core".into(), SuiteConfig::default());
        r.merge(Section { checks: vec![Check::at_most("x", "t", 0.1 + 0.2, 1.0)], ..Default::default() });
        let back: Report = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn io_errors_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        let r = Report::new(String::new(), SuiteConfig::default());
        match emit_report(&r, Format::Json, &file.join("sub")) {
            Err(CliError::Io { path, .. }) => assert!(path.ends_with("sub")),
            other => panic!("{other:?}"),
        }
    }
}
