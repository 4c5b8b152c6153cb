//! The INI-style chart-spec format and its typed form.
//!
//! Sections are `[chart]` (repeatable), `[metric]`, `[omega]`, `[testform]`,
//! `[quadrature]` and `[run]`. Values are bare text or double-quoted
//! strings; `#` and `;` start comments. Every error carries the file
//! position of the offending text, or the `--set` override it came from.

use finpart::expr::{parse, Expr, C64};
use finpart::forms::{parse_form, ChartSpec, Form, SingularForm};
use finpart::quadrature::QuadratureConfig;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct InputError {
    pub location: String,
    pub message: String,
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for InputError {}

#[derive(Debug, Clone, PartialEq)]
enum Origin {
    File { line: usize, col: usize },
    Override(String),
}

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    origin: Origin,
}

#[derive(Debug, Clone)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

/// A parsed but untyped spec file.
#[derive(Debug, Clone)]
pub struct RawSpec {
    source: String,
    sections: Vec<Section>,
}

const SECTIONS: [&str; 6] = ["chart", "metric", "omega", "testform", "quadrature", "run"];

fn keys_of(section: &str) -> &'static [&'static str] {
    match section {
        "chart" => &["n", "kappa", "m", "radii", "phi", "psi", "numerator", "N", "testform"],
        "metric" => &["phi", "psi"],
        "omega" => &["numerator", "N"],
        "testform" => &["form"],
        "quadrature" => &["radial_nodes", "angular_nodes", "grading", "tolerance", "max_doublings"],
        "run" => &[
            "lambda", "tau", "eps_min", "eps_max", "eps_points", "jmax", "mellin_lambdas", "contour", "tol_gamma", "tol_laurent",
            "tol_residue", "tol_metric", "tol_stokes", "tol_fit", "tol_mellin",
        ],
        _ => &[],
    }
}

fn strip_comment(s: &str) -> &str {
    match s.find(['#', ';']) {
        Some(k) => &s[..k],
        None => s,
    }
}

impl RawSpec {
    pub fn parse(source: &str, text: &str) -> Result<RawSpec, InputError> {
        let at = |line: usize, col: usize, message: String| InputError { location: format!("{source}:{line}:{col}"), message };
        let mut sections: Vec<Section> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let indent = raw.len() - raw.trim_start().len();
            let body = raw.trim_start();
            if body.is_empty() || body.starts_with('#') || body.starts_with(';') {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let Some(close) = rest.find(']') else { return Err(at(line, indent + 1, "unterminated section header".into())) };
                let name = rest[..close].trim();
                if !strip_comment(&rest[close + 1..]).trim().is_empty() {
                    return Err(at(line, indent + close + 3, "unexpected text after section header".into()));
                }
                if !SECTIONS.contains(&name) {
                    return Err(at(line, indent + 2, format!("unknown section [{name}]")));
                }
                if name != "chart" && sections.iter().any(|s| s.name == name) {
                    return Err(at(line, indent + 1, format!("section [{name}] appears twice")));
                }
                sections.push(Section { name: name.to_string(), line, entries: Vec::new() });
                continue;
            }
            let Some(eq) = body.find('=') else { return Err(at(line, indent + 1, "expected `key = value` or `[section]`".into())) };
            let key = body[..eq].trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(at(line, indent + 1, format!("invalid key `{key}`")));
            }
            let Some(section) = sections.last_mut() else { return Err(at(line, indent + 1, format!("key `{key}` outside of any section"))) };
            if !keys_of(&section.name).contains(&key) {
                return Err(at(line, indent + 1, format!("unknown key `{key}` in [{}]", section.name)));
            }
            if section.entries.iter().any(|e| e.key == key) {
                return Err(at(line, indent + 1, format!("key `{key}` repeated in [{}]", section.name)));
            }
            let after = &body[eq + 1..];
            let lead = after.len() - after.trim_start().len();
            let vstart = indent + eq + 1 + lead;
            let v = after.trim_start();
            let (value, col) = if let Some(q) = v.strip_prefix('"') {
                let Some(close) = q.find('"') else { return Err(at(line, vstart + 1, "unterminated string".into())) };
                if !strip_comment(&q[close + 1..]).trim().is_empty() {
                    return Err(at(line, vstart + close + 3, "unexpected text after closing quote".into()));
                }
                (q[..close].to_string(), vstart + 2)
            } else {
                (strip_comment(v).trim_end().to_string(), vstart + 1)
            };
            section.entries.push(Entry { key: key.to_string(), value, origin: Origin::File { line, col } });
        }
        Ok(RawSpec { source: source.to_string(), sections })
    }

    /// Applies `section.key=value`. Chart keys apply to every chart block;
    /// a missing section is created.
    pub fn set(&mut self, assignment: &str) -> Result<(), InputError> {
        let err = |message: String| InputError { location: format!("--set {assignment}"), message };
        let (path, value) = assignment.split_once('=').ok_or_else(|| err("expected section.key=value".into()))?;
        let (name, key) = path.trim().split_once('.').ok_or_else(|| err("expected section.key=value".into()))?;
        if !SECTIONS.contains(&name) {
            return Err(err(format!("unknown section [{name}]")));
        }
        if !keys_of(name).contains(&key) {
            return Err(err(format!("unknown key `{key}` in [{name}]")));
        }
        let value = value.trim();
        let value = value.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(value).to_string();
        if !self.sections.iter().any(|s| s.name == name) {
            if name == "chart" {
                return Err(err("the spec has no [chart] block".into()));
            }
            self.sections.push(Section { name: name.to_string(), line: 0, entries: Vec::new() });
        }
        let origin = Origin::Override(assignment.to_string());
        for s in self.sections.iter_mut().filter(|s| s.name == name) {
            s.entries.retain(|e| e.key != key);
            s.entries.push(Entry { key: key.to_string(), value: value.clone(), origin: origin.clone() });
        }
        Ok(())
    }
}

/// Per-command verification tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub gamma: f64,
    pub laurent: f64,
    pub residue: f64,
    pub metric: f64,
    pub stokes: f64,
    pub fit: f64,
    pub mellin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { gamma: 1e-8, laurent: 1e-6, residue: 1e-5, metric: 1e-6, stokes: 1e-5, fit: 1e-3, mellin: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub lambda: C64,
    pub tau: C64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_points: usize,
    pub jmax: Option<usize>,
    pub mellin_lambdas: Vec<f64>,
    pub contour: bool,
    pub tol: Tolerances,
}

impl RunConfig {
    pub fn grid(&self) -> Vec<f64> {
        finpart::cutoff::geometric_grid(self.eps_max, self.eps_min, self.eps_points)
    }
}

/// One chart term: `ω ∧ ξ` restricted to a chart.
#[derive(Debug, Clone)]
pub struct ChartTerm {
    pub chart: ChartSpec,
    pub omega: SingularForm,
    pub xi: Form,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub charts: Vec<ChartTerm>,
    pub quadrature: QuadratureConfig,
    pub run: RunConfig,
    /// `section.key = value` lines of the effective configuration.
    pub echo: Vec<String>,
}

/// Looks up values section by section, falling back to defaults, and
/// records what it used.
struct Reader<'a> {
    spec: &'a RawSpec,
    echo: Vec<String>,
}

struct Value<'a> {
    text: String,
    origin: Option<&'a Origin>,
    source: &'a str,
    label: String,
}

impl Value<'_> {
    fn error(&self, offset: Option<usize>, message: impl fmt::Display) -> InputError {
        let location = match self.origin {
            Some(Origin::File { line, col }) => format!("{}:{}:{}", self.source, line, col + offset.unwrap_or(0)),
            Some(Origin::Override(a)) => format!("--set {a}"),
            None => format!("{} (default)", self.source),
        };
        InputError { location, message: format!("{}: {message}", self.label) }
    }

    fn expr(&self) -> Result<Expr, InputError> {
        parse(&self.text).map_err(|e| self.error(Some(e.offset()), e))
    }

    fn form(&self, n: usize) -> Result<Form, InputError> {
        let f = parse_form(&self.text, n).map_err(|e| self.error(Some(e.offset()), e))?;
        check_vars(f.terms().map(|(_, c)| c), n).map_err(|m| self.error(None, m))?;
        Ok(f)
    }

    fn number<T: std::str::FromStr>(&self) -> Result<T, InputError> {
        self.text.trim().parse().map_err(|_| self.error(None, format!("cannot read `{}` as a number", self.text)))
    }

    fn list<T: std::str::FromStr>(&self) -> Result<Vec<T>, InputError> {
        if self.text.trim().is_empty() {
            return Ok(Vec::new());
        }
        self.text
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| self.error(None, format!("cannot read `{}` as a number", t.trim()))))
            .collect()
    }

    fn positive(&self) -> Result<f64, InputError> {
        let x: f64 = self.number()?;
        if !(x.is_finite() && x > 0.0) {
            return Err(self.error(None, "must be positive"));
        }
        Ok(x)
    }

    fn tolerance(&self) -> Result<f64, InputError> {
        let x: f64 = self.number()?;
        if x.is_nan() || x < 0.0 {
            return Err(self.error(None, "must be non-negative"));
        }
        Ok(x)
    }

    /// `re, im` or a constant expression such as `-0.25 + 0.5*i`.
    fn complex(&self) -> Result<C64, InputError> {
        if let Some((a, b)) = self.text.split_once(',') {
            let re = a.trim().parse().map_err(|_| self.error(None, format!("cannot read `{}` as a number", a.trim())))?;
            let im = b.trim().parse().map_err(|_| self.error(None, format!("cannot read `{}` as a number", b.trim())))?;
            return Ok(C64::new(re, im));
        }
        self.expr()?.as_const().ok_or_else(|| self.error(None, "expected a constant"))
    }

    fn boolean(&self) -> Result<bool, InputError> {
        match self.text.trim() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(self.error(None, format!("expected true or false, found `{other}`"))),
        }
    }
}

fn check_vars<'e>(exprs: impl Iterator<Item = &'e Expr>, n: usize) -> Result<(), String> {
    for e in exprs {
        if e.var_bound() > n {
            return Err(format!("uses z{} but the chart has n = {n}", e.var_bound()));
        }
    }
    Ok(())
}

impl<'a> Reader<'a> {
    fn get(&mut self, section: &'a Section, fallback: Option<&'a Section>, key: &str, default: Option<&str>, label: String) -> Result<Value<'a>, InputError> {
        let found = section.entries.iter().find(|e| e.key == key).or_else(|| fallback.and_then(|s| s.entries.iter().find(|e| e.key == key)));
        let value = match (found, default) {
            (Some(e), _) => Value { text: e.value.clone(), origin: Some(&e.origin), source: &self.spec.source, label: label.clone() },
            (None, Some(d)) => Value { text: d.to_string(), origin: None, source: &self.spec.source, label: label.clone() },
            (None, None) => {
                let location = if section.line > 0 { format!("{}:{}:1", self.spec.source, section.line) } else { self.spec.source.clone() };
                return Err(InputError { location, message: format!("missing required key `{label}`") });
            }
        };
        self.echo.push(format!("{label} = {}", value.text));
        Ok(value)
    }

    fn section(&self, name: &str) -> Option<&'a Section> {
        self.spec.sections.iter().find(|s| s.name == name)
    }
}

static EMPTY: Section = Section { name: String::new(), line: 0, entries: Vec::new() };

impl Config {
    pub fn from_raw(spec: &RawSpec) -> Result<Config, InputError> {
        let mut r = Reader { spec, echo: Vec::new() };
        let charts_raw: Vec<&Section> = spec.sections.iter().filter(|s| s.name == "chart").collect();
        if charts_raw.is_empty() {
            return Err(InputError { location: spec.source.clone(), message: "no [chart] block".into() });
        }
        let metric = r.section("metric").unwrap_or(&EMPTY);
        let omega = r.section("omega").unwrap_or(&EMPTY);
        let testform = r.section("testform").unwrap_or(&EMPTY);
        let mut charts = Vec::new();
        for (k, sec) in charts_raw.iter().enumerate() {
            let tag = format!("chart.{}", k + 1);
            let n: usize = r.get(sec, None, "n", None, format!("{tag}.n"))?.number()?;
            let mv = r.get(sec, None, "m", None, format!("{tag}.m"))?;
            let m: Vec<u32> = mv.list()?;
            let kappa_default = m.len().to_string();
            let kappa: usize = r.get(sec, None, "kappa", Some(&kappa_default), format!("{tag}.kappa"))?.number()?;
            let radii_v = r.get(sec, None, "radii", Some("1"), format!("{tag}.radii"))?;
            let mut radii: Vec<f64> = radii_v.list()?;
            if radii.len() == 1 {
                radii = vec![radii[0]; n];
            }
            let phi_v = r.get(sec, Some(metric), "phi", Some("0"), format!("{tag}.phi"))?;
            let psi_v = r.get(sec, Some(metric), "psi", Some("0"), format!("{tag}.psi"))?;
            let (phi, psi) = (phi_v.expr()?, psi_v.expr()?);
            let chart = ChartSpec::new(n, kappa, m, phi, psi, radii).map_err(|e| mv.error(None, e))?;
            let num_v = r.get(sec, Some(omega), "numerator", None, format!("{tag}.numerator"))?;
            let numerator = num_v.form(n)?;
            let power: u32 = r.get(sec, Some(omega), "N", None, format!("{tag}.N"))?.number()?;
            let xi_v = match sec.entries.iter().any(|e| e.key == "testform") {
                true => r.get(sec, None, "testform", None, format!("{tag}.testform"))?,
                false => r.get(testform, None, "form", Some("1"), format!("{tag}.testform"))?,
            };
            let xi = xi_v.form(n)?;
            charts.push(ChartTerm { chart, omega: SingularForm::new(numerator, power), xi });
        }
        let q = r.section("quadrature").unwrap_or(&EMPTY);
        let d = QuadratureConfig::default();
        let quadrature = QuadratureConfig {
            radial_nodes: r.get(q, None, "radial_nodes", Some(&d.radial_nodes.to_string()), "quadrature.radial_nodes".into())?.number()?,
            angular_nodes: r.get(q, None, "angular_nodes", Some(&d.angular_nodes.to_string()), "quadrature.angular_nodes".into())?.number()?,
            grading: r.get(q, None, "grading", Some(&d.grading.to_string()), "quadrature.grading".into())?.positive()?,
            tolerance: r.get(q, None, "tolerance", Some(&format!("{:e}", d.tolerance)), "quadrature.tolerance".into())?.positive()?,
            max_doublings: r.get(q, None, "max_doublings", Some(&d.max_doublings.to_string()), "quadrature.max_doublings".into())?.number()?,
        };
        quadrature.validate().map_err(|e| InputError { location: spec.source.clone(), message: format!("[quadrature]: {e}") })?;
        let s = r.section("run").unwrap_or(&EMPTY);
        let t = Tolerances::default();
        let lambda = r.get(s, None, "lambda", Some("1, 0"), "run.lambda".into())?.complex()?;
        let tau = r.get(s, None, "tau", Some("0, 0"), "run.tau".into())?.complex()?;
        let eps_min_v = r.get(s, None, "eps_min", Some("1e-6"), "run.eps_min".into())?;
        let eps_min = eps_min_v.positive()?;
        let eps_max = r.get(s, None, "eps_max", Some("1e-2"), "run.eps_max".into())?.positive()?;
        let eps_points: usize = r.get(s, None, "eps_points", Some("12"), "run.eps_points".into())?.number()?;
        if eps_points == 0 || eps_min > eps_max {
            return Err(eps_min_v.error(None, "need eps_points ≥ 1 and eps_min ≤ eps_max"));
        }
        let jmax_v = r.get(s, None, "jmax", Some("auto"), "run.jmax".into())?;
        let jmax = if jmax_v.text.trim() == "auto" { None } else { Some(jmax_v.number()?) };
        let mellin_lambdas = r.get(s, None, "mellin_lambdas", Some("3, 5"), "run.mellin_lambdas".into())?.list()?;
        let contour = r.get(s, None, "contour", Some("true"), "run.contour".into())?.boolean()?;
        let mut tol_of = |key: &str, default: f64| -> Result<f64, InputError> { r.get(s, None, key, Some(&format!("{default:e}")), format!("run.{key}"))?.tolerance() };
        let tol = Tolerances {
            gamma: tol_of("tol_gamma", t.gamma)?,
            laurent: tol_of("tol_laurent", t.laurent)?,
            residue: tol_of("tol_residue", t.residue)?,
            metric: tol_of("tol_metric", t.metric)?,
            stokes: tol_of("tol_stokes", t.stokes)?,
            fit: tol_of("tol_fit", t.fit)?,
            mellin: tol_of("tol_mellin", t.mellin)?,
        };
        let run = RunConfig { lambda, tau, eps_min, eps_max, eps_points, jmax, mellin_lambdas, contour, tol };
        Ok(Config { charts, quadrature, run, echo: r.echo })
    }

    pub fn load(path: &str, overrides: &[String]) -> Result<Config, InputError> {
        let text = std::fs::read_to_string(path).map_err(|e| InputError { location: path.to_string(), message: e.to_string() })?;
        let mut raw = RawSpec::parse(path, &text)?;
        for o in overrides {
            raw.set(o)?;
        }
        Config::from_raw(&raw)
    }
}
