//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear
//! at most once; unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;
use toroidal::hyperbolic::Integrator;
use toroidal::symbol::FourierSeries;
use toroidal::GridSpec;

#[derive(Debug, Error)]
#[error("{path}: {msg}")]
pub struct ConfigError {
    pub path: String,
    pub msg: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scenario {
    ExactMode,
    Manufactured,
    EnergyStudy,
    SymbolOrder,
    CalculusCheck,
    SymmetrizerCheck,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::ExactMode,
        Scenario::Manufactured,
        Scenario::EnergyStudy,
        Scenario::SymbolOrder,
        Scenario::CalculusCheck,
        Scenario::SymmetrizerCheck,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::ExactMode => "exact_mode",
            Scenario::Manufactured => "manufactured",
            Scenario::EnergyStudy => "energy_study",
            Scenario::SymbolOrder => "symbol_order",
            Scenario::CalculusCheck => "calculus_check",
            Scenario::SymmetrizerCheck => "symmetrizer_check",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.id() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    FracLaplacian,
    Bessel,
    Oscillating,
    Variable,
}

impl OperatorKind {
    pub fn id(self) -> &'static str {
        match self {
            OperatorKind::FracLaplacian => "frac_laplacian",
            OperatorKind::Bessel => "bessel",
            OperatorKind::Oscillating => "oscillating",
            OperatorKind::Variable => "variable",
        }
    }

    /// Real, self-adjoint-after-symmetrization kinds usable as `P`.
    pub fn is_wave_operator(self) -> bool {
        self != OperatorKind::Oscillating
    }

    pub fn is_multiplier(self) -> bool {
        matches!(self, OperatorKind::FracLaplacian | OperatorKind::Bessel)
    }
}

impl FromStr for OperatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            OperatorKind::FracLaplacian,
            OperatorKind::Bessel,
            OperatorKind::Oscillating,
            OperatorKind::Variable,
        ]
        .into_iter()
        .find(|k| k.id() == s)
        .ok_or_else(|| format!("unknown operator `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expansion {
    Adjoint,
    Composition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForcingKind {
    None,
    Separable,
}

/// Documented keys with their defaults (`None` when the default depends on other keys).
pub const KEYS: &[(&str, Option<&str>, &str)] = &[
    ("scenario", None, "one of the scenario ids (required)"),
    ("name", None, "report name; defaults to the file stem"),
    ("dim", Some("1"), "torus dimension n (1..=3)"),
    ("points", Some("64"), "grid points per axis G (even)"),
    ("cutoff", None, "frequency cutoff N with 2N+1 <= G; defaults to G/2 - 1"),
    ("operator", Some("frac_laplacian"), "frac_laplacian | bessel | oscillating | variable"),
    ("nu", Some("2"), "order of the operator"),
    ("rho", Some("0.4"), "type of the oscillating symbol"),
    ("class_rho", None, "rho of the class probed by symbol_order; defaults to the symbol's own"),
    ("coefficient", Some("sin:0.5:0:1"), "terms kind:amp:axis:k (kind sin|cos) or const:c, separated by spaces"),
    ("shift", None, "symmetrization shift c; defaults to 2 for variable, 0 otherwise"),
    ("xi0", None, "initial Fourier mode, comma separated; defaults to (1, 0, ..)"),
    ("s", Some("0"), "Sobolev index of the energy ledger"),
    ("T", Some("1"), "final time"),
    ("dt", Some("1e-3"), "time step"),
    ("integrator", Some("rk4"), "rk4 | exp_midpoint"),
    ("substep", Some("false"), "split unstable rk4 steps"),
    ("stride", Some("10"), "record every stride-th step"),
    ("forcing", Some("none"), "energy_study forcing: none | separable"),
    ("control", Some("false"), "symmetrizer_check: use the generator without A^-1"),
    ("expansion", Some("adjoint"), "calculus_check: adjoint | composition"),
    ("truncation", Some("1"), "calculus_check: highest truncation order"),
    ("max_alpha", Some("3"), "symbol_order: highest difference order"),
    ("max_beta", Some("1"), "symbol_order: highest x-derivative order"),
    ("out", Some("out"), "output directory"),
    ("plot", Some("false"), "write SVG plots"),
    ("seed", Some("0"), "seed for randomized data"),
];

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: Scenario,
    pub grid: GridSpec,
    pub operator: OperatorKind,
    pub nu: f64,
    pub rho: f64,
    pub class_rho: f64,
    pub coefficient: FourierSeries,
    pub shift: f64,
    pub xi0: Vec<i64>,
    pub s: f64,
    pub t_final: f64,
    pub dt: f64,
    pub integrator: Integrator,
    pub substep: bool,
    pub stride: usize,
    pub forcing: ForcingKind,
    pub control: bool,
    pub expansion: Expansion,
    pub truncation: usize,
    pub max_alpha: usize,
    pub max_beta: usize,
    pub out: PathBuf,
    pub plot: bool,
    pub seed: u64,
    /// Effective key/value pairs, echoed into the report.
    pub echo: BTreeMap<String, String>,
}

struct Raw {
    path: String,
    map: BTreeMap<String, String>,
}

impl Raw {
    fn err(&self, msg: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            msg: msg.into(),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let text = self.map.get(key).ok_or_else(|| self.err(format!("missing key `{key}`")))?;
        text.parse()
            .map_err(|_| self.err(format!("cannot parse `{key} = {text}`")))
    }

    fn parse_with<T>(&self, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<T, ConfigError> {
        let text = self.map.get(key).ok_or_else(|| self.err(format!("missing key `{key}`")))?;
        f(text).map_err(|m| self.err(format!("`{key}`: {m}")))
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

fn parse_coefficient(s: &str) -> Result<FourierSeries, String> {
    let mut series = FourierSeries::zero();
    for term in s.split_whitespace() {
        let parts: Vec<&str> = term.split(':').collect();
        let num = |i: usize| -> Result<f64, String> {
            parts
                .get(i)
                .ok_or_else(|| format!("term `{term}` is incomplete"))?
                .parse::<f64>()
                .map_err(|_| format!("bad number in `{term}`"))
        };
        let next = match parts[0] {
            "const" if parts.len() == 2 => FourierSeries::constant(num(1)?),
            kind @ ("sin" | "cos") if parts.len() == 4 => {
                let axis = num(2)?;
                let k = num(3)?;
                if axis.fract() != 0.0 || !(0.0..=2.0).contains(&axis) || k.fract() != 0.0 {
                    return Err(format!("axis and frequency must be integers in `{term}`"));
                }
                if kind == "sin" {
                    FourierSeries::sine(num(1)?, axis as usize, k as i64)
                } else {
                    FourierSeries::cosine(num(1)?, axis as usize, k as i64)
                }
            }
            _ => return Err(format!("cannot parse coefficient term `{term}`")),
        };
        series = series.plus(next);
    }
    Ok(series)
}

pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let display = path.display().to_string();
    let mut raw = Raw {
        path: display.clone(),
        map: BTreeMap::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| raw.err(format!("line {}: expected `key = value`", i + 1)))?;
        let key = key.trim();
        let value = value.trim();
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(raw.err(format!("line {}: unknown key `{key}`", i + 1)));
        }
        if raw.map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(raw.err(format!("line {}: duplicate key `{key}`", i + 1)));
        }
    }
    if !raw.map.contains_key("scenario") {
        return Err(raw.err("missing key `scenario`"));
    }
    for (key, default, _) in KEYS {
        if let Some(d) = default {
            raw.map.entry(key.to_string()).or_insert_with(|| d.to_string());
        }
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    raw.map.entry("name".into()).or_insert(stem);

    let scenario: Scenario = raw.parse_with("scenario", |s| s.parse())?;
    let dim: usize = raw.get("dim")?;
    let points: usize = raw.get("points")?;
    if !raw.map.contains_key("cutoff") {
        raw.map.insert("cutoff".into(), (points / 2).saturating_sub(1).to_string());
    }
    let cutoff: usize = raw.get("cutoff")?;
    let grid = GridSpec::new(dim, points, cutoff).map_err(|e| raw.err(e.to_string()))?;

    let operator: OperatorKind = raw.parse_with("operator", |s| s.parse())?;
    if !raw.map.contains_key("shift") {
        let d = if operator == OperatorKind::Variable { "2" } else { "0" };
        raw.map.insert("shift".into(), d.into());
    }
    let nu: f64 = raw.get("nu")?;
    let rho: f64 = raw.get("rho")?;
    if !raw.map.contains_key("class_rho") {
        let own = if operator == OperatorKind::Oscillating { rho } else { 1.0 };
        raw.map.insert("class_rho".into(), own.to_string());
    }
    let class_rho: f64 = raw.get("class_rho")?;
    let coefficient = raw.parse_with("coefficient", parse_coefficient)?;
    let shift: f64 = raw.get("shift")?;
    if !raw.map.contains_key("xi0") {
        let mut d = vec!["0"; dim];
        if let Some(first) = d.first_mut() {
            *first = "1";
        }
        raw.map.insert("xi0".into(), d.join(","));
    }
    let xi0 = raw.parse_with("xi0", |s| {
        s.split(',')
            .map(|v| v.trim().parse::<i64>().map_err(|_| format!("bad component `{v}`")))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let s: f64 = raw.get("s")?;
    let t_final: f64 = raw.get("T")?;
    let dt: f64 = raw.get("dt")?;
    let integrator = raw.parse_with("integrator", |s| match s {
        "rk4" => Ok(Integrator::Rk4),
        "exp_midpoint" => Ok(Integrator::ExpMidpoint),
        _ => Err(format!("unknown integrator `{s}`")),
    })?;
    let substep = raw.parse_with("substep", parse_bool)?;
    let stride: usize = raw.get("stride")?;
    let forcing = raw.parse_with("forcing", |s| match s {
        "none" => Ok(ForcingKind::None),
        "separable" => Ok(ForcingKind::Separable),
        _ => Err(format!("unknown forcing `{s}`")),
    })?;
    let control = raw.parse_with("control", parse_bool)?;
    let expansion = raw.parse_with("expansion", |s| match s {
        "adjoint" => Ok(Expansion::Adjoint),
        "composition" => Ok(Expansion::Composition),
        _ => Err(format!("unknown expansion `{s}`")),
    })?;
    let truncation: usize = raw.get("truncation")?;
    let max_alpha: usize = raw.get("max_alpha")?;
    let max_beta: usize = raw.get("max_beta")?;
    let out = PathBuf::from(raw.map["out"].clone());
    let plot = raw.parse_with("plot", parse_bool)?;
    let seed: u64 = raw.get("seed")?;

    let cfg = ExperimentConfig {
        name: raw.map["name"].clone(),
        scenario,
        grid,
        operator,
        nu,
        rho,
        class_rho,
        coefficient,
        shift,
        xi0,
        s,
        t_final,
        dt,
        integrator,
        substep,
        stride,
        forcing,
        control,
        expansion,
        truncation,
        max_alpha,
        max_beta,
        out,
        plot,
        seed,
        echo: raw.map.clone(),
    };
    cfg.validate().map_err(|m| raw.err(m))?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Applies command-line overrides and keeps the echo in sync.
    pub fn override_with(&mut self, out: Option<&Path>, plot: bool, seed: Option<u64>) {
        if let Some(o) = out {
            self.out = o.to_path_buf();
            self.echo.insert("out".into(), o.display().to_string());
        }
        if plot {
            self.plot = true;
            self.echo.insert("plot".into(), "true".into());
        }
        if let Some(s) = seed {
            self.seed = s;
            self.echo.insert("seed".into(), s.to_string());
        }
    }

    fn validate(&self) -> Result<(), String> {
        let n = self.grid.dim();
        let radius = self.grid.freq_cutoff();
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(format!("name `{}` is not a plain file name", self.name));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(format!("nu must be positive, got {}", self.nu));
        }
        if self.operator == OperatorKind::Oscillating && !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(format!("rho must lie in (0, 1], got {}", self.rho));
        }
        if !(self.class_rho > 0.0 && self.class_rho <= 1.0) {
            return Err(format!("class_rho must lie in (0, 1], got {}", self.class_rho));
        }
        if !(self.shift >= 0.0 && self.shift.is_finite()) {
            return Err(format!("shift must be non-negative, got {}", self.shift));
        }
        if self.xi0.len() != n {
            return Err(format!("xi0 needs {n} components, got {}", self.xi0.len()));
        }
        if self.xi0.iter().any(|v| v.unsigned_abs() as usize > radius) {
            return Err(format!("xi0 = {:?} lies outside the lattice max|xi_i| <= {radius}", self.xi0));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(format!("T must be positive, got {}", self.t_final));
        }
        if !(self.dt > 0.0 && self.dt <= self.t_final) {
            return Err(format!("dt must lie in (0, T], got {}", self.dt));
        }
        if self.stride == 0 {
            return Err("stride must be at least 1".into());
        }
        let wave = matches!(
            self.scenario,
            Scenario::ExactMode | Scenario::Manufactured | Scenario::EnergyStudy | Scenario::SymmetrizerCheck
        );
        if wave && !self.operator.is_wave_operator() {
            return Err(format!("{} needs a self-adjoint operator, not {}", self.scenario, self.operator.id()));
        }
        if self.scenario == Scenario::ExactMode && !self.operator.is_multiplier() {
            return Err("exact_mode needs a Fourier multiplier (frac_laplacian or bessel)".into());
        }
        let shells = |r: usize| (0..).take_while(|k| (1usize << (k + 1)) - 1 <= r).count();
        match self.scenario {
            Scenario::SymbolOrder if shells(radius) < 4 => {
                Err(format!("symbol_order needs N >= 15 for four dyadic shells, got N = {radius}"))
            }
            Scenario::CalculusCheck if shells(radius / 2) < 4 => {
                Err(format!("calculus_check needs N >= 30 for four dyadic shells, got N = {radius}"))
            }
            Scenario::SymmetrizerCheck if shells(radius) < 3 => {
                Err(format!("symmetrizer_check needs N >= 7 for three dyadic shells, got N = {radius}"))
            }
            Scenario::SymbolOrder if self.max_alpha > 8 => Err("max_alpha must be at most 8".into()),
            Scenario::CalculusCheck if self.truncation > 6 => Err("truncation must be at most 6".into()),
            _ => Ok(()),
        }
    }
}
