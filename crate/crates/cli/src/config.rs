//! Run configuration: a TOML file validated into a [`RunConfig`].
//!
//! Validation collects every problem it finds, each tagged with the path of the
//! offending field, instead of stopping at the first one.

use std::fmt;
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::DMatrix;
use qsd_core::ensemble::InitialState;
use qsd_core::hilbert::{hermiticity_defect, HERMITIAN_WARN_TOLERANCE};
use qsd_core::propagator::step_count;
use qsd_core::{HermitianOperator, SchemeKind, StateVector, C64};
use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

/// Hermiticity defect above which an operator is rejected rather than symmetrized.
pub const HERMITIAN_REJECT_TOLERANCE: f64 = 1e-6;
/// Initial states whose norm is off by more than this are rejected; smaller errors are normalized away.
pub const NORM_REJECT_TOLERANCE: f64 = 1e-6;
pub const MAX_DIMENSION: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Trajectory,
    Ensemble,
    Lindblad,
    Compare,
    Oscillator,
    Liouville,
    LagrangianToy,
    LagrangianField,
    NoiseSelftest,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Trajectory,
        Experiment::Ensemble,
        Experiment::Lindblad,
        Experiment::Compare,
        Experiment::Oscillator,
        Experiment::Liouville,
        Experiment::LagrangianToy,
        Experiment::LagrangianField,
        Experiment::NoiseSelftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Trajectory => "trajectory",
            Experiment::Ensemble => "ensemble",
            Experiment::Lindblad => "lindblad",
            Experiment::Compare => "compare",
            Experiment::Oscillator => "oscillator",
            Experiment::Liouville => "liouville",
            Experiment::LagrangianToy => "lagrangian-toy",
            Experiment::LagrangianField => "lagrangian-field",
            Experiment::NoiseSelftest => "noise-selftest",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    fn needs_t_final(self) -> bool {
        self != Experiment::NoiseSelftest
    }

    fn needs_psi0(self) -> bool {
        !matches!(self, Experiment::NoiseSelftest | Experiment::LagrangianToy)
    }

    fn allows_uniform_random(self) -> bool {
        matches!(self, Experiment::Trajectory | Experiment::Ensemble | Experiment::Lindblad | Experiment::Compare)
    }

    fn needs_trajectories(self) -> bool {
        matches!(self, Experiment::Ensemble | Experiment::Compare)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One validation problem, located by a dotted field path such as `g[2]` or `toy.a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config is not valid TOML: {0}")]
    Syntax(String),
    #[error("{} validation error(s):\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Issue>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillatorSection {
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiouvilleSection {
    pub cloud_size: usize,
    pub spread: f64,
    /// Defaults to `master_seed`.
    pub cloud_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToySection {
    pub function: String,
    pub a: C64,
    pub b: C64,
    pub q0: C64,
    pub q_prime0: C64,
    /// Frequency of the linear-field consistency run.
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSection {
    pub states: usize,
    pub noise_rates: usize,
    /// Defaults to `master_seed`.
    pub scan_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSection {
    pub streams: usize,
    pub draws_per_stream: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub dimension: usize,
    pub h: HermitianOperator,
    pub g: HermitianOperator,
    pub psi0: Option<InitialState>,
    pub dt: f64,
    pub t_final: Option<f64>,
    pub trajectories: Option<usize>,
    pub master_seed: u64,
    pub scheme: SchemeKind,
    pub record_every: usize,
    pub output_dir: PathBuf,
    pub stream_id: u64,
    pub oscillator: Option<OscillatorSection>,
    pub liouville: LiouvilleSection,
    pub toy: ToySection,
    pub field: FieldSection,
    pub noise: NoiseSection,
    /// SHA-256 of the config text, hex encoded.
    pub config_hash: String,
}

impl RunConfig {
    pub fn t_final(&self) -> f64 {
        self.t_final.unwrap_or(0.0)
    }

    pub fn trajectories(&self) -> usize {
        self.trajectories.unwrap_or(1)
    }

    pub fn cloud_seed(&self) -> u64 {
        self.liouville.cloud_seed.unwrap_or(self.master_seed)
    }

    pub fn scan_seed(&self) -> u64 {
        self.field.scan_seed.unwrap_or(self.master_seed)
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

const TOP_KEYS: &[&str] = &[
    "experiment",
    "dimension",
    "h",
    "g",
    "psi0",
    "dt",
    "t_final",
    "trajectories",
    "master_seed",
    "scheme",
    "record_every",
    "output_dir",
    "stream_id",
    "oscillator",
    "liouville",
    "toy",
    "field",
    "noise",
];

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut v = Validator::default();

    for key in table.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            v.issue(key, "unknown key");
        }
    }

    let experiment = v.string(&table, "experiment", "").and_then(|name| {
        let e = Experiment::from_name(&name);
        if e.is_none() {
            let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
            v.issue("experiment", format!("unknown experiment `{name}`; expected one of {}", names.join(", ")));
        }
        e
    });
    if table.get("experiment").is_none() {
        v.issue("experiment", "missing required key");
    }

    let dimension = v.required_usize(&table, "dimension", "").and_then(|n| {
        if n == 0 || n > MAX_DIMENSION {
            v.issue("dimension", format!("must be between 1 and {MAX_DIMENSION}, got {n}"));
            None
        } else {
            Some(n)
        }
    });

    let dt = v.required_f64(&table, "dt", "").and_then(|x| v.positive("dt", x));
    let t_final = match table.get("t_final") {
        Some(_) => v.f64_at(&table, "t_final", "").and_then(|x| v.positive("t_final", x)),
        None => {
            if experiment.is_some_and(|e| e.needs_t_final()) {
                v.issue("t_final", "missing required key");
            }
            None
        }
    };
    if let (Some(dt), Some(t)) = (dt, t_final) {
        if step_count(t, dt).is_err() {
            v.issue("t_final", format!("{t} is not a whole number of steps of dt = {dt}"));
        }
    }

    let master_seed = v.required_u64(&table, "master_seed", "");
    let trajectories = match table.get("trajectories") {
        Some(_) => v.usize_at(&table, "trajectories", "").and_then(|m| v.at_least("trajectories", m, 1)),
        None => {
            if experiment.is_some_and(|e| e.needs_trajectories()) {
                v.issue("trajectories", "missing required key");
            }
            None
        }
    };
    let record_every = match table.get("record_every") {
        Some(_) => v.usize_at(&table, "record_every", "").and_then(|m| v.at_least("record_every", m, 1)),
        None => Some(1),
    };
    let stream_id = match table.get("stream_id") {
        Some(_) => v.u64_at(&table, "stream_id", ""),
        None => Some(0),
    };
    let scheme = match table.get("scheme") {
        Some(_) => v.string(&table, "scheme", "").and_then(|name| {
            let s = SchemeKind::from_name(&name);
            if s.is_none() {
                let names: Vec<_> = SchemeKind::ALL.iter().map(|s| s.name()).collect();
                v.issue("scheme", format!("unknown scheme `{name}`; expected one of {}", names.join(", ")));
            }
            s
        }),
        None => Some(SchemeKind::default()),
    };
    let output_dir = v.string(&table, "output_dir", "").map(PathBuf::from);
    if table.get("output_dir").is_none() {
        v.issue("output_dir", "missing required key");
    }

    let (h, g, psi0) = match dimension {
        Some(n) => {
            let h = match table.get("h") {
                Some(val) => operator_from_value(val, n, "h", &mut v),
                None => Some(HermitianOperator::zeros(n)),
            };
            let g = match table.get("g") {
                Some(val) => operator_from_value(val, n, "g", &mut v),
                None => Some(HermitianOperator::zeros(n)),
            };
            let psi0 = match table.get("psi0") {
                Some(Value::String(s)) if s == "uniform-random" => {
                    if experiment.is_some_and(|e| !e.allows_uniform_random()) {
                        v.issue(
                            "psi0",
                            "`uniform-random` is only available for trajectory, ensemble, lindblad and compare",
                        );
                    }
                    Some(Some(InitialState::UniformRandom))
                }
                Some(Value::String(s)) => {
                    v.issue("psi0", format!("expected an entry list or \"uniform-random\", got \"{s}\""));
                    None
                }
                Some(val) => state_from_value(val, n, "psi0", &mut v).map(|s| Some(InitialState::Fixed(s))),
                None => {
                    if experiment.is_some_and(|e| e.needs_psi0()) {
                        v.issue("psi0", "missing required key");
                    }
                    Some(None)
                }
            };
            (h, g, psi0)
        }
        None => (None, None, None),
    };

    let oscillator = section(&table, "oscillator", &mut v).and_then(|t| {
        v.unknown_keys(&t, "oscillator", &["omega"]);
        let omega = v.f64_list(&t, "omega", "oscillator")?;
        let mut ok = true;
        if let Some(n) = dimension {
            if omega.len() != n {
                v.issue("oscillator.omega", format!("expected {n} frequencies, got {}", omega.len()));
                ok = false;
            }
        }
        for (i, w) in omega.iter().enumerate() {
            if !(*w > 0.0 && w.is_finite()) {
                v.issue(format!("oscillator.omega[{i}]"), format!("must be positive, got {w}"));
                ok = false;
            }
        }
        ok.then_some(OscillatorSection { omega })
    });
    if experiment == Some(Experiment::Oscillator) {
        if table.get("oscillator").is_none() {
            v.issue("oscillator", "missing required section with `omega`");
        }
        for key in ["h", "g"] {
            if table.contains_key(key) {
                v.issue(
                    key,
                    "must be absent for the oscillator experiment; the frequencies come from oscillator.omega",
                );
            }
        }
    }

    let liouville = {
        let t = section(&table, "liouville", &mut v).unwrap_or_default();
        v.unknown_keys(&t, "liouville", &["cloud_size", "spread", "cloud_seed"]);
        let min = dimension.map_or(4, |n| 2 * n + 2);
        let cloud_size = v.opt_usize(&t, "cloud_size", "liouville").unwrap_or(min.max(12));
        if cloud_size < min {
            v.issue("liouville.cloud_size", format!("must be at least 2N + 2 = {min}, got {cloud_size}"));
        }
        let spread = v.opt_f64(&t, "spread", "liouville").unwrap_or(1e-2);
        if !(spread > 0.0 && spread.is_finite()) {
            v.issue("liouville.spread", format!("must be positive, got {spread}"));
        }
        let cloud_seed = v.opt_u64(&t, "cloud_seed", "liouville");
        LiouvilleSection { cloud_size, spread, cloud_seed }
    };

    let toy = {
        let t = section(&table, "toy", &mut v).unwrap_or_default();
        v.unknown_keys(&t, "toy", &["function", "a", "b", "q0", "q_prime0", "omega"]);
        let function = match t.get("function") {
            Some(_) => v.string(&t, "function", "toy").unwrap_or_default(),
            None => "linear".to_string(),
        };
        if !function.is_empty() && function != "linear" && function != "cubic" {
            v.issue("toy.function", format!("unknown function `{function}`; expected linear or cubic"));
        }
        let complex = |v: &mut Validator, key: &str, default: C64| match t.get(key) {
            Some(val) => complex_from_value(val, &format!("toy.{key}"), v).unwrap_or(default),
            None => default,
        };
        let a = complex(&mut v, "a", C64::new(-1.0, 0.0));
        let b = complex(&mut v, "b", C64::new(0.0, 0.0));
        let q0 = complex(&mut v, "q0", C64::new(1.0, 0.0));
        let q_prime0 = complex(&mut v, "q_prime0", C64::new(1.0, 0.0));
        let omega = v.opt_f64(&t, "omega", "toy").unwrap_or(1.0);
        ToySection { function, a, b, q0, q_prime0, omega }
    };

    let field = {
        let t = section(&table, "field", &mut v).unwrap_or_default();
        v.unknown_keys(&t, "field", &["states", "noise_rates", "scan_seed"]);
        let states = v.opt_usize(&t, "states", "field").unwrap_or(1000);
        let noise_rates = v.opt_usize(&t, "noise_rates", "field").unwrap_or(10);
        let scan_seed = v.opt_u64(&t, "scan_seed", "field");
        FieldSection { states, noise_rates, scan_seed }
    };

    let noise = {
        let t = section(&table, "noise", &mut v).unwrap_or_default();
        v.unknown_keys(&t, "noise", &["streams", "draws_per_stream"]);
        let streams = v.opt_usize(&t, "streams", "noise").unwrap_or(100);
        let draws_per_stream = v.opt_usize(&t, "draws_per_stream", "noise").unwrap_or(10_000);
        if streams == 0 {
            v.issue("noise.streams", "must be at least 1");
        }
        if draws_per_stream == 0 {
            v.issue("noise.draws_per_stream", "must be at least 1");
        }
        NoiseSection { streams, draws_per_stream }
    };

    if !v.issues.is_empty() {
        return Err(ConfigError::Invalid(v.issues));
    }
    // Every field below was checked above; a missing one would have produced an issue.
    let (Some(experiment), Some(dimension), Some(h), Some(g), Some(psi0), Some(dt), Some(master_seed)) =
        (experiment, dimension, h, g, psi0, dt, master_seed)
    else {
        return Err(ConfigError::Invalid(vec![Issue { path: "<root>".into(), message: "incomplete config".into() }]));
    };
    let (Some(record_every), Some(stream_id), Some(scheme), Some(output_dir)) =
        (record_every, stream_id, scheme, output_dir)
    else {
        return Err(ConfigError::Invalid(vec![Issue { path: "<root>".into(), message: "incomplete config".into() }]));
    };

    Ok(RunConfig {
        experiment,
        dimension,
        h,
        g,
        psi0,
        dt,
        t_final,
        trajectories,
        master_seed,
        scheme,
        record_every,
        output_dir,
        stream_id,
        oscillator,
        liouville,
        toy,
        field,
        noise,
        config_hash: hex::encode(Sha256::digest(text.as_bytes())),
    })
}

/// Parses an operator entry list written as a TOML array, e.g. `[[0, 0, 1.0, 0.0], [1, 1, -1.0]]`.
pub fn parse_operator_entries(text: &str, n: usize) -> Result<HermitianOperator, ConfigError> {
    let mut v = Validator::default();
    if n == 0 || n > MAX_DIMENSION {
        v.issue("dimension", format!("must be between 1 and {MAX_DIMENSION}, got {n}"));
        return Err(ConfigError::Invalid(v.issues));
    }
    let value = parse_value(text)?;
    let op = operator_from_value(&value, n, "entries", &mut v);
    finish(op, v)
}

/// Parses a state entry list written as a TOML array, e.g. `[[0, 0.6, 0.0], [1, 0.0, 0.8]]`.
pub fn parse_state_entries(text: &str, n: usize) -> Result<StateVector, ConfigError> {
    let mut v = Validator::default();
    if n == 0 || n > MAX_DIMENSION {
        v.issue("dimension", format!("must be between 1 and {MAX_DIMENSION}, got {n}"));
        return Err(ConfigError::Invalid(v.issues));
    }
    let value = parse_value(text)?;
    let state = state_from_value(&value, n, "entries", &mut v);
    finish(state, v)
}

fn parse_value(text: &str) -> Result<Value, ConfigError> {
    let table: Table =
        format!("entries = {text}").parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    table.get("entries").cloned().ok_or_else(|| ConfigError::Syntax("missing value".into()))
}

fn finish<T>(value: Option<T>, v: Validator) -> Result<T, ConfigError> {
    match value {
        Some(x) if v.issues.is_empty() => Ok(x),
        _ => Err(ConfigError::Invalid(if v.issues.is_empty() {
            vec![Issue { path: "entries".into(), message: "invalid".into() }]
        } else {
            v.issues
        })),
    }
}

fn section(table: &Table, key: &str, v: &mut Validator) -> Option<Table> {
    match table.get(key) {
        Some(Value::Table(t)) => Some(t.clone()),
        Some(other) => {
            v.issue(key, format!("expected a table, got {}", other.type_str()));
            None
        }
        None => None,
    }
}

fn as_f64(value: &Value) -> Option<f64> {
    match value {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn complex_from_value(value: &Value, path: &str, v: &mut Validator) -> Option<C64> {
    let z = match value {
        Value::Array(a) if a.len() == 2 => match (as_f64(&a[0]), as_f64(&a[1])) {
            (Some(re), Some(im)) => Some(C64::new(re, im)),
            _ => None,
        },
        other => as_f64(other).map(|re| C64::new(re, 0.0)),
    };
    match z {
        Some(z) if z.re.is_finite() && z.im.is_finite() => Some(z),
        Some(_) => {
            v.issue(path, "must be finite");
            None
        }
        None => {
            v.issue(path, "expected a number or a [re, im] pair");
            None
        }
    }
}

/// Operator entries `[row, col, re]` or `[row, col, re, im]`; unlisted entries are zero.
fn operator_from_value(value: &Value, n: usize, path: &str, v: &mut Validator) -> Option<HermitianOperator> {
    let Value::Array(items) = value else {
        v.issue(path, format!("expected an array of [row, col, re, im] entries, got {}", value.type_str()));
        return None;
    };
    let before = v.issues.len();
    let mut m = DMatrix::<C64>::zeros(n, n);
    let mut source: Vec<Option<usize>> = vec![None; n * n];
    for (k, item) in items.iter().enumerate() {
        let at = format!("{path}[{k}]");
        let Value::Array(e) = item else {
            v.issue(&at, "expected [row, col, re] or [row, col, re, im]");
            continue;
        };
        if e.len() != 3 && e.len() != 4 {
            v.issue(&at, format!("expected 3 or 4 elements, got {}", e.len()));
            continue;
        }
        let (Some(row), Some(col)) = (index(&e[0], n, &at, "row", v), index(&e[1], n, &at, "column", v)) else {
            continue;
        };
        let re = as_f64(&e[2]);
        let im = if e.len() == 4 { as_f64(&e[3]) } else { Some(0.0) };
        let (Some(re), Some(im)) = (re, im) else {
            v.issue(&at, "value parts must be numbers");
            continue;
        };
        if !(re.is_finite() && im.is_finite()) {
            v.issue(&at, "value must be finite");
            continue;
        }
        if let Some(first) = source[row * n + col] {
            v.issue(&at, format!("duplicate entry ({row}, {col}); first given at {path}[{first}]"));
            continue;
        }
        source[row * n + col] = Some(k);
        m[(row, col)] = C64::new(re, im);
    }
    if v.issues.len() > before {
        return None;
    }
    let mut rejected = false;
    for r in 0..n {
        for c in r..n {
            let d = (m[(r, c)] - m[(c, r)].conj()).norm();
            if d > HERMITIAN_REJECT_TOLERANCE {
                let name = |i: usize, j: usize| match source[i * n + j] {
                    Some(k) => format!("{path}[{k}] ({i}, {j}) = {}", m[(i, j)]),
                    None => format!("({i}, {j}) (unlisted, zero)"),
                };
                let (at, other) = match source[r * n + c] {
                    Some(k) => (format!("{path}[{k}]"), name(c, r)),
                    None => (format!("{path}[{}]", source[c * n + r].unwrap_or(0)), name(r, c)),
                };
                v.issue(
                    at,
                    format!(
                        "not Hermitian: entry ({r}, {c}) = {} but conj of ({c}, {r}) = {}; defect {d:e} exceeds {HERMITIAN_REJECT_TOLERANCE:e} (partner: {other})",
                        m[(r, c)],
                        m[(c, r)].conj()
                    ),
                );
                rejected = true;
            }
        }
    }
    if rejected {
        return None;
    }
    let defect = hermiticity_defect(&m);
    if defect > HERMITIAN_WARN_TOLERANCE {
        warn!("{path}: Hermiticity defect {defect:e}; using (A + A^dagger)/2");
    }
    match HermitianOperator::new(m) {
        Ok(op) => Some(op),
        Err(e) => {
            v.issue(path, e.to_string());
            None
        }
    }
}

fn index(value: &Value, n: usize, at: &str, what: &str, v: &mut Validator) -> Option<usize> {
    match value {
        Value::Integer(i) if *i >= 0 && (*i as u64) < n as u64 => Some(*i as usize),
        Value::Integer(i) => {
            v.issue(at, format!("{what} index {i} out of range for dimension {n}"));
            None
        }
        _ => {
            v.issue(at, format!("{what} index must be an integer"));
            None
        }
    }
}

/// State entries `[index, re]` or `[index, re, im]`; unlisted amplitudes are zero.
fn state_from_value(value: &Value, n: usize, path: &str, v: &mut Validator) -> Option<StateVector> {
    let Value::Array(items) = value else {
        v.issue(path, format!("expected an array of [index, re, im] entries, got {}", value.type_str()));
        return None;
    };
    let before = v.issues.len();
    let mut amps = vec![C64::new(0.0, 0.0); n];
    let mut seen: Vec<Option<usize>> = vec![None; n];
    for (k, item) in items.iter().enumerate() {
        let at = format!("{path}[{k}]");
        let Value::Array(e) = item else {
            v.issue(&at, "expected [index, re] or [index, re, im]");
            continue;
        };
        if e.len() != 2 && e.len() != 3 {
            v.issue(&at, format!("expected 2 or 3 elements, got {}", e.len()));
            continue;
        }
        let Some(j) = index(&e[0], n, &at, "amplitude", v) else { continue };
        let re = as_f64(&e[1]);
        let im = if e.len() == 3 { as_f64(&e[2]) } else { Some(0.0) };
        let (Some(re), Some(im)) = (re, im) else {
            v.issue(&at, "amplitude parts must be numbers");
            continue;
        };
        if !(re.is_finite() && im.is_finite()) {
            v.issue(&at, "amplitude must be finite");
            continue;
        }
        if let Some(first) = seen[j] {
            v.issue(&at, format!("duplicate amplitude {j}; first given at {path}[{first}]"));
            continue;
        }
        seen[j] = Some(k);
        amps[j] = C64::new(re, im);
    }
    if v.issues.len() > before {
        return None;
    }
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_REJECT_TOLERANCE {
        v.issue(path, format!("state norm is {norm}, expected 1"));
        return None;
    }
    let state = StateVector::new(amps.into_iter().map(|z| z / norm).collect());
    match state {
        Ok(s) => Some(s),
        Err(e) => {
            v.issue(path, e.to_string());
            None
        }
    }
}

#[derive(Default)]
struct Validator {
    issues: Vec<Issue>,
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

impl Validator {
    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue { path: path.into(), message: message.into() });
    }

    fn unknown_keys(&mut self, t: &Table, prefix: &str, allowed: &[&str]) {
        for key in t.keys() {
            if !allowed.contains(&key.as_str()) {
                self.issue(join(prefix, key), "unknown key");
            }
        }
    }

    fn string(&mut self, t: &Table, key: &str, prefix: &str) -> Option<String> {
        match t.get(key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.issue(join(prefix, key), format!("expected a string, got {}", other.type_str()));
                None
            }
        }
    }

    fn f64_at(&mut self, t: &Table, key: &str, prefix: &str) -> Option<f64> {
        let value = t.get(key)?;
        match as_f64(value) {
            Some(x) if x.is_finite() => Some(x),
            Some(x) => {
                self.issue(join(prefix, key), format!("must be finite, got {x}"));
                None
            }
            None => {
                self.issue(join(prefix, key), format!("expected a number, got {}", value.type_str()));
                None
            }
        }
    }

    fn required_f64(&mut self, t: &Table, key: &str, prefix: &str) -> Option<f64> {
        if !t.contains_key(key) {
            self.issue(join(prefix, key), "missing required key");
            return None;
        }
        self.f64_at(t, key, prefix)
    }

    fn opt_f64(&mut self, t: &Table, key: &str, prefix: &str) -> Option<f64> {
        self.f64_at(t, key, prefix)
    }

    fn u64_at(&mut self, t: &Table, key: &str, prefix: &str) -> Option<u64> {
        match t.get(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            Value::Integer(i) => {
                self.issue(join(prefix, key), format!("must be non-negative, got {i}"));
                None
            }
            other => {
                self.issue(join(prefix, key), format!("expected an integer, got {}", other.type_str()));
                None
            }
        }
    }

    fn required_u64(&mut self, t: &Table, key: &str, prefix: &str) -> Option<u64> {
        if !t.contains_key(key) {
            self.issue(join(prefix, key), "missing required key");
            return None;
        }
        self.u64_at(t, key, prefix)
    }

    fn opt_u64(&mut self, t: &Table, key: &str, prefix: &str) -> Option<u64> {
        self.u64_at(t, key, prefix)
    }

    fn usize_at(&mut self, t: &Table, key: &str, prefix: &str) -> Option<usize> {
        self.u64_at(t, key, prefix).and_then(|x| usize::try_from(x).ok())
    }

    fn required_usize(&mut self, t: &Table, key: &str, prefix: &str) -> Option<usize> {
        self.required_u64(t, key, prefix).and_then(|x| usize::try_from(x).ok())
    }

    fn opt_usize(&mut self, t: &Table, key: &str, prefix: &str) -> Option<usize> {
        self.usize_at(t, key, prefix)
    }

    fn f64_list(&mut self, t: &Table, key: &str, prefix: &str) -> Option<Vec<f64>> {
        let path = join(prefix, key);
        match t.get(key) {
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    match as_f64(item) {
                        Some(x) => out.push(x),
                        None => {
                            self.issue(format!("{path}[{i}]"), "expected a number");
                            return None;
                        }
                    }
                }
                Some(out)
            }
            Some(other) => {
                self.issue(path, format!("expected an array of numbers, got {}", other.type_str()));
                None
            }
            None => {
                self.issue(path, "missing required key");
                None
            }
        }
    }

    fn positive(&mut self, path: &str, x: f64) -> Option<f64> {
        if x > 0.0 {
            Some(x)
        } else {
            self.issue(path, format!("must be positive, got {x}"));
            None
        }
    }

    fn at_least(&mut self, path: &str, x: usize, min: usize) -> Option<usize> {
        if x >= min {
            Some(x)
        } else {
            self.issue(path, format!("must be at least {min}, got {x}"));
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUBIT: &str = r#"
experiment = "trajectory"
dimension = 2
g = [[0, 0, 1.0], [1, 1, -1.0]]
psi0 = [[0, 0.7071067811865476], [1, 0.7071067811865476]]
dt = 0.01
t_final = 1.0
master_seed = 7
output_dir = "out"
"#;

    fn issues(text: &str) -> Vec<Issue> {
        match parse_config_str(text) {
            Err(ConfigError::Invalid(i)) => i,
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_qubit_config_is_valid() {
        let c = parse_config_str(QUBIT).unwrap();
        assert_eq!(c.experiment, Experiment::Trajectory);
        assert!(c.h.is_zero());
        assert_eq!(c.g.matrix()[(1, 1)], C64::new(-1.0, 0.0));
        assert_eq!(c.scheme, SchemeKind::EulerRenormalized);
        assert_eq!(c.record_every, 1);
        assert_eq!(c.config_hash.len(), 64);
    }

    #[test]
    fn zero_dt_names_dt() {
        let i = issues(&QUBIT.replace("dt = 0.01", "dt = 0"));
        assert!(i.iter().any(|i| i.path == "dt"), "{i:?}");
    }

    #[test]
    fn non_hermitian_g_names_the_entry() {
        let text = QUBIT.replace("g = [[0, 0, 1.0], [1, 1, -1.0]]", "g = [[0, 0, 1.0], [1, 1, -1.0], [0, 1, 0.5]]");
        let i = issues(&text);
        assert!(i.iter().any(|i| i.path == "g[2]" && i.message.contains("not Hermitian")), "{i:?}");
    }

    #[test]
    fn small_hermitian_defect_is_symmetrized() {
        let text = QUBIT.replace(
            "g = [[0, 0, 1.0], [1, 1, -1.0]]",
            "g = [[0, 0, 1.0], [1, 1, -1.0], [0, 1, 0.5], [1, 0, 0.5000001]]",
        );
        let c = parse_config_str(&text).unwrap();
        assert_eq!(c.g.matrix()[(0, 1)], c.g.matrix()[(1, 0)].conj());
    }

    #[test]
    fn all_errors_are_reported() {
        let text = r#"
experiment = "nonsense"
dimension = 2
dt = -1
master_seed = -3
typo = 1
"#;
        let paths: Vec<String> = issues(text).into_iter().map(|i| i.path).collect();
        for p in ["experiment", "dt", "master_seed", "typo", "output_dir"] {
            assert!(paths.iter().any(|q| q == p), "missing {p} in {paths:?}");
        }
    }

    #[test]
    fn t_final_must_be_whole_steps() {
        let i = issues(&QUBIT.replace("t_final = 1.0", "t_final = 1.005001"));
        assert!(i.iter().any(|i| i.path == "t_final"));
    }

    #[test]
    fn entry_parsers() {
        let op = parse_operator_entries("[[0, 1, 0.0, -1.0], [1, 0, 0.0, 1.0]]", 2).unwrap();
        assert_eq!(op.matrix()[(0, 1)], C64::new(0.0, -1.0));
        assert!(parse_operator_entries("[[0, 2, 1.0]]", 2).is_err());
        assert!(parse_operator_entries("[[0, 0, 1.0], [0, 0, 2.0]]", 2).is_err());
        assert!(parse_operator_entries("[[0, 0, nan]]", 2).is_err());
        assert!(parse_operator_entries("not toml [", 2).is_err());

        let s = parse_state_entries("[[0, 0.6], [1, 0.0, 0.8]]", 2).unwrap();
        assert_eq!(s.amplitudes()[1], C64::new(0.0, 0.8));
        assert!(parse_state_entries("[[0, 0.5]]", 2).is_err());
        assert!(parse_state_entries("[[3, 1.0]]", 2).is_err());
        // Rounding-level norm errors are normalized away.
        assert!(parse_state_entries("[[0, 0.70710678], [1, 0.70710678]]", 2).is_ok());
    }

    #[test]
    fn uniform_random_only_where_supported() {
        let text =
            QUBIT.replace("psi0 = [[0, 0.7071067811865476], [1, 0.7071067811865476]]", "psi0 = \"uniform-random\"");
        assert_eq!(parse_config_str(&text).unwrap().psi0, Some(InitialState::UniformRandom));
        let text = text.replace("\"trajectory\"", "\"liouville\"");
        assert!(issues(&text).iter().any(|i| i.path == "psi0"));
    }

    #[test]
    fn oscillator_requires_frequencies_and_no_operators() {
        let text = QUBIT.replace("\"trajectory\"", "\"oscillator\"");
        let paths: Vec<String> = issues(&text).into_iter().map(|i| i.path).collect();
        assert!(paths.contains(&"oscillator".to_string()));
        assert!(paths.contains(&"g".to_string()));
    }
}
