//! Run configuration: flat JSON object, overridden by command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde_json::{json, Map, Value};
use swe_dg::cases::{make_case, Algorithm, CaseSpec, Resolution};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Vtk,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Vtk => "vtk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Plain,
    Limited,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Plain => Algorithm::Plain,
            AlgorithmArg::Limited => Algorithm::Limited,
        }
    }
}

/// Limiter parameter that may be switched off with `off`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Toggle(pub Option<f64>);

impl std::str::FromStr for Toggle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "off" | "none" => Ok(Toggle(None)),
            _ => s
                .parse::<f64>()
                .map(|v| Toggle(Some(v)))
                .map_err(|e| format!("{s}: {e}")),
        }
    }
}

pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NXxNY, got `{s}`"))?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{s}: {e}"));
    Ok((p(a)?, p(b)?))
}

/// Case parameter overrides shared by `run` and `convergence`.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Polynomial degree k
    #[arg(long)]
    pub degree: Option<usize>,
    /// CFL number
    #[arg(long)]
    pub cfl: Option<f64>,
    /// Troubled-cell threshold, or `off`
    #[arg(long)]
    pub tol: Option<Toggle>,
    /// Dry-cell fraction, or `off`
    #[arg(long = "eps-d")]
    pub eps_d: Option<Toggle>,
    /// Velocity cap, or `off`
    #[arg(long = "v-max")]
    pub v_max: Option<Toggle>,
    /// TVB constant M
    #[arg(long = "tvb-m")]
    pub tvb_m: Option<f64>,
    #[arg(long = "t-final")]
    pub t_final: Option<f64>,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// Also enforce the positivity bound on the time step
    #[arg(long = "hard-bound")]
    pub hard_bound: Option<bool>,
}

/// Fully merged run configuration.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub case: Option<String>,
    pub resolution: Option<Resolution>,
    pub over: Overrides,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub every: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

macro_rules! take {
    ($dst:expr, $src:expr) => {
        if $src.is_some() {
            $dst = $src;
        }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let v: Value = serde_json::from_str(text).map_err(|e| ConfigError(format!("bad JSON: {e}")))?;
        let Value::Object(map) = v else {
            return err("top level must be an object");
        };
        let mut c = RunConfig::default();
        let mut res: Vec<Resolution> = Vec::new();
        for (k, v) in &map {
            match k.as_str() {
                "case" => c.case = Some(string(k, v)?),
                "degree" => c.over.degree = Some(uint(k, v)?),
                "n" => res.push(Resolution::Cells(uint(k, v)?)),
                "grid" => {
                    let (nx, ny) = parse_grid(&string(k, v)?).map_err(ConfigError)?;
                    res.push(Resolution::Grid(nx, ny));
                }
                "mesh" => res.push(Resolution::File(PathBuf::from(string(k, v)?))),
                "cfl" => c.over.cfl = Some(float(k, v)?),
                "tol" => c.over.tol = Some(toggle(k, v)?),
                "eps_d" => c.over.eps_d = Some(toggle(k, v)?),
                "v_max" => c.over.v_max = Some(toggle(k, v)?),
                "tvb_m" => c.over.tvb_m = Some(float(k, v)?),
                "t_final" => c.over.t_final = Some(float(k, v)?),
                "hard_bound" => {
                    c.over.hard_bound = Some(
                        v.as_bool()
                            .ok_or_else(|| ConfigError(format!("{k} must be a boolean")))?,
                    )
                }
                "algorithm" => {
                    c.over.algorithm = Some(
                        AlgorithmArg::from_str(&string(k, v)?, true).map_err(|e| ConfigError(format!("{k}: {e}")))?,
                    )
                }
                "out" => c.out = Some(PathBuf::from(string(k, v)?)),
                "format" => {
                    c.format =
                        Some(Format::from_str(&string(k, v)?, true).map_err(|e| ConfigError(format!("{k}: {e}")))?)
                }
                "every" => c.every = Some(uint(k, v)?),
                "seed" => c.seed = Some(uint(k, v)? as u64),
                "threads" => c.threads = Some(uint(k, v)?),
                _ => return err(format!("unknown key `{k}`")),
            }
        }
        if res.len() > 1 {
            return err("give only one of n, grid and mesh");
        }
        c.resolution = res.pop();
        Ok(c)
    }

    /// `other` wins wherever it sets a value.
    pub fn merge(mut self, other: RunConfig) -> Self {
        take!(self.case, other.case);
        take!(self.resolution, other.resolution);
        take!(self.out, other.out);
        take!(self.format, other.format);
        take!(self.every, other.every);
        take!(self.seed, other.seed);
        take!(self.threads, other.threads);
        let (a, b) = (&mut self.over, other.over);
        take!(a.degree, b.degree);
        take!(a.cfl, b.cfl);
        take!(a.tol, b.tol);
        take!(a.eps_d, b.eps_d);
        take!(a.v_max, b.v_max);
        take!(a.tvb_m, b.tvb_m);
        take!(a.t_final, b.t_final);
        take!(a.algorithm, b.algorithm);
        take!(a.hard_bound, b.hard_bound);
        self
    }

    /// The named case with every override applied and validated.
    pub fn spec(&self) -> Result<CaseSpec, ConfigError> {
        let name = self
            .case
            .as_deref()
            .ok_or_else(|| ConfigError("no case given".into()))?;
        let mut s = make_case(name).map_err(|e| ConfigError(e.to_string()))?;
        apply(&mut s, &self.over);
        if let Some(r) = &self.resolution {
            s.resolution = r.clone();
        }
        s.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(s)
    }
}

pub fn apply(s: &mut CaseSpec, o: &Overrides) {
    if let Some(k) = o.degree {
        s.degree = k;
    }
    if let Some(c) = o.cfl {
        s.cfl = c;
    }
    if let Some(t) = o.tol {
        s.limiter.tol = t.0;
    }
    if let Some(t) = o.eps_d {
        s.limiter.eps_d = t.0;
    }
    if let Some(t) = o.v_max {
        s.limiter.v_max = t.0;
    }
    if let Some(m) = o.tvb_m {
        s.limiter.tvb_m = m;
    }
    if let Some(t) = o.t_final {
        s.t_final = t;
    }
    if let Some(a) = o.algorithm {
        s.algorithm = a.into();
    }
}

fn string(k: &str, v: &Value) -> Result<String, ConfigError> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| ConfigError(format!("{k} must be a string")))
}

fn uint(k: &str, v: &Value) -> Result<usize, ConfigError> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| ConfigError(format!("{k} must be a non-negative integer")))
}

fn float(k: &str, v: &Value) -> Result<f64, ConfigError> {
    v.as_f64().ok_or_else(|| ConfigError(format!("{k} must be a number")))
}

fn toggle(k: &str, v: &Value) -> Result<Toggle, ConfigError> {
    match v {
        Value::Null => Ok(Toggle(None)),
        Value::String(s) => s.parse().map_err(|e| ConfigError(format!("{k}: {e}"))),
        _ => float(k, v).map(|x| Toggle(Some(x))),
    }
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(v))
}

/// Every resolved case parameter, as written to manifests and `describe --json`.
pub fn spec_json(s: &CaseSpec) -> Value {
    let l = &s.limiter;
    let mut m = Map::new();
    m.insert("case".into(), json!(s.name));
    m.insert("title".into(), json!(s.title));
    m.insert("dim".into(), json!(s.dim));
    m.insert(
        "domain".into(),
        json!(if s.dim == 1 {
            s.domain[..2].to_vec()
        } else {
            s.domain.to_vec()
        }),
    );
    m.insert("boundaries".into(), json!(format!("{:?}", s.sides)));
    m.insert("g".into(), json!(s.g));
    m.insert("t_final".into(), json!(s.t_final));
    m.insert("output_times".into(), json!(s.output_times));
    m.insert("discontinuous_bottom".into(), json!(s.bottom_discontinuous));
    m.insert("algorithm".into(), json!(s.algorithm.to_string()));
    m.insert("degree".into(), json!(s.degree));
    m.insert("resolution".into(), json!(s.resolution.to_string()));
    m.insert("cfl".into(), json!(s.cfl));
    m.insert("tol".into(), opt(l.tol));
    m.insert("tvb_m".into(), json!(l.tvb_m));
    m.insert("eps_d".into(), opt(l.eps_d));
    m.insert("v_max".into(), opt(l.v_max));
    m.insert("nu".into(), json!(l.nu));
    m.insert("study".into(), json!(s.study));
    m.insert("notes".into(), json!(s.notes));
    Value::Object(m)
}
