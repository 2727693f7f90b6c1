//! Experiment configuration: a flat `key = value` document with `[section]`
//! headers, per-experiment presets, and a canonical serialization.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::bounds::format_f64;
use crate::error::{Error, Result};
use crate::model::{NoiseConfig, SystemParams, TaskSampler};
use crate::numerics::Mat;
use crate::online::ProjectionNorm;

pub const EXPERIMENTS: [&str; 9] = [
    "fig-gap-vs-D",
    "fig-gap-vs-dim",
    "fig-gap-vs-L",
    "fig-adapt-vs-D",
    "fig-adapt-vs-M",
    "fig-lse-vs-meta",
    "fig-harmonic",
    "fig-weighting",
    "bounds-report",
];

pub const DEFAULT_EXPERIMENT: &str = "fig-gap-vs-D";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    Uniform,
    Harmonic,
    Fixed,
}

impl SamplerKind {
    fn name(self) -> &'static str {
        match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::Harmonic => "harmonic",
            SamplerKind::Fixed => "fixed",
        }
    }
}

/// How tasks are drawn. `params` holds one row-major `[A | B]` entry list per
/// listed task and is only used by the harmonic and fixed kinds.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub lo: f64,
    pub hi: f64,
    /// `None` means reject unstable draws only when `n >= 2`.
    pub reject_unstable: Option<bool>,
    pub params: Vec<Vec<f64>>,
}

impl SamplerSpec {
    /// Builds the sampler for state dimension `n` and input dimension `m`.
    pub fn build(&self, n: usize, m: usize) -> Result<TaskSampler> {
        let sampler = match self.kind {
            SamplerKind::Uniform => {
                let mut s = TaskSampler::uniform(n, m, self.lo, self.hi);
                if let (Some(flag), TaskSampler::IidUniform { reject_unstable, .. }) = (self.reject_unstable, &mut s) {
                    *reject_unstable = flag;
                }
                s
            }
            SamplerKind::Harmonic => TaskSampler::HarmonicSwitch(self.task_list(n, m)?),
            SamplerKind::Fixed => TaskSampler::FixedList(self.task_list(n, m)?),
        };
        sampler.validate()?;
        Ok(sampler)
    }

    fn task_list(&self, n: usize, m: usize) -> Result<Vec<SystemParams>> {
        if self.params.is_empty() {
            return Err(Error::Config(format!("sampler kind `{}` needs `params`", self.kind.name())));
        }
        self.params
            .iter()
            .map(|entries| {
                if entries.len() != n * (n + m) {
                    return Err(Error::Config(format!(
                        "sampler params entry has {} numbers, n = {n}, m = {m} needs {}",
                        entries.len(),
                        n * (n + m)
                    )));
                }
                let a = Mat::from_fn(n, n, |i, j| entries[i * (n + m) + j]);
                let b = Mat::from_fn(n, m, |i, j| entries[i * (n + m) + n + j]);
                SystemParams::new(a, b)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptSpec {
    pub alpha: Vec<f64>,
    /// `None` selects the default radius derived from the task set.
    pub c_phi: Option<f64>,
    pub c_z: Option<f64>,
    pub tolerance: f64,
    pub projection: ProjectionNorm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsSpec {
    pub k: usize,
    pub p: f64,
    pub delta: f64,
    pub envelope_samples: usize,
    pub trials: usize,
    pub bmsb_trials: usize,
    /// Online adaptation steps used for the mean-square error bound.
    pub steps: usize,
    /// `None` uses the midpoint between the closed-loop radius and one.
    pub rho: Option<f64>,
    /// Row-major `m x n` feedback gain; `None` uses the LQR gain of the target task.
    pub gain: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub repetitions: usize,
    pub test_blocks: usize,
    pub output: PathBuf,
    pub d_list: Vec<usize>,
    pub horizon: usize,
    pub l_list: Vec<usize>,
    pub m_list: Vec<usize>,
    pub train_split: usize,
    pub dims: Vec<(usize, usize)>,
    pub perturbations: Vec<f64>,
    pub noise: NoiseConfig,
    pub sampler: SamplerSpec,
    pub meta_alpha: f64,
    pub adapt: AdaptSpec,
    pub bounds: BoundsSpec,
}

const KEYS: [(&str, &[&str]); 7] = [
    ("experiment", &["name", "seed", "repetitions", "test_blocks", "output"]),
    ("data", &["D", "L", "L_list", "M", "train_split", "dims", "perturbations"]),
    ("noise", &["sigma_a2", "sigma_w2"]),
    ("sampler", &["kind", "lo", "hi", "reject_unstable", "params"]),
    ("meta", &["alpha"]),
    ("adapt", &["alpha", "c_phi", "c_z", "tolerance", "projection"]),
    ("bounds", &["k", "p", "delta", "envelope_samples", "trials", "bmsb_trials", "steps", "rho", "gain"]),
];

impl ExperimentConfig {
    /// Defaults for a named experiment. The base values follow the standard
    /// offline setup; individual experiments override what they need.
    pub fn preset(name: &str) -> Result<Self> {
        if !EXPERIMENTS.contains(&name) {
            return Err(Error::Config(format!("unknown experiment `{name}`")));
        }
        let mut c = ExperimentConfig {
            name: name.to_string(),
            seed: 0,
            repetitions: 1,
            test_blocks: 50,
            output: PathBuf::from("results"),
            d_list: vec![10, 50, 100, 200, 300],
            horizon: 20,
            l_list: vec![12, 20, 40, 80],
            m_list: vec![5, 10],
            train_split: 10,
            dims: vec![(1, 1)],
            perturbations: vec![0.0],
            noise: NoiseConfig {
                sigma_a2: 0.1,
                sigma_w2: 0.01,
            },
            sampler: SamplerSpec {
                kind: SamplerKind::Uniform,
                lo: 0.5,
                hi: 1.0,
                reject_unstable: None,
                params: Vec::new(),
            },
            meta_alpha: 0.01,
            adapt: AdaptSpec {
                alpha: vec![0.01],
                c_phi: None,
                c_z: None,
                tolerance: 0.05,
                projection: ProjectionNorm::Frobenius,
            },
            bounds: BoundsSpec {
                k: 2,
                p: 0.15,
                delta: 0.1,
                envelope_samples: 1000,
                trials: 200,
                bmsb_trials: 4000,
                steps: 20,
                rho: None,
                gain: None,
            },
        };
        if name.starts_with("fig-gap-") {
            // One dataset draw is too noisy to resolve the trend in D.
            c.repetitions = 20;
        }
        match name {
            "fig-gap-vs-dim" => {
                c.dims = vec![(1, 1), (2, 1), (2, 2), (3, 2)];
                c.horizon = 12;
                c.m_list = vec![5];
                // Elementwise [0.5, 1] matrices with n >= 2 are never stable.
                c.sampler.reject_unstable = Some(false);
            }
            "fig-adapt-vs-D" => c.m_list = vec![5, 10, 15],
            "fig-adapt-vs-M" => {
                c.d_list = vec![300];
                c.m_list = vec![1, 5, 10, 15];
                c.adapt.alpha = vec![0.01, 0.05, 0.1];
            }
            "fig-lse-vs-meta" => {
                c.d_list = vec![300];
                c.m_list = vec![1, 2, 3, 4, 5];
                c.perturbations = vec![0.0, 0.1, 0.2, 0.5];
                c.noise = NoiseConfig {
                    sigma_a2: 1.0,
                    sigma_w2: 1.0,
                };
            }
            "fig-harmonic" => {
                c.d_list = vec![300];
                c.horizon = 50;
                c.m_list = vec![20];
                c.test_blocks = 100;
                c.noise = NoiseConfig {
                    sigma_a2: 1.0,
                    sigma_w2: 1e-4,
                };
                c.sampler.kind = SamplerKind::Harmonic;
                c.sampler.params = vec![vec![0.5, 0.7], vec![0.8, 0.8]];
                c.adapt.alpha = vec![0.2];
            }
            "fig-weighting" => {
                c.d_list = vec![20];
                c.m_list = vec![5];
                c.noise.sigma_w2 = 0.0;
            }
            "bounds-report" => {
                c.d_list = vec![800];
                c.horizon = 1001;
                c.m_list = vec![1];
                c.train_split = 1;
                c.noise = NoiseConfig {
                    sigma_a2: 1.0,
                    sigma_w2: 0.8,
                };
                c.sampler.lo = 0.3;
                c.sampler.hi = 0.5;
                c.meta_alpha = 1e-3;
                c.adapt.alpha = vec![0.05];
            }
            _ => {}
        }
        Ok(c)
    }

    /// State and input dimensions used by experiments that do not sweep them.
    pub fn primary_dims(&self) -> (usize, usize) {
        self.dims[0]
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = [
            ("D", self.d_list.is_empty()),
            ("L_list", self.l_list.is_empty()),
            ("M", self.m_list.is_empty()),
            ("dims", self.dims.is_empty()),
            ("perturbations", self.perturbations.is_empty()),
            ("adapt.alpha", self.adapt.alpha.is_empty()),
        ];
        for (key, empty) in nonempty {
            if empty {
                return Err(Error::Config(format!("`{key}` must list at least one value")));
            }
        }
        if self.repetitions == 0 || self.test_blocks == 0 {
            return Err(Error::Config("repetitions and test_blocks must be >= 1".into()));
        }
        if self.d_list.contains(&0) {
            return Err(Error::Config("every D must be >= 1".into()));
        }
        for &(n, _) in &self.dims {
            if n == 0 {
                return Err(Error::Config("state dimension must be >= 1".into()));
            }
        }
        // Only the horizons an experiment actually uses are checked.
        let (horizons, splits): (Vec<usize>, Vec<usize>) = if self.name == "fig-gap-vs-L" {
            (self.l_list.clone(), self.m_list.clone())
        } else {
            (vec![self.horizon], self.m_list.iter().copied().chain([self.train_split]).collect())
        };
        for l in horizons {
            for &m in &splits {
                if m == 0 || m >= l {
                    return Err(Error::Config(format!(
                        "constraint 1 <= M < L violated: M = {m}, L = {l}"
                    )));
                }
            }
        }
        NoiseConfig::new(self.noise.sigma_a2, self.noise.sigma_w2)
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.sampler.lo <= self.sampler.hi) {
            return Err(Error::Config(format!(
                "sampler bounds need lo <= hi, got {} and {}",
                self.sampler.lo, self.sampler.hi
            )));
        }
        if self.sampler.kind != SamplerKind::Uniform {
            let (n, m) = self.primary_dims();
            self.sampler.build(n, m).map_err(|e| Error::Config(e.to_string()))?;
        }
        if !(self.meta_alpha >= 0.0) || self.adapt.alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config("learning rates must be >= 0".into()));
        }
        for (key, r) in [("c_phi", self.adapt.c_phi), ("c_z", self.adapt.c_z)] {
            if matches!(r, Some(v) if !(v > 0.0)) {
                return Err(Error::Config(format!("`{key}` must be > 0")));
            }
        }
        let b = &self.bounds;
        if b.k == 0 || !(b.p > 0.0 && b.p <= 1.0) || !(b.delta > 0.0 && b.delta < 1.0) {
            return Err(Error::Config("bounds need k >= 1, p in (0, 1], delta in (0, 1)".into()));
        }
        if b.envelope_samples == 0 || b.trials == 0 {
            return Err(Error::Config("bounds sample counts must be >= 1".into()));
        }
        if let Some(g) = &b.gain {
            let (n, m) = self.primary_dims();
            if g.len() != n * m {
                return Err(Error::Config(format!("gain needs {} entries, got {}", n * m, g.len())));
            }
        }
        if matches!(b.rho, Some(r) if !(r > 0.0 && r < 1.0)) {
            return Err(Error::Config("rho must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Canonical document: every key, fixed order, shortest round-trip floats.
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        let mut section = |name: &str, pairs: Vec<(&str, String)>| {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "[{name}]");
            for (k, v) in pairs {
                let _ = writeln!(out, "{k} = {v}");
            }
        };
        section(
            "experiment",
            vec![
                ("name", self.name.clone()),
                ("seed", self.seed.to_string()),
                ("repetitions", self.repetitions.to_string()),
                ("test_blocks", self.test_blocks.to_string()),
                ("output", self.output.display().to_string()),
            ],
        );
        section(
            "data",
            vec![
                ("D", join(&self.d_list, |v| v.to_string())),
                ("L", self.horizon.to_string()),
                ("L_list", join(&self.l_list, |v| v.to_string())),
                ("M", join(&self.m_list, |v| v.to_string())),
                ("train_split", self.train_split.to_string()),
                ("dims", join(&self.dims, |(n, m)| format!("{n}x{m}"))),
                ("perturbations", join(&self.perturbations, |v| format_f64(*v))),
            ],
        );
        section(
            "noise",
            vec![
                ("sigma_a2", format_f64(self.noise.sigma_a2)),
                ("sigma_w2", format_f64(self.noise.sigma_w2)),
            ],
        );
        let s = &self.sampler;
        section(
            "sampler",
            vec![
                ("kind", s.kind.name().to_string()),
                ("lo", format_f64(s.lo)),
                ("hi", format_f64(s.hi)),
                ("reject_unstable", s.reject_unstable.map_or("auto".into(), |b| b.to_string())),
                (
                    "params",
                    s.params
                        .iter()
                        .map(|e| join(e, |v| format_f64(*v)))
                        .collect::<Vec<_>>()
                        .join("; "),
                ),
            ],
        );
        section("meta", vec![("alpha", format_f64(self.meta_alpha))]);
        let a = &self.adapt;
        section(
            "adapt",
            vec![
                ("alpha", join(&a.alpha, |v| format_f64(*v))),
                ("c_phi", auto_f64(a.c_phi)),
                ("c_z", auto_f64(a.c_z)),
                ("tolerance", format_f64(a.tolerance)),
                (
                    "projection",
                    match a.projection {
                        ProjectionNorm::Frobenius => "frobenius".into(),
                        ProjectionNorm::Spectral => "spectral".into(),
                    },
                ),
            ],
        );
        let b = &self.bounds;
        section(
            "bounds",
            vec![
                ("k", b.k.to_string()),
                ("p", format_f64(b.p)),
                ("delta", format_f64(b.delta)),
                ("envelope_samples", b.envelope_samples.to_string()),
                ("trials", b.trials.to_string()),
                ("bmsb_trials", b.bmsb_trials.to_string()),
                ("steps", b.steps.to_string()),
                ("rho", auto_f64(b.rho)),
                ("gain", b.gain.as_ref().map_or("auto".into(), |g| join(g, |v| format_f64(*v)))),
            ],
        );
        out
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

fn auto_f64(v: Option<f64>) -> String {
    v.map_or("auto".into(), format_f64)
}

fn section_of(key: &str) -> Vec<&'static str> {
    KEYS.iter().filter(|(_, keys)| keys.contains(&key)).map(|(s, _)| *s).collect()
}

/// Splits a document into `(section, key) -> value`, rejecting unknown keys.
fn tokenize(text: &str) -> Result<BTreeMap<(String, String), (usize, String)>> {
    let mut out = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {lineno}: malformed section header `{line}`")))?
                .trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(Error::Config(format!("line {lineno}: unknown section `[{name}]`")));
            }
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {lineno}: expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let section = match &current {
            Some(s) => {
                if !section_of(key).contains(&s.as_str()) {
                    return Err(Error::Config(format!("line {lineno}: unknown key `{key}` in [{s}]")));
                }
                s.clone()
            }
            None => match section_of(key).as_slice() {
                [] => return Err(Error::Config(format!("line {lineno}: unknown key `{key}`"))),
                [s] => s.to_string(),
                _ => {
                    return Err(Error::Config(format!(
                        "line {lineno}: key `{key}` is ambiguous outside a section"
                    )))
                }
            },
        };
        if out.insert((section.clone(), key.to_string()), (lineno, value.to_string())).is_some() {
            return Err(Error::Config(format!("line {lineno}: duplicate key `{key}` in [{section}]")));
        }
    }
    Ok(out)
}

fn bad(lineno: usize, key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("line {lineno}: `{key} = {value}`: expected {what}"))
}

fn num<T: std::str::FromStr>(lineno: usize, key: &str, v: &str, what: &str) -> Result<T> {
    v.parse().map_err(|_| bad(lineno, key, v, what))
}

fn list<T: std::str::FromStr>(lineno: usize, key: &str, v: &str, what: &str) -> Result<Vec<T>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| num(lineno, key, s.trim(), what)).collect()
}

fn opt_f64(lineno: usize, key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        num(lineno, key, v, "a number or `auto`").map(Some)
    }
}

/// Parses a configuration document. Missing keys take the preset values of
/// the named experiment, which defaults to `fig-gap-vs-D`.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_for(text, None)
}

/// As [`parse_config`], with the experiment name taken from `name` when given.
pub fn parse_config_for(text: &str, name: Option<&str>) -> Result<ExperimentConfig> {
    let entries = tokenize(text)?;
    let doc_name = entries
        .get(&("experiment".to_string(), "name".to_string()))
        .map(|(_, v)| v.as_str());
    let mut c = ExperimentConfig::preset(name.or(doc_name).unwrap_or(DEFAULT_EXPERIMENT))?;
    for ((section, key), (ln, v)) in &entries {
        let (ln, k, v) = (*ln, key.as_str(), v.as_str());
        match (section.as_str(), k) {
            ("experiment", "name") => {}
            ("experiment", "seed") => c.seed = num(ln, k, v, "an unsigned integer")?,
            ("experiment", "repetitions") => c.repetitions = num(ln, k, v, "an integer")?,
            ("experiment", "test_blocks") => c.test_blocks = num(ln, k, v, "an integer")?,
            ("experiment", "output") => c.output = PathBuf::from(v),
            ("data", "D") => c.d_list = list(ln, k, v, "a list of integers")?,
            ("data", "L") => c.horizon = num(ln, k, v, "an integer")?,
            ("data", "L_list") => c.l_list = list(ln, k, v, "a list of integers")?,
            ("data", "M") => c.m_list = list(ln, k, v, "a list of integers")?,
            ("data", "train_split") => c.train_split = num(ln, k, v, "an integer")?,
            ("data", "dims") => {
                c.dims = v
                    .split(',')
                    .map(|d| {
                        let (n, m) = d.trim().split_once('x').ok_or_else(|| bad(ln, k, v, "entries like `2x1`"))?;
                        Ok((num(ln, k, n.trim(), "entries like `2x1`")?, num(ln, k, m.trim(), "entries like `2x1`")?))
                    })
                    .collect::<Result<_>>()?
            }
            ("data", "perturbations") => c.perturbations = list(ln, k, v, "a list of numbers")?,
            ("noise", "sigma_a2") => c.noise.sigma_a2 = num(ln, k, v, "a number")?,
            ("noise", "sigma_w2") => c.noise.sigma_w2 = num(ln, k, v, "a number")?,
            ("sampler", "kind") => {
                c.sampler.kind = match v {
                    "uniform" => SamplerKind::Uniform,
                    "harmonic" => SamplerKind::Harmonic,
                    "fixed" => SamplerKind::Fixed,
                    _ => return Err(bad(ln, k, v, "`uniform`, `harmonic` or `fixed`")),
                }
            }
            ("sampler", "lo") => c.sampler.lo = num(ln, k, v, "a number")?,
            ("sampler", "hi") => c.sampler.hi = num(ln, k, v, "a number")?,
            ("sampler", "reject_unstable") => {
                c.sampler.reject_unstable = match v {
                    "auto" => None,
                    "true" => Some(true),
                    "false" => Some(false),
                    _ => return Err(bad(ln, k, v, "`auto`, `true` or `false`")),
                }
            }
            ("sampler", "params") => {
                c.sampler.params = v
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|e| list(ln, k, e, "`;`-separated lists of numbers"))
                    .collect::<Result<_>>()?
            }
            ("meta", "alpha") => c.meta_alpha = num(ln, k, v, "a number")?,
            ("adapt", "alpha") => c.adapt.alpha = list(ln, k, v, "a list of numbers")?,
            ("adapt", "c_phi") => c.adapt.c_phi = opt_f64(ln, k, v)?,
            ("adapt", "c_z") => c.adapt.c_z = opt_f64(ln, k, v)?,
            ("adapt", "tolerance") => c.adapt.tolerance = num(ln, k, v, "a number")?,
            ("adapt", "projection") => {
                c.adapt.projection = match v {
                    "frobenius" => ProjectionNorm::Frobenius,
                    "spectral" => ProjectionNorm::Spectral,
                    _ => return Err(bad(ln, k, v, "`frobenius` or `spectral`")),
                }
            }
            ("bounds", "k") => c.bounds.k = num(ln, k, v, "an integer")?,
            ("bounds", "p") => c.bounds.p = num(ln, k, v, "a number")?,
            ("bounds", "delta") => c.bounds.delta = num(ln, k, v, "a number")?,
            ("bounds", "envelope_samples") => c.bounds.envelope_samples = num(ln, k, v, "an integer")?,
            ("bounds", "trials") => c.bounds.trials = num(ln, k, v, "an integer")?,
            ("bounds", "bmsb_trials") => c.bounds.bmsb_trials = num(ln, k, v, "an integer")?,
            ("bounds", "steps") => c.bounds.steps = num(ln, k, v, "an integer")?,
            ("bounds", "rho") => c.bounds.rho = opt_f64(ln, k, v)?,
            ("bounds", "gain") => {
                c.bounds.gain = if v == "auto" { None } else { Some(list(ln, k, v, "a list of numbers")?) }
            }
            _ => unreachable!("tokenize admits only known keys"),
        }
    }
    c.validate()?;
    Ok(c)
}
