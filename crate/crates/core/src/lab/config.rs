//! Flat `key=value` experiment configuration, typed reading with error
//! collection, and manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{LabError, Result};
use crate::graph::Limits;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Spectrum,
    Ids,
    Sausage,
    Survival,
    EnlargeCheck,
    Fit,
    Selftest,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Spectrum,
        Command::Ids,
        Command::Sausage,
        Command::Survival,
        Command::EnlargeCheck,
        Command::Fit,
        Command::Selftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Ids => "ids",
            Command::Sausage => "sausage",
            Command::Survival => "survival",
            Command::EnlargeCheck => "enlarge-check",
            Command::Fit => "fit",
            Command::Selftest => "selftest",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::Spectrum => "Eigenvalues of the stable or Brownian generator, optionally killed on obstacles",
            Command::Ids => "Cloud-averaged Laplace transform and integrated density of states",
            Command::Sausage => "Monte Carlo stable sausage functional E exp(-nu mu(sausage))",
            Command::Survival => "Quenched and annealed survival among obstacles, survival vs trace",
            Command::EnlargeCheck => "Good/bad classification and the enlargement eigenvalue inequality",
            Command::Fit => "Stretched-exponential fit, lower-bound certificate, sandwich and Lifschitz slope",
            Command::Selftest => "Invariant suite at reduced sizes",
        }
    }

    pub fn keys(self) -> Vec<Key> {
        let mut keys: Vec<Key> = match self {
            Command::Spectrum => vec![
                ALPHA,
                key("M", "0", "blowup level of G^(M)"),
                key("m", "2", "graph depth (cell side 2^(M-m))"),
                key("pad", "0", "extra blowup levels of the ambient used for the stable generator"),
                key("nu", "0", "obstacle intensity"),
                A,
                M_S,
                SEED,
                key("boundary", "none", "none | exterior (kill the two attachment corners of G^(M))"),
                key("operator", "stable", "stable | brownian"),
                key("count", "all", "number of smallest eigenvalues to report, or all"),
            ],
            Command::Ids => vec![
                ALPHA,
                key("M", "3", "blowup level of G^(M)"),
                key("m", "5", "graph depth"),
                key("pad", "2", "extra blowup levels of the ambient"),
                key("nu", "1", "obstacle intensity"),
                A,
                M_S,
                key("n_clouds", "200", "number of clouds"),
                SEED,
                key("t_grid", "geom:1:256:17", "times: comma list or geom:lo:hi:n"),
                key("estimator", "stratified", "stratified (by center count) | plain"),
            ],
            Command::Sausage => vec![
                ALPHA,
                key("M", "3", "blowup level of G^(M)"),
                key("m", "6", "graph depth"),
                key("nu", "1", "obstacle intensity"),
                key("a", "0.25", "obstacle radius (at least two graph cells)"),
                M_S,
                X0,
                key("t_grid", "geom:1:64:7", "times: comma list or geom:lo:hi:n"),
                N_PATHS,
                SEED,
                DT,
                key("refine", "true", "rerun at dt/2 and report the change of the mean volume"),
            ],
            Command::Survival => vec![
                ALPHA,
                key("M", "2", "blowup level of G^(M)"),
                key("m", "5", "graph depth"),
                key("pad", "1", "extra blowup levels for the survival/trace comparison"),
                key("nu", "1", "obstacle intensity"),
                key("a", "0.25", "obstacle radius (at least two graph cells)"),
                M_S,
                X0,
                key("t_grid", "geom:0.25:16:7", "times: comma list or geom:lo:hi:n"),
                N_PATHS,
                SEED,
                DT,
                key("kill_exterior", "true", "kill the quenched walk at the attachment corners"),
                key("n_clouds", "20", "clouds for the survival/trace comparison (0 skips it)"),
            ],
            Command::EnlargeCheck => vec![
                ALPHA,
                key("M", "0", "blowup level of the graph"),
                key("m", "5", "graph depth"),
                key("nu", "20", "obstacle intensity"),
                key("a", "1", "obstacle radius in units of eps"),
                M_S,
                SEED,
                key("R", "4", "scale ratio R > 3"),
                key("b", "4", "enlargement factor (balls of radius b eps)"),
                key("delta", "0.1", "eigenvalue slack"),
                key("kappa", "auto", "doubling constant, or auto to estimate it"),
                key("R0", "0.5", "largest admissible scale"),
                key("K", "50", "eigenvalue cutoff"),
                key("eps", "0.04,0.02,0.01", "comma list of eps values"),
            ],
            Command::Fit => vec![
                key("input", "laplace.csv", "Laplace curve CSV written by ids"),
                key("ids_input", "none", "IDS CSV written by ids, or none"),
                key("gamma", "auto", "time exponent, auto = d_f/d_alpha"),
                key("lambda_bm_depth", "6", "finest depth of the Brownian eigenvalue extrapolation"),
                key("cvol_depth", "3", "deepest cells T of G^(0) in the volume constant"),
                key("var_depth", "5", "graph depth of the variational problem"),
                key("var_cells", "2", "cell depth of the variational candidates"),
                key("var_restarts", "4", "random restarts of the variational search"),
                SEED,
                key("lifschitz_max_cdf", "0.1", "upper end of the tail window: largest E l([0,lambda])"),
            ],
            Command::Selftest => vec![
                SEED,
                key("perturb", "false", "inject a 1% error into the 5^m renormalization"),
            ],
        };
        keys.extend([
            key("max_blowup", "env", "guardrail override for M"),
            key("max_depth", "env", "guardrail override for m"),
            key("max_dim", "env", "guardrail override for dense dimensions"),
        ]);
        keys
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| LabError::Parse(format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

const ALPHA: Key = key("alpha", "1", "stability index in (0,2)");
const A: Key = key("a", "0.125", "obstacle radius");
const M_S: Key = key("m_s", "auto", "depth of the cells carrying obstacle centers, or auto");
const SEED: Key = key("seed", "1", "master seed");
const X0: Key = key("x0", "0,0", "start vertex as lattice coordinates i,j");
const N_PATHS: Key = key("n_paths", "2000", "Monte Carlo paths");
const DT: Key = key("dt", "auto", "subordinator grid step, auto = horizon/1024 (sausage: horizon/16384)");

/// Parameters of one run. Keys are fixed per command; values are kept as
/// text so that manifests reproduce them verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    values: BTreeMap<String, String>,
    unknown: Vec<String>,
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| LabError::Parse(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        let values = command.keys().iter().map(|k| (k.name.to_string(), k.default.to_string())).collect();
        Self { command, values, unknown: Vec::new() }
    }

    /// Rebuilds a config from a manifest written by [`Self::manifest`].
    pub fn from_manifest(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let command = pairs
            .iter()
            .find(|(k, _)| k == "command")
            .ok_or_else(|| LabError::Parse("manifest lacks command=".into()))?
            .1
            .parse()?;
        let mut cfg = Self::new(command);
        cfg.apply(pairs.into_iter().filter(|(k, _)| k != "command" && k != "version" && !k.starts_with("derived.")));
        Ok(cfg)
    }

    /// Sets keys; unknown names are remembered and reported by validation.
    pub fn apply(&mut self, pairs: impl IntoIterator<Item = (String, String)>) {
        for (k, v) in pairs {
            if let Some(slot) = self.values.get_mut(&k) {
                *slot = v;
            } else {
                self.unknown.push(k);
            }
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// Replaces a value (used to record resolved `auto` settings).
    pub fn resolve(&mut self, key: &str, value: impl ToString) {
        if let Some(slot) = self.values.get_mut(key) {
            *slot = value.to_string();
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn reader(&self) -> Reader<'_> {
        let errors = self.unknown.iter().map(|k| format!("{k}: unknown key for {}", self.command)).collect();
        Reader { cfg: self, errors }
    }

    /// `key=value` text with the command, version and derived seeds.
    pub fn manifest(&self, derived: &[(String, String)]) -> String {
        let mut s = format!("# gasket-lab run manifest\ncommand={}\nversion={VERSION}\n", self.command);
        for (k, v) in self.pairs() {
            s.push_str(&format!("{k}={v}\n"));
        }
        for (k, v) in derived {
            s.push_str(&format!("derived.{k}={v}\n"));
        }
        s
    }

    /// One-line description used as the first row of every CSV.
    pub fn header(&self) -> String {
        let mut s = format!("# gasket-lab {VERSION} command={}", self.command);
        for (k, v) in self.pairs() {
            s.push_str(&format!(" {k}={v}"));
        }
        s
    }
}

/// Typed access that collects every problem instead of stopping at the
/// first one.
pub struct Reader<'c> {
    cfg: &'c ExperimentConfig,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn parse<T: FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let raw = self.cfg.get(key);
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("{key}: expected {what}, got {raw:?}"));
                None
            }
        }
    }

    pub fn f64(&mut self, key: &str) -> f64 {
        match self.parse::<f64>(key, "a number") {
            Some(v) if v.is_finite() => v,
            Some(v) => {
                self.errors.push(format!("{key}: must be finite, got {v}"));
                f64::NAN
            }
            None => f64::NAN,
        }
    }

    pub fn u32(&mut self, key: &str) -> u32 {
        self.parse(key, "a nonnegative integer").unwrap_or(0)
    }

    pub fn u64(&mut self, key: &str) -> u64 {
        self.parse(key, "a nonnegative integer").unwrap_or(0)
    }

    pub fn usize(&mut self, key: &str) -> usize {
        self.parse(key, "a nonnegative integer").unwrap_or(0)
    }

    pub fn bool(&mut self, key: &str) -> bool {
        self.parse(key, "true or false").unwrap_or(false)
    }

    pub fn text(&mut self, key: &str) -> String {
        self.cfg.get(key).to_string()
    }

    /// `None` for `auto`.
    pub fn auto_u32(&mut self, key: &str) -> Option<u32> {
        if self.cfg.get(key) == "auto" {
            None
        } else {
            Some(self.u32(key))
        }
    }

    pub fn auto_f64(&mut self, key: &str) -> Option<f64> {
        if self.cfg.get(key) == "auto" {
            None
        } else {
            Some(self.f64(key))
        }
    }

    pub fn choice(&mut self, key: &str, options: &[&str]) -> String {
        let v = self.cfg.get(key);
        if !options.contains(&v) {
            self.errors.push(format!("{key}: expected one of {}, got {v:?}", options.join("|")));
        }
        v.to_string()
    }

    pub fn list(&mut self, key: &str) -> Vec<f64> {
        let raw = self.cfg.get(key).to_string();
        match parse_grid(&raw) {
            Ok(v) if !v.is_empty() => v,
            Ok(_) => {
                self.errors.push(format!("{key}: empty list"));
                Vec::new()
            }
            Err(e) => {
                self.errors.push(format!("{key}: {e}"));
                Vec::new()
            }
        }
    }

    /// Lattice coordinates `i,j`.
    pub fn lattice(&mut self, key: &str) -> (i64, i64) {
        let raw = self.cfg.get(key);
        let parsed = raw.split_once(',').and_then(|(i, j)| Some((i.trim().parse().ok()?, j.trim().parse().ok()?)));
        parsed.unwrap_or_else(|| {
            self.errors.push(format!("{key}: expected lattice coordinates i,j, got {raw:?}"));
            (0, 0)
        })
    }

    pub fn limits(&mut self) -> Limits {
        let mut l = Limits::from_env();
        if let Some(v) = self.env_override("max_blowup") {
            l.max_blowup = v as u32;
        }
        if let Some(v) = self.env_override("max_depth") {
            l.max_depth = v as u32;
        }
        if let Some(v) = self.env_override("max_dim") {
            l.max_dense_dim = v;
        }
        l
    }

    fn env_override(&mut self, key: &str) -> Option<usize> {
        if self.cfg.get(key) == "env" {
            None
        } else {
            Some(self.usize(key))
        }
    }

    pub fn check(&mut self, ok: bool, key: &str, msg: impl fmt::Display) {
        if !ok {
            self.errors.push(format!("{key}: {msg}"));
        }
    }

    /// Validation error listing every offending field.
    pub fn finish(self) -> Result<()> {
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(LabError::Validation(self.errors))
        }
    }
}

/// Comma list, or `geom:lo:hi:n` for `n` geometrically spaced points.
pub fn parse_grid(raw: &str) -> std::result::Result<Vec<f64>, String> {
    if let Some(rest) = raw.strip_prefix("geom:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected geom:lo:hi:n, got {raw:?}"));
        }
        let lo: f64 = parts[0].parse().map_err(|_| format!("bad lower end in {raw:?}"))?;
        let hi: f64 = parts[1].parse().map_err(|_| format!("bad upper end in {raw:?}"))?;
        let n: usize = parts[2].parse().map_err(|_| format!("bad count in {raw:?}"))?;
        if !(lo > 0.0 && hi >= lo && n >= 1) {
            return Err(format!("need 0 < lo <= hi and n >= 1 in {raw:?}"));
        }
        if n == 1 {
            return Ok(vec![lo]);
        }
        return Ok((0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect());
    }
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad number {s:?}")))
        .collect()
}
