//! Flat `key=value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use harmonia_core::Error;

/// Rejects bad configuration input as a usage error.
macro_rules! invalid {
    ($($arg:tt)*) => {
        return Err(Error::Config(format!($($arg)*)).into())
    };
}

/// Directory used when neither the config nor the CLI names one.
pub const OUT_ENV: &str = "HARMONIA_OUT";

/// One exponent configuration: the target `p` and an `n x n` matrix of
/// slot exponents. Written `p:a,b;c,d` with `inf` for infinity.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentSet {
    pub p: f64,
    pub rows: Vec<Vec<f64>>,
}

fn parse_exp(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        v => v.parse::<f64>().with_context(|| format!("bad exponent '{v}'")),
    }
}

fn fmt_exp(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

impl FromStr for ExponentSet {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (p, rest) = s.split_once(':').ok_or_else(|| Error::Config(format!("exponent set '{s}' lacks 'p:'")))?;
        let rows = rest
            .split(';')
            .map(|row| row.split(',').map(parse_exp).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            invalid!("exponent matrix in '{s}' is not square");
        }
        Ok(Self { p: parse_exp(p)?, rows })
    }
}

impl fmt::Display for ExponentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self.rows.iter().map(|r| r.iter().map(|v| fmt_exp(*v)).collect::<Vec<_>>().join(",")).collect();
        write!(f, "{}:{}", fmt_exp(self.p), rows.join(";"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub suite: String,
    pub dim: usize,
    pub depth: u32,
    pub gamma: f64,
    pub q: f64,
    pub sigma: f64,
    pub t: f64,
    pub s: f64,
    pub mu: Vec<usize>,
    /// Empty means the suite's built-in exponent sets.
    pub exponents: Vec<ExponentSet>,
    pub trials: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            suite: String::new(),
            dim: 1,
            depth: 8,
            gamma: 0.5,
            q: 2.0,
            sigma: 2.0,
            t: 1.0,
            s: 1.0,
            mu: vec![0, 2, 4],
            exponents: Vec::new(),
            trials: 100,
            seed: 7,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let num = |v: &str| v.parse::<f64>().with_context(|| format!("{key}: '{v}' is not a number"));
        match key.trim() {
            "suite" => self.suite = v.to_string(),
            "d" | "dim" => self.dim = v.parse().with_context(|| format!("{key}: '{v}'"))?,
            "J" | "grid-J" | "depth" => self.depth = v.parse().with_context(|| format!("{key}: '{v}'"))?,
            "gamma" => self.gamma = num(v)?,
            "q" => self.q = parse_exp(v)?,
            "sigma" => self.sigma = num(v)?,
            "t" => self.t = parse_exp(v)?,
            "s" => self.s = num(v)?,
            "mu" => {
                self.mu = v
                    .split(',')
                    .map(|m| m.trim().parse::<usize>().with_context(|| format!("mu: '{m}'")))
                    .collect::<Result<_>>()?
            }
            "exponents" => {
                self.exponents = v.split_whitespace().map(ExponentSet::from_str).collect::<Result<_>>()?;
            }
            "trials" => self.trials = v.parse().with_context(|| format!("trials: '{v}'"))?,
            "seed" => self.seed = v.parse().with_context(|| format!("seed: '{v}'"))?,
            "out" => self.out = Some(PathBuf::from(v)),
            other => invalid!("unknown config key '{other}'"),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key=value", no + 1)))?;
            cfg.set(k, v).with_context(|| format!("line {}", no + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    /// Output directory: explicit setting, then the environment, then `./out/<suite>`.
    pub fn out_dir(&self) -> PathBuf {
        if let Some(p) = &self.out {
            return p.clone();
        }
        let base = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
        base.join(&self.suite)
    }

    /// Constraints shared by every suite.
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            invalid!("d = {} must be 1 or 2", self.dim);
        }
        if !(4..=12).contains(&self.depth) {
            invalid!("J = {} must lie in [4, 12]", self.depth);
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            invalid!("gamma = {} must lie in (0, 1)", self.gamma);
        }
        if !(self.q > 0.0) {
            invalid!("q = {} must be positive", self.q);
        }
        if !(self.t > 0.0) || !(self.sigma > 0.0) {
            invalid!("sigma and t must be positive");
        }
        if self.trials == 0 {
            invalid!("trials must be at least 1");
        }
        if self.mu.iter().any(|&m| m as u32 > self.depth) {
            invalid!("every mu must be at most J = {}", self.depth);
        }
        Ok(())
    }

    /// Canonical `key=value` rendering, echoed into the summary.
    pub fn render(&self) -> String {
        let mu: Vec<String> = self.mu.iter().map(|m| m.to_string()).collect();
        let ex: Vec<String> = self.exponents.iter().map(|e| e.to_string()).collect();
        format!(
            "suite={}\nd={}\nJ={}\ngamma={}\nq={}\nsigma={}\nt={}\ns={}\nmu={}\nexponents={}\ntrials={}\nseed={}\n",
            self.suite,
            self.dim,
            self.depth,
            self.gamma,
            fmt_exp(self.q),
            self.sigma,
            fmt_exp(self.t),
            self.s,
            mu.join(","),
            ex.join(" "),
            self.trials,
            self.seed
        )
    }
}
