use std::fmt::Write as _;

use crate::autodiff::AdamConfig;
use crate::error::{EitError, Result};

/// Loss weights, constants and optimizer settings of the inverse network.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseConfig {
    /// Weight of the mean squared PDE residual.
    pub alpha: f64,
    /// Weight of the top-T mean absolute PDE residual.
    pub beta: f64,
    pub top_t: usize,
    /// Weight of the Neumann residual.
    pub gamma: f64,
    /// Weight of `Σ w²` over network weights.
    pub rho: f64,
    /// Weight of the smoothed total variation.
    pub lambda: f64,
    /// Weight of the hinge term.
    pub mu: f64,
    /// TV smoothing constant.
    pub xi: f64,
    pub iterations: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub boundary_sigma_star: f64,
    pub hinge_threshold: f64,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            alpha: 0.01,
            beta: 0.01,
            top_t: 40,
            gamma: 1.5,
            rho: 1e-6,
            lambda: 1.0,
            mu: 8.0,
            xi: 1e-4,
            iterations: 8000,
            adam: AdamConfig::default(),
            seed: 0,
            boundary_sigma_star: 1.0,
            hinge_threshold: 1.0,
        }
    }
}

const KEYS: &[&str] = &[
    "alpha",
    "beta",
    "top_t",
    "gamma",
    "rho",
    "lambda",
    "mu",
    "xi",
    "iterations",
    "lr",
    "beta1",
    "beta2",
    "eps_adam",
    "decay_every",
    "decay_factor",
    "seed",
    "sigma_star",
    "hinge_threshold",
];

impl InverseConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("rho", self.rho),
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("hinge_threshold", self.hinge_threshold),
        ];
        for (name, w) in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(EitError::InvalidConfig(format!("{name} must be a finite value >= 0, got {w}")));
            }
        }
        if self.top_t < 1 {
            return Err(EitError::InvalidConfig("top_t must be at least 1".into()));
        }
        if !(self.xi > 0.0) {
            return Err(EitError::InvalidConfig(format!("xi must be > 0, got {}", self.xi)));
        }
        if !(self.boundary_sigma_star > 0.0) {
            return Err(EitError::InvalidConfig("sigma_star must be > 0".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(EitError::InvalidConfig("lr must be > 0".into()));
        }
        Ok(())
    }

    /// Sets one `key = value` entry. Returns `Ok(false)` for keys this
    /// config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| EitError::InvalidConfig(format!("cannot parse {key} = {value}")))
        }
        match key {
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "top_t" => self.top_t = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "rho" => self.rho = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "mu" => self.mu = num(key, value)?,
            "xi" => self.xi = num(key, value)?,
            "iterations" => self.iterations = num(key, value)?,
            "lr" => self.adam.lr = num(key, value)?,
            "beta1" => self.adam.beta1 = num(key, value)?,
            "beta2" => self.adam.beta2 = num(key, value)?,
            "eps_adam" => self.adam.eps = num(key, value)?,
            "decay_every" => self.adam.decay_every = num(key, value)?,
            "decay_factor" => self.adam.decay_factor = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "sigma_star" => self.boundary_sigma_star = num(key, value)?,
            "hinge_threshold" => self.hinge_threshold = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    /// Canonical `key = value` lines in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let a = &self.adam;
        let vals: [String; 18] = [
            self.alpha.to_string(),
            self.beta.to_string(),
            self.top_t.to_string(),
            self.gamma.to_string(),
            self.rho.to_string(),
            self.lambda.to_string(),
            self.mu.to_string(),
            self.xi.to_string(),
            self.iterations.to_string(),
            a.lr.to_string(),
            a.beta1.to_string(),
            a.beta2.to_string(),
            a.eps.to_string(),
            a.decay_every.to_string(),
            a.decay_factor.to_string(),
            self.seed.to_string(),
            self.boundary_sigma_star.to_string(),
            self.hinge_threshold.to_string(),
        ];
        for (k, v) in KEYS.iter().zip(vals) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are an
    /// error.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = InverseConfig::default();
        for (key, value) in parse_kv(text)? {
            if !c.set(&key, &value)? {
                return Err(EitError::InvalidConfig(format!("unknown key {key}")));
            }
        }
        c.validate()?;
        Ok(c)
    }
}

/// Splits a `key = value` text into trimmed pairs.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| EitError::InvalidConfig(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
