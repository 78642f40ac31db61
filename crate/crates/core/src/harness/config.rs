use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "livarot")]
    Livarot,
    #[serde(rename = "ucrl-mnl-ol")]
    UcrlMnlOl,
    /// Plays the optimal policy; a zero-regret reference.
    #[serde(rename = "oracle")]
    Oracle,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Livarot => "livarot",
            Algo::UcrlMnlOl => "ucrl-mnl-ol",
            Algo::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "livarot" => Ok(Algo::Livarot),
            "ucrl-mnl-ol" => Ok(Algo::UcrlMnlOl),
            "oracle" => Ok(Algo::Oracle),
            _ => Err(Error::invalid(format!(
                "unknown algorithm '{s}' (expected livarot, ucrl-mnl-ol or oracle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstanceKind {
    #[serde(rename = "hard")]
    Hard,
    #[serde(rename = "kl-robust")]
    KlRobust,
    #[serde(rename = "random")]
    Random,
}

impl fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InstanceKind::Hard => "hard",
            InstanceKind::KlRobust => "kl-robust",
            InstanceKind::Random => "random",
        })
    }
}

impl FromStr for InstanceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(InstanceKind::Hard),
            "kl-robust" => Ok(InstanceKind::KlRobust),
            "random" => Ok(InstanceKind::Random),
            _ => Err(Error::invalid(format!(
                "unknown instance '{s}' (expected hard, kl-robust or random)"
            ))),
        }
    }
}

/// Parses `7`, `0..9` (inclusive) or a comma list of either.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim) {
        let bad = || Error::invalid(format!("bad seed specification '{part}'"));
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
            if hi < lo {
                return Err(bad());
            }
            seeds.extend(lo..=hi);
        } else {
            seeds.push(part.parse().map_err(|_| bad())?);
        }
    }
    Ok(seeds)
}

/// Parses `5` or `5,10,20`.
pub fn parse_horizons(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad horizon '{p}'")))
        })
        .collect()
}

/// Seeds in a JSON config: a list, a single integer or a range string.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    One(u64),
    Text(String),
}

impl SeedSpec {
    pub fn resolve(&self) -> Result<Vec<u64>> {
        match self {
            SeedSpec::List(v) => Ok(v.clone()),
            SeedSpec::One(s) => Ok(vec![*s]),
            SeedSpec::Text(t) => parse_seeds(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub algo: Algo,
    pub instance: InstanceKind,
    pub d: usize,
    #[serde(rename = "H")]
    pub horizons: Vec<usize>,
    #[serde(rename = "T")]
    pub episodes: usize,
    pub tau: usize,
    pub lambda0: f64,
    pub lambda: f64,
    pub eta_omd: f64,
    pub beta_scale: f64,
    pub delta: f64,
    pub seeds: Vec<u64>,
    pub fw_iters: usize,
    /// Dual variable of the KL-robust instance.
    pub eta: f64,
    /// Sizes of the `random` and `kl-robust` instances.
    pub num_states: usize,
    pub num_actions: usize,
    /// Parameter-norm bound of the `random` instance.
    pub param_bound: f64,
    /// Hard instance: draw the sign pattern separately for each stage
    /// (default) instead of sharing one across stages.
    pub per_stage_resample: bool,
    /// Fill `wall_ms`; off by default so that output bytes are reproducible.
    pub record_timing: bool,
    /// Diagnostic checkpoint period in episodes; 0 disables.
    pub diagnostics_every: usize,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

impl RunConfig {
    /// Experiment defaults for `algo` on the hard instance with `d = 2`,
    /// `H = 5`, `T = 1000` and a single seed.
    pub fn defaults_for(algo: Algo) -> Self {
        let (lambda, eta_omd, beta_scale) = match algo {
            Algo::UcrlMnlOl => (10.0, 10.0, 0.02),
            _ => (10.0, 20.0, 0.01),
        };
        Self {
            algo,
            instance: InstanceKind::Hard,
            d: 2,
            horizons: vec![5],
            episodes: 1000,
            tau: 80,
            lambda0: 1.0,
            lambda,
            eta_omd,
            beta_scale,
            delta: 0.1,
            seeds: vec![0],
            fw_iters: 30,
            eta: 1.0,
            num_states: 4,
            num_actions: 2,
            param_bound: 1.0,
            per_stage_resample: true,
            record_timing: false,
            diagnostics_every: 0,
            out: None,
            summary: None,
        }
    }

    /// Exploration episodes actually played.
    pub fn exploration_episodes(&self) -> usize {
        match self.algo {
            Algo::Livarot => self.tau,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("seed list is empty"));
        }
        if self.horizons.is_empty() {
            return Err(Error::invalid("horizon list is empty"));
        }
        if self.episodes == 0 {
            return Err(Error::invalid("T must be positive"));
        }
        if self.algo == Algo::Livarot && self.episodes <= self.tau {
            return Err(Error::invalid(format!(
                "T = {} must exceed tau = {}",
                self.episodes, self.tau
            )));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid("delta must lie in (0, 1]"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be positive"));
        }
        for (name, v) in [
            ("lambda0", self.lambda0),
            ("eta_omd", self.eta_omd),
            ("beta_scale", self.beta_scale),
            ("eta", self.eta),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and non-negative")));
            }
        }
        if self.fw_iters == 0 {
            return Err(Error::invalid("fw_iters must be positive"));
        }
        match self.instance {
            InstanceKind::Hard => {
                if !(2..=21).contains(&self.d) {
                    return Err(Error::invalid("hard instance requires 2 <= d <= 21"));
                }
                if let Some(h) = self.horizons.iter().find(|&&h| h < 3) {
                    return Err(Error::invalid(format!("hard instance requires H >= 3, got {h}")));
                }
            }
            InstanceKind::Random => {
                if self.d == 0 || self.num_states == 0 || self.num_actions == 0 {
                    return Err(Error::invalid("random instance needs positive d, num_states, num_actions"));
                }
                if !(self.param_bound > 0.0) || !self.param_bound.is_finite() {
                    return Err(Error::invalid("param_bound must be positive"));
                }
            }
            InstanceKind::KlRobust => {
                if self.num_states == 0 || self.num_actions == 0 {
                    return Err(Error::invalid("kl-robust instance needs positive num_states, num_actions"));
                }
            }
        }
        if self.horizons.contains(&0) {
            return Err(Error::invalid("horizons must be positive"));
        }
        Ok(())
    }
}

/// Partial configuration; every present field replaces the current value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub algo: Option<Algo>,
    pub instance: Option<InstanceKind>,
    pub d: Option<usize>,
    #[serde(rename = "H")]
    pub horizons: Option<Vec<usize>>,
    #[serde(rename = "T")]
    pub episodes: Option<usize>,
    pub tau: Option<usize>,
    pub lambda0: Option<f64>,
    pub lambda: Option<f64>,
    pub eta_omd: Option<f64>,
    pub beta_scale: Option<f64>,
    pub delta: Option<f64>,
    pub seeds: Option<SeedSpec>,
    pub fw_iters: Option<usize>,
    pub eta: Option<f64>,
    pub num_states: Option<usize>,
    pub num_actions: Option<usize>,
    pub param_bound: Option<f64>,
    pub per_stage_resample: Option<bool>,
    pub record_timing: Option<bool>,
    pub diagnostics_every: Option<usize>,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

impl ConfigOverrides {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        set!(algo, instance, d, horizons, episodes, tau, lambda0, lambda, eta_omd, beta_scale, delta);
        set!(fw_iters, eta, num_states, num_actions, param_bound, per_stage_resample, record_timing);
        set!(diagnostics_every);
        if let Some(s) = &self.seeds {
            cfg.seeds = s.resolve()?;
        }
        if let Some(p) = &self.out {
            cfg.out = Some(p.clone());
        }
        if let Some(p) = &self.summary {
            cfg.summary = Some(p.clone());
        }
        Ok(())
    }

    /// Defaults for the chosen algorithm with `self` applied on top.
    pub fn resolve(&self, fallback_algo: Algo) -> Result<RunConfig> {
        let mut cfg = RunConfig::defaults_for(self.algo.unwrap_or(fallback_algo));
        self.apply(&mut cfg)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_parse() {
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_seeds("1,5..6").unwrap(), vec![1, 5, 6]);
        assert!(parse_seeds("4..2").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn json_overrides() {
        let o = ConfigOverrides::from_json(r#"{"algo":"ucrl-mnl-ol","H":[5,10],"seeds":"0..1","T":50}"#).unwrap();
        let cfg = o.resolve(Algo::Livarot).unwrap();
        assert_eq!(cfg.algo, Algo::UcrlMnlOl);
        assert_eq!(cfg.beta_scale, 0.02);
        assert_eq!(cfg.horizons, vec![5, 10]);
        assert_eq!(cfg.seeds, vec![0, 1]);
        cfg.validate().unwrap();
        assert!(ConfigOverrides::from_json(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::defaults_for(Algo::Livarot);
        cfg.validate().unwrap();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::defaults_for(Algo::Livarot);
        cfg.episodes = 80;
        assert!(cfg.validate().is_err());
        cfg.algo = Algo::UcrlMnlOl;
        cfg.validate().unwrap();
        cfg.delta = 0.0;
        assert!(cfg.validate().is_err());
    }
}
