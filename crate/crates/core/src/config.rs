//! Session configuration and its validation.
//!
//! The on-disk form is TOML whose keys mirror the field names below
//! (the simplex cap is spelled `B`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionConfig;
use crate::error::{ConfigViolation, Error, Result};
use crate::surrogate::SamplerConfig;

/// Which stage-1 samples survive into the polishing stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RetainMode {
    /// Support contained in the extracted pattern.
    #[default]
    Subset,
    /// Support equal to the extracted pattern.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub n: usize,
    #[serde(rename = "B")]
    pub cap: f64,
    pub tau: f64,
    pub lambda: f64,
    pub q: usize,
    pub k: usize,
    pub m_past: usize,
    pub t1: usize,
    pub t2: usize,
    pub n_init: usize,
    pub raw_samples: usize,
    pub restarts: usize,
    pub sigma_pref: f64,
    pub seed: u64,
    pub mc_base_samples: usize,
    /// Fold the stage-2 re-initialization into the first stage-2 batch so the
    /// session renders exactly `n_init + (t1 + t2) * q` images.
    pub strict_budget: bool,
    pub retain: RetainMode,
    pub reinit_samples: usize,
    pub warmup: usize,
    pub posterior_samples: usize,
    pub thinning: usize,
    pub max_tree_depth: usize,
    pub ascent_iters: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n: 20,
            cap: 2.0,
            tau: 0.1,
            lambda: 9.0,
            q: 8,
            k: 5,
            m_past: 2,
            t1: 10,
            t2: 10,
            n_init: 5,
            raw_samples: 1024,
            restarts: 20,
            sigma_pref: 1.0,
            seed: 0,
            mc_base_samples: 128,
            strict_budget: true,
            retain: RetainMode::Subset,
            reinit_samples: 5,
            warmup: 80,
            posterior_samples: 80,
            thinning: 5,
            max_tree_depth: 6,
            ascent_iters: 200,
        }
    }
}

impl SessionConfig {
    /// Number of images shown per round: new batch, current top-1, past samples.
    pub fn display_count(&self) -> usize {
        self.q + 1 + self.m_past
    }

    /// Renders consumed by a complete session.
    pub fn render_budget(&self) -> usize {
        let base = self.n_init + (self.t1 + self.t2) * self.q;
        if self.strict_budget {
            base
        } else {
            base + self.reinit_samples
        }
    }

    pub fn violations(&self) -> Vec<ConfigViolation> {
        let mut v = Vec::new();
        let mut push = |field: &'static str, message: String| v.push(ConfigViolation { field, message });
        if self.n == 0 {
            push("n", "n must be at least 1".into());
        }
        if !(self.cap > 0.0 && self.cap.is_finite()) {
            push("B", format!("B = {} must be positive and finite", self.cap));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            push("tau", format!("tau out of (0,1): {}", self.tau));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            push("lambda", format!("lambda = {} must be >= 0", self.lambda));
        }
        if self.q == 0 {
            push("q", "q must be at least 1".into());
        }
        if self.k == 0 {
            push("k", "k must be at least 1".into());
        }
        let display = self.display_count();
        if self.k > display {
            push("k", format!("k exceeds display count: k = {} > N = {display}", self.k));
        }
        if self.q > display {
            push("q", format!("q = {} exceeds display count N = {display}", self.q));
        }
        if self.t1 == 0 {
            push("t1", "t1 must be at least 1".into());
        }
        if self.t2 == 0 {
            push("t2", "t2 must be at least 1".into());
        }
        if self.n_init == 0 {
            push("n_init", "n_init must be at least 1".into());
        }
        if self.restarts == 0 {
            push("restarts", "restarts must be at least 1".into());
        }
        if self.raw_samples < self.restarts {
            push(
                "raw_samples",
                format!(
                    "raw_samples = {} must be >= restarts = {}",
                    self.raw_samples, self.restarts
                ),
            );
        }
        if !(self.sigma_pref > 0.0 && self.sigma_pref.is_finite()) {
            push("sigma_pref", format!("sigma_pref = {} must be > 0", self.sigma_pref));
        }
        if self.mc_base_samples == 0 {
            push("mc_base_samples", "mc_base_samples must be at least 1".into());
        }
        if self.reinit_samples == 0 {
            push("reinit_samples", "reinit_samples must be at least 1".into());
        }
        if self.posterior_samples == 0 {
            push("posterior_samples", "posterior_samples must be at least 1".into());
        }
        if self.thinning == 0 || self.thinning > self.posterior_samples.max(1) {
            push(
                "thinning",
                format!("thinning = {} must be in [1, posterior_samples]", self.thinning),
            );
        }
        if self.max_tree_depth == 0 || self.max_tree_depth > 12 {
            push("max_tree_depth", "max_tree_depth must be in [1, 12]".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }

    pub fn acquisition(&self) -> AcquisitionConfig {
        AcquisitionConfig {
            lambda: self.lambda,
            q: self.q,
            raw_samples: self.raw_samples,
            restarts: self.restarts,
            mc_base_samples: self.mc_base_samples,
            max_iters: self.ascent_iters,
            ..AcquisitionConfig::default()
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            warmup: self.warmup,
            samples: self.posterior_samples,
            thinning: self.thinning,
            max_tree_depth: self.max_tree_depth,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::ConfigFile(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}
