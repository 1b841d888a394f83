use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::CommandError;

/// Experiment parameters. Every field is optional so that a config file and
/// command-line flags can be layered; JSON keys match the flag names.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub p: Option<f64>,
    pub dim: Option<usize>,
    pub radius: Option<u64>,
    pub grid_n: Option<usize>,
    pub grid_l: Option<f64>,
    pub decay_a: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub tolerance_scale: Option<f64>,
    pub plan: Option<PathBuf>,
    pub shift: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CommandError> {
        serde_json::from_str(text).map_err(|e| CommandError::Malformed(format!("config: {e}")))
    }

    /// Fields set in `flags` win over fields set here.
    pub fn overlay(self, flags: Self) -> Self {
        Self {
            p: flags.p.or(self.p),
            dim: flags.dim.or(self.dim),
            radius: flags.radius.or(self.radius),
            grid_n: flags.grid_n.or(self.grid_n),
            grid_l: flags.grid_l.or(self.grid_l),
            decay_a: flags.decay_a.or(self.decay_a),
            seed: flags.seed.or(self.seed),
            trials: flags.trials.or(self.trials),
            out: flags.out.or(self.out),
            tolerance_scale: flags.tolerance_scale.or(self.tolerance_scale),
            plan: flags.plan.or(self.plan),
            shift: flags.shift.or(self.shift),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn tolerance_scale(&self) -> Result<f64, CommandError> {
        let t = self.tolerance_scale.unwrap_or(1.0);
        if !(t.is_finite() && t > 0.0) {
            return Err(CommandError::Invalid(format!("--tolerance-scale must be positive, got {t}")));
        }
        Ok(t)
    }

    pub fn p(&self, default: f64) -> Result<f64, CommandError> {
        let p = self.p.unwrap_or(default);
        if !(p.is_finite() && p > 2.0) {
            return Err(CommandError::Invalid(format!(
                "--p must be a finite number greater than 2 (the frame exists only for p > 2), got {p}"
            )));
        }
        Ok(p)
    }

    pub fn dim(&self) -> Result<usize, CommandError> {
        match self.dim.unwrap_or(1) {
            d @ 1..=4 => Ok(d),
            d => Err(CommandError::Invalid(format!("--dim must be in 1..=4, got {d}"))),
        }
    }

    pub fn radius(&self, default: u64) -> Result<u64, CommandError> {
        match self.radius.unwrap_or(default) {
            r @ 0..=8 => Ok(r),
            r => Err(CommandError::Invalid(format!("--radius must be at most 8, got {r}"))),
        }
    }

    pub fn grid_n(&self, default: usize) -> Result<usize, CommandError> {
        let n = self.grid_n.unwrap_or(default);
        if !(8..=1024).contains(&n) || !n.is_power_of_two() {
            return Err(CommandError::Invalid(format!(
                "--grid-n must be a power of two between 8 and 1024, got {n}"
            )));
        }
        Ok(n)
    }

    pub fn grid_l(&self) -> Result<f64, CommandError> {
        let l = self.grid_l.unwrap_or(8.0);
        if !(l.is_finite() && l > 0.0) {
            return Err(CommandError::Invalid(format!("--grid-l must be positive, got {l}")));
        }
        Ok(l)
    }

    pub fn decay_a(&self) -> Result<f64, CommandError> {
        let a = self.decay_a.unwrap_or(0.5);
        if !(a > 0.0 && a < 1.0) {
            return Err(CommandError::Invalid(format!("--decay-a must lie in (0, 1), got {a}")));
        }
        Ok(a)
    }

    pub fn trials(&self, default: usize) -> Result<usize, CommandError> {
        match self.trials.unwrap_or(default) {
            t @ 0..=10_000 => Ok(t),
            t => Err(CommandError::Invalid(format!("--trials must be at most 10000, got {t}"))),
        }
    }

    /// `X,W` as two numbers.
    pub fn shift(&self) -> Result<Option<(f64, f64)>, CommandError> {
        let Some(text) = &self.shift else {
            return Ok(None);
        };
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let parsed: Vec<f64> = parts.iter().filter_map(|s| s.parse().ok()).collect();
        if parts.len() != 2 || parsed.len() != 2 || !parsed.iter().all(|v| v.is_finite()) {
            return Err(CommandError::Malformed(format!("--shift expects X,W, got `{text}`")));
        }
        Ok(Some((parsed[0], parsed[1])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = ExperimentConfig::from_json(r#"{"p": 6, "seed": 3, "grid-n": 64}"#).unwrap();
        let flags = ExperimentConfig {
            p: Some(4.0),
            ..Default::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.p, Some(4.0));
        assert_eq!(merged.seed, Some(3));
        assert_eq!(merged.grid_n, Some(64));
    }

    #[test]
    fn unknown_keys_are_malformed() {
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"q": 1}"#),
            Err(CommandError::Malformed(_))
        ));
    }

    #[test]
    fn validation() {
        let c = |p| ExperimentConfig {
            p: Some(p),
            ..Default::default()
        };
        assert!(c(2.0).p(4.0).is_err());
        assert!(c(2.5).p(4.0).is_ok());
        let shift = ExperimentConfig {
            shift: Some("0.5, -1".into()),
            ..Default::default()
        };
        assert_eq!(shift.shift().unwrap(), Some((0.5, -1.0)));
        let bad = ExperimentConfig {
            shift: Some("0.5".into()),
            ..Default::default()
        };
        assert!(bad.shift().is_err());
    }
}
