use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Chart resolution, tolerances and seed shared by every suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    /// Grid spacing Δ in Klein coordinates. Second-order checks also run at Δ/2.
    pub grid: f64,
    /// Klein-disc margin kept free of nodes.
    pub margin: f64,
    /// Radius of the excluded disc about a cone tip.
    pub eps_tip: f64,
    /// Tolerance for algebraic identities.
    pub tol_alg: f64,
    /// Relative tolerance for global quadratures.
    pub tol_global: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { grid: 1.0 / 64.0, margin: 0.2, eps_tip: 1e-4, tol_alg: 1e-12, tol_global: 1e-2, seed: 1, out: PathBuf::from("report") }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [("grid", self.grid), ("margin", self.margin), ("eps_tip", self.eps_tip), ("tol_alg", self.tol_alg), ("tol_global", self.tol_global)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.grid > 0.125 {
            return Err(CliError::Config(format!("grid spacing {} is coarser than 1/8", self.grid)));
        }
        if self.grid < 1.0 / 512.0 {
            return Err(CliError::Config(format!("grid spacing {} is finer than 1/512", self.grid)));
        }
        if self.margin >= 0.5 {
            return Err(CliError::Config(format!("margin {} leaves no chart", self.margin)));
        }
        if self.eps_tip > 1e-2 {
            return Err(CliError::Config(format!("eps_tip {} is not near the tip", self.eps_tip)));
        }
        if self.eps_tip < 1e-8 {
            return Err(CliError::Config(format!("eps_tip {} is below the resolvable range", self.eps_tip)));
        }
        if self.tol_global >= 1.0 || self.tol_alg >= 1.0 {
            return Err(CliError::Config("tolerances must be below 1".into()));
        }
        Ok(())
    }

    /// Parses and validates a JSON config; missing fields take defaults.
    pub fn from_json(s: &str) -> Result<Self, CliError> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        if !value.is_object() {
            return Err(CliError::Config("config must be a JSON object".into()));
        }
        let cfg: Self = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `1/64`, `0.015625` or `1e-2`.
pub fn parse_spacing(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            let d: f64 = d.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            n / d
        }
        None => s.trim().parse().map_err(|e| format!("{s}: {e}"))?,
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{s}: not a positive spacing"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SuiteConfig::default().validate().unwrap();
    }

    #[test]
    fn json_fills_defaults_and_rejects_unknown() {
        let c = SuiteConfig::from_json(r#"{"grid": 0.0078125, "seed": 9}"#).unwrap();
        assert_eq!(c.grid, 1.0 / 128.0);
        assert_eq!(c.seed, 9);
        assert_eq!(c.margin, 0.2);
        assert!(SuiteConfig::from_json(r#"{"grids": 0.01}"#).is_err());
        assert!(SuiteConfig::from_json(r#"{"tol_alg": -1}"#).is_err());
        assert!(SuiteConfig::from_json(r#"{"grid": 0.5}"#).is_err());
        assert!(SuiteConfig::from_json("[]").is_err());
    }

    #[test]
    fn spacing_forms() {
        assert_eq!(parse_spacing("1/64").unwrap(), 1.0 / 64.0);
        assert_eq!(parse_spacing("0.5").unwrap(), 0.5);
        assert!(parse_spacing("1/0").is_err());
        assert!(parse_spacing("-1").is_err());
        assert!(parse_spacing("x").is_err());
    }
}
