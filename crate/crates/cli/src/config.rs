//! TOML run configuration. Every table is optional; unknown keys are errors.

use std::path::Path;

use anyhow::{bail, Context, Result};
use kohnlab::model::{BasisSet, Potential, RadialProblem};
use kohnlab::scanner::{KGrid, ScanSpec};
use kohnlab::verify::{Suite, Tolerances, VerifyOptions};
use serde::Deserialize;

pub const SEED_ENV: &str = "KOHNLAB_SEED";
const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub potential: Option<Potential>,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub norm: f64,
    pub beta: Option<f64>,
    pub r_max: f64,
    pub n_quad: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            norm: 1.0,
            beta: None,
            r_max: RadialProblem::DEFAULT_R_MAX,
            n_quad: RadialProblem::DEFAULT_N_QUAD,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    /// Size of the default family; ignored when explicit lists are given.
    pub m: Option<usize>,
    pub powers: Option<Vec<u32>>,
    pub exponents: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub count: usize,
    pub tau_count: usize,
    pub checks: Vec<Suite>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        let s = ScanSpec::default();
        Self {
            k_min: s.k_grid.k_min,
            k_max: s.k_grid.k_max,
            count: s.k_grid.count,
            tau_count: s.tau_count,
            checks: s.checks,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub ks: Vec<f64>,
    pub suites: Vec<Suite>,
    pub tau_samples: usize,
    pub slope_points: usize,
    pub random_matrices: usize,
    pub tolerances: Tolerances,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let o = VerifyOptions::default();
        Self {
            ks: o.ks,
            suites: Suite::ALL.to_vec(),
            tau_samples: o.tau_samples,
            slope_points: o.slope_points,
            random_matrices: o.random_matrices,
            tolerances: o.tolerances,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// `KOHNLAB_SEED` wins over the file, which wins over the built-in seed.
    pub fn seed(&self) -> Result<u64> {
        match std::env::var(SEED_ENV) {
            Ok(s) => s
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned integer")),
            Err(std::env::VarError::NotPresent) => Ok(self.seed.unwrap_or(DEFAULT_SEED)),
            Err(e) => bail!("{SEED_ENV}: {e}"),
        }
    }

    pub fn problem(&self, k: f64) -> Result<RadialProblem> {
        let potential = self.potential.unwrap_or(Potential::SquareWell { depth: 1.0, radius: 1.0 });
        let p = RadialProblem {
            potential,
            k,
            norm: self.problem.norm,
            beta: self.problem.beta,
            r_max: self.problem.r_max,
            n_quad: self.problem.n_quad,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn basis(&self) -> Result<BasisSet> {
        let b = &self.basis;
        match (&b.powers, &b.exponents) {
            (Some(p), Some(e)) => {
                if b.m.is_some() {
                    bail!("basis: give either `m` or `powers`/`exponents`, not both");
                }
                Ok(BasisSet::from_lists(p, e)?)
            }
            (None, None) => Ok(BasisSet::default_family(b.m.unwrap_or(8))?),
            _ => bail!("basis: `powers` and `exponents` must be given together"),
        }
    }

    pub fn scan_spec(&self) -> Result<ScanSpec> {
        let s = &self.scan;
        let spec = ScanSpec {
            k_grid: KGrid {
                k_min: s.k_min,
                k_max: s.k_max,
                count: s.count,
            },
            tau_count: s.tau_count,
            seed: self.seed()?,
            checks: s.checks.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn verify_options(&self) -> Result<VerifyOptions> {
        let v = &self.verify;
        v.tolerances.validate().map_err(anyhow::Error::msg)?;
        if v.ks.is_empty() || v.ks.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            bail!("verify.ks must be a non-empty list of positive wavenumbers");
        }
        Ok(VerifyOptions {
            ks: v.ks.clone(),
            tau_samples: v.tau_samples,
            slope_points: v.slope_points,
            random_matrices: v.random_matrices,
            seed: self.seed()?,
            tolerances: v.tolerances,
        })
    }
}
