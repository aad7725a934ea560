//! Run manifests: a TOML file naming the kernel, placement rule and search
//! settings. Command-line flags override individual fields.

use std::fs;
use std::path::{Path, PathBuf};

use precis::explore::Objective;
use precis::fpcore::Width;
use precis::scope::{RuleKind, ScopeId};
use precis::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "PRECIS_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Nsga2,
    Exhaustive,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nsga2" => Ok(Mode::Nsga2),
            "exhaustive" => Ok(Mode::Exhaustive),
            _ => Err(Error::Config(format!("unknown mode `{s}` (expected nsga2 or exhaustive)"))),
        }
    }
}

/// Every field is optional; unset fields fall back to kernel and search
/// defaults when the manifest is resolved.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub kernel: Option<String>,
    pub width: Option<Width>,
    pub rule: Option<RuleKind>,
    pub targets: Option<Vec<ScopeId>>,
    pub genome: Option<Vec<u32>>,
    pub mode: Option<Mode>,
    pub alphabet: Option<Vec<u32>>,
    pub population: Option<usize>,
    pub generations: Option<usize>,
    pub budget: Option<usize>,
    pub crossover_rate: Option<f64>,
    pub mutation_rate: Option<f64>,
    pub stall_generations: Option<usize>,
    pub objective: Option<Objective>,
    pub seed: Option<u64>,
    pub input_size: Option<usize>,
    pub train: Option<usize>,
    pub test: Option<usize>,
    pub epi_table: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Fields set in `other` replace ours.
    pub fn overlay(self, other: RunManifest) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            kernel,
            width,
            rule,
            targets,
            genome,
            mode,
            alphabet,
            population,
            generations,
            budget,
            crossover_rate,
            mutation_rate,
            stall_generations,
            objective,
            seed,
            input_size,
            train,
            test,
            epi_table,
            output_dir
        )
    }

    /// Flag or manifest seed, then the environment, then zero.
    pub fn resolved_seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => {
                v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV} is not an unsigned integer: `{v}`")))
            }
            Err(_) => Ok(0),
        }
    }
}

/// The search space an explore run used, saved next to its CSVs so later
/// commands can rebuild configurations from genome strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceRecord {
    pub kernel: String,
    pub rule_kind: RuleKind,
    pub width: Width,
    pub targets: Vec<ScopeId>,
    pub alphabet: Vec<u32>,
}

pub const SPACE_FILE: &str = "space.toml";

impl SpaceRecord {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(SPACE_FILE), toml::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(toml::from_str(&fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let m = RunManifest {
            kernel: Some("radar".into()),
            width: Some(Width::Single),
            rule: Some(RuleKind::Fcs),
            targets: Some(vec!["lpf".into(), "pc".into()]),
            genome: Some(vec![8, 24]),
            mode: Some(Mode::Exhaustive),
            alphabet: Some(vec![6, 12]),
            population: Some(8),
            generations: Some(3),
            budget: Some(24),
            crossover_rate: Some(0.75),
            mutation_rate: Some(0.125),
            stall_generations: Some(2),
            objective: Some(Objective::Combined),
            seed: Some(9),
            input_size: Some(4),
            train: Some(2),
            test: Some(3),
            epi_table: Some("epi.toml".into()),
            output_dir: Some("out".into()),
        };
        let text = m.to_toml().unwrap();
        assert_eq!(RunManifest::from_toml(&text).unwrap(), m);
        assert_eq!(RunManifest::from_toml("").unwrap(), RunManifest::default());
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(RunManifest::from_toml("kernel = \"radar\"\ncolour = 3\n").is_err());
        assert!(RunManifest::from_toml("rule = \"xyz\"\n").is_err());
    }

    #[test]
    fn overlay_prefers_flags() {
        let file = RunManifest { kernel: Some("radar".into()), seed: Some(1), ..Default::default() };
        let flags = RunManifest { seed: Some(2), ..Default::default() };
        let m = file.overlay(flags);
        assert_eq!(m.kernel.as_deref(), Some("radar"));
        assert_eq!(m.seed, Some(2));
    }
}
