//! Scenario configuration: TOML in, resolved echo out.
//!
//! A config file is optional; every field has a default and the resolved
//! values (defaults included) are echoed into the report so a run can be
//! reproduced from its own output. Unknown keys are rejected.

use insider_val_core::densities::{DensityFamily, SignalSpec};
use insider_val_core::dualopt::{Clock, Utility};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::CliError;

/// Raw deserialization target; everything optional, schema-checked.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub task: Option<String>,
    pub v: Option<f64>,
    pub k: Option<f64>,
    pub model: Option<ModelBlock>,
    pub signal: Option<SignalBlock>,
    pub utility: Option<UtilityBlock>,
    pub clock: Option<ClockBlock>,
    pub run: Option<RunBlock>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub id: Option<String>,
    pub r: Option<f64>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalBlock {
    /// `(value, probability)` atoms for the signal of the independent model.
    pub atoms: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityBlock {
    pub kind: Option<String>,
    pub p: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockBlock {
    pub kind: Option<String>,
    pub times: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub workers: Option<usize>,
    pub model_id: Option<String>,
    pub r: Option<f64>,
    pub k: Option<f64>,
}

// -----------------------------------------------------------------------
// Resolved configuration (every field concrete, echoed in reports)
// -----------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ResolvedConfig {
    pub task: String,
    pub v: f64,
    pub k: f64,
    pub model: ResolvedModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal: Option<ResolvedSignal>,
    pub utility: ResolvedUtility,
    pub clock: ResolvedClock,
    pub run: ResolvedRun,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolvedModel {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    pub horizon: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolvedSignal {
    pub atoms: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolvedUtility {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolvedClock {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolvedRun {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub workers: usize,
}

/// Per-task defaults for the run block; replication wants a fine grid,
/// diagnostics only a handful of test dates.
fn default_paths_steps(task: &str) -> (usize, usize) {
    match task {
        "replicate" => (1000, 4096),
        "diagnose" => (20_000, 4),
        _ => (20_000, 64),
    }
}

pub const DEFAULT_SEED: u64 = insider_val_core::battery::DEFAULT_SEED;

/// Merges file config, environment, and command-line overrides into a
/// fully explicit configuration. Seed precedence: `--seed`, then
/// `INSIDER_VAL_SEED`, then the config file, then the default.
pub fn resolve(
    task: &str,
    cfg: &ScenarioConfig,
    ov: &Overrides,
) -> Result<ResolvedConfig, CliError> {
    let env_seed = match std::env::var("INSIDER_VAL_SEED") {
        Ok(s) => Some(s.parse::<u64>().map_err(|_| {
            CliError::Config(format!("INSIDER_VAL_SEED must be an unsigned integer, got {s:?}"))
        })?),
        Err(_) => None,
    };
    let run = cfg.run.as_ref();
    let (dpaths, dsteps) = default_paths_steps(task);
    let model_raw = cfg.model.as_ref();
    let id_raw = ov
        .model_id
        .clone()
        .or_else(|| model_raw.and_then(|m| m.id.clone()))
        .unwrap_or_else(|| "gbm-binary".into());
    let id = match id_raw.as_str() {
        "gbm-binary" => "gbm-binary",
        "poisson-pair" | "poisson-diff" => "poisson-pair",
        "reflection" | "reflection-uniform" => "reflection",
        "independent" => "independent",
        other => {
            return Err(CliError::Config(format!(
                "unknown model id {other:?}; expected gbm-binary, poisson-pair, reflection, or independent"
            )))
        }
    };
    let horizon = model_raw.and_then(|m| m.horizon).unwrap_or(1.0);
    let r = if id == "gbm-binary" {
        Some(ov.r.or_else(|| model_raw.and_then(|m| m.r)).unwrap_or(0.5))
    } else {
        if ov.r.is_some() || model_raw.and_then(|m| m.r).is_some() {
            return Err(CliError::Config(format!(
                "parameter r only applies to gbm-binary, not {id}"
            )));
        }
        None
    };
    let signal = match (id, cfg.signal.as_ref().and_then(|s| s.atoms.clone())) {
        ("independent", Some(atoms)) => Some(ResolvedSignal { atoms }),
        ("independent", None) => Some(ResolvedSignal {
            atoms: vec![(0.0, 0.4), (1.0, 0.6)],
        }),
        (_, Some(_)) => {
            return Err(CliError::Config(format!(
                "signal.atoms only applies to the independent model, not {id}"
            )))
        }
        (_, None) => None,
    };
    let ub = cfg.utility.as_ref();
    let ukind_raw = ub
        .and_then(|u| u.kind.clone())
        .unwrap_or_else(|| "log".into());
    let utility = match ukind_raw.as_str() {
        "log" => {
            reject_param("log", "p", ub.and_then(|u| u.p))?;
            reject_param("log", "alpha", ub.and_then(|u| u.alpha))?;
            ResolvedUtility {
                kind: "log".into(),
                p: None,
                alpha: None,
            }
        }
        "power" => {
            reject_param("power", "alpha", ub.and_then(|u| u.alpha))?;
            ResolvedUtility {
                kind: "power".into(),
                p: Some(ub.and_then(|u| u.p).unwrap_or(0.5)),
                alpha: None,
            }
        }
        "exp" | "exponential" => {
            reject_param("exp", "p", ub.and_then(|u| u.p))?;
            ResolvedUtility {
                kind: "exp".into(),
                p: None,
                alpha: Some(ub.and_then(|u| u.alpha).unwrap_or(1.0)),
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown utility kind {other:?}; expected log, power, or exp"
            )))
        }
    };
    let cb = cfg.clock.as_ref();
    let ckind_raw = cb
        .and_then(|c| c.kind.clone())
        .unwrap_or_else(|| "terminal".into());
    let clock = match ckind_raw.as_str() {
        "terminal" => {
            for (name, there) in [
                ("times", cb.map_or(false, |c| c.times.is_some())),
                ("weights", cb.map_or(false, |c| c.weights.is_some())),
                ("rate", cb.map_or(false, |c| c.rate.is_some())),
            ] {
                if there {
                    return Err(CliError::Config(format!(
                        "clock.{name} does not apply to the terminal clock"
                    )));
                }
            }
            ResolvedClock {
                kind: "terminal".into(),
                times: None,
                weights: None,
                rate: None,
            }
        }
        "weighted" => {
            let times = cb.and_then(|c| c.times.clone()).ok_or_else(|| {
                CliError::Config("weighted clock requires clock.times".into())
            })?;
            let weights = cb
                .and_then(|c| c.weights.clone())
                .unwrap_or_else(|| vec![1.0 / times.len() as f64; times.len()]);
            ResolvedClock {
                kind: "weighted".into(),
                times: Some(times),
                weights: Some(weights),
                rate: None,
            }
        }
        "lebesgue" => ResolvedClock {
            kind: "lebesgue".into(),
            times: None,
            weights: None,
            rate: Some(cb.and_then(|c| c.rate).unwrap_or(1.0)),
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown clock kind {other:?}; expected terminal, weighted, or lebesgue"
            )))
        }
    };
    Ok(ResolvedConfig {
        task: task.to_string(),
        v: cfg.v.unwrap_or(1.0),
        k: ov.k.or(cfg.k).unwrap_or(0.0),
        model: ResolvedModel {
            id: id.into(),
            r,
            horizon,
        },
        signal,
        utility,
        clock,
        run: ResolvedRun {
            paths: ov.paths.or(run.and_then(|r| r.paths)).unwrap_or(dpaths),
            steps: ov.steps.or(run.and_then(|r| r.steps)).unwrap_or(dsteps),
            seed: ov
                .seed
                .or(env_seed)
                .or(run.and_then(|r| r.seed))
                .unwrap_or(DEFAULT_SEED),
            workers: ov.workers.or(run.and_then(|r| r.workers)).unwrap_or(0),
        },
    })
}

fn reject_param(kind: &str, name: &str, value: Option<f64>) -> Result<(), CliError> {
    if value.is_some() {
        return Err(CliError::Config(format!(
            "utility.{name} does not apply to the {kind} utility"
        )));
    }
    Ok(())
}

impl ResolvedConfig {
    pub fn build_model(&self) -> Result<DensityFamily, CliError> {
        let m = match self.model.id.as_str() {
            "gbm-binary" => DensityFamily::gbm_binary_from_r(
                self.model.r.expect("r resolved for gbm"),
                self.model.horizon,
            )?,
            "poisson-pair" => DensityFamily::poisson_diff(self.model.horizon)?,
            "reflection" => DensityFamily::reflection_uniform(self.model.horizon)?,
            "independent" => {
                let atoms = self.signal.as_ref().expect("signal resolved").atoms.clone();
                DensityFamily::independent_hook(SignalSpec::discrete(atoms)?, self.model.horizon)?
            }
            other => unreachable!("unvalidated model id {other}"),
        };
        Ok(m)
    }

    pub fn build_utility(&self) -> Result<Utility, CliError> {
        Ok(match self.utility.kind.as_str() {
            "log" => Utility::Log,
            "power" => Utility::power(self.utility.p.expect("p resolved"))?,
            "exp" => Utility::exponential(self.utility.alpha.expect("alpha resolved"))?,
            other => unreachable!("unvalidated utility kind {other}"),
        })
    }

    pub fn build_clock(&self) -> Result<Clock, CliError> {
        let clock = match self.clock.kind.as_str() {
            "terminal" => Clock::TerminalOnly,
            "weighted" => Clock::Weighted {
                times: self.clock.times.clone().expect("times resolved"),
                weights: self.clock.weights.clone().expect("weights resolved"),
            },
            "lebesgue" => Clock::Lebesgue {
                rate: self.clock.rate.expect("rate resolved"),
            },
            other => unreachable!("unvalidated clock kind {other}"),
        };
        clock.validate(self.model.horizon)?;
        Ok(clock)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ScenarioConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn defaults_fill_every_field() {
        let rc = resolve("value", &ScenarioConfig::default(), &Overrides::default()).unwrap();
        assert_eq!(rc.model.id, "gbm-binary");
        assert_eq!(rc.model.r, Some(0.5));
        assert_eq!(rc.v, 1.0);
        assert_eq!(rc.k, 0.0);
        assert_eq!(rc.utility.kind, "log");
        assert_eq!(rc.clock.kind, "terminal");
        assert_eq!(rc.run.seed, DEFAULT_SEED);
        assert_eq!(rc.run.paths, 20_000);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ScenarioConfig>("banana = 1").is_err());
        assert!(toml::from_str::<ScenarioConfig>("[model]\nid = \"gbm-binary\"\nvol = 2").is_err());
    }

    #[test]
    fn overrides_beat_config() {
        let cfg = parse("v = 2.0\n[run]\nseed = 7\npaths = 100");
        let ov = Overrides {
            seed: Some(9),
            paths: Some(50),
            ..Default::default()
        };
        let rc = resolve("value", &cfg, &ov).unwrap();
        assert_eq!(rc.run.seed, 9);
        assert_eq!(rc.run.paths, 50);
        assert_eq!(rc.v, 2.0);
    }

    #[test]
    fn misplaced_parameters_rejected() {
        let cfg = parse("[model]\nid = \"poisson-pair\"\nr = 0.5");
        assert!(resolve("value", &cfg, &Overrides::default()).is_err());
        let cfg = parse("[utility]\nkind = \"log\"\np = 0.5");
        assert!(resolve("value", &cfg, &Overrides::default()).is_err());
        let cfg = parse("[clock]\nkind = \"terminal\"\nrate = 1.0");
        assert!(resolve("value", &cfg, &Overrides::default()).is_err());
        let cfg = parse("[signal]\natoms = [[0.0, 0.5], [1.0, 0.5]]");
        assert!(resolve("value", &cfg, &Overrides::default()).is_err());
    }

    #[test]
    fn model_aliases_and_builders() {
        for (alias, canonical) in [
            ("poisson-diff", "poisson-pair"),
            ("reflection-uniform", "reflection"),
        ] {
            let cfg = parse(&format!("[model]\nid = \"{alias}\""));
            let rc = resolve("value", &cfg, &Overrides::default()).unwrap();
            assert_eq!(rc.model.id, canonical);
            rc.build_model().unwrap();
        }
        let cfg = parse("[model]\nid = \"independent\"");
        let rc = resolve("value", &cfg, &Overrides::default()).unwrap();
        assert_eq!(rc.signal.as_ref().unwrap().atoms.len(), 2);
        rc.build_model().unwrap();
    }

    #[test]
    fn weighted_clock_resolution() {
        let cfg = parse("[clock]\nkind = \"weighted\"\ntimes = [0.5, 1.0]");
        let rc = resolve("value", &cfg, &Overrides::default()).unwrap();
        assert_eq!(rc.clock.weights, Some(vec![0.5, 0.5]));
        rc.build_clock().unwrap();
        let cfg = parse("[clock]\nkind = \"weighted\"");
        assert!(resolve("value", &cfg, &Overrides::default()).is_err());
    }
}
