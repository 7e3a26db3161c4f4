//! Arbitrage diagnostics and martingale hypothesis tests.
//!
//! The inside information destroys the martingale deflator exactly when
//! `E[Z_T / q^L_T] < 1`; the reciprocal of that expectation is the terminal
//! wealth of the optimal arbitrage started from one unit. Both a closed-form
//! evaluator (per worked model) and a Monte Carlo estimator are provided,
//! plus a generic martingale test over sampled process paths used by the
//! consistency battery.

use crate::densities::{DensityFamily, PathState};
use crate::mcsim::{batch, TimeGrid};
use crate::numerics::{integrate_split, mean_stderr, norm_cdf};
use crate::rng::RngPolicy;
use crate::{CoreError, Result};
use serde::Serialize;

/// Outcome of the no-free-lunch test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NflvrVerdict {
    Holds,
    ArbitrageExists,
    Inconclusive,
}

/// Arbitrage diagnostics for one model.
#[derive(Clone, Debug, Serialize)]
pub struct ArbReport {
    /// `E[1/q^L_T]`.
    pub e_inv_qt: f64,
    pub e_inv_qt_stderr: Option<f64>,
    /// `E[Z_T/q^L_T]` (the worked models have `Z == 1`, so this matches
    /// `e_inv_qt`; kept separate for models with a nontrivial deflator).
    pub e_z_over_qt: f64,
    pub e_z_over_qt_stderr: Option<f64>,
    pub nflvr: NflvrVerdict,
    /// Terminal wealth of the optimal arbitrage from unit capital,
    /// `1 / E[Z_T/q^L_T]`; equals 1 when no arbitrage exists.
    pub opt_arb_profit: f64,
    pub opt_arb_profit_stderr: Option<f64>,
    pub method: String,
    pub n_paths: usize,
}

/// Exact `E[1/q^L_T] = int P(q^x_T > 0) lambda(dx)` per worked model.
pub fn arbitrage_closed(model: &DensityFamily) -> Result<ArbReport> {
    let e = match model {
        DensityFamily::GbmBinary { r, .. } => (1.0 - r) * (1.0 - r) + r * r,
        DensityFamily::PoissonDiff { .. } => {
            let law = model.signal()?;
            law.atoms().unwrap().iter().map(|&(_, p)| p * p).sum()
        }
        DensityFamily::ReflectionUniform { horizon } => {
            let t = *horizon;
            integrate_split(
                |x| {
                    let g = crate::densities::gamma_map(x);
                    let survive = if g.is_infinite() {
                        1.0
                    } else {
                        2.0 * norm_cdf(g / t.sqrt()) - 1.0
                    };
                    survive * crate::densities::reflection_lambda_density(x, t)
                },
                &[0.0, 0.5, 1.0],
                1e-11,
            )?
        }
        DensityFamily::CustomDiscrete { .. } => {
            return Err(CoreError::Inapplicable(
                "closed-form diagnostics cover only the worked models".into(),
            ))
        }
    };
    if e > 1.0 + 1e-12 {
        return Err(CoreError::Inconsistent(format!(
            "E[1/q^L_T] = {e} exceeds the supermartingale bound 1"
        )));
    }
    let nflvr = if (e - 1.0).abs() <= 1e-12 {
        NflvrVerdict::Holds
    } else {
        NflvrVerdict::ArbitrageExists
    };
    Ok(ArbReport {
        e_inv_qt: e,
        e_inv_qt_stderr: None,
        e_z_over_qt: e,
        e_z_over_qt_stderr: None,
        nflvr,
        opt_arb_profit: 1.0 / e,
        opt_arb_profit_stderr: None,
        method: "closed-form".into(),
        n_paths: 0,
    })
}

/// Monte Carlo estimate of the same quantities. The verdict compares the
/// estimate to 1 in standard errors: within one is `Holds`, within
/// `z_threshold` is `Inconclusive`, beyond is `ArbitrageExists`. An estimate
/// more than five standard errors above 1 contradicts the supermartingale
/// property and is reported as an internal inconsistency.
pub fn arbitrage_mc(
    model: &DensityFamily,
    grid: &TimeGrid,
    n_paths: usize,
    rng: &RngPolicy,
    z_threshold: f64,
) -> Result<ArbReport> {
    if n_paths < 2 {
        return Err(CoreError::InvalidParameter("need at least 2 paths".into()));
    }
    if !(z_threshold > 0.0) {
        return Err(CoreError::InvalidParameter("z threshold must be positive".into()));
    }
    let last = grid.n_steps();
    let vals: Vec<(f64, f64)> = batch(n_paths, |i| {
        let b = model.simulate(grid, rng, i).expect("simulation");
        let state = PathState::at(&b, last);
        let l = model.signal_value(&b).expect("signal");
        let q = model.terminal_density(l, &state).expect("density");
        if q > 0.0 {
            (1.0 / q, b.z[last] / q)
        } else {
            (f64::NAN, f64::NAN)
        }
    });
    if vals.iter().any(|v| !v.0.is_finite()) {
        return Err(CoreError::Inconsistent(
            "terminal density vanished on a simulated path".into(),
        ));
    }
    let inv: Vec<f64> = vals.iter().map(|v| v.0).collect();
    let zq: Vec<f64> = vals.iter().map(|v| v.1).collect();
    let (e_inv, se_inv) = mean_stderr(&inv);
    let (e_zq, se_zq) = mean_stderr(&zq);
    if e_zq > 1.0 + 5.0 * se_zq {
        return Err(CoreError::Inconsistent(format!(
            "E[Z_T/q^L_T] = {e_zq} +- {se_zq} exceeds the supermartingale bound 1"
        )));
    }
    let z = if se_zq > 0.0 {
        (1.0 - e_zq) / se_zq
    } else if (e_zq - 1.0).abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    };
    let nflvr = if z <= 1.0 {
        NflvrVerdict::Holds
    } else if z <= z_threshold {
        NflvrVerdict::Inconclusive
    } else {
        NflvrVerdict::ArbitrageExists
    };
    Ok(ArbReport {
        e_inv_qt: e_inv,
        e_inv_qt_stderr: Some(se_inv),
        e_z_over_qt: e_zq,
        e_z_over_qt_stderr: Some(se_zq),
        nflvr,
        opt_arb_profit: 1.0 / e_zq,
        opt_arb_profit_stderr: Some(se_zq / (e_zq * e_zq)),
        method: "monte-carlo".into(),
        n_paths,
    })
}

// ---------------------------------------------------------------------------
// Martingale tests
// ---------------------------------------------------------------------------

/// A process sampled on a common time grid: `values[path][time]`.
#[derive(Clone, Debug)]
pub struct ProcessSamples {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ProcessSamples {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 {
            return Err(CoreError::InvalidParameter("need at least 2 times".into()));
        }
        if values.iter().any(|row| row.len() != times.len()) {
            return Err(CoreError::InvalidParameter(
                "ragged sample matrix".into(),
            ));
        }
        if values
            .iter()
            .any(|row| row.iter().any(|v| !v.is_finite()))
        {
            return Err(CoreError::InvalidParameter(
                "samples must be finite".into(),
            ));
        }
        Ok(ProcessSamples { times, values })
    }

    pub fn n_paths(&self) -> usize {
        self.values.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MartingaleVerdict {
    Consistent,
    StrictSupermartingaleDetected,
    Inconsistent,
}

/// One rejected hypothesis inside the test battery.
#[derive(Clone, Debug, Serialize)]
pub struct MartingaleViolation {
    /// "level" for the mean-versus-start test, "increment" for the binned
    /// conditional-increment test.
    pub kind: &'static str,
    pub time_index: usize,
    pub bin: Option<usize>,
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleReport {
    pub verdict: MartingaleVerdict,
    pub worst_z: f64,
    pub violations: Vec<MartingaleViolation>,
    pub n_paths: usize,
    pub n_times: usize,
    pub z_threshold: f64,
}

const STATE_BINS: usize = 8;

// z-score of a paired-difference sample; zero variance demands exact equality.
// `se_floor` guards bins whose conditional increment is so skewed that the
// within-bin sample misses the rare large outcomes entirely (the sample
// standard error then wildly understates the truth); the caller passes the
// pooled standard error scaled to the bin size.
fn diff_z(diffs: &[f64], se_floor: f64) -> f64 {
    let (m, se) = mean_stderr(diffs);
    let se = se.max(se_floor);
    if se > 0.0 {
        m / se
    } else if m == 0.0 {
        0.0
    } else {
        f64::INFINITY * m.signum()
    }
}

/// Tests whether the sampled process is consistent with a martingale.
///
/// Two families of hypotheses, each at `z_threshold` standard errors: the
/// mean at every later time against the time-0 mean (paired per path), and
/// the mean increment over each grid cell within each of eight
/// current-state quantile bins. Every violation with a negative z pushes
/// toward the strict-supermartingale verdict; any positive violation makes
/// the sample inconsistent with both hypotheses.
pub fn martingale_test(samples: &ProcessSamples, z_threshold: f64) -> Result<MartingaleReport> {
    let n_paths = samples.n_paths();
    if n_paths < 1000 {
        return Err(CoreError::InvalidParameter(format!(
            "martingale test needs at least 1000 paths, got {n_paths}"
        )));
    }
    if !(z_threshold > 0.0) {
        return Err(CoreError::InvalidParameter("z threshold must be positive".into()));
    }
    let n_times = samples.times.len();
    let mut violations = Vec::new();
    let mut worst_z = 0.0f64;
    let mut note = |kind: &'static str, time_index: usize, bin: Option<usize>, z: f64| {
        if z.abs() > worst_z {
            worst_z = z.abs();
        }
        if z.abs() > z_threshold {
            violations.push(MartingaleViolation {
                kind,
                time_index,
                bin,
                z,
            });
        }
    };

    for j in 1..n_times {
        let diffs: Vec<f64> = samples.values.iter().map(|row| row[j] - row[0]).collect();
        note("level", j, None, diff_z(&diffs, 0.0));
    }

    for j in 0..n_times - 1 {
        let all_diffs: Vec<f64> = samples
            .values
            .iter()
            .map(|row| row[j + 1] - row[j])
            .collect();
        let pooled_sd = mean_stderr(&all_diffs).1 * (n_paths as f64).sqrt();
        // quantile bins on the state at time j: contiguous chunks of the
        // path indices sorted by current value
        let mut order: Vec<usize> = (0..n_paths).collect();
        order.sort_by(|&a, &b| {
            samples.values[a][j]
                .partial_cmp(&samples.values[b][j])
                .unwrap()
        });
        for bin in 0..STATE_BINS {
            let lo = bin * n_paths / STATE_BINS;
            let hi = (bin + 1) * n_paths / STATE_BINS;
            if hi - lo < 2 {
                continue;
            }
            let diffs: Vec<f64> = order[lo..hi]
                .iter()
                .map(|&i| samples.values[i][j + 1] - samples.values[i][j])
                .collect();
            let floor = pooled_sd / ((hi - lo) as f64).sqrt();
            note("increment", j, Some(bin), diff_z(&diffs, floor));
        }
    }

    let verdict = if violations.is_empty() {
        MartingaleVerdict::Consistent
    } else if violations.iter().all(|v| v.z < 0.0) {
        MartingaleVerdict::StrictSupermartingaleDetected
    } else {
        MartingaleVerdict::Inconsistent
    };
    Ok(MartingaleReport {
        verdict,
        worst_z,
        violations,
        n_paths,
        n_times,
        z_threshold,
    })
}

// ---------------------------------------------------------------------------
// Sample builders for the standard processes
// ---------------------------------------------------------------------------

/// Samples of `t -> q^x_t` along simulated paths.
pub fn density_process_samples(
    model: &DensityFamily,
    x: f64,
    grid: &TimeGrid,
    n_paths: usize,
    rng: &RngPolicy,
) -> Result<ProcessSamples> {
    let times = grid.times().to_vec();
    let values = batch(n_paths, |i| {
        let b = model.simulate(grid, rng, i).expect("simulation");
        (0..times.len())
            .map(|j| {
                let state = PathState::at(&b, j);
                model.density(x, times[j], &state).expect("density")
            })
            .collect::<Vec<f64>>()
    });
    ProcessSamples::new(times, values)
}

/// Samples of `t -> Z_t/q^L_t` (the insider's deflator) along simulated
/// paths; a strict supermartingale exactly when the signal admits arbitrage.
pub fn inverse_signal_density_samples(
    model: &DensityFamily,
    grid: &TimeGrid,
    n_paths: usize,
    rng: &RngPolicy,
) -> Result<ProcessSamples> {
    let times = grid.times().to_vec();
    let values = batch(n_paths, |i| {
        let b = model.simulate(grid, rng, i).expect("simulation");
        let l = model.signal_value(&b).expect("signal");
        (0..times.len())
            .map(|j| {
                let state = PathState::at(&b, j);
                let q = model.density(l, times[j], &state).expect("density");
                b.z[j] / q.max(1e-300)
            })
            .collect::<Vec<f64>>()
    });
    ProcessSamples::new(times, values)
}

/// Samples of one traded asset's price along simulated paths.
pub fn price_samples(
    model: &DensityFamily,
    asset: usize,
    grid: &TimeGrid,
    n_paths: usize,
    rng: &RngPolicy,
) -> Result<ProcessSamples> {
    let times = grid.times().to_vec();
    let probe = model.simulate(grid, rng, 0)?;
    if asset >= probe.s.len() {
        return Err(CoreError::InvalidParameter(format!(
            "model has {} assets, asked for index {asset}",
            probe.s.len()
        )));
    }
    let values = batch(n_paths, |i| {
        let b = model.simulate(grid, rng, i).expect("simulation");
        b.s[asset].clone()
    });
    ProcessSamples::new(times, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gbm_r03() -> DensityFamily {
        DensityFamily::gbm_binary_from_r(0.3, 1.0).unwrap()
    }

    #[test]
    fn closed_diagnostics_match_frozen_values() {
        let rep = arbitrage_closed(&gbm_r03()).unwrap();
        assert_abs_diff_eq!(rep.e_inv_qt, 0.58, epsilon = 1e-14);
        assert_abs_diff_eq!(rep.opt_arb_profit, 1.7241379310344828, epsilon = 1e-13);
        assert_eq!(rep.nflvr, NflvrVerdict::ArbitrageExists);
        assert_eq!(rep.method, "closed-form");

        let pois = DensityFamily::poisson_diff(1.0).unwrap();
        let rep = arbitrage_closed(&pois).unwrap();
        assert_abs_diff_eq!(rep.e_inv_qt, 0.20700192122398670, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.opt_arb_profit, 4.8308730377335421, epsilon = 1e-10);
        assert_eq!(rep.nflvr, NflvrVerdict::ArbitrageExists);

        let refl = DensityFamily::reflection_uniform(1.0).unwrap();
        let rep = arbitrage_closed(&refl).unwrap();
        assert_abs_diff_eq!(rep.e_inv_qt, 0.85933612704837604, epsilon = 1e-9);
        assert_eq!(rep.nflvr, NflvrVerdict::ArbitrageExists);
    }

    #[test]
    fn closed_diagnostics_reject_custom_models() {
        let sig = crate::densities::SignalSpec::discrete(vec![(0.0, 0.4), (1.0, 0.6)]).unwrap();
        let hook = DensityFamily::independent_hook(sig, 1.0).unwrap();
        assert!(matches!(
            arbitrage_closed(&hook),
            Err(CoreError::Inapplicable(_))
        ));
    }

    #[test]
    fn mc_diagnostics_detect_gbm_arbitrage() {
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let rep = arbitrage_mc(&gbm_r03(), &grid, 20_000, &RngPolicy::new(20240817), 4.0).unwrap();
        let se = rep.e_inv_qt_stderr.unwrap();
        assert!((rep.e_inv_qt - 0.58).abs() < 4.0 * se, "{rep:?}");
        assert_eq!(rep.nflvr, NflvrVerdict::ArbitrageExists);
        assert!(rep.opt_arb_profit > 1.5);
        assert_eq!(rep.method, "monte-carlo");
    }

    #[test]
    fn mc_diagnostics_on_reflection_model() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let refl = DensityFamily::reflection_uniform(1.0).unwrap();
        let rep = arbitrage_mc(&refl, &grid, 20_000, &RngPolicy::new(20240817), 4.0).unwrap();
        let se = rep.e_inv_qt_stderr.unwrap();
        assert!(
            (rep.e_inv_qt - 0.85933612704837604).abs() < 4.0 * se,
            "{rep:?}"
        );
        assert_eq!(rep.nflvr, NflvrVerdict::ArbitrageExists);
    }

    #[test]
    fn martingale_test_validates_input() {
        let s = ProcessSamples::new(
            vec![0.0, 1.0],
            (0..10).map(|_| vec![1.0, 1.0]).collect(),
        )
        .unwrap();
        assert!(martingale_test(&s, 4.0).is_err());
        assert!(ProcessSamples::new(vec![0.0], vec![]).is_err());
        assert!(ProcessSamples::new(vec![0.0, 1.0], vec![vec![1.0]]).is_err());
        assert!(ProcessSamples::new(vec![0.0, 1.0], vec![vec![1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn martingale_test_accepts_constant_process() {
        let s = ProcessSamples::new(
            vec![0.0, 0.5, 1.0],
            (0..2000).map(|_| vec![1.0, 1.0, 1.0]).collect(),
        )
        .unwrap();
        let rep = martingale_test(&s, 4.0).unwrap();
        assert_eq!(rep.verdict, MartingaleVerdict::Consistent);
        assert_eq!(rep.worst_z, 0.0);
    }

    #[test]
    fn martingale_test_flags_deterministic_drift() {
        // upward drift: every path gains 1 per step, so every level and
        // increment test fails with positive z
        let s = ProcessSamples::new(
            vec![0.0, 0.5, 1.0],
            (0..2000)
                .map(|i| {
                    let noise = (i % 7) as f64 * 0.01;
                    vec![noise, 1.0 + noise, 2.0 + noise]
                })
                .collect(),
        )
        .unwrap();
        let rep = martingale_test(&s, 4.0).unwrap();
        assert_eq!(rep.verdict, MartingaleVerdict::Inconsistent);
        assert!(rep.violations.iter().all(|v| v.z > 0.0));
    }

    #[test]
    fn martingale_test_detects_supermartingale() {
        let s = ProcessSamples::new(
            vec![0.0, 0.5, 1.0],
            (0..2000)
                .map(|i| {
                    let noise = (i % 11) as f64 * 0.01;
                    vec![1.0 + noise, 0.8 + noise, 0.5 + noise]
                })
                .collect(),
        )
        .unwrap();
        let rep = martingale_test(&s, 4.0).unwrap();
        assert_eq!(rep.verdict, MartingaleVerdict::StrictSupermartingaleDetected);
        assert!(rep.violations.iter().all(|v| v.z < 0.0));
    }

    #[test]
    fn density_process_is_a_martingale() {
        let grid = TimeGrid::from_times(vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let s = density_process_samples(&gbm_r03(), 1.0, &grid, 5_000, &RngPolicy::new(20240817))
            .unwrap();
        let rep = martingale_test(&s, 4.0).unwrap();
        assert_eq!(rep.verdict, MartingaleVerdict::Consistent, "{rep:?}");
    }

    #[test]
    fn inverse_density_is_a_strict_supermartingale() {
        let grid = TimeGrid::from_times(vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let s =
            inverse_signal_density_samples(&gbm_r03(), &grid, 5_000, &RngPolicy::new(20240817))
                .unwrap();
        let rep = martingale_test(&s, 4.0).unwrap();
        assert_eq!(
            rep.verdict,
            MartingaleVerdict::StrictSupermartingaleDetected,
            "{rep:?}"
        );
    }

    #[test]
    fn price_samples_respect_asset_index() {
        let pois = DensityFamily::poisson_diff(1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        assert!(price_samples(&pois, 2, &grid, 100, &RngPolicy::new(1)).is_err());
        let s = price_samples(&pois, 1, &grid, 1_500, &RngPolicy::new(20240817)).unwrap();
        let rep = martingale_test(&s, 4.0).unwrap();
        assert_eq!(rep.verdict, MartingaleVerdict::Consistent, "{rep:?}");
    }
}
