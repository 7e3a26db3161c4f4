//! Self-financing replication of the universal insider claim.
//!
//! The payoff `(v + k)/lambda_L - k` is what turns the signal into money
//! without any utility: hold `V_t = (v + k) q^L_t - k`. In the binary
//! model that wealth is attained by the explicit delta
//! `(v + k) d_w q^L / (sigma S)`, which this module integrates along
//! simulated paths against the exact density curve. The delta blows up
//! near the horizon on paths that finish close to the threshold, so
//! trading freezes on the final `delta_guard` fraction of the horizon and
//! accuracy is judged on the pre-freeze window.

use crate::densities::{DensityFamily, PathState};
use crate::mcsim::{batch, PathBundle, TimeGrid};
use crate::numerics::norm_pdf;
use crate::rng::RngPolicy;
use crate::{CoreError, Result};
use serde::Serialize;
use std::sync::Arc;

/// Shares of the risky asset to hold: `(t, w_t, price, signal) -> shares`.
pub type Strategy = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

/// Delta of the universal claim in the binary model. The market there has
/// unit volatility and unit initial price.
pub fn universal_strategy_gbm(model: &DensityFamily, v: f64, k: f64) -> Result<Strategy> {
    let (c, r, horizon) = match model {
        DensityFamily::GbmBinary { c, r, horizon } => (*c, *r, *horizon),
        _ => {
            return Err(CoreError::Inapplicable(
                "the explicit universal delta is derived for the binary model".into(),
            ))
        }
    };
    if !(v > 0.0 && v.is_finite() && k >= 0.0 && k.is_finite()) {
        return Err(CoreError::InvalidParameter(
            "need positive capital and a nonnegative credit line".into(),
        ));
    }
    Ok(Arc::new(move |t: f64, w: f64, s: f64, signal: f64| {
        let h = (horizon - t).sqrt();
        if !(h > 0.0) {
            return 0.0;
        }
        // d_w q^1 = pdf((w-c)/h)/(r h); d_w q^0 is its mirror with the
        // opposite sign
        let dq = if signal == 1.0 {
            norm_pdf((w - c) / h) / (r * h)
        } else {
            -norm_pdf((c - w) / h) / ((1.0 - r) * h)
        };
        (v + k) * dq / s
    }))
}

/// Wealth along one path from left-point self-financing trading, with the
/// position forced to zero for `t > horizon (1 - delta_guard)`.
#[derive(Clone, Debug, Serialize)]
pub struct WealthPath {
    pub times: Vec<f64>,
    pub wealth: Vec<f64>,
    pub final_wealth: f64,
    pub min_wealth: f64,
    /// Index of the last rebalanced cell; wealth is constant afterwards.
    pub freeze_index: usize,
}

pub fn integrate_strategy(
    bundle: &PathBundle,
    strategy: &Strategy,
    signal: f64,
    v0: f64,
    delta_guard: f64,
) -> Result<WealthPath> {
    if !(0.0..1.0).contains(&delta_guard) {
        return Err(CoreError::InvalidParameter(format!(
            "delta guard must lie in [0, 1), got {delta_guard}"
        )));
    }
    if bundle.s.is_empty() {
        return Err(CoreError::InvalidParameter(
            "path bundle carries no price to trade".into(),
        ));
    }
    let times = bundle.grid.times();
    let horizon = *times.last().unwrap();
    let cutoff = horizon * (1.0 - delta_guard);
    let price = &bundle.s[0];
    let n = bundle.grid.n_steps();
    let mut wealth = Vec::with_capacity(n + 1);
    wealth.push(v0);
    let mut freeze_index = 0usize;
    for j in 0..n {
        let shares = if times[j] <= cutoff {
            freeze_index = j;
            strategy(times[j], bundle.w[j], price[j], signal)
        } else {
            0.0
        };
        let next = wealth[j] + shares * (price[j + 1] - price[j]);
        if !next.is_finite() {
            return Err(CoreError::Inconsistent(format!(
                "wealth diverged at step {j}"
            )));
        }
        wealth.push(next);
    }
    let min_wealth = wealth.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(WealthPath {
        times: times.to_vec(),
        final_wealth: *wealth.last().unwrap(),
        min_wealth,
        freeze_index,
        wealth,
    })
}

/// Exact target curve `V_t = (v + k) q^L_t - k` along a simulated path;
/// starts at `v` and never drops below `-k`.
pub fn universal_wealth(
    model: &DensityFamily,
    bundle: &PathBundle,
    v: f64,
    k: f64,
) -> Result<Vec<f64>> {
    let signal = model.signal_value(bundle)?;
    let times = bundle.grid.times();
    let mut out = Vec::with_capacity(times.len());
    for j in 0..times.len() {
        let state = PathState::at(bundle, j);
        let q = model.density(signal, times[j], &state)?;
        out.push((v + k) * q - k);
    }
    Ok(out)
}

/// Every `stride`-th point of a simulated path, so one fine simulation can
/// be replayed at coarser rebalancing frequencies with common randomness.
pub fn subsample_bundle(bundle: &PathBundle, stride: usize) -> Result<PathBundle> {
    let n = bundle.grid.n_steps();
    if stride == 0 || n % stride != 0 {
        return Err(CoreError::InvalidParameter(format!(
            "stride {stride} must divide the {n} steps"
        )));
    }
    if stride == 1 {
        return Ok(bundle.clone());
    }
    let pick = |xs: &[f64]| -> Vec<f64> { xs.iter().copied().step_by(stride).collect() };
    let times = pick(bundle.grid.times());
    Ok(PathBundle {
        model_id: bundle.model_id.clone(),
        grid: TimeGrid::from_times(times)?,
        w: pick(&bundle.w),
        n1: bundle.n1.iter().copied().step_by(stride).collect(),
        n2: bundle.n2.iter().copied().step_by(stride).collect(),
        s: bundle.s.iter().map(|col| pick(col)).collect(),
        w_max: pick(&bundle.w_max),
        z: pick(&bundle.z),
        u_indep: bundle.u_indep,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplicationReport {
    /// Root mean square over paths of the pre-freeze sup error.
    pub rms_sup_error: f64,
    pub worst_sup_error: f64,
    pub mean_terminal_gap: f64,
    /// Smallest traded wealth seen on any path; discretization noise can
    /// push it slightly under the exact curve's bound.
    pub min_wealth: f64,
    /// Smallest exact-curve wealth seen on any path; at least `-k` by
    /// construction.
    pub min_target_wealth: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub delta_guard: f64,
}

fn sup_error_before_cutoff(
    times: &[f64],
    traded: &[f64],
    target: &[f64],
    cutoff: f64,
) -> (f64, f64) {
    let mut sup = 0.0f64;
    for j in 0..times.len() {
        if times[j] <= cutoff {
            sup = sup.max((traded[j] - target[j]).abs());
        }
    }
    let gap = (traded.last().unwrap() - target.last().unwrap()).abs();
    (sup, gap)
}

/// Simulates fresh paths and measures how well the explicit delta tracks
/// the exact universal wealth curve on the pre-freeze window.
pub fn replication_check(
    model: &DensityFamily,
    grid: &TimeGrid,
    v: f64,
    k: f64,
    delta_guard: f64,
    n_paths: usize,
    rng: &RngPolicy,
) -> Result<ReplicationReport> {
    if n_paths == 0 {
        return Err(CoreError::InvalidParameter("need at least 1 path".into()));
    }
    let strategy = universal_strategy_gbm(model, v, k)?;
    let horizon = model.horizon();
    let cutoff = horizon * (1.0 - delta_guard);
    let per_path: Vec<Result<(f64, f64, f64, f64)>> = batch(n_paths, |i| {
        let bundle = model.simulate(grid, rng, i)?;
        let signal = model.signal_value(&bundle)?;
        let target = universal_wealth(model, &bundle, v, k)?;
        let wp = integrate_strategy(&bundle, &strategy, signal, v, delta_guard)?;
        let (sup, gap) = sup_error_before_cutoff(&wp.times, &wp.wealth, &target, cutoff);
        let target_min = target.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((sup, gap, wp.min_wealth, target_min))
    });
    let mut sq = 0.0;
    let mut worst = 0.0f64;
    let mut gaps = 0.0;
    let mut min_wealth = f64::INFINITY;
    let mut min_target_wealth = f64::INFINITY;
    for r in per_path {
        let (sup, gap, mn, tmn) = r?;
        sq += sup * sup;
        worst = worst.max(sup);
        gaps += gap;
        min_wealth = min_wealth.min(mn);
        min_target_wealth = min_target_wealth.min(tmn);
    }
    Ok(ReplicationReport {
        rms_sup_error: (sq / n_paths as f64).sqrt(),
        worst_sup_error: worst,
        mean_terminal_gap: gaps / n_paths as f64,
        min_wealth,
        min_target_wealth,
        n_paths,
        n_steps: grid.n_steps(),
        delta_guard,
    })
}
