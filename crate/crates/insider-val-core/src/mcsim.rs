//! Monte Carlo engine producing market paths for the three worked models.
//!
//! Every model admits exact transition sampling (log-normal increments,
//! exponential inter-arrival times, inverse-transform running maxima), so no
//! discretization bias enters the diagnostics. Euler stepping appears only in
//! `replication`, where the discretized stochastic integral is itself the
//! object under study.

use crate::rng::RngPolicy;
use crate::{CoreError, Result};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Time grid on `[0, T]`: `times` has `n_steps + 1` strictly increasing
/// entries with `times[0] = 0` and `times[n_steps] = T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
    times: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `n_steps` cells.
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(CoreError::InvalidParameter(
                "grid needs at least one step".into(),
            ));
        }
        let times = (0..=n_steps)
            .map(|i| {
                if i == n_steps {
                    horizon
                } else {
                    horizon * i as f64 / n_steps as f64
                }
            })
            .collect();
        Ok(TimeGrid {
            horizon,
            n_steps,
            times,
        })
    }

    /// Grid from explicit times; validates the invariants.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(CoreError::InvalidParameter(
                "grid needs at least two times".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(CoreError::InvalidParameter("grid must start at 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CoreError::InvalidParameter(
                "grid times must be strictly increasing".into(),
            ));
        }
        let horizon = *times.last().unwrap();
        if !horizon.is_finite() {
            return Err(CoreError::InvalidParameter("horizon must be finite".into()));
        }
        Ok(TimeGrid {
            horizon,
            n_steps: times.len() - 1,
            times,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Index of a grid time equal to `t` (within a relative tolerance).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = 1e-12 * self.horizon.max(1.0);
        match self
            .times
            .iter()
            .position(|&u| (u - t).abs() <= tol)
        {
            Some(i) => Ok(i),
            None => Err(CoreError::Domain(format!("{t} is not a grid time"))),
        }
    }
}

/// Piecewise-constant deterministic volatility: one value for all cells, or
/// one value per grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Volatility {
    Flat(f64),
    PerCell(Vec<f64>),
}

impl Volatility {
    fn validate(&self, n_steps: usize) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s >= 0.0;
        match self {
            Volatility::Flat(s) if ok(*s) => Ok(()),
            Volatility::PerCell(v) if v.len() == n_steps && v.iter().all(|&s| ok(s)) => Ok(()),
            Volatility::PerCell(v) if v.len() != n_steps => Err(CoreError::InvalidParameter(
                format!("need {} per-cell volatilities, got {}", n_steps, v.len()),
            )),
            _ => Err(CoreError::InvalidParameter(
                "volatility must be nonnegative and finite".into(),
            )),
        }
    }

    pub fn at_cell(&self, j: usize) -> f64 {
        match self {
            Volatility::Flat(s) => *s,
            Volatility::PerCell(v) => v[j],
        }
    }
}

/// One simulated path: drivers, asset prices, running maximum, and the
/// measure-change density path (identically one while the pricing measure is
/// the physical one).
///
/// Vectors indexed by grid point; fields not used by a model are empty.
/// `s[i]` is the price path of asset `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathBundle {
    pub model_id: String,
    pub grid: TimeGrid,
    pub w: Vec<f64>,
    pub n1: Vec<u64>,
    pub n2: Vec<u64>,
    pub s: Vec<Vec<f64>>,
    pub w_max: Vec<f64>,
    pub z: Vec<f64>,
    pub u_indep: Option<f64>,
}

impl PathBundle {
    /// CSV dump for debugging: header `t,w,w_max,n1,n2,z,s1[,s2,...]`, one
    /// row per grid time, empty cells for fields the model does not use.
    /// The path-constant `u_indep` is not a per-time field and is omitted.
    pub fn to_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n_assets = self.s.len();
        let mut header = String::from("t,w,w_max,n1,n2,z");
        for i in 0..n_assets {
            header.push_str(&format!(",s{}", i + 1));
        }
        writeln!(out, "{header}")?;
        for (j, &t) in self.grid.times().iter().enumerate() {
            let cell = |v: &Vec<f64>| {
                if v.is_empty() {
                    String::new()
                } else {
                    format!("{:.16e}", v[j])
                }
            };
            let count = |v: &Vec<u64>| {
                if v.is_empty() {
                    String::new()
                } else {
                    v[j].to_string()
                }
            };
            let mut row = format!(
                "{:.16e},{},{},{},{},{}",
                t,
                cell(&self.w),
                cell(&self.w_max),
                count(&self.n1),
                count(&self.n2),
                cell(&self.z)
            );
            for s in &self.s {
                row.push_str(&format!(",{:.16e}", s[j]));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

fn ones(n: usize) -> Vec<f64> {
    vec![1.0; n]
}

/// Geometric Brownian market: exact log-normal increments
/// `S_{t+dt} = S_t exp(sigma sqrt(dt) xi - sigma^2 dt / 2)`.
pub fn simulate_gbm(
    sigma: &Volatility,
    s0: f64,
    grid: &TimeGrid,
    rng: &RngPolicy,
    path_index: u64,
) -> Result<PathBundle> {
    if !(s0 > 0.0) || !s0.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "initial price must be positive, got {s0}"
        )));
    }
    sigma.validate(grid.n_steps())?;
    let mut stream = rng.stream(path_index);
    let n = grid.n_steps();
    let times = grid.times();
    let mut w = vec![0.0f64; n + 1];
    let mut w_max = vec![0.0f64; n + 1];
    let mut s = vec![s0; n + 1];
    for j in 0..n {
        let dt = times[j + 1] - times[j];
        let xi: f64 = StandardNormal.sample(&mut stream);
        let dw = dt.sqrt() * xi;
        let sig = sigma.at_cell(j);
        w[j + 1] = w[j] + dw;
        w_max[j + 1] = w_max[j].max(w[j + 1]);
        s[j + 1] = s[j] * (sig * dw - 0.5 * sig * sig * dt).exp();
    }
    Ok(PathBundle {
        model_id: "gbm-binary".into(),
        grid: grid.clone(),
        w,
        n1: Vec::new(),
        n2: Vec::new(),
        s: vec![s],
        w_max,
        z: ones(n + 1),
        u_indep: None,
    })
}

/// Two-asset Poisson market `S^i_t = S^i_0 e^{-t} 2^{N^i_t}` with independent
/// unit-rate counting processes sampled by exponential inter-arrivals.
pub fn simulate_poisson_pair(
    grid: &TimeGrid,
    s0_1: f64,
    s0_2: f64,
    rng: &RngPolicy,
    path_index: u64,
) -> Result<PathBundle> {
    if !(s0_1 > 0.0 && s0_2 > 0.0) || !s0_1.is_finite() || !s0_2.is_finite() {
        return Err(CoreError::InvalidParameter(
            "initial prices must be positive".into(),
        ));
    }
    let mut stream = rng.stream(path_index);
    let horizon = grid.horizon();
    let draw_jump_times = |stream: &mut rand_chacha::ChaCha12Rng| {
        let mut jumps = Vec::new();
        let mut t = 0.0;
        loop {
            let e: f64 = Exp1.sample(stream);
            t += e;
            if t > horizon {
                break;
            }
            jumps.push(t);
        }
        jumps
    };
    let jumps1 = draw_jump_times(&mut stream);
    let jumps2 = draw_jump_times(&mut stream);
    let counts = |jumps: &[f64]| -> Vec<u64> {
        grid.times()
            .iter()
            .map(|&t| jumps.iter().take_while(|&&j| j <= t).count() as u64)
            .collect()
    };
    let n1 = counts(&jumps1);
    let n2 = counts(&jumps2);
    let price = |s0: f64, n: &[u64]| -> Vec<f64> {
        grid.times()
            .iter()
            .zip(n)
            .map(|(&t, &k)| s0 * (-t).exp() * 2f64.powi(k as i32))
            .collect()
    };
    let s = vec![price(s0_1, &n1), price(s0_2, &n2)];
    Ok(PathBundle {
        model_id: "poisson-diff".into(),
        grid: grid.clone(),
        w: Vec::new(),
        n1,
        n2,
        s,
        w_max: Vec::new(),
        z: ones(grid.n_steps() + 1),
        u_indep: None,
    })
}

// Conditional law of the running maximum of a Brownian bridge from `a` to
// `b` over a cell of width `dt`: P(max <= m) = 1 - exp(-2(m-a)(m-b)/dt) for
// m >= max(a,b). Inverse transform with uniform `v`.
fn bridge_max(a: f64, b: f64, dt: f64, v: f64) -> f64 {
    let r = -0.5 * dt * (1.0 - v).ln();
    0.5 * ((a + b) + ((a - b) * (a - b) + 4.0 * r).sqrt())
}

/// Exact joint sample of the terminal Brownian value and its continuous
/// running maximum: `W_T ~ N(0, T)`, then `W*_T` by inverse transform from
/// `P(W*_T <= m | W_T = w) = 1 - exp(-2m(m-w)/T)`.
pub fn sample_terminal_max_pair(t_horizon: f64, rng: &RngPolicy, path_index: u64) -> (f64, f64) {
    let mut stream = rng.stream(path_index);
    let xi: f64 = StandardNormal.sample(&mut stream);
    let w = t_horizon.sqrt() * xi;
    let v: f64 = stream.gen();
    (w, bridge_max(0.0, w, t_horizon, v))
}

/// Terminal slice of the running-maximum market: `(W_T, W*_T, U)` with `U`
/// uniform on [0,1) independent of the Brownian pair. Same law as the
/// horizon state of [`simulate_reflection`], with fewer draws.
pub fn sample_reflection_terminal(
    t_horizon: f64,
    rng: &RngPolicy,
    path_index: u64,
) -> (f64, f64, f64) {
    let mut stream = rng.stream(path_index);
    let xi: f64 = StandardNormal.sample(&mut stream);
    let w = t_horizon.sqrt() * xi;
    let v: f64 = stream.gen();
    let w_max = bridge_max(0.0, w, t_horizon, v);
    let u: f64 = stream.gen();
    (w, w_max, u)
}

/// Brownian market carrying the continuous running maximum and an
/// independent uniform draw (the signal in this model mixes the maximum with
/// the uniform).
///
/// The grid Brownian values are exact, and `w_max` is sampled from the exact
/// conditional law of the continuous maximum given those values (per-cell
/// Brownian-bridge maxima, accumulated). `w_max` therefore exceeds the grid
/// running maximum of `w` in general; a grid-only maximum would bias the
/// terminal-density diagnostics by far more than their tolerances.
pub fn simulate_reflection(grid: &TimeGrid, rng: &RngPolicy, path_index: u64) -> Result<PathBundle> {
    let mut stream = rng.stream(path_index);
    let n = grid.n_steps();
    let times = grid.times();
    let mut w = vec![0.0f64; n + 1];
    let mut w_max = vec![0.0f64; n + 1];
    let mut s = vec![1.0; n + 1];
    for j in 0..n {
        let dt = times[j + 1] - times[j];
        let xi: f64 = StandardNormal.sample(&mut stream);
        let v: f64 = stream.gen();
        w[j + 1] = w[j] + dt.sqrt() * xi;
        let cell_max = bridge_max(w[j], w[j + 1], dt, v);
        w_max[j + 1] = w_max[j].max(cell_max);
        s[j + 1] = (w[j + 1] - 0.5 * times[j + 1]).exp();
    }
    let u: f64 = stream.gen();
    Ok(PathBundle {
        model_id: "reflection-uniform".into(),
        grid: grid.clone(),
        w,
        n1: Vec::new(),
        n2: Vec::new(),
        s: vec![s],
        w_max,
        z: ones(n + 1),
        u_indep: Some(u),
    })
}

/// Generate `n_paths` values in parallel, one per path index, preserving
/// index order in the output (so downstream pairwise reductions are
/// bit-exact for any worker count).
pub fn batch<T: Send, F: Fn(u64) -> T + Sync + Send>(n_paths: usize, f: F) -> Vec<T> {
    (0..n_paths as u64).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ks_critical_1pct, ks_statistic, mean_stderr, norm_cdf};
    use approx::assert_abs_diff_eq;

    fn policy() -> RngPolicy {
        RngPolicy::new(20240817)
    }

    #[test]
    fn uniform_grid_invariants() {
        let g = TimeGrid::uniform(1.0, 7).unwrap();
        assert_eq!(g.times().len(), 8);
        assert_eq!(g.times()[0], 0.0);
        assert_eq!(g.times()[7], 1.0);
        assert!(g.times().windows(2).all(|w| w[1] > w[0]));
        assert!(TimeGrid::uniform(0.0, 4).is_err());
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TimeGrid::from_times(vec![0.1, 0.5]).is_err());
        let g2 = TimeGrid::from_times(vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(g2.index_of(0.25).unwrap(), 1);
        assert!(g2.index_of(0.3).is_err());
    }

    #[test]
    fn gbm_matches_closed_form_at_grid_points() {
        let grid = TimeGrid::uniform(1.0, 64).unwrap();
        let sigma = 1.0;
        for i in 0..50 {
            let b = simulate_gbm(&Volatility::Flat(sigma), 1.0, &grid, &policy(), i).unwrap();
            for (j, &t) in grid.times().iter().enumerate() {
                let expect = (sigma * b.w[j] - 0.5 * sigma * sigma * t).exp();
                assert_abs_diff_eq!(b.s[0][j], expect, epsilon = 1e-12 * expect.max(1.0));
            }
        }
    }

    #[test]
    fn gbm_zero_volatility_freezes_price() {
        let grid = TimeGrid::uniform(2.0, 16).unwrap();
        let b = simulate_gbm(&Volatility::Flat(0.0), 3.0, &grid, &policy(), 0).unwrap();
        assert!(b.s[0].iter().all(|&s| s == 3.0));
        assert!(b.w.iter().skip(1).any(|&w| w != 0.0));
    }

    #[test]
    fn gbm_rejects_bad_parameters() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        assert!(simulate_gbm(&Volatility::Flat(1.0), 0.0, &grid, &policy(), 0).is_err());
        assert!(simulate_gbm(&Volatility::Flat(-1.0), 1.0, &grid, &policy(), 0).is_err());
        assert!(simulate_gbm(&Volatility::PerCell(vec![1.0; 3]), 1.0, &grid, &policy(), 0).is_err());
    }

    #[test]
    fn gbm_is_deterministic_per_seed_and_index() {
        let grid = TimeGrid::uniform(1.0, 32).unwrap();
        let a = simulate_gbm(&Volatility::Flat(1.0), 1.0, &grid, &policy(), 11).unwrap();
        let b = simulate_gbm(&Volatility::Flat(1.0), 1.0, &grid, &policy(), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_order_is_independent_of_worker_count() {
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                batch(64, |i| {
                    simulate_gbm(&Volatility::Flat(1.0), 1.0, &grid, &policy(), i)
                        .unwrap()
                        .w[8]
                })
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn gbm_martingale_mean() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let terminal: Vec<f64> = batch(20000, |i| {
            simulate_gbm(&Volatility::Flat(1.0), 1.0, &grid, &policy(), i)
                .unwrap()
                .s[0][4]
        });
        let (m, se) = mean_stderr(&terminal);
        assert!((m - 1.0).abs() < 4.0 * se, "mean {m} stderr {se}");
    }

    #[test]
    fn poisson_closed_form_and_running_counts() {
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        for i in 0..100 {
            let b = simulate_poisson_pair(&grid, 1.0, 2.0, &policy(), i).unwrap();
            assert!(b.n1.windows(2).all(|w| w[1] >= w[0]));
            assert!(b.n2.windows(2).all(|w| w[1] >= w[0]));
            for (j, &t) in grid.times().iter().enumerate() {
                let e1 = 1.0 * (-t).exp() * 2f64.powi(b.n1[j] as i32);
                let e2 = 2.0 * (-t).exp() * 2f64.powi(b.n2[j] as i32);
                assert_abs_diff_eq!(b.s[0][j], e1, epsilon = 1e-12 * e1);
                assert_abs_diff_eq!(b.s[1][j], e2, epsilon = 1e-12 * e2);
            }
        }
    }

    #[test]
    fn poisson_jump_count_mean() {
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let counts: Vec<f64> = batch(10000, |i| {
            simulate_poisson_pair(&grid, 1.0, 1.0, &policy(), i).unwrap().n1[2] as f64
        });
        let m = crate::numerics::mean(&counts);
        assert!((m - 1.0).abs() < 4.0 * (1.0f64 / 10000.0).sqrt());
    }

    #[test]
    fn poisson_compensated_price_mean() {
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let prices: Vec<f64> = batch(20000, |i| {
            simulate_poisson_pair(&grid, 1.0, 1.0, &policy(), i).unwrap().s[0][2]
        });
        let (m, se) = mean_stderr(&prices);
        assert!((m - 1.0).abs() < 4.0 * se, "mean {m} stderr {se}");
    }

    #[test]
    fn terminal_max_dominates_and_matches_reflection_cdf() {
        let t = 1.0;
        let n = 10000;
        let mut maxima = Vec::with_capacity(n);
        for i in 0..n {
            let (w, m) = sample_terminal_max_pair(t, &policy(), i as u64);
            assert!(m >= w.max(0.0));
            maxima.push(m);
        }
        let d = ks_statistic(&maxima, |m| {
            if m <= 0.0 {
                0.0
            } else {
                2.0 * norm_cdf(m / t.sqrt()) - 1.0
            }
        });
        assert!(d < ks_critical_1pct(n), "KS statistic {d}");
    }

    #[test]
    fn reflection_bundle_invariants() {
        let grid = TimeGrid::uniform(1.0, 32).unwrap();
        for i in 0..200 {
            let b = simulate_reflection(&grid, &policy(), i).unwrap();
            let u = b.u_indep.unwrap();
            assert!((0.0..1.0).contains(&u));
            assert!(b.w_max.windows(2).all(|w| w[1] >= w[0]));
            let mut running = 0.0f64;
            for j in 0..b.w.len() {
                running = running.max(b.w[j]);
                assert!(b.w_max[j] >= running - 1e-15);
            }
        }
    }

    #[test]
    fn reflection_terminal_sampler_matches_bundle_law() {
        // same marginal KS check as the bundle-level maximum
        let t = 1.0;
        let n = 10000;
        let grid = TimeGrid::uniform(t, 16).unwrap();
        let from_bundle: Vec<f64> = batch(n, |i| {
            simulate_reflection(&grid, &policy(), i).unwrap().w_max[16]
        });
        let d = ks_statistic(&from_bundle, |m| {
            if m <= 0.0 {
                0.0
            } else {
                2.0 * norm_cdf(m / t.sqrt()) - 1.0
            }
        });
        assert!(d < ks_critical_1pct(n), "KS statistic {d}");
        let (_, m, u) = sample_reflection_terminal(t, &policy(), 3);
        assert!(m >= 0.0 && (0.0..1.0).contains(&u));
    }

    #[test]
    fn csv_dump_has_one_row_per_grid_time() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let b = simulate_gbm(&Volatility::Flat(1.0), 1.0, &grid, &policy(), 0).unwrap();
        let mut buf = Vec::new();
        b.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "t,w,w_max,n1,n2,z,s1");
    }
}
