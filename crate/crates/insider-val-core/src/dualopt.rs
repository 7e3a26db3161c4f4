//! Leveraged optimal consumption by convex duality.
//!
//! The agent consumes at the dates of a clock, financed by trading the
//! model's assets, starting from `v` with a credit line of size `k` (wealth
//! may dip to `-k` but consumption stays nonnegative). For an insider the
//! budget splits per signal atom: conditionally on `L = x` the deflated
//! consumption budget is `RHS_x = v + k (1 - m_x)`, where `m_x` is the
//! conditional expectation of the insider's terminal deflator. In the worked
//! models the signal is determined at the horizon and `m_x = lambda_x`, so
//! leverage buys strictly more than `v` per atom; for an ordinary agent (or
//! a signal independent of the market) the credit line is worthless and the
//! budget stays `v`.
//!
//! All multipliers here are closed-form: the marginal utility pins the
//! optimal consumption atom by atom. Monte Carlo enters only through
//! [`expected_utility`], which re-simulates the market and evaluates the
//! candidate consumption plan path by path.

use crate::densities::{e_log_ql, e_pow_qx, DensityFamily, PathState};
use crate::mcsim::{batch, TimeGrid};
use crate::numerics::{integrate, mean_stderr};
use crate::rng::RngPolicy;
use crate::{CoreError, Result};
use serde::Serialize;
use std::sync::Arc;

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Consumption utility on `(0, inf)`.
#[derive(Clone)]
pub enum Utility {
    Log,
    /// `c^p / p` with `p` strictly inside `(0, 1)`.
    Power { p: f64 },
    /// `-exp(-alpha c)` with `alpha > 0`; the only utility here that
    /// tolerates zero consumption, so its optimal plan may sit at the corner.
    Exp { alpha: f64 },
    /// User-supplied utility with its marginal and inverse marginal.
    Custom {
        u: Arc<ScalarFn>,
        marginal: Arc<ScalarFn>,
        inverse_marginal: Arc<ScalarFn>,
    },
}

impl std::fmt::Debug for Utility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl Utility {
    pub fn power(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "power exponent must lie strictly in (0, 1), got {p}"
            )));
        }
        Ok(Utility::Power { p })
    }

    pub fn exponential(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(CoreError::InvalidParameter(format!(
                "exponential coefficient must be positive, got {alpha}"
            )));
        }
        Ok(Utility::Exp { alpha })
    }

    /// Custom utility; spot-checks the Inada shape on a log-spaced grid:
    /// the marginal must be positive and strictly decreasing, and the
    /// supplied inverse must actually invert it.
    pub fn custom(
        u: Arc<ScalarFn>,
        marginal: Arc<ScalarFn>,
        inverse_marginal: Arc<ScalarFn>,
    ) -> Result<Self> {
        let mut prev = f64::INFINITY;
        for i in -6..=6 {
            let c = 10f64.powi(i);
            let m = marginal(c);
            if !(m > 0.0 && m.is_finite()) {
                return Err(CoreError::InvalidParameter(format!(
                    "marginal utility must be positive and finite, got {m} at c = {c}"
                )));
            }
            if m >= prev {
                return Err(CoreError::InvalidParameter(format!(
                    "marginal utility must be strictly decreasing (violated at c = {c})"
                )));
            }
            prev = m;
            let back = inverse_marginal(m);
            if (back - c).abs() > 1e-6 * c.max(1.0) {
                return Err(CoreError::InvalidParameter(format!(
                    "inverse marginal does not invert the marginal at c = {c} (got {back})"
                )));
            }
            if !u(c).is_finite() {
                return Err(CoreError::InvalidParameter(format!(
                    "utility must be finite at c = {c}"
                )));
            }
        }
        Ok(Utility::Custom {
            u,
            marginal,
            inverse_marginal,
        })
    }

    pub fn name(&self) -> String {
        match self {
            Utility::Log => "log".into(),
            Utility::Power { p } => format!("power(p={p})"),
            Utility::Exp { alpha } => format!("exp(alpha={alpha})"),
            Utility::Custom { .. } => "custom".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Utility::Power { p } if !(*p > 0.0 && *p < 1.0) => Err(CoreError::InvalidParameter(
                format!("power exponent must lie strictly in (0, 1), got {p}"),
            )),
            Utility::Exp { alpha } if !(*alpha > 0.0 && alpha.is_finite()) => {
                Err(CoreError::InvalidParameter(format!(
                    "exponential coefficient must be positive, got {alpha}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn u(&self, c: f64) -> f64 {
        match self {
            Utility::Log => c.ln(),
            Utility::Power { p } => c.powf(*p) / p,
            Utility::Exp { alpha } => -(-alpha * c).exp(),
            Utility::Custom { u, .. } => u(c),
        }
    }

    pub fn marginal(&self, c: f64) -> f64 {
        match self {
            Utility::Log => 1.0 / c,
            Utility::Power { p } => c.powf(p - 1.0),
            Utility::Exp { alpha } => alpha * (-alpha * c).exp(),
            Utility::Custom { marginal, .. } => marginal(c),
        }
    }

    /// Inverse marginal clamped to the consumption domain; the exponential
    /// corner (marginal price above `alpha`) maps to zero consumption.
    pub fn inverse_marginal(&self, y: f64) -> f64 {
        let c = match self {
            Utility::Log => 1.0 / y,
            Utility::Power { p } => y.powf(1.0 / (p - 1.0)),
            Utility::Exp { alpha } => (alpha / y).ln() / alpha,
            Utility::Custom {
                inverse_marginal, ..
            } => inverse_marginal(y),
        };
        c.max(0.0)
    }
}

/// Consumption clock: where utility accrues on `[0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Clock {
    /// All consumption at the horizon.
    TerminalOnly,
    /// Finitely many dates with nonnegative weights.
    Weighted { times: Vec<f64>, weights: Vec<f64> },
    /// Continuous consumption at a constant rate on `[0, T]`.
    Lebesgue { rate: f64 },
}

impl Clock {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        match self {
            Clock::TerminalOnly => Ok(()),
            Clock::Weighted { times, weights } => {
                if times.is_empty() || times.len() != weights.len() {
                    return Err(CoreError::InvalidParameter(
                        "clock needs matching nonempty times and weights".into(),
                    ));
                }
                if times
                    .windows(2)
                    .any(|w| !(w[1] > w[0]))
                {
                    return Err(CoreError::InvalidParameter(
                        "clock times must be strictly increasing".into(),
                    ));
                }
                if times[0] < 0.0 || *times.last().unwrap() > horizon {
                    return Err(CoreError::InvalidParameter(format!(
                        "clock times must lie in [0, {horizon}]"
                    )));
                }
                if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                    return Err(CoreError::InvalidParameter(
                        "clock weights must be nonnegative and finite".into(),
                    ));
                }
                if weights.iter().sum::<f64>() <= 0.0 {
                    return Err(CoreError::InvalidParameter(
                        "clock must carry positive total mass".into(),
                    ));
                }
                Ok(())
            }
            Clock::Lebesgue { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(CoreError::InvalidParameter(
                        "clock rate must be positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Total mass `kappa_T`.
    pub fn total_mass(&self, horizon: f64) -> f64 {
        match self {
            Clock::TerminalOnly => 1.0,
            Clock::Weighted { weights, .. } => weights.iter().sum(),
            Clock::Lebesgue { rate } => rate * horizon,
        }
    }

    /// `int f(t) kappa(dt)`, with `f` evaluated exactly at the atoms for
    /// discrete clocks and integrated adaptively for the continuous one.
    pub fn expectation<F: Fn(f64) -> Result<f64>>(&self, horizon: f64, f: F) -> Result<f64> {
        match self {
            Clock::TerminalOnly => f(horizon),
            Clock::Weighted { times, weights } => {
                let mut acc = 0.0;
                for (&t, &w) in times.iter().zip(weights) {
                    if w > 0.0 {
                        acc += w * f(t)?;
                    }
                }
                Ok(acc)
            }
            Clock::Lebesgue { rate } => {
                let first_err = std::cell::RefCell::new(None);
                let inner = integrate(
                    |u| match f(u.clamp(0.0, horizon)) {
                        Ok(v) => v,
                        Err(e) => {
                            first_err.borrow_mut().get_or_insert(e);
                            f64::NAN
                        }
                    },
                    0.0,
                    horizon,
                    1e-9,
                );
                if let Some(e) = first_err.into_inner() {
                    return Err(e);
                }
                Ok(rate * inner?)
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Clock::TerminalOnly => "terminal".into(),
            Clock::Weighted { times, .. } => format!("weighted({} dates)", times.len()),
            Clock::Lebesgue { rate } => format!("lebesgue(rate={rate})"),
        }
    }
}

/// Whose information set the agent trades on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Insider,
    Ordinary,
}

#[derive(Clone, Debug)]
struct AtomInfo {
    x: f64,
    lambda: f64,
    /// `m_x = E[Z^G_T | L = x]`: the leverage discount of atom `x`.
    m: f64,
}

/// One consumption-investment problem instance.
#[derive(Clone, Debug)]
pub struct Problem {
    pub model: DensityFamily,
    pub utility: Utility,
    pub clock: Clock,
    pub role: Role,
    pub v: f64,
    pub k: f64,
    atoms: Vec<AtomInfo>,
    v_floor: f64,
    /// Whether the insider's terminal deflator is the sure constant `m_x`
    /// conditionally on `L = x`: true for signals measurable at the horizon
    /// (deflator `lambda_x`) and for independent signals (deflator 1), the
    /// cases where the exponential and custom duals close.
    sure_terminal: bool,
}

impl Problem {
    /// Validates parameters and derives the starting-capital floor: an
    /// insider may fund `v` down to `-k (1 - max_x m_x)` exclusive; an
    /// ordinary agent needs strictly positive capital.
    pub fn new(
        model: DensityFamily,
        utility: Utility,
        clock: Clock,
        role: Role,
        v: f64,
        k: f64,
    ) -> Result<Self> {
        utility.validate()?;
        clock.validate(model.horizon())?;
        if !v.is_finite() {
            return Err(CoreError::InvalidParameter("v must be finite".into()));
        }
        if !(k >= 0.0 && k.is_finite()) {
            return Err(CoreError::InvalidParameter(
                "credit line k must be nonnegative and finite".into(),
            ));
        }
        let (atoms, sure_terminal) = match (&model, role) {
            (DensityFamily::ReflectionUniform { .. }, Role::Insider) => {
                return Err(CoreError::Inapplicable(
                    "the insider optimizer needs a discrete signal; the continuous-signal \
                     model is served by the Monte Carlo valuation paths"
                        .into(),
                ))
            }
            (DensityFamily::ReflectionUniform { .. }, Role::Ordinary) => (Vec::new(), false),
            (DensityFamily::CustomDiscrete { independent, .. }, _) => {
                // custom conditional laws are assumed arbitrage-clean
                // (q > 0 almost surely), so the credit line is worthless
                let atoms = model
                    .signal()?
                    .atoms()
                    .unwrap()
                    .iter()
                    .map(|&(x, lambda)| AtomInfo { x, lambda, m: 1.0 })
                    .collect();
                (atoms, *independent)
            }
            _ => {
                let atoms = model
                    .signal()?
                    .atoms()
                    .unwrap()
                    .iter()
                    .map(|&(x, lambda)| AtomInfo {
                        x,
                        lambda,
                        m: lambda,
                    })
                    .collect();
                (atoms, true)
            }
        };
        let v_floor = match role {
            Role::Ordinary => 0.0,
            Role::Insider => {
                let m_max = atoms.iter().map(|a| a.m).fold(0.0, f64::max);
                -k * (1.0 - m_max)
            }
        };
        if !(v > v_floor) {
            return Err(CoreError::InvalidParameter(format!(
                "starting capital {v} must exceed the floor {v_floor}"
            )));
        }
        Ok(Problem {
            model,
            utility,
            clock,
            role,
            v,
            k,
            atoms,
            v_floor,
            sure_terminal,
        })
    }

    pub fn v_floor(&self) -> f64 {
        self.v_floor
    }

    /// Per-atom deflated budgets `(x, lambda_x, RHS_x)`. The ordinary agent
    /// has a single budget `v` regardless of atoms.
    pub fn atom_budgets(&self) -> Vec<(f64, f64, f64)> {
        match self.role {
            Role::Ordinary => Vec::new(),
            Role::Insider => self
                .atoms
                .iter()
                .map(|a| (a.x, a.lambda, self.v + self.k * (1.0 - a.m)))
                .collect(),
        }
    }

    /// The same problem with a different starting capital (used by the
    /// indifference root finders).
    pub fn with_capital(&self, v: f64) -> Result<Self> {
        Problem::new(
            self.model.clone(),
            self.utility.clone(),
            self.clock.clone(),
            self.role,
            v,
            self.k,
        )
    }
}

/// Dual multiplier: one value for the ordinary agent, one per atom for the
/// insider.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Multiplier {
    Single(f64),
    PerAtom(Vec<(f64, f64)>),
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiplierSolution {
    pub multiplier: Multiplier,
    /// Insider budgets `(x, RHS_x)`; empty for the ordinary agent.
    pub rhs: Vec<(f64, f64)>,
    /// Power-case clock moments `(x, A_x)`; empty otherwise.
    pub a_factors: Vec<(f64, f64)>,
    /// Worst relative budget violation of the implied consumption plan.
    pub budget_residual: f64,
    pub method: String,
}

impl MultiplierSolution {
    /// Multiplier attached to signal value `x` (any `x` for the ordinary
    /// single multiplier).
    pub fn lambda_for(&self, x: f64) -> Result<f64> {
        match &self.multiplier {
            Multiplier::Single(l) => Ok(*l),
            Multiplier::PerAtom(list) => list
                .iter()
                .find(|(v, _)| *v == x)
                .map(|&(_, l)| l)
                .ok_or_else(|| {
                    CoreError::Inconsistent(format!("no multiplier for signal value {x}"))
                }),
        }
    }
}

// A_x = E[int (Z^G_u)^{p/(p-1)} kappa(du) | L = x], the clock moment behind
// the power-utility multiplier. The conditional moment identity turns it
// into the plain expectation E[(q^x_u)^{1/(1-p)}].
pub(crate) fn power_a_factor(model: &DensityFamily, clock: &Clock, x: f64, p: f64) -> Result<f64> {
    let expo = 1.0 / (1.0 - p);
    clock.expectation(model.horizon(), |u| e_pow_qx(model, x, u, expo))
}

/// Solves for the dual multiplier in closed form.
pub fn solve_multiplier(problem: &Problem) -> Result<MultiplierSolution> {
    let kappa = problem.clock.total_mass(problem.model.horizon());
    match problem.role {
        Role::Ordinary => {
            let c = problem.v / kappa;
            let lambda = problem.utility.marginal(c);
            let residual = (kappa * problem.utility.inverse_marginal(lambda) - problem.v).abs()
                / problem.v.max(1.0);
            Ok(MultiplierSolution {
                multiplier: Multiplier::Single(lambda),
                rhs: Vec::new(),
                a_factors: Vec::new(),
                budget_residual: residual,
                method: "closed-form".into(),
            })
        }
        Role::Insider => {
            let mut lambdas = Vec::with_capacity(problem.atoms.len());
            let mut rhs = Vec::with_capacity(problem.atoms.len());
            let mut a_factors = Vec::new();
            let mut residual = 0.0f64;
            let terminal = matches!(problem.clock, Clock::TerminalOnly);
            for a in &problem.atoms {
                let (x, m) = (a.x, a.m);
                let rhs_x = problem.v + problem.k * (1.0 - m);
                let (mult, res) = match (&problem.utility, terminal && problem.sure_terminal) {
                    (Utility::Log, _) => {
                        // budget of c_u = q^L_u/(Lambda Z_u) is kappa/Lambda
                        (kappa / rhs_x, 0.0)
                    }
                    (Utility::Power { p }, _) => {
                        let a = power_a_factor(&problem.model, &problem.clock, x, *p)?;
                        a_factors.push((x, a));
                        let mult = rhs_x.powf(p - 1.0) * a.powf(1.0 - p);
                        // budget = mult^{1/(p-1)} A_x
                        let back = mult.powf(1.0 / (p - 1.0)) * a;
                        (mult, (back - rhs_x).abs() / rhs_x.max(1.0))
                    }
                    (_, true) => {
                        // deflator given L = x is the sure constant m_x, so
                        // consumption is the sure amount RHS_x / m_x
                        let c = rhs_x / m;
                        let mult = problem.utility.marginal(c) / m;
                        let back = m * problem.utility.inverse_marginal(mult * m);
                        (mult, (back - rhs_x).abs() / rhs_x.max(1.0))
                    }
                    (_, false) => {
                        return Err(CoreError::Inapplicable(format!(
                            "{} utility is solved only for terminal clocks with a sure \
                             conditional deflator",
                            problem.utility.name()
                        )))
                    }
                };
                lambdas.push((x, mult));
                rhs.push((x, rhs_x));
                residual = residual.max(res);
            }
            Ok(MultiplierSolution {
                multiplier: Multiplier::PerAtom(lambdas),
                rhs,
                a_factors,
                budget_residual: residual,
                method: "closed-form".into(),
            })
        }
    }
}

/// Exact optimal expected utility.
pub fn optimal_utility(problem: &Problem) -> Result<f64> {
    let horizon = problem.model.horizon();
    let kappa = problem.clock.total_mass(horizon);
    match problem.role {
        Role::Ordinary => Ok(kappa * problem.utility.u(problem.v / kappa)),
        Role::Insider => {
            let budgets = problem.atom_budgets();
            match &problem.utility {
                Utility::Log => {
                    let base: f64 = budgets
                        .iter()
                        .map(|&(_, lam, rhs_x)| lam * kappa * (rhs_x.ln() - kappa.ln()))
                        .sum();
                    let info = problem
                        .clock
                        .expectation(horizon, |u| e_log_ql(&problem.model, u))?;
                    Ok(base + info)
                }
                Utility::Power { p } => {
                    let mut total = 0.0;
                    for &(x, lam, rhs_x) in &budgets {
                        let a = power_a_factor(&problem.model, &problem.clock, x, *p)?;
                        total += lam * rhs_x.powf(*p) * a.powf(1.0 - p);
                    }
                    Ok(total / p)
                }
                Utility::Exp { .. } | Utility::Custom { .. } => {
                    if !matches!(problem.clock, Clock::TerminalOnly) || !problem.sure_terminal {
                        return Err(CoreError::Inapplicable(format!(
                            "{} utility is solved only for terminal clocks with a sure \
                             conditional deflator",
                            problem.utility.name()
                        )));
                    }
                    Ok(problem
                        .atoms
                        .iter()
                        .map(|a| {
                            let rhs_x = problem.v + problem.k * (1.0 - a.m);
                            a.lambda * problem.utility.u(rhs_x / a.m)
                        })
                        .sum())
                }
            }
        }
    }
}

/// `t -> Z_t / q^L_t` along one simulated path, floored at 1e-300; returns
/// the curve and how many grid points hit the floor.
pub fn insider_deflator(
    model: &DensityFamily,
    bundle: &crate::mcsim::PathBundle,
    signal: f64,
) -> Result<(Vec<f64>, usize)> {
    let times = bundle.grid.times();
    let mut out = Vec::with_capacity(times.len());
    let mut floored = 0usize;
    for j in 0..times.len() {
        let state = PathState::at(bundle, j);
        let q = model.density(signal, times[j], &state)?;
        let q = if q < 1e-300 {
            floored += 1;
            1e-300
        } else {
            q
        };
        out.push(bundle.z[j] / q);
    }
    Ok((out, floored))
}

/// Monte Carlo estimate of the expected utility of the consumption plan
/// implied by `solution`.
#[derive(Clone, Debug, Serialize)]
pub struct UtilityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    /// Paths whose utility diverged to negative infinity; when nonzero the
    /// estimate itself is reported as divergent rather than numeric.
    pub n_divergent: usize,
    /// Grid points where the insider deflator hit its floor.
    pub n_floored: usize,
}

/// `(grid index, kappa weight)` pairs where consumption happens: clock
/// atoms map to their exact grid index, the continuous clock discretizes
/// with left-point weights on the grid cells.
pub(crate) fn clock_grid_weights(clock: &Clock, grid: &TimeGrid) -> Result<Vec<(usize, f64)>> {
    Ok(match clock {
        Clock::TerminalOnly => vec![(grid.n_steps(), 1.0)],
        Clock::Weighted { times, weights } => {
            let mut out = Vec::new();
            for (&t, &w) in times.iter().zip(weights) {
                if w > 0.0 {
                    out.push((grid.index_of(t)?, w));
                }
            }
            out
        }
        Clock::Lebesgue { rate } => {
            let times = grid.times();
            (0..grid.n_steps())
                .map(|j| (j, rate * (times[j + 1] - times[j])))
                .collect()
        }
    })
}

/// Estimates `E[sum_u w_u U(c_u)]` for the optimal plan by simulation. The
/// grid must contain every clock date; the continuous clock is discretized
/// with left-point weights on the grid cells.
pub fn expected_utility(
    problem: &Problem,
    solution: &MultiplierSolution,
    grid: &TimeGrid,
    n_paths: usize,
    rng: &RngPolicy,
) -> Result<UtilityEstimate> {
    if n_paths < 2 {
        return Err(CoreError::InvalidParameter("need at least 2 paths".into()));
    }
    let date_weights = clock_grid_weights(&problem.clock, grid)?;
    let times = grid.times();
    let utility = &problem.utility;
    let model = &problem.model;
    let per_path: Vec<(f64, usize)> = batch(n_paths, |i| {
        let b = model.simulate(grid, rng, i).expect("simulation");
        let (lam_mult, signal) = match problem.role {
            Role::Ordinary => (solution.lambda_for(f64::NAN).expect("multiplier"), f64::NAN),
            Role::Insider => {
                let l = model.signal_value(&b).expect("signal");
                (solution.lambda_for(l).expect("multiplier"), l)
            }
        };
        let mut total = 0.0;
        let mut floored = 0usize;
        for &(j, w) in &date_weights {
            let deflator = match problem.role {
                Role::Ordinary => b.z[j],
                Role::Insider => {
                    let state = PathState::at(&b, j);
                    let q = model.density(signal, times[j], &state).expect("density");
                    if q < 1e-300 {
                        floored += 1;
                        b.z[j] / 1e-300
                    } else {
                        b.z[j] / q
                    }
                }
            };
            let c = utility.inverse_marginal(lam_mult * deflator);
            total += w * utility.u(c);
        }
        (total, floored)
    });
    let n_floored = per_path.iter().map(|p| p.1).sum();
    let n_divergent = per_path.iter().filter(|p| !p.0.is_finite()).count();
    if n_divergent > 0 {
        return Ok(UtilityEstimate {
            value: f64::NEG_INFINITY,
            stderr: f64::NAN,
            n_paths,
            n_divergent,
            n_floored,
        });
    }
    let vals: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let (value, stderr) = mean_stderr(&vals);
    Ok(UtilityEstimate {
        value,
        stderr,
        n_paths,
        n_divergent,
        n_floored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::SignalSpec;
    use approx::assert_abs_diff_eq;

    fn gbm_r03() -> DensityFamily {
        DensityFamily::gbm_binary_from_r(0.3, 1.0).unwrap()
    }

    fn entropy_r03() -> f64 {
        -(0.7f64 * 0.7f64.ln() + 0.3 * 0.3f64.ln())
    }

    #[test]
    fn utility_validation() {
        assert!(Utility::power(0.5).is_ok());
        assert!(Utility::power(0.0).is_err());
        assert!(Utility::power(1.0).is_err());
        assert!(Utility::power(-0.2).is_err());
        assert!(Utility::exponential(1.0).is_ok());
        assert!(Utility::exponential(0.0).is_err());
        let ok = Utility::custom(
            Arc::new(|c: f64| c.ln()),
            Arc::new(|c: f64| 1.0 / c),
            Arc::new(|y: f64| 1.0 / y),
        );
        assert!(ok.is_ok());
        let bad = Utility::custom(
            Arc::new(|c: f64| c),
            Arc::new(|_c: f64| 1.0),
            Arc::new(|_y: f64| 1.0),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn utility_inverse_marginal_roundtrip() {
        for u in [Utility::Log, Utility::power(0.4).unwrap(), Utility::exponential(2.0).unwrap()] {
            for &c in &[0.3, 1.0, 4.5] {
                let y = u.marginal(c);
                assert_abs_diff_eq!(u.inverse_marginal(y), c, epsilon = 1e-12);
            }
        }
        // exponential corner: high marginal price drives consumption to zero
        let e = Utility::exponential(1.0).unwrap();
        assert_eq!(e.inverse_marginal(100.0), 0.0);
    }

    #[test]
    fn clock_validation_and_mass() {
        assert!(Clock::TerminalOnly.validate(1.0).is_ok());
        assert_eq!(Clock::TerminalOnly.total_mass(1.0), 1.0);
        let w = Clock::Weighted {
            times: vec![0.25, 0.5, 1.0],
            weights: vec![0.2, 0.3, 0.5],
        };
        assert!(w.validate(1.0).is_ok());
        assert_abs_diff_eq!(w.total_mass(1.0), 1.0, epsilon = 1e-15);
        assert!(Clock::Weighted {
            times: vec![0.5, 0.25],
            weights: vec![0.5, 0.5],
        }
        .validate(1.0)
        .is_err());
        assert!(Clock::Weighted {
            times: vec![0.5, 1.5],
            weights: vec![0.5, 0.5],
        }
        .validate(1.0)
        .is_err());
        assert!(Clock::Weighted {
            times: vec![0.5],
            weights: vec![0.0],
        }
        .validate(1.0)
        .is_err());
        assert!(Clock::Lebesgue { rate: 0.0 }.validate(1.0).is_err());
        assert_abs_diff_eq!(
            Clock::Lebesgue { rate: 2.0 }.total_mass(1.5),
            3.0,
            epsilon = 1e-15
        );
        // expectation of t over the unit-rate Lebesgue clock on [0,1]
        let half = Clock::Lebesgue { rate: 1.0 }
            .expectation(1.0, |t| Ok(t))
            .unwrap();
        assert_abs_diff_eq!(half, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn problem_floor_logic() {
        let model = gbm_r03();
        // insider floor: -k (1 - max lambda) = -0.3 k
        let p = Problem::new(
            model.clone(),
            Utility::Log,
            Clock::TerminalOnly,
            Role::Insider,
            1.0,
            2.0,
        )
        .unwrap();
        assert_abs_diff_eq!(p.v_floor(), -0.6, epsilon = 1e-15);
        assert!(Problem::new(
            model.clone(),
            Utility::Log,
            Clock::TerminalOnly,
            Role::Insider,
            p.v_floor(),
            2.0,
        )
        .is_err());
        assert!(Problem::new(
            model.clone(),
            Utility::Log,
            Clock::TerminalOnly,
            Role::Insider,
            -0.7,
            2.0,
        )
        .is_err());
        assert!(Problem::new(
            model.clone(),
            Utility::Log,
            Clock::TerminalOnly,
            Role::Ordinary,
            0.0,
            0.0,
        )
        .is_err());
        assert!(Problem::new(
            model,
            Utility::Log,
            Clock::TerminalOnly,
            Role::Insider,
            1.0,
            -1.0,
        )
        .is_err());
        let refl = DensityFamily::reflection_uniform(1.0).unwrap();
        assert!(matches!(
            Problem::new(
                refl.clone(),
                Utility::Log,
                Clock::TerminalOnly,
                Role::Insider,
                1.0,
                0.0
            ),
            Err(CoreError::Inapplicable(_))
        ));
        assert!(Problem::new(
            refl,
            Utility::Log,
            Clock::TerminalOnly,
            Role::Ordinary,
            1.0,
            0.0
        )
        .is_ok());
    }

    #[test]
    fn log_utilities_match_closed_forms() {
        let model = gbm_r03();
        let ord = Problem::new(
            model.clone(),
            Utility::Log,
            Clock::TerminalOnly,
            Role::Ordinary,
            1.0,
            0.0,
        )
        .unwrap();
        assert_abs_diff_eq!(optimal_utility(&ord).unwrap(), 0.0, epsilon = 1e-15);
        // k = 0 insider gains exactly the signal entropy
        let ins = Problem::new(
            model.clone(),
            Utility::Log,
            Clock::TerminalOnly,
            Role::Insider,
            1.0,
            0.0,
        )
        .unwrap();
        assert_abs_diff_eq!(
            optimal_utility(&ins).unwrap(),
            entropy_r03(),
            epsilon = 1e-12
        );
        // k = 1: frozen value of the leveraged insider's utility
        let lev = Problem::new(
            model,
            Utility::Log,
            Clock::TerminalOnly,
            Role::Insider,
            1.0,
            1.0,
        )
        .unwrap();
        let expect = 0.7f64 * 1.3f64.ln() + 0.3 * 1.7f64.ln() + entropy_r03();
        assert_abs_diff_eq!(optimal_utility(&lev).unwrap(), expect, epsilon = 1e-12);
        assert_abs_diff_eq!(expect, 0.95370776250078832, epsilon = 1e-14);
    }

    #[test]
    fn multiplier_closed_forms() {
        let model = gbm_r03();
        let ins = Problem::new(
            model.clone(),
            Utility::Log,
            Clock::TerminalOnly,
            Role::Insider,
            1.0,
            1.0,
        )
        .unwrap();
        let sol = solve_multiplier(&ins).unwrap();
        // log multiplier is kappa/RHS per atom
        assert_abs_diff_eq!(sol.lambda_for(0.0).unwrap(), 1.0 / 1.3, epsilon = 1e-14);
        assert_abs_diff_eq!(sol.lambda_for(1.0).unwrap(), 1.0 / 1.7, epsilon = 1e-14);
        assert!(sol.budget_residual < 1e-12);

        let ord = Problem::new(
            model.clone(),
            Utility::power(0.5).unwrap(),
            Clock::TerminalOnly,
            Role::Ordinary,
            4.0,
            0.0,
        )
        .unwrap();
        let sol = solve_multiplier(&ord).unwrap();
        match sol.multiplier {
            Multiplier::Single(l) => assert_abs_diff_eq!(l, 0.5, epsilon = 1e-14),
            _ => panic!("ordinary solution must be a single multiplier"),
        }

        let exp = Problem::new(
            model,
            Utility::exponential(1.0).unwrap(),
            Clock::TerminalOnly,
            Role::Insider,
            1.0,
            0.0,
        )
        .unwrap();
        let sol = solve_multiplier(&exp).unwrap();
        // Lambda_x = (alpha/lambda_x) e^{-alpha RHS_x / lambda_x}
        let expect_0 = (1.0 / 0.7) * (-1.0f64 / 0.7).exp();
        assert_abs_diff_eq!(sol.lambda_for(0.0).unwrap(), expect_0, epsilon = 1e-14);
        assert!(sol.budget_residual < 1e-12);
    }

    #[test]
    fn power_utility_terminal_closed_form() {
        let p = 0.5;
        let ins = Problem::new(
            gbm_r03(),
            Utility::power(p).unwrap(),
            Clock::TerminalOnly,
            Role::Insider,
            1.0,
            0.0,
        )
        .unwrap();
        // (1/p) sum lambda^{1-p} at v = 1
        let expect = (0.7f64.powf(1.0 - p) + 0.3f64.powf(1.0 - p)) / p;
        assert_abs_diff_eq!(optimal_utility(&ins).unwrap(), expect, epsilon = 1e-12);
        let sol = solve_multiplier(&ins).unwrap();
        assert!(sol.budget_residual < 1e-12);
        assert_eq!(sol.a_factors.len(), 2);
    }

    #[test]
    fn exp_weighted_clock_is_rejected() {
        let clock = Clock::Weighted {
            times: vec![0.5, 1.0],
            weights: vec![0.5, 0.5],
        };
        let prob = Problem::new(
            gbm_r03(),
            Utility::exponential(1.0).unwrap(),
            clock,
            Role::Insider,
            1.0,
            0.0,
        )
        .unwrap();
        assert!(matches!(
            solve_multiplier(&prob),
            Err(CoreError::Inapplicable(_))
        ));
        assert!(matches!(
            optimal_utility(&prob),
            Err(CoreError::Inapplicable(_))
        ));
    }

    #[test]
    fn hook_gains_nothing_from_information_or_leverage() {
        let sig = SignalSpec::discrete(vec![(0.0, 0.4), (1.0, 0.6)]).unwrap();
        let hook = DensityFamily::independent_hook(sig, 1.0).unwrap();
        for utility in [
            Utility::Log,
            Utility::power(0.5).unwrap(),
            Utility::exponential(1.0).unwrap(),
        ] {
            let ins = Problem::new(
                hook.clone(),
                utility.clone(),
                Clock::TerminalOnly,
                Role::Insider,
                1.0,
                1.0,
            )
            .unwrap();
            let ord = Problem::new(
                hook.clone(),
                utility,
                Clock::TerminalOnly,
                Role::Ordinary,
                1.0,
                0.0,
            )
            .unwrap();
            assert_abs_diff_eq!(
                optimal_utility(&ins).unwrap(),
                optimal_utility(&ord).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn mc_utility_matches_closed_log_value() {
        let model = gbm_r03();
        let ins = Problem::new(
            model,
            Utility::Log,
            Clock::TerminalOnly,
            Role::Insider,
            1.0,
            1.0,
        )
        .unwrap();
        let sol = solve_multiplier(&ins).unwrap();
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let est = expected_utility(&ins, &sol, &grid, 40_000, &RngPolicy::new(20240817)).unwrap();
        let closed = optimal_utility(&ins).unwrap();
        assert_eq!(est.n_divergent, 0);
        assert!(
            (est.value - closed).abs() < 3.0 * est.stderr,
            "{} vs {closed} +- {}",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn mc_utility_is_exact_for_ordinary_agent() {
        let ord = Problem::new(
            gbm_r03(),
            Utility::Log,
            Clock::TerminalOnly,
            Role::Ordinary,
            2.0,
            0.0,
        )
        .unwrap();
        let sol = solve_multiplier(&ord).unwrap();
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let est = expected_utility(&ord, &sol, &grid, 100, &RngPolicy::new(1)).unwrap();
        assert_abs_diff_eq!(est.value, 2.0f64.ln(), epsilon = 1e-13);
        assert!(est.stderr < 1e-13);
    }

    #[test]
    fn mc_utility_weighted_clock_log() {
        // two-date clock: closed value = sum_x lam kappa (ln RHS - ln kappa)
        // + sum_u w_u E[log q^L_u]
        let clock = Clock::Weighted {
            times: vec![0.5, 1.0],
            weights: vec![0.5, 0.5],
        };
        let ins = Problem::new(
            gbm_r03(),
            Utility::Log,
            clock,
            Role::Insider,
            1.0,
            0.0,
        )
        .unwrap();
        let closed = optimal_utility(&ins).unwrap();
        let sol = solve_multiplier(&ins).unwrap();
        let grid = TimeGrid::from_times(vec![0.0, 0.5, 1.0]).unwrap();
        let est = expected_utility(&ins, &sol, &grid, 40_000, &RngPolicy::new(20240817)).unwrap();
        assert!(
            (est.value - closed).abs() < 3.0 * est.stderr,
            "{} vs {closed} +- {}",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn insider_deflator_floors_and_reports() {
        let model = gbm_r03();
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let b = model.simulate(&grid, &RngPolicy::new(3), 0).unwrap();
        let l = model.signal_value(&b).unwrap();
        let (z, floored) = insider_deflator(&model, &b, l).unwrap();
        assert_eq!(z.len(), 5);
        assert_eq!(floored, 0);
        assert_abs_diff_eq!(z[0], 1.0, epsilon = 1e-12);
        assert!(z.iter().all(|&v| v > 0.0));
    }
}
