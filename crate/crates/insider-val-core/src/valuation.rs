//! Monetary value of the signal: utility indifference prices and
//! model-free bounds.
//!
//! The indifference value `pi` solves `u_G(v - pi) = u_F(v)`: paying `pi`
//! for the signal (keeping the leverage it unlocks) leaves the insider
//! exactly as well off as trading without it. For the log and power
//! utilities without leverage the root is closed-form; everything else goes
//! through a bisection on the optimizer, either on its exact values or on
//! common-random-number Monte Carlo estimates.

use crate::densities::{e_log_ql, poisson_diff_pmf, DensityFamily, PathState};
use crate::dualopt::{
    clock_grid_weights, expected_utility, optimal_utility, power_a_factor, solve_multiplier,
    Clock, Problem, Role, Utility,
};
use crate::mcsim::{batch, TimeGrid};
use crate::numerics::mean_stderr;
use crate::rng::RngPolicy;
use crate::{CoreError, Result};
use serde::Serialize;

fn check_capital(v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(CoreError::InvalidParameter(format!(
            "starting capital must be positive, got {v}"
        )));
    }
    Ok(())
}

/// Total expected log weight of the signal over the clock,
/// `sum_u w_u E[log q^L_u]`; zero when the signal is independent.
pub fn information_log_gain(model: &DensityFamily, clock: &Clock) -> Result<f64> {
    clock.validate(model.horizon())?;
    clock.expectation(model.horizon(), |u| e_log_ql(model, u))
}

/// Closed-form log indifference value `v (1 - exp(-G / kappa_T))` with `G`
/// the information log gain. Leverage drops out of the log problem, so this
/// is the full answer for any credit line.
pub fn pi_log(model: &DensityFamily, clock: &Clock, v: f64) -> Result<f64> {
    check_capital(v)?;
    let g = information_log_gain(model, clock)?;
    let kappa = clock.total_mass(model.horizon());
    Ok(v * (1.0 - (-g / kappa).exp()))
}

#[derive(Clone, Debug, Serialize)]
pub struct McValue {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

/// Monte Carlo log indifference value; the only estimator here that works
/// for the continuous-signal model. The grid must contain every clock date.
pub fn pi_log_mc(
    model: &DensityFamily,
    clock: &Clock,
    v: f64,
    grid: &TimeGrid,
    n_paths: usize,
    rng: &RngPolicy,
) -> Result<McValue> {
    check_capital(v)?;
    clock.validate(model.horizon())?;
    if n_paths < 2 {
        return Err(CoreError::InvalidParameter("need at least 2 paths".into()));
    }
    let date_weights = clock_grid_weights(clock, grid)?;
    let times = grid.times();
    let gains: Vec<f64> = batch(n_paths, |i| {
        let b = model.simulate(grid, rng, i).expect("simulation");
        let l = model.signal_value(&b).expect("signal");
        let mut g = 0.0;
        for &(j, w) in &date_weights {
            let state = PathState::at(&b, j);
            let q = model.density(l, times[j], &state).expect("density");
            g += w * q.ln();
        }
        g
    });
    if gains.iter().any(|g| !g.is_finite()) {
        return Err(CoreError::Inconsistent(
            "log density diverged on a simulated path (q^L hit zero)".into(),
        ));
    }
    let (g_hat, g_se) = mean_stderr(&gains);
    let kappa = clock.total_mass(model.horizon());
    let value = v * (1.0 - (-g_hat / kappa).exp());
    // delta method: d pi / d G = v exp(-G/kappa) / kappa
    let stderr = v * (-g_hat / kappa).exp() / kappa * g_se;
    Ok(McValue {
        value,
        stderr,
        n_paths,
    })
}

/// Closed-form power indifference value without leverage,
/// `v (1 - kappa^{(1-p)/p} D^{-1/p})` with `D = sum_x lambda_x A_x^{1-p}`.
pub fn pi_power(model: &DensityFamily, clock: &Clock, v: f64, p: f64) -> Result<f64> {
    check_capital(v)?;
    Utility::power(p)?;
    clock.validate(model.horizon())?;
    let atoms = model
        .signal()?
        .atoms()
        .ok_or_else(|| {
            CoreError::Inapplicable(
                "closed power value needs a discrete signal; use the Monte Carlo path".into(),
            )
        })?
        .to_vec();
    let kappa = clock.total_mass(model.horizon());
    let d = match (model, clock) {
        (DensityFamily::PoissonDiff { horizon, .. }, Clock::TerminalOnly) => {
            // at the horizon D = sum_x lambda_x^{1-p}; the power fattens the
            // tail far past the enumeration trim, so sum the symmetric law
            // outward until the increments vanish
            let mut d = poisson_diff_pmf(0, *horizon).powf(1.0 - p);
            let mut x = 1i64;
            loop {
                let term = 2.0 * poisson_diff_pmf(x, *horizon).powf(1.0 - p);
                d += term;
                if term < 1e-17 * d && x >= 5 {
                    break;
                }
                x += 1;
                if x > 2000 {
                    return Err(CoreError::Solver(format!(
                        "power tail sum did not converge for p = {p}"
                    )));
                }
            }
            d
        }
        _ => {
            let mut d = 0.0;
            for &(x, lam) in &atoms {
                let a = power_a_factor(model, clock, x, p)?;
                d += lam * a.powf(1.0 - p);
            }
            d
        }
    };
    Ok(v * (1.0 - kappa.powf((1.0 - p) / p) * (-d.ln() / p).exp()))
}

/// Exponential indifference value at the terminal clock without leverage:
/// the root of `sum_x lambda_x exp(-alpha (v - pi)/lambda_x) = exp(-alpha v)`,
/// bisected to absolute width 1e-13. Only the worked discrete models carry
/// the sure terminal deflator this equation assumes.
pub fn pi_exp(model: &DensityFamily, v: f64, alpha: f64) -> Result<f64> {
    check_capital(v)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CoreError::InvalidParameter(format!(
            "exponential coefficient must be positive, got {alpha}"
        )));
    }
    if !matches!(
        model,
        DensityFamily::GbmBinary { .. } | DensityFamily::PoissonDiff { .. }
    ) {
        return Err(CoreError::Inapplicable(
            "closed exponential value covers the worked discrete models; use the generic \
             solver otherwise"
                .into(),
        ));
    }
    let atoms = model.signal()?.atoms().unwrap().to_vec();
    let target = (-alpha * v).exp();
    let h = |pi: f64| {
        atoms
            .iter()
            .map(|&(_, lam)| lam * (-alpha * (v - pi) / lam).exp())
            .sum::<f64>()
            - target
    };
    // h is strictly increasing with h(0) < 0 < h(v)
    let (mut lo, mut hi) = (0.0f64, v);
    if h(lo) > 0.0 || h(hi) < 0.0 {
        return Err(CoreError::Solver(
            "exponential indifference equation does not bracket a root".into(),
        ));
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if h(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Universal (utility-free) indifference value `(v + k)(1 - 1/q)`, defined
/// exactly when the terminal density `q^L_T` is the almost sure constant
/// `q`: equal-probability discrete signals (`q = 1/lambda`) and independent
/// signals (`q = 1`, value zero).
pub fn universal_value(model: &DensityFamily, v: f64, k: f64) -> Result<f64> {
    check_capital(v)?;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(CoreError::InvalidParameter(
            "credit line k must be nonnegative and finite".into(),
        ));
    }
    match model {
        DensityFamily::GbmBinary { .. } | DensityFamily::PoissonDiff { .. } => {
            let atoms = model.signal()?.atoms().unwrap().to_vec();
            let lam0 = atoms[0].1;
            if atoms.iter().any(|&(_, lam)| (lam - lam0).abs() > 1e-9) {
                return Err(CoreError::Inapplicable(
                    "universal value needs an almost surely constant terminal density, \
                     so all signal probabilities must be equal"
                        .into(),
                ));
            }
            Ok((v + k) * (1.0 - lam0))
        }
        DensityFamily::CustomDiscrete {
            independent: true, ..
        } => Ok(0.0),
        DensityFamily::CustomDiscrete { .. } => Err(CoreError::Inapplicable(
            "the terminal law of a custom conditional density is not known to be constant".into(),
        )),
        DensityFamily::ReflectionUniform { .. } => Err(CoreError::Inapplicable(
            "the continuous-signal terminal density is not almost surely constant".into(),
        )),
    }
}

/// Universal bounds on every utility indifference value:
/// `(v + k)(1 - 1/q_min)^+ <= pi <= (v + k)(1 - 1/q_max)` over the support
/// `[q_min, q_max]` of the terminal density.
pub fn uip_bounds(model: &DensityFamily, v: f64, k: f64) -> Result<(f64, f64)> {
    check_capital(v)?;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(CoreError::InvalidParameter(
            "credit line k must be nonnegative and finite".into(),
        ));
    }
    match model {
        DensityFamily::GbmBinary { .. } | DensityFamily::PoissonDiff { .. } => {
            let atoms = model.signal()?.atoms().unwrap().to_vec();
            // q^L_T = 1/lambda_L, so q ranges over the reciprocals
            let lam_max = atoms.iter().map(|a| a.1).fold(f64::MIN, f64::max);
            let lam_min = atoms.iter().map(|a| a.1).fold(f64::MAX, f64::min);
            Ok((
                ((v + k) * (1.0 - lam_max)).max(0.0),
                (v + k) * (1.0 - lam_min),
            ))
        }
        DensityFamily::CustomDiscrete {
            independent: true, ..
        } => Ok((0.0, 0.0)),
        DensityFamily::CustomDiscrete { .. } => Err(CoreError::Inapplicable(
            "the terminal law of a custom conditional density is not known".into(),
        )),
        DensityFamily::ReflectionUniform { .. } => Err(CoreError::Inapplicable(
            "the continuous-signal terminal density is unbounded, so the universal \
             bounds degenerate"
                .into(),
        )),
    }
}

fn g_entropy(y: f64) -> f64 {
    if y > 0.0 {
        y * y.ln()
    } else {
        0.0
    }
}

fn check_chi_pairs(pairs: &[(f64, f64)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(CoreError::InvalidParameter(
            "need at least one (probability, mass) pair".into(),
        ));
    }
    for &(lam, kbar) in pairs {
        if !(lam >= 0.0 && lam.is_finite() && kbar >= 0.0 && kbar.is_finite()) {
            return Err(CoreError::InvalidParameter(format!(
                "pairs must be nonnegative and finite, got ({lam}, {kbar})"
            )));
        }
    }
    Ok(())
}

/// Convexity functional of the insider's expected consumption masses:
/// `sum_x lambda_x g(kbar_x)` with `g(y) = y ln y`. Pairs are
/// `(lambda_x, kbar_x)`.
pub fn chi_insider(pairs: &[(f64, f64)]) -> Result<f64> {
    check_chi_pairs(pairs)?;
    Ok(pairs.iter().map(|&(lam, kbar)| lam * g_entropy(kbar)).sum())
}

/// Ordinary-information counterpart `g(sum_x lambda_x kbar_x)`; by Jensen
/// it never exceeds [`chi_insider`] on the same pairs.
pub fn chi_ordinary(pairs: &[(f64, f64)]) -> Result<f64> {
    check_chi_pairs(pairs)?;
    Ok(g_entropy(
        pairs.iter().map(|&(lam, kbar)| lam * kbar).sum(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueRegime {
    /// A finite indifference value exists in `(0, v]`.
    Interior,
    /// The leveraged insider prefers the signal at any price below
    /// `v - floor`; no indifference point exists.
    InformationDominates,
}

#[derive(Clone, Debug, Serialize)]
pub struct IndifferenceValue {
    pub pi: Option<f64>,
    pub stderr: Option<f64>,
    pub regime: ValueRegime,
    /// When no indifference point exists, every payment strictly below this
    /// amount is accepted.
    pub accepted_below: Option<f64>,
    pub u_ordinary: f64,
    pub u_insider: f64,
    pub method: String,
}

fn ordinary_value(problem: &Problem) -> Result<f64> {
    let ordinary = Problem::new(
        problem.model.clone(),
        problem.utility.clone(),
        problem.clock.clone(),
        Role::Ordinary,
        problem.v,
        0.0,
    )?;
    optimal_utility(&ordinary)
}

fn bisect_indifference(
    problem: &Problem,
    u_f: f64,
    u_insider: f64,
    width_tol: f64,
    mut u_g: impl FnMut(f64) -> Result<f64>,
) -> Result<IndifferenceValue> {
    let v = problem.v;
    let floor = problem.v_floor();
    let span = v - floor;
    // probe just above the floor: if the leveraged insider still beats the
    // ordinary agent there, no indifference point exists
    let probe = floor + 1e-9 * span;
    if u_g(probe)? >= u_f {
        return Ok(IndifferenceValue {
            pi: None,
            stderr: None,
            regime: ValueRegime::InformationDominates,
            accepted_below: Some(span),
            u_ordinary: u_f,
            u_insider,
            method: String::new(),
        });
    }
    let (mut lo, mut hi) = (probe, v);
    while hi - lo > width_tol {
        let mid = 0.5 * (lo + hi);
        if u_g(mid)? >= u_f {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(IndifferenceValue {
        pi: Some(v - hi),
        stderr: None,
        regime: ValueRegime::Interior,
        accepted_below: None,
        u_ordinary: u_f,
        u_insider,
        method: String::new(),
    })
}

/// Indifference value for any utility, clock, and credit line by bisecting
/// the exact optimizer in the starting capital. The problem must be posed
/// for the insider; the ordinary benchmark is rebuilt internally without
/// leverage (worthless to the uninformed in these arbitrage-free-for-them
/// markets).
pub fn pi_generic(problem: &Problem) -> Result<IndifferenceValue> {
    if problem.role != Role::Insider {
        return Err(CoreError::InvalidParameter(
            "indifference values are posed for the insider role".into(),
        ));
    }
    let u_f = ordinary_value(problem)?;
    let u_insider = optimal_utility(problem)?;
    let scale = u_f.abs().max(u_insider.abs()).max(1.0);
    if u_insider < u_f - 1e-9 * scale {
        return Err(CoreError::Inconsistent(format!(
            "insider value {u_insider} fell below the ordinary value {u_f}"
        )));
    }
    let tol = 1e-13 * (problem.v - problem.v_floor()).max(1.0);
    let mut out = bisect_indifference(problem, u_f, u_insider, tol, |w| {
        optimal_utility(&problem.with_capital(w)?)
    })?;
    out.method = "closed-bisection".into();
    Ok(out)
}

/// Indifference value estimated by Monte Carlo with common random numbers:
/// every capital level is evaluated on the same simulated paths, so the
/// estimated utility surface is monotone and the bisection is well posed.
/// The standard error converts the utility noise at the root through the
/// local slope.
pub fn pi_generic_mc(
    problem: &Problem,
    grid: &TimeGrid,
    n_paths: usize,
    rng: &RngPolicy,
) -> Result<IndifferenceValue> {
    if problem.role != Role::Insider {
        return Err(CoreError::InvalidParameter(
            "indifference values are posed for the insider role".into(),
        ));
    }
    let u_f = ordinary_value(problem)?;
    let u_hat = |w: f64| -> Result<crate::dualopt::UtilityEstimate> {
        let p = problem.with_capital(w)?;
        let sol = solve_multiplier(&p)?;
        expected_utility(&p, &sol, grid, n_paths, rng)
    };
    let at_v = u_hat(problem.v)?;
    if !at_v.value.is_finite() {
        return Err(CoreError::Inconsistent(
            "insider utility estimate diverged at full capital".into(),
        ));
    }
    let span = problem.v - problem.v_floor();
    let tol = 1e-8 * span.max(1.0);
    let mut out = bisect_indifference(problem, u_f, at_v.value, tol, |w| {
        let est = u_hat(w)?;
        Ok(est.value)
    })?;
    out.method = "mc-crn-bisection".into();
    if let Some(pi) = out.pi {
        let root = problem.v - pi;
        let h = (1e-4 * span).max(1e-8);
        let up = u_hat((root + h).min(problem.v))?;
        let down = u_hat((root - h).max(problem.v_floor() + 1e-12 * span))?;
        let slope = (up.value - down.value) / (((root + h).min(problem.v))
            - ((root - h).max(problem.v_floor() + 1e-12 * span)));
        if slope > 0.0 {
            let se_u = u_hat(root)?.stderr;
            out.stderr = Some(se_u / slope);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::SignalSpec;
    use approx::assert_abs_diff_eq;

    fn gbm_r03() -> DensityFamily {
        DensityFamily::gbm_binary_from_r(0.3, 1.0).unwrap()
    }

    #[test]
    fn log_value_binary_signal() {
        let pi = pi_log(&gbm_r03(), &Clock::TerminalOnly, 1.0).unwrap();
        assert_abs_diff_eq!(pi, 0.45711854731017464, epsilon = 1e-12);
        // scales linearly in capital
        let pi3 = pi_log(&gbm_r03(), &Clock::TerminalOnly, 3.0).unwrap();
        assert_abs_diff_eq!(pi3, 3.0 * pi, epsilon = 1e-12);
    }

    #[test]
    fn log_value_poisson_signal() {
        let model = DensityFamily::poisson_diff(1.0).unwrap();
        let pi = pi_log(&model, &Clock::TerminalOnly, 1.0).unwrap();
        assert_abs_diff_eq!(pi, 0.82815825770578233, epsilon = 1e-10);
    }

    #[test]
    fn log_value_independent_hook_is_zero() {
        let sig = SignalSpec::discrete(vec![(0.0, 0.4), (1.0, 0.6)]).unwrap();
        let hook = DensityFamily::independent_hook(sig, 1.0).unwrap();
        assert_abs_diff_eq!(
            pi_log(&hook, &Clock::TerminalOnly, 1.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn log_value_eight_date_clock() {
        let times: Vec<f64> = (1..=8).map(|i| i as f64 / 8.0).collect();
        let clock = Clock::Weighted {
            times,
            weights: vec![0.125; 8],
        };
        let pi = pi_log(&gbm_r03(), &clock, 1.0).unwrap();
        assert_abs_diff_eq!(pi, 0.21538465920595890, epsilon = 5e-9);
    }

    #[test]
    fn log_value_lebesgue_clock() {
        let clock = Clock::Lebesgue { rate: 1.0 };
        let pi = pi_log(&gbm_r03(), &clock, 1.0).unwrap();
        assert_abs_diff_eq!(pi, 0.18044145022059382, epsilon = 5e-9);
    }

    #[test]
    fn log_value_reflection_goes_through_mc() {
        let model = DensityFamily::reflection_uniform(1.0).unwrap();
        assert!(matches!(
            pi_log(&model, &Clock::TerminalOnly, 1.0),
            Err(CoreError::Inapplicable(_))
        ));
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let est = pi_log_mc(
            &model,
            &Clock::TerminalOnly,
            1.0,
            &grid,
            40_000,
            &RngPolicy::new(20240817),
        )
        .unwrap();
        let diff = (est.value - 0.22316744780893750).abs();
        assert!(
            diff < 3.0 * est.stderr,
            "{} vs frozen, se {}",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn log_value_mc_agrees_with_closed_form() {
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let est = pi_log_mc(
            &gbm_r03(),
            &Clock::TerminalOnly,
            1.0,
            &grid,
            40_000,
            &RngPolicy::new(20240817),
        )
        .unwrap();
        let closed = pi_log(&gbm_r03(), &Clock::TerminalOnly, 1.0).unwrap();
        assert!(
            (est.value - closed).abs() < 3.0 * est.stderr,
            "{} vs {closed}, se {}",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn power_value_sweep_binary_signal() {
        let model = gbm_r03();
        let cases = [
            (0.2, 0.46541846035828445),
            (0.5, 0.47821961869480001),
            (0.8, 0.49126834867820593),
            (0.1, 0.46124067906969103),
            (0.01, 0.45752808355359010),
            (0.001, 0.45715947330136878),
            (0.0001, 0.45712263963211734),
        ];
        for (p, expect) in cases {
            let pi = pi_power(&model, &Clock::TerminalOnly, 1.0, p).unwrap();
            assert_abs_diff_eq!(pi, expect, epsilon = 1e-11);
        }
        // increasing in the exponent and the log value sits below
        let ps = [0.0001, 0.001, 0.01, 0.1, 0.2, 0.5, 0.8];
        let vals: Vec<f64> = ps
            .iter()
            .map(|&p| pi_power(&model, &Clock::TerminalOnly, 1.0, p).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        let pil = pi_log(&model, &Clock::TerminalOnly, 1.0).unwrap();
        assert!((vals[0] - pil).abs() < 1e-3);
    }

    #[test]
    fn power_value_poisson_signal() {
        let model = DensityFamily::poisson_diff(1.0).unwrap();
        let pi = pi_power(&model, &Clock::TerminalOnly, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(pi, 0.86466398026034463, epsilon = 1e-10);
    }

    #[test]
    fn exp_value_sweep_binary_signal() {
        let model = gbm_r03();
        let cases = [
            (0.5, 0.47566915809141295, 1e-11),
            (1.0, 0.45139449180816201, 1e-11),
            (2.0, 0.40937312808155671, 1e-11),
            (1e-4, 0.49999523806500544, 1e-10),
        ];
        for (alpha, expect, tol) in cases {
            let pi = pi_exp(&model, 1.0, alpha).unwrap();
            assert_abs_diff_eq!(pi, expect, epsilon = tol);
            // residual check on both sides of the root
            let h = |pi: f64| {
                0.7f64 * (-alpha * (1.0 - pi) / 0.7).exp()
                    + 0.3 * (-alpha * (1.0 - pi) / 0.3).exp()
                    - (-alpha).exp()
            };
            assert!(h(pi - 1e-6) < 0.0 && h(pi + 1e-6) > 0.0);
        }
    }

    #[test]
    fn exp_value_poisson_signal() {
        let model = DensityFamily::poisson_diff(1.0).unwrap();
        let pi = pi_exp(&model, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(pi, 0.80922475898390429, epsilon = 1e-10);
    }

    #[test]
    fn universal_value_needs_constant_terminal_density() {
        let half = DensityFamily::gbm_binary_from_r(0.5, 1.0).unwrap();
        assert_abs_diff_eq!(universal_value(&half, 1.0, 0.0).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(universal_value(&half, 1.0, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(
            universal_value(&gbm_r03(), 1.0, 0.0),
            Err(CoreError::Inapplicable(_))
        ));
        let sig = SignalSpec::discrete(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let hook = DensityFamily::independent_hook(sig, 1.0).unwrap();
        assert_eq!(universal_value(&hook, 1.0, 2.0).unwrap(), 0.0);
        let refl = DensityFamily::reflection_uniform(1.0).unwrap();
        assert!(matches!(
            universal_value(&refl, 1.0, 0.0),
            Err(CoreError::Inapplicable(_))
        ));
    }

    #[test]
    fn bounds_contain_every_indifference_value() {
        let model = gbm_r03();
        let (lo, hi) = uip_bounds(&model, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(lo, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.7, epsilon = 1e-12);
        for pi in [
            pi_log(&model, &Clock::TerminalOnly, 1.0).unwrap(),
            pi_power(&model, &Clock::TerminalOnly, 1.0, 0.5).unwrap(),
            pi_exp(&model, 1.0, 1.0).unwrap(),
        ] {
            assert!(lo <= pi && pi <= hi);
        }
        let refl = DensityFamily::reflection_uniform(1.0).unwrap();
        assert!(uip_bounds(&refl, 1.0, 0.0).is_err());
    }

    #[test]
    fn convexity_functionals_frozen_instance() {
        // two-atom instance with deterministic masses 1 and 2
        let pairs = [(0.7, 1.0), (0.3, 2.0)];
        let chi_g = chi_insider(&pairs).unwrap();
        let chi_f = chi_ordinary(&pairs).unwrap();
        assert_abs_diff_eq!(chi_g, 0.41588830833596719, epsilon = 1e-15);
        assert_abs_diff_eq!(chi_f, 0.34107354380773837, epsilon = 1e-15);
        assert!(chi_g >= chi_f);
    }

    #[test]
    fn generic_value_matches_closed_log_forms() {
        let model = gbm_r03();
        for (k, expect) in [
            (0.0, 0.45711854731017464),
            (1.0, 0.85164944289616450),
            (2.0, 1.2119128156071592),
        ] {
            let prob = Problem::new(
                model.clone(),
                Utility::Log,
                Clock::TerminalOnly,
                Role::Insider,
                1.0,
                k,
            )
            .unwrap();
            let out = pi_generic(&prob).unwrap();
            assert_eq!(out.regime, ValueRegime::Interior);
            assert_abs_diff_eq!(out.pi.unwrap(), expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn generic_value_is_zero_for_the_hook() {
        let sig = SignalSpec::discrete(vec![(0.0, 0.4), (1.0, 0.6)]).unwrap();
        let hook = DensityFamily::independent_hook(sig, 1.0).unwrap();
        for utility in [
            Utility::Log,
            Utility::power(0.5).unwrap(),
            Utility::exponential(1.0).unwrap(),
        ] {
            let prob = Problem::new(
                hook.clone(),
                utility,
                Clock::TerminalOnly,
                Role::Insider,
                1.0,
                1.0,
            )
            .unwrap();
            let out = pi_generic(&prob).unwrap();
            assert_eq!(out.regime, ValueRegime::Interior);
            assert!(out.pi.unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn generic_value_detects_information_dominance() {
        // power utility with a big credit line: even surrendering all
        // capital down to the floor the insider still beats the ordinary
        let prob = Problem::new(
            gbm_r03(),
            Utility::power(0.5).unwrap(),
            Clock::TerminalOnly,
            Role::Insider,
            1.0,
            10.0,
        )
        .unwrap();
        let out = pi_generic(&prob).unwrap();
        assert_eq!(out.regime, ValueRegime::InformationDominates);
        assert!(out.pi.is_none());
        assert_abs_diff_eq!(out.accepted_below.unwrap(), 4.0, epsilon = 1e-9);
    }

    #[test]
    fn generic_value_rejects_ordinary_role() {
        let prob = Problem::new(
            gbm_r03(),
            Utility::Log,
            Clock::TerminalOnly,
            Role::Ordinary,
            1.0,
            0.0,
        )
        .unwrap();
        assert!(pi_generic(&prob).is_err());
    }

    #[test]
    fn generic_mc_value_agrees_with_closed_form() {
        let prob = Problem::new(
            gbm_r03(),
            Utility::Log,
            Clock::TerminalOnly,
            Role::Insider,
            1.0,
            0.0,
        )
        .unwrap();
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let out = pi_generic_mc(&prob, &grid, 20_000, &RngPolicy::new(20240817)).unwrap();
        let closed = 0.45711854731017464;
        let se = out.stderr.expect("stderr");
        assert!(
            (out.pi.unwrap() - closed).abs() < 3.0 * se,
            "{} vs {closed}, se {se}",
            out.pi.unwrap()
        );
        assert!(se > 0.0 && se < 0.05);
    }
}
