//! Signal laws and conditional density processes.
//!
//! For each signal value `x` the process `q^x_t` is the density of the
//! conditional law of the signal given market information at time `t` with
//! respect to its unconditional law. The three worked models have closed
//! forms; a generic discrete-signal hook accepts a user-supplied conditional
//! probability function. The mixing identity `E[f(L)] = E[int f(x) q^x_t
//! lambda(dx)]` is the consistency check used throughout.

use crate::mcsim::{
    simulate_gbm, simulate_poisson_pair, simulate_reflection, PathBundle, TimeGrid, Volatility,
};
use crate::numerics::{
    integrate, integrate_split, ln_factorial, mean_stderr, norm_cdf, norm_cdf_inv, norm_pdf,
};
use crate::rng::RngPolicy;
use crate::{CoreError, Result};
use std::sync::Arc;

/// Minimum atom probability; smaller atoms make `1/lambda_x` amplification
/// numerically meaningless and are rejected (or trimmed, for the truncated
/// Poisson law).
pub const MIN_ATOM_PROB: f64 = 1e-12;

/// The law of the inside-information variable.
#[derive(Clone, Debug, PartialEq)]
pub enum SignalSpec {
    /// Finitely many atoms `(value, probability)`.
    Discrete { atoms: Vec<(f64, f64)> },
    /// Continuous signal on `support`, described by its sampler and density.
    Continuous {
        support: (f64, f64),
        description: String,
    },
}

impl SignalSpec {
    /// Discrete law; validates positivity (each atom at least
    /// [`MIN_ATOM_PROB`]), total mass one within 1e-10, distinct values.
    pub fn discrete(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(CoreError::InvalidParameter("no atoms".into()));
        }
        let mut total = 0.0;
        for &(x, p) in &atoms {
            if !x.is_finite() {
                return Err(CoreError::InvalidParameter("atom value not finite".into()));
            }
            if !(p >= MIN_ATOM_PROB) {
                return Err(CoreError::InvalidParameter(format!(
                    "degenerate atom ({x}, {p}): probability below {MIN_ATOM_PROB}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-10 {
            return Err(CoreError::InvalidParameter(format!(
                "atom probabilities sum to {total}, not 1"
            )));
        }
        let mut values: Vec<f64> = atoms.iter().map(|a| a.0).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if values.windows(2).any(|w| w[0] == w[1]) {
            return Err(CoreError::InvalidParameter(
                "atom values must be distinct".into(),
            ));
        }
        Ok(SignalSpec::Discrete { atoms })
    }

    pub fn atoms(&self) -> Option<&[(f64, f64)]> {
        match self {
            SignalSpec::Discrete { atoms } => Some(atoms),
            SignalSpec::Continuous { .. } => None,
        }
    }
}

/// Path state at one grid time, the argument of density evaluators.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PathState {
    pub w: f64,
    pub w_max: f64,
    pub n1: u64,
    pub n2: u64,
    pub u_indep: f64,
}

impl PathState {
    /// State of `bundle` at grid index `idx`.
    pub fn at(bundle: &PathBundle, idx: usize) -> Self {
        PathState {
            w: bundle.w.get(idx).copied().unwrap_or(0.0),
            w_max: bundle.w_max.get(idx).copied().unwrap_or(0.0),
            n1: bundle.n1.get(idx).copied().unwrap_or(0),
            n2: bundle.n2.get(idx).copied().unwrap_or(0),
            u_indep: bundle.u_indep.unwrap_or(0.0),
        }
    }
}

type CondProbFn = dyn Fn(f64, f64, &PathState) -> f64 + Send + Sync;
type SignalOfPathFn = dyn Fn(&PathBundle) -> f64 + Send + Sync;

/// Conditional density family of one model: evaluators for `q^x_t` and
/// `q^x_T`, the signal law, and the signal realization on a path.
#[derive(Clone)]
pub enum DensityFamily {
    /// Brownian market, binary signal `L = 1 if W_T >= c else 0`.
    GbmBinary { c: f64, r: f64, horizon: f64 },
    /// Poisson pair market, signal `L = N^1_T - N^2_T`, law truncated to
    /// `|x| <= trunc` (atoms below [`MIN_ATOM_PROB`] trimmed).
    PoissonDiff { horizon: f64, trunc: i64 },
    /// Brownian market, signal mixing the running maximum with an
    /// independent uniform draw.
    ReflectionUniform { horizon: f64 },
    /// User-supplied discrete model: `cond_prob(x, t, state)` returns
    /// `P(L = x | F_t)` evaluated on the path state.
    CustomDiscrete {
        signal: SignalSpec,
        horizon: f64,
        cond_prob: Arc<CondProbFn>,
        signal_of_path: Option<Arc<SignalOfPathFn>>,
        /// True for signals independent of the market (`q^x == 1`), which
        /// admit the same closed moment formulas as no information at all.
        independent: bool,
    },
}

impl std::fmt::Debug for DensityFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DensityFamily::GbmBinary { c, r, horizon } => f
                .debug_struct("GbmBinary")
                .field("c", c)
                .field("r", r)
                .field("horizon", horizon)
                .finish(),
            DensityFamily::PoissonDiff { horizon, trunc } => f
                .debug_struct("PoissonDiff")
                .field("horizon", horizon)
                .field("trunc", trunc)
                .finish(),
            DensityFamily::ReflectionUniform { horizon } => f
                .debug_struct("ReflectionUniform")
                .field("horizon", horizon)
                .finish(),
            DensityFamily::CustomDiscrete { signal, horizon, .. } => f
                .debug_struct("CustomDiscrete")
                .field("signal", signal)
                .field("horizon", horizon)
                .finish(),
        }
    }
}

/// Law of the binary signal `1_{W_T >= c}`: atoms `{0, 1}` with
/// probabilities `{1-r, r}`, `r = 1 - Phi(c / sqrt(T))`. Rejects degenerate
/// thresholds (either probability below 1e-12).
pub fn gbm_binary_law(c: f64, t_horizon: f64) -> Result<SignalSpec> {
    if !(t_horizon > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "horizon must be positive, got {t_horizon}"
        )));
    }
    if !c.is_finite() {
        return Err(CoreError::InvalidParameter("threshold not finite".into()));
    }
    let r = 1.0 - norm_cdf(c / t_horizon.sqrt());
    if r < MIN_ATOM_PROB || 1.0 - r < MIN_ATOM_PROB {
        return Err(CoreError::InvalidParameter(format!(
            "degenerate signal: P(W_T >= {c}) = {r}"
        )));
    }
    SignalSpec::discrete(vec![(0.0, 1.0 - r), (1.0, r)])
}

/// The pair `(q^0_t, q^1_t)` of the binary-signal model at Brownian state
/// `w_t`: ratio-of-Gaussian-tails form for `t < T`, indicator form at `t = T`.
pub fn gbm_binary_density(c: f64, r: f64, t: f64, w_t: f64, t_horizon: f64) -> Result<(f64, f64)> {
    if !(0.0..=t_horizon).contains(&t) {
        return Err(CoreError::Domain(format!(
            "time {t} outside [0, {t_horizon}]"
        )));
    }
    if t == t_horizon {
        return Ok(if w_t >= c {
            (0.0, 1.0 / r)
        } else {
            (1.0 / (1.0 - r), 0.0)
        });
    }
    let h = (t_horizon - t).sqrt();
    let q0 = norm_cdf((c - w_t) / h) / (1.0 - r);
    let q1 = norm_cdf((w_t - c) / h) / r;
    Ok((q0, q1))
}

/// Probability that two independent unit-rate Poisson counts over `[0, t]`
/// differ by `x`: `e^{-2t} sum_k t^{2k+|x|} / (k! (k+|x|)!)`.
///
/// Series with term recurrence, first term in log space so large `|x|` does
/// not overflow; truncated at relative 1e-16 or 500 terms. `t <= 0` returns
/// the degenerate law at zero.
pub fn poisson_diff_pmf(x: i64, t: f64) -> f64 {
    if t <= 0.0 {
        return if x == 0 { 1.0 } else { 0.0 };
    }
    let ax = x.unsigned_abs();
    let ln_first = -2.0 * t + ax as f64 * t.ln() - ln_factorial(ax);
    let first = ln_first.exp();
    let mut sum = first;
    let mut term = first;
    let t2 = t * t;
    for k in 0..500u64 {
        term *= t2 / ((k as f64 + 1.0) * (k as f64 + 1.0 + ax as f64));
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
    }
    sum
}

/// `q^x_t` of the count-difference signal given `n_t = N^1_t - N^2_t`.
///
/// The remaining difference over `(t, T]` is independent of the past with
/// the same two-sided law over the shorter horizon, so the conditional
/// probability is the pmf of `x - n_t` over `T - t`.
pub fn poisson_density(x: i64, t: f64, n_t: i64, t_horizon: f64) -> Result<f64> {
    if !(0.0..=t_horizon).contains(&t) {
        return Err(CoreError::Domain(format!(
            "time {t} outside [0, {t_horizon}]"
        )));
    }
    let lam = poisson_diff_pmf(x, t_horizon);
    if t == t_horizon {
        return Ok(if n_t == x { 1.0 / lam } else { 0.0 });
    }
    Ok(poisson_diff_pmf(x - n_t, t_horizon - t) / lam)
}

/// The threshold map of the running-maximum model: `2x/(1-2x)` on
/// `[0, 1/2)`, `(2-2x)/(2x-1)` on `(1/2, 1]`, `+inf` at `x = 1/2`.
pub fn gamma_map(x: f64) -> f64 {
    if x < 0.5 {
        2.0 * x / (1.0 - 2.0 * x)
    } else if x > 0.5 {
        (2.0 - 2.0 * x) / (2.0 * x - 1.0)
    } else {
        f64::INFINITY
    }
}

/// Unconditional density of the running-maximum signal on `[0, 1]`:
/// `2 Phi(g/sqrt(T)) - 1 + sqrt(2T/pi) (1 - e^{-g^2/(2T)})` at `g = gamma_map(x)`.
pub fn reflection_lambda_density(x: f64, t_horizon: f64) -> f64 {
    let g = gamma_map(x);
    let root = (2.0 * t_horizon / std::f64::consts::PI).sqrt();
    if g.is_infinite() {
        return 1.0 + root;
    }
    2.0 * norm_cdf(g / t_horizon.sqrt()) - 1.0 + root * (1.0 - (-g * g / (2.0 * t_horizon)).exp())
}

/// Terminal density `q^x_T` of the running-maximum model: an indicator that
/// the maximum stayed below `gamma_map(x)` times `(1 + W*_T)` over the
/// lambda-density.
pub fn reflection_density_terminal(x: f64, w_max_t: f64, t_horizon: f64) -> f64 {
    let g = gamma_map(x);
    if w_max_t > g {
        return 0.0;
    }
    (1.0 + w_max_t) / reflection_lambda_density(x, t_horizon)
}

/// Interior density `q^x_t`, `t < T`, of the running-maximum model at state
/// `(w_t, w_max_t)`. The `x = 1/2` case is the continuous limit of the
/// generic branch and is reached through IEEE infinity arithmetic rather
/// than a separate formula.
pub fn reflection_density(
    x: f64,
    t: f64,
    w_t: f64,
    w_max_t: f64,
    t_horizon: f64,
) -> Result<f64> {
    if !(0.0..t_horizon).contains(&t) {
        return Err(CoreError::Domain(format!(
            "interior density needs 0 <= t < {t_horizon}, got {t} (use the terminal evaluator at T)"
        )));
    }
    debug_assert!(w_max_t >= w_t.max(0.0) - 1e-12);
    let g = gamma_map(x);
    if w_max_t > g {
        return Ok(0.0);
    }
    let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
    let h = (t_horizon - t).sqrt();
    let a = (w_max_t - w_t) / h;
    let dtg = (g - w_t) / h;
    let num = (1.0 + w_max_t) * sqrt_2pi * (norm_cdf(a) - 0.5)
        + (1.0 + w_t) * sqrt_2pi * (norm_cdf(dtg) - norm_cdf(a))
        + h * ((-a * a / 2.0).exp() - (-dtg * dtg / 2.0).exp());
    let den = if g.is_infinite() {
        (std::f64::consts::PI / 2.0).sqrt() + t_horizon.sqrt()
    } else {
        sqrt_2pi * (norm_cdf(g / t_horizon.sqrt()) - 0.5)
            + t_horizon.sqrt() * (1.0 - (-g * g / (2.0 * t_horizon)).exp())
    };
    Ok(num / den)
}

// Support interval of the indicator in the running-maximum model: for the
// current maximum m, q^x_t is nonzero exactly for x in [a(m), b(m)].
fn reflection_support(w_max: f64) -> (f64, f64) {
    let a = w_max / (2.0 + 2.0 * w_max);
    let b = (2.0 + w_max) / (2.0 + 2.0 * w_max);
    (a, b)
}

impl DensityFamily {
    /// Binary-signal Brownian model from the threshold `c`.
    pub fn gbm_binary(c: f64, horizon: f64) -> Result<Self> {
        let law = gbm_binary_law(c, horizon)?;
        let r = law.atoms().unwrap()[1].1;
        Ok(DensityFamily::GbmBinary { c, r, horizon })
    }

    /// Binary-signal Brownian model from the signal probability `r`.
    pub fn gbm_binary_from_r(r: f64, horizon: f64) -> Result<Self> {
        if !(r >= MIN_ATOM_PROB && 1.0 - r >= MIN_ATOM_PROB) {
            return Err(CoreError::InvalidParameter(format!(
                "signal probability {r} out of range"
            )));
        }
        if !(horizon > 0.0) {
            return Err(CoreError::InvalidParameter("horizon must be positive".into()));
        }
        let c = horizon.sqrt() * norm_cdf_inv(1.0 - r)?;
        Ok(DensityFamily::GbmBinary { c, r, horizon })
    }

    /// Count-difference Poisson model, law truncated at `|x| <= 40`.
    pub fn poisson_diff(horizon: f64) -> Result<Self> {
        Self::poisson_diff_with_trunc(horizon, 40)
    }

    pub fn poisson_diff_with_trunc(horizon: f64, trunc: i64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(CoreError::InvalidParameter("horizon must be positive".into()));
        }
        if trunc < 1 {
            return Err(CoreError::InvalidParameter("trunc must be >= 1".into()));
        }
        Ok(DensityFamily::PoissonDiff { horizon, trunc })
    }

    /// Running-maximum model with the uniform mixer.
    pub fn reflection_uniform(horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(CoreError::InvalidParameter("horizon must be positive".into()));
        }
        Ok(DensityFamily::ReflectionUniform { horizon })
    }

    /// Generic discrete model from a user conditional-probability function.
    /// `spot_states` are `(t, state)` pairs at which the mixing invariant
    /// `sum_x P(L=x|F_t) = 1` is checked at construction (1e-8), along with
    /// `q^x_0 = 1` at the origin state.
    pub fn custom_discrete(
        signal: SignalSpec,
        horizon: f64,
        cond_prob: Arc<CondProbFn>,
        signal_of_path: Option<Arc<SignalOfPathFn>>,
        spot_states: &[(f64, PathState)],
    ) -> Result<Self> {
        let atoms = signal
            .atoms()
            .ok_or_else(|| {
                CoreError::InvalidParameter("custom model requires a discrete signal".into())
            })?
            .to_vec();
        if !(horizon > 0.0) {
            return Err(CoreError::InvalidParameter("horizon must be positive".into()));
        }
        let origin = PathState::default();
        for &(x, p) in &atoms {
            let q0 = cond_prob(x, 0.0, &origin);
            if (q0 - p).abs() > 1e-8 {
                return Err(CoreError::Inconsistent(format!(
                    "custom model: P(L={x}|F_0) = {q0} != lambda = {p}"
                )));
            }
        }
        for (t, state) in spot_states {
            let total: f64 = atoms.iter().map(|&(x, _)| cond_prob(x, *t, state)).sum();
            if (total - 1.0).abs() > 1e-8 {
                return Err(CoreError::Inconsistent(format!(
                    "custom model: conditional probabilities sum to {total} at t={t}"
                )));
            }
        }
        Ok(DensityFamily::CustomDiscrete {
            signal: SignalSpec::Discrete { atoms },
            horizon,
            cond_prob,
            signal_of_path,
            independent: false,
        })
    }

    /// A signal independent of all market information: `q^x == 1` for every
    /// atom. The no-extra-information reference model.
    pub fn independent_hook(signal: SignalSpec, horizon: f64) -> Result<Self> {
        let atoms = signal
            .atoms()
            .ok_or_else(|| {
                CoreError::InvalidParameter("hook requires a discrete signal".into())
            })?
            .to_vec();
        let lookup = atoms.clone();
        let cond = move |x: f64, _t: f64, _s: &PathState| -> f64 {
            lookup
                .iter()
                .find(|&&(v, _)| v == x)
                .map(|&(_, p)| p)
                .unwrap_or(0.0)
        };
        let mut fam = Self::custom_discrete(
            SignalSpec::Discrete { atoms },
            horizon,
            Arc::new(cond),
            None,
            &[(horizon * 0.5, PathState::default())],
        )?;
        if let DensityFamily::CustomDiscrete {
            ref mut independent,
            ..
        } = fam
        {
            *independent = true;
        }
        Ok(fam)
    }

    pub fn model_id(&self) -> &'static str {
        match self {
            DensityFamily::GbmBinary { .. } => "gbm-binary",
            DensityFamily::PoissonDiff { .. } => "poisson-diff",
            DensityFamily::ReflectionUniform { .. } => "reflection-uniform",
            DensityFamily::CustomDiscrete { .. } => "custom-discrete",
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            DensityFamily::GbmBinary { horizon, .. }
            | DensityFamily::PoissonDiff { horizon, .. }
            | DensityFamily::ReflectionUniform { horizon }
            | DensityFamily::CustomDiscrete { horizon, .. } => *horizon,
        }
    }

    /// The signal law. Poisson truncates and trims atoms below
    /// [`MIN_ATOM_PROB`]; the trimmed tail mass is below 1e-10 at desk
    /// scales.
    pub fn signal(&self) -> Result<SignalSpec> {
        match self {
            DensityFamily::GbmBinary { r, .. } => {
                SignalSpec::discrete(vec![(0.0, 1.0 - r), (1.0, *r)])
            }
            DensityFamily::PoissonDiff { horizon, trunc } => {
                let mut atoms = Vec::new();
                for x in -trunc..=*trunc {
                    let p = poisson_diff_pmf(x, *horizon);
                    if p >= MIN_ATOM_PROB {
                        atoms.push((x as f64, p));
                    }
                }
                SignalSpec::discrete(atoms)
            }
            DensityFamily::ReflectionUniform { .. } => Ok(SignalSpec::Continuous {
                support: (0.0, 1.0),
                description: "W*_T/(2(1+W*_T)) + U/(1+W*_T), U uniform on [0,1] independent; \
                              lambda-density reflection_lambda_density"
                    .into(),
            }),
            DensityFamily::CustomDiscrete { signal, .. } => Ok(signal.clone()),
        }
    }

    /// `q^x_t` at a path state; `t = T` dispatches to the terminal form.
    pub fn density(&self, x: f64, t: f64, state: &PathState) -> Result<f64> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(CoreError::Domain(format!("time {t} outside [0, {horizon}]")));
        }
        if t == horizon {
            return self.terminal_density(x, state);
        }
        match self {
            DensityFamily::GbmBinary { c, r, horizon } => {
                let (q0, q1) = gbm_binary_density(*c, *r, t, state.w, *horizon)?;
                if x == 0.0 {
                    Ok(q0)
                } else if x == 1.0 {
                    Ok(q1)
                } else {
                    Err(CoreError::Domain(format!("unknown atom {x}")))
                }
            }
            DensityFamily::PoissonDiff { horizon, .. } => {
                let xi = int_atom(x)?;
                poisson_density(xi, t, state.n1 as i64 - state.n2 as i64, *horizon)
            }
            DensityFamily::ReflectionUniform { horizon } => {
                if !(0.0..=1.0).contains(&x) {
                    return Err(CoreError::Domain(format!("signal value {x} outside [0,1]")));
                }
                reflection_density(x, t, state.w, state.w_max, *horizon)
            }
            DensityFamily::CustomDiscrete {
                signal, cond_prob, ..
            } => {
                let lam = atom_prob(signal, x)?;
                Ok(cond_prob(x, t, state) / lam)
            }
        }
    }

    /// `q^x_T` at the terminal path state.
    pub fn terminal_density(&self, x: f64, state: &PathState) -> Result<f64> {
        match self {
            DensityFamily::GbmBinary { c, r, horizon } => {
                let (q0, q1) = gbm_binary_density(*c, *r, *horizon, state.w, *horizon)?;
                if x == 0.0 {
                    Ok(q0)
                } else if x == 1.0 {
                    Ok(q1)
                } else {
                    Err(CoreError::Domain(format!("unknown atom {x}")))
                }
            }
            DensityFamily::PoissonDiff { horizon, .. } => {
                let xi = int_atom(x)?;
                poisson_density(xi, *horizon, state.n1 as i64 - state.n2 as i64, *horizon)
            }
            DensityFamily::ReflectionUniform { horizon } => {
                if !(0.0..=1.0).contains(&x) {
                    return Err(CoreError::Domain(format!("signal value {x} outside [0,1]")));
                }
                Ok(reflection_density_terminal(x, state.w_max, *horizon))
            }
            DensityFamily::CustomDiscrete {
                signal,
                horizon,
                cond_prob,
                ..
            } => {
                let lam = atom_prob(signal, x)?;
                Ok(cond_prob(x, *horizon, state) / lam)
            }
        }
    }

    /// The signal realization carried by a simulated path.
    pub fn signal_value(&self, bundle: &PathBundle) -> Result<f64> {
        let last = bundle.grid.n_steps();
        match self {
            DensityFamily::GbmBinary { c, .. } => {
                Ok(if bundle.w[last] >= *c { 1.0 } else { 0.0 })
            }
            DensityFamily::PoissonDiff { .. } => {
                Ok(bundle.n1[last] as f64 - bundle.n2[last] as f64)
            }
            DensityFamily::ReflectionUniform { .. } => {
                let m = bundle.w_max[last];
                let u = bundle.u_indep.ok_or_else(|| {
                    CoreError::InvalidParameter(
                        "reflection signal needs the independent uniform draw".into(),
                    )
                })?;
                Ok(m / (2.0 * (1.0 + m)) + u / (1.0 + m))
            }
            DensityFamily::CustomDiscrete { signal_of_path, .. } => signal_of_path
                .as_ref()
                .map(|f| f(bundle))
                .ok_or_else(|| {
                    CoreError::Inapplicable(
                        "custom model carries no signal-of-path function".into(),
                    )
                }),
        }
    }

    /// Simulate one path of the market underlying this family. The grid's
    /// horizon must match the family's.
    pub fn simulate(&self, grid: &TimeGrid, rng: &RngPolicy, path_index: u64) -> Result<PathBundle> {
        if (grid.horizon() - self.horizon()).abs() > 1e-12 * self.horizon().max(1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "grid horizon {} does not match model horizon {}",
                grid.horizon(),
                self.horizon()
            )));
        }
        match self {
            DensityFamily::GbmBinary { .. } => {
                simulate_gbm(&Volatility::Flat(1.0), 1.0, grid, rng, path_index)
            }
            DensityFamily::PoissonDiff { .. } => {
                simulate_poisson_pair(grid, 1.0, 1.0, rng, path_index)
            }
            DensityFamily::ReflectionUniform { .. } => simulate_reflection(grid, rng, path_index),
            DensityFamily::CustomDiscrete { .. } => Err(CoreError::Inapplicable(
                "custom models have no built-in market simulator".into(),
            )),
        }
    }
}

fn int_atom(x: f64) -> Result<i64> {
    let rounded = x.round();
    if (x - rounded).abs() > 1e-9 || !rounded.is_finite() {
        return Err(CoreError::Domain(format!("{x} is not an integer atom")));
    }
    Ok(rounded as i64)
}

fn atom_prob(signal: &SignalSpec, x: f64) -> Result<f64> {
    signal
        .atoms()
        .and_then(|atoms| atoms.iter().find(|&&(v, _)| v == x))
        .map(|&(_, p)| p)
        .ok_or_else(|| CoreError::Domain(format!("unknown atom {x}")))
}

// ---------------------------------------------------------------------------
// Deterministic moments of the density process
// ---------------------------------------------------------------------------

// E over W_t ~ N(0, t) of a functional of the binary-model density pair.
fn gbm_state_expectation(
    c: f64,
    r: f64,
    t: f64,
    horizon: f64,
    g: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    let srt = t.sqrt();
    integrate(
        |y| {
            let w = srt * y;
            let (q0, q1) = gbm_binary_density(c, r, t, w, horizon).expect("t in range");
            norm_pdf(y) * g(q0, q1)
        },
        -10.0,
        10.0,
        1e-11,
    )
}

// E over the two-sided count difference at time t of a functional of the
// per-state density map (x -> q^x_t). The state sum is truncated at
// |n| <= trunc + 10 which keeps the neglected mass far below 1e-12.
fn poisson_state_expectation(trunc: i64, t: f64, g: impl Fn(i64) -> f64) -> f64 {
    let reach = trunc + 10;
    let mut total = 0.0;
    for n in -reach..=reach {
        let weight = poisson_diff_pmf(n, t);
        if weight > 0.0 {
            total += weight * g(n);
        }
    }
    total
}

/// `E[log q^L_t]` evaluated by deterministic quadrature or series for the
/// discrete worked models (via `E[f(q^L_t)] = E[sum_x lambda_x q^x_t f(q^x_t)]`).
/// Continuous and custom models are not supported here.
pub fn e_log_ql(model: &DensityFamily, t: f64) -> Result<f64> {
    let horizon = model.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(CoreError::Domain(format!("time {t} outside [0, {horizon}]")));
    }
    let qlogq = |q: f64| if q > 0.0 { q * q.ln() } else { 0.0 };
    match model {
        DensityFamily::GbmBinary { c, r, horizon } => {
            if t == 0.0 {
                return Ok(0.0);
            }
            if t == *horizon {
                // q^L_T = 1/lambda_L, so the mean log is the entropy
                return Ok(-((1.0 - r) * (1.0 - r).ln() + r * r.ln()));
            }
            gbm_state_expectation(*c, *r, t, *horizon, |q0, q1| {
                (1.0 - r) * qlogq(q0) + r * qlogq(q1)
            })
        }
        DensityFamily::PoissonDiff { horizon, trunc } => {
            if t == 0.0 {
                return Ok(0.0);
            }
            if t == *horizon {
                let atoms = model.signal()?;
                return Ok(atoms
                    .atoms()
                    .unwrap()
                    .iter()
                    .map(|&(_, p)| -p * p.ln())
                    .sum());
            }
            Ok(poisson_state_expectation(*trunc, t, |n| {
                let mut inner = 0.0;
                for x in n - trunc..=n + trunc {
                    let lam = poisson_diff_pmf(x, *horizon);
                    if lam >= MIN_ATOM_PROB {
                        let q = poisson_diff_pmf(x - n, horizon - t) / lam;
                        inner += lam * qlogq(q);
                    }
                }
                inner
            }))
        }
        DensityFamily::CustomDiscrete { independent: true, .. } => Ok(0.0),
        DensityFamily::CustomDiscrete { .. } | DensityFamily::ReflectionUniform { .. } => {
            Err(CoreError::Inapplicable(
                "deterministic log-moment available only for the discrete worked models".into(),
            ))
        }
    }
}

/// `E[(q^x_t)^expo]` (plain expectation over market states) for the discrete
/// worked models; closed form at the endpoints.
pub fn e_pow_qx(model: &DensityFamily, x: f64, t: f64, expo: f64) -> Result<f64> {
    let horizon = model.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(CoreError::Domain(format!("time {t} outside [0, {horizon}]")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    match model {
        DensityFamily::GbmBinary { c, r, horizon } => {
            let lam = if x == 0.0 {
                1.0 - r
            } else if x == 1.0 {
                *r
            } else {
                return Err(CoreError::Domain(format!("unknown atom {x}")));
            };
            if t == *horizon {
                return Ok(lam.powf(1.0 - expo));
            }
            gbm_state_expectation(*c, *r, t, *horizon, |q0, q1| {
                let q = if x == 0.0 { q0 } else { q1 };
                q.powf(expo)
            })
        }
        DensityFamily::PoissonDiff { horizon, trunc } => {
            let xi = int_atom(x)?;
            let lam = poisson_diff_pmf(xi, *horizon);
            if lam < MIN_ATOM_PROB {
                return Err(CoreError::Domain(format!("atom {x} below trim threshold")));
            }
            if t == *horizon {
                return Ok(lam.powf(1.0 - expo));
            }
            Ok(poisson_state_expectation(*trunc, t, |n| {
                (poisson_diff_pmf(xi - n, horizon - t) / lam).powf(expo)
            }))
        }
        DensityFamily::CustomDiscrete { independent: true, .. } => Ok(1.0),
        DensityFamily::CustomDiscrete { .. } | DensityFamily::ReflectionUniform { .. } => {
            Err(CoreError::Inapplicable(
                "deterministic power moment available only for the discrete worked models".into(),
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// Mixing identity check
// ---------------------------------------------------------------------------

/// Monte Carlo two-sample comparison of `E[f(L)]` against
/// `E[int f(x) q^x_t lambda(dx)]`, estimated on independent seeds.
#[derive(Clone, Debug)]
pub struct MixingReport {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub diff: f64,
    pub z: f64,
}

/// Checks the mixing identity at time `t` with `n_paths` per side.
pub fn mixing_identity_check(
    model: &DensityFamily,
    f: &(dyn Fn(f64) -> f64 + Sync),
    t: f64,
    n_paths: usize,
    rng: &RngPolicy,
) -> Result<MixingReport> {
    let horizon = model.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(CoreError::Domain(format!("time {t} outside [0, {horizon}]")));
    }
    if matches!(model, DensityFamily::CustomDiscrete { .. }) {
        return Err(CoreError::Inapplicable(
            "mixing check requires a worked model with a market simulator".into(),
        ));
    }
    let grid = if t > 0.0 && t < horizon {
        TimeGrid::from_times(vec![0.0, t, horizon])?
    } else {
        TimeGrid::from_times(vec![0.0, horizon])?
    };
    let t_idx = grid.index_of(t)?;

    let lhs_rng = rng.derived(0x6d69785f6c5f3031);
    let rhs_rng = rng.derived(0x6d69785f725f3032);

    let lhs_vals: Vec<f64> = crate::mcsim::batch(n_paths, |i| {
        let b = model.simulate(&grid, &lhs_rng, i).expect("simulation");
        f(model.signal_value(&b).expect("signal"))
    });

    let atoms = model.signal()?.atoms().map(|a| a.to_vec());
    let rhs_vals: Vec<f64> = crate::mcsim::batch(n_paths, |i| {
        let b = model.simulate(&grid, &rhs_rng, i).expect("simulation");
        let state = PathState::at(&b, t_idx);
        match (&atoms, model) {
            (Some(atoms), _) => atoms
                .iter()
                .map(|&(x, lam)| lam * f(x) * model.density(x, t, &state).expect("density"))
                .sum(),
            (None, DensityFamily::ReflectionUniform { horizon }) => {
                let (a, bb) = reflection_support(state.w_max);
                integrate_split(
                    |x| {
                        let q = if t == *horizon {
                            reflection_density_terminal(x, state.w_max, *horizon)
                        } else {
                            reflection_density(x, t, state.w, state.w_max, *horizon)
                                .expect("interior")
                        };
                        f(x) * q * reflection_lambda_density(x, *horizon)
                    },
                    &[a, 0.5, bb],
                    1e-9,
                )
                .expect("quadrature")
            }
            (None, _) => unreachable!("continuous signal implies reflection"),
        }
    });

    let (lhs, lhs_stderr) = mean_stderr(&lhs_vals);
    let (rhs, rhs_stderr) = mean_stderr(&rhs_vals);
    let diff = lhs - rhs;
    let pooled = (lhs_stderr * lhs_stderr + rhs_stderr * rhs_stderr).sqrt();
    let z = if pooled > 0.0 {
        diff / pooled
    } else if diff.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY * diff.signum()
    };
    Ok(MixingReport {
        lhs,
        lhs_stderr,
        rhs,
        rhs_stderr,
        diff,
        z,
    })
}
