//! Revenue-guarantee objectives and their optimizers.
//!
//! Under band deviation rates the virtual revenue of the exponential price
//! mechanism depends on a message profile only through its count n of
//! boundary messages, so the guarantee is the prior-weighted pointwise
//! minimum of I+1 affine functions of the value. This module evaluates those
//! class revenues at finite k, their k -> infinity limits (reparameterized
//! by the demand scale A = a/k), and maximizes the resulting objectives:
//!
//! - the I-buyer exponential guarantee, maximizing over (A, X);
//! - the generalized two-buyer guarantee, maximizing over (A, Y0, Y1) with
//!   the inner (Y0, Y1) step solved exactly as an epigraph LP;
//! - the buyer-optimal signal bound (Roesler-Szentes), which the one-buyer
//!   exponential guarantee attains;
//! - the large-I asymptotics that approach the full surplus.
//!
//! For fixed A the exponential objective is a concave piecewise-linear
//! function of the payment scale X, and its exact maximum is found by
//! walking the kinks in ascending order until the slope changes sign; this
//! is the one-dimensional epigraph solve, specialized.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LinearProgram, LpError, LpStatus, Relation, Sense};
use crate::mechanism::FiniteMechanism;
use crate::numeric::{bisect_smallest_true, golden_max, golden_min, harmonic, integrate_with_kinks};
use crate::prior::{ContinuousPrior, DiscretePrior};
use crate::scalar::{fl, fu, Scalar};

#[derive(Debug, Error)]
pub enum GuaranteeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("root bracketing failed: {0}")]
    Bracketing(String),
}

/// Outer-search settings shared by the guarantee optimizers.
#[derive(Debug, Clone)]
pub struct SearchConfig<T> {
    /// Logarithmic demand-scale grid bounds and size.
    pub a_min: T,
    pub a_max: T,
    pub a_grid: usize,
    /// Golden-section refinement width around the best grid point.
    pub golden_width: T,
    /// Grid cells used when a continuous prior must be discretized.
    pub cells: usize,
}

impl<T: Scalar> Default for SearchConfig<T> {
    fn default() -> Self {
        SearchConfig {
            a_min: fl(1e-3),
            a_max: fl(10.0),
            a_grid: 200,
            golden_width: fl(1e-6),
            cells: 200,
        }
    }
}

/// Parameters attaining a guarantee.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub enum GuaranteeParams<T> {
    Exponential {
        buyers: usize,
        /// Demand scale A = a/k in the k -> infinity limit.
        a_scale: T,
        payment_scale: T,
        /// None marks the continuum limit; Some(k) a finite message count.
        k: Option<usize>,
    },
    GeneralizedTwoBuyer {
        a_scale: T,
        y0: T,
        y1: T,
        /// Whether the implied payments take negative values.
        negative_payment: bool,
    },
}

/// A certified guarantee value with the parameters that attain it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct GuaranteeResult<T> {
    pub value: T,
    pub params: GuaranteeParams<T>,
    /// Value thresholds where the minimizing profile class changes.
    pub breakpoints: Vec<T>,
    pub converged: bool,
}

/// Virtual revenue of any profile with `n_boundary` boundary messages under
/// band rates: a*v/k * sum_{j=n+1..I} 1/j + n*X*((1+1/a)^k - 1) - (I-n)*X.
pub fn class_revenue<T: Scalar>(
    v: T,
    n_boundary: usize,
    buyers: usize,
    k: usize,
    a: T,
    x: T,
) -> T {
    debug_assert!(n_boundary <= buyers);
    let tail: T = (n_boundary + 1..=buyers).map(|j| T::one() / fu::<T>(j)).sum();
    let top = growth_minus_one(a, k);
    a * v / fu(k) * tail + fu::<T>(n_boundary) * x * top
        - fu::<T>(buyers - n_boundary) * x
}

/// Value thresholds v(n) = (n+1) k X / a * (1+1/a)^k, n = 0..I-1, between
/// which the class with n boundary messages minimizes the virtual revenue.
pub fn class_breakpoints<T: Scalar>(buyers: usize, k: usize, a: T, x: T) -> Vec<T> {
    let growth = growth_minus_one(a, k) + T::one();
    (0..buyers)
        .map(|n| fu::<T>(n + 1) * fu::<T>(k) * x / a * growth)
        .collect()
}

/// (1 + 1/a)^k - 1, via the log for stability at large k.
fn growth_minus_one<T: Scalar>(a: T, k: usize) -> T {
    (fu::<T>(k) * (T::one() / a).ln_1p()).exp() - T::one()
}

/// Exact maximizer over the payment scale X >= 0 of
/// sum_v p(v) min_n [ A v H(n) + X ((n growth) - I) ], where H(n) is the
/// harmonic tail over ranks n+1..I and `growth` is (1+1/a)^k at finite k or
/// e^(1/A) in the limit.
///
/// The objective is concave piecewise linear in X; the kinks are
/// A v / ((n+1) growth), each dropping the slope by growth * p(v), so the
/// maximum sits at the first kink where the running slope turns nonpositive.
/// Returns (x, value).
pub fn best_payment_scale<T: Scalar>(
    prior: &DiscretePrior<T>,
    buyers: usize,
    a_scale: T,
    growth: T,
) -> (T, T) {
    let h_tail = harmonic_tails::<T>(buyers);
    let slope = |n: usize| fu::<T>(n) * growth - fu::<T>(buyers);

    // initial slope as X -> 0+: positive values sit on the empty-tail class,
    // value zero sits on the all-interior class
    let mut running = T::zero();
    let mut events: Vec<(T, T)> = Vec::with_capacity(prior.weights().len() * buyers);
    for (v, p) in prior.points() {
        if p == T::zero() {
            continue;
        }
        if v == T::zero() {
            running = running + p * slope(0);
        } else {
            running = running + p * slope(buyers);
            for n in 0..buyers {
                events.push((a_scale * v / (fu::<T>(n + 1) * growth), p));
            }
        }
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let objective = |x: T| -> T {
        let mut total = T::zero();
        for (v, p) in prior.points() {
            if p == T::zero() {
                continue;
            }
            let mut best = T::infinity();
            for (n, h) in h_tail.iter().enumerate() {
                best = best.min(a_scale * v * *h + x * slope(n));
            }
            total = total + p * best;
        }
        total
    };

    if running <= T::zero() {
        return (T::zero(), objective(T::zero()));
    }
    let mut i = 0usize;
    while i < events.len() {
        let x = events[i].0;
        // absorb every event at this kink before re-checking the slope
        while i < events.len() && events[i].0 == x {
            running = running - growth * events[i].1;
            i += 1;
        }
        if running <= T::zero() {
            return (x, objective(x));
        }
    }
    // all mass ends on the all-interior class with slope -I; unreachable for
    // proper priors, kept as a safe fallback
    let x = events.last().map(|e| e.0).unwrap_or_else(T::zero);
    (x, objective(x))
}

fn harmonic_tails<T: Scalar>(buyers: usize) -> Vec<T> {
    // h[n] = sum_{j=n+1..=I} 1/j
    let mut h = vec![T::zero(); buyers + 1];
    for n in (0..buyers).rev() {
        h[n] = h[n + 1] + T::one() / fu::<T>(n + 1);
    }
    h
}

fn continuum_growth<T: Scalar>(a_scale: T) -> Option<T> {
    let inv = T::one() / a_scale;
    if inv > fl(250.0) {
        None
    } else {
        Some(inv.exp())
    }
}

fn log_grid<T: Scalar>(cfg: &SearchConfig<T>) -> Vec<T> {
    let n = cfg.a_grid.max(2);
    let ratio = (cfg.a_max / cfg.a_min).ln();
    (0..n)
        .map(|i| cfg.a_min * (ratio * fu::<T>(i) / fu(n - 1)).exp())
        .collect()
}

/// Guarantee of the exponential price mechanism in the k -> infinity limit,
/// maximized over the demand scale A and payment scale X.
///
/// Outer search: logarithmic A grid then golden-section refinement around
/// the best grid point; ties keep the smallest A. The inner X step is exact.
pub fn exponential_guarantee<T: Scalar>(
    prior: &DiscretePrior<T>,
    buyers: usize,
    cfg: &SearchConfig<T>,
) -> Result<GuaranteeResult<T>, GuaranteeError> {
    if buyers == 0 {
        return Err(GuaranteeError::InvalidArgument("need at least one buyer".into()));
    }
    let eval = |a: T| -> Option<(T, T)> {
        continuum_growth(a).map(|growth| best_payment_scale(prior, buyers, a, growth))
    };

    let grid = log_grid(cfg);
    let mut best: Option<(T, usize, T, T)> = None; // (value, idx, a, x)
    for (i, &a) in grid.iter().enumerate() {
        if let Some((x, value)) = eval(a) {
            let better = match &best {
                None => true,
                Some((bv, _, _, _)) => value > *bv,
            };
            if better {
                best = Some((value, i, a, x));
            }
        }
    }
    let (_, idx, mut a_best, _) =
        best.ok_or_else(|| GuaranteeError::InvalidArgument("empty search grid".into()))?;
    let lo = grid[idx.saturating_sub(1)];
    let hi = grid[(idx + 1).min(grid.len() - 1)];
    if hi > lo {
        let (a_ref, _) = golden_max(
            &|a: T| eval(a).map(|(_, v)| v).unwrap_or_else(T::neg_infinity),
            lo,
            hi,
            cfg.golden_width,
        );
        a_best = a_ref;
    }
    let (x_best, value) = eval(a_best)
        .ok_or_else(|| GuaranteeError::InvalidArgument("refined scale out of range".into()))?;
    let growth = continuum_growth(a_best).unwrap();
    let breakpoints = (0..buyers)
        .map(|n| fu::<T>(n + 1) * x_best * growth / a_best)
        .collect();
    Ok(GuaranteeResult {
        value,
        params: GuaranteeParams::Exponential {
            buyers,
            a_scale: a_best,
            payment_scale: x_best,
            k: None,
        },
        breakpoints,
        converged: idx > 0 && idx + 1 < grid.len(),
    })
}

/// Continuous-prior front end: discretizes at `cfg.cells` first.
pub fn exponential_guarantee_continuous<T: Scalar>(
    prior: &ContinuousPrior<T>,
    buyers: usize,
    cfg: &SearchConfig<T>,
) -> Result<GuaranteeResult<T>, GuaranteeError> {
    let grid = prior
        .discretize(cfg.cells)
        .map_err(|e| GuaranteeError::InvalidArgument(e.to_string()))?;
    exponential_guarantee(&grid, buyers, cfg)
}

/// Inner epigraph LP of the generalized two-buyer guarantee at fixed A:
/// maximize sum_v p(v) t_v over (t, Y0, Y1) subject to, for every v,
/// t_v <= 1.5 A v - Y0, t_v <= 0.5 A v - Y1 and
/// t_v <= Y0 (e^(1/A)-1)^2 + 2 Y1 (e^(1/A)-1).
fn sharp_inner_lp<T: Scalar>(
    prior: &DiscretePrior<T>,
    a_scale: T,
) -> Result<Option<(T, T, T)>, GuaranteeError> {
    let growth = match continuum_growth(a_scale) {
        Some(g) => g,
        None => return Ok(None),
    };
    let e1 = growth - T::one();
    let (c3, d3) = (e1 * e1, fl::<T>(2.0) * e1);
    // Scales this small put ~1e9+ coefficients next to order-one rows and
    // wreck the solver's conditioning; no prior on [0,1] attains its optimum
    // there (it would need a binding-to-floor signal ratio above e^10).
    if !c3.is_finite() || c3 > fl(1e9) {
        return Ok(None);
    }
    let nv = prior.weights().len();
    let n_vars = nv + 2;
    let y0 = nv;
    let y1 = nv + 1;

    let mut objective = vec![T::zero(); n_vars];
    objective[..nv].copy_from_slice(prior.weights());
    let mut program = LinearProgram::new(Sense::Maximize, objective);
    for j in 0..n_vars {
        program.set_free(j);
    }
    for vi in 0..nv {
        let v = prior.value(vi);
        let mut low = vec![T::zero(); n_vars];
        low[vi] = T::one();
        low[y0] = T::one();
        program.add_constraint(low, Relation::Le, fl::<T>(1.5) * a_scale * v);
        let mut mid = vec![T::zero(); n_vars];
        mid[vi] = T::one();
        mid[y1] = T::one();
        program.add_constraint(mid, Relation::Le, fl::<T>(0.5) * a_scale * v);
        let mut top = vec![T::zero(); n_vars];
        top[vi] = T::one();
        top[y0] = -c3;
        top[y1] = -d3;
        program.add_constraint(top, Relation::Le, T::zero());
    }
    let sol = lp::solve(&program)?;
    if sol.status != LpStatus::Optimal {
        return Err(GuaranteeError::InvalidArgument(format!(
            "inner payment program reported {:?} at scale {a_scale}",
            sol.status
        )));
    }
    Ok(Some((sol.objective, sol.primal[y0], sol.primal[y1])))
}

/// Guarantee of the generalized two-buyer mechanism, maximized over
/// (A, Y0, Y1) in the k -> infinity limit; Y0 and Y1 are unconstrained in
/// sign and their attained signs are reported via the negative-payment flag.
///
/// The A search is staged for speed: a logarithmic grid on a coarse value
/// grid locates the region, golden refinement on a mid grid sharpens it, and
/// the final value is the inner LP on the full grid. The exponential
/// two-buyer optimum maps into this family (Y0 = 2X, Y1 = X - X(e^(1/A)-1)),
/// so its scale is always included as a fine-grid candidate; the reported
/// guarantee therefore never falls below the exponential one.
pub fn generalized_two_buyer_guarantee_continuous<T: Scalar>(
    prior: &ContinuousPrior<T>,
    cfg: &SearchConfig<T>,
) -> Result<GuaranteeResult<T>, GuaranteeError> {
    let to_err = |e: crate::prior::PriorError| GuaranteeError::InvalidArgument(e.to_string());
    let fine = prior.discretize(cfg.cells).map_err(to_err)?;
    let coarse = prior.discretize(cfg.cells.min(50)).map_err(to_err)?;
    let mid = prior.discretize(cfg.cells.min(100)).map_err(to_err)?;
    staged_sharp_search(&coarse, &mid, &fine, cfg)
}

/// Discrete-prior variant; all stages run on the given grid.
pub fn generalized_two_buyer_guarantee<T: Scalar>(
    prior: &DiscretePrior<T>,
    cfg: &SearchConfig<T>,
) -> Result<GuaranteeResult<T>, GuaranteeError> {
    staged_sharp_search(prior, prior, prior, cfg)
}

fn staged_sharp_search<T: Scalar>(
    coarse: &DiscretePrior<T>,
    mid: &DiscretePrior<T>,
    fine: &DiscretePrior<T>,
    cfg: &SearchConfig<T>,
) -> Result<GuaranteeResult<T>, GuaranteeError> {
    let grid = log_grid(cfg);
    let mut best: Option<(T, usize, T)> = None;
    for (i, &a) in grid.iter().enumerate() {
        if let Some((value, _, _)) = sharp_inner_lp(coarse, a)? {
            let better = match &best {
                None => true,
                Some((bv, _, _)) => value > *bv,
            };
            if better {
                best = Some((value, i, a));
            }
        }
    }
    let (_, idx, mut a_best) =
        best.ok_or_else(|| GuaranteeError::InvalidArgument("empty search grid".into()))?;
    let lo = grid[idx.saturating_sub(1)];
    let hi = grid[(idx + 1).min(grid.len() - 1)];
    if hi > lo {
        let (a_ref, _) = golden_max(
            &|a: T| match sharp_inner_lp(mid, a) {
                Ok(Some((v, _, _))) => v,
                _ => T::neg_infinity(),
            },
            lo,
            hi,
            fl(1e-3),
        );
        a_best = a_ref;
    }

    // fine-grid candidates: the staged optimum and the exponential optimum
    let mut candidates = vec![a_best];
    if let Ok(exp2) = exponential_guarantee(fine, 2, cfg) {
        if let GuaranteeParams::Exponential { a_scale, .. } = exp2.params {
            candidates.push(a_scale);
        }
    }
    let mut final_best: Option<(T, T, T, T)> = None; // (value, a, y0, y1)
    for &a in &candidates {
        if let Some((value, y0, y1)) = sharp_inner_lp(fine, a)? {
            let better = match &final_best {
                None => true,
                Some((bv, _, _, _)) => value > *bv,
            };
            if better {
                final_best = Some((value, a, y0, y1));
            }
        }
    }
    let (value, a_scale, y0, y1) =
        final_best.ok_or_else(|| GuaranteeError::InvalidArgument("no fine-grid optimum".into()))?;

    let e1 = continuum_growth(a_scale).unwrap() - T::one();
    let negative_payment = y0 < T::zero() || (y1 + e1 * y0 * fl(0.5)) < T::zero();
    // thresholds where the minimizing class changes: interior/one-boundary
    // and one-boundary/both-boundary
    let u = (y0 - y1) / a_scale;
    let w = (e1 * e1 * y0 + (fl::<T>(2.0) * e1 + T::one()) * y1) * fl::<T>(2.0) / a_scale;
    Ok(GuaranteeResult {
        value,
        params: GuaranteeParams::GeneralizedTwoBuyer { a_scale, y0, y1, negative_payment },
        breakpoints: vec![u, w],
        converged: idx > 0 && idx + 1 < grid.len(),
    })
}

/// One-buyer revenue functional in the continuum limit:
/// integral of min(A v, X e^(1/A)) rho(v) dv - X, split at the kink.
pub fn one_buyer_limit_revenue<T: Scalar>(prior: &ContinuousPrior<T>, a_scale: T, x: T) -> T {
    let growth = (T::one() / a_scale).exp();
    let kink = x * growth / a_scale;
    let mut kinks = prior.kinks();
    kinks.push(kink);
    let f = |v: T| (a_scale * v).min(x * growth) * prior.density(v);
    integrate_with_kinks(&f, T::zero(), T::one(), &kinks, fl(1e-10)) - x
}

/// Buyer-optimal unbiased-signal bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct RsBound<T> {
    /// The bound itself: seller revenue under the buyer-optimal signal.
    pub revenue: T,
    /// Upper support point of the signal distribution.
    pub upper_support: T,
    /// Interior point where the spread constraint binds.
    pub binding_point: T,
    /// Mechanism parameters attaining the bound: revenue = X/A and
    /// binding_point = X e^(1/A) / A.
    pub a_scale: T,
    pub payment_scale: T,
    /// First-order-condition residuals of the limit objective at (A, X).
    pub foc_residuals: [T; 2],
}

/// Second-order (integrated-CDF) slack of the truncated-Pareto signal
/// against the prior at point s for revenue level pi.
fn spread_slack<T: Scalar>(prior: &ContinuousPrior<T>, s: T, pi: T) -> T {
    let icdf = s * prior.cdf(s) - prior.partial_mean(s);
    icdf - (s - pi - pi * s.ln() + pi * pi.ln())
}

fn upper_support_of<T: Scalar>(mean: T, pi: T) -> T {
    pi * (mean / pi - T::one()).exp()
}

/// Construct the buyer-optimal signal structure for `prior`.
///
/// The upper support solves the mean-matching identity in closed form; the
/// smallest feasible revenue level is found by bisection on the
/// mean-preserving-spread feasibility predicate (grid scan plus golden
/// polish for the inner minimum over s), and the attaining (A, X) follow
/// from the binding point.
pub fn roesler_szentes<T: Scalar>(
    prior: &ContinuousPrior<T>,
    tol: T,
) -> Result<RsBound<T>, GuaranteeError> {
    prior
        .validate()
        .map_err(|e| GuaranteeError::InvalidArgument(e.to_string()))?;
    let mean = prior.mean();
    let min_slack = |pi: T| -> (T, T) {
        let cap = upper_support_of(mean, pi).min(T::one());
        min_spread_slack(prior, pi, cap)
    };
    let feasible = |pi: T| -> bool {
        if upper_support_of(mean, pi) > T::one() + fl(1e-12) {
            return false;
        }
        min_slack(pi).1 >= T::zero()
    };
    if !feasible(mean) {
        return Err(GuaranteeError::Bracketing(
            "degenerate point-mass signal infeasible; prior mean out of range".into(),
        ));
    }
    let lo = fl::<T>(1e-6).min(mean * fl(0.5));
    if feasible(lo) {
        return Err(GuaranteeError::Bracketing(
            "feasibility does not bracket; lower end already feasible".into(),
        ));
    }
    let pi = bisect_smallest_true(&feasible, lo, mean, tol);
    let upper_support = upper_support_of(mean, pi);
    let (s_star, _) = min_slack(pi);
    if !(s_star > pi && s_star < upper_support) {
        return Err(GuaranteeError::Bracketing(format!(
            "binding point {s_star} not interior to ({pi}, {upper_support})"
        )));
    }
    let a_scale = T::one() / (s_star / pi).ln();
    let payment_scale = pi * a_scale;
    let foc_payment = (T::one() / a_scale).exp() * (T::one() - prior.cdf(s_star)) - T::one();
    let foc_scale = prior.partial_mean(s_star) - payment_scale / (a_scale * a_scale);
    Ok(RsBound {
        revenue: pi,
        upper_support,
        binding_point: s_star,
        a_scale,
        payment_scale,
        foc_residuals: [foc_payment, foc_scale],
    })
}

/// Global minimum of the spread slack over s in [pi, cap]: coarse scan on a
/// 2000-point grid, then golden polish around the best cell.
fn min_spread_slack<T: Scalar>(prior: &ContinuousPrior<T>, pi: T, cap: T) -> (T, T) {
    const POINTS: usize = 2000;
    if cap <= pi {
        return (pi, spread_slack(prior, pi, pi));
    }
    let mut best_i = 0usize;
    let mut best = T::infinity();
    for i in 0..=POINTS {
        let s = pi + (cap - pi) * fu::<T>(i) / fu(POINTS);
        let f = spread_slack(prior, s, pi);
        if f < best {
            best = f;
            best_i = i;
        }
    }
    let lo = pi + (cap - pi) * fu::<T>(best_i.saturating_sub(1)) / fu(POINTS);
    let hi = pi + (cap - pi) * fu::<T>((best_i + 1).min(POINTS)) / fu(POINTS);
    golden_min(&|s| spread_slack(prior, s, pi), lo, hi, fl(1e-12))
}

/// An unbiased signal distribution for the one-buyer revenue functional.
#[derive(Debug, Clone)]
pub enum SignalCdf<T> {
    /// Truncated Pareto with an atom at the cap: density floor/s^2 on
    /// [floor, cap), atom floor/cap at cap.
    RoeslerSzentes { floor: T, cap: T },
    PointMass { at: T },
    /// Signal distributed like a continuous prior (full information when it
    /// is the prior itself).
    Density(ContinuousPrior<T>),
}

/// Equilibrium revenue of the limit exponential mechanism under signal
/// distribution G: expectation of min(A s - X, X(e^(1/A) - 1)) over signals
/// above the opt-out threshold X/A.
pub fn signal_revenue<T: Scalar>(signal: &SignalCdf<T>, a_scale: T, x: T) -> T {
    let growth = (T::one() / a_scale).exp();
    let floor = x / a_scale;
    let kink = x * growth / a_scale;
    let f = |s: T| (a_scale * s - x).min(x * (growth - T::one()));
    match signal {
        SignalCdf::PointMass { at } => {
            if *at >= floor {
                f(*at)
            } else {
                T::zero()
            }
        }
        SignalCdf::RoeslerSzentes { floor: lo, cap } => {
            let start = floor.max(*lo);
            let density_part = if *cap > start {
                integrate_with_kinks(
                    &|s: T| f(s) * *lo / (s * s),
                    start,
                    *cap,
                    &[kink],
                    fl(1e-10),
                )
            } else {
                T::zero()
            };
            let atom = if *cap >= floor { *lo / *cap * f(*cap) } else { T::zero() };
            density_part + atom
        }
        SignalCdf::Density(p) => {
            let mut kinks = p.kinks();
            kinks.push(kink);
            integrate_with_kinks(
                &|s: T| f(s) * p.density(s),
                floor.min(T::one()),
                T::one(),
                &kinks,
                fl(1e-10),
            )
        }
    }
}

/// Limit guarantee of the exponential mechanism with the full-surplus
/// schedule a = k/log(I), X = 1/(2 I log I), as k -> infinity: the value
/// classes split at 1/2 and the guarantee approaches the prior mean as the
/// buyer count grows.
pub fn asymptotic_guarantee<T: Scalar>(prior: &DiscretePrior<T>, buyers: u64) -> T {
    let log_i = fl::<T>(buyers as f64).ln();
    let h: T = harmonic(buyers);
    let mut total = T::zero();
    let half = fl::<T>(0.5);
    for (v, p) in prior.points() {
        let term = if v <= half {
            v * h / log_i - T::one() / (fl::<T>(2.0) * log_i)
        } else {
            v * (h - T::one()) / log_i - T::one() / log_i
        };
        total = total + p * term;
    }
    total
}

/// Continuous-prior version of [`asymptotic_guarantee`], via the CDF and
/// partial mean at the class split 1/2.
pub fn asymptotic_guarantee_continuous<T: Scalar>(prior: &ContinuousPrior<T>, buyers: u64) -> T {
    let log_i = fl::<T>(buyers as f64).ln();
    let h: T = harmonic(buyers);
    let half = fl::<T>(0.5);
    let mass_low = prior.cdf(half);
    let pm_low = prior.partial_mean(half);
    let mean = prior.mean();
    h / log_i * pm_low - mass_low / (fl::<T>(2.0) * log_i)
        + (h - T::one()) / log_i * (mean - pm_low)
        - (T::one() - mass_low) / log_i
}

/// The two fixed allocation corners of the generalized two-buyer mechanism:
/// q(1,0) = (3k+1)/(4k^2) and q(1,k) = 1/(2k).
pub fn corner_allocations<T: Scalar>(k: usize) -> (T, T) {
    let kf = fu::<T>(k);
    (
        (fl::<T>(3.0) * kf + T::one()) / (fl::<T>(4.0) * kf * kf),
        T::one() / (fl::<T>(2.0) * kf),
    )
}

/// Residual of the boundary-payment identity
/// P(k,k) = ((1+1/a)^k - 1)^2 a P(1,0) + ((1+1/a)^k - 1)(a P(1,k) - P(k,0)),
/// with all payments read from the constructed two-buyer tables. An exact
/// identity for every (a, k, Y0, Y1); the residual measures rounding only.
pub fn payment_identity_residual<T: Scalar>(a: T, k: usize, y0: T, y1: T) -> T {
    let mech = match FiniteMechanism::generalized_two_buyer(k, a, y0, y1) {
        Ok(m) => m,
        Err(_) => return T::infinity(),
    };
    let top = {
        // same repeated multiplication as the payment tables
        let ratio = T::one() + T::one() / a;
        let mut p = T::one();
        for _ in 0..k {
            p = p * ratio;
        }
        p - T::one()
    };
    let p10 = mech.payment(0, &[1, 0]);
    let p1k = mech.payment(0, &[1, k]);
    let pk0 = mech.payment(0, &[k, 0]);
    let pkk = mech.payment(0, &[k, k]);
    let rhs = top * top * a * p10 + top * (a * p1k - pk0);
    (pkk - rhs).abs()
}

/// Recover the payment scales (Y0, Y1) = (2a P(1,0), a P(1,k) - P(k,0)) from
/// a two-buyer mechanism table.
pub fn payment_scales<T: Scalar>(
    mech: &FiniteMechanism<T>,
    a: T,
) -> Result<(T, T), GuaranteeError> {
    if mech.buyers() != 2 {
        return Err(GuaranteeError::InvalidArgument(
            "payment scales are defined for two-buyer mechanisms".into(),
        ));
    }
    let k = mech.k();
    let y0 = fl::<T>(2.0) * a * mech.payment(0, &[1, 0]);
    let y1 = a * mech.payment(0, &[1, k]) - mech.payment(0, &[k, 0]);
    Ok((y0, y1))
}

/// Optimal-revenue upper bound for the triangle prior from the two-bidder
/// wallet game: 2 * int_0^1 int_0^{s1} max(s1 + s2/2 - 1/2, 0) ds2 ds1,
/// evaluated by outer quadrature over the closed-form inner integral.
pub fn wallet_game_bound<T: Scalar>() -> T {
    let half = fl::<T>(0.5);
    let inner = |s1: T| -> T {
        let lo = (T::one() - fl::<T>(2.0) * s1).max(T::zero()).min(s1);
        // antiderivative of (s1 - 1/2) + s2/2 in s2
        let anti = |s2: T| (s1 - half) * s2 + s2 * s2 * fl::<T>(0.25);
        anti(s1) - anti(lo)
    };
    fl::<T>(2.0) * integrate_with_kinks(
        &inner,
        T::zero(),
        T::one(),
        &[fl(1.0 / 3.0), fl(0.5)],
        fl(1e-10),
    )
}
