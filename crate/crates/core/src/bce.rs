//! Worst-case (minimum-revenue) Bayes correlated equilibria.
//!
//! For a fixed mechanism, the revenue-minimizing BCE is a linear program over
//! joint weights mu(v, m): consistency ties the value marginal to the prior,
//! obedience makes every message deviation unprofitable in expectation. Its
//! dual maximizes sum_v p(v) gamma(v) subject to gamma(v) being at most the
//! virtual revenue Rev(v, m) at every profile, where the dual variables
//! alpha_i(m' | m) act as deviation rates. Both programs are assembled
//! explicitly here and solved with [`crate::lp`], so strong duality can be
//! checked between two independent solves.
//!
//! Index orders (also the on-disk dump orders): mu is value-major then
//! profile row-major, mu[v_idx * n_profiles + profile_idx]; alpha rows are
//! grouped per buyer as dense (k+1) x (k+1) matrices in (from, to) row-major
//! order with a zero diagonal; obedience rows are ordered by
//! (buyer, from, to != from).

use thiserror::Error;

use crate::lp::{self, LinearProgram, LpError, LpStatus, Relation, Sense};
use crate::mechanism::FiniteMechanism;
use crate::prior::DiscretePrior;
use crate::scalar::{fu, Scalar};

#[derive(Debug, Error)]
pub enum BceError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("internal failure: {0}")]
    Internal(String),
    #[error("embedding could not reach slack {target} within {messages} messages (achieved {achieved})")]
    EmbedFailure {
        target: f64,
        achieved: f64,
        messages: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Deviation rates a buyer applies when weighing message switches.
pub trait Rates<T> {
    fn rate(&self, buyer: usize, from: usize, to: usize) -> T;
}

/// Band rates: every buyer deviates one step upward at rate `a`; all other
/// deviations have rate zero. This is the binding local-obedience pattern.
#[derive(Debug, Clone, Copy)]
pub struct BandRates<T> {
    pub a: T,
}

impl<T: Scalar> Rates<T> for BandRates<T> {
    fn rate(&self, _buyer: usize, from: usize, to: usize) -> T {
        if to == from + 1 {
            self.a
        } else {
            T::zero()
        }
    }
}

/// Dense nonnegative rate matrices, one per buyer, (k+1) x (k+1) row-major.
#[derive(Debug, Clone)]
pub struct RateMatrices<T> {
    messages: usize,
    by_buyer: Vec<Vec<T>>,
}

impl<T: Scalar> RateMatrices<T> {
    pub fn new(messages: usize, by_buyer: Vec<Vec<T>>) -> Result<Self, BceError> {
        for (i, m) in by_buyer.iter().enumerate() {
            if m.len() != messages * messages {
                return Err(BceError::InvalidArgument(format!(
                    "buyer {i} rate matrix must be {messages}x{messages}"
                )));
            }
            if m.iter().any(|r| !r.is_finite() || *r < T::zero()) {
                return Err(BceError::InvalidArgument(format!(
                    "buyer {i} rates must be finite and nonnegative"
                )));
            }
        }
        Ok(RateMatrices { messages, by_buyer })
    }

    pub fn from_band(band: BandRates<T>, buyers: usize, k: usize) -> Self {
        let messages = k + 1;
        let mut m = vec![T::zero(); messages * messages];
        for from in 0..k {
            m[from * messages + from + 1] = band.a;
        }
        RateMatrices {
            messages,
            by_buyer: vec![m; buyers],
        }
    }

    pub fn messages(&self) -> usize {
        self.messages
    }

    pub fn buyers(&self) -> usize {
        self.by_buyer.len()
    }

    /// Per-buyer dense matrices, (from, to) row-major.
    pub fn matrices(&self) -> &[Vec<T>] {
        &self.by_buyer
    }

    /// Sum of off-diagonal rates out of `from` for `buyer`.
    pub fn outflow(&self, buyer: usize, from: usize) -> T {
        let n = self.messages;
        (0..n)
            .filter(|&to| to != from)
            .map(|to| self.by_buyer[buyer][from * n + to])
            .sum()
    }
}

impl<T: Scalar> Rates<T> for RateMatrices<T> {
    fn rate(&self, buyer: usize, from: usize, to: usize) -> T {
        self.by_buyer[buyer][from * self.messages + to]
    }
}

/// Optimal dual variables: shadow prices gamma(v) on consistency and
/// deviation rates alpha on obedience.
#[derive(Debug, Clone)]
pub struct DualCertificate<T> {
    pub gamma: Vec<T>,
    pub alpha: RateMatrices<T>,
}

impl<T: Scalar> Rates<T> for DualCertificate<T> {
    fn rate(&self, buyer: usize, from: usize, to: usize) -> T {
        self.alpha.rate(buyer, from, to)
    }
}

impl<T: Scalar> DualCertificate<T> {
    /// Largest violation of gamma(v) <= Rev(v, m) over the given values and
    /// all profiles; feasible certificates stay at or below zero.
    pub fn feasibility_violation(&self, mech: &FiniteMechanism<T>, values: &[T]) -> T {
        let mut worst = T::neg_infinity();
        for (vi, &v) in values.iter().enumerate() {
            let rev = min_virtual_revenue(v, mech, self);
            worst = worst.max(self.gamma[vi] - rev);
        }
        worst
    }
}

/// Joint weights over (value, message profile).
#[derive(Debug, Clone)]
pub struct BceDistribution<T> {
    n_values: usize,
    n_profiles: usize,
    weights: Vec<T>,
}

impl<T: Scalar> BceDistribution<T> {
    pub fn new(n_values: usize, n_profiles: usize, weights: Vec<T>) -> Result<Self, BceError> {
        if weights.len() != n_values * n_profiles {
            return Err(BceError::InvalidArgument(format!(
                "expected {} weights",
                n_values * n_profiles
            )));
        }
        Ok(BceDistribution { n_values, n_profiles, weights })
    }

    pub fn weight(&self, v_idx: usize, profile_idx: usize) -> T {
        self.weights[v_idx * self.n_profiles + profile_idx]
    }

    pub fn weight_mut(&mut self, v_idx: usize, profile_idx: usize) -> &mut T {
        &mut self.weights[v_idx * self.n_profiles + profile_idx]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn n_values(&self) -> usize {
        self.n_values
    }

    pub fn n_profiles(&self) -> usize {
        self.n_profiles
    }

    /// The no-trade distribution: all mass on the all-opt-out profile.
    pub fn no_trade(prior: &DiscretePrior<T>, mech: &FiniteMechanism<T>) -> Self {
        let np = mech.n_profiles();
        let nv = prior.weights().len();
        let mut weights = vec![T::zero(); nv * np];
        for (vi, &w) in prior.weights().iter().enumerate() {
            weights[vi * np] = w;
        }
        BceDistribution { n_values: nv, n_profiles: np, weights }
    }
}

/// Virtual revenue: collected payments plus the rate-weighted incentives to
/// deviate from the profile. Affine in v for a fixed profile.
pub fn virtual_revenue<T: Scalar, R: Rates<T>>(
    v: T,
    profile: &[usize],
    mech: &FiniteMechanism<T>,
    rates: &R,
) -> T {
    let idx = mech.profile_index(profile);
    let mut total = T::zero();
    let mut switched = profile.to_vec();
    for i in 0..mech.buyers() {
        total = total + mech.payment_at(i, idx);
        let own_utility = mech.utility_at(v, idx, i);
        let from = profile[i];
        for to in 0..=mech.k() {
            if to == from {
                continue;
            }
            let r = rates.rate(i, from, to);
            if r == T::zero() {
                continue;
            }
            switched[i] = to;
            total = total + (mech.utility(v, &switched, i) - own_utility) * r;
        }
        switched[i] = from;
    }
    total
}

/// Minimum of the virtual revenue over all message profiles.
pub fn min_virtual_revenue<T: Scalar, R: Rates<T>>(
    v: T,
    mech: &FiniteMechanism<T>,
    rates: &R,
) -> T {
    let mut best = T::infinity();
    let mut profile = vec![0usize; mech.buyers()];
    for idx in 0..mech.n_profiles() {
        mech.decode_profile(idx, &mut profile);
        best = best.min(virtual_revenue(v, &profile, mech, rates));
    }
    best
}

/// Largest value of min_m Rev(v, m) - v over the grid. Feasible mechanisms
/// with opt-out and nonnegative rates keep this at or below zero, which is
/// what caps every guarantee by the full surplus.
pub fn surplus_violation<T: Scalar, R: Rates<T>>(
    mech: &FiniteMechanism<T>,
    rates: &R,
    values: &[T],
) -> T {
    values
        .iter()
        .map(|&v| min_virtual_revenue(v, mech, rates) - v)
        .fold(T::neg_infinity(), |a, b| a.max(b))
}

fn check_dims<T: Scalar>(
    mech: &FiniteMechanism<T>,
    prior: &DiscretePrior<T>,
) -> (usize, usize) {
    (prior.weights().len(), mech.n_profiles())
}

/// Revenue-minimizing BCE of `mech` under `prior`, by primal LP.
///
/// Never infeasible: no-trade is always a BCE. A non-optimal LP status is
/// therefore reported as an internal error.
pub fn min_revenue<T: Scalar>(
    mech: &FiniteMechanism<T>,
    prior: &DiscretePrior<T>,
) -> Result<(T, BceDistribution<T>), BceError> {
    let (nv, np) = check_dims(mech, prior);
    let n_vars = nv * np;
    let buyers = mech.buyers();
    let k = mech.k();

    let mut objective = vec![T::zero(); n_vars];
    for vi in 0..nv {
        for pi in 0..np {
            objective[vi * np + pi] = mech.total_payment_at(pi);
        }
    }
    let mut lp = LinearProgram::new(Sense::Minimize, objective);

    // Obedience rows, ordered (buyer, from, to != from).
    let mut profile = vec![0usize; buyers];
    let mut switched = vec![0usize; buyers];
    for i in 0..buyers {
        for from in 0..=k {
            for to in (0..=k).filter(|&t| t != from) {
                let mut coeffs = vec![T::zero(); n_vars];
                for pi in 0..np {
                    mech.decode_profile(pi, &mut profile);
                    if profile[i] != from {
                        continue;
                    }
                    switched.copy_from_slice(&profile);
                    switched[i] = to;
                    let sw = mech.profile_index(&switched);
                    for vi in 0..nv {
                        let v = prior.value(vi);
                        coeffs[vi * np + pi] =
                            mech.utility_at(v, pi, i) - mech.utility_at(v, sw, i);
                    }
                }
                lp.add_constraint(coeffs, Relation::Ge, T::zero());
            }
        }
    }

    // Consistency rows, one per grid value.
    for vi in 0..nv {
        let mut coeffs = vec![T::zero(); n_vars];
        for pi in 0..np {
            coeffs[vi * np + pi] = T::one();
        }
        lp.add_constraint(coeffs, Relation::Eq, prior.weights()[vi]);
    }

    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(BceError::Internal(format!(
            "minimum-revenue program reported {:?}; no-trade should always be feasible",
            sol.status
        )));
    }
    let mu = BceDistribution::new(nv, np, sol.primal)?;
    Ok((sol.objective, mu))
}

/// Best lower bound on worst-case revenue by the dual program: maximize
/// sum_v p(v) gamma(v) subject to gamma(v) <= Rev(v, m) everywhere.
pub fn max_dual_revenue<T: Scalar>(
    mech: &FiniteMechanism<T>,
    prior: &DiscretePrior<T>,
) -> Result<(T, DualCertificate<T>), BceError> {
    let (nv, np) = check_dims(mech, prior);
    let buyers = mech.buyers();
    let k = mech.k();
    let per_buyer = (k + 1) * k;
    let n_vars = nv + buyers * per_buyer;

    let alpha_var = |i: usize, from: usize, to: usize| -> usize {
        debug_assert_ne!(from, to);
        let off = if to < from { to } else { to - 1 };
        nv + i * per_buyer + from * k + off
    };

    let mut objective = vec![T::zero(); n_vars];
    objective[..nv].copy_from_slice(prior.weights());
    let mut lp = LinearProgram::new(Sense::Maximize, objective);
    for vi in 0..nv {
        lp.set_free(vi);
    }

    let mut profile = vec![0usize; buyers];
    let mut switched = vec![0usize; buyers];
    for vi in 0..nv {
        let v = prior.value(vi);
        for pi in 0..np {
            mech.decode_profile(pi, &mut profile);
            let mut coeffs = vec![T::zero(); n_vars];
            coeffs[vi] = T::one();
            for i in 0..buyers {
                let from = profile[i];
                for to in (0..=k).filter(|&t| t != from) {
                    switched.copy_from_slice(&profile);
                    switched[i] = to;
                    let sw = mech.profile_index(&switched);
                    coeffs[alpha_var(i, from, to)] =
                        mech.utility_at(v, pi, i) - mech.utility_at(v, sw, i);
                }
            }
            lp.add_constraint(coeffs, Relation::Le, mech.total_payment_at(pi));
        }
    }

    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(BceError::Internal(format!(
            "dual revenue program reported {:?}",
            sol.status
        )));
    }
    let gamma = sol.primal[..nv].to_vec();
    let mut by_buyer = vec![vec![T::zero(); (k + 1) * (k + 1)]; buyers];
    for i in 0..buyers {
        for from in 0..=k {
            for to in (0..=k).filter(|&t| t != from) {
                // clamp solver noise; rates are nonnegative by construction
                by_buyer[i][from * (k + 1) + to] =
                    sol.primal[alpha_var(i, from, to)].max(T::zero());
            }
        }
    }
    let cert = DualCertificate {
        gamma,
        alpha: RateMatrices::new(k + 1, by_buyer)?,
    };
    Ok((sol.objective, cert))
}

/// Residual report for a candidate BCE.
#[derive(Debug, Clone, Copy)]
pub struct BceReport<T> {
    /// max_v |sum_m mu(v, m) - p(v)|
    pub consistency: T,
    /// largest obedience shortfall, max(0, -lhs) over deviation rows
    pub obedience: T,
    /// expected revenue under mu
    pub revenue: T,
}

impl<T: Scalar> BceReport<T> {
    pub fn ok(&self, tol: T) -> bool {
        self.consistency <= tol && self.obedience <= tol
    }
}

/// Measure consistency and obedience residuals of `mu` and its revenue.
pub fn verify<T: Scalar>(
    mu: &BceDistribution<T>,
    mech: &FiniteMechanism<T>,
    prior: &DiscretePrior<T>,
) -> BceReport<T> {
    let (nv, np) = check_dims(mech, prior);
    let mut consistency = T::zero();
    for vi in 0..nv {
        let total: T = (0..np).map(|pi| mu.weight(vi, pi)).sum();
        consistency = consistency.max((total - prior.weights()[vi]).abs());
    }

    let buyers = mech.buyers();
    let k = mech.k();
    let mut obedience = T::zero();
    let mut profile = vec![0usize; buyers];
    let mut switched = vec![0usize; buyers];
    for i in 0..buyers {
        for from in 0..=k {
            for to in (0..=k).filter(|&t| t != from) {
                let mut lhs = T::zero();
                for pi in 0..np {
                    mech.decode_profile(pi, &mut profile);
                    if profile[i] != from {
                        continue;
                    }
                    switched.copy_from_slice(&profile);
                    switched[i] = to;
                    let sw = mech.profile_index(&switched);
                    for vi in 0..nv {
                        let v = prior.value(vi);
                        lhs = lhs
                            + mu.weight(vi, pi)
                                * (mech.utility_at(v, pi, i) - mech.utility_at(v, sw, i));
                    }
                }
                obedience = obedience.max((-lhs).max(T::zero()));
            }
        }
    }

    let mut revenue = T::zero();
    for vi in 0..nv {
        for pi in 0..np {
            revenue = revenue + mu.weight(vi, pi) * mech.total_payment_at(pi);
        }
    }
    BceReport { consistency, obedience, revenue }
}

/// Largest elementwise complementary-slackness product between a BCE and a
/// dual certificate: mu(v, m) * (Rev(v, m) - gamma(v)).
pub fn complementary_slackness<T: Scalar>(
    mu: &BceDistribution<T>,
    cert: &DualCertificate<T>,
    mech: &FiniteMechanism<T>,
    prior: &DiscretePrior<T>,
) -> T {
    let (nv, np) = check_dims(mech, prior);
    let mut worst = T::zero();
    let mut profile = vec![0usize; mech.buyers()];
    for vi in 0..nv {
        let v = prior.value(vi);
        for pi in 0..np {
            let w = mu.weight(vi, pi);
            if w == T::zero() {
                continue;
            }
            mech.decode_profile(pi, &mut profile);
            let rev = virtual_revenue(v, &profile, mech, cert);
            worst = worst.max((w * (rev - cert.gamma[vi])).abs());
        }
    }
    worst
}

/// Result of embedding arbitrary deviation rates into band rates on an
/// enlarged message space.
#[derive(Debug, Clone)]
pub struct MarkovEmbedding<T> {
    pub mechanism: FiniteMechanism<T>,
    pub band: BandRates<T>,
    /// Non-opt-out message count of the transformed mechanism.
    pub messages: usize,
    /// Achieved boundary slack a * l1(step difference) * max|U|.
    pub boundary_slack: T,
    /// Per buyer: step distributions over the original messages for
    /// j = 0..=messages; row j is the j-step distribution started at opt-out.
    pub step_distributions: Vec<Vec<Vec<T>>>,
}

/// Embed `rates` as a transition matrix and rebuild the mechanism on mixed
/// messages so that band rates reproduce the original virtual revenues.
///
/// New message j plays the j-step distribution of the embedded chain started
/// at opt-out. The boundary message violates the telescoping identity by at
/// most the chain's step-to-step total-variation times a * max|U|; the
/// message count doubles from 8 until that slack reaches `eps` or
/// `max_messages` is hit.
pub fn markov_embed<T: Scalar>(
    mech: &FiniteMechanism<T>,
    rates: &RateMatrices<T>,
    c: T,
    eps: T,
    max_messages: usize,
) -> Result<MarkovEmbedding<T>, BceError> {
    if !(c > T::zero()) {
        return Err(BceError::InvalidArgument(
            "embedding constant must be positive".into(),
        ));
    }
    let buyers = mech.buyers();
    let k_old = mech.k();
    let n_old = k_old + 1;
    if rates.buyers() != buyers || rates.messages() != n_old {
        return Err(BceError::InvalidArgument(
            "rate matrices do not match the mechanism".into(),
        ));
    }

    let mut a = T::zero();
    for i in 0..buyers {
        for from in 0..n_old {
            a = a.max(rates.outflow(i, from));
        }
    }
    let a = a + c;

    // Embedded transition matrix per buyer; diagonal stays positive because
    // of c, so powers converge.
    let mut trans: Vec<Vec<T>> = Vec::with_capacity(buyers);
    for i in 0..buyers {
        let mut m = vec![T::zero(); n_old * n_old];
        for from in 0..n_old {
            let mut off = T::zero();
            for to in 0..n_old {
                if to == from {
                    continue;
                }
                let p = rates.rate(i, from, to) / a;
                m[from * n_old + to] = p;
                off = off + p;
            }
            m[from * n_old + from] = T::one() - off;
            debug_assert!(m[from * n_old + from] > T::zero());
        }
        trans.push(m);
    }

    let max_u = mech.max_abs_utility();
    let step = |d: &[T], i: usize| -> Vec<T> {
        let m = &trans[i];
        let mut out = vec![T::zero(); n_old];
        for from in 0..n_old {
            let w = d[from];
            if w == T::zero() {
                continue;
            }
            for to in 0..n_old {
                out[to] = out[to] + w * m[from * n_old + to];
            }
        }
        out
    };
    let slack_of = |steps: &[Vec<Vec<T>>], j: usize| -> T {
        let mut worst = T::zero();
        for b in steps {
            let l1: T = b[j]
                .iter()
                .zip(&b[j + 1])
                .map(|(&x, &y)| (x - y).abs())
                .sum();
            worst = worst.max(a * l1 * max_u);
        }
        worst
    };

    // steps[i][j] = j-step distribution from opt-out for buyer i
    let mut steps: Vec<Vec<Vec<T>>> = (0..buyers)
        .map(|_| {
            let mut e0 = vec![T::zero(); n_old];
            e0[0] = T::one();
            vec![e0]
        })
        .collect();
    let extend_to = |steps: &mut Vec<Vec<Vec<T>>>, len: usize| {
        for (i, b) in steps.iter_mut().enumerate() {
            while b.len() < len + 1 {
                let next = step(b.last().unwrap(), i);
                b.push(next);
            }
        }
    };

    let mut k_new = 8usize.min(max_messages);
    let mut achieved;
    loop {
        extend_to(&mut steps, k_new + 1);
        achieved = slack_of(&steps, k_new);
        if achieved <= eps {
            break;
        }
        if k_new >= max_messages {
            return Err(BceError::EmbedFailure {
                target: eps.to_f64().unwrap_or(f64::NAN),
                achieved: achieved.to_f64().unwrap_or(f64::NAN),
                messages: k_new,
            });
        }
        k_new = (k_new * 2).min(max_messages);
    }

    // Mixed-message tables: the product mixture of the original tables.
    let np_new = (k_new + 1).pow(buyers as u32);
    let np_old = mech.n_profiles();
    if np_new.saturating_mul(np_old) > 200_000_000 {
        return Err(BceError::InvalidArgument(format!(
            "transformed table with {np_new} profiles is too large"
        )));
    }
    let mut alloc = vec![vec![T::zero(); np_new]; buyers];
    let mut pay = vec![vec![T::zero(); np_new]; buyers];
    let mut new_profile = vec![0usize; buyers];
    let mut old_profile = vec![0usize; buyers];
    for idx_new in 0..np_new {
        let mut rest = idx_new;
        for slot in new_profile.iter_mut() {
            *slot = rest % (k_new + 1);
            rest /= k_new + 1;
        }
        for idx_old in 0..np_old {
            mech.decode_profile(idx_old, &mut old_profile);
            let mut weight = T::one();
            for i in 0..buyers {
                weight = weight * steps[i][new_profile[i]][old_profile[i]];
                if weight == T::zero() {
                    break;
                }
            }
            if weight == T::zero() {
                continue;
            }
            for i in 0..buyers {
                alloc[i][idx_new] = alloc[i][idx_new] + weight * mech.allocation_at(i, idx_old);
                pay[i][idx_new] = pay[i][idx_new] + weight * mech.payment_at(i, idx_old);
            }
        }
    }
    // Mixtures of feasible tables stay feasible; tiny negative rounding is
    // clipped so the table validator accepts them.
    for t in alloc.iter_mut() {
        for q in t.iter_mut() {
            *q = q.max(T::zero());
        }
    }
    let mechanism = FiniteMechanism::from_tables(buyers, k_new, alloc, pay)
        .map_err(|e| BceError::Internal(format!("embedded tables invalid: {e}")))?;

    Ok(MarkovEmbedding {
        mechanism,
        band: BandRates { a },
        messages: k_new,
        boundary_slack: achieved,
        step_distributions: steps,
    })
}

/// Grid helper: the value points of a discrete prior.
pub fn value_grid<T: Scalar>(prior: &DiscretePrior<T>) -> Vec<T> {
    (0..prior.weights().len()).map(|i| prior.value(i)).collect()
}

/// Uniform grid 0, 1/n, ..., 1 without a prior attached.
pub fn unit_grid<T: Scalar>(cells: usize) -> Vec<T> {
    (0..=cells).map(|i| fu::<T>(i) / fu(cells)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::ContinuousPrior;

    fn uniform_grid(cells: usize) -> DiscretePrior<f64> {
        ContinuousPrior::Uniform.discretize(cells).unwrap()
    }

    #[test]
    fn virtual_revenue_zero_rates_is_total_payment() {
        let mech = FiniteMechanism::<f64>::exponential(2, 2, 1.0, 0.1).unwrap();
        let rates = RateMatrices::new(3, vec![vec![0.0; 9]; 2]).unwrap();
        for p in mech.profiles() {
            let idx = mech.profile_index(&p);
            let rev = virtual_revenue(0.7, &p, &mech, &rates);
            assert!((rev - mech.total_payment_at(idx)).abs() < 1e-15);
        }
    }

    #[test]
    fn virtual_revenue_band_matches_class_formula() {
        // band rates collapse the virtual revenue to a function of the
        // boundary count: a*v/k * sum_{j=n+1..I} 1/j + n*X*top - (I-n)*X
        let (buyers, k, a, x) = (2usize, 3usize, 1.7f64, 0.21f64);
        let mech = FiniteMechanism::exponential(buyers, k, a, x).unwrap();
        let band = BandRates { a };
        let top = (1.0 + 1.0 / a).powi(k as i32) - 1.0;
        for v in [0.0, 0.4, 1.0] {
            for p in mech.profiles() {
                let n = p.iter().filter(|&&m| m == k).count();
                let tail: f64 = (n + 1..=buyers).map(|j| 1.0 / j as f64).sum();
                let expect = a * v / k as f64 * tail + n as f64 * x * top
                    - (buyers - n) as f64 * x;
                let got = virtual_revenue(v, &p, &mech, &band);
                assert!(
                    (got - expect).abs() < 1e-12,
                    "profile {p:?} v {v}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn virtual_revenue_single_buyer_band_expansion() {
        // at v = 0 and message j < k the band leaves P(j) - a (P(j+1) - P(j))
        let (k, a, x) = (4usize, 2.0f64, 0.3f64);
        let mech = FiniteMechanism::<f64>::exponential(1, k, a, x).unwrap();
        let band = BandRates { a };
        for j in 0..k {
            let term_by_term =
                mech.payment(0, &[j]) - a * (mech.payment(0, &[j + 1]) - mech.payment(0, &[j]));
            let got = virtual_revenue(0.0, &[j], &mech, &band);
            assert!((got - term_by_term).abs() < 1e-12);
            // for the exponential payment this is exactly -x
            assert!((got + x).abs() < 1e-12);
        }
    }

    #[test]
    fn min_revenue_zero_payment_mechanism() {
        let mech = FiniteMechanism::from_tables(
            1,
            1,
            vec![vec![0.0, 1.0]],
            vec![vec![0.0, 0.0]],
        )
        .unwrap();
        let prior = uniform_grid(4);
        let (value, mu) = min_revenue(&mech, &prior).unwrap();
        assert!(value.abs() < 1e-10);
        let report = verify(&mu, &mech, &prior);
        assert!(report.ok(1e-9));

        let (dual, cert) = max_dual_revenue(&mech, &prior).unwrap();
        assert!(dual.abs() < 1e-10);
        assert!(cert.feasibility_violation(&mech, &value_grid(&prior)) <= 1e-9);
    }

    #[test]
    fn strong_duality_small_exponential() {
        let mech = FiniteMechanism::<f64>::exponential(1, 3, 3.0, 0.05).unwrap();
        let prior = uniform_grid(10);
        let (p, mu) = min_revenue(&mech, &prior).unwrap();
        let (d, cert) = max_dual_revenue(&mech, &prior).unwrap();
        assert!((p - d).abs() < 1e-8, "primal {p} dual {d}");
        assert!(verify(&mu, &mech, &prior).ok(1e-9));
        assert!(cert.feasibility_violation(&mech, &value_grid(&prior)) <= 1e-9);
        assert!(complementary_slackness(&mu, &cert, &mech, &prior) < 1e-8);
    }

    #[test]
    fn no_trade_verifies_clean_when_buying_is_unprofitable() {
        // at price 1 the expected utility of buying is negative, so staying
        // out is obedient
        let mech = FiniteMechanism::<f64>::posted_price(1.0).unwrap();
        let prior = uniform_grid(5);
        let mu = BceDistribution::no_trade(&prior, &mech);
        let report = verify(&mu, &mech, &prior);
        assert!(report.consistency < 1e-15);
        assert!(report.obedience < 1e-15);
        assert!(report.revenue.abs() < 1e-15);
    }

    #[test]
    fn no_trade_violates_obedience_when_buying_pays() {
        // a cheap posted price makes opting in profitable on average, so the
        // no-trade weights are consistent but not obedient; this is why the
        // minimum-revenue value of such mechanisms is strictly positive
        let mech = FiniteMechanism::<f64>::posted_price(0.25).unwrap();
        let prior = uniform_grid(4);
        let mu = BceDistribution::no_trade(&prior, &mech);
        let report = verify(&mu, &mech, &prior);
        assert!(report.consistency < 1e-15);
        assert!((report.obedience - 0.25).abs() < 1e-12);
    }

    #[test]
    fn constructed_violation_is_reported() {
        let mech = FiniteMechanism::<f64>::posted_price(0.25).unwrap();
        let prior = uniform_grid(4);
        let mut mu = BceDistribution::no_trade(&prior, &mech);
        // move 0.01 of mass off a consistency row
        *mu.weight_mut(1, 0) -= 0.01;
        let report = verify(&mu, &mech, &prior);
        assert!((report.consistency - 0.01).abs() < 1e-12);
    }

    #[test]
    fn surplus_bound_on_exponential() {
        let mech = FiniteMechanism::<f64>::exponential(1, 3, 2.5, 0.2).unwrap();
        let band = BandRates { a: 2.5 };
        let grid = unit_grid::<f64>(10);
        assert!(surplus_violation(&mech, &band, &grid) <= 1e-9);
        // at v = 1 specifically, min_m Rev(1, m) <= 1
        assert!(min_virtual_revenue(1.0, &mech, &band) <= 1.0 + 1e-12);
        // at v = 0, the all-opt-out profile keeps the minimum at or below 0
        assert!(min_virtual_revenue(0.0, &mech, &band) <= 1e-12);
    }

    #[test]
    fn symmetrized_virtual_revenue_is_permutation_average() {
        // with rates shared by all buyers, the symmetrized mechanism's
        // virtual revenue is the permutation average of the original one,
        // so it never falls below the original minimum
        use rand::{Rng, SeedableRng};
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in permutations(n - 1) {
                for slot in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(slot, n - 1);
                    out.push(q);
                }
            }
            out.sort();
            out
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..12 {
            let buyers = 2 + trial % 2;
            let k = 2usize;
            let np = (k + 1).pow(buyers as u32);
            let mut alloc = vec![vec![0.0f64; np]; buyers];
            let mut pay = vec![vec![0.0f64; np]; buyers];
            let mut profile = vec![0usize; buyers];
            for idx in 0..np {
                let mut rest = idx;
                for slot in profile.iter_mut() {
                    *slot = rest % (k + 1);
                    rest /= k + 1;
                }
                let mut total = 0.0;
                for i in 0..buyers {
                    if profile[i] == 0 {
                        continue;
                    }
                    alloc[i][idx] = rng.gen::<f64>();
                    pay[i][idx] = rng.gen::<f64>() - 0.4;
                    total += alloc[i][idx];
                }
                if total > 1.0 {
                    for t in alloc.iter_mut() {
                        t[idx] /= total;
                    }
                }
            }
            let mech = FiniteMechanism::from_tables(buyers, k, alloc, pay).unwrap();
            let sym = mech.symmetrized().unwrap();
            let band = BandRates { a: 0.9 };
            let perms = permutations(buyers);
            assert_eq!(perms.len(), (1..=buyers).product::<usize>());
            let mut source = vec![0usize; buyers];
            for v in [0.0f64, 0.5, 1.0] {
                let original_min = min_virtual_revenue(v, &mech, &band);
                for p in mech.profiles() {
                    let mut avg = 0.0;
                    for perm in &perms {
                        for t in 0..buyers {
                            source[perm[t]] = p[t];
                        }
                        avg += virtual_revenue(v, &source, &mech, &band);
                    }
                    avg /= perms.len() as f64;
                    let got = virtual_revenue(v, &p, &sym, &band);
                    assert!(
                        (got - avg).abs() < 1e-9,
                        "trial {trial} v {v} profile {p:?}: {got} vs average {avg}"
                    );
                    assert!(got >= original_min - 1e-9);
                }
            }
        }
    }

    #[test]
    fn markov_embed_zero_rates_collapse() {
        let mech = FiniteMechanism::<f64>::exponential(2, 2, 1.0, 0.2).unwrap();
        let rates = RateMatrices::new(3, vec![vec![0.0; 9]; 2]).unwrap();
        let embed = markov_embed(&mech, &rates, 1.0, 1e-6, 512).unwrap();
        assert_eq!(embed.messages, 8);
        assert!(embed.boundary_slack <= 1e-12);
        // chain never leaves opt-out: the transformed mechanism is all zeros
        for i in 0..2 {
            for idx in 0..embed.mechanism.n_profiles() {
                assert_eq!(embed.mechanism.allocation_at(i, idx), 0.0);
                assert_eq!(embed.mechanism.payment_at(i, idx), 0.0);
            }
        }
    }

    #[test]
    fn markov_embed_interior_revenue_is_mixture() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mech = FiniteMechanism::<f64>::exponential(2, 2, 1.3, 0.15).unwrap();
        let mut mats = Vec::new();
        for _ in 0..2 {
            let mut m = vec![0.0f64; 9];
            for (pos, item) in m.iter_mut().enumerate() {
                if pos % 4 != 0 {
                    *item = rng.gen::<f64>();
                }
            }
            mats.push(m);
        }
        let rates = RateMatrices::new(3, mats).unwrap();
        let embed = markov_embed(&mech, &rates, 1.0, 1e-6, 1024).unwrap();
        let band = embed.band;
        let v = 0.6f64;

        // oracle: explicit product mixture of original virtual revenues
        let mixture = |new_profile: &[usize]| -> f64 {
            let mut total = 0.0;
            for old in mech.profiles() {
                let mut w = 1.0;
                for i in 0..2 {
                    w *= embed.step_distributions[i][new_profile[i]][old[i]];
                }
                if w > 0.0 {
                    total += w * virtual_revenue(v, &old, &mech, &rates);
                }
            }
            total
        };

        let original_min = min_virtual_revenue(v, &mech, &rates);
        let kn = embed.messages;
        for m0 in [0usize, 1, kn / 2, kn - 1] {
            for m1 in [0usize, 2, kn - 1] {
                let p = vec![m0, m1];
                let rev = virtual_revenue(v, &p, &embed.mechanism, &band);
                let mix = mixture(&p);
                assert!((rev - mix).abs() < 1e-9, "profile {p:?}: {rev} vs {mix}");
                assert!(rev >= original_min - 1e-9);
            }
        }
        // the embedded chain is aperiodic: diagonals stayed positive, which
        // the constructor asserts; spot-check the slack
        assert!(embed.boundary_slack <= 1e-6);
    }
}
