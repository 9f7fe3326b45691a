//! Prior distributions of the common value on [0, 1].
//!
//! Two representations live side by side: [`DiscretePrior`] puts probability
//! weights on the uniform grid {0, nu, 2·nu, ..., 1}, and [`ContinuousPrior`]
//! is a small family of parametric densities used by the continuum-limit
//! guarantee formulas. Discretization maps a continuous prior onto a grid by
//! cell masses: each grid point receives the CDF mass of the cell centered on
//! it (half cells at the endpoints), which preserves total mass exactly and
//! converges in mean at rate O(nu).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{integrate_with_kinks, reg_inc_beta};
use crate::scalar::{fl, fu, Scalar};

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("invalid prior parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Probability weights on the value grid {0, nu, ..., 1} with nu = 1/n.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePrior<T> {
    step: T,
    weights: Vec<T>,
}

impl<T: Scalar> DiscretePrior<T> {
    /// Build from weights over the grid with `weights.len() - 1` cells.
    ///
    /// Weights must be nonnegative and sum to 1 within 1e-12.
    pub fn new(weights: Vec<T>) -> Result<Self, PriorError> {
        if weights.len() < 2 {
            return Err(PriorError::InvalidGrid(
                "grid needs at least the two endpoints 0 and 1".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(PriorError::InvalidWeights(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > fl(1e-12) {
            return Err(PriorError::InvalidWeights(format!(
                "weights sum to {total}, expected 1 within 1e-12"
            )));
        }
        let step = T::one() / fu(weights.len() - 1);
        Ok(Self { step, weights })
    }

    /// Number of grid cells n (the grid has n + 1 points).
    pub fn cells(&self) -> usize {
        self.weights.len() - 1
    }

    /// Grid spacing nu = 1/n.
    pub fn step(&self) -> T {
        self.step
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Value at grid index `idx`, i.e. idx/n.
    pub fn value(&self, idx: usize) -> T {
        fu::<T>(idx) / fu(self.cells())
    }

    /// Iterate `(value, weight)` pairs along the grid.
    pub fn points(&self) -> impl Iterator<Item = (T, T)> + '_ {
        let n = self.cells();
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (fu::<T>(i) / fu(n), w))
    }

    /// Expected value of the grid prior.
    pub fn mean(&self) -> T {
        self.points().map(|(v, w)| v * w).sum()
    }
}

/// Parametric density on [0, 1].
///
/// `PowerCdf { exponent: h }` has CDF v^h; `ConcaveCdf` has CDF 2v - v^2;
/// `Triangle` is the density of the average of two independent uniforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub enum ContinuousPrior<T> {
    Uniform,
    Beta { alpha: T, beta: T },
    PowerCdf { exponent: T },
    ConcaveCdf,
    Triangle,
}

impl<T: Scalar> ContinuousPrior<T> {
    /// Check parameter domains (Beta shapes > 0, power exponent > 0).
    pub fn validate(&self) -> Result<(), PriorError> {
        match self {
            ContinuousPrior::Beta { alpha, beta } => {
                if *alpha <= T::zero() || *beta <= T::zero() || !alpha.is_finite() || !beta.is_finite()
                {
                    return Err(PriorError::InvalidParameter(format!(
                        "beta shapes must be positive, got ({alpha}, {beta})"
                    )));
                }
            }
            ContinuousPrior::PowerCdf { exponent } => {
                if *exponent <= T::zero() || !exponent.is_finite() {
                    return Err(PriorError::InvalidParameter(format!(
                        "power CDF exponent must be positive, got {exponent}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Density at `v` in [0, 1].
    pub fn density(&self, v: T) -> T {
        let one = T::one();
        match self {
            ContinuousPrior::Uniform => one,
            ContinuousPrior::Beta { alpha, beta } => {
                let (a, b) = (*alpha, *beta);
                if v < T::zero() || v > one {
                    return T::zero();
                }
                // log-space keeps large shapes from overflowing
                let ln_norm = crate::numeric::ln_gamma(a + b)
                    - crate::numeric::ln_gamma(a)
                    - crate::numeric::ln_gamma(b);
                if v == T::zero() {
                    return if a > one {
                        T::zero()
                    } else if a == one {
                        (ln_norm + (b - one) * (one - v).ln()).exp()
                    } else {
                        T::infinity()
                    };
                }
                if v == one {
                    return if b > one {
                        T::zero()
                    } else if b == one {
                        (ln_norm + (a - one) * v.ln()).exp()
                    } else {
                        T::infinity()
                    };
                }
                (ln_norm + (a - one) * v.ln() + (b - one) * (one - v).ln()).exp()
            }
            ContinuousPrior::PowerCdf { exponent } => {
                let h = *exponent;
                if v == T::zero() {
                    if h < one {
                        T::infinity()
                    } else if h == one {
                        one
                    } else {
                        T::zero()
                    }
                } else {
                    h * v.powf(h - one)
                }
            }
            ContinuousPrior::ConcaveCdf => fl::<T>(2.0) * (one - v),
            ContinuousPrior::Triangle => {
                if v <= fl(0.5) {
                    fl::<T>(4.0) * v
                } else {
                    fl::<T>(4.0) * (one - v)
                }
            }
        }
    }

    /// CDF at `v`.
    pub fn cdf(&self, v: T) -> T {
        let one = T::one();
        if v <= T::zero() {
            return T::zero();
        }
        if v >= one {
            return one;
        }
        match self {
            ContinuousPrior::Uniform => v,
            ContinuousPrior::Beta { alpha, beta } => reg_inc_beta(*alpha, *beta, v),
            ContinuousPrior::PowerCdf { exponent } => v.powf(*exponent),
            ContinuousPrior::ConcaveCdf => fl::<T>(2.0) * v - v * v,
            ContinuousPrior::Triangle => {
                if v <= fl(0.5) {
                    fl::<T>(2.0) * v * v
                } else {
                    one - fl::<T>(2.0) * (one - v) * (one - v)
                }
            }
        }
    }

    /// Partial expectation: integral of v * density over [0, s].
    pub fn partial_mean(&self, s: T) -> T {
        let one = T::one();
        let s = s.min(one).max(T::zero());
        match self {
            ContinuousPrior::Uniform => s * s * fl(0.5),
            ContinuousPrior::Beta { alpha, beta } => {
                self.mean() * reg_inc_beta(*alpha + one, *beta, s)
            }
            ContinuousPrior::PowerCdf { exponent } => {
                let h = *exponent;
                h / (h + one) * s.powf(h + one)
            }
            ContinuousPrior::ConcaveCdf => s * s - fl::<T>(2.0 / 3.0) * s * s * s,
            ContinuousPrior::Triangle => {
                if s <= fl(0.5) {
                    fl::<T>(4.0 / 3.0) * s * s * s
                } else {
                    fl::<T>(2.0) * s * s - fl::<T>(4.0 / 3.0) * s * s * s - fl(1.0 / 6.0)
                }
            }
        }
    }

    /// Expected value.
    pub fn mean(&self) -> T {
        let one = T::one();
        match self {
            ContinuousPrior::Uniform | ContinuousPrior::Triangle => fl(0.5),
            ContinuousPrior::Beta { alpha, beta } => *alpha / (*alpha + *beta),
            ContinuousPrior::PowerCdf { exponent } => *exponent / (*exponent + one),
            ContinuousPrior::ConcaveCdf => fl(1.0 / 3.0),
        }
    }

    /// Mean computed by adaptive quadrature of v * density; cross-checks the
    /// closed forms and is used as an oracle in tests.
    pub fn mean_by_quadrature(&self, tol: T) -> T {
        integrate_with_kinks(
            &|v| v * self.density(v),
            T::zero(),
            T::one(),
            &self.kinks(),
            tol,
        )
    }

    /// Interior points where the density is not smooth.
    pub fn kinks(&self) -> Vec<T> {
        match self {
            ContinuousPrior::Triangle => vec![fl(0.5)],
            _ => vec![],
        }
    }

    /// Cell-mass discretization onto a grid with `cells` cells (nu = 1/cells).
    ///
    /// Weight at grid point v is the CDF mass of the cell centered on v, with
    /// half cells at the endpoints; weights are renormalized to sum exactly
    /// to one.
    pub fn discretize(&self, cells: usize) -> Result<DiscretePrior<T>, PriorError> {
        if cells == 0 {
            return Err(PriorError::InvalidGrid("need at least one cell".into()));
        }
        self.validate()?;
        let n = cells;
        let half = fl::<T>(0.5) / fu(n);
        let mut weights = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let v = fu::<T>(i) / fu(n);
            let lo = if i == 0 { T::zero() } else { v - half };
            let hi = if i == n { T::one() } else { v + half };
            weights.push(self.cdf(hi) - self.cdf(lo));
        }
        let total: T = weights.iter().copied().sum();
        for w in &mut weights {
            *w = (*w / total).max(T::zero());
        }
        DiscretePrior::new(weights)
    }

    /// Discretize with grid step `nu`; requires 1/nu to be a positive integer.
    pub fn discretize_step(&self, nu: T) -> Result<DiscretePrior<T>, PriorError> {
        if nu <= T::zero() || nu > T::one() {
            return Err(PriorError::InvalidGrid(format!("step {nu} out of (0, 1]")));
        }
        let n = (T::one() / nu).round();
        if ((T::one() / nu) - n).abs() > fl(1e-9) {
            return Err(PriorError::InvalidGrid(format!(
                "step {nu} is not the reciprocal of an integer"
            )));
        }
        self.discretize(n.to_usize().unwrap())
    }
}

/// On-disk prior description.
///
/// `{"type":"discrete","nu":0.005,"weights":[...]}` or
/// `{"type":"continuous","family":"beta","params":[2,2]}` with families
/// `uniform`, `beta`, `powercdf`, `concavecdf`, `triangle`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PriorFile {
    Discrete { nu: f64, weights: Vec<f64> },
    Continuous { family: String, params: Vec<f64> },
}

/// A prior loaded from a file: either representation.
#[derive(Debug, Clone)]
pub enum Prior<T> {
    Discrete(DiscretePrior<T>),
    Continuous(ContinuousPrior<T>),
}

impl PriorFile {
    pub fn into_prior<T: Scalar>(self) -> Result<Prior<T>, PriorError> {
        match self {
            PriorFile::Discrete { nu, weights } => {
                let n = (1.0 / nu).round();
                if (1.0 / nu - n).abs() > 1e-9 {
                    return Err(PriorError::InvalidGrid(format!(
                        "nu {nu} is not the reciprocal of an integer"
                    )));
                }
                if weights.len() != n as usize + 1 {
                    return Err(PriorError::InvalidGrid(format!(
                        "expected {} weights for nu {nu}, got {}",
                        n as usize + 1,
                        weights.len()
                    )));
                }
                let w = weights.into_iter().map(fl::<T>).collect();
                Ok(Prior::Discrete(DiscretePrior::new(w)?))
            }
            PriorFile::Continuous { family, params } => {
                let prior = continuous_from_parts::<T>(&family, &params)?;
                prior.validate()?;
                Ok(Prior::Continuous(prior))
            }
        }
    }
}

/// Build a continuous prior from a family name and parameter list.
pub fn continuous_from_parts<T: Scalar>(
    family: &str,
    params: &[f64],
) -> Result<ContinuousPrior<T>, PriorError> {
    let expect = |n: usize| -> Result<(), PriorError> {
        if params.len() == n {
            Ok(())
        } else {
            Err(PriorError::InvalidParameter(format!(
                "family {family} takes {n} parameter(s), got {}",
                params.len()
            )))
        }
    };
    let prior = match family {
        "uniform" => {
            expect(0)?;
            ContinuousPrior::Uniform
        }
        "beta" => {
            expect(2)?;
            ContinuousPrior::Beta {
                alpha: fl(params[0]),
                beta: fl(params[1]),
            }
        }
        "powercdf" => {
            expect(1)?;
            ContinuousPrior::PowerCdf {
                exponent: fl(params[0]),
            }
        }
        "concavecdf" => {
            expect(0)?;
            ContinuousPrior::ConcaveCdf
        }
        "triangle" => {
            expect(0)?;
            ContinuousPrior::Triangle
        }
        other => {
            return Err(PriorError::InvalidParameter(format!(
                "unknown prior family {other}"
            )))
        }
    };
    prior.validate()?;
    Ok(prior)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn families() -> Vec<ContinuousPrior<f64>> {
        vec![
            ContinuousPrior::Uniform,
            ContinuousPrior::Beta { alpha: 2.0, beta: 2.0 },
            ContinuousPrior::Beta { alpha: 2.0, beta: 4.0 },
            ContinuousPrior::Beta { alpha: 4.0, beta: 2.0 },
            ContinuousPrior::Beta { alpha: 8.0, beta: 1.0 },
            ContinuousPrior::PowerCdf { exponent: 2.0 },
            ContinuousPrior::ConcaveCdf,
            ContinuousPrior::Triangle,
        ]
    }

    #[test]
    fn density_values() {
        assert_eq!(ContinuousPrior::<f64>::Uniform.density(0.3), 1.0);
        // triangle density at the peak
        assert!((ContinuousPrior::<f64>::Triangle.density(0.5) - 2.0).abs() < 1e-12);
        // Beta(2,2) at 1/2 is 6 * 0.25
        let b = ContinuousPrior::<f64>::Beta { alpha: 2.0, beta: 2.0 };
        assert!((b.density(0.5) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn triangle_density_matches_monte_carlo() {
        // oracle: histogram of (s1 + s2) / 2 with s_i uniform
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let samples = 2_000_000usize;
        let width = 0.02f64;
        let mut hits = [0usize; 3];
        let centers = [0.25f64, 0.5, 0.75];
        for _ in 0..samples {
            let v = (rng.gen::<f64>() + rng.gen::<f64>()) / 2.0;
            for (c, h) in centers.iter().zip(hits.iter_mut()) {
                if (v - c).abs() < width / 2.0 {
                    *h += 1;
                }
            }
        }
        let tri = ContinuousPrior::<f64>::Triangle;
        for (c, h) in centers.iter().zip(hits.iter()) {
            let est = *h as f64 / (samples as f64 * width);
            assert!(
                (est - tri.density(*c)).abs() < 0.05,
                "density at {c}: histogram {est} vs analytic {}",
                tri.density(*c)
            );
        }
    }

    #[test]
    fn means_match_table_values() {
        assert!((ContinuousPrior::<f64>::Uniform.mean() - 0.5).abs() < 1e-12);
        assert!((ContinuousPrior::<f64>::ConcaveCdf.mean() - 1.0 / 3.0).abs() < 1e-12);
        let sq = ContinuousPrior::<f64>::PowerCdf { exponent: 2.0 };
        assert!((sq.mean() - 2.0 / 3.0).abs() < 1e-12);
        let b81 = ContinuousPrior::<f64>::Beta { alpha: 8.0, beta: 1.0 };
        assert!((b81.mean() - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn densities_integrate_to_one() {
        for p in families() {
            let mass = integrate_with_kinks(&|v| p.density(v), 0.0, 1.0, &p.kinks(), 1e-11);
            assert!((mass - 1.0).abs() < 1e-9, "{p:?}: total mass {mass}");
        }
    }

    #[test]
    fn means_match_quadrature_oracle() {
        for p in families() {
            let closed = p.mean();
            let quad = p.mean_by_quadrature(1e-11);
            assert!(
                (closed - quad).abs() < 1e-9,
                "{p:?}: closed {closed} vs quadrature {quad}"
            );
        }
    }

    #[test]
    fn partial_mean_matches_quadrature() {
        for p in families() {
            for s in [0.2, 0.5, 0.77, 1.0] {
                let quad =
                    integrate_with_kinks(&|v| v * p.density(v), 0.0, s, &p.kinks(), 1e-12);
                assert!(
                    (p.partial_mean(s) - quad).abs() < 1e-9,
                    "{p:?} at {s}: {} vs {quad}",
                    p.partial_mean(s)
                );
            }
        }
    }

    #[test]
    fn discretize_uniform_quarter_grid() {
        let d = ContinuousPrior::<f64>::Uniform.discretize(4).unwrap();
        let expect = [0.125, 0.25, 0.25, 0.25, 0.125];
        for (w, e) in d.weights().iter().zip(expect.iter()) {
            assert!((w - e).abs() < 1e-12);
        }
    }

    #[test]
    fn discretize_single_cell_split() {
        for p in families() {
            let d = p.discretize(1).unwrap();
            assert!((d.weights()[0] - p.cdf(0.5)).abs() < 1e-12);
            assert!((d.weights()[1] - (1.0 - p.cdf(0.5))).abs() < 1e-12);
        }
    }

    #[test]
    fn discretize_mean_error_bounded_by_step() {
        for p in families() {
            for n in [4usize, 50, 200] {
                let d = p.discretize(n).unwrap();
                let err = (d.mean() - p.mean()).abs();
                assert!(err <= 1.0 / n as f64, "{p:?} n={n}: err {err}");
                let total: f64 = d.weights().iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn discretize_beta_fine_grid_mean() {
        let d = ContinuousPrior::<f64>::Beta { alpha: 2.0, beta: 2.0 }
            .discretize(200)
            .unwrap();
        assert!((d.mean() - 0.5).abs() < 5e-5);
    }

    #[test]
    fn density_nonnegative_on_dense_grid() {
        for p in families() {
            for i in 0..=10_000 {
                let v = i as f64 / 10_000.0;
                assert!(p.density(v) >= 0.0, "{p:?} at {v}");
            }
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ContinuousPrior::<f64>::Beta { alpha: 0.0, beta: 2.0 }
            .validate()
            .is_err());
        assert!(ContinuousPrior::<f64>::Beta { alpha: 2.0, beta: -1.0 }
            .validate()
            .is_err());
        assert!(ContinuousPrior::<f64>::PowerCdf { exponent: 0.0 }
            .validate()
            .is_err());
        assert!(DiscretePrior::<f64>::new(vec![0.5, 0.6]).is_err());
        assert!(DiscretePrior::<f64>::new(vec![1.2, -0.2]).is_err());
    }

    #[test]
    fn prior_file_round_trip() {
        let file = PriorFile::Continuous {
            family: "beta".into(),
            params: vec![2.0, 2.0],
        };
        let json = serde_json::to_string(&file).unwrap();
        let back: PriorFile = serde_json::from_str(&json).unwrap();
        match back.into_prior::<f64>().unwrap() {
            Prior::Continuous(p) => assert_eq!(
                p,
                ContinuousPrior::Beta { alpha: 2.0, beta: 2.0 }
            ),
            _ => panic!("wrong variant"),
        }

        let bad = PriorFile::Discrete { nu: 0.5, weights: vec![0.25, 0.25, 0.25] };
        assert!(bad.into_prior::<f64>().is_err());
    }
}
