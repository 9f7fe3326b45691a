//! Shared generators for the randomized test corpora.
#![allow(dead_code)] // each test binary uses its own subset

use rand::Rng;
use revguard::bce::RateMatrices;
use revguard::mechanism::FiniteMechanism;

/// Random feasible mechanism: nonnegative allocations scaled to total at
/// most one per profile, payments in [-0.5, 1], opt-out rows zero.
pub fn random_feasible_mechanism<R: Rng>(
    rng: &mut R,
    buyers: usize,
    k: usize,
) -> FiniteMechanism<f64> {
    let np = (k + 1).pow(buyers as u32);
    let mut alloc = vec![vec![0.0f64; np]; buyers];
    let mut pay = vec![vec![0.0f64; np]; buyers];
    for idx in 0..np {
        let mut profile = vec![0usize; buyers];
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
            pay[i][idx] = rng.gen::<f64>() * 1.5 - 0.5;
            total += alloc[i][idx];
        }
        if total > 1.0 {
            for table in alloc.iter_mut() {
                table[idx] /= total;
            }
        }
    }
    FiniteMechanism::from_tables(buyers, k, alloc, pay).expect("generated tables are feasible")
}

/// Random nonnegative deviation rates with zero diagonal.
pub fn random_rates<R: Rng>(
    rng: &mut R,
    buyers: usize,
    k: usize,
    max_rate: f64,
) -> RateMatrices<f64> {
    let n = k + 1;
    let mut mats = Vec::with_capacity(buyers);
    for _ in 0..buyers {
        let mut m = vec![0.0f64; n * n];
        for from in 0..n {
            for to in 0..n {
                if to != from {
                    m[from * n + to] = rng.gen::<f64>() * max_rate;
                }
            }
        }
        mats.push(m);
    }
    RateMatrices::new(n, mats).expect("nonnegative rates")
}
