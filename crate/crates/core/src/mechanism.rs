//! Finite symmetric sale mechanisms: allocation and payment tables over
//! message profiles, with an opt-out message 0 that always yields zero
//! allocation and zero payment.
//!
//! Tables are stored densely per buyer, indexed by the profile number
//! sum_i m_i * (k+1)^(i-1) with buyer 1 in the least significant digit. That
//! indexing is also the on-disk layout, so files round-trip bit-exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{fl, fu, Scalar};

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error("invalid mechanism parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid table: {0}")]
    InvalidTable(String),
}

/// Contiguous block of ranks (1-based, from the top) a message can occupy
/// once ties are broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankSet {
    pub first: usize,
    pub last: usize,
}

impl RankSet {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Average of 1/j over the ranks in the set.
    pub fn mean_reciprocal<T: Scalar>(&self) -> T {
        let sum: T = (self.first..=self.last).map(|j| T::one() / fu::<T>(j)).sum();
        sum / fu(self.len())
    }
}

/// Ranks the entry at `position` can occupy among all entries of `profile`
/// sorted in descending order; ties occupy their whole contiguous block.
pub fn rank_set(position: usize, profile: &[usize]) -> RankSet {
    let own = profile[position];
    let mut greater = 0usize;
    let mut equal = 0usize;
    for &m in profile {
        if m > own {
            greater += 1;
        } else if m == own {
            equal += 1;
        }
    }
    RankSet { first: greater + 1, last: greater + equal }
}

/// Allocation and payment tables for `buyers` players with messages 0..=k.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMechanism<T> {
    buyers: usize,
    k: usize,
    alloc: Vec<Vec<T>>,
    pay: Vec<Vec<T>>,
    symmetric: bool,
    negative_payment: bool,
}

impl<T: Scalar> FiniteMechanism<T> {
    /// The exponential price mechanism.
    ///
    /// Allocation is built by telescoping in the owner's message: each unit
    /// step adds the tie-averaged reciprocal rank of the pre-step message,
    /// divided by k. Payment is `x * ((1 + 1/a)^m - 1)`, evaluated by
    /// repeated multiplication so downstream identities hold to near machine
    /// precision.
    pub fn exponential(buyers: usize, k: usize, a: T, x: T) -> Result<Self, MechanismError> {
        if buyers == 0 || k == 0 {
            return Err(MechanismError::InvalidParameter(
                "need at least one buyer and one non-opt-out message".into(),
            ));
        }
        if !(a > T::zero()) || !(x > T::zero()) || !a.is_finite() || !x.is_finite() {
            return Err(MechanismError::InvalidParameter(format!(
                "rate and payment scale must be positive, got a={a}, x={x}"
            )));
        }
        check_table_size(buyers, k)?;
        let np = n_profiles(buyers, k);
        let kinv = T::one() / fu::<T>(k);
        let mut alloc = vec![vec![T::zero(); np]; buyers];
        let mut profile = vec![0usize; buyers];
        for i in 0..buyers {
            let stride = (k + 1).pow(i as u32);
            for step in 0..k {
                for idx in 0..np {
                    decode(idx, buyers, k, &mut profile);
                    if profile[i] != step {
                        continue;
                    }
                    let inc = rank_set(i, &profile).mean_reciprocal::<T>() * kinv;
                    alloc[i][idx + stride] = alloc[i][idx] + inc;
                }
            }
        }
        let pow = growth_powers(a, k);
        let mut pay = vec![vec![T::zero(); np]; buyers];
        for i in 0..buyers {
            for idx in 0..np {
                decode(idx, buyers, k, &mut profile);
                pay[i][idx] = x * (pow[profile[i]] - T::one());
            }
        }
        Ok(FiniteMechanism {
            buyers,
            k,
            alloc,
            pay,
            symmetric: true,
            negative_payment: false,
        })
    }

    /// The generalized two-buyer mechanism, parameterized by the two payment
    /// scales `y0` (interior) and `y1` (against the boundary message).
    ///
    /// Allocation steps are (2k+1)/(4k^2), (3k+1)/(4k^2), (4k+1)/(4k^2) when
    /// the owner's pre-step message is below / equal to / above an interior
    /// opponent message, and 1/(2k) against the boundary message, which makes
    /// the boundary feasibility constraint q(j,k) + q(k,j) = 1 bind for every
    /// j. Payments may be negative for some sign choices of (y0, y1); the
    /// mechanism records that in a flag rather than rejecting it.
    pub fn generalized_two_buyer(k: usize, a: T, y0: T, y1: T) -> Result<Self, MechanismError> {
        if k == 0 {
            return Err(MechanismError::InvalidParameter(
                "need at least one non-opt-out message".into(),
            ));
        }
        if !(a > T::zero()) || !a.is_finite() || !y0.is_finite() || !y1.is_finite() {
            return Err(MechanismError::InvalidParameter(format!(
                "need positive finite rate and finite payment scales, got a={a}, y0={y0}, y1={y1}"
            )));
        }
        let buyers = 2usize;
        let np = n_profiles(buyers, k);
        let kf = fu::<T>(k);
        let four_k2 = fl::<T>(4.0) * kf * kf;
        let below = (fl::<T>(2.0) * kf + T::one()) / four_k2;
        let tied = (fl::<T>(3.0) * kf + T::one()) / four_k2;
        let above = (fl::<T>(4.0) * kf + T::one()) / four_k2;
        let boundary = T::one() / (fl::<T>(2.0) * kf);

        let mut alloc = vec![vec![T::zero(); np]; buyers];
        for own in 0..buyers {
            let opp = 1 - own;
            let stride = (k + 1).pow(own as u32);
            let opp_stride = (k + 1).pow(opp as u32);
            for step in 0..k {
                for opp_msg in 0..=k {
                    let idx = step * stride + opp_msg * opp_stride;
                    let inc = if opp_msg == k {
                        boundary
                    } else if step < opp_msg {
                        below
                    } else if step == opp_msg {
                        tied
                    } else {
                        above
                    };
                    alloc[own][idx + stride] = alloc[own][idx] + inc;
                }
            }
        }

        let pow = growth_powers(a, k);
        let top = pow[k] - T::one();
        let mut pay = vec![vec![T::zero(); np]; buyers];
        for own in 0..buyers {
            let opp = 1 - own;
            let stride = (k + 1).pow(own as u32);
            let opp_stride = (k + 1).pow(opp as u32);
            for m_own in 0..=k {
                for m_opp in 0..=k {
                    let scale = if m_opp < k {
                        y0 * fl(0.5)
                    } else {
                        y1 + top * y0 * fl(0.5)
                    };
                    pay[own][m_own * stride + m_opp * opp_stride] =
                        (pow[m_own] - T::one()) * scale;
                }
            }
        }
        let negative_payment = pay
            .iter()
            .any(|t| t.iter().any(|&p| p < -fl::<T>(1e-15)));
        Ok(FiniteMechanism {
            buyers,
            k,
            alloc,
            pay,
            symmetric: true,
            negative_payment,
        })
    }

    /// Take-it-or-leave-it posted price for a single buyer.
    pub fn posted_price(price: T) -> Result<Self, MechanismError> {
        if !(price > T::zero()) || price > T::one() {
            return Err(MechanismError::InvalidParameter(format!(
                "posted price must lie in (0, 1], got {price}"
            )));
        }
        Ok(FiniteMechanism {
            buyers: 1,
            k: 1,
            alloc: vec![vec![T::zero(), T::one()]],
            pay: vec![vec![T::zero(), price]],
            symmetric: true,
            negative_payment: false,
        })
    }

    /// Wrap explicit tables, validating feasibility and the opt-out rows.
    pub fn from_tables(
        buyers: usize,
        k: usize,
        alloc: Vec<Vec<T>>,
        pay: Vec<Vec<T>>,
    ) -> Result<Self, MechanismError> {
        if buyers == 0 || k == 0 {
            return Err(MechanismError::InvalidParameter(
                "need at least one buyer and one non-opt-out message".into(),
            ));
        }
        check_table_size(buyers, k)?;
        let np = n_profiles(buyers, k);
        if alloc.len() != buyers || pay.len() != buyers {
            return Err(MechanismError::InvalidTable(format!(
                "expected {buyers} allocation and payment tables"
            )));
        }
        for table in alloc.iter().chain(pay.iter()) {
            if table.len() != np {
                return Err(MechanismError::InvalidTable(format!(
                    "tables must have {np} entries, got {}",
                    table.len()
                )));
            }
            if table.iter().any(|x| !x.is_finite()) {
                return Err(MechanismError::InvalidTable("non-finite entry".into()));
            }
        }
        let tol = fl::<T>(1e-12);
        let mut profile = vec![0usize; buyers];
        for idx in 0..np {
            decode(idx, buyers, k, &mut profile);
            let mut total = T::zero();
            for i in 0..buyers {
                let q = alloc[i][idx];
                if q < -tol {
                    return Err(MechanismError::InvalidTable(format!(
                        "negative allocation {q} at profile {idx}"
                    )));
                }
                total = total + q;
                if profile[i] == 0 && (q.abs() > tol || pay[i][idx].abs() > tol) {
                    return Err(MechanismError::InvalidTable(format!(
                        "opt-out row violated for buyer {i} at profile {idx}"
                    )));
                }
            }
            if total > T::one() + tol {
                return Err(MechanismError::InvalidTable(format!(
                    "total allocation {total} exceeds 1 at profile {idx}"
                )));
            }
        }
        let mut mech = FiniteMechanism {
            buyers,
            k,
            alloc,
            pay,
            symmetric: false,
            negative_payment: false,
        };
        mech.symmetric = mech.check_symmetric(tol);
        mech.negative_payment = mech
            .pay
            .iter()
            .any(|t| t.iter().any(|&p| p < -tol));
        Ok(mech)
    }

    pub fn buyers(&self) -> usize {
        self.buyers
    }

    /// Number of non-opt-out messages; the message set is 0..=k.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn has_negative_payment(&self) -> bool {
        self.negative_payment
    }

    pub fn n_profiles(&self) -> usize {
        n_profiles(self.buyers, self.k)
    }

    pub fn profile_index(&self, profile: &[usize]) -> usize {
        debug_assert_eq!(profile.len(), self.buyers);
        let mut idx = 0usize;
        let mut stride = 1usize;
        for &m in profile {
            debug_assert!(m <= self.k);
            idx += m * stride;
            stride *= self.k + 1;
        }
        idx
    }

    pub fn decode_profile(&self, idx: usize, out: &mut [usize]) {
        decode(idx, self.buyers, self.k, out);
    }

    /// Iterate all message profiles in index order.
    pub fn profiles(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.n_profiles()).map(move |idx| {
            let mut p = vec![0usize; self.buyers];
            decode(idx, self.buyers, self.k, &mut p);
            p
        })
    }

    pub fn allocation_at(&self, buyer: usize, idx: usize) -> T {
        self.alloc[buyer][idx]
    }

    pub fn payment_at(&self, buyer: usize, idx: usize) -> T {
        self.pay[buyer][idx]
    }

    pub fn allocation(&self, buyer: usize, profile: &[usize]) -> T {
        self.alloc[buyer][self.profile_index(profile)]
    }

    pub fn payment(&self, buyer: usize, profile: &[usize]) -> T {
        self.pay[buyer][self.profile_index(profile)]
    }

    /// Buyer utility v * q_i(m) - P_i(m).
    pub fn utility(&self, v: T, profile: &[usize], buyer: usize) -> T {
        let idx = self.profile_index(profile);
        self.utility_at(v, idx, buyer)
    }

    pub fn utility_at(&self, v: T, idx: usize, buyer: usize) -> T {
        v * self.alloc[buyer][idx] - self.pay[buyer][idx]
    }

    pub fn total_payment_at(&self, idx: usize) -> T {
        (0..self.buyers).map(|i| self.pay[i][idx]).sum()
    }

    pub fn total_allocation_at(&self, idx: usize) -> T {
        (0..self.buyers).map(|i| self.alloc[i][idx]).sum()
    }

    /// Largest |utility| over profiles and the value endpoints 0 and 1;
    /// utilities are affine in v, so this bounds |U| on all of [0, 1].
    pub fn max_abs_utility(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.buyers {
            for idx in 0..self.n_profiles() {
                best = best
                    .max(self.pay[i][idx].abs())
                    .max((self.alloc[i][idx] - self.pay[i][idx]).abs());
            }
        }
        best
    }

    /// Average the tables over all buyer permutations.
    ///
    /// Buyer i's new table at profile m' averages, over permutations sigma,
    /// buyer sigma(i)'s old value at the profile that places m'_t on buyer
    /// sigma(t). The output satisfies the symmetry identity exactly and the
    /// operation is idempotent. Note the per-profile allocation total becomes
    /// the permutation average of the original totals, which preserves
    /// feasibility.
    pub fn symmetrized(&self) -> Result<Self, MechanismError> {
        if self.buyers > 8 {
            return Err(MechanismError::InvalidParameter(
                "symmetrization enumerates permutations; capped at 8 buyers".into(),
            ));
        }
        let perms = permutations(self.buyers);
        let np = self.n_profiles();
        let weight = T::one() / fu::<T>(perms.len());
        let mut alloc = vec![vec![T::zero(); np]; self.buyers];
        let mut pay = vec![vec![T::zero(); np]; self.buyers];
        let mut target = vec![0usize; self.buyers];
        let mut source = vec![0usize; self.buyers];
        for idx in 0..np {
            decode(idx, self.buyers, self.k, &mut target);
            for perm in &perms {
                for t in 0..self.buyers {
                    source[perm[t]] = target[t];
                }
                let sidx = self.profile_index(&source);
                for i in 0..self.buyers {
                    alloc[i][idx] = alloc[i][idx] + weight * self.alloc[perm[i]][sidx];
                    pay[i][idx] = pay[i][idx] + weight * self.pay[perm[i]][sidx];
                }
            }
        }
        Ok(FiniteMechanism {
            buyers: self.buyers,
            k: self.k,
            alloc,
            pay,
            symmetric: true,
            negative_payment: self.negative_payment,
        })
    }

    /// Whether buyer i's tables equal buyer 1's under the multiset view of
    /// opponents, within `tol`.
    pub fn check_symmetric(&self, tol: T) -> bool {
        let np = self.n_profiles();
        let mut profile = vec![0usize; self.buyers];
        let mut canon = vec![0usize; self.buyers];
        for idx in 0..np {
            decode(idx, self.buyers, self.k, &mut profile);
            for i in 0..self.buyers {
                canon[0] = profile[i];
                let mut t = 1;
                for (j, &m) in profile.iter().enumerate() {
                    if j != i {
                        canon[t] = m;
                        t += 1;
                    }
                }
                canon[1..].sort_unstable();
                let cidx = self.profile_index(&canon);
                if (self.alloc[i][idx] - self.alloc[0][cidx]).abs() > tol
                    || (self.pay[i][idx] - self.pay[0][cidx]).abs() > tol
                {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_file(&self) -> MechanismFile
    where
        T: Serialize,
    {
        MechanismFile {
            buyers: self.buyers,
            k: self.k,
            q: self
                .alloc
                .iter()
                .map(|t| t.iter().map(|x| x.to_f64().unwrap()).collect())
                .collect(),
            p: self
                .pay
                .iter()
                .map(|t| t.iter().map(|x| x.to_f64().unwrap()).collect())
                .collect(),
        }
    }
}

fn n_profiles(buyers: usize, k: usize) -> usize {
    (k + 1).pow(buyers as u32)
}

fn check_table_size(buyers: usize, k: usize) -> Result<(), MechanismError> {
    let np = (k + 1) as f64;
    if np.powi(buyers as i32) > 5e7 {
        return Err(MechanismError::InvalidParameter(format!(
            "profile table with ({}+1)^{buyers} entries is too large",
            k
        )));
    }
    Ok(())
}

fn decode(idx: usize, buyers: usize, k: usize, out: &mut [usize]) {
    let mut rest = idx;
    for slot in out.iter_mut().take(buyers) {
        *slot = rest % (k + 1);
        rest /= k + 1;
    }
}

/// Powers (1 + 1/a)^j for j = 0..=k by repeated multiplication.
fn growth_powers<T: Scalar>(a: T, k: usize) -> Vec<T> {
    let ratio = T::one() + T::one() / a;
    let mut pow = Vec::with_capacity(k + 1);
    pow.push(T::one());
    for j in 0..k {
        let last = pow[j];
        pow.push(last * ratio);
    }
    pow
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut items: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap_permute(&mut items, n, &mut out);
    out.sort();
    out
}

fn heap_permute(items: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
    if n == 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..n {
        heap_permute(items, n - 1, out);
        if n % 2 == 0 {
            items.swap(i, n - 1);
        } else {
            items.swap(0, n - 1);
        }
    }
}

/// On-disk mechanism layout; tables are row-major in the profile index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MechanismFile {
    pub buyers: usize,
    pub k: usize,
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
}

impl MechanismFile {
    pub fn into_mechanism<T: Scalar>(self) -> Result<FiniteMechanism<T>, MechanismError> {
        let alloc = self
            .q
            .into_iter()
            .map(|t| t.into_iter().map(fl::<T>).collect())
            .collect();
        let pay = self
            .p
            .into_iter()
            .map(|t| t.into_iter().map(fl::<T>).collect())
            .collect();
        FiniteMechanism::from_tables(self.buyers, self.k, alloc, pay)
    }
}
