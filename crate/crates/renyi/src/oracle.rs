//! Brute-force profile distribution by exhaustive split enumeration.
//!
//! Independent of both the moment recurrences and the simulator: the exact
//! distribution of the external profile is built bottom-up by enumerating
//! every binomial split sequence with its exact probability. A block of size
//! `n >= 2` splits into `(j, n-j)` with probability
//! `C(n,j) p^j q^(n-j) / (1 - p^n - q^n)` (conditioning on a conclusive
//! query), and the two sides evolve independently one level deeper.
//!
//! Only feasible for small `n`; the acceptance suite runs it to n = 10.

use std::collections::BTreeMap;

use crate::numerics::{hp, pow_i, Bias, HPReal};

/// Exact distribution over profile vectors `(B_{n,0}, ..., B_{n,n-1})`.
pub struct ProfileDistribution {
    pub n: usize,
    /// profile vector -> probability
    pub atoms: BTreeMap<Vec<u16>, HPReal>,
}

/// Enumerate the exact profile distribution for every m <= n.
pub fn profile_distributions(n: usize, bias: &Bias) -> Vec<ProfileDistribution> {
    let prec = bias.prec();
    let p = bias.p();
    let q = bias.q();
    let mut dists: Vec<BTreeMap<Vec<u16>, HPReal>> = Vec::with_capacity(n + 1);
    dists.push(BTreeMap::new()); // m = 0 unused
    dists.push(BTreeMap::from([(vec![1u16], hp(prec, 1))]));

    for m in 2..=n {
        let denom = hp(prec, 1) - pow_i(p, m as i64) - pow_i(q, m as i64);
        let mut acc: BTreeMap<Vec<u16>, HPReal> = BTreeMap::new();
        for j in 1..m {
            let w = hp(prec, crate::numerics::binomial(m as u64, j as u64))
                * pow_i(p, j as i64)
                * pow_i(q, (m - j) as i64)
                / &denom;
            for (left, pl) in &dists[j] {
                for (right, pr) in &dists[m - j] {
                    // children sit one level deeper
                    let mut prof = vec![0u16; m];
                    for (k, c) in left.iter().enumerate() {
                        prof[k + 1] += c;
                    }
                    for (k, c) in right.iter().enumerate() {
                        prof[k + 1] += c;
                    }
                    let pr_total = hp(prec, &w) * pl * pr;
                    acc.entry(prof)
                        .and_modify(|e| *e += &pr_total)
                        .or_insert(pr_total);
                }
            }
        }
        dists.push(acc);
    }
    dists
        .into_iter()
        .enumerate()
        .skip(1)
        .map(|(m, atoms)| ProfileDistribution { n: m, atoms })
        .collect()
}

impl ProfileDistribution {
    pub fn total_mass(&self, prec: u32) -> HPReal {
        let mut t = hp(prec, 0);
        for v in self.atoms.values() {
            t += v;
        }
        t
    }

    /// (E[B_{n,k}], E[B_{n,k}^2]) for k = 0..n-1.
    pub fn moments(&self, prec: u32) -> (Vec<HPReal>, Vec<HPReal>) {
        let mut mean = vec![hp(prec, 0); self.n];
        let mut sq = vec![hp(prec, 0); self.n];
        for (prof, pr) in &self.atoms {
            for (k, &c) in prof.iter().enumerate() {
                if c > 0 {
                    mean[k] += hp(prec, c) * pr;
                    sq[k] += hp(prec, (c as u64) * (c as u64)) * pr;
                }
            }
        }
        (mean, sq)
    }

    /// Exact distribution of the height max{k : B > 0}.
    pub fn height_pmf(&self, prec: u32) -> Vec<HPReal> {
        let mut pmf = vec![hp(prec, 0); self.n];
        for (prof, pr) in &self.atoms {
            let h = prof.iter().rposition(|&c| c > 0).unwrap_or(0);
            pmf[h] += pr;
        }
        pmf
    }
}
