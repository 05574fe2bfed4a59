//! Exact first and second moments of the external profile by recurrence.
//!
//! The mean profile mu[n][k] = E[B_{n,k}] satisfies, for n >= 2 and k >= 1,
//!
//! ```text
//! mu[n][k] * (1 - p^n - q^n) = sum_{j=1}^{n-1} C(n,j) p^j q^(n-j) (mu[j][k-1] + mu[n-j][k-1])
//! ```
//!
//! with mu[1][0] = 1 and mu[n][k] = 0 for k >= n. The `(p^n + q^n)` self-term
//! (an inconclusive first query) has been moved to the left, which makes the
//! recurrence lower-triangular in `n`. The second-moment layer `s = E[B^2]`
//! obeys the same splitting recurrence with an extra cross term
//! `2 mu[j][k-1] mu[n-j][k-1]` from the independence of the two sides.

use crate::numerics::{hp, pow_i, Bias, HPReal};
use crate::{Error, Result};
use rug::ops::Pow;

/// Exact moment triangles for the external profile.
///
/// Rows `1..=n_max`; row `n` holds `k = 0..=min(n-1, k_cap)`. Entries beyond
/// the stored range are exactly zero. A capped table (k_cap < n_max - 1) is
/// cheaper to fill and is what the Poisson-transform evaluations use; the
/// row-sum identities only apply to full tables.
#[derive(Debug)]
pub struct ProfileTable {
    bias: Bias,
    n_max: usize,
    k_cap: usize,
    mu: Vec<Vec<HPReal>>,
    second: Option<Vec<Vec<HPReal>>>,
}

impl ProfileTable {
    /// Fill the mean layer up to `n_max`, keeping levels `k <= k_cap`
    /// (`None` = full triangle).
    pub fn mean_profile(n_max: usize, bias: &Bias, k_cap: Option<usize>) -> Result<Self> {
        Self::build(n_max, bias, k_cap, false)
    }

    /// Fill both the mean layer and the second-moment layer `E[B^2]`.
    pub fn with_second_moment(n_max: usize, bias: &Bias, k_cap: Option<usize>) -> Result<Self> {
        Self::build(n_max, bias, k_cap, true)
    }

    fn build(n_max: usize, bias: &Bias, k_cap: Option<usize>, second: bool) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::Domain("profile table needs n_max >= 1".into()));
        }
        let prec = bias.prec();
        let k_cap = k_cap.unwrap_or(n_max.saturating_sub(1)).min(n_max.saturating_sub(1));
        let p = bias.p();
        let q = bias.q();
        let ratio_pq = hp(prec, p) / q; // p/q

        let mut mu: Vec<Vec<HPReal>> = Vec::with_capacity(n_max + 1);
        mu.push(vec![]); // n = 0 unused
        mu.push(vec![hp(prec, 1)]); // mu[1][0] = 1
        let mut sec: Vec<Vec<HPReal>> = vec![vec![], vec![hp(prec, 1)]];

        let mut p_pow = hp(prec, p); // p^n
        let mut q_pow = hp(prec, q); // q^n
        for n in 2..=n_max {
            p_pow *= p;
            q_pow *= q;
            let denom = hp(prec, 1) - &p_pow - &q_pow;
            // w[j] = C(n,j) p^j q^(n-j), j = 1..n-1, by the ratio recurrence
            let mut w = Vec::with_capacity(n - 1);
            let mut wj = hp(prec, n as u64) * p * pow_i(q, (n - 1) as i64);
            w.push(wj.clone());
            for j in 1..n - 1 {
                wj = wj * ((n - j) as u64) / ((j + 1) as u64) * &ratio_pq;
                w.push(wj.clone());
            }

            let k_hi = (n - 1).min(k_cap);
            let mut row = vec![hp(prec, 0); k_hi + 1];
            let mut srow = vec![hp(prec, 0); k_hi + 1];
            for k in 1..=k_hi {
                let mut acc = hp(prec, 0);
                let mut sacc = hp(prec, 0);
                for (idx, wj) in w.iter().enumerate() {
                    let j = idx + 1;
                    let a = Self::at(&mu, j, k - 1, prec);
                    let b = Self::at(&mu, n - j, k - 1, prec);
                    acc += hp(prec, &a + &b) * wj;
                    if second {
                        let sa = Self::at(&sec, j, k - 1, prec);
                        let sb = Self::at(&sec, n - j, k - 1, prec);
                        let cross = hp(prec, 2) * &a * &b;
                        sacc += (hp(prec, &sa + &sb) + &cross) * wj;
                    }
                }
                row[k] = acc / &denom;
                if second {
                    srow[k] = sacc / &denom;
                }
            }
            mu.push(row);
            sec.push(srow);
        }
        Ok(ProfileTable {
            bias: bias.clone(),
            n_max,
            k_cap,
            mu,
            second: second.then_some(sec),
        })
    }

    fn at(layer: &[Vec<HPReal>], n: usize, k: usize, prec: u32) -> HPReal {
        layer
            .get(n)
            .and_then(|row| row.get(k))
            .cloned()
            .unwrap_or_else(|| hp(prec, 0))
    }

    pub fn bias(&self) -> &Bias {
        &self.bias
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn k_cap(&self) -> usize {
        self.k_cap
    }

    pub fn prec(&self) -> u32 {
        self.bias.prec()
    }

    pub fn has_second_moment(&self) -> bool {
        self.second.is_some()
    }

    /// True when every row stores all of its nonzero levels.
    pub fn is_full(&self) -> bool {
        self.k_cap >= self.n_max.saturating_sub(1)
    }

    /// E[B_{n,k}]; exact zero outside the stored triangle (k >= n).
    pub fn mu(&self, n: usize, k: usize) -> HPReal {
        assert!(n >= 1 && n <= self.n_max, "mu({n},{k}) outside table (n_max {})", self.n_max);
        Self::at(&self.mu, n, k, self.prec())
    }

    /// E[B_{n,k}^2]; requires the second-moment layer.
    pub fn second_moment(&self, n: usize, k: usize) -> HPReal {
        let sec = self.second.as_ref().expect("second-moment layer not built");
        assert!(n >= 1 && n <= self.n_max);
        Self::at(sec, n, k, self.prec())
    }

    /// Var[B_{n,k}] = E[B^2] - E[B]^2.
    pub fn var(&self, n: usize, k: usize) -> HPReal {
        let m = self.mu(n, k);
        self.second_moment(n, k) - m.clone().square()
    }

    /// Factorial moment E[B(B-1)] = s - mu, converted at the boundary.
    pub fn factorial_moment(&self, n: usize, k: usize) -> HPReal {
        self.second_moment(n, k) - self.mu(n, k)
    }

    /// Row sum over all stored k; equals n (to precision) for full tables.
    pub fn row_sum(&self, n: usize) -> HPReal {
        let prec = self.prec();
        let mut acc = hp(prec, 0);
        for v in &self.mu[n] {
            acc += v;
        }
        acc
    }

    /// Pr[D_n = k] = mu[n][k] / n for the stored levels.
    pub fn depth_pmf(&self, n: usize) -> Result<Vec<HPReal>> {
        if n < 1 || n > self.n_max {
            return Err(Error::OutOfRange(format!("depth_pmf: n={n} not in table")));
        }
        if !self.is_full() && n > self.k_cap + 1 {
            return Err(Error::OutOfRange(format!(
                "depth_pmf: table capped at k <= {}, row {n} incomplete",
                self.k_cap
            )));
        }
        let prec = self.prec();
        Ok(self.mu[n].iter().map(|m| hp(prec, m) / hp(prec, n as u64)).collect())
    }

    /// First-moment/Chebyshev bound bundle at level k.
    pub fn tail_bounds(&self, n: usize, k: usize) -> Result<TailBounds> {
        if n < 1 || n > self.n_max {
            return Err(Error::OutOfRange(format!("tail_bounds: n={n} not in table")));
        }
        let prec = self.prec();
        let mut height_tail = hp(prec, 0);
        for j in (k + 1)..self.mu[n].len() {
            height_tail += &self.mu[n][j];
        }
        let m = self.mu(n, k);
        let cheb = if self.has_second_moment() && m > 0 {
            Some(self.var(n, k) / m.clone().square())
        } else {
            None
        };
        Ok(TailBounds { height_tail, cheb, fillup_lower: m })
    }

    /// Multiply one entry by `1 + eps` — a fault-injection hook for
    /// exercising the conservation checks.
    #[doc(hidden)]
    pub fn perturb_entry_for_tests(&mut self, n: usize, k: usize, eps: f64) {
        let prec = self.prec();
        let factor = hp(prec, 1) + hp(prec, eps);
        self.mu[n][k] *= factor;
    }

    /// xi_l(n) extracted from the table entry nearest the diagonal:
    /// `mu[n][n-l] / (n! C*(p) p^((n-l)(n-l+1)/2) q^(n-l))`.
    pub fn xi_of_n(&self, l: usize, n: usize, cstar: &HPReal) -> Result<HPReal> {
        if !(1 <= l && l < n && n <= self.n_max) {
            return Err(Error::OutOfRange(format!("xi_of_n: need 1 <= l < n <= n_max, got ({l},{n})")));
        }
        let k = n - l;
        if k > self.k_cap {
            return Err(Error::OutOfRange(format!("xi_of_n: level {k} beyond table cap {}", self.k_cap)));
        }
        let prec = self.prec();
        let e = (k as u64) * (k as u64 + 1) / 2;
        let mut denom = hp(prec, rug::Integer::from(rug::Integer::factorial(n as u32)));
        denom *= cstar;
        denom *= self.bias.p().clone().pow(e as u32);
        denom *= pow_i(self.bias.q(), k as i64);
        Ok(self.mu(n, k) / denom)
    }
}

/// The three moment-method bounds at a level.
#[derive(Debug)]
pub struct TailBounds {
    /// `sum_{j>k} E[B_{n,j}]`, a bound on Pr[H_n > k].
    pub height_tail: HPReal,
    /// `Var[B_{n,k}] / E[B_{n,k}]^2`, a bound on Pr[H_n < k] and Pr[F_n > k];
    /// `None` when the mean vanishes or no second-moment layer exists.
    pub cheb: Option<HPReal>,
    /// `E[B_{n,k}]`, a bound on Pr[F_n < k].
    pub fillup_lower: HPReal,
}

/// `C*(p) = prod_{j>=2} (1 - p^j - q^j)^{-1} (1 + (q/p)^{j-2})` with a
/// certified multiplicative tail bound below `tol`. Diverges at p = 1/2
/// (every factor carries `1 + (q/p)^{j-2} = 2`), so strictly `p > 1/2`.
pub fn cstar(bias: &Bias, tol: f64) -> Result<HPReal> {
    let prec = bias.prec();
    if bias.is_symmetric() {
        return Err(Error::Domain("C*(p) diverges at p = 1/2 (each factor contributes 2)".into()));
    }
    if tol <= 0.0 {
        return Err(Error::Domain("cstar: tol must be positive".into()));
    }
    let min_tol = 2f64.powi(-(prec as i32) + 8);
    if tol < min_tol {
        return Err(Error::Precision(format!(
            "cstar: tol {tol:e} unreachable at {prec} bits (floor {min_tol:e})"
        )));
    }
    let p = bias.p();
    let q = bias.q();
    let a = bias.ratio_qp(); // q/p < 1
    let mut prod = hp(prec, 1);
    let mut p_pow = hp(prec, p); // p^j
    let mut q_pow = hp(prec, q);
    let mut a_pow = hp(prec, 1); // (q/p)^(j-2)
    let tol_hp = hp(prec, tol);
    let mut j = 2u32;
    loop {
        p_pow *= p;
        q_pow *= q;
        let base = hp(prec, 1) - &p_pow - &q_pow;
        prod *= (hp(prec, 1) + &a_pow) / base;
        // tail of ln(prod): sum_{i>j} [2(p^i + q^i) + (q/p)^(i-2)]
        let tail = hp(prec, 2) * (hp(prec, &p_pow) * p / (hp(prec, 1) - p) + hp(prec, &q_pow) * q / (hp(prec, 1) - q))
            + hp(prec, &a_pow) * &a / (hp(prec, 1) - &a);
        if tail < tol_hp {
            return Ok(prod);
        }
        a_pow *= &a;
        j += 1;
        if j > 4_000_000 {
            return Err(Error::Precision("cstar: product did not certify".into()));
        }
    }
}
