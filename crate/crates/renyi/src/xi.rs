//! The limit sequence `xi_l`, its generating-function and Poisson-transform
//! representations, diagonal approximations for the mean profile, and the
//! vanishing double series `D(p)`.
//!
//! `xi_l` is defined by `xi_1 = 1` and
//!
//! ```text
//! xi_l = q^{-1} p^l sum_{J=1}^{l} xi_{l+1-J} (q/p)^J / J!
//! ```
//!
//! The `J = 1` term carries `xi_l` itself with coefficient `p^{l-1}`, so each
//! entry is solved exactly by isolating that self-term — no fixed-point
//! iteration. The generating function identity
//! `X(z) = sum xi_{L+1} z^L = prod_{j>=0} (e^{q p^j z} - 1)/(q p^j z)`
//! provides an independent route used by the cross-checks.

use crate::numerics::{hp, pow_i, Bias, HPReal};
use crate::{Error, Result};
use rug::ops::Pow;
use rug::Integer;

/// The limit coefficients `xi_1 ... xi_{l_max}` at a fixed bias.
#[derive(Debug, Clone)]
pub struct XiSequence {
    bias: Bias,
    xi: Vec<HPReal>, // xi[l] for l >= 1; xi[0] unused
}

impl XiSequence {
    /// Solve the recurrence for `l = 1..=l_max`.
    pub fn limits(l_max: usize, bias: &Bias) -> Self {
        let prec = bias.prec();
        let p = bias.p();
        let q = bias.q();
        let a = bias.ratio_qp(); // q/p
        let mut xi = vec![hp(prec, 0); l_max + 1];
        if l_max >= 1 {
            xi[1] = hp(prec, 1);
        }
        // (q/p)^J / J! for J = 0..l_max
        let mut wj = Vec::with_capacity(l_max + 1);
        let mut w = hp(prec, 1);
        wj.push(w.clone());
        for j in 1..=l_max {
            w = w * &a / (j as u64);
            wj.push(w.clone());
        }
        let mut p_pow = hp(prec, p); // p^l
        for l in 2..=l_max {
            p_pow *= p;
            let mut s = hp(prec, 0);
            for j in 2..=l {
                s += hp(prec, &xi[l + 1 - j]) * &wj[j];
            }
            s = s * &p_pow / q;
            // self-term coefficient is p^(l-1)
            let denom = hp(prec, 1) - pow_i(p, (l - 1) as i64);
            xi[l] = s / denom;
        }
        XiSequence { bias: bias.clone(), xi }
    }

    pub fn bias(&self) -> &Bias {
        &self.bias
    }

    pub fn len(&self) -> usize {
        self.xi.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `xi_l`, `1 <= l <= l_max`.
    pub fn get(&self, l: usize) -> &HPReal {
        &self.xi[l]
    }

    /// Smallest constant with `xi_l <= c1 / (l-1)!` over the stored range.
    pub fn calibrate_c1(&self) -> HPReal {
        let prec = self.bias.prec();
        let mut c1 = hp(prec, 0);
        let mut fact = hp(prec, 1); // (l-1)!
        for l in 1..=self.len() {
            if l > 1 {
                fact *= (l - 1) as u64;
            }
            let v = hp(prec, &self.xi[l]) * &fact;
            if v > c1 {
                c1 = v;
            }
        }
        c1
    }
}

fn poly_mul_trunc(a: &[HPReal], b: &[HPReal], deg: usize, prec: u32) -> Vec<HPReal> {
    let mut out = vec![hp(prec, 0); deg + 1];
    for (i, ai) in a.iter().enumerate().take(deg + 1) {
        if ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate().take(deg + 1 - i) {
            out[i + j] += hp(prec, ai) * bj;
        }
    }
    out
}

/// Coefficients of the truncated product `X(z) = prod_j (e^{q p^j z}-1)/(q p^j z)`
/// up to degree `l_max`; entry `L` is `xi_{L+1}` exactly in the limit.
pub fn xi_gf_series(bias: &Bias, l_max: usize) -> Vec<HPReal> {
    let prec = bias.prec();
    let p = bias.p();
    let thresh = hp(prec, 2).pow(-(prec as i32) + 8);
    let mut coeffs = vec![hp(prec, 0); l_max + 1];
    coeffs[0] = hp(prec, 1);
    let mut w = hp(prec, bias.q()); // q p^j
    loop {
        // factor (e^{wz} - 1)/(wz): coefficient i is w^i / (i+1)!
        let mut fac = Vec::with_capacity(l_max + 1);
        let mut c = hp(prec, 1);
        fac.push(c.clone());
        for i in 1..=l_max {
            c = c * &w / ((i + 1) as u64);
            fac.push(c.clone());
        }
        coeffs = poly_mul_trunc(&coeffs, &fac, l_max, prec);
        w *= p;
        // remaining factors differ from identity by < w/2 per coefficient
        if hp(prec, &w) / 2u32 < thresh {
            break;
        }
    }
    coeffs
}

/// Scalar evaluation of the truncated product `X(z)` at real `z`, with the
/// tail certified below `2^(8-prec)` per remaining factor.
pub fn xi_gf(z: &HPReal, bias: &Bias) -> HPReal {
    let prec = bias.prec();
    if z.is_zero() {
        return hp(prec, 1); // every factor tends to 1
    }
    let p = bias.p();
    let thresh = hp(prec, 2).pow(-(prec as i32) + 8);
    let mut prod = hp(prec, 1);
    let mut w = hp(prec, bias.q()) * z; // q p^j z
    loop {
        let factor = hp(prec, &w).exp_m1() / &w;
        prod *= factor;
        w *= p;
        if hp(prec, &w).abs() / 2u32 < thresh {
            break;
        }
    }
    prod
}

/// Poisson transform `xi~(z) = z prod_{j>=0} (1 - e^{-q p^j z})/(q p^j z)`,
/// for `z > 0`, truncated with the same certified factor rule.
pub fn xi_poisson(z: &HPReal, bias: &Bias) -> Result<HPReal> {
    if !(*z > 0) {
        return Err(Error::Domain("xi_poisson: z must be positive".into()));
    }
    let prec = bias.prec();
    let p = bias.p();
    let thresh = hp(prec, 2).pow(-(prec as i32) + 8);
    let mut prod = hp(prec, z);
    let mut w = hp(prec, bias.q()) * z;
    loop {
        // (1 - e^{-w})/w = -expm1(-w)/w
        let factor = -hp(prec, -&w).exp_m1() / &w;
        prod *= factor;
        w *= p;
        if hp(prec, &w) / 2u32 < thresh {
            break;
        }
    }
    Ok(prod)
}

/// Depoissonized approximation `xi_l ~ xi~(l)/l!`.
pub fn xi_asymptotic(l: usize, bias: &Bias) -> Result<HPReal> {
    let prec = bias.prec();
    let v = xi_poisson(&hp(prec, l as u64), bias)?;
    Ok(v / hp(prec, Integer::from(Integer::factorial(l as u32))))
}

/// Diagonal approximation `mu[n][n-l] ~ n! C*(p) p^((n-l)(n-l+1)/2) q^(n-l) xi_l`.
pub fn knessl_mu(n: usize, l: usize, bias: &Bias, xi: &XiSequence, cstar: &HPReal) -> HPReal {
    let prec = bias.prec();
    let k = (n - l) as u64;
    let e = k * (k + 1) / 2;
    hp(prec, Integer::from(Integer::factorial(n as u32)))
        * cstar
        * bias.p().clone().pow(e as u32)
        * pow_i(bias.q(), k as i64)
        * xi.get(l)
}

/// Upper bound `mu[n][k] <= c n!/(n-k-1)! p^((k^2+k)/2) q^k` for `1 <= k < n`.
pub fn mu_upper(n: usize, k: usize, bias: &Bias, c: &HPReal) -> HPReal {
    let prec = bias.prec();
    let e = (k as u64) * (k as u64 + 1) / 2;
    let falling = hp(prec, Integer::from(Integer::factorial(n as u32)) / Integer::from(Integer::factorial((n - k - 1) as u32)));
    hp(prec, c) * falling * bias.p().clone().pow(e as u32) * pow_i(bias.q(), k as i64)
}

/// Small-level approximation `mu[m][j] ~ m q^j (1 - q^j)^(m-1)`.
pub fn mu_smallj(m: usize, j: usize, bias: &Bias) -> HPReal {
    let prec = bias.prec();
    let qj = pow_i(bias.q(), j as i64);
    let base = hp(prec, 1) - &qj;
    hp(prec, m as u64) * &qj * base.pow((m - 1) as u32)
}

/// The double series
/// `D(p) = sum_{L,M>=0} xi_{L+1} (-1)^M / M! p^((L+M)^2 + L - M)/2 q^(-L-M)`,
/// truncated at `L <= l_max`, `M <= m_max`. Identically zero in exact
/// arithmetic; the truncated sum lands at the cancellation floor of the
/// working precision.
pub fn d_of_p(bias: &Bias, l_max: usize, m_max: usize) -> Result<HPReal> {
    if bias.is_symmetric() {
        return Err(Error::Domain("d_of_p needs p > 1/2".into()));
    }
    let prec = bias.prec();
    let xi = XiSequence::limits(l_max + 1, bias);
    let p = bias.p();
    let q = bias.q();
    let mut terms = Vec::with_capacity((l_max + 1) * (m_max + 1));
    for l in 0..=l_max {
        // 1/M! running
        let mut inv_mfact = hp(prec, 1);
        for m in 0..=m_max {
            if m > 0 {
                inv_mfact /= m as u64;
            }
            let lm = (l + m) as i64;
            // (L+M)^2 + L - M is even, exponent is an exact integer
            let e = (lm * lm + l as i64 - m as i64) / 2;
            let mut t = hp(prec, xi.get(l + 1)) * &inv_mfact;
            t *= p.clone().pow(e as u32);
            t *= pow_i(q, -lm);
            if m % 2 == 1 {
                t = -t;
            }
            terms.push(t);
        }
    }
    Ok(crate::numerics::compensated_sum(prec, terms.iter()))
}

/// Telescoping witness for `D(p) = 0`.
///
/// With `q(z) = (1 - e^{-z})/z` and `Q(z) = prod_{j>=0} q(p^j z)`, the
/// coefficients satisfy `F_n = p^n Q_n - Q_{n-1}` and partial sums telescope:
/// `sum_{n<=N} F_n p^(n(n-1)/2) = Q_N p^(N(N+1)/2)` exactly, while the right
/// side vanishes superexponentially — which is the identity `D(p) = 0`.
pub struct DIdentityWitness {
    /// `Q_n` coefficients, `n = 0..=n_max`.
    pub q_coeffs: Vec<HPReal>,
    /// `F_n = p^n Q_n - Q_{n-1}`.
    pub f_coeffs: Vec<HPReal>,
    /// `sum_{n<=N} F_n p^(n(n-1)/2) - Q_N p^(N(N+1)/2)` per `N`; zero to
    /// working precision.
    pub residuals: Vec<HPReal>,
    /// The telescoped tail `Q_N p^(N(N+1)/2)` at `N = n_max`.
    pub tail: HPReal,
}

pub fn d_identity_witness(bias: &Bias, n_max: usize) -> Result<DIdentityWitness> {
    if n_max == 0 {
        return Err(Error::Domain("witness needs n_max >= 1".into()));
    }
    let prec = bias.prec();
    let p = bias.p();
    let thresh = hp(prec, 2).pow(-(prec as i32) + 8);

    // Q(z) = prod_{j>=0} q(p^j z); factor j coefficient i: (-1)^i p^(ji)/(i+1)!
    let mut q_coeffs = vec![hp(prec, 0); n_max + 1];
    q_coeffs[0] = hp(prec, 1);
    let mut w = hp(prec, 1); // p^j
    loop {
        let mut fac = Vec::with_capacity(n_max + 1);
        let mut c = hp(prec, 1);
        fac.push(c.clone());
        for i in 1..=n_max {
            c = c * &w / ((i + 1) as u64);
            c = -c;
            fac.push(c.clone());
        }
        q_coeffs = poly_mul_trunc(&q_coeffs, &fac, n_max, prec);
        w *= p;
        if hp(prec, &w) / 2u32 < thresh {
            break;
        }
    }

    let mut f_coeffs = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut f = hp(prec, &q_coeffs[n]) * pow_i(p, n as i64);
        if n > 0 {
            f -= &q_coeffs[n - 1];
        }
        f_coeffs.push(f);
    }

    let mut residuals = Vec::with_capacity(n_max + 1);
    let mut partial = hp(prec, 0);
    let mut tail = hp(prec, 0);
    for n in 0..=n_max {
        let tri = (n as u64) * (n as u64).wrapping_sub(1) / 2; // n(n-1)/2
        partial += hp(prec, &f_coeffs[n]) * p.clone().pow(tri as u32);
        let up = (n as u64) * (n as u64 + 1) / 2;
        tail = hp(prec, &q_coeffs[n]) * p.clone().pow(up as u32);
        residuals.push(hp(prec, &partial) - &tail);
    }
    Ok(DIdentityWitness { q_coeffs, f_coeffs, residuals, tail })
}
