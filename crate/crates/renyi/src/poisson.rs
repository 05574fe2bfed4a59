//! Poisson transform of the profile moments, the `A_k(s)` transform series,
//! the kappa-sum (residue) inversion, and the depoissonization corrections.
//!
//! Two independent routes to the same quantity anchor this module:
//! the direct Poisson sum `G~_k(z) = sum_m mu[m][k] z^m/m! e^{-z}` and the
//! residue representation `G~_k(n) = sum_{j<=k} sum_{m>=j} kappa_{m,j}
//! (mu[m][j] - mu[m][j-1])` obtained by collecting Gamma poles of the
//! inverse Mellin integral. Their agreement at admissible `rho` is the
//! central oracle test.
//!
//! Gamma ratios appear only as `Gamma(m+s)/(Gamma(s+1) Gamma(m+1))` with
//! integer `m >= 1` and reduce to rising-factorial products; no general
//! Gamma evaluation happens anywhere in this module.

use crate::numerics::{ceil_i64, hp, pow_i, Bias, HPReal};
use rug::ops::Pow;
use crate::profile::ProfileTable;
use crate::{Error, Result};

/// Shared context for transform evaluations: the bias, the exact moment
/// table, and the Poisson series cutoff.
pub struct TransformContext<'a> {
    pub bias: &'a Bias,
    pub table: &'a ProfileTable,
}

impl<'a> TransformContext<'a> {
    pub fn new(table: &'a ProfileTable) -> Self {
        TransformContext { bias: table.bias(), table }
    }

    pub fn prec(&self) -> u32 {
        self.bias.prec()
    }

    /// Default series cutoff for Poisson sums at argument `z`:
    /// `z + 64 sqrt(z) + 64`, far beyond the width of the Poisson window.
    pub fn m_cutoff(&self, z: f64) -> usize {
        (z + 64.0 * z.sqrt() + 64.0).ceil() as usize
    }

    fn require_rows(&self, need: usize) -> Result<()> {
        if self.table.n_max() < need {
            return Err(Error::Truncation(format!(
                "profile table covers m <= {}, need {need}",
                self.table.n_max()
            )));
        }
        Ok(())
    }
}

/// `T(s) = p^{-s} + q^{-s}`.
pub fn t_s(s: &HPReal, bias: &Bias) -> HPReal {
    let prec = bias.prec();
    let ms = -hp(prec, s);
    let pt = hp(prec, bias.p()).pow(&ms);
    let qt = hp(prec, bias.q()).pow(&ms);
    pt + qt
}

/// `T(-m)` for integer `m >= 0`, i.e. `p^m + q^m`.
fn t_neg_int(m: i64, bias: &Bias) -> HPReal {
    pow_i(bias.p(), m) + pow_i(bias.q(), m)
}

/// Derivative order for the Poisson kernel `z^m e^{-z}/m!`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Deriv {
    None,
    First,
    Second,
}

/// Truncated Poisson transform of level `k` of the mean profile, or its
/// first/second derivative via term-wise differentiation of the kernel.
pub fn poisson_g(k: usize, z: &HPReal, ctx: &TransformContext, deriv: Deriv) -> Result<HPReal> {
    poisson_layer(k, z, ctx, deriv, false)
}

/// Same Poisson sum over the second-moment layer `E[B^2]`.
pub fn poisson_second(k: usize, z: &HPReal, ctx: &TransformContext, deriv: Deriv) -> Result<HPReal> {
    poisson_layer(k, z, ctx, deriv, true)
}

fn poisson_layer(
    k: usize,
    z: &HPReal,
    ctx: &TransformContext,
    deriv: Deriv,
    second: bool,
) -> Result<HPReal> {
    if !(*z > 0) {
        return Err(Error::Domain("poisson transform: z must be positive".into()));
    }
    let prec = ctx.prec();
    let zf = z.to_f64();
    let m_cap = ctx.m_cutoff(zf);
    ctx.require_rows(m_cap)?;
    let emz = (-hp(prec, z)).exp();
    // kernel_m = z^m e^{-z} / m!, built incrementally
    let mut kernel = emz; // m = 0
    let mut acc = hp(prec, 0);
    for m in 1..=m_cap {
        kernel = kernel * z / (m as u64);
        let v = if second { ctx.table.second_moment(m, k) } else { ctx.table.mu(m, k) };
        if v.is_zero() {
            continue;
        }
        let factor = match deriv {
            Deriv::None => hp(prec, 1),
            // d/dz [z^m e^-z/m!] = (m/z - 1) z^m e^-z/m!
            Deriv::First => hp(prec, m as u64) / z - 1u32,
            // d2/dz2 -> (m(m-1)/z^2 - 2m/z + 1)
            Deriv::Second => {
                let mm = hp(prec, (m as u64) * (m as u64 - 1));
                mm / hp(prec, z).square() - hp(prec, 2 * m as u64) / z + 1u32
            }
        };
        acc += v * kernel.clone() * factor;
    }
    Ok(acc)
}

/// Depoissonized mean: `mu[n][k] ~ G~_k(n) - (n/2) G~_k''(n)`.
pub fn depoisson_mu(n: usize, k: usize, ctx: &TransformContext) -> Result<HPReal> {
    let prec = ctx.prec();
    let z = hp(prec, n as u64);
    let g = poisson_g(k, &z, ctx, Deriv::None)?;
    let g2 = poisson_g(k, &z, ctx, Deriv::Second)?;
    Ok(g - hp(prec, &z) / 2u32 * g2)
}

/// Poisson variance `V~_k(z) = sum_m E[B^2] z^m/m! e^{-z} - G~_k(z)^2`.
pub fn poisson_variance(k: usize, z: &HPReal, ctx: &TransformContext) -> Result<HPReal> {
    let s = poisson_second(k, z, ctx, Deriv::None)?;
    let g = poisson_g(k, z, ctx, Deriv::None)?;
    Ok(s - g.square())
}

/// Depoissonized variance:
/// `Var ~ V~(n) - (n/2) V~''(n) - n G~'(n)^2 + (n^2/4) G~''(n)^2`.
pub fn depoisson_var(n: usize, k: usize, ctx: &TransformContext) -> Result<HPReal> {
    let prec = ctx.prec();
    let z = hp(prec, n as u64);
    let g = poisson_g(k, &z, ctx, Deriv::None)?;
    let g1 = poisson_g(k, &z, ctx, Deriv::First)?;
    let g2 = poisson_g(k, &z, ctx, Deriv::Second)?;
    let s = poisson_second(k, &z, ctx, Deriv::None)?;
    let s2 = poisson_second(k, &z, ctx, Deriv::Second)?;
    // V~'' = S'' - 2 (G~')^2 - 2 G~ G~''  (S = Poisson sum of E[B^2])
    let v = hp(prec, &s) - hp(prec, &g).square();
    let v2 = hp(prec, &s2) - hp(prec, 2) * hp(prec, &g1).square() - hp(prec, 2) * &g * &g2;
    let half_n = hp(prec, &z) / 2u32;
    let quarter_n2 = hp(prec, &z).square() / 4u32;
    Ok(v - half_n * v2 - hp(prec, &z) * hp(prec, &g1).square() + quarter_n2 * hp(prec, &g2).square())
}

/// `Gamma(m+s)/(Gamma(s+1) Gamma(m+1))` for integer `m >= 1` as the rising
/// product `prod_{i=1}^{m-1} (s+i) / m!`; at nonpositive integer `s` in
/// `[-k,-1]` the product vanishes once `m-1 >= -s`.
fn gamma_ratio(s: &HPReal, m: usize, prec: u32) -> HPReal {
    let mut acc = hp(prec, 1);
    for i in 1..m {
        acc *= hp(prec, s) + hp(prec, i as u64);
    }
    let mfact = hp(prec, rug::Integer::from(rug::Integer::factorial(m as u32)));
    acc / mfact
}

/// The entire series `A_k(s)`:
/// `sum_{j=0}^k T(s)^{-j} sum_{m>=j} T(-m) (mu[m][j]-mu[m][j-1])
///  Gamma(m+s)/(Gamma(s+1) Gamma(m+1))`.
///
/// Admissible `s`: real `s > -1`, plus the integers in `[-k, -1]` where the
/// rising-factorial form stays finite (these are the zeros of `A_k`).
pub fn a_k(s: &HPReal, k: usize, m_cap: usize, ctx: &TransformContext) -> Result<HPReal> {
    let prec = ctx.prec();
    let minus_one = hp(prec, -1);
    if !(*s > minus_one) {
        // negative integers in [-k, -1] are fine; anything else is not
        let is_int = s.is_integer();
        let si = s.to_f64();
        if !(is_int && si >= -(k as f64) && si <= -1.0) {
            return Err(Error::Domain(format!(
                "a_k: s must be > -1 or an integer in [-{k}, -1], got {s}"
            )));
        }
    }
    ctx.require_rows(m_cap)?;
    let ts = t_s(s, ctx.bias);
    let mut total = hp(prec, 0);
    for j in 0..=k {
        let tpow = hp(prec, &ts).pow(-(j as i32));
        let mut inner = hp(prec, 0);
        for m in j.max(1)..=m_cap {
            let prev = if j == 0 { hp(prec, 0) } else { ctx.table.mu(m, j - 1) };
            let diff = ctx.table.mu(m, j) - prev;
            if diff.is_zero() {
                continue;
            }
            inner += t_neg_int(m as i64, ctx.bias) * diff * gamma_ratio(s, m, prec);
        }
        total += tpow * inner;
    }
    Ok(total)
}

/// The residue-sum coefficient
/// `kappa_{m,j} = T(-m) n^m/m! sum_{l >= l0} (-n)^l/l! T(-m-l)^{k-j}` with
/// `l0 = max(0, -ceil(m+rho)+1)`.
///
/// For `rho > 0` the start index is 0 and the sum collapses to the closed
/// binomial-exponential form
/// `T(-m)/m! sum_r C(k-j, r) (n p^r q^{k-j-r})^m exp(-n p^r q^{k-j-r})`,
/// which is used directly. For `rho < 0` (non-integer) the alternating
/// series is summed with compensation and a term-ratio tail bound.
pub fn kappa(
    m: usize,
    j: usize,
    n: &HPReal,
    k: usize,
    rho: &HPReal,
    ctx: &TransformContext,
) -> Result<HPReal> {
    let prec = ctx.prec();
    let bias = ctx.bias;
    if *rho > 0 {
        // closed form over the binomial expansion of T(-m-l)^(k-j)
        let kj = k - j;
        let tm = t_neg_int(m as i64, bias);
        let mfact = hp(prec, rug::Integer::from(rug::Integer::factorial(m as u32)));
        let mut acc = hp(prec, 0);
        for r in 0..=kj {
            let lam = hp(prec, n) * pow_i(bias.p(), r as i64) * pow_i(bias.q(), (kj - r) as i64);
            let w = hp(prec, crate::numerics::binomial(kj as u64, r as u64));
            acc += w * hp(prec, &lam).pow(m as u32) * (-lam).exp();
        }
        return Ok(tm * acc / mfact);
    }
    if rho.is_integer() {
        return Err(Error::Domain("kappa: rho < 0 must be non-integer".into()));
    }
    // l0 = max(0, -ceil(m + rho) + 1)
    let mrho = hp(prec, m as u64) + rho;
    let l0 = (-ceil_i64(&mrho) + 1).max(0) as usize;
    let kj = (k - j) as i64;
    let tm = t_neg_int(m as i64, bias);
    let mfact = hp(prec, rug::Integer::from(rug::Integer::factorial(m as u32)));
    // terms t_l = (-n)^l / l! T(-m-l)^(k-j), from l0
    let mut terms: Vec<HPReal> = Vec::new();
    let mut coeff = pow_i(&hp(prec, n), l0 as i64) / hp(prec, rug::Integer::from(rug::Integer::factorial(l0 as u32)));
    if l0 % 2 == 1 {
        coeff = -coeff;
    }
    let nf = n.to_f64();
    let hard_cap = (nf * 3.0 + 200.0 + 8.0 * prec as f64) as usize;
    let tol = hp(prec, 2).pow(-(prec as i32) + 4);
    let mut l = l0;
    let mut decayed = false;
    loop {
        let t = hp(prec, &coeff) * t_neg_int(m as i64 + l as i64, bias).pow(kj as i32);
        terms.push(t);
        // once past l ~ n the factorial wins and terms decay monotonically
        let ratio_small = (l as f64) > 2.0 * nf + 8.0;
        if ratio_small {
            decayed = true;
            let last = terms.last().unwrap();
            // ratio |t_{l+1}/t_l| <= n/(l+1) * 1 < 1/2 here, so tail < |t_l|
            if last.clone().abs() < tol {
                break;
            }
        }
        l += 1;
        if l > hard_cap {
            if !decayed {
                return Err(Error::Precision(format!(
                    "kappa: alternating series did not start decaying before l = {hard_cap}"
                )));
            }
            break;
        }
        coeff = -coeff * n / (l as u64);
    }
    let s = crate::numerics::compensated_sum(prec, terms.iter());
    Ok(tm * pow_i(&hp(prec, n), m as i64) / mfact * s)
}

/// Residue-sum (inverse Mellin) evaluation of the Poisson transform:
/// `G~_k(n) = sum_{j=0}^k sum_{m>=j} kappa_{m,j} (mu[m][j] - mu[m][j-1])`.
pub fn residue_g(k: usize, n: &HPReal, rho: &HPReal, ctx: &TransformContext) -> Result<HPReal> {
    let prec = ctx.prec();
    let m_cap = ctx.m_cutoff(n.to_f64());
    ctx.require_rows(m_cap)?;
    let mut total = hp(prec, 0);
    for j in 0..=k {
        for m in j.max(1)..=m_cap {
            let prev = if j == 0 { hp(prec, 0) } else { ctx.table.mu(m, j - 1) };
            let diff = ctx.table.mu(m, j) - prev;
            if diff.is_zero() {
                continue;
            }
            total += kappa(m, j, n, k, rho, ctx)? * diff;
        }
    }
    Ok(total)
}
