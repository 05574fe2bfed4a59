//! Extended-precision scalar kernel and exact combinatorics.
//!
//! All real-valued computation in this crate runs on [`HPReal`], an
//! arbitrary-precision binary float (MPFR) with round-to-nearest-even and a
//! per-value precision. Values are immutable after construction and safe to
//! share between threads; precision is never ambient state.

use rug::ops::Pow;
use rug::{float::Round, Float, Integer};

use crate::{Error, Result};

/// Arbitrary-precision binary floating point scalar.
///
/// Backed by MPFR via `rug::Float`: deterministic for a fixed precision and
/// rounding mode (round-to-nearest-even), with an exponent range wide enough
/// for quantities like `p^(n^2/2)` at `n` in the thousands.
pub type HPReal = Float;

/// Default working precision in bits. Series terms in this crate span
/// roughly 1e-40 .. 1e72 with heavy cancellation, so doubles are useless
/// and 128 bits is marginal; 256 leaves headroom.
pub const DEFAULT_PRECISION: u32 = 256;

/// Minimum precision accepted anywhere.
pub const MIN_PRECISION: u32 = 64;

/// Working precision: `RENYI_PRECISION_BITS` if set, otherwise 256.
pub fn default_precision() -> u32 {
    match std::env::var("RENYI_PRECISION_BITS") {
        Ok(s) => s.parse().ok().filter(|&b| b >= MIN_PRECISION).unwrap_or(DEFAULT_PRECISION),
        Err(_) => DEFAULT_PRECISION,
    }
}

/// Shorthand constructor from anything `Float` can assign from.
pub fn hp<T>(prec: u32, value: T) -> HPReal
where
    Float: rug::Assign<T>,
{
    Float::with_val(prec, value)
}

/// Parse a decimal string at the given precision.
pub fn hp_from_str(prec: u32, s: &str) -> Result<HPReal> {
    let parsed = Float::parse(s).map_err(|e| Error::Domain(format!("bad decimal '{s}': {e}")))?;
    Ok(Float::with_val(prec, parsed))
}

/// Source bias pair `(p, q = 1 - p)` with `1/2 <= p < 1`.
///
/// `q` is derived from `p` at working precision, so `p + q == 1` exactly
/// whenever `p` is representable (true for every parsed decimal at the
/// working precision).
#[derive(Debug, Clone)]
pub struct Bias {
    p: HPReal,
    q: HPReal,
}

impl Bias {
    pub fn new(p: HPReal) -> Result<Self> {
        let prec = p.prec();
        let half = hp(prec, 0.5);
        if p < half || p >= 1 {
            return Err(Error::Domain(format!("bias p must satisfy 1/2 <= p < 1, got {p}")));
        }
        let q = hp(prec, 1) - &p;
        Ok(Bias { p, q })
    }

    /// Parse `p` from a decimal string at the given precision.
    pub fn from_str(p: &str, prec: u32) -> Result<Self> {
        Self::new(hp_from_str(prec, p)?)
    }

    pub fn from_f64(p: f64, prec: u32) -> Result<Self> {
        Self::new(hp(prec, p))
    }

    pub fn p(&self) -> &HPReal {
        &self.p
    }

    pub fn q(&self) -> &HPReal {
        &self.q
    }

    pub fn prec(&self) -> u32 {
        self.p.prec()
    }

    /// `q/p`, in (0, 1] for the admitted range.
    pub fn ratio_qp(&self) -> HPReal {
        hp(self.prec(), &self.q) / &self.p
    }

    /// True for the symmetric source `p = q = 1/2`.
    pub fn is_symmetric(&self) -> bool {
        self.p == hp(self.prec(), 0.5)
    }

    /// Same bias re-rounded to another precision.
    pub fn at_prec(&self, prec: u32) -> Result<Self> {
        Self::new(hp(prec, &self.p))
    }

    pub fn p_f64(&self) -> f64 {
        self.p.to_f64()
    }
}

/// Exact binomial coefficient C(n, k); zero when `k > n`.
pub fn binomial(n: u64, k: u64) -> Integer {
    if k > n {
        return Integer::new();
    }
    Integer::from(n).binomial(k as u32)
}

/// Exact factorial n!.
pub fn factorial(n: u64) -> Integer {
    Integer::from(Integer::factorial(n as u32))
}

/// `base^exponent` as exp(exponent ln base); requires `base > 0`.
pub fn hp_pow(base: &HPReal, exponent: &HPReal) -> Result<HPReal> {
    if !(*base > 0) {
        return Err(Error::Domain(format!("hp_pow: base must be positive, got {base}")));
    }
    Ok(hp(base.prec().max(exponent.prec()), base.pow(exponent)))
}

/// `base^k` for integer exponents of either sign (base > 0 for k < 0).
pub fn pow_i(base: &HPReal, k: i64) -> HPReal {
    hp(base.prec(), base.pow(k as i32))
}

/// Neumaier-compensated sum; used for long alternating series where plain
/// accumulation at working precision would leak the cancellation scale.
pub fn compensated_sum<'a, I: IntoIterator<Item = &'a HPReal>>(prec: u32, terms: I) -> HPReal {
    let mut sum = hp(prec, 0);
    let mut comp = hp(prec, 0);
    for t in terms {
        let t = hp(prec, t);
        let new_sum = hp(prec, &sum + &t);
        let delta = if sum.clone().abs() >= t.clone().abs() {
            hp(prec, &sum - &new_sum) + &t
        } else {
            hp(prec, &t - &new_sum) + &sum
        };
        comp += delta;
        sum = new_sum;
    }
    sum + comp
}

/// Round a positive float to `u64`, for index arithmetic.
pub fn to_u64_floor(x: &HPReal) -> u64 {
    x.to_integer_round(Round::Down).map(|(i, _)| i.to_u64().unwrap_or(0)).unwrap_or(0)
}

/// Floor as i64 (saturating).
pub fn floor_i64(x: &HPReal) -> i64 {
    x.clone()
        .floor()
        .to_integer()
        .map(|i| i.to_i64().unwrap_or(if x.is_sign_positive() { i64::MAX } else { i64::MIN }))
        .unwrap_or(0)
}

/// Ceiling as i64 (saturating).
pub fn ceil_i64(x: &HPReal) -> i64 {
    x.clone()
        .ceil()
        .to_integer()
        .map(|i| i.to_i64().unwrap_or(if x.is_sign_positive() { i64::MAX } else { i64::MIN }))
        .unwrap_or(0)
}
