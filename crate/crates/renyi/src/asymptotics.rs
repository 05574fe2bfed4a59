//! Closed-form predictors and epsilon-windows for the height, fillup level,
//! and typical depth, plus entropy utilities.
//!
//! All logarithms are natural internally; base conversions happen at the
//! formula boundary. The second-order terms change form at p = 1/2 (a phase
//! transition), so each branch is asserted against its own formula and no
//! continuity across p = 1/2 is claimed.

use crate::numerics::Bias;
use crate::{Error, Result};
use serde::Serialize;

/// A point estimate with its lower/upper window `[k_L, k_U]` at a given
/// epsilon.
#[derive(Debug, Clone, Serialize)]
pub struct Prediction {
    pub point: f64,
    pub k_l: f64,
    pub k_u: f64,
    pub epsilon: f64,
}

/// Natural-log entropy `h(p) = -p ln p - q ln q`.
pub fn entropy(bias: &Bias) -> f64 {
    let p = bias.p_f64();
    let q = 1.0 - p;
    if p == 1.0 || p == 0.0 {
        return 0.0;
    }
    -(p * p.ln() + q * q.ln())
}

/// Height prediction. Asymmetric branch
/// `log_{1/p} n + (1/2) log_{p/q} ln n` with windows scaling the second term
/// by `(1 -/+ eps)`; symmetric branch `log_2 n + sqrt(2 log_2 n)`.
pub fn predict_height(n: u64, bias: &Bias, epsilon: f64) -> Result<Prediction> {
    if n < 3 {
        return Err(Error::Domain("predict_height: n >= 3 required".into()));
    }
    check_eps(epsilon)?;
    let nf = n as f64;
    let p = bias.p_f64();
    if bias.is_symmetric() {
        let lg = nf.log2();
        let psi = (2.0 * lg).sqrt();
        return Ok(Prediction {
            point: lg + psi,
            k_l: lg + (1.0 - epsilon) * psi,
            k_u: lg + (1.0 + epsilon) * psi,
            epsilon,
        });
    }
    let q = 1.0 - p;
    let lead = nf.ln() / (1.0 / p).ln();
    let psi = 0.5 * nf.ln().ln() / (p / q).ln();
    Ok(Prediction {
        point: lead + psi,
        k_l: lead + (1.0 - epsilon) * psi,
        k_u: lead + (1.0 + epsilon) * psi,
        epsilon,
    })
}

/// Fillup prediction. Asymmetric branch
/// `log_{1/q} n - log_{1/q} ln ln n`; symmetric branch `log_2 n - log_2 ln n`.
/// The second term is negative, so the lower window scales it by `(1 + eps)`
/// and the upper by `(1 - eps)`.
pub fn predict_fillup(n: u64, bias: &Bias, epsilon: f64) -> Result<Prediction> {
    if n < 16 {
        return Err(Error::Domain("predict_fillup: n >= 16 required (ln ln n > 0)".into()));
    }
    check_eps(epsilon)?;
    let nf = n as f64;
    if bias.is_symmetric() {
        let lg = nf.log2();
        let phi = -nf.ln().log2();
        return Ok(Prediction {
            point: lg + phi,
            k_l: lg + (1.0 + epsilon) * phi,
            k_u: lg + (1.0 - epsilon) * phi,
            epsilon,
        });
    }
    let q = 1.0 - bias.p_f64();
    let lead = nf.ln() / (1.0 / q).ln();
    let phi = -nf.ln().ln().ln() / (1.0 / q).ln();
    Ok(Prediction {
        point: lead + phi,
        k_l: lead + (1.0 + epsilon) * phi,
        k_u: lead + (1.0 - epsilon) * phi,
        epsilon,
    })
}

/// The three normalised-depth constants
/// `(liminf, typical, limsup) = (1/ln(1/q), 1/h(p), 1/ln(1/p))`, strictly
/// ordered for `p > 1/2`; degenerate (all `1/ln 2`) at `p = 1/2`.
#[derive(Debug, Clone, Serialize)]
pub struct DepthLimits {
    pub liminf: f64,
    pub typical: f64,
    pub limsup: f64,
    pub degenerate: bool,
}

pub fn depth_limits(bias: &Bias) -> DepthLimits {
    let p = bias.p_f64();
    let q = 1.0 - p;
    let degenerate = bias.is_symmetric();
    DepthLimits {
        liminf: 1.0 / (1.0 / q).ln(),
        typical: 1.0 / entropy(bias),
        limsup: 1.0 / (1.0 / p).ln(),
        degenerate,
    }
}

fn check_eps(epsilon: f64) -> Result<()> {
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    Ok(())
}
