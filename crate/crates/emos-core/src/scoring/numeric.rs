//! Quadrature CRPS and threshold-weighted CRPS.
//!
//! These integrate the defining integral of the (tw)CRPS directly against an
//! evaluable CDF. Slow but formula-free, which is what makes `crps_numeric`
//! trustworthy as an oracle for the closed forms.

use super::{crps_ensemble, ScoreError};
use crate::dist::Distribution;
use crate::quad::integrate_split;

/// Absolute quadrature tolerance for the CRPS oracle.
const CRPS_TOL: f64 = 1e-9;
/// Absolute quadrature tolerance for threshold-weighted CRPS.
const TWCRPS_TOL: f64 = 1e-8;
/// Upper-tail mass ignored when picking the integration limit.
const TAIL: f64 = 1e-10;

/// CRPS by adaptive quadrature of integral of (F(y) - 1{y >= x})^2 over
/// [lo, hi], extended to cover x if it falls outside. The domain should
/// contain all but a negligible fraction of the forecast mass.
pub fn crps_numeric(
    cdf: impl Fn(f64) -> f64,
    x: f64,
    lo: f64,
    hi: f64,
) -> Result<f64, ScoreError> {
    integrand_quadrature(&cdf, x, lo.min(x), hi.max(x), None, CRPS_TOL)
}

/// CRPS of a distribution by quadrature over its effective support.
pub fn crps_quadrature(dist: &Distribution, x: f64) -> Result<f64, ScoreError> {
    let (lo, hi) = effective_support(dist)?;
    crps_numeric(|y| dist.cdf(y), x, lo, hi)
}

/// Threshold-weighted CRPS: the CRPS integral restricted to y >= r.
/// `r = -inf` is the no-threshold sentinel and recovers the plain CRPS.
pub fn twcrps(dist: &Distribution, x: f64, r: f64) -> Result<f64, ScoreError> {
    if r.is_nan() {
        return Err(ScoreError::BadThreshold { value: r });
    }
    if let Distribution::Empirical(e) = dist {
        // censoring identity: restricting the integral to y >= r equals the
        // plain CRPS of the ensemble and observation both censored at r
        if r == f64::NEG_INFINITY {
            return crps_ensemble(e.values(), x);
        }
        let censored: Vec<f64> = e.values().iter().map(|m| m.max(r)).collect();
        return crps_ensemble(&censored, x.max(r));
    }
    let (lo, hi) = effective_support(dist)?;
    let (lo, hi) = (lo.min(x), hi.max(x));
    if r > lo {
        if r >= hi {
            // integrand is ~0 above the support unless the observation
            // exceeds the threshold, in which case (F - 0)^2 ~ 1 up to x
            return Ok(if x > r { x - r } else { 0.0 });
        }
        integrand_quadrature(&|y| dist.cdf(y), x, r, hi, Some(r), TWCRPS_TOL)
    } else {
        integrand_quadrature(&|y| dist.cdf(y), x, lo, hi, None, TWCRPS_TOL)
    }
}

fn integrand_quadrature(
    cdf: &impl Fn(f64) -> f64,
    x: f64,
    lo: f64,
    hi: f64,
    extra_split: Option<f64>,
    tol: f64,
) -> Result<f64, ScoreError> {
    if lo >= hi {
        return Ok(0.0);
    }
    let f = |y: f64| {
        let c = cdf(y);
        let d = if y >= x { c - 1.0 } else { c };
        d * d
    };
    let mut points = vec![lo];
    // split at the indicator jump so each panel sees a smooth integrand
    if x > lo && x < hi {
        points.push(x);
    }
    if let Some(r) = extra_split {
        if r > lo && r < hi {
            points.push(r);
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.push(hi);
    Ok(integrate_split(f, &points, tol)?)
}

/// Interval carrying all but ~1e-10 of the forecast mass.
fn effective_support(dist: &Distribution) -> Result<(f64, f64), ScoreError> {
    let hi = dist.quantile(1.0 - TAIL)?;
    let lo = match dist {
        // support bounded below by zero
        Distribution::TruncNormal(_) | Distribution::LogNormal(_) | Distribution::Tgev(_) => 0.0,
        // support may extend to -inf; truncate where F^2 is negligible
        Distribution::Gev(_) => dist.quantile(1e-12)?,
        Distribution::Empirical(e) => e.min(),
    };
    Ok((lo, hi))
}
