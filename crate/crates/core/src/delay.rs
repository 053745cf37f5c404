//! Delay bounds and closed-form delay approximations.

use std::fmt;
use std::io::Write;

use crate::boundary::{phi_iter, BoundarySpec};
use crate::calibration::CalibratedThreshold;
use crate::error::{Error, Result};

/// Residual required of [`solve_delay`].
pub const DELAY_RESIDUAL_TOL: f64 = 1e-8;
const FIXED_POINT_MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayMethod {
    FixedPoint,
    Bisection,
    Asymptotic,
    LinearUniform,
    BayesApprox,
}

impl fmt::Display for DelayMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DelayMethod::FixedPoint => "fixed_point",
            DelayMethod::Bisection => "bisection",
            DelayMethod::Asymptotic => "asymptotic",
            DelayMethod::LinearUniform => "linear_uniform",
            DelayMethod::BayesApprox => "bayes_approx",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBound {
    pub theta: u64,
    pub value: f64,
    pub method: DelayMethod,
    /// `|mu1 d - b(theta + d) - t|` for solver results, zero otherwise.
    pub residual: f64,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_theta(theta: u64) -> Result<()> {
    if theta == 0 {
        Err(Error::Config("theta must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn residual(spec: &BoundarySpec<f64>, t: f64, theta: u64, mu1: f64, d: f64) -> f64 {
    mu1 * d - spec.value_at(theta as f64 + d) - t
}

/// Solves `mu1 d = b(theta + d) + t` for the calibrated offset `t`.
pub fn solve_delay(spec: &BoundarySpec<f64>, t: &CalibratedThreshold, theta: u64, mu1: f64) -> Result<DelayBound> {
    solve_delay_offset(spec, t.value, theta, mu1)
}

/// [`solve_delay`] for a raw offset: fixed-point iteration from `t / mu1`,
/// with bisection as the fallback.
pub fn solve_delay_offset(spec: &BoundarySpec<f64>, t: f64, theta: u64, mu1: f64) -> Result<DelayBound> {
    check_theta(theta)?;
    check_positive("mu1", mu1)?;
    if !t.is_finite() {
        return Err(Error::Config(format!("threshold offset must be finite, got {t}")));
    }
    let mut d = t.max(0.0) / mu1;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let next = (spec.value_at(theta as f64 + d) + t) / mu1;
        if !(next.is_finite() && next > 0.0) {
            break;
        }
        let step = (next - d).abs();
        d = next;
        let r = residual(spec, t, theta, mu1, d).abs();
        if r < DELAY_RESIDUAL_TOL * 1e-2 || step == 0.0 {
            if r < DELAY_RESIDUAL_TOL {
                return Ok(DelayBound { theta, value: d, method: DelayMethod::FixedPoint, residual: r });
            }
            break;
        }
    }
    solve_delay_bisection(spec, t, theta, mu1)
}

/// Bisection on `g(d) = mu1 d - b(theta + d) - t` over
/// `[t / mu1, 2 (t + b(theta) + 50) / mu1]`.
pub fn solve_delay_bisection(spec: &BoundarySpec<f64>, t: f64, theta: u64, mu1: f64) -> Result<DelayBound> {
    check_theta(theta)?;
    check_positive("mu1", mu1)?;
    let mut lo = t.max(0.0) / mu1;
    let mut hi = 2.0 * (t + spec.value(theta) + 50.0) / mu1;
    let g_lo = residual(spec, t, theta, mu1, lo);
    let g_hi = residual(spec, t, theta, mu1, hi);
    if !(g_lo <= 0.0 && g_hi >= 0.0) {
        return Err(Error::Solver(format!(
            "no sign change on [{lo}, {hi}]: g = ({g_lo}, {g_hi}) for theta={theta}, mu1={mu1}, t={t}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(spec, t, theta, mu1, mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let (rl, rh) = (residual(spec, t, theta, mu1, lo), residual(spec, t, theta, mu1, hi));
    let (d, r) = if rl.abs() <= rh.abs() { (lo, rl.abs()) } else { (hi, rh.abs()) };
    if r >= DELAY_RESIDUAL_TOL {
        return Err(Error::Solver(format!("bisection stalled at residual {r} for theta={theta}")));
    }
    Ok(DelayBound { theta, value: d, method: DelayMethod::Bisection, residual: r })
}

/// `(1/mu1) [log(theta/alpha) + sum_j log Phi_j(theta) + eps log Phi_m(theta) + log(1/eps)]`,
/// the leading terms of the fixed-point delay as `theta` grows.
pub fn delay_asymptotic(spec: &BoundarySpec<f64>, alpha: f64, theta: u64, mu1: f64) -> Result<f64> {
    check_unit("alpha", alpha)?;
    check_theta(theta)?;
    check_positive("mu1", mu1)?;
    let x = theta as f64;
    let iterated = iterated_log_terms(spec, x)?;
    Ok(((x / alpha).ln() + iterated) / mu1)
}

/// `sum_{j=1}^m log Phi_j(x) + eps log Phi_m(x) + log(1/eps)`.
fn iterated_log_terms(spec: &BoundarySpec<f64>, x: f64) -> Result<f64> {
    let mut sum = 0.0;
    for j in 1..=spec.m() {
        sum += phi_iter(j, x)?.ln();
    }
    Ok(sum + spec.epsilon() * phi_iter(spec.m(), x)?.ln() - spec.epsilon().ln())
}

/// Delay of the uniform-prior rule: `(log(1/alpha) + theta mu0) / mu1`.
pub fn uniform_delay(alpha: f64, theta: u64, mu0: f64, mu1: f64) -> Result<f64> {
    check_unit("alpha", alpha)?;
    check_theta(theta)?;
    check_positive("mu0", mu0)?;
    check_positive("mu1", mu1)?;
    Ok((-alpha.ln() + theta as f64 * mu0) / mu1)
}

/// Leading term `log(1/(gamma alpha)) / mu1` of the Bayes-geometric rule's
/// delay; the bounded remainder is not included.
pub fn bayes_delay_approx(alpha: f64, gamma: f64, mu1: f64) -> Result<f64> {
    check_unit("alpha", alpha)?;
    check_unit("gamma", gamma)?;
    check_positive("mu1", mu1)?;
    Ok(-(gamma * alpha).ln() / mu1)
}

/// Leading term `log(1/alpha) / mu1` of the CUSUM delay.
pub fn cusum_delay_approx(alpha: f64, mu1: f64) -> Result<f64> {
    check_unit("alpha", alpha)?;
    check_positive("mu1", mu1)?;
    Ok(-alpha.ln() / mu1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessGap {
    /// Additive excess of the robust rule's prior-averaged delay.
    pub gap: f64,
    /// `gap / bayes_delay_approx`.
    pub ratio: f64,
}

/// `(1/mu1) [sum_j log Phi_j(1/gamma) + eps log Phi_m(1/gamma) + log(1/eps)]`.
pub fn robustness_gap(spec: &BoundarySpec<f64>, alpha: f64, gamma: f64, mu1: f64) -> Result<RobustnessGap> {
    let bayes = bayes_delay_approx(alpha, gamma, mu1)?;
    let gap = iterated_log_terms(spec, 1.0 / gamma)? / mu1;
    Ok(RobustnessGap { gap, ratio: gap / bayes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayRow {
    pub theta: u64,
    pub d_fixed_point: f64,
    pub d_asymptotic: f64,
    pub measured_mean: Option<f64>,
    pub measured_se: Option<f64>,
}

/// Writes `theta,d_fixed_point,d_asymptotic,measured_mean,measured_se`;
/// missing measurements are left empty.
pub fn write_delay_table<W: Write>(out: W, rows: &[DelayRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "d_fixed_point", "d_asymptotic", "measured_mean", "measured_se"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.theta.to_string(),
            r.d_fixed_point.to_string(),
            r.d_asymptotic.to_string(),
            opt(r.measured_mean),
            opt(r.measured_se),
        ])?;
    }
    w.flush()?;
    Ok(())
}
