//! Threshold calibration for the robust rule.
//!
//! The offset `t` is the upper `alpha` quantile of the envelope variable
//! `zeta = max_k (e_k - b(k))` with `e_k` i.i.d. standard exponential, whose
//! law dominates that of `max_k (M_k - b(k))` under the no-change regime.
//! Three routes are offered:
//!
//! * [`CalibrationMethod::AnalyticBound`] inverts the closed-form tail bound
//!   `1 - exp(-e^-x (1/eps + e^-x))`;
//! * [`CalibrationMethod::ProductCdf`] inverts the exact law
//!   `P(zeta < x) = prod_k (1 - e^-x w_k)` with `w_k = exp(-b(k))`;
//! * [`CalibrationMethod::MonteCarlo`] takes the empirical quantile of
//!   simulated envelopes.
//!
//! For small `eps` almost all of the crossing mass sits at astronomically
//! large `k` (the tail decays like `Phi_m(k)^-eps`), so neither the product
//! nor the simulated maximum can be truncated naively. The product keeps an
//! explicit head and expands `log(1 - u)` over the tail, using the closed-form
//! tail sum for the first power and certified bounds for the rest. The
//! sampler draws the head explicitly and the tail maximum from its Gumbel
//! limit `log T + G`, with the head length chosen so that the induced error in
//! the CDF is below the requested tolerance.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::{BoundarySpec, CrossingBoundary};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, trial_seed};

/// Upper bound on `sum_k exp(-2 b(k))` used by the analytic tail bound.
pub const SQUARED_MASS_CONSTANT: f64 = 0.2075;
/// Bisection bracket for thresholds.
pub const THRESHOLD_BRACKET: (f64, f64) = (0.12, 60.0);
pub const BISECTION_TOL: f64 = 1e-10;
/// Default certified truncation tolerance of the product CDF.
pub const DEFAULT_CDF_TOL: f64 = 1e-9;
/// Default CDF tolerance of the envelope sampler.
pub const DEFAULT_SAMPLE_TOL: f64 = 1e-4;

/// Left end of the region where the analytic tail bound is asserted.
pub fn tail_bound_min_x() -> f64 {
    -(1.0 - SQUARED_MASS_CONSTANT / 2.0).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    AnalyticBound,
    ProductCdf,
    MonteCarlo,
}

impl CalibrationMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CalibrationMethod::AnalyticBound => "analytic_bound",
            CalibrationMethod::ProductCdf => "product_cdf",
            CalibrationMethod::MonteCarlo => "monte_carlo",
        }
    }
}

impl fmt::Display for CalibrationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CalibrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" | "analytic_bound" => Ok(CalibrationMethod::AnalyticBound),
            "product" | "product_cdf" => Ok(CalibrationMethod::ProductCdf),
            "mc" | "monte_carlo" => Ok(CalibrationMethod::MonteCarlo),
            other => Err(Error::Usage(format!("unknown calibration method `{other}`"))),
        }
    }
}

/// Error estimates attached to a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    /// Certified bound on the log-CDF truncation error (product CDF).
    pub truncation_bound: Option<f64>,
    /// Batch-means standard error of the quantile (Monte Carlo).
    pub mc_std_error: Option<f64>,
    pub samples: Option<usize>,
    /// The root fell below the bracket and was clamped to its left end.
    pub clamped: bool,
}

/// The offset `t` of the robust rule for a given `alpha` and boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibratedThreshold {
    pub value: f64,
    pub alpha: f64,
    pub method: CalibrationMethod,
    pub m: usize,
    pub epsilon: f64,
    pub diagnostics: Diagnostics,
}

/// `1 - exp(-e^-x (1/eps + e^-x))`, an upper bound on `P(zeta >= x)`.
pub fn tail_bound(spec: &BoundarySpec<f64>, x: f64) -> Result<f64> {
    if !(x > tail_bound_min_x()) {
        return Err(Error::Domain(format!(
            "tail bound holds for x > {:.5}, got {x}",
            tail_bound_min_x()
        )));
    }
    let z = (-x).exp();
    Ok(-(-z * (1.0 / spec.epsilon() + z)).exp_m1())
}

/// `log P(zeta < x)` with a certified error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeCdf {
    /// Upper end of the enclosure of `log P(zeta < x)`.
    pub log_value: f64,
    /// The true log-CDF lies in `[log_value - log_truncation, log_value]`.
    pub log_truncation: f64,
    /// Number of explicit factors.
    pub terms: u64,
    /// Some factor is nonpositive: the CDF is exactly zero at this `x`.
    pub degenerate: bool,
}

impl EnvelopeCdf {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }

    /// Certified lower bound on the CDF.
    pub fn lower(&self) -> f64 {
        (self.log_value - self.log_truncation).exp()
    }

    /// `P(zeta >= x)` at the centre of the enclosure.
    pub fn survival(&self) -> f64 {
        -self.log_value.exp_m1()
    }

    /// Certified upper bound on `P(zeta >= x)`.
    pub fn survival_upper(&self) -> f64 {
        -(self.log_value - self.log_truncation).exp_m1()
    }
}

/// Largest tail factor `e^-x w_k` handled by the power-series expansion.
const SERIES_MAX_U: f64 = 1e-3;
const SERIES_ORDER: usize = 4;
const MAX_PRECOMPUTED_TERMS: u64 = 1 << 27;

/// Precomputed pieces of the exact envelope law for one boundary.
pub struct EnvelopeLaw<'a, B> {
    boundary: &'a B,
    /// `w_k` for `k <= head_len`.
    head: Vec<f64>,
    /// `sum w_k^p` over `head_len < k <= tail_end` for `p = 2..=SERIES_ORDER`.
    partial_powers: [f64; SERIES_ORDER - 1],
    /// Bounds on `sum_{k > tail_end} w_k^p`.
    power_remainders: [f64; SERIES_ORDER - 1],
    tail_end: u64,
}

impl<'a> EnvelopeLaw<'a, BoundarySpec<f64>> {
    /// Precomputes the law of the envelope for `spec` to log-CDF accuracy `tol`
    /// for `x >= 0` (evaluation at negative `x` stays certified but looser).
    pub fn new(spec: &'a BoundarySpec<f64>, tol: f64) -> Result<Self> {
        let power_tail = |k: u64, p: usize| power_tail_bound(spec, k, p);
        Self::build(spec, tol, power_tail)
    }
}

/// Bound on `sum_{j > k} w_j^p` for `p >= 2`.
///
/// `w_j <= h(j)` where `h = -d/dx Phi_m^-eps / eps` is decreasing and
/// `x h(x)` is decreasing, so `w_j <= k h(k) / j` for `j > k`.
fn power_tail_bound(spec: &BoundarySpec<f64>, k: u64, p: usize) -> f64 {
    let x = k as f64;
    let h = spec.derivative_envelope(x);
    let c = x * h;
    c.powi(p as i32) * x.powi(1 - p as i32) / (p as f64 - 1.0)
}

impl<'a, B: CrossingBoundary<f64>> EnvelopeLaw<'a, B> {
    /// Law for an arbitrary boundary, given a bound on its power tails.
    pub fn with_power_tails(
        boundary: &'a B,
        tol: f64,
        power_tail: impl Fn(u64, usize) -> f64,
    ) -> Result<Self> {
        Self::build(boundary, tol, power_tail)
    }

    fn build(boundary: &'a B, tol: f64, power_tail: impl Fn(u64, usize) -> f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
        }
        let mut head = Vec::new();
        let mut k = 1u64;
        loop {
            let w = boundary.crossing_mass(k);
            if w <= SERIES_MAX_U {
                break;
            }
            head.push(w);
            k += 1;
        }
        let head_len = head.len() as u64;
        // Grow the precomputed tail until the omitted power sums are below tol.
        let mut partial_powers = [0.0; SERIES_ORDER - 1];
        let mut tail_end = head_len;
        let mut target = (head_len.max(1) * 1024).min(MAX_PRECOMPUTED_TERMS);
        loop {
            for j in (tail_end + 1)..=target {
                let w = boundary.crossing_mass(j);
                let mut wp = w;
                for s in partial_powers.iter_mut() {
                    wp *= w;
                    *s += wp;
                }
            }
            tail_end = target;
            let rem2 = power_tail(tail_end, 2);
            if rem2 / 2.0 <= tol || tail_end >= MAX_PRECOMPUTED_TERMS {
                break;
            }
            target = (target * 2).min(MAX_PRECOMPUTED_TERMS);
        }
        let mut power_remainders = [0.0; SERIES_ORDER - 1];
        for (i, r) in power_remainders.iter_mut().enumerate() {
            *r = power_tail(tail_end, i + 2);
        }
        Ok(Self {
            boundary,
            head,
            partial_powers,
            power_remainders,
            tail_end,
        })
    }

    /// `log P(zeta < x)` with its certified enclosure.
    pub fn log_cdf(&self, x: f64) -> Result<EnvelopeCdf> {
        let z = (-x).exp();
        let first = self
            .head
            .first()
            .copied()
            .unwrap_or_else(|| self.boundary.crossing_mass(1));
        if z * first >= 1.0 {
            return Ok(EnvelopeCdf {
                log_value: f64::NEG_INFINITY,
                log_truncation: 0.0,
                terms: 1,
                degenerate: true,
            });
        }
        let mut log_value: f64 = self.head.iter().map(|&w| (-z * w).ln_1p()).sum();
        let mut k = self.head.len() as u64;
        let mut powers = self.partial_powers;
        // Extend the explicit head while tail factors are too large for the series.
        loop {
            let w = self.boundary.crossing_mass(k + 1);
            if z * w <= SERIES_MAX_U {
                break;
            }
            if k + 1 > self.tail_end {
                return Err(Error::Calibration(format!(
                    "envelope CDF at x={x} needs more than {} explicit factors",
                    self.tail_end
                )));
            }
            log_value += (-z * w).ln_1p();
            let mut wp = w;
            for s in powers.iter_mut() {
                wp *= w;
                *s -= wp;
            }
            k += 1;
        }
        let first_power = self.boundary.tail_mass(k + 1);
        let mut series = z * first_power;
        let mut zp = z;
        let mut truncation = 0.0;
        for (i, (&s, &r)) in powers.iter().zip(&self.power_remainders).enumerate() {
            zp *= z;
            let p = (i + 2) as f64;
            series += zp * s.max(0.0) / p;
            truncation += zp * r / p;
        }
        // sum_{p > SERIES_ORDER} u^p / p <= u^{SERIES_ORDER} / ((SERIES_ORDER+1)(1-u)) * u
        let u_max = z * self.boundary.crossing_mass(k + 1);
        truncation += u_max.powi(SERIES_ORDER as i32) / ((SERIES_ORDER as f64 + 1.0) * (1.0 - u_max))
            * z
            * first_power;
        log_value -= series;
        Ok(EnvelopeCdf {
            log_value,
            log_truncation: truncation,
            terms: k,
            degenerate: false,
        })
    }

    /// Smallest `x` with `P(zeta < x) >= p`, by bisection.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Config(format!("probability must lie in (0, 1), got {p}")));
        }
        let mut lo = -self.boundary.level(1);
        let mut hi = THRESHOLD_BRACKET.1;
        if self.log_cdf(hi)?.value() < p {
            return Err(Error::Calibration(format!("quantile {p} lies beyond x = {hi}")));
        }
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if self.log_cdf(mid)?.value() >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

impl BoundarySpec<f64> {
    /// `h(x) = Phi_m(x)^-eps / (x prod_j Phi_j(x))`, an upper bound on `w_k` for `k >= x`.
    pub fn derivative_envelope(&self, x: f64) -> f64 {
        let mut phi = x;
        let mut log_h = -x.ln();
        for _ in 0..self.m() {
            phi = 1.0 + phi.ln();
            log_h -= phi.ln();
        }
        (log_h - self.epsilon() * phi.ln()).exp()
    }
}

/// `P(zeta < x)` for `spec`, certified to log-accuracy `tol` for `x >= 0`.
pub fn envelope_cdf(spec: &BoundarySpec<f64>, x: f64, tol: f64) -> Result<EnvelopeCdf> {
    EnvelopeLaw::new(spec, tol)?.log_cdf(x)
}

/// One realisation of `zeta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeSample {
    pub value: f64,
}

/// Draws envelope realisations: explicit exponentials for `k <= head_len`
/// and a Gumbel draw for the maximum over the rest.
pub struct EnvelopeSampler {
    levels: Vec<f64>,
    log_tail: f64,
    cdf_error_bound: f64,
}

impl EnvelopeSampler {
    pub fn new<B: CrossingBoundary<f64>>(boundary: &B, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
        }
        let first = boundary.crossing_mass(1);
        let total = boundary.tail_mass(1);
        let mut levels = vec![boundary.level(1)];
        let mut k = 1u64;
        let error_bound = |k: u64| {
            // Replacing the tail law by exp(-e^-y T) moves the CDF of the
            // maximum by at most c T / (e H), c = q / (2 (1 - q)), q = w_{K+1} / w_1.
            let q = boundary.crossing_mass(k + 1) / first;
            let tail = boundary.tail_mass(k + 1);
            let head = total - tail;
            let c = q / (2.0 * (1.0 - q));
            c * tail / (std::f64::consts::E * head)
        };
        while error_bound(k) > tol {
            if k >= MAX_PRECOMPUTED_TERMS {
                return Err(Error::Calibration(format!(
                    "envelope sampler needs more than {k} explicit terms for tol={tol}"
                )));
            }
            k += 1;
            levels.push(boundary.level(k));
        }
        Ok(Self {
            cdf_error_bound: error_bound(k),
            log_tail: boundary.tail_mass(k + 1).ln(),
            levels,
        })
    }

    pub fn head_len(&self) -> usize {
        self.levels.len()
    }

    /// Bound on the sup-distance between the sampled law and the exact one.
    pub fn cdf_error_bound(&self) -> f64 {
        self.cdf_error_bound
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvelopeSample {
        let mut best = f64::NEG_INFINITY;
        for &b in &self.levels {
            let e: f64 = rng.sample(Exp1);
            best = best.max(e - b);
        }
        if self.log_tail > f64::NEG_INFINITY {
            let v: f64 = rng.random();
            // Gumbel(log T): log T - log(-log V)
            let tail_max = self.log_tail - (-(v.max(f64::MIN_POSITIVE)).ln()).ln();
            best = best.max(tail_max);
        }
        EnvelopeSample { value: best }
    }

    /// `n` samples; sample `i` uses its own stream so the result does not
    /// depend on how the work is split across threads.
    pub fn sample_many(&self, n: usize, seed: u64) -> Vec<f64> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(trial_seed(seed, i as u64), 0);
                self.sample(&mut rng).value
            })
            .collect()
    }
}

/// A single envelope realisation.
pub fn sample_envelope<B: CrossingBoundary<f64>>(boundary: &B, seed: u64, tol: f64) -> Result<EnvelopeSample> {
    let sampler = EnvelopeSampler::new(boundary, tol)?;
    let mut rng = stream_rng(seed, 0);
    Ok(sampler.sample(&mut rng))
}

/// Options for [`calibrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub samples: usize,
    pub seed: u64,
    pub cdf_tol: f64,
    pub sample_tol: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 0,
            cdf_tol: DEFAULT_CDF_TOL,
            sample_tol: DEFAULT_SAMPLE_TOL,
        }
    }
}

fn bisect_decreasing(f: impl Fn(f64) -> Result<f64>, target: f64) -> Result<(f64, bool)> {
    let (mut lo, mut hi) = THRESHOLD_BRACKET;
    if f(lo)? <= target {
        return Ok((lo, true));
    }
    if f(hi)? > target {
        return Err(Error::Calibration(format!(
            "tail probability at x = {hi} still exceeds alpha = {target}"
        )));
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, false))
}

/// Upper empirical quantile: smallest sample value `x` with at most
/// `floor(alpha n)` samples strictly above it.
pub fn empirical_upper_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let allowed = ((alpha * n as f64).floor() as usize).min(n - 1);
    sorted[n - 1 - allowed]
}

const MC_BATCHES: usize = 20;

/// `t` such that `P(zeta >= t) <= alpha` by the chosen route.
pub fn calibrate(
    spec: &BoundarySpec<f64>,
    alpha: f64,
    method: CalibrationMethod,
    options: &CalibrationOptions,
) -> Result<CalibratedThreshold> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut diagnostics = Diagnostics::default();
    let value = match method {
        CalibrationMethod::AnalyticBound => {
            let (t, clamped) = bisect_decreasing(|x| tail_bound(spec, x), alpha)?;
            diagnostics.clamped = clamped;
            t
        }
        CalibrationMethod::ProductCdf => {
            let law = EnvelopeLaw::new(spec, options.cdf_tol)?;
            let (t, clamped) = bisect_decreasing(|x| Ok(law.log_cdf(x)?.survival()), alpha)?;
            diagnostics.clamped = clamped;
            diagnostics.truncation_bound = Some(law.log_cdf(t)?.log_truncation);
            t
        }
        CalibrationMethod::MonteCarlo => {
            if options.samples < MC_BATCHES * 10 {
                return Err(Error::Config(format!(
                    "monte carlo calibration needs at least {} samples",
                    MC_BATCHES * 10
                )));
            }
            let sampler = EnvelopeSampler::new(spec, options.sample_tol)?;
            let samples = sampler.sample_many(options.samples, options.seed);
            let mut sorted = samples.clone();
            sorted.sort_by(f64::total_cmp);
            let t = empirical_upper_quantile(&sorted, alpha);
            let batch = options.samples / MC_BATCHES;
            let batch_q: Vec<f64> = samples
                .chunks_exact(batch)
                .take(MC_BATCHES)
                .map(|c| {
                    let mut c = c.to_vec();
                    c.sort_by(f64::total_cmp);
                    empirical_upper_quantile(&c, alpha)
                })
                .collect();
            let mean = batch_q.iter().sum::<f64>() / MC_BATCHES as f64;
            let var = batch_q.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (MC_BATCHES as f64 - 1.0);
            diagnostics.mc_std_error = Some((var / MC_BATCHES as f64).sqrt());
            diagnostics.samples = Some(options.samples);
            t
        }
    };
    Ok(CalibratedThreshold {
        value,
        alpha,
        method,
        m: spec.m(),
        epsilon: spec.epsilon(),
        diagnostics,
    })
}

/// One row of a quantile table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileRow {
    pub alpha: f64,
    pub t_analytic: f64,
    pub t_product: f64,
    pub t_mc: f64,
    pub mc_se: f64,
}

/// Quantiles by all three routes for each `alpha`; the Monte Carlo sample is shared.
pub fn quantile_table(
    spec: &BoundarySpec<f64>,
    alphas: &[f64],
    options: &CalibrationOptions,
) -> Result<Vec<QuantileRow>> {
    let sampler = EnvelopeSampler::new(spec, options.sample_tol)?;
    let samples = sampler.sample_many(options.samples, options.seed);
    quantile_table_with_samples(spec, alphas, &samples, options)
}

/// [`quantile_table`] from envelope samples already drawn, in draw order.
pub fn quantile_table_with_samples(
    spec: &BoundarySpec<f64>,
    alphas: &[f64],
    samples: &[f64],
    options: &CalibrationOptions,
) -> Result<Vec<QuantileRow>> {
    if samples.len() < MC_BATCHES {
        return Err(Error::Config(format!("need at least {MC_BATCHES} samples")));
    }
    let law = EnvelopeLaw::new(spec, options.cdf_tol)?;
    let batches: Vec<Vec<f64>> = samples
        .chunks_exact(samples.len() / MC_BATCHES)
        .take(MC_BATCHES)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    alphas
        .iter()
        .map(|&alpha| {
            let t_analytic = calibrate(spec, alpha, CalibrationMethod::AnalyticBound, options)?.value;
            let (t_product, _) = bisect_decreasing(|x| Ok(law.log_cdf(x)?.survival()), alpha)?;
            let t_mc = empirical_upper_quantile(&sorted, alpha);
            let qs: Vec<f64> = batches.iter().map(|b| empirical_upper_quantile(b, alpha)).collect();
            let nb = qs.len() as f64;
            let mean = qs.iter().sum::<f64>() / nb;
            let var = qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (nb - 1.0);
            Ok(QuantileRow {
                alpha,
                t_analytic,
                t_product,
                t_mc,
                mc_se: (var / nb).sqrt(),
            })
        })
        .collect()
}

/// Writes `alpha,t_analytic,t_product,t_mc,mc_se` rows.
pub fn write_quantile_table<W: Write>(out: W, rows: &[QuantileRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "t_analytic", "t_product", "t_mc", "mc_se"])?;
    for r in rows {
        w.write_record([
            r.alpha.to_string(),
            r.t_analytic.to_string(),
            r.t_product.to_string(),
            r.t_mc.to_string(),
            r.mc_se.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m: usize, eps: f64) -> BoundarySpec<f64> {
        BoundarySpec::new(m, eps).unwrap()
    }

    /// Boundary with `b(1)` finite and `b(k) = inf` afterwards.
    struct SingleStep(f64);

    impl CrossingBoundary<f64> for SingleStep {
        fn level(&self, k: u64) -> f64 {
            if k == 1 {
                self.0
            } else {
                f64::INFINITY
            }
        }
        fn crossing_mass(&self, k: u64) -> f64 {
            if k == 1 {
                (-self.0).exp()
            } else {
                0.0
            }
        }
        fn tail_mass(&self, from_k: u64) -> f64 {
            if from_k <= 1 {
                (-self.0).exp()
            } else {
                0.0
            }
        }
    }

    /// Brute-force product over the first `n` factors plus the first-order tail.
    fn brute_log_cdf(s: &BoundarySpec<f64>, x: f64, n: u64) -> f64 {
        let z = (-x).exp();
        (1..=n).map(|k| (-z * s.crossing_mass(k)).ln_1p()).sum::<f64>() - z * s.tail_sum(n + 1)
    }

    #[test]
    fn tail_bound_values() {
        let one = spec(1, 1.0);
        assert!((tail_bound(&one, 3.0).unwrap() - 0.050_923_450_736_349_03).abs() < 1e-15);
        let small = spec(1, 0.01);
        assert!((tail_bound(&small, 3.0).unwrap() - 0.993_134_082_425_948).abs() < 1e-13);
        assert!(tail_bound(&one, 200.0).unwrap() < 1e-80);
        assert!(matches!(tail_bound(&one, 0.1), Err(Error::Domain(_))));
        assert!((tail_bound_min_x() - 0.109_57).abs() < 1e-4);
    }

    #[test]
    fn tail_bound_strictly_decreasing() {
        for &eps in &[0.01, 0.2, 1.0] {
            let s = spec(1, eps);
            let mut prev = f64::INFINITY;
            for i in 0..1000 {
                let x = 0.11 + i as f64 * 0.03;
                let v = tail_bound(&s, x).unwrap();
                // saturates at 1.0 in double precision for small eps
                assert!(v < prev || v == 1.0, "eps={eps} x={x}");
                prev = v;
            }
        }
    }

    #[test]
    fn law_matches_brute_force_product() {
        for &(m, eps) in &[(1, 1.0), (2, 0.2), (1, 0.01)] {
            let s = spec(m, eps);
            let law = EnvelopeLaw::new(&s, 1e-9).unwrap();
            for &x in &[0.5, 2.0, 5.0] {
                let got = law.log_cdf(x).unwrap();
                let brute = brute_log_cdf(&s, x, 2_000_000);
                // the brute force drops only second-order tail terms, of order e^{-2x} K h(K)^2
                assert!(
                    (got.log_value - brute).abs() < 1e-7,
                    "m={m} eps={eps} x={x}: {got:?} vs {brute}"
                );
                assert!(got.log_truncation < 1e-8);
            }
        }
    }

    #[test]
    fn cdf_limits_and_monotonicity() {
        let s = spec(1, 1.0);
        let law = EnvelopeLaw::new(&s, 1e-10).unwrap();
        assert!(law.log_cdf(40.0).unwrap().value() > 1.0 - 1e-16);
        let mut prev = 0.0;
        for i in 0..200 {
            let x = -0.8 + i as f64 * 0.05;
            let v = law.log_cdf(x).unwrap().value();
            assert!(v >= prev, "x={x}");
            prev = v;
        }
        let below = law.log_cdf(-s.value(1) - 0.1).unwrap();
        assert!(below.degenerate);
        assert_eq!(below.value(), 0.0);
    }

    #[test]
    fn bound_dominates_exact_tail() {
        for &eps in &[0.01, 0.2, 1.0] {
            let s = spec(1, eps);
            let law = EnvelopeLaw::new(&s, 1e-9).unwrap();
            for i in 1..=50 {
                let x = 0.12 + i as f64 * 0.2;
                let exact = law.log_cdf(x).unwrap().survival_upper();
                assert!(exact <= tail_bound(&s, x).unwrap() + 1e-12, "eps={eps} x={x}");
            }
        }
    }

    #[test]
    fn analytic_threshold_inverts_bound() {
        let s = spec(1, 1.0);
        let alpha = tail_bound(&s, 3.0).unwrap();
        let t = calibrate(&s, alpha, CalibrationMethod::AnalyticBound, &Default::default()).unwrap();
        assert!((t.value - 3.0).abs() < 1e-9);
        // closed form: z^2 + z/eps = -log(1 - alpha), t = -log z
        for &(eps, expected) in &[
            (0.01, 7.575_370_564_320_23),
            (0.2, 4.581_678_607_482_626),
            (1.0, 3.017_939_055_200_301),
        ] {
            let t = calibrate(&spec(1, eps), 0.05, CalibrationMethod::AnalyticBound, &Default::default())
                .unwrap();
            assert!((t.value - expected).abs() < 1e-9, "eps={eps}: {}", t.value);
            assert!(!t.diagnostics.clamped);
        }
    }

    #[test]
    fn analytic_is_conservative() {
        for &(m, eps) in &[(1, 1.0), (1, 0.2), (2, 0.01), (3, 1.0)] {
            let s = spec(m, eps);
            for &alpha in &[0.001, 0.01, 0.05, 0.2] {
                let a = calibrate(&s, alpha, CalibrationMethod::AnalyticBound, &Default::default()).unwrap();
                let p = calibrate(&s, alpha, CalibrationMethod::ProductCdf, &Default::default()).unwrap();
                assert!(a.value >= p.value, "m={m} eps={eps} alpha={alpha}");
                let law = EnvelopeLaw::new(&s, 1e-9).unwrap();
                assert!((law.log_cdf(p.value).unwrap().survival() - alpha).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn alpha_near_one_clamps() {
        let t = calibrate(&spec(1, 1.0), 0.95, CalibrationMethod::AnalyticBound, &Default::default()).unwrap();
        assert!(t.diagnostics.clamped);
        assert_eq!(t.value, THRESHOLD_BRACKET.0);
        for bad in [0.0, 1.0, 1.5, f64::NAN] {
            assert!(matches!(
                calibrate(&spec(1, 1.0), bad, CalibrationMethod::AnalyticBound, &Default::default()),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn degenerate_boundary_sample_is_first_term() {
        let b = SingleStep(0.7);
        let sampler = EnvelopeSampler::new(&b, 1e-6).unwrap();
        assert_eq!(sampler.head_len(), 1);
        let mut rng = stream_rng(5, 0);
        let e: f64 = rng.sample(Exp1);
        let s = sample_envelope(&b, 5, 1e-6).unwrap();
        assert_eq!(s.value, e - 0.7);
    }

    #[test]
    fn samples_dominate_first_term() {
        let s = spec(1, 1.0);
        let sampler = EnvelopeSampler::new(&s, 1e-4).unwrap();
        for seed in 0..200 {
            let mut a = stream_rng(seed, 0);
            let e1: f64 = a.sample(Exp1);
            let mut b = stream_rng(seed, 0);
            assert!(sampler.sample(&mut b).value >= e1 - s.value(1));
        }
    }

    #[test]
    fn sampler_head_length_and_error_bound() {
        let s = spec(1, 1.0);
        let sampler = EnvelopeSampler::new(&s, 1e-4).unwrap();
        assert!(sampler.cdf_error_bound() <= 1e-4);
        assert!(sampler.head_len() < 1000);
        let small = EnvelopeSampler::new(&spec(1, 0.01), 1e-3).unwrap();
        assert!(small.cdf_error_bound() <= 1e-3);
    }

    #[test]
    fn empirical_quantile_convention() {
        let sorted: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        // five samples (96..=100) may lie strictly above the quantile
        assert_eq!(empirical_upper_quantile(&sorted, 0.05), 95.0);
        assert_eq!(empirical_upper_quantile(&sorted, 0.001), 100.0);
    }

    #[test]
    fn quantile_table_csv() {
        let rows = vec![QuantileRow { alpha: 0.05, t_analytic: 3.0, t_product: 2.9, t_mc: 2.91, mc_se: 0.01 }];
        let mut buf = Vec::new();
        write_quantile_table(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "alpha,t_analytic,t_product,t_mc,mc_se\n0.05,3,2.9,2.91,0.01\n"
        );
    }

    #[test]
    fn method_names_round_trip() {
        for m in [CalibrationMethod::AnalyticBound, CalibrationMethod::ProductCdf, CalibrationMethod::MonteCarlo] {
            assert_eq!(m.name().parse::<CalibrationMethod>().unwrap(), m);
        }
        assert_eq!("mc".parse::<CalibrationMethod>().unwrap(), CalibrationMethod::MonteCarlo);
    }
}
