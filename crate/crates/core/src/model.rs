//! Observation models: pre/post-change densities and path sampling.

use std::fmt;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, PRE_CHANGE_STREAM};
use crate::scalar::Scalar;

/// A pair of densities `(p0, p1)` with a computable log-likelihood ratio.
///
/// Implementations are immutable and shared across concurrent trials; all
/// randomness comes from the generator handed in by the caller.
pub trait ChangeModel<F: Scalar>: Send + Sync {
    /// One draw from the pre-change density `p0`.
    fn sample_pre(&self, rng: &mut dyn RngCore) -> F;
    /// One draw from the post-change density `p1`.
    fn sample_post(&self, rng: &mut dyn RngCore) -> F;
    /// `log(p1(x) / p0(x))`.
    fn llr(&self, x: F) -> F;
    /// `KL(p0 || p1)`, the pre-change drift magnitude of the llr.
    fn mu0(&self) -> F;
    /// `KL(p1 || p0)`, the post-change drift of the llr.
    fn mu1(&self) -> F;
    /// `E_{p0} exp(lambda * llr(X))` when the model knows it exactly.
    fn mgf_closed_form(&self, _lambda: F) -> Option<F> {
        None
    }
    fn describe(&self) -> String;
}

/// Unit-variance Gaussian with mean 0 before the change and `delta` after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianShift<F> {
    delta: F,
}

impl<F: Scalar> GaussianShift<F> {
    pub fn new(delta: F) -> Result<Self> {
        if !delta.is_finite() || delta == F::zero() {
            return Err(Error::InvalidModel(format!(
                "gaussian shift needs a finite nonzero delta, got {delta}"
            )));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> F {
        self.delta
    }
}

/// Shorthand for [`GaussianShift::new`].
pub fn gaussian_shift_model<F: Scalar>(delta: F) -> Result<GaussianShift<F>> {
    GaussianShift::new(delta)
}

impl<F: Scalar> ChangeModel<F> for GaussianShift<F> {
    fn sample_pre(&self, rng: &mut dyn RngCore) -> F {
        let z: f64 = rng.sample(StandardNormal);
        F::lit(z)
    }

    fn sample_post(&self, rng: &mut dyn RngCore) -> F {
        let z: f64 = rng.sample(StandardNormal);
        self.delta + F::lit(z)
    }

    fn llr(&self, x: F) -> F {
        self.delta * x - self.delta * self.delta / F::lit(2.0)
    }

    fn mu0(&self) -> F {
        self.delta * self.delta / F::lit(2.0)
    }

    fn mu1(&self) -> F {
        self.delta * self.delta / F::lit(2.0)
    }

    fn mgf_closed_form(&self, lambda: F) -> Option<F> {
        // llr ~ N(-d^2/2, d^2) under p0
        let half_d2 = self.delta * self.delta / F::lit(2.0);
        Some((lambda * (lambda - F::one()) * half_d2).exp())
    }

    fn describe(&self) -> String {
        format!("gaussian_shift(delta={})", self.delta)
    }
}

/// Rejects models violating the standing assumption `mu0 > 0`, `mu1 > 0`.
pub fn validate_model<F: Scalar, M: ChangeModel<F> + ?Sized>(model: &M) -> Result<()> {
    let (mu0, mu1) = (model.mu0(), model.mu1());
    if !(mu0 > F::zero() && mu1 > F::zero() && mu0.is_finite() && mu1.is_finite()) {
        return Err(Error::InvalidModel(format!(
            "{}: need mu0 > 0 and mu1 > 0, got mu0={mu0}, mu1={mu1}",
            model.describe()
        )));
    }
    Ok(())
}

/// Change time of a path; `Never` is the no-change regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChangeTime {
    At(u64),
    Never,
}

impl ChangeTime {
    /// True when observation `k` (1-based) is drawn from `p0`.
    pub fn is_pre_change(&self, k: u64) -> bool {
        match *self {
            ChangeTime::At(theta) => k < theta,
            ChangeTime::Never => true,
        }
    }

    pub fn finite(&self) -> Option<u64> {
        match *self {
            ChangeTime::At(theta) => Some(theta),
            ChangeTime::Never => None,
        }
    }
}

impl fmt::Display for ChangeTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChangeTime::At(theta) => write!(f, "{theta}"),
            ChangeTime::Never => f.write_str("inf"),
        }
    }
}

/// Where the change happens, how long the path is, and which seed drives it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathSpec {
    theta: ChangeTime,
    horizon: u64,
    seed: u64,
}

impl PathSpec {
    pub fn new(theta: ChangeTime, horizon: u64, seed: u64) -> Result<Self> {
        if let ChangeTime::At(0) = theta {
            return Err(Error::Config("change time must be >= 1".into()));
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        Ok(Self { theta, horizon, seed })
    }

    pub fn theta(&self) -> ChangeTime {
        self.theta
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Stream id used for the post-change part of a path changing at `theta`.
///
/// Pre-change draws always come from [`PRE_CHANGE_STREAM`], so the first
/// `theta - 1` observations of a path coincide with those of the no-change
/// path with the same seed.
pub fn post_change_stream(theta: u64) -> u64 {
    theta
}

/// Lazily generated observations `X_1, X_2, ...` of one path.
pub struct Observations<'a, F: Scalar, M: ChangeModel<F> + ?Sized> {
    model: &'a M,
    theta: ChangeTime,
    seed: u64,
    pre: rand_chacha::ChaCha8Rng,
    post: Option<rand_chacha::ChaCha8Rng>,
    step: u64,
    _scalar: std::marker::PhantomData<F>,
}

impl<'a, F: Scalar, M: ChangeModel<F> + ?Sized> Observations<'a, F, M> {
    pub fn new(model: &'a M, theta: ChangeTime, seed: u64) -> Self {
        Self {
            model,
            theta,
            seed,
            pre: stream_rng(seed, PRE_CHANGE_STREAM),
            post: None,
            step: 0,
            _scalar: std::marker::PhantomData,
        }
    }

    /// Index of the last observation produced.
    pub fn step(&self) -> u64 {
        self.step
    }
}

impl<F: Scalar, M: ChangeModel<F> + ?Sized> Iterator for Observations<'_, F, M> {
    type Item = F;

    fn next(&mut self) -> Option<F> {
        self.step += 1;
        if self.theta.is_pre_change(self.step) {
            return Some(self.model.sample_pre(&mut self.pre));
        }
        let seed = self.seed;
        let theta = self.theta.finite().expect("post-change implies finite theta");
        let rng = self
            .post
            .get_or_insert_with(|| stream_rng(seed, post_change_stream(theta)));
        Some(self.model.sample_post(rng))
    }
}

/// Draws `horizon` observations with the change at `spec.theta()`.
pub fn sample_path<F: Scalar, M: ChangeModel<F> + ?Sized>(model: &M, spec: &PathSpec) -> Vec<F> {
    Observations::new(model, spec.theta(), spec.seed())
        .take(spec.horizon() as usize)
        .collect()
}

/// A Monte Carlo or exact value of `phi(lambda) = E_{p0} exp(lambda * llr)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfEstimate {
    pub value: f64,
    pub std_error: f64,
    pub closed_form: bool,
}

/// `phi(lambda)`, exact when the model provides it, otherwise estimated.
pub fn mgf<F: Scalar, M: ChangeModel<F> + ?Sized>(
    model: &M,
    lambda: F,
    trials: usize,
    seed: u64,
) -> Result<MgfEstimate> {
    match model.mgf_closed_form(lambda) {
        Some(v) => Ok(MgfEstimate {
            value: v.to_f64_lossy(),
            std_error: 0.0,
            closed_form: true,
        }),
        None => mgf_monte_carlo(model, lambda, trials, seed),
    }
}

/// Monte Carlo estimate of `phi(lambda)` from `trials` draws of `p0`.
///
/// Fails with [`Error::NonfiniteMgf`] when the sample is dominated by a handful
/// of draws, which is what a heavy-tailed or infinite expectation looks like
/// from the inside.
pub fn mgf_monte_carlo<F: Scalar, M: ChangeModel<F> + ?Sized>(
    model: &M,
    lambda: F,
    trials: usize,
    seed: u64,
) -> Result<MgfEstimate> {
    if trials < 2 {
        return Err(Error::Config("mgf needs at least two trials".into()));
    }
    let mut rng = stream_rng(seed, PRE_CHANGE_STREAM);
    let lambda = lambda.to_f64_lossy();
    let (mut sum, mut sum_sq, mut largest) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let llr = model.llr(model.sample_pre(&mut rng)).to_f64_lossy();
        let term = (lambda * llr).exp();
        if !term.is_finite() {
            return Err(Error::NonfiniteMgf(format!("term exp({lambda} * {llr}) overflowed")));
        }
        sum += term;
        sum_sq += term * term;
        largest = largest.max(term);
    }
    if !(sum.is_finite() && sum_sq.is_finite()) {
        return Err(Error::NonfiniteMgf("running sums overflowed".into()));
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    let std_error = (var / n).sqrt();
    if largest > 0.25 * sum || std_error > 0.5 * mean {
        return Err(Error::NonfiniteMgf(format!(
            "largest term carries {:.1}% of the mass, relative standard error {:.3}",
            100.0 * largest / sum,
            std_error / mean
        )));
    }
    Ok(MgfEstimate {
        value: mean,
        std_error,
        closed_form: false,
    })
}
