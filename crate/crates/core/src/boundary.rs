//! Iterated-logarithm detection boundaries.
//!
//! With `phi(x) = 1 + log x` and `Phi_m` its m-fold iterate, the boundary is
//!
//! ```text
//! b(x) = -log[ Phi_m(x)^-eps / eps - Phi_m(x + 1)^-eps / eps ]
//! ```
//!
//! so the crossing masses `exp(-b(k))` telescope: their sum from `k` onwards
//! is `Phi_m(k)^-eps / eps`. Differences of iterates are propagated through
//! `ln_1p` so that neither `b` nor its derivative cancels catastrophically at
//! large `k` or small `eps`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Depth `m >= 1` and exponent `0 < eps <= 1` of a boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec<F> {
    m: usize,
    epsilon: F,
}

impl<F: Scalar> BoundarySpec<F> {
    pub fn new(m: usize, epsilon: F) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("boundary depth m must be >= 1".into()));
        }
        if !(epsilon > F::zero() && epsilon <= F::one()) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        Ok(Self { m, epsilon })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn epsilon(&self) -> F {
        self.epsilon
    }

    /// `b(x)` for real `x >= 1`.
    pub fn value_at(&self, x: F) -> F {
        let it = Iterates::new(self.m, x);
        let eps = self.epsilon;
        eps.ln() + eps * it.phi.ln() - (-(-eps * it.inc_log_m).exp_m1()).ln()
    }

    /// `b(k)` at an integer step.
    pub fn value(&self, k: u64) -> F {
        self.value_at(F::from_index(k))
    }

    /// `exp(-b(x))`, evaluated directly rather than through `b`.
    pub fn crossing_mass_at(&self, x: F) -> F {
        let it = Iterates::new(self.m, x);
        let eps = self.epsilon;
        (-eps * it.phi.ln()).exp() / eps * -(-eps * it.inc_log_m).exp_m1()
    }

    pub fn crossing_mass(&self, k: u64) -> F {
        self.crossing_mass_at(F::from_index(k))
    }

    /// `sum_{j >= from_k} exp(-b(j)) = Phi_m(from_k)^-eps / eps`, in closed form.
    pub fn tail_sum(&self, from_k: u64) -> F {
        let phi = iterate(self.m, F::from_index(from_k.max(1)));
        (-self.epsilon * phi.ln()).exp() / self.epsilon
    }

    /// `db/dx` by the chain rule through the iterates.
    pub fn derivative(&self, x: F) -> Result<F> {
        if !(x >= F::one()) {
            return Err(Error::Domain(format!("boundary derivative needs x >= 1, got {x}")));
        }
        let it = Iterates::new(self.m, x);
        let eps = self.epsilon;
        // h(x) = Phi_m^-eps / (x prod Phi_j) is -d/dx of Phi_m^-eps / eps; b' = (h(x) - h(x+1)) / mass.
        let drop = eps * it.inc_log_m + (F::one() / x).ln_1p() + it.inc_log_sum;
        let num = eps * -(-drop).exp_m1();
        let den = x * it.sum_log.exp() * -(-eps * it.inc_log_m).exp_m1();
        Ok(num / den)
    }

    /// Leading terms `log k + sum_j log Phi_j(k) + eps log Phi_m(k)` of `b(k)`.
    pub fn asymptotic(&self, k: F) -> F {
        let it = Iterates::new(self.m, k);
        k.ln() + it.sum_log + self.epsilon * it.phi.ln()
    }

    /// `sum_k exp(-2 b(k))` over `k <= terms`, with a certified bound on the rest.
    pub fn squared_tail_check(&self, terms: u64) -> SquaredTail<F> {
        let mut partial = F::zero();
        let mut compensation = F::zero();
        for k in 1..=terms {
            let w = self.crossing_mass(k);
            // Kahan summation
            let y = w * w - compensation;
            let t = partial + y;
            compensation = (t - partial) - y;
            partial = t;
        }
        // masses are nonincreasing, so sum_{k>K} w_k^2 <= w_{K+1} * sum_{k>K} w_k
        let remainder_bound = self.crossing_mass(terms + 1) * self.tail_sum(terms + 1);
        SquaredTail {
            partial,
            remainder_bound,
            terms,
        }
    }
}

/// Partial sum of squared crossing masses plus a bound on the omitted tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredTail<F> {
    pub partial: F,
    pub remainder_bound: F,
    pub terms: u64,
}

impl<F: Scalar> SquaredTail<F> {
    /// Certified upper bound on the full series.
    pub fn upper(&self) -> F {
        self.partial + self.remainder_bound
    }
}

/// `Phi_m(x)` and the increments needed for differences at `x` and `x + 1`.
struct Iterates<F> {
    /// `Phi_m(x)`
    phi: F,
    /// `sum_{j=1}^m log Phi_j(x)`
    sum_log: F,
    /// `log Phi_m(x+1) - log Phi_m(x)`
    inc_log_m: F,
    /// `sum_{j=1}^m [log Phi_j(x+1) - log Phi_j(x)]`
    inc_log_sum: F,
}

impl<F: Scalar> Iterates<F> {
    fn new(m: usize, x: F) -> Self {
        let mut phi = x;
        // Phi_0(x+1) - Phi_0(x)
        let mut diff = F::one();
        let mut inc_log = (diff / phi).ln_1p();
        let mut sum_log = F::zero();
        let mut inc_log_sum = F::zero();
        for _ in 0..m {
            // Phi_j(x+1) - Phi_j(x) = log Phi_{j-1}(x+1) - log Phi_{j-1}(x)
            diff = inc_log;
            phi = F::one() + phi.ln();
            inc_log = (diff / phi).ln_1p();
            sum_log = sum_log + phi.ln();
            inc_log_sum = inc_log_sum + inc_log;
        }
        Self {
            phi,
            sum_log,
            inc_log_m: inc_log,
            inc_log_sum,
        }
    }
}

fn iterate<F: Scalar>(m: usize, mut x: F) -> F {
    for _ in 0..m {
        x = F::one() + x.ln();
    }
    x
}

/// `Phi_m(x)` for `x >= 1`.
pub fn phi_iter<F: Scalar>(m: usize, x: F) -> Result<F> {
    if !(x >= F::one()) {
        return Err(Error::Domain(format!("Phi_m needs x >= 1, got {x}")));
    }
    Ok(iterate(m, x))
}

/// `j * log Phi_j(theta)`, which tends to 2 as `j` grows for every `theta > 1`.
///
/// At `theta = 1` every iterate stays at the fixed point and the value is 0.
pub fn remark_limit<F: Scalar>(theta: F, j: u64) -> Result<F> {
    if !(theta >= F::one()) || !theta.is_finite() {
        return Err(Error::Domain(format!("remark limit needs theta >= 1, got {theta}")));
    }
    if j == 0 {
        return Err(Error::Domain("remark limit needs j >= 1".into()));
    }
    let mut x = theta;
    for _ in 0..j {
        x = F::one() + x.ln();
    }
    Ok(F::from_index(j) * x.ln())
}

/// A boundary seen through its crossing masses; lets calibration run on
/// degenerate test boundaries as well as [`BoundarySpec`].
pub trait CrossingBoundary<F: Scalar>: Sync {
    /// `b(k)`; may be `+inf`.
    fn level(&self, k: u64) -> F;
    /// `exp(-b(k))`.
    fn crossing_mass(&self, k: u64) -> F;
    /// `sum_{j >= from_k} exp(-b(j))`.
    fn tail_mass(&self, from_k: u64) -> F;
}

impl<F: Scalar> CrossingBoundary<F> for BoundarySpec<F> {
    fn level(&self, k: u64) -> F {
        self.value(k)
    }

    fn crossing_mass(&self, k: u64) -> F {
        BoundarySpec::crossing_mass(self, k)
    }

    fn tail_mass(&self, from_k: u64) -> F {
        self.tail_sum(from_k)
    }
}

/// `b(1..=len)` precomputed for the detector hot loop.
#[derive(Debug, Clone)]
pub struct BoundaryTable<F> {
    spec: BoundarySpec<F>,
    levels: Vec<F>,
}

impl<F: Scalar> BoundaryTable<F> {
    pub fn new(spec: BoundarySpec<F>, len: u64) -> Self {
        let levels = (1..=len).map(|k| spec.value(k)).collect();
        Self { spec, levels }
    }

    pub fn spec(&self) -> &BoundarySpec<F> {
        &self.spec
    }

    pub fn get(&self, k: u64) -> F {
        match self.levels.get((k as usize).wrapping_sub(1)) {
            Some(&b) => b,
            None => self.spec.value(k),
        }
    }
}
