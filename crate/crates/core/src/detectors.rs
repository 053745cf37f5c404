//! Constant-memory streaming detectors and the stopping rules built on them.
//!
//! Every detector consumes the log-likelihood ratio of one observation per
//! update. The Shiryaev-Roberts statistic and the Bayes posterior odds grow
//! geometrically after a change, so both are held as [`Positive`] values that
//! switch to log representation before they overflow.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use crate::boundary::{BoundarySpec, BoundaryTable};
use crate::calibration::CalibratedThreshold;
use crate::error::{Error, Result};
use crate::model::{validate_model, ChangeModel, Observations, PathSpec};
use crate::scalar::Scalar;

fn check_finite<F: Scalar>(llr: F) -> Result<()> {
    if llr.is_finite() {
        Ok(())
    } else {
        Err(Error::Data(format!("log-likelihood ratio must be finite, got {llr}")))
    }
}

/// A nonnegative quantity stored linearly while small and by its logarithm once large.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Positive<F> {
    Linear(F),
    Log(F),
}

impl<F: Scalar> Positive<F> {
    fn switch_level() -> F {
        F::max_value().sqrt()
    }

    pub fn from_value(v: F) -> Self {
        Positive::Linear(v)
    }

    /// Natural log of the value (`-inf` for zero).
    pub fn ln(&self) -> F {
        match *self {
            Positive::Linear(v) => v.ln(),
            Positive::Log(l) => l,
        }
    }

    /// The value itself; `inf` once it exceeds the scalar range.
    pub fn value(&self) -> F {
        match *self {
            Positive::Linear(v) => v,
            Positive::Log(l) => l.exp(),
        }
    }

    /// `(self + add) * exp(log_factor)` with `add >= 0`.
    fn shift_scale(self, add: F, log_factor: F) -> Self {
        match self {
            Positive::Linear(v) => {
                let shifted = v + add;
                let scaled = shifted * log_factor.exp();
                if scaled.is_finite() && scaled < Self::switch_level() {
                    Positive::Linear(scaled)
                } else {
                    Positive::Log(shifted.ln() + log_factor)
                }
            }
            Positive::Log(l) => {
                let next = l + (add * (-l).exp()).ln_1p() + log_factor;
                if next < Self::switch_level().ln() - F::lit(2.0) {
                    Positive::Linear(next.exp())
                } else {
                    Positive::Log(next)
                }
            }
        }
    }
}

/// CUSUM statistic `M_n = llr_n + max(0, M_{n-1})`, the largest suffix sum of llr values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CusumState<F> {
    pub m_stat: F,
    pub step: u64,
}

impl<F: Scalar> CusumState<F> {
    pub fn new() -> Self {
        Self {
            m_stat: F::zero(),
            step: 0,
        }
    }

    pub fn update(self, llr: F) -> Result<Self> {
        check_finite(llr)?;
        Ok(Self {
            m_stat: llr + self.m_stat.max(F::zero()),
            step: self.step + 1,
        })
    }
}

/// Shiryaev-Roberts statistic `S_n = (1 + S_{n-1}) * lr_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrState<F> {
    s_stat: Positive<F>,
    pub step: u64,
}

impl<F: Scalar> Default for SrState<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> SrState<F> {
    pub fn new() -> Self {
        Self::with_value(F::zero())
    }

    pub fn with_value(s: F) -> Self {
        Self {
            s_stat: Positive::from_value(s),
            step: 0,
        }
    }

    /// Update from a likelihood ratio `lr >= 0`.
    pub fn update(self, lr: F) -> Result<Self> {
        if !(lr >= F::zero()) || !lr.is_finite() {
            return Err(Error::Data(format!("likelihood ratio must be finite and >= 0, got {lr}")));
        }
        Ok(self.advance(lr.ln()))
    }

    /// Update from a log-likelihood ratio.
    pub fn update_llr(self, llr: F) -> Result<Self> {
        check_finite(llr)?;
        Ok(self.advance(llr))
    }

    fn advance(self, llr: F) -> Self {
        Self {
            s_stat: self.s_stat.shift_scale(F::one(), llr),
            step: self.step + 1,
        }
    }

    pub fn statistic(&self) -> F {
        self.s_stat.value()
    }

    pub fn log_statistic(&self) -> F {
        self.s_stat.ln()
    }
}

/// Posterior odds `rho_k = (gamma + rho_{k-1}) / (1 - gamma) * lr_k` that the
/// change has already happened under a geometric prior with parameter `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesState<F> {
    rho: Positive<F>,
    gamma: F,
    log_inv_keep: F,
    pub step: u64,
}

impl<F: Scalar> BayesState<F> {
    /// Geometric prior on `{1, 2, ...}`: no change before the first
    /// observation, so the odds start at zero.
    pub fn new(gamma: F) -> Result<Self> {
        Self::with_odds(gamma, F::zero())
    }

    /// Starting odds `rho_0`. With `gamma = 0` and `rho_0 = 1`, `log rho_k`
    /// is the cumulative llr.
    pub fn with_odds(gamma: F, rho: F) -> Result<Self> {
        if !(gamma >= F::zero() && gamma < F::one()) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if !(rho >= F::zero()) || !rho.is_finite() {
            return Err(Error::Config(format!("initial odds must be finite and >= 0, got {rho}")));
        }
        Ok(Self {
            rho: Positive::from_value(rho),
            gamma,
            log_inv_keep: -(-gamma).ln_1p(),
            step: 0,
        })
    }

    pub fn update(self, lr: F) -> Result<Self> {
        if !(lr >= F::zero()) || !lr.is_finite() {
            return Err(Error::Data(format!("likelihood ratio must be finite and >= 0, got {lr}")));
        }
        Ok(self.advance(lr.ln()))
    }

    pub fn update_llr(self, llr: F) -> Result<Self> {
        check_finite(llr)?;
        Ok(self.advance(llr))
    }

    fn advance(self, llr: F) -> Self {
        Self {
            rho: self.rho.shift_scale(self.gamma, llr + self.log_inv_keep),
            step: self.step + 1,
            ..self
        }
    }

    pub fn gamma(&self) -> F {
        self.gamma
    }

    pub fn odds(&self) -> F {
        self.rho.value()
    }

    pub fn log_odds(&self) -> F {
        self.rho.ln()
    }

    /// `P(theta <= k | X^k) = rho / (1 + rho)`.
    pub fn posterior(&self) -> F {
        let l = self.rho.ln();
        // 1 / (1 + exp(-l))
        F::one() / (F::one() + (-l).exp())
    }
}

/// Cumulative llr `L_k = sum_{i <= k} llr_i` (the uniform-prior statistic).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CumLlrState<F> {
    pub l_stat: F,
    pub step: u64,
}

impl<F: Scalar> CumLlrState<F> {
    pub fn new() -> Self {
        Self {
            l_stat: F::zero(),
            step: 0,
        }
    }

    pub fn update(self, llr: F) -> Result<Self> {
        check_finite(llr)?;
        Ok(Self {
            l_stat: self.l_stat + llr,
            step: self.step + 1,
        })
    }
}

/// State of any of the detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectorState<F> {
    Cusum(CusumState<F>),
    ShiryaevRoberts(SrState<F>),
    Bayes(BayesState<F>),
    CumLlr(CumLlrState<F>),
}

impl<F: Scalar> DetectorState<F> {
    pub fn observe(&mut self, llr: F) -> Result<()> {
        *self = match *self {
            DetectorState::Cusum(s) => DetectorState::Cusum(s.update(llr)?),
            DetectorState::ShiryaevRoberts(s) => DetectorState::ShiryaevRoberts(s.update_llr(llr)?),
            DetectorState::Bayes(s) => DetectorState::Bayes(s.update_llr(llr)?),
            DetectorState::CumLlr(s) => DetectorState::CumLlr(s.update(llr)?),
        };
        Ok(())
    }

    pub fn step(&self) -> u64 {
        match self {
            DetectorState::Cusum(s) => s.step,
            DetectorState::ShiryaevRoberts(s) => s.step,
            DetectorState::Bayes(s) => s.step,
            DetectorState::CumLlr(s) => s.step,
        }
    }

    /// The statistic on the scale used for plotting and thresholds:
    /// `M`, `L`, `log S` or `log rho`.
    pub fn plotted_statistic(&self) -> F {
        match self {
            DetectorState::Cusum(s) => s.m_stat,
            DetectorState::ShiryaevRoberts(s) => s.log_statistic(),
            DetectorState::Bayes(s) => s.log_odds(),
            DetectorState::CumLlr(s) => s.l_stat,
        }
    }
}

/// The five stopping times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleKind {
    BayesGeometric,
    UniformPrior,
    CusumMl,
    ShiryaevRoberts,
    RobustBoundary,
}

impl RuleKind {
    pub const ALL: [RuleKind; 5] = [
        RuleKind::BayesGeometric,
        RuleKind::UniformPrior,
        RuleKind::CusumMl,
        RuleKind::ShiryaevRoberts,
        RuleKind::RobustBoundary,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RuleKind::BayesGeometric => "bayes_geometric",
            RuleKind::UniformPrior => "uniform_prior",
            RuleKind::CusumMl => "cusum_ml",
            RuleKind::ShiryaevRoberts => "shiryaev_roberts",
            RuleKind::RobustBoundary => "robust_boundary",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayes_geometric" | "bayes" => Ok(RuleKind::BayesGeometric),
            "uniform_prior" | "uniform" => Ok(RuleKind::UniformPrior),
            "cusum_ml" | "cusum" => Ok(RuleKind::CusumMl),
            "shiryaev_roberts" | "sr" => Ok(RuleKind::ShiryaevRoberts),
            "robust_boundary" | "robust" => Ok(RuleKind::RobustBoundary),
            other => Err(Error::Usage(format!("unknown rule kind `{other}`"))),
        }
    }
}

/// A stopping threshold: a plain number or one produced by calibration.
#[derive(Debug, Clone, PartialEq)]
pub enum Threshold<F> {
    Fixed(F),
    Calibrated { value: F, source: CalibratedThreshold },
}

impl<F: Scalar> Threshold<F> {
    pub fn value(&self) -> F {
        match self {
            Threshold::Fixed(v) => *v,
            Threshold::Calibrated { value, .. } => *value,
        }
    }
}

impl<F: Scalar> From<CalibratedThreshold> for Threshold<F> {
    fn from(source: CalibratedThreshold) -> Self {
        Threshold::Calibrated {
            value: F::lit(source.value),
            source,
        }
    }
}

/// A stopping time `min{k : statistic_k >= level_k}`.
///
/// The threshold is on each statistic's own scale: posterior odds for
/// `bayes_geometric`, `L` for `uniform_prior`, `M` for `cusum_ml`, `S` for
/// `shiryaev_roberts`, and the offset `t` added to `b(k)` for `robust_boundary`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRule<F> {
    kind: RuleKind,
    threshold: Threshold<F>,
    boundary: Option<BoundarySpec<F>>,
    gamma: Option<F>,
}

fn check_alpha<F: Scalar>(alpha: F) -> Result<()> {
    if alpha > F::zero() && alpha < F::one() {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

impl<F: Scalar> StoppingRule<F> {
    pub fn new(
        kind: RuleKind,
        threshold: Threshold<F>,
        boundary: Option<BoundarySpec<F>>,
        gamma: Option<F>,
    ) -> Result<Self> {
        let t = threshold.value();
        if t.is_nan() {
            return Err(Error::Config("threshold is NaN".into()));
        }
        match (kind, boundary.is_some()) {
            (RuleKind::RobustBoundary, false) => {
                return Err(Error::Config("robust_boundary needs a boundary".into()))
            }
            (k, true) if k != RuleKind::RobustBoundary => {
                return Err(Error::Config(format!("{k} does not take a boundary")))
            }
            _ => {}
        }
        match (kind, gamma) {
            (RuleKind::BayesGeometric, Some(g)) if g > F::zero() && g < F::one() => {}
            (RuleKind::BayesGeometric, _) => {
                return Err(Error::Config("bayes_geometric needs gamma in (0, 1)".into()))
            }
            (k, Some(_)) => return Err(Error::Config(format!("{k} does not take gamma"))),
            _ => {}
        }
        if matches!(kind, RuleKind::BayesGeometric | RuleKind::ShiryaevRoberts) && t < F::zero() {
            return Err(Error::Config(format!("{kind} threshold must be >= 0, got {t}")));
        }
        Ok(Self {
            kind,
            threshold,
            boundary,
            gamma,
        })
    }

    /// `pi >= 1 - alpha`, i.e. odds `>= (1 - alpha) / alpha`.
    pub fn bayes_geometric(gamma: F, alpha: F) -> Result<Self> {
        check_alpha(alpha)?;
        let odds = (F::one() - alpha) / alpha;
        Self::new(RuleKind::BayesGeometric, Threshold::Fixed(odds), None, Some(gamma))
    }

    /// `L_k >= log(1 / alpha)`.
    pub fn uniform_prior(alpha: F) -> Result<Self> {
        check_alpha(alpha)?;
        Self::new(RuleKind::UniformPrior, Threshold::Fixed(-alpha.ln()), None, None)
    }

    /// `M_k >= log(1 / alpha)`.
    pub fn cusum(alpha: F) -> Result<Self> {
        check_alpha(alpha)?;
        Self::new(RuleKind::CusumMl, Threshold::Fixed(-alpha.ln()), None, None)
    }

    /// `S_k >= threshold`.
    pub fn shiryaev_roberts(threshold: F) -> Result<Self> {
        Self::new(RuleKind::ShiryaevRoberts, Threshold::Fixed(threshold), None, None)
    }

    /// `M_k >= b(k) + t`.
    pub fn robust(boundary: BoundarySpec<F>, threshold: impl Into<Threshold<F>>) -> Result<Self> {
        Self::new(RuleKind::RobustBoundary, threshold.into(), Some(boundary), None)
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn threshold(&self) -> &Threshold<F> {
        &self.threshold
    }

    pub fn boundary(&self) -> Option<&BoundarySpec<F>> {
        self.boundary.as_ref()
    }

    pub fn gamma(&self) -> Option<F> {
        self.gamma
    }

    /// A replacement threshold, keeping everything else.
    pub fn with_threshold(&self, threshold: Threshold<F>) -> Result<Self> {
        Self::new(self.kind, threshold, self.boundary, self.gamma)
    }

    /// Fresh detector state for this rule.
    pub fn initial_state(&self) -> DetectorState<F> {
        match self.kind {
            RuleKind::BayesGeometric => DetectorState::Bayes(
                BayesState::new(self.gamma.expect("validated")).expect("validated"),
            ),
            RuleKind::UniformPrior => DetectorState::CumLlr(CumLlrState::new()),
            RuleKind::CusumMl | RuleKind::RobustBoundary => DetectorState::Cusum(CusumState::new()),
            RuleKind::ShiryaevRoberts => DetectorState::ShiryaevRoberts(SrState::new()),
        }
    }

    fn level_with(&self, k: u64, boundary_level: impl FnOnce(u64) -> F) -> F {
        let t = self.threshold.value();
        match self.kind {
            RuleKind::BayesGeometric | RuleKind::ShiryaevRoberts => t.ln(),
            RuleKind::UniformPrior | RuleKind::CusumMl => t,
            RuleKind::RobustBoundary => boundary_level(k) + t,
        }
    }

    /// Threshold at step `k` on the scale of [`DetectorState::plotted_statistic`].
    pub fn level_at(&self, k: u64) -> F {
        self.level_with(k, |k| self.boundary.expect("validated").value(k))
    }

    fn matches(&self, state: &DetectorState<F>) -> bool {
        matches!(
            (self.kind, state),
            (RuleKind::BayesGeometric, DetectorState::Bayes(_))
                | (RuleKind::UniformPrior, DetectorState::CumLlr(_))
                | (RuleKind::CusumMl, DetectorState::Cusum(_))
                | (RuleKind::RobustBoundary, DetectorState::Cusum(_))
                | (RuleKind::ShiryaevRoberts, DetectorState::ShiryaevRoberts(_))
        )
    }
}

/// Whether `rule` raises an alarm in `state` (inclusive comparison).
pub fn should_stop<F: Scalar>(rule: &StoppingRule<F>, state: &DetectorState<F>) -> Result<bool> {
    if !rule.matches(state) {
        return Err(Error::Usage(format!(
            "{} cannot be evaluated on a {:?} state",
            rule.kind,
            std::mem::discriminant(state)
        )));
    }
    if rule.kind == RuleKind::RobustBoundary && state.step() == 0 {
        return Err(Error::Usage("robust rule needs at least one observation".into()));
    }
    Ok(state.plotted_statistic() >= rule.level_at(state.step()))
}

/// A rule together with its running state; the unit the harness drives.
#[derive(Debug, Clone)]
pub struct Monitor<F> {
    rule: StoppingRule<F>,
    state: DetectorState<F>,
    table: Option<Arc<BoundaryTable<F>>>,
}

impl<F: Scalar> Monitor<F> {
    pub fn new(rule: StoppingRule<F>) -> Self {
        let state = rule.initial_state();
        Self {
            rule,
            state,
            table: None,
        }
    }

    /// Precomputes the boundary up to `len` for robust rules.
    pub fn with_table(rule: StoppingRule<F>, len: u64) -> Self {
        let table = rule.boundary.map(|b| Arc::new(BoundaryTable::new(b, len)));
        Self {
            table,
            ..Self::new(rule)
        }
    }

    pub fn rule(&self) -> &StoppingRule<F> {
        &self.rule
    }

    pub fn state(&self) -> &DetectorState<F> {
        &self.state
    }

    pub fn step(&self) -> u64 {
        self.state.step()
    }

    pub fn reset(&mut self) {
        self.state = self.rule.initial_state();
    }

    pub fn level(&self) -> F {
        let k = self.state.step().max(1);
        match &self.table {
            Some(table) => self.rule.level_with(k, |k| table.get(k)),
            None => self.rule.level_at(k),
        }
    }

    /// Feeds one llr; returns true when the rule fires at this step.
    pub fn observe(&mut self, llr: F) -> Result<bool> {
        self.state.observe(llr)?;
        Ok(self.state.plotted_statistic() >= self.level())
    }
}

/// When a run raised its alarm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopTime {
    At(u64),
    Censored,
}

impl StopTime {
    pub fn step(&self) -> Option<u64> {
        match *self {
            StopTime::At(k) => Some(k),
            StopTime::Censored => None,
        }
    }
}

impl fmt::Display for StopTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopTime::At(k) => write!(f, "{k}"),
            StopTime::Censored => f.write_str("CENSORED"),
        }
    }
}

/// One row of an exported trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint<F> {
    pub step: u64,
    pub statistic: F,
    pub threshold: F,
    pub stopped: bool,
}

/// Result of [`run_to_stop`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome<F> {
    pub stop: StopTime,
    /// Statistic (plotted scale) at the stop, or at the horizon when censored.
    pub final_statistic: F,
    pub final_threshold: F,
    pub trajectory: Option<Vec<TrajectoryPoint<F>>>,
}

/// Runs `rule` along an llr sequence until it fires or the sequence ends.
pub fn run_on_llrs<F: Scalar, I: IntoIterator<Item = F>>(
    rule: &StoppingRule<F>,
    llrs: I,
    record: bool,
) -> Result<RunOutcome<F>> {
    let mut monitor = Monitor::new(rule.clone());
    let mut trajectory = record.then(Vec::new);
    let mut last = (F::zero(), monitor.rule.level_at(1));
    for llr in llrs {
        let fired = monitor.observe(llr)?;
        let point = TrajectoryPoint {
            step: monitor.step(),
            statistic: monitor.state.plotted_statistic(),
            threshold: monitor.level(),
            stopped: fired,
        };
        last = (point.statistic, point.threshold);
        if let Some(t) = trajectory.as_mut() {
            t.push(point);
        }
        if fired {
            return Ok(RunOutcome {
                stop: StopTime::At(point.step),
                final_statistic: point.statistic,
                final_threshold: point.threshold,
                trajectory,
            });
        }
    }
    Ok(RunOutcome {
        stop: StopTime::Censored,
        final_statistic: last.0,
        final_threshold: last.1,
        trajectory,
    })
}

/// Samples the path described by `spec` and runs `rule` on it.
pub fn run_to_stop<F: Scalar, M: ChangeModel<F> + ?Sized>(
    model: &M,
    rule: &StoppingRule<F>,
    spec: &PathSpec,
    record: bool,
) -> Result<RunOutcome<F>> {
    validate_model(model)?;
    let llrs = Observations::new(model, spec.theta(), spec.seed())
        .take(spec.horizon() as usize)
        .map(|x| model.llr(x));
    run_on_llrs(rule, llrs, record)
}

/// The full trajectory over an llr sequence without stopping; `stopped` is
/// true from the first alarm onwards.
pub fn trace_llrs<F: Scalar, I: IntoIterator<Item = F>>(
    rule: &StoppingRule<F>,
    llrs: I,
) -> Result<Vec<TrajectoryPoint<F>>> {
    let mut monitor = Monitor::new(rule.clone());
    let mut fired_once = false;
    let mut points = Vec::new();
    for llr in llrs {
        fired_once |= monitor.observe(llr)?;
        points.push(TrajectoryPoint {
            step: monitor.step(),
            statistic: monitor.state.plotted_statistic(),
            threshold: monitor.level(),
            stopped: fired_once,
        });
    }
    Ok(points)
}

/// Writes `step,statistic,threshold,stopped` rows, preceded by `# key = value`
/// comment lines.
pub fn write_trajectory_csv<F: Scalar, W: Write>(
    mut out: W,
    points: &[TrajectoryPoint<F>],
    comments: &[(String, String)],
) -> Result<()> {
    for (k, v) in comments {
        writeln!(out, "# {k} = {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "statistic", "threshold", "stopped"])?;
    for p in points {
        w.write_record([
            p.step.to_string(),
            p.statistic.to_string(),
            p.threshold.to_string(),
            p.stopped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
