//! Monte Carlo estimation of the false-alarm probability
//! `alpha(theta) = P_theta(tau < theta)` and the average detection delay
//! `Delta(theta) = E_theta (tau - theta)_+` over grids of change points.
//!
//! Trial `i` draws its pre-change observations from stream 0 and the
//! post-change observations for change point `theta` from stream `theta` of
//! the generator seeded with `trial_seed(master_seed, i)`, exactly as
//! [`crate::model::Observations`] does. `{tau < theta}` depends only on the
//! first `theta - 1` observations, so one no-change prefix per trial serves
//! the whole grid: monitors are advanced along it, and at each `theta - 1`
//! the surviving monitors are cloned and continued on the post-change stream.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;

use crate::boundary::BoundarySpec;
use crate::calibration::{calibrate, CalibrationMethod, CalibrationOptions};
use crate::delay::{bayes_delay_approx, cusum_delay_approx, solve_delay_offset, uniform_delay};
use crate::detectors::{Monitor, RuleKind, StoppingRule, Threshold};
use crate::error::{Error, Result};
use crate::model::{post_change_stream, validate_model, ChangeModel, ChangeTime, GaussianShift};
use crate::rng::{stream_rng, trial_seed, PRE_CHANGE_STREAM};

pub const DEFAULT_TRIALS: usize = 10_000;
/// Censored fraction above which a delay estimate is flagged.
pub const CENSORING_WARNING_FRACTION: f64 = 0.1;
/// Prior mass beyond the grid above which a Bayes average is flagged.
pub const PRIOR_TAIL_WARNING: f64 = 0.01;

/// One detector of a sweep, before thresholds are resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleConfig {
    /// Label in the output; defaults to the rule's name.
    pub label: Option<String>,
    pub kind: RuleKind,
    pub alpha: f64,
    /// Prior parameter of the Bayes-geometric rule.
    pub gamma: Option<f64>,
    pub m: Option<usize>,
    pub epsilon: Option<f64>,
    /// Explicit threshold overriding the default derived from `alpha`.
    pub threshold: Option<f64>,
    /// Calibration route of the robust rule; defaults to the product CDF.
    pub calibration: Option<CalibrationMethod>,
}

impl RuleConfig {
    pub fn new(kind: RuleKind, alpha: f64) -> Self {
        Self {
            label: None,
            kind,
            alpha,
            gamma: None,
            m: None,
            epsilon: None,
            threshold: None,
            calibration: None,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    /// Builds the stopping rule, calibrating the robust threshold if needed.
    pub fn resolve(&self, calibration: &CalibrationOptions) -> Result<StoppingRule<f64>> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "rule `{}`: alpha must lie in (0, 1), got {}",
                self.label(),
                self.alpha
            )));
        }
        let rule = match self.kind {
            RuleKind::BayesGeometric => {
                let gamma = self.gamma.ok_or_else(|| {
                    Error::Config(format!("rule `{}`: bayes_geometric needs gamma", self.label()))
                })?;
                StoppingRule::bayes_geometric(gamma, self.alpha)?
            }
            RuleKind::UniformPrior => StoppingRule::uniform_prior(self.alpha)?,
            RuleKind::CusumMl => StoppingRule::cusum(self.alpha)?,
            RuleKind::ShiryaevRoberts => StoppingRule::shiryaev_roberts(1.0 / self.alpha)?,
            RuleKind::RobustBoundary => {
                let spec = BoundarySpec::new(self.m.unwrap_or(1), self.epsilon.unwrap_or(1.0))?;
                let threshold = match self.threshold {
                    Some(t) => Threshold::Fixed(t),
                    None => {
                        let method = self.calibration.unwrap_or(CalibrationMethod::ProductCdf);
                        calibrate(&spec, self.alpha, method, calibration)?.into()
                    }
                };
                return StoppingRule::robust(spec, threshold);
            }
        };
        match self.threshold {
            Some(t) => rule.with_threshold(Threshold::Fixed(t)),
            None => Ok(rule),
        }
    }
}

/// A sweep over change points for a Gaussian mean shift.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub delta: f64,
    pub rules: Vec<RuleConfig>,
    pub theta_grid: Vec<ChangeTime>,
    pub trials: usize,
    /// Defaults to ten times the largest finite change point plus the
    /// largest predicted delay.
    pub horizon: Option<u64>,
    pub master_seed: u64,
    /// Worker threads; `None` uses the global pool. Never affects results.
    pub threads: Option<usize>,
    pub calibration: CalibrationOptions,
}

impl ExperimentConfig {
    pub fn new(delta: f64, rules: Vec<RuleConfig>, theta_grid: Vec<ChangeTime>) -> Self {
        Self {
            delta,
            rules,
            theta_grid,
            trials: DEFAULT_TRIALS,
            horizon: None,
            master_seed: 0,
            threads: None,
            calibration: CalibrationOptions::default(),
        }
    }
}

/// Largest finite change point of a grid, or 1.
fn max_finite(grid: &[ChangeTime]) -> u64 {
    grid.iter().filter_map(|t| t.finite()).max().unwrap_or(1)
}

/// Rough delay prediction used to size the default horizon.
fn predicted_delay(rule: &StoppingRule<f64>, alpha: f64, theta: u64, mu0: f64, mu1: f64) -> Result<f64> {
    match rule.kind() {
        RuleKind::UniformPrior => uniform_delay(alpha, theta, mu0, mu1),
        RuleKind::CusumMl | RuleKind::ShiryaevRoberts => cusum_delay_approx(alpha, mu1),
        RuleKind::BayesGeometric => bayes_delay_approx(alpha, rule.gamma().unwrap_or(0.5), mu1),
        RuleKind::RobustBoundary => {
            let spec = rule.boundary().expect("robust rule has a boundary");
            Ok(solve_delay_offset(spec, rule.threshold().value(), theta, mu1)?.value)
        }
    }
}

/// Validates `config` and resolves thresholds and the horizon.
pub fn resolve(config: &ExperimentConfig) -> Result<ResolvedExperiment> {
    if config.rules.is_empty() {
        return Err(Error::Config("rule list is empty".into()));
    }
    if config.theta_grid.is_empty() {
        return Err(Error::Config("theta grid is empty".into()));
    }
    if config.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if config.threads == Some(0) {
        return Err(Error::Config("threads must be at least 1".into()));
    }
    if let Some(bad) = config.theta_grid.iter().find(|t| **t == ChangeTime::At(0)) {
        return Err(Error::Config(format!("change points must be at least 1, got {bad}")));
    }
    let model = GaussianShift::new(config.delta)?;
    let mut rules = Vec::with_capacity(config.rules.len());
    let mut labels = BTreeSet::new();
    for rc in &config.rules {
        let label = rc.label();
        if !labels.insert(label.clone()) {
            return Err(Error::Config(format!("duplicate rule label `{label}`")));
        }
        rules.push((label, rc.resolve(&config.calibration)?));
    }
    let max_theta = max_finite(&config.theta_grid);
    let horizon = match config.horizon {
        Some(h) => h,
        None => {
            let mut worst: f64 = 0.0;
            for ((_, rule), rc) in rules.iter().zip(&config.rules) {
                worst = worst.max(predicted_delay(rule, rc.alpha, max_theta, model.mu0(), model.mu1())?);
            }
            (10.0 * (max_theta as f64 + worst)).ceil() as u64
        }
    };
    if horizon <= max_theta {
        return Err(Error::Config(format!(
            "horizon {horizon} must exceed the largest change point {max_theta}"
        )));
    }
    Ok(ResolvedExperiment {
        model,
        rules,
        theta_grid: config.theta_grid.clone(),
        trials: config.trials,
        horizon,
        master_seed: config.master_seed,
        threads: config.threads,
    })
}

/// A validated sweep with thresholds and horizon fixed.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub model: GaussianShift<f64>,
    pub rules: Vec<(String, StoppingRule<f64>)>,
    pub theta_grid: Vec<ChangeTime>,
    pub trials: usize,
    pub horizon: u64,
    pub master_seed: u64,
    pub threads: Option<usize>,
}

/// What happened in one trial for one (rule, change point) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellOutcome {
    /// Stopped before the change.
    FalseAlarm,
    /// Stopped `delay` steps after the change point.
    Detected(u64),
    /// No alarm by the horizon.
    Censored,
}

/// Per-cell summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub rule: String,
    pub theta: ChangeTime,
    pub alpha_hat: f64,
    pub alpha_se: f64,
    /// Mean of `(tau - theta)_+` over uncensored trials.
    pub delta_hat: f64,
    pub delta_se: f64,
    /// Mean with censored trials counted at the horizon, a lower bound.
    pub delta_imputed: f64,
    pub censored: usize,
    pub trials: usize,
    pub seed: u64,
    /// More than a tenth of the trials were censored.
    pub censoring_warning: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub horizon: u64,
    pub master_seed: u64,
    rule_labels: Vec<String>,
    /// Grid in the order of the per-trial outcomes.
    grid: Vec<ChangeTime>,
    /// `outcomes[trial][rule * grid.len() + cell]`.
    outcomes: Vec<Vec<CellOutcome>>,
}

impl ExperimentResult {
    pub fn row(&self, rule: &str, theta: ChangeTime) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.rule == rule && r.theta == theta)
    }

    pub fn rule_labels(&self) -> &[String] {
        &self.rule_labels
    }

    pub fn trials(&self) -> usize {
        self.outcomes.len()
    }

    /// Outcome of `trial` for a rule and change point.
    pub fn outcome(&self, trial: usize, rule: &str, theta: ChangeTime) -> Option<CellOutcome> {
        let r = self.rule_labels.iter().position(|l| l == rule)?;
        let c = self.grid.iter().position(|t| *t == theta)?;
        Some(self.outcomes.get(trial)?[r * self.grid.len() + c])
    }
}

/// Runs a configured sweep.
pub fn sweep(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let resolved = resolve(config)?;
    run_grid(
        &resolved.model,
        &resolved.rules,
        &resolved.theta_grid,
        resolved.trials,
        resolved.horizon,
        resolved.master_seed,
        resolved.threads,
    )
}

fn in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs every rule over every change point of `grid` for `trials` trials.
pub fn run_grid<M: ChangeModel<f64>>(
    model: &M,
    rules: &[(String, StoppingRule<f64>)],
    grid: &[ChangeTime],
    trials: usize,
    horizon: u64,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<ExperimentResult> {
    validate_model(model)?;
    if rules.is_empty() || grid.is_empty() || trials == 0 {
        return Err(Error::Config("sweep needs rules, change points and trials".into()));
    }
    if horizon <= max_finite(grid) {
        return Err(Error::Config(format!("horizon {horizon} must exceed every finite change point")));
    }
    let prototypes: Vec<Monitor<f64>> = rules
        .iter()
        .map(|(_, r)| Monitor::with_table(r.clone(), horizon))
        .collect();
    let outcomes: Vec<Vec<CellOutcome>> = in_pool(threads, || {
        (0..trials)
            .into_par_iter()
            .map(|i| run_trial(model, &prototypes, grid, horizon, trial_seed(master_seed, i as u64)))
            .collect::<Result<Vec<_>>>()
    })??;
    let labels: Vec<String> = rules.iter().map(|(l, _)| l.clone()).collect();
    let mut rows = Vec::with_capacity(labels.len() * grid.len());
    for (r, label) in labels.iter().enumerate() {
        for (c, &theta) in grid.iter().enumerate() {
            rows.push(summarize(
                label,
                theta,
                outcomes.iter().map(|o| o[r * grid.len() + c]),
                trials,
                horizon,
                master_seed,
            ));
        }
    }
    Ok(ExperimentResult {
        rows,
        horizon,
        master_seed,
        rule_labels: labels,
        grid: grid.to_vec(),
        outcomes,
    })
}

fn summarize(
    label: &str,
    theta: ChangeTime,
    outcomes: impl Iterator<Item = CellOutcome>,
    trials: usize,
    horizon: u64,
    seed: u64,
) -> ExperimentRow {
    let imputed_delay = theta.finite().map_or(0, |t| horizon + 1 - t) as f64;
    let (mut false_alarms, mut censored) = (0usize, 0usize);
    let (mut sum, mut sum_sq, mut imputed) = (0.0, 0.0, 0.0);
    for o in outcomes {
        match o {
            CellOutcome::FalseAlarm => false_alarms += 1,
            CellOutcome::Detected(d) => {
                let d = d as f64;
                sum += d;
                sum_sq += d * d;
                imputed += d;
            }
            CellOutcome::Censored => {
                censored += 1;
                imputed += imputed_delay;
            }
        }
    }
    let n = trials as f64;
    let alpha_hat = false_alarms as f64 / n;
    let kept = (trials - censored) as f64;
    let (delta_hat, delta_se) = if kept > 0.0 {
        let mean = sum / kept;
        let var = if kept > 1.0 { (sum_sq - kept * mean * mean).max(0.0) / (kept - 1.0) } else { 0.0 };
        (mean, (var / kept).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    ExperimentRow {
        rule: label.to_string(),
        theta,
        alpha_hat,
        alpha_se: (alpha_hat * (1.0 - alpha_hat) / n).sqrt(),
        delta_hat,
        delta_se,
        delta_imputed: imputed / n,
        censored,
        trials,
        seed,
        censoring_warning: censored as f64 > CENSORING_WARNING_FRACTION * n,
    }
}

/// One trial: outcomes laid out rule-major over `grid`.
fn run_trial<M: ChangeModel<f64>>(
    model: &M,
    prototypes: &[Monitor<f64>],
    grid: &[ChangeTime],
    horizon: u64,
    seed: u64,
) -> Result<Vec<CellOutcome>> {
    let n_rules = prototypes.len();
    let mut out = vec![CellOutcome::Censored; n_rules * grid.len()];
    let mut monitors: Vec<Monitor<f64>> = prototypes.to_vec();
    // alarm step along the no-change prefix
    let mut pre_stop: Vec<Option<u64>> = vec![None; n_rules];
    let mut pre = stream_rng(seed, PRE_CHANGE_STREAM);
    let mut step = 0u64;
    let mut advance_to = |target: u64, monitors: &mut [Monitor<f64>], pre_stop: &mut [Option<u64>]| -> Result<()> {
        while step < target && pre_stop.iter().any(Option::is_none) {
            step += 1;
            let llr = model.llr(model.sample_pre(&mut pre));
            for (m, s) in monitors.iter_mut().zip(pre_stop.iter_mut()) {
                if s.is_none() && m.observe(llr)? {
                    *s = Some(step);
                }
            }
        }
        Ok(())
    };
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by_key(|&c| grid[c].finite().unwrap_or(u64::MAX));
    for c in order {
        match grid[c] {
            ChangeTime::Never => {
                advance_to(horizon, &mut monitors, &mut pre_stop)?;
                for r in 0..n_rules {
                    out[r * grid.len() + c] = match pre_stop[r] {
                        Some(_) => CellOutcome::FalseAlarm,
                        None => CellOutcome::Censored,
                    };
                }
            }
            ChangeTime::At(theta) => {
                advance_to(theta - 1, &mut monitors, &mut pre_stop)?;
                let mut branch: Vec<(usize, Monitor<f64>)> = Vec::new();
                for r in 0..n_rules {
                    match pre_stop[r] {
                        Some(_) => out[r * grid.len() + c] = CellOutcome::FalseAlarm,
                        None => branch.push((r, monitors[r].clone())),
                    }
                }
                let mut post = stream_rng(seed, post_change_stream(theta));
                let mut k = theta;
                while !branch.is_empty() && k <= horizon {
                    let llr = model.llr(model.sample_post(&mut post));
                    let mut i = 0;
                    while i < branch.len() {
                        if branch[i].1.observe(llr)? {
                            out[branch[i].0 * grid.len() + c] = CellOutcome::Detected(k - theta);
                            branch.swap_remove(i);
                        } else {
                            i += 1;
                        }
                    }
                    k += 1;
                }
            }
        }
    }
    Ok(out)
}

/// `(alpha_hat, binomial se)` for one rule and change point.
pub fn estimate_false_alarm<M: ChangeModel<f64>>(
    model: &M,
    rule: &StoppingRule<f64>,
    theta: ChangeTime,
    trials: usize,
    horizon: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    validate_model(model)?;
    if theta == ChangeTime::At(0) {
        return Err(Error::Config("theta must be at least 1".into()));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let last = match theta {
        ChangeTime::At(t) => t - 1,
        ChangeTime::Never => horizon,
    };
    let prototype = Monitor::with_table(rule.clone(), last.max(1));
    let alarms: usize = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let mut m = prototype.clone();
            let mut rng = stream_rng(trial_seed(seed, i as u64), PRE_CHANGE_STREAM);
            for _ in 0..last {
                if m.observe(model.llr(model.sample_pre(&mut rng)))? {
                    return Ok(1);
                }
            }
            Ok(0)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    let p = alarms as f64 / trials as f64;
    Ok((p, (p * (1.0 - p) / trials as f64).sqrt()))
}

/// Delay estimate for one rule and change point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEstimate {
    pub delta_hat: f64,
    pub se: f64,
    pub delta_imputed: f64,
    pub censored: usize,
    pub censoring_warning: bool,
}

pub fn estimate_delay<M: ChangeModel<f64>>(
    model: &M,
    rule: &StoppingRule<f64>,
    theta: u64,
    trials: usize,
    horizon: u64,
    seed: u64,
) -> Result<DelayEstimate> {
    if theta == 0 {
        return Err(Error::Config("theta must be at least 1".into()));
    }
    let rules = [(rule.kind().name().to_string(), rule.clone())];
    let result = run_grid(model, &rules, &[ChangeTime::At(theta)], trials, horizon, seed, None)?;
    let row = &result.rows[0];
    Ok(DelayEstimate {
        delta_hat: row.delta_hat,
        se: row.delta_se,
        delta_imputed: row.delta_imputed,
        censored: row.censored,
        censoring_warning: row.censoring_warning,
    })
}

/// Geometric-prior average of one rule's metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesAverage {
    pub rule: String,
    pub gamma: f64,
    pub avg_alpha: f64,
    pub alpha_se: f64,
    pub avg_delta: f64,
    pub delta_se: f64,
    /// Prior mass covered by the grid, `1 - (1 - gamma)^max_theta`.
    pub weight_sum: f64,
    pub tail_mass: f64,
    /// The prior puts more than 1% of its mass beyond the grid.
    pub tail_warning: bool,
    /// Some cell had censored trials; their delays were taken at the horizon.
    pub imputed: bool,
}

/// Weights of the geometric prior `gamma (1 - gamma)^(theta - 1)` on the
/// sorted finite grid: each grid point carries the mass of the change
/// points up to the next grid point, the last one its own mass. On a grid
/// of consecutive integers these are the prior probabilities themselves.
pub fn prior_weights(grid: &[u64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let keep = |t: u64| if gamma == 1.0 { if t == 0 { 1.0 } else { 0.0 } } else { ((t as f64) * (-gamma).ln_1p()).exp() };
    Ok(grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let next = grid.get(i + 1).copied().unwrap_or(t + 1);
            keep(t - 1) - keep(next - 1)
        })
        .collect())
}

/// Per-trial prior-weighted sums of false alarms and delays for one rule.
fn weighted_trials(result: &ExperimentResult, rule: &str, gamma: f64) -> Result<(Vec<(f64, f64)>, f64, bool)> {
    let r = result
        .rule_labels
        .iter()
        .position(|l| l == rule)
        .ok_or_else(|| Error::Config(format!("no rule `{rule}` in the result")))?;
    let mut cells: Vec<(usize, u64)> = result
        .grid
        .iter()
        .enumerate()
        .filter_map(|(c, t)| t.finite().map(|t| (c, t)))
        .collect();
    cells.sort_by_key(|&(_, t)| t);
    cells.dedup_by_key(|&mut (_, t)| t);
    if cells.is_empty() {
        return Err(Error::Config("Bayes averages need finite change points".into()));
    }
    let thetas: Vec<u64> = cells.iter().map(|&(_, t)| t).collect();
    let weights = prior_weights(&thetas, gamma)?;
    let width = result.grid.len();
    let mut imputed = false;
    let per_trial = result
        .outcomes
        .iter()
        .map(|o| {
            let (mut a, mut d) = (0.0, 0.0);
            for (&(c, t), &w) in cells.iter().zip(&weights) {
                match o[r * width + c] {
                    CellOutcome::FalseAlarm => a += w,
                    CellOutcome::Detected(k) => d += w * k as f64,
                    CellOutcome::Censored => {
                        imputed = true;
                        d += w * (result.horizon + 1 - t) as f64;
                    }
                }
            }
            (a, d)
        })
        .collect();
    Ok((per_trial, weights.iter().sum(), imputed))
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 { xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

/// Geometric-prior averages of every rule, normalized by the covered mass.
pub fn bayes_average(result: &ExperimentResult, gamma: f64) -> Result<Vec<BayesAverage>> {
    result
        .rule_labels
        .iter()
        .map(|rule| {
            let (per_trial, weight_sum, imputed) = weighted_trials(result, rule, gamma)?;
            let (a, a_se) = mean_se(per_trial.iter().map(|p| p.0));
            let (d, d_se) = mean_se(per_trial.iter().map(|p| p.1));
            let tail_mass = 1.0 - weight_sum;
            Ok(BayesAverage {
                rule: rule.clone(),
                gamma,
                avg_alpha: a / weight_sum,
                alpha_se: a_se / weight_sum,
                avg_delta: d / weight_sum,
                delta_se: d_se / weight_sum,
                weight_sum,
                tail_mass,
                tail_warning: tail_mass > PRIOR_TAIL_WARNING,
                imputed,
            })
        })
        .collect()
}

/// Difference of prior-averaged delays `a - b` with its paired standard error.
pub fn paired_delay_difference(result: &ExperimentResult, gamma: f64, a: &str, b: &str) -> Result<(f64, f64)> {
    let (ta, wa, _) = weighted_trials(result, a, gamma)?;
    let (tb, _, _) = weighted_trials(result, b, gamma)?;
    let (d, se) = mean_se(ta.iter().zip(&tb).map(|(x, y)| x.1 - y.1));
    Ok((d / wa, se / wa))
}

/// Writes `rule,theta,alpha_hat,alpha_se,delta_hat,delta_se,censored,trials,seed`
/// after `# key = value` comment lines.
pub fn write_results_csv<W: Write>(mut out: W, result: &ExperimentResult, comments: &[(String, String)]) -> Result<()> {
    for (k, v) in comments {
        writeln!(out, "# {k} = {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rule", "theta", "alpha_hat", "alpha_se", "delta_hat", "delta_se", "censored", "trials", "seed"])?;
    for r in &result.rows {
        w.write_record([
            r.rule.clone(),
            r.theta.to_string(),
            r.alpha_hat.to_string(),
            r.alpha_se.to_string(),
            r.delta_hat.to_string(),
            r.delta_se.to_string(),
            r.censored.to_string(),
            r.trials.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
