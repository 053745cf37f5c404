//! Data series behind the four figures: three single trajectories with the
//! change at 80 and the envelope CDFs and quantiles for three values of eps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rcd_core::calibration::{
    quantile_table_with_samples, tail_bound, tail_bound_min_x, write_quantile_table, CalibrationOptions,
    EnvelopeLaw, EnvelopeSampler,
};
use rcd_core::detectors::{trace_llrs, write_trajectory_csv};
use rcd_core::model::Observations;
use rcd_core::{BoundarySpec, ChangeModel, ChangeTime, Error, GaussianShift, Result, StoppingRule};

pub const CHANGE_POINT: u64 = 80;
pub const TRACE_HORIZON: u64 = 250;
pub const ALPHA: f64 = 0.05;
pub const GAMMA: f64 = 0.005;
pub const EPSILONS: [f64; 3] = [0.01, 0.2, 1.0];
pub const QUANTILE_ALPHAS: [f64; 8] = [0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3];

pub struct FigureOptions {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub samples: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_comments<W: Write>(out: &mut W, comments: &[(String, String)]) -> Result<()> {
    for (k, v) in comments {
        writeln!(out, "# {k} = {v}")?;
    }
    Ok(())
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

/// Writes the series of figure `which` and returns the files written.
pub fn generate(which: u8, opts: &FigureOptions) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&opts.out_dir)?;
    match which {
        2 => trajectories(2, &[("uniform_prior", StoppingRule::uniform_prior(ALPHA)?)], opts),
        3 => trajectories(3, &[("bayes_geometric", StoppingRule::bayes_geometric(GAMMA, ALPHA)?)], opts),
        4 => trajectories(
            4,
            &[
                ("cusum_ml", StoppingRule::cusum(ALPHA)?),
                ("shiryaev_roberts", StoppingRule::shiryaev_roberts(1.0 / ALPHA)?),
            ],
            opts,
        ),
        5 => envelope(opts),
        other => Err(Error::Usage(format!("unknown figure {other}; expected 2, 3, 4 or 5"))),
    }
}

/// Each rule traced over the same simulated path.
fn trajectories(which: u8, rules: &[(&str, StoppingRule<f64>)], opts: &FigureOptions) -> Result<Vec<PathBuf>> {
    let model = GaussianShift::new(1.0)?;
    let llrs: Vec<f64> = Observations::new(&model, ChangeTime::At(CHANGE_POINT), opts.seed)
        .take(TRACE_HORIZON as usize)
        .map(|x| model.llr(x))
        .collect();
    let mut written = Vec::new();
    for (name, rule) in rules {
        let points = trace_llrs(rule, llrs.iter().copied())?;
        let mut comments = vec![
            kv("figure", which),
            kv("rule", name),
            kv("alpha", ALPHA),
            kv("threshold", rule.threshold().value()),
            kv("delta", model.delta()),
            kv("theta", CHANGE_POINT),
            kv("horizon", TRACE_HORIZON),
            kv("seed", opts.seed),
        ];
        if let Some(g) = rule.gamma() {
            comments.insert(3, kv("gamma", g));
        }
        let path = opts.out_dir.join(format!("fig{which}_{name}.csv"));
        write_trajectory_csv(create(&path)?, &points, &comments)?;
        written.push(path);
    }
    Ok(written)
}

/// Exact and simulated CDFs of the envelope plus quantile tables.
fn envelope(opts: &FigureOptions) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (i, &eps) in EPSILONS.iter().enumerate() {
        let spec = BoundarySpec::new(1, eps)?;
        let options = CalibrationOptions {
            samples: opts.samples,
            seed: opts.seed.wrapping_add(i as u64),
            ..Default::default()
        };
        let law = EnvelopeLaw::new(&spec, options.cdf_tol)?;
        let samples = EnvelopeSampler::new(&spec, options.sample_tol)?.sample_many(options.samples, options.seed);
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let comments = vec![
            kv("figure", 5),
            kv("m", 1),
            kv("epsilon", eps),
            kv("samples", options.samples),
            kv("seed", options.seed),
        ];

        let path = opts.out_dir.join(format!("fig5_cdf_eps{eps}.csv"));
        let mut out = create(&path)?;
        write_comments(&mut out, &comments)?;
        writeln!(out, "x,cdf_product,cdf_mc,cdf_bound")?;
        for j in 0..=250 {
            let x = -1.0 + 0.05 * j as f64;
            let exact = law.log_cdf(x)?.value();
            let mc = sorted.partition_point(|&s| s < x) as f64 / sorted.len() as f64;
            let bound = if x > tail_bound_min_x() {
                (1.0 - tail_bound(&spec, x)?).to_string()
            } else {
                String::new()
            };
            writeln!(out, "{x},{exact},{mc},{bound}")?;
        }
        out.flush()?;
        written.push(path);

        let rows = quantile_table_with_samples(&spec, &QUANTILE_ALPHAS, &samples, &options)?;
        let path = opts.out_dir.join(format!("fig5_quantiles_eps{eps}.csv"));
        let mut out = create(&path)?;
        write_comments(&mut out, &comments)?;
        write_quantile_table(&mut out, &rows)?;
        written.push(path);
    }
    Ok(written)
}
