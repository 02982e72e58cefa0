//! Dispatch from a configuration to the library pipelines.

use rayon::prelude::*;

use csp_core::codecs::{empirical_rate_distortion, enumerate_codebook, BlockCode, Codebook};
use csp_core::csp::{
    code_failure_prob, csp_decode, per_letter_error, universal_bound, BoundInputs, CspExperiment, CspSetup,
    NoiseModel, TrialRecord, UcspSearchSpace,
};
use csp_core::dimensions::{estimate_id_process, operational_rd_curve};
use csp_core::measurement::{measure, noise_sigma_for, sample_matrix_scaled, NoiseSpec};
use csp_core::rng::stream_seed;
use csp_core::source_models::{sample_block, SourceKind, SourceSpec};

use crate::config::{DimTarget, ExperimentConfig, ExperimentKind};
use crate::error::{LabError, LabResult};
use crate::report::{fmt_f64, ExperimentResult};

pub const CSP_HEADER: [&str; 13] = [
    "trial",
    "seed",
    "n",
    "m",
    "R_bits",
    "D_target",
    "eta",
    "alpha",
    "per_letter_error",
    "threshold",
    "success",
    "residual",
    "noise_sigma",
];

/// Run an experiment on a pool of `config.threads` workers. The output does
/// not depend on the worker count.
pub fn run(config: &ExperimentConfig) -> LabResult<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| LabError::Runtime(e.to_string()))?;
    pool.install(|| match config.kind {
        ExperimentKind::Sample => run_sample(config),
        ExperimentKind::CodecEval => run_codec_eval(config),
        ExperimentKind::CspRun => run_csp(config),
        ExperimentKind::UcspRun => run_ucsp(config),
        ExperimentKind::SweepM => run_sweep(config),
        ExperimentKind::DimEstimate => run_dim(config),
        ExperimentKind::Bounds => run_bounds(config),
    })
}

/// Dimension of the source family in its parametric form.
pub fn nominal_dimension(spec: &SourceSpec) -> f64 {
    match spec.kind {
        SourceKind::SparseIid | SourceKind::PiecewiseMarkov => spec.jump_prob,
        SourceKind::ContinuousIid => 1.0,
    }
}

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_owned(), value.to_string())
}

fn strings<const N: usize>(xs: [&str; N]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn source_meta(config: &ExperimentConfig) -> Vec<(String, String)> {
    vec![kv("source", config.source.kind), kv("p", config.source.jump_prob)]
}

fn setup(config: &ExperimentConfig, eta: f64) -> CspSetup {
    CspSetup {
        eta,
        alpha: config.alpha,
        noise: config.noise,
        normalize_columns: config.normalize_columns,
        code_failure_prob: config.epsilon_code,
        measurements: config.measurements,
    }
}

fn csp_row(r: &TrialRecord) -> Vec<String> {
    vec![
        r.trial.to_string(),
        r.seed.to_string(),
        r.n.to_string(),
        r.m.to_string(),
        fmt_f64(r.rate),
        fmt_f64(r.distortion_target),
        fmt_f64(r.eta),
        fmt_f64(r.alpha),
        fmt_f64(r.per_letter_error),
        fmt_f64(r.threshold),
        r.success.to_string(),
        fmt_f64(r.residual),
        fmt_f64(r.noise_sigma),
    ]
}

fn csp_meta(config: &ExperimentConfig, exp: &CspExperiment) -> Vec<(String, String)> {
    let mut meta = source_meta(config);
    meta.extend([
        kv("n", exp.code.blocklength()),
        kv("b", exp.code.value_bits()),
        kv("max_jumps", exp.code.max_jumps()),
        kv("codebook_size", exp.codebook.len()),
        kv("m", exp.m),
        kv("delta", fmt_f64(exp.bound.delta)),
        kv("tau", fmt_f64(exp.bound.tau)),
        kv("noise_term", fmt_f64(exp.bound.noise_term)),
        kv("probability_bound", fmt_f64(exp.bound.probability_bound)),
        kv("seed", config.seed),
    ]);
    meta
}

fn run_sample(config: &ExperimentConfig) -> LabResult<ExperimentResult> {
    let x = sample_block(&config.source, config.n, config.seed)?;
    let mut meta = source_meta(config);
    meta.extend([kv("n", config.n), kv("seed", config.seed)]);
    let rows = x.iter().map(|&v| vec![fmt_f64(v)]).collect();
    ExperimentResult::new(ExperimentKind::Sample, meta, Vec::new(), rows)
}

fn run_codec_eval(config: &ExperimentConfig) -> LabResult<ExperimentResult> {
    let code = config.build_code()?;
    let report = empirical_rate_distortion(&code, &config.source, config.trials, config.seed, config.codec_threshold)?;
    let mut meta = source_meta(config);
    meta.extend([
        kv("lower", config.source.value_dist.lower()),
        kv("upper", config.source.value_dist.upper()),
        kv("n", config.n),
        kv("codec", code.kind().name()),
        kv("b", code.value_bits()),
        kv("max_jumps", code.max_jumps()),
        kv("seed", config.seed),
    ]);
    let header = strings(["trial", "seed", "rate", "distortion", "threshold", "excess"]);
    let rows = report
        .trials
        .iter()
        .map(|t| {
            vec![
                t.trial.to_string(),
                t.seed.to_string(),
                fmt_f64(t.rate),
                fmt_f64(t.distortion),
                fmt_f64(report.threshold),
                t.excess.to_string(),
            ]
        })
        .collect();
    ExperimentResult::new(ExperimentKind::CodecEval, meta, header, rows)
}

fn run_csp(config: &ExperimentConfig) -> LabResult<ExperimentResult> {
    let code = config.build_code()?;
    let exp = CspExperiment::new(config.source, code, setup(config, config.eta), config.codebook_cap)?;
    let records = exp.run_trials(config.trials, config.seed)?;
    let rows = records.iter().map(csp_row).collect();
    ExperimentResult::new(ExperimentKind::CspRun, csp_meta(config, &exp), strings(CSP_HEADER), rows)
}

fn run_ucsp(config: &ExperimentConfig) -> LabResult<ExperimentResult> {
    let code = config.build_code()?;
    let budget = config.ucsp.budget.unwrap_or_else(|| code.max_codeword_len());
    let space = UcspSearchSpace::build(&code, budget, config.ucsp.cap)?;
    let mut exp = CspExperiment::new(config.source, code, setup(config, config.eta), config.codebook_cap)?;
    if let Some(slack) = config.ucsp.rate_slack {
        if config.noise != NoiseModel::None {
            return Err(LabError::config("ucsp.rate_slack", "the universal guarantee assumes noiseless measurements"));
        }
        let inputs = BoundInputs {
            n: exp.code.blocklength(),
            m: exp.m,
            rate: exp.codebook.declared_rate(),
            distortion: exp.code.worst_case_distortion(),
            eta: config.eta,
            alpha: config.alpha,
            code_failure_prob: match config.epsilon_code {
                Some(e) => e,
                None => code_failure_prob(&exp.spec, &exp.code)?,
            },
        };
        exp.bound = universal_bound(&inputs, slack)?;
    }
    let rows = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let obs = exp.observe(t, config.seed)?;
            let universal = space.decode(&obs.y, &obs.sys)?;
            let exhaustive = csp_decode(&obs.y, &obs.sys, &exp.codebook)?;
            let mut row = csp_row(&exp.record(t, &obs, &universal));
            row.push((universal.reconstruction == exhaustive.reconstruction).to_string());
            Ok(row)
        })
        .collect::<csp_core::Result<Vec<_>>>()?;
    let mut meta = csp_meta(config, &exp);
    meta.extend([kv("budget", space.budget()), kv("search_space", space.len())]);
    let mut header = strings(CSP_HEADER);
    header.push("matches_csp".into());
    ExperimentResult::new(ExperimentKind::UcspRun, meta, header, rows)
}

/// Measurements for a ratio `m/n`, at least one.
pub fn measurements_for_ratio(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64 * (1.0 - 1e-12)).ceil() as usize).max(1)
}

fn sweep_noise(config: &ExperimentConfig, m: usize) -> LabResult<NoiseSpec> {
    Ok(match config.noise {
        NoiseModel::None => NoiseSpec::None,
        NoiseModel::Bounded { sigma_m, eps_m } => NoiseSpec::GaussianIid {
            sigma: noise_sigma_for(m, sigma_m, eps_m)?,
        },
    })
}

/// Success of one trial at `m` measurements. The block, matrix and noise
/// streams depend on the trial only, so the matrices at growing `m` share
/// their leading rows.
fn sweep_trial(
    config: &ExperimentConfig,
    codebook: &Codebook,
    m: usize,
    noise: NoiseSpec,
    trial: usize,
) -> csp_core::Result<(u64, f64)> {
    let seed = stream_seed(config.seed, trial as u64);
    let x = sample_block(&config.source, config.n, stream_seed(seed, 0))?;
    let sys = sample_matrix_scaled(m, config.n, stream_seed(seed, 1), config.normalize_columns)?;
    let y = measure(&sys, &x, noise, stream_seed(seed, 2))?;
    let result = csp_decode(&y, &sys, codebook)?;
    Ok((seed, per_letter_error(&x, &result.reconstruction)))
}

fn run_sweep(config: &ExperimentConfig) -> LabResult<ExperimentResult> {
    let code: BlockCode = config.build_code()?;
    let codebook = enumerate_codebook(&code, config.codebook_cap)?;
    let mut rows = Vec::with_capacity(config.sweep.ratios.len() * config.trials);
    for &ratio in &config.sweep.ratios {
        let m = measurements_for_ratio(ratio, config.n);
        let noise = sweep_noise(config, m)?;
        let outcomes = (0..config.trials)
            .into_par_iter()
            .map(|t| sweep_trial(config, &codebook, m, noise, t))
            .collect::<csp_core::Result<Vec<_>>>()?;
        for (t, (seed, err)) in outcomes.into_iter().enumerate() {
            rows.push(vec![
                fmt_f64(ratio),
                m.to_string(),
                t.to_string(),
                seed.to_string(),
                fmt_f64(err),
                (err <= config.sweep.tolerance).to_string(),
            ]);
        }
    }
    let mut meta = source_meta(config);
    meta.extend([
        kv("n", config.n),
        kv("codec", code.kind().name()),
        kv("b", code.value_bits()),
        kv("max_jumps", code.max_jumps()),
        kv("codebook_size", codebook.len()),
        kv("tolerance", fmt_f64(config.sweep.tolerance)),
        kv("nominal_dim", fmt_f64(nominal_dimension(&config.source))),
        kv("seed", config.seed),
    ]);
    let header = strings(["ratio", "m", "trial", "seed", "per_letter_error", "success"]);
    ExperimentResult::new(ExperimentKind::SweepM, meta, header, rows)
}

/// Split CSV text written by a library writer into header and rows.
fn split_csv(bytes: Vec<u8>) -> LabResult<(Vec<String>, Vec<Vec<String>>)> {
    let text = String::from_utf8(bytes).map_err(|e| LabError::Runtime(e.to_string()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    Ok((header, rows))
}

fn run_dim(config: &ExperimentConfig) -> LabResult<ExperimentResult> {
    let dim = &config.dim;
    let mut meta = source_meta(config);
    let mut buf = Vec::new();
    let io = |e: std::io::Error| LabError::Runtime(e.to_string());
    match dim.target {
        DimTarget::Id => {
            let est = estimate_id_process(&config.source, dim.n_samples, dim.k, &dim.b_grid, config.seed)?;
            est.write_csv(&mut buf).map_err(io)?;
            meta.extend([kv("target", "id"), kv("k", dim.k), kv("n_samples", dim.n_samples)]);
        }
        DimTarget::Rdd => {
            let curve = operational_rd_curve(&config.source, config.n, &dim.rd_bits, dim.rd_trials, config.seed)?;
            curve.write_csv(&mut buf).map_err(io)?;
            meta.extend([kv("target", "rdd"), kv("n", config.n), kv("trials", dim.rd_trials)]);
        }
    }
    meta.extend([
        kv("nominal_dim", fmt_f64(nominal_dimension(&config.source))),
        kv("seed", config.seed),
    ]);
    let (header, rows) = split_csv(buf)?;
    ExperimentResult::new(ExperimentKind::DimEstimate, meta, header, rows)
}

fn run_bounds(config: &ExperimentConfig) -> LabResult<ExperimentResult> {
    let mut rows = Vec::with_capacity(config.bound_etas.len());
    let mut codebook_size = 0;
    for &eta in &config.bound_etas {
        let code = config.build_code()?;
        let exp = CspExperiment::new(config.source, code, setup(config, eta), config.codebook_cap)?;
        codebook_size = exp.codebook.len();
        let records = exp.run_trials(config.trials, config.seed)?;
        let failures = records.iter().filter(|r| !r.success).count();
        let b = &exp.bound;
        rows.push(vec![
            fmt_f64(eta),
            exp.m.to_string(),
            fmt_f64(b.delta),
            fmt_f64(b.tau),
            fmt_f64(b.distortion_threshold),
            fmt_f64(b.probability_bound),
            fmt_f64(b.noise_term),
            config.trials.to_string(),
            failures.to_string(),
            fmt_f64(failures as f64 / config.trials as f64),
        ]);
    }
    let mut meta = source_meta(config);
    meta.extend([
        kv("n", config.n),
        kv("codebook_size", codebook_size),
        kv("alpha", fmt_f64(config.alpha)),
        kv("seed", config.seed),
    ]);
    let header = strings([
        "eta",
        "m",
        "delta",
        "tau",
        "threshold",
        "probability_bound",
        "noise_term",
        "trials",
        "failures",
        "empirical_failure_rate",
    ]);
    ExperimentResult::new(ExperimentKind::Bounds, meta, header, rows)
}

/// Whether a codebook would exceed the configured cap.
pub fn predicted_codebook_size(config: &ExperimentConfig) -> LabResult<u128> {
    Ok(config.build_code()?.predicted_codebook_size())
}
