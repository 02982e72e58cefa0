//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use csp_core::codecs::{elias_gamma_decode, elias_gamma_encode};
use csp_core::dimensions::{binary_entropy, estimate_id_process, estimate_rdd, operational_rd_curve, shannon_lower_bound};
use csp_core::measurement::{chi2_tail_bounds, max_singular_value, sample_matrix, sigma_max_tail_bound};
use csp_core::rng::{stream_seed, GaussianStream};
use csp_core::source_models::{ContinuousDist, SourceSpec};
use csp_lab::report::sweep_curve;
use csp_lab::{run, ExperimentConfig, ExperimentKind, ExperimentResult};

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Values later criteria compare against.
#[derive(Default)]
struct Shared {
    process_id: Option<f64>,
    rdd: Option<f64>,
}

fn unit() -> ContinuousDist {
    ContinuousDist::uniform(0.0, 1.0).unwrap()
}

fn mc_sigma(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

fn lab(kind: ExperimentKind, text: &str) -> ExperimentResult {
    let config = ExperimentConfig::parse(kind, text, &[]).unwrap();
    run(&config).unwrap()
}

fn count(result: &ExperimentResult, column: &str, value: &str) -> usize {
    result.column(column).unwrap().iter().filter(|&&v| v == value).count()
}

fn chi2_tails() -> Outcome {
    let trials = 100_000;
    let mut worst = f64::NEG_INFINITY;
    let mut pass = true;
    for (i, &m) in [10usize, 50, 200].iter().enumerate() {
        let mut stream = GaussianStream::new(stream_seed(SEED, i as u64));
        let mut z = vec![0.0; m];
        let sums: Vec<f64> = (0..trials)
            .map(|_| {
                stream.fill(&mut z);
                z.iter().map(|v| v * v).sum()
            })
            .collect();
        for tau in [0.1, 0.3, 0.5] {
            let (lower_bound, upper_bound) = chi2_tail_bounds(m, tau).unwrap();
            let mf = m as f64;
            let lower = sums.iter().filter(|&&s| s < mf * (1.0 - tau)).count() as f64 / trials as f64;
            let upper = sums.iter().filter(|&&s| s > mf * (1.0 + tau)).count() as f64 / trials as f64;
            for (freq, bound) in [(lower, lower_bound), (upper, upper_bound)] {
                let slack = bound + 3.0 * mc_sigma(bound.min(1.0), trials) - freq;
                worst = worst.max(-slack);
                pass &= slack >= 0.0;
            }
        }
    }
    outcome(pass, format!("9 (m, tau) pairs, largest excess over bound + 3 se = {worst:.2e}"))
}

fn sigma_max_tail() -> Outcome {
    let (m, n, trials) = (50usize, 200usize, 10_000);
    let level = (n as f64).sqrt() + 2.0 * (m as f64).sqrt();
    let mut events = 0;
    let mut largest: f64 = 0.0;
    for t in 0..trials {
        let s = max_singular_value(&sample_matrix(m, n, stream_seed(SEED, t as u64)).unwrap());
        largest = largest.max(s);
        events += (s >= level) as usize;
    }
    outcome(
        events == 0,
        format!(
            "{events} events in {trials}, largest {largest:.3} vs level {level:.3}, bound {:.2e}",
            sigma_max_tail_bound(m, 1.0)
        ),
    )
}

fn gamma_roundtrip() -> Outcome {
    let mut bad = 0u64;
    for v in 1..=1_000_000u64 {
        let bits = elias_gamma_encode(v).unwrap();
        let expected_len = 2 * v.ilog2() as usize + 1;
        let ok = bits.len() == expected_len && elias_gamma_decode(&bits).unwrap() == (v, expected_len);
        bad += !ok as u64;
    }
    outcome(bad == 0, format!("{bad} mismatches in 1..=1e6"))
}

fn rate_bracket() -> Outcome {
    let (p, b) = (0.1, 8.0);
    let r = lab(
        ExperimentKind::CodecEval,
        "n = 1024\ncodec.b = 8\ncodec.max_jumps = all\ncodec.mode = variable\ntrials = 200\nseed = 4",
    );
    let rates: Vec<f64> = r.column("rate").unwrap().iter().map(|v| v.parse().unwrap()).collect();
    let dists: Vec<f64> = r.column("distortion").unwrap().iter().map(|v| v.parse().unwrap()).collect();
    let rate = rates.iter().sum::<f64>() / rates.len() as f64;
    let d_op = dists.iter().sum::<f64>() / dists.len() as f64;
    let lower = p * shannon_lower_bound(&unit(), d_op);
    let upper = binary_entropy(p) + p * b + 0.15;
    let excess = count(&r, "excess", "true");
    outcome(
        rate >= lower && rate <= upper && excess == 0,
        format!("mean rate {rate:.4} in [{lower:.4}, {upper:.4}], D_op {d_op:.3e}, {excess} excess"),
    )
}

fn id_estimates(shared: &mut Shared) -> Outcome {
    let sparse = SourceSpec::sparse_iid(0.3, unit()).unwrap();
    let markov = SourceSpec::piecewise_markov(0.1, unit()).unwrap();
    let uniform = SourceSpec::continuous_iid(unit()).unwrap();
    let grid: Vec<u32> = (2..=10).collect();
    let sparse_id = estimate_id_process(&sparse, 100_000, 0, &grid, SEED).unwrap().value;
    let markov_grid: Vec<u32> = (2..=8).collect();
    let markov_id = estimate_id_process(&markov, 1 << 22, 1, &markov_grid, SEED).unwrap().value;
    let uniform_id = estimate_id_process(&uniform, 100_000, 0, &grid, SEED).unwrap().value;
    shared.process_id = Some(markov_id);
    let pass = (sparse_id - 0.3).abs() <= 0.05 && (markov_id - 0.1).abs() <= 0.05 && (uniform_id - 1.0).abs() <= 0.05;
    outcome(
        pass,
        format!("sparse {sparse_id:.4} (0.3), markov k=1 {markov_id:.4} (0.1), uniform {uniform_id:.4} (1.0)"),
    )
}

fn rdd_estimate(shared: &mut Shared) -> Outcome {
    let markov = SourceSpec::piecewise_markov(0.1, unit()).unwrap();
    let bits: Vec<u32> = (6..=14).collect();
    let curve = operational_rd_curve(&markov, 1024, &bits, 200, SEED).unwrap();
    let rdd = estimate_rdd(&curve).unwrap();
    shared.rdd = Some(rdd);
    let gap = shared.process_id.map(|id| (rdd - id).abs());
    let pass = (rdd - 0.1).abs() <= 0.05 && gap.is_some_and(|g| g <= 0.08);
    outcome(
        pass,
        format!("rdd {rdd:.4} (0.1), |rdd - process id| = {}", gap.map_or("n/a".into(), |g| format!("{g:.4}"))),
    )
}

/// Failure frequency against `min(1, bound) + 3 se`.
fn recovery(text: &str, need_success: bool) -> Outcome {
    let r = lab(ExperimentKind::CspRun, text);
    let trials = r.rows.len();
    let bound: f64 = r.meta("probability_bound").unwrap().parse().unwrap();
    let capped = bound.min(1.0);
    let failures = count(&r, "success", "false");
    let freq = failures as f64 / trials as f64;
    let allowed = capped + 3.0 * mc_sigma(capped, trials);
    let successes = trials - failures;
    let mut pass = freq <= allowed;
    if need_success {
        pass &= successes * 10 >= trials * 9;
    }
    outcome(
        pass,
        format!(
            "m={} failures {failures}/{trials} (allowed {allowed:.4}), threshold {}, codebook {}",
            r.meta("m").unwrap(),
            r.rows[0][9],
            r.meta("codebook_size").unwrap()
        ),
    )
}

fn ucsp_matches_csp() -> Outcome {
    let r = lab(ExperimentKind::UcspRun, "codec.mode = variable\ntrials = 50\nseed = 9");
    let agree = count(&r, "matches_csp", "true");
    outcome(
        agree == r.rows.len() && r.rows.len() == 50,
        format!(
            "{agree}/50 identical, budget {} bits, {} decodable strings",
            r.meta("budget").unwrap(),
            r.meta("search_space").unwrap()
        ),
    )
}

fn determinism() -> Outcome {
    let configs = [
        (ExperimentKind::Sample, "n = 256"),
        (ExperimentKind::CodecEval, "n = 128\ncodec.max_jumps = all\ncodec.mode = variable\ntrials = 50"),
        (ExperimentKind::CspRun, "trials = 20"),
        (ExperimentKind::CspRun, "trials = 20\nnoise.sigma_m = 0.05"),
        (ExperimentKind::UcspRun, "n = 12\ncodec.mode = variable\ntrials = 10"),
        (ExperimentKind::SweepM, "n = 10\ncodec.max_jumps = 2\ntrials = 20"),
        (ExperimentKind::DimEstimate, "dim.k = 1\ndim.b_grid = 2..5\ndim.n_samples = 60000"),
        (ExperimentKind::DimEstimate, "dim.target = rdd\nn = 256\ndim.rd_trials = 20"),
        (ExperimentKind::Bounds, "n = 12\ntrials = 20"),
    ];
    let mut differing = Vec::new();
    for (kind, text) in configs {
        let csv = |threads: &str| {
            let c = ExperimentConfig::parse(kind, text, &[("threads".into(), threads.into())]).unwrap();
            run(&c).unwrap().to_csv()
        };
        let all = csv("0");
        if all != csv("0") || all != csv("1") || all != csv("8") {
            differing.push(kind.name());
        }
    }
    outcome(
        differing.is_empty(),
        format!("{} configurations rerun at 0, 1 and 8 workers, differing: {differing:?}", configs.len()),
    )
}

fn sweep_shape(shared: &Shared) -> Outcome {
    let r = lab(
        ExperimentKind::SweepM,
        "n = 12\ncodec.b = 3\ncodec.max_jumps = 3\ntrials = 200\nseed = 11",
    );
    let curve = sweep_curve(&r.header, &r.rows).unwrap();
    let rdd = shared.rdd.unwrap_or(f64::NAN);
    let pass = curve.nondecreasing && curve.threshold.is_some_and(|t| t >= rdd);
    let rates: Vec<String> = curve
        .ratios
        .iter()
        .zip(&curve.smoothed)
        .map(|(r, s)| format!("{r}:{s:.2}"))
        .collect();
    outcome(
        pass,
        format!(
            "smoothed [{}], threshold {:?} vs rdd {rdd:.4}",
            rates.join(" "),
            curve.threshold
        ),
    )
}

fn main() -> ExitCode {
    let mut shared = Shared::default();
    let mut failed = 0;
    let mut report = |id: u32, name: &str, check: &mut dyn FnMut(&mut Shared) -> Outcome| {
        let start = Instant::now();
        let o = check(&mut shared);
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failed += !o.pass as usize;
        println!(
            "criterion {id:>2} {verdict} {name}: {} [{:.1}s]",
            o.detail,
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "chi-square tails", &mut |_| chi2_tails());
    report(2, "largest singular value tail", &mut |_| sigma_max_tail());
    report(3, "Elias gamma", &mut |_| gamma_roundtrip());
    report(4, "piecewise-constant rate bracket", &mut |_| rate_bracket());
    report(5, "information dimension estimates", &mut id_estimates);
    report(6, "rate-distortion dimension", &mut rdd_estimate);
    report(7, "noiseless recovery guarantee", &mut |_| recovery("trials = 100\nseed = 7", true));
    report(8, "noisy recovery guarantee", &mut |_| {
        recovery("trials = 100\nseed = 8\nnoise.sigma_m = 0.05\nnoise.epsilon_m = 0.05", false)
    });
    report(9, "universal search equals codebook search", &mut |_| ucsp_matches_csp());
    report(10, "determinism", &mut |_| determinism());
    report(11, "measurement sweep", &mut |s| sweep_shape(s));
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
