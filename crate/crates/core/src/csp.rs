//! Codebook-search decoders and the analytic recovery bounds that go with
//! them.

use rayon::prelude::*;

use crate::codecs::{
    enumerate_codebook, BitString, BlockCode, CodeKind, Codebook, PackedBits,
};
use crate::error::{param, Error, Result};
use crate::measurement::{
    measure, noise_sigma_for, required_measurements, sample_matrix_scaled, MeasurementSystem,
    NoiseSpec,
};
use crate::rng::{rng_from_seed, stream_seed};
use crate::source_models::{sample_block, SourceKind, SourceSpec};

/// Largest number of candidate bitstrings a universal search will visit.
pub const DEFAULT_SEARCH_CAP: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq)]
pub struct CspResult {
    pub reconstruction: Vec<f64>,
    pub chosen_index: usize,
    /// `||y - A x~||_2`.
    pub residual: f64,
    /// `||x - x~||_2 / sqrt(n)`, once the truth is attached.
    pub per_letter_error: Option<f64>,
}

impl CspResult {
    pub fn with_truth(mut self, x: &[f64]) -> Self {
        self.per_letter_error = Some(per_letter_error(x, &self.reconstruction));
        self
    }
}

/// `||x - y||_2 / sqrt(n)`.
pub fn per_letter_error(x: &[f64], y: &[f64]) -> f64 {
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss / x.len() as f64).sqrt()
}

/// `||y - A v||_2^2`, accumulated left to right.
pub fn squared_residual(y: &[f64], sys: &MeasurementSystem, v: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let av = sys.row(i).iter().zip(v).fold(0.0, |acc, (a, x)| acc + a * x);
        let r = yi - av;
        total += r * r;
    }
    total
}

fn check_dims(y: &[f64], sys: &MeasurementSystem, n: usize) -> Result<()> {
    if y.len() != sys.rows() {
        return Err(param(
            "y",
            format!("{} measurements for a matrix with {} rows", y.len(), sys.rows()),
        ));
    }
    if n != sys.cols() {
        return Err(param(
            "codebook",
            format!("blocklength {n} for a matrix with {} columns", sys.cols()),
        ));
    }
    Ok(())
}

/// Lowest score wins; exact ties go to the lower index.
fn better(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if a.0 < b.0 || (a.0 == b.0 && a.1 < b.1) {
        a
    } else {
        b
    }
}

/// Index and squared residual of the best of `count` candidates.
fn search<'a, F>(y: &[f64], sys: &MeasurementSystem, count: usize, vector: F) -> (f64, usize)
where
    F: Fn(usize) -> &'a [f64] + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| (squared_residual(y, sys, vector(i)), i))
        .reduce(|| (f64::INFINITY, usize::MAX), better)
}

/// Exhaustive search of `codebook` for the entry closest to `y` in
/// measurement space.
pub fn csp_decode(y: &[f64], sys: &MeasurementSystem, codebook: &Codebook) -> Result<CspResult> {
    if codebook.is_empty() {
        return Err(param("codebook", "cannot search an empty codebook"));
    }
    check_dims(y, sys, codebook.blocklength())?;
    let (score, index) = search(y, sys, codebook.len(), |i| codebook.vector(i));
    Ok(CspResult {
        reconstruction: codebook.vector(index).to_vec(),
        chosen_index: index,
        residual: score.sqrt(),
        per_letter_error: None,
    })
}

/// Re-score codebook entries and confirm none beats the entry chosen in
/// `result` strictly.
///
/// `fraction = 1.0` checks every entry; smaller values audit a random
/// subset drawn under `seed`.
pub fn audit_optimality(
    y: &[f64],
    sys: &MeasurementSystem,
    codebook: &Codebook,
    result: &CspResult,
    fraction: f64,
    seed: u64,
) -> Result<bool> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(param("fraction", format!("{fraction} outside (0, 1]")));
    }
    check_dims(y, sys, codebook.blocklength())?;
    if result.chosen_index >= codebook.len() {
        return Err(param("result", "chosen index outside the codebook"));
    }
    let chosen = squared_residual(y, sys, codebook.vector(result.chosen_index));
    let beats = |i: usize| squared_residual(y, sys, codebook.vector(i)) < chosen;
    if fraction >= 1.0 {
        return Ok(!(0..codebook.len()).into_par_iter().any(beats));
    }
    let mut rng = rng_from_seed(seed);
    let picks: Vec<usize> = (0..codebook.len())
        .filter(|_| rand::Rng::random_bool(&mut rng, fraction))
        .collect();
    Ok(!picks.into_par_iter().any(beats))
}

/// Every bitstring of length at most `budget` that `code` decodes, in
/// canonical order (length, then lexicographic), with its reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct UcspSearchSpace {
    n: usize,
    budget: usize,
    vectors: Vec<f64>,
    labels: Vec<PackedBits>,
}

impl UcspSearchSpace {
    /// Decode all `2^{budget+1} - 1` candidates. Refuses when that count
    /// exceeds `cap`.
    pub fn build(code: &BlockCode, budget: usize, cap: u64) -> Result<Self> {
        let candidates: u128 = (1u128 << (budget.min(126) + 1)) - 1;
        if budget >= 64 || candidates > cap as u128 {
            return Err(Error::Capacity {
                predicted: if budget >= 127 { u128::MAX } else { candidates },
                cap: cap as u128,
            });
        }
        let found: Vec<(PackedBits, Vec<f64>)> = (0..candidates as u64)
            .into_par_iter()
            .filter_map(|k| {
                // k enumerates lengths 0, 1, 2, ... with 2^len values each
                let len = 63 - (k + 1).leading_zeros();
                let value = k + 1 - (1u64 << len);
                let bits = PackedBits { value, len };
                code.decode(&bits).ok().map(|v| (bits, v))
            })
            .collect();
        if found.is_empty() {
            return Err(Error::NoDecodableCandidate { budget });
        }
        let n = code.blocklength();
        let mut vectors = Vec::with_capacity(found.len() * n);
        let mut labels = Vec::with_capacity(found.len());
        for (bits, v) in found {
            vectors.extend_from_slice(&v);
            labels.push(bits);
        }
        Ok(Self {
            n,
            budget,
            vectors,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.n..(i + 1) * self.n]
    }

    pub fn label(&self, i: usize) -> BitString {
        let bits = self.labels[i];
        BitString::from_packed(bits.value, bits.len)
    }

    /// Best candidate for `y`; `chosen_index` indexes this space.
    pub fn decode(&self, y: &[f64], sys: &MeasurementSystem) -> Result<CspResult> {
        check_dims(y, sys, self.n)?;
        let (score, index) = search(y, sys, self.len(), |i| self.vector(i));
        Ok(CspResult {
            reconstruction: self.vector(index).to_vec(),
            chosen_index: index,
            residual: score.sqrt(),
            per_letter_error: None,
        })
    }
}

/// Universal search: minimize the residual over every bitstring of length
/// at most `budget` that `code` decodes. Undecodable strings are skipped.
pub fn ucsp_decode(
    y: &[f64],
    sys: &MeasurementSystem,
    code: &BlockCode,
    budget: usize,
) -> Result<CspResult> {
    check_dims(y, sys, code.blocklength())?;
    UcspSearchSpace::build(code, budget, DEFAULT_SEARCH_CAP)?.decode(y, sys)
}

/// Operating point of a recovery guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub n: usize,
    pub m: usize,
    /// Code rate in bits per sample.
    pub rate: f64,
    /// Code distortion, normalized below one.
    pub distortion: f64,
    pub eta: f64,
    pub alpha: f64,
    /// Excess-distortion probability of the code at `distortion`.
    pub code_failure_prob: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(param("n", format!("need n, m >= 1, got n={} m={}", self.n, self.m)));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(param("rate", format!("{} must be positive", self.rate)));
        }
        if !(self.distortion > 0.0 && self.distortion < 1.0) {
            return Err(param("distortion", format!("{} outside (0, 1)", self.distortion)));
        }
        if !(self.eta > 1.0 && self.eta.is_finite()) {
            return Err(param("eta", format!("{} must exceed 1", self.eta)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(param("alpha", format!("{} must be positive", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.code_failure_prob) {
            return Err(param(
                "epsilon_code",
                format!("{} outside [0, 1]", self.code_failure_prob),
            ));
        }
        Ok(())
    }

    fn log_inv_d(&self) -> f64 {
        (1.0 / self.distortion).log2()
    }
}

/// Distortion level and failure probability of a recovery guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub delta: f64,
    pub tau: f64,
    pub distortion_threshold: f64,
    /// Raw union bound; may exceed one at small `n`.
    pub probability_bound: f64,
    pub noise_term: f64,
}

fn bound_with_delta(inp: &BoundInputs, delta: f64) -> BoundReport {
    let d = inp.distortion;
    let ratio = (1.0 + delta) / inp.eta;
    let (n, m) = (inp.n as f64, inp.m as f64);
    BoundReport {
        delta,
        tau: 1.0 - d.powf(ratio),
        distortion_threshold: (2.0 + (n / m).sqrt()) * d.powf(0.5 * (1.0 - ratio)),
        probability_bound: inp.code_failure_prob
            + 2f64.powf(-0.5 * n * inp.rate * inp.alpha)
            + (-m / 2.0).exp(),
        noise_term: 0.0,
    }
}

/// Guarantee for noiseless measurements.
pub fn noiseless_bound(inp: &BoundInputs) -> Result<BoundReport> {
    inp.validate()?;
    Ok(bound_with_delta(inp, inp.eta / inp.log_inv_d() + inp.alpha))
}

/// Guarantee when `P(||z||_2 / sqrt(m) > sigma_m) < eps_m`. With
/// `normalized_columns` the matrix entries are `N(0, 1/n)` and the noise
/// term loses its `1/sqrt(n)` decay.
pub fn noisy_bound(
    inp: &BoundInputs,
    sigma_m: f64,
    eps_m: f64,
    normalized_columns: bool,
) -> Result<BoundReport> {
    if !(sigma_m >= 0.0 && sigma_m.is_finite()) {
        return Err(param("noise.sigma_m", format!("{sigma_m} must be finite and >= 0")));
    }
    if !(0.0..=1.0).contains(&eps_m) {
        return Err(param("noise.epsilon_m", format!("{eps_m} outside [0, 1]")));
    }
    let mut report = noiseless_bound(inp)?;
    let scale = inp.distortion.powf((1.0 + report.delta) / inp.eta);
    let denom = if normalized_columns { scale } else { scale * inp.n as f64 };
    report.noise_term = 2.0 * sigma_m / denom.sqrt();
    report.distortion_threshold += report.noise_term;
    report.probability_bound += eps_m;
    Ok(report)
}

/// Guarantee for the universal search when the code's rate exceeds the
/// source rate-distortion function by at most `rate_slack`.
pub fn universal_bound(inp: &BoundInputs, rate_slack: f64) -> Result<BoundReport> {
    inp.validate()?;
    let base = inp.eta / inp.log_inv_d() + inp.alpha;
    if !(rate_slack > 0.0 && rate_slack < base) {
        return Err(param(
            "rate_slack",
            format!("{rate_slack} outside (0, {base})"),
        ));
    }
    Ok(bound_with_delta(inp, base - rate_slack))
}

/// `P(Binomial(trials, p) > k)`.
pub fn binomial_upper_tail(trials: usize, p: f64, k: usize) -> f64 {
    if k >= trials {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut log_choose = 0.0;
    let mut below = 0.0;
    for j in 0..=k {
        if j > 0 {
            log_choose += ((trials - j + 1) as f64).ln() - (j as f64).ln();
        }
        below += (log_choose + j as f64 * lp + (trials - j) as f64 * lq).exp();
    }
    (1.0 - below).max(0.0)
}

/// Probability that a block of `spec` leaves the code's exact-coverage
/// region, i.e. may exceed the worst-case per-letter distortion.
pub fn code_failure_prob(spec: &SourceSpec, code: &BlockCode) -> Result<f64> {
    match (code.kind(), spec.kind) {
        (CodeKind::ScalarIid, _) => Ok(0.0),
        (CodeKind::PiecewiseConstant, SourceKind::PiecewiseMarkov) => Ok(binomial_upper_tail(
            code.blocklength() - 1,
            spec.jump_prob,
            code.max_jumps(),
        )),
        (CodeKind::PiecewiseConstant, kind) => Err(param(
            "epsilon_code",
            format!("no closed form for a piecewise-constant code on a {kind} source; set it explicitly"),
        )),
    }
}

/// Measurement noise of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    /// Gaussian noise whose empirical RMS exceeds `sigma_m` with
    /// probability at most `eps_m`.
    Bounded { sigma_m: f64, eps_m: f64 },
}

/// Options for an end-to-end recovery experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CspSetup {
    pub eta: f64,
    pub alpha: f64,
    pub noise: NoiseModel,
    pub normalize_columns: bool,
    /// Overrides the analytic code failure probability.
    pub code_failure_prob: Option<f64>,
    /// Overrides the measurement count derived from `eta`.
    pub measurements: Option<usize>,
}

impl Default for CspSetup {
    fn default() -> Self {
        Self {
            eta: 2.0,
            alpha: 0.1,
            noise: NoiseModel::None,
            normalize_columns: false,
            code_failure_prob: None,
            measurements: None,
        }
    }
}

/// One row of a recovery experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub rate: f64,
    pub distortion_target: f64,
    pub eta: f64,
    pub alpha: f64,
    pub per_letter_error: f64,
    pub threshold: f64,
    pub success: bool,
    pub residual: f64,
    pub noise_sigma: f64,
}

/// Everything a decoder sees in one trial, plus the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub seed: u64,
    pub x: Vec<f64>,
    pub sys: MeasurementSystem,
    pub y: Vec<f64>,
}

/// Source, code, enumerated codebook and guarantee of a recovery experiment.
#[derive(Debug, Clone)]
pub struct CspExperiment {
    pub spec: SourceSpec,
    pub code: BlockCode,
    pub codebook: Codebook,
    pub setup: CspSetup,
    pub m: usize,
    pub noise: NoiseSpec,
    pub bound: BoundReport,
}

impl CspExperiment {
    pub fn new(spec: SourceSpec, code: BlockCode, setup: CspSetup, cap: usize) -> Result<Self> {
        spec.validate()?;
        let codebook = enumerate_codebook(&code, cap)?;
        let n = code.blocklength();
        let rate = codebook.declared_rate();
        let distortion = code.worst_case_distortion();
        let m = match setup.measurements {
            Some(0) => return Err(param("m", "need at least one measurement")),
            Some(m) => m,
            None => required_measurements(n, rate, distortion, setup.eta)?,
        };
        let code_failure_prob = match setup.code_failure_prob {
            Some(e) => e,
            None => code_failure_prob(&spec, &code)?,
        };
        let inputs = BoundInputs {
            n,
            m,
            rate,
            distortion,
            eta: setup.eta,
            alpha: setup.alpha,
            code_failure_prob,
        };
        let (bound, noise) = match setup.noise {
            NoiseModel::None => (noiseless_bound(&inputs)?, NoiseSpec::None),
            NoiseModel::Bounded { sigma_m, eps_m } => {
                let bound = noisy_bound(&inputs, sigma_m, eps_m, setup.normalize_columns)?;
                let sigma = noise_sigma_for(m, sigma_m, eps_m)?;
                let noise = if sigma > 0.0 {
                    NoiseSpec::GaussianIid { sigma }
                } else {
                    NoiseSpec::None
                };
                (bound, noise)
            }
        };
        Ok(Self {
            spec,
            code,
            codebook,
            setup,
            m,
            noise,
            bound,
        })
    }

    /// Source block, matrix and measurements of one trial. Deterministic in
    /// `(master_seed, trial)`.
    pub fn observe(&self, trial: usize, master_seed: u64) -> Result<Observation> {
        let seed = stream_seed(master_seed, trial as u64);
        let x = sample_block(&self.spec, self.code.blocklength(), stream_seed(seed, 0))?;
        self.observe_block(x, seed)
    }

    /// Matrix and measurements of a given block under the streams of `seed`.
    pub fn observe_block(&self, x: Vec<f64>, seed: u64) -> Result<Observation> {
        let n = self.code.blocklength();
        let sys = sample_matrix_scaled(self.m, n, stream_seed(seed, 1), self.setup.normalize_columns)?;
        let y = measure(&sys, &x, self.noise, stream_seed(seed, 2))?;
        Ok(Observation { seed, x, sys, y })
    }

    /// Sample, measure and decode one block.
    pub fn run_trial(&self, trial: usize, master_seed: u64) -> Result<TrialRecord> {
        let obs = self.observe(trial, master_seed)?;
        let result = csp_decode(&obs.y, &obs.sys, &self.codebook)?;
        Ok(self.record(trial, &obs, &result))
    }

    /// Measure and decode a given block under the streams of `seed`.
    pub fn run_on(&self, x: &[f64], trial: usize, seed: u64) -> Result<TrialRecord> {
        let obs = self.observe_block(x.to_vec(), seed)?;
        let result = csp_decode(&obs.y, &obs.sys, &self.codebook)?;
        Ok(self.record(trial, &obs, &result))
    }

    /// Trial row for a decode of `obs`.
    pub fn record(&self, trial: usize, obs: &Observation, result: &CspResult) -> TrialRecord {
        let err = per_letter_error(&obs.x, &result.reconstruction);
        TrialRecord {
            trial,
            seed: obs.seed,
            n: self.code.blocklength(),
            m: self.m,
            rate: self.codebook.declared_rate(),
            distortion_target: self.code.worst_case_distortion(),
            eta: self.setup.eta,
            alpha: self.setup.alpha,
            per_letter_error: err,
            threshold: self.bound.distortion_threshold,
            success: err < self.bound.distortion_threshold,
            residual: result.residual,
            noise_sigma: self.noise.sigma(),
        }
    }

    /// Trials `0..trials` in parallel, returned in trial order.
    pub fn run_trials(&self, trials: usize, master_seed: u64) -> Result<Vec<TrialRecord>> {
        (0..trials)
            .into_par_iter()
            .map(|t| self.run_trial(t, master_seed))
            .collect()
    }
}
