//! Information-dimension and rate-distortion-dimension estimators.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::codecs::{empirical_rate_distortion, BlockCode, LengthMode};
use crate::error::{param, Result};
use crate::quantization::bit_approx_index;
use crate::source_models::{sample_block, ContinuousDist, SourceSpec};

/// Plug-in entropy in bits of the empirical distribution of `samples`.
pub fn plugin_entropy<T: Hash + Eq>(samples: &[T]) -> Result<f64> {
    if samples.is_empty() {
        return Err(param("samples", "cannot estimate entropy from no samples"));
    }
    let mut counts: HashMap<&T, u64> = HashMap::new();
    for s in samples {
        *counts.entry(s).or_insert(0) += 1;
    }
    Ok(entropy_of_counts(counts.into_values().collect(), samples.len()))
}

/// Sums in ascending count order.
fn entropy_of_counts(mut counts: Vec<u64>, total: usize) -> f64 {
    counts.sort_unstable();
    let total = total as f64;
    let h: f64 = counts
        .into_iter()
        .map(|c| {
            let q = c as f64 / total;
            -q * q.log2()
        })
        .sum();
    h.max(0.0)
}

/// Plug-in entropy of all length-`width` windows of `seq`.
fn window_entropy(seq: &[i64], width: usize) -> f64 {
    let mut counts: HashMap<&[i64], u64> = HashMap::new();
    for w in seq.windows(width) {
        *counts.entry(w).or_insert(0) += 1;
    }
    entropy_of_counts(counts.into_values().collect(), seq.len() + 1 - width)
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `H(p)` in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Entropy of a geometric run length with success probability `p`,
/// `H(p) / p` bits.
pub fn geometric_entropy(p: f64) -> f64 {
    binary_entropy(p) / p
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdEstimate {
    /// Slope of the quantized (conditional) entropy against `b`.
    pub value: f64,
    /// `(b, H_b / b)` for every `b` in the grid.
    pub per_b: Vec<(u32, f64)>,
    /// Conditioning order.
    pub k: usize,
}

impl IdEstimate {
    /// CSV `b,H_norm` followed by a `slope` summary row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "b,H_norm")?;
        for (b, h) in &self.per_b {
            writeln!(out, "{b},{h:?}")?;
        }
        writeln!(out, "slope,{:?}", self.value)
    }
}

fn check_grid(b_grid: &[u32]) -> Result<u32> {
    if b_grid.len() < 3 {
        return Err(param("b_grid", format!("need at least 3 values, got {}", b_grid.len())));
    }
    if b_grid.iter().any(|&b| b == 0 || b > 40) {
        return Err(param("b_grid", "values must lie in 1..=40"));
    }
    let mut sorted = b_grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != b_grid.len() {
        return Err(param("b_grid", "values must be distinct"));
    }
    Ok(*sorted.last().unwrap())
}

/// Minimum sample count admitted for `(k + 1) * b_max` quantization bits.
pub fn min_samples(k: usize, b_max: u32) -> f64 {
    50.0 * 2f64.powf(((k + 1) * b_max as usize) as f64)
}

/// Marginal information dimension: slope of `H([X]_b)` over `b_grid`.
pub fn estimate_id_marginal(
    spec: &SourceSpec,
    n_samples: usize,
    b_grid: &[u32],
    seed: u64,
) -> Result<IdEstimate> {
    estimate_id_process(spec, n_samples, 0, b_grid, seed)
}

/// Process information dimension of order `k`: slope over `b_grid` of
/// `H([X_{k+1}]_b | [X^k]_b)`, using sliding windows of one stream of
/// `n_samples` letters.
pub fn estimate_id_process(
    spec: &SourceSpec,
    n_samples: usize,
    k: usize,
    b_grid: &[u32],
    seed: u64,
) -> Result<IdEstimate> {
    let b_max = check_grid(b_grid)?;
    let needed = min_samples(k, b_max);
    if (n_samples as f64) < needed {
        return Err(param(
            "n_samples",
            format!("{n_samples} samples, at least {needed} needed for k={k} and b up to {b_max}"),
        ));
    }
    let stream = sample_block(spec, n_samples, seed)?;
    estimate_id_from_stream(&stream, k, b_grid)
}

/// As [`estimate_id_process`] on a given stream, without the sample guard.
pub fn estimate_id_from_stream(stream: &[f64], k: usize, b_grid: &[u32]) -> Result<IdEstimate> {
    check_grid(b_grid)?;
    if stream.len() <= k {
        return Err(param("n_samples", format!("stream of {} too short for k={k}", stream.len())));
    }
    let entropies: Vec<f64> = b_grid
        .par_iter()
        .map(|&b| {
            let q: Vec<i64> = stream.iter().map(|&x| bit_approx_index(x, b)).collect();
            let joint = window_entropy(&q, k + 1);
            if k == 0 {
                joint
            } else {
                // k-windows over the start positions of the joint windows
                joint - window_entropy(&q[..q.len() - 1], k)
            }
        })
        .collect();
    let xs: Vec<f64> = b_grid.iter().map(|&b| b as f64).collect();
    Ok(IdEstimate {
        value: ls_slope(&xs, &entropies),
        per_b: b_grid.iter().zip(&entropies).map(|(&b, &h)| (b, h / b as f64)).collect(),
        k,
    })
}

/// Operational rate-distortion points of one source and codec family.
#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    points: Vec<(f64, f64)>,
    pub source: String,
    pub codec: String,
    pub seed_count: usize,
}

impl RdCurve {
    /// `points` are `(D, R)` pairs with `D` strictly decreasing in `(0, 1)`
    /// and `R` nonnegative and nondecreasing.
    pub fn new(points: Vec<(f64, f64)>, source: &str, codec: &str, seed_count: usize) -> Result<Self> {
        for &(d, r) in &points {
            if !(d > 0.0 && d < 1.0) {
                return Err(param("curve", format!("distortion {d} outside (0, 1)")));
            }
            if !(r >= 0.0 && r.is_finite()) {
                return Err(param("curve", format!("rate {r} must be finite and >= 0")));
            }
        }
        for w in points.windows(2) {
            if w[1].0 >= w[0].0 {
                return Err(param("curve", "distortions must strictly decrease"));
            }
            if w[1].1 < w[0].1 {
                return Err(param("curve", "rates must not decrease as distortion falls"));
            }
        }
        Ok(Self {
            points,
            source: source.to_owned(),
            codec: codec.to_owned(),
            seed_count,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// CSV `D,R,codec,source,seed_count`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "D,R,codec,source,seed_count")?;
        for (d, r) in &self.points {
            writeln!(out, "{d:?},{r:?},{},{},{}", self.codec, self.source, self.seed_count)?;
        }
        Ok(())
    }
}

/// Twice the least-squares slope of `R` against `log2(1/D)`.
pub fn estimate_rdd(curve: &RdCurve) -> Result<f64> {
    let pts = curve.points();
    if pts.len() < 3 {
        return Err(param("curve", format!("need at least 3 points, got {}", pts.len())));
    }
    let span = pts[0].0 / pts[pts.len() - 1].0;
    if span < 100.0 {
        return Err(param("curve", format!("distortions span a factor {span}, need 100")));
    }
    let xs: Vec<f64> = pts.iter().map(|(d, _)| (1.0 / d).log2()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, r)| *r).collect();
    Ok(2.0 * ls_slope(&xs, &ys))
}

/// Mean rate of the variable-length piecewise-constant codec at each value
/// resolution in `bits`, against its worst-case distortion. Every
/// resolution reuses the same `trials` source blocks.
pub fn operational_rd_curve(
    spec: &SourceSpec,
    n: usize,
    bits: &[u32],
    trials: usize,
    seed: u64,
) -> Result<RdCurve> {
    let mut points = Vec::with_capacity(bits.len());
    for &b in bits {
        let code = BlockCode::piecewise_constant(n, b, None, spec.value_dist, LengthMode::VariableLength)?;
        let report = empirical_rate_distortion(&code, spec, trials, seed, None)?;
        points.push((code.worst_case_distortion(), report.mean_rate));
    }
    RdCurve::new(points, spec.kind.name(), "piecewise-constant", trials)
}

/// Shannon lower bound `max(0, h(f) - log2(2 pi e D) / 2)`.
pub fn shannon_lower_bound(dist: &ContinuousDist, d: f64) -> f64 {
    let h = dist.differential_entropy();
    (h - 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * d).log2()).max(0.0)
}

/// Smallest quantizer resolution whose worst-case squared error is `<= d`.
pub fn operational_bits(dist: &ContinuousDist, d: f64) -> u32 {
    let mut b = 1;
    while (dist.width() * 2f64.powi(-(b as i32) - 1)).powi(2) > d {
        b += 1;
    }
    b
}

/// Bracket on the rate-distortion function of the piecewise-constant
/// process: `(p * SLB(D), H(p) + p * b_op(D))`.
pub fn rd_bracket_pwc(p: f64, d: f64, dist: &ContinuousDist) -> Result<(f64, f64)> {
    dist.validate()?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(param("p", format!("{p} outside (0, 1]")));
    }
    if !(d > 0.0 && d < dist.variance()) {
        return Err(param(
            "D",
            format!("{d} outside (0, {})", dist.variance()),
        ));
    }
    let lower = p * shannon_lower_bound(dist, d);
    let upper = binary_entropy(p) + p * operational_bits(dist, d) as f64;
    Ok((lower, upper))
}
