//! Stationary sources: sparse i.i.d., piecewise-constant Markov and
//! continuous i.i.d. processes, plus run-length decomposition of blocks.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{param, Error, Result};
use crate::rng::{open_unit, rng_from_seed, SimRng};

/// Absolutely continuous value distribution `f_c` with bounded support.
///
/// Only the uniform law is shipped; it keeps quantizer distortion analytic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContinuousDist {
    Uniform { lower: f64, upper: f64 },
}

impl ContinuousDist {
    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        let dist = ContinuousDist::Uniform { lower, upper };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ContinuousDist::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite()) {
                    return Err(param("value_dist", "bounds must be finite"));
                }
                if lower >= upper {
                    return Err(param(
                        "value_dist",
                        format!("lower {lower} must be below upper {upper}"),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn lower(&self) -> f64 {
        match *self {
            ContinuousDist::Uniform { lower, .. } => lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            ContinuousDist::Uniform { upper, .. } => upper,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper() - self.lower()
    }

    /// Largest squared-error distortion between two points of the support.
    pub fn d_max(&self) -> f64 {
        self.width() * self.width()
    }

    pub fn variance(&self) -> f64 {
        self.d_max() / 12.0
    }

    /// Differential entropy in bits.
    pub fn differential_entropy(&self) -> f64 {
        self.width().log2()
    }

    /// Draw from the open support `(lower, upper)`.
    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        match *self {
            ContinuousDist::Uniform { lower, upper } => loop {
                let v = lower + (upper - lower) * open_unit(rng);
                // rounding can land on the closed endpoint
                if v > lower && v < upper {
                    return v;
                }
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    /// `X_i ~ (1-p) δ_0 + p f_c`, i.i.d.
    SparseIid,
    /// Stays at the previous value w.p. `1-p`, otherwise redraws from `f_c`.
    PiecewiseMarkov,
    /// `X_i ~ f_c`, i.i.d.
    ContinuousIid,
}

impl SourceKind {
    pub fn name(&self) -> &'static str {
        match self {
            SourceKind::SparseIid => "sparse-iid",
            SourceKind::PiecewiseMarkov => "piecewise-markov",
            SourceKind::ContinuousIid => "continuous-iid",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse-iid" => Ok(SourceKind::SparseIid),
            "piecewise-markov" => Ok(SourceKind::PiecewiseMarkov),
            "continuous-iid" => Ok(SourceKind::ContinuousIid),
            other => Err(param("source.kind", format!("unknown source kind `{other}`"))),
        }
    }
}

/// Parametric description of a stationary process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    /// Nonzero / jump probability. Ignored for [`SourceKind::ContinuousIid`].
    pub jump_prob: f64,
    pub value_dist: ContinuousDist,
}

impl SourceSpec {
    pub fn new(kind: SourceKind, jump_prob: f64, value_dist: ContinuousDist) -> Result<Self> {
        let spec = Self {
            kind,
            jump_prob,
            value_dist,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sparse_iid(p: f64, value_dist: ContinuousDist) -> Result<Self> {
        Self::new(SourceKind::SparseIid, p, value_dist)
    }

    pub fn piecewise_markov(p: f64, value_dist: ContinuousDist) -> Result<Self> {
        Self::new(SourceKind::PiecewiseMarkov, p, value_dist)
    }

    pub fn continuous_iid(value_dist: ContinuousDist) -> Result<Self> {
        Self::new(SourceKind::ContinuousIid, 1.0, value_dist)
    }

    pub fn validate(&self) -> Result<()> {
        self.value_dist.validate()?;
        if self.kind != SourceKind::ContinuousIid {
            // p = 1 is admitted as the degenerate fully-continuous member
            if !(self.jump_prob > 0.0 && self.jump_prob <= 1.0) {
                return Err(param(
                    "source.p",
                    format!("jump probability {} outside (0, 1]", self.jump_prob),
                ));
            }
        }
        Ok(())
    }
}

/// Draw `n` consecutive samples of the process described by `spec`.
pub fn sample_block(spec: &SourceSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(param("n", "block length must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let dist = spec.value_dist;
    let p = spec.jump_prob;
    let mut block = Vec::with_capacity(n);
    match spec.kind {
        SourceKind::SparseIid => {
            for _ in 0..n {
                let v = if rng.random_bool(p) { dist.sample(&mut rng) } else { 0.0 };
                block.push(v);
            }
        }
        SourceKind::PiecewiseMarkov => {
            let mut current = dist.sample(&mut rng);
            block.push(current);
            for _ in 1..n {
                if rng.random_bool(p) {
                    current = dist.sample(&mut rng);
                }
                block.push(current);
            }
        }
        SourceKind::ContinuousIid => {
            for _ in 0..n {
                block.push(dist.sample(&mut rng));
            }
        }
    }
    Ok(block)
}

/// A block written as `N` maximal runs: `T_i` copies of `S_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDecomposition {
    pub run_lengths: Vec<usize>,
    pub values: Vec<f64>,
}

impl RunDecomposition {
    pub fn num_runs(&self) -> usize {
        self.values.len()
    }

    pub fn block_len(&self) -> usize {
        self.run_lengths.iter().sum()
    }

    pub fn reassemble(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.block_len());
        for (&len, &v) in self.run_lengths.iter().zip(&self.values) {
            out.extend(std::iter::repeat_n(v, len));
        }
        out
    }
}

/// Split `x` into maximal runs of exactly equal consecutive values.
pub fn decompose_runs(x: &[f64]) -> Result<RunDecomposition> {
    let (&first, rest) = x
        .split_first()
        .ok_or_else(|| param("x", "cannot decompose an empty block"))?;
    let mut run_lengths = vec![1];
    let mut values = vec![first];
    for &v in rest {
        // exact comparison: generated blocks repeat stored values bit-for-bit
        if v.to_bits() == values.last().unwrap().to_bits() {
            *run_lengths.last_mut().unwrap() += 1;
        } else {
            run_lengths.push(1);
            values.push(v);
        }
    }
    Ok(RunDecomposition {
        run_lengths,
        values,
    })
}

/// Hoeffding bound `2 exp(-2 n eps^2)` on `P(|N/n - p| > eps)` for the
/// jump count `N` of `n` Bernoulli(p) trials.
pub fn jump_count_tail(n: usize, p: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(param("eps", format!("{eps} must be positive")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(param("p", format!("{p} outside [0, 1]")));
    }
    Ok(2.0 * (-2.0 * n as f64 * eps * eps).exp())
}

/// Header line of the block dump format.
pub fn block_dump_header(spec: &SourceSpec, n: usize, seed: u64) -> String {
    format!(
        "# source={} p={} n={} seed={}",
        spec.kind, spec.jump_prob, n, seed
    )
}

/// Block dump: header line then one value per line with round-trip precision.
pub fn format_block_dump(spec: &SourceSpec, block: &[f64], seed: u64) -> String {
    let mut out = block_dump_header(spec, block.len(), seed);
    out.push('\n');
    for v in block {
        out.push_str(&format!("{v:?}\n"));
    }
    out
}

/// Parsed header fields and values of a block dump.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDump {
    pub kind: SourceKind,
    pub jump_prob: f64,
    pub seed: u64,
    pub values: Vec<f64>,
}

pub fn parse_block_dump(text: &str) -> Result<BlockDump> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|h| h.strip_prefix("# "))
        .ok_or_else(|| param("block_dump", "missing `# ` header line"))?;
    let mut kind = None;
    let mut jump_prob = None;
    let mut n = None;
    let mut seed = None;
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| param("block_dump", format!("malformed header field `{field}`")))?;
        let bad = |_| param("block_dump", format!("bad value in `{field}`"));
        match key {
            "source" => kind = Some(value.parse::<SourceKind>()?),
            "p" => jump_prob = Some(value.parse::<f64>().map_err(|_| bad(()))?),
            "n" => n = Some(value.parse::<usize>().map_err(|_| bad(()))?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad(()))?),
            _ => return Err(param("block_dump", format!("unknown header key `{key}`"))),
        }
    }
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| param("block_dump", format!("bad value line `{l}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = n.ok_or_else(|| param("block_dump", "header lacks n"))?;
    if values.len() != n {
        return Err(param(
            "block_dump",
            format!("header says n={n} but {} values follow", values.len()),
        ));
    }
    Ok(BlockDump {
        kind: kind.ok_or_else(|| param("block_dump", "header lacks source"))?,
        jump_prob: jump_prob.ok_or_else(|| param("block_dump", "header lacks p"))?,
        seed: seed.ok_or_else(|| param("block_dump", "header lacks seed"))?,
        values,
    })
}
