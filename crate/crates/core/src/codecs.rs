//! Lossy block codes, Elias gamma integer coding and codebook enumeration.
//!
//! The piecewise-constant code describes a block as its run structure
//! followed by quantized run values:
//!
//! ```text
//! gamma(N) gamma(T_1) ... gamma(T_{N-1}) idx(S_1) ... idx(S_N) [zero padding]
//! ```
//!
//! `T_N` is implied by the blocklength. Each `idx` is a `b`-bit cell index of
//! the uniform scalar quantizer, most significant bit first. Padding is only
//! present in fixed-length mode, where every codeword is stretched to the
//! longest length in the `(K, b)` family.

use std::cmp::Ordering;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{decode_err, param, Error, Result};
use crate::quantization::ScalarQuantizer;
use crate::rng::stream_seed;
use crate::source_models::{decompose_runs, sample_block, ContinuousDist, RunDecomposition, SourceSpec};

/// Default upper limit on enumerated codebook sizes.
pub const DEFAULT_CODEBOOK_CAP: usize = 1 << 21;

/// Finite binary sequence. Ordered by length, then lexicographically.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    /// Append the low `width` bits of `value`, most significant first.
    pub fn push_uint(&mut self, value: u64, width: u32) {
        for shift in (0..width).rev() {
            self.bits.push((value >> shift) & 1 == 1);
        }
    }

    pub fn extend_from(&mut self, other: &BitString) {
        self.bits.extend_from_slice(&other.bits);
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        self.bits.get(i).copied()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    /// The `len`-bit string holding `value`, most significant bit first.
    pub fn from_packed(value: u64, len: u32) -> Self {
        let mut out = Self {
            bits: Vec::with_capacity(len as usize),
        };
        out.push_uint(value, len);
        out
    }
}

impl From<Vec<bool>> for BitString {
    fn from(bits: Vec<bool>) -> Self {
        Self { bits }
    }
}

impl Ord for BitString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.bits.cmp(&other.bits))
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString(\"{self}\")")
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(param("bitstring", format!("unexpected character `{other}`"))),
            })
            .collect::<Result<Vec<bool>>>()
            .map(BitString::from)
    }
}

/// Random-access bit sequence that a decoder can read from.
pub trait BitSource {
    fn bit_len(&self) -> usize;
    fn bit(&self, i: usize) -> bool;
}

impl BitSource for BitString {
    fn bit_len(&self) -> usize {
        self.bits.len()
    }

    fn bit(&self, i: usize) -> bool {
        self.bits[i]
    }
}

/// Up to 64 bits held in a machine word, most significant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackedBits {
    pub value: u64,
    pub len: u32,
}

impl BitSource for PackedBits {
    fn bit_len(&self) -> usize {
        self.len as usize
    }

    fn bit(&self, i: usize) -> bool {
        (self.value >> (self.len as usize - 1 - i)) & 1 == 1
    }
}

/// Sequential reader over a [`BitSource`].
pub struct BitCursor<'a, S: BitSource + ?Sized> {
    src: &'a S,
    pos: usize,
}

impl<'a, S: BitSource + ?Sized> BitCursor<'a, S> {
    pub fn new(src: &'a S) -> Self {
        Self { src, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.src.bit_len() - self.pos
    }

    pub fn read_bit(&mut self) -> Option<bool> {
        if self.pos < self.src.bit_len() {
            let b = self.src.bit(self.pos);
            self.pos += 1;
            Some(b)
        } else {
            None
        }
    }

    pub fn read_uint(&mut self, width: u32) -> Result<u64> {
        if self.remaining() < width as usize {
            return Err(decode_err(format!(
                "need {width} bits at offset {}, only {} left",
                self.pos,
                self.remaining()
            )));
        }
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.read_bit().unwrap() as u64;
        }
        Ok(v)
    }

    /// Read one Elias gamma codeword.
    pub fn read_gamma(&mut self) -> Result<u64> {
        let mut zeros = 0u32;
        loop {
            match self.read_bit() {
                Some(true) => break,
                Some(false) => {
                    zeros += 1;
                    if zeros > 63 {
                        return Err(decode_err("gamma prefix longer than 63 zeros"));
                    }
                }
                None => return Err(decode_err("gamma prefix has no terminating 1")),
            }
        }
        let low = self.read_uint(zeros)?;
        Ok((1u64 << zeros) | low)
    }
}

/// Length of the Elias gamma codeword of `n >= 1`: `2 floor(log2 n) + 1`.
pub fn gamma_len(n: u64) -> usize {
    debug_assert!(n >= 1);
    2 * (63 - n.leading_zeros() as usize) + 1
}

pub fn write_gamma(out: &mut BitString, n: u64) {
    debug_assert!(n >= 1);
    let k = 63 - n.leading_zeros();
    for _ in 0..k {
        out.push(false);
    }
    out.push_uint(n, k + 1);
}

pub fn elias_gamma_encode(n: u64) -> Result<BitString> {
    if n == 0 {
        return Err(param("n", "Elias gamma encodes positive integers only"));
    }
    let mut out = BitString::new();
    write_gamma(&mut out, n);
    Ok(out)
}

/// Decode the leading gamma codeword; returns the value and bits consumed.
pub fn elias_gamma_decode<S: BitSource + ?Sized>(bits: &S) -> Result<(u64, usize)> {
    let mut cursor = BitCursor::new(bits);
    let v = cursor.read_gamma()?;
    Ok((v, cursor.position()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodeKind {
    ScalarIid,
    PiecewiseConstant,
}

impl CodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            CodeKind::ScalarIid => "scalar-iid",
            CodeKind::PiecewiseConstant => "piecewise-constant",
        }
    }
}

impl FromStr for CodeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalar-iid" => Ok(CodeKind::ScalarIid),
            "piecewise-constant" => Ok(CodeKind::PiecewiseConstant),
            other => Err(param("codec.kind", format!("unknown codec `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LengthMode {
    FixedLength,
    VariableLength,
}

impl FromStr for LengthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(LengthMode::FixedLength),
            "variable" => Ok(LengthMode::VariableLength),
            other => Err(param("codec.mode", format!("unknown length mode `{other}`"))),
        }
    }
}

/// A lossy block code of blocklength `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCode {
    kind: CodeKind,
    n: usize,
    max_jumps: usize,
    length_mode: LengthMode,
    value_dist: ContinuousDist,
    quantizer: ScalarQuantizer,
    fixed_len: Option<usize>,
}

impl BlockCode {
    /// Fixed-length code sending `value_bits` per letter.
    pub fn scalar_iid(n: usize, value_bits: u32, value_dist: ContinuousDist) -> Result<Self> {
        if n == 0 {
            return Err(param("n", "blocklength must be positive"));
        }
        value_dist.validate()?;
        let quantizer = ScalarQuantizer::new(value_dist.lower(), value_dist.upper(), value_bits)?;
        Ok(Self {
            kind: CodeKind::ScalarIid,
            n,
            max_jumps: n - 1,
            length_mode: LengthMode::FixedLength,
            value_dist,
            quantizer,
            fixed_len: Some(n * value_bits as usize),
        })
    }

    /// Run-structure code; `max_jumps = None` admits every run pattern.
    pub fn piecewise_constant(
        n: usize,
        value_bits: u32,
        max_jumps: Option<usize>,
        value_dist: ContinuousDist,
        length_mode: LengthMode,
    ) -> Result<Self> {
        if n == 0 {
            return Err(param("n", "blocklength must be positive"));
        }
        value_dist.validate()?;
        let quantizer = ScalarQuantizer::new(value_dist.lower(), value_dist.upper(), value_bits)?;
        let max_jumps = match max_jumps {
            Some(k) if k > n - 1 => {
                return Err(param(
                    "codec.max_jumps",
                    format!("{k} exceeds the {} boundaries of a length-{n} block", n - 1),
                ))
            }
            Some(k) => k,
            None => n - 1,
        };
        let fixed_len = match length_mode {
            LengthMode::FixedLength => Some(max_pwc_len(n, max_jumps, value_bits)),
            LengthMode::VariableLength => None,
        };
        Ok(Self {
            kind: CodeKind::PiecewiseConstant,
            n,
            max_jumps,
            length_mode,
            value_dist,
            quantizer,
            fixed_len,
        })
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    pub fn blocklength(&self) -> usize {
        self.n
    }

    pub fn value_bits(&self) -> u32 {
        self.quantizer.bits()
    }

    pub fn max_jumps(&self) -> usize {
        self.max_jumps
    }

    pub fn length_mode(&self) -> LengthMode {
        self.length_mode
    }

    pub fn value_dist(&self) -> ContinuousDist {
        self.value_dist
    }

    pub fn quantizer(&self) -> &ScalarQuantizer {
        &self.quantizer
    }

    /// Codeword length of every fixed-length codeword.
    pub fn fixed_len(&self) -> Option<usize> {
        self.fixed_len
    }

    /// Longest codeword the code can emit.
    pub fn max_codeword_len(&self) -> usize {
        match self.fixed_len {
            Some(len) => len,
            None => max_pwc_len(self.n, self.max_jumps, self.quantizer.bits()),
        }
    }

    /// Rate in bits per sample of a fixed-length code.
    pub fn fixed_rate(&self) -> Option<f64> {
        self.fixed_len.map(|l| l as f64 / self.n as f64)
    }

    /// Per-letter squared error never exceeded on encodable blocks whose
    /// values lie in the support.
    pub fn worst_case_distortion(&self) -> f64 {
        self.quantizer.max_sq_error()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(param(
                "x",
                format!("block has length {}, code expects {}", x.len(), self.n),
            ));
        }
        Ok(())
    }

    /// Encode `x`. Piecewise-constant blocks with more than `max_jumps`
    /// jumps are rejected with a capacity error.
    pub fn encode(&self, x: &[f64]) -> Result<BitString> {
        self.check_len(x)?;
        match self.kind {
            CodeKind::ScalarIid => Ok(self.encode_scalar(x)),
            CodeKind::PiecewiseConstant => {
                let runs = decompose_runs(x)?;
                if runs.num_runs() - 1 > self.max_jumps {
                    return Err(Error::Capacity {
                        predicted: (runs.num_runs() - 1) as u128,
                        cap: self.max_jumps as u128,
                    });
                }
                let indices: Vec<u64> = runs.values.iter().map(|&v| self.quantizer.encode(v)).collect();
                Ok(self.write_pwc(&runs.run_lengths, &indices))
            }
        }
    }

    /// Total encoder: blocks beyond the jump cap keep their first
    /// `max_jumps + 1` runs and the last kept run is stretched to the end.
    pub fn encode_lossy(&self, x: &[f64]) -> Result<BitString> {
        self.check_len(x)?;
        match self.kind {
            CodeKind::ScalarIid => Ok(self.encode_scalar(x)),
            CodeKind::PiecewiseConstant => {
                let mut runs = decompose_runs(x)?;
                let keep = self.max_jumps + 1;
                if runs.num_runs() > keep {
                    let tail: usize = runs.run_lengths[keep..].iter().sum();
                    runs.run_lengths.truncate(keep);
                    runs.values.truncate(keep);
                    runs.run_lengths[keep - 1] += tail;
                }
                let indices: Vec<u64> = runs.values.iter().map(|&v| self.quantizer.encode(v)).collect();
                Ok(self.write_pwc(&runs.run_lengths, &indices))
            }
        }
    }

    fn encode_scalar(&self, x: &[f64]) -> BitString {
        let b = self.quantizer.bits();
        let mut out = BitString::new();
        for &v in x {
            out.push_uint(self.quantizer.encode(v), b);
        }
        out
    }

    /// Bit layout of a run pattern with the given cell indices.
    fn write_pwc(&self, run_lengths: &[usize], indices: &[u64]) -> BitString {
        let mut out = BitString::new();
        write_gamma(&mut out, run_lengths.len() as u64);
        for &t in &run_lengths[..run_lengths.len() - 1] {
            write_gamma(&mut out, t as u64);
        }
        for &idx in indices {
            out.push_uint(idx, self.quantizer.bits());
        }
        if let Some(total) = self.fixed_len {
            while out.len() < total {
                out.push(false);
            }
        }
        out
    }

    pub fn decode<S: BitSource + ?Sized>(&self, bits: &S) -> Result<Vec<f64>> {
        match self.kind {
            CodeKind::ScalarIid => self.decode_scalar(bits),
            CodeKind::PiecewiseConstant => self.decode_pwc(bits),
        }
    }

    fn decode_scalar<S: BitSource + ?Sized>(&self, bits: &S) -> Result<Vec<f64>> {
        let expected = self.fixed_len.unwrap();
        if bits.bit_len() != expected {
            return Err(decode_err(format!(
                "scalar code expects {expected} bits, got {}",
                bits.bit_len()
            )));
        }
        let mut cursor = BitCursor::new(bits);
        (0..self.n)
            .map(|_| self.quantizer.decode(cursor.read_uint(self.quantizer.bits())?))
            .collect()
    }

    fn decode_pwc<S: BitSource + ?Sized>(&self, bits: &S) -> Result<Vec<f64>> {
        Ok(self.decode_runs(bits)?.reassemble())
    }

    /// Parse a piecewise-constant codeword into its runs and levels.
    pub fn decode_runs<S: BitSource + ?Sized>(&self, bits: &S) -> Result<RunDecomposition> {
        if self.kind != CodeKind::PiecewiseConstant {
            return Err(param("code", "run decoding needs a piecewise-constant code"));
        }
        if let Some(total) = self.fixed_len {
            if bits.bit_len() != total {
                return Err(decode_err(format!(
                    "fixed-length code expects {total} bits, got {}",
                    bits.bit_len()
                )));
            }
        }
        let mut cursor = BitCursor::new(bits);
        let runs = cursor.read_gamma()?;
        if runs > self.n as u64 {
            return Err(decode_err(format!("{runs} runs in a block of {}", self.n)));
        }
        let runs = runs as usize;
        if runs - 1 > self.max_jumps {
            return Err(decode_err(format!(
                "{} jumps exceed the code's limit of {}",
                runs - 1,
                self.max_jumps
            )));
        }
        let mut run_lengths = Vec::with_capacity(runs);
        let mut covered = 0usize;
        for _ in 1..runs {
            let t = cursor.read_gamma()?;
            // the final run needs at least one sample
            if t >= (self.n - covered) as u64 {
                return Err(decode_err("run lengths overflow the blocklength"));
            }
            covered += t as usize;
            run_lengths.push(t as usize);
        }
        run_lengths.push(self.n - covered);
        let b = self.quantizer.bits();
        let values = (0..runs)
            .map(|_| self.quantizer.decode(cursor.read_uint(b)?))
            .collect::<Result<Vec<f64>>>()?;
        while let Some(bit) = cursor.read_bit() {
            if bit || self.fixed_len.is_none() {
                return Err(decode_err("trailing bits after the last value"));
            }
        }
        Ok(RunDecomposition {
            run_lengths,
            values,
        })
    }

    /// Number of codebook vectors, saturating at `u128::MAX`.
    pub fn predicted_codebook_size(&self) -> u128 {
        let b = self.quantizer.bits();
        match self.kind {
            CodeKind::ScalarIid => {
                let exp = self.n as u128 * b as u128;
                if exp >= 128 {
                    u128::MAX
                } else {
                    1u128 << exp
                }
            }
            CodeKind::PiecewiseConstant => {
                let levels = 1u128 << b;
                let mut total = 0u128;
                let mut choose = 1u128; // C(n-1, j)
                let mut alt = 1u128; // (levels - 1)^j
                for j in 0..=self.max_jumps {
                    if j > 0 {
                        choose = choose
                            .saturating_mul((self.n - j) as u128)
                            .checked_div(j as u128)
                            .unwrap_or(u128::MAX);
                        alt = alt.saturating_mul(levels - 1);
                    }
                    total = total.saturating_add(choose.saturating_mul(levels).saturating_mul(alt));
                }
                total
            }
        }
    }
}

/// Longest piecewise-constant codeword with at most `max_jumps` jumps.
fn max_pwc_len(n: usize, max_jumps: usize, b: u32) -> usize {
    const NONE: i64 = i64::MIN / 2;
    let budget = n - 1;
    // best[s]: largest total gamma length of j run lengths (each >= 1) summing to <= s
    let mut best = vec![0i64; budget + 1];
    let mut longest = gamma_len(1) + b as usize;
    for j in 1..=max_jumps.min(budget) {
        let mut next = vec![NONE; budget + 1];
        for s in j..=budget {
            next[s] = (1..=s - (j - 1))
                .map(|t| gamma_len(t as u64) as i64 + best[s - t])
                .max()
                .unwrap_or(NONE);
        }
        best = next;
        let len = gamma_len(j as u64 + 1) as i64 + best[budget] + ((j + 1) * b as usize) as i64;
        longest = longest.max(len as usize);
    }
    longest
}

/// Every reconstruction vector reachable by a code, each with its canonical
/// encoding, sorted by that encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    n: usize,
    vectors: Vec<f64>,
    labels: Vec<BitString>,
    declared_rate: f64,
}

impl Codebook {
    /// Build from raw entries; sorts by label and rejects duplicate labels.
    pub fn from_entries(n: usize, entries: Vec<(Vec<f64>, BitString)>, declared_rate: f64) -> Result<Self> {
        let mut entries = entries;
        if let Some((v, _)) = entries.iter().find(|(v, _)| v.len() != n) {
            return Err(param(
                "codebook",
                format!("entry of length {} in a length-{n} codebook", v.len()),
            ));
        }
        entries.sort_by(|a, b| a.1.cmp(&b.1));
        if entries.windows(2).any(|w| w[0].1 == w[1].1) {
            return Err(param("codebook", "duplicate canonical bitstrings"));
        }
        let mut vectors = Vec::with_capacity(entries.len() * n);
        let mut labels = Vec::with_capacity(entries.len());
        for (v, label) in entries {
            vectors.extend_from_slice(&v);
            labels.push(label);
        }
        Ok(Self {
            n,
            vectors,
            labels,
            declared_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn blocklength(&self) -> usize {
        self.n
    }

    /// Bits per sample `R` with `|C| <= 2^{nR}`.
    pub fn declared_rate(&self) -> f64 {
        self.declared_rate
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.n..(i + 1) * self.n]
    }

    pub fn label(&self, i: usize) -> &BitString {
        &self.labels[i]
    }

    pub fn vectors(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.vectors.chunks_exact(self.n.max(1))
    }

    /// CSV with columns `index,bitstring,v_1..v_n`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = String::from("index,bitstring");
        for i in 1..=self.n {
            header.push_str(&format!(",v_{i}"));
        }
        writeln!(out, "{header}")?;
        for i in 0..self.len() {
            write!(out, "{i},{}", self.labels[i])?;
            for v in self.vector(i) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Enumerate the codebook of `code`, refusing when it would exceed `cap`.
pub fn enumerate_codebook(code: &BlockCode, cap: usize) -> Result<Codebook> {
    let predicted = code.predicted_codebook_size();
    if predicted > cap as u128 {
        return Err(Error::Capacity {
            predicted,
            cap: cap as u128,
        });
    }
    let size = predicted as usize;
    let n = code.n;
    let b = code.quantizer.bits();
    let levels = code.quantizer.levels();
    let mut entries = Vec::with_capacity(size);
    match code.kind {
        CodeKind::ScalarIid => {
            for counter in 0..size as u64 {
                let mut v = Vec::with_capacity(n);
                let mut label = BitString::new();
                for pos in (0..n).rev() {
                    let idx = (counter >> (pos as u32 * b)) & (levels - 1);
                    v.push(code.quantizer.decode(idx)?);
                    label.push_uint(idx, b);
                }
                entries.push((v, label));
            }
        }
        CodeKind::PiecewiseConstant => {
            let mut lengths = Vec::with_capacity(code.max_jumps + 1);
            let mut indices = Vec::with_capacity(code.max_jumps + 1);
            for jumps in 0..=code.max_jumps {
                for_each_subset(n - 1, jumps, |cuts| {
                    lengths.clear();
                    let mut start = 0;
                    for &c in cuts {
                        lengths.push(c + 1 - start);
                        start = c + 1;
                    }
                    lengths.push(n - start);
                    // first level free, later levels differ from their predecessor
                    let combos = levels * (levels - 1).pow(jumps as u32);
                    for code_no in 0..combos {
                        indices.clear();
                        let mut rest = code_no;
                        let first = rest % levels;
                        rest /= levels;
                        indices.push(first);
                        for _ in 0..jumps {
                            let digit = rest % (levels - 1);
                            rest /= levels - 1;
                            let prev = *indices.last().unwrap();
                            indices.push(if digit < prev { digit } else { digit + 1 });
                        }
                        let mut v = Vec::with_capacity(n);
                        for (&len, &idx) in lengths.iter().zip(&indices) {
                            let level = code.quantizer.decode(idx).expect("index below 2^b");
                            v.extend(std::iter::repeat_n(level, len));
                        }
                        entries.push((v, code.write_pwc(&lengths, &indices)));
                    }
                });
            }
        }
    }
    let declared_rate = match code.fixed_len {
        Some(len) => len as f64 / n as f64,
        None => entries.iter().map(|(_, l)| l.len()).max().unwrap_or(0) as f64 / n as f64,
    };
    Codebook::from_entries(n, entries, declared_rate)
}

/// Visit every `k`-subset of `0..m` in lexicographic order.
fn for_each_subset(m: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + m - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// One Monte-Carlo trial of a codec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecTrial {
    pub trial: usize,
    pub seed: u64,
    pub rate: f64,
    pub distortion: f64,
    pub excess: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateDistortionReport {
    pub threshold: f64,
    pub trials: Vec<CodecTrial>,
    pub mean_rate: f64,
    pub mean_distortion: f64,
    pub excess_prob: f64,
}

/// Squared-error distortion `d_n` averaged over the block.
pub fn per_letter_distortion(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

/// Monte-Carlo rate, distortion and excess-distortion frequency of `code`
/// on blocks of `spec`. `threshold` defaults to the code's worst-case
/// per-letter distortion.
pub fn empirical_rate_distortion(
    code: &BlockCode,
    spec: &SourceSpec,
    trials: usize,
    seed: u64,
    threshold: Option<f64>,
) -> Result<RateDistortionReport> {
    if trials == 0 {
        return Err(param("trials", "need at least one trial"));
    }
    let threshold = threshold.unwrap_or_else(|| code.worst_case_distortion());
    let records = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = stream_seed(seed, t as u64);
            let x = sample_block(spec, code.n, s)?;
            let bits = code.encode_lossy(&x)?;
            let xhat = code.decode(&bits)?;
            let distortion = per_letter_distortion(&x, &xhat);
            Ok(CodecTrial {
                trial: t,
                seed: s,
                rate: bits.len() as f64 / code.n as f64,
                distortion,
                excess: distortion > threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = records.len() as f64;
    Ok(RateDistortionReport {
        threshold,
        mean_rate: records.iter().map(|r| r.rate).sum::<f64>() / k,
        mean_distortion: records.iter().map(|r| r.distortion).sum::<f64>() / k,
        excess_prob: records.iter().filter(|r| r.excess).count() as f64 / k,
        trials: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source_models::SourceSpec;
    use proptest::prelude::*;

    fn unit() -> ContinuousDist {
        ContinuousDist::uniform(0.0, 1.0).unwrap()
    }

    fn bits(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(elias_gamma_encode(1).unwrap().to_string(), "1");
        assert_eq!(elias_gamma_encode(5).unwrap().to_string(), "00101");
        assert_eq!(elias_gamma_encode(8).unwrap().to_string(), "0001000");
        assert!(elias_gamma_encode(0).is_err());
        assert_eq!(elias_gamma_decode(&bits("00101111")).unwrap(), (5, 5));
        assert!(elias_gamma_decode(&bits("000")).is_err());
        assert!(elias_gamma_decode(&bits("0001")).is_err());
        assert!(elias_gamma_decode(&bits("")).is_err());
    }

    #[test]
    fn bitstring_order_is_length_then_lex() {
        let mut v = [bits("10"), bits("0"), bits("01"), bits("1"), bits("")];
        v.sort();
        let s: Vec<String> = v.iter().map(|b| b.to_string()).collect();
        assert_eq!(s, ["", "0", "1", "01", "10"]);
        assert_eq!(BitString::from_packed(0b0110, 4), bits("0110"));
        assert!("012".parse::<BitString>().is_err());
    }

    #[test]
    fn packed_bits_match_bitstring() {
        let p = PackedBits { value: 0b1011, len: 6 };
        let s = bits("001011");
        assert_eq!(p.bit_len(), s.bit_len());
        for i in 0..6 {
            assert_eq!(p.bit(i), s.bit(i));
        }
    }

    #[test]
    fn constant_block_costs_one_plus_b_bits() {
        let code = BlockCode::piecewise_constant(16, 6, None, unit(), LengthMode::VariableLength).unwrap();
        let enc = code.encode(&[0.4; 16]).unwrap();
        assert_eq!(enc.len(), 1 + 6);
    }

    #[test]
    fn pwc_hand_traced_layout() {
        let code = BlockCode::piecewise_constant(3, 2, None, unit(), LengthMode::VariableLength).unwrap();
        let enc = code.encode(&[0.2, 0.2, 0.9]).unwrap();
        // gamma(2) gamma(2) idx 00 idx 11
        assert_eq!(enc.to_string(), "0100100011");
        assert_eq!(code.decode(&enc).unwrap(), vec![0.125, 0.125, 0.875]);
    }

    #[test]
    fn pwc_decode_errors() {
        let code = BlockCode::piecewise_constant(3, 2, None, unit(), LengthMode::VariableLength).unwrap();
        // truncated value bits
        assert!(code.decode(&bits("01001000")).is_err());
        // T_1 = 3 leaves nothing for the final run
        assert!(code.decode(&bits("010011")).is_err());
        // trailing bit
        assert!(code.decode(&bits("01001000110")).is_err());
        // four runs in a block of three
        assert!(code.decode(&bits("00100")).is_err());
        assert!(code.decode(&BitString::new()).is_err());
    }

    #[test]
    fn jump_cap_is_enforced() {
        let code = BlockCode::piecewise_constant(4, 1, Some(1), unit(), LengthMode::VariableLength).unwrap();
        let x = [0.1, 0.9, 0.1, 0.9];
        assert!(matches!(code.encode(&x), Err(Error::Capacity { .. })));
        let lossy = code.encode_lossy(&x).unwrap();
        assert_eq!(code.decode(&lossy).unwrap(), vec![0.25, 0.75, 0.75, 0.75]);
        assert!(BlockCode::piecewise_constant(4, 1, Some(4), unit(), LengthMode::VariableLength).is_err());
    }

    #[test]
    fn fixed_length_padding() {
        let code = BlockCode::piecewise_constant(24, 3, Some(2), unit(), LengthMode::FixedLength).unwrap();
        // gamma(3) + two 7-bit run lengths + three 3-bit values
        assert_eq!(code.fixed_len(), Some(3 + 14 + 9));
        let variable = BlockCode::piecewise_constant(24, 3, Some(2), unit(), LengthMode::VariableLength).unwrap();
        assert_eq!(variable.max_codeword_len(), 26);
        let enc = code.encode(&[0.5; 24]).unwrap();
        assert_eq!(enc.len(), 26);
        assert_eq!(code.decode(&enc).unwrap(), vec![0.5625; 24]);
        let tampered = BitString::from(
            enc.as_slice()
                .iter()
                .enumerate()
                .map(|(i, &b)| if i == 25 { true } else { b })
                .collect::<Vec<bool>>(),
        );
        assert!(code.decode(&tampered).is_err());
    }

    /// Brute force over all run patterns for the longest codeword.
    fn brute_max_len(n: usize, k: usize, b: u32) -> usize {
        let mut best = 0;
        for mask in 0u32..(1 << (n - 1)) {
            if mask.count_ones() as usize > k {
                continue;
            }
            let mut lengths = Vec::new();
            let mut start = 0;
            for c in 0..n - 1 {
                if mask >> c & 1 == 1 {
                    lengths.push(c + 1 - start);
                    start = c + 1;
                }
            }
            lengths.push(n - start);
            let len = gamma_len(lengths.len() as u64)
                + lengths[..lengths.len() - 1].iter().map(|&t| gamma_len(t as u64)).sum::<usize>()
                + lengths.len() * b as usize;
            best = best.max(len);
        }
        best
    }

    #[test]
    fn max_len_matches_brute_force() {
        for n in 1..=12 {
            for k in 0..n {
                for b in [1, 3] {
                    assert_eq!(max_pwc_len(n, k, b), brute_max_len(n, k, b), "n={n} k={k} b={b}");
                }
            }
        }
    }

    #[test]
    fn scalar_code_examples() {
        let code = BlockCode::scalar_iid(1, 1, unit()).unwrap();
        let enc = code.encode(&[0.3]).unwrap();
        assert_eq!(enc.to_string(), "0");
        assert_eq!(code.decode(&enc).unwrap(), vec![0.25]);
        assert!(code.decode(&bits("01")).is_err());
        assert!(code.encode(&[0.1, 0.2]).is_err());

        let code = BlockCode::scalar_iid(32, 5, unit()).unwrap();
        let spec = SourceSpec::continuous_iid(unit()).unwrap();
        for seed in 0..1000 {
            let x = sample_block(&spec, 32, seed).unwrap();
            let enc = code.encode(&x).unwrap();
            assert_eq!(enc.len(), 32 * 5);
            let y = code.decode(&enc).unwrap();
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() <= 1.0 / 64.0);
            }
        }
    }

    #[test]
    fn codebook_small_cases() {
        let code = BlockCode::piecewise_constant(3, 1, Some(1), unit(), LengthMode::VariableLength).unwrap();
        assert_eq!(code.predicted_codebook_size(), 6);
        let cb = enumerate_codebook(&code, 100).unwrap();
        assert_eq!(cb.len(), 6);

        // exhaustive oracle: every level sequence with at most one change
        let mut expected = Vec::new();
        for a in [0.25, 0.75] {
            for b in [0.25, 0.75] {
                for c in [0.25, 0.75] {
                    let v = vec![a, b, c];
                    let changes = v.windows(2).filter(|w| w[0] != w[1]).count();
                    if changes <= 1 {
                        expected.push(v);
                    }
                }
            }
        }
        let mut got: Vec<Vec<f64>> = cb.vectors().map(|v| v.to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, expected);

        let code = BlockCode::scalar_iid(2, 1, unit()).unwrap();
        let cb = enumerate_codebook(&code, 100).unwrap();
        let got: Vec<Vec<f64>> = cb.vectors().map(|v| v.to_vec()).collect();
        assert_eq!(
            got,
            vec![vec![0.25, 0.25], vec![0.25, 0.75], vec![0.75, 0.25], vec![0.75, 0.75]]
        );
        assert_eq!(cb.declared_rate(), 1.0);
    }

    #[test]
    fn codebook_capacity_error_reports_size() {
        let code = BlockCode::piecewise_constant(24, 3, Some(2), unit(), LengthMode::FixedLength).unwrap();
        assert_eq!(code.predicted_codebook_size(), 8 + 23 * 8 * 7 + 253 * 8 * 49);
        match enumerate_codebook(&code, 1000) {
            Err(Error::Capacity { predicted, cap }) => {
                assert_eq!(predicted, 100_472);
                assert_eq!(cap, 1000);
            }
            other => panic!("unexpected {other:?}"),
        }
        let huge = BlockCode::scalar_iid(200, 8, unit()).unwrap();
        assert_eq!(huge.predicted_codebook_size(), u128::MAX);
    }

    #[test]
    fn codebook_fixed_point_and_distinctness() {
        for mode in [LengthMode::FixedLength, LengthMode::VariableLength] {
            let code = BlockCode::piecewise_constant(7, 2, Some(3), unit(), mode).unwrap();
            let cb = enumerate_codebook(&code, DEFAULT_CODEBOOK_CAP).unwrap();
            assert_eq!(cb.len() as u128, code.predicted_codebook_size());
            let mut seen = std::collections::HashSet::new();
            for i in 0..cb.len() {
                let v = cb.vector(i);
                assert!(seen.insert(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()));
                assert_eq!(code.decode(cb.label(i)).unwrap(), v);
                assert_eq!(&code.encode(v).unwrap(), cb.label(i));
            }
            assert!((0..cb.len() - 1).all(|i| cb.label(i) < cb.label(i + 1)));
            if mode == LengthMode::FixedLength {
                assert!(cb.len() as f64 <= 2f64.powf(7.0 * cb.declared_rate()));
            } else {
                let l = (cb.declared_rate() * 7.0).round() as i32;
                assert!(cb.len() as f64 <= 2f64.powi(l + 1) - 1.0);
            }
        }
    }

    #[test]
    fn codebook_csv_layout() {
        let code = BlockCode::scalar_iid(2, 1, unit()).unwrap();
        let cb = enumerate_codebook(&code, 100).unwrap();
        let mut buf = Vec::new();
        cb.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,bitstring,v_1,v_2");
        assert_eq!(lines[1], "0,00,0.25,0.25");
        assert_eq!(lines[4], "3,11,0.75,0.75");
    }

    #[test]
    fn scalar_code_distortion_on_uniform_source() {
        let code = BlockCode::scalar_iid(64, 4, unit()).unwrap();
        let spec = SourceSpec::continuous_iid(unit()).unwrap();
        let rep = empirical_rate_distortion(&code, &spec, 400, 1, None).unwrap();
        assert_eq!(rep.mean_rate, 4.0);
        assert!(rep.mean_distortion >= 0.0 && rep.mean_distortion <= 1.0 / 1024.0);
        // uniform error inside a cell of width 1/16: second moment (1/16)^2 / 12
        let oracle = (1.0f64 / 16.0).powi(2) / 12.0;
        assert!((rep.mean_distortion - oracle).abs() < 0.05 * oracle);
        assert_eq!(rep.excess_prob, 0.0);
    }

    #[test]
    fn pwc_codec_never_exceeds_its_worst_case() {
        let code = BlockCode::piecewise_constant(256, 5, None, unit(), LengthMode::VariableLength).unwrap();
        let spec = SourceSpec::piecewise_markov(0.1, unit()).unwrap();
        let rep = empirical_rate_distortion(&code, &spec, 100, 9, None).unwrap();
        assert_eq!(rep.threshold, (1.0f64 / 64.0).powi(2));
        assert_eq!(rep.excess_prob, 0.0);
        assert_eq!(rep.trials.len(), 100);
        assert!(empirical_rate_distortion(&code, &spec, 0, 9, None).is_err());
    }

    proptest! {
        #[test]
        fn gamma_sequences_are_prefix_free(values in proptest::collection::vec(1u64..u64::MAX, 0..20)) {
            let mut stream = BitString::new();
            for &v in &values {
                write_gamma(&mut stream, v);
            }
            let mut cursor = BitCursor::new(&stream);
            for &v in &values {
                prop_assert_eq!(cursor.read_gamma().unwrap(), v);
            }
            prop_assert_eq!(cursor.remaining(), 0);
        }

        #[test]
        fn pwc_preserves_run_structure(seed in any::<u64>(), n in 1usize..300, p in 0.01f64..0.5, b in 1u32..12) {
            let spec = SourceSpec::piecewise_markov(p, unit()).unwrap();
            let x = sample_block(&spec, n, seed).unwrap();
            let code = BlockCode::piecewise_constant(n, b, None, unit(), LengthMode::VariableLength).unwrap();
            let enc = code.encode(&x).unwrap();
            let y = code.decode(&enc).unwrap();
            let rx = decompose_runs(&x).unwrap();
            let ry = code.decode_runs(&enc).unwrap();
            prop_assert_eq!(&ry.run_lengths, &rx.run_lengths);
            prop_assert_eq!(ry.reassemble(), y.clone());
            let bound = code.worst_case_distortion() * (1.0 + 1e-12);
            for (a, c) in x.iter().zip(&y) {
                prop_assert!((a - c).powi(2) <= bound);
            }
        }
    }
}
