//! Discretization operators and the uniform scalar quantizer.

use crate::error::{param, Result};

fn pow2(b: u32) -> f64 {
    2f64.powi(b as i32)
}

/// `[x]_b`: the integer part of `x` plus the first `b` binary digits of
/// its fractional part. Rounds toward negative infinity. Exact whenever
/// `[x]_b` is representable, i.e. for `|x| < 2^{52 - b}`.
pub fn bit_approx(x: f64, b: u32) -> f64 {
    let whole = x.floor();
    let scale = pow2(b);
    // frac and the scalings below are exact in binary floating point
    whole + ((x - whole) * scale).floor() / scale
}

/// Integer label of `[x]_b`, i.e. `2^b [x]_b = floor(2^b x)`.
pub fn bit_approx_index(x: f64, b: u32) -> i64 {
    (x * pow2(b)).floor() as i64
}

/// `<x>_b = floor(b x) / b`.
///
/// A product `b x` that lands within a few ulps of an integer is taken to be
/// that integer, so decimal inputs such as `-0.1` behave as the rationals
/// they denote.
pub fn grid_quantize(x: f64, b: u32) -> f64 {
    let scale = b as f64;
    let product = scale * x;
    let nearest = product.round();
    let snapped = if (product - nearest).abs() <= 4.0 * f64::EPSILON * nearest.abs().max(1.0) {
        nearest
    } else {
        product.floor()
    };
    snapped / scale
}

/// Uniform quantizer with `2^bits` cells over `[lower, upper]` and
/// midpoint reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarQuantizer {
    lower: f64,
    upper: f64,
    bits: u32,
}

impl ScalarQuantizer {
    pub const MAX_BITS: u32 = 52;

    pub fn new(lower: f64, upper: f64, bits: u32) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(param(
                "quantizer",
                format!("need finite lower < upper, got ({lower}, {upper})"),
            ));
        }
        if bits == 0 || bits > Self::MAX_BITS {
            return Err(param(
                "bits",
                format!("{bits} outside 1..={}", Self::MAX_BITS),
            ));
        }
        Ok(Self { lower, upper, bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn cell_width(&self) -> f64 {
        (self.upper - self.lower) / pow2(self.bits)
    }

    /// Worst-case absolute error, `(u - l) 2^{-b-1}`.
    pub fn max_abs_error(&self) -> f64 {
        self.cell_width() / 2.0
    }

    /// Worst-case squared error per letter.
    pub fn max_sq_error(&self) -> f64 {
        let e = self.max_abs_error();
        e * e
    }

    /// Cell index of `x`. Inputs outside the range land in the boundary cells.
    pub fn encode(&self, x: f64) -> u64 {
        let t = (x - self.lower) / (self.upper - self.lower) * pow2(self.bits);
        if !(t > 0.0) {
            return 0;
        }
        (t.floor() as u64).min(self.levels() - 1)
    }

    /// Midpoint of cell `index`.
    pub fn decode(&self, index: u64) -> Result<f64> {
        if index >= self.levels() {
            return Err(param(
                "index",
                format!("{index} outside [0, {})", self.levels()),
            ));
        }
        Ok(self.lower + (index as f64 + 0.5) * self.cell_width())
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.lower + (self.encode(x) as f64 + 0.5) * self.cell_width()
    }
}
