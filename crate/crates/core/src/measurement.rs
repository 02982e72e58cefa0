//! Gaussian measurement operators, additive noise, and the concentration
//! bounds the recovery guarantees rest on.

use std::io::{self, Write};

use crate::error::{param, Result};
use crate::rng::GaussianStream;

/// Dense `m x n` sensing matrix with i.i.d. Gaussian entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSystem {
    rows: usize,
    cols: usize,
    seed: u64,
    normalize_columns: bool,
    entries: Vec<f64>,
}

impl MeasurementSystem {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Whether entries were scaled to variance `1/n`.
    pub fn normalize_columns(&self) -> bool {
        self.normalize_columns
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Build from explicit row-major entries.
    pub fn from_rows(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(param("dimensions", "matrix dimensions must be positive"));
        }
        if entries.len() != rows * cols {
            return Err(param(
                "entries",
                format!("{} entries for a {rows}x{cols} matrix", entries.len()),
            ));
        }
        Ok(Self {
            rows,
            cols,
            seed: 0,
            normalize_columns: false,
            entries,
        })
    }

    /// `A x` with left-to-right accumulation per row.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(param(
                "x",
                format!("vector of length {} for a matrix with {} columns", x.len(), self.cols),
            ));
        }
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).fold(0.0, |acc, (a, v)| acc + a * v))
            .collect()
    }

    fn apply_transpose(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &wi) in w.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * wi;
            }
        }
        out
    }

    /// CSV, one matrix row per line, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Draw an `m x n` matrix with i.i.d. `N(0, 1)` entries.
pub fn sample_matrix(m: usize, n: usize, seed: u64) -> Result<MeasurementSystem> {
    sample_matrix_scaled(m, n, seed, false)
}

/// As [`sample_matrix`], optionally scaling entries to `N(0, 1/n)`.
pub fn sample_matrix_scaled(
    m: usize,
    n: usize,
    seed: u64,
    normalize_columns: bool,
) -> Result<MeasurementSystem> {
    if m == 0 || n == 0 {
        return Err(param("dimensions", format!("need m, n >= 1, got {m}x{n}")));
    }
    let mut entries = vec![0.0; m * n];
    GaussianStream::new(seed).fill(&mut entries);
    if normalize_columns {
        let scale = 1.0 / (n as f64).sqrt();
        entries.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(MeasurementSystem {
        rows: m,
        cols: n,
        seed,
        normalize_columns,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    None,
    GaussianIid { sigma: f64 },
}

impl NoiseSpec {
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::GaussianIid { sigma } => sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sigma();
        if !(s >= 0.0 && s.is_finite()) {
            return Err(param("noise.sigma", format!("{s} must be finite and >= 0")));
        }
        Ok(())
    }
}

/// `y = A x + z` where `z` is drawn from `noise` under `seed`.
pub fn measure(sys: &MeasurementSystem, x: &[f64], noise: NoiseSpec, seed: u64) -> Result<Vec<f64>> {
    noise.validate()?;
    let mut y = sys.apply(x)?;
    let sigma = noise.sigma();
    if sigma > 0.0 {
        let mut g = GaussianStream::new(seed);
        for v in y.iter_mut() {
            *v += sigma * g.next_normal();
        }
    }
    Ok(y)
}

/// Largest singular value by power iteration on the smaller Gram matrix
/// (`A A^T` when `m <= n`, else `A^T A`); both share the nonzero spectrum.
///
/// Starts from the normalized all-ones vector and stops once the Rayleigh
/// quotient changes by less than `1e-10` relative, or after `10^4` steps.
pub fn max_singular_value(sys: &MeasurementSystem) -> f64 {
    let (m, n) = (sys.rows, sys.cols);
    let dim = m.min(n);
    let mut gram = vec![0.0; dim * dim];
    if m <= n {
        for i in 0..m {
            for j in i..m {
                let v: f64 = sys.row(i).iter().zip(sys.row(j)).map(|(a, b)| a * b).sum();
                gram[i * dim + j] = v;
                gram[j * dim + i] = v;
            }
        }
    } else {
        for i in 0..m {
            let r = sys.row(i);
            for a in 0..n {
                for b in a..n {
                    gram[a * dim + b] += r[a] * r[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                gram[a * dim + b] = gram[b * dim + a];
            }
        }
    }
    top_eigenvalue(&gram, dim).max(0.0).sqrt()
}

/// Power iteration for the top eigenvalue of a symmetric PSD matrix.
fn top_eigenvalue(g: &[f64], dim: usize) -> f64 {
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut w = vec![0.0; dim];
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = g[i * dim..(i + 1) * dim].iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        // v is unit, so v.Gv is the Rayleigh quotient
        let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        let converged = (next - lambda).abs() < 1e-10 * next.abs();
        lambda = next;
        if converged {
            break;
        }
    }
    lambda
}

/// Power iteration on `A^T A` directly, without forming a Gram matrix.
pub fn max_singular_value_direct(sys: &MeasurementSystem) -> f64 {
    let mut v = vec![1.0 / (sys.cols as f64).sqrt(); sys.cols];
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = sys.apply_unchecked(&v);
        let next: f64 = w.iter().map(|a| a * a).sum();
        let u = sys.apply_transpose(&w);
        let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = ui / norm;
        }
        let converged = (next - lambda).abs() < 1e-10 * next.abs();
        lambda = next;
        if converged {
            break;
        }
    }
    lambda.sqrt()
}

/// Gaussian-width tail `exp(-m t^2 / 2)` on `P(sigma_max - sqrt(m) - sqrt(n) >= t sqrt(m))`.
pub fn sigma_max_tail_bound(m: usize, t: f64) -> f64 {
    (-(m as f64) * t * t / 2.0).exp()
}

/// Chi-square tail bounds for `sum_{i<=m} Z_i^2` with `Z_i ~ N(0, 1)`:
/// `P(sum < m(1-tau)) <= exp(m/2 (tau + ln(1-tau)))` and
/// `P(sum > m(1+tau)) <= exp(-m/2 (tau - ln(1+tau)))`.
pub fn chi2_tail_bounds(m: usize, tau: f64) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(param("m", "need at least one degree of freedom"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(param("tau", format!("{tau} outside (0, 1)")));
    }
    Ok((chi2_lower_tail_bound(m, tau), chi2_upper_tail_bound(m, tau)))
}

fn chi2_lower_tail_bound(m: usize, tau: f64) -> f64 {
    (m as f64 / 2.0 * (tau + (-tau).ln_1p())).exp()
}

/// Upper-tail member alone; valid for every `tau > 0`.
pub fn chi2_upper_tail_bound(m: usize, tau: f64) -> f64 {
    (-(m as f64) / 2.0 * (tau - tau.ln_1p())).exp()
}

/// Noise level `sigma` such that `P(||z||_2 / sqrt(m) > sigma_m) <= eps_m`
/// for `z ~ N(0, sigma^2 I_m)`, certified by the chi-square upper tail.
pub fn noise_sigma_for(m: usize, sigma_m: f64, eps_m: f64) -> Result<f64> {
    if m == 0 {
        return Err(param("m", "need at least one measurement"));
    }
    if !(sigma_m >= 0.0 && sigma_m.is_finite()) {
        return Err(param("noise.sigma_m", format!("{sigma_m} must be finite and >= 0")));
    }
    if !(eps_m > 0.0 && eps_m < 1.0) {
        return Err(param("noise.epsilon_m", format!("{eps_m} outside (0, 1)")));
    }
    // the bound decreases in tau; bracket then bisect
    let mut hi = 1.0;
    while chi2_upper_tail_bound(m, hi) > eps_m {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_upper_tail_bound(m, mid) > eps_m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(sigma_m / (1.0 + hi).sqrt())
}

/// Measurement count `ceil(2 eta n R / log2(1/D))`, at least one.
pub fn required_measurements(n: usize, rate: f64, distortion: f64, eta: f64) -> Result<usize> {
    if n == 0 {
        return Err(param("n", "blocklength must be positive"));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(param("rate", format!("{rate} must be positive")));
    }
    if !(distortion > 0.0 && distortion < 1.0) {
        return Err(param("distortion", format!("{distortion} outside (0, 1)")));
    }
    if !(eta > 1.0 && eta.is_finite()) {
        return Err(param("eta", format!("{eta} must exceed 1")));
    }
    let raw = 2.0 * eta * n as f64 * rate / (1.0 / distortion).log2();
    Ok(ceil_tolerant(raw).max(1))
}

/// Ceiling that ignores rounding residue of a few ulps above an integer.
pub(crate) fn ceil_tolerant(x: f64) -> usize {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-12 * nearest.abs().max(1.0) {
        nearest as usize
    } else {
        x.ceil() as usize
    }
}
