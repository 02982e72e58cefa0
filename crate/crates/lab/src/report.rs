//! Experiment results: CSV emission, reload and summaries.

use std::fmt::Write as _;
use std::path::Path;

use csp_core::codecs::CodeKind;
use csp_core::dimensions::{binary_entropy, ls_slope, shannon_lower_bound};
use csp_core::source_models::ContinuousDist;

use crate::config::ExperimentKind;
use crate::error::{LabError, LabResult};

/// Round-trip formatting used for every float in a CSV.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// One line of a summary: a quantity, what theory allows, what was seen.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub quantity: String,
    pub bound: String,
    pub empirical: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    fn push(&mut self, quantity: impl Into<String>, bound: impl Into<String>, empirical: impl Into<String>) {
        self.rows.push(SummaryRow {
            quantity: quantity.into(),
            bound: bound.into(),
            empirical: empirical.into(),
        });
    }

    pub fn get(&self, quantity: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub meta: Vec<(String, String)>,
    /// Column names; empty for a block dump.
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: Summary,
}

fn has_header(kind: ExperimentKind) -> bool {
    kind != ExperimentKind::Sample
}

impl ExperimentResult {
    pub fn new(
        kind: ExperimentKind,
        meta: Vec<(String, String)>,
        header: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> LabResult<Self> {
        let summary = summarize(kind, &meta, &header, &rows)?;
        Ok(Self {
            kind,
            meta,
            header,
            rows,
            summary,
        })
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        meta_value(&self.meta, key)
    }

    /// Values of one column.
    pub fn column(&self, name: &str) -> LabResult<Vec<&str>> {
        let i = column_index(&self.header, name)?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    /// `# key=value ...` line, header line, then one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if !self.meta.is_empty() {
            let fields: Vec<String> = self.meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
            out.push_str("# ");
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
        if !self.header.is_empty() {
            out.push_str(&self.header.join(","));
            out.push('\n');
        }
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parse a CSV written by [`to_csv`](Self::to_csv) and recompute the summary.
    pub fn from_csv(kind: ExperimentKind, text: &str) -> LabResult<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
        let mut meta = Vec::new();
        if let Some(line) = lines.peek() {
            if let Some(fields) = line.strip_prefix("# ") {
                for field in fields.split_whitespace() {
                    let (k, v) = field
                        .split_once('=')
                        .ok_or_else(|| LabError::Runtime(format!("malformed meta field `{field}`")))?;
                    meta.push((k.to_owned(), v.to_owned()));
                }
                lines.next();
            }
        }
        let header: Vec<String> = if has_header(kind) {
            lines
                .next()
                .ok_or_else(|| LabError::Runtime("missing header line".into()))?
                .split(',')
                .map(str::to_owned)
                .collect()
        } else {
            Vec::new()
        };
        let rows = lines
            .map(|l| l.split(',').map(str::to_owned).collect())
            .collect();
        Self::new(kind, meta, header, rows)
    }

    pub fn emit_csv(&self, path: &Path) -> LabResult<()> {
        std::fs::write(path, self.to_csv()).map_err(|source| LabError::Io {
            path: path.to_owned(),
            source,
        })
    }

    /// Human-readable table with bounds and empirical values side by side.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let meta: Vec<String> = self.meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(out, "{}: {}", self.kind, meta.join(" "));
        let titles = ["quantity", "bound", "empirical"];
        let mut widths = titles.map(str::len);
        for r in &self.summary.rows {
            widths[0] = widths[0].max(r.quantity.len());
            widths[1] = widths[1].max(r.bound.len());
            widths[2] = widths[2].max(r.empirical.len());
        }
        let line = |out: &mut String, a: &str, b: &str, c: &str| {
            let _ = writeln!(
                out,
                "  {a:<w0$}  {b:<w1$}  {c:<w2$}",
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2]
            );
        };
        line(&mut out, titles[0], titles[1], titles[2]);
        for r in &self.summary.rows {
            line(&mut out, &r.quantity, &r.bound, &r.empirical);
        }
        out
    }
}

fn meta_value<'a>(meta: &'a [(String, String)], key: &str) -> Option<&'a str> {
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn meta_f64(meta: &[(String, String)], key: &str) -> LabResult<f64> {
    meta_value(meta, key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| LabError::Runtime(format!("meta field `{key}` missing or malformed")))
}

fn column_index(header: &[String], name: &str) -> LabResult<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| LabError::Runtime(format!("missing column `{name}`")))
}

fn parse_cell<T: std::str::FromStr>(cell: &str) -> LabResult<T> {
    cell.parse()
        .map_err(|_| LabError::Runtime(format!("malformed cell `{cell}`")))
}

fn column_values<T: std::str::FromStr>(header: &[String], rows: &[Vec<String>], name: &str) -> LabResult<Vec<T>> {
    let i = column_index(header, name)?;
    rows.iter()
        .map(|r| {
            r.get(i)
                .ok_or_else(|| LabError::Runtime(format!("short row in column `{name}`")))
                .and_then(|c| parse_cell(c))
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn frac(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

/// Frequency with its Monte-Carlo standard error.
fn freq_text(hits: usize, total: usize) -> String {
    let f = frac(hits, total);
    let se = (f * (1.0 - f) / total as f64).sqrt();
    format!("{} ({hits}/{total}, se {})", fmt_short(f), fmt_short(se))
}

fn fmt_short(v: f64) -> String {
    format!("{v:.4}")
}

/// Success rates of a measurement sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub ratios: Vec<f64>,
    pub measurements: Vec<usize>,
    pub rates: Vec<f64>,
    /// Three-point running median of `rates`, endpoints kept.
    pub smoothed: Vec<f64>,
    pub nondecreasing: bool,
    /// Smallest ratio whose smoothed rate reaches `level`.
    pub threshold: Option<f64>,
}

pub const SWEEP_LEVEL: f64 = 0.95;

pub fn median3_smooth(xs: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            if i == 0 || i + 1 == xs.len() {
                xs[i]
            } else {
                let mut w = [xs[i - 1], xs[i], xs[i + 1]];
                w.sort_by(f64::total_cmp);
                w[1]
            }
        })
        .collect()
}

/// Group sweep rows by ratio, in row order.
pub fn sweep_curve(header: &[String], rows: &[Vec<String>]) -> LabResult<SweepCurve> {
    let ratios: Vec<f64> = column_values(header, rows, "ratio")?;
    let ms: Vec<usize> = column_values(header, rows, "m")?;
    let success: Vec<bool> = column_values(header, rows, "success")?;
    let mut curve = SweepCurve {
        ratios: Vec::new(),
        measurements: Vec::new(),
        rates: Vec::new(),
        smoothed: Vec::new(),
        nondecreasing: true,
        threshold: None,
    };
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for i in 0..ratios.len() {
        if curve.ratios.last() != Some(&ratios[i]) {
            curve.ratios.push(ratios[i]);
            curve.measurements.push(ms[i]);
            counts.push((0, 0));
        }
        let c = counts.last_mut().unwrap();
        c.0 += success[i] as usize;
        c.1 += 1;
    }
    curve.rates = counts.iter().map(|&(s, t)| frac(s, t)).collect();
    curve.smoothed = median3_smooth(&curve.rates);
    curve.nondecreasing = curve.smoothed.windows(2).all(|w| w[0] <= w[1]);
    curve.threshold = curve
        .ratios
        .iter()
        .zip(&curve.smoothed)
        .find(|(_, &s)| s >= SWEEP_LEVEL)
        .map(|(&r, _)| r);
    Ok(curve)
}

fn summarize(
    kind: ExperimentKind,
    meta: &[(String, String)],
    header: &[String],
    rows: &[Vec<String>],
) -> LabResult<Summary> {
    if rows.is_empty() {
        return Err(LabError::Runtime("result has no rows".into()));
    }
    let mut s = Summary::default();
    match kind {
        ExperimentKind::Sample => {
            let xs: Vec<f64> = rows.iter().map(|r| parse_cell(&r[0])).collect::<LabResult<_>>()?;
            let jumps = xs.windows(2).filter(|w| w[0] != w[1]).count();
            let p = meta_f64(meta, "p")?;
            s.push("letters", "-", xs.len().to_string());
            s.push("mean", "-", fmt_short(mean(&xs)));
            if xs.len() > 1 {
                s.push("change rate", fmt_short(p), fmt_short(frac(jumps, xs.len() - 1)));
            }
        }
        ExperimentKind::CodecEval => {
            let rate: Vec<f64> = column_values(header, rows, "rate")?;
            let dist: Vec<f64> = column_values(header, rows, "distortion")?;
            let excess: Vec<bool> = column_values(header, rows, "excess")?;
            let threshold: Vec<f64> = column_values(header, rows, "threshold")?;
            let d_op = mean(&dist);
            let p = meta_f64(meta, "p")?;
            let b = meta_f64(meta, "b")?;
            let value_dist = ContinuousDist::uniform(meta_f64(meta, "lower")?, meta_f64(meta, "upper")?)?;
            let codec: CodeKind = meta_value(meta, "codec").unwrap_or("").parse()?;
            let upper = match codec {
                CodeKind::ScalarIid => b,
                CodeKind::PiecewiseConstant => binary_entropy(p) + p * b,
            };
            let lower = p * shannon_lower_bound(&value_dist, d_op);
            s.push(
                "mean rate",
                format!("[{}, {}]", fmt_short(lower), fmt_short(upper)),
                fmt_short(mean(&rate)),
            );
            s.push("mean distortion", format!("{:.4e}", threshold[0]), format!("{d_op:.4e}"));
            s.push("excess distortion", "-", freq_text(excess.iter().filter(|&&e| e).count(), rows.len()));
        }
        ExperimentKind::CspRun | ExperimentKind::UcspRun => {
            let success: Vec<bool> = column_values(header, rows, "success")?;
            let err: Vec<f64> = column_values(header, rows, "per_letter_error")?;
            let threshold: Vec<f64> = column_values(header, rows, "threshold")?;
            let pb = meta_f64(meta, "probability_bound")?;
            let failures = success.iter().filter(|&&ok| !ok).count();
            s.push("failure probability", fmt_short(pb.min(1.0)), freq_text(failures, rows.len()));
            s.push("mean per-letter error", fmt_short(threshold[0]), fmt_short(mean(&err)));
            if kind == ExperimentKind::UcspRun {
                let agree: Vec<bool> = column_values(header, rows, "matches_csp")?;
                s.push(
                    "agreement with csp",
                    "1.0000",
                    freq_text(agree.iter().filter(|&&a| a).count(), rows.len()),
                );
            }
        }
        ExperimentKind::SweepM => {
            let curve = sweep_curve(header, rows)?;
            for i in 0..curve.ratios.len() {
                s.push(
                    format!("success m/n={} (m={})", curve.ratios[i], curve.measurements[i]),
                    "-",
                    format!("{} (smoothed {})", fmt_short(curve.rates[i]), fmt_short(curve.smoothed[i])),
                );
            }
            s.push("nondecreasing", "-", curve.nondecreasing.to_string());
            s.push(
                "95% threshold m/n",
                meta_value(meta, "nominal_dim").unwrap_or("-"),
                curve.threshold.map_or("none".into(), |t| t.to_string()),
            );
        }
        ExperimentKind::DimEstimate => {
            let reference = meta_value(meta, "nominal_dim").unwrap_or("-").to_owned();
            match header.first().map(String::as_str) {
                Some("b") => {
                    let (grid, slope_rows): (Vec<&Vec<String>>, Vec<&Vec<String>>) =
                        rows.iter().partition(|r| r[0] != "slope");
                    let bs: Vec<f64> = grid.iter().map(|r| parse_cell(&r[0])).collect::<LabResult<_>>()?;
                    let hn: Vec<f64> = grid.iter().map(|r| parse_cell(&r[1])).collect::<LabResult<_>>()?;
                    let hs: Vec<f64> = bs.iter().zip(&hn).map(|(b, h)| b * h).collect();
                    let slope = match slope_rows.first() {
                        Some(r) => parse_cell(&r[1])?,
                        None => ls_slope(&bs, &hs),
                    };
                    s.push("information dimension", reference, fmt_short(slope));
                }
                _ => {
                    let d: Vec<f64> = column_values(header, rows, "D")?;
                    let r: Vec<f64> = column_values(header, rows, "R")?;
                    let xs: Vec<f64> = d.iter().map(|d| (1.0 / d).log2()).collect();
                    s.push(
                        "rate-distortion dimension",
                        reference,
                        fmt_short(2.0 * ls_slope(&xs, &r)),
                    );
                }
            }
        }
        ExperimentKind::Bounds => {
            let eta: Vec<f64> = column_values(header, rows, "eta")?;
            let m: Vec<usize> = column_values(header, rows, "m")?;
            let pb: Vec<f64> = column_values(header, rows, "probability_bound")?;
            let trials: Vec<usize> = column_values(header, rows, "trials")?;
            let failures: Vec<usize> = column_values(header, rows, "failures")?;
            for i in 0..rows.len() {
                s.push(
                    format!("failure eta={} (m={})", eta[i], m[i]),
                    fmt_short(pb[i].min(1.0)),
                    freq_text(failures[i], trials[i]),
                );
            }
        }
    }
    Ok(s)
}
