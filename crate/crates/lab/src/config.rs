//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use csp_core::codecs::{BlockCode, CodeKind, LengthMode};
use csp_core::csp::NoiseModel;
use csp_core::source_models::{ContinuousDist, SourceKind, SourceSpec};
use csp_core::Error as CoreError;

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Sample,
    CodecEval,
    CspRun,
    UcspRun,
    SweepM,
    DimEstimate,
    Bounds,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Sample,
        ExperimentKind::CodecEval,
        ExperimentKind::CspRun,
        ExperimentKind::UcspRun,
        ExperimentKind::SweepM,
        ExperimentKind::DimEstimate,
        ExperimentKind::Bounds,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Sample => "sample",
            ExperimentKind::CodecEval => "codec-eval",
            ExperimentKind::CspRun => "csp-run",
            ExperimentKind::UcspRun => "ucsp-run",
            ExperimentKind::SweepM => "sweep-m",
            ExperimentKind::DimEstimate => "dim-estimate",
            ExperimentKind::Bounds => "bounds",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = LabError;

    fn from_str(s: &str) -> LabResult<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::config("experiment", format!("unknown experiment `{s}`")))
    }
}

/// What a dimension experiment estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimTarget {
    /// Information dimension from quantized entropies.
    Id,
    /// Rate-distortion dimension from an operational codec curve.
    Rdd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecParams {
    pub kind: CodeKind,
    pub bits: u32,
    /// `None` admits every run pattern.
    pub max_jumps: Option<usize>,
    pub mode: LengthMode,
}

impl CodecParams {
    pub fn build(&self, n: usize, dist: ContinuousDist) -> csp_core::Result<BlockCode> {
        match self.kind {
            CodeKind::ScalarIid => BlockCode::scalar_iid(n, self.bits, dist),
            CodeKind::PiecewiseConstant => {
                BlockCode::piecewise_constant(n, self.bits, self.max_jumps, dist, self.mode)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UcspParams {
    /// Bit budget; defaults to the longest codeword of the code.
    pub budget: Option<usize>,
    pub cap: u64,
    pub rate_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepParams {
    pub ratios: Vec<f64>,
    /// Success means a per-letter error at most this.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimParams {
    pub target: DimTarget,
    pub k: usize,
    pub n_samples: usize,
    pub b_grid: Vec<u32>,
    pub rd_bits: Vec<u32>,
    pub rd_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub source: SourceSpec,
    pub codec: CodecParams,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every logical processor.
    pub threads: usize,
    pub eta: f64,
    pub alpha: f64,
    pub noise: NoiseModel,
    pub normalize_columns: bool,
    pub measurements: Option<usize>,
    pub epsilon_code: Option<f64>,
    pub codebook_cap: usize,
    pub codec_threshold: Option<f64>,
    pub ucsp: UcspParams,
    pub sweep: SweepParams,
    pub dim: DimParams,
    pub bound_etas: Vec<f64>,
}

/// Every recognized key with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "1"),
    ("trials", "100"),
    ("n", "24"),
    ("threads", "0"),
    ("eta", "2"),
    ("alpha", "0.1"),
    ("source.kind", "piecewise-markov"),
    ("source.p", "0.1"),
    ("source.lower", "0"),
    ("source.upper", "1"),
    ("codec.kind", "piecewise-constant"),
    ("codec.b", "3"),
    ("codec.max_jumps", "2"),
    ("codec.mode", "fixed"),
    ("codebook.cap", "2097152"),
    ("noise.sigma_m", "0"),
    ("noise.epsilon_m", "0.05"),
    ("measurement.normalize_columns", "false"),
    ("measurement.m", "auto"),
    ("csp.epsilon_code", "auto"),
    ("codec_eval.threshold", "auto"),
    ("ucsp.budget", "auto"),
    ("ucsp.cap", "268435456"),
    ("ucsp.rate_slack", "none"),
    ("sweep.ratios", "0.02,0.05,0.1,0.15,0.2,0.25,0.3,0.4,0.5,0.6,0.75,1"),
    ("sweep.tolerance", "0.15"),
    ("dim.target", "id"),
    ("dim.k", "0"),
    ("dim.n_samples", "100000"),
    ("dim.b_grid", "2..10"),
    ("dim.rd_bits", "6..14"),
    ("dim.rd_trials", "200"),
    ("bounds.etas", "1.5,2,3,4"),
];

/// Parse `key = value` lines. `#` starts a comment; a key may appear once.
pub fn parse_pairs(text: &str) -> LabResult<Vec<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            LabError::config(line, format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim().to_owned();
        if pairs.iter().any(|(k, _)| *k == key) {
            return Err(LabError::config(key, format!("line {}: duplicate key", lineno + 1)));
        }
        pairs.push((key, value.trim().to_owned()));
    }
    Ok(pairs)
}

/// Parse a `--set key=value` override.
pub fn parse_override(s: &str) -> LabResult<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| LabError::config(s, "override must look like key=value"))?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

struct Values {
    map: BTreeMap<String, String>,
}

impl Values {
    fn raw(&self, key: &str) -> &str {
        &self.map[key]
    }

    fn get<T: FromStr>(&self, key: &str) -> LabResult<T> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| LabError::config(key, format!("cannot parse `{raw}`")))
    }

    /// `None` when the value is `auto` or `none`.
    fn optional<T: FromStr>(&self, key: &str) -> LabResult<Option<T>> {
        match self.raw(key) {
            "auto" | "none" | "all" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    fn real(&self, key: &str) -> LabResult<f64> {
        let v: f64 = self.get(key)?;
        if !v.is_finite() {
            return Err(LabError::config(key, format!("{v} is not finite")));
        }
        Ok(v)
    }

    fn reals(&self, key: &str) -> LabResult<Vec<f64>> {
        self.raw(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| LabError::config(key, format!("cannot parse `{}`", s.trim())))
            })
            .collect()
    }

    /// Comma list of integers or an inclusive range `a..b`.
    fn ints(&self, key: &str) -> LabResult<Vec<u32>> {
        let raw = self.raw(key);
        let bad = || LabError::config(key, format!("cannot parse `{raw}`"));
        if let Some((a, b)) = raw.split_once("..") {
            let a: u32 = a.trim().parse().map_err(|_| bad())?;
            let b: u32 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(LabError::config(key, format!("empty range `{raw}`")));
            }
            return Ok((a..=b).collect());
        }
        raw.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
    }
}

/// Attribute a library parameter error to a config key.
fn at(key: &'static str) -> impl Fn(CoreError) -> LabError {
    move |e| match e {
        CoreError::Parameter { reason, .. } => LabError::config(key, reason),
        other => other.into(),
    }
}

fn require(ok: bool, key: &str, reason: &str) -> LabResult<()> {
    if ok {
        Ok(())
    } else {
        Err(LabError::config(key, reason))
    }
}

impl ExperimentConfig {
    /// Defaults, then the file's keys, then `overrides`; every key is checked
    /// and every module precondition validated before returning.
    pub fn parse(kind: ExperimentKind, text: &str, overrides: &[(String, String)]) -> LabResult<Self> {
        let mut map: BTreeMap<String, String> =
            KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (key, value) in parse_pairs(text)?.into_iter().chain(overrides.iter().cloned()) {
            match map.get_mut(&key) {
                Some(slot) => *slot = value,
                None => return Err(LabError::config(key, "unknown key")),
            }
        }
        let v = Values { map };

        let source_kind: SourceKind = v.get::<String>("source.kind")?.parse().map_err(at("source.kind"))?;
        let dist = ContinuousDist::uniform(v.real("source.lower")?, v.real("source.upper")?)
            .map_err(at("source.upper"))?;
        let p = match source_kind {
            SourceKind::ContinuousIid => 1.0,
            _ => v.real("source.p")?,
        };
        let source = SourceSpec::new(source_kind, p, dist).map_err(at("source.p"))?;

        let codec = CodecParams {
            kind: v.get::<String>("codec.kind")?.parse().map_err(at("codec.kind"))?,
            bits: v.get("codec.b")?,
            max_jumps: v.optional("codec.max_jumps")?,
            mode: v.get::<String>("codec.mode")?.parse().map_err(at("codec.mode"))?,
        };
        require(
            (1..=52).contains(&codec.bits),
            "codec.b",
            "value bits must lie in 1..=52",
        )?;

        let n: usize = v.get("n")?;
        require(n >= 1, "n", "blocklength must be positive")?;
        let trials: usize = v.get("trials")?;
        require(trials >= 1, "trials", "need at least one trial")?;
        let eta = v.real("eta")?;
        require(eta > 1.0, "eta", "must exceed 1")?;
        let alpha = v.real("alpha")?;
        require(alpha > 0.0, "alpha", "must be positive")?;

        let sigma_m = v.real("noise.sigma_m")?;
        require(sigma_m >= 0.0, "noise.sigma_m", "must be >= 0")?;
        let eps_m = v.real("noise.epsilon_m")?;
        require(eps_m > 0.0 && eps_m < 1.0, "noise.epsilon_m", "must lie in (0, 1)")?;
        let noise = if sigma_m > 0.0 {
            NoiseModel::Bounded { sigma_m, eps_m }
        } else {
            NoiseModel::None
        };

        let measurements: Option<usize> = v.optional("measurement.m")?;
        require(measurements != Some(0), "measurement.m", "need at least one measurement")?;
        let epsilon_code: Option<f64> = v.optional("csp.epsilon_code")?;
        if let Some(e) = epsilon_code {
            require((0.0..=1.0).contains(&e), "csp.epsilon_code", "must lie in [0, 1]")?;
        }
        let codec_threshold: Option<f64> = v.optional("codec_eval.threshold")?;
        if let Some(t) = codec_threshold {
            require(t >= 0.0, "codec_eval.threshold", "must be >= 0")?;
        }
        let codebook_cap: usize = v.get("codebook.cap")?;
        require(codebook_cap >= 1, "codebook.cap", "must be positive")?;

        let ucsp = UcspParams {
            budget: v.optional("ucsp.budget")?,
            cap: v.get("ucsp.cap")?,
            rate_slack: v.optional("ucsp.rate_slack")?,
        };
        if let Some(s) = ucsp.rate_slack {
            require(s > 0.0, "ucsp.rate_slack", "must be positive")?;
        }

        let sweep = SweepParams {
            ratios: v.reals("sweep.ratios")?,
            tolerance: v.real("sweep.tolerance")?,
        };
        require(
            sweep.ratios.iter().all(|&r| r > 0.0),
            "sweep.ratios",
            "ratios must be positive",
        )?;
        require(
            sweep.ratios.windows(2).all(|w| w[0] < w[1]),
            "sweep.ratios",
            "ratios must increase",
        )?;
        require(sweep.tolerance > 0.0, "sweep.tolerance", "must be positive")?;

        let target = match v.raw("dim.target") {
            "id" => DimTarget::Id,
            "rdd" => DimTarget::Rdd,
            other => return Err(LabError::config("dim.target", format!("unknown target `{other}`"))),
        };
        let dim = DimParams {
            target,
            k: v.get("dim.k")?,
            n_samples: v.get("dim.n_samples")?,
            b_grid: v.ints("dim.b_grid")?,
            rd_bits: v.ints("dim.rd_bits")?,
            rd_trials: v.get("dim.rd_trials")?,
        };
        let bound_etas = v.reals("bounds.etas")?;
        require(
            bound_etas.iter().all(|&e| e > 1.0),
            "bounds.etas",
            "every eta must exceed 1",
        )?;

        let config = Self {
            kind,
            source,
            codec,
            n,
            trials,
            seed: v.get("seed")?,
            threads: v.get("threads")?,
            eta,
            alpha,
            noise,
            normalize_columns: v.get("measurement.normalize_columns")?,
            measurements,
            epsilon_code,
            codebook_cap,
            codec_threshold,
            ucsp,
            sweep,
            dim,
            bound_etas,
        };
        config.validate_for_kind()?;
        Ok(config)
    }

    pub fn build_code(&self) -> LabResult<BlockCode> {
        self.codec.build(self.n, self.source.value_dist).map_err(|e| match e {
            CoreError::Parameter { name, reason } => {
                let key = match name {
                    "codec.max_jumps" | "n" => name,
                    _ => "codec.b",
                };
                LabError::config(key, reason)
            }
            other => other.into(),
        })
    }

    fn validate_for_kind(&self) -> LabResult<()> {
        match self.kind {
            ExperimentKind::Sample => Ok(()),
            ExperimentKind::CodecEval
            | ExperimentKind::CspRun
            | ExperimentKind::SweepM
            | ExperimentKind::Bounds => {
                self.build_code().map(|_| ())
            }
            ExperimentKind::UcspRun => {
                let code = self.build_code()?;
                require(
                    code.kind() == CodeKind::PiecewiseConstant
                        && code.length_mode() == LengthMode::VariableLength,
                    "codec.mode",
                    "universal search needs a variable-length piecewise-constant code",
                )
            }
            ExperimentKind::DimEstimate => match self.dim.target {
                DimTarget::Id => {
                    require(self.dim.b_grid.len() >= 3, "dim.b_grid", "need at least 3 values")?;
                    let b_max = *self.dim.b_grid.iter().max().unwrap();
                    let needed = csp_core::dimensions::min_samples(self.dim.k, b_max);
                    require(
                        self.dim.n_samples as f64 >= needed,
                        "dim.n_samples",
                        &format!("at least {needed} samples needed for k={} and b up to {b_max}", self.dim.k),
                    )
                }
                DimTarget::Rdd => {
                    require(self.dim.rd_bits.len() >= 3, "dim.rd_bits", "need at least 3 values")?;
                    require(
                        self.dim.rd_bits.windows(2).all(|w| w[0] < w[1]),
                        "dim.rd_bits",
                        "values must increase",
                    )?;
                    require(self.dim.rd_trials >= 1, "dim.rd_trials", "need at least one trial")?;
                    for &b in &self.dim.rd_bits {
                        BlockCode::piecewise_constant(
                            self.n,
                            b,
                            None,
                            self.source.value_dist,
                            LengthMode::VariableLength,
                        )
                        .map_err(at("dim.rd_bits"))?;
                    }
                    Ok(())
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use csp_core::codecs::DEFAULT_CODEBOOK_CAP;
    use csp_core::csp::DEFAULT_SEARCH_CAP;

    fn parse(text: &str) -> LabResult<ExperimentConfig> {
        ExperimentConfig::parse(ExperimentKind::CspRun, text, &[])
    }

    fn key_of(e: LabError) -> String {
        match e {
            LabError::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn defaults_parse() {
        let c = parse("").unwrap();
        assert_eq!(c.n, 24);
        assert_eq!(c.eta, 2.0);
        assert_eq!(c.alpha, 0.1);
        assert_eq!(c.codec.max_jumps, Some(2));
        assert_eq!(c.noise, NoiseModel::None);
        assert_eq!(c.dim.b_grid, (2..=10).collect::<Vec<u32>>());
        assert_eq!(c.codebook_cap, DEFAULT_CODEBOOK_CAP);
        assert_eq!(c.ucsp.cap, DEFAULT_SEARCH_CAP);
    }

    #[test]
    fn file_keys_and_overrides() {
        let text = "# comment\nsource.p = 0.2  # trailing\n\nn=12\n";
        let c = ExperimentConfig::parse(
            ExperimentKind::CspRun,
            text,
            &[("n".into(), "16".into())],
        )
        .unwrap();
        assert_eq!(c.source.jump_prob, 0.2);
        assert_eq!(c.n, 16);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(parse("bogus = 1").unwrap_err()), "bogus");
        assert_eq!(key_of(parse("source.p = 1.5").unwrap_err()), "source.p");
        assert_eq!(key_of(parse("eta = 1").unwrap_err()), "eta");
        assert_eq!(key_of(parse("trials = x").unwrap_err()), "trials");
        assert_eq!(key_of(parse("codec.max_jumps = 30").unwrap_err()), "codec.max_jumps");
        assert_eq!(key_of(parse("codec.b = 0").unwrap_err()), "codec.b");
        assert_eq!(key_of(parse("source.lower = 2").unwrap_err()), "source.upper");
        assert_eq!(key_of(parse("sweep.ratios = 0.5,0.2").unwrap_err()), "sweep.ratios");
        assert_eq!(key_of(parse("n = 3\nn = 4").unwrap_err()), "n");
        assert_eq!(key_of(parse("just words").unwrap_err()), "just words");
    }

    #[test]
    fn kind_specific_validation() {
        let e = ExperimentConfig::parse(ExperimentKind::UcspRun, "", &[]).unwrap_err();
        assert_eq!(key_of(e), "codec.mode");
        let e = ExperimentConfig::parse(
            ExperimentKind::DimEstimate,
            "dim.k = 1\ndim.n_samples = 1000",
            &[],
        )
        .unwrap_err();
        assert_eq!(key_of(e), "dim.n_samples");
        assert!(ExperimentConfig::parse(ExperimentKind::UcspRun, "codec.mode = variable", &[]).is_ok());
    }

    #[test]
    fn lists_and_ranges() {
        let c = parse("dim.b_grid = 2,4,6\nbounds.etas = 1.5, 2").unwrap();
        assert_eq!(c.dim.b_grid, vec![2, 4, 6]);
        assert_eq!(c.bound_etas, vec![1.5, 2.0]);
        assert_eq!(key_of(parse("dim.rd_bits = 9..3").unwrap_err()), "dim.rd_bits");
    }

    #[test]
    fn noise_and_optionals() {
        let c = parse("noise.sigma_m = 0.05\nmeasurement.m = 7\ncodec.max_jumps = all").unwrap();
        assert_eq!(c.noise, NoiseModel::Bounded { sigma_m: 0.05, eps_m: 0.05 });
        assert_eq!(c.measurements, Some(7));
        assert_eq!(c.codec.max_jumps, None);
        assert_eq!(key_of(parse("measurement.m = 0").unwrap_err()), "measurement.m");
    }

    #[test]
    fn experiment_names_roundtrip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("nope".parse::<ExperimentKind>().is_err());
    }
}
