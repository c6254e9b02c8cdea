//! Inference model registry entries: compute cost, compute-delay
//! distribution and the per-sample accuracy curve over bottleneck sizes.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Distribution of the per-batch compute delay `L_comp` (decode plus inference), in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComputeDelayModel {
    /// `offset_s + X` with `X` log-normal of the given mean and log-domain dispersion.
    LogNormal {
        mean_s: f64,
        sigma_log: f64,
        #[serde(default)]
        offset_s: f64,
    },
    /// Degenerate distribution.
    Constant { value_s: f64 },
    /// Empirical measurements; sampled uniformly with replacement.
    Empirical { samples_s: Vec<f64> },
    /// Empirical measurements read from a CSV file (one delay in seconds per row).
    /// Replaced by [`ComputeDelayModel::Empirical`] when the scenario is loaded.
    EmpiricalCsv { path: String },
}

impl ComputeDelayModel {
    pub fn lognormal_ms(mean_ms: f64, sigma_log: f64, offset_ms: f64) -> Self {
        ComputeDelayModel::LogNormal {
            mean_s: mean_ms * 1e-3,
            sigma_log,
            offset_s: offset_ms * 1e-3,
        }
    }

    /// `q`-quantile of the delay.
    pub fn quantile(&self, q: f64) -> f64 {
        match self {
            ComputeDelayModel::LogNormal {
                mean_s,
                sigma_log,
                offset_s,
            } => {
                if *sigma_log == 0.0 {
                    return offset_s + mean_s;
                }
                let mu = mean_s.ln() - 0.5 * sigma_log * sigma_log;
                let z = Normal::standard().inverse_cdf(q);
                offset_s + (mu + sigma_log * z).exp()
            }
            ComputeDelayModel::Constant { value_s } => *value_s,
            ComputeDelayModel::Empirical { samples_s } => empirical_quantile(samples_s, q),
            ComputeDelayModel::EmpiricalCsv { .. } => f64::NAN,
        }
    }

    /// `Pr(L_comp <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ComputeDelayModel::LogNormal {
                mean_s,
                sigma_log,
                offset_s,
            } => {
                let y = x - offset_s;
                if y <= 0.0 {
                    return 0.0;
                }
                if *sigma_log == 0.0 {
                    return if y >= *mean_s { 1.0 } else { 0.0 };
                }
                let mu = mean_s.ln() - 0.5 * sigma_log * sigma_log;
                Normal::standard().cdf((y.ln() - mu) / sigma_log)
            }
            ComputeDelayModel::Constant { value_s } => {
                if x >= *value_s {
                    1.0
                } else {
                    0.0
                }
            }
            ComputeDelayModel::Empirical { samples_s } => {
                let n = samples_s.iter().filter(|&&s| s <= x).count();
                n as f64 / samples_s.len().max(1) as f64
            }
            ComputeDelayModel::EmpiricalCsv { .. } => f64::NAN,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ComputeDelayModel::LogNormal {
                mean_s,
                sigma_log,
                offset_s,
            } => {
                if *sigma_log == 0.0 {
                    return offset_s + mean_s;
                }
                let mu = mean_s.ln() - 0.5 * sigma_log * sigma_log;
                // parameters validated at load time
                let ln = LogNormal::new(mu, *sigma_log).expect("finite log-normal parameters");
                offset_s + ln.sample(rng)
            }
            ComputeDelayModel::Constant { value_s } => *value_s,
            ComputeDelayModel::Empirical { samples_s } => {
                samples_s[rng.random_range(0..samples_s.len())]
            }
            ComputeDelayModel::EmpiricalCsv { .. } => f64::NAN,
        }
    }

    /// Reads a CSV file with one delay per row. A non-numeric first row is
    /// treated as a header.
    pub fn read_csv(path: &std::path::Path) -> Result<Vec<f64>> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let cell = line.split(',').next().unwrap_or("").trim();
            if cell.is_empty() {
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) => samples.push(v),
                Err(_) if i == 0 => continue,
                Err(_) => {
                    return Err(Error::invalid(
                        format!("delay csv {}", path.display()),
                        format!("row {} is not a number: {cell:?}", i + 1),
                    ))
                }
            }
        }
        Ok(samples)
    }

    pub(crate) fn validate(&self, field: &str) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(
                    format!("{field}.{name}"),
                    format!("must be positive and finite, got {v}"),
                ))
            }
        };
        match self {
            ComputeDelayModel::LogNormal {
                mean_s,
                sigma_log,
                offset_s,
            } => {
                positive("mean_s", *mean_s)?;
                if !(sigma_log.is_finite() && *sigma_log >= 0.0) {
                    return Err(Error::invalid(
                        format!("{field}.sigma_log"),
                        format!("must be non-negative, got {sigma_log}"),
                    ));
                }
                if !(offset_s.is_finite() && *offset_s >= 0.0) {
                    return Err(Error::invalid(
                        format!("{field}.offset_s"),
                        format!("must be non-negative, got {offset_s}"),
                    ));
                }
            }
            ComputeDelayModel::Constant { value_s } => positive("value_s", *value_s)?,
            ComputeDelayModel::Empirical { samples_s } => {
                if samples_s.is_empty() {
                    return Err(Error::invalid(
                        format!("{field}.samples_s"),
                        "empirical delay list is empty",
                    ));
                }
                for &s in samples_s {
                    positive("samples_s", s)?;
                }
            }
            ComputeDelayModel::EmpiricalCsv { path } => {
                return Err(Error::invalid(
                    format!("{field}.path"),
                    format!("delay csv {path:?} was not resolved"),
                ))
            }
        }
        Ok(())
    }
}

/// Linear-interpolated quantile of a sample (type 7).
fn empirical_quantile(samples: &[f64], q: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyPoint {
    /// Bottleneck dimension.
    pub c: u32,
    /// Per-sample probability of correct classification.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceModelProfile {
    pub name: String,
    pub gflops: f64,
    pub delay: ComputeDelayModel,
    #[serde(default = "default_planning_quantile")]
    pub delay_quantile_for_planning: f64,
    pub accuracy: Vec<AccuracyPoint>,
}

fn default_planning_quantile() -> f64 {
    0.98
}

impl InferenceModelProfile {
    pub fn accuracy_at(&self, c: u32) -> Option<f64> {
        self.accuracy.iter().find(|a| a.c == c).map(|a| a.p)
    }

    /// Compute delay used when planning the time split.
    pub fn planning_delay_s(&self) -> f64 {
        self.delay.quantile(self.delay_quantile_for_planning)
    }

    /// The three models of the reference setup. Mean inference delays are
    /// 6, 10 and 32 ms plus 4 ms decoding. Accuracy values are placeholders
    /// (not measured) and should be replaced by real per-model tables.
    pub fn reference_registry() -> Vec<InferenceModelProfile> {
        let acc = |ps: [f64; 4]| {
            [4, 8, 16, 32]
                .into_iter()
                .zip(ps)
                .map(|(c, p)| AccuracyPoint { c, p })
                .collect::<Vec<_>>()
        };
        vec![
            InferenceModelProfile {
                name: "mobilenet_v3_small".into(),
                gflops: 0.12,
                delay: ComputeDelayModel::lognormal_ms(6.0, 0.1, 4.0),
                delay_quantile_for_planning: 0.98,
                accuracy: acc([0.55, 0.62, 0.66, 0.68]),
            },
            InferenceModelProfile {
                name: "resnet50".into(),
                gflops: 8.18,
                delay: ComputeDelayModel::lognormal_ms(10.0, 0.1, 4.0),
                delay_quantile_for_planning: 0.98,
                accuracy: acc([0.68, 0.75, 0.79, 0.81]),
            },
            InferenceModelProfile {
                name: "vit_b_16".into(),
                gflops: 33.7,
                delay: ComputeDelayModel::lognormal_ms(32.0, 0.1, 4.0),
                delay_quantile_for_planning: 0.98,
                accuracy: acc([0.78, 0.85, 0.89, 0.91]),
            },
        ]
    }

    pub(crate) fn validate(&self, field: &str, bottlenecks: &[u32]) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::invalid(format!("{field}.name"), "must not be empty"));
        }
        if !(self.gflops.is_finite() && self.gflops > 0.0) {
            return Err(Error::invalid(
                format!("{field}.gflops"),
                format!("must be positive, got {}", self.gflops),
            ));
        }
        let q = self.delay_quantile_for_planning;
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(
                format!("{field}.delay_quantile_for_planning"),
                format!("must lie in (0, 1), got {q}"),
            ));
        }
        self.delay.validate(&format!("{field}.delay"))?;
        for a in &self.accuracy {
            if !(0.0..=1.0).contains(&a.p) {
                return Err(Error::invalid(
                    format!("{field}.accuracy"),
                    format!("accuracy {} at c={} outside [0, 1]", a.p, a.c),
                ));
            }
        }
        let mut prev: Option<f64> = None;
        for &c in bottlenecks {
            let Some(p) = self.accuracy_at(c) else {
                return Err(Error::invalid(
                    format!("{field}.accuracy"),
                    format!("no accuracy entry for bottleneck c={c}"),
                ));
            };
            if let Some(pp) = prev {
                if p < pp {
                    log::warn!(
                        "model {}: accuracy decreases from {pp} to {p} at c={c}",
                        self.name
                    );
                }
            }
            prev = Some(p);
        }
        Ok(())
    }
}
