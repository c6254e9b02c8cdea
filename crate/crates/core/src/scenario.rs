//! Experiment description: geometry, RF constants, frame parameters,
//! service requirements, inference model registry and sweep settings.
//!
//! Scenarios are written in TOML with the unit carried in each field name
//! (`_hz`, `_w`, `_s`, `_m`, ...). Every field is optional; omitted fields
//! take the reference values of the 10 GHz / 50 MHz setup.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{ComputeDelayModel, InferenceModelProfile};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub carrier_freq_hz: f64,
    /// Subcarrier spacing `W`.
    pub sc_spacing_hz: f64,
    /// Number of subcarriers `F`.
    pub num_sc: usize,
    /// Nominal occupied bandwidth; when given, `F * W` must match it within one spacing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_bandwidth_hz: Option<f64>,
    /// TDD frame duration `T`.
    pub frame_duration_s: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Array element spacing in wavelengths.
    pub element_spacing_wavelengths: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub pathloss_exp: f64,
    pub positions: Positions,
    pub p_ul_total_w: f64,
    pub p_dl_max_w: f64,
    pub rcs_m2: f64,
    pub channel: ChannelOptions,
    pub requirements: Requirements,
    pub models: Vec<InferenceModelProfile>,
    pub bottleneck_set: Vec<u32>,
    pub batch_size: u32,
    pub bits_per_scalar: u32,
    pub solver: SolverTolerances,
    pub sweep: SweepSettings,
}

/// 2-D node coordinates in meters. The BS array lies along the x axis, so
/// angles are measured from the +y (broadside) direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Positions {
    pub bs_m: [f64; 2],
    pub ei_device_m: [f64; 2],
    pub dl_user_m: [f64; 2],
    pub target_m: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelOptions {
    /// Apply a seeded uniform random phase per subcarrier to the UL/DL
    /// channels and to the target reflection coefficient.
    pub random_phase: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Requirements {
    /// Threshold on `CRB_theta`, in rad^2.
    pub crb_theta_th_rad2: f64,
    pub r_dl_th_bps: f64,
    pub l_max_s: f64,
    /// Minimum number of correctly classified samples per batch.
    pub q_min: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverTolerances {
    /// Relative tolerance on constraint satisfaction.
    pub constraint_rel_tol: f64,
    /// Bisection tolerance on the normalized CRB multiplier.
    pub dual_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub sigma_grid: Vec<f64>,
    /// Monte-Carlo trials per goal-effectiveness estimate.
    pub mc_trials: u64,
}

/// Converts an RMS angular error in degrees to a CRB threshold in rad^2.
pub fn crb_threshold_from_deg(sqrt_crb_deg: f64) -> f64 {
    sqrt_crb_deg.to_radians().powi(2)
}

/// `n` linearly spaced values on [0, 1].
pub fn linspace01(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            carrier_freq_hz: 10e9,
            sc_spacing_hz: 30e3,
            num_sc: 1666,
            total_bandwidth_hz: None,
            frame_duration_s: 1e-3,
            n_tx: 16,
            n_rx: 16,
            element_spacing_wavelengths: 0.5,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 10.0,
            pathloss_exp: 2.5,
            positions: Positions::default(),
            p_ul_total_w: 0.1,
            p_dl_max_w: 1.0,
            rcs_m2: 1.0,
            channel: ChannelOptions::default(),
            requirements: Requirements::default(),
            models: InferenceModelProfile::reference_registry(),
            bottleneck_set: vec![4, 8, 16, 32],
            batch_size: 16,
            bits_per_scalar: 32,
            solver: SolverTolerances::default(),
            sweep: SweepSettings::default(),
        }
    }
}

impl Default for Positions {
    fn default() -> Self {
        Positions {
            bs_m: [0.0, 0.0],
            ei_device_m: [0.0, 80.0],
            dl_user_m: [50.0, 55.0],
            target_m: [20.0, 20.0],
        }
    }
}

impl Default for Requirements {
    fn default() -> Self {
        Requirements {
            crb_theta_th_rad2: crb_threshold_from_deg(0.3),
            r_dl_th_bps: 200e6,
            l_max_s: 0.050,
            q_min: 11,
        }
    }
}

impl Default for SolverTolerances {
    fn default() -> Self {
        SolverTolerances {
            constraint_rel_tol: 1e-7,
            dual_tol: 1e-12,
        }
    }
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            sigma_grid: linspace01(101),
            mc_trials: 10_000,
        }
    }
}

/// Link geometry and noise derived from a [`Scenario`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// `N_0 W` including the noise figure, in W per subcarrier.
    pub noise_power_w_per_sc: f64,
    /// `N_0` including the noise figure, in W/Hz.
    pub noise_psd_w_per_hz: f64,
    pub wavelength_m: f64,
    pub distances_m: LinkGeometry,
    /// Angles from array broadside, in radians.
    pub angles_rad: LinkGeometry,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub ei_device: f64,
    pub dl_user: f64,
    pub target: f64,
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

impl Scenario {
    pub fn derived_constants(&self) -> DerivedConstants {
        let psd = 10f64.powf((self.noise_psd_dbm_hz + self.noise_figure_db) / 10.0) * 1e-3;
        let p = &self.positions;
        let rel = [
            sub(p.ei_device_m, p.bs_m),
            sub(p.dl_user_m, p.bs_m),
            sub(p.target_m, p.bs_m),
        ];
        let dist = rel.map(|v| v[0].hypot(v[1]));
        let ang = rel.map(|v| v[0].atan2(v[1]));
        DerivedConstants {
            noise_power_w_per_sc: psd * self.sc_spacing_hz,
            noise_psd_w_per_hz: psd,
            wavelength_m: SPEED_OF_LIGHT / self.carrier_freq_hz,
            distances_m: LinkGeometry {
                ei_device: dist[0],
                dl_user: dist[1],
                target: dist[2],
            },
            angles_rad: LinkGeometry {
                ei_device: ang[0],
                dl_user: ang[1],
                target: ang[2],
            },
        }
    }

    /// Bits per batch for the largest bottleneck, `n_b^max`.
    pub fn max_bits(&self) -> u64 {
        self.bottleneck_set
            .iter()
            .map(|&c| crate::ei::n_bits(c, self.batch_size, self.bits_per_scalar))
            .max()
            .unwrap_or(0)
    }

    pub fn model(&self, name: &str) -> Option<&InferenceModelProfile> {
        self.models.iter().find(|m| m.name == name)
    }

    /// The model with the largest compute cost, used by the compute-unaware benchmark.
    pub fn heaviest_model(&self) -> Option<&InferenceModelProfile> {
        self.models
            .iter()
            .max_by(|a, b| a.gflops.total_cmp(&b.gflops))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Checks every invariant, reporting the first offending field.
    pub fn validate(&self) -> Result<()> {
        fn positive(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("must be strictly positive, got {v}")))
            }
        }
        fn nonzero(field: &str, v: usize) -> Result<()> {
            if v > 0 {
                Ok(())
            } else {
                Err(Error::invalid(field, "must be at least 1"))
            }
        }

        positive("carrier_freq_hz", self.carrier_freq_hz)?;
        positive("sc_spacing_hz", self.sc_spacing_hz)?;
        nonzero("num_sc", self.num_sc)?;
        if let Some(bw) = self.total_bandwidth_hz {
            positive("total_bandwidth_hz", bw)?;
            let occupied = self.num_sc as f64 * self.sc_spacing_hz;
            if (occupied - bw).abs() > self.sc_spacing_hz {
                return Err(Error::invalid(
                    "total_bandwidth_hz",
                    format!(
                        "num_sc * sc_spacing_hz = {occupied} Hz differs from {bw} Hz by more than one spacing"
                    ),
                ));
            }
        }
        positive("frame_duration_s", self.frame_duration_s)?;
        nonzero("n_tx", self.n_tx)?;
        nonzero("n_rx", self.n_rx)?;
        positive("element_spacing_wavelengths", self.element_spacing_wavelengths)?;
        for (field, v) in [
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
            ("noise_figure_db", self.noise_figure_db),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        positive("pathloss_exp", self.pathloss_exp)?;
        positive("p_ul_total_w", self.p_ul_total_w)?;
        positive("p_dl_max_w", self.p_dl_max_w)?;
        positive("rcs_m2", self.rcs_m2)?;

        let p = &self.positions;
        for (field, pos) in [
            ("positions.bs_m", p.bs_m),
            ("positions.ei_device_m", p.ei_device_m),
            ("positions.dl_user_m", p.dl_user_m),
            ("positions.target_m", p.target_m),
        ] {
            if !pos.iter().all(|x| x.is_finite()) {
                return Err(Error::invalid(field, "coordinates must be finite"));
            }
        }
        let d = self.derived_constants().distances_m;
        for (field, v) in [
            ("positions.ei_device_m", d.ei_device),
            ("positions.dl_user_m", d.dl_user),
            ("positions.target_m", d.target),
        ] {
            if v <= 0.0 {
                return Err(Error::invalid(field, "coincides with the base station"));
            }
        }

        let r = &self.requirements;
        positive("requirements.crb_theta_th_rad2", r.crb_theta_th_rad2)?;
        positive("requirements.r_dl_th_bps", r.r_dl_th_bps)?;
        positive("requirements.l_max_s", r.l_max_s)?;
        if r.q_min == 0 {
            return Err(Error::invalid("requirements.q_min", "must be at least 1"));
        }
        if r.q_min > self.batch_size {
            return Err(Error::invalid(
                "requirements.q_min",
                format!("{} exceeds batch_size {}", r.q_min, self.batch_size),
            ));
        }

        if self.bottleneck_set.is_empty() {
            return Err(Error::invalid("bottleneck_set", "must not be empty"));
        }
        if self.bottleneck_set.contains(&0) {
            return Err(Error::invalid("bottleneck_set", "entries must be positive"));
        }
        if self.bottleneck_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("bottleneck_set", "must be strictly increasing"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.bits_per_scalar == 0 {
            return Err(Error::invalid("bits_per_scalar", "must be at least 1"));
        }

        if self.models.is_empty() {
            return Err(Error::invalid("models", "at least one model is required"));
        }
        for (i, m) in self.models.iter().enumerate() {
            m.validate(&format!("models[{i}]"), &self.bottleneck_set)?;
            if self.models[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::invalid(
                    format!("models[{i}].name"),
                    format!("duplicate model name {:?}", m.name),
                ));
            }
        }

        positive("solver.constraint_rel_tol", self.solver.constraint_rel_tol)?;
        positive("solver.dual_tol", self.solver.dual_tol)?;

        for (i, &s) in self.sweep.sigma_grid.iter().enumerate() {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::invalid(
                    format!("sweep.sigma_grid[{i}]"),
                    format!("sigma must lie in [0, 1], got {s}"),
                ));
            }
        }
        if self.sweep.mc_trials == 0 {
            return Err(Error::invalid("sweep.mc_trials", "must be at least 1"));
        }
        Ok(())
    }
}

/// Parses and validates a scenario document. Relative empirical-delay CSV
/// paths resolve against the current directory.
pub fn load_scenario(source: &str) -> Result<Scenario> {
    load_with_base(source, None)
}

/// Reads, parses and validates a scenario file. Relative empirical-delay CSV
/// paths resolve against the file's directory.
pub fn load_scenario_file(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_with_base(&text, path.parent())
}

fn load_with_base(source: &str, base: Option<&Path>) -> Result<Scenario> {
    let mut scenario: Scenario = toml::from_str(source).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|span| line_col(source, span.start))
            .unwrap_or((0, 0));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    for model in &mut scenario.models {
        if let ComputeDelayModel::EmpiricalCsv { path } = &model.delay {
            let p = Path::new(path);
            let resolved = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.to_path_buf(),
            };
            model.delay = ComputeDelayModel::Empirical {
                samples_s: ComputeDelayModel::read_csv(&resolved)?,
            };
        }
    }
    scenario.validate()?;
    Ok(scenario)
}

fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}
