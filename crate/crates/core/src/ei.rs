//! Edge-inference service model: representation size, uplink rate, upload
//! and compute delay, the DL/UL time split that meets the latency budget,
//! and the Monte-Carlo goal-effectiveness estimator.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{ul_snr_per_sc, ChannelSet};
use crate::error::{Error, Result};
use crate::profile::InferenceModelProfile;
use crate::scenario::Scenario;

/// Bits per batch: `14 * 14 * c * bits_per_scalar * batch`.
pub fn n_bits(c: u32, batch_size: u32, bits_per_scalar: u32) -> u64 {
    14 * 14 * c as u64 * bits_per_scalar as u64 * batch_size as u64
}

/// A compressed-feature representation selected from the bottleneck set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Representation {
    pub c: u32,
    pub n_b: u64,
}

impl Representation {
    pub fn new(s: &Scenario, c: u32) -> Result<Self> {
        if !s.bottleneck_set.contains(&c) {
            return Err(Error::invalid(
                "bottleneck",
                format!("c={c} is not in {:?}", s.bottleneck_set),
            ));
        }
        Ok(Representation {
            c,
            n_b: n_bits(c, s.batch_size, s.bits_per_scalar),
        })
    }

    pub fn all(s: &Scenario) -> Vec<Self> {
        s.bottleneck_set
            .iter()
            .map(|&c| Representation {
                c,
                n_b: n_bits(c, s.batch_size, s.bits_per_scalar),
            })
            .collect()
    }
}

/// UL rate with the whole frame devoted to upload and the UL power split
/// equally across subcarriers: `W sum_f log2(1 + SNR_f)`.
pub fn ul_rate_full_frame(s: &Scenario, cs: &ChannelSet) -> f64 {
    let noise = s.derived_constants().noise_power_w_per_sc;
    let p = vec![s.p_ul_total_w / s.num_sc as f64; cs.num_sc()];
    let bits: f64 = ul_snr_per_sc(cs, &p, noise)
        .iter()
        .map(|snr| snr.ln_1p())
        .sum::<f64>()
        / std::f64::consts::LN_2;
    s.sc_spacing_hz * bits
}

/// Average effective UL rate `rho_ul W sum_f log2(1 + SNR_f)`.
pub fn ul_rate(s: &Scenario, cs: &ChannelSet, rho_ul: f64) -> f64 {
    rho_ul * ul_rate_full_frame(s, cs)
}

/// Quotients within this relative distance above an integer count as an
/// exact fit of whole frames.
pub const FRAME_FIT_REL_TOL: f64 = 1e-12;

/// Number of whole frames needed to push `n_b` bits at `bits_per_frame`.
pub fn frames_needed(n_b: f64, bits_per_frame: f64) -> f64 {
    let q = n_b / bits_per_frame;
    let below = q.floor();
    if q - below <= FRAME_FIT_REL_TOL * q {
        below
    } else {
        q.ceil()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayMode {
    /// `ceil(n_b / (R T)) T`: the batch occupies whole frames.
    Exact,
    /// `n_b / R`.
    Approximate,
}

/// Upload delay of `n_b` bits at mean rate `mean_rate_bps`; `+inf` at zero rate.
pub fn upload_delay(n_b: f64, mean_rate_bps: f64, frame_s: f64, mode: DelayMode) -> f64 {
    if !(mean_rate_bps > 0.0) {
        return f64::INFINITY;
    }
    match mode {
        DelayMode::Approximate => n_b / mean_rate_bps,
        DelayMode::Exact => frames_needed(n_b, mean_rate_bps * frame_s) * frame_s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetViolation {
    /// The planning compute delay leaves no time for the upload.
    NoCommunicationBudget,
    /// Even the whole frame is not enough to upload within the budget.
    UplinkTooSlow,
}

impl fmt::Display for BudgetViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BudgetViolation::NoCommunicationBudget => write!(f, "no communication budget"),
            BudgetViolation::UplinkTooSlow => {
                write!(f, "uplink cannot deliver the batch within the budget")
            }
        }
    }
}

/// Time split that just meets the latency budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBudget {
    /// `L_max` minus the planning compute delay.
    pub l_comm_star_s: f64,
    /// Largest DL fraction leaving enough UL time for the batch.
    pub rho_dl_star: f64,
    pub ul_rate_full_frame_bps: f64,
    pub violation: Option<BudgetViolation>,
}

impl DelayBudget {
    pub fn is_feasible(&self) -> bool {
        self.violation.is_none()
    }
}

/// `rho_dl* = 1 - n_b / (L*_comm W sum_f log2(1 + SNR_f))` for a given
/// planning compute delay.
pub fn delay_budget(s: &Scenario, cs: &ChannelSet, rep: Representation, planning_delay_s: f64) -> DelayBudget {
    let full = ul_rate_full_frame(s, cs);
    let l_star = s.requirements.l_max_s - planning_delay_s;
    if !(l_star > 0.0) {
        return DelayBudget {
            l_comm_star_s: l_star,
            rho_dl_star: f64::NAN,
            ul_rate_full_frame_bps: full,
            violation: Some(BudgetViolation::NoCommunicationBudget),
        };
    }
    let rho = 1.0 - rep.n_b as f64 / (l_star * full);
    DelayBudget {
        l_comm_star_s: l_star,
        rho_dl_star: rho,
        ul_rate_full_frame_bps: full,
        violation: (!(rho > 0.0)).then_some(BudgetViolation::UplinkTooSlow),
    }
}

/// [`delay_budget`] with the model's planning quantile.
pub fn rho_dl_star(
    s: &Scenario,
    cs: &ChannelSet,
    rep: Representation,
    model: &InferenceModelProfile,
) -> DelayBudget {
    delay_budget(s, cs, rep, model.planning_delay_s())
}

/// Monte-Carlo estimate of `E[1(Q >= Q_min) 1(L_comm + L_comp <= L_max)]`.
///
/// Trial `i` draws from a ChaCha8 generator seeded with `seed` on stream
/// `i`: first `B` uniforms deciding which samples are classified correctly
/// (`u < accuracy(c)`), then one compute-delay realization. The upload delay
/// uses the exact frame-quantized form with `rho_ul = 1 - rho_dl`. Results
/// do not depend on the number of worker threads.
pub fn goal_effectiveness(
    s: &Scenario,
    rep: Representation,
    model: &InferenceModelProfile,
    rho_dl: f64,
    cs: &ChannelSet,
    n_trials: u64,
    seed: u64,
) -> f64 {
    let rate = ul_rate(s, cs, 1.0 - rho_dl);
    let l_comm = upload_delay(rep.n_b as f64, rate, s.frame_duration_s, DelayMode::Exact);
    goal_effectiveness_with_upload(s, rep, model, l_comm, n_trials, seed)
}

/// Goal effectiveness for a known upload delay.
pub fn goal_effectiveness_with_upload(
    s: &Scenario,
    rep: Representation,
    model: &InferenceModelProfile,
    l_comm_s: f64,
    n_trials: u64,
    seed: u64,
) -> f64 {
    if n_trials == 0 {
        return f64::NAN;
    }
    let p = model.accuracy_at(rep.c).unwrap_or(0.0);
    let batch = s.batch_size;
    let q_min = s.requirements.q_min;
    let l_max = s.requirements.l_max_s;
    let hits = (0..n_trials)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let correct = (0..batch).filter(|_| rng.random::<f64>() < p).count() as u32;
            let l_comp = model.delay.sample(&mut rng);
            correct >= q_min && l_comm_s + l_comp <= l_max
        })
        .count();
    hits as f64 / n_trials as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_channels;
    use crate::profile::{AccuracyPoint, ComputeDelayModel};
    use proptest::prelude::*;

    fn setup() -> (Scenario, ChannelSet) {
        let s = Scenario {
            num_sc: 8,
            sc_spacing_hz: 50e6 / 8.0,
            ..Scenario::default()
        };
        let cs = build_channels(&s, 0).unwrap();
        (s, cs)
    }

    fn model_with(delay: ComputeDelayModel, p: f64) -> InferenceModelProfile {
        InferenceModelProfile {
            name: "t".into(),
            gflops: 1.0,
            delay,
            delay_quantile_for_planning: 0.98,
            accuracy: [4, 8, 16, 32]
                .into_iter()
                .map(|c| AccuracyPoint { c, p })
                .collect(),
        }
    }

    #[test]
    fn bits_law() {
        assert_eq!(n_bits(4, 16, 32), 401_408);
        assert_eq!(n_bits(32, 16, 32), 8 * n_bits(4, 16, 32));
        assert_eq!(n_bits(4, 1, 32), 25_088);
        let s = Scenario::default();
        assert!(Representation::new(&s, 5).is_err());
        assert_eq!(Representation::new(&s, 16).unwrap().n_b, 1_605_632);
    }

    #[test]
    fn ul_rate_linear_in_rho() {
        let (s, cs) = setup();
        assert_eq!(ul_rate(&s, &cs, 0.0), 0.0);
        let a = ul_rate(&s, &cs, 0.3);
        let b = ul_rate(&s, &cs, 0.6);
        assert!((2.0 * a - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn upload_delay_cases() {
        let (r, t) = (1e6, 1e-3);
        assert_eq!(upload_delay(1000.0, r, t, DelayMode::Exact), t);
        assert_eq!(upload_delay(1000.0, r, t, DelayMode::Approximate), t);
        assert!((upload_delay(1500.0, r, t, DelayMode::Exact) - 2.0 * t).abs() < 1e-18);
        assert!((upload_delay(1500.0, r, t, DelayMode::Approximate) - 1.5 * t).abs() < 1e-18);
        assert_eq!(upload_delay(1.0, 0.0, t, DelayMode::Exact), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn exact_minus_approx_in_frame(n_b in 1.0f64..1e8, rate in 1e3f64..1e10, t in 1e-4f64..0.1) {
            let e = upload_delay(n_b, rate, t, DelayMode::Exact);
            let a = upload_delay(n_b, rate, t, DelayMode::Approximate);
            prop_assert!(e - a >= 0.0);
            prop_assert!(e - a < t);
        }
    }

    #[test]
    fn rho_dl_star_cases() {
        let (s, cs) = setup();
        let rep = Representation::new(&s, 8).unwrap();
        let slow = model_with(ComputeDelayModel::Constant { value_s: 0.05 }, 0.9);
        let b = rho_dl_star(&s, &cs, rep, &slow);
        assert_eq!(b.violation, Some(BudgetViolation::NoCommunicationBudget));
        assert_eq!(b.violation.unwrap().to_string(), "no communication budget");

        let light = model_with(ComputeDelayModel::Constant { value_s: 0.010 }, 0.9);
        let heavy = model_with(ComputeDelayModel::Constant { value_s: 0.030 }, 0.9);
        let bl = rho_dl_star(&s, &cs, rep, &light);
        let bh = rho_dl_star(&s, &cs, rep, &heavy);
        assert!(bl.is_feasible() && bh.is_feasible());
        assert!(bh.rho_dl_star < bl.rho_dl_star);
        assert!(bl.rho_dl_star < 1.0 && bh.rho_dl_star > 0.0);

        let tiny = Representation { c: 4, n_b: 1 };
        assert!(1.0 - rho_dl_star(&s, &cs, tiny, &light).rho_dl_star < 1e-6);

        let bigger = Representation::new(&s, 16).unwrap();
        assert!(rho_dl_star(&s, &cs, bigger, &light).rho_dl_star < bl.rho_dl_star);
    }

    #[test]
    fn rho_dl_star_increases_with_ul_snr() {
        let (mut s, _) = setup();
        let rep = Representation::new(&s, 8).unwrap();
        let m = model_with(ComputeDelayModel::Constant { value_s: 0.02 }, 0.9);
        let cs = build_channels(&s, 0).unwrap();
        let lo = rho_dl_star(&s, &cs, rep, &m).rho_dl_star;
        s.p_ul_total_w *= 2.0;
        let hi = rho_dl_star(&s, &cs, rep, &m).rho_dl_star;
        assert!(hi > lo);
    }

    #[test]
    fn effectiveness_extremes() {
        let (s, cs) = setup();
        let rep = Representation::new(&s, 4).unwrap();
        let perfect = model_with(ComputeDelayModel::Constant { value_s: 0.0 }, 1.0);
        assert_eq!(goal_effectiveness(&s, rep, &perfect, 0.5, &cs, 500, 1), 1.0);
        let late = model_with(ComputeDelayModel::lognormal_ms(60.0, 0.1, 4.0), 1.0);
        assert_eq!(goal_effectiveness(&s, rep, &late, 0.5, &cs, 500, 1), 0.0);
    }

    #[test]
    fn effectiveness_is_deterministic_and_thread_independent() {
        let (s, cs) = setup();
        let rep = Representation::new(&s, 8).unwrap();
        let m = model_with(ComputeDelayModel::lognormal_ms(20.0, 0.3, 4.0), 0.7);
        let a = goal_effectiveness(&s, rep, &m, 0.6, &cs, 4000, 42);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| goal_effectiveness(&s, rep, &m, 0.6, &cs, 4000, 42));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn effectiveness_monotone_in_accuracy() {
        let (s, cs) = setup();
        let rep = Representation::new(&s, 8).unwrap();
        let delay = ComputeDelayModel::lognormal_ms(20.0, 0.3, 4.0);
        let mut prev = 0.0;
        for p in [0.5, 0.6, 0.7, 0.8, 0.9] {
            let e = goal_effectiveness(&s, rep, &model_with(delay.clone(), p), 0.6, &cs, 3000, 5);
            assert!(e >= prev);
            prev = e;
        }
    }
}
