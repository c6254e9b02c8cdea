//! End-to-end trade-off sweep: compute-aware and compute-unaware
//! allocations for every model and weight, evaluated for power, CRB, DL
//! rate and goal effectiveness.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::channel::{build_channels, ChannelSet};
use crate::ei::{goal_effectiveness, Representation};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::sensing::{self, k_symbols};
use crate::solver::{plan_candidates, select, Allocation, Candidate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    Aware,
    Unaware,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Aware => "aware",
            Strategy::Unaware => "unaware",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    pub sigma: f64,
    pub model: String,
    pub strategy: Strategy,
    pub c_choice: Option<u32>,
    pub total_power_w: f64,
    pub achieved_crb_rad2: f64,
    pub achieved_rate_bps: f64,
    pub rho_dl: f64,
    pub goal_effectiveness: f64,
    pub feasible: bool,
}

/// Solver certificate and CRB model gap behind one trade-off point.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub sigma: f64,
    pub model: String,
    pub strategy: Strategy,
    pub c_choice: Option<u32>,
    pub kkt_stationarity: f64,
    pub kkt_complementary: f64,
    pub kkt_primal: f64,
    pub duality_gap: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Projector-form CRB over the simplified point-target CRB.
    pub crb_ratio: f64,
    pub failures: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub sigma_grid: Vec<f64>,
    pub trials: u64,
}

impl SweepOptions {
    pub fn from_scenario(s: &Scenario) -> Self {
        SweepOptions {
            sigma_grid: s.sweep.sigma_grid.clone(),
            trials: s.sweep.mc_trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<TradeoffPoint>,
    pub diagnostics: Vec<DiagnosticRow>,
}

pub const TRADEOFF_HEADER: &str =
    "sigma,model,strategy,c,total_power_w,crb,rate_bps,rho_dl,goal_effectiveness,feasible";
pub const DIAGNOSTICS_HEADER: &str = "sigma,model,strategy,c,kkt_stationarity,kkt_complementary,kkt_primal,duality_gap,lambda,mu,crb_ratio,failures";

/// Seed of the goal-effectiveness estimates of one model. Every allocation
/// of a model shares it, so estimates for different allocations use
/// common random numbers.
pub fn model_seed(seed: u64, model_index: usize) -> u64 {
    let mut z = seed ^ (model_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the sweep with the grid and trial count stored in the scenario.
pub fn run_sweep(s: &Scenario, seed: u64) -> Result<SweepResult> {
    run_sweep_with(s, seed, &SweepOptions::from_scenario(s))
}

pub fn run_sweep_with(s: &Scenario, seed: u64, opts: &SweepOptions) -> Result<SweepResult> {
    let cs = build_channels(s, seed)?;
    run_sweep_on(s, &cs, seed, opts)
}

/// Sweep on a prebuilt channel set.
pub fn run_sweep_on(s: &Scenario, cs: &ChannelSet, seed: u64, opts: &SweepOptions) -> Result<SweepResult> {
    let planning = s
        .heaviest_model()
        .ok_or_else(|| Error::Invalid {
            field: "models".into(),
            reason: "at least one model is required".into(),
        })?
        .clone();
    let unaware = plan_candidates(s, cs, planning.planning_delay_s());
    let aware: Vec<Vec<Candidate>> = s
        .models
        .par_iter()
        .map(|m| plan_candidates(s, cs, m.planning_delay_s()))
        .collect();

    // (model, strategy, sigma index) -> allocation
    let mut allocations = Vec::new();
    for (mi, model) in s.models.iter().enumerate() {
        for (si, &sigma) in opts.sigma_grid.iter().enumerate() {
            for strategy in [Strategy::Aware, Strategy::Unaware] {
                let cands = match strategy {
                    Strategy::Aware => &aware[mi],
                    Strategy::Unaware => &unaware,
                };
                let alloc = select(s, cs, cands, sigma);
                log::debug!(
                    "{} {strategy} sigma={sigma:.4}: c={:?} P={:.6e}",
                    model.name,
                    alloc.c_choice,
                    alloc.total_power_w
                );
                allocations.push((mi, si, strategy, alloc));
            }
        }
    }

    let ge_keys: Vec<(usize, u32, u64)> = allocations
        .iter()
        .filter(|(_, _, _, a)| a.feasible)
        .map(|(mi, _, _, a)| (*mi, a.c_choice.unwrap_or_default(), a.rho_dl.to_bits()))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let ge: BTreeMap<(usize, u32, u64), f64> = ge_keys
        .par_iter()
        .map(|&(mi, c, rho_bits)| {
            let rep = Representation::new(s, c).expect("chosen c is in the bottleneck set");
            let v = goal_effectiveness(
                s,
                rep,
                &s.models[mi],
                f64::from_bits(rho_bits),
                cs,
                opts.trials,
                model_seed(seed, mi),
            );
            ((mi, c, rho_bits), v)
        })
        .collect();

    let ratio_keys: Vec<(u32, u64)> = allocations
        .iter()
        .filter(|(_, _, _, a)| a.feasible)
        .map(|(_, _, _, a)| (a.c_choice.unwrap_or_default(), a.rho_dl.to_bits()))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let noise = s.derived_constants().noise_power_w_per_sc;
    let ratios: BTreeMap<(u32, u64), f64> = ratio_keys
        .par_iter()
        .map(|&key| {
            let alloc = &allocations
                .iter()
                .find(|(_, _, _, a)| a.feasible && (a.c_choice.unwrap_or_default(), a.rho_dl.to_bits()) == key)
                .expect("key taken from allocations")
                .3;
            let k = k_symbols(alloc.rho_dl, s.frame_duration_s, s.sc_spacing_hz);
            (key, sensing::diagnostics(cs, &alloc.p_dl, k, noise).crb_ratio)
        })
        .collect();

    let mut points = Vec::with_capacity(allocations.len());
    let mut diagnostics = Vec::with_capacity(allocations.len());
    for (mi, si, strategy, alloc) in &allocations {
        let sigma = opts.sigma_grid[*si];
        let model = s.models[*mi].name.clone();
        let key = (alloc.c_choice.unwrap_or_default(), alloc.rho_dl.to_bits());
        let ge_value = if alloc.feasible { ge[&(*mi, key.0, key.1)] } else { 0.0 };
        points.push(point_from(sigma, &model, *strategy, alloc, ge_value));
        diagnostics.push(DiagnosticRow {
            sigma,
            model,
            strategy: *strategy,
            c_choice: alloc.c_choice,
            kkt_stationarity: if alloc.feasible { alloc.kkt.stationarity } else { f64::NAN },
            kkt_complementary: if alloc.feasible { alloc.kkt.complementary } else { f64::NAN },
            kkt_primal: if alloc.feasible { alloc.kkt.primal } else { f64::NAN },
            duality_gap: if alloc.feasible { alloc.kkt.duality_gap } else { f64::NAN },
            lambda: alloc.lambda,
            mu: alloc.mu,
            crb_ratio: if alloc.feasible { ratios[&key] } else { f64::NAN },
            failures: alloc
                .failures
                .iter()
                .map(|(c, why)| format!("c={c}: {why}"))
                .collect::<Vec<_>>()
                .join("; "),
        });
    }
    Ok(SweepResult { points, diagnostics })
}

fn point_from(sigma: f64, model: &str, strategy: Strategy, a: &Allocation, ge: f64) -> TradeoffPoint {
    TradeoffPoint {
        sigma,
        model: model.to_string(),
        strategy,
        c_choice: a.c_choice,
        total_power_w: a.total_power_w,
        achieved_crb_rad2: a.achieved_crb,
        achieved_rate_bps: a.achieved_rate_bps,
        rho_dl: a.rho_dl,
        goal_effectiveness: ge,
        feasible: a.feasible,
    }
}

/// Indices of the points not dominated in (lower power, higher
/// effectiveness), ordered by power. Equal points are all kept.
pub fn pareto_indices(power_and_ge: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..power_and_ge.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, ga) = power_and_ge[a];
        let (pb, gb) = power_and_ge[b];
        pa.total_cmp(&pb).then(gb.total_cmp(&ga))
    });
    let mut keep = Vec::new();
    let mut running = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let power = power_and_ge[order[i]].0;
        let group_max = power_and_ge[order[i]].1;
        let mut j = i;
        while j < order.len() && power_and_ge[order[j]].0 == power {
            let g = power_and_ge[order[j]].1;
            if g == group_max && g > running {
                keep.push(order[j]);
            }
            j += 1;
        }
        running = running.max(group_max);
        i = j;
    }
    keep
}

/// Feasible points not dominated by another feasible point, by power.
pub fn pareto_filter(points: &[TradeoffPoint]) -> Vec<TradeoffPoint> {
    let feasible: Vec<&TradeoffPoint> = points.iter().filter(|p| p.feasible).collect();
    let pairs: Vec<(f64, f64)> = feasible
        .iter()
        .map(|p| (p.total_power_w, p.goal_effectiveness))
        .collect();
    pareto_indices(&pairs)
        .into_iter()
        .map(|i| feasible[i].clone())
        .collect()
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_c(c: Option<u32>) -> String {
    c.map(|c| c.to_string()).unwrap_or_default()
}

pub fn write_tradeoff_csv<W: Write>(points: &[TradeoffPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRADEOFF_HEADER}")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            num(p.sigma),
            p.model,
            p.strategy,
            opt_c(p.c_choice),
            num(p.total_power_w),
            num(p.achieved_crb_rad2),
            num(p.achieved_rate_bps),
            num(p.rho_dl),
            num(p.goal_effectiveness),
            p.feasible
        )?;
    }
    Ok(())
}

pub fn write_diagnostics_csv<W: Write>(rows: &[DiagnosticRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{DIAGNOSTICS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},\"{}\"",
            num(r.sigma),
            r.model,
            r.strategy,
            opt_c(r.c_choice),
            num(r.kkt_stationarity),
            num(r.kkt_complementary),
            num(r.kkt_primal),
            num(r.duality_gap),
            num(r.lambda),
            num(r.mu),
            num(r.crb_ratio),
            r.failures.replace('"', "'")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dominated_quadratic(pairs: &[(f64, f64)]) -> Vec<bool> {
        pairs
            .iter()
            .map(|&(p, g)| {
                pairs
                    .iter()
                    .any(|&(q, h)| q <= p && h >= g && (q < p || h > g))
            })
            .collect()
    }

    #[test]
    fn pareto_small_cases() {
        assert_eq!(pareto_indices(&[(1.0, 0.5)]), vec![0]);
        assert_eq!(pareto_indices(&[(2.0, 0.4), (1.0, 0.5)]), vec![1]);
        assert_eq!(pareto_indices(&[(1.0, 0.5), (1.0, 0.5)]), vec![0, 1]);
        assert_eq!(pareto_indices(&[(1.0, 0.5), (1.0, 0.6)]), vec![1]);
        assert_eq!(pareto_indices(&[(3.0, 0.9), (1.0, 0.2), (2.0, 0.5)]), vec![1, 2, 0]);
    }

    proptest::proptest! {
        #[test]
        fn pareto_matches_quadratic_scan(pts in proptest::collection::vec((0u8..20, 0u8..20), 0..60)) {
            let pairs: Vec<(f64, f64)> = pts.iter().map(|&(a, b)| (a as f64, b as f64 / 20.0)).collect();
            let dominated = dominated_quadratic(&pairs);
            let mut kept = pareto_indices(&pairs);
            let powers: Vec<f64> = kept.iter().map(|&i| pairs[i].0).collect();
            proptest::prop_assert!(powers.windows(2).all(|w| w[0] <= w[1]));
            kept.sort();
            let expect: Vec<usize> = (0..pairs.len()).filter(|&i| !dominated[i]).collect();
            proptest::prop_assert_eq!(kept, expect);
        }
    }

    #[test]
    fn model_seeds_differ() {
        assert_ne!(model_seed(7, 0), model_seed(7, 1));
        assert_eq!(model_seed(7, 2), model_seed(7, 2));
    }

    #[test]
    fn csv_round_trips_floats() {
        let p = TradeoffPoint {
            sigma: 0.1,
            model: "m".into(),
            strategy: Strategy::Aware,
            c_choice: Some(8),
            total_power_w: 1.0 / 3.0,
            achieved_crb_rad2: 2.7e-5,
            achieved_rate_bps: 2e8,
            rho_dl: 0.7,
            goal_effectiveness: 0.99,
            feasible: true,
        };
        let mut buf = Vec::new();
        write_tradeoff_csv(std::slice::from_ref(&p), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[4].parse::<f64>().unwrap(), p.total_power_w);
        assert_eq!(row[0].parse::<f64>().unwrap(), 0.1);
        assert_eq!(row[3], "8");
    }
}
