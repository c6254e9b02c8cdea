//! Randomized cross-checks of the solver and the CRB algebra against the
//! reference computations in [`crate::oracle`].

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{steering_derivative, steering_vector};
use crate::oracle::{finite_difference_fim, grid_min_power, random_subproblem, random_target_channel};
use crate::scenario::SolverTolerances;
use crate::sensing::{equivalent_fim_theta, fim_3x3, schur_theta};
use crate::solver::solve_subproblem;

pub const ORACLE_REL_TOL: f64 = 1e-4;
pub const KKT_TOL: f64 = 1e-6;
pub const PRIMAL_TOL: f64 = 1e-7;
pub const SCHUR_ANALYTIC_TOL: f64 = 1e-8;
pub const SCHUR_FD_TOL: f64 = 1e-4;
pub const STEERING_FD_TOL: f64 = 1e-6;

/// Deliberate corruption of the solver output, used to check that the
/// suites detect a wrong solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    /// Multiply every solver power by this factor.
    ScaleSolverPower(f64),
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub instances: usize,
    pub max_f: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            instances: 200,
            max_f: 4,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub name: &'static str,
    pub max: f64,
    pub tolerance: f64,
}

impl Metric {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Metric {
            name,
            max: 0.0,
            tolerance,
        }
    }

    fn record(&mut self, value: f64) -> bool {
        let v = if value.is_nan() { f64::INFINITY } else { value };
        self.max = self.max.max(v);
        v <= self.tolerance
    }
}

/// A violation with the seed that replays it.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub seed: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub instances: usize,
    pub metrics: Vec<Metric>,
    pub violations: Vec<Violation>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for suite in &self.suites {
            let tag = if suite.passed() { "ok" } else { "FAILED" };
            writeln!(f, "{} ({} instances): {tag}", suite.name, suite.instances)?;
            for m in &suite.metrics {
                writeln!(f, "  {:<28} max {:.3e}  (tol {:.1e})", m.name, m.max, m.tolerance)?;
            }
            for v in suite.violations.iter().take(10) {
                writeln!(f, "  violation, seed {}: {}", v.seed, v.detail)?;
            }
            if suite.violations.len() > 10 {
                writeln!(f, "  ... {} more", suite.violations.len() - 10)?;
            }
        }
        Ok(())
    }
}

fn instance_seed(base: u64, i: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)
}

/// Solver against the grid oracle on random subproblems with
/// `F = 1 + (i mod max_f)` subcarriers.
pub fn solver_suite(opts: &VerifyOptions) -> SuiteReport {
    let tol = SolverTolerances::default();
    let mut gap = Metric::new("objective vs grid (rel)", ORACLE_REL_TOL);
    let mut kkt = Metric::new("KKT residual", KKT_TOL);
    let mut primal = Metric::new("primal violation (rel)", PRIMAL_TOL);
    let mut below_dual = Metric::new("below dual bound (rel)", 1e-9);
    let outcomes: Vec<_> = (0..opts.instances)
        .into_par_iter()
        .map(|i| {
            let seed = instance_seed(opts.seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1 + i % opts.max_f.max(1);
            let sp = random_subproblem(&mut rng, n);
            let mut sol = solve_subproblem(&sp, &tol);
            if let Some(Fault::ScaleSolverPower(k)) = opts.fault {
                sol.p_dl.iter_mut().for_each(|p| *p *= k);
                sol.kkt = sp.kkt_report(&sol.p_dl, sol.lambda, sol.mu);
            }
            let oracle = grid_min_power(&sp, true);
            (seed, n, sp, sol, oracle)
        })
        .collect();
    let mut violations = Vec::new();
    for (seed, n, sp, sol, oracle) in outcomes {
        let Some(oracle) = oracle else {
            if sol.is_optimal() {
                violations.push(Violation {
                    seed,
                    detail: format!("F={n}: oracle infeasible, solver returned {:?}", sol.status),
                });
            }
            continue;
        };
        if !sol.is_optimal() {
            violations.push(Violation {
                seed,
                detail: format!("F={n}: solver status {:?}, oracle {:.9e}", sol.status, oracle.total_power),
            });
            continue;
        }
        let total = sol.total_power();
        let rel = (total - oracle.total_power) / oracle.total_power.max(f64::MIN_POSITIVE);
        let dual = sp.dual_value(sol.lambda, sol.mu);
        let mut bad = Vec::new();
        if !gap.record(rel) {
            bad.push(format!("solver {total:.9e} vs grid {:.9e}", oracle.total_power));
        }
        if !kkt.record(sol.kkt.residual()) {
            bad.push(format!("KKT {:?}", sol.kkt));
        }
        if !primal.record(sol.kkt.primal) {
            bad.push(format!("primal violation {:.3e}", sol.kkt.primal));
        }
        let oracle_below = (dual - oracle.total_power) / oracle.total_power.max(f64::MIN_POSITIVE);
        if !below_dual.record(oracle_below) {
            bad.push(format!("grid point {:.9e} below dual bound {dual:.9e}", oracle.total_power));
        }
        if !bad.is_empty() {
            violations.push(Violation {
                seed,
                detail: format!("F={n}: {}", bad.join("; ")),
            });
        }
    }
    SuiteReport {
        name: "solver vs grid oracle",
        instances: opts.instances,
        metrics: vec![gap, kkt, primal, below_dual],
        violations,
    }
}

/// Schur complement of the 3x3 FIM against the projector form, with
/// analytic and with finite-difference angle derivatives.
pub fn crb_suite(opts: &VerifyOptions) -> SuiteReport {
    let mut analytic = Metric::new("Schur vs projector (rel)", SCHUR_ANALYTIC_TOL);
    let mut fd = Metric::new("finite-difference FIM (rel)", SCHUR_FD_TOL);
    let mut violations = Vec::new();
    for i in 0..opts.instances {
        let seed = instance_seed(opts.seed ^ 0xC0FFEE, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cs, spacing) = random_target_channel(&mut rng);
        let p = rng.random_range(0.01..10.0);
        let k = rng.random_range(1.0..1e3);
        let noise = rng.random_range(1e-3..1.0);
        let closed = equivalent_fim_theta(&cs, 0, p, k, noise);
        let schur = schur_theta(&fim_3x3(&cs, 0, p, k, noise));
        let schur_fd = schur_theta(&finite_difference_fim(&cs, p, k, noise, spacing));
        let ra = (schur - closed).abs() / closed;
        let rf = (schur_fd - closed).abs() / closed;
        let ok_a = analytic.record(ra);
        let ok_f = fd.record(rf);
        if !(ok_a && ok_f) {
            violations.push(Violation {
                seed,
                detail: format!("closed {closed:.9e}, Schur {schur:.9e}, finite-difference {schur_fd:.9e}"),
            });
        }
    }
    SuiteReport {
        name: "CRB algebra",
        instances: opts.instances,
        metrics: vec![analytic, fd],
        violations,
    }
}

/// Analytic steering derivative against central differences.
pub fn steering_suite(opts: &VerifyOptions) -> SuiteReport {
    let mut metric = Metric::new("derivative vs FD (rel)", STEERING_FD_TOL);
    let mut violations = Vec::new();
    for i in 0..opts.instances {
        let seed = instance_seed(opts.seed ^ 0x57EE, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = rng.random_range(-1.5..1.5);
        let n = rng.random_range(2..33);
        let d = rng.random_range(0.1..1.0);
        let h = 1e-6;
        let plus = steering_vector(theta + h, n, d);
        let minus = steering_vector(theta - h, n, d);
        let analytic = steering_derivative(theta, n, d);
        let mut err = 0.0;
        let mut scale = 0.0;
        for k in 0..n {
            let fd = (plus[k] - minus[k]) / (2.0 * h);
            err += (fd - analytic[k]).norm_sqr();
            scale += analytic[k].norm_sqr();
        }
        let rel = (err / scale.max(f64::MIN_POSITIVE)).sqrt();
        let rel = if scale == 0.0 { err.sqrt() } else { rel };
        if !metric.record(rel) {
            violations.push(Violation {
                seed,
                detail: format!("theta={theta}, n={n}, d={d}: relative error {rel:.3e}"),
            });
        }
    }
    SuiteReport {
        name: "steering derivative",
        instances: opts.instances,
        metrics: vec![metric],
        violations,
    }
}

pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    if opts.instances == 0 {
        log::warn!("verification requested with zero instances; nothing is checked");
    }
    VerifyReport {
        suites: vec![solver_suite(opts), crb_suite(opts), steering_suite(opts)],
    }
}
