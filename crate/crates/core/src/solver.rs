//! Exact solver for the joint DL-power / representation-size problem.
//!
//! For a fixed representation size the problem is
//!
//! ```text
//! minimize    sum_f P_f
//! subject to  sum_f g_f P_f >= A                  (CRB)
//!             sum_f log2(1 + c_f P_f) >= r        (DL rate)
//!             P_f >= 0,  sum_f P_f <= P_max
//! ```
//!
//! Stationarity of the Lagrangian gives
//! `P_f = max(0, mu / (ln2 (1 - lambda g_f)) - 1/c_f)`, a water-filling with
//! per-subcarrier weights `1 - lambda g_f`. For fixed `lambda` the rate
//! multiplier `mu` has a closed form (sorted water level), and `lambda` is
//! found by bisection on `[0, 1/max g)`. The two single-constraint corner
//! cases are checked first. The budget cannot bind at an optimum because the
//! objective is the total power itself, so it is checked afterwards.
//!
//! The outer problem enumerates the bottleneck set and keeps the candidate
//! with the smallest weighted objective.

use std::f64::consts::LN_2;
use std::fmt;

use crate::channel::ChannelSet;
use crate::ei::{delay_budget, DelayBudget, Representation};
use crate::profile::InferenceModelProfile;
use crate::scenario::{Scenario, SolverTolerances};
use crate::sensing::{self, point_target_gains, SensingGains};

/// Relative spread under which subcarrier CRB gains count as tied.
const GAIN_TIE_REL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSubproblem {
    /// CRB gain per subcarrier (coefficient of `P_f` in gamma).
    pub g_lin: Vec<f64>,
    /// Rate gain per subcarrier, `|h_dl w_dl|^2 / (N_0 W)`.
    pub c_lin: Vec<f64>,
    /// Required gamma, `N_0 / (2 T rho_dl CRB_th)`.
    pub crb_rhs: f64,
    /// Required `sum_f log2(1 + c_f P_f)`, `R_th / (rho_dl W)`.
    pub rate_rhs: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Crb,
    Rate,
    Budget,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constraint::Crb => "CRB constraint unsatisfiable",
            Constraint::Rate => "DL rate constraint unsatisfiable",
            Constraint::Budget => "power budget exceeded",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubproblemStatus {
    Optimal,
    Infeasible(Constraint),
    NumericalFailure(String),
}

/// Optimality certificate of a subproblem solution. All entries are
/// dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    /// Largest stationarity / dual-feasibility violation over subcarriers.
    pub stationarity: f64,
    /// Largest relative constraint violation (CRB, rate, nonnegativity).
    pub primal: f64,
    /// Complementary-slackness products normalized by the objective.
    pub complementary: f64,
    /// `(primal - dual) / primal`.
    pub duality_gap: f64,
}

impl KktReport {
    /// Largest of stationarity, complementary slackness and duality gap.
    pub fn residual(&self) -> f64 {
        self.stationarity
            .max(self.complementary)
            .max(self.duality_gap.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub p_dl: Vec<f64>,
    pub status: SubproblemStatus,
    /// Multiplier of the CRB constraint.
    pub lambda: f64,
    /// Multiplier of the rate constraint (in watts per bit of `sum log2`).
    pub mu: f64,
    pub kkt: KktReport,
}

impl SubproblemSolution {
    pub fn total_power(&self) -> f64 {
        self.p_dl.iter().sum()
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SubproblemStatus::Optimal
    }

    fn failed(n: usize, status: SubproblemStatus) -> Self {
        SubproblemSolution {
            p_dl: vec![0.0; n],
            status,
            lambda: f64::NAN,
            mu: f64::NAN,
            kkt: KktReport::default(),
        }
    }
}

impl ConvexSubproblem {
    pub fn num_sc(&self) -> usize {
        self.g_lin.len()
    }

    pub fn rate_sum(&self, p: &[f64]) -> f64 {
        self.c_lin
            .iter()
            .zip(p)
            .map(|(c, p)| (c * p).ln_1p())
            .sum::<f64>()
            / LN_2
    }

    pub fn gamma(&self, p: &[f64]) -> f64 {
        self.g_lin.iter().zip(p).map(|(g, p)| g * p).sum()
    }

    /// Lagrange dual function `min_{P >= 0} L(P, lambda, mu)`; a lower bound
    /// on the optimal total power for any `lambda, mu >= 0`.
    pub fn dual_value(&self, lambda: f64, mu: f64) -> f64 {
        let mut value = lambda * self.crb_rhs + mu * self.rate_rhs;
        for (&g, &c) in self.g_lin.iter().zip(&self.c_lin) {
            let w = 1.0 - lambda * g;
            let slope0 = mu * c / LN_2;
            if w <= 0.0 {
                if slope0 > 0.0 || w < 0.0 {
                    return f64::NEG_INFINITY;
                }
                continue;
            }
            if slope0 > w {
                let p = mu / (LN_2 * w) - 1.0 / c;
                value += w * p - mu * (c * p).ln_1p() / LN_2;
            }
        }
        value
    }

    /// Stationarity, feasibility, slackness and duality gap at `(p, lambda, mu)`.
    pub fn kkt_report(&self, p: &[f64], lambda: f64, mu: f64) -> KktReport {
        let total: f64 = p.iter().sum();
        let scale = total.max(f64::MIN_POSITIVE);
        let mut stationarity: f64 = 0.0;
        for ((&g, &c), &pf) in self.g_lin.iter().zip(&self.c_lin).zip(p) {
            let grad = 1.0 - lambda * g - mu * c / (LN_2 * (1.0 + c * pf));
            let v = if pf > 0.0 { grad.abs() } else { (-grad).max(0.0) };
            stationarity = stationarity.max(v);
        }
        let gamma = self.gamma(p);
        let rate = self.rate_sum(p);
        let mut primal: f64 = p.iter().fold(0.0, |acc, &x| acc.max(-x));
        if self.crb_rhs > 0.0 {
            primal = primal.max((self.crb_rhs - gamma) / self.crb_rhs);
        }
        if self.rate_rhs > 0.0 {
            primal = primal.max((self.rate_rhs - rate) / self.rate_rhs);
        }
        let complementary = (lambda * (gamma - self.crb_rhs)).abs().max((mu * (rate - self.rate_rhs)).abs()) / scale;
        let dual = self.dual_value(lambda, mu);
        let duality_gap = if total > 0.0 { (total - dual) / total } else { -dual.min(0.0) };
        KktReport {
            stationarity,
            primal: primal.max(0.0),
            complementary,
            duality_gap,
        }
    }
}

/// Minimizes `sum_f w_f P_f` subject to `sum_f log2(1 + c_f P_f) >= r`.
///
/// Returns the powers and `ln mu` of the water level such that
/// `1 + c_f P_f = max(1, mu c_f / (ln2 w_f))`. Subcarriers with `c_f = 0`
/// receive no power.
fn weighted_water_fill(weights: &[f64], c_lin: &[f64], rate: f64) -> Option<(Vec<f64>, f64)> {
    let n = c_lin.len();
    if rate <= 0.0 {
        return Some((vec![0.0; n], f64::NEG_INFINITY));
    }
    // ln of the effective gain c_f / (ln2 w_f)
    let mut order: Vec<(usize, f64)> = (0..n)
        .filter(|&f| c_lin[f] > 0.0)
        .map(|f| (f, c_lin[f].ln() - (LN_2 * weights[f]).ln()))
        .collect();
    if order.is_empty() {
        return None;
    }
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let target = rate * LN_2;
    let mut prefix = 0.0;
    let mut level = f64::NAN;
    for (k, &(_, la)) in order.iter().enumerate() {
        prefix += la;
        let nu = (target - prefix) / (k + 1) as f64;
        let next_inactive = order.get(k + 1).is_none_or(|&(_, lb)| nu + lb <= 0.0);
        if nu + la > 0.0 && next_inactive {
            level = nu;
            break;
        }
    }
    if level.is_nan() {
        return None;
    }
    let mut p = vec![0.0; n];
    for &(f, la) in &order {
        let x = level + la;
        if x > 0.0 {
            p[f] = x.exp_m1() / c_lin[f];
        }
    }
    Some((p, level))
}

/// Maximizes `sum_{f in set} log2(1 + c_f P_f)` with `sum P_f = total`.
fn power_water_fill(c_lin: &[f64], set: &[usize], total: f64) -> Vec<f64> {
    let mut p = vec![0.0; c_lin.len()];
    let mut active: Vec<usize> = set.iter().copied().filter(|&f| c_lin[f] > 0.0).collect();
    if active.is_empty() {
        for &f in set {
            p[f] = total / set.len() as f64;
        }
        return p;
    }
    // ascending inverse gain
    active.sort_by(|&a, &b| c_lin[b].total_cmp(&c_lin[a]).then(a.cmp(&b)));
    let mut sum_inv = 0.0;
    let mut level = 0.0;
    let mut k_used = 0;
    for (k, &f) in active.iter().enumerate() {
        sum_inv += 1.0 / c_lin[f];
        let candidate = (total + sum_inv) / (k + 1) as f64;
        let next_ok = active
            .get(k + 1)
            .is_none_or(|&g| candidate <= 1.0 / c_lin[g]);
        if candidate > 1.0 / c_lin[f] && next_ok {
            level = candidate;
            k_used = k + 1;
            break;
        }
    }
    for &f in &active[..k_used] {
        p[f] = (level - 1.0 / c_lin[f]).max(0.0);
    }
    p
}

/// Solves one convex subproblem.
pub fn solve_subproblem(sp: &ConvexSubproblem, tol: &SolverTolerances) -> SubproblemSolution {
    let n = sp.num_sc();
    if n == 0 || sp.c_lin.len() != n {
        return SubproblemSolution::failed(
            n,
            SubproblemStatus::NumericalFailure("gain vectors are empty or of unequal length".into()),
        );
    }
    let (a, r) = (sp.crb_rhs, sp.rate_rhs);
    let g_max = sp.g_lin.iter().cloned().fold(0.0, f64::max);
    if a > 0.0 && g_max <= 0.0 {
        return SubproblemSolution::failed(n, SubproblemStatus::Infeasible(Constraint::Crb));
    }

    let mut solution = match solve_unbudgeted(sp, g_max, tol) {
        Ok(s) => s,
        Err(status) => return SubproblemSolution::failed(n, status),
    };
    if solution.total_power() > sp.p_max * (1.0 + tol.constraint_rel_tol) {
        solution.status = SubproblemStatus::Infeasible(Constraint::Budget);
    }
    log::trace!(
        "subproblem F={n} A={a:.4e} r={r:.4e}: P={:.6e} status={:?}",
        solution.total_power(),
        solution.status
    );
    solution
}

fn finish(sp: &ConvexSubproblem, p_dl: Vec<f64>, lambda: f64, mu: f64) -> SubproblemSolution {
    let kkt = sp.kkt_report(&p_dl, lambda, mu);
    SubproblemSolution {
        p_dl,
        status: SubproblemStatus::Optimal,
        lambda,
        mu,
        kkt,
    }
}

fn solve_unbudgeted(
    sp: &ConvexSubproblem,
    g_max: f64,
    tol: &SolverTolerances,
) -> Result<SubproblemSolution, SubproblemStatus> {
    let n = sp.num_sc();
    let (a, r) = (sp.crb_rhs, sp.rate_rhs);
    let ones = vec![1.0; n];

    // rate alone (lambda = 0)
    let Some((p_wf, level)) = weighted_water_fill(&ones, &sp.c_lin, r) else {
        return Err(SubproblemStatus::Infeasible(Constraint::Rate));
    };
    if sp.gamma(&p_wf) >= a {
        return Ok(finish(sp, p_wf, 0.0, level.exp()));
    }

    // CRB alone (mu = 0): all power on the best sensing subcarriers
    let best: Vec<usize> = (0..n)
        .filter(|&f| sp.g_lin[f] >= g_max * (1.0 - GAIN_TIE_REL))
        .collect();
    let p_crb = power_water_fill(&sp.c_lin, &best, a / g_max);
    if sp.rate_sum(&p_crb) >= r {
        return Ok(finish(sp, p_crb, 1.0 / g_max, 0.0));
    }

    // both active: bisection on t = lambda * g_max in (0, 1)
    let at = |t: f64| -> Option<(Vec<f64>, f64, f64)> {
        let w: Vec<f64> = sp.g_lin.iter().map(|g| 1.0 - t * g / g_max).collect();
        let (p, level) = weighted_water_fill(&w, &sp.c_lin, r)?;
        let slack = sp.gamma(&p) - a;
        Some((p, level, slack))
    };
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=60 {
        let t = 1.0 - 0.5f64.powi(k);
        match at(t) {
            Some((_, _, slack)) if slack >= 0.0 => {
                hi = Some(t);
                break;
            }
            Some(_) => lo = t,
            None => break,
        }
    }
    let Some(mut hi) = hi else {
        return Err(SubproblemStatus::NumericalFailure(
            "could not bracket the CRB multiplier".into(),
        ));
    };
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol.dual_tol * (1.0 - lo) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match at(mid) {
            Some((_, _, slack)) if slack >= 0.0 => hi = mid,
            Some(_) => lo = mid,
            None => {
                return Err(SubproblemStatus::NumericalFailure(
                    "water level undefined during bisection".into(),
                ))
            }
        }
    }
    let (p, level, _) = at(hi).expect("bracket endpoint evaluated before");
    Ok(finish(sp, p, hi / g_max, level.exp()))
}

/// Builds the subproblem for a given DL time fraction.
pub fn build_subproblem(s: &Scenario, cs: &ChannelSet, g_lin: &[f64], rho_dl: f64) -> ConvexSubproblem {
    let dc = s.derived_constants();
    let req = &s.requirements;
    ConvexSubproblem {
        g_lin: g_lin.to_vec(),
        c_lin: (0..cs.num_sc())
            .map(|f| cs.dl_gain(f) / dc.noise_power_w_per_sc)
            .collect(),
        crb_rhs: dc.noise_psd_w_per_hz / (2.0 * s.frame_duration_s * rho_dl * req.crb_theta_th_rad2),
        rate_rhs: req.r_dl_th_bps / (rho_dl * s.sc_spacing_hz),
        p_max: s.p_dl_max_w,
    }
}

/// One entry of the outer enumeration over the bottleneck set.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub rep: Representation,
    pub budget: DelayBudget,
    pub solution: Option<SubproblemSolution>,
}

impl Candidate {
    pub fn is_feasible(&self) -> bool {
        self.budget.is_feasible() && self.solution.as_ref().is_some_and(|s| s.is_optimal())
    }

    pub fn failure_reason(&self) -> Option<String> {
        if let Some(v) = self.budget.violation {
            return Some(v.to_string());
        }
        match &self.solution {
            Some(s) => match &s.status {
                SubproblemStatus::Optimal => None,
                SubproblemStatus::Infeasible(c) => Some(c.to_string()),
                SubproblemStatus::NumericalFailure(m) => Some(format!("numerical failure: {m}")),
            },
            None => Some("not solved".into()),
        }
    }
}

/// Solves the subproblem for every bottleneck size with the time split
/// planned from `planning_delay_s`. Candidates do not depend on the weight
/// sigma and can be reused across a sweep.
pub fn plan_candidates(s: &Scenario, cs: &ChannelSet, planning_delay_s: f64) -> Vec<Candidate> {
    let g_lin = point_target_gains(cs);
    Representation::all(s)
        .into_iter()
        .map(|rep| {
            let budget = delay_budget(s, cs, rep, planning_delay_s);
            let solution = budget.is_feasible().then(|| {
                let sp = build_subproblem(s, cs, &g_lin, budget.rho_dl_star);
                solve_subproblem(&sp, &s.solver)
            });
            Candidate {
                rep,
                budget,
                solution,
            }
        })
        .collect()
}

/// A resource-allocation decision and the KPIs it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub p_dl: Vec<f64>,
    pub c_choice: Option<u32>,
    pub n_b: Option<u64>,
    pub rho_dl: f64,
    pub objective: f64,
    pub total_power_w: f64,
    pub achieved_crb: f64,
    pub achieved_rate_bps: f64,
    pub feasible: bool,
    pub kkt_residual: f64,
    pub kkt: KktReport,
    pub lambda: f64,
    pub mu: f64,
    /// Why each rejected bottleneck size was rejected.
    pub failures: Vec<(u32, String)>,
}

impl Allocation {
    fn infeasible(failures: Vec<(u32, String)>) -> Self {
        Allocation {
            p_dl: Vec::new(),
            c_choice: None,
            n_b: None,
            rho_dl: f64::NAN,
            objective: f64::INFINITY,
            total_power_w: f64::NAN,
            achieved_crb: f64::NAN,
            achieved_rate_bps: f64::NAN,
            feasible: false,
            kkt_residual: f64::NAN,
            kkt: KktReport::default(),
            lambda: f64::NAN,
            mu: f64::NAN,
            failures,
        }
    }
}

/// Weighted objective `sigma P / P_max + (1 - sigma) n_max / n_b`.
pub fn weighted_objective(s: &Scenario, sigma: f64, total_power: f64, n_b: u64) -> f64 {
    sigma * total_power / s.p_dl_max_w + (1.0 - sigma) * s.max_bits() as f64 / n_b as f64
}

/// Achieved DL rate `rho_dl W sum_f log2(1 + SNR_f)`.
pub fn achieved_rate(s: &Scenario, cs: &ChannelSet, p_dl: &[f64], rho_dl: f64) -> f64 {
    let noise = s.derived_constants().noise_power_w_per_sc;
    let bits: f64 = crate::channel::dl_snr_per_sc(cs, p_dl, noise)
        .iter()
        .map(|x| x.ln_1p())
        .sum::<f64>()
        / LN_2;
    rho_dl * s.sc_spacing_hz * bits
}

/// Achieved simplified point-target CRB.
pub fn achieved_crb(s: &Scenario, cs: &ChannelSet, p_dl: &[f64], rho_dl: f64) -> f64 {
    let k = sensing::k_symbols(rho_dl, s.frame_duration_s, s.sc_spacing_hz);
    let gains = SensingGains::new(point_target_gains(cs), p_dl, k);
    sensing::crb_theta(&gains, s.derived_constants().noise_power_w_per_sc)
}

/// Picks the candidate with the smallest weighted objective. Ties go to the
/// larger representation, then to the lower power.
pub fn select(s: &Scenario, cs: &ChannelSet, candidates: &[Candidate], sigma: f64) -> Allocation {
    let mut best: Option<(&Candidate, f64, f64)> = None;
    let mut failures = Vec::new();
    for cand in candidates {
        if !cand.is_feasible() {
            failures.push((
                cand.rep.c,
                cand.failure_reason().unwrap_or_else(|| "infeasible".into()),
            ));
            continue;
        }
        let sol = cand.solution.as_ref().expect("feasible candidate has a solution");
        let power = sol.total_power();
        let obj = weighted_objective(s, sigma, power, cand.rep.n_b);
        let better = match best {
            None => true,
            Some((b, b_obj, b_power)) => {
                let tie = (obj - b_obj).abs() <= 1e-12 * obj.abs().max(b_obj.abs());
                if tie {
                    cand.rep.n_b > b.rep.n_b || (cand.rep.n_b == b.rep.n_b && power < b_power)
                } else {
                    obj < b_obj
                }
            }
        };
        if better {
            best = Some((cand, obj, power));
        }
    }
    let Some((cand, objective, total_power)) = best else {
        return Allocation::infeasible(failures);
    };
    let sol = cand.solution.as_ref().expect("checked above");
    let rho = cand.budget.rho_dl_star;
    Allocation {
        p_dl: sol.p_dl.clone(),
        c_choice: Some(cand.rep.c),
        n_b: Some(cand.rep.n_b),
        rho_dl: rho,
        objective,
        total_power_w: total_power,
        achieved_crb: achieved_crb(s, cs, &sol.p_dl, rho),
        achieved_rate_bps: achieved_rate(s, cs, &sol.p_dl, rho),
        feasible: true,
        kkt_residual: sol.kkt.residual(),
        kkt: sol.kkt,
        lambda: sol.lambda,
        mu: sol.mu,
        failures,
    }
}

/// Solves the full mixed-integer problem for one model and weight.
pub fn solve_problem_p(s: &Scenario, cs: &ChannelSet, model: &InferenceModelProfile, sigma: f64) -> Allocation {
    let candidates = plan_candidates(s, cs, model.planning_delay_s());
    select(s, cs, &candidates, sigma)
}

/// Compute-unaware benchmark: plans the time split with `planning_model`
/// (the heaviest registered model) whatever model actually serves the
/// batches. The allocation is later evaluated against the true model.
pub fn solve_compute_unaware(
    s: &Scenario,
    cs: &ChannelSet,
    planning_model: &InferenceModelProfile,
    sigma: f64,
) -> Allocation {
    solve_problem_p(s, cs, planning_model, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> SolverTolerances {
        SolverTolerances::default()
    }

    fn sp(g: &[f64], c: &[f64], a: f64, r: f64) -> ConvexSubproblem {
        ConvexSubproblem {
            g_lin: g.to_vec(),
            c_lin: c.to_vec(),
            crb_rhs: a,
            rate_rhs: r,
            p_max: 1e9,
        }
    }

    #[test]
    fn single_subcarrier_closed_form() {
        for (g, c, a, r) in [(2.0, 3.0, 5.0, 1.0), (0.5, 10.0, 0.1, 4.0), (1.0, 1.0, 0.0, 2.0), (1.0, 1.0, 3.0, 0.0)] {
            let sol = solve_subproblem(&sp(&[g], &[c], a, r), &tol());
            let expect = (a / g).max((2f64.powf(r) - 1.0) / c);
            assert!((sol.total_power() - expect).abs() <= 1e-10 * expect.max(1e-300), "{g} {c} {a} {r}");
        }
    }

    /// Water-filling by bisection on the water level.
    fn bisection_water_fill(c: &[f64], r: f64) -> Vec<f64> {
        let rate = |level: f64| -> f64 { c.iter().map(|&c| (level * c).max(1.0).log2()).sum() };
        let (mut lo, mut hi) = (0.0, 1.0);
        while rate(hi) < r {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rate(mid) < r {
                lo = mid
            } else {
                hi = mid
            }
        }
        c.iter().map(|&c| (hi - 1.0 / c).max(0.0)).collect()
    }

    #[test]
    fn no_crb_constraint_is_water_filling() {
        let c = [0.3, 2.0, 5.0, 0.05, 1.0];
        let problem = sp(&[1.0; 5], &c, 0.0, 6.0);
        let sol = solve_subproblem(&problem, &tol());
        let oracle = bisection_water_fill(&c, 6.0);
        for (p, q) in sol.p_dl.iter().zip(&oracle) {
            assert!((p - q).abs() <= 1e-9 * oracle.iter().sum::<f64>());
        }
        assert!((problem.rate_sum(&sol.p_dl) - 6.0).abs() < 1e-10);
        assert_eq!(sol.lambda, 0.0);
    }

    #[test]
    fn no_rate_constraint_uses_best_sensing_subcarrier() {
        let g = [0.2, 0.9, 0.4];
        let sol = solve_subproblem(&sp(&g, &[1.0, 1.0, 1.0], 3.0, 0.0), &tol());
        assert!((sol.p_dl[1] - 3.0 / 0.9).abs() < 1e-12);
        assert_eq!(sol.p_dl[0], 0.0);
        assert_eq!(sol.p_dl[2], 0.0);
    }

    #[test]
    fn both_constraints_active_certificate() {
        let problem = sp(&[1.0, 0.2, 0.05], &[0.2, 3.0, 8.0], 2.0, 5.0);
        let sol = solve_subproblem(&problem, &tol());
        assert!(sol.is_optimal());
        assert!(sol.lambda > 0.0 && sol.mu > 0.0);
        assert!(sol.kkt.residual() <= 1e-6, "{:?}", sol.kkt);
        assert!(sol.kkt.primal <= 1e-7);
        let dual = problem.dual_value(sol.lambda, sol.mu);
        assert!(dual <= sol.total_power() * (1.0 + 1e-12));
    }

    #[test]
    fn infeasibility_reasons() {
        let s = solve_subproblem(&sp(&[0.0, 0.0], &[1.0, 1.0], 1.0, 1.0), &tol());
        assert_eq!(s.status, SubproblemStatus::Infeasible(Constraint::Crb));
        let s = solve_subproblem(&sp(&[1.0], &[0.0], 1.0, 1.0), &tol());
        assert_eq!(s.status, SubproblemStatus::Infeasible(Constraint::Rate));
        let mut p = sp(&[1.0], &[1.0], 5.0, 0.0);
        p.p_max = 4.0;
        let s = solve_subproblem(&p, &tol());
        assert_eq!(s.status, SubproblemStatus::Infeasible(Constraint::Budget));
    }

    #[test]
    fn deterministic() {
        let problem = sp(&[1.0, 0.7, 0.3, 0.9], &[0.5, 2.0, 4.0, 1.0], 3.0, 7.0);
        let a = solve_subproblem(&problem, &tol());
        let b = solve_subproblem(&problem, &tol());
        assert_eq!(a, b);
    }

    #[test]
    fn weighted_water_fill_respects_weights() {
        let (p, _) = weighted_water_fill(&[1.0, 0.25], &[1.0, 1.0], 4.0).unwrap();
        // cheaper subcarrier gets more power
        assert!(p[1] > p[0]);
    }
}
