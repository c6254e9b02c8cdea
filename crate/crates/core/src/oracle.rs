//! Reference computations that share no code path with the production
//! solver and CRB: a grid search over power directions and a
//! finite-difference Fisher information.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{steering_vector, CVec, ChannelSet};
use crate::sensing::Mat3;
use crate::solver::ConvexSubproblem;

const COARSE_DIVISIONS: usize = 12;
const LOCAL_STEPS: i64 = 1;
const MAX_LEVELS: usize = 2000;
/// Local moves must improve the objective by this much relative to its
/// value, which is above the rounding noise of the scale computation.
const MIN_DECREASE: f64 = 1e-14;
const WEIGHT_STEPS: usize = 60;
/// The weight search stops once the two scales agree to this relative
/// precision at the inner minimizer.
const BALANCE_TOL: f64 = 1e-11;
/// ... or, once nearly balanced, when this many weights in a row fail to
/// improve the incumbent.
const STALL_STEPS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub total_power: f64,
    pub p: Vec<f64>,
    pub evaluations: usize,
}

/// Smallest scales `(S_crb, S_rate)` with `S x` meeting each constraint on
/// its own; `inf` if none.
fn scales(sp: &ConvexSubproblem, x: &[f64]) -> (f64, f64) {
    let gx: f64 = sp.g_lin.iter().zip(x).map(|(g, x)| g * x).sum();
    let s_crb = if sp.crb_rhs <= 0.0 {
        0.0
    } else if gx <= 0.0 {
        f64::INFINITY
    } else {
        sp.crb_rhs / gx
    };
    if sp.rate_rhs <= 0.0 {
        return (s_crb, 0.0);
    }
    if !sp.c_lin.iter().zip(x).any(|(c, x)| c * x > 0.0) {
        return (s_crb, f64::INFINITY);
    }
    // The rate is concave and increasing in the scale, so Newton steps
    // from zero approach the root from below without overshooting.
    let mut scale = 0.0;
    for _ in 0..500 {
        let (mut rate, mut slope) = (0.0, 0.0);
        for (c, x) in sp.c_lin.iter().zip(x) {
            let cx = c * x;
            rate += (cx * scale).ln_1p();
            slope += cx / (1.0 + cx * scale);
        }
        let step = (sp.rate_rhs * LN_2 - rate) / slope;
        if step <= 1e-16 * scale {
            break;
        }
        scale += step;
    }
    (s_crb, scale)
}

/// `t a + (1 - t) b` with the endpoint weights dropping their term, so an
/// infinite scale with zero weight does not poison the sum.
fn blend(t: f64, (a, b): (f64, f64)) -> f64 {
    if t <= 0.0 {
        b
    } else if t >= 1.0 {
        a
    } else {
        t * a + (1.0 - t) * b
    }
}

/// Maps free coordinates to a point of the probability simplex, projecting
/// onto the face `x_last = 0` when they sum above one.
fn to_simplex(free: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = free.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let sum: f64 = x.iter().sum();
    if sum > 1.0 {
        x.iter_mut().for_each(|v| *v /= sum);
        x.push(0.0);
    } else {
        x.push(1.0 - sum);
    }
    x
}

fn compositions(parts: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for k in 0..=total {
        prefix.push(k);
        compositions(parts - 1, total - k, prefix, out);
        prefix.pop();
    }
}

struct Search<'a> {
    sp: &'a ConvexSubproblem,
    evaluations: usize,
    /// Best exact `max(S_crb, S_rate)` seen and its direction.
    best: (f64, Vec<f64>),
}

impl Search<'_> {
    fn eval(&mut self, x: &[f64]) -> (f64, f64) {
        self.evaluations += 1;
        let pair = scales(self.sp, x);
        let s = pair.0.max(pair.1);
        if s < self.best.0 {
            self.best = (s, x.to_vec());
        }
        pair
    }

    /// Local grids around `start` for `t S_crb + (1 - t) S_rate`. The grid
    /// moves to its best point and grows, or shrinks when no point improves.
    fn refine(&mut self, t: f64, start: &[f64]) -> (Vec<f64>, (f64, f64)) {
        let dims = start.len();
        let mut center = start.to_vec();
        let mut x = to_simplex(&center);
        let mut pair = self.eval(&x);
        if dims == 0 {
            return (x, pair);
        }
        let side = (2 * LOCAL_STEPS + 1) as usize;
        let cells = side.pow(dims as u32);
        let mut radius = 1.0 / COARSE_DIVISIONS as f64;
        for _ in 0..MAX_LEVELS {
            if radius < 1e-9 {
                break;
            }
            let h = radius / LOCAL_STEPS as f64;
            let current = blend(t, pair);
            let mut moved: Option<(Vec<f64>, (f64, f64))> = None;
            let mut best_val = current - MIN_DECREASE * current.abs();
            for cell in 0..cells {
                let mut rem = cell;
                let mut offsets = Vec::with_capacity(dims);
                for _ in 0..dims {
                    offsets.push((rem % side) as i64 - LOCAL_STEPS);
                    rem /= side;
                }
                if offsets.iter().all(|&k| k == 0) {
                    continue;
                }
                let free: Vec<f64> = center
                    .iter()
                    .zip(&offsets)
                    .map(|(c, &k)| (c + k as f64 * h).clamp(0.0, 1.0))
                    .collect();
                let y = to_simplex(&free);
                let p = self.eval(&y);
                let v = blend(t, p);
                if v < best_val {
                    best_val = v;
                    moved = Some((y, p));
                }
            }
            match moved {
                Some((y, p)) => {
                    center = y[..dims].to_vec();
                    x = y;
                    pair = p;
                    radius = (2.0 * radius).min(1.0 / COARSE_DIVISIONS as f64);
                }
                None => radius /= 2.0,
            }
        }
        (x, pair)
    }
}

/// Minimum total power by grid search over the direction `x = P / sum P`.
///
/// Both `S_crb(x)` and `S_rate(x)`, the smallest scales meeting each
/// constraint along `x`, are convex on the simplex, so
/// `min_x max(S_crb, S_rate) = max_t min_x t S_crb + (1 - t) S_rate`.
/// Each inner minimum is smooth and is found by a uniform grid followed by
/// shrinking local grids; the weight `t` is found by false position on
/// `S_crb - S_rate` at the inner minimizer. The reported power is the best
/// exact `max(S_crb, S_rate)` over every direction evaluated, so it is
/// always attained by a feasible point. With `enforce_budget` the result is
/// discarded when it exceeds `p_max`. Returns `None` when no feasible
/// direction exists.
pub fn grid_min_power(sp: &ConvexSubproblem, enforce_budget: bool) -> Option<GridOptimum> {
    let n = sp.g_lin.len();
    if n == 0 {
        return None;
    }
    let mut search = Search {
        sp,
        evaluations: 0,
        best: (f64::INFINITY, Vec::new()),
    };
    let mut coarse = Vec::new();
    if n == 1 {
        search.eval(&[1.0]);
    } else {
        let mut grid = Vec::new();
        compositions(n, COARSE_DIVISIONS, &mut Vec::new(), &mut grid);
        for point in grid {
            let free: Vec<f64> = point[..n - 1]
                .iter()
                .map(|&k| k as f64 / COARSE_DIVISIONS as f64)
                .collect();
            let pair = search.eval(&to_simplex(&free));
            coarse.push((free, pair));
        }
    }
    if !search.best.0.is_finite() {
        return None;
    }
    if n > 1 {
        // Each inner search starts from the better of the best coarse point
        // and the previous inner minimizer.
        let mut previous: Option<Vec<f64>> = None;
        let mut inner = |search: &mut Search, t: f64| -> (f64, f64) {
            let (mut start, value) = coarse
                .iter()
                .map(|c| (c.0.clone(), blend(t, c.1)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("coarse grid is not empty");
            if let Some(prev) = &previous {
                let v = blend(t, search.eval(&to_simplex(prev)));
                if v < value {
                    start = prev.clone();
                }
            }
            let (x, pair) = search.refine(t, &start);
            previous = Some(x[..n - 1].to_vec());
            pair
        };
        // Relative imbalance `(S_crb - S_rate) / max`, decreasing in `t`.
        let imbalance = |(a, b): (f64, f64)| -> f64 {
            if a.is_infinite() {
                1.0
            } else if b.is_infinite() {
                -1.0
            } else {
                (a - b) / a.max(b).max(f64::MIN_POSITIVE)
            }
        };
        let d0 = imbalance(inner(&mut search, 0.0));
        let d1 = imbalance(inner(&mut search, 1.0));
        if d0 > 0.0 && d1 < 0.0 {
            // Illinois variant of false position on the imbalance.
            let (mut lo, mut hi, mut d_lo, mut d_hi) = (0.0, 1.0, d0, d1);
            let mut last_side = 0;
            let mut stalled = 0;
            for _ in 0..WEIGHT_STEPS {
                let before = search.best.0;
                let mut t = (lo * d_hi - hi * d_lo) / (d_hi - d_lo);
                if !(t > lo && t < hi) {
                    t = 0.5 * (lo + hi);
                }
                let d = imbalance(inner(&mut search, t));
                if d.abs() <= 1e-6 && search.best.0 >= before * (1.0 - 1e-13) {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                if d.abs() <= BALANCE_TOL || hi - lo <= 1e-15 || stalled >= STALL_STEPS {
                    break;
                }
                if d > 0.0 {
                    lo = t;
                    d_lo = d;
                    if last_side == 1 {
                        d_hi *= 0.5;
                    }
                    last_side = 1;
                } else {
                    hi = t;
                    d_hi = d;
                    if last_side == -1 {
                        d_lo *= 0.5;
                    }
                    last_side = -1;
                }
            }
        }
    }
    let (total_power, x) = search.best;
    if enforce_budget && total_power > sp.p_max {
        return None;
    }
    Some(GridOptimum {
        total_power,
        p: x.iter().map(|v| v * total_power).collect(),
        evaluations: search.evaluations,
    })
}

/// Draws a random subproblem with `n` subcarriers. Gains are log-uniform;
/// about one instance in ten drops the CRB or the rate requirement, and
/// some instances carry tied sensing gains.
pub fn random_subproblem<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ConvexSubproblem {
    let log_uniform = |rng: &mut R, lo: f64, hi: f64| (rng.random_range(lo.ln()..hi.ln())).exp();
    let mut g_lin: Vec<f64> = (0..n).map(|_| log_uniform(rng, 1e-2, 1e2)).collect();
    if n > 1 && rng.random_bool(0.15) {
        g_lin[1] = g_lin[0];
    }
    let c_lin: Vec<f64> = (0..n).map(|_| log_uniform(rng, 1e-2, 1e2)).collect();
    let g_max = g_lin.iter().cloned().fold(0.0, f64::max);
    let mode: f64 = rng.random();
    let crb_rhs = if mode < 0.1 { 0.0 } else { g_max * log_uniform(rng, 1e-2, 1e2) };
    let rate_rhs = if mode > 0.9 { 0.0 } else { rng.random_range(0.1..3.0 * n as f64) };
    ConvexSubproblem {
        g_lin,
        c_lin,
        crb_rhs,
        rate_rhs,
        p_max: 1e12,
    }
}

/// Random single-subcarrier target set with an arbitrary (not maximum
/// ratio) precoder, so that the Schur complement is non-trivial.
/// Returns the channel and its element spacing in wavelengths.
pub fn random_target_channel<R: Rng + ?Sized>(rng: &mut R) -> (ChannelSet, f64) {
    let theta = rng.random_range(-1.3..1.3);
    let n_tx = rng.random_range(2..12);
    let n_rx = rng.random_range(2..12);
    let spacing = rng.random_range(0.3..0.7);
    let alpha = Complex64::from_polar(rng.random_range(0.1..2.0), rng.random_range(0.0..std::f64::consts::TAU));
    let w: CVec = (0..n_tx)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let tx = steering_vector(theta, n_tx, spacing);
    let rx = steering_vector(theta, n_rx, spacing);
    let cs = ChannelSet {
        h_ul: vec![vec![Complex64::new(1.0, 0.0); n_rx]],
        h_dl: vec![vec![Complex64::new(1.0, 0.0); n_tx]],
        h_tx_tgt: vec![tx],
        h_rx_tgt: vec![rx],
        dh_rx_tgt: vec![crate::channel::steering_derivative(theta, n_rx, spacing)],
        dh_tx_tgt: vec![crate::channel::steering_derivative(theta, n_tx, spacing)],
        alpha: vec![alpha],
        theta_rad: theta,
        w_ul: vec![vec![Complex64::new(1.0, 0.0); n_rx]],
        w_dl: vec![w],
    };
    (cs, spacing)
}

/// Fisher information of subcarrier 0 with the echo-mean derivative in
/// `theta` taken by central finite differences of freshly built steering
/// vectors.
pub fn finite_difference_fim(cs: &ChannelSet, p_dl: f64, k_symbols: f64, noise_w: f64, spacing: f64) -> Mat3 {
    let n_tx = cs.h_tx_tgt[0].len();
    let n_rx = cs.h_rx_tgt[0].len();
    let w = &cs.w_dl[0];
    let alpha = cs.alpha[0];
    let amp = p_dl.sqrt();
    let mean = |theta: f64| -> CVec {
        let tx = steering_vector(theta, n_tx, spacing);
        let rx = steering_vector(theta, n_rx, spacing);
        let tw: Complex64 = tx.iter().zip(w).map(|(a, b)| a * b).sum();
        rx.iter().map(|r| alpha * r * tw * amp).collect()
    };
    let h = 1e-6;
    let plus = mean(cs.theta_rad + h);
    let minus = mean(cs.theta_rad - h);
    let d_theta: CVec = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    let base = mean(cs.theta_rad);
    let d_re: CVec = base.iter().map(|m| m / alpha).collect();
    let d_im: CVec = d_re.iter().map(|z| z * Complex64::i()).collect();
    let derivs = [d_theta, d_re, d_im];
    let mut j = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let s: Complex64 = derivs[a].iter().zip(&derivs[b]).map(|(x, y)| x.conj() * y).sum();
            j[a][b] = 2.0 * k_symbols / noise_w * s.re;
        }
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_direction_closed_form() {
        let sp = ConvexSubproblem {
            g_lin: vec![2.0],
            c_lin: vec![3.0],
            crb_rhs: 1.0,
            rate_rhs: 2.0,
            p_max: 10.0,
        };
        let opt = grid_min_power(&sp, true).unwrap();
        assert!((opt.total_power - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_discards_expensive_optimum() {
        let sp = ConvexSubproblem {
            g_lin: vec![1.0, 0.5],
            c_lin: vec![1.0, 1.0],
            crb_rhs: 5.0,
            rate_rhs: 0.0,
            p_max: 4.0,
        };
        assert!(grid_min_power(&sp, true).is_none());
        let free = grid_min_power(&sp, false).unwrap();
        assert!((free.total_power - 5.0).abs() < 1e-9);
    }
}
