//! Angle-estimation Cramér-Rao bound for the monostatic ISAC echo.
//!
//! The per-subcarrier target response is the rank-one matrix
//! `H_f = alpha_f h_rx h_tx`. With unknowns `eta_f = [theta, Re alpha_f,
//! Im alpha_f]` the 3x3 Fisher information is built from the derivatives of
//! the echo mean, and the reflection coefficient is eliminated with a Schur
//! complement. The optimizer works with the simplified point-target gains,
//! which are linear in the per-subcarrier DL power; the projector form is
//! kept for diagnostics.

use num_complex::Complex64;

use crate::channel::{dot, inner, norm_sqr, CVec, ChannelSet};

pub type Mat3 = [[f64; 3]; 3];

/// Per-subcarrier echo vector `g_f = h_rx (h_tx w_dl) sqrt(P)` and its
/// angular derivative.
fn echo_vectors(cs: &ChannelSet, f: usize, p_dl_f: f64) -> (CVec, CVec) {
    let amp = p_dl_f.max(0.0).sqrt();
    let tx_w = dot(&cs.h_tx_tgt[f], &cs.w_dl[f]);
    let dtx_w = dot(&cs.dh_tx_tgt[f], &cs.w_dl[f]);
    let g = cs.h_rx_tgt[f].iter().map(|h| h * tx_w * amp).collect();
    let g_dot = cs.h_rx_tgt[f]
        .iter()
        .zip(&cs.dh_rx_tgt[f])
        .map(|(h, dh)| (dh * tx_w + h * dtx_w) * amp)
        .collect();
    (g, g_dot)
}

/// Fisher information for `[theta, Re alpha, Im alpha]` on subcarrier `f`
/// given `k_symbols` snapshots with unit average symbol energy.
pub fn fim_3x3(cs: &ChannelSet, f: usize, p_dl_f: f64, k_symbols: f64, noise_w: f64) -> Mat3 {
    let (g, g_dot) = echo_vectors(cs, f, p_dl_f);
    let alpha = cs.alpha[f];
    let d_theta: CVec = g_dot.iter().map(|z| alpha * z).collect();
    let d_re = g.clone();
    let d_im: CVec = g.iter().map(|z| Complex64::i() * z).collect();
    let derivs = [d_theta, d_re, d_im];
    let scale = 2.0 * k_symbols / noise_w;
    let mut j = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in a..3 {
            let v = scale * inner(&derivs[a], &derivs[b]).re;
            j[a][b] = v;
            j[b][a] = v;
        }
    }
    j
}

/// `v - g (g^H v) / ||g||^2`; returns `v` unchanged when `g = 0`.
pub fn project_orthogonal(g: &[Complex64], v: &[Complex64]) -> CVec {
    let gg = norm_sqr(g);
    if gg == 0.0 {
        return v.to_vec();
    }
    let coef = inner(g, v) / gg;
    v.iter().zip(g).map(|(x, y)| x - y * coef).collect()
}

/// Equivalent information for `theta` after eliminating the reflection
/// coefficient: `(2K / N_0 W) |alpha|^2 g_dot^H P_g^perp g_dot`.
pub fn equivalent_fim_theta(
    cs: &ChannelSet,
    f: usize,
    p_dl_f: f64,
    k_symbols: f64,
    noise_w: f64,
) -> f64 {
    let (g, g_dot) = echo_vectors(cs, f, p_dl_f);
    if norm_sqr(&g) == 0.0 {
        return 0.0;
    }
    let proj = project_orthogonal(&g, &g_dot);
    let quad = inner(&g_dot, &proj).re.max(0.0);
    2.0 * k_symbols / noise_w * cs.alpha[f].norm_sqr() * quad
}

/// Schur complement of the `(theta, theta)` entry of a 3x3 FIM with respect
/// to the nuisance block.
pub fn schur_theta(j: &Mat3) -> f64 {
    let (a, b, c) = (j[1][1], j[1][2], j[2][2]);
    let det = a * c - b * b;
    if det == 0.0 {
        return 0.0;
    }
    let (u, v) = (j[0][1], j[0][2]);
    j[0][0] - (c * u * u - 2.0 * b * u * v + a * v * v) / det
}

/// Point-target gains `|alpha_f|^2 ||dh_rx||^2 |h_tx w_dl|^2`, so that
/// `gamma = sum_f g_f P_f`.
pub fn point_target_gains(cs: &ChannelSet) -> Vec<f64> {
    (0..cs.num_sc())
        .map(|f| {
            cs.alpha[f].norm_sqr()
                * norm_sqr(&cs.dh_rx_tgt[f])
                * dot(&cs.h_tx_tgt[f], &cs.w_dl[f]).norm_sqr()
        })
        .collect()
}

/// Number of DL symbols per subcarrier, `K = rho_dl T W`.
pub fn k_symbols(rho_dl: f64, frame_duration_s: f64, sc_spacing_hz: f64) -> f64 {
    rho_dl * frame_duration_s * sc_spacing_hz
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingGains {
    pub g_lin: Vec<f64>,
    /// `sum_f g_f P_f`.
    pub gamma: f64,
    pub k_symbols: f64,
}

impl SensingGains {
    pub fn new(g_lin: Vec<f64>, p_dl: &[f64], k_symbols: f64) -> Self {
        let gamma = g_lin.iter().zip(p_dl).map(|(g, p)| g * p).sum();
        SensingGains {
            g_lin,
            gamma,
            k_symbols,
        }
    }
}

/// `CRB_theta = N_0 W / (2 K gamma)`; `+inf` when there is no sensing energy.
pub fn crb_theta(gains: &SensingGains, noise_w: f64) -> f64 {
    if gains.gamma <= 0.0 || gains.k_symbols <= 0.0 {
        return f64::INFINITY;
    }
    noise_w / (2.0 * gains.k_symbols * gains.gamma)
}

/// `sum_f |alpha_f|^2 g_dot^H P_g^perp g_dot` for a power allocation.
pub fn general_gamma(cs: &ChannelSet, p_dl: &[f64]) -> f64 {
    // equivalent_fim_theta with 2K / N_0 W = 1
    p_dl.iter()
        .enumerate()
        .map(|(f, &p)| equivalent_fim_theta(cs, f, p, 0.5, 1.0))
        .sum()
}

/// Simplified point-target CRB next to the projector-form CRB for the same
/// allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingDiagnostics {
    pub gamma_simplified: f64,
    pub gamma_general: f64,
    pub crb_simplified: f64,
    pub crb_general: f64,
    /// `crb_general / crb_simplified`.
    pub crb_ratio: f64,
}

pub fn diagnostics(cs: &ChannelSet, p_dl: &[f64], k_symbols: f64, noise_w: f64) -> SensingDiagnostics {
    let simplified = SensingGains::new(point_target_gains(cs), p_dl, k_symbols);
    let general = SensingGains {
        g_lin: Vec::new(),
        gamma: general_gamma(cs, p_dl),
        k_symbols,
    };
    let crb_simplified = crb_theta(&simplified, noise_w);
    let crb_general = crb_theta(&general, noise_w);
    let crb_ratio = if crb_simplified.is_finite() && crb_general.is_finite() {
        crb_general / crb_simplified
    } else {
        f64::NAN
    };
    log::debug!(
        "sensing: gamma simplified {:.6e}, projector form {:.6e}, CRB ratio {:.6}",
        simplified.gamma,
        general.gamma,
        crb_ratio
    );
    SensingDiagnostics {
        gamma_simplified: simplified.gamma,
        gamma_general: general.gamma,
        crb_simplified,
        crb_general,
        crb_ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_channels;
    use crate::scenario::Scenario;

    fn cs() -> (ChannelSet, f64) {
        let s = Scenario {
            num_sc: 3,
            ..Scenario::default()
        };
        let noise = s.derived_constants().noise_power_w_per_sc;
        (build_channels(&s, 0).unwrap(), noise)
    }

    #[test]
    fn zero_power_zero_information() {
        let (cs, noise) = cs();
        assert_eq!(fim_3x3(&cs, 0, 0.0, 10.0, noise), [[0.0; 3]; 3]);
        assert_eq!(equivalent_fim_theta(&cs, 0, 0.0, 10.0, noise), 0.0);
    }

    #[test]
    fn fim_linear_in_snapshots() {
        let (cs, noise) = cs();
        let a = fim_3x3(&cs, 1, 0.01, 10.0, noise);
        let b = fim_3x3(&cs, 1, 0.01, 20.0, noise);
        for i in 0..3 {
            for k in 0..3 {
                assert!((2.0 * a[i][k] - b[i][k]).abs() <= 1e-12 * b[i][k].abs().max(1e-300));
                assert_eq!(a[i][k], a[k][i]);
            }
        }
    }

    #[test]
    fn schur_matches_projector_form() {
        let (cs, noise) = cs();
        let j = fim_3x3(&cs, 2, 0.02, 7.0, noise);
        let s = schur_theta(&j);
        let e = equivalent_fim_theta(&cs, 2, 0.02, 7.0, noise);
        assert!((s - e).abs() <= 1e-8 * e);
    }

    #[test]
    fn projector_annihilates_parallel_and_is_idempotent() {
        let g: CVec = vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.3)];
        let par: CVec = g.iter().map(|z| z * Complex64::new(0.7, -1.1)).collect();
        assert!(norm_sqr(&project_orthogonal(&g, &par)) < 1e-28);
        let v: CVec = vec![Complex64::new(0.2, -1.0), Complex64::new(3.0, 0.5)];
        let once = project_orthogonal(&g, &v);
        let twice = project_orthogonal(&g, &once);
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn crb_infinite_without_energy() {
        let g = SensingGains::new(vec![1.0, 2.0], &[0.0, 0.0], 10.0);
        assert_eq!(crb_theta(&g, 1.0), f64::INFINITY);
        let g = SensingGains::new(vec![1.0, 2.0], &[1.0, 0.0], 0.0);
        assert_eq!(crb_theta(&g, 1.0), f64::INFINITY);
    }

    #[test]
    fn crb_halves_when_power_doubles() {
        let (cs, noise) = cs();
        let g = point_target_gains(&cs);
        let p = [0.01, 0.02, 0.005];
        let p2: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        let a = crb_theta(&SensingGains::new(g.clone(), &p, 30.0), noise);
        let b = crb_theta(&SensingGains::new(g, &p2, 30.0), noise);
        assert!((a / 2.0 - b).abs() <= 1e-14 * b);
    }

    #[test]
    fn gains_ignore_alpha_phase_and_vanish_with_alpha() {
        let (mut cs, _) = cs();
        let base = point_target_gains(&cs);
        for a in cs.alpha.iter_mut() {
            *a *= Complex64::from_polar(1.0, 1.234);
        }
        let rotated = point_target_gains(&cs);
        for (x, y) in base.iter().zip(&rotated) {
            assert!((x - y).abs() <= 1e-14 * x);
        }
        for a in cs.alpha.iter_mut() {
            *a = Complex64::new(0.0, 0.0);
        }
        assert!(point_target_gains(&cs).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn diagnostics_report_both_forms() {
        let (cs, noise) = cs();
        let d = diagnostics(&cs, &[0.01, 0.01, 0.01], 20.0, noise);
        assert!(d.crb_simplified.is_finite() && d.crb_general.is_finite());
        assert!((d.crb_ratio - d.gamma_simplified / d.gamma_general).abs() < 1e-9 * d.crb_ratio);
    }
}
