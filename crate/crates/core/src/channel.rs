//! Line-of-sight channel synthesis for the UL device, the DL user and the
//! sensing target, together with maximum-ratio beamformers.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scenario::Scenario;

pub type CVec = Vec<Complex64>;

/// Per-subcarrier channels and beamformers. Index `f` of every vector field
/// refers to subcarrier `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// UL device to BS receive array (`N_r` entries).
    pub h_ul: Vec<CVec>,
    /// BS transmit array to DL user, row vector (`N_t` entries).
    pub h_dl: Vec<CVec>,
    /// Transmit steering row vector toward the target.
    pub h_tx_tgt: Vec<CVec>,
    /// Receive steering vector from the target.
    pub h_rx_tgt: Vec<CVec>,
    pub dh_rx_tgt: Vec<CVec>,
    pub dh_tx_tgt: Vec<CVec>,
    /// Round-trip target reflection coefficient.
    pub alpha: Vec<Complex64>,
    pub theta_rad: f64,
    /// Maximum-ratio combiner, `h_ul / ||h_ul||`.
    pub w_ul: Vec<CVec>,
    /// Maximum-ratio precoder, `h_dl^H / ||h_dl||`.
    pub w_dl: Vec<CVec>,
}

/// ULA response: element `k` is `exp(j 2 pi d k sin(theta))`.
pub fn steering_vector(theta: f64, n_elems: usize, spacing_over_lambda: f64) -> CVec {
    let phase = 2.0 * PI * spacing_over_lambda * theta.sin();
    (0..n_elems)
        .map(|k| Complex64::from_polar(1.0, phase * k as f64))
        .collect()
}

/// Analytic `d/dtheta` of [`steering_vector`].
pub fn steering_derivative(theta: f64, n_elems: usize, spacing_over_lambda: f64) -> CVec {
    let phase = 2.0 * PI * spacing_over_lambda * theta.sin();
    let slope = 2.0 * PI * spacing_over_lambda * theta.cos();
    (0..n_elems)
        .map(|k| {
            let k = k as f64;
            Complex64::new(0.0, slope * k) * Complex64::from_polar(1.0, phase * k)
        })
        .collect()
}

/// Amplitude gain `sqrt((lambda / 4 pi)^2 d^-beta)`.
pub fn pathloss_amplitude(d_m: f64, lambda_m: f64, beta: f64) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::Degenerate(format!(
            "path loss needs a positive distance, got {d_m}"
        )));
    }
    Ok((lambda_m / (4.0 * PI)) * d_m.powf(-beta / 2.0))
}

/// Monostatic radar-equation amplitude of the round-trip reflection coefficient.
pub fn reflection_amplitude(lambda_m: f64, rcs_m2: f64, d_m: f64) -> f64 {
    (lambda_m * lambda_m * rcs_m2 / ((4.0 * PI).powi(3) * d_m.powi(4))).sqrt()
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `a^H b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Bilinear product `a b` of a row vector and a column vector (no conjugation).
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scaled(v: &[Complex64], s: Complex64) -> CVec {
    v.iter().map(|z| z * s).collect()
}

/// Synthesizes the channel set of a scenario.
///
/// Channels are path loss times the steering vector toward each node. With
/// `channel.random_phase` disabled the result does not depend on `seed`.
pub fn build_channels(s: &Scenario, seed: u64) -> Result<ChannelSet> {
    let dc = s.derived_constants();
    let lambda = dc.wavelength_m;
    let spacing = s.element_spacing_wavelengths;
    let d = dc.distances_m;
    let ang = dc.angles_rad;

    let amp_ul = pathloss_amplitude(d.ei_device, lambda, s.pathloss_exp)?;
    let amp_dl = pathloss_amplitude(d.dl_user, lambda, s.pathloss_exp)?;
    if !(d.target > 0.0) {
        return Err(Error::Degenerate("target coincides with the BS".into()));
    }
    let amp_alpha = reflection_amplitude(lambda, s.rcs_m2, d.target);

    let ul_base = steering_vector(ang.ei_device, s.n_rx, spacing);
    let dl_base = steering_vector(ang.dl_user, s.n_tx, spacing);
    let theta = ang.target;
    let tx_tgt = steering_vector(theta, s.n_tx, spacing);
    let rx_tgt = steering_vector(theta, s.n_rx, spacing);
    let dtx_tgt = steering_derivative(theta, s.n_tx, spacing);
    let drx_tgt = steering_derivative(theta, s.n_rx, spacing);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = s.num_sc;
    let mut cs = ChannelSet {
        h_ul: Vec::with_capacity(f),
        h_dl: Vec::with_capacity(f),
        h_tx_tgt: vec![tx_tgt; f],
        h_rx_tgt: vec![rx_tgt; f],
        dh_rx_tgt: vec![drx_tgt; f],
        dh_tx_tgt: vec![dtx_tgt; f],
        alpha: Vec::with_capacity(f),
        theta_rad: theta,
        w_ul: Vec::with_capacity(f),
        w_dl: Vec::with_capacity(f),
    };
    for _ in 0..f {
        let (ph_ul, ph_dl, ph_alpha) = if s.channel.random_phase {
            (
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        let h_ul = scaled(&ul_base, Complex64::from_polar(amp_ul, ph_ul));
        let h_dl = scaled(&dl_base, Complex64::from_polar(amp_dl, ph_dl));
        let n_ul = norm_sqr(&h_ul).sqrt();
        let n_dl = norm_sqr(&h_dl).sqrt();
        cs.w_ul.push(h_ul.iter().map(|z| z / n_ul).collect());
        cs.w_dl.push(h_dl.iter().map(|z| z.conj() / n_dl).collect());
        cs.h_ul.push(h_ul);
        cs.h_dl.push(h_dl);
        cs.alpha.push(Complex64::from_polar(amp_alpha, ph_alpha));
    }
    Ok(cs)
}

impl ChannelSet {
    pub fn num_sc(&self) -> usize {
        self.h_ul.len()
    }

    /// `|w_ul^H h_ul|^2` on subcarrier `f`.
    pub fn ul_gain(&self, f: usize) -> f64 {
        inner(&self.w_ul[f], &self.h_ul[f]).norm_sqr()
    }

    /// `|h_dl w_dl|^2` on subcarrier `f`.
    pub fn dl_gain(&self, f: usize) -> f64 {
        dot(&self.h_dl[f], &self.w_dl[f]).norm_sqr()
    }

    /// Writes one row per vector entry: `field,sc,elem,re,im`.
    pub fn write_columns<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "field,sc,elem,re,im")?;
        let fields: [(&str, &Vec<CVec>); 8] = [
            ("h_ul", &self.h_ul),
            ("h_dl", &self.h_dl),
            ("h_tx_tgt", &self.h_tx_tgt),
            ("h_rx_tgt", &self.h_rx_tgt),
            ("dh_rx_tgt", &self.dh_rx_tgt),
            ("dh_tx_tgt", &self.dh_tx_tgt),
            ("w_ul", &self.w_ul),
            ("w_dl", &self.w_dl),
        ];
        for (name, per_sc) in fields {
            for (f, v) in per_sc.iter().enumerate() {
                for (k, z) in v.iter().enumerate() {
                    writeln!(out, "{name},{f},{k},{:.17e},{:.17e}", z.re, z.im)?;
                }
            }
        }
        for (f, a) in self.alpha.iter().enumerate() {
            writeln!(out, "alpha,{f},0,{:.17e},{:.17e}", a.re, a.im)?;
        }
        Ok(())
    }
}

/// `SNR_f = P_f |w_ul^H h_ul|^2 / (N_0 W)`.
pub fn ul_snr_per_sc(cs: &ChannelSet, p_ul_per_sc: &[f64], noise_w: f64) -> Vec<f64> {
    p_ul_per_sc
        .iter()
        .enumerate()
        .map(|(f, p)| p * cs.ul_gain(f) / noise_w)
        .collect()
}

/// `SNR_f = P_f |h_dl w_dl|^2 / (N_0 W)`.
pub fn dl_snr_per_sc(cs: &ChannelSet, p_dl_per_sc: &[f64], noise_w: f64) -> Vec<f64> {
    p_dl_per_sc
        .iter()
        .enumerate()
        .map(|(f, p)| p * cs.dl_gain(f) / noise_w)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> Scenario {
        Scenario {
            num_sc: 4,
            ..Scenario::default()
        }
    }

    #[test]
    fn broadside_is_all_ones() {
        for z in steering_vector(0.0, 7, 0.5) {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn endfire_half_wavelength() {
        let v = steering_vector(PI / 2.0, 2, 0.5);
        assert!((v[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((v[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn steering_matches_reference_values() {
        // exp(j*pi*k*sin(0.3)) evaluated independently
        let reference = [
            (1.0000000000, 0.0000000000),
            (0.5991125175, 0.8006648433),
            (-0.2821283827, 0.9593766599),
            (-0.9371658088, 0.3488842886),
            (-0.8408071513, -0.5413347710),
            (-0.0703103695, -0.9975251636),
            (0.7565595063, -0.6539248530),
            (0.9768389105, 0.2139760337),
            (0.4139133314, 0.9103162935),
            (-0.4808775945, 0.8767877389),
            (-0.9901129039, 0.1402727257),
            (-0.7055004744, -0.7087094473),
            (0.1447645732, -0.9894661279),
            (0.8789610102, -0.4768936385),
            (0.9084285140, 0.4180402312),
            (0.2095407778, 0.9777999092),
        ];
        let v = steering_vector(0.3, 16, 0.5);
        for (z, (re, im)) in v.iter().zip(reference) {
            assert!((z.re - re).abs() < 1e-9 && (z.im - im).abs() < 1e-9, "{z} vs {re},{im}");
        }
    }

    #[test]
    fn derivative_edge_cases() {
        let d = steering_derivative(1.1, 1, 0.5);
        assert_eq!(d[0], Complex64::new(0.0, 0.0));
        for z in steering_derivative(PI / 2.0, 8, 0.5) {
            assert!(z.norm() < 1e-14);
        }
    }

    fn fd_relative_error(theta: f64, n: usize, spacing: f64) -> f64 {
        let h = 1e-6;
        let a = steering_vector(theta + h, n, spacing);
        let b = steering_vector(theta - h, n, spacing);
        let fd: CVec = a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect();
        let an = steering_derivative(theta, n, spacing);
        let err: f64 = fd.iter().zip(&an).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        err / norm_sqr(&an).sqrt().max(1e-300)
    }

    #[test]
    fn derivative_matches_finite_difference() {
        assert!(fd_relative_error(0.3, 16, 0.5) <= 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn derivative_fd_random(theta in -1.4f64..1.4, n in 2usize..33) {
            prop_assert!(fd_relative_error(theta, n, 0.5) <= 1e-6);
        }

        #[test]
        fn mr_beamformer_is_optimal(theta in -1.5f64..1.5, other in -1.5f64..1.5) {
            let h = steering_vector(theta, 8, 0.5);
            let w_mr: CVec = h.iter().map(|z| z.conj() / 8f64.sqrt()).collect();
            let w_other: CVec = steering_vector(other, 8, 0.5).iter().map(|z| z.conj() / 8f64.sqrt()).collect();
            let best = dot(&h, &w_mr).norm_sqr();
            prop_assert!((best - norm_sqr(&h)).abs() < 1e-9);
            prop_assert!(dot(&h, &w_other).norm_sqr() <= best + 1e-9);
        }
    }

    #[test]
    fn pathloss_values() {
        let g = pathloss_amplitude(1.0, 0.03, 2.5).unwrap().powi(2);
        assert!((g - 5.6993e-6).abs() / 5.6993e-6 < 1e-4);
        let g0 = pathloss_amplitude(123.0, 0.03, 0.0).unwrap().powi(2);
        assert!((g0 - (0.03 / (4.0 * PI)).powi(2)).abs() < 1e-18);
        let ratio = pathloss_amplitude(40.0, 0.03, 2.5).unwrap().powi(2)
            / pathloss_amplitude(10.0, 0.03, 2.5).unwrap().powi(2);
        assert!((ratio - 1.0 / 32.0).abs() < 1e-14);
        assert!(pathloss_amplitude(0.0, 0.03, 2.5).is_err());
        assert!(pathloss_amplitude(-1.0, 0.03, 2.5).is_err());
    }

    #[test]
    fn channel_set_properties() {
        let s = small();
        let cs = build_channels(&s, 1).unwrap();
        let dc = s.derived_constants();
        let pl = pathloss_amplitude(dc.distances_m.dl_user, dc.wavelength_m, 2.5)
            .unwrap()
            .powi(2);
        for f in 0..s.num_sc {
            assert!((norm_sqr(&cs.w_ul[f]) - 1.0).abs() < 1e-12);
            assert!((norm_sqr(&cs.w_dl[f]) - 1.0).abs() < 1e-12);
            let nh = norm_sqr(&cs.h_dl[f]);
            assert!((cs.dl_gain(f) - nh).abs() / nh < 1e-12);
            assert!((nh - 16.0 * pl).abs() / nh < 1e-12);
        }
        assert_eq!(build_channels(&s, 1).unwrap(), cs);
    }

    #[test]
    fn random_phase_is_seeded() {
        let mut s = small();
        s.channel.random_phase = true;
        let a = build_channels(&s, 9).unwrap();
        let b = build_channels(&s, 9).unwrap();
        let c = build_channels(&s, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // phases do not change gains
        assert!((a.dl_gain(0) - c.dl_gain(0)).abs() / a.dl_gain(0) < 1e-12);
    }

    #[test]
    fn snr_linearity() {
        let s = small();
        let cs = build_channels(&s, 0).unwrap();
        let noise = s.derived_constants().noise_power_w_per_sc;
        assert!(ul_snr_per_sc(&cs, &[0.0; 4], noise).iter().all(|&x| x == 0.0));
        assert!(dl_snr_per_sc(&cs, &[0.0; 4], noise).iter().all(|&x| x == 0.0));
        let p = [1e-3, 2e-3, 0.0, 5e-4];
        let p2: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        let p10: Vec<f64> = p.iter().map(|x| 10.0 * x).collect();
        let a = ul_snr_per_sc(&cs, &p, noise);
        let b = ul_snr_per_sc(&cs, &p2, noise);
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs());
        }
        let a = dl_snr_per_sc(&cs, &p, noise);
        let b = dl_snr_per_sc(&cs, &p10, noise);
        for (f, (x, y)) in a.iter().zip(&b).enumerate() {
            assert!((10.0 * x - y).abs() <= 1e-12 * y.abs());
            let mr = p[f] * norm_sqr(&cs.h_dl[f]) / noise;
            assert!((x - mr).abs() <= 1e-12 * mr.abs().max(1e-300));
        }
    }

    #[test]
    fn coincident_device_is_an_error() {
        let mut s = small();
        s.positions.ei_device_m = s.positions.bs_m;
        assert!(build_channels(&s, 0).is_err());
    }
}
