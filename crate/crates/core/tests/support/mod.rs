#![allow(clippy::needless_range_loop)]

//! Helpers shared by the integration tests. Each test binary uses a subset.
#![allow(dead_code)]

use num_complex::Complex64;
use wirebeam_core::channel::{ArrayConfig, BeamOrientation, ChannelConfig};
use wirebeam_core::env::{EnvConfig, TrackingSetup};
use wirebeam_core::wire::{self, WindModel, WireParams};
use wirebeam_core::{Mat3, Vec3};

/// Reference wire with the transmitter receiver geometry derived from its sag.
pub fn reference_setup() -> TrackingSetup {
    let wire = WireParams::default();
    let sag = wire::sag_depth(&wire::solve_equilibrium(&wire));
    TrackingSetup {
        channel: ChannelConfig {
            rx_position: Vec3::new(0.0, 5.0, sag),
            ..ChannelConfig::default()
        },
        wire,
        wind: WindModel::default(),
        array: ArrayConfig::default(),
        env: EnvConfig::default(),
    }
}

/// Same geometry with no wind, no noise and no impulse.
pub fn still_setup() -> TrackingSetup {
    let mut s = reference_setup();
    s.wire.wind_diffusion = Mat3::zeros();
    s.wind = WindModel::calm();
    s
}

/// `|a . w|^2` by direct summation over every element, written from the
/// element-phase definition without the separable shortcut.
pub fn brute_force_gain(
    theta: f64,
    phi: f64,
    beam: BeamOrientation,
    ar: &ArrayConfig,
    wavelength: f64,
) -> f64 {
    let (ts, ps) = (beam.theta_s, beam.phi_s);
    let psi_p = (theta + ts).cos() - ts.cos();
    let psi_r = (theta + ts).sin() * (phi + ps).sin() - ts.sin() * ps.sin();
    let n = (ar.n_vertical * ar.n_horizontal) as f64;
    let amp = match ar.amplitude_norm {
        wirebeam_core::AmplitudeNorm::PaperLiteral => 1.0 / n,
        wirebeam_core::AmplitudeNorm::PowerNorm => 1.0 / n.sqrt(),
    };
    let mut sum = Complex64::new(0.0, 0.0);
    for p in 1..=ar.n_vertical {
        for r in 1..=ar.n_horizontal {
            let path =
                (p - 1) as f64 * ar.spacing_v * psi_p + (r - 1) as f64 * ar.spacing_h * psi_r;
            let phase = 2.0 * std::f64::consts::PI * path / wavelength;
            sum += Complex64::new(amp * phase.cos(), amp * phase.sin());
        }
    }
    sum.norm_sqr()
}

pub fn brute_force_af_db(
    theta: f64,
    phi: f64,
    beam: BeamOrientation,
    ar: &ArrayConfig,
    wavelength: f64,
) -> f64 {
    let g = brute_force_gain(theta, phi, beam, ar, wavelength);
    10.0 * (1.0 + ar.corr_coeff * (g - 1.0)).log10()
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}
