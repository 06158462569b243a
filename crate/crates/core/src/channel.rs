//! Line-of-sight link budget with a steerable uniform planar array at the
//! transmitter and a constant-gain receiver.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub tx_power_dbm: f64,
    pub wavelength: f64,
    /// Receiver gain, constant over angle.
    pub rx_gain_dbi: f64,
    pub pathloss_exponent: f64,
    /// Path gain at 1 m, in dB (negative for a loss).
    pub pathloss_ref_db: f64,
    pub rx_position: Vec3,
}

impl ChannelConfig {
    /// Free-space path gain at 1 m, `20 log10(lambda / 4 pi)`.
    pub fn free_space_ref_db(wavelength: f64) -> f64 {
        20.0 * (wavelength / (4.0 * PI)).log10()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) {
            return Err(Error::Validation("wavelength must be positive".into()));
        }
        if !(self.pathloss_exponent >= 1.0) {
            return Err(Error::Validation("path-loss exponent must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let wavelength = 0.005;
        ChannelConfig {
            tx_power_dbm: 23.0,
            wavelength,
            rx_gain_dbi: 8.0,
            pathloss_exponent: 2.0,
            pathloss_ref_db: Self::free_space_ref_db(wavelength),
            rx_position: Vec3::new(0.0, 5.0, 0.0),
        }
    }
}

/// Element amplitude weighting of the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeNorm {
    /// Every element weighted `1 / n`; the array factor peaks at 0 dB.
    PaperLiteral,
    /// Every element weighted `1 / sqrt(n)`; the array factor peaks at `10 log10 n`.
    PowerNorm,
}

impl AmplitudeNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            AmplitudeNorm::PaperLiteral => "paper_literal",
            AmplitudeNorm::PowerNorm => "power_norm",
        }
    }
}

impl std::str::FromStr for AmplitudeNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_literal" => Ok(AmplitudeNorm::PaperLiteral),
            "power_norm" => Ok(AmplitudeNorm::PowerNorm),
            other => Err(Error::Validation(format!(
                "unknown amplitude normalization {other:?} (expected paper_literal or power_norm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayConfig {
    pub n_vertical: usize,
    pub n_horizontal: usize,
    pub corr_coeff: f64,
    pub spacing_v: f64,
    pub spacing_h: f64,
    pub amplitude_norm: AmplitudeNorm,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            n_vertical: 32,
            n_horizontal: 8,
            corr_coeff: 1.0,
            spacing_v: 0.0025,
            spacing_h: 0.0025,
            amplitude_norm: AmplitudeNorm::PaperLiteral,
        }
    }
}

impl ArrayConfig {
    pub fn n_elements(&self) -> usize {
        self.n_vertical * self.n_horizontal
    }

    pub fn amplitude(&self) -> f64 {
        let n = self.n_elements() as f64;
        match self.amplitude_norm {
            AmplitudeNorm::PaperLiteral => 1.0 / n,
            AmplitudeNorm::PowerNorm => 1.0 / n.sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vertical == 0 || self.n_horizontal == 0 {
            return Err(Error::Validation(
                "array needs at least one element per axis".into(),
            ));
        }
        if !(self.spacing_v > 0.0 && self.spacing_h > 0.0) {
            return Err(Error::Validation(
                "element spacings must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.corr_coeff) {
            return Err(Error::Validation(
                "correlation coefficient must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Main-lobe steering direction: zenith `theta_s` in `[0, pi]`, azimuth `phi_s` in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamOrientation {
    pub theta_s: f64,
    pub phi_s: f64,
}

impl BeamOrientation {
    /// Builds an orientation and wraps it into the principal ranges.
    pub fn new(theta_s: f64, phi_s: f64) -> Self {
        let (theta_s, phi_s) = wrap_angles(theta_s, phi_s);
        BeamOrientation { theta_s, phi_s }
    }

    /// Unit pointing vector `[sin t cos p, sin t sin p, cos t]`.
    pub fn direction(&self) -> Vec3 {
        unit_direction(self.theta_s, self.phi_s)
    }

    /// Orientation that points from `from` toward `to`.
    pub fn toward(from: Vec3, to: Vec3) -> Result<Self> {
        let (zenith, azimuth, _) = look_angles(from, to)?;
        Ok(BeamOrientation::new(zenith, azimuth))
    }

    /// Rounds both angles to the nearest multiple of `step`.
    pub fn quantized(&self, step: f64) -> Self {
        BeamOrientation::new(
            (self.theta_s / step).round() * step,
            (self.phi_s / step).round() * step,
        )
    }
}

pub fn unit_direction(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    )
}

/// Great-circle angle between two directions, radians.
pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    // atan2 form keeps precision near 0 and pi.
    a.cross(&b).norm().atan2(a.dot(&b))
}

/// Reflects `theta` into `[0, pi]` (flipping azimuth when it crosses a pole)
/// and wraps `phi` into `(-pi, pi]`.
pub fn wrap_angles(theta: f64, phi: f64) -> (f64, f64) {
    let mut theta = theta.rem_euclid(2.0 * PI);
    let mut phi = phi;
    if theta > PI {
        theta = 2.0 * PI - theta;
        phi += PI;
    }
    (theta, wrap_pi(phi))
}

/// Wraps into `(-pi, pi]`.
pub fn wrap_pi(angle: f64) -> f64 {
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepartureGeometry {
    pub range: f64,
    /// Zenith of the receiver relative to the steering zenith.
    pub theta_aod: f64,
    /// Azimuth of the receiver relative to the steering azimuth, in `(-pi, pi]`.
    pub phi_aod: f64,
}

/// Absolute (zenith, azimuth, range) of `to` as seen from `from`.
pub fn look_angles(from: Vec3, to: Vec3) -> Result<(f64, f64, f64)> {
    let d = to - from;
    let r = d.norm();
    if !(r > 0.0) {
        return Err(Error::GeometryDegenerate);
    }
    let zenith = (d.z / r).clamp(-1.0, 1.0).acos();
    let azimuth = d.y.atan2(d.x);
    Ok((zenith, azimuth, r))
}

pub fn aod_geometry(
    tx_pos: Vec3,
    cfg: &ChannelConfig,
    beam: BeamOrientation,
) -> Result<DepartureGeometry> {
    let (zenith, azimuth, range) = look_angles(tx_pos, cfg.rx_position)?;
    Ok(DepartureGeometry {
        range,
        theta_aod: zenith - beam.theta_s,
        phi_aod: wrap_pi(azimuth - beam.phi_s),
    })
}

const ELEMENT_MAX_GAIN_DBI: f64 = 8.0;
const ELEMENT_HPBW_DEG: f64 = 65.0;
const ELEMENT_FLOOR_DB: f64 = 30.0;

/// Single-element parabolic pattern (8 dBi peak, 65 degree half-power width,
/// 30 dB floor), evaluated at angles relative to boresight.
pub fn element_gain(theta: f64, phi: f64) -> f64 {
    let hpbw = ELEMENT_HPBW_DEG.to_radians();
    let vertical = (12.0 * (theta / hpbw).powi(2)).min(ELEMENT_FLOOR_DB);
    let horizontal = (12.0 * (wrap_pi(phi) / hpbw).powi(2)).min(ELEMENT_FLOOR_DB);
    ELEMENT_MAX_GAIN_DBI - (vertical + horizontal).min(ELEMENT_FLOOR_DB)
}

/// Squared magnitude of the amplitude-weighted coherent sum `|a . w|^2`.
///
/// The phase of element `(p, r)` is separable in `p` and `r`, so the double
/// sum is evaluated as a product of two one-dimensional sums.
pub fn coherent_gain(
    theta: f64,
    phi: f64,
    beam: BeamOrientation,
    cfg: &ArrayConfig,
    wavelength: f64,
) -> f64 {
    let (ts, ps) = (beam.theta_s, beam.phi_s);
    let psi_v = (theta + ts).cos() - ts.cos();
    let psi_h = (theta + ts).sin() * (phi + ps).sin() - ts.sin() * ps.sin();
    let k = 2.0 * PI / wavelength;
    let column: Complex64 = (0..cfg.n_vertical)
        .map(|p| Complex64::cis(k * p as f64 * cfg.spacing_v * psi_v))
        .sum();
    let row: Complex64 = (0..cfg.n_horizontal)
        .map(|r| Complex64::cis(k * r as f64 * cfg.spacing_h * psi_h))
        .sum();
    (column * row * cfg.amplitude()).norm_sqr()
}

/// Array factor in dB, `10 log10(1 + rho (|a . w|^2 - 1))`.
pub fn array_factor(
    theta: f64,
    phi: f64,
    beam: BeamOrientation,
    cfg: &ArrayConfig,
    wavelength: f64,
) -> Result<f64> {
    let gain = coherent_gain(theta, phi, beam, cfg, wavelength);
    if cfg.amplitude_norm == AmplitudeNorm::PaperLiteral && gain > 1.0 + 1e-9 {
        return Err(Error::ArrayConsistency(gain));
    }
    let linear = 1.0 + cfg.corr_coeff * (gain - 1.0);
    Ok(10.0 * linear.max(f64::MIN_POSITIVE).log10())
}

/// Transmit antenna gain: element pattern plus array factor, dBi.
pub fn tx_gain(
    geom: &DepartureGeometry,
    beam: BeamOrientation,
    ar: &ArrayConfig,
    wavelength: f64,
) -> Result<f64> {
    Ok(element_gain(geom.theta_aod, geom.phi_aod)
        + array_factor(geom.theta_aod, geom.phi_aod, beam, ar, wavelength)?)
}

/// Received power in dBm.
pub fn received_power(
    tx_pos: Vec3,
    beam: BeamOrientation,
    ch: &ChannelConfig,
    ar: &ArrayConfig,
) -> Result<f64> {
    let geom = aod_geometry(tx_pos, ch, beam)?;
    let g_tx = tx_gain(&geom, beam, ar, ch.wavelength)?;
    Ok(ch.tx_power_dbm + g_tx + ch.rx_gain_dbi + ch.pathloss_ref_db
        - 10.0 * ch.pathloss_exponent * geom.range.log10())
}

/// Pattern sample for export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternSample {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub af_db: f64,
    pub element_db: f64,
    pub total_db: f64,
}

/// Samples the transmit pattern on a grid of relative angles (degrees).
pub fn beam_pattern(
    beam: BeamOrientation,
    ar: &ArrayConfig,
    wavelength: f64,
    theta_deg: impl IntoIterator<Item = f64>,
    phi_deg: &[f64],
) -> Result<Vec<PatternSample>> {
    let mut out = Vec::new();
    for t in theta_deg {
        for &p in phi_deg {
            let (tr, pr) = (t.to_radians(), p.to_radians());
            let af_db = array_factor(tr, pr, beam, ar, wavelength)?;
            let element_db = element_gain(tr, pr);
            out.push(PatternSample {
                theta_deg: t,
                phi_deg: p,
                af_db,
                element_db,
                total_db: af_db + element_db,
            });
        }
    }
    Ok(out)
}

pub fn write_pattern_csv<W: Write>(mut out: W, samples: &[PatternSample]) -> std::io::Result<()> {
    writeln!(out, "theta_deg,phi_deg,af_db,element_db,total_db")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.theta_deg, s.phi_deg, s.af_db, s.element_db, s.total_db
        )?;
    }
    Ok(())
}
