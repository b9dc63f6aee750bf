//! Per-hop channels: Rician direct links plus line-of-sight cascades through
//! every IRS element.

use std::f64::consts::TAU;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ExportError, ModelError};
use crate::scenario::{Geometry, ScenarioConfig};

/// Wrap an angle into `[0, 2pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Amplitude of a path-loss-only link at distance `d` (reference distance 1 m).
pub fn pathloss_amplitude(rho: f64, d: f64, exponent: f64) -> f64 {
    (rho * d.powf(-exponent)).sqrt()
}

/// One fading draw. Element arrays are `hops x elements`, hop-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    hops: usize,
    elements: usize,
    pub direct_amplitude: Vec<f64>,
    pub direct_phase: Vec<f64>,
    pub incoming_amplitude: Vec<f64>,
    pub incoming_phase: Vec<f64>,
    pub outgoing_amplitude: Vec<f64>,
    pub outgoing_phase: Vec<f64>,
    cascade_amplitude: Vec<f64>,
    cascade_phase: Vec<f64>,
}

impl ChannelRealization {
    /// Assemble a realization from raw per-path values. All element slices
    /// are hop-major with `hops * elements` entries.
    pub fn from_parts(
        direct_amplitude: Vec<f64>,
        direct_phase: Vec<f64>,
        incoming_amplitude: Vec<f64>,
        incoming_phase: Vec<f64>,
        outgoing_amplitude: Vec<f64>,
        outgoing_phase: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let hops = direct_amplitude.len();
        if direct_phase.len() != hops {
            return Err(ModelError::Dimension {
                expected: hops,
                got: direct_phase.len(),
            });
        }
        let total = incoming_amplitude.len();
        if hops == 0 || total % hops != 0 {
            return Err(ModelError::Dimension {
                expected: hops,
                got: total,
            });
        }
        for v in [&incoming_phase, &outgoing_amplitude, &outgoing_phase] {
            if v.len() != total {
                return Err(ModelError::Dimension {
                    expected: total,
                    got: v.len(),
                });
            }
        }
        let cascade_amplitude = incoming_amplitude
            .iter()
            .zip(&outgoing_amplitude)
            .map(|(g, d)| g * d)
            .collect();
        let cascade_phase = incoming_phase
            .iter()
            .zip(&outgoing_phase)
            .map(|(p, q)| p + q)
            .collect();
        Ok(ChannelRealization {
            hops,
            elements: total / hops,
            direct_amplitude,
            direct_phase,
            incoming_amplitude,
            incoming_phase,
            outgoing_amplitude,
            outgoing_phase,
            cascade_amplitude,
            cascade_phase,
        })
    }

    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn num_elements(&self) -> usize {
        self.elements
    }

    /// `delta_m * gamma_m` for every element of `hop`.
    pub fn cascade_amplitudes(&self, hop: usize) -> &[f64] {
        &self.cascade_amplitude[hop * self.elements..(hop + 1) * self.elements]
    }

    /// `psi_m + phi_m` for every element of `hop`.
    pub fn cascade_phases(&self, hop: usize) -> &[f64] {
        &self.cascade_phase[hop * self.elements..(hop + 1) * self.elements]
    }

    /// Copy with every reflected path removed.
    pub fn without_reflections(&self) -> Self {
        ChannelRealization::from_parts(
            self.direct_amplitude.clone(),
            self.direct_phase.clone(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
        )
        .expect("direct-only realization is well formed")
    }

    /// CSV dump with columns `hop,element,gamma,phi,delta,psi,xi,omega`
    /// (1-based indices). Hops without elements get one row with empty
    /// element columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "hop", "element", "gamma", "phi", "delta", "psi", "xi", "omega",
        ])?;
        for i in 0..self.hops {
            let xi = self.direct_amplitude[i].to_string();
            let omega = self.direct_phase[i].to_string();
            if self.elements == 0 {
                w.write_record([&(i + 1).to_string(), "", "", "", "", "", &xi, &omega])?;
            }
            for m in 0..self.elements {
                let k = i * self.elements + m;
                w.write_record([
                    (i + 1).to_string(),
                    (m + 1).to_string(),
                    self.incoming_amplitude[k].to_string(),
                    self.incoming_phase[k].to_string(),
                    self.outgoing_amplitude[k].to_string(),
                    self.outgoing_phase[k].to_string(),
                    xi.clone(),
                    omega.clone(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Draw the per-hop channels of one Monte-Carlo run.
///
/// The surface links are deterministic line-of-sight paths with spherical
/// wavefront phases `2 pi d / lambda`; only the NLoS part of each direct
/// link consumes randomness (two standard normals per hop, in hop order), so
/// scenarios that differ only in their surfaces see identical direct links
/// for the same stream.
pub fn draw_realization<R: Rng + ?Sized>(
    geom: &Geometry,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> ChannelRealization {
    let hops = geom.num_nodes() - 1;
    let m = geom.num_elements();
    let beta = cfg.rician_factor;
    let los_weight = (beta / (1.0 + beta)).sqrt();
    let nlos_weight = (1.0 / (1.0 + beta)).sqrt();
    let k = TAU / cfg.wavelength;

    let mut direct_amplitude = Vec::with_capacity(hops);
    let mut direct_phase = Vec::with_capacity(hops);
    for &d in &geom.hop_distances {
        let chi = pathloss_amplitude(cfg.pathloss_ref, d, cfg.direct_exponent);
        let los = k * d;
        let g_re: f64 = rng.sample::<f64, _>(StandardNormal) * std::f64::consts::FRAC_1_SQRT_2;
        let g_im: f64 = rng.sample::<f64, _>(StandardNormal) * std::f64::consts::FRAC_1_SQRT_2;
        let re = chi * (los_weight * los.cos() + nlos_weight * g_re);
        let im = chi * (los_weight * los.sin() + nlos_weight * g_im);
        direct_amplitude.push(re.hypot(im));
        direct_phase.push(wrap_phase(im.atan2(re)));
    }

    let mut incoming_amplitude = Vec::with_capacity(hops * m);
    let mut incoming_phase = Vec::with_capacity(hops * m);
    let mut outgoing_amplitude = Vec::with_capacity(hops * m);
    let mut outgoing_phase = Vec::with_capacity(hops * m);
    for i in 0..hops {
        let tx = geom.node_element_row(i);
        let rx = geom.node_element_row(i + 1);
        for (&d_in, &d_out) in tx.iter().zip(rx) {
            incoming_amplitude.push(pathloss_amplitude(cfg.pathloss_ref, d_in, cfg.los_exponent));
            incoming_phase.push(wrap_phase(k * d_in));
            outgoing_amplitude.push(pathloss_amplitude(
                cfg.pathloss_ref,
                d_out,
                cfg.los_exponent,
            ));
            outgoing_phase.push(wrap_phase(k * d_out));
        }
    }

    ChannelRealization::from_parts(
        direct_amplitude,
        direct_phase,
        incoming_amplitude,
        incoming_phase,
        outgoing_amplitude,
        outgoing_phase,
    )
    .expect("geometry yields consistent dimensions")
}

/// In-phase/quadrature decomposition of every hop channel for one phase
/// vector. `in_phase` collects the sine terms and `quadrature` the cosine
/// terms.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub in_phase: Vec<f64>,
    pub quadrature: Vec<f64>,
    pub gain: Vec<f64>,
}

impl EffectiveChannel {
    pub fn hops(&self) -> usize {
        self.gain.len()
    }
}

pub fn compose_channel(
    real: &ChannelRealization,
    theta: &[f64],
) -> Result<EffectiveChannel, ModelError> {
    if theta.len() != real.num_elements() {
        return Err(ModelError::Dimension {
            expected: real.num_elements(),
            got: theta.len(),
        });
    }
    let hops = real.hops();
    let mut in_phase = Vec::with_capacity(hops);
    let mut quadrature = Vec::with_capacity(hops);
    let mut gain = Vec::with_capacity(hops);
    for i in 0..hops {
        let (xi, omega) = (real.direct_amplitude[i], real.direct_phase[i]);
        let mut s = xi * omega.sin();
        let mut c = xi * omega.cos();
        for ((&a, &p), &t) in real
            .cascade_amplitudes(i)
            .iter()
            .zip(real.cascade_phases(i))
            .zip(theta)
        {
            let (sin, cos) = (t + p).sin_cos();
            s += a * sin;
            c += a * cos;
        }
        in_phase.push(s);
        quadrature.push(c);
        gain.push(s * s + c * c);
    }
    Ok(EffectiveChannel {
        in_phase,
        quadrature,
        gain,
    })
}
