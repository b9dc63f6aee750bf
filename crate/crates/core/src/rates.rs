//! Offloading and local-computing rates and their partial derivatives.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{compose_channel, ChannelRealization, EffectiveChannel};
use crate::error::ModelError;
use crate::scenario::ScenarioConfig;

/// Operational box for the power and bandwidth fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guards {
    pub mu_min: f64,
    pub mu_max: f64,
    pub eta_min: f64,
}

impl Guards {
    pub fn for_hops(hops: usize) -> Self {
        Guards {
            mu_min: 1e-6,
            mu_max: 1.0 - 1e-6,
            eta_min: 1e-6 / hops as f64,
        }
    }
}

/// The optimization variable: phase shifts, then power split, then
/// bandwidth split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
    pub eta: Vec<f64>,
}

impl DecisionVector {
    /// Zero phases, even power split, equal bandwidth shares.
    pub fn initial(elements: usize, hops: usize) -> Self {
        DecisionVector {
            theta: vec![0.0; elements],
            mu: vec![0.5; hops],
            eta: vec![1.0 / hops as f64; hops],
        }
    }

    pub fn hops(&self) -> usize {
        self.mu.len()
    }

    pub fn len(&self) -> usize {
        self.theta.len() + self.mu.len() + self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stacked `[theta, mu, eta]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.mu);
        v.extend_from_slice(&self.eta);
        v
    }

    pub fn from_flat(flat: &[f64], elements: usize, hops: usize) -> Result<Self, ModelError> {
        if flat.len() != elements + 2 * hops {
            return Err(ModelError::Dimension {
                expected: elements + 2 * hops,
                got: flat.len(),
            });
        }
        Ok(DecisionVector {
            theta: flat[..elements].to_vec(),
            mu: flat[elements..elements + hops].to_vec(),
            eta: flat[elements + hops..].to_vec(),
        })
    }

    /// Check the box, simplex and guard invariants.
    pub fn check(&self, guards: &Guards) -> Result<(), ModelError> {
        if self.eta.len() != self.mu.len() {
            return Err(ModelError::Dimension {
                expected: self.mu.len(),
                got: self.eta.len(),
            });
        }
        if let Some(t) = self
            .theta
            .iter()
            .find(|t| !(0.0..=std::f64::consts::TAU).contains(*t))
        {
            return Err(ModelError::Domain(format!("phase {t} outside [0, 2pi]")));
        }
        if let Some(m) = self
            .mu
            .iter()
            .find(|m| !(guards.mu_min..=guards.mu_max).contains(*m))
        {
            return Err(ModelError::Domain(format!(
                "power fraction {m} outside guard box"
            )));
        }
        if let Some(e) = self
            .eta
            .iter()
            .find(|e| !(guards.eta_min..=1.0).contains(*e))
        {
            return Err(ModelError::Domain(format!(
                "bandwidth fraction {e} outside guard box"
            )));
        }
        let sum: f64 = self.eta.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::Domain(format!(
                "bandwidth fractions sum to {sum}"
            )));
        }
        Ok(())
    }
}

/// `eta B log2(1 + mu P |H|^2 / (eta B N0))`.
pub fn offload_rate(
    eta: f64,
    mu: f64,
    power: f64,
    gain: f64,
    bandwidth: f64,
    noise_psd: f64,
) -> Result<f64, ModelError> {
    if !(eta > 0.0) {
        return Err(ModelError::Domain(format!(
            "bandwidth fraction {eta} must be positive"
        )));
    }
    let snr = mu * power * gain / (eta * bandwidth * noise_psd);
    Ok(eta * bandwidth * snr.ln_1p() / LN_2)
}

/// `((1 - mu) P / kappa)^(1/3) / epsilon`.
pub fn local_rate(mu: f64, power: f64, kappa: f64, cycles_per_bit: f64) -> f64 {
    ((1.0 - mu).max(0.0) * power / kappa).cbrt() / cycles_per_bit
}

/// Rates of every hop plus their partial derivatives. `d_offload_dtheta` is
/// `hops x elements`, hop-major. Partials with respect to other hops'
/// variables are identically zero and not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSet {
    pub offload: Vec<f64>,
    pub local: Vec<f64>,
    pub d_offload_dtheta: Vec<f64>,
    pub d_offload_dmu: Vec<f64>,
    pub d_offload_deta: Vec<f64>,
    pub d_local_dmu: Vec<f64>,
    pub elements: usize,
}

impl RateSet {
    /// Rates without any derivative information.
    pub fn from_rates(offload: Vec<f64>, local: Vec<f64>) -> Self {
        let hops = offload.len();
        RateSet {
            offload,
            local,
            d_offload_dtheta: Vec::new(),
            d_offload_dmu: vec![0.0; hops],
            d_offload_deta: vec![0.0; hops],
            d_local_dmu: vec![0.0; hops],
            elements: 0,
        }
    }

    pub fn hops(&self) -> usize {
        self.offload.len()
    }

    pub fn d_offload_dtheta_row(&self, hop: usize) -> &[f64] {
        if self.d_offload_dtheta.is_empty() {
            return &[];
        }
        &self.d_offload_dtheta[hop * self.elements..(hop + 1) * self.elements]
    }

    /// Same set with the local-computing edges removed.
    pub fn without_local(mut self) -> Self {
        self.local.iter_mut().for_each(|r| *r = 0.0);
        self.d_local_dmu.iter_mut().for_each(|r| *r = 0.0);
        self
    }
}

fn check_guards(x: &DecisionVector, guards: &Guards, hops: usize) -> Result<(), ModelError> {
    if x.mu.len() != hops || x.eta.len() != hops {
        return Err(ModelError::Dimension {
            expected: hops,
            got: x.mu.len().min(x.eta.len()),
        });
    }
    if let Some(m) = x.mu.iter().find(|&&m| m > guards.mu_max) {
        return Err(ModelError::Domain(format!(
            "power fraction {m} above guard {}",
            guards.mu_max
        )));
    }
    Ok(())
}

/// Rates only, for acceptance tests on the exact max-flow.
pub fn evaluate_rates(
    real: &ChannelRealization,
    x: &DecisionVector,
    cfg: &ScenarioConfig,
) -> Result<RateSet, ModelError> {
    let hops = real.hops();
    let guards = Guards::for_hops(hops);
    check_guards(x, &guards, hops)?;
    let eff = compose_channel(real, &x.theta)?;
    let mut offload = Vec::with_capacity(hops);
    let mut local = Vec::with_capacity(hops);
    for i in 0..hops {
        let p = cfg.power(i);
        offload.push(offload_rate(
            x.eta[i],
            x.mu[i],
            p,
            eff.gain[i],
            cfg.total_bandwidth,
            cfg.noise_psd,
        )?);
        local.push(local_rate(
            x.mu[i],
            p,
            cfg.chip_coefficient,
            cfg.cycles_per_bit,
        ));
    }
    Ok(RateSet::from_rates(offload, local))
}

/// d|H_i|^2 / d theta_m for every element of `hop`.
pub fn gain_phase_derivatives(
    real: &ChannelRealization,
    eff: &EffectiveChannel,
    theta: &[f64],
    hop: usize,
) -> Vec<f64> {
    let (s, c) = (eff.in_phase[hop], eff.quadrature[hop]);
    real.cascade_amplitudes(hop)
        .iter()
        .zip(real.cascade_phases(hop))
        .zip(theta)
        .map(|((&a, &p), &t)| {
            let (sin, cos) = (t + p).sin_cos();
            2.0 * s * a * cos - 2.0 * c * a * sin
        })
        .collect()
}

/// Rates and all partial derivatives at `x`.
pub fn rate_gradients(
    real: &ChannelRealization,
    x: &DecisionVector,
    cfg: &ScenarioConfig,
) -> Result<RateSet, ModelError> {
    let hops = real.hops();
    let m = real.num_elements();
    let guards = Guards::for_hops(hops);
    check_guards(x, &guards, hops)?;
    let eff = compose_channel(real, &x.theta)?;
    let b = cfg.total_bandwidth;
    let n0 = cfg.noise_psd;
    let kappa = cfg.chip_coefficient;
    let eps = cfg.cycles_per_bit;

    let mut set = RateSet {
        offload: Vec::with_capacity(hops),
        local: Vec::with_capacity(hops),
        d_offload_dtheta: Vec::with_capacity(hops * m),
        d_offload_dmu: Vec::with_capacity(hops),
        d_offload_deta: Vec::with_capacity(hops),
        d_local_dmu: Vec::with_capacity(hops),
        elements: m,
    };
    for i in 0..hops {
        let (eta, mu, p, g) = (x.eta[i], x.mu[i], cfg.power(i), eff.gain[i]);
        set.offload.push(offload_rate(eta, mu, p, g, b, n0)?);
        set.local.push(local_rate(mu, p, kappa, eps));

        let den = (eta * b * n0 + mu * p * g) * LN_2;
        let phase_scale = eta * b * mu * p / den;
        set.d_offload_dtheta.extend(
            gain_phase_derivatives(real, &eff, &x.theta, i)
                .into_iter()
                .map(|d| phase_scale * d),
        );
        set.d_offload_dmu.push(eta * b * p * g / den);
        let snr = mu * p * g / (eta * b * n0);
        set.d_offload_deta
            .push(b * snr.ln_1p() / LN_2 - b * mu * p * g / den);
        set.d_local_dmu
            .push(-p * ((1.0 - mu) * p / kappa).powf(-2.0 / 3.0) / (3.0 * kappa * eps));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_realization;
    use crate::scenario::{build_geometry, IrsPanel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const N0: f64 = 3.981e-21;

    fn setup(seed: u64) -> (ScenarioConfig, ChannelRealization) {
        let cfg = ScenarioConfig {
            num_nodes: 5,
            ..ScenarioConfig::default()
        }
        .with_panels(vec![IrsPanel {
            rows: 2,
            cols: 3,
            y_ref: 500.0,
        }]);
        let real = draw_realization(
            &build_geometry(&cfg),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        (cfg, real)
    }

    fn random_point(rng: &mut ChaCha8Rng, m: usize, hops: usize) -> DecisionVector {
        let theta = (0..m).map(|_| rng.random_range(0.5..5.5)).collect();
        let mu = (0..hops).map(|_| rng.random_range(0.1..0.9)).collect();
        let raw: Vec<f64> = (0..hops).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        DecisionVector {
            theta,
            mu,
            eta: raw.iter().map(|r| r / total).collect(),
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(a.abs()).max(1e-300)
    }

    #[test]
    fn offload_examples() {
        assert_eq!(offload_rate(0.3, 0.0, 1.0, 1e-10, 1e6, N0).unwrap(), 0.0);
        let r = offload_rate(1.0, 0.5, 1.0, 1e-12, 1e6, N0).unwrap();
        // 1e6 * log2(1 + 0.5e-12 / 3.981e-15)
        let expected = 1e6 * (1.0 + 0.5e-12 / 3.981e-15f64).log2();
        assert!(rel(r, expected) < 1e-14);
        assert!(rel(r, 6.984e6) < 1e-3);
        assert!(offload_rate(1.0, 0.5, 1.0, 2e-12, 1e6, N0).unwrap() > r);
        assert!(matches!(
            offload_rate(0.0, 0.5, 1.0, 1e-12, 1e6, N0),
            Err(ModelError::Domain(_))
        ));
    }

    #[test]
    fn local_examples() {
        assert_eq!(local_rate(1.0, 1.0, 1e-28, 700.0), 0.0);
        let r = local_rate(0.0, 1.0, 1e-28, 700.0);
        assert!(rel(r, 2.154_434_690_031_884e9 / 700.0) < 1e-12);
        assert!(rel(r, 3.078e6) < 1e-3);
        let mut prev = f64::INFINITY;
        for k in 1..100 {
            let v = local_rate(k as f64 / 100.0, 1.0, 1e-28, 700.0);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn local_power_derivative_value() {
        let cfg = ScenarioConfig {
            num_nodes: 2,
            ..ScenarioConfig::default()
        };
        let real =
            ChannelRealization::from_parts(vec![1e-6], vec![0.0], vec![], vec![], vec![], vec![])
                .unwrap();
        let x = DecisionVector {
            theta: vec![],
            mu: vec![0.5],
            eta: vec![1.0],
        };
        let set = rate_gradients(&real, &x, &cfg).unwrap();
        // -R^l / (3 (1 - mu)) with R^l = (0.5e28)^(1/3) / 700
        let expected = -(0.5e28f64).cbrt() / 700.0 / 1.5;
        assert!(rel(set.d_local_dmu[0], expected) < 1e-12);
        assert!(rel(set.d_local_dmu[0], -1.628e6) < 1e-3);
        let h = 1e-6;
        let fd = (local_rate(0.5 + h, 1.0, 1e-28, 700.0) - local_rate(0.5 - h, 1.0, 1e-28, 700.0))
            / (2.0 * h);
        assert!(rel(set.d_local_dmu[0], fd) < 1e-6);
    }

    #[test]
    fn zero_channel_has_zero_phase_gradient() {
        let cfg = ScenarioConfig {
            num_nodes: 2,
            ..ScenarioConfig::default()
        };
        let real = ChannelRealization::from_parts(
            vec![0.0],
            vec![0.0],
            vec![0.0, 0.0],
            vec![0.1, 0.2],
            vec![0.0, 0.0],
            vec![0.3, 0.4],
        )
        .unwrap();
        let x = DecisionVector {
            theta: vec![1.0, 2.0],
            mu: vec![0.5],
            eta: vec![1.0],
        };
        let set = rate_gradients(&real, &x, &cfg).unwrap();
        assert!(set.d_offload_dtheta.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn mu_above_guard_rejected() {
        let (cfg, real) = setup(1);
        let mut x = DecisionVector::initial(real.num_elements(), 4);
        x.mu[2] = 1.0;
        assert!(matches!(
            rate_gradients(&real, &x, &cfg),
            Err(ModelError::Domain(_))
        ));
    }

    #[test]
    fn analytic_partials_match_finite_differences() {
        for seed in 0..100u64 {
            let (cfg, real) = setup(seed);
            let m = real.num_elements();
            let hops = real.hops();
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let x = random_point(&mut rng, m, hops);
            let set = rate_gradients(&real, &x, &cfg).unwrap();
            let offload = |x: &DecisionVector, i: usize| {
                let g = compose_channel(&real, &x.theta).unwrap().gain[i];
                offload_rate(
                    x.eta[i],
                    x.mu[i],
                    cfg.power(i),
                    g,
                    cfg.total_bandwidth,
                    cfg.noise_psd,
                )
                .unwrap()
            };
            for i in 0..hops {
                for e in 0..m {
                    let h = 1e-3;
                    let at = |k: f64| {
                        let mut y = x.clone();
                        y.theta[e] += k * h;
                        offload(&y, i)
                    };
                    // five-point stencil keeps rounding well below the tolerance
                    let fd = (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h);
                    let an = set.d_offload_dtheta_row(i)[e];
                    // guard against coordinates that are zero to rounding
                    let scale = set
                        .d_offload_dtheta_row(i)
                        .iter()
                        .fold(0.0f64, |a, b| a.max(b.abs()));
                    assert!(
                        (an - fd).abs() <= 1e-5 * fd.abs().max(1e-3 * scale),
                        "theta seed {seed} e {e}: {an} vs {fd}, scale {scale}"
                    );
                }
                let h = 1e-7;
                let (mut up, mut dn) = (x.clone(), x.clone());
                up.mu[i] += h;
                dn.mu[i] -= h;
                let fd = (offload(&up, i) - offload(&dn, i)) / (2.0 * h);
                assert!(rel(set.d_offload_dmu[i], fd) < 1e-5);
                let fd_local = (local_rate(
                    up.mu[i],
                    cfg.power(i),
                    cfg.chip_coefficient,
                    cfg.cycles_per_bit,
                ) - local_rate(
                    dn.mu[i],
                    cfg.power(i),
                    cfg.chip_coefficient,
                    cfg.cycles_per_bit,
                )) / (2.0 * h);
                assert!(rel(set.d_local_dmu[i], fd_local) < 1e-5);

                // simplex constraint deliberately ignored here
                let (mut up, mut dn) = (x.clone(), x.clone());
                up.eta[i] += h;
                dn.eta[i] -= h;
                let fd = (offload(&up, i) - offload(&dn, i)) / (2.0 * h);
                assert!(rel(set.d_offload_deta[i], fd) < 1e-5);
            }
        }
    }

    #[test]
    fn offload_concave_in_power() {
        let (cfg, real) = setup(4);
        let eff = compose_channel(&real, &vec![0.0; real.num_elements()]).unwrap();
        let f = |mu: f64| {
            offload_rate(
                0.25,
                mu,
                1.0,
                eff.gain[0],
                cfg.total_bandwidth,
                cfg.noise_psd,
            )
            .unwrap()
        };
        let h = 1e-3;
        for k in 1..99 {
            let mu = k as f64 / 100.0;
            assert!(f(mu + h) - 2.0 * f(mu) + f(mu - h) <= 0.0);
            assert!(f(mu + h) > f(mu));
        }
    }

    #[test]
    fn flat_roundtrip_and_checks() {
        let x = DecisionVector::initial(3, 4);
        let back = DecisionVector::from_flat(&x.to_flat(), 3, 4).unwrap();
        assert_eq!(x, back);
        let guards = Guards::for_hops(4);
        x.check(&guards).unwrap();
        let mut bad = x.clone();
        bad.eta[0] += 0.01;
        assert!(bad.check(&guards).is_err());
        assert!(DecisionVector::from_flat(&[0.0; 5], 3, 4).is_err());
    }

    #[test]
    fn without_local_zeroes_local_edges() {
        let (cfg, real) = setup(2);
        let x = DecisionVector::initial(real.num_elements(), real.hops());
        let set = rate_gradients(&real, &x, &cfg).unwrap().without_local();
        assert!(set.local.iter().all(|&r| r == 0.0));
        assert!(set.d_local_dmu.iter().all(|&r| r == 0.0));
        assert!(set.offload.iter().all(|&r| r > 0.0));
    }
}
