//! Joint phase-shift, power and bandwidth optimization (JPPBO).
//!
//! Each iteration linearizes the algebraic connectivity of the undirected
//! task graph around the current decision, takes the best step inside a box
//! of per-variable caps (a small LP), and keeps the step only if the exact
//! max-flow of the directed graph does not decrease. Rejected steps shrink
//! every cap by `shrink` down to its floor and retry.

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::channel::{wrap_phase, ChannelRealization};
use crate::error::{ConfigError, ModelError};
use crate::flowgraph::{build_adjacency, max_flow, FlowGraph};
use crate::rates::{evaluate_rates, rate_gradients, DecisionVector, Guards, RateSet};
use crate::scenario::ScenarioConfig;
use crate::spectral::{lambda_gradient, EdgeDerivative, SpectralState};

/// Step-size knobs. Floors left at `None` resolve to a hundredth of their
/// cap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerParams {
    pub theta_cap: f64,
    pub mu_cap: f64,
    pub eta_cap: f64,
    pub theta_floor: Option<f64>,
    pub mu_floor: Option<f64>,
    pub eta_floor: Option<f64>,
    pub shrink: f64,
    pub max_iters: usize,
    pub max_rejections: usize,
    /// Treat phases as periodic instead of clipping them to `[0, 2pi]`.
    pub wrap_phases: bool,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            theta_cap: 0.2,
            mu_cap: 0.005,
            eta_cap: 0.005,
            theta_floor: None,
            mu_floor: None,
            eta_floor: None,
            shrink: 0.5,
            max_iters: 200,
            max_rejections: 20,
            wrap_phases: true,
        }
    }
}

/// Caps for one block of variables each: phases, power, bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepCaps {
    pub theta: f64,
    pub mu: f64,
    pub eta: f64,
}

impl StepCaps {
    /// `max(shrink * cap, floor)` blockwise.
    pub fn shrunk(&self, shrink: f64, floors: &StepCaps) -> StepCaps {
        StepCaps {
            theta: (shrink * self.theta).max(floors.theta),
            mu: (shrink * self.mu).max(floors.mu),
            eta: (shrink * self.eta).max(floors.eta),
        }
    }
}

impl OptimizerParams {
    /// Initial caps and their floors.
    pub fn resolve(&self) -> (StepCaps, StepCaps) {
        let caps = StepCaps {
            theta: self.theta_cap,
            mu: self.mu_cap,
            eta: self.eta_cap,
        };
        let floors = StepCaps {
            theta: self.theta_floor.unwrap_or(caps.theta / 100.0),
            mu: self.mu_floor.unwrap_or(caps.mu / 100.0),
            eta: self.eta_floor.unwrap_or(caps.eta / 100.0),
        };
        (caps, floors)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(ConfigError::invalid("shrink", "must lie in (0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(ConfigError::invalid("max_iters", "must be at least 1"));
        }
        let pairs = [
            ("theta_cap", self.theta_cap, self.theta_floor),
            ("mu_cap", self.mu_cap, self.mu_floor),
            ("eta_cap", self.eta_cap, self.eta_floor),
        ];
        for (field, cap, floor) in pairs {
            if !(cap > 0.0) {
                return Err(ConfigError::invalid(field, "caps must be positive"));
            }
            if let Some(f) = floor {
                if !(f > 0.0 && f <= cap) {
                    return Err(ConfigError::invalid(field, "floor must lie in (0, cap]"));
                }
            }
        }
        Ok(())
    }

    /// Returns `Ok(false)` for keys that do not belong to the optimizer.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        let float = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{key}`: {e}"));
        let int = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|e| format!("`{key}`: {e}"))
        };
        match key {
            "theta_cap" => self.theta_cap = float(value)?,
            "mu_cap" => self.mu_cap = float(value)?,
            "eta_cap" => self.eta_cap = float(value)?,
            "theta_floor" => self.theta_floor = Some(float(value)?),
            "mu_floor" => self.mu_floor = Some(float(value)?),
            "eta_floor" => self.eta_floor = Some(float(value)?),
            "shrink" => self.shrink = float(value)?,
            "max_iters" => self.max_iters = int(value)?,
            "max_rejections" => self.max_rejections = int(value)?,
            "wrap_phases" => {
                self.wrap_phases = value.trim().parse().map_err(|e| format!("`{key}`: {e}"))?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Which variable blocks move and whether relays compute locally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Freedom {
    pub theta: bool,
    pub mu: bool,
    pub eta: bool,
    pub local_computing: bool,
}

impl Freedom {
    pub const ALL: Freedom = Freedom {
        theta: true,
        mu: true,
        eta: true,
        local_computing: true,
    };
}

/// Reference schemes sharing the optimization machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Baseline {
    /// No surface; power and bandwidth optimized.
    NoIrs,
    /// No local computing; all power offloads through a single surface.
    RelayWithIrs,
    /// No surface and no local computing; bandwidth only.
    PlainRelay,
}

impl Baseline {
    pub fn from_index(kind: u8) -> Option<Baseline> {
        match kind {
            1 => Some(Baseline::NoIrs),
            2 => Some(Baseline::RelayWithIrs),
            3 => Some(Baseline::PlainRelay),
            _ => None,
        }
    }

    pub fn freedom(self) -> Freedom {
        match self {
            Baseline::NoIrs => Freedom {
                theta: false,
                mu: true,
                eta: true,
                local_computing: true,
            },
            Baseline::RelayWithIrs => Freedom {
                theta: true,
                mu: false,
                eta: true,
                local_computing: false,
            },
            Baseline::PlainRelay => Freedom {
                theta: false,
                mu: false,
                eta: true,
                local_computing: false,
            },
        }
    }

    pub fn uses_irs(self) -> bool {
        matches!(self, Baseline::RelayWithIrs)
    }
}

/// One channel draw together with the scenario constants and the set of
/// free variables.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub real: &'a ChannelRealization,
    pub cfg: &'a ScenarioConfig,
    pub freedom: Freedom,
}

impl<'a> Problem<'a> {
    pub fn new(real: &'a ChannelRealization, cfg: &'a ScenarioConfig, freedom: Freedom) -> Self {
        Problem { real, cfg, freedom }
    }

    pub fn hops(&self) -> usize {
        self.real.hops()
    }

    pub fn guards(&self) -> Guards {
        Guards::for_hops(self.hops())
    }

    /// Zero phases, equal bandwidth, and an even power split (or all power
    /// offloading when local computing is disabled).
    pub fn initial_decision(&self) -> DecisionVector {
        let mut x = DecisionVector::initial(self.real.num_elements(), self.hops());
        if !self.freedom.local_computing {
            let mu_max = self.guards().mu_max;
            x.mu.iter_mut().for_each(|m| *m = mu_max);
        }
        x
    }

    fn adjust(&self, rates: RateSet) -> RateSet {
        if self.freedom.local_computing {
            rates
        } else {
            rates.without_local()
        }
    }

    /// Directed task graph at `x`.
    pub fn graph(&self, x: &DecisionVector) -> Result<FlowGraph, ModelError> {
        let rates = self.adjust(evaluate_rates(self.real, x, self.cfg)?);
        build_adjacency(&rates)
    }

    /// Exact source-to-destination max-flow at `x`.
    pub fn throughput(&self, x: &DecisionVector) -> Result<f64, ModelError> {
        let g = self.graph(x)?;
        Ok(max_flow(&g, 0, g.len() - 1))
    }

    /// Spectral state of the weighted undirected graph at `x`.
    pub fn spectral(&self, x: &DecisionVector) -> Result<SpectralState, ModelError> {
        let g = self
            .graph(x)?
            .with_terminal_weight(self.cfg.terminal_weight);
        SpectralState::analyze(&g)
    }

    /// `d lambda / d x` over the stacked `[theta, mu, eta]` layout. Frozen
    /// blocks get zero entries.
    pub fn lambda_gradient(&self, x: &DecisionVector) -> Result<(f64, Vec<f64>), ModelError> {
        let rates = self.adjust(rate_gradients(self.real, x, self.cfg)?);
        let g = build_adjacency(&rates)?.with_terminal_weight(self.cfg.terminal_weight);
        let state = SpectralState::analyze(&g)?;
        let edges = edge_derivatives(&rates, self.freedom);
        let grad = lambda_gradient(&state, &edges, x.len())?;
        Ok((state.lambda, grad))
    }
}

/// Partials of each undirected edge weight, following the task-graph case
/// structure: offload edges depend on the shared phases and on their hop's
/// power and bandwidth, local edges on their hop's power, and the last edge
/// carries both.
pub fn edge_derivatives(rates: &RateSet, freedom: Freedom) -> Vec<EdgeDerivative> {
    let hops = rates.hops();
    let m = rates.elements;
    let n = hops + 1;
    let mu_idx = |i: usize| m + i;
    let eta_idx = |i: usize| m + hops + i;
    let offload_partials = |i: usize| {
        let mut p = Vec::with_capacity(m + 2);
        if freedom.theta {
            p.extend(rates.d_offload_dtheta_row(i).iter().copied().enumerate());
        }
        if freedom.mu {
            p.push((mu_idx(i), rates.d_offload_dmu[i]));
        }
        if freedom.eta {
            p.push((eta_idx(i), rates.d_offload_deta[i]));
        }
        p
    };
    let mut edges = Vec::with_capacity(2 * hops);
    for i in 0..hops {
        if i + 1 == hops {
            let mut partials = offload_partials(i);
            if freedom.mu && freedom.local_computing {
                if let Some(entry) = partials.iter_mut().find(|(k, _)| *k == mu_idx(i)) {
                    entry.1 += rates.d_local_dmu[i];
                }
            }
            edges.push(EdgeDerivative {
                i,
                j: n - 1,
                partials,
            });
        } else {
            edges.push(EdgeDerivative {
                i,
                j: i + 1,
                partials: offload_partials(i),
            });
            if freedom.mu && freedom.local_computing {
                edges.push(EdgeDerivative {
                    i,
                    j: n - 1,
                    partials: vec![(mu_idx(i), rates.d_local_dmu[i])],
                });
            }
        }
    }
    edges
}

fn clipped_sign_step(g: f64, cap: f64, x: f64, lo: f64, hi: f64) -> f64 {
    if g > 0.0 {
        cap.min(hi - x).max(0.0)
    } else if g < 0.0 {
        -(cap.min(x - lo).max(0.0))
    } else {
        0.0
    }
}

/// Maximize `c . d` subject to `-down_i <= d_i <= up_i` and `sum d = 0`,
/// with all rooms nonnegative. Mass moves from the lowest-gradient
/// coordinates to the highest until the gains stop or the rooms run out.
pub fn exchange_step(c: &[f64], up: &[f64], down: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
    let mut up_left: Vec<f64> = up.to_vec();
    let mut down_left: Vec<f64> = down.to_vec();
    let mut delta = vec![0.0; n];
    if n < 2 {
        return delta;
    }
    let (mut hi, mut lo) = (0usize, n - 1);
    while hi < lo {
        let (a, b) = (order[hi], order[lo]);
        if c[a] <= c[b] {
            break;
        }
        let amount = up_left[a].min(down_left[b]);
        delta[a] += amount;
        delta[b] -= amount;
        up_left[a] -= amount;
        down_left[b] -= amount;
        if up_left[a] <= 0.0 {
            hi += 1;
        }
        if down_left[b] <= 0.0 {
            lo -= 1;
        }
    }
    for i in 0..n {
        delta[i] = delta[i].clamp(-down[i], up[i]);
    }
    delta
}

/// Best first-order step under the caps: sign steps for phases and power,
/// an exchange between bandwidth shares, each kept inside its box.
pub fn solve_lp_step(
    grad: &[f64],
    x: &DecisionVector,
    caps: &StepCaps,
    guards: &Guards,
    freedom: Freedom,
    wrap_phases: bool,
) -> Result<DecisionVector, ModelError> {
    if grad.len() != x.len() {
        return Err(ModelError::Dimension {
            expected: x.len(),
            got: grad.len(),
        });
    }
    let m = x.theta.len();
    let hops = x.hops();
    let (g_theta, rest) = grad.split_at(m);
    let (g_mu, g_eta) = rest.split_at(hops);

    let theta = if freedom.theta {
        g_theta
            .iter()
            .zip(&x.theta)
            .map(|(&g, &t)| {
                if wrap_phases {
                    clipped_sign_step(g, caps.theta, t, f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    clipped_sign_step(g, caps.theta, t, 0.0, TAU)
                }
            })
            .collect()
    } else {
        vec![0.0; m]
    };
    let mu = if freedom.mu {
        g_mu.iter()
            .zip(&x.mu)
            .map(|(&g, &u)| clipped_sign_step(g, caps.mu, u, guards.mu_min, guards.mu_max))
            .collect()
    } else {
        vec![0.0; hops]
    };
    let eta = if freedom.eta {
        let up: Vec<f64> = x
            .eta
            .iter()
            .map(|&e| caps.eta.min(1.0 - e).max(0.0))
            .collect();
        let down: Vec<f64> = x
            .eta
            .iter()
            .map(|&e| caps.eta.min(e - guards.eta_min).max(0.0))
            .collect();
        exchange_step(g_eta, &up, &down)
    } else {
        vec![0.0; hops]
    };
    Ok(DecisionVector { theta, mu, eta })
}

fn apply_step(
    x: &DecisionVector,
    dx: &DecisionVector,
    guards: &Guards,
    wrap_phases: bool,
) -> DecisionVector {
    DecisionVector {
        theta: x
            .theta
            .iter()
            .zip(&dx.theta)
            .map(|(t, d)| {
                if wrap_phases {
                    wrap_phase(t + d)
                } else {
                    (t + d).clamp(0.0, TAU)
                }
            })
            .collect(),
        mu: x
            .mu
            .iter()
            .zip(&dx.mu)
            .map(|(u, d)| (u + d).clamp(guards.mu_min, guards.mu_max))
            .collect(),
        eta: x
            .eta
            .iter()
            .zip(&dx.eta)
            .map(|(e, d)| (e + d).max(guards.eta_min))
            .collect(),
    }
}

/// Iterate state between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub x: DecisionVector,
    pub throughput: f64,
    pub lambda: f64,
    pub caps: StepCaps,
    pub floors: StepCaps,
}

impl OptimizerState {
    pub fn start(problem: &Problem) -> Result<Self, ModelError> {
        let x = problem.initial_decision();
        let (caps, floors) = problem.cfg.optimizer.resolve();
        let throughput = problem.throughput(&x)?;
        let lambda = problem.spectral(&x)?.lambda;
        Ok(OptimizerState {
            x,
            throughput,
            lambda,
            caps,
            floors,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub rejections: usize,
}

/// One outer iteration: gradient, then LP step and exact max-flow check,
/// shrinking the caps and retrying after each rejection until the budget is
/// spent. A degenerate eigenvalue counts as a rejection.
pub fn jppbo_step(
    state: &mut OptimizerState,
    problem: &Problem,
) -> Result<StepOutcome, ModelError> {
    let params = &problem.cfg.optimizer;
    let guards = problem.guards();
    let grad = match problem.lambda_gradient(&state.x) {
        Ok((_, g)) => g,
        Err(ModelError::Degenerate { .. }) => {
            state.caps = state.caps.shrunk(params.shrink, &state.floors);
            return Ok(StepOutcome {
                accepted: false,
                rejections: 1,
            });
        }
        Err(e) => return Err(e),
    };
    let mut rejections = 0;
    loop {
        let dx = solve_lp_step(
            &grad,
            &state.x,
            &state.caps,
            &guards,
            problem.freedom,
            params.wrap_phases,
        )?;
        let candidate = apply_step(&state.x, &dx, &guards, params.wrap_phases);
        let pre = problem.throughput(&candidate)?;
        if pre >= state.throughput {
            state.lambda = problem.spectral(&candidate)?.lambda;
            state.x = candidate;
            state.throughput = pre;
            return Ok(StepOutcome {
                accepted: true,
                rejections,
            });
        }
        rejections += 1;
        let before = state.caps;
        state.caps = state.caps.shrunk(params.shrink, &state.floors);
        if state.caps == before {
            // every further retry would evaluate the same candidate
            return Ok(StepOutcome {
                accepted: false,
                rejections: rejections.max(params.max_rejections),
            });
        }
        if rejections >= params.max_rejections {
            return Ok(StepOutcome {
                accepted: false,
                rejections,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub throughput: f64,
    pub lambda: f64,
    pub accepted: bool,
    pub rejections: usize,
    pub caps: StepCaps,
}

#[derive(Debug, Clone)]
pub struct RunTrajectory {
    /// Entry 0 is the initial point; entry `t` the state after iteration `t`.
    pub records: Vec<IterationRecord>,
    pub final_decision: DecisionVector,
    pub wall_time: Duration,
}

impl PartialEq for RunTrajectory {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.final_decision == other.final_decision
    }
}

impl RunTrajectory {
    pub fn initial_throughput(&self) -> f64 {
        self.records[0].throughput
    }

    pub fn final_throughput(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.throughput)
    }

    pub fn throughputs(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.throughput)
    }

    pub fn is_monotone(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].throughput >= w[0].throughput)
    }

    /// First iteration whose throughput reaches 95% of the final value.
    pub fn iterations_to_95pct(&self) -> usize {
        let target = 0.95 * self.final_throughput();
        self.records
            .iter()
            .find(|r| r.throughput >= target)
            .map_or(0, |r| r.iteration)
    }
}

/// Run `max_iters` outer iterations from the initial decision.
pub fn optimize(problem: &Problem) -> Result<RunTrajectory, ModelError> {
    let start = Instant::now();
    let mut state = OptimizerState::start(problem)?;
    let mut records = Vec::with_capacity(problem.cfg.optimizer.max_iters + 1);
    records.push(IterationRecord {
        iteration: 0,
        throughput: state.throughput,
        lambda: state.lambda,
        accepted: true,
        rejections: 0,
        caps: state.caps,
    });
    let max_iters = problem.cfg.optimizer.max_iters;
    for t in 1..=max_iters {
        let caps_before = state.caps;
        let outcome = jppbo_step(&mut state, problem)?;
        let record = IterationRecord {
            iteration: t,
            throughput: state.throughput,
            lambda: state.lambda,
            accepted: outcome.accepted,
            rejections: outcome.rejections,
            caps: state.caps,
        };
        let frozen = !outcome.accepted && state.caps == caps_before;
        records.push(record.clone());
        if frozen {
            // same point, same caps: the remaining iterations repeat this one
            records.extend((t + 1..=max_iters).map(|iteration| IterationRecord {
                iteration,
                ..record.clone()
            }));
            break;
        }
    }
    Ok(RunTrajectory {
        records,
        final_decision: state.x,
        wall_time: start.elapsed(),
    })
}

/// The proposed scheme on one channel draw.
pub fn run_jppbo(
    real: &ChannelRealization,
    cfg: &ScenarioConfig,
) -> Result<RunTrajectory, ModelError> {
    optimize(&Problem::new(real, cfg, Freedom::ALL))
}

/// A baseline on one channel draw. Schemes without a surface drop the
/// reflected paths from `real`.
pub fn run_baseline(
    kind: Baseline,
    real: &ChannelRealization,
    cfg: &ScenarioConfig,
) -> Result<RunTrajectory, ModelError> {
    if kind.uses_irs() {
        optimize(&Problem::new(real, cfg, kind.freedom()))
    } else {
        let bare = real.without_reflections();
        optimize(&Problem::new(&bare, cfg, kind.freedom()))
    }
}
