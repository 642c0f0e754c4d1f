//! Fixed-step closed-loop simulation: plants, observers, and adaptive states
//! advance together under zero-order-hold event-triggered controls, with the
//! trigger evaluated once per step at grid nodes.

use nalgebra::DVector;

use crate::approximator::RbfNetwork;
use crate::controller::{
    adaptive_law, backstepping_chain, should_trigger, ControllerParams, TriggerState,
};
use crate::error::{Error, Result};
use crate::observer::{observer_derivative, ObserverGains, ObserverState};
use crate::plant::{follower_derivative, leader_eval, DynamicsSpec, LeaderModel, PlantState};
use crate::topology::{consensus_error, Topology};

const DIVERGENCE_LIMIT: f64 = 1e8;

/// Trigger mode: event-triggered hold or the every-step baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Event,
    Periodic,
}

/// Everything one agent needs: dynamics, design constants, observer gains,
/// per-stage RBF networks, and initial conditions.
#[derive(Debug, Clone)]
pub struct AgentSetup {
    pub dynamics: DynamicsSpec,
    pub params: ControllerParams,
    pub observer: ObserverGains,
    pub rbf: Vec<RbfNetwork>,
    pub x0: DVector<f64>,
    pub xhat0: DVector<f64>,
    pub phi0: Vec<f64>,
}

/// A fully validated simulation description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    pub agents: Vec<AgentSetup>,
    pub leader: LeaderModel,
    pub dt: f64,
    pub t_final: f64,
    pub mode: Mode,
    pub seed: u64,
}

impl Scenario {
    pub fn order(&self) -> usize {
        self.agents[0].params.order()
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::Validation("scenario has no agents".into()));
        }
        if self.agents.len() != self.topology.agent_count() {
            return Err(Error::Validation(format!(
                "topology is for {} agents but {} agent configs given",
                self.topology.agent_count(),
                self.agents.len()
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final > self.dt) {
            return Err(Error::Validation(format!(
                "t_final must exceed dt, got t_final = {}, dt = {}",
                self.t_final, self.dt
            )));
        }
        let n = self.order();
        for (i, agent) in self.agents.iter().enumerate() {
            agent.params.validate().map_err(|e| match e {
                Error::Validation(msg) => Error::Validation(format!("agent {i}: {msg}")),
                other => other,
            })?;
            if agent.params.order() != n {
                return Err(Error::Validation(format!(
                    "agent {i} has order {}, expected {n}",
                    agent.params.order()
                )));
            }
            if agent.dynamics.order() != n
                || agent.observer.order() != n
                || agent.x0.len() != n
                || agent.xhat0.len() != n
                || agent.phi0.len() != n
                || agent.rbf.len() != n
            {
                return Err(Error::Validation(format!(
                    "agent {i}: dynamics/observer/initial-condition/RBF orders must all equal {n}"
                )));
            }
            if !crate::observer::is_hurwitz(agent.observer.companion())? {
                return Err(Error::Validation(format!(
                    "agent {i}: companion matrix not Hurwitz"
                )));
            }
        }
        Ok(())
    }
}

/// Values sampled at one grid node for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub x: Vec<f64>,
    pub xhat: Vec<f64>,
    pub gamma1: f64,
    pub phi_hat: Vec<f64>,
    pub alpha_n: f64,
    pub w: f64,
    pub u_held: f64,
    pub event: bool,
}

/// Time series for one agent plus its event log.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSeries {
    pub records: Vec<StepRecord>,
    pub event_times: Vec<f64>,
}

/// Complete simulation output.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub time: Vec<f64>,
    pub leader: Vec<f64>,
    pub agents: Vec<AgentSeries>,
    pub dt: f64,
    pub t_final: f64,
    pub mode_periodic: bool,
}

impl SimTrace {
    pub fn steps(&self) -> usize {
        self.time.len().saturating_sub(1)
    }
}

/// Per-agent trigger statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerStats {
    pub count: usize,
    pub min_inter_event: f64,
    pub mean_inter_event: f64,
}

/// Per-agent tail-window tracking metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingMetrics {
    pub max_tail_gamma1: f64,
    pub max_tail_output_error: f64,
    pub observer_error_sup: f64,
    pub within_band: bool,
}

/// Scalar comparison-ODE description for the fixed-time bound.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedTimeBound {
    pub a_bar: f64,
    pub b_bar: f64,
    pub alpha_exp: f64,
    pub beta_exp: f64,
    pub c_bar: f64,
    pub fraction: f64,
}

impl FixedTimeBound {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_bar > 0.0) || !(self.b_bar > 0.0) {
            return Err(Error::Validation(format!(
                "a_bar and b_bar must be positive, got {} and {}",
                self.a_bar, self.b_bar
            )));
        }
        if !(self.alpha_exp > 0.0 && self.alpha_exp < 1.0) {
            return Err(Error::Validation(format!(
                "alpha_exp must lie in (0, 1), got {}",
                self.alpha_exp
            )));
        }
        if !(self.beta_exp > 1.0) {
            return Err(Error::Validation(format!(
                "beta_exp must exceed 1, got {}",
                self.beta_exp
            )));
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::Validation(format!(
                "fraction must lie in (0, 1), got {}",
                self.fraction
            )));
        }
        if self.c_bar < 0.0 {
            return Err(Error::Validation(format!(
                "c_bar must be nonnegative, got {}",
                self.c_bar
            )));
        }
        let limit = ((1.0 - self.fraction) * self.a_bar).min((1.0 - self.fraction) * self.b_bar);
        if self.c_bar >= limit {
            return Err(Error::ConditionViolated(format!(
                "c_bar = {} must stay below min((1 - fraction) a_bar, (1 - fraction) b_bar) = {limit}",
                self.c_bar
            )));
        }
        Ok(())
    }
}

/// Outcome of the comparison-ODE verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedTimeOutcome {
    pub entered: bool,
    pub t_enter: f64,
}

struct Model<'a> {
    scenario: &'a Scenario,
    order: usize,
}

impl<'a> Model<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        Self {
            order: scenario.order(),
            scenario,
        }
    }

    fn block(&self) -> usize {
        3 * self.order
    }

    fn dim(&self) -> usize {
        self.block() * self.scenario.agents.len()
    }

    fn x_of<'b>(&self, flat: &'b DVector<f64>, agent: usize) -> DVector<f64> {
        let o = agent * self.block();
        flat.rows(o, self.order).into_owned()
    }

    fn xhat_of<'b>(&self, flat: &'b DVector<f64>, agent: usize) -> DVector<f64> {
        let o = agent * self.block() + self.order;
        flat.rows(o, self.order).into_owned()
    }

    fn phi_of(&self, flat: &DVector<f64>, agent: usize) -> Vec<f64> {
        let o = agent * self.block() + 2 * self.order;
        flat.as_slice()[o..o + self.order].to_vec()
    }

    fn outputs(&self, flat: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.scenario.agents.len(), |i, _| flat[i * self.block()])
    }

    /// Input vector for the RBF net of 1-based `stage`: own estimates up to
    /// the stage, first two neighbor estimates, and leader derivatives up to
    /// the stage order. Stage 1 uses only the first own estimate plus the
    /// leader value and slope.
    fn rbf_input(
        &self,
        agent: usize,
        stage: usize,
        xhat_all: &[DVector<f64>],
        leader: &[f64],
    ) -> DVector<f64> {
        let own = if stage == 1 { 1 } else { stage };
        let neighbors = self.scenario.topology.neighbors(agent);
        let derivs = if stage == 1 { 2 } else { stage + 1 };
        let mut z = Vec::with_capacity(own + 2 * neighbors.len() + derivs);
        z.extend_from_slice(&xhat_all[agent].as_slice()[..own]);
        for j in neighbors {
            z.push(xhat_all[j][0]);
            z.push(xhat_all[j][1]);
        }
        z.extend_from_slice(&leader[..derivs]);
        DVector::from_vec(z)
    }

    fn stage_gains(
        &self,
        agent: usize,
        xhat_all: &[DVector<f64>],
        leader: &[f64],
    ) -> Result<Vec<f64>> {
        (0..self.order)
            .map(|idx| {
                let z = self.rbf_input(agent, idx + 1, xhat_all, leader);
                self.scenario.agents[agent].rbf[idx].gain_magnitude(&z)
            })
            .collect()
    }

    /// Right-hand side of the coupled ODE with per-agent held controls.
    fn derivative(&self, t: f64, flat: &DVector<f64>, held: &[f64]) -> Result<DVector<f64>> {
        let n_agents = self.scenario.agents.len();
        let leader = leader_eval(&self.scenario.leader, t, self.order);
        let outputs = self.outputs(flat);
        let gamma1 = consensus_error(&outputs, leader[0], &self.scenario.topology)?;
        let xhat_all: Vec<DVector<f64>> = (0..n_agents).map(|i| self.xhat_of(flat, i)).collect();

        let mut out = DVector::zeros(self.dim());
        for i in 0..n_agents {
            let agent = &self.scenario.agents[i];
            let x = self.x_of(flat, i);
            let phi = self.phi_of(flat, i);
            let gains_g = self.stage_gains(i, &xhat_all, &leader)?;
            let chain = backstepping_chain(
                gamma1[i],
                self.scenario.topology.effective_coupling(i),
                &xhat_all[i],
                &phi,
                &gains_g,
                &agent.params,
            )
            .map_err(|e| tag_agent(e, i))?;

            let plant_dot = follower_derivative(
                &PlantState { states: x.clone() },
                held[i],
                &agent.dynamics,
            )
            .map_err(|e| tag_agent(e, i))?;
            let obs_dot = observer_derivative(
                &ObserverState {
                    estimate: xhat_all[i].clone(),
                },
                held[i],
                x[0],
                &agent.observer,
            )
            .map_err(|e| tag_agent(e, i))?;

            let base = i * self.block();
            for m in 0..self.order {
                out[base + m] = plant_dot[m];
                out[base + self.order + m] = obs_dot[m];
                out[base + 2 * self.order + m] = adaptive_law(
                    chain.switched[m],
                    gains_g[m],
                    phi[m],
                    agent.params.r[m],
                    agent.params.rho[m],
                    agent.params.m_bar,
                );
            }
        }
        Ok(out)
    }
}

fn tag_agent(e: Error, agent: usize) -> Error {
    match e {
        Error::NonFiniteResult { .. } => Error::NonFiniteResult { agent },
        Error::NonFiniteState { time, .. } => Error::NonFiniteState { agent, time },
        Error::ZeroCoupling { .. } => Error::ZeroCoupling { agent },
        other => other,
    }
}

fn rk4_step(
    model: &Model,
    t: f64,
    dt: f64,
    state: &DVector<f64>,
    held: &[f64],
) -> Result<DVector<f64>> {
    let k1 = model.derivative(t, state, held)?;
    let k2 = model.derivative(t + 0.5 * dt, &(state + &k1 * (0.5 * dt)), held)?;
    let k3 = model.derivative(t + 0.5 * dt, &(state + &k2 * (0.5 * dt)), held)?;
    let k4 = model.derivative(t + dt, &(state + &k3 * dt), held)?;
    Ok(state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Run the closed loop. Per node: evaluate the backstepping chains from the
/// snapshot, apply the trigger rule (unconditional at t = 0), record, then
/// advance one RK4 step with the held controls frozen.
pub fn run(scenario: &Scenario) -> Result<SimTrace> {
    scenario.validate()?;
    let model = Model::new(scenario);
    let n_agents = scenario.agents.len();
    let order = scenario.order();
    let steps = (scenario.t_final / scenario.dt).round() as usize;

    let mut flat = DVector::zeros(model.dim());
    for (i, agent) in scenario.agents.iter().enumerate() {
        let base = i * model.block();
        for m in 0..order {
            flat[base + m] = agent.x0[m];
            flat[base + order + m] = agent.xhat0[m];
            flat[base + 2 * order + m] = agent.phi0[m];
        }
    }

    let mut triggers: Vec<TriggerState> = (0..n_agents).map(|_| TriggerState::new()).collect();
    let mut trace = SimTrace {
        time: Vec::with_capacity(steps + 1),
        leader: Vec::with_capacity(steps + 1),
        agents: (0..n_agents)
            .map(|_| AgentSeries {
                records: Vec::with_capacity(steps + 1),
                event_times: Vec::new(),
            })
            .collect(),
        dt: scenario.dt,
        t_final: scenario.t_final,
        mode_periodic: scenario.mode == Mode::Periodic,
    };

    for k in 0..=steps {
        let t = k as f64 * scenario.dt;
        let leader = leader_eval(&scenario.leader, t, order);
        let outputs = model.outputs(&flat);
        let gamma1 = consensus_error(&outputs, leader[0], &scenario.topology)?;
        let xhat_all: Vec<DVector<f64>> = (0..n_agents).map(|i| model.xhat_of(&flat, i)).collect();

        for i in 0..n_agents {
            let agent = &scenario.agents[i];
            let phi = model.phi_of(&flat, i);
            let gains_g = model.stage_gains(i, &xhat_all, &leader)?;
            let chain = backstepping_chain(
                gamma1[i],
                scenario.topology.effective_coupling(i),
                &xhat_all[i],
                &phi,
                &gains_g,
                &agent.params,
            )
            .map_err(|e| tag_agent(e, i))?;

            let fire = match scenario.mode {
                Mode::Periodic => true,
                Mode::Event => k == 0 || should_trigger(chain.w, &triggers[i], &agent.params),
            };
            if fire {
                triggers[i].fire(chain.w, t);
            }

            trace.agents[i].records.push(StepRecord {
                x: model.x_of(&flat, i).as_slice().to_vec(),
                xhat: xhat_all[i].as_slice().to_vec(),
                gamma1: gamma1[i],
                phi_hat: phi,
                alpha_n: chain.alpha[order - 1],
                w: chain.w,
                u_held: triggers[i].held_control,
                event: fire,
            });
        }
        trace.time.push(t);
        trace.leader.push(leader[0]);

        if k < steps {
            let held: Vec<f64> = triggers.iter().map(|tr| tr.held_control).collect();
            flat = rk4_step(&model, t, scenario.dt, &flat, &held)?;
            for i in 0..n_agents {
                for m in 0..model.block() {
                    let v = flat[i * model.block() + m];
                    if !v.is_finite() {
                        return Err(Error::NonFiniteState {
                            agent: i,
                            time: t + scenario.dt,
                        });
                    }
                    if v.abs() > DIVERGENCE_LIMIT {
                        return Err(Error::Divergence {
                            agent: i,
                            time: t + scenario.dt,
                            value: v.abs(),
                        });
                    }
                }
            }
        }
    }

    for (series, trig) in trace.agents.iter_mut().zip(triggers) {
        series.event_times = trig.event_times;
    }
    Ok(trace)
}

/// Per-agent event counts and inter-event spacing. With fewer than two
/// events the spacings are reported as the horizon.
pub fn trigger_stats(trace: &SimTrace) -> Result<Vec<TriggerStats>> {
    if trace.time.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let horizon = trace.t_final;
    Ok(trace
        .agents
        .iter()
        .map(|series| {
            let times = &series.event_times;
            let count = times.len();
            if count < 2 {
                return TriggerStats {
                    count,
                    min_inter_event: horizon,
                    mean_inter_event: horizon,
                };
            }
            let diffs: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            let min = diffs.iter().cloned().fold(f64::INFINITY, f64::min);
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            TriggerStats {
                count,
                min_inter_event: min,
                mean_inter_event: mean,
            }
        })
        .collect())
}

/// Suprema over `[tail_start, t_final]` of |gamma_1|, |y - y0|, and the
/// observer error norm, with a band verdict against `kappa1 + margin`.
pub fn tracking_metrics(
    trace: &SimTrace,
    kappa1: &[f64],
    tail_start: f64,
    margin: f64,
) -> Result<Vec<TrackingMetrics>> {
    if trace.time.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if tail_start >= trace.t_final {
        return Err(Error::EmptyTail {
            tail_start,
            horizon: trace.t_final,
        });
    }
    if kappa1.len() != trace.agents.len() {
        return Err(Error::DimensionMismatch {
            expected: trace.agents.len(),
            found: kappa1.len(),
        });
    }
    Ok(trace
        .agents
        .iter()
        .enumerate()
        .map(|(i, series)| {
            let mut max_gamma = 0.0f64;
            let mut max_out = 0.0f64;
            let mut max_obs = 0.0f64;
            for (k, rec) in series.records.iter().enumerate() {
                if trace.time[k] < tail_start {
                    continue;
                }
                max_gamma = max_gamma.max(rec.gamma1.abs());
                max_out = max_out.max((rec.x[0] - trace.leader[k]).abs());
                let err: f64 = rec
                    .x
                    .iter()
                    .zip(&rec.xhat)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                max_obs = max_obs.max(err);
            }
            TrackingMetrics {
                max_tail_gamma1: max_gamma,
                max_tail_output_error: max_out,
                observer_error_sup: max_obs,
                within_band: max_gamma <= kappa1[i] + margin,
            }
        })
        .collect())
}

/// Settling-time bound
/// `1 / (fraction a_bar (1 - alpha)) + 1 / (fraction b_bar (beta - 1))`.
pub fn settling_bound(bound: &FixedTimeBound) -> Result<f64> {
    bound.validate()?;
    Ok(1.0 / (bound.fraction * bound.a_bar * (1.0 - bound.alpha_exp))
        + 1.0 / (bound.fraction * bound.b_bar * (bound.beta_exp - 1.0)))
}

fn comparison_rhs(bound: &FixedTimeBound, v: f64) -> f64 {
    let v = v.max(0.0);
    -bound.a_bar * v.powf(bound.alpha_exp) - bound.b_bar * v.powf(bound.beta_exp) + bound.c_bar
}

/// Integrate the scalar comparison ODE from `v0`; the trajectory stops at
/// `t_max` or as soon as V would go negative.
pub fn comparison_trajectory(
    bound: &FixedTimeBound,
    v0: f64,
    dt: f64,
    t_max: f64,
) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, v0)];
    let mut v = v0;
    let mut t = 0.0;
    while t < t_max && v >= 0.0 {
        let k1 = comparison_rhs(bound, v);
        let k2 = comparison_rhs(bound, v + 0.5 * dt * k1);
        let k3 = comparison_rhs(bound, v + 0.5 * dt * k2);
        let k4 = comparison_rhs(bound, v + dt * k3);
        v += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += dt;
        out.push((t, v));
    }
    out
}

/// Numerically check the fixed-time property: V must enter the residual set
/// `{V : a V^alpha + b V^beta <= c / (1 - fraction)}` before the settling
/// bound, whatever `v0`. Halves dt and retries when V overshoots negative.
pub fn verify_fixed_time(bound: &FixedTimeBound, v0: f64, dt: f64) -> Result<FixedTimeOutcome> {
    if !(v0 > 0.0) {
        return Err(Error::Validation(format!("v0 must be positive, got {v0}")));
    }
    let t_max = settling_bound(bound)?;
    let threshold = bound.c_bar / (1.0 - bound.fraction);
    let inside = |v: f64| -> bool {
        let v = v.max(0.0);
        bound.a_bar * v.powf(bound.alpha_exp) + bound.b_bar * v.powf(bound.beta_exp) <= threshold
    };
    let mut step = dt;
    'retry: for _ in 0..=10 {
        let mut v = v0;
        let mut t = 0.0;
        while t <= t_max {
            if inside(v) {
                return Ok(FixedTimeOutcome {
                    entered: true,
                    t_enter: t,
                });
            }
            let k1 = comparison_rhs(bound, v);
            let k2 = comparison_rhs(bound, v + 0.5 * step * k1);
            let k3 = comparison_rhs(bound, v + 0.5 * step * k2);
            let k4 = comparison_rhs(bound, v + step * k3);
            v += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += step;
            if v < 0.0 || !v.is_finite() {
                // negative overshoot is an integration artifact, not entry
                step *= 0.5;
                continue 'retry;
            }
        }
        return Ok(FixedTimeOutcome {
            entered: false,
            t_enter: t_max,
        });
    }
    Err(Error::StepTooCoarse { retries: 10 })
}
