//! Scenario file loading, schema validation, and assembly into a runnable
//! [`Scenario`](crate::engine::Scenario).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::approximator::RbfNetwork;
use crate::controller::ControllerParams;
use crate::engine::{AgentSetup, FixedTimeBound, Mode, Scenario};
use crate::error::{Error, Result};
use crate::expr;
use crate::observer::{solve_lyapunov, ObserverGains};
use crate::plant::{DynamicsSpec, LeaderModel};
use crate::topology::build_topology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub topology: TopologySection,
    pub agents: Vec<AgentSection>,
    pub leader: LeaderSection,
    pub sim: SimSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub adjacency: Vec<Vec<f64>>,
    pub leader_gains: Vec<f64>,
    /// Replaces every controller-side coupling s_i with a constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub override_coupling: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub dynamics: DynamicsSection,
    pub controller: ControllerSection,
    pub observer: ObserverSection,
    #[serde(default)]
    pub rbf: RbfSection,
    pub init: InitSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsSection {
    /// All stage nonlinearities zero.
    Zero,
    /// The built-in two-stage example pair.
    Example {
        #[serde(default = "default_example_coeff")]
        coeff: f64,
    },
    /// Closed-form stage expressions over x1..xn.
    Custom { stages: Vec<String> },
}

fn default_example_coeff() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub kappa: Vec<f64>,
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    pub p_exp: f64,
    pub q_exp: f64,
    #[serde(default = "default_m_bar")]
    pub m_bar: f64,
    pub xi: f64,
    pub xi_star: f64,
    pub epsilon: f64,
}

fn default_m_bar() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    pub gains: Vec<f64>,
    /// Right-hand-side scale of the Lyapunov certificate equation.
    #[serde(default = "default_observer_rho")]
    pub rho: f64,
}

fn default_observer_rho() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbfSection {
    #[serde(default = "default_rbf_nodes")]
    pub nodes: usize,
    #[serde(default = "default_rbf_range")]
    pub range: [f64; 2],
    /// Optional fixed Gaussian width; default is twice the lattice spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

fn default_rbf_nodes() -> usize {
    16
}

fn default_rbf_range() -> [f64; 2] {
    [-0.5, 0.5]
}

impl Default for RbfSection {
    fn default() -> Self {
        Self {
            nodes: default_rbf_nodes(),
            range: default_rbf_range(),
            width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub phi_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeaderSection {
    Sine { amplitude: f64, frequency: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_mode")]
    pub mode: ModeSection,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSection {
    Event,
    Periodic,
}

fn default_mode() -> ModeSection {
    ModeSection::Event
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSection {
    pub a_bar: f64,
    pub b_bar: f64,
    pub alpha_exp: f64,
    pub beta_exp: f64,
    #[serde(default)]
    pub c_bar: f64,
    pub fraction: f64,
}

impl From<&BoundSection> for FixedTimeBound {
    fn from(b: &BoundSection) -> Self {
        FixedTimeBound {
            a_bar: b.a_bar,
            b_bar: b.b_bar,
            alpha_exp: b.alpha_exp,
            beta_exp: b.beta_exp,
            c_bar: b.c_bar,
            fraction: b.fraction,
        }
    }
}

impl ScenarioFile {
    /// Parse a scenario document from a string.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let msg = format!("{e} (line {}, column {})", e.line(), e.column());
            if e.is_syntax() || e.is_eof() {
                Error::Parse(msg)
            } else {
                Error::Schema(msg)
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    /// Assemble and fully validate the runnable scenario.
    pub fn build(&self) -> Result<Scenario> {
        let n_agents = self.topology.adjacency.len();
        for (i, row) in self.topology.adjacency.iter().enumerate() {
            if row.len() != n_agents {
                return Err(Error::Validation(format!(
                    "topology.adjacency row {i} has length {}, expected {n_agents}",
                    row.len()
                )));
            }
        }
        let adjacency = DMatrix::from_fn(n_agents, n_agents, |r, c| self.topology.adjacency[r][c]);
        let leader_gains = DVector::from_row_slice(&self.topology.leader_gains);
        let mut topology = build_topology(adjacency, leader_gains)?;
        if let Some(v) = self.topology.override_coupling {
            topology = topology.with_coupling_override(v)?;
        }

        if self.agents.len() != n_agents {
            return Err(Error::Validation(format!(
                "topology is for {n_agents} agents but agents has {} entries",
                self.agents.len()
            )));
        }

        let mut agents = Vec::with_capacity(n_agents);
        for (i, section) in self.agents.iter().enumerate() {
            agents.push(build_agent(i, section, &topology)?);
        }

        let leader = match &self.leader {
            LeaderSection::Sine { amplitude, frequency } => LeaderModel::Sine {
                amplitude: *amplitude,
                frequency: *frequency,
            },
            LeaderSection::Constant { value } => LeaderModel::Constant { value: *value },
        };

        if let Some(bound) = &self.bound {
            FixedTimeBound::from(bound).validate()?;
        }

        let scenario = Scenario {
            topology,
            agents,
            leader,
            dt: self.sim.dt,
            t_final: self.sim.t_final,
            mode: match self.sim.mode {
                ModeSection::Event => Mode::Event,
                ModeSection::Periodic => Mode::Periodic,
            },
            seed: self.sim.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Input dimension of the RBF net for 1-based `stage`: own estimates up to
/// the stage, two estimates per neighbor, leader derivatives up to the stage
/// order (stage 1 uses one own estimate and the value-plus-slope pair).
pub fn rbf_input_dim(stage: usize, neighbor_count: usize) -> usize {
    let own = if stage == 1 { 1 } else { stage };
    let derivs = if stage == 1 { 2 } else { stage + 1 };
    own + 2 * neighbor_count + derivs
}

fn build_agent(
    index: usize,
    section: &AgentSection,
    topology: &crate::topology::Topology,
) -> Result<AgentSetup> {
    let ctl = &section.controller;
    let params = ControllerParams {
        a: ctl.a.clone(),
        b: ctl.b.clone(),
        kappa: ctl.kappa.clone(),
        r: ctl.r.clone(),
        rho: ctl.rho.clone(),
        p_exp: ctl.p_exp,
        q_exp: ctl.q_exp,
        m_bar: ctl.m_bar,
        xi: ctl.xi,
        xi_star: ctl.xi_star,
        epsilon: ctl.epsilon,
    };
    params.validate().map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("agent {index}: {msg}")),
        other => other,
    })?;
    let n = params.order();

    let dynamics = match &section.dynamics {
        DynamicsSection::Zero => DynamicsSpec::Zero { order: n },
        DynamicsSection::Example { coeff } => {
            if n != 2 {
                return Err(Error::Validation(format!(
                    "agent {index}: the built-in example dynamics are second order, controller has {n} stages"
                )));
            }
            DynamicsSpec::Example { coeff: *coeff }
        }
        DynamicsSection::Custom { stages } => {
            if stages.len() != n {
                return Err(Error::Validation(format!(
                    "agent {index}: {} custom stage expressions for an order-{n} controller",
                    stages.len()
                )));
            }
            let parsed: Result<Vec<expr::Expr>> =
                stages.iter().map(|s| expr::parse(s, n)).collect();
            DynamicsSpec::Custom { stages: parsed? }
        }
    };

    let observer = ObserverGains::new(DVector::from_row_slice(&section.observer.gains))
        .map_err(|e| match e {
            Error::NotHurwitz { .. } => {
                Error::Validation(format!("agent {index}: companion matrix not Hurwitz"))
            }
            other => other,
        })?;
    if !(section.observer.rho > 0.0) {
        return Err(Error::Validation(format!(
            "agent {index}: observer rho must be positive, got {}",
            section.observer.rho
        )));
    }
    // certificate must exist at load time
    solve_lyapunov(observer.companion(), section.observer.rho)?;

    let neighbor_count = topology.neighbors(index).len();
    let [lo, hi] = section.rbf.range;
    let mut rbf = Vec::with_capacity(n);
    for stage in 1..=n {
        let dim = rbf_input_dim(stage, neighbor_count);
        let mut net = RbfNetwork::lattice(dim, section.rbf.nodes, lo, hi)?;
        if let Some(w) = section.rbf.width {
            let m = net.node_count();
            net = RbfNetwork::new(net.centers().to_vec(), vec![w; m], vec![0.0; m])?;
        }
        rbf.push(net);
    }

    let init = &section.init;
    if init.x.len() != n || init.x_hat.len() != n || init.phi_hat.len() != n {
        return Err(Error::Validation(format!(
            "agent {index}: init vectors must all have length {n}"
        )));
    }

    Ok(AgentSetup {
        dynamics,
        params,
        observer,
        rbf,
        x0: DVector::from_row_slice(&init.x),
        xhat0: DVector::from_row_slice(&init.x_hat),
        phi0: init.phi_hat.clone(),
    })
}

/// Read, parse, and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<(ScenarioFile, Scenario)> {
    let text = std::fs::read_to_string(path)?;
    let file = ScenarioFile::from_json(&text)?;
    let scenario = file.build()?;
    Ok((file, scenario))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
          "topology": {
            "adjacency": [[0, 0], [1, 0]],
            "leader_gains": [1, 0]
          },
          "agents": [AGENT, AGENT],
          "leader": { "kind": "constant", "value": 0.0 },
          "sim": { "dt": 0.001, "t_final": 0.1 }
        }"#
        .replace(
            "AGENT",
            r#"{
              "dynamics": { "kind": "zero" },
              "controller": {
                "a": [15, 2], "b": [35, 5], "kappa": [0.6, 0.8],
                "r": [1, 1], "rho": [1, 1],
                "p_exp": 2.0, "q_exp": 0.5,
                "xi": 5.5, "xi_star": 5.0, "epsilon": 25.0
              },
              "observer": { "gains": [-15, -80] },
              "init": { "x": [0, 0], "x_hat": [0, 0], "phi_hat": [0.1, 0.1] }
            }"#,
        )
    }

    #[test]
    fn minimal_scenario_builds() {
        let file = ScenarioFile::from_json(&minimal_json()).unwrap();
        let scenario = file.build().unwrap();
        assert_eq!(scenario.agents.len(), 2);
        assert_eq!(scenario.order(), 2);
        // defaults applied
        assert_eq!(file.agents[0].rbf.nodes, 16);
        assert_eq!(file.agents[0].controller.m_bar, 1.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = minimal_json().replace("\"dt\": 0.001", "\"dt\": 0.001, \"bogus\": 1");
        assert!(matches!(
            ScenarioFile::from_json(&text),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = ScenarioFile::from_json("{ not json").unwrap_err();
        match err {
            Error::Parse(msg) => assert!(msg.contains("line 1")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn xi_ordering_invariant_named() {
        let text = minimal_json().replace("\"xi_star\": 5.0", "\"xi_star\": 6.0");
        let err = ScenarioFile::from_json(&text).unwrap().build().unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("xi > xi_star"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn non_hurwitz_gains_named() {
        let text = minimal_json().replace("[-15, -80]", "[1, 1]");
        let err = ScenarioFile::from_json(&text).unwrap().build().unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("companion matrix not Hurwitz"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn custom_dynamics_parse_and_bind() {
        let text = minimal_json().replace(
            r#"{ "kind": "zero" }"#,
            r#"{ "kind": "custom", "stages": ["x1 / (1 + x2^2)", "0.15*sin(x1 - x2)*exp(-(x1^2 + x2^4))"] }"#,
        );
        let scenario = ScenarioFile::from_json(&text).unwrap().build().unwrap();
        // custom expressions reproduce the built-in example pair
        let x = nalgebra::DVector::from_row_slice(&[1.0, 1.0]);
        let example = DynamicsSpec::Example { coeff: 0.15 };
        for stage in 1..=2 {
            let got = scenario.agents[0].dynamics.nonlinearity(stage, &x);
            let want = example.nonlinearity(stage, &x);
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_preserves_scenario() {
        let file = ScenarioFile::from_json(&minimal_json()).unwrap();
        let dumped = file.to_json();
        let reloaded = ScenarioFile::from_json(&dumped).unwrap();
        assert_eq!(file, reloaded);
    }

    #[test]
    fn rbf_dims_follow_neighbors() {
        assert_eq!(rbf_input_dim(1, 0), 3);
        assert_eq!(rbf_input_dim(2, 0), 5);
        assert_eq!(rbf_input_dim(1, 2), 7);
        assert_eq!(rbf_input_dim(2, 1), 7);
    }
}
