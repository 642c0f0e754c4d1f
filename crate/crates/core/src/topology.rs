//! Leader-follower communication graph and its derived quantities.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Directed follower graph plus leader pinning gains.
///
/// Entry `(i, j)` of the adjacency is the weight of the edge from agent `j`
/// to agent `i`. `coupling[i]` is `s_i = sum_j adjacency[i][j] + leader_gains[i]`,
/// the divisor of the stage-1 virtual control.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    adjacency: DMatrix<f64>,
    leader_gains: DVector<f64>,
    in_degree: DVector<f64>,
    laplacian: DMatrix<f64>,
    coupling: DVector<f64>,
    coupling_override: Option<f64>,
}

impl Topology {
    pub fn agent_count(&self) -> usize {
        self.leader_gains.len()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn leader_gains(&self) -> &DVector<f64> {
        &self.leader_gains
    }

    pub fn in_degree(&self) -> &DVector<f64> {
        &self.in_degree
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Derived coupling vector s, regardless of any override.
    pub fn coupling(&self) -> &DVector<f64> {
        &self.coupling
    }

    /// Coupling strength used by the controller: the override when set,
    /// else the derived s_i.
    pub fn effective_coupling(&self, agent: usize) -> f64 {
        self.coupling_override.unwrap_or(self.coupling[agent])
    }

    pub fn coupling_override(&self) -> Option<f64> {
        self.coupling_override
    }

    /// Replace every controller-side s_i with a constant. The derived vector
    /// stays available for inspection.
    pub fn with_coupling_override(mut self, value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::Validation(format!(
                "coupling override must be positive and finite, got {value}"
            )));
        }
        self.coupling_override = Some(value);
        Ok(self)
    }

    /// Neighbor indices of agent `i` (incoming edges with positive weight).
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.agent_count())
            .filter(|&j| self.adjacency[(i, j)] > 0.0)
            .collect()
    }
}

/// Validate the raw graph data and compute Laplacian and coupling.
pub fn build_topology(adjacency: DMatrix<f64>, leader_gains: DVector<f64>) -> Result<Topology> {
    let (rows, cols) = adjacency.shape();
    if rows != cols {
        return Err(Error::NonSquare { rows, cols });
    }
    if leader_gains.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            found: leader_gains.len(),
        });
    }
    for i in 0..rows {
        for j in 0..cols {
            let v = adjacency[(i, j)];
            if v < 0.0 || !v.is_finite() {
                return Err(Error::NegativeWeight {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        if adjacency[(i, i)] != 0.0 {
            return Err(Error::NonzeroDiagonal {
                index: i,
                value: adjacency[(i, i)],
            });
        }
        let g = leader_gains[i];
        if g < 0.0 || !g.is_finite() {
            return Err(Error::Validation(format!(
                "leader gain {i} must be nonnegative, got {g}"
            )));
        }
    }
    if leader_gains.iter().all(|&g| g == 0.0) {
        return Err(Error::IsolatedNetwork);
    }

    let in_degree = DVector::from_iterator(rows, adjacency.row_iter().map(|r| r.sum()));
    let laplacian = DMatrix::from_diagonal(&in_degree) - &adjacency;
    let coupling = &in_degree + &leader_gains;
    for i in 0..rows {
        if coupling[i] == 0.0 {
            return Err(Error::ZeroCoupling { agent: i });
        }
    }

    Ok(Topology {
        adjacency,
        leader_gains,
        in_degree,
        laplacian,
        coupling,
        coupling_override: None,
    })
}

/// Stage-1 consensus error for every agent:
/// `gamma_i = sum_j adj[i][j] (y_i - y_j) + t_i (y_i - y_0)`.
pub fn consensus_error(
    outputs: &DVector<f64>,
    leader_output: f64,
    topo: &Topology,
) -> Result<DVector<f64>> {
    let n = topo.agent_count();
    if outputs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: outputs.len(),
        });
    }
    let mut gamma = DVector::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += topo.adjacency[(i, j)] * (outputs[i] - outputs[j]);
        }
        acc += topo.leader_gains[i] * (outputs[i] - leader_output);
        gamma[i] = acc;
    }
    Ok(gamma)
}

/// The follower adjacency printed in the worked four-agent example.
pub fn example_adjacency() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 0.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, 1.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0,
        ],
    )
}

/// The leader pinning gains of the four-agent example.
pub fn example_leader_gains() -> DVector<f64> {
    DVector::from_row_slice(&[1.0, 0.0, 0.0, 1.0])
}
