//! Gaussian radial-basis network.
//!
//! The controller consumes only the basis-norm gain `g = 1 + ||basis||`;
//! weighted evaluation is kept for diagnostics.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RbfNetwork {
    centers: Vec<DVector<f64>>,
    widths: Vec<f64>,
    weights: Vec<f64>,
}

impl RbfNetwork {
    pub fn new(centers: Vec<DVector<f64>>, widths: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Validation("RBF network needs at least one node".into()));
        }
        if widths.len() != centers.len() || weights.len() != centers.len() {
            return Err(Error::DimensionMismatch {
                expected: centers.len(),
                found: widths.len().min(weights.len()),
            });
        }
        let dim = centers[0].len();
        if centers.iter().any(|c| c.len() != dim) {
            return Err(Error::Validation("RBF centers have mixed dimensions".into()));
        }
        if widths.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Validation("RBF widths must be strictly positive".into()));
        }
        Ok(Self {
            centers,
            widths,
            weights,
        })
    }

    /// Deterministic default: nodes on an even lattice over `[lo, hi]^dim`,
    /// truncated to `nodes` points in lexicographic order, width equal to
    /// twice the lattice spacing, zero weights.
    pub fn lattice(dim: usize, nodes: usize, lo: f64, hi: f64) -> Result<Self> {
        if dim == 0 || nodes == 0 {
            return Err(Error::Validation("RBF lattice needs dim >= 1 and nodes >= 1".into()));
        }
        if !(hi > lo) {
            return Err(Error::Validation(format!(
                "RBF lattice range must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        // smallest per-axis count whose full grid covers the node budget
        let mut per_axis = 1usize;
        while (per_axis as f64).powi(dim as i32) < nodes as f64 {
            per_axis += 1;
        }
        let spacing = if per_axis > 1 {
            (hi - lo) / (per_axis - 1) as f64
        } else {
            hi - lo
        };
        let mut centers = Vec::with_capacity(nodes);
        let mut index = vec![0usize; dim];
        'outer: loop {
            let c = DVector::from_fn(dim, |axis, _| {
                if per_axis > 1 {
                    lo + index[axis] as f64 * spacing
                } else {
                    0.5 * (lo + hi)
                }
            });
            centers.push(c);
            if centers.len() == nodes {
                break;
            }
            // lexicographic increment
            for axis in (0..dim).rev() {
                index[axis] += 1;
                if index[axis] < per_axis {
                    continue 'outer;
                }
                index[axis] = 0;
            }
            break;
        }
        let m = centers.len();
        Self::new(centers, vec![2.0 * spacing; m], vec![0.0; m])
    }

    pub fn node_count(&self) -> usize {
        self.centers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn centers(&self) -> &[DVector<f64>] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_input(&self, input: &DVector<f64>) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: input.len(),
            });
        }
        Ok(())
    }

    /// Gaussian basis vector; component i is `exp(-|z - c_i|^2 / w_i^2)`.
    pub fn basis(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(input)?;
        Ok(DVector::from_iterator(
            self.node_count(),
            self.centers.iter().zip(&self.widths).map(|(c, w)| {
                let d = input - c;
                (-d.dot(&d) / (w * w)).exp()
            }),
        ))
    }

    /// `1 + ||basis||`, the gain consumed by the adaptive controller.
    pub fn gain_magnitude(&self, input: &DVector<f64>) -> Result<f64> {
        Ok(1.0 + self.basis(input)?.norm())
    }

    /// Weighted network output; diagnostics only.
    pub fn evaluate(&self, input: &DVector<f64>) -> Result<f64> {
        let b = self.basis(input)?;
        Ok(b.iter().zip(&self.weights).map(|(l, w)| l * w).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn basis_at_center_is_one() {
        let net = RbfNetwork::new(vec![v(&[0.3, -0.2])], vec![0.5], vec![0.0]).unwrap();
        let b = net.basis(&v(&[0.3, -0.2])).unwrap();
        assert_eq!(b[0], 1.0);
    }

    #[test]
    fn basis_unit_distance() {
        let net = RbfNetwork::new(vec![v(&[0.0, 0.0])], vec![1.0], vec![0.0]).unwrap();
        let b = net.basis(&v(&[1.0, 0.0])).unwrap();
        assert_relative_eq!(b[0], (-1.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn basis_far_input_decays() {
        let net = RbfNetwork::lattice(2, 16, -0.5, 0.5).unwrap();
        let b = net.basis(&v(&[20.0, 20.0])).unwrap();
        assert!(b.iter().all(|&x| x <= (-50.0f64).exp()));
    }

    #[test]
    fn gain_single_center() {
        let net = RbfNetwork::new(vec![v(&[0.1])], vec![1.0], vec![0.0]).unwrap();
        assert_relative_eq!(net.gain_magnitude(&v(&[0.1])).unwrap(), 2.0);
    }

    #[test]
    fn gain_far_input_near_one() {
        let net = RbfNetwork::lattice(2, 16, -0.5, 0.5).unwrap();
        let g = net.gain_magnitude(&v(&[100.0, -100.0])).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gain_two_half_basis() {
        // place the input so both Gaussian bumps evaluate to exactly 0.5
        let d2 = (2.0f64).ln(); // exp(-d2) = 0.5 with unit width
        let x = d2.sqrt();
        let net = RbfNetwork::new(vec![v(&[-x]), v(&[x])], vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let g = net.gain_magnitude(&v(&[0.0])).unwrap();
        assert_relative_eq!(g, 1.0 + 0.5f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn evaluate_dot_product() {
        let net = RbfNetwork::new(
            vec![v(&[0.0]), v(&[1.0])],
            vec![1.0, 1.0],
            vec![2.0, -1.0],
        )
        .unwrap();
        let b = net.basis(&v(&[0.4])).unwrap();
        let expect = 2.0 * b[0] - b[1];
        assert_relative_eq!(net.evaluate(&v(&[0.4])).unwrap(), expect, max_relative = 1e-14);
        let zero = RbfNetwork::new(vec![v(&[0.0])], vec![1.0], vec![0.0]).unwrap();
        assert_eq!(zero.evaluate(&v(&[0.2])).unwrap(), 0.0);
    }

    #[test]
    fn lattice_is_deterministic_and_sized() {
        let a = RbfNetwork::lattice(3, 16, -0.5, 0.5).unwrap();
        let b = RbfNetwork::lattice(3, 16, -0.5, 0.5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.node_count(), 16);
        assert_eq!(a.input_dim(), 3);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = RbfNetwork::lattice(2, 4, -0.5, 0.5).unwrap();
        assert!(net.basis(&v(&[1.0])).is_err());
    }

    proptest! {
        #[test]
        fn basis_in_unit_interval(x in -3.0..3.0f64, y in -3.0..3.0f64) {
            let net = RbfNetwork::lattice(2, 16, -0.5, 0.5).unwrap();
            let b = net.basis(&v(&[x, y])).unwrap();
            prop_assert!(b.iter().all(|&l| l > 0.0 && l <= 1.0));
        }

        #[test]
        fn gain_bounded(x in -5.0..5.0f64, y in -5.0..5.0f64) {
            let net = RbfNetwork::lattice(2, 16, -0.5, 0.5).unwrap();
            let g = net.gain_magnitude(&v(&[x, y])).unwrap();
            // the lower bound is not strict: far inputs underflow the basis
            // norm below one ulp of 1.0
            prop_assert!(g >= 1.0 && g <= 1.0 + 4.0 + 1e-12);
        }

        #[test]
        fn joint_permutation_invariance(x in -2.0..2.0f64, rot in 0usize..4) {
            let base = RbfNetwork::new(
                vec![v(&[-0.5]), v(&[0.0]), v(&[0.25]), v(&[0.5])],
                vec![0.4, 0.5, 0.6, 0.7],
                vec![1.0, -2.0, 0.5, 3.0],
            ).unwrap();
            let mut idx: Vec<usize> = (0..4).collect();
            idx.rotate_left(rot);
            let permuted = RbfNetwork::new(
                idx.iter().map(|&i| base.centers()[i].clone()).collect(),
                idx.iter().map(|&i| base.widths()[i]).collect(),
                idx.iter().map(|&i| base.weights()[i]).collect(),
            ).unwrap();
            let input = v(&[x]);
            prop_assert!((base.evaluate(&input).unwrap() - permuted.evaluate(&input).unwrap()).abs() <= 1e-12);
            prop_assert!((base.gain_magnitude(&input).unwrap() - permuted.gain_magnitude(&input).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn basis_symmetric_about_center(dx in -2.0..2.0f64) {
            let net = RbfNetwork::new(vec![v(&[0.3])], vec![0.8], vec![0.0]).unwrap();
            let plus = net.basis(&v(&[0.3 + dx])).unwrap();
            let minus = net.basis(&v(&[0.3 - dx])).unwrap();
            prop_assert!((plus[0] - minus[0]).abs() <= 1e-15);
        }
    }
}
