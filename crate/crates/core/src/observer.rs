//! Output-feedback state observer: companion system matrix, Hurwitz check,
//! and the Lyapunov-equation certificate backing the gain choice.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const LYAPUNOV_TOL: f64 = 1e-8;
const HURWITZ_MARGIN: f64 = 1e-9;

/// Observer gain vector and its companion error-system matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    gains: DVector<f64>,
    companion: DMatrix<f64>,
}

impl ObserverGains {
    /// Build from a gain vector; the companion matrix must be Hurwitz.
    pub fn new(gains: DVector<f64>) -> Result<Self> {
        let companion = companion_matrix(&gains)?;
        if !is_hurwitz(&companion)? {
            return Err(Error::NotHurwitz {
                context: format!("observer gains {:?}", gains.as_slice()),
            });
        }
        Ok(Self { gains, companion })
    }

    /// Build without the Hurwitz requirement (for diagnostics commands
    /// that report the verdict themselves).
    pub fn new_unchecked(gains: DVector<f64>) -> Result<Self> {
        let companion = companion_matrix(&gains)?;
        Ok(Self { gains, companion })
    }

    pub fn order(&self) -> usize {
        self.gains.len()
    }

    pub fn gains(&self) -> &DVector<f64> {
        &self.gains
    }

    pub fn companion(&self) -> &DMatrix<f64> {
        &self.companion
    }
}

/// Per-agent estimated state.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub estimate: DVector<f64>,
}

/// Positive-definite solution of the observer Lyapunov equation together
/// with its back-substitution residual.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub h_matrix: DMatrix<f64>,
    pub rho: f64,
    pub residual: f64,
}

impl LyapunovCertificate {
    pub fn min_eigenvalue(&self) -> f64 {
        self.h_matrix
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `chi = chi0 + M P`: superdiagonal ones, gains down the first column.
pub fn companion_matrix(gains: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = gains.len();
    if n == 0 {
        return Err(Error::EmptyGains);
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, 0)] = gains[i];
        if i + 1 < n {
            m[(i, i + 1)] = 1.0;
        }
    }
    Ok(m)
}

/// True iff every eigenvalue has real part below `-HURWITZ_MARGIN`.
pub fn is_hurwitz(matrix: &DMatrix<f64>) -> Result<bool> {
    if !matrix.is_square() {
        return Err(Error::NonSquare {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
        });
    }
    Ok(matrix
        .complex_eigenvalues()
        .iter()
        .all(|e| e.re < -HURWITZ_MARGIN))
}

/// Time derivative of the estimate:
/// stage m < n: `xhat_{m+1} - mu_m (y - yhat)`; stage n: `u - mu_n (y - yhat)`.
pub fn observer_derivative(
    state: &ObserverState,
    control: f64,
    measured_output: f64,
    gains: &ObserverGains,
) -> Result<DVector<f64>> {
    let n = gains.order();
    if state.estimate.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: state.estimate.len(),
        });
    }
    if state.estimate.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { agent: 0, time: 0.0 });
    }
    let innovation = measured_output - state.estimate[0];
    Ok(DVector::from_fn(n, |m, _| {
        let drive = if m + 1 < n { state.estimate[m + 1] } else { control };
        drive - gains.gains()[m] * innovation
    }))
}

/// Solve `chi^T H + H chi = -rho I` for symmetric positive-definite H by a
/// dense linear solve over the n(n+1)/2 independent entries.
pub fn solve_lyapunov(chi: &DMatrix<f64>, rho: f64) -> Result<LyapunovCertificate> {
    if !chi.is_square() {
        return Err(Error::NonSquare {
            rows: chi.nrows(),
            cols: chi.ncols(),
        });
    }
    if !(rho > 0.0) {
        return Err(Error::Validation(format!("rho must be positive, got {rho}")));
    }
    if !is_hurwitz(chi)? {
        return Err(Error::NotHurwitz {
            context: "Lyapunov equation has no positive-definite solution".into(),
        });
    }
    let n = chi.nrows();
    let unknowns = n * (n + 1) / 2;
    let pos = |r: usize, s: usize| -> usize {
        // index of H[r][s] with r <= s in the packed upper triangle
        let (r, s) = if r <= s { (r, s) } else { (s, r) };
        r * (2 * n - r + 1) / 2 + (s - r)
    };
    let mut a = DMatrix::zeros(unknowns, unknowns);
    let mut b = DVector::zeros(unknowns);
    let mut row = 0;
    for r in 0..n {
        for s in r..n {
            // (chi^T H + H chi)[r][s] = sum_k chi[k][r] H[k][s] + H[r][k] chi[k][s]
            for k in 0..n {
                a[(row, pos(k, s))] += chi[(k, r)];
                a[(row, pos(r, k))] += chi[(k, s)];
            }
            b[row] = if r == s { -rho } else { 0.0 };
            row += 1;
        }
    }
    let solution = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::IllConditioned {
            residual: f64::INFINITY,
            tolerance: LYAPUNOV_TOL,
        })?;
    let mut h = DMatrix::zeros(n, n);
    for r in 0..n {
        for s in r..n {
            h[(r, s)] = solution[pos(r, s)];
            h[(s, r)] = solution[pos(r, s)];
        }
    }
    let residual_matrix = chi.transpose() * &h + &h * chi + DMatrix::from_diagonal_element(n, n, rho);
    let residual = residual_matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if residual > LYAPUNOV_TOL {
        return Err(Error::IllConditioned {
            residual,
            tolerance: LYAPUNOV_TOL,
        });
    }
    let cert = LyapunovCertificate { h_matrix: h, rho, residual };
    if cert.min_eigenvalue() <= 0.0 {
        return Err(Error::NotHurwitz {
            context: "Lyapunov solution is not positive definite".into(),
        });
    }
    Ok(cert)
}

/// Largest eigenvalue of `H chi + chi^T H + (2 + n) I`; negative margin
/// means the certificate leaves room for the analysis-side constant.
pub fn stability_margin(cert: &LyapunovCertificate, chi: &DMatrix<f64>) -> f64 {
    let n = chi.nrows();
    let m = &cert.h_matrix * chi
        + chi.transpose() * &cert.h_matrix
        + DMatrix::from_diagonal_element(n, n, (2 + n) as f64);
    // symmetric by construction
    m.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table_gains() -> DVector<f64> {
        DVector::from_row_slice(&[-15.0, -80.0])
    }

    #[test]
    fn companion_layout() {
        let m = companion_matrix(&table_gains()).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[-15.0, 1.0, -80.0, 0.0]));
        let scalar = companion_matrix(&DVector::from_row_slice(&[-1.0])).unwrap();
        assert_eq!(scalar, DMatrix::from_row_slice(1, 1, &[-1.0]));
        let shift = companion_matrix(&DVector::zeros(3)).unwrap();
        assert_eq!(
            shift,
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
        );
        assert!(matches!(companion_matrix(&DVector::zeros(0)), Err(Error::EmptyGains)));
    }

    #[test]
    fn hurwitz_verdicts() {
        assert!(is_hurwitz(&companion_matrix(&table_gains()).unwrap()).unwrap());
        assert!(!is_hurwitz(&DMatrix::identity(2, 2)).unwrap());
        assert!(!is_hurwitz(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap());
        assert!(is_hurwitz(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn table_gains_accepted() {
        assert!(ObserverGains::new(table_gains()).is_ok());
        assert!(ObserverGains::new(DVector::from_row_slice(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn derivative_zero_innovation_passthrough() {
        let gains = ObserverGains::new(table_gains()).unwrap();
        let st = ObserverState {
            estimate: DVector::from_row_slice(&[1.0, 2.0]),
        };
        let d = observer_derivative(&st, 3.0, 1.0, &gains).unwrap();
        assert_eq!(d.as_slice(), &[2.0, 3.0]);
    }

    #[test]
    fn derivative_pure_innovation() {
        let gains = ObserverGains::new(table_gains()).unwrap();
        let st = ObserverState {
            estimate: DVector::zeros(2),
        };
        let d = observer_derivative(&st, 0.0, 1.0, &gains).unwrap();
        assert_eq!(d.as_slice(), &[15.0, 80.0]);
    }

    #[test]
    fn lyapunov_diagonal_cases() {
        let cert = solve_lyapunov(&(DMatrix::identity(2, 2) * -1.0), 2.0).unwrap();
        assert_relative_eq!(cert.h_matrix[(0, 0)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(cert.h_matrix[(1, 1)], 1.0, max_relative = 1e-12);
        assert!(cert.residual <= 1e-12);

        let chi = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -3.0]);
        let cert = solve_lyapunov(&chi, 6.0).unwrap();
        assert_relative_eq!(cert.h_matrix[(0, 0)], 3.0, max_relative = 1e-12);
        assert_relative_eq!(cert.h_matrix[(1, 1)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(cert.h_matrix[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_table_gains_certificate() {
        let chi = companion_matrix(&table_gains()).unwrap();
        let cert = solve_lyapunov(&chi, 1.0).unwrap();
        assert!(cert.residual <= 1e-8);
        assert!(cert.min_eigenvalue() > 0.0);
        // independent back-substitution check
        let back = chi.transpose() * &cert.h_matrix + &cert.h_matrix * &chi;
        for r in 0..2 {
            for s in 0..2 {
                let expect = if r == s { -1.0 } else { 0.0 };
                assert!((back[(r, s)] - expect).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        assert!(matches!(
            solve_lyapunov(&DMatrix::identity(2, 2), 1.0),
            Err(Error::NotHurwitz { .. })
        ));
    }

    #[test]
    fn randomized_stable_matrices_certify() {
        // random stable eigenvalues conjugated by random orthogonal bases
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..40 {
            let n = 2 + (next() * 3.0) as usize;
            let eigs = DVector::from_fn(n, |_, _| -0.1 - 9.9 * next());
            let raw = DMatrix::from_fn(n, n, |_, _| next() - 0.5);
            let q = raw.qr().q();
            let chi = &q * DMatrix::from_diagonal(&eigs) * q.transpose();
            let cert = solve_lyapunov(&chi, 1.0).unwrap();
            assert!(cert.residual <= 1e-8);
            assert!(cert.min_eigenvalue() > 0.0);
        }
    }
}
