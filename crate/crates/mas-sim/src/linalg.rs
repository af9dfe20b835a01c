//! Dense linear-algebra building blocks.
//!
//! Spectral radius and Schur-stability tests, the observer coupling-gain
//! condition, a least-squares solver for the discrete regulator equations,
//! and single-input pole placement (with its dual, observer gain design).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use thiserror::Error;

/// Margin below 1 required of a spectral radius for a Schur verdict.
pub const SCHUR_MARGIN: f64 = 1e-12;

/// Residual tolerance accepted by the regulator-equation solver.
pub const REGULATOR_TOL: f64 = 1e-9;

/// Errors raised by the dense linear-algebra operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    /// The operation requires a square matrix.
    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    /// The matrix contains NaN or infinite entries.
    #[error("matrix has non-finite entries")]
    NonFinite,
    /// Two operands have incompatible shapes.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },
    /// The regulator equations have no solution within tolerance.
    #[error(
        "regulator equations unsolvable: residuals {residual_primary:.3e} (dynamics), \
         {residual_output:.3e} (output) exceed {tol:.1e}"
    )]
    NoSolution {
        residual_primary: f64,
        residual_output: f64,
        tol: f64,
    },
    /// The pair (A, B) is not controllable enough to place the spectrum.
    #[error("pole placement failed: (A, B) is uncontrollable or too ill-conditioned")]
    Uncontrollable,
    /// Requested eigenvalues must come in conjugate pairs.
    #[error("pole targets are not closed under complex conjugation")]
    TargetsNotConjugateClosed,
    /// Placement is implemented for single-input (single-output) systems.
    #[error("pole placement supports one input/output channel, got {got}")]
    MultiChannel { got: usize },
    /// One target eigenvalue per state is required.
    #[error("expected {expected} pole targets, got {got}")]
    WrongTargetCount { expected: usize, got: usize },
}

fn require_square(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(())
}

/// Largest eigenvalue modulus of a square matrix.
///
/// Triangular matrices are special-cased: their spectrum is the diagonal,
/// which avoids the O(√ε) accuracy loss iterative eigensolvers suffer on
/// defective repeated eigenvalues (the coupling matrices of acyclic
/// topologies are triangular and routinely defective).
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64, LinalgError> {
    require_square(m)?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let n = m.nrows();
    let lower_zero = (0..n).all(|j| (j + 1..n).all(|i| m[(i, j)] == 0.0));
    let upper_zero = (0..n).all(|i| (i + 1..n).all(|j| m[(i, j)] == 0.0));
    if lower_zero || upper_zero {
        return Ok(m.diagonal().iter().map(|d| d.abs()).fold(0.0, f64::max));
    }
    Ok(m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Whether every eigenvalue lies strictly inside the unit circle
/// (with margin [`SCHUR_MARGIN`]).
pub fn is_schur(m: &DMatrix<f64>) -> Result<bool, LinalgError> {
    Ok(spectral_radius(m)? < 1.0 - SCHUR_MARGIN)
}

/// Result of the observer coupling-gain test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingCheck {
    /// Whether the contraction condition holds.
    pub ok: bool,
    /// The tested quantity `ρ(S) · ρ(I − β(H + D_0))`.
    pub lhs: f64,
}

/// Tests the observer contraction condition `ρ(S) · ρ(I − β(H + D_0)) < 1`.
///
/// `hd0` is the already-summed coupling matrix `H + D_0`.
pub fn check_coupling_gain(
    s: &DMatrix<f64>,
    hd0: &DMatrix<f64>,
    beta: f64,
) -> Result<CouplingCheck, LinalgError> {
    require_square(s)?;
    require_square(hd0)?;
    if !beta.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = hd0.nrows();
    let contraction = DMatrix::identity(n, n) - hd0.scale(beta);
    let lhs = spectral_radius(s)? * spectral_radius(&contraction)?;
    Ok(CouplingCheck { ok: lhs < 1.0, lhs })
}

/// Solution of the discrete regulator equations
/// `X S = A X + B U`, `0 = C X + F`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorSolution {
    /// State correspondence `X` (n × q).
    pub x: DMatrix<f64>,
    /// Feedforward correspondence `U` (m × q).
    pub u: DMatrix<f64>,
    /// Frobenius residual of `X S − A X − B U`.
    pub residual_primary: f64,
    /// Frobenius residual of `C X + F`.
    pub residual_output: f64,
}

/// Solves the regulator equations by Kronecker vectorization and
/// minimum-norm least squares.
///
/// Stacking `vec(X)` and `vec(U)` (column-major) turns the pair of matrix
/// equations into one linear system:
///
/// ```text
/// [ Sᵀ ⊗ I_n − I_q ⊗ A   −I_q ⊗ B ] [vec(X)]   [   0    ]
/// [ I_q ⊗ C                   0    ] [vec(U)] = [−vec(F) ]
/// ```
///
/// solved via SVD. When the system is underdetermined the minimum-norm
/// solution is returned. Both residuals must come out at or below
/// [`REGULATOR_TOL`], otherwise [`LinalgError::NoSolution`] is raised.
pub fn solve_regulator(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    s: &DMatrix<f64>,
    f: &DMatrix<f64>,
) -> Result<RegulatorSolution, LinalgError> {
    require_square(a)?;
    require_square(s)?;
    let n = a.nrows();
    let q = s.nrows();
    let m = b.ncols();
    let p = c.nrows();
    if b.nrows() != n {
        return Err(LinalgError::ShapeMismatch {
            context: "solve_regulator B",
            expected: format!("{n}x{m}"),
            got: format!("{}x{}", b.nrows(), b.ncols()),
        });
    }
    if c.ncols() != n {
        return Err(LinalgError::ShapeMismatch {
            context: "solve_regulator C",
            expected: format!("{p}x{n}"),
            got: format!("{}x{}", c.nrows(), c.ncols()),
        });
    }
    if f.nrows() != p || f.ncols() != q {
        return Err(LinalgError::ShapeMismatch {
            context: "solve_regulator F",
            expected: format!("{p}x{q}"),
            got: format!("{}x{}", f.nrows(), f.ncols()),
        });
    }

    let eye_n = DMatrix::<f64>::identity(n, n);
    let eye_q = DMatrix::<f64>::identity(q, q);
    let nq = n * q;
    let mq = m * q;
    let pq = p * q;

    let mut sys = DMatrix::<f64>::zeros(nq + pq, nq + mq);
    sys.view_mut((0, 0), (nq, nq))
        .copy_from(&(s.transpose().kronecker(&eye_n) - eye_q.kronecker(a)));
    sys.view_mut((0, nq), (nq, mq))
        .copy_from(&(-eye_q.kronecker(b)));
    sys.view_mut((nq, 0), (pq, nq))
        .copy_from(&eye_q.kronecker(c));

    let mut rhs = DVector::<f64>::zeros(nq + pq);
    // vec(−F), column-major, into the output block.
    for (idx, val) in f.iter().enumerate() {
        rhs[nq + idx] = -val;
    }

    let svd = sys.svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = (sigma_max * 1e-12).max(f64::MIN_POSITIVE);
    let sol = svd
        .solve(&rhs, cutoff)
        .map_err(|_| LinalgError::NonFinite)?;

    let x = DMatrix::from_column_slice(n, q, sol.as_slice().get(..nq).unwrap());
    let u = DMatrix::from_column_slice(m, q, sol.as_slice().get(nq..).unwrap());
    let residual_primary = (&x * s - a * &x - b * &u).norm();
    let residual_output = (c * &x + f).norm();
    if residual_primary > REGULATOR_TOL || residual_output > REGULATOR_TOL {
        return Err(LinalgError::NoSolution {
            residual_primary,
            residual_output,
            tol: REGULATOR_TOL,
        });
    }
    Ok(RegulatorSolution {
        x,
        u,
        residual_primary,
        residual_output,
    })
}

/// Checks that a requested spectrum is closed under complex conjugation
/// and returns the real coefficients of the monic polynomial with those
/// roots, lowest degree first (so `coeffs[n] == 1`).
fn real_characteristic_coeffs(targets: &[Complex<f64>]) -> Result<Vec<f64>, LinalgError> {
    let tol = 1e-9;
    let mut unmatched: Vec<Complex<f64>> = targets
        .iter()
        .filter(|t| t.im.abs() > tol)
        .cloned()
        .collect();
    while let Some(t) = unmatched.pop() {
        let Some(pos) = unmatched
            .iter()
            .position(|u| (u - t.conj()).norm() <= tol * (1.0 + t.norm()))
        else {
            return Err(LinalgError::TargetsNotConjugateClosed);
        };
        unmatched.swap_remove(pos);
    }
    let mut coeffs = vec![Complex::new(1.0, 0.0)];
    for t in targets {
        let mut next = vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * t;
        }
        coeffs = next;
    }
    Ok(coeffs.iter().map(|c| c.re).collect())
}

/// Greedy modulus of the worst gap between two equally sized spectra.
fn spectrum_distance(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    let mut remaining: Vec<Complex<f64>> = b.to_vec();
    let mut worst = 0.0_f64;
    for t in a {
        let (idx, dist) = remaining
            .iter()
            .enumerate()
            .map(|(i, u)| (i, (u - t).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("spectra have equal size");
        worst = worst.max(dist);
        remaining.swap_remove(idx);
    }
    worst
}

/// Places the spectrum of `A + B K` at `targets` for a single-input pair,
/// returning the 1 × n gain `K` (Ackermann's formula).
///
/// Requested targets must be closed under conjugation; the realized
/// eigenvalues are verified against the request to 1e−6 and the
/// ill-conditioned case is reported as [`LinalgError::Uncontrollable`].
pub fn place_poles(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    targets: &[Complex<f64>],
) -> Result<DMatrix<f64>, LinalgError> {
    require_square(a)?;
    let n = a.nrows();
    if b.ncols() != 1 {
        return Err(LinalgError::MultiChannel { got: b.ncols() });
    }
    if b.nrows() != n {
        return Err(LinalgError::ShapeMismatch {
            context: "place_poles B",
            expected: format!("{n}x1"),
            got: format!("{}x{}", b.nrows(), b.ncols()),
        });
    }
    if targets.len() != n {
        return Err(LinalgError::WrongTargetCount {
            expected: n,
            got: targets.len(),
        });
    }
    let coeffs = real_characteristic_coeffs(targets)?;

    // Controllability matrix [B, AB, …, A^{n−1}B].
    let mut ctrl = DMatrix::<f64>::zeros(n, n);
    let mut col = b.column(0).clone_owned();
    for j in 0..n {
        ctrl.set_column(j, &col);
        col = a * col;
    }
    let svd_vals = ctrl.clone().singular_values();
    let smax = svd_vals.iter().cloned().fold(0.0, f64::max);
    let smin = svd_vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin <= smax * 1e-12 {
        return Err(LinalgError::Uncontrollable);
    }

    // Last row of ctrl⁻¹: solve ctrlᵀ w = e_n.
    let mut e_n = DVector::<f64>::zeros(n);
    e_n[n - 1] = 1.0;
    let w = ctrl
        .transpose()
        .lu()
        .solve(&e_n)
        .ok_or(LinalgError::Uncontrollable)?;

    // φ(A) by Horner: φ(A) = c_0 I + A (c_1 I + A (… + A c_n I)).
    let mut phi = DMatrix::<f64>::identity(n, n).scale(coeffs[n]);
    for j in (0..n).rev() {
        phi = a * phi + DMatrix::<f64>::identity(n, n).scale(coeffs[j]);
    }

    let k_row = -(w.transpose() * phi);
    let k = DMatrix::from_row_slice(1, n, k_row.as_slice().get(..n).unwrap());

    let realized = (a + b * &k).complex_eigenvalues();
    if spectrum_distance(targets, realized.as_slice()) > 1e-6 {
        return Err(LinalgError::Uncontrollable);
    }
    Ok(k)
}

/// Observer gain `L` such that `A − L C` has the requested spectrum, for a
/// single-output pair: the dual of [`place_poles`] applied to `(Aᵀ, Cᵀ)`,
/// negated to match the innovation form `x̂⁺ = A x̂ + B u + L (y − C x̂)`
/// whose estimation error evolves by `A − L C`.
pub fn observer_gain(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    targets: &[Complex<f64>],
) -> Result<DMatrix<f64>, LinalgError> {
    require_square(a)?;
    if c.nrows() != 1 {
        return Err(LinalgError::MultiChannel { got: c.nrows() });
    }
    if c.ncols() != a.nrows() {
        return Err(LinalgError::ShapeMismatch {
            context: "observer_gain C",
            expected: format!("1x{}", a.nrows()),
            got: format!("{}x{}", c.nrows(), c.ncols()),
        });
    }
    let k = place_poles(&a.transpose(), &c.transpose(), targets)?;
    Ok(-k.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cx(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn spectral_radius_of_rotation_is_one() {
        let th = 1.2 * std::f64::consts::PI;
        let s = DMatrix::from_row_slice(2, 2, &[th.cos(), th.sin(), -th.sin(), th.cos()]);
        assert_relative_eq!(spectral_radius(&s).unwrap(), 1.0, max_relative = 1e-10);
        assert!(!is_schur(&s).unwrap());
        assert!(is_schur(&s.scale(0.999)).unwrap());
    }

    #[test]
    fn spectral_radius_rejects_bad_input() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert_eq!(
            spectral_radius(&m).unwrap_err(),
            LinalgError::NonSquare { rows: 1, cols: 2 }
        );
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert_eq!(spectral_radius(&m).unwrap_err(), LinalgError::NonFinite);
    }

    /// Coupling condition on the benchmark coupling matrix: for a rotation
    /// reference (ρ(S) = 1) and the lower-triangular H + D0 with diagonal
    /// {1, 2, 1, 3}, the test quantity is max_i |1 − β d_i|.
    #[test]
    fn coupling_gain_on_benchmark() {
        let th = 1.2 * std::f64::consts::PI;
        let s = DMatrix::from_row_slice(2, 2, &[th.cos(), th.sin(), -th.sin(), th.cos()]);
        let hd0 = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                -1.0, 2.0, 0.0, 0.0, //
                -1.0, 0.0, 1.0, 0.0, //
                -1.0, -1.0, -1.0, 3.0,
            ],
        );
        let at = |beta: f64| check_coupling_gain(&s, &hd0, beta).unwrap();
        let c = at(0.25);
        assert!(c.ok);
        assert_relative_eq!(c.lhs, 0.75, epsilon = 1e-9);
        let c0 = at(0.0);
        assert!(!c0.ok);
        assert_relative_eq!(c0.lhs, 1.0, epsilon = 1e-9);
        let c1 = at(1.0);
        assert!(!c1.ok);
        assert_relative_eq!(c1.lhs, 2.0, epsilon = 1e-9);

        // The grid scan β ∈ {0, 0.05, …, 1} is unimodal with minimum at 0.5.
        let mut best = (f64::INFINITY, 0.0);
        let mut values = Vec::new();
        for i in 0..=20 {
            let beta = i as f64 * 0.05;
            let lhs = at(beta).lhs;
            values.push(lhs);
            if lhs < best.0 {
                best = (lhs, beta);
            }
        }
        assert_relative_eq!(best.1, 0.5, epsilon = 1e-12);
        assert_relative_eq!(best.0, 0.5, epsilon = 1e-9);
        let min_idx = 10;
        for i in 1..=min_idx {
            assert!(values[i] <= values[i - 1] + 1e-12);
        }
        for i in min_idx..20 {
            assert!(values[i + 1] >= values[i] - 1e-12);
        }
    }

    #[test]
    fn regulator_solves_scalar_integrator() {
        // x' = x + u tracking the scalar reference v' = 2v with e = x − v:
        // X·2 = X + U and X = 1 give X = 1, U = 1.
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let b = DMatrix::from_row_slice(1, 1, &[1.0]);
        let c = DMatrix::from_row_slice(1, 1, &[1.0]);
        let s = DMatrix::from_row_slice(1, 1, &[2.0]);
        let f = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let sol = solve_regulator(&a, &b, &c, &s, &f).unwrap();
        assert_relative_eq!(sol.x[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.u[(0, 0)], 1.0, epsilon = 1e-12);
        assert!(sol.residual_primary <= REGULATOR_TOL);
        assert!(sol.residual_output <= REGULATOR_TOL);
    }

    #[test]
    fn regulator_detects_unsolvable_system() {
        // A = 0, B = 0, C = 1, S = 2, F = 1: output equation forces X = −1,
        // but the dynamics equation needs X·2 = 0.
        let zero = DMatrix::from_row_slice(1, 1, &[0.0]);
        let one = DMatrix::from_row_slice(1, 1, &[1.0]);
        let two = DMatrix::from_row_slice(1, 1, &[2.0]);
        let err = solve_regulator(&zero, &zero, &one, &two, &one).unwrap_err();
        assert!(matches!(err, LinalgError::NoSolution { .. }));
    }

    #[test]
    fn place_poles_double_integrator() {
        // A = [[1,1],[0,1]], B = [0;1], targets {0.5, 0.5}: the closed loop
        // must have characteristic polynomial z² − z + 0.25.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let k = place_poles(&a, &b, &[cx(0.5, 0.0), cx(0.5, 0.0)]).unwrap();
        let cl = &a + &b * &k;
        // trace = 1, det = 0.25.
        assert_relative_eq!(cl.trace(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(cl.determinant(), 0.25, epsilon = 1e-9);
        for ev in cl.complex_eigenvalues().iter() {
            assert_relative_eq!(ev.re, 0.5, epsilon = 1e-6);
            assert!(ev.im.abs() < 1e-6);
        }
    }

    #[test]
    fn place_poles_complex_pair_and_closure_check() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.3, 0.8]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let targets = [cx(0.3, 0.4), cx(0.3, -0.4)];
        let k = place_poles(&a, &b, &targets).unwrap();
        let got = (&a + &b * &k).complex_eigenvalues();
        assert!(spectrum_distance(&targets, got.as_slice()) < 1e-6);

        let err = place_poles(&a, &b, &[cx(0.3, 0.4), cx(0.3, 0.4)]).unwrap_err();
        assert_eq!(err, LinalgError::TargetsNotConjugateClosed);
    }

    #[test]
    fn place_poles_rejects_uncontrollable_pair() {
        // Second state unreachable: A diagonal, B touches only the first.
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.7]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let err = place_poles(&a, &b, &[cx(0.1, 0.0), cx(0.2, 0.0)]).unwrap_err();
        assert_eq!(err, LinalgError::Uncontrollable);
    }

    #[test]
    fn observer_gain_places_dual_spectrum() {
        // A = [[1,1],[0,1]], C = [1,0], targets {0.5, 0.5}: A − LC must have
        // characteristic polynomial z² − z + 0.25.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let l = observer_gain(&a, &c, &[cx(0.5, 0.0), cx(0.5, 0.0)]).unwrap();
        let cl = &a - &l * &c;
        assert_relative_eq!(cl.trace(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(cl.determinant(), 0.25, epsilon = 1e-9);
    }

    /// Characteristic coefficients from targets match the coefficients of
    /// the realized closed loop for a randomized stable spectrum.
    #[test]
    fn placed_char_poly_matches_targets() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.3, -0.2, 0.5]);
        let b = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let targets = [cx(0.2, 0.0), cx(0.1, 0.3), cx(0.1, -0.3)];
        let k = place_poles(&a, &b, &targets).unwrap();
        let want = real_characteristic_coeffs(&targets).unwrap();
        let got =
            real_characteristic_coeffs((&a + &b * &k).complex_eigenvalues().as_slice()).unwrap();
        for (w, g) in want.iter().zip(got.iter()) {
            assert_relative_eq!(w, g, epsilon = 1e-6);
        }
    }
}
