//! Dense finite-difference reference tooling.
//!
//! Everything here is deliberately brute force: build the full residual
//! Jacobian column by column, solve it with plain elimination, measure its
//! symmetry. The point is an independent answer to compare the matrix-free
//! path and the sparse preconditioner against at desk scale, so none of it
//! shares code with either.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::horizon::{assemble_residual, ControlVector};
use crate::model::OcpModel;

/// Refuse to build dense Jacobians past this many unknowns; the quadratic
/// memory and cubic solve are reference tools, not a production path.
pub const MAX_DENSE_DIM: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdMode {
    /// One-sided differences, first-order error.
    Forward,
    /// Symmetric differences, second-order error.
    Central,
}

/// Jacobian of the optimality residual with respect to the stacked unknowns,
/// one finite-difference solve per column.
pub fn build_dense_jacobian<M: OcpModel + ?Sized>(
    model: &M,
    u: &ControlVector,
    x0: &[f64],
    t: f64,
    step: f64,
    mode: FdMode,
) -> Result<DMatrix<f64>> {
    let m = model.dims().unknowns();
    if m > MAX_DENSE_DIM {
        return Err(Error::DenseGuard {
            dim: m,
            limit: MAX_DENSE_DIM,
        });
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::NonFinite {
            what: "finite-difference step".to_string(),
        });
    }

    let base = match mode {
        FdMode::Forward => Some(assemble_residual(model, u, x0, t)?.0),
        FdMode::Central => None,
    };

    let mut jacobian = DMatrix::zeros(m, m);
    let mut direction = DVector::zeros(m);
    for k in 0..m {
        direction[k] = 1.0;
        let plus = assemble_residual(model, &u.added(&direction, step)?, x0, t)?.0;
        let column = match mode {
            FdMode::Forward => (plus - base.as_ref().unwrap()) / step,
            FdMode::Central => {
                let minus = assemble_residual(model, &u.added(&direction, -step)?, x0, t)?.0;
                (plus - minus) / (2.0 * step)
            }
        };
        jacobian.set_column(k, &column);
        direction[k] = 0.0;
    }
    Ok(jacobian)
}

/// Largest entrywise gap between a matrix and its transpose.
pub fn symmetry_defect(matrix: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..matrix.nrows() {
        for j in (i + 1)..matrix.ncols() {
            worst = worst.max((matrix[(i, j)] - matrix[(j, i)]).abs());
        }
    }
    worst
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting. Kept
/// hand-rolled so the reference solve does not route through the same
/// factorization code the preconditioner uses.
pub fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension {
            what: "square system",
            expected: n,
            actual: a.ncols(),
        });
    }
    if b.len() != n {
        return Err(Error::Dimension {
            what: "right-hand side",
            expected: n,
            actual: b.len(),
        });
    }
    if n > MAX_DENSE_DIM {
        return Err(Error::DenseGuard {
            dim: n,
            limit: MAX_DENSE_DIM,
        });
    }

    let mut work = a.clone();
    let mut rhs = b.clone();
    let scale = work.amax().max(1.0);
    let floor = 1e-14 * scale;

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = work[(col, col)].abs();
        for row in (col + 1)..n {
            let candidate = work[(row, col)].abs();
            if candidate > pivot_val {
                pivot_val = candidate;
                pivot_row = row;
            }
        }
        if !pivot_val.is_finite() || pivot_val < floor {
            return Err(Error::Singular {
                what: format!("dense elimination pivot at column {col}"),
            });
        }
        if pivot_row != col {
            work.swap_rows(pivot_row, col);
            rhs.swap_rows(pivot_row, col);
        }
        let pivot = work[(col, col)];
        for row in (col + 1)..n {
            let factor = work[(row, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                work[(row, j)] -= factor * work[(col, j)];
            }
            rhs[row] -= factor * rhs[col];
        }
    }

    let mut x = DVector::zeros(n);
    for row in (0..n).rev() {
        let mut sum = rhs[row];
        for j in (row + 1)..n {
            sum -= work[(row, j)] * x[j];
        }
        x[row] = sum / work[(row, row)];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "dense solution".to_string(),
        });
    }
    Ok(x)
}

/// Write a matrix as whitespace-separated rows for offline inspection.
pub fn write_matrix(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            if j > 0 {
                write!(out, " ")?;
            }
            write!(out, "{}", matrix[(i, j)])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MinTimeModel, ProblemDims};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Single-gridpoint model whose residual is affine in the unknowns, so
    /// finite differences of any step recover the Jacobian exactly. With
    /// dtau = 1 the rows are
    /// `[2 u + 3 mu + 1 + nu, u - 0.5, x0 + u - 2]`.
    struct AffineModel;

    impl OcpModel for AffineModel {
        fn dims(&self) -> ProblemDims {
            ProblemDims {
                state: 1,
                control: 1,
                constraint: 1,
                terminal: 1,
                parameter: 0,
                gridpoints: 1,
            }
        }
        fn initial_state(&self) -> Vec<f64> {
            vec![0.0]
        }
        fn dynamics(&self, _: f64, _: f64, _: &[f64], u: &[f64], _: &[f64]) -> Vec<f64> {
            vec![u[0]]
        }
        fn plant_dynamics(&self, _: f64, _: &[f64], u: &[f64], _: &[f64]) -> Vec<f64> {
            vec![u[0]]
        }
        fn constraint(&self, _: f64, _: f64, _: &[f64], u: &[f64], _: &[f64]) -> Vec<f64> {
            vec![u[0] - 0.5]
        }
        fn running_cost(&self, _: f64, _: f64, _: &[f64], _: &[f64], _: &[f64]) -> f64 {
            0.0
        }
        fn terminal_cost(&self, _: &[f64], _: &[f64]) -> f64 {
            0.0
        }
        fn terminal_constraint(&self, x: &[f64], _: &[f64]) -> Vec<f64> {
            vec![x[0] - 2.0]
        }
        fn hamiltonian_x(&self, _: f64, _: f64, _: &[f64], _: &[f64], _: &[f64], _: &[f64], _: &[f64]) -> Vec<f64> {
            vec![0.0]
        }
        fn hamiltonian_u(&self, _: f64, _: f64, _: &[f64], lambda: &[f64], u: &[f64], mu: &[f64], _: &[f64]) -> Vec<f64> {
            vec![2.0 * u[0] + 3.0 * mu[0] + lambda[0]]
        }
        fn hamiltonian_p(&self, _: f64, _: f64, _: &[f64], _: &[f64], _: &[f64], _: &[f64], _: &[f64]) -> Vec<f64> {
            Vec::new()
        }
        fn terminal_cost_x(&self, _: &[f64], _: &[f64]) -> Vec<f64> {
            vec![1.0]
        }
        fn terminal_cost_p(&self, _: &[f64], _: &[f64]) -> Vec<f64> {
            Vec::new()
        }
        fn terminal_constraint_x(&self, _: &[f64], _: &[f64]) -> DMatrix<f64> {
            DMatrix::identity(1, 1)
        }
        fn terminal_constraint_p(&self, _: &[f64], _: &[f64]) -> DMatrix<f64> {
            DMatrix::zeros(1, 0)
        }
        fn state_labels(&self) -> Vec<String> {
            vec!["x".into()]
        }
        fn control_labels(&self) -> Vec<String> {
            vec!["u".into()]
        }
    }

    #[test]
    fn affine_jacobian_matches_the_written_out_rows() {
        let model = AffineModel;
        let mut u = ControlVector::zeros(model.dims()).unwrap();
        u.control_mut(0)[0] = 0.7;
        u.multiplier_mut(0)[0] = 0.1;
        u.terminal_multiplier_mut()[0] = -0.4;
        let j = build_dense_jacobian(&model, &u, &[0.0], 0.0, 1e-6, FdMode::Central).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[2.0, 3.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!((j - expected).abs().max() < 1e-9);
    }

    #[test]
    fn dense_solve_matches_a_library_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [3usize, 10, 30] {
            let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            for i in 0..n {
                a[(i, i)] += 2.0 + n as f64 / 4.0;
            }
            let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let expected = a.clone().lu().solve(&b).unwrap();
            let got = dense_solve(&a, &b).unwrap();
            assert!((got - expected).norm() < 1e-10);
        }
    }

    #[test]
    fn dense_solve_pivots_across_rows() {
        // Leading zero forces a swap before elimination can start.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let b = DVector::from_column_slice(&[3.0, 5.0]);
        let x = dense_solve(&a, &b).unwrap();
        assert_eq!(x.as_slice(), &[5.0, 3.0]);
    }

    #[test]
    fn dense_solve_reports_singular_systems() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_column_slice(&[1.0, 1.0]);
        assert!(matches!(dense_solve(&a, &b), Err(Error::Singular { .. })));
    }

    #[test]
    fn dimension_guard_refuses_oversized_systems() {
        let n = MAX_DENSE_DIM + 1;
        let a = DMatrix::<f64>::zeros(n, n);
        let b = DVector::zeros(n);
        assert!(matches!(dense_solve(&a, &b), Err(Error::DenseGuard { .. })));
    }

    #[test]
    fn affine_residual_gives_step_independent_jacobians() {
        let model = AffineModel;
        let mut u = ControlVector::zeros(model.dims()).unwrap();
        u.control_mut(0)[0] = 0.3;
        u.multiplier_mut(0)[0] = -0.2;
        u.terminal_multiplier_mut()[0] = 0.5;
        let coarse = build_dense_jacobian(&model, &u, &[0.0], 0.0, 1e-2, FdMode::Central).unwrap();
        let fine = build_dense_jacobian(&model, &u, &[0.0], 0.0, 1e-7, FdMode::Central).unwrap();
        assert!((coarse - fine).abs().max() < 1e-7);
    }

    #[test]
    fn central_differences_in_each_mode_agree_to_first_order() {
        let model = MinTimeModel::new(5);
        let u = ControlVector::from_slice(model.dims(), &model.initial_guess(0.0, &[0.0, 0.0])).unwrap();
        let central = build_dense_jacobian(&model, &u, &[0.0, 0.0], 0.0, 1e-5, FdMode::Central).unwrap();
        let forward = build_dense_jacobian(&model, &u, &[0.0, 0.0], 0.0, 1e-7, FdMode::Forward).unwrap();
        assert!((central - forward).abs().max() < 1e-5);
    }

    #[test]
    fn forward_symmetry_defect_shrinks_linearly_with_the_step() {
        let model = MinTimeModel::new(5);
        let u = ControlVector::from_slice(model.dims(), &model.initial_guess(0.0, &[0.0, 0.0])).unwrap();
        let coarse = build_dense_jacobian(&model, &u, &[0.0, 0.0], 0.0, 1e-3, FdMode::Forward).unwrap();
        let fine = build_dense_jacobian(&model, &u, &[0.0, 0.0], 0.0, 1e-4, FdMode::Forward).unwrap();
        let ratio = symmetry_defect(&coarse) / symmetry_defect(&fine);
        assert!((5.0..=20.0).contains(&ratio), "defect ratio {ratio}");
    }

    #[test]
    fn matrix_dump_round_trips_through_parsing() {
        let dir = std::env::temp_dir().join("oracle_dump_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("matrix.txt");
        let m = DMatrix::from_row_slice(2, 3, &[1.5, -2.25, 0.0, 1e-9, 3.0, -0.125]);
        write_matrix(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed: Vec<Vec<f64>> = text
            .lines()
            .map(|line| line.split(' ').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(parsed.len(), 2);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(parsed[i][j], m[(i, j)]);
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
