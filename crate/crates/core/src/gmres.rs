//! Restart-free GMRES with left preconditioning.
//!
//! The solver only sees operators: `LinearOperator` applies `A v`, and
//! `Preconditioner` applies `M^{-1} v`. The Arnoldi basis is built with
//! modified Gram-Schmidt, the Hessenberg least-squares problem is kept
//! triangular with incremental Givens rotations, and the residual estimate
//! falls out of the rotated right-hand side without forming `A x`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Matrix-vector product abstraction.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Application of an approximate inverse.
pub trait Preconditioner {
    fn dim(&self) -> usize;
    fn apply_inverse(&self, v: &DVector<f64>) -> Result<DVector<f64>>;
}

/// No preconditioning.
pub struct Identity {
    pub dim: usize,
}

impl Preconditioner for Identity {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply_inverse(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(v.clone())
    }
}

/// Explicit matrix as an operator, mostly for tests and the dense reference
/// path.
pub struct DenseOperator {
    matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension {
                what: "square operator",
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        Ok(DenseOperator { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.matrix.ncols() {
            return Err(Error::Dimension {
                what: "operator input",
                expected: self.matrix.ncols(),
                actual: v.len(),
            });
        }
        Ok(&self.matrix * v)
    }
}

#[derive(Clone, Debug)]
pub struct GmresOptions {
    /// Krylov dimension cap.
    pub max_iterations: usize,
    /// Relative drop of the preconditioned residual that stops the iteration.
    pub tolerance: f64,
    /// Run exactly `max_iterations` steps, ignoring `tolerance`. Breakdown
    /// still stops early because the Krylov space cannot grow further.
    pub fixed_iterations: bool,
    /// Second orthogonalization pass per Arnoldi step.
    pub reorthogonalize: bool,
    /// Keep the basis and Hessenberg matrix in the report.
    pub capture_basis: bool,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            max_iterations: 100,
            tolerance: 1e-8,
            fixed_iterations: false,
            reorthogonalize: false,
            capture_basis: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresReport {
    pub solution: DVector<f64>,
    pub iterations: usize,
    /// Estimated preconditioned residual norm at exit.
    pub residual: f64,
    /// The Krylov space closed before the iteration cap.
    pub breakdown: bool,
    /// Residual estimate after each completed iteration, starting with the
    /// initial norm.
    pub residual_history: Vec<f64>,
    /// Orthonormal basis columns, when captured.
    pub basis: Option<DMatrix<f64>>,
    /// The (k+1) x k Hessenberg matrix, when captured.
    pub hessenberg: Option<DMatrix<f64>>,
}

const BREAKDOWN_FLOOR: f64 = 1e-14;

/// Solve the projected least-squares problem `min || beta e_1 - H y ||` for
/// an upper-Hessenberg `H` of size (k+1) x k. Returns the coefficients and
/// the attained residual. This is the non-incremental reference used to
/// cross-check the rotation updates inside [`solve`].
pub fn hessenberg_least_squares(h: &DMatrix<f64>, beta: f64) -> Result<(DVector<f64>, f64)> {
    let k = h.ncols();
    if h.nrows() != k + 1 {
        return Err(Error::Dimension {
            what: "hessenberg rows",
            expected: k + 1,
            actual: h.nrows(),
        });
    }
    let mut r = h.clone();
    let mut g = DVector::zeros(k + 1);
    g[0] = beta;
    for col in 0..k {
        // Eliminate the subdiagonal of this column against the diagonal.
        let (a, b) = (r[(col, col)], r[(col + 1, col)]);
        let norm = a.hypot(b);
        if norm == 0.0 {
            continue;
        }
        let (c, s) = (a / norm, b / norm);
        for j in col..k {
            let (top, bottom) = (r[(col, j)], r[(col + 1, j)]);
            r[(col, j)] = c * top + s * bottom;
            r[(col + 1, j)] = -s * top + c * bottom;
        }
        let (top, bottom) = (g[col], g[col + 1]);
        g[col] = c * top + s * bottom;
        g[col + 1] = -s * top + c * bottom;
    }
    let mut y = DVector::zeros(k);
    for row in (0..k).rev() {
        let mut sum = g[row];
        for j in row + 1..k {
            sum -= r[(row, j)] * y[j];
        }
        let pivot = r[(row, row)];
        if pivot.abs() < BREAKDOWN_FLOOR {
            return Err(Error::Singular {
                what: format!("projected system pivot at column {row}"),
            });
        }
        y[row] = sum / pivot;
    }
    Ok((y, g[k].abs()))
}

pub fn solve(
    operator: &dyn LinearOperator,
    preconditioner: &dyn Preconditioner,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    options: &GmresOptions,
) -> Result<GmresReport> {
    let n = operator.dim();
    if b.len() != n {
        return Err(Error::Dimension {
            what: "right-hand side",
            expected: n,
            actual: b.len(),
        });
    }
    if x0.len() != n {
        return Err(Error::Dimension {
            what: "initial iterate",
            expected: n,
            actual: x0.len(),
        });
    }
    if preconditioner.dim() != n {
        return Err(Error::Dimension {
            what: "preconditioner",
            expected: n,
            actual: preconditioner.dim(),
        });
    }
    let kmax = options.max_iterations.min(n);

    let r0 = b - operator.apply(x0)?;
    let z0 = preconditioner.apply_inverse(&r0)?;
    let beta = z0.norm();
    if !beta.is_finite() {
        return Err(Error::NonFinite {
            what: "preconditioned residual".to_string(),
        });
    }
    if beta == 0.0 || kmax == 0 {
        return Ok(GmresReport {
            solution: x0.clone(),
            iterations: 0,
            residual: beta,
            breakdown: beta == 0.0,
            residual_history: vec![beta],
            basis: options.capture_basis.then(|| DMatrix::zeros(n, 0)),
            hessenberg: options.capture_basis.then(|| DMatrix::zeros(1, 0)),
        });
    }

    let mut basis: Vec<DVector<f64>> = vec![&z0 / beta];
    // Column-compressed Hessenberg entries: h_cols[j] holds the rotated
    // column j (j+2 values); h_raw keeps the unrotated copy for capture mode.
    let mut h_cols: Vec<Vec<f64>> = Vec::new();
    let mut h_raw: Vec<Vec<f64>> = Vec::new();
    let mut cos: Vec<f64> = Vec::new();
    let mut sin: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut history = vec![beta];
    let mut breakdown = false;
    let mut iterations = 0;

    for k in 0..kmax {
        let mut z = preconditioner.apply_inverse(&operator.apply(&basis[k])?)?;
        let mut col = Vec::with_capacity(k + 2);
        for v in basis.iter() {
            let coeff = z.dot(v);
            z.axpy(-coeff, v, 1.0);
            col.push(coeff);
        }
        if options.reorthogonalize {
            for (j, v) in basis.iter().enumerate() {
                let coeff = z.dot(v);
                z.axpy(-coeff, v, 1.0);
                col[j] += coeff;
            }
        }
        let h_next = z.norm();
        if !h_next.is_finite() {
            return Err(Error::NonFinite {
                what: format!("arnoldi vector at iteration {}", k + 1),
            });
        }
        col.push(h_next);
        if options.capture_basis {
            h_raw.push(col.clone());
        }

        // Apply the accumulated rotations to the new column, then create one
        // more to zero its subdiagonal.
        for j in 0..k {
            let (top, bottom) = (col[j], col[j + 1]);
            col[j] = cos[j] * top + sin[j] * bottom;
            col[j + 1] = -sin[j] * top + cos[j] * bottom;
        }
        let (a, b_entry) = (col[k], col[k + 1]);
        let norm = a.hypot(b_entry);
        let (c, s) = if norm == 0.0 { (1.0, 0.0) } else { (a / norm, b_entry / norm) };
        col[k] = norm;
        col[k + 1] = 0.0;
        cos.push(c);
        sin.push(s);
        g.push(-s * g[k]);
        g[k] *= c;
        h_cols.push(col);

        iterations = k + 1;
        let estimate = g[k + 1].abs();
        history.push(estimate);

        if h_next < BREAKDOWN_FLOOR * beta {
            breakdown = true;
            break;
        }
        basis.push(z / h_next);
        if !options.fixed_iterations && estimate <= options.tolerance * beta {
            break;
        }
    }

    // Back-substitute the triangularized projected system.
    let k = iterations;
    let mut y = vec![0.0; k];
    for row in (0..k).rev() {
        let mut sum = g[row];
        for j in row + 1..k {
            sum -= h_cols[j][row] * y[j];
        }
        let pivot = h_cols[row][row];
        if pivot.abs() < BREAKDOWN_FLOOR {
            return Err(Error::Singular {
                what: format!("projected system pivot at column {row}"),
            });
        }
        y[row] = sum / pivot;
    }
    let mut solution = x0.clone();
    for (j, yj) in y.iter().enumerate() {
        solution.axpy(*yj, &basis[j], 1.0);
    }
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "gmres solution".to_string(),
        });
    }

    let captured = options.capture_basis.then(|| {
        let mut v = DMatrix::zeros(n, basis.len());
        for (j, col) in basis.iter().enumerate() {
            v.set_column(j, col);
        }
        v
    });
    let hessenberg = options.capture_basis.then(|| {
        let mut h = DMatrix::zeros(k + 1, k);
        for (j, col) in h_raw.iter().enumerate() {
            for (i, entry) in col.iter().enumerate() {
                h[(i, j)] = *entry;
            }
        }
        h
    });

    Ok(GmresReport {
        solution,
        iterations,
        residual: g[k].abs(),
        breakdown,
        residual_history: history,
        basis: captured,
        hessenberg,
    })
}
