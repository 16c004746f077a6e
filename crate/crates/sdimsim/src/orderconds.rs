//! Order-condition matrices, residuals, error constants and stability
//! objects for variable-stepsize tableaus.
//!
//! The two residual relations checked here are
//!
//! ```text
//! C = A C K + Abar C K^2 + U B T        (stage order)
//! B̂ = B C K + Bbar C K^2 + V B T        (output order),  B̂ = beta T̂
//! ```
//!
//! where `T` collects scaled Taylor rows of the past grid points, `T̂`
//! prepends the forward Taylor row, `C` holds powers of the abscissae and
//! `K` is the nilpotent shift. A tableau has order and stage order `p`
//! exactly when both residuals vanish.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::types::{StepRatios, Tableau};

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// The matrices entering the order conditions, all evaluated at one ratio
/// vector and abscissa vector.
#[derive(Clone, Debug)]
pub struct TaylorMatrices {
    /// `(rho+1) x (p+1)`; row `l`, column `j` is `(-s_l)^j / j!` with
    /// `s_l` the cumulative ratio sum back to `x_{n-l}`.
    pub t: Matrix,
    /// `(rho+1) x (p+1)`; forward Taylor row `E_1` over the first `rho`
    /// rows of `t`.
    pub that: Matrix,
    /// `s x (p+1)` powers of the abscissae: column `j` is `c^j / j!`.
    pub cmat: Matrix,
    /// `(p+1) x (p+1)` nilpotent upper shift.
    pub k: Matrix,
    /// `exp(k)`: entries `1/(j-i)!` for `j >= i`.
    pub e: Matrix,
}

/// Column `j = 0..cols` of the Taylor block for one expansion point `-s`.
fn taylor_row(s: f64, cols: usize) -> Vec<f64> {
    (0..cols).map(|j| (-s).powi(j as i32) / factorial(j)).collect()
}

pub fn taylor_matrices(p: usize, sigma: &StepRatios, c: &[f64]) -> Result<TaylorMatrices> {
    let rho = sigma.len();
    if p == 0 {
        return Err(Error::InvalidOrder(0));
    }
    if c.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "taylor_matrices abscissae",
            expected: 1,
            got: 0,
        });
    }
    let cols = p + 1;
    let sums = sigma.cumulative();

    let t = Matrix::from_nested(sums.iter().map(|&s| taylor_row(s, cols)).collect());
    let e1: Vec<f64> = (0..cols).map(|j| 1.0 / factorial(j)).collect();
    let mut that_rows = vec![e1];
    for l in 0..rho {
        that_rows.push(t.row(l).to_vec());
    }
    let that = Matrix::from_nested(that_rows);

    let cmat = Matrix::from_nested(
        c.iter()
            .map(|&ci| (0..cols).map(|j| ci.powi(j as i32) / factorial(j)).collect())
            .collect(),
    );

    let mut k = Matrix::zeros(cols, cols);
    for j in 1..cols {
        k[(j - 1, j)] = 1.0;
    }
    let mut e = Matrix::zeros(cols, cols);
    for i in 0..cols {
        for j in i..cols {
            e[(i, j)] = 1.0 / factorial(j - i);
        }
    }

    Ok(TaylorMatrices { t, that, cmat, k, e })
}

/// Residual of the stage-order relation with an explicit `beta`
/// (`r x (rho+1)`).
pub fn stage_residual_with_beta(t: &Tableau, beta: &Matrix) -> Matrix {
    let tm = taylor_matrices(t.p, &t.sigma, &t.c).expect("valid tableau dimensions");
    let ck = tm.cmat.matmul(&tm.k);
    let ck2 = ck.matmul(&tm.k);
    let bt = beta.matmul(&tm.t);
    tm.cmat
        .sub(&t.a.matmul(&ck))
        .sub(&t.abar.matmul(&ck2))
        .sub(&t.u.matmul(&bt))
}

/// Residual of the stage-order relation with `beta = I`.
pub fn stage_residual(t: &Tableau) -> Matrix {
    stage_residual_with_beta(t, &Matrix::identity(t.inputs()))
}

/// Residual of the output-order relation with an explicit `beta`.
pub fn output_residual_with_beta(t: &Tableau, beta: &Matrix) -> Matrix {
    let tm = taylor_matrices(t.p, &t.sigma, &t.c).expect("valid tableau dimensions");
    let ck = tm.cmat.matmul(&tm.k);
    let ck2 = ck.matmul(&tm.k);
    beta.matmul(&tm.that)
        .sub(&t.b.matmul(&ck))
        .sub(&t.bbar.matmul(&ck2))
        .sub(&t.v.matmul(&beta.matmul(&tm.t)))
}

/// Residual of the output-order relation with `beta = I`.
pub fn output_residual(t: &Tableau) -> Matrix {
    output_residual_with_beta(t, &Matrix::identity(t.inputs()))
}

/// Leading local-truncation-error vector `phi_p(sigma)`: the output defect
/// against the `h^{p+1} y^{(p+1)}` term once the order conditions hold.
pub fn error_constant(t: &Tableau) -> Vec<f64> {
    let p = t.p;
    let fp1 = factorial(p + 1);
    let sums = t.sigma.cumulative();

    // Extension columns of T and T-hat to power p+1.
    let t_ext: Vec<f64> = sums.iter().map(|&s| (-s).powi(p as i32 + 1) / fp1).collect();
    let mut that_ext = Vec::with_capacity(t.inputs());
    that_ext.push(1.0 / fp1);
    that_ext.extend_from_slice(&t_ext[..t.inputs() - 1]);

    let cp: Vec<f64> = t.c.iter().map(|&ci| ci.powi(p as i32) / factorial(p)).collect();
    let cpm1: Vec<f64> = t
        .c
        .iter()
        .map(|&ci| {
            if p >= 2 {
                ci.powi(p as i32 - 1) / factorial(p - 1)
            } else {
                1.0
            }
        })
        .collect();

    let bcp = t.b.apply(&cp);
    let bbcpm1 = t.bbar.apply(&cpm1);
    let vt = t.v.apply(&t_ext);
    (0..t.inputs())
        .map(|i| that_ext[i] - bcp[i] - bbcpm1[i] - vt[i])
        .collect()
}

/// Scalar method error constant: the component of `phi_p` that survives
/// propagation through the rank-one `V`, i.e. `v^T phi_p`.
pub fn scalar_error_constant(t: &Tableau) -> f64 {
    let phi = error_constant(t);
    t.v_row().iter().zip(&phi).map(|(v, p)| v * p).sum()
}

/// Propagation matrix `M(z; sigma) = V + (zB + z^2 Bbar)(I - zA - z^2 Abar)^{-1} U`
/// on the scalar test problem. For the explicit tableaus here the inverse
/// is a unit lower triangular solve.
pub fn propagation_matrix(t: &Tableau, z: Complex64) -> Vec<Vec<Complex64>> {
    let s = t.stages();
    let r = t.inputs();
    let z2 = z * z;
    // Solve (I - zA - z^2 Abar) X = U column by column (forward substitution).
    let mut x = vec![vec![Complex64::new(0.0, 0.0); r]; s];
    for j in 0..r {
        for i in 0..s {
            let mut acc = Complex64::new(t.u[(i, j)], 0.0);
            for k in 0..i {
                acc += (z * t.a[(i, k)] + z2 * t.abar[(i, k)]) * x[k][j];
            }
            x[i][j] = acc;
        }
    }
    let mut m = vec![vec![Complex64::new(0.0, 0.0); r]; r];
    for i in 0..r {
        for j in 0..r {
            let mut acc = Complex64::new(t.v[(i, j)], 0.0);
            for k in 0..s {
                acc += (z * t.b[(i, k)] + z2 * t.bbar[(i, k)]) * x[k][j];
            }
            m[i][j] = acc;
        }
    }
    m
}

/// Determinant of a small complex matrix by Gaussian elimination.
pub fn complex_det(m: &[Vec<Complex64>]) -> Complex64 {
    let n = m.len();
    let mut a: Vec<Vec<Complex64>> = m.to_vec();
    let mut det = Complex64::new(1.0, 0.0);
    for k in 0..n {
        let mut piv = k;
        let mut best = a[k][k].norm();
        for i in k + 1..n {
            if a[i][k].norm() > best {
                best = a[i][k].norm();
                piv = i;
            }
        }
        if best == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if piv != k {
            a.swap(k, piv);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                let akj = a[k][j];
                a[i][j] -= f * akj;
            }
        }
    }
    det
}

/// Result of multiplying a sequence of rank-one `V` factors.
#[derive(Clone, Debug)]
pub struct ZeroStabilityReport {
    /// Infinity norm of the accumulated product.
    pub product_inf_norm: f64,
    /// Largest entrywise deviation of the product from `e v^T` with `v`
    /// taken from the last-applied factor.
    pub rank_one_deviation: f64,
    /// The `v` row of the last-applied factor.
    pub v_last: Vec<f64>,
}

impl ZeroStabilityReport {
    pub fn collapses(&self, tol: f64) -> bool {
        self.rank_one_deviation <= tol
    }
}

/// Multiplies `V(sigma_1) * V(sigma_2) * ...` left to right and verifies the
/// product collapses to the single rank-one factor `e v(sigma_last)^T`.
pub fn zero_stability_product<F>(factory: F, sigmas: &[StepRatios]) -> Result<ZeroStabilityReport>
where
    F: Fn(&StepRatios) -> Result<Tableau>,
{
    assert!(!sigmas.is_empty());
    let first = factory(&sigmas[0])?;
    let mut product = first.v.clone();
    let mut v_last = first.v_row().to_vec();
    for sig in &sigmas[1..] {
        let t = factory(sig)?;
        product = product.matmul(&t.v);
        v_last = t.v_row().to_vec();
    }
    let r = product.rows();
    let expected = Matrix::rank_one_rows(r, &v_last);
    Ok(ZeroStabilityReport {
        product_inf_norm: product.inf_norm(),
        rank_one_deviation: product.sub(&expected).max_abs(),
        v_last,
    })
}

/// Fixed-stepsize order conditions at `sigma = e`: rebuilds the `W` matrix
/// of Taylor coefficients of the past values (`beta = I`) and returns the
/// max-norms of both residuals.
///
/// At the uniform ratio vector this is algebraically the same relation as
/// the variable-stepsize conditions, which is exactly what the check
/// certifies.
pub fn fixed_stepsize_check(t: &Tableau) -> (f64, f64) {
    let p = t.p;
    let r = t.inputs();
    let cols = p + 1;
    // W row i = Taylor coefficients of y(x_{n-i+1}) around x_n.
    let w = Matrix::from_nested(
        (0..r)
            .map(|i| taylor_row(i as f64, cols))
            .collect(),
    );
    let tm = taylor_matrices(p, &StepRatios::uniform(p - 1), &t.c).expect("dimensions");
    let ck = tm.cmat.matmul(&tm.k);
    let ck2 = ck.matmul(&tm.k);
    let r1 = tm
        .cmat
        .sub(&t.a.matmul(&ck))
        .sub(&t.abar.matmul(&ck2))
        .sub(&t.u.matmul(&w));
    let r2 = w
        .matmul(&tm.e)
        .sub(&t.b.matmul(&ck))
        .sub(&t.bbar.matmul(&ck2))
        .sub(&t.v.matmul(&w));
    (r1.max_abs(), r2.max_abs())
}
