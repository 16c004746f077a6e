//! Domain types shared by every module: tableaus, step ratios, problems,
//! grids, solution states and convergence rows.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Absolute tolerance for the row-sum and rank-one structure checks.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Relative tolerance for the second-derivative consistency probe.
pub const SECOND_DERIVATIVE_TOL: f64 = 1e-5;

/// Vector of past-to-current stepsize ratios `sigma[i-1] = h_{n-i} / h_n`,
/// `i = 1..=rho`. Drives every stepsize-dependent coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRatios(Vec<f64>);

impl StepRatios {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonPositiveStepRatio { index: i, value: v });
            }
        }
        Ok(Self(values))
    }

    /// The all-ones ratio vector (uniform grid) of length `rho`.
    pub fn uniform(rho: usize) -> Self {
        Self(vec![1.0; rho])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Cumulative sums `[0, s_1, s_1+s_2, ...]` of length `rho + 1`; entry `l`
    /// is the scaled distance from `x_n` back to `x_{n-l}`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.0.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for &s in &self.0 {
            acc += s;
            out.push(acc);
        }
        out
    }
}

/// One method instance: every coefficient matrix evaluated at a ratio vector.
#[derive(Clone, Debug)]
pub struct Tableau {
    pub p: usize,
    pub c: Vec<f64>,
    pub a: Matrix,
    pub abar: Matrix,
    pub u: Matrix,
    pub b: Matrix,
    pub bbar: Matrix,
    pub v: Matrix,
    pub sigma: StepRatios,
}

impl Tableau {
    pub fn stages(&self) -> usize {
        self.c.len()
    }

    pub fn inputs(&self) -> usize {
        self.v.rows()
    }

    pub fn ratio_count(&self) -> usize {
        self.sigma.len()
    }

    /// The common row of the rank-one matrix `V = e v^T`.
    pub fn v_row(&self) -> &[f64] {
        self.v.row(0)
    }

    /// JSON object with keys `p, c, A, Abar, U, B, Bbar, V, sigma`;
    /// matrices are arrays of rows.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "p": self.p,
            "c": self.c,
            "A": self.a.to_nested(),
            "Abar": self.abar.to_nested(),
            "U": self.u.to_nested(),
            "B": self.b.to_nested(),
            "Bbar": self.bbar.to_nested(),
            "V": self.v.to_nested(),
            "sigma": self.sigma.values(),
        })
    }
}

/// A single violated tableau invariant with its location and magnitude.
#[derive(Clone, Debug)]
pub struct Violation {
    pub what: String,
    pub location: Option<(usize, usize)>,
    pub residual: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.location {
            Some((i, j)) => write!(f, "{} at ({}, {}): residual {:e}", self.what, i, j, self.residual),
            None => write!(f, "{}: residual {:e}", self.what, self.residual),
        }
    }
}

/// Report produced by [`validate_tableau`]; empty means pass.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the structural invariants of a tableau and reports every violation.
pub fn validate_tableau(t: &Tableau) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let s = t.stages();
    let r = t.inputs();
    let mut push = |what: String, location: Option<(usize, usize)>, residual: f64| {
        rep.violations.push(Violation {
            what,
            location,
            residual,
        });
    };

    if !(t.p >= 1 && s == t.p && r == t.p) {
        push(
            format!("p = q = r = s violated: p = {}, s = {}, r = {}", t.p, s, r),
            None,
            0.0,
        );
    }
    if t.sigma.len() + 1 != t.p {
        push(
            format!("ratio count {} != p - 1 = {}", t.sigma.len(), t.p - 1),
            None,
            0.0,
        );
    }
    for (name, m, rows, cols) in [
        ("A", &t.a, s, s),
        ("Abar", &t.abar, s, s),
        ("U", &t.u, s, r),
        ("B", &t.b, r, s),
        ("Bbar", &t.bbar, r, s),
        ("V", &t.v, r, r),
    ] {
        if m.rows() != rows || m.cols() != cols {
            push(format!("{name} has shape {}x{}", m.rows(), m.cols()), None, 0.0);
        }
        if !m.is_finite() {
            push(format!("{name} has non-finite entries"), None, f64::INFINITY);
        }
    }
    if rep.violations.iter().any(|v| v.what.contains("shape")) {
        return rep;
    }

    // Explicit methods: A and Abar strictly lower triangular.
    for (name, m) in [("A", &t.a), ("Abar", &t.abar)] {
        for i in 0..s {
            for j in i..s {
                if m[(i, j)] != 0.0 {
                    push(
                        format!("{name} not strictly lower triangular"),
                        Some((i, j)),
                        m[(i, j)].abs(),
                    );
                }
            }
        }
    }

    // Preconsistency: every row of U sums to 1.
    for (i, sum) in t.u.row_sums().into_iter().enumerate() {
        if (sum - 1.0).abs() > STRUCTURE_TOL {
            push("U row sum != 1".into(), Some((i, 0)), (sum - 1.0).abs());
        }
    }

    // V = e v^T with v^T e = 1: identical rows, unit row sums.
    let v0 = t.v.row(0).to_vec();
    for i in 1..r {
        for j in 0..r {
            let dev = (t.v[(i, j)] - v0[j]).abs();
            if dev > STRUCTURE_TOL {
                push("V rows not identical (not rank-one)".into(), Some((i, j)), dev);
            }
        }
    }
    let vsum: f64 = v0.iter().sum();
    if (vsum - 1.0).abs() > STRUCTURE_TOL {
        push("v^T e != 1".into(), Some((0, 0)), (vsum - 1.0).abs());
    }

    rep
}

pub type FieldFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type ExactFn = Box<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// An initial value problem `y' = f(y)` with its second derivative
/// `g = f'(y) f(y)`, initial data and optional exact solution.
pub struct OdeSystem {
    name: String,
    m: usize,
    y0: Vec<f64>,
    x0: f64,
    x_end: f64,
    f: FieldFn,
    g: FieldFn,
    exact: Option<ExactFn>,
}

impl OdeSystem {
    pub fn new(
        name: impl Into<String>,
        y0: Vec<f64>,
        x0: f64,
        x_end: f64,
        f: FieldFn,
        g: FieldFn,
    ) -> Self {
        Self {
            name: name.into(),
            m: y0.len(),
            y0,
            x0,
            x_end,
            f,
            g,
            exact: None,
        }
    }

    pub fn with_exact(mut self, exact: ExactFn) -> Self {
        self.exact = Some(exact);
        self
    }

    /// Same dynamics from a different initial state.
    pub fn with_initial(mut self, y0: Vec<f64>) -> Self {
        assert_eq!(y0.len(), self.m);
        self.y0 = y0;
        self.exact = None;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn x_end(&self) -> f64 {
        self.x_end
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn eval_f(&self, y: &[f64], out: &mut [f64]) {
        (self.f)(y, out);
    }

    pub fn eval_g(&self, y: &[f64], out: &mut [f64]) {
        (self.g)(y, out);
    }

    pub fn f_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        (self.f)(y, &mut out);
        out
    }

    pub fn g_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        (self.g)(y, &mut out);
        out
    }

    pub fn exact_at(&self, x: f64) -> Option<Vec<f64>> {
        self.exact.as_ref().map(|e| {
            let mut out = vec![0.0; self.m];
            e(x, &mut out);
            out
        })
    }
}

impl std::fmt::Debug for OdeSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OdeSystem")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("x0", &self.x0)
            .field("x_end", &self.x_end)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

/// Residual of the probe `||g(y) - J_fd(y) f(y)||_inf / (1 + ||g(y)||_inf)`
/// with a central-difference Jacobian. Values above
/// [`SECOND_DERIVATIVE_TOL`] flag an inconsistent user-supplied `g`.
pub fn second_derivative_residual(sys: &OdeSystem, y: &[f64]) -> f64 {
    let m = sys.dim();
    let f = sys.f_vec(y);
    let g = sys.g_vec(y);
    let mut jf = vec![0.0; m];
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for j in 0..m {
        let eps = 1e-6 * (1.0 + y[j].abs());
        yp[j] = y[j] + eps;
        sys.eval_f(&yp, &mut fp);
        yp[j] = y[j] - eps;
        sys.eval_f(&yp, &mut fm);
        yp[j] = y[j];
        for i in 0..m {
            jf[i] += (fp[i] - fm[i]) / (2.0 * eps) * f[j];
        }
    }
    let num = g
        .iter()
        .zip(&jf)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let den = 1.0 + g.iter().map(|x| x.abs()).fold(0.0, f64::max);
    num / den
}

/// Monotone abscissae `x_0 < ... < x_N` with their stepsizes.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    steps: Vec<f64>,
}

impl Grid {
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("need at least two points".into()));
        }
        let mut steps = Vec::with_capacity(points.len() - 1);
        for i in 0..points.len() - 1 {
            let h = points[i + 1] - points[i];
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::NonMonotoneGrid(i));
            }
            steps.push(h);
        }
        Ok(Self { points, steps })
    }

    pub(crate) fn from_parts(points: Vec<f64>, steps: Vec<f64>) -> Self {
        debug_assert_eq!(points.len(), steps.len() + 1);
        Self { points, steps }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Number of steps `N` (one less than the number of points).
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn x0(&self) -> f64 {
        self.points[0]
    }

    pub fn x_end(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Ratio vector `sigma_n` for the step leaving `x_n`; requires
    /// `n >= rho`.
    pub fn step_ratios(&self, n: usize, rho: usize) -> Result<StepRatios> {
        if n < rho || n >= self.steps.len() {
            return Err(Error::InvalidGrid(format!(
                "step {n} with {rho} ratios out of range for {} steps",
                self.steps.len()
            )));
        }
        let hn = self.steps[n];
        StepRatios::new((1..=rho).map(|i| self.steps[n - i] / hn).collect())
    }
}

/// Block input vector `[y_n, y_{n-1}, ..., y_{n-p+1}]` plus step index.
#[derive(Clone, Debug)]
pub struct SolutionState {
    pub n: usize,
    pub x: f64,
    pub blocks: Vec<Vec<f64>>,
}

impl SolutionState {
    /// The newest block, approximating the solution at `x`.
    pub fn newest(&self) -> &[f64] {
        &self.blocks[0]
    }
}

/// One row of a convergence table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N")]
    pub n_steps: usize,
    pub ge: f64,
    #[serde(rename = "O_N")]
    pub order_estimate: Option<f64>,
}
