//! Construction of the four explicit variable-stepsize methods of orders
//! 1 through 4.
//!
//! Each method is determined by a small set of fixed coefficients (the
//! abscissae, `Abar`, the known part of `A`, `Bbar` and the rank-one `V`)
//! together with entries that depend on the stepsize ratios: the first
//! column of `A`, the `U` matrix and the `B` matrix. The ratio-dependent
//! entries are obtained by solving the per-row order-condition systems in
//! [`solve_coefficients`].
//!
//! For orders 1 and 2 the solved entries have short closed forms and those
//! are the production path; closed forms for order 3 are kept alongside as
//! an independent cross-check of the solver (and vice versa). Order 4 is
//! solver-only: its published closed-form coefficients are multi-page
//! polynomials used here only as spot-check data in tests.

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, Matrix};
use crate::orderconds::taylor_matrices;
use crate::types::{StepRatios, Tableau};

/// The ratio-independent part of a method: everything
/// [`solve_coefficients`] treats as given.
#[derive(Clone, Debug)]
pub struct FixedParts {
    pub p: usize,
    pub c: Vec<f64>,
    pub abar: Matrix,
    /// Known entries of `A` below the first column, as `(row, col, value)`.
    pub a_known: Vec<(usize, usize, f64)>,
    pub bbar: Matrix,
    /// Common row of the rank-one `V`.
    pub v: Vec<f64>,
}

impl FixedParts {
    fn v_matrix(&self) -> Matrix {
        Matrix::rank_one_rows(self.p, &self.v)
    }
}

/// Fixed parts of the order-3 method.
pub fn fixed_parts_order3() -> FixedParts {
    FixedParts {
        p: 3,
        c: vec![0.0, 0.5, 1.0],
        abar: Matrix::from_rows(&[
            &[0.0, 0.0, 0.0],
            &[1.0 / 10.0, 0.0, 0.0],
            &[1.0 / 5.0, 1.0 / 2.0, 0.0],
        ]),
        a_known: vec![(2, 1, 1.0 / 4.0)],
        bbar: Matrix::from_rows(&[
            &[67.0 / 500.0, 0.0, 13.0 / 500.0],
            &[0.0, -171.0 / 500.0, 0.0],
            &[-321.0 / 100.0, 0.0, -73.0 / 100.0],
        ]),
        v: vec![0.0, 12072.0 / 9889.0, -2183.0 / 9889.0],
    }
}

/// Fixed parts of the order-4 method.
pub fn fixed_parts_order4() -> FixedParts {
    FixedParts {
        p: 4,
        c: vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
        abar: Matrix::from_rows(&[
            &[0.0, 0.0, 0.0, 0.0],
            &[1.0 / 2.0, 0.0, 0.0, 0.0],
            &[1.0, 1.0 / 4.0, 0.0, 0.0],
            &[351.0 / 125.0, 0.0, 42.0 / 125.0, 0.0],
        ]),
        a_known: vec![
            (2, 1, -11.0 / 25.0),
            (3, 1, 11.0 / 10.0),
            (3, 2, -16.0 / 25.0),
        ],
        bbar: Matrix::rank_one_rows(4, &[6211.0 / 25000.0, 2.0 / 25.0, -147.0 / 6250.0, 0.0]),
        v: vec![1.0 / 2.0, 1.0 / 4.0, 8.0 / 25.0, -7.0 / 100.0],
    }
}

/// Fixed parts of the order-2 method with its ratio-dependent `Bbar`
/// evaluated at `sigma`; used to drive the generic solver as an oracle for
/// the closed forms.
pub fn fixed_parts_order2(sigma: &StepRatios) -> Result<FixedParts> {
    expect_ratios(sigma, 1)?;
    let t = order2(sigma)?;
    Ok(FixedParts {
        p: 2,
        c: vec![0.0, 1.0],
        abar: t.abar,
        a_known: vec![],
        bbar: t.bbar,
        v: vec![4247.0 / 4500.0, 253.0 / 4500.0],
    })
}

/// Fixed parts of the order-1 method (everything is fixed at `p = 1`).
pub fn fixed_parts_order1() -> FixedParts {
    FixedParts {
        p: 1,
        c: vec![0.0],
        abar: Matrix::zeros(1, 1),
        a_known: vec![],
        bbar: Matrix::from_rows(&[&[499.0 / 1000.0]]),
        v: vec![1.0],
    }
}

fn expect_ratios(sigma: &StepRatios, rho: usize) -> Result<()> {
    if sigma.len() != rho {
        return Err(Error::DimensionMismatch {
            context: "step ratio vector",
            expected: rho,
            got: sigma.len(),
        });
    }
    Ok(())
}

/// The order-1 method. Ratio-independent: one stage, one input.
pub fn order1() -> Tableau {
    Tableau {
        p: 1,
        c: vec![0.0],
        a: Matrix::zeros(1, 1),
        abar: Matrix::zeros(1, 1),
        u: Matrix::from_rows(&[&[1.0]]),
        b: Matrix::from_rows(&[&[1.0]]),
        bbar: Matrix::from_rows(&[&[499.0 / 1000.0]]),
        v: Matrix::from_rows(&[&[1.0]]),
        sigma: StepRatios::uniform(0),
    }
}

/// The order-2 method, from its closed-form coefficients.
pub fn order2(sigma: &StepRatios) -> Result<Tableau> {
    expect_ratios(sigma, 1)?;
    let s1 = sigma.values()[0];
    let w = 253.0 / 4500.0;
    let a = Matrix::from_rows(&[&[0.0, 0.0], &[1.0 + 1.0 / (5.0 * s1), 0.0]]);
    let abar = Matrix::from_rows(&[&[0.0, 0.0], &[2.0 / 5.0, 0.0]]);
    let u = Matrix::from_rows(&[
        &[1.0, 0.0],
        &[1.0 - 1.0 / (5.0 * s1 * s1), 1.0 / (5.0 * s1 * s1)],
    ]);
    let b = Matrix::from_rows(&[
        &[0.75 + w * s1, 0.25],
        &[
            -0.25 + w * s1 + (253.0 / 900.0) * s1 * s1,
            0.25 - (253.0 / 900.0) * s1 * s1,
        ],
    ]);
    let bbar = Matrix::from_rows(&[
        &[
            0.125 + (253.0 / 6000.0) * s1 * s1,
            0.125 - (253.0 / 3600.0) * s1 * s1,
        ],
        &[
            -0.125 + (3289.0 / 18000.0) * s1 * s1,
            -0.125 + (253.0 / 3600.0) * s1 * s1,
        ],
    ]);
    let v = Matrix::rank_one_rows(2, &[1.0 - w, w]);
    Ok(Tableau {
        p: 2,
        c: vec![0.0, 1.0],
        a,
        abar,
        u,
        b,
        bbar,
        v,
        sigma: sigma.clone(),
    })
}

/// The order-3 method: fixed parts plus solved first `A` column, `U`, `B`.
pub fn order3(sigma: &StepRatios) -> Result<Tableau> {
    expect_ratios(sigma, 2)?;
    solve_coefficients(&fixed_parts_order3(), sigma)
}

/// The order-4 method: fixed parts plus solved first `A` column, `U`, `B`.
pub fn order4(sigma: &StepRatios) -> Result<Tableau> {
    expect_ratios(sigma, 3)?;
    solve_coefficients(&fixed_parts_order4(), sigma)
}

/// Builds the method of the requested order at `sigma`.
pub fn tableau(p: usize, sigma: &StepRatios) -> Result<Tableau> {
    match p {
        1 => {
            expect_ratios(sigma, 0)?;
            Ok(order1())
        }
        2 => order2(sigma),
        3 => order3(sigma),
        4 => order4(sigma),
        other => Err(Error::InvalidOrder(other)),
    }
}

/// Solves the per-row order-condition systems for the unknown entries.
///
/// Stage row `i >= 2`: the `p + 1` unknowns `a_{i1}` and `U` row `i` from
/// the stage relation (row 1 is forced to `U = e_1^T` with no `A`
/// unknown). Output row `i`: the `p` unknowns of `B` row `i` from the
/// output relation, whose column-0 equation is already satisfied by the
/// unit row sums and is asserted instead of solved.
pub fn solve_coefficients(fixed: &FixedParts, sigma: &StepRatios) -> Result<Tableau> {
    let p = fixed.p;
    let s = p;
    let r = p;
    expect_ratios(sigma, p - 1)?;

    let tm = taylor_matrices(p, sigma, &fixed.c)?;
    let ck = tm.cmat.matmul(&tm.k);
    let ck2 = ck.matmul(&tm.k);

    let mut a = Matrix::zeros(s, s);
    for &(i, j, val) in &fixed.a_known {
        a[(i, j)] = val;
    }
    let mut u = Matrix::zeros(s, r);
    u[(0, 0)] = 1.0;

    // Stage rows. Unknown vector x = [a_{i1}, u_{i1}, ..., u_{ir}].
    for i in 1..s {
        let n = 1 + r;
        let mut m = Matrix::zeros(p + 1, n);
        let mut rhs = vec![0.0; p + 1];
        for mu in 0..=p {
            m[(mu, 0)] = ck[(0, mu)];
            for j in 0..r {
                m[(mu, 1 + j)] = tm.t[(j, mu)];
            }
            let mut known = 0.0;
            for j in 1..s {
                known += a[(i, j)] * ck[(j, mu)];
            }
            for j in 0..s {
                known += fixed.abar[(i, j)] * ck2[(j, mu)];
            }
            rhs[mu] = tm.cmat[(i, mu)] - known;
        }
        let x = lu_solve(&m, &rhs, "stage", i)?;
        a[(i, 0)] = x[0];
        for j in 0..r {
            u[(i, j)] = x[1 + j];
        }
    }

    // Output rows. Unknowns: B row i; equations mu = 1..=p.
    // Column 0 reads 1 = v^T e and must already hold.
    let vt_t0: f64 = fixed
        .v
        .iter()
        .enumerate()
        .map(|(l, &v)| v * tm.t[(l, 0)])
        .sum();
    let col0_residual = (1.0 - vt_t0).abs();
    if col0_residual > 1e-10 {
        return Err(Error::InconsistentFixedParts {
            row: 0,
            residual: col0_residual,
        });
    }

    let mut b = Matrix::zeros(r, s);
    for i in 0..r {
        let mut m = Matrix::zeros(p, s);
        let mut rhs = vec![0.0; p];
        for mu in 1..=p {
            for j in 0..s {
                m[(mu - 1, j)] = ck[(j, mu)];
            }
            let mut known = 0.0;
            for j in 0..s {
                known += fixed.bbar[(i, j)] * ck2[(j, mu)];
            }
            for (l, &v) in fixed.v.iter().enumerate() {
                known += v * tm.t[(l, mu)];
            }
            rhs[mu - 1] = tm.that[(i, mu)] - known;
        }
        let x = lu_solve(&m, &rhs, "output", i)?;
        b.row_mut(i).copy_from_slice(&x);
    }

    Ok(Tableau {
        p,
        c: fixed.c.clone(),
        a,
        abar: fixed.abar.clone(),
        u,
        b,
        bbar: fixed.bbar.clone(),
        v: fixed.v_matrix(),
        sigma: sigma.clone(),
    })
}

/// Closed forms of the solved order-3 entries, for cross-checking the
/// solver. `a_first` holds `(a_21, a_31)`.
#[derive(Clone, Debug)]
pub struct Order3ClosedForms {
    pub a_first: (f64, f64),
    pub u: Matrix,
    pub b: Matrix,
}

pub fn order3_closed_forms(sigma: &StepRatios) -> Result<Order3ClosedForms> {
    expect_ratios(sigma, 2)?;
    let s1 = sigma.values()[0];
    let s2 = sigma.values()[1];
    let s12 = s1 + s2;

    let a21 = (5.0 + 2.0 * s2 + 20.0 * s1 * s2 + 20.0 * s1 * s1 + 4.0 * s1) / (40.0 * s1 * s12);
    let a31 =
        (-55.0 - 52.0 * s2 + 60.0 * s1 * s2 + 60.0 * s1 * s1 - 104.0 * s1) / (80.0 * s1 * s12);

    let u21 = (-6.0 * s1 * s2 - 5.0 * s2 - 10.0 * s1 - 6.0 * s1 * s1 - 2.0 * s2 * s2
        + 40.0 * s1 * s1 * s2 * s2
        + 80.0 * s1.powi(3) * s2
        + 40.0 * s1.powi(4))
        / (40.0 * s1 * s1 * s12 * s12);
    let u31 = (156.0 * s1 * s2
        + 55.0 * s2
        + 110.0 * s1
        + 156.0 * s1 * s1
        + 52.0 * s2 * s2
        + 80.0 * s1 * s1 * s2 * s2
        + 160.0 * s1.powi(3) * s2
        + 80.0 * s1.powi(4))
        / (80.0 * s1 * s1 * s12 * s12);
    let u22 = (5.0 + 2.0 * s12) / (40.0 * s1 * s1 * s2);
    let u23 = -(5.0 + 2.0 * s1) / (40.0 * s2 * s12 * s12);
    let u32 = -(55.0 + 52.0 * s12) / (80.0 * s1 * s1 * s2);
    let u33 = (55.0 + 52.0 * s1) / (80.0 * s2 * s12 * s12);
    let u = Matrix::from_rows(&[&[1.0, 0.0, 0.0], &[u21, u22, u23], &[u31, u32, u33]]);

    // Recurring rational coefficients of the B polynomials.
    let q1 = 2183.0 / 9889.0;
    let q2 = 4366.0 / 9889.0;
    let q3 = 4366.0 / 29667.0;
    let q4 = 6549.0 / 9889.0;
    let q5 = 6549.0 / 19778.0;
    let r2 = 8732.0 / 9889.0;
    let r3 = 8732.0 / 29667.0;
    let h2 = 2183.0 / 19778.0;

    let b11 = s1 - q1 * s2 + 1.5 * s1 * s1 + (2.0 / 3.0) * s1.powi(3) - q4 * s1 * s2
        + 407.0 / 750.0
        - q3 * s2.powi(3)
        - q2 * s1 * s2 * s2
        - q2 * s1 * s1 * s2
        - q5 * s2 * s2;
    let b12 = 88.0 / 375.0 + r2 * s1 * s2 * s2 + r2 * s1 * s2 + q2 * s2 * s2
        - (4.0 / 3.0) * s1.powi(3)
        - 2.0 * s1 * s1
        + r2 * s1 * s1 * s2
        + r3 * s2.powi(3);
    let b13 = 167.0 / 750.0 - q2 * s1 * s2 * s2 - q1 * s1 * s2 - h2 * s2 * s2
        + (2.0 / 3.0) * s1.powi(3)
        + 0.5 * s1 * s1
        - q2 * s1 * s1 * s2
        - q3 * s2.powi(3);
    let b21 = -171.0 / 500.0 + s1 - q1 * s2 + 1.5 * s1 * s1 + (2.0 / 3.0) * s1.powi(3)
        - q4 * s1 * s2
        - q3 * s2.powi(3)
        - q2 * s1 * s2 * s2
        - q2 * s1 * s1 * s2
        - q5 * s2 * s2;
    let b22 = r2 * s1 * s2 * s2 + r2 * s1 * s2 + q2 * s2 * s2 - (4.0 / 3.0) * s1.powi(3)
        - 2.0 * s1 * s1
        + r2 * s1 * s1 * s2
        + r3 * s2.powi(3);
    let b23 = 171.0 / 500.0 - q2 * s1 * s2 * s2 - q1 * s1 * s2 - h2 * s2 * s2
        + (2.0 / 3.0) * s1.powi(3)
        + 0.5 * s1 * s1
        - q2 * s1 * s1 * s2
        - q3 * s2.powi(3);
    let b31 = -89.0 / 10.0 - q2 * s1 * s2 * s2 - q4 * s1 * s2 - q1 * s2 - q5 * s2 * s2
        - q2 * s1 * s1 * s2
        - q3 * s2.powi(3);
    let b32 = 248.0 / 25.0
        + r2 * s1 * s2 * s2
        + r2 * s1 * s2
        + q2 * s2 * s2
        + r2 * s1 * s1 * s2
        + r3 * s2.powi(3);
    let b33 = -51.0 / 50.0 - q1 * s1 * s2 - h2 * s2 * s2 - q2 * s1 * s1 * s2 - q2 * s1 * s2 * s2
        - q3 * s2.powi(3);
    let b = Matrix::from_rows(&[&[b11, b12, b13], &[b21, b22, b23], &[b31, b32, b33]]);

    Ok(Order3ClosedForms {
        a_first: (a21, a31),
        u,
        b,
    })
}

/// Largest relative deviation between solver output and the published
/// closed forms, over the solved entries. Defined for `p = 2` and `p = 3`.
pub fn solver_closed_form_deviation(p: usize, sigma: &StepRatios) -> Result<f64> {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    match p {
        2 => {
            let solved = solve_coefficients(&fixed_parts_order2(sigma)?, sigma)?;
            let closed = order2(sigma)?;
            let mut worst: f64 = rel(solved.a[(1, 0)], closed.a[(1, 0)]);
            for i in 0..2 {
                for j in 0..2 {
                    worst = worst.max(rel(solved.u[(i, j)], closed.u[(i, j)]));
                    worst = worst.max(rel(solved.b[(i, j)], closed.b[(i, j)]));
                }
            }
            Ok(worst)
        }
        3 => {
            let solved = order3(sigma)?;
            let closed = order3_closed_forms(sigma)?;
            let mut worst: f64 = rel(solved.a[(1, 0)], closed.a_first.0);
            worst = worst.max(rel(solved.a[(2, 0)], closed.a_first.1));
            for i in 0..3 {
                for j in 0..3 {
                    worst = worst.max(rel(solved.u[(i, j)], closed.u[(i, j)]));
                    worst = worst.max(rel(solved.b[(i, j)], closed.b[(i, j)]));
                }
            }
            Ok(worst)
        }
        other => Err(Error::InvalidOrder(other)),
    }
}

/// Optional per-integration cache of solved tableaus keyed on the ratio
/// vector rounded to 12 significant digits. Off by default; repeated-ratio
/// grids (periodic patterns) are the only win.
#[derive(Default)]
pub struct TableauCache {
    map: std::collections::HashMap<(usize, Vec<u64>), Tableau>,
}

impl TableauCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(p: usize, sigma: &StepRatios) -> (usize, Vec<u64>) {
        let quantized = sigma
            .values()
            .iter()
            .map(|&v| {
                let rounded = format!("{v:.12e}");
                let mut h = std::collections::hash_map::DefaultHasher::new();
                std::hash::Hash::hash(&rounded, &mut h);
                std::hash::Hasher::finish(&h)
            })
            .collect();
        (p, quantized)
    }

    pub fn get_or_build(&mut self, p: usize, sigma: &StepRatios) -> Result<Tableau> {
        let key = Self::key(p, sigma);
        if let Some(t) = self.map.get(&key) {
            return Ok(t.clone());
        }
        let t = tableau(p, sigma)?;
        self.map.insert(key, t.clone());
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ratios(v: &[f64]) -> StepRatios {
        StepRatios::new(v.to_vec()).unwrap()
    }

    #[test]
    fn order1_coefficients() {
        let t = order1();
        assert_relative_eq!(t.bbar[(0, 0)], 0.499);
        assert_eq!(t.a[(0, 0)], 0.0);
        assert_eq!(t.u[(0, 0)], 1.0);
        assert_eq!(t.b[(0, 0)], 1.0);
        assert_eq!(t.v[(0, 0)], 1.0);
    }

    #[test]
    fn order2_at_unit_ratio() {
        let t = order2(&ratios(&[1.0])).unwrap();
        assert_relative_eq!(t.a[(1, 0)], 6.0 / 5.0);
        assert_relative_eq!(t.u[(1, 0)], 4.0 / 5.0);
        assert_relative_eq!(t.b[(0, 0)], 0.75 + 253.0 / 4500.0);
    }

    #[test]
    fn order2_at_ratio_two() {
        let t = order2(&ratios(&[2.0])).unwrap();
        assert_relative_eq!(t.a[(1, 0)], 11.0 / 10.0);
        assert_relative_eq!(t.u[(1, 1)], 1.0 / 20.0);
        assert_relative_eq!(t.abar[(1, 0)], 2.0 / 5.0);
    }

    #[test]
    fn order3_solver_reproduces_published_entries_at_unit_ratios() {
        let t = order3(&ratios(&[1.0, 1.0])).unwrap();
        assert_relative_eq!(t.a[(1, 0)], 51.0 / 80.0, max_relative = 1e-13);
        assert_relative_eq!(t.a[(2, 0)], -91.0 / 160.0, max_relative = 1e-13);
        let vrow = t.v_row();
        assert_relative_eq!(vrow[1], 12072.0 / 9889.0);
        assert_relative_eq!(vrow[2], -2183.0 / 9889.0);
        assert_relative_eq!(vrow.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn order4_solver_reproduces_published_a21_at_unit_ratios() {
        let t = order4(&ratios(&[1.0, 1.0, 1.0])).unwrap();
        assert_relative_eq!(t.a[(1, 0)], -611.0 / 486.0, max_relative = 1e-12);
        assert_relative_eq!(t.v_row().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn order1_fixed_parts_round_trip_through_solver() {
        let t = solve_coefficients(&fixed_parts_order1(), &StepRatios::uniform(0)).unwrap();
        let reference = order1();
        assert_relative_eq!(t.b[(0, 0)], reference.b[(0, 0)]);
        assert_relative_eq!(t.u[(0, 0)], reference.u[(0, 0)]);
        assert_relative_eq!(t.bbar[(0, 0)], reference.bbar[(0, 0)]);
    }

    #[test]
    fn solver_matches_order2_closed_forms() {
        for s in [0.5, 1.0, 1.7] {
            let dev = solver_closed_form_deviation(2, &ratios(&[s])).unwrap();
            assert!(dev < 1e-12, "sigma = {s}: deviation {dev:e}");
        }
    }

    #[test]
    fn solver_matches_order3_closed_forms() {
        for s in [[2.0, 0.5], [1.0, 1.0], [0.3, 4.0]] {
            let dev = solver_closed_form_deviation(3, &ratios(&s)).unwrap();
            assert!(dev < 1e-12, "sigma = {s:?}: deviation {dev:e}");
        }
    }

    #[test]
    fn ratio_count_is_checked() {
        assert!(order3(&ratios(&[1.0])).is_err());
        assert!(order2(&StepRatios::new(vec![0.5, 0.5]).unwrap()).is_err());
        assert!(StepRatios::new(vec![-1.0]).is_err());
    }

    #[test]
    fn continuity_under_ratio_perturbation() {
        for p in 2..=4usize {
            let base = vec![0.8; p - 1];
            let bumped: Vec<f64> = base.iter().map(|s| s * (1.0 + 1e-8)).collect();
            let t0 = tableau(p, &ratios(&base)).unwrap();
            let t1 = tableau(p, &ratios(&bumped)).unwrap();
            for (m0, m1) in [(&t0.a, &t1.a), (&t0.u, &t1.u), (&t0.b, &t1.b)] {
                for i in 0..m0.rows() {
                    for j in 0..m0.cols() {
                        let denom = m0[(i, j)].abs().max(1.0);
                        assert!(
                            (m0[(i, j)] - m1[(i, j)]).abs() / denom <= 1e-5,
                            "p={p} entry ({i},{j}) jumped"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn cache_returns_identical_tableaus() {
        let mut cache = TableauCache::new();
        let sig = ratios(&[1.3, 0.8, 2.0]);
        let t1 = cache.get_or_build(4, &sig).unwrap();
        let t2 = cache.get_or_build(4, &sig).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(t1.b, t2.b);
    }
}
