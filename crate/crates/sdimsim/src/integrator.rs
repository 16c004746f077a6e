//! Advances a problem across a grid: starting procedure, explicit stage
//! recursion and the output update.
//!
//! With the identity pairing of input blocks to past solution values, the
//! input vector is `[y_n, y_{n-1}, ..., y_{n-p+1}]`. Every output block is
//! recomputed through the `B`, `Bbar`, `V` relation; the rank-one `V` is
//! what keeps arbitrary stepsize sequences zero-stable, so no block is
//! copied forward structurally.

use crate::error::{Error, Result};
use crate::methods::{tableau, TableauCache};
use crate::reference::reference_solution_with_tol;
use crate::types::{Grid, OdeSystem, SolutionState, Tableau};

/// Outcome of one integration.
#[derive(Clone, Debug)]
pub struct IntegrationResult {
    pub y_final: Vec<f64>,
    pub state_final: SolutionState,
    pub n_steps: usize,
    pub n_f_evals: usize,
    pub n_g_evals: usize,
    pub trajectory: Option<Vec<(f64, Vec<f64>)>>,
}

#[derive(Clone, Debug, Default)]
pub struct IntegrateOptions {
    /// Record `(x_n, y_n)` after every step. Off by default.
    pub store_trajectory: bool,
    /// Reuse tableaus for repeated ratio vectors. Off by default.
    pub memoize: bool,
}

/// Starting blocks `[y(x_{p-1}), ..., y(x_0)]` at state index `n = p - 1`,
/// taken from the exact solution when available and otherwise from the
/// reference integrator at tolerance 1e-13.
pub fn starting_state(problem: &OdeSystem, grid: &Grid, p: usize) -> Result<SolutionState> {
    if problem.has_exact() {
        starting_state_from(
            |x| Ok(problem.exact_at(x).unwrap()),
            grid,
            p,
        )
    } else {
        starting_state_from(
            |x| reference_solution_with_tol(problem, x, 1e-13),
            grid,
            p,
        )
    }
}

/// Starting blocks from an arbitrary evaluator of the true solution.
pub fn starting_state_from<F>(truth: F, grid: &Grid, p: usize) -> Result<SolutionState>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    if !(1..=4).contains(&p) {
        return Err(Error::InvalidOrder(p));
    }
    if grid.points().len() < p + 1 {
        return Err(Error::GridTooShort {
            points: grid.points().len(),
            needed: p + 1,
            order: p,
        });
    }
    let mut blocks = Vec::with_capacity(p);
    for k in 0..p {
        blocks.push(truth(grid.points()[p - 1 - k])?);
    }
    Ok(SolutionState {
        n: p - 1,
        x: grid.points()[p - 1],
        blocks,
    })
}

/// Scratch buffers reused across steps of one integration.
struct StepWorkspace {
    stages: Vec<Vec<f64>>,
    f_vals: Vec<Vec<f64>>,
    g_vals: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
}

impl StepWorkspace {
    fn new(s: usize, r: usize, m: usize) -> Self {
        Self {
            stages: vec![vec![0.0; m]; s],
            f_vals: vec![vec![0.0; m]; s],
            g_vals: vec![vec![0.0; m]; s],
            out: vec![vec![0.0; m]; r],
        }
    }
}

/// One step: stages in order (strict lower triangularity makes the
/// recursion explicit), then every output block. `blocks` is replaced by
/// the output vector. Returns the number of f (= g) evaluations.
fn step_in_place(
    t: &Tableau,
    blocks: &mut Vec<Vec<f64>>,
    x: f64,
    h: f64,
    problem: &OdeSystem,
    ws: &mut StepWorkspace,
) -> Result<usize> {
    let s = t.stages();
    let r = t.inputs();
    let m = problem.dim();
    let h2 = h * h;

    for i in 0..s {
        // Y_i = sum_j u_ij y_j + h sum_{j<i} a_ij f(Y_j) + h^2 sum_{j<i} abar_ij g(Y_j)
        let yi = &mut ws.stages[i];
        for k in 0..m {
            let mut acc = 0.0;
            for j in 0..r {
                acc += t.u[(i, j)] * blocks[j][k];
            }
            yi[k] = acc;
        }
        for j in 0..i {
            let (aij, abij) = (t.a[(i, j)], t.abar[(i, j)]);
            if aij != 0.0 {
                for k in 0..m {
                    yi[k] += h * aij * ws.f_vals[j][k];
                }
            }
            if abij != 0.0 {
                for k in 0..m {
                    yi[k] += h2 * abij * ws.g_vals[j][k];
                }
            }
        }
        problem.eval_f(&ws.stages[i], &mut ws.f_vals[i]);
        problem.eval_g(&ws.stages[i], &mut ws.g_vals[i]);
        if !ws.f_vals[i].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { which: "f", stage: i + 1, x });
        }
        if !ws.g_vals[i].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { which: "g", stage: i + 1, x });
        }
    }

    for i in 0..r {
        let oi = &mut ws.out[i];
        for k in 0..m {
            let mut acc = 0.0;
            for j in 0..r {
                acc += t.v[(i, j)] * blocks[j][k];
            }
            oi[k] = acc;
        }
        for j in 0..s {
            let (bij, bbij) = (t.b[(i, j)], t.bbar[(i, j)]);
            for k in 0..m {
                oi[k] += h * bij * ws.f_vals[j][k] + h2 * bbij * ws.g_vals[j][k];
            }
        }
    }
    for (dst, src) in blocks.iter_mut().zip(&ws.out) {
        dst.copy_from_slice(src);
    }
    Ok(s)
}

/// One step of the method as a standalone operation.
pub fn step(t: &Tableau, state: &SolutionState, h: f64, problem: &OdeSystem) -> Result<SolutionState> {
    let mut ws = StepWorkspace::new(t.stages(), t.inputs(), problem.dim());
    let mut blocks = state.blocks.clone();
    step_in_place(t, &mut blocks, state.x, h, problem, &mut ws)?;
    Ok(SolutionState {
        n: state.n + 1,
        x: state.x + h,
        blocks,
    })
}

/// Integrates from the automatic starting state across the whole grid.
pub fn integrate(problem: &OdeSystem, grid: &Grid, p: usize) -> Result<IntegrationResult> {
    let state0 = starting_state(problem, grid, p)?;
    integrate_from(problem, grid, p, state0, &IntegrateOptions::default())
}

pub fn integrate_with_options(
    problem: &OdeSystem,
    grid: &Grid,
    p: usize,
    options: &IntegrateOptions,
) -> Result<IntegrationResult> {
    let state0 = starting_state(problem, grid, p)?;
    integrate_from(problem, grid, p, state0, options)
}

/// Integrates from a caller-supplied starting state: for each step `n`
/// builds the ratio vector from the grid, evaluates the tableau there,
/// and advances.
pub fn integrate_from(
    problem: &OdeSystem,
    grid: &Grid,
    p: usize,
    state0: SolutionState,
    options: &IntegrateOptions,
) -> Result<IntegrationResult> {
    if !(1..=4).contains(&p) {
        return Err(Error::InvalidOrder(p));
    }
    let n_total = grid.n_steps();
    if grid.points().len() < p + 1 {
        return Err(Error::GridTooShort {
            points: grid.points().len(),
            needed: p + 1,
            order: p,
        });
    }
    let rho = p - 1;
    let m = problem.dim();
    let mut blocks = state0.blocks;
    let mut x = state0.x;
    let mut ws = StepWorkspace::new(p, p, m);
    let mut cache = options.memoize.then(TableauCache::new);
    let mut trajectory = options
        .store_trajectory
        .then(|| vec![(x, blocks[0].clone())]);
    let mut n_f = 0usize;

    for n in state0.n..n_total {
        let sigma = grid.step_ratios(n, rho)?;
        let t = match cache.as_mut() {
            Some(c) => c.get_or_build(p, &sigma)?,
            None => tableau(p, &sigma)?,
        };
        let h = grid.steps()[n];
        n_f += step_in_place(&t, &mut blocks, x, h, problem, &mut ws)?;
        x = grid.points()[n + 1];
        if let Some(traj) = trajectory.as_mut() {
            traj.push((x, blocks[0].clone()));
        }
    }

    let state_final = SolutionState {
        n: n_total,
        x,
        blocks,
    };
    Ok(IntegrationResult {
        y_final: state_final.blocks[0].clone(),
        n_steps: n_total - state0.n,
        n_f_evals: n_f,
        n_g_evals: n_f,
        trajectory,
        state_final,
    })
}

/// Global error in the maximum norm against a truth vector at `x_N`.
pub fn global_error(result: &IntegrationResult, truth: &[f64]) -> f64 {
    max_norm_diff(&result.y_final, truth)
}

pub fn max_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Euclidean error norm; this is what the benchmark tables tabulate.
pub fn euclidean_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::order1;
    use crate::problems::linear2d;
    use crate::types::StepRatios;
    use approx::assert_relative_eq;

    fn scalar_exponential() -> OdeSystem {
        OdeSystem::new(
            "exp",
            vec![1.0],
            0.0,
            1.0,
            Box::new(|y, out| out[0] = y[0]),
            Box::new(|y, out| out[0] = y[0]),
        )
        .with_exact(Box::new(|x, out| out[0] = x.exp()))
    }

    #[test]
    fn order1_hand_step() {
        // y' = y from y = 1 with h = 0.1: 1 + 0.1 + 0.499 * 0.01.
        let sys = scalar_exponential();
        let state = SolutionState {
            n: 0,
            x: 0.0,
            blocks: vec![vec![1.0]],
        };
        let next = step(&order1(), &state, 0.1, &sys).unwrap();
        assert_relative_eq!(next.blocks[0][0], 1.10499, epsilon = 1e-15);
    }

    #[test]
    fn zero_field_is_a_fixed_point() {
        // f = g = 0 with equal input blocks: preconsistency keeps them.
        let sys = OdeSystem::new(
            "null",
            vec![2.0, -1.0],
            0.0,
            1.0,
            Box::new(|_, out| out.fill(0.0)),
            Box::new(|_, out| out.fill(0.0)),
        );
        for p in 2..=4usize {
            let t = tableau(p, &StepRatios::new(vec![1.3; p - 1]).unwrap()).unwrap();
            let state = SolutionState {
                n: p - 1,
                x: 0.0,
                blocks: vec![vec![2.0, -1.0]; p],
            };
            let next = step(&t, &state, 0.05, &sys).unwrap();
            for block in &next.blocks {
                assert_relative_eq!(block[0], 2.0, epsilon = 1e-13);
                assert_relative_eq!(block[1], -1.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn order1_preserves_constants_exactly() {
        let sys = OdeSystem::new(
            "zero",
            vec![4.0],
            0.0,
            1.0,
            Box::new(|_, out| out.fill(0.0)),
            Box::new(|_, out| out.fill(0.0)),
        )
        .with_exact(Box::new(|_, out| out[0] = 4.0));
        let grid = crate::grids::uniform_grid(0.0, 1.0, 50).unwrap();
        let res = integrate(&sys, &grid, 1).unwrap();
        assert_eq!(res.y_final[0], 4.0);
    }

    #[test]
    fn starting_state_uses_exact_history() {
        let sys = linear2d();
        let grid = crate::grids::uniform_grid(0.0, 1.0, 10).unwrap();
        let st = starting_state(&sys, &grid, 2).unwrap();
        assert_eq!(st.n, 1);
        let x1 = grid.points()[1];
        assert_relative_eq!(st.blocks[0][0], 3.0 * x1.sin() + 2.0 * x1.cos());
        assert_relative_eq!(st.blocks[0][1], x1.cos() - 5.0 * x1.sin());
        assert_eq!(st.blocks[1], vec![2.0, 1.0]);
    }

    #[test]
    fn starting_state_p1_is_initial_condition() {
        let sys = linear2d();
        let grid = crate::grids::uniform_grid(0.0, 1.0, 4).unwrap();
        let st = starting_state(&sys, &grid, 1).unwrap();
        assert_eq!(st.n, 0);
        assert_eq!(st.blocks, vec![vec![2.0, 1.0]]);
    }

    #[test]
    fn evaluation_counts_match_closed_form() {
        let sys = linear2d();
        for p in 1..=4usize {
            let grid = crate::grids::uniform_grid(0.0, 1.0, 40).unwrap();
            let res = integrate(&sys, &grid, p).unwrap();
            assert_eq!(res.n_f_evals, p * (40 - p + 1));
            assert_eq!(res.n_g_evals, res.n_f_evals);
            assert_eq!(res.n_steps, 40 - p + 1);
        }
    }

    #[test]
    fn non_finite_field_is_reported_with_stage() {
        let sys = OdeSystem::new(
            "blowup",
            vec![1.0],
            0.0,
            1.0,
            Box::new(|y, out| out[0] = 1.0 / (y[0] - 1.0)),
            Box::new(|_, out| out[0] = 0.0),
        );
        let state = SolutionState {
            n: 0,
            x: 0.0,
            blocks: vec![vec![1.0]],
        };
        let err = step(&order1(), &state, 0.1, &sys).unwrap_err();
        match err {
            Error::NonFiniteEvaluation { which, stage, .. } => {
                assert_eq!(which, "f");
                assert_eq!(stage, 1);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn trajectory_is_recorded_when_requested() {
        let sys = linear2d();
        let grid = crate::grids::uniform_grid(0.0, 1.0, 10).unwrap();
        let res = integrate_with_options(
            &sys,
            &grid,
            2,
            &IntegrateOptions {
                store_trajectory: true,
                memoize: true,
            },
        )
        .unwrap();
        let traj = res.trajectory.unwrap();
        assert_eq!(traj.len(), 10); // start point + 9 steps
        assert_eq!(traj.last().unwrap().0, 1.0);
    }
}
