//! High-accuracy reference integrator: an embedded explicit Runge-Kutta
//! 5(4) pair (Dormand-Prince coefficients) with PI stepsize control.
//!
//! Self-contained so its tolerances stay auditable; deterministic for
//! fixed inputs.

use crate::error::{Error, Result};
use crate::types::OdeSystem;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Clone, Debug)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self {
            rtol: 1e-13,
            atol: 1e-13,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dopri5Result {
    pub y: Vec<f64>,
    pub n_accepted: usize,
    pub n_rejected: usize,
    pub n_f_evals: usize,
}

fn scaled_error_norm(err: &[f64], y0: &[f64], y1: &[f64], atol: f64, rtol: f64) -> f64 {
    let m = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    (sum / m).sqrt()
}

/// Initial stepsize heuristic (order-5 version of the usual automatic
/// selection).
fn initial_step<F>(f: &F, x0: f64, y0: &[f64], x_end: f64, atol: f64, rtol: f64) -> f64
where
    F: Fn(&[f64], &mut [f64]),
{
    let m = y0.len();
    let mut f0 = vec![0.0; m];
    f(y0, &mut f0);
    let sc: Vec<f64> = y0.iter().map(|y| atol + rtol * y.abs()).collect();
    let d0 = (y0.iter().zip(&sc).map(|(y, s)| (y / s).powi(2)).sum::<f64>() / m as f64).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / m as f64).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(x_end - x0);
    let y1: Vec<f64> = y0.iter().zip(&f0).map(|(y, v)| y + h0 * v).collect();
    let mut f1 = vec![0.0; m];
    f(&y1, &mut f1);
    let d2 = (f1
        .iter()
        .zip(&f0)
        .zip(&sc)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        / m as f64)
        .sqrt()
        / h0;
    let d_max = d1.max(d2);
    let h1 = if d_max <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d_max).powf(0.2)
    };
    (100.0 * h0).min(h1).min(x_end - x0)
}

/// Integrates `y' = f(y)` from `x0` to `x_end` with the embedded pair.
pub fn dopri5<F>(
    f: F,
    y0: &[f64],
    x0: f64,
    x_end: f64,
    opts: &Dopri5Options,
) -> Result<Dopri5Result>
where
    F: Fn(&[f64], &mut [f64]),
{
    assert!(x_end >= x0);
    let m = y0.len();
    let mut y = y0.to_vec();
    if x_end == x0 {
        return Ok(Dopri5Result {
            y,
            n_accepted: 0,
            n_rejected: 0,
            n_f_evals: 0,
        });
    }
    let mut x = x0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; m]; 7];
    let mut ytmp = vec![0.0; m];
    let mut y_new = vec![0.0; m];
    let mut err = vec![0.0; m];

    // PI controller constants (standard choices for this pair).
    let beta = 0.04;
    let expo = 0.2 - beta * 0.75;
    let safety = 0.9;
    let fac_min = 0.2;
    let fac_max = 10.0;

    let mut h = initial_step(&f, x0, &y, x_end, opts.atol, opts.rtol);
    let mut err_old: f64 = 1e-4;
    let mut n_accepted = 0;
    let mut n_rejected = 0;
    let mut n_f = 2; // initial_step evaluations
    let mut first = true;
    let mut rejected_last = false;

    f(&y, &mut k[0]);
    n_f += 1;

    for _ in 0..opts.max_steps {
        if x >= x_end {
            return Ok(Dopri5Result {
                y,
                n_accepted,
                n_rejected,
                n_f_evals: n_f,
            });
        }
        h = h.min(x_end - x);
        if !first {
            // FSAL: k7 of the accepted step is k1 of the next.
        }
        for i in 1..7 {
            for j in 0..m {
                let mut acc = 0.0;
                for (l, kl) in k.iter().enumerate().take(i) {
                    let a = A[i - 1][l];
                    if a != 0.0 {
                        acc += a * kl[j];
                    }
                }
                ytmp[j] = y[j] + h * acc;
            }
            let _ = C; // abscissae unused: the field is autonomous
            let (head, tail) = k.split_at_mut(i);
            let _ = head;
            f(&ytmp, &mut tail[0]);
            n_f += 1;
        }
        // 5th-order solution is row 6 of A applied through stage 7 weights
        // (stage 7 abscissa 1, FSAL).
        for j in 0..m {
            let mut acc = 0.0;
            for l in 0..6 {
                let a = A[5][l];
                if a != 0.0 {
                    acc += a * k[l][j];
                }
            }
            y_new[j] = y[j] + h * acc;
        }
        for j in 0..m {
            let mut acc = 0.0;
            for (l, kl) in k.iter().enumerate() {
                if E[l] != 0.0 {
                    acc += E[l] * kl[j];
                }
            }
            err[j] = h * acc;
        }
        let err_norm = scaled_error_norm(&err, &y, &y_new, opts.atol, opts.rtol);

        if err_norm <= 1.0 {
            x += h;
            y.copy_from_slice(&y_new);
            k.swap(0, 6); // FSAL
            n_accepted += 1;
            let fac11 = err_norm.powf(expo);
            let mut fac = fac11 / err_old.powf(beta);
            fac = (fac / safety).clamp(1.0 / fac_max, 1.0 / fac_min);
            let mut h_new = h / fac;
            if rejected_last {
                h_new = h_new.min(h);
            }
            h = h_new;
            err_old = err_norm.max(1e-4);
            rejected_last = false;
            first = false;
        } else {
            let fac11 = err_norm.powf(expo);
            h /= (fac11 / safety).min(1.0 / fac_min);
            n_rejected += 1;
            rejected_last = true;
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidGrid(format!("reference stepsize degenerated to {h}")));
        }
    }
    Err(Error::StepLimitExceeded(opts.max_steps))
}

/// Reference value of the solution at `x_end`, at tolerance 1e-13.
pub fn reference_solution(problem: &OdeSystem, x_end: f64) -> Result<Vec<f64>> {
    reference_solution_with_tol(problem, x_end, 1e-13)
}

pub fn reference_solution_with_tol(problem: &OdeSystem, x_end: f64, tol: f64) -> Result<Vec<f64>> {
    let opts = Dopri5Options {
        rtol: tol,
        atol: tol,
        ..Default::default()
    };
    let res = dopri5(
        |y, out| problem.eval_f(y, out),
        problem.y0(),
        problem.x0(),
        x_end,
        &opts,
    )?;
    Ok(res.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::linear2d;
    use approx::assert_relative_eq;

    #[test]
    fn reproduces_exact_linear_solution() {
        let sys = linear2d();
        let x_end = 5.0 * std::f64::consts::PI;
        let y = reference_solution(&sys, x_end).unwrap();
        let exact = sys.exact_at(x_end).unwrap();
        assert!(
            crate::integrator::max_norm_diff(&y, &exact) <= 1e-10,
            "reference error {:e}",
            crate::integrator::max_norm_diff(&y, &exact)
        );
    }

    #[test]
    fn tolerance_self_consistency_on_brusselator() {
        let sys = crate::problems::brusselator();
        let tight = reference_solution_with_tol(&sys, 20.0, 1e-13).unwrap();
        let loose = reference_solution_with_tol(&sys, 20.0, 1e-11).unwrap();
        assert!(crate::integrator::max_norm_diff(&tight, &loose) <= 1e-9);
    }

    #[test]
    fn zero_length_interval_returns_initial_state() {
        let sys = linear2d();
        let y = reference_solution(&sys, 0.0).unwrap();
        assert_relative_eq!(y[0], 2.0);
        assert_relative_eq!(y[1], 1.0);
    }
}
