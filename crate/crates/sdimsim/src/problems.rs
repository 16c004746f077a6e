//! The three benchmark problems: a linear oscillatory system with known
//! solution, the Brusselator kinetics, and the Brusselator
//! reaction-diffusion system discretized by the method of lines.
//!
//! Every problem supplies `g = f'(y) f(y)` analytically; finite
//! differences appear only in the consistency probe of `types`.

use std::f64::consts::PI;

use crate::types::OdeSystem;

/// `y' = [[1, 1], [-2, -1]] y`, `y(0) = [2, 1]`, on `[0, 5 pi]`.
///
/// The coefficient matrix squares to `-I`, so `g(y) = -y`, and the exact
/// solution is `[3 sin x + 2 cos x, cos x - 5 sin x]`.
pub fn linear2d() -> OdeSystem {
    OdeSystem::new(
        "linear",
        vec![2.0, 1.0],
        0.0,
        5.0 * PI,
        Box::new(|y, out| {
            out[0] = y[0] + y[1];
            out[1] = -2.0 * y[0] - y[1];
        }),
        Box::new(|y, out| {
            out[0] = -y[0];
            out[1] = -y[1];
        }),
    )
    .with_exact(Box::new(|x, out| {
        out[0] = 3.0 * x.sin() + 2.0 * x.cos();
        out[1] = x.cos() - 5.0 * x.sin();
    }))
}

/// The Brusselator kinetics, `y(0) = [1.5, 3]`, on `[0, 20]`.
pub fn brusselator() -> OdeSystem {
    OdeSystem::new(
        "bruss",
        vec![1.5, 3.0],
        0.0,
        20.0,
        Box::new(|y, out| {
            out[0] = 1.0 + y[0] * y[0] * y[1] - 4.0 * y[0];
            out[1] = 3.0 * y[0] - y[0] * y[0] * y[1];
        }),
        Box::new(|y, out| {
            let f0 = 1.0 + y[0] * y[0] * y[1] - 4.0 * y[0];
            let f1 = 3.0 * y[0] - y[0] * y[0] * y[1];
            let j00 = 2.0 * y[0] * y[1] - 4.0;
            let j01 = y[0] * y[0];
            let j10 = 3.0 - 2.0 * y[0] * y[1];
            let j11 = -y[0] * y[0];
            out[0] = j00 * f0 + j01 * f1;
            out[1] = j10 * f0 + j11 * f1;
        }),
    )
}

/// Brusselator with diffusion on `[0, 1]`, method of lines on `ngrid`
/// interior points, integrated over `t in [0, 10]`.
///
/// State layout: `u`-block then `v`-block (`u_1..u_ng, v_1..v_ng`),
/// dimension `2 * ngrid`. Dirichlet boundary values `u = 1`, `v = 3`.
pub fn brusselator_pde(ngrid: usize) -> OdeSystem {
    brusselator_pde_with_diffusion(ngrid, 1.0 / 50.0)
}

/// Method-of-lines Brusselator with an explicit diffusion coefficient.
/// `alpha = 0` decouples the system into independent kinetics pairs.
pub fn brusselator_pde_with_diffusion(ngrid: usize, alpha: f64) -> OdeSystem {
    assert!(ngrid >= 2, "need at least two interior points");
    let dx = 1.0 / (ngrid as f64 + 1.0);
    let ad = alpha / (dx * dx);
    let mut y0 = vec![0.0; 2 * ngrid];
    for i in 0..ngrid {
        let xi = (i as f64 + 1.0) * dx;
        y0[i] = 1.0 + (2.0 * PI * xi).sin();
        y0[ngrid + i] = 3.0;
    }

    let mol_f = move |y: &[f64], out: &mut [f64]| {
        let (u, v) = y.split_at(ngrid);
        let (fu, fv) = out.split_at_mut(ngrid);
        for i in 0..ngrid {
            let ul = if i == 0 { 1.0 } else { u[i - 1] };
            let ur = if i + 1 == ngrid { 1.0 } else { u[i + 1] };
            let vl = if i == 0 { 3.0 } else { v[i - 1] };
            let vr = if i + 1 == ngrid { 3.0 } else { v[i + 1] };
            fu[i] = 1.0 + u[i] * u[i] * v[i] - 4.0 * u[i] + ad * (ul - 2.0 * u[i] + ur);
            fv[i] = 3.0 * u[i] - u[i] * u[i] * v[i] + ad * (vl - 2.0 * v[i] + vr);
        }
    };

    // g = J f with the block-tridiagonal Jacobian applied directly; the
    // constant boundary values contribute nothing.
    let f_for_g = mol_f;
    let mol_g = move |y: &[f64], out: &mut [f64]| {
        let mut fval = vec![0.0; 2 * ngrid];
        f_for_g(y, &mut fval);
        let (u, v) = y.split_at(ngrid);
        let (fu, fv) = fval.split_at(ngrid);
        let (gu, gv) = out.split_at_mut(ngrid);
        for i in 0..ngrid {
            let ful = if i == 0 { 0.0 } else { fu[i - 1] };
            let fur = if i + 1 == ngrid { 0.0 } else { fu[i + 1] };
            let fvl = if i == 0 { 0.0 } else { fv[i - 1] };
            let fvr = if i + 1 == ngrid { 0.0 } else { fv[i + 1] };
            gu[i] = (2.0 * u[i] * v[i] - 4.0 - 2.0 * ad) * fu[i]
                + ad * (ful + fur)
                + u[i] * u[i] * fv[i];
            gv[i] = (3.0 - 2.0 * u[i] * v[i]) * fu[i] + (-u[i] * u[i] - 2.0 * ad) * fv[i]
                + ad * (fvl + fvr);
        }
    };

    OdeSystem::new(
        format!("bruss-pde-{ngrid}"),
        y0,
        0.0,
        10.0,
        Box::new(mol_f),
        Box::new(mol_g),
    )
}

pub fn problem_by_name(name: &str, pde_grid: usize) -> Option<OdeSystem> {
    match name {
        "linear" => Some(linear2d()),
        "bruss" => Some(brusselator()),
        "bruss-pde" => Some(brusselator_pde(pde_grid)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{second_derivative_residual, SECOND_DERIVATIVE_TOL};
    use approx::assert_relative_eq;

    #[test]
    fn linear_field_values() {
        let sys = linear2d();
        assert_eq!(sys.f_vec(&[2.0, 1.0]), vec![3.0, -5.0]);
        // g(y) = -y for any y since the matrix squares to -I.
        let y = [0.3, -0.7];
        assert_eq!(sys.g_vec(&y), vec![-0.3, 0.7]);
        assert_eq!(sys.exact_at(0.0).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn brusselator_field_values() {
        let sys = brusselator();
        let f = sys.f_vec(&[1.5, 3.0]);
        assert_relative_eq!(f[0], 1.75);
        assert_relative_eq!(f[1], -2.25);
    }

    #[test]
    fn brusselator_g_vanishes_at_fixed_point() {
        // f = 0 at (1, 3), and g = J f.
        let sys = brusselator();
        let f = sys.f_vec(&[1.0, 3.0]);
        assert_relative_eq!(f[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(f[1], 0.0, epsilon = 1e-15);
        let g = sys.g_vec(&[1.0, 3.0]);
        assert_relative_eq!(g[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(g[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn mol_dimensions_and_initial_data() {
        let sys = brusselator_pde(50);
        assert_eq!(sys.dim(), 100);
        let dx = 1.0 / 51.0;
        let y0 = sys.y0();
        // v-block all 3s.
        for i in 50..100 {
            assert_eq!(y0[i], 3.0);
        }
        // u_25 sits at x = 25/51.
        assert_relative_eq!(y0[24], 1.0 + (50.0 * PI / 51.0).sin(), max_relative = 1e-15);
        // diffusion scale alpha / dx^2 = 51^2 / 50.
        assert_relative_eq!((1.0f64 / 50.0) / (dx * dx), 52.02, max_relative = 1e-12);
    }

    #[test]
    fn second_derivatives_pass_fd_probe() {
        let mut rng_state = 88172645463325252u64;
        let mut next = move || {
            // xorshift, plenty for probe points
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        let sys = linear2d();
        for _ in 0..10 {
            let y = [4.0 * next() - 2.0, 4.0 * next() - 2.0];
            assert!(second_derivative_residual(&sys, &y) <= SECOND_DERIVATIVE_TOL);
        }
        let sys = brusselator();
        for _ in 0..10 {
            let y = [next() * 2.0 + 0.5, next() * 2.0 + 2.0];
            assert!(second_derivative_residual(&sys, &y) <= SECOND_DERIVATIVE_TOL);
        }
        let sys = brusselator_pde(50);
        for _ in 0..5 {
            let y: Vec<f64> = sys
                .y0()
                .iter()
                .map(|v| v + 0.1 * (next() - 0.5))
                .collect();
            assert!(second_derivative_residual(&sys, &y) <= SECOND_DERIVATIVE_TOL);
        }
    }

    #[test]
    fn state_layout_round_trip() {
        let ngrid = 8;
        let sys = brusselator_pde(ngrid);
        let y0 = sys.y0();
        let (u, v) = y0.split_at(ngrid);
        let mut rebuilt = u.to_vec();
        rebuilt.extend_from_slice(v);
        assert_eq!(rebuilt, y0);
    }
}
