//! Grid generators: the rapidly varying stepsize pattern used by the
//! benchmark tables, and uniform grids.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::types::Grid;

/// Builds the oscillating-stepsize grid
///
/// ```text
/// h_0 = (X - x0) / N,
/// h_{n+1} = base^((-1)^n sin(5 pi n / (X - x0))) * h_n,   n = 0..N-2,
/// ```
///
/// then rescales all steps uniformly so that `x_N = X` exactly. The
/// rescaling cancels in every step ratio, so the sigma sequence of the raw
/// and rescaled grids agree.
pub fn pattern_grid(x0: f64, x_end: f64, n: usize, base: f64) -> Result<Grid> {
    if !(x_end > x0) {
        return Err(Error::InvalidGrid(format!(
            "need x_end > x0, got [{x0}, {x_end}]"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidGrid("need at least one step".into()));
    }
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::InvalidGrid(format!("pattern base must be positive, got {base}")));
    }
    let length = x_end - x0;
    let mut steps = Vec::with_capacity(n);
    let mut h = length / n as f64;
    steps.push(h);
    for k in 0..n - 1 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let exponent = sign * (5.0 * PI * k as f64 / length).sin();
        h *= base.powf(exponent);
        steps.push(h);
    }
    let total: f64 = steps.iter().sum();
    let scale = length / total;
    for h in &mut steps {
        *h *= scale;
    }
    let mut points = Vec::with_capacity(n + 1);
    let mut x = x0;
    points.push(x0);
    for h in &steps {
        x += h;
        points.push(x);
    }
    points[n] = x_end;
    Ok(Grid::from_parts(points, steps))
}

/// Equally spaced grid; every step ratio is exactly 1.
pub fn uniform_grid(x0: f64, x_end: f64, n: usize) -> Result<Grid> {
    if !(x_end > x0) {
        return Err(Error::InvalidGrid(format!(
            "need x_end > x0, got [{x0}, {x_end}]"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidGrid("need at least one step".into()));
    }
    let h = (x_end - x0) / n as f64;
    let points: Vec<f64> = (0..=n)
        .map(|k| {
            if k == n {
                x_end
            } else {
                x0 + k as f64 * h
            }
        })
        .collect();
    let steps = (0..n).map(|k| points[k + 1] - points[k]).collect();
    Ok(Grid::from_parts(points, steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn first_pattern_factor_is_one() {
        // sin(0) = 0, so h_1 = h_0 before rescaling; rescaling keeps them equal.
        let g = pattern_grid(0.0, 5.0 * PI, 4, 2.0).unwrap();
        assert_relative_eq!(g.steps()[1] / g.steps()[0], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn base_one_is_uniform() {
        let g = pattern_grid(0.0, 3.0, 7, 1.0).unwrap();
        for h in g.steps() {
            assert_relative_eq!(*h, 3.0 / 7.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn rescaled_sum_hits_endpoint() {
        let g = pattern_grid(0.0, 5.0 * PI, 8, 2.0).unwrap();
        let total: f64 = g.steps().iter().sum();
        assert_relative_eq!(total, 5.0 * PI, max_relative = 1e-15);
        assert_eq!(g.x_end(), 5.0 * PI);
        let hmax = g.steps().iter().cloned().fold(0.0, f64::max);
        let hmin = g.steps().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hmax / hmin > 1.0, "pattern should vary the stepsize");
    }

    #[test]
    fn uniform_grid_points() {
        let g = uniform_grid(0.0, 1.0, 4).unwrap();
        assert_eq!(g.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let sig = g.step_ratios(2, 2).unwrap();
        assert_eq!(sig.values(), &[1.0, 1.0]);
    }

    #[test]
    fn uniform_grid_5pi() {
        let g = uniform_grid(0.0, 5.0 * PI, 1000).unwrap();
        assert_relative_eq!(g.steps()[500], 5.0 * PI / 1000.0, max_relative = 1e-14);
    }

    #[test]
    fn ratios_survive_rescaling() {
        // Rebuild the raw (unscaled) recursion and compare ratios.
        let n = 64;
        let (x0, x_end, base) = (0.0, 5.0 * PI, 2.0);
        let length = x_end - x0;
        let mut raw = vec![length / n as f64];
        for k in 0..n - 1 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let f = base.powf(sign * (5.0 * PI * k as f64 / length).sin());
            let last = *raw.last().unwrap();
            raw.push(f * last);
        }
        let g = pattern_grid(x0, x_end, n, base).unwrap();
        for i in 3..n {
            for rho in 1..=3 {
                let scaled = g.step_ratios(i, rho).unwrap();
                for (k, sv) in scaled.values().iter().enumerate() {
                    let rv = raw[i - (k + 1)] / raw[i];
                    assert_relative_eq!(*sv, rv, max_relative = 1e-14);
                }
            }
        }
    }

    #[test]
    fn sigma_range_stays_calibrated_for_table_bases() {
        for base in [2.0, 4.0] {
            let g = pattern_grid(0.0, 5.0 * PI, 2000, base).unwrap();
            for n in 3..g.n_steps() {
                for v in g.step_ratios(n, 3).unwrap().values() {
                    assert!(
                        (0.2..=5.0).contains(v),
                        "base {base}: sigma {v} outside calibrated range"
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(pattern_grid(1.0, 0.0, 10, 2.0).is_err());
        assert!(pattern_grid(0.0, 1.0, 0, 2.0).is_err());
        assert!(pattern_grid(0.0, 1.0, 10, -1.0).is_err());
        assert!(uniform_grid(0.0, 0.0, 5).is_err());
    }
}
