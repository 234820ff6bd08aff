//! Reference integrator and defect checker.
//!
//! Classic fixed-step RK4 and a fourth-order finite-difference residual.
//! Nothing in here calls into the analytic, stationary or stochastic code,
//! so agreement with those modules is independent evidence.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{CoefficientSystem, GridFunction, PhysicalParams, TimeGrid};

/// Magnitude above which an RK4 trajectory is declared blown up.
pub const BLOW_UP_LIMIT: f64 = 1e12;

/// Right-hand side `(t, state) ↦ d state/dt`.
pub trait VectorField {
    fn eval(&self, t: f64, state: &[Complex64]) -> Vec<Complex64>;
}

impl<F> VectorField for F
where
    F: Fn(f64, &[Complex64]) -> Vec<Complex64>,
{
    fn eval(&self, t: f64, state: &[Complex64]) -> Vec<Complex64> {
        self(t, state)
    }
}

fn axpy(y: &[Complex64], h: f64, k: &[Complex64]) -> Vec<Complex64> {
    y.iter().zip(k).map(|(y, k)| y + k * h).collect()
}

/// One RK4 step per grid interval. Returns the state at every node.
pub fn rk4_integrate<V: VectorField + ?Sized>(
    field: &V,
    init: &[Complex64],
    grid: TimeGrid,
) -> Result<Vec<Vec<Complex64>>> {
    let h = grid.dt();
    let mut out = Vec::with_capacity(grid.len());
    let mut y = init.to_vec();
    out.push(y.clone());
    for k in 1..grid.len() {
        let t = grid.t(k - 1);
        let k1 = field.eval(t, &y);
        let k2 = field.eval(t + 0.5 * h, &axpy(&y, 0.5 * h, &k1));
        let k3 = field.eval(t + 0.5 * h, &axpy(&y, 0.5 * h, &k2));
        let k4 = field.eval(t + h, &axpy(&y, h, &k3));
        for i in 0..y.len() {
            y[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
        }
        if y.iter().any(|z| !z.is_finite() || z.norm() > BLOW_UP_LIMIT) {
            return Err(Error::BlowUp { t: grid.t(k), limit: BLOW_UP_LIMIT });
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Noiseless physical field on `[α, β*]`, written out from `(γ, δ, κ, E)`.
pub fn physical_field(params: &PhysicalParams) -> impl Fn(f64, &[Complex64]) -> Vec<Complex64> {
    let loss_re = -0.5 * params.gamma;
    let rot = params.delta;
    let kappa = params.kappa;
    let e = params.drive;
    move |_t, s| {
        let (x, y) = (s[0], s[1]);
        let xy = x * y;
        vec![
            Complex64::new(loss_re, -rot) * x - kappa * xy * x + e,
            Complex64::new(loss_re, rot) * y - kappa * xy * y + e.conj(),
        ]
    }
}

/// Neville evaluation of the cubic through four samples around `t`.
fn interpolate(grid: &TimeGrid, samples: &[Complex64], t: f64) -> Complex64 {
    let n = samples.len();
    if n == 1 {
        return samples[0];
    }
    let m = n.min(4);
    let s = (t - grid.t0()) / grid.dt();
    let lo = (s.floor() as isize - (m as isize / 2 - 1)).clamp(0, (n - m) as isize) as usize;
    let mut p: Vec<Complex64> = samples[lo..lo + m].to_vec();
    let xs: Vec<f64> = (lo..lo + m).map(|k| k as f64).collect();
    for level in 1..m {
        for i in 0..m - level {
            let (xi, xj) = (xs[i], xs[i + level]);
            p[i] = ((s - xj) * p[i] + (xi - s) * p[i + 1]) / (xi - xj);
        }
    }
    p[0]
}

/// Field of the six-coefficient coupled system on `[x, y]`. Off-node
/// coefficient values come from local cubic interpolation.
pub fn coupled_field(coeffs: &CoefficientSystem) -> impl Fn(f64, &[Complex64]) -> Vec<Complex64> + '_ {
    let g = coeffs.grid;
    move |t, s| {
        let (x, y) = (s[0], s[1]);
        let at = |v: &[Complex64]| interpolate(&g, v, t);
        vec![
            at(&coeffs.a) * x + at(&coeffs.b) * x * x * y + at(&coeffs.f),
            at(&coeffs.c) * y + at(&coeffs.d) * y * y * x + at(&coeffs.g),
        ]
    }
}

/// Fourth-order finite-difference derivative of nodal samples. Needs n ≥ 5.
fn derivative(v: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = v.len();
    let w = 1.0 / (12.0 * h);
    (0..n)
        .map(|i| {
            let d = if i >= 2 && i + 2 < n {
                -v[i + 2] + 8.0 * v[i + 1] - 8.0 * v[i - 1] + v[i - 2]
            } else if i == 0 {
                -25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]
            } else if i == 1 {
                -3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]
            } else if i == n - 2 {
                3.0 * v[n - 1] + 10.0 * v[n - 2] - 18.0 * v[n - 3] + 6.0 * v[n - 4] - v[n - 5]
            } else {
                25.0 * v[n - 1] - 48.0 * v[n - 2] + 36.0 * v[n - 3] - 16.0 * v[n - 4]
                    + 3.0 * v[n - 5]
            };
            d * w
        })
        .collect()
}

/// Max-norm defect of `(x, y)` in the coupled system, over all nodes.
pub fn ode_residual(
    x: &GridFunction,
    y: &GridFunction,
    coeffs: &CoefficientSystem,
) -> Result<f64> {
    Ok(pointwise_residual(x, y, coeffs)?.into_iter().fold(0.0, f64::max))
}

/// Per-node residual `max(|x' − rhs_x|, |y' − rhs_y|)`.
pub fn pointwise_residual(
    x: &GridFunction,
    y: &GridFunction,
    coeffs: &CoefficientSystem,
) -> Result<Vec<f64>> {
    let n = coeffs.grid.len();
    if n < 5 {
        return Err(Error::Grid(format!("defect needs at least 5 nodes, got {n}")));
    }
    if x.len() != n || y.len() != n {
        return Err(Error::Grid("candidate and coefficients are on different grids".into()));
    }
    let h = coeffs.grid.dt();
    let dx = derivative(&x.values, h);
    let dy = derivative(&y.values, h);
    Ok((0..n)
        .map(|i| {
            let (xi, yi) = (x.values[i], y.values[i]);
            let rx = dx[i] - (coeffs.a[i] * xi + coeffs.b[i] * xi * xi * yi + coeffs.f[i]);
            let ry = dy[i] - (coeffs.c[i] * yi + coeffs.d[i] * yi * yi * xi + coeffs.g[i]);
            rx.norm().max(ry.norm())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn rk4_exponential_decay() {
        let grid = TimeGrid::span(0.0, 1.0, 0.1).unwrap();
        let out = rk4_integrate(&|_t: f64, s: &[Complex64]| vec![-s[0]], &[c(1.0)], grid).unwrap();
        let last = out.last().unwrap()[0];
        // RK4 on x' = -x multiplies by the degree-4 Taylor polynomial of e^{-h}.
        let h = 0.1f64;
        let amp = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((last.re - amp.powi(10)).abs() < 1e-15);
        assert!((last.re - 0.3678794).abs() < 4e-7);

        let fine = TimeGrid::span(0.0, 1.0, 0.05).unwrap();
        let out = rk4_integrate(&|_t: f64, s: &[Complex64]| vec![-s[0]], &[c(1.0)], fine).unwrap();
        assert!((out.last().unwrap()[0].re - 0.3678794).abs() < 1e-7);
    }

    #[test]
    fn rk4_constant_field() {
        let grid = TimeGrid::span(0.0, 2.0, 0.1).unwrap();
        let out = rk4_integrate(&|_t: f64, _s: &[Complex64]| vec![c(1.0)], &[c(0.0)], grid).unwrap();
        assert!((out.last().unwrap()[0].re - 2.0).abs() < 1e-13);
    }

    #[test]
    fn rk4_coupled_quadratic_loss() {
        // z = xy obeys z' = −2z², so x = y = (1+2t)^{-1/2}.
        let grid = TimeGrid::span(0.0, 1.0, 1e-3).unwrap();
        let field = |_t: f64, s: &[Complex64]| vec![-s[0] * s[0] * s[1], -s[1] * s[1] * s[0]];
        let out = rk4_integrate(&field, &[c(1.0), c(1.0)], grid).unwrap();
        let last = out.last().unwrap();
        let exact = 3f64.powf(-0.5);
        assert!((last[0].re - exact).abs() < 1e-8);
        assert!((last[1].re - exact).abs() < 1e-8);
    }

    #[test]
    fn rk4_blow_up() {
        let grid = TimeGrid::span(0.0, 2.0, 1e-3).unwrap();
        let r = rk4_integrate(&|_t: f64, s: &[Complex64]| vec![s[0] * s[0]], &[c(1.0)], grid);
        match r {
            Err(Error::BlowUp { t, .. }) => assert!((t - 1.0).abs() < 0.01),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn rk4_fourth_order() {
        let err = |dt: f64| {
            let grid = TimeGrid::span(0.0, 1.0, dt).unwrap();
            let out = rk4_integrate(&|_t: f64, s: &[Complex64]| vec![-s[0]], &[c(1.0)], grid).unwrap();
            (out.last().unwrap()[0].re - (-1.0f64).exp()).abs()
        };
        assert!(err(0.1) / err(0.05) >= 12.0);
        assert!(err(0.05) / err(0.025) >= 12.0);
    }

    fn decay_system(grid: TimeGrid) -> CoefficientSystem {
        let z = Complex64::new(0.0, 0.0);
        CoefficientSystem::from_fns(grid, |_| c(-1.0), |_| z, |_| c(-1.0), |_| z, |_| z, |_| z).unwrap()
    }

    #[test]
    fn residual_of_exact_solution() {
        let grid = TimeGrid::span(0.0, 1.0, 1e-3).unwrap();
        let sys = decay_system(grid);
        let x = GridFunction::from_fn(grid, |t| c((-t).exp()));
        let r = ode_residual(&x, &x, &sys).unwrap();
        assert!(r < 1e-9, "residual {r}");
    }

    #[test]
    fn residual_detects_injected_defect() {
        let grid = TimeGrid::span(0.0, 1.0, 1e-3).unwrap();
        let sys = decay_system(grid);
        let x = GridFunction::from_fn(grid, |t| c((-t).exp() * (1.0 + 0.01 * t.sin())));
        let y = GridFunction::from_fn(grid, |t| c((-t).exp()));
        assert!(ode_residual(&x, &y, &sys).unwrap() > 1e-3);
    }

    #[test]
    fn residual_monotone_in_defect() {
        let grid = TimeGrid::span(0.0, 1.0, 1e-3).unwrap();
        let sys = decay_system(grid);
        let y = GridFunction::from_fn(grid, |t| c((-t).exp()));
        let mut prev = 0.0;
        for amp in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2] {
            let x = GridFunction::from_fn(grid, |t| c((-t).exp() * (1.0 + amp * t.sin())));
            let r = ode_residual(&x, &y, &sys).unwrap();
            assert!(r > prev, "amp {amp}: {r} <= {prev}");
            prev = r;
        }
    }

    #[test]
    fn residual_of_rk4_trajectory() {
        let grid = TimeGrid::span(0.0, 1.0, 1e-3).unwrap();
        let z = Complex64::new(0.0, 0.0);
        let sys = CoefficientSystem::from_fns(
            grid,
            |t| c(-1.0 + 0.3 * t),
            |_| c(-0.5),
            |t| Complex64::new(-0.5, 0.2 * t),
            |_| c(-0.5),
            |t| c(t.cos()),
            |_| z,
        )
        .unwrap();
        let out = rk4_integrate(&coupled_field(&sys), &[c(1.0), c(0.5)], grid).unwrap();
        let x = GridFunction::new(grid, out.iter().map(|s| s[0]).collect()).unwrap();
        let y = GridFunction::new(grid, out.iter().map(|s| s[1]).collect()).unwrap();
        let r = ode_residual(&x, &y, &sys).unwrap();
        assert!(r < 1e-8, "residual {r}");
    }

    #[test]
    fn residual_needs_five_nodes() {
        let grid = TimeGrid::new(0.0, 0.1, 4).unwrap();
        let sys = decay_system(grid);
        let x = GridFunction::constant(grid, c(1.0));
        assert!(matches!(ode_residual(&x, &x, &sys), Err(Error::Grid(_))));
    }

    #[test]
    fn interpolation_exact_for_cubics() {
        let grid = TimeGrid::span(0.0, 1.0, 0.1).unwrap();
        let f = |t: f64| c(1.0 - 2.0 * t + 0.5 * t * t * t);
        let v: Vec<_> = grid.times().map(f).collect();
        for t in [0.0, 0.05, 0.37, 0.95, 1.0] {
            assert!((interpolate(&grid, &v, t) - f(t)).norm() < 1e-13);
        }
    }
}
