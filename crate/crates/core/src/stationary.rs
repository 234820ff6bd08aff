//! Stationary points of the noiseless drift and their linear stability.
//!
//! With `β* = Z₀` fixed by a root of a cubic, the second drift equation
//! gives `α = (a* Z₀ + E*)/(κ Z₀²)`. The historical closed form carries the
//! opposite sign on `α`; both mappings are available through
//! [`CubicMode`], and every candidate is checked against the full drift
//! before it is reported as stationary.

use nalgebra::Matrix3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{c, drift, ComplexAmplitude, PhasePoint, PhysicalParams};

/// Acceptance threshold for the drift residual, relative to `max(1, |E|)`.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Root residual bound relative to the largest coefficient magnitude.
pub const ROOT_TOL: f64 = 1e-10;

/// `c3·Z³ + c2·Z² + c1·Z + c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicPoly {
    pub c3: ComplexAmplitude,
    pub c2: ComplexAmplitude,
    pub c1: ComplexAmplitude,
    pub c0: ComplexAmplitude,
}

impl CubicPoly {
    pub fn new(c3: ComplexAmplitude, c2: ComplexAmplitude, c1: ComplexAmplitude, c0: ComplexAmplitude) -> Self {
        Self { c3, c2, c1, c0 }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        ((self.c3 * z + self.c2) * z + self.c1) * z + self.c0
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        (3.0 * self.c3 * z + 2.0 * self.c2) * z + self.c1
    }

    pub fn max_coefficient(&self) -> f64 {
        [self.c3, self.c2, self.c1, self.c0].iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// How `α` is recovered from the cubic root `Z₀ = β*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubicMode {
    /// `α = −(a* Z₀ + E*)/(κ Z₀²)`, the closed form as historically written.
    AsPublished,
    /// `α = +(a* Z₀ + E*)/(κ Z₀²)`, obtained by setting the drift to zero.
    SelfConsistent,
}

impl CubicMode {
    fn alpha_sign(self) -> f64 {
        match self {
            CubicMode::AsPublished => -1.0,
            CubicMode::SelfConsistent => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub classification: Stability,
    pub eigenvalues: [ComplexAmplitude; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryPoint {
    pub point: PhasePoint,
    /// `max(|F₁|, |F₂|)` at `point`.
    pub residual: f64,
    pub classification: Stability,
    pub eigenvalues: [ComplexAmplitude; 2],
}

/// Candidates split by the drift-residual test.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryAnalysis {
    pub mode: CubicMode,
    pub accepted: Vec<StationaryPoint>,
    pub rejected: Vec<StationaryPoint>,
}

/// Cubic in `Z₀ = β*` whose roots parametrize the stationary points.
pub fn stationary_cubic(params: &PhysicalParams, mode: CubicMode) -> Result<CubicPoly> {
    let a = params.a();
    let ac = a.conj();
    let e = params.drive;
    let ec = e.conj();
    let poly = match mode {
        CubicMode::AsPublished => CubicPoly::new(
            params.kappa * e,
            ac * (a - ac),
            ec * (a - 2.0 * ac),
            -ec * ec,
        ),
        CubicMode::SelfConsistent => {
            // α = N/(κZ²), N = a*Z + E*; substitute into F₁ and multiply by κZ³:
            // a N Z − N² + κ E Z³ = 0.
            let n1 = ac;
            let n0 = ec;
            CubicPoly::new(
                params.kappa * e,
                a * n1 - n1 * n1,
                a * n0 - 2.0 * n1 * n0,
                -n0 * n0,
            )
        }
    };
    if poly.c3 == Complex64::new(0.0, 0.0) {
        return Err(Error::Degenerate("leading coefficient κE vanishes".into()));
    }
    Ok(poly)
}

/// All three roots, from the companion-matrix eigenvalues followed by
/// Newton polishing. Multiple roots appear repeated.
pub fn solve_cubic(poly: &CubicPoly) -> Result<[ComplexAmplitude; 3]> {
    if poly.c3 == Complex64::new(0.0, 0.0) {
        return Err(Error::Degenerate("cubic has zero leading coefficient".into()));
    }
    let p2 = poly.c2 / poly.c3;
    let p1 = poly.c1 / poly.c3;
    let p0 = poly.c0 / poly.c3;
    let zero = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let companion = Matrix3::new(
        zero, zero, -p0, //
        one, zero, -p1, //
        zero, one, -p2,
    );
    let eig = companion
        .schur()
        .eigenvalues()
        .ok_or(Error::Convergence { residual: f64::INFINITY })?;

    let tol = ROOT_TOL * poly.max_coefficient();
    let mut roots = [zero; 3];
    for (slot, &r0) in roots.iter_mut().zip(eig.iter()) {
        let mut r = r0;
        let mut res = poly.eval(r).norm();
        for _ in 0..8 {
            let d = poly.derivative(r);
            if d == zero {
                break;
            }
            let cand = r - poly.eval(r) / d;
            let cres = poly.eval(cand).norm();
            if !(cres < res) {
                break;
            }
            r = cand;
            res = cres;
            if res == 0.0 {
                break;
            }
        }
        if !(res < tol) && res != 0.0 {
            return Err(Error::Convergence { residual: res });
        }
        *slot = r;
    }
    Ok(roots)
}

pub type Jacobian = [[ComplexAmplitude; 2]; 2];

/// Holomorphic Jacobian of the drift with respect to `(α, β*)`.
pub fn jacobian(state: PhasePoint, params: &PhysicalParams) -> Jacobian {
    let a = params.a();
    let k = params.kappa;
    let PhasePoint { alpha, beta_star } = state;
    let cross = 2.0 * k * alpha * beta_star;
    [
        [a - cross, -k * alpha * alpha],
        [-k * beta_star * beta_star, a.conj() - cross],
    ]
}

/// Eigenvalues of the Jacobian and the sign of their real parts, with
/// threshold `1e-9·(1 + |a|)`.
pub fn classify_stability(state: PhasePoint, params: &PhysicalParams) -> StabilityReport {
    let j = jacobian(state, params);
    let half_trace = 0.5 * (j[0][0] + j[1][1]);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = (half_trace * half_trace - det).sqrt();
    let eigenvalues = [half_trace + disc, half_trace - disc];

    let eps = 1e-9 * (1.0 + params.a().norm());
    let classification = if eigenvalues.iter().all(|l| l.re < -eps) {
        Stability::Stable
    } else if eigenvalues.iter().any(|l| l.re > eps) {
        Stability::Unstable
    } else {
        Stability::Marginal
    };
    StabilityReport { classification, eigenvalues }
}

fn assess(point: PhasePoint, params: &PhysicalParams) -> StationaryPoint {
    let f = drift(point, params);
    let report = classify_stability(point, params);
    StationaryPoint {
        point,
        residual: f.alpha.norm().max(f.beta_star.norm()),
        classification: report.classification,
        eigenvalues: report.eigenvalues,
    }
}

fn residual_threshold(params: &PhysicalParams) -> f64 {
    RESIDUAL_TOL * params.drive.norm().max(1.0)
}

/// Stationary candidates from the cubic, split into accepted (drift
/// residual below `1e-8·max(1, |E|)`) and rejected. With zero drive the
/// origin is returned directly.
pub fn stationary_points(params: &PhysicalParams, mode: CubicMode) -> Result<StationaryAnalysis> {
    if params.drive == Complex64::new(0.0, 0.0) {
        return Ok(StationaryAnalysis {
            mode,
            accepted: vec![assess(PhasePoint::ORIGIN, params)],
            rejected: Vec::new(),
        });
    }
    let roots = solve_cubic(&stationary_cubic(params, mode)?)?;
    let ac = params.a().conj();
    let ec = params.drive.conj();
    let tol = residual_threshold(params);
    let mut out = StationaryAnalysis {
        mode,
        accepted: Vec::new(),
        rejected: Vec::new(),
    };
    for z in roots {
        let alpha = mode.alpha_sign() * (ac * z + ec) / (params.kappa * z * z);
        let sp = assess(PhasePoint::new(alpha, z), params);
        if sp.point.is_finite() && sp.residual < tol {
            out.accepted.push(sp);
        } else {
            out.rejected.push(sp);
        }
    }
    Ok(out)
}

/// The antisymmetric candidates `α = −β* = w` with `w³ = −E/κ` (all three
/// cube-root branches), assessed against the drift. At `γ = δ = 0` the
/// second drift component evaluates to `2E*`, so none of these is
/// stationary there.
pub fn antisymmetric_candidates(params: &PhysicalParams) -> Vec<StationaryPoint> {
    let base = (params.drive / params.kappa).powf(1.0 / 3.0);
    (0..3)
        .map(|k| {
            let phase = std::f64::consts::FRAC_PI_3 * (1.0 + 4.0 * k as f64);
            let w = base * Complex64::from_polar(1.0, phase);
            assess(PhasePoint::new(w, -w), params)
        })
        .collect()
}
