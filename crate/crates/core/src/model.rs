//! Physical parameters, the positive-P drift and noise factor, and the
//! mappings onto the six-coefficient coupled system and the large-field
//! scaled system.
//!
//! The deterministic part of the Itô pair is
//!
//! ```text
//! dα/dt  = a α  − κ α² β* + E  + i√κ α  ξ₁
//! dβ*/dt = a* β* − κ β*² α + E* − i√κ β* ξ₂
//! ```
//!
//! with `a = −(γ/2 + iδ)`. `α` and `β*` are independent complex variables;
//! nothing here assumes `β* = conj(α)`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A complex amplitude (α, β*, Z₀, coefficient samples).
pub type ComplexAmplitude = Complex64;

pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Uniform time grid `t_k = t0 + k·dt`, `k = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n: usize) -> Result<Self> {
        if !t0.is_finite() || !dt.is_finite() || dt <= 0.0 {
            return Err(Error::Grid(format!("need finite t0 and dt > 0 (t0={t0}, dt={dt})")));
        }
        if n == 0 {
            return Err(Error::Grid("grid needs at least one node".into()));
        }
        Ok(Self { t0, dt, n })
    }

    /// Grid covering `[t0, t_end]` with step `dt`. The node count is rounded
    /// to the nearest integer number of steps.
    pub fn span(t0: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(t_end > t0) || !t_end.is_finite() {
            return Err(Error::Grid(format!("need t_end > t0 (t0={t0}, t_end={t_end})")));
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::Grid(format!("need dt > 0 (dt={dt})")));
        }
        let steps = ((t_end - t0) / dt).round() as usize;
        Self::new(t0, dt, steps.max(1) + 1)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.n - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |k| self.t(k))
    }

    /// Index of the node closest to `t`, clamped to the grid.
    pub fn nearest(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.n - 1)
        }
    }
}

/// A complex function sampled at every node of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: TimeGrid,
    pub values: Vec<ComplexAmplitude>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, values: Vec<ComplexAmplitude>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|z| !z.is_finite()) {
            return Err(Error::Domain("grid function has non-finite samples".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> ComplexAmplitude) -> Self {
        Self {
            grid,
            values: grid.times().map(f).collect(),
        }
    }

    pub fn constant(grid: TimeGrid, value: ComplexAmplitude) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Max modulus over the grid.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn map(&self, f: impl Fn(ComplexAmplitude) -> ComplexAmplitude) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().copied().map(f).collect(),
        }
    }

    /// Nodewise combination of two functions on the same grid.
    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(ComplexAmplitude, ComplexAmplitude) -> ComplexAmplitude,
    ) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect(),
        }
    }
}

/// The positive-P pair `(α, β*)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhasePoint {
    pub alpha: ComplexAmplitude,
    pub beta_star: ComplexAmplitude,
}

impl PhasePoint {
    pub const ORIGIN: PhasePoint = PhasePoint {
        alpha: Complex64::new(0.0, 0.0),
        beta_star: Complex64::new(0.0, 0.0),
    };

    pub fn new(alpha: ComplexAmplitude, beta_star: ComplexAmplitude) -> Self {
        Self { alpha, beta_star }
    }

    pub fn real(alpha: f64, beta_star: f64) -> Self {
        Self::new(c(alpha, 0.0), c(beta_star, 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta_star.is_finite()
    }

    /// Largest component modulus.
    pub fn max_norm(&self) -> f64 {
        self.alpha.norm().max(self.beta_star.norm())
    }

    /// `α·β*`, the photon-number estimator.
    pub fn number(&self) -> ComplexAmplitude {
        self.alpha * self.beta_star
    }
}

/// `(γ, δ, κ, E)`: decay rate, detuning, two-photon loss coefficient and
/// (complex) drive.
///
/// Fields are public so the κ = 0 limit can be built explicitly in
/// numerical experiments; [`PhysicalParams::new`] is the validated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub gamma: f64,
    pub delta: f64,
    pub kappa: f64,
    pub drive: ComplexAmplitude,
}

impl PhysicalParams {
    pub fn new(gamma: f64, delta: f64, kappa: f64, drive: ComplexAmplitude) -> Result<Self> {
        if !(gamma.is_finite() && delta.is_finite() && kappa.is_finite() && drive.is_finite()) {
            return Err(Error::Domain("parameters must be finite".into()));
        }
        if gamma < 0.0 {
            return Err(Error::Domain(format!("gamma must be >= 0, got {gamma}")));
        }
        if kappa <= 0.0 {
            return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
        }
        Ok(Self { gamma, delta, kappa, drive })
    }

    /// `a = −(γ/2 + iδ)`.
    pub fn a(&self) -> ComplexAmplitude {
        -c(0.5 * self.gamma, self.delta)
    }
}

/// Validated constructor; see [`PhysicalParams::new`].
pub fn make_params(
    gamma: f64,
    delta: f64,
    kappa: f64,
    drive: ComplexAmplitude,
) -> Result<PhysicalParams> {
    PhysicalParams::new(gamma, delta, kappa, drive)
}

/// Noiseless right-hand side `(F₁, F₂)` of the SDE pair.
pub fn drift(state: PhasePoint, params: &PhysicalParams) -> PhasePoint {
    let a = params.a();
    let k = params.kappa;
    let PhasePoint { alpha, beta_star } = state;
    PhasePoint {
        alpha: a * alpha - k * alpha * alpha * beta_star + params.drive,
        beta_star: a.conj() * beta_star - k * beta_star * beta_star * alpha + params.drive.conj(),
    }
}

/// Diagonal noise factor `g` with `g gᵀ = diag(−κα², −κβ*²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionFactor {
    pub g11: ComplexAmplitude,
    pub g22: ComplexAmplitude,
}

impl DiffusionFactor {
    /// Diagonal of the diffusion matrix reproduced from the factor.
    pub fn diffusion_diagonal(&self) -> (ComplexAmplitude, ComplexAmplitude) {
        (self.g11 * self.g11, self.g22 * self.g22)
    }
}

pub fn diffusion_factor(state: PhasePoint, params: &PhysicalParams) -> DiffusionFactor {
    let s = params.kappa.sqrt();
    DiffusionFactor {
        g11: I * s * state.alpha,
        g22: -I * s * state.beta_star,
    }
}

/// Six time-dependent coefficients of the coupled system
///
/// ```text
/// dx/dt = a(t) x + b(t) x² y + f(t)
/// dy/dt = c(t) y + d(t) y² x + g(t)
/// ```
///
/// sampled on a uniform grid. Note the `+b x² y` sign: the physical model
/// enters with `b = d = −κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSystem {
    pub grid: TimeGrid,
    pub a: Vec<ComplexAmplitude>,
    pub b: Vec<ComplexAmplitude>,
    pub c: Vec<ComplexAmplitude>,
    pub d: Vec<ComplexAmplitude>,
    pub f: Vec<ComplexAmplitude>,
    pub g: Vec<ComplexAmplitude>,
}

impl CoefficientSystem {
    pub fn new(
        grid: TimeGrid,
        a: Vec<ComplexAmplitude>,
        b: Vec<ComplexAmplitude>,
        c: Vec<ComplexAmplitude>,
        d: Vec<ComplexAmplitude>,
        f: Vec<ComplexAmplitude>,
        g: Vec<ComplexAmplitude>,
    ) -> Result<Self> {
        let n = grid.len();
        for (name, v) in [("a", &a), ("b", &b), ("c", &c), ("d", &d), ("f", &f), ("g", &g)] {
            if v.len() != n {
                return Err(Error::Grid(format!(
                    "coefficient {name} has {} samples, grid has {n}",
                    v.len()
                )));
            }
            if v.iter().any(|z| !z.is_finite()) {
                return Err(Error::Domain(format!("coefficient {name} has non-finite samples")));
            }
        }
        Ok(Self { grid, a, b, c, d, f, g })
    }

    /// Samples each coefficient from a closure of time.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fns(
        grid: TimeGrid,
        a: impl Fn(f64) -> ComplexAmplitude,
        b: impl Fn(f64) -> ComplexAmplitude,
        c: impl Fn(f64) -> ComplexAmplitude,
        d: impl Fn(f64) -> ComplexAmplitude,
        f: impl Fn(f64) -> ComplexAmplitude,
        g: impl Fn(f64) -> ComplexAmplitude,
    ) -> Result<Self> {
        let s = |h: &dyn Fn(f64) -> ComplexAmplitude| grid.times().map(h).collect::<Vec<_>>();
        Self::new(grid, s(&a), s(&b), s(&c), s(&d), s(&f), s(&g))
    }

    /// Same system with `f ≡ g ≡ 0`.
    pub fn homogeneous_part(&self) -> Self {
        let zero = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        Self {
            f: zero.clone(),
            g: zero,
            ..self.clone()
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.f.iter().chain(self.g.iter()).all(|z| *z == Complex64::new(0.0, 0.0))
    }
}

/// Physical instance of the coupled system: `a(t) = a`, `c(t) = a*`,
/// `b(t) = d(t) = −κ`, `f(t) = E`, `g(t) = E*`.
pub fn to_coefficient_system(params: &PhysicalParams, grid: TimeGrid) -> CoefficientSystem {
    let n = grid.len();
    let a = params.a();
    let loss = c(-params.kappa, 0.0);
    CoefficientSystem {
        grid,
        a: vec![a; n],
        b: vec![loss; n],
        c: vec![a.conj(); n],
        d: vec![loss; n],
        f: vec![params.drive; n],
        g: vec![params.drive.conj(); n],
    }
}

/// Large-drive rescaling `α = xE`, `β* = yE`, `κ = b/E²`.
///
/// For complex drive the scaled loss is `b = κ|E|²` and the noise amplitude
/// `√b/|E| = √κ`. The drift keeps the complex factor `κE²` so the map stays
/// exact; for real positive `E` it reduces to `(ax − bx²y + 1, a*y − by²x + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledSystem {
    pub b_tilde: f64,
    pub noise_amp: f64,
    pub params: PhysicalParams,
}

impl ScaledSystem {
    /// `(α, β*) ↦ (x, y)`.
    pub fn to_scaled(&self, state: PhasePoint) -> PhasePoint {
        let e = self.params.drive;
        PhasePoint::new(state.alpha / e, state.beta_star / e)
    }

    /// `(x, y) ↦ (α, β*)`.
    pub fn to_physical(&self, scaled: PhasePoint) -> PhasePoint {
        let e = self.params.drive;
        PhasePoint::new(scaled.alpha * e, scaled.beta_star * e)
    }

    /// Noiseless drift of `(x, y)`.
    pub fn drift(&self, scaled: PhasePoint) -> PhasePoint {
        let e = self.params.drive;
        let a = self.params.a();
        let loss = self.params.kappa * e * e;
        let PhasePoint { alpha: x, beta_star: y } = scaled;
        PhasePoint {
            alpha: a * x - loss * x * x * y + 1.0,
            beta_star: a.conj() * y - loss * y * y * x + e.conj() / e,
        }
    }
}

pub fn scale_large_field(params: &PhysicalParams) -> Result<ScaledSystem> {
    let e = params.drive.norm();
    if e == 0.0 {
        return Err(Error::Domain("large-field scaling needs a nonzero drive".into()));
    }
    let b_tilde = params.kappa * e * e;
    Ok(ScaledSystem {
        b_tilde,
        noise_amp: b_tilde.sqrt() / e,
        params: *params,
    })
}
