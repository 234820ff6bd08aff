//! Euler–Maruyama paths of the positive-P SDE pair and ensemble moments.
//!
//! Noise comes from a counter-based generator: the pair drawn at step
//! `counter` of trajectory `stream_index` depends only on
//! `(master_seed, stream_index, counter)`. Ensembles are reduced chunk by
//! chunk in trajectory-index order, so the statistics do not depend on how
//! many threads produced them.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::error::Result;
use crate::model::{diffusion_factor, drift, scale_large_field, PhasePoint, PhysicalParams, TimeGrid};

/// Component magnitude at which a path is truncated.
pub const TRUNCATION_LIMIT: f64 = 1e9;

/// Trajectories per reduction chunk. Part of the reproducibility contract:
/// changing it changes the floating-point summation order.
const CHUNK: usize = 32;
/// Chunks simulated concurrently before being folded in.
const WAVE: usize = 16;

/// Position in the noise sequence of one trajectory.
#[derive(Clone)]
pub struct NoiseStream {
    master_seed: u64,
    stream_index: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl std::fmt::Debug for NoiseStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseStream")
            .field("master_seed", &self.master_seed)
            .field("stream_index", &self.stream_index)
            .field("counter", &self.counter)
            .finish()
    }
}

impl PartialEq for NoiseStream {
    fn eq(&self, other: &Self) -> bool {
        (self.master_seed, self.stream_index, self.counter)
            == (other.master_seed, other.stream_index, other.counter)
    }
}

impl NoiseStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self::at(master_seed, stream_index, 0)
    }

    /// Stream positioned at `counter` pairs from its start.
    pub fn at(master_seed: u64, stream_index: u64, counter: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        // Each pair consumes two u64 = four 32-bit words.
        rng.set_word_pos(u128::from(counter) * 4);
        Self { master_seed, stream_index, counter, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Two independent standard normals (Box–Muller), advancing the counter.
    pub fn next_pair(&mut self) -> (f64, f64) {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        self.counter += 1;
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = ((a >> 11) + 1) as f64 * SCALE;
        let u2 = (b >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }
}

/// The pair at the stream's current position, and the advanced stream.
pub fn gaussian_pair(stream: &NoiseStream) -> ((f64, f64), NoiseStream) {
    let mut next = stream.clone();
    let pair = next.next_pair();
    (pair, next)
}

/// One Itô Euler–Maruyama step with supplied standard normals `(ξ₁, ξ₂)`;
/// the Wiener increments are `ξ√dt`.
pub fn em_step(state: PhasePoint, params: &PhysicalParams, dt: f64, noise: (f64, f64)) -> PhasePoint {
    let f = drift(state, params);
    let g = diffusion_factor(state, params);
    let sq = dt.sqrt();
    PhasePoint {
        alpha: state.alpha + f.alpha * dt + g.g11 * (noise.0 * sq),
        beta_star: state.beta_star + f.beta_star * dt + g.g22 * (noise.1 * sq),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    /// One state per node up to truncation.
    pub states: Vec<PhasePoint>,
    pub seed: u64,
    pub stream_index: u64,
    /// First time at which the path left the finite region.
    pub truncated_at: Option<f64>,
}

fn run_path(
    params: &PhysicalParams,
    init: PhasePoint,
    grid: TimeGrid,
    stream: &mut NoiseStream,
    mut visit: impl FnMut(usize, PhasePoint),
) -> Option<f64> {
    let dt = grid.dt();
    let mut state = init;
    visit(0, state);
    for k in 1..grid.len() {
        state = em_step(state, params, dt, stream.next_pair());
        if !state.is_finite() || state.max_norm() > TRUNCATION_LIMIT {
            return Some(grid.t(k));
        }
        visit(k, state);
    }
    None
}

/// Euler–Maruyama path, one noise pair per step, stopped at the first
/// state exceeding [`TRUNCATION_LIMIT`].
pub fn simulate_trajectory(
    params: &PhysicalParams,
    init: PhasePoint,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Trajectory {
    let mut stream = stream;
    let seed = stream.master_seed();
    let stream_index = stream.stream_index();
    let mut states = Vec::with_capacity(grid.len());
    let truncated_at = run_path(params, init, grid, &mut stream, |_, s| states.push(s));
    Trajectory { grid, states, seed, stream_index, truncated_at }
}

/// Per-node running moments (Welford, merged with Chan's update).
#[derive(Debug, Clone)]
struct Moments {
    count: Vec<u64>,
    // α re, α im, β* re, β* im, n re, n im
    mean: Vec<[f64; 6]>,
    // second central moments of the first four
    m2: Vec<[f64; 4]>,
    truncated: usize,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            count: vec![0; n],
            mean: vec![[0.0; 6]; n],
            m2: vec![[0.0; 4]; n],
            truncated: 0,
        }
    }

    fn push(&mut self, k: usize, s: PhasePoint) {
        let num = s.number();
        let x = [s.alpha.re, s.alpha.im, s.beta_star.re, s.beta_star.im, num.re, num.im];
        self.count[k] += 1;
        let n = self.count[k] as f64;
        let mean = &mut self.mean[k];
        for j in 0..6 {
            let d = x[j] - mean[j];
            mean[j] += d / n;
            if j < 4 {
                self.m2[k][j] += d * (x[j] - mean[j]);
            }
        }
    }

    fn merge(&mut self, other: &Moments) {
        self.truncated += other.truncated;
        for k in 0..self.count.len() {
            let nb = other.count[k];
            if nb == 0 {
                continue;
            }
            let na = self.count[k];
            if na == 0 {
                self.count[k] = nb;
                self.mean[k] = other.mean[k];
                self.m2[k] = other.m2[k];
                continue;
            }
            let (fa, fb) = (na as f64, nb as f64);
            let n = fa + fb;
            for j in 0..6 {
                let d = other.mean[k][j] - self.mean[k][j];
                if j < 4 {
                    self.m2[k][j] += other.m2[k][j] + d * d * fa * fb / n;
                }
                self.mean[k][j] += d * fb / n;
            }
            self.count[k] = na + nb;
        }
    }
}

/// Ensemble moments at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub grid: TimeGrid,
    pub n_traj: usize,
    /// Trajectories still alive at each node.
    pub n_effective: Vec<u64>,
    pub mean_alpha: Vec<Complex64>,
    pub mean_beta_star: Vec<Complex64>,
    /// Mean of the per-trajectory products `α β*`.
    pub mean_n: Vec<Complex64>,
    pub var_alpha_re: Vec<f64>,
    pub var_alpha_im: Vec<f64>,
    pub var_beta_re: Vec<f64>,
    pub var_beta_im: Vec<f64>,
    pub n_truncated: usize,
}

impl EnsembleStats {
    fn from_moments(grid: TimeGrid, n_traj: usize, m: Moments) -> Self {
        let n = grid.len();
        let var = |k: usize, j: usize| {
            let c = m.count[k];
            if c < 2 {
                0.0
            } else {
                (m.m2[k][j] / (c - 1) as f64).max(0.0)
            }
        };
        Self {
            grid,
            n_traj,
            n_effective: m.count.clone(),
            mean_alpha: m.mean.iter().map(|v| Complex64::new(v[0], v[1])).collect(),
            mean_beta_star: m.mean.iter().map(|v| Complex64::new(v[2], v[3])).collect(),
            mean_n: m.mean.iter().map(|v| Complex64::new(v[4], v[5])).collect(),
            var_alpha_re: (0..n).map(|k| var(k, 0)).collect(),
            var_alpha_im: (0..n).map(|k| var(k, 1)).collect(),
            var_beta_re: (0..n).map(|k| var(k, 2)).collect(),
            var_beta_im: (0..n).map(|k| var(k, 3)).collect(),
            n_truncated: m.truncated,
        }
    }

    /// `sqrt(var(Re α) + var(Im α))` at node `k`.
    pub fn alpha_spread(&self, k: usize) -> f64 {
        (self.var_alpha_re[k] + self.var_alpha_im[k]).sqrt()
    }

    /// Standard error of the mean of α at node `k`.
    pub fn alpha_standard_error(&self, k: usize) -> f64 {
        let n = self.n_effective[k].max(1) as f64;
        self.alpha_spread(k) / n.sqrt()
    }
}

fn simulate_chunk(
    params: &PhysicalParams,
    init: PhasePoint,
    grid: TimeGrid,
    master_seed: u64,
    range: std::ops::Range<usize>,
) -> Moments {
    let mut m = Moments::new(grid.len());
    for idx in range {
        let mut stream = NoiseStream::new(master_seed, idx as u64);
        if run_path(params, init, grid, &mut stream, |k, s| m.push(k, s)).is_some() {
            m.truncated += 1;
        }
    }
    m
}

/// Runs `n_traj` paths (trajectory `k` on stream `k`) on the current rayon
/// pool and folds their moments in index order.
pub fn simulate_ensemble(
    params: &PhysicalParams,
    init: PhasePoint,
    grid: TimeGrid,
    n_traj: usize,
    master_seed: u64,
) -> EnsembleStats {
    let n_traj = n_traj.max(1);
    let chunks: Vec<_> = (0..n_traj)
        .step_by(CHUNK)
        .map(|lo| lo..(lo + CHUNK).min(n_traj))
        .collect();
    let mut total = Moments::new(grid.len());
    for wave in chunks.chunks(WAVE) {
        let parts: Vec<Moments> = wave
            .par_iter()
            .map(|r| simulate_chunk(params, init, grid, master_seed, r.clone()))
            .collect();
        for p in &parts {
            total.merge(p);
        }
    }
    EnsembleStats::from_moments(grid, n_traj, total)
}

/// Noise amplitude `√b/|E|` of the scaled equations, which equals `√κ`.
pub fn scaled_noise_amplitude_check(params: &PhysicalParams) -> Result<f64> {
    let scaled = scale_large_field(params)?;
    let e = params.drive.norm();
    let amp = (params.kappa * e * e).sqrt() / e;
    debug_assert!((amp - scaled.noise_amp).abs() <= 1e-12 * amp.max(1e-300));
    Ok(amp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::model::c;
    use crate::oracle;

    fn p(g: f64, d: f64, k: f64, e: f64) -> PhysicalParams {
        PhysicalParams::new(g, d, k, c(e, 0.0)).unwrap()
    }

    #[test]
    fn pair_is_deterministic() {
        let s = NoiseStream::at(42, 0, 0);
        let (a, next_a) = gaussian_pair(&s);
        let (b, next_b) = gaussian_pair(&s);
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
        assert_eq!(next_a.counter(), 1);
        assert_eq!(next_a, next_b);
    }

    #[test]
    fn positioned_stream_matches_sequential() {
        let mut seq = NoiseStream::new(7, 3);
        let pairs: Vec<_> = (0..50).map(|_| seq.next_pair()).collect();
        for (k, pair) in pairs.iter().enumerate() {
            let (q, _) = gaussian_pair(&NoiseStream::at(7, 3, k as u64));
            assert_eq!(pair.0.to_bits(), q.0.to_bits());
            assert_eq!(pair.1.to_bits(), q.1.to_bits());
        }
    }

    #[test]
    fn standard_normal_moments() {
        let mut s = NoiseStream::new(42, 0);
        let n = 1_000_000usize;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n / 2 {
            let (a, b) = s.next_pair();
            sum += a + b;
            sq += a * a + b * b;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn streams_are_uncorrelated() {
        let (mut s0, mut s1) = (NoiseStream::new(42, 0), NoiseStream::new(42, 1));
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n / 2 {
            let (a0, b0) = s0.next_pair();
            let (a1, b1) = s1.next_pair();
            acc += a0 * a1 + b0 * b1;
        }
        assert!((acc / n as f64).abs() < 0.01);
    }

    #[test]
    fn em_step_examples() {
        let s = em_step(PhasePoint::real(1.0, 1.0), &p(1.0, 0.0, 1.0, 2.0), 0.1, (0.0, 0.0));
        assert!((s.alpha - c(1.05, 0.0)).norm() < 1e-15);
        assert!((s.beta_star - c(1.05, 0.0)).norm() < 1e-15);

        let params = PhysicalParams::new(0.5, 0.3, 2.0, c(1.5, -0.5)).unwrap();
        let s = em_step(PhasePoint::ORIGIN, &params, 0.01, (3.0, -7.0));
        assert_eq!(s.alpha, params.drive * 0.01);
        assert_eq!(s.beta_star, params.drive.conj() * 0.01);

        let mut free = p(1.0, 0.2, 1.0, 1.0);
        free.kappa = 0.0;
        let x = PhasePoint::new(c(0.3, 0.1), c(-0.2, 0.4));
        assert_eq!(em_step(x, &free, 0.01, (5.0, 5.0)), em_step(x, &free, 0.01, (0.0, 0.0)));
    }

    #[test]
    fn weak_noise_reaches_linear_steady_state() {
        let params = p(1.0, 0.0, 1e-6, 2.0);
        let grid = TimeGrid::span(0.0, 20.0, 1e-3).unwrap();
        let tr = simulate_trajectory(&params, PhasePoint::ORIGIN, grid, NoiseStream::new(1, 0));
        assert!(tr.truncated_at.is_none());
        let det = oracle::rk4_integrate(&oracle::physical_field(&params), &[c(0.0, 0.0), c(0.0, 0.0)], grid).unwrap();
        let last = tr.states.last().unwrap().alpha;
        assert!((last - c(4.0, 0.0)).norm() < 0.05);
        assert!((last - det.last().unwrap()[0]).norm() < 0.05);
    }

    #[test]
    fn trajectory_is_reproducible() {
        let params = p(1.0, 0.0, 0.1, 1.0);
        let grid = TimeGrid::span(0.0, 2.0, 1e-3).unwrap();
        let a = simulate_trajectory(&params, PhasePoint::ORIGIN, grid, NoiseStream::new(9, 4));
        let b = simulate_trajectory(&params, PhasePoint::ORIGIN, grid, NoiseStream::new(9, 4));
        assert_eq!(a, b);
        assert_eq!(a.states.len(), grid.len());
        assert_eq!((a.seed, a.stream_index), (9, 4));
    }

    #[test]
    fn noiseless_path_is_explicit_euler() {
        let mut params = p(1.0, 0.4, 1.0, 1.0);
        params.kappa = 0.3;
        let grid = TimeGrid::span(0.0, 1.0, 0.01).unwrap();
        let mut s = PhasePoint::ORIGIN;
        for _ in 1..grid.len() {
            let f = drift(s, &params);
            s = PhasePoint::new(s.alpha + f.alpha * 0.01, s.beta_star + f.beta_star * 0.01);
        }
        let mut state = PhasePoint::ORIGIN;
        for _ in 1..grid.len() {
            state = em_step(state, &params, 0.01, (0.0, 0.0));
        }
        assert_eq!(s, state);
    }

    #[test]
    fn large_noise_truncates_without_non_finite_values() {
        // Strong two-photon noise without linear damping: some positive-P
        // paths escape to infinity in finite time.
        let params = p(0.0, 0.0, 10.0, 1.0);
        let grid = TimeGrid::span(0.0, 10.0, 1e-2).unwrap();
        let mut truncated = 0;
        for k in 0..200 {
            let tr = simulate_trajectory(&params, PhasePoint::ORIGIN, grid, NoiseStream::new(5, k));
            assert!(tr.states.iter().all(|s| s.is_finite() && s.max_norm() <= TRUNCATION_LIMIT));
            if let Some(t) = tr.truncated_at {
                truncated += 1;
                assert_eq!(tr.states.len(), grid.nearest(t));
            } else {
                assert_eq!(tr.states.len(), grid.len());
            }
        }
        assert!(truncated > 0);
        let stats = simulate_ensemble(&params, PhasePoint::ORIGIN, grid, 200, 5);
        assert_eq!(stats.n_truncated, truncated);
        assert!(stats.mean_alpha.iter().all(|z| z.is_finite()));
        assert!(*stats.n_effective.last().unwrap() as usize <= 200 - truncated);
    }

    #[test]
    fn single_trajectory_ensemble() {
        let params = p(1.0, 0.0, 0.05, 1.0);
        let grid = TimeGrid::span(0.0, 1.0, 1e-2).unwrap();
        let stats = simulate_ensemble(&params, PhasePoint::ORIGIN, grid, 1, 3);
        let tr = simulate_trajectory(&params, PhasePoint::ORIGIN, grid, NoiseStream::new(3, 0));
        for (k, s) in tr.states.iter().enumerate() {
            assert_eq!(stats.mean_alpha[k], s.alpha);
            assert_eq!(stats.mean_beta_star[k], s.beta_star);
            assert!((stats.mean_n[k] - s.number()).norm() <= 1e-15 * (1.0 + s.number().norm()));
            assert_eq!(stats.var_alpha_re[k], 0.0);
            assert_eq!(stats.var_beta_im[k], 0.0);
        }
    }

    #[test]
    fn photon_number_uses_per_path_products() {
        let params = p(1.0, 0.0, 0.5, 1.0);
        let grid = TimeGrid::span(0.0, 1.0, 1e-2).unwrap();
        let stats = simulate_ensemble(&params, PhasePoint::ORIGIN, grid, 64, 11);
        let k = grid.len() - 1;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..64 {
            let tr = simulate_trajectory(&params, PhasePoint::ORIGIN, grid, NoiseStream::new(11, i));
            acc += tr.states[k].number();
        }
        assert!((stats.mean_n[k] - acc / 64.0).norm() < 1e-12);
        assert!((stats.mean_n[k] - stats.mean_alpha[k] * stats.mean_beta_star[k]).norm() > 1e-6);
    }

    #[test]
    fn ensemble_independent_of_thread_count() {
        let params = p(1.0, 0.0, 0.05, 1.0);
        let grid = TimeGrid::span(0.0, 1.0, 1e-2).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_ensemble(&params, PhasePoint::ORIGIN, grid, 300, 77))
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        for k in 0..grid.len() {
            assert_eq!(a.mean_alpha[k].re.to_bits(), b.mean_alpha[k].re.to_bits());
            assert_eq!(a.var_alpha_im[k].to_bits(), b.var_alpha_im[k].to_bits());
        }
    }

    #[test]
    fn noise_amplitude_scaling() {
        let amp = scaled_noise_amplitude_check(&p(1.0, 0.0, 1.0 / 100.0, 10.0)).unwrap();
        assert!((amp - 0.1).abs() < 1e-12);
        let amp20 = scaled_noise_amplitude_check(&p(1.0, 0.0, 1.0 / 400.0, 20.0)).unwrap();
        assert!((amp20 - 0.05).abs() < 1e-12);
        assert!(matches!(scaled_noise_amplitude_check(&p(1.0, 0.0, 1.0, 0.0)), Err(Error::Domain(_))));
    }
}
