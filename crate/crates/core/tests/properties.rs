//! Cross-module properties: analytic results against the RK4 oracle,
//! stationary classification against actual dynamics, SDE noiseless limit.

use num_complex::Complex64;
use proptest::prelude::*;
use tpa_cavity::analytic::{self, Verdict};
use tpa_cavity::model::{drift, CoefficientSystem, PhasePoint, PhysicalParams, TimeGrid};
use tpa_cavity::oracle;
use tpa_cavity::sde::{self, NoiseStream};
use tpa_cavity::stationary::{self, CubicMode, Stability};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn params() -> impl Strategy<Value = PhysicalParams> {
    (0.0..2.0f64, -2.0..2.0f64, 0.1..2.0f64, 0.5..4.0f64, -3.1..3.1f64)
        .prop_map(|(g, d, k, r, th)| PhysicalParams::new(g, d, k, Complex64::from_polar(r, th)).unwrap())
}

fn complex(r: f64) -> impl Strategy<Value = Complex64> {
    (-r..r, -r..r).prop_map(|(a, b)| Complex64::new(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn stable_points_attract(p in params(), dir in (complex(1.0), complex(1.0))) {
        let s = stationary::stationary_points(&p, CubicMode::SelfConsistent).unwrap();
        for sp in s.accepted.iter().filter(|sp| sp.classification == Stability::Stable) {
            let rate = sp.eigenvalues.iter().map(|l| -l.re).fold(f64::INFINITY, f64::min);
            prop_assume!(rate > 0.05);
            let scale = 1e-4 / dir.0.norm().max(dir.1.norm()).max(1e-3);
            let init = [sp.point.alpha + dir.0 * scale, sp.point.beta_star + dir.1 * scale];
            let fastest = sp.eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
            let dt = (0.05 / fastest).min(1e-2);
            let grid = TimeGrid::span(0.0, 12.0 / rate, dt).unwrap();
            let out = oracle::rk4_integrate(&oracle::physical_field(&p), &init, grid).unwrap();
            let last = out.last().unwrap();
            let gap = (last[0] - sp.point.alpha).norm().max((last[1] - sp.point.beta_star).norm());
            prop_assert!(gap < 1e-6, "gap {gap} from {:?}", sp.point);
        }
    }

    #[test]
    fn unstable_points_repel(p in params(), dir in (complex(1.0), complex(1.0))) {
        let s = stationary::stationary_points(&p, CubicMode::SelfConsistent).unwrap();
        for sp in s.accepted.iter().filter(|sp| sp.classification == Stability::Unstable) {
            let rate = sp.eigenvalues.iter().map(|l| l.re).fold(f64::MIN, f64::max);
            prop_assume!(rate > 0.05);
            let scale = 1e-6 / dir.0.norm().max(dir.1.norm()).max(1e-3);
            let init = [sp.point.alpha + dir.0 * scale, sp.point.beta_star + dir.1 * scale];
            let fastest = sp.eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
            let dt = (0.05 / fastest).min(1e-2);
            let grid = TimeGrid::span(0.0, 8.0 / rate, dt).unwrap();
            let gap = match oracle::rk4_integrate(&oracle::physical_field(&p), &init, grid) {
                Ok(out) => out
                    .iter()
                    .map(|s| (s[0] - sp.point.alpha).norm().max((s[1] - sp.point.beta_star).norm()))
                    .fold(0.0, f64::max),
                Err(_) => f64::INFINITY,
            };
            prop_assert!(gap > 1e-4, "stayed within {gap} of {:?}", sp.point);
        }
    }

    #[test]
    fn verified_homogeneous_matches_rk4(
        a in complex(1.0), b in complex(1.0), cc in complex(1.0), d in complex(1.0),
        x0 in complex(1.0), y0 in complex(1.0),
    ) {
        let grid = TimeGrid::span(0.0, 1.0, 1e-3).unwrap();
        let sys = CoefficientSystem::from_fns(grid, |t| a * (1.0 - 0.3 * t), |_| b, |_| cc, |t| d * (1.0 + 0.2 * t), |_| c(0.0), |_| c(0.0)).unwrap();
        let Ok(rep) = analytic::solve_homogeneous(&sys, x0, y0) else { return Ok(()) };
        let Ok(rk) = oracle::rk4_integrate(&oracle::coupled_field(&sys), &[x0, y0], grid) else { return Ok(()) };
        if rep.verdict == Verdict::Verified {
            let scale = 1.0 + rep.x.max_norm().max(rep.y.max_norm());
            let gap = (0..grid.len())
                .map(|k| (rep.x.values[k] - rk[k][0]).norm().max((rep.y.values[k] - rk[k][1]).norm()))
                .fold(0.0, f64::max);
            prop_assert!(gap < 1e-5 * scale, "verified but {gap} from RK4");
        }
    }

    #[test]
    fn verified_general_is_a_true_solution(
        f0 in complex(2.0), f1 in complex(1.0), g0 in complex(2.0), g1 in complex(1.0),
        x0 in complex(1.0), y0 in complex(1.0),
    ) {
        let grid = TimeGrid::span(0.0, 1.0, 1e-3).unwrap();
        let sys = CoefficientSystem::from_fns(grid, |_| c(-1.0), |_| c(0.0), |_| c(-0.5), |_| c(0.0), |t| f0 + f1 * t, |t| g0 + g1 * t).unwrap();
        let Ok(rep) = analytic::solve_nonhomogeneous_general(&sys, x0, y0) else { return Ok(()) };
        if rep.verdict == Verdict::Verified {
            let rk = oracle::rk4_integrate(&oracle::coupled_field(&sys), &[rep.x.values[0], rep.y.values[0]], grid).unwrap();
            let gap = (0..grid.len())
                .map(|k| (rep.x.values[k] - rk[k][0]).norm().max((rep.y.values[k] - rk[k][1]).norm()))
                .fold(0.0, f64::max);
            prop_assert!(gap < 1e-5 * (1.0 + rep.x.max_norm()), "verified but {gap} from RK4");
        }
    }

    #[test]
    fn gaussian_pair_is_pure(seed in any::<u64>(), stream in any::<u64>(), counter in 0u64..1 << 40) {
        let s = NoiseStream::at(seed, stream, counter);
        let (a, next_a) = sde::gaussian_pair(&s);
        let (b, next_b) = sde::gaussian_pair(&s);
        prop_assert_eq!(a, b);
        prop_assert_eq!(next_a, next_b);
        prop_assert!(a.0.is_finite() && a.1.is_finite());
    }

    #[test]
    fn zero_noise_step_is_euler(p in params(), s in (complex(3.0), complex(3.0)), dt in 1e-4..1e-1f64) {
        let state = PhasePoint::new(s.0, s.1);
        let f = drift(state, &p);
        let next = sde::em_step(state, &p, dt, (0.0, 0.0));
        prop_assert!((next.alpha - (state.alpha + f.alpha * dt)).norm() < 1e-12 * (1.0 + next.alpha.norm()));
        prop_assert!((next.beta_star - (state.beta_star + f.beta_star * dt)).norm() < 1e-12 * (1.0 + next.beta_star.norm()));
    }
}

#[test]
fn trajectory_matches_manual_stepping() {
    let p = PhysicalParams::new(1.0, 0.3, 0.2, Complex64::new(1.0, 0.5)).unwrap();
    let grid = TimeGrid::span(0.0, 0.5, 1e-2).unwrap();
    let traj = sde::simulate_trajectory(&p, PhasePoint::ORIGIN, grid, NoiseStream::new(11, 4));
    let mut stream = NoiseStream::new(11, 4);
    let mut s = PhasePoint::ORIGIN;
    for k in 1..grid.len() {
        s = sde::em_step(s, &p, grid.dt(), stream.next_pair());
        assert_eq!(s, traj.states[k]);
    }
}

#[test]
fn ensemble_first_moment_uses_every_path() {
    let p = PhysicalParams::new(1.0, 0.0, 0.1, c(1.0)).unwrap();
    let grid = TimeGrid::span(0.0, 0.2, 1e-2).unwrap();
    let n = 70;
    let stats = sde::simulate_ensemble(&p, PhasePoint::ORIGIN, grid, n, 5);
    let k = grid.len() - 1;
    let mean: Complex64 = (0..n as u64)
        .map(|i| sde::simulate_trajectory(&p, PhasePoint::ORIGIN, grid, NoiseStream::new(5, i)).states[k].alpha)
        .sum::<Complex64>()
        / n as f64;
    assert!((stats.mean_alpha[k] - mean).norm() < 1e-14);
    assert_eq!(stats.n_effective[k], n as u64);
}
