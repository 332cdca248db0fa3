mod common;

use common::*;
use proptest::prelude::*;
use spacefill::cost::{build_uniform_grid, DomainBox, DomainGrid, KernelConfig, SpaceFillingCost};
use spacefill::dynamics::{simulate_steady_state, MsdModel, SteadyStateOptions};
use spacefill::input::MultisineSpec;
use spacefill::optimizer::{minimize, OptimOptions};

fn unit_box(dim: usize) -> DomainBox {
    DomainBox::new(vec![-1.0; dim], vec![1.0; dim]).unwrap()
}

/// Samples in `[-1.2, 1.2]^dim`, flat.
fn samples(dim: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max).prop_flat_map(move |n| prop::collection::vec(-1.2f64..1.2, n * dim))
}

fn kernel(dim: usize) -> impl Strategy<Value = KernelConfig> {
    (prop::collection::vec(0.02f64..0.5, dim), 0.001f64..0.1)
        .prop_map(|(v, e)| KernelConfig::new(v, e).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tensor_grid_matches_naive_oracle(
        (dim, pts, z, k) in (1usize..=3).prop_flat_map(|d| (
            Just(d),
            prop::collection::vec(2usize..=8, d),
            samples(d, 512),
            kernel(d),
        ))
    ) {
        let grid = build_uniform_grid(&unit_box(dim), &pts).unwrap();
        let cost = SpaceFillingCost::new(grid.clone(), k.clone()).unwrap();
        let (c, g) = cost.value_and_gradient(&z).unwrap();
        let c_ref = naive_cost(grid.centers(), &z, &k.variances, k.epsilon);
        let g_ref = naive_gradient(grid.centers(), &z, &k.variances, k.epsilon);
        prop_assert!((c - c_ref).abs() <= 1e-12 * c_ref, "{c} vs {c_ref}");
        prop_assert!(rel_err(&g, &g_ref) <= 1e-12 || inf_norm(&g_ref) < 1e-300);
    }

    #[test]
    fn center_list_matches_naive_oracle(
        (dim, centers, z, k) in (1usize..=3).prop_flat_map(|d| (
            Just(d),
            (1usize..=64).prop_flat_map(move |n| prop::collection::vec(-1.0f64..1.0, n * d)),
            samples(d, 128),
            kernel(d),
        ))
    ) {
        let grid = DomainGrid::from_centers(unit_box(dim), centers.clone()).unwrap();
        let cost = SpaceFillingCost::new(grid, k.clone()).unwrap();
        let (c, g) = cost.value_and_gradient(&z).unwrap();
        let c_ref = naive_cost(&centers, &z, &k.variances, k.epsilon);
        prop_assert!((c - c_ref).abs() <= 1e-12 * c_ref);
        prop_assert!(rel_err(&g, &naive_gradient(&centers, &z, &k.variances, k.epsilon)) <= 1e-12);
    }

    #[test]
    fn appending_a_sample_lowers_the_cost(
        z in samples(3, 64),
        extra in prop::collection::vec(-1.0f64..1.0, 3),
        k in kernel(3),
    ) {
        let grid = build_uniform_grid(&unit_box(3), &[5, 5, 5]).unwrap();
        let cost = SpaceFillingCost::new(grid, k.clone()).unwrap();
        let before = cost.value(&z).unwrap();
        let mut more = z.clone();
        more.extend_from_slice(&extra);
        let after = cost.value(&more).unwrap();
        prop_assert!(after < before, "{after} !< {before}");
        for c in [before, after] {
            prop_assert!(c > 0.0 && c <= 1.0 / k.epsilon);
        }
    }

    #[test]
    fn cost_ignores_sample_order(z in samples(2, 100), k in kernel(2), seed in any::<u64>()) {
        let grid = build_uniform_grid(&unit_box(2), &[6, 7]).unwrap();
        let cost = SpaceFillingCost::new(grid, k).unwrap();
        let mut rows: Vec<[f64; 2]> = z.chunks(2).map(|c| [c[0], c[1]]).collect();
        let n = rows.len();
        for i in 0..n {
            let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % n as u64) as usize;
            rows.swap(i, j);
        }
        let shuffled: Vec<f64> = rows.concat();
        let (a, b) = (cost.value(&z).unwrap(), cost.value(&shuffled).unwrap());
        prop_assert!((a - b).abs() <= 1e-13 * a);
    }

    #[test]
    fn cost_is_translation_invariant(z in samples(2, 100), k in kernel(2), shift in prop::collection::vec(-5.0f64..5.0, 2)) {
        let grid = build_uniform_grid(&unit_box(2), &[6, 6]).unwrap();
        let moved = DomainBox::new(vec![-1.0 + shift[0], -1.0 + shift[1]], vec![1.0 + shift[0], 1.0 + shift[1]]).unwrap();
        let centers: Vec<f64> = grid.centers().chunks(2).flat_map(|c| [c[0] + shift[0], c[1] + shift[1]]).collect();
        let grid_moved = DomainGrid::from_centers(moved, centers).unwrap();
        let z_moved: Vec<f64> = z.chunks(2).flat_map(|c| [c[0] + shift[0], c[1] + shift[1]]).collect();
        let a = SpaceFillingCost::new(grid, k.clone()).unwrap().value(&z).unwrap();
        let b = SpaceFillingCost::new(grid_moved, k).unwrap().value(&z_moved).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn multisine_is_periodic(
        phases in prop::collection::vec(0.0f64..6.3, 1..10),
        k in -5000i64..5000,
        first in 1usize..20,
    ) {
        let f = phases.len();
        let n = 2 * (first + f) + 2;
        let spec = MultisineSpec::with_target_std(n, 50.0, first, first + f - 1, 3.0, phases).unwrap();
        prop_assert_eq!(spec.sample_at(k), spec.sample_at(k + n as i64));
        let u = spec.generate();
        let idx = k.rem_euclid(n as i64) as usize;
        prop_assert!((u[idx] - spec.sample_at(k)).abs() <= 1e-12 * (1.0 + u[idx].abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn steady_state_orbit_commutes_with_rotation(
        phases in prop::collection::vec(0.0f64..6.3, 5),
        shift in 1usize..255,
    ) {
        let model = MsdModel::benchmark();
        let spec = MultisineSpec::with_target_std(256, 100.0, 4, 8, 40.0, phases).unwrap();
        let u = spec.generate();
        let mut rotated = u.clone();
        rotated.rotate_left(shift);
        let opts = SteadyStateOptions { tol: 1e-12, max_periods: 500 };
        let a = simulate_steady_state(&model, &u, &[0.0, 0.0], &opts).unwrap();
        let b = simulate_steady_state(&model, &rotated, a.trajectory.state(shift), &opts).unwrap();
        for k in 0..256 {
            let xa = a.trajectory.state((k + shift) % 256);
            let xb = b.trajectory.state(k);
            for (p, q) in xa.iter().zip(xb) {
                prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()), "k {k}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn optimizer_is_deterministic_and_scale_invariant(
        x0 in prop::collection::vec(-5.0f64..5.0, 2..6),
        weights in prop::collection::vec(0.5f64..20.0, 6),
    ) {
        let n = x0.len();
        let w = weights[..n].to_vec();
        let quad = |c: f64| {
            let w = w.clone();
            move |x: &[f64]| -> spacefill::Result<(f64, Vec<f64>)> {
                let f = c * x.iter().zip(&w).map(|(x, w)| w * x * x).sum::<f64>();
                Ok((f, x.iter().zip(&w).map(|(x, w)| 2.0 * c * w * x).collect()))
            }
        };
        let opts = OptimOptions { gradient_tolerance: 1e-10, ..OptimOptions::default() };
        let a = minimize(quad(1.0), &x0, &opts).unwrap();
        let b = minimize(quad(1.0), &x0, &opts).unwrap();
        prop_assert_eq!(&a.theta_star, &b.theta_star);
        prop_assert_eq!(&a.cost_trace, &b.cost_trace);

        let opts = OptimOptions { max_iterations: 5, gradient_tolerance: f64::MIN_POSITIVE, ..OptimOptions::default() };
        let s1 = minimize(quad(1.0), &x0, &opts).unwrap();
        let s4 = minimize(quad(4.0), &x0, &opts).unwrap();
        prop_assert_eq!(s1.iterations, s4.iterations);
        for (p, q) in s1.theta_star.iter().zip(&s4.theta_star) {
            prop_assert!((p - q).abs() <= 1e-12 * (1.0 + p.abs()), "{p} vs {q}");
        }
    }
}
