//! Invariants checked on random inputs.

use growfrag_core::benchmarks::{constant_rate_model, logramp_model};
use growfrag_core::config::{parse_config, write_config};
use growfrag_core::extinction::generation_step;
use growfrag_core::flow::GrowthFlow;
use growfrag_core::kernel::{DivisionKernel, MassTable};
use growfrag_core::simulation::{trial_rng, EventRecord};
use growfrag_core::stats::{wilson_interval, Z95};
use growfrag_core::{
    solve_extinction, ExtinctionProfile, ExtinctionSolver, MassGrid, SimulationLimits, Simulator,
};
use proptest::prelude::*;

fn kernel_strategy() -> impl Strategy<Value = DivisionKernel> {
    prop_oneof![
        (0.0f64..0.45).prop_map(DivisionKernel::uniform),
        (0.0f64..0.45, 0.0f64..8.0).prop_map(|(l, b)| DivisionKernel::beta_ramp(l, b)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_is_a_semigroup(x in 0.01f64..0.99, s in 0.1f64..20.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let m = logramp_model();
        let f = GrowthFlow::new(&m, s, 1e-10);
        prop_assert!((f.flow(f.flow(x, a), b) - f.flow(x, a + b)).abs() < 1e-8);
        let num = f.numerical();
        prop_assert!((num.flow(num.flow(x, a), b) - num.flow(x, a + b)).abs() < 1e-8);
    }

    #[test]
    fn flow_is_monotone(x in 0.01f64..0.98, dx in 0.0f64..0.01, s in 0.1f64..20.0, ds in 0.0f64..5.0, t in 0.0f64..4.0) {
        let m = logramp_model();
        let f = GrowthFlow::new(&m, s, 1e-10);
        let g = GrowthFlow::new(&m, s + ds, 1e-10);
        prop_assert!(f.flow(x, t) <= f.flow(x + dx, t));
        prop_assert!(f.flow(x, t) <= g.flow(x, t));
        prop_assert!(f.flow(x, t) < 1.0);
    }

    #[test]
    fn event_time_is_monotone_in_the_clock(x in 0.01f64..0.99, e in 0.0f64..5.0, de in 0.0f64..1.0, d in 0.0f64..2.0) {
        let m = logramp_model();
        let f = GrowthFlow::new(&m, 1.0, 1e-10);
        let (t1, _) = f.event_time(x, e, d);
        let (t2, _) = f.event_time(x, e + de, d);
        prop_assert!(t1 <= t2 + 1e-9 * (1.0 + t2));
    }

    #[test]
    fn kernel_density_is_symmetric(k in kernel_strategy(), x in 0.01f64..1.0, a in 0.0f64..1.0) {
        let p = k.density(x, a).unwrap();
        let q = k.density(x, 1.0 - a).unwrap();
        prop_assert!((p - q).abs() <= 1e-12 * (1.0 + p.abs()));
    }

    #[test]
    fn inverse_cdf_round_trips(k in kernel_strategy(), x in 0.01f64..1.0, v in 0.001f64..0.999) {
        let a = k.inverse_cdf(x, v);
        prop_assert!((k.cdf(x, a).unwrap() - v).abs() < 1e-10);
        let s = k.sample(x, v);
        prop_assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn monotone_integral_is_non_increasing(
        k in kernel_strategy(),
        steps in prop::collection::vec(0.0f64..0.2, 8),
    ) {
        // A random non-increasing function on [0, 1], values in [0, 1].
        let xs: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
        let mut v = 1.0;
        let mut values = vec![v];
        for s in &steps {
            v = (v - s).max(0.0);
            values.push(v);
        }
        let f = MassTable::new(xs, values);
        let mut prev = f64::INFINITY;
        for i in 1..=64 {
            let x = i as f64 / 64.0;
            let val = k.monotone_integral(&f, x);
            prop_assert!(val <= prev + 1e-10);
            prev = val;
        }
    }

    #[test]
    fn wilson_interval_contains_estimate(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as usize;
        let (lo, hi) = wilson_interval(k, n, Z95);
        let p = k as f64 / n as f64;
        prop_assert!(lo <= p && p <= hi && 0.0 <= lo && hi <= 1.0);
    }

    #[test]
    fn event_records_round_trip(t in -1e6f64..1e6, id in any::<u64>(), tag in any::<u8>(), a in 0.0f64..1.0) {
        let r = EventRecord { time: t, parent: id, tag, alpha: a };
        prop_assert_eq!(EventRecord::from_bytes(&r.to_bytes()), r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generation_step_is_monotone(
        lo in prop::collection::vec(0.0f64..0.5, 32),
        bump in prop::collection::vec(0.0f64..0.5, 32),
        s in 0.25f64..16.0,
        d in 0.1f64..1.5,
    ) {
        let m = logramp_model();
        let grid = MassGrid::new(1.0, 32);
        let hi: Vec<f64> = lo.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let mut p = ExtinctionProfile::zero(grid.clone(), s, d);
        p.values = lo;
        let mut q = ExtinctionProfile::zero(grid, s, d);
        q.values = hi;
        let a = generation_step(&p, &m, s, d).unwrap();
        let b = generation_step(&q, &m, s, d).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!(x <= &(y + 1e-14));
        }
    }

    #[test]
    fn generations_increase(s in 0.25f64..16.0, d in 0.1f64..1.5) {
        let m = logramp_model();
        let grid = MassGrid::new(1.0, 64);
        let solver = ExtinctionSolver::new(&m, s, d, &grid);
        let mut p = ExtinctionProfile::zero(grid, s, d);
        for _ in 0..20 {
            let next = solver.step(&p).unwrap();
            for (a, b) in p.values.iter().zip(&next.values) {
                prop_assert!(a <= &(b + 1e-14));
                prop_assert!((0.0..=1.0).contains(b));
            }
            p = next;
        }
    }

    #[test]
    fn extinction_orderings(s in 0.25f64..16.0, ds in 0.0f64..8.0, d in 0.1f64..1.2, dd in 0.0f64..0.5) {
        let m = logramp_model();
        let base = solve_extinction(&m, s, d, 64, 1e-10, 20_000);
        let richer = solve_extinction(&m, s + ds, d, 64, 1e-10, 20_000);
        let deadlier = solve_extinction(&m, s, d + dd, 64, 1e-10, 20_000);
        for w in base.values.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-8);
        }
        for i in 0..64 {
            prop_assert!(richer.values[i] <= base.values[i] + 1e-8);
            prop_assert!(deadlier.values[i] + 1e-8 >= base.values[i]);
        }
    }

    #[test]
    fn config_round_trips(
        b in 0.1f64..5.0,
        d in 0.0f64..2.0,
        trials in 100usize..100_000,
        seed in any::<u64>(),
        grid in 2usize..2048,
    ) {
        let mut cfg = growfrag_core::benchmarks::logramp_config();
        cfg.model = constant_rate_model(b, d);
        cfg.simulation.trials = trials;
        cfg.simulation.seed = seed;
        cfg.solver.grid = grid;
        let text = write_config(&cfg);
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(write_config(&back), text);
        prop_assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn same_seed_same_trials(seed in any::<u64>()) {
        let m = logramp_model();
        let sim = Simulator::new(&m, 2.0, 0.6, 1e-10);
        let limits = SimulationLimits { pop_cap: 50, ..Default::default() };
        let a = sim.run_trials(0.5, &limits, 20, seed);
        let b = sim.run_trials(0.5, &limits, 20, seed);
        prop_assert_eq!(a, b);
        let mut r1 = trial_rng(seed, 3);
        let mut r2 = trial_rng(seed, 3);
        prop_assert_eq!(sim.next_event(0.4, &mut r1), sim.next_event(0.4, &mut r2));
    }
}
