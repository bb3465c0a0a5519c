//! Cross-module behavior of the two engines on the annuity contract:
//! monotonicity of the fitted value function, boundary consistency, the
//! control-randomization pathologies, and spread comparisons.

use lsmc::solver::bellman_update;
use lsmc::*;

fn domain() -> TruncatedDomain {
    TruncatedDomain::interval(0.0, 4.0).unwrap()
}

fn desk_config(m: usize, j: usize, repeats: usize) -> SolverConfig {
    SolverConfig {
        paths_per_step: m,
        basis: BasisChoice::Fixed(j),
        truncation_bound: 4.0,
        constraint: ShapeConstraint::Monotone,
        seed: 4215,
        repeats,
    }
}

#[test]
fn shaped_value_function_is_monotone_in_the_account() {
    let c = VaContract::default().shortened(6);
    let dom = domain();
    let run = bsbu_solve(&c, &dom, &desk_config(30_000, 10, 2)).unwrap();
    for t in 0..=6usize {
        let max_label = t.saturating_sub(1).min(5) as i64;
        for label in 0..=max_label {
            let mut prev = f64::NEG_INFINITY;
            for i in 1..200 {
                let w = 4.0 * i as f64 / 200.0;
                let x = c.state(w, label);
                let v = bellman_update(&run.estimate, &c, &dom, t, &x).unwrap();
                assert!(
                    v >= prev - 1e-8,
                    "value decreases at t = {t}, label = {label}, w = {w}: {prev} -> {v}"
                );
                prev = v;
            }
        }
    }
}

#[test]
fn value_near_zero_account_approaches_the_boundary_value() {
    let c = VaContract::default().shortened(6);
    let dom = domain();
    let run = bsbu_solve(&c, &dom, &desk_config(30_000, 10, 2)).unwrap();
    // Fit spread on the scale of the account: allow ten times the root mean
    // squared residual of the fitted slices.
    let max_rmse = run
        .diagnostics
        .iter()
        .map(|d| (d.ssr / d.sample_size.max(1) as f64).sqrt())
        .fold(0.0f64, f64::max);
    for t in 1..6usize {
        let label = 1i64;
        let frozen = boundary_value(&c, t, &c.state(0.0, label)).unwrap();
        for i in 1..=20 {
            let w = 1e-6 * i as f64;
            let v = bellman_update(&run.estimate, &c, &dom, t, &c.state(w, label)).unwrap();
            assert!(
                v >= frozen - 10.0 * max_rmse,
                "downward jump at t = {t}, w = {w}: {v} vs boundary {frozen} (rmse {max_rmse})"
            );
        }
    }
}

#[test]
fn continuation_queries_reject_extrapolation() {
    let c = VaContract::default();
    let dom = domain();
    let run = bsbu_solve(&c.shortened(3), &dom, &desk_config(5_000, 6, 2)).unwrap();
    let k = PostActionValue::new(&[4.2], &[0]);
    assert!(matches!(
        solver::continuation_query(&run.estimate, &c, &dom, 1, &k),
        Err(Error::OutOfDomain { .. })
    ));
}

#[test]
fn cr0_estimate_is_invariant_to_the_withdrawal_label() {
    let c = VaContract::default();
    let dom = domain();
    let run = fsbu_solve(&c, &dom, &desk_config(20_000, 10, 2), CrRule::Cr0).unwrap();
    // Only one populated slice per step past the first.
    for t in 1..12usize {
        assert_eq!(run.estimate.slices(t).len(), 1, "step {t}");
    }
    // Every label query lands on the same fit.
    for label in [0i64, 3, 7, 11] {
        let k = PostActionValue::new(&[1.3], &[label]);
        let v = solver::continuation_query(&run.estimate, &c, &dom, 11, &k).unwrap();
        let k0 = PostActionValue::new(&[1.3], &[1]);
        let v0 = solver::continuation_query(&run.estimate, &c, &dom, 11, &k0).unwrap();
        assert_eq!(v, v0);
    }
}

#[test]
fn cr1_paths_pile_up_on_the_depleted_account() {
    let c = VaContract::default();
    let dom = domain();
    let sample = forward_simulate(&c, &dom, CrRule::Cr1, 11, 50_000, RandomStream::new(31)).unwrap();
    let zero = sample
        .post_actions
        .iter()
        .filter(|k| k.scalar_parts().unwrap().0 == 0.0)
        .count() as f64
        / sample.post_actions.len() as f64;
    assert!(zero > 0.5, "zero-account fraction {zero}");
    // All simulated states stay in the closed box.
    for states in &sample.states {
        for x in states {
            assert!(dom.contains(x));
        }
    }
}

#[test]
fn cr1_absorbs_strictly_more_paths_than_cr2() {
    let c = VaContract::default();
    let dom = domain();
    let m = 50_000;
    let zero_fraction = |rule: CrRule, seed: u64| -> f64 {
        let sample = forward_simulate(&c, &dom, rule, 11, m, RandomStream::new(seed)).unwrap();
        sample
            .post_actions
            .iter()
            .filter(|k| k.scalar_parts().unwrap().0 == 0.0)
            .count() as f64
            / m as f64
    };
    assert!(zero_fraction(CrRule::Cr1, 77) > zero_fraction(CrRule::Cr2, 78));
}

#[test]
fn per_slice_order_selection_solves_end_to_end() {
    let c = VaContract::default().shortened(4);
    let dom = domain();
    let config = SolverConfig {
        paths_per_step: 8_000,
        basis: BasisChoice::Select {
            candidates: vec![3, 5, 8],
            criterion: SelectionCriterion::GeneralizedCrossValidation,
        },
        truncation_bound: 4.0,
        constraint: ShapeConstraint::Monotone,
        seed: 61,
        repeats: 2,
    };
    let run = bsbu_solve(&c, &dom, &config).unwrap();
    assert!(run.v0.is_finite());
    // Selected orders come from the candidate list.
    for d in &run.diagnostics {
        assert!([3usize, 5, 8].contains(&d.order_used), "order {}", d.order_used);
    }
}

#[test]
fn deterministic_dynamics_match_the_grid_oracle() {
    // With zero volatility the responses carry no Monte Carlo noise, so the
    // engine's only error is fit bias.
    let mut c = VaContract::default().shortened(3);
    c.volatility = 0.0;
    let dom = domain();
    let grid = oracle::GridSpec::uniform(&dom, 801, &c.innovation_spec(), 8).unwrap();
    let sol = oracle::grid_dp_solve(&c, &dom, &grid).unwrap();
    let v_grid = sol.initial_value(&c).unwrap();
    let run = bsbu_solve(&c, &dom, &desk_config(50_000, 20, 2)).unwrap();
    assert!(
        (run.v0 - v_grid).abs() <= 1e-3,
        "engine {} vs grid {v_grid}",
        run.v0
    );
}

#[test]
fn backward_simulation_spread_is_no_worse_than_cr2() {
    let c = VaContract::default();
    let dom = domain();
    let config = desk_config(30_000, 10, 10);
    let bsbu = repeat_experiment(&c, &dom, &config, Engine::Bsbu).unwrap();
    let cr2 = repeat_experiment(&c, &dom, &config, Engine::Fsbu(CrRule::Cr2)).unwrap();
    assert!(bsbu.stats.mean.is_finite() && cr2.stats.mean.is_finite());
    assert!(
        bsbu.stats.sd <= cr2.stats.sd,
        "bsbu sd {} vs cr2 sd {}",
        bsbu.stats.sd,
        cr2.stats.sd
    );
}
