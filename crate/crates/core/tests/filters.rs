use std::sync::{Arc, OnceLock};

use safety_filters::benchmarks::{
    cbf_benchmark, least_restrictive_benchmark, mps_benchmark, scalar_margin, scalar_model, scalar_terminal,
    solve_robust_wall, solve_wall, wall_margin, wall_model, Benchmark, TaskKind, MPS_CREEP, SCALAR_GAIN, SCALAR_HORIZON,
};
use safety_filters::cbf::{cbf_constraint, cbf_qp_filter, double_integrator_barrier, BarrierFunction, ClassK};
use safety_filters::dynamics::{discretize_box, make_double_integrator};
use safety_filters::filter::{
    check_intervention_contract, decide, least_restrictive_filter, verify_monitor_soundness, NullFilter, SafetyFilter,
};
use safety_filters::harness::{
    compare_filters, run_episode, DisturbancePolicy, Scenario, UniformDisturbance, ZeroDisturbance,
};
use safety_filters::hj::{candidate_lattices, ValueGrid};
use safety_filters::policy::{ConstantPolicy, FeedbackTask, Policy};
use safety_filters::rollout::{braking_terminal_set, mps_filter, propagate_frs, BrakingPolicy, TerminalSafeSet};
use safety_filters::tube_mpc::{nominal_mpc_filter, tube_mpc_filter};
use safety_filters::{Error, IntervalBox};

/// The robust wall grid, solved once for every test here.
fn wall_grid() -> Arc<ValueGrid> {
    static GRID: OnceLock<Arc<ValueGrid>> = OnceLock::new();
    GRID.get_or_init(|| {
        let (_, grid, report) = solve_robust_wall().unwrap();
        assert!(report.converged);
        Arc::new(grid)
    })
    .clone()
}

fn lr_benchmark() -> Benchmark {
    least_restrictive_benchmark(wall_grid()).unwrap()
}

#[test]
fn interior_candidates_pass_untouched() {
    let mut f = lr_benchmark().filter;
    let x = [2.0, 0.0];
    for u in [-1.0, 0.0, 1.0] {
        let d = decide(f.as_mut(), &x, &[u]);
        assert!(d.monitor_value >= 0.0);
        assert_eq!(d.applied, vec![u]);
        assert!(!d.overridden);
    }
}

#[test]
fn pushing_into_the_wall_is_overridden_by_the_safety_policy() {
    let bench = lr_benchmark();
    let mut f = bench.filter.clone();
    let x = [0.3, -0.9];
    let d = decide(f.as_mut(), &x, &[-1.0]);
    assert!(d.monitor_value < 0.0);
    assert!(d.overridden);
    assert_eq!(d.applied, f.fallback(&x));
    assert_eq!(d.applied, vec![1.0]);
    assert_eq!(d.monitor_value, f.monitor(&x, &[-1.0]));
}

#[test]
fn singleton_disturbance_reduces_monitor_to_the_successor_value() {
    let model = wall_model(0.0).unwrap();
    let (_, grid, _) = solve_wall(0.0, 41).unwrap();
    let grid = Arc::new(grid);
    let (u, d) = candidate_lattices(&model, &[3], &[]).unwrap();
    let f = least_restrictive_filter(&model, grid.clone(), u, d).unwrap();
    for x in [[1.0, -1.0], [0.5, 0.5], [3.0, -2.0]] {
        let next = model.step(&x, &[0.0], &[]).unwrap();
        assert_eq!(f.monitor(&x, &[0.0]), grid.value_at(&next));
    }
}

#[test]
fn soundness_oracle_accepts_the_solved_grid_and_rejects_a_corrupted_one() {
    let model = wall_model(0.2).unwrap();
    let (u, d) = candidate_lattices(&model, &[3], &[2]).unwrap();
    let states = discretize_box(&IntervalBox::new(vec![1.0, -1.0], vec![3.0, 1.0]).unwrap(), &[3, 3]).unwrap();
    let good = least_restrictive_filter(&model, wall_grid(), u.clone(), d.clone()).unwrap();
    let report = verify_monitor_soundness(&model, &good, &wall_margin(), &states, 6, &d, 1 << 20).unwrap();
    assert_eq!(report.certified_states, 9);
    assert!(report.is_sound());
    assert_eq!(report.rollouts, 9 * 64);

    let vacuous = verify_monitor_soundness(&model, &good, &wall_margin(), &states, 0, &d, 9).unwrap();
    assert!(vacuous.is_sound());

    let corrupted = least_restrictive_filter(&model, Arc::new(wall_grid().offset(10.0)), u, d.clone()).unwrap();
    let near_wall = discretize_box(&IntervalBox::new(vec![0.0, -3.0], vec![0.5, 0.0]).unwrap(), &[6, 7]).unwrap();
    let report = verify_monitor_soundness(&model, &corrupted, &wall_margin(), &near_wall, 8, &d, 1 << 20).unwrap();
    let cx = report.counterexample.expect("corrupted grid must be refuted");
    assert!(wall_margin().in_failure_set(cx.states.last().unwrap()));

    let err = verify_monitor_soundness(&model, &good, &wall_margin(), &states, 30, &d, 1000).unwrap_err();
    assert!(matches!(err, Error::BudgetExceeded { .. }));
}

#[test]
fn every_filter_honours_the_intervention_contract() {
    let states = discretize_box(&IntervalBox::new(vec![0.0, -3.0], vec![4.0, 3.0]).unwrap(), &[15, 15]).unwrap();
    let candidates = vec![vec![-1.0], vec![-0.3], vec![0.0], vec![0.6], vec![1.0]];
    let filters: Vec<Box<dyn SafetyFilter>> =
        vec![lr_benchmark().filter, cbf_benchmark().unwrap().filter, mps_benchmark(None).unwrap().filter];
    for f in &filters {
        let violations = check_intervention_contract(f.as_ref(), &states, &candidates);
        assert!(violations.is_empty(), "{}: {:?}", f.name(), violations.first());
    }
}

#[test]
fn cbf_condition_hand_values() {
    // The velocity of a double integrator is a single integrator: h = 1 - v², α(a) = a.
    let model = make_double_integrator(1.0, 0.0, 0.05).unwrap();
    let h = BarrierFunction::new(|x| 1.0 - x[1] * x[1], |x| vec![0.0, -2.0 * x[1]], ClassK::Linear(1.0));
    assert_eq!(cbf_constraint(&model, &h, &[0.3, 0.0], &[0.7]).unwrap(), 1.0);
    assert_eq!(cbf_constraint(&model, &h, &[0.3, 1.0], &[-1.0]).unwrap(), 2.0);
    assert_eq!(cbf_constraint(&model, &h, &[0.3, 1.0], &[1.0]).unwrap(), -2.0);
}

#[test]
fn cbf_projection_matches_a_dense_search() {
    let model = make_double_integrator(1.0, 0.0, 0.05).unwrap();
    let barrier = double_integrator_barrier(1.0, 10.0, 0.0).unwrap();
    let filter = cbf_qp_filter(&model, barrier.clone()).unwrap();
    for (x, u_task) in [([0.6, -1.0], -1.0), ([1.0, -1.2], -0.5), ([2.0, 0.5], 1.0), ([0.55, -1.0], 0.0)] {
        let u = filter.solve_qp(&x, &[u_task]).expect("feasible");
        let best = (0..=20000)
            .map(|i| -1.0 + 2.0 * i as f64 / 20000.0)
            .filter(|w| cbf_constraint(&model, &barrier, &x, &[*w]).unwrap() >= 0.0)
            .map(|w| (w - u_task).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(cbf_constraint(&model, &barrier, &x, &u).unwrap() >= 0.0);
        assert!((u[0] - u_task).abs() <= best + 1e-4, "x {x:?}: {u:?} vs distance {best}");
        if cbf_constraint(&model, &barrier, &x, &[u_task]).unwrap() >= 0.0 {
            assert_eq!(u, vec![u_task]);
        }
    }
}

#[test]
fn barrier_safe_set_sits_inside_the_hj_safe_set() {
    let (_, grid, _) = solve_wall(0.0, 161).unwrap();
    let barrier = double_integrator_barrier(1.0, 10.0, 0.0).unwrap();
    let (dp, dv) = (grid.spec().spacing(0), grid.spec().spacing(1));
    // Away from the far edges, where the grid cannot brake before leaving its domain.
    let states = discretize_box(&IntervalBox::new(vec![0.0, -2.5], vec![2.0, 1.0]).unwrap(), &[81, 71]).unwrap();
    for x in states.iter().filter(|x| barrier.h(x) >= 0.0) {
        // Within two cells of a state the grid calls safe.
        let near_safe = (-2..=2).any(|i| {
            (-2..=2).any(|j| grid.safe_membership(&[x[0] + i as f64 * dp, x[1] + j as f64 * dv]))
        });
        assert!(near_safe, "{x:?}");
    }
}

#[test]
fn zero_disturbance_tube_is_the_trajectory() {
    let model = make_double_integrator(1.0, 0.0, 0.05).unwrap();
    let braking = BrakingPolicy::for_double_integrator(&model, 0.0).unwrap();
    let tube = propagate_frs(&model, &braking, &[1.0, -1.0], &[0.0], 10).unwrap();
    let mut x = vec![1.0, -1.0];
    x = model.step(&x, &[0.0], &[]).unwrap();
    for tau in 1..=10 {
        assert!(tube.sets[tau].is_point(), "tau {tau}");
        assert!(tube.sets[tau].contains(&x));
        x = model.step(&x, &braking.control(&x), &[]).unwrap();
    }
}

#[test]
fn one_step_tube_from_the_hand_example() {
    let model = make_double_integrator(1.0, 0.1, 0.05).unwrap();
    let braking = BrakingPolicy::for_double_integrator(&model, 0.0).unwrap();
    let tube = propagate_frs(&model, &braking, &[0.0, 1.0], &[0.0], 1).unwrap();
    let s = &tube.sets[1];
    let dt = 0.05;
    assert!((s.lower()[1] - (1.0 - 0.1 * dt)).abs() < 1e-12);
    assert!((s.upper()[1] - (1.0 + 0.1 * dt)).abs() < 1e-12);
    assert!(s.lower()[0] <= 0.05 && s.upper()[0] >= 0.05);
}

#[test]
fn braking_terminal_set_needs_a_velocity_band() {
    let model = make_double_integrator(1.0, 0.2, 0.05).unwrap();
    let braking = BrakingPolicy::for_double_integrator(&model, MPS_CREEP).unwrap();
    let safe = IntervalBox::new(vec![0.05, f64::NEG_INFINITY], vec![f64::INFINITY, f64::INFINITY]).unwrap();
    assert!(braking_terminal_set(&model, &braking, 0.0, &safe).is_err());
    let terminal = braking_terminal_set(&model, &braking, MPS_CREEP, &safe).unwrap();
    assert!(terminal.membership(&[1.0, MPS_CREEP]));
}

#[test]
fn mps_monitor_signs_are_monotone_in_the_disturbance() {
    let states = discretize_box(&IntervalBox::new(vec![0.0, -3.0], vec![4.0, 3.0]).unwrap(), &[17, 17]).unwrap();
    let build = |d_max: f64| {
        let model = make_double_integrator(1.0, d_max, 0.05).unwrap();
        let braking = BrakingPolicy::for_double_integrator(&model, MPS_CREEP).unwrap();
        let safe = IntervalBox::new(vec![0.05, f64::NEG_INFINITY], vec![f64::INFINITY, f64::INFINITY]).unwrap();
        let terminal = braking_terminal_set(&model, &braking, MPS_CREEP, &safe).unwrap();
        mps_filter(&model, Arc::new(braking), terminal, wall_margin(), 80).unwrap()
    };
    let (narrow, wide) = (build(0.05), build(0.2));
    for x in &states {
        for u in [-1.0, 0.0, 1.0] {
            if wide.monitor(x, &[u]) >= 0.0 {
                assert!(narrow.monitor(x, &[u]) >= 0.0, "{x:?} {u}");
            }
        }
    }
    assert_eq!(wide.monitor(&[0.02, -1.0], &[-1.0]), -0.5);
}

#[test]
fn mps_is_at_least_as_restrictive_as_least_restrictive() {
    let model = wall_model(0.2).unwrap();
    let grid = wall_grid();
    let (u, d) = candidate_lattices(&model, &[3], &[3]).unwrap();
    let lr = least_restrictive_filter(&model, grid.clone(), u, d).unwrap();
    let braking = BrakingPolicy::for_double_integrator(&model, MPS_CREEP).unwrap();
    let mps = mps_filter(&model, Arc::new(braking), TerminalSafeSet::Value(grid), wall_margin(), 10).unwrap();
    let states = discretize_box(&IntervalBox::new(vec![0.0, -2.5], vec![2.0, 1.5]).unwrap(), &[21, 21]).unwrap();
    let mut pass = (0, 0);
    for x in &states {
        for u in [-1.0, 0.0, 1.0] {
            let (m, l) = (mps.monitor(x, &[u]) >= 0.0, lr.monitor(x, &[u]) >= 0.0);
            assert!(!m || l, "MPS passes {x:?} {u} but LR does not");
            pass.0 += usize::from(m);
            pass.1 += usize::from(l);
        }
    }
    assert!(pass.0 <= pass.1);
}

#[test]
fn tube_mpc_passes_the_task_control_deep_inside() {
    let model = scalar_model().unwrap();
    let mut f = tube_mpc_filter(&model, &[SCALAR_GAIN], &scalar_margin(), &scalar_terminal(), &[0.0], &[0.0], SCALAR_HORIZON)
        .unwrap();
    for u in [-0.3, 0.0, 0.2] {
        let d = decide(&mut f, &[0.0], &[u]);
        assert!(d.monitor_value >= 0.0);
        assert_eq!(d.applied, vec![u]);
    }
}

#[test]
fn tube_mpc_without_disturbance_is_nominal_mpc() {
    let model = scalar_model().unwrap().with_disturbance_set(IntervalBox::symmetric(&[0.0]).unwrap()).unwrap();
    let tube = tube_mpc_filter(&model, &[SCALAR_GAIN], &scalar_margin(), &scalar_terminal(), &[0.0], &[0.0], SCALAR_HORIZON)
        .unwrap();
    let nominal =
        nominal_mpc_filter(&model, &[SCALAR_GAIN], &scalar_margin(), &scalar_terminal(), &[0.0], &[0.0], SCALAR_HORIZON)
            .unwrap();
    assert!(tube.tightening().error_bounds.iter().all(|e| e.widths().iter().all(|w| *w == 0.0)));
    for i in 0..=40 {
        let x = [-2.0 + 0.1 * i as f64];
        assert_eq!(tube.feasible(&x), nominal.feasible(&x));
        for u in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            assert_eq!(tube.monitor(&x, &[u]), nominal.monitor(&x, &[u]));
            let (mut a, mut b) = (tube.clone(), nominal.clone());
            assert_eq!(a.intervene(&x, &[u]), b.intervene(&x, &[u]));
        }
    }
}

fn wall_scenario(x0: Vec<f64>, steps: usize, d_max: f64) -> Scenario {
    Scenario {
        model: wall_model(d_max).unwrap(),
        margin: wall_margin(),
        x0,
        steps,
        goal: vec![2.0, 0.0],
        control_weight: 0.01,
    }
}

#[test]
fn null_filter_with_a_safe_task_never_intervenes() {
    let scenario = wall_scenario(vec![2.0, 0.0], 100, 0.0);
    let mut task = FeedbackTask(ConstantPolicy { u: vec![0.0] });
    let mut dist = ZeroDisturbance::new(&scenario.model);
    let (traj, m) = run_episode(&scenario, &mut NullFilter, &mut task, &mut dist, 0).unwrap();
    assert_eq!(m.violations, 0);
    assert_eq!(m.intervention_count, 0);
    assert_eq!(traj.states.len(), 101);
    assert!(traj.states.iter().all(|x| x == &vec![2.0, 0.0]));
}

#[test]
fn adversarial_task_cannot_break_the_least_restrictive_filter() {
    let bench = lr_benchmark();
    let scenario = bench.scenario(vec![1.0, -0.5], 200);
    for seed in 0..3 {
        let mut f = bench.filter.clone();
        let (_, m) =
            run_episode(&scenario, f.as_mut(), bench.task(TaskKind::Adversarial).as_mut(), bench.adversary().as_mut(), seed)
                .unwrap();
        assert_eq!(m.violations, 0);
        assert!(m.intervention_count > 0);
    }
}

#[test]
fn uncertified_start_is_rejected() {
    let bench = lr_benchmark();
    let scenario = bench.scenario(vec![0.05, -2.5], 10);
    let mut f = bench.filter.clone();
    let err = run_episode(&scenario, f.as_mut(), bench.task(TaskKind::Random).as_mut(), bench.adversary().as_mut(), 0)
        .unwrap_err();
    assert!(matches!(err, Error::DeploymentRejected(_)));
}

#[test]
fn inactive_filter_leaves_the_cost_unchanged() {
    let bench = lr_benchmark();
    let scenario = wall_scenario(vec![1.0, 0.0], 100, 0.2);
    let task = || -> Box<dyn safety_filters::policy::TaskPolicy> { Box::new(FeedbackTask(ConstantPolicy { u: vec![0.0] })) };
    let dist = || -> Box<dyn DisturbancePolicy> { Box::new(ZeroDisturbance::new(&scenario.model)) };
    let filters: Vec<&dyn SafetyFilter> = vec![&NullFilter, bench.filter.as_ref()];
    let cmp = compare_filters(&scenario, &filters, &task, &dist, &[0, 1]).unwrap();
    assert_eq!(cmp.rows.len(), 2);
    assert_eq!(cmp.rows[0].task_cost, cmp.rows[1].task_cost);
    assert_eq!(cmp.rows[1].intervention_rate, 0.0);
}

#[test]
fn uniform_disturbance_stays_in_its_box() {
    let model = wall_model(0.2).unwrap();
    let mut dist = UniformDisturbance::new(&model);
    dist.reset(7);
    for t in 0..1000 {
        let d = dist.disturbance(t, &[1.0, 0.0], &[0.0]);
        assert!(model.disturbance_set().contains(&d));
    }
}
