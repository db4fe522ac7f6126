use proptest::prelude::*;

use dgmdp::hazard::{hazard_from_solution, DefectionDistribution};
use dgmdp::incentive::{optimize_bonus_limit, validate_schedule, BonusLimitScenario, InterestScenario};
use dgmdp::{solve, AgentParams, SolverKind, TaskParams};

fn model() -> impl Strategy<Value = (TaskParams, AgentParams)> {
    (
        2..=8usize,
        0.5..2.0f64,
        1.0..4.0f64,
        0.5..0.99f64,
        0.05..1.0f64,
        0.05..0.6f64,
        -0.3..0.1f64,
    )
        .prop_map(|(tau, mu_ss, ratio, gamma, sigma1, sigma, mu_e)| {
            (
                TaskParams::new(tau, mu_ss, mu_ss * ratio),
                AgentParams::new(gamma, sigma1, sigma, mu_e),
            )
        })
}

fn solvers() -> impl Strategy<Value = SolverKind> {
    prop_oneof![Just(SolverKind::Pla), Just(SolverKind::Grid)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Measuring rewards and bias in other units rescales values and thresholds.
    #[test]
    fn scaling_rewards_and_bias((task, agent) in model(), k in 0.1..50.0f64, kind in solvers()) {
        let scaled_task = TaskParams::new(task.tau, k * task.mu_ss, k * task.mu_ll);
        let scaled_agent = AgentParams::new(agent.gamma, k * agent.sigma1, k * agent.sigma, k * agent.mu_e);
        let a = solve(kind, &task, &agent).unwrap();
        let b = solve(kind, &scaled_task, &scaled_agent).unwrap();
        let tol = 1e-9 * task.mu_ll;
        for t in 1..=task.tau {
            for w in [-1.0, -0.2, 0.0, 0.3, 1.0] {
                prop_assert!((b.value(t, k * w) / k - a.value(t, w)).abs() < tol, "t {t} w {w}");
            }
        }
        for (x, y) in a.threshold_values().iter().zip(b.threshold_values()) {
            if x.is_finite() {
                prop_assert!((y / k - x).abs() < tol);
            } else {
                prop_assert_eq!(*x, y);
            }
        }
    }

    /// The value is never below either action's value.
    #[test]
    fn value_dominates_actions((task, agent) in model(), kind in solvers(), w in -2.0..2.0f64) {
        let sol = solve(kind, &task, &agent).unwrap();
        for t in 1..=task.tau {
            let q = sol.action_values(t, w).unwrap();
            let slack = match kind { SolverKind::Grid => 1e-9, SolverKind::Pla => 0.02 * task.mu_ll };
            prop_assert!(sol.value(t, w) >= q.q_defect.max(q.q_persist) - slack);
        }
    }

    /// A larger bias costs at most its own size: V(t, w) + w never decreases.
    #[test]
    fn value_plus_bias_nondecreasing((task, agent) in model(), kind in solvers()) {
        let sol = solve(kind, &task, &agent).unwrap();
        for t in 1..=task.tau {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=80 {
                let w = -2.0 + 0.05 * i as f64;
                let v = sol.value(t, w) + w;
                prop_assert!(v >= prev - 1e-3 * task.mu_ll, "t {t} w {w}: {v} < {prev}");
                prev = prev.max(v);
            }
        }
    }

    #[test]
    fn distribution_sums_to_one(h in prop::collection::vec(0.0..=1.0f64, 1..20)) {
        let d = DefectionDistribution::from_hazard(&h);
        prop_assert!((d.total() - 1.0).abs() < 1e-12);
        prop_assert!(d.p.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn hazards_are_probabilities((task, agent) in model(), q in 2..300usize) {
        let sol = solve(SolverKind::Pla, &task, &agent).unwrap();
        let h = hazard_from_solution(sol.as_ref(), q).unwrap();
        prop_assert_eq!(h.tau(), task.tau);
        prop_assert!(h.h.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    /// Any fractions of the balance give a feasible bank.
    #[test]
    fn fractions_keep_bank_nonnegative(f in prop::collection::vec(0.0..=1.0f64, 1..12), r in 0.0..0.5f64) {
        let sc = InterestScenario::new(100.0, r, f.len() + 1);
        let schedule = sc.schedule_from_fractions(&f);
        let bank = sc.bank(&schedule.bonuses).unwrap();
        prop_assert!(bank.iter().all(|&b| b >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn bonus_limit_optimum_is_valid(tau in 3..=5usize, n_b in 0..=2usize, gamma in 0.8..0.999f64) {
        let sc = BonusLimitScenario { q: 50, ..BonusLimitScenario::new(n_b, 50.0, 100.0, 1.5) };
        let agent = AgentParams::new(gamma, 81.3, 21.3, -52.1);
        let opt = optimize_bonus_limit(&agent, &sc, tau).unwrap();
        prop_assert!(validate_schedule(&opt.schedule, &sc, tau).is_ok());
        prop_assert!(opt.value >= opt.baseline);
    }
}
