use epibeds::allocate::{ProblemKind, Shares};
use epibeds::scenario::Scenario;
use epibeds::{BedPlan, Budget, CostModel};
use proptest::prelude::*;

const CASE1: &str = include_str!("../../../scenarios/case1.toml");

#[test]
fn budget_just_above_spend_profile_is_met_every_day() {
    let mut problem = Scenario::from_toml(CASE1).unwrap().allocation_problem().unwrap();
    let (kb, ks, ki) = (50.0, 12.0, 30.0);
    problem.cost = Some(CostModel::new(kb, ks, ki, Budget::Constant(f64::MAX)).unwrap());
    let prep = problem.prepare().unwrap();
    let plans = prep.plans(&Shares::from_lambdas(&[0.55, 0.6, 0.75, 1.0])).unwrap();

    // spend recomputed by hand from h and the tranche schedule
    let days = prep.window_days().to_vec();
    let mut profile = Vec::new();
    for (k, &t) in days.iter().enumerate() {
        let mut spend = 0.0;
        for (j, &day) in problem.tranche_days.iter().enumerate() {
            if day == t {
                spend += kb * problem.tranche_sizes[j];
            }
        }
        for r in 0..2 {
            let h = prep.hospitalized(r);
            spend += ks * h[k];
            if k + 1 < h.len() {
                spend += ki * (h[k + 1] - h[k]).max(0.0);
            }
        }
        let check = prep.cost_constraint(&plans, t).unwrap();
        if k + 1 < days.len() {
            assert!(
                (check.spend - spend).abs() <= 1e-9 * spend,
                "day {t}: {} vs {spend}",
                check.spend
            );
        }
        profile.push(check.spend);
    }

    problem.cost = Some(
        CostModel::new(
            kb,
            ks,
            ki,
            Budget::Daily {
                first_day: days[0],
                per_day: profile.iter().map(|s| 1.1 * s).collect(),
            },
        )
        .unwrap(),
    );
    let prep = problem.prepare().unwrap();
    for &t in &days {
        assert!(prep.cost_constraint(&plans, t).unwrap().satisfied, "day {t}");
    }
    let sol = prep.solve(ProblemKind::CapacityAndCost).unwrap();
    assert!(sol.feasibility.cost_violations.is_empty());

    // a budget just below the first day's spend leaves nothing feasible
    let mut tight = profile.iter().map(|s| 1.1 * s).collect::<Vec<_>>();
    tight[0] = 0.9 * profile[0];
    problem.cost = Some(
        CostModel::new(
            kb,
            ks,
            ki,
            Budget::Daily {
                first_day: days[0],
                per_day: tight,
            },
        )
        .unwrap(),
    );
    assert!(problem.prepare().unwrap().solve(ProblemKind::CapacityAndCost).is_err());
}

#[test]
fn dynamics_do_not_depend_on_the_plan() {
    let problem = Scenario::from_toml(CASE1).unwrap().allocation_problem().unwrap();
    let a = problem.prepare().unwrap();
    let sol = a.solve(ProblemKind::Capacity).unwrap();
    let b = problem.prepare().unwrap();
    assert_eq!(a.final_new_cases(), sol.final_new_cases.as_slice());
    for r in 0..2 {
        assert_eq!(a.hospitalized(r), b.hospitalized(r));
        assert_eq!(a.trajectories()[r].values(), b.trajectories()[r].values());
    }
}

#[test]
fn zero_epidemic_is_feasible_for_any_positive_plan() {
    let text = CASE1.replace("x0 = 2.0", "x0 = 0.0");
    let prep = Scenario::from_toml(&text)
        .unwrap()
        .allocation_problem()
        .unwrap()
        .prepare()
        .unwrap();
    for l in [0.0, 0.3, 1.0] {
        let plans = prep.plans(&Shares::from_lambdas(&[l; 4])).unwrap();
        assert!(prep.feasible(&plans).unwrap().feasible);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extra_beds_never_raise_a_region_penalty(
        lambdas in proptest::collection::vec(0.0f64..=1.0, 4),
        region in 0usize..2,
        extra in 0.0f64..500.0,
    ) {
        let problem = Scenario::from_toml(CASE1).unwrap().allocation_problem().unwrap();
        let prep = problem.prepare().unwrap();
        let plans = prep.plans(&Shares::from_lambdas(&lambdas)).unwrap();
        let mut more = plans.clone();
        let p = &plans[region];
        more[region] = BedPlan::new(p.region, p.start_day, p.base + extra, p.tranche_days.clone(), p.tranche_sizes.clone()).unwrap();
        let penalty = |plans: &[BedPlan]| -> f64 {
            let h = prep.hospitalized(region);
            prep.window_days().iter().zip(h).map(|(&t, h)| h / plans[region].beds_at(t)).sum()
        };
        prop_assert!(penalty(&more) <= penalty(&plans));
        prop_assert!(prep.objective(&more).unwrap() <= prep.objective(&plans).unwrap());
    }
}
