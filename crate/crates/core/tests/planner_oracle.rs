//! The planner against the exhaustive oracle on randomized instances.

mod common;

use kwgossip_core::oracle::{brute_force_optimal, verify, BruteForceLimits};
use kwgossip_core::planner::{solve, Budget};

fn limits() -> BruteForceLimits {
    BruteForceLimits {
        max_makespan: 3,
        max_calls: 16,
        choice_ceiling: 50_000_000,
    }
}

#[test]
fn planner_matches_brute_force_on_random_instances() {
    let mut checked = 0;
    for seed in 0..40u64 {
        let mut rng = common::rng(7000 + seed);
        let with_negatives = seed % 5 == 0;
        let problem = common::random_problem(&mut rng, with_negatives);
        let expected = brute_force_optimal(&problem, &limits()).unwrap();
        let result = solve(&problem, &Budget::unlimited()).unwrap();
        assert_eq!(
            result.cost, expected,
            "planner disagrees with oracle (seed {seed}): {problem:?}"
        );
        if let Some(plan) = &result.plan {
            let verdict = verify(plan, &problem).unwrap();
            assert!(verdict.is_valid(), "planner plan has violations");
            assert_eq!(verdict.goal_time, result.cost.map(|c| c.goal_time));
            // Negative literals hold at goal time: nothing leaked.
            if let Some(t) = verdict.goal_time {
                let universe = problem.universe().unwrap();
                for agent_goal in &problem.goal.per_agent {
                    for atom in &agent_goal.negative {
                        let idx = universe.index_of(atom).unwrap();
                        assert!(
                            !verdict.trace.state(t).knows(agent_goal.agent, idx),
                            "forbidden atom leaked at goal time"
                        );
                    }
                }
            }
            assert!(result.proven_optimal);
        }
        checked += 1;
    }
    assert_eq!(checked, 40);
}

/// Node-limited searches are reproducible bit for bit.
#[test]
fn node_limited_determinism_on_random_instances() {
    for seed in 0..10u64 {
        let mut rng = common::rng(8000 + seed);
        let problem = common::random_problem(&mut rng, false);
        let budget = Budget::nodes(200);
        let a = solve(&problem, &budget).unwrap();
        let b = solve(&problem, &budget).unwrap();
        assert_eq!(a.cost, b.cost);
        assert_eq!(a.plan, b.plan);
        assert_eq!(a.nodes_expanded, b.nodes_expanded);
    }
}
