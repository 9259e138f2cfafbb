//! Property suites over the call semantics.

mod common;

use proptest::prelude::*;

use kwgossip_core::atoms::{AgentId, InfoAtom, InfoUniverse};
use kwgossip_core::calls::{
    apply_call, apply_round, parse_plan, render_plan, simulate, Call, CallShares, Plan, Round,
    SharePolicy,
};
use kwgossip_core::oracle::verify;
use kwgossip_core::problem::{
    goal_satisfied, plan_cost, ConnectivityGraph, CountSource, GoalSpec, GossipProblem, Mode,
    OptimizationSpec, PlanCost,
};

/// Knowledge only grows, idle agents keep exactly their sets, and every
/// known atom stays inside the universe.
#[test]
fn monotone_frame_and_depth_closure() {
    for seed in 0..120u64 {
        let mut rng = common::rng(seed);
        let problem = common::random_problem(&mut rng, seed % 5 == 0);
        let plan = common::random_valid_plan(&mut rng, &problem);
        let universe = problem.universe().unwrap();
        let trace = simulate(&plan, &problem, &universe).unwrap();
        for t in 0..problem.horizon {
            let before = trace.state(t);
            let after = trace.state(t + 1);
            assert!(before.is_subset_of(after), "knowledge lost at t={t}");
            let round = plan.round_at(t);
            for agent in 1..=problem.agents {
                let busy = round.is_some_and(|r| {
                    r.calls
                        .iter()
                        .any(|c| c.caller.0 == agent || c.callee.0 == agent)
                });
                if !busy {
                    assert_eq!(
                        before.agent_words(AgentId(agent)),
                        after.agent_words(AgentId(agent)),
                        "idle agent {agent} changed at t={t}"
                    );
                }
                for idx in after.known_atoms(AgentId(agent)) {
                    assert!((idx as usize) < universe.len());
                    assert!(universe.atom(idx).is_well_formed(
                        problem.agents,
                        problem.secrets,
                        problem.depth
                    ));
                }
            }
        }
    }
}

/// After a call over a bidirectional edge, both parties hold the union of
/// the two pre-call secret sets.
#[test]
fn exchange_symmetry_on_bidirectional_pairs() {
    for seed in 0..60u64 {
        let mut rng = common::rng(1000 + seed);
        let problem = common::random_problem(&mut rng, false);
        let universe = problem.universe().unwrap();
        let plan = common::random_valid_plan(&mut rng, &problem);
        let state = problem.initial_state(&universe).unwrap();
        let secrets = universe.prefix_len(0);
        if let Some(round) = plan.rounds().first() {
            let call = &round.calls[0];
            if !problem.graph.has_edge(call.callee, call.caller) {
                continue;
            }
            let mut fixed = call.clone();
            fixed.time = 0;
            let next = apply_call(&state, &fixed, &problem.policy, &problem.graph, &universe)
                .unwrap();
            let union: Vec<u32> = (0..secrets as u32)
                .filter(|&i| state.knows(call.caller, i) || state.knows(call.callee, i))
                .collect();
            for agent in [call.caller, call.callee] {
                let have: Vec<u32> = (0..secrets as u32)
                    .filter(|&i| next.knows(agent, i))
                    .collect();
                assert_eq!(have, union);
            }
        }
    }
}

/// Applying the calls of a matching-compliant round in any listed order
/// gives the same state: all reads come from the pre-round state.
#[test]
fn round_order_independence() {
    for seed in 0..80u64 {
        let mut rng = common::rng(2000 + seed);
        let mut problem = common::random_problem(&mut rng, false);
        problem.mode = Mode::Parallel;
        let universe = problem.universe().unwrap();
        let plan = common::random_valid_plan(&mut rng, &problem);
        let state = problem.initial_state(&universe).unwrap();
        let Some(round) = plan.rounds().first() else {
            continue;
        };
        let mut round = round.clone();
        for call in &mut round.calls {
            call.time = 0;
        }
        round.step = 0;
        let reference = apply_round(
            &state,
            &round,
            &problem.policy,
            &problem.graph,
            &universe,
            Mode::Parallel,
        )
        .unwrap();
        // n <= 4 means at most two calls per round: check all orders.
        let mut permuted = round.clone();
        permuted.calls.reverse();
        let other = apply_round(
            &state,
            &permuted,
            &problem.policy,
            &problem.graph,
            &universe,
            Mode::Parallel,
        )
        .unwrap();
        assert_eq!(reference, other);
    }
}

/// Without the reverse edge, the caller learns nothing from the callee.
#[test]
fn directional_gating() {
    for seed in 0..60u64 {
        let mut rng = common::rng(3000 + seed);
        let problem = common::random_problem(&mut rng, false);
        let universe = problem.universe().unwrap();
        let plan = common::random_valid_plan(&mut rng, &problem);
        let trace = simulate(&plan, &problem, &universe).unwrap();
        for round in plan.rounds() {
            for call in &round.calls {
                if !problem.graph.has_edge(call.callee, call.caller) {
                    let before = trace.state(round.step);
                    let after = trace.state(round.step + 1);
                    assert_eq!(
                        before.agent_words(call.caller),
                        after.agent_words(call.caller),
                        "reverse flow without reverse edge at t={}",
                        round.step
                    );
                }
            }
        }
    }
}

/// A verified plan's cost agrees with the verdict, and the weighted view
/// orders costs exactly like the lexicographic one.
#[test]
fn verdict_cost_agreement_and_weighted_order() {
    let spec = OptimizationSpec::default();
    for seed in 0..60u64 {
        let mut rng = common::rng(4000 + seed);
        let problem = common::random_problem(&mut rng, false);
        let plan = common::random_valid_plan(&mut rng, &problem);
        let verdict = verify(&plan, &problem).unwrap();
        assert!(verdict.is_valid(), "generated plans are valid");
        assert_eq!(verdict.call_count, plan.total_calls());
        let cost = plan_cost(&plan, &verdict, &spec);
        match verdict.goal_time {
            Some(t) => {
                let cost = cost.unwrap();
                assert_eq!(cost.goal_time, t);
                assert!(goal_satisfied(
                    verdict.trace.state(t),
                    &problem.goal,
                    &problem.universe().unwrap()
                ));
            }
            None => assert!(cost.is_none()),
        }
    }
    proptest!(|(t1 in 0u32..40, c1 in 0u32..40, t2 in 0u32..40, c2 in 0u32..40)| {
        let a = PlanCost::new(t1, c1);
        let b = PlanCost::new(t2, c2);
        let wa = a.weighted(&spec);
        let wb = b.weighted(&spec);
        prop_assert_eq!(a.cmp(&b), wa.cmp(&wb));
    });
}

/// Goals without negative literals are monotone in the knowledge state.
#[test]
fn goal_monotonicity_without_negatives() {
    for seed in 0..60u64 {
        let mut rng = common::rng(5000 + seed);
        let problem = common::random_problem(&mut rng, false);
        let universe = problem.universe().unwrap();
        let plan = common::random_valid_plan(&mut rng, &problem);
        let trace = simulate(&plan, &problem, &universe).unwrap();
        let mut seen = false;
        for t in 0..=problem.horizon {
            let holds = goal_satisfied(trace.state(t), &problem.goal, &universe);
            assert!(!seen || holds, "monotone goal stopped holding at t={t}");
            seen |= holds;
        }
    }
}

proptest! {
    /// Rendering and parsing plans is lossless, shares included.
    #[test]
    fn plan_text_round_trip(
        calls in proptest::collection::vec((1u32..5, 1u32..5, 0u32..4), 0..6),
        with_shares in any::<bool>(),
    ) {
        let triples: Vec<(u32, u32, u32)> = calls
            .into_iter()
            .filter(|(i, j, _)| i != j)
            .collect();
        // Deduplicate (time, agent) collisions to keep the plan well-formed
        // enough for the text format (parser groups by time).
        let mut plan = Plan::from_triples(&triples).unwrap();
        if with_shares {
            let rounds: Vec<Round> = plan
                .rounds()
                .iter()
                .map(|r| Round {
                    step: r.step,
                    calls: r
                        .calls
                        .iter()
                        .map(|c| {
                            let mut c = c.clone();
                            c.shares = Some(CallShares {
                                forward: vec![InfoAtom::secret(c.caller.0)],
                                reverse: vec![
                                    InfoAtom::secret(c.callee.0),
                                    InfoAtom::kw(c.caller.0, InfoAtom::secret(1)),
                                ],
                            });
                            c
                        })
                        .collect(),
                })
                .collect();
            plan = Plan::new(rounds).unwrap();
        }
        let text = render_plan(&plan);
        let parsed = parse_plan(&text).unwrap();
        prop_assert_eq!(parsed, plan);
    }
}

/// The four-agent two-round exchange taught in the walkthrough: both
/// counting goals hold at time 2, and goal time matches both readings.
#[test]
fn reference_plan_counting_goals() {
    let plan = Plan::from_triples(&[(1, 2, 0), (4, 3, 0), (2, 3, 1), (1, 4, 1)]).unwrap();
    for (source, expected_goal_time) in [
        (CountSource::PaperRecursion, Some(2)),
        (CountSource::UniverseSize, Some(2)),
        (CountSource::Constant(33), None),
    ] {
        let problem =
            GossipProblem::standard(4, 1, 2, Mode::Parallel, GoalSpec::global_count(source));
        let verdict = verify(&plan, &problem).unwrap();
        assert_eq!(verdict.goal_time, expected_goal_time, "{source:?}");
    }
}

/// Matching violations surface as round errors with the offending agent.
#[test]
fn matching_rejection() {
    let problem = GossipProblem::standard(4, 0, 2, Mode::Parallel, GoalSpec::full_depth(0));
    let universe = problem.universe().unwrap();
    let state = problem.initial_state(&universe).unwrap();
    let round = Round {
        step: 0,
        calls: vec![Call::new(1, 2, 0), Call::new(2, 3, 0)],
    };
    let err = apply_round(
        &state,
        &round,
        &SharePolicy::share_all(),
        &problem.graph,
        &universe,
        Mode::Parallel,
    )
    .unwrap_err();
    assert_eq!(
        err,
        kwgossip_core::calls::SemanticsError::MatchingViolation { agent: 2, time: 0 }
    );

    let graph = ConnectivityGraph::complete(4);
    let seq = apply_round(
        &state,
        &round,
        &SharePolicy::share_all(),
        &graph,
        &universe,
        Mode::Sequential,
    );
    assert!(matches!(
        seq,
        Err(kwgossip_core::calls::SemanticsError::MultipleCallsSequential { time: 0 })
    ));
}
