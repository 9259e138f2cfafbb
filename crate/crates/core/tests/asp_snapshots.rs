//! Golden snapshots for the emitted encodings.

use kwgossip_core::asp::{emit, parse_answer_set};
use kwgossip_core::calls::render_plan;
use kwgossip_core::problem::{CountSource, GoalSpec, GossipProblem, Mode};

fn reference_problem(mode: Mode) -> GossipProblem {
    GossipProblem::standard(
        4,
        1,
        2,
        mode,
        GoalSpec::global_count(CountSource::PaperRecursion),
    )
}

#[test]
fn parallel_encoding_matches_snapshot() {
    let text = emit(&reference_problem(Mode::Parallel)).unwrap();
    assert_eq!(text, include_str!("snapshots/encoding_parallel.lp"));
    // Byte-stable across repeated emission.
    assert_eq!(text, emit(&reference_problem(Mode::Parallel)).unwrap());
}

#[test]
fn sequential_encoding_differs_only_in_concurrency() {
    let sequential = emit(&reference_problem(Mode::Sequential)).unwrap();
    assert_eq!(sequential, include_str!("snapshots/encoding_sequential.lp"));

    let parallel = include_str!("snapshots/encoding_parallel.lp");
    let parallel_constraint = ":- 2 {call(I,J,T): agent(J), connected(I,J);\n  call(J1,I,T): agent(J1), connected(J1,I)}, agent(I), time(T), T<2.\n";
    let sequential_constraint =
        ":- 2 {call(I,J,T): agent(I), agent(J), connected(I,J)}, time(T), T<2.\n";
    assert_eq!(
        parallel.replace(parallel_constraint, sequential_constraint),
        sequential
    );
}

/// The two published solution lines survive a parse/render/parse loop with
/// their call structure intact.
#[test]
fn reference_solutions_round_trip() {
    let depth1 = "call(1,2,0) call(4,3,0) call(2,3,1) call(1,4,1)";
    let parsed = parse_answer_set(depth1).unwrap();
    let reparsed = parse_answer_set(&render_plan(&parsed.plan)).unwrap();
    assert_eq!(parsed.plan, reparsed.plan);
    let flat: Vec<(u32, u32, u32)> = parsed
        .plan
        .rounds()
        .iter()
        .flat_map(|r| r.calls.iter().map(|c| (c.caller.0, c.callee.0, c.time)))
        .collect();
    assert_eq!(flat, vec![(1, 2, 0), (4, 3, 0), (2, 3, 1), (1, 4, 1)]);

    let depth2 = "call(1,2,0) call(3,4,0) call(4,2,1) call(3,1,1)\ncall(4,1,2) call(4,2,3) call(1,3,3)";
    let parsed = parse_answer_set(depth2).unwrap();
    let reparsed = parse_answer_set(&render_plan(&parsed.plan)).unwrap();
    assert_eq!(parsed.plan, reparsed.plan);
    assert_eq!(parsed.plan.total_calls(), 7);
    assert_eq!(parsed.plan.rounds().len(), 4);
}
