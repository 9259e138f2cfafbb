//! Benchmark harness: the depth-1 complete-graph series at horizon 5.
//!
//! For each n the harness solves the parallel instance whose goal is that
//! every agent knows every secret, tracked in a depth-1 universe, and
//! compares proven-optimal call counts against the expected series. Times
//! are informational only.

use std::time::Duration;

use kwgossip_core::planner::{solve, Budget, SolveOutcome};
use kwgossip_core::problem::{GoalSpec, GossipProblem, Mode};

/// Expected optimal call counts per n (1 for n=2, 3 for n=3, then 2n-4
/// until minimum-round scheduling starts costing extra calls at n=10).
pub const EXPECTED_CALLS: &[(u32, u32)] = &[
    (2, 1),
    (3, 3),
    (4, 4),
    (5, 6),
    (6, 8),
    (7, 10),
    (8, 12),
    (9, 14),
    (10, 17),
    (11, 20),
    (12, 21),
    (13, 25),
    (14, 28),
    (15, 31),
];

pub fn expected_calls(n: u32) -> Option<u32> {
    EXPECTED_CALLS
        .iter()
        .find(|(en, _)| *en == n)
        .map(|&(_, calls)| calls)
}

/// The benchmark instance for one n.
pub fn bench_instance(n: u32) -> GossipProblem {
    GossipProblem::standard(n, 1, 5, Mode::Parallel, GoalSpec::full_depth(0))
}

/// One row of the benchmark table.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub n: u32,
    pub seconds: f64,
    /// `O` proven optimal, `+` best found, `-` no plan.
    pub flag: char,
    pub calls: Option<u32>,
    pub goal_time: Option<u32>,
    pub expected: Option<u32>,
    /// Proven optimal yet different from the expected call count.
    pub regression: bool,
}

/// Runs the harness for `from..=to` with a per-instance wall budget.
pub fn run_bench(from: u32, to: u32, budget: Duration) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for n in from..=to.max(from) {
        let problem = bench_instance(n);
        let result = solve(&problem, &Budget::wall(budget)).expect("bench instance validates");
        let flag = match result.outcome {
            SolveOutcome::Optimal => 'O',
            SolveOutcome::BestFound => '+',
            _ => '-',
        };
        let calls = result.cost.map(|c| c.calls);
        let expected = expected_calls(n);
        let regression = flag == 'O' && expected.is_some() && calls != expected;
        rows.push(BenchRow {
            n,
            seconds: result
                .elapsed
                .map(|d| d.as_secs_f64())
                .unwrap_or_default(),
            flag,
            calls,
            goal_time: result.cost.map(|c| c.goal_time),
            expected,
            regression,
        });
    }
    rows
}
