//! Scratch harness: solve the depth-1 benchmark instance for one n.

use std::time::Duration;

use kwgossip_core::problem::{GoalSpec, GossipProblem, Mode};
use kwgossip_core::planner::{solve, Budget};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: u32 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(6);
    let secs: u64 = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(60);
    let mode = if args.get(3).map(|s| s.as_str()) == Some("seq") {
        Mode::Sequential
    } else {
        Mode::Parallel
    };
    let m: u32 = args.get(4).and_then(|a| a.parse().ok()).unwrap_or(5);
    let problem = GossipProblem::standard(n, 1, m, mode, GoalSpec::full_depth(0));
    let budget = Budget::wall(Duration::from_secs(secs));
    let result = solve(&problem, &budget).unwrap();
    println!(
        "n={} cost={:?} outcome={:?} proven={} nodes={} elapsed={:?}",
        n, result.cost, result.outcome, result.proven_optimal, result.nodes_expanded, result.elapsed
    );
}
