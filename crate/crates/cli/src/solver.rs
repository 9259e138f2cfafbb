//! External ASP solver integration for cross-validation.
//!
//! The emitted encoding is handed to a clingo-compatible solver; the best
//! answer set is parsed back into a plan, verified natively, and its cost
//! is compared against the native planner's. A missing or failing solver
//! never fails the caller: the outcome says what happened.

use std::io::Write as _;
use std::process::Command;

use kwgossip_core::asp::{emit, parse_answer_set};
use kwgossip_core::oracle::verify;
use kwgossip_core::problem::{GossipProblem, PlanCost};

/// Environment variable consulted when no `--solver` flag is given.
pub const SOLVER_ENV: &str = "KWGOSSIP_SOLVER";

#[derive(Debug, Clone)]
pub enum CrossCheck {
    /// No solver configured; nothing was run.
    Skipped { reason: String },
    /// Solver ran; both costs reported for comparison.
    Ran {
        native_cost: Option<PlanCost>,
        asp_cost: Option<PlanCost>,
        asp_plan_valid: bool,
        agree: bool,
    },
    /// Solver was configured but could not be run or its output was
    /// unusable.
    Failed { reason: String },
}

impl CrossCheck {
    pub fn describe(&self) -> String {
        match self {
            CrossCheck::Skipped { reason } => format!("skipped ({reason})"),
            CrossCheck::Ran {
                native_cost,
                asp_cost,
                asp_plan_valid,
                agree,
            } => {
                let fmt = |c: &Option<PlanCost>| match c {
                    Some(c) => format!("{c}"),
                    None => "no plan".to_string(),
                };
                format!(
                    "native {} vs asp {}{} -> {}",
                    fmt(native_cost),
                    fmt(asp_cost),
                    if *asp_plan_valid { "" } else { " (asp plan INVALID)" },
                    if *agree { "agree" } else { "DISAGREE" }
                )
            }
            CrossCheck::Failed { reason } => format!("failed ({reason})"),
        }
    }
}

/// Resolves the solver executable: explicit flag first, then the
/// environment.
pub fn resolve_solver(flag: Option<&str>) -> Option<String> {
    flag.map(str::to_string)
        .or_else(|| std::env::var(SOLVER_ENV).ok())
}

/// Runs the emitted encoding through the external solver and compares the
/// resulting cost with the native one.
pub fn cross_check(
    problem: &GossipProblem,
    native_cost: Option<PlanCost>,
    solver: Option<&str>,
    budget_secs: u64,
) -> CrossCheck {
    let Some(solver) = resolve_solver(solver) else {
        return CrossCheck::Skipped {
            reason: format!("no solver configured; set {SOLVER_ENV} or pass --solver"),
        };
    };
    let program = match emit(problem) {
        Ok(p) => p,
        Err(e) => {
            return CrossCheck::Failed {
                reason: format!("encoding failed: {e}"),
            }
        }
    };
    let mut file = match tempfile::Builder::new().suffix(".lp").tempfile() {
        Ok(f) => f,
        Err(e) => {
            return CrossCheck::Failed {
                reason: format!("temp file: {e}"),
            }
        }
    };
    if let Err(e) = file.write_all(program.as_bytes()) {
        return CrossCheck::Failed {
            reason: format!("temp file: {e}"),
        };
    }

    let output = Command::new(&solver)
        .arg(file.path())
        .arg(format!("--time-limit={budget_secs}"))
        .arg("--quiet=1")
        .output();
    let output = match output {
        Ok(o) => o,
        Err(e) => {
            return CrossCheck::Failed {
                reason: format!("running {solver}: {e}"),
            }
        }
    };
    let stdout = String::from_utf8_lossy(&output.stdout);

    if stdout.contains("UNSATISFIABLE") {
        return CrossCheck::Ran {
            native_cost,
            asp_cost: None,
            asp_plan_valid: true,
            agree: native_cost.is_none(),
        };
    }

    let Some(model) = last_answer_block(&stdout) else {
        return CrossCheck::Failed {
            reason: format!(
                "no answer set in solver output (exit {:?})",
                output.status.code()
            ),
        };
    };
    let parsed = match parse_answer_set(&model) {
        Ok(p) => p,
        Err(e) => {
            return CrossCheck::Failed {
                reason: format!("parsing answer set: {e}"),
            }
        }
    };
    let verdict = match verify(&parsed.plan, problem) {
        Ok(v) => v,
        Err(e) => {
            return CrossCheck::Failed {
                reason: format!("verifying answer set: {e}"),
            }
        }
    };
    let asp_cost = verdict
        .goal_time
        .map(|goal_time| PlanCost::new(goal_time, parsed.plan.total_calls()));
    CrossCheck::Ran {
        native_cost,
        asp_cost,
        asp_plan_valid: verdict.is_valid(),
        agree: native_cost == asp_cost,
    }
}

/// Extracts the model line following the last `Answer:` marker, keeping
/// the trailing optimization line when present.
fn last_answer_block(stdout: &str) -> Option<String> {
    let lines: Vec<&str> = stdout.lines().collect();
    let last_answer = lines
        .iter()
        .rposition(|l| l.trim_start().starts_with("Answer:"))?;
    let model = lines.get(last_answer + 1)?;
    let mut block = (*model).to_string();
    for line in &lines[last_answer + 1..] {
        if line.trim_start().starts_with("Optimization:") {
            block.push('\n');
            block.push_str(line);
        }
    }
    Some(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kwgossip_core::problem::{GoalSpec, Mode};

    #[test]
    fn missing_solver_is_skipped() {
        let problem = GossipProblem::standard(4, 1, 2, Mode::Parallel, GoalSpec::full_depth(0));
        let result = cross_check(&problem, Some(PlanCost::new(2, 4)), None, 10);
        if std::env::var(SOLVER_ENV).is_err() {
            assert!(matches!(result, CrossCheck::Skipped { .. }));
        }
    }

    #[test]
    fn bogus_solver_fails_gracefully() {
        let problem = GossipProblem::standard(4, 1, 2, Mode::Parallel, GoalSpec::full_depth(0));
        let result = cross_check(
            &problem,
            Some(PlanCost::new(2, 4)),
            Some("/nonexistent/solver-binary"),
            10,
        );
        assert!(matches!(result, CrossCheck::Failed { .. }));
    }

    #[test]
    fn answer_block_extraction() {
        let stdout = "clingo version 5\nSolving...\nAnswer: 1\ncall(1,2,0) call(3,4,0)\nOptimization: 6 18\nAnswer: 2\ncall(1,2,0) call(3,4,0) call(2,3,1) call(1,4,1)\nOptimization: 6 12\nOPTIMUM FOUND\n";
        let block = last_answer_block(stdout).unwrap();
        assert!(block.starts_with("call(1,2,0) call(3,4,0) call(2,3,1) call(1,4,1)"));
        assert!(block.contains("Optimization: 6 12"));
        let parsed = parse_answer_set(&block).unwrap();
        assert_eq!(parsed.plan.total_calls(), 4);
        assert_eq!(parsed.optimization, Some(vec![6, 12]));
    }
}
