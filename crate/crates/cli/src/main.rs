//! Command-line front end: solve, verify, encode, brute-force, benchmark.

use kwgossip_cli::{bench, problem_file, solver};

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kwgossip_core::asp::emit;
use kwgossip_core::calls::{parse_plan, render_plan, Plan};
use kwgossip_core::oracle::{brute_force_optimal, verify, BruteForceLimits, Verdict};
use kwgossip_core::planner::{solve_with_observer, Budget, SolveOutcome};
use kwgossip_core::problem::{GossipProblem, PlanCost};

/// Plan, verify, and encode epistemic gossip problems.
#[derive(Parser)]
#[command(name = "kwgossip", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct BudgetArgs {
    /// Wall-clock budget in seconds.
    #[arg(long)]
    budget: Option<f64>,
    /// Node expansion limit (deterministic).
    #[arg(long)]
    nodes: Option<u64>,
}

impl BudgetArgs {
    fn to_budget(&self) -> Budget {
        Budget {
            max_nodes: self.nodes,
            wall: self.budget.map(Duration::from_secs_f64),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Find a plan minimizing the problem's objective.
    Solve {
        /// Problem file.
        file: PathBuf,
        #[command(flatten)]
        budget: BudgetArgs,
        /// Machine-readable output.
        #[arg(long)]
        json: bool,
        /// ASP solver executable for cross-checking the result.
        #[arg(long)]
        solver: Option<String>,
        /// Print each improving incumbent as it is found.
        #[arg(long)]
        progress: bool,
    },
    /// Simulate a plan against a problem and report the verdict.
    Verify {
        file: PathBuf,
        plan: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print the ASP encoding of a problem.
    EmitAsp { file: PathBuf },
    /// Exhaustive brute-force optimum for tiny instances.
    Oracle {
        file: PathBuf,
        /// Makespan cap for the enumeration.
        #[arg(long, default_value_t = 5)]
        max_makespan: u32,
        /// Call cap for the enumeration.
        #[arg(long, default_value_t = 64)]
        max_calls: u32,
        #[arg(long)]
        json: bool,
    },
    /// Run the depth-1 benchmark series and compare against the expected
    /// call counts.
    Bench {
        #[arg(long, default_value_t = 2)]
        from: u32,
        #[arg(long, default_value_t = 8)]
        to: u32,
        /// Wall-clock budget per instance in seconds.
        #[arg(long, default_value_t = 10.0)]
        budget: f64,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve {
            file,
            budget,
            json,
            solver,
            progress,
        } => cmd_solve(&file, &budget, json, solver.as_deref(), progress),
        Command::Verify { file, plan, json } => cmd_verify(&file, &plan, json),
        Command::EmitAsp { file } => cmd_emit(&file),
        Command::Oracle {
            file,
            max_makespan,
            max_calls,
            json,
        } => cmd_oracle(&file, max_makespan, max_calls, json),
        Command::Bench {
            from,
            to,
            budget,
            json,
        } => cmd_bench(from, to, budget, json),
    }
}

fn load_problem(path: &PathBuf) -> Result<GossipProblem> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    problem_file::parse_problem(&text)
}

fn outcome_name(outcome: SolveOutcome) -> &'static str {
    match outcome {
        SolveOutcome::Optimal => "optimal",
        SolveOutcome::BestFound => "best-found",
        SolveOutcome::InfeasibleWithinHorizon => "no-plan-within-horizon",
        SolveOutcome::BudgetExhausted => "budget-exhausted",
    }
}

fn cmd_solve(
    file: &PathBuf,
    budget: &BudgetArgs,
    json: bool,
    solver: Option<&str>,
    progress: bool,
) -> Result<ExitCode> {
    let problem = load_problem(file)?;
    let mut observer = |plan: &Plan, cost: PlanCost| {
        if progress && !json {
            println!("incumbent: cost {} with {} calls", cost, plan.total_calls());
        }
    };
    let result = solve_with_observer(&problem, &budget.to_budget(), &mut observer)
        .map_err(|e| anyhow!("{e}"))?;

    let flag = match result.outcome {
        SolveOutcome::Optimal => "O",
        SolveOutcome::BestFound => "+",
        _ => "-",
    };
    let cross = if solver.is_some() || std::env::var(solver::SOLVER_ENV).is_ok() {
        let secs = budget.budget.map(|b| b.ceil() as u64).unwrap_or(10).max(1);
        Some(solver::cross_check(&problem, result.cost, solver, secs))
    } else {
        None
    };

    if json {
        let plan_lines: Vec<String> = result
            .plan
            .as_ref()
            .map(|p| render_plan(p).lines().map(str::to_string).collect())
            .unwrap_or_default();
        let weighted = result.cost.map(|c| c.weighted(&problem.objective));
        let out = json!({
            "outcome": outcome_name(result.outcome),
            "optimal": result.proven_optimal,
            "flag": flag,
            "goal_time": result.cost.map(|c| c.goal_time),
            "calls": result.cost.map(|c| c.calls),
            "weighted_cost": weighted.map(|w| json!({
                "step_level": w.step_level,
                "call_level": w.call_level,
            })),
            "plan": plan_lines,
            "nodes": result.nodes_expanded,
            "elapsed_secs": result.elapsed.map(|d| d.as_secs_f64()),
            "cross_check": cross.as_ref().map(|c| c.describe()),
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        if let Some(plan) = &result.plan {
            print!("{}", render_plan(plan));
        }
        match result.cost {
            Some(cost) => println!("cost: {cost}"),
            None => println!("no plan"),
        }
        println!("optimality: {flag}");
        println!("nodes: {}", result.nodes_expanded);
        if let Some(elapsed) = result.elapsed {
            println!("time: {:.3}s", elapsed.as_secs_f64());
        }
        if let Some(cross) = &cross {
            println!("cross-check: {}", cross.describe());
        }
    }

    Ok(match result.outcome {
        SolveOutcome::Optimal | SolveOutcome::BestFound => ExitCode::from(0),
        SolveOutcome::InfeasibleWithinHorizon => ExitCode::from(2),
        SolveOutcome::BudgetExhausted => ExitCode::from(3),
    })
}

fn verdict_json(verdict: &Verdict) -> serde_json::Value {
    json!({
        "goal_time": verdict.goal_time,
        "calls": verdict.call_count,
        "valid": verdict.is_valid(),
        "violations": verdict
            .violations
            .iter()
            .map(|v| json!({"time": v.time, "message": v.message}))
            .collect::<Vec<_>>(),
    })
}

fn cmd_verify(file: &PathBuf, plan_path: &PathBuf, json: bool) -> Result<ExitCode> {
    let problem = load_problem(file)?;
    let plan_text = std::fs::read_to_string(plan_path)
        .with_context(|| format!("reading {}", plan_path.display()))?;
    let plan = parse_plan(&plan_text).map_err(|e| anyhow!("{e}"))?;
    let verdict = verify(&plan, &problem).map_err(|e| anyhow!("{e}"))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&verdict_json(&verdict))?);
    } else {
        match verdict.goal_time {
            Some(t) => println!("goal time: {t}"),
            None => println!("goal time: never"),
        }
        println!("calls: {}", verdict.call_count);
        if verdict.is_valid() {
            println!("valid: yes");
        } else {
            println!("valid: no");
            for violation in &verdict.violations {
                println!("violation {violation}");
            }
        }
    }
    Ok(ExitCode::from(0))
}

fn cmd_emit(file: &PathBuf) -> Result<ExitCode> {
    let problem = load_problem(file)?;
    let program = emit(&problem).map_err(|e| anyhow!("{e}"))?;
    print!("{program}");
    Ok(ExitCode::from(0))
}

fn cmd_oracle(file: &PathBuf, max_makespan: u32, max_calls: u32, json: bool) -> Result<ExitCode> {
    let problem = load_problem(file)?;
    let limits = BruteForceLimits {
        max_makespan,
        max_calls,
        ..BruteForceLimits::default()
    };
    let cost = brute_force_optimal(&problem, &limits).map_err(|e| anyhow!("{e}"))?;
    if json {
        let out = json!({
            "goal_time": cost.map(|c| c.goal_time),
            "calls": cost.map(|c| c.calls),
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        match cost {
            Some(cost) => println!("optimal cost: {cost}"),
            None => println!("no plan within limits"),
        }
    }
    Ok(ExitCode::from(if cost.is_some() { 0 } else { 2 }))
}

fn cmd_bench(from: u32, to: u32, budget: f64, json: bool) -> Result<ExitCode> {
    let rows = bench::run_bench(from, to, Duration::from_secs_f64(budget));
    if json {
        let out: Vec<_> = rows
            .iter()
            .map(|r| {
                json!({
                    "n": r.n,
                    "seconds": r.seconds,
                    "flag": r.flag.to_string(),
                    "calls": r.calls,
                    "goal_time": r.goal_time,
                    "expected": r.expected,
                    "regression": r.regression,
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("{:>3} {:>10} {:>5} {:>6} {:>10} {:>9} status", "n", "time(s)", "flag", "calls", "goal_time", "expected");
        for r in &rows {
            let calls = r.calls.map_or("-".to_string(), |c| c.to_string());
            let goal_time = r.goal_time.map_or("-".to_string(), |t| t.to_string());
            let expected = r.expected.map_or("-".to_string(), |e| e.to_string());
            let status = if r.regression {
                "REGRESSION"
            } else if r.flag == 'O' && r.expected.is_some() {
                "ok"
            } else {
                ""
            };
            println!(
                "{:>3} {:>10.3} {:>5} {:>6} {:>10} {:>9} {status}",
                r.n, r.seconds, r.flag, calls, goal_time, expected
            );
        }
    }
    let failed = rows.iter().any(|r| r.regression);
    Ok(ExitCode::from(if failed { 1 } else { 0 }))
}
