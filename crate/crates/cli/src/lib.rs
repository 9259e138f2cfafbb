//! Problem file parsing, benchmark harness, and external-solver
//! integration behind the `kwgossip` command-line tool.

pub mod bench;
pub mod problem_file;
pub mod solver;
