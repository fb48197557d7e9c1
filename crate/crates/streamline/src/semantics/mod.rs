//! Big-step execution of core programs.
//!
//! One interpreter covers both sides of the translation: plain programs
//! that only touch registers and arrays, and converted programs that also
//! read and write streams. [`run_source`] and [`run_target`] differ only in
//! which typing mode they enforce before executing.
//!
//! Execution is fuel-bounded and total: the result is either a final
//! state, a stuck report (reading an unset register or cell, popping an
//! empty stream, dividing by zero), or fuel exhaustion. A loop whose
//! counter steps over its bound without ever equalling it never exits, so
//! it shows up as fuel exhaustion.
//!
//! Every rule application is counted by name in [`ExecReport::rules`], and
//! array/stream traffic is counted twice over — for the whole run and for
//! the accelerated region only — which is what makes memory-traffic
//! comparisons between a program and its translation meaningful.

mod interp;
pub mod io;
pub mod sim;

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::ast::{Int, Name, Program};
use crate::frontend::{typecheck, Mode};

pub use io::{parse_input, Input};
pub use sim::{check_sim, sim_holds};

/// Default rule-application budget for a run.
pub const DEFAULT_FUEL: u64 = 10_000_000;

/// A machine state: integer registers, per-array partial heaps, and FIFO
/// stream contents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct State {
    pub regs: BTreeMap<Name, Int>,
    pub heap: BTreeMap<Name, BTreeMap<Int, Int>>,
    pub streams: BTreeMap<Name, VecDeque<Int>>,
}

impl State {
    pub fn reg(&self, x: &str) -> Option<&Int> {
        self.regs.get(x)
    }

    pub fn cell(&self, a: &str, i: impl Into<Int>) -> Option<&Int> {
        self.heap.get(a)?.get(&i.into())
    }

    pub fn stream(&self, s: &str) -> impl Iterator<Item = &Int> {
        self.streams.get(s).into_iter().flatten()
    }
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Normal,
    Stuck(String),
    OutOfFuel,
}

impl Outcome {
    pub fn is_normal(&self) -> bool {
        matches!(self, Outcome::Normal)
    }
}

/// Array and stream traffic, counted per name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessCounts {
    pub heap_reads: BTreeMap<Name, u64>,
    pub heap_writes: BTreeMap<Name, u64>,
    pub stream_reads: BTreeMap<Name, u64>,
    pub stream_writes: BTreeMap<Name, u64>,
}

impl AccessCounts {
    fn bump(map: &mut BTreeMap<Name, u64>, name: &str) {
        *map.entry(name.to_string()).or_insert(0) += 1;
    }
}

/// The full result of a run: outcome, final state, and instrumentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecReport {
    pub outcome: Outcome,
    pub state: State,
    /// Total rule applications (equals fuel consumed).
    pub steps: u64,
    /// Applications per rule name.
    pub rules: BTreeMap<String, u64>,
    /// Traffic over the whole run.
    pub total: AccessCounts,
    /// Traffic inside `kernel { .. }` only.
    pub kernel: AccessCounts,
}

impl ExecReport {
    pub fn rule_count(&self, rule: &str) -> u64 {
        self.rules.get(rule).copied().unwrap_or(0)
    }
}

/// A run could not start: the input does not fit the program's
/// declarations, or the program fails its typing mode.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct SetupError(pub String);

/// Runs a plain program (arrays only; stream operations rejected).
pub fn run_source(prog: &Program, input: &Input, fuel: u64) -> Result<ExecReport, SetupError> {
    typecheck(prog, Mode::Source).map_err(|e| SetupError(e.to_string()))?;
    exec_program(prog, input, fuel)
}

/// Runs a converted program (stream operations allowed).
pub fn run_target(prog: &Program, input: &Input, fuel: u64) -> Result<ExecReport, SetupError> {
    typecheck(prog, Mode::Target).map_err(|e| SetupError(e.to_string()))?;
    exec_program(prog, input, fuel)
}

/// Runs a program without re-typechecking it.
pub fn exec_program(
    prog: &Program,
    input: &Input,
    fuel: u64,
) -> Result<ExecReport, SetupError> {
    let state = initial_state(prog, input)?;
    Ok(interp::execute(&prog.body, state, fuel))
}

/// Builds the starting state, checking the input against the declarations:
/// every parameter needs a value meeting its lower bound, and heap or
/// stream contents may only be supplied for declared arrays.
pub(crate) fn initial_state(prog: &Program, input: &Input) -> Result<State, SetupError> {
    let env = prog.env();
    let mut state = State::default();
    for (name, min) in env.params() {
        let Some(v) = input.params.get(name) else {
            return Err(SetupError(format!("missing value for parameter `{name}`")));
        };
        if v < min {
            return Err(SetupError(format!(
                "parameter `{name}` must be at least {min}, got {v}"
            )));
        }
        state.regs.insert(name.clone(), v.clone());
    }
    for name in input.params.keys() {
        if !env.is_param(name) {
            return Err(SetupError(format!("`{name}` is not a declared parameter")));
        }
    }
    for (name, cells) in &input.heap {
        if !env.lookup(name).is_some_and(|t| t.is_array()) {
            return Err(SetupError(format!("`{name}` is not a declared array")));
        }
        state.heap.insert(name.clone(), cells.clone());
    }
    for (name, items) in &input.streams {
        if !env.lookup(name).is_some_and(|t| t.is_array()) {
            return Err(SetupError(format!(
                "`{name}` is not a declared array, so it cannot carry a stream"
            )));
        }
        state.streams.insert(name.clone(), items.iter().cloned().collect());
    }
    Ok(state)
}
