//! Runtime enforcement of API usage policies with edit automata.
//!
//! Policies are written as edit automata ([`automaton`]) in a small text
//! format ([`dsl`]), checked for mutual interference ([`interference`]), and
//! deployed as proactive modules inside a [`enforcer::PolicyEnforcer`] that
//! heals an event stream by inserting and suppressing actions. The [`sim`]
//! module provides a deterministic Android-like activity lifecycle with six
//! resource APIs and scripted faulty apps to exercise the enforcer.

pub mod automaton;
pub mod dsl;
pub mod enforcer;
pub mod interference;
pub mod pack;
pub mod report;
pub mod sim;
pub mod symbol;

pub use automaton::{
    ArgSource, Bindings, Cursor, EditAutomaton, EffectSets, Guard, NoBindings, OutputItem, StateId, Step, StepError,
    TraceBindings, Transition, ValidationDiagnostic, ValidationReport, Violation,
};
pub use dsl::{parse, serialize, Diagnostic, DiagnosticKind, Diagnostics, PolicyDoc};
pub use interference::{check_pair, check_set, Direction, Interference, InterferenceReport};
pub use symbol::{ActionKind, ActionSymbol, Event, InstanceId, Origin, Trace, Value};
pub use enforcer::{
    DeployError, EnforceError, EnforcementOutcome, HealingFailure, InterventionRecord, ModuleHandle, PolicyEnforcer,
    ProactiveModule, RecordingSink, ResourceManager, Sink, SinkError,
};
pub use pack::{load_pack, load_policy_file, PackError, PackProblem, PolicyPack};
pub use report::{
    bench_scenario, format_overhead, median, overhead_percent, run_timed, ActionBench, ActionTime, BenchError, BenchResult,
    Outcome, RunReport, DEFAULT_REPETITIONS,
};
pub use sim::{run_scenario, Checkpoint, Expectation, Leak, LeakReport, ScenarioRun, ScenarioRunner, ScenarioScript, SimWorld};
