//! Deterministic Android-like activity lifecycle with six resource APIs,
//! scripted faulty apps and a leak oracle.

pub mod app;
pub mod lifecycle;
pub mod scenario;
pub mod world;

pub use app::{App, AppAction};
pub use lifecycle::{lifecycle_transition, ActivityState, LifecycleCommand, LifecycleError};
pub use scenario::{
    run_scenario, Command, Expectation, LoadError, RunError, ScenarioRun, ScenarioRunner, ScenarioScript, ScriptError,
    ScriptStep, StepErrorKind,
};
pub use world::{Checkpoint, Leak, LeakReport, ProtocolState, SimResource, SimWorld};
