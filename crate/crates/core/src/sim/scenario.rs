//! Scenario scripts (`.scn`) and their deterministic replay.
//!
//! ```text
//! scenario HearHere
//! app HearHere
//! expect healed
//! launch
//! tap START
//! background
//! ```
//!
//! Header lines (`scenario`, `app`, optional `expect healed|no-violation`)
//! come first, followed by one command per line: `launch`, `tap <BUTTON>`,
//! `background`, `foreground`, `rotate`, `destroy`, `call <Iface>.<method>
//! [(<literals>)]` or `call new <Iface> [(<literals>)]`. `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use super::app::{App, AppAction};
use super::lifecycle::{lifecycle_transition, LifecycleCommand, LifecycleError};
use super::world::{Checkpoint, LeakReport, SimWorld, SERVICE_INTERFACES};
use crate::dsl::parse_literals;
use crate::enforcer::{EnforceError, HealingFailure, InterventionRecord, PolicyEnforcer, Sink, SinkError};
use crate::symbol::{ActionKind, ActionSymbol, Event, InstanceId, Trace, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Expectation {
    Healed,
    NoViolation,
}

impl std::str::FromStr for Expectation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "healed" => Ok(Expectation::Healed),
            "no-violation" => Ok(Expectation::NoViolation),
            _ => Err(format!("unknown expectation `{s}` (expected healed or no-violation)")),
        }
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Expectation::Healed => "healed",
            Expectation::NoViolation => "no-violation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Lifecycle(LifecycleCommand),
    Tap(String),
    Call { symbol: ActionSymbol, args: Vec<Value> },
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Lifecycle(c) => write!(f, "{c}"),
            Command::Tap(b) => write!(f, "tap {b}"),
            Command::Call { symbol, args } => {
                match symbol.kind() {
                    ActionKind::Constructor => write!(f, "call new {}", symbol.interface())?,
                    _ => write!(f, "call {}.{}", symbol.interface(), symbol.method())?,
                }
                if !args.is_empty() {
                    let a: Vec<String> = args.iter().map(ToString::to_string).collect();
                    write!(f, " ({})", a.join(", "))?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptStep {
    pub line: usize,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioScript {
    pub name: String,
    pub app: App,
    pub expected: Option<Expectation>,
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ScriptError {
    ScriptError {
        line,
        message: message.into(),
    }
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut name = None;
        let mut app = None;
        let mut expected = None;
        let mut steps = Vec::new();
        let mut last = 0;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            last = lineno;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let header = matches!(head, "scenario" | "app" | "expect");
            if header && !steps.is_empty() {
                return Err(err(lineno, format!("`{head}` must come before the first command")));
            }
            let lifecycle = |c| {
                if rest.is_empty() {
                    Ok(Command::Lifecycle(c))
                } else {
                    Err(err(lineno, format!("`{head}` takes no arguments")))
                }
            };
            let command = match head {
                "scenario" | "app" | "expect" if rest.is_empty() => {
                    return Err(err(lineno, format!("`{head}` needs a value")));
                }
                "scenario" => {
                    name = Some(rest.to_owned());
                    continue;
                }
                "app" => {
                    app = Some(rest.parse::<App>().map_err(|e| err(lineno, e.to_string()))?);
                    continue;
                }
                "expect" => {
                    expected = Some(rest.parse::<Expectation>().map_err(|e| err(lineno, e))?);
                    continue;
                }
                "launch" => lifecycle(LifecycleCommand::Launch)?,
                "background" => lifecycle(LifecycleCommand::Background)?,
                "foreground" => lifecycle(LifecycleCommand::Foreground)?,
                "rotate" => lifecycle(LifecycleCommand::Rotate)?,
                "destroy" => lifecycle(LifecycleCommand::Destroy)?,
                "tap" => {
                    if rest.is_empty() || rest.contains(char::is_whitespace) {
                        return Err(err(lineno, "`tap` needs exactly one button name"));
                    }
                    Command::Tap(rest.to_owned())
                }
                "call" => parse_call(raw, rest, lineno)?,
                other => return Err(err(lineno, format!("unknown command `{other}`"))),
            };
            steps.push(ScriptStep { line: lineno, command });
        }
        let name = name.ok_or_else(|| err(last.max(1), "missing `scenario <name>` header"))?;
        let app = app.ok_or_else(|| err(last.max(1), "missing `app <name>` header"))?;
        match steps.first() {
            Some(ScriptStep {
                command: Command::Lifecycle(LifecycleCommand::Launch),
                ..
            }) => {}
            Some(s) => return Err(err(s.line, "a scenario must begin with `launch`")),
            None => return Err(err(last.max(1), "a scenario needs at least one command")),
        }
        for s in &steps {
            if let Command::Tap(b) = &s.command {
                if app.press(b).is_none() {
                    return Err(err(s.line, format!("{app} has no button `{b}`")));
                }
            }
        }
        Ok(Self {
            name,
            app,
            expected,
            steps,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(path.display().to_string(), e.to_string()))?;
        Self::parse(&text).map_err(|e| LoadError::Script(path.display().to_string(), e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("{0}: {1}")]
    Io(String, String),
    #[error("{0}: {1}")]
    Script(String, ScriptError),
}

fn parse_call(raw: &str, rest: &str, lineno: usize) -> Result<Command, ScriptError> {
    let (target, args_text) = match rest.find('(') {
        Some(p) => (rest[..p].trim(), Some(&rest[p..])),
        None => (rest, None),
    };
    let symbol = match target.split_whitespace().collect::<Vec<_>>()[..] {
        ["new", iface] => ActionSymbol::try_constructor(iface),
        [qualified] => match qualified.split_once('.') {
            Some((iface, method)) => ActionSymbol::try_call(iface, method),
            None => return Err(err(lineno, format!("expected <Iface>.<method>, found `{qualified}`"))),
        },
        _ => return Err(err(lineno, "expected `call <Iface>.<method>` or `call new <Iface>`")),
    }
    .map_err(|e| err(lineno, e.to_string()))?;
    let args = match args_text {
        Some(t) => {
            let col0 = raw.find(t).unwrap_or(0);
            parse_literals(t, lineno, col0).map_err(|d| err(lineno, d.to_string()))?
        }
        None => Vec::new(),
    };
    Ok(Command::Call { symbol, args })
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("step {step} (line {line}, `{command}`): {kind}")]
    Step {
        step: usize,
        line: usize,
        command: String,
        kind: StepErrorKind,
    },
}

#[derive(Debug, Error)]
pub enum StepErrorKind {
    #[error(transparent)]
    Lifecycle(#[from] LifecycleError),
    #[error(transparent)]
    Enforce(#[from] EnforceError),
    #[error("rejected by the platform: {0}")]
    Platform(#[from] SinkError),
    #[error("{0} has no handle for {1}")]
    NoHandle(App, String),
    #[error("{0} has no button `{1}`")]
    NoButton(App, String),
}

/// What a finished replay produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioRun {
    pub scenario: String,
    pub app: App,
    pub enforced: bool,
    /// App-originated events in issue order.
    pub app_trace: Trace,
    /// Everything the platform executed.
    pub trace: Trace,
    pub leaks: LeakReport,
    pub interventions: Vec<InterventionRecord>,
    pub failures: Vec<HealingFailure>,
}

/// Replays a script one step at a time against a fresh [`SimWorld`].
#[derive(Debug)]
pub struct ScenarioRunner {
    name: String,
    app: App,
    world: SimWorld,
    enforcer: Option<PolicyEnforcer>,
    handles: BTreeMap<String, InstanceId>,
    app_events: Vec<Event>,
    leaks: LeakReport,
    interventions: Vec<InterventionRecord>,
    app_work: Duration,
    steps_done: usize,
}

impl ScenarioRunner {
    pub fn new(script: &ScenarioScript, enforcer: Option<PolicyEnforcer>) -> Self {
        let mut world = SimWorld::new();
        let handles = SERVICE_INTERFACES
            .iter()
            .map(|i| (i.to_string(), world.allocate(i)))
            .collect();
        Self {
            name: script.name.clone(),
            app: script.app,
            world,
            enforcer,
            handles,
            app_events: Vec::new(),
            leaks: LeakReport::default(),
            interventions: Vec::new(),
            app_work: Duration::ZERO,
            steps_done: 0,
        }
    }

    /// Makes each step spin for `work` before issuing its events, standing
    /// in for the app's own processing.
    pub fn with_app_work(mut self, work: Duration) -> Self {
        self.app_work = work;
        self
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    pub fn enforcer(&self) -> Option<&PolicyEnforcer> {
        self.enforcer.as_ref()
    }

    pub fn step(&mut self, step: &ScriptStep) -> Result<(), RunError> {
        self.steps_done += 1;
        let n = self.steps_done;
        self.exec(&step.command).map_err(|kind| RunError::Step {
            step: n,
            line: step.line,
            command: step.command.to_string(),
            kind,
        })
    }

    fn exec(&mut self, command: &Command) -> Result<(), StepErrorKind> {
        if !self.app_work.is_zero() {
            spin(self.app_work);
        }
        match command {
            Command::Lifecycle(c) => self.lifecycle(*c),
            Command::Tap(button) => {
                let actions = self
                    .app
                    .press(button)
                    .ok_or_else(|| StepErrorKind::NoButton(self.app, button.clone()))?;
                for AppAction { symbol, args } in actions {
                    self.app_call(symbol, args)?;
                }
                Ok(())
            }
            Command::Call { symbol, args } => self.app_call(symbol.clone(), args.clone()),
        }
    }

    fn lifecycle(&mut self, command: LifecycleCommand) -> Result<(), StepErrorKind> {
        let steps = lifecycle_transition(self.world.current_state(), command)?;
        for (callback, state) in steps {
            if callback == "onCreate" {
                self.world.start_activity();
            }
            let event = Event::app(ActionSymbol::callback(callback), self.app_events.len() as u64);
            self.issue(event)?;
            self.world.set_state(state);
            match callback {
                "onStop" => self.world.check(Checkpoint::OnStop, &mut self.leaks),
                "onDestroy" => self.world.check(Checkpoint::OnDestroy, &mut self.leaks),
                _ => {}
            }
        }
        Ok(())
    }

    fn app_call(&mut self, symbol: ActionSymbol, args: Vec<Value>) -> Result<(), StepErrorKind> {
        let iface = symbol.interface().to_owned();
        let instance = match symbol.kind() {
            ActionKind::Constructor => {
                let id = self.world.allocate(&iface);
                self.handles.insert(iface, id);
                id
            }
            _ => *self
                .handles
                .get(&iface)
                .ok_or_else(|| StepErrorKind::NoHandle(self.app, iface.clone()))?,
        };
        let event = Event::app(symbol, self.app_events.len() as u64)
            .with_instance(instance)
            .with_args(args);
        self.issue(event)
    }

    fn issue(&mut self, event: Event) -> Result<(), StepErrorKind> {
        self.app_events.push(event.clone());
        match &mut self.enforcer {
            Some(enforcer) => {
                let outcome = enforcer.on_event(event, &mut self.world)?;
                self.interventions.extend(outcome.records);
            }
            None => {
                self.world.execute(&event)?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> ScenarioRun {
        self.world.check(Checkpoint::EndOfRun, &mut self.leaks);
        let failures = self.enforcer.as_ref().map(|e| e.failures().to_vec()).unwrap_or_default();
        ScenarioRun {
            scenario: self.name,
            app: self.app,
            enforced: self.enforcer.is_some(),
            app_trace: Trace::new(self.app_events),
            trace: Trace::new(self.world.executed().to_vec()),
            leaks: self.leaks,
            interventions: self.interventions,
            failures,
        }
    }
}

fn spin(d: Duration) {
    let start = Instant::now();
    while start.elapsed() < d {
        std::hint::spin_loop();
    }
}

/// Replays `script` from a fresh world, enforcing with `enforcer` if given.
pub fn run_scenario(script: &ScenarioScript, enforcer: Option<PolicyEnforcer>) -> Result<ScenarioRun, RunError> {
    let mut runner = ScenarioRunner::new(script, enforcer);
    for step in &script.steps {
        runner.step(step)?;
    }
    Ok(runner.finish())
}
