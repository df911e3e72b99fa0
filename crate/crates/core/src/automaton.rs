//! Edit automata: finite-state transducers over action streams that forward,
//! suppress, or insert actions on every transition.
//!
//! Guards are evaluated against the automaton's *vocabulary* only. An event
//! whose symbol lies outside the vocabulary bypasses the automaton untouched
//! and does not move it, so `Any` and `AnyExcept` quantify over the
//! vocabulary rather than over every possible action.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::symbol::{ActionKind, ActionSymbol, Event, InstanceId, Origin, Trace, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Guard {
    Exactly(ActionSymbol),
    AnyOf(BTreeSet<ActionSymbol>),
    AnyExcept(BTreeSet<ActionSymbol>),
    Any,
}

impl Guard {
    /// Symbols named explicitly by the guard.
    pub fn named_symbols(&self) -> impl Iterator<Item = &ActionSymbol> {
        let (one, set) = match self {
            Guard::Exactly(s) => (Some(s), None),
            Guard::AnyOf(set) | Guard::AnyExcept(set) => (None, Some(set)),
            Guard::Any => (None, None),
        };
        one.into_iter().chain(set.into_iter().flatten())
    }

    /// Whether the guard accepts `symbol`, which must already be known to be
    /// inside the owning automaton's vocabulary.
    pub fn accepts(&self, symbol: &ActionSymbol) -> bool {
        match self {
            Guard::Exactly(s) => s == symbol,
            Guard::AnyOf(set) => set.contains(symbol),
            Guard::AnyExcept(set) => !set.contains(symbol),
            Guard::Any => true,
        }
    }
}

fn write_set(f: &mut fmt::Formatter<'_>, set: &BTreeSet<ActionSymbol>) -> fmt::Result {
    f.write_str("{")?;
    for (i, s) in set.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        write!(f, "{s}")?;
    }
    f.write_str("}")
}

/// Renders the guard in policy-file syntax.
impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Exactly(s) => match s.kind() {
                ActionKind::ApiCall => write!(f, "call {}.{}", s.interface(), s.method()),
                ActionKind::Callback => write!(f, "callback {}", s.method()),
                ActionKind::Constructor => write!(f, "new {}", s.interface()),
            },
            Guard::AnyOf(set) => {
                f.write_str("any-of ")?;
                write_set(f, set)
            }
            Guard::AnyExcept(set) => {
                f.write_str("any-except ")?;
                write_set(f, set)
            }
            Guard::Any => f.write_str("any"),
        }
    }
}

/// Where a synthesized action takes its arguments from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ArgSource {
    None,
    /// Arguments of the most recent intercepted constructor.
    Cached,
    Literals(Vec<Value>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OutputItem {
    /// Emit the matched input event itself.
    Forward,
    Synthesize { symbol: ActionSymbol, args: ArgSource },
}

impl OutputItem {
    pub fn insert(symbol: ActionSymbol) -> Self {
        OutputItem::Synthesize {
            symbol,
            args: ArgSource::None,
        }
    }

    pub fn insert_with(symbol: ActionSymbol, args: ArgSource) -> Self {
        OutputItem::Synthesize { symbol, args }
    }
}

impl fmt::Display for OutputItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputItem::Forward => f.write_str("input"),
            OutputItem::Synthesize { symbol, args } => {
                match symbol.kind() {
                    ActionKind::Constructor => write!(f, "insert new {}", symbol.interface())?,
                    ActionKind::ApiCall => {
                        write!(f, "insert call {}.{}", symbol.interface(), symbol.method())?
                    }
                    ActionKind::Callback => write!(f, "insert callback {}", symbol.method())?,
                }
                // `args none` is implied for calls and spelled out for constructors.
                match (args, symbol.kind()) {
                    (ArgSource::None, ActionKind::Constructor) => f.write_str(" args none"),
                    (ArgSource::None, _) => Ok(()),
                    (ArgSource::Cached, _) => f.write_str(" args cached"),
                    (ArgSource::Literals(vals), _) => {
                        f.write_str(" args (")?;
                        for (i, v) in vals.iter().enumerate() {
                            if i > 0 {
                                f.write_str(" ")?;
                            }
                            write!(f, "{v}")?;
                        }
                        f.write_str(")")
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transition {
    pub from: StateId,
    pub guard: Guard,
    pub output: Vec<OutputItem>,
    pub to: StateId,
}

impl Transition {
    pub fn new(from: u32, guard: Guard, output: Vec<OutputItem>, to: u32) -> Self {
        Self {
            from: StateId(from),
            guard,
            output,
            to: StateId(to),
        }
    }

    pub fn forwards(&self) -> bool {
        self.output.iter().any(|o| *o == OutputItem::Forward)
    }

    /// True when the transition leaves the matched event unmodified.
    pub fn is_identity(&self) -> bool {
        self.output == [OutputItem::Forward]
    }

    pub fn synthesized(&self) -> impl Iterator<Item = &ActionSymbol> {
        self.output.iter().filter_map(|o| match o {
            OutputItem::Synthesize { symbol, .. } => Some(symbol),
            OutputItem::Forward => None,
        })
    }

    fn sort_key(&self) -> (StateId, String, StateId, String) {
        (self.from, self.guard.to_string(), self.to, self.emit_text())
    }

    pub fn emit_text(&self) -> String {
        if self.output.is_empty() {
            return "nothing".to_owned();
        }
        self.output
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// One policy-file transition clause.
impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "on {} from {} to {} emit {}",
            self.guard,
            self.from,
            self.to,
            self.emit_text()
        )
    }
}

/// A finite-state edit automaton.
///
/// Transitions are kept in canonical order (by source state, then guard
/// text), which is irrelevant to semantics because a valid automaton is
/// deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditAutomaton {
    states: BTreeSet<StateId>,
    initial: StateId,
    transitions: Vec<Transition>,
    alphabet: BTreeSet<ActionSymbol>,
    vocabulary: BTreeSet<ActionSymbol>,
}

impl EditAutomaton {
    pub fn new<S>(states: S, initial: u32, transitions: Vec<Transition>) -> Self
    where
        S: IntoIterator<Item = u32>,
    {
        let mut a = Self {
            states: states.into_iter().map(StateId).collect(),
            initial: StateId(initial),
            transitions,
            alphabet: BTreeSet::new(),
            vocabulary: BTreeSet::new(),
        };
        a.transitions.sort_by_cached_key(Transition::sort_key);
        a.vocabulary = a.derive_vocabulary();
        a
    }

    /// Declares additional observed symbols beyond those the guards and
    /// insertions already name.
    pub fn with_alphabet<I>(mut self, symbols: I) -> Self
    where
        I: IntoIterator<Item = ActionSymbol>,
    {
        self.alphabet.extend(symbols);
        self.vocabulary = self.derive_vocabulary();
        self
    }

    fn derive_vocabulary(&self) -> BTreeSet<ActionSymbol> {
        let mut v = self.alphabet.clone();
        for t in &self.transitions {
            v.extend(t.guard.named_symbols().cloned());
            v.extend(t.synthesized().cloned());
        }
        v
    }

    pub fn states(&self) -> &BTreeSet<StateId> {
        &self.states
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Explicitly declared extra symbols.
    pub fn alphabet(&self) -> &BTreeSet<ActionSymbol> {
        &self.alphabet
    }

    pub fn vocabulary(&self) -> &BTreeSet<ActionSymbol> {
        &self.vocabulary
    }

    pub fn observes(&self, symbol: &ActionSymbol) -> bool {
        self.vocabulary.contains(symbol)
    }

    fn matching(&self, state: StateId, symbol: &ActionSymbol) -> impl Iterator<Item = usize> + '_ {
        let symbol = symbol.clone();
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.from == state && t.guard.accepts(&symbol))
            .map(|(i, _)| i)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut diagnostics = Vec::new();
        if !self.states.contains(&self.initial) {
            diagnostics.push(ValidationDiagnostic::UndeclaredInitial {
                state: self.initial,
            });
        }
        for (i, t) in self.transitions.iter().enumerate() {
            for s in [t.from, t.to] {
                if !self.states.contains(&s) {
                    diagnostics.push(ValidationDiagnostic::DanglingState {
                        transition: i,
                        state: s,
                    });
                }
            }
            match &t.guard {
                Guard::AnyOf(set) | Guard::AnyExcept(set) if set.is_empty() => {
                    diagnostics.push(ValidationDiagnostic::EmptyGuardSet { transition: i });
                }
                _ => {}
            }
            let forwards = t.output.iter().filter(|o| **o == OutputItem::Forward).count();
            if forwards > 1 {
                diagnostics.push(ValidationDiagnostic::RepeatedForward { transition: i });
            }
        }
        for &state in &self.states {
            for symbol in &self.vocabulary {
                let hits: Vec<usize> = self.matching(state, symbol).collect();
                match hits.len() {
                    0 => diagnostics.push(ValidationDiagnostic::Incomplete {
                        state,
                        symbol: symbol.clone(),
                    }),
                    1 => {}
                    _ => diagnostics.push(ValidationDiagnostic::Nondeterministic {
                        state,
                        symbol: symbol.clone(),
                        transitions: hits,
                    }),
                }
            }
        }
        ValidationReport { diagnostics }
    }

    /// Applies one input event.
    ///
    /// Events outside the vocabulary are returned unchanged and leave the
    /// state where it was.
    pub fn step<B>(&self, state: StateId, event: &Event, bindings: &B) -> Result<Step, StepError>
    where
        B: Bindings + ?Sized,
    {
        if !self.states.contains(&state) {
            return Err(StepError::UnknownState(state));
        }
        if !self.observes(&event.symbol) {
            return Ok(Step {
                next: state,
                output: vec![event.clone()],
                forwarded_at: Some(0),
                transition: None,
            });
        }
        let index = self
            .matching(state, &event.symbol)
            .next()
            .ok_or_else(|| StepError::NoTransition {
                state,
                symbol: event.symbol.clone(),
            })?;
        let t = &self.transitions[index];
        let mut output = Vec::with_capacity(t.output.len());
        let mut forwarded_at = None;
        for item in &t.output {
            match item {
                OutputItem::Forward => {
                    forwarded_at = Some(output.len());
                    output.push(event.clone());
                }
                OutputItem::Synthesize { symbol, args } => {
                    output.push(synthesize(symbol, args, bindings, event.seq).ok_or_else(|| {
                        StepError::UnresolvedConstructorArgs {
                            state,
                            symbol: symbol.clone(),
                        }
                    })?);
                }
            }
        }
        Ok(Step {
            next: t.to,
            output,
            forwarded_at,
            transition: Some(index),
        })
    }

    /// Transforms a whole trace from the initial state. Output ordinals are
    /// renumbered from zero.
    pub fn run(&self, trace: &Trace) -> Result<Trace, StepError> {
        let mut cursor = Cursor::new(self);
        let mut out = Vec::with_capacity(trace.len());
        for e in trace {
            out.extend(cursor.feed(e)?);
        }
        let mut out = Trace::new(out);
        out.renumber();
        Ok(out)
    }

    pub fn effect_sets(&self) -> EffectSets {
        let mut inserted = BTreeSet::new();
        let mut suppressible = BTreeSet::new();
        for t in &self.transitions {
            inserted.extend(t.synthesized().cloned());
            if !t.forwards() {
                suppressible.extend(
                    self.vocabulary
                        .iter()
                        .filter(|s| t.guard.accepts(s))
                        .cloned(),
                );
            }
        }
        EffectSets {
            inserted,
            suppressible,
        }
    }

    /// Runs the automaton as a pure checker: outputs are ignored and every
    /// taken transition that would modify the stream is a violation.
    pub fn violations(&self, trace: &Trace) -> Vec<Violation> {
        let mut state = self.initial;
        let mut found = Vec::new();
        for (position, e) in trace.iter().enumerate() {
            if !self.observes(&e.symbol) {
                continue;
            }
            let Some(i) = self.matching(state, &e.symbol).next() else {
                continue;
            };
            let t = &self.transitions[i];
            if !t.is_identity() {
                found.push(Violation {
                    position,
                    state,
                    symbol: e.symbol.clone(),
                });
            }
            state = t.to;
        }
        found
    }
}

fn synthesize<B>(symbol: &ActionSymbol, args: &ArgSource, bindings: &B, seq: u64) -> Option<Event>
where
    B: Bindings + ?Sized,
{
    let args = match args {
        ArgSource::None => Vec::new(),
        ArgSource::Literals(v) => v.clone(),
        ArgSource::Cached => bindings.constructor_args(symbol.interface())?.to_vec(),
    };
    let instance = match symbol.kind() {
        ActionKind::Constructor | ActionKind::Callback => None,
        ActionKind::ApiCall => bindings.instance_of(symbol.interface()),
    };
    Some(Event {
        symbol: symbol.clone(),
        instance,
        args,
        origin: Origin::Synthesized,
        seq,
    })
}

/// Resolves instances and cached constructor arguments for synthesized
/// actions.
pub trait Bindings {
    fn instance_of(&self, interface: &str) -> Option<InstanceId>;
    fn constructor_args(&self, interface: &str) -> Option<&[Value]>;
}

/// A context that resolves nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoBindings;

impl Bindings for NoBindings {
    fn instance_of(&self, _: &str) -> Option<InstanceId> {
        None
    }

    fn constructor_args(&self, _: &str) -> Option<&[Value]> {
        None
    }
}

/// Bindings learned from the input stream itself: the last constructor seen
/// per interface and the instance each interface was last used with.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceBindings {
    instances: BTreeMap<String, InstanceId>,
    ctor_args: BTreeMap<String, Vec<Value>>,
}

impl TraceBindings {
    pub fn observe(&mut self, event: &Event) {
        let iface = event.symbol.interface();
        match event.symbol.kind() {
            ActionKind::Constructor => {
                self.ctor_args.insert(iface.to_owned(), event.args.clone());
                if let Some(i) = event.instance {
                    self.instances.insert(iface.to_owned(), i);
                }
            }
            ActionKind::ApiCall => {
                if let Some(i) = event.instance {
                    self.instances.entry(iface.to_owned()).or_insert(i);
                }
            }
            ActionKind::Callback => {}
        }
    }
}

impl Bindings for TraceBindings {
    fn instance_of(&self, interface: &str) -> Option<InstanceId> {
        self.instances.get(interface).copied()
    }

    fn constructor_args(&self, interface: &str) -> Option<&[Value]> {
        self.ctor_args.get(interface).map(Vec::as_slice)
    }
}

/// Incremental run state over one automaton.
#[derive(Debug, Clone)]
pub struct Cursor<'a> {
    automaton: &'a EditAutomaton,
    state: StateId,
    bindings: TraceBindings,
}

impl<'a> Cursor<'a> {
    pub fn new(automaton: &'a EditAutomaton) -> Self {
        Self::resume(automaton, automaton.initial(), TraceBindings::default())
    }

    pub fn resume(automaton: &'a EditAutomaton, state: StateId, bindings: TraceBindings) -> Self {
        Self {
            automaton,
            state,
            bindings,
        }
    }

    pub fn state(&self) -> StateId {
        self.state
    }

    pub fn bindings(&self) -> &TraceBindings {
        &self.bindings
    }

    pub fn feed(&mut self, event: &Event) -> Result<Vec<Event>, StepError> {
        if self.automaton.observes(&event.symbol) {
            self.bindings.observe(event);
        }
        let step = self.automaton.step(self.state, event, &self.bindings)?;
        self.state = step.next;
        Ok(step.output)
    }
}

/// Result of one [`EditAutomaton::step`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub next: StateId,
    pub output: Vec<Event>,
    /// Position of the forwarded input inside `output`; `None` when the
    /// input was suppressed.
    pub forwarded_at: Option<usize>,
    /// Index of the taken transition; `None` when the event bypassed the
    /// automaton.
    pub transition: Option<usize>,
}

impl Step {
    pub fn suppressed(&self) -> bool {
        self.forwarded_at.is_none()
    }

    /// Events emitted before and after the forwarded input.
    pub fn split(&self) -> (&[Event], &[Event]) {
        match self.forwarded_at {
            Some(i) => (&self.output[..i], &self.output[i + 1..]),
            None => (&self.output[..], &[]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("state {0} is not declared")]
    UnknownState(StateId),
    #[error("no transition from state {state} accepts {symbol} (automaton was not validated)")]
    NoTransition { state: StateId, symbol: ActionSymbol },
    #[error("{symbol} needs cached constructor arguments but no constructor has been seen (state {state})")]
    UnresolvedConstructorArgs { state: StateId, symbol: ActionSymbol },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EffectSets {
    pub inserted: BTreeSet<ActionSymbol>,
    pub suppressible: BTreeSet<ActionSymbol>,
}

impl EffectSets {
    pub fn all(&self) -> BTreeSet<ActionSymbol> {
        self.inserted.union(&self.suppressible).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub position: usize,
    pub state: StateId,
    pub symbol: ActionSymbol,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationDiagnostic {
    UndeclaredInitial {
        state: StateId,
    },
    DanglingState {
        transition: usize,
        state: StateId,
    },
    EmptyGuardSet {
        transition: usize,
    },
    RepeatedForward {
        transition: usize,
    },
    Nondeterministic {
        state: StateId,
        symbol: ActionSymbol,
        transitions: Vec<usize>,
    },
    Incomplete {
        state: StateId,
        symbol: ActionSymbol,
    },
}

impl ValidationDiagnostic {
    /// The transition the diagnostic is anchored to, if any.
    pub fn transition(&self) -> Option<usize> {
        match self {
            Self::DanglingState { transition, .. }
            | Self::EmptyGuardSet { transition }
            | Self::RepeatedForward { transition } => Some(*transition),
            Self::Nondeterministic { transitions, .. } => transitions.get(1).copied(),
            Self::UndeclaredInitial { .. } | Self::Incomplete { .. } => None,
        }
    }
}

impl fmt::Display for ValidationDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UndeclaredInitial { state } => write!(f, "initial state {state} is not declared"),
            Self::DanglingState { transition, state } => {
                write!(f, "transition {transition} references undeclared state {state}")
            }
            Self::EmptyGuardSet { transition } => {
                write!(f, "transition {transition} has an empty symbol set in its guard")
            }
            Self::RepeatedForward { transition } => {
                write!(f, "transition {transition} forwards its input more than once")
            }
            Self::Nondeterministic {
                state,
                symbol,
                transitions,
            } => write!(
                f,
                "state {state} is nondeterministic on {symbol}: transitions {transitions:?} all match"
            ),
            Self::Incomplete { state, symbol } => {
                write!(f, "state {state} has no transition for {symbol}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub diagnostics: Vec<ValidationDiagnostic>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}
