//! The policy enforcer: hosts proactive modules, intercepts app events, and
//! executes the actions the modules synthesize against a [`Sink`].

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;
use thiserror::Error;

use crate::automaton::{Bindings, StateId, StepError, ValidationDiagnostic};
use crate::dsl::PolicyDoc;
use crate::interference::{check_pair, InterferenceReport};
use crate::symbol::{ActionKind, Event, InstanceId, Origin, Trace, Value};

/// The consumer of enforced events, typically the simulated platform.
pub trait Sink {
    /// Executes one event. Constructors return the instance they created.
    fn execute(&mut self, event: &Event) -> Result<Option<InstanceId>, SinkError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct SinkError {
    pub message: String,
}

impl SinkError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

/// Accepts everything and keeps what it received. Constructors without an
/// instance get a fresh one.
#[derive(Debug, Clone, Default)]
pub struct RecordingSink {
    pub received: Vec<Event>,
    next_instance: u64,
}

impl RecordingSink {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Sink for RecordingSink {
    fn execute(&mut self, event: &Event) -> Result<Option<InstanceId>, SinkError> {
        let mut created = None;
        if event.symbol.kind() == ActionKind::Constructor {
            created = Some(event.instance.unwrap_or_else(|| {
                self.next_instance += 1;
                InstanceId(1 << 32 | self.next_instance)
            }));
        }
        let mut e = event.clone();
        if e.instance.is_none() {
            e.instance = created;
        }
        self.received.push(e);
        Ok(created)
    }
}

/// Holds the live instance of each managed interface so that modules can
/// destroy and recreate it without the app noticing. App calls addressed to
/// a superseded instance are redirected to its replacement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResourceManager {
    bindings: BTreeMap<String, InstanceId>,
    aliases: BTreeMap<InstanceId, InstanceId>,
}

impl ResourceManager {
    pub fn binding(&self, interface: &str) -> Option<InstanceId> {
        self.bindings.get(interface).copied()
    }

    pub fn bindings(&self) -> &BTreeMap<String, InstanceId> {
        &self.bindings
    }

    /// Where a call addressed to `instance` actually goes.
    pub fn resolve(&self, instance: InstanceId) -> InstanceId {
        self.aliases.get(&instance).copied().unwrap_or(instance)
    }

    fn bind(&mut self, interface: &str, instance: InstanceId) {
        self.bindings.insert(interface.to_owned(), instance);
        self.aliases.remove(&instance);
    }

    fn bind_if_absent(&mut self, interface: &str, instance: InstanceId) {
        if !self.bindings.contains_key(interface) {
            self.bind(interface, instance);
        }
    }

    /// Replaces the live instance; handles to the old one follow.
    fn rebind(&mut self, interface: &str, instance: InstanceId) {
        if let Some(old) = self.bindings.insert(interface.to_owned(), instance) {
            if old != instance {
                for target in self.aliases.values_mut() {
                    if *target == old {
                        *target = instance;
                    }
                }
                self.aliases.insert(old, instance);
            }
        }
        self.aliases.remove(&instance);
    }

    fn alias(&mut self, from: InstanceId, interface: &str) {
        if let Some(live) = self.binding(interface) {
            if live != from {
                self.aliases.insert(from, live);
            }
        }
    }
}

/// A deployed enforcement model with its runtime state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProactiveModule {
    policy: PolicyDoc,
    state: StateId,
    enabled: bool,
    cached_ctor_args: Option<Vec<Value>>,
}

impl ProactiveModule {
    fn new(policy: PolicyDoc) -> Self {
        Self {
            state: policy.automaton.initial(),
            policy,
            enabled: true,
            cached_ctor_args: None,
        }
    }

    pub fn policy(&self) -> &PolicyDoc {
        &self.policy
    }

    pub fn name(&self) -> &str {
        &self.policy.name
    }

    pub fn state(&self) -> StateId {
        self.state
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn cached_ctor_args(&self) -> Option<&[Value]> {
        self.cached_ctor_args.as_deref()
    }

    fn reset(&mut self) {
        self.state = self.policy.automaton.initial();
        self.cached_ctor_args = None;
    }
}

struct ModuleView<'a> {
    cached: Option<&'a [Value]>,
    manager: &'a ResourceManager,
}

impl Bindings for ModuleView<'_> {
    fn instance_of(&self, interface: &str) -> Option<InstanceId> {
        self.manager.binding(interface)
    }

    fn constructor_args(&self, _interface: &str) -> Option<&[Value]> {
        self.cached
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModuleHandle {
    enforcer: u64,
    index: usize,
}

/// One modification a module made to the stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InterventionRecord {
    pub trigger: Event,
    pub policy: String,
    pub synthesized: Vec<Event>,
    pub suppressed: bool,
    pub at_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HealingFailure {
    pub policy: String,
    pub trigger: Event,
    pub action: Event,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnforcementOutcome {
    /// Everything handed to the sink, in execution order.
    pub emitted: Vec<Event>,
    pub records: Vec<InterventionRecord>,
    /// Whether the app event itself reached the sink.
    pub delivered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeployError {
    #[error("a policy named `{0}` is already deployed")]
    DuplicateName(String),
    #[error("policy `{policy}` does not validate: {}", diagnostics.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid {
        policy: String,
        diagnostics: Vec<ValidationDiagnostic>,
    },
    #[error("policy interferes with deployed modules:\n{0}")]
    Interference(InterferenceReport),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnforceError {
    #[error("module handle does not belong to this enforcer")]
    StaleHandle,
    #[error("synthesized event {0} offered for enforcement")]
    SynthesizedInput(Event),
    #[error("policy `{policy}`: {source}")]
    Step {
        policy: String,
        #[source]
        source: StepError,
    },
    #[error("policy `{policy}` failed to heal: executing {action} was rejected: {source}")]
    HealingFailed {
        policy: String,
        action: Event,
        #[source]
        source: SinkError,
    },
    #[error("delivering {event} failed: {source}")]
    Delivery {
        event: Event,
        #[source]
        source: SinkError,
    },
}

static NEXT_ENFORCER: AtomicU64 = AtomicU64::new(1);

/// Dispatches app events to deployed proactive modules.
///
/// Modules see events in deployment order and each advances its own state.
/// When several modules rewrite the same event, their insertions are executed
/// grouped by policy name: every module's pre-input insertions, then the
/// input (unless any module suppressed it), then every post-input insertion.
/// Synthesized events go straight to the sink and are never re-offered to
/// any module.
#[derive(Debug)]
pub struct PolicyEnforcer {
    id: u64,
    modules: Vec<ProactiveModule>,
    manager: ResourceManager,
    log: Vec<InterventionRecord>,
    failures: Vec<HealingFailure>,
}

impl Default for PolicyEnforcer {
    fn default() -> Self {
        Self::new()
    }
}

struct Contribution {
    module: usize,
    before: Vec<Event>,
    after: Vec<Event>,
    suppressed: bool,
}

impl PolicyEnforcer {
    pub fn new() -> Self {
        Self {
            id: NEXT_ENFORCER.fetch_add(1, Ordering::Relaxed),
            modules: Vec::new(),
            manager: ResourceManager::default(),
            log: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// Builds an enforcer with every policy deployed, in order.
    pub fn with_policies<I>(policies: I) -> Result<Self, DeployError>
    where
        I: IntoIterator<Item = PolicyDoc>,
    {
        let mut e = Self::new();
        for p in policies {
            e.deploy(p)?;
        }
        Ok(e)
    }

    pub fn deploy(&mut self, policy: PolicyDoc) -> Result<ModuleHandle, DeployError> {
        if self.modules.iter().any(|m| m.name() == policy.name) {
            return Err(DeployError::DuplicateName(policy.name));
        }
        let report = policy.automaton.validate();
        if !report.is_ok() {
            return Err(DeployError::Invalid {
                policy: policy.name,
                diagnostics: report.diagnostics,
            });
        }
        let mut pairs = Vec::new();
        for m in &self.modules {
            pairs.extend(check_pair(&m.policy, &policy).pairs);
        }
        if !pairs.is_empty() {
            return Err(DeployError::Interference(InterferenceReport { pairs }));
        }
        self.modules.push(ProactiveModule::new(policy));
        Ok(ModuleHandle {
            enforcer: self.id,
            index: self.modules.len() - 1,
        })
    }

    fn index(&self, handle: ModuleHandle) -> Result<usize, EnforceError> {
        if handle.enforcer != self.id || handle.index >= self.modules.len() {
            return Err(EnforceError::StaleHandle);
        }
        Ok(handle.index)
    }

    pub fn module(&self, handle: ModuleHandle) -> Result<&ProactiveModule, EnforceError> {
        Ok(&self.modules[self.index(handle)?])
    }

    pub fn handle_of(&self, policy: &str) -> Option<ModuleHandle> {
        self.modules.iter().position(|m| m.name() == policy).map(|index| ModuleHandle {
            enforcer: self.id,
            index,
        })
    }

    /// Turning a module on restarts it from its initial state with no cached
    /// constructor arguments. Enabling an enabled module changes nothing.
    pub fn set_enabled(&mut self, handle: ModuleHandle, on: bool) -> Result<(), EnforceError> {
        let i = self.index(handle)?;
        let m = &mut self.modules[i];
        if on && !m.enabled {
            m.reset();
        }
        m.enabled = on;
        Ok(())
    }

    pub fn modules(&self) -> &[ProactiveModule] {
        &self.modules
    }

    pub fn manager(&self) -> &ResourceManager {
        &self.manager
    }

    pub fn intervention_log(&self) -> &[InterventionRecord] {
        &self.log
    }

    pub fn failures(&self) -> &[HealingFailure] {
        &self.failures
    }

    /// Whether any enabled module observes the event's symbol.
    pub fn intercepts(&self, event: &Event) -> bool {
        self.modules
            .iter()
            .any(|m| m.enabled && m.policy.automaton.observes(&event.symbol))
    }

    pub fn on_event<S>(&mut self, mut event: Event, sink: &mut S) -> Result<EnforcementOutcome, EnforceError>
    where
        S: Sink + ?Sized,
    {
        if event.origin != Origin::App {
            return Err(EnforceError::SynthesizedInput(event));
        }
        let kind = event.symbol.kind();
        if kind == ActionKind::ApiCall {
            event.instance = event.instance.map(|i| self.manager.resolve(i));
        }

        let mut observed = false;
        let mut contributions = Vec::new();
        for (index, m) in self.modules.iter_mut().enumerate() {
            if !m.enabled || !m.policy.automaton.observes(&event.symbol) {
                continue;
            }
            observed = true;
            if kind == ActionKind::Constructor {
                m.cached_ctor_args = Some(event.args.clone());
            }
            let view = ModuleView {
                cached: m.cached_ctor_args.as_deref(),
                manager: &self.manager,
            };
            let step = m
                .policy
                .automaton
                .step(m.state, &event, &view)
                .map_err(|source| EnforceError::Step {
                    policy: m.policy.name.clone(),
                    source,
                })?;
            m.state = step.next;
            let identity = step.forwarded_at.is_some() && step.output.len() == 1;
            if !identity {
                let (before, after) = step.split();
                contributions.push(Contribution {
                    module: index,
                    before: before.to_vec(),
                    after: after.to_vec(),
                    suppressed: step.suppressed(),
                });
            }
        }
        if observed && kind == ActionKind::ApiCall {
            if let Some(i) = event.instance {
                self.manager.bind_if_absent(event.symbol.interface(), i);
            }
        }
        contributions.sort_by(|a, b| self.modules[a.module].name().cmp(self.modules[b.module].name()));
        let suppressed = contributions.iter().any(|c| c.suppressed);

        let mut outcome = EnforcementOutcome::default();
        let mut synthesized: Vec<Vec<Event>> = vec![Vec::new(); contributions.len()];
        for (ci, c) in contributions.iter().enumerate() {
            for e in &c.before {
                let done = self.execute_synthesized(e.clone(), &event, c.module, sink)?;
                synthesized[ci].push(done.clone());
                outcome.emitted.push(done);
            }
        }
        if suppressed {
            if observed && kind == ActionKind::Constructor {
                if let Some(i) = event.instance {
                    self.manager.alias(i, event.symbol.interface());
                }
            }
        } else {
            let created = sink.execute(&event).map_err(|source| EnforceError::Delivery {
                event: event.clone(),
                source,
            })?;
            if observed && kind == ActionKind::Constructor {
                if let Some(i) = created.or(event.instance) {
                    self.manager.bind(event.symbol.interface(), i);
                    event.instance = Some(i);
                }
            }
            outcome.delivered = true;
            outcome.emitted.push(event.clone());
        }
        for (ci, c) in contributions.iter().enumerate() {
            for e in &c.after {
                let done = self.execute_synthesized(e.clone(), &event, c.module, sink)?;
                synthesized[ci].push(done.clone());
                outcome.emitted.push(done);
            }
        }

        for (c, synthesized) in contributions.iter().zip(synthesized) {
            let record = InterventionRecord {
                trigger: event.clone(),
                policy: self.modules[c.module].name().to_owned(),
                synthesized,
                suppressed: c.suppressed,
                at_seq: event.seq,
            };
            debug_assert!(!record.synthesized.is_empty() || record.suppressed);
            self.log.push(record.clone());
            outcome.records.push(record);
        }
        Ok(outcome)
    }

    fn execute_synthesized<S>(
        &mut self,
        mut action: Event,
        trigger: &Event,
        module: usize,
        sink: &mut S,
    ) -> Result<Event, EnforceError>
    where
        S: Sink + ?Sized,
    {
        debug_assert_eq!(action.origin, Origin::Synthesized);
        let iface = action.symbol.interface().to_owned();
        if action.symbol.kind() == ActionKind::ApiCall {
            // Bind late: an earlier insertion in this outcome may have
            // recreated the instance.
            action.instance = self.manager.binding(&iface).or(action.instance);
        }
        match sink.execute(&action) {
            Ok(created) => {
                if action.symbol.kind() == ActionKind::Constructor {
                    if let Some(i) = created {
                        self.manager.rebind(&iface, i);
                        action.instance = Some(i);
                    }
                }
                Ok(action)
            }
            Err(source) => {
                let policy = self.modules[module].name().to_owned();
                self.failures.push(HealingFailure {
                    policy: policy.clone(),
                    trigger: trigger.clone(),
                    action: action.clone(),
                    reason: source.message.clone(),
                });
                Err(EnforceError::HealingFailed { policy, action, source })
            }
        }
    }

    /// Enforces a whole trace against `sink`. The returned trace holds every
    /// emitted event renumbered from zero.
    pub fn run_enforced<S>(&mut self, trace: &Trace, sink: &mut S) -> Result<(Trace, Vec<InterventionRecord>), EnforceError>
    where
        S: Sink + ?Sized,
    {
        let mut out = Vec::with_capacity(trace.len());
        let mut records = Vec::new();
        for e in trace {
            let o = self.on_event(e.clone(), sink)?;
            out.extend(o.emitted);
            records.extend(o.records);
        }
        let mut out = Trace::new(out);
        out.renumber();
        Ok((out, records))
    }

    /// [`run_enforced`](Self::run_enforced) against a [`RecordingSink`].
    pub fn enforce_trace(&mut self, trace: &Trace) -> Result<(Trace, Vec<InterventionRecord>), EnforceError> {
        self.run_enforced(trace, &mut RecordingSink::new())
    }
}
