//! Simulated platform: activities, resources and the leak oracle.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::lifecycle::ActivityState;
use crate::enforcer::{Sink, SinkError};
use crate::symbol::{ActionKind, Event, InstanceId};

pub const RESOURCE_INTERFACES: [&str; 6] = [
    "AudioRecord",
    "Camera",
    "LocationManager",
    "SensorManager",
    "BluetoothAdapter",
    "RemoteCallbackList",
];

/// Interfaces the app obtains as ready-made handles rather than constructing.
pub const SERVICE_INTERFACES: [&str; 5] = [
    "Camera",
    "LocationManager",
    "SensorManager",
    "BluetoothAdapter",
    "RemoteCallbackList",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProtocolState {
    Idle,
    Acquired,
    Active,
    Released,
    Killed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimResource {
    pub interface: String,
    pub held: bool,
    pub active: bool,
    pub holder: Option<String>,
    pub protocol_state: ProtocolState,
    /// World sequence number of the event that last acquired it.
    pub acquired_at: Option<u64>,
    /// Live registrations (RemoteCallbackList only).
    pub registrations: u32,
}

impl SimResource {
    fn new(interface: &str) -> Self {
        Self {
            interface: interface.to_owned(),
            held: false,
            active: false,
            holder: None,
            protocol_state: ProtocolState::Idle,
            acquired_at: None,
            registrations: 0,
        }
    }

    fn acquire(&mut self, holder: &str, seq: u64) {
        if !self.held {
            self.acquired_at = Some(seq);
        }
        self.held = true;
        self.holder = Some(holder.to_owned());
        if !self.active {
            self.protocol_state = ProtocolState::Acquired;
        }
    }

    fn activate(&mut self) {
        self.active = true;
        self.protocol_state = ProtocolState::Active;
    }

    fn deactivate(&mut self) {
        if self.active {
            self.active = false;
            self.protocol_state = ProtocolState::Acquired;
        }
    }

    fn release(&mut self) {
        self.held = false;
        self.active = false;
        self.holder = None;
        self.acquired_at = None;
        self.protocol_state = ProtocolState::Released;
    }
}

/// When the leak oracle first expects an interface to be released.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Checkpoint {
    OnStop,
    OnDestroy,
    EndOfRun,
}

impl Checkpoint {
    /// Interfaces whose policies release at onPause or onStop are due once
    /// the holder stops; the rest once it is destroyed.
    pub fn deadline(interface: &str) -> Checkpoint {
        match interface {
            "BluetoothAdapter" | "RemoteCallbackList" => Checkpoint::OnDestroy,
            _ => Checkpoint::OnStop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Leak {
    pub interface: String,
    pub instance: InstanceId,
    pub holder: String,
    pub acquired_at: u64,
    pub checkpoint: Checkpoint,
}

impl fmt::Display for Leak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{} held by {} since #{} (at {:?})",
            self.interface, self.instance, self.holder, self.acquired_at, self.checkpoint
        )
    }
}

/// Each leaked acquisition is listed once, at the first checkpoint that saw it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LeakReport {
    pub leaks: Vec<Leak>,
}

impl LeakReport {
    pub fn is_empty(&self) -> bool {
        self.leaks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.leaks.len()
    }

    fn add(&mut self, leak: Leak) {
        let seen = self
            .leaks
            .iter()
            .any(|l| l.instance == leak.instance && l.acquired_at == leak.acquired_at);
        if !seen {
            self.leaks.push(leak);
        }
    }
}

/// The platform side of a run. Executes events as a [`Sink`] and records
/// them in execution order.
#[derive(Debug, Clone, Default)]
pub struct SimWorld {
    activities: BTreeMap<String, ActivityState>,
    current: Option<String>,
    launches: u32,
    resources: BTreeMap<InstanceId, SimResource>,
    next_instance: u64,
    executed: Vec<Event>,
}

impl SimWorld {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserves an instance id for an app-side handle.
    pub fn allocate(&mut self, interface: &str) -> InstanceId {
        self.next_instance += 1;
        let id = InstanceId(self.next_instance);
        self.resources.insert(id, SimResource::new(interface));
        id
    }

    pub fn resource(&self, id: InstanceId) -> Option<&SimResource> {
        self.resources.get(&id)
    }

    pub fn resources(&self) -> impl Iterator<Item = (InstanceId, &SimResource)> {
        self.resources.iter().map(|(i, r)| (*i, r))
    }

    pub fn current_activity(&self) -> Option<&str> {
        self.current.as_deref()
    }

    pub fn current_state(&self) -> Option<ActivityState> {
        self.current.as_ref().map(|a| self.activities[a])
    }

    pub fn activity_state(&self, name: &str) -> Option<ActivityState> {
        self.activities.get(name).copied()
    }

    /// Starts a fresh activity instance (`MainActivity#n`).
    pub fn start_activity(&mut self) -> &str {
        self.launches += 1;
        let name = format!("MainActivity#{}", self.launches);
        self.activities.insert(name.clone(), ActivityState::Created);
        self.current.insert(name)
    }

    pub fn set_state(&mut self, state: ActivityState) {
        if let Some(a) = &self.current {
            self.activities.insert(a.clone(), state);
        }
    }

    /// Everything executed so far, numbered in execution order.
    pub fn executed(&self) -> &[Event] {
        &self.executed
    }

    /// Runs the leak oracle as of `checkpoint`.
    pub fn check(&self, checkpoint: Checkpoint, report: &mut LeakReport) {
        for (id, r) in &self.resources {
            if !r.held {
                continue;
            }
            let holder = r.holder.clone().unwrap_or_default();
            let due = match checkpoint {
                Checkpoint::EndOfRun => true,
                _ => match self.activities.get(&holder) {
                    Some(ActivityState::Destroyed) => true,
                    Some(ActivityState::Stopped) => Checkpoint::deadline(&r.interface) == Checkpoint::OnStop,
                    _ => false,
                },
            };
            if due {
                report.add(Leak {
                    interface: r.interface.clone(),
                    instance: *id,
                    holder,
                    acquired_at: r.acquired_at.unwrap_or_default(),
                    checkpoint,
                });
            }
        }
    }

    fn apply(&mut self, event: &Event, seq: u64) -> Result<Option<InstanceId>, SinkError> {
        let sym = &event.symbol;
        let iface = sym.interface();
        if sym.kind() == ActionKind::Callback {
            return Ok(None);
        }
        if !RESOURCE_INTERFACES.contains(&iface) {
            return Err(SinkError::new(format!("unknown interface {iface}")));
        }
        let holder = self
            .current
            .clone()
            .ok_or_else(|| SinkError::new(format!("{sym} with no running activity")))?;
        if sym.kind() == ActionKind::Constructor {
            if iface != "AudioRecord" && iface != "RemoteCallbackList" {
                return Err(SinkError::new(format!("{iface} cannot be constructed")));
            }
            let id = match event.instance {
                Some(id) if self.resources.contains_key(&id) => id,
                Some(id) => {
                    self.resources.insert(id, SimResource::new(iface));
                    id
                }
                None => self.allocate(iface),
            };
            let r = self.resources.get_mut(&id).expect("just inserted");
            if r.interface != iface {
                return Err(SinkError::new(format!("{id} is a {}", r.interface)));
            }
            if iface == "AudioRecord" {
                r.acquire(&holder, seq);
            }
            return Ok(Some(id));
        }

        let id = event
            .instance
            .ok_or_else(|| SinkError::new(format!("{sym} without a receiver")))?;
        let others_active = |resources: &BTreeMap<InstanceId, SimResource>, pred: fn(&SimResource) -> bool| {
            resources
                .iter()
                .any(|(i, r)| *i != id && r.interface == iface && pred(r))
        };
        let camera_busy = others_active(&self.resources, |r| r.held);
        let mic_busy = others_active(&self.resources, |r| r.active);
        let r = self
            .resources
            .get_mut(&id)
            .ok_or_else(|| SinkError::new(format!("{sym} on unknown instance {id}")))?;
        if r.interface != iface {
            return Err(SinkError::new(format!("{sym} on {id}, which is a {}", r.interface)));
        }
        let method = sym.method();
        match (iface, method) {
            ("AudioRecord", "startRecording") => {
                if !r.held {
                    return Err(SinkError::new(format!("startRecording on unheld AudioRecord{id}")));
                }
                if mic_busy {
                    return Err(SinkError::new("microphone already in use"));
                }
                r.activate();
            }
            ("AudioRecord", "stop") => r.deactivate(),
            ("AudioRecord", "release") | ("Camera", "release") => r.release(),
            ("Camera", "open") => {
                if r.held || camera_busy {
                    return Err(SinkError::new("camera already in use"));
                }
                r.acquire(&holder, seq);
            }
            ("Camera", "startPreview") => {
                if !r.held {
                    return Err(SinkError::new(format!("startPreview on unheld Camera{id}")));
                }
                r.activate();
            }
            ("Camera", "stopPreview") => r.deactivate(),
            ("LocationManager", "requestLocationUpdates")
            | ("SensorManager", "registerListener")
            | ("BluetoothAdapter", "enable") => {
                r.acquire(&holder, seq);
                r.activate();
            }
            ("LocationManager", "removeUpdates")
            | ("SensorManager", "unregisterListener")
            | ("BluetoothAdapter", "disable") => r.release(),
            ("RemoteCallbackList", "register") => {
                if r.protocol_state != ProtocolState::Killed {
                    r.registrations += 1;
                    r.acquire(&holder, seq);
                }
            }
            ("RemoteCallbackList", "unregister") => {
                r.registrations = r.registrations.saturating_sub(1);
                if r.registrations == 0 {
                    r.release();
                }
            }
            ("RemoteCallbackList", "kill") => {
                r.registrations = 0;
                r.release();
                r.protocol_state = ProtocolState::Killed;
            }
            _ => return Err(SinkError::new(format!("{method} is not a method of {iface}"))),
        }
        Ok(None)
    }
}

impl Sink for SimWorld {
    fn execute(&mut self, event: &Event) -> Result<Option<InstanceId>, SinkError> {
        let seq = self.executed.len() as u64;
        let created = self.apply(event, seq)?;
        let mut e = event.clone();
        e.seq = seq;
        if created.is_some() {
            e.instance = created;
        }
        self.executed.push(e);
        Ok(created)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::ActionSymbol;

    fn world() -> SimWorld {
        let mut w = SimWorld::new();
        w.start_activity();
        w.set_state(ActivityState::Resumed);
        w
    }

    fn call(w: &mut SimWorld, iface: &str, m: &str, id: InstanceId) -> Result<Option<InstanceId>, SinkError> {
        w.execute(&Event::app(ActionSymbol::call(iface, m), 0).with_instance(id))
    }

    #[test]
    fn recording_makes_held_and_active() {
        let mut w = world();
        let id = w.execute(&Event::app(ActionSymbol::constructor("AudioRecord"), 0)).unwrap().unwrap();
        call(&mut w, "AudioRecord", "startRecording", id).unwrap();
        let r = w.resource(id).unwrap();
        assert!(r.held && r.active);
        assert_eq!(r.holder.as_deref(), Some("MainActivity#1"));
        call(&mut w, "AudioRecord", "release", id).unwrap();
        let r = w.resource(id).unwrap();
        assert!(!r.held && !r.active && r.holder.is_none());
    }

    #[test]
    fn start_on_unheld_is_an_error() {
        let mut w = world();
        let id = w.allocate("AudioRecord");
        assert!(call(&mut w, "AudioRecord", "startRecording", id).is_err());
        let cam = w.allocate("Camera");
        assert!(call(&mut w, "Camera", "startPreview", cam).is_err());
    }

    #[test]
    fn exclusive_resources_reject_double_acquisition() {
        let mut w = world();
        let cam = w.allocate("Camera");
        call(&mut w, "Camera", "open", cam).unwrap();
        assert!(call(&mut w, "Camera", "open", cam).is_err());
        let a = w.execute(&Event::app(ActionSymbol::constructor("AudioRecord"), 0)).unwrap().unwrap();
        let b = w.execute(&Event::app(ActionSymbol::constructor("AudioRecord"), 0)).unwrap().unwrap();
        call(&mut w, "AudioRecord", "startRecording", a).unwrap();
        assert!(call(&mut w, "AudioRecord", "startRecording", b).is_err());
    }

    #[test]
    fn kill_clears_registrations() {
        let mut w = world();
        let rcl = w.allocate("RemoteCallbackList");
        call(&mut w, "RemoteCallbackList", "register", rcl).unwrap();
        assert!(w.resource(rcl).unwrap().held);
        call(&mut w, "RemoteCallbackList", "kill", rcl).unwrap();
        w.set_state(ActivityState::Destroyed);
        let mut report = LeakReport::default();
        w.check(Checkpoint::OnDestroy, &mut report);
        w.check(Checkpoint::EndOfRun, &mut report);
        assert!(report.is_empty());
    }

    #[test]
    fn oracle_respects_deadlines() {
        let mut w = world();
        let bt = w.allocate("BluetoothAdapter");
        let loc = w.allocate("LocationManager");
        call(&mut w, "BluetoothAdapter", "enable", bt).unwrap();
        call(&mut w, "LocationManager", "requestLocationUpdates", loc).unwrap();
        w.set_state(ActivityState::Paused);
        let mut report = LeakReport::default();
        w.check(Checkpoint::OnStop, &mut report);
        assert!(report.is_empty());
        w.set_state(ActivityState::Stopped);
        w.check(Checkpoint::OnStop, &mut report);
        assert_eq!(report.len(), 1);
        assert_eq!(report.leaks[0].interface, "LocationManager");
        w.set_state(ActivityState::Destroyed);
        w.check(Checkpoint::OnDestroy, &mut report);
        w.check(Checkpoint::EndOfRun, &mut report);
        assert_eq!(report.len(), 2);
        assert_eq!(report.leaks[1].checkpoint, Checkpoint::OnDestroy);
    }

    #[test]
    fn unknown_method_rejected() {
        let mut w = world();
        let cam = w.allocate("Camera");
        assert!(call(&mut w, "Camera", "startRecording", cam).is_err());
    }
}
