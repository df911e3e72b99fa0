//! Activity lifecycle graph.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ActivityState {
    Created,
    Started,
    Resumed,
    Paused,
    Stopped,
    Destroyed,
}

impl fmt::Display for ActivityState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LifecycleCommand {
    Launch,
    Background,
    Foreground,
    Destroy,
    Rotate,
}

impl fmt::Display for LifecycleCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LifecycleCommand::Launch => "launch",
            LifecycleCommand::Background => "background",
            LifecycleCommand::Foreground => "foreground",
            LifecycleCommand::Destroy => "destroy",
            LifecycleCommand::Rotate => "rotate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot {command} an activity that is {}", state.map_or("not running".to_owned(), |s| s.to_string()))]
pub struct LifecycleError {
    pub command: LifecycleCommand,
    pub state: Option<ActivityState>,
}

/// One callback and the state the activity is in once it has run.
pub type CallbackStep = (&'static str, ActivityState);

const LAUNCH: [CallbackStep; 3] = [
    ("onCreate", ActivityState::Created),
    ("onStart", ActivityState::Started),
    ("onResume", ActivityState::Resumed),
];

/// The callbacks `command` produces for an activity in `state` (`None` when
/// no activity is running).
///
/// `Rotate` yields the destroy sequence followed by the launch sequence; the
/// caller starts a new activity at the second `onCreate`. Launching over a
/// destroyed activity starts a new one as well.
pub fn lifecycle_transition(
    state: Option<ActivityState>,
    command: LifecycleCommand,
) -> Result<Vec<CallbackStep>, LifecycleError> {
    use ActivityState::*;
    use LifecycleCommand::*;
    let pause = ("onPause", Paused);
    let stop = ("onStop", Stopped);
    let destroy = ("onDestroy", Destroyed);
    let steps = match (command, state) {
        (Launch, None | Some(Destroyed)) => LAUNCH.to_vec(),
        (Background, Some(Resumed)) => vec![pause, stop],
        (Background, Some(Paused)) => vec![stop],
        (Foreground, Some(Stopped)) => vec![("onRestart", Stopped), ("onStart", Started), ("onResume", Resumed)],
        (Foreground, Some(Paused)) => vec![("onResume", Resumed)],
        (Destroy, Some(Resumed)) => vec![pause, stop, destroy],
        (Destroy, Some(Paused)) => vec![stop, destroy],
        (Destroy, Some(Stopped)) => vec![destroy],
        (Rotate, Some(Resumed)) => {
            let mut v = vec![pause, stop, destroy];
            v.extend(LAUNCH);
            v
        }
        _ => return Err(LifecycleError { command, state }),
    };
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActivityState::*;
    use LifecycleCommand::*;

    fn names(s: Option<ActivityState>, c: LifecycleCommand) -> Vec<&'static str> {
        lifecycle_transition(s, c).unwrap().into_iter().map(|(n, _)| n).collect()
    }

    fn end(s: Option<ActivityState>, c: LifecycleCommand) -> ActivityState {
        lifecycle_transition(s, c).unwrap().last().unwrap().1
    }

    #[test]
    fn background_from_resumed() {
        assert_eq!(names(Some(Resumed), Background), ["onPause", "onStop"]);
        assert_eq!(end(Some(Resumed), Background), Stopped);
    }

    #[test]
    fn foreground_from_stopped() {
        assert_eq!(names(Some(Stopped), Foreground), ["onRestart", "onStart", "onResume"]);
        assert_eq!(end(Some(Stopped), Foreground), Resumed);
    }

    #[test]
    fn destroy_from_resumed() {
        assert_eq!(names(Some(Resumed), Destroy), ["onPause", "onStop", "onDestroy"]);
        assert_eq!(end(Some(Resumed), Destroy), Destroyed);
    }

    #[test]
    fn launch_and_rotate() {
        assert_eq!(names(None, Launch), ["onCreate", "onStart", "onResume"]);
        assert_eq!(names(Some(Resumed), Rotate).len(), 6);
        assert_eq!(end(Some(Resumed), Rotate), Resumed);
    }

    #[test]
    fn illegal_commands() {
        for (s, c) in [
            (Some(Destroyed), Foreground),
            (None, Background),
            (Some(Resumed), Launch),
            (Some(Stopped), Rotate),
            (Some(Destroyed), Destroy),
        ] {
            assert!(lifecycle_transition(s, c).is_err(), "{c} from {s:?}");
        }
    }
}
