//! Scripted faulty apps. Each app is a set of buttons; a button issues a
//! fixed sequence of API actions against the app's handles.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::symbol::{ActionSymbol, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum App {
    BlueChat,
    FooCam,
    GetBackGps,
    HearHere,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown app `{0}` (expected BlueChat, fooCam, GetBack GPS or HearHere)")]
pub struct UnknownApp(pub String);

impl FromStr for App {
    type Err = UnknownApp;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "BlueChat" => Ok(App::BlueChat),
            "fooCam" => Ok(App::FooCam),
            "GetBack GPS" | "GetBack-GPS" => Ok(App::GetBackGps),
            "HearHere" => Ok(App::HearHere),
            _ => Err(UnknownApp(s.to_owned())),
        }
    }
}

impl fmt::Display for App {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            App::BlueChat => "BlueChat",
            App::FooCam => "fooCam",
            App::GetBackGps => "GetBack GPS",
            App::HearHere => "HearHere",
        })
    }
}

/// HearHere's recorder configuration: source, sample rate, channel config,
/// encoding, buffer size.
pub fn recorder_args() -> Vec<Value> {
    [1, 44100, 16, 2, 4096].into_iter().map(Value::Int).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppAction {
    pub symbol: ActionSymbol,
    pub args: Vec<Value>,
}

impl AppAction {
    fn call(iface: &str, method: &str) -> Self {
        Self {
            symbol: ActionSymbol::call(iface, method),
            args: Vec::new(),
        }
    }
}

impl App {
    pub fn buttons(self) -> &'static [&'static str] {
        match self {
            App::BlueChat => &["CONNECT", "DISCONNECT"],
            App::FooCam => &["SHOOT", "PREVIEW", "CLOSE"],
            App::GetBackGps => &["NAVIGATE", "STOP_NAVIGATION", "COMPASS", "STOP_COMPASS", "WATCH", "UNWATCH", "RESET"],
            App::HearHere => &["START", "STOP"],
        }
    }

    /// The actions a button press performs, or `None` for an unknown button.
    pub fn press(self, button: &str) -> Option<Vec<AppAction>> {
        let c = AppAction::call;
        let actions = match (self, button) {
            (App::BlueChat, "CONNECT") => vec![c("BluetoothAdapter", "enable")],
            (App::BlueChat, "DISCONNECT") => vec![c("BluetoothAdapter", "disable")],
            (App::FooCam, "SHOOT") => vec![c("Camera", "open"), c("Camera", "release")],
            (App::FooCam, "PREVIEW") => vec![c("Camera", "open"), c("Camera", "startPreview")],
            (App::FooCam, "CLOSE") => vec![c("Camera", "stopPreview"), c("Camera", "release")],
            (App::GetBackGps, "NAVIGATE") => vec![c("LocationManager", "requestLocationUpdates")],
            (App::GetBackGps, "STOP_NAVIGATION") => vec![c("LocationManager", "removeUpdates")],
            (App::GetBackGps, "COMPASS") => vec![c("SensorManager", "registerListener")],
            (App::GetBackGps, "STOP_COMPASS") => vec![c("SensorManager", "unregisterListener")],
            (App::GetBackGps, "WATCH") => vec![c("RemoteCallbackList", "register")],
            (App::GetBackGps, "UNWATCH") => vec![c("RemoteCallbackList", "unregister")],
            (App::GetBackGps, "RESET") => vec![c("RemoteCallbackList", "kill")],
            (App::HearHere, "START") => vec![
                AppAction {
                    symbol: ActionSymbol::constructor("AudioRecord"),
                    args: recorder_args(),
                },
                c("AudioRecord", "startRecording"),
            ],
            (App::HearHere, "STOP") => vec![c("AudioRecord", "stop"), c("AudioRecord", "release")],
            _ => return None,
        };
        Some(actions)
    }
}
