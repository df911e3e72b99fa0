use std::path::PathBuf;

use proactive_core::sim::ScenarioScript;
use proactive_core::{
    load_pack, run_scenario, serialize, ActionSymbol, Checkpoint, Expectation, Outcome, PackError, PolicyEnforcer,
    PolicyPack,
};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn pack() -> PolicyPack {
    load_pack(&root().join("pack")).unwrap()
}

fn script(name: &str) -> ScenarioScript {
    ScenarioScript::load(&root().join("scenarios").join(format!("{name}.scn"))).unwrap()
}

const SCENARIOS: [(&str, &str); 7] = [
    ("BlueChat", "BluetoothAdapter"),
    ("fooCam-open", "Camera"),
    ("fooCam-preview", "Camera"),
    ("GetBack-GPS-Location", "LocationManager"),
    ("GetBack-GPS-Sensor", "SensorManager"),
    ("GetBack-GPS-RemoteCallbackList", "RemoteCallbackList"),
    ("HearHere", "AudioRecord"),
];

#[test]
fn bundled_pack_loads_clean() {
    let p = pack();
    assert_eq!(p.len(), 7);
    assert!(p.interference().is_empty());
    assert_eq!(p.expectations.len(), 7);
}

#[test]
fn statements_are_the_table_rows() {
    let p = pack();
    let expect = [
        ("bluetooth-enable", "If enable() is invoked, invoke disable() when onDestroy()"),
        ("camera-open", "If open() is invoked, invoke release() when onPause()"),
        ("camera-preview", "If startPreview() is invoked, invoke stopPreview() when onDestroy()"),
        ("location-updates", "If requestLocationUpdates() is invoked, invoke removeUpdates() when onPause()"),
        ("sensor-listener", "If registerListener() is invoked, invoke unregisterListener() when onPause()"),
        ("remote-callback-list", "If register() is invoked, invoke unregister() when onDestroy()"),
        ("audio-record", "If new AudioRecord() is invoked, invoke release() when onStop()"),
    ];
    for (name, statement) in expect {
        assert_eq!(p.get(name).unwrap().statement, statement);
    }
}

#[test]
fn bundled_files_are_in_canonical_form() {
    for doc in pack().policies.values() {
        let path = root().join("pack").join(format!("{}.pol", doc.name));
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(proactive_core::dsl::strip_comments(&text), serialize(doc), "{}", doc.name);
    }
}

#[test]
fn scenarios_match_manifest_with_enforcement() {
    let p = pack();
    for (name, _) in SCENARIOS {
        let s = script(name);
        let run = run_scenario(&s, Some(p.enforcer::<&str>(&[]).unwrap())).unwrap();
        let outcome = Outcome::of(&run);
        let expected = p.expectations[name];
        assert_eq!(s.expected, Some(expected), "{name}");
        assert!(outcome.matches(expected), "{name}: {outcome} vs {expected}");
        assert!(run.failures.is_empty());
    }
}

#[test]
fn scenarios_without_enforcement_leak_exactly_once() {
    let p = pack();
    for (name, iface) in SCENARIOS {
        let run = run_scenario(&script(name), None).unwrap();
        assert!(run.interventions.is_empty());
        match p.expectations[name] {
            Expectation::Healed => {
                assert_eq!(run.leaks.len(), 1, "{name}: {:?}", run.leaks);
                assert_eq!(run.leaks.leaks[0].interface, iface);
            }
            Expectation::NoViolation => assert!(run.leaks.is_empty(), "{name}"),
        }
        assert_eq!(Outcome::of(&run) == Outcome::Leaked, p.expectations[name] == Expectation::Healed);
    }
}

#[test]
fn hearhere_heals_with_one_intervention() {
    let run = run_scenario(&script("HearHere"), Some(pack().enforcer::<&str>(&[]).unwrap())).unwrap();
    assert_eq!(run.interventions.len(), 1);
    assert_eq!(run.interventions[0].policy, "audio-record");
    let unhealed = run_scenario(&script("HearHere"), None).unwrap();
    assert_eq!(unhealed.leaks.leaks[0].checkpoint, Checkpoint::OnStop);
}

#[test]
fn disabling_the_healing_policy_brings_the_leak_back() {
    let run = run_scenario(&script("HearHere"), Some(pack().enforcer(&["audio-record"]).unwrap())).unwrap();
    assert_eq!(Outcome::of(&run), Outcome::Leaked);
    assert!(matches!(pack().enforcer(&["nope"]), Err(PackError::UnknownPolicy(_))));
}

#[test]
fn foocam_open_touches_nothing() {
    let run = run_scenario(&script("fooCam-open"), Some(pack().enforcer::<&str>(&[]).unwrap())).unwrap();
    assert!(run.interventions.is_empty());
    assert!(run.leaks.is_empty());
    assert_eq!(run.trace.symbols(), run.app_trace.symbols());
}

#[test]
fn recorder_is_rebuilt_on_restart() {
    let s = ScenarioScript::parse("scenario r\napp HearHere\nlaunch\ntap START\nbackground\nforeground\ntap STOP\ndestroy\n").unwrap();
    let run = run_scenario(&s, Some(pack().enforcer::<&str>(&[]).unwrap())).unwrap();
    assert!(run.leaks.is_empty(), "{:?}", run.leaks);
    assert_eq!(run.interventions.len(), 2);
    let rebuilt = &run.interventions[1].synthesized;
    assert_eq!(rebuilt[0].symbol, ActionSymbol::constructor("AudioRecord"));
    assert_eq!(rebuilt[0].args, proactive_core::sim::app::recorder_args());
    let new_id = rebuilt[0].instance.unwrap();
    assert_eq!(rebuilt[1].instance, Some(new_id));
    // the app still addresses its original recorder; STOP lands on the new one
    let app_stop = run.app_trace.iter().find(|e| e.symbol == ActionSymbol::call("AudioRecord", "stop")).unwrap();
    let executed_stop = run
        .trace
        .iter()
        .rfind(|e| e.symbol == ActionSymbol::call("AudioRecord", "stop"))
        .unwrap();
    assert_ne!(app_stop.instance, Some(new_id));
    assert_eq!(executed_stop.instance, Some(new_id));
    assert!(!executed_stop.is_synthesized());
}

#[test]
fn remote_callback_list_kill_needs_no_unregister() {
    let p = pack();
    let doc = p.get("remote-callback-list").unwrap();
    assert!(doc.automaton.observes(&ActionSymbol::call("RemoteCallbackList", "kill")));
    let mut e = PolicyEnforcer::with_policies([doc.clone()]).unwrap();
    let t = proactive_core::Trace::from_symbols([
        ActionSymbol::call("RemoteCallbackList", "register"),
        ActionSymbol::call("RemoteCallbackList", "kill"),
        ActionSymbol::callback("onDestroy"),
    ]);
    let (out, log) = e.enforce_trace(&t).unwrap();
    assert!(log.is_empty());
    assert_eq!(out, t);
}

#[test]
fn experimental_policy_suppresses_second_recording() {
    let doc = proactive_core::load_policy_file(&root().join("pack/experimental/mic-double-acquire.pol")).unwrap();
    let s = ScenarioScript::parse("scenario twice\napp HearHere\nlaunch\ntap START\ntap START\n").unwrap();
    assert!(run_scenario(&s, None).is_err());
    let run = run_scenario(&s, Some(PolicyEnforcer::with_policies([doc.clone()]).unwrap())).unwrap();
    assert_eq!(run.interventions.len(), 1);
    assert!(run.interventions[0].suppressed);
    // it cannot sit next to the audio-record policy
    let mut full = pack();
    full.policies.insert(doc.name.clone(), doc);
    let report = full.interference();
    assert!(report.policies().contains("audio-record"));
    assert!(report.policies().contains("mic-double-acquire"));
}

#[test]
fn pack_directory_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_pack(dir.path()).unwrap().is_empty());
    std::fs::write(dir.path().join("bad.pol"), "policy x\nstates 0\non nonsense\n").unwrap();
    std::fs::write(dir.path().join("worse.pol"), "policy y\n\"unterminated\n").unwrap();
    match load_pack(dir.path()) {
        Err(PackError::Invalid(problems)) => {
            assert!(problems.iter().any(|p| p.path.ends_with("bad.pol")));
            assert!(problems.iter().any(|p| p.path.ends_with("worse.pol")));
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(load_pack(&dir.path().join("missing")), Err(PackError::Io { .. })));
}

#[test]
fn conflicting_fixture_is_rejected_at_deploy() {
    let conflict = proactive_core::load_policy_file(&root().join("fixtures/conflicting-camera.pol")).unwrap();
    let mut e = pack().enforcer::<&str>(&[]).unwrap();
    let err = e.deploy(conflict).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("call:Camera.release"), "{msg}");
    assert!(msg.contains("camera-open"), "{msg}");
}
