//! Seeded generators shared by the property and acceptance suites.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use proactive_core::automaton::{ArgSource, Cursor, EditAutomaton, Guard, OutputItem, StateId, Transition};
use proactive_core::{load_pack, ActionKind, ActionSymbol, Event, InstanceId, PolicyDoc, PolicyPack, Trace, Value};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn pack() -> PolicyPack {
    load_pack(&root().join("pack")).expect("bundled pack loads")
}

/// Symbols no bundled policy observes.
pub fn foreign_symbols() -> Vec<ActionSymbol> {
    vec![
        ActionSymbol::call("AudioRecord", "read"),
        ActionSymbol::call("Handler", "post"),
        ActionSymbol::callback("onSaveInstanceState"),
        ActionSymbol::constructor("Handler"),
    ]
}

/// A stable per-interface receiver so instance binding is exercised.
pub fn receiver(interface: &str) -> InstanceId {
    InstanceId(1000 + interface.bytes().map(u64::from).sum::<u64>())
}

pub fn event<R: Rng>(rng: &mut R, symbol: ActionSymbol, seq: u64) -> Event {
    let e = Event::app(symbol.clone(), seq);
    match symbol.kind() {
        ActionKind::Callback => e,
        ActionKind::ApiCall => e.with_instance(receiver(symbol.interface())),
        ActionKind::Constructor => {
            let n = rng.gen_range(0..4);
            e.with_args((0..n).map(|_| Value::Int(rng.gen_range(-5..50_000))).collect())
        }
    }
}

pub fn random_trace<R: Rng>(rng: &mut R, alphabet: &[ActionSymbol], max_len: usize) -> Trace {
    let len = rng.gen_range(0..=max_len);
    (0..len)
        .map(|i| {
            let s = alphabet.choose(rng).expect("non-empty alphabet").clone();
            event(rng, s, i as u64)
        })
        .collect()
}

/// The vocabulary plus foreign symbols, in a fixed order.
pub fn mixed_alphabet(a: &EditAutomaton) -> Vec<ActionSymbol> {
    let mut v: Vec<ActionSymbol> = a.vocabulary().iter().cloned().collect();
    v.extend(foreign_symbols().into_iter().filter(|s| !a.observes(s)));
    v
}

/// A walk that only takes identity transitions, with foreign events mixed in.
pub fn compliant_trace<R: Rng>(rng: &mut R, a: &EditAutomaton, max_len: usize) -> Trace {
    let len = rng.gen_range(0..=max_len);
    let foreign: Vec<ActionSymbol> = foreign_symbols().into_iter().filter(|s| !a.observes(s)).collect();
    let mut cursor = Cursor::new(a);
    let mut events = Vec::new();
    for i in 0..len {
        let seq = i as u64;
        if rng.gen_bool(0.2) {
            let s = foreign.choose(rng).unwrap().clone();
            events.push(event(rng, s, seq));
            continue;
        }
        let state = cursor.state();
        let options: Vec<&ActionSymbol> = a
            .vocabulary()
            .iter()
            .filter(|s| {
                a.transitions()
                    .iter()
                    .any(|t| t.from == state && t.guard.accepts(s) && t.is_identity())
            })
            .collect();
        let Some(s) = options.choose(rng) else { break };
        let e = event(rng, (*s).clone(), seq);
        cursor.feed(&e).expect("complete automaton");
        events.push(e);
    }
    Trace::new(events)
}

const METHODS: [&str; 6] = ["open", "close", "start", "stop", "release", "acquire"];
const CALLBACKS: [&str; 5] = ["onPause", "onStop", "onDestroy", "onRestart", "onResume"];
const TARGETS: [&str; 3] = ["Res", "AudioRecord", "Camera"];

fn random_literal<R: Rng>(rng: &mut R) -> Value {
    match rng.gen_range(0..3) {
        0 => Value::Int(rng.gen_range(-1_000_000..1_000_000)),
        1 => Value::Bool(rng.gen()),
        _ => Value::Str(random_text(rng, 8)),
    }
}

fn random_text<R: Rng>(rng: &mut R, max: usize) -> String {
    const CHARS: &[char] = &['a', 'Z', '0', ' ', '"', '\\', '\n', '\t', '#', '{', ')', ',', 'é', '.'];
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| *CHARS.choose(rng).unwrap()).collect()
}

/// A random valid (deterministic, complete) policy.
pub fn random_policy<R: Rng>(rng: &mut R, name: &str) -> PolicyDoc {
    let target = *TARGETS.choose(rng).unwrap();
    let mut symbols: BTreeSet<ActionSymbol> = BTreeSet::new();
    let k = rng.gen_range(1..=3);
    for m in METHODS.choose_multiple(rng, k) {
        symbols.insert(ActionSymbol::call(target, m));
    }
    if rng.gen_bool(0.4) {
        symbols.insert(ActionSymbol::constructor(target));
    }
    let k = rng.gen_range(0..=2);
    for c in CALLBACKS.choose_multiple(rng, k) {
        symbols.insert(ActionSymbol::callback(c));
    }
    let all: Vec<ActionSymbol> = symbols.iter().cloned().collect();
    let insertable: Vec<ActionSymbol> = all.iter().filter(|s| s.kind() != ActionKind::Callback).cloned().collect();

    let mut ids: Vec<u32> = (0..12).collect();
    ids.shuffle(rng);
    let states: Vec<u32> = ids[..rng.gen_range(1..=4)].to_vec();
    let initial = *states.choose(rng).unwrap();

    let mut transitions = Vec::new();
    for &from in &states {
        let mut shuffled = all.clone();
        shuffled.shuffle(rng);
        let blocks = rng.gen_range(1..=shuffled.len().min(3));
        let mut cuts: Vec<usize> = (1..shuffled.len()).collect::<Vec<_>>();
        cuts.shuffle(rng);
        let mut cuts: Vec<usize> = cuts[..blocks - 1].to_vec();
        cuts.sort_unstable();
        cuts.insert(0, 0);
        cuts.push(shuffled.len());
        for b in 0..blocks {
            let block: BTreeSet<ActionSymbol> = shuffled[cuts[b]..cuts[b + 1]].iter().cloned().collect();
            let guard = if blocks == 1 && rng.gen_bool(0.5) {
                Guard::Any
            } else if b == blocks - 1 && blocks > 1 && rng.gen_bool(0.5) {
                Guard::AnyExcept(symbols.difference(&block).cloned().collect())
            } else if block.len() == 1 && rng.gen_bool(0.5) {
                Guard::Exactly(block.into_iter().next().unwrap())
            } else {
                Guard::AnyOf(block)
            };
            let mut output = Vec::new();
            for _ in 0..rng.gen_range(0..=2) {
                if insertable.is_empty() {
                    break;
                }
                let s = insertable.choose(rng).unwrap().clone();
                let args = match rng.gen_range(0..3) {
                    0 => ArgSource::None,
                    1 => ArgSource::Cached,
                    _ => ArgSource::Literals((0..rng.gen_range(1..=3)).map(|_| random_literal(rng)).collect()),
                };
                output.push(OutputItem::Synthesize { symbol: s, args });
            }
            if rng.gen_bool(0.7) {
                let at = rng.gen_range(0..=output.len());
                output.insert(at, OutputItem::Forward);
            }
            transitions.push(Transition::new(from, guard, output, *states.choose(rng).unwrap()));
        }
    }
    let mut automaton = EditAutomaton::new(states.iter().copied(), initial, transitions);
    let unmentioned: Vec<ActionSymbol> = all.iter().filter(|s| !automaton.observes(s)).cloned().collect();
    if !unmentioned.is_empty() || rng.gen_bool(0.2) {
        automaton = automaton.with_alphabet(unmentioned);
    }
    let report = automaton.validate();
    assert!(report.is_ok(), "generator produced an invalid automaton: {report:?}");
    PolicyDoc {
        name: name.to_owned(),
        statement: random_text(rng, 24),
        target_interface: target.to_owned(),
        automaton,
        version: rng.gen_range(0..5),
    }
}

/// Outputs of a resumed run over `events`, continuing from `cursor`.
pub fn feed_all(cursor: &mut Cursor<'_>, events: &[Event]) -> Vec<Event> {
    let mut out = Vec::new();
    for e in events {
        out.extend(cursor.feed(e).expect("complete automaton"));
    }
    out
}

/// Equality of streams ignoring sequence ordinals.
pub fn same_stream(a: &[Event], b: &[Event]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_action(y))
}

pub fn state(n: u32) -> StateId {
    StateId(n)
}
