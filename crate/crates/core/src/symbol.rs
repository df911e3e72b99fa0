//! Event alphabet: action symbols, argument values, events and traces.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Interface that owns every lifecycle callback.
pub const CALLBACK_INTERFACE: &str = "Activity";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Callback,
    ApiCall,
    Constructor,
}

/// A symbol of the automaton alphabet.
///
/// Equality is structural on `(kind, interface, method)`. Argument values and
/// instance identity never take part in matching. Symbols are ordered by their
/// textual token form (`call:AudioRecord.stop`, `callback:onStop`,
/// `new:AudioRecord`) so that sorted sets render in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSymbol {
    kind: ActionKind,
    interface: String,
    method: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymbolError {
    #[error("`{0}` is not a valid identifier")]
    BadIdentifier(String),
    #[error("`{0}` is not a symbol (expected call:<Iface>.<method>, callback:<method> or new:<Iface>)")]
    BadToken(String),
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

fn checked(s: &str) -> Result<String, SymbolError> {
    if is_identifier(s) {
        Ok(s.to_owned())
    } else {
        Err(SymbolError::BadIdentifier(s.to_owned()))
    }
}

impl ActionSymbol {
    pub fn call(interface: &str, method: &str) -> Self {
        Self::try_call(interface, method).expect("valid identifiers")
    }

    pub fn callback(method: &str) -> Self {
        Self::try_callback(method).expect("valid identifier")
    }

    /// Constructor symbols use the interface name as the method name.
    pub fn constructor(interface: &str) -> Self {
        Self::try_constructor(interface).expect("valid identifier")
    }

    pub fn try_call(interface: &str, method: &str) -> Result<Self, SymbolError> {
        Ok(Self {
            kind: ActionKind::ApiCall,
            interface: checked(interface)?,
            method: checked(method)?,
        })
    }

    pub fn try_callback(method: &str) -> Result<Self, SymbolError> {
        Ok(Self {
            kind: ActionKind::Callback,
            interface: CALLBACK_INTERFACE.to_owned(),
            method: checked(method)?,
        })
    }

    pub fn try_constructor(interface: &str) -> Result<Self, SymbolError> {
        let interface = checked(interface)?;
        Ok(Self {
            kind: ActionKind::Constructor,
            method: interface.clone(),
            interface,
        })
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }

    pub fn interface(&self) -> &str {
        &self.interface
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    fn segments(&self) -> [&str; 4] {
        match self.kind {
            ActionKind::ApiCall => ["call:", &self.interface, ".", &self.method],
            ActionKind::Callback => ["callback:", &self.method, "", ""],
            ActionKind::Constructor => ["new:", &self.interface, "", ""],
        }
    }
}

impl Ord for ActionSymbol {
    fn cmp(&self, other: &Self) -> Ordering {
        let a = self.segments();
        let b = other.segments();
        a.iter()
            .flat_map(|s| s.bytes())
            .cmp(b.iter().flat_map(|s| s.bytes()))
    }
}

impl PartialOrd for ActionSymbol {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ActionSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.segments() {
            f.write_str(s)?;
        }
        Ok(())
    }
}

impl FromStr for ActionSymbol {
    type Err = SymbolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SymbolError::BadToken(s.to_owned());
        let (prefix, rest) = s.split_once(':').ok_or_else(bad)?;
        match prefix {
            "call" => {
                let (iface, method) = rest.split_once('.').ok_or_else(bad)?;
                Self::try_call(iface, method)
            }
            "callback" => Self::try_callback(rest),
            "new" => Self::try_constructor(rest),
            _ => Err(bad()),
        }
    }
}

/// Opaque scalar argument value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => write_quoted(f, s),
        }
    }
}

pub(crate) fn write_quoted(f: &mut impl fmt::Write, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u64);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    App,
    Synthesized,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub symbol: ActionSymbol,
    pub instance: Option<InstanceId>,
    pub args: Vec<Value>,
    pub origin: Origin,
    pub seq: u64,
}

impl Event {
    /// An app-originated event with no instance and no arguments.
    pub fn app(symbol: ActionSymbol, seq: u64) -> Self {
        Self {
            symbol,
            instance: None,
            args: Vec::new(),
            origin: Origin::App,
            seq,
        }
    }

    pub fn with_instance(mut self, instance: InstanceId) -> Self {
        self.instance = Some(instance);
        self
    }

    pub fn with_args(mut self, args: Vec<Value>) -> Self {
        self.args = args;
        self
    }

    pub fn is_synthesized(&self) -> bool {
        self.origin == Origin::Synthesized
    }

    /// Compares everything except the sequence ordinal.
    pub fn same_action(&self, other: &Event) -> bool {
        self.symbol == other.symbol
            && self.instance == other.instance
            && self.args == other.args
            && self.origin == other.origin
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_synthesized() {
            f.write_str("+")?;
        }
        write!(f, "{}", self.symbol)?;
        if let Some(i) = self.instance {
            write!(f, "{i}")?;
        }
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (n, a) in self.args.iter().enumerate() {
                if n > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// An ordered event stream. May be empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace {
    pub events: Vec<Event>,
}

impl Trace {
    pub fn new(events: Vec<Event>) -> Self {
        Self { events }
    }

    /// Builds an app trace with seq ordinals `0..n`.
    pub fn from_symbols<I>(symbols: I) -> Self
    where
        I: IntoIterator<Item = ActionSymbol>,
    {
        symbols
            .into_iter()
            .enumerate()
            .map(|(i, s)| Event::app(s, i as u64))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    pub fn symbols(&self) -> Vec<ActionSymbol> {
        self.events.iter().map(|e| e.symbol.clone()).collect()
    }

    /// Assigns fresh ordinals `0..n` in stream order.
    pub fn renumber(&mut self) {
        for (i, e) in self.events.iter_mut().enumerate() {
            e.seq = i as u64;
        }
    }

    pub fn is_strictly_ordered(&self) -> bool {
        self.events.windows(2).all(|w| w[0].seq < w[1].seq)
    }
}

impl FromIterator<Event> for Trace {
    fn from_iter<T: IntoIterator<Item = Event>>(iter: T) -> Self {
        Self {
            events: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Trace {
    type Item = &'a Event;
    type IntoIter = std::slice::Iter<'a, Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, e) in self.events.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn constructor_uses_interface_as_method() {
        let s = ActionSymbol::constructor("AudioRecord");
        assert_eq!(s.method(), "AudioRecord");
        assert_eq!(s.to_string(), "new:AudioRecord");
    }

    #[test]
    fn callbacks_live_in_activity() {
        assert_eq!(ActionSymbol::callback("onStop").interface(), "Activity");
    }

    #[test]
    fn token_round_trip() {
        for tok in ["call:AudioRecord.stop", "callback:onStop", "new:Camera"] {
            let s: ActionSymbol = tok.parse().unwrap();
            assert_eq!(s.to_string(), tok);
        }
        assert!("call:AudioRecord".parse::<ActionSymbol>().is_err());
        assert!("stop".parse::<ActionSymbol>().is_err());
        assert!("callback:9x".parse::<ActionSymbol>().is_err());
    }

    #[test]
    fn ordering_matches_rendered_text() {
        let syms = [
            ActionSymbol::call("A_b", "x"),
            ActionSymbol::call("A", "x"),
            ActionSymbol::callback("onStop"),
            ActionSymbol::constructor("Camera"),
            ActionSymbol::call("Camera", "release"),
        ];
        let set: BTreeSet<_> = syms.iter().cloned().collect();
        let rendered: Vec<String> = set.iter().map(|s| s.to_string()).collect();
        let mut sorted = rendered.clone();
        sorted.sort();
        assert_eq!(rendered, sorted);
    }

    #[test]
    fn equality_ignores_arguments() {
        let a = Event::app(ActionSymbol::constructor("AudioRecord"), 0).with_args(vec![Value::Int(1)]);
        let b = Event::app(ActionSymbol::constructor("AudioRecord"), 1);
        assert_eq!(a.symbol, b.symbol);
        assert!(!a.same_action(&b));
    }
}
