//! Line-oriented policy files (`.pol`).
//!
//! ```text
//! # comment
//! policy audio-record
//! version 1
//! statement "If new AudioRecord() is invoked, invoke release() when onStop()"
//! target AudioRecord
//! states 0 1 2
//! initial 0
//! alphabet callback:onRestart
//! on new AudioRecord from 0 to 1 emit input
//! on callback onStop from 2 to 0 emit insert call AudioRecord.stop, insert call AudioRecord.release, input
//! on any-except {call:AudioRecord.stop} from 2 to 2 emit input
//! ```
//!
//! Guards: `call <Iface>.<method>`, `callback <method>`, `new <Iface>`, `any`,
//! `any-of {<symbol>...}`, `any-except {<symbol>...}`. Symbols inside sets
//! and on the `alphabet` line use the token form `call:<Iface>.<method>`,
//! `callback:<method>` or `new:<Iface>`.
//!
//! Output items: `input`, `insert call <Iface>.<method> [args cached|none|(<literal>...)]`,
//! `insert new <Iface> args cached|none|(<literal>...)`. A template that is
//! the single word `nothing` suppresses the input without inserting anything.
//!
//! [`serialize`] produces the canonical form: no comments or blank lines, LF
//! endings, single spaces between tokens, states sorted by id, transitions
//! sorted by source state and guard text, set elements sorted.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::automaton::{ArgSource, EditAutomaton, Guard, OutputItem, Transition, ValidationDiagnostic};
use crate::symbol::{is_identifier, write_quoted, ActionKind, ActionSymbol, Value};

/// A named, parsed policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyDoc {
    pub name: String,
    /// The natural-language correctness policy.
    pub statement: String,
    pub target_interface: String,
    pub automaton: EditAutomaton,
    pub version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Lexical,
    Syntax,
    Semantic,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagnosticKind::Lexical => "lexical error",
            DiagnosticKind::Syntax => "syntax error",
            DiagnosticKind::Semantic => "semantic error",
        })
    }
}

/// A positioned parse diagnostic. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: Option<String>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.column, self.kind, self.message)?;
        if let Some(e) = &self.expected {
            write!(f, " (expected {e})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", render(.0))]
pub struct Diagnostics(pub Vec<Diagnostic>);

fn render(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

impl Diagnostics {
    pub fn iter(&self) -> std::slice::Iter<'_, Diagnostic> {
        self.0.iter()
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Int(i64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Str(_) => f.write_str("string literal"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    col: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '$')
}

/// Tokenizes one line. Comments run from an unquoted `#` to end of line.
fn lex_line(line: &str, lineno: usize) -> Result<Vec<Spanned>, Diagnostic> {
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    let err = |col: usize, message: String, expected: Option<&str>| Diagnostic {
        kind: DiagnosticKind::Lexical,
        line: lineno,
        column: col,
        message,
        expected: expected.map(str::to_owned),
    };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            '#' => break,
            c if c.is_whitespace() => i += 1,
            '{' | '}' | '(' | ')' | ',' => {
                toks.push(Spanned {
                    tok: match c {
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        _ => Tok::Comma,
                    },
                    col,
                });
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err(col, "unterminated string literal".into(), Some("`\"`"))),
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            let esc = match chars.get(i + 1) {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                Some('t') => '\t',
                                Some(other) => {
                                    return Err(err(i + 1, format!("unknown escape `\\{other}`"), Some("one of \\\" \\\\ \\n \\t")))
                                }
                                None => return Err(err(col, "unterminated string literal".into(), Some("`\"`"))),
                            };
                            s.push(esc);
                            i += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                toks.push(Spanned { tok: Tok::Str(s), col });
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && is_word_char(chars[i]) {
                    return Err(err(col, "malformed number".into(), Some("an integer")));
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse::<i64>()
                    .map_err(|_| err(col, format!("integer `{text}` out of range"), None))?;
                toks.push(Spanned { tok: Tok::Int(v), col });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && is_word_char(chars[i]) {
                    i += 1;
                }
                toks.push(Spanned {
                    tok: Tok::Word(chars[start..i].iter().collect()),
                    col,
                });
            }
            other => return Err(err(col, format!("unexpected character `{other}`"), None)),
        }
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser

/// Parses a parenthesized literal list such as `(1, "a", true)` that makes
/// up the whole of `text`. Columns in diagnostics are offset by `col0`.
pub(crate) fn parse_literals(text: &str, lineno: usize, col0: usize) -> Result<Vec<Value>, Diagnostic> {
    let mut toks = lex_line(text, lineno)?;
    for t in &mut toks {
        t.col += col0;
    }
    let mut line = Line {
        toks: &toks,
        pos: 0,
        lineno,
        end_col: col0 + text.chars().count() + 1,
    };
    let vals = line.literal_list()?;
    line.end()?;
    Ok(vals)
}


struct Line<'t> {
    toks: &'t [Spanned],
    pos: usize,
    lineno: usize,
    end_col: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl<'t> Line<'t> {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn syntax(&self, col: usize, message: impl Into<String>, expected: &str) -> Diagnostic {
        Diagnostic {
            kind: DiagnosticKind::Syntax,
            line: self.lineno,
            column: col,
            message: message.into(),
            expected: Some(expected.to_owned()),
        }
    }

    fn semantic(&self, col: usize, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            kind: DiagnosticKind::Semantic,
            line: self.lineno,
            column: col,
            message: message.into(),
            expected: None,
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self, expected: &str) -> PResult<(Tok, usize)> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok((t.tok.clone(), t.col))
            }
            None => Err(self.syntax(self.end_col, "unexpected end of line", expected)),
        }
    }

    fn word(&mut self, expected: &str) -> PResult<(String, usize)> {
        match self.next(expected)? {
            (Tok::Word(w), col) => Ok((w, col)),
            (other, col) => Err(self.syntax(col, format!("unexpected {other}"), expected)),
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        let expected = format!("`{kw}`");
        let (w, col) = self.word(&expected)?;
        if w == kw {
            Ok(())
        } else {
            Err(self.syntax(col, format!("unexpected `{w}`"), &expected))
        }
    }

    fn punct(&mut self, want: Tok) -> PResult<()> {
        let expected = want.to_string();
        let (t, col) = self.next(&expected)?;
        if t == want {
            Ok(())
        } else {
            Err(self.syntax(col, format!("unexpected {t}"), &expected))
        }
    }

    fn state(&mut self) -> PResult<(u32, usize)> {
        match self.next("a state id")? {
            (Tok::Int(i), col) => u32::try_from(i)
                .map(|s| (s, col))
                .map_err(|_| self.semantic(col, format!("state id {i} is out of range"))),
            (other, col) => Err(self.syntax(col, format!("unexpected {other}"), "a state id")),
        }
    }

    fn end(&self) -> PResult<()> {
        match self.toks.get(self.pos) {
            None => Ok(()),
            Some(t) => Err(self.syntax(t.col, format!("unexpected {}", t.tok), "end of line")),
        }
    }

    fn identifier(&mut self, what: &str) -> PResult<(String, usize)> {
        let (w, col) = self.word(what)?;
        if is_identifier(&w) {
            Ok((w, col))
        } else {
            Err(self.syntax(col, format!("`{w}` is not a valid {what}"), what))
        }
    }

    fn qualified(&mut self) -> PResult<(String, String, usize)> {
        let (w, col) = self.word("<Iface>.<method>")?;
        match w.split_once('.') {
            Some((i, m)) if is_identifier(i) && is_identifier(m) => Ok((i.to_owned(), m.to_owned(), col)),
            _ => Err(self.syntax(col, format!("`{w}` is not a qualified method"), "<Iface>.<method>")),
        }
    }

    fn symbol_set(&mut self) -> PResult<(BTreeSet<ActionSymbol>, Vec<(ActionSymbol, usize)>)> {
        self.punct(Tok::LBrace)?;
        let mut set = BTreeSet::new();
        let mut located = Vec::new();
        loop {
            match self.next("a symbol or `}`")? {
                (Tok::RBrace, _) => break,
                (Tok::Comma, _) => continue,
                (Tok::Word(w), col) => {
                    let sym: ActionSymbol = w
                        .parse()
                        .map_err(|e| self.syntax(col, format!("{e}"), "call:<Iface>.<method>, callback:<method> or new:<Iface>"))?;
                    if !set.insert(sym.clone()) {
                        return Err(self.semantic(col, format!("{sym} listed twice")));
                    }
                    located.push((sym, col));
                }
                (other, col) => return Err(self.syntax(col, format!("unexpected {other}"), "a symbol or `}`")),
            }
        }
        Ok((set, located))
    }

    fn literal_list(&mut self) -> PResult<Vec<Value>> {
        self.punct(Tok::LParen)?;
        let mut vals = Vec::new();
        loop {
            match self.next("a literal or `)`")? {
                (Tok::RParen, _) => break,
                (Tok::Comma, _) => continue,
                (Tok::Int(i), _) => vals.push(Value::Int(i)),
                (Tok::Str(s), _) => vals.push(Value::Str(s)),
                (Tok::Word(w), _) if w == "true" => vals.push(Value::Bool(true)),
                (Tok::Word(w), _) if w == "false" => vals.push(Value::Bool(false)),
                (other, col) => return Err(self.syntax(col, format!("unexpected {other}"), "a literal or `)`")),
            }
        }
        Ok(vals)
    }

    fn arg_source(&mut self) -> PResult<ArgSource> {
        if self.peek() != Some(&Tok::Word("args".into())) {
            return Ok(ArgSource::None);
        }
        self.pos += 1;
        match self.peek() {
            Some(Tok::LParen) => Ok(ArgSource::Literals(self.literal_list()?)),
            _ => {
                let (w, col) = self.word("`cached`, `none` or `(`")?;
                match w.as_str() {
                    "cached" => Ok(ArgSource::Cached),
                    "none" => Ok(ArgSource::None),
                    _ => Err(self.syntax(col, format!("unexpected `{w}`"), "`cached`, `none` or `(`")),
                }
            }
        }
    }
}

#[derive(Default)]
struct Draft {
    name: Option<String>,
    version: Option<u32>,
    statement: Option<String>,
    target: Option<(String, usize, usize)>,
    states: Option<Vec<u32>>,
    initial: Option<(u32, usize, usize)>,
    alphabet: BTreeSet<ActionSymbol>,
    has_alphabet: bool,
    transitions: Vec<(Transition, usize)>,
    /// Every symbol reference with its position, for target checks.
    symbol_refs: Vec<(ActionSymbol, usize, usize)>,
    /// Every state reference in a transition.
    state_refs: Vec<(u32, usize, usize)>,
}

fn parse_line(line: &mut Line<'_>, draft: &mut Draft) -> PResult<()> {
    let (kw, kw_col) = line.word("a declaration (policy, version, statement, target, states, initial, alphabet, on)")?;
    let dup = |line: &Line<'_>, what: &str| line.semantic(kw_col, format!("duplicate `{what}` declaration"));
    match kw.as_str() {
        "policy" => {
            let (w, col) = line.word("a policy name")?;
            let ok = w.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && w.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return Err(line.syntax(col, format!("`{w}` is not a valid policy name"), "a policy name"));
            }
            line.end()?;
            if draft.name.replace(w).is_some() {
                return Err(dup(line, "policy"));
            }
        }
        "version" => {
            let v = match line.next("a version number")? {
                (Tok::Int(i), col) => u32::try_from(i).map_err(|_| line.semantic(col, "version must be a non-negative integer"))?,
                (other, col) => return Err(line.syntax(col, format!("unexpected {other}"), "a version number")),
            };
            line.end()?;
            if draft.version.replace(v).is_some() {
                return Err(dup(line, "version"));
            }
        }
        "statement" => {
            let s = match line.next("a quoted statement")? {
                (Tok::Str(s), _) => s,
                (other, col) => return Err(line.syntax(col, format!("unexpected {other}"), "a quoted statement")),
            };
            line.end()?;
            if draft.statement.replace(s).is_some() {
                return Err(dup(line, "statement"));
            }
        }
        "target" => {
            let (w, col) = line.identifier("interface name")?;
            line.end()?;
            if draft.target.replace((w, line.lineno, col)).is_some() {
                return Err(dup(line, "target"));
            }
        }
        "states" => {
            let mut ids = Vec::new();
            while line.peek().is_some() {
                let (s, col) = line.state()?;
                if ids.contains(&s) {
                    return Err(line.semantic(col, format!("duplicate state {s}")));
                }
                ids.push(s);
            }
            if ids.is_empty() {
                return Err(line.syntax(line.col(), "no states declared", "a state id"));
            }
            if draft.states.replace(ids).is_some() {
                return Err(dup(line, "states"));
            }
        }
        "initial" => {
            let (s, col) = line.state()?;
            line.end()?;
            if draft.initial.replace((s, line.lineno, col)).is_some() {
                return Err(dup(line, "initial"));
            }
        }
        "alphabet" => {
            if draft.has_alphabet {
                return Err(dup(line, "alphabet"));
            }
            draft.has_alphabet = true;
            while line.peek().is_some() {
                let (w, col) = line.word("a symbol")?;
                let sym: ActionSymbol = w
                    .parse()
                    .map_err(|e| line.syntax(col, format!("{e}"), "call:<Iface>.<method>, callback:<method> or new:<Iface>"))?;
                if !draft.alphabet.insert(sym.clone()) {
                    return Err(line.semantic(col, format!("{sym} listed twice")));
                }
                draft.symbol_refs.push((sym, line.lineno, col));
            }
        }
        "on" => {
            let t = parse_transition(line, draft)?;
            draft.transitions.push((t, line.lineno));
        }
        other => {
            return Err(line.syntax(
                kw_col,
                format!("unknown declaration `{other}`"),
                "policy, version, statement, target, states, initial, alphabet or on",
            ))
        }
    }
    Ok(())
}

fn parse_guard(line: &mut Line<'_>, draft: &mut Draft) -> PResult<Guard> {
    const EXPECTED: &str = "call, callback, new, any, any-of or any-except";
    let (w, col) = line.word(EXPECTED)?;
    let lineno = line.lineno;
    let guard = match w.as_str() {
        "call" => {
            let (i, m, c) = line.qualified()?;
            let s = ActionSymbol::call(&i, &m);
            draft.symbol_refs.push((s.clone(), lineno, c));
            Guard::Exactly(s)
        }
        "callback" => {
            let (m, _) = line.identifier("callback name")?;
            Guard::Exactly(ActionSymbol::callback(&m))
        }
        "new" => {
            let (i, c) = line.identifier("interface name")?;
            let s = ActionSymbol::constructor(&i);
            draft.symbol_refs.push((s.clone(), lineno, c));
            Guard::Exactly(s)
        }
        "any" => Guard::Any,
        "any-of" | "any-except" => {
            let (set, located) = line.symbol_set()?;
            if set.is_empty() {
                return Err(line.semantic(col, format!("`{w}` needs at least one symbol")));
            }
            draft.symbol_refs.extend(located.into_iter().map(|(s, c)| (s, lineno, c)));
            if w == "any-of" {
                Guard::AnyOf(set)
            } else {
                Guard::AnyExcept(set)
            }
        }
        _ => return Err(line.syntax(col, format!("unexpected `{w}`"), EXPECTED)),
    };
    Ok(guard)
}

fn parse_item(line: &mut Line<'_>, draft: &mut Draft) -> PResult<OutputItem> {
    let (w, col) = line.word("`input` or `insert`")?;
    match w.as_str() {
        "input" => Ok(OutputItem::Forward),
        "insert" => {
            let (kind, kcol) = line.word("`call` or `new`")?;
            let lineno = line.lineno;
            match kind.as_str() {
                "call" => {
                    let (i, m, c) = line.qualified()?;
                    let symbol = ActionSymbol::call(&i, &m);
                    draft.symbol_refs.push((symbol.clone(), lineno, c));
                    Ok(OutputItem::Synthesize {
                        symbol,
                        args: line.arg_source()?,
                    })
                }
                "new" => {
                    let (i, c) = line.identifier("interface name")?;
                    let symbol = ActionSymbol::constructor(&i);
                    draft.symbol_refs.push((symbol.clone(), lineno, c));
                    Ok(OutputItem::Synthesize {
                        symbol,
                        args: line.arg_source()?,
                    })
                }
                _ => Err(line.syntax(kcol, format!("unexpected `{kind}`"), "`call` or `new`")),
            }
        }
        _ => Err(line.syntax(col, format!("unexpected `{w}`"), "`input` or `insert`")),
    }
}

fn parse_transition(line: &mut Line<'_>, draft: &mut Draft) -> PResult<Transition> {
    let guard = parse_guard(line, draft)?;
    line.keyword("from")?;
    let (from, fcol) = line.state()?;
    line.keyword("to")?;
    let (to, tcol) = line.state()?;
    line.keyword("emit")?;
    draft.state_refs.push((from, line.lineno, fcol));
    draft.state_refs.push((to, line.lineno, tcol));

    let mut output = Vec::new();
    if line.peek() == Some(&Tok::Word("nothing".into())) {
        line.pos += 1;
    } else {
        loop {
            let col = line.col();
            let item = parse_item(line, draft)?;
            if item == OutputItem::Forward && output.contains(&OutputItem::Forward) {
                return Err(line.semantic(col, "`input` may appear at most once"));
            }
            output.push(item);
            match line.peek() {
                Some(Tok::Comma) => line.pos += 1,
                _ => break,
            }
        }
    }
    line.end()?;
    Ok(Transition::new(from, guard, output, to))
}

/// Parses a policy file. On failure every diagnostic found is returned.
pub fn parse(text: &str) -> Result<PolicyDoc, Diagnostics> {
    let mut diags = Vec::new();
    let mut draft = Draft::default();
    let mut last_line = 1;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let toks = match lex_line(raw, lineno) {
            Ok(t) => t,
            Err(d) => {
                diags.push(d);
                continue;
            }
        };
        if toks.is_empty() {
            continue;
        }
        let mut line = Line {
            toks: &toks,
            pos: 0,
            lineno,
            end_col: raw.chars().count() + 1,
        };
        if let Err(d) = parse_line(&mut line, &mut draft) {
            diags.push(d);
        }
    }
    if !diags.is_empty() {
        return Err(Diagnostics(diags));
    }
    finish(draft, last_line).map_err(Diagnostics)
}

fn finish(draft: Draft, last_line: usize) -> Result<PolicyDoc, Vec<Diagnostic>> {
    let missing = |what: &str| Diagnostic {
        kind: DiagnosticKind::Syntax,
        line: last_line,
        column: 1,
        message: format!("missing `{what}` declaration"),
        expected: Some(format!("`{what}`")),
    };
    let sem = |line: usize, column: usize, message: String| Diagnostic {
        kind: DiagnosticKind::Semantic,
        line,
        column,
        message,
        expected: None,
    };
    let mut diags = Vec::new();
    for (what, present) in [
        ("policy", draft.name.is_some()),
        ("statement", draft.statement.is_some()),
        ("target", draft.target.is_some()),
        ("states", draft.states.is_some()),
        ("initial", draft.initial.is_some()),
    ] {
        if !present {
            diags.push(missing(what));
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    let (target, _, _) = draft.target.clone().expect("checked");
    let states = draft.states.clone().expect("checked");
    let (initial, iline, icol) = draft.initial.expect("checked");

    if !states.contains(&initial) {
        diags.push(sem(iline, icol, format!("initial state {initial} is not declared")));
    }
    for &(s, line, col) in &draft.state_refs {
        if !states.contains(&s) {
            diags.push(sem(line, col, format!("unknown state {s}")));
        }
    }
    for (sym, line, col) in &draft.symbol_refs {
        if sym.kind() != ActionKind::Callback && sym.interface() != target {
            diags.push(sem(
                *line,
                *col,
                format!("unknown symbol {sym}: only `{target}` methods and lifecycle callbacks may be referenced"),
            ));
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let located = draft.transitions.clone();
    let automaton = EditAutomaton::new(
        states,
        initial,
        draft.transitions.into_iter().map(|(t, _)| t).collect(),
    )
    .with_alphabet(draft.alphabet);
    let report = automaton.validate();
    for d in &report.diagnostics {
        let line = d
            .transition()
            .and_then(|i| {
                let t = &automaton.transitions()[i];
                located.iter().find(|(lt, _)| lt == t).map(|(_, l)| *l)
            })
            .or_else(|| match d {
                ValidationDiagnostic::Incomplete { state, .. } | ValidationDiagnostic::Nondeterministic { state, .. } => located
                    .iter()
                    .find(|(t, _)| t.from == *state)
                    .map(|(_, l)| *l),
                _ => None,
            })
            .unwrap_or(iline);
        diags.push(sem(line, 1, d.to_string()));
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    Ok(PolicyDoc {
        name: draft.name.expect("checked"),
        statement: draft.statement.expect("checked"),
        target_interface: target,
        automaton,
        version: draft.version.unwrap_or(0),
    })
}

/// Renders a policy in canonical form.
pub fn serialize(doc: &PolicyDoc) -> String {
    let a = &doc.automaton;
    let mut out = String::new();
    let _ = writeln!(out, "policy {}", doc.name);
    let _ = writeln!(out, "version {}", doc.version);
    out.push_str("statement ");
    let _ = write_quoted(&mut out, &doc.statement);
    out.push('\n');
    let _ = writeln!(out, "target {}", doc.target_interface);
    let states: Vec<String> = a.states().iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "states {}", states.join(" "));
    let _ = writeln!(out, "initial {}", a.initial());
    if !a.alphabet().is_empty() {
        let syms: Vec<String> = a.alphabet().iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "alphabet {}", syms.join(" "));
    }
    for t in a.transitions() {
        let _ = writeln!(out, "{t}");
    }
    out
}

/// Strips comments, blank lines and redundant whitespace, which is all the
/// canonical form removes from a hand-written file already in canonical
/// order.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::new();
    for raw in text.lines() {
        let mut in_str = false;
        let mut escaped = false;
        let mut end = raw.len();
        for (i, c) in raw.char_indices() {
            match c {
                _ if escaped => escaped = false,
                '\\' if in_str => escaped = true,
                '"' => in_str = !in_str,
                '#' if !in_str => {
                    end = i;
                    break;
                }
                _ => {}
            }
        }
        let body = raw[..end].trim_end();
        if !body.trim().is_empty() {
            out.push_str(body.trim_start());
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::StateId;

    const RELEASE: &str = r#"
# simplified release model
policy audio-release
version 1
statement "An activity that is stopped while having the control of the microphone must first release the microphone."
target AudioRecord
states 0 1 2
initial 0
on any-except {new:AudioRecord} from 0 to 0 emit input
on new AudioRecord from 0 to 1 emit input
on any-except {call:AudioRecord.release call:AudioRecord.startRecording} from 1 to 1 emit input
on call AudioRecord.release from 1 to 0 emit input
on call AudioRecord.startRecording from 1 to 2 emit input
on any-except {call:AudioRecord.release call:AudioRecord.stop callback:onStop} from 2 to 2 emit input
on call AudioRecord.release from 2 to 0 emit input
on call AudioRecord.stop from 2 to 1 emit input
on callback onStop from 2 to 0 emit insert call AudioRecord.stop, insert call AudioRecord.release, input
"#;

    fn kinds(err: &Diagnostics) -> Vec<DiagnosticKind> {
        err.iter().map(|d| d.kind).collect()
    }

    #[test]
    fn parses_release_model() {
        let doc = parse(RELEASE).unwrap();
        assert_eq!(doc.name, "audio-release");
        assert_eq!(doc.automaton.states().len(), 3);
        assert_eq!(doc.automaton.initial(), StateId(0));
        let synth: Vec<_> = doc
            .automaton
            .transitions()
            .iter()
            .filter(|t| t.synthesized().next().is_some())
            .collect();
        assert_eq!(synth.len(), 1);
        let names: Vec<_> = synth[0].synthesized().map(|s| s.method().to_owned()).collect();
        assert_eq!(names, ["stop", "release"]);
    }

    #[test]
    fn serialized_form_has_one_insert_clause_in_order() {
        let text = serialize(&parse(RELEASE).unwrap());
        let inserting: Vec<&str> = text.lines().filter(|l| l.contains("insert")).collect();
        assert_eq!(inserting.len(), 1);
        let stop = inserting[0].find("AudioRecord.stop").unwrap();
        let release = inserting[0].find("AudioRecord.release").unwrap();
        assert!(stop < release);
    }

    #[test]
    fn round_trip_is_canonical() {
        let doc = parse(RELEASE).unwrap();
        let once = serialize(&doc);
        assert_eq!(parse(&once).unwrap(), doc);
        assert_eq!(serialize(&parse(&once).unwrap()), once);
        assert_eq!(once, strip_comments(RELEASE));
    }

    #[test]
    fn minimal_policy_serializes_identically() {
        let text = "policy p\nstatement \"s\"\ntarget X\nstates 0\ninitial 0\non any from 0 to 0 emit input\n";
        let doc = parse(text).unwrap();
        let a = serialize(&doc);
        let b = serialize(&parse(text).unwrap());
        assert_eq!(a, b);
        assert_eq!(a, "policy p\nversion 0\nstatement \"s\"\ntarget X\nstates 0\ninitial 0\non any from 0 to 0 emit input\n");
    }

    #[test]
    fn set_elements_render_sorted() {
        let text = "policy p\nstatement \"s\"\ntarget X\nstates 0\ninitial 0\n\
                    on any-except {call:X.b call:X.a} from 0 to 0 emit input\n\
                    on call X.a from 0 to 0 emit input\non call X.b from 0 to 0 emit input\n";
        let out = serialize(&parse(text).unwrap());
        assert!(out.contains("any-except {call:X.a call:X.b}"), "{out}");
    }

    #[test]
    fn empty_any_except_is_semantic() {
        let text = "policy p\nstatement \"s\"\ntarget X\nstates 0\ninitial 0\non any-except {} from 0 to 0 emit input\n";
        let err = parse(text).unwrap_err();
        assert_eq!(kinds(&err), [DiagnosticKind::Semantic]);
        assert_eq!(err.0[0].line, 6);
    }

    #[test]
    fn lexical_syntax_semantic_are_distinct() {
        let lex = parse("policy p\nstatement \"unterminated\n").unwrap_err();
        assert_eq!(kinds(&lex), [DiagnosticKind::Lexical]);
        assert_eq!((lex.0[0].line, lex.0[0].column), (2, 11));

        let syn = parse("policy p\non call X.a frm 0 to 0 emit input\n").unwrap_err();
        assert_eq!(kinds(&syn), [DiagnosticKind::Syntax]);
        assert_eq!(syn.0[0].expected.as_deref(), Some("`from`"));

        let dup = parse("policy p\nstatement \"s\"\ntarget X\nstates 0 1 0\ninitial 0\n").unwrap_err();
        assert_eq!(kinds(&dup), [DiagnosticKind::Semantic]);
        assert_eq!((dup.0[0].line, dup.0[0].column), (4, 12));
    }

    #[test]
    fn foreign_interface_is_unknown_symbol() {
        let text = "policy p\nstatement \"s\"\ntarget X\nstates 0\ninitial 0\non call Y.a from 0 to 0 emit input\non any-except {call:Y.a} from 0 to 0 emit input\n";
        let err = parse(text).unwrap_err();
        assert!(err.iter().all(|d| d.kind == DiagnosticKind::Semantic));
        assert!(err.0[0].message.contains("unknown symbol"));
    }

    #[test]
    fn undeclared_state_reference() {
        let text = "policy p\nstatement \"s\"\ntarget X\nstates 0\ninitial 0\non any from 0 to 9 emit input\n";
        let err = parse(text).unwrap_err();
        assert_eq!(err.0[0].kind, DiagnosticKind::Semantic);
        assert_eq!((err.0[0].line, err.0[0].column), (6, 18));
    }

    #[test]
    fn nondeterminism_is_reported_at_its_line() {
        let text = "policy p\nstatement \"s\"\ntarget X\nstates 0\ninitial 0\non call X.a from 0 to 0 emit input\non any from 0 to 0 emit input\n";
        let err = parse(text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert!(err.0[0].message.contains("nondeterministic"));
        assert!(err.0[0].line == 6 || err.0[0].line == 7);
    }

    #[test]
    fn missing_header_is_reported() {
        let err = parse("policy p\n").unwrap_err();
        assert_eq!(err.0.len(), 4);
        assert!(err.iter().all(|d| d.kind == DiagnosticKind::Syntax));
    }

    #[test]
    fn literal_args_and_nothing_round_trip() {
        let text = "policy p\nstatement \"quote \\\" and \\\\ slash\"\ntarget X\nstates 0\ninitial 0\n\
                    on call X.a from 0 to 0 emit nothing\n\
                    on any-except {call:X.a} from 0 to 0 emit insert call X.b args (1 -2 \"s\" true), input, insert new X args cached\n";
        let doc = parse(text).unwrap();
        assert_eq!(doc.statement, "quote \" and \\ slash");
        let out = serialize(&doc);
        assert!(out.contains("emit nothing"));
        assert!(out.contains("args (1 -2 \"s\" true)"));
        assert_eq!(parse(&out).unwrap(), doc);
    }

    #[test]
    fn garbage_never_panics() {
        for text in ["", "\u{0}", "on", "{{{", "policy", "states -1", "on any from 0 to 0 emit input, ", "\"", "policy p # c\nstates 99999999999"] {
            let _ = parse(text);
        }
    }
}
