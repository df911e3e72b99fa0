//! Run outcomes and the per-action overhead benchmark.

use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::enforcer::{InterventionRecord, PolicyEnforcer};
use crate::pack::{PackError, PolicyPack};
use crate::sim::{App, Expectation, LeakReport, RunError, ScenarioRun, ScenarioRunner, ScenarioScript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Outcome {
    Healed,
    NoViolation,
    Leaked,
}

impl Outcome {
    pub fn of(run: &ScenarioRun) -> Self {
        if !run.leaks.is_empty() {
            Outcome::Leaked
        } else if run.interventions.is_empty() {
            Outcome::NoViolation
        } else {
            Outcome::Healed
        }
    }

    pub fn matches(self, e: Expectation) -> bool {
        matches!(
            (self, e),
            (Outcome::Healed, Expectation::Healed) | (Outcome::NoViolation, Expectation::NoViolation)
        )
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Healed => "healed",
            Outcome::NoViolation => "no violation",
            Outcome::Leaked => "leaked",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionTime {
    pub action: usize,
    pub command: String,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub app: App,
    pub enforcement: bool,
    pub disabled: Vec<String>,
    pub outcome: Outcome,
    pub expected: Option<Expectation>,
    pub interventions: usize,
    pub records: Vec<InterventionRecord>,
    pub leaks: LeakReport,
    /// Wall-clock time of each script step in this run.
    pub timing: Vec<ActionTime>,
}

impl RunReport {
    pub fn new(run: ScenarioRun, expected: Option<Expectation>, disabled: Vec<String>, timing: Vec<ActionTime>) -> Self {
        Self {
            outcome: Outcome::of(&run),
            scenario: run.scenario,
            app: run.app,
            enforcement: run.enforced,
            disabled,
            expected,
            interventions: run.interventions.len(),
            records: run.interventions,
            leaks: run.leaks,
            timing,
        }
    }

    /// Whether the outcome is the expected one; `None` without an expectation.
    pub fn as_expected(&self) -> Option<bool> {
        self.expected.map(|e| self.outcome.matches(e))
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario      {}", self.scenario)?;
        writeln!(f, "app           {}", self.app)?;
        write!(f, "enforcement   {}", if self.enforcement { "on" } else { "off" })?;
        if !self.disabled.is_empty() {
            write!(f, " (disabled: {})", self.disabled.join(", "))?;
        }
        writeln!(f)?;
        write!(f, "outcome       {}", self.outcome)?;
        if let Some(e) = self.expected {
            write!(f, " (expected {e})")?;
        }
        writeln!(f)?;
        writeln!(f, "interventions {}", self.interventions)?;
        for r in &self.records {
            let inserted: Vec<String> = r.synthesized.iter().map(ToString::to_string).collect();
            write!(f, "  {} at {}:", r.policy, r.trigger)?;
            if !inserted.is_empty() {
                write!(f, " inserted {}", inserted.join(", "))?;
            }
            if r.suppressed {
                write!(f, " suppressed input")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "leaks         {}", self.leaks.len())?;
        for l in &self.leaks.leaks {
            writeln!(f, "  {l}")?;
        }
        Ok(())
    }
}

/// Replays `script` recording the wall-clock time of each step.
pub fn run_timed(
    script: &ScenarioScript,
    enforcer: Option<PolicyEnforcer>,
    app_work: Duration,
) -> Result<(ScenarioRun, Vec<Duration>), RunError> {
    let mut runner = ScenarioRunner::new(script, enforcer).with_app_work(app_work);
    let mut times = Vec::with_capacity(script.steps.len());
    for step in &script.steps {
        let start = Instant::now();
        runner.step(step)?;
        times.push(start.elapsed());
    }
    Ok((runner.finish(), times))
}

/// `100 × (with − without) / without`.
pub fn overhead_percent(with: f64, without: f64) -> f64 {
    100.0 * (with - without) / without
}

/// Signed, two decimals: `+4.71%`.
pub fn format_overhead(percent: f64) -> String {
    format!("{percent:+.2}%")
}

/// Median of a non-empty sample; even sizes average the middle pair.
pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "median of nothing");
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub const DEFAULT_REPETITIONS: usize = 50;
pub const MIN_REPETITIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionBench {
    pub action: usize,
    pub command: String,
    pub median_with: f64,
    pub median_without: f64,
    pub overhead_percent: f64,
    /// Whether enforcement modified the stream during this action.
    pub intervened: bool,
}

/// Medians are in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub scenario: String,
    pub repetitions: usize,
    pub actions: Vec<ActionBench>,
    /// Index into `actions` of the highest overhead.
    pub highest: Option<usize>,
}

impl BenchResult {
    pub fn highest(&self) -> Option<&ActionBench> {
        self.highest.map(|i| &self.actions[i])
    }

    /// Actions during which no module touched the stream.
    pub fn quiet_actions(&self) -> impl Iterator<Item = &ActionBench> {
        self.actions.iter().filter(|a| !a.intervened)
    }
}

impl fmt::Display for BenchResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} ({} repetitions, medians in ms)", self.scenario, self.repetitions)?;
        writeln!(f, "  #  {:<28} {:>10} {:>10} {:>9}", "action", "with", "without", "overhead")?;
        for (i, a) in self.actions.iter().enumerate() {
            let mark = if Some(i) == self.highest { '*' } else { ' ' };
            let healed = if a.intervened { " (intervened)" } else { "" };
            writeln!(
                f,
                "{mark}{:>2}  {:<28} {:>10.3} {:>10.3} {:>9}{healed}",
                a.action,
                a.command,
                a.median_with,
                a.median_without,
                format_overhead(a.overhead_percent)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("at least {MIN_REPETITIONS} repetitions are needed, got {0}")]
    TooFewRepetitions(usize),
    #[error(transparent)]
    Pack(#[from] PackError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Runs `script` `reps` times with and without the pack (alternating, each
/// repetition from a fresh world and enforcer) and compares per-step medians.
pub fn bench_scenario<S: AsRef<str>>(
    script: &ScenarioScript,
    pack: &PolicyPack,
    disabled: &[S],
    reps: usize,
    app_work: Duration,
) -> Result<BenchResult, BenchError> {
    if reps < MIN_REPETITIONS {
        return Err(BenchError::TooFewRepetitions(reps));
    }
    let n = script.steps.len();
    let mut with = vec![Vec::with_capacity(reps); n];
    let mut without = vec![Vec::with_capacity(reps); n];
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let mut intervened = vec![false; n];
    for rep in 0..reps {
        for enforced in [rep % 2 == 0, rep % 2 != 0] {
            let enforcer = if enforced { Some(pack.enforcer(disabled)?) } else { None };
            let mut runner = ScenarioRunner::new(script, enforcer).with_app_work(app_work);
            for (i, step) in script.steps.iter().enumerate() {
                let before = runner.enforcer().map_or(0, |e| e.intervention_log().len());
                let start = Instant::now();
                runner.step(step)?;
                let t = ms(start.elapsed());
                if enforced {
                    with[i].push(t);
                    let after = runner.enforcer().map_or(0, |e| e.intervention_log().len());
                    intervened[i] |= after > before;
                } else {
                    without[i].push(t);
                }
            }
        }
    }
    let actions: Vec<ActionBench> = script
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mw = median(&with[i]);
            let mo = median(&without[i]);
            ActionBench {
                action: i + 1,
                command: s.command.to_string(),
                median_with: mw,
                median_without: mo,
                overhead_percent: overhead_percent(mw, mo),
                intervened: intervened[i],
            }
        })
        .collect();
    let highest = (0..actions.len()).max_by(|a, b| actions[*a].overhead_percent.total_cmp(&actions[*b].overhead_percent));
    Ok(BenchResult {
        scenario: script.name.clone(),
        repetitions: reps,
        actions,
        highest,
    })
}
