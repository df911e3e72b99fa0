//! Syntactic non-interference check between policies.
//!
//! Two policies interfere when one inserts or suppresses a symbol that the
//! other observes. Forwarding the matched input is neither. An empty report is
//! a sufficient condition for order-independent co-deployment; it is not a
//! reachability-aware analysis.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::dsl::PolicyDoc;
use crate::symbol::ActionSymbol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Direction {
    AInsertsIntoB,
    ASuppressesFromB,
    BInsertsIntoA,
    BSuppressesFromA,
}

impl Direction {
    pub fn mirrored(self) -> Self {
        match self {
            Direction::AInsertsIntoB => Direction::BInsertsIntoA,
            Direction::ASuppressesFromB => Direction::BSuppressesFromA,
            Direction::BInsertsIntoA => Direction::AInsertsIntoB,
            Direction::BSuppressesFromA => Direction::ASuppressesFromB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Interference {
    pub policy_a: String,
    pub policy_b: String,
    pub symbols: BTreeSet<ActionSymbol>,
    pub direction: Direction,
}

impl fmt::Display for Interference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (actor, victim, verb) = match self.direction {
            Direction::AInsertsIntoB => (&self.policy_a, &self.policy_b, "inserts"),
            Direction::ASuppressesFromB => (&self.policy_a, &self.policy_b, "suppresses"),
            Direction::BInsertsIntoA => (&self.policy_b, &self.policy_a, "inserts"),
            Direction::BSuppressesFromA => (&self.policy_b, &self.policy_a, "suppresses"),
        };
        let syms: Vec<String> = self.symbols.iter().map(ToString::to_string).collect();
        write!(f, "{actor} {verb} {} observed by {victim}", syms.join(" "))
    }
}

/// Empty `pairs` means the checked set is pairwise non-interfering.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InterferenceReport {
    pub pairs: Vec<Interference>,
}

impl InterferenceReport {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Every policy named on either side of a reported pair.
    pub fn policies(&self) -> BTreeSet<&str> {
        self.pairs
            .iter()
            .flat_map(|p| [p.policy_a.as_str(), p.policy_b.as_str()])
            .collect()
    }

    pub fn symbols(&self) -> BTreeSet<&ActionSymbol> {
        self.pairs.iter().flat_map(|p| p.symbols.iter()).collect()
    }
}

impl fmt::Display for InterferenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pairs.is_empty() {
            return f.write_str("no interference");
        }
        for (i, p) in self.pairs.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

pub fn check_pair(a: &PolicyDoc, b: &PolicyDoc) -> InterferenceReport {
    let ea = a.automaton.effect_sets();
    let eb = b.automaton.effect_sets();
    let va = a.automaton.vocabulary();
    let vb = b.automaton.vocabulary();
    let mut pairs = Vec::new();
    for (effects, vocab, direction) in [
        (&ea.inserted, vb, Direction::AInsertsIntoB),
        (&ea.suppressible, vb, Direction::ASuppressesFromB),
        (&eb.inserted, va, Direction::BInsertsIntoA),
        (&eb.suppressible, va, Direction::BSuppressesFromA),
    ] {
        let symbols: BTreeSet<ActionSymbol> = effects.intersection(vocab).cloned().collect();
        if !symbols.is_empty() {
            pairs.push(Interference {
                policy_a: a.name.clone(),
                policy_b: b.name.clone(),
                symbols,
                direction,
            });
        }
    }
    InterferenceReport { pairs }
}

/// Union of [`check_pair`] over all unordered pairs, in input order.
pub fn check_set<'a, I>(policies: I) -> InterferenceReport
where
    I: IntoIterator<Item = &'a PolicyDoc>,
{
    let policies: Vec<&PolicyDoc> = policies.into_iter().collect();
    let mut pairs = Vec::new();
    for (i, a) in policies.iter().enumerate() {
        for b in &policies[i + 1..] {
            pairs.extend(check_pair(a, b).pairs);
        }
    }
    InterferenceReport { pairs }
}
