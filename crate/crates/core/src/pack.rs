//! Loading a directory of policies plus its scenario manifest.
//!
//! A pack directory holds `*.pol` files at its top level and an optional
//! `manifest` whose lines read `<scenario> healed|no-violation`.
//! Subdirectories are ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dsl::{parse, PolicyDoc};
use crate::enforcer::{DeployError, PolicyEnforcer};
use crate::interference::{check_set, InterferenceReport};
use crate::sim::Expectation;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackProblem {
    pub path: PathBuf,
    pub message: String,
}

impl fmt::Display for PackProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PackError {
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<PackProblem>),
    #[error("pack policies interfere:\n{0}")]
    Interference(InterferenceReport),
    #[error("no policy named `{0}` in the pack")]
    UnknownPolicy(String),
    #[error(transparent)]
    Deploy(#[from] DeployError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyPack {
    pub policies: BTreeMap<String, PolicyDoc>,
    pub expectations: BTreeMap<String, Expectation>,
}

/// Loads and interference-checks a pack directory.
pub fn load_pack(dir: &Path) -> Result<PolicyPack, PackError> {
    PolicyPack::load(dir)
}

/// Reads and parses one policy file.
pub fn load_policy_file(path: &Path) -> Result<PolicyDoc, PackError> {
    let text = std::fs::read_to_string(path).map_err(|e| PackError::Io {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    parse(&text).map_err(|d| {
        PackError::Invalid(
            d.iter()
                .map(|d| PackProblem {
                    path: path.to_owned(),
                    message: d.to_string(),
                })
                .collect(),
        )
    })
}

impl PolicyPack {
    pub fn load(dir: &Path) -> Result<Self, PackError> {
        let pack = Self::load_unchecked(dir)?;
        let report = pack.interference();
        if !report.is_empty() {
            return Err(PackError::Interference(report));
        }
        Ok(pack)
    }

    /// Parses and validates every file but skips the interference gate.
    pub fn load_unchecked(dir: &Path) -> Result<Self, PackError> {
        let io = |e: std::io::Error| PackError::Io {
            path: dir.to_owned(),
            message: e.to_string(),
        };
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.is_file() && path.extension().is_some_and(|e| e == "pol") {
                files.push(path);
            }
        }
        files.sort();

        let mut pack = PolicyPack::default();
        let mut problems = Vec::new();
        let mut origin: BTreeMap<String, PathBuf> = BTreeMap::new();
        for path in files {
            match load_policy_file(&path) {
                Ok(doc) => {
                    if let Some(first) = origin.get(&doc.name) {
                        problems.push(PackProblem {
                            path: path.clone(),
                            message: format!("policy `{}` is also defined in {}", doc.name, first.display()),
                        });
                        continue;
                    }
                    origin.insert(doc.name.clone(), path);
                    pack.policies.insert(doc.name.clone(), doc);
                }
                Err(PackError::Invalid(p)) => problems.extend(p),
                Err(e) => return Err(e),
            }
        }

        let manifest = dir.join("manifest");
        if manifest.is_file() {
            let text = std::fs::read_to_string(&manifest).map_err(|e| PackError::Io {
                path: manifest.clone(),
                message: e.to_string(),
            })?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let problem = |message: String| PackProblem {
                    path: manifest.clone(),
                    message: format!("line {}: {message}", i + 1),
                };
                match line.split_whitespace().collect::<Vec<_>>()[..] {
                    [scenario, expectation] => match expectation.parse::<Expectation>() {
                        Ok(e) => {
                            if pack.expectations.insert(scenario.to_owned(), e).is_some() {
                                problems.push(problem(format!("scenario `{scenario}` listed twice")));
                            }
                        }
                        Err(m) => problems.push(problem(m)),
                    },
                    _ => problems.push(problem("expected `<scenario> healed|no-violation`".into())),
                }
            }
        }

        if problems.is_empty() {
            Ok(pack)
        } else {
            Err(PackError::Invalid(problems))
        }
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&PolicyDoc> {
        self.policies.get(name)
    }

    /// Pairwise interference over all policies, in name order.
    pub fn interference(&self) -> InterferenceReport {
        check_set(self.policies.values())
    }

    /// An enforcer with every policy deployed in name order and the
    /// `disabled` ones switched off.
    pub fn enforcer<S: AsRef<str>>(&self, disabled: &[S]) -> Result<PolicyEnforcer, PackError> {
        for d in disabled {
            if !self.policies.contains_key(d.as_ref()) {
                return Err(PackError::UnknownPolicy(d.as_ref().to_owned()));
            }
        }
        let mut e = PolicyEnforcer::with_policies(self.policies.values().cloned())?;
        for d in disabled {
            let h = e.handle_of(d.as_ref()).expect("deployed above");
            e.set_enabled(h, false).expect("handle from this enforcer");
        }
        Ok(e)
    }
}
