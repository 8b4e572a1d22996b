//! Constant-domain Kripke models with per-agent accessibility relations.
//!
//! Worlds are addressed by dense indices internally and by string labels at
//! the edges (JSON files, DOT output, error messages). Updated models carry
//! flattened tuple labels such as `(s,u1,u2)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::syntax::{AgentName, Fluent};

/// Smallest transitive superset of a relation given as explicit pairs.
pub fn transitive_closure<T: Ord + Clone>(pairs: &BTreeSet<(T, T)>) -> BTreeSet<(T, T)> {
    let mut succ: BTreeMap<&T, Vec<&T>> = BTreeMap::new();
    for (a, b) in pairs {
        succ.entry(a).or_default().push(b);
    }
    let mut out = BTreeSet::new();
    for &start in succ.keys() {
        let mut seen: BTreeSet<&T> = BTreeSet::new();
        let mut stack: Vec<&T> = succ[start].clone();
        while let Some(x) = stack.pop() {
            if seen.insert(x) {
                if let Some(next) = succ.get(x) {
                    stack.extend(next.iter().copied());
                }
            }
        }
        out.extend(seen.into_iter().map(|t| (start.clone(), t.clone())));
    }
    out
}

/// A binary relation on world (or event) indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Relation {
    pairs: BTreeSet<(usize, usize)>,
}

impl Relation {
    pub fn new() -> Self {
        Relation::default()
    }

    pub fn insert(&mut self, from: usize, to: usize) -> bool {
        self.pairs.insert((from, to))
    }

    pub fn contains(&self, from: usize, to: usize) -> bool {
        self.pairs.contains(&(from, to))
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn successors(&self, from: usize) -> impl Iterator<Item = usize> + '_ {
        self.pairs.range((from, 0)..=(from, usize::MAX)).map(|&(_, t)| t)
    }

    pub fn has_successor(&self, from: usize) -> bool {
        self.successors(from).next().is_some()
    }

    /// Pairs `(s, v)` with `s -> t -> v` but not `s -> v`.
    pub fn missing_for_transitivity(&self) -> BTreeSet<(usize, usize)> {
        let mut missing = BTreeSet::new();
        for (s, t) in self.pairs() {
            for v in self.successors(t) {
                if !self.contains(s, v) {
                    missing.insert((s, v));
                }
            }
        }
        missing
    }

    pub fn is_transitive(&self) -> bool {
        self.missing_for_transitivity().is_empty()
    }

    pub fn transitive_closure(&self) -> Relation {
        Relation { pairs: transitive_closure(&self.pairs) }
    }

    pub fn union(&self, other: &Relation) -> Relation {
        Relation { pairs: self.pairs.union(&other.pairs).copied().collect() }
    }
}

impl FromIterator<(usize, usize)> for Relation {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        Relation { pairs: iter.into_iter().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("duplicate world `{0}`")]
    DuplicateWorld(String),
    #[error("unknown world `{0}`")]
    UnknownWorld(String),
    #[error("world index {0} out of range")]
    WorldIndex(usize),
}

/// A structural problem found by validation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    DuplicateWorld { world: String },
    DanglingEndpoint { agent: String, world: String },
    UnknownValuationWorld { fluent: String, world: String },
    UnknownDesignated { world: String },
    InvalidName { name: String },
    /// `from -> ... -> to` holds through an intermediate world but `from -> to` is missing.
    NonTransitive { agent: String, from: String, to: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateWorld { world } => write!(f, "duplicate world `{world}`"),
            Violation::DanglingEndpoint { agent, world } => {
                write!(f, "relation of `{agent}` mentions unknown world `{world}`")
            }
            Violation::UnknownValuationWorld { fluent, world } => {
                write!(f, "valuation of `{fluent}` mentions unknown world `{world}`")
            }
            Violation::UnknownDesignated { world } => write!(f, "designated world `{world}` is not a world"),
            Violation::InvalidName { name } => write!(f, "`{name}` is not a valid name"),
            Violation::NonTransitive { agent, from, to } => {
                write!(f, "relation of `{agent}` is not transitive: missing ({from},{to})")
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct KripkeModel {
    worlds: Vec<String>,
    index: HashMap<String, usize>,
    declared: BTreeSet<AgentName>,
    relations: BTreeMap<AgentName, Relation>,
    valuation: BTreeMap<Fluent, BTreeSet<usize>>,
    designated: Option<usize>,
}

/// Models are equal when they agree on worlds, agent set, relations,
/// valuation and designated world.
impl PartialEq for KripkeModel {
    fn eq(&self, other: &Self) -> bool {
        self.worlds == other.worlds
            && self.designated == other.designated
            && self.agents() == other.agents()
            && self.relations.iter().filter(|(_, r)| !r.is_empty()).eq(other.relations.iter().filter(|(_, r)| !r.is_empty()))
            && self.valuation.iter().filter(|(_, w)| !w.is_empty()).eq(other.valuation.iter().filter(|(_, w)| !w.is_empty()))
    }
}

impl Eq for KripkeModel {}

impl KripkeModel {
    pub fn new() -> Self {
        KripkeModel::default()
    }

    pub fn with_worlds<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, ModelError> {
        let mut m = KripkeModel::new();
        for l in labels {
            m.add_world(l)?;
        }
        Ok(m)
    }

    pub fn add_world(&mut self, label: impl Into<String>) -> Result<usize, ModelError> {
        let label = label.into();
        if self.index.contains_key(&label) {
            return Err(ModelError::DuplicateWorld(label));
        }
        let k = self.worlds.len();
        self.index.insert(label.clone(), k);
        self.worlds.push(label);
        Ok(k)
    }

    pub fn declare_agent(&mut self, a: AgentName) {
        self.declared.insert(a);
    }

    pub fn add_edge(&mut self, a: &AgentName, from: usize, to: usize) {
        assert!(from < self.worlds.len() && to < self.worlds.len(), "edge endpoint out of range");
        self.relations.entry(a.clone()).or_default().insert(from, to);
    }

    pub fn add_edge_by_label(&mut self, a: &AgentName, from: &str, to: &str) -> Result<(), ModelError> {
        let s = self.world_index(from).ok_or_else(|| ModelError::UnknownWorld(from.into()))?;
        let t = self.world_index(to).ok_or_else(|| ModelError::UnknownWorld(to.into()))?;
        self.add_edge(a, s, t);
        Ok(())
    }

    /// Replaces an agent's relation wholesale; an empty relation removes it.
    pub fn set_relation(&mut self, a: AgentName, rel: Relation) {
        if rel.is_empty() {
            self.relations.remove(&a);
        } else {
            self.relations.insert(a, rel);
        }
    }

    pub fn set_true(&mut self, fluent: Fluent, world: usize) {
        assert!(world < self.worlds.len(), "world out of range");
        self.valuation.entry(fluent).or_default().insert(world);
    }

    pub fn set_designated(&mut self, world: Option<usize>) {
        if let Some(w) = world {
            assert!(w < self.worlds.len(), "world out of range");
        }
        self.designated = world;
    }

    pub fn designated(&self) -> Option<usize> {
        self.designated
    }

    pub fn world_count(&self) -> usize {
        self.worlds.len()
    }

    pub fn world_label(&self, world: usize) -> &str {
        &self.worlds[world]
    }

    pub fn world_labels(&self) -> &[String] {
        &self.worlds
    }

    pub fn world_index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn resolve_world(&self, label: &str) -> Result<usize, ModelError> {
        self.world_index(label).ok_or_else(|| ModelError::UnknownWorld(label.to_string()))
    }

    /// Declared agents together with every agent that has a nonempty relation.
    pub fn agents(&self) -> BTreeSet<AgentName> {
        let mut out = self.declared.clone();
        out.extend(self.relations.iter().filter(|(_, r)| !r.is_empty()).map(|(a, _)| a.clone()));
        out
    }

    pub fn relation(&self, a: &AgentName) -> Option<&Relation> {
        self.relations.get(a)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&AgentName, &Relation)> {
        self.relations.iter()
    }

    pub fn successors<'a>(&'a self, a: &AgentName, world: usize) -> impl Iterator<Item = usize> + 'a {
        self.relations.get(a).into_iter().flat_map(move |r| r.successors(world))
    }

    pub fn holds(&self, fluent: &Fluent, world: usize) -> bool {
        self.valuation.get(fluent).is_some_and(|ws| ws.contains(&world))
    }

    pub fn valuation(&self) -> &BTreeMap<Fluent, BTreeSet<usize>> {
        &self.valuation
    }

    pub fn fluents(&self) -> impl Iterator<Item = &Fluent> {
        self.valuation.keys()
    }

    /// Transitivity violations; structural consistency is guaranteed by construction.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (a, rel) in &self.relations {
            for (s, v) in rel.missing_for_transitivity() {
                out.push(Violation::NonTransitive {
                    agent: a.to_string(),
                    from: self.worlds[s].clone(),
                    to: self.worlds[v].clone(),
                });
            }
        }
        out
    }

    pub fn is_transitive(&self) -> bool {
        self.relations.values().all(Relation::is_transitive)
    }

    pub fn transitively_closed(&self) -> KripkeModel {
        let mut m = self.clone();
        for rel in m.relations.values_mut() {
            *rel = rel.transitive_closure();
        }
        m
    }

    /// Agents with at least one outgoing arrow at `world`, i.e. where `P_i true` holds.
    pub fn agency(&self, world: usize) -> BTreeSet<AgentName> {
        self.relations.iter().filter(|(_, r)| r.has_successor(world)).map(|(a, _)| a.clone()).collect()
    }

    pub fn agency_at(&self, label: &str) -> Result<BTreeSet<AgentName>, ModelError> {
        Ok(self.agency(self.resolve_world(label)?))
    }

    /// Graphviz rendering. Each agent arrow is drawn as its own directed edge
    /// (a bidirectional pair becomes two edges); agents sharing an arrow are
    /// merged into one comma-separated label.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph kripke {\n  node [shape=circle];\n");
        for (k, label) in self.worlds.iter().enumerate() {
            let facts: Vec<String> = self
                .valuation
                .iter()
                .filter(|(_, ws)| ws.contains(&k))
                .map(|(p, _)| p.to_string())
                .collect();
            let mut text = dot_escape(label);
            if !facts.is_empty() {
                text.push_str("\\n");
                text.push_str(&dot_escape(&facts.join(", ")));
            }
            let shape = if self.designated == Some(k) { ", shape=doublecircle" } else { "" };
            let _ = writeln!(out, "  \"{}\" [label=\"{}\"{}];", dot_escape(label), text, shape);
        }
        let mut edges: BTreeMap<(usize, usize), Vec<&str>> = BTreeMap::new();
        for (a, rel) in &self.relations {
            for (s, t) in rel.pairs() {
                edges.entry((s, t)).or_default().push(a.as_str());
            }
        }
        for ((s, t), agents) in edges {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                dot_escape(&self.worlds[s]),
                dot_escape(&self.worlds[t]),
                dot_escape(&agents.join(","))
            );
        }
        out.push_str("}\n");
        out
    }

    pub fn to_data(&self) -> ModelData {
        ModelData {
            worlds: self.worlds.clone(),
            designated: self.designated.map(|d| self.worlds[d].clone()),
            agents: self.agents().into_iter().map(String::from).collect(),
            groups: BTreeMap::new(),
            relations: self
                .relations
                .iter()
                .filter(|(_, r)| !r.is_empty())
                .map(|(a, r)| {
                    let pairs = r.pairs().map(|(s, t)| (self.worlds[s].clone(), self.worlds[t].clone())).collect();
                    (a.to_string(), pairs)
                })
                .collect(),
            valuation: self
                .valuation
                .iter()
                .filter(|(_, ws)| !ws.is_empty())
                .map(|(p, ws)| (p.to_string(), ws.iter().map(|&w| self.worlds[w].clone()).collect()))
                .collect(),
            notes: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_data()).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        let data: ModelData = serde_json::from_str(text)?;
        KripkeModel::from_data(&data)
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid data: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("{0}")]
    Other(String),
}

/// Group-aware expansion shared by the model and frame loaders: a key naming a
/// group stands for each of its members.
pub(crate) fn expand_agent_key(
    key: &str,
    groups: &BTreeMap<String, Vec<String>>,
    violations: &mut Vec<Violation>,
) -> Vec<AgentName> {
    let names: Vec<&String> = match groups.get(key) {
        Some(members) => members.iter().collect(),
        None => return single_agent(key, violations),
    };
    names.into_iter().flat_map(|n| single_agent(n, violations)).collect()
}

fn single_agent(name: &str, violations: &mut Vec<Violation>) -> Vec<AgentName> {
    match AgentName::new(name) {
        Ok(a) => vec![a],
        Err(_) => {
            violations.push(Violation::InvalidName { name: name.to_string() });
            vec![]
        }
    }
}

/// The JSON model format.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelData {
    pub worlds: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designated: Option<String>,
    #[serde(default)]
    pub agents: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub relations: BTreeMap<String, Vec<(String, String)>>,
    #[serde(default)]
    pub valuation: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<serde_json::Value>,
}

impl ModelData {
    /// Builds the model, returning every structural violation found. Relations
    /// are not required to be transitive here; see [`ModelData::validate`].
    fn build(&self) -> (KripkeModel, Vec<Violation>) {
        let mut violations = Vec::new();
        let mut m = KripkeModel::new();
        for w in &self.worlds {
            if m.add_world(w.clone()).is_err() {
                violations.push(Violation::DuplicateWorld { world: w.clone() });
            }
        }
        for key in &self.agents {
            for a in expand_agent_key(key, &self.groups, &mut violations) {
                m.declare_agent(a);
            }
        }
        for (key, pairs) in &self.relations {
            let members = expand_agent_key(key, &self.groups, &mut violations);
            for (s, t) in pairs {
                let mut ends = [None, None];
                for (slot, w) in ends.iter_mut().zip([s, t]) {
                    *slot = m.world_index(w);
                    if slot.is_none() {
                        violations.push(Violation::DanglingEndpoint { agent: key.clone(), world: w.clone() });
                    }
                }
                if let [Some(si), Some(ti)] = ends {
                    for a in &members {
                        m.add_edge(a, si, ti);
                    }
                }
            }
        }
        for (key, ws) in &self.valuation {
            let fluent = match Fluent::parse(key) {
                Ok(f) => f,
                Err(_) => {
                    violations.push(Violation::InvalidName { name: key.clone() });
                    continue;
                }
            };
            for w in ws {
                match m.world_index(w) {
                    Some(k) => m.set_true(fluent.clone(), k),
                    None => violations.push(Violation::UnknownValuationWorld { fluent: key.clone(), world: w.clone() }),
                }
            }
        }
        if let Some(d) = &self.designated {
            match m.world_index(d) {
                Some(k) => m.set_designated(Some(k)),
                None => violations.push(Violation::UnknownDesignated { world: d.clone() }),
            }
        }
        (m, violations)
    }

    /// Structural and transitivity violations, after group expansion.
    pub fn validate(&self) -> Vec<Violation> {
        let (m, mut violations) = self.build();
        violations.extend(m.validate());
        violations
    }
}

impl KripkeModel {
    /// Loads a model, rejecting structural violations. Non-transitive
    /// relations are accepted and reported by [`KripkeModel::validate`].
    pub fn from_data(data: &ModelData) -> Result<Self, LoadError> {
        let (m, violations) = data.build();
        if violations.is_empty() {
            Ok(m)
        } else {
            Err(LoadError::Invalid(violations))
        }
    }
}
