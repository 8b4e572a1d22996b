//! Action frames and agent-update frames: events with per-agent observability
//! (`obs`), sum (`add`) and difference (`del`) relations, preconditions and
//! postconditions. A plain action frame is one whose `add` and `del` are empty.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{expand_agent_key, LoadError, Relation, Violation};
use crate::syntax::{parse_formula, AgentName, Fluent, Formula, FrameSizes, Signature};

/// Per-fluent assignment of an event; fluents not listed keep their value.
pub type Postcondition = BTreeMap<Fluent, bool>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrowKind {
    Obs,
    Add,
    Del,
}

impl fmt::Display for ArrowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArrowKind::Obs => "obs",
            ArrowKind::Add => "add",
            ArrowKind::Del => "del",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FrameViolation {
    DuplicateEvent { event: String },
    DanglingEvent { relation: ArrowKind, agent: String, event: String },
    UnknownEvent { event: String },
    NonElPrecondition { event: String },
    BadPrecondition { event: String, message: String },
    Arity { event: String, message: String },
    InvalidName { name: String },
}

impl fmt::Display for FrameViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameViolation::DuplicateEvent { event } => write!(f, "duplicate event `{event}`"),
            FrameViolation::DanglingEvent { relation, agent, event } => {
                write!(f, "{relation} relation of `{agent}` mentions unknown event `{event}`")
            }
            FrameViolation::UnknownEvent { event } => write!(f, "unknown event `{event}`"),
            FrameViolation::NonElPrecondition { event } => {
                write!(f, "precondition of `{event}` contains an update modality")
            }
            FrameViolation::BadPrecondition { event, message } => {
                write!(f, "precondition of `{event}`: {message}")
            }
            FrameViolation::Arity { event, message } => write!(f, "event `{event}`: {message}"),
            FrameViolation::InvalidName { name } => write!(f, "`{name}` is not a valid name"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown event `{0}`")]
pub struct UnknownEvent(pub String);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentUpdateFrame {
    events: Vec<String>,
    index: HashMap<String, usize>,
    obs: BTreeMap<AgentName, Relation>,
    add: BTreeMap<AgentName, Relation>,
    del: BTreeMap<AgentName, Relation>,
    pre: Vec<Formula>,
    post: Vec<Postcondition>,
    designated: Option<usize>,
}

impl AgentUpdateFrame {
    /// Events with precondition `true`, no postconditions and no arrows.
    pub fn with_events<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, FrameViolation> {
        let mut u = AgentUpdateFrame::default();
        for l in labels {
            let l = l.into();
            if u.index.contains_key(&l) {
                return Err(FrameViolation::DuplicateEvent { event: l });
            }
            u.index.insert(l.clone(), u.events.len());
            u.events.push(l);
            u.pre.push(Formula::Top);
            u.post.push(Postcondition::new());
        }
        Ok(u)
    }

    /// One event `u` with `pre`, observed by every listed agent through a self-loop.
    pub fn announcement(pre: Formula, agents: impl IntoIterator<Item = AgentName>) -> Self {
        let mut u = AgentUpdateFrame::with_events(["u"]).expect("single event");
        for a in agents {
            u.add_arrow(ArrowKind::Obs, &a, 0, 0);
        }
        u.set_pre(0, pre);
        u.set_designated(Some(0));
        u
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    pub fn event_label(&self, e: usize) -> &str {
        &self.events[e]
    }

    pub fn event_labels(&self) -> &[String] {
        &self.events
    }

    pub fn event_index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn resolve_event(&self, label: &str) -> Result<usize, UnknownEvent> {
        self.event_index(label).ok_or_else(|| UnknownEvent(label.to_string()))
    }

    pub fn designated(&self) -> Option<usize> {
        self.designated
    }

    pub fn set_designated(&mut self, e: Option<usize>) {
        if let Some(e) = e {
            assert!(e < self.events.len(), "event out of range");
        }
        self.designated = e;
    }

    fn arrows_mut(&mut self, kind: ArrowKind) -> &mut BTreeMap<AgentName, Relation> {
        match kind {
            ArrowKind::Obs => &mut self.obs,
            ArrowKind::Add => &mut self.add,
            ArrowKind::Del => &mut self.del,
        }
    }

    pub fn arrows(&self, kind: ArrowKind) -> &BTreeMap<AgentName, Relation> {
        match kind {
            ArrowKind::Obs => &self.obs,
            ArrowKind::Add => &self.add,
            ArrowKind::Del => &self.del,
        }
    }

    pub fn add_arrow(&mut self, kind: ArrowKind, a: &AgentName, from: usize, to: usize) {
        assert!(from < self.events.len() && to < self.events.len(), "event out of range");
        self.arrows_mut(kind).entry(a.clone()).or_default().insert(from, to);
    }

    fn relation(&self, kind: ArrowKind, a: &AgentName) -> Option<&Relation> {
        self.arrows(kind).get(a)
    }

    pub fn has_arrow(&self, kind: ArrowKind, a: &AgentName, from: usize, to: usize) -> bool {
        self.relation(kind, a).is_some_and(|r| r.contains(from, to))
    }

    pub fn targets<'a>(&'a self, kind: ArrowKind, a: &AgentName, from: usize) -> impl Iterator<Item = usize> + 'a {
        self.relation(kind, a).into_iter().flat_map(move |r| r.successors(from))
    }

    pub fn set_pre(&mut self, e: usize, pre: Formula) {
        self.pre[e] = pre;
    }

    pub fn pre(&self, e: usize) -> &Formula {
        &self.pre[e]
    }

    pub fn set_post(&mut self, e: usize, fluent: Fluent, value: bool) {
        self.post[e].insert(fluent, value);
    }

    pub fn post(&self, e: usize) -> &Postcondition {
        &self.post[e]
    }

    /// Every agent mentioned by an `obs`, `add` or `del` arrow.
    pub fn agents(&self) -> BTreeSet<AgentName> {
        [&self.obs, &self.add, &self.del]
            .into_iter()
            .flat_map(|m| m.iter().filter(|(_, r)| !r.is_empty()).map(|(a, _)| a.clone()))
            .collect()
    }

    pub fn is_action_frame(&self) -> bool {
        self.add.values().all(Relation::is_empty) && self.del.values().all(Relation::is_empty)
    }

    fn agents_with_arrow_from(&self, kind: ArrowKind, e: usize) -> BTreeSet<AgentName> {
        self.arrows(kind).iter().filter(|(_, r)| r.has_successor(e)).map(|(a, _)| a.clone()).collect()
    }

    /// Agents with a sum arrow leaving event `e`.
    pub fn add_set_at(&self, e: usize) -> BTreeSet<AgentName> {
        self.agents_with_arrow_from(ArrowKind::Add, e)
    }

    /// Agents with a difference arrow leaving event `e`.
    pub fn del_set_at(&self, e: usize) -> BTreeSet<AgentName> {
        self.agents_with_arrow_from(ArrowKind::Del, e)
    }

    /// Agents whose only observability arrow at `e` is the self-loop.
    pub fn observers_at(&self, e: usize) -> BTreeSet<AgentName> {
        self.obs
            .iter()
            .filter(|(_, r)| {
                let mut succ = r.successors(e);
                succ.next() == Some(e) && succ.next().is_none()
            })
            .map(|(a, _)| a.clone())
            .collect()
    }

    /// `Add(e) \ Del(e)`: the agents that receive ascribed and inherited arrows at `e`.
    pub fn effectively_added_at(&self, e: usize) -> BTreeSet<AgentName> {
        let del = self.del_set_at(e);
        self.add_set_at(e).into_iter().filter(|a| !del.contains(a)).collect()
    }

    pub fn add_set(&self, event: &str) -> Result<BTreeSet<AgentName>, UnknownEvent> {
        Ok(self.add_set_at(self.resolve_event(event)?))
    }

    pub fn del_set(&self, event: &str) -> Result<BTreeSet<AgentName>, UnknownEvent> {
        Ok(self.del_set_at(self.resolve_event(event)?))
    }

    pub fn observers(&self, event: &str) -> Result<BTreeSet<AgentName>, UnknownEvent> {
        Ok(self.observers_at(self.resolve_event(event)?))
    }

    /// events + agents + 3·|A|·|E|² + precondition lengths + postcondition entries.
    pub fn size(&self) -> usize {
        let e = self.events.len();
        let a = self.agents().len();
        let pre: usize = self.pre.iter().map(Formula::node_count).sum();
        let post: usize = self.post.iter().map(BTreeMap::len).sum();
        e + a + 3 * a * e * e + pre + post
    }

    /// Checks preconditions are update-free and, when a signature is given,
    /// that every fluent in pre- and postconditions respects it.
    pub fn validate(&self, signature: Option<&Signature>) -> Vec<FrameViolation> {
        let mut out = Vec::new();
        for (e, pre) in self.pre.iter().enumerate() {
            if !pre.is_el() {
                out.push(FrameViolation::NonElPrecondition { event: self.events[e].clone() });
            }
        }
        if let Some(sig) = signature {
            for e in 0..self.events.len() {
                let fluents = self.pre[e].fluents().into_iter().chain(self.post[e].keys().cloned());
                for fl in fluents {
                    if let Err(err) = sig.check(&fl) {
                        out.push(FrameViolation::Arity { event: self.events[e].clone(), message: err.to_string() });
                    }
                }
            }
        }
        out
    }

    /// Whether the sum-product update of any transitive model by this frame
    /// is already transitive before closure, agent by agent. Under this
    /// condition the one-step reduction equivalences for belief under update
    /// are truth-preserving; without it, the closure can create arrows that
    /// no single frame arrow accounts for.
    pub fn closure_safe(&self) -> bool {
        self.closure_hazard().is_none()
    }

    /// The first reason the frame fails [`AgentUpdateFrame::closure_safe`].
    pub fn closure_hazard(&self) -> Option<String> {
        let n = self.events.len();
        let observers: Vec<BTreeSet<AgentName>> = (0..n).map(|e| self.observers_at(e)).collect();
        let empty = Relation::new();
        for a in self.agents() {
            let obs = self.obs.get(&a).unwrap_or(&empty);
            let del = self.del.get(&a).unwrap_or(&empty);
            let add = self.add.get(&a).unwrap_or(&empty);
            let kept: Relation = obs.pairs().filter(|&(u, v)| !del.contains(u, v)).collect();
            let added: Vec<bool> = (0..n).map(|e| add.has_successor(e) && !del.has_successor(e)).collect();
            if !kept.is_transitive() {
                return Some(format!("undeleted obs arrows of `{a}` are not transitive"));
            }
            for (u, v) in kept.pairs() {
                if added[u] || added[v] {
                    return Some(format!(
                        "obs arrow of `{a}` from {} to {} touches an event adding `{a}`",
                        self.events[u], self.events[v]
                    ));
                }
            }
            for u in (0..n).filter(|&u| added[u]) {
                let targets: BTreeSet<usize> = add.successors(u).collect();
                if observers[u].len() > 1 {
                    return Some(format!("event {} adds `{a}` with several observers", self.events[u]));
                }
                if !observers[u].is_empty() && targets.iter().any(|&w| w != u) {
                    return Some(format!(
                        "event {} adds `{a}` with an observer and a sum arrow to another event",
                        self.events[u]
                    ));
                }
                for &w in targets.iter().filter(|&&w| w != u) {
                    if added[w] {
                        let sub = add.successors(w).all(|x| targets.contains(&x));
                        if !observers[w].is_empty() || !sub {
                            return Some(format!(
                                "sum arrows of `{a}` from {} to {} do not compose",
                                self.events[u], self.events[w]
                            ));
                        }
                    } else if kept.has_successor(w) {
                        return Some(format!(
                            "sum arrow of `{a}` reaches {} which has obs arrows",
                            self.events[w]
                        ));
                    }
                }
            }
        }
        None
    }

    pub fn to_data(&self) -> FrameData {
        let rel_data = |m: &BTreeMap<AgentName, Relation>| -> BTreeMap<String, Vec<(String, String)>> {
            m.iter()
                .filter(|(_, r)| !r.is_empty())
                .map(|(a, r)| {
                    let pairs = r.pairs().map(|(u, v)| (self.events[u].clone(), self.events[v].clone())).collect();
                    (a.to_string(), pairs)
                })
                .collect()
        };
        FrameData {
            events: self.events.clone(),
            designated: self.designated.map(|d| self.events[d].clone()),
            groups: BTreeMap::new(),
            obs: rel_data(&self.obs),
            add: rel_data(&self.add),
            del: rel_data(&self.del),
            pre: self
                .pre
                .iter()
                .enumerate()
                .filter(|(_, p)| **p != Formula::Top)
                .map(|(e, p)| (self.events[e].clone(), p.to_string()))
                .collect(),
            post: self
                .post
                .iter()
                .enumerate()
                .filter(|(_, p)| !p.is_empty())
                .map(|(e, p)| {
                    let entries = p.iter().map(|(fl, v)| (fl.to_string(), PostValue::from(*v))).collect();
                    (self.events[e].clone(), entries)
                })
                .collect(),
            notes: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_data()).expect("frame serialization cannot fail")
    }

    pub fn from_json(text: &str, signature: &Signature) -> Result<Self, LoadError> {
        let data: FrameData = serde_json::from_str(text)?;
        AgentUpdateFrame::from_data(&data, signature)
    }

    /// Builds a frame, rejecting every violation found (dangling events, bad
    /// names, unparsable or non-EL preconditions, arity clashes).
    pub fn from_data(data: &FrameData, signature: &Signature) -> Result<Self, LoadError> {
        let (frame, violations) = data.build(signature);
        match frame {
            Some(f) if violations.is_empty() => Ok(f),
            _ => Err(LoadError::Other(
                violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
            )),
        }
    }
}

/// `validate_frame`: see [`AgentUpdateFrame::validate`].
pub fn validate_frame(frame: &AgentUpdateFrame, signature: Option<&Signature>) -> Vec<FrameViolation> {
    frame.validate(signature)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostValue {
    True,
    False,
    No,
}

impl From<bool> for PostValue {
    fn from(b: bool) -> Self {
        if b {
            PostValue::True
        } else {
            PostValue::False
        }
    }
}

/// The JSON frame format.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameData {
    pub events: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designated: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub obs: BTreeMap<String, Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub add: BTreeMap<String, Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub del: BTreeMap<String, Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pre: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub post: BTreeMap<String, BTreeMap<String, PostValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<serde_json::Value>,
}

impl FrameData {
    fn build(&self, signature: &Signature) -> (Option<AgentUpdateFrame>, Vec<FrameViolation>) {
        let mut violations = Vec::new();
        let mut seen = BTreeSet::new();
        for e in &self.events {
            if !seen.insert(e) {
                violations.push(FrameViolation::DuplicateEvent { event: e.clone() });
            }
        }
        let unique: Vec<&String> = {
            let mut s = BTreeSet::new();
            self.events.iter().filter(|e| s.insert(*e)).collect()
        };
        let mut frame = match AgentUpdateFrame::with_events(unique.into_iter().cloned()) {
            Ok(f) => f,
            Err(v) => return (None, vec![v]),
        };
        for (kind, map) in [(ArrowKind::Obs, &self.obs), (ArrowKind::Add, &self.add), (ArrowKind::Del, &self.del)] {
            for (key, pairs) in map {
                let mut names = Vec::new();
                let members = expand_agent_key(key, &self.groups, &mut names);
                violations.extend(names.into_iter().map(|v| match v {
                    Violation::InvalidName { name } => FrameViolation::InvalidName { name },
                    other => FrameViolation::InvalidName { name: other.to_string() },
                }));
                for (u, v) in pairs {
                    let ends = [u, v].map(|e| {
                        let k = frame.event_index(e);
                        if k.is_none() {
                            violations.push(FrameViolation::DanglingEvent {
                                relation: kind,
                                agent: key.clone(),
                                event: e.clone(),
                            });
                        }
                        k
                    });
                    if let [Some(ui), Some(vi)] = ends {
                        for a in &members {
                            frame.add_arrow(kind, a, ui, vi);
                        }
                    }
                }
            }
        }
        let mut sig = signature.clone();
        for (e, text) in &self.pre {
            let Some(k) = frame.event_index(e) else {
                violations.push(FrameViolation::UnknownEvent { event: e.clone() });
                continue;
            };
            match parse_formula(text, &sig) {
                Ok(phi) => {
                    if let Err(err) = sig.declare_all(&phi.fluents()) {
                        violations.push(FrameViolation::Arity { event: e.clone(), message: err.to_string() });
                    }
                    frame.set_pre(k, phi);
                }
                Err(err) => violations.push(FrameViolation::BadPrecondition { event: e.clone(), message: err.to_string() }),
            }
        }
        for (e, entries) in &self.post {
            let Some(k) = frame.event_index(e) else {
                violations.push(FrameViolation::UnknownEvent { event: e.clone() });
                continue;
            };
            for (key, value) in entries {
                let fl = match Fluent::parse(key) {
                    Ok(fl) => fl,
                    Err(_) => {
                        violations.push(FrameViolation::InvalidName { name: key.clone() });
                        continue;
                    }
                };
                if let Err(err) = sig.declare(&fl) {
                    violations.push(FrameViolation::Arity { event: e.clone(), message: err.to_string() });
                }
                match value {
                    PostValue::True => frame.set_post(k, fl, true),
                    PostValue::False => frame.set_post(k, fl, false),
                    PostValue::No => {}
                }
            }
        }
        if let Some(d) = &self.designated {
            match frame.event_index(d) {
                Some(k) => frame.set_designated(Some(k)),
                None => violations.push(FrameViolation::UnknownEvent { event: d.clone() }),
            }
        }
        violations.extend(frame.validate(None));
        (Some(frame), violations)
    }

    /// Every violation of the file, after group expansion.
    pub fn validate(&self, signature: &Signature) -> Vec<FrameViolation> {
        self.build(signature).1
    }
}

#[derive(Debug, Error)]
pub enum FrameLoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: LoadError,
    },
}

/// Named frames that update modalities refer to.
#[derive(Debug, Clone, Default)]
pub struct FrameLibrary {
    frames: BTreeMap<String, Arc<AgentUpdateFrame>>,
}

impl FrameLibrary {
    pub fn new() -> Self {
        FrameLibrary::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, frame: AgentUpdateFrame) -> Arc<AgentUpdateFrame> {
        let frame = Arc::new(frame);
        self.frames.insert(name.into(), Arc::clone(&frame));
        frame
    }

    pub fn get(&self, name: &str) -> Option<&Arc<AgentUpdateFrame>> {
        self.frames.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.frames.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.frames.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arc<AgentUpdateFrame>)> {
        self.frames.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Loads `<dir>/<name>.json` under `name`.
    pub fn load(&mut self, dir: &Path, name: &str, signature: &Signature) -> Result<Arc<AgentUpdateFrame>, FrameLoadError> {
        let path = dir.join(format!("{name}.json"));
        let frame = load_frame_file(&path, signature)?;
        Ok(self.insert(name, frame))
    }

    /// Loads every frame the formula refers to that is not already present.
    pub fn load_referenced(&mut self, dir: &Path, phi: &Formula, signature: &Signature) -> Result<(), FrameLoadError> {
        for name in phi.frame_refs() {
            if !self.contains(&name) {
                self.load(dir, &name, signature)?;
            }
        }
        Ok(())
    }
}

impl FrameSizes for FrameLibrary {
    fn frame_size(&self, name: &str) -> Option<usize> {
        self.get(name).map(|f| f.size())
    }
}

pub fn load_frame_file(path: &Path, signature: &Signature) -> Result<AgentUpdateFrame, FrameLoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| FrameLoadError::Io { path: path.to_path_buf(), source })?;
    AgentUpdateFrame::from_json(&text, signature).map_err(|source| FrameLoadError::Data { path: path.to_path_buf(), source })
}
