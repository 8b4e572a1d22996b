//! Seeded random generators for models, frames and formulas, and the
//! scenario runner for the bundled story data.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{load_frame_file, AgentUpdateFrame, ArrowKind, FrameLibrary, FrameLoadError};
use crate::model::{KripkeModel, LoadError, Relation};
use crate::semantics::{model_check, EvalContext, EvalError};
use crate::syntax::{agent, parse_formula, AgentName, Fluent, Formula, Language, PointedFrame, Signature};
use crate::update::{sum_product_update, UpdateError};

/// Size bounds and probability knobs for the generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub max_worlds: usize,
    pub max_agents: usize,
    pub max_events: usize,
    pub fluents: Vec<Fluent>,
    pub modal_depth: usize,
    /// Modal depth of generated preconditions.
    pub pre_depth: usize,
    pub edge_prob: f64,
    pub obs_prob: f64,
    pub add_prob: f64,
    pub del_prob: f64,
    pub post_prob: f64,
    /// Agents outside the base pool that frames may add.
    pub fresh_agents: usize,
    /// Restrict frames to those whose sum-product update needs no closure.
    pub closure_safe: bool,
    /// Allow `add` and `del` arrows at all.
    pub agent_updates: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_worlds: 5,
            max_agents: 3,
            max_events: 3,
            fluents: vec![Fluent::prop("p"), Fluent::prop("q")],
            modal_depth: 3,
            pre_depth: 1,
            edge_prob: 0.35,
            obs_prob: 0.45,
            add_prob: 0.35,
            del_prob: 0.2,
            post_prob: 0.2,
            fresh_agents: 1,
            closure_safe: true,
            agent_updates: true,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        GenConfig { seed, ..GenConfig::default() }
    }

    /// Bounds at least one and probabilities within `[0, 1]`.
    pub fn check(&self) -> Result<(), String> {
        if self.max_worlds == 0 || self.max_agents == 0 || self.max_events == 0 {
            return Err("size bounds must be at least 1".into());
        }
        for (name, p) in [
            ("edge_prob", self.edge_prob),
            ("obs_prob", self.obs_prob),
            ("add_prob", self.add_prob),
            ("del_prob", self.del_prob),
            ("post_prob", self.post_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Base agents `a`, `b`, `c`, ...
    pub fn agent_pool(&self) -> Vec<AgentName> {
        (0..self.max_agents).map(pool_name).collect()
    }

    /// Agents that only frames introduce: `n0`, `n1`, ...
    pub fn fresh_pool(&self) -> Vec<AgentName> {
        (0..self.fresh_agents).map(|k| agent(&format!("n{k}"))).collect()
    }
}

fn pool_name(k: usize) -> AgentName {
    let letters = "abcdefghijklm";
    match letters.chars().nth(k) {
        Some(c) => agent(&c.to_string()),
        None => agent(&format!("a{k}")),
    }
}

/// Deterministic generator: the same configuration yields the same sequence.
pub struct Generator {
    cfg: GenConfig,
    rng: ChaCha8Rng,
}

impl Generator {
    pub fn new(cfg: GenConfig) -> Self {
        cfg.check().expect("invalid generator configuration");
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Generator { cfg, rng }
    }

    pub fn config(&self) -> &GenConfig {
        &self.cfg
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    /// A transitive pointed model over a nonempty prefix of the agent pool.
    pub fn gen_model(&mut self) -> KripkeModel {
        let n = self.rng.gen_range(1..=self.cfg.max_worlds);
        let k = self.rng.gen_range(1..=self.cfg.max_agents);
        let mut m = KripkeModel::with_worlds((0..n).map(|s| format!("s{s}"))).expect("distinct labels");
        for a in self.cfg.agent_pool().into_iter().take(k) {
            m.declare_agent(a.clone());
            let rel: Relation =
                (0..n).flat_map(|s| (0..n).map(move |t| (s, t))).filter(|_| self.chance(self.cfg.edge_prob)).collect();
            m.set_relation(a, rel.transitive_closure());
        }
        for p in self.cfg.fluents.clone() {
            for s in 0..n {
                if self.chance(0.5) {
                    m.set_true(p.clone(), s);
                }
            }
        }
        m.set_designated(Some(0));
        m
    }

    /// An update-free formula of modal depth at most `depth`.
    pub fn gen_el(&mut self, depth: usize) -> Formula {
        self.gen_formula_in(Language::El, depth, &[])
    }

    /// A formula in `lang` (or a smaller language) of modal depth at most
    /// `depth`, whose update modalities refer to the given frames.
    pub fn gen_formula_in(&mut self, lang: Language, depth: usize, frames: &[(String, Arc<AgentUpdateFrame>)]) -> Formula {
        self.formula(lang, depth, 3, frames)
    }

    /// [`Generator::gen_formula_in`] at the configured depth.
    pub fn gen_formula(&mut self, lang: Language, frames: &[(String, Arc<AgentUpdateFrame>)]) -> Formula {
        self.formula(lang, self.cfg.modal_depth, 3, frames)
    }

    fn agent_choice(&mut self) -> AgentName {
        let mut pool = self.cfg.agent_pool();
        pool.extend(self.cfg.fresh_pool());
        pool.choose(&mut self.rng).expect("nonempty pool").clone()
    }

    fn pointed(&mut self, frames: &[(String, Arc<AgentUpdateFrame>)]) -> PointedFrame {
        let (name, frame) = frames.choose(&mut self.rng).expect("frames available");
        let e = self.rng.gen_range(0..frame.event_count());
        PointedFrame::new(name.clone(), frame.event_label(e))
    }

    fn formula(&mut self, lang: Language, depth: usize, size: usize, frames: &[(String, Arc<AgentUpdateFrame>)]) -> Formula {
        let leaf = |g: &mut Generator| {
            if g.chance(0.15) || g.cfg.fluents.is_empty() {
                Formula::Top
            } else {
                Formula::Atom(g.cfg.fluents.choose(&mut g.rng).expect("fluents").clone())
            }
        };
        if size == 0 && depth == 0 {
            return leaf(self);
        }
        let updates = lang >= Language::DelMinus && !frames.is_empty();
        let mut choices: Vec<u8> = vec![0];
        if size > 0 {
            choices.extend([1, 2, 2]);
        }
        if depth > 0 {
            choices.extend([3, 3]);
            if updates {
                choices.extend([4, 4]);
            }
            if updates && lang == Language::Del {
                choices.push(5);
            }
        }
        match *choices.choose(&mut self.rng).expect("nonempty") {
            1 => Formula::not(self.formula(lang, depth, size - 1, frames)),
            2 => {
                let a = self.formula(lang, depth, size - 1, frames);
                let b = self.formula(lang, depth, size - 1, frames);
                Formula::and(a, b)
            }
            3 => {
                let i = self.agent_choice();
                let body = self.formula(lang, depth - 1, size, frames);
                if self.chance(0.5) {
                    Formula::possible(i, body)
                } else {
                    Formula::belief(i, body)
                }
            }
            4 => {
                let pf = self.pointed(frames);
                let body = self.formula(lang, depth - 1, size, frames);
                if self.chance(0.5) {
                    Formula::diamond(pf, body)
                } else {
                    Formula::boxed(pf, body)
                }
            }
            5 => {
                let k = self.rng.gen_range(2..=3);
                let pfs = (0..k).map(|_| self.pointed(frames)).collect();
                let body = self.formula(lang, depth - 1, size, frames);
                Formula::union(pfs, body)
            }
            _ => leaf(self),
        }
    }

    fn gen_pre(&mut self) -> Formula {
        if self.chance(0.5) {
            Formula::Top
        } else {
            let d = self.cfg.pre_depth;
            self.formula(Language::El, d, 1, &[])
        }
    }

    /// A valid frame with at most `max_events` events over the agent pool;
    /// `add` arrows may also name fresh agents.
    pub fn gen_frame(&mut self) -> AgentUpdateFrame {
        let n = self.rng.gen_range(1..=self.cfg.max_events);
        let mut u = AgentUpdateFrame::with_events((0..n).map(|e| format!("e{e}"))).expect("distinct labels");
        for e in 0..n {
            let pre = self.gen_pre();
            u.set_pre(e, pre);
            for p in self.cfg.fluents.clone() {
                if self.chance(self.cfg.post_prob) {
                    let v = self.chance(0.5);
                    u.set_post(e, p, v);
                }
            }
        }
        if self.cfg.closure_safe {
            self.safe_arrows(&mut u, n);
            debug_assert!(u.closure_safe(), "{:?}", u.closure_hazard());
        } else {
            self.free_arrows(&mut u, n);
        }
        u.set_designated(Some(self.rng.gen_range(0..n)));
        u
    }

    fn free_arrows(&mut self, u: &mut AgentUpdateFrame, n: usize) {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|e| (0..n).map(move |f| (e, f))).collect();
        for a in self.cfg.agent_pool() {
            for &(e, f) in &pairs {
                if self.chance(self.cfg.obs_prob) {
                    u.add_arrow(ArrowKind::Obs, &a, e, f);
                }
            }
        }
        if !self.cfg.agent_updates {
            return;
        }
        let mut everyone = self.cfg.agent_pool();
        everyone.extend(self.cfg.fresh_pool());
        for a in everyone {
            for &(e, f) in &pairs {
                if self.chance(self.cfg.add_prob / n as f64) {
                    u.add_arrow(ArrowKind::Add, &a, e, f);
                }
                if self.chance(self.cfg.del_prob / n as f64) {
                    u.add_arrow(ArrowKind::Del, &a, e, f);
                }
            }
        }
    }

    /// Arrows satisfying [`AgentUpdateFrame::closure_safe`]: per agent, the
    /// events split into ones that add the agent and ones that do not; the
    /// undeleted obs arrows form a transitive relation among the latter, and
    /// sum arrows go only to the adding event itself or to events without
    /// outgoing obs arrows of that agent.
    fn safe_arrows(&mut self, u: &mut AgentUpdateFrame, n: usize) {
        let pool = self.cfg.agent_pool();
        let fresh = self.cfg.fresh_pool();
        let updates = self.cfg.agent_updates;
        let mut adding: BTreeMap<AgentName, Vec<bool>> = BTreeMap::new();
        let mut kept_rel: BTreeMap<AgentName, Relation> = BTreeMap::new();
        for a in pool.iter().chain(&fresh) {
            let is_fresh = fresh.contains(a);
            let added: Vec<bool> = (0..n).map(|_| updates && self.chance(if is_fresh { (2.0 * self.cfg.add_prob).min(1.0) } else { self.cfg.add_prob })).collect();
            let normal: Vec<usize> = (0..n).filter(|&e| !added[e]).collect();
            let mut kept = Relation::new();
            if !is_fresh {
                for &e in &normal {
                    for &f in &normal {
                        if self.chance(self.cfg.obs_prob) {
                            kept.insert(e, f);
                        }
                    }
                }
                kept = kept.transitive_closure();
                for (e, f) in kept.pairs() {
                    u.add_arrow(ArrowKind::Obs, a, e, f);
                }
                if updates {
                    for &e in &normal {
                        for f in 0..n {
                            if !kept.contains(e, f) && self.chance(self.cfg.del_prob / n as f64) {
                                u.add_arrow(ArrowKind::Del, a, e, f);
                                if self.chance(0.5) {
                                    u.add_arrow(ArrowKind::Obs, a, e, f);
                                }
                            }
                        }
                    }
                }
            }
            adding.insert(a.clone(), added);
            kept_rel.insert(a.clone(), kept);
        }
        if !updates {
            return;
        }
        let observers: Vec<BTreeSet<AgentName>> = (0..n).map(|e| u.observers_at(e)).collect();
        for (a, added) in &adding {
            let kept = &kept_rel[a];
            // Ignored sum arrows at events that also delete the agent.
            let deleting: Vec<usize> = (0..n).filter(|&e| !added[e] && u.del_set_at(e).contains(a)).collect();
            for e in deleting {
                if self.chance(self.cfg.add_prob) {
                    let f = self.rng.gen_range(0..n);
                    u.add_arrow(ArrowKind::Add, a, e, f);
                }
            }
            for e in (0..n).filter(|&e| added[e]) {
                if observers[e].len() > 1 {
                    continue;
                }
                let mut targets = vec![e];
                if observers[e].is_empty() {
                    let dead_ends = (0..n).filter(|&f| f != e && !added[f] && !kept.has_successor(f));
                    for f in dead_ends.collect::<Vec<_>>() {
                        if self.chance(0.5) {
                            targets.push(f);
                        }
                    }
                    if targets.len() > 1 && self.chance(0.5) {
                        targets.remove(0);
                    }
                }
                for f in targets {
                    u.add_arrow(ArrowKind::Add, a, e, f);
                }
            }
        }
    }

    /// `count` frames named `F0`, `F1`, ... in a library.
    pub fn gen_library(&mut self, count: usize) -> (FrameLibrary, Vec<(String, Arc<AgentUpdateFrame>)>) {
        let mut lib = FrameLibrary::new();
        let mut list = Vec::new();
        for k in 0..count {
            let name = format!("F{k}");
            let frame = lib.insert(name.clone(), self.gen_frame());
            list.push((name, frame));
        }
        (lib, list)
    }
}

/// An assertion: `formula` evaluated at the designated world after `step` updates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    pub step: usize,
    pub formula: String,
    pub expected: bool,
}

/// A structural fact about a frame event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCheck {
    pub frame: String,
    pub event: String,
    pub set: FrameSet,
    pub expected: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameSet {
    Add,
    Del,
    Observers,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub frame: String,
    pub event: String,
}

/// Scenario file: paths are relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub model: String,
    /// Frame names and their files; steps and formulas refer to the names.
    #[serde(default)]
    pub frames: BTreeMap<String, String>,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
    #[serde(default)]
    pub frame_checks: Vec<FrameCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<serde_json::Value>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error(transparent)]
    Frame(#[from] FrameLoadError),
    #[error("step {step}: {source}")]
    Update {
        step: usize,
        #[source]
        source: UpdateError,
    },
    #[error("assertion `{formula}`: {source}")]
    Eval {
        formula: String,
        #[source]
        source: EvalError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssertionResult {
    pub step: usize,
    pub world: String,
    pub formula: String,
    pub expected: bool,
    pub actual: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameCheckResult {
    pub frame: String,
    pub event: String,
    pub set: FrameSet,
    pub expected: BTreeSet<String>,
    pub actual: BTreeSet<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub assertions: Vec<AssertionResult>,
    pub frame_checks: Vec<FrameCheckResult>,
    /// Every sum-product result along the chain is transitive.
    pub transitive: bool,
    pub passed: bool,
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
}

/// Directory holding the bundled scenarios.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

/// Path of a bundled scenario by name, e.g. `gruffalo` or `dorm-warden`.
pub fn bundled_scenario(name: &str) -> PathBuf {
    bundled_dir().join(format!("{name}.json"))
}

/// A loaded scenario: model, frame library and the chain of steps.
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub model: Arc<KripkeModel>,
    pub ctx: EvalContext,
    pub signature: Signature,
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let invalid = |p: &Path, message: String| ScenarioError::Invalid { path: p.to_path_buf(), message };
    let scenario: Scenario = serde_json::from_str(&read(path)?).map_err(|e| invalid(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let model_path = base.join(&scenario.model);
    let model = KripkeModel::from_json(&read(&model_path)?).map_err(|e: LoadError| invalid(&model_path, e.to_string()))?;
    let violations = model.validate();
    if !violations.is_empty() {
        let text = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(invalid(&model_path, text));
    }
    let mut signature = Signature::new();
    signature.declare_all(model.fluents()).map_err(|e| invalid(&model_path, e.to_string()))?;
    let mut frames = FrameLibrary::new();
    for (name, file) in &scenario.frames {
        let frame = load_frame_file(&base.join(file), &signature)?;
        for e in 0..frame.event_count() {
            let _ = signature.declare_all(&frame.pre(e).fluents());
            let _ = signature.declare_all(frame.post(e).keys());
        }
        frames.insert(name.clone(), frame);
    }
    for (k, step) in scenario.steps.iter().enumerate() {
        let frame = frames.get(&step.frame).ok_or_else(|| invalid(path, format!("step {}: unknown frame `{}`", k + 1, step.frame)))?;
        if frame.event_index(&step.event).is_none() {
            return Err(invalid(path, format!("step {}: frame `{}` has no event `{}`", k + 1, step.frame, step.event)));
        }
    }
    for a in &scenario.assertions {
        if a.step > scenario.steps.len() {
            return Err(invalid(path, format!("assertion `{}` refers to step {} of {}", a.formula, a.step, scenario.steps.len())));
        }
    }
    Ok(LoadedScenario { scenario, model: Arc::new(model), ctx: EvalContext::new(frames), signature })
}

/// Applies the steps one by one and evaluates every assertion at the
/// designated world of its step.
pub fn run_scenario(path: &Path) -> Result<ScenarioReport, ScenarioError> {
    let loaded = load_scenario(path)?;
    run_loaded(&loaded)
}

pub fn run_loaded(loaded: &LoadedScenario) -> Result<ScenarioReport, ScenarioError> {
    let sc = &loaded.scenario;
    let start = loaded.model.designated().unwrap_or(0);
    let mut chain: Vec<(Arc<KripkeModel>, usize)> = vec![(Arc::clone(&loaded.model), start)];
    let mut transitive = true;
    for (k, step) in sc.steps.iter().enumerate() {
        let frame = loaded.ctx.frame(&step.frame).expect("checked at load");
        let e = frame.event_index(&step.event).expect("checked at load");
        let (model, world) = chain.last().expect("nonempty chain").clone();
        let result = sum_product_update(&model, frame).map_err(|source| ScenarioError::Update { step: k + 1, source })?;
        transitive &= result.model.validate().is_empty();
        let next = result.world(world, e).ok_or(ScenarioError::Update {
            step: k + 1,
            source: UpdateError::PreconditionFailed { step: k + 1, event: step.event.clone() },
        })?;
        chain.push((Arc::clone(&result.model), next));
    }
    let mut assertions = Vec::new();
    for a in &sc.assertions {
        let phi = parse_formula(&a.formula, &loaded.signature)
            .map_err(|e| ScenarioError::Invalid { path: PathBuf::from(&sc.name), message: format!("`{}`: {e}", a.formula) })?;
        let (model, world) = &chain[a.step];
        let actual = model_check(model, *world, &phi, &loaded.ctx)
            .map_err(|source| ScenarioError::Eval { formula: a.formula.clone(), source })?;
        assertions.push(AssertionResult {
            step: a.step,
            world: model.world_label(*world).to_string(),
            formula: a.formula.clone(),
            expected: a.expected,
            actual,
            passed: actual == a.expected,
        });
    }
    transitive &= loaded.ctx.cached_results().iter().all(|r| r.model.validate().is_empty());
    let mut frame_checks = Vec::new();
    for c in &sc.frame_checks {
        let frame = loaded
            .ctx
            .frame(&c.frame)
            .map_err(|e| ScenarioError::Invalid { path: PathBuf::from(&sc.name), message: e.to_string() })?;
        let e = frame.resolve_event(&c.event).map_err(|e| ScenarioError::Invalid {
            path: PathBuf::from(&sc.name),
            message: e.to_string(),
        })?;
        let actual_set = match c.set {
            FrameSet::Add => frame.add_set_at(e),
            FrameSet::Del => frame.del_set_at(e),
            FrameSet::Observers => frame.observers_at(e),
        };
        let actual: BTreeSet<String> = actual_set.into_iter().map(String::from).collect();
        frame_checks.push(FrameCheckResult {
            frame: c.frame.clone(),
            event: c.event.clone(),
            set: c.set,
            passed: actual == c.expected,
            expected: c.expected.clone(),
            actual,
        });
    }
    let passed = transitive && assertions.iter().all(|a| a.passed) && frame_checks.iter().all(|c| c.passed);
    Ok(ScenarioReport { name: sc.name.clone(), assertions, frame_checks, transitive, passed })
}
