//! Instances of the axiom schemas and inference rules of the proof system,
//! and an empirical soundness check over random transitive models.
//!
//! Schemas 1 to 9 are the axioms, 10 to 12 the rules (modus ponens,
//! necessitation for belief and for updates) and 13 the union axiom. Rules
//! are exercised on premises that are themselves generated axiom instances:
//! whenever the premises are valid on a model, so must the conclusion be.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::frames::{AgentUpdateFrame, ArrowKind, FrameLibrary};
use crate::model::KripkeModel;
use crate::semantics::{falsifying_worlds, EvalContext, EvalError};
use crate::syntax::{AgentName, Fluent, Formula, Language, PointedFrame};
use crate::testkit::{GenConfig, Generator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Schema {
    /// 1: propositional tautologies.
    #[serde(rename = "1-taut")]
    Tautology,
    /// 2: `B[a](φ -> ψ) -> (B[a] φ -> B[a] ψ)`.
    #[serde(rename = "2-k")]
    K,
    /// 3: `B[a] φ -> B[a] B[a] φ`.
    #[serde(rename = "3-four")]
    Four,
    /// 4: `[U@u](φ -> ψ) -> ([U@u] φ -> [U@u] ψ)`.
    #[serde(rename = "4-update-k")]
    UpdateK,
    /// 5: `<U@u> p <-> pre(u) & ((p & no) | set)`.
    #[serde(rename = "5-atom")]
    Atom,
    /// 6: `<U@u> ~φ <-> pre(u) & ~<U@u> φ`.
    #[serde(rename = "6-negation")]
    Negation,
    /// 7: `<U@u>(φ | ψ) <-> <U@u> φ | <U@u> ψ`.
    #[serde(rename = "7-disjunction")]
    Disjunction,
    /// 8: belief of an agent not added at `u`.
    #[serde(rename = "8-unforgotten")]
    Unforgotten,
    /// 9: belief of an agent added at `u`.
    #[serde(rename = "9-added")]
    Added,
    /// 10: from `φ` and `φ -> ψ` infer `ψ`.
    #[serde(rename = "10-mp")]
    ModusPonens,
    /// 11: from `φ` infer `B[a] φ`.
    #[serde(rename = "11-nec-belief")]
    NecBelief,
    /// 12: from `φ` infer `[U@u] φ`.
    #[serde(rename = "12-nec-update")]
    NecUpdate,
    /// 13: `<U1@u1 + ... > φ <-> <U1@u1> φ | ...`.
    #[serde(rename = "13-union")]
    Union,
    /// `[U@u](φ <-> ψ) -> ([U@u] φ <-> [U@u] ψ)`.
    #[serde(rename = "iff-distributivity")]
    IffDistributivity,
}

impl Schema {
    pub const ALL: [Schema; 14] = [
        Schema::Tautology,
        Schema::K,
        Schema::Four,
        Schema::UpdateK,
        Schema::Atom,
        Schema::Negation,
        Schema::Disjunction,
        Schema::Unforgotten,
        Schema::Added,
        Schema::ModusPonens,
        Schema::NecBelief,
        Schema::NecUpdate,
        Schema::Union,
        Schema::IffDistributivity,
    ];

    /// The axioms proper, excluding the rules.
    pub const AXIOMS: [Schema; 11] = [
        Schema::Tautology,
        Schema::K,
        Schema::Four,
        Schema::UpdateK,
        Schema::Atom,
        Schema::Negation,
        Schema::Disjunction,
        Schema::Unforgotten,
        Schema::Added,
        Schema::Union,
        Schema::IffDistributivity,
    ];

    pub fn is_rule(self) -> bool {
        matches!(self, Schema::ModusPonens | Schema::NecBelief | Schema::NecUpdate)
    }

    pub fn name(self) -> &'static str {
        match self {
            Schema::Tautology => "1-taut",
            Schema::K => "2-k",
            Schema::Four => "3-four",
            Schema::UpdateK => "4-update-k",
            Schema::Atom => "5-atom",
            Schema::Negation => "6-negation",
            Schema::Disjunction => "7-disjunction",
            Schema::Unforgotten => "8-unforgotten",
            Schema::Added => "9-added",
            Schema::ModusPonens => "10-mp",
            Schema::NecBelief => "11-nec-belief",
            Schema::NecUpdate => "12-nec-update",
            Schema::Union => "13-union",
            Schema::IffDistributivity => "iff-distributivity",
        }
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Tautology templates over three metavariables.
pub const TAUTOLOGY_TEMPLATES: usize = 8;

pub fn tautology(template: usize, phi: &Formula, psi: &Formula, chi: &Formula) -> Formula {
    let (p, q, r) = (phi.clone(), psi.clone(), chi.clone());
    use Formula as F;
    match template % TAUTOLOGY_TEMPLATES {
        0 => F::implies(p.clone(), F::implies(q, p)),
        1 => F::implies(
            F::implies(p.clone(), F::implies(q.clone(), r.clone())),
            F::implies(F::implies(p.clone(), q), F::implies(p, r)),
        ),
        2 => F::implies(F::implies(F::not(q.clone()), F::not(p.clone())), F::implies(p, q)),
        3 => F::implies(F::implies(F::implies(p.clone(), q), p.clone()), p),
        4 => F::or(p.clone(), F::not(p)),
        5 => F::implies(F::not(F::not(p.clone())), p),
        6 => F::implies(F::and(p.clone(), q), p),
        _ => F::implies(p.clone(), F::or(p, q)),
    }
}

/// Metavariable bindings for one instance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings {
    pub phi: Option<Formula>,
    pub psi: Option<Formula>,
    pub chi: Option<Formula>,
    pub fluent: Option<Fluent>,
    pub agent: Option<AgentName>,
    pub pointed: Vec<PointedFrame>,
    pub template: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstantiateError {
    #[error("missing binding `{0}`")]
    MissingBinding(&'static str),
    #[error("side condition fails: {0}")]
    SideCondition(String),
    #[error("unresolved frame `{0}`")]
    UnresolvedFrame(String),
    #[error("frame `{frame}` has no event `{event}`")]
    UnknownEvent { frame: String, event: String },
}

fn need<'a, T>(x: &'a Option<T>, name: &'static str) -> Result<&'a T, InstantiateError> {
    x.as_ref().ok_or(InstantiateError::MissingBinding(name))
}

fn resolve<'a>(frames: &'a FrameLibrary, pf: &PointedFrame) -> Result<(&'a Arc<AgentUpdateFrame>, usize), InstantiateError> {
    let frame = frames.get(&pf.frame).ok_or_else(|| InstantiateError::UnresolvedFrame(pf.frame.clone()))?;
    let e = frame
        .event_index(&pf.event)
        .ok_or_else(|| InstantiateError::UnknownEvent { frame: pf.frame.clone(), event: pf.event.clone() })?;
    Ok((frame, e))
}

/// The closed formula of an axiom schema (or, for a rule, its conclusion;
/// see [`rule_premises`]) with disjunctions expanded against the bound frame.
pub fn instantiate_axiom(schema: Schema, b: &Bindings, frames: &FrameLibrary) -> Result<Formula, InstantiateError> {
    use Formula as F;
    let phi = || need(&b.phi, "phi").cloned();
    let psi = || need(&b.psi, "psi").cloned();
    let agent = || need(&b.agent, "agent").cloned();
    let pointed = || b.pointed.first().cloned().ok_or(InstantiateError::MissingBinding("pointed frame"));
    Ok(match schema {
        Schema::Tautology => tautology(b.template, &phi()?, &psi()?, need(&b.chi, "chi")?),
        Schema::K => {
            let a = agent()?;
            F::implies(
                F::belief(a.clone(), F::implies(phi()?, psi()?)),
                F::implies(F::belief(a.clone(), phi()?), F::belief(a, psi()?)),
            )
        }
        Schema::Four => {
            let a = agent()?;
            F::implies(F::belief(a.clone(), phi()?), F::belief(a.clone(), F::belief(a, phi()?)))
        }
        Schema::UpdateK => {
            let pf = pointed()?;
            F::implies(
                F::boxed(pf.clone(), F::implies(phi()?, psi()?)),
                F::implies(F::boxed(pf.clone(), phi()?), F::boxed(pf, psi()?)),
            )
        }
        Schema::Atom => {
            let pf = pointed()?;
            let (frame, u) = resolve(frames, &pf)?;
            let p = need(&b.fluent, "fluent")?.clone();
            let pre = frame.pre(u).clone();
            let rhs = match frame.post(u).get(&p) {
                None => F::and(pre, F::Atom(p.clone())),
                Some(true) => pre,
                Some(false) => F::and(pre, F::bot()),
            };
            F::iff(F::diamond(pf, F::Atom(p)), rhs)
        }
        Schema::Negation => {
            let pf = pointed()?;
            let (frame, u) = resolve(frames, &pf)?;
            F::iff(
                F::diamond(pf.clone(), F::not(phi()?)),
                F::and(frame.pre(u).clone(), F::not(F::diamond(pf, phi()?))),
            )
        }
        Schema::Disjunction => {
            let pf = pointed()?;
            F::iff(
                F::diamond(pf.clone(), F::or(phi()?, psi()?)),
                F::or(F::diamond(pf.clone(), phi()?), F::diamond(pf, psi()?)),
            )
        }
        Schema::Unforgotten | Schema::Added => {
            let pf = pointed()?;
            let (frame, u) = resolve(frames, &pf)?;
            let a = agent()?;
            let added = frame.effectively_added_at(u).contains(&a);
            let at = |e: usize| PointedFrame::new(pf.frame.clone(), frame.event_label(e));
            let body = phi()?;
            let rhs = if schema == Schema::Unforgotten {
                if added {
                    return Err(InstantiateError::SideCondition(format!("`{a}` is added at {pf}")));
                }
                let parts = frame
                    .targets(ArrowKind::Obs, &a, u)
                    .filter(|&v| !frame.has_arrow(ArrowKind::Del, &a, u, v))
                    .map(|v| F::possible(a.clone(), F::diamond(at(v), body.clone())));
                F::and(frame.pre(u).clone(), F::disjunction(parts))
            } else {
                if !added {
                    return Err(InstantiateError::SideCondition(format!("`{a}` is not added at {pf}")));
                }
                let mut parts: Vec<Formula> =
                    frame.targets(ArrowKind::Obs, &a, u).map(|v| F::possible(a.clone(), F::diamond(at(v), body.clone()))).collect();
                parts.extend(frame.targets(ArrowKind::Add, &a, u).map(|w| F::diamond(at(w), body.clone())));
                parts.extend(frame.observers_at(u).into_iter().map(|c| F::possible(c, F::diamond(pf.clone(), body.clone()))));
                F::and(frame.pre(u).clone(), F::disjunction(parts))
            };
            F::iff(F::diamond(pf, F::possible(a, body)), rhs)
        }
        Schema::ModusPonens => psi()?,
        Schema::NecBelief => F::belief(agent()?, phi()?),
        Schema::NecUpdate => F::boxed(pointed()?, phi()?),
        Schema::Union => {
            if b.pointed.len() < 2 {
                return Err(InstantiateError::MissingBinding("two or more pointed frames"));
            }
            let body = phi()?;
            F::iff(
                F::union(b.pointed.clone(), body.clone()),
                F::disjunction(b.pointed.iter().map(|pf| F::diamond(pf.clone(), body.clone()))),
            )
        }
        Schema::IffDistributivity => {
            let pf = pointed()?;
            F::implies(
                F::boxed(pf.clone(), F::iff(phi()?, psi()?)),
                F::iff(F::boxed(pf.clone(), phi()?), F::boxed(pf, psi()?)),
            )
        }
    })
}

/// Premises of a rule instance (`φ` and `φ -> ψ` for modus ponens, `φ` for
/// necessitation); empty for axioms.
pub fn rule_premises(schema: Schema, b: &Bindings) -> Result<Vec<Formula>, InstantiateError> {
    Ok(match schema {
        Schema::ModusPonens => {
            let phi = need(&b.phi, "phi")?.clone();
            let psi = need(&b.psi, "psi")?.clone();
            vec![phi.clone(), Formula::implies(phi, psi)]
        }
        Schema::NecBelief | Schema::NecUpdate => vec![need(&b.phi, "phi")?.clone()],
        _ => vec![],
    })
}

/// One generated instance with everything needed to check it.
#[derive(Debug, Clone)]
pub struct Instance {
    pub schema: Schema,
    pub bindings: Bindings,
    pub premises: Vec<Formula>,
    pub formula: Formula,
    pub frames: FrameLibrary,
}

/// Draws bindings for `schema` and builds the instance. Metavariables range
/// over update formulas of small depth. Rule premises are axiom instances
/// (for modus ponens, `A` and the tautology instance `A -> (χ -> A)`).
pub fn sample_instance(g: &mut Generator, schema: Schema) -> Instance {
    let (frames, list) = g.gen_library(2);
    sample_instance_with(g, schema, frames, &list)
}

fn sample_instance_with(
    g: &mut Generator,
    schema: Schema,
    mut frames: FrameLibrary,
    list: &[(String, Arc<AgentUpdateFrame>)],
) -> Instance {
    let pick_formula = |g: &mut Generator| {
        let d = g.rng().gen_range(0..=2);
        g.gen_formula_in(Language::Del, d, list)
    };
    let pointed_at = |name: &str, frame: &AgentUpdateFrame, e: usize| PointedFrame::new(name, frame.event_label(e));
    let mut b = Bindings {
        phi: Some(pick_formula(g)),
        psi: Some(pick_formula(g)),
        chi: Some(pick_formula(g)),
        template: g.rng().gen_range(0..TAUTOLOGY_TEMPLATES),
        ..Bindings::default()
    };
    let mut pool = g.config().agent_pool();
    pool.extend(g.config().fresh_pool());
    b.agent = pool.choose(g.rng()).cloned();
    let fluents = g.config().fluents.clone();
    b.fluent = fluents.choose(g.rng()).cloned();
    let (name, frame) = list.choose(g.rng()).expect("frames").clone();
    let e = g.rng().gen_range(0..frame.event_count());
    b.pointed = vec![pointed_at(&name, &frame, e)];
    match schema {
        Schema::Added => {
            let candidates: Vec<(String, usize, AgentName)> = list
                .iter()
                .flat_map(|(n, f)| {
                    (0..f.event_count()).flat_map(move |e| f.effectively_added_at(e).into_iter().map(move |a| (n.clone(), e, a)))
                })
                .collect();
            match candidates.choose(g.rng()) {
                Some((n, e, a)) => {
                    let f = &frames.get(n).expect("listed").clone();
                    b.pointed = vec![pointed_at(n, f, *e)];
                    b.agent = Some(a.clone());
                }
                None => {
                    let (frames, list) = g.gen_library(2);
                    return sample_instance_with(g, schema, frames, &list);
                }
            }
        }
        Schema::Unforgotten => {
            let added = frame.effectively_added_at(e);
            let others: Vec<AgentName> = pool.iter().filter(|a| !added.contains(*a)).cloned().collect();
            b.agent = others.choose(g.rng()).cloned().or_else(|| Some(crate::syntax::agent("z")));
        }
        Schema::Union => {
            let k = g.rng().gen_range(2..=3);
            b.pointed = (0..k)
                .map(|_| {
                    let (n, f) = list.choose(g.rng()).expect("frames");
                    pointed_at(n, f, g.rng().gen_range(0..f.event_count()))
                })
                .collect();
        }
        Schema::ModusPonens | Schema::NecBelief | Schema::NecUpdate => {
            let premise_schema = *Schema::AXIOMS.choose(g.rng()).expect("axioms");
            let inner = sample_instance_with(g, premise_schema, frames.clone(), list);
            let premise = inner.formula;
            if inner.frames.names().ne(frames.names())
                || inner.frames.iter().zip(frames.iter()).any(|((_, x), (_, y))| !Arc::ptr_eq(x, y))
            {
                // The premise came with a fresh library; point into that one instead.
                let fresh: Vec<(String, Arc<AgentUpdateFrame>)> =
                    inner.frames.iter().map(|(n, f)| (n.to_string(), Arc::clone(f))).collect();
                let (n, f) = fresh.choose(g.rng()).expect("frames");
                b.pointed = vec![pointed_at(n, f, g.rng().gen_range(0..f.event_count()))];
                frames = inner.frames;
            }
            if schema == Schema::ModusPonens {
                let chi = b.chi.clone().expect("bound");
                b.psi = Some(Formula::implies(chi, premise.clone()));
            }
            b.phi = Some(premise);
        }
        _ => {}
    }
    let formula = instantiate_axiom(schema, &b, &frames).expect("bindings satisfy the schema");
    let premises = rule_premises(schema, &b).expect("bindings satisfy the schema");
    Instance { schema, bindings: b, premises, formula, frames }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SchemaStats {
    pub trials: usize,
    pub worlds_checked: usize,
    pub falsifying_worlds: usize,
    /// Rule trials whose premises were not all valid on the model.
    pub vacuous: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Falsification {
    pub trial: usize,
    pub schema: Schema,
    pub formula: String,
    pub worlds: Vec<String>,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SoundnessReport {
    pub trials: usize,
    pub seed: u64,
    pub schemas: BTreeMap<String, SchemaStats>,
    pub falsifications: Vec<Falsification>,
    pub errors: Vec<String>,
    /// Every sum-product update built during the run was transitive.
    pub transitive: bool,
    pub updates_checked: usize,
    pub elapsed_ms: u128,
}

impl SoundnessReport {
    pub fn is_sound(&self) -> bool {
        self.falsifications.is_empty() && self.errors.is_empty() && self.transitive
    }
}

struct TrialOutcome {
    schema: Schema,
    worlds_checked: usize,
    falsified: Option<Falsification>,
    vacuous: bool,
    error: Option<String>,
    updates: usize,
    transitive: bool,
}

fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64);
    rng.gen()
}

fn run_trial(base: &GenConfig, trial: usize) -> TrialOutcome {
    let schema = Schema::ALL[trial % Schema::ALL.len()];
    let cfg = GenConfig { seed: trial_seed(base.seed, trial), ..base.clone() };
    let mut g = Generator::new(cfg);
    let inst = sample_instance(&mut g, schema);
    let model: Arc<KripkeModel> = Arc::new(g.gen_model());
    let ctx = EvalContext::new(inst.frames.clone());
    let mut out = TrialOutcome {
        schema,
        worlds_checked: 0,
        falsified: None,
        vacuous: false,
        error: None,
        updates: 0,
        transitive: true,
    };
    let check = |phi: &Formula| -> Result<Vec<usize>, EvalError> { falsifying_worlds(&model, phi, &ctx) };
    let result = (|| -> Result<(), EvalError> {
        for p in &inst.premises {
            if !check(p)?.is_empty() {
                out.vacuous = true;
                return Ok(());
            }
        }
        let bad = check(&inst.formula)?;
        out.worlds_checked = model.world_count();
        if !bad.is_empty() {
            out.falsified = Some(Falsification {
                trial,
                schema,
                formula: inst.formula.to_string(),
                worlds: bad.iter().map(|&s| model.world_label(s).to_string()).collect(),
                model: model.to_json(),
            });
        }
        Ok(())
    })();
    if let Err(e) = result {
        out.error = Some(format!("trial {trial} ({schema}): {e}"));
    }
    let cached = ctx.cached_results();
    out.updates = cached.len();
    out.transitive = cached.iter().all(|r| r.model.is_transitive());
    out
}

/// Checks `trials` random instances, cycling through every schema, each on a
/// fresh random transitive model at every world. Trials run in parallel;
/// trial `k` is seeded from the master seed and `k` alone.
pub fn soundness_suite(trials: usize, cfg: &GenConfig) -> SoundnessReport {
    let start = Instant::now();
    let outcomes: Vec<TrialOutcome> = (0..trials).into_par_iter().map(|k| run_trial(cfg, k)).collect();
    let mut report = SoundnessReport {
        trials,
        seed: cfg.seed,
        schemas: BTreeMap::new(),
        falsifications: Vec::new(),
        errors: Vec::new(),
        transitive: true,
        updates_checked: 0,
        elapsed_ms: 0,
    };
    for o in outcomes {
        let stats = report.schemas.entry(o.schema.name().to_string()).or_default();
        stats.trials += 1;
        stats.worlds_checked += o.worlds_checked;
        stats.vacuous += usize::from(o.vacuous);
        if let Some(f) = o.falsified {
            stats.falsifying_worlds += f.worlds.len();
            report.falsifications.push(f);
        }
        report.errors.extend(o.error);
        report.transitive &= o.transitive;
        report.updates_checked += o.updates;
    }
    report.elapsed_ms = start.elapsed().as_millis();
    report
}
