//! Product update and sum-product update.
//!
//! Both build the state set `{(s,u) : (M,s) ⊨ pre(u)}` and the valuation from
//! postconditions the same way. They differ in the accessibility relations:
//! the product update intersects the model's relations with observability,
//! while the sum-product update additionally drops deleted arrows, ascribes
//! and inherits arrows for added agents and closes each relation transitively.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::frames::{AgentUpdateFrame, ArrowKind};
use crate::model::{KripkeModel, Relation};
use crate::semantics::{el_truth_set, EvalError};
use crate::syntax::AgentName;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UpdateError {
    #[error("product update needs a frame without add and del arrows")]
    NotActionFrame,
    #[error("precondition of event `{event}` could not be evaluated: {source}")]
    Precondition {
        event: String,
        #[source]
        source: EvalError,
    },
    #[error("precondition of `{event}` fails at step {step}")]
    PreconditionFailed { step: usize, event: String },
    #[error("unknown event `{0}`")]
    UnknownEvent(String),
    #[error("world index {0} out of range")]
    UnknownWorld(usize),
    #[error("composite label `{0}` collides with an existing world")]
    LabelCollision(String),
}

/// An updated model with the provenance of its worlds.
#[derive(Debug, Clone)]
pub struct UpdateResult {
    pub model: Arc<KripkeModel>,
    /// For each new world, the source world and event it pairs.
    pub origin: Vec<(usize, usize)>,
    lookup: HashMap<(usize, usize), usize>,
    /// Agents with a nonempty relation after the update.
    pub updated_agents: BTreeSet<AgentName>,
    /// Arrows contributed by the transitive closure alone.
    pub closure_added: usize,
}

impl UpdateResult {
    /// The new world pairing source world `s` with event `e`, if `e` was executable at `s`.
    pub fn world(&self, s: usize, e: usize) -> Option<usize> {
        self.lookup.get(&(s, e)).copied()
    }
}

/// `(s,u)` for a base world, `(s,u1,...,uk,u)` when `s` is already composite.
pub fn composite_label(world: &str, event: &str) -> String {
    match world.strip_prefix('(').and_then(|w| w.strip_suffix(')')) {
        Some(inner) => format!("({inner},{event})"),
        None => format!("({world},{event})"),
    }
}

struct States {
    model: KripkeModel,
    origin: Vec<(usize, usize)>,
    lookup: HashMap<(usize, usize), usize>,
}

fn build_states(m: &KripkeModel, u: &AgentUpdateFrame) -> Result<States, UpdateError> {
    let mut pre_sets = Vec::with_capacity(u.event_count());
    for e in 0..u.event_count() {
        let set = el_truth_set(m, u.pre(e))
            .map_err(|source| UpdateError::Precondition { event: u.event_label(e).to_string(), source })?;
        pre_sets.push(set);
    }
    let mut model = KripkeModel::new();
    let mut origin = Vec::new();
    let mut lookup = HashMap::new();
    for s in 0..m.world_count() {
        for (e, pre) in pre_sets.iter().enumerate() {
            if pre[s] {
                let label = composite_label(m.world_label(s), u.event_label(e));
                let k = model.add_world(label.clone()).map_err(|_| UpdateError::LabelCollision(label))?;
                origin.push((s, e));
                lookup.insert((s, e), k);
            }
        }
    }
    for a in m.agents().into_iter().chain(u.agents()) {
        model.declare_agent(a);
    }
    let mut fluents: BTreeSet<_> = m.fluents().cloned().collect();
    for e in 0..u.event_count() {
        fluents.extend(u.post(e).keys().cloned());
    }
    for (k, &(s, e)) in origin.iter().enumerate() {
        for p in &fluents {
            let value = u.post(e).get(p).copied().unwrap_or_else(|| m.holds(p, s));
            if value {
                model.set_true(p.clone(), k);
            }
        }
    }
    if let (Some(s), Some(e)) = (m.designated(), u.designated()) {
        model.set_designated(lookup.get(&(s, e)).copied());
    }
    Ok(States { model, origin, lookup })
}

fn finish(mut states: States, relations: BTreeMap<AgentName, Relation>, closure_added: usize) -> UpdateResult {
    let mut updated_agents = BTreeSet::new();
    for (a, rel) in relations {
        if !rel.is_empty() {
            updated_agents.insert(a.clone());
        }
        states.model.set_relation(a, rel);
    }
    UpdateResult {
        model: Arc::new(states.model),
        origin: states.origin,
        lookup: states.lookup,
        updated_agents,
        closure_added,
    }
}

fn all_agents(m: &KripkeModel, u: &AgentUpdateFrame) -> BTreeSet<AgentName> {
    let mut agents = m.agents();
    agents.extend(u.agents());
    agents
}

/// The product update: `(s,u) R_a (t,v)` iff `s R_a t` and `u obs_a v`. No closure.
pub fn product_update(m: &KripkeModel, u: &AgentUpdateFrame) -> Result<UpdateResult, UpdateError> {
    if !u.is_action_frame() {
        return Err(UpdateError::NotActionFrame);
    }
    let states = build_states(m, u)?;
    let mut relations = BTreeMap::new();
    for a in all_agents(m, u) {
        let mut rel = Relation::new();
        if let (Some(r), Some(obs)) = (m.relation(&a), u.arrows(ArrowKind::Obs).get(&a)) {
            for (s, t) in r.pairs() {
                for (e, f) in obs.pairs() {
                    if let (Some(&x), Some(&y)) = (states.lookup.get(&(s, e)), states.lookup.get(&(t, f))) {
                        rel.insert(x, y);
                    }
                }
            }
        }
        relations.insert(a, rel);
    }
    Ok(finish(states, relations, 0))
}

/// The sum-product update. Each new relation is the transitive closure of
/// the unforgotten arrows (model arrow times undeleted obs arrow), the
/// ascribed arrows `(s,u) -> (s,v)` along sum arrows, and the inherited
/// arrows `(s,u) -> (t,u)` along any observer's relation; the last two only
/// at events that add the agent without deleting it.
pub fn sum_product_update(m: &KripkeModel, u: &AgentUpdateFrame) -> Result<UpdateResult, UpdateError> {
    let states = build_states(m, u)?;
    let at = |s: usize, e: usize| states.lookup.get(&(s, e)).copied();
    let observers: Vec<BTreeSet<AgentName>> = (0..u.event_count()).map(|e| u.observers_at(e)).collect();
    let mut relations = BTreeMap::new();
    let mut closure_added = 0;
    for a in all_agents(m, u) {
        let mut q = Relation::new();
        if let (Some(r), Some(obs)) = (m.relation(&a), u.arrows(ArrowKind::Obs).get(&a)) {
            for (s, t) in r.pairs() {
                for (e, f) in obs.pairs() {
                    if u.has_arrow(ArrowKind::Del, &a, e, f) {
                        continue;
                    }
                    if let (Some(x), Some(y)) = (at(s, e), at(t, f)) {
                        q.insert(x, y);
                    }
                }
            }
        }
        for (e, obs) in observers.iter().enumerate() {
            if !u.effectively_added_at(e).contains(&a) {
                continue;
            }
            for s in 0..m.world_count() {
                let Some(x) = at(s, e) else { continue };
                for f in u.targets(ArrowKind::Add, &a, e) {
                    if let Some(y) = at(s, f) {
                        q.insert(x, y);
                    }
                }
                for b in obs {
                    for t in m.successors(b, s) {
                        if let Some(y) = at(t, e) {
                            q.insert(x, y);
                        }
                    }
                }
            }
        }
        let closed = q.transitive_closure();
        closure_added += closed.len() - q.len();
        relations.insert(a, closed);
    }
    Ok(finish(states, relations, closure_added))
}

/// A pointed model reached by a chain of updates.
#[derive(Debug, Clone)]
pub struct PointedResult {
    pub model: Arc<KripkeModel>,
    pub world: usize,
    pub steps: Vec<UpdateResult>,
}

/// Left fold of [`sum_product_update`] from `(M,s)`. Step numbers in errors
/// are 1-based.
pub fn iterate_updates(
    m: Arc<KripkeModel>,
    s: usize,
    steps: &[(Arc<AgentUpdateFrame>, usize)],
) -> Result<PointedResult, UpdateError> {
    if s >= m.world_count() {
        return Err(UpdateError::UnknownWorld(s));
    }
    let mut model = m;
    let mut world = s;
    let mut results = Vec::with_capacity(steps.len());
    for (j, (frame, e)) in steps.iter().enumerate() {
        if *e >= frame.event_count() {
            return Err(UpdateError::UnknownEvent(e.to_string()));
        }
        let result = sum_product_update(&model, frame)?;
        world = result.world(world, *e).ok_or_else(|| UpdateError::PreconditionFailed {
            step: j + 1,
            event: frame.event_label(*e).to_string(),
        })?;
        model = Arc::clone(&result.model);
        results.push(result);
    }
    Ok(PointedResult { model, world, steps: results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::transitive_closure;
    use crate::syntax::{agent, Fluent, Formula};

    fn two_worlds() -> KripkeModel {
        let mut m = KripkeModel::with_worlds(["s", "t"]).unwrap();
        for a in ["a", "b"] {
            for x in 0..2 {
                for y in 0..2 {
                    m.add_edge(&agent(a), x, y);
                }
            }
        }
        m.set_true(Fluent::prop("p"), 0);
        m.set_designated(Some(0));
        m
    }

    #[test]
    fn announcement_keeps_matching_worlds() {
        let m = two_worlds();
        let u = AgentUpdateFrame::announcement(Formula::prop("p"), [agent("a"), agent("b")]);
        let r = product_update(&m, &u).unwrap();
        assert_eq!(r.model.world_count(), 1);
        assert_eq!(r.model.world_label(0), "(s,u)");
        assert_eq!(r.origin, vec![(0, 0)]);
        assert!(r.model.relation(&agent("a")).unwrap().contains(0, 0));
        assert_eq!(r.model.designated(), Some(0));
    }

    #[test]
    fn skip_is_identity_up_to_renaming() {
        let m = two_worlds();
        let u = AgentUpdateFrame::announcement(Formula::Top, [agent("a"), agent("b")]);
        for r in [product_update(&m, &u).unwrap(), sum_product_update(&m, &u).unwrap()] {
            assert_eq!(r.model.world_count(), 2);
            for a in ["a", "b"] {
                let rel: BTreeSet<_> = r.model.relation(&agent(a)).unwrap().pairs().collect();
                let orig: BTreeSet<_> = m.relation(&agent(a)).unwrap().pairs().collect();
                assert_eq!(rel, orig);
            }
            assert!(r.model.holds(&Fluent::prop("p"), 0));
            assert!(!r.model.holds(&Fluent::prop("p"), 1));
        }
    }

    #[test]
    fn postcondition_sets_and_clears() {
        let m = two_worlds();
        let mut u = AgentUpdateFrame::announcement(Formula::Top, [agent("a")]);
        u.set_post(0, Fluent::prop("q"), true);
        u.set_post(0, Fluent::prop("p"), false);
        let r = product_update(&m, &u).unwrap();
        for k in 0..2 {
            assert!(r.model.holds(&Fluent::prop("q"), k));
            assert!(!r.model.holds(&Fluent::prop("p"), k));
        }
    }

    #[test]
    fn product_rejects_agent_updates() {
        let m = two_worlds();
        let mut u = AgentUpdateFrame::with_events(["u"]).unwrap();
        u.add_arrow(ArrowKind::Add, &agent("c"), 0, 0);
        assert_eq!(product_update(&m, &u).unwrap_err(), UpdateError::NotActionFrame);
    }

    #[test]
    fn composite_labels_flatten() {
        assert_eq!(composite_label("s", "u1"), "(s,u1)");
        assert_eq!(composite_label("(s,u1)", "u2"), "(s,u1,u2)");
    }

    #[test]
    fn iterate_reports_failing_step() {
        let m = Arc::new(two_worlds());
        let skip = Arc::new(AgentUpdateFrame::announcement(Formula::Top, [agent("a")]));
        let never = Arc::new(AgentUpdateFrame::announcement(Formula::bot(), [agent("a")]));
        let done = iterate_updates(Arc::clone(&m), 0, &[]).unwrap();
        assert!(Arc::ptr_eq(&done.model, &m));
        assert_eq!(done.world, 0);
        let err = iterate_updates(m, 0, &[(skip, 0), (never, 0)]).unwrap_err();
        assert!(matches!(err, UpdateError::PreconditionFailed { step: 2, .. }));
    }

    #[test]
    fn deletion_wins_over_addition() {
        let mut m = KripkeModel::with_worlds(["s"]).unwrap();
        m.add_edge(&agent("b"), 0, 0);
        let mut u = AgentUpdateFrame::with_events(["u"]).unwrap();
        u.add_arrow(ArrowKind::Obs, &agent("b"), 0, 0);
        u.add_arrow(ArrowKind::Add, &agent("a"), 0, 0);
        u.add_arrow(ArrowKind::Del, &agent("a"), 0, 0);
        let r = sum_product_update(&m, &u).unwrap();
        assert!(r.model.relation(&agent("a")).is_none());
        assert!(!r.updated_agents.contains(&agent("a")));
    }

    #[test]
    fn closure_counts_new_arrows() {
        let mut m = KripkeModel::with_worlds(["s"]).unwrap();
        m.add_edge(&agent("a"), 0, 0);
        let mut u = AgentUpdateFrame::with_events(["u", "v", "w"]).unwrap();
        u.add_arrow(ArrowKind::Obs, &agent("a"), 0, 1);
        u.add_arrow(ArrowKind::Obs, &agent("a"), 1, 2);
        let r = sum_product_update(&m, &u).unwrap();
        assert_eq!(r.closure_added, 1);
        let p = product_update(&m, &u).unwrap();
        let pairs: BTreeSet<_> = p.model.relation(&agent("a")).unwrap().pairs().collect();
        let closed: BTreeSet<_> = r.model.relation(&agent("a")).unwrap().pairs().collect();
        assert_eq!(transitive_closure(&pairs), closed);
    }
}
