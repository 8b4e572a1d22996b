//! Compiles update formulas to update-free ones by rewriting with the
//! reduction equivalences, innermost update first.
//!
//! For `<U@u> φ` with an update-free body, the body's top constructor picks
//! the rule:
//!
//! | body        | result                                                                 |
//! |-------------|------------------------------------------------------------------------|
//! | `true`      | `pre(u)`                                                               |
//! | atom `p`    | `pre(u) & (p' \| set)` with `p' = p` if `u` leaves `p` alone, else `false`, and `set = true` iff `u` sets `p` |
//! | `~ψ`        | `pre(u) & ~<U@u> ψ`                                                     |
//! | `ψ & χ`     | `<U@u> ψ & <U@u> χ`                                                     |
//! | `P[a] ψ`, `a` not added at `u` | `pre(u) & ⋁ P[a] <U@v> ψ` over undeleted `u obs_a v` |
//! | `P[a] ψ`, `a` added at `u`     | `pre(u) & (⋁ P[a] <U@v> ψ ∨ ⋁ <U@w> ψ ∨ ⋁ P[b] <U@u> ψ)` over `u obs_a v`, `u add_a w`, observers `b` of `u` |
//!
//! and a union `<U1@u1 + ... > ψ` becomes `<U1@u1> ψ | ...`. Empty
//! disjunctions are `false`. After every rule the rewritten subterm and then
//! its ancestors are simplified with `~~x = x`, `true & x = x`, `false & x = false` and
//! `P[a] false = false`; each simplification is a separate trace entry.
//!
//! The conjunction rule is the dual of distribution over disjunction: since
//! an update has at most one outcome, `<U@u>(ψ & χ)` and
//! `<U@u> ψ & <U@u> χ` agree.
//!
//! The belief rules are exact only when the sum-product update needs no
//! transitive closure (see [`AgentUpdateFrame::closure_safe`]); on other
//! frames the result can differ from the input.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::frames::{AgentUpdateFrame, ArrowKind, FrameLibrary};
use crate::syntax::{Formula, PointedFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Rule {
    #[serde(rename = "top")]
    Top,
    #[serde(rename = "atom")]
    Atom,
    #[serde(rename = "negation")]
    Negation,
    #[serde(rename = "conjunction")]
    Conjunction,
    #[serde(rename = "unforgotten")]
    Unforgotten,
    #[serde(rename = "added")]
    Added,
    #[serde(rename = "union")]
    Union,
    #[serde(rename = "simp")]
    Simp,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Top => "top",
            Rule::Atom => "atom",
            Rule::Negation => "negation",
            Rule::Conjunction => "conjunction",
            Rule::Unforgotten => "unforgotten",
            Rule::Added => "added",
            Rule::Union => "union",
            Rule::Simp => "simp",
        })
    }
}

/// One rewrite: the subformula at `position` changed from `before` to `after`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub position: Vec<usize>,
    pub rule: Rule,
    pub before: Formula,
    pub after: Formula,
}

impl Serialize for TraceEntry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("TraceEntry", 4)?;
        st.serialize_field("position", &self.position)?;
        st.serialize_field("rule", &self.rule)?;
        st.serialize_field("before", &self.before.to_string())?;
        st.serialize_field("after", &self.after.to_string())?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReductionError {
    #[error("unresolved frame `{0}`")]
    UnresolvedFrame(String),
    #[error("frame `{frame}` has no event `{event}`")]
    UnknownEvent { frame: String, event: String },
    #[error("precondition of `{0}` is not update-free")]
    NonElPrecondition(String),
    #[error("step budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("termination measure did not decrease at step {0}")]
    MeasureNotDecreasing(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("trace entry {index}: no subformula at {position:?}")]
    BadPosition { index: usize, position: Vec<usize> },
    #[error("trace entry {index}: subformula differs from the recorded one")]
    Mismatch { index: usize },
}

/// The compiled formula with its rewrite history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reduction {
    pub formula: Formula,
    pub trace: Vec<TraceEntry>,
    /// Rule applications, not counting simplifications.
    pub steps: usize,
}

pub const DEFAULT_STEP_BUDGET: usize = 200_000;

/// Leftmost innermost update node: an update whose body is update-free.
fn find_redex(phi: &Formula, path: &mut Vec<usize>) -> Option<Vec<usize>> {
    match phi {
        Formula::DiamondUpdate(_, body) | Formula::DiamondUnion(_, body) => {
            path.push(0);
            let inner = find_redex(body, path);
            path.pop();
            Some(inner.unwrap_or_else(|| path.clone()))
        }
        _ => {
            for (k, c) in phi.children().into_iter().enumerate() {
                path.push(k);
                let found = find_redex(c, path);
                path.pop();
                if found.is_some() {
                    return found;
                }
            }
            None
        }
    }
}

fn resolve<'a>(frames: &'a FrameLibrary, pf: &PointedFrame) -> Result<(&'a AgentUpdateFrame, usize), ReductionError> {
    let frame = frames.get(&pf.frame).ok_or_else(|| ReductionError::UnresolvedFrame(pf.frame.clone()))?;
    let e = frame
        .event_index(&pf.event)
        .ok_or_else(|| ReductionError::UnknownEvent { frame: pf.frame.clone(), event: pf.event.clone() })?;
    if !frame.pre(e).is_el() {
        return Err(ReductionError::NonElPrecondition(pf.to_string()));
    }
    Ok((frame, e))
}

fn at_event(pf: &PointedFrame, frame: &AgentUpdateFrame, e: usize) -> PointedFrame {
    PointedFrame::new(pf.frame.clone(), frame.event_label(e))
}

/// Applies the rule for one redex (an update node with update-free body).
fn rewrite(redex: &Formula, frames: &FrameLibrary) -> Result<(Rule, Formula), ReductionError> {
    let (pf, body) = match redex {
        Formula::DiamondUnion(pfs, body) => {
            let parts = pfs.iter().map(|pf| Formula::diamond(pf.clone(), (**body).clone()));
            return Ok((Rule::Union, Formula::disjunction(parts)));
        }
        Formula::DiamondUpdate(pf, body) => (pf, &**body),
        _ => unreachable!("redex is an update node"),
    };
    let (frame, u) = resolve(frames, pf)?;
    let pre = frame.pre(u).clone();
    let under = |e: usize, phi: &Formula| Formula::diamond(at_event(pf, frame, e), phi.clone());
    Ok(match body {
        Formula::Top => (Rule::Top, pre),
        Formula::Atom(p) => {
            let kept = match frame.post(u).get(p) {
                None => Formula::Atom(p.clone()),
                Some(_) => Formula::bot(),
            };
            let set = if frame.post(u).get(p) == Some(&true) { Formula::Top } else { Formula::bot() };
            (Rule::Atom, Formula::and(pre, Formula::or(kept, set)))
        }
        Formula::Not(psi) => (Rule::Negation, Formula::and(pre, Formula::not(under(u, psi)))),
        Formula::And(psi, chi) => (Rule::Conjunction, Formula::and(under(u, psi), under(u, chi))),
        Formula::Possible(a, psi) => {
            if frame.effectively_added_at(u).contains(a) {
                let mut parts: Vec<Formula> =
                    frame.targets(ArrowKind::Obs, a, u).map(|v| Formula::possible(a.clone(), under(v, psi))).collect();
                parts.extend(frame.targets(ArrowKind::Add, a, u).map(|w| under(w, psi)));
                parts.extend(frame.observers_at(u).into_iter().map(|b| Formula::possible(b, under(u, psi))));
                (Rule::Added, Formula::and(pre, Formula::disjunction(parts)))
            } else {
                let parts = frame
                    .targets(ArrowKind::Obs, a, u)
                    .filter(|&v| !frame.has_arrow(ArrowKind::Del, a, u, v))
                    .map(|v| Formula::possible(a.clone(), under(v, psi)));
                (Rule::Unforgotten, Formula::and(pre, Formula::disjunction(parts)))
            }
        }
        Formula::DiamondUpdate(..) | Formula::DiamondUnion(..) => unreachable!("redex body is update-free"),
    })
}

fn simplify_root(phi: &Formula) -> Option<Formula> {
    match phi {
        Formula::Not(inner) => match &**inner {
            Formula::Not(x) => Some((**x).clone()),
            _ => None,
        },
        Formula::And(a, b) => {
            if **a == Formula::Top {
                Some((**b).clone())
            } else if **b == Formula::Top {
                Some((**a).clone())
            } else if a.is_bot() || b.is_bot() {
                Some(Formula::bot())
            } else {
                None
            }
        }
        Formula::Possible(_, x) if x.is_bot() => Some(Formula::bot()),
        _ => None,
    }
}

/// Bottom-up simplification of `phi`, which sits at `path` in the whole formula.
fn simplify(phi: Formula, path: &mut Vec<usize>, trace: &mut Vec<TraceEntry>) -> Formula {
    let mut current = match phi {
        Formula::Not(a) => {
            path.push(0);
            let a = simplify(*a, path, trace);
            path.pop();
            Formula::not(a)
        }
        Formula::And(a, b) => {
            path.push(0);
            let a = simplify(*a, path, trace);
            path.pop();
            path.push(1);
            let b = simplify(*b, path, trace);
            path.pop();
            Formula::and(a, b)
        }
        Formula::Possible(i, a) => {
            path.push(0);
            let a = simplify(*a, path, trace);
            path.pop();
            Formula::possible(i, a)
        }
        other => other,
    };
    while let Some(next) = simplify_root(&current) {
        trace.push(TraceEntry { position: path.clone(), rule: Rule::Simp, before: current, after: next.clone() });
        current = next;
    }
    current
}

/// Well-founded progress measure: the number of update nodes whose body
/// still contains updates, then the multiset of ranks of the others, where a
/// single update's rank is twice its body's height and a union's is one more.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Measure {
    pending: usize,
    ranks: BTreeMap<usize, usize>,
}

impl Measure {
    pub fn of(phi: &Formula) -> Measure {
        let mut m = Measure { pending: 0, ranks: BTreeMap::new() };
        phi.visit(&mut |f| match f {
            Formula::DiamondUpdate(_, body) | Formula::DiamondUnion(_, body) => {
                if body.is_el() {
                    let bump = usize::from(matches!(f, Formula::DiamondUnion(..)));
                    *m.ranks.entry(2 * body.height() + bump).or_default() += 1;
                } else {
                    m.pending += 1;
                }
            }
            _ => {}
        });
        m
    }

    pub fn is_zero(&self) -> bool {
        self.pending == 0 && self.ranks.is_empty()
    }
}

impl PartialOrd for Measure {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Measure {
    fn cmp(&self, other: &Self) -> Ordering {
        self.pending.cmp(&other.pending).then_with(|| {
            let mut keys: Vec<usize> = self.ranks.keys().chain(other.ranks.keys()).copied().collect();
            keys.sort_unstable_by(|a, b| b.cmp(a));
            keys.dedup();
            keys.into_iter()
                .map(|k| self.ranks.get(&k).copied().unwrap_or(0).cmp(&other.ranks.get(&k).copied().unwrap_or(0)))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    }
}

/// One rule application at the leftmost innermost update, followed by
/// simplification of the rewritten subterm and then of its ancestors.
/// `None` when `phi` is update-free.
pub fn reduce_step(phi: &Formula, frames: &FrameLibrary) -> Result<Option<(Formula, Vec<TraceEntry>)>, ReductionError> {
    let Some(position) = find_redex(phi, &mut Vec::new()) else {
        return Ok(None);
    };
    let redex = phi.at(&position).expect("redex position is valid");
    let (rule, rewritten) = rewrite(redex, frames)?;
    let mut trace = vec![TraceEntry { position: position.clone(), rule, before: redex.clone(), after: rewritten.clone() }];
    let simplified = simplify(rewritten, &mut position.clone(), &mut trace);
    let mut result = phi.replace_at(&position, simplified).expect("redex position is valid");
    // Ancestors may now simplify too, e.g. a conjunction that gained a ⊥.
    for depth in (0..position.len()).rev() {
        let path = &position[..depth];
        let node = result.at(path).expect("ancestor exists");
        let Some(mut next) = simplify_root(node) else {
            continue;
        };
        trace.push(TraceEntry { position: path.to_vec(), rule: Rule::Simp, before: node.clone(), after: next.clone() });
        while let Some(further) = simplify_root(&next) {
            trace.push(TraceEntry { position: path.to_vec(), rule: Rule::Simp, before: next, after: further.clone() });
            next = further;
        }
        result = result.replace_at(path, next).expect("ancestor exists");
    }
    Ok(Some((result, trace)))
}

/// Rewrites until no update modality is left, checking that the progress
/// measure strictly decreases at every step.
pub fn reduce_to_el(phi: &Formula, frames: &FrameLibrary) -> Result<Reduction, ReductionError> {
    reduce_with_budget(phi, frames, DEFAULT_STEP_BUDGET)
}

pub fn reduce_with_budget(phi: &Formula, frames: &FrameLibrary, budget: usize) -> Result<Reduction, ReductionError> {
    let mut current = phi.clone();
    let mut trace = Vec::new();
    let mut measure = Measure::of(&current);
    let mut steps = 0;
    while let Some((next, entries)) = reduce_step(&current, frames)? {
        steps += 1;
        if steps > budget {
            return Err(ReductionError::BudgetExhausted(budget));
        }
        let next_measure = Measure::of(&next);
        if next_measure >= measure {
            return Err(ReductionError::MeasureNotDecreasing(steps));
        }
        measure = next_measure;
        trace.extend(entries);
        current = next;
    }
    debug_assert!(measure.is_zero());
    Ok(Reduction { formula: current, trace, steps })
}

/// Re-applies a trace to its input.
pub fn replay(phi: &Formula, trace: &[TraceEntry]) -> Result<Formula, ReplayError> {
    let mut current = phi.clone();
    for (index, entry) in trace.iter().enumerate() {
        let found = current
            .at(&entry.position)
            .ok_or_else(|| ReplayError::BadPosition { index, position: entry.position.clone() })?;
        if *found != entry.before {
            return Err(ReplayError::Mismatch { index });
        }
        current = current.replace_at(&entry.position, entry.after.clone()).expect("position checked");
    }
    Ok(current)
}
