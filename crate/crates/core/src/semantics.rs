//! Model checking for EL, DEL⁻ and DEL.
//!
//! Formulas are evaluated bottom-up into the set of worlds where they hold.
//! An update diamond `<U@u> φ` holds at `s` iff `pre(u)` holds at `s` and `φ`
//! holds at `(s,u)` in the sum-product update; updated models are built
//! eagerly and memoized per (model, frame).

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::frames::{AgentUpdateFrame, FrameLibrary};
use crate::model::KripkeModel;
use crate::syntax::{Formula, PointedFrame};
use crate::update::{sum_product_update, UpdateError, UpdateResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unresolved frame `{0}`")]
    UnresolvedFrame(String),
    #[error("frame `{frame}` has no event `{event}`")]
    UnknownEvent { frame: String, event: String },
    #[error("unknown world `{0}`")]
    UnknownWorld(String),
    #[error("update modality where an update-free formula is required")]
    NotEl,
    #[error("update failed: {0}")]
    Update(Box<UpdateError>),
}

impl From<UpdateError> for EvalError {
    fn from(e: UpdateError) -> Self {
        EvalError::Update(Box::new(e))
    }
}

type MemoKey = (usize, String);
/// The source model is kept alive so its address stays a valid key.
type MemoEntry = (Arc<KripkeModel>, Arc<UpdateResult>);

/// Frame library plus a cache of sum-product updates.
#[derive(Debug, Default)]
pub struct EvalContext {
    frames: FrameLibrary,
    memo: Mutex<HashMap<MemoKey, MemoEntry>>,
    memo_enabled: bool,
}

impl EvalContext {
    pub fn new(frames: FrameLibrary) -> Self {
        EvalContext { frames, memo: Mutex::new(HashMap::new()), memo_enabled: true }
    }

    /// A context that recomputes every update.
    pub fn without_memo(frames: FrameLibrary) -> Self {
        EvalContext { memo_enabled: false, ..EvalContext::new(frames) }
    }

    pub fn frames(&self) -> &FrameLibrary {
        &self.frames
    }

    pub fn frame(&self, name: &str) -> Result<&Arc<AgentUpdateFrame>, EvalError> {
        self.frames.get(name).ok_or_else(|| EvalError::UnresolvedFrame(name.to_string()))
    }

    fn resolve(&self, pf: &PointedFrame) -> Result<(&Arc<AgentUpdateFrame>, usize), EvalError> {
        let frame = self.frame(&pf.frame)?;
        let e = frame
            .event_index(&pf.event)
            .ok_or_else(|| EvalError::UnknownEvent { frame: pf.frame.clone(), event: pf.event.clone() })?;
        Ok((frame, e))
    }

    /// The sum-product update of `m` by the named frame, from the cache when possible.
    pub fn updated(&self, m: &Arc<KripkeModel>, frame: &str) -> Result<Arc<UpdateResult>, EvalError> {
        let u = self.frame(frame)?;
        if !self.memo_enabled {
            return Ok(Arc::new(sum_product_update(m, u)?));
        }
        let key = (Arc::as_ptr(m) as usize, frame.to_string());
        if let Some((_, r)) = self.memo.lock().expect("memo poisoned").get(&key) {
            return Ok(Arc::clone(r));
        }
        let result = Arc::new(sum_product_update(m, u)?);
        let mut memo = self.memo.lock().expect("memo poisoned");
        let entry = memo.entry(key).or_insert_with(|| (Arc::clone(m), Arc::clone(&result)));
        Ok(Arc::clone(&entry.1))
    }

    /// Every update result currently cached.
    pub fn cached_results(&self) -> Vec<Arc<UpdateResult>> {
        self.memo.lock().expect("memo poisoned").values().map(|(_, r)| Arc::clone(r)).collect()
    }

    pub fn clear_memo(&self) {
        self.memo.lock().expect("memo poisoned").clear();
    }
}

/// Truth set of an update-free formula.
pub fn el_truth_set(m: &KripkeModel, phi: &Formula) -> Result<Vec<bool>, EvalError> {
    let n = m.world_count();
    Ok(match phi {
        Formula::Top => vec![true; n],
        Formula::Atom(p) => (0..n).map(|s| m.holds(p, s)).collect(),
        Formula::Not(a) => el_truth_set(m, a)?.into_iter().map(|b| !b).collect(),
        Formula::And(a, b) => {
            let (x, y) = (el_truth_set(m, a)?, el_truth_set(m, b)?);
            x.into_iter().zip(y).map(|(p, q)| p && q).collect()
        }
        Formula::Possible(i, a) => {
            let inner = el_truth_set(m, a)?;
            (0..n).map(|s| m.successors(i, s).any(|t| inner[t])).collect()
        }
        Formula::DiamondUpdate(..) | Formula::DiamondUnion(..) => return Err(EvalError::NotEl),
    })
}

/// Truth set of any formula; update modalities are resolved through `ctx`.
pub fn truth_set(m: &Arc<KripkeModel>, phi: &Formula, ctx: &EvalContext) -> Result<Vec<bool>, EvalError> {
    let n = m.world_count();
    Ok(match phi {
        Formula::Top | Formula::Atom(_) => el_truth_set(m, phi)?,
        Formula::Not(a) => truth_set(m, a, ctx)?.into_iter().map(|b| !b).collect(),
        Formula::And(a, b) => {
            let x = truth_set(m, a, ctx)?;
            let y = truth_set(m, b, ctx)?;
            x.into_iter().zip(y).map(|(p, q)| p && q).collect()
        }
        Formula::Possible(i, a) => {
            let inner = truth_set(m, a, ctx)?;
            (0..n).map(|s| m.successors(i, s).any(|t| inner[t])).collect()
        }
        Formula::DiamondUpdate(pf, body) => update_set(m, pf, body, ctx)?,
        Formula::DiamondUnion(pfs, body) => {
            let mut acc = vec![false; n];
            for pf in pfs {
                for (x, y) in acc.iter_mut().zip(update_set(m, pf, body, ctx)?) {
                    *x |= y;
                }
            }
            acc
        }
    })
}

fn update_set(m: &Arc<KripkeModel>, pf: &PointedFrame, body: &Formula, ctx: &EvalContext) -> Result<Vec<bool>, EvalError> {
    let (_, e) = ctx.resolve(pf)?;
    let result = ctx.updated(m, &pf.frame)?;
    let inner = truth_set(&result.model, body, ctx)?;
    // Worlds absent from the update are exactly those where pre(e) fails.
    Ok((0..m.world_count()).map(|s| result.world(s, e).is_some_and(|k| inner[k])).collect())
}

/// Whether `φ` holds at world `s` of `m`.
pub fn model_check(m: &Arc<KripkeModel>, s: usize, phi: &Formula, ctx: &EvalContext) -> Result<bool, EvalError> {
    if s >= m.world_count() {
        return Err(EvalError::UnknownWorld(s.to_string()));
    }
    Ok(truth_set(m, phi, ctx)?[s])
}

/// [`model_check`] with the world given by label.
pub fn model_check_at(m: &Arc<KripkeModel>, world: &str, phi: &Formula, ctx: &EvalContext) -> Result<bool, EvalError> {
    let s = m.world_index(world).ok_or_else(|| EvalError::UnknownWorld(world.to_string()))?;
    model_check(m, s, phi, ctx)
}

/// Whether `φ` holds at every world of `m`.
pub fn check_validity_on(m: &Arc<KripkeModel>, phi: &Formula, ctx: &EvalContext) -> Result<bool, EvalError> {
    Ok(truth_set(m, phi, ctx)?.into_iter().all(|b| b))
}

/// Worlds of `m` where `φ` fails.
pub fn falsifying_worlds(m: &Arc<KripkeModel>, phi: &Formula, ctx: &EvalContext) -> Result<Vec<usize>, EvalError> {
    Ok(truth_set(m, phi, ctx)?.into_iter().enumerate().filter(|(_, b)| !b).map(|(s, _)| s).collect())
}
