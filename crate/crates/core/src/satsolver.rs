//! Satisfiability over transitive frames.
//!
//! [`sat_k4`] is a tableau for K4 on negation normal form. A world's label is
//! saturated propositionally (branching on disjunctions), then every
//! `<a>ψ` in it gets an a-successor labelled `{ψ} ∪ {χ, [a]χ : [a]χ in label}`.
//! If some existing world already carries a superset of that set, the
//! successor is that world (blocking); otherwise a new world is expanded.
//! There is no seriality rule, so `[a] false` is satisfiable. Open tableaux
//! become witnesses by closing each agent's edges transitively; every
//! witness is re-checked by the model checker before it is returned.
//!
//! [`brute_force_sat`] enumerates small transitive models and serves as an
//! independent oracle.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::model::{transitive_closure, KripkeModel, Relation};
use crate::reduction::{reduce_to_el, ReductionError};
use crate::semantics::{el_truth_set, model_check, EvalContext, EvalError};
use crate::syntax::{AgentName, Fluent, Formula};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SatError {
    #[error("formula contains update modalities; reduce it first")]
    NotEl,
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("extracted witness does not satisfy the formula: {0}")]
    WitnessRejected(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "SAT")]
    Sat,
    #[serde(rename = "UNSAT")]
    Unsat,
}

/// A verdict, with a pointed transitive witness model when satisfiable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SatOutcome {
    pub verdict: Verdict,
    pub witness: Option<KripkeModel>,
}

impl SatOutcome {
    pub fn is_sat(&self) -> bool {
        self.verdict == Verdict::Sat
    }

    fn unsat() -> Self {
        SatOutcome { verdict: Verdict::Unsat, witness: None }
    }
}

type Id = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    Top,
    Bot,
    Lit(u32, bool),
    And(Id, Id),
    Or(Id, Id),
    Dia(u32, Id),
    Box(u32, Id),
}

#[derive(Default)]
struct Arena {
    nodes: Vec<Node>,
    index: HashMap<Node, Id>,
    fluents: Vec<Fluent>,
    fluent_ids: HashMap<Fluent, u32>,
    agents: Vec<AgentName>,
    agent_ids: HashMap<AgentName, u32>,
}

impl Arena {
    fn intern(&mut self, node: Node) -> Id {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let id = self.nodes.len() as Id;
        self.nodes.push(node);
        self.index.insert(node, id);
        id
    }

    fn fluent(&mut self, p: &Fluent) -> u32 {
        if let Some(&k) = self.fluent_ids.get(p) {
            return k;
        }
        let k = self.fluents.len() as u32;
        self.fluents.push(p.clone());
        self.fluent_ids.insert(p.clone(), k);
        k
    }

    fn agent(&mut self, a: &AgentName) -> u32 {
        if let Some(&k) = self.agent_ids.get(a) {
            return k;
        }
        let k = self.agents.len() as u32;
        self.agents.push(a.clone());
        self.agent_ids.insert(a.clone(), k);
        k
    }

    fn and(&mut self, a: Id, b: Id) -> Id {
        match (self.nodes[a as usize], self.nodes[b as usize]) {
            (Node::Bot, _) | (_, Node::Bot) => self.intern(Node::Bot),
            (Node::Top, _) => b,
            (_, Node::Top) => a,
            _ if a == b => a,
            _ => self.intern(Node::And(a.min(b), a.max(b))),
        }
    }

    fn or(&mut self, a: Id, b: Id) -> Id {
        match (self.nodes[a as usize], self.nodes[b as usize]) {
            (Node::Top, _) | (_, Node::Top) => self.intern(Node::Top),
            (Node::Bot, _) => b,
            (_, Node::Bot) => a,
            _ if a == b => a,
            _ => self.intern(Node::Or(a.min(b), a.max(b))),
        }
    }

    /// Negation normal form of `phi` (or of its negation when `positive` is false).
    fn nnf(&mut self, phi: &Formula, positive: bool) -> Result<Id, SatError> {
        Ok(match phi {
            Formula::Top => self.intern(if positive { Node::Top } else { Node::Bot }),
            Formula::Atom(p) => {
                let k = self.fluent(p);
                self.intern(Node::Lit(k, positive))
            }
            Formula::Not(a) => self.nnf(a, !positive)?,
            Formula::And(a, b) => {
                let (x, y) = (self.nnf(a, positive)?, self.nnf(b, positive)?);
                if positive {
                    self.and(x, y)
                } else {
                    self.or(x, y)
                }
            }
            Formula::Possible(i, a) => {
                let k = self.agent(i);
                let x = self.nnf(a, positive)?;
                self.intern(if positive { Node::Dia(k, x) } else { Node::Box(k, x) })
            }
            Formula::DiamondUpdate(..) | Formula::DiamondUnion(..) => return Err(SatError::NotEl),
        })
    }
}

/// Lazy enumeration of clash-free propositional saturations of a set.
struct Saturations {
    stack: Vec<(BTreeSet<Id>, Vec<Id>)>,
}

impl Saturations {
    fn new(initial: &[Id]) -> Self {
        Saturations { stack: vec![(BTreeSet::new(), initial.to_vec())] }
    }

    fn next(&mut self, arena: &Arena) -> Option<BTreeSet<Id>> {
        'frames: while let Some((mut set, mut pending)) = self.stack.pop() {
            while let Some(x) = pending.pop() {
                if set.contains(&x) {
                    continue;
                }
                match arena.nodes[x as usize] {
                    Node::Bot => continue 'frames,
                    Node::Lit(p, pol) => {
                        if arena.index.get(&Node::Lit(p, !pol)).is_some_and(|c| set.contains(c)) {
                            continue 'frames;
                        }
                    }
                    Node::And(a, b) => {
                        pending.push(a);
                        pending.push(b);
                    }
                    Node::Or(a, b) => {
                        if !set.contains(&a) && !set.contains(&b) {
                            let mut alt = pending.clone();
                            alt.push(b);
                            self.stack.push((set.clone(), alt));
                            pending.push(a);
                        }
                    }
                    Node::Top | Node::Dia(..) | Node::Box(..) => {}
                }
                set.insert(x);
            }
            return Some(set);
        }
        None
    }
}

struct World {
    label: BTreeSet<Id>,
    edges: Vec<(u32, usize)>,
}

struct Tableau {
    arena: Arena,
    worlds: Vec<World>,
    refuted: HashSet<Vec<Id>>,
    depth: usize,
    max_depth: usize,
}

impl Tableau {
    /// Expands a new world for `initial`; its index on success.
    fn expand(&mut self, initial: Vec<Id>) -> Option<usize> {
        if self.refuted.contains(&initial) {
            return None;
        }
        self.depth += 1;
        self.max_depth = self.max_depth.max(self.depth);
        let mut saturations = Saturations::new(&initial);
        let mut found = None;
        while let Some(label) = saturations.next(&self.arena) {
            let mark = self.worlds.len();
            self.worlds.push(World { label, edges: Vec::new() });
            if self.fulfil(mark) {
                found = Some(mark);
                break;
            }
            self.worlds.truncate(mark);
        }
        self.depth -= 1;
        if found.is_none() {
            self.refuted.insert(initial);
        }
        found
    }

    /// Gives every diamond of world `w` a successor.
    fn fulfil(&mut self, w: usize) -> bool {
        let label: Vec<Id> = self.worlds[w].label.iter().copied().collect();
        for &x in &label {
            let Node::Dia(a, psi) = self.arena.nodes[x as usize] else { continue };
            let mut child: BTreeSet<Id> = BTreeSet::from([psi]);
            for &y in &label {
                if let Node::Box(b, chi) = self.arena.nodes[y as usize] {
                    if b == a {
                        child.insert(chi);
                        child.insert(y);
                    }
                }
            }
            let target = match self.worlds.iter().position(|v| child.is_subset(&v.label)) {
                Some(v) => v,
                None => match self.expand(child.into_iter().collect()) {
                    Some(v) => v,
                    None => return false,
                },
            };
            self.worlds[w].edges.push((a, target));
        }
        true
    }

    fn witness(&self, extra_agents: &BTreeSet<AgentName>) -> KripkeModel {
        let mut m = KripkeModel::with_worlds((0..self.worlds.len()).map(|k| format!("w{k}"))).expect("distinct labels");
        for a in extra_agents {
            m.declare_agent(a.clone());
        }
        let mut per_agent: BTreeMap<u32, BTreeSet<(usize, usize)>> = BTreeMap::new();
        for (k, w) in self.worlds.iter().enumerate() {
            for &(a, t) in &w.edges {
                per_agent.entry(a).or_default().insert((k, t));
            }
            for &x in &w.label {
                if let Node::Lit(p, true) = self.arena.nodes[x as usize] {
                    m.set_true(self.arena.fluents[p as usize].clone(), k);
                }
            }
        }
        for (a, pairs) in per_agent {
            let rel: Relation = transitive_closure(&pairs).into_iter().collect();
            m.set_relation(self.arena.agents[a as usize].clone(), rel);
        }
        m.set_designated(Some(0));
        m
    }
}

fn verify(m: &KripkeModel, phi: &Formula) -> Result<(), SatError> {
    if !m.validate().is_empty() {
        return Err(SatError::WitnessRejected("witness is not transitive".into()));
    }
    let holds = el_truth_set(m, phi)?;
    if !holds[m.designated().unwrap_or(0)] {
        return Err(SatError::WitnessRejected(format!("witness falsifies {phi}")));
    }
    Ok(())
}

/// K4 satisfiability of an update-free formula.
pub fn sat_k4(phi: &Formula) -> Result<SatOutcome, SatError> {
    let mut arena = Arena::default();
    let root = arena.nnf(phi, true)?;
    let closure_size = arena.nodes.len();
    let mut tableau = Tableau { arena, worlds: Vec::new(), refuted: HashSet::new(), depth: 0, max_depth: 0 };
    let result = tableau.expand(vec![root]);
    debug_assert!(
        closure_size >= usize::BITS as usize - 1 || tableau.max_depth <= 1usize << closure_size,
        "tableau branch deeper than the number of label sets"
    );
    match result {
        None => Ok(SatOutcome::unsat()),
        Some(_) => {
            let witness = tableau.witness(&phi.agents());
            verify(&witness, phi)?;
            Ok(SatOutcome { verdict: Verdict::Sat, witness: Some(witness) })
        }
    }
}

/// K4 validity: `φ` is valid iff `~φ` is unsatisfiable.
pub fn valid_k4(phi: &Formula) -> Result<bool, SatError> {
    Ok(!sat_k4(&Formula::not(phi.clone()))?.is_sat())
}

/// Satisfiability of an update formula: reduce, solve, and check the
/// witness against the original formula.
pub fn sat_del(phi: &Formula, ctx: &EvalContext) -> Result<SatOutcome, SatError> {
    let reduced = reduce_to_el(phi, ctx.frames())?;
    let outcome = sat_k4(&reduced.formula)?;
    if let Some(w) = &outcome.witness {
        let w = Arc::new(w.clone());
        if !model_check(&w, 0, phi, ctx)? {
            return Err(SatError::WitnessRejected(format!("witness falsifies {phi}")));
        }
    }
    Ok(outcome)
}

/// Compiled formula for evaluation on up to eight worlds with bitmasks.
struct MaskProgram {
    ops: Vec<MaskOp>,
}

enum MaskOp {
    Top,
    Atom(usize),
    Not(usize),
    And(usize, usize),
    Possible(usize, usize),
}

impl MaskProgram {
    fn compile(phi: &Formula, fluents: &[Fluent], agents: &[AgentName]) -> Result<Self, SatError> {
        fn go(phi: &Formula, fl: &[Fluent], ag: &[AgentName], ops: &mut Vec<MaskOp>) -> Result<usize, SatError> {
            let op = match phi {
                Formula::Top => MaskOp::Top,
                Formula::Atom(p) => MaskOp::Atom(fl.iter().position(|q| q == p).expect("fluent collected")),
                Formula::Not(a) => MaskOp::Not(go(a, fl, ag, ops)?),
                Formula::And(a, b) => {
                    let x = go(a, fl, ag, ops)?;
                    MaskOp::And(x, go(b, fl, ag, ops)?)
                }
                Formula::Possible(i, a) => {
                    MaskOp::Possible(ag.iter().position(|j| j == i).expect("agent collected"), go(a, fl, ag, ops)?)
                }
                Formula::DiamondUpdate(..) | Formula::DiamondUnion(..) => return Err(SatError::NotEl),
            };
            ops.push(op);
            Ok(ops.len() - 1)
        }
        let mut ops = Vec::new();
        go(phi, fluents, agents, &mut ops)?;
        Ok(MaskProgram { ops })
    }

    /// Truth mask at the root, given per-agent successor masks and per-fluent truth masks.
    fn eval(&self, worlds: usize, succ: &[Vec<u8>], val: &[u8], scratch: &mut Vec<u8>) -> u8 {
        let all = ((1u16 << worlds) - 1) as u8;
        scratch.clear();
        for op in &self.ops {
            let v = match *op {
                MaskOp::Top => all,
                MaskOp::Atom(p) => val[p],
                MaskOp::Not(a) => !scratch[a] & all,
                MaskOp::And(a, b) => scratch[a] & scratch[b],
                MaskOp::Possible(i, a) => {
                    let inner = scratch[a];
                    (0..worlds).filter(|&s| succ[i][s] & inner != 0).fold(0u8, |m, s| m | (1 << s))
                }
            };
            scratch.push(v);
        }
        *scratch.last().expect("nonempty program")
    }
}

/// All transitive relations on `n` worlds, as successor masks.
fn transitive_relations(n: usize) -> Vec<Vec<u8>> {
    let pairs = n * n;
    let mut out = Vec::new();
    for bits in 0u32..(1u32 << pairs) {
        let succ: Vec<u8> = (0..n).map(|s| ((bits >> (s * n)) & ((1 << n) - 1)) as u8).collect();
        let transitive = (0..n).all(|s| {
            (0..n).filter(|&t| succ[s] & (1 << t) != 0).all(|t| succ[t] & !succ[s] == 0)
        });
        if transitive {
            out.push(succ);
        }
    }
    out
}

/// Exhaustive search over transitive models with 1 to `max_worlds` worlds
/// (at most 4) over the formula's own agents and fluents. Only models in
/// which every world is reachable from the evaluation world are visited,
/// since truth at that world depends on nothing else.
pub fn brute_force_sat(phi: &Formula, max_worlds: usize) -> Result<Option<KripkeModel>, SatError> {
    assert!(max_worlds <= 4, "brute force is limited to four worlds");
    let fluents: Vec<Fluent> = phi.fluents().into_iter().collect();
    let agents: Vec<AgentName> = phi.agents().into_iter().collect();
    let program = MaskProgram::compile(phi, &fluents, &agents)?;
    let mut scratch = Vec::new();
    for n in 1..=max_worlds {
        let relations = transitive_relations(n);
        let combos = relations.len().pow(agents.len() as u32);
        let valuations = 1usize << (n * fluents.len());
        for combo in 0..combos {
            let mut c = combo;
            let succ: Vec<Vec<u8>> = (0..agents.len())
                .map(|_| {
                    let r = relations[c % relations.len()].clone();
                    c /= relations.len();
                    r
                })
                .collect();
            let mut reach = 1u8;
            loop {
                let next = (0..n).filter(|&s| reach & (1 << s) != 0).fold(reach, |m, s| {
                    succ.iter().fold(m, |m, r| m | r[s])
                });
                if next == reach {
                    break;
                }
                reach = next;
            }
            if n > 1 && reach != ((1u16 << n) - 1) as u8 {
                continue;
            }
            for v in 0..valuations {
                let val: Vec<u8> = (0..fluents.len()).map(|p| ((v >> (p * n)) & ((1 << n) - 1)) as u8).collect();
                if program.eval(n, &succ, &val, &mut scratch) & 1 != 0 {
                    let mut m = KripkeModel::with_worlds((0..n).map(|k| format!("w{k}"))).expect("distinct labels");
                    for a in &agents {
                        m.declare_agent(a.clone());
                    }
                    for (a, r) in agents.iter().zip(&succ) {
                        for (s, mask) in r.iter().enumerate() {
                            for t in 0..n {
                                if mask & (1 << t) != 0 {
                                    m.add_edge(a, s, t);
                                }
                            }
                        }
                    }
                    for (p, mask) in fluents.iter().zip(&val) {
                        for s in 0..n {
                            if mask & (1 << s) != 0 {
                                m.set_true(p.clone(), s);
                            }
                        }
                    }
                    m.set_designated(Some(0));
                    return Ok(Some(m));
                }
            }
        }
    }
    Ok(None)
}
