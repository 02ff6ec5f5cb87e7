//! A small finite-domain constraint kernel.
//!
//! Domains are interval sets, propagation runs to a fixpoint through a
//! constraint queue, and every domain change is recorded on a trail. The
//! trail serves both depth-first search and externally taken [`MarkId`]s:
//! an owner can post constraints, run searches, and later reset the whole
//! store (domains and constraints) back to any live mark.

mod cancel;
mod constraint;
mod domain;
mod search;

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

pub use cancel::CancelToken;
pub use constraint::{CmpOp, ConstraintSpec, LinearCmp};
pub use domain::Domain;
pub use search::{EnumerateOutcome, Visit};

use constraint::{DomainStore, Failure, PropResult, Propagator};

/// Default number of search nodes a single search may expand.
pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Consistent,
    Failed,
}

/// A position on the trail together with the constraint-store and variable
/// counts at the time it was taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MarkId {
    index: usize,
    serial: u64,
}

#[derive(Clone, Debug)]
struct Mark {
    label: String,
    serial: u64,
    trail_len: usize,
    constraints: usize,
    vars: usize,
    failed: bool,
}

/// A total assignment, indexed by `VarId`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Solution {
    values: Vec<i64>,
}

impl Solution {
    pub fn new(values: Vec<i64>) -> Self {
        Solution { values }
    }

    pub fn value(&self, v: VarId) -> i64 {
        self.values[v.index()]
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error("cannot create a variable with an empty domain")]
    EmptyDomain,
    #[error("unknown variable {0}")]
    UnknownVar(VarId),
    #[error("variable {0} is used as a Boolean but its domain is not within {{0,1}}")]
    NotBoolean(VarId),
    #[error("linear constraint may overflow 128-bit intermediate arithmetic")]
    Overflow,
    #[error("mark is no longer live")]
    DeadMark,
    #[error("search exceeded the node budget of {0}")]
    ResourceLimit(u64),
    #[error("search was cancelled")]
    Cancelled,
}

struct Store {
    domains: Vec<Domain>,
    trail: Vec<(VarId, Domain)>,
    watches: Vec<Vec<u32>>,
    queue: VecDeque<u32>,
    queued: Vec<bool>,
}

impl DomainStore for Store {
    fn dom(&self, v: VarId) -> &Domain {
        &self.domains[v.index()]
    }

    fn update(&mut self, v: VarId, d: Domain) -> PropResult {
        if d.is_empty() {
            return Err(Failure);
        }
        if self.domains[v.index()] == d {
            return Ok(());
        }
        let old = std::mem::replace(&mut self.domains[v.index()], d);
        self.trail.push((v, old));
        for &c in &self.watches[v.index()] {
            if !self.queued[c as usize] {
                self.queued[c as usize] = true;
                self.queue.push_back(c);
            }
        }
        Ok(())
    }
}

impl Store {
    fn undo_to(&mut self, len: usize) {
        while self.trail.len() > len {
            let (v, old) = self.trail.pop().unwrap();
            self.domains[v.index()] = old;
        }
    }

    fn clear_queue(&mut self) {
        for c in self.queue.drain(..) {
            self.queued[c as usize] = false;
        }
    }
}

/// The solver state: domains, constraint store, trail and marks.
///
/// A `Solver` is a single-owner mutable object. Searches (`solve_first`,
/// `enumerate`) always leave domains, trail length and marks as they found
/// them.
pub struct Solver {
    store: Store,
    initial: Vec<Domain>,
    constraints: Vec<ConstraintSpec>,
    props: Vec<Propagator>,
    failed: bool,
    marks: Vec<Mark>,
    next_serial: u64,
    node_budget: u64,
}

impl Default for Solver {
    fn default() -> Self {
        Self::new()
    }
}

impl Solver {
    pub fn new() -> Self {
        Solver {
            store: Store {
                domains: Vec::new(),
                trail: Vec::new(),
                watches: Vec::new(),
                queue: VecDeque::new(),
                queued: Vec::new(),
            },
            initial: Vec::new(),
            constraints: Vec::new(),
            props: Vec::new(),
            failed: false,
            marks: Vec::new(),
            next_serial: 0,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }

    pub fn set_node_budget(&mut self, budget: u64) {
        self.node_budget = budget.max(1);
    }

    pub fn node_budget(&self) -> u64 {
        self.node_budget
    }

    pub fn add_var(&mut self, d: Domain) -> Result<VarId, SolverError> {
        if d.is_empty() {
            return Err(SolverError::EmptyDomain);
        }
        let id = VarId(self.store.domains.len() as u32);
        self.initial.push(d.clone());
        self.store.domains.push(d);
        self.store.watches.push(Vec::new());
        Ok(id)
    }

    pub fn num_vars(&self) -> usize {
        self.store.domains.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn trail_len(&self) -> usize {
        self.store.trail.len()
    }

    pub fn status(&self) -> Status {
        if self.failed {
            Status::Failed
        } else {
            Status::Consistent
        }
    }

    pub fn current_domain(&self, v: VarId) -> Result<&Domain, SolverError> {
        self.store.domains.get(v.index()).ok_or(SolverError::UnknownVar(v))
    }

    /// The domain `v` was created with.
    pub fn initial_domain(&self, v: VarId) -> Result<&Domain, SolverError> {
        self.initial.get(v.index()).ok_or(SolverError::UnknownVar(v))
    }

    pub fn domains(&self) -> &[Domain] {
        &self.store.domains
    }

    fn check_post(&self, c: &ConstraintSpec) -> Result<(), SolverError> {
        for v in c.vars() {
            if v.index() >= self.num_vars() {
                return Err(SolverError::UnknownVar(v));
            }
        }
        for v in c.boolean_vars() {
            if !self.initial[v.index()].is_subset(&Domain::boolean()) {
                return Err(SolverError::NotBoolean(v));
            }
        }
        let linear = match c {
            ConstraintSpec::Linear(l) | ConstraintSpec::ReifLinear { inner: l, .. } => l,
            _ => return Ok(()),
        };
        // Domains only shrink, so a bound on the initial magnitudes holds forever.
        let mut total: i128 = (linear.rhs as i128).abs() + 1;
        for &(v, a) in &linear.terms {
            let d = &self.initial[v.index()];
            let mag = (d.min().unwrap() as i128).abs().max((d.max().unwrap() as i128).abs());
            total = (a as i128)
                .abs()
                .checked_mul(mag)
                .and_then(|t| t.checked_mul(2))
                .and_then(|t| total.checked_add(t))
                .ok_or(SolverError::Overflow)?;
        }
        Ok(())
    }

    /// Adds `c` to the store and propagates to a fixpoint.
    pub fn post(&mut self, c: ConstraintSpec) -> Result<Status, SolverError> {
        self.check_post(&c)?;
        let idx = self.props.len() as u32;
        let mut vars = c.vars();
        vars.sort_unstable();
        vars.dedup();
        for v in vars {
            self.store.watches[v.index()].push(idx);
        }
        self.props.push(Propagator::from_spec(&c));
        self.constraints.push(c);
        self.store.queued.push(false);
        if self.failed {
            return Ok(Status::Failed);
        }
        self.store.queued[idx as usize] = true;
        self.store.queue.push_back(idx);
        Ok(self.fixpoint())
    }

    /// Re-runs every propagator until nothing changes.
    pub fn propagate(&mut self) -> Status {
        if self.failed {
            return Status::Failed;
        }
        for i in 0..self.props.len() {
            if !self.store.queued[i] {
                self.store.queued[i] = true;
                self.store.queue.push_back(i as u32);
            }
        }
        self.fixpoint()
    }

    fn fixpoint(&mut self) -> Status {
        while let Some(c) = self.store.queue.pop_front() {
            self.store.queued[c as usize] = false;
            if self.props[c as usize].propagate(&mut self.store).is_err() {
                self.store.clear_queue();
                self.failed = true;
                return Status::Failed;
            }
        }
        Status::Consistent
    }

    pub fn mark(&mut self, label: impl Into<String>) -> MarkId {
        let serial = self.next_serial;
        self.next_serial += 1;
        self.marks.push(Mark {
            label: label.into(),
            serial,
            trail_len: self.store.trail.len(),
            constraints: self.constraints.len(),
            vars: self.num_vars(),
            failed: self.failed,
        });
        MarkId { index: self.marks.len() - 1, serial }
    }

    pub fn is_live(&self, m: MarkId) -> bool {
        self.marks.get(m.index).is_some_and(|r| r.serial == m.serial)
    }

    pub fn mark_label(&self, m: MarkId) -> Option<&str> {
        self.is_live(m).then(|| self.marks[m.index].label.as_str())
    }

    /// Live marks, oldest first.
    pub fn live_marks(&self) -> Vec<MarkId> {
        self.marks
            .iter()
            .enumerate()
            .map(|(index, r)| MarkId { index, serial: r.serial })
            .collect()
    }

    /// Restores domains, constraint store and variables to their state when
    /// `m` was taken. `m` stays live; later marks are invalidated.
    pub fn reset_to(&mut self, m: MarkId) -> Result<(), SolverError> {
        if !self.is_live(m) {
            return Err(SolverError::DeadMark);
        }
        let rec = self.marks[m.index].clone();
        self.store.clear_queue();
        self.store.undo_to(rec.trail_len);
        self.props.truncate(rec.constraints);
        self.constraints.truncate(rec.constraints);
        self.store.queued.truncate(rec.constraints);
        self.store.domains.truncate(rec.vars);
        self.store.watches.truncate(rec.vars);
        self.initial.truncate(rec.vars);
        for w in &mut self.store.watches {
            while w.last().is_some_and(|&c| c as usize >= rec.constraints) {
                w.pop();
            }
        }
        self.failed = rec.failed;
        self.marks.truncate(m.index + 1);
        Ok(())
    }

    /// Drops `m` and every later mark without touching the state.
    pub fn release(&mut self, m: MarkId) -> Result<(), SolverError> {
        if !self.is_live(m) {
            return Err(SolverError::DeadMark);
        }
        self.marks.truncate(m.index);
        Ok(())
    }

    /// True iff `s` is a total assignment within the initial domains that
    /// satisfies every stored constraint.
    pub fn satisfies(&self, s: &Solution) -> bool {
        s.values.len() == self.num_vars()
            && s.values.iter().zip(&self.initial).all(|(&v, d)| d.contains(v))
            && self.constraints.iter().all(|c| c.holds(&s.values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(terms: &[(VarId, i64)], op: CmpOp, rhs: i64) -> ConstraintSpec {
        ConstraintSpec::Linear(LinearCmp::new(terms.to_vec(), op, rhs))
    }

    #[test]
    fn add_var_domains() {
        let mut s = Solver::new();
        assert_eq!(s.add_var(Domain::boolean()).unwrap(), VarId(0));
        let five = s.add_var(Domain::singleton(5)).unwrap();
        assert_eq!(s.current_domain(five).unwrap().value(), Some(5));
        assert_eq!(s.add_var(Domain::empty()), Err(SolverError::EmptyDomain));
        assert_eq!(s.current_domain(VarId(9)), Err(SolverError::UnknownVar(VarId(9))));
    }

    #[test]
    fn forced_sum() {
        let mut s = Solver::new();
        let x = s.add_var(Domain::boolean()).unwrap();
        let y = s.add_var(Domain::boolean()).unwrap();
        assert_eq!(s.post(lin(&[(x, 1), (y, 1)], CmpOp::Eq, 2)).unwrap(), Status::Consistent);
        assert_eq!(s.current_domain(x).unwrap(), &Domain::singleton(1));
        assert_eq!(s.current_domain(y).unwrap(), &Domain::singleton(1));
    }

    #[test]
    fn infeasible_bound_and_unknown_var() {
        let mut s = Solver::new();
        let x = s.add_var(Domain::boolean()).unwrap();
        assert_eq!(s.post(lin(&[(VarId(3), 1)], CmpOp::Le, 0)), Err(SolverError::UnknownVar(VarId(3))));
        assert_eq!(s.post(lin(&[(x, 1)], CmpOp::Ge, 2)).unwrap(), Status::Failed);
        assert_eq!(s.status(), Status::Failed);
    }

    #[test]
    fn bounds_of_small_sum() {
        let mut s = Solver::new();
        let x = s.add_var(Domain::interval(1, 10)).unwrap();
        let y = s.add_var(Domain::interval(1, 10)).unwrap();
        assert_eq!(s.propagate(), Status::Consistent);
        assert_eq!(s.current_domain(x).unwrap(), &Domain::interval(1, 10));
        s.post(lin(&[(x, 1), (y, 1)], CmpOp::Le, 4)).unwrap();
        assert_eq!(s.current_domain(x).unwrap(), &Domain::interval(1, 3));
        assert_eq!(s.current_domain(y).unwrap(), &Domain::interval(1, 3));
    }

    #[test]
    fn contradictory_unit_clauses() {
        let mut s = Solver::new();
        let x = s.add_var(Domain::boolean()).unwrap();
        s.post(ConstraintSpec::BoolClause { pos: vec![x], neg: vec![] }).unwrap();
        let st = s.post(ConstraintSpec::BoolClause { pos: vec![], neg: vec![x] }).unwrap();
        assert_eq!(st, Status::Failed);
    }

    #[test]
    fn not_equal_removes_value() {
        let mut s = Solver::new();
        let x = s.add_var(Domain::boolean()).unwrap();
        s.post(lin(&[(x, 1)], CmpOp::Ne, 0)).unwrap();
        assert_eq!(s.current_domain(x).unwrap(), &Domain::singleton(1));
    }

    #[test]
    fn boolean_positions_are_checked() {
        let mut s = Solver::new();
        let x = s.add_var(Domain::interval(0, 2)).unwrap();
        let err = s.post(ConstraintSpec::BoolClause { pos: vec![x], neg: vec![] });
        assert_eq!(err, Err(SolverError::NotBoolean(x)));
    }

    #[test]
    fn overflowing_linear_is_rejected() {
        let mut s = Solver::new();
        let x = s.add_var(Domain::interval(i64::MIN, i64::MAX)).unwrap();
        let terms: Vec<_> = (0..4).map(|_| (x, i64::MAX)).collect();
        assert_eq!(s.post(lin(&terms, CmpOp::Le, 0)), Err(SolverError::Overflow));
    }

    #[test]
    fn multiplication_bounds() {
        let mut s = Solver::new();
        let x = s.add_var(Domain::interval(2, 4)).unwrap();
        let y = s.add_var(Domain::interval(-3, 5)).unwrap();
        let z = s.add_var(Domain::interval(9, 100)).unwrap();
        s.post(ConstraintSpec::MulEq { x, y, z }).unwrap();
        assert_eq!(s.current_domain(z).unwrap(), &Domain::interval(9, 20));
        assert_eq!(s.current_domain(y).unwrap(), &Domain::interval(3, 5));
    }

    #[test]
    fn reified_comparison_follows_entailment() {
        let mut s = Solver::new();
        let x = s.add_var(Domain::interval(0, 5)).unwrap();
        let b = s.add_var(Domain::boolean()).unwrap();
        s.post(ConstraintSpec::ReifLinear { b, inner: LinearCmp::unary(x, CmpOp::Ge, 3) }).unwrap();
        assert!(!s.current_domain(b).unwrap().is_singleton());
        s.post(lin(&[(x, 1)], CmpOp::Le, 2)).unwrap();
        assert_eq!(s.current_domain(b).unwrap().value(), Some(0));

        let mut s = Solver::new();
        let x = s.add_var(Domain::interval(0, 5)).unwrap();
        let b = s.add_var(Domain::boolean()).unwrap();
        s.post(ConstraintSpec::ReifLinear { b, inner: LinearCmp::unary(x, CmpOp::Eq, 0) }).unwrap();
        s.post(lin(&[(b, 1)], CmpOp::Eq, 0)).unwrap();
        assert_eq!(s.current_domain(x).unwrap(), &Domain::interval(1, 5));
    }

    #[test]
    fn reset_restores_snapshot_and_kills_later_marks() {
        let mut s = Solver::new();
        let x = s.add_var(Domain::boolean()).unwrap();
        let g = s.mark("ground");
        let before = s.current_domain(x).unwrap().clone();
        s.post(lin(&[(x, 1)], CmpOp::Eq, 1)).unwrap();
        let later = s.mark("later");
        s.add_var(Domain::interval(0, 3)).unwrap();
        s.reset_to(g).unwrap();
        assert_eq!(s.current_domain(x).unwrap(), &before);
        assert_eq!(s.num_constraints(), 0);
        assert_eq!(s.num_vars(), 1);
        assert!(s.is_live(g));
        assert_eq!(s.reset_to(later), Err(SolverError::DeadMark));
        assert_eq!(s.mark_label(g), Some("ground"));
    }

    #[test]
    fn reset_recovers_from_failure() {
        let mut s = Solver::new();
        let x = s.add_var(Domain::boolean()).unwrap();
        let g = s.mark("g");
        s.post(lin(&[(x, 1)], CmpOp::Eq, 3)).unwrap();
        assert_eq!(s.status(), Status::Failed);
        s.reset_to(g).unwrap();
        assert_eq!(s.status(), Status::Consistent);
        assert_eq!(s.post(lin(&[(x, 1)], CmpOp::Eq, 0)).unwrap(), Status::Consistent);
    }

    #[test]
    fn release_drops_mark_without_changing_state() {
        let mut s = Solver::new();
        let x = s.add_var(Domain::boolean()).unwrap();
        let g = s.mark("g");
        let p = s.mark("probe");
        s.post(lin(&[(x, 1)], CmpOp::Eq, 1)).unwrap();
        s.release(p).unwrap();
        assert_eq!(s.live_marks(), vec![g]);
        assert_eq!(s.current_domain(x).unwrap().value(), Some(1));
        assert_eq!(s.release(p), Err(SolverError::DeadMark));
    }
}
