//! Depth-first search with trailing.
//!
//! Variable order: smallest current domain first, ties broken by lowest
//! `VarId`. Value order: ascending. Every node polls the node budget and the
//! cancellation token; the store is restored to the pre-search state on
//! every exit path.

use super::constraint::DomainStore;
use super::{CancelToken, Domain, Solution, Solver, SolverError, Status, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Visit {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnumerateOutcome {
    /// Every solution was visited.
    ExhaustedAll,
    /// The visitor returned [`Visit::Stop`].
    StoppedEarly,
    /// `limit` solutions were visited and at least one more exists.
    LimitHit,
}

struct Ctx<'a> {
    nodes: u64,
    budget: u64,
    cancel: Option<&'a CancelToken>,
    found: u64,
    limit: u64,
    visit: &'a mut dyn FnMut(&Solution) -> Visit,
    outcome: EnumerateOutcome,
}

impl Solver {
    pub fn solve_first(&mut self) -> Result<Option<Solution>, SolverError> {
        self.solve_first_with(None)
    }

    pub fn solve_first_with(&mut self, cancel: Option<&CancelToken>) -> Result<Option<Solution>, SolverError> {
        let mut first = None;
        self.enumerate(u64::MAX, cancel, |s| {
            first = Some(s.clone());
            Visit::Stop
        })?;
        Ok(first)
    }

    /// Visits each solution of the current store exactly once, in the
    /// deterministic search order.
    pub fn enumerate<F>(
        &mut self,
        limit: u64,
        cancel: Option<&CancelToken>,
        mut visit: F,
    ) -> Result<EnumerateOutcome, SolverError>
    where
        F: FnMut(&Solution) -> Visit,
    {
        if self.failed {
            return Ok(EnumerateOutcome::ExhaustedAll);
        }
        let mut ctx = Ctx {
            nodes: 0,
            budget: self.node_budget,
            cancel,
            found: 0,
            limit: limit.max(1),
            visit: &mut visit,
            outcome: EnumerateOutcome::ExhaustedAll,
        };
        let checkpoint = (self.store.trail.len(), self.failed);
        let result = self.dfs(&mut ctx);
        self.restore(checkpoint);
        result.map(|_| ctx.outcome)
    }

    fn restore(&mut self, (trail_len, failed): (usize, bool)) {
        self.store.clear_queue();
        self.store.undo_to(trail_len);
        self.failed = failed;
    }

    fn select_var(&self) -> Option<VarId> {
        let mut best: Option<(u64, usize)> = None;
        for (i, d) in self.store.domains.iter().enumerate() {
            let size = d.size();
            if size > 1 && best.is_none_or(|(b, _)| size < b) {
                best = Some((size, i));
            }
        }
        best.map(|(_, i)| VarId(i as u32))
    }

    /// Returns `Ok(true)` when the search must stop.
    fn dfs(&mut self, ctx: &mut Ctx<'_>) -> Result<bool, SolverError> {
        ctx.nodes += 1;
        if ctx.nodes > ctx.budget {
            return Err(SolverError::ResourceLimit(ctx.budget));
        }
        if ctx.cancel.is_some_and(|c| c.is_cancelled()) {
            return Err(SolverError::Cancelled);
        }
        let Some(var) = self.select_var() else {
            if ctx.found == ctx.limit {
                ctx.outcome = EnumerateOutcome::LimitHit;
                return Ok(true);
            }
            ctx.found += 1;
            let sol = Solution::new(self.store.domains.iter().map(|d| d.min().unwrap()).collect());
            debug_assert!(self.satisfies(&sol), "search produced a non-solution");
            if (ctx.visit)(&sol) == Visit::Stop {
                ctx.outcome = EnumerateOutcome::StoppedEarly;
                return Ok(true);
            }
            return Ok(false);
        };
        let dom = self.store.domains[var.index()].clone();
        for value in dom.iter() {
            let checkpoint = (self.store.trail.len(), self.failed);
            let consistent = self.store.update(var, Domain::singleton(value)).is_ok()
                && self.fixpoint() == Status::Consistent;
            let stop = if consistent { self.dfs(ctx)? } else { false };
            self.restore(checkpoint);
            if stop {
                return Ok(true);
            }
        }
        Ok(false)
    }
}
