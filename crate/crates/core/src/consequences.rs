//! Valid domains: for each model variable, the values taken in at least one
//! solution of the current store.
//!
//! Two methods give identical results. Enumeration unions every solution and
//! also yields the solution count. Probing asks one feasibility question per
//! unwitnessed `(variable, value)` pair, reusing each witness solution for
//! all variables, and reports variables one at a time as they finish.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::solver::{CancelToken, CmpOp, ConstraintSpec, Domain, EnumerateOutcome, LinearCmp, Solution, SolverError, Status, VarId, Visit};
use crate::translate::CompiledModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Enumerate,
    Probe,
}

/// Per-variable valid domains plus how they were obtained.
#[derive(Clone, Debug)]
pub struct Consequences {
    /// Model variable order: features in pre-order, then attributes.
    pub entries: Vec<(String, Domain)>,
    pub method: Method,
    /// False when the run was cut short; `entries` then holds only the
    /// variables finished so far.
    pub complete: bool,
    pub solution_count: Option<u64>,
    vars: Vec<VarId>,
    witnesses: Vec<Solution>,
}

impl Consequences {
    pub fn get(&self, name: &str) -> Option<&Domain> {
        self.entries.iter().find(|(n, _)| n == name).map(|e| &e.1)
    }

    /// Full store solutions (auxiliaries included); every reported value is
    /// taken by at least one of them.
    pub fn witnesses(&self) -> &[Solution] {
        &self.witnesses
    }

    /// A stored solution giving `name` the value `value`.
    pub fn witness(&self, name: &str, value: i64) -> Option<&Solution> {
        let i = self.entries.iter().position(|(n, _)| n == name)?;
        let var = self.vars[i];
        self.witnesses.iter().find(|s| s.value(var) == value)
    }

    /// Same variables with the same domains, ignoring method and count.
    pub fn same_domains(&self, other: &Consequences) -> bool {
        self.entries == other.entries
    }

    fn partial(&self) -> Box<Consequences> {
        Box::new(Consequences { complete: false, solution_count: None, ..self.clone() })
    }
}

impl Serialize for Consequences {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        struct Vars<'a>(&'a [(String, Domain)]);
        struct Values<'a>(&'a Domain);
        impl Serialize for Vars<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(Some(self.0.len()))?;
                for (name, d) in self.0 {
                    m.serialize_entry(name, &Values(d))?;
                }
                m.end()
            }
        }
        impl Serialize for Values<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut st = s.serialize_struct("Entry", 1)?;
                st.serialize_field("values", self.0)?;
                st.end()
            }
        }
        let mut st = s.serialize_struct("Consequences", 3)?;
        st.serialize_field("variables", &Vars(&self.entries))?;
        st.serialize_field("complete", &self.complete)?;
        st.serialize_field("solutionCount", &self.solution_count)?;
        st.end()
    }
}

#[derive(Debug, Error)]
pub enum ConsequenceError {
    #[error("the model has no valid product")]
    InfeasibleModel,
    #[error("node budget exhausted")]
    ResourceLimit { partial: Box<Consequences> },
    #[error("computation cancelled")]
    Cancelled { partial: Box<Consequences> },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn empty_result(cm: &CompiledModel, method: Method) -> Consequences {
    let vars = cm.vmap.model_vars();
    Consequences {
        entries: vars.iter().map(|v| (v.name.clone(), Domain::empty())).collect(),
        method,
        complete: true,
        solution_count: (method == Method::Enumerate).then_some(0),
        vars: vars.iter().map(|v| v.var).collect(),
        witnesses: Vec::new(),
    }
}

/// Unions the projections of all solutions. `complete` is false when more
/// than `limit` solutions exist.
pub fn valid_domains_enumerate(cm: &mut CompiledModel, limit: u64) -> Result<Consequences, ConsequenceError> {
    let vars: Vec<VarId> = cm.vmap.model_vars().iter().map(|v| v.var).collect();
    let mut seen: Vec<BTreeSet<i64>> = vec![BTreeSet::new(); vars.len()];
    let mut witnesses = Vec::new();
    let mut count = 0u64;
    let outcome = cm.solver.enumerate(limit, None, |s| {
        count += 1;
        let mut new = false;
        for (set, &v) in seen.iter_mut().zip(&vars) {
            new |= set.insert(s.value(v));
        }
        if new {
            witnesses.push(s.clone());
        }
        Visit::Continue
    });
    let result = Consequences {
        entries: cm
            .vmap
            .model_vars()
            .iter()
            .zip(&seen)
            .map(|(v, set)| (v.name.clone(), Domain::from_values(set.iter().copied())))
            .collect(),
        method: Method::Enumerate,
        complete: true,
        solution_count: Some(count),
        vars,
        witnesses,
    };
    match outcome {
        Ok(EnumerateOutcome::ExhaustedAll) => Ok(result),
        Ok(_) => Ok(Consequences { complete: false, solution_count: None, ..result }),
        Err(SolverError::ResourceLimit(_)) => Err(ConsequenceError::ResourceLimit { partial: result.partial() }),
        Err(e) => Err(e.into()),
    }
}

/// Probes each remaining candidate value, calling `emit` as each variable's
/// domain is final. On cancellation the partial result holds exactly the
/// emitted variables.
pub fn valid_domains_probe<F>(cm: &mut CompiledModel, cancel: &CancelToken, mut emit: F) -> Result<Consequences, ConsequenceError>
where
    F: FnMut(&str, &Domain),
{
    let solver = &mut cm.solver;
    let model_vars = cm.vmap.model_vars();
    let vars: Vec<VarId> = model_vars.iter().map(|v| v.var).collect();
    let mut out = Consequences {
        entries: Vec::with_capacity(vars.len()),
        method: Method::Probe,
        complete: true,
        solution_count: None,
        vars: vars.clone(),
        witnesses: Vec::new(),
    };

    let outer = solver.mark("probe");
    if solver.propagate() == Status::Failed {
        solver.reset_to(outer)?;
        solver.release(outer)?;
        for v in model_vars {
            if cancel.is_cancelled() {
                return Err(ConsequenceError::Cancelled { partial: out.partial() });
            }
            emit(&v.name, &Domain::empty());
            out.entries.push((v.name.clone(), Domain::empty()));
        }
        return Ok(out);
    }
    let candidates: Vec<Domain> = vars.iter().map(|&v| solver.current_domain(v).cloned()).collect::<Result<_, _>>()?;
    let mut witnessed: Vec<BTreeSet<i64>> = vec![BTreeSet::new(); vars.len()];

    let result = (|| {
        for (i, info) in model_vars.iter().enumerate() {
            if cancel.is_cancelled() {
                return Err(ConsequenceError::Cancelled { partial: out.partial() });
            }
            for d in candidates[i].iter() {
                if witnessed[i].contains(&d) {
                    continue;
                }
                if cancel.is_cancelled() {
                    return Err(ConsequenceError::Cancelled { partial: out.partial() });
                }
                let probe = solver.mark("probe value");
                let found = match solver.post(ConstraintSpec::Linear(LinearCmp::unary(vars[i], CmpOp::Eq, d))) {
                    Ok(Status::Consistent) => solver.solve_first_with(Some(cancel)),
                    Ok(Status::Failed) => Ok(None),
                    Err(e) => Err(e),
                };
                solver.reset_to(probe)?;
                solver.release(probe)?;
                match found {
                    Ok(Some(sol)) => {
                        for (set, &v) in witnessed.iter_mut().zip(&vars) {
                            set.insert(sol.value(v));
                        }
                        out.witnesses.push(sol);
                    }
                    Ok(None) => {}
                    Err(SolverError::Cancelled) => return Err(ConsequenceError::Cancelled { partial: out.partial() }),
                    Err(SolverError::ResourceLimit(_)) => {
                        return Err(ConsequenceError::ResourceLimit { partial: out.partial() })
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let domain = Domain::from_values(witnessed[i].iter().copied());
            emit(&info.name, &domain);
            out.entries.push((info.name.clone(), domain));
        }
        Ok(())
    })();

    solver.reset_to(outer)?;
    solver.release(outer)?;
    result.map(|_| out)
}

/// Consequences of the model alone: a feasibility check followed by a full
/// probe. Computed once per compiled model and cached.
pub fn model_consequences(cm: &mut CompiledModel) -> Result<Arc<Consequences>, ConsequenceError> {
    if let Some(c) = cm.model_consequences.get() {
        return Ok(Arc::clone(c));
    }
    match cm.solver.solve_first() {
        Ok(Some(_)) => {}
        Ok(None) => return Err(ConsequenceError::InfeasibleModel),
        Err(SolverError::ResourceLimit(_)) => {
            return Err(ConsequenceError::ResourceLimit { partial: Box::new(empty_partial(cm)) })
        }
        Err(e) => return Err(e.into()),
    }
    let c = Arc::new(valid_domains_probe(cm, &CancelToken::new(), |_, _| {})?);
    Ok(Arc::clone(cm.model_consequences.get_or_init(|| c)))
}

fn empty_partial(cm: &CompiledModel) -> Consequences {
    Consequences { entries: Vec::new(), complete: false, solution_count: None, ..empty_result(cm, Method::Probe) }
}

/// Counts solutions of the current store, stopping after `limit`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolutionCount {
    pub count: u64,
    /// False when more than `count` solutions exist.
    pub exact: bool,
}

/// On `ResourceLimit` the partial count is carried in the error.
pub fn count_solutions(cm: &mut CompiledModel, limit: u64) -> Result<SolutionCount, CountError> {
    let mut count = 0;
    match cm.solver.enumerate(limit, None, |_| {
        count += 1;
        Visit::Continue
    }) {
        Ok(outcome) => Ok(SolutionCount { count, exact: outcome == EnumerateOutcome::ExhaustedAll }),
        Err(SolverError::ResourceLimit(_)) => Err(CountError::ResourceLimit { partial: count }),
        Err(e) => Err(CountError::Solver(e)),
    }
}

#[derive(Debug, Error)]
pub enum CountError {
    #[error("node budget exhausted after {partial} solutions")]
    ResourceLimit { partial: u64 },
    #[error(transparent)]
    Solver(SolverError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Analyses {
    pub dead: Vec<String>,
    pub core: Vec<String>,
    pub count: u64,
}

/// Dead and core features from the model consequences, and the exact
/// solution count.
pub fn analyses(cm: &mut CompiledModel) -> Result<Analyses, ConsequenceError> {
    let mc = model_consequences(cm)?;
    let (mut dead, mut core) = (Vec::new(), Vec::new());
    for info in cm.vmap.model_vars() {
        if !matches!(info.model_var, crate::model::ModelVar::Feature(_)) {
            continue;
        }
        let d = mc.get(&info.name).expect("every model variable has an entry");
        if !d.contains(1) {
            dead.push(info.name.clone());
        }
        if !d.contains(0) {
            core.push(info.name.clone());
        }
    }
    let count = match count_solutions(cm, u64::MAX) {
        Ok(c) => c.count,
        Err(CountError::ResourceLimit { .. }) => {
            return Err(ConsequenceError::ResourceLimit { partial: Box::new(empty_partial(cm)) })
        }
        Err(CountError::Solver(e)) => return Err(e.into()),
    };
    Ok(Analyses { dead, core, count })
}
