//! Interactive configuration sessions.
//!
//! A session owns a compiled model whose ground state (after the model
//! consequences were computed) is recorded as a solver mark. Decisions are
//! unary restrictions posted on top of it; retracting any decision resets to
//! the ground mark and replays the survivors in order.
//!
//! After every decision or retraction the epoch advances and one background
//! thread recomputes the valid domains by probing. Variables become Ready one
//! at a time; only Ready variables accept new decisions, and only values in
//! their Ready domain, which keeps the store feasible.
//!
//! Lock order is `ops` → `compiled` → `shared`. The worker only takes
//! `compiled` and, briefly, `shared`.

mod restriction;
mod transcript;

use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use parking_lot::{Condvar, Mutex};
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::consequences::{model_consequences, valid_domains_probe, ConsequenceError, Consequences};
use crate::model::FeatureModel;
use crate::solver::{CancelToken, Domain, MarkId, SolverError, Status, DEFAULT_NODE_BUDGET};
use crate::translate::{compile_shared, CompiledModel, TranslateError, VariableMap};

pub use restriction::Restriction;
pub use transcript::{parse_transcript, replay, ReplayError, TranscriptStep};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionId(pub u64);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Decision {
    pub id: DecisionId,
    /// Canonical variable name (attributes as `Owner.name`).
    pub variable: String,
    pub restriction: Restriction,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error("the model has no valid product")]
    InfeasibleModel,
    #[error("node budget exhausted while pre-processing the model")]
    ResourceLimit,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl From<ConsequenceError> for SessionError {
    fn from(e: ConsequenceError) -> Self {
        match e {
            ConsequenceError::InfeasibleModel => SessionError::InfeasibleModel,
            ConsequenceError::ResourceLimit { .. } | ConsequenceError::Cancelled { .. } => SessionError::ResourceLimit,
            ConsequenceError::Solver(e) => SessionError::Solver(e),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Rejected {
    #[error("`{0}` is still being recomputed")]
    VariablePending(String),
    #[error("no value allowed by the restriction on `{0}` is valid")]
    EmptyIntersection(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
}

impl Rejected {
    pub fn code(&self) -> &'static str {
        match self {
            Rejected::VariablePending(_) => "variable_pending",
            Rejected::EmptyIntersection(_) => "empty_intersection",
            Rejected::UnknownVariable(_) => "unknown_variable",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("unknown decision {}", .0 .0)]
pub struct UnknownDecision(pub DecisionId);

/// A model compiled and pre-processed once, from which sessions are made.
#[derive(Clone, Debug)]
pub struct PreparedModel {
    pub model: Arc<FeatureModel>,
    pub consequences: Arc<Consequences>,
    pub node_budget: u64,
}

pub fn prepare_model(m: &FeatureModel) -> Result<PreparedModel, SessionError> {
    prepare_model_with_budget(Arc::new(m.clone()), DEFAULT_NODE_BUDGET)
}

pub fn prepare_model_with_budget(model: Arc<FeatureModel>, node_budget: u64) -> Result<PreparedModel, SessionError> {
    let mut cm = compile_shared(Arc::clone(&model))?;
    cm.solver.set_node_budget(node_budget);
    let consequences = model_consequences(&mut cm)?;
    Ok(PreparedModel { model, consequences, node_budget })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ComputeStatus {
    Idle,
    Running,
    /// The last recomputation ran out of node budget; unfinished variables
    /// stay Pending until the next decision or retraction.
    ResourceLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum VarStatus {
    Ready,
    Pending,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariableState {
    pub name: String,
    /// `None` while Pending.
    pub values: Option<Domain>,
}

impl VariableState {
    pub fn status(&self) -> VarStatus {
        if self.values.is_some() {
            VarStatus::Ready
        } else {
            VarStatus::Pending
        }
    }
}

/// Consistent view of a session at one instant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionSnapshot {
    pub epoch: u64,
    pub decisions: Vec<Decision>,
    pub variables: Vec<VariableState>,
    pub computing: ComputeStatus,
}

impl SessionSnapshot {
    pub fn values(&self, name: &str) -> Option<&Domain> {
        self.variables.iter().find(|v| v.name == name)?.values.as_ref()
    }

    pub fn all_ready(&self) -> bool {
        self.variables.iter().all(|v| v.values.is_some())
    }
}

/// JSON: `{"epoch":e,"decisions":[...],"variables":{"<name>":{"status":"ready","values":[[lo,hi]]}},"computing":"idle"}`.
impl Serialize for SessionSnapshot {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        struct Vars<'a>(&'a [VariableState]);
        struct Var<'a>(&'a VariableState);
        impl Serialize for Vars<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(Some(self.0.len()))?;
                for v in self.0 {
                    m.serialize_entry(&v.name, &Var(v))?;
                }
                m.end()
            }
        }
        impl Serialize for Var<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut st = s.serialize_struct("Variable", 2)?;
                st.serialize_field("status", &self.0.status())?;
                st.serialize_field("values", &self.0.values)?;
                st.end()
            }
        }
        let mut st = s.serialize_struct("SessionSnapshot", 4)?;
        st.serialize_field("epoch", &self.epoch)?;
        st.serialize_field("decisions", &self.decisions)?;
        st.serialize_field("variables", &Vars(&self.variables))?;
        st.serialize_field("computing", &self.computing)?;
        st.end()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum SessionEvent {
    Epoch { epoch: u64 },
    VariableReady { epoch: u64, variable: String, values: Domain },
    Complete { epoch: u64 },
}

impl SessionEvent {
    pub fn epoch(&self) -> u64 {
        match self {
            SessionEvent::Epoch { epoch } | SessionEvent::VariableReady { epoch, .. } | SessionEvent::Complete { epoch } => {
                *epoch
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SubscriptionId(u64);

/// Returning `false` drops the subscription.
type Subscriber = Box<dyn FnMut(&SessionEvent) -> bool + Send>;

struct Shared {
    epoch: u64,
    decisions: Vec<Decision>,
    values: Vec<Option<Domain>>,
    computing: ComputeStatus,
    subscribers: Vec<(SubscriptionId, Subscriber)>,
    next_subscription: u64,
}

impl Shared {
    fn publish(&mut self, e: SessionEvent) {
        self.subscribers.retain_mut(|(_, f)| f(&e));
    }
}

struct SharedCell {
    state: Mutex<Shared>,
    changed: Condvar,
}

struct Worker {
    cancel: CancelToken,
    handle: JoinHandle<()>,
}

struct Ops {
    decisions: Vec<Decision>,
    next_id: u64,
    worker: Option<Worker>,
}

impl Ops {
    fn stop_worker(&mut self) {
        if let Some(w) = self.worker.take() {
            w.cancel.cancel();
            // A panicking worker leaves nothing to clean up; its epoch is
            // superseded by the caller.
            let _ = w.handle.join();
        }
    }
}

pub struct Session {
    ops: Mutex<Ops>,
    compiled: Arc<Mutex<CompiledModel>>,
    shared: Arc<SharedCell>,
    model: Arc<FeatureModel>,
    vmap: VariableMap,
    ground: MarkId,
    ground_domains: Vec<Domain>,
    model_consequences: Arc<Consequences>,
}

impl Session {
    pub fn create(m: &FeatureModel) -> Result<Session, SessionError> {
        Session::from_prepared(&prepare_model(m)?)
    }

    pub fn from_prepared(p: &PreparedModel) -> Result<Session, SessionError> {
        let mut cm = compile_shared(Arc::clone(&p.model))?;
        cm.solver.set_node_budget(p.node_budget);
        let _ = cm.model_consequences.set(Arc::clone(&p.consequences));
        let ground = cm.solver.mark("ground");
        cm.ground_mark = Some(ground);
        let ground_domains = cm.solver.domains().to_vec();
        let vmap = cm.vmap.clone();
        let values = vmap
            .model_vars()
            .iter()
            .map(|v| Some(p.consequences.get(&v.name).cloned().unwrap_or_else(Domain::empty)))
            .collect();
        Ok(Session {
            ops: Mutex::new(Ops { decisions: Vec::new(), next_id: 0, worker: None }),
            compiled: Arc::new(Mutex::new(cm)),
            shared: Arc::new(SharedCell {
                state: Mutex::new(Shared {
                    epoch: 0,
                    decisions: Vec::new(),
                    values,
                    computing: ComputeStatus::Idle,
                    subscribers: Vec::new(),
                    next_subscription: 0,
                }),
                changed: Condvar::new(),
            }),
            model: Arc::clone(&p.model),
            vmap,
            ground,
            ground_domains,
            model_consequences: Arc::clone(&p.consequences),
        })
    }

    pub fn model(&self) -> &Arc<FeatureModel> {
        &self.model
    }

    pub fn model_consequences(&self) -> &Arc<Consequences> {
        &self.model_consequences
    }

    pub fn ground_mark(&self) -> MarkId {
        self.ground
    }

    /// Every solver domain (auxiliaries included) as recorded at the ground
    /// mark.
    pub fn ground_domains(&self) -> &[Domain] {
        &self.ground_domains
    }

    /// Current solver domains. Blocks while a recomputation holds the solver.
    pub fn solver_domains(&self) -> Vec<Domain> {
        self.compiled.lock().solver.domains().to_vec()
    }

    /// Resets the solver to ground, checks it against the recorded ground
    /// domains, and replays the current decisions.
    pub fn verify_ground_reset(&self) -> bool {
        let mut ops = self.ops.lock();
        let (epoch, computing) = {
            let s = self.shared.state.lock();
            (s.epoch, s.computing)
        };
        let restart = computing == ComputeStatus::Running;
        ops.stop_worker();
        let exact = {
            let mut cm = self.compiled.lock();
            cm.solver.reset_to(self.ground).expect("ground mark is live");
            let exact = cm.solver.domains() == &self.ground_domains[..];
            replay_onto(&mut cm, &ops.decisions);
            exact
        };
        if restart {
            // The interrupted run is redone under the same epoch.
            self.restart(&mut ops, epoch);
        }
        exact
    }

    fn resolve(&self, name: &str) -> Option<usize> {
        self.vmap.position(name).or_else(|| {
            let v = self.model.resolve_var(name)?;
            let var = self.vmap.var_of(v);
            self.vmap.position(&self.vmap.by_var(var)?.name)
        })
    }

    pub fn post_decision(&self, variable: &str, restriction: Restriction) -> Result<Decision, Rejected> {
        self.post_decision_epoch(variable, restriction).map(|(d, _)| d)
    }

    /// Like [`Session::post_decision`], also returning the epoch the decision
    /// started.
    pub fn post_decision_epoch(&self, variable: &str, restriction: Restriction) -> Result<(Decision, u64), Rejected> {
        let mut ops = self.ops.lock();
        let idx = self.resolve(variable).ok_or_else(|| Rejected::UnknownVariable(variable.to_string()))?;
        let info = &self.vmap.model_vars()[idx];
        {
            let s = self.shared.state.lock();
            match &s.values[idx] {
                None => return Err(Rejected::VariablePending(info.name.clone())),
                Some(d) if !restriction.intersects(d) => return Err(Rejected::EmptyIntersection(info.name.clone())),
                Some(_) => {}
            }
        }
        ops.stop_worker();
        let decision = Decision {
            id: DecisionId(ops.next_id),
            variable: info.name.clone(),
            restriction,
            created_at: now_millis(),
        };
        {
            let mut cm = self.compiled.lock();
            let mut ok = true;
            for c in restriction.constraints(info.var) {
                ok &= cm.solver.post(c).expect("restriction constraints are well-formed") == Status::Consistent;
            }
            if !ok {
                // Unreachable while Ready domains are exact; undo the post and
                // keep the session as it was.
                debug_assert!(false, "a decision within the Ready domain failed");
                cm.solver.reset_to(self.ground).expect("ground mark is live");
                replay_onto(&mut cm, &ops.decisions);
                return Err(Rejected::EmptyIntersection(info.name.clone()));
            }
        }
        ops.next_id += 1;
        ops.decisions.push(decision.clone());
        let epoch = self.advance(&mut ops);
        Ok((decision, epoch))
    }

    pub fn retract_decision(&self, id: DecisionId) -> Result<(), UnknownDecision> {
        let mut ops = self.ops.lock();
        let pos = ops.decisions.iter().position(|d| d.id == id).ok_or(UnknownDecision(id))?;
        ops.stop_worker();
        ops.decisions.remove(pos);
        {
            let mut cm = self.compiled.lock();
            cm.solver.reset_to(self.ground).expect("ground mark is live");
            replay_onto(&mut cm, &ops.decisions);
        }
        self.advance(&mut ops);
        Ok(())
    }

    pub fn state(&self) -> SessionSnapshot {
        let s = self.shared.state.lock();
        SessionSnapshot {
            epoch: s.epoch,
            decisions: s.decisions.clone(),
            variables: self
                .vmap
                .model_vars()
                .iter()
                .zip(&s.values)
                .map(|(v, d)| VariableState { name: v.name.clone(), values: d.clone() })
                .collect(),
            computing: s.computing,
        }
    }

    /// Waits until no recomputation is running. Returns false on timeout.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut s = self.shared.state.lock();
        while s.computing == ComputeStatus::Running {
            if self.shared.changed.wait_until(&mut s, deadline).timed_out() {
                return s.computing != ComputeStatus::Running;
            }
        }
        true
    }

    /// Registers `f` for future events, after replaying the current epoch's
    /// state: an `epoch` event, one `variableReady` per Ready variable, and
    /// `complete` if the computation has finished.
    pub fn subscribe<F>(&self, mut f: F) -> SubscriptionId
    where
        F: FnMut(&SessionEvent) -> bool + Send + 'static,
    {
        let mut s = self.shared.state.lock();
        let id = SubscriptionId(s.next_subscription);
        s.next_subscription += 1;
        let epoch = s.epoch;
        let mut keep = f(&SessionEvent::Epoch { epoch });
        for (info, d) in self.vmap.model_vars().iter().zip(&s.values) {
            if let (true, Some(d)) = (keep, d) {
                keep = f(&SessionEvent::VariableReady { epoch, variable: info.name.clone(), values: d.clone() });
            }
        }
        if keep && s.computing == ComputeStatus::Idle {
            keep = f(&SessionEvent::Complete { epoch });
        }
        if keep {
            s.subscribers.push((id, Box::new(f)));
        }
        id
    }

    pub fn unsubscribe(&self, id: SubscriptionId) {
        self.shared.state.lock().subscribers.retain(|(i, _)| *i != id);
    }

    /// Starts a new epoch with every variable Pending and launches the
    /// recomputation. The solver must already hold the new decision set.
    fn advance(&self, ops: &mut Ops) -> u64 {
        let epoch = {
            let mut s = self.shared.state.lock();
            s.epoch += 1;
            s.decisions = ops.decisions.clone();
            s.epoch
        };
        self.restart(ops, epoch);
        epoch
    }

    fn restart(&self, ops: &mut Ops, epoch: u64) {
        {
            let mut s = self.shared.state.lock();
            s.values.iter_mut().for_each(|v| *v = None);
            s.computing = ComputeStatus::Running;
            s.publish(SessionEvent::Epoch { epoch });
        }
        let cancel = CancelToken::new();
        let handle = {
            let cancel = cancel.clone();
            let compiled = Arc::clone(&self.compiled);
            let shared = Arc::clone(&self.shared);
            let vmap = self.vmap.clone();
            std::thread::spawn(move || recompute(compiled, shared, vmap, epoch, cancel))
        };
        ops.worker = Some(Worker { cancel, handle });
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.ops.get_mut().stop_worker();
    }
}

fn recompute(compiled: Arc<Mutex<CompiledModel>>, shared: Arc<SharedCell>, vmap: VariableMap, epoch: u64, cancel: CancelToken) {
    let mut cm = compiled.lock();
    let result = valid_domains_probe(&mut cm, &cancel, |name, d| {
        let mut s = shared.state.lock();
        if s.epoch != epoch || cancel.is_cancelled() {
            return;
        }
        let idx = vmap.position(name).expect("emitted names are model variables");
        s.values[idx] = Some(d.clone());
        s.publish(SessionEvent::VariableReady { epoch, variable: name.to_string(), values: d.clone() });
    });
    drop(cm);
    let mut s = shared.state.lock();
    if s.epoch != epoch {
        return;
    }
    match result {
        Ok(_) => {
            s.computing = ComputeStatus::Idle;
            s.publish(SessionEvent::Complete { epoch });
        }
        Err(ConsequenceError::Cancelled { .. }) => return,
        Err(_) => s.computing = ComputeStatus::ResourceLimit,
    }
    shared.changed.notify_all();
}

fn replay_onto(cm: &mut CompiledModel, decisions: &[Decision]) {
    for d in decisions {
        let var = cm.vmap.by_name(&d.variable).expect("decisions name model variables").var;
        for c in d.restriction.constraints(var) {
            let status = cm.solver.post(c).expect("restriction constraints are well-formed");
            // Removing a decision only relaxes the store.
            assert_eq!(status, Status::Consistent, "replay of surviving decisions failed");
        }
    }
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, M1};

    const WAIT: Duration = Duration::from_secs(10);

    fn m1() -> Session {
        Session::create(&parse_model(M1).unwrap()).unwrap()
    }

    #[test]
    fn fresh_session_is_ready() {
        let s = m1();
        let st = s.state();
        assert_eq!(st.epoch, 0);
        assert!(st.all_ready());
        assert_eq!(st.computing, ComputeStatus::Idle);
        assert_eq!(st.values("Phone"), Some(&Domain::singleton(1)));
        assert_eq!(st.values("GPS.price"), Some(&Domain::interval(0, 3)));
        assert_eq!(s.state(), st);
    }

    #[test]
    fn decision_and_retraction() {
        let s = m1();
        let d = s.post_decision("HD", Restriction::Assign(1)).unwrap();
        assert_eq!(d.id, DecisionId(0));
        assert_eq!(s.state().epoch, 1);
        assert!(s.wait_idle(WAIT));
        let st = s.state();
        assert!(st.all_ready());
        assert_eq!(st.values("GPS"), Some(&Domain::singleton(1)));
        assert_eq!(st.values("Basic"), Some(&Domain::singleton(0)));
        assert_eq!(st.values("price"), None);
        assert_eq!(st.values("GPS.price"), Some(&Domain::interval(1, 3)));

        s.retract_decision(d.id).unwrap();
        assert!(s.wait_idle(WAIT));
        let st = s.state();
        assert_eq!(st.epoch, 2);
        assert!(st.decisions.is_empty());
        for (name, d) in &s.model_consequences().entries {
            assert_eq!(st.values(name), Some(d));
        }
        assert_eq!(s.solver_domains(), s.ground_domains());
        assert_eq!(s.retract_decision(d.id), Err(UnknownDecision(d.id)));
    }

    #[test]
    fn rejections() {
        let s = m1();
        assert_eq!(s.post_decision("Phone", Restriction::Assign(0)), Err(Rejected::EmptyIntersection("Phone".into())));
        assert_eq!(s.post_decision("Nope", Restriction::Assign(0)), Err(Rejected::UnknownVariable("Nope".into())));
        assert_eq!(s.state().epoch, 0);
        s.post_decision("price", Restriction::Range { lo: 0, hi: 3 }).unwrap();
        // Pending until the worker is done; accepted once Ready.
        assert!(s.wait_idle(WAIT));
        assert_eq!(s.state().values("GPS.price"), Some(&Domain::interval(0, 3)));
        s.post_decision("GPS", Restriction::Exclude(0)).unwrap();
        assert!(s.wait_idle(WAIT));
        assert_eq!(s.state().values("GPS.price"), Some(&Domain::interval(1, 3)));
    }

    #[test]
    fn pending_variables_reject() {
        let s = m1();
        // A run in progress that has not reached Basic yet.
        {
            let mut sh = s.shared.state.lock();
            sh.values[2] = None;
            sh.computing = ComputeStatus::Running;
        }
        assert_eq!(s.post_decision("Basic", Restriction::Assign(1)), Err(Rejected::VariablePending("Basic".into())));
    }

    #[test]
    fn events_follow_epochs() {
        let s = m1();
        let log = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&log);
        s.subscribe(move |e| {
            sink.lock().push(e.clone());
            true
        });
        assert_eq!(log.lock().len(), 1 + 6 + 1);
        s.post_decision("HD", Restriction::Assign(1)).unwrap();
        assert!(s.wait_idle(WAIT));
        let log = log.lock();
        let tail = &log[8..];
        assert_eq!(tail[0], SessionEvent::Epoch { epoch: 1 });
        assert_eq!(tail.last(), Some(&SessionEvent::Complete { epoch: 1 }));
        assert_eq!(tail.len(), 8);
        assert!(tail.iter().all(|e| e.epoch() == 1));
    }

    #[test]
    fn ground_reset_is_exact() {
        let s = m1();
        s.post_decision("HD", Restriction::Assign(1)).unwrap();
        assert!(s.verify_ground_reset());
        assert!(s.wait_idle(WAIT));
        assert_eq!(s.state().values("GPS"), Some(&Domain::singleton(1)));
    }

    #[test]
    fn snapshot_json() {
        let s = Session::create(&parse_model("feature R { optional A }").unwrap()).unwrap();
        let json = serde_json::to_string(&s.state()).unwrap();
        assert_eq!(
            json,
            r#"{"epoch":0,"decisions":[],"variables":{"R":{"status":"ready","values":[[1,1]]},"A":{"status":"ready","values":[[0,1]]}},"computing":"idle"}"#
        );
    }

    #[test]
    fn infeasible_model() {
        let m = parse_model("feature R {} constraint R && !R").unwrap();
        assert!(matches!(Session::create(&m), Err(SessionError::InfeasibleModel)));
    }
}
