//! Feature model → solver store.
//!
//! Every feature becomes a 0/1 variable, every attribute an integer
//! variable with domain `{0} ∪ [lo..hi]`, where 0 is the value taken when
//! the owning feature is deselected. Constraints are emitted in a fixed
//! order: a pre-order walk of the tree, then attribute guards, then the
//! cross-tree constraints in declaration order.
//!
//! | relation               | constraints                         |
//! |------------------------|-------------------------------------|
//! | root `r`               | `r = 1`                             |
//! | mandatory child `c`    | `c = p`                             |
//! | optional child `c`     | `c ≤ p`                             |
//! | or-group `G` under `p` | `c ≤ p` for each `c`, `Σ G ≥ p`     |
//! | xor-group `G`          | `c ≤ p` for each `c`, `Σ G = p`     |
//! | attribute `a` of `f`   | `f = 0 → a = 0`, `f = 1 → a ∈ [lo..hi]` |
//!
//! Cross-tree expressions are decomposed with auxiliary variables, each one
//! functionally determined by the model variables, so solutions of the
//! store and valid products correspond one to one.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::consequences::Consequences;
use crate::model::{validate, ChildRelation, Diagnostic, Expr, FeatureId, FeatureModel, GroupKind, ModelVar};
use crate::solver::{CmpOp, ConstraintSpec, Domain, LinearCmp, MarkId, Solution, Solver, SolverError, VarId};

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("invalid model: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("arithmetic in constraint #{0} may leave the signed 64-bit range")]
    Overflow(usize),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// One user-visible model variable and its solver variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelVarInfo {
    pub name: String,
    pub var: VarId,
    pub model_var: ModelVar,
}

/// Bidirectional map between model variables and solver variables.
#[derive(Clone, Debug)]
pub struct VariableMap {
    feature_vars: Vec<VarId>,
    attr_vars: Vec<VarId>,
    /// Features in pre-order, then attributes in declaration order.
    vars: Vec<ModelVarInfo>,
    by_var: HashMap<VarId, usize>,
    by_name: HashMap<String, usize>,
}

impl VariableMap {
    pub fn model_vars(&self) -> &[ModelVarInfo] {
        &self.vars
    }

    pub fn feature_var(&self, f: FeatureId) -> VarId {
        self.feature_vars[f.index()]
    }

    pub fn attribute_var(&self, a: crate::model::AttributeId) -> VarId {
        self.attr_vars[a.index()]
    }

    pub fn var_of(&self, v: ModelVar) -> VarId {
        match v {
            ModelVar::Feature(f) => self.feature_var(f),
            ModelVar::Attribute(a) => self.attribute_var(a),
        }
    }

    pub fn by_name(&self, name: &str) -> Option<&ModelVarInfo> {
        self.by_name.get(name).map(|&i| &self.vars[i])
    }

    pub fn by_var(&self, v: VarId) -> Option<&ModelVarInfo> {
        self.by_var.get(&v).map(|&i| &self.vars[i])
    }

    /// Position of `name` in [`Self::model_vars`].
    pub fn position(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }
}

/// A model compiled into a long-lived solver.
pub struct CompiledModel {
    pub model: Arc<FeatureModel>,
    pub solver: Solver,
    pub vmap: VariableMap,
    /// Set once pre-processing has recorded the ground level state.
    pub ground_mark: Option<MarkId>,
    pub(crate) model_consequences: OnceLock<Arc<Consequences>>,
}

impl CompiledModel {
    /// Looks up a model variable by user-facing name (see
    /// [`FeatureModel::resolve_var`]).
    pub fn lookup(&self, name: &str) -> Option<&ModelVarInfo> {
        self.vmap
            .by_name(name)
            .or_else(|| self.model.resolve_var(name).map(|v| self.vmap.by_var(self.vmap.var_of(v)).unwrap()))
    }
}

/// Values of the model variables in one solution, auxiliaries dropped.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProductConfiguration {
    /// In [`VariableMap::model_vars`] order.
    pub entries: Vec<(String, i64)>,
}

impl ProductConfiguration {
    pub fn get(&self, name: &str) -> Option<i64> {
        self.entries.iter().find(|(n, _)| n == name).map(|e| e.1)
    }

    pub fn values(&self) -> Vec<i64> {
        self.entries.iter().map(|e| e.1).collect()
    }
}

pub fn project(s: &Solution, vmap: &VariableMap) -> ProductConfiguration {
    ProductConfiguration { entries: vmap.vars.iter().map(|v| (v.name.clone(), s.value(v.var))).collect() }
}

pub fn compile(m: &FeatureModel) -> Result<CompiledModel, TranslateError> {
    compile_shared(Arc::new(m.clone()))
}

pub fn compile_shared(model: Arc<FeatureModel>) -> Result<CompiledModel, TranslateError> {
    let diagnostics = validate(&model);
    if !diagnostics.is_empty() {
        return Err(TranslateError::Invalid(diagnostics));
    }
    let m = &*model;
    let mut solver = Solver::new();
    let preorder = m.preorder();

    let mut feature_vars = vec![VarId(0); m.features.len()];
    let mut vars = Vec::new();
    for &f in &preorder {
        let v = solver.add_var(Domain::boolean())?;
        feature_vars[f.index()] = v;
        vars.push(ModelVarInfo { name: m.feature(f).name.clone(), var: v, model_var: ModelVar::Feature(f) });
    }
    let mut attr_vars = Vec::with_capacity(m.attributes.len());
    for a in &m.attributes {
        let v = solver.add_var(Domain::singleton(0).union(&Domain::interval(a.lo, a.hi)))?;
        attr_vars.push(v);
        vars.push(ModelVarInfo { name: m.qualified_name(a.id), var: v, model_var: ModelVar::Attribute(a.id) });
    }

    let fv = |f: FeatureId| feature_vars[f.index()];
    let le = |c: VarId, p: VarId| ConstraintSpec::Linear(LinearCmp::new(vec![(c, 1), (p, -1)], CmpOp::Le, 0));
    for &f in &preorder {
        let p = fv(f);
        if f == m.root {
            solver.post(ConstraintSpec::Linear(LinearCmp::unary(p, CmpOp::Eq, 1)))?;
        }
        for rel in &m.feature(f).children {
            match rel {
                ChildRelation::Mandatory(c) => {
                    solver.post(ConstraintSpec::EqVar { x: fv(*c), y: p })?;
                }
                ChildRelation::Optional(c) => {
                    solver.post(le(fv(*c), p))?;
                }
                ChildRelation::Group { kind, members } => {
                    for &c in members {
                        solver.post(le(fv(c), p))?;
                    }
                    let mut terms: Vec<(VarId, i64)> = members.iter().map(|&c| (fv(c), 1)).collect();
                    terms.push((p, -1));
                    let op = match kind {
                        GroupKind::Or => CmpOp::Ge,
                        GroupKind::Xor => CmpOp::Eq,
                    };
                    solver.post(ConstraintSpec::Linear(LinearCmp::new(terms, op, 0)))?;
                }
            }
        }
    }

    for (a, &av) in m.attributes.iter().zip(&attr_vars) {
        let owner = fv(a.owner);
        let is_zero = solver.add_var(Domain::boolean())?;
        solver.post(ConstraintSpec::ReifLinear { b: is_zero, inner: LinearCmp::unary(av, CmpOp::Eq, 0) })?;
        // deselected → sentinel
        solver.post(ConstraintSpec::BoolClause { pos: vec![owner, is_zero], neg: vec![] })?;
        if !(a.lo..=a.hi).contains(&0) {
            // selected → a ∈ [lo..hi], i.e. a ≠ 0 given the domain {0} ∪ [lo..hi]
            solver.post(ConstraintSpec::BoolClause { pos: vec![], neg: vec![owner, is_zero] })?;
        }
    }

    let vmap = VariableMap {
        by_var: vars.iter().enumerate().map(|(i, v)| (v.var, i)).collect(),
        by_name: vars.iter().enumerate().map(|(i, v)| (v.name.clone(), i)).collect(),
        feature_vars,
        attr_vars,
        vars,
    };

    for (index, c) in m.constraints.iter().enumerate() {
        let mut enc = Encoder { solver: &mut solver, vmap: &vmap, index };
        enc.assert(c)?;
    }

    Ok(CompiledModel { model, solver, vmap, ground_mark: None, model_consequences: OnceLock::new() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Lit {
    Const(bool),
    Var(VarId, bool),
}

impl Lit {
    fn not(self) -> Lit {
        match self {
            Lit::Const(b) => Lit::Const(!b),
            Lit::Var(v, pos) => Lit::Var(v, !pos),
        }
    }
}

/// `Σ coeff·var + constant`.
#[derive(Clone, Debug, Default)]
struct Lin {
    terms: Vec<(VarId, i128)>,
    constant: i128,
}

impl Lin {
    fn constant(c: i128) -> Self {
        Lin { terms: Vec::new(), constant: c }
    }

    fn var(v: VarId) -> Self {
        Lin { terms: vec![(v, 1)], constant: 0 }
    }

    fn add(mut self, other: Lin, sign: i128) -> Lin {
        for (v, a) in other.terms {
            match self.terms.iter_mut().find(|t| t.0 == v) {
                Some(t) => t.1 += sign * a,
                None => self.terms.push((v, sign * a)),
            }
        }
        self.terms.retain(|t| t.1 != 0);
        self.constant += sign * other.constant;
        self
    }

    fn scale(mut self, k: i128) -> Lin {
        if k == 0 {
            return Lin::constant(0);
        }
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }

    fn as_const(&self) -> Option<i128> {
        self.terms.is_empty().then_some(self.constant)
    }

    fn fits_i64(&self) -> bool {
        let ok = |x: i128| x >= i64::MIN as i128 && x <= i64::MAX as i128;
        ok(self.constant) && self.terms.iter().all(|t| ok(t.1))
    }
}

fn to_i64(x: i128) -> Option<i64> {
    i64::try_from(x).ok()
}

struct Encoder<'a> {
    solver: &'a mut Solver,
    vmap: &'a VariableMap,
    index: usize,
}

impl Encoder<'_> {
    fn overflow(&self) -> TranslateError {
        TranslateError::Overflow(self.index)
    }

    fn post(&mut self, c: ConstraintSpec) -> Result<(), TranslateError> {
        self.solver.post(c)?;
        Ok(())
    }

    fn clause(&mut self, lits: &[Lit]) -> Result<(), TranslateError> {
        if lits.contains(&Lit::Const(true)) {
            return Ok(());
        }
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for l in lits {
            match *l {
                Lit::Var(v, true) => pos.push(v),
                Lit::Var(v, false) => neg.push(v),
                Lit::Const(false) => {}
                Lit::Const(true) => unreachable!(),
            }
        }
        self.post(ConstraintSpec::BoolClause { pos, neg })
    }

    fn fresh_bool(&mut self) -> Result<VarId, TranslateError> {
        Ok(self.solver.add_var(Domain::boolean())?)
    }

    /// Posts `e` as a top-level truth.
    fn assert(&mut self, e: &Expr) -> Result<(), TranslateError> {
        match e {
            Expr::Bool(true) => Ok(()),
            Expr::And(a, b) => {
                self.assert(a)?;
                self.assert(b)
            }
            Expr::Cmp(op, a, b) => self.post_cmp(*op, a, b),
            Expr::Not(inner) => match &**inner {
                Expr::Cmp(op, a, b) => self.post_cmp(op.negate(), a, b),
                Expr::Not(x) => self.assert(x),
                _ => {
                    let l = self.lit(e)?;
                    self.clause(&[l])
                }
            },
            Expr::Or(..) | Expr::Implies(..) => {
                let mut lits = Vec::new();
                self.disjuncts(e, &mut lits)?;
                self.clause(&lits)
            }
            _ => {
                let l = self.lit(e)?;
                self.clause(&[l])
            }
        }
    }

    fn disjuncts(&mut self, e: &Expr, out: &mut Vec<Lit>) -> Result<(), TranslateError> {
        match e {
            Expr::Or(a, b) => {
                self.disjuncts(a, out)?;
                self.disjuncts(b, out)
            }
            Expr::Implies(a, b) => {
                out.push(self.lit(a)?.not());
                self.disjuncts(b, out)
            }
            _ => {
                out.push(self.lit(e)?);
                Ok(())
            }
        }
    }

    fn difference(&mut self, a: &Expr, b: &Expr) -> Result<Lin, TranslateError> {
        let d = self.linearize(a)?.add(self.linearize(b)?, -1);
        let (lo, hi) = self.bounds(&d);
        if d.fits_i64() && to_i64(lo).is_some() && to_i64(hi).is_some() {
            Ok(d)
        } else {
            Err(self.overflow())
        }
    }

    fn linear_cmp(&self, d: Lin, op: CmpOp) -> Result<LinearCmp, TranslateError> {
        let terms = d
            .terms
            .iter()
            .map(|&(v, a)| to_i64(a).map(|a| (v, a)))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| self.overflow())?;
        let rhs = to_i64(-d.constant).ok_or_else(|| self.overflow())?;
        Ok(LinearCmp::new(terms, op, rhs))
    }

    fn post_cmp(&mut self, op: CmpOp, a: &Expr, b: &Expr) -> Result<(), TranslateError> {
        let d = self.difference(a, b)?;
        if let Some(c) = d.as_const() {
            return if op.eval(c, 0) { Ok(()) } else { self.clause(&[]) };
        }
        let l = self.linear_cmp(d, op)?;
        self.post(ConstraintSpec::Linear(l))
    }

    fn lit(&mut self, e: &Expr) -> Result<Lit, TranslateError> {
        Ok(match e {
            Expr::Bool(b) => Lit::Const(*b),
            Expr::Feature(f) => Lit::Var(self.vmap.feature_var(*f), true),
            Expr::Not(a) => self.lit(a)?.not(),
            Expr::Cmp(op, a, b) => {
                let d = self.difference(a, b)?;
                if let Some(c) = d.as_const() {
                    return Ok(Lit::Const(op.eval(c, 0)));
                }
                let inner = self.linear_cmp(d, *op)?;
                let b = self.fresh_bool()?;
                self.post(ConstraintSpec::ReifLinear { b, inner })?;
                Lit::Var(b, true)
            }
            Expr::And(a, b) => {
                let (la, lb) = (self.lit(a)?, self.lit(b)?);
                self.and(la, lb)?
            }
            Expr::Or(a, b) => {
                let (la, lb) = (self.lit(a)?, self.lit(b)?);
                self.and(la.not(), lb.not())?.not()
            }
            Expr::Implies(a, b) => {
                let (la, lb) = (self.lit(a)?, self.lit(b)?);
                self.and(la, lb.not())?.not()
            }
            Expr::Iff(a, b) => {
                let (la, lb) = (self.lit(a)?, self.lit(b)?);
                match (la, lb) {
                    (Lit::Const(x), l) | (l, Lit::Const(x)) => {
                        if x {
                            l
                        } else {
                            l.not()
                        }
                    }
                    _ => {
                        let t = Lit::Var(self.fresh_bool()?, true);
                        self.clause(&[t.not(), la.not(), lb])?;
                        self.clause(&[t.not(), la, lb.not()])?;
                        self.clause(&[t, la, lb])?;
                        self.clause(&[t, la.not(), lb.not()])?;
                        t
                    }
                }
            }
            _ => unreachable!("integer expression in Boolean position; models are type-checked"),
        })
    }

    /// `t ⇔ a ∧ b`.
    fn and(&mut self, a: Lit, b: Lit) -> Result<Lit, TranslateError> {
        Ok(match (a, b) {
            (Lit::Const(false), _) | (_, Lit::Const(false)) => Lit::Const(false),
            (Lit::Const(true), l) | (l, Lit::Const(true)) => l,
            _ => {
                let t = Lit::Var(self.fresh_bool()?, true);
                self.clause(&[t.not(), a])?;
                self.clause(&[t.not(), b])?;
                self.clause(&[t, a.not(), b.not()])?;
                t
            }
        })
    }

    fn linearize(&mut self, e: &Expr) -> Result<Lin, TranslateError> {
        let out = match e {
            Expr::Int(v) => Lin::constant(*v as i128),
            Expr::Feature(f) => Lin::var(self.vmap.feature_var(*f)),
            Expr::Attr(a) => Lin::var(self.vmap.attribute_var(*a)),
            Expr::Add(a, b) => self.linearize(a)?.add(self.linearize(b)?, 1),
            Expr::Sub(a, b) => self.linearize(a)?.add(self.linearize(b)?, -1),
            Expr::Neg(a) => self.linearize(a)?.scale(-1),
            Expr::Mul(a, b) => {
                let (la, lb) = (self.linearize(a)?, self.linearize(b)?);
                match (la.as_const(), lb.as_const()) {
                    (Some(k), _) => lb.scale(k),
                    (_, Some(k)) => la.scale(k),
                    _ => {
                        let x = self.as_var(la)?;
                        let y = self.as_var(lb)?;
                        let (xl, xh) = self.hull(x);
                        let (yl, yh) = self.hull(y);
                        let corners = [xl * yl, xl * yh, xh * yl, xh * yh];
                        let lo = to_i64(*corners.iter().min().unwrap()).ok_or_else(|| self.overflow())?;
                        let hi = to_i64(*corners.iter().max().unwrap()).ok_or_else(|| self.overflow())?;
                        let z = self.solver.add_var(Domain::interval(lo, hi))?;
                        self.post(ConstraintSpec::MulEq { x, y, z })?;
                        Lin::var(z)
                    }
                }
            }
            _ => unreachable!("Boolean expression in integer position; models are type-checked"),
        };
        let (lo, hi) = self.bounds(&out);
        if out.fits_i64() && to_i64(lo).is_some() && to_i64(hi).is_some() {
            Ok(out)
        } else {
            Err(self.overflow())
        }
    }

    fn bounds(&self, lin: &Lin) -> (i128, i128) {
        let (mut lo, mut hi) = (lin.constant, lin.constant);
        for &(v, a) in &lin.terms {
            let (vl, vh) = self.hull(v);
            let (p, q) = (a * vl, a * vh);
            lo += p.min(q);
            hi += p.max(q);
        }
        (lo, hi)
    }

    fn hull(&self, v: VarId) -> (i128, i128) {
        let d = self.solver.current_domain(v).expect("known variable");
        (d.min().unwrap() as i128, d.max().unwrap() as i128)
    }

    /// A variable equal to `lin`, introducing `t = lin` when needed.
    fn as_var(&mut self, lin: Lin) -> Result<VarId, TranslateError> {
        if let ([(v, 1)], 0) = (&lin.terms[..], lin.constant) {
            return Ok(*v);
        }
        let (lo, hi) = self.bounds(&lin);
        let (lo, hi) = (to_i64(lo).ok_or_else(|| self.overflow())?, to_i64(hi).ok_or_else(|| self.overflow())?);
        let t = self.solver.add_var(Domain::interval(lo, hi))?;
        let defining = Lin::var(t).add(lin, -1);
        let l = self.linear_cmp(defining, CmpOp::Eq)?;
        self.post(ConstraintSpec::Linear(l))?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, M1};
    use crate::solver::{Status, Visit};

    fn count(cm: &mut CompiledModel) -> u64 {
        let mut n = 0;
        cm.solver
            .enumerate(u64::MAX, None, |_| {
                n += 1;
                Visit::Continue
            })
            .unwrap();
        n
    }

    #[test]
    fn m1_store() {
        let mut cm = compile(&parse_model(M1).unwrap()).unwrap();
        assert_eq!(cm.vmap.model_vars().len(), 6);
        assert!(cm.solver.num_vars() >= 6);
        assert_eq!(cm.solver.status(), Status::Consistent);
        let phone = cm.vmap.by_name("Phone").unwrap().var;
        let screen = cm.vmap.by_name("Screen").unwrap().var;
        assert_eq!(cm.solver.current_domain(phone).unwrap(), &Domain::singleton(1));
        assert_eq!(cm.solver.current_domain(screen).unwrap(), &Domain::singleton(1));
        let price = cm.vmap.by_name("GPS.price").unwrap().var;
        assert!(cm.solver.current_domain(price).unwrap().is_subset(&Domain::interval(0, 3)));
        assert_eq!(count(&mut cm), 7);
        assert_eq!(cm.lookup("price").unwrap().name, "GPS.price");
    }

    #[test]
    fn root_only() {
        let mut cm = compile(&parse_model("feature Root {}").unwrap()).unwrap();
        assert_eq!(cm.solver.num_vars(), 1);
        assert_eq!(cm.solver.constraints().len(), 1);
        assert_eq!(count(&mut cm), 1);
        let sol = cm.solver.solve_first().unwrap().unwrap();
        let p = project(&sol, &cm.vmap);
        assert_eq!(p.entries, vec![("Root".to_string(), 1)]);
        assert_eq!(project(&sol, &cm.vmap), p);
    }

    #[test]
    fn xor_under_root() {
        let mut cm = compile(&parse_model("feature R { xor { A, B } }").unwrap()).unwrap();
        assert_eq!(count(&mut cm), 2);
    }

    #[test]
    fn m1_projection_with_hd() {
        let mut cm = compile(&parse_model(M1).unwrap()).unwrap();
        let hd = cm.vmap.by_name("HD").unwrap().var;
        cm.solver.post(ConstraintSpec::Linear(LinearCmp::unary(hd, CmpOp::Eq, 1))).unwrap();
        let sol = cm.solver.solve_first().unwrap().unwrap();
        let p = project(&sol, &cm.vmap);
        let get = |n| p.get(n).unwrap();
        assert_eq!((get("Phone"), get("Screen"), get("Basic"), get("HD"), get("GPS")), (1, 1, 0, 1, 1));
        assert!((1..=3).contains(&get("GPS.price")));
    }

    #[test]
    fn contradiction_fails_store() {
        let cm = compile(&parse_model("feature Root {} constraint Root && !Root").unwrap()).unwrap();
        assert_eq!(cm.solver.status(), Status::Failed);
    }

    #[test]
    fn overflow_is_reported() {
        let m = parse_model(
            "feature R {}\nattribute R.a : int[0..900000]\nconstraint R.a * R.a * R.a * R.a > 9223372036854775807 - 1",
        )
        .unwrap();
        assert!(matches!(compile(&m), Err(TranslateError::Overflow(0))));
        let m = parse_model("feature R {}\nconstraint 9223372036854775807 + R > 0").unwrap();
        assert!(matches!(compile(&m), Err(TranslateError::Overflow(0))));
    }

    #[test]
    fn invalid_models_are_rejected() {
        let mut m = parse_model("feature R {}").unwrap();
        m.constraints.push(Expr::Int(3));
        assert!(matches!(compile(&m), Err(TranslateError::Invalid(_))));
    }
}
