//! Brute-force semantics, written directly from the model rules and the
//! constraint definitions. Nothing here calls into the solver, the
//! translation or the consequence code.

use std::collections::BTreeSet;

use crate::model::{ChildRelation, Expr, FeatureModel, GroupKind, ModelVar};
use crate::session::Restriction;
use crate::solver::{CmpOp, ConstraintSpec, Domain};

fn cmp(op: CmpOp, a: i128, b: i128) -> bool {
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Gt => a > b,
        CmpOp::Ge => a >= b,
    }
}

/// Whether `values` (indexed by `VarId`) satisfies `c`.
pub fn spec_holds(c: &ConstraintSpec, values: &[i64]) -> bool {
    let val = |v: crate::solver::VarId| values[v.0 as usize] as i128;
    let lin = |l: &crate::solver::LinearCmp| {
        let sum: i128 = l.terms.iter().map(|&(v, a)| a as i128 * val(v)).sum();
        cmp(l.op, sum, l.rhs as i128)
    };
    match c {
        ConstraintSpec::Linear(l) => lin(l),
        ConstraintSpec::MulEq { x, y, z } => val(*x) * val(*y) == val(*z),
        ConstraintSpec::ReifLinear { b, inner } => (val(*b) == 1) == lin(inner) && (0..=1).contains(&val(*b)),
        ConstraintSpec::BoolClause { pos, neg } => {
            pos.iter().any(|&v| val(v) == 1) || neg.iter().any(|&v| val(v) == 0)
        }
        ConstraintSpec::EqVar { x, y } => val(*x) == val(*y),
    }
}

/// Every assignment within `domains` satisfying all `constraints`, in
/// lexicographic order.
pub fn store_solutions(domains: &[Domain], constraints: &[ConstraintSpec]) -> Vec<Vec<i64>> {
    let values: Vec<Vec<i64>> = domains.iter().map(|d| d.iter().collect()).collect();
    let mut out = Vec::new();
    cartesian(&values, &mut Vec::new(), &mut |a| {
        if constraints.iter().all(|c| spec_holds(c, a)) {
            out.push(a.to_vec());
        }
    });
    out
}

fn cartesian(values: &[Vec<i64>], prefix: &mut Vec<i64>, f: &mut dyn FnMut(&[i64])) {
    if prefix.len() == values.len() {
        f(prefix);
        return;
    }
    for &v in &values[prefix.len()] {
        prefix.push(v);
        cartesian(values, prefix, f);
        prefix.pop();
    }
}

/// Model variable names: features in pre-order, then attributes.
pub fn var_names(m: &FeatureModel) -> Vec<String> {
    m.variables().into_iter().map(|v| m.var_name(v)).collect()
}

struct Layout {
    feature_pos: Vec<usize>,
    attr_pos: Vec<usize>,
}

fn layout(m: &FeatureModel) -> Layout {
    let mut feature_pos = vec![usize::MAX; m.features.len()];
    let mut attr_pos = vec![usize::MAX; m.attributes.len()];
    for (i, v) in m.variables().into_iter().enumerate() {
        match v {
            ModelVar::Feature(f) => feature_pos[f.index()] = i,
            ModelVar::Attribute(a) => attr_pos[a.index()] = i,
        }
    }
    Layout { feature_pos, attr_pos }
}

fn eval_int(e: &Expr, l: &Layout, vals: &[i64]) -> i128 {
    match e {
        Expr::Int(v) => *v as i128,
        Expr::Feature(f) => vals[l.feature_pos[f.index()]] as i128,
        Expr::Attr(a) => vals[l.attr_pos[a.index()]] as i128,
        Expr::Add(a, b) => eval_int(a, l, vals) + eval_int(b, l, vals),
        Expr::Sub(a, b) => eval_int(a, l, vals) - eval_int(b, l, vals),
        Expr::Mul(a, b) => eval_int(a, l, vals) * eval_int(b, l, vals),
        Expr::Neg(a) => -eval_int(a, l, vals),
        other => panic!("not an integer expression: {other:?}"),
    }
}

fn eval_bool(e: &Expr, l: &Layout, vals: &[i64]) -> bool {
    match e {
        Expr::Bool(b) => *b,
        Expr::Feature(f) => vals[l.feature_pos[f.index()]] == 1,
        Expr::Cmp(op, a, b) => cmp(*op, eval_int(a, l, vals), eval_int(b, l, vals)),
        Expr::And(a, b) => eval_bool(a, l, vals) && eval_bool(b, l, vals),
        Expr::Or(a, b) => eval_bool(a, l, vals) || eval_bool(b, l, vals),
        Expr::Not(a) => !eval_bool(a, l, vals),
        Expr::Implies(a, b) => !eval_bool(a, l, vals) || eval_bool(b, l, vals),
        Expr::Iff(a, b) => eval_bool(a, l, vals) == eval_bool(b, l, vals),
        other => panic!("not a Boolean expression: {other:?}"),
    }
}

/// Whether a full assignment of the model variables is a valid product.
/// Attributes of deselected features must be 0; attributes of selected
/// features lie in their declared range.
pub fn is_product(m: &FeatureModel, vals: &[i64]) -> bool {
    let l = layout(m);
    is_product_with(m, &l, vals)
}

fn is_product_with(m: &FeatureModel, l: &Layout, vals: &[i64]) -> bool {
    let f = |id: crate::model::FeatureId| vals[l.feature_pos[id.index()]];
    if f(m.root) != 1 {
        return false;
    }
    for feat in &m.features {
        let p = f(feat.id);
        for rel in &feat.children {
            let ok = match rel {
                ChildRelation::Mandatory(c) => f(*c) == p,
                ChildRelation::Optional(c) => p == 1 || f(*c) == 0,
                ChildRelation::Group { kind, members } => {
                    let selected = members.iter().filter(|&&c| f(c) == 1).count();
                    match (p, kind) {
                        (0, _) => selected == 0,
                        (_, GroupKind::Or) => selected >= 1,
                        (_, GroupKind::Xor) => selected == 1,
                    }
                }
            };
            if !ok {
                return false;
            }
        }
    }
    for a in &m.attributes {
        let v = vals[l.attr_pos[a.id.index()]];
        let ok = if f(a.owner) == 1 { a.lo <= v && v <= a.hi } else { v == 0 };
        if !ok {
            return false;
        }
    }
    m.constraints.iter().all(|c| eval_bool(c, l, vals))
}

/// All valid products in variable order, sorted.
pub fn products(m: &FeatureModel) -> Vec<Vec<i64>> {
    let l = layout(m);
    let candidates: Vec<Vec<i64>> = m
        .variables()
        .into_iter()
        .map(|v| match v {
            ModelVar::Feature(_) => vec![0, 1],
            ModelVar::Attribute(a) => {
                let a = m.attribute(a);
                let mut vs: BTreeSet<i64> = (a.lo..=a.hi).collect();
                vs.insert(0);
                vs.into_iter().collect()
            }
        })
        .collect();
    let mut out = Vec::new();
    cartesian(&candidates, &mut Vec::new(), &mut |a| {
        if is_product_with(m, &l, a) {
            out.push(a.to_vec());
        }
    });
    out
}

fn allows(r: &Restriction, v: i64) -> bool {
    match *r {
        Restriction::Assign(a) => v == a,
        Restriction::Exclude(a) => v != a,
        Restriction::Range { lo, hi } => lo <= v && v <= hi,
    }
}

/// Products that satisfy every `(variable name, restriction)` pair.
pub fn filter_products(names: &[String], products: &[Vec<i64>], decisions: &[(String, Restriction)]) -> Vec<Vec<i64>> {
    let idx: Vec<(usize, &Restriction)> = decisions
        .iter()
        .map(|(n, r)| (names.iter().position(|x| x == n).unwrap_or_else(|| panic!("unknown variable {n}")), r))
        .collect();
    products.iter().filter(|p| idx.iter().all(|&(i, r)| allows(r, p[i]))).cloned().collect()
}

/// Per-variable union over `products`.
pub fn domains_of(names: &[String], products: &[Vec<i64>]) -> Vec<(String, Domain)> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), Domain::from_values(products.iter().map(|p| p[i]))))
        .collect()
}

/// Valid domains of `m` under `decisions`.
pub fn valid_domains(m: &FeatureModel, decisions: &[(String, Restriction)]) -> Vec<(String, Domain)> {
    let names = var_names(m);
    let ps = filter_products(&names, &products(m), decisions);
    domains_of(&names, &ps)
}
