//! Constraint forms accepted by the kernel and their propagators.
//!
//! Linear constraints are normalized to `Σ aᵢxᵢ ≤ k`, `= k` or `≠ k` with
//! `i128` arithmetic. `≤`/`=` get bounds consistency, `≠` removes a value
//! once a single variable is left unfixed. Unary linear constraints are
//! therefore domain consistent.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Domain, VarId};

/// Comparison operators shared by model expressions and solver constraints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn eval<T: Ord>(self, lhs: T, rhs: T) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }

    /// The operator of the logical complement.
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// `Σ coeff·var op rhs`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LinearCmp {
    pub terms: Vec<(VarId, i64)>,
    pub op: CmpOp,
    pub rhs: i64,
}

impl LinearCmp {
    pub fn new(terms: Vec<(VarId, i64)>, op: CmpOp, rhs: i64) -> Self {
        LinearCmp { terms, op, rhs }
    }

    /// `var op value`.
    pub fn unary(var: VarId, op: CmpOp, value: i64) -> Self {
        LinearCmp { terms: vec![(var, 1)], op, rhs: value }
    }

    fn holds(&self, values: &[i64]) -> bool {
        let lhs: i128 = self
            .terms
            .iter()
            .map(|&(v, a)| a as i128 * values[v.index()] as i128)
            .sum();
        self.op.eval(lhs, self.rhs as i128)
    }
}

/// The constraint forms the kernel understands. Richer expressions are
/// decomposed into these using auxiliary variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintSpec {
    Linear(LinearCmp),
    /// `x · y = z`
    MulEq { x: VarId, y: VarId, z: VarId },
    /// `b = 1 ⇔ inner`
    ReifLinear { b: VarId, inner: LinearCmp },
    /// `pos₁ ∨ … ∨ ¬neg₁ ∨ …`
    BoolClause { pos: Vec<VarId>, neg: Vec<VarId> },
    EqVar { x: VarId, y: VarId },
}

impl ConstraintSpec {
    pub fn vars(&self) -> Vec<VarId> {
        match self {
            ConstraintSpec::Linear(l) => l.terms.iter().map(|t| t.0).collect(),
            ConstraintSpec::MulEq { x, y, z } => vec![*x, *y, *z],
            ConstraintSpec::ReifLinear { b, inner } => std::iter::once(*b)
                .chain(inner.terms.iter().map(|t| t.0))
                .collect(),
            ConstraintSpec::BoolClause { pos, neg } => pos.iter().chain(neg.iter()).copied().collect(),
            ConstraintSpec::EqVar { x, y } => vec![*x, *y],
        }
    }

    /// Variables that must be 0/1.
    pub(crate) fn boolean_vars(&self) -> Vec<VarId> {
        match self {
            ConstraintSpec::ReifLinear { b, .. } => vec![*b],
            ConstraintSpec::BoolClause { pos, neg } => pos.iter().chain(neg.iter()).copied().collect(),
            _ => Vec::new(),
        }
    }

    /// Evaluates the constraint on a total assignment indexed by `VarId`.
    pub fn holds(&self, values: &[i64]) -> bool {
        match self {
            ConstraintSpec::Linear(l) => l.holds(values),
            ConstraintSpec::MulEq { x, y, z } => {
                values[x.index()] as i128 * values[y.index()] as i128 == values[z.index()] as i128
            }
            ConstraintSpec::ReifLinear { b, inner } => (values[b.index()] == 1) == inner.holds(values),
            ConstraintSpec::BoolClause { pos, neg } => {
                pos.iter().any(|v| values[v.index()] == 1) || neg.iter().any(|v| values[v.index()] == 0)
            }
            ConstraintSpec::EqVar { x, y } => values[x.index()] == values[y.index()],
        }
    }
}

pub(crate) struct Failure;

pub(crate) type PropResult = Result<(), Failure>;

/// Domain access for propagators. `update` records the old domain on the
/// trail and schedules the watchers of `v`.
pub(crate) trait DomainStore {
    fn dom(&self, v: VarId) -> &Domain;
    fn update(&mut self, v: VarId, d: Domain) -> PropResult;

    fn min(&self, v: VarId) -> i128 {
        self.dom(v).min().expect("non-empty domain") as i128
    }

    fn max(&self, v: VarId) -> i128 {
        self.dom(v).max().expect("non-empty domain") as i128
    }

    fn restrict(&mut self, v: VarId, lo: i128, hi: i128) -> PropResult {
        let cur = self.dom(v);
        if lo <= cur.min().unwrap() as i128 && hi >= cur.max().unwrap() as i128 {
            return Ok(());
        }
        let d = cur.restrict_min(lo).restrict_max(hi);
        self.update(v, d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NormOp {
    Le,
    Eq,
    Ne,
}

/// A linear constraint in normal form.
#[derive(Clone, Debug)]
pub(crate) struct NormLinear {
    terms: Vec<(VarId, i128)>,
    op: NormOp,
    rhs: i128,
}

impl NormLinear {
    pub(crate) fn from_spec(l: &LinearCmp) -> Self {
        let mut terms: Vec<(VarId, i128)> = Vec::with_capacity(l.terms.len());
        for &(v, a) in &l.terms {
            match terms.iter_mut().find(|t| t.0 == v) {
                Some(t) => t.1 += a as i128,
                None => terms.push((v, a as i128)),
            }
        }
        terms.retain(|t| t.1 != 0);
        let k = l.rhs as i128;
        let neg = |terms: &[(VarId, i128)]| terms.iter().map(|&(v, a)| (v, -a)).collect::<Vec<_>>();
        match l.op {
            CmpOp::Le => NormLinear { terms, op: NormOp::Le, rhs: k },
            CmpOp::Lt => NormLinear { terms, op: NormOp::Le, rhs: k - 1 },
            CmpOp::Ge => NormLinear { terms: neg(&terms), op: NormOp::Le, rhs: -k },
            CmpOp::Gt => NormLinear { terms: neg(&terms), op: NormOp::Le, rhs: -k - 1 },
            CmpOp::Eq => NormLinear { terms, op: NormOp::Eq, rhs: k },
            CmpOp::Ne => NormLinear { terms, op: NormOp::Ne, rhs: k },
        }
    }

    pub(crate) fn negated(&self) -> Self {
        match self.op {
            NormOp::Le => NormLinear {
                terms: self.terms.iter().map(|&(v, a)| (v, -a)).collect(),
                op: NormOp::Le,
                rhs: -self.rhs - 1,
            },
            NormOp::Eq => NormLinear { op: NormOp::Ne, ..self.clone() },
            NormOp::Ne => NormLinear { op: NormOp::Eq, ..self.clone() },
        }
    }

    fn bounds<S: DomainStore + ?Sized>(&self, s: &S) -> (i128, i128) {
        self.terms.iter().fold((0, 0), |(lo, hi), &(v, a)| {
            let (tl, th) = term_bounds(s, v, a);
            (lo + tl, hi + th)
        })
    }

    /// Exact set of values for `x` satisfying unary `a·x op k`.
    fn unary_support(a: i128, op: NormOp, k: i128) -> Domain {
        let full = Domain::interval(i64::MIN, i64::MAX);
        match op {
            NormOp::Le if a > 0 => full.restrict_max(div_floor(k, a)),
            NormOp::Le => full.restrict_min(div_ceil(k, a)),
            NormOp::Eq | NormOp::Ne => {
                let point = (k % a == 0)
                    .then(|| k / a)
                    .filter(|q| *q >= i64::MIN as i128 && *q <= i64::MAX as i128);
                match (op, point) {
                    (NormOp::Eq, Some(q)) => Domain::singleton(q as i64),
                    (NormOp::Eq, None) => Domain::empty(),
                    (_, Some(q)) => full.remove_value(q as i64),
                    (_, None) => full,
                }
            }
        }
    }

    /// `Some(true)` if entailed, `Some(false)` if disentailed.
    fn status<S: DomainStore + ?Sized>(&self, s: &S) -> Option<bool> {
        if self.terms.is_empty() {
            return Some(match self.op {
                NormOp::Le => 0 <= self.rhs,
                NormOp::Eq => self.rhs == 0,
                NormOp::Ne => self.rhs != 0,
            });
        }
        if let [(v, a)] = self.terms[..] {
            let support = Self::unary_support(a, self.op, self.rhs);
            let d = s.dom(v);
            if d.is_subset(&support) {
                return Some(true);
            }
            if d.is_disjoint(&support) {
                return Some(false);
            }
            return None;
        }
        let (lo, hi) = self.bounds(s);
        match self.op {
            NormOp::Le if hi <= self.rhs => Some(true),
            NormOp::Le if lo > self.rhs => Some(false),
            NormOp::Eq | NormOp::Ne if lo == hi && lo == self.rhs => Some(self.op == NormOp::Eq),
            NormOp::Eq | NormOp::Ne if self.rhs < lo || self.rhs > hi => Some(self.op == NormOp::Ne),
            _ => None,
        }
    }

    fn propagate<S: DomainStore + ?Sized>(&self, s: &mut S) -> PropResult {
        match self.op {
            NormOp::Le => propagate_le(&self.terms, self.rhs, s, false),
            NormOp::Eq => {
                propagate_le(&self.terms, self.rhs, s, false)?;
                propagate_le(&self.terms, -self.rhs, s, true)
            }
            NormOp::Ne => {
                let mut free = None;
                let mut fixed_sum = 0i128;
                for &(v, a) in &self.terms {
                    match s.dom(v).value() {
                        Some(x) => fixed_sum += a * x as i128,
                        None if free.is_some() => return Ok(()),
                        None => free = Some((v, a)),
                    }
                }
                match free {
                    None if fixed_sum == self.rhs => Err(Failure),
                    None => Ok(()),
                    Some((v, a)) => {
                        let k = self.rhs - fixed_sum;
                        if k % a != 0 {
                            return Ok(());
                        }
                        let q = k / a;
                        if q < i64::MIN as i128 || q > i64::MAX as i128 {
                            return Ok(());
                        }
                        let d = s.dom(v);
                        if d.contains(q as i64) {
                            let d = d.remove_value(q as i64);
                            s.update(v, d)?;
                        }
                        Ok(())
                    }
                }
            }
        }
    }
}

fn term_bounds<S: DomainStore + ?Sized>(s: &S, v: VarId, a: i128) -> (i128, i128) {
    if a > 0 {
        (a * s.min(v), a * s.max(v))
    } else {
        (a * s.max(v), a * s.min(v))
    }
}

/// Bounds propagation for `Σ (±a)·x ≤ k`; `flip` negates every coefficient.
fn propagate_le<S: DomainStore + ?Sized>(
    terms: &[(VarId, i128)],
    rhs: i128,
    s: &mut S,
    flip: bool,
) -> PropResult {
    let sign = if flip { -1 } else { 1 };
    let min_sum: i128 = terms.iter().map(|&(v, a)| term_bounds(s, v, sign * a).0).sum();
    if min_sum > rhs {
        return Err(Failure);
    }
    for &(v, a) in terms {
        let a = sign * a;
        let own_min = term_bounds(s, v, a).0;
        let slack = rhs - (min_sum - own_min);
        if a > 0 {
            s.restrict(v, i128::MIN, div_floor(slack, a))?;
        } else {
            s.restrict(v, div_ceil(slack, a), i128::MAX)?;
        }
    }
    Ok(())
}

pub(crate) fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

pub(crate) fn div_ceil(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) == (b < 0)) {
        q + 1
    } else {
        q
    }
}

/// Internal propagator form of a posted constraint.
#[derive(Clone, Debug)]
pub(crate) enum Propagator {
    Linear(NormLinear),
    Mul { x: VarId, y: VarId, z: VarId },
    Reif { b: VarId, pos: NormLinear, neg: NormLinear },
    Clause { pos: Vec<VarId>, neg: Vec<VarId> },
    EqVar { x: VarId, y: VarId },
}

impl Propagator {
    pub(crate) fn from_spec(c: &ConstraintSpec) -> Self {
        match c {
            ConstraintSpec::Linear(l) => Propagator::Linear(NormLinear::from_spec(l)),
            ConstraintSpec::MulEq { x, y, z } => Propagator::Mul { x: *x, y: *y, z: *z },
            ConstraintSpec::ReifLinear { b, inner } => {
                let pos = NormLinear::from_spec(inner);
                let neg = pos.negated();
                Propagator::Reif { b: *b, pos, neg }
            }
            ConstraintSpec::BoolClause { pos, neg } => Propagator::Clause { pos: pos.clone(), neg: neg.clone() },
            ConstraintSpec::EqVar { x, y } => Propagator::EqVar { x: *x, y: *y },
        }
    }

    pub(crate) fn propagate<S: DomainStore + ?Sized>(&self, s: &mut S) -> PropResult {
        match self {
            Propagator::Linear(l) => l.propagate(s),
            Propagator::Mul { x, y, z } => propagate_mul(*x, *y, *z, s),
            Propagator::Reif { b, pos, neg } => match s.dom(*b).value() {
                Some(1) => pos.propagate(s),
                Some(_) => neg.propagate(s),
                None => match pos.status(s) {
                    Some(t) => s.update(*b, Domain::singleton(t as i64)),
                    None => Ok(()),
                },
            },
            Propagator::Clause { pos, neg } => propagate_clause(pos, neg, s),
            Propagator::EqVar { x, y } => {
                let both = s.dom(*x).intersect(s.dom(*y));
                if both != *s.dom(*x) {
                    s.update(*x, both.clone())?;
                }
                if both != *s.dom(*y) {
                    s.update(*y, both)?;
                }
                Ok(())
            }
        }
    }
}

fn propagate_clause<S: DomainStore + ?Sized>(pos: &[VarId], neg: &[VarId], s: &mut S) -> PropResult {
    // (var, value that makes the literal true)
    let mut unit: Option<(VarId, i64)> = None;
    let mut open = 0;
    for (&v, want) in pos.iter().map(|v| (v, 1)).chain(neg.iter().map(|v| (v, 0))) {
        let d = s.dom(v);
        match d.value() {
            Some(x) if x == want => return Ok(()),
            Some(_) => {}
            None => {
                open += 1;
                if open > 1 {
                    return Ok(());
                }
                unit = Some((v, want));
            }
        }
    }
    match unit {
        None => Err(Failure),
        Some((v, want)) => s.update(v, Domain::singleton(want)),
    }
}

fn product_bounds(xl: i128, xh: i128, yl: i128, yh: i128) -> (i128, i128) {
    let c = [xl * yl, xl * yh, xh * yl, xh * yh];
    (*c.iter().min().unwrap(), *c.iter().max().unwrap())
}

/// Hull of `{ z / y : z ∈ [zl, zh], y ∈ divisor, z / y integral }` split over
/// the strictly positive and strictly negative parts of `divisor`. `None`
/// when the quotient is unconstrained (0 is both a possible product and a
/// possible divisor).
fn quotient_hull(zl: i128, zh: i128, divisor: &Domain) -> Option<(i128, i128)> {
    if zl <= 0 && zh >= 0 && divisor.contains(0) {
        return None;
    }
    let mut hull: Option<(i128, i128)> = None;
    for part in [divisor.restrict_min(1), divisor.restrict_max(-1)] {
        let (Some(a), Some(b)) = (part.min(), part.max()) else { continue };
        let (a, b) = (a as i128, b as i128);
        let corners = [(zl, a), (zl, b), (zh, a), (zh, b)];
        let lo = corners.iter().map(|&(n, d)| div_ceil(n, d)).min().unwrap();
        let hi = corners.iter().map(|&(n, d)| div_floor(n, d)).max().unwrap();
        hull = Some(match hull {
            None => (lo, hi),
            Some((l, h)) => (l.min(lo), h.max(hi)),
        });
    }
    // No nonzero divisor and 0 is not a product: empty.
    Some(hull.unwrap_or((1, 0)))
}

fn propagate_mul<S: DomainStore + ?Sized>(x: VarId, y: VarId, z: VarId, s: &mut S) -> PropResult {
    let (zl, zh) = product_bounds(s.min(x), s.max(x), s.min(y), s.max(y));
    s.restrict(z, zl, zh)?;
    let (zl, zh) = (s.min(z), s.max(z));
    if let Some((lo, hi)) = quotient_hull(zl, zh, s.dom(y)) {
        if lo > hi {
            return Err(Failure);
        }
        s.restrict(x, lo, hi)?;
    }
    if let Some((lo, hi)) = quotient_hull(zl, zh, s.dom(x)) {
        if lo > hi {
            return Err(Failure);
        }
        s.restrict(y, lo, hi)?;
    }
    Ok(())
}
