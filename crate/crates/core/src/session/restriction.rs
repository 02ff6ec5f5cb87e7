use serde::{Deserialize, Serialize};

use crate::solver::{CmpOp, ConstraintSpec, Domain, LinearCmp, VarId};

/// A unary user restriction.
///
/// JSON: `{"kind":"assign"|"exclude"|"range","value":v|null,"lo":l|null,"hi":h|null}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RestrictionJson", into = "RestrictionJson")]
pub enum Restriction {
    Assign(i64),
    Exclude(i64),
    /// Inclusive; `lo ≤ hi`.
    Range { lo: i64, hi: i64 },
}

impl Restriction {
    /// True iff some value of `d` satisfies the restriction.
    pub fn intersects(&self, d: &Domain) -> bool {
        match *self {
            Restriction::Assign(v) => d.contains(v),
            Restriction::Exclude(v) => !d.remove_value(v).is_empty(),
            Restriction::Range { lo, hi } => lo <= hi && !d.intersect(&Domain::interval(lo, hi)).is_empty(),
        }
    }

    pub fn allows(&self, v: i64) -> bool {
        match *self {
            Restriction::Assign(a) => v == a,
            Restriction::Exclude(a) => v != a,
            Restriction::Range { lo, hi } => (lo..=hi).contains(&v),
        }
    }

    pub fn constraints(&self, var: VarId) -> Vec<ConstraintSpec> {
        let unary = |op, k| ConstraintSpec::Linear(LinearCmp::unary(var, op, k));
        match *self {
            Restriction::Assign(v) => vec![unary(CmpOp::Eq, v)],
            Restriction::Exclude(v) => vec![unary(CmpOp::Ne, v)],
            Restriction::Range { lo, hi } => vec![unary(CmpOp::Ge, lo), unary(CmpOp::Le, hi)],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Assign,
    Exclude,
    Range,
}

#[derive(Serialize, Deserialize)]
struct RestrictionJson {
    kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<i64>,
}

impl TryFrom<RestrictionJson> for Restriction {
    type Error = String;

    fn try_from(j: RestrictionJson) -> Result<Self, String> {
        match (j.kind, j.value, j.lo, j.hi) {
            (Kind::Assign, Some(v), None, None) => Ok(Restriction::Assign(v)),
            (Kind::Exclude, Some(v), None, None) => Ok(Restriction::Exclude(v)),
            (Kind::Range, None, Some(lo), Some(hi)) if lo <= hi => Ok(Restriction::Range { lo, hi }),
            (Kind::Range, None, Some(lo), Some(hi)) => Err(format!("empty range [{lo}..{hi}]")),
            (Kind::Range, ..) => Err("range needs `lo` and `hi` and no `value`".into()),
            _ => Err("assign and exclude need `value` and no `lo`/`hi`".into()),
        }
    }
}

impl From<Restriction> for RestrictionJson {
    fn from(r: Restriction) -> Self {
        let (kind, value, lo, hi) = match r {
            Restriction::Assign(v) => (Kind::Assign, Some(v), None, None),
            Restriction::Exclude(v) => (Kind::Exclude, Some(v), None, None),
            Restriction::Range { lo, hi } => (Kind::Range, None, Some(lo), Some(hi)),
        };
        RestrictionJson { kind, value, lo, hi }
    }
}
