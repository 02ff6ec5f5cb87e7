use super::{AttributeId, FeatureId};
use crate::solver::CmpOp;

/// Maximum nesting depth of a constraint expression (a leaf has depth 1).
pub const MAX_EXPR_DEPTH: usize = 64;

/// Cross-tree constraint expressions.
///
/// Features are usable in both positions: as a Boolean (selected) or as the
/// integer 0/1. Attributes are integers; an attribute of a deselected
/// feature evaluates to 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Feature(FeatureId),
    Attr(AttributeId),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
    Iff(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExprType {
    Int,
    Bool,
}

impl Expr {
    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Int(_) | Expr::Bool(_) | Expr::Feature(_) | Expr::Attr(_) => vec![],
            Expr::Neg(a) | Expr::Not(a) => vec![a],
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Cmp(_, a, b)
            | Expr::And(a, b)
            | Expr::Or(a, b)
            | Expr::Implies(a, b)
            | Expr::Iff(a, b) => vec![a, b],
        }
    }

    /// Whether the node may stand in a position of type `t`.
    pub fn fits(&self, t: ExprType) -> bool {
        match self {
            Expr::Feature(_) => true,
            Expr::Int(_) | Expr::Attr(_) | Expr::Add(..) | Expr::Sub(..) | Expr::Mul(..) | Expr::Neg(_) => {
                t == ExprType::Int
            }
            _ => t == ExprType::Bool,
        }
    }

    /// Checks the whole tree against an expected type, returning a message
    /// for the first mismatch.
    pub fn type_check(&self, expected: ExprType) -> Result<(), String> {
        if !self.fits(expected) {
            return Err(match expected {
                ExprType::Int => "expected an integer expression, found a Boolean one".into(),
                ExprType::Bool => "expected a Boolean expression, found an integer one".into(),
            });
        }
        let child_type = match self {
            Expr::Add(..) | Expr::Sub(..) | Expr::Mul(..) | Expr::Neg(_) | Expr::Cmp(..) => ExprType::Int,
            _ => ExprType::Bool,
        };
        self.children().into_iter().try_for_each(|c| c.type_check(child_type))
    }

    pub fn features(&self, out: &mut Vec<FeatureId>) {
        if let Expr::Feature(f) = self {
            out.push(*f);
        }
        for c in self.children() {
            c.features(out);
        }
    }

    pub fn attributes(&self, out: &mut Vec<AttributeId>) {
        if let Expr::Attr(a) = self {
            out.push(*a);
        }
        for c in self.children() {
            c.attributes(out);
        }
    }
}
