use std::fmt::Write;

use super::{ChildRelation, Expr, FeatureModel, GroupKind};

/// Canonical text form. Blocks are emitted for the root and for every
/// feature with children, in id order, followed by attributes and
/// constraints in declaration order.
pub fn serialize_model(m: &FeatureModel) -> String {
    let mut out = String::new();
    for f in &m.features {
        if f.children.is_empty() {
            if f.id == m.root {
                writeln!(out, "feature {} {{}}", f.name).unwrap();
            }
            continue;
        }
        writeln!(out, "feature {} {{", f.name).unwrap();
        for rel in &f.children {
            let name = |id: &super::FeatureId| m.feature(*id).name.as_str();
            match rel {
                ChildRelation::Mandatory(c) => writeln!(out, "  mandatory {}", name(c)),
                ChildRelation::Optional(c) => writeln!(out, "  optional {}", name(c)),
                ChildRelation::Group { kind, members } => {
                    let kw = match kind {
                        GroupKind::Or => "or",
                        GroupKind::Xor => "xor",
                    };
                    let names: Vec<&str> = members.iter().map(name).collect();
                    writeln!(out, "  {kw} {{ {} }}", names.join(", "))
                }
            }
            .unwrap();
        }
        out.push_str("}\n");
    }
    for a in &m.attributes {
        writeln!(out, "attribute {}.{} : int[{}..{}]", m.feature(a.owner).name, a.name, a.lo, a.hi).unwrap();
    }
    for c in &m.constraints {
        writeln!(out, "constraint {}", serialize_expr(m, c)).unwrap();
    }
    out
}

/// Every compound sub-expression is parenthesized, except at top level.
pub fn serialize_expr(m: &FeatureModel, e: &Expr) -> String {
    let s = expr_text(m, e);
    match e {
        Expr::Add(..)
        | Expr::Sub(..)
        | Expr::Mul(..)
        | Expr::Cmp(..)
        | Expr::And(..)
        | Expr::Or(..)
        | Expr::Implies(..)
        | Expr::Iff(..) => s[1..s.len() - 1].to_string(),
        _ => s,
    }
}

fn expr_text(m: &FeatureModel, e: &Expr) -> String {
    let bin = |op: &str, a: &Expr, b: &Expr| format!("({} {op} {})", expr_text(m, a), expr_text(m, b));
    match e {
        Expr::Int(v) => v.to_string(),
        Expr::Bool(b) => b.to_string(),
        Expr::Feature(f) => m.feature(*f).name.clone(),
        Expr::Attr(a) => m.qualified_name(*a),
        // `-3` would read back as a literal.
        Expr::Neg(a) if matches!(**a, Expr::Int(_)) => format!("-({})", expr_text(m, a)),
        Expr::Neg(a) => format!("-{}", expr_text(m, a)),
        Expr::Not(a) => format!("!{}", expr_text(m, a)),
        Expr::Add(a, b) => bin("+", a, b),
        Expr::Sub(a, b) => bin("-", a, b),
        Expr::Mul(a, b) => bin("*", a, b),
        Expr::Cmp(op, a, b) => bin(op.symbol(), a, b),
        Expr::And(a, b) => bin("&&", a, b),
        Expr::Or(a, b) => bin("||", a, b),
        Expr::Implies(a, b) => bin("=>", a, b),
        Expr::Iff(a, b) => bin("<=>", a, b),
    }
}
