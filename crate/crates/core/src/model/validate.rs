use std::collections::HashSet;

use thiserror::Error;

use super::{is_valid_name, ChildRelation, ExprType, FeatureId, FeatureModel, MAX_ATTRIBUTE_DOMAIN, MAX_EXPR_DEPTH};

/// A violated model invariant and where it was found.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Diagnostic {
    #[error("root id {0} does not name a feature")]
    MissingRoot(u32),
    #[error("feature at index {index} carries id {id}")]
    IdMismatch { index: usize, id: u32 },
    #[error("`{name}` is not a valid name")]
    InvalidName { name: String },
    #[error("feature name `{name}` is used more than once")]
    DuplicateFeature { name: String },
    #[error("attribute `{name}` is declared more than once")]
    DuplicateAttribute { name: String },
    #[error("feature `{feature}` refers to a child id {child} that does not exist")]
    UnknownChild { feature: String, child: u32 },
    #[error("feature `{feature}` appears as a child {count} times")]
    MultipleParents { feature: String, count: usize },
    #[error("parent link of feature `{feature}` does not match the child relations")]
    ParentMismatch { feature: String },
    #[error("feature `{feature}` is not reachable from the root")]
    Unreachable { feature: String },
    #[error("group under `{feature}` has fewer than two members")]
    GroupTooSmall { feature: String },
    #[error("attribute `{attribute}` has an unknown owner id {owner}")]
    UnknownOwner { attribute: String, owner: u32 },
    #[error("attribute `{attribute}` has an empty domain [{lo}..{hi}]")]
    EmptyAttributeDomain { attribute: String, lo: i64, hi: i64 },
    #[error("attribute `{attribute}` has more than {MAX_ATTRIBUTE_DOMAIN} values")]
    AttributeDomainTooLarge { attribute: String },
    #[error("constraint #{index} refers to an undeclared feature or attribute")]
    DanglingReference { index: usize },
    #[error("constraint #{index} is ill-typed: {message}")]
    TypeError { index: usize, message: String },
    #[error("constraint #{index} is deeper than {MAX_EXPR_DEPTH}")]
    ExprTooDeep { index: usize },
}

/// Checks every model invariant. An empty list means the model is valid.
pub fn validate(m: &FeatureModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = m.features.len();
    if m.root.index() >= n {
        out.push(Diagnostic::MissingRoot(m.root.0));
        return out;
    }
    let mut names = HashSet::new();
    for (index, f) in m.features.iter().enumerate() {
        if f.id.index() != index {
            out.push(Diagnostic::IdMismatch { index, id: f.id.0 });
        }
        if !is_valid_name(&f.name) {
            out.push(Diagnostic::InvalidName { name: f.name.clone() });
        }
        if !names.insert(f.name.as_str()) {
            out.push(Diagnostic::DuplicateFeature { name: f.name.clone() });
        }
    }
    if !out.is_empty() {
        return out;
    }

    let mut mentions = vec![0usize; n];
    for f in &m.features {
        for rel in &f.children {
            if let ChildRelation::Group { members, .. } = rel {
                if members.len() < 2 {
                    out.push(Diagnostic::GroupTooSmall { feature: f.name.clone() });
                }
            }
            for &c in rel.members() {
                if c.index() >= n {
                    out.push(Diagnostic::UnknownChild { feature: f.name.clone(), child: c.0 });
                    continue;
                }
                mentions[c.index()] += 1;
                if m.features[c.index()].parent != Some(f.id) {
                    out.push(Diagnostic::ParentMismatch { feature: m.features[c.index()].name.clone() });
                }
            }
        }
    }
    for f in &m.features {
        let expected = usize::from(f.id != m.root);
        if mentions[f.id.index()] > 1 || (f.id == m.root && mentions[f.id.index()] > 0) {
            out.push(Diagnostic::MultipleParents { feature: f.name.clone(), count: mentions[f.id.index()] });
        } else if mentions[f.id.index()] != expected || (f.id == m.root) != f.parent.is_none() {
            out.push(Diagnostic::ParentMismatch { feature: f.name.clone() });
        }
    }
    if out.is_empty() {
        let reached: HashSet<FeatureId> = m.preorder().into_iter().collect();
        for f in &m.features {
            if !reached.contains(&f.id) {
                out.push(Diagnostic::Unreachable { feature: f.name.clone() });
            }
        }
    }

    let mut attr_names = HashSet::new();
    for a in &m.attributes {
        let label = match m.features.get(a.owner.index()) {
            Some(o) => format!("{}.{}", o.name, a.name),
            None => {
                out.push(Diagnostic::UnknownOwner { attribute: a.name.clone(), owner: a.owner.0 });
                continue;
            }
        };
        if !is_valid_name(&a.name) {
            out.push(Diagnostic::InvalidName { name: label.clone() });
        }
        if !attr_names.insert(label.clone()) {
            out.push(Diagnostic::DuplicateAttribute { name: label.clone() });
        }
        if a.lo > a.hi {
            out.push(Diagnostic::EmptyAttributeDomain { attribute: label, lo: a.lo, hi: a.hi });
        } else if a.hi as i128 - a.lo as i128 + 1 > MAX_ATTRIBUTE_DOMAIN {
            out.push(Diagnostic::AttributeDomainTooLarge { attribute: label });
        }
    }

    for (index, c) in m.constraints.iter().enumerate() {
        let (mut fs, mut attrs) = (Vec::new(), Vec::new());
        c.features(&mut fs);
        c.attributes(&mut attrs);
        if fs.iter().any(|f| f.index() >= n) || attrs.iter().any(|a| a.index() >= m.attributes.len()) {
            out.push(Diagnostic::DanglingReference { index });
            continue;
        }
        if let Err(message) = c.type_check(ExprType::Bool) {
            out.push(Diagnostic::TypeError { index, message });
        }
        if c.depth() > MAX_EXPR_DEPTH {
            out.push(Diagnostic::ExprTooDeep { index });
        }
    }
    out
}
