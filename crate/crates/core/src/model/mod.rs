//! Extended feature models: a feature tree with mandatory/optional edges and
//! or/xor groups, bounded integer attributes, and cross-tree constraints.
//!
//! Models are immutable values. Feature ids produced by [`parse_model`] are
//! assigned in pre-order (root first, children in declaration order), which
//! makes `parse_model(&serialize_model(&m)) == m` hold structurally.

mod expr;
mod parse;
mod serialize;
mod validate;

use std::fmt;

use serde::Serialize;

pub use expr::{Expr, ExprType, MAX_EXPR_DEPTH};
pub use parse::{parse_model, ParseError, ParseErrorKind};
pub use serialize::{serialize_expr, serialize_model};
pub use validate::{validate, Diagnostic};

/// Upper bound on `hi - lo + 1` for an attribute.
pub const MAX_ATTRIBUTE_DOMAIN: i128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FeatureId(pub u32);

impl FeatureId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct AttributeId(pub u32);

impl AttributeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupKind {
    Or,
    Xor,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChildRelation {
    Mandatory(FeatureId),
    Optional(FeatureId),
    Group { kind: GroupKind, members: Vec<FeatureId> },
}

impl ChildRelation {
    pub fn members(&self) -> &[FeatureId] {
        match self {
            ChildRelation::Mandatory(c) | ChildRelation::Optional(c) => std::slice::from_ref(c),
            ChildRelation::Group { members, .. } => members,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Feature {
    pub id: FeatureId,
    pub name: String,
    pub parent: Option<FeatureId>,
    pub children: Vec<ChildRelation>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attribute {
    pub id: AttributeId,
    pub owner: FeatureId,
    pub name: String,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureModel {
    pub root: FeatureId,
    /// Indexed by `FeatureId`.
    pub features: Vec<Feature>,
    /// Indexed by `AttributeId`.
    pub attributes: Vec<Attribute>,
    /// Boolean-valued, in declaration order.
    pub constraints: Vec<Expr>,
}

/// A configurable variable of the model, as seen by users.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelVar {
    Feature(FeatureId),
    Attribute(AttributeId),
}

impl FeatureModel {
    pub fn feature(&self, id: FeatureId) -> &Feature {
        &self.features[id.index()]
    }

    pub fn attribute(&self, id: AttributeId) -> &Attribute {
        &self.attributes[id.index()]
    }

    pub fn feature_by_name(&self, name: &str) -> Option<FeatureId> {
        self.features.iter().find(|f| f.name == name).map(|f| f.id)
    }

    pub fn attribute_by_name(&self, owner: &str, name: &str) -> Option<AttributeId> {
        let owner = self.feature_by_name(owner)?;
        self.attributes
            .iter()
            .find(|a| a.owner == owner && a.name == name)
            .map(|a| a.id)
    }

    /// `Owner.name`.
    pub fn qualified_name(&self, id: AttributeId) -> String {
        let a = self.attribute(id);
        format!("{}.{}", self.feature(a.owner).name, a.name)
    }

    /// Features reachable from the root, in pre-order.
    pub fn preorder(&self) -> Vec<FeatureId> {
        let mut out = Vec::with_capacity(self.features.len());
        let mut stack = vec![self.root];
        let mut seen = vec![false; self.features.len()];
        while let Some(f) = stack.pop() {
            if std::mem::replace(&mut seen[f.index()], true) {
                continue;
            }
            out.push(f);
            let children: Vec<FeatureId> = self
                .feature(f)
                .children
                .iter()
                .flat_map(|r| r.members().iter().copied())
                .collect();
            stack.extend(children.into_iter().rev());
        }
        out
    }

    /// All model variables: features in pre-order, then attributes in
    /// declaration order.
    pub fn variables(&self) -> Vec<ModelVar> {
        self.preorder()
            .into_iter()
            .map(ModelVar::Feature)
            .chain(self.attributes.iter().map(|a| ModelVar::Attribute(a.id)))
            .collect()
    }

    pub fn var_name(&self, v: ModelVar) -> String {
        match v {
            ModelVar::Feature(f) => self.feature(f).name.clone(),
            ModelVar::Attribute(a) => self.qualified_name(a),
        }
    }

    /// Resolves a user-facing variable name: a feature name, a qualified
    /// attribute `Owner.name`, or a bare attribute name when that is
    /// unambiguous and not also a feature name.
    pub fn resolve_var(&self, name: &str) -> Option<ModelVar> {
        if let Some((owner, attr)) = name.split_once('.') {
            return self.attribute_by_name(owner, attr).map(ModelVar::Attribute);
        }
        if let Some(f) = self.feature_by_name(name) {
            return Some(ModelVar::Feature(f));
        }
        let mut hits = self.attributes.iter().filter(|a| a.name == name);
        match (hits.next(), hits.next()) {
            (Some(a), None) => Some(ModelVar::Attribute(a.id)),
            _ => None,
        }
    }
}

impl fmt::Display for FeatureModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_model(self))
    }
}

pub(crate) fn is_valid_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !parse::is_keyword(s)
}

#[cfg(test)]
pub(crate) const M1: &str = "\
feature Phone {
  mandatory Screen
  optional GPS
}
feature Screen {
  xor { Basic, HD }
}
attribute GPS.price : int[1..3]
constraint HD => GPS
";
