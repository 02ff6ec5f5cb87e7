use rand::seq::SliceRandom;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::model::{Attribute, AttributeId, ChildRelation, Expr, Feature, FeatureId, FeatureModel, GroupKind};
use crate::solver::{CmpOp, ConstraintSpec, Domain, LinearCmp, VarId};
use crate::translate::compile;

/// Size limits for [`random_model`].
#[derive(Clone, Debug)]
pub struct SmallBounds {
    pub max_features: usize,
    pub max_attributes: usize,
    pub max_attr_values: i64,
    pub max_constraints: usize,
    pub max_depth: usize,
    /// Literals are drawn from `-max_literal..=max_literal`.
    pub max_literal: i64,
}

impl Default for SmallBounds {
    fn default() -> Self {
        SmallBounds {
            max_features: 8,
            max_attributes: 2,
            max_attr_values: 5,
            max_constraints: 3,
            max_depth: 3,
            max_literal: 3,
        }
    }
}

/// Relation shapes before ids are fixed.
enum Rel {
    Mandatory(usize),
    Optional(usize),
    Group(GroupKind, Vec<usize>),
}

/// Builds a model from a tree over temporary indices, renumbering features
/// in pre-order (the order the parser assigns).
fn build_tree(rels: Vec<Vec<Rel>>) -> FeatureModel {
    let n = rels.len();
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![0usize];
    while let Some(t) = stack.pop() {
        order.push(t);
        let kids: Vec<usize> = rels[t]
            .iter()
            .flat_map(|r| match r {
                Rel::Mandatory(c) | Rel::Optional(c) => vec![*c],
                Rel::Group(_, cs) => cs.clone(),
            })
            .collect();
        stack.extend(kids.into_iter().rev());
    }
    let mut id = vec![FeatureId(0); n];
    for (new, &old) in order.iter().enumerate() {
        id[old] = FeatureId(new as u32);
    }
    let mut features: Vec<Feature> = (0..n)
        .map(|i| Feature { id: FeatureId(i as u32), name: format!("F{i}"), parent: None, children: Vec::new() })
        .collect();
    for (old, rs) in rels.into_iter().enumerate() {
        let p = id[old];
        for r in rs {
            let rel = match r {
                Rel::Mandatory(c) => ChildRelation::Mandatory(id[c]),
                Rel::Optional(c) => ChildRelation::Optional(id[c]),
                Rel::Group(kind, cs) => ChildRelation::Group { kind, members: cs.iter().map(|&c| id[c]).collect() },
            };
            for &c in rel.members() {
                features[c.index()].parent = Some(p);
            }
            features[p.index()].children.push(rel);
        }
    }
    FeatureModel { root: FeatureId(0), features, attributes: Vec::new(), constraints: Vec::new() }
}

fn random_relations<R: Rng>(rng: &mut R, kids: Vec<Vec<usize>>, max_group: usize) -> Vec<Vec<Rel>> {
    kids.into_iter()
        .map(|mut ks| {
            ks.shuffle(rng);
            let mut out = Vec::new();
            let mut rest = &ks[..];
            while !rest.is_empty() {
                if rest.len() >= 2 && rng.gen_bool(0.4) {
                    let size = rng.gen_range(2..=rest.len().min(max_group));
                    let kind = if rng.gen_bool(0.5) { GroupKind::Or } else { GroupKind::Xor };
                    out.push(Rel::Group(kind, rest[..size].to_vec()));
                    rest = &rest[size..];
                } else {
                    out.push(if rng.gen_bool(0.4) { Rel::Mandatory(rest[0]) } else { Rel::Optional(rest[0]) });
                    rest = &rest[1..];
                }
            }
            out
        })
        .collect()
}

struct ExprGen {
    features: usize,
    attributes: usize,
    max_literal: i64,
    extremes: bool,
}

impl ExprGen {
    fn literal<R: Rng>(&self, rng: &mut R) -> i64 {
        if self.extremes && rng.gen_bool(0.1) {
            *[i64::MIN, i64::MAX, i64::MIN + 1, 0].choose(rng).unwrap()
        } else {
            rng.gen_range(-self.max_literal..=self.max_literal)
        }
    }

    fn feature<R: Rng>(&self, rng: &mut R) -> Expr {
        Expr::Feature(FeatureId(rng.gen_range(0..self.features) as u32))
    }

    fn int<R: Rng>(&self, rng: &mut R, depth: usize) -> Expr {
        let leaf = depth <= 1 || rng.gen_bool(0.4);
        if leaf {
            return match rng.gen_range(0..3) {
                0 => Expr::Int(self.literal(rng)),
                1 if self.attributes > 0 => Expr::Attr(AttributeId(rng.gen_range(0..self.attributes) as u32)),
                _ => self.feature(rng),
            };
        }
        let d = depth - 1;
        match rng.gen_range(0..4) {
            0 => Expr::Add(Box::new(self.int(rng, d)), Box::new(self.int(rng, d))),
            1 => Expr::Sub(Box::new(self.int(rng, d)), Box::new(self.int(rng, d))),
            2 => Expr::Mul(Box::new(self.int(rng, d)), Box::new(self.int(rng, d))),
            _ => Expr::Neg(Box::new(self.int(rng, d))),
        }
    }

    fn cmp<R: Rng>(&self, rng: &mut R, depth: usize) -> Expr {
        let op = *CmpOp::ALL.choose(rng).unwrap();
        let d = depth.saturating_sub(1).max(1);
        Expr::Cmp(op, Box::new(self.int(rng, d)), Box::new(self.int(rng, d)))
    }

    fn boolean<R: Rng>(&self, rng: &mut R, depth: usize) -> Expr {
        if depth <= 1 {
            return match rng.gen_range(0..6) {
                0 => Expr::Bool(rng.gen_bool(0.5)),
                1..=3 => self.feature(rng),
                _ => Expr::Not(Box::new(self.feature(rng))),
            };
        }
        let d = depth - 1;
        let b = |g: &Self, rng: &mut R| Box::new(g.boolean(rng, d));
        match rng.gen_range(0..8) {
            0 => Expr::And(b(self, rng), b(self, rng)),
            1 => Expr::Or(b(self, rng), b(self, rng)),
            2 => Expr::Not(b(self, rng)),
            3 => Expr::Implies(b(self, rng), b(self, rng)),
            4 => Expr::Iff(b(self, rng), b(self, rng)),
            5 | 6 => self.cmp(rng, depth),
            _ => self.feature(rng),
        }
    }
}

fn random_model_with<R: Rng>(rng: &mut R, b: &SmallBounds, extremes: bool) -> FeatureModel {
    let n = rng.gen_range(1..=b.max_features);
    let mut kids = vec![Vec::new(); n];
    for i in 1..n {
        kids[rng.gen_range(0..i)].push(i);
    }
    let mut m = build_tree(random_relations(rng, kids, 4));
    let na = rng.gen_range(0..=b.max_attributes);
    for k in 0..na {
        let lo = rng.gen_range(-2..=3);
        let size = rng.gen_range(1..=b.max_attr_values);
        m.attributes.push(Attribute {
            id: AttributeId(k as u32),
            owner: FeatureId(rng.gen_range(0..n) as u32),
            name: format!("a{k}"),
            lo,
            hi: lo + size - 1,
        });
    }
    let g = ExprGen { features: n, attributes: na, max_literal: b.max_literal, extremes };
    let nc = rng.gen_range(0..=b.max_constraints);
    for _ in 0..nc {
        let depth = rng.gen_range(1..=b.max_depth);
        m.constraints.push(g.boolean(rng, depth));
    }
    m
}

/// A valid model within `b`, using every relation and expression kind.
pub fn random_model<R: Rng>(rng: &mut R, b: &SmallBounds) -> FeatureModel {
    random_model_with(rng, b, false)
}

/// Like [`random_model`] with deeper expressions and occasional extreme
/// literals; meant for text round-trips, not for solving.
pub fn random_expr_model<R: Rng>(rng: &mut R) -> FeatureModel {
    let b = SmallBounds { max_depth: 8, max_constraints: 4, max_literal: 1000, ..SmallBounds::default() };
    random_model_with(rng, &b, true)
}

/// A feasible model with 50 features and 10 attributes (domains of at most
/// 20 values) and a handful of cross-tree constraints.
pub fn large_model(seed: u64) -> FeatureModel {
    for attempt in 0.. {
        let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(attempt));
        let m = large_candidate(&mut rng);
        if let Ok(mut cm) = compile(&m) {
            if matches!(cm.solver.solve_first(), Ok(Some(_))) {
                return m;
            }
        }
    }
    unreachable!()
}

fn large_candidate(rng: &mut StdRng) -> FeatureModel {
    const N: usize = 50;
    let mut kids = vec![Vec::new(); N];
    for i in 1..N {
        kids[rng.gen_range(i.saturating_sub(6)..i)].push(i);
    }
    let mut m = build_tree(random_relations(rng, kids, 4));
    for k in 0..10 {
        let lo = rng.gen_range(0..=5);
        let size = rng.gen_range(5..=20);
        m.attributes.push(Attribute {
            id: AttributeId(k),
            owner: FeatureId(rng.gen_range(1..N) as u32),
            name: format!("a{k}"),
            lo,
            hi: lo + size - 1,
        });
    }
    let f = |rng: &mut StdRng| Box::new(Expr::Feature(FeatureId(rng.gen_range(1..N) as u32)));
    let attr = |k: u32| Box::new(Expr::Attr(AttributeId(k)));
    for _ in 0..4 {
        m.constraints.push(Expr::Implies(f(rng), f(rng)));
    }
    for _ in 0..3 {
        m.constraints.push(Expr::Not(Box::new(Expr::And(f(rng), f(rng)))));
    }
    for _ in 0..3 {
        let (i, j) = (rng.gen_range(0..10), rng.gen_range(0..10));
        let cap = m.attributes[i as usize].hi + m.attributes[j as usize].hi - rng.gen_range(2..=6);
        m.constraints.push(Expr::Cmp(CmpOp::Le, Box::new(Expr::Add(attr(i), attr(j))), Box::new(Expr::Int(cap))));
    }
    for _ in 0..2 {
        let i = rng.gen_range(0..10u32);
        let a = &m.attributes[i as usize];
        let owner = Box::new(Expr::Feature(a.owner));
        let floor = a.lo + 2;
        m.constraints.push(Expr::Implies(owner, Box::new(Expr::Cmp(CmpOp::Ge, attr(i), Box::new(Expr::Int(floor))))));
    }
    m
}

/// A raw solver store for kernel property tests.
#[derive(Clone, Debug)]
pub struct RandomStore {
    pub domains: Vec<Domain>,
    pub constraints: Vec<ConstraintSpec>,
}

/// At most 6 variables with at most 6 values each, and up to 5 constraints
/// of every kind. The first `booleans` variables range over `{0,1}`.
pub fn random_store<R: Rng>(rng: &mut R) -> RandomStore {
    let n = rng.gen_range(1..=6usize);
    let booleans = rng.gen_range(1..=n);
    let domains: Vec<Domain> = (0..n)
        .map(|i| {
            if i < booleans {
                Domain::boolean()
            } else {
                let mut vals: Vec<i64> = (-3..=4).collect();
                vals.shuffle(rng);
                Domain::from_values(vals[..rng.gen_range(1..=6)].iter().copied())
            }
        })
        .collect();
    let var = |rng: &mut R| VarId(rng.gen_range(0..n) as u32);
    let bvar = |rng: &mut R| VarId(rng.gen_range(0..booleans) as u32);
    let linear = |rng: &mut R| {
        let k = rng.gen_range(1..=3);
        let terms = (0..k)
            .map(|_| {
                let mut a = rng.gen_range(-3..=3);
                if a == 0 {
                    a = 1;
                }
                (var(rng), a)
            })
            .collect();
        LinearCmp::new(terms, *CmpOp::ALL.choose(rng).unwrap(), rng.gen_range(-4..=4))
    };
    let nc = rng.gen_range(0..=5);
    let constraints = (0..nc)
        .map(|_| match rng.gen_range(0..6) {
            0 | 1 => ConstraintSpec::Linear(linear(rng)),
            2 => ConstraintSpec::MulEq { x: var(rng), y: var(rng), z: var(rng) },
            3 => ConstraintSpec::ReifLinear { b: bvar(rng), inner: linear(rng) },
            4 => {
                let (p, q) = (rng.gen_range(0..=2), rng.gen_range(0..=2));
                ConstraintSpec::BoolClause {
                    pos: (0..p).map(|_| bvar(rng)).collect(),
                    neg: (0..q).map(|_| bvar(rng)).collect(),
                }
            }
            _ => ConstraintSpec::EqVar { x: var(rng), y: var(rng) },
        })
        .collect();
    RandomStore { domains, constraints }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, serialize_model, validate};

    #[test]
    fn generated_models_are_valid_and_canonical() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..300 {
            let m = random_model(&mut rng, &SmallBounds::default());
            assert_eq!(validate(&m), vec![], "{m}");
            assert_eq!(parse_model(&serialize_model(&m)).unwrap(), m, "{m}");
            let m = random_expr_model(&mut rng);
            assert_eq!(validate(&m), vec![], "{m}");
        }
    }

    #[test]
    fn large_model_shape() {
        let m = large_model(1);
        assert_eq!(m.features.len(), 50);
        assert_eq!(m.attributes.len(), 10);
        assert!(m.attributes.iter().all(|a| a.hi - a.lo < 20));
        assert_eq!(validate(&m), vec![]);
    }
}
