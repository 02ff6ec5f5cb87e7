//! Lexer and recursive-descent parser for the `.fm` text format.
//!
//! ```text
//! model          := item*
//! item           := featureDecl | attrDecl | constraintDecl
//! featureDecl    := "feature" NAME "{" childRel* "}"
//! childRel       := ("mandatory" | "optional") NAME
//!                 | ("or" | "xor") "{" NAME ("," NAME)+ "}"
//! attrDecl       := "attribute" NAME "." NAME ":" "int" "[" INT ".." INT "]"
//! constraintDecl := "constraint" expr
//! ```
//!
//! Expression precedence, loosest first: `<=>`, `=>` (right associative),
//! `||`, `&&`, `!`, comparisons (non-associative), `+ -`, `*`, unary `-`.
//! A `-` directly followed by an integer literal is folded into a negative
//! literal.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::{
    is_valid_name, Attribute, AttributeId, ChildRelation, Expr, ExprType, Feature, FeatureId, FeatureModel, GroupKind,
    MAX_ATTRIBUTE_DOMAIN, MAX_EXPR_DEPTH,
};
use crate::solver::CmpOp;

const KEYWORDS: &[&str] = &[
    "feature",
    "mandatory",
    "optional",
    "or",
    "xor",
    "attribute",
    "constraint",
    "int",
    "true",
    "false",
];

/// Recursion guard for the parser itself, independent of tree depth.
const MAX_NESTING: usize = 4 * MAX_EXPR_DEPTH;

pub(crate) fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    DuplicateName,
    UnknownReference,
    TypeError,
    NotATree,
    InvalidDomain,
    TooDeep,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
struct Pos {
    line: usize,
    column: usize,
}

fn err(pos: Pos, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
    ParseError { line: pos.line, column: pos.column, kind, message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u128),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    DotDot,
    Colon,
    AndAnd,
    OrOr,
    Bang,
    Implies,
    Iff,
    Cmp(CmpOp),
    Plus,
    Minus,
    Star,
    Eof,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(i) => format!("`{i}`"),
        Tok::Eof => "end of input".into(),
        other => format!("{other:?}"),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        let peek = chars.get(i + 1).copied();
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && peek == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            out.push((Tok::Ident(word), pos));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            col += i - start;
            let v = digits
                .parse::<u128>()
                .map_err(|_| err(pos, ParseErrorKind::Syntax, "integer literal out of range"))?;
            out.push((Tok::Int(v), pos));
            continue;
        }
        let three: String = chars[i..chars.len().min(i + 3)].iter().collect();
        let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let (tok, len) = if three == "<=>" {
            (Tok::Iff, 3)
        } else {
            match two.as_str() {
                "&&" => (Tok::AndAnd, 2),
                "||" => (Tok::OrOr, 2),
                "=>" => (Tok::Implies, 2),
                "!=" => (Tok::Cmp(CmpOp::Ne), 2),
                "<=" => (Tok::Cmp(CmpOp::Le), 2),
                ">=" => (Tok::Cmp(CmpOp::Ge), 2),
                ".." => (Tok::DotDot, 2),
                _ => match c {
                    '{' => (Tok::LBrace, 1),
                    '}' => (Tok::RBrace, 1),
                    '(' => (Tok::LParen, 1),
                    ')' => (Tok::RParen, 1),
                    '[' => (Tok::LBracket, 1),
                    ']' => (Tok::RBracket, 1),
                    ',' => (Tok::Comma, 1),
                    '.' => (Tok::Dot, 1),
                    ':' => (Tok::Colon, 1),
                    '!' => (Tok::Bang, 1),
                    '=' => (Tok::Cmp(CmpOp::Eq), 1),
                    '<' => (Tok::Cmp(CmpOp::Lt), 1),
                    '>' => (Tok::Cmp(CmpOp::Gt), 1),
                    '+' => (Tok::Plus, 1),
                    '-' => (Tok::Minus, 1),
                    '*' => (Tok::Star, 1),
                    other => return Err(err(pos, ParseErrorKind::Syntax, format!("unexpected character `{other}`"))),
                },
            }
        };
        out.push((tok, pos));
        i += len;
        col += len;
    }
    out.push((Tok::Eof, Pos { line, column: col }));
    Ok(out)
}

#[derive(Clone, Debug)]
struct Name {
    text: String,
    pos: Pos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RelKind {
    Mandatory,
    Optional,
    Group(GroupKind),
}

struct FeatureBlock {
    name: Name,
    rels: Vec<(RelKind, Vec<Name>)>,
}

struct AttrDecl {
    owner: Name,
    name: Name,
    lo: i64,
    hi: i64,
    pos: Pos,
}

#[derive(Clone, Copy, Debug)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Cmp(CmpOp),
    And,
    Or,
    Implies,
    Iff,
}

enum RawNode {
    Int(i64),
    Bool(bool),
    Name(String),
    Qualified(String, String),
    Neg(Box<RawExpr>),
    Not(Box<RawExpr>),
    Bin(BinOp, Box<RawExpr>, Box<RawExpr>),
}

struct RawExpr {
    pos: Pos,
    node: RawNode,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    nesting: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, ParseError> {
        Err(err(
            self.pos(),
            ParseErrorKind::Syntax,
            format!("expected {wanted}, found {}", describe(self.peek())),
        ))
    }

    fn expect(&mut self, t: Tok, wanted: &str) -> Result<Pos, ParseError> {
        if *self.peek() == t {
            Ok(self.bump().1)
        } else {
            self.unexpected(wanted)
        }
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn name(&mut self) -> Result<Name, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                let pos = self.bump().1;
                Ok(Name { text: s, pos })
            }
            _ => self.unexpected("a name"),
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        let negative = *self.peek() == Tok::Minus;
        if negative {
            self.bump();
        }
        match *self.peek() {
            Tok::Int(v) => {
                let pos = self.bump().1;
                signed(v, negative).ok_or_else(|| err(pos, ParseErrorKind::Syntax, "integer literal out of range"))
            }
            _ => self.unexpected("an integer"),
        }
    }

    fn feature_block(&mut self) -> Result<FeatureBlock, ParseError> {
        self.bump();
        let name = self.name()?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut rels = Vec::new();
        loop {
            if *self.peek() == Tok::RBrace {
                self.bump();
                break;
            }
            let kind = match self.peek() {
                Tok::Ident(s) if s == "mandatory" => RelKind::Mandatory,
                Tok::Ident(s) if s == "optional" => RelKind::Optional,
                Tok::Ident(s) if s == "or" => RelKind::Group(GroupKind::Or),
                Tok::Ident(s) if s == "xor" => RelKind::Group(GroupKind::Xor),
                _ => return self.unexpected("`mandatory`, `optional`, `or`, `xor` or `}`"),
            };
            self.bump();
            match kind {
                RelKind::Group(_) => {
                    self.expect(Tok::LBrace, "`{`")?;
                    let mut names = vec![self.name()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        names.push(self.name()?);
                    }
                    if names.len() < 2 {
                        return self.unexpected("`,` (a group needs at least two members)");
                    }
                    self.expect(Tok::RBrace, "`}`")?;
                    rels.push((kind, names));
                }
                _ => rels.push((kind, vec![self.name()?])),
            }
        }
        Ok(FeatureBlock { name, rels })
    }

    fn attr_decl(&mut self) -> Result<AttrDecl, ParseError> {
        let pos = self.bump().1;
        let owner = self.name()?;
        self.expect(Tok::Dot, "`.`")?;
        let name = self.name()?;
        self.expect(Tok::Colon, "`:`")?;
        if !self.keyword("int") {
            return self.unexpected("`int`");
        }
        self.bump();
        self.expect(Tok::LBracket, "`[`")?;
        let lo = self.int()?;
        self.expect(Tok::DotDot, "`..`")?;
        let hi = self.int()?;
        self.expect(Tok::RBracket, "`]`")?;
        Ok(AttrDecl { owner, name, lo, hi, pos })
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(err(self.pos(), ParseErrorKind::TooDeep, "expression nested too deeply"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<RawExpr, ParseError> {
        self.enter()?;
        let mut lhs = self.implies()?;
        while *self.peek() == Tok::Iff {
            self.bump();
            let rhs = self.implies()?;
            lhs = bin(BinOp::Iff, lhs, rhs);
        }
        self.nesting -= 1;
        Ok(lhs)
    }

    fn implies(&mut self) -> Result<RawExpr, ParseError> {
        self.enter()?;
        let lhs = self.or()?;
        let out = if *self.peek() == Tok::Implies {
            self.bump();
            let rhs = self.implies()?;
            bin(BinOp::Implies, lhs, rhs)
        } else {
            lhs
        };
        self.nesting -= 1;
        Ok(out)
    }

    fn or(&mut self) -> Result<RawExpr, ParseError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::OrOr {
            self.bump();
            let rhs = self.and()?;
            lhs = bin(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<RawExpr, ParseError> {
        let mut lhs = self.not()?;
        while *self.peek() == Tok::AndAnd {
            self.bump();
            let rhs = self.not()?;
            lhs = bin(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<RawExpr, ParseError> {
        if *self.peek() == Tok::Bang {
            self.enter()?;
            let pos = self.bump().1;
            let inner = self.not()?;
            self.nesting -= 1;
            return Ok(RawExpr { pos, node: RawNode::Not(Box::new(inner)) });
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<RawExpr, ParseError> {
        let lhs = self.sum()?;
        if let Tok::Cmp(op) = *self.peek() {
            self.bump();
            let rhs = self.sum()?;
            if matches!(self.peek(), Tok::Cmp(_)) {
                return self.unexpected("end of comparison (comparisons do not chain)");
            }
            return Ok(bin(BinOp::Cmp(op), lhs, rhs));
        }
        Ok(lhs)
    }

    fn sum(&mut self) -> Result<RawExpr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = bin(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> Result<RawExpr, ParseError> {
        let mut lhs = self.neg()?;
        while *self.peek() == Tok::Star {
            self.bump();
            let rhs = self.neg()?;
            lhs = bin(BinOp::Mul, lhs, rhs);
        }
        Ok(lhs)
    }

    fn neg(&mut self) -> Result<RawExpr, ParseError> {
        if *self.peek() != Tok::Minus {
            return self.atom();
        }
        let pos = self.bump().1;
        if let Tok::Int(v) = *self.peek() {
            let lit_pos = self.bump().1;
            let v = signed(v, true).ok_or_else(|| err(lit_pos, ParseErrorKind::Syntax, "integer literal out of range"))?;
            return Ok(RawExpr { pos, node: RawNode::Int(v) });
        }
        self.enter()?;
        let inner = self.neg()?;
        self.nesting -= 1;
        Ok(RawExpr { pos, node: RawNode::Neg(Box::new(inner)) })
    }

    fn atom(&mut self) -> Result<RawExpr, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                let v = signed(v, false).ok_or_else(|| err(pos, ParseErrorKind::Syntax, "integer literal out of range"))?;
                Ok(RawExpr { pos, node: RawNode::Int(v) })
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(RawExpr { pos, node: RawNode::Bool(s == "true") })
            }
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                if *self.peek() == Tok::Dot {
                    self.bump();
                    let attr = self.name()?;
                    return Ok(RawExpr { pos, node: RawNode::Qualified(s, attr.text) });
                }
                Ok(RawExpr { pos, node: RawNode::Name(s) })
            }
            _ => self.unexpected("an expression"),
        }
    }
}

fn signed(v: u128, negative: bool) -> Option<i64> {
    let v = if negative { -(v as i128) } else { v as i128 };
    if v > i64::MAX as i128 || v < i64::MIN as i128 || (negative && v > 0) {
        None
    } else {
        Some(v as i64)
    }
}

fn bin(op: BinOp, lhs: RawExpr, rhs: RawExpr) -> RawExpr {
    RawExpr { pos: lhs.pos, node: RawNode::Bin(op, Box::new(lhs), Box::new(rhs)) }
}

/// Parses a `.fm` model. The result satisfies every model invariant.
pub fn parse_model(text: &str) -> Result<FeatureModel, ParseError> {
    let mut p = Parser { toks: lex(text)?, at: 0, nesting: 0 };
    let mut blocks = Vec::new();
    let mut attrs = Vec::new();
    let mut constraints = Vec::new();
    loop {
        match p.peek() {
            Tok::Eof => break,
            Tok::Ident(s) if s == "feature" => blocks.push(p.feature_block()?),
            Tok::Ident(s) if s == "attribute" => attrs.push(p.attr_decl()?),
            Tok::Ident(s) if s == "constraint" => {
                p.bump();
                constraints.push(p.expr()?);
            }
            _ => return p.unexpected("`feature`, `attribute` or `constraint`"),
        }
    }
    build(blocks, attrs, constraints, p.pos())
}

fn build(
    blocks: Vec<FeatureBlock>,
    attrs: Vec<AttrDecl>,
    constraints: Vec<RawExpr>,
    eof: Pos,
) -> Result<FeatureModel, ParseError> {
    let Some(root_block) = blocks.first() else {
        return Err(err(eof, ParseErrorKind::Syntax, "a model must declare at least one feature"));
    };
    let root_name = root_block.name.text.clone();

    // Every feature other than the root is declared by its single mention as a child.
    let mut declared: HashSet<String> = HashSet::from([root_name.clone()]);
    for b in &blocks {
        for (_, names) in &b.rels {
            for n in names {
                if !declared.insert(n.text.clone()) {
                    return Err(err(n.pos, ParseErrorKind::DuplicateName, format!("feature `{}` is declared more than once", n.text)));
                }
            }
        }
    }
    let mut block_of: HashMap<&str, &FeatureBlock> = HashMap::new();
    for b in &blocks {
        if !declared.contains(&b.name.text) {
            return Err(err(
                b.name.pos,
                ParseErrorKind::NotATree,
                format!("feature `{}` is neither the root nor a child of another feature", b.name.text),
            ));
        }
        if block_of.insert(b.name.text.as_str(), b).is_some() {
            return Err(err(b.name.pos, ParseErrorKind::DuplicateName, format!("feature `{}` has more than one block", b.name.text)));
        }
    }

    // Pre-order id assignment from the root.
    let mut ids: HashMap<String, FeatureId> = HashMap::new();
    let mut order: Vec<(String, Option<FeatureId>)> = Vec::new();
    let mut stack: Vec<(String, Option<FeatureId>)> = vec![(root_name.clone(), None)];
    while let Some((name, parent)) = stack.pop() {
        let id = FeatureId(order.len() as u32);
        ids.insert(name.clone(), id);
        order.push((name.clone(), parent));
        if let Some(b) = block_of.get(name.as_str()) {
            let kids: Vec<String> = b.rels.iter().flat_map(|(_, ns)| ns.iter().map(|n| n.text.clone())).collect();
            stack.extend(kids.into_iter().rev().map(|k| (k, Some(id))));
        }
    }
    if let Some(b) = blocks.iter().find(|b| !ids.contains_key(&b.name.text)) {
        return Err(err(b.name.pos, ParseErrorKind::NotATree, format!("feature `{}` is not reachable from the root `{root_name}`", b.name.text)));
    }

    let features: Vec<Feature> = order
        .iter()
        .map(|(name, parent)| {
            let children = block_of
                .get(name.as_str())
                .map(|b| {
                    b.rels
                        .iter()
                        .map(|(kind, names)| {
                            let members: Vec<FeatureId> = names.iter().map(|n| ids[&n.text]).collect();
                            match kind {
                                RelKind::Mandatory => ChildRelation::Mandatory(members[0]),
                                RelKind::Optional => ChildRelation::Optional(members[0]),
                                RelKind::Group(kind) => ChildRelation::Group { kind: *kind, members },
                            }
                        })
                        .collect()
                })
                .unwrap_or_default();
            Feature { id: ids[name], name: name.clone(), parent: *parent, children }
        })
        .collect();

    let mut attributes: Vec<Attribute> = Vec::new();
    for a in attrs {
        let owner = *ids.get(&a.owner.text).ok_or_else(|| {
            err(a.owner.pos, ParseErrorKind::UnknownReference, format!("unknown feature `{}`", a.owner.text))
        })?;
        if attributes.iter().any(|x| x.owner == owner && x.name == a.name.text) {
            return Err(err(
                a.name.pos,
                ParseErrorKind::DuplicateName,
                format!("attribute `{}.{}` is declared more than once", a.owner.text, a.name.text),
            ));
        }
        if a.lo > a.hi {
            return Err(err(a.pos, ParseErrorKind::InvalidDomain, format!("empty attribute domain [{}..{}]", a.lo, a.hi)));
        }
        if a.hi as i128 - a.lo as i128 + 1 > MAX_ATTRIBUTE_DOMAIN {
            return Err(err(
                a.pos,
                ParseErrorKind::InvalidDomain,
                format!("attribute domain [{}..{}] exceeds {MAX_ATTRIBUTE_DOMAIN} values", a.lo, a.hi),
            ));
        }
        attributes.push(Attribute { id: AttributeId(attributes.len() as u32), owner, name: a.name.text, lo: a.lo, hi: a.hi });
    }

    let model = FeatureModel { root: FeatureId(0), features, attributes, constraints: Vec::new() };
    let mut resolved = Vec::with_capacity(constraints.len());
    for raw in &constraints {
        let e = resolve(raw, &model)?;
        e.type_check(ExprType::Bool)
            .map_err(|m| err(raw.pos, ParseErrorKind::TypeError, m))?;
        if e.depth() > MAX_EXPR_DEPTH {
            return Err(err(raw.pos, ParseErrorKind::TooDeep, format!("expression deeper than {MAX_EXPR_DEPTH}")));
        }
        resolved.push(e);
    }
    let model = FeatureModel { constraints: resolved, ..model };
    debug_assert!(model.features.iter().all(|f| is_valid_name(&f.name)));
    debug_assert!(super::validate(&model).is_empty(), "{:?}", super::validate(&model));
    Ok(model)
}

fn resolve(raw: &RawExpr, m: &FeatureModel) -> Result<Expr, ParseError> {
    let r = |e: &RawExpr| resolve(e, m).map(Box::new);
    Ok(match &raw.node {
        RawNode::Int(v) => Expr::Int(*v),
        RawNode::Bool(b) => Expr::Bool(*b),
        RawNode::Name(n) => Expr::Feature(
            m.feature_by_name(n)
                .ok_or_else(|| err(raw.pos, ParseErrorKind::UnknownReference, format!("unknown feature `{n}`")))?,
        ),
        RawNode::Qualified(o, a) => Expr::Attr(m.attribute_by_name(o, a).ok_or_else(|| {
            err(raw.pos, ParseErrorKind::UnknownReference, format!("unknown attribute `{o}.{a}`"))
        })?),
        RawNode::Neg(a) => Expr::Neg(r(a)?),
        RawNode::Not(a) => Expr::Not(r(a)?),
        RawNode::Bin(op, a, b) => {
            let (a, b) = (r(a)?, r(b)?);
            match op {
                BinOp::Add => Expr::Add(a, b),
                BinOp::Sub => Expr::Sub(a, b),
                BinOp::Mul => Expr::Mul(a, b),
                BinOp::Cmp(c) => Expr::Cmp(*c, a, b),
                BinOp::And => Expr::And(a, b),
                BinOp::Or => Expr::Or(a, b),
                BinOp::Implies => Expr::Implies(a, b),
                BinOp::Iff => Expr::Iff(a, b),
            }
        }
    })
}
