//! Formula syntax for the doxastic language EL, its update extension DEL⁻ and
//! the union-update language DEL.
//!
//! There is a single core AST. Derived connectives (`|`, `->`, `<->`, `B[i]`,
//! `[U@u]`, `false`) are expanded by the parser and by the smart constructors
//! on [`Formula`], so every downstream algorithm only sees `true`, atoms, `~`,
//! `&`, `P[i]`, `<U@u>` and `<U1@u1 + ... + Uk@uk>`.
//!
//! Concrete grammar, loosest binding first:
//!
//! ```text
//! iff   ::= imp ("<->" imp)*
//! imp   ::= or ("->" imp)?
//! or    ::= and ("|" and)*
//! and   ::= unary ("&" unary)*
//! unary ::= "~" unary | "P[" agent "]" unary | "B[" agent "]" unary
//!         | "<" pframe ("+" pframe)* ">" unary | "[" pframe "]" unary
//!         | "true" | "false" | atom | "(" iff ")"
//! atom  ::= ident | ident "(" agent ("," agent)* ")"
//! pframe ::= ident "@" ident
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("`{0}` is not a valid identifier")]
    Invalid(String),
}

/// An agent name, `[A-Za-z][A-Za-z0-9_]*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AgentName(String);

impl AgentName {
    pub fn new(name: impl Into<String>) -> Result<Self, NameError> {
        let name = name.into();
        if is_identifier(&name) {
            Ok(AgentName(name))
        } else {
            Err(NameError::Invalid(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for AgentName {
    type Error = NameError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        AgentName::new(value)
    }
}

impl From<AgentName> for String {
    fn from(value: AgentName) -> Self {
        value.0
    }
}

impl fmt::Display for AgentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Shorthand used heavily in tests and scenario code. Panics on a bad name.
pub fn agent(name: &str) -> AgentName {
    AgentName::new(name).expect("invalid agent name")
}

/// A ground fluent `p` or `p(i,j,...)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fluent {
    pub predicate: String,
    pub args: Vec<AgentName>,
}

impl Fluent {
    pub fn new(predicate: impl Into<String>, args: Vec<AgentName>) -> Result<Self, NameError> {
        let predicate = predicate.into();
        if !is_identifier(&predicate) || predicate == "true" || predicate == "false" {
            return Err(NameError::Invalid(predicate));
        }
        Ok(Fluent { predicate, args })
    }

    pub fn prop(name: &str) -> Self {
        Fluent::new(name, Vec::new()).expect("invalid fluent name")
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    /// Parses the textual form used as JSON keys, e.g. `"threat(f)"`.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut parser = Parser::new(text)?;
        let fluent = parser.fluent()?;
        parser.expect_end()?;
        Ok(fluent)
    }
}

impl fmt::Display for Fluent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (k, a) in self.args.iter().enumerate() {
                if k > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl Serialize for Fluent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fluent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Fluent::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// A pointed frame reference `U@u`: a frame resolved by name against a frame
/// library, plus one of its events.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PointedFrame {
    pub frame: String,
    pub event: String,
}

impl PointedFrame {
    pub fn new(frame: impl Into<String>, event: impl Into<String>) -> Self {
        PointedFrame { frame: frame.into(), event: event.into() }
    }
}

impl fmt::Display for PointedFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.frame, self.event)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Top,
    Atom(Fluent),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Possible(AgentName, Box<Formula>),
    DiamondUpdate(PointedFrame, Box<Formula>),
    /// Always holds at least two pointed frames; see [`Formula::union`].
    DiamondUnion(Vec<PointedFrame>, Box<Formula>),
}

/// The three languages, ordered by inclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "EL")]
    El,
    #[serde(rename = "DEL-")]
    DelMinus,
    #[serde(rename = "DEL")]
    Del,
}

impl Formula {
    pub fn top() -> Self {
        Formula::Top
    }

    pub fn bot() -> Self {
        Formula::not(Formula::Top)
    }

    pub fn atom(fluent: Fluent) -> Self {
        Formula::Atom(fluent)
    }

    pub fn prop(name: &str) -> Self {
        Formula::Atom(Fluent::prop(name))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(phi: Formula) -> Self {
        Formula::Not(Box::new(phi))
    }

    pub fn and(phi: Formula, psi: Formula) -> Self {
        Formula::And(Box::new(phi), Box::new(psi))
    }

    pub fn or(phi: Formula, psi: Formula) -> Self {
        Formula::not(Formula::and(Formula::not(phi), Formula::not(psi)))
    }

    pub fn implies(phi: Formula, psi: Formula) -> Self {
        Formula::not(Formula::and(phi, Formula::not(psi)))
    }

    pub fn iff(phi: Formula, psi: Formula) -> Self {
        Formula::and(Formula::implies(phi.clone(), psi.clone()), Formula::implies(psi, phi))
    }

    pub fn possible(agent: AgentName, phi: Formula) -> Self {
        Formula::Possible(agent, Box::new(phi))
    }

    pub fn belief(agent: AgentName, phi: Formula) -> Self {
        Formula::not(Formula::possible(agent, Formula::not(phi)))
    }

    pub fn diamond(pointed: PointedFrame, phi: Formula) -> Self {
        Formula::DiamondUpdate(pointed, Box::new(phi))
    }

    pub fn boxed(pointed: PointedFrame, phi: Formula) -> Self {
        Formula::not(Formula::diamond(pointed, Formula::not(phi)))
    }

    /// Union diamond; a single pointed frame collapses to a plain update
    /// diamond. Panics on an empty list.
    pub fn union(pointed: Vec<PointedFrame>, phi: Formula) -> Self {
        assert!(!pointed.is_empty(), "union update needs at least one pointed frame");
        if pointed.len() == 1 {
            let only = pointed.into_iter().next().unwrap();
            Formula::diamond(only, phi)
        } else {
            Formula::DiamondUnion(pointed, Box::new(phi))
        }
    }

    /// Left-nested conjunction; `true` for an empty list.
    pub fn conjunction(parts: impl IntoIterator<Item = Formula>) -> Self {
        parts.into_iter().reduce(Formula::and).unwrap_or(Formula::Top)
    }

    /// Left-nested disjunction; `false` for an empty list.
    pub fn disjunction(parts: impl IntoIterator<Item = Formula>) -> Self {
        parts.into_iter().reduce(Formula::or).unwrap_or_else(Formula::bot)
    }

    pub fn is_bot(&self) -> bool {
        matches!(self, Formula::Not(inner) if **inner == Formula::Top)
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::Top | Formula::Atom(_) => vec![],
            Formula::Not(a) | Formula::Possible(_, a) => vec![a],
            Formula::DiamondUpdate(_, a) | Formula::DiamondUnion(_, a) => vec![a],
            Formula::And(a, b) => vec![a, b],
        }
    }

    pub fn is_update(&self) -> bool {
        matches!(self, Formula::DiamondUpdate(..) | Formula::DiamondUnion(..))
    }

    pub fn language(&self) -> Language {
        match self {
            Formula::Top | Formula::Atom(_) => Language::El,
            Formula::Not(a) | Formula::Possible(_, a) => a.language(),
            Formula::And(a, b) => a.language().max(b.language()),
            Formula::DiamondUpdate(_, a) => a.language().max(Language::DelMinus),
            Formula::DiamondUnion(_, _) => Language::Del,
        }
    }

    pub fn is_el(&self) -> bool {
        self.language() == Language::El
    }

    pub fn is_del_minus(&self) -> bool {
        self.language() <= Language::DelMinus
    }

    /// Every formula of the AST is a DEL formula.
    pub fn is_del(&self) -> bool {
        true
    }

    /// Maximum nesting of belief and update modalities.
    pub fn modal_depth(&self) -> usize {
        match self {
            Formula::Top | Formula::Atom(_) => 0,
            Formula::Not(a) => a.modal_depth(),
            Formula::And(a, b) => a.modal_depth().max(b.modal_depth()),
            Formula::Possible(_, a) | Formula::DiamondUpdate(_, a) | Formula::DiamondUnion(_, a) => {
                1 + a.modal_depth()
            }
        }
    }

    /// Height of the syntax tree (leaves have height 0).
    pub fn height(&self) -> usize {
        self.children().iter().map(|c| c.height() + 1).max().unwrap_or(0)
    }

    /// Parse-tree node count, not including any frame sizes.
    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    pub fn agents(&self) -> BTreeSet<AgentName> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let Formula::Possible(a, _) = f {
                out.insert(a.clone());
            }
            if let Formula::Atom(p) = f {
                out.extend(p.args.iter().cloned());
            }
        });
        out
    }

    pub fn fluents(&self) -> BTreeSet<Fluent> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let Formula::Atom(p) = f {
                out.insert(p.clone());
            }
        });
        out
    }

    pub fn frame_refs(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| match f {
            Formula::DiamondUpdate(pf, _) => {
                out.insert(pf.frame.clone());
            }
            Formula::DiamondUnion(pfs, _) => out.extend(pfs.iter().map(|pf| pf.frame.clone())),
            _ => {}
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Formula)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Subformula at a child-index path.
    pub fn at(&self, path: &[usize]) -> Option<&Formula> {
        let mut cur = self;
        for &k in path {
            cur = *cur.children().get(k)?;
        }
        Some(cur)
    }

    /// Returns a copy with the subformula at `path` replaced.
    pub fn replace_at(&self, path: &[usize], replacement: Formula) -> Option<Formula> {
        let Some((&k, rest)) = path.split_first() else {
            return Some(replacement);
        };
        Some(match (self, k) {
            (Formula::Not(a), 0) => Formula::not(a.replace_at(rest, replacement)?),
            (Formula::Possible(i, a), 0) => Formula::possible(i.clone(), a.replace_at(rest, replacement)?),
            (Formula::DiamondUpdate(pf, a), 0) => Formula::diamond(pf.clone(), a.replace_at(rest, replacement)?),
            (Formula::DiamondUnion(pfs, a), 0) => {
                Formula::DiamondUnion(pfs.clone(), Box::new(a.replace_at(rest, replacement)?))
            }
            (Formula::And(a, b), 0) => Formula::and(a.replace_at(rest, replacement)?, (**b).clone()),
            (Formula::And(a, b), 1) => Formula::and((**a).clone(), b.replace_at(rest, replacement)?),
            _ => return None,
        })
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Top => f.write_str("true"),
            Formula::Atom(p) => write!(f, "{p}"),
            Formula::Not(a) => write!(f, "~{a}"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Possible(i, a) => write!(f, "P[{i}] {a}"),
            Formula::DiamondUpdate(pf, a) => write!(f, "<{pf}> {a}"),
            Formula::DiamondUnion(pfs, a) => {
                f.write_str("<")?;
                for (k, pf) in pfs.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{pf}")?;
                }
                write!(f, "> {a}")
            }
        }
    }
}

/// Prints a formula in the concrete syntax. The output re-parses to the same AST.
pub fn print_formula(phi: &Formula) -> String {
    phi.to_string()
}

/// Fluent-arity table for one problem instance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    arities: BTreeMap<String, usize>,
}

impl Signature {
    pub fn new() -> Self {
        Signature::default()
    }

    pub fn is_empty(&self) -> bool {
        self.arities.is_empty()
    }

    pub fn arity(&self, predicate: &str) -> Option<usize> {
        self.arities.get(predicate).copied()
    }

    /// Records the fluent's arity, failing if the predicate is already known
    /// with a different one.
    pub fn declare(&mut self, fluent: &Fluent) -> Result<(), ArityMismatch> {
        match self.arities.get(&fluent.predicate) {
            Some(&n) if n != fluent.arity() => Err(ArityMismatch {
                predicate: fluent.predicate.clone(),
                expected: n,
                found: fluent.arity(),
            }),
            Some(_) => Ok(()),
            None => {
                self.arities.insert(fluent.predicate.clone(), fluent.arity());
                Ok(())
            }
        }
    }

    pub fn declare_all<'a>(&mut self, fluents: impl IntoIterator<Item = &'a Fluent>) -> Result<(), ArityMismatch> {
        fluents.into_iter().try_for_each(|f| self.declare(f))
    }

    pub fn check(&self, fluent: &Fluent) -> Result<(), ArityMismatch> {
        match self.arities.get(&fluent.predicate) {
            Some(&n) if n != fluent.arity() => Err(ArityMismatch {
                predicate: fluent.predicate.clone(),
                expected: n,
                found: fluent.arity(),
            }),
            _ => Ok(()),
        }
    }

    pub fn predicates(&self) -> impl Iterator<Item = (&str, usize)> {
        self.arities.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("predicate `{predicate}` has arity {expected}, used with {found} argument(s)")]
pub struct ArityMismatch {
    pub predicate: String,
    pub expected: usize,
    pub found: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("at offset {position}: {source}")]
    Arity {
        position: usize,
        #[source]
        source: ArityMismatch,
    },
}

/// Parses the concrete syntax into a normalized formula. Declared predicates
/// must be used with their declared arity; undeclared predicates must be used
/// consistently within the text.
pub fn parse_formula(text: &str, signature: &Signature) -> Result<Formula, ParseError> {
    let mut parser = Parser::new(text)?;
    parser.signature = signature.clone();
    let phi = parser.iff()?;
    parser.expect_end()?;
    Ok(phi)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Lt,
    Gt,
    Comma,
    At,
    Plus,
    Tilde,
    Amp,
    Bar,
    Arrow,
    DoubleArrow,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "`{s}`"),
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Comma => ",",
            Tok::At => "@",
            Tok::Plus => "+",
            Tok::Tilde => "~",
            Tok::Amp => "&",
            Tok::Bar => "|",
            Tok::Arrow => "->",
            Tok::DoubleArrow => "<->",
        };
        write!(f, "`{s}`")
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut k = 0;
    while k < bytes.len() {
        let c = bytes[k];
        let start = k;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                k += 1;
                continue;
            }
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'[' => Tok::LBracket,
            b']' => Tok::RBracket,
            b',' => Tok::Comma,
            b'@' => Tok::At,
            b'+' => Tok::Plus,
            b'~' => Tok::Tilde,
            b'&' => Tok::Amp,
            b'|' => Tok::Bar,
            b'>' => Tok::Gt,
            b'-' if bytes.get(k + 1) == Some(&b'>') => {
                k += 1;
                Tok::Arrow
            }
            b'<' if bytes[k..].starts_with(b"<->") => {
                k += 2;
                Tok::DoubleArrow
            }
            b'<' => Tok::Lt,
            c if c.is_ascii_alphabetic() => {
                while k + 1 < bytes.len() && (bytes[k + 1].is_ascii_alphanumeric() || bytes[k + 1] == b'_') {
                    k += 1;
                }
                Tok::Ident(text[start..=k].to_string())
            }
            _ => {
                return Err(ParseError::Syntax {
                    position: start,
                    message: format!("unexpected character `{}`", text[start..].chars().next().unwrap()),
                })
            }
        };
        out.push((start, tok));
        k += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
    signature: Signature,
}

impl Parser {
    fn new(text: &str) -> Result<Self, ParseError> {
        Ok(Parser { toks: tokenize(text)?, pos: 0, len: text.len(), signature: Signature::new() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.len)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { position: self.offset(), message: message.into() })
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, ParseError> {
        match self.peek() {
            Some(t) => self.error(format!("expected {wanted}, found {t}")),
            None => self.error(format!("expected {wanted}, found end of input")),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.unexpected(&tok.to_string())
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            self.unexpected("end of input")
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.unexpected(what),
        }
    }

    fn agent(&mut self) -> Result<AgentName, ParseError> {
        let name = self.ident("an agent name")?;
        Ok(AgentName(name))
    }

    fn pointed_frame(&mut self) -> Result<PointedFrame, ParseError> {
        let frame = self.ident("a frame name")?;
        self.expect(Tok::At)?;
        let event = self.ident("an event name")?;
        Ok(PointedFrame { frame, event })
    }

    fn fluent(&mut self) -> Result<Fluent, ParseError> {
        let at = self.offset();
        let predicate = self.ident("a fluent")?;
        if predicate == "true" || predicate == "false" {
            return Err(ParseError::Syntax { position: at, message: format!("`{predicate}` is not a fluent") });
        }
        let mut args = Vec::new();
        if self.eat(&Tok::LParen) {
            loop {
                args.push(self.agent()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        let fluent = Fluent { predicate, args };
        self.signature.declare(&fluent).map_err(|source| ParseError::Arity { position: at, source })?;
        Ok(fluent)
    }

    fn iff(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.imp()?;
        while self.eat(&Tok::DoubleArrow) {
            let rhs = self.imp()?;
            lhs = Formula::iff(lhs, rhs);
        }
        Ok(lhs)
    }

    fn imp(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or()?;
        if self.eat(&Tok::Arrow) {
            let rhs = self.imp()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and()?;
        while self.eat(&Tok::Bar) {
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while self.eat(&Tok::Amp) {
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn modality_prefix(&self) -> Option<char> {
        match (self.toks.get(self.pos), self.toks.get(self.pos + 1)) {
            (Some((_, Tok::Ident(s))), Some((_, Tok::LBracket))) if s == "P" || s == "B" => s.chars().next(),
            _ => None,
        }
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if let Some(kind) = self.modality_prefix() {
            self.pos += 2;
            let a = self.agent()?;
            self.expect(Tok::RBracket)?;
            let body = self.unary()?;
            return Ok(if kind == 'P' { Formula::possible(a, body) } else { Formula::belief(a, body) });
        }
        match self.peek() {
            Some(Tok::Tilde) => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::Lt) => {
                self.pos += 1;
                let mut pfs = vec![self.pointed_frame()?];
                while self.eat(&Tok::Plus) {
                    pfs.push(self.pointed_frame()?);
                }
                self.expect(Tok::Gt)?;
                let body = self.unary()?;
                Ok(Formula::union(pfs, body))
            }
            Some(Tok::LBracket) => {
                self.pos += 1;
                let pf = self.pointed_frame()?;
                self.expect(Tok::RBracket)?;
                let body = self.unary()?;
                Ok(Formula::boxed(pf, body))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.iff()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Some(Tok::Ident(s)) if s == "true" => {
                self.pos += 1;
                Ok(Formula::Top)
            }
            Some(Tok::Ident(s)) if s == "false" => {
                self.pos += 1;
                Ok(Formula::bot())
            }
            Some(Tok::Ident(_)) => Ok(Formula::Atom(self.fluent()?)),
            _ => self.unexpected("a formula"),
        }
    }
}

/// Frame sizes as charged by [`formula_length`].
pub trait FrameSizes {
    fn frame_size(&self, name: &str) -> Option<usize>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unresolved frame `{0}`")]
pub struct UnresolvedFrame(pub String);

/// Parse-tree node count plus the size of the referenced frame for every
/// update occurrence.
pub fn formula_length(phi: &Formula, frames: &impl FrameSizes) -> Result<usize, UnresolvedFrame> {
    let size = |name: &str| frames.frame_size(name).ok_or_else(|| UnresolvedFrame(name.to_string()));
    let own = match phi {
        Formula::DiamondUpdate(pf, _) => size(&pf.frame)?,
        Formula::DiamondUnion(pfs, _) => pfs.iter().map(|pf| size(&pf.frame)).sum::<Result<usize, _>>()?,
        _ => 0,
    };
    let mut total = 1 + own;
    for c in phi.children() {
        total += formula_length(c, frames)?;
    }
    Ok(total)
}

pub fn modal_depth(phi: &Formula) -> usize {
    phi.modal_depth()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Formula {
        parse_formula(text, &Signature::new()).unwrap()
    }

    fn p(name: &str) -> Formula {
        Formula::prop(name)
    }

    #[test]
    fn negated_possibility() {
        assert_eq!(parse("~P[g] true"), Formula::not(Formula::possible(agent("g"), Formula::Top)));
    }

    #[test]
    fn nested_belief_expands_to_core() {
        use Formula::*;
        let expected = Not(Box::new(Possible(
            agent("m"),
            Box::new(Not(Box::new(Not(Box::new(Possible(
                agent("f"),
                Box::new(Not(Box::new(Possible(agent("g"), Box::new(Top))))),
            )))))),
        )));
        assert_eq!(parse("B[m] B[f] P[g] true"), expected);
    }

    #[test]
    fn union_update() {
        let phi = parse("<U1@u1 + U2@u2> p(f)");
        let fluent = Fluent::new("p", vec![agent("f")]).unwrap();
        assert_eq!(
            phi,
            Formula::DiamondUnion(
                vec![PointedFrame::new("U1", "u1"), PointedFrame::new("U2", "u2")],
                Box::new(Formula::Atom(fluent))
            )
        );
        assert_eq!(phi.language(), Language::Del);
    }

    #[test]
    fn singleton_union_is_plain_update() {
        assert_eq!(parse("<U@u> p"), Formula::diamond(PointedFrame::new("U", "u"), p("p")));
        assert_eq!(Formula::union(vec![PointedFrame::new("U", "u")], p("p")), parse("<U@u> p"));
    }

    #[test]
    fn printing() {
        assert_eq!(Formula::Top.to_string(), "true");
        assert_eq!(Formula::possible(agent("i"), p("p")).to_string(), "P[i] p");
        assert_eq!(Formula::and(Formula::Top, Formula::Top).to_string(), "(true & true)");
        assert_eq!(parse("[U@u] q(a,b)").to_string(), "~<U@u> ~q(a,b)");
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse("p & q | r"), Formula::or(Formula::and(p("p"), p("q")), p("r")));
        assert_eq!(parse("p -> q -> r"), Formula::implies(p("p"), Formula::implies(p("q"), p("r"))));
        assert_eq!(parse("~p & q"), Formula::and(Formula::not(p("p")), p("q")));
        assert_eq!(parse("P[i] p & q"), Formula::and(Formula::possible(agent("i"), p("p")), p("q")));
        assert_eq!(parse("p <-> q"), Formula::iff(p("p"), p("q")));
        assert_eq!(parse("false"), Formula::bot());
        assert_eq!(parse("(p | q)"), parse("p | q"));
    }

    #[test]
    fn atoms_named_like_modalities() {
        assert_eq!(parse("P & B"), Formula::and(p("P"), p("B")));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_formula("(p & ", &Signature::new()).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { position: 5, .. }), "{err}");
        let err = parse_formula("p $ q", &Signature::new()).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { position: 2, .. }));
        assert!(parse_formula("<U> p", &Signature::new()).is_err());
        assert!(parse_formula("P[i p", &Signature::new()).is_err());
        assert!(parse_formula("p q", &Signature::new()).is_err());
        assert!(parse_formula("", &Signature::new()).is_err());
    }

    #[test]
    fn arity_is_checked() {
        let mut sig = Signature::new();
        sig.declare(&Fluent::new("p", vec![agent("a")]).unwrap()).unwrap();
        assert!(parse_formula("p(b)", &sig).is_ok());
        let err = parse_formula("p(a,b)", &sig).unwrap_err();
        assert!(matches!(err, ParseError::Arity { .. }));
        // consistency within one formula even without a declaration
        assert!(parse_formula("q & q(a)", &Signature::new()).is_err());
    }

    #[test]
    fn fluent_text_round_trip() {
        let f = Fluent::parse("p(f,o,g)").unwrap();
        assert_eq!(f.arity(), 3);
        assert_eq!(f.to_string(), "p(f,o,g)");
        assert!(Fluent::parse("true").is_err());
        assert!(Fluent::parse("p(").is_err());
    }

    #[test]
    fn depth_and_classification() {
        assert_eq!(p("p").modal_depth(), 0);
        assert_eq!(parse("P[i] P[j] true").modal_depth(), 2);
        assert_eq!(parse("<U@u> P[i] true").modal_depth(), 2);
        assert!(parse("P[i] ~p").is_el());
        assert!(!parse("<U@u> p").is_el());
        assert!(parse("<U@u> p").is_del_minus());
        assert!(!parse("<U@u + V@v> p").is_del_minus());
    }

    struct Sizes;
    impl FrameSizes for Sizes {
        fn frame_size(&self, name: &str) -> Option<usize> {
            (name == "U").then_some(7)
        }
    }

    #[test]
    fn length_counts_nodes_and_frames() {
        assert_eq!(formula_length(&Formula::Top, &Sizes), Ok(1));
        assert_eq!(formula_length(&Formula::bot(), &Sizes), Ok(2));
        assert_eq!(formula_length(&parse("<U@u> true"), &Sizes), Ok(2 + 7));
        assert_eq!(formula_length(&parse("<U@u + U@v> true"), &Sizes), Ok(2 + 14));
        assert_eq!(formula_length(&parse("<V@u> true"), &Sizes), Err(UnresolvedFrame("V".into())));
    }

    #[test]
    fn paths() {
        let phi = parse("(p & P[i] q)");
        assert_eq!(phi.at(&[1, 0]), Some(&p("q")));
        let replaced = phi.replace_at(&[1, 0], Formula::Top).unwrap();
        assert_eq!(replaced, parse("(p & P[i] true)"));
        assert!(phi.at(&[2]).is_none());
    }
}
