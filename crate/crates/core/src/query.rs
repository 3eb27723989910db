//! Boolean query templates and their canonical text syntax.
//!
//! Exactly seven query shapes are representable:
//!
//! | template        | text form        |
//! |-----------------|------------------|
//! | `Atom`          | `a`              |
//! | `Or2`           | `a or b`         |
//! | `And2`          | `a and b`        |
//! | `Not2`          | `a not b`        |
//! | `Or3`           | `a or b or c`    |
//! | `And3`          | `a and b and c`  |
//! | `AndNot3`       | `a and b not c`  |
//!
//! Connectives are standalone words matched case-insensitively. `not` always
//! negates the final atom only.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CONNECTIVES: [&str; 3] = ["and", "or", "not"];
const FOREIGN_CONNECTIVES: [&str; 7] = ["xor", "nor", "&", "&&", "|", "||", "!"];

/// A constraint phrase such as `films set in vietnam`.
///
/// Stored lowercased with single spaces between words.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Atom(String);

impl Atom {
    pub fn new(text: &str) -> Result<Self> {
        let norm = normalize_phrase(text);
        if norm.is_empty() {
            return Err(Error::EmptyAtom(text.to_string()));
        }
        if norm.split(' ').any(|w| CONNECTIVES.contains(&w)) {
            return Err(Error::InvalidAtom(text.to_string()));
        }
        Ok(Atom(norm))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Atom {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Atom::new(&s)
    }
}

impl From<Atom> for String {
    fn from(a: Atom) -> String {
        a.0
    }
}

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn normalize_phrase(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Template {
    Atom,
    Or2,
    And2,
    Not2,
    Or3,
    And3,
    AndNot3,
}

impl Template {
    pub const ALL: [Template; 7] = [
        Template::Atom,
        Template::Or2,
        Template::And2,
        Template::Not2,
        Template::Or3,
        Template::And3,
        Template::AndNot3,
    ];

    pub fn arity(self) -> usize {
        match self {
            Template::Atom => 1,
            Template::Or2 | Template::And2 | Template::Not2 => 2,
            Template::Or3 | Template::And3 | Template::AndNot3 => 3,
        }
    }

    /// Row label, e.g. `A and B not C`.
    pub fn label(self) -> &'static str {
        match self {
            Template::Atom => "A",
            Template::Or2 => "A or B",
            Template::And2 => "A and B",
            Template::Not2 => "A not B",
            Template::Or3 => "A or B or C",
            Template::And3 => "A and B and C",
            Template::AndNot3 => "A and B not C",
        }
    }

    fn connectives(self) -> &'static [&'static str] {
        match self {
            Template::Atom => &[],
            Template::Or2 => &["or"],
            Template::And2 => &["and"],
            Template::Not2 => &["not"],
            Template::Or3 => &["or", "or"],
            Template::And3 => &["and", "and"],
            Template::AndNot3 => &["and", "not"],
        }
    }

    fn from_connectives(conns: &[&str]) -> Option<Template> {
        Template::ALL.into_iter().find(|t| t.connectives() == conns)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Template {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Template::ALL
            .into_iter()
            .find(|t| t.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown template {s:?}")))
    }
}

impl TryFrom<String> for Template {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Template> for String {
    fn from(t: Template) -> String {
        t.label().to_string()
    }
}

/// A parsed query: one of the seven templates with its ordered atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BooleanQuery {
    template: Template,
    terms: Vec<Atom>,
}

impl BooleanQuery {
    pub fn new(template: Template, terms: Vec<Atom>) -> Result<Self> {
        if terms.len() != template.arity() {
            return Err(Error::InvalidConfig(format!(
                "template {template} takes {} atoms, got {}",
                template.arity(),
                terms.len()
            )));
        }
        Ok(BooleanQuery { template, terms })
    }

    pub fn atom(a: Atom) -> Self {
        BooleanQuery { template: Template::Atom, terms: vec![a] }
    }

    pub fn template(&self) -> Template {
        self.template
    }

    pub fn terms(&self) -> &[Atom] {
        &self.terms
    }

    /// Canonical lowercase rendering with single-space connectives.
    pub fn render(&self) -> String {
        let mut out = self.terms[0].as_str().to_string();
        for (conn, term) in self.template.connectives().iter().zip(&self.terms[1..]) {
            out.push(' ');
            out.push_str(conn);
            out.push(' ');
            out.push_str(term.as_str());
        }
        out
    }

    /// Evaluates the query as a predicate over a set of attributes.
    pub fn matches(&self, has: impl Fn(&Atom) -> bool) -> bool {
        let t = &self.terms;
        match self.template {
            Template::Atom => has(&t[0]),
            Template::Or2 => has(&t[0]) || has(&t[1]),
            Template::And2 => has(&t[0]) && has(&t[1]),
            Template::Not2 => has(&t[0]) && !has(&t[1]),
            Template::Or3 => has(&t[0]) || has(&t[1]) || has(&t[2]),
            Template::And3 => has(&t[0]) && has(&t[1]) && has(&t[2]),
            Template::AndNot3 => has(&t[0]) && has(&t[1]) && !has(&t[2]),
        }
    }
}

impl fmt::Display for BooleanQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for BooleanQuery {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_query(s)
    }
}

pub fn parse_query(text: &str) -> Result<BooleanQuery> {
    if text.trim().is_empty() {
        return Err(Error::EmptyQuery);
    }
    let mut atoms: Vec<Vec<&str>> = vec![Vec::new()];
    let mut conns: Vec<&'static str> = Vec::new();
    for word in text.split_whitespace() {
        let lower = word.to_lowercase();
        if let Some(c) = CONNECTIVES.iter().find(|c| **c == lower) {
            conns.push(c);
            atoms.push(Vec::new());
        } else if FOREIGN_CONNECTIVES.contains(&lower.as_str()) {
            return Err(Error::UnknownConnective {
                text: text.to_string(),
                connective: word.to_string(),
            });
        } else {
            atoms.last_mut().expect("non-empty").push(word);
        }
    }
    if atoms.iter().any(Vec::is_empty) {
        return Err(Error::EmptyAtom(text.to_string()));
    }
    let template =
        Template::from_connectives(&conns).ok_or_else(|| Error::MixedTemplate(text.to_string()))?;
    let terms = atoms
        .iter()
        .map(|words| Atom::new(&words.join(" ")))
        .collect::<Result<Vec<_>>>()?;
    BooleanQuery::new(template, terms)
}

pub fn render_query(q: &BooleanQuery) -> String {
    q.render()
}

pub fn template_of(q: &BooleanQuery) -> Template {
    q.template()
}
