//! Local syntax check for generated queries.
//!
//! Covers the SPARQL 1.1 query forms the template corpus uses: prologue
//! (`PREFIX`/`BASE`), `SELECT` (with `DISTINCT`, aggregates, `AS`) and `ASK`,
//! group graph patterns with triples, property paths, `OPTIONAL`, `UNION`,
//! `MINUS`, `FILTER`, `BIND`, `VALUES` and sub-selects, plus `GROUP BY`,
//! `HAVING`, `ORDER BY` and `LIMIT`/`OFFSET`. Every prefixed name must use a
//! declared prefix. The check never panics and stops at the first problem.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexer::{tokenize, Spanned, Tok};

const MAX_DEPTH: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxIssue {
    /// Byte offset into the query text.
    pub offset: usize,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for SyntaxIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for SyntaxIssue {}

impl SyntaxIssue {
    fn at(src: &str, offset: usize, message: impl Into<String>) -> Self {
        let offset = offset.min(src.len());
        let before = src.get(..offset).unwrap_or(src);
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        Self {
            offset,
            line,
            column,
            message: message.into(),
        }
    }
}

pub fn validate_sparql(query: &str) -> Result<(), SyntaxIssue> {
    let tokens = tokenize(query).map_err(|e| SyntaxIssue::at(query, e.offset, e.message))?;
    check_balance(&tokens).map_err(|(offset, msg)| SyntaxIssue::at(query, offset, msg))?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        prefixes: HashSet::new(),
        depth: 0,
    };
    parser
        .query()
        .map_err(|(offset, msg)| SyntaxIssue::at(query, offset, msg))
}

fn check_balance(tokens: &[Spanned]) -> Result<(), (usize, String)> {
    let mut stack: Vec<(&Tok, usize)> = Vec::new();
    for t in tokens {
        match &t.tok {
            Tok::LBrace | Tok::LParen | Tok::LBracket => stack.push((&t.tok, t.offset)),
            close @ (Tok::RBrace | Tok::RParen | Tok::RBracket) => {
                let (want, name) = match close {
                    Tok::RBrace => (Tok::LBrace, "brace"),
                    Tok::RParen => (Tok::LParen, "parenthesis"),
                    _ => (Tok::LBracket, "bracket"),
                };
                match stack.pop() {
                    Some((open, _)) if *open == want => {}
                    Some((open, at)) => {
                        return Err((
                            t.offset,
                            format!(
                                "unbalanced {name}: {} does not close {} opened at offset {at}",
                                close.describe(),
                                open.describe()
                            ),
                        ))
                    }
                    None => {
                        return Err((t.offset, format!("unbalanced {name}: unexpected {}", close.describe())))
                    }
                }
            }
            _ => {}
        }
    }
    match stack.pop() {
        Some((open, at)) => {
            let name = match open {
                Tok::LBrace => "brace",
                Tok::LParen => "parenthesis",
                _ => "bracket",
            };
            Err((at, format!("unbalanced {name}: {} is never closed", open.describe())))
        }
        None => Ok(()),
    }
}

type PResult<T = ()> = Result<T, (usize, String)>;

const BUILTINS: &[&str] = &[
    "STR", "LANG", "LANGMATCHES", "DATATYPE", "BOUND", "IRI", "URI", "BNODE", "RAND", "ABS", "CEIL",
    "FLOOR", "ROUND", "CONCAT", "STRLEN", "UCASE", "LCASE", "ENCODE_FOR_URI", "CONTAINS",
    "STRSTARTS", "STRENDS", "STRBEFORE", "STRAFTER", "YEAR", "MONTH", "DAY", "HOURS", "MINUTES",
    "SECONDS", "TIMEZONE", "TZ", "NOW", "UUID", "STRUUID", "MD5", "SHA1", "SHA256", "SHA384",
    "SHA512", "COALESCE", "IF", "STRLANG", "STRDT", "SAMETERM", "ISIRI", "ISURI", "ISBLANK",
    "ISLITERAL", "ISNUMERIC", "REGEX", "SUBSTR", "REPLACE",
];

const AGGREGATES: &[&str] = &["COUNT", "SUM", "MIN", "MAX", "AVG", "SAMPLE", "GROUP_CONCAT"];

struct Parser<'t> {
    tokens: &'t [Spanned],
    pos: usize,
    prefixes: HashSet<String>,
    depth: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos.min(self.tokens.len() - 1)].tok
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        &self.tokens[(self.pos + ahead).min(self.tokens.len() - 1)].tok
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos.min(self.tokens.len() - 1)].offset
    }

    fn bump(&mut self) -> &Tok {
        let t = &self.tokens[self.pos.min(self.tokens.len() - 1)].tok;
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err((self.offset(), msg.into()))
    }

    fn unexpected<T>(&self, expected: &str) -> PResult<T> {
        self.fail(format!("expected {expected}, found {}", self.peek().describe()))
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.unexpected(what)
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek().is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(kw)
        }
    }

    fn enter(&mut self) -> PResult {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            self.fail("query nesting is too deep")
        } else {
            Ok(())
        }
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn query(&mut self) -> PResult {
        self.prologue()?;
        if self.peek().is_kw("SELECT") {
            self.select_query()?;
        } else if self.eat_kw("ASK") {
            while self.eat_kw("FROM") {
                self.eat_kw("NAMED");
                self.iri()?;
            }
            self.eat_kw("WHERE");
            self.group_graph_pattern()?;
            self.solution_modifiers()?;
        } else if self.peek().is_kw("CONSTRUCT") || self.peek().is_kw("DESCRIBE") {
            return self.fail("only SELECT and ASK queries are supported");
        } else {
            return self.unexpected("SELECT or ASK");
        }
        if self.peek().is_kw("VALUES") {
            self.values_clause()?;
        }
        if *self.peek() != Tok::Eof {
            return self.fail(format!("unexpected trailing input {}", self.peek().describe()));
        }
        Ok(())
    }

    fn prologue(&mut self) -> PResult {
        loop {
            if self.eat_kw("PREFIX") {
                match self.bump().clone() {
                    Tok::PName { prefix, local } if local.is_empty() => {
                        if !matches!(self.bump(), Tok::IriRef(_)) {
                            self.pos -= 1;
                            return self.unexpected("an IRI after the prefix name");
                        }
                        self.prefixes.insert(prefix);
                    }
                    _ => {
                        self.pos -= 1;
                        return self.unexpected("a prefix name such as 'ex:'");
                    }
                }
            } else if self.eat_kw("BASE") {
                if !matches!(self.bump(), Tok::IriRef(_)) {
                    self.pos -= 1;
                    return self.unexpected("an IRI after BASE");
                }
            } else {
                return Ok(());
            }
        }
    }

    fn select_query(&mut self) -> PResult {
        self.select_clause()?;
        while self.eat_kw("FROM") {
            self.eat_kw("NAMED");
            self.iri()?;
        }
        self.eat_kw("WHERE");
        self.group_graph_pattern()?;
        self.solution_modifiers()
    }

    fn select_clause(&mut self) -> PResult {
        self.expect_kw("SELECT")?;
        if !self.eat_kw("DISTINCT") {
            self.eat_kw("REDUCED");
        }
        if self.eat(&Tok::Star) {
            return Ok(());
        }
        let mut count = 0;
        loop {
            match self.peek() {
                Tok::Var(_) => {
                    self.bump();
                }
                Tok::LParen => {
                    self.bump();
                    self.expression()?;
                    self.expect_kw("AS")?;
                    self.var()?;
                    self.expect(Tok::RParen, "')'")?;
                }
                _ => break,
            }
            count += 1;
        }
        if count == 0 {
            return self.unexpected("a projection ('*', a variable or '(expression AS ?var)')");
        }
        Ok(())
    }

    fn solution_modifiers(&mut self) -> PResult {
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            let mut n = 0;
            loop {
                match self.peek() {
                    Tok::Var(_) => {
                        self.bump();
                    }
                    Tok::LParen => {
                        self.bump();
                        self.expression()?;
                        if self.eat_kw("AS") {
                            self.var()?;
                        }
                        self.expect(Tok::RParen, "')'")?;
                    }
                    _ if self.at_call() => self.call()?,
                    _ => break,
                }
                n += 1;
            }
            if n == 0 {
                return self.unexpected("a grouping condition after GROUP BY");
            }
        }
        if self.eat_kw("HAVING") {
            self.constraint()?;
            while self.at_constraint() {
                self.constraint()?;
            }
        }
        if self.eat_kw("ORDER") {
            self.expect_kw("BY")?;
            let mut n = 0;
            loop {
                if self.eat_kw("ASC") || self.eat_kw("DESC") {
                    self.bracketted_expression()?;
                } else if matches!(self.peek(), Tok::Var(_)) {
                    self.bump();
                } else if self.at_constraint() {
                    self.constraint()?;
                } else {
                    break;
                }
                n += 1;
            }
            if n == 0 {
                return self.unexpected("an ordering condition after ORDER BY");
            }
        }
        let mut seen_limit = false;
        let mut seen_offset = false;
        loop {
            if !seen_limit && self.eat_kw("LIMIT") {
                seen_limit = true;
            } else if !seen_offset && self.eat_kw("OFFSET") {
                seen_offset = true;
            } else {
                return Ok(());
            }
            if !matches!(self.bump(), Tok::Integer(_)) {
                self.pos -= 1;
                return self.unexpected("a non-negative integer");
            }
        }
    }

    fn var(&mut self) -> PResult {
        if matches!(self.peek(), Tok::Var(_)) {
            self.bump();
            Ok(())
        } else {
            self.unexpected("a variable")
        }
    }

    fn check_prefix(&self, prefix: &str) -> PResult {
        if self.prefixes.contains(prefix) {
            Ok(())
        } else {
            self.fail(format!("undeclared prefix '{prefix}:'"))
        }
    }

    fn iri(&mut self) -> PResult {
        match self.peek().clone() {
            Tok::IriRef(_) => {
                self.bump();
                Ok(())
            }
            Tok::PName { prefix, .. } => {
                self.check_prefix(&prefix)?;
                self.bump();
                Ok(())
            }
            _ => self.unexpected("an IRI"),
        }
    }

    fn at_iri(&self) -> bool {
        matches!(self.peek(), Tok::IriRef(_) | Tok::PName { .. })
    }

    fn group_graph_pattern(&mut self) -> PResult {
        self.enter()?;
        self.expect(Tok::LBrace, "'{'")?;
        if self.peek().is_kw("SELECT") {
            self.select_clause()?;
            self.eat_kw("WHERE");
            self.group_graph_pattern()?;
            self.solution_modifiers()?;
            if self.peek().is_kw("VALUES") {
                self.values_clause()?;
            }
        } else {
            self.group_graph_pattern_sub()?;
        }
        self.expect(Tok::RBrace, "'}'")?;
        self.leave();
        Ok(())
    }

    fn group_graph_pattern_sub(&mut self) -> PResult {
        loop {
            let tok = self.peek().clone();
            if tok == Tok::RBrace || tok == Tok::Eof {
                return Ok(());
            }
            if tok.is_kw("OPTIONAL") || tok.is_kw("MINUS") {
                self.bump();
                self.group_graph_pattern()?;
            } else if tok == Tok::LBrace {
                self.group_graph_pattern()?;
                while self.eat_kw("UNION") {
                    self.group_graph_pattern()?;
                }
            } else if tok.is_kw("FILTER") {
                self.bump();
                self.constraint()?;
            } else if tok.is_kw("BIND") {
                self.bump();
                self.expect(Tok::LParen, "'(' after BIND")?;
                self.expression()?;
                self.expect_kw("AS")?;
                self.var()?;
                self.expect(Tok::RParen, "')'")?;
            } else if tok.is_kw("VALUES") {
                self.values_clause()?;
            } else if tok.is_kw("GRAPH") {
                self.bump();
                self.var_or_iri()?;
                self.group_graph_pattern()?;
            } else if tok.is_kw("SERVICE") {
                self.bump();
                self.eat_kw("SILENT");
                self.var_or_iri()?;
                self.group_graph_pattern()?;
            } else if self.at_term_start() {
                self.triples_same_subject()?;
                if self.eat(&Tok::Dot) {
                    continue;
                }
                let next = self.peek().clone();
                if next != Tok::RBrace && next != Tok::LBrace && !self.at_pattern_keyword() {
                    return self.unexpected("'.' or '}' after triple pattern");
                }
                continue;
            } else {
                return self.unexpected("a triple pattern, FILTER, OPTIONAL or '}'");
            }
            self.eat(&Tok::Dot);
        }
    }

    fn at_pattern_keyword(&self) -> bool {
        ["OPTIONAL", "MINUS", "FILTER", "BIND", "VALUES", "GRAPH", "SERVICE"]
            .iter()
            .any(|k| self.peek().is_kw(k))
    }

    fn var_or_iri(&mut self) -> PResult {
        if matches!(self.peek(), Tok::Var(_)) {
            self.bump();
            Ok(())
        } else {
            self.iri()
        }
    }

    fn values_clause(&mut self) -> PResult {
        self.expect_kw("VALUES")?;
        let width = if matches!(self.peek(), Tok::Var(_)) {
            self.bump();
            None
        } else {
            self.expect(Tok::LParen, "a variable or '(' after VALUES")?;
            let mut n = 0;
            while matches!(self.peek(), Tok::Var(_)) {
                self.bump();
                n += 1;
            }
            self.expect(Tok::RParen, "')'")?;
            Some(n)
        };
        self.expect(Tok::LBrace, "'{'")?;
        while *self.peek() != Tok::RBrace {
            match width {
                None => self.data_value()?,
                Some(n) => {
                    self.expect(Tok::LParen, "'(' starting a VALUES row")?;
                    let mut got = 0;
                    while *self.peek() != Tok::RParen {
                        self.data_value()?;
                        got += 1;
                    }
                    if got != n {
                        return self.fail(format!("VALUES row has {got} values, expected {n}"));
                    }
                    self.bump();
                }
            }
        }
        self.bump();
        Ok(())
    }

    fn data_value(&mut self) -> PResult {
        if self.eat_kw("UNDEF") {
            return Ok(());
        }
        if self.at_iri() {
            return self.iri();
        }
        if self.at_literal() {
            return self.literal();
        }
        self.unexpected("an IRI, literal or UNDEF")
    }

    fn at_term_start(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Var(_)
                | Tok::IriRef(_)
                | Tok::PName { .. }
                | Tok::BlankLabel(_)
                | Tok::LBracket
                | Tok::LParen
        ) || self.at_literal()
    }

    fn at_literal(&self) -> bool {
        match self.peek() {
            Tok::Str(_) | Tok::Integer(_) | Tok::Decimal(_) | Tok::Double(_) => true,
            Tok::Plus | Tok::Minus => matches!(
                self.peek_at(1),
                Tok::Integer(_) | Tok::Decimal(_) | Tok::Double(_)
            ),
            t => t.is_kw("true") || t.is_kw("false"),
        }
    }

    fn literal(&mut self) -> PResult {
        match self.peek().clone() {
            Tok::Str(_) => {
                self.bump();
                if matches!(self.peek(), Tok::LangTag(_)) {
                    self.bump();
                } else if self.eat(&Tok::DoubleCaret) {
                    self.iri()?;
                }
                Ok(())
            }
            Tok::Plus | Tok::Minus => {
                self.bump();
                self.bump();
                Ok(())
            }
            _ => {
                self.bump();
                Ok(())
            }
        }
    }

    fn triples_same_subject(&mut self) -> PResult {
        self.enter()?;
        match self.peek() {
            Tok::LBracket if *self.peek_at(1) != Tok::RBracket => {
                self.blank_node_property_list()?;
                if self.at_verb_start() {
                    self.property_list_not_empty()?;
                }
            }
            _ => {
                self.graph_term()?;
                self.property_list_not_empty()?;
            }
        }
        self.leave();
        Ok(())
    }

    fn blank_node_property_list(&mut self) -> PResult {
        self.expect(Tok::LBracket, "'['")?;
        self.property_list_not_empty()?;
        self.expect(Tok::RBracket, "']'")
    }

    fn collection(&mut self) -> PResult {
        self.expect(Tok::LParen, "'('")?;
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(());
        }
        while *self.peek() != Tok::RParen {
            self.graph_node()?;
        }
        self.bump();
        Ok(())
    }

    fn graph_node(&mut self) -> PResult {
        self.enter()?;
        let r = match self.peek() {
            Tok::LBracket if *self.peek_at(1) != Tok::RBracket => self.blank_node_property_list(),
            _ => self.graph_term(),
        };
        self.leave();
        r
    }

    /// Variable, IRI, literal, blank node, `[]` or a collection.
    fn graph_term(&mut self) -> PResult {
        match self.peek() {
            Tok::Var(_) | Tok::BlankLabel(_) => {
                self.bump();
                Ok(())
            }
            Tok::IriRef(_) | Tok::PName { .. } => self.iri(),
            Tok::LBracket => {
                self.bump();
                self.expect(Tok::RBracket, "']'")
            }
            Tok::LParen => self.collection(),
            _ if self.at_literal() => self.literal(),
            _ => self.unexpected("a variable, IRI or literal"),
        }
    }

    fn at_verb_start(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Var(_) | Tok::IriRef(_) | Tok::PName { .. } | Tok::Caret | Tok::LParen | Tok::Bang
        ) || self.peek().is_kw("a")
    }

    fn property_list_not_empty(&mut self) -> PResult {
        loop {
            if matches!(self.peek(), Tok::Var(_)) {
                self.bump();
            } else if self.at_verb_start() {
                self.path()?;
            } else {
                return self.unexpected("a predicate");
            }
            self.graph_node()?;
            while self.eat(&Tok::Comma) {
                self.graph_node()?;
            }
            if !self.eat(&Tok::Semicolon) {
                return Ok(());
            }
            while self.eat(&Tok::Semicolon) {}
            if !self.at_verb_start() {
                return Ok(());
            }
        }
    }

    fn path(&mut self) -> PResult {
        self.enter()?;
        self.path_sequence()?;
        while self.eat(&Tok::Pipe) {
            self.path_sequence()?;
        }
        self.leave();
        Ok(())
    }

    fn path_sequence(&mut self) -> PResult {
        self.path_elt_or_inverse()?;
        while self.eat(&Tok::Slash) {
            self.path_elt_or_inverse()?;
        }
        Ok(())
    }

    fn path_elt_or_inverse(&mut self) -> PResult {
        self.eat(&Tok::Caret);
        match self.peek() {
            Tok::LParen => {
                self.bump();
                self.path()?;
                self.expect(Tok::RParen, "')'")?;
            }
            Tok::Bang => {
                self.bump();
                if self.eat(&Tok::LParen) {
                    loop {
                        self.eat(&Tok::Caret);
                        self.path_one()?;
                        if !self.eat(&Tok::Pipe) {
                            break;
                        }
                    }
                    self.expect(Tok::RParen, "')'")?;
                } else {
                    self.eat(&Tok::Caret);
                    self.path_one()?;
                }
            }
            _ => self.path_one()?,
        }
        if matches!(self.peek(), Tok::QMark | Tok::Star | Tok::Plus) {
            self.bump();
        }
        Ok(())
    }

    fn path_one(&mut self) -> PResult {
        if self.eat_kw("a") {
            Ok(())
        } else {
            self.iri()
        }
    }

    fn at_constraint(&self) -> bool {
        *self.peek() == Tok::LParen || self.at_call() || self.at_iri()
    }

    fn constraint(&mut self) -> PResult {
        match self.peek() {
            Tok::LParen => self.bracketted_expression(),
            _ if self.at_call() => self.call(),
            _ if self.at_iri() => {
                self.iri()?;
                self.arg_list()
            }
            _ => self.unexpected("a constraint such as '(expression)' or a function call"),
        }
    }

    fn bracketted_expression(&mut self) -> PResult {
        self.expect(Tok::LParen, "'('")?;
        self.expression()?;
        self.expect(Tok::RParen, "')'")
    }

    fn at_call(&self) -> bool {
        match self.peek() {
            Tok::Name(n) => {
                let upper = n.to_ascii_uppercase();
                BUILTINS.contains(&upper.as_str())
                    || AGGREGATES.contains(&upper.as_str())
                    || upper == "EXISTS"
                    || (upper == "NOT" && self.peek_at(1).is_kw("EXISTS"))
            }
            _ => false,
        }
    }

    /// Built-in function, aggregate or (NOT) EXISTS.
    fn call(&mut self) -> PResult {
        let Tok::Name(name) = self.bump().clone() else {
            return self.unexpected("a function name");
        };
        let upper = name.to_ascii_uppercase();
        if upper == "NOT" {
            self.expect_kw("EXISTS")?;
            return self.group_graph_pattern();
        }
        if upper == "EXISTS" {
            return self.group_graph_pattern();
        }
        if AGGREGATES.contains(&upper.as_str()) {
            self.expect(Tok::LParen, "'(' after aggregate")?;
            self.eat_kw("DISTINCT");
            if upper == "COUNT" && self.eat(&Tok::Star) {
                return self.expect(Tok::RParen, "')'");
            }
            self.expression()?;
            if upper == "GROUP_CONCAT" && self.eat(&Tok::Semicolon) {
                self.expect_kw("SEPARATOR")?;
                self.expect(Tok::Eq, "'='")?;
                if !matches!(self.bump(), Tok::Str(_)) {
                    self.pos -= 1;
                    return self.unexpected("a separator string");
                }
            }
            return self.expect(Tok::RParen, "')'");
        }
        if upper == "BOUND" {
            self.expect(Tok::LParen, "'('")?;
            self.var()?;
            return self.expect(Tok::RParen, "')'");
        }
        self.arg_list()
    }

    fn arg_list(&mut self) -> PResult {
        self.expect(Tok::LParen, "'(' starting the argument list")?;
        if self.eat(&Tok::RParen) {
            return Ok(());
        }
        self.eat_kw("DISTINCT");
        self.expression()?;
        while self.eat(&Tok::Comma) {
            self.expression()?;
        }
        self.expect(Tok::RParen, "')' closing the argument list")
    }

    fn expression(&mut self) -> PResult {
        self.enter()?;
        self.and_expression()?;
        while self.eat(&Tok::Or) {
            self.and_expression()?;
        }
        self.leave();
        Ok(())
    }

    fn and_expression(&mut self) -> PResult {
        self.relational()?;
        while self.eat(&Tok::And) {
            self.relational()?;
        }
        Ok(())
    }

    fn relational(&mut self) -> PResult {
        self.additive()?;
        match self.peek() {
            Tok::Eq | Tok::Ne | Tok::Lt | Tok::Gt | Tok::Le | Tok::Ge => {
                self.bump();
                self.additive()
            }
            t if t.is_kw("IN") => {
                self.bump();
                self.expression_list()
            }
            t if t.is_kw("NOT") && self.peek_at(1).is_kw("IN") => {
                self.bump();
                self.bump();
                self.expression_list()
            }
            _ => Ok(()),
        }
    }

    fn expression_list(&mut self) -> PResult {
        self.expect(Tok::LParen, "'('")?;
        if self.eat(&Tok::RParen) {
            return Ok(());
        }
        self.expression()?;
        while self.eat(&Tok::Comma) {
            self.expression()?;
        }
        self.expect(Tok::RParen, "')'")
    }

    fn additive(&mut self) -> PResult {
        self.multiplicative()?;
        while matches!(self.peek(), Tok::Plus | Tok::Minus) {
            self.bump();
            self.multiplicative()?;
        }
        Ok(())
    }

    fn multiplicative(&mut self) -> PResult {
        self.unary()?;
        while matches!(self.peek(), Tok::Star | Tok::Slash) {
            self.bump();
            self.unary()?;
        }
        Ok(())
    }

    fn unary(&mut self) -> PResult {
        if matches!(self.peek(), Tok::Bang | Tok::Plus | Tok::Minus) {
            self.bump();
            self.enter()?;
            let r = self.unary();
            self.leave();
            return r;
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult {
        match self.peek() {
            Tok::LParen => self.bracketted_expression(),
            Tok::Var(_) => {
                self.bump();
                Ok(())
            }
            Tok::IriRef(_) | Tok::PName { .. } => {
                self.iri()?;
                if *self.peek() == Tok::LParen {
                    self.arg_list()?;
                }
                Ok(())
            }
            _ if self.at_call() => self.call(),
            _ if self.at_literal() => self.literal(),
            Tok::Name(n) => {
                let n = n.clone();
                self.fail(format!("unknown function or keyword '{n}' in expression"))
            }
            _ => self.unexpected("an expression"),
        }
    }
}
