use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::lexer::{Keyword, Token, TokenKind};
use super::CypherError;

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    end_offset: usize,
}

fn expected(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end_offset, |t| t.offset)
    }

    fn error(&self, wanted: &[&str]) -> CypherError {
        CypherError::Parse {
            offset: self.offset(),
            expected: expected(wanted),
            found: self
                .peek()
                .map_or_else(|| "end of input".to_string(), Token::describe),
        }
    }

    fn at_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Token { kind: TokenKind::Punct(p), .. }) if *p == c)
    }

    fn at_keyword(&self, kw: Keyword) -> bool {
        matches!(self.peek(), Some(Token { kind: TokenKind::Keyword(k), .. }) if *k == kw)
    }

    fn punct(&mut self, c: char) -> Result<(), CypherError> {
        if self.at_punct(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&[&format!("`{c}`")]))
        }
    }

    fn keyword(&mut self, kw: Keyword) -> Result<(), CypherError> {
        if self.at_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&[kw.as_str()]))
        }
    }

    fn identifier(&mut self) -> Result<String, CypherError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Ok(t.text.clone())
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn optional_identifier(&mut self) -> Option<String> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Some(t.text.clone())
            }
            _ => None,
        }
    }

    fn name_key(&mut self) -> Result<(), CypherError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier && t.text == "name" => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error(&["`name`"])),
        }
    }

    fn string(&mut self) -> Result<String, CypherError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::StringLiteral => {
                self.pos += 1;
                Ok(t.literal_value().to_string())
            }
            _ => Err(self.error(&["string literal"])),
        }
    }

    fn query(&mut self) -> Result<CypherQuery, CypherError> {
        self.keyword(Keyword::Match)?;
        let mut patterns = vec![self.path()?];
        while self.at_punct(',') {
            self.pos += 1;
            patterns.push(self.path()?);
        }

        let mut filters = Vec::new();
        if self.at_keyword(Keyword::Where) {
            self.pos += 1;
            filters.push(self.condition()?);
            while self.at_keyword(Keyword::And) {
                self.pos += 1;
                filters.push(self.condition()?);
            }
        }

        if !self.at_keyword(Keyword::Return) {
            let mut wanted = vec!["`,`", "`-`", "`<`", "RETURN"];
            if filters.is_empty() {
                wanted.push("WHERE");
            } else {
                wanted.push("AND");
            }
            return Err(self.error(&wanted));
        }
        self.pos += 1;
        let mut returns = vec![self.return_item()?];
        while self.at_punct(',') {
            self.pos += 1;
            returns.push(self.return_item()?);
        }

        let mut limit = None;
        if self.at_keyword(Keyword::Limit) {
            self.pos += 1;
            let offset = self.offset();
            match self.peek() {
                Some(t) if t.kind == TokenKind::Integer => {
                    self.pos += 1;
                    let value: usize = t
                        .text
                        .parse()
                        .map_err(|_| CypherError::InvalidLimit { offset })?;
                    if value == 0 {
                        return Err(CypherError::InvalidLimit { offset });
                    }
                    limit = Some(value);
                }
                _ => return Err(self.error(&["positive integer"])),
            }
        }

        if self.peek().is_some() {
            let wanted: &[&str] = if limit.is_some() {
                &["end of input"]
            } else {
                &["`,`", "LIMIT", "end of input"]
            };
            return Err(self.error(wanted));
        }

        Ok(CypherQuery {
            patterns,
            filters,
            returns,
            limit,
        })
    }

    fn path(&mut self) -> Result<PathPattern, CypherError> {
        let mut path = PathPattern::single(self.node()?);
        while self.at_punct('-') || self.at_punct('<') {
            path.edges.push(self.edge()?);
            path.nodes.push(self.node()?);
        }
        Ok(path)
    }

    fn node(&mut self) -> Result<NodePattern, CypherError> {
        self.punct('(')?;
        let var = self.optional_identifier();
        let mut anchor = None;
        if self.at_punct('{') {
            self.pos += 1;
            self.name_key()?;
            self.punct(':')?;
            anchor = Some(self.string()?);
            self.punct('}')?;
        }
        if !self.at_punct(')') {
            let wanted: &[&str] = match (&var, &anchor) {
                (None, None) => &["identifier", "`{`", "`)`"],
                (Some(_), None) => &["`{`", "`)`"],
                _ => &["`)`"],
            };
            return Err(self.error(wanted));
        }
        self.pos += 1;
        Ok(NodePattern { var, anchor })
    }

    fn edge(&mut self) -> Result<EdgePattern, CypherError> {
        let leftward = self.at_punct('<');
        if leftward {
            self.pos += 1;
        }
        self.punct('-')?;
        self.punct('[')?;
        let var = self.optional_identifier();
        self.punct(':')?;
        let relation = self.identifier()?;
        self.punct(']')?;
        self.punct('-')?;
        let direction = if leftward {
            EdgeDirection::RightToLeft
        } else {
            self.punct('>')?;
            EdgeDirection::LeftToRight
        };
        Ok(EdgePattern {
            var,
            relation,
            direction,
        })
    }

    fn condition(&mut self) -> Result<Condition, CypherError> {
        let var = self.identifier()?;
        self.punct('.')?;
        self.name_key()?;
        self.punct('=')?;
        let value = self.string()?;
        Ok(Condition { var, value })
    }

    fn return_item(&mut self) -> Result<ReturnItem, CypherError> {
        let var = self.identifier()?;
        let mut name_property = false;
        if self.at_punct('.') {
            self.pos += 1;
            self.name_key()?;
            name_property = true;
        }
        Ok(ReturnItem { var, name_property })
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Node,
    Edge,
}

fn check_semantics(query: &CypherQuery) -> Result<(), CypherError> {
    let mut roles: HashMap<&str, Role> = HashMap::new();
    let mut seen_edges: HashSet<&str> = HashSet::new();
    for path in &query.patterns {
        for node in &path.nodes {
            if let Some(v) = node.var.as_deref() {
                if roles.insert(v, Role::Node) == Some(Role::Edge) {
                    return Err(CypherError::VariableRoleConflict(v.into()));
                }
            }
        }
        for edge in &path.edges {
            if let Some(v) = edge.var.as_deref() {
                if !seen_edges.insert(v) {
                    return Err(CypherError::DuplicateEdgeVariable(v.into()));
                }
                if roles.insert(v, Role::Edge) == Some(Role::Node) {
                    return Err(CypherError::VariableRoleConflict(v.into()));
                }
            }
        }
    }
    let used = query
        .filters
        .iter()
        .map(|c| c.var.as_str())
        .chain(query.returns.iter().map(|r| r.var.as_str()));
    for v in used {
        match roles.get(v) {
            Some(Role::Node) => {}
            Some(Role::Edge) => return Err(CypherError::EdgeVariableNotAllowed(v.into())),
            None => return Err(CypherError::UnboundVariable(v.into())),
        }
    }
    Ok(())
}

pub fn parse(tokens: &[Token]) -> Result<CypherQuery, CypherError> {
    let end_offset = tokens.last().map_or(0, |t| t.offset + t.char_len());
    let mut parser = Parser {
        tokens,
        pos: 0,
        end_offset,
    };
    let query = parser.query()?;
    check_semantics(&query)?;
    Ok(query)
}
