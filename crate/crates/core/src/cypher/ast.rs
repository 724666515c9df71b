use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CypherQuery {
    pub patterns: Vec<PathPattern>,
    pub filters: Vec<Condition>,
    pub returns: Vec<ReturnItem>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathPattern {
    pub nodes: Vec<NodePattern>,
    /// `edges[i]` connects `nodes[i]` and `nodes[i + 1]`.
    pub edges: Vec<EdgePattern>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodePattern {
    pub var: Option<String>,
    /// Entity surface name from `{name:"..."}`.
    pub anchor: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeDirection {
    /// `-[:r]->`: the left node is the subject.
    LeftToRight,
    /// `<-[:r]-`: the right node is the subject.
    RightToLeft,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgePattern {
    pub var: Option<String>,
    pub relation: String,
    pub direction: EdgeDirection,
}

/// `var.name = "value"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub var: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReturnItem {
    pub var: String,
    pub name_property: bool,
}

impl ReturnItem {
    pub fn column_name(&self) -> String {
        if self.name_property {
            format!("{}.name", self.var)
        } else {
            self.var.clone()
        }
    }
}

impl PathPattern {
    pub fn single(node: NodePattern) -> Self {
        Self {
            nodes: vec![node],
            edges: Vec::new(),
        }
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, value: &str) -> fmt::Result {
    if value.contains('"') {
        write!(f, "'{value}'")
    } else {
        write!(f, "\"{value}\"")
    }
}

impl fmt::Display for NodePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        if let Some(var) = &self.var {
            f.write_str(var)?;
        }
        if let Some(anchor) = &self.anchor {
            if self.var.is_some() {
                f.write_str(" ")?;
            }
            f.write_str("{name:")?;
            write_literal(f, anchor)?;
            f.write_str("}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for EdgePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let var = self.var.as_deref().unwrap_or("");
        match self.direction {
            EdgeDirection::LeftToRight => write!(f, "-[{var}:{}]->", self.relation),
            EdgeDirection::RightToLeft => write!(f, "<-[{var}:{}]-", self.relation),
        }
    }
}

impl fmt::Display for PathPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.nodes[0])?;
        for (edge, node) in self.edges.iter().zip(&self.nodes[1..]) {
            write!(f, "{edge}{node}")?;
        }
        Ok(())
    }
}

/// Canonical text: upper-case keywords, single spaces between clauses.
impl fmt::Display for CypherQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MATCH ")?;
        for (i, p) in self.patterns.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        for (i, c) in self.filters.iter().enumerate() {
            f.write_str(if i == 0 { " WHERE " } else { " AND " })?;
            write!(f, "{}.name = ", c.var)?;
            write_literal(f, &c.value)?;
        }
        f.write_str(" RETURN ")?;
        let items: Vec<String> = self.returns.iter().map(ReturnItem::column_name).collect();
        f.write_str(&items.join(", "))?;
        if let Some(limit) = self.limit {
            write!(f, " LIMIT {limit}")?;
        }
        Ok(())
    }
}
