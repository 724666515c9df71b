//! Backtracking pattern matcher.
//!
//! Node variables are bound one at a time, starting from the most constrained
//! node (a fixed node if any, otherwise the node whose incident relations have
//! the fewest triples) and then walking outward along pattern edges so each
//! new binding is generated from an index lookup on an already-bound
//! neighbour.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::ast::{CypherQuery, EdgeDirection};
use super::CypherError;
use crate::graph::{EntityId, GraphView, KnowledgeGraph, RelationId, Triple};

/// Result of a query: distinct rows sorted by the canonical names they hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<EntityId>>,
}

impl BindingTable {
    pub fn empty(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Distinct values of a column, in row order.
    pub fn column_values(&self, name: &str) -> Vec<EntityId> {
        let Some(i) = self.column_index(name) else {
            return Vec::new();
        };
        let mut seen = BTreeSet::new();
        self.rows
            .iter()
            .map(|r| r[i])
            .filter(|e| seen.insert(*e))
            .collect()
    }

    pub fn named_rows(&self, kg: &KnowledgeGraph) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|e| kg.entity_name(*e).to_string()).collect())
            .collect()
    }

    /// Header line plus one tab-separated line per row.
    pub fn to_tsv(&self, kg: &KnowledgeGraph) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in self.named_rows(kg) {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Sorts rows by their canonical-name tuples and removes duplicates.
pub fn sort_rows_by_name(kg: &KnowledgeGraph, rows: impl IntoIterator<Item = Vec<EntityId>>) -> Vec<Vec<EntityId>> {
    let unique: BTreeSet<Vec<EntityId>> = rows.into_iter().collect();
    let mut keyed: Vec<(Vec<&str>, Vec<EntityId>)> = unique
        .into_iter()
        .map(|r| (r.iter().map(|e| kg.entity_name(*e)).collect(), r))
        .collect();
    keyed.sort();
    keyed.into_iter().map(|(_, r)| r).collect()
}

struct EdgeConstraint {
    subject: usize,
    relation: RelationId,
    object: usize,
}

struct Plan {
    var_count: usize,
    edges: Vec<EdgeConstraint>,
    fixed: Vec<Option<EntityId>>,
    returns: Vec<usize>,
}

enum Prepared {
    Plan(Plan),
    Unsatisfiable,
}

fn prepare(kg: &KnowledgeGraph, query: &CypherQuery) -> Result<Prepared, CypherError> {
    let mut vars: HashMap<String, usize> = HashMap::new();
    let mut var_count = 0usize;
    let mut slot = |name: Option<&str>| -> usize {
        match name {
            Some(n) => *vars.entry(n.to_string()).or_insert_with(|| {
                var_count += 1;
                var_count - 1
            }),
            None => {
                var_count += 1;
                var_count - 1
            }
        }
    };

    let mut node_slots: Vec<Vec<usize>> = Vec::new();
    let mut anchors: Vec<(usize, &str)> = Vec::new();
    for path in &query.patterns {
        let mut slots = Vec::new();
        for node in &path.nodes {
            let s = slot(node.var.as_deref());
            if let Some(anchor) = &node.anchor {
                anchors.push((s, anchor));
            }
            slots.push(s);
        }
        node_slots.push(slots);
    }

    let mut fixed: Vec<Option<EntityId>> = vec![None; var_count];
    let mut unsatisfiable = false;
    let pin = |fixed: &mut Vec<Option<EntityId>>, s: usize, e: EntityId| -> bool {
        match fixed[s] {
            Some(prev) if prev != e => false,
            _ => {
                fixed[s] = Some(e);
                true
            }
        }
    };

    for (s, anchor) in anchors {
        let Some(&top) = kg.resolve_entity(anchor).first() else {
            return Err(CypherError::UnresolvedAnchor(anchor.to_string()));
        };
        unsatisfiable |= !pin(&mut fixed, s, top);
    }
    for cond in &query.filters {
        let s = vars[&cond.var];
        match kg.entity_id(&cond.value) {
            Some(e) => unsatisfiable |= !pin(&mut fixed, s, e),
            None => unsatisfiable = true,
        }
    }

    let mut edges = Vec::new();
    for (path, slots) in query.patterns.iter().zip(&node_slots) {
        for (i, edge) in path.edges.iter().enumerate() {
            let Some(relation) = kg.relation_id(&edge.relation) else {
                unsatisfiable = true;
                continue;
            };
            let (subject, object) = match edge.direction {
                EdgeDirection::LeftToRight => (slots[i], slots[i + 1]),
                EdgeDirection::RightToLeft => (slots[i + 1], slots[i]),
            };
            edges.push(EdgeConstraint {
                subject,
                relation,
                object,
            });
        }
    }

    if unsatisfiable {
        return Ok(Prepared::Unsatisfiable);
    }
    let returns = query.returns.iter().map(|r| vars[&r.var]).collect();
    Ok(Prepared::Plan(Plan {
        var_count,
        edges,
        fixed,
        returns,
    }))
}

struct Search<'a, G: GraphView + ?Sized> {
    view: &'a G,
    plan: &'a Plan,
    order: Vec<usize>,
    assignment: Vec<Option<EntityId>>,
    results: BTreeSet<Vec<EntityId>>,
}

impl<G: GraphView + ?Sized> Search<'_, G> {
    fn candidates(&self, var: usize) -> Vec<EntityId> {
        if let Some(e) = self.plan.fixed[var] {
            let isolated = !self
                .plan
                .edges
                .iter()
                .any(|edge| edge.subject == var || edge.object == var);
            if isolated && self.view.entities().binary_search(&e).is_err() {
                return Vec::new();
            }
            return vec![e];
        }
        let mut out: BTreeSet<EntityId> = BTreeSet::new();
        for edge in &self.plan.edges {
            if edge.object == var && edge.subject != var {
                if let Some(s) = self.assignment[edge.subject] {
                    out.extend(
                        self.view
                            .outgoing(s)
                            .iter()
                            .filter(|t| t.relation == edge.relation)
                            .map(|t| t.object),
                    );
                    return out.into_iter().collect();
                }
            }
            if edge.subject == var && edge.object != var {
                if let Some(o) = self.assignment[edge.object] {
                    out.extend(
                        self.view
                            .incoming(o)
                            .iter()
                            .filter(|t| t.relation == edge.relation)
                            .map(|t| t.subject),
                    );
                    return out.into_iter().collect();
                }
            }
        }
        for edge in &self.plan.edges {
            if edge.subject == var {
                let triples = self.view.with_relation(edge.relation);
                return triples
                    .iter()
                    .map(|t| t.subject)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
            }
            if edge.object == var {
                let triples = self.view.with_relation(edge.relation);
                return triples
                    .iter()
                    .map(|t| t.object)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
            }
        }
        self.view.entities()
    }

    fn consistent(&self, var: usize) -> bool {
        self.plan.edges.iter().all(|edge| {
            if edge.subject != var && edge.object != var {
                return true;
            }
            match (self.assignment[edge.subject], self.assignment[edge.object]) {
                (Some(s), Some(o)) => self.view.contains(&Triple::new(s, edge.relation, o)),
                _ => true,
            }
        })
    }

    fn run(&mut self, depth: usize) {
        if depth == self.order.len() {
            let row = self
                .plan
                .returns
                .iter()
                .map(|&v| self.assignment[v].expect("all variables bound"))
                .collect();
            self.results.insert(row);
            return;
        }
        let var = self.order[depth];
        for candidate in self.candidates(var) {
            self.assignment[var] = Some(candidate);
            if self.consistent(var) {
                self.run(depth + 1);
            }
        }
        self.assignment[var] = None;
    }
}

fn binding_order<G: GraphView + ?Sized>(view: &G, plan: &Plan) -> Vec<usize> {
    let cost = |v: usize| -> (bool, usize, usize) {
        let fanout = plan
            .edges
            .iter()
            .filter(|e| e.subject == v || e.object == v)
            .map(|e| view.with_relation(e.relation).len())
            .min()
            .unwrap_or(usize::MAX);
        (plan.fixed[v].is_none(), fanout, v)
    };
    let mut order = Vec::with_capacity(plan.var_count);
    let mut placed = vec![false; plan.var_count];
    while order.len() < plan.var_count {
        let frontier: Vec<usize> = (0..plan.var_count)
            .filter(|&v| !placed[v])
            .filter(|&v| {
                plan.edges.iter().any(|e| {
                    (e.subject == v && placed[e.object]) || (e.object == v && placed[e.subject])
                })
            })
            .collect();
        let pool: Vec<usize> = if frontier.is_empty() {
            (0..plan.var_count).filter(|&v| !placed[v]).collect()
        } else {
            frontier
        };
        let next = pool.into_iter().min_by_key(|&v| cost(v)).expect("pool non-empty");
        placed[next] = true;
        order.push(next);
    }
    order
}

pub fn execute<G: GraphView + ?Sized>(
    view: &G,
    query: &CypherQuery,
) -> Result<BindingTable, CypherError> {
    let kg = view.knowledge_graph();
    let columns: Vec<String> = query.returns.iter().map(|r| r.column_name()).collect();
    let plan = match prepare(kg, query)? {
        Prepared::Plan(plan) => plan,
        Prepared::Unsatisfiable => return Ok(BindingTable::empty(columns)),
    };

    let mut search = Search {
        view,
        plan: &plan,
        order: binding_order(view, &plan),
        assignment: vec![None; plan.var_count],
        results: BTreeSet::new(),
    };
    search.run(0);

    let mut rows = sort_rows_by_name(kg, std::mem::take(&mut search.results));
    if let Some(limit) = query.limit {
        rows.truncate(limit);
    }
    Ok(BindingTable { columns, rows })
}
