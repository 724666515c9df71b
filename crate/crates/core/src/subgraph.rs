//! Question-focused subgraphs: breadth-first expansion from schema anchors,
//! keeping only triples whose relevance clears a threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Direction, EntityId, GraphView, KnowledgeGraph, RelationId, Triple};
use crate::schema::QuerySchema;
use crate::text::word_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Provenance {
    /// BFS depth at which the triple was first reached; seeds' own edges are hop 1.
    pub hop: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubgraphError {
    #[error("schema has no anchored slot to expand from")]
    NoAnchor,
    #[error("no schema anchor resolves to a graph entity")]
    UnresolvedAnchors,
    #[error("hop budget must be positive")]
    ZeroBudget,
}

/// A subset of a parent graph's triples, indexed like the parent.
///
/// Entities are the endpoints of retained triples plus the seeds.
#[derive(Debug, Clone)]
pub struct Subgraph<'a> {
    parent: &'a KnowledgeGraph,
    triples: Vec<Triple>,
    seeds: BTreeSet<EntityId>,
    provenance: BTreeMap<Triple, Provenance>,
    entities: Vec<EntityId>,
    outgoing: HashMap<EntityId, Vec<Triple>>,
    incoming: HashMap<EntityId, Vec<Triple>>,
    by_relation: HashMap<RelationId, Vec<Triple>>,
}

impl<'a> Subgraph<'a> {
    pub fn new(
        parent: &'a KnowledgeGraph,
        seeds: BTreeSet<EntityId>,
        provenance: BTreeMap<Triple, Provenance>,
    ) -> Self {
        // Keys iterate in ascending order, so every bucket is sorted too.
        let triples: Vec<Triple> = provenance.keys().copied().collect();
        let mut entities: BTreeSet<EntityId> = seeds.clone();
        let mut outgoing: HashMap<EntityId, Vec<Triple>> = HashMap::new();
        let mut incoming: HashMap<EntityId, Vec<Triple>> = HashMap::new();
        let mut by_relation: HashMap<RelationId, Vec<Triple>> = HashMap::new();
        for t in &triples {
            entities.insert(t.subject);
            entities.insert(t.object);
            outgoing.entry(t.subject).or_default().push(*t);
            incoming.entry(t.object).or_default().push(*t);
            by_relation.entry(t.relation).or_default().push(*t);
        }
        Self {
            parent,
            triples,
            seeds,
            provenance,
            entities: entities.into_iter().collect(),
            outgoing,
            incoming,
            by_relation,
        }
    }

    pub fn parent(&self) -> &'a KnowledgeGraph {
        self.parent
    }

    /// Retained triples in ascending order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn seeds(&self) -> &BTreeSet<EntityId> {
        &self.seeds
    }

    pub fn provenance(&self, triple: &Triple) -> Option<Provenance> {
        self.provenance.get(triple).copied()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

impl GraphView for Subgraph<'_> {
    fn knowledge_graph(&self) -> &KnowledgeGraph {
        self.parent
    }

    fn outgoing(&self, entity: EntityId) -> &[Triple] {
        self.outgoing.get(&entity).map_or(&[], Vec::as_slice)
    }

    fn incoming(&self, entity: EntityId) -> &[Triple] {
        self.incoming.get(&entity).map_or(&[], Vec::as_slice)
    }

    fn with_relation(&self, relation: RelationId) -> &[Triple] {
        self.by_relation.get(&relation).map_or(&[], Vec::as_slice)
    }

    fn entities(&self) -> Vec<EntityId> {
        self.entities.clone()
    }

    fn contains(&self, triple: &Triple) -> bool {
        self.provenance.contains_key(triple)
    }
}

/// `max(rel_term, lex_term)`: 1 when the triple's relation occurs in the
/// schema, else the share of the triple's name tokens found in the question.
pub fn relevance_score(
    kg: &KnowledgeGraph,
    triple: &Triple,
    question: &str,
    schema: &QuerySchema,
) -> f64 {
    let relation = kg.relation_name(triple.relation);
    if schema.steps.iter().any(|s| s.relation == relation) {
        return 1.0;
    }
    let triple_tokens: BTreeSet<String> = [
        kg.entity_name(triple.subject),
        relation,
        kg.entity_name(triple.object),
    ]
    .iter()
    .flat_map(|name| word_tokens(name))
    .collect();
    if triple_tokens.is_empty() {
        return 0.0;
    }
    let question_tokens: BTreeSet<String> = word_tokens(question).into_iter().collect();
    triple_tokens.intersection(&question_tokens).count() as f64 / triple_tokens.len() as f64
}

/// Default hop budget: one more than the number of schema steps.
pub fn default_hop_budget(schema: &QuerySchema) -> usize {
    schema.steps.len() + 1
}

/// Entities that anchor the schema, resolved through alias ranking.
pub fn resolve_anchors(kg: &KnowledgeGraph, schema: &QuerySchema) -> Result<BTreeSet<EntityId>, SubgraphError> {
    let mut anchored = schema.anchored_slots().peekable();
    if anchored.peek().is_none() {
        return Err(SubgraphError::NoAnchor);
    }
    let seeds: BTreeSet<EntityId> = anchored
        .filter_map(|slot| {
            let name = slot.binding.as_deref().expect("anchored");
            kg.resolve_entity(name).first().copied()
        })
        .collect();
    if seeds.is_empty() {
        return Err(SubgraphError::UnresolvedAnchors);
    }
    Ok(seeds)
}

/// Expands from the schema anchors, ignoring edge direction, for at most
/// `hop_budget` hops. Only retained triples extend the frontier, so a pruned
/// triple also drops every node reachable solely through it.
pub fn generate_subgraph<'a>(
    kg: &'a KnowledgeGraph,
    question: &str,
    schema: &QuerySchema,
    hop_budget: usize,
    threshold: f64,
) -> Result<Subgraph<'a>, SubgraphError> {
    if hop_budget == 0 {
        return Err(SubgraphError::ZeroBudget);
    }
    let seeds = resolve_anchors(kg, schema)?;
    let mut provenance: BTreeMap<Triple, Provenance> = BTreeMap::new();
    let mut seen_triples: BTreeSet<Triple> = BTreeSet::new();
    let mut visited: BTreeSet<EntityId> = seeds.clone();
    let mut frontier: BTreeSet<EntityId> = seeds.clone();

    for hop in 1..=hop_budget {
        let mut next = BTreeSet::new();
        for &entity in &frontier {
            let incident = kg
                .neighbors(entity, None, Direction::Both)
                .expect("frontier entities come from the graph");
            for t in incident {
                if !seen_triples.insert(t) {
                    continue;
                }
                let score = relevance_score(kg, &t, question, schema);
                if score < threshold {
                    continue;
                }
                provenance.insert(t, Provenance { hop, score });
                for e in [t.subject, t.object] {
                    if visited.insert(e) {
                        next.insert(e);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(Subgraph::new(kg, seeds, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cypher::execute;
    use crate::graph::load_kg;
    use crate::schema::{compile_schema, parse_schema_text};

    const QUESTION: &str = "Where is the company where Alice's friend works located?";
    const SCHEMA: &str =
        "(e1=alice) friend_of (e2). (e2) works_at (e3). (e3) located_in (e4). ANSWER e4";

    fn toy(extra: &str) -> KnowledgeGraph {
        let text = format!("alice\tfriend_of\tbob\nbob\tworks_at\tacme\nacme\tlocated_in\tparis\n{extra}");
        load_kg(text.as_bytes(), None::<&[u8]>).unwrap()
    }

    fn names(kg: &KnowledgeGraph, sub: &Subgraph) -> Vec<String> {
        sub.triples().iter().map(|t| kg.display_triple(t)).collect()
    }

    #[test]
    fn full_chain_is_retained() {
        let kg = toy("");
        let schema = parse_schema_text(SCHEMA).unwrap();
        let sub = generate_subgraph(&kg, QUESTION, &schema, 3, 0.0).unwrap();
        assert_eq!(sub.len(), 3);
        let hops: Vec<usize> = kg
            .triples()
            .iter()
            .map(|t| sub.provenance(t).unwrap().hop)
            .collect();
        assert_eq!(hops, [1, 2, 3]);
    }

    #[test]
    fn noise_triple_is_pruned_above_its_score() {
        let kg = toy("alice\tlikes\tpizza\n");
        let schema = parse_schema_text(SCHEMA).unwrap();
        let sub = generate_subgraph(&kg, QUESTION, &schema, 3, 0.5).unwrap();
        assert_eq!(
            names(&kg, &sub),
            ["alice friend_of bob", "bob works_at acme", "acme located_in paris"]
        );
        let pizza = kg.entity_id("pizza").unwrap();
        assert!(!sub.entities().contains(&pizza));
        let kept = generate_subgraph(&kg, QUESTION, &schema, 3, 0.0).unwrap();
        assert_eq!(kept.len(), 4);
    }

    #[test]
    fn budget_of_one_keeps_first_hop() {
        let kg = toy("");
        let schema = parse_schema_text(SCHEMA).unwrap();
        let sub = generate_subgraph(&kg, QUESTION, &schema, 1, 0.0).unwrap();
        assert_eq!(names(&kg, &sub), ["alice friend_of bob"]);
    }

    #[test]
    fn relevance_examples() {
        let kg = toy("alice\tlikes\tpizza\n");
        let schema = parse_schema_text(SCHEMA).unwrap();
        let t = |s: &str, r: &str, o: &str| {
            Triple::new(
                kg.entity_id(s).unwrap(),
                kg.relation_id(r).unwrap(),
                kg.entity_id(o).unwrap(),
            )
        };
        assert_eq!(relevance_score(&kg, &t("bob", "works_at", "acme"), QUESTION, &schema), 1.0);
        assert_eq!(
            relevance_score(&kg, &t("alice", "likes", "pizza"), QUESTION, &schema),
            1.0 / 3.0
        );
        assert_eq!(relevance_score(&kg, &t("alice", "likes", "pizza"), "", &schema), 0.0);
    }

    #[test]
    fn anchors_are_required() {
        let kg = toy("");
        let schema = parse_schema_text("(e1=zorp) friend_of (e2). ANSWER e2").unwrap();
        assert_eq!(
            generate_subgraph(&kg, QUESTION, &schema, 2, 0.0).unwrap_err(),
            SubgraphError::UnresolvedAnchors
        );
    }

    #[test]
    fn query_on_subgraph_matches_graph() {
        let kg = toy("alice\tlikes\tpizza\ncarol\tworks_at\tacme\n");
        let schema = parse_schema_text(SCHEMA).unwrap();
        let sub = generate_subgraph(&kg, QUESTION, &schema, default_hop_budget(&schema), 0.0).unwrap();
        let q = compile_schema(&schema);
        assert_eq!(execute(&sub, &q).unwrap(), execute(&kg, &q).unwrap());
    }
}
