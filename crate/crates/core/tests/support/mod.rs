//! Seeded generators and brute-force oracles shared by integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use kgreason::cypher::{
    Condition, CypherError, CypherQuery, EdgeDirection, EdgePattern, NodePattern, PathPattern,
    ReturnItem,
};
use kgreason::graph::{EntityId, KnowledgeGraph};
use kgreason::reasoning::{PathOrigin, ReasoningPath};
use kgreason::schema::{QuerySchema, SchemaSource, SchemaTriple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Up to `max_triples` triples over `entities` entities and `relations`
/// relations, named `e<i>` and `r<j>`.
pub fn random_graph(rng: &mut ChaCha8Rng, entities: usize, relations: usize, max_triples: usize) -> KnowledgeGraph {
    random_graph_sized(rng, entities, relations, 0, max_triples)
}

pub fn random_graph_sized(
    rng: &mut ChaCha8Rng,
    entities: usize,
    relations: usize,
    min_triples: usize,
    max_triples: usize,
) -> KnowledgeGraph {
    let n = rng.random_range(min_triples..=max_triples);
    let triples: Vec<(String, String, String)> = (0..n)
        .map(|_| {
            (
                format!("e{}", rng.random_range(0..entities)),
                format!("r{}", rng.random_range(0..relations)),
                format!("e{}", rng.random_range(0..entities)),
            )
        })
        .collect();
    KnowledgeGraph::from_triples(triples.iter().map(|(s, r, o)| (s.as_str(), r.as_str(), o.as_str())))
}

fn entity_surface(rng: &mut ChaCha8Rng, entities: usize) -> String {
    match rng.random_range(0..10) {
        0 => "zz".to_string(),
        1 => format!("E{}", rng.random_range(0..entities)),
        _ => format!("e{}", rng.random_range(0..entities)),
    }
}

/// A query with at most `max_edges` edges spread over one or two paths and
/// at most two filters. Node variables may repeat, closing cycles.
pub fn random_query(rng: &mut ChaCha8Rng, entities: usize, relations: usize, max_edges: usize) -> CypherQuery {
    const VARS: [&str; 5] = ["a", "b", "c", "d", "f"];
    let edge_total = rng.random_range(0..=max_edges);
    let path_count = if edge_total >= 2 && rng.random_bool(0.3) { 2 } else { 1 };
    let mut used_vars: Vec<String> = Vec::new();
    let mut edge_var_count = 0;
    let node = |rng: &mut ChaCha8Rng, used: &mut Vec<String>, force_named: bool| -> NodePattern {
        let var = if !force_named && rng.random_bool(0.2) {
            None
        } else if !used.is_empty() && rng.random_bool(0.2) {
            Some(used[rng.random_range(0..used.len())].clone())
        } else {
            let v = VARS[rng.random_range(0..VARS.len())].to_string();
            Some(v)
        };
        if let Some(v) = &var {
            if !used.contains(v) {
                used.push(v.clone());
            }
        }
        let anchor = rng.random_bool(0.25).then(|| entity_surface(rng, entities));
        NodePattern { var, anchor }
    };

    let mut patterns = Vec::new();
    let mut remaining = edge_total;
    for p in 0..path_count {
        let edges_here = if p + 1 == path_count { remaining } else { rng.random_range(1..remaining) };
        remaining -= edges_here;
        let mut path = PathPattern::single(node(rng, &mut used_vars, p == 0));
        for _ in 0..edges_here {
            let var = rng.random_bool(0.2).then(|| {
                edge_var_count += 1;
                format!("r{edge_var_count}x")
            });
            let relation = if rng.random_bool(0.05) {
                "missing".to_string()
            } else {
                format!("r{}", rng.random_range(0..relations))
            };
            let direction = if rng.random_bool(0.5) {
                EdgeDirection::LeftToRight
            } else {
                EdgeDirection::RightToLeft
            };
            path.edges.push(EdgePattern { var, relation, direction });
            path.nodes.push(node(rng, &mut used_vars, false));
        }
        patterns.push(path);
    }

    let filters = (0..rng.random_range(0..=2))
        .map(|_| Condition {
            var: used_vars[rng.random_range(0..used_vars.len())].clone(),
            value: if rng.random_bool(0.1) {
                "nobody".to_string()
            } else {
                format!("e{}", rng.random_range(0..entities))
            },
        })
        .collect();
    let mut returns: Vec<ReturnItem> = Vec::new();
    for _ in 0..rng.random_range(1..=2) {
        let var = used_vars[rng.random_range(0..used_vars.len())].clone();
        returns.push(ReturnItem { var, name_property: rng.random_bool(0.3) });
    }
    let limit = rng.random_bool(0.2).then(|| rng.random_range(1..=4));
    CypherQuery { patterns, filters, returns, limit }
}

/// Enumerates every assignment of entities to pattern nodes and keeps those
/// satisfying all constraints. Rows are projected, deduplicated, sorted by
/// entity names, and cut to the query's LIMIT.
pub fn brute_force(kg: &KnowledgeGraph, query: &CypherQuery) -> Result<Vec<Vec<EntityId>>, CypherError> {
    let mut slot_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut node_slots: Vec<Vec<usize>> = Vec::new();
    let mut anchors: Vec<(usize, EntityId)> = Vec::new();
    let mut slots = 0;
    for path in &query.patterns {
        let mut ids = Vec::new();
        for node in &path.nodes {
            let s = match &node.var {
                Some(v) => *slot_of.entry(v.clone()).or_insert_with(|| {
                    slots += 1;
                    slots - 1
                }),
                None => {
                    slots += 1;
                    slots - 1
                }
            };
            if let Some(a) = &node.anchor {
                let top = *kg
                    .resolve_entity(a)
                    .first()
                    .ok_or_else(|| CypherError::UnresolvedAnchor(a.clone()))?;
                anchors.push((s, top));
            }
            ids.push(s);
        }
        node_slots.push(ids);
    }

    let facts: BTreeSet<(String, String, String)> = kg
        .triples()
        .iter()
        .map(|t| {
            (
                kg.entity_name(t.subject).to_string(),
                kg.relation_name(t.relation).to_string(),
                kg.entity_name(t.object).to_string(),
            )
        })
        .collect();
    let all: Vec<EntityId> = kg.entity_ids().collect();
    let mut rows: BTreeSet<Vec<EntityId>> = BTreeSet::new();
    let mut assignment = vec![0usize; slots];
    if all.is_empty() {
        return Ok(Vec::new());
    }
    loop {
        let value = |s: usize| all[assignment[s]];
        let ok = anchors.iter().all(|(s, e)| value(*s) == *e)
            && query
                .filters
                .iter()
                .all(|c| kg.entity_name(value(slot_of[&c.var])) == c.value)
            && query.patterns.iter().zip(&node_slots).all(|(path, ids)| {
                path.edges.iter().enumerate().all(|(i, e)| {
                    let (l, r) = (kg.entity_name(value(ids[i])), kg.entity_name(value(ids[i + 1])));
                    let (s, o) = match e.direction {
                        EdgeDirection::LeftToRight => (l, r),
                        EdgeDirection::RightToLeft => (r, l),
                    };
                    facts.contains(&(s.to_string(), e.relation.clone(), o.to_string()))
                })
            });
        if ok {
            rows.insert(query.returns.iter().map(|r| value(slot_of[&r.var])).collect());
        }
        // Odometer increment over all slots.
        let mut k = 0;
        while k < slots {
            assignment[k] += 1;
            if assignment[k] < all.len() {
                break;
            }
            assignment[k] = 0;
            k += 1;
        }
        if k == slots {
            break;
        }
    }
    let mut named: Vec<(Vec<&str>, Vec<EntityId>)> = rows
        .into_iter()
        .map(|r| (r.iter().map(|e| kg.entity_name(*e)).collect(), r))
        .collect();
    named.sort();
    let mut out: Vec<Vec<EntityId>> = named.into_iter().map(|(_, r)| r).collect();
    if let Some(limit) = query.limit {
        out.truncate(limit);
    }
    Ok(out)
}

/// A chain schema over relations `r<j>` with one to `max_steps` steps, random
/// step directions, one anchor naming a graph entity, and a random answer
/// slot. The graph must not be empty.
pub fn random_chain_schema(rng: &mut ChaCha8Rng, kg: &KnowledgeGraph, relations: usize, max_steps: usize) -> QuerySchema {
    let len = rng.random_range(1..=max_steps);
    let steps: Vec<SchemaTriple> = (0..len)
        .map(|i| {
            let (a, b) = (format!("e{}", i + 1), format!("e{}", i + 2));
            let (subject, object) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            SchemaTriple {
                subject,
                relation: format!("r{}", rng.random_range(0..relations)),
                object,
            }
        })
        .collect();
    let anchor_slot = format!("e{}", rng.random_range(1..=len + 1));
    let entity = kg.entity_name(EntityId(rng.random_range(0..kg.entity_count()) as u32)).to_string();
    let answer = format!("e{}", rng.random_range(1..=len + 1));
    QuerySchema::new(steps, &[(anchor_slot, entity)], answer, SchemaSource::Provider).expect("chain is valid")
}

pub fn random_question(rng: &mut ChaCha8Rng) -> String {
    const WORDS: [&str; 8] = ["where", "is", "e1", "r0", "the", "e3", "of", "r2"];
    (0..rng.random_range(0..6))
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Paths over a graph whose entities are `n0..n<k>`, with confidences that
/// are multiples of 1/64 so sums are exact in binary floating point.
pub fn random_paths(rng: &mut ChaCha8Rng, kg: &KnowledgeGraph, max_paths: usize) -> Vec<ReasoningPath> {
    let schema = QuerySchema::new(
        vec![SchemaTriple { subject: "e1".into(), relation: "r".into(), object: "e2".into() }],
        &[("e1".to_string(), "n0".to_string())],
        "e2",
        SchemaSource::Provider,
    )
    .expect("valid");
    (0..rng.random_range(0..=max_paths))
        .map(|_| {
            let mut candidates: Vec<EntityId> = kg.entity_ids().collect();
            let keep = rng.random_range(0..=candidates.len().min(4));
            for i in 0..candidates.len() {
                let j = rng.random_range(i..candidates.len());
                candidates.swap(i, j);
            }
            candidates.truncate(keep);
            ReasoningPath {
                schema: schema.clone(),
                steps: Vec::new(),
                candidate_scores: vec![1.0; candidates.len()],
                answer_candidates: candidates,
                confidence: rng.random_range(1..=64) as f64 / 64.0,
                origin: PathOrigin::Stepwise,
                failed_at: None,
            }
        })
        .collect()
}

pub fn named_entities(count: usize) -> KnowledgeGraph {
    let names: Vec<String> = (0..count).map(|i| format!("n{i}")).collect();
    KnowledgeGraph::from_triples(names.iter().map(|n| (n.as_str(), "r", n.as_str())))
}

/// Independent integration score: sum of confidence times 1 or 1/2.
pub fn oracle_scores(paths: &[ReasoningPath]) -> BTreeMap<EntityId, f64> {
    let mut scores = BTreeMap::new();
    for p in paths {
        for (i, e) in p.answer_candidates.iter().enumerate() {
            *scores.entry(*e).or_insert(0.0) += p.confidence * if i == 0 { 1.0 } else { 0.5 };
        }
    }
    scores
}

/// Entities by score descending, then name ascending.
pub fn oracle_ranking(kg: &KnowledgeGraph, scores: &BTreeMap<EntityId, f64>) -> Vec<EntityId> {
    let mut ranked: Vec<(EntityId, f64)> = scores.iter().map(|(e, s)| (*e, *s)).collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| kg.entity_name(a.0).cmp(kg.entity_name(b.0)))
    });
    ranked.into_iter().map(|(e, _)| e).collect()
}
