//! Query schemas: chains of `(slot) relation (slot)` constraints leading from
//! anchored entities to an answer slot.
//!
//! Text form, one step per line (steps may also share a line):
//!
//! ```text
//! (e1=alice) friend_of (e2).
//! (e2) works_at (e3).
//! ANSWER e3
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cypher::{
    CypherQuery, EdgeDirection, EdgePattern, NodePattern, PathPattern, ReturnItem,
};
use crate::graph::{EntityId, KnowledgeGraph, MatchKind, Triple};
use crate::llm::{CompletionProvider, CompletionRequest, RequestTag};
use crate::text::{word_token_set, word_tokens};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    /// Entity surface name the slot is anchored to.
    pub binding: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaSource {
    Provider,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySchema {
    pub steps: Vec<SchemaTriple>,
    /// Slots in order of first appearance.
    pub slots: Vec<Slot>,
    pub answer_slot: String,
    pub source: SchemaSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("schema has no steps")]
    ZeroSteps,
    #[error("schema has no ANSWER line")]
    NoAnswer,
    #[error("answer slot `{0}` does not appear in any step")]
    UnknownAnswerSlot(String),
    #[error("step relates slot `{0}` to itself")]
    SelfLoop(String),
    #[error("slot graph is disconnected")]
    Disconnected,
    #[error("slot graph is not a simple chain")]
    NotAChain,
    #[error("no slot is anchored to an entity")]
    NoAnchor,
    #[error("slot `{0}` is bound to two different entities")]
    ConflictingBinding(String),
    #[error("no entity mentioned in the question resolves in the graph")]
    NoResolvableAnchor,
    #[error("no graph relation is mentioned in the question")]
    NoRelation,
    #[error("schema generation failed (provider: {provider}; fallback: {fallback})")]
    Generation { provider: String, fallback: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "kebab-case")]
pub enum SchemaIssue {
    UnknownRelation(String),
    UnresolvableAnchor(String),
}

impl fmt::Display for SchemaIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaIssue::UnknownRelation(r) => write!(f, "unknown-relation {r}"),
            SchemaIssue::UnresolvableAnchor(a) => write!(f, "unresolvable-anchor {a}"),
        }
    }
}

/// A step visited along the chain, with the direction it is traversed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainStep {
    pub step: usize,
    /// True when the step's subject is the slot reached first.
    pub forward: bool,
}

impl QuerySchema {
    /// Builds a schema and checks that it is a connected, anchored chain.
    pub fn new(
        steps: Vec<SchemaTriple>,
        bindings: &[(String, String)],
        answer_slot: impl Into<String>,
        source: SchemaSource,
    ) -> Result<Self, SchemaError> {
        let answer_slot = answer_slot.into();
        if steps.is_empty() {
            return Err(SchemaError::ZeroSteps);
        }
        let mut slots: Vec<Slot> = Vec::new();
        for step in &steps {
            if step.subject == step.object {
                return Err(SchemaError::SelfLoop(step.subject.clone()));
            }
            for name in [&step.subject, &step.object] {
                if !slots.iter().any(|s| &s.name == name) {
                    slots.push(Slot {
                        name: name.clone(),
                        binding: None,
                    });
                }
            }
        }
        for (slot, entity) in bindings {
            let Some(s) = slots.iter_mut().find(|s| &s.name == slot) else {
                continue;
            };
            match &s.binding {
                Some(prev) if prev != entity => {
                    return Err(SchemaError::ConflictingBinding(slot.clone()))
                }
                _ => s.binding = Some(entity.clone()),
            }
        }
        if !slots.iter().any(|s| s.name == answer_slot) {
            return Err(SchemaError::UnknownAnswerSlot(answer_slot));
        }

        // Connectivity, then chain shape: a connected graph with |steps| =
        // |slots| - 1 and max degree 2 is a simple path.
        let mut reached: BTreeSet<&str> = BTreeSet::from([slots[0].name.as_str()]);
        loop {
            let before = reached.len();
            for step in &steps {
                if reached.contains(step.subject.as_str()) || reached.contains(step.object.as_str()) {
                    reached.insert(&step.subject);
                    reached.insert(&step.object);
                }
            }
            if reached.len() == before {
                break;
            }
        }
        if reached.len() != slots.len() {
            return Err(SchemaError::Disconnected);
        }
        let mut degree: BTreeMap<&str, usize> = BTreeMap::new();
        for step in &steps {
            *degree.entry(&step.subject).or_default() += 1;
            *degree.entry(&step.object).or_default() += 1;
        }
        if steps.len() + 1 != slots.len() || degree.values().any(|&d| d > 2) {
            return Err(SchemaError::NotAChain);
        }
        if !slots.iter().any(|s| s.binding.is_some()) {
            return Err(SchemaError::NoAnchor);
        }

        Ok(Self {
            steps,
            slots,
            answer_slot,
            source,
        })
    }

    pub fn binding(&self, slot: &str) -> Option<&str> {
        self.slots
            .iter()
            .find(|s| s.name == slot)
            .and_then(|s| s.binding.as_deref())
    }

    pub fn anchored_slots(&self) -> impl Iterator<Item = &Slot> {
        self.slots.iter().filter(|s| s.binding.is_some())
    }

    pub fn relations(&self) -> BTreeSet<&str> {
        self.steps.iter().map(|s| s.relation.as_str()).collect()
    }

    fn bindings(&self) -> Vec<(String, String)> {
        self.slots
            .iter()
            .filter_map(|s| s.binding.clone().map(|b| (s.name.clone(), b)))
            .collect()
    }

    /// Rebuilds with new steps, keeping bindings of slots that survive.
    pub fn with_steps(
        &self,
        steps: Vec<SchemaTriple>,
        answer_slot: impl Into<String>,
    ) -> Result<Self, SchemaError> {
        Self::new(steps, &self.bindings(), answer_slot, self.source)
    }

    /// Chain endpoint the traversal starts from: the endpoint opposite the
    /// answer slot when the answer is an endpoint, else the endpoint that
    /// appears first.
    pub fn start_slot(&self) -> &str {
        let endpoints: Vec<&Slot> = self
            .slots
            .iter()
            .filter(|s| {
                self.steps
                    .iter()
                    .filter(|st| st.subject == s.name || st.object == s.name)
                    .count()
                    == 1
            })
            .collect();
        match endpoints.as_slice() {
            [a, b] if a.name == self.answer_slot => &b.name,
            [a, ..] => &a.name,
            [] => &self.slots[0].name,
        }
    }

    /// Steps in traversal order from [`Self::start_slot`].
    pub fn chain_order(&self) -> Vec<ChainStep> {
        let mut current = self.start_slot().to_string();
        let mut used = vec![false; self.steps.len()];
        let mut order = Vec::with_capacity(self.steps.len());
        while let Some(i) = (0..self.steps.len()).find(|&i| {
            !used[i] && (self.steps[i].subject == current || self.steps[i].object == current)
        }) {
            used[i] = true;
            let step = &self.steps[i];
            let forward = step.subject == current;
            current = if forward {
                step.object.clone()
            } else {
                step.subject.clone()
            };
            order.push(ChainStep { step: i, forward });
        }
        order
    }

    /// Text form accepted by [`parse_schema_text`]. Each binding is written at
    /// the slot's first occurrence.
    pub fn to_text(&self) -> String {
        let mut bound: BTreeSet<&str> = BTreeSet::new();
        let mut out = String::new();
        for step in &self.steps {
            let mut slot_text = |name: &str| match self.binding(name) {
                Some(entity) if bound.insert(self.slot(name).name.as_str()) => {
                    format!("({name}={entity})")
                }
                _ => format!("({name})"),
            };
            let s = slot_text(&step.subject);
            let o = slot_text(&step.object);
            out.push_str(&format!("{s} {} {o}.\n", step.relation));
        }
        out.push_str(&format!("ANSWER {}", self.answer_slot));
        out
    }

    fn slot(&self, name: &str) -> &Slot {
        self.slots.iter().find(|s| s.name == name).expect("slot of this schema")
    }
}

fn step_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:=\s*([^()]*?))?\s*\)\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:=\s*([^()]*?))?\s*\)",
        )
        .expect("valid regex")
    })
}

fn answer_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bANSWER\s*:?\s*([A-Za-z_][A-Za-z0-9_]*)").expect("valid regex"))
}

/// Parses schema text, ignoring surrounding prose. The last `ANSWER` wins.
pub fn parse_schema_text(text: &str) -> Result<QuerySchema, SchemaError> {
    let mut steps = Vec::new();
    let mut bindings = Vec::new();
    for caps in step_regex().captures_iter(text) {
        let subject = caps[1].to_string();
        let object = caps[4].to_string();
        for (slot, binding) in [(&subject, caps.get(2)), (&object, caps.get(5))] {
            if let Some(entity) = binding.map(|m| m.as_str().trim()).filter(|e| !e.is_empty()) {
                bindings.push((slot.clone(), entity.to_string()));
            }
        }
        steps.push(SchemaTriple {
            subject,
            relation: caps[3].to_string(),
            object,
        });
    }
    if steps.is_empty() {
        return Err(SchemaError::ZeroSteps);
    }
    let answer = answer_regex()
        .captures_iter(text)
        .last()
        .map(|c| c[1].to_string())
        .ok_or(SchemaError::NoAnswer)?;
    QuerySchema::new(steps, &bindings, answer, SchemaSource::Provider)
}

/// Compiles a chain schema into a single-path MATCH returning the answer slot.
pub fn compile_schema(schema: &QuerySchema) -> CypherQuery {
    let node = |name: &str| NodePattern {
        var: Some(name.to_string()),
        anchor: schema.binding(name).map(str::to_string),
    };
    let mut path = PathPattern::single(node(schema.start_slot()));
    for ChainStep { step, forward } in schema.chain_order() {
        let st = &schema.steps[step];
        let (next, direction) = if forward {
            (&st.object, EdgeDirection::LeftToRight)
        } else {
            (&st.subject, EdgeDirection::RightToLeft)
        };
        path.edges.push(EdgePattern {
            var: None,
            relation: st.relation.clone(),
            direction,
        });
        path.nodes.push(node(next));
    }
    CypherQuery {
        patterns: vec![path],
        filters: Vec::new(),
        returns: vec![ReturnItem {
            var: schema.answer_slot.clone(),
            name_property: false,
        }],
        limit: None,
    }
}

pub fn validate_schema(schema: &QuerySchema, kg: &KnowledgeGraph) -> Vec<SchemaIssue> {
    let mut issues = Vec::new();
    for step in &schema.steps {
        let issue = SchemaIssue::UnknownRelation(step.relation.clone());
        if kg.relation_id(&step.relation).is_none() && !issues.contains(&issue) {
            issues.push(issue);
        }
    }
    for slot in schema.anchored_slots() {
        let anchor = slot.binding.as_deref().expect("anchored");
        if kg.resolve_entity(anchor).is_empty() {
            issues.push(SchemaIssue::UnresolvableAnchor(anchor.to_string()));
        }
    }
    issues
}

/// Question n-grams (longest first, then leftmost) that name an entity by
/// exact or case-insensitive alias, with that entity.
pub fn mentioned_entities(question: &str, kg: &KnowledgeGraph) -> Vec<(String, EntityId)> {
    let tokens = word_tokens(question);
    let mut found: Vec<(String, EntityId)> = Vec::new();
    for n in (1..=3.min(tokens.len())).rev() {
        for window in tokens.windows(n) {
            let gram = window.join(" ");
            if let Some(m) = kg.resolve_ranked(&gram).first() {
                if m.kind != MatchKind::TokenOverlap && !found.iter().any(|(_, e)| *e == m.entity) {
                    found.push((gram, m.entity));
                }
            }
        }
    }
    found
}

/// Lexical schema: anchor on the longest mentioned entity, chain every graph
/// relation whose tokens all occur in the question, in question order.
pub fn fallback_schema(question: &str, kg: &KnowledgeGraph) -> Result<QuerySchema, SchemaError> {
    let (_, anchor) = mentioned_entities(question, kg)
        .into_iter()
        .next()
        .ok_or(SchemaError::NoResolvableAnchor)?;

    let tokens = word_tokens(question);
    let mut relations: Vec<(usize, u32, String)> = Vec::new();
    for r in kg.relation_ids() {
        let name = kg.relation_name(r);
        let rel_tokens = word_tokens(name);
        if rel_tokens.is_empty() || !rel_tokens.iter().all(|t| tokens.contains(t)) {
            continue;
        }
        let position = tokens
            .iter()
            .position(|t| *t == rel_tokens[0])
            .expect("token present");
        relations.push((position, r.0, name.to_string()));
    }
    if relations.is_empty() {
        return Err(SchemaError::NoRelation);
    }
    relations.sort();

    let steps: Vec<SchemaTriple> = relations
        .into_iter()
        .enumerate()
        .map(|(i, (_, _, relation))| SchemaTriple {
            subject: format!("e{}", i + 1),
            relation,
            object: format!("e{}", i + 2),
        })
        .collect();
    let answer = steps.last().expect("non-empty").object.clone();
    let bindings = [("e1".to_string(), kg.entity_name(anchor).to_string())];
    QuerySchema::new(steps, &bindings, answer, SchemaSource::Fallback)
}

pub const DEFAULT_SCHEMA_TEMPLATE: &str = "You are a knowledge graph expert. Read the question and the knowledge graph triples below. Identify the core entities and relations in the question and write a query schema that traces the reasoning path from a known entity to the answer.

Write one step per line in the form
(e1=<entity name>) <relation> (e2).
Bind a slot to a graph entity with =<entity name> the first time it appears, use only relation names that occur in the triples, and finish with the line
ANSWER <slot>

Triples:
{triples}

Question: {question}
Schema:
";

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaConfig {
    /// Prompt with `{question}` and `{triples}` placeholders.
    pub template: String,
    /// Number of sample triples shown to the provider.
    pub sample_triples: usize,
    pub max_tokens: u32,
    /// When false only the lexical fallback runs.
    pub use_provider: bool,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            template: DEFAULT_SCHEMA_TEMPLATE.to_string(),
            sample_triples: 20,
            max_tokens: 256,
            use_provider: true,
        }
    }
}

/// Up to `limit` triples incident to entities named in the question.
pub fn sample_triples(question: &str, kg: &KnowledgeGraph, limit: usize) -> Vec<Triple> {
    let mut out: Vec<Triple> = Vec::new();
    for (_, entity) in mentioned_entities(question, kg) {
        let Ok(incident) = kg.neighbors(entity, None, crate::graph::Direction::Both) else {
            continue;
        };
        for t in incident {
            if out.len() >= limit {
                return out;
            }
            if !out.contains(&t) {
                out.push(t);
            }
        }
    }
    out
}

pub fn schema_prompt(question: &str, kg: &KnowledgeGraph, config: &SchemaConfig) -> String {
    let triples: Vec<String> = sample_triples(question, kg, config.sample_triples)
        .iter()
        .map(|t| kg.display_triple(t))
        .collect();
    let triples = if triples.is_empty() {
        "(none)".to_string()
    } else {
        triples.join("\n")
    };
    config
        .template
        .replace("{triples}", &triples)
        .replace("{question}", question)
}

/// Outcome of [`generate_schema`], including what the provider said.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratedSchema {
    pub schema: QuerySchema,
    pub prompt: Option<String>,
    pub provider_response: Option<String>,
    /// Why the provider path was not used, when the fallback produced the schema.
    pub fallback_reason: Option<String>,
}

pub fn generate_schema(
    question: &str,
    provider: &dyn CompletionProvider,
    kg: &KnowledgeGraph,
    config: &SchemaConfig,
) -> Result<GeneratedSchema, SchemaError> {
    let mut prompt = None;
    let mut provider_response = None;
    let provider_failure = if config.use_provider {
        let text = schema_prompt(question, kg, config);
        prompt = Some(text.clone());
        let request = CompletionRequest::new(RequestTag::Schema, text, config.max_tokens);
        match provider.complete(&request) {
            Ok(response) => {
                let parsed = parse_schema_text(&response.text);
                provider_response = Some(response.text);
                match parsed {
                    Ok(schema) => {
                        return Ok(GeneratedSchema {
                            schema,
                            prompt,
                            provider_response,
                            fallback_reason: None,
                        })
                    }
                    Err(e) => format!("unparseable provider schema: {e}"),
                }
            }
            Err(e) => format!("provider error: {e}"),
        }
    } else {
        "provider schema generation disabled".to_string()
    };

    match fallback_schema(question, kg) {
        Ok(schema) => Ok(GeneratedSchema {
            schema,
            prompt,
            provider_response,
            fallback_reason: Some(provider_failure),
        }),
        Err(e) => Err(SchemaError::Generation {
            provider: provider_failure,
            fallback: e.to_string(),
        }),
    }
}

/// Deterministic repair used when a hypothesis cannot be parsed: replace the
/// first unknown relation with the graph relation sharing the most tokens, or
/// else drop the least frequent chain-end step that keeps an anchor.
pub fn repair_schema(schema: &QuerySchema, kg: &KnowledgeGraph) -> Option<(QuerySchema, String)> {
    for (i, step) in schema.steps.iter().enumerate() {
        if kg.relation_id(&step.relation).is_some() {
            continue;
        }
        let wanted = word_token_set(&step.relation);
        let best = kg
            .relation_ids()
            .map(|r| {
                let overlap = word_token_set(kg.relation_name(r))
                    .intersection(&wanted)
                    .count();
                (overlap, std::cmp::Reverse(r))
            })
            .filter(|(overlap, _)| *overlap > 0)
            .max();
        if let Some((_, std::cmp::Reverse(r))) = best {
            let mut steps = schema.steps.clone();
            let replacement = kg.relation_name(r).to_string();
            let note = format!("replaced unknown relation {} with {replacement}", step.relation);
            steps[i].relation = replacement;
            if let Ok(repaired) = schema.with_steps(steps, schema.answer_slot.clone()) {
                return Some((repaired, note));
            }
        }
    }

    if schema.steps.len() < 2 {
        return None;
    }
    let order = schema.chain_order();
    let ends = [order[0], *order.last().expect("non-empty")];
    let mut options: Vec<(usize, usize, QuerySchema)> = Vec::new();
    for (end_index, end) in ends.iter().enumerate() {
        let step = &schema.steps[end.step];
        // The leaf is the slot that disappears with this step.
        let (leaf, inner) = match (end_index, end.forward) {
            (0, true) | (1, false) => (&step.subject, &step.object),
            _ => (&step.object, &step.subject),
        };
        let answer = if *leaf == schema.answer_slot {
            inner.clone()
        } else {
            schema.answer_slot.clone()
        };
        let steps: Vec<SchemaTriple> = schema
            .steps
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != end.step)
            .map(|(_, s)| s.clone())
            .collect();
        if let Ok(candidate) = schema.with_steps(steps, answer) {
            let frequency = kg
                .relation_id(&step.relation)
                .map_or(0, |r| kg.relation_frequency(r));
            options.push((frequency, end.step, candidate));
        }
    }
    options.sort_by_key(|(freq, step, _)| (*freq, std::cmp::Reverse(*step)));
    options.into_iter().next().map(|(_, step, candidate)| {
        let note = format!("dropped step {}", schema.steps[step].relation);
        (candidate, note)
    })
}
