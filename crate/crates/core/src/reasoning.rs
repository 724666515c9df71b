//! Question answering over a knowledge graph: direct query execution, stepwise
//! walks over a subgraph, a hypothesize-and-verify repair loop, and
//! confidence-weighted integration of the resulting paths.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cypher::{execute, render, sort_rows_by_name, BindingTable};
use crate::graph::{EntityId, GraphView, KnowledgeGraph, Triple};
use crate::llm::{CompletionProvider, CompletionRequest, RequestTag};
use crate::schema::{
    compile_schema, generate_schema, parse_schema_text, repair_schema, validate_schema, ChainStep,
    QuerySchema, SchemaConfig, SchemaTriple,
};
use crate::subgraph::{default_hop_budget, generate_subgraph, Subgraph};

#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningStep {
    pub schema_step: SchemaTriple,
    /// Distinct (subject slot, object slot) bindings surviving this step.
    pub bindings: BindingTable,
    pub evidence: Vec<Triple>,
    pub step_confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathOrigin {
    Direct,
    Stepwise,
    Collaborative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningPath {
    pub schema: QuerySchema,
    pub steps: Vec<ReasoningStep>,
    /// Ranked by `candidate_scores` descending, then canonical name.
    pub answer_candidates: Vec<EntityId>,
    /// Share of complete bindings that end in each candidate.
    pub candidate_scores: Vec<f64>,
    /// Product of the completed steps' confidences.
    pub confidence: f64,
    pub origin: PathOrigin,
    /// Index into the chain order of the first step with no bindings.
    pub failed_at: Option<usize>,
}

impl ReasoningPath {
    pub fn is_empty(&self) -> bool {
        self.answer_candidates.is_empty()
    }

    /// Path with a single unscored candidate and no steps; used for answers
    /// taken directly from the provider.
    pub fn provider_path(schema: QuerySchema, entity: EntityId) -> Self {
        Self {
            schema,
            steps: Vec::new(),
            answer_candidates: vec![entity],
            candidate_scores: vec![1.0],
            confidence: 1.0,
            origin: PathOrigin::Direct,
            failed_at: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerStatus {
    Answered,
    Abstained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub entities: Vec<EntityId>,
    pub scores: Vec<f64>,
    pub support: Vec<ReasoningPath>,
    pub status: AnswerStatus,
}

impl Answer {
    pub fn abstained() -> Self {
        Self {
            entities: Vec::new(),
            scores: Vec::new(),
            support: Vec::new(),
            status: AnswerStatus::Abstained,
        }
    }

    pub fn is_answered(&self) -> bool {
        self.status == AnswerStatus::Answered
    }

    pub fn names<'k>(&self, kg: &'k KnowledgeGraph) -> Vec<&'k str> {
        self.entities.iter().map(|e| kg.entity_name(*e)).collect()
    }
}

/// Vote weights for a path's top candidate and for its other candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankWeights {
    pub top: f64,
    pub other: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        Self { top: 1.0, other: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoSchema,
    NoRetrieval,
    IoPrompt,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoSchema,
        Variant::NoRetrieval,
        Variant::IoPrompt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSchema => "no_schema",
            Variant::NoRetrieval => "no_retrieval",
            Variant::IoPrompt => "io_prompt",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| format!("unknown variant `{s}` (expected full, no_schema, no_retrieval or io_prompt)"))
    }
}

pub const DEFAULT_ANSWER_TEMPLATE: &str = "Answer the question using the knowledge graph evidence retrieved for its query schema. Reply with exactly one of the candidate entity names.

Question: {question}
Schema:
{schema}
Evidence:
{evidence}
Candidates: {candidates}
Answer:
";

pub const DEFAULT_SCHEMA_ONLY_TEMPLATE: &str = "Answer the question by following the reasoning path described by the query schema. Reply with one entity name.

Question: {question}
Schema:
{schema}
Answer:
";

pub const DEFAULT_IO_TEMPLATE: &str = "Answer the question with one entity name.

Question: {question}
Answer:
";

pub const DEFAULT_HYPOTHESIS_TEMPLATE: &str = "The query schema below did not yield a verified answer from the knowledge graph. Propose a corrected schema in the same format: one `(slot) relation (slot).` step per line and a final `ANSWER <slot>` line.

Question: {question}
Failed schema:
{schema}
Diagnostics:
{diagnostics}
Revised schema:
";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub schema: SchemaConfig,
    /// Defaults to one more than the schema's step count.
    pub hop_budget: Option<usize>,
    pub relevance_threshold: f64,
    pub max_iterations: usize,
    pub weights: RankWeights,
    pub answer_max_tokens: u32,
    pub answer_template: String,
    pub schema_only_template: String,
    pub io_template: String,
    pub hypothesis_template: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            schema: SchemaConfig::default(),
            hop_budget: None,
            relevance_threshold: 0.0,
            max_iterations: 3,
            weights: RankWeights::default(),
            answer_max_tokens: 64,
            answer_template: DEFAULT_ANSWER_TEMPLATE.to_string(),
            schema_only_template: DEFAULT_SCHEMA_ONLY_TEMPLATE.to_string(),
            io_template: DEFAULT_IO_TEMPLATE.to_string(),
            hypothesis_template: DEFAULT_HYPOTHESIS_TEMPLATE.to_string(),
        }
    }
}

impl PipelineConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    fn hop_budget_for(&self, schema: &QuerySchema) -> usize {
        self.hop_budget.unwrap_or_else(|| default_hop_budget(schema))
    }
}

fn fill(template: &str, fields: &[(&str, &str)]) -> String {
    fields.iter().fold(template.to_string(), |acc, (key, value)| {
        acc.replace(&format!("{{{key}}}"), value)
    })
}

/// Resolves the first non-empty line of a provider reply to a graph entity.
pub fn reply_entity(kg: &KnowledgeGraph, reply: &str) -> Option<EntityId> {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = line
        .strip_prefix("Answer:")
        .or_else(|| line.strip_prefix("answer:"))
        .unwrap_or(line);
    let line = line.trim().trim_matches(|c: char| matches!(c, '.' | '"' | '\'' | '`' | '*'));
    kg.resolve_entity(line.trim()).first().copied()
}

/// Walks the schema chain over `view`, joining one step at a time from the
/// start slot. Each step keeps only bindings consistent with every earlier
/// step and with the anchors.
pub fn walk_schema<G: GraphView + ?Sized>(
    view: &G,
    schema: &QuerySchema,
    origin: PathOrigin,
) -> ReasoningPath {
    let kg = view.knowledge_graph();
    let slot_index = |name: &str| {
        schema
            .slots
            .iter()
            .position(|s| s.name == name)
            .expect("step slots belong to the schema")
    };
    let mut path = ReasoningPath {
        schema: schema.clone(),
        steps: Vec::new(),
        answer_candidates: Vec::new(),
        candidate_scores: Vec::new(),
        confidence: 1.0,
        origin,
        failed_at: None,
    };

    let mut pins: Vec<Option<EntityId>> = vec![None; schema.slots.len()];
    for (i, slot) in schema.slots.iter().enumerate() {
        if let Some(name) = &slot.binding {
            match kg.resolve_entity(name).first() {
                Some(&e) => pins[i] = Some(e),
                None => {
                    path.failed_at = Some(0);
                    return path;
                }
            }
        }
    }

    let mut rows: Vec<Vec<Option<EntityId>>> = vec![vec![None; schema.slots.len()]];
    for (k, ChainStep { step, forward }) in schema.chain_order().into_iter().enumerate() {
        let st = &schema.steps[step];
        let (s_slot, o_slot) = (slot_index(&st.subject), slot_index(&st.object));
        let new_slot = if forward { o_slot } else { s_slot };
        let Some(relation) = kg.relation_id(&st.relation) else {
            path.failed_at = Some(k);
            return path;
        };

        let mut next: BTreeSet<Vec<Option<EntityId>>> = BTreeSet::new();
        let mut evidence: BTreeSet<Triple> = BTreeSet::new();
        for row in &rows {
            let s_val = row[s_slot].or(pins[s_slot]);
            let o_val = row[o_slot].or(pins[o_slot]);
            let pool: &[Triple] = match (s_val, o_val) {
                (Some(s), _) => view.outgoing(s),
                (None, Some(o)) => view.incoming(o),
                (None, None) => view.with_relation(relation),
            };
            for t in pool {
                if t.relation != relation
                    || s_val.is_some_and(|s| s != t.subject)
                    || o_val.is_some_and(|o| o != t.object)
                {
                    continue;
                }
                let mut extended = row.clone();
                extended[s_slot] = Some(t.subject);
                extended[o_slot] = Some(t.object);
                next.insert(extended);
                evidence.insert(*t);
            }
        }
        if next.is_empty() {
            path.failed_at = Some(k);
            return path;
        }
        rows = next.into_iter().collect();

        let distinct_new: BTreeSet<EntityId> = rows.iter().filter_map(|r| r[new_slot]).collect();
        let step_confidence = 1.0 / distinct_new.len() as f64;
        path.confidence *= step_confidence;
        let pairs = rows
            .iter()
            .map(|r| vec![r[s_slot].expect("bound"), r[o_slot].expect("bound")]);
        path.steps.push(ReasoningStep {
            schema_step: st.clone(),
            bindings: BindingTable {
                columns: vec![st.subject.clone(), st.object.clone()],
                rows: sort_rows_by_name(kg, pairs),
            },
            evidence: evidence.into_iter().collect(),
            step_confidence,
        });
    }

    let answer_index = slot_index(&schema.answer_slot);
    let mut counts: BTreeMap<EntityId, usize> = BTreeMap::new();
    for row in &rows {
        *counts.entry(row[answer_index].expect("chain covers every slot")).or_default() += 1;
    }
    let mut ranked: Vec<(EntityId, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| kg.entity_name(a.0).cmp(kg.entity_name(b.0)))
            .then(a.0.cmp(&b.0))
    });
    path.answer_candidates = ranked.iter().map(|(e, _)| *e).collect();
    path.candidate_scores = ranked
        .iter()
        .map(|(_, n)| *n as f64 / rows.len() as f64)
        .collect();
    path
}

pub fn stepwise_reason(schema: &QuerySchema, subgraph: &Subgraph) -> ReasoningPath {
    walk_schema(subgraph, schema, PathOrigin::Stepwise)
}

/// True iff the answer is non-empty and every entity binds the answer slot of
/// the compiled schema query on `view`.
pub fn validate_answer<G: GraphView + ?Sized>(answer: &Answer, schema: &QuerySchema, view: &G) -> bool {
    if !answer.is_answered() || answer.entities.is_empty() {
        return false;
    }
    let Ok(table) = execute(view, &compile_schema(schema)) else {
        return false;
    };
    let bound: BTreeSet<EntityId> = table.column_values(&schema.answer_slot).into_iter().collect();
    answer.entities.iter().all(|e| bound.contains(e))
}

/// Per-entity score: sum over paths of confidence times the rank weight.
pub fn integrate_paths(kg: &KnowledgeGraph, paths: &[ReasoningPath], weights: RankWeights) -> Answer {
    let mut scores: BTreeMap<EntityId, f64> = BTreeMap::new();
    let mut support = Vec::new();
    for path in paths.iter().filter(|p| !p.is_empty()) {
        for (i, &e) in path.answer_candidates.iter().enumerate() {
            let weight = if i == 0 { weights.top } else { weights.other };
            *scores.entry(e).or_default() += path.confidence * weight;
        }
        support.push(path.clone());
    }
    let mut ranked: Vec<(EntityId, f64)> = scores.into_iter().filter(|(_, s)| *s > 0.0).collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| kg.entity_name(a.0).cmp(kg.entity_name(b.0)))
            .then(a.0.cmp(&b.0))
    });
    if ranked.is_empty() {
        return Answer::abstained();
    }
    Answer {
        entities: ranked.iter().map(|(e, _)| *e).collect(),
        scores: ranked.iter().map(|(_, s)| *s).collect(),
        support,
        status: AnswerStatus::Answered,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectOutcome {
    pub path: ReasoningPath,
    pub answer: Answer,
    pub query: String,
    pub table: Option<BindingTable>,
    pub error: Option<String>,
    pub prompt: Option<String>,
    pub provider_reply: Option<String>,
    /// Candidate the provider picked, when its reply named one.
    pub provider_choice: Option<EntityId>,
}

/// Executes the compiled schema on the full graph and lets the provider pick
/// among the resulting candidates. The provider is advisory: a reply naming
/// no candidate, or an error, leaves the execution ranking unchanged.
pub fn direct_reason(
    question: &str,
    schema: &QuerySchema,
    kg: &KnowledgeGraph,
    provider: &dyn CompletionProvider,
    config: &PipelineConfig,
) -> DirectOutcome {
    let query = compile_schema(schema);
    let query_text = render(&query);
    let mut path = walk_schema(kg, schema, PathOrigin::Direct);
    let mut outcome = DirectOutcome {
        path: path.clone(),
        answer: Answer::abstained(),
        query: query_text,
        table: None,
        error: None,
        prompt: None,
        provider_reply: None,
        provider_choice: None,
    };
    let table = match execute(kg, &query) {
        Ok(table) => table,
        Err(e) => {
            outcome.error = Some(e.to_string());
            return outcome;
        }
    };
    let answers = table.column_values(&schema.answer_slot);
    outcome.table = Some(table);
    if answers.is_empty() {
        return outcome;
    }

    // The walk and the query share semantics; the query's answer set is
    // authoritative and the walk supplies the ranking.
    let answer_set: BTreeSet<EntityId> = answers.iter().copied().collect();
    let mut ranked: Vec<(EntityId, f64)> = path
        .answer_candidates
        .iter()
        .zip(&path.candidate_scores)
        .filter(|(e, _)| answer_set.contains(e))
        .map(|(e, s)| (*e, *s))
        .collect();
    for e in answers {
        if !ranked.iter().any(|(r, _)| *r == e) {
            ranked.push((e, 0.0));
        }
    }

    let evidence: BTreeSet<Triple> = path.steps.iter().flat_map(|s| s.evidence.iter().copied()).collect();
    let evidence_text = evidence
        .iter()
        .map(|t| kg.display_triple(t))
        .collect::<Vec<_>>()
        .join("\n");
    let candidates_text = ranked
        .iter()
        .map(|(e, _)| kg.entity_name(*e))
        .collect::<Vec<_>>()
        .join(", ");
    let prompt = fill(
        &config.answer_template,
        &[
            ("question", question),
            ("schema", &schema.to_text()),
            ("evidence", &evidence_text),
            ("candidates", &candidates_text),
        ],
    );
    let request = CompletionRequest::new(RequestTag::Answer, prompt.clone(), config.answer_max_tokens);
    outcome.prompt = Some(prompt);
    if let Ok(response) = provider.complete(&request) {
        let choice = reply_entity(kg, &response.text);
        outcome.provider_reply = Some(response.text);
        if let Some(pos) = choice.and_then(|c| ranked.iter().position(|(e, _)| *e == c)) {
            let chosen = ranked.remove(pos);
            ranked.insert(0, chosen);
            outcome.provider_choice = choice;
        }
    }

    path.answer_candidates = ranked.iter().map(|(e, _)| *e).collect();
    path.candidate_scores = ranked.iter().map(|(_, s)| *s).collect();
    outcome.answer = integrate_paths(kg, std::slice::from_ref(&path), config.weights);
    outcome.path = path;
    outcome
}

/// Human-readable reasons a schema failed, fed back to the provider.
pub fn diagnose(schema: &QuerySchema, kg: &KnowledgeGraph, path: Option<&ReasoningPath>) -> Vec<String> {
    let mut out: Vec<String> = validate_schema(schema, kg).iter().map(|i| i.to_string()).collect();
    if let Some(k) = path.and_then(|p| p.failed_at) {
        let order = schema.chain_order();
        if let Some(step) = order.get(k) {
            out.push(format!(
                "no-bindings step {} ({})",
                k + 1,
                schema.steps[step.step].relation
            ));
        }
    }
    if out.is_empty() {
        out.push("answer-not-verified".to_string());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Revision {
    Hypothesis,
    Repair,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Iteration {
    pub revision: Revision,
    pub schema: String,
    pub note: Option<String>,
    pub query: String,
    pub error: Option<String>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollaborativeOutcome {
    /// Every path produced, in iteration order.
    pub paths: Vec<ReasoningPath>,
    pub iterations: Vec<Iteration>,
    /// Index into `paths` of the path that validated, if any.
    pub validated: Option<usize>,
}

/// Iteratively revises the schema: the provider proposes a hypothesis, and an
/// unparseable one is replaced by a deterministic repair of the previous
/// schema. Each revision is walked over a fresh subgraph; the loop stops at
/// the first validated answer or when no revision is possible.
pub fn collaborative_reason(
    question: &str,
    schema: &QuerySchema,
    diagnostics: Vec<String>,
    kg: &KnowledgeGraph,
    provider: &dyn CompletionProvider,
    config: &PipelineConfig,
) -> CollaborativeOutcome {
    let mut outcome = CollaborativeOutcome {
        paths: Vec::new(),
        iterations: Vec::new(),
        validated: None,
    };
    let mut current = schema.clone();
    let mut diagnostics = diagnostics;
    for _ in 0..config.max_iterations {
        let prompt = fill(
            &config.hypothesis_template,
            &[
                ("question", question),
                ("schema", &current.to_text()),
                ("diagnostics", &diagnostics.join("\n")),
            ],
        );
        let request = CompletionRequest::new(RequestTag::Hypothesis, prompt, config.schema.max_tokens);
        let hypothesis = provider
            .complete(&request)
            .ok()
            .and_then(|r| parse_schema_text(&r.text).ok());
        let (next, revision, note) = match hypothesis {
            Some(s) => (s, Revision::Hypothesis, None),
            None => match repair_schema(&current, kg) {
                Some((s, note)) => (s, Revision::Repair, Some(note)),
                None => break,
            },
        };

        let mut record = Iteration {
            revision,
            schema: next.to_text(),
            note,
            query: render(&compile_schema(&next)),
            error: None,
            valid: false,
        };
        match generate_subgraph(kg, question, &next, config.hop_budget_for(&next), config.relevance_threshold) {
            Ok(subgraph) => {
                let path = walk_schema(&subgraph, &next, PathOrigin::Collaborative);
                let answer = integrate_paths(kg, std::slice::from_ref(&path), config.weights);
                record.valid = validate_answer(&answer, &next, &subgraph);
                diagnostics = diagnose(&next, kg, Some(&path));
                outcome.paths.push(path);
            }
            Err(e) => {
                record.error = Some(e.to_string());
                diagnostics = vec![e.to_string()];
            }
        }
        let valid = record.valid;
        outcome.iterations.push(record);
        current = next;
        if valid {
            outcome.validated = Some(outcome.paths.len() - 1);
            break;
        }
    }
    outcome
}

#[derive(Debug, Clone)]
pub struct QuestionOutcome {
    pub answer: Answer,
    /// Structured record of every stage, as emitted by `explain`.
    pub trace: Value,
    /// Schema under which the answer was verified.
    pub final_schema: Option<QuerySchema>,
}

fn triple_json(kg: &KnowledgeGraph, t: &Triple) -> Value {
    json!([
        kg.entity_name(t.subject),
        kg.relation_name(t.relation),
        kg.entity_name(t.object)
    ])
}

fn table_json(kg: &KnowledgeGraph, table: &BindingTable) -> Value {
    json!({ "columns": table.columns, "rows": table.named_rows(kg) })
}

pub fn path_json(kg: &KnowledgeGraph, path: &ReasoningPath) -> Value {
    json!({
        "origin": path.origin,
        "schema": path.schema.to_text(),
        "confidence": path.confidence,
        "failed_at": path.failed_at,
        "candidates": path
            .answer_candidates
            .iter()
            .zip(&path.candidate_scores)
            .map(|(e, s)| json!({ "entity": kg.entity_name(*e), "score": s }))
            .collect::<Vec<_>>(),
        "steps": path.steps.iter().map(|s| json!({
            "step": format!("({}) {} ({})", s.schema_step.subject, s.schema_step.relation, s.schema_step.object),
            "confidence": s.step_confidence,
            "bindings": table_json(kg, &s.bindings),
            "evidence": s.evidence.iter().map(|t| triple_json(kg, t)).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

pub fn answer_json(kg: &KnowledgeGraph, answer: &Answer) -> Value {
    json!({
        "status": answer.status,
        "entities": answer.names(kg),
        "scores": answer.scores,
        "support": answer.support.iter().map(|p| p.origin).collect::<Vec<_>>(),
    })
}

fn subgraph_json(kg: &KnowledgeGraph, subgraph: &Subgraph, hop_budget: usize, threshold: f64) -> Value {
    json!({
        "stage": "subgraph",
        "hop_budget": hop_budget,
        "threshold": threshold,
        "seeds": subgraph.seeds().iter().map(|e| kg.entity_name(*e)).collect::<Vec<_>>(),
        "triples": subgraph.triples().iter().map(|t| {
            let p = subgraph.provenance(t).expect("retained triple");
            json!({ "triple": triple_json(kg, t), "hop": p.hop, "score": p.score })
        }).collect::<Vec<_>>(),
    })
}

struct Trace<'k> {
    kg: &'k KnowledgeGraph,
    question: String,
    variant: Variant,
    stages: Vec<Value>,
}

impl Trace<'_> {
    fn finish(
        self,
        answer: Answer,
        final_schema: Option<QuerySchema>,
        failure_stage: Option<&str>,
    ) -> QuestionOutcome {
        let trace = json!({
            "question": self.question,
            "variant": self.variant,
            "stages": self.stages,
            "answer": answer_json(self.kg, &answer),
            "final_schema": final_schema.as_ref().map(QuerySchema::to_text),
            "failure_stage": if answer.is_answered() { None } else { failure_stage },
        });
        QuestionOutcome {
            answer,
            trace,
            final_schema,
        }
    }
}

/// Answers from the provider alone; the reply is clamped to a graph entity.
fn provider_only(
    question: &str,
    schema: Option<&QuerySchema>,
    kg: &KnowledgeGraph,
    provider: &dyn CompletionProvider,
    config: &PipelineConfig,
    trace: &mut Trace,
) -> Answer {
    let prompt = match schema {
        Some(s) => fill(
            &config.schema_only_template,
            &[("question", question), ("schema", &s.to_text())],
        ),
        None => fill(&config.io_template, &[("question", question)]),
    };
    let request = CompletionRequest::new(RequestTag::Answer, prompt.clone(), config.answer_max_tokens);
    let (reply, error) = match provider.complete(&request) {
        Ok(r) => (Some(r.text), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let entity = reply.as_deref().and_then(|r| reply_entity(kg, r));
    trace.stages.push(json!({
        "stage": "provider_answer",
        "prompt": prompt,
        "reply": reply,
        "error": error,
        "resolved": entity.map(|e| kg.entity_name(e)),
    }));
    match (entity, schema) {
        (Some(e), Some(s)) => integrate_paths(kg, &[ReasoningPath::provider_path(s.clone(), e)], config.weights),
        (Some(e), None) => Answer {
            entities: vec![e],
            scores: vec![1.0],
            support: Vec::new(),
            status: AnswerStatus::Answered,
        },
        (None, _) => Answer::abstained(),
    }
}

/// Runs the pipeline for one question under `config.variant`.
pub fn answer_question(
    question: &str,
    kg: &KnowledgeGraph,
    provider: &dyn CompletionProvider,
    config: &PipelineConfig,
) -> QuestionOutcome {
    let mut trace = Trace {
        kg,
        question: question.to_string(),
        variant: config.variant,
        stages: Vec::new(),
    };

    if config.variant == Variant::IoPrompt {
        let answer = provider_only(question, None, kg, provider, config, &mut trace);
        return trace.finish(answer, None, Some("provider_answer"));
    }

    let schema_config = SchemaConfig {
        use_provider: config.variant != Variant::NoSchema,
        ..config.schema.clone()
    };
    let generated = match generate_schema(question, provider, kg, &schema_config) {
        Ok(g) => g,
        Err(e) => {
            trace.stages.push(json!({ "stage": "schema", "error": e.to_string() }));
            return trace.finish(Answer::abstained(), None, Some("schema"));
        }
    };
    let schema = generated.schema;
    trace.stages.push(json!({
        "stage": "schema",
        "source": schema.source,
        "text": schema.to_text(),
        "provider_response": generated.provider_response,
        "fallback_reason": generated.fallback_reason,
        "issues": validate_schema(&schema, kg).iter().map(ToString::to_string).collect::<Vec<_>>(),
    }));

    if config.variant == Variant::NoRetrieval {
        let answer = provider_only(question, Some(&schema), kg, provider, config, &mut trace);
        let final_schema = answer.is_answered().then(|| schema.clone());
        return trace.finish(answer, final_schema, Some("provider_answer"));
    }

    let hop_budget = config.hop_budget_for(&schema);
    let subgraph = generate_subgraph(kg, question, &schema, hop_budget, config.relevance_threshold);
    match &subgraph {
        Ok(sub) => trace
            .stages
            .push(subgraph_json(kg, sub, hop_budget, config.relevance_threshold)),
        Err(e) => trace
            .stages
            .push(json!({ "stage": "subgraph", "error": e.to_string() })),
    }

    let direct = direct_reason(question, &schema, kg, provider, config);
    trace.stages.push(json!({
        "stage": "direct",
        "query": direct.query,
        "result": direct.table.as_ref().map(|t| table_json(kg, t)),
        "error": direct.error,
        "provider_reply": direct.provider_reply,
        "provider_choice": direct.provider_choice.map(|e| kg.entity_name(e)),
        "path": path_json(kg, &direct.path),
    }));

    let mut diagnostics = diagnose(&schema, kg, Some(&direct.path));
    if let Ok(sub) = &subgraph {
        let valid = validate_answer(&direct.answer, &schema, sub);
        trace
            .stages
            .push(json!({ "stage": "validate", "target": "direct", "valid": valid }));
        if valid {
            return trace.finish(direct.answer, Some(schema), None);
        }

        let path = stepwise_reason(&schema, sub);
        let answer = integrate_paths(kg, std::slice::from_ref(&path), config.weights);
        let valid = validate_answer(&answer, &schema, sub);
        trace.stages.push(json!({ "stage": "stepwise", "path": path_json(kg, &path) }));
        trace
            .stages
            .push(json!({ "stage": "validate", "target": "stepwise", "valid": valid }));
        if valid {
            let answer = integrate_paths(kg, &[path], config.weights);
            trace.stages.push(json!({ "stage": "integrate", "paths": 1 }));
            return trace.finish(answer, Some(schema), None);
        }
        diagnostics = diagnose(&schema, kg, Some(&path));
    }

    let collab = collaborative_reason(question, &schema, diagnostics, kg, provider, config);
    trace.stages.push(json!({
        "stage": "collaborative",
        "iterations": collab.iterations,
        "paths": collab.paths.iter().map(|p| path_json(kg, p)).collect::<Vec<_>>(),
    }));
    let Some(index) = collab.validated else {
        return trace.finish(Answer::abstained(), None, Some("collaborative"));
    };
    let validated = &collab.paths[index];
    let answer = integrate_paths(kg, std::slice::from_ref(validated), config.weights);
    trace.stages.push(json!({ "stage": "integrate", "paths": 1 }));
    let final_schema = validated.schema.clone();
    trace.finish(answer, Some(final_schema), None)
}
