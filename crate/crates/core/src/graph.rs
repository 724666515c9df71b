//! Immutable triple store with alias-based entity resolution.
//!
//! A [`KnowledgeGraph`] is built once from TSV lines and never mutated. Entity
//! and relation ids are dense and assigned in order of first appearance, so
//! re-serializing a graph in load order and reloading it reproduces the same
//! ids and indexes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::whitespace_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(subject: EntityId, relation: RelationId, object: EntityId) -> Self {
        Self {
            subject,
            relation,
            object,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Outgoing,
    Incoming,
    Both,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("triple line {line}: expected 3 tab-separated non-empty fields, found {found:?}")]
    MalformedTriple { line: usize, found: String },
    #[error("alias line {line}: expected 2 tab-separated non-empty fields, found {found:?}")]
    MalformedAlias { line: usize, found: String },
    #[error("alias line {line}: unknown canonical name {name:?}")]
    UnknownCanonical { line: usize, name: String },
    #[error("read failed at line {line}: {source}")]
    Io {
        line: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("entity id {0} is not in the graph")]
    UnknownEntity(u32),
    #[error("relation id {0} is not in the graph")]
    UnknownRelation(u32),
}

/// How an alias matched a surface string in [`KnowledgeGraph::resolve_ranked`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Exact,
    CaseInsensitive,
    TokenOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityMatch {
    pub entity: EntityId,
    pub kind: MatchKind,
    /// Shared whitespace tokens over surface tokens; 1.0 for exact and
    /// case-insensitive matches.
    pub score: f64,
}

impl EntityMatch {
    /// Total order used for ranking: match kind, then score descending, then id.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.kind
            .cmp(&other.kind)
            .then_with(|| other.score.total_cmp(&self.score))
            .then_with(|| self.entity.cmp(&other.entity))
    }
}

/// Read access shared by the full graph and extracted subgraphs.
///
/// All slices are sorted by `Triple`'s natural order.
pub trait GraphView {
    fn knowledge_graph(&self) -> &KnowledgeGraph;
    fn outgoing(&self, entity: EntityId) -> &[Triple];
    fn incoming(&self, entity: EntityId) -> &[Triple];
    fn with_relation(&self, relation: RelationId) -> &[Triple];
    /// Entities that may bind an unconstrained pattern node, ascending.
    fn entities(&self) -> Vec<EntityId>;
    fn contains(&self, triple: &Triple) -> bool;
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    entity_names: Vec<String>,
    entity_lookup: HashMap<String, EntityId>,
    relation_names: Vec<String>,
    relation_lookup: HashMap<String, RelationId>,
    aliases: BTreeMap<String, BTreeSet<EntityId>>,
    folded_aliases: HashMap<String, BTreeSet<EntityId>>,
    alias_tokens: HashMap<String, BTreeSet<String>>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    index_spo: Vec<Vec<Triple>>,
    index_pos: Vec<Vec<Triple>>,
    index_osp: Vec<Vec<Triple>>,
}

/// Accumulates triples and aliases before freezing them into a graph.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entity_names: Vec<String>,
    entity_lookup: HashMap<String, EntityId>,
    relation_names: Vec<String>,
    relation_lookup: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    aliases: BTreeMap<String, BTreeSet<EntityId>>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_lookup.get(name) {
            return id;
        }
        let id = EntityId(self.entity_names.len() as u32);
        self.entity_names.push(name.to_string());
        self.entity_lookup.insert(name.to_string(), id);
        id
    }

    fn relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_lookup.get(name) {
            return id;
        }
        let id = RelationId(self.relation_names.len() as u32);
        self.relation_names.push(name.to_string());
        self.relation_lookup.insert(name.to_string(), id);
        id
    }

    /// Adds a triple; duplicates are ignored.
    pub fn add_triple(&mut self, subject: &str, relation: &str, object: &str) -> &mut Self {
        let s = self.entity(subject);
        let r = self.relation(relation);
        let o = self.entity(object);
        let triple = Triple::new(s, r, o);
        if self.triple_set.insert(triple) {
            self.triples.push(triple);
        }
        self
    }

    /// Registers `alias` for an entity that already appears in some triple.
    /// Returns `false` when `canonical` is unknown.
    pub fn add_alias(&mut self, alias: &str, canonical: &str) -> bool {
        match self.entity_lookup.get(canonical) {
            Some(&id) => {
                self.aliases.entry(alias.to_string()).or_default().insert(id);
                true
            }
            None => false,
        }
    }

    pub fn build(mut self) -> KnowledgeGraph {
        for (i, name) in self.entity_names.iter().enumerate() {
            self.aliases
                .entry(name.clone())
                .or_default()
                .insert(EntityId(i as u32));
        }

        let mut folded_aliases: HashMap<String, BTreeSet<EntityId>> = HashMap::new();
        let mut alias_tokens: HashMap<String, BTreeSet<String>> = HashMap::new();
        for (alias, ids) in &self.aliases {
            folded_aliases
                .entry(alias.to_lowercase())
                .or_default()
                .extend(ids.iter().copied());
            for token in whitespace_tokens(alias) {
                alias_tokens.entry(token).or_default().insert(alias.clone());
            }
        }

        let n = self.entity_names.len();
        let m = self.relation_names.len();
        let mut index_spo = vec![Vec::new(); n];
        let mut index_pos = vec![Vec::new(); m];
        let mut index_osp = vec![Vec::new(); n];
        for &t in &self.triples {
            index_spo[t.subject.index()].push(t);
            index_pos[t.relation.index()].push(t);
            index_osp[t.object.index()].push(t);
        }
        for bucket in index_spo
            .iter_mut()
            .chain(index_pos.iter_mut())
            .chain(index_osp.iter_mut())
        {
            bucket.sort_unstable();
        }

        KnowledgeGraph {
            entity_names: self.entity_names,
            entity_lookup: self.entity_lookup,
            relation_names: self.relation_names,
            relation_lookup: self.relation_lookup,
            aliases: self.aliases,
            folded_aliases,
            alias_tokens,
            triples: self.triples,
            triple_set: self.triple_set,
            index_spo,
            index_pos,
            index_osp,
        }
    }
}

fn read_lines<R: BufRead>(
    source: R,
) -> impl Iterator<Item = Result<(usize, String), GraphError>> {
    source.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        match line {
            Err(source) => Some(Err(GraphError::Io {
                line: line_no,
                source,
            })),
            Ok(text) => {
                let text = text.strip_suffix('\r').unwrap_or(&text).to_string();
                if text.trim().is_empty() {
                    None
                } else {
                    Some(Ok((line_no, text)))
                }
            }
        }
    })
}

/// Loads a graph from `subject\trelation\tobject` lines and optional
/// `alias\tcanonical` lines. Blank lines are skipped.
pub fn load_kg<T: BufRead, A: BufRead>(
    triple_source: T,
    alias_source: Option<A>,
) -> Result<KnowledgeGraph, GraphError> {
    let mut builder = GraphBuilder::new();
    for item in read_lines(triple_source) {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(GraphError::MalformedTriple { line, found: text });
        }
        builder.add_triple(fields[0], fields[1], fields[2]);
    }
    if let Some(aliases) = alias_source {
        for item in read_lines(aliases) {
            let (line, text) = item?;
            let fields: Vec<&str> = text.split('\t').collect();
            if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
                return Err(GraphError::MalformedAlias { line, found: text });
            }
            if !builder.add_alias(fields[0], fields[1]) {
                return Err(GraphError::UnknownCanonical {
                    line,
                    name: fields[1].to_string(),
                });
            }
        }
    }
    Ok(builder.build())
}

impl KnowledgeGraph {
    /// Convenience constructor for in-memory triples.
    pub fn from_triples<'a, I>(triples: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut builder = GraphBuilder::new();
        for (s, r, o) in triples {
            builder.add_triple(s, r, o);
        }
        builder.build()
    }

    pub fn entity_count(&self) -> usize {
        self.entity_names.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_names.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// Triples in load order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entity_names[id.index()]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relation_names[id.index()]
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_lookup.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_lookup.get(name).copied()
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> + '_ {
        (0..self.relation_names.len() as u32).map(RelationId)
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entity_names.len() as u32).map(EntityId)
    }

    /// Number of triples carrying `relation`.
    pub fn relation_frequency(&self, relation: RelationId) -> usize {
        self.index_pos
            .get(relation.index())
            .map_or(0, Vec::len)
    }

    pub fn aliases(&self) -> &BTreeMap<String, BTreeSet<EntityId>> {
        &self.aliases
    }

    pub fn is_valid_entity(&self, id: EntityId) -> bool {
        id.index() < self.entity_names.len()
    }

    pub fn neighbors(
        &self,
        entity: EntityId,
        relation: Option<RelationId>,
        direction: Direction,
    ) -> Result<BTreeSet<Triple>, GraphError> {
        if !self.is_valid_entity(entity) {
            return Err(GraphError::UnknownEntity(entity.0));
        }
        if let Some(r) = relation {
            if r.index() >= self.relation_names.len() {
                return Err(GraphError::UnknownRelation(r.0));
            }
        }
        let keep = |t: &&Triple| relation.is_none_or(|r| t.relation == r);
        let mut out = BTreeSet::new();
        if matches!(direction, Direction::Outgoing | Direction::Both) {
            out.extend(self.index_spo[entity.index()].iter().filter(keep));
        }
        if matches!(direction, Direction::Incoming | Direction::Both) {
            out.extend(self.index_osp[entity.index()].iter().filter(keep));
        }
        Ok(out)
    }

    /// Ranked entity candidates for a surface string.
    pub fn resolve_entity(&self, surface: &str) -> Vec<EntityId> {
        self.resolve_ranked(surface)
            .into_iter()
            .map(|m| m.entity)
            .collect()
    }

    /// Ranked candidates with match details: exact alias hits first, then
    /// case-insensitive alias hits, then whitespace-token overlap.
    pub fn resolve_ranked(&self, surface: &str) -> Vec<EntityMatch> {
        let mut best: BTreeMap<EntityId, EntityMatch> = BTreeMap::new();
        let mut offer = |m: EntityMatch| {
            best.entry(m.entity)
                .and_modify(|cur| {
                    if m.rank_cmp(cur) == Ordering::Less {
                        *cur = m;
                    }
                })
                .or_insert(m);
        };

        if let Some(ids) = self.aliases.get(surface) {
            for &entity in ids {
                offer(EntityMatch {
                    entity,
                    kind: MatchKind::Exact,
                    score: 1.0,
                });
            }
        }
        if let Some(ids) = self.folded_aliases.get(&surface.to_lowercase()) {
            for &entity in ids {
                offer(EntityMatch {
                    entity,
                    kind: MatchKind::CaseInsensitive,
                    score: 1.0,
                });
            }
        }

        let surface_tokens = whitespace_tokens(surface);
        if !surface_tokens.is_empty() {
            let mut touched: BTreeSet<&String> = BTreeSet::new();
            for token in &surface_tokens {
                if let Some(aliases) = self.alias_tokens.get(token) {
                    touched.extend(aliases);
                }
            }
            for alias in touched {
                let shared = whitespace_tokens(alias)
                    .intersection(&surface_tokens)
                    .count();
                let score = shared as f64 / surface_tokens.len() as f64;
                for &entity in &self.aliases[alias] {
                    offer(EntityMatch {
                        entity,
                        kind: MatchKind::TokenOverlap,
                        score,
                    });
                }
            }
        }

        let mut ranked: Vec<EntityMatch> = best.into_values().collect();
        ranked.sort_by(EntityMatch::rank_cmp);
        ranked
    }

    /// Triples as TSV in load order, which reloads to identical ids.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(self.entity_name(t.subject));
            out.push('\t');
            out.push_str(self.relation_name(t.relation));
            out.push('\t');
            out.push_str(self.entity_name(t.object));
            out.push('\n');
        }
        out
    }

    /// Non-trivial aliases as sorted `alias\tcanonical` lines.
    pub fn aliases_tsv(&self) -> String {
        let mut out = String::new();
        for (alias, ids) in &self.aliases {
            for &id in ids {
                let canonical = self.entity_name(id);
                if canonical != alias {
                    out.push_str(alias);
                    out.push('\t');
                    out.push_str(canonical);
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn display_triple(&self, t: &Triple) -> String {
        format!(
            "{} {} {}",
            self.entity_name(t.subject),
            self.relation_name(t.relation),
            self.entity_name(t.object)
        )
    }
}

impl GraphView for KnowledgeGraph {
    fn knowledge_graph(&self) -> &KnowledgeGraph {
        self
    }

    fn outgoing(&self, entity: EntityId) -> &[Triple] {
        self.index_spo.get(entity.index()).map_or(&[], Vec::as_slice)
    }

    fn incoming(&self, entity: EntityId) -> &[Triple] {
        self.index_osp.get(entity.index()).map_or(&[], Vec::as_slice)
    }

    fn with_relation(&self, relation: RelationId) -> &[Triple] {
        self.index_pos
            .get(relation.index())
            .map_or(&[], Vec::as_slice)
    }

    fn entities(&self) -> Vec<EntityId> {
        self.entity_ids().collect()
    }

    fn contains(&self, triple: &Triple) -> bool {
        self.triple_set.contains(triple)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOY: &str = "alice\tfriend_of\tbob\nbob\tworks_at\tacme\nacme\tlocated_in\tparis\n";

    fn toy() -> KnowledgeGraph {
        load_kg(TOY.as_bytes(), None::<&[u8]>).unwrap()
    }

    fn id(kg: &KnowledgeGraph, name: &str) -> EntityId {
        kg.entity_id(name).unwrap()
    }

    fn names(kg: &KnowledgeGraph, set: &BTreeSet<Triple>) -> Vec<String> {
        set.iter().map(|t| kg.display_triple(t)).collect()
    }

    #[test]
    fn empty_stream_gives_empty_graph() {
        let kg = load_kg("".as_bytes(), None::<&[u8]>).unwrap();
        assert_eq!(kg.entity_count(), 0);
        assert_eq!(kg.triple_count(), 0);
    }

    #[test]
    fn toy_counts() {
        let kg = toy();
        assert_eq!(kg.entity_count(), 4);
        assert_eq!(kg.relation_count(), 3);
        assert_eq!(kg.triple_count(), 3);
        assert_eq!(kg.entity_id("alice"), Some(EntityId(0)));
        assert_eq!(kg.entity_id("paris"), Some(EntityId(3)));
        assert_eq!(kg.relation_id("located_in"), Some(RelationId(2)));
    }

    #[test]
    fn duplicate_lines_collapse() {
        let kg = load_kg("a\tr\tb\na\tr\tb\n".as_bytes(), None::<&[u8]>).unwrap();
        assert_eq!(kg.triple_count(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = load_kg("a\tr\tb\na\tr\n".as_bytes(), None::<&[u8]>).unwrap_err();
        assert!(matches!(err, GraphError::MalformedTriple { line: 2, .. }));
        let err = load_kg("a\tr\tb\tc\n".as_bytes(), None::<&[u8]>).unwrap_err();
        assert!(matches!(err, GraphError::MalformedTriple { line: 1, .. }));
    }

    #[test]
    fn alias_to_unknown_canonical_is_an_error() {
        let err = load_kg(TOY.as_bytes(), Some("al\tzed\n".as_bytes())).unwrap_err();
        assert!(matches!(err, GraphError::UnknownCanonical { line: 1, .. }));
    }

    #[test]
    fn neighbors_on_toy_graph() {
        let kg = toy();
        let out = kg.neighbors(id(&kg, "alice"), None, Direction::Outgoing).unwrap();
        assert_eq!(names(&kg, &out), ["alice friend_of bob"]);
        let out = kg.neighbors(id(&kg, "paris"), None, Direction::Outgoing).unwrap();
        assert!(out.is_empty());
        let both = kg.neighbors(id(&kg, "bob"), None, Direction::Both).unwrap();
        assert_eq!(names(&kg, &both), ["alice friend_of bob", "bob works_at acme"]);
        let filtered = kg
            .neighbors(id(&kg, "bob"), kg.relation_id("works_at"), Direction::Both)
            .unwrap();
        assert_eq!(names(&kg, &filtered), ["bob works_at acme"]);
    }

    #[test]
    fn neighbors_rejects_invalid_id() {
        let kg = toy();
        assert!(matches!(
            kg.neighbors(EntityId(99), None, Direction::Both),
            Err(GraphError::UnknownEntity(99))
        ));
    }

    #[test]
    fn resolve_exact_case_insensitive_and_alias() {
        let kg = load_kg(TOY.as_bytes(), Some("acme corporation\tacme\n".as_bytes())).unwrap();
        assert_eq!(kg.resolve_entity("alice"), [id(&kg, "alice")]);
        assert_eq!(kg.resolve_entity("ACME"), [id(&kg, "acme")]);
        assert_eq!(kg.resolve_entity("acme corporation"), [id(&kg, "acme")]);
        assert!(kg.resolve_entity("nobody").is_empty());
        assert!(kg.resolve_entity("").is_empty());
    }

    #[test]
    fn resolve_ranks_by_tier_then_overlap_then_id() {
        let kg = KnowledgeGraph::from_triples([
            ("new york", "in", "usa"),
            ("york", "in", "england"),
            ("new jersey", "in", "usa"),
        ]);
        let ranked = kg.resolve_ranked("York");
        // "york" folded matches entity york exactly; "new york" overlaps 1/1.
        assert_eq!(ranked[0].entity, id(&kg, "york"));
        assert_eq!(ranked[0].kind, MatchKind::CaseInsensitive);
        assert_eq!(ranked[1].entity, id(&kg, "new york"));

        let ranked = kg.resolve_entity("new york city");
        assert_eq!(ranked, [id(&kg, "new york"), id(&kg, "york"), id(&kg, "new jersey")]);
    }

    #[test]
    fn tsv_round_trip_preserves_ids() {
        let kg = load_kg(
            "a\tr\tb\nc\ts\td\na\tr\te\nb\tt\tc\n".as_bytes(),
            Some("the a\ta\n".as_bytes()),
        )
        .unwrap();
        let tsv = kg.to_tsv();
        let aliases = kg.aliases_tsv();
        let again = load_kg(tsv.as_bytes(), Some(aliases.as_bytes())).unwrap();
        assert_eq!(kg, again);
    }

    fn arb_triples() -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
        prop::collection::vec((0u8..8, 0u8..4, 0u8..8), 0..=50)
    }

    fn build(raw: &[(u8, u8, u8)]) -> KnowledgeGraph {
        let owned: Vec<(String, String, String)> = raw
            .iter()
            .map(|(s, r, o)| (format!("e{s}"), format!("r{r}"), format!("e{o}")))
            .collect();
        KnowledgeGraph::from_triples(
            owned.iter().map(|(s, r, o)| (s.as_str(), r.as_str(), o.as_str())),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn neighbors_match_brute_force(raw in arb_triples()) {
            let kg = build(&raw);
            for e in kg.entity_ids() {
                let mut rels: Vec<Option<RelationId>> = vec![None];
                rels.extend(kg.relation_ids().map(Some));
                for rel in rels {
                    for dir in [Direction::Outgoing, Direction::Incoming, Direction::Both] {
                        let expected: BTreeSet<Triple> = kg.triples().iter().copied().filter(|t| {
                            let touches = match dir {
                                Direction::Outgoing => t.subject == e,
                                Direction::Incoming => t.object == e,
                                Direction::Both => t.subject == e || t.object == e,
                            };
                            touches && rel.is_none_or(|r| t.relation == r)
                        }).collect();
                        prop_assert_eq!(kg.neighbors(e, rel, dir).unwrap(), expected);
                    }
                }
            }
        }

        #[test]
        fn round_trip_is_identity(raw in arb_triples()) {
            let kg = build(&raw);
            let again = load_kg(kg.to_tsv().as_bytes(), Some(kg.aliases_tsv().as_bytes())).unwrap();
            prop_assert_eq!(kg, again);
        }

        #[test]
        fn resolve_ranking_is_a_total_order(raw in arb_triples(), surface in "(e[0-7] ?){0,3}") {
            let kg = build(&raw);
            let ranked = kg.resolve_ranked(&surface);
            for w in ranked.windows(2) {
                prop_assert_eq!(w[0].rank_cmp(&w[1]), Ordering::Less);
                prop_assert_eq!(w[1].rank_cmp(&w[0]), Ordering::Greater);
            }
            prop_assert_eq!(ranked, kg.resolve_ranked(&surface));
        }
    }
}
