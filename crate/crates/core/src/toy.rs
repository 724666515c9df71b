//! The bundled toy benchmark: a small graph, 20 questions and a provider
//! script. Questions with ids `ans-*` are answerable from the graph; `unk-*`
//! questions are not.

use crate::eval::{load_dataset, Dataset, EvalRecord};
use crate::graph::{load_kg, KnowledgeGraph};
use crate::llm::Script;

pub const KG_TSV: &str = include_str!("../data/toy/kg.tsv");
pub const ALIASES_TSV: &str = include_str!("../data/toy/aliases.tsv");
pub const QUESTIONS_JSONL: &str = include_str!("../data/toy/questions.jsonl");
pub const SCRIPT_JSON: &str = include_str!("../data/toy/script.json");

pub fn knowledge_graph() -> KnowledgeGraph {
    load_kg(KG_TSV.as_bytes(), Some(ALIASES_TSV.as_bytes())).expect("bundled graph loads")
}

pub fn records() -> Vec<EvalRecord> {
    load_dataset(QUESTIONS_JSONL.as_bytes()).expect("bundled questions load")
}

pub fn dataset() -> Dataset {
    Dataset {
        name: "toy".to_string(),
        records: records(),
    }
}

pub fn script() -> Script {
    Script::from_json(SCRIPT_JSON).expect("bundled script parses")
}

pub fn is_answerable(id: &str) -> bool {
    id.starts_with("ans-")
}
