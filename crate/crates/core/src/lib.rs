pub mod cypher;
pub mod eval;
pub mod graph;
pub mod llm;
pub mod reasoning;
pub mod schema;
pub mod subgraph;
pub mod text;
pub mod toy;
