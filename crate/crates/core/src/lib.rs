pub mod embedding;
pub mod generation_eval;
pub mod kg_store;
pub mod query_generator;
pub mod rdf;
pub mod sparql;
pub mod table;
pub mod template_store;
pub mod vector_index;
pub mod viz_planner;
