//! Model search: random generation, variation operators, the loss, and the
//! steady-state evolutionary algorithm.

mod config;
mod evaluate;
mod evolve;
mod generate;
mod operators;

pub use config::{Relationship, SearchConfig, TensorFamily, Variant};
pub use evaluate::{default_eta, evaluate, EvaluatedModel, Evaluation, Lineage};
pub use evolve::{
    evolve, random_search, seed_population_with, sub_seed, write_audit, AuditRecord, SearchOutcome,
};
pub use generate::{generate_model, Sampler, RETRY_CAP};
pub use operators::{tournament_select, Site, SiteKind};
