pub mod cli;
pub mod corpus;
pub mod evalgen;
pub mod evalprop;
pub mod model;
pub mod molgraph;
pub mod selfies;
pub mod tokenizer;
