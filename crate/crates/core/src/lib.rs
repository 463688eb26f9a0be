pub mod chain_data;
pub mod model;
pub mod replay;
pub mod translator;
pub mod backend;
pub mod prompts;
pub mod extractor;
pub mod jsontext;
pub mod reasoner;
pub mod tracer;
pub mod explainer;
pub mod pipeline;
