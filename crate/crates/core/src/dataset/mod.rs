//! Question/answer pairs, chat prompts, manifests and dataset assembly.

mod llm;
mod manifest;
mod prompt;
mod qa;
mod writer;

pub use llm::*;
pub use manifest::*;
pub use prompt::*;
pub use qa::*;
pub use writer::*;
