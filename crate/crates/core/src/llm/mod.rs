//! Prompting a chat model to tell datasets apart from captions and to
//! summarize how they differ.

mod icl;
mod summary;
mod transport;

pub use icl::{
    anonymized_indices, build_icl_prompt, parse_icl_response, run_icl_eval, split_demos, IclAnswer, IclConfig,
    IclEvaluation, IclPrompt,
};
pub use summary::{
    condense_prompt, parse_sections, pattern_prompt, summarize_datasets, DatasetSummary, PatternRound, SummaryConfig,
};
#[cfg(feature = "http")]
pub use transport::{HttpTransport, ENDPOINT_VAR, TOKEN_VAR};
pub use transport::{HttpConfig, LoggedTransport, MockTransport, Transport};
