//! Filesystem, network and process side of framelab: corpus files, the LLM
//! client, the session directory, and the HTTP API served to the review UI.

pub mod api;
pub mod io;
pub mod llm;
pub mod store;
