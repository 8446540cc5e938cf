//! Configuration-driven runs of the reconstruction pipelines, the CGO and
//! stability experiments, and their file outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod experiments;
pub mod export;
pub mod manifest;
pub mod pipeline;
