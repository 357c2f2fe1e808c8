// Copyright 2026 the immucheck authors
// SPDX-License-Identifier: Apache-2.0

//! Static immutability analysis for the class, trait and object definitions
//! ("templates") of a Scala-like language.
//!
//! The pipeline is: [`parser`] or [`ir::load_ir`] builds a [`TemplateGraph`];
//! [`classifier::classify_corpus`] solves the immutability rules with the
//! fixpoint engine in [`lattice`]; [`report`] aggregates and renders the
//! results; [`cli`] wires it together.

pub mod classifier;
pub mod cli;
pub mod ir;
pub mod lattice;
pub mod parser;
pub mod report;

pub use classifier::{classify_corpus, AnalysisResult, AttributeKey};
pub use ir::{TemplateDef, TemplateGraph, TemplateKind, TypeRef};
pub use lattice::Verdict;
