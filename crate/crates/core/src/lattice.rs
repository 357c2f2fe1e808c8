// Copyright 2026 the immucheck authors
// SPDX-License-Identifier: Apache-2.0

//! The immutability lattice and the fixpoint engine that solves it.
//!
//! Every template owns a [`Cell`] that starts at the top of the lattice
//! ([`Verdict::DeepImmutable`]) and is only ever lowered. The engine keeps a
//! worklist of templates whose transfer function must be re-evaluated; after
//! every evaluation it lowers the template's cell and, if anything changed,
//! re-enqueues every template whose last evaluation read that cell. Because
//! transfer functions are monotone and cells move downward from the top, the
//! engine converges on the greatest fixpoint regardless of worklist order.
//! Templates that depend on each other cyclically without any downgrade
//! evidence simply stay at their initial value.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::AttributeKey;
use crate::ir::TypeRef;

/// Immutability verdict, ordered from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Mutable,
    #[serde(rename = "shallow")]
    ShallowImmutable,
    #[serde(rename = "conditionally_deep")]
    ConditionallyDeep,
    #[serde(rename = "deep")]
    DeepImmutable,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [
        Verdict::Mutable,
        Verdict::ShallowImmutable,
        Verdict::ConditionallyDeep,
        Verdict::DeepImmutable,
    ];

    /// Token used by assumption files and JSON output.
    pub fn token(self) -> &'static str {
        match self {
            Verdict::Mutable => "mutable",
            Verdict::ShallowImmutable => "shallow",
            Verdict::ConditionallyDeep => "conditionally_deep",
            Verdict::DeepImmutable => "deep",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.token() == s)
    }

    fn rank(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Mutable => "mutable",
            Verdict::ShallowImmutable => "shallow immutable",
            Verdict::ConditionallyDeep => "conditionally deep immutable",
            Verdict::DeepImmutable => "deep immutable",
        })
    }
}

/// Greatest lower bound.
pub fn meet(a: Verdict, b: Verdict) -> Verdict {
    a.min(b)
}

/// What a piece of evidence points at.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cause {
    Parent(TypeRef),
    Field(String, TypeRef),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EvidenceRecord {
    pub attribute: AttributeKey,
    pub cause: Cause,
}

/// Result of one transfer evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub verdict: Verdict,
    pub attributes: BTreeSet<AttributeKey>,
    pub evidence: Vec<EvidenceRecord>,
}

impl Default for Outcome {
    fn default() -> Self {
        Outcome {
            verdict: Verdict::DeepImmutable,
            attributes: BTreeSet::new(),
            evidence: Vec::new(),
        }
    }
}

impl Outcome {
    /// Lowers the verdict and records one piece of evidence when an attribute applies.
    pub fn lower(&mut self, verdict: Verdict, attribute: Option<AttributeKey>, cause: &Cause) {
        self.verdict = meet(self.verdict, verdict);
        if let Some(attribute) = attribute {
            self.attributes.insert(attribute);
            let record = EvidenceRecord {
                attribute,
                cause: cause.clone(),
            };
            if !self.evidence.contains(&record) {
                self.evidence.push(record);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub owner: String,
    pub value: Verdict,
    pub attributes: BTreeSet<AttributeKey>,
    pub evidence: Vec<EvidenceRecord>,
}

impl Cell {
    pub fn new(owner: impl Into<String>) -> Self {
        Cell {
            owner: owner.into(),
            value: Verdict::DeepImmutable,
            attributes: BTreeSet::new(),
            evidence: Vec::new(),
        }
    }
}

/// Lowers `cell` to `meet(cell.value, v)` and unions in the attributes.
/// Returns true iff the value strictly decreased or the attribute set grew.
pub fn downgrade_cell(
    cell: &mut Cell,
    v: Verdict,
    attrs: &BTreeSet<AttributeKey>,
    evidence: &[EvidenceRecord],
) -> bool {
    debug_assert!(
        attrs
            .iter()
            .all(|a| evidence.iter().any(|e| e.attribute == *a)),
        "attribute without evidence"
    );
    let value = meet(cell.value, v);
    let lowered = value < cell.value;
    cell.value = value;
    let before = cell.attributes.len();
    cell.attributes.extend(attrs.iter().copied());
    for record in evidence {
        if !cell.evidence.contains(record) {
            cell.evidence.push(record.clone());
        }
    }
    lowered || cell.attributes.len() > before
}

/// A monotone transfer function over templates identified by index.
///
/// `reads` must receive the index of every template whose verdict the
/// evaluation consulted, so the engine can re-evaluate it when those change.
pub trait Transfer: Sync {
    type Error: Send;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn name(&self, template: usize) -> &str;

    fn apply(
        &self,
        template: usize,
        assignment: &[Verdict],
        reads: &mut Vec<usize>,
    ) -> Result<Outcome, Self::Error>;
}

/// Order in which pending templates are taken off the worklist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WorklistOrder {
    /// First in, first out, seeded in template order.
    #[default]
    Fifo,
    /// Uniformly random pending template, reproducible from the seed.
    Shuffled(u64),
    /// Rounds of parallel evaluation against a snapshot, applied in index order.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FixpointStats {
    pub evaluations: usize,
    pub strict_downgrades: usize,
    /// Cell writes that raised a value. Always zero.
    pub value_increases: usize,
    /// Evaluations whose verdict lay above the cell, i.e. a non-monotone transfer.
    pub raised_proposals: usize,
    pub attribute_growths: usize,
}

#[derive(Debug, Clone)]
pub struct Fixpoint {
    pub cells: Vec<Cell>,
    pub stats: FixpointStats,
}

impl Fixpoint {
    pub fn values(&self) -> Vec<Verdict> {
        self.cells.iter().map(|c| c.value).collect()
    }
}

struct Engine {
    cells: Vec<Cell>,
    readers: Vec<BTreeSet<usize>>,
    stats: FixpointStats,
}

impl Engine {
    fn new<T: Transfer>(transfer: &T) -> Self {
        let n = transfer.len();
        Engine {
            cells: (0..n).map(|i| Cell::new(transfer.name(i))).collect(),
            readers: vec![BTreeSet::new(); n],
            stats: FixpointStats::default(),
        }
    }

    fn values(&self) -> Vec<Verdict> {
        self.cells.iter().map(|c| c.value).collect()
    }

    fn record_reads(&mut self, template: usize, reads: &[usize]) {
        for &r in reads {
            self.readers[r].insert(template);
        }
    }

    /// Applies one evaluation result; returns the templates to revisit.
    /// Reads must have been recorded first.
    fn apply(&mut self, template: usize, outcome: Outcome) -> Vec<usize> {
        self.stats.evaluations += 1;
        let cell = &mut self.cells[template];
        let before = cell.value;
        let attrs_before = cell.attributes.len();
        if outcome.verdict > before {
            self.stats.raised_proposals += 1;
        }
        downgrade_cell(
            cell,
            outcome.verdict,
            &outcome.attributes,
            &outcome.evidence,
        );
        if cell.value > before {
            self.stats.value_increases += 1;
        }
        if cell.attributes.len() > attrs_before {
            self.stats.attribute_growths += 1;
        }
        // readers only observe values, so attribute growth alone wakes nobody
        if cell.value < before {
            self.stats.strict_downgrades += 1;
            self.readers[template].iter().copied().collect()
        } else {
            Vec::new()
        }
    }
}

/// Solves `transfer` from the all-deep assignment down to its greatest fixpoint.
pub fn run_fixpoint<T: Transfer>(transfer: &T, order: WorklistOrder) -> Result<Fixpoint, T::Error> {
    let n = transfer.len();
    let mut engine = Engine::new(transfer);
    let mut pending = vec![true; n];
    let mut reads = Vec::new();

    match order {
        WorklistOrder::Fifo => {
            let mut queue: VecDeque<usize> = (0..n).collect();
            while let Some(t) = queue.pop_front() {
                pending[t] = false;
                reads.clear();
                let values = engine.values();
                let outcome = transfer.apply(t, &values, &mut reads)?;
                engine.record_reads(t, &reads);
                for next in engine.apply(t, outcome) {
                    if !pending[next] {
                        pending[next] = true;
                        queue.push_back(next);
                    }
                }
            }
        }
        WorklistOrder::Shuffled(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut work: Vec<usize> = (0..n).collect();
            while !work.is_empty() {
                let t = work.swap_remove(rng.gen_range(0..work.len()));
                pending[t] = false;
                reads.clear();
                let values = engine.values();
                let outcome = transfer.apply(t, &values, &mut reads)?;
                engine.record_reads(t, &reads);
                for next in engine.apply(t, outcome) {
                    if !pending[next] {
                        pending[next] = true;
                        work.push(next);
                    }
                }
            }
        }
        WorklistOrder::Parallel => {
            let mut round: Vec<usize> = (0..n).collect();
            while !round.is_empty() {
                let snapshot = engine.values();
                let results: Vec<_> = round
                    .par_iter()
                    .map(|&t| {
                        let mut reads = Vec::new();
                        transfer
                            .apply(t, &snapshot, &mut reads)
                            .map(|o| (t, o, reads))
                    })
                    .collect::<Result<_, _>>()?;
                pending.iter_mut().for_each(|p| *p = false);
                for (t, _, reads) in &results {
                    engine.record_reads(*t, reads);
                }
                let mut next_round = Vec::new();
                for (t, outcome, _) in results {
                    for next in engine.apply(t, outcome) {
                        if !pending[next] {
                            pending[next] = true;
                            next_round.push(next);
                        }
                    }
                }
                next_round.sort_unstable();
                round = next_round;
            }
        }
    }

    Ok(Fixpoint {
        cells: engine.cells,
        stats: engine.stats,
    })
}

/// Largest graph the exhaustive oracle accepts.
pub const ORACLE_MAX_TEMPLATES: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError<E> {
    #[error("{0} templates exceed the exhaustive oracle limit of {ORACLE_MAX_TEMPLATES}")]
    TooLarge(usize),
    #[error("transfer failed")]
    Transfer(E),
}

/// Enumerates every verdict assignment and returns the pointwise greatest
/// one that `transfer` maps to itself.
pub fn exhaustive_fixpoint_oracle<T: Transfer>(
    transfer: &T,
) -> Result<Vec<Verdict>, OracleError<T::Error>> {
    let n = transfer.len();
    if n > ORACLE_MAX_TEMPLATES {
        return Err(OracleError::TooLarge(n));
    }
    let mut best = vec![Verdict::Mutable; n];
    let mut found = false;
    let mut sigma = vec![Verdict::Mutable; n];
    let mut reads = Vec::new();
    let total = 1usize << (2 * n);
    for code in 0..total {
        for (i, v) in sigma.iter_mut().enumerate() {
            *v = Verdict::ALL[(code >> (2 * i)) & 3];
        }
        let mut fixed = true;
        for t in 0..n {
            reads.clear();
            let outcome = transfer
                .apply(t, &sigma, &mut reads)
                .map_err(OracleError::Transfer)?;
            if outcome.verdict != sigma[t] {
                fixed = false;
                break;
            }
        }
        if fixed {
            found = true;
            for (b, s) in best.iter_mut().zip(&sigma) {
                *b = (*b).max(*s);
            }
        }
    }
    debug_assert!(found || n == 0);
    // the join of all fixpoints of a monotone map on a finite lattice is itself one
    Ok(best)
}

impl Verdict {
    /// Number of strict lattice steps from the top.
    pub fn depth_below_top(self) -> usize {
        Verdict::DeepImmutable.rank() - self.rank()
    }
}
