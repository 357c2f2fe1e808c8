// Copyright 2026 the immucheck authors
// SPDX-License-Identifier: Apache-2.0

//! The immutability transfer function.
//!
//! A template starts out deeply immutable and is lowered by what it
//! declares: reassignable fields and mutable or unknown parents make it
//! mutable; shallow parents and `val` fields whose types are not deeply
//! immutable make it shallow immutable; fields typed by the template's own
//! type parameters or abstract type members make it at most conditionally
//! deeply immutable. Every lowering below conditional deep immutability is
//! tagged with an [`AttributeKey`] and a piece of evidence.
//!
//! A reference to a conditionally deep template with type arguments, such as
//! `P[C]`, is judged by instantiating `P`'s parents and `val` field types with
//! the arguments and evaluating them in the referring template's scope. A
//! type argument that `P` never uses therefore cannot weaken the result.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{
    resolve_type_ref, AssumptionMap, Resolution, TemplateDef, TemplateGraph, TypeRef, Visibility,
};
use crate::lattice::{
    run_fixpoint, Cause, EvidenceRecord, Outcome, Transfer, Verdict, WorklistOrder,
};

/// Why a template misses a stronger immutability property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttributeKey {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
}

impl AttributeKey {
    pub const ALL: [AttributeKey; 10] = [
        AttributeKey::A,
        AttributeKey::B,
        AttributeKey::C,
        AttributeKey::D,
        AttributeKey::E,
        AttributeKey::F,
        AttributeKey::G,
        AttributeKey::H,
        AttributeKey::I,
        AttributeKey::J,
    ];

    /// The verdict this attribute forces.
    pub fn verdict(self) -> Verdict {
        use AttributeKey::*;
        match self {
            A | B | C | D | E => Verdict::Mutable,
            F | G | H | I | J => Verdict::ShallowImmutable,
        }
    }

    pub fn reason(self) -> &'static str {
        match self {
            AttributeKey::A => "Parent type mutable (assumption)",
            AttributeKey::B => "Parent type mutable",
            AttributeKey::C => "Reassignable field (public)",
            AttributeKey::D => "Reassignable field (private)",
            AttributeKey::E => "Parent type unknown",
            AttributeKey::F => "Parent type shallow immutable",
            AttributeKey::G => "val field with unknown type",
            AttributeKey::H => "val field with mutable type",
            AttributeKey::I => "val field with mutable type (assumption)",
            AttributeKey::J => "val field with shallow immutable type",
        }
    }

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }
}

impl fmt::Display for AttributeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// How immutable a type is, seen from the template that refers to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldTypeVerdict {
    Deep,
    Abstract,
    Shallow,
    Mutable { assumed: bool },
    Unknown,
}

impl FieldTypeVerdict {
    /// Mutable < Unknown < Shallow < Abstract < Deep.
    fn severity(self) -> u8 {
        match self {
            FieldTypeVerdict::Mutable { .. } => 0,
            FieldTypeVerdict::Unknown => 1,
            FieldTypeVerdict::Shallow => 2,
            FieldTypeVerdict::Abstract => 3,
            FieldTypeVerdict::Deep => 4,
        }
    }

    /// The weaker of the two; ties keep `self`.
    fn weakest(self, other: Self) -> Self {
        if other.severity() < self.severity() {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("template '{template}' extends its own abstract type '{parent}'")]
    AbstractParent { template: String, parent: String },
}

/// Deepest nesting of instantiations followed before giving up.
const MAX_EXPANSION_DEPTH: usize = 32;
/// Longest instantiated type followed; polymorphic recursion can double
/// the type at every level.
const MAX_KEY_LEN: usize = 512;
/// Instantiations one transfer may perform before giving up.
const MAX_INSTANTIATIONS: usize = 4096;

enum Binding<'a> {
    Bound(&'a TypeRef, &'a Frame<'a>),
    UnboundParam,
    UnboundMember,
}

/// Names visible while evaluating a reference. The holder's frame has no
/// bindings; each instantiation opens a frame binding the instantiated
/// template's abstract types.
struct Frame<'a> {
    scope: &'a TemplateDef,
    bindings: Option<Vec<(&'a str, Binding<'a>)>>,
    /// Reached from the holder through parent instantiations only, so the
    /// instantiated template's abstract members are inherited by the holder.
    inherited: bool,
}

impl<'a> Frame<'a> {
    fn top(scope: &'a TemplateDef) -> Self {
        Frame {
            scope,
            bindings: None,
            inherited: true,
        }
    }

    fn binding(&self, name: &str) -> Option<&Binding<'a>> {
        self.bindings
            .as_ref()?
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, b)| b)
    }
}

struct Evaluator<'a> {
    graph: &'a TemplateGraph,
    assumptions: &'a AssumptionMap,
    sigma: &'a [Verdict],
    holder: &'a TemplateDef,
    reads: &'a mut Vec<usize>,
    visiting: Vec<String>,
    memo: HashMap<(String, bool), FieldTypeVerdict>,
    /// Set when a result relied on a recursion cut-off and must not be memoized.
    tainted: bool,
    instantiations: usize,
}

impl<'a> Evaluator<'a> {
    fn new(
        graph: &'a TemplateGraph,
        assumptions: &'a AssumptionMap,
        sigma: &'a [Verdict],
        holder: &'a TemplateDef,
        reads: &'a mut Vec<usize>,
    ) -> Self {
        Evaluator {
            graph,
            assumptions,
            sigma,
            holder,
            reads,
            visiting: Vec::new(),
            memo: HashMap::new(),
            tainted: false,
            instantiations: 0,
        }
    }

    /// Outcome for an abstract type the reference leaves unbound.
    fn unsupplied(&self) -> FieldTypeVerdict {
        if self.holder.has_abstract_types() {
            FieldTypeVerdict::Abstract
        } else {
            FieldTypeVerdict::Unknown
        }
    }

    fn eval<'f>(
        &mut self,
        r: &'f TypeRef,
        frame: &'f Frame<'f>,
        as_parent: bool,
        depth: usize,
    ) -> FieldTypeVerdict
    where
        'a: 'f,
    {
        if r.is_single_identifier() && frame.scope.declares_abstract(&r.head) {
            return match frame.binding(&r.head) {
                None => FieldTypeVerdict::Abstract,
                Some(Binding::Bound(arg, outer)) => self.eval(arg, outer, false, depth),
                Some(Binding::UnboundParam) => self.unsupplied(),
                Some(Binding::UnboundMember) if frame.inherited => FieldTypeVerdict::Abstract,
                Some(Binding::UnboundMember) => self.unsupplied(),
            };
        }
        if let Some(index) = self.graph.index_of(&r.head) {
            self.reads.push(index);
            return match self.sigma[index] {
                Verdict::Mutable => FieldTypeVerdict::Mutable { assumed: false },
                Verdict::ShallowImmutable => FieldTypeVerdict::Shallow,
                Verdict::DeepImmutable => FieldTypeVerdict::Deep,
                Verdict::ConditionallyDeep => self.instantiate(index, r, frame, as_parent, depth),
            };
        }
        match self.assumptions.get(&r.head) {
            Some(Verdict::Mutable) => FieldTypeVerdict::Mutable { assumed: true },
            Some(Verdict::ShallowImmutable) => FieldTypeVerdict::Shallow,
            Some(Verdict::DeepImmutable) => FieldTypeVerdict::Deep,
            Some(Verdict::ConditionallyDeep) if r.args.is_empty() => self.unsupplied(),
            Some(Verdict::ConditionallyDeep) => r
                .args
                .iter()
                .map(|arg| self.eval(arg, frame, false, depth))
                .fold(FieldTypeVerdict::Deep, FieldTypeVerdict::weakest),
            None => FieldTypeVerdict::Unknown,
        }
    }

    /// Evaluates the parents and `val` field types of a conditionally deep
    /// template with its abstract types bound to `r`'s arguments.
    fn instantiate<'f>(
        &mut self,
        index: usize,
        r: &'f TypeRef,
        frame: &'f Frame<'f>,
        as_parent: bool,
        depth: usize,
    ) -> FieldTypeVerdict
    where
        'a: 'f,
    {
        let mut key = String::new();
        if depth >= MAX_EXPANSION_DEPTH
            || self.instantiations >= MAX_INSTANTIATIONS
            || !render(r, frame, &mut key)
        {
            // the expansion does not terminate in reasonable bounds
            self.tainted = true;
            return FieldTypeVerdict::Unknown;
        }
        let target: &'a TemplateDef = self.graph.by_index(index);
        let inherited = as_parent && frame.inherited;
        if self.visiting.contains(&key) {
            // a recursive occurrence adds nothing the outer expansion does not see
            self.tainted = true;
            return FieldTypeVerdict::Deep;
        }
        if let Some(&v) = self.memo.get(&(key.clone(), inherited)) {
            return v;
        }
        self.instantiations += 1;
        let outer_tainted = std::mem::replace(&mut self.tainted, false);
        self.visiting.push(key);

        let mut bindings =
            Vec::with_capacity(target.type_params.len() + target.abstract_type_members.len());
        for (i, param) in target.type_params.iter().enumerate() {
            let binding = match r.args.get(i) {
                Some(arg) => Binding::Bound(arg, frame),
                None => Binding::UnboundParam,
            };
            bindings.push((param.as_str(), binding));
        }
        for member in &target.abstract_type_members {
            bindings.push((member.as_str(), Binding::UnboundMember));
        }
        let inner = Frame {
            scope: target,
            bindings: Some(bindings),
            inherited,
        };

        let mut result = FieldTypeVerdict::Deep;
        for parent in &target.parents {
            result = result.weakest(self.eval(parent, &inner, true, depth + 1));
        }
        for field in target.fields.iter().filter(|f| !f.reassignable) {
            result = result.weakest(self.eval(&field.declared_type, &inner, false, depth + 1));
        }
        let key = self.visiting.pop().expect("pushed above");
        if !self.tainted {
            self.memo.insert((key, inherited), result);
        }
        self.tainted |= outer_tainted;
        result
    }
}

/// Appends the canonical text of `r`, with bound abstract types replaced
/// by their arguments, to `out`. Returns false once `out` would exceed
/// [`MAX_KEY_LEN`].
fn render(r: &TypeRef, frame: &Frame<'_>, out: &mut String) -> bool {
    if r.is_single_identifier() && frame.scope.declares_abstract(&r.head) {
        match frame.binding(&r.head) {
            Some(Binding::Bound(arg, outer)) => return render(arg, outer, out),
            Some(Binding::UnboundParam | Binding::UnboundMember) => {
                out.push('?');
                return out.len() <= MAX_KEY_LEN;
            }
            None => {}
        }
    }
    out.push_str(&r.head);
    if !r.args.is_empty() {
        out.push('[');
        for (i, arg) in r.args.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            if !render(arg, frame, out) {
                return false;
            }
        }
        out.push(']');
    }
    out.len() <= MAX_KEY_LEN
}

/// Judges the type `r` as seen from `scope` under `assignment`, which is
/// indexed like the graph's templates.
pub fn evaluate_field_type(
    r: &TypeRef,
    scope: &TemplateDef,
    assignment: &[Verdict],
    graph: &TemplateGraph,
    assumptions: &AssumptionMap,
) -> FieldTypeVerdict {
    let mut reads = Vec::new();
    let mut ev = Evaluator::new(graph, assumptions, assignment, scope, &mut reads);
    let top = Frame::top(scope);
    ev.eval(r, &top, false, 0)
}

/// One evaluation of the immutability rules for `t` under `assignment`.
pub fn transfer(
    t: &TemplateDef,
    assignment: &[Verdict],
    graph: &TemplateGraph,
    assumptions: &AssumptionMap,
) -> Result<Outcome, ClassifyError> {
    transfer_recording(t, assignment, graph, assumptions, &mut Vec::new())
}

fn transfer_recording(
    t: &TemplateDef,
    assignment: &[Verdict],
    graph: &TemplateGraph,
    assumptions: &AssumptionMap,
    reads: &mut Vec<usize>,
) -> Result<Outcome, ClassifyError> {
    let mut out = Outcome::default();

    for field in t.fields.iter().filter(|f| f.reassignable) {
        let attribute = match field.visibility {
            Visibility::Public => AttributeKey::C,
            Visibility::Private => AttributeKey::D,
        };
        let cause = Cause::Field(field.name.clone(), field.declared_type.clone());
        out.lower(Verdict::Mutable, Some(attribute), &cause);
    }

    let top = Frame::top(t);
    let mut ev = Evaluator::new(graph, assumptions, assignment, t, reads);

    for parent in &t.parents {
        let cause = Cause::Parent(parent.clone());
        match resolve_type_ref(graph, t, parent, assumptions) {
            Resolution::AbstractInScope(name) => {
                return Err(ClassifyError::AbstractParent {
                    template: t.name.clone(),
                    parent: name,
                })
            }
            Resolution::Unknown => out.lower(Verdict::Mutable, Some(AttributeKey::E), &cause),
            Resolution::Assumed(Verdict::Mutable) => {
                out.lower(Verdict::Mutable, Some(AttributeKey::A), &cause)
            }
            Resolution::Assumed(Verdict::ShallowImmutable) => {
                out.lower(Verdict::ShallowImmutable, Some(AttributeKey::F), &cause)
            }
            Resolution::Assumed(Verdict::DeepImmutable) => {}
            Resolution::Assumed(Verdict::ConditionallyDeep) => {
                let v = ev.eval(parent, &top, true, 0);
                apply_type_verdict(&mut out, t, v, &cause);
            }
            Resolution::Internal(name) => {
                let index = graph
                    .index_of(&name)
                    .expect("internal resolution names a template");
                ev.reads.push(index);
                match assignment[index] {
                    Verdict::Mutable => out.lower(Verdict::Mutable, Some(AttributeKey::B), &cause),
                    Verdict::ShallowImmutable => {
                        out.lower(Verdict::ShallowImmutable, Some(AttributeKey::F), &cause)
                    }
                    Verdict::DeepImmutable => {}
                    Verdict::ConditionallyDeep => {
                        let v = ev.eval(parent, &top, true, 0);
                        apply_type_verdict(&mut out, t, v, &cause);
                    }
                }
            }
        }
    }

    for field in t.fields.iter().filter(|f| !f.reassignable) {
        let cause = Cause::Field(field.name.clone(), field.declared_type.clone());
        let v = ev.eval(&field.declared_type, &top, false, 0);
        apply_type_verdict(&mut out, t, v, &cause);
    }

    Ok(out)
}

fn apply_type_verdict(out: &mut Outcome, t: &TemplateDef, v: FieldTypeVerdict, cause: &Cause) {
    // singletons and anonymous classes have no abstract types of their own
    let v = match v {
        FieldTypeVerdict::Abstract if t.kind.is_object_like() => FieldTypeVerdict::Unknown,
        v => v,
    };
    match v {
        FieldTypeVerdict::Deep => {}
        FieldTypeVerdict::Abstract => out.lower(Verdict::ConditionallyDeep, None, cause),
        FieldTypeVerdict::Shallow => {
            out.lower(Verdict::ShallowImmutable, Some(AttributeKey::J), cause)
        }
        FieldTypeVerdict::Mutable { assumed } => {
            let attribute = if assumed {
                AttributeKey::I
            } else {
                AttributeKey::H
            };
            out.lower(Verdict::ShallowImmutable, Some(attribute), cause)
        }
        FieldTypeVerdict::Unknown => {
            out.lower(Verdict::ShallowImmutable, Some(AttributeKey::G), cause)
        }
    }
}

/// The immutability rules over a whole graph, as a [`Transfer`] for the engine.
pub struct Classifier<'g> {
    graph: &'g TemplateGraph,
    assumptions: &'g AssumptionMap,
}

impl<'g> Classifier<'g> {
    pub fn new(graph: &'g TemplateGraph, assumptions: &'g AssumptionMap) -> Self {
        Classifier { graph, assumptions }
    }
}

impl Transfer for Classifier<'_> {
    type Error = ClassifyError;

    fn len(&self) -> usize {
        self.graph.len()
    }

    fn name(&self, template: usize) -> &str {
        &self.graph.by_index(template).name
    }

    fn apply(
        &self,
        template: usize,
        assignment: &[Verdict],
        reads: &mut Vec<usize>,
    ) -> Result<Outcome, ClassifyError> {
        transfer_recording(
            self.graph.by_index(template),
            assignment,
            self.graph,
            self.assumptions,
            reads,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateResult {
    pub verdict: Verdict,
    pub attributes: BTreeSet<AttributeKey>,
    pub evidence: Vec<EvidenceRecord>,
}

/// Final verdicts, attributes and evidence, in graph order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnalysisResult {
    names: Vec<String>,
    results: Vec<TemplateResult>,
}

impl AnalysisResult {
    /// Builds a result from `(name, result)` pairs, e.g. a committed
    /// expectation.
    pub fn from_entries(entries: impl IntoIterator<Item = (String, TemplateResult)>) -> Self {
        let (names, results) = entries.into_iter().unzip();
        AnalysisResult { names, results }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&TemplateResult> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&self.results[i])
    }

    pub fn verdict(&self, name: &str) -> Option<Verdict> {
        self.get(name).map(|r| r.verdict)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TemplateResult)> {
        self.names.iter().map(String::as_str).zip(&self.results)
    }

    pub fn verdicts(&self) -> Vec<Verdict> {
        self.results.iter().map(|r| r.verdict).collect()
    }
}

/// Classifies every template of `graph`.
pub fn classify_corpus(
    graph: &TemplateGraph,
    assumptions: &AssumptionMap,
) -> Result<AnalysisResult, ClassifyError> {
    classify_corpus_with(graph, assumptions, WorklistOrder::Fifo)
}

/// Like [`classify_corpus`] with an explicit worklist order.
///
/// Cells accumulate every attribute seen on the way down, which depends on
/// the order templates happen to be visited in. The reported attributes and
/// evidence are those of one more evaluation at the fixpoint, restricted to
/// the attributes that explain the final verdict.
pub fn classify_corpus_with(
    graph: &TemplateGraph,
    assumptions: &AssumptionMap,
    order: WorklistOrder,
) -> Result<AnalysisResult, ClassifyError> {
    let classifier = Classifier::new(graph, assumptions);
    let fixpoint = run_fixpoint(&classifier, order)?;
    let sigma = fixpoint.values();

    let mut result = AnalysisResult::default();
    for (index, t) in graph.templates().enumerate() {
        let settled = transfer(t, &sigma, graph, assumptions)?;
        debug_assert_eq!(
            settled.verdict, sigma[index],
            "{} is not at a fixpoint",
            t.name
        );
        let verdict = sigma[index];
        let explains = |a: &AttributeKey| a.verdict() == verdict;
        result.names.push(t.name.clone());
        result.results.push(TemplateResult {
            verdict,
            attributes: settled
                .attributes
                .iter()
                .copied()
                .filter(explains)
                .collect(),
            evidence: settled
                .evidence
                .into_iter()
                .filter(|e| explains(&e.attribute))
                .collect(),
        });
    }
    Ok(result)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct AssumptionError {
    pub line: usize,
    pub message: String,
}

/// Parses `qualified-name verdict` lines; `#` starts a comment.
pub fn parse_assumptions(text: &str) -> Result<AssumptionMap, AssumptionError> {
    let mut map = AssumptionMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| AssumptionError {
            line: i + 1,
            message,
        };
        let mut parts = line.split_whitespace();
        let (Some(name), Some(token), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err(format!(
                "expected `qualified-name verdict`, found `{line}`"
            )));
        };
        let verdict = Verdict::from_token(token).ok_or_else(|| {
            err(format!(
                "unknown verdict `{token}` (expected mutable, shallow, conditionally_deep or deep)"
            ))
        })?;
        if map.insert(name.to_string(), verdict).is_some() {
            return Err(err(format!("duplicate assumption for `{name}`")));
        }
    }
    Ok(map)
}
