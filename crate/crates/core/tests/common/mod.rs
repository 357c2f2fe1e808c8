// Copyright 2026 the immucheck authors
// SPDX-License-Identifier: Apache-2.0

//! Shared test support: random corpora, a brute-force monomorphizer and
//! independent checks of classification results.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use immucheck::classifier::{evaluate_field_type, AnalysisResult, FieldTypeVerdict};
use immucheck::ir::{resolve_type_ref, AssumptionMap, FieldDecl, Resolution, Visibility};
use immucheck::{AttributeKey, TemplateDef, TemplateGraph, TemplateKind, TypeRef, Verdict};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// External names the generators draw from; their assumed verdicts are
/// randomized per graph, and `Unseen` is never assumed.
const EXTERNALS: [&str; 5] = ["Ext0", "Ext1", "Ext2", "Ext3", "Unseen"];

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub max_templates: usize,
    /// Generic references always carry every type argument.
    pub full_arity: bool,
    /// No abstract type members.
    pub params_only: bool,
    /// A template only mentions templates with a smaller index.
    pub acyclic: bool,
    pub var_probability: f64,
}

impl GenOptions {
    /// Anything the IR admits, cycles included.
    pub fn fuzz(max_templates: usize) -> Self {
        GenOptions {
            max_templates,
            full_arity: false,
            params_only: false,
            acyclic: false,
            var_probability: 0.15,
        }
    }

    /// Acyclic generics with fully applied type parameters.
    pub fn monomorphizable(max_templates: usize) -> Self {
        GenOptions {
            max_templates,
            full_arity: true,
            params_only: true,
            acyclic: true,
            var_probability: 0.1,
        }
    }
}

pub struct Corpus {
    pub graph: TemplateGraph,
    pub assumptions: AssumptionMap,
}

struct Shape {
    name: String,
    kind: TemplateKind,
    params: Vec<String>,
    members: Vec<String>,
}

pub fn random_corpus(rng: &mut ChaCha8Rng, opts: &GenOptions) -> Corpus {
    let n = rng.gen_range(1..=opts.max_templates);
    let mut shapes = Vec::with_capacity(n);
    for i in 0..n {
        let kind = *TemplateKind::ALL.choose(rng).unwrap();
        let (mut params, mut members) = (Vec::new(), Vec::new());
        if !kind.is_object_like() {
            for p in 0..rng.gen_range(0..=2) {
                if rng.gen_bool(0.5) {
                    params.push(format!("P{p}"));
                }
            }
            if !opts.params_only && rng.gen_bool(0.2) {
                members.push("M".to_string());
            }
        }
        shapes.push(Shape {
            name: format!("T{i}"),
            kind,
            params,
            members,
        });
    }

    let mut templates = Vec::with_capacity(n);
    for i in 0..n {
        let shape = &shapes[i];
        let visible: Vec<usize> = if opts.acyclic {
            (0..i).collect()
        } else {
            (0..n).collect()
        };
        let mut def = TemplateDef::new(shape.name.clone(), shape.kind);
        def.type_params = shape.params.clone();
        def.abstract_type_members = shape.members.iter().cloned().collect();

        let parent_count = if shape.kind == TemplateKind::AnonClass {
            1
        } else {
            rng.gen_range(0..=2)
        };
        for _ in 0..parent_count {
            let head = named_head(rng, &shapes, &visible);
            let parent = applied(rng, opts, &shapes, &visible, shape, head, 1);
            if !def.parents.contains(&parent) {
                def.parents.push(parent);
            }
        }
        if def.kind == TemplateKind::AnonClass && def.parents.is_empty() {
            def.parents.push(TypeRef::simple("Ext2"));
        }

        for f in 0..rng.gen_range(0..=3) {
            def.fields.push(FieldDecl {
                name: format!("f{f}"),
                reassignable: rng.gen_bool(opts.var_probability),
                visibility: if rng.gen_bool(0.3) {
                    Visibility::Private
                } else {
                    Visibility::Public
                },
                declared_type: random_type(rng, opts, &shapes, &visible, shape, 2),
            });
        }
        templates.push(def);
    }

    let mut assumptions = AssumptionMap::new();
    for ext in &EXTERNALS[..4] {
        assumptions.insert(ext.to_string(), *Verdict::ALL.choose(rng).unwrap());
    }
    let graph = TemplateGraph::from_templates(templates).expect("generator emits valid graphs");
    Corpus { graph, assumptions }
}

/// A template or external name (never an abstract type).
fn named_head(rng: &mut ChaCha8Rng, shapes: &[Shape], visible: &[usize]) -> String {
    if !visible.is_empty() && rng.gen_bool(0.6) {
        shapes[*visible.choose(rng).unwrap()].name.clone()
    } else {
        EXTERNALS.choose(rng).unwrap().to_string()
    }
}

fn applied(
    rng: &mut ChaCha8Rng,
    opts: &GenOptions,
    shapes: &[Shape],
    visible: &[usize],
    scope: &Shape,
    head: String,
    depth: usize,
) -> TypeRef {
    let arity = match shapes.iter().find(|s| s.name == head) {
        Some(target) if opts.full_arity => target.params.len(),
        Some(target) => rng.gen_range(0..=target.params.len()),
        // externals take arguments only sometimes
        None if rng.gen_bool(0.3) => rng.gen_range(1..=2),
        None => 0,
    };
    let args = (0..arity)
        .map(|_| random_type(rng, opts, shapes, visible, scope, depth.saturating_sub(1)))
        .collect();
    TypeRef::generic(head, args)
}

fn random_type(
    rng: &mut ChaCha8Rng,
    opts: &GenOptions,
    shapes: &[Shape],
    visible: &[usize],
    scope: &Shape,
    depth: usize,
) -> TypeRef {
    let abstract_names: Vec<&String> = scope.params.iter().chain(&scope.members).collect();
    let roll = rng.gen_range(0..10);
    if roll < 3 && !abstract_names.is_empty() {
        return TypeRef::simple(abstract_names.choose(rng).unwrap().as_str());
    }
    if roll == 3 && !opts.full_arity {
        return TypeRef::inferred();
    }
    if depth == 0 {
        // with full arity, leaves must be templates that take no arguments
        let leaves: Vec<usize> = visible
            .iter()
            .copied()
            .filter(|&i| !opts.full_arity || shapes[i].params.is_empty())
            .collect();
        return TypeRef::simple(named_head(rng, shapes, &leaves));
    }
    let head = named_head(rng, shapes, visible);
    applied(rng, opts, shapes, visible, scope, head, depth)
}

/// Replaces every non-generic template's uses of generic templates with
/// textual copies specialized to the concrete arguments, recursively.
///
/// Requires an acyclic graph without abstract type members in which every
/// generic reference supplies all arguments.
pub fn monomorphize(graph: &TemplateGraph) -> TemplateGraph {
    let mut out: Vec<TemplateDef> = Vec::new();
    let mut instances: BTreeMap<String, TemplateDef> = BTreeMap::new();
    for t in graph.templates() {
        let mut copy = t.clone();
        if t.type_params.is_empty() {
            copy.parents = t
                .parents
                .iter()
                .map(|p| specialize(graph, p, &mut instances))
                .collect();
            for f in &mut copy.fields {
                f.declared_type = specialize(graph, &f.declared_type, &mut instances);
            }
        }
        out.push(copy);
    }
    out.extend(instances.into_values());
    TemplateGraph::from_templates(out).expect("monomorphized graph is valid")
}

/// `r` is closed: it mentions no type parameters.
fn specialize(
    graph: &TemplateGraph,
    r: &TypeRef,
    instances: &mut BTreeMap<String, TemplateDef>,
) -> TypeRef {
    let args: Vec<TypeRef> = r
        .args
        .iter()
        .map(|a| specialize(graph, a, instances))
        .collect();
    let Some(generic) = graph.get(&r.head).filter(|t| !t.type_params.is_empty()) else {
        return TypeRef::generic(r.head.clone(), args);
    };
    assert_eq!(
        args.len(),
        generic.type_params.len(),
        "partial application of {}",
        r.head
    );
    let name = format!(
        "{}<{}>",
        r.head,
        args.iter()
            .map(TypeRef::to_string)
            .collect::<Vec<_>>()
            .join(",")
    );
    if !instances.contains_key(&name) {
        let bindings: BTreeMap<&str, &TypeRef> = generic
            .type_params
            .iter()
            .map(String::as_str)
            .zip(&args)
            .collect();
        let mut inst = TemplateDef::new(name.clone(), generic.kind);
        let parents: Vec<TypeRef> = generic
            .parents
            .iter()
            .map(|p| substitute(p, &bindings))
            .collect();
        let fields: Vec<(FieldDecl, TypeRef)> = generic
            .fields
            .iter()
            .map(|f| (f.clone(), substitute(&f.declared_type, &bindings)))
            .collect();
        inst.parents = parents
            .iter()
            .map(|p| specialize(graph, p, instances))
            .collect();
        for (mut f, ty) in fields {
            f.declared_type = specialize(graph, &ty, instances);
            inst.fields.push(f);
        }
        instances.insert(name.clone(), inst);
    }
    TypeRef::simple(name)
}

fn substitute(r: &TypeRef, bindings: &BTreeMap<&str, &TypeRef>) -> TypeRef {
    if r.args.is_empty() {
        if let Some(b) = bindings.get(r.head.as_str()) {
            return (*b).clone();
        }
    }
    TypeRef::generic(
        r.head.clone(),
        r.args.iter().map(|a| substitute(a, bindings)).collect(),
    )
}

/// Every claim a result must satisfy whatever the input; returns the
/// violations.
pub fn structural_violations(graph: &TemplateGraph, result: &AnalysisResult) -> Vec<String> {
    let mutable_keys: BTreeSet<AttributeKey> = [
        AttributeKey::A,
        AttributeKey::B,
        AttributeKey::C,
        AttributeKey::D,
        AttributeKey::E,
    ]
    .into();
    let shallow_keys: BTreeSet<AttributeKey> = [
        AttributeKey::F,
        AttributeKey::G,
        AttributeKey::H,
        AttributeKey::I,
        AttributeKey::J,
    ]
    .into();
    let mut problems = Vec::new();
    for t in graph.templates() {
        let Some(r) = result.get(&t.name) else {
            problems.push(format!("{}: missing from result", t.name));
            continue;
        };
        if t.kind.is_object_like() && r.verdict == Verdict::ConditionallyDeep {
            problems.push(format!("{}: {:?} is conditionally deep", t.name, t.kind));
        }
        if t.fields.iter().any(|f| f.reassignable) && r.verdict != Verdict::Mutable {
            problems.push(format!("{}: declares a var but is {}", t.name, r.verdict));
        }
        let ok = match r.verdict {
            Verdict::Mutable => !r.attributes.is_empty() && r.attributes.is_subset(&mutable_keys),
            Verdict::ShallowImmutable => {
                !r.attributes.is_empty() && r.attributes.is_subset(&shallow_keys)
            }
            Verdict::ConditionallyDeep | Verdict::DeepImmutable => r.attributes.is_empty(),
        };
        if !ok {
            problems.push(format!(
                "{}: {} with attributes {:?}",
                t.name, r.verdict, r.attributes
            ));
        }
        let evidenced: BTreeSet<AttributeKey> = r.evidence.iter().map(|e| e.attribute).collect();
        if evidenced != r.attributes {
            problems.push(format!(
                "{}: evidence covers {evidenced:?}, attributes {:?}",
                t.name, r.attributes
            ));
        }
    }
    problems
}

/// Re-derives which templates are deep from the final assignment alone:
/// deep iff no var, every parent resolves deep, every val type is deep.
pub fn deep_closure_violations(
    graph: &TemplateGraph,
    assumptions: &AssumptionMap,
    result: &AnalysisResult,
) -> Vec<String> {
    let sigma = result.verdicts();
    let mut problems = Vec::new();
    for t in graph.templates() {
        let deep_type = |r: &TypeRef| {
            evaluate_field_type(r, t, &sigma, graph, assumptions) == FieldTypeVerdict::Deep
        };
        let parents_deep =
            t.parents
                .iter()
                .all(|p| match resolve_type_ref(graph, t, p, assumptions) {
                    Resolution::Internal(name) => match result.verdict(&name) {
                        Some(Verdict::DeepImmutable) => true,
                        Some(Verdict::ConditionallyDeep) => deep_type(p),
                        _ => false,
                    },
                    Resolution::Assumed(Verdict::DeepImmutable) => true,
                    Resolution::Assumed(Verdict::ConditionallyDeep) => deep_type(p),
                    _ => false,
                });
        let fields_deep = t
            .fields
            .iter()
            .all(|f| !f.reassignable && deep_type(&f.declared_type));
        let expected = parents_deep && fields_deep;
        let actual = result.verdict(&t.name) == Some(Verdict::DeepImmutable);
        if expected != actual {
            problems.push(format!(
                "{}: closure says deep={expected}, analysis says {:?}",
                t.name,
                result.verdict(&t.name)
            ));
        }
    }
    problems
}
