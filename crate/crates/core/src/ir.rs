// Copyright 2026 the immucheck authors
// SPDX-License-Identifier: Apache-2.0

//! The template graph: every analyzed class, trait and object definition,
//! its JSON document form, and resolution of type references against a
//! template's scope.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Verdict;

/// Head used for `val`/`var` members whose type the frontend cannot know.
pub const INFERRED_HEAD: &str = "$inferred";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Class,
    CaseClass,
    AnonClass,
    Trait,
    Object,
    CaseObject,
}

impl TemplateKind {
    /// Fixed row order of the summary tables.
    pub const ALL: [TemplateKind; 6] = [
        TemplateKind::Class,
        TemplateKind::CaseClass,
        TemplateKind::AnonClass,
        TemplateKind::Trait,
        TemplateKind::Object,
        TemplateKind::CaseObject,
    ];

    /// Singleton and anonymous templates cannot declare abstract types.
    pub fn is_object_like(self) -> bool {
        matches!(
            self,
            TemplateKind::Object | TemplateKind::CaseObject | TemplateKind::AnonClass
        )
    }

    pub fn ir_name(self) -> &'static str {
        match self {
            TemplateKind::Class => "class",
            TemplateKind::CaseClass => "case_class",
            TemplateKind::AnonClass => "anon_class",
            TemplateKind::Trait => "trait",
            TemplateKind::Object => "object",
            TemplateKind::CaseObject => "case_object",
        }
    }

    pub fn from_ir_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.ir_name() == s)
    }

    /// Row label used by reports.
    pub fn label(self) -> &'static str {
        match self {
            TemplateKind::Class => "Class",
            TemplateKind::CaseClass => "Case class",
            TemplateKind::AnonClass => "Anon. class",
            TemplateKind::Trait => "Trait",
            TemplateKind::Object => "Object",
            TemplateKind::CaseObject => "Case object",
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Protected and package-private members are reported as public.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Visibility {
    #[default]
    Public,
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeRef {
    pub head: String,
    pub args: Vec<TypeRef>,
}

impl TypeRef {
    pub fn simple(head: impl Into<String>) -> Self {
        TypeRef {
            head: head.into(),
            args: Vec::new(),
        }
    }

    pub fn generic(head: impl Into<String>, args: Vec<TypeRef>) -> Self {
        TypeRef {
            head: head.into(),
            args,
        }
    }

    pub fn inferred() -> Self {
        TypeRef::simple(INFERRED_HEAD)
    }

    /// A head without dots may name a type parameter or abstract type member.
    pub fn is_single_identifier(&self) -> bool {
        !self.head.contains('.')
    }

    /// Visits this reference and all nested type arguments, depth first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a TypeRef)) {
        f(self);
        for arg in &self.args {
            arg.walk(f);
        }
    }
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.head)?;
        if !self.args.is_empty() {
            f.write_str("[")?;
            for (i, arg) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{arg}")?;
            }
            f.write_str("]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub reassignable: bool,
    pub visibility: Visibility,
    pub declared_type: TypeRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateDef {
    pub name: String,
    pub kind: TemplateKind,
    pub type_params: Vec<String>,
    pub abstract_type_members: BTreeSet<String>,
    pub parents: Vec<TypeRef>,
    pub fields: Vec<FieldDecl>,
}

impl TemplateDef {
    pub fn new(name: impl Into<String>, kind: TemplateKind) -> Self {
        TemplateDef {
            name: name.into(),
            kind,
            type_params: Vec::new(),
            abstract_type_members: BTreeSet::new(),
            parents: Vec::new(),
            fields: Vec::new(),
        }
    }

    /// True if `ident` is a type parameter or abstract type member of this template.
    pub fn declares_abstract(&self, ident: &str) -> bool {
        self.type_params.iter().any(|p| p == ident) || self.abstract_type_members.contains(ident)
    }

    pub fn has_abstract_types(&self) -> bool {
        !self.type_params.is_empty() || !self.abstract_type_members.is_empty()
    }

    /// Every type reference in parents and field types, including nested arguments.
    pub fn type_refs(&self) -> impl Iterator<Item = &TypeRef> {
        self.parents
            .iter()
            .chain(self.fields.iter().map(|f| &f.declared_type))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrError {
    #[error("malformed document at {path}: {message}")]
    Malformed { path: String, message: String },
    #[error("duplicate template name '{name}' at {path}")]
    DuplicateName { path: String, name: String },
    #[error("unknown template kind '{kind}' at {path}")]
    UnknownKind { path: String, kind: String },
    #[error("invalid template at {path}: {message}")]
    Invalid { path: String, message: String },
}

impl IrError {
    /// Index of the offending template, when the error is tied to one.
    pub fn template_index(&self) -> Option<usize> {
        let path = match self {
            IrError::Malformed { path, .. }
            | IrError::DuplicateName { path, .. }
            | IrError::UnknownKind { path, .. }
            | IrError::Invalid { path, .. } => path,
        };
        let rest = path.strip_prefix("templates[")?;
        rest[..rest.find(']')?].parse().ok()
    }
}

/// A validated corpus of templates. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemplateGraph {
    templates: IndexMap<String, TemplateDef>,
    externals: BTreeSet<String>,
}

impl TemplateGraph {
    /// Validates `defs` and builds the graph, keeping the given order.
    pub fn from_templates(defs: Vec<TemplateDef>) -> Result<Self, IrError> {
        let mut templates = IndexMap::with_capacity(defs.len());
        for (i, def) in defs.into_iter().enumerate() {
            validate_template(i, &def)?;
            if templates.contains_key(&def.name) {
                return Err(IrError::DuplicateName {
                    path: format!("templates[{i}].name"),
                    name: def.name,
                });
            }
            templates.insert(def.name.clone(), def);
        }

        let mut externals = BTreeSet::new();
        for (i, def) in templates.values().enumerate() {
            for (j, parent) in def.parents.iter().enumerate() {
                check_refs(
                    &templates,
                    def,
                    parent,
                    &format!("templates[{i}].parents[{j}]"),
                )?;
            }
            for (j, field) in def.fields.iter().enumerate() {
                check_refs(
                    &templates,
                    def,
                    &field.declared_type,
                    &format!("templates[{i}].fields[{j}].type"),
                )?;
            }
            for r in def.type_refs() {
                r.walk(&mut |t| {
                    let abstract_here = t.is_single_identifier() && def.declares_abstract(&t.head);
                    if !abstract_here && !templates.contains_key(&t.head) {
                        externals.insert(t.head.clone());
                    }
                });
            }
        }

        Ok(TemplateGraph {
            templates,
            externals,
        })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&TemplateDef> {
        self.templates.get(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.templates.get_index_of(name)
    }

    pub fn by_index(&self, index: usize) -> &TemplateDef {
        &self.templates[index]
    }

    pub fn templates(&self) -> impl ExactSizeIterator<Item = &TemplateDef> {
        self.templates.values()
    }

    pub fn names(&self) -> impl ExactSizeIterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn externals(&self) -> &BTreeSet<String> {
        &self.externals
    }

    pub fn into_templates(self) -> Vec<TemplateDef> {
        self.templates.into_values().collect()
    }
}

fn validate_template(i: usize, def: &TemplateDef) -> Result<(), IrError> {
    let invalid = |message: String| IrError::Invalid {
        path: format!("templates[{i}]"),
        message,
    };
    if def.name.is_empty() {
        return Err(invalid("empty template name".into()));
    }
    if def.kind.is_object_like() {
        if !def.type_params.is_empty() {
            return Err(invalid(format!(
                "{} '{}' cannot have type parameters",
                def.kind.ir_name(),
                def.name
            )));
        }
        if !def.abstract_type_members.is_empty() {
            return Err(invalid(format!(
                "{} '{}' cannot have abstract type members",
                def.kind.ir_name(),
                def.name
            )));
        }
    }
    if def.kind == TemplateKind::AnonClass && def.parents.len() != 1 {
        return Err(invalid(format!(
            "anonymous class '{}' must have exactly one parent, found {}",
            def.name,
            def.parents.len()
        )));
    }
    let mut seen = HashSet::new();
    for p in &def.type_params {
        if !seen.insert(p.as_str()) {
            return Err(invalid(format!("duplicate type parameter '{p}'")));
        }
        if def.abstract_type_members.contains(p) {
            return Err(invalid(format!(
                "'{p}' is both a type parameter and an abstract type member"
            )));
        }
    }
    let mut seen = HashSet::new();
    for f in &def.fields {
        if !seen.insert(f.name.as_str()) {
            return Err(invalid(format!("duplicate field '{}'", f.name)));
        }
    }
    Ok(())
}

/// Rejects type arguments applied to non-generic templates of the graph.
fn check_refs(
    templates: &IndexMap<String, TemplateDef>,
    scope: &TemplateDef,
    r: &TypeRef,
    path: &str,
) -> Result<(), IrError> {
    if r.head.is_empty() {
        return Err(IrError::Malformed {
            path: format!("{path}.head"),
            message: "empty type name".into(),
        });
    }
    let abstract_here = r.is_single_identifier() && scope.declares_abstract(&r.head);
    if !abstract_here && !r.args.is_empty() {
        if let Some(target) = templates.get(&r.head) {
            if target.type_params.is_empty() {
                return Err(IrError::Invalid {
                    path: path.to_string(),
                    message: format!(
                        "'{}' is not generic but is applied to type arguments",
                        r.head
                    ),
                });
            }
        }
    }
    for (k, arg) in r.args.iter().enumerate() {
        check_refs(templates, scope, arg, &format!("{path}.args[{k}]"))?;
    }
    Ok(())
}

/// How a type reference's head is understood from inside a template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Internal(String),
    AbstractInScope(String),
    Assumed(Verdict),
    Unknown,
}

/// Configured verdicts for types the analyzer cannot see.
pub type AssumptionMap = BTreeMap<String, Verdict>;

/// Resolution order: the scope's abstract types, then the graph, then the
/// assumption list. Anything else is unknown.
pub fn resolve_type_ref(
    graph: &TemplateGraph,
    scope: &TemplateDef,
    r: &TypeRef,
    assumptions: &AssumptionMap,
) -> Resolution {
    if r.is_single_identifier() && scope.declares_abstract(&r.head) {
        Resolution::AbstractInScope(r.head.clone())
    } else if graph.templates.contains_key(&r.head) {
        Resolution::Internal(r.head.clone())
    } else if let Some(v) = assumptions.get(&r.head) {
        Resolution::Assumed(*v)
    } else {
        Resolution::Unknown
    }
}

// Document form. Field order below is the serialized order.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocRepr {
    templates: Vec<TemplateRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateRepr {
    name: String,
    kind: String,
    #[serde(default)]
    type_params: Vec<String>,
    #[serde(default)]
    abstract_types: Vec<String>,
    #[serde(default)]
    parents: Vec<TypeRefRepr>,
    #[serde(default)]
    fields: Vec<FieldRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldRepr {
    name: String,
    #[serde(rename = "var", default)]
    reassignable: bool,
    #[serde(default)]
    private: bool,
    #[serde(rename = "type")]
    declared_type: TypeRefRepr,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TypeRefRepr {
    head: String,
    #[serde(default)]
    args: Vec<TypeRefRepr>,
}

impl From<&TypeRef> for TypeRefRepr {
    fn from(r: &TypeRef) -> Self {
        TypeRefRepr {
            head: r.head.clone(),
            args: r.args.iter().map(Into::into).collect(),
        }
    }
}

impl From<TypeRefRepr> for TypeRef {
    fn from(r: TypeRefRepr) -> Self {
        TypeRef {
            head: r.head,
            args: r.args.into_iter().map(Into::into).collect(),
        }
    }
}

/// Parses and validates an IR document.
pub fn load_ir(document: &[u8]) -> Result<TemplateGraph, IrError> {
    let mut de = serde_json::Deserializer::from_slice(document);
    let doc: DocRepr = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        IrError::Malformed {
            path: if path == "." { "document".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    de.end().map_err(|e| IrError::Malformed {
        path: "document".into(),
        message: e.to_string(),
    })?;

    let mut defs = Vec::with_capacity(doc.templates.len());
    for (i, t) in doc.templates.into_iter().enumerate() {
        let kind = TemplateKind::from_ir_name(&t.kind).ok_or_else(|| IrError::UnknownKind {
            path: format!("templates[{i}].kind"),
            kind: t.kind.clone(),
        })?;
        let mut abstract_type_members = BTreeSet::new();
        for a in t.abstract_types {
            if !abstract_type_members.insert(a.clone()) {
                return Err(IrError::Invalid {
                    path: format!("templates[{i}].abstract_types"),
                    message: format!("duplicate abstract type '{a}'"),
                });
            }
        }
        defs.push(TemplateDef {
            name: t.name,
            kind,
            type_params: t.type_params,
            abstract_type_members,
            parents: t.parents.into_iter().map(Into::into).collect(),
            fields: t
                .fields
                .into_iter()
                .map(|f| FieldDecl {
                    name: f.name,
                    reassignable: f.reassignable,
                    visibility: if f.private {
                        Visibility::Private
                    } else {
                        Visibility::Public
                    },
                    declared_type: f.declared_type.into(),
                })
                .collect(),
        });
    }
    TemplateGraph::from_templates(defs)
}

/// Pretty-printed UTF-8 JSON with a trailing newline.
pub fn serialize_ir(graph: &TemplateGraph) -> Vec<u8> {
    let doc = DocRepr {
        templates: graph
            .templates()
            .map(|t| TemplateRepr {
                name: t.name.clone(),
                kind: t.kind.ir_name().to_string(),
                type_params: t.type_params.clone(),
                abstract_types: t.abstract_type_members.iter().cloned().collect(),
                parents: t.parents.iter().map(Into::into).collect(),
                fields: t
                    .fields
                    .iter()
                    .map(|f| FieldRepr {
                        name: f.name.clone(),
                        reassignable: f.reassignable,
                        private: f.visibility == Visibility::Private,
                        declared_type: (&f.declared_type).into(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("IR document serializes");
    out.push(b'\n');
    out
}
