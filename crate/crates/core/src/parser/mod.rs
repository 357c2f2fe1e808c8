// Copyright 2026 the immucheck authors
// SPDX-License-Identifier: Apache-2.0

//! Recursive-descent parser for the Scala subset the analysis needs.
//!
//! Only the shape of templates matters: kind, type parameters, abstract
//! type members, parents and fields. Method bodies and initializer
//! expressions are skipped, except that `new T { ... }` used directly as a
//! field initializer produces an anonymous class named
//! `<enclosing>$anon$<k>`. Nested templates are named `Outer.Inner`, and
//! simple names that refer to them from inside `Outer` are qualified, so
//! every reference in the resulting graph resolves by exact name.

mod lexer;

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::ir::{
    FieldDecl, IrError, TemplateDef, TemplateGraph, TemplateKind, TypeRef, Visibility,
};

use lexer::{tokenize, Tok, Token};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SourcePosition {
    pub file: String,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourcePosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    pub position: SourcePosition,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.position, self.message)
    }
}

/// A parsed template and where its name was declared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceTemplate {
    pub def: TemplateDef,
    pub position: SourcePosition,
}

/// Parses one file into its top-level, nested and anonymous templates.
pub fn parse_source(file: &str, text: &str) -> Result<Vec<SourceTemplate>, Vec<ParseDiagnostic>> {
    let (tokens, lex_errors) = tokenize(text);
    let mut p = Parser {
        file,
        tokens,
        pos: 0,
        diagnostics: lex_errors
            .into_iter()
            .map(|e| ParseDiagnostic {
                position: SourcePosition {
                    file: file.to_string(),
                    line: e.line,
                    column: e.column,
                },
                message: e.message,
            })
            .collect(),
        out: Vec::new(),
        anon_counters: HashMap::new(),
    };
    p.compilation_unit();
    let mut diagnostics = p.diagnostics;
    if !diagnostics.is_empty() {
        diagnostics.sort_by_key(|d| (d.position.line, d.position.column));
        return Err(diagnostics);
    }
    let mut templates: Vec<SourceTemplate> = p.out;
    qualify_nested_references(&mut templates);
    Ok(templates)
}

/// Parses every file and merges the templates into one validated graph,
/// in the given file order.
pub fn parse_corpus(files: &[(String, String)]) -> Result<TemplateGraph, Vec<ParseDiagnostic>> {
    let mut diagnostics = Vec::new();
    let mut all = Vec::new();
    for (path, text) in files {
        match parse_source(path, text) {
            Ok(templates) => all.extend(templates),
            Err(d) => diagnostics.extend(d),
        }
    }
    if !diagnostics.is_empty() {
        return Err(diagnostics);
    }

    let mut first_seen: HashMap<&str, &SourcePosition> = HashMap::new();
    for t in &all {
        if let Some(first) = first_seen.get(t.def.name.as_str()) {
            diagnostics.push(ParseDiagnostic {
                position: t.position.clone(),
                message: format!(
                    "duplicate template name '{}' (first defined at {first})",
                    t.def.name
                ),
            });
        } else {
            first_seen.insert(&t.def.name, &t.position);
        }
    }
    if !diagnostics.is_empty() {
        return Err(diagnostics);
    }

    let positions: Vec<SourcePosition> = all.iter().map(|t| t.position.clone()).collect();
    TemplateGraph::from_templates(all.into_iter().map(|t| t.def).collect()).map_err(|e: IrError| {
        let position = e
            .template_index()
            .and_then(|i| positions.get(i).cloned())
            .unwrap_or_else(|| SourcePosition {
                file: files.first().map(|f| f.0.clone()).unwrap_or_default(),
                line: 1,
                column: 1,
            });
        vec![ParseDiagnostic {
            position,
            message: e.to_string(),
        }]
    })
}

/// Rewrites simple references to nested templates into their qualified
/// names, searching the referring template's lexical scopes inside out.
fn qualify_nested_references(templates: &mut [SourceTemplate]) {
    let defined: HashSet<String> = templates.iter().map(|t| t.def.name.clone()).collect();
    let scopes: Vec<Vec<String>> = templates
        .iter()
        .map(|t| lexical_scopes(&t.def.name))
        .collect();
    for (t, scopes) in templates.iter_mut().zip(scopes) {
        let def = &mut t.def;
        let abstract_names: HashSet<String> = def
            .type_params
            .iter()
            .chain(&def.abstract_type_members)
            .cloned()
            .collect();
        let qualify = |r: &mut TypeRef| qualify_ref(r, &scopes, &defined, &abstract_names);
        def.parents.iter_mut().for_each(qualify);
        def.fields
            .iter_mut()
            .for_each(|f| qualify_ref(&mut f.declared_type, &scopes, &defined, &abstract_names));
    }
}

/// `A.B$anon$1.C` is nested in `A.B$anon$1.C`, `A.B$anon$1`, `A.B` and `A`.
fn lexical_scopes(name: &str) -> Vec<String> {
    let mut scopes = vec![name.to_string()];
    let mut current = name;
    while let Some(cut) = current.rfind(['.', '$']) {
        current = &current[..cut];
        if let Some(stripped) = current.strip_suffix("$anon") {
            current = stripped;
        }
        if current.is_empty() {
            break;
        }
        scopes.push(current.to_string());
    }
    scopes
}

fn qualify_ref(
    r: &mut TypeRef,
    scopes: &[String],
    defined: &HashSet<String>,
    abstract_names: &HashSet<String>,
) {
    let first = r.head.split('.').next().unwrap_or_default();
    if !abstract_names.contains(first) {
        if let Some(q) = scopes
            .iter()
            .map(|s| format!("{s}.{}", r.head))
            .find(|q| defined.contains(q))
        {
            r.head = q;
        }
    }
    for arg in &mut r.args {
        qualify_ref(arg, scopes, defined, abstract_names);
    }
}

/// Unwinds to the nearest template boundary after a diagnostic.
struct Bail;

type PResult<T> = Result<T, Bail>;

const TEMPLATE_MODIFIERS: &[&str] = &[
    "abstract",
    "sealed",
    "final",
    "implicit",
    "private",
    "protected",
    "override",
];

struct Parser<'a> {
    file: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    diagnostics: Vec<ParseDiagnostic>,
    out: Vec<SourceTemplate>,
    anon_counters: HashMap<String, usize>,
}

struct Param {
    name: String,
    name_tok: Token,
    keyword: Option<bool>,
    visibility: Visibility,
    declared_type: TypeRef,
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, ahead: usize) -> &Token {
        let i = (self.pos + ahead).min(self.tokens.len() - 1);
        &self.tokens[i]
    }

    fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if !self.at_eof() {
            self.pos += 1;
        }
        t
    }

    fn position(&self, t: &Token) -> SourcePosition {
        SourcePosition {
            file: self.file.to_string(),
            line: t.line,
            column: t.column,
        }
    }

    fn error_at<T>(&mut self, t: &Token, message: impl Into<String>) -> PResult<T> {
        self.diagnostics.push(ParseDiagnostic {
            position: self.position(t),
            message: message.into(),
        });
        Err(Bail)
    }

    fn unexpected<T>(&mut self, expected: &str) -> PResult<T> {
        let t = self.peek().clone();
        self.error_at(&t, format!("expected {expected}, found {}", t.tok))
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.peek().is_sym(s) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if self.peek().is_kw(k) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.unexpected(&format!("`{s}`"))
        }
    }

    fn ident(&mut self) -> PResult<(String, Token)> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(name) => {
                let name = name.clone();
                self.advance();
                Ok((name, t))
            }
            _ => self.unexpected("identifier"),
        }
    }

    fn starts_template(&self) -> bool {
        let t = self.peek();
        t.is_kw("class")
            || t.is_kw("trait")
            || t.is_kw("object")
            || (t.is_kw("case")
                && (self.peek_at(1).is_kw("class") || self.peek_at(1).is_kw("object")))
    }

    /// Index of the next template keyword after any modifiers, if the
    /// upcoming tokens are `modifier* template-keyword`.
    fn template_after_modifiers(&self) -> bool {
        let mut i = 0;
        loop {
            let t = self.peek_at(i);
            if TEMPLATE_MODIFIERS.iter().any(|m| t.is_kw(m)) {
                i += 1;
                if self.peek_at(i).is_sym("[") {
                    // private[pkg]
                    i += 3;
                }
                continue;
            }
            return t.is_kw("class")
                || t.is_kw("trait")
                || t.is_kw("object")
                || (t.is_kw("case")
                    && (self.peek_at(i + 1).is_kw("class")
                        || self.peek_at(i + 1).is_kw("object")));
        }
    }

    fn skip_annotations(&mut self) -> PResult<()> {
        while self.peek().is_sym("@") {
            self.advance();
            self.qualified_name()?;
            if self.peek().is_sym("(") {
                let t = self.peek().clone();
                return self.error_at(&t, "annotations with arguments are not supported");
            }
        }
        Ok(())
    }

    fn compilation_unit(&mut self) {
        while !self.at_eof() {
            if self.eat_sym(";") {
                continue;
            }
            if self.peek().is_kw("package") || self.peek().is_kw("import") {
                self.skip_line();
                continue;
            }
            let start = self.pos;
            let result = self.top_level_template();
            if result.is_err() {
                self.recover(start);
            }
        }
    }

    fn top_level_template(&mut self) -> PResult<()> {
        self.skip_annotations()?;
        self.skip_modifiers()?;
        if self.starts_template() {
            self.template(None)
        } else {
            self.unexpected("class, trait or object definition")
        }
    }

    /// Skips to the next line that starts a template.
    fn recover(&mut self, start: usize) {
        if self.pos == start {
            self.advance();
        }
        while !self.at_eof() {
            if self.peek().line_start && self.template_after_modifiers() {
                return;
            }
            self.advance();
        }
    }

    fn skip_line(&mut self) {
        let line = self.peek().line;
        while !self.at_eof() && self.peek().line == line {
            self.advance();
        }
    }

    /// Consumes modifiers; returns the visibility they denote.
    fn skip_modifiers(&mut self) -> PResult<Visibility> {
        let mut visibility = Visibility::Public;
        loop {
            let t = self.peek().clone();
            if t.is_kw("private") || t.is_kw("protected") {
                self.advance();
                let qualifier = if self.eat_sym("[") {
                    let (q, _) = self.ident()?;
                    self.expect_sym("]")?;
                    Some(q)
                } else {
                    None
                };
                // package-qualified and protected access count as public
                if t.is_kw("private") && qualifier.as_deref().is_none_or(|q| q == "this") {
                    visibility = Visibility::Private;
                }
            } else if [
                "abstract", "sealed", "final", "implicit", "override", "lazy",
            ]
            .iter()
            .any(|m| t.is_kw(m))
            {
                self.advance();
            } else {
                return Ok(visibility);
            }
        }
    }

    fn qualified_name(&mut self) -> PResult<String> {
        let (mut name, _) = self.ident()?;
        while self.peek().is_sym(".") && matches!(self.peek_at(1).tok, Tok::Ident(_)) {
            self.advance();
            let (next, _) = self.ident()?;
            name.push('.');
            name.push_str(&next);
        }
        Ok(name)
    }

    fn template(&mut self, enclosing: Option<&str>) -> PResult<()> {
        let is_case = self.eat_kw("case");
        let kw = self.advance();
        let kind = match (is_case, &kw.tok) {
            (false, Tok::Keyword("class")) => TemplateKind::Class,
            (true, Tok::Keyword("class")) => TemplateKind::CaseClass,
            (false, Tok::Keyword("trait")) => TemplateKind::Trait,
            (false, Tok::Keyword("object")) => TemplateKind::Object,
            (true, Tok::Keyword("object")) => TemplateKind::CaseObject,
            _ => {
                return self.error_at(
                    &kw,
                    format!("expected class, trait or object, found {}", kw.tok),
                )
            }
        };
        let (simple, name_tok) = self.ident()?;
        let name = match enclosing {
            Some(outer) => format!("{outer}.{simple}"),
            None => simple,
        };
        let mut def = TemplateDef::new(name.clone(), kind);

        if self.peek().is_sym("[") {
            if kind.is_object_like() {
                let t = self.peek().clone();
                return self.error_at(&t, "objects cannot have type parameters");
            }
            def.type_params = self.type_params()?;
        }

        let slot = self.out.len();
        self.out.push(SourceTemplate {
            def: TemplateDef::new(name.clone(), kind),
            position: self.position(&name_tok),
        });
        match self.template_rest(&mut def, kind) {
            Ok(()) => {
                self.out[slot].def = def;
                Ok(())
            }
            Err(Bail) => {
                self.out.truncate(slot);
                Err(Bail)
            }
        }
    }

    fn template_rest(&mut self, def: &mut TemplateDef, kind: TemplateKind) -> PResult<()> {
        // class C private (x: Int)
        if self.peek().is_kw("private") || self.peek().is_kw("protected") {
            self.skip_modifiers()?;
        }
        let mut first_list = true;
        while self.peek().is_sym("(") {
            if !matches!(kind, TemplateKind::Class | TemplateKind::CaseClass) {
                let t = self.peek().clone();
                return self.error_at(
                    &t,
                    format!("{} cannot have constructor parameters", kind.ir_name()),
                );
            }
            for param in self.ctor_params()? {
                // case class parameters of the first list are public vals
                let field = match (kind, param.keyword) {
                    (TemplateKind::CaseClass, kw) if first_list => {
                        Some((kw.unwrap_or(false), param.visibility))
                    }
                    (_, Some(var)) => Some((var, param.visibility)),
                    (_, None) => None,
                };
                if let Some((reassignable, visibility)) = field {
                    self.add_field(
                        def,
                        &param.name_tok,
                        param.name,
                        reassignable,
                        visibility,
                        param.declared_type,
                    )?;
                }
            }
            first_list = false;
        }

        if self.eat_kw("extends") {
            def.parents.push(self.type_ref()?);
            if self.peek().is_sym("(") {
                self.skip_balanced()?;
            }
            while self.eat_kw("with") {
                def.parents.push(self.type_ref()?);
            }
        }

        if self.peek().is_sym("{") {
            self.template_body(def)?;
        }
        Ok(())
    }

    fn add_field(
        &mut self,
        def: &mut TemplateDef,
        name_tok: &Token,
        name: String,
        reassignable: bool,
        visibility: Visibility,
        declared_type: TypeRef,
    ) -> PResult<()> {
        if def.fields.iter().any(|f| f.name == name) {
            return self.error_at(
                name_tok,
                format!("duplicate field '{name}' in '{}'", def.name),
            );
        }
        def.fields.push(FieldDecl {
            name,
            reassignable,
            visibility,
            declared_type,
        });
        Ok(())
    }

    fn type_params(&mut self) -> PResult<Vec<String>> {
        self.expect_sym("[")?;
        let mut params = Vec::new();
        loop {
            self.skip_annotations()?;
            if self.peek().is_sym("+") || self.peek().is_sym("-") {
                self.advance();
            }
            let (name, tok) = self.ident()?;
            if params.contains(&name) {
                return self.error_at(&tok, format!("duplicate type parameter '{name}'"));
            }
            params.push(name);
            if self.peek().is_sym("[") {
                // higher-kinded parameter shape, ignored
                self.skip_balanced()?;
            }
            self.skip_bounds()?;
            if self.eat_sym(",") {
                continue;
            }
            self.expect_sym("]")?;
            return Ok(params);
        }
    }

    /// `<: T`, `>: T`, `<% T`, `: T` (context bound); parsed and dropped.
    fn skip_bounds(&mut self) -> PResult<()> {
        while ["<:", ">:", "<%", ":"]
            .iter()
            .any(|s| self.peek().is_sym(s))
        {
            self.advance();
            self.type_ref()?;
        }
        Ok(())
    }

    fn ctor_params(&mut self) -> PResult<Vec<Param>> {
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if self.eat_sym(")") {
            return Ok(params);
        }
        if matches!(&self.peek().tok, Tok::Keyword("implicit")) {
            self.advance();
        }
        loop {
            self.skip_annotations()?;
            let visibility = self.skip_modifiers()?;
            let keyword = if self.eat_kw("val") {
                Some(false)
            } else if self.eat_kw("var") {
                Some(true)
            } else {
                None
            };
            let (name, name_tok) = self.ident()?;
            self.expect_sym(":")?;
            // by-name parameter
            self.eat_sym("=>");
            let declared_type = self.type_ref()?;
            // repeated parameter
            self.eat_sym("*");
            if self.eat_sym("=") {
                self.skip_until_any(&[",", ")"])?;
            }
            params.push(Param {
                name,
                name_tok,
                keyword,
                visibility,
                declared_type,
            });
            if self.eat_sym(",") {
                continue;
            }
            self.expect_sym(")")?;
            return Ok(params);
        }
    }

    /// A type reference, with tuple and function types desugared to
    /// `scala.TupleN` and `scala.FunctionN`.
    fn type_ref(&mut self) -> PResult<TypeRef> {
        let base = if self.peek().is_sym("(") {
            self.advance();
            let mut elems = Vec::new();
            if !self.peek().is_sym(")") {
                loop {
                    elems.push(self.type_ref()?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(")")?;
            if self.peek().is_sym("=>") {
                self.advance();
                let result = self.type_ref()?;
                let arity = elems.len();
                elems.push(result);
                return Ok(TypeRef::generic(format!("scala.Function{arity}"), elems));
            }
            match elems.len() {
                1 => elems.pop().expect("one element"),
                n => TypeRef::generic(format!("scala.Tuple{n}"), elems),
            }
        } else if matches!(&self.peek().tok, Tok::Ident(s) if s == "_") {
            self.advance();
            self.skip_bounds()?;
            TypeRef::inferred()
        } else {
            let head = self.qualified_name()?;
            let mut args = Vec::new();
            if self.eat_sym("[") {
                loop {
                    args.push(self.type_ref()?);
                    if self.eat_sym(",") {
                        continue;
                    }
                    self.expect_sym("]")?;
                    break;
                }
            }
            TypeRef::generic(head, args)
        };

        let t = self.peek().clone();
        if t.is_sym("=>") {
            self.advance();
            let result = self.type_ref()?;
            return Ok(TypeRef::generic("scala.Function1", vec![base, result]));
        }
        if t.is_sym("#")
            || (t.is_sym(".") && matches!(&self.peek_at(1).tok, Tok::Ident(s) if s == "type"))
        {
            return self.error_at(&t, "type projections and singleton types are not supported");
        }
        Ok(base)
    }

    fn template_body(&mut self, def: &mut TemplateDef) -> PResult<()> {
        self.expect_sym("{")?;
        loop {
            if self.eat_sym("}") {
                return Ok(());
            }
            if self.at_eof() {
                return self.unexpected("`}`");
            }
            if self.eat_sym(";") {
                continue;
            }
            if self.peek().is_kw("import") {
                self.skip_line();
                continue;
            }
            self.member(def)?;
        }
    }

    fn member(&mut self, def: &mut TemplateDef) -> PResult<()> {
        self.skip_annotations()?;
        let visibility = self.skip_modifiers()?;
        let t = self.peek().clone();
        if self.starts_template() {
            let outer = def.name.clone();
            return self.template(Some(&outer));
        }
        if t.is_kw("val") || t.is_kw("var") {
            self.advance();
            return self.value_member(def, t.is_kw("var"), visibility);
        }
        if t.is_kw("def") {
            self.advance();
            return self.skip_statement();
        }
        if t.is_kw("type") {
            self.advance();
            return self.type_member(def);
        }
        if t.is_kw("case") {
            return self.error_at(&t, "expected `class` or `object` after `case`");
        }
        // initialization statement in the template body
        self.skip_statement()
    }

    fn value_member(
        &mut self,
        def: &mut TemplateDef,
        reassignable: bool,
        visibility: Visibility,
    ) -> PResult<()> {
        if self.peek().is_sym("(") {
            let t = self.peek().clone();
            return self.error_at(&t, "pattern definitions are not supported");
        }
        let (name, name_tok) = self.ident()?;
        let annotated = if self.eat_sym(":") {
            let ty = self.type_ref()?;
            if self.peek().is_kw("with") {
                let t = self.peek().clone();
                return self.error_at(&t, "compound types are not supported");
            }
            Some(ty)
        } else {
            None
        };
        let mut anon = None;
        if self.eat_sym("=") {
            anon = self.initializer(def)?;
        }
        let declared_type = match (annotated, anon) {
            (Some(ty), _) => ty,
            (None, Some(anon_name)) => TypeRef::simple(anon_name),
            (None, None) => TypeRef::inferred(),
        };
        self.add_field(
            def,
            &name_tok,
            name,
            reassignable,
            visibility,
            declared_type,
        )
    }

    /// Skips an initializer; `new T[..](..) { body }` yields an anonymous
    /// class, whose synthesized name is returned.
    fn initializer(&mut self, def: &TemplateDef) -> PResult<Option<String>> {
        if !self.peek().is_kw("new") || self.peek_at(1).is_sym("{") {
            if self.peek().is_kw("new") {
                let t = self.peek_at(1).clone();
                return self.error_at(&t, "anonymous classes need a parent type");
            }
            self.skip_statement()?;
            return Ok(None);
        }
        self.advance();
        let parent = self.type_ref()?;
        while self.peek().is_sym("(") {
            self.skip_balanced()?;
        }
        if self.peek().is_kw("with") {
            let t = self.peek().clone();
            return self.error_at(
                &t,
                "anonymous classes with more than one parent are not supported",
            );
        }
        if !self.peek().is_sym("{") {
            // plain instance creation, possibly followed by more expression
            if !self.at_member_end() {
                self.skip_statement()?;
            }
            return Ok(None);
        }

        let counter = self.anon_counters.entry(def.name.clone()).or_insert(0);
        *counter += 1;
        let name = format!("{}$anon${}", def.name, counter);
        let mut anon = TemplateDef::new(name.clone(), TemplateKind::AnonClass);
        anon.parents.push(parent);
        let position = self.position(&self.peek().clone());
        let slot = self.out.len();
        self.out.push(SourceTemplate {
            def: TemplateDef::new(name.clone(), TemplateKind::AnonClass),
            position,
        });
        self.template_body(&mut anon)?;
        if !anon.abstract_type_members.is_empty() {
            let t = self.tokens[self.pos - 1].clone();
            return self.error_at(&t, "anonymous classes cannot declare abstract type members");
        }
        self.out[slot].def = anon;
        // member selection or application on the new instance
        if !self.at_member_end() {
            self.skip_statement()?;
        }
        Ok(Some(name))
    }

    fn type_member(&mut self, def: &mut TemplateDef) -> PResult<()> {
        let (name, tok) = self.ident()?;
        if self.peek().is_sym("[") {
            self.skip_balanced()?;
        }
        self.skip_bounds()?;
        if self.eat_sym("=") {
            // alias, not abstract
            self.type_ref()?;
            return Ok(());
        }
        if def.kind.is_object_like() {
            return self.error_at(
                &tok,
                format!(
                    "{} cannot declare abstract type members",
                    def.kind.ir_name()
                ),
            );
        }
        if def.type_params.contains(&name) || !def.abstract_type_members.insert(name.clone()) {
            return self.error_at(&tok, format!("duplicate abstract type '{name}'"));
        }
        Ok(())
    }

    fn at_member_end(&self) -> bool {
        let t = self.peek();
        t.tok == Tok::Eof
            || t.is_sym("}")
            || t.is_sym(";")
            || (t.line_start && self.starts_member())
    }

    fn starts_member(&self) -> bool {
        let t = self.peek();
        [
            "val",
            "var",
            "def",
            "type",
            "class",
            "trait",
            "object",
            "case",
            "private",
            "protected",
            "lazy",
            "override",
            "final",
            "abstract",
            "sealed",
            "implicit",
            "import",
        ]
        .iter()
        .any(|k| t.is_kw(k))
            || t.is_sym("@")
    }

    /// Skips an expression or definition body up to the end of the member.
    fn skip_statement(&mut self) -> PResult<()> {
        let mut first = true;
        loop {
            let t = self.peek().clone();
            if t.tok == Tok::Eof || t.is_sym("}") {
                return Ok(());
            }
            if t.is_sym(";") {
                self.advance();
                return Ok(());
            }
            if !first && t.line_start && self.starts_member() {
                return Ok(());
            }
            first = false;
            if t.is_sym("(") || t.is_sym("[") || t.is_sym("{") {
                self.skip_balanced()?;
            } else if t.is_sym(")") || t.is_sym("]") {
                return self.error_at(&t, format!("unbalanced {}", t.tok));
            } else {
                self.advance();
            }
        }
    }

    fn skip_until_any(&mut self, stops: &[&str]) -> PResult<()> {
        loop {
            let t = self.peek().clone();
            if t.tok == Tok::Eof {
                return self.unexpected(
                    &stops
                        .iter()
                        .map(|s| format!("`{s}`"))
                        .collect::<Vec<_>>()
                        .join(" or "),
                );
            }
            if stops.iter().any(|s| t.is_sym(s)) {
                return Ok(());
            }
            if t.is_sym("(") || t.is_sym("[") || t.is_sym("{") {
                self.skip_balanced()?;
            } else if t.is_sym("}") {
                return self.error_at(&t, "unbalanced `}`");
            } else {
                self.advance();
            }
        }
    }

    /// Skips a bracketed group starting at the current opening token.
    fn skip_balanced(&mut self) -> PResult<()> {
        let open = self.advance();
        let mut stack = vec![open];
        while let Some(top) = stack.last() {
            let t = self.peek().clone();
            let closer = match &top.tok {
                Tok::Sym(s) if s == "(" => ")",
                Tok::Sym(s) if s == "[" => "]",
                _ => "}",
            };
            match &t.tok {
                Tok::Eof => {
                    let top = top.clone();
                    return self.error_at(&top, format!("unclosed {}", top.tok));
                }
                Tok::Sym(s) if s == closer => {
                    stack.pop();
                    self.advance();
                }
                Tok::Sym(s) if s == "(" || s == "[" || s == "{" => {
                    stack.push(self.advance());
                }
                Tok::Sym(s) if s == ")" || s == "]" || s == "}" => {
                    return self.error_at(&t, format!("expected `{closer}`, found {}", t.tok));
                }
                _ => {
                    self.advance();
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Vec<TemplateDef> {
        parse_source("t.scala", text)
            .unwrap_or_else(|d| panic!("{d:?}"))
            .into_iter()
            .map(|t| t.def)
            .collect()
    }

    fn field(name: &str, var: bool, ty: TypeRef) -> FieldDecl {
        FieldDecl {
            name: name.into(),
            reassignable: var,
            visibility: Visibility::Public,
            declared_type: ty,
        }
    }

    #[test]
    fn class_with_val_param() {
        let defs = parse("class C(val x: Int)");
        assert_eq!(defs.len(), 1);
        assert_eq!(defs[0].kind, TemplateKind::Class);
        assert_eq!(
            defs[0].fields,
            vec![field("x", false, TypeRef::simple("Int"))]
        );
    }

    #[test]
    fn generic_case_class() {
        let defs = parse("case class P[T](v: T)");
        assert_eq!(defs[0].kind, TemplateKind::CaseClass);
        assert_eq!(defs[0].type_params, vec!["T".to_string()]);
        assert_eq!(
            defs[0].fields,
            vec![field("v", false, TypeRef::simple("T"))]
        );
    }

    #[test]
    fn anonymous_class_synthesis() {
        let defs = parse("class W { val h = new P { var y: Int = 0 } }");
        assert_eq!(defs.len(), 2);
        assert_eq!(defs[0].name, "W");
        assert_eq!(
            defs[0].fields,
            vec![field("h", false, TypeRef::simple("W$anon$1"))]
        );
        assert_eq!(defs[1].name, "W$anon$1");
        assert_eq!(defs[1].kind, TemplateKind::AnonClass);
        assert_eq!(defs[1].parents, vec![TypeRef::simple("P")]);
        assert_eq!(
            defs[1].fields,
            vec![field("y", true, TypeRef::simple("Int"))]
        );
    }

    #[test]
    fn missing_name_is_positioned() {
        let d = parse_source("t.scala", "class {").unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].position.line, d[0].position.column), (1, 7));
        assert!(
            d[0].message.starts_with("expected identifier"),
            "{}",
            d[0].message
        );
        assert_eq!(
            d[0].to_string(),
            "t.scala:1:7: expected identifier, found `{`"
        );
    }

    #[test]
    fn plain_ctor_params_without_keyword_are_not_fields() {
        let defs = parse("class C(a: Int, val b: Int, private var c: Int)");
        assert_eq!(defs[0].fields.len(), 2);
        assert_eq!(defs[0].fields[1].visibility, Visibility::Private);
        assert!(defs[0].fields[1].reassignable);
    }

    #[test]
    fn case_class_params_default_to_public_vals() {
        let defs = parse("case class K(a: Int, var b: Int, private val c: String)(d: Int)");
        let f = &defs[0].fields;
        assert_eq!(f.len(), 3);
        assert!(!f[0].reassignable && f[0].visibility == Visibility::Public);
        assert!(f[1].reassignable);
        assert_eq!(f[2].visibility, Visibility::Private);
    }

    #[test]
    fn every_kind_from_syntax() {
        let defs = parse(
            "class A\ncase class B()\ntrait T\nobject O\ncase object K\nobject H { val x = new T {} }",
        );
        let kinds: HashSet<TemplateKind> = defs.iter().map(|d| d.kind).collect();
        assert_eq!(kinds.len(), 6);
    }

    #[test]
    fn members_defs_types_and_modifiers() {
        let defs = parse(
            r#"
            abstract class Box[+A <: AnyRef, B: Ordering] extends Base[A](1, 2) with Mixin {
              type Elem
              type Alias = List[Int]
              private[this] var count: Int = 0
              protected var seen = Set.empty[Int]
              private[pkg] val shared: Map[String, (Int, Int) => Boolean] = Map()
              lazy val cached = compute()
              def compute(): Int = {
                val local = 3
                local * 2
              }
              def short = 1 +
                2
              require(count >= 0)
              override val name: String = "box"
            }
            "#,
        );
        let d = &defs[0];
        assert_eq!(d.type_params, vec!["A".to_string(), "B".to_string()]);
        assert_eq!(
            d.abstract_type_members.iter().collect::<Vec<_>>(),
            vec!["Elem"]
        );
        assert_eq!(
            d.parents,
            vec![
                TypeRef::generic("Base", vec![TypeRef::simple("A")]),
                TypeRef::simple("Mixin")
            ]
        );
        let names: Vec<_> = d.fields.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, vec!["count", "seen", "shared", "cached", "name"]);
        assert_eq!(d.fields[0].visibility, Visibility::Private);
        assert_eq!(d.fields[1].visibility, Visibility::Public);
        assert_eq!(d.fields[1].declared_type, TypeRef::inferred());
        assert_eq!(d.fields[2].visibility, Visibility::Public);
        assert_eq!(
            d.fields[2].declared_type.to_string(),
            "Map[String, scala.Function2[Int, Int, Boolean]]"
        );
        assert!(!d.fields[3].reassignable);
    }

    #[test]
    fn nested_templates_are_qualified() {
        let defs = parse(
            "object Outer {\n  case class Inner(x: Int)\n  val i: Inner = Inner(1)\n  class Deeper { val j: Inner = null }\n}\nclass Other { val k: Inner = null }",
        );
        let names: Vec<_> = defs.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, vec!["Outer", "Outer.Inner", "Outer.Deeper", "Other"]);
        assert_eq!(
            defs[0].fields[0].declared_type,
            TypeRef::simple("Outer.Inner")
        );
        assert_eq!(
            defs[2].fields[0].declared_type,
            TypeRef::simple("Outer.Inner")
        );
        // not lexically enclosed: left as written
        assert_eq!(defs[3].fields[0].declared_type, TypeRef::simple("Inner"));
    }

    #[test]
    fn anonymous_numbering_per_enclosing_template() {
        let defs = parse(
            "class A {\n  val x = new T { }\n  val y = new T { val z = new U { } }\n}\nclass B { val w = new T { } }",
        );
        let names: Vec<_> = defs.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "A",
                "A$anon$1",
                "A$anon$2",
                "A$anon$2$anon$1",
                "B",
                "B$anon$1"
            ]
        );
    }

    #[test]
    fn new_without_body_is_not_anonymous() {
        let defs = parse("class A { val b = new B(1)\n  val c: C = new C }");
        assert_eq!(defs.len(), 1);
        assert_eq!(defs[0].fields[0].declared_type, TypeRef::inferred());
        assert_eq!(defs[0].fields[1].declared_type, TypeRef::simple("C"));
    }

    #[test]
    fn package_and_imports_are_skipped() {
        let defs =
            parse("package a.b\nimport c.d._\n@deprecated class A { import e.f\n val x: Int }");
        assert_eq!(defs.len(), 1);
        assert_eq!(defs[0].fields.len(), 1);
    }

    #[test]
    fn multiple_diagnostics_with_recovery() {
        let d = parse_source(
            "t.scala",
            "class A {\n  val = 3\n}\nobject O[T]\nclass Fine\ntrait {\n",
        )
        .unwrap_err();
        let lines: Vec<usize> = d.iter().map(|d| d.position.line).collect();
        assert_eq!(lines, vec![2, 4, 6], "{d:?}");
    }

    #[test]
    fn lexical_errors_are_reported() {
        let d = parse_source("t.scala", "class A { val s = \"open\n}\n").unwrap_err();
        assert!(d[0].message.contains("unterminated"));
        assert_eq!(d[0].position.line, 1);
    }

    #[test]
    fn duplicate_across_files_names_both_positions() {
        let files = vec![
            ("a.scala".to_string(), "class A".to_string()),
            ("b.scala".to_string(), "\n  class A".to_string()),
        ];
        let d = parse_corpus(&files).unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!(
            d[0].to_string(),
            "b.scala:2:9: duplicate template name 'A' (first defined at a.scala:1:7)"
        );
    }

    #[test]
    fn two_files_two_templates() {
        let files = vec![
            ("a.scala".to_string(), "class A".to_string()),
            ("b.scala".to_string(), "class B extends A".to_string()),
        ];
        let g = parse_corpus(&files).unwrap();
        assert_eq!(g.len(), 2);
        assert!(g.externals().is_empty());
    }

    #[test]
    fn validation_errors_become_diagnostics() {
        let files = vec![(
            "a.scala".to_string(),
            "class A\nclass B(val a: A[Int])".to_string(),
        )];
        let d = parse_corpus(&files).unwrap_err();
        assert_eq!(d[0].position.line, 2);
    }

    #[test]
    fn lexical_scope_chain() {
        assert_eq!(
            lexical_scopes("A.B$anon$1.C"),
            vec!["A.B$anon$1.C", "A.B$anon$1", "A.B", "A"]
        );
        assert_eq!(lexical_scopes("W$anon$2"), vec!["W$anon$2", "W"]);
    }
}
