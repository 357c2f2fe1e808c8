// Copyright 2026 the immucheck authors
// SPDX-License-Identifier: Apache-2.0

//! Aggregation of an [`AnalysisResult`] into per-kind and per-attribute
//! tables, and their text, CSV and JSON renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{AnalysisResult, AttributeKey, TemplateResult};
use crate::ir::{TemplateGraph, TemplateKind};
use crate::lattice::{Cause, Verdict};

/// Verdict counts of one group of templates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub occurrences: u64,
    pub mutable: u64,
    pub shallow: u64,
    pub deep: u64,
    pub cond_deep: u64,
}

impl KindCounts {
    fn count(&mut self, verdict: Verdict) {
        self.occurrences += 1;
        match verdict {
            Verdict::Mutable => self.mutable += 1,
            Verdict::ShallowImmutable => self.shallow += 1,
            Verdict::DeepImmutable => self.deep += 1,
            Verdict::ConditionallyDeep => self.cond_deep += 1,
        }
    }

    fn add(&mut self, other: &KindCounts) {
        self.occurrences += other.occurrences;
        self.mutable += other.mutable;
        self.shallow += other.shallow;
        self.deep += other.deep;
        self.cond_deep += other.cond_deep;
    }

    /// Verdict columns in report order.
    fn verdict_columns(&self) -> [u64; 4] {
        [self.mutable, self.shallow, self.deep, self.cond_deep]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindRow {
    pub kind: TemplateKind,
    #[serde(flatten)]
    pub counts: KindCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindSummaryTable {
    pub rows: Vec<KindRow>,
    pub total: KindCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComboRow {
    pub combo_key: String,
    pub occurrences: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComboTable {
    pub rows: Vec<ComboRow>,
}

impl ComboTable {
    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.occurrences).sum()
    }
}

/// The three tables of a report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportTables {
    pub kind_summary: KindSummaryTable,
    pub mutable_combinations: ComboTable,
    pub shallow_combinations: ComboTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReportError {
    #[error("{0} templates carry no attributes")]
    NoAttributes(Verdict),
    #[error("unknown template '{0}'")]
    UnknownTemplate(String),
    #[error("template '{0}' is not in the analysis result")]
    MissingResult(String),
}

/// Counts templates per kind and verdict, in the fixed kind order.
pub fn summarize_by_kind(
    result: &AnalysisResult,
    graph: &TemplateGraph,
) -> Result<KindSummaryTable, ReportError> {
    let mut per_kind: BTreeMap<TemplateKind, KindCounts> = BTreeMap::new();
    for t in graph.templates() {
        let verdict = result
            .verdict(&t.name)
            .ok_or_else(|| ReportError::MissingResult(t.name.clone()))?;
        per_kind.entry(t.kind).or_default().count(verdict);
    }
    let rows: Vec<KindRow> = TemplateKind::ALL
        .into_iter()
        .map(|kind| KindRow {
            kind,
            counts: per_kind.get(&kind).copied().unwrap_or_default(),
        })
        .collect();
    let mut total = KindCounts::default();
    rows.iter().for_each(|r| total.add(&r.counts));
    Ok(KindSummaryTable { rows, total })
}

/// Space-separated, alphabetically sorted attribute letters.
pub fn combo_key<'a>(attributes: impl IntoIterator<Item = &'a AttributeKey>) -> String {
    let mut letters: Vec<char> = attributes.into_iter().map(|a| a.letter()).collect();
    letters.sort_unstable();
    letters.dedup();
    letters
        .iter()
        .map(char::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Groups the templates with verdict `filter` by their exact attribute set.
pub fn attribute_combinations(
    result: &AnalysisResult,
    filter: Verdict,
) -> Result<ComboTable, ReportError> {
    if !matches!(filter, Verdict::Mutable | Verdict::ShallowImmutable) {
        return Err(ReportError::NoAttributes(filter));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for (_, r) in result.iter().filter(|(_, r)| r.verdict == filter) {
        *counts.entry(combo_key(&r.attributes)).or_default() += 1;
    }
    Ok(ComboTable {
        rows: counts
            .into_iter()
            .map(|(combo_key, occurrences)| ComboRow {
                combo_key,
                occurrences,
            })
            .collect(),
    })
}

/// All three tables for one analysis.
pub fn build_tables(
    result: &AnalysisResult,
    graph: &TemplateGraph,
) -> Result<ReportTables, ReportError> {
    Ok(ReportTables {
        kind_summary: summarize_by_kind(result, graph)?,
        mutable_combinations: attribute_combinations(result, Verdict::Mutable)?,
        shallow_combinations: attribute_combinations(result, Verdict::ShallowImmutable)?,
    })
}

/// `part / whole` as a percentage with one decimal, rounded half up.
/// A zero denominator gives `0.0`.
pub fn percent(part: u64, whole: u64) -> String {
    if whole == 0 {
        return "0.0".to_string();
    }
    let tenths = (u128::from(part) * 2000 + u128::from(whole)) / (2 * u128::from(whole));
    format!("{}.{}", tenths / 10, tenths % 10)
}

/// `"124 (19.8%)"`.
pub fn count_with_percent(part: u64, whole: u64) -> String {
    format!("{part} ({}%)", percent(part, whole))
}

pub fn render_report(tables: &ReportTables, format: Format) -> Vec<u8> {
    match format {
        Format::Text => render_text(tables).into_bytes(),
        Format::Csv => render_csv(tables).into_bytes(),
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(tables).expect("tables serialize");
            out.push(b'\n');
            out
        }
    }
}

const KIND_HEADERS: [&str; 6] = [
    "Kind",
    "Occurrences",
    "Mutable",
    "Shallow",
    "Deep",
    "Cond. Deep",
];

fn kind_cells(label: &str, counts: &KindCounts, grand_total: u64) -> Vec<String> {
    let mut cells = vec![
        label.to_string(),
        count_with_percent(counts.occurrences, grand_total),
    ];
    cells.extend(
        counts
            .verdict_columns()
            .iter()
            .map(|&n| count_with_percent(n, counts.occurrences)),
    );
    cells
}

fn render_text(tables: &ReportTables) -> String {
    let summary = &tables.kind_summary;
    let grand_total = summary.total.occurrences;
    let mut rows: Vec<Vec<String>> = vec![KIND_HEADERS.iter().map(|h| h.to_string()).collect()];
    for row in &summary.rows {
        rows.push(kind_cells(row.kind.label(), &row.counts, grand_total));
    }
    rows.push(kind_cells("Total", &summary.total, grand_total));

    let mut out = String::new();
    out.push_str("Immutability by template kind\n\n");
    out.push_str(&aligned(&rows));
    for (title, table) in [
        (
            "Attributes causing mutability",
            &tables.mutable_combinations,
        ),
        (
            "Attributes causing shallow immutability",
            &tables.shallow_combinations,
        ),
    ] {
        out.push('\n');
        out.push_str(title);
        out.push_str("\n\n");
        let total = table.total();
        let mut rows = vec![vec!["Attributes".to_string(), "Occurrences".to_string()]];
        rows.extend(table.rows.iter().map(|r| {
            vec![
                r.combo_key.clone(),
                count_with_percent(r.occurrences, total),
            ]
        }));
        out.push_str(&aligned(&rows));
    }
    out
}

/// First column left-aligned, the rest right-aligned, two spaces apart.
fn aligned(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..columns)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn render_csv(tables: &ReportTables) -> String {
    let mut out = String::new();
    out.push_str("kind,occurrences,occurrences_pct,mutable,mutable_pct,shallow,shallow_pct,deep,deep_pct,cond_deep,cond_deep_pct\n");
    let summary = &tables.kind_summary;
    let grand_total = summary.total.occurrences;
    let csv_row = |out: &mut String, label: &str, c: &KindCounts| {
        let _ = write!(
            out,
            "{label},{},{}",
            c.occurrences,
            percent(c.occurrences, grand_total)
        );
        for n in c.verdict_columns() {
            let _ = write!(out, ",{n},{}", percent(n, c.occurrences));
        }
        out.push('\n');
    };
    for row in &summary.rows {
        csv_row(&mut out, row.kind.ir_name(), &row.counts);
    }
    if !summary.rows.is_empty() {
        csv_row(&mut out, "total", &summary.total);
    }
    for (key_header, table) in [
        ("mutable_combo", &tables.mutable_combinations),
        ("shallow_combo", &tables.shallow_combinations),
    ] {
        let total = table.total();
        let _ = writeln!(out, "\n{key_header},occurrences,occurrences_pct");
        for r in &table.rows {
            let _ = writeln!(
                out,
                "{},{},{}",
                r.combo_key,
                r.occurrences,
                percent(r.occurrences, total)
            );
        }
    }
    out
}

/// Why `name` got its verdict, one cause per line, ordered by attribute
/// and then parents before fields.
pub fn explain(result: &AnalysisResult, name: &str) -> Result<String, ReportError> {
    let r = result
        .get(name)
        .ok_or_else(|| ReportError::UnknownTemplate(name.to_string()))?;
    if r.evidence.is_empty() {
        return Ok(format!("{name}: {}; no causes\n", r.verdict));
    }
    let mut out = format!("{name}: {}\n", r.verdict);
    let mut evidence: Vec<_> = r.evidence.iter().collect();
    evidence.sort();
    for e in evidence {
        out.push_str(&cause_line(e.attribute, &e.cause));
        out.push('\n');
    }
    Ok(out)
}

fn cause_line(attribute: AttributeKey, cause: &Cause) -> String {
    let what = match (attribute, cause) {
        (AttributeKey::A, Cause::Parent(p)) => format!("parent '{p}' is mutable (assumed)"),
        (AttributeKey::B, Cause::Parent(p)) => format!("parent '{p}' is mutable"),
        (AttributeKey::E, Cause::Parent(p)) => format!("parent '{p}' is unknown"),
        (AttributeKey::F, Cause::Parent(p)) => format!("parent '{p}' is shallow immutable"),
        (AttributeKey::C, Cause::Field(f, _)) => format!("field '{f}' is a public var"),
        (AttributeKey::D, Cause::Field(f, _)) => format!("field '{f}' is a private var"),
        (AttributeKey::G, Cause::Field(f, t)) => format!("field '{f}' has unknown type '{t}'"),
        (AttributeKey::H, Cause::Field(f, t)) => format!("field '{f}' has mutable type '{t}'"),
        (AttributeKey::I, Cause::Field(f, t)) => {
            format!("field '{f}' has mutable type '{t}' (assumed)")
        }
        (AttributeKey::J, Cause::Field(f, t)) => {
            format!("field '{f}' has shallow immutable type '{t}'")
        }
        (a, Cause::Parent(p)) => format!("parent '{p}': {}", a.reason()),
        (a, Cause::Field(f, t)) => format!("field '{f}: {t}': {}", a.reason()),
    };
    format!("{attribute}: {what}")
}

/// One template of a serialized analysis result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultEntry {
    pub name: String,
    pub verdict: Verdict,
    pub attributes: Vec<AttributeKey>,
    pub evidence: Vec<EvidenceEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceEntry {
    pub attribute: AttributeKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub field_type: Option<String>,
}

fn entry(name: &str, r: &TemplateResult) -> ResultEntry {
    let mut records: Vec<_> = r.evidence.iter().collect();
    records.sort();
    let evidence: Vec<EvidenceEntry> = records
        .into_iter()
        .map(|e| match &e.cause {
            Cause::Parent(p) => EvidenceEntry {
                attribute: e.attribute,
                parent: Some(p.to_string()),
                field: None,
                field_type: None,
            },
            Cause::Field(f, t) => EvidenceEntry {
                attribute: e.attribute,
                parent: None,
                field: Some(f.clone()),
                field_type: Some(t.to_string()),
            },
        })
        .collect();
    ResultEntry {
        name: name.to_string(),
        verdict: r.verdict,
        attributes: r.attributes.iter().copied().collect(),
        evidence,
    }
}

/// Per-template verdicts, attributes and evidence in graph order.
pub fn result_entries(result: &AnalysisResult) -> Vec<ResultEntry> {
    result.iter().map(|(name, r)| entry(name, r)).collect()
}

pub fn render_result_json(result: &AnalysisResult) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&result_entries(result)).expect("entries serialize");
    out.push(b'\n');
    out
}
