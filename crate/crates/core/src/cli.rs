// Copyright 2026 the immucheck authors
// SPDX-License-Identifier: Apache-2.0

//! Command-line driver.
//!
//! Exit codes: 0 on success, 1 when inputs cannot be read, parsed,
//! validated or classified (diagnostics go to the error stream), 2 on bad
//! arguments, including an `--explain` name that is not in the corpus.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use walkdir::WalkDir;

use crate::classifier::{classify_corpus, parse_assumptions};
use crate::ir::{load_ir, AssumptionMap, TemplateGraph};
use crate::parser::parse_corpus;
use crate::report::{build_tables, explain, render_report, Format};

#[derive(Debug, Parser)]
#[command(
    name = "immucheck",
    version,
    about = "Immutability analysis for Scala-like templates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify every template and print the summary tables.
    Analyze {
        /// Source files or directories (searched recursively).
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Inputs are IR documents (`.json`) instead of sources.
        #[arg(long)]
        ir: bool,
        /// Verdicts for external types, one `name verdict` per line.
        #[arg(long, value_name = "FILE")]
        assume: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
        /// Explain one template instead of printing the tables.
        #[arg(long, value_name = "NAME")]
        explain: Option<String>,
        /// Write the output here instead of standard output.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => Format::Text,
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

/// Failure carrying its exit code; the message is already printed.
struct Exit(i32);

/// Runs the tool on `args` (including the program name).
pub fn run_cli<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                2
            } else {
                let _ = write!(stdout, "{}", e.render());
                0
            };
            return code;
        }
    };
    match cli.command {
        Command::Analyze {
            paths,
            ir,
            assume,
            format,
            explain,
            out,
        } => match analyze(
            &paths,
            ir,
            assume.as_deref(),
            format.into(),
            explain.as_deref(),
            out.as_deref(),
            stdout,
            stderr,
        ) {
            Ok(()) => 0,
            Err(Exit(code)) => code,
        },
    }
}

fn fail(stderr: &mut dyn Write, code: i32, message: impl std::fmt::Display) -> Exit {
    let _ = writeln!(stderr, "error: {message}");
    Exit(code)
}

#[allow(clippy::too_many_arguments)]
fn analyze(
    paths: &[PathBuf],
    ir: bool,
    assume: Option<&Path>,
    format: Format,
    explain_name: Option<&str>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), Exit> {
    let extension = if ir { "json" } else { "scala" };
    let files = collect_inputs(paths, extension).map_err(|m| fail(stderr, 1, m))?;
    let mut sources = Vec::with_capacity(files.len());
    for file in &files {
        let text = fs::read_to_string(file)
            .map_err(|e| fail(stderr, 1, format!("{}: {e}", file.display())))?;
        sources.push((file.display().to_string(), text));
    }

    let graph = if ir {
        load_ir_documents(&sources).map_err(|m| fail(stderr, 1, m))?
    } else {
        parse_corpus(&sources).map_err(|diagnostics| {
            for d in &diagnostics {
                let _ = writeln!(stderr, "{d}");
            }
            Exit(1)
        })?
    };

    let assumptions = match assume {
        None => AssumptionMap::new(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| fail(stderr, 1, format!("{}: {e}", path.display())))?;
            parse_assumptions(&text).map_err(|e| {
                fail(
                    stderr,
                    1,
                    format!("{}:{}: {}", path.display(), e.line, e.message),
                )
            })?
        }
    };

    let result = classify_corpus(&graph, &assumptions).map_err(|e| fail(stderr, 1, e))?;
    let output = match explain_name {
        Some(name) => explain(&result, name)
            .map_err(|e| fail(stderr, 2, e))?
            .into_bytes(),
        None => render_report(
            &build_tables(&result, &graph).map_err(|e| fail(stderr, 1, e))?,
            format,
        ),
    };

    match out {
        Some(path) => fs::write(path, &output)
            .map_err(|e| fail(stderr, 1, format!("{}: {e}", path.display()))),
        None => stdout.write_all(&output).map_err(|e| fail(stderr, 1, e)),
    }
}

/// Files named directly, plus files with `extension` below directories,
/// each directory's files in sorted path order.
fn collect_inputs(paths: &[PathBuf], extension: &str) -> Result<Vec<PathBuf>, String> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            for entry in WalkDir::new(path).sort_by_file_name() {
                let entry = entry.map_err(|e| e.to_string())?;
                if entry.file_type().is_file()
                    && entry.path().extension().is_some_and(|e| e == extension)
                {
                    files.push(entry.into_path());
                }
            }
        } else if path.is_file() {
            files.push(path.clone());
        } else {
            return Err(format!("{}: no such file or directory", path.display()));
        }
    }
    Ok(files)
}

/// Loads every document and merges their templates into one graph.
fn load_ir_documents(sources: &[(String, String)]) -> Result<TemplateGraph, String> {
    let mut templates = Vec::new();
    for (path, text) in sources {
        let graph = load_ir(text.as_bytes()).map_err(|e| format!("{path}: {e}"))?;
        templates.extend(graph.into_templates());
    }
    TemplateGraph::from_templates(templates).map_err(|e| e.to_string())
}
