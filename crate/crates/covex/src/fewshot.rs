//! Few-shot exemplar files for query generation.
//!
//! The layout mirrors the rendered prompt:
//!
//! ```text
//! Example 1
//!
//! Article:
//! <passage>
//!
//! Topics:
//! <comma-separated topic names>
//!
//! Keywords: <comma-separated keywords>
//!
//! Generated Queries:
//! - <query>
//! - <query>
//! ```
//!
//! Section bodies may start on the header line or on the following lines.

use std::path::Path;

use covex_core::qgen::QgenExemplar;

use crate::error::{Error, Result};
use crate::fsio;

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Article,
    Topics,
    Keywords,
    Queries,
}

fn is_example_header(line: &str) -> bool {
    line.strip_prefix("Example ")
        .is_some_and(|n| !n.is_empty() && n.trim().bytes().all(|b| b.is_ascii_digit()))
}

fn finish(path: &Path, line: usize, parts: &mut [Vec<String>; 3], queries: &mut Vec<String>) -> Result<QgenExemplar> {
    let join = |v: &mut Vec<String>| std::mem::take(v).join("\n").trim().to_string();
    let ex = QgenExemplar {
        article: join(&mut parts[0]),
        topics: join(&mut parts[1]),
        keywords: join(&mut parts[2]),
        queries: std::mem::take(queries),
    };
    if ex.article.is_empty() || ex.queries.is_empty() {
        return Err(Error::parse(path, line, "exemplar needs an Article and at least one query"));
    }
    Ok(ex)
}

pub fn parse_exemplars(path: &Path, text: &str) -> Result<Vec<QgenExemplar>> {
    let mut out = Vec::new();
    let mut section = Section::None;
    let mut parts: [Vec<String>; 3] = Default::default();
    let mut queries = Vec::new();
    let mut started_at: Option<usize> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if is_example_header(line.trim()) {
            if let Some(start) = started_at {
                out.push(finish(path, start, &mut parts, &mut queries)?);
            }
            started_at = Some(i + 1);
            section = Section::None;
            continue;
        }
        if started_at.is_none() {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::parse(path, i + 1, "expected an `Example N` header"));
        }
        let headers = [
            ("Article:", Section::Article),
            ("Topics:", Section::Topics),
            ("Keywords:", Section::Keywords),
            ("Generated Queries:", Section::Queries),
        ];
        if let Some((rest, s)) = headers
            .iter()
            .find_map(|(h, s)| line.strip_prefix(h).map(|rest| (rest.trim(), *s)))
        {
            section = s;
            if !rest.is_empty() {
                push(section, rest, &mut parts, &mut queries);
            }
            continue;
        }
        match section {
            Section::None if line.trim().is_empty() => {}
            Section::None => return Err(Error::parse(path, i + 1, "text outside any section")),
            _ => push(section, line, &mut parts, &mut queries),
        }
    }
    if let Some(start) = started_at {
        out.push(finish(path, start, &mut parts, &mut queries)?);
    }
    if out.is_empty() {
        return Err(Error::format(path, "no exemplars found"));
    }
    Ok(out)
}

fn push(section: Section, line: &str, parts: &mut [Vec<String>; 3], queries: &mut Vec<String>) {
    match section {
        Section::Article => parts[0].push(line.to_string()),
        Section::Topics => parts[1].push(line.to_string()),
        Section::Keywords => parts[2].push(line.to_string()),
        Section::Queries => {
            let item = line.trim();
            let item = item.strip_prefix("- ").or_else(|| item.strip_prefix("* ")).unwrap_or(item).trim();
            if !item.is_empty() {
                queries.push(item.to_string());
            }
        }
        Section::None => {}
    }
}

pub fn load_exemplars(path: &Path) -> Result<Vec<QgenExemplar>> {
    parse_exemplars(path, &fsio::read_string(path)?)
}

/// Renders exemplars back into the file layout.
pub fn render_exemplars(exemplars: &[QgenExemplar]) -> String {
    let mut out = String::new();
    for (i, ex) in exemplars.iter().enumerate() {
        out.push_str(&format!("Example {}\n\nArticle:\n{}\n\n", i + 1, ex.article));
        out.push_str(&format!("Topics:\n{}\n\nKeywords: {}\n\nGenerated Queries:\n", ex.topics, ex.keywords));
        for q in &ex.queries {
            out.push_str(&format!("- {q}\n"));
        }
        out.push('\n');
    }
    out
}
