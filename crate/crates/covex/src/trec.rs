//! TREC run files: `qid Q0 docid rank score tag`, one hit per line.

use std::collections::BTreeMap;
use std::path::Path;

use covex_core::eval::{Run, RunEntry};

use crate::error::{Error, Result};
use crate::fsio;

/// Maximum ranked depth written per query.
pub const MAX_DEPTH: usize = 1000;

/// `score` at six significant digits in shortest form.
pub fn format_score(score: f64) -> String {
    if score == 0.0 || !score.is_finite() {
        return if score == 0.0 { "0".into() } else { format!("{score}") };
    }
    let rounded: f64 = format!("{score:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

pub fn render_run(run: &Run, tag: &str) -> String {
    let mut out = String::new();
    for (qid, entries) in &run.queries {
        for (i, e) in entries.iter().take(MAX_DEPTH).enumerate() {
            out.push_str(&format!("{qid} Q0 {} {} {} {tag}\n", e.doc_id, i + 1, format_score(e.score)));
        }
    }
    out
}

pub fn write_run(path: &Path, run: &Run, tag: &str) -> Result<()> {
    fsio::atomic_write(path, render_run(run, tag).as_bytes())
}

pub fn parse_run(path: &Path, text: &str) -> Result<Run> {
    // (rank, doc, score, line) per query.
    let mut rows: BTreeMap<String, Vec<(usize, String, f64, usize)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::parse(path, n, format!("expected 6 columns, found {}", cols.len())));
        }
        let rank: usize = cols[3]
            .parse()
            .map_err(|_| Error::parse(path, n, format!("bad rank {:?}", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(path, n, format!("bad score {:?}", cols[4])))?;
        rows.entry(cols[0].to_string())
            .or_default()
            .push((rank, cols[2].to_string(), score, n));
    }
    let mut run = Run::new();
    for (qid, mut hits) in rows {
        hits.sort_by_key(|h| h.0);
        let mut seen = std::collections::BTreeSet::new();
        for w in 0..hits.len() {
            let (_, doc, score, line) = &hits[w];
            if !seen.insert(doc.clone()) {
                return Err(Error::parse(path, *line, format!("duplicate document {doc} for query {qid}")));
            }
            if w > 0 && *score > hits[w - 1].2 {
                return Err(Error::parse(path, *line, format!("score increases with rank for query {qid}")));
            }
        }
        run.insert(
            qid,
            hits.into_iter()
                .map(|(_, doc_id, score, _)| RunEntry { doc_id, score })
                .collect(),
        );
    }
    Ok(run)
}

pub fn read_run(path: &Path) -> Result<Run> {
    parse_run(path, &fsio::read_string(path)?)
}
