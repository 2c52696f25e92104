use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::text::{parse_err, read, write};
use crate::error::{Error, Result};
use crate::relnet::{ContextBundle, Label};
use crate::reranker::{Candidate, HypothesisSet, RankedCandidate};
use crate::trainer::TrainingPair;

/// Contexts by image id, in id order.
pub type ContextMap = BTreeMap<String, ContextBundle>;

/// Data lines of a `#<kind> v1` file as `(line number, fields)`.
fn records<'a>(path: &Path, text: &'a str, kind: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let header = format!("#{kind} v1");
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        None => return Err(Error::NoRecords(path.to_path_buf())),
        Some((_, l)) if l.trim() == header => {}
        Some((i, l)) => {
            return Err(parse_err(path, i + 1, format!("expected header `{header}`, found `{}`", l.trim())));
        }
    }
    let out: Vec<_> = lines
        .filter(|(_, l)| !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.trim_end_matches(['\r', '\n']).split('\t').collect()))
        .collect();
    if out.is_empty() {
        return Err(Error::NoRecords(path.to_path_buf()));
    }
    Ok(out)
}

fn unit_interval(path: &Path, line: usize, what: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| (0.0..=1.0).contains(v))
        .ok_or_else(|| parse_err(path, line, format!("{what} `{s}` is not a number in [0, 1]")))
}

fn non_empty<'a>(path: &Path, line: usize, what: &str, s: &'a str) -> Result<&'a str> {
    let s = s.trim();
    if s.is_empty() {
        return Err(parse_err(path, line, format!("empty {what}")));
    }
    Ok(s)
}

/// Inserts with last-wins semantics, warning on duplicates.
fn upsert<T>(items: &mut Vec<(String, T)>, index: &mut HashMap<String, usize>, path: &Path, line: usize, id: &str, v: T) {
    match index.get(id) {
        Some(&i) => {
            log::warn!("{}:{line}: duplicate image id `{id}`; the last record wins", path.display());
            items[i].1 = v;
        }
        None => {
            index.insert(id.to_string(), items.len());
            items.push((id.to_string(), v));
        }
    }
}

/// Hypothesis sets with empty contexts; see [`attach_contexts`].
pub fn load_hypotheses(path: impl AsRef<Path>) -> Result<Vec<HypothesisSet>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut items: Vec<(String, HypothesisSet)> = Vec::new();
    let mut index = HashMap::new();
    for (n, f) in records(path, &text, "hypotheses")? {
        if f.len() < 4 || f.len() % 2 != 0 {
            return Err(parse_err(
                path,
                n,
                format!("expected image id, gold and word/score pairs, found {} fields", f.len()),
            ));
        }
        let id = non_empty(path, n, "image id", f[0])?;
        let gold = non_empty(path, n, "gold word", f[1])?;
        let cands = f[2..]
            .chunks(2)
            .map(|c| {
                let w = non_empty(path, n, "candidate word", c[0])?;
                Candidate::new(w, unit_interval(path, n, "score", c[1])?)
            })
            .collect::<Result<Vec<_>>>()?;
        let set = HypothesisSet::new(id, gold, cands, ContextBundle::default())
            .map_err(|e| parse_err(path, n, e.to_string()))?;
        upsert(&mut items, &mut index, path, n, id, set);
    }
    Ok(items.into_iter().map(|(_, s)| s).collect())
}

pub fn write_hypotheses(path: impl AsRef<Path>, sets: &[HypothesisSet]) -> Result<()> {
    let mut out = String::from("#hypotheses v1\n");
    for h in sets {
        let _ = write!(out, "{}\t{}", h.image_id, h.gold);
        for c in &h.candidates {
            let _ = write!(out, "\t{}\t{}", c.word, c.baseline);
        }
        out.push('\n');
    }
    write(path.as_ref(), &out)
}

fn parse_labels(path: &Path, line: usize, field: &str) -> Result<Vec<Label>> {
    field
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (label, conf) = item
                .rsplit_once(':')
                .ok_or_else(|| parse_err(path, line, format!("label `{item}` lacks `:confidence`")))?;
            let conf = unit_interval(path, line, "confidence", conf)?;
            Label::new(label, conf).map_err(|e| parse_err(path, line, e.to_string()))
        })
        .collect()
}

pub fn load_context(path: impl AsRef<Path>) -> Result<ContextMap> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut items: Vec<(String, ContextBundle)> = Vec::new();
    let mut index = HashMap::new();
    for (n, f) in records(path, &text, "context")? {
        if !(3..=4).contains(&f.len()) {
            return Err(parse_err(
                path,
                n,
                format!("expected image id, objects, places and caption, found {} fields", f.len()),
            ));
        }
        let id = non_empty(path, n, "image id", f[0])?;
        let ctx = ContextBundle::new(
            parse_labels(path, n, f[1])?,
            parse_labels(path, n, f[2])?,
            f.get(3).copied().unwrap_or(""),
        );
        upsert(&mut items, &mut index, path, n, id, ctx);
    }
    Ok(items.into_iter().collect())
}

fn format_labels(labels: &[Label]) -> Result<String> {
    labels
        .iter()
        .map(|l| {
            if l.label.contains([';', '\t', '\n']) {
                return Err(Error::Config(format!("label `{}` contains a reserved character", l.label)));
            }
            Ok(format!("{}:{}", l.label, l.confidence))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.join(";"))
}

pub fn write_context(path: impl AsRef<Path>, contexts: &ContextMap) -> Result<()> {
    let mut out = String::from("#context v1\n");
    for (id, c) in contexts {
        let _ = writeln!(
            out,
            "{id}\t{}\t{}\t{}",
            format_labels(&c.objects)?,
            format_labels(&c.places)?,
            c.caption.join(" ")
        );
    }
    write(path.as_ref(), &out)
}

/// Fills in the context of every set; ids without one keep an empty
/// context and are returned (and logged).
pub fn attach_contexts(sets: &mut [HypothesisSet], contexts: &ContextMap) -> Vec<String> {
    let mut unresolved = Vec::new();
    for h in sets.iter_mut() {
        match contexts.get(&h.image_id) {
            Some(c) => h.ctx = c.clone(),
            None => {
                log::warn!("image `{}` has no context record; using an empty context", h.image_id);
                h.ctx = ContextBundle::default();
                unresolved.push(h.image_id.clone());
            }
        }
    }
    unresolved
}

/// Pairs joined with their contexts (empty, with a warning, when missing).
pub fn load_pairs(path: impl AsRef<Path>, contexts: &ContextMap) -> Result<Vec<TrainingPair>> {
    let path = path.as_ref();
    let text = read(path)?;
    records(path, &text, "pairs")?
        .into_iter()
        .map(|(n, f)| {
            if f.len() != 3 {
                return Err(parse_err(path, n, format!("expected 3 fields, found {}", f.len())));
            }
            let id = non_empty(path, n, "image id", f[0])?;
            let ctx = contexts.get(id).cloned().unwrap_or_else(|| {
                log::warn!("{}:{n}: image `{id}` has no context record; using an empty context", path.display());
                ContextBundle::default()
            });
            let word = non_empty(path, n, "candidate", f[1])?;
            TrainingPair::new(word, ctx, unit_interval(path, n, "target", f[2])?)
        })
        .collect()
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[(&str, &TrainingPair)]) -> Result<()> {
    let mut out = String::from("#pairs v1\n");
    for (id, p) in pairs {
        let _ = writeln!(out, "{id}\t{}\t{}", p.candidate, p.target);
    }
    write(path.as_ref(), &out)
}

/// One re-ranked candidate with all score components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub image_id: String,
    pub rank: usize,
    pub candidate: RankedCandidate,
}

pub fn write_traces(path: impl AsRef<Path>, rows: &[TraceRow]) -> Result<()> {
    let mut out = String::from("#trace v1\n");
    for r in rows {
        let c = &r.candidate;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.image_id, r.rank, c.word, c.baseline, c.relatedness, c.context, c.unigram, c.fused
        );
    }
    write(path.as_ref(), &out)
}

pub fn load_traces(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let path = path.as_ref();
    let text = read(path)?;
    records(path, &text, "trace")?
        .into_iter()
        .map(|(n, f)| {
            if f.len() != 8 {
                return Err(parse_err(path, n, format!("expected 8 fields, found {}", f.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(path, n, format!("`{s}` is not a number")))
            };
            Ok(TraceRow {
                image_id: f[0].to_string(),
                rank: f[1].parse().map_err(|_| parse_err(path, n, "bad rank"))?,
                candidate: RankedCandidate {
                    word: f[2].to_string(),
                    baseline: num(f[3])?,
                    relatedness: num(f[4])?,
                    context: num(f[5])?,
                    unigram: num(f[6])?,
                    fused: num(f[7])?,
                },
            })
        })
        .collect()
}
