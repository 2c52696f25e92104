use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluator::Lexicon;
use crate::layers::{EmbeddingTable, UNK};
use crate::reranker::UnigramModel;

pub(crate) fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads vectors in the `word v₁ … v_d` layout. With `keep`, only those
/// words (and `<unk>`) are retained; the width is still checked on every
/// line.
pub fn load_embeddings(path: impl AsRef<Path>, keep: Option<&HashSet<String>>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut rows = Vec::new();
    let mut dim: Option<(usize, usize)> = None;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        let rest: Vec<&str> = fields.collect();
        if n == 1 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        if rest.is_empty() {
            return Err(parse_err(path, n, format!("`{word}` has no vector")));
        }
        match dim {
            None => dim = Some((rest.len(), n)),
            Some((d, first)) if d != rest.len() => {
                return Err(parse_err(
                    path,
                    n,
                    format!("vector has {} values, line {first} set the width to {d}", rest.len()),
                ))
            }
            _ => {}
        }
        let word = word.to_lowercase();
        if keep.is_some_and(|k| !k.contains(&word) && word != UNK) {
            continue;
        }
        let vec = rest
            .iter()
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| parse_err(path, n, format!("non-numeric or non-finite value in the vector of `{word}`")))?;
        rows.push((word, vec));
    }
    if rows.is_empty() {
        return Err(Error::NoRecords(path.to_path_buf()));
    }
    let table = EmbeddingTable::from_rows(rows)?;
    log::info!("{}: {} vectors of width {}", path.display(), table.len(), table.dim());
    Ok(table)
}

/// Writes every row, `<unk>` included, so loading gives the same table.
pub fn write_embeddings(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<()> {
    let mut out = String::new();
    for (i, w) in table.words().iter().enumerate() {
        out.push_str(w);
        for v in table.row(i) {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    write(path.as_ref(), &out)
}

/// One word per line (the first whitespace-separated field).
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = read(path)?;
    let words: Vec<&str> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .filter_map(|l| l.split_whitespace().next())
        .collect();
    if words.is_empty() {
        return Err(Error::NoRecords(path.to_path_buf()));
    }
    Ok(Lexicon::new(words))
}

pub fn write_lexicon(path: impl AsRef<Path>, lexicon: &Lexicon) -> Result<()> {
    let mut out = lexicon.words().join("\n");
    out.push('\n');
    write(path.as_ref(), &out)
}

/// Unigram model over the whitespace tokens of a plain-text corpus.
pub fn load_unigram(path: impl AsRef<Path>, alpha: f64) -> Result<UnigramModel> {
    let path = path.as_ref();
    let text = read(path)?;
    if text.split_whitespace().next().is_none() {
        return Err(Error::NoRecords(path.to_path_buf()));
    }
    UnigramModel::from_text(&text, alpha)
}
