use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const UNK: &str = "<unk>";

/// Word ↔ row index map. Lookups are lowercased; anything missing resolves
/// to the shared unknown-word row.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    unk: usize,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its ordered word list, which must contain `<unk>`.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry `{w}`")));
            }
        }
        let unk = *index
            .get(UNK)
            .ok_or_else(|| Error::Config("vocabulary lacks an <unk> entry".into()))?;
        Ok(Self { words, index, unk })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn unk_index(&self) -> usize {
        self.unk
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(&word.to_lowercase())
    }

    pub fn lookup(&self, word: &str) -> Option<usize> {
        self.index.get(&word.to_lowercase()).copied()
    }

    /// Row index of `word`, or the unknown row.
    pub fn index_of(&self, word: &str) -> usize {
        self.lookup(word).unwrap_or(self.unk)
    }

    /// Stable digest of the word list and a dimension, stored in model files.
    pub fn fingerprint(&self, dim: usize) -> u64 {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(dim as u64).to_le_bytes());
        for w in &self.words {
            bytes.extend_from_slice(w.as_bytes());
            bytes.push(0);
        }
        crate::seed::fnv1a(&bytes)
    }
}

/// Vocabulary-indexed word vectors (`|V| × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    matrix: Tensor,
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` rows. If no `<unk>` row is present
    /// one is appended, initialized to the mean of all vectors.
    pub fn from_rows(rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let d = rows.first().map(|(_, v)| v.len()).ok_or(Error::Empty("embedding table"))?;
        if d == 0 {
            return Err(Error::Empty("embedding vector"));
        }
        let mut words = Vec::with_capacity(rows.len() + 1);
        let mut index = HashMap::with_capacity(rows.len() + 1);
        let mut data = Vec::with_capacity((rows.len() + 1) * d);
        for (word, vec) in rows {
            if vec.len() != d {
                return Err(Error::EmbeddingDim {
                    expected: d,
                    found: vec.len(),
                });
            }
            let key = word.to_lowercase();
            // first casing wins; pretrained files list the most frequent first
            if index.contains_key(&key) {
                continue;
            }
            index.insert(key.clone(), words.len());
            words.push(key);
            data.extend(vec);
        }
        let unk = match index.get(UNK) {
            Some(&i) => i,
            None => {
                let n = words.len() as f64;
                let mut mean = vec![0.0; d];
                for row in data.chunks(d) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v / n;
                    }
                }
                data.extend(mean);
                index.insert(UNK.to_string(), words.len());
                words.push(UNK.to_string());
                words.len() - 1
            }
        };
        let matrix = Tensor::matrix(words.len(), d, data)?;
        Ok(Self {
            vocab: Vocabulary { words, index, unk },
            matrix,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn unk_index(&self) -> usize {
        self.vocab.unk
    }

    pub fn words(&self) -> &[String] {
        &self.vocab.words
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vocab.contains(word)
    }

    pub fn index_of(&self, word: &str) -> usize {
        self.vocab.index_of(word)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.matrix.data()[i * d..(i + 1) * d]
    }

    /// Vector of an in-vocabulary word; `None` when it would fall back to unk.
    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.vocab.lookup(word).map(|i| self.row(i))
    }

    pub fn fingerprint(&self) -> u64 {
        self.vocab.fingerprint(self.dim())
    }

    /// Sentence matrix of `tokens`: one row per token.
    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Result<SentenceMatrix> {
        if tokens.is_empty() {
            return Err(Error::Empty("embed"));
        }
        let d = self.dim();
        let mut data = Vec::with_capacity(tokens.len() * d);
        for t in tokens {
            data.extend_from_slice(self.row(self.index_of(t.as_ref())));
        }
        Ok(SentenceMatrix(Tensor::matrix(tokens.len(), d, data)?))
    }
}

/// `s × d` matrix whose row `i` is the embedding of token `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceMatrix(Tensor);

impl SentenceMatrix {
    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}
