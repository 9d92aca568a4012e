//! Corpus ingestion: vocabularies, index-encoded documents and embedding priors.
//!
//! Corpus files hold one document per line, `<label[,label]*>\t<token( token)*>`.
//! Tokens are whitespace separated; out-of-vocabulary tokens are dropped and
//! documents that end up empty are skipped and counted in [`IngestSummary`].

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Bijection between tokens and indices `0..K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in index order. Duplicates are rejected.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Vocabulary(format!("invalid token {t:?} at index {i}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    /// Models need at least two words.
    pub fn ensure_trainable(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::Vocabulary(format!(
                "vocabulary size {} is below the minimum of 2",
                self.len()
            )));
        }
        Ok(())
    }

    /// Reads a vocabulary file: one token per line, the 0-based line number is the index.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let token = line.trim_end_matches('\r');
            if token.is_empty() {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "empty token".into(),
                });
            }
            tokens.push(token.to_string());
        }
        Self::from_tokens(tokens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for t in &self.tokens {
            writeln!(out, "{t}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Index-encoded document with its (possibly empty) label set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub words: Vec<usize>,
    pub labels: BTreeSet<String>,
}

impl Document {
    pub fn new(words: Vec<usize>) -> Self {
        Self {
            words,
            labels: BTreeSet::new(),
        }
    }

    pub fn with_labels<I, S>(words: Vec<usize>, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            words,
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Counts gathered while reading a corpus file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub lines: usize,
    pub kept: usize,
    /// Documents with no in-vocabulary token.
    pub skipped: usize,
    pub dropped_tokens: usize,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocab: Vocabulary,
    pub summary: IngestSummary,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, vocab: Vocabulary) -> Result<Self> {
        let k = vocab.len();
        for (i, d) in documents.iter().enumerate() {
            if let Some(&w) = d.words.iter().find(|&&w| w >= k) {
                return Err(Error::Vocabulary(format!(
                    "document {i} contains index {w} outside vocabulary of size {k}"
                )));
            }
        }
        let kept = documents.len();
        Ok(Self {
            documents,
            vocab,
            summary: IngestSummary {
                lines: kept,
                kept,
                ..Default::default()
            },
        })
    }

    /// Number of documents `N`.
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn labels(&self) -> Vec<BTreeSet<String>> {
        self.documents.iter().map(|d| d.labels.clone()).collect()
    }

    pub fn total_words(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }
}

/// Where the vocabulary for [`load_corpus`] comes from.
#[derive(Debug, Clone, Copy)]
pub enum VocabSource<'a> {
    /// Build from this file, keeping the `max_size` most frequent tokens.
    Build { max_size: usize },
    Existing(&'a Vocabulary),
}

/// Keeps the `max_size` most frequent tokens; ties are broken lexicographically.
pub fn build_vocabulary<S: AsRef<str>>(docs: &[Vec<S>], max_size: usize) -> Result<Vocabulary> {
    if max_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "max vocabulary size must be at least 2, got {max_size}"
        )));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        for t in doc {
            *counts.entry(t.as_ref()).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()).collect())
}

/// Encodes tokens against `vocab`, dropping OOV tokens. Returns `None` when nothing survives.
pub fn encode_document<S: AsRef<str>>(
    tokens: &[S],
    vocab: &Vocabulary,
    labels: BTreeSet<String>,
) -> Option<Document> {
    let words: Vec<usize> = tokens
        .iter()
        .filter_map(|t| vocab.index_of(t.as_ref()))
        .collect();
    if words.is_empty() {
        None
    } else {
        Some(Document { words, labels })
    }
}

pub fn decode_document(doc: &Document, vocab: &Vocabulary) -> Vec<String> {
    doc.words
        .iter()
        .map(|&w| vocab.tokens[w].clone())
        .collect()
}

struct RawLine {
    labels: BTreeSet<String>,
    tokens: Vec<String>,
}

fn parse_line(line: &str, number: usize) -> Result<RawLine> {
    let (labels, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
        line: number,
        message: "missing TAB between labels and tokens".into(),
    })?;
    let labels = labels
        .split(',')
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    let tokens = text.split_whitespace().map(String::from).collect();
    Ok(RawLine { labels, tokens })
}

/// Parses corpus lines from any reader. See [`load_corpus`].
pub fn read_corpus<R: BufRead>(reader: R, source: VocabSource<'_>) -> Result<Corpus> {
    let mut raw = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        let line = line.trim_end_matches('\r');
        raw.push(parse_line(line, n + 1)?);
    }

    let vocab = match source {
        VocabSource::Build { max_size } => {
            let token_lists: Vec<&Vec<String>> = raw.iter().map(|r| &r.tokens).collect();
            let docs: Vec<Vec<&str>> = token_lists
                .iter()
                .map(|t| t.iter().map(String::as_str).collect())
                .collect();
            build_vocabulary(&docs, max_size)?
        }
        VocabSource::Existing(v) => v.clone(),
    };

    let mut summary = IngestSummary {
        lines: raw.len(),
        ..Default::default()
    };
    let mut documents = Vec::with_capacity(raw.len());
    for r in raw {
        let total = r.tokens.len();
        match encode_document(&r.tokens, &vocab, r.labels) {
            Some(doc) => {
                summary.dropped_tokens += total - doc.len();
                documents.push(doc);
            }
            None => {
                summary.dropped_tokens += total;
                summary.skipped += 1;
            }
        }
    }
    summary.kept = documents.len();
    if summary.skipped > 0 {
        log::info!(
            "ingest: kept {} of {} documents ({} empty after OOV filtering)",
            summary.kept,
            summary.lines,
            summary.skipped
        );
    }
    Ok(Corpus {
        documents,
        vocab,
        summary,
    })
}

/// Loads a corpus file. With [`VocabSource::Build`] the vocabulary comes from this file only.
pub fn load_corpus(path: impl AsRef<Path>, source: VocabSource<'_>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), source).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Fixed pre-trained embedding matrix `E` (H×K) mixed into hidden pre-activations with weight `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPrior {
    pub matrix: Array2<f64>,
    pub lambda: f64,
    /// Fraction of vocabulary tokens found in the embedding file.
    pub coverage: f64,
}

impl EmbeddingPrior {
    pub fn new(matrix: Array2<f64>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be a non-negative real, got {lambda}"
            )));
        }
        let k = matrix.ncols();
        let covered = matrix
            .columns()
            .into_iter()
            .filter(|c| c.iter().any(|&x| x != 0.0))
            .count();
        let coverage = if k == 0 { 0.0 } else { covered as f64 / k as f64 };
        Ok(Self {
            matrix: matrix.as_standard_layout().into_owned(),
            lambda,
            coverage,
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut p = Self::new(self.matrix.clone(), lambda)?;
        p.coverage = self.coverage;
        Ok(p)
    }

    pub fn hidden_size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Reads `token f_1 … f_H` lines into an H×K matrix aligned with `vocab`.
pub fn read_embedding_prior<R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
    hidden: usize,
    lambda: f64,
) -> Result<EmbeddingPrior> {
    let mut matrix = Array2::<f64>::zeros((hidden, vocab.len()));
    let mut seen = vec![false; vocab.len()];
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: n + 1,
                    message: format!("invalid float {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != hidden {
            return Err(Error::Dimension(format!(
                "embedding dimension {} ≠ H ({hidden}) at line {}",
                values.len(),
                n + 1
            )));
        }
        let Some(j) = vocab.index_of(token) else { continue };
        // First occurrence wins.
        if seen[j] {
            continue;
        }
        seen[j] = true;
        matrix.column_mut(j).assign(&ndarray::ArrayView1::from(&values[..]));
    }
    let covered = seen.iter().filter(|&&s| s).count();
    let mut prior = EmbeddingPrior::new(matrix, lambda)?;
    prior.coverage = covered as f64 / vocab.len().max(1) as f64;
    log::info!(
        "embedding prior: {covered}/{} vocabulary tokens covered",
        vocab.len()
    );
    Ok(prior)
}

pub fn load_embedding_prior(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    hidden: usize,
    lambda: f64,
) -> Result<EmbeddingPrior> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embedding_prior(BufReader::new(file), vocab, hidden, lambda)
}
