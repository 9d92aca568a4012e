use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Corpus, Document, EmbeddingPrior};
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IrPoint {
    pub fraction: f64,
    pub precision: f64,
}

/// One representation per document, stacked as rows.
pub fn document_representations(model: &Model, corpus: &Corpus) -> Result<Array2<f64>> {
    let rows = corpus
        .documents
        .par_iter()
        .map(|d| model.document_representation(d))
        .collect::<Result<Vec<_>>>()?;
    stack(rows, model.output_hidden_size())
}

/// Unweighted sum of the embedding vectors of a document's words.
pub fn glove_sum_representation(doc: &Document, prior: &EmbeddingPrior) -> Array1<f64> {
    let mut rep = Array1::zeros(prior.hidden_size());
    for &w in &doc.words {
        rep += &prior.matrix.column(w);
    }
    rep
}

/// [`glove_sum_representation`] for every document, stacked as rows.
pub fn glove_sum_representations(corpus: &Corpus, prior: &EmbeddingPrior) -> Result<Array2<f64>> {
    if prior.vocab_size() != corpus.vocab.len() {
        return Err(Error::Dimension(format!(
            "embedding matrix covers {} tokens, corpus vocabulary has {}",
            prior.vocab_size(),
            corpus.vocab.len()
        )));
    }
    let rows = corpus
        .documents
        .iter()
        .map(|d| glove_sum_representation(d, prior))
        .collect();
    stack(rows, prior.hidden_size())
}

fn stack(rows: Vec<Array1<f64>>, width: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((rows.len(), width));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(&src);
    }
    Ok(out)
}

/// Precision of test-query retrieval over the training set at each fraction, using
/// cosine similarity between document representations.
pub fn retrieval_precision(
    model: &Model,
    train: &Corpus,
    test: &Corpus,
    fractions: &[f64],
) -> Result<Vec<IrPoint>> {
    let train_reps = document_representations(model, train)?;
    let test_reps = document_representations(model, test)?;
    retrieval_precision_from_representations(
        train_reps.view(),
        &train.labels(),
        test_reps.view(),
        &test.labels(),
        fractions,
    )
}

/// Each query retrieves its `max(1, ceil(f·|train|))` most similar training documents.
/// Per query, precision is the mean over the query's labels of the share of retrieved
/// documents carrying that label; the curve averages this over queries.
pub fn retrieval_precision_from_representations(
    train_reps: ArrayView2<f64>,
    train_labels: &[BTreeSet<String>],
    test_reps: ArrayView2<f64>,
    test_labels: &[BTreeSet<String>],
    fractions: &[f64],
) -> Result<Vec<IrPoint>> {
    if train_reps.nrows() != train_labels.len() || test_reps.nrows() != test_labels.len() {
        return Err(Error::Dimension(
            "representation rows and label lists differ in length".into(),
        ));
    }
    if train_reps.ncols() != test_reps.ncols() {
        return Err(Error::Dimension(format!(
            "train representations have {} columns, test {}",
            train_reps.ncols(),
            test_reps.ncols()
        )));
    }
    if train_reps.nrows() == 0 || test_reps.nrows() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if let Some(&f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "retrieval fraction {f} outside (0, 1]"
        )));
    }
    if test_labels.iter().any(BTreeSet::is_empty) {
        return Err(Error::Unlabeled("every query needs at least one label".into()));
    }
    if train_labels.iter().all(BTreeSet::is_empty) {
        return Err(Error::Unlabeled("training documents carry no labels".into()));
    }

    if fractions.is_empty() {
        return Ok(Vec::new());
    }

    let normalize = |m: ArrayView2<f64>| {
        let mut out = m.to_owned();
        for mut row in out.rows_mut() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row /= n;
            }
        }
        out
    };
    let train_n = normalize(train_reps);
    let test_n = normalize(test_reps);
    let n_train = train_n.nrows();
    let counts: Vec<usize> = fractions
        .iter()
        .map(|&f| ((f * n_train as f64).ceil() as usize).clamp(1, n_train))
        .collect();
    let max_count = counts.iter().copied().max().unwrap_or(0);

    let per_query: Vec<Vec<f64>> = (0..test_n.nrows())
        .into_par_iter()
        .map(|qi| {
            let q = test_n.row(qi);
            let labels = &test_labels[qi];
            let sims = train_n.dot(&q);
            let mut order: Vec<usize> = (0..n_train).collect();
            let by_similarity = |a: &usize, b: &usize| {
                sims[*b].total_cmp(&sims[*a]).then_with(|| a.cmp(b))
            };
            if max_count < n_train {
                order.select_nth_unstable_by(max_count - 1, by_similarity);
                order.truncate(max_count);
            }
            order.sort_unstable_by(by_similarity);
            counts
                .iter()
                .map(|&count| {
                    let retrieved = &order[..count];
                    let per_label: f64 = labels
                        .iter()
                        .map(|l| {
                            retrieved
                                .iter()
                                .filter(|&&j| train_labels[j].contains(l))
                                .count() as f64
                                / count as f64
                        })
                        .sum();
                    per_label / labels.len() as f64
                })
                .collect()
        })
        .collect();

    let n_queries = per_query.len() as f64;
    Ok(fractions
        .iter()
        .enumerate()
        .map(|(i, &fraction)| IrPoint {
            fraction,
            precision: per_query.iter().map(|p| p[i]).sum::<f64>() / n_queries,
        })
        .collect())
}
