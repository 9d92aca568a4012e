use serde::Serialize;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::math::cosine;
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicSummary {
    pub topic: usize,
    pub top_words: Vec<String>,
    pub score: Option<f64>,
}

fn check_vocab(model: &Model, vocab: &Vocabulary) -> Result<()> {
    if vocab.len() != model.vocab_size() {
        return Err(Error::Dimension(format!(
            "vocabulary has {} tokens but the model expects {}",
            vocab.len(),
            model.vocab_size()
        )));
    }
    Ok(())
}

/// The `n` tokens with the largest weight `W[topic, w]`; ties go to the lexicographically
/// smaller token.
pub fn topic_top_words(model: &Model, vocab: &Vocabulary, topic: usize, n: usize) -> Result<Vec<String>> {
    check_vocab(model, vocab)?;
    let w = &model.params.w;
    if topic >= w.nrows() {
        return Err(Error::InvalidArgument(format!(
            "topic {topic} out of range for {} hidden units",
            w.nrows()
        )));
    }
    if n > w.ncols() {
        return Err(Error::InvalidArgument(format!(
            "requested {n} words from a vocabulary of {}",
            w.ncols()
        )));
    }
    let row = w.row(topic);
    let mut ids: Vec<usize> = (0..w.ncols()).collect();
    ids.sort_by(|&a, &b| {
        row[b]
            .total_cmp(&row[a])
            .then_with(|| vocab.tokens()[a].cmp(&vocab.tokens()[b]))
    });
    Ok(ids[..n].iter().map(|&i| vocab.tokens()[i].clone()).collect())
}

pub fn topic_summaries(model: &Model, vocab: &Vocabulary, n: usize) -> Result<Vec<TopicSummary>> {
    (0..model.params.hidden_size())
        .map(|topic| {
            Ok(TopicSummary {
                topic,
                top_words: topic_top_words(model, vocab, topic, n)?,
                score: None,
            })
        })
        .collect()
}

/// Words whose `W` columns are most cosine-similar to `word`'s column, excluding `word`.
pub fn nearest_neighbors(
    model: &Model,
    vocab: &Vocabulary,
    word: &str,
    n: usize,
) -> Result<Vec<(String, f64)>> {
    check_vocab(model, vocab)?;
    let query = vocab
        .index_of(word)
        .ok_or_else(|| Error::InvalidArgument(format!("'{word}' is not in the vocabulary")))?;
    let w = &model.params.w;
    let q = w.column(query);
    let mut scored: Vec<(usize, f64)> = (0..w.ncols())
        .filter(|&j| j != query)
        .map(|j| (j, cosine(q, w.column(j))))
        .collect();
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| vocab.tokens()[a.0].cmp(&vocab.tokens()[b.0]))
    });
    scored.truncate(n);
    Ok(scored
        .into_iter()
        .map(|(j, s)| (vocab.tokens()[j].clone(), s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Activation;
    use crate::model::SoftmaxMode;
    use ndarray::array;

    fn setup() -> (Model, Vocabulary) {
        let mut m = Model::zeros(&[2], 4, SoftmaxMode::Full, false, Activation::Sigmoid, 0).unwrap();
        m.params.w = array![[0.0, 0.0, 3.0, 0.0], [1.0, 0.0, 1.0, 0.0]];
        let v = Vocabulary::from_tokens(vec!["d".into(), "c".into(), "b".into(), "a".into()]).unwrap();
        (m, v)
    }

    #[test]
    fn single_positive_entry_ranks_first() {
        let (m, v) = setup();
        assert_eq!(topic_top_words(&m, &v, 0, 1).unwrap(), vec!["b"]);
    }

    #[test]
    fn ties_are_lexicographic() {
        let (m, v) = setup();
        // topic 1: d=1, b=1, c=0, a=0
        assert_eq!(topic_top_words(&m, &v, 1, 4).unwrap(), vec!["b", "d", "a", "c"]);
    }

    #[test]
    fn too_many_words_or_bad_topic() {
        let (m, v) = setup();
        assert!(topic_top_words(&m, &v, 0, 5).is_err());
        assert!(topic_top_words(&m, &v, 2, 1).is_err());
    }

    #[test]
    fn neighbors_by_column_cosine() {
        let mut m = setup().0;
        m.params.w = array![[1.0, 1.0, 0.0, 2.0], [0.0, 0.0, 1.0, 0.0]];
        let v = setup().1;
        let nn = nearest_neighbors(&m, &v, "d", 3).unwrap();
        assert_eq!(nn[0].0, "a");
        assert!((nn[0].1 - 1.0).abs() < 1e-15);
        assert_eq!(nn[1].0, "c");
        assert_eq!(nn[2], ("b".to_string(), 0.0));
        assert!(nearest_neighbors(&m, &v, "zzz", 3).is_err());
    }
}
