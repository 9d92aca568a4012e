use std::collections::HashMap;

use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

const SMOOTHING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicCoherence {
    pub topic: usize,
    pub words: Vec<String>,
    /// Mean pairwise NPMI; `None` when no pair could be scored.
    pub score: Option<f64>,
    pub scored_pairs: usize,
    pub skipped_pairs: usize,
    /// Topic words absent from the reference corpus.
    pub missing_words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub window: usize,
    pub windows: usize,
    pub topics: Vec<TopicCoherence>,
    /// Mean over topics that have a score.
    pub mean: Option<f64>,
}

/// Mean pairwise NPMI of each topic's words, with probabilities estimated from boolean
/// co-occurrence in sliding windows of width `window` over the reference documents.
/// Documents shorter than the window count as a single window.
pub fn coherence_npmi(
    topics: &[Vec<String>],
    reference: &Corpus,
    window: usize,
) -> Result<CoherenceReport> {
    if window < 2 {
        return Err(Error::InvalidArgument(format!(
            "coherence window must be at least 2, got {window}"
        )));
    }
    if reference.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = &reference.vocab;

    // Compact ids for the words we need to count.
    let mut slot_of: HashMap<usize, usize> = HashMap::new();
    let topic_slots: Vec<Vec<Option<usize>>> = topics
        .iter()
        .map(|t| {
            t.iter()
                .map(|w| {
                    vocab.index_of(w).map(|id| {
                        let next = slot_of.len();
                        *slot_of.entry(id).or_insert(next)
                    })
                })
                .collect()
        })
        .collect();
    let n_slots = slot_of.len();

    let mut single = vec![0usize; n_slots];
    let mut pair: HashMap<(usize, usize), usize> = HashMap::new();
    let mut present: Vec<usize> = Vec::with_capacity(window);
    let mut seen = vec![false; n_slots];
    let mut windows = 0usize;
    for doc in &reference.documents {
        let starts = doc.len().saturating_sub(window) + 1;
        for start in 0..starts {
            let end = (start + window).min(doc.len());
            windows += 1;
            present.clear();
            for &w in &doc.words[start..end] {
                if let Some(&s) = slot_of.get(&w) {
                    if !seen[s] {
                        seen[s] = true;
                        present.push(s);
                    }
                }
            }
            present.sort_unstable();
            for (i, &a) in present.iter().enumerate() {
                single[a] += 1;
                seen[a] = false;
                for &b in &present[i + 1..] {
                    *pair.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
    }

    let n = windows as f64;
    let npmi = |a: usize, b: usize| -> Option<f64> {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        if single[a] == 0 || single[b] == 0 {
            return None;
        }
        let joint = if a == b {
            single[a]
        } else {
            pair.get(&(a, b)).copied().unwrap_or(0)
        };
        if joint == windows {
            return Some(1.0);
        }
        let p1 = single[a] as f64 / n;
        let p2 = single[b] as f64 / n;
        let p12 = joint as f64 / n + SMOOTHING;
        Some(((p12 / (p1 * p2)).ln() / -p12.ln()).clamp(-1.0, 1.0))
    };

    let mut results = Vec::with_capacity(topics.len());
    for (topic, (words, slots)) in topics.iter().zip(&topic_slots).enumerate() {
        let mut total = 0.0;
        let mut scored = 0;
        let mut skipped = 0;
        for i in 0..slots.len() {
            for j in i + 1..slots.len() {
                let value = match (slots[i], slots[j]) {
                    (Some(a), Some(b)) => npmi(a, b),
                    _ => None,
                };
                match value {
                    Some(v) => {
                        total += v;
                        scored += 1;
                    }
                    None => skipped += 1,
                }
            }
        }
        let missing_words = words
            .iter()
            .zip(slots)
            .filter(|(_, s)| s.is_none_or(|s| single[s] == 0))
            .map(|(w, _)| w.clone())
            .collect();
        results.push(TopicCoherence {
            topic,
            words: words.clone(),
            score: (scored > 0).then(|| total / scored as f64),
            scored_pairs: scored,
            skipped_pairs: skipped,
            missing_words,
        });
    }
    let scored: Vec<f64> = results.iter().filter_map(|t| t.score).collect();
    let mean = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
    Ok(CoherenceReport {
        window,
        windows,
        topics: results,
        mean,
    })
}
