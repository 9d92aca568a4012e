use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::{Direction, Model};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerplexityReport {
    /// Reported value: `forward`, or the mean of both directions for bidirectional models.
    pub ppl: f64,
    pub forward: f64,
    pub backward: Option<f64>,
}

/// `exp(-(1/N) Σ_t log p(v_t) / |v_t|)` for the given directional log-likelihoods.
fn from_log_likelihoods(per_doc: &[(f64, usize)]) -> f64 {
    let n = per_doc.len() as f64;
    let mean: f64 = per_doc.iter().map(|&(ll, len)| ll / len as f64).sum::<f64>() / n;
    (-mean).exp()
}

pub fn perplexity_report(model: &Model, corpus: &Corpus) -> Result<PerplexityReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut fwd = Vec::with_capacity(corpus.len());
    let mut bwd = Vec::with_capacity(corpus.len());
    for doc in &corpus.documents {
        let len = doc.len();
        fwd.push((model.log_conditionals(doc, Direction::Forward)?.iter().sum(), len));
        if model.bidirectional() {
            bwd.push((model.log_conditionals(doc, Direction::Backward)?.iter().sum(), len));
        }
    }
    let forward = from_log_likelihoods(&fwd);
    let backward = model.bidirectional().then(|| from_log_likelihoods(&bwd));
    let ppl = match backward {
        Some(b) => 0.5 * (forward + b),
        None => forward,
    };
    Ok(PerplexityReport {
        ppl,
        forward,
        backward,
    })
}

/// Average held-out per-word perplexity. Bidirectional models report the mean of the
/// forward and backward perplexities.
pub fn perplexity(model: &Model, corpus: &Corpus) -> Result<f64> {
    perplexity_report(model, corpus).map(|r| r.ppl)
}
