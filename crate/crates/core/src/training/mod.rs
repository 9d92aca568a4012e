//! Parameter initialization, stochastic gradient descent and the mixture-weight grid search.

mod gradients;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::Serialize;

pub use self::gradients::{accumulate_gradients, compute_gradients, DeepLayerGradient, GradientSet};

use crate::corpus::{Corpus, EmbeddingPrior};
use crate::error::{Error, Result};
use crate::evaluation::perplexity;
use crate::math::Activation;
use crate::model::{Model, OutputLayer, SoftmaxMode};

/// Model shape chosen before training.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Architecture {
    /// Hidden sizes, word layer first. More than one entry makes a deep model.
    pub hidden: Vec<usize>,
    pub softmax: SoftmaxMode,
    pub bidirectional: bool,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![200],
            softmax: SoftmaxMode::Full,
            bidirectional: false,
            activation: Activation::Sigmoid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
    /// Epochs without validation improvement before stopping; 0 disables early stopping.
    pub early_stop_patience: usize,
    /// DocNADE model whose word layer seeds the new model.
    pub init_from: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::default(),
            learning_rate: 1e-3,
            epochs: 100,
            seed: 0,
            lambda_grid: vec![0.1, 0.5, 1.0],
            early_stop_patience: 10,
            init_from: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.arch.hidden.is_empty() || self.arch.hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "hidden sizes must be a non-empty list of positive integers".into(),
            ));
        }
        Ok(())
    }
}

/// Random initialization, or a warm start from `config.init_from` when set.
pub fn initialize_parameters(
    vocab_size: usize,
    config: &TrainConfig,
    prior: Option<EmbeddingPrior>,
) -> Result<Model> {
    let source = config.init_from.as_ref().map(Model::load).transpose()?;
    initialize_with_source(vocab_size, config, prior, source.as_ref())
}

/// W, U and deep weights ~ U(-r, r) with `r = sqrt(6 / (fan_in + fan_out))`; biases zero.
pub fn initialize_with_source(
    vocab_size: usize,
    config: &TrainConfig,
    prior: Option<EmbeddingPrior>,
    source: Option<&Model>,
) -> Result<Model> {
    let arch = &config.arch;
    let mut model = Model::zeros(
        &arch.hidden,
        vocab_size,
        arch.softmax,
        arch.bidirectional,
        arch.activation,
        config.seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let h = arch.hidden[0] as f64;
    let k = vocab_size as f64;
    let word_range = (6.0 / (h + k)).sqrt();
    fill_uniform(model.params.w.iter_mut(), word_range, &mut rng);
    fill_uniform(model.params.u.iter_mut(), word_range, &mut rng);
    if let Some(deep) = &mut model.deep {
        for layer in &mut deep.layers {
            let (rows, cols) = layer.w.dim();
            let r = (6.0 / (rows + cols) as f64).sqrt();
            fill_uniform(layer.w.iter_mut(), r, &mut rng);
        }
    }
    if let Some(src) = source {
        warm_start(&mut model, src)?;
    }
    match prior {
        Some(p) => model.with_prior(p),
        None => Ok(model),
    }
}

fn fill_uniform<'a>(values: impl Iterator<Item = &'a mut f64>, range: f64, rng: &mut ChaCha8Rng) {
    let dist = Uniform::new_inclusive(-range, range).expect("finite range");
    for x in values {
        *x = dist.sample(rng);
    }
}

/// Copies the word layer (W, c_fwd) and, when shapes agree, the shared output layer
/// (U, b_fwd, and the word tree) from a trained model. Backward tensors are copied only
/// if the source has them; otherwise they stay zero.
pub fn warm_start(model: &mut Model, source: &Model) -> Result<()> {
    let mut mismatched = Vec::new();
    if source.params.w.dim() != model.params.w.dim() {
        mismatched.push(format!(
            "W (source {:?}, target {:?})",
            source.params.w.dim(),
            model.params.w.dim()
        ));
    }
    if source.params.activation != model.params.activation {
        mismatched.push(format!(
            "activation (source {}, target {})",
            source.params.activation, model.params.activation
        ));
    }
    if !mismatched.is_empty() {
        return Err(Error::Dimension(format!(
            "init_from model does not fit: {}",
            mismatched.join(", ")
        )));
    }
    let dst = &mut model.params;
    let src = &source.params;
    dst.w.assign(&src.w);
    dst.c_fwd.assign(&src.c_fwd);
    if let (Some(d), Some(s)) = (&mut dst.c_bwd, &src.c_bwd) {
        d.assign(s);
    }
    let same_output = match (&dst.output, &src.output) {
        (OutputLayer::Full, OutputLayer::Full) => true,
        (OutputLayer::Tree(a), OutputLayer::Tree(b)) => a.leaves() == b.leaves(),
        _ => false,
    };
    if same_output && dst.u.dim() == src.u.dim() {
        dst.output = src.output.clone();
        dst.u.assign(&src.u);
        dst.b_fwd.assign(&src.b_fwd);
        if let (Some(d), Some(s)) = (&mut dst.b_bwd, &src.b_bwd) {
            d.assign(s);
        }
    } else {
        log::warn!("init_from: output layer shapes differ, U is not copied");
    }
    Ok(())
}

/// One pass of per-document SGD in a seeded shuffled order.
/// Returns the mean negative log-likelihood measured before each update.
pub fn sgd_epoch(corpus: &Corpus, model: &mut Model, learning_rate: f64, seed: u64) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut grads = GradientSet::zeros_like(model);
    let mut total_nll = 0.0;
    for &i in &order {
        let doc = &corpus.documents[i];
        grads.clear();
        let report = accumulate_gradients(model, doc, &mut grads)?;
        total_nll -= report.combined;
        apply_update(model, &grads, learning_rate)?;
    }
    Ok(total_nll / corpus.len() as f64)
}

fn apply_update(model: &mut Model, grads: &GradientSet, learning_rate: f64) -> Result<()> {
    if learning_rate == 0.0 {
        return Ok(());
    }
    for ((name, param), (_, grad)) in model.tensors_mut().into_iter().zip(grads.tensors()) {
        for (p, &g) in param.iter_mut().zip(grad) {
            *p -= learning_rate * g;
        }
        if param.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite values in {name} after an update; learning rate {learning_rate} is too high"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_ppl: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation perplexity.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub initial_val_ppl: f64,
}

impl TrainOutcome {
    pub fn best_val_ppl(&self) -> f64 {
        self.history
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .map(|r| r.val_ppl)
            .unwrap_or(self.initial_val_ppl)
    }

    /// `epoch,train_nll,val_ppl` lines with header.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_nll,val_ppl\n");
        for r in &self.history {
            s.push_str(&format!("{},{},{}\n", r.epoch, r.train_nll, r.val_ppl));
        }
        s
    }
}

/// Initializes a model from `config` and trains it. See [`train_from`].
pub fn train(
    train: &Corpus,
    val: &Corpus,
    config: &TrainConfig,
    prior: Option<EmbeddingPrior>,
) -> Result<TrainOutcome> {
    config.validate()?;
    train.vocab.ensure_trainable()?;
    let model = initialize_parameters(train.vocab.len(), config, prior)?;
    train_from(model, train, val, config)
}

/// Runs up to `config.epochs` epochs, keeping the parameters with the lowest validation
/// perplexity and stopping after `early_stop_patience` epochs without improvement.
pub fn train_from(
    mut model: Model,
    train: &Corpus,
    val: &Corpus,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let initial_val_ppl = perplexity(&model, val)?;
    let mut best = (0usize, initial_val_ppl, model.clone());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let seed = config.seed.wrapping_add(epoch as u64);
        let train_nll = sgd_epoch(train, &mut model, config.learning_rate, seed)?;
        let val_ppl = perplexity(&model, val)?;
        log::info!("epoch {epoch}: train_nll={train_nll:.6} val_ppl={val_ppl:.4}");
        history.push(EpochRecord {
            epoch,
            train_nll,
            val_ppl,
        });
        if val_ppl < best.1 {
            best = (epoch, val_ppl, model.clone());
        } else if config.early_stop_patience > 0 && epoch - best.0 >= config.early_stop_patience {
            log::info!("early stop at epoch {epoch}, best epoch {}", best.0);
            break;
        }
    }
    Ok(TrainOutcome {
        model: best.2,
        history,
        best_epoch: best.0,
        initial_val_ppl,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub val_ppl: f64,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_lambda: f64,
    pub table: Vec<LambdaScore>,
    pub outcome: TrainOutcome,
}

/// Trains one model per mixture weight with identical seeds and keeps the lowest
/// validation perplexity; ties go to the smaller weight.
pub fn grid_search_lambda(
    train_corpus: &Corpus,
    val: &Corpus,
    config: &TrainConfig,
    prior: &EmbeddingPrior,
) -> Result<GridSearchResult> {
    if config.lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    let mut table = Vec::with_capacity(config.lambda_grid.len());
    let mut best: Option<(f64, f64, TrainOutcome)> = None;
    for &lambda in &config.lambda_grid {
        let outcome = train(train_corpus, val, config, Some(prior.with_lambda(lambda)?))?;
        let val_ppl = outcome.best_val_ppl();
        log::info!("lambda {lambda}: val_ppl {val_ppl:.4}");
        table.push(LambdaScore { lambda, val_ppl });
        let better = match &best {
            None => true,
            Some((bl, bp, _)) => val_ppl < *bp || (val_ppl == *bp && lambda < *bl),
        };
        if better {
            best = Some((lambda, val_ppl, outcome));
        }
    }
    let (best_lambda, _, outcome) = best.expect("non-empty grid");
    Ok(GridSearchResult {
        best_lambda,
        table,
        outcome,
    })
}
