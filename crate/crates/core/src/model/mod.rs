//! The DocNADE family of density estimators.
//!
//! A [`Model`] bundles the shallow [`ModelParameters`] with optional
//! [`DeepParameters`]. The same code path covers forward-only DocNADE,
//! bidirectional iDocNADE, the embedding-prior variants (a prior attached to
//! the parameters) and their deep counterparts.

mod io;
mod sweep;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

pub use self::io::{FORMAT_VERSION, MAGIC};
pub use self::sweep::{ActivationSweep, LayerStates};

use crate::corpus::{Document, EmbeddingPrior};
use crate::error::{Error, Result};
use crate::math::{log_softmax, softmax, Activation};
use crate::tree::BinaryWordTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoftmaxMode {
    Full,
    Tree,
}

impl std::str::FromStr for SoftmaxMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "full" => Ok(SoftmaxMode::Full),
            "tree" => Ok(SoftmaxMode::Tree),
            other => Err(format!("unknown softmax mode '{other}' (expected full|tree)")),
        }
    }
}

impl std::fmt::Display for SoftmaxMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SoftmaxMode::Full => "full",
            SoftmaxMode::Tree => "tree",
        })
    }
}

/// Output factorization: a K-way softmax or a path of binary decisions in a word tree.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputLayer {
    Full,
    Tree(BinaryWordTree),
}

impl OutputLayer {
    pub fn mode(&self) -> SoftmaxMode {
        match self {
            OutputLayer::Full => SoftmaxMode::Full,
            OutputLayer::Tree(_) => SoftmaxMode::Tree,
        }
    }

    /// Rows of `U` and length of the output biases.
    pub fn units(&self, vocab: usize) -> usize {
        match self {
            OutputLayer::Full => vocab,
            OutputLayer::Tree(t) => t.internal_nodes(),
        }
    }
}

/// Shallow parameters. `W` is H×K and word `v` reads column `W[:, v]`.
/// `U` is (K or T)×H_out where H_out is the size of the last hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b_fwd: Array1<f64>,
    pub b_bwd: Option<Array1<f64>>,
    pub c_fwd: Array1<f64>,
    pub c_bwd: Option<Array1<f64>>,
    pub activation: Activation,
    pub output: OutputLayer,
    pub prior: Option<EmbeddingPrior>,
}

impl ModelParameters {
    /// All-zero parameters for a single-layer model.
    pub fn zeros(
        hidden: usize,
        vocab: usize,
        mode: SoftmaxMode,
        bidirectional: bool,
        activation: Activation,
        tree_seed: u64,
    ) -> Result<Self> {
        Self::zeros_with_output(hidden, hidden, vocab, mode, bidirectional, activation, tree_seed)
    }

    pub(crate) fn zeros_with_output(
        hidden: usize,
        output_hidden: usize,
        vocab: usize,
        mode: SoftmaxMode,
        bidirectional: bool,
        activation: Activation,
        tree_seed: u64,
    ) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::Vocabulary(format!(
                "vocabulary size {vocab} is below the minimum of 2"
            )));
        }
        if hidden == 0 || output_hidden == 0 {
            return Err(Error::InvalidArgument("hidden size must be positive".into()));
        }
        let output = match mode {
            SoftmaxMode::Full => OutputLayer::Full,
            SoftmaxMode::Tree => OutputLayer::Tree(BinaryWordTree::build(vocab, tree_seed)?),
        };
        let units = output.units(vocab);
        Ok(Self {
            w: Array2::zeros((hidden, vocab)),
            u: Array2::zeros((units, output_hidden)),
            b_fwd: Array1::zeros(units),
            b_bwd: bidirectional.then(|| Array1::zeros(units)),
            c_fwd: Array1::zeros(hidden),
            c_bwd: bidirectional.then(|| Array1::zeros(hidden)),
            activation,
            output,
            prior: None,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.w.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.w.ncols()
    }

    pub fn bidirectional(&self) -> bool {
        self.c_bwd.is_some()
    }

    pub fn softmax_mode(&self) -> SoftmaxMode {
        self.output.mode()
    }

    pub(crate) fn output_bias(&self, direction: Direction) -> Result<&Array1<f64>> {
        match direction {
            Direction::Forward => Ok(&self.b_fwd),
            Direction::Backward => self.b_bwd.as_ref().ok_or_else(forward_only),
        }
    }

    pub(crate) fn hidden_bias(&self, direction: Direction) -> Result<&Array1<f64>> {
        match direction {
            Direction::Forward => Ok(&self.c_fwd),
            Direction::Backward => self.c_bwd.as_ref().ok_or_else(forward_only),
        }
    }
}

fn forward_only() -> Error {
    Error::InvalidArgument("backward direction requested on a forward-only model".into())
}

/// Hidden layer `d ≥ 2`: `h^(d) = g(c^(d) + W^(d) h^(d-1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepLayer {
    /// H_d × H_{d-1}
    pub w: Array2<f64>,
    pub c_fwd: Array1<f64>,
    pub c_bwd: Option<Array1<f64>>,
}

impl DeepLayer {
    pub fn zeros(input: usize, output: usize, bidirectional: bool) -> Self {
        Self {
            w: Array2::zeros((output, input)),
            c_fwd: Array1::zeros(output),
            c_bwd: bidirectional.then(|| Array1::zeros(output)),
        }
    }

    pub(crate) fn bias(&self, direction: Direction) -> Result<&Array1<f64>> {
        match direction {
            Direction::Forward => Ok(&self.c_fwd),
            Direction::Backward => self.c_bwd.as_ref().ok_or_else(forward_only),
        }
    }
}

/// Layers 2..=n of a deep model; layer 1 is the shallow `W`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeepParameters {
    pub layers: Vec<DeepLayer>,
}

impl DeepParameters {
    /// Total hidden-layer count `n`, counting the word layer.
    pub fn depth(&self) -> usize {
        self.layers.len() + 1
    }
}

/// Directional and combined document log-likelihoods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LikelihoodReport {
    pub log_fwd: f64,
    pub log_bwd: Option<f64>,
    pub combined: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: ModelParameters,
    pub deep: Option<DeepParameters>,
}

impl Model {
    pub fn new(params: ModelParameters, deep: Option<DeepParameters>) -> Result<Self> {
        let deep = deep.filter(|d| !d.layers.is_empty());
        let model = Self { params, deep };
        model.validate()?;
        Ok(model)
    }

    /// Zero-initialized model with hidden sizes `hidden[0]` (word layer) … `hidden[n-1]`.
    pub fn zeros(
        hidden: &[usize],
        vocab: usize,
        mode: SoftmaxMode,
        bidirectional: bool,
        activation: Activation,
        tree_seed: u64,
    ) -> Result<Self> {
        let (&first, rest) = hidden
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("at least one hidden layer required".into()))?;
        let last = *hidden.last().unwrap_or(&first);
        let params = ModelParameters::zeros_with_output(
            first,
            last,
            vocab,
            mode,
            bidirectional,
            activation,
            tree_seed,
        )?;
        let mut layers = Vec::with_capacity(rest.len());
        let mut input = first;
        for &size in rest {
            if size == 0 {
                return Err(Error::InvalidArgument("hidden size must be positive".into()));
            }
            layers.push(DeepLayer::zeros(input, size, bidirectional));
            input = size;
        }
        Model::new(params, Some(DeepParameters { layers }))
    }

    pub fn with_prior(mut self, prior: EmbeddingPrior) -> Result<Self> {
        self.params.prior = Some(prior);
        self.validate()?;
        Ok(self)
    }

    pub fn vocab_size(&self) -> usize {
        self.params.vocab_size()
    }

    pub fn bidirectional(&self) -> bool {
        self.params.bidirectional()
    }

    /// Hidden sizes of every layer, word layer first.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.params.hidden_size()];
        if let Some(deep) = &self.deep {
            sizes.extend(deep.layers.iter().map(|l| l.w.nrows()));
        }
        sizes
    }

    /// Size of the layer feeding the output.
    pub fn output_hidden_size(&self) -> usize {
        *self.layer_sizes().last().expect("at least one layer")
    }

    pub fn deep_layers(&self) -> &[DeepLayer] {
        self.deep.as_ref().map(|d| d.layers.as_slice()).unwrap_or(&[])
    }

    pub fn directions(&self) -> &'static [Direction] {
        if self.bidirectional() {
            &[Direction::Forward, Direction::Backward]
        } else {
            &[Direction::Forward]
        }
    }

    /// Checks every shape constraint between tensors.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let h = p.hidden_size();
        let k = p.vocab_size();
        let bidir = p.bidirectional();
        let dim = |what: &str, got: usize, want: usize| -> Result<()> {
            if got != want {
                Err(Error::Dimension(format!("{what}: expected {want}, got {got}")))
            } else {
                Ok(())
            }
        };
        if k < 2 {
            return Err(Error::Vocabulary(format!("vocabulary size {k} below 2")));
        }
        if p.b_bwd.is_some() != bidir {
            return Err(Error::Dimension(
                "b_bwd and c_bwd must both be present or both absent".into(),
            ));
        }
        dim("c_fwd length", p.c_fwd.len(), h)?;
        if let Some(c) = &p.c_bwd {
            dim("c_bwd length", c.len(), h)?;
        }
        let mut input = h;
        for (i, layer) in self.deep_layers().iter().enumerate() {
            let d = i + 2;
            dim(&format!("W^({d}) columns"), layer.w.ncols(), input)?;
            dim(&format!("c_fwd^({d}) length"), layer.c_fwd.len(), layer.w.nrows())?;
            if layer.c_bwd.is_some() != bidir {
                return Err(Error::Dimension(format!(
                    "layer {d} backward bias presence disagrees with the model direction"
                )));
            }
            if let Some(c) = &layer.c_bwd {
                dim(&format!("c_bwd^({d}) length"), c.len(), layer.w.nrows())?;
            }
            input = layer.w.nrows();
        }
        let units = p.output.units(k);
        if let OutputLayer::Tree(t) = &p.output {
            dim("tree leaves", t.leaves(), k)?;
        }
        dim("U rows", p.u.nrows(), units)?;
        dim("U columns", p.u.ncols(), input)?;
        dim("b_fwd length", p.b_fwd.len(), units)?;
        if let Some(b) = &p.b_bwd {
            dim("b_bwd length", b.len(), units)?;
        }
        if let Some(prior) = &p.prior {
            dim("E rows", prior.matrix.nrows(), h)?;
            dim("E columns", prior.matrix.ncols(), k)?;
        }
        Ok(())
    }

    pub fn check_document(&self, doc: &Document) -> Result<()> {
        if doc.is_empty() {
            return Err(Error::EmptyDocument);
        }
        let k = self.vocab_size();
        if let Some(&w) = doc.words.iter().find(|&&w| w >= k) {
            return Err(Error::Dimension(format!(
                "word index {w} outside vocabulary of size {k}"
            )));
        }
        Ok(())
    }

    /// Full-softmax conditional `p(v_i = · | context)` for a last-layer hidden vector.
    pub fn conditional_distribution(
        &self,
        hidden: ArrayView1<f64>,
        direction: Direction,
    ) -> Result<Array1<f64>> {
        if self.params.softmax_mode() != SoftmaxMode::Full {
            return Err(Error::InvalidArgument(
                "conditional_distribution needs full softmax; use the tree leaf probability".into(),
            ));
        }
        if hidden.len() != self.params.u.ncols() {
            return Err(Error::Dimension(format!(
                "hidden vector length {} does not match U columns {}",
                hidden.len(),
                self.params.u.ncols()
            )));
        }
        let logits = self.params.u.dot(&hidden) + self.params.output_bias(direction)?;
        Ok(softmax(logits.view()))
    }

    /// `log p(v_i | context_i)` for every position in one direction.
    pub fn log_conditionals(&self, doc: &Document, direction: Direction) -> Result<Vec<f64>> {
        let states = self.layer_states(doc, direction)?;
        self.log_conditionals_from(states.last(), &doc.words, direction)
    }

    pub(crate) fn log_conditionals_from(
        &self,
        top: &Array2<f64>,
        words: &[usize],
        direction: Direction,
    ) -> Result<Vec<f64>> {
        let p = &self.params;
        let bias = p.output_bias(direction)?;
        match &p.output {
            OutputLayer::Full => {
                let logits = top.dot(&p.u.t()) + bias;
                Ok(logits
                    .rows()
                    .into_iter()
                    .zip(words)
                    .map(|(row, &w)| log_softmax(row)[w])
                    .collect())
            }
            OutputLayer::Tree(tree) => top
                .rows()
                .into_iter()
                .zip(words)
                .map(|(h, &w)| tree.leaf_log_probability(h, w, p.u.view(), bias.view()))
                .collect(),
        }
    }

    pub fn document_log_likelihood(&self, doc: &Document) -> Result<LikelihoodReport> {
        let log_fwd: f64 = self.log_conditionals(doc, Direction::Forward)?.iter().sum();
        if self.bidirectional() {
            let log_bwd: f64 = self.log_conditionals(doc, Direction::Backward)?.iter().sum();
            Ok(LikelihoodReport {
                log_fwd,
                log_bwd: Some(log_bwd),
                combined: 0.5 * (log_fwd + log_bwd),
            })
        } else {
            Ok(LikelihoodReport {
                log_fwd,
                log_bwd: None,
                combined: log_fwd,
            })
        }
    }

    /// Document representation: the sum of the forward and backward states over the
    /// whole document, or the final forward state for forward-only models.
    /// Deep models pass these through the upper layers.
    pub fn document_representation(&self, doc: &Document) -> Result<Array1<f64>> {
        self.check_document(doc)?;
        let p = &self.params;
        let mut total = p.c_fwd.mapv(|_| 0.0);
        for &w in &doc.words {
            self.add_input_column(&mut total, w, 1.0);
        }
        let mut rep: Option<Array1<f64>> = None;
        for &direction in self.directions() {
            let pre = &total + p.hidden_bias(direction)?;
            let mut h = pre.mapv(|x| p.activation.apply(x));
            for layer in self.deep_layers() {
                let z = layer.w.dot(&h) + layer.bias(direction)?;
                h = z.mapv(|x| p.activation.apply(x));
            }
            rep = Some(match rep {
                Some(r) => r + h,
                None => h,
            });
        }
        Ok(rep.expect("at least one direction"))
    }

    /// `acc += sign · (W[:, word] + λ E[:, word])`.
    #[inline]
    pub(crate) fn add_input_column(&self, acc: &mut Array1<f64>, word: usize, sign: f64) {
        let w = self.params.w.column(word);
        match &self.params.prior {
            Some(prior) => {
                let e = prior.matrix.column(word);
                let lambda = prior.lambda;
                for ((a, &wv), &ev) in acc.iter_mut().zip(w.iter()).zip(e.iter()) {
                    *a += sign * (wv + lambda * ev);
                }
            }
            None => {
                for (a, &wv) in acc.iter_mut().zip(w.iter()) {
                    *a += sign * wv;
                }
            }
        }
    }

    /// True when every tensor holds finite values.
    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Learned tensors in canonical order: W, U, b_fwd, b_bwd?, c_fwd, c_bwd?, then per deep
    /// layer W^(d), c_fwd^(d), c_bwd^(d)?. The prior `E` is fixed and not included.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let p = &self.params;
        let mut out: Vec<(String, &[f64])> = vec![
            ("W".into(), slice(&p.w)),
            ("U".into(), slice(&p.u)),
            ("b_fwd".into(), p.b_fwd.as_slice().expect("contiguous")),
        ];
        if let Some(b) = &p.b_bwd {
            out.push(("b_bwd".into(), b.as_slice().expect("contiguous")));
        }
        out.push(("c_fwd".into(), p.c_fwd.as_slice().expect("contiguous")));
        if let Some(c) = &p.c_bwd {
            out.push(("c_bwd".into(), c.as_slice().expect("contiguous")));
        }
        for (i, layer) in self.deep_layers().iter().enumerate() {
            let d = i + 2;
            out.push((format!("W^({d})"), slice(&layer.w)));
            out.push((format!("c_fwd^({d})"), layer.c_fwd.as_slice().expect("contiguous")));
            if let Some(c) = &layer.c_bwd {
                out.push((format!("c_bwd^({d})"), c.as_slice().expect("contiguous")));
            }
        }
        out
    }

    /// Mutable view of [`Self::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let p = &mut self.params;
        let mut out: Vec<(String, &mut [f64])> = vec![
            ("W".into(), slice_mut(&mut p.w)),
            ("U".into(), slice_mut(&mut p.u)),
            ("b_fwd".into(), p.b_fwd.as_slice_mut().expect("contiguous")),
        ];
        if let Some(b) = &mut p.b_bwd {
            out.push(("b_bwd".into(), b.as_slice_mut().expect("contiguous")));
        }
        out.push(("c_fwd".into(), p.c_fwd.as_slice_mut().expect("contiguous")));
        if let Some(c) = &mut p.c_bwd {
            out.push(("c_bwd".into(), c.as_slice_mut().expect("contiguous")));
        }
        if let Some(deep) = &mut self.deep {
            for (i, layer) in deep.layers.iter_mut().enumerate() {
                let d = i + 2;
                out.push((format!("W^({d})"), slice_mut(&mut layer.w)));
                out.push((
                    format!("c_fwd^({d})"),
                    layer.c_fwd.as_slice_mut().expect("contiguous"),
                ));
                if let Some(c) = &mut layer.c_bwd {
                    out.push((format!("c_bwd^({d})"), c.as_slice_mut().expect("contiguous")));
                }
            }
        }
        out
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameter matrices are kept in standard layout")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut()
        .expect("parameter matrices are kept in standard layout")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn zero(k: usize, mode: SoftmaxMode, bidir: bool) -> Model {
        Model::zeros(&[3], k, mode, bidir, Activation::Sigmoid, 0).unwrap()
    }

    #[test]
    fn uniform_full_softmax() {
        let m = zero(3, SoftmaxMode::Full, false);
        let p = m
            .conditional_distribution(array![0.5, 0.5, 0.5].view(), Direction::Forward)
            .unwrap();
        for x in p.iter() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_from_bias() {
        let mut m = zero(3, SoftmaxMode::Full, false);
        m.params.b_fwd = array![0.0, 2f64.ln(), 0.0];
        let p = m
            .conditional_distribution(array![0.1, 0.2, 0.3].view(), Direction::Forward)
            .unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
        assert!((p[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn conditional_distribution_rejects_tree_mode() {
        let m = zero(4, SoftmaxMode::Tree, false);
        assert!(m
            .conditional_distribution(array![0.0, 0.0, 0.0].view(), Direction::Forward)
            .is_err());
    }

    #[test]
    fn backward_on_forward_only_model_is_an_error() {
        let m = zero(4, SoftmaxMode::Full, false);
        assert!(m
            .conditional_distribution(array![0.0, 0.0, 0.0].view(), Direction::Backward)
            .is_err());
    }

    #[test]
    fn zero_model_likelihoods() {
        let doc = Document::new(vec![0, 3, 1]);
        let m = zero(4, SoftmaxMode::Full, true);
        let r = m.document_log_likelihood(&doc).unwrap();
        let expected = 3.0 * 0.25f64.ln();
        assert!((r.log_fwd - expected).abs() < 1e-12);
        assert!((r.log_bwd.unwrap() - expected).abs() < 1e-12);
        assert!((r.combined - expected).abs() < 1e-12);

        let m = zero(4, SoftmaxMode::Tree, true);
        let r = m.document_log_likelihood(&Document::new(vec![2, 2])).unwrap();
        assert!((r.combined - 2.0 * 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_model_representations() {
        let doc = Document::new(vec![0, 1, 1]);
        let r = zero(4, SoftmaxMode::Full, true).document_representation(&doc).unwrap();
        assert!(r.iter().all(|&x| x == 1.0));
        let r = zero(4, SoftmaxMode::Full, false).document_representation(&doc).unwrap();
        assert!(r.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn empty_document_rejected() {
        let m = zero(4, SoftmaxMode::Full, true);
        assert!(matches!(
            m.document_log_likelihood(&Document::new(vec![])),
            Err(Error::EmptyDocument)
        ));
        assert!(m.document_representation(&Document::new(vec![])).is_err());
        assert!(m.document_log_likelihood(&Document::new(vec![4])).is_err());
    }

    #[test]
    fn deep_shapes_chain() {
        let m = Model::zeros(&[4, 3, 2], 6, SoftmaxMode::Full, true, Activation::Sigmoid, 0).unwrap();
        assert_eq!(m.layer_sizes(), vec![4, 3, 2]);
        assert_eq!(m.params.u.dim(), (6, 2));

        let mut bad = m.clone();
        bad.deep.as_mut().unwrap().layers[1].w = Array2::zeros((2, 4));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn prior_shape_checked() {
        let m = zero(4, SoftmaxMode::Full, false);
        let wrong = EmbeddingPrior::new(Array2::zeros((2, 4)), 0.5).unwrap();
        assert!(m.with_prior(wrong).is_err());
    }

    #[test]
    fn tensor_order_is_canonical() {
        let m = Model::zeros(&[4, 3], 6, SoftmaxMode::Tree, true, Activation::Tanh, 3).unwrap();
        let names: Vec<String> = m.tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            vec!["W", "U", "b_fwd", "b_bwd", "c_fwd", "c_bwd", "W^(2)", "c_fwd^(2)", "c_bwd^(2)"]
        );
        let lens: Vec<usize> = m.tensors().into_iter().map(|(_, t)| t.len()).collect();
        assert_eq!(lens, vec![24, 15, 5, 5, 4, 4, 12, 3, 3]);
    }
}
