use ndarray::{Array1, Array2, Axis};

use super::{Direction, Model};
use crate::corpus::Document;
use crate::error::{Error, Result};

/// Position-dependent hidden vectors of the word layer for one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSweep {
    pub direction: Direction,
    /// Row `i` is `h_i`, which depends only on `v_<i` (forward) or `v_>i` (backward).
    pub hidden: Array2<f64>,
    /// Running pre-activation after the sweep finished.
    pub accumulator: Array1<f64>,
}

/// Hidden states of every layer for one direction, word layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStates {
    pub direction: Direction,
    pub layers: Vec<Array2<f64>>,
}

impl LayerStates {
    /// States of the layer feeding the output.
    pub fn last(&self) -> &Array2<f64> {
        self.layers.last().expect("at least one layer")
    }
}

impl Model {
    /// Word-layer activations computed in O(HD) with a running accumulator.
    ///
    /// Forward: `a` starts at `c_fwd` and gains the column of `v_i` after `h_i` is read.
    /// Backward: `a` starts at `c_bwd + Σ_{k≥2} x_{v_k}` and loses the column of `v_i`
    /// before `h_i` is read (for `i ≥ 2`), so `h_i` sees exactly `v_>i`.
    pub fn activation_sweep(&self, doc: &Document, direction: Direction) -> Result<ActivationSweep> {
        self.check_document(doc)?;
        let p = &self.params;
        let h = p.hidden_size();
        let g = p.activation;
        let mut hidden = Array2::<f64>::zeros((doc.len(), h));
        let mut acc = p.hidden_bias(direction)?.clone();
        match direction {
            Direction::Forward => {
                for (i, &w) in doc.words.iter().enumerate() {
                    hidden
                        .row_mut(i)
                        .iter_mut()
                        .zip(acc.iter())
                        .for_each(|(dst, &a)| *dst = g.apply(a));
                    self.add_input_column(&mut acc, w, 1.0);
                }
            }
            Direction::Backward => {
                for &w in &doc.words[1..] {
                    self.add_input_column(&mut acc, w, 1.0);
                }
                for (i, &w) in doc.words.iter().enumerate() {
                    if i > 0 {
                        self.add_input_column(&mut acc, w, -1.0);
                    }
                    hidden
                        .row_mut(i)
                        .iter_mut()
                        .zip(acc.iter())
                        .for_each(|(dst, &a)| *dst = g.apply(a));
                }
            }
        }
        Ok(ActivationSweep {
            direction,
            hidden,
            accumulator: acc,
        })
    }

    /// States of all layers; layers 2..n apply `g(c^(d) + W^(d) h^(d-1))` positionwise.
    /// The embedding prior only enters the word layer.
    pub fn layer_states(&self, doc: &Document, direction: Direction) -> Result<LayerStates> {
        let first = self.activation_sweep(doc, direction)?.hidden;
        let mut layers = Vec::with_capacity(1 + self.deep_layers().len());
        layers.push(first);
        for layer in self.deep_layers() {
            let below = layers.last().expect("non-empty");
            if below.ncols() != layer.w.ncols() {
                return Err(Error::Dimension(format!(
                    "layer input {} does not match W columns {}",
                    below.ncols(),
                    layer.w.ncols()
                )));
            }
            let mut z = below.dot(&layer.w.t());
            z += &layer.bias(direction)?.view().insert_axis(Axis(0));
            let g = self.params.activation;
            z.mapv_inplace(|x| g.apply(x));
            layers.push(z);
        }
        Ok(LayerStates { direction, layers })
    }

    /// Last-layer sweep for deep models. Fails on single-layer models.
    pub fn deep_activation_sweep(
        &self,
        doc: &Document,
        direction: Direction,
    ) -> Result<ActivationSweep> {
        if self.deep_layers().is_empty() {
            return Err(Error::InvalidArgument(
                "deep sweep requires at least two hidden layers".into(),
            ));
        }
        let accumulator = self.activation_sweep(doc, direction)?.accumulator;
        let mut states = self.layer_states(doc, direction)?;
        Ok(ActivationSweep {
            direction,
            hidden: states.layers.pop().expect("non-empty"),
            accumulator,
        })
    }
}
