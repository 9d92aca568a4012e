//! Exact gradients of the negative document log-likelihood.
//!
//! The objective is the forward negative log-likelihood for DocNADE. For
//! bidirectional models the forward and backward losses are summed, which is
//! twice the negative combined log-likelihood.
//! Each direction is back-propagated separately through the output layer, the
//! deep layers and finally the tied word layer, where position `i`'s
//! pre-activation gradient flows into the columns of every context word
//! (`v_<i` forward, `v_>i` backward) via a running sum in O(HD).

use ndarray::{Array1, Array2, Axis};

use crate::corpus::Document;
use crate::error::Result;
use crate::math::{log_bernoulli_logit, log_softmax, sigmoid};
use crate::model::{Direction, LikelihoodReport, Model, OutputLayer};

#[derive(Debug, Clone, PartialEq)]
pub struct DeepLayerGradient {
    pub w: Array2<f64>,
    pub c_fwd: Array1<f64>,
    pub c_bwd: Option<Array1<f64>>,
}

/// Gradients shaped like the learned tensors of a [`Model`]. The prior `E` has none.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b_fwd: Array1<f64>,
    pub b_bwd: Option<Array1<f64>>,
    pub c_fwd: Array1<f64>,
    pub c_bwd: Option<Array1<f64>>,
    pub deep: Vec<DeepLayerGradient>,
}

impl GradientSet {
    pub fn zeros_like(model: &Model) -> Self {
        let p = &model.params;
        Self {
            w: Array2::zeros(p.w.raw_dim()),
            u: Array2::zeros(p.u.raw_dim()),
            b_fwd: Array1::zeros(p.b_fwd.len()),
            b_bwd: p.b_bwd.as_ref().map(|b| Array1::zeros(b.len())),
            c_fwd: Array1::zeros(p.c_fwd.len()),
            c_bwd: p.c_bwd.as_ref().map(|c| Array1::zeros(c.len())),
            deep: model
                .deep_layers()
                .iter()
                .map(|l| DeepLayerGradient {
                    w: Array2::zeros(l.w.raw_dim()),
                    c_fwd: Array1::zeros(l.c_fwd.len()),
                    c_bwd: l.c_bwd.as_ref().map(|c| Array1::zeros(c.len())),
                })
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        self.w.fill(0.0);
        self.u.fill(0.0);
        self.b_fwd.fill(0.0);
        self.c_fwd.fill(0.0);
        if let Some(b) = &mut self.b_bwd {
            b.fill(0.0);
        }
        if let Some(c) = &mut self.c_bwd {
            c.fill(0.0);
        }
        for l in &mut self.deep {
            l.w.fill(0.0);
            l.c_fwd.fill(0.0);
            if let Some(c) = &mut l.c_bwd {
                c.fill(0.0);
            }
        }
    }

    /// Same order and names as [`Model::tensors`].
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        fn s(a: &Array1<f64>) -> &[f64] {
            a.as_slice().expect("contiguous")
        }
        let mut out: Vec<(String, &[f64])> = vec![
            ("W".into(), self.w.as_slice().expect("contiguous")),
            ("U".into(), self.u.as_slice().expect("contiguous")),
            ("b_fwd".into(), s(&self.b_fwd)),
        ];
        if let Some(b) = &self.b_bwd {
            out.push(("b_bwd".into(), s(b)));
        }
        out.push(("c_fwd".into(), s(&self.c_fwd)));
        if let Some(c) = &self.c_bwd {
            out.push(("c_bwd".into(), s(c)));
        }
        for (i, l) in self.deep.iter().enumerate() {
            let d = i + 2;
            out.push((format!("W^({d})"), l.w.as_slice().expect("contiguous")));
            out.push((format!("c_fwd^({d})"), s(&l.c_fwd)));
            if let Some(c) = &l.c_bwd {
                out.push((format!("c_bwd^({d})"), s(c)));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}

/// Gradient of the document loss (see module docs) for every learned tensor.
pub fn compute_gradients(model: &Model, doc: &Document) -> Result<GradientSet> {
    let mut grads = GradientSet::zeros_like(model);
    accumulate_gradients(model, doc, &mut grads)?;
    Ok(grads)
}

/// Adds the gradient of the document loss into `grads` and returns the likelihood
/// measured on the current parameters.
pub fn accumulate_gradients(
    model: &Model,
    doc: &Document,
    grads: &mut GradientSet,
) -> Result<LikelihoodReport> {
    model.check_document(doc)?;
    let log_fwd = direction_gradients(model, doc, Direction::Forward, grads)?;
    let log_bwd = if model.bidirectional() {
        Some(direction_gradients(model, doc, Direction::Backward, grads)?)
    } else {
        None
    };
    let combined = match log_bwd {
        Some(b) => 0.5 * (log_fwd + b),
        None => log_fwd,
    };
    Ok(LikelihoodReport {
        log_fwd,
        log_bwd,
        combined,
    })
}

/// Back-propagates `-Σ_i log p(v_i | context_i)` for one direction and returns the
/// directional log-likelihood.
fn direction_gradients(
    model: &Model,
    doc: &Document,
    direction: Direction,
    grads: &mut GradientSet,
) -> Result<f64> {
    let p = &model.params;
    let g = p.activation;
    let states = model.layer_states(doc, direction)?;
    let top = states.last();
    let bias = p.output_bias(direction)?;
    let db = match direction {
        Direction::Forward => &mut grads.b_fwd,
        Direction::Backward => grads.b_bwd.as_mut().expect("bidirectional gradient set"),
    };

    let mut log_lik = 0.0;
    let mut d_hidden = match &p.output {
        OutputLayer::Full => {
            let logits = top.dot(&p.u.t()) + bias;
            let mut delta = Array2::<f64>::zeros(logits.raw_dim());
            for ((row, mut out), &w) in logits.rows().into_iter().zip(delta.rows_mut()).zip(&doc.words) {
                let log_probs = log_softmax(row);
                log_lik += log_probs[w];
                out.assign(&log_probs.mapv(f64::exp));
                out[w] -= 1.0;
            }
            *db += &delta.sum_axis(Axis(0));
            grads.u += &delta.t().dot(top);
            delta.dot(&p.u)
        }
        OutputLayer::Tree(tree) => {
            let mut d_top = Array2::<f64>::zeros(top.raw_dim());
            for ((h, mut dh), &w) in top.rows().into_iter().zip(d_top.rows_mut()).zip(&doc.words) {
                let mut word_log_prob = 0.0;
                for step in tree.path(w) {
                    let urow = p.u.row(step.node);
                    let logit = bias[step.node] + urow.dot(&h);
                    word_log_prob += log_bernoulli_logit(logit, step.bit);
                    let delta = sigmoid(logit) - f64::from(step.bit);
                    db[step.node] += delta;
                    grads.u.row_mut(step.node).scaled_add(delta, &h);
                    dh.scaled_add(delta, &urow);
                }
                log_lik += word_log_prob;
            }
            d_top
        }
    };

    // Upper layers, top down.
    let layers = model.deep_layers();
    for (idx, layer) in layers.iter().enumerate().rev() {
        let out_states = &states.layers[idx + 1];
        let in_states = &states.layers[idx];
        let mut dz = d_hidden;
        dz.zip_mut_with(out_states, |d, &h| *d *= g.derivative_from_output(h));
        let lg = &mut grads.deep[idx];
        let dc = match direction {
            Direction::Forward => &mut lg.c_fwd,
            Direction::Backward => lg.c_bwd.as_mut().expect("bidirectional gradient set"),
        };
        *dc += &dz.sum_axis(Axis(0));
        lg.w += &dz.t().dot(in_states);
        d_hidden = dz.dot(&layer.w);
    }

    // Word layer: dz_i flows to c and to the W columns of every context word.
    let mut dz = d_hidden;
    dz.zip_mut_with(&states.layers[0], |d, &h| *d *= g.derivative_from_output(h));
    let dc = match direction {
        Direction::Forward => &mut grads.c_fwd,
        Direction::Backward => grads.c_bwd.as_mut().expect("bidirectional gradient set"),
    };
    *dc += &dz.sum_axis(Axis(0));

    let mut running = Array1::<f64>::zeros(dz.ncols());
    let mut visit = |k: usize, grads_w: &mut Array2<f64>| {
        grads_w.column_mut(doc.words[k]).scaled_add(1.0, &running);
        running += &dz.row(k);
    };
    match direction {
        Direction::Forward => (0..doc.len()).rev().for_each(|k| visit(k, &mut grads.w)),
        Direction::Backward => (0..doc.len()).for_each(|k| visit(k, &mut grads.w)),
    }
    Ok(log_lik)
}
