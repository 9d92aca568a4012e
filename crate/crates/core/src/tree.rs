//! Binary word tree for the hierarchical (tree) softmax.
//!
//! The tree is a complete binary tree in heap layout: node `i` has children
//! `2i + 1` (left, bit 0) and `2i + 2` (right, bit 1). With `K` leaves there
//! are `T = K - 1` internal nodes numbered `0..T` breadth-first from the root,
//! and the leaves occupy heap slots `T..2K-1`. Words are placed on leaves by a
//! seeded random permutation, so `(K, seed)` fully determines the tree.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::log_bernoulli_logit;

/// One step on a root-to-leaf path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    /// Internal node index, a row of `U` and an entry of the output bias.
    pub node: usize,
    /// 0 = go left, 1 = go right.
    pub bit: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryWordTree {
    leaves: usize,
    seed: u64,
    paths: Vec<Vec<PathStep>>,
}

impl BinaryWordTree {
    pub fn build(leaves: usize, seed: u64) -> Result<Self> {
        if leaves < 2 {
            return Err(Error::InvalidArgument(format!(
                "a word tree needs at least 2 leaves, got {leaves}"
            )));
        }
        let internal = leaves - 1;
        let mut slots: Vec<usize> = (0..leaves).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        slots.shuffle(&mut rng);

        let paths = slots
            .iter()
            .map(|&slot| {
                let mut node = internal + slot;
                let mut path = Vec::new();
                while node > 0 {
                    let parent = (node - 1) / 2;
                    let bit = if node == 2 * parent + 1 { 0 } else { 1 };
                    path.push(PathStep { node: parent, bit });
                    node = parent;
                }
                path.reverse();
                path
            })
            .collect();
        Ok(Self {
            leaves,
            seed,
            paths,
        })
    }

    /// Leaf count `K`.
    pub fn leaves(&self) -> usize {
        self.leaves
    }

    /// Internal node count `T`.
    pub fn internal_nodes(&self) -> usize {
        self.leaves - 1
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self, word: usize) -> &[PathStep] {
        &self.paths[word]
    }

    pub fn depth(&self, word: usize) -> usize {
        self.paths[word].len()
    }

    pub fn max_depth(&self) -> usize {
        self.paths.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `log p(word | h)` as a sum of per-node log-Bernoulli terms.
    pub fn leaf_log_probability(
        &self,
        hidden: ArrayView1<f64>,
        word: usize,
        weights: ArrayView2<f64>,
        bias: ArrayView1<f64>,
    ) -> Result<f64> {
        self.leaf_log_probability_visit(hidden, word, weights, bias, |_| {})
    }

    /// Same as [`Self::leaf_log_probability`], calling `visit` for every node evaluated.
    pub fn leaf_log_probability_visit(
        &self,
        hidden: ArrayView1<f64>,
        word: usize,
        weights: ArrayView2<f64>,
        bias: ArrayView1<f64>,
        mut visit: impl FnMut(usize),
    ) -> Result<f64> {
        self.check_dims(hidden.len(), weights, bias)?;
        if word >= self.leaves {
            return Err(Error::Dimension(format!(
                "word {word} outside tree with {} leaves",
                self.leaves
            )));
        }
        Ok(self.paths[word]
            .iter()
            .map(|step| {
                visit(step.node);
                let logit = bias[step.node] + weights.row(step.node).dot(&hidden);
                log_bernoulli_logit(logit, step.bit)
            })
            .sum())
    }

    pub(crate) fn check_dims(
        &self,
        hidden: usize,
        weights: ArrayView2<f64>,
        bias: ArrayView1<f64>,
    ) -> Result<()> {
        let t = self.internal_nodes();
        if weights.nrows() != t || weights.ncols() != hidden || bias.len() != t {
            return Err(Error::Dimension(format!(
                "tree softmax expects U {t}x{hidden} and bias {t}, got U {}x{} and bias {}",
                weights.nrows(),
                weights.ncols(),
                bias.len()
            )));
        }
        Ok(())
    }
}
