//! Binary model file.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "IDNE"
//! 4       4         format version (u32)
//! 8       4         H, word-layer size (u32)
//! 12      4         K, vocabulary size (u32)
//! 16      4         n, hidden-layer count (u32)
//! 20      4(n-1)    H_2 .. H_n (u32 each)
//! ..      1         softmax mode (0 full, 1 tree)
//! ..      1         bidirectional flag (0/1)
//! ..      1         activation (0 sigmoid, 1 tanh)
//! ..      1         prior flag (0/1)
//! ..      8         tree seed (u64)
//! ..      8         lambda (f64; 0 without prior)
//! ..      8         prior coverage (f64; 0 without prior)
//! ..      ...       f64 tensors, row-major, in order:
//!                   W, U, b_fwd, [b_bwd], c_fwd, [c_bwd],
//!                   per deep layer: W^(d), c_fwd^(d), [c_bwd^(d)],
//!                   [E]
//! ```
//!
//! Word-tree paths are not stored; they are rebuilt from `(K, seed)`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{DeepLayer, DeepParameters, Model, ModelParameters, OutputLayer, SoftmaxMode};
use crate::corpus::EmbeddingPrior;
use crate::error::{Error, Result};
use crate::math::Activation;
use crate::tree::BinaryWordTree;

pub const MAGIC: &[u8; 4] = b"IDNE";
pub const FORMAT_VERSION: u32 = 1;

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let sizes = self.layer_sizes();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(p.hidden_size() as u32).to_le_bytes());
        out.extend_from_slice(&(p.vocab_size() as u32).to_le_bytes());
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for &s in &sizes[1..] {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.push(match p.softmax_mode() {
            SoftmaxMode::Full => 0,
            SoftmaxMode::Tree => 1,
        });
        out.push(p.bidirectional() as u8);
        out.push(p.activation.tag());
        out.push(p.prior.is_some() as u8);
        let seed = match &p.output {
            OutputLayer::Tree(t) => t.seed(),
            OutputLayer::Full => 0,
        };
        out.extend_from_slice(&seed.to_le_bytes());
        let (lambda, coverage) = p
            .prior
            .as_ref()
            .map(|e| (e.lambda, e.coverage))
            .unwrap_or((0.0, 0.0));
        out.extend_from_slice(&lambda.to_le_bytes());
        out.extend_from_slice(&coverage.to_le_bytes());
        for (_, t) in self.tensors() {
            for x in t {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        if let Some(prior) = &p.prior {
            for x in prior.matrix.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a model file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let h = r.u32()? as usize;
        let k = r.u32()? as usize;
        let n = r.u32()? as usize;
        if n == 0 {
            return Err(Error::Format("hidden-layer count is zero".into()));
        }
        let mut sizes = vec![h];
        for _ in 1..n {
            sizes.push(r.u32()? as usize);
        }
        let mode = match r.u8()? {
            0 => SoftmaxMode::Full,
            1 => SoftmaxMode::Tree,
            t => return Err(Error::Format(format!("unknown softmax tag {t}"))),
        };
        let bidir = flag(r.u8()?)?;
        let act = r.u8()?;
        let activation = Activation::from_tag(act)
            .ok_or_else(|| Error::Format(format!("unknown activation tag {act}")))?;
        let has_prior = flag(r.u8()?)?;
        let seed = r.u64()?;
        let lambda = r.f64()?;
        let coverage = r.f64()?;

        let output = match mode {
            SoftmaxMode::Full => OutputLayer::Full,
            SoftmaxMode::Tree => OutputLayer::Tree(BinaryWordTree::build(k, seed)?),
        };
        let units = output.units(k);
        let top = *sizes.last().expect("n >= 1");

        let w = r.matrix(h, k)?;
        let u = r.matrix(units, top)?;
        let b_fwd = r.vector(units)?;
        let b_bwd = bidir.then(|| r.vector(units)).transpose()?;
        let c_fwd = r.vector(h)?;
        let c_bwd = bidir.then(|| r.vector(h)).transpose()?;
        let mut layers = Vec::new();
        for pair in sizes.windows(2) {
            let (input, size) = (pair[0], pair[1]);
            layers.push(DeepLayer {
                w: r.matrix(size, input)?,
                c_fwd: r.vector(size)?,
                c_bwd: bidir.then(|| r.vector(size)).transpose()?,
            });
        }
        let prior = if has_prior {
            let mut prior = EmbeddingPrior::new(r.matrix(h, k)?, lambda)?;
            prior.coverage = coverage;
            Some(prior)
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after tensors",
                bytes.len() - r.pos
            )));
        }
        Model::new(
            ModelParameters {
                w,
                u,
                b_fwd,
                b_bwd,
                c_fwd,
                c_bwd,
                activation,
                output,
                prior,
            },
            Some(DeepParameters { layers }),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn flag(b: u8) -> Result<bool> {
    match b {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(Error::Format(format!("invalid flag byte {other}"))),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format("tensor size overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn vector(&mut self, n: usize) -> Result<Array1<f64>> {
        Ok(Array1::from(self.floats(n)?))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let data = self.floats(rows * cols)?;
        Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randomized(mut m: Model, seed: u64) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, t) in m.tensors_mut() {
            t.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        }
        m
    }

    #[test]
    fn round_trip_is_bitwise() {
        let base = Model::zeros(&[4, 3], 7, SoftmaxMode::Tree, true, Activation::Tanh, 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = Array2::from_shape_fn((4, 7), |_| rng.random_range(-1.0..1.0));
        let m = randomized(base, 1)
            .with_prior(EmbeddingPrior::new(e, 0.5).unwrap())
            .unwrap();
        let bytes = m.to_bytes();
        let back = Model::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
        let doc = Document::new(vec![1, 6, 0, 3]);
        assert_eq!(
            m.document_log_likelihood(&doc).unwrap().combined.to_bits(),
            back.document_log_likelihood(&doc).unwrap().combined.to_bits()
        );
    }

    #[test]
    fn header_layout() {
        let m = Model::zeros(&[2], 3, SoftmaxMode::Full, false, Activation::Sigmoid, 0).unwrap();
        let b = m.to_bytes();
        assert_eq!(&b[0..4], b"IDNE");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 1);
        // header 20 + 4 flag bytes + seed + lambda + coverage, then W(6) U(6) b(3) c(2)
        assert_eq!(b.len(), 20 + 4 + 24 + 8 * (6 + 6 + 3 + 2));
    }

    #[test]
    fn rejects_corruption() {
        let m = Model::zeros(&[2], 3, SoftmaxMode::Full, false, Activation::Sigmoid, 0).unwrap();
        let mut b = m.to_bytes();
        assert!(Model::from_bytes(&b[..b.len() - 1]).is_err());
        b.push(0);
        assert!(Model::from_bytes(&b).is_err());
        let mut bad = m.to_bytes();
        bad[0] = b'X';
        assert!(Model::from_bytes(&bad).is_err());
    }
}
