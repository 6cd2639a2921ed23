//! Flat parameter storage with named blocks.
//!
//! Every network keeps its weights in one contiguous buffer. Blocks are
//! registered in a fixed order at build time; that order is the canonical
//! checkpoint layout and the Adam/gradient layout.

use crate::mat::Real;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(pub usize);

#[derive(Debug, Clone)]
pub struct BlockInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct ParamSet<F> {
    blocks: Vec<BlockInfo>,
    data: Vec<F>,
}

/// Initialization scheme for a block.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Uniform(-g*sqrt(6/(fan_in+fan_out)), +g*sqrt(6/(fan_in+fan_out))).
    Glorot { fan_in: usize, fan_out: usize, gain: f64 },
}

impl<F: Real> ParamSet<F> {
    pub fn new() -> Self {
        Self { blocks: Vec::new(), data: Vec::new() }
    }

    pub fn add_block(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut ChaCha8Rng) -> BlockId {
        let len: usize = shape.iter().product();
        let offset = self.data.len();
        match init {
            Init::Zeros => self.data.extend(std::iter::repeat(F::zero()).take(len)),
            Init::Glorot { fan_in, fan_out, gain } => {
                let bound = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
                for _ in 0..len {
                    let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
                    self.data.push(F::from_f64(u * bound));
                }
            }
        }
        self.blocks.push(BlockInfo { name: name.to_string(), shape: shape.to_vec(), offset, len });
        BlockId(self.blocks.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    pub fn block_info(&self, id: BlockId) -> &BlockInfo {
        &self.blocks[id.0]
    }

    #[inline]
    pub fn get(&self, id: BlockId) -> &[F] {
        let b = &self.blocks[id.0];
        &self.data[b.offset..b.offset + b.len]
    }

    #[inline]
    pub fn get_mut(&mut self, id: BlockId) -> &mut [F] {
        let b = &self.blocks[id.0];
        &mut self.data[b.offset..b.offset + b.len]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Slice of a gradient buffer laid out like this ParamSet.
    #[inline]
    pub fn grad_slice<'g>(&self, grads: &'g [F], id: BlockId) -> &'g [F] {
        let b = &self.blocks[id.0];
        &grads[b.offset..b.offset + b.len]
    }

    #[inline]
    pub fn grad_slice_mut<'g>(&self, grads: &'g mut [F], id: BlockId) -> &'g mut [F] {
        let b = &self.blocks[id.0];
        &mut grads[b.offset..b.offset + b.len]
    }

    /// Convert the stored scalars (used to lift an f32 net into f64 checking mode).
    pub fn cast<G: Real>(&self) -> ParamSet<G> {
        ParamSet {
            blocks: self.blocks.clone(),
            data: self.data.iter().map(|v| G::from_f64(v.as_f64())).collect(),
        }
    }
}

impl<F: Real> Default for ParamSet<F> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn blocks_are_contiguous_and_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::<f32>::new();
        let a = p.add_block("a", &[2, 3], Init::Glorot { fan_in: 2, fan_out: 3, gain: 1.0 }, &mut rng);
        let b = p.add_block("b", &[3], Init::Zeros, &mut rng);
        assert_eq!(p.len(), 9);
        assert_eq!(p.block_info(a).offset, 0);
        assert_eq!(p.block_info(b).offset, 6);
        assert!(p.get(b).iter().all(|v| *v == 0.0));
        let bound = (6.0f64 / 5.0).sqrt();
        assert!(p.get(a).iter().all(|v| (v.abs() as f64) <= bound));
    }

    #[test]
    fn same_seed_same_params() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut p = ParamSet::<f32>::new();
            p.add_block("w", &[16, 16], Init::Glorot { fan_in: 16, fan_out: 16, gain: 1.0 }, &mut rng);
            p
        };
        assert_eq!(build().data(), build().data());
    }
}
