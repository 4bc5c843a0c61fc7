use candle_core::{DType, Device, Tensor};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::ParamStore;

/// Weights of the attribute-association network for embedding width `d`.
///
/// `w_self` and `w_inter` are (d, d) and shared across attributes and both
/// directions. The highway layer runs over width 2d; `w_c`/`c_c` project its
/// output to one score per token.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub w_self: Tensor,
    pub w_inter: Tensor,
    pub w_h: Tensor,
    pub b_h: Tensor,
    pub w_t: Tensor,
    pub b_t: Tensor,
    pub w_c: Tensor,
    pub c_c: Tensor,
}

pub const GATE_BIAS_INIT: f64 = -2.0;

impl AttentionParams {
    /// Registers the network's parameters under `prefix` with seeded
    /// initialization.
    pub fn register(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let name = |n: &str| format!("{prefix}.{n}");
        let attn_std = 1.0 / (d as f64).sqrt();
        let hw_std = 1.0 / ((2 * d) as f64).sqrt();
        Ok(Self {
            w_self: store.normal(&name("w_self"), &[d, d], attn_std, rng)?,
            w_inter: store.normal(&name("w_inter"), &[d, d], attn_std, rng)?,
            w_h: store.normal(&name("highway.w_h"), &[2 * d, 2 * d], hw_std, rng)?,
            b_h: store.constant(&name("highway.b_h"), &[2 * d], 0.0)?,
            w_t: store.normal(&name("highway.w_t"), &[2 * d, 2 * d], hw_std, rng)?,
            b_t: store.constant(&name("highway.b_t"), &[2 * d], GATE_BIAS_INIT)?,
            w_c: store.normal(&name("w_c"), &[2 * d], hw_std, rng)?,
            c_c: store.constant(&name("c_c"), &[1], 0.0)?,
        })
    }

    /// All-zero parameters; handy for closed-form checks.
    pub fn zeros(d: usize, dtype: DType, device: &Device) -> Result<Self> {
        let z = |shape: &[usize]| Tensor::zeros(shape, dtype, device);
        Ok(Self {
            w_self: z(&[d, d])?,
            w_inter: z(&[d, d])?,
            w_h: z(&[2 * d, 2 * d])?,
            b_h: z(&[2 * d])?,
            w_t: z(&[2 * d, 2 * d])?,
            b_t: z(&[2 * d])?,
            w_c: z(&[2 * d])?,
            c_c: z(&[1])?,
        })
    }

    pub fn width(&self) -> usize {
        self.w_self.dims()[0]
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 8] {
        [
            ("w_self", &self.w_self),
            ("w_inter", &self.w_inter),
            ("highway.w_h", &self.w_h),
            ("highway.b_h", &self.b_h),
            ("highway.w_t", &self.w_t),
            ("highway.b_t", &self.b_t),
            ("w_c", &self.w_c),
            ("c_c", &self.c_c),
        ]
    }
}
