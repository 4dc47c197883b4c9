//! Named parameter layout and initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Result, ViTConfig, VitError};
use crate::tensor::Tensor;

/// Per-block tensors, generic over storage (values or tape handles).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<T> {
    pub norm1_gamma: T,
    pub norm1_beta: T,
    pub qkv_weight: T,
    pub qkv_bias: T,
    pub proj_weight: T,
    pub proj_bias: T,
    pub norm2_gamma: T,
    pub norm2_beta: T,
    pub fc1_weight: T,
    pub fc1_bias: T,
    pub fc2_weight: T,
    pub fc2_bias: T,
}

/// Every learnable tensor of the classifier.
///
/// `T = Tensor` holds values; `T = Var` holds the same parameters bound to a
/// tape. Iteration order is fixed and matches [`layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct ViTParams<T = Tensor> {
    pub patch_weight: T,
    pub patch_bias: T,
    pub cls_token: T,
    pub pos_embed: T,
    pub blocks: Vec<BlockParams<T>>,
    pub norm_gamma: T,
    pub norm_beta: T,
    pub head_weight: T,
    pub head_bias: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Weight,
    Zero,
    One,
}

const BLOCK_FIELDS: [(&str, Init); 12] = [
    ("norm1.gamma", Init::One),
    ("norm1.beta", Init::Zero),
    ("attn.qkv.weight", Init::Weight),
    ("attn.qkv.bias", Init::Zero),
    ("attn.proj.weight", Init::Weight),
    ("attn.proj.bias", Init::Zero),
    ("norm2.gamma", Init::One),
    ("norm2.beta", Init::Zero),
    ("mlp.fc1.weight", Init::Weight),
    ("mlp.fc1.bias", Init::Zero),
    ("mlp.fc2.weight", Init::Weight),
    ("mlp.fc2.bias", Init::Zero),
];

fn layout_with_init(config: &ViTConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = config.embed_dim;
    let hidden = config.mlp_ratio * d;
    let mut out = vec![
        (
            "patch_embed.weight".to_string(),
            vec![d, config.patch_dim()],
            Init::Weight,
        ),
        ("patch_embed.bias".to_string(), vec![d], Init::Zero),
        ("cls_token".to_string(), vec![d], Init::Zero),
        ("pos_embed".to_string(), vec![config.seq_len(), d], Init::Zero),
    ];
    let block_shapes = [
        vec![d],
        vec![d],
        vec![3 * d, d],
        vec![3 * d],
        vec![d, d],
        vec![d],
        vec![d],
        vec![d],
        vec![hidden, d],
        vec![hidden],
        vec![d, hidden],
        vec![d],
    ];
    for i in 0..config.depth {
        for ((name, init), shape) in BLOCK_FIELDS.iter().zip(&block_shapes) {
            out.push((format!("blocks.{i}.{name}"), shape.clone(), *init));
        }
    }
    out.extend([
        ("norm.gamma".to_string(), vec![d], Init::One),
        ("norm.beta".to_string(), vec![d], Init::Zero),
        ("head.weight".to_string(), vec![config.num_classes, d], Init::Weight),
        ("head.bias".to_string(), vec![config.num_classes], Init::Zero),
    ]);
    out
}

/// Names and shapes of every parameter tensor, in canonical order.
pub fn layout(config: &ViTConfig) -> Vec<(String, Vec<usize>)> {
    layout_with_init(config).into_iter().map(|(n, s, _)| (n, s)).collect()
}

impl<T> ViTParams<T> {
    /// Rebuilds the structure from items in canonical order.
    pub fn from_ordered(config: &ViTConfig, items: Vec<T>) -> Result<Self> {
        let expected = 8 + 12 * config.depth;
        if items.len() != expected {
            return Err(VitError::Shape(format!(
                "expected {expected} parameter tensors, got {}",
                items.len()
            )));
        }
        let mut it = items.into_iter();
        let mut next = || it.next().expect("length checked");
        let patch_weight = next();
        let patch_bias = next();
        let cls_token = next();
        let pos_embed = next();
        let blocks = (0..config.depth)
            .map(|_| BlockParams {
                norm1_gamma: next(),
                norm1_beta: next(),
                qkv_weight: next(),
                qkv_bias: next(),
                proj_weight: next(),
                proj_bias: next(),
                norm2_gamma: next(),
                norm2_beta: next(),
                fc1_weight: next(),
                fc1_bias: next(),
                fc2_weight: next(),
                fc2_bias: next(),
            })
            .collect();
        Ok(Self {
            patch_weight,
            patch_bias,
            cls_token,
            pos_embed,
            blocks,
            norm_gamma: next(),
            norm_beta: next(),
            head_weight: next(),
            head_bias: next(),
        })
    }

    /// References to every tensor in canonical order.
    pub fn ordered(&self) -> Vec<&T> {
        let mut out = vec![&self.patch_weight, &self.patch_bias, &self.cls_token, &self.pos_embed];
        for b in &self.blocks {
            out.extend([
                &b.norm1_gamma,
                &b.norm1_beta,
                &b.qkv_weight,
                &b.qkv_bias,
                &b.proj_weight,
                &b.proj_bias,
                &b.norm2_gamma,
                &b.norm2_beta,
                &b.fc1_weight,
                &b.fc1_bias,
                &b.fc2_weight,
                &b.fc2_bias,
            ]);
        }
        out.extend([&self.norm_gamma, &self.norm_beta, &self.head_weight, &self.head_bias]);
        out
    }

    pub fn ordered_mut(&mut self) -> Vec<&mut T> {
        let mut out = vec![
            &mut self.patch_weight,
            &mut self.patch_bias,
            &mut self.cls_token,
            &mut self.pos_embed,
        ];
        for b in &mut self.blocks {
            out.extend([
                &mut b.norm1_gamma,
                &mut b.norm1_beta,
                &mut b.qkv_weight,
                &mut b.qkv_bias,
                &mut b.proj_weight,
                &mut b.proj_bias,
                &mut b.norm2_gamma,
                &mut b.norm2_beta,
                &mut b.fc1_weight,
                &mut b.fc1_bias,
                &mut b.fc2_weight,
                &mut b.fc2_bias,
            ]);
        }
        out.extend([
            &mut self.norm_gamma,
            &mut self.norm_beta,
            &mut self.head_weight,
            &mut self.head_bias,
        ]);
        out
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ViTParams<U> {
        let items: Vec<U> = self.ordered().into_iter().map(&mut f).collect();
        let depth = self.blocks.len();
        let mut it = items.into_iter();
        let mut next = || it.next().expect("same arity");
        ViTParams {
            patch_weight: next(),
            patch_bias: next(),
            cls_token: next(),
            pos_embed: next(),
            blocks: (0..depth)
                .map(|_| BlockParams {
                    norm1_gamma: next(),
                    norm1_beta: next(),
                    qkv_weight: next(),
                    qkv_bias: next(),
                    proj_weight: next(),
                    proj_bias: next(),
                    norm2_gamma: next(),
                    norm2_beta: next(),
                    fc1_weight: next(),
                    fc1_bias: next(),
                    fc2_weight: next(),
                    fc2_bias: next(),
                })
                .collect(),
            norm_gamma: next(),
            norm_beta: next(),
            head_weight: next(),
            head_bias: next(),
        }
    }
}

impl ViTParams<Tensor> {
    /// `(name, tensor)` pairs in canonical order.
    pub fn named(&self, config: &ViTConfig) -> Vec<(String, &Tensor)> {
        layout(config).into_iter().map(|(n, _)| n).zip(self.ordered()).collect()
    }

    pub fn count(&self) -> usize {
        self.ordered().iter().map(|t| t.numel()).sum()
    }
}

/// Fresh parameters: weight matrices drawn from a normal with σ = 0.02
/// truncated (by resampling) to ±2σ; biases, class token and positional
/// embeddings zero; layer-norm scales one.
pub fn init_params(config: &ViTConfig, seed: u64) -> Result<ViTParams> {
    config.validate()?;
    const SIGMA: f64 = 0.02;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = layout_with_init(config)
        .into_iter()
        .map(|(_, shape, init)| match init {
            Init::Zero => Tensor::zeros(shape),
            Init::One => Tensor::full(shape, 1.0),
            Init::Weight => {
                let n: usize = shape.iter().product();
                let data = (0..n)
                    .map(|_| loop {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        if z.abs() <= 2.0 {
                            break (z * SIGMA) as f32;
                        }
                    })
                    .collect();
                Tensor::new(shape, data).expect("layout shape")
            }
        })
        .collect();
    ViTParams::from_ordered(config, tensors)
}
