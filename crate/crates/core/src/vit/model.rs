use super::{Result, ViTConfig, ViTParams, VitError, LN_EPS};
use crate::tensor::{Tape, Tensor, Var};

/// Splits a `C×H×W` image into `P×P` tokens.
///
/// Tokens are emitted in row-major block order; each token is laid out
/// channel-major, then row, then column, giving `[Np × C·P²]`.
pub fn patchify(image: &[f32], channels: usize, height: usize, width: usize, patch: usize) -> Result<Vec<f32>> {
    check_grid(image.len(), channels, height, width, patch)?;
    let (gh, gw) = (height / patch, width / patch);
    let mut out = Vec::with_capacity(image.len());
    for by in 0..gh {
        for bx in 0..gw {
            for c in 0..channels {
                for dy in 0..patch {
                    let row = c * height * width + (by * patch + dy) * width + bx * patch;
                    out.extend_from_slice(&image[row..row + patch]);
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`].
pub fn unpatchify(tokens: &[f32], channels: usize, height: usize, width: usize, patch: usize) -> Result<Vec<f32>> {
    check_grid(tokens.len(), channels, height, width, patch)?;
    let (gh, gw) = (height / patch, width / patch);
    let mut out = vec![0f32; tokens.len()];
    let mut src = tokens.chunks(patch);
    for by in 0..gh {
        for bx in 0..gw {
            for c in 0..channels {
                for dy in 0..patch {
                    let row = c * height * width + (by * patch + dy) * width + bx * patch;
                    out[row..row + patch].copy_from_slice(src.next().expect("length checked"));
                }
            }
        }
    }
    Ok(out)
}

fn check_grid(len: usize, c: usize, h: usize, w: usize, p: usize) -> Result<()> {
    if p == 0 || !h.is_multiple_of(p) || !w.is_multiple_of(p) {
        return Err(VitError::Shape(format!(
            "image {h}x{w} is not divisible into {p}x{p} patches"
        )));
    }
    if len != c * h * w {
        return Err(VitError::Shape(format!(
            "buffer of {len} values does not hold a {c}x{h}x{w} image"
        )));
    }
    Ok(())
}

/// Logits `[B × K]` for a batch `[B × C × S × S]`.
pub fn forward(tape: &mut Tape, params: &ViTParams<Var>, config: &ViTConfig, batch: &Tensor) -> Result<Var> {
    let (b, c, h, w) = match *batch.shape() {
        [b, c, h, w] => (b, c, h, w),
        _ => {
            return Err(VitError::Shape(format!(
                "batch must be [B, C, H, W], got {:?}",
                batch.shape()
            )))
        }
    };
    if c != config.in_channels {
        return Err(VitError::Shape(format!(
            "channels: batch has {c}, model expects {}",
            config.in_channels
        )));
    }
    if h != config.image_size || w != config.image_size {
        return Err(VitError::Shape(format!(
            "spatial size: batch is {h}x{w}, model expects {0}x{0}",
            config.image_size
        )));
    }
    if params.blocks.len() != config.depth {
        return Err(VitError::Shape(format!(
            "depth: params have {} blocks, config {}",
            params.blocks.len(),
            config.depth
        )));
    }

    let d = config.embed_dim;
    let np = config.num_patches();
    let t = config.seq_len();
    let image_len = c * h * w;

    let mut tokens = Vec::with_capacity(batch.numel());
    for image in batch.data().chunks(image_len) {
        tokens.extend(patchify(image, c, h, w, config.patch_size)?);
    }
    let tokens = tape.constant(Tensor::new(vec![b * np, config.patch_dim()], tokens)?);
    let embedded = tape.linear(tokens, params.patch_weight, params.patch_bias)?;

    // Row 0 is the class token, rows 1.. the embedded patches of every image.
    let cls = tape.reshape(params.cls_token, vec![1, d])?;
    let pool = tape.concat_rows(&[cls, embedded])?;
    let order: Vec<usize> = (0..b)
        .flat_map(|i| std::iter::once(0).chain((0..np).map(move |j| 1 + i * np + j)))
        .collect();
    let seq = tape.gather_rows(pool, &order)?;
    let mut x = tape.add_broadcast(seq, params.pos_embed)?;

    let heads = config.heads;
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f32).sqrt();
    for block in &params.blocks {
        let normed = tape.layer_norm(x, block.norm1_gamma, block.norm1_beta, LN_EPS)?;
        let qkv = tape.linear(normed, block.qkv_weight, block.qkv_bias)?;
        let mut per_sample = Vec::with_capacity(b);
        for i in 0..b {
            let mut per_head = Vec::with_capacity(heads);
            for hd in 0..heads {
                let q = tape.slice(qkv, i * t, t, hd * dh, dh)?;
                let k = tape.slice(qkv, i * t, t, d + hd * dh, dh)?;
                let v = tape.slice(qkv, i * t, t, 2 * d + hd * dh, dh)?;
                let kt = tape.transpose(k)?;
                let scores = tape.matmul(q, kt)?;
                let scores = tape.scale(scores, scale)?;
                let attn = tape.softmax(scores, 1)?;
                per_head.push(tape.matmul(attn, v)?);
            }
            per_sample.push(tape.concat_cols(&per_head)?);
        }
        let merged = tape.concat_rows(&per_sample)?;
        let projected = tape.linear(merged, block.proj_weight, block.proj_bias)?;
        x = tape.add(x, projected)?;

        let normed = tape.layer_norm(x, block.norm2_gamma, block.norm2_beta, LN_EPS)?;
        let hidden = tape.linear(normed, block.fc1_weight, block.fc1_bias)?;
        let hidden = tape.gelu(hidden)?;
        let out = tape.linear(hidden, block.fc2_weight, block.fc2_bias)?;
        x = tape.add(x, out)?;
    }

    // Layer norm is row-wise, so normalizing only the class tokens is exact.
    let cls_rows: Vec<usize> = (0..b).map(|i| i * t).collect();
    let pooled = tape.gather_rows(x, &cls_rows)?;
    let pooled = tape.layer_norm(pooled, params.norm_gamma, params.norm_beta, LN_EPS)?;
    Ok(tape.linear(pooled, params.head_weight, params.head_bias)?)
}

/// Forward pass without gradients; returns the logits tensor.
pub fn predict(params: &ViTParams, config: &ViTConfig, batch: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = params.map(|p| tape.constant(p.clone()));
    let logits = forward(&mut tape, &bound, config, batch)?;
    Ok(tape.value(logits).clone())
}
