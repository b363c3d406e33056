use super::config::EncoderConfig;

/// Multiply-accumulate count of one satellite forward pass for a
/// `patch x patch` input with `timesteps` steps.
///
/// With `n = timesteps + 1` tokens, width `w`, feed-forward width `f`,
/// head width `h`, output width `D` and `in = bands * patch^2`:
///
/// ```text
/// embed      timesteps * in * w
/// per layer  n * (3w^2 + w^2 + 2wf)   qkv, output and feed-forward projections
///            + 2 * n^2 * w            scores and weighted values, all heads
/// head       w * h + h * D            class token only
/// ```
///
/// Layer norms, softmax, GELU and the ground-side attention pool are not
/// counted.
pub fn estimate_flops(config: &EncoderConfig, patch: usize, timesteps: usize) -> u64 {
    let w = config.model_width as u64;
    let f = config.ffn_width as u64;
    let input = (config.bands * patch * patch) as u64;
    let t = timesteps as u64;
    let n = t + 1;
    let embed = t * input * w;
    let per_layer = n * (4 * w * w + 2 * w * f) + 2 * n * n * w;
    let head = w * config.head_width as u64 + config.head_width as u64 * config.output_width as u64;
    embed + config.layers as u64 * per_layer + head
}
