//! Forward passes recorded on a [`Graph`].

use super::params::{EncoderParams, LOGIT_SCALE, POOL_QUERY};
use crate::datamodel::{GroundEmbeddingSet, SpectralTemporalCube};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Segment, Tensor, Var};

/// Parameters placed on a graph, addressable by name.
pub struct Bound<'p> {
    params: &'p EncoderParams,
    vars: Vec<Var>,
}

impl<'p> Bound<'p> {
    /// Records every parameter as a leaf; trainable leaves receive gradients.
    pub fn new(g: &mut Graph, params: &'p EncoderParams, trainable: bool) -> Self {
        let vars = params
            .tensors()
            .iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        Self { params, vars }
    }

    pub fn var(&self, name: &str) -> Var {
        let i = self.params.index_of(name).unwrap_or_else(|| panic!("no parameter '{name}'"));
        self.vars[i]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn params(&self) -> &EncoderParams {
        self.params
    }

    fn linear(&self, g: &mut Graph, x: Var, prefix: &str) -> Var {
        g.linear(x, self.var(&format!("{prefix}.weight")), self.var(&format!("{prefix}.bias")))
    }

    fn layer_norm(&self, g: &mut Graph, x: Var, prefix: &str) -> Var {
        let eps = self.params.config().ln_eps;
        g.layer_norm(x, self.var(&format!("{prefix}.gain")), self.var(&format!("{prefix}.bias")), eps)
    }
}

/// Packed token layout of a batch: one class token followed by the timesteps
/// of each sequence.
pub struct TokenLayout {
    pub segments: Vec<Segment>,
    pub cls_rows: Vec<usize>,
    pub step_rows: Vec<usize>,
    pub months: Vec<usize>,
    pub tokens: usize,
}

fn check_cube(cube: &SpectralTemporalCube, params: &EncoderParams) -> Result<()> {
    let c = params.config();
    if cube.step_len() != c.input_width() {
        return Err(Error::Shape(format!(
            "site '{}': timestep width {} (C={} H={} W={}) but encoder expects {}",
            cube.site_id,
            cube.step_len(),
            cube.bands(),
            cube.height(),
            cube.width(),
            c.input_width()
        )));
    }
    if let Some(m) = cube.months().iter().find(|&&m| m as usize >= c.position_slots) {
        return Err(Error::InvalidArgument(format!("site '{}': month index {m} out of range", cube.site_id)));
    }
    Ok(())
}

/// Records `z = [cls; Linear(X_1) + p_m1; ...]` for every cube, packed into a
/// `[tokens, model_width]` matrix.
pub fn embed_tokens(g: &mut Graph, b: &Bound, cubes: &[&SpectralTemporalCube]) -> Result<(Var, TokenLayout)> {
    if cubes.is_empty() {
        return Err(Error::Empty("batch of cubes"));
    }
    let input = b.params().config().input_width();
    let mut layout = TokenLayout {
        segments: Vec::with_capacity(cubes.len()),
        cls_rows: Vec::with_capacity(cubes.len()),
        step_rows: Vec::new(),
        months: Vec::new(),
        tokens: 0,
    };
    let mut x = Vec::new();
    for cube in cubes {
        check_cube(cube, b.params())?;
        let start = layout.tokens;
        layout.cls_rows.push(start);
        for t in 0..cube.timesteps() {
            layout.step_rows.push(start + 1 + t);
            layout.months.push(cube.months()[t] as usize);
            x.extend_from_slice(cube.step(t));
        }
        let len = cube.timesteps() + 1;
        layout.segments.push(Segment { start, len });
        layout.tokens += len;
    }
    let steps = layout.step_rows.len();
    let x = g.constant(Tensor::matrix(steps, input, x));
    let emb = b.linear(g, x, "embed");
    let pos = g.gather_rows(b.var("pos"), &layout.months);
    let emb = g.add(emb, pos);
    let emb = g.scatter_rows(emb, &layout.step_rows, layout.tokens);
    let cls = g.gather_rows(b.var("cls"), &vec![0; cubes.len()]);
    let cls = g.scatter_rows(cls, &layout.cls_rows, layout.tokens);
    Ok((g.add(cls, emb), layout))
}

/// Full satellite forward: tokens, pre-norm transformer stack, final layer
/// norm, class-token readout and MLP head. Returns `[batch, output_width]`
/// unnormalized embeddings.
pub fn encode_batch(g: &mut Graph, b: &Bound, cubes: &[&SpectralTemporalCube]) -> Result<Var> {
    let cfg = b.params().config().clone();
    let (mut x, layout) = embed_tokens(g, b, cubes)?;
    for l in 0..cfg.layers {
        let h = b.layer_norm(g, x, &format!("layer{l}.ln1"));
        let qkv = b.linear(g, h, &format!("layer{l}.attn.qkv"));
        let a = g.attention(qkv, &layout.segments, cfg.heads);
        let a = b.linear(g, a, &format!("layer{l}.attn.out"));
        x = g.add(x, a);
        let h = b.layer_norm(g, x, &format!("layer{l}.ln2"));
        let f = b.linear(g, h, &format!("layer{l}.ffn.up"));
        let f = g.gelu(f);
        let f = b.linear(g, f, &format!("layer{l}.ffn.down"));
        x = g.add(x, f);
    }
    let cls = g.gather_rows(x, &layout.cls_rows);
    let cls = b.layer_norm(g, cls, "final_ln");
    let h = b.linear(g, cls, "head.fc1");
    let h = g.gelu(h);
    Ok(b.linear(g, h, "head.fc2"))
}

/// Attention pooling of the four direction embeddings per site:
/// `g = sum_d softmax(q . v_d / sqrt(D))_d v_d`. Returns `[batch, D]`.
pub fn pool_ground_batch(g: &mut Graph, b: &Bound, ground: &[&GroundEmbeddingSet]) -> Result<Var> {
    if ground.is_empty() {
        return Err(Error::Empty("batch of ground embeddings"));
    }
    let d = b.params().config().output_width;
    let mut values = Vec::with_capacity(ground.len() * 4 * d);
    for set in ground {
        if set.width() != d {
            return Err(Error::Shape(format!(
                "site '{}': ground width {} but encoder output width is {d}",
                set.site_id,
                set.width()
            )));
        }
        for v in &set.directions {
            values.extend_from_slice(v);
        }
    }
    let v = g.constant(Tensor::matrix(ground.len() * 4, d, values));
    let q = g.reshape(b.var(POOL_QUERY), &[d, 1]);
    let scores = g.matmul(v, q);
    let scores = g.scale(scores, 1.0 / (d as f64).sqrt());
    let scores = g.reshape(scores, &[ground.len(), 4]);
    let alpha = g.softmax_rows(scores);
    Ok(g.group_weighted_sum(alpha, v))
}

/// `exp(logit_scale) = 1/tau` as a one-element node.
pub fn inverse_temperature(g: &mut Graph, b: &Bound) -> Var {
    g.exp(b.var(LOGIT_SCALE))
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

/// Token sequence `[T+1, model_width]` for one cube (class token first).
pub fn embed_sequence(cube: &SpectralTemporalCube, params: &EncoderParams) -> Result<Tensor> {
    let mut g = Graph::new();
    let b = Bound::new(&mut g, params, false);
    let (z, _) = embed_tokens(&mut g, &b, &[cube])?;
    Ok(g.value(z).clone())
}

/// Encodes the cube's timesteps stored in the given `order` (a permutation
/// of `0..T`), each keeping its month tag. The output does not depend on
/// `order` beyond rounding.
pub fn encode_satellite_permuted(cube: &SpectralTemporalCube, order: &[usize], params: &EncoderParams) -> Result<Vec<f64>> {
    let t = cube.timesteps();
    let mut seen = vec![false; t];
    if order.len() != t || order.iter().any(|&i| i >= t || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::InvalidArgument(format!("{order:?} is not a permutation of 0..{t}")));
    }
    let months = order.iter().map(|&i| cube.months()[i]).collect();
    let values = order.iter().flat_map(|&i| cube.step(i).iter().copied()).collect();
    encode_satellite(&cube.with_steps(months, values), params)
}

/// Satellite embedding `s` (unnormalized) for one cube.
pub fn encode_satellite(cube: &SpectralTemporalCube, params: &EncoderParams) -> Result<Vec<f64>> {
    Ok(encode_satellite_batch(&[cube], params)?.remove(0))
}

/// Inference over many cubes, processed in chunks.
pub fn encode_satellite_batch(cubes: &[&SpectralTemporalCube], params: &EncoderParams) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(cubes.len());
    for chunk in cubes.chunks(256) {
        let mut g = Graph::new();
        let b = Bound::new(&mut g, params, false);
        let s = encode_batch(&mut g, &b, chunk)?;
        out.extend(rows(g.value(s)));
    }
    Ok(out)
}

/// Attention-pooled ground embedding `g` (unnormalized) for one site.
pub fn attn_pool_ground(ground: &GroundEmbeddingSet, params: &EncoderParams) -> Result<Vec<f64>> {
    Ok(attn_pool_ground_batch(&[ground], params)?.remove(0))
}

pub fn attn_pool_ground_batch(ground: &[&GroundEmbeddingSet], params: &EncoderParams) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(ground.len());
    for chunk in ground.chunks(1024) {
        let mut g = Graph::new();
        let b = Bound::new(&mut g, params, false);
        let p = pool_ground_batch(&mut g, &b, chunk)?;
        out.extend(rows(g.value(p)));
    }
    Ok(out)
}
