//! Reference operator semantics shared by both executors.
//!
//! Convolution is a sliding-window dot product (stride 1, no padding),
//! matrix product an inner-product loop, recurrent operators follow their
//! canonical gate equations with zero initial state. Loop order is fixed,
//! so results are bit-stable for identical inputs and weights.

use crate::graph::{
    ConvVariant, Edge, EdgeId, ElementwiseOp, LayerDepth, OperatorKind, PoolKind, RnnDirection,
    TensorSpec,
};
use crate::tensor::Tensor;

use super::weights::WeightSource;

pub(crate) struct OpContext<'a> {
    pub edge_id: EdgeId,
    pub edge: &'a Edge,
    pub srcs: Vec<&'a Tensor>,
    pub dst_spec: &'a TensorSpec,
}

impl OpContext<'_> {
    fn weight_vec(
        &self,
        weights: &dyn WeightSource,
        offset: u64,
        count: usize,
        fan_in: usize,
    ) -> Vec<f32> {
        (0..count)
            .map(|i| {
                weights.weight(
                    self.edge_id,
                    self.edge.weight_seed,
                    offset + i as u64,
                    fan_in,
                )
            })
            .collect()
    }
}

/// Executes one operator. `skip_step(t)` tells recurrent kernels to keep
/// their state unchanged at time step `t`; the reference executor passes a
/// constant `false`.
pub(crate) fn execute_op(
    ctx: &OpContext,
    weights: &dyn WeightSource,
    skip_step: &dyn Fn(usize) -> bool,
) -> Result<Tensor, String> {
    let out = match &ctx.edge.kind {
        OperatorKind::GemmConv { variant, .. } => conv(ctx, weights, *variant)?,
        OperatorKind::MatMul { .. } => matmul(ctx, weights)?,
        OperatorKind::Rnn { direction } => recurrent(
            ctx,
            weights,
            skip_step,
            Cell::Rnn,
            1,
            *direction == RnnDirection::Bidirectional,
        )?,
        OperatorKind::Lstm { layers, bidirectional } => recurrent(
            ctx,
            weights,
            skip_step,
            Cell::Lstm,
            layer_count(*layers),
            *bidirectional,
        )?,
        OperatorKind::Gru { layers, bidirectional } => recurrent(
            ctx,
            weights,
            skip_step,
            Cell::Gru,
            layer_count(*layers),
            *bidirectional,
        )?,
        OperatorKind::Elementwise { op } => elementwise(ctx, weights, *op)?,
        OperatorKind::Dense => dense(ctx, weights)?,
        OperatorKind::Pool { kind } => pool(ctx, *kind)?,
        OperatorKind::BatchNorm => batch_norm(ctx, weights)?,
        OperatorKind::NonePlaceholder => ctx.srcs[0].data.clone(),
    };
    if out.len() != ctx.dst_spec.len() {
        return Err(format!(
            "operator {} produced {} elements for a {}-element target",
            ctx.edge.kind.tag(),
            out.len(),
            ctx.dst_spec.len()
        ));
    }
    Ok(Tensor {
        spec: ctx.dst_spec.clone(),
        data: out,
    })
}

fn layer_count(depth: LayerDepth) -> usize {
    match depth {
        LayerDepth::Single => 1,
        LayerDepth::Multi => 2,
    }
}

fn dims3(spec: &TensorSpec) -> (usize, usize, usize) {
    (spec.shape[0], spec.shape[1], spec.shape[2])
}

fn conv(ctx: &OpContext, weights: &dyn WeightSource, variant: ConvVariant) -> Result<Vec<f32>, String> {
    let x = ctx.srcs[0];
    let (h, w, c) = dims3(&x.spec);
    let (h2, w2, c2) = dims3(ctx.dst_spec);
    let k = h - h2 + 1;
    let at = |i: usize, j: usize, ch: usize| x.data[(i * w + j) * c + ch];

    match variant {
        ConvVariant::Standard => {
            let kernel = ctx.weight_vec(weights, 0, k * k * c * c2, k * k * c);
            let mut out = vec![0.0f32; h2 * w2 * c2];
            for i in 0..h2 {
                for j in 0..w2 {
                    for o in 0..c2 {
                        let mut acc = 0.0f32;
                        for di in 0..k {
                            for dj in 0..k {
                                for ch in 0..c {
                                    let widx = ((di * k + dj) * c + ch) * c2 + o;
                                    acc += at(i + di, j + dj, ch) * kernel[widx];
                                }
                            }
                        }
                        out[(i * w2 + j) * c2 + o] = acc;
                    }
                }
            }
            Ok(out)
        }
        ConvVariant::Depthwise => {
            let kernel = ctx.weight_vec(weights, 0, k * k * c, k * k);
            let mut out = vec![0.0f32; h2 * w2 * c];
            for i in 0..h2 {
                for j in 0..w2 {
                    for ch in 0..c {
                        let mut acc = 0.0f32;
                        for di in 0..k {
                            for dj in 0..k {
                                acc += at(i + di, j + dj, ch) * kernel[(di * k + dj) * c + ch];
                            }
                        }
                        out[(i * w2 + j) * c + ch] = acc;
                    }
                }
            }
            Ok(out)
        }
        ConvVariant::Separable => {
            // Depthwise pass followed by a 1x1 pointwise projection.
            let depth_kernel = ctx.weight_vec(weights, 0, k * k * c, k * k);
            let point_offset = (k * k * c) as u64;
            let point_kernel = ctx.weight_vec(weights, point_offset, c * c2, c);
            let mut mid = vec![0.0f32; h2 * w2 * c];
            for i in 0..h2 {
                for j in 0..w2 {
                    for ch in 0..c {
                        let mut acc = 0.0f32;
                        for di in 0..k {
                            for dj in 0..k {
                                acc += at(i + di, j + dj, ch)
                                    * depth_kernel[(di * k + dj) * c + ch];
                            }
                        }
                        mid[(i * w2 + j) * c + ch] = acc;
                    }
                }
            }
            let mut out = vec![0.0f32; h2 * w2 * c2];
            for cell in 0..h2 * w2 {
                for o in 0..c2 {
                    let mut acc = 0.0f32;
                    for ch in 0..c {
                        acc += mid[cell * c + ch] * point_kernel[ch * c2 + o];
                    }
                    out[cell * c2 + o] = acc;
                }
            }
            Ok(out)
        }
    }
}

fn matmul(ctx: &OpContext, weights: &dyn WeightSource) -> Result<Vec<f32>, String> {
    let (m, n) = (ctx.dst_spec.shape[0], ctx.dst_spec.shape[1]);
    let a = ctx.srcs[0];
    let k = a.spec.shape[1];
    let mut out = vec![0.0f32; m * n];
    match ctx.srcs.len() {
        2 => {
            let b = ctx.srcs[1];
            for i in 0..m {
                for j in 0..n {
                    let mut acc = 0.0f32;
                    for t in 0..k {
                        acc += a.data[i * k + t] * b.data[t * n + j];
                    }
                    out[i * n + j] = acc;
                }
            }
        }
        1 => {
            let b = ctx.weight_vec(weights, 0, k * n, k);
            for i in 0..m {
                for j in 0..n {
                    let mut acc = 0.0f32;
                    for t in 0..k {
                        acc += a.data[i * k + t] * b[t * n + j];
                    }
                    out[i * n + j] = acc;
                }
            }
        }
        other => return Err(format!("matmul with {other} sources")),
    }
    Ok(out)
}

fn dense(ctx: &OpContext, weights: &dyn WeightSource) -> Result<Vec<f32>, String> {
    let x = ctx.srcs[0];
    let l = x.data.len();
    let m = ctx.dst_spec.len();
    let w = ctx.weight_vec(weights, 0, l * m, l);
    let mut out = vec![0.0f32; m];
    for (i, &xi) in x.data.iter().enumerate() {
        let row = &w[i * m..(i + 1) * m];
        for (j, &wij) in row.iter().enumerate() {
            out[j] += xi * wij;
        }
    }
    Ok(out)
}

fn elementwise(
    ctx: &OpContext,
    weights: &dyn WeightSource,
    op: ElementwiseOp,
) -> Result<Vec<f32>, String> {
    let x = ctx.srcs[0];
    match (op, ctx.srcs.len()) {
        (ElementwiseOp::Relu, 1) => Ok(x.data.iter().map(|&v| v.max(0.0)).collect()),
        (ElementwiseOp::Add, 2) => Ok(x
            .data
            .iter()
            .zip(&ctx.srcs[1].data)
            .map(|(&a, &b)| a + b)
            .collect()),
        (ElementwiseOp::Mul, 2) => Ok(x
            .data
            .iter()
            .zip(&ctx.srcs[1].data)
            .map(|(&a, &b)| a * b)
            .collect()),
        // Single-source add/mul combine with a seeded scalar constant.
        (ElementwiseOp::Add, 1) => {
            let c = 0.5 * weights.weight(ctx.edge_id, ctx.edge.weight_seed, 0, 1);
            Ok(x.data.iter().map(|&v| v + c).collect())
        }
        (ElementwiseOp::Mul, 1) => {
            let c = weights.weight(ctx.edge_id, ctx.edge.weight_seed, 0, 1);
            Ok(x.data.iter().map(|&v| v * c).collect())
        }
        (op, n) => Err(format!("elementwise {op:?} with {n} sources")),
    }
}

fn pool(ctx: &OpContext, kind: PoolKind) -> Result<Vec<f32>, String> {
    let x = ctx.srcs[0];
    let (h, w, c) = dims3(&x.spec);
    let (h2, w2, _) = dims3(ctx.dst_spec);
    let k = h - h2 + 1;
    let at = |i: usize, j: usize, ch: usize| x.data[(i * w + j) * c + ch];
    let mut out = vec![0.0f32; h2 * w2 * c];
    for i in 0..h2 {
        for j in 0..w2 {
            for ch in 0..c {
                let mut acc = match kind {
                    PoolKind::Max => f32::NEG_INFINITY,
                    PoolKind::Avg => 0.0,
                };
                for di in 0..k {
                    for dj in 0..k {
                        let v = at(i + di, j + dj, ch);
                        match kind {
                            PoolKind::Max => acc = acc.max(v),
                            PoolKind::Avg => acc += v,
                        }
                    }
                }
                if kind == PoolKind::Avg {
                    acc /= (k * k) as f32;
                }
                out[(i * w2 + j) * c + ch] = acc;
            }
        }
    }
    Ok(out)
}

fn batch_norm(ctx: &OpContext, weights: &dyn WeightSource) -> Result<Vec<f32>, String> {
    let x = ctx.srcs[0];
    let c = *x.spec.shape.last().expect("validated spec has rank >= 1");
    let w = |i: usize| weights.weight(ctx.edge_id, ctx.edge.weight_seed, i as u64, 1);
    // Inference-style normalization with seeded running statistics.
    let params: Vec<(f32, f32, f32, f32)> = (0..c)
        .map(|ch| {
            let mean = 0.5 * w(ch);
            let var = 0.5 + w(c + ch).abs();
            let gamma = 1.0 + 0.5 * w(2 * c + ch);
            let beta = 0.5 * w(3 * c + ch);
            (mean, var, gamma, beta)
        })
        .collect();
    Ok(x.data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let (mean, var, gamma, beta) = params[i % c];
            gamma * (v - mean) / (var + 1e-5).sqrt() + beta
        })
        .collect())
}

#[derive(Clone, Copy, PartialEq)]
enum Cell {
    Rnn,
    Lstm,
    Gru,
}

impl Cell {
    fn gates(self) -> usize {
        match self {
            Cell::Rnn => 1,
            Cell::Lstm => 4,
            Cell::Gru => 3,
        }
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Canonical recurrent execution: zero initial state, optional second
/// layer stacked on the full sequence output, bidirectional runs
/// concatenated along the feature axis.
fn recurrent(
    ctx: &OpContext,
    weights: &dyn WeightSource,
    skip_step: &dyn Fn(usize) -> bool,
    cell: Cell,
    layers: usize,
    bidirectional: bool,
) -> Result<Vec<f32>, String> {
    let x = ctx.srcs[0];
    let (t_len, batch, feat) = dims3(&x.spec);
    let out_feat = ctx.dst_spec.shape[2];
    let dirs = if bidirectional { 2 } else { 1 };
    if out_feat % dirs != 0 {
        return Err("bidirectional output feature dimension must be even".into());
    }
    let hidden = out_feat / dirs;
    let gates = cell.gates();

    let mut seq = x.data.clone();
    let mut seq_feat = feat;
    let mut offset: u64 = 0;

    for _layer in 0..layers {
        let mut next = vec![0.0f32; t_len * batch * out_feat];
        for d in 0..dirs {
            let w_ih = ctx.weight_vec(weights, offset, seq_feat * gates * hidden, seq_feat);
            offset += (seq_feat * gates * hidden) as u64;
            let w_hh = ctx.weight_vec(weights, offset, hidden * gates * hidden, hidden);
            offset += (hidden * gates * hidden) as u64;
            let b_ih = ctx.weight_vec(weights, offset, gates * hidden, hidden);
            offset += (gates * hidden) as u64;
            let b_hh = ctx.weight_vec(weights, offset, gates * hidden, hidden);
            offset += (gates * hidden) as u64;

            let mut h = vec![0.0f32; batch * hidden];
            let mut c_state = vec![0.0f32; batch * hidden];
            let time_order: Vec<usize> = if d == 0 {
                (0..t_len).collect()
            } else {
                (0..t_len).rev().collect()
            };
            let mut xg = vec![0.0f32; gates * hidden];
            let mut hg = vec![0.0f32; gates * hidden];
            for &t in &time_order {
                if !skip_step(t) {
                    for b in 0..batch {
                        let x_t = &seq[(t * batch + b) * seq_feat..(t * batch + b + 1) * seq_feat];
                        let h_b = h[b * hidden..(b + 1) * hidden].to_vec();
                        for g in 0..gates * hidden {
                            xg[g] = b_ih[g];
                            hg[g] = b_hh[g];
                        }
                        for (i, &xi) in x_t.iter().enumerate() {
                            let row = &w_ih[i * gates * hidden..(i + 1) * gates * hidden];
                            for (g, &wv) in row.iter().enumerate() {
                                xg[g] += xi * wv;
                            }
                        }
                        for (i, &hi) in h_b.iter().enumerate() {
                            let row = &w_hh[i * gates * hidden..(i + 1) * gates * hidden];
                            for (g, &wv) in row.iter().enumerate() {
                                hg[g] += hi * wv;
                            }
                        }
                        match cell {
                            Cell::Rnn => {
                                for j in 0..hidden {
                                    h[b * hidden + j] = (xg[j] + hg[j]).tanh();
                                }
                            }
                            Cell::Lstm => {
                                for j in 0..hidden {
                                    let i_g = sigmoid(xg[j] + hg[j]);
                                    let f_g = sigmoid(xg[hidden + j] + hg[hidden + j]);
                                    let g_g = (xg[2 * hidden + j] + hg[2 * hidden + j]).tanh();
                                    let o_g = sigmoid(xg[3 * hidden + j] + hg[3 * hidden + j]);
                                    let c_new = f_g * c_state[b * hidden + j] + i_g * g_g;
                                    c_state[b * hidden + j] = c_new;
                                    h[b * hidden + j] = o_g * c_new.tanh();
                                }
                            }
                            Cell::Gru => {
                                for j in 0..hidden {
                                    let r_g = sigmoid(xg[j] + hg[j]);
                                    let z_g = sigmoid(xg[hidden + j] + hg[hidden + j]);
                                    let n_g =
                                        (xg[2 * hidden + j] + r_g * hg[2 * hidden + j]).tanh();
                                    h[b * hidden + j] =
                                        (1.0 - z_g) * n_g + z_g * h[b * hidden + j];
                                }
                            }
                        }
                    }
                }
                for b in 0..batch {
                    for j in 0..hidden {
                        next[(t * batch + b) * out_feat + d * hidden + j] = h[b * hidden + j];
                    }
                }
            }
        }
        seq = next;
        seq_feat = out_feat;
    }
    Ok(seq)
}
