//! Graph convolution, temporal convolution, and the residual block stacks
//! that make up the encoder and decoder.
//!
//! A block computes `ReLU(tconv(gcn(x)) + res(tconv(gcn(x))))` where the
//! residual source is configurable: the projection of the block's temporal
//! features (the printed form) or a skip from the block input.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::autodiff::{Graph, Var};
use super::graph::PlayerGraph;
use super::tensor::Tensor;
use super::Parameter;

/// What the residual projection is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// `ReLU(F_t + Res(F_t))`: project the temporal features onto themselves.
    SelfProjection,
    /// `ReLU(F_t + Res(x))`: conventional skip from the block input.
    InputSkip,
}

/// Learnable parameters of one block. The temporal kernel has width 3 along
/// time and 1 along the player axis; its taps are stored as three matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct StgcnBlockParams {
    pub gcn_w: Parameter,
    pub gcn_b: Parameter,
    pub tconv_k0: Parameter,
    pub tconv_k1: Parameter,
    pub tconv_k2: Parameter,
    pub res_w: Parameter,
}

impl StgcnBlockParams {
    pub fn init(
        prefix: &str,
        c_in: usize,
        c_out: usize,
        mode: ResidualMode,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let res_in = match mode {
            ResidualMode::SelfProjection => c_out,
            ResidualMode::InputSkip => c_in,
        };
        StgcnBlockParams {
            gcn_w: Parameter::new(format!("{prefix}.gcn.w"), xavier(&[c_in, c_out], rng)),
            gcn_b: Parameter::new(format!("{prefix}.gcn.b"), Tensor::zeros(&[c_out])),
            tconv_k0: Parameter::new(
                format!("{prefix}.tconv.k0"),
                xavier_fan(&[c_out, c_out], 3 * c_out, c_out, rng),
            ),
            tconv_k1: Parameter::new(
                format!("{prefix}.tconv.k1"),
                xavier_fan(&[c_out, c_out], 3 * c_out, c_out, rng),
            ),
            tconv_k2: Parameter::new(
                format!("{prefix}.tconv.k2"),
                xavier_fan(&[c_out, c_out], 3 * c_out, c_out, rng),
            ),
            res_w: Parameter::new(format!("{prefix}.res.w"), xavier(&[res_in, c_out], rng)),
        }
    }

    pub fn params(&self) -> [&Parameter; 6] {
        [
            &self.gcn_w,
            &self.gcn_b,
            &self.tconv_k0,
            &self.tconv_k1,
            &self.tconv_k2,
            &self.res_w,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 6] {
        [
            &mut self.gcn_w,
            &mut self.gcn_b,
            &mut self.tconv_k0,
            &mut self.tconv_k1,
            &mut self.tconv_k2,
            &mut self.res_w,
        ]
    }
}

/// Tape bindings for one block's parameters.
#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub gcn_w: Var,
    pub gcn_b: Var,
    pub tconv_k0: Var,
    pub tconv_k1: Var,
    pub tconv_k2: Var,
    pub res_w: Var,
}

pub fn bind_block(g: &mut Graph, p: &StgcnBlockParams) -> BlockVars {
    BlockVars {
        gcn_w: g.param(&p.gcn_w),
        gcn_b: g.param(&p.gcn_b),
        tconv_k0: g.param(&p.tconv_k0),
        tconv_k1: g.param(&p.tconv_k1),
        tconv_k2: g.param(&p.tconv_k2),
        res_w: g.param(&p.res_w),
    }
}

/// Graph convolution: `adj * x * w + b`, applied per time step.
///
/// Accepts a `[t, n, c]` tensor or a single `[n, c]` frame.
pub fn gcn_layer(g: &mut Graph, x: Var, graph: &PlayerGraph, w: Var, b: Var) -> Var {
    let rank2 = g.value(x).rank() == 2;
    let x3 = if rank2 {
        let sh = g.value(x).shape().to_vec();
        g.reshape(x, &[1, sh[0], sh[1]])
    } else {
        x
    };
    let mixed = g.player_mix(graph.adjacency().clone(), x3);
    let lin = g.linear(mixed, w);
    let out = g.add_bias(lin, b);
    if rank2 {
        let sh = g.value(out).shape().to_vec();
        g.reshape(out, &[sh[1], sh[2]])
    } else {
        out
    }
}

/// Temporal convolution with kernel extent 3 along time, 1 along players,
/// and zero padding so the frame count is preserved:
/// `y[t] = x[t-1] k0 + x[t] k1 + x[t+1] k2`.
pub fn temporal_conv(g: &mut Graph, x: Var, k0: Var, k1: Var, k2: Var) -> Var {
    let prev = g.shift_time(x, 1);
    let next = g.shift_time(x, -1);
    let a = g.linear(prev, k0);
    let b = g.linear(x, k1);
    let c = g.linear(next, k2);
    let ab = g.add(a, b);
    g.add(ab, c)
}

/// One block: spatial mixing, temporal convolution, residual, rectification.
pub fn stgcn_block(
    g: &mut Graph,
    x: Var,
    graph: &PlayerGraph,
    v: &BlockVars,
    mode: ResidualMode,
) -> Var {
    let spatial = gcn_layer(g, x, graph, v.gcn_w, v.gcn_b);
    let temporal = temporal_conv(g, spatial, v.tconv_k0, v.tconv_k1, v.tconv_k2);
    let res_src = match mode {
        ResidualMode::SelfProjection => temporal,
        ResidualMode::InputSkip => x,
    };
    let res = g.linear(res_src, v.res_w);
    let sum = g.add(temporal, res);
    g.relu(sum)
}

/// A sequence of blocks sharing one channel width.
#[derive(Debug, Clone, PartialEq)]
pub struct StgcnStack {
    pub blocks: Vec<StgcnBlockParams>,
    pub mode: ResidualMode,
}

impl StgcnStack {
    pub fn init(
        prefix: &str,
        dim: usize,
        n_blocks: usize,
        mode: ResidualMode,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let blocks = (0..n_blocks)
            .map(|i| StgcnBlockParams::init(&format!("{prefix}.{i}"), dim, dim, mode, rng))
            .collect();
        StgcnStack { blocks, mode }
    }

    pub fn bind(&self, g: &mut Graph) -> Vec<BlockVars> {
        self.blocks.iter().map(|b| bind_block(g, b)).collect()
    }

    /// Run every block in order. When `dropout_rng` is given, inverted
    /// dropout at `dropout` is applied after each block activation.
    pub fn forward(
        &self,
        g: &mut Graph,
        mut x: Var,
        graph: &PlayerGraph,
        bound: &[BlockVars],
        dropout: f64,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Var {
        assert_eq!(bound.len(), self.blocks.len());
        for v in bound {
            x = stgcn_block(g, x, graph, v, self.mode);
            if let Some(rng) = dropout_rng.as_deref_mut() {
                x = g.dropout(x, dropout, rng);
            }
        }
        x
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.blocks.iter().flat_map(|b| b.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.blocks.iter_mut().flat_map(|b| b.params_mut()).collect()
    }
}

/// Replication matrix lifting a `tau`-step latent to `t_total` steps: rows
/// past `tau` copy the last latent step.
pub fn upsample_matrix(tau: usize, t_total: usize) -> Tensor {
    assert!(tau >= 1 && t_total >= tau);
    let mut m = Tensor::zeros(&[t_total, tau]);
    for t in 0..t_total {
        m.set(&[t, t.min(tau - 1)], 1.0);
    }
    m
}

/// Uniform Xavier/Glorot initialization for a rank-2 weight.
pub fn xavier(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    xavier_fan(shape, shape[0], shape[1], rng)
}

pub fn xavier_fan(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::from_vec(shape, data).unwrap()
}
