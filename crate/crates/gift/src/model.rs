//! The forecaster: temporal-DCT embedding, a four-block encoder over the
//! player graph, a mirrored decoder with temporal up-sampling, and the
//! occurrence extraction rule over the predicted role channel.
//!
//! The network's sequential axis is the frequency axis: the seen window is
//! transformed by a length-`tau` DCT before the lift, and the decoder's
//! projected output is interpreted as length-`T` spectral coefficients that
//! an IDCT maps back to frames.

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::ClipAnnotation;
use crate::features::{
    dct_matrix, dct_time, window_tensor, FeatureError, Normalizer, FEATURE_DIMS, PLAYER_COUNT,
    ROLE_CHANNEL,
};
use crate::nn::blocks::{upsample_matrix, xavier, BlockVars};
use crate::nn::checkpoint::{load_params, params_to_map, ParamRecord};
use crate::nn::{
    normalized_adjacency, Graph, NnError, Parameter, PlayerGraph, ResidualMode, StgcnStack,
    Tensor, Var,
};

use rand::SeedableRng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("range error: {0}")]
    Range(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(String),
}

/// Architecture knobs. Defaults follow the reference protocol: embedding
/// width 128 and four blocks on each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub n_blocks: usize,
    pub n_players: usize,
    pub residual: ResidualMode,
    pub dropout: f64,
    /// Keep only the first K temporal DCT coefficients of the seen window;
    /// `None` keeps all `tau`.
    pub keep_k: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 128,
            n_blocks: 4,
            n_players: PLAYER_COUNT,
            residual: ResidualMode::SelfProjection,
            dropout: 0.1,
            keep_k: None,
        }
    }
}

/// All learnable state plus the fitted normalizer and the player graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GiftModel {
    pub config: ModelConfig,
    pub normalizer: Normalizer,
    pub graph: PlayerGraph,
    pub lift_w: Parameter,
    pub lift_b: Parameter,
    pub encoder: StgcnStack,
    pub decoder: StgcnStack,
    pub proj_w: Parameter,
    pub proj_b: Parameter,
}

/// Deterministic parameter initialization from a seed.
pub fn model_init(cfg: &ModelConfig, seed: u64) -> GiftModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.embed_dim;
    let lift_w = Parameter::new("lift.w", xavier(&[FEATURE_DIMS, d], &mut rng));
    let lift_b = Parameter::new("lift.b", Tensor::zeros(&[d]));
    let encoder = StgcnStack::init("enc", d, cfg.n_blocks, cfg.residual, &mut rng);
    let decoder = StgcnStack::init("dec", d, cfg.n_blocks, cfg.residual, &mut rng);
    let proj_w = Parameter::new("proj.w", xavier(&[d, FEATURE_DIMS], &mut rng));
    let proj_b = Parameter::new("proj.b", Tensor::zeros(&[FEATURE_DIMS]));
    GiftModel {
        config: cfg.clone(),
        normalizer: Normalizer::identity(),
        graph: normalized_adjacency(cfg.n_players),
        lift_w,
        lift_b,
        encoder,
        decoder,
        proj_w,
        proj_b,
    }
}

impl GiftModel {
    /// Parameters in the canonical (checkpoint and optimizer) order.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = vec![&self.lift_w, &self.lift_b];
        out.extend(self.encoder.params());
        out.extend(self.decoder.params());
        out.push(&self.proj_w);
        out.push(&self.proj_b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = vec![&mut self.lift_w, &mut self.lift_b];
        out.extend(self.encoder.params_mut());
        out.extend(self.decoder.params_mut());
        out.push(&mut self.proj_w);
        out.push(&mut self.proj_b);
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// Tape bindings for the full parameter set, in [`GiftModel::params`] order.
pub struct BoundParams {
    pub lift_w: Var,
    pub lift_b: Var,
    pub enc: Vec<BlockVars>,
    pub dec: Vec<BlockVars>,
    pub proj_w: Var,
    pub proj_b: Var,
}

impl BoundParams {
    pub fn bind(g: &mut Graph, model: &GiftModel) -> Self {
        BoundParams {
            lift_w: g.param(&model.lift_w),
            lift_b: g.param(&model.lift_b),
            enc: model.encoder.bind(g),
            dec: model.decoder.bind(g),
            proj_w: g.param(&model.proj_w),
            proj_b: g.param(&model.proj_b),
        }
    }

    /// Rebuild from a flat var list in [`GiftModel::params`] order.
    pub fn from_flat(n_blocks: usize, vars: &[Var]) -> Self {
        assert_eq!(vars.len(), 2 * n_blocks * 6 + 4, "flat var count");
        let block = |vs: &[Var]| BlockVars {
            gcn_w: vs[0],
            gcn_b: vs[1],
            tconv_k0: vs[2],
            tconv_k1: vs[3],
            tconv_k2: vs[4],
            res_w: vs[5],
        };
        let mut i = 2;
        let enc: Vec<BlockVars> = (0..n_blocks)
            .map(|b| block(&vars[i + b * 6..i + b * 6 + 6]))
            .collect();
        i += n_blocks * 6;
        let dec: Vec<BlockVars> = (0..n_blocks)
            .map(|b| block(&vars[i + b * 6..i + b * 6 + 6]))
            .collect();
        i += n_blocks * 6;
        BoundParams {
            lift_w: vars[0],
            lift_b: vars[1],
            enc,
            dec,
            proj_w: vars[i],
            proj_b: vars[i + 1],
        }
    }

    pub fn flat(&self) -> Vec<Var> {
        let mut out = vec![self.lift_w, self.lift_b];
        for b in self.enc.iter().chain(&self.dec) {
            out.extend([b.gcn_w, b.gcn_b, b.tconv_k0, b.tconv_k1, b.tconv_k2, b.res_w]);
        }
        out.push(self.proj_w);
        out.push(self.proj_b);
        out
    }
}

/// Nodes of one forward pass that later stages need.
pub struct ForwardVars {
    /// Normalized-feature prediction for frames 1..T, time domain.
    pub pred_norm: Var,
    /// Encoder output, `[tau, n, d]`.
    pub enc_latent: Var,
    /// Decoder latent before projection, `[t_total, n, d]`.
    pub dec_latent: Var,
}

/// Embed a normalized seen window: temporal DCT (optionally truncated to
/// the first `keep_k` coefficients). Runs outside the tape; the window is
/// constant with respect to the parameters.
pub fn embed_window(cfg: &ModelConfig, window_norm: &Tensor) -> Tensor {
    let tau = window_norm.shape()[0];
    let mut freq = dct_time(window_norm);
    let keep = cfg.keep_k.unwrap_or(tau).min(tau);
    if keep < tau {
        let rest: usize = window_norm.shape()[1..].iter().product();
        for v in &mut freq.data_mut()[keep * rest..] {
            *v = 0.0;
        }
    }
    freq
}

/// Full forward pass from pre-bound parameters. `window_norm` is the
/// normalized `[tau, n, 46]` seen window in the time domain.
pub fn forward_core(
    g: &mut Graph,
    cfg: &ModelConfig,
    graph: &PlayerGraph,
    bp: &BoundParams,
    window_norm: &Tensor,
    t_total: usize,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> ForwardVars {
    let tau = window_norm.shape()[0];
    assert!(t_total >= tau, "t_total {t_total} < tau {tau}");

    let freq = embed_window(cfg, window_norm);
    let x = g.constant(freq);
    let lifted = g.linear(x, bp.lift_w);
    let lifted = g.add_bias(lifted, bp.lift_b);

    let mut h = lifted;
    for v in &bp.enc {
        h = crate::nn::blocks::stgcn_block(g, h, graph, v, cfg.residual);
        if let Some(rng) = dropout_rng.as_deref_mut() {
            h = g.dropout(h, cfg.dropout, rng);
        }
    }
    let enc_latent = h;

    let up = upsample_matrix(tau, t_total);
    let mut h = g.time_project(up, enc_latent);
    for v in &bp.dec {
        h = crate::nn::blocks::stgcn_block(g, h, graph, v, cfg.residual);
        if let Some(rng) = dropout_rng.as_deref_mut() {
            h = g.dropout(h, cfg.dropout, rng);
        }
    }
    let dec_latent = h;

    let coeffs = g.linear(dec_latent, bp.proj_w);
    let coeffs = g.add_bias(coeffs, bp.proj_b);
    let pred_norm = g.time_project(dct_matrix(t_total).transpose(), coeffs);

    ForwardVars {
        pred_norm,
        enc_latent,
        dec_latent,
    }
}

impl GiftModel {
    /// Bind parameters and run the forward pass on a fresh section of tape.
    pub fn build_forward(
        &self,
        g: &mut Graph,
        window_norm: &Tensor,
        t_total: usize,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> (BoundParams, ForwardVars) {
        let bp = BoundParams::bind(g, self);
        let fw = forward_core(
            g,
            &self.config,
            &self.graph,
            &bp,
            window_norm,
            t_total,
            dropout_rng,
        );
        (bp, fw)
    }

    /// Eval-mode prediction for frames 1..T in original feature units.
    pub fn forward_full(&self, clip: &ClipAnnotation, tau: usize) -> Result<Tensor, ModelError> {
        let t_total = clip.frames.len();
        if tau < 1 || tau >= t_total {
            return Err(ModelError::Range(format!(
                "tau {tau} must lie in [1, {t_total})"
            )));
        }
        let window = window_tensor(clip, tau)?;
        let window_norm = self.normalizer.normalize_tensor(window.tensor())?;
        let mut g = Graph::new();
        let (_, fw) = self.build_forward(&mut g, &window_norm, t_total, None);
        let pred = self.normalizer.denormalize_tensor(g.value(fw.pred_norm))?;
        Ok(pred)
    }
}

// ---------------------------------------------------------------------------
// Occurrence extraction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccurrencePrediction {
    /// 1-based frame index, always in (tau, T].
    pub point_estimate: u32,
    pub crossed_threshold: bool,
    pub peak_score: f64,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Extract the predicted occurrence from a `[T, n, 46]` prediction: the
/// per-frame score is the max predicted role over offensive players; the
/// estimate is the first threshold crossing in the forecast horizon, with an
/// argmax fallback when nothing crosses.
pub fn occurrence_from_prediction(
    pred: &Tensor,
    tau: usize,
    threshold: f64,
) -> Result<OccurrencePrediction, ModelError> {
    let sh = pred.shape();
    if sh.len() != 3 || sh[2] != FEATURE_DIMS {
        return Err(ModelError::Range(format!(
            "prediction must be [T, n, {FEATURE_DIMS}], got {sh:?}"
        )));
    }
    let t_total = sh[0];
    if tau >= t_total {
        return Err(ModelError::Range(format!(
            "tau {tau} leaves no forecast frames in T={t_total}"
        )));
    }
    let offense = sh[1].min(5);
    let mut peak_score = f64::NEG_INFINITY;
    let mut peak_frame = tau;
    let mut crossing: Option<usize> = None;
    for k in tau..t_total {
        let mut s = f64::NEG_INFINITY;
        for p in 0..offense {
            s = s.max(pred.at(&[k, p, ROLE_CHANNEL]));
        }
        if s > peak_score {
            peak_score = s;
            peak_frame = k;
        }
        if crossing.is_none() && s >= threshold {
            crossing = Some(k);
        }
    }
    Ok(match crossing {
        Some(k) => OccurrencePrediction {
            point_estimate: (k + 1) as u32,
            crossed_threshold: true,
            peak_score,
        },
        None => OccurrencePrediction {
            point_estimate: (peak_frame + 1) as u32,
            crossed_threshold: false,
            peak_score,
        },
    })
}

/// Run the model on a clip and extract the occurrence prediction.
pub fn forecast_occurrence(
    model: &GiftModel,
    clip: &ClipAnnotation,
    tau: usize,
    threshold: f64,
) -> Result<OccurrencePrediction, ModelError> {
    let pred = model.forward_full(clip, tau)?;
    occurrence_from_prediction(&pred, tau, threshold)
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

pub const CHECKPOINT_VERSION: &str = "gift.checkpoint.v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: String,
    pub config: ModelConfig,
    pub normalizer: Normalizer,
    pub params: BTreeMap<String, ParamRecord>,
}

impl GiftModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION.to_string(),
            config: self.config.clone(),
            normalizer: self.normalizer.clone(),
            params: params_to_map(&self.params()),
        }
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(self.to_checkpoint()).expect("checkpoint serializes");
        let mut bytes = serde_json::to_vec_pretty(&value).expect("checkpoint serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<GiftModel, ModelError> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported checkpoint version `{}`",
                ck.format_version
            )));
        }
        let mut model = model_init(&ck.config, 0);
        model.normalizer = ck.normalizer.clone();
        let mut params = model.params_mut();
        load_params(&ck.params, &mut params).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.checkpoint_bytes())
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<GiftModel, ModelError> {
        let bytes =
            std::fs::read(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        GiftModel::from_checkpoint(&ck)
    }
}
