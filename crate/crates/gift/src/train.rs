//! Training: the composite reconstruction/forecast/consistency loss, the
//! adaptive-moment optimizer with decoupled weight decay, the epoch loop,
//! and the end-to-end gradient-check suite.
//!
//! Losses are computed in normalized feature space. Each of the six feature
//! slices contributes a mean-squared error over its (frames x players x
//! components) box; the reconstruction term covers frames 1..tau, the
//! forecast term frames tau+1..T, and the consistency term penalizes the
//! decoder's seen-frame latents drifting from the encoder's.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::ClipAnnotation;
use crate::features::{window_tensor, FeatureError, WindowTensor, FEATURE_SLICES};
use crate::model::{forward_core, model_init, BoundParams, ForwardVars, GiftModel, ModelConfig};
use crate::nn::gradcheck::{
    check_gcn_layer, check_quadratic, check_stgcn_block, check_temporal_conv,
    checked_with_resample, gradient_check, GradCheckReport, DEFAULT_H,
};
use crate::nn::{Graph, NnError, Parameter, ResidualMode, Tensor, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFinite { epoch: u32, detail: String },
    #[error("empty {0} split")]
    EmptyInput(&'static str),
}

/// Optimization and loss weights. Defaults follow the reference protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: u32,
    pub dropout: f64,
    pub tau: usize,
    pub lambda_recon: f64,
    pub lambda_fore: f64,
    pub lambda_const: f64,
    /// Per-slice weights in channel order: bbox, pose, headpose, gaze,
    /// velocity, role.
    pub lambda_feat: [f64; 6],
    pub batch_size: usize,
    pub seed: u64,
    /// Disables the consistency term entirely when false.
    pub consistency: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            epochs: 100,
            dropout: 0.1,
            tau: 10,
            lambda_recon: 2.0,
            lambda_fore: 0.01,
            lambda_const: 10.0,
            lambda_feat: [0.1, 0.05, 0.001, 0.1, 10.0, 0.1],
            batch_size: 8,
            seed: 0,
            consistency: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(TrainError::Config("weight_decay must be >= 0".into()));
        }
        if self.tau < 1 {
            return Err(TrainError::Config("tau must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::Config("dropout must be in [0, 1)".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        let lambdas = [self.lambda_recon, self.lambda_fore, self.lambda_const];
        if lambdas.iter().chain(&self.lambda_feat).any(|l| *l < 0.0) {
            return Err(TrainError::Config("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// All loss components of one forward pass. `recon` and `fore` are the
/// slice-weighted sums; the `*_terms` arrays hold the raw per-slice MSEs in
/// channel order; `consistency` is the raw latent MSE. The total is
/// `lambda_recon * recon + lambda_fore * fore + lambda_const * consistency`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub fore: f64,
    pub consistency: f64,
    pub recon_terms: [f64; 6],
    pub fore_terms: [f64; 6],
}

impl LossBreakdown {
    pub fn zero() -> Self {
        LossBreakdown {
            total: 0.0,
            recon: 0.0,
            fore: 0.0,
            consistency: 0.0,
            recon_terms: [0.0; 6],
            fore_terms: [0.0; 6],
        }
    }

    fn accumulate(&mut self, other: &LossBreakdown) {
        self.total += other.total;
        self.recon += other.recon;
        self.fore += other.fore;
        self.consistency += other.consistency;
        for i in 0..6 {
            self.recon_terms[i] += other.recon_terms[i];
            self.fore_terms[i] += other.fore_terms[i];
        }
    }

    fn scaled(&self, c: f64) -> LossBreakdown {
        let mut out = *self;
        out.total *= c;
        out.recon *= c;
        out.fore *= c;
        out.consistency *= c;
        for i in 0..6 {
            out.recon_terms[i] *= c;
            out.fore_terms[i] *= c;
        }
        out
    }
}

fn slice_mse(a: &Tensor, b: &Tensor, t0: usize, t1: usize, c0: usize, c1: usize) -> f64 {
    if t1 <= t0 || c1 <= c0 {
        return 0.0;
    }
    let sh = a.shape();
    let (n, c) = (sh[1], sh[2]);
    let mut sum = 0.0;
    for t in t0..t1 {
        for p in 0..n {
            let base = (t * n + p) * c;
            for ch in c0..c1 {
                let d = a.data()[base + ch] - b.data()[base + ch];
                sum += d * d;
            }
        }
    }
    sum / ((t1 - t0) * n * (c1 - c0)) as f64
}

fn combine(
    recon_terms: [f64; 6],
    fore_terms: [f64; 6],
    consistency: f64,
    cfg: &TrainConfig,
) -> LossBreakdown {
    let mut recon = 0.0;
    let mut fore = 0.0;
    for i in 0..6 {
        recon += cfg.lambda_feat[i] * recon_terms[i];
        fore += cfg.lambda_feat[i] * fore_terms[i];
    }
    let total =
        cfg.lambda_recon * recon + cfg.lambda_fore * fore + cfg.lambda_const * consistency;
    LossBreakdown {
        total,
        recon,
        fore,
        consistency,
        recon_terms,
        fore_terms,
    }
}

/// Loss between a prediction and its target, both `[T, n, 46]` in normalized
/// feature space. The consistency term needs the encoder/decoder latent pair,
/// which only the training path has; pass `None` to report it as zero.
pub fn compute_loss(
    pred: &Tensor,
    target: &Tensor,
    tau: usize,
    cfg: &TrainConfig,
    latents: Option<(&Tensor, &Tensor)>,
) -> Result<LossBreakdown, TrainError> {
    if pred.shape() != target.shape() || pred.rank() != 3 {
        return Err(TrainError::Shape(format!(
            "pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let t_total = pred.shape()[0];
    if tau > t_total {
        return Err(TrainError::Shape(format!("tau {tau} > T {t_total}")));
    }
    let mut recon_terms = [0.0; 6];
    let mut fore_terms = [0.0; 6];
    for (i, (_, (c0, c1))) in FEATURE_SLICES.iter().enumerate() {
        recon_terms[i] = slice_mse(pred, target, 0, tau, *c0, *c1);
        fore_terms[i] = slice_mse(pred, target, tau, t_total, *c0, *c1);
    }
    let consistency = match latents {
        Some((dec, enc)) if cfg.consistency => {
            let seen = enc.shape()[0];
            slice_mse(dec, enc, 0, seen.min(dec.shape()[0]), 0, enc.shape()[2])
        }
        _ => 0.0,
    };
    Ok(combine(recon_terms, fore_terms, consistency, cfg))
}

/// Tape version of [`compute_loss`] over a forward pass: returns the
/// differentiable total and the same breakdown read off the tape.
pub fn build_loss(
    g: &mut Graph,
    fw: &ForwardVars,
    target_norm: &Tensor,
    tau: usize,
    cfg: &TrainConfig,
) -> (Var, LossBreakdown) {
    let t_total = target_norm.shape()[0];
    let mut recon_terms = [0.0; 6];
    let mut fore_terms = [0.0; 6];
    let mut total: Option<Var> = None;
    let add_weighted = |g: &mut Graph, total: &mut Option<Var>, v: Var, w: f64| {
        let scaled = g.scale(v, w);
        *total = Some(match *total {
            Some(t) => g.add(t, scaled),
            None => scaled,
        });
    };

    for (i, (_, (c0, c1))) in FEATURE_SLICES.iter().enumerate() {
        let target_recon = slice_tensor(target_norm, 0, tau, *c0, *c1);
        let pred_recon = g.slice_tc(fw.pred_norm, 0, tau, *c0, *c1);
        let tr = g.constant(target_recon);
        let mse_r = g.mse(pred_recon, tr);
        recon_terms[i] = g.value(mse_r).item();
        add_weighted(
            g,
            &mut total,
            mse_r,
            cfg.lambda_recon * cfg.lambda_feat[i],
        );

        if tau < t_total {
            let target_fore = slice_tensor(target_norm, tau, t_total, *c0, *c1);
            let pred_fore = g.slice_tc(fw.pred_norm, tau, t_total, *c0, *c1);
            let tf = g.constant(target_fore);
            let mse_f = g.mse(pred_fore, tf);
            fore_terms[i] = g.value(mse_f).item();
            add_weighted(g, &mut total, mse_f, cfg.lambda_fore * cfg.lambda_feat[i]);
        }
    }

    let mut consistency = 0.0;
    if cfg.consistency && cfg.lambda_const > 0.0 {
        let d = g.value(fw.enc_latent).shape()[2];
        let seen = g.value(fw.enc_latent).shape()[0];
        let dec_seen = g.slice_tc(fw.dec_latent, 0, seen, 0, d);
        let mse_c = g.mse(dec_seen, fw.enc_latent);
        consistency = g.value(mse_c).item();
        add_weighted(g, &mut total, mse_c, cfg.lambda_const);
    }

    let total = total.expect("at least one loss term");
    let mut breakdown = combine(recon_terms, fore_terms, consistency, cfg);
    // The tape total is the differentiated quantity; it must recombine from
    // the reported components on every step.
    debug_assert!(
        (g.value(total).item() - breakdown.total).abs() <= 1e-9,
        "loss total {} does not recombine from components {}",
        g.value(total).item(),
        breakdown.total
    );
    breakdown.total = g.value(total).item();
    (total, breakdown)
}

fn slice_tensor(x: &Tensor, t0: usize, t1: usize, c0: usize, c1: usize) -> Tensor {
    let sh = x.shape();
    let (n, c) = (sh[1], sh[2]);
    let mut data = Vec::with_capacity((t1 - t0) * n * (c1 - c0));
    for t in t0..t1 {
        for p in 0..n {
            let base = (t * n + p) * c;
            data.extend_from_slice(&x.data()[base + c0..base + c1]);
        }
    }
    Tensor::from_vec(&[t1 - t0, n, c1 - c0], data).unwrap()
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adaptive moment estimation with decoupled weight decay.
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(params: &[&Parameter], learning_rate: f64, weight_decay: f64) -> Self {
        AdamW {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    /// One update from the gradients currently held by the parameters.
    pub fn step(&mut self, params: &mut [&mut Parameter]) {
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = p.grad.data();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
            }
            let theta = p.value.data_mut();
            for j in 0..theta.len() {
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                theta[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps)
                    + self.learning_rate * self.weight_decay * theta[j];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train: LossBreakdown,
    pub val: LossBreakdown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: u32,
    pub best_val_total: f64,
}

impl TrainHistory {
    /// Per-epoch totals and components as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,train_total,train_recon,train_fore,train_const,val_total,val_recon,val_fore,val_const\n",
        );
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.epoch,
                r.train.total,
                r.train.recon,
                r.train.fore,
                r.train.consistency,
                r.val.total,
                r.val.recon,
                r.val.fore,
                r.val.consistency,
            ));
        }
        out
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("history serializes");
        bytes.push(b'\n');
        bytes
    }
}

struct PreparedClip {
    window_norm: Tensor,
    target_norm: Tensor,
    t_total: usize,
}

fn prepare_clip(
    model: &GiftModel,
    clip: &ClipAnnotation,
    tau: usize,
) -> Result<PreparedClip, TrainError> {
    let t_total = clip.frames.len();
    if tau >= t_total {
        return Err(TrainError::Config(format!(
            "tau {tau} must be smaller than clip length {t_total}"
        )));
    }
    let window = window_tensor(clip, tau)?;
    let full = window_tensor(clip, t_total)?;
    let window_norm = model.normalizer.normalize_tensor(window.tensor())?;
    let target_norm = model.normalizer.normalize_tensor(full.tensor())?;
    Ok(PreparedClip {
        window_norm,
        target_norm,
        t_total,
    })
}

fn clip_loss(
    model: &GiftModel,
    prepared: &PreparedClip,
    cfg: &TrainConfig,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> (Graph, BoundParams, Var, LossBreakdown) {
    let mut g = Graph::new();
    let (bp, fw) = model.build_forward(&mut g, &prepared.window_norm, prepared.t_total, dropout_rng);
    let (total, breakdown) = build_loss(&mut g, &fw, &prepared.target_norm, cfg.tau, cfg);
    (g, bp, total, breakdown)
}

/// Train a fresh model; returns the parameters of the best validation epoch
/// along with the full loss history. Deterministic in `(configs, seed)`.
pub fn train(
    train_clips: &[ClipAnnotation],
    val_clips: &[ClipAnnotation],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(GiftModel, TrainHistory), TrainError> {
    cfg.validate()?;
    if train_clips.is_empty() {
        return Err(TrainError::EmptyInput("train"));
    }
    if val_clips.is_empty() {
        return Err(TrainError::EmptyInput("validation"));
    }

    let mut model = model_init(model_cfg, cfg.seed);
    let full_windows: Vec<WindowTensor> = train_clips
        .iter()
        .map(|c| window_tensor(c, c.frames.len()))
        .collect::<Result<_, _>>()?;
    model.normalizer = crate::features::fit_normalizer(&full_windows)?;
    drop(full_windows);

    let prepared_train: Vec<PreparedClip> = train_clips
        .iter()
        .map(|c| prepare_clip(&model, c, cfg.tau))
        .collect::<Result<_, _>>()?;
    let prepared_val: Vec<PreparedClip> = val_clips
        .iter()
        .map(|c| prepare_clip(&model, c, cfg.tau))
        .collect::<Result<_, _>>()?;

    let mut optimizer = AdamW::new(&model.params(), cfg.learning_rate, cfg.weight_decay);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd509_0u64);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, u32, Vec<Tensor>)> = None;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..prepared_train.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64).wrapping_mul(0x9e37));
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut train_sum = LossBreakdown::zero();
        let use_dropout = cfg.dropout > 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grads();
            for &ci in batch {
                let rng = use_dropout.then_some(&mut dropout_rng);
                let (mut g, bp, total, breakdown) =
                    clip_loss(&model, &prepared_train[ci], cfg, rng);
                if !breakdown.total.is_finite() {
                    return Err(TrainError::NonFinite {
                        epoch,
                        detail: format!("training clip {ci}"),
                    });
                }
                g.backward(total);
                let flat = bp.flat();
                let mut params = model.params_mut();
                for (var, p) in flat.iter().zip(params.iter_mut()) {
                    g.accumulate_grad(*var, p);
                }
                train_sum.accumulate(&breakdown);
            }
            let inv = 1.0 / batch.len() as f64;
            let mut params = model.params_mut();
            for p in params.iter_mut() {
                for v in p.grad.data_mut() {
                    *v *= inv;
                }
            }
            optimizer.step(&mut params);
            for p in params.iter() {
                if !p.value.is_finite() {
                    return Err(TrainError::NonFinite {
                        epoch,
                        detail: format!("parameter {} after update", p.name),
                    });
                }
            }
        }
        let train_mean = train_sum.scaled(1.0 / prepared_train.len() as f64);

        let mut val_sum = LossBreakdown::zero();
        for prepared in &prepared_val {
            let (_, _, _, breakdown) = clip_loss(&model, prepared, cfg, None);
            if !breakdown.total.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    detail: "validation loss".to_string(),
                });
            }
            val_sum.accumulate(&breakdown);
        }
        let val_mean = val_sum.scaled(1.0 / prepared_val.len() as f64);

        let improved = best
            .as_ref()
            .map(|(b, _, _)| val_mean.total < *b)
            .unwrap_or(true);
        if improved {
            let snapshot = model.params().iter().map(|p| p.value.clone()).collect();
            best = Some((val_mean.total, epoch, snapshot));
        }
        history.epochs.push(EpochRecord {
            epoch,
            train: train_mean,
            val: val_mean,
        });
    }

    if let Some((best_total, best_epoch, snapshot)) = best {
        let mut params = model.params_mut();
        for (p, value) in params.iter_mut().zip(snapshot) {
            p.value = value;
        }
        history.best_epoch = best_epoch;
        history.best_val_total = best_total;
    }
    model.zero_grads();
    Ok((model, history))
}

// ---------------------------------------------------------------------------
// Gradient-check suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    pub max_rel_err: f64,
}

/// Gradient check of the full model loss at an arbitrary desk size.
pub fn check_full_loss(
    embed_dim: usize,
    tau: usize,
    t_total: u32,
    n_clips: u32,
    seed: u64,
    h: f64,
) -> Result<GradCheckReport, NnError> {
    use crate::annotation::derive_velocities;
    use crate::synth::{generate_clip, SynthConfig};

    let synth_cfg = SynthConfig {
        seed,
        n_clips,
        num_frames: t_total,
        occurrence_min: 11,
        occurrence_max: t_total.min(12),
        ..SynthConfig::default()
    };
    let clips: Vec<ClipAnnotation> = (0..n_clips)
        .map(|i| derive_velocities(&generate_clip(&synth_cfg, i).expect("synth config valid")))
        .collect();

    let model_cfg = ModelConfig {
        embed_dim,
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        tau,
        dropout: 0.0,
        ..TrainConfig::default()
    };
    let mut model = model_init(&model_cfg, seed.wrapping_add(17));
    let windows: Vec<WindowTensor> = clips
        .iter()
        .map(|c| window_tensor(c, c.frames.len()).unwrap())
        .collect();
    model.normalizer = crate::features::fit_normalizer(&windows).unwrap();
    let prepared: Vec<PreparedClip> = clips
        .iter()
        .map(|c| prepare_clip(&model, c, tau).unwrap())
        .collect();

    let graph_topology = model.graph.clone();
    let mut params: Vec<Parameter> = model.params().into_iter().cloned().collect();
    gradient_check(
        &mut params,
        move |g, vars| {
            let bp = BoundParams::from_flat(model_cfg.n_blocks, vars);
            let mut acc: Option<Var> = None;
            for p in &prepared {
                let fw = forward_core(
                    g,
                    &model_cfg,
                    &graph_topology,
                    &bp,
                    &p.window_norm,
                    p.t_total,
                    None,
                );
                let (total, _) = build_loss(g, &fw, &p.target_norm, tau, &train_cfg);
                acc = Some(match acc {
                    Some(a) => g.add(a, total),
                    None => total,
                });
            }
            let acc = acc.expect("at least one clip");
            g.scale(acc, 1.0 / prepared.len() as f64)
        },
        h,
    )
}

/// Layer-isolation checks plus (optionally) the full desk-size model loss.
pub fn gradcheck_suite(full: bool) -> Result<Vec<SuiteEntry>, NnError> {
    let mut out = Vec::new();
    let mut push = |name: &str, r: GradCheckReport| {
        out.push(SuiteEntry {
            name: name.to_string(),
            max_rel_err: r.max_rel_err,
        });
    };
    push("quadratic", check_quadratic(DEFAULT_H)?);
    push(
        "gcn_layer",
        checked_with_resample(|s| check_gcn_layer(s, DEFAULT_H))?,
    );
    push(
        "temporal_conv",
        checked_with_resample(|s| check_temporal_conv(s, DEFAULT_H))?,
    );
    push(
        "stgcn_block_self_residual",
        checked_with_resample(|s| check_stgcn_block(ResidualMode::SelfProjection, s, DEFAULT_H))?,
    );
    push(
        "stgcn_block_input_skip",
        checked_with_resample(|s| check_stgcn_block(ResidualMode::InputSkip, s, DEFAULT_H))?,
    );
    if full {
        push(
            "full_gift_loss",
            checked_with_resample(|s| check_full_loss(16, 5, 12, 2, s, DEFAULT_H))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::derive_velocities;
    use crate::features::ROLE_CHANNEL;
    use crate::synth::{generate_clip, SynthConfig};

    fn tiny_clips(n: u32, seed: u64) -> Vec<ClipAnnotation> {
        let cfg = SynthConfig {
            seed,
            n_clips: n,
            num_frames: 20,
            occurrence_min: 12,
            occurrence_max: 18,
            ..SynthConfig::default()
        };
        (0..n)
            .map(|i| derive_velocities(&generate_clip(&cfg, i).unwrap()))
            .collect()
    }

    fn tiny_model_cfg() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn defaults_match_reference_protocol() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate, 1e-3);
        assert_eq!(cfg.weight_decay, 1e-4);
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.dropout, 0.1);
        assert_eq!(cfg.tau, 10);
        assert_eq!(cfg.lambda_recon, 2.0);
        assert_eq!(cfg.lambda_fore, 0.01);
        assert_eq!(cfg.lambda_const, 10.0);
        assert_eq!(cfg.lambda_feat, [0.1, 0.05, 0.001, 0.1, 10.0, 0.1]);
    }

    #[test]
    fn loss_zero_when_equal() {
        let x = Tensor::filled(&[12, 10, 46], 0.7);
        let cfg = TrainConfig::default();
        let b = compute_loss(&x, &x, 5, &cfg, None).unwrap();
        assert_eq!(b.recon, 0.0);
        assert_eq!(b.fore, 0.0);
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn loss_total_recombines() {
        let mut pred = Tensor::filled(&[12, 10, 46], 0.5);
        for (i, v) in pred.data_mut().iter_mut().enumerate() {
            *v += ((i * 31 % 17) as f64) * 0.01;
        }
        let target = Tensor::filled(&[12, 10, 46], 0.5);
        let cfg = TrainConfig::default();
        let b = compute_loss(&pred, &target, 5, &cfg, None).unwrap();
        let recombined = cfg.lambda_recon * b.recon
            + cfg.lambda_fore * b.fore
            + cfg.lambda_const * b.consistency;
        assert!((b.total - recombined).abs() < 1e-9);
        let weighted: f64 = (0..6).map(|i| cfg.lambda_feat[i] * b.recon_terms[i]).sum();
        assert!((b.recon - weighted).abs() < 1e-12);
    }

    #[test]
    fn perturbing_role_changes_only_role_fore_term() {
        let base = Tensor::filled(&[20, 10, 46], 0.25);
        let mut pred = base.clone();
        let delta = 0.3;
        // One forecast frame (15 > tau=10), one player, role channel only.
        pred.set(&[15, 3, ROLE_CHANNEL], 0.25 + delta);
        let cfg = TrainConfig::default();
        let clean = compute_loss(&base, &base, 10, &cfg, None).unwrap();
        let bumped = compute_loss(&pred, &base, 10, &cfg, None).unwrap();
        for i in 0..6 {
            assert_eq!(clean.recon_terms[i], bumped.recon_terms[i], "recon slice {i}");
            if i != 5 {
                assert_eq!(clean.fore_terms[i], bumped.fore_terms[i], "fore slice {i}");
            }
        }
        let count = (20 - 10) * 10; // frames x players x 1 component
        let expect = delta * delta / count as f64;
        assert!((bumped.fore_terms[5] - expect).abs() < 1e-12);
        // The weighted change in the fore contribution is lambda6 * delta^2 / count.
        let contrib = cfg.lambda_feat[5] * (bumped.fore_terms[5] - clean.fore_terms[5]);
        assert!((contrib - cfg.lambda_feat[5] * expect).abs() < 1e-15);
    }

    #[test]
    fn doubling_lambda_recon_doubles_contribution() {
        let mut pred = Tensor::filled(&[8, 10, 46], 0.0);
        pred.data_mut()[3] = 1.0;
        let target = Tensor::zeros(&[8, 10, 46]);
        let cfg = TrainConfig::default();
        let mut cfg2 = cfg.clone();
        cfg2.lambda_recon *= 2.0;
        let a = compute_loss(&pred, &target, 4, &cfg, None).unwrap();
        let b = compute_loss(&pred, &target, 4, &cfg2, None).unwrap();
        assert!((b.total - a.total - cfg.lambda_recon * a.recon).abs() < 1e-12);
    }

    #[test]
    fn tape_and_plain_loss_agree() {
        let clips = tiny_clips(1, 5);
        let model_cfg = tiny_model_cfg();
        let cfg = TrainConfig {
            tau: 5,
            ..TrainConfig::default()
        };
        let mut model = model_init(&model_cfg, 1);
        let windows = vec![window_tensor(&clips[0], clips[0].frames.len()).unwrap()];
        model.normalizer = crate::features::fit_normalizer(&windows).unwrap();
        let prepared = prepare_clip(&model, &clips[0], cfg.tau).unwrap();
        let (mut g, _, total, breakdown) = clip_loss(&model, &prepared, &cfg, None);
        assert!((g.value(total).item() - breakdown.total).abs() < 1e-12);
        g.backward(total);
        // Recompute the slice terms from the plain-tensor path.
        let pred_norm = {
            let mut g2 = Graph::new();
            let (_, fw) = model.build_forward(&mut g2, &prepared.window_norm, prepared.t_total, None);
            g2.value(fw.pred_norm).clone()
        };
        let plain = compute_loss(&pred_norm, &prepared.target_norm, cfg.tau, &cfg, None).unwrap();
        for i in 0..6 {
            assert!((plain.recon_terms[i] - breakdown.recon_terms[i]).abs() < 1e-12);
            assert!((plain.fore_terms[i] - breakdown.fore_terms[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_learning_rate_freezes_loss() {
        let clips = tiny_clips(4, 9);
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 1e-30,
            dropout: 0.0,
            tau: 5,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let (_, history) = train(&clips[..3], &clips[3..], &tiny_model_cfg(), &cfg).unwrap();
        let totals: Vec<f64> = history.epochs.iter().map(|e| e.val.total).collect();
        for w in totals.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-9, "{totals:?}");
        }
    }

    #[test]
    fn short_training_reduces_loss_and_is_deterministic() {
        let clips = tiny_clips(10, 21);
        let cfg = TrainConfig {
            epochs: 5,
            tau: 5,
            seed: 3,
            ..TrainConfig::default()
        };
        let (m1, h1) = train(&clips[..8], &clips[8..], &tiny_model_cfg(), &cfg).unwrap();
        assert!(
            h1.epochs.last().unwrap().train.total < h1.epochs[0].train.total,
            "training did not reduce loss: {} -> {}",
            h1.epochs[0].train.total,
            h1.epochs.last().unwrap().train.total
        );
        let (m2, h2) = train(&clips[..8], &clips[8..], &tiny_model_cfg(), &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1.checkpoint_bytes(), m2.checkpoint_bytes());
    }

    #[test]
    fn full_loss_gradients_tiny() {
        let r = checked_with_resample(|s| check_full_loss(4, 3, 12, 1, s, DEFAULT_H)).unwrap();
        assert!(
            r.max_rel_err < 1e-4,
            "rel err {} at {}",
            r.max_rel_err,
            r.worst_param
        );
    }

    #[test]
    fn adamw_decay_shrinks_weights_without_gradient() {
        let mut p = Parameter::new("w", Tensor::filled(&[2], 1.0));
        let mut opt = AdamW::new(&[&p], 0.1, 0.5);
        opt.step(&mut [&mut p]);
        for &v in p.value.data() {
            assert!(v < 1.0 && v > 0.9, "decayed value {v}");
        }
    }
}
