//! Numeric feature assembly: per-player 46-vectors, per-frame matrices,
//! seen-window tensors, channel normalization, and the orthonormal temporal
//! DCT/IDCT pair.
//!
//! Channel layout of a player vector, in order:
//! bbox (4), pose (34), headpose (3), gaze (2), velocity (2), role (1).
//! The role channel is the binarized shot indicator and is exempt from
//! normalization so its {0, 1} semantics survive into the forecaster output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{ClipAnnotation, FrameAnnotation, PlayerFrameAnnotation, Role};
use crate::nn::Tensor;

pub const FEATURE_DIMS: usize = 46;
pub const PLAYER_COUNT: usize = 10;

pub const BBOX_SLICE: (usize, usize) = (0, 4);
pub const POSE_SLICE: (usize, usize) = (4, 38);
pub const HEADPOSE_SLICE: (usize, usize) = (38, 41);
pub const GAZE_SLICE: (usize, usize) = (41, 43);
pub const VELOCITY_SLICE: (usize, usize) = (43, 45);
pub const ROLE_SLICE: (usize, usize) = (45, 46);
pub const ROLE_CHANNEL: usize = 45;

/// The six feature slices in channel order, named for loss reporting.
pub const FEATURE_SLICES: [(&str, (usize, usize)); 6] = [
    ("bbox", BBOX_SLICE),
    ("pose", POSE_SLICE),
    ("headpose", HEADPOSE_SLICE),
    ("gaze", GAZE_SLICE),
    ("velocity", VELOCITY_SLICE),
    ("role", ROLE_SLICE),
];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("missing velocity for player {player_id} (run derive_velocities first)")]
    MissingVelocity { player_id: u32 },
    #[error("frame must carry players 1..=10 exactly: {0}")]
    InvalidFrame(String),
    #[error("window length {tau} outside [1, {t}]")]
    Range { tau: usize, t: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input")]
    EmptyInput,
}

/// 0 for the non-shot roles, 1 for the shot-executing subset.
pub fn binarize_role(r: Role) -> f64 {
    if r.is_shot() {
        1.0
    } else {
        0.0
    }
}

/// One player's 46 channels in the fixed layout above.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerVector(pub [f64; FEATURE_DIMS]);

pub fn player_vector(a: &PlayerFrameAnnotation) -> Result<PlayerVector, FeatureError> {
    let vel = a.velocity.ok_or(FeatureError::MissingVelocity {
        player_id: a.player_id,
    })?;
    let mut v = [0.0; FEATURE_DIMS];
    v[0] = a.bbox.x;
    v[1] = a.bbox.y;
    v[2] = a.bbox.h;
    v[3] = a.bbox.w;
    v[POSE_SLICE.0..POSE_SLICE.1].copy_from_slice(&a.pose.0);
    v[38] = a.headpose.pitch;
    v[39] = a.headpose.yaw;
    v[40] = a.headpose.roll;
    v[41] = a.gaze.pitch;
    v[42] = a.gaze.yaw;
    v[43] = vel.v_x;
    v[44] = vel.v_y;
    v[ROLE_CHANNEL] = binarize_role(a.role);
    Ok(PlayerVector(v))
}

/// One frame's players as a 10 x 46 matrix, rows in player-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix(pub Tensor);

pub fn frame_matrix(f: &FrameAnnotation) -> Result<FrameMatrix, FeatureError> {
    if f.players.len() != PLAYER_COUNT {
        return Err(FeatureError::InvalidFrame(format!(
            "frame {} has {} players",
            f.frame_id,
            f.players.len()
        )));
    }
    let mut data = vec![0.0; PLAYER_COUNT * FEATURE_DIMS];
    let mut seen = [false; PLAYER_COUNT];
    for p in &f.players {
        let id = p.player_id as usize;
        if !(1..=PLAYER_COUNT).contains(&id) || seen[id - 1] {
            return Err(FeatureError::InvalidFrame(format!(
                "frame {} has bad or duplicate player_id {}",
                f.frame_id, p.player_id
            )));
        }
        seen[id - 1] = true;
        let row = player_vector(p)?;
        data[(id - 1) * FEATURE_DIMS..id * FEATURE_DIMS].copy_from_slice(&row.0);
    }
    Ok(FrameMatrix(
        Tensor::from_vec(&[PLAYER_COUNT, FEATURE_DIMS], data).unwrap(),
    ))
}

/// The first `tau` frames stacked: `[tau, 10, 46]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTensor {
    data: Tensor,
}

impl WindowTensor {
    pub fn from_tensor(data: Tensor) -> Result<Self, FeatureError> {
        let sh = data.shape();
        if sh.len() != 3 || sh[1] != PLAYER_COUNT || sh[2] != FEATURE_DIMS || sh[0] < 1 {
            return Err(FeatureError::Shape(format!(
                "window tensor must be [tau, {PLAYER_COUNT}, {FEATURE_DIMS}], got {sh:?}"
            )));
        }
        Ok(WindowTensor { data })
    }

    pub fn tau(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }
}

pub fn window_tensor(c: &ClipAnnotation, tau: usize) -> Result<WindowTensor, FeatureError> {
    let t = c.frames.len();
    if tau < 1 || tau > t {
        return Err(FeatureError::Range { tau, t });
    }
    let mut data = Vec::with_capacity(tau * PLAYER_COUNT * FEATURE_DIMS);
    for f in &c.frames[..tau] {
        data.extend_from_slice(frame_matrix(f)?.0.data());
    }
    WindowTensor::from_tensor(Tensor::from_vec(&[tau, PLAYER_COUNT, FEATURE_DIMS], data).unwrap())
}

// ---------------------------------------------------------------------------
// Channel normalization
// ---------------------------------------------------------------------------

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel affine normalizer fitted on the training split. The role
/// channel keeps an identity transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            mean: vec![0.0; FEATURE_DIMS],
            std: vec![1.0; FEATURE_DIMS],
        }
    }

    /// Normalize any `[.., 46]` tensor channelwise.
    pub fn normalize_tensor(&self, x: &Tensor) -> Result<Tensor, FeatureError> {
        self.affine(x, |v, m, s| (v - m) / s)
    }

    /// Exact inverse of [`Normalizer::normalize_tensor`].
    pub fn denormalize_tensor(&self, x: &Tensor) -> Result<Tensor, FeatureError> {
        self.affine(x, |v, m, s| v * s + m)
    }

    fn affine(
        &self,
        x: &Tensor,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<Tensor, FeatureError> {
        let c = *x.shape().last().ok_or(FeatureError::EmptyInput)?;
        if c != self.mean.len() {
            return Err(FeatureError::Shape(format!(
                "normalizer has {} channels, tensor has {c}",
                self.mean.len()
            )));
        }
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let ch = i % c;
            *v = f(*v, self.mean[ch], self.std[ch]);
        }
        Ok(out)
    }
}

/// Fit per-channel mean and standard deviation over every (frame, player)
/// slot of the given windows. Deviations are floored at [`STD_FLOOR`]; the
/// role channel is forced to the identity transform.
pub fn fit_normalizer(windows: &[WindowTensor]) -> Result<Normalizer, FeatureError> {
    if windows.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let mut count = 0u64;
    let mut sum = vec![0.0f64; FEATURE_DIMS];
    let mut sum_sq = vec![0.0f64; FEATURE_DIMS];
    for w in windows {
        for (i, &v) in w.tensor().data().iter().enumerate() {
            let ch = i % FEATURE_DIMS;
            sum[ch] += v;
            sum_sq[ch] += v * v;
            if ch == 0 {
                count += 1;
            }
        }
    }
    let n = count as f64;
    let mut mean = vec![0.0; FEATURE_DIMS];
    let mut std = vec![1.0; FEATURE_DIMS];
    for ch in 0..FEATURE_DIMS {
        mean[ch] = sum[ch] / n;
        let var = (sum_sq[ch] / n - mean[ch] * mean[ch]).max(0.0);
        std[ch] = var.sqrt().max(STD_FLOOR);
    }
    mean[ROLE_CHANNEL] = 0.0;
    std[ROLE_CHANNEL] = 1.0;
    Ok(Normalizer { mean, std })
}

pub fn apply_normalizer(nz: &Normalizer, w: &WindowTensor) -> Result<WindowTensor, FeatureError> {
    WindowTensor::from_tensor(nz.normalize_tensor(w.tensor())?)
}

// ---------------------------------------------------------------------------
// Temporal DCT
// ---------------------------------------------------------------------------

/// Orthonormal DCT-II basis as an `[l, l]` matrix; row k holds the
/// frequency-k basis vector. Its transpose is the exact inverse.
pub fn dct_matrix(l: usize) -> Tensor {
    assert!(l >= 1);
    let mut m = Tensor::zeros(&[l, l]);
    let lf = l as f64;
    for k in 0..l {
        let s = if k == 0 {
            (1.0 / lf).sqrt()
        } else {
            (2.0 / lf).sqrt()
        };
        for t in 0..l {
            let v = s * (std::f64::consts::PI * (2.0 * t as f64 + 1.0) * k as f64 / (2.0 * lf)).cos();
            m.set(&[k, t], v);
        }
    }
    m
}

fn project_axis0(m: &Tensor, x: &Tensor) -> Tensor {
    let sh = x.shape().to_vec();
    let l = sh[0];
    let rest: usize = sh[1..].iter().product();
    let flat = x.reshape(&[l, rest.max(1)]).unwrap();
    let out = m.matmul(&flat).unwrap();
    out.reshape(&sh).unwrap()
}

/// Orthonormal DCT-II along axis 0, independently per trailing slot.
pub fn dct_time(x: &Tensor) -> Tensor {
    project_axis0(&dct_matrix(x.shape()[0]), x)
}

/// Exact inverse of [`dct_time`].
pub fn idct_time(x: &Tensor) -> Tensor {
    project_axis0(&dct_matrix(x.shape()[0]).transpose(), x)
}
