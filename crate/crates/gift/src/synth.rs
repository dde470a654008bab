//! Deterministic clip synthesizer: a desk-scale stand-in corpus with known
//! occurrence frames and learnable pre-shot cues.
//!
//! Scenario per clip: offensive players 1-5 move inside the court, defenders
//! 6-10 shadow their nearest attacker, and one sampled shooter drives toward
//! a fixed basket point, arriving as the shot starts. The planted timing
//! signal is monotone and visible from frame 1: the shooter starts at a
//! distance proportional to `occurrence - 1` and closes it at a fixed nominal
//! speed, while the shooter's gaze pitch ramps linearly to zero at the
//! occurrence. From `occurrence - cue` frames onward the shooter's speed
//! additionally decays and gaze/headpose yaw lock onto the basket. Easy mode
//! keeps noise low and the cue window long; hard mode raises noise and
//! shortens the cue.
//!
//! Generation is a pure function of (config, clip index).

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{
    derive_velocities, serialize_clip, tactic_from_index, BBox, ClipAnnotation, FrameAnnotation,
    Gaze, HeadPose, PlayerFrameAnnotation, Pose, Role, ShotMethod, Split, TacticLabel, View,
    FORMAT_VERSION, POSE_DIMS, TACTIC_COUNT,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_clips: u32,
    pub num_frames: u32,
    pub fps: f64,
    pub occurrence_min: u32,
    pub occurrence_max: u32,
    pub court_width: f64,
    pub court_height: f64,
    pub noise_scale: f64,
    pub difficulty: Difficulty,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_clips: 100,
            num_frames: 50,
            fps: 25.0,
            occurrence_min: 26,
            occurrence_max: 45,
            court_width: 1920.0,
            court_height: 1080.0,
            noise_scale: 1.0,
            difficulty: Difficulty::Easy,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_clips == 0 {
            return Err(SynthError::Config("n_clips must be positive".into()));
        }
        if self.num_frames < 2 {
            return Err(SynthError::Config("num_frames must be >= 2".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(SynthError::Config("fps must be positive".into()));
        }
        if self.occurrence_min <= 10 {
            return Err(SynthError::Config(format!(
                "occurrence_min must exceed the seen window (10), got {}",
                self.occurrence_min
            )));
        }
        if self.occurrence_min > self.occurrence_max || self.occurrence_max > self.num_frames {
            return Err(SynthError::Config(format!(
                "occurrence range [{}, {}] incompatible with num_frames {}",
                self.occurrence_min, self.occurrence_max, self.num_frames
            )));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(SynthError::Config("noise_scale must be >= 0".into()));
        }
        if self.court_width < 400.0 || self.court_height < 400.0 {
            return Err(SynthError::Config("court must be at least 400x400".into()));
        }
        Ok(())
    }

    fn knobs(&self) -> Knobs {
        match self.difficulty {
            Difficulty::Easy => Knobs {
                cue_len: 8,
                speed_decay: 0.65,
                pos_noise: 0.5 * self.noise_scale,
                angle_noise: 0.01 * self.noise_scale,
                pose_noise: 1.0 * self.noise_scale,
                walk_accel: 1.6,
            },
            Difficulty::Hard => Knobs {
                cue_len: 4,
                speed_decay: 0.85,
                pos_noise: 2.0 * self.noise_scale,
                angle_noise: 0.05 * self.noise_scale,
                pose_noise: 2.5 * self.noise_scale,
                walk_accel: 2.2,
            },
        }
    }
}

struct Knobs {
    cue_len: u32,
    speed_decay: f64,
    pos_noise: f64,
    angle_noise: f64,
    pose_noise: f64,
    walk_accel: f64,
}

/// Nominal shooter approach speed, px per frame. The shooter's starting
/// distance to the basket is `APPROACH_SPEED * (occurrence - 1)`.
pub const APPROACH_SPEED: f64 = 12.0;
/// Linear gaze-pitch countdown slope, rad per frame to the occurrence.
pub const PITCH_SLOPE: f64 = 0.02;
const COURT_MARGIN: f64 = 60.0;
const WALK_DAMP: f64 = 0.85;
const WALK_SPEED_CAP: f64 = 8.0;
const DEFENDER_GAIN: f64 = 0.22;
const DEFENDER_DAMP: f64 = 0.78;
const BASKET_FRACTION: (f64, f64) = (0.125, 0.5);

/// COCO keypoints as (x, y) fractions of the bounding box.
const POSE_TEMPLATE: [(f64, f64); 17] = [
    (0.50, 0.08),
    (0.46, 0.06),
    (0.54, 0.06),
    (0.42, 0.08),
    (0.58, 0.08),
    (0.35, 0.22),
    (0.65, 0.22),
    (0.28, 0.38),
    (0.72, 0.38),
    (0.24, 0.52),
    (0.76, 0.52),
    (0.40, 0.52),
    (0.60, 0.52),
    (0.38, 0.74),
    (0.62, 0.74),
    (0.37, 0.95),
    (0.63, 0.95),
];

/// Quantize to six significant decimal digits; all synthesized float values
/// are stored in this grid so files stay tidy and byte-stable.
fn q6(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    format!("{x:.5e}").parse().unwrap()
}

fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w < -PI {
        -PI
    } else {
        w
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

struct ClipMeta {
    shooter: u32,
    occurrence: u32,
}

fn clip_rng(cfg: &SynthConfig, index: u32) -> ChaCha8Rng {
    let salt = (index as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15);
    ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(salt))
}

fn generate_clip_inner(
    cfg: &SynthConfig,
    index: u32,
) -> Result<(ClipAnnotation, ClipMeta), SynthError> {
    cfg.validate()?;
    if index >= cfg.n_clips {
        return Err(SynthError::Config(format!(
            "clip index {index} outside [0, {})",
            cfg.n_clips
        )));
    }
    let knobs = cfg.knobs();
    let mut rng = clip_rng(cfg, index);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let noise = |scale: f64, rng: &mut ChaCha8Rng| normal.sample(rng) * scale;

    let t_total = cfg.num_frames;
    let view = View::new(rng.gen_range(0..5)).unwrap();
    let tactic = tactic_from_index(rng.gen_range(0..TACTIC_COUNT));
    let occurrence = rng.gen_range(cfg.occurrence_min..=cfg.occurrence_max);
    let shooter = rng.gen_range(1..=5u32);
    let shot_role = match tactic.shot {
        ShotMethod::Shoot => Role::Shooting,
        ShotMethod::Layup => Role::LayingUp,
        ShotMethod::Dunk => Role::Dunking,
    };

    let basket = (
        cfg.court_width * BASKET_FRACTION.0,
        cfg.court_height * BASKET_FRACTION.1,
    );
    let lo_x = COURT_MARGIN;
    let hi_x = cfg.court_width - COURT_MARGIN;
    let lo_y = COURT_MARGIN;
    let hi_y = cfg.court_height - COURT_MARGIN;

    // Shooter spawn: distance encodes the time to the shot.
    let start_dist = APPROACH_SPEED * (occurrence as f64 - 1.0);
    let (sx, sy) = {
        let mut point = (basket.0 + start_dist, basket.1);
        for _ in 0..64 {
            let theta = rng.gen_range(-PI..PI);
            let cand = (
                basket.0 + start_dist * theta.cos(),
                basket.1 + start_dist * theta.sin(),
            );
            if cand.0 >= lo_x && cand.0 <= hi_x && cand.1 >= lo_y && cand.1 <= hi_y {
                point = cand;
                break;
            }
        }
        point
    };
    let away = (
        (sx - basket.0) / start_dist.max(1.0),
        (sy - basket.1) / start_dist.max(1.0),
    );
    let approach_angle = f64::atan2(basket.1 - sy, basket.0 - sx);

    // Walkers: positions and velocities for the four non-shooting attackers.
    let mut pos = [(0.0f64, 0.0f64); 10];
    let mut vel = [(0.0f64, 0.0f64); 10];
    for p in 0..5u32 {
        let id = p + 1;
        if id == shooter {
            pos[p as usize] = (sx, sy);
        } else {
            pos[p as usize] = (rng.gen_range(lo_x..hi_x), rng.gen_range(lo_y..hi_y));
            vel[p as usize] = (noise(2.0, &mut rng), noise(2.0, &mut rng));
        }
    }
    for d in 5..10usize {
        // Each defender spawns near one attacker.
        let mark = d - 5;
        pos[d] = (
            clamp(pos[mark].0 + noise(35.0, &mut rng), lo_x, hi_x),
            clamp(pos[mark].1 + noise(35.0, &mut rng), lo_y, hi_y),
        );
    }
    let sizes: Vec<(f64, f64)> = (0..10)
        .map(|_| (rng.gen_range(30.0..46.0), rng.gen_range(85.0..115.0)))
        .collect();

    let cue_start = occurrence.saturating_sub(knobs.cue_len);
    let mut remaining = start_dist;
    let mut frames = Vec::with_capacity(t_total as usize);
    for frame_id in 1..=t_total {
        // Offense motion first; defenders react to current positions.
        for p in 0..5u32 {
            let idx = p as usize;
            let id = p + 1;
            if id == shooter {
                if frame_id > 1 && frame_id <= occurrence {
                    let step = if frame_id - 1 >= cue_start {
                        APPROACH_SPEED * knobs.speed_decay.powi((frame_id - cue_start) as i32)
                    } else {
                        APPROACH_SPEED
                    };
                    remaining = (remaining - step).max(12.0);
                }
                let jitter = if frame_id > occurrence { 0.3 } else { 1.0 };
                pos[idx] = (
                    clamp(
                        basket.0 + away.0 * remaining + noise(knobs.pos_noise * jitter, &mut rng),
                        lo_x,
                        hi_x,
                    ),
                    clamp(
                        basket.1 + away.1 * remaining + noise(knobs.pos_noise * jitter, &mut rng),
                        lo_y,
                        hi_y,
                    ),
                );
            } else if frame_id > 1 {
                let (mut vx, mut vy) = vel[idx];
                vx = WALK_DAMP * vx + noise(knobs.walk_accel, &mut rng);
                vy = WALK_DAMP * vy + noise(knobs.walk_accel, &mut rng);
                let speed = (vx * vx + vy * vy).sqrt();
                if speed > WALK_SPEED_CAP {
                    vx *= WALK_SPEED_CAP / speed;
                    vy *= WALK_SPEED_CAP / speed;
                }
                vel[idx] = (vx, vy);
                pos[idx] = (
                    clamp(pos[idx].0 + vx, lo_x, hi_x),
                    clamp(pos[idx].1 + vy, lo_y, hi_y),
                );
            }
        }
        for d in 5..10usize {
            if frame_id == 1 {
                continue;
            }
            let (px, py) = pos[d];
            let mut best = 0usize;
            let mut best_d2 = f64::INFINITY;
            for o in 0..5usize {
                let dx = pos[o].0 - px;
                let dy = pos[o].1 - py;
                let d2 = dx * dx + dy * dy;
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = o;
                }
            }
            let target = (pos[best].0 + 30.0, pos[best].1 + 25.0);
            let (mut vx, mut vy) = vel[d];
            vx = DEFENDER_DAMP * vx + DEFENDER_GAIN * (target.0 - px) + noise(0.4, &mut rng);
            vy = DEFENDER_DAMP * vy + DEFENDER_GAIN * (target.1 - py) + noise(0.4, &mut rng);
            let speed = (vx * vx + vy * vy).sqrt();
            let cap = APPROACH_SPEED + 2.0;
            if speed > cap {
                vx *= cap / speed;
                vy *= cap / speed;
            }
            vel[d] = (vx, vy);
            pos[d] = (clamp(px + vx, lo_x, hi_x), clamp(py + vy, lo_y, hi_y));
        }

        let mut players = Vec::with_capacity(10);
        for id in 1..=10u32 {
            let idx = (id - 1) as usize;
            let (px, py) = pos[idx];
            let (w, h) = sizes[idx];
            let bbox = BBox {
                x: q6(px - w / 2.0),
                y: q6(py - h / 2.0),
                h: q6(h),
                w: q6(w),
            };
            let mut pose = [0.0f64; POSE_DIMS];
            for (k, (fx, fy)) in POSE_TEMPLATE.iter().enumerate() {
                pose[2 * k] = q6(bbox.x + fx * w + noise(knobs.pose_noise, &mut rng));
                pose[2 * k + 1] = q6(bbox.y + fy * h + noise(knobs.pose_noise, &mut rng));
            }

            let is_shooter = id == shooter;
            let move_angle = if is_shooter {
                approach_angle
            } else {
                let (vx, vy) = vel[idx];
                if vx == 0.0 && vy == 0.0 {
                    0.0
                } else {
                    f64::atan2(vy, vx)
                }
            };

            let (gaze, headpose) = if is_shooter {
                // Countdown: pitch rises linearly to 0 at the occurrence, and
                // inside the cue window the yaw wander collapses onto the
                // basket direction.
                let to_go = occurrence as f64 - frame_id as f64;
                let pitch = clamp(-PITCH_SLOPE * to_go.max(0.0), -1.5, 0.0)
                    + noise(knobs.angle_noise, &mut rng);
                let wander = if frame_id >= cue_start {
                    0.0
                } else {
                    noise(0.08 + knobs.angle_noise, &mut rng)
                };
                let yaw = wrap_pi(approach_angle + wander);
                let g = Gaze {
                    pitch: q6(clamp(pitch, -1.55, 1.55)),
                    yaw: q6(yaw),
                };
                let hp = HeadPose {
                    pitch: q6(clamp(pitch * 0.8 + noise(knobs.angle_noise, &mut rng), -3.1, 3.1)),
                    yaw: q6(wrap_pi(yaw + noise(knobs.angle_noise, &mut rng))),
                    roll: q6(clamp(noise(0.02 + knobs.angle_noise, &mut rng), -3.1, 3.1)),
                };
                (g, hp)
            } else {
                let g = Gaze {
                    pitch: q6(clamp(noise(0.05 + knobs.angle_noise, &mut rng), -1.55, 1.55)),
                    yaw: q6(wrap_pi(move_angle + noise(0.15 + knobs.angle_noise, &mut rng))),
                };
                let hp = HeadPose {
                    pitch: q6(clamp(noise(0.05 + knobs.angle_noise, &mut rng), -3.1, 3.1)),
                    yaw: q6(wrap_pi(move_angle + noise(0.2 + knobs.angle_noise, &mut rng))),
                    roll: q6(clamp(noise(0.02 + knobs.angle_noise, &mut rng), -3.1, 3.1)),
                };
                (g, hp)
            };

            let role = if id > 5 {
                Role::Defending
            } else if is_shooter {
                if frame_id >= occurrence {
                    shot_role
                } else {
                    Role::Holding
                }
            } else {
                let (vx, vy) = vel[idx];
                if (vx * vx + vy * vy).sqrt() > 2.5 {
                    Role::Running
                } else {
                    Role::Standing
                }
            };

            players.push(PlayerFrameAnnotation {
                player_id: id,
                bbox,
                pose: Pose(pose),
                gaze,
                headpose,
                velocity: None,
                role,
            });
        }
        frames.push(FrameAnnotation { frame_id, players });
    }

    let clip = ClipAnnotation {
        clip_id: format!("synth-{index:05}"),
        view,
        tactic,
        fps: cfg.fps,
        num_frames: t_total,
        occurrence_frame: occurrence,
        frames,
    };
    Ok((
        derive_velocities(&clip),
        ClipMeta {
            shooter,
            occurrence,
        },
    ))
}

/// Generate one clip; a pure function of `(cfg, index)`.
pub fn generate_clip(cfg: &SynthConfig, index: u32) -> Result<ClipAnnotation, SynthError> {
    generate_clip_inner(cfg, index).map(|(c, _)| c)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthEntry {
    pub clip_id: String,
    pub file: String,
    pub split: Split,
    pub occurrence_frame: u32,
    pub shooter: u32,
    pub tactic: TacticLabel,
}

/// Manifest written next to the generated clips. Structurally a superset of
/// the dataset manifest, so dataset loaders read it directly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthManifest {
    pub format_version: String,
    pub config: SynthConfig,
    pub clips: Vec<SynthEntry>,
}

impl SynthManifest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("manifest serializes");
        let mut bytes = serde_json::to_vec_pretty(&value).expect("manifest serializes");
        bytes.push(b'\n');
        bytes
    }
}

/// Deterministic split assignment: 20% test, then train/validation 4:1.
pub fn assign_splits(cfg: &SynthConfig) -> Vec<Split> {
    let n = cfg.n_clips as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x51e5_7e57_0bad_5eedu64);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_test = n / 5;
    let n_val = (n - n_test) / 5;
    let mut splits = vec![Split::Train; n];
    for (rank, &idx) in order.iter().enumerate() {
        splits[idx] = if rank < n_test {
            Split::Test
        } else if rank < n_test + n_val {
            Split::Val
        } else {
            Split::Train
        };
    }
    splits
}

/// Write `n_clips` clip files plus a manifest into `out_dir`.
pub fn generate_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthManifest, SynthError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| SynthError::Io(format!("{}: {e}", out_dir.display())))?;
    let splits = assign_splits(cfg);
    let mut entries = Vec::with_capacity(cfg.n_clips as usize);
    for index in 0..cfg.n_clips {
        let (clip, meta) = generate_clip_inner(cfg, index)?;
        let file = format!("{}.json", clip.clip_id);
        let path = out_dir.join(&file);
        std::fs::write(&path, serialize_clip(&clip))
            .map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?;
        entries.push(SynthEntry {
            clip_id: clip.clip_id.clone(),
            file,
            split: splits[index as usize],
            occurrence_frame: meta.occurrence,
            shooter: meta.shooter,
            tactic: clip.tactic,
        });
    }
    let manifest = SynthManifest {
        format_version: FORMAT_VERSION.to_string(),
        config: cfg.clone(),
        clips: entries,
    };
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, manifest.to_bytes())
        .map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?;
    Ok(manifest)
}

/// Mean bbox-anchor speed (px/frame) of one player over 1-based frames
/// [from, to], measured from consecutive position differences.
pub fn mean_speed(clip: &ClipAnnotation, player_id: u32, from: u32, to: u32) -> f64 {
    let mut total = 0.0;
    let mut count = 0u32;
    for k in from.max(2)..=to {
        let cur = clip.frames[(k - 1) as usize].player(player_id).unwrap();
        let prev = clip.frames[(k - 2) as usize].player(player_id).unwrap();
        let dx = cur.bbox.x - prev.bbox.x;
        let dy = cur.bbox.y - prev.bbox.y;
        total += (dx * dx + dy * dy).sqrt();
        count += 1;
    }
    total / count.max(1) as f64
}
