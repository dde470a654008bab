//! The clip annotation schema: parsing, validation, serialization, velocity
//! derivation, the tactic/view taxonomies, and dataset manifests.
//!
//! A clip is one possession: `num_frames` dense frames, each with exactly ten
//! players (offense 1-5, defense 6-10) carrying six attributes, plus the
//! ground-truth occurrence frame of the shot. Files are JSON with sorted keys
//! and shortest-round-trip float printing, so serialization is deterministic
//! and `parse(serialize(c)) == c` holds exactly.

use std::collections::BTreeMap;
use std::ops::Add;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const PLAYERS_PER_FRAME: usize = 10;
/// Offensive player ids; everything above is defense.
pub const OFFENSE_IDS: std::ops::RangeInclusive<u32> = 1..=5;
pub const POSE_DIMS: usize = 34;
pub const DEFAULT_FPS: f64 = 25.0;
pub const FORMAT_VERSION: &str = "gift.dataset.v1";

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(String),
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Per-frame player role. Closed seven-value vocabulary; the last three are
/// the shot-executing subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Standing,
    Running,
    Defending,
    Holding,
    Shooting,
    LayingUp,
    Dunking,
}

pub const ALL_ROLES: [Role; 7] = [
    Role::Standing,
    Role::Running,
    Role::Defending,
    Role::Holding,
    Role::Shooting,
    Role::LayingUp,
    Role::Dunking,
];

impl Role {
    pub fn index(self) -> usize {
        ALL_ROLES.iter().position(|&r| r == self).unwrap()
    }

    /// True for the shot-executing subset.
    pub fn is_shot(self) -> bool {
        matches!(self, Role::Shooting | Role::LayingUp | Role::Dunking)
    }
}

/// Camera view index, one of five angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct View(u8);

pub const VIEW_COUNT: usize = 5;

impl View {
    pub fn new(index: u8) -> Result<Self, AnnotationError> {
        if (index as usize) < VIEW_COUNT {
            Ok(View(index))
        } else {
            Err(AnnotationError::Schema(format!(
                "view index {index} out of range 0..{VIEW_COUNT}"
            )))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<u8> for View {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        View::new(v).map_err(|e| e.to_string())
    }
}

impl From<View> for u8 {
    fn from(v: View) -> u8 {
        v.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Passing {
    NoPass,
    OnePass,
    MultiPass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pnr {
    #[serde(rename = "no_pnr")]
    NoPnr,
    #[serde(rename = "one_pnr")]
    OnePnr,
    #[serde(rename = "multi_pnr")]
    MultiPnr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotMethod {
    Shoot,
    Layup,
    Dunk,
}

/// The four tactic dimensions; their product has 54 cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TacticLabel {
    pub passing: Passing,
    pub pnr: Pnr,
    pub drive: bool,
    pub shot: ShotMethod,
}

pub const TACTIC_COUNT: usize = 54;

/// Mixed-radix index of a tactic label, bijective over the 54 cells.
pub fn tactic_index(t: &TacticLabel) -> usize {
    let passing = t.passing as usize;
    let pnr = t.pnr as usize;
    let drive = t.drive as usize;
    let shot = t.shot as usize;
    ((passing * 3 + pnr) * 2 + drive) * 3 + shot
}

/// Inverse of [`tactic_index`].
pub fn tactic_from_index(index: usize) -> TacticLabel {
    assert!(index < TACTIC_COUNT);
    let shot = index % 3;
    let rest = index / 3;
    let drive = rest % 2;
    let rest = rest / 2;
    let pnr = rest % 3;
    let passing = rest / 3;
    TacticLabel {
        passing: [Passing::NoPass, Passing::OnePass, Passing::MultiPass][passing],
        pnr: [Pnr::NoPnr, Pnr::OnePnr, Pnr::MultiPnr][pnr],
        drive: drive == 1,
        shot: [ShotMethod::Shoot, ShotMethod::Layup, ShotMethod::Dunk][shot],
    }
}

/// Pixel bounding box anchored at its stored top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub w: f64,
}

/// 17 keypoints, (x, y) pixels each, in fixed COCO order: 34 scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pose(pub [f64; POSE_DIMS]);

impl TryFrom<Vec<f64>> for Pose {
    type Error = String;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let arr: [f64; POSE_DIMS] = v
            .try_into()
            .map_err(|v: Vec<f64>| format!("pose must have {POSE_DIMS} values, got {}", v.len()))?;
        Ok(Pose(arr))
    }
}

impl From<Pose> for Vec<f64> {
    fn from(p: Pose) -> Vec<f64> {
        p.0.to_vec()
    }
}

/// Gaze direction in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaze {
    pub pitch: f64,
    pub yaw: f64,
}

/// Head orientation in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

/// Bounding-box anchor velocity in pixels per second. Frame 1 is (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Velocity {
    pub v_x: f64,
    pub v_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerFrameAnnotation {
    pub player_id: u32,
    pub bbox: BBox,
    pub pose: Pose,
    pub gaze: Gaze,
    pub headpose: HeadPose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Velocity>,
    pub role: Role,
}

impl PlayerFrameAnnotation {
    pub fn is_offense(&self) -> bool {
        OFFENSE_IDS.contains(&self.player_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub frame_id: u32,
    pub players: Vec<PlayerFrameAnnotation>,
}

impl FrameAnnotation {
    pub fn player(&self, player_id: u32) -> Option<&PlayerFrameAnnotation> {
        self.players.iter().find(|p| p.player_id == player_id)
    }
}

/// One clip: metadata, dense frames 1..num_frames, and the ground-truth
/// occurrence frame of the shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipAnnotation {
    pub clip_id: String,
    pub view: View,
    pub tactic: TacticLabel,
    pub fps: f64,
    pub num_frames: u32,
    pub occurrence_frame: u32,
    pub frames: Vec<FrameAnnotation>,
}

impl ClipAnnotation {
    pub fn duration_seconds(&self) -> f64 {
        self.num_frames as f64 / self.fps
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Whether a finding is structural (arity, counts) or a value-range /
/// cross-field violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    Schema,
    Invariant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub player_id: Option<u32>,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    fn push(
        &mut self,
        kind: FindingKind,
        rule: &str,
        frame_id: Option<u32>,
        player_id: Option<u32>,
        message: String,
    ) {
        self.findings.push(Finding {
            kind,
            rule: rule.to_string(),
            frame_id,
            player_id,
            message,
        });
    }
}

fn angle_in(v: f64, lo: f64, hi: f64) -> bool {
    v.is_finite() && v >= lo && v <= hi
}

/// Check every schema invariant of a parsed clip. Findings, not failures:
/// any structurally representable clip can be inspected.
pub fn validate_clip(c: &ClipAnnotation) -> ValidationReport {
    use std::f64::consts::{FRAC_PI_2, PI};
    let mut report = ValidationReport::default();

    if c.num_frames < 2 {
        report.push(
            FindingKind::Invariant,
            "clip.frame-count",
            None,
            None,
            format!("num_frames must be >= 2, got {}", c.num_frames),
        );
    }
    if !(c.fps.is_finite() && c.fps > 0.0) {
        report.push(
            FindingKind::Invariant,
            "clip.fps",
            None,
            None,
            format!("fps must be positive and finite, got {}", c.fps),
        );
    }
    if c.frames.len() != c.num_frames as usize {
        report.push(
            FindingKind::Schema,
            "clip.frames-length",
            None,
            None,
            format!(
                "num_frames is {} but {} frames are present",
                c.num_frames,
                c.frames.len()
            ),
        );
    }
    if c.occurrence_frame < 1 || c.occurrence_frame > c.num_frames {
        report.push(
            FindingKind::Invariant,
            "clip.occurrence-range",
            None,
            None,
            format!(
                "occurrence_frame {} outside [1, {}]",
                c.occurrence_frame, c.num_frames
            ),
        );
    }

    for (idx, frame) in c.frames.iter().enumerate() {
        let expect_id = idx as u32 + 1;
        if frame.frame_id != expect_id {
            report.push(
                FindingKind::Invariant,
                "clip.frame-ids-dense",
                Some(frame.frame_id),
                None,
                format!("frame at position {idx} has frame_id {} (expected {expect_id})", frame.frame_id),
            );
        }
        if frame.players.len() != PLAYERS_PER_FRAME {
            report.push(
                FindingKind::Schema,
                "frame.players-arity",
                Some(frame.frame_id),
                None,
                format!(
                    "frame must have exactly {PLAYERS_PER_FRAME} players, got {}",
                    frame.players.len()
                ),
            );
        }
        let mut seen = [false; PLAYERS_PER_FRAME + 1];
        for p in &frame.players {
            if p.player_id < 1 || p.player_id > PLAYERS_PER_FRAME as u32 {
                report.push(
                    FindingKind::Invariant,
                    "player.id-range",
                    Some(frame.frame_id),
                    Some(p.player_id),
                    format!("player_id {} outside [1, {PLAYERS_PER_FRAME}]", p.player_id),
                );
            } else if seen[p.player_id as usize] {
                report.push(
                    FindingKind::Invariant,
                    "frame.player-ids-unique",
                    Some(frame.frame_id),
                    Some(p.player_id),
                    format!("duplicate player_id {}", p.player_id),
                );
            } else {
                seen[p.player_id as usize] = true;
            }

            let b = &p.bbox;
            if !(b.x.is_finite() && b.y.is_finite() && b.h.is_finite() && b.w.is_finite())
                || b.h <= 0.0
                || b.w <= 0.0
            {
                report.push(
                    FindingKind::Invariant,
                    "player.bbox",
                    Some(frame.frame_id),
                    Some(p.player_id),
                    format!("bbox must be finite with h > 0, w > 0: {b:?}"),
                );
            }
            if !p.pose.0.iter().all(|v| v.is_finite()) {
                report.push(
                    FindingKind::Invariant,
                    "player.pose",
                    Some(frame.frame_id),
                    Some(p.player_id),
                    "pose has non-finite values".to_string(),
                );
            }
            if !angle_in(p.gaze.pitch, -FRAC_PI_2, FRAC_PI_2) || !angle_in(p.gaze.yaw, -PI, PI) {
                report.push(
                    FindingKind::Invariant,
                    "player.gaze-range",
                    Some(frame.frame_id),
                    Some(p.player_id),
                    format!(
                        "gaze pitch must be in [-pi/2, pi/2], yaw in [-pi, pi]: {:?}",
                        p.gaze
                    ),
                );
            }
            if !angle_in(p.headpose.pitch, -PI, PI)
                || !angle_in(p.headpose.yaw, -PI, PI)
                || !angle_in(p.headpose.roll, -PI, PI)
            {
                report.push(
                    FindingKind::Invariant,
                    "player.headpose-range",
                    Some(frame.frame_id),
                    Some(p.player_id),
                    format!("headpose angles must be in [-pi, pi]: {:?}", p.headpose),
                );
            }
            if let Some(v) = &p.velocity {
                if !(v.v_x.is_finite() && v.v_y.is_finite()) {
                    report.push(
                        FindingKind::Invariant,
                        "player.velocity",
                        Some(frame.frame_id),
                        Some(p.player_id),
                        format!("velocity has non-finite values: {v:?}"),
                    );
                } else if frame.frame_id == 1 && (v.v_x != 0.0 || v.v_y != 0.0) {
                    report.push(
                        FindingKind::Invariant,
                        "player.velocity-first-frame",
                        Some(frame.frame_id),
                        Some(p.player_id),
                        format!("frame 1 velocity must be (0, 0), got {v:?}"),
                    );
                }
            }
        }
    }

    // The occurrence frame must actually show an offensive shot role.
    if let Some(frame) = c
        .frames
        .iter()
        .find(|f| f.frame_id == c.occurrence_frame)
    {
        let has_shooter = frame
            .players
            .iter()
            .any(|p| p.is_offense() && p.role.is_shot());
        if !has_shooter {
            report.push(
                FindingKind::Invariant,
                "clip.occurrence-role",
                Some(c.occurrence_frame),
                None,
                "no offensive player has a shot role at the occurrence frame".to_string(),
            );
        }
    }

    report
}

// ---------------------------------------------------------------------------
// Parse / serialize
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    /// Reject documents containing unknown fields.
    Strict,
    /// Ignore unknown fields.
    Lenient,
}

fn known_keys(v: &Value, path: &str, keys: &[&str]) -> Result<(), AnnotationError> {
    if let Value::Object(map) = v {
        for k in map.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(AnnotationError::Schema(format!(
                    "unknown field `{k}` in {path}"
                )));
            }
        }
    }
    Ok(())
}

fn check_unknown_fields(doc: &Value) -> Result<(), AnnotationError> {
    known_keys(
        doc,
        "clip",
        &[
            "clip_id",
            "view",
            "tactic",
            "fps",
            "num_frames",
            "occurrence_frame",
            "frames",
        ],
    )?;
    if let Some(t) = doc.get("tactic") {
        known_keys(t, "tactic", &["passing", "pnr", "drive", "shot"])?;
    }
    if let Some(Value::Array(frames)) = doc.get("frames") {
        for f in frames {
            known_keys(f, "frame", &["frame_id", "players"])?;
            if let Some(Value::Array(players)) = f.get("players") {
                for p in players {
                    known_keys(
                        p,
                        "player",
                        &[
                            "player_id",
                            "bbox",
                            "pose",
                            "gaze",
                            "headpose",
                            "velocity",
                            "role",
                        ],
                    )?;
                    if let Some(b) = p.get("bbox") {
                        known_keys(b, "bbox", &["x", "y", "h", "w"])?;
                    }
                    if let Some(gz) = p.get("gaze") {
                        known_keys(gz, "gaze", &["pitch", "yaw"])?;
                    }
                    if let Some(hp) = p.get("headpose") {
                        known_keys(hp, "headpose", &["pitch", "yaw", "roll"])?;
                    }
                    if let Some(vl) = p.get("velocity") {
                        known_keys(vl, "velocity", &["v_x", "v_y"])?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Parse a clip document, enforcing every schema invariant.
pub fn parse_clip_with(bytes: &[u8], strictness: Strictness) -> Result<ClipAnnotation, AnnotationError> {
    let doc: Value =
        serde_json::from_slice(bytes).map_err(|e| AnnotationError::Syntax(e.to_string()))?;
    if strictness == Strictness::Strict {
        check_unknown_fields(&doc)?;
    }
    let clip: ClipAnnotation =
        serde_json::from_value(doc).map_err(|e| AnnotationError::Schema(e.to_string()))?;
    let report = validate_clip(&clip);
    if let Some(f) = report
        .findings
        .iter()
        .find(|f| f.kind == FindingKind::Schema)
    {
        return Err(AnnotationError::Schema(format!("{}: {}", f.rule, f.message)));
    }
    if let Some(f) = report.findings.first() {
        return Err(AnnotationError::Invariant(format!(
            "{}: {} ({} finding(s) total)",
            f.rule,
            f.message,
            report.findings.len()
        )));
    }
    Ok(clip)
}

/// Strict-mode parse; see [`parse_clip_with`].
pub fn parse_clip(bytes: &[u8]) -> Result<ClipAnnotation, AnnotationError> {
    parse_clip_with(bytes, Strictness::Strict)
}

/// Deterministic serialization: sorted keys, shortest-round-trip floats,
/// trailing newline. [`parse_clip`] inverts it exactly.
pub fn serialize_clip(c: &ClipAnnotation) -> Vec<u8> {
    let value = serde_json::to_value(c).expect("clip serializes");
    let mut bytes = serde_json::to_vec_pretty(&value).expect("clip serializes");
    bytes.push(b'\n');
    bytes
}

/// Recompute every velocity from bounding-box anchor differences:
/// `v = (coord_k - coord_{k-1}) / dt` with `dt = 1 / fps`, and exactly
/// (0, 0) at frame 1. All other fields are left untouched. Idempotent.
pub fn derive_velocities(c: &ClipAnnotation) -> ClipAnnotation {
    let mut out = c.clone();
    let dt = 1.0 / c.fps;
    for k in 0..out.frames.len() {
        if k == 0 {
            for p in &mut out.frames[0].players {
                p.velocity = Some(Velocity { v_x: 0.0, v_y: 0.0 });
            }
            continue;
        }
        let prev: BTreeMap<u32, (f64, f64)> = c.frames[k - 1]
            .players
            .iter()
            .map(|p| (p.player_id, (p.bbox.x, p.bbox.y)))
            .collect();
        for p in &mut out.frames[k].players {
            let (px, py) = *prev
                .get(&p.player_id)
                .expect("derive_velocities requires a valid clip (player present in every frame)");
            p.velocity = Some(Velocity {
                v_x: (p.bbox.x - px) / dt,
                v_y: (p.bbox.y - py) / dt,
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Dataset statistics
// ---------------------------------------------------------------------------

/// Aggregate annotation counts over a clip collection. Addition is
/// elementwise, so stats over disjoint collections compose.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub clip_count: u64,
    pub frame_count: u64,
    pub bbox_count: u64,
    pub pose_count: u64,
    pub gaze_count: u64,
    pub headpose_count: u64,
    pub velocity_count: u64,
    pub role_count: u64,
    pub role_histogram: [u64; 7],
    pub view_histogram: [u64; 5],
    pub tactic_histogram: Vec<u64>,
    pub total_duration_seconds: f64,
}

impl DatasetStats {
    fn empty() -> Self {
        DatasetStats {
            tactic_histogram: vec![0; TACTIC_COUNT],
            ..Default::default()
        }
    }
}

impl Add for DatasetStats {
    type Output = DatasetStats;
    fn add(self, rhs: DatasetStats) -> DatasetStats {
        let mut out = DatasetStats::empty();
        out.clip_count = self.clip_count + rhs.clip_count;
        out.frame_count = self.frame_count + rhs.frame_count;
        out.bbox_count = self.bbox_count + rhs.bbox_count;
        out.pose_count = self.pose_count + rhs.pose_count;
        out.gaze_count = self.gaze_count + rhs.gaze_count;
        out.headpose_count = self.headpose_count + rhs.headpose_count;
        out.velocity_count = self.velocity_count + rhs.velocity_count;
        out.role_count = self.role_count + rhs.role_count;
        for i in 0..7 {
            out.role_histogram[i] = self.role_histogram[i] + rhs.role_histogram[i];
        }
        for i in 0..5 {
            out.view_histogram[i] = self.view_histogram[i] + rhs.view_histogram[i];
        }
        for i in 0..TACTIC_COUNT {
            out.tactic_histogram[i] = self.tactic_histogram.get(i).copied().unwrap_or(0)
                + rhs.tactic_histogram.get(i).copied().unwrap_or(0);
        }
        out.total_duration_seconds = self.total_duration_seconds + rhs.total_duration_seconds;
        out
    }
}

pub fn dataset_stats<'a>(clips: impl IntoIterator<Item = &'a ClipAnnotation>) -> DatasetStats {
    let mut s = DatasetStats::empty();
    for c in clips {
        s.clip_count += 1;
        s.frame_count += c.frames.len() as u64;
        s.view_histogram[c.view.index()] += 1;
        s.tactic_histogram[tactic_index(&c.tactic)] += 1;
        s.total_duration_seconds += c.duration_seconds();
        for f in &c.frames {
            for p in &f.players {
                s.bbox_count += 1;
                s.pose_count += 1;
                s.gaze_count += 1;
                s.headpose_count += 1;
                s.role_count += 1;
                if p.velocity.is_some() {
                    s.velocity_count += 1;
                }
                s.role_histogram[p.role.index()] += 1;
            }
        }
    }
    s
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub file: String,
    pub split: Split,
}

/// A dataset is a directory of clip files plus this manifest. Extra fields
/// written by generators are tolerated on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub clips: Vec<ManifestEntry>,
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest, AnnotationError> {
    let path = manifest_path(dir);
    let bytes = std::fs::read(&path)
        .map_err(|e| AnnotationError::Io(format!("{}: {e}", path.display())))?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|e| AnnotationError::Schema(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(AnnotationError::Schema(format!(
            "unsupported manifest format version `{}` (expected `{FORMAT_VERSION}`)",
            manifest.format_version
        )));
    }
    Ok(manifest)
}

/// Load every clip referenced by a dataset manifest, strictly parsed.
pub fn load_dataset(dir: &Path) -> Result<Vec<(ClipAnnotation, Split)>, AnnotationError> {
    let manifest = load_manifest(dir)?;
    let mut out = Vec::with_capacity(manifest.clips.len());
    for entry in &manifest.clips {
        let path = dir.join(&entry.file);
        let bytes = std::fs::read(&path)
            .map_err(|e| AnnotationError::Io(format!("{}: {e}", path.display())))?;
        let clip = parse_clip(&bytes)?;
        out.push((clip, entry.split));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fixture_player(id: u32, x: f64, role: Role) -> PlayerFrameAnnotation {
        PlayerFrameAnnotation {
            player_id: id,
            bbox: BBox {
                x,
                y: 200.0 + id as f64,
                h: 100.0,
                w: 40.0,
            },
            pose: Pose([1.5; POSE_DIMS]),
            gaze: Gaze {
                pitch: 0.1,
                yaw: -0.2,
            },
            headpose: HeadPose {
                pitch: 0.05,
                yaw: 0.3,
                roll: -0.01,
            },
            velocity: None,
            role,
        }
    }

    pub(crate) fn fixture_clip(t: u32) -> ClipAnnotation {
        let frames = (1..=t)
            .map(|frame_id| FrameAnnotation {
                frame_id,
                players: (1..=10)
                    .map(|id| {
                        let role = if frame_id == t && id == 3 {
                            Role::Shooting
                        } else if id <= 5 {
                            Role::Holding
                        } else {
                            Role::Defending
                        };
                        fixture_player(id, 100.0 + 5.0 * frame_id as f64 + id as f64, role)
                    })
                    .collect(),
            })
            .collect();
        ClipAnnotation {
            clip_id: "fixture".to_string(),
            view: View::new(2).unwrap(),
            tactic: TacticLabel {
                passing: Passing::OnePass,
                pnr: Pnr::NoPnr,
                drive: true,
                shot: ShotMethod::Shoot,
            },
            fps: DEFAULT_FPS,
            num_frames: t,
            occurrence_frame: t,
            frames,
        }
    }

    #[test]
    fn minimal_fixture_parses() {
        let clip = fixture_clip(2);
        assert!(validate_clip(&clip).is_clean());
        let bytes = serialize_clip(&clip);
        let parsed = parse_clip(&bytes).unwrap();
        assert_eq!(parsed, clip);
        assert_eq!(parsed.num_frames, 2);
    }

    #[test]
    fn missing_player_is_schema_error() {
        let mut clip = fixture_clip(2);
        clip.frames[0].players.retain(|p| p.player_id != 7);
        let bytes = serialize_clip(&clip);
        assert!(matches!(
            parse_clip(&bytes),
            Err(AnnotationError::Schema(_))
        ));
    }

    #[test]
    fn duplicate_player_is_invariant_error() {
        let mut clip = fixture_clip(2);
        clip.frames[0].players[4].player_id = 3;
        let bytes = serialize_clip(&clip);
        assert!(matches!(
            parse_clip(&bytes),
            Err(AnnotationError::Invariant(_))
        ));
    }

    #[test]
    fn serialization_is_deterministic() {
        let clip = fixture_clip(3);
        assert_eq!(serialize_clip(&clip), serialize_clip(&clip));
    }

    #[test]
    fn serialize_parse_serialize_fixed_point() {
        let clip = fixture_clip(3);
        let b1 = serialize_clip(&clip);
        let b2 = serialize_clip(&parse_clip(&b1).unwrap());
        assert_eq!(b1, b2);
    }

    #[test]
    fn velocity_omitted_when_absent() {
        let clip = fixture_clip(2);
        let text = String::from_utf8(serialize_clip(&clip)).unwrap();
        assert!(!text.contains("velocity"));
        let derived = derive_velocities(&clip);
        let text = String::from_utf8(serialize_clip(&derived)).unwrap();
        assert!(text.contains("v_x"));
    }

    #[test]
    fn derive_velocities_arithmetic() {
        // x moves 100 -> 105 across one frame at 25 fps: 5 / 0.04 = 125 px/s.
        let mut clip = fixture_clip(2);
        clip.frames[0].players[0].bbox.x = 100.0;
        clip.frames[1].players[0].bbox.x = 105.0;
        let d = derive_velocities(&clip);
        let v = d.frames[1].players[0].velocity.unwrap();
        assert_eq!(v.v_x, 125.0);
        let v1 = d.frames[0].players[0].velocity.unwrap();
        assert_eq!((v1.v_x, v1.v_y), (0.0, 0.0));
    }

    #[test]
    fn derive_velocities_stationary_and_idempotent() {
        let mut clip = fixture_clip(4);
        for f in &mut clip.frames {
            for p in &mut f.players {
                p.bbox.x = 500.0;
                p.bbox.y = 300.0;
            }
        }
        let d1 = derive_velocities(&clip);
        for f in &d1.frames {
            for p in &f.players {
                let v = p.velocity.unwrap();
                assert_eq!((v.v_x, v.v_y), (0.0, 0.0));
            }
        }
        let d2 = derive_velocities(&d1);
        assert_eq!(d1, d2);
    }

    #[test]
    fn validate_flags_gaze_range() {
        let mut clip = fixture_clip(2);
        clip.frames[0].players[0].gaze.yaw = 7.0;
        let report = validate_clip(&clip);
        assert_eq!(report.findings.len(), 1);
        assert_eq!(report.findings[0].rule, "player.gaze-range");
        assert_eq!(report.findings[0].frame_id, Some(1));
        assert_eq!(report.findings[0].player_id, Some(1));
    }

    #[test]
    fn validate_flags_occurrence_bound() {
        let mut clip = fixture_clip(2);
        clip.occurrence_frame = 5;
        let report = validate_clip(&clip);
        assert!(report
            .findings
            .iter()
            .any(|f| f.rule == "clip.occurrence-range"));
    }

    #[test]
    fn strict_mode_rejects_unknown_field() {
        let clip = fixture_clip(2);
        let mut v: Value = serde_json::from_slice(&serialize_clip(&clip)).unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("banana".to_string(), Value::Bool(true));
        let bytes = serde_json::to_vec(&v).unwrap();
        assert!(matches!(
            parse_clip(&bytes),
            Err(AnnotationError::Schema(_))
        ));
        assert!(parse_clip_with(&bytes, Strictness::Lenient).is_ok());
    }

    #[test]
    fn tactic_index_corners_and_bijection() {
        let zero = TacticLabel {
            passing: Passing::NoPass,
            pnr: Pnr::NoPnr,
            drive: false,
            shot: ShotMethod::Shoot,
        };
        assert_eq!(tactic_index(&zero), 0);
        let max = TacticLabel {
            passing: Passing::MultiPass,
            pnr: Pnr::MultiPnr,
            drive: true,
            shot: ShotMethod::Dunk,
        };
        assert_eq!(tactic_index(&max), 53);
        let mut seen = [false; TACTIC_COUNT];
        for i in 0..TACTIC_COUNT {
            let t = tactic_from_index(i);
            let j = tactic_index(&t);
            assert_eq!(i, j);
            assert!(!seen[j]);
            seen[j] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn stats_counts_and_additivity() {
        let a = fixture_clip(50);
        let s = dataset_stats([&a]);
        assert_eq!(s.bbox_count, 500);
        assert_eq!(s.frame_count, 50);
        assert_eq!(s.clip_count, 1);
        assert!((s.total_duration_seconds - 2.0).abs() < 1e-12);

        let empty = dataset_stats(std::iter::empty());
        assert_eq!(empty.clip_count, 0);
        assert_eq!(empty.bbox_count, 0);

        let b = fixture_clip(20);
        let both = dataset_stats([&a, &b]);
        let summed = dataset_stats([&a]) + dataset_stats([&b]);
        assert_eq!(both, summed);

        // Reported-scale sanity: 214K frames x 10 players is about 2.1M boxes.
        assert_eq!(214_000u64 * 10, 2_140_000);
    }

    #[test]
    fn view_range_enforced() {
        assert!(View::new(4).is_ok());
        assert!(View::new(5).is_err());
        let json = br#"{"clip_id":"x","view":7}"#;
        let v: Result<ClipAnnotation, _> = serde_json::from_slice(json);
        assert!(v.is_err());
    }

    #[test]
    fn pose_arity_enforced() {
        let short: Vec<f64> = vec![0.0; 33];
        let r: Result<Pose, _> = serde_json::from_value(serde_json::to_value(short).unwrap());
        assert!(r.is_err());
    }
}
