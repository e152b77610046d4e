//! End-to-end generation of intermediate clips between reference clips and a
//! target clip.
//!
//! References are ranked by OPW distance to the target, the closest `q_nearest`
//! are hard-assigned frame by frame, and for every `τ` in the schedule one clip
//! of target length is sampled along the per-frame geodesics and made
//! collision-free. All parallel work is collected in input order, so results do
//! not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{opw_align, AlignmentResult, OpwParams};
use crate::assignment::{soft_to_hard, AssignmentMatrix};
use crate::collision::{CollisionModel, DEFAULT_LAMBDA_CAPSULE};
use crate::error::{Error, Result};
use crate::kinematics::{SkeletonTopology, DEFAULT_RHO};
use crate::optimizer::{optimize_pose, OptimizationTrace, OptimizerConfig};
use crate::pose::{interpolate_pose, MetricConfig, MotionClip, PoseSkeleton};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Number of closest references used.
    pub q_nearest: usize,
    pub samples_per_clip: usize,
    pub tau_schedule: Vec<f64>,
    pub opw: OpwParams,
    pub metric: MetricConfig,
    pub optimizer: OptimizerConfig,
    pub rho: f64,
    pub lambda_capsule: f64,
    /// Recorded with the outputs. Generation itself draws no random numbers.
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            q_nearest: 10,
            samples_per_clip: 6,
            tau_schedule: even_schedule(6),
            opw: OpwParams::default(),
            metric: MetricConfig::default(),
            optimizer: OptimizerConfig::default(),
            rho: DEFAULT_RHO,
            lambda_capsule: DEFAULT_LAMBDA_CAPSULE,
            seed: 0,
        }
    }
}

/// Interior points `k / (count + 1)` for `k = 1..=count`.
pub fn even_schedule(count: usize) -> Vec<f64> {
    (1..=count).map(|k| k as f64 / (count + 1) as f64).collect()
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q_nearest == 0 {
            return Err(Error::InvalidConfig("q_nearest must be at least 1".into()));
        }
        if self.samples_per_clip == 0 {
            return Err(Error::InvalidConfig(
                "samples_per_clip must be at least 1".into(),
            ));
        }
        if self.tau_schedule.len() != self.samples_per_clip {
            return Err(Error::InvalidConfig(format!(
                "tau_schedule has {} entries but samples_per_clip is {}",
                self.tau_schedule.len(),
                self.samples_per_clip
            )));
        }
        if self.tau_schedule.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::InvalidConfig(
                "tau_schedule entries must lie strictly between 0 and 1".into(),
            ));
        }
        if self.tau_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "tau_schedule must be strictly increasing".into(),
            ));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !self.lambda_capsule.is_finite() || self.lambda_capsule < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda_capsule must be finite and >= 0, got {}",
                self.lambda_capsule
            )));
        }
        self.opw.validate()?;
        self.metric.validate()?;
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone)]
pub struct RankedReference {
    /// Position of the clip in the input list.
    pub index: usize,
    pub name: String,
    pub alignment: AlignmentResult,
}

fn check_compatible(clip: &MotionClip, target: &MotionClip) -> Result<()> {
    if clip.topology_ref != target.topology_ref || clip.joint_count() != target.joint_count() {
        return Err(Error::TopologyMismatch {
            clip: clip.name.clone(),
        });
    }
    Ok(())
}

/// Aligns every reference to the target and keeps the `q_nearest` closest,
/// ordered by distance and then by name.
pub fn rank_references(
    refs: &[MotionClip],
    target: &MotionClip,
    cfg: &GenerationConfig,
) -> Result<Vec<RankedReference>> {
    if refs.is_empty() {
        return Err(Error::EmptyInput("no reference clips"));
    }
    for clip in refs {
        check_compatible(clip, target)?;
    }
    let target_aligned = target.root_aligned();
    let mut ranked = refs
        .par_iter()
        .enumerate()
        .map(|(index, clip)| {
            let alignment =
                opw_align(&clip.root_aligned(), &target_aligned, &cfg.opw, &cfg.metric)?;
            Ok(RankedReference {
                index,
                name: clip.name.clone(),
                alignment,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        a.alignment
            .distance
            .total_cmp(&b.alignment.distance)
            .then_with(|| a.name.cmp(&b.name))
            .then_with(|| a.index.cmp(&b.index))
    });
    ranked.truncate(cfg.q_nearest.min(refs.len()));
    Ok(ranked)
}

/// Frames of one generated clip before optimization: target frame `m` is
/// blended with reference frame `n(m)` at `tau`.
///
/// Both clips are expected to be root-aligned; `origin` is added back to every
/// root translation.
pub fn sample_clip(
    reference: &MotionClip,
    target: &MotionClip,
    assignment: &AssignmentMatrix,
    tau: f64,
    origin: &nalgebra::Vector3<f64>,
) -> Result<Vec<PoseSkeleton>> {
    let sources = assignment.sources();
    if sources.len() != target.len() {
        return Err(Error::DimensionMismatch {
            context: "assignment targets vs target frames",
            expected: target.len(),
            found: sources.len(),
        });
    }
    sources
        .iter()
        .zip(&target.frames)
        .map(|(&n, t)| {
            let r = reference.frames.get(n).ok_or(Error::DimensionMismatch {
                context: "assigned source frame",
                expected: reference.len(),
                found: n + 1,
            })?;
            let mut pose = interpolate_pose(r, t, tau)?;
            pose.root_translation += origin;
            Ok(pose)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub steps_taken: usize,
    pub converged_early: bool,
    pub flagged: bool,
}

impl FrameReport {
    fn from_trace(trace: &OptimizationTrace, flagged: bool) -> Self {
        FrameReport {
            initial_energy: trace.initial_energy,
            final_energy: trace.final_energy,
            steps_taken: trace.steps_taken,
            converged_early: trace.converged_early,
            flagged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipProvenance {
    pub clip: String,
    pub reference: String,
    pub tau: f64,
    pub opw_distance: f64,
    /// `(reference frame, target frame)` pairs.
    pub assignment: Vec<(usize, usize)>,
    pub frames: Vec<FrameReport>,
}

impl ClipProvenance {
    pub fn flagged_frames(&self) -> Vec<usize> {
        self.frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.flagged)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSet {
    pub clips: Vec<MotionClip>,
    pub provenance: Vec<ClipProvenance>,
}

impl GeneratedSet {
    pub fn flagged_frame_count(&self) -> usize {
        self.provenance
            .iter()
            .map(|p| p.flagged_frames().len())
            .sum()
    }
}

pub fn clip_name(reference: &str, tau: f64) -> String {
    format!("{reference}__tau{tau:.4}")
}

/// Runs the full generation pipeline.
pub fn generate(
    refs: &[MotionClip],
    target: &MotionClip,
    topology: &SkeletonTopology,
    cfg: &GenerationConfig,
) -> Result<GeneratedSet> {
    cfg.validate()?;
    if target.joint_count() != topology.joint_count() {
        return Err(Error::DimensionMismatch {
            context: "target joints vs topology joints",
            expected: topology.joint_count(),
            found: target.joint_count(),
        });
    }
    let model = CollisionModel::new(topology.clone(), cfg.rho, cfg.lambda_capsule)?;
    let ranked = rank_references(refs, target, cfg)?;
    let target_aligned = target.root_aligned();
    let origin = target.frames[0].root_translation;

    let mut drafts = Vec::new();
    for r in &ranked {
        let assignment = soft_to_hard(&r.alignment.plan)?;
        let reference = refs[r.index].root_aligned();
        for &tau in &cfg.tau_schedule {
            let frames = sample_clip(&reference, &target_aligned, &assignment, tau, &origin)?;
            drafts.push((r, assignment.pairs.clone(), tau, frames));
        }
    }
    log::info!(
        "optimizing {} clips of {} frames from {} references",
        drafts.len(),
        target.len(),
        ranked.len()
    );

    let jobs: Vec<(usize, usize)> = drafts
        .iter()
        .enumerate()
        .flat_map(|(c, d)| (0..d.3.len()).map(move |f| (c, f)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(c, f)| {
            let pose = &drafts[c].3[f];
            match optimize_pose(pose, &model, &cfg.optimizer) {
                Ok((out, trace)) => {
                    let flagged = !(trace.final_energy < cfg.optimizer.energy_stop);
                    Ok((out, FrameReport::from_trace(&trace, flagged)))
                }
                Err(Error::Divergence { trace, .. }) => {
                    Ok((pose.clone(), FrameReport::from_trace(&trace, true)))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut results = results.into_iter();
    let mut clips = Vec::with_capacity(drafts.len());
    let mut provenance = Vec::with_capacity(drafts.len());
    for (r, pairs, tau, frames) in &drafts {
        let (poses, reports): (Vec<_>, Vec<_>) = results.by_ref().take(frames.len()).unzip();
        let name = clip_name(&r.name, *tau);
        let flagged = reports.iter().filter(|f: &&FrameReport| f.flagged).count();
        if flagged > 0 {
            log::warn!("{name}: {flagged} frame(s) flagged");
        }
        clips.push(MotionClip::new(
            name.clone(),
            target.fps,
            poses,
            target.topology_ref.clone(),
        )?);
        provenance.push(ClipProvenance {
            clip: name,
            reference: r.name.clone(),
            tau: *tau,
            opw_distance: r.alignment.distance,
            assignment: pairs.clone(),
            frames: reports,
        });
    }
    Ok(GeneratedSet { clips, provenance })
}
