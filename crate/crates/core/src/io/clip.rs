//! Native clip document: one JSON file holding the skeleton and all frames.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{parse_json, read_text, write_text};
use crate::error::{Error, Result};
use crate::kinematics::SkeletonTopology;
use crate::pose::{MotionClip, PoseSkeleton, UnitQuat};

/// Norm deviation above which a stored quaternion triggers a warning.
pub const NORM_WARNING: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipDocument {
    pub name: String,
    pub fps: f64,
    pub joints: Vec<String>,
    pub parents: Vec<i64>,
    pub offsets: Vec<[f64; 3]>,
    pub frames: Vec<FrameDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDocument {
    pub root_translation: [f64; 3],
    /// `(w, x, y, z)` per joint. Kept loose so bad lengths get a precise error.
    pub rotations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDocument {
    pub joints: Vec<String>,
    pub parents: Vec<i64>,
    pub offsets: Vec<[f64; 3]>,
}

impl TopologyDocument {
    pub fn from_topology(top: &SkeletonTopology) -> Self {
        TopologyDocument {
            joints: top.joint_names().to_vec(),
            parents: top.parents().to_vec(),
            offsets: top
                .local_offsets()
                .iter()
                .map(|o| [o.x, o.y, o.z])
                .collect(),
        }
    }

    pub fn to_topology(&self) -> Result<SkeletonTopology> {
        if self.joints.len() != self.parents.len() || self.joints.len() != self.offsets.len() {
            return Err(Error::Schema(format!(
                "{} joints, {} parents and {} offsets must have equal lengths",
                self.joints.len(),
                self.parents.len(),
                self.offsets.len()
            )));
        }
        SkeletonTopology::new(
            self.joints.clone(),
            self.parents.clone(),
            self.offsets.iter().map(|o| Vector3::from(*o)).collect(),
        )
    }
}

/// A clip with its skeleton and any warnings raised while loading it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedClip {
    pub clip: MotionClip,
    pub topology: SkeletonTopology,
    pub warnings: Vec<String>,
}

impl ClipDocument {
    pub fn from_clip(clip: &MotionClip, topology: &SkeletonTopology) -> Result<Self> {
        if clip.joint_count() != topology.joint_count() {
            return Err(Error::DimensionMismatch {
                context: "clip joints vs topology joints",
                expected: topology.joint_count(),
                found: clip.joint_count(),
            });
        }
        let top = TopologyDocument::from_topology(topology);
        Ok(ClipDocument {
            name: clip.name.clone(),
            fps: clip.fps,
            joints: top.joints,
            parents: top.parents,
            offsets: top.offsets,
            frames: clip
                .frames
                .iter()
                .map(|f| FrameDocument {
                    root_translation: [
                        f.root_translation.x,
                        f.root_translation.y,
                        f.root_translation.z,
                    ],
                    rotations: f.rotations.iter().map(|q| q.as_array().to_vec()).collect(),
                })
                .collect(),
        })
    }

    pub fn into_clip(self) -> Result<LoadedClip> {
        let topology = TopologyDocument {
            joints: self.joints,
            parents: self.parents,
            offsets: self.offsets,
        }
        .to_topology()?;
        let joints = topology.joint_count();
        let mut warnings = Vec::new();
        let mut frames = Vec::with_capacity(self.frames.len());
        for (i, frame) in self.frames.into_iter().enumerate() {
            if frame.rotations.len() != joints {
                return Err(Error::Schema(format!(
                    "frame {i}: {} rotations for {joints} joints",
                    frame.rotations.len()
                )));
            }
            let mut rotations = Vec::with_capacity(joints);
            for (j, r) in frame.rotations.iter().enumerate() {
                let q: [f64; 4] = r.as_slice().try_into().map_err(|_| {
                    Error::Schema(format!(
                        "frame {i}, joint {j}: rotation has {} components, expected 4 (w, x, y, z)",
                        r.len()
                    ))
                })?;
                let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                let unit = UnitQuat::from_array(q).ok_or_else(|| {
                    Error::Schema(format!(
                        "frame {i}, joint {j}: rotation is zero or not finite"
                    ))
                })?;
                if (norm - 1.0).abs() > NORM_WARNING {
                    let msg = format!(
                        "clip '{}' frame {i}, joint {j}: quaternion norm {norm} renormalized",
                        self.name
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
                rotations.push(unit);
            }
            if frame.root_translation.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!(
                    "frame {i}: root translation is not finite"
                )));
            }
            frames.push(PoseSkeleton::new(
                Vector3::from(frame.root_translation),
                rotations,
            ));
        }
        let clip = MotionClip::new(self.name, self.fps, frames, topology.fingerprint())
            .map_err(|e| Error::Schema(e.to_string()))?;
        Ok(LoadedClip {
            clip,
            topology,
            warnings,
        })
    }
}

pub fn clip_from_str(text: &str, source_name: &str) -> Result<LoadedClip> {
    parse_json::<ClipDocument>(text, source_name)?.into_clip()
}

pub fn clip_to_string(clip: &MotionClip, topology: &SkeletonTopology) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ClipDocument::from_clip(
        clip, topology,
    )?)?)
}

pub fn read_clip(path: &Path) -> Result<LoadedClip> {
    clip_from_str(&read_text(path)?, &path.display().to_string())
}

pub fn write_clip(path: &Path, clip: &MotionClip, topology: &SkeletonTopology) -> Result<()> {
    write_text(path, &clip_to_string(clip, topology)?)
}

pub fn read_topology(path: &Path) -> Result<SkeletonTopology> {
    parse_json::<TopologyDocument>(&read_text(path)?, &path.display().to_string())?.to_topology()
}

pub fn write_topology(path: &Path, topology: &SkeletonTopology) -> Result<()> {
    let doc = TopologyDocument::from_topology(topology);
    write_text(path, &serde_json::to_string_pretty(&doc)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{humanoid, walk_references};

    fn tiny_doc(rotation: &str) -> String {
        format!(
            r#"{{"name":"t","fps":30.0,"joints":["a","b"],"parents":[-1,0],
            "offsets":[[0,0,0],[0,1,0]],
            "frames":[{{"root_translation":[0,0,0],"rotations":[[1,0,0,0],[1,0,0,0]]}},
                      {{"root_translation":[0,0,0],"rotations":[[1,0,0,0],{rotation}]}}]}}"#
        )
    }

    #[test]
    fn round_trip_is_exact() {
        let clip = walk_references(1, 6, 30.0, 3).remove(0);
        let text = clip_to_string(&clip, &humanoid()).unwrap();
        let loaded = clip_from_str(&text, "mem").unwrap();
        assert_eq!(loaded.clip, clip);
        assert_eq!(loaded.topology, humanoid());
        assert!(loaded.warnings.is_empty());
        assert_eq!(
            clip_to_string(&loaded.clip, &loaded.topology).unwrap(),
            text
        );
    }

    #[test]
    fn three_component_rotation_names_the_frame() {
        let err = clip_from_str(&tiny_doc("[1,0,0]"), "mem").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Schema(_)));
        assert!(msg.contains("frame 1"), "{msg}");
    }

    #[test]
    fn slightly_off_norm_is_renormalized_with_warning() {
        let loaded = clip_from_str(&tiny_doc("[0.998,0,0.0,0.0]"), "mem").unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert_eq!(loaded.clip.frames[1].rotations[1], UnitQuat::IDENTITY);
        let quiet = clip_from_str(&tiny_doc("[0.9995,0,0,0]"), "mem").unwrap();
        assert!(quiet.warnings.is_empty());
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = clip_from_str("{\n  \"name\": \"x\",\n  \"fps\": ,\n}", "bad.json").unwrap_err();
        match err {
            Error::Parse {
                line, source_name, ..
            } => {
                assert_eq!(line, 3);
                assert_eq!(source_name, "bad.json");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_lengths_are_schema_errors() {
        let text = r#"{"name":"t","fps":30,"joints":["a","b"],"parents":[-1],
            "offsets":[[0,0,0],[0,1,0]],"frames":[]}"#;
        assert!(matches!(clip_from_str(text, "mem"), Err(Error::Schema(_))));
        let zero = clip_from_str(&tiny_doc("[0,0,0,0]"), "mem").unwrap_err();
        assert!(matches!(zero, Error::Schema(_)));
    }
}
