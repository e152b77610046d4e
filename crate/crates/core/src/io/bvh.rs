//! Reader for the rigid-offset Euler subset of BVH.
//!
//! Supported: a root with 3 position and 3 rotation channels (or rotations
//! only), every other joint with exactly 3 rotation channels in any axis
//! order. Angles are degrees. Rotations compose in channel order, so
//! `Zrotation Xrotation Yrotation` gives `R = Rz · Rx · Ry`. End Sites are
//! dropped.

use std::path::Path;

use nalgebra::Vector3;

use super::clip::LoadedClip;
use super::read_text;
use crate::error::{Error, Result};
use crate::kinematics::SkeletonTopology;
use crate::pose::{MotionClip, PoseSkeleton, UnitQuat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    Position(usize),
    Rotation(usize),
}

#[derive(Debug)]
struct JointSpec {
    name: String,
    parent: i64,
    offset: Vector3<f64>,
    channels: Vec<Channel>,
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

struct Lexer<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    source: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str, source: &'a str) -> Self {
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let mut rest = line;
            let mut col = 1;
            while let Some(start) = rest.find(|c: char| !c.is_whitespace()) {
                col += start;
                rest = &rest[start..];
                let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
                tokens.push(Token {
                    text: &rest[..end],
                    line: i + 1,
                    column: col,
                });
                col += end;
                rest = &rest[end..];
            }
        }
        Lexer {
            tokens,
            pos: 0,
            source,
        }
    }

    fn error_here(&self, message: impl Into<String>) -> Error {
        let (line, column) = match self.tokens.get(self.pos).or(self.tokens.last()) {
            Some(t) => (t.line, t.column),
            None => (1, 1),
        };
        Error::Parse {
            source_name: self.source.to_string(),
            line,
            column,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(|t| t.text)
    }

    fn next(&mut self) -> Result<&'a str> {
        let t = self
            .tokens
            .get(self.pos)
            .map(|t| t.text)
            .ok_or_else(|| self.error_here("unexpected end of file"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        let got = self.peek();
        if got.is_some_and(|g| g.eq_ignore_ascii_case(want)) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error_here(format!(
                "expected '{want}', found '{}'",
                got.unwrap_or("EOF")
            )))
        }
    }

    fn number(&mut self) -> Result<f64> {
        let text = self
            .peek()
            .ok_or_else(|| self.error_here("expected a number"))?;
        let v: f64 = text
            .parse()
            .map_err(|_| self.error_here(format!("expected a number, found '{text}'")))?;
        if !v.is_finite() {
            return Err(self.error_here("number is not finite"));
        }
        self.pos += 1;
        Ok(v)
    }

    fn count(&mut self) -> Result<usize> {
        let text = self
            .peek()
            .ok_or_else(|| self.error_here("expected a count"))?;
        let v = text
            .parse()
            .map_err(|_| self.error_here(format!("expected a count, found '{text}'")))?;
        self.pos += 1;
        Ok(v)
    }
}

fn parse_channel(name: &str, joint: &str) -> Result<Channel> {
    let axis = |c: char| match c.to_ascii_lowercase() {
        'x' => Some(0),
        'y' => Some(1),
        'z' => Some(2),
        _ => None,
    };
    let lower = name.to_ascii_lowercase();
    let first = name.chars().next().and_then(axis);
    match (first, &lower[1.min(lower.len())..]) {
        (Some(a), "position") => Ok(Channel::Position(a)),
        (Some(a), "rotation") => Ok(Channel::Rotation(a)),
        _ => Err(Error::UnsupportedFeature {
            joint: joint.to_string(),
            feature: format!("channel '{name}'"),
        }),
    }
}

fn is_axis_permutation(axes: impl Iterator<Item = usize>) -> bool {
    let mut seen = [false; 3];
    let mut n = 0;
    for a in axes {
        if seen[a] {
            return false;
        }
        seen[a] = true;
        n += 1;
    }
    n == 3
}

fn validate_channels(joint: &str, is_root: bool, channels: &[Channel]) -> Result<()> {
    let unsupported = |feature: String| Error::UnsupportedFeature {
        joint: joint.to_string(),
        feature,
    };
    let rotations: Vec<usize> = channels
        .iter()
        .filter_map(|c| match c {
            Channel::Rotation(a) => Some(*a),
            _ => None,
        })
        .collect();
    let positions: Vec<usize> = channels
        .iter()
        .filter_map(|c| match c {
            Channel::Position(a) => Some(*a),
            _ => None,
        })
        .collect();
    if !is_axis_permutation(rotations.iter().copied()) {
        return Err(unsupported(format!(
            "{} channels; exactly one rotation channel per axis is required",
            channels.len()
        )));
    }
    if !positions.is_empty() {
        if !is_root {
            return Err(unsupported("position channels on a non-root joint".into()));
        }
        if !is_axis_permutation(positions.iter().copied()) {
            return Err(unsupported(
                "root position channels must cover x, y and z once".into(),
            ));
        }
    }
    Ok(())
}

fn parse_joint(
    lx: &mut Lexer<'_>,
    name: String,
    parent: i64,
    joints: &mut Vec<JointSpec>,
) -> Result<()> {
    lx.expect("{")?;
    lx.expect("OFFSET")?;
    let offset = Vector3::new(lx.number()?, lx.number()?, lx.number()?);
    lx.expect("CHANNELS")?;
    let n = lx.count()?;
    let mut channels = Vec::with_capacity(n);
    for _ in 0..n {
        channels.push(parse_channel(lx.next()?, &name)?);
    }
    validate_channels(&name, parent < 0, &channels)?;
    let index = joints.len() as i64;
    joints.push(JointSpec {
        name,
        parent,
        offset,
        channels,
    });
    loop {
        match lx.peek() {
            Some(t) if t.eq_ignore_ascii_case("JOINT") => {
                lx.next()?;
                let child = lx.next()?.to_string();
                parse_joint(lx, child, index, joints)?;
            }
            Some(t) if t.eq_ignore_ascii_case("End") => {
                lx.next()?;
                lx.expect("Site")?;
                lx.expect("{")?;
                lx.expect("OFFSET")?;
                for _ in 0..3 {
                    lx.number()?;
                }
                lx.expect("}")?;
            }
            Some("}") => {
                lx.next()?;
                return Ok(());
            }
            other => {
                return Err(lx.error_here(format!(
                    "expected JOINT, End Site or '}}', found '{}'",
                    other.unwrap_or("EOF")
                )))
            }
        }
    }
}

fn axis_vector(a: usize) -> Vector3<f64> {
    let mut v = Vector3::zeros();
    v[a] = 1.0;
    v
}

/// Parses BVH text into a clip named `name`.
pub fn bvh_from_str(text: &str, name: &str, source_name: &str) -> Result<LoadedClip> {
    let mut lx = Lexer::new(text, source_name);
    lx.expect("HIERARCHY")?;
    lx.expect("ROOT")?;
    let root = lx.next()?.to_string();
    let mut joints = Vec::new();
    parse_joint(&mut lx, root, -1, &mut joints)?;
    if lx.peek().is_some_and(|t| t.eq_ignore_ascii_case("ROOT")) {
        return Err(Error::UnsupportedFeature {
            joint: lx.tokens[lx.pos + 1..]
                .first()
                .map_or("", |t| t.text)
                .to_string(),
            feature: "multiple ROOT hierarchies".into(),
        });
    }
    lx.expect("MOTION")?;
    lx.expect("Frames:")?;
    let frame_count = lx.count()?;
    lx.expect("Frame")?;
    lx.expect("Time:")?;
    let frame_time = lx.number()?;
    if !(frame_time > 0.0) {
        return Err(lx.error_here("frame time must be positive"));
    }

    let topology = SkeletonTopology::new(
        joints.iter().map(|j| j.name.clone()).collect(),
        joints.iter().map(|j| j.parent).collect(),
        joints.iter().map(|j| j.offset).collect(),
    )?;
    let mut frames = Vec::with_capacity(frame_count);
    for _ in 0..frame_count {
        let mut root_translation = Vector3::zeros();
        let mut rotations = Vec::with_capacity(joints.len());
        for joint in &joints {
            let mut q = UnitQuat::IDENTITY;
            for ch in &joint.channels {
                let v = lx.number()?;
                match *ch {
                    Channel::Position(a) => root_translation[a] = v,
                    Channel::Rotation(a) => {
                        q = q.mul(&UnitQuat::from_axis_angle(axis_vector(a), v.to_radians()));
                    }
                }
            }
            rotations.push(q);
        }
        frames.push(PoseSkeleton::new(root_translation, rotations));
    }
    if lx.peek().is_some() {
        return Err(lx.error_here(format!(
            "more motion values than {frame_count} frames of channel data"
        )));
    }
    let clip = MotionClip::new(name, 1.0 / frame_time, frames, topology.fingerprint())?;
    Ok(LoadedClip {
        clip,
        topology,
        warnings: Vec::new(),
    })
}

/// Reads a BVH file; the clip is named after the file stem.
pub fn read_bvh(path: &Path) -> Result<LoadedClip> {
    let name = path
        .file_stem()
        .map_or_else(|| "bvh".to_string(), |s| s.to_string_lossy().into_owned());
    bvh_from_str(&read_text(path)?, &name, &path.display().to_string())
}
