//! Matrix documents, run configuration and the generation manifest.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{parse_json, read_text, write_text};
use crate::align::{AlignmentResult, TransportPlan};
use crate::assignment::AssignmentMatrix;
use crate::error::{Error, Result};
use crate::pipeline::{ClipProvenance, GeneratedSet, GenerationConfig};

pub const PLAN_KIND: &str = "transport_plan";
pub const ASSIGNMENT_KIND: &str = "assignment";

/// Dense matrix stored row-major with its dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDocument<T> {
    pub kind: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_marginal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_marginal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_error: Option<f64>,
}

impl<T: Clone + nalgebra::Scalar> MatrixDocument<T> {
    fn new(kind: &str, m: &DMatrix<T>) -> Self {
        MatrixDocument {
            kind: kind.to_string(),
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().iter().cloned().collect(),
            row_marginal: None,
            col_marginal: None,
            distance: None,
            marginal_error: None,
        }
    }

    fn matrix(&self, kind: &str) -> Result<DMatrix<T>> {
        if self.kind != kind {
            return Err(Error::Schema(format!(
                "expected a '{kind}' document, found '{}'",
                self.kind
            )));
        }
        if self.rows * self.cols != self.data.len() {
            return Err(Error::Schema(format!(
                "{}x{} matrix needs {} entries, found {}",
                self.rows,
                self.cols,
                self.rows * self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

pub fn plan_document(
    plan: &TransportPlan,
    alignment: Option<&AlignmentResult>,
) -> MatrixDocument<f64> {
    let mut doc = MatrixDocument::new(PLAN_KIND, &plan.matrix);
    doc.row_marginal = Some(plan.row_marginal.iter().copied().collect());
    doc.col_marginal = Some(plan.col_marginal.iter().copied().collect());
    if let Some(a) = alignment {
        doc.distance = Some(a.distance);
        doc.marginal_error = Some(a.marginal_error);
    }
    doc
}

pub fn plan_from_document(doc: &MatrixDocument<f64>) -> Result<TransportPlan> {
    let matrix = doc.matrix(PLAN_KIND)?;
    let mut plan = TransportPlan::from_matrix(matrix);
    let marginal =
        |v: &Option<Vec<f64>>, len: usize, which: &str| -> Result<Option<DVector<f64>>> {
            match v {
                None => Ok(None),
                Some(v) if v.len() == len => Ok(Some(DVector::from_vec(v.clone()))),
                Some(v) => Err(Error::Schema(format!(
                    "{which} marginal has {} entries, expected {len}",
                    v.len()
                ))),
            }
        };
    if let Some(r) = marginal(&doc.row_marginal, doc.rows, "row")? {
        plan.row_marginal = r;
    }
    if let Some(c) = marginal(&doc.col_marginal, doc.cols, "column")? {
        plan.col_marginal = c;
    }
    Ok(plan)
}

pub fn assignment_document(a: &AssignmentMatrix) -> MatrixDocument<u8> {
    MatrixDocument::new(ASSIGNMENT_KIND, &a.matrix)
}

pub fn assignment_from_document(doc: &MatrixDocument<u8>) -> Result<AssignmentMatrix> {
    let m = doc.matrix(ASSIGNMENT_KIND)?;
    let mut chosen = Vec::with_capacity(m.ncols());
    for col in 0..m.ncols() {
        let ones: Vec<usize> = (0..m.nrows()).filter(|&r| m[(r, col)] != 0).collect();
        if ones.len() != 1 || m[(ones[0], col)] != 1 {
            return Err(Error::Schema(format!(
                "assignment column {col} must contain exactly one 1"
            )));
        }
        chosen.push(ones[0]);
    }
    Ok(AssignmentMatrix::from_sources(m.nrows(), &chosen))
}

pub fn write_plan(
    path: &Path,
    plan: &TransportPlan,
    alignment: Option<&AlignmentResult>,
) -> Result<()> {
    write_text(
        path,
        &serde_json::to_string_pretty(&plan_document(plan, alignment))?,
    )
}

pub fn read_plan(path: &Path) -> Result<TransportPlan> {
    let doc = parse_json(&read_text(path)?, &path.display().to_string())?;
    plan_from_document(&doc)
}

pub fn write_assignment(path: &Path, a: &AssignmentMatrix) -> Result<()> {
    write_text(
        path,
        &serde_json::to_string_pretty(&assignment_document(a))?,
    )
}

pub fn read_assignment(path: &Path) -> Result<AssignmentMatrix> {
    let doc = parse_json(&read_text(path)?, &path.display().to_string())?;
    assignment_from_document(&doc)
}

/// Generation settings plus input and output locations.
///
/// Relative paths are resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub reference_dir: PathBuf,
    pub target: PathBuf,
    /// Topology document overriding the skeleton embedded in the clips.
    #[serde(default)]
    pub topology: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub generation: GenerationConfig,
}

impl RunConfig {
    pub fn from_str(text: &str, source_name: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = parse_json(text, source_name)?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.reference_dir);
        resolve(&mut cfg.target);
        resolve(&mut cfg.output_dir);
        if let Some(t) = cfg.topology.as_mut() {
            resolve(t);
        }
        cfg.generation.validate()?;
        if !cfg.reference_dir.is_dir() {
            return Err(Error::InvalidConfig(format!(
                "reference_dir {} is not a directory",
                cfg.reference_dir.display()
            )));
        }
        for p in std::iter::once(&cfg.target).chain(cfg.topology.as_ref()) {
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!(
                    "{} does not exist",
                    p.display()
                )));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str(&read_text(path)?, &path.display().to_string(), base)
    }
}

/// Reproducibility record written next to generated clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub target: String,
    pub config: GenerationConfig,
    pub clip_count: usize,
    pub flagged_frames: usize,
    pub clips: Vec<ClipProvenance>,
}

impl Manifest {
    pub fn new(target: &str, config: &GenerationConfig, set: &GeneratedSet) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            target: target.to_string(),
            config: config.clone(),
            clip_count: set.clips.len(),
            flagged_frames: set.flagged_frame_count(),
            clips: set.provenance.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_document_is_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.0, 0.0, 0.3, 0.4]);
        let doc = plan_document(&TransportPlan::from_matrix(m.clone()), None);
        assert_eq!(doc.data, vec![0.1, 0.2, 0.0, 0.0, 0.3, 0.4]);
        assert_eq!((doc.rows, doc.cols), (2, 3));
        let text = serde_json::to_string(&doc).unwrap();
        let back: MatrixDocument<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(plan_from_document(&back).unwrap().matrix, m);
    }

    #[test]
    fn assignment_round_trip_and_validation() {
        let a = AssignmentMatrix::from_sources(3, &[2, 0, 0, 1]);
        let doc = assignment_document(&a);
        assert_eq!(assignment_from_document(&doc).unwrap(), a);

        let mut bad = doc.clone();
        bad.data[0] = 1;
        assert!(assignment_from_document(&bad).is_err());
        let mut wrong_kind = doc;
        wrong_kind.kind = PLAN_KIND.into();
        assert!(assignment_from_document(&wrong_kind).is_err());
    }

    #[test]
    fn matrix_size_mismatch_is_schema_error() {
        let text = r#"{"kind":"transport_plan","rows":2,"cols":2,"data":[1,2,3]}"#;
        let doc: MatrixDocument<f64> = serde_json::from_str(text).unwrap();
        assert!(matches!(plan_from_document(&doc), Err(Error::Schema(_))));
    }

    #[test]
    fn run_config_defaults_and_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("refs")).unwrap();
        std::fs::write(dir.path().join("target.json"), "{}").unwrap();
        let text = r#"{"reference_dir":"refs","target":"target.json","output_dir":"out"}"#;
        let cfg = RunConfig::from_str(text, "run.json", dir.path()).unwrap();
        assert_eq!(cfg.generation, GenerationConfig::default());
        assert_eq!(cfg.output_dir, dir.path().join("out"));

        let missing = r#"{"reference_dir":"nope","target":"target.json","output_dir":"out"}"#;
        assert!(RunConfig::from_str(missing, "run.json", dir.path()).is_err());
        let bad_tau = r#"{"reference_dir":"refs","target":"target.json","output_dir":"out",
            "generation":{"samples_per_clip":2,"tau_schedule":[0.5]}}"#;
        assert!(RunConfig::from_str(bad_tau, "run.json", dir.path()).is_err());
    }
}
