//! File formats: the JSONL dataset, box-mask JSON and the model file.
//!
//! A dataset file starts with a header line holding the domain
//! (`{"dim": d, "lower": [...], "upper": [...], "ordered_axis": null}`),
//! followed by one `{"points": [[...], ...]}` record per line in raw
//! coordinates. Floats are written in shortest round-trip form, so saving and
//! loading reproduces every coordinate bitwise.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::denoiser::{DenoiserConfig, NeuralDenoiser};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::pointset::{AxisBox, Domain, Mask, PointSet};
use crate::schedule::DiffusionSchedule;

/// Schema tag of the model file.
pub const MODEL_SCHEMA: &str = "point-set-diffusion/model/v1";

fn json_error(line: usize, e: serde_json::Error) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// A list of point sets on one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub domain: Arc<Domain>,
    pub sets: Vec<PointSet>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    points: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    points: Vec<&'a [f64]>,
}

impl Dataset {
    pub fn new(domain: Arc<Domain>, sets: Vec<PointSet>) -> Result<Self> {
        if let Some(bad) = sets.iter().position(|s| **s.domain() != *domain) {
            return Err(Error::DomainMismatch(format!(
                "set {bad} lives on another domain"
            )));
        }
        Ok(Dataset { domain, sets })
    }

    /// Parse the JSONL text; errors carry 1-based line numbers.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing domain header".into(),
        })?;
        let domain: Domain = serde_json::from_str(header).map_err(|e| json_error(hline + 1, e))?;
        let domain = Arc::new(domain);
        let mut sets = Vec::new();
        for (i, raw) in lines {
            let line = i + 1;
            let rec: Record = serde_json::from_str(raw).map_err(|e| json_error(line, e))?;
            let set = PointSet::new(domain.clone(), &rec.points).map_err(|e| Error::Parse {
                line,
                message: match e {
                    Error::OutOfDomain { index, coords } => {
                        format!("point {index} at {coords:?} lies outside the domain")
                    }
                    other => other.to_string(),
                },
            })?;
            sets.push(set);
        }
        Ok(Dataset { domain, sets })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&*self.domain).expect("domain serializes");
        out.push('\n');
        for s in &self.sets {
            let rec = RecordOut {
                points: s.iter().collect(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("finite coordinates serialize"));
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    /// The same sets mapped onto the canonical [-1, 1]^d box.
    pub fn normalized(&self) -> Result<Dataset> {
        let target = Arc::new(self.domain.to_canonical_domain());
        let sets = self
            .sets
            .iter()
            .map(|s| s.normalized(&target))
            .collect::<Result<_>>()?;
        Ok(Dataset {
            domain: target,
            sets,
        })
    }

    pub fn mean_cardinality(&self) -> f64 {
        if self.sets.is_empty() {
            return 0.0;
        }
        self.sets.iter().map(PointSet::len).sum::<usize>() as f64 / self.sets.len() as f64
    }

    pub fn max_cardinality(&self) -> usize {
        self.sets.iter().map(PointSet::len).max().unwrap_or(0)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// Parse a mask given as a JSON list of boxes `{"lower": [...], "upper": [...]}`
/// for a `dim`-dimensional domain.
pub fn parse_mask(text: &str, dim: usize) -> Result<Mask> {
    let boxes: Vec<BoxRepr> = serde_json::from_str(text).map_err(|e| json_error(e.line(), e))?;
    let boxes = boxes
        .into_iter()
        .map(|b| AxisBox::new(b.lower, b.upper))
        .collect::<Result<Vec<_>>>()?;
    let mask = Mask::from_boxes(boxes);
    mask.check_dim(dim)?;
    Ok(mask)
}

/// Serialize the boxes of a box mask.
pub fn mask_to_json(boxes: &[AxisBox]) -> String {
    serde_json::to_string(boxes).expect("boxes serialize")
}

/// Everything needed to sample from a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: String,
    /// Raw-coordinate domain; the network works on its canonical box.
    pub domain: Domain,
    pub schedule: DiffusionSchedule,
    pub config: DenoiserConfig,
    pub params: Checkpoint,
}

impl ModelFile {
    pub fn new(
        model: &NeuralDenoiser,
        raw_domain: &Domain,
        schedule: &DiffusionSchedule,
    ) -> Result<Self> {
        if raw_domain.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: raw_domain.dim(),
            });
        }
        if schedule.steps() != model.steps() {
            return Err(Error::InvalidArgument(format!(
                "model built for {} steps, schedule has {}",
                model.steps(),
                schedule.steps()
            )));
        }
        Ok(ModelFile {
            schema: MODEL_SCHEMA.into(),
            domain: raw_domain.clone(),
            schedule: schedule.clone(),
            config: model.config().clone(),
            params: model.store.to_checkpoint(),
        })
    }

    /// Parse and fully validate, including rebuilding the network.
    pub fn parse(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| json_error(e.line(), e))?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::InvalidArgument(format!(
                "unsupported model schema {:?}",
                file.schema
            )));
        }
        file.params.validate()?;
        file.model()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model file serializes")
    }

    pub fn model(&self) -> Result<NeuralDenoiser> {
        NeuralDenoiser::from_checkpoint(
            self.config.clone(),
            self.domain.dim(),
            self.domain.ordered_axis(),
            self.schedule.steps(),
            &self.params,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}
