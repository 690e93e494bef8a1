//! CSV rows and JSON sidecars for evaluation runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::PartwiseReport;
use super::text::{RougeVariant, TextScore};
use crate::error::Result;

pub const GEOMETRY_HEADER: [&str; 12] = [
    "Method",
    "Head",
    "Left Arm",
    "Right Arm",
    "Left Hand",
    "Right Hand",
    "Left Leg",
    "Right Leg",
    "Object",
    "Averaged",
    "Samples",
    "Malformed",
];

pub const TEXT_HEADER: [&str; 5] = ["Method", "BLEU-4", "ROUGE", "Samples", "Malformed"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunScore {
    Text(TextScore),
    Geometry(PartwiseReport),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub task: String,
    pub samples: usize,
    pub malformed: usize,
    pub score: RunScore,
}

/// Metric conventions recorded next to every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSidecar {
    pub task: String,
    pub seed: u64,
    pub n_points: usize,
    pub unit: String,
    pub chamfer: String,
    pub rouge: RougeVariant,
    pub bleu_smoothing: String,
    pub config: serde_json::Value,
}

impl ReportSidecar {
    pub fn new(task: &str, seed: u64, n_points: usize, rouge: RougeVariant, config: serde_json::Value) -> Self {
        Self {
            task: task.into(),
            seed,
            n_points,
            unit: "cm".into(),
            chamfer: "mean of the two directed mean nearest-neighbour distances".into(),
            rouge,
            bleu_smoothing: format!("zero precisions replaced by {}/count", super::text::BLEU_EPSILON),
            config,
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

impl RunReport {
    pub fn header(&self) -> Vec<&'static str> {
        match &self.score {
            RunScore::Text(_) => TEXT_HEADER.to_vec(),
            RunScore::Geometry(r) if r.object.is_none() => {
                GEOMETRY_HEADER.iter().copied().filter(|h| *h != "Object").collect()
            }
            RunScore::Geometry(_) => GEOMETRY_HEADER.to_vec(),
        }
    }

    pub fn row(&self) -> Vec<String> {
        let mut row = vec![self.method.clone()];
        match &self.score {
            RunScore::Text(t) => {
                row.push(fmt(t.bleu4));
                row.push(fmt(t.rouge));
            }
            RunScore::Geometry(r) => {
                row.extend(r.parts().iter().map(|v| fmt(*v)));
                row.extend(r.object.map(fmt));
                row.push(fmt(r.averaged));
            }
        }
        row.push(self.samples.to_string());
        row.push(self.malformed.to_string());
        row
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        w.write_record(self.row())?;
        w.flush()?;
        Ok(())
    }
}

pub fn write_sidecar(path: &Path, sidecar: &ReportSidecar) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_header_follows_table_order() {
        let r = RunReport {
            method: "ours".into(),
            task: "generate".into(),
            samples: 3,
            malformed: 0,
            score: RunScore::Geometry(PartwiseReport::from_parts([1.0; 7], Some(1.0))),
        };
        assert_eq!(
            r.header().join(","),
            "Method,Head,Left Arm,Right Arm,Left Hand,Right Hand,Left Leg,Right Leg,Object,Averaged,Samples,Malformed"
        );
        assert_eq!(r.row().len(), r.header().len());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        r.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("Method,Head,Left Arm"));
    }

    #[test]
    fn reconstruction_drops_object_column() {
        let r = RunReport {
            method: "ours".into(),
            task: "reconstruct".into(),
            samples: 1,
            malformed: 0,
            score: RunScore::Geometry(PartwiseReport::from_parts([1.0; 7], None)),
        };
        assert!(!r.header().contains(&"Object"));
        assert_eq!(r.row().len(), r.header().len());
    }
}
