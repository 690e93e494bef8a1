//! Threshold tables and sentence templates for the rule-based describer.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HoiError, Result};

const DEFAULT_GRAMMAR: &str = include_str!("../../assets/grammar_v1.json");

/// Maps a scalar to a phrase: `phrases[i]` for the first edge the value is below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucketed {
    pub edges: Vec<f64>,
    pub phrases: Vec<String>,
}

impl Bucketed {
    pub fn index(&self, value: f64) -> usize {
        self.edges
            .iter()
            .position(|e| value < *e)
            .unwrap_or(self.edges.len())
    }

    pub fn phrase(&self, value: f64) -> &str {
        &self.phrases[self.index(value)]
    }
}

/// Idle threshold plus the slightly/moderately/greatly edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaBuckets {
    pub idle: f64,
    pub edges: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrammarConfig {
    pub version: u32,
    pub contact_m: f64,
    pub near_m: f64,
    pub sit_hip_deg: f64,
    pub sit_knee_deg: f64,
    pub angle_delta: DeltaBuckets,
    pub length_delta: DeltaBuckets,
    pub magnitude_words: Vec<String>,
    pub tables: BTreeMap<String, Bucketed>,
    pub phrases: BTreeMap<String, String>,
    pub templates: BTreeMap<String, String>,
    pub verbs: BTreeMap<String, [String; 2]>,
}

const TABLES: &[&str] = &[
    "lean_forward",
    "facing",
    "head_pitch",
    "head_yaw",
    "arm_elevation",
    "arm_direction",
    "elbow",
    "hand_height",
    "hand_forward",
    "wrist",
    "hip_flexion",
    "knee",
    "foot_lift",
    "foot_pitch",
    "object_height",
    "object_distance",
    "object_direction",
    "object_tilt",
];

const PHRASES: &[&str] = &["standing", "sitting", "crouching", "across_body", "on_ground", "torso"];

const TEMPLATES: &[&str] = &[
    "whole_body",
    "head",
    "arm",
    "arm_vertical",
    "hand",
    "leg",
    "foot",
    "object",
    "contact",
    "contact_both",
    "near",
    "far",
    "movement",
    "still",
    "interaction_still",
    "approach",
    "retreat",
    "touch",
    "release",
];

const VERBS: &[&str] = &[
    "lean",
    "turn",
    "head_pitch",
    "arm_elevation",
    "arm_swing",
    "elbow",
    "hand_height",
    "hand_forward",
    "hand_lateral",
    "hip",
    "knee",
    "foot",
    "object_z",
    "object_y",
    "object_x",
    "object_yaw",
    "object_tilt",
];

impl Default for GrammarConfig {
    fn default() -> Self {
        Self::from_json(DEFAULT_GRAMMAR).expect("bundled grammar is valid")
    }
}

impl GrammarConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let g: GrammarConfig = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let missing = |kind: &str, key: &str| {
            Err(HoiError::Config(format!("grammar is missing {kind} {key:?}")))
        };
        for key in TABLES {
            match self.tables.get(*key) {
                None => return missing("table", key),
                Some(t) => {
                    if t.phrases.len() != t.edges.len() + 1 {
                        return Err(HoiError::Config(format!(
                            "table {key:?} needs one more phrase than edges"
                        )));
                    }
                    if t.edges.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(HoiError::Config(format!("table {key:?} edges must ascend")));
                    }
                }
            }
        }
        for key in PHRASES {
            if !self.phrases.contains_key(*key) {
                return missing("phrase", key);
            }
        }
        for key in TEMPLATES {
            if !self.templates.contains_key(*key) {
                return missing("template", key);
            }
        }
        for key in VERBS {
            if !self.verbs.contains_key(*key) {
                return missing("verb pair", key);
            }
        }
        for d in [&self.angle_delta, &self.length_delta] {
            if d.edges.len() + 1 != self.magnitude_words.len() {
                return Err(HoiError::Config(
                    "magnitude words must match the delta buckets".into(),
                ));
            }
            if !(d.idle >= 0.0) || d.edges.first().is_some_and(|e| *e <= d.idle) {
                return Err(HoiError::Config("idle threshold must precede delta edges".into()));
            }
        }
        if !(0.0 < self.contact_m && self.contact_m < self.near_m) {
            return Err(HoiError::Config("need 0 < contact_m < near_m".into()));
        }
        Ok(())
    }

    pub fn table(&self, key: &str) -> &Bucketed {
        &self.tables[key]
    }

    pub fn phrase(&self, key: &str) -> &str {
        &self.phrases[key]
    }

    pub fn verbs(&self, key: &str) -> &[String; 2] {
        &self.verbs[key]
    }

    /// Fills `{name}` placeholders of a named template.
    pub fn fill(&self, template: &str, values: &[(&str, &str)]) -> String {
        let mut out = self.templates[template].clone();
        for (k, v) in values {
            out = out.replace(&format!("{{{k}}}"), v);
        }
        out
    }

    /// Magnitude word for a nonzero delta, or `None` when below the idle threshold.
    pub fn magnitude(&self, delta: f64, angular: bool) -> Option<&str> {
        let b = if angular { &self.angle_delta } else { &self.length_delta };
        let m = delta.abs();
        if m < b.idle {
            return None;
        }
        let i = b.edges.iter().position(|e| m < *e).unwrap_or(b.edges.len());
        Some(&self.magnitude_words[i])
    }

    /// Every word the grammar can emit (templates with placeholders removed).
    pub fn words(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut add = |s: &str| {
            for w in s.split_whitespace() {
                if !(w.starts_with('{') && w.ends_with('}')) {
                    out.insert(w.to_string());
                }
            }
        };
        self.tables.values().flat_map(|t| &t.phrases).for_each(|p| add(p));
        self.phrases.values().for_each(|p| add(p));
        self.templates.values().for_each(|p| add(p));
        self.verbs.values().flatten().for_each(|p| add(p));
        self.magnitude_words.iter().for_each(|p| add(p));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_grammar_loads() {
        let g = GrammarConfig::default();
        assert_eq!(g.table("arm_elevation").phrase(-80.0), "hangs down");
        assert_eq!(g.table("arm_elevation").phrase(0.0), "is raised to shoulder height");
        assert_eq!(g.table("arm_elevation").phrase(-0.1), "is held below shoulder height");
        assert!(g.words().contains("remains"));
    }

    #[test]
    fn magnitude_buckets() {
        let g = GrammarConfig::default();
        assert_eq!(g.magnitude(3.0, true), None);
        assert_eq!(g.magnitude(-10.0, true), Some("slightly"));
        assert_eq!(g.magnitude(30.0, true), Some("moderately"));
        assert_eq!(g.magnitude(45.0, true), Some("greatly"));
        assert_eq!(g.magnitude(0.4, false), Some("moderately"));
    }

    #[test]
    fn missing_table_is_config_error() {
        let mut g = GrammarConfig::default();
        g.tables.remove("knee");
        assert!(matches!(g.validate(), Err(HoiError::Config(_))));
    }

    #[test]
    fn fill_replaces_placeholders() {
        let g = GrammarConfig::default();
        assert_eq!(g.fill("far", &[("noun", "box")]), "the person is far from the box .");
    }
}
