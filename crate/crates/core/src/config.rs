//! Experiment configuration (TOML).

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{
    calibrate_fusion_overlap, calibrate_synthesizer_overlap, AnalyzerKind, Apparatus, DetectorModel, ExperimentError, MeasurementSetting,
};
use crate::sources::PdcSource;
use crate::topology::{FusionTopology, TopologyShape};

/// One offending key and what is wrong with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigIssue>),
    #[error(transparent)]
    Build(#[from] ExperimentError),
}

impl ConfigError {
    /// Offending keys, for validation errors.
    pub fn keys(&self) -> Vec<&str> {
        match self {
            ConfigError::Invalid(issues) => issues.iter().map(|i| i.key.as_str()).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesConfig {
    #[serde(default = "default_count")]
    pub count: usize,
    pub pair_probability: f64,
    /// Direct synthesizer path overlap; exclusive with `synthesizer_visibility`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesizer_overlap: Option<f64>,
    /// Target two-photon |±⟩ visibility of each synthesizer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesizer_visibility: Option<f64>,
    /// Direct per-source fusion overlap; exclusive with `fusion_visibility`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion_overlap: Option<f64>,
    /// Target dip visibility when two sources are fused.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion_visibility: Option<f64>,
    #[serde(default)]
    pub eo_overlap: f64,
    /// Bound on the total pair number over all sources.
    #[serde(default = "default_truncation")]
    pub truncation_pairs: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_pairs_per_source: Option<u32>,
}

fn default_count() -> usize {
    4
}

fn default_truncation() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub shape: TopologyShape,
    /// Only for `shape = "custom"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            shape: TopologyShape::Star,
            edges: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyzerConfig {
    #[default]
    Abstract,
    Waveplates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    pub efficiency: f64,
    pub repetition_rate_hz: f64,
    #[serde(default)]
    pub dark_count_probability: f64,
    #[serde(default)]
    pub analyzers: AnalyzerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingRun {
    pub label: String,
    pub duration_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub exact: bool,
    #[serde(default = "default_settings")]
    pub settings: Vec<SettingRun>,
}

fn default_seed() -> u64 {
    1
}

/// H/V for 40 h, k = 0 for 25 h and the other seven phase settings for 15 h each.
fn default_settings() -> Vec<SettingRun> {
    let mut v = vec![
        SettingRun {
            label: "HV".into(),
            duration_hours: 40.0,
        },
        SettingRun {
            label: "k0".into(),
            duration_hours: 25.0,
        },
    ];
    v.extend((1..8).map(|k| SettingRun {
        label: format!("k{k}"),
        duration_hours: 15.0,
    }));
    v
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            exact: false,
            settings: default_settings(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sources: SourcesConfig,
    #[serde(default)]
    pub topology: TopologyConfig,
    pub detection: DetectionConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Four sources with the measured pair probability, visibilities, efficiency
    /// and repetition rate.
    pub fn measured() -> Self {
        Self {
            sources: SourcesConfig {
                count: 4,
                pair_probability: 0.058,
                synthesizer_overlap: None,
                synthesizer_visibility: Some(0.94),
                fusion_overlap: None,
                fusion_visibility: Some(0.76),
                eo_overlap: 0.0,
                truncation_pairs: 5,
                max_pairs_per_source: None,
            },
            topology: TopologyConfig::default(),
            detection: DetectionConfig {
                efficiency: 0.265,
                repetition_rate_hz: 76e6,
                dark_count_probability: 0.0,
                analyzers: AnalyzerConfig::Abstract,
            },
            run: RunConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Perfect overlaps and detectors, at most one pair per source.
    pub fn ideal(count: usize) -> Self {
        let mut c = Self::measured();
        c.sources = SourcesConfig {
            count,
            pair_probability: 0.058,
            synthesizer_overlap: Some(1.0),
            synthesizer_visibility: None,
            fusion_overlap: Some(1.0),
            fusion_visibility: None,
            eo_overlap: 0.0,
            truncation_pairs: count as u32,
            max_pairs_per_source: Some(1),
        };
        c.detection.efficiency = 1.0;
        c.run.settings = MeasurementSetting::standard(2 * count)
            .into_iter()
            .map(|s| SettingRun {
                label: s.label(),
                duration_hours: 40.0,
            })
            .collect();
        c
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    pub fn n_arms(&self) -> usize {
        2 * self.sources.count
    }

    /// Check every range and cross-field rule; all problems are reported together.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut bad = |key: &str, message: String| {
            issues.push(ConfigIssue {
                key: key.to_string(),
                message,
            })
        };
        let unit = |x: f64| (0.0..=1.0).contains(&x);

        let s = &self.sources;
        if s.count == 0 || 2 * s.count > crate::experiment::MAX_ARMS {
            bad("sources.count", format!("{} is outside 1..={}", s.count, crate::experiment::MAX_ARMS / 2));
        }
        if !unit(s.pair_probability) {
            bad("sources.pair_probability", format!("{} is outside [0, 1]", s.pair_probability));
        }
        for (key, v) in [
            ("sources.synthesizer_overlap", s.synthesizer_overlap),
            ("sources.synthesizer_visibility", s.synthesizer_visibility),
            ("sources.fusion_overlap", s.fusion_overlap),
            ("sources.fusion_visibility", s.fusion_visibility),
            ("sources.eo_overlap", Some(s.eo_overlap)),
        ] {
            if let Some(v) = v {
                if !unit(v) {
                    bad(key, format!("{v} is outside [0, 1]"));
                }
            }
        }
        if s.synthesizer_overlap.is_some() && s.synthesizer_visibility.is_some() {
            bad("sources.synthesizer_visibility", "give either synthesizer_overlap or synthesizer_visibility".into());
        }
        if s.fusion_overlap.is_some() && s.fusion_visibility.is_some() {
            bad("sources.fusion_visibility", "give either fusion_overlap or fusion_visibility".into());
        }
        if s.truncation_pairs == 0 {
            bad("sources.truncation_pairs", "must be at least 1".into());
        }
        if s.max_pairs_per_source == Some(0) {
            bad("sources.max_pairs_per_source", "must be at least 1".into());
        }

        match (&self.topology.shape, &self.topology.edges) {
            (TopologyShape::Custom, None) => bad("topology.edges", "required for shape = \"custom\"".into()),
            (TopologyShape::Star | TopologyShape::Chain, Some(_)) => bad("topology.edges", "only allowed for shape = \"custom\"".into()),
            _ => {}
        }
        if s.count > 0 {
            if let Err(e) = self.topology() {
                bad("topology", e.to_string());
            }
        }

        let d = &self.detection;
        if !unit(d.efficiency) {
            bad("detection.efficiency", format!("{} is outside [0, 1]", d.efficiency));
        }
        if !unit(d.dark_count_probability) {
            bad("detection.dark_count_probability", format!("{} is outside [0, 1]", d.dark_count_probability));
        }
        if !(d.repetition_rate_hz >= 0.0 && d.repetition_rate_hz.is_finite()) {
            bad("detection.repetition_rate_hz", format!("{} is not a non-negative rate", d.repetition_rate_hz));
        }

        let mut seen = BTreeSet::new();
        for (i, run) in self.run.settings.iter().enumerate() {
            let key = format!("run.settings[{i}]");
            match run.label.parse::<MeasurementSetting>() {
                Ok(setting) => {
                    if setting.angles(self.n_arms()).is_err() || matches!(setting, MeasurementSetting::Phase { k } if k as usize >= self.n_arms()) {
                        bad(&format!("{key}.label"), format!("'{}' does not fit {} arms", run.label, self.n_arms()));
                    }
                    if !seen.insert(setting.label()) {
                        bad(&format!("{key}.label"), format!("'{}' listed twice", run.label));
                    }
                }
                Err(_) => bad(&format!("{key}.label"), format!("unknown setting '{}'", run.label)),
            }
            if !(run.duration_hours > 0.0 && run.duration_hours.is_finite()) {
                bad(&format!("{key}.duration_hours"), format!("{} is not a positive duration", run.duration_hours));
            }
        }
        if self.run.settings.is_empty() {
            bad("run.settings", "at least one setting is required".into());
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    pub fn topology(&self) -> Result<FusionTopology, crate::topology::TopologyError> {
        let edges = self.topology.edges.as_ref().map(|e| e.iter().map(|[a, b]| (*a, *b)).collect());
        FusionTopology::from_shape(self.topology.shape, self.sources.count, edges)
    }

    /// Settings in listed order with durations in seconds.
    pub fn settings(&self) -> Vec<(MeasurementSetting, f64)> {
        self.run
            .settings
            .iter()
            .map(|r| (r.label.parse().expect("validated"), r.duration_hours * 3600.0))
            .collect()
    }

    pub fn detector(&self) -> Result<DetectorModel, ExperimentError> {
        DetectorModel::new(self.detection.efficiency, self.detection.dark_count_probability)
    }

    /// Build the apparatus, calibrating overlaps from visibilities where those are given.
    pub fn build_apparatus(&self) -> Result<Apparatus, ConfigError> {
        self.validate()?;
        let s = &self.sources;
        let total = s.truncation_pairs;
        let per_source = s.max_pairs_per_source.unwrap_or(total).min(total);
        let detector = self.detector()?;
        let base = PdcSource::new(1, "1", "2", s.pair_probability)
            .and_then(|b| b.with_eo_overlap(s.eo_overlap))
            .and_then(|b| b.with_truncation_pairs(per_source))
            .map_err(ExperimentError::from)?;
        let synth = match (s.synthesizer_overlap, s.synthesizer_visibility) {
            (Some(o), _) => o,
            (None, Some(v)) => calibrate_synthesizer_overlap(&base, &detector, total, v)?,
            (None, None) => 1.0,
        };
        let fusion = match (s.fusion_overlap, s.fusion_visibility) {
            (Some(o), _) => o,
            (None, Some(v)) => calibrate_fusion_overlap(&base, &detector, total, v)?,
            (None, None) => 1.0,
        };
        let template = base
            .with_synthesizer_overlap(synth)
            .and_then(|b| b.with_fusion_overlap(fusion))
            .map_err(ExperimentError::from)?;
        let topology = self.topology().map_err(ExperimentError::from)?;
        let analyzers = match self.detection.analyzers {
            AnalyzerConfig::Abstract => AnalyzerKind::Abstract,
            AnalyzerConfig::Waveplates => AnalyzerKind::Waveplates,
        };
        Ok(Apparatus::new(
            Apparatus::place_sources(&template, s.count),
            topology,
            detector,
            self.detection.repetition_rate_hz,
            total,
        )?
        .with_analyzers(analyzers))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measured_config_round_trips() {
        let c = ExperimentConfig::measured();
        let text = c.to_toml_string();
        assert_eq!(ExperimentConfig::from_toml_str(&text, "mem").unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = ExperimentConfig::measured().to_toml_string();
        text = text.replace("[detection]\n", "[detection]\nefficency = 0.3\n");
        let err = ExperimentConfig::from_toml_str(&text, "mem").unwrap_err();
        assert!(err.to_string().contains("efficency"), "{err}");
    }

    #[test]
    fn validation_lists_every_offending_key() {
        let mut c = ExperimentConfig::measured();
        c.sources.pair_probability = 1.5;
        c.detection.efficiency = -0.1;
        c.sources.synthesizer_overlap = Some(0.9);
        c.run.settings[3].label = "k9".into();
        let err = c.validate().unwrap_err();
        assert_eq!(
            err.keys(),
            vec![
                "sources.pair_probability",
                "sources.synthesizer_visibility",
                "detection.efficiency",
                "run.settings[3].label"
            ]
        );
    }

    #[test]
    fn custom_topology_needs_edges() {
        let mut c = ExperimentConfig::ideal(2);
        c.topology.shape = TopologyShape::Custom;
        assert_eq!(c.validate().unwrap_err().keys(), vec!["topology.edges"]);
        c.topology.edges = Some(vec![[1, 4]]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn two_source_build() {
        let app = ExperimentConfig::ideal(2).build_apparatus().unwrap();
        assert_eq!(app.n_arms(), 4);
        assert_eq!(app.topology().edges(), &[(1, 4)]);
    }
}
