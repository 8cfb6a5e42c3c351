//! Run manifests: a resolved description of a command, sufficient to
//! repeat it and reproduce its outputs exactly.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::evaluation::{FitSettings, Method};
use crate::io::{from_json, read_text, IoError};
use crate::relevance::Measure;
use crate::simulation::Design;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Relevance model on case/control expression data.
    Full,
    /// Relevance model on z-scores.
    Z,
    /// Point-mass baseline on z-scores.
    Bdp,
}

impl FitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitMode::Full => "full",
            FitMode::Z => "z",
            FitMode::Bdp => "bdp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    RankHistogram,
    NullDensity,
    SensitivityCurve,
}

/// Evaluation grid and histogram binning for the null-density report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub bins: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            min: -5.0,
            max: 5.0,
            points: 201,
            bins: 50,
        }
    }
}

impl GridSpec {
    pub fn grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.min + i as f64 * step).collect()
    }
}

/// External data replacing a design's synthetic pool or base.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationInputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_labels: Option<PathBuf>,
}

/// A fully resolved command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Invocation {
    Fit {
        mode: FitMode,
        input: PathBuf,
        labels: Option<PathBuf>,
        dump: bool,
        /// Optional selection: genes whose measure exceeds the cutoff.
        select: Option<(Measure, f64)>,
        settings: FitSettings,
    },
    Simulate {
        design: Design,
        seed: u64,
        replicates: u64,
        inputs: SimulationInputs,
    },
    Evaluate {
        designs: Vec<Design>,
        seed: u64,
        inputs: SimulationInputs,
        methods: Vec<Method>,
        measures: Vec<Measure>,
        replicates: usize,
        settings: FitSettings,
    },
    Sensitivity {
        a: Vec<f64>,
        b: f64,
        datasets: usize,
        genes: usize,
        seed: u64,
        settings: FitSettings,
    },
    Report {
        kind: ReportKind,
        summary: Option<PathBuf>,
        dump: Option<PathBuf>,
        z: Option<PathBuf>,
        sensitivity: Option<PathBuf>,
        grid: GridSpec,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Fit { .. } => "fit",
            Invocation::Simulate { .. } => "simulate",
            Invocation::Evaluate { .. } => "evaluate",
            Invocation::Sensitivity { .. } => "sensitivity",
            Invocation::Report { .. } => "report",
        }
    }

    /// Master seed of the run, if it uses randomness.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Invocation::Fit { settings, .. } => Some(settings.chain.seed),
            Invocation::Simulate { seed, .. }
            | Invocation::Evaluate { seed, .. }
            | Invocation::Sensitivity { seed, .. } => Some(*seed),
            Invocation::Report { .. } => None,
        }
    }

    pub fn settings(&self) -> Option<&FitSettings> {
        match self {
            Invocation::Fit { settings, .. }
            | Invocation::Evaluate { settings, .. }
            | Invocation::Sensitivity { settings, .. } => Some(settings),
            _ => None,
        }
    }

    pub fn input_paths(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        match self {
            Invocation::Fit { input, labels, .. } => {
                out.push(input);
                out.extend(labels.as_deref());
            }
            Invocation::Simulate { inputs: i, .. } | Invocation::Evaluate { inputs: i, .. } => {
                out.extend(i.pool.as_deref());
                out.extend(i.base.as_deref());
                out.extend(i.base_labels.as_deref());
            }
            Invocation::Sensitivity { .. } => {}
            Invocation::Report {
                summary,
                dump,
                z,
                sensitivity,
                ..
            } => {
                for p in [summary, dump, z, sensitivity].into_iter().flatten() {
                    out.push(p);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: Option<u64>,
    pub version: String,
    /// Arguments as typed, for reference; replay uses `invocation`.
    pub arguments: Vec<String>,
    pub inputs: Vec<InputRecord>,
    pub invocation: Invocation,
    /// Output files relative to the manifest's directory.
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(invocation: Invocation, arguments: Vec<String>, started_unix: u64) -> Self {
        let inputs = invocation
            .input_paths()
            .into_iter()
            .map(|p| InputRecord {
                path: p.to_path_buf(),
                bytes: std::fs::metadata(p).map(|m| m.len()).unwrap_or(0),
            })
            .collect();
        Self {
            command: invocation.name().to_string(),
            seed: invocation.seed(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            arguments,
            inputs,
            invocation,
            outputs: Vec::new(),
            started_unix,
            finished_unix: started_unix,
        }
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Ok(from_json(&read_text(path)?, &path.display().to_string())?)
    }
}

/// Make relative input paths absolute so a manifest can be replayed from
/// any working directory.
pub fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = GridSpec::default().grid();
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], -5.0);
        assert_eq!(g[200], 5.0);
        assert_eq!(g[100], 0.0);
    }

    #[test]
    fn manifest_round_trip() {
        let inv = Invocation::Sensitivity {
            a: vec![-3.0, 2.0],
            b: 2.0,
            datasets: 10,
            genes: 500,
            seed: 3,
            settings: FitSettings::default(),
        };
        let m = RunManifest::new(inv, vec!["sensitivity".into()], 5);
        let text = crate::io::to_json(&m);
        let back: RunManifest = from_json(&text, "m").unwrap();
        assert_eq!(back, m);
        assert_eq!(back.command, "sensitivity");
        assert_eq!(back.seed, Some(3));
    }
}
