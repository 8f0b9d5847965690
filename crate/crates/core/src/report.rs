//! Versioned JSON reports.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::pipeline::{Analysis, SimulationLog, StageTiming};
use crate::planner::{is_flat_with, select_grasp, FlattenPlan, GraspCandidate};
use crate::surface_class::ShapeType;
use crate::wrinkles::{DetectionStats, QuinticCurve, Wrinkle};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub width: usize,
    pub height: usize,
    pub pitch: f64,
    pub valid_pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub smoothed: bool,
    pub fit_rmse_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferentialSummary {
    pub sigma_px: f64,
    pub valid_pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSummary {
    pub type_counts: BTreeMap<String, usize>,
    pub ridge_points: usize,
    pub contour_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummaries {
    pub preprocess: PreprocessSummary,
    pub differential: DifferentialSummary,
    pub surface_class: SurfaceSummary,
    pub wrinkles: DetectionStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WrinkleReport {
    pub rank: usize,
    /// `[x, y]` pixel coordinates.
    pub points: Vec<[usize; 2]>,
    pub curve: QuinticCurve,
    pub width_m: f64,
    pub height_m: f64,
    pub volume_m3: f64,
    pub score: f64,
    pub principal_dir: [f64; 2],
    pub direction_deg: f64,
    pub triplet_count: usize,
    pub mean_slack_m: f64,
    pub quantified: bool,
    pub warning: Option<String>,
}

impl WrinkleReport {
    pub fn new(rank: usize, w: &Wrinkle) -> Self {
        Self {
            rank,
            points: w.points.iter().map(|p| [p.x, p.y]).collect(),
            curve: w.curve.clone(),
            width_m: w.width_m,
            height_m: w.height_m,
            volume_m3: w.volume_m3,
            score: w.score,
            principal_dir: w.principal_dir,
            direction_deg: w.direction_deg(),
            triplet_count: w.triplets.len(),
            mean_slack_m: w.mean_slack(),
            quantified: w.quantified,
            warning: w.warning.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub input: InputSummary,
    pub stages: StageSummaries,
    pub wrinkles: Vec<WrinkleReport>,
    pub triplet_count: usize,
    pub warnings: Vec<String>,
    pub is_flat: bool,
    pub grasp: Option<GraspCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<Vec<StageTiming>>,
}

impl AnalysisReport {
    pub fn new(a: &Analysis, aperture_m: f64, flat_slack_m: f64, timing: bool) -> Result<Self> {
        let mut type_counts = BTreeMap::new();
        for t in ShapeType::ALL {
            type_counts.insert(t.name().to_string(), 0);
        }
        for t in a.types.data() {
            *type_counts.entry(t.name().to_string()).or_insert(0) += 1;
        }
        let ws = &a.detection.wrinkles;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            input: InputSummary {
                width: a.height.width(),
                height: a.height.height(),
                pitch: a.height.pitch(),
                valid_pixels: a.height.valid().count(),
            },
            stages: StageSummaries {
                preprocess: PreprocessSummary {
                    smoothed: a.fit.is_some(),
                    fit_rmse_m: a.fit.map(|f| f.rmse),
                },
                differential: DifferentialSummary {
                    sigma_px: a.sigma,
                    valid_pixels: a.curvatures.valid().count(),
                },
                surface_class: SurfaceSummary {
                    type_counts,
                    ridge_points: a.topology.ridge_points.count(),
                    contour_points: a.topology.contours.count(),
                },
                wrinkles: a.detection.stats.clone(),
            },
            wrinkles: ws.iter().enumerate().map(|(i, w)| WrinkleReport::new(i + 1, w)).collect(),
            triplet_count: ws.iter().map(|w| w.triplets.len()).sum(),
            warnings: a.detection.warnings.clone(),
            is_flat: is_flat_with(ws, flat_slack_m),
            grasp: select_grasp(ws, aperture_m)?,
            timing_ms: timing.then(|| a.timings.clone()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub schema_version: u32,
    pub wrinkle_count: usize,
    pub is_flat: bool,
    pub plan: Option<FlattenPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<Vec<StageTiming>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    #[serde(flatten)]
    pub log: SimulationLog,
}

pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{analyze, AnalysisConfig};
    use crate::synth::{generate, SceneSpec};

    fn report(spec: &SceneSpec) -> AnalysisReport {
        let (h, mask, _) = generate(spec).unwrap();
        let a = analyze(&h, &mask, &AnalysisConfig::default()).unwrap();
        AnalysisReport::new(&a, 0.05, 0.005, false).unwrap()
    }

    #[test]
    fn report_round_trips() {
        let r = report(&SceneSpec::crossing(0.0, 90.0));
        assert_eq!(r.wrinkles.len(), 2);
        let json = to_json(&r).unwrap();
        assert!(json.contains("\"schema_version\": 1"));
        assert!(!json.contains("timing_ms"));
        let back: AnalysisReport = from_json(&json).unwrap();
        assert_eq!(back, r);
        assert_eq!(to_json(&back).unwrap(), json);
    }

    #[test]
    fn flat_scene_report() {
        let r = report(&SceneSpec::plane(64, 64));
        assert!(r.wrinkles.is_empty());
        assert!(r.is_flat);
        assert!(r.grasp.is_none());
        assert_eq!(r.stages.surface_class.type_counts["flat"], r.stages.differential.valid_pixels);
    }
}
