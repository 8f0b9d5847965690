//! End-to-end analysis, planning and the virtual flattening loop.

use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::differential::{curvature_maps, laplacian_field, CurvatureMaps, ScalarField, DEFAULT_LAPLACE_WINDOW, DEFAULT_SIGMA};
use crate::error::{Error, Result};
use crate::grid::{HeightField, PixelMask};
use crate::planner::{is_flat_with, make_flatten_plan, virtual_flatten_step, FlattenPlan};
use crate::preprocess::{smooth_height_field, FitOptions, FitReport};
use crate::surface_class::{
    extract_topology_with, majority_rank_filter, quantize_types, shape_index, ShapeIndexMap, ShapeTypeMap,
    TopologyMasks, TopologyOptions, DEFAULT_RANK_WINDOW,
};
use crate::wrinkles::{detect_wrinkles_with, Detection, WrinkleOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Fit a smoothing B-spline before differentiating.
    pub smooth: bool,
    pub spline: FitOptions,
    /// Gaussian derivative scale, pixels.
    pub sigma: f64,
    pub laplace_window: usize,
    pub rank_window: usize,
    pub topology: TopologyOptions,
    pub wrinkles: WrinkleOptions,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            smooth: false,
            spline: FitOptions::default(),
            sigma: DEFAULT_SIGMA,
            laplace_window: DEFAULT_LAPLACE_WINDOW,
            rank_window: DEFAULT_RANK_WINDOW,
            topology: TopologyOptions::default(),
            wrinkles: WrinkleOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub sigma: f64,
    /// The field the differential stage saw.
    pub height: HeightField,
    pub fit: Option<FitReport>,
    pub curvatures: CurvatureMaps,
    pub shape_index: ShapeIndexMap,
    pub raw_types: ShapeTypeMap,
    pub types: ShapeTypeMap,
    pub laplacian: ScalarField,
    pub topology: TopologyMasks,
    pub detection: Detection,
    pub timings: Vec<StageTiming>,
}

/// A failure tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

fn stage<T>(name: &'static str, timings: &mut Vec<StageTiming>, f: impl FnOnce() -> Result<T>) -> std::result::Result<T, StageError> {
    let t0 = Instant::now();
    let out = f().map_err(|error| StageError { stage: name, error })?;
    timings.push(StageTiming {
        stage: name.to_string(),
        ms: t0.elapsed().as_secs_f64() * 1e3,
    });
    Ok(out)
}

/// preprocess, differential, surface classification and wrinkle detection
/// on the pixels of `h` inside `mask`.
pub fn analyze(h: &HeightField, mask: &PixelMask, cfg: &AnalysisConfig) -> std::result::Result<Analysis, StageError> {
    let mut timings = vec![];
    let (height, fit) = stage("preprocess", &mut timings, || {
        if mask.width() != h.width() || mask.height() != h.height() {
            return Err(Error::InvalidInput("mask and height field differ in size".into()));
        }
        let region = mask.and(h.valid());
        if region.is_empty() {
            return Err(Error::InvalidInput("no valid pixels inside the mask".into()));
        }
        if cfg.smooth {
            let (s, report) = smooth_height_field(h, &region, &cfg.spline)?;
            Ok((s.with_valid(region)?, Some(report)))
        } else {
            Ok((h.with_valid(region)?, None))
        }
    })?;
    let curvatures = stage("differential", &mut timings, || curvature_maps(&height, cfg.sigma))?;
    let (shape_index, raw_types, types, laplacian, topology) = stage("surface_class", &mut timings, || {
        let s = shape_index(&curvatures);
        let raw = quantize_types(&s);
        let types = majority_rank_filter(&raw, cfg.rank_window)?;
        let lap = laplacian_field(&height, cfg.laplace_window)?;
        let topo = extract_topology_with(&types, &curvatures, &lap, &cfg.topology)?;
        Ok((s, raw, types, lap, topo))
    })?;
    let detection = stage("wrinkles", &mut timings, || {
        detect_wrinkles_with(&topology, &types, &curvatures, &height, &cfg.wrinkles)
    })?;
    Ok(Analysis {
        sigma: cfg.sigma,
        height,
        fit,
        curvatures,
        shape_index,
        raw_types,
        types,
        laplacian,
        topology,
        detection,
        timings,
    })
}

/// Plan for the top-ranked wrinkle, if any.
pub fn plan_top(a: &Analysis, mask: &PixelMask) -> std::result::Result<Option<FlattenPlan>, StageError> {
    if a.detection.wrinkles.is_empty() {
        return Ok(None);
    }
    make_flatten_plan(&a.detection.wrinkles[0], 0, mask, &a.height)
        .map(Some)
        .map_err(|error| StageError { stage: "planner", error })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub wrinkle_count: usize,
    pub top_score: f64,
    pub max_slack_m: f64,
    pub pull_dist_m: f64,
    pub is_flat: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationLog {
    pub iterations: Vec<IterationLog>,
    pub converged: bool,
    /// Flattening actions taken before the halting test held.
    pub rni: usize,
}

/// Repeat analyse, plan, flatten until the garment is flat or `max_iters`
/// actions have been applied.
pub fn simulate(
    h: &HeightField,
    mask: &PixelMask,
    cfg: &AnalysisConfig,
    flat_slack_m: f64,
    max_iters: usize,
) -> std::result::Result<(SimulationLog, HeightField), StageError> {
    let mut field = h.clone();
    let mut log = vec![];
    for it in 0..=max_iters {
        let a = analyze(&field, mask, cfg)?;
        let wr = &a.detection.wrinkles;
        let flat = is_flat_with(wr, flat_slack_m);
        let plan = if flat || it == max_iters { None } else { plan_top(&a, mask)? };
        log.push(IterationLog {
            iteration: it,
            wrinkle_count: wr.len(),
            top_score: wr.first().map_or(0.0, |w| w.score),
            max_slack_m: wr.iter().map(|w| w.mean_slack()).fold(0.0, f64::max),
            pull_dist_m: plan.as_ref().map_or(0.0, |p| p.pull_dist_m),
            is_flat: flat,
        });
        if flat {
            return Ok((
                SimulationLog {
                    iterations: log,
                    converged: true,
                    rni: it,
                },
                field,
            ));
        }
        let Some(plan) = plan else { break };
        // the loop flattens the field it analysed, keeping the input's own validity
        let next = virtual_flatten_step(&a.height, &plan, wr).map_err(|error| StageError { stage: "simulate", error })?;
        field = field
            .with_values(next.values().clone())
            .map_err(|error| StageError { stage: "simulate", error })?;
    }
    Ok((
        SimulationLog {
            iterations: log,
            converged: false,
            rni: max_iters,
        },
        field,
    ))
}
