//! Geometric analysis of cloth height maps: curvature, shape classes,
//! ridges and contours, wrinkle triplets, wrinkle description and ranking,
//! and flattening plans. `synth` generates analytic test scenes.

pub mod codec;
pub mod config;
pub mod differential;
pub mod error;
pub mod grid;
pub mod pipeline;
pub mod planner;
pub mod preprocess;
pub mod report;
pub mod surface_class;
pub mod synth;
pub mod triplets;
pub mod wrinkles;

pub use config::{CalibrationConfig, Config, InputKind, PlannerConfig};
pub use differential::{curvature_maps, CurvatureMaps, ScalarField};
pub use error::{Error, Result};
pub use grid::{Calibration, DepthMap, Grid, HeightField, Pixel, PixelMask, WorldPoint};
pub use pipeline::{analyze, simulate, Analysis, AnalysisConfig, SimulationLog, StageError};
pub use planner::{is_flat, make_flatten_plan, principal_direction, select_grasp, FlattenPlan, GraspCandidate};
pub use report::{AnalysisReport, PlanReport, SimulationReport, SCHEMA_VERSION};
pub use surface_class::{ShapeType, ShapeTypeMap, TopologyMasks};
pub use synth::{generate, GroundTruth, SceneKind, SceneSpec};
pub use triplets::{triplet_metrics, Triplet};
pub use wrinkles::{detect_wrinkles, hough_split, HoughOutcome, QuinticCurve, RidgeSegment, Wrinkle};
