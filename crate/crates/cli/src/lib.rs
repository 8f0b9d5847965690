//! The `crease` command line: argument parsing, ingestion, subcommands and
//! exit codes. `main` only maps [`run`]'s error onto the process status.

pub mod overlay;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use crease_core::codec::{encode_pfm, mask_to_pgm, read_mask, read_samples};
use crease_core::config::{height_to_samples, samples_to_height};
use crease_core::pipeline::plan_top;
use crease_core::planner::is_flat_with;
use crease_core::report::to_json;
use crease_core::{
    analyze, generate, simulate, Analysis, AnalysisReport, Config, Error, HeightField, InputKind, PixelMask, PlanReport,
    SceneSpec, SimulationReport, StageError, SCHEMA_VERSION,
};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_EMPTY_MASK: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<StageError> for CliError {
    fn from(e: StageError) -> Self {
        Self {
            code: EXIT_INTERNAL,
            message: format!("stage {} failed: {}", e.stage, e.error),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "crease", version, about = "Wrinkle analysis and flattening plans for cloth height maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the analysis pipeline and print a JSON report.
    Analyze {
        #[command(flatten)]
        input: InputArgs,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write PPM overlays of each stage into this directory.
        #[arg(long, value_name = "DIR")]
        render: Option<PathBuf>,
        #[arg(long)]
        no_timing: bool,
    },
    /// Analyse, then plan the flattening action for the top-ranked wrinkle.
    Plan {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_timing: bool,
    },
    /// Repeat analyse, plan and virtual flattening until flat.
    Simulate {
        /// Height map to flatten; alternatively use --spec.
        input: Option<PathBuf>,
        /// Scene spec (TOML) to generate instead of reading an input.
        #[arg(long, conflicts_with = "input")]
        spec: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[command(flatten)]
        shared: SharedArgs,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Override the scene seed of --spec.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the flattened field (PFM) here.
        #[arg(long, value_name = "PATH")]
        final_field: Option<PathBuf>,
    },
    /// Generate a synthetic scene: height.pfm, mask.pgm and truth.json.
    Synth {
        /// Scene spec (TOML).
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the stage overlays only.
    Render {
        #[command(flatten)]
        input: InputArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Height or depth map (.pgm, .pfm, .csv).
    pub input: PathBuf,
    /// Garment mask; non-zero pixels belong to the garment.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Args)]
pub struct SharedArgs {
    /// TOML config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Metres per pixel.
    #[arg(long)]
    pub pitch: Option<f64>,
    /// Sensor-to-table distance for depth input, metres.
    #[arg(long)]
    pub depth_offset: Option<f64>,
    #[arg(long, value_enum)]
    pub input_kind: Option<KindArg>,
    /// Fit a smoothing spline before differentiating.
    #[arg(long)]
    pub smooth: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Height,
    Depth,
}

impl SharedArgs {
    pub fn config(&self) -> CliResult<Config> {
        let mut c = match &self.config {
            Some(p) => {
                if !p.is_file() {
                    return Err(CliError::input(format!("config {}: no such file", p.display())));
                }
                Config::load(p).map_err(|e| CliError::input(format!("config {}: {e}", p.display())))?
            }
            None => Config::default(),
        };
        if let Some(p) = self.pitch {
            c.calibration.pitch = p;
        }
        if let Some(d) = self.depth_offset {
            c.calibration.depth_offset = d;
        }
        if let Some(k) = self.input_kind {
            c.calibration.input_kind = match k {
                KindArg::Height => InputKind::Height,
                KindArg::Depth => InputKind::Depth,
            };
        }
        if self.smooth {
            c.analysis.smooth = true;
        }
        c.validate().map_err(|e| CliError::input(e.to_string()))?;
        Ok(c)
    }
}

fn io_error(path: &Path, e: Error) -> CliError {
    CliError::input(format!("{}: {e}", path.display()))
}

/// Height field and mask from disk; the mask defaults to every valid pixel.
pub fn load_input(input: &Path, mask: Option<&Path>, cfg: &Config) -> CliResult<(HeightField, PixelMask)> {
    if !input.is_file() {
        return Err(CliError::input(format!("{}: no such file", input.display())));
    }
    let zero_is_missing = cfg.calibration.input_kind == InputKind::Depth;
    let samples = read_samples(input, zero_is_missing).map_err(|e| io_error(input, e))?;
    let h = samples_to_height(&samples, &cfg.calibration).map_err(|e| io_error(input, e))?;
    let mask = match mask {
        Some(p) => {
            if !p.is_file() {
                return Err(CliError::input(format!("{}: no such file", p.display())));
            }
            let m = read_mask(p).map_err(|e| io_error(p, e))?;
            if m.width() != h.width() || m.height() != h.height() {
                return Err(CliError::input(format!(
                    "mask {} is {}x{}, input is {}x{}",
                    p.display(),
                    m.width(),
                    m.height(),
                    h.width(),
                    h.height()
                )));
            }
            m
        }
        None => h.valid().clone(),
    };
    if mask.and(h.valid()).is_empty() {
        return Err(CliError {
            code: EXIT_EMPTY_MASK,
            message: "mask contains no valid pixels".into(),
        });
    }
    Ok((h, mask))
}

fn write_file(path: &Path, data: &[u8]) -> CliResult<()> {
    fs::write(path, data).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))
}

fn emit(json: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => write_file(p, json.as_bytes()),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    to_json(v).map_err(|e| CliError {
        code: EXIT_INTERNAL,
        message: format!("stage report failed: {e}"),
    })
}

fn render_to(a: &Analysis, dir: &Path) -> CliResult<()> {
    create_dir(dir)?;
    for (name, bytes) in overlay::render_all(a) {
        write_file(&dir.join(name), &bytes)?;
    }
    Ok(())
}

pub fn analysis_report(a: &Analysis, cfg: &Config, timing: bool) -> CliResult<AnalysisReport> {
    AnalysisReport::new(a, cfg.planner.aperture_m, cfg.planner.flat_slack_m, timing).map_err(|error| {
        StageError {
            stage: "planner",
            error,
        }
        .into()
    })
}

pub fn cmd_analyze(input: &InputArgs, out: Option<&Path>, render: Option<&Path>, timing: bool) -> CliResult<()> {
    let cfg = input.shared.config()?;
    let (h, mask) = load_input(&input.input, input.mask.as_deref(), &cfg)?;
    let a = analyze(&h, &mask, &cfg.analysis)?;
    let report = analysis_report(&a, &cfg, timing)?;
    if let Some(dir) = render {
        render_to(&a, dir)?;
    }
    emit(&json(&report)?, out)
}

pub fn cmd_plan(input: &InputArgs, out: Option<&Path>, timing: bool) -> CliResult<()> {
    let cfg = input.shared.config()?;
    let (h, mask) = load_input(&input.input, input.mask.as_deref(), &cfg)?;
    let a = analyze(&h, &mask, &cfg.analysis)?;
    let ws = &a.detection.wrinkles;
    let flat = is_flat_with(ws, cfg.planner.flat_slack_m);
    let plan = if flat { None } else { plan_top(&a, &mask)? };
    let report = PlanReport {
        schema_version: SCHEMA_VERSION,
        wrinkle_count: ws.len(),
        is_flat: flat,
        plan,
        timing_ms: timing.then(|| a.timings.clone()),
    };
    emit(&json(&report)?, out)
}

pub fn load_spec(path: &Path) -> CliResult<SceneSpec> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    SceneSpec::from_toml_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub struct SimulateArgs<'a> {
    pub input: Option<&'a Path>,
    pub spec: Option<&'a Path>,
    pub mask: Option<&'a Path>,
    pub shared: &'a SharedArgs,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
    pub final_field: Option<&'a Path>,
}

pub fn cmd_simulate(args: SimulateArgs<'_>) -> CliResult<()> {
    let cfg = args.shared.config()?;
    let (h, mask) = match (args.spec, args.input) {
        (Some(spec), _) => {
            let mut spec = load_spec(spec)?;
            if let Some(s) = args.seed {
                spec.seed = s;
            }
            let (h, mask, _) = generate(&spec).map_err(|e| CliError::input(e.to_string()))?;
            (h, mask)
        }
        (None, Some(input)) => load_input(input, args.mask, &cfg)?,
        (None, None) => return Err(CliError::input("simulate needs an input file or --spec")),
    };
    let max_iters = args.max_iters.unwrap_or(cfg.planner.max_iters);
    let (log, field) = simulate(&h, &mask, &cfg.analysis, cfg.planner.flat_slack_m, max_iters)?;
    if let Some(p) = args.final_field {
        write_file(p, &encode_pfm(&height_to_samples(&field)))?;
    }
    let report = SimulationReport {
        schema_version: SCHEMA_VERSION,
        log,
    };
    emit(&json(&report)?, args.out)
}

pub fn cmd_synth(spec: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let mut spec = load_spec(spec)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (h, mask, truth) = generate(&spec).map_err(|e| CliError::input(e.to_string()))?;
    create_dir(out)?;
    write_file(&out.join("height.pfm"), &encode_pfm(&height_to_samples(&h)))?;
    write_file(&out.join("mask.pgm"), &mask_to_pgm(&mask))?;
    write_file(&out.join("truth.json"), json(&truth)?.as_bytes())
}

pub fn cmd_render(input: &InputArgs, out: &Path) -> CliResult<()> {
    let cfg = input.shared.config()?;
    let (h, mask) = load_input(&input.input, input.mask.as_deref(), &cfg)?;
    let a = analyze(&h, &mask, &cfg.analysis)?;
    render_to(&a, out)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Analyze {
            input,
            out,
            render,
            no_timing,
        } => cmd_analyze(input, out.as_deref(), render.as_deref(), !no_timing),
        Command::Plan { input, out, no_timing } => cmd_plan(input, out.as_deref(), !no_timing),
        Command::Simulate {
            input,
            spec,
            mask,
            shared,
            max_iters,
            seed,
            out,
            final_field,
        } => cmd_simulate(SimulateArgs {
            input: input.as_deref(),
            spec: spec.as_deref(),
            mask: mask.as_deref(),
            shared,
            max_iters: *max_iters,
            seed: *seed,
            out: out.as_deref(),
            final_field: final_field.as_deref(),
        }),
        Command::Synth { spec, out, seed } => cmd_synth(spec, out, *seed),
        Command::Render { input, out } => cmd_render(input, out),
    }
}
