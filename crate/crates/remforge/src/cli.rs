//! Command-line toolchain: environment generation, mission planning and
//! flight, preprocessing, training, evaluation, REM export, and the
//! interference and endurance reproductions. Subcommands compose through
//! files in the output directory; every run writes a resolved-config
//! snapshot next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::core::{derive_seed, splitmix64, Mac, Point3, Volume};
use crate::dataset::{
    load_samples, preprocess, split, write_features_csv, FeatureRow, PreprocessReport,
    DEFAULT_TRAIN_FRACTION,
};
use crate::estimators::{
    fit, grid_search, EstimatorConfig, EstimatorKind, GridCell, MlpConfig, Weights,
};
use crate::evalrem::{
    compare_estimators, generate_rem, rem_fidelity, write_eval_csv, write_rem_csv, FidelityReport,
};
use crate::fleetsim::{run_endurance, MissionConfig};
use crate::mission::{partition_plan, plan_waypoints, MissionPlan, SplitAxis, DEFAULT_MARGIN_M};
use crate::radioenv::{
    interference_experiment, generate_environment, sweep_frequencies, RadioEnvironment,
    ScenarioConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "remforge",
    version,
    about = "Deterministic UAV radio-mapping simulator and estimator toolchain"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic AP environment
    GenEnv(Common),
    /// Plan the waypoint lattice and split it across UAVs
    Plan(Common),
    /// Fly the planned campaign and record the sample log
    Fly(Common),
    /// Filter and one-hot encode the sample log into a feature matrix
    Preprocess(Common),
    /// Grid-search kNN hyperparameters on a validation split
    Train(Common),
    /// Compare all estimator families on a shared test split
    Eval(Common),
    /// Export voxelized REM grids and their fidelity against ground truth
    Rem(Common),
    /// Sweep the control-radio frequency and tabulate detections per channel
    Interference(Common),
    /// Run the hover endurance scenario to battery reserve
    Endurance(Common),
    /// Full pipeline: gen-env, plan, fly, preprocess, train, eval, rem
    E2e(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (falls back to REMFORGE_SEED, then the config file)
    #[arg(long, env = "REMFORGE_SEED")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Flight volume as "LxWxH" in meters
    #[arg(long)]
    pub volume: Option<String>,
    /// Number of scan waypoints
    #[arg(long)]
    pub waypoints: Option<usize>,
    /// Number of UAVs sharing the waypoint set
    #[arg(long)]
    pub uavs: Option<usize>,
    /// REM voxel resolution in meters
    #[arg(long)]
    pub resolution: Option<f64>,
    /// kNN hyperparameter grid, e.g. "k=1,3,5,9,16;factor=1,3"
    #[arg(long)]
    pub grid: Option<String>,
    /// Scans per radio frequency for the interference sweep
    #[arg(long)]
    pub scans: Option<u32>,
}

/// Fully resolved run configuration; serialized next to every output.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub volume: String,
    pub waypoints: usize,
    pub uavs: usize,
    pub resolution_m: f64,
    pub drop_threshold: usize,
    pub grid: String,
    pub scans_per_freq: u32,
    pub endurance_interval_ms: u64,
    pub endurance_scan_ms: u64,
    pub mlp_epochs: usize,
    pub scenario: ScenarioConfig,
    pub mission: MissionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            volume: "3.74x3.20x2.10".to_string(),
            waypoints: 72,
            uavs: 2,
            resolution_m: 0.25,
            drop_threshold: 16,
            grid: "k=1,3,5,9,16;factor=1,3".to_string(),
            scans_per_freq: 100,
            endurance_interval_ms: 8_000,
            endurance_scan_ms: 2_000,
            mlp_epochs: 300,
            scenario: ScenarioConfig::default(),
            mission: MissionConfig::default(),
        }
    }
}

/// Parses "LxWxH" into a volume anchored at the origin.
pub fn parse_volume(spec: &str) -> Result<Volume> {
    let parts: Vec<&str> = spec.split(['x', 'X']).collect();
    if parts.len() != 3 {
        bail!("volume must be \"LxWxH\", got {spec:?}");
    }
    let dims: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .with_context(|| format!("bad volume component {p:?}"))
        })
        .collect::<Result<_>>()?;
    Volume::new(Point3::ORIGIN, dims[0], dims[1], dims[2])
        .map_err(|e| anyhow::anyhow!("invalid volume {spec:?}: {e}"))
}

/// Parses a grid spec like "k=1,3,5;factor=1,3;weights=distance;p=2" into
/// the cross product of global-kNN configs.
pub fn parse_grid(spec: &str) -> Result<Vec<EstimatorConfig>> {
    let mut ks = vec![1usize, 3, 5, 9, 16];
    let mut factors = vec![1.0f64, 3.0];
    let mut weights = vec![Weights::Distance];
    let mut ps = vec![2.0f64];
    for field in spec.split(';').filter(|f| !f.trim().is_empty()) {
        let (key, vals) = field
            .split_once('=')
            .with_context(|| format!("grid field {field:?} is not key=values"))?;
        let vals = vals.trim();
        match key.trim() {
            "k" => {
                ks = vals
                    .split(',')
                    .map(|v| v.trim().parse().context("bad k"))
                    .collect::<Result<_>>()?
            }
            "factor" => {
                factors = vals
                    .split(',')
                    .map(|v| v.trim().parse().context("bad factor"))
                    .collect::<Result<_>>()?
            }
            "p" => {
                ps = vals
                    .split(',')
                    .map(|v| v.trim().parse().context("bad p"))
                    .collect::<Result<_>>()?
            }
            "weights" => {
                weights = vals
                    .split(',')
                    .map(|v| match v.trim() {
                        "uniform" => Ok(Weights::Uniform),
                        "distance" => Ok(Weights::Distance),
                        other => bail!("unknown weights {other:?}"),
                    })
                    .collect::<Result<_>>()?
            }
            other => bail!("unknown grid key {other:?}"),
        }
    }
    let mut grid = Vec::new();
    for &k in &ks {
        for &factor in &factors {
            for &w in &weights {
                for &p in &ps {
                    grid.push(EstimatorConfig {
                        kind: EstimatorKind::KnnGlobal,
                        k,
                        weights: w,
                        minkowski_p: p,
                        onehot_factor: factor,
                        mlp: MlpConfig::default(),
                    });
                }
            }
        }
    }
    if grid.is_empty() {
        bail!("grid spec {spec:?} produced no configs");
    }
    Ok(grid)
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("cannot parse config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(v) = &common.volume {
        parse_volume(v)?; // fail early on malformed specs
        cfg.volume = v.clone();
    }
    if let Some(w) = common.waypoints {
        cfg.waypoints = w;
    }
    if let Some(u) = common.uavs {
        cfg.uavs = u;
    }
    if let Some(r) = common.resolution {
        if r <= 0.0 {
            bail!("resolution must be positive, got {r}");
        }
        cfg.resolution_m = r;
    }
    if let Some(g) = &common.grid {
        parse_grid(g)?;
        cfg.grid = g.clone();
    }
    if let Some(s) = common.scans {
        cfg.scans_per_freq = s;
    }
    // The scenario volume follows the flight volume.
    cfg.scenario.volume = parse_volume(&cfg.volume)?;
    Ok(cfg)
}

/// Writes via a temp file and atomic rename, so failed runs leave no
/// partial outputs.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_file_name(format!(
        "{}.tmp",
        path.file_name().unwrap_or_default().to_string_lossy()
    ));
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot rename into {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, producer: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| {
        format!(
            "missing {}; run `remforge {producer}` first",
            path.display()
        )
    })?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

fn snapshot(out: &Path, name: &str, cfg: &RunConfig) -> Result<()> {
    write_json(&out.join(format!("{name}.config.json")), cfg)
}

/// Preprocessed dataset artifact shared by train, eval, and rem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessedDataset {
    pub rows: Vec<FeatureRow>,
    pub macs: Vec<Mac>,
    pub report: PreprocessReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub best: EstimatorConfig,
    pub table: Vec<GridCell>,
    pub train_n: usize,
    pub val_n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlyReport {
    pub campaign: crate::mission::CampaignReport,
    pub radio_down_intervals: Vec<(String, Vec<(u64, u64)>)>,
}

pub fn cmd_gen_env(cfg: &RunConfig, out: &Path) -> Result<()> {
    let env = generate_environment(&cfg.scenario, cfg.seed)?;
    write_json(&out.join("environment.json"), &env)?;
    snapshot(out, "gen-env", cfg)?;
    println!(
        "gen-env: {} APs, {} SSIDs -> {}",
        env.aps.len(),
        cfg.scenario.ssid_count,
        out.join("environment.json").display()
    );
    Ok(())
}

pub fn cmd_plan(cfg: &RunConfig, out: &Path) -> Result<()> {
    let volume = parse_volume(&cfg.volume)?;
    let waypoints = plan_waypoints(&volume, cfg.waypoints, DEFAULT_MARGIN_M)?;
    let plan = partition_plan(&waypoints, cfg.uavs, SplitAxis::Y)?;
    write_json(&out.join("mission_plan.json"), &plan)?;
    snapshot(out, "plan", cfg)?;
    println!(
        "plan: {} waypoints over {} UAVs -> {}",
        cfg.waypoints,
        plan.per_uav.len(),
        out.join("mission_plan.json").display()
    );
    Ok(())
}

pub fn cmd_fly(cfg: &RunConfig, out: &Path) -> Result<()> {
    let env: RadioEnvironment = read_json(&out.join("environment.json"), "gen-env")?;
    let plan: MissionPlan = read_json(&out.join("mission_plan.json"), "plan")?;
    let outcome = crate::mission::run_campaign(&plan, &env, &cfg.mission, cfg.seed)?;
    let mut log = Vec::new();
    crate::core::write_samples(&mut log, &outcome.samples)?;
    write_atomic(&out.join("samples.jsonl"), &log)?;
    let report = FlyReport {
        campaign: outcome.report.clone(),
        radio_down_intervals: outcome
            .missions
            .iter()
            .map(|m| (m.report.uav_id.clone(), m.radio_down_intervals.clone()))
            .collect(),
    };
    write_json(&out.join("fly_report.json"), &report)?;
    snapshot(out, "fly", cfg)?;
    println!(
        "fly: {} samples from {} UAVs -> {}",
        outcome.samples.len(),
        plan.per_uav.len(),
        out.join("samples.jsonl").display()
    );
    Ok(())
}

pub fn cmd_preprocess(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = out.join("samples.jsonl");
    if !path.exists() {
        bail!("missing {}; run `remforge fly` first", path.display());
    }
    let (samples, parse_errors) = load_samples(&path)?;
    for (line, err) in &parse_errors {
        eprintln!("preprocess: skipped line {line}: {err}");
    }
    let (rows, report) = preprocess(&samples, cfg.drop_threshold)?;
    let mut csv = Vec::new();
    write_features_csv(&mut csv, &rows, &report.retained_macs)?;
    write_atomic(&out.join("features.csv"), &csv)?;
    let dataset = ProcessedDataset {
        rows,
        macs: report.retained_macs.clone(),
        report,
    };
    write_json(&out.join("dataset.json"), &dataset)?;
    snapshot(out, "preprocess", cfg)?;
    println!(
        "preprocess: {} -> {} rows, {} MACs retained",
        dataset.report.input_count,
        dataset.report.retained_count,
        dataset.macs.len()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dataset: ProcessedDataset = read_json(&out.join("dataset.json"), "preprocess")?;
    let grid = parse_grid(&cfg.grid)?;
    let (train_idx, _) = split(&dataset.rows, DEFAULT_TRAIN_FRACTION, cfg.seed)?;
    let train_rows: Vec<FeatureRow> = train_idx.iter().map(|&i| dataset.rows[i].clone()).collect();
    // The validation set comes out of the training portion; the test split
    // stays untouched for eval.
    let (fit_idx, val_idx) = split(
        &train_rows,
        DEFAULT_TRAIN_FRACTION,
        derive_seed(cfg.seed, "validation"),
    )?;
    let fit_rows: Vec<FeatureRow> = fit_idx.iter().map(|&i| train_rows[i].clone()).collect();
    let val_rows: Vec<FeatureRow> = val_idx.iter().map(|&i| train_rows[i].clone()).collect();
    let (best, table) = grid_search(&fit_rows, &val_rows, &grid)?;
    let report = TrainReport {
        best,
        table,
        train_n: fit_rows.len(),
        val_n: val_rows.len(),
    };
    write_json(&out.join("grid_table.json"), &report)?;
    let best_model = fit(&train_rows, &best)?;
    write_json(&out.join("best_model.json"), &best_model)?;
    snapshot(out, "train", cfg)?;
    println!(
        "train: best {} (val RMSE {:.4} dBm) over {} grid cells",
        best.label(),
        report.table[0].val_rmse,
        report.table.len()
    );
    Ok(())
}

fn eval_configs(cfg: &RunConfig) -> Vec<EstimatorConfig> {
    vec![
        EstimatorConfig::baseline(),
        EstimatorConfig::knn_k3(),
        EstimatorConfig::knn_k16_factor3(),
        EstimatorConfig::knn_per_mac(),
        EstimatorConfig {
            kind: EstimatorKind::Mlp,
            mlp: MlpConfig {
                epochs: cfg.mlp_epochs,
                seed: cfg.seed,
                ..MlpConfig::default()
            },
            ..EstimatorConfig::knn_k3()
        },
    ]
}

pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dataset: ProcessedDataset = read_json(&out.join("dataset.json"), "preprocess")?;
    let report = compare_estimators(&dataset.rows, &eval_configs(cfg), cfg.seed)?;
    let mut csv = Vec::new();
    write_eval_csv(&mut csv, &report)?;
    write_atomic(&out.join("eval.csv"), &csv)?;
    write_json(&out.join("eval.json"), &report)?;
    snapshot(out, "eval", cfg)?;
    for row in &report.rows {
        println!(
            "eval: {:<22} RMSE {:.4} dBm (train {}, test {})",
            row.estimator, row.rmse_dbm, row.train_n, row.test_n
        );
    }
    Ok(())
}

fn hash_file(path: &Path) -> Result<u64> {
    let bytes = fs::read(path)?;
    let mut h = 0x243f_6a88_85a3_08d3u64;
    for b in bytes {
        h = splitmix64(h ^ b as u64);
    }
    Ok(h)
}

pub fn cmd_rem(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dataset: ProcessedDataset = read_json(&out.join("dataset.json"), "preprocess")?;
    let env: RadioEnvironment = read_json(&out.join("environment.json"), "gen-env")?;
    let volume = parse_volume(&cfg.volume)?;
    let dataset_hash = hash_file(&out.join("dataset.json"))?;
    let mut fidelities: Vec<(String, FidelityReport)> = Vec::new();
    for config in [EstimatorConfig::baseline(), EstimatorConfig::knn_k3()] {
        let fitted = fit(&dataset.rows, &config)?;
        let grid = generate_rem(&fitted, &volume, cfg.resolution_m, &dataset.macs, dataset_hash)?;
        let stem = format!("rem_{}", config.label());
        write_json(&out.join(format!("{stem}.json")), &grid)?;
        let mut csv = Vec::new();
        write_rem_csv(&mut csv, &grid)?;
        write_atomic(&out.join(format!("{stem}.csv")), &csv)?;
        let fidelity = rem_fidelity(&grid, &env)?;
        println!(
            "rem: {} {}x{}x{} voxels, fidelity RMSE {:.4} dBm",
            config.label(),
            grid.dims[0],
            grid.dims[1],
            grid.dims[2],
            fidelity.aggregate_rmse
        );
        fidelities.push((config.label(), fidelity));
    }
    write_json(&out.join("fidelity.json"), &fidelities)?;
    snapshot(out, "rem", cfg)?;
    Ok(())
}

pub fn cmd_interference(cfg: &RunConfig, out: &Path) -> Result<()> {
    let env_path = out.join("environment.json");
    let env: RadioEnvironment = if env_path.exists() {
        read_json(&env_path, "gen-env")?
    } else {
        generate_environment(&cfg.scenario, cfg.seed)?
    };
    let volume = parse_volume(&cfg.volume)?;
    let table = interference_experiment(
        &env,
        &volume.center(),
        &sweep_frequencies(),
        cfg.scans_per_freq,
        cfg.seed,
    );
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    write_atomic(&out.join("interference.csv"), &csv)?;
    snapshot(out, "interference", cfg)?;
    println!(
        "interference: {} frequencies x {} scans -> {}",
        table.rows.len(),
        cfg.scans_per_freq,
        out.join("interference.csv").display()
    );
    Ok(())
}

pub fn cmd_endurance(cfg: &RunConfig, out: &Path) -> Result<()> {
    let report = run_endurance(
        &cfg.mission.battery,
        cfg.endurance_interval_ms,
        cfg.endurance_scan_ms,
        cfg.mission.dt_ms,
    )?;
    write_json(&out.join("endurance.json"), &report)?;
    snapshot(out, "endurance", cfg)?;
    println!(
        "endurance: {} scans, battery reserve at {:.1} s",
        report.scans_completed,
        report.depletion_time_ms as f64 / 1000.0
    );
    Ok(())
}

pub fn cmd_e2e(cfg: &RunConfig, out: &Path) -> Result<()> {
    cmd_gen_env(cfg, out)?;
    cmd_plan(cfg, out)?;
    cmd_fly(cfg, out)?;
    cmd_preprocess(cfg, out)?;
    cmd_train(cfg, out)?;
    cmd_eval(cfg, out)?;
    cmd_rem(cfg, out)?;
    snapshot(out, "e2e", cfg)?;
    Ok(())
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::GenEnv(c)
        | Command::Plan(c)
        | Command::Fly(c)
        | Command::Preprocess(c)
        | Command::Train(c)
        | Command::Eval(c)
        | Command::Rem(c)
        | Command::Interference(c)
        | Command::Endurance(c)
        | Command::E2e(c) => c.clone(),
    };
    let cfg = resolve(&common)?;
    fs::create_dir_all(&common.out)
        .with_context(|| format!("cannot create {}", common.out.display()))?;
    match &cli.command {
        Command::GenEnv(_) => cmd_gen_env(&cfg, &common.out),
        Command::Plan(_) => cmd_plan(&cfg, &common.out),
        Command::Fly(_) => cmd_fly(&cfg, &common.out),
        Command::Preprocess(_) => cmd_preprocess(&cfg, &common.out),
        Command::Train(_) => cmd_train(&cfg, &common.out),
        Command::Eval(_) => cmd_eval(&cfg, &common.out),
        Command::Rem(_) => cmd_rem(&cfg, &common.out),
        Command::Interference(_) => cmd_interference(&cfg, &common.out),
        Command::Endurance(_) => cmd_endurance(&cfg, &common.out),
        Command::E2e(_) => cmd_e2e(&cfg, &common.out),
    }
}
