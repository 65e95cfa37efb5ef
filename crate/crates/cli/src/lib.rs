//! Batch front-end: load a scenario, run the perception/cooperation
//! pipeline, and write CSV tables, map images, CPM payloads and a manifest
//! into an output directory. All randomness flows from the scenario seed
//! (or the --seed override), so identical configs write identical bytes.

pub mod render;

use gevbev_core::coop::{
    fuse_selection, sweep_from_output, FusionRound, PipelineConfig, PipelineError, PipelineOutput,
    ShareStrategy,
};
use gevbev_core::evmap::MapLayer;
use gevbev_core::fit::loss_curve_csv;
use gevbev_core::metrics::{
    calibration, calibration_csv, collect_cal_samples, iou, EvalInputs, IouMode,
};
use gevbev_core::scene_sim::{Scenario, ScenarioError};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read scenario {path}: {source}")]
    ReadScenario {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    WriteArtifact {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("invalid u-ego spec {spec:?}: expected a value or lo:hi:step")]
    BadUEgoSpec { spec: String },
    #[error("threshold {value} out of [0, 1]")]
    BadThreshold { value: f64 },
    #[error("at least one layer must be selected")]
    NoLayers,
}

/// Either a single ego threshold or an inclusive lo:hi:step sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UEgoSpec {
    Single(f64),
    Sweep { lo: f64, hi: f64, step: f64 },
}

impl UEgoSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = || CliError::BadUEgoSpec {
            spec: text.to_string(),
        };
        let parts: Vec<&str> = text.split(':').collect();
        match parts.as_slice() {
            [one] => {
                let v: f64 = one.trim().parse().map_err(|_| bad())?;
                Ok(UEgoSpec::Single(v))
            }
            [lo, hi, step] => {
                let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
                let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
                let step: f64 = step.trim().parse().map_err(|_| bad())?;
                if !(step > 0.0 && hi >= lo) {
                    return Err(bad());
                }
                Ok(UEgoSpec::Sweep { lo, hi, step })
            }
            _ => Err(bad()),
        }
    }

    /// The threshold values this spec denotes (a sweep includes both ends).
    pub fn values(&self) -> Vec<f64> {
        match *self {
            UEgoSpec::Single(v) => vec![v],
            UEgoSpec::Sweep { lo, hi, step } => {
                let n = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=n)
                    // Round off the accumulation error so thresholds (and
                    // the sweep CSV) carry clean values like 0.3.
                    .map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9)
                    .collect()
            }
        }
    }

    pub fn spec_string(&self) -> String {
        match *self {
            UEgoSpec::Single(v) => format!("{v}"),
            UEgoSpec::Sweep { lo, hi, step } => format!("{lo}:{hi}:{step}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub out_dir: PathBuf,
    pub u_ego: UEgoSpec,
    pub u_coop: f64,
    pub strategy: ShareStrategy,
    pub u_thr: f64,
    pub seed: Option<u64>,
    pub layers: Vec<MapLayer>,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn new(scenario: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            scenario: scenario.into(),
            out_dir: out_dir.into(),
            u_ego: UEgoSpec::Single(0.5),
            u_coop: 1.0,
            strategy: ShareStrategy::All,
            u_thr: 1.0,
            seed: None,
            layers: vec![MapLayer::Road, MapLayer::Object],
            pipeline: PipelineConfig::default(),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        for v in self
            .u_ego
            .values()
            .iter()
            .chain([self.u_coop, self.u_thr].iter())
        {
            if !(0.0..=1.0).contains(v) {
                return Err(CliError::BadThreshold { value: *v });
            }
        }
        if self.layers.is_empty() {
            return Err(CliError::NoLayers);
        }
        Ok(())
    }
}

/// Worker cap from GEVBEV_THREADS; 0 lets the pipeline use the hardware
/// count.
pub fn threads_from_env() -> usize {
    std::env::var("GEVBEV_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerMetrics {
    pub layer: String,
    pub iou_all: f64,
    pub iou_obs: f64,
    pub cpm_bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
struct ManifestConfig {
    scenario: String,
    u_ego: String,
    u_coop: f64,
    strategy: String,
    u_thr: f64,
    seed: u64,
    layers: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct ManifestGrid {
    origin_x: f64,
    origin_y: f64,
    cell_size: f64,
    width: usize,
    height: usize,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest {
    config: ManifestConfig,
    grid: ManifestGrid,
    metrics: Vec<LayerMetrics>,
    files: Vec<String>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub metrics: Vec<LayerMetrics>,
}

struct ArtifactWriter<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> ArtifactWriter<'a> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::WriteArtifact { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Execute a run: pipeline, CPM exchange, metrics, artifacts. Returns the
/// summary; every written file is listed in the manifest.
pub fn run(config: &RunConfig) -> Result<RunSummary, CliError> {
    config.validate()?;
    let text = fs::read_to_string(&config.scenario).map_err(|source| CliError::ReadScenario {
        path: config.scenario.clone(),
        source,
    })?;
    let scenario = Scenario::from_json(&text)?;

    let mut pipeline_cfg = config.pipeline.clone();
    pipeline_cfg.layers = config.layers.clone();
    pipeline_cfg.seed_override = config.seed;
    if pipeline_cfg.threads == 0 {
        pipeline_cfg.threads = threads_from_env();
    }
    let out = gevbev_core::coop::run_pipeline(&scenario, &pipeline_cfg)?;

    fs::create_dir_all(&config.out_dir).map_err(|source| CliError::WriteArtifact {
        path: config.out_dir.clone(),
        source,
    })?;
    let mut writer = ArtifactWriter {
        dir: &config.out_dir,
        files: Vec::new(),
    };

    for (agent, layers) in out.per_agent.iter().enumerate() {
        for alo in layers {
            writer.write(
                &format!("loss_{}_agent{}.csv", alo.layer.name(), agent),
                loss_curve_csv(&alo.curve).as_bytes(),
            )?;
        }
    }

    // Fusion artifacts: at the requested threshold for a single value, at
    // the no-selection baseline when sweeping (the sweep CSV carries the
    // per-threshold numbers).
    let single_u = match config.u_ego {
        UEgoSpec::Single(v) => Some(v),
        UEgoSpec::Sweep { .. } => None,
    };
    let mut metrics_rows = Vec::new();
    for &layer in &config.layers {
        let round = fuse_selection(&out, layer, single_u, config.u_coop, config.strategy)?;
        if single_u.is_some() {
            for (agent, payload) in &round.payloads {
                writer.write(
                    &format!("cpm_{}_agent{}.bin", layer.name(), agent),
                    &gevbev_core::coop::encode_cpm(payload),
                )?;
            }
        }
        write_layer_artifacts(
            &mut writer,
            &out,
            layer,
            &round,
            config.u_thr,
            &mut metrics_rows,
        )?;
    }

    if single_u.is_none() {
        let table = sweep_from_output(
            &out,
            &config.u_ego.values(),
            config.strategy,
            config.u_coop,
            config.u_thr,
        )?;
        writer.write("sweep.csv", table.to_csv().as_bytes())?;
    }

    let mut files = writer.files;
    files.push("manifest.json".to_string());
    files.sort();
    let manifest = Manifest {
        config: ManifestConfig {
            scenario: config.scenario.display().to_string(),
            u_ego: config.u_ego.spec_string(),
            u_coop: config.u_coop,
            strategy: config.strategy.name().to_string(),
            u_thr: config.u_thr,
            seed: config.seed.unwrap_or(scenario.seed),
            layers: config.layers.iter().map(|l| l.name().to_string()).collect(),
        },
        grid: ManifestGrid {
            origin_x: out.grid.origin_x,
            origin_y: out.grid.origin_y,
            cell_size: out.grid.cell_size,
            width: out.grid.width,
            height: out.grid.height,
        },
        metrics: metrics_rows.clone(),
        files: files.clone(),
    };
    let manifest_text =
        serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail");
    fs::write(
        config.out_dir.join("manifest.json"),
        manifest_text.as_bytes(),
    )
    .map_err(|source| CliError::WriteArtifact {
        path: config.out_dir.join("manifest.json"),
        source,
    })?;

    Ok(RunSummary {
        out_dir: config.out_dir.clone(),
        files,
        metrics: metrics_rows,
    })
}

fn write_layer_artifacts(
    writer: &mut ArtifactWriter,
    out: &PipelineOutput,
    layer: MapLayer,
    round: &FusionRound,
    u_thr: f64,
    metrics_rows: &mut Vec<LayerMetrics>,
) -> Result<(), CliError> {
    let raster = round.fused.to_raster();
    let name = layer.name();
    writer.write(
        &format!("map_{name}_uncertainty.pgm"),
        &render::uncertainty_pgm(&raster.u, &raster.observed),
    )?;
    writer.write(
        &format!("map_{name}_confidence.ppm"),
        &render::confidence_ppm(&raster.p_fg, &raster.observed),
    )?;
    writer.write(
        &format!("map_{name}_observed.pgm"),
        &render::observed_pgm(&raster.observed),
    )?;

    let gt = out.gt_for(layer);
    let (samples, counts) = collect_cal_samples(&raster.p_fg, &raster.u, &raster.observed, gt);
    if !samples.is_empty() {
        let curve = calibration(&samples, &counts);
        writer.write(
            &format!("calibration_{name}.csv"),
            calibration_csv(&curve).as_bytes(),
        )?;
    }

    let inputs = EvalInputs::new(&raster.p_fg, &raster.u, &raster.observed, gt, u_thr)
        .map_err(PipelineError::from)?;
    metrics_rows.push(LayerMetrics {
        layer: name.to_string(),
        iou_all: iou(&inputs, IouMode::All),
        iou_obs: iou(&inputs, IouMode::Obs),
        cpm_bytes: round.total_bytes(),
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u_ego_spec_parsing() {
        assert_eq!(UEgoSpec::parse("0.5").unwrap(), UEgoSpec::Single(0.5));
        let sweep = UEgoSpec::parse("0:1:0.1").unwrap();
        let values = sweep.values();
        assert_eq!(values.len(), 11);
        assert!((values[10] - 1.0).abs() < 1e-9);
        assert!(UEgoSpec::parse("0:1").is_err());
        assert!(UEgoSpec::parse("1:0:0.1").is_err());
        assert!(UEgoSpec::parse("abc").is_err());
        assert_eq!(UEgoSpec::parse("0.3:0.3:0.1").unwrap().values(), vec![0.3]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = RunConfig::new("missing.json", "/tmp/out");
        cfg.u_coop = 1.5;
        assert!(matches!(
            run(&cfg).unwrap_err(),
            CliError::BadThreshold { .. }
        ));
        let mut cfg = RunConfig::new("missing.json", "/tmp/out");
        cfg.layers.clear();
        assert!(matches!(run(&cfg).unwrap_err(), CliError::NoLayers));
        let cfg = RunConfig::new("definitely-missing.json", "/tmp/out");
        assert!(matches!(
            run(&cfg).unwrap_err(),
            CliError::ReadScenario { .. }
        ));
    }
}
