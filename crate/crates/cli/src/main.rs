use clap::{Args, Parser, Subcommand};
use gevbev_cli::{run, RunConfig, UEgoSpec};
use gevbev_core::coop::ShareStrategy;
use gevbev_core::evmap::MapLayer;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gevbev",
    about = "Evidential BEV maps with uncertainty-gated CPM selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline on a scenario and write tables and map images.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Ego uncertainty threshold: a value like 0.5, or a sweep lo:hi:step.
    #[arg(long, default_value = "0.5")]
    u_ego: String,
    /// Cooperative agents' uncertainty threshold.
    #[arg(long, default_value_t = 1.0)]
    u_coop: f64,
    /// Sharing strategy: all or road.
    #[arg(long, default_value = "all")]
    strategy: String,
    /// Uncertainty threshold for the IoU metrics.
    #[arg(long, default_value_t = 1.0)]
    u_thr: f64,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of road,object.
    #[arg(long, default_value = "road,object")]
    layers: String,
}

fn parse_layers(text: &str) -> Result<Vec<MapLayer>, String> {
    let mut layers = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part {
            "road" => layers.push(MapLayer::Road),
            "object" => layers.push(MapLayer::Object),
            other => return Err(format!("unknown layer {other:?} (expected road or object)")),
        }
    }
    layers.dedup();
    Ok(layers)
}

fn parse_strategy(text: &str) -> Result<ShareStrategy, String> {
    match text {
        "all" => Ok(ShareStrategy::All),
        "road" => Ok(ShareStrategy::Road),
        other => Err(format!("unknown strategy {other:?} (expected all or road)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let config = match build_config(&args) {
                Ok(c) => c,
                Err(message) => {
                    eprintln!("error: {message}");
                    return ExitCode::FAILURE;
                }
            };
            match run(&config) {
                Ok(summary) => {
                    for m in &summary.metrics {
                        println!(
                            "{}: iou_all {:.4} iou_obs {:.4} cpm_bytes {}",
                            m.layer, m.iou_all, m.iou_obs, m.cpm_bytes
                        );
                    }
                    println!(
                        "wrote {} files to {}",
                        summary.files.len(),
                        summary.out_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}

fn build_config(args: &RunArgs) -> Result<RunConfig, String> {
    let mut config = RunConfig::new(&args.scenario, &args.out);
    config.u_ego = UEgoSpec::parse(&args.u_ego).map_err(|e| e.to_string())?;
    config.u_coop = args.u_coop;
    config.strategy = parse_strategy(&args.strategy)?;
    config.u_thr = args.u_thr;
    config.seed = args.seed;
    config.layers = parse_layers(&args.layers)?;
    Ok(config)
}
