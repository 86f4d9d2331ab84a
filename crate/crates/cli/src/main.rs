use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use aqmap_cli::config::EngineConfig;
use aqmap_cli::error_line;
use aqmap_cli::pipeline::{self, SynthSpec};
use aqmap_cli::service::{bind, serve, ServiceState, Snapshot};
use aqmap_core::apps::DEFAULT_CELL_M;
use aqmap_core::{BoundingBox, Execution, GeoPoint};

#[derive(Parser)]
#[command(name = "aqmap", version, about = "Street-level air-quality prediction")]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Engine config file (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override a config key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<EngineConfig> {
        EngineConfig::load(&self.config, &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world directory.
    Synth {
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// World spec file (TOML); built-in defaults otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override a spec key, e.g. `--set station_count=50`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Build training and evaluation datasets.
    BuildDataset {
        #[command(flatten)]
        config: ConfigArgs,
        /// Regions to build; all when omitted.
        #[arg(long = "region")]
        regions: Vec<String>,
    },
    /// Train models, by transfer for regions below the threshold.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long = "region")]
        regions: Vec<String>,
    },
    /// Compare models with the nearest-station benchmark.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long = "region")]
        regions: Vec<String>,
    },
    /// Render a concentration map.
    Map {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        region: String,
        /// Hour to map; the last measured hour when omitted.
        #[arg(long)]
        time: Option<String>,
        /// `min_lat,min_lon,max_lat,max_lon`; the whole region when omitted.
        #[arg(long)]
        bbox: Option<String>,
        #[arg(long, default_value_t = DEFAULT_CELL_M)]
        cell_m: f64,
        /// Also write one grayscale PNG per pollutant.
        #[arg(long)]
        png: bool,
        /// Output directory; the region's artifact directory when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shortest and least-exposed routes between two points.
    Route {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        region: String,
        /// `lat,lon`
        #[arg(long)]
        from: String,
        /// `lat,lon`
        #[arg(long)]
        to: String,
        #[arg(long)]
        time: Option<String>,
        /// Output GeoJSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Partial dependence of one feature.
    Pdp {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        region: String,
        #[arg(long)]
        feature: String,
        /// Output CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict at one point and print the service document.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        region: String,
        #[arg(long, allow_negative_numbers = true)]
        lat: f64,
        #[arg(long, allow_negative_numbers = true)]
        lon: f64,
        #[arg(long)]
        time: Option<String>,
    },
    /// Serve predictions and routes over HTTP.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        region: String,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

fn numbers(s: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("{what} `{s}` is not a list of numbers"))?;
    anyhow::ensure!(v.len() == n, "{what} `{s}` needs {n} numbers");
    Ok(v)
}

fn point(s: &str) -> Result<GeoPoint> {
    let v = numbers(s, 2, "point")?;
    Ok(GeoPoint::new(v[0], v[1])?)
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match cli.command {
        Command::Synth {
            seed,
            out,
            spec,
            overrides,
        } => {
            let spec = SynthSpec::load(spec.as_deref(), &overrides)?.to_world_spec()?;
            pipeline::cmd_synth(seed, &spec, &out)?;
        }
        Command::BuildDataset { config, regions } => {
            let cfg = config.load()?;
            for r in cfg.select(&regions)? {
                let m = pipeline::cmd_build_dataset(&cfg, r, exec)?;
                println!(
                    "{}: {} train rows, {} eval rows",
                    m.region, m.train_rows, m.eval_rows
                );
            }
        }
        Command::Train { config, regions } => {
            let cfg = config.load()?;
            let mut globals = HashMap::new();
            for r in cfg.select(&regions)? {
                let log = pipeline::cmd_train(&cfg, r, &mut globals, exec)?;
                println!(
                    "{}: {:?} training, model {}",
                    log.region, log.mode, log.model_fingerprint
                );
            }
        }
        Command::Eval { config, regions } => {
            let cfg = config.load()?;
            let out = pipeline::cmd_eval(&cfg, &cfg.select(&regions)?, exec)?;
            print!("{}", out.report);
            for (name, c) in &out.transfer {
                println!(
                    "{name}: global {:.4}, regional {:.4}, transfer {:.4} -> {}",
                    c.global, c.regional, c.transfer, c.selected
                );
            }
        }
        Command::Map {
            config,
            region,
            time,
            bbox,
            cell_m,
            png,
            out,
        } => {
            let cfg = config.load()?;
            let bbox = match bbox {
                Some(s) => {
                    let v = numbers(&s, 4, "bbox")?;
                    Some(BoundingBox::from_degrees(v[0], v[1], v[2], v[3])?)
                }
                None => None,
            };
            let map = pipeline::cmd_map(
                &cfg,
                cfg.region(&region)?,
                time.as_deref(),
                bbox,
                cell_m,
                png,
                out.as_deref(),
                exec,
            )?;
            println!("{}x{} cells at {}", map.rows, map.cols, map.hour);
        }
        Command::Route {
            config,
            region,
            from,
            to,
            time,
            out,
        } => {
            let cfg = config.load()?;
            let doc = pipeline::cmd_route(
                &cfg,
                cfg.region(&region)?,
                point(&from)?,
                point(&to)?,
                time.as_deref(),
                out.as_deref(),
                exec,
            )?;
            println!(
                "{}",
                doc["properties"]["summary"].as_str().unwrap_or_default()
            );
        }
        Command::Pdp {
            config,
            region,
            feature,
            out,
        } => {
            let cfg = config.load()?;
            let points =
                pipeline::cmd_pdp(&cfg, cfg.region(&region)?, &feature, out.as_deref(), exec)?;
            print!("{}", aqmap_core::eval::pdp_csv(&points));
        }
        Command::Predict {
            config,
            region,
            lat,
            lon,
            time,
        } => {
            let cfg = config.load()?;
            let prepared = pipeline::prepare(&cfg, cfg.region(&region)?, None)?;
            let model = pipeline::load_model(&cfg, &region)?;
            print_json(&pipeline::predict_point(
                &prepared,
                &model,
                lat,
                lon,
                time.as_deref(),
            )?)?;
        }
        Command::Serve {
            config,
            region,
            addr,
        } => {
            let cfg = config.load()?;
            cfg.region(&region)?;
            let state = Arc::new(ServiceState::new(move || Snapshot::load(&cfg, &region))?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let (listener, local) = bind(&addr).await?;
                log::info!("listening on http://{local}");
                eprintln!("listening on http://{local}");
                serve(state, listener, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
