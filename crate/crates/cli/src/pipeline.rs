//! Pipeline commands. Each one reads the config and the artifacts of earlier
//! steps from disk, and writes its own artifacts under `out_dir/<region>/`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use aqmap_core::apps::{
    annotate_paqi, build_graph, render_grid, route, GridMap, PointPrediction, Predictor, RoadGraph,
    RoutePlan,
};
use aqmap_core::dataset::{
    build_rows, split_stations, stratified_sample_available, AqiBreakpoints, DataRow, Dataset,
    DatasetSplit,
};
use aqmap_core::eval::{
    benchmark_predictions, compare_transfer, evaluate, model_predictions, partial_dependence,
    pdp_csv, pdp_sample, EvalReport, PdpPoint, TransferComparison, PDP_SAMPLE,
};
use aqmap_core::features::{FeatureConfig, IndexedWorld, Preset};
use aqmap_core::ingest::synth::{generate_synthetic_world, RegionPhysics, WorldSpec};
use aqmap_core::ingest::{MeasurementTable, World};
use aqmap_core::model::{train, transfer_fit, MlpModel};
use aqmap_core::{BoundingBox, Execution, GeoPoint, Hour, POLLUTANTS};

use crate::config::{apply_override, EngineConfig, RegionConfig};

pub const TRAIN_CSV: &str = "train.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const SPLIT_CSV: &str = "split.csv";
pub const MANIFEST: &str = "manifest.json";
pub const MODEL: &str = "model.bin";
/// Comparison models written next to a transfer model.
pub const GLOBAL_MODEL: &str = "global.bin";
pub const REGIONAL_MODEL: &str = "regional.bin";
pub const TRAIN_LOG: &str = "train_log.json";

/// Synthetic world parameters as read from a TOML file; every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub region_name: String,
    pub preset: String,
    pub center_lat: f64,
    pub center_lon: f64,
    pub size_km: f64,
    pub station_count: usize,
    pub road_count: usize,
    pub towns: usize,
    pub grid_resolution_km: f64,
    pub grid_subsamples: usize,
    pub hours: usize,
    /// First hour, `YYYY-MM-DDTHH:00Z`.
    pub start: String,
    pub noise_sigma: f64,
    pub na_fraction: f64,
    pub outlier_fraction: f64,
    pub pollutant_coverage: f64,
    pub urban_station_fraction: f64,
    pub traffic_missing_fraction: f64,
    pub land_spacing_km: f64,
    pub power_plant_count: usize,
    /// Per-pollutant multipliers of the true concentrations.
    pub level: [f64; 4],
    /// Per-pollutant multipliers of the atmospheric grids.
    pub atmos_bias: [f64; 4],
}

impl Default for SynthSpec {
    fn default() -> Self {
        let w = WorldSpec::default();
        SynthSpec {
            region_name: w.region_name,
            preset: w.preset.to_string(),
            center_lat: w.center_lat,
            center_lon: w.center_lon,
            size_km: w.size_km,
            station_count: w.station_count,
            road_count: w.road_count,
            towns: w.towns,
            grid_resolution_km: w.grid_resolution_km,
            grid_subsamples: w.grid_subsamples,
            hours: w.hours,
            start: w.start.to_string(),
            noise_sigma: w.noise_sigma,
            na_fraction: w.na_fraction,
            outlier_fraction: w.outlier_fraction,
            pollutant_coverage: w.pollutant_coverage,
            urban_station_fraction: w.urban_station_fraction,
            traffic_missing_fraction: w.traffic_missing_fraction,
            land_spacing_km: w.land_spacing_km,
            power_plant_count: w.power_plant_count,
            level: w.physics.level,
            atmos_bias: w.physics.atmos_bias,
        }
    }
}

impl SynthSpec {
    /// Reads an optional spec file and applies `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<SynthSpec> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading spec {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing spec {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        table.try_into().context("invalid world spec")
    }

    pub fn to_world_spec(&self) -> Result<WorldSpec> {
        let spec = WorldSpec {
            region_name: self.region_name.clone(),
            preset: self.preset.parse()?,
            center_lat: self.center_lat,
            center_lon: self.center_lon,
            size_km: self.size_km,
            station_count: self.station_count,
            road_count: self.road_count,
            towns: self.towns,
            grid_resolution_km: self.grid_resolution_km,
            grid_subsamples: self.grid_subsamples,
            hours: self.hours,
            start: Hour::parse(&self.start)?,
            noise_sigma: self.noise_sigma,
            na_fraction: self.na_fraction,
            outlier_fraction: self.outlier_fraction,
            pollutant_coverage: self.pollutant_coverage,
            urban_station_fraction: self.urban_station_fraction,
            traffic_missing_fraction: self.traffic_missing_fraction,
            land_spacing_km: self.land_spacing_km,
            power_plant_count: self.power_plant_count,
            physics: RegionPhysics {
                level: self.level,
                atmos_bias: self.atmos_bias,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Generates a synthetic world and writes it to `out` in the standard layout.
pub fn cmd_synth(seed: u64, spec: &WorldSpec, out: &Path) -> Result<World> {
    let world = generate_synthetic_world(seed, spec)?.world;
    world.save_dir(out)?;
    log::info!(
        "synthetic world `{}`: {} stations, {} roads, {} hours -> {}",
        world.region.name,
        world.stations.len(),
        world.roads.len(),
        world.measurements.n_hours(),
        out.display()
    );
    Ok(world)
}

/// A region's world with the feature settings to use on it.
pub struct Prepared {
    pub world: IndexedWorld,
    pub features: FeatureConfig,
    pub breakpoints: AqiBreakpoints,
}

impl Prepared {
    pub fn preset(&self) -> Preset {
        self.world.world().region.preset
    }

    pub fn predictor<'a>(&'a self, model: &'a MlpModel) -> Result<Predictor<'a>> {
        Ok(Predictor::new(
            model,
            &self.world,
            self.features.clone(),
            &self.breakpoints,
        )?)
    }

    pub fn station_indices(&self, ids: &[String]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                self.world
                    .station_index(id)
                    .with_context(|| format!("station `{id}` is not in the world"))
            })
            .collect()
    }
}

/// Loads a region's world, cleans it and builds the spatial indices. The
/// feature preset is the region's own unless `preset` overrides it.
pub fn prepare(
    cfg: &EngineConfig,
    region: &RegionConfig,
    preset: Option<Preset>,
) -> Result<Prepared> {
    let dir = cfg.world_dir(region);
    let mut world =
        World::load_dir(&dir).with_context(|| format!("loading world {}", dir.display()))?;
    if let Some(h) = cfg.hampel() {
        let removed = world.clean(&h);
        log::info!(
            "region `{}`: Hampel filter removed {removed} values",
            region.name
        );
    }
    let preset = preset.unwrap_or(world.region.preset);
    Ok(Prepared {
        features: cfg.feature_config(preset)?,
        breakpoints: cfg.breakpoints()?,
        world: IndexedWorld::new(world),
    })
}

fn all_hours(world: &IndexedWorld) -> Vec<Hour> {
    world.world().measurements.hours().collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Summary written next to the dataset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub region: String,
    pub preset: String,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub train_stations: Vec<String>,
    pub eval_stations: Vec<String>,
    /// Rows before resampling; this is the dataset size compared with the transfer threshold.
    pub train_rows_available: usize,
    pub eval_rows_available: usize,
    pub train_rows: usize,
    pub eval_rows: usize,
    /// Exposure categories with no rows, left out of the stratified sample.
    pub train_missing_categories: Vec<String>,
    pub eval_missing_categories: Vec<String>,
    pub config_fingerprint: String,
}

/// Resampled rows of one region, plus the size of the pool they came from.
pub struct RegionRows {
    pub split: DatasetSplit,
    pub feature_names: Vec<String>,
    pub train: Vec<DataRow>,
    pub eval: Vec<DataRow>,
    pub manifest: Manifest,
}

/// Splits stations, builds rows for every hour and draws the stratified samples.
pub fn region_rows(
    cfg: &EngineConfig,
    region: &RegionConfig,
    prepared: &Prepared,
    exec: Execution,
) -> Result<RegionRows> {
    let w = prepared.world.world();
    let split = split_stations(&w.stations, cfg.seed)?;
    let hours = all_hours(&prepared.world);
    let rows = |ids: &[String]| -> Result<Vec<DataRow>> {
        let idx = prepared.station_indices(ids)?;
        Ok(build_rows(
            &prepared.world,
            &idx,
            &hours,
            &prepared.features,
            &prepared.breakpoints,
            exec,
        )?)
    };
    let train_all = rows(&split.train)?;
    let eval_all = rows(&split.eval)?;
    let (train, train_missing) =
        stratified_sample_available(&train_all, cfg.samples_per_category, cfg.seed);
    let (eval, eval_missing) = stratified_sample_available(
        &eval_all,
        cfg.eval_samples_per_category,
        cfg.seed.wrapping_add(1),
    );
    for c in &train_missing {
        log::warn!(
            "region `{}`: no training rows in category {}",
            region.name,
            c.name()
        );
    }
    let feature_names = prepared.features.layout().names().to_vec();
    let manifest = Manifest {
        region: region.name.clone(),
        preset: prepared.features.preset.to_string(),
        seed: cfg.seed,
        feature_names: feature_names.clone(),
        train_stations: split.train.clone(),
        eval_stations: split.eval.clone(),
        train_rows_available: train_all.len(),
        eval_rows_available: eval_all.len(),
        train_rows: train.len(),
        eval_rows: eval.len(),
        train_missing_categories: train_missing.iter().map(|c| c.name().to_string()).collect(),
        eval_missing_categories: eval_missing.iter().map(|c| c.name().to_string()).collect(),
        config_fingerprint: cfg.fingerprint(),
    };
    Ok(RegionRows {
        split,
        feature_names,
        train,
        eval,
        manifest,
    })
}

/// Writes train.csv, eval.csv, split.csv and manifest.json for one region.
pub fn cmd_build_dataset(
    cfg: &EngineConfig,
    region: &RegionConfig,
    exec: Execution,
) -> Result<Manifest> {
    let prepared = prepare(cfg, region, None)?;
    let rr = region_rows(cfg, region, &prepared, exec)?;
    let dir = cfg.region_dir(&region.name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let dataset = |rows: Vec<DataRow>| Dataset {
        feature_names: rr.feature_names.clone(),
        rows,
    };
    dataset(rr.train).save_csv(&dir.join(TRAIN_CSV))?;
    dataset(rr.eval).save_csv(&dir.join(EVAL_CSV))?;
    rr.split.save_csv(&dir.join(SPLIT_CSV))?;
    write_json(&dir.join(MANIFEST), &rr.manifest)?;
    log::info!(
        "region `{}`: {} train rows ({} available), {} eval rows",
        region.name,
        rr.manifest.train_rows,
        rr.manifest.train_rows_available,
        rr.manifest.eval_rows
    );
    Ok(rr.manifest)
}

pub fn load_manifest(cfg: &EngineConfig, region: &str) -> Result<Manifest> {
    read_json(&cfg.region_dir(region).join(MANIFEST)).context("run build-dataset first")
}

/// How a region's model was fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Direct,
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub region: String,
    pub mode: TrainMode,
    pub preset: String,
    pub train_rows_available: usize,
    pub transfer_threshold: usize,
    pub loss_trace: Vec<f64>,
    pub model_fingerprint: String,
    pub hidden_fingerprint: String,
    /// Global model the transfer started from.
    pub global_fingerprint: Option<String>,
    pub global_hidden_fingerprint: Option<String>,
    pub config_fingerprint: String,
}

/// Trains the global model for `preset` on the training samples of every
/// global region. Regions with another preset are rebuilt in memory.
pub fn train_global(cfg: &EngineConfig, preset: Preset, exec: Execution) -> Result<MlpModel> {
    let mut data = Dataset {
        feature_names: cfg.feature_config(preset)?.layout().names().to_vec(),
        rows: Vec::new(),
    };
    for r in cfg.regions.iter().filter(|r| r.global) {
        let built = cfg.region_dir(&r.name).join(TRAIN_CSV);
        let stored = if built.is_file() {
            Some(Dataset::load_csv(&built)?)
        } else {
            None
        };
        match stored {
            Some(d) if d.feature_names == data.feature_names => data.rows.extend(d.rows),
            _ => {
                let prepared = prepare(cfg, r, Some(preset))?;
                data.rows
                    .extend(region_rows(cfg, r, &prepared, exec)?.train);
            }
        }
    }
    if data.rows.is_empty() {
        bail!("no global region provides training rows");
    }
    log::info!("global {preset} model: {} rows", data.rows.len());
    let model = train(&data, &preset.to_string(), &cfg.train_config(exec))?.model;
    let dir = cfg.out_dir().join("global").join(preset.to_string());
    fs::create_dir_all(&dir)?;
    model.save(&dir.join(MODEL))?;
    Ok(model)
}

/// Trains one region. Non-global regions with fewer available training rows
/// than the threshold get a transfer fit of the global model, and the global
/// and regional-only models are saved next to it for comparison.
pub fn cmd_train(
    cfg: &EngineConfig,
    region: &RegionConfig,
    globals: &mut HashMap<Preset, MlpModel>,
    exec: Execution,
) -> Result<TrainLog> {
    let manifest = load_manifest(cfg, &region.name)?;
    let dir = cfg.region_dir(&region.name);
    let data = Dataset::load_csv(&dir.join(TRAIN_CSV))?;
    if data.feature_names != manifest.feature_names {
        bail!(
            "{} does not match the manifest; rerun build-dataset",
            TRAIN_CSV
        );
    }
    let preset: Preset = manifest.preset.parse()?;
    let tc = cfg.train_config(exec);
    let small = manifest.train_rows_available < cfg.transfer_threshold;
    let has_global = cfg
        .regions
        .iter()
        .any(|r| r.global && r.name != region.name);
    if small && !region.global && !has_global {
        log::warn!(
            "region `{}` is below the transfer threshold but no global region is configured",
            region.name
        );
    }
    let (mode, outcome, global) = if small && !region.global && has_global {
        let global = match globals.entry(preset) {
            std::collections::hash_map::Entry::Occupied(e) => &*e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(train_global(cfg, preset, exec)?)
            }
        };
        let outcome = transfer_fit(global, &data, &tc)?;
        global.save(&dir.join(GLOBAL_MODEL))?;
        train(&data, &manifest.preset, &tc)?
            .model
            .save(&dir.join(REGIONAL_MODEL))?;
        (TrainMode::Transfer, outcome, Some(global))
    } else {
        for stale in [GLOBAL_MODEL, REGIONAL_MODEL] {
            let _ = fs::remove_file(dir.join(stale));
        }
        (
            TrainMode::Direct,
            train(&data, &manifest.preset, &tc)?,
            None,
        )
    };
    outcome.model.save(&dir.join(MODEL))?;
    let log = TrainLog {
        region: region.name.clone(),
        mode,
        preset: manifest.preset.clone(),
        train_rows_available: manifest.train_rows_available,
        transfer_threshold: cfg.transfer_threshold,
        loss_trace: outcome.loss_trace,
        model_fingerprint: outcome.model.fingerprint(),
        hidden_fingerprint: outcome.model.hidden_fingerprint(),
        global_fingerprint: global.map(MlpModel::fingerprint),
        global_hidden_fingerprint: global.map(MlpModel::hidden_fingerprint),
        config_fingerprint: cfg.fingerprint(),
    };
    write_json(&dir.join(TRAIN_LOG), &log)?;
    log::info!(
        "region `{}`: {:?} training, final loss {:?}",
        region.name,
        mode,
        log.loss_trace.last()
    );
    Ok(log)
}

pub fn load_model(cfg: &EngineConfig, region: &str) -> Result<MlpModel> {
    let path = cfg.region_dir(region).join(MODEL);
    MlpModel::load(&path).with_context(|| format!("loading {} (run train first)", path.display()))
}

/// Evaluation results of one run.
pub struct EvalOutcome {
    pub report: EvalReport,
    pub transfer: Vec<(String, TransferComparison)>,
}

fn transfer_csv(rows: &[(String, TransferComparison)]) -> String {
    let mut out = String::from("region,global_msle,regional_msle,transfer_msle,selected\n");
    for (name, c) in rows {
        out.push_str(&format!(
            "{name},{},{},{},{}\n",
            c.global, c.regional, c.transfer, c.selected
        ));
    }
    out
}

/// Scores each region's model and the nearest-station benchmark on its eval
/// rows. The benchmark only uses training stations. Writes report.csv,
/// report.txt and, when transfer regions exist, transfer.csv into `out_dir`.
pub fn cmd_eval(
    cfg: &EngineConfig,
    regions: &[&RegionConfig],
    exec: Execution,
) -> Result<EvalOutcome> {
    let mut report = EvalReport {
        config_fingerprint: cfg.fingerprint(),
        regions: Vec::new(),
    };
    let mut transfer = Vec::new();
    for region in regions {
        let dir = cfg.region_dir(&region.name);
        let prepared = prepare(cfg, region, None)?;
        let split = DatasetSplit::load_csv(&dir.join(SPLIT_CSV))?;
        let candidates = prepared.station_indices(&split.train)?;
        let data = Dataset::load_csv(&dir.join(EVAL_CSV))?;
        let model = load_model(cfg, &region.name)?;
        if model.feature_names() != data.feature_names {
            bail!(
                "region `{}`: model features differ from {}",
                region.name,
                EVAL_CSV
            );
        }
        let preds = model_predictions(&model, &data.rows, exec)?;
        let bench = benchmark_predictions(&prepared.world, &candidates, &data.rows, exec)?;
        report
            .regions
            .push(evaluate(&region.name, &data.rows, &preds, &bench)?);
        let (g, r) = (dir.join(GLOBAL_MODEL), dir.join(REGIONAL_MODEL));
        if g.is_file() && r.is_file() {
            let c = compare_transfer(
                &MlpModel::load(&g)?,
                &MlpModel::load(&r)?,
                &model,
                &data.rows,
                exec,
            )?;
            transfer.push((region.name.clone(), c));
        }
    }
    let out = cfg.out_dir();
    fs::create_dir_all(&out)?;
    fs::write(out.join("report.csv"), report.to_csv())?;
    fs::write(out.join("report.txt"), report.to_string())?;
    if !transfer.is_empty() {
        fs::write(out.join("transfer.csv"), transfer_csv(&transfer))?;
    }
    Ok(EvalOutcome { report, transfer })
}

/// Clamps `hour` into the measured period of `table`.
pub fn snap_hour(table: &MeasurementTable, hour: Hour) -> Hour {
    let first = table.start();
    let last = first.offset(table.n_hours().saturating_sub(1) as i64);
    hour.clamp(first, last)
}

/// Snapped query hour; the last measured hour when none is given.
pub fn query_hour(table: &MeasurementTable, time: Option<&str>) -> Result<Hour> {
    let last = table
        .start()
        .offset(table.n_hours().saturating_sub(1) as i64);
    Ok(match time {
        Some(t) => snap_hour(table, Hour::parse_nearest(t)?),
        None => last,
    })
}

/// Response document of a point prediction. Concentrations are in µg/m³.
pub fn prediction_document(p: &PointPrediction, feature_names: &[String]) -> Value {
    let conc: serde_json::Map<String, Value> = POLLUTANTS
        .iter()
        .map(|q| (q.key().to_string(), json!(p.concentrations[q.index()])))
        .collect();
    let imputed: Vec<&String> = feature_names
        .iter()
        .zip(&p.imputed)
        .filter(|(_, &i)| i)
        .map(|(n, _)| n)
        .collect();
    json!({
        "lat": p.location.lat(),
        "lon": p.location.lon(),
        "time": p.hour.to_string(),
        "concentrations": conc,
        "paqi": p.paqi,
        "category": p.category.name(),
        "imputed": imputed,
    })
}

/// Prediction at one point and time, as returned by the service.
pub fn predict_point(
    prepared: &Prepared,
    model: &MlpModel,
    lat: f64,
    lon: f64,
    time: Option<&str>,
) -> Result<Value> {
    let l = GeoPoint::new(lat, lon)?;
    let hour = query_hour(&prepared.world.world().measurements, time)?;
    let p = prepared.predictor(model)?.predict(&l, hour)?;
    Ok(prediction_document(&p, model.feature_names()))
}

/// Renders a map of `bbox` (the whole region when absent) and saves
/// `map.csv` plus optional PNGs into `out`.
#[allow(clippy::too_many_arguments)]
pub fn cmd_map(
    cfg: &EngineConfig,
    region: &RegionConfig,
    time: Option<&str>,
    bbox: Option<BoundingBox>,
    cell_m: f64,
    png: bool,
    out: Option<&Path>,
    exec: Execution,
) -> Result<GridMap> {
    let prepared = prepare(cfg, region, None)?;
    let model = load_model(cfg, &region.name)?;
    let predictor = prepared.predictor(&model)?;
    let hour = query_hour(&prepared.world.world().measurements, time)?;
    let bbox = bbox.unwrap_or_else(|| predictor.coverage());
    let map = render_grid(&predictor, &bbox, cell_m, hour, exec)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.region_dir(&region.name));
    fs::create_dir_all(&dir)?;
    map.save_all(&dir, "map", png)?;
    log::info!(
        "map {}x{} cells at {hour} -> {}",
        map.rows,
        map.cols,
        dir.display()
    );
    Ok(map)
}

/// Plans a route between the road nodes nearest to `from` and `to`.
pub fn plan_route(
    prepared: &Prepared,
    model: &MlpModel,
    graph: &RoadGraph,
    from: GeoPoint,
    to: GeoPoint,
    hour: Hour,
    exec: Execution,
) -> Result<(RoadGraph, RoutePlan)> {
    let predictor = prepared.predictor(model)?;
    let coverage = predictor.coverage();
    for p in [&from, &to] {
        if !coverage.contains(p) {
            return Err(aqmap_core::Error::OutOfCoverage(format!(
                "({}, {}) is outside the region",
                p.lat(),
                p.lon()
            ))
            .into());
        }
    }
    let annotated = annotate_paqi(graph, &predictor, hour, exec)?;
    let plan = route_between(&annotated, from, to)?;
    Ok((annotated, plan))
}

/// Route between the nodes nearest to two points of an annotated graph.
pub fn route_between(graph: &RoadGraph, from: GeoPoint, to: GeoPoint) -> Result<RoutePlan> {
    let a = graph.nearest_node(&from).context("road graph is empty")?;
    let b = graph.nearest_node(&to).context("road graph is empty")?;
    Ok(route(graph, a, b)?)
}

/// Route document: the GeoJSON pair plus the query hour.
pub fn route_document(graph: &RoadGraph, plan: &RoutePlan, hour: Hour) -> Value {
    let mut doc = plan.to_geojson(graph);
    doc["properties"]["time"] = json!(hour.to_string());
    doc
}

/// Computes both routes and writes `route.geojson` into `out`.
pub fn cmd_route(
    cfg: &EngineConfig,
    region: &RegionConfig,
    from: GeoPoint,
    to: GeoPoint,
    time: Option<&str>,
    out: Option<&Path>,
    exec: Execution,
) -> Result<Value> {
    let prepared = prepare(cfg, region, None)?;
    let model = load_model(cfg, &region.name)?;
    let hour = query_hour(&prepared.world.world().measurements, time)?;
    let graph = build_graph(&prepared.world.world().roads);
    let (annotated, plan) = plan_route(&prepared, &model, &graph, from, to, hour, exec)?;
    let doc = route_document(&annotated, &plan, hour);
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.region_dir(&region.name).join("route.geojson"));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    write_json(&path, &doc)?;
    log::info!("route: {}", plan.summary());
    Ok(doc)
}

/// Partial dependence of `feature` over a seeded sample of the training rows;
/// writes `pdp_<feature>.csv`.
pub fn cmd_pdp(
    cfg: &EngineConfig,
    region: &RegionConfig,
    feature: &str,
    out: Option<&Path>,
    exec: Execution,
) -> Result<Vec<PdpPoint>> {
    let dir = cfg.region_dir(&region.name);
    let data = Dataset::load_csv(&dir.join(TRAIN_CSV))?;
    let model = load_model(cfg, &region.name)?;
    let sample = pdp_sample(&data.rows, PDP_SAMPLE, cfg.seed);
    let points = partial_dependence(&model, &sample, feature, None, exec)?;
    let path: PathBuf = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join(format!("pdp_{feature}.csv")));
    fs::write(&path, pdp_csv(&points)).with_context(|| format!("writing {}", path.display()))?;
    Ok(points)
}
