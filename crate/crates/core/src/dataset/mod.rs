//! Training and evaluation rows: exposure index, station split,
//! leave-station-out feature rows and stratified resampling.

mod aqi;

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use aqi::{AqiBreakpoints, ExposureCategory, CATEGORIES};

use crate::features::{FeatureConfig, FeatureVector, IndexedWorld, LocationCache};
use crate::ingest::io::{create, open, read_csv};
use crate::ingest::Station;
use crate::{Concentrations, Error, Execution, Hour, Result, POLLUTANTS};

/// Minimum number of stations a region needs to be split.
pub const MIN_STATIONS: usize = 5;
pub const TRAIN_FRACTION: f64 = 0.8;

/// One station at one hour: features computed without that station, and its measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct DataRow {
    pub features: FeatureVector,
    pub targets: Concentrations,
    pub station_id: String,
    pub hour: Hour,
    pub region: String,
    pub category: ExposureCategory,
}

/// Rows sharing one feature layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<DataRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub eval: Vec<String>,
    pub seed: u64,
}

/// Shuffles stations with `seed` and assigns the first `round(0.8·n)` to training.
pub fn split_stations(stations: &[Station], seed: u64) -> Result<DatasetSplit> {
    if stations.len() < MIN_STATIONS {
        return Err(Error::TooFewStations {
            needed: MIN_STATIONS,
            actual: stations.len(),
        });
    }
    let mut ids: Vec<String> = stations.iter().map(|s| s.id.clone()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (TRAIN_FRACTION * ids.len() as f64).round() as usize;
    let eval = ids.split_off(n_train);
    Ok(DatasetSplit {
        train: ids,
        eval,
        seed,
    })
}

/// One row per (hour, station) with at least one present measurement, in
/// hour-major order. Station features exclude the row's own station.
pub fn build_rows(
    world: &IndexedWorld,
    stations: &[usize],
    hours: &[Hour],
    config: &FeatureConfig,
    breakpoints: &AqiBreakpoints,
    exec: Execution,
) -> Result<Vec<DataRow>> {
    config.validate()?;
    let layout = config.layout();
    let w = world.world();
    // One job per station so the hour-independent sums are computed once.
    let per_station = exec.map(stations, |&s| {
        let station = &w.stations[s];
        let mut cache = LocationCache::default();
        let mut rows = Vec::new();
        for &hour in hours {
            let Some(values) = w.measurements.get(hour, s) else {
                continue;
            };
            if values.iter().all(|v| v.is_nan()) {
                continue;
            }
            let raw = world.raw_features_cached(
                &layout,
                &station.location,
                hour,
                config.truncation,
                &[s],
                &mut cache,
            )?;
            let targets = values.map(|v| (!v.is_nan()).then_some(v));
            let category = breakpoints.categorize(breakpoints.paqi(&targets)?);
            rows.push(DataRow {
                features: FeatureVector::from_raw(raw),
                targets,
                station_id: station.id.clone(),
                hour,
                region: w.region.name.clone(),
                category,
            });
        }
        Ok(rows)
    });
    // Rows are ordered by hour, then by station.
    let mut per_station = per_station
        .into_iter()
        .collect::<Result<Vec<Vec<DataRow>>>>()?;
    let mut rows: Vec<DataRow> = per_station.iter_mut().flat_map(std::mem::take).collect();
    let hour_rank: HashMap<Hour, usize> = hours.iter().enumerate().map(|(i, h)| (*h, i)).collect();
    rows.sort_by_key(|r| hour_rank[&r.hour]);
    Ok(rows)
}

/// Row indices per exposure category.
pub fn category_indices(rows: &[DataRow]) -> [Vec<usize>; 4] {
    let mut out: [Vec<usize>; 4] = Default::default();
    for (i, r) in rows.iter().enumerate() {
        out[r.category.index()].push(i);
    }
    out
}

fn draw(rows: &[DataRow], pools: &[&Vec<usize>], n: usize, seed: u64) -> Vec<DataRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n * pools.len());
    for pool in pools {
        for _ in 0..n {
            out.push(rows[pool[rng.random_range(0..pool.len())]].clone());
        }
    }
    out
}

/// Draws exactly `n_per_category` rows with replacement from each category,
/// Low to VeryHigh.
pub fn stratified_sample(
    rows: &[DataRow],
    n_per_category: usize,
    seed: u64,
) -> Result<Vec<DataRow>> {
    let pools = category_indices(rows);
    if let Some(c) = CATEGORIES.iter().find(|c| pools[c.index()].is_empty()) {
        return Err(Error::EmptyCategory(c.name()));
    }
    Ok(draw(
        rows,
        &pools.iter().collect::<Vec<_>>(),
        n_per_category,
        seed,
    ))
}

/// Like [`stratified_sample`] but skips empty categories, returning them.
pub fn stratified_sample_available(
    rows: &[DataRow],
    n_per_category: usize,
    seed: u64,
) -> (Vec<DataRow>, Vec<ExposureCategory>) {
    let pools = category_indices(rows);
    let missing: Vec<ExposureCategory> = CATEGORIES
        .into_iter()
        .filter(|c| pools[c.index()].is_empty())
        .collect();
    let present: Vec<&Vec<usize>> = pools.iter().filter(|p| !p.is_empty()).collect();
    (draw(rows, &present, n_per_category, seed), missing)
}

const META_COLUMNS: [&str; 4] = ["station_id", "timestamp", "region", "category"];

fn target_column(i: usize) -> String {
    format!("target_{}", POLLUTANTS[i].key())
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn header(&self) -> Vec<String> {
        let mut h = self.feature_names.clone();
        h.extend((0..4).map(target_column));
        h.extend(META_COLUMNS.iter().map(|s| s.to_string()));
        h
    }

    /// Writes one line per row; NA features and targets are empty cells.
    /// Imputed feature values are written as NA.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(out, "{}", self.header().join(",")).map_err(io)?;
        let mut line = String::new();
        for r in &self.rows {
            line.clear();
            for (v, na) in r.features.values.iter().zip(&r.features.imputed) {
                line.push_str(&if *na { String::new() } else { fmt_value(*v) });
                line.push(',');
            }
            for t in &r.targets {
                line.push_str(&t.map(fmt_value).unwrap_or_default());
                line.push(',');
            }
            line.push_str(&format!(
                "{},{},{},{}",
                r.station_id, r.hour, r.region, r.category
            ));
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Reads a file written by [`Dataset::save_csv`]; the feature names come from the header.
    pub fn load_csv(path: &Path) -> Result<Dataset> {
        let mut first = String::new();
        {
            use std::io::BufRead;
            std::io::BufReader::new(open(path)?)
                .read_line(&mut first)
                .map_err(|e| Error::io(path, e))?;
        }
        let cols: Vec<String> = first
            .trim()
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let n_meta = 4 + META_COLUMNS.len();
        if cols.len() < n_meta || cols[cols.len() - META_COLUMNS.len()..] != META_COLUMNS {
            return Err(Error::ingest(
                path,
                1,
                "dataset header must end with target and metadata columns",
            ));
        }
        let n_feat = cols.len() - n_meta;
        for i in 0..4 {
            if cols[n_feat + i] != target_column(i) {
                return Err(Error::ingest(
                    path,
                    1,
                    format!("expected column `{}`", target_column(i)),
                ));
            }
        }
        let header: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut rows = Vec::new();
        read_csv(open(path)?, path, &header, |line, rec| {
            let num = |s: &str| -> Result<f64> {
                if s.is_empty() {
                    return Ok(f64::NAN);
                }
                s.parse::<f64>()
                    .map_err(|_| Error::ingest(path, line, format!("invalid number `{s}`")))
            };
            let values = (0..n_feat)
                .map(|i| num(&rec[i]))
                .collect::<Result<Vec<_>>>()?;
            let mut targets = [None; 4];
            for (i, t) in targets.iter_mut().enumerate() {
                let v = num(&rec[n_feat + i])?;
                *t = (!v.is_nan()).then_some(v);
            }
            let meta = n_feat + 4;
            rows.push(DataRow {
                features: FeatureVector::from_raw(values),
                targets,
                station_id: rec[meta].to_string(),
                hour: Hour::parse(&rec[meta + 1])
                    .map_err(|e| Error::ingest(path, line, e.to_string()))?,
                region: rec[meta + 2].to_string(),
                category: rec[meta + 3]
                    .parse()
                    .map_err(|e: Error| Error::ingest(path, line, e.to_string()))?,
            });
            Ok(())
        })?;
        Ok(Dataset {
            feature_names: cols[..n_feat].to_vec(),
            rows,
        })
    }
}

impl DatasetSplit {
    /// `role,station_id` lines, training stations first.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(out, "role,station_id").map_err(io)?;
        for id in &self.train {
            writeln!(out, "train,{id}").map_err(io)?;
        }
        for id in &self.eval {
            writeln!(out, "eval,{id}").map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Reads a file written by [`DatasetSplit::save_csv`]. The seed is not stored and comes back as 0.
    pub fn load_csv(path: &Path) -> Result<DatasetSplit> {
        let mut split = DatasetSplit {
            train: Vec::new(),
            eval: Vec::new(),
            seed: 0,
        };
        read_csv(open(path)?, path, &["role", "station_id"], |line, rec| {
            match &rec[0] {
                "train" => split.train.push(rec[1].to_string()),
                "eval" => split.eval.push(rec[1].to_string()),
                other => return Err(Error::ingest(path, line, format!("unknown role `{other}`"))),
            }
            Ok(())
        })?;
        Ok(split)
    }
}
