//! Nearest-station benchmark, paired MSLE reports, transfer-strategy
//! comparison and partial dependence.

use std::fmt;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::DataRow;
use crate::features::IndexedWorld;
use crate::geo::{distance_km, GeoPoint};
use crate::model::{msle_loss, MlpModel, N_OUTPUTS};
use crate::{Concentrations, Error, Execution, Hour, Pollutant, Result, POLLUTANTS};

/// Rows sampled for partial dependence.
pub const PDP_SAMPLE: usize = 2000;
/// Grid points of the default partial dependence grid.
pub const PDP_GRID: usize = 20;

/// Value of `p` at `hour` from the closest of `candidates` reporting it;
/// equal distances go to the smaller station id.
pub fn nearest_station_predict(
    world: &IndexedWorld,
    candidates: &[usize],
    hour: Hour,
    l: &GeoPoint,
    p: Pollutant,
) -> Option<f64> {
    let w = world.world();
    let values = w.measurements.at_hour(hour)?;
    let mut best: Option<(f64, &str, f64)> = None;
    for &s in candidates {
        let v = values[s][p.index()];
        if v.is_nan() {
            continue;
        }
        let d = distance_km(&world.station_location(s), l);
        let id = w.stations[s].id.as_str();
        if best.is_none_or(|(bd, bid, _)| d < bd || (d == bd && id < bid)) {
            best = Some((d, id, v));
        }
    }
    best.map(|(_, _, v)| v)
}

/// Benchmark predictions for each row, using the stations in `candidates`.
pub fn benchmark_predictions(
    world: &IndexedWorld,
    candidates: &[usize],
    rows: &[DataRow],
    exec: Execution,
) -> Result<Vec<Concentrations>> {
    exec.map(rows, |r| {
        let s = world.station_index(&r.station_id).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "row station `{}` is not in the world",
                r.station_id
            ))
        })?;
        let l = world.station_location(s);
        Ok(POLLUTANTS.map(|p| nearest_station_predict(world, candidates, r.hour, &l, p)))
    })
    .into_iter()
    .collect()
}

/// Clamped model predictions for each row's raw features.
pub fn model_predictions(
    model: &MlpModel,
    rows: &[DataRow],
    exec: Execution,
) -> Result<Vec<[f64; N_OUTPUTS]>> {
    exec.map(rows, |r| model.predict(&r.features.values))
        .into_iter()
        .collect()
}

/// `100·(model − benchmark)/benchmark`.
pub fn improvement_pct(benchmark: f64, model: f64) -> f64 {
    100.0 * (model - benchmark) / benchmark
}

/// Paired MSLE of the benchmark and the model over the same (row, pollutant) pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub benchmark_msle: f64,
    pub model_msle: f64,
    /// Pairs with a target and a benchmark value.
    pub count: usize,
    /// Pairs with a target but no benchmark value.
    pub excluded: usize,
}

impl Score {
    pub fn improvement_pct(&self) -> f64 {
        improvement_pct(self.benchmark_msle, self.model_msle)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionEval {
    pub region: String,
    pub overall: Score,
    /// `None` for pollutants without paired values.
    pub per_pollutant: [Option<Score>; N_OUTPUTS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config_fingerprint: String,
    pub regions: Vec<RegionEval>,
}

fn sq_log_err(pred: f64, target: f64) -> f64 {
    let d = pred.max(0.0).ln_1p() - target.ln_1p();
    d * d
}

/// Sum that does not depend on the order of `terms`.
fn order_free_mean(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum::<f64>() / terms.len() as f64
}

/// Scores one region's rows. Pairs where the benchmark is NA are dropped for
/// both predictors and counted as excluded.
pub fn evaluate(
    region: &str,
    rows: &[DataRow],
    model: &[[f64; N_OUTPUTS]],
    benchmark: &[Concentrations],
) -> Result<RegionEval> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset("no evaluation rows".into()));
    }
    for n in [model.len(), benchmark.len()] {
        if n != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                actual: n,
            });
        }
    }
    let mut terms: [(Vec<f64>, Vec<f64>); N_OUTPUTS] = Default::default();
    let mut excluded = [0usize; N_OUTPUTS];
    for ((r, m), b) in rows.iter().zip(model).zip(benchmark) {
        for k in 0..N_OUTPUTS {
            let Some(y) = r.targets[k] else { continue };
            match b[k] {
                Some(bv) => {
                    terms[k].0.push(sq_log_err(bv, y));
                    terms[k].1.push(sq_log_err(m[k], y));
                }
                None => excluded[k] += 1,
            }
        }
    }
    let score = |b: Vec<f64>, m: Vec<f64>, excluded: usize| Score {
        count: b.len(),
        benchmark_msle: order_free_mean(b),
        model_msle: order_free_mean(m),
        excluded,
    };
    let all_b: Vec<f64> = terms.iter().flat_map(|t| t.0.iter().copied()).collect();
    let all_m: Vec<f64> = terms.iter().flat_map(|t| t.1.iter().copied()).collect();
    if all_b.is_empty() {
        return Err(Error::EmptyDataset(
            "no target has a benchmark value".into(),
        ));
    }
    let overall = score(all_b, all_m, excluded.iter().sum());
    let mut per_pollutant = [None; N_OUTPUTS];
    for (k, (b, m)) in terms.into_iter().enumerate() {
        if !b.is_empty() {
            per_pollutant[k] = Some(score(b, m, excluded[k]));
        }
    }
    Ok(RegionEval {
        region: region.to_string(),
        overall,
        per_pollutant,
    })
}

impl EvalReport {
    /// `region,pollutant,benchmark_msle,model_msle,improvement_pct,count,excluded`;
    /// the pollutant column is `all` for the overall line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "region,pollutant,benchmark_msle,model_msle,improvement_pct,count,excluded\n",
        );
        for r in &self.regions {
            let lines = std::iter::once(("all", Some(r.overall))).chain(
                POLLUTANTS
                    .iter()
                    .map(|p| (p.name(), r.per_pollutant[p.index()])),
            );
            for (name, s) in lines {
                if let Some(s) = s {
                    let _ = writeln!(
                        out,
                        "{},{name},{},{},{:.1},{},{}",
                        r.region,
                        s.benchmark_msle,
                        s.model_msle,
                        s.improvement_pct(),
                        s.count,
                        s.excluded
                    );
                }
            }
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "MSLE on the evaluation stations (config {})",
            self.config_fingerprint
        )?;
        writeln!(
            f,
            "{:<20} {:>10} {:>10} {:>12} {:>8}",
            "Region", "Benchmark", "Model", "Improvement", "Pairs"
        )?;
        for r in &self.regions {
            let s = r.overall;
            writeln!(
                f,
                "{:<20} {:>10.3} {:>10.3} {:>11.1}% {:>8}",
                r.region,
                s.benchmark_msle,
                s.model_msle,
                s.improvement_pct(),
                s.count
            )?;
        }
        for r in &self.regions {
            writeln!(f, "\n{}: per pollutant", r.region)?;
            writeln!(
                f,
                "{:<20} {:>10} {:>10} {:>12} {:>8}",
                "Pollutant", "Benchmark", "Model", "Improvement", "Pairs"
            )?;
            for p in POLLUTANTS {
                if let Some(s) = r.per_pollutant[p.index()] {
                    writeln!(
                        f,
                        "{:<20} {:>10.3} {:>10.3} {:>11.1}% {:>8}",
                        p.name(),
                        s.benchmark_msle,
                        s.model_msle,
                        s.improvement_pct(),
                        s.count
                    )?;
                }
                if let Some(s) = r.per_pollutant[p.index()].filter(|s| s.excluded > 0) {
                    writeln!(
                        f,
                        "{:<20} {} pairs without a benchmark value were excluded",
                        "", s.excluded
                    )?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Global,
    Regional,
    Transfer,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Global => "global",
            Strategy::Regional => "regional",
            Strategy::Transfer => "transfer",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferComparison {
    pub global: f64,
    pub regional: f64,
    pub transfer: f64,
    pub selected: Strategy,
}

/// The strategy with the lowest MSLE; ties prefer transfer, then regional.
pub fn select_strategy(global: f64, regional: f64, transfer: f64) -> TransferComparison {
    let selected = if transfer <= global && transfer <= regional {
        Strategy::Transfer
    } else if regional <= global {
        Strategy::Regional
    } else {
        Strategy::Global
    };
    TransferComparison {
        global,
        regional,
        transfer,
        selected,
    }
}

/// Masked MSLE of the three models on the same rows.
pub fn compare_transfer(
    global: &MlpModel,
    regional: &MlpModel,
    transfer: &MlpModel,
    rows: &[DataRow],
    exec: Execution,
) -> Result<TransferComparison> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset("no evaluation rows".into()));
    }
    let targets: Vec<Concentrations> = rows.iter().map(|r| r.targets).collect();
    let loss =
        |m: &MlpModel| -> Result<f64> { msle_loss(&model_predictions(m, rows, exec)?, &targets) };
    Ok(select_strategy(
        loss(global)?,
        loss(regional)?,
        loss(transfer)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdpPoint {
    pub value: f64,
    pub mean: [f64; N_OUTPUTS],
}

/// Up to `n` rows drawn without replacement, in their original order.
pub fn pdp_sample(rows: &[DataRow], n: usize, seed: u64) -> Vec<Vec<f64>> {
    if rows.len() <= n {
        return rows.iter().map(|r| r.features.values.clone()).collect();
    }
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), rows.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter()
        .map(|i| rows[i].features.values.clone())
        .collect()
}

/// Linear-interpolation quantiles of the finite values at `levels` in [0, 1].
pub fn quantiles(values: &[f64], levels: &[f64]) -> Option<Vec<f64>> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let last = (v.len() - 1) as f64;
    Some(
        levels
            .iter()
            .map(|q| {
                let pos = q.clamp(0.0, 1.0) * last;
                let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
                v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
            })
            .collect(),
    )
}

/// `PDP_GRID` evenly spaced quantiles (minimum to maximum) of one feature.
pub fn default_grid(rows: &[Vec<f64>], feature: usize) -> Option<Vec<f64>> {
    let values: Vec<f64> = rows.iter().map(|r| r[feature]).collect();
    let levels: Vec<f64> = (0..PDP_GRID)
        .map(|i| i as f64 / (PDP_GRID - 1) as f64)
        .collect();
    quantiles(&values, &levels)
}

/// Mean clamped prediction over `rows` with `feature` set to each grid value.
/// Without a grid, [`default_grid`] is used.
pub fn partial_dependence(
    model: &MlpModel,
    rows: &[Vec<f64>],
    feature: &str,
    grid: Option<&[f64]>,
    exec: Execution,
) -> Result<Vec<PdpPoint>> {
    let f = model
        .feature_names()
        .iter()
        .position(|n| n == feature)
        .ok_or_else(|| Error::UnknownFeature(feature.to_string()))?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset("no rows for partial dependence".into()));
    }
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => default_grid(rows, f).ok_or_else(|| {
            Error::UndefinedInput(format!("feature `{feature}` has no observed values"))
        })?,
    };
    exec.map(&grid, |&v| {
        let mut x = Vec::new();
        let mut sum = [0.0; N_OUTPUTS];
        for r in rows {
            x.clone_from(r);
            x[f] = v;
            let y = model.predict(&x)?;
            for k in 0..N_OUTPUTS {
                sum[k] += y[k];
            }
        }
        Ok(PdpPoint {
            value: v,
            mean: sum.map(|s| s / rows.len() as f64),
        })
    })
    .into_iter()
    .collect()
}

/// `value,no2,o3,pm25,pm10` lines.
pub fn pdp_csv(points: &[PdpPoint]) -> String {
    let mut out = String::from("value");
    for p in POLLUTANTS {
        out.push(',');
        out.push_str(p.key());
    }
    out.push('\n');
    for pt in points {
        let _ = write!(out, "{}", pt.value);
        for m in pt.mean {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
    }
    out
}
