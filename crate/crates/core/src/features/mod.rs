//! Kernel spatial features at an arbitrary (location, hour).
//!
//! Every station-, road-, land- and plant-based feature is a sum of
//! `exp(-distance / d)` weights. Station features are always summed over all
//! stations. Road, land-cover and power-plant features either sum over every
//! source ([`Truncation::Exact`]) or only over nearby sources
//! ([`Truncation::Truncated`]). Truncated sums start at `10·d`, where each
//! dropped source weighs at most `e⁻¹⁰`, and widen until the weight that could
//! remain outside is below `TRUNCATION_TOLERANCE` of the sum.

mod atmos;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

pub use atmos::bilinear;

use crate::geo::{check_bandwidth, distance_km, kernel_at, GeoPoint, SpatialIndex};
use crate::ingest::{LandCategory, World};
use crate::{Error, Hour, Pollutant, Result, POLLUTANTS};

/// Truncation radius in multiples of the kernel distance.
pub const TRUNCATION_FACTOR: f64 = 10.0;

/// Largest share of a truncated kernel sum that the sources left outside may
/// carry. Half of the 1e-3 target, so that ratios of two sums (land shares)
/// stay within it as well.
pub const TRUNCATION_TOLERANCE: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Station, atmospheric, traffic, road and all land-cover features.
    Full,
    /// No traffic or industry features and a single aggregate station counter.
    Reduced,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Full => "full",
            Preset::Reduced => "reduced",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Preset::Full),
            "reduced" => Ok(Preset::Reduced),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truncation {
    Exact,
    #[default]
    Truncated,
}

impl Truncation {
    fn radius(self, d_km: f64) -> Option<f64> {
        match self {
            Truncation::Exact => None,
            Truncation::Truncated => Some(TRUNCATION_FACTOR * d_km),
        }
    }
}

impl FromStr for Truncation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Truncation::Exact),
            "truncated" => Ok(Truncation::Truncated),
            other => Err(Error::InvalidParameter(format!(
                "unknown truncation mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub preset: Preset,
    pub station_distances: Vec<f64>,
    pub counter_distance: f64,
    pub activity_distance: f64,
    pub truncation: Truncation,
    pub power_plants: bool,
    pub power_plant_distance: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            preset: Preset::Full,
            station_distances: vec![1.0, 10.0, 100.0],
            counter_distance: 10.0,
            activity_distance: 0.1,
            truncation: Truncation::Truncated,
            power_plants: false,
            power_plant_distance: 10.0,
        }
    }
}

impl FeatureConfig {
    pub fn with_preset(preset: Preset) -> Self {
        FeatureConfig {
            preset,
            ..FeatureConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for d in self.station_distances.iter().chain([
            &self.counter_distance,
            &self.activity_distance,
            &self.power_plant_distance,
        ]) {
            check_bandwidth(*d)?;
        }
        Ok(())
    }

    /// Ordered features for this configuration.
    pub fn layout(&self) -> FeatureLayout {
        let mut kinds = Vec::new();
        for &d in &self.station_distances {
            for p in POLLUTANTS {
                kinds.push(FeatureKind::StationsMeasures { d, p });
            }
        }
        match self.preset {
            Preset::Full => {
                for p in POLLUTANTS {
                    kinds.push(FeatureKind::StationsCounters {
                        d: self.counter_distance,
                        p: Some(p),
                    });
                }
            }
            Preset::Reduced => kinds.push(FeatureKind::StationsCounters {
                d: self.counter_distance,
                p: None,
            }),
        }
        for p in POLLUTANTS {
            kinds.push(FeatureKind::AtmosphericModel { p });
        }
        let d = self.activity_distance;
        if self.preset == Preset::Full {
            kinds.push(FeatureKind::Traffic { d });
        }
        kinds.push(FeatureKind::Roads { d });
        kinds.push(FeatureKind::MajorRoads { d });
        if self.preset == Preset::Full {
            kinds.push(FeatureKind::Land {
                d,
                category: LandCategory::Industry,
            });
        }
        kinds.push(FeatureKind::Land {
            d,
            category: LandCategory::Residential,
        });
        kinds.push(FeatureKind::Land {
            d,
            category: LandCategory::Green,
        });
        if self.power_plants {
            kinds.push(FeatureKind::PowerPlants {
                d: self.power_plant_distance,
            });
        }
        FeatureLayout::new(kinds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureKind {
    StationsMeasures {
        d: f64,
        p: Pollutant,
    },
    /// `p = None` counts stations reporting any pollutant.
    StationsCounters {
        d: f64,
        p: Option<Pollutant>,
    },
    AtmosphericModel {
        p: Pollutant,
    },
    Traffic {
        d: f64,
    },
    Roads {
        d: f64,
    },
    MajorRoads {
        d: f64,
    },
    Land {
        d: f64,
        category: LandCategory,
    },
    PowerPlants {
        d: f64,
    },
}

impl FeatureKind {
    pub fn name(&self) -> String {
        match self {
            FeatureKind::StationsMeasures { d, p } => format!("StationsMeasures_{d}_{p}"),
            FeatureKind::StationsCounters { d, p: Some(p) } => format!("StationsCounters_{d}_{p}"),
            FeatureKind::StationsCounters { d, p: None } => format!("StationsCounters_{d}"),
            FeatureKind::AtmosphericModel { p } => format!("AtmosphericModel_{p}"),
            FeatureKind::Traffic { d } => format!("Traffic_{d}"),
            FeatureKind::Roads { d } => format!("Roads_{d}"),
            FeatureKind::MajorRoads { d } => format!("MajorRoads_{d}"),
            FeatureKind::Land { d, category } => format!("{category}_{d}"),
            FeatureKind::PowerPlants { d } => format!("PowerPlants_{d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayout {
    kinds: Vec<FeatureKind>,
    names: Vec<String>,
}

impl FeatureLayout {
    pub fn new(kinds: Vec<FeatureKind>) -> Self {
        let names = kinds.iter().map(FeatureKind::name).collect();
        FeatureLayout { kinds, names }
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Feature values in layout order. `imputed[i]` marks entries that were NA;
/// such entries hold NaN until [`FeatureVector::impute`] fills them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub imputed: Vec<bool>,
}

impl FeatureVector {
    pub fn from_raw(values: Vec<f64>) -> Self {
        let imputed = values.iter().map(|v| v.is_nan()).collect();
        FeatureVector { values, imputed }
    }

    /// Replaces NA entries with the given per-feature means.
    pub fn impute(&mut self, means: &[f64]) {
        for ((v, &na), &m) in self.values.iter_mut().zip(&self.imputed).zip(means) {
            if na {
                *v = m;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Kernel-weighted mean of `(distance, value)` pairs, skipping NaN values.
/// Weights are taken relative to the nearest contributor, which leaves the
/// ratio unchanged but keeps it defined when every absolute weight underflows.
fn kernel_mean(items: impl Iterator<Item = (f64, f64)> + Clone, d: f64) -> Option<f64> {
    let present = items.filter(|(_, v)| !v.is_nan());
    let nearest = present
        .clone()
        .map(|(dist, _)| dist)
        .fold(f64::INFINITY, f64::min);
    if nearest.is_infinite() {
        return None;
    }
    let (mut mean, mut total) = (0.0, 0.0);
    for (dist, v) in present {
        let w = kernel_at(dist - nearest, d);
        if w > 0.0 {
            total += w;
            mean += (w / total) * (v - mean);
        }
    }
    Some(mean)
}

/// Per-segment data needed by the road kernels.
#[derive(Debug, Clone, Copy)]
struct SegmentInfo {
    mid: GeoPoint,
    length_km: f64,
    class: f64,
    major: bool,
}

/// Hour-independent kernel sums at one location, keyed by kernel distance.
#[derive(Debug, Default, Clone)]
pub struct LocationCache {
    lengths: Vec<(f64, [f64; 2])>,
    land: Vec<(f64, Option<[f64; 4]>)>,
    plants: Vec<(f64, f64)>,
}

fn cached<T: Copy>(
    entries: &mut Vec<(f64, T)>,
    d: f64,
    compute: impl FnOnce() -> Result<T>,
) -> Result<T> {
    if let Some((_, v)) = entries.iter().find(|(cd, _)| *cd == d) {
        return Ok(*v);
    }
    let v = compute()?;
    entries.push((d, v));
    Ok(v)
}

/// Road-kernel sums at one location for one distance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RoadSums {
    pub traffic: f64,
    pub roads: f64,
    pub major_roads: f64,
}

/// A world with the spatial indices and lookups used by feature computation.
/// Immutable once built and safe to share between threads.
#[derive(Debug)]
pub struct IndexedWorld {
    world: World,
    station_points: Vec<GeoPoint>,
    station_lookup: HashMap<String, usize>,
    segments: Vec<SegmentInfo>,
    road_index: SpatialIndex,
    land_index: SpatialIndex,
    plant_index: SpatialIndex,
    /// Grid indices per (hour, pollutant), best resolution first.
    grid_lookup: HashMap<(Hour, Pollutant), Vec<usize>>,
    /// Total road and major-road length.
    road_totals: [f64; 2],
    /// Total length · class · jam per traffic hour.
    traffic_totals: Vec<f64>,
    /// Land samples per category.
    land_totals: [f64; 4],
    plant_total: f64,
}

impl IndexedWorld {
    pub fn new(world: World) -> IndexedWorld {
        let station_points: Vec<GeoPoint> = world.stations.iter().map(|s| s.location).collect();
        let station_lookup = world
            .stations
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        let segments: Vec<SegmentInfo> = world
            .roads
            .iter()
            .map(|r| SegmentInfo {
                mid: r.midpoint(),
                length_km: r.length_km,
                class: r.functional_class as f64,
                major: r.major,
            })
            .collect();
        let road_index = SpatialIndex::build(
            segments
                .iter()
                .enumerate()
                .map(|(i, s)| (s.mid, i))
                .collect(),
            0.5,
        );
        let land_index = SpatialIndex::build(
            world
                .land_cover
                .iter()
                .enumerate()
                .map(|(i, s)| (s.location, i))
                .collect(),
            0.5,
        );
        let plant_index = SpatialIndex::build(
            world
                .power_plants
                .iter()
                .enumerate()
                .map(|(i, p)| (p.location, i))
                .collect(),
            5.0,
        );
        let mut grid_lookup: HashMap<(Hour, Pollutant), Vec<usize>> = HashMap::new();
        for (i, g) in world.grids.iter().enumerate() {
            grid_lookup
                .entry((g.hour, g.pollutant))
                .or_default()
                .push(i);
        }
        for list in grid_lookup.values_mut() {
            list.sort_by(|&a, &b| {
                let (ga, gb) = (&world.grids[a], &world.grids[b]);
                ga.resolution_km
                    .total_cmp(&gb.resolution_km)
                    .then(ga.cell_area().total_cmp(&gb.cell_area()))
                    .then_with(|| ga.source.cmp(&gb.source))
            });
        }
        let road_totals = segments.iter().fold([0.0; 2], |[all, major], s| {
            [
                all + s.length_km,
                if s.major { major + s.length_km } else { major },
            ]
        });
        let traffic = &world.traffic;
        let traffic_totals = (0..traffic.n_hours())
            .map(|h| {
                let jams = traffic
                    .at_hour(traffic.start().offset(h as i64))
                    .unwrap_or(&[]);
                segments
                    .iter()
                    .zip(jams)
                    .filter(|(_, j)| !j.is_nan())
                    .map(|(s, &j)| s.length_km * s.class * j as f64)
                    .sum()
            })
            .collect();
        let mut land_totals = [0.0; 4];
        for s in &world.land_cover {
            land_totals[s.category.index()] += 1.0;
        }
        let plant_total = world
            .power_plants
            .iter()
            .map(|p| p.capacity_mw * p.fuel.factor())
            .sum();
        IndexedWorld {
            world,
            station_points,
            station_lookup,
            segments,
            road_index,
            land_index,
            plant_index,
            grid_lookup,
            road_totals,
            traffic_totals,
            land_totals,
            plant_total,
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn into_world(self) -> World {
        self.world
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.station_lookup.get(id).copied()
    }

    pub fn station_location(&self, station: usize) -> GeoPoint {
        self.station_points[station]
    }

    pub fn segment_midpoint(&self, segment: usize) -> GeoPoint {
        self.segments[segment].mid
    }

    /// Visits `(station, distance_km, values)` for stations with at least one
    /// present value at `hour`, skipping `excluded`.
    fn present_stations(
        &self,
        hour: Hour,
        l: &GeoPoint,
        excluded: &[usize],
        mut visit: impl FnMut(usize, f64, &[f64; 4]),
    ) {
        let Some(values) = self.world.measurements.at_hour(hour) else {
            return;
        };
        for (s, (loc, v)) in self.station_points.iter().zip(values).enumerate() {
            if v.iter().all(|x| x.is_nan()) || excluded.contains(&s) {
                continue;
            }
            visit(s, distance_km(l, loc), v);
        }
    }

    /// Kernel-weighted mean of the stations' measurements of `p` at `hour`;
    /// NA when no station reports `p`.
    pub fn stations_measures(
        &self,
        hour: Hour,
        l: &GeoPoint,
        d: f64,
        p: Pollutant,
        excluded: &[usize],
    ) -> Result<Option<f64>> {
        check_bandwidth(d)?;
        let mut stations = Vec::new();
        self.present_stations(hour, l, excluded, |_, dist, v| {
            stations.push((dist, v[p.index()]))
        });
        Ok(kernel_mean(stations.into_iter(), d))
    }

    /// Sum of kernel weights of stations reporting `p` (any pollutant when `None`).
    pub fn stations_counters(
        &self,
        hour: Hour,
        l: &GeoPoint,
        d: f64,
        p: Option<Pollutant>,
        excluded: &[usize],
    ) -> Result<f64> {
        check_bandwidth(d)?;
        let mut sum = 0.0;
        self.present_stations(hour, l, excluded, |_, dist, v| {
            let reports = match p {
                Some(p) => !v[p.index()].is_nan(),
                None => true,
            };
            if reports {
                sum += kernel_at(dist, d);
            }
        });
        Ok(sum)
    }

    /// Bilinear interpolation in the best-resolution grid covering `l`.
    pub fn atmospheric_model_at(&self, hour: Hour, l: &GeoPoint, p: Pollutant) -> Option<f64> {
        self.grid_lookup
            .get(&(hour, p))?
            .iter()
            .find_map(|&i| bilinear(&self.world.grids[i], l))
    }

    /// Kernel sums `Σ w·m[k]` of per-source magnitudes `m`, with `totals[k]`
    /// the sum of `m[k]` over every source. In truncated mode the search starts
    /// at `10·d` and doubles while the weight left outside, at most
    /// `e^(-r/d)·(total - seen)`, could exceed `TRUNCATION_TOLERANCE` of a sum.
    /// Also returns whether any source lies within the initial radius.
    #[allow(clippy::too_many_arguments)]
    fn kernel_sums<const N: usize>(
        index: &SpatialIndex,
        count: usize,
        location: impl Fn(usize) -> GeoPoint,
        l: &GeoPoint,
        d: f64,
        truncation: Truncation,
        totals: [f64; N],
        magnitudes: impl Fn(usize) -> [f64; N],
    ) -> ([f64; N], bool) {
        let Some(mut r) = truncation.radius(d) else {
            let mut sums = [0.0; N];
            for i in 0..count {
                let w = kernel_at(distance_km(l, &location(i)), d);
                for (s, m) in sums.iter_mut().zip(magnitudes(i)) {
                    *s += w * m;
                }
            }
            return (sums, count > 0);
        };
        let mut any_within = None;
        loop {
            let (mut sums, mut seen, mut visited) = ([0.0; N], [0.0; N], 0);
            index.for_each_within(l, r, |i, dist| {
                let w = kernel_at(dist, d);
                for ((s, v), m) in sums.iter_mut().zip(seen.iter_mut()).zip(magnitudes(i)) {
                    *s += w * m;
                    *v += m;
                }
                visited += 1;
            });
            let any = *any_within.get_or_insert(visited > 0);
            let outside = (-r / d).exp();
            let settled = visited == count
                || (0..N).all(|k| {
                    outside * (totals[k] - seen[k]).max(0.0) <= TRUNCATION_TOLERANCE * sums[k]
                });
            if settled {
                return (sums, any);
            }
            r *= 2.0;
        }
    }

    /// Traffic, road-length and major-road-length kernel sums at `l`.
    pub fn road_sums(
        &self,
        hour: Hour,
        l: &GeoPoint,
        d: f64,
        truncation: Truncation,
    ) -> Result<RoadSums> {
        let traffic = self.traffic_feature(hour, l, d, truncation)?;
        let [roads, major_roads] = self.road_lengths(l, d, truncation)?;
        Ok(RoadSums {
            traffic,
            roads,
            major_roads,
        })
    }

    /// `Σ k_d · length · class · jam` over segments; segments without a jam
    /// factor at `hour` add nothing.
    pub fn traffic_feature(
        &self,
        hour: Hour,
        l: &GeoPoint,
        d: f64,
        truncation: Truncation,
    ) -> Result<f64> {
        check_bandwidth(d)?;
        let Some(jams) = self.world.traffic.at_hour(hour) else {
            return Ok(0.0);
        };
        let total = usize::try_from(hour.0 - self.world.traffic.start().0)
            .ok()
            .and_then(|h| self.traffic_totals.get(h))
            .copied()
            .unwrap_or(0.0);
        let segments = &self.segments;
        let ([sum], _) = Self::kernel_sums(
            &self.road_index,
            segments.len(),
            |i| segments[i].mid,
            l,
            d,
            truncation,
            [total],
            |i| {
                let jam = jams[i] as f64;
                [if jam.is_nan() {
                    0.0
                } else {
                    segments[i].length_km * segments[i].class * jam
                }]
            },
        );
        Ok(sum)
    }

    /// Road-length and major-road-length kernel sums.
    pub fn road_lengths(&self, l: &GeoPoint, d: f64, truncation: Truncation) -> Result<[f64; 2]> {
        check_bandwidth(d)?;
        let segments = &self.segments;
        let (sums, _) = Self::kernel_sums(
            &self.road_index,
            segments.len(),
            |i| segments[i].mid,
            l,
            d,
            truncation,
            self.road_totals,
            |i| {
                let s = &segments[i];
                [s.length_km, if s.major { s.length_km } else { 0.0 }]
            },
        );
        Ok(sums)
    }

    pub fn road_density(
        &self,
        l: &GeoPoint,
        d: f64,
        major_only: bool,
        truncation: Truncation,
    ) -> Result<f64> {
        let [roads, major] = self.road_lengths(l, d, truncation)?;
        Ok(if major_only { major } else { roads })
    }

    /// Kernel-weighted land-cover shares in `LAND_CATEGORIES` order; `None`
    /// when no sample carries weight.
    pub fn land_shares(
        &self,
        l: &GeoPoint,
        d: f64,
        truncation: Truncation,
    ) -> Result<Option<[f64; 4]>> {
        check_bandwidth(d)?;
        let samples = &self.world.land_cover;
        let (weights, any) = Self::kernel_sums(
            &self.land_index,
            samples.len(),
            |i| samples[i].location,
            l,
            d,
            truncation,
            self.land_totals,
            |i| {
                let mut m = [0.0; 4];
                m[samples[i].category.index()] = 1.0;
                m
            },
        );
        let total: f64 = weights.iter().sum();
        Ok((any && total > 0.0).then(|| weights.map(|w| w / total)))
    }

    pub fn land_share(
        &self,
        l: &GeoPoint,
        d: f64,
        category: LandCategory,
        truncation: Truncation,
    ) -> Result<Option<f64>> {
        Ok(self
            .land_shares(l, d, truncation)?
            .map(|s| s[category.index()]))
    }

    /// `Σ k_d · capacity · fuel factor` over power plants.
    pub fn power_plant_feature(&self, l: &GeoPoint, d: f64, truncation: Truncation) -> Result<f64> {
        check_bandwidth(d)?;
        let plants = &self.world.power_plants;
        let ([sum], _) = Self::kernel_sums(
            &self.plant_index,
            plants.len(),
            |i| plants[i].location,
            l,
            d,
            truncation,
            [self.plant_total],
            |i| [plants[i].capacity_mw * plants[i].fuel.factor()],
        );
        Ok(sum)
    }

    /// Raw feature values (NaN for NA) in `layout` order.
    pub fn raw_features(
        &self,
        layout: &FeatureLayout,
        l: &GeoPoint,
        hour: Hour,
        truncation: Truncation,
        excluded: &[usize],
    ) -> Result<Vec<f64>> {
        self.raw_features_cached(
            layout,
            l,
            hour,
            truncation,
            excluded,
            &mut LocationCache::default(),
        )
    }

    /// [`IndexedWorld::raw_features`] reusing the hour-independent sums in
    /// `cache`, which must only ever see one location and truncation mode.
    pub fn raw_features_cached(
        &self,
        layout: &FeatureLayout,
        l: &GeoPoint,
        hour: Hour,
        truncation: Truncation,
        excluded: &[usize],
        cache: &mut LocationCache,
    ) -> Result<Vec<f64>> {
        // Station distances are shared by every station feature.
        let mut stations: Vec<(f64, [f64; 4])> = Vec::new();
        self.present_stations(hour, l, excluded, |_, dist, v| stations.push((dist, *v)));
        let mut out = Vec::with_capacity(layout.len());
        for kind in layout.kinds() {
            let value = match *kind {
                FeatureKind::StationsMeasures { d, p } => {
                    check_bandwidth(d)?;
                    kernel_mean(stations.iter().map(|(dist, v)| (*dist, v[p.index()])), d)
                        .unwrap_or(f64::NAN)
                }
                FeatureKind::StationsCounters { d, p } => {
                    check_bandwidth(d)?;
                    stations
                        .iter()
                        .filter(|(_, v)| p.is_none_or(|p| !v[p.index()].is_nan()))
                        .map(|(dist, _)| kernel_at(*dist, d))
                        .sum()
                }
                FeatureKind::AtmosphericModel { p } => {
                    self.atmospheric_model_at(hour, l, p).unwrap_or(f64::NAN)
                }
                FeatureKind::Traffic { d } => self.traffic_feature(hour, l, d, truncation)?,
                FeatureKind::Roads { d } | FeatureKind::MajorRoads { d } => {
                    let [roads, major] = cached(&mut cache.lengths, d, || {
                        self.road_lengths(l, d, truncation)
                    })?;
                    if matches!(kind, FeatureKind::Roads { .. }) {
                        roads
                    } else {
                        major
                    }
                }
                FeatureKind::Land { d, category } => {
                    cached(&mut cache.land, d, || self.land_shares(l, d, truncation))?
                        .map(|s| s[category.index()])
                        .unwrap_or(f64::NAN)
                }
                FeatureKind::PowerPlants { d } => cached(&mut cache.plants, d, || {
                    self.power_plant_feature(l, d, truncation)
                })?,
            };
            out.push(value);
        }
        Ok(out)
    }

    /// Feature vector at `(l, hour)` with `excluded` stations left out.
    /// NA entries are flagged and, when `means` is given, replaced by them.
    pub fn compute_feature_vector(
        &self,
        l: &GeoPoint,
        hour: Hour,
        config: &FeatureConfig,
        excluded: &[usize],
        means: Option<&[f64]>,
    ) -> Result<FeatureVector> {
        let layout = config.layout();
        let mut fv = FeatureVector::from_raw(self.raw_features(
            &layout,
            l,
            hour,
            config.truncation,
            excluded,
        )?);
        if let Some(means) = means {
            if means.len() != layout.len() {
                return Err(Error::DimensionMismatch {
                    expected: layout.len(),
                    actual: means.len(),
                });
            }
            fv.impute(means);
        }
        Ok(fv)
    }
}
