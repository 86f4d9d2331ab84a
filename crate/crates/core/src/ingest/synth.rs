//! Deterministic synthetic worlds with a hidden ground-truth concentration field.
//!
//! A world is a square region holding a few towns. Each town is a street grid
//! (arterials every fourth street) with an industrial zone and parks; towns are
//! chained by highways. Concentrations are the sum of a smooth regional
//! background modulated by weather and a diurnal cycle, a road term driven by
//! road length, functional class and jam factor, and industrial/power-plant
//! plumes. O3 is titrated by NO2. Stations observe the field with lognormal
//! noise, gaps and spikes; atmospheric grids average it over coarse cells.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    AtmosphericGrid, Fuel, LandCategory, LandCoverSample, MeasurementTable, PowerPlant, Region,
    RoadSegment, Station, TrafficTable, World,
};
use crate::features::Preset;
use crate::geo::{
    distance_km, BoundingBox, GeoPoint, SpatialIndex, KM_PER_DEG_LAT, KM_PER_DEG_LON,
};
use crate::{Error, Hour, Result, POLLUTANTS};

/// Street block length; every generated segment is at most this long.
const BLOCK_KM: f64 = 0.2;
/// Kernel length of the road term in the ground truth.
const ROAD_KERNEL_KM: f64 = 0.1;
const ROAD_REACH_KM: f64 = 1.0;
const INDUSTRY_RADIUS_KM: f64 = 0.6;
const PARK_RADIUS_KM: f64 = 0.3;

/// Region-specific multipliers applied on top of the shared physics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionPhysics {
    /// Scales the true concentration of each pollutant.
    pub level: [f64; 4],
    /// Scales the atmospheric grid relative to the true cell average.
    pub atmos_bias: [f64; 4],
}

impl Default for RegionPhysics {
    fn default() -> Self {
        RegionPhysics {
            level: [1.0; 4],
            atmos_bias: [1.0; 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub region_name: String,
    pub preset: Preset,
    pub center_lat: f64,
    pub center_lon: f64,
    /// Side of the square region in kilometers.
    pub size_km: f64,
    pub station_count: usize,
    /// Approximate number of street segments across all towns (highways come on top).
    pub road_count: usize,
    pub towns: usize,
    pub grid_resolution_km: f64,
    /// Sub-cell lattice per axis used to average the truth into grid cells.
    pub grid_subsamples: usize,
    pub hours: usize,
    pub start: Hour,
    /// Standard deviation of the log-noise on station measurements.
    pub noise_sigma: f64,
    pub na_fraction: f64,
    pub outlier_fraction: f64,
    /// Probability that a station measures a given pollutant.
    pub pollutant_coverage: f64,
    /// Fraction of stations placed inside towns.
    pub urban_station_fraction: f64,
    pub traffic_missing_fraction: f64,
    pub land_spacing_km: f64,
    pub power_plant_count: usize,
    pub physics: RegionPhysics,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            region_name: "synthetic".into(),
            preset: Preset::Full,
            center_lat: 48.85,
            center_lon: 2.35,
            size_km: 20.0,
            station_count: 30,
            road_count: 1200,
            towns: 3,
            grid_resolution_km: 8.0,
            grid_subsamples: 40,
            hours: 72,
            start: Hour(420_768), // 2018-01-01T00:00Z
            noise_sigma: 0.12,
            na_fraction: 0.03,
            outlier_fraction: 0.002,
            pollutant_coverage: 0.85,
            urban_station_fraction: 0.7,
            traffic_missing_fraction: 0.0,
            land_spacing_km: 0.1,
            power_plant_count: 2,
            physics: RegionPhysics::default(),
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("world spec: {m}")));
        if self.station_count == 0 {
            return bad("station_count must be at least 1");
        }
        if self.hours == 0 {
            return bad("hours must be at least 1");
        }
        if !(self.size_km > 0.0 && self.size_km <= 500.0) {
            return bad("size_km must be in (0, 500]");
        }
        if !(self.grid_resolution_km > 0.0) || self.grid_subsamples == 0 {
            return bad("grid resolution and subsamples must be positive");
        }
        if !(self.land_spacing_km > 0.0) || self.size_km / self.land_spacing_km > 2000.0 {
            return bad("land_spacing_km must be positive and give at most 2000 samples per axis");
        }
        for (name, f) in [
            ("na_fraction", self.na_fraction),
            ("outlier_fraction", self.outlier_fraction),
            ("pollutant_coverage", self.pollutant_coverage),
            ("urban_station_fraction", self.urban_station_fraction),
            ("traffic_missing_fraction", self.traffic_missing_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be non-negative");
        }
        if self
            .physics
            .level
            .iter()
            .chain(&self.physics.atmos_bias)
            .any(|v| !(*v > 0.0))
        {
            return bad("physics multipliers must be positive");
        }
        GeoPoint::new(self.center_lat, self.center_lon)?;
        Ok(())
    }

    fn bbox(&self) -> Result<BoundingBox> {
        let half = 0.5 * self.size_km;
        let c = GeoPoint::new(self.center_lat, self.center_lon)?;
        BoundingBox::new(c.offset_km(-half, -half)?, c.offset_km(half, half)?)
    }
}

#[derive(Debug, Clone, Copy)]
struct Bump {
    center: GeoPoint,
    sigma_km: f64,
    amp: f64,
}

impl Bump {
    fn at(&self, l: &GeoPoint) -> f64 {
        let r = distance_km(l, &self.center);
        self.amp * (-(r * r) / (2.0 * self.sigma_km * self.sigma_km)).exp()
    }
}

#[derive(Debug, Clone)]
struct Town {
    center: GeoPoint,
    half_extent_km: f64,
    industry: GeoPoint,
    parks: Vec<GeoPoint>,
}

/// Time-independent parts of the truth at one location.
#[derive(Debug, Clone)]
pub struct StaticField {
    basin: f64,
    o3_basin: f64,
    industry: f64,
    plants: f64,
    /// (segment, kernel weight × length) within reach of the road term.
    road_links: Vec<(u32, f64)>,
}

/// The hidden concentration field of a synthetic world.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    physics: RegionPhysics,
    basins: Vec<Bump>,
    o3_basins: Vec<Bump>,
    industry: Vec<GeoPoint>,
    plants: Vec<PowerPlant>,
    weather_phase: [f64; 4],
    road_index: SpatialIndex,
    road_class: Vec<f64>,
    jams: TrafficTable,
}

impl GroundTruth {
    pub fn static_at(&self, l: &GeoPoint) -> StaticField {
        let basin = 1.0 + self.basins.iter().map(|b| b.at(l)).sum::<f64>();
        let o3_basin = 1.0 + self.o3_basins.iter().map(|b| b.at(l)).sum::<f64>();
        let industry = self
            .industry
            .iter()
            .map(|c| {
                let r = distance_km(l, c);
                (-(r * r) / (2.0 * INDUSTRY_RADIUS_KM * INDUSTRY_RADIUS_KM)).exp()
            })
            .sum();
        let plants = self
            .plants
            .iter()
            .map(|p| {
                p.capacity_mw * p.fuel.factor() / 1000.0
                    * (-distance_km(l, &p.location) / 3.0).exp()
            })
            .sum();
        let mut road_links = Vec::new();
        self.road_index
            .for_each_within(l, ROAD_REACH_KM, |i, dist| {
                road_links.push((i as u32, (-dist / ROAD_KERNEL_KM).exp()));
            });
        road_links.sort_unstable_by_key(|(i, _)| *i);
        StaticField {
            basin,
            o3_basin,
            industry,
            plants,
            road_links,
        }
    }

    fn weather(&self, hour: Hour) -> (f64, f64) {
        let t = hour.0 as f64;
        let p = &self.weather_phase;
        let w = 1.0
            + 0.3 * (2.0 * PI * t / 113.0 + p[0]).sin()
            + 0.2 * (2.0 * PI * t / 223.0 + p[1]).sin()
            + 0.1 * (2.0 * PI * t / 51.0 + p[2]).sin();
        let w_o3 = 1.0 + 0.2 * (2.0 * PI * t / 167.0 + p[3]).sin();
        (w, w_o3)
    }

    /// Concentrations (NO2, O3, PM2.5, PM10) in µg/m³.
    pub fn eval(&self, field: &StaticField, hour: Hour) -> [f64; 4] {
        let (w, w_o3) = self.weather(hour);
        let h = hour.hour_of_day() as f64;
        let diurnal = |peak: f64, amp: f64| 1.0 + amp * (2.0 * PI * (h - peak) / 24.0).cos();
        let jams = self.jams.at_hour(hour);
        let road: f64 = field
            .road_links
            .iter()
            .map(|&(i, w)| {
                let jam = jams
                    .map(|j| j[i as usize])
                    .filter(|j| !j.is_nan())
                    .unwrap_or(0.0) as f64;
                w * (0.3 + 0.1 * self.road_class[i as usize] * jam)
            })
            .sum();
        let bg = field.basin * w;
        let lvl = self.physics.level;
        let no2 = lvl[0]
            * (18.0 * bg * diurnal(20.0, 0.25)
                + 60.0 * road
                + 25.0 * field.industry
                + 15.0 * field.plants);
        let pm25 = lvl[2]
            * (9.0 * bg * diurnal(21.0, 0.15)
                + 10.0 * road
                + 14.0 * field.industry
                + 10.0 * field.plants);
        let pm10 = lvl[3]
            * (16.0 * bg * diurnal(21.0, 0.15)
                + 20.0 * road
                + 22.0 * field.industry
                + 12.0 * field.plants);
        let o3 = lvl[1] * 95.0 * field.o3_basin * w_o3 * diurnal(15.0, 0.35) * 60.0 / (60.0 + no2);
        [no2, o3, pm25, pm10]
    }

    pub fn at(&self, l: &GeoPoint, hour: Hour) -> [f64; 4] {
        self.eval(&self.static_at(l), hour)
    }

    /// Mean truth over an `n × n` lattice of sub-cell centers in the cell
    /// `[lat ± dlat/2] × [lon ± dlon/2]`.
    pub fn cell_mean(
        &self,
        lat: f64,
        lon: f64,
        dlat: f64,
        dlon: f64,
        n: usize,
        hour: Hour,
    ) -> [f64; 4] {
        let fields = cell_lattice(lat, lon, dlat, dlon, n)
            .map(|p| self.static_at(&p))
            .collect::<Vec<_>>();
        mean_of(fields.iter().map(|f| self.eval(f, hour)), fields.len())
    }
}

fn cell_lattice(
    lat: f64,
    lon: f64,
    dlat: f64,
    dlon: f64,
    n: usize,
) -> impl Iterator<Item = GeoPoint> {
    (0..n).flat_map(move |i| {
        (0..n).filter_map(move |j| {
            let la = lat - 0.5 * dlat + (i as f64 + 0.5) * dlat / n as f64;
            let lo = lon - 0.5 * dlon + (j as f64 + 0.5) * dlon / n as f64;
            GeoPoint::new(la, lo).ok()
        })
    })
}

fn mean_of(values: impl Iterator<Item = [f64; 4]>, n: usize) -> [f64; 4] {
    let mut acc = [0.0; 4];
    for v in values {
        for k in 0..4 {
            acc[k] += v[k];
        }
    }
    acc.map(|a| a / n.max(1) as f64)
}

/// A generated world and its hidden truth.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub world: World,
    pub truth: GroundTruth,
}

fn random_point(rng: &mut ChaCha8Rng, bbox: &BoundingBox) -> GeoPoint {
    let (lo, hi) = (bbox.min(), bbox.max());
    GeoPoint::new(
        rng.random_range(lo.lat()..=hi.lat()),
        rng.random_range(lo.lon()..=hi.lon()),
    )
    .expect("inside bbox")
}

fn rush_profile(hour: Hour) -> f64 {
    let h = hour.hour_of_day() as f64;
    let day = hour.0.div_euclid(24).rem_euclid(7);
    let weekday = if day >= 5 { 0.7 } else { 1.0 };
    weekday
        * (0.5 + 1.0 * (-(h - 8.0).powi(2) / 4.0).exp() + 1.1 * (-(h - 18.0).powi(2) / 4.0).exp())
}

struct RoadBuilder {
    roads: Vec<RoadSegment>,
}

impl RoadBuilder {
    fn push(&mut self, id: String, a: GeoPoint, b: GeoPoint, class: u8, major: bool) -> Result<()> {
        self.roads
            .push(RoadSegment::new(id, vec![a, b], class, major)?);
        Ok(())
    }

    /// Street grid of `m × m` nodes centered on `center`; returns the center node.
    fn town_grid(
        &mut self,
        rng: &mut ChaCha8Rng,
        town: usize,
        center: &GeoPoint,
        m: usize,
    ) -> Result<GeoPoint> {
        let half = (m - 1) as f64 * BLOCK_KM / 2.0;
        let mut nodes = Vec::with_capacity(m * m);
        for r in 0..m {
            for c in 0..m {
                nodes.push(
                    center.offset_km(r as f64 * BLOCK_KM - half, c as f64 * BLOCK_KM - half)?,
                );
            }
        }
        let mid = m / 2;
        let class_of = |k: usize, rng: &mut ChaCha8Rng| -> (u8, bool) {
            if k == mid {
                (5, true)
            } else if k.is_multiple_of(4) {
                (4, true)
            } else {
                (rng.random_range(1..=3), false)
            }
        };
        for r in 0..m {
            let (class, major) = class_of(r, rng);
            for c in 0..m - 1 {
                self.push(
                    format!("t{town}_r{r}_{c}"),
                    nodes[r * m + c],
                    nodes[r * m + c + 1],
                    class,
                    major,
                )?;
            }
        }
        for c in 0..m {
            let (class, major) = class_of(c, rng);
            for r in 0..m - 1 {
                self.push(
                    format!("t{town}_c{c}_{r}"),
                    nodes[r * m + c],
                    nodes[(r + 1) * m + c],
                    class,
                    major,
                )?;
            }
        }
        Ok(nodes[mid * m + mid])
    }

    fn highway(&mut self, link: usize, a: GeoPoint, b: GeoPoint) -> Result<()> {
        let n = (distance_km(&a, &b) / BLOCK_KM).ceil().max(1.0) as usize;
        let mut prev = a;
        for k in 1..=n {
            let next = if k == n {
                b
            } else {
                let t = k as f64 / n as f64;
                GeoPoint::new(
                    a.lat() + t * (b.lat() - a.lat()),
                    a.lon() + t * (b.lon() - a.lon()),
                )?
            };
            self.push(format!("hw{link}_{k}"), prev, next, 5, true)?;
            prev = next;
        }
        Ok(())
    }
}

/// Generates a world from `spec`; identical `(seed, spec)` give identical output.
pub fn generate_synthetic_world(seed: u64, spec: &WorldSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bbox = spec.bbox()?;
    let center = bbox.center();
    let half = 0.5 * spec.size_km;

    // Towns: street grids sized from the road budget.
    let n_towns = spec.towns.max(1);
    let per_town = spec.road_count as f64 / n_towns as f64;
    let m = if spec.road_count == 0 {
        0
    } else {
        ((per_town / 2.0).sqrt() + 0.5).round().max(2.0) as usize
    };
    let town_half = if m > 0 {
        (m - 1) as f64 * BLOCK_KM / 2.0
    } else {
        1.0
    };
    let margin = (town_half + 1.0).min(0.45 * spec.size_km);
    let mut towns = Vec::with_capacity(n_towns);
    for _ in 0..n_towns {
        let mut best: Option<(f64, GeoPoint)> = None;
        for _ in 0..20 {
            let c = center.offset_km(
                rng.random_range(-(half - margin)..=(half - margin)),
                rng.random_range(-(half - margin)..=(half - margin)),
            )?;
            let sep = towns
                .iter()
                .map(|t: &Town| distance_km(&c, &t.center))
                .fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|(s, _)| sep > *s) {
                best = Some((sep, c));
            }
        }
        let c = best.expect("at least one candidate").1;
        let angle = rng.random_range(0.0..2.0 * PI);
        let reach = town_half + 0.3;
        let industry = c.offset_km(reach * angle.sin(), reach * angle.cos())?;
        let parks = (0..2)
            .map(|_| {
                c.offset_km(
                    rng.random_range(-town_half..=town_half),
                    rng.random_range(-town_half..=town_half),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        towns.push(Town {
            center: c,
            half_extent_km: town_half,
            industry,
            parks,
        });
    }

    let mut builder = RoadBuilder { roads: Vec::new() };
    if m >= 2 {
        let mut hubs = Vec::new();
        for (i, t) in towns.iter().enumerate() {
            hubs.push(builder.town_grid(&mut rng, i, &t.center, m)?);
        }
        for i in 1..hubs.len() {
            builder.highway(i, hubs[i - 1], hubs[i])?;
        }
    }
    let roads = builder.roads;

    // Traffic: congestion follows a daily rush profile around a per-segment base.
    let base_jam: Vec<f64> = roads
        .iter()
        .map(|r| {
            if r.major {
                rng.random_range(1.5..4.0)
            } else {
                rng.random_range(0.3..2.0)
            }
        })
        .collect();
    let mut jams = TrafficTable::empty(spec.start, spec.hours, roads.len());
    let mut observed = TrafficTable::empty(spec.start, spec.hours, roads.len());
    for h in 0..spec.hours {
        let hour = spec.start.offset(h as i64);
        let profile = rush_profile(hour);
        for (s, base) in base_jam.iter().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            let jam = (base * profile + 0.3 * noise).clamp(0.0, 10.0);
            jams.set(hour, s, jam);
            if rng.random::<f64>() >= spec.traffic_missing_fraction {
                observed.set(hour, s, jam);
            }
        }
    }

    // Power plants sit outside towns.
    let mut plants = Vec::with_capacity(spec.power_plant_count);
    for _ in 0..spec.power_plant_count {
        let location = random_point(&mut rng, &bbox);
        let fuel = [Fuel::Coal, Fuel::Gas, Fuel::Oil][rng.random_range(0..3)];
        plants.push(PowerPlant {
            location,
            capacity_mw: rng.random_range(100.0..1500.0),
            fuel,
        });
    }

    // Land cover lattice.
    let field_phase: (f64, f64) = (
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
    );
    let (span_lat, span_lon) = bbox.span_km();
    let n_lat = (span_lat / spec.land_spacing_km).floor().max(1.0) as usize;
    let n_lon = (span_lon / spec.land_spacing_km).floor().max(1.0) as usize;
    let mut land_cover = Vec::with_capacity(n_lat * n_lon);
    for i in 0..n_lat {
        for j in 0..n_lon {
            let north = (i as f64 + 0.5) * spec.land_spacing_km;
            let east = (j as f64 + 0.5) * spec.land_spacing_km;
            let location = bbox.min().offset_km(north, east)?;
            let category = land_category(&location, &towns, &center, field_phase);
            land_cover.push(LandCoverSample { location, category });
        }
    }

    // Truth parameters.
    let basins = (0..6)
        .map(|_| Bump {
            center: random_point(&mut rng, &bbox),
            sigma_km: rng.random_range(3.0..8.0),
            amp: rng.random_range(0.2..0.7),
        })
        .collect();
    let o3_basins = (0..4)
        .map(|_| Bump {
            center: random_point(&mut rng, &bbox),
            sigma_km: rng.random_range(5.0..12.0),
            amp: rng.random_range(-0.15..0.15),
        })
        .collect();
    let weather_phase = [(); 4].map(|_| rng.random_range(0.0..2.0 * PI));
    let road_index = SpatialIndex::build(
        roads
            .iter()
            .enumerate()
            .map(|(i, r)| (r.midpoint(), i))
            .collect(),
        0.5,
    );
    let truth = GroundTruth {
        physics: spec.physics,
        basins,
        o3_basins,
        industry: towns.iter().map(|t| t.industry).collect(),
        plants: plants.clone(),
        weather_phase,
        road_index,
        road_class: roads.iter().map(|r| r.functional_class as f64).collect(),
        jams,
    };

    // Stations.
    let mut stations = Vec::with_capacity(spec.station_count);
    let mut coverage = Vec::with_capacity(spec.station_count);
    for i in 0..spec.station_count {
        let urban = rng.random::<f64>() < spec.urban_station_fraction && m >= 2;
        let location = if urban {
            let t = &towns[rng.random_range(0..towns.len())];
            let e = t.half_extent_km;
            t.center
                .offset_km(rng.random_range(-e..=e), rng.random_range(-e..=e))?
        } else {
            random_point(&mut rng, &bbox)
        };
        let mut covered = [false; 4];
        for c in covered.iter_mut() {
            *c = rng.random::<f64>() < spec.pollutant_coverage;
        }
        if !covered.iter().any(|c| *c) {
            covered[rng.random_range(0..4)] = true;
        }
        coverage.push(covered);
        stations.push(Station {
            id: format!("s{i:03}"),
            location,
            region: spec.region_name.clone(),
        });
    }
    let station_fields: Vec<StaticField> = stations
        .iter()
        .map(|s| truth.static_at(&s.location))
        .collect();
    let mut measurements = MeasurementTable::empty(spec.start, spec.hours, stations.len());
    for h in 0..spec.hours {
        let hour = spec.start.offset(h as i64);
        for (s, field) in station_fields.iter().enumerate() {
            let value = truth.eval(field, hour);
            let slot = measurements.slot_mut(hour, s).expect("inside table");
            for p in POLLUTANTS {
                let k = p.index();
                let z: f64 = rng.sample(StandardNormal);
                let u: f64 = rng.random();
                let spike: f64 = rng.random_range(5.0..15.0);
                if !coverage[s][k] || u < spec.na_fraction {
                    continue;
                }
                let mut v = value[k] * (spec.noise_sigma * z).exp();
                if u < spec.na_fraction + spec.outlier_fraction {
                    v *= spike;
                }
                slot[k] = v;
            }
        }
    }

    // Atmospheric grids: truth averaged over coarse cells around each node,
    // extending one cell beyond the region on every side.
    let dlat = spec.grid_resolution_km / KM_PER_DEG_LAT;
    let dlon = spec.grid_resolution_km / (KM_PER_DEG_LON * center.lat().to_radians().cos());
    let lat0 = bbox.min().lat() - dlat;
    let lon0 = bbox.min().lon() - dlon;
    let nrows = ((bbox.max().lat() - lat0) / dlat).ceil() as usize + 2;
    let ncols = ((bbox.max().lon() - lon0) / dlon).ceil() as usize + 2;
    let n_sub = spec.grid_subsamples;
    let cell_fields: Vec<Vec<StaticField>> = (0..nrows * ncols)
        .map(|idx| {
            let (la, lo) = (
                lat0 + (idx / ncols) as f64 * dlat,
                lon0 + (idx % ncols) as f64 * dlon,
            );
            cell_lattice(la, lo, dlat, dlon, n_sub)
                .map(|p| truth.static_at(&p))
                .collect()
        })
        .collect();
    let mut grids = Vec::with_capacity(spec.hours * 4);
    for h in 0..spec.hours {
        let hour = spec.start.offset(h as i64);
        let means: Vec<[f64; 4]> = cell_fields
            .iter()
            .map(|fs| mean_of(fs.iter().map(|f| truth.eval(f, hour)), fs.len()))
            .collect();
        for p in POLLUTANTS {
            let k = p.index();
            let stamp = hour.to_string().replace(['-', ':'], "");
            grids.push(AtmosphericGrid {
                source: format!("{}_{}", p.key(), stamp.trim_end_matches('Z')),
                pollutant: p,
                hour,
                lat0,
                lon0,
                dlat,
                dlon,
                nrows,
                ncols,
                values: means
                    .iter()
                    .map(|m| m[k] * spec.physics.atmos_bias[k])
                    .collect(),
                resolution_km: spec.grid_resolution_km,
            });
        }
    }

    let world = World {
        region: Region {
            name: spec.region_name.clone(),
            bbox,
            preset: spec.preset,
        },
        stations,
        measurements,
        grids,
        roads,
        traffic: observed,
        land_cover,
        power_plants: plants,
    };
    Ok(SyntheticWorld { world, truth })
}

fn land_category(
    l: &GeoPoint,
    towns: &[Town],
    center: &GeoPoint,
    phase: (f64, f64),
) -> LandCategory {
    for t in towns {
        if distance_km(l, &t.industry) < INDUSTRY_RADIUS_KM {
            return LandCategory::Industry;
        }
    }
    for t in towns {
        let north = (l.lat() - t.center.lat()) * KM_PER_DEG_LAT;
        let east = (l.lon() - t.center.lon()) * KM_PER_DEG_LON * t.center.lat().to_radians().cos();
        if north.abs().max(east.abs()) <= t.half_extent_km + 0.1 {
            if t.parks.iter().any(|p| distance_km(l, p) < PARK_RADIUS_KM) {
                return LandCategory::Green;
            }
            return LandCategory::Residential;
        }
    }
    let y = (l.lat() - center.lat()) * KM_PER_DEG_LAT;
    let x = (l.lon() - center.lon()) * KM_PER_DEG_LON * center.lat().to_radians().cos();
    if (x / 3.1 + phase.0).sin() * (y / 2.3 + phase.1).cos() > 0.2 {
        LandCategory::Green
    } else {
        LandCategory::Other
    }
}
