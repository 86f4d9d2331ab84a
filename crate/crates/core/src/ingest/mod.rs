//! Data sources: typed records, file loaders, measurement cleaning and the
//! synthetic world generator.

mod hampel;
pub(crate) mod io;
pub mod synth;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

pub use hampel::{clean_measurements, hampel_filter, HampelConfig};
pub use io::{
    load_atmospheric_grid, load_land_cover, load_measurements, load_power_plants, load_region,
    load_roads, load_stations, load_traffic, parse_measurements, save_atmospheric_grid,
    save_land_cover, save_measurements, save_power_plants, save_region, save_roads, save_stations,
    save_traffic, MeasurementFile,
};

use crate::features::Preset;
use crate::geo::{distance_km, BoundingBox, GeoPoint};
use crate::{Concentrations, Error, Hour, Pollutant, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub id: String,
    pub location: GeoPoint,
    pub region: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationMeasurement {
    pub station_id: String,
    pub hour: Hour,
    pub values: Concentrations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtmosphericGrid {
    /// Source identifier used as the last tie-break between grids (file stem on load).
    pub source: String,
    pub pollutant: Pollutant,
    pub hour: Hour,
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub nrows: usize,
    pub ncols: usize,
    /// Row-major, row 0 at `lat0`, column 0 at `lon0`.
    pub values: Vec<f64>,
    pub resolution_km: f64,
}

impl AtmosphericGrid {
    pub fn validate(&self) -> Result<()> {
        if self.nrows == 0 || self.ncols == 0 {
            return Err(Error::InvalidParameter(
                "grid must have at least one row and column".into(),
            ));
        }
        if self.values.len() != self.nrows * self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.nrows * self.ncols,
                actual: self.values.len(),
            });
        }
        if !(self.dlat > 0.0 && self.dlon > 0.0) {
            return Err(Error::InvalidParameter(
                "grid cell size must be positive".into(),
            ));
        }
        if !(self.resolution_km > 0.0) || !self.lat0.is_finite() || !self.lon0.is_finite() {
            return Err(Error::InvalidParameter(
                "grid origin and resolution must be finite and positive".into(),
            ));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid value {v} is negative or non-finite"
            )));
        }
        Ok(())
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn node(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.lat0 + row as f64 * self.dlat,
            self.lon0 + col as f64 * self.dlon,
        )
    }

    pub fn cell_area(&self) -> f64 {
        self.dlat * self.dlon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub id: String,
    pub polyline: Vec<GeoPoint>,
    pub length_km: f64,
    pub functional_class: u8,
    pub major: bool,
}

impl RoadSegment {
    /// Builds a segment whose length is the summed polyline distance.
    pub fn new(
        id: impl Into<String>,
        polyline: Vec<GeoPoint>,
        functional_class: u8,
        major: bool,
    ) -> Result<Self> {
        let length_km = polyline_length(&polyline);
        let seg = RoadSegment {
            id: id.into(),
            polyline,
            length_km,
            functional_class,
            major,
        };
        seg.validate()?;
        Ok(seg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.polyline.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "segment {} needs at least 2 points",
                self.id
            )));
        }
        if !(1..=5).contains(&self.functional_class) {
            return Err(Error::InvalidParameter(format!(
                "segment {} functional class {} outside 1..=5",
                self.id, self.functional_class
            )));
        }
        let poly = polyline_length(&self.polyline);
        if !(self.length_km > 0.0) || (self.length_km - poly).abs() > 0.01 * poly {
            return Err(Error::InvalidParameter(format!(
                "segment {} length {} km inconsistent with polyline length {poly} km",
                self.id, self.length_km
            )));
        }
        Ok(())
    }

    /// Point halfway along the polyline by arc length.
    pub fn midpoint(&self) -> GeoPoint {
        let half = 0.5 * polyline_length(&self.polyline);
        let mut walked = 0.0;
        for w in self.polyline.windows(2) {
            let step = distance_km(&w[0], &w[1]);
            if walked + step >= half && step > 0.0 {
                let t = (half - walked) / step;
                let lat = w[0].lat() + t * (w[1].lat() - w[0].lat());
                let lon = w[0].lon() + t * (w[1].lon() - w[0].lon());
                return GeoPoint::new(lat, lon).unwrap_or(w[0]);
            }
            walked += step;
        }
        self.polyline[0]
    }
}

pub fn polyline_length(points: &[GeoPoint]) -> f64 {
    points.windows(2).map(|w| distance_km(&w[0], &w[1])).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficObservation {
    pub segment_id: String,
    pub hour: Hour,
    pub jam_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LandCategory {
    Industry,
    Residential,
    Green,
    Other,
}

pub const LAND_CATEGORIES: [LandCategory; 4] = [
    LandCategory::Industry,
    LandCategory::Residential,
    LandCategory::Green,
    LandCategory::Other,
];

impl LandCategory {
    pub fn name(self) -> &'static str {
        match self {
            LandCategory::Industry => "Industry",
            LandCategory::Residential => "Residential",
            LandCategory::Green => "Green",
            LandCategory::Other => "Other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for LandCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LandCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "industry" => Ok(LandCategory::Industry),
            "residential" => Ok(LandCategory::Residential),
            "green" => Ok(LandCategory::Green),
            "other" => Ok(LandCategory::Other),
            other => Err(Error::InvalidParameter(format!(
                "unknown land category `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandCoverSample {
    pub location: GeoPoint,
    pub category: LandCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fuel {
    Coal,
    Gas,
    Oil,
}

impl Fuel {
    /// Relative emission weight per MW of capacity.
    pub fn factor(self) -> f64 {
        match self {
            Fuel::Coal => 1.0,
            Fuel::Oil => 0.6,
            Fuel::Gas => 0.3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Fuel::Coal => "coal",
            Fuel::Gas => "gas",
            Fuel::Oil => "oil",
        }
    }
}

impl FromStr for Fuel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coal" => Ok(Fuel::Coal),
            "gas" => Ok(Fuel::Gas),
            "oil" => Ok(Fuel::Oil),
            other => Err(Error::InvalidParameter(format!("unknown fuel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPlant {
    pub location: GeoPoint,
    pub capacity_mw: f64,
    pub fuel: Fuel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    pub bbox: BoundingBox,
    pub preset: Preset,
}

/// Dense hourly station measurements over a contiguous hour range.
/// NA is stored as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementTable {
    start: Hour,
    n_hours: usize,
    n_stations: usize,
    values: Vec<[f64; 4]>,
}

impl MeasurementTable {
    pub fn empty(start: Hour, n_hours: usize, n_stations: usize) -> Self {
        MeasurementTable {
            start,
            n_hours,
            n_stations,
            values: vec![[f64::NAN; 4]; n_hours * n_stations],
        }
    }

    /// Places records on the table; records for unknown stations are skipped.
    /// Later duplicates of the same (station, hour) overwrite earlier ones.
    pub fn from_records(stations: &[Station], records: &[StationMeasurement]) -> Self {
        let lookup: HashMap<&str, usize> = stations
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let (Some(lo), Some(hi)) = (
            records.iter().map(|r| r.hour).min(),
            records.iter().map(|r| r.hour).max(),
        ) else {
            return MeasurementTable::empty(Hour(0), 0, stations.len());
        };
        let mut table = MeasurementTable::empty(lo, (hi.0 - lo.0 + 1) as usize, stations.len());
        let mut unknown = 0usize;
        for r in records {
            match lookup.get(r.station_id.as_str()) {
                Some(&s) => {
                    let slot = table.slot_mut(r.hour, s).expect("hour inside range");
                    for (dst, v) in slot.iter_mut().zip(r.values) {
                        *dst = v.unwrap_or(f64::NAN);
                    }
                }
                None => unknown += 1,
            }
        }
        if unknown > 0 {
            log::warn!("skipped {unknown} measurements from unknown stations");
        }
        table
    }

    pub fn start(&self) -> Hour {
        self.start
    }

    pub fn n_hours(&self) -> usize {
        self.n_hours
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn hours(&self) -> impl Iterator<Item = Hour> + '_ {
        (0..self.n_hours as i64).map(move |i| self.start.offset(i))
    }

    pub fn contains_hour(&self, hour: Hour) -> bool {
        hour.0 >= self.start.0 && hour.0 < self.start.0 + self.n_hours as i64
    }

    fn hour_index(&self, hour: Hour) -> Option<usize> {
        self.contains_hour(hour)
            .then(|| (hour.0 - self.start.0) as usize)
    }

    /// Values of every station at `hour` (NaN for NA), or `None` outside the range.
    pub fn at_hour(&self, hour: Hour) -> Option<&[[f64; 4]]> {
        let h = self.hour_index(hour)?;
        Some(&self.values[h * self.n_stations..(h + 1) * self.n_stations])
    }

    pub fn get(&self, hour: Hour, station: usize) -> Option<[f64; 4]> {
        let h = self.hour_index(hour)?;
        self.values.get(h * self.n_stations + station).copied()
    }

    pub fn slot_mut(&mut self, hour: Hour, station: usize) -> Option<&mut [f64; 4]> {
        let h = self.hour_index(hour)?;
        if station >= self.n_stations {
            return None;
        }
        Some(&mut self.values[h * self.n_stations + station])
    }

    /// Hourly series of one station and pollutant.
    pub fn series(&self, station: usize, p: Pollutant) -> Vec<Option<f64>> {
        (0..self.n_hours)
            .map(|h| {
                let v = self.values[h * self.n_stations + station][p.index()];
                (!v.is_nan()).then_some(v)
            })
            .collect()
    }

    pub fn set_series(&mut self, station: usize, p: Pollutant, series: &[Option<f64>]) {
        for (h, v) in series.iter().enumerate().take(self.n_hours) {
            self.values[h * self.n_stations + station][p.index()] = v.unwrap_or(f64::NAN);
        }
    }

    pub fn to_records(&self, stations: &[Station]) -> Vec<StationMeasurement> {
        let mut out = Vec::new();
        for h in 0..self.n_hours {
            for (s, station) in stations.iter().enumerate().take(self.n_stations) {
                let row = self.values[h * self.n_stations + s];
                if row.iter().all(|v| v.is_nan()) {
                    continue;
                }
                out.push(StationMeasurement {
                    station_id: station.id.clone(),
                    hour: self.start.offset(h as i64),
                    values: row.map(|v| (!v.is_nan()).then_some(v)),
                });
            }
        }
        out
    }
}

/// Dense hourly jam factors per road segment (NaN when unobserved).
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficTable {
    start: Hour,
    n_hours: usize,
    n_segments: usize,
    jams: Vec<f32>,
}

impl TrafficTable {
    pub fn empty(start: Hour, n_hours: usize, n_segments: usize) -> Self {
        TrafficTable {
            start,
            n_hours,
            n_segments,
            jams: vec![f32::NAN; n_hours * n_segments],
        }
    }

    pub fn from_observations(segments: &[RoadSegment], obs: &[TrafficObservation]) -> Self {
        let lookup: HashMap<&str, usize> = segments
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let (Some(lo), Some(hi)) = (
            obs.iter().map(|o| o.hour).min(),
            obs.iter().map(|o| o.hour).max(),
        ) else {
            return TrafficTable::empty(Hour(0), 0, segments.len());
        };
        let mut table = TrafficTable::empty(lo, (hi.0 - lo.0 + 1) as usize, segments.len());
        for o in obs {
            if let Some(&s) = lookup.get(o.segment_id.as_str()) {
                table.set(o.hour, s, o.jam_factor);
            }
        }
        table
    }

    pub fn jam(&self, hour: Hour, segment: usize) -> Option<f64> {
        let row = self.at_hour(hour)?;
        let v = *row.get(segment)?;
        (!v.is_nan()).then_some(v as f64)
    }

    pub fn start(&self) -> Hour {
        self.start
    }

    pub fn n_hours(&self) -> usize {
        self.n_hours
    }

    pub fn at_hour(&self, hour: Hour) -> Option<&[f32]> {
        if hour.0 < self.start.0 || hour.0 >= self.start.0 + self.n_hours as i64 {
            return None;
        }
        let h = (hour.0 - self.start.0) as usize;
        Some(&self.jams[h * self.n_segments..(h + 1) * self.n_segments])
    }

    pub fn set(&mut self, hour: Hour, segment: usize, jam: f64) {
        if hour.0 < self.start.0
            || hour.0 >= self.start.0 + self.n_hours as i64
            || segment >= self.n_segments
        {
            return;
        }
        let h = (hour.0 - self.start.0) as usize;
        self.jams[h * self.n_segments + segment] = jam as f32;
    }

    pub fn to_observations(&self, segments: &[RoadSegment]) -> Vec<TrafficObservation> {
        let mut out = Vec::new();
        for h in 0..self.n_hours {
            for (s, seg) in segments.iter().enumerate().take(self.n_segments) {
                let v = self.jams[h * self.n_segments + s];
                if !v.is_nan() {
                    out.push(TrafficObservation {
                        segment_id: seg.id.clone(),
                        hour: self.start.offset(h as i64),
                        jam_factor: v as f64,
                    });
                }
            }
        }
        out
    }
}

/// Everything known about one region, as loaded from files or generated.
#[derive(Debug, Clone)]
pub struct World {
    pub region: Region,
    pub stations: Vec<Station>,
    pub measurements: MeasurementTable,
    pub grids: Vec<AtmosphericGrid>,
    pub roads: Vec<RoadSegment>,
    pub traffic: TrafficTable,
    pub land_cover: Vec<LandCoverSample>,
    pub power_plants: Vec<PowerPlant>,
}

pub mod layout {
    //! File names inside a world directory.
    pub const REGION: &str = "region.csv";
    pub const STATIONS: &str = "stations.csv";
    pub const MEASUREMENTS: &str = "measurements.csv";
    pub const ROADS: &str = "roads.geojson";
    pub const TRAFFIC: &str = "traffic.csv";
    pub const LAND_COVER: &str = "land_cover.csv";
    pub const POWER_PLANTS: &str = "power_plants.csv";
    pub const GRIDS: &str = "grids";
}

impl World {
    /// Loads a world directory with the standard layout (see [`layout`]).
    pub fn load_dir(dir: &std::path::Path) -> Result<World> {
        let region = load_region(&dir.join(layout::REGION))?;
        let stations = load_stations(&dir.join(layout::STATIONS))?;
        let measurements = load_measurements(&dir.join(layout::MEASUREMENTS))?;
        let roads = load_roads(&dir.join(layout::ROADS))?;
        let traffic = load_traffic(&dir.join(layout::TRAFFIC))?;
        let land_cover = load_land_cover(&dir.join(layout::LAND_COVER))?;
        let power_plants = load_power_plants(&dir.join(layout::POWER_PLANTS))?;
        let grid_dir = dir.join(layout::GRIDS);
        let mut grid_paths: Vec<_> = std::fs::read_dir(&grid_dir)
            .map_err(|e| Error::io(&grid_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        grid_paths.sort();
        let grids = grid_paths
            .iter()
            .map(|p| load_atmospheric_grid(p))
            .collect::<Result<Vec<_>>>()?;

        let table = MeasurementTable::from_records(&stations, &measurements);
        let traffic = TrafficTable::from_observations(&roads, &traffic);
        Ok(World {
            region,
            stations,
            measurements: table,
            grids,
            roads,
            traffic,
            land_cover,
            power_plants,
        })
    }

    pub fn save_dir(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir.join(layout::GRIDS)).map_err(|e| Error::io(dir, e))?;
        save_region(&dir.join(layout::REGION), &self.region)?;
        save_stations(&dir.join(layout::STATIONS), &self.stations)?;
        save_measurements(
            &dir.join(layout::MEASUREMENTS),
            &self.measurements.to_records(&self.stations),
        )?;
        save_roads(&dir.join(layout::ROADS), &self.roads)?;
        save_traffic(
            &dir.join(layout::TRAFFIC),
            &self.traffic.to_observations(&self.roads),
        )?;
        save_land_cover(&dir.join(layout::LAND_COVER), &self.land_cover)?;
        save_power_plants(&dir.join(layout::POWER_PLANTS), &self.power_plants)?;
        for g in &self.grids {
            let name = format!("{}.csv", g.source);
            save_atmospheric_grid(&dir.join(layout::GRIDS).join(name), g)?;
        }
        Ok(())
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }

    /// Applies the Hampel filter to every station and pollutant series; returns removed count.
    pub fn clean(&mut self, config: &HampelConfig) -> usize {
        clean_measurements(&mut self.measurements, config)
    }
}
