//! CSV and GeoJSON readers and writers for every data source.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! `load(save(x)) == x` holds bit-for-bit.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::{json, Value};

use super::{
    AtmosphericGrid, Fuel, LandCategory, LandCoverSample, PowerPlant, Region, RoadSegment, Station,
    StationMeasurement, TrafficObservation,
};
use crate::features::Preset;
use crate::geo::{BoundingBox, GeoPoint};
use crate::{Error, Hour, Pollutant, Result};

const MEASUREMENTS_HEADER: [&str; 6] = ["station_id", "timestamp", "no2", "o3", "pm25", "pm10"];
const STATIONS_HEADER: [&str; 4] = ["station_id", "lat", "lon", "region"];
const TRAFFIC_HEADER: [&str; 3] = ["segment_id", "timestamp", "jam_factor"];
const LAND_HEADER: [&str; 3] = ["lat", "lon", "category"];
const PLANTS_HEADER: [&str; 4] = ["lat", "lon", "capacity_mw", "fuel"];
const REGION_HEADER: [&str; 6] = ["name", "min_lat", "min_lon", "max_lat", "max_lon", "preset"];
const GRID_HEADER: [&str; 9] = [
    "pollutant",
    "timestamp",
    "lat0",
    "lon0",
    "dlat",
    "dlon",
    "nrows",
    "ncols",
    "resolution_km",
];

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Iterates CSV records after checking the header. An empty file yields no records.
pub(crate) fn read_csv<R: Read>(
    reader: R,
    path: &Path,
    header: &[&str],
    mut each: impl FnMut(usize, &csv::StringRecord) -> Result<()>,
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    match records.next() {
        None => return Ok(()),
        Some(first) => {
            let first = first.map_err(|e| Error::ingest(path, 1, e.to_string()))?;
            let got: Vec<&str> = first.iter().collect();
            if got != header {
                return Err(Error::ingest(
                    path,
                    1,
                    format!(
                        "expected header `{}`, got `{}`",
                        header.join(","),
                        got.join(",")
                    ),
                ));
            }
        }
    }
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::ingest(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::ingest(
                path,
                line,
                format!("expected {} fields, got {}", header.len(), rec.len()),
            ));
        }
        each(line, &rec)?;
    }
    Ok(())
}

fn num(path: &Path, line: usize, field: &str, s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| {
        Error::ingest(
            path,
            line,
            format!("`{field}`: cannot parse `{s}` as a number"),
        )
    })
}

fn point(path: &Path, line: usize, lat: &str, lon: &str) -> Result<GeoPoint> {
    let lat = num(path, line, "lat", lat)?;
    let lon = num(path, line, "lon", lon)?;
    GeoPoint::new(lat, lon).map_err(|e| Error::ingest(path, line, e.to_string()))
}

fn hour(path: &Path, line: usize, s: &str) -> Result<Hour> {
    Hour::parse(s).map_err(|e| Error::ingest(path, line, e.to_string()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Parsed measurement records plus the number of cells mapped to NA because
/// they were negative or non-finite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasurementFile {
    pub records: Vec<StationMeasurement>,
    pub invalid_cells: usize,
}

pub fn parse_measurements<R: Read>(reader: R, path: &Path) -> Result<MeasurementFile> {
    let mut out = MeasurementFile::default();
    read_csv(reader, path, &MEASUREMENTS_HEADER, |line, rec| {
        let mut values = [None; 4];
        for (i, slot) in values.iter_mut().enumerate() {
            let cell = &rec[2 + i];
            if cell.is_empty() {
                continue;
            }
            let v = num(path, line, MEASUREMENTS_HEADER[2 + i], cell)?;
            if v.is_finite() && v >= 0.0 {
                *slot = Some(v);
            } else {
                out.invalid_cells += 1;
            }
        }
        out.records.push(StationMeasurement {
            station_id: rec[0].to_string(),
            hour: hour(path, line, &rec[1])?,
            values,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn load_measurements(path: &Path) -> Result<Vec<StationMeasurement>> {
    let parsed = parse_measurements(open(path)?, path)?;
    if parsed.invalid_cells > 0 {
        log::warn!(
            "{}: {} negative or non-finite values set to NA",
            path.display(),
            parsed.invalid_cells
        );
    }
    Ok(parsed.records)
}

pub fn save_measurements(path: &Path, records: &[StationMeasurement]) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{}", MEASUREMENTS_HEADER.join(",")).map_err(&err)?;
    for r in records {
        let cells: Vec<String> = r.values.iter().map(|v| fmt_opt(*v)).collect();
        writeln!(w, "{},{},{}", r.station_id, r.hour, cells.join(",")).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn load_stations(path: &Path) -> Result<Vec<Station>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    read_csv(open(path)?, path, &STATIONS_HEADER, |line, rec| {
        let station = Station {
            id: rec[0].to_string(),
            location: point(path, line, &rec[1], &rec[2])?,
            region: rec[3].to_string(),
        };
        if station.id.is_empty() {
            return Err(Error::ingest(path, line, "empty station id"));
        }
        if !seen.insert((station.region.clone(), station.id.clone())) {
            return Err(Error::ingest(
                path,
                line,
                format!("duplicate station id `{}`", station.id),
            ));
        }
        out.push(station);
        Ok(())
    })?;
    Ok(out)
}

pub fn save_stations(path: &Path, stations: &[Station]) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{}", STATIONS_HEADER.join(",")).map_err(&err)?;
    for s in stations {
        writeln!(
            w,
            "{},{},{},{}",
            s.id,
            s.location.lat(),
            s.location.lon(),
            s.region
        )
        .map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn load_traffic(path: &Path) -> Result<Vec<TrafficObservation>> {
    let mut out = Vec::new();
    let mut dropped = 0usize;
    read_csv(open(path)?, path, &TRAFFIC_HEADER, |line, rec| {
        let jam = num(path, line, "jam_factor", &rec[2])?;
        if !(0.0..=10.0).contains(&jam) {
            dropped += 1;
            return Ok(());
        }
        out.push(TrafficObservation {
            segment_id: rec[0].to_string(),
            hour: hour(path, line, &rec[1])?,
            jam_factor: jam,
        });
        Ok(())
    })?;
    if dropped > 0 {
        log::warn!(
            "{}: dropped {dropped} jam factors outside [0, 10]",
            path.display()
        );
    }
    Ok(out)
}

pub fn save_traffic(path: &Path, obs: &[TrafficObservation]) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{}", TRAFFIC_HEADER.join(",")).map_err(&err)?;
    for o in obs {
        writeln!(w, "{},{},{}", o.segment_id, o.hour, o.jam_factor).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn load_land_cover(path: &Path) -> Result<Vec<LandCoverSample>> {
    let mut out = Vec::new();
    read_csv(open(path)?, path, &LAND_HEADER, |line, rec| {
        let category = rec[2]
            .parse::<LandCategory>()
            .map_err(|e| Error::ingest(path, line, e.to_string()))?;
        out.push(LandCoverSample {
            location: point(path, line, &rec[0], &rec[1])?,
            category,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn save_land_cover(path: &Path, samples: &[LandCoverSample]) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{}", LAND_HEADER.join(",")).map_err(&err)?;
    for s in samples {
        writeln!(
            w,
            "{},{},{}",
            s.location.lat(),
            s.location.lon(),
            s.category
        )
        .map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn load_power_plants(path: &Path) -> Result<Vec<PowerPlant>> {
    let mut out = Vec::new();
    read_csv(open(path)?, path, &PLANTS_HEADER, |line, rec| {
        let capacity_mw = num(path, line, "capacity_mw", &rec[2])?;
        if !(capacity_mw > 0.0 && capacity_mw.is_finite()) {
            return Err(Error::ingest(
                path,
                line,
                format!("capacity {capacity_mw} must be positive"),
            ));
        }
        let fuel = rec[3]
            .parse::<Fuel>()
            .map_err(|e| Error::ingest(path, line, e.to_string()))?;
        out.push(PowerPlant {
            location: point(path, line, &rec[0], &rec[1])?,
            capacity_mw,
            fuel,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn save_power_plants(path: &Path, plants: &[PowerPlant]) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{}", PLANTS_HEADER.join(",")).map_err(&err)?;
    for p in plants {
        writeln!(
            w,
            "{},{},{},{}",
            p.location.lat(),
            p.location.lon(),
            p.capacity_mw,
            p.fuel.name()
        )
        .map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn load_region(path: &Path) -> Result<Region> {
    let mut out = None;
    read_csv(open(path)?, path, &REGION_HEADER, |line, rec| {
        if out.is_some() {
            return Err(Error::ingest(
                path,
                line,
                "region file holds exactly one region",
            ));
        }
        let min = point(path, line, &rec[1], &rec[2])?;
        let max = point(path, line, &rec[3], &rec[4])?;
        let bbox =
            BoundingBox::new(min, max).map_err(|e| Error::ingest(path, line, e.to_string()))?;
        let preset = rec[5]
            .parse::<Preset>()
            .map_err(|e| Error::ingest(path, line, e.to_string()))?;
        out = Some(Region {
            name: rec[0].to_string(),
            bbox,
            preset,
        });
        Ok(())
    })?;
    out.ok_or_else(|| Error::ingest(path, 1, "no region record"))
}

pub fn save_region(path: &Path, region: &Region) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{}", REGION_HEADER.join(",")).map_err(&err)?;
    let (lo, hi) = (region.bbox.min(), region.bbox.max());
    writeln!(
        w,
        "{},{},{},{},{},{}",
        region.name,
        lo.lat(),
        lo.lon(),
        hi.lat(),
        hi.lon(),
        region.preset
    )
    .map_err(&err)?;
    w.flush().map_err(&err)
}

/// Reads a grid file: the column-name header line, one metadata line, then
/// `nrows` lines of `ncols` values (row 0 first). A file whose first line is
/// already the metadata record is accepted as well.
pub fn load_atmospheric_grid(path: &Path) -> Result<AtmosphericGrid> {
    let reader = BufReader::new(open(path)?);
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next_line = || -> Result<Option<(usize, String)>> {
        for (n, l) in lines.by_ref() {
            let l = l.map_err(|e| Error::io(path, e))?;
            if !l.trim().is_empty() {
                return Ok(Some((n, l)));
            }
        }
        Ok(None)
    };
    let (mut n, mut meta) =
        next_line()?.ok_or_else(|| Error::ingest(path, 1, "empty grid file"))?;
    let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
    if fields == GRID_HEADER {
        (n, meta) =
            next_line()?.ok_or_else(|| Error::ingest(path, 2, "missing grid metadata line"))?;
    }
    let f: Vec<&str> = meta.split(',').map(str::trim).collect();
    if f.len() != GRID_HEADER.len() {
        return Err(Error::ingest(
            path,
            n,
            format!(
                "expected {} metadata fields, got {}",
                GRID_HEADER.len(),
                f.len()
            ),
        ));
    }
    let pollutant = f[0]
        .parse::<Pollutant>()
        .map_err(|e| Error::ingest(path, n, e.to_string()))?;
    let count = |field: &str, s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::ingest(path, n, format!("`{field}`: cannot parse `{s}`")))
    };
    let nrows = count("nrows", f[6])?;
    let ncols = count("ncols", f[7])?;
    let mut grid = AtmosphericGrid {
        source: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        pollutant,
        hour: hour(path, n, f[1])?,
        lat0: num(path, n, "lat0", f[2])?,
        lon0: num(path, n, "lon0", f[3])?,
        dlat: num(path, n, "dlat", f[4])?,
        dlon: num(path, n, "dlon", f[5])?,
        nrows,
        ncols,
        values: Vec::with_capacity(nrows * ncols),
        resolution_km: num(path, n, "resolution_km", f[8])?,
    };
    let mut rows_read = 0;
    while let Some((n, line)) = next_line()? {
        if rows_read == nrows {
            return Err(Error::ingest(
                path,
                n,
                format!("more than nrows = {nrows} value rows"),
            ));
        }
        let before = grid.values.len();
        for cell in line.split(',') {
            grid.values.push(num(path, n, "value", cell.trim())?);
        }
        if grid.values.len() - before != ncols {
            return Err(Error::ingest(
                path,
                n,
                format!(
                    "expected {ncols} values, got {}",
                    grid.values.len() - before
                ),
            ));
        }
        rows_read += 1;
    }
    if rows_read != nrows {
        return Err(Error::ingest(
            path,
            n,
            format!("expected {nrows} value rows, got {rows_read}"),
        ));
    }
    grid.validate()
        .map_err(|e| Error::ingest(path, n, e.to_string()))?;
    Ok(grid)
}

pub fn save_atmospheric_grid(path: &Path, grid: &AtmosphericGrid) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{}", GRID_HEADER.join(",")).map_err(&err)?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{}",
        grid.pollutant.key(),
        grid.hour,
        grid.lat0,
        grid.lon0,
        grid.dlat,
        grid.dlon,
        grid.nrows,
        grid.ncols,
        grid.resolution_km
    )
    .map_err(&err)?;
    for r in 0..grid.nrows {
        let row: Vec<String> = grid.values[r * grid.ncols..(r + 1) * grid.ncols]
            .iter()
            .map(f64::to_string)
            .collect();
        writeln!(w, "{}", row.join(",")).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

/// Line (1-based) on which the `index`-th `"Feature"` object starts, for error messages.
fn feature_line(text: &str, index: usize) -> usize {
    let mut seen = 0;
    let mut offset = 0;
    while let Some(pos) = text[offset..].find("\"Feature\"") {
        let at = offset + pos;
        if seen == index {
            return text[..at].bytes().filter(|b| *b == b'\n').count() + 1;
        }
        seen += 1;
        offset = at + 1;
    }
    1
}

/// Reads a GeoJSON FeatureCollection of LineString features with properties
/// `id`, `functional_class` and `major`. Lengths are the polyline distance.
pub fn load_roads(path: &Path) -> Result<Vec<RoadSegment>> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let doc: Value =
        serde_json::from_str(&text).map_err(|e| Error::ingest(path, e.line(), e.to_string()))?;
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| {
            Error::ingest(
                path,
                1,
                "expected a FeatureCollection with a `features` array",
            )
        })?;
    let mut out = Vec::with_capacity(features.len());
    let mut ids = HashSet::new();
    for (i, f) in features.iter().enumerate() {
        let bad = |msg: String| Error::ingest(path, feature_line(&text, i), msg);
        let geom = f
            .get("geometry")
            .ok_or_else(|| bad("missing geometry".into()))?;
        if geom.get("type").and_then(Value::as_str) != Some("LineString") {
            return Err(bad("geometry must be a LineString".into()));
        }
        let coords = geom
            .get("coordinates")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing coordinates".into()))?;
        let mut polyline = Vec::with_capacity(coords.len());
        for c in coords {
            let pair = c
                .as_array()
                .filter(|a| a.len() >= 2)
                .ok_or_else(|| bad("coordinate must be [lon, lat]".into()))?;
            let (Some(lon), Some(lat)) = (pair[0].as_f64(), pair[1].as_f64()) else {
                return Err(bad("non-numeric coordinate".into()));
            };
            polyline.push(GeoPoint::new(lat, lon).map_err(|e| bad(e.to_string()))?);
        }
        let props = f
            .get("properties")
            .ok_or_else(|| bad("missing properties".into()))?;
        let id = match props.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(bad("missing `id` property".into())),
        };
        let class = props
            .get("functional_class")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing integer `functional_class`".into()))?;
        let major = props
            .get("major")
            .and_then(Value::as_bool)
            .ok_or_else(|| bad("missing boolean `major`".into()))?;
        let class = u8::try_from(class)
            .map_err(|_| bad(format!("functional class {class} outside 1..=5")))?;
        let seg = RoadSegment::new(id, polyline, class, major).map_err(|e| bad(e.to_string()))?;
        if !ids.insert(seg.id.clone()) {
            return Err(bad(format!("duplicate segment id `{}`", seg.id)));
        }
        out.push(seg);
    }
    Ok(out)
}

/// Writes one feature per line.
pub fn save_roads(path: &Path, roads: &[RoadSegment]) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{{\"type\":\"FeatureCollection\",\"features\":[").map_err(&err)?;
    for (i, r) in roads.iter().enumerate() {
        let coords: Vec<Value> = r
            .polyline
            .iter()
            .map(|p| json!([p.lon(), p.lat()]))
            .collect();
        let feature = json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {"id": r.id, "functional_class": r.functional_class, "major": r.major},
        });
        let sep = if i + 1 < roads.len() { "," } else { "" };
        writeln!(w, "{feature}{sep}").map_err(&err)?;
    }
    writeln!(w, "]}}").map_err(&err)?;
    w.flush().map_err(&err)
}
