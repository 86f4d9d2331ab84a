//! Point predictions, raster maps and exposure-aware routing.

mod routing;

use std::io::Write;
use std::path::Path;

pub use routing::{
    annotate_paqi, build_graph, route, Edge, Path as RoutePath, RoadGraph, RoutePlan, PAQI_FLOOR,
};

use crate::dataset::{AqiBreakpoints, ExposureCategory};
use crate::features::{FeatureConfig, FeatureLayout, IndexedWorld, Preset};
use crate::ingest::io::create;
use crate::model::{MlpModel, N_OUTPUTS};
use crate::{BoundingBox, Error, Execution, GeoPoint, Hour, Pollutant, Result, POLLUTANTS};

/// Default raster cell size in meters.
pub const DEFAULT_CELL_M: f64 = 50.0;

/// A model bound to a world and feature configuration with matching layout.
#[derive(Debug)]
pub struct Predictor<'a> {
    model: &'a MlpModel,
    world: &'a IndexedWorld,
    config: FeatureConfig,
    layout: FeatureLayout,
    breakpoints: &'a AqiBreakpoints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointPrediction {
    pub location: GeoPoint,
    pub hour: Hour,
    pub concentrations: [f64; N_OUTPUTS],
    pub paqi: f64,
    pub category: ExposureCategory,
    /// Features that were NA and took the training mean.
    pub imputed: Vec<bool>,
}

impl<'a> Predictor<'a> {
    /// Fails when the model's preset or feature names differ from what
    /// `config` computes on this world.
    pub fn new(
        model: &'a MlpModel,
        world: &'a IndexedWorld,
        config: FeatureConfig,
        breakpoints: &'a AqiBreakpoints,
    ) -> Result<Self> {
        config.validate()?;
        let preset: Preset = model.preset().parse()?;
        if preset != world.world().region.preset || preset != config.preset {
            return Err(Error::LayoutMismatch(format!(
                "model preset {preset}, region preset {}, feature preset {}",
                world.world().region.preset,
                config.preset
            )));
        }
        let layout = config.layout();
        if layout.names() != model.feature_names() {
            return Err(Error::LayoutMismatch(format!(
                "model features [{}] differ from configured [{}]",
                model.feature_names().join(","),
                layout.names().join(",")
            )));
        }
        Ok(Predictor {
            model,
            world,
            config,
            layout,
            breakpoints,
        })
    }

    pub fn model(&self) -> &MlpModel {
        self.model
    }

    pub fn world(&self) -> &IndexedWorld {
        self.world
    }

    pub fn breakpoints(&self) -> &AqiBreakpoints {
        self.breakpoints
    }

    pub fn coverage(&self) -> BoundingBox {
        self.world.world().region.bbox
    }

    /// Concentrations and imputation flags without the coverage check.
    fn raw(&self, l: &GeoPoint, hour: Hour) -> Result<([f64; N_OUTPUTS], Vec<bool>)> {
        let x = self
            .world
            .raw_features(&self.layout, l, hour, self.config.truncation, &[])?;
        let imputed = x.iter().map(|v| !v.is_finite()).collect();
        Ok((self.model.predict(&x)?, imputed))
    }

    fn paqi(&self, c: &[f64; N_OUTPUTS]) -> Result<f64> {
        self.breakpoints.paqi(&c.map(Some))
    }

    /// Prediction at one point inside the region.
    pub fn predict(&self, l: &GeoPoint, hour: Hour) -> Result<PointPrediction> {
        if !self.coverage().contains(l) {
            return Err(Error::OutOfCoverage(format!(
                "({}, {}) is outside the region",
                l.lat(),
                l.lon()
            )));
        }
        let (concentrations, imputed) = self.raw(l, hour)?;
        let paqi = self.paqi(&concentrations)?;
        Ok(PointPrediction {
            location: *l,
            hour,
            concentrations,
            paqi,
            category: self.breakpoints.categorize(paqi),
            imputed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub center: GeoPoint,
    pub concentrations: [f64; N_OUTPUTS],
    pub paqi: f64,
}

/// Raster of predictions. Cells are row-major with row 0 at the south edge.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub bbox: BoundingBox,
    pub cell_m: f64,
    pub rows: usize,
    pub cols: usize,
    pub hour: Hour,
    pub cells: Vec<GridCell>,
}

/// Cells needed to cover `span_km` with cells of `cell_m` meters.
pub fn cell_count(span_km: f64, cell_m: f64) -> usize {
    // The tolerance keeps exact multiples from gaining a cell through rounding.
    ((span_km * 1000.0 / cell_m) - 1e-9).ceil().max(1.0) as usize
}

/// Predicts at every cell center of `bbox`. The box is split into
/// `⌈span/cell_m⌉` equal cells per axis, so cells are at most `cell_m` wide.
pub fn render_grid(
    predictor: &Predictor,
    bbox: &BoundingBox,
    cell_m: f64,
    hour: Hour,
    exec: Execution,
) -> Result<GridMap> {
    if !(cell_m.is_finite() && cell_m > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "cell size must be positive, got {cell_m}"
        )));
    }
    if !predictor.coverage().contains_box(bbox) {
        return Err(Error::OutOfCoverage(
            "map box is not inside the region".into(),
        ));
    }
    let (span_lat, span_lon) = bbox.span_km();
    let rows = cell_count(span_lat, cell_m);
    let cols = cell_count(span_lon, cell_m);
    let (min, max) = (bbox.min(), bbox.max());
    let dlat = (max.lat() - min.lat()) / rows as f64;
    let dlon = (max.lon() - min.lon()) / cols as f64;
    let cells = exec
        .map_range(rows * cols, |i| {
            let (r, c) = (i / cols, i % cols);
            let center = GeoPoint::new(
                min.lat() + (r as f64 + 0.5) * dlat,
                min.lon() + (c as f64 + 0.5) * dlon,
            )?;
            let (concentrations, _) = predictor.raw(&center, hour)?;
            Ok(GridCell {
                center,
                paqi: predictor.paqi(&concentrations)?,
                concentrations,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(GridMap {
        bbox: *bbox,
        cell_m,
        rows,
        cols,
        hour,
        cells,
    })
}

impl GridMap {
    pub fn cell(&self, row: usize, col: usize) -> &GridCell {
        &self.cells[row * self.cols + col]
    }

    /// `lat,lon,no2,o3,pm25,pm10,paqi`, one line per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lat,lon,no2,o3,pm25,pm10,paqi\n");
        for c in &self.cells {
            out.push_str(&format!("{},{}", c.center.lat(), c.center.lon()));
            for v in c.concentrations {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", c.paqi));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = create(path)?;
        f.write_all(self.to_csv().as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// 8-bit gray levels for `p`, north row first, scaled so the map maximum is white.
    pub fn gray_levels(&self, p: Pollutant) -> Vec<u8> {
        let k = p.index();
        let max = self
            .cells
            .iter()
            .map(|c| c.concentrations[k])
            .fold(0.0, f64::max);
        let mut out = Vec::with_capacity(self.cells.len());
        for r in (0..self.rows).rev() {
            for c in 0..self.cols {
                let v = self.cell(r, c).concentrations[k];
                out.push(if max > 0.0 {
                    (255.0 * v / max).round() as u8
                } else {
                    0
                });
            }
        }
        out
    }

    /// Grayscale PNG of one pollutant.
    pub fn save_png(&self, p: Pollutant, path: &Path) -> Result<()> {
        let file = create(path)?;
        let mut enc = png::Encoder::new(file, self.cols as u32, self.rows as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let as_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
        let mut w = enc.write_header().map_err(as_io)?;
        w.write_image_data(&self.gray_levels(p)).map_err(as_io)?;
        w.finish().map_err(as_io)
    }

    /// Saves `<stem>.csv` and one `<stem>_<pollutant>.png` per pollutant into `dir`.
    pub fn save_all(&self, dir: &Path, stem: &str, png: bool) -> Result<()> {
        self.save_csv(&dir.join(format!("{stem}.csv")))?;
        if png {
            for p in POLLUTANTS {
                self.save_png(p, &dir.join(format!("{stem}_{}.png", p.key())))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
