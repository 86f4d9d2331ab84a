//! Locations, local kilometer distances, the exponential kernel and a static
//! grid-bucket index for radius queries.

use crate::{Error, Result};

/// Kilometers per degree of latitude.
pub const KM_PER_DEG_LAT: f64 = 110.574;
/// Kilometers per degree of longitude at the equator.
pub const KM_PER_DEG_LON: f64 = 111.320;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<GeoPoint> {
        if !lat_deg.is_finite() || !lon_deg.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite coordinate ({lat_deg}, {lon_deg})"
            )));
        }
        if !(-90.0..=90.0).contains(&lat_deg) {
            return Err(Error::InvalidParameter(format!(
                "latitude {lat_deg} outside [-90, 90]"
            )));
        }
        if !(-180.0..180.0).contains(&lon_deg) {
            return Err(Error::InvalidParameter(format!(
                "longitude {lon_deg} outside [-180, 180)"
            )));
        }
        Ok(GeoPoint {
            lat: lat_deg,
            lon: lon_deg,
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Point displaced by the given kilometers north and east, using the same
    /// local projection as [`distance_km`] evaluated at this point's latitude.
    pub fn offset_km(&self, north_km: f64, east_km: f64) -> Result<GeoPoint> {
        let lat = self.lat + north_km / KM_PER_DEG_LAT;
        let lon = self.lon + east_km / (KM_PER_DEG_LON * self.lat.to_radians().cos());
        GeoPoint::new(lat, lon)
    }
}

/// Equirectangular local distance in kilometers, projected at the pair's mean latitude.
pub fn distance_km(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let mean_lat = 0.5 * (a.lat + b.lat);
    let dx = (b.lon - a.lon) * mean_lat.to_radians().cos() * KM_PER_DEG_LON;
    let dy = (b.lat - a.lat) * KM_PER_DEG_LAT;
    (dx * dx + dy * dy).sqrt()
}

/// `exp(-distance / d)` with `d` in kilometers.
pub fn kernel_weight(a: &GeoPoint, b: &GeoPoint, d_km: f64) -> Result<f64> {
    check_bandwidth(d_km)?;
    Ok(kernel_at(distance_km(a, b), d_km))
}

pub(crate) fn check_bandwidth(d_km: f64) -> Result<()> {
    if d_km > 0.0 && d_km.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "kernel distance must be positive, got {d_km}"
        )))
    }
}

#[inline]
pub(crate) fn kernel_at(distance: f64, d_km: f64) -> f64 {
    (-distance / d_km).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    min: GeoPoint,
    max: GeoPoint,
}

impl BoundingBox {
    pub fn new(min: GeoPoint, max: GeoPoint) -> Result<BoundingBox> {
        if min.lat > max.lat || min.lon > max.lon {
            return Err(Error::InvalidParameter(
                "bounding box min corner exceeds max corner".into(),
            ));
        }
        if max.lon - min.lon >= 180.0 {
            return Err(Error::InvalidParameter(
                "bounding box spans 180° of longitude or more".into(),
            ));
        }
        Ok(BoundingBox { min, max })
    }

    pub fn from_degrees(
        min_lat: f64,
        min_lon: f64,
        max_lat: f64,
        max_lon: f64,
    ) -> Result<BoundingBox> {
        BoundingBox::new(
            GeoPoint::new(min_lat, min_lon)?,
            GeoPoint::new(max_lat, max_lon)?,
        )
    }

    pub fn min(&self) -> GeoPoint {
        self.min
    }

    pub fn max(&self) -> GeoPoint {
        self.max
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.min.lat..=self.max.lat).contains(&p.lat)
            && (self.min.lon..=self.max.lon).contains(&p.lon)
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lat: 0.5 * (self.min.lat + self.max.lat),
            lon: 0.5 * (self.min.lon + self.max.lon),
        }
    }

    /// North-south and east-west extent in kilometers, east-west measured at the center latitude.
    pub fn span_km(&self) -> (f64, f64) {
        let mid = self.center().lat.to_radians().cos();
        (
            (self.max.lat - self.min.lat) * KM_PER_DEG_LAT,
            (self.max.lon - self.min.lon) * KM_PER_DEG_LON * mid,
        )
    }

    /// Smallest box containing all points, or `None` when empty.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a GeoPoint>) -> Option<BoundingBox> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (mut min, mut max) = (first, first);
        for p in it {
            min.lat = min.lat.min(p.lat);
            min.lon = min.lon.min(p.lon);
            max.lat = max.lat.max(p.lat);
            max.lon = max.lon.max(p.lon);
        }
        Some(BoundingBox { min, max })
    }
}

/// Immutable grid-bucket index over points carrying `usize` payload ids.
///
/// Buckets are square-ish cells in degree space sized from `cell_km`. A query
/// scans the cells overlapping a conservative degree box around the center and
/// filters candidates by exact [`distance_km`].
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<(GeoPoint, usize)>,
    origin_lat: f64,
    origin_lon: f64,
    cell_lat: f64,
    cell_lon: f64,
    rows: usize,
    cols: usize,
    /// Start offsets into `order` per bucket, length rows * cols + 1.
    starts: Vec<u32>,
    order: Vec<u32>,
}

impl SpatialIndex {
    pub fn build(points: Vec<(GeoPoint, usize)>, cell_km: f64) -> SpatialIndex {
        let cell_km = if cell_km > 0.0 && cell_km.is_finite() {
            cell_km
        } else {
            1.0
        };
        let Some(bbox) = BoundingBox::enclosing(points.iter().map(|(p, _)| p)) else {
            return SpatialIndex {
                points,
                origin_lat: 0.0,
                origin_lon: 0.0,
                cell_lat: 1.0,
                cell_lon: 1.0,
                rows: 0,
                cols: 0,
                starts: vec![0],
                order: Vec::new(),
            };
        };
        let max_abs_lat = bbox.min.lat.abs().max(bbox.max.lat.abs()).min(89.0);
        let cell_lat = cell_km / KM_PER_DEG_LAT;
        let cell_lon = cell_km / (KM_PER_DEG_LON * max_abs_lat.to_radians().cos());
        // Cap the bucket count so degenerate spreads cannot allocate unbounded grids.
        let cap = (4 * points.len()).max(16) as f64;
        let mut rows = (((bbox.max.lat - bbox.min.lat) / cell_lat).floor() as usize + 1).max(1);
        let mut cols = (((bbox.max.lon - bbox.min.lon) / cell_lon).floor() as usize + 1).max(1);
        let (mut cell_lat, mut cell_lon) = (cell_lat, cell_lon);
        while (rows * cols) as f64 > cap {
            cell_lat *= 2.0;
            cell_lon *= 2.0;
            rows = ((bbox.max.lat - bbox.min.lat) / cell_lat).floor() as usize + 1;
            cols = ((bbox.max.lon - bbox.min.lon) / cell_lon).floor() as usize + 1;
        }
        let bucket_of = |p: &GeoPoint| {
            let r = (((p.lat - bbox.min.lat) / cell_lat) as usize).min(rows - 1);
            let c = (((p.lon - bbox.min.lon) / cell_lon) as usize).min(cols - 1);
            r * cols + c
        };
        let mut counts = vec![0u32; rows * cols + 1];
        for (p, _) in &points {
            counts[bucket_of(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut order = vec![0u32; points.len()];
        for (i, (p, _)) in points.iter().enumerate() {
            let b = bucket_of(p);
            order[fill[b] as usize] = i as u32;
            fill[b] += 1;
        }
        SpatialIndex {
            points,
            origin_lat: bbox.min.lat,
            origin_lon: bbox.min.lon,
            cell_lat,
            cell_lon,
            rows,
            cols,
            starts,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(GeoPoint, usize)] {
        &self.points
    }

    /// Calls `visit(payload, distance_km)` for every point within `r_km` of `center`.
    pub fn for_each_within(&self, center: &GeoPoint, r_km: f64, mut visit: impl FnMut(usize, f64)) {
        if self.points.is_empty() || r_km < 0.0 || r_km.is_nan() {
            return;
        }
        let dlat = r_km / KM_PER_DEG_LAT;
        let far_lat = (center.lat.abs() + dlat).min(90.0);
        let cos_min = far_lat.to_radians().cos();
        let dlon = if cos_min > 1e-9 {
            r_km / (KM_PER_DEG_LON * cos_min)
        } else {
            f64::INFINITY
        };

        let row_range = span(
            center.lat - dlat,
            center.lat + dlat,
            self.origin_lat,
            self.cell_lat,
            self.rows,
        );
        let col_range = span(
            center.lon - dlon,
            center.lon + dlon,
            self.origin_lon,
            self.cell_lon,
            self.cols,
        );
        let (Some((r0, r1)), Some((c0, c1))) = (row_range, col_range) else {
            return;
        };
        if (r1 - r0 + 1) * (c1 - c0 + 1) >= self.points.len() {
            for &(p, id) in &self.points {
                let dist = distance_km(center, &p);
                if dist <= r_km {
                    visit(id, dist);
                }
            }
            return;
        }
        for r in r0..=r1 {
            let lo = self.starts[r * self.cols + c0] as usize;
            let hi = self.starts[r * self.cols + c1 + 1] as usize;
            for &i in &self.order[lo..hi] {
                let (p, id) = &self.points[i as usize];
                let dist = distance_km(center, p);
                if dist <= r_km {
                    visit(*id, dist);
                }
            }
        }
    }

    /// Payload ids of all points within `r_km` of `center`, sorted and deduplicated.
    pub fn radius_query(&self, center: &GeoPoint, r_km: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(center, r_km, |id, _| out.push(id));
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn span(lo: f64, hi: f64, origin: f64, cell: f64, n: usize) -> Option<(usize, usize)> {
    if n == 0 {
        return None;
    }
    let a = ((lo - origin) / cell).floor();
    let b = ((hi - origin) / cell).floor();
    if b < 0.0 || a > (n - 1) as f64 {
        return None;
    }
    let a = a.max(0.0) as usize;
    let b = if b.is_finite() {
        (b as usize).min(n - 1)
    } else {
        n - 1
    };
    Some((a, b))
}
