use crate::geo::GeoPoint;
use crate::ingest::AtmosphericGrid;

/// Tolerance in degrees when deciding whether a point lies on the grid hull.
const EDGE_EPS: f64 = 1e-9;

/// Locates `x` on an axis of `n` nodes; returns the lower node and the fraction
/// towards the next one. Single-node axes only cover their node.
fn axis(x: f64, origin: f64, step: f64, n: usize) -> Option<(usize, f64)> {
    let f = (x - origin) / step;
    let last = (n - 1) as f64;
    if f < -EDGE_EPS / step || f > last + EDGE_EPS / step {
        return None;
    }
    if n == 1 {
        return Some((0, 0.0));
    }
    let i = (f.floor().max(0.0) as usize).min(n - 2);
    Some((i, (f - i as f64).clamp(0.0, 1.0)))
}

/// Bilinear interpolation of the grid at `l`, or `None` outside the node hull.
/// On the hull edges the formula degenerates to linear interpolation.
pub fn bilinear(grid: &AtmosphericGrid, l: &GeoPoint) -> Option<f64> {
    let (r, ty) = axis(l.lat(), grid.lat0, grid.dlat, grid.nrows)?;
    let (c, tx) = axis(l.lon(), grid.lon0, grid.dlon, grid.ncols)?;
    let r1 = (r + 1).min(grid.nrows - 1);
    let c1 = (c + 1).min(grid.ncols - 1);
    let v00 = grid.value(r, c);
    let v01 = grid.value(r, c1);
    let v10 = grid.value(r1, c);
    let v11 = grid.value(r1, c1);
    Some((1.0 - ty) * ((1.0 - tx) * v00 + tx * v01) + ty * ((1.0 - tx) * v10 + tx * v11))
}
