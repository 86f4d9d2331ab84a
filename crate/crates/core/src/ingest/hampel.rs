//! Hampel outlier filter for hourly station series.

use super::MeasurementTable;
use crate::POLLUTANTS;

/// Scale factor turning a median absolute deviation into a normal-consistent sigma.
const MAD_SCALE: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HampelConfig {
    /// Window length in hours; the window at `t` spans `t ± window / 2`.
    pub window: usize,
    /// MAD multiplier.
    pub k: f64,
}

impl Default for HampelConfig {
    fn default() -> Self {
        HampelConfig { window: 48, k: 6.0 }
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Removes values deviating from the centered-window median by more than
/// `k · 1.4826 · MAD`. Windows with fewer than three present values pass
/// their center through unchanged. Decisions use the input series only.
///
/// # Panics
/// If `window < 3` or `k` is not positive.
pub fn hampel_filter(series: &[Option<f64>], window: usize, k: f64) -> Vec<Option<f64>> {
    assert!(
        window >= 3,
        "hampel window must be at least 3, got {window}"
    );
    assert!(k > 0.0, "hampel multiplier must be positive, got {k}");
    let half = window / 2;
    let mut buf = Vec::with_capacity(2 * half + 1);
    let mut dev = Vec::with_capacity(2 * half + 1);
    series
        .iter()
        .enumerate()
        .map(|(t, &x)| {
            let x = x?;
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(series.len() - 1);
            buf.clear();
            buf.extend(series[lo..=hi].iter().flatten().copied());
            if buf.len() < 3 {
                return Some(x);
            }
            buf.sort_by(f64::total_cmp);
            let med = median(&buf);
            dev.clear();
            dev.extend(buf.iter().map(|v| (v - med).abs()));
            dev.sort_by(f64::total_cmp);
            let mad = median(&dev);
            if (x - med).abs() > k * MAD_SCALE * mad {
                None
            } else {
                Some(x)
            }
        })
        .collect()
}

/// Filters every station/pollutant series in place; returns the number of removed values.
pub fn clean_measurements(table: &mut MeasurementTable, config: &HampelConfig) -> usize {
    let mut removed = 0;
    for s in 0..table.n_stations() {
        for p in POLLUTANTS {
            let series = table.series(s, p);
            let filtered = hampel_filter(&series, config.window, config.k);
            removed += series
                .iter()
                .zip(&filtered)
                .filter(|(a, b)| a.is_some() && b.is_none())
                .count();
            table.set_series(s, p, &filtered);
        }
    }
    if removed > 0 {
        log::info!("hampel filter removed {removed} values");
    }
    removed
}
