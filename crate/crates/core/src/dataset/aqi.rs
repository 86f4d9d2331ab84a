//! Piecewise-linear pollutant index and exposure categories.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::{Concentrations, Error, Pollutant, Result, POLLUTANTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExposureCategory {
    Low,
    Moderate,
    High,
    VeryHigh,
}

pub const CATEGORIES: [ExposureCategory; 4] = [
    ExposureCategory::Low,
    ExposureCategory::Moderate,
    ExposureCategory::High,
    ExposureCategory::VeryHigh,
];

impl ExposureCategory {
    pub fn name(self) -> &'static str {
        match self {
            ExposureCategory::Low => "Low",
            ExposureCategory::Moderate => "Moderate",
            ExposureCategory::High => "High",
            ExposureCategory::VeryHigh => "VeryHigh",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ExposureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExposureCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        CATEGORIES
            .into_iter()
            .find(|c| c.name().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown exposure category `{s}`")))
    }
}

/// Per-pollutant `(concentration, index)` nodes plus the three category thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct AqiBreakpoints {
    nodes: [Vec<(f64, f64)>; 4],
    thresholds: [f64; 3],
}

/// Guideline concentrations (µg/m³) mapped to index 50.
const GUIDELINES: [f64; 4] = [40.0, 100.0, 25.0, 50.0];

impl Default for AqiBreakpoints {
    fn default() -> Self {
        AqiBreakpoints {
            nodes: GUIDELINES.map(|g| vec![(0.0, 0.0), (g, 50.0)]),
            thresholds: [20.0, 50.0, 100.0],
        }
    }
}

impl AqiBreakpoints {
    pub fn new(nodes: [Vec<(f64, f64)>; 4], thresholds: [f64; 3]) -> Result<Self> {
        for (p, list) in POLLUTANTS.iter().zip(&nodes) {
            if list.len() < 2 {
                return Err(Error::InvalidParameter(format!(
                    "{p}: at least two breakpoints are needed"
                )));
            }
            if list[0] != (0.0, 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{p}: first breakpoint must be 0:0"
                )));
            }
            if list.iter().any(|(c, i)| !c.is_finite() || !i.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{p}: breakpoints must be finite"
                )));
            }
            if list
                .windows(2)
                .any(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1))
            {
                return Err(Error::InvalidParameter(format!(
                    "{p}: breakpoints must be strictly increasing"
                )));
            }
        }
        if !(thresholds[0] > 0.0
            && thresholds[0] < thresholds[1]
            && thresholds[1] < thresholds[2]
            && thresholds[2].is_finite())
        {
            return Err(Error::InvalidParameter(
                "category thresholds must be positive and strictly increasing".into(),
            ));
        }
        Ok(AqiBreakpoints { nodes, thresholds })
    }

    pub fn nodes(&self, p: Pollutant) -> &[(f64, f64)] {
        &self.nodes[p.index()]
    }

    pub fn thresholds(&self) -> [f64; 3] {
        self.thresholds
    }

    /// Index of a single pollutant; linear beyond the last node.
    pub fn pollutant_aqi(&self, p: Pollutant, concentration: f64) -> Result<f64> {
        if !(concentration >= 0.0) || !concentration.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{p} concentration must be finite and non-negative, got {concentration}"
            )));
        }
        let nodes = &self.nodes[p.index()];
        let k = nodes
            .partition_point(|(c, _)| *c <= concentration)
            .clamp(1, nodes.len() - 1);
        let ((c0, i0), (c1, i1)) = (nodes[k - 1], nodes[k]);
        Ok(i0 + (concentration - c0) * (i1 - i0) / (c1 - c0))
    }

    /// Maximum index over present pollutants.
    pub fn paqi(&self, values: &Concentrations) -> Result<f64> {
        let mut best: Option<f64> = None;
        for p in POLLUTANTS {
            if let Some(c) = values[p.index()] {
                let i = self.pollutant_aqi(p, c)?;
                best = Some(best.map_or(i, |b| b.max(i)));
            }
        }
        best.ok_or_else(|| {
            Error::UndefinedInput("index of a measurement with no present pollutant".into())
        })
    }

    /// Category of an index value; intervals are closed on the left.
    pub fn categorize(&self, index: f64) -> ExposureCategory {
        let [a, b, c] = self.thresholds;
        if index < a {
            ExposureCategory::Low
        } else if index < b {
            ExposureCategory::Moderate
        } else if index < c {
            ExposureCategory::High
        } else {
            ExposureCategory::VeryHigh
        }
    }

    /// Parses the key-value format written by [`AqiBreakpoints::to_text`].
    /// Keys left out keep their default value; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let defaults = AqiBreakpoints::default();
        let mut nodes = defaults.nodes;
        let mut thresholds = defaults.thresholds;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad =
                |m: String| Error::InvalidParameter(format!("breakpoints line {}: {m}", n + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad("expected `key = value`".into()))?;
            let key = key.trim();
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("invalid number `{}`", s.trim())))
            };
            if key.eq_ignore_ascii_case("thresholds") {
                let parts = value.split(',').map(num).collect::<Result<Vec<_>>>()?;
                thresholds = parts
                    .try_into()
                    .map_err(|_| bad("expected three thresholds".into()))?;
            } else {
                let p: Pollutant = key
                    .parse()
                    .map_err(|_| bad(format!("unknown key `{key}`")))?;
                nodes[p.index()] = value
                    .split(',')
                    .map(|pair| {
                        let (c, i) = pair
                            .split_once(':')
                            .ok_or_else(|| bad(format!("expected `c:i`, got `{}`", pair.trim())))?;
                        Ok((num(c)?, num(i)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
            }
        }
        AqiBreakpoints::new(nodes, thresholds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in POLLUTANTS {
            let pairs: Vec<String> = self.nodes[p.index()]
                .iter()
                .map(|(c, i)| format!("{c}:{i}"))
                .collect();
            out.push_str(&format!("{} = {}\n", p.key(), pairs.join(", ")));
        }
        let [a, b, c] = self.thresholds;
        out.push_str(&format!("thresholds = {a}, {b}, {c}\n"));
        out
    }
}
