use std::fmt;
use std::str::FromStr;

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pollutant {
    No2,
    O3,
    Pm25,
    Pm10,
}

pub const POLLUTANTS: [Pollutant; 4] = [
    Pollutant::No2,
    Pollutant::O3,
    Pollutant::Pm25,
    Pollutant::Pm10,
];

/// One optional concentration per pollutant, in µg/m³, indexed in `POLLUTANTS` order.
pub type Concentrations = [Option<f64>; 4];

impl Pollutant {
    pub fn index(self) -> usize {
        self as usize
    }

    /// Upper-case name used in feature names (`NO2`, `PM25`, ...).
    pub fn name(self) -> &'static str {
        match self {
            Pollutant::No2 => "NO2",
            Pollutant::O3 => "O3",
            Pollutant::Pm25 => "PM25",
            Pollutant::Pm10 => "PM10",
        }
    }

    /// Lower-case key used in CSV headers and config files.
    pub fn key(self) -> &'static str {
        match self {
            Pollutant::No2 => "no2",
            Pollutant::O3 => "o3",
            Pollutant::Pm25 => "pm25",
            Pollutant::Pm10 => "pm10",
        }
    }
}

impl fmt::Display for Pollutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pollutant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['.', '_'], "")
            .as_str()
        {
            "no2" => Ok(Pollutant::No2),
            "o3" => Ok(Pollutant::O3),
            "pm25" => Ok(Pollutant::Pm25),
            "pm10" => Ok(Pollutant::Pm10),
            other => Err(Error::InvalidParameter(format!(
                "unknown pollutant `{other}`"
            ))),
        }
    }
}
