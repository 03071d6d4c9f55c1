//! Ingestion of laboratory weighing records and dataset bundles.
//!
//! One CSV file per specimen:
//!
//! ```text
//! # specimen_id=M1
//! # dry_mass_g=236.41
//! # area_cm2=25.0
//! time_min,mass_g
//! 1,236.52
//! 3,236.65
//! ```
//!
//! A dataset bundle is a directory of such files plus `manifest.json` naming
//! the material, the ambient environment, and the specimen grouping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{ImbibitionSeries, SeriesError};

/// Ambient moisture fraction used when no override or formula is requested
/// (27 degrees C, 80% relative humidity).
pub const DEFAULT_AMBIENT_MOISTURE: f64 = 2.33e-5;

/// Balance readings this far below the dry mass are accepted as scale noise.
pub const SCALE_NOISE_G: f64 = 0.01;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Format {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid specimen {id}: {msg}")]
    InvalidSpecimen { id: String, msg: String },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("series do not share a measurement schedule")]
    MismatchedSchedules,
    #[error("unknown group {0:?}")]
    UnknownGroup(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Weighing record of one specimen.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecimenLog {
    id: String,
    dry_mass: f64,
    area: f64,
    times: Vec<f64>,
    masses: Vec<f64>,
}

impl SpecimenLog {
    pub fn new(
        id: impl Into<String>,
        dry_mass: f64,
        area: f64,
        records: &[(f64, f64)],
    ) -> Result<Self, DataError> {
        let id = id.into();
        let fail = |msg: String| DataError::InvalidSpecimen {
            id: id.clone(),
            msg,
        };
        if !(area > 0.0) || !area.is_finite() {
            return Err(fail(format!("contact area {area} must be positive")));
        }
        if !(dry_mass > 0.0) || !dry_mass.is_finite() {
            return Err(fail(format!("dry mass {dry_mass} must be positive")));
        }
        if records.is_empty() {
            return Err(fail("no weighing records".into()));
        }
        let mut times = Vec::with_capacity(records.len());
        let mut masses = Vec::with_capacity(records.len());
        for &(t, m) in records {
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(fail(format!("times must be strictly increasing at {t}")));
                }
            }
            if !m.is_finite() || m < dry_mass - SCALE_NOISE_G {
                return Err(fail(format!(
                    "wet mass {m} g falls more than {SCALE_NOISE_G} g below the dry mass {dry_mass} g"
                )));
            }
            times.push(t);
            masses.push(m);
        }
        Ok(Self {
            id,
            dry_mass,
            area,
            times,
            masses,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dry_mass(&self) -> f64 {
        self.dry_mass
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn records(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.masses.iter().copied())
    }

    /// Absorbed mass per unit area at each weighing: `(m - dry) / area`.
    /// Slight dips below the dry mass are ingested as-is; the reconstruction
    /// step is the place where non-monotone noise gets repaired.
    pub fn uptake_series(&self) -> Result<ImbibitionSeries, DataError> {
        let values = self
            .masses
            .iter()
            .map(|m| (m - self.dry_mass) / self.area)
            .collect();
        Ok(ImbibitionSeries::new(self.times.clone(), values)?)
    }
}

/// Pointwise mean of series sharing one measurement schedule. No resampling:
/// mismatched schedules are an error.
pub fn average_series(series: &[ImbibitionSeries]) -> Result<ImbibitionSeries, DataError> {
    let first = series.first().ok_or(DataError::MismatchedSchedules)?;
    for s in &series[1..] {
        if s.times() != first.times() {
            return Err(DataError::MismatchedSchedules);
        }
    }
    let n = series.len() as f64;
    let values = (0..first.len())
        .map(|i| series.iter().map(|s| s.values()[i]).sum::<f64>() / n)
        .collect();
    Ok(ImbibitionSeries::new(first.times().to_vec(), values)?)
}

/// Ambient conditions during a test campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub temperature_c: f64,
    /// Relative humidity as a fraction in [0, 1].
    pub relative_humidity: f64,
    /// Explicit ambient moisture fraction, overriding everything else.
    #[serde(default)]
    pub ambient_override: Option<f64>,
    /// Evaluate the saturated-vapor-density fit instead of the default
    /// constant. Off by default: the shipped fit is a legacy approximation
    /// kept for comparison, not a calibrated source.
    #[serde(default)]
    pub use_formula: bool,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            temperature_c: 27.0,
            relative_humidity: 0.8,
            ambient_override: None,
            use_formula: false,
        }
    }
}

impl Environment {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(0.0..=1.0).contains(&self.relative_humidity) {
            return Err(DataError::Manifest(format!(
                "relative humidity {} must lie in [0, 1]",
                self.relative_humidity
            )));
        }
        Ok(())
    }
}

/// Ambient moisture fraction for the environment: the override when present,
/// the vapor-density fit when requested, the default constant otherwise.
pub fn ambient_moisture(env: &Environment) -> f64 {
    if let Some(v) = env.ambient_override {
        return v;
    }
    if env.use_formula {
        saturated_vapor_fit(env.temperature_c) * env.relative_humidity
    } else {
        DEFAULT_AMBIENT_MOISTURE
    }
}

/// Cubic fit of the saturated vapor density (per unit relative humidity).
fn saturated_vapor_fit(t: f64) -> f64 {
    1e-6 * (5.02 + 0.32 * t + 8.18 * t * t + 3.12 * t * t * t)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub material: String,
    pub environment: Environment,
    /// Group name to specimen file names, relative to the bundle directory.
    pub groups: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub material: String,
    pub environment: Environment,
    pub groups: BTreeMap<String, Vec<SpecimenLog>>,
}

impl Dataset {
    /// Mean uptake curve across the specimens of a group.
    pub fn averaged_uptake(&self, group: &str) -> Result<ImbibitionSeries, DataError> {
        let logs = self
            .groups
            .get(group)
            .ok_or_else(|| DataError::UnknownGroup(group.to_string()))?;
        let series: Vec<ImbibitionSeries> = logs
            .iter()
            .map(|l| l.uptake_series())
            .collect::<Result<_, _>>()?;
        average_series(&series)
    }

    pub fn group_names(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(|s| s.as_str())
    }
}

pub fn parse_specimen_csv(text: &str, fallback_id: &str, path: &Path) -> Result<SpecimenLog, DataError> {
    let mut id = fallback_id.to_string();
    let mut dry_mass = None;
    let mut area = None;
    let mut records = Vec::new();
    let mut saw_header = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |msg: String| DataError::Format {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let Some((key, value)) = rest.split_once('=') else {
                return Err(err(format!("malformed header line {line:?}")));
            };
            let value = value.trim();
            match key.trim() {
                "specimen_id" => id = value.to_string(),
                "dry_mass_g" => {
                    dry_mass = Some(value.parse::<f64>().map_err(|e| err(e.to_string()))?)
                }
                "area_cm2" => area = Some(value.parse::<f64>().map_err(|e| err(e.to_string()))?),
                other => return Err(err(format!("unknown header key {other:?}"))),
            }
            continue;
        }
        if !saw_header {
            if line != "time_min,mass_g" {
                return Err(err(format!(
                    "expected column header \"time_min,mass_g\", got {line:?}"
                )));
            }
            saw_header = true;
            continue;
        }
        let Some((t, m)) = line.split_once(',') else {
            return Err(err(format!("expected \"time,mass\", got {line:?}")));
        };
        let t = t.trim().parse::<f64>().map_err(|e| err(e.to_string()))?;
        let m = m.trim().parse::<f64>().map_err(|e| err(e.to_string()))?;
        records.push((t, m));
    }

    let whole_file = |msg: String| DataError::Format {
        path: path.to_path_buf(),
        line: 0,
        msg,
    };
    let dry_mass = dry_mass.ok_or_else(|| whole_file("missing dry_mass_g header".into()))?;
    let area = area.ok_or_else(|| whole_file("missing area_cm2 header".into()))?;
    SpecimenLog::new(id, dry_mass, area, &records)
}

pub fn read_specimen_csv(path: &Path) -> Result<SpecimenLog, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fallback = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "specimen".into());
    parse_specimen_csv(&text, &fallback, path)
}

/// Loads a dataset bundle: `manifest.json` plus the specimen files it names.
pub fn load_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|source| DataError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))?;
    if manifest.version != 1 {
        return Err(DataError::Manifest(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    manifest.environment.validate()?;
    if manifest.groups.is_empty() {
        return Err(DataError::Manifest("no specimen groups".into()));
    }

    let mut groups = BTreeMap::new();
    for (name, files) in &manifest.groups {
        if files.is_empty() {
            return Err(DataError::Manifest(format!("group {name:?} is empty")));
        }
        let mut logs = Vec::with_capacity(files.len());
        for file in files {
            logs.push(read_specimen_csv(&dir.join(file))?);
        }
        groups.insert(name.clone(), logs);
    }
    Ok(Dataset {
        material: manifest.material,
        environment: manifest.environment,
        groups,
    })
}
