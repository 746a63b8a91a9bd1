//! Geographic/temporal/sensor metadata records for tiles, the catalog and
//! manifest JSONL formats, and the meteorological season rule.

use crate::error::{Error, Result};
use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Meteorological season (calendar quarters, hemisphere-dependent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Fall];
}

/// Imaging sensor of a view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sensor {
    #[serde(rename = "GeoEye-1")]
    GeoEye1,
    #[serde(rename = "WorldView-2")]
    WorldView2,
    #[serde(rename = "WorldView-3")]
    WorldView3,
    #[serde(rename = "other")]
    Other,
}

/// Meteorological season of a date at a latitude: DJF/MAM/JJA/SON for the
/// northern hemisphere, shifted by two quarters south of the equator.
pub fn derive_season(date: NaiveDate, lat: f64) -> Season {
    let northern = match date.month() {
        12 | 1 | 2 => Season::Winter,
        3..=5 => Season::Spring,
        6..=8 => Season::Summer,
        _ => Season::Fall,
    };
    if lat >= 0.0 {
        northern
    } else {
        match northern {
            Season::Winter => Season::Summer,
            Season::Spring => Season::Fall,
            Season::Summer => Season::Winter,
            Season::Fall => Season::Spring,
        }
    }
}

/// One catalog/manifest record: a tile and its location metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub location_id: String,
    pub lat: f64,
    pub lon: f64,
    pub sensor: Sensor,
    /// Ground sample distance in m/px.
    pub gsd: f64,
    /// Acquisition date, ISO `YYYY-MM-DD`.
    pub date: NaiveDate,
    pub season: Season,
    pub year: i32,
    /// 24-hour population estimate at the location.
    pub population: f64,
    pub land_cover: String,
    pub climate_zone: String,
    pub biome: String,
    /// Tile file path.
    pub path: String,
}

impl ManifestEntry {
    pub fn validate(&self) -> Result<()> {
        if self.gsd <= 0.0 {
            return Err(Error::Config(format!(
                "entry {}: gsd must be > 0, got {}",
                self.path, self.gsd
            )));
        }
        if self.population < 0.0 {
            return Err(Error::Config(format!(
                "entry {}: population must be >= 0",
                self.path
            )));
        }
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::Config(format!(
                "entry {}: bad coordinates ({}, {})",
                self.path, self.lat, self.lon
            )));
        }
        let expected = derive_season(self.date, self.lat);
        if self.season != expected {
            return Err(Error::Config(format!(
                "entry {}: season {:?} inconsistent with date {} at lat {} (expected {:?})",
                self.path, self.season, self.date, self.lat, expected
            )));
        }
        if self.year != self.date.year() {
            return Err(Error::Config(format!(
                "entry {}: year {} does not match date {}",
                self.path, self.year, self.date
            )));
        }
        Ok(())
    }

    pub fn stratum(&self) -> (String, String) {
        (self.land_cover.clone(), self.climate_zone.clone())
    }
}

/// Read a JSONL catalog (one `ManifestEntry` object per line). Every entry
/// is validated.
pub fn read_catalog(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)
            .map_err(|e| Error::Config(format!("catalog line {}: {e}", ln + 1)))?;
        entry.validate()?;
        out.push(entry);
    }
    Ok(out)
}

/// Write entries as JSONL.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut file = std::fs::File::create(path.as_ref())?;
    for e in entries {
        let line = serde_json::to_string(e)?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn season_rule_northern() {
        assert_eq!(derive_season(date(2020, 1, 15), 48.0), Season::Winter);
        assert_eq!(derive_season(date(2020, 9, 1), 25.0), Season::Fall);
        assert_eq!(derive_season(date(2020, 12, 31), 0.0), Season::Winter);
        assert_eq!(derive_season(date(2020, 5, 31), 10.0), Season::Spring);
    }

    #[test]
    fn season_rule_southern_shifts_two_quarters() {
        assert_eq!(derive_season(date(2020, 1, 15), -30.0), Season::Summer);
        assert_eq!(derive_season(date(2020, 7, 1), -12.0), Season::Winter);
        assert_eq!(derive_season(date(2020, 4, 10), -45.0), Season::Fall);
        assert_eq!(derive_season(date(2020, 10, 10), -45.0), Season::Spring);
    }

    fn entry() -> ManifestEntry {
        ManifestEntry {
            location_id: "loc-1".into(),
            lat: 48.2,
            lon: 16.3,
            sensor: Sensor::WorldView2,
            gsd: 0.4,
            date: date(2019, 1, 20),
            season: Season::Winter,
            year: 2019,
            population: 1200.0,
            land_cover: "urban".into(),
            climate_zone: "temperate".into(),
            biome: "forest".into(),
            path: "tiles/loc-1-a.mtil".into(),
        }
    }

    #[test]
    fn entry_validation_catches_season_mismatch() {
        let mut e = entry();
        assert!(e.validate().is_ok());
        e.season = Season::Summer;
        assert!(e.validate().is_err());
        // same date on the southern hemisphere IS summer
        e.lat = -30.0;
        assert!(e.validate().is_ok());
    }

    #[test]
    fn entry_validation_checks_ranges() {
        let mut e = entry();
        e.gsd = 0.0;
        assert!(e.validate().is_err());
        let mut e = entry();
        e.population = -1.0;
        assert!(e.validate().is_err());
        let mut e = entry();
        e.year = 2020;
        assert!(e.validate().is_err());
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.jsonl");
        let entries = vec![entry()];
        write_manifest(&path, &entries).unwrap();
        let back = read_catalog(&path).unwrap();
        assert_eq!(entries, back);
    }

    #[test]
    fn sensor_names_serialize_as_published() {
        let json = serde_json::to_string(&Sensor::GeoEye1).unwrap();
        assert_eq!(json, "\"GeoEye-1\"");
        let json = serde_json::to_string(&Sensor::WorldView3).unwrap();
        assert_eq!(json, "\"WorldView-3\"");
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut v = serde_json::to_value(entry()).unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("bogus".into(), serde_json::json!(1));
        let s = serde_json::to_string(&v).unwrap();
        assert!(serde_json::from_str::<ManifestEntry>(&s).is_err());
    }
}
