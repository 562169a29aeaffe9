//! On-disk layouts.
//!
//! Raw house directory: `config.json`, `fingerprint.csv`, `free_living.csv`,
//! CSV columns `t_unix_s, ap_0 .. ap_{n-1}, room_id` with empty cells for
//! missing readings or unlabelled rows. Processed dataset directory:
//! `dataset.json` holding the whole [`HouseDataset`].

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::domain::{HouseConfig, HouseDataset};
use crate::error::{Error, IoContext, Result};
use crate::preprocess::{RawHouseData, RawStream};

pub const CONFIG_FILE: &str = "config.json";
pub const FINGERPRINT_FILE: &str = "fingerprint.csv";
pub const FREE_LIVING_FILE: &str = "free_living.csv";
pub const DATASET_FILE: &str = "dataset.json";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).at(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).at(path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn write_stream(path: &Path, stream: &RawStream, n_aps: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t_unix_s".to_string()];
    header.extend((0..n_aps).map(|i| format!("ap_{i}")));
    header.push("room_id".into());
    w.write_record(&header)?;
    for i in 0..stream.len() {
        let mut rec = Vec::with_capacity(n_aps + 2);
        rec.push(format!("{:.3}", stream.timestamps[i]));
        rec.extend(stream.readings[i].iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        rec.push(stream.rooms[i].map(|r| r.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().at(path)
}

fn parse_cell<T: std::str::FromStr>(cell: &str, path: &Path, line: usize, col: &str) -> Result<Option<T>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse()
        .map(Some)
        .map_err(|_| Error::Invalid(format!("{}:{line}: bad value `{cell}` in column {col}", path.display())))
}

fn read_stream(path: &Path, n_aps: usize) -> Result<RawStream> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let expected: Vec<String> = std::iter::once("t_unix_s".to_string())
        .chain((0..n_aps).map(|i| format!("ap_{i}")))
        .chain(std::iter::once("room_id".to_string()))
        .collect();
    if headers.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(Error::Invalid(format!(
            "{}: expected columns {}, found {}",
            path.display(),
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut stream = RawStream::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let t = parse_cell::<f64>(&rec[0], path, line, "t_unix_s")?
            .ok_or_else(|| Error::Invalid(format!("{}:{line}: missing timestamp", path.display())))?;
        let readings = (0..n_aps)
            .map(|ap| parse_cell::<f64>(&rec[ap + 1], path, line, &expected[ap + 1]))
            .collect::<Result<Vec<_>>>()?;
        let room = parse_cell::<usize>(&rec[n_aps + 1], path, line, "room_id")?;
        stream.push(t, readings, room);
    }
    stream.check(n_aps)?;
    Ok(stream)
}

pub fn write_raw_house(dir: &Path, raw: &RawHouseData) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    write_json(&dir.join(CONFIG_FILE), &raw.config)?;
    write_stream(&dir.join(FINGERPRINT_FILE), &raw.fingerprint, raw.config.n_aps)?;
    write_stream(&dir.join(FREE_LIVING_FILE), &raw.free_living, raw.config.n_aps)
}

pub fn read_raw_house(dir: &Path) -> Result<RawHouseData> {
    let config: HouseConfig = read_json(&dir.join(CONFIG_FILE))?;
    let problems = config.check();
    if !problems.is_empty() {
        return Err(Error::Invalid(format!("{}: {}", dir.join(CONFIG_FILE).display(), problems.join("; "))));
    }
    Ok(RawHouseData {
        fingerprint: read_stream(&dir.join(FINGERPRINT_FILE), config.n_aps)?,
        free_living: read_stream(&dir.join(FREE_LIVING_FILE), config.n_aps)?,
        config,
    })
}

pub fn write_dataset(dir: &Path, ds: &HouseDataset) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    let path = dir.join(DATASET_FILE);
    fs::write(&path, serde_json::to_vec(ds)?).at(&path)
}

/// Accepts either a dataset directory or the `dataset.json` file itself.
pub fn read_dataset(path: &Path) -> Result<HouseDataset> {
    let file = if path.is_dir() { path.join(DATASET_FILE) } else { path.to_path_buf() };
    read_json(&file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{preprocess_house, PreprocessOptions};
    use crate::simulate::{builtin, synthesize_dataset};

    #[test]
    fn raw_house_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let raw = synthesize_dataset(&builtin("source_1").unwrap(), 1.0, 1.5, 4).unwrap();
        assert!(raw.fingerprint.missing_count() > 0);
        write_raw_house(dir.path(), &raw).unwrap();
        assert_eq!(read_raw_house(dir.path()).unwrap(), raw);
    }

    #[test]
    fn dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let raw = synthesize_dataset(&builtin("three_room").unwrap(), 2.0, 2.0, 4).unwrap();
        let ds = preprocess_house(&raw, &PreprocessOptions::default()).unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
        assert_eq!(read_dataset(&dir.path().join(DATASET_FILE)).unwrap(), ds);
    }

    #[test]
    fn empty_cells_are_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "t_unix_s,ap_0,ap_1,room_id\n0.000,-60,,1\n0.200,,-70,\n").unwrap();
        let s = read_stream(&p, 2).unwrap();
        assert_eq!(s.readings, vec![vec![Some(-60.0), None], vec![None, Some(-70.0)]]);
        assert_eq!(s.rooms, vec![Some(1), None]);
        fs::write(&p, "t_unix_s,ap_0,room_id\n0.000,-60,1\n").unwrap();
        assert!(read_stream(&p, 2).is_err());
        fs::write(&p, "t_unix_s,ap_0,ap_1,room_id\n0.000,loud,,1\n").unwrap();
        assert!(read_stream(&p, 2).unwrap_err().to_string().contains("ap_0"));
    }
}
