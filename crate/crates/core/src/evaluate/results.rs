//! Results CSV: `house_id, arm, repeat, seed, macro_f1, mivo_scalar, acc_<room>...`.
//!
//! Wall time is left out so reruns produce identical files.

use std::io::{Read, Write};
use std::path::Path;

use crate::domain::{Arm, ExperimentResult};
use crate::error::{Error, IoContext, Result};

const FIXED: [&str; 6] = ["house_id", "arm", "repeat", "seed", "macro_f1", "mivo_scalar"];

fn cell(v: f64) -> String {
    format!("{v:.6}")
}

/// `rooms` fixes the order of the accuracy columns; a room missing from a
/// result leaves its cell empty.
pub fn write_results_to(w: impl Write, results: &[ExperimentResult], rooms: &[String]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    header.extend(rooms.iter().map(|r| format!("acc_{r}")));
    out.write_record(&header)?;
    for r in results {
        let mut row = vec![
            r.house_id.clone(),
            r.arm.name().to_string(),
            r.repeat_index.to_string(),
            r.seed.to_string(),
            cell(r.macro_f1),
            r.mivo.map(cell).unwrap_or_default(),
        ];
        row.extend(rooms.iter().map(|room| r.per_class_accuracy.get(room).copied().map(cell).unwrap_or_default()));
        out.write_record(&row)?;
    }
    out.flush().at("results")?;
    Ok(())
}

pub fn write_results(path: &Path, results: &[ExperimentResult], rooms: &[String]) -> Result<()> {
    let mut buf = Vec::new();
    write_results_to(&mut buf, results, rooms)?;
    std::fs::write(path, buf).at(path)
}

fn parse<T: std::str::FromStr>(s: &str, column: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Invalid(format!("results line {line}: bad {column} `{s}`")))
}

pub fn read_results_from(r: impl Read) -> Result<Vec<ExperimentResult>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < FIXED.len() || header[..FIXED.len()] != FIXED {
        return Err(Error::Invalid(format!("results header must start with {}", FIXED.join(","))));
    }
    let mut rooms = Vec::new();
    for h in &header[FIXED.len()..] {
        let room = h.strip_prefix("acc_").ok_or_else(|| Error::Invalid(format!("unexpected results column `{h}`")))?;
        rooms.push(room.to_string());
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let arm: Arm = rec[1].parse()?;
        let mut per_class_accuracy = std::collections::BTreeMap::new();
        for (j, room) in rooms.iter().enumerate() {
            let v = &rec[FIXED.len() + j];
            if !v.is_empty() {
                per_class_accuracy.insert(room.clone(), parse(v, &header[FIXED.len() + j], line)?);
            }
        }
        out.push(ExperimentResult {
            house_id: rec[0].to_string(),
            arm,
            repeat_index: parse(&rec[2], "repeat", line)?,
            seed: parse(&rec[3], "seed", line)?,
            macro_f1: parse(&rec[4], "macro_f1", line)?,
            mivo: if rec[5].is_empty() { None } else { Some(parse(&rec[5], "mivo_scalar", line)?) },
            per_class_accuracy,
            wall_time_s: 0.0,
        });
    }
    Ok(out)
}

pub fn read_results(path: &Path) -> Result<Vec<ExperimentResult>> {
    let f = std::fs::File::open(path).at(path)?;
    read_results_from(f)
}

/// Room columns for a set of houses: each house's rooms in id order, first
/// occurrence wins.
pub fn room_columns<'a>(houses: impl IntoIterator<Item = &'a crate::domain::HouseConfig>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for h in houses {
        for r in &h.rooms {
            if !out.contains(&r.name) {
                out.push(r.name.clone());
            }
        }
    }
    out
}
