//! JSONL interchange for situations, pairs, and raw series.
//!
//! One object per line. Situation values are written as a T-row array of
//! C-entry rows with `null` marking missing cells, so a file round-trips the
//! mask without a separate field; imputation is re-applied on load where the
//! consumer needs sentinel-filled matrices.

use super::{Meta, RawSeries, Situation, SituationPair};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct SituationWire {
    id: String,
    values: Vec<Vec<Option<f32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<Meta>,
}

impl From<&Situation> for SituationWire {
    fn from(s: &Situation) -> Self {
        let values = (0..s.steps)
            .map(|t| {
                (0..s.channels)
                    .map(|c| {
                        if s.is_observed(t, c) {
                            Some(s.cell(t, c))
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            id: s.id.clone(),
            values,
            meta: s.meta.clone(),
        }
    }
}

impl SituationWire {
    fn into_situation(self) -> Result<Situation> {
        let steps = self.values.len();
        let channels = self.values.first().map_or(0, Vec::len);
        if steps == 0 || channels == 0 {
            return Err(Error::Input(format!(
                "situation '{}' has an empty value matrix",
                self.id
            )));
        }
        let mut values = Vec::with_capacity(steps * channels);
        let mut mask = Vec::with_capacity(steps * channels);
        for (t, row) in self.values.iter().enumerate() {
            if row.len() != channels {
                return Err(Error::Input(format!(
                    "situation '{}': row {} has {} entries, expected {}",
                    self.id,
                    t,
                    row.len(),
                    channels
                )));
            }
            for cell in row {
                mask.push(cell.is_some());
                values.push(cell.unwrap_or(0.0));
            }
        }
        let mut s = Situation::new(self.id, steps, channels, values, mask)?;
        s.meta = self.meta;
        Ok(s)
    }
}

#[derive(Serialize, Deserialize)]
struct PairWire {
    first: SituationWire,
    second: SituationWire,
}

fn write_lines<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| {
            Error::Input(format!(
                "{}:{}: malformed record: {}",
                path.display(),
                lineno + 1,
                e
            ))
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_situations(path: &Path, situations: &[Situation]) -> Result<()> {
    write_lines(path, situations.iter().map(SituationWire::from))
}

pub fn read_situations(path: &Path) -> Result<Vec<Situation>> {
    read_lines::<SituationWire>(path)?
        .into_iter()
        .map(SituationWire::into_situation)
        .collect()
}

pub fn write_pairs(path: &Path, pairs: &[SituationPair]) -> Result<()> {
    write_lines(
        path,
        pairs.iter().map(|p| PairWire {
            first: SituationWire::from(&p.first),
            second: SituationWire::from(&p.second),
        }),
    )
}

pub fn read_pairs(path: &Path) -> Result<Vec<SituationPair>> {
    read_lines::<PairWire>(path)?
        .into_iter()
        .map(|w| SituationPair::new(w.first.into_situation()?, w.second.into_situation()?))
        .collect()
}

pub fn write_raw_series(path: &Path, series: &[RawSeries]) -> Result<()> {
    write_lines(path, series.iter())
}

pub fn read_raw_series(path: &Path) -> Result<Vec<RawSeries>> {
    read_lines(path)
}
