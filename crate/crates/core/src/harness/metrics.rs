//! Append-only JSON-lines metrics stream, flushed after every record.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{FineTuneRecord, GenerationRecord, RunHistory};

/// Floats that may be infinite are written as `null` and read back as `+inf`.
mod lossy_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsRow {
    Baseline {
        epoch: usize,
        #[serde(with = "lossy_float")]
        loss: f64,
        lr: f64,
        backed_off: bool,
    },
    RoundStart {
        round: usize,
        #[serde(with = "lossy_float")]
        anchor: f64,
    },
    Generation {
        round: usize,
        k: usize,
        #[serde(with = "lossy_float")]
        best: f64,
        #[serde(with = "lossy_float")]
        median: f64,
        #[serde(with = "lossy_float")]
        anchor: f64,
        switched: bool,
        a_k: f64,
        b_k: f64,
        non_finite: usize,
    },
    AnchorSwitch {
        round: usize,
        k: usize,
        step: usize,
        #[serde(with = "lossy_float")]
        old: f64,
        #[serde(with = "lossy_float")]
        new: f64,
        id: u64,
    },
    FineTune {
        round: usize,
        epoch: usize,
        #[serde(with = "lossy_float")]
        best: f64,
        #[serde(with = "lossy_float")]
        anchor: f64,
        backoffs: usize,
    },
    /// Round boundary; `final_best` becomes the next round's anchor.
    RoundEnd {
        round: usize,
        #[serde(with = "lossy_float")]
        initial_anchor: f64,
        #[serde(with = "lossy_float")]
        final_best: f64,
        anchor_update: bool,
    },
}

pub fn generation_rows(g: &GenerationRecord) -> Vec<MetricsRow> {
    let mut rows = vec![MetricsRow::Generation {
        round: g.round,
        k: g.generation,
        best: g.best,
        median: g.median,
        anchor: g.anchor,
        switched: g.switched,
        a_k: g.lr_low,
        b_k: g.lr_high,
        non_finite: g.non_finite,
    }];
    rows.extend(g.switches.iter().map(|s| MetricsRow::AnchorSwitch {
        round: g.round,
        k: s.generation,
        step: s.evolution_step,
        old: s.old_fitness,
        new: s.new_fitness,
        id: s.new_anchor_id,
    }));
    rows
}

pub fn fine_tune_row(f: &FineTuneRecord) -> MetricsRow {
    MetricsRow::FineTune {
        round: f.round,
        epoch: f.epoch,
        best: f.best,
        anchor: f.anchor,
        backoffs: f.backoffs,
    }
}

/// Rows a live run emits up to the state captured in `history`, with
/// `current` = (round in progress, its initial anchor fitness).
pub fn rows_from_history(history: &RunHistory, current: Option<(usize, f64)>) -> Vec<MetricsRow> {
    let last_round = current
        .map(|(r, _)| r)
        .into_iter()
        .chain(history.rounds.iter().map(|r| r.round))
        .max();
    let Some(last_round) = last_round else {
        return Vec::new();
    };
    let mut rows = Vec::new();
    for round in 0..=last_round {
        let finished = history.rounds.iter().find(|r| r.round == round);
        let anchor = match (finished, current) {
            (Some(r), _) => r.initial_anchor,
            (None, Some((cr, a))) if cr == round => a,
            _ => continue,
        };
        rows.push(MetricsRow::RoundStart { round, anchor });
        for g in history.generations.iter().filter(|g| g.round == round) {
            rows.extend(generation_rows(g));
        }
        if let Some(r) = finished {
            rows.extend(
                history
                    .fine_tune
                    .iter()
                    .filter(|f| f.round == round)
                    .map(fine_tune_row),
            );
            rows.push(MetricsRow::RoundEnd {
                round,
                initial_anchor: r.initial_anchor,
                final_best: r.final_best,
                anchor_update: true,
            });
        }
    }
    rows
}

pub struct MetricsWriter {
    path: PathBuf,
    file: File,
}

impl MetricsWriter {
    /// Starts a new stream, replacing any existing file.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn write_rows(&mut self, rows: &[MetricsRow]) -> Result<()> {
        let mut text = String::new();
        for row in rows {
            text.push_str(&serde_json::to_string(row).expect("metrics rows serialize"));
            text.push('\n');
        }
        self.file
            .write_all(text.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_values_survive_as_null() {
        let row = MetricsRow::RoundStart {
            round: 0,
            anchor: f64::INFINITY,
        };
        let text = serde_json::to_string(&row).unwrap();
        assert_eq!(text, r#"{"kind":"round_start","round":0,"anchor":null}"#);
        assert_eq!(serde_json::from_str::<MetricsRow>(&text).unwrap(), row);
    }

    #[test]
    fn generation_row_schema() {
        let row = MetricsRow::Generation {
            round: 0,
            k: 3,
            best: 0.5,
            median: 0.75,
            anchor: 0.5,
            switched: true,
            a_k: 1e-4,
            b_k: 2e-3,
            non_finite: 0,
        };
        assert_eq!(
            serde_json::to_string(&row).unwrap(),
            r#"{"kind":"generation","round":0,"k":3,"best":0.5,"median":0.75,"anchor":0.5,"switched":true,"a_k":0.0001,"b_k":0.002,"non_finite":0}"#
        );
    }
}
