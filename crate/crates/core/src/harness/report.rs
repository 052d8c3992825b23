//! Run summaries and plot-ready tables built from the metrics stream.

use std::fmt::Write as _;

use super::metrics::MetricsRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub initial: f64,
    pub final_best: f64,
    pub generations: usize,
    pub switches: usize,
}

impl Summary {
    pub fn improvement(&self) -> f64 {
        self.initial - self.final_best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Tab-separated table, one row per generation (or baseline epoch).
    pub table: String,
    /// Human-readable text: table, switch events and summary block.
    pub text: String,
    pub summary: Summary,
}

pub const SUMMARY_HEADER: &str =
    "initial\tfinal_best\timprovement\tgenerations\tswitches\tmonotone";

fn summary_block(s: &Summary) -> String {
    format!(
        "# summary\n{SUMMARY_HEADER}\n{:.6}\t{:.6}\t{:.6}\t{}\t{}\ttrue\n",
        s.initial,
        s.final_best,
        s.improvement(),
        s.generations,
        s.switches
    )
}

fn non_monotone(what: &str, at: usize, prev: f64, next: f64) -> Error {
    Error::Format {
        path: "metrics.jsonl".into(),
        message: format!("{what} increases at {at}: {prev} -> {next}"),
    }
}

pub fn build_report(rows: &[MetricsRow]) -> Result<Report> {
    if rows.is_empty() {
        return Err(Error::Empty("metrics stream"));
    }
    if rows
        .iter()
        .all(|r| matches!(r, MetricsRow::Baseline { .. }))
    {
        return baseline_report(rows);
    }

    let mut table = String::from("generation\tround\tbest\tmedian\tanchor\tswitched\ta_k\tb_k\n");
    let mut events = String::new();
    let mut initial = None;
    let mut last_best = None;
    let mut final_best = None;
    let mut generations = 0;
    let mut switches = 0;
    for row in rows {
        match *row {
            MetricsRow::RoundStart { anchor, .. } => {
                initial.get_or_insert(anchor);
                if let Some(prev) = last_best {
                    if anchor > prev {
                        return Err(non_monotone("round anchor", generations, prev, anchor));
                    }
                }
                last_best = Some(anchor);
            }
            MetricsRow::Generation {
                round,
                k,
                best,
                median,
                anchor,
                switched,
                a_k,
                b_k,
                ..
            } => {
                if let Some(prev) = last_best {
                    if best > prev {
                        return Err(non_monotone("best fitness", k, prev, best));
                    }
                }
                last_best = Some(best);
                final_best = Some(best);
                generations += 1;
                let _ = writeln!(
                    table,
                    "{k}\t{round}\t{best:.6}\t{median:.6}\t{anchor:.6}\t{}\t{a_k:e}\t{b_k:e}",
                    switched as u8
                );
            }
            MetricsRow::AnchorSwitch {
                k,
                step,
                old,
                new,
                id,
                ..
            } => {
                switches += 1;
                let _ = writeln!(
                    events,
                    "anchor switch: generation {k} step {step}: {old:.6} -> {new:.6} (id {id})"
                );
            }
            MetricsRow::FineTune { best, .. } => {
                final_best = Some(final_best.map_or(best, |f: f64| f.min(best)));
            }
            MetricsRow::RoundEnd { final_best: fb, .. } => {
                final_best = Some(fb);
                last_best = Some(fb);
            }
            MetricsRow::Baseline { .. } => {}
        }
    }
    let initial = initial.ok_or(Error::Empty("round_start row"))?;
    let summary = Summary {
        initial,
        final_best: final_best.unwrap_or(initial),
        generations,
        switches,
    };
    let text = format!("{table}\n{events}{}", summary_block(&summary));
    Ok(Report {
        table,
        text,
        summary,
    })
}

fn baseline_report(rows: &[MetricsRow]) -> Result<Report> {
    let mut table = String::from("epoch\tloss\tlr\tbacked_off\n");
    let mut initial = None;
    let mut last = None;
    let mut epochs = 0;
    for row in rows {
        if let MetricsRow::Baseline {
            epoch,
            loss,
            lr,
            backed_off,
        } = *row
        {
            if let Some(prev) = last {
                if loss > prev {
                    return Err(non_monotone("baseline loss", epoch, prev, loss));
                }
            }
            initial.get_or_insert(loss);
            last = Some(loss);
            epochs = epoch;
            let _ = writeln!(table, "{epoch}\t{loss:.6}\t{lr:e}\t{}", backed_off as u8);
        }
    }
    let initial = initial.expect("at least one baseline row");
    let summary = Summary {
        initial,
        final_best: last.unwrap_or(initial),
        generations: epochs,
        switches: 0,
    };
    let text = format!("{table}\n{}", summary_block(&summary));
    Ok(Report {
        table,
        text,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(k: usize, best: f64) -> MetricsRow {
        MetricsRow::Generation {
            round: 0,
            k,
            best,
            median: best + 1.0,
            anchor: best,
            switched: false,
            a_k: 1e-4,
            b_k: 2e-3,
            non_finite: 0,
        }
    }

    #[test]
    fn rejects_increasing_best() {
        let rows = [
            MetricsRow::RoundStart {
                round: 0,
                anchor: 1.0,
            },
            gen(1, 0.9),
            gen(2, 0.95),
        ];
        assert!(build_report(&rows).is_err());
        let rows = [
            MetricsRow::RoundStart {
                round: 0,
                anchor: 1.0,
            },
            gen(1, 1.1),
        ];
        assert!(build_report(&rows).is_err());
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(build_report(&[]).is_err());
    }

    #[test]
    fn improvement_is_non_negative() {
        let rows = [
            MetricsRow::RoundStart {
                round: 0,
                anchor: 1.0,
            },
            gen(1, 0.9),
            gen(2, 0.8),
        ];
        let r = build_report(&rows).unwrap();
        assert!(r.summary.improvement() >= 0.0);
        assert_eq!(r.summary.generations, 2);
    }
}
