use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use super::config::Algo;
use super::run::RegretRecord;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "seed",
    "algo",
    "d",
    "H",
    "T",
    "episode",
    "instant_regret",
    "cum_regret",
    "wall_ms",
];

pub fn write_records<W: Write>(writer: W, records: &[RegretRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map_or(0, |p| p.line() as usize)
}

/// Reads a regret CSV, checking the header; errors name the 1-based line.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<RegretRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header '{}'", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    rdr.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                line: csv_line(&e),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Mean, sample standard deviation (`n − 1`; 0 for a single value) and count.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Cumulative regret statistics per `(algo, H, episode)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub algo: Algo,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub episode: usize,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

pub fn aggregate<R: Read>(reader: R) -> Result<Vec<AggregateRow>> {
    Ok(aggregate_records(&read_records(reader)?))
}

pub fn aggregate_records(records: &[RegretRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Algo, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.algo, r.horizon, r.episode))
            .or_default()
            .push(r.cum_regret);
    }
    groups
        .into_iter()
        .map(|((algo, horizon, episode), xs)| {
            let (mean, std) = mean_std(&xs);
            AggregateRow {
                algo,
                horizon,
                episode,
                mean,
                std,
                count: xs.len(),
            }
        })
        .collect()
}

/// Final cumulative regret per `(algo, H)`: raw and divided by `H^{3/2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algo: Algo,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub n: usize,
    pub mean_reg: f64,
    pub std_reg: f64,
    pub mean_reg_over_h15: f64,
    pub std_reg_over_h15: f64,
}

pub fn summarize(records: &[RegretRecord]) -> Vec<SummaryRow> {
    let mut last: BTreeMap<(Algo, usize, u64), &RegretRecord> = BTreeMap::new();
    for r in records {
        let slot = last.entry((r.algo, r.horizon, r.seed)).or_insert(r);
        if r.episode > slot.episode {
            *slot = r;
        }
    }
    let mut groups: BTreeMap<(Algo, usize), Vec<f64>> = BTreeMap::new();
    for ((algo, horizon, _), r) in last {
        groups.entry((algo, horizon)).or_default().push(r.cum_regret);
    }
    groups
        .into_iter()
        .map(|((algo, horizon), xs)| {
            let norm = (horizon as f64).powf(1.5);
            let scaled: Vec<f64> = xs.iter().map(|x| x / norm).collect();
            let (mean_reg, std_reg) = mean_std(&xs);
            let (mean_reg_over_h15, std_reg_over_h15) = mean_std(&scaled);
            SummaryRow {
                algo,
                horizon,
                n: xs.len(),
                mean_reg,
                std_reg,
                mean_reg_over_h15,
                std_reg_over_h15,
            }
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
