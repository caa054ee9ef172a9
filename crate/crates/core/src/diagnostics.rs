//! Measurement passes over a training run: critic loss across the buffer by
//! insertion bucket, per-transition sample counts, and dormant-neuron traces.
//! Everything is written as plain CSV.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::replay::{ReplayBuffer, ReplayError};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("bucket size must be positive")]
    ZeroBucket,
    #[error("buffer is empty")]
    EmptyBuffer,
    #[error("malformed csv: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("td evaluation failed: {0}")]
    Evaluator(String),
}

pub type Result<T> = std::result::Result<T, DiagnosticsError>;

const EVAL_CHUNK: usize = 1024;

/// Mean squared TD error of one insertion bucket.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BucketLoss {
    pub bucket: u64,
    pub items: usize,
    pub mean_loss: f64,
}

/// Partitions live transitions into buckets of `bucket_size` consecutive
/// insertion indexes and averages the squared TD error in each.
///
/// `td_errors` maps a batch to per-row TD errors. Buckets with more than
/// `max_per_bucket` live items are subsampled with a fixed stride.
pub fn critic_buffer_loss<F, E>(
    buffer: &ReplayBuffer,
    bucket_size: u64,
    max_per_bucket: usize,
    mut td_errors: F,
) -> Result<Vec<BucketLoss>>
where
    F: FnMut(&crate::replay::Batch) -> std::result::Result<Array1<f64>, E>,
    E: std::fmt::Display,
{
    if bucket_size == 0 {
        return Err(DiagnosticsError::ZeroBucket);
    }
    let live = buffer.live_indices();
    if live.is_empty() {
        return Err(DiagnosticsError::EmptyBuffer);
    }
    let first = live.start / bucket_size;
    let last = (live.end - 1) / bucket_size;
    let mut out = Vec::with_capacity((last - first + 1) as usize);
    for bucket in first..=last {
        let lo = (bucket * bucket_size).max(live.start);
        let hi = ((bucket + 1) * bucket_size).min(live.end);
        let count = (hi - lo) as usize;
        let stride = count.div_ceil(max_per_bucket.max(1)).max(1) as u64;
        let indices: Vec<u64> = (lo..hi).step_by(stride as usize).collect();
        let mut sum = 0.0;
        for chunk in indices.chunks(EVAL_CHUNK) {
            let batch = buffer.gather(chunk.to_vec(), None);
            let td = td_errors(&batch).map_err(|e| DiagnosticsError::Evaluator(e.to_string()))?;
            sum += td.iter().map(|d| d * d).sum::<f64>();
        }
        out.push(BucketLoss {
            bucket,
            items: indices.len(),
            mean_loss: sum / indices.len() as f64,
        });
    }
    Ok(out)
}

/// Checkpoint-by-bucket matrix of mean critic losses. A cell is empty when
/// its bucket held no live transitions at that checkpoint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeatmapAccumulator {
    bucket_size: u64,
    steps: Vec<u64>,
    rows: Vec<Vec<Option<f64>>>,
}

impl HeatmapAccumulator {
    pub fn new(bucket_size: u64) -> Self {
        Self {
            bucket_size,
            ..Self::default()
        }
    }

    pub fn bucket_size(&self) -> u64 {
        self.bucket_size
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.rows
    }

    pub fn num_buckets(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn record(&mut self, step: u64, losses: &[BucketLoss]) {
        let width = losses.iter().map(|l| l.bucket as usize + 1).max().unwrap_or(0);
        let mut row = vec![None; width];
        for l in losses {
            row[l.bucket as usize] = Some(l.mean_loss);
        }
        self.steps.push(step);
        self.rows.push(row);
    }

    pub fn get(&self, checkpoint: usize, bucket: usize) -> Option<f64> {
        self.rows.get(checkpoint)?.get(bucket).copied().flatten()
    }

    /// True when every checkpoint covers a contiguous bucket range ending at
    /// the newest bucket and no row has cells beyond the data seen at its step.
    pub fn support_is_valid(&self) -> bool {
        self.steps.iter().zip(&self.rows).all(|(&step, row)| {
            let newest = step.saturating_sub(1) / self.bucket_size.max(1);
            let defined: Vec<usize> = row
                .iter()
                .enumerate()
                .filter_map(|(b, v)| v.map(|_| b))
                .collect();
            match (defined.first(), defined.last()) {
                (Some(&lo), Some(&hi)) => {
                    hi as u64 == newest && defined.len() == hi - lo + 1
                }
                _ => false,
            }
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let width = self.num_buckets();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string()];
        header.extend((0..width).map(|b| format!("bucket_{b}")));
        w.write_record(&header)?;
        for (step, row) in self.steps.iter().zip(&self.rows) {
            let mut record = vec![step.to_string()];
            record.extend((0..width).map(|b| match row.get(b).copied().flatten() {
                Some(v) => format!("{v:e}"),
                None => String::new(),
            }));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, bucket_size: u64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let width = r.headers()?.len().saturating_sub(1);
        let mut acc = Self::new(bucket_size);
        for record in r.records() {
            let record = record?;
            let mut fields = record.iter();
            let step = fields
                .next()
                .ok_or_else(|| DiagnosticsError::Malformed("missing step".into()))?
                .parse::<u64>()
                .map_err(|e| DiagnosticsError::Malformed(e.to_string()))?;
            let mut row = Vec::with_capacity(width);
            for cell in fields {
                row.push(if cell.is_empty() {
                    None
                } else {
                    Some(
                        cell.parse::<f64>()
                            .map_err(|e| DiagnosticsError::Malformed(e.to_string()))?,
                    )
                });
            }
            while row.last() == Some(&None) {
                row.pop();
            }
            acc.steps.push(step);
            acc.rows.push(row);
        }
        Ok(acc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Exact number of times each insertion index appeared in an update batch.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SampleCounter {
    counts: Vec<u64>,
    batches: u64,
    draws: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountRow {
    insert_index: u64,
    count: u64,
}

impl SampleCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes sure indexes below `pushed` have a (possibly zero) entry.
    pub fn observe_pushed(&mut self, pushed: u64) {
        if self.counts.len() < pushed as usize {
            self.counts.resize(pushed as usize, 0);
        }
    }

    pub fn record(&mut self, indices: &[u64]) {
        for &i in indices {
            let i = i as usize;
            if i >= self.counts.len() {
                self.counts.resize(i + 1, 0);
            }
            self.counts[i] += 1;
        }
        self.batches += 1;
        self.draws += indices.len() as u64;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn batches(&self) -> u64 {
        self.batches
    }

    /// Sum of counts equals `batch_size * updates`.
    pub fn conserves(&self, batch_size: usize, updates: u64) -> bool {
        self.total() == batch_size as u64 * updates && self.draws == self.total()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (i, &count) in self.counts.iter().enumerate() {
            w.serialize(CountRow {
                insert_index: i as u64,
                count,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Vec<u64>> {
        let mut r = csv::Reader::from_reader(input);
        let mut counts = Vec::new();
        for (expected, row) in r.deserialize::<CountRow>().enumerate() {
            let row = row?;
            if row.insert_index != expected as u64 {
                return Err(DiagnosticsError::Malformed(format!(
                    "row {expected} has insert_index {}",
                    row.insert_index
                )));
            }
            counts.push(row.count);
        }
        Ok(counts)
    }
}

/// One dormant-ratio measurement. `event` names the growth event the
/// measurement brackets, if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DormantRow {
    pub step: u64,
    pub ratio: f64,
    pub event: String,
}

pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}
