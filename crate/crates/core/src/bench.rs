//! Throughput measurement of feature extractors and the speed/accuracy
//! trade-off report.
//!
//! All timings use the monotonic clock on a single thread unless the
//! parallel variant is requested; both branches are timed identically.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::EvalReport;
use crate::{Error, Result};

pub const MIN_REPETITIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputResult {
    pub method: String,
    pub items_processed: usize,
    pub elapsed_seconds: f64,
    pub images_per_second: f64,
    pub warmup_items: usize,
    pub repetitions: usize,
    pub repetition_rates: Vec<f64>,
    pub threads: usize,
}

impl ThroughputResult {
    /// Rate recomputed from the stored counters.
    pub fn recomputed_rate(&self) -> f64 {
        self.items_processed as f64 / self.elapsed_seconds
    }

    pub fn rate_spread(&self) -> (f64, f64) {
        let lo = self.repetition_rates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.repetition_rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn check_plan<I>(inputs: &[I], repetitions: usize) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Config("throughput measurement needs at least one input".into()));
    }
    if repetitions < MIN_REPETITIONS {
        return Err(Error::Config(format!(
            "at least {MIN_REPETITIONS} repetitions are required, got {repetitions}"
        )));
    }
    Ok(())
}

fn assemble(
    method: &str,
    per_rep: Vec<f64>,
    items_per_rep: usize,
    warmup_items: usize,
    threads: usize,
) -> Result<ThroughputResult> {
    let elapsed: f64 = per_rep.iter().sum();
    if elapsed.is_nan() || elapsed <= 0.0 {
        return Err(Error::Benchmark {
            index: 0,
            message: "measured elapsed time is zero".into(),
        });
    }
    let repetitions = per_rep.len();
    let items = items_per_rep * repetitions;
    Ok(ThroughputResult {
        method: method.to_string(),
        items_processed: items,
        elapsed_seconds: elapsed,
        images_per_second: items as f64 / elapsed,
        warmup_items,
        repetitions,
        repetition_rates: per_rep.iter().map(|&s| items_per_rep as f64 / s).collect(),
        threads,
    })
}

/// Times `extractor` over all `inputs`, `repetitions` times, after running it
/// on `warmup` inputs (cycling) outside the timed region.
pub fn measure_throughput<I, O, E: Display>(
    method: &str,
    mut extractor: impl FnMut(&I) -> std::result::Result<O, E>,
    inputs: &[I],
    warmup: usize,
    repetitions: usize,
) -> Result<ThroughputResult> {
    check_plan(inputs, repetitions)?;
    let fail = |index: usize, e: E| Error::Benchmark {
        index,
        message: e.to_string(),
    };
    for i in 0..warmup {
        let index = i % inputs.len();
        black_box(extractor(&inputs[index]).map_err(|e| fail(index, e))?);
    }
    let mut per_rep = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        for (index, input) in inputs.iter().enumerate() {
            black_box(extractor(black_box(input)).map_err(|e| fail(index, e))?);
        }
        per_rep.push(start.elapsed().as_secs_f64());
    }
    assemble(method, per_rep, inputs.len(), warmup, 1)
}

/// Multi-threaded variant over the rayon pool; reported separately from the
/// single-threaded rate.
pub fn measure_throughput_parallel<I: Sync, O: Send, E: Display + Send>(
    method: &str,
    extractor: impl Fn(&I) -> std::result::Result<O, E> + Sync,
    inputs: &[I],
    warmup: usize,
    repetitions: usize,
) -> Result<ThroughputResult> {
    check_plan(inputs, repetitions)?;
    let run = |slice: &[I], offset: usize| -> Result<()> {
        slice.par_iter().enumerate().try_for_each(|(i, x)| {
            extractor(x)
                .map(|o| {
                    black_box(o);
                })
                .map_err(|e| Error::Benchmark {
                    index: offset + i,
                    message: e.to_string(),
                })
        })
    };
    run(&inputs[..warmup.min(inputs.len())], 0)?;
    let mut per_rep = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        run(inputs, 0)?;
        per_rep.push(start.elapsed().as_secs_f64());
    }
    assemble(
        method,
        per_rep,
        inputs.len(),
        warmup.min(inputs.len()),
        rayon::current_num_threads(),
    )
}

// ---------------------------------------------------------------------------
// Trade-off report

/// Provenance shared by every row of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunManifest {
    pub run_id: String,
    pub seeds: BTreeMap<String, u64>,
    pub dataset_spec_hash: String,
    pub config_hashes: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

/// One method's measurements as handed to [`build_tradeoff_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffEntry {
    pub method: String,
    pub run_id: String,
    pub eval: EvalReport,
    pub throughput: ThroughputResult,
    pub feature_dim: usize,
    pub param_count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub method: String,
    pub rank1_pct: f64,
    pub rank5_pct: f64,
    pub map_pct: f64,
    pub images_per_sec: f64,
    pub feature_dim: usize,
    pub param_count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffReport {
    pub manifest: RunManifest,
    pub rows: Vec<TradeoffRow>,
}

#[derive(Serialize, Deserialize)]
struct ScatterPoint<'a> {
    method: &'a str,
    images_per_sec: f64,
    map_pct: f64,
}

/// Rows sorted by mAP descending; ties keep insertion order.
pub fn build_tradeoff_report(manifest: RunManifest, entries: Vec<TradeoffEntry>) -> Result<TradeoffReport> {
    if entries.is_empty() {
        return Err(Error::Config("trade-off report needs at least one row".into()));
    }
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        if e.run_id != manifest.run_id {
            return Err(Error::Consistency(format!(
                "method `{}` comes from run `{}`, report is for run `{}`",
                e.method, e.run_id, manifest.run_id
            )));
        }
        if e.throughput.method != e.method {
            return Err(Error::Consistency(format!(
                "throughput measured for `{}` attached to `{}`",
                e.throughput.method, e.method
            )));
        }
        rows.push(TradeoffRow {
            method: e.method,
            rank1_pct: 100.0 * e.eval.rank1,
            rank5_pct: 100.0 * e.eval.rank5,
            map_pct: 100.0 * e.eval.map,
            images_per_sec: e.throughput.images_per_second,
            feature_dim: e.feature_dim,
            param_count: e.param_count,
        });
    }
    rows.sort_by(|a, b| b.map_pct.total_cmp(&a.map_pct));
    Ok(TradeoffReport { manifest, rows })
}

fn csv_string<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for item in items {
        w.serialize(item)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Consistency(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

impl TradeoffReport {
    /// `method,rank1_pct,rank5_pct,map_pct,images_per_sec,feature_dim,param_count`
    pub fn to_csv(&self) -> Result<String> {
        csv_string(&self.rows)
    }

    pub fn rows_from_csv(text: &str) -> Result<Vec<TradeoffRow>> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        Ok(r.deserialize().collect::<std::result::Result<Vec<TradeoffRow>, _>>()?)
    }

    /// `method,images_per_sec,map_pct`
    pub fn scatter_csv(&self) -> Result<String> {
        csv_string(self.rows.iter().map(|r| ScatterPoint {
            method: &r.method,
            images_per_sec: r.images_per_sec,
            map_pct: r.map_pct,
        }))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Writes `tradeoff.csv`, `tradeoff.json` and `scatter.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        for (name, body) in [
            ("tradeoff.csv", self.to_csv()?),
            ("tradeoff.json", self.to_json()?),
            ("scatter.csv", self.scatter_csv()?),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Human-readable table: method, Rank-1 %, mAP %, images/s.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<36} {:>9} {:>9} {:>12}\n",
            "Method", "Rank-1 %", "mAP %", "# images/s"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<36} {:>9.2} {:>9.2} {:>12.0}\n",
                r.method, r.rank1_pct, r.map_pct, r.images_per_sec
            ));
        }
        out
    }
}
