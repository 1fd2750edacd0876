//! Turns raw sample logs into the feature matrix the estimators consume:
//! rare-MAC filtering, one-hot encoding of MACs and channels, and the
//! seeded stratified train/test split.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{derive_rng, read_samples, BeaconSample, CoreError, Mac};

pub const CHANNEL_SLOTS: usize = 13;
pub const DEFAULT_DROP_THRESHOLD: usize = 16;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.75;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{bad} of {total} lines malformed (> 1% tolerance); first: line {line}: {detail}")]
    TooManyMalformed {
        bad: usize,
        total: usize,
        line: usize,
        detail: String,
    },
    #[error("no samples to preprocess")]
    Empty,
    #[error("every MAC fell below the drop threshold {0}; nothing retained")]
    AllDropped(usize),
    #[error("split needs at least 4 rows, got {0}")]
    TooFewRows(usize),
    #[error("train fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
}

/// One estimator-ready row. The channel one-hot is carried for export and
/// the MLP but excluded from kNN features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub mac_index: usize,
    pub mac_onehot: Vec<f64>,
    pub channel_onehot: Vec<f64>,
    pub target_rssi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub input_count: usize,
    pub retained_count: usize,
    pub dropped_count: usize,
    pub retained_macs: Vec<Mac>,
    pub dropped_macs: Vec<Mac>,
    pub drop_threshold: usize,
}

/// Reads a JSONL sample log, tolerating up to 1% malformed lines.
pub fn load_samples(path: &Path) -> Result<(Vec<BeaconSample>, Vec<(usize, String)>), DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let (samples, errors) = read_samples(BufReader::new(file))?;
    let total = samples.len() + errors.len();
    if !errors.is_empty() && errors.len() * 100 > total {
        let (line, detail) = errors[0].clone();
        return Err(DatasetError::TooManyMalformed {
            bad: errors.len(),
            total,
            line,
            detail,
        });
    }
    Ok((samples, errors))
}

/// Drops MACs with fewer than `drop_threshold` samples and one-hot encodes
/// the survivors. MAC slots are ordered lexicographically so feature
/// matrices are reproducible across runs.
pub fn preprocess(
    samples: &[BeaconSample],
    drop_threshold: usize,
) -> Result<(Vec<FeatureRow>, PreprocessReport), DatasetError> {
    if samples.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut counts: BTreeMap<Mac, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.mac).or_insert(0) += 1;
    }
    let retained_macs: Vec<Mac> = counts
        .iter()
        .filter(|(_, &n)| n >= drop_threshold)
        .map(|(m, _)| *m)
        .collect();
    let dropped_macs: Vec<Mac> = counts
        .iter()
        .filter(|(_, &n)| n < drop_threshold)
        .map(|(m, _)| *m)
        .collect();
    if retained_macs.is_empty() {
        return Err(DatasetError::AllDropped(drop_threshold));
    }
    let index: BTreeMap<Mac, usize> = retained_macs
        .iter()
        .enumerate()
        .map(|(i, m)| (*m, i))
        .collect();
    let mut rows = Vec::new();
    for s in samples {
        let Some(&mac_index) = index.get(&s.mac) else {
            continue;
        };
        let mut mac_onehot = vec![0.0; retained_macs.len()];
        mac_onehot[mac_index] = 1.0;
        let mut channel_onehot = vec![0.0; CHANNEL_SLOTS];
        if (1..=CHANNEL_SLOTS as u8).contains(&s.channel) {
            channel_onehot[s.channel as usize - 1] = 1.0;
        }
        rows.push(FeatureRow {
            x: s.est_x,
            y: s.est_y,
            z: s.est_z,
            mac_index,
            mac_onehot,
            channel_onehot,
            target_rssi: s.rssi_dbm as f64,
        });
    }
    let report = PreprocessReport {
        input_count: samples.len(),
        retained_count: rows.len(),
        dropped_count: samples.len() - rows.len(),
        retained_macs,
        dropped_macs,
        drop_threshold,
    };
    Ok((rows, report))
}

/// Rescales the MAC one-hot block by `factor`, leaving coordinates and the
/// channel block untouched.
pub fn scale_onehot(rows: &[FeatureRow], factor: f64) -> Vec<FeatureRow> {
    assert!(factor > 0.0, "one-hot factor must be positive");
    rows.iter()
        .map(|r| {
            let mut r = r.clone();
            for v in &mut r.mac_onehot {
                if *v != 0.0 {
                    *v = factor;
                }
            }
            r
        })
        .collect()
}

/// Seeded train/test split, stratified by MAC so every retained MAC
/// appears in the training set. Returns row indices.
pub fn split(
    rows: &[FeatureRow],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if rows.len() < 4 {
        return Err(DatasetError::TooFewRows(rows.len()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(train_fraction));
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        strata.entry(r.mac_index).or_default().push(i);
    }
    let mut rng = derive_rng(seed, "split");
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut idx) in strata {
        idx.shuffle(&mut rng);
        // Size-1 strata go entirely to train; otherwise keep at least one
        // row on each side, within 1 of the exact fraction.
        let n = idx.len();
        let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n.max(2) - 1).max(1);
        let n_train = if n == 1 { 1 } else { n_train.min(n - 1) };
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Unstratified variant: one seeded shuffle over all rows.
pub fn split_random(
    rows: &[FeatureRow],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if rows.len() < 4 {
        return Err(DatasetError::TooFewRows(rows.len()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(train_fraction));
    }
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    let mut rng = derive_rng(seed, "split-random");
    idx.shuffle(&mut rng);
    let n_train = ((rows.len() as f64 * train_fraction).round() as usize)
        .clamp(1, rows.len() - 1);
    let (a, b) = idx.split_at(n_train);
    let mut train = a.to_vec();
    let mut test = b.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Writes the feature matrix as CSV for external analysis tools.
pub fn write_features_csv<W: Write>(
    w: &mut W,
    rows: &[FeatureRow],
    macs: &[Mac],
) -> std::io::Result<()> {
    write!(w, "x,y,z")?;
    for m in macs {
        write!(w, ",mac_{m}")?;
    }
    for c in 1..=CHANNEL_SLOTS {
        write!(w, ",channel_{c}")?;
    }
    writeln!(w, ",rssi")?;
    for r in rows {
        write!(w, "{},{},{}", r.x, r.y, r.z)?;
        for v in &r.mac_onehot {
            write!(w, ",{v}")?;
        }
        for v in &r.channel_onehot {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{}", r.target_rssi)?;
    }
    Ok(())
}
