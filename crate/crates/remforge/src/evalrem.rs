//! Terminal products of the toolchain: RMSE evaluation of the estimator
//! families on a shared split, and voxelized REM grids with their fidelity
//! against the noiseless ground-truth field.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{splitmix64, Mac, Volume};
use crate::dataset::{split, DatasetError, FeatureRow};
use crate::estimators::{fit, query_row, EstimatorConfig, EstimatorError, FittedEstimator};
use crate::radioenv::{mean_rss, RadioEnvError, RadioEnvironment};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction and target lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("MAC {0} absent from the environment")]
    UnknownMac(Mac),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    RadioEnv(#[from] RadioEnvError),
}

/// Root mean squared error in dBm.
pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64, EvalError> {
    if predictions.len() != targets.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), targets.len()));
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let sq: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    Ok((sq / predictions.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub estimator: String,
    pub rmse_dbm: f64,
    pub train_n: usize,
    pub test_n: usize,
    pub config: EstimatorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Rows sorted by ascending RMSE.
    pub rows: Vec<EvalRow>,
    pub seed: u64,
    /// Hash of the shared train index set; identical for every estimator
    /// by construction and recorded for auditability.
    pub split_hash: u64,
    pub diagnostics: Vec<String>,
}

fn hash_indices(indices: &[usize]) -> u64 {
    let mut h = 0x9e3779b97f4a7c15;
    for &i in indices {
        h = splitmix64(h ^ i as u64);
    }
    h
}

/// Fits every config on one shared stratified 75/25 split and reports test
/// RMSE, ascending. Per-row prediction failures become diagnostics, never
/// an aborted table.
pub fn compare_estimators(
    rows: &[FeatureRow],
    configs: &[EstimatorConfig],
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let (train_idx, test_idx) = split(rows, crate::dataset::DEFAULT_TRAIN_FRACTION, seed)?;
    let train: Vec<FeatureRow> = train_idx.iter().map(|&i| rows[i].clone()).collect();
    let test: Vec<FeatureRow> = test_idx.iter().map(|&i| rows[i].clone()).collect();
    let split_hash = hash_indices(&train_idx);
    let mut out = Vec::new();
    let mut diagnostics = Vec::new();
    for cfg in configs {
        let fitted = fit(&train, cfg)?;
        let mut preds = Vec::with_capacity(test.len());
        let mut targets = Vec::with_capacity(test.len());
        for q in &test {
            match fitted.predict(q) {
                Ok(p) => {
                    preds.push(p);
                    targets.push(q.target_rssi);
                }
                Err(e) => {
                    diagnostics.push(format!("{}: {e}; used fallback", cfg.label()));
                    preds.push(fitted.predict_or_fallback(q));
                    targets.push(q.target_rssi);
                }
            }
        }
        out.push(EvalRow {
            estimator: cfg.label(),
            rmse_dbm: rmse(&preds, &targets)?,
            train_n: train.len(),
            test_n: test.len(),
            config: *cfg,
        });
    }
    out.sort_by(|a, b| a.rmse_dbm.partial_cmp(&b.rmse_dbm).unwrap());
    Ok(EvalReport {
        rows: out,
        seed,
        split_hash,
        diagnostics,
    })
}

pub fn write_eval_csv<W: Write>(w: &mut W, report: &EvalReport) -> std::io::Result<()> {
    writeln!(w, "estimator,rmse_dbm,train_n,test_n")?;
    for r in &report.rows {
        writeln!(w, "{},{},{},{}", r.estimator, r.rmse_dbm, r.train_n, r.test_n)?;
    }
    Ok(())
}

/// Voxelized REM: per retained MAC, predicted dBm at every voxel center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemGrid {
    pub volume: Volume,
    pub resolution_m: f64,
    pub dims: [usize; 3],
    pub macs: Vec<Mac>,
    /// values[mac][ix * ny * nz + iy * nz + iz], x fastest-varying last.
    pub values: Vec<Vec<f64>>,
    /// MACs whose voxels were filled by the fallback path.
    pub fallback_macs: Vec<Mac>,
    pub estimator: String,
    pub config_hash: u64,
    pub dataset_hash: u64,
}

pub fn grid_dims(volume: &Volume, resolution_m: f64) -> [usize; 3] {
    [
        (volume.extent_x / resolution_m).ceil() as usize,
        (volume.extent_y / resolution_m).ceil() as usize,
        (volume.extent_z / resolution_m).ceil() as usize,
    ]
}

impl RemGrid {
    pub fn voxel_center(&self, ix: usize, iy: usize, iz: usize) -> crate::core::Point3 {
        crate::core::Point3::new(
            self.volume.origin.x + (ix as f64 + 0.5) * self.resolution_m,
            self.volume.origin.y + (iy as f64 + 0.5) * self.resolution_m,
            self.volume.origin.z + (iz as f64 + 0.5) * self.resolution_m,
        )
    }

    pub fn value(&self, mac_slot: usize, ix: usize, iy: usize, iz: usize) -> f64 {
        let [_, ny, nz] = self.dims;
        self.values[mac_slot][ix * ny * nz + iy * nz + iz]
    }
}

fn hash_json<T: Serialize>(value: &T) -> u64 {
    let bytes = serde_json::to_vec(value).expect("serializable");
    let mut h = 0x51_7c_c1_b7_27_22_0a_95u64;
    for b in bytes {
        h = splitmix64(h ^ b as u64);
    }
    h
}

/// Evaluates the fitted estimator at every voxel center for every MAC.
/// MACs without a per-MAC model fall back to the estimator's global mean
/// and are flagged.
pub fn generate_rem(
    fitted: &FittedEstimator,
    volume: &Volume,
    resolution_m: f64,
    macs: &[Mac],
    dataset_hash: u64,
) -> Result<RemGrid, EvalError> {
    if resolution_m <= 0.0 {
        return Err(EvalError::BadResolution(resolution_m));
    }
    let dims = grid_dims(volume, resolution_m);
    let [nx, ny, nz] = dims;
    let n_macs = macs.len();
    let mut values = Vec::with_capacity(n_macs);
    let mut fallback_macs = Vec::new();
    for (slot, mac) in macs.iter().enumerate() {
        let mut grid = Vec::with_capacity(nx * ny * nz);
        let mut used_fallback = false;
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let c = crate::core::Point3::new(
                        volume.origin.x + (ix as f64 + 0.5) * resolution_m,
                        volume.origin.y + (iy as f64 + 0.5) * resolution_m,
                        volume.origin.z + (iz as f64 + 0.5) * resolution_m,
                    );
                    let q = query_row(c.x, c.y, c.z, slot, n_macs);
                    let v = match fitted.predict(&q) {
                        Ok(v) => v,
                        Err(_) => {
                            used_fallback = true;
                            fitted.predict_or_fallback(&q)
                        }
                    };
                    grid.push(v);
                }
            }
        }
        if used_fallback {
            fallback_macs.push(*mac);
        }
        values.push(grid);
    }
    Ok(RemGrid {
        volume: volume.clone(),
        resolution_m,
        dims,
        macs: macs.to_vec(),
        values,
        fallback_macs,
        estimator: fitted.config().label(),
        config_hash: hash_json(fitted.config()),
        dataset_hash,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityReport {
    pub per_mac_rmse: Vec<(Mac, f64)>,
    pub aggregate_rmse: f64,
}

/// Compares grid values against the noiseless mean RSS field at the same
/// voxel centers; only possible in simulation, where the truth is known.
pub fn rem_fidelity(grid: &RemGrid, env: &RadioEnvironment) -> Result<FidelityReport, EvalError> {
    let by_mac: BTreeMap<Mac, &crate::radioenv::AccessPoint> =
        env.aps.iter().map(|ap| (ap.mac, ap)).collect();
    let [nx, ny, nz] = grid.dims;
    let mut per_mac_rmse = Vec::new();
    let mut total_sq = 0.0;
    let mut total_n = 0usize;
    for (slot, mac) in grid.macs.iter().enumerate() {
        let ap = by_mac.get(mac).ok_or(EvalError::UnknownMac(*mac))?;
        let mut sq = 0.0;
        let mut n = 0usize;
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let c = grid.voxel_center(ix, iy, iz);
                    let truth = mean_rss(ap, &c, &env.params)?;
                    let err = grid.value(slot, ix, iy, iz) - truth;
                    sq += err * err;
                    n += 1;
                }
            }
        }
        per_mac_rmse.push((*mac, (sq / n as f64).sqrt()));
        total_sq += sq;
        total_n += n;
    }
    if total_n == 0 {
        return Err(EvalError::Empty);
    }
    Ok(FidelityReport {
        per_mac_rmse,
        aggregate_rmse: (total_sq / total_n as f64).sqrt(),
    })
}

/// Plot-ready CSV: one row per (voxel, MAC).
pub fn write_rem_csv<W: Write>(w: &mut W, grid: &RemGrid) -> std::io::Result<()> {
    writeln!(w, "x,y,z,mac,pred_dbm")?;
    let [nx, ny, nz] = grid.dims;
    for (slot, mac) in grid.macs.iter().enumerate() {
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let c = grid.voxel_center(ix, iy, iz);
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        c.x,
                        c.y,
                        c.z,
                        mac,
                        grid.value(slot, ix, iy, iz)
                    )?;
                }
            }
        }
    }
    Ok(())
}
