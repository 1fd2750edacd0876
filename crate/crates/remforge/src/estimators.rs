//! The four estimator families behind the RSS prediction comparison:
//! mean-per-MAC baseline, global kNN over coordinates plus scaled MAC
//! one-hot, per-MAC kNN over coordinates only, and a one-hidden-layer MLP
//! trained with Adam. All fits and predictions are deterministic.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::derive_rng;
use crate::dataset::FeatureRow;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no per-MAC model for mac index {0}")]
    NoModelForMac(usize),
    #[error("non-finite training loss at epoch {0}")]
    NonFiniteLoss(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    BaselineMean,
    KnnGlobal,
    KnnPerMac,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Weights {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 16,
            lr: 0.001,
            epochs: 300,
            batch: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub k: usize,
    pub weights: Weights,
    pub minkowski_p: f64,
    pub onehot_factor: f64,
    pub mlp: MlpConfig,
}

impl EstimatorConfig {
    pub fn baseline() -> Self {
        EstimatorConfig {
            kind: EstimatorKind::BaselineMean,
            ..Self::knn_k3()
        }
    }

    /// The first tuned kNN variant: k=3, distance weights, factor 1.
    pub fn knn_k3() -> Self {
        EstimatorConfig {
            kind: EstimatorKind::KnnGlobal,
            k: 3,
            weights: Weights::Distance,
            minkowski_p: 2.0,
            onehot_factor: 1.0,
            mlp: MlpConfig::default(),
        }
    }

    /// The second tuned kNN variant: k=16, distance weights, factor 3.
    pub fn knn_k16_factor3() -> Self {
        EstimatorConfig {
            k: 16,
            onehot_factor: 3.0,
            ..Self::knn_k3()
        }
    }

    pub fn knn_per_mac() -> Self {
        EstimatorConfig {
            kind: EstimatorKind::KnnPerMac,
            ..Self::knn_k3()
        }
    }

    pub fn mlp(seed: u64) -> Self {
        EstimatorConfig {
            kind: EstimatorKind::Mlp,
            mlp: MlpConfig {
                seed,
                ..MlpConfig::default()
            },
            ..Self::knn_k3()
        }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        if self.k < 1 {
            return Err(EstimatorError::InvalidConfig("k must be >= 1".to_string()));
        }
        if self.minkowski_p < 1.0 {
            return Err(EstimatorError::InvalidConfig(
                "minkowski_p must be >= 1".to_string(),
            ));
        }
        if self.onehot_factor <= 0.0 {
            return Err(EstimatorError::InvalidConfig(
                "onehot_factor must be > 0".to_string(),
            ));
        }
        if self.mlp.hidden < 1 {
            return Err(EstimatorError::InvalidConfig(
                "hidden must be >= 1".to_string(),
            ));
        }
        Ok(())
    }

    /// Short stable label for report tables and file names.
    pub fn label(&self) -> String {
        match self.kind {
            EstimatorKind::BaselineMean => "baseline-mean".to_string(),
            EstimatorKind::KnnGlobal => format!(
                "knn-k{}-{}-f{}",
                self.k,
                match self.weights {
                    Weights::Uniform => "uniform",
                    Weights::Distance => "distance",
                },
                self.onehot_factor
            ),
            EstimatorKind::KnnPerMac => format!("knn-per-mac-k{}", self.k),
            EstimatorKind::Mlp => format!("mlp-h{}", self.mlp.hidden),
        }
    }
}

/// Compact training snapshot for kNN: coordinates, MAC slot, and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnRow {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub mac_index: usize,
    pub target: f64,
}

impl From<&FeatureRow> for KnnRow {
    fn from(r: &FeatureRow) -> Self {
        KnnRow {
            x: r.x,
            y: r.y,
            z: r.z,
            mac_index: r.mac_index,
            target: r.target_rssi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpState {
    /// Flat parameter vector: W1 (hidden x in), b1, W2, b2.
    pub params: Vec<f64>,
    pub input_dim: usize,
    pub hidden: usize,
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
    pub n_macs: usize,
    pub final_loss: f64,
    pub initial_loss: f64,
}

/// A trained estimator; serializes to JSON for reuse by the REM exporter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedEstimator {
    Baseline {
        config: EstimatorConfig,
        per_mac_mean: BTreeMap<usize, f64>,
        global_mean: f64,
    },
    KnnGlobal {
        config: EstimatorConfig,
        train: Vec<KnnRow>,
    },
    KnnPerMac {
        config: EstimatorConfig,
        per_mac: BTreeMap<usize, Vec<KnnRow>>,
        global_mean: f64,
    },
    Mlp {
        config: EstimatorConfig,
        state: MlpState,
    },
}

/// Builds a prediction query for an arbitrary location and MAC slot.
pub fn query_row(x: f64, y: f64, z: f64, mac_index: usize, n_macs: usize) -> FeatureRow {
    let mut mac_onehot = vec![0.0; n_macs];
    if mac_index < n_macs {
        mac_onehot[mac_index] = 1.0;
    }
    FeatureRow {
        x,
        y,
        z,
        mac_index,
        mac_onehot,
        channel_onehot: vec![0.0; crate::dataset::CHANNEL_SLOTS],
        target_rssi: 0.0,
    }
}

pub fn fit(train: &[FeatureRow], config: &EstimatorConfig) -> Result<FittedEstimator, EstimatorError> {
    config.validate()?;
    if train.is_empty() {
        return Err(EstimatorError::EmptyTrain);
    }
    match config.kind {
        EstimatorKind::BaselineMean => Ok(fit_baseline(train, config)),
        EstimatorKind::KnnGlobal => Ok(FittedEstimator::KnnGlobal {
            config: *config,
            train: train.iter().map(KnnRow::from).collect(),
        }),
        EstimatorKind::KnnPerMac => {
            let mut per_mac: BTreeMap<usize, Vec<KnnRow>> = BTreeMap::new();
            for r in train {
                per_mac.entry(r.mac_index).or_default().push(r.into());
            }
            let global_mean =
                train.iter().map(|r| r.target_rssi).sum::<f64>() / train.len() as f64;
            Ok(FittedEstimator::KnnPerMac {
                config: *config,
                per_mac,
                global_mean,
            })
        }
        EstimatorKind::Mlp => fit_mlp(train, config),
    }
}

fn fit_baseline(train: &[FeatureRow], config: &EstimatorConfig) -> FittedEstimator {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in train {
        let e = sums.entry(r.mac_index).or_insert((0.0, 0));
        e.0 += r.target_rssi;
        e.1 += 1;
    }
    let per_mac_mean = sums
        .into_iter()
        .map(|(m, (s, n))| (m, s / n as f64))
        .collect();
    let global_mean = train.iter().map(|r| r.target_rssi).sum::<f64>() / train.len() as f64;
    FittedEstimator::Baseline {
        config: *config,
        per_mac_mean,
        global_mean,
    }
}

/// Minkowski-p distance in the global kNN feature space. Two distinct MACs
/// differ in exactly two one-hot slots, contributing 2 * factor^p.
fn knn_distance(a: &KnnRow, q: &FeatureRow, p: f64, factor: f64) -> f64 {
    let mut acc = (a.x - q.x).abs().powf(p) + (a.y - q.y).abs().powf(p) + (a.z - q.z).abs().powf(p);
    if a.mac_index != q.mac_index {
        acc += 2.0 * factor.powf(p);
    }
    acc.powf(1.0 / p)
}

fn knn_coord_distance(a: &KnnRow, q: &FeatureRow, p: f64) -> f64 {
    let acc = (a.x - q.x).abs().powf(p) + (a.y - q.y).abs().powf(p) + (a.z - q.z).abs().powf(p);
    acc.powf(1.0 / p)
}

/// Core kNN aggregation over precomputed (distance, train-index, target)
/// triples. Zero-distance neighbors short-circuit to their exact mean.
fn knn_aggregate(mut cand: Vec<(f64, usize, f64)>, k: usize, weights: Weights) -> f64 {
    cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let k = k.min(cand.len());
    let top = &cand[..k];
    let exact: Vec<f64> = top
        .iter()
        .filter(|(d, _, _)| *d == 0.0)
        .map(|(_, _, t)| *t)
        .collect();
    if !exact.is_empty() {
        return exact.iter().sum::<f64>() / exact.len() as f64;
    }
    match weights {
        Weights::Uniform => top.iter().map(|(_, _, t)| t).sum::<f64>() / k as f64,
        Weights::Distance => {
            let mut num = 0.0;
            let mut den = 0.0;
            for (d, _, t) in top {
                let w = 1.0 / d;
                num += w * t;
                den += w;
            }
            num / den
        }
    }
}

impl FittedEstimator {
    pub fn config(&self) -> &EstimatorConfig {
        match self {
            FittedEstimator::Baseline { config, .. }
            | FittedEstimator::KnnGlobal { config, .. }
            | FittedEstimator::KnnPerMac { config, .. }
            | FittedEstimator::Mlp { config, .. } => config,
        }
    }

    /// Deterministic point prediction in dBm.
    pub fn predict(&self, q: &FeatureRow) -> Result<f64, EstimatorError> {
        match self {
            FittedEstimator::Baseline {
                per_mac_mean,
                global_mean,
                ..
            } => Ok(*per_mac_mean.get(&q.mac_index).unwrap_or(global_mean)),
            FittedEstimator::KnnGlobal { config, train } => {
                let cand: Vec<(f64, usize, f64)> = train
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        (
                            knn_distance(r, q, config.minkowski_p, config.onehot_factor),
                            i,
                            r.target,
                        )
                    })
                    .collect();
                Ok(knn_aggregate(cand, config.k, config.weights))
            }
            FittedEstimator::KnnPerMac { config, per_mac, .. } => {
                let rows = per_mac
                    .get(&q.mac_index)
                    .ok_or(EstimatorError::NoModelForMac(q.mac_index))?;
                let cand: Vec<(f64, usize, f64)> = rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (knn_coord_distance(r, q, config.minkowski_p), i, r.target))
                    .collect();
                Ok(knn_aggregate(cand, config.k, config.weights))
            }
            FittedEstimator::Mlp { state, .. } => Ok(mlp_predict(state, q)),
        }
    }

    /// Total prediction: unknown-MAC queries fall back to the stored
    /// global mean instead of erroring.
    pub fn predict_or_fallback(&self, q: &FeatureRow) -> f64 {
        match self.predict(q) {
            Ok(v) => v,
            Err(_) => match self {
                FittedEstimator::KnnPerMac { global_mean, .. } => *global_mean,
                _ => 0.0,
            },
        }
    }
}

// MLP internals. Parameters live in one flat vector so the finite-difference
// gradient oracle can walk them uniformly.
// Layout: W1[hidden][in] row-major, b1[hidden], W2[hidden], b2.

fn mlp_param_count(input_dim: usize, hidden: usize) -> usize {
    hidden * input_dim + hidden + hidden + 1
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn mlp_forward(params: &[f64], input_dim: usize, hidden: usize, x: &[f64]) -> f64 {
    let (w1, rest) = params.split_at(hidden * input_dim);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(hidden);
    let mut y = b2[0];
    for h in 0..hidden {
        let mut a = b1[h];
        let row = &w1[h * input_dim..(h + 1) * input_dim];
        for (wi, xi) in row.iter().zip(x) {
            a += wi * xi;
        }
        y += w2[h] * sigmoid(a);
    }
    y
}

/// Mean-squared-error loss and its analytic gradient over a batch.
pub fn mlp_loss_and_grad(
    params: &[f64],
    input_dim: usize,
    hidden: usize,
    xs: &[Vec<f64>],
    ys: &[f64],
) -> (f64, Vec<f64>) {
    let n = xs.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let (w1, rest) = params.split_at(hidden * input_dim);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, _b2) = rest.split_at(hidden);
    let gw1_off = 0;
    let gb1_off = hidden * input_dim;
    let gw2_off = gb1_off + hidden;
    let gb2_off = gw2_off + hidden;
    let mut act = vec![0.0; hidden];
    for (x, &t) in xs.iter().zip(ys) {
        let mut y = params[gb2_off];
        for h in 0..hidden {
            let mut a = b1[h];
            let row = &w1[h * input_dim..(h + 1) * input_dim];
            for (wi, xi) in row.iter().zip(x) {
                a += wi * xi;
            }
            act[h] = sigmoid(a);
            y += w2[h] * act[h];
        }
        let err = y - t;
        loss += err * err;
        // dL/dy for one sample under mean loss: 2 err / n.
        let gy = 2.0 * err / n;
        grad[gb2_off] += gy;
        for h in 0..hidden {
            grad[gw2_off + h] += gy * act[h];
            let ga = gy * w2[h] * act[h] * (1.0 - act[h]);
            grad[gb1_off + h] += ga;
            let row = &mut grad[gw1_off + h * input_dim..gw1_off + (h + 1) * input_dim];
            for (gi, xi) in row.iter_mut().zip(x) {
                *gi += ga * xi;
            }
        }
    }
    (loss / n, grad)
}

fn mlp_input(state_x_mean: &[f64], state_x_std: &[f64], n_macs: usize, q: &FeatureRow) -> Vec<f64> {
    let mut x = Vec::with_capacity(3 + n_macs);
    for (i, raw) in [q.x, q.y, q.z].into_iter().enumerate() {
        x.push((raw - state_x_mean[i]) / state_x_std[i]);
    }
    for m in 0..n_macs {
        x.push(if q.mac_index == m { 1.0 } else { 0.0 });
    }
    x
}

fn mlp_predict(state: &MlpState, q: &FeatureRow) -> f64 {
    let x = mlp_input(&state.x_mean, &state.x_std, state.n_macs, q);
    let y_std = mlp_forward(&state.params, state.input_dim, state.hidden, &x);
    y_std * state.y_std + state.y_mean
}

/// Seeded Xavier-uniform initialization over the flat parameter vector.
pub fn mlp_init(input_dim: usize, hidden: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = derive_rng(seed, "mlp-init");
    let mut params = vec![0.0; mlp_param_count(input_dim, hidden)];
    let lim1 = (6.0 / (input_dim + hidden) as f64).sqrt();
    let lim2 = (6.0 / (hidden + 1) as f64).sqrt();
    for p in params.iter_mut().take(hidden * input_dim) {
        *p = rng.gen_range(-lim1..lim1);
    }
    let w2_off = hidden * input_dim + hidden;
    for p in params.iter_mut().skip(w2_off).take(hidden) {
        *p = rng.gen_range(-lim2..lim2);
    }
    params
}

fn fit_mlp(train: &[FeatureRow], config: &EstimatorConfig) -> Result<FittedEstimator, EstimatorError> {
    let n_macs = train
        .iter()
        .map(|r| r.mac_onehot.len())
        .max()
        .unwrap_or(0)
        .max(train.iter().map(|r| r.mac_index + 1).max().unwrap_or(1));
    let input_dim = 3 + n_macs;
    let hidden = config.mlp.hidden;

    // Standardize coordinates and target on training statistics.
    let n = train.len() as f64;
    let mut x_mean = vec![0.0; 3];
    let mut x_std = vec![0.0; 3];
    for r in train {
        for (i, v) in [r.x, r.y, r.z].into_iter().enumerate() {
            x_mean[i] += v;
        }
    }
    for m in &mut x_mean {
        *m /= n;
    }
    for r in train {
        for (i, v) in [r.x, r.y, r.z].into_iter().enumerate() {
            x_std[i] += (v - x_mean[i]).powi(2);
        }
    }
    for s in &mut x_std {
        *s = (*s / n).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let y_mean = train.iter().map(|r| r.target_rssi).sum::<f64>() / n;
    let mut y_std = (train
        .iter()
        .map(|r| (r.target_rssi - y_mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if y_std < 1e-12 {
        y_std = 1.0;
    }

    let xs: Vec<Vec<f64>> = train
        .iter()
        .map(|r| {
            let mut x = vec![
                (r.x - x_mean[0]) / x_std[0],
                (r.y - x_mean[1]) / x_std[1],
                (r.z - x_mean[2]) / x_std[2],
            ];
            for m in 0..n_macs {
                x.push(if r.mac_index == m { 1.0 } else { 0.0 });
            }
            x
        })
        .collect();
    let ys: Vec<f64> = train
        .iter()
        .map(|r| (r.target_rssi - y_mean) / y_std)
        .collect();

    let mut params = mlp_init(input_dim, hidden, config.mlp.seed);
    let (initial_loss, _) = mlp_loss_and_grad(&params, input_dim, hidden, &xs, &ys);

    // Adam with bias-corrected moments over shuffled mini-batches.
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = derive_rng(config.mlp.seed, "mlp-batches");
    let batch = config.mlp.batch.max(1).min(train.len());
    let mut final_loss = initial_loss;
    for epoch in 0..config.mlp.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<f64> = chunk.iter().map(|&i| ys[i]).collect();
            let (_, grad) = mlp_loss_and_grad(&params, input_dim, hidden, &bx, &by);
            step += 1;
            let bc1 = 1.0 - beta1.powi(step as i32);
            let bc2 = 1.0 - beta2.powi(step as i32);
            for i in 0..params.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                params[i] -= config.mlp.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            }
        }
        let (loss, _) = mlp_loss_and_grad(&params, input_dim, hidden, &xs, &ys);
        if !loss.is_finite() {
            return Err(EstimatorError::NonFiniteLoss(epoch));
        }
        final_loss = loss;
    }

    Ok(FittedEstimator::Mlp {
        config: *config,
        state: MlpState {
            params,
            input_dim,
            hidden,
            x_mean,
            x_std,
            y_mean,
            y_std,
            n_macs,
            final_loss,
            initial_loss,
        },
    })
}

/// One grid-search cell result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub config: EstimatorConfig,
    pub val_rmse: f64,
}

/// Exhaustive grid search by validation RMSE. Ties break toward smaller k,
/// then Uniform before Distance, then lower p.
pub fn grid_search(
    train: &[FeatureRow],
    val: &[FeatureRow],
    grid: &[EstimatorConfig],
) -> Result<(EstimatorConfig, Vec<GridCell>), EstimatorError> {
    if grid.is_empty() {
        return Err(EstimatorError::InvalidConfig("empty grid".to_string()));
    }
    let mut table = Vec::with_capacity(grid.len());
    for cfg in grid {
        let fitted = fit(train, cfg)?;
        let mut sq = 0.0;
        for q in val {
            let p = fitted.predict_or_fallback(q);
            sq += (p - q.target_rssi).powi(2);
        }
        let val_rmse = (sq / val.len() as f64).sqrt();
        table.push(GridCell { config: *cfg, val_rmse });
    }
    table.sort_by(|a, b| {
        a.val_rmse
            .partial_cmp(&b.val_rmse)
            .unwrap()
            .then(a.config.k.cmp(&b.config.k))
            .then(a.config.weights.cmp(&b.config.weights))
            .then(a.config.minkowski_p.partial_cmp(&b.config.minkowski_p).unwrap())
    });
    Ok((table[0].config, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn row(x: f64, y: f64, z: f64, mac_index: usize, n_macs: usize, target: f64) -> FeatureRow {
        let mut r = query_row(x, y, z, mac_index, n_macs);
        r.target_rssi = target;
        r
    }

    fn random_rows(n: usize, n_macs: usize, seed: u64) -> Vec<FeatureRow> {
        let mut rng = derive_rng(seed, "est-fixture");
        (0..n)
            .map(|_| {
                row(
                    rng.gen_range(0.0..4.0),
                    rng.gen_range(0.0..3.0),
                    rng.gen_range(0.0..2.0),
                    rng.gen_range(0..n_macs),
                    n_macs,
                    rng.gen_range(-95.0..-40.0),
                )
            })
            .collect()
    }

    /// Explicit-vector kNN oracle: materializes full feature vectors and
    /// does the all-pairs search, independent of the analytic distance.
    fn knn_oracle(train: &[FeatureRow], q: &FeatureRow, cfg: &EstimatorConfig) -> f64 {
        let vecf = |r: &FeatureRow| -> Vec<f64> {
            let mut v = vec![r.x, r.y, r.z];
            for (i, _) in r.mac_onehot.iter().enumerate() {
                v.push(if i == r.mac_index { cfg.onehot_factor } else { 0.0 });
            }
            v
        };
        let qv = vecf(q);
        let mut cand: Vec<(f64, usize, f64)> = train
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let rv = vecf(r);
                let d = rv
                    .iter()
                    .zip(&qv)
                    .map(|(a, b)| (a - b).abs().powf(cfg.minkowski_p))
                    .sum::<f64>()
                    .powf(1.0 / cfg.minkowski_p);
                (d, i, r.target_rssi)
            })
            .collect();
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let top = &cand[..cfg.k.min(cand.len())];
        let exact: Vec<f64> = top.iter().filter(|c| c.0 == 0.0).map(|c| c.2).collect();
        if !exact.is_empty() {
            return exact.iter().sum::<f64>() / exact.len() as f64;
        }
        match cfg.weights {
            Weights::Uniform => top.iter().map(|c| c.2).sum::<f64>() / top.len() as f64,
            Weights::Distance => {
                let den: f64 = top.iter().map(|c| 1.0 / c.0).sum();
                top.iter().map(|c| c.2 / c.0).sum::<f64>() / den
            }
        }
    }

    #[test]
    fn baseline_two_point_mean() {
        let train = vec![
            row(0.0, 0.0, 0.0, 0, 1, -70.0),
            row(1.0, 0.0, 0.0, 0, 1, -72.0),
        ];
        let fitted = fit(&train, &EstimatorConfig::baseline()).unwrap();
        let p = fitted.predict(&query_row(5.0, 5.0, 5.0, 0, 1)).unwrap();
        assert_eq!(p, -71.0);
    }

    #[test]
    fn baseline_unknown_mac_falls_back_to_global_mean() {
        let train = vec![
            row(0.0, 0.0, 0.0, 0, 2, -60.0),
            row(1.0, 0.0, 0.0, 0, 2, -80.0),
        ];
        let fitted = fit(&train, &EstimatorConfig::baseline()).unwrap();
        let p = fitted.predict(&query_row(0.0, 0.0, 0.0, 1, 2)).unwrap();
        assert_eq!(p, -70.0);
    }

    #[test]
    fn baseline_matches_group_by_oracle() {
        let train = random_rows(50, 4, 11);
        let fitted = fit(&train, &EstimatorConfig::baseline()).unwrap();
        for m in 0..4 {
            let group: Vec<f64> = train
                .iter()
                .filter(|r| r.mac_index == m)
                .map(|r| r.target_rssi)
                .collect();
            if group.is_empty() {
                continue;
            }
            let expect = group.iter().sum::<f64>() / group.len() as f64;
            let p = fitted.predict(&query_row(0.0, 0.0, 0.0, m, 4)).unwrap();
            assert!((p - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn knn_zero_distance_returns_exact_target() {
        let train = random_rows(30, 3, 2);
        let fitted = fit(&train, &EstimatorConfig::knn_k3()).unwrap();
        let q = train[7].clone();
        let p = fitted.predict(&q).unwrap();
        assert_eq!(p, train[7].target_rssi);
    }

    #[test]
    fn knn_one_dimensional_hand_example() {
        // Train {(0,-60), (1,-70), (3,-90)}, k=2, distance weights,
        // query 0.5: weights 2 and 2 give (-60 - 70) / 2 = -65.
        let train = vec![
            row(0.0, 0.0, 0.0, 0, 1, -60.0),
            row(1.0, 0.0, 0.0, 0, 1, -70.0),
            row(3.0, 0.0, 0.0, 0, 1, -90.0),
        ];
        let cfg = EstimatorConfig {
            k: 2,
            ..EstimatorConfig::knn_k3()
        };
        let fitted = fit(&train, &cfg).unwrap();
        let p = fitted.predict(&query_row(0.5, 0.0, 0.0, 0, 1)).unwrap();
        assert!((p - -65.0).abs() < 1e-12);
    }

    #[test]
    fn knn_both_variants_match_brute_force_oracle() {
        let train = random_rows(200, 5, 21);
        let queries = random_rows(50, 5, 22);
        for cfg in [
            EstimatorConfig::knn_k3(),
            EstimatorConfig::knn_k16_factor3(),
        ] {
            let fitted = fit(&train, &cfg).unwrap();
            for q in &queries {
                let got = fitted.predict(q).unwrap();
                let want = knn_oracle(&train, q, &cfg);
                assert!(
                    (got - want).abs() < 1e-9,
                    "{}: got {got}, oracle {want}",
                    cfg.label()
                );
            }
        }
    }

    #[test]
    fn knn_full_k_uniform_equals_global_mean_single_mac() {
        let train = random_rows(40, 1, 8);
        let cfg = EstimatorConfig {
            k: 40,
            weights: Weights::Uniform,
            ..EstimatorConfig::knn_k3()
        };
        let fitted = fit(&train, &cfg).unwrap();
        let mean = train.iter().map(|r| r.target_rssi).sum::<f64>() / 40.0;
        let p = fitted.predict(&query_row(0.3, 0.4, 0.5, 0, 1)).unwrap();
        assert!((p - mean).abs() < 1e-12);
    }

    #[test]
    fn per_mac_knn_equals_global_with_huge_factor() {
        // Every MAC has >= k rows, so an enormous one-hot factor confines
        // the global search to the query's own MAC.
        let mut train = Vec::new();
        for m in 0..3 {
            train.extend(random_rows(10, 1, 30 + m as u64).into_iter().map(|mut r| {
                r.mac_index = m;
                r.mac_onehot = vec![0.0; 3];
                r.mac_onehot[m] = 1.0;
                r
            }));
        }
        let per_mac = fit(&train, &EstimatorConfig::knn_per_mac()).unwrap();
        let global_cfg = EstimatorConfig {
            onehot_factor: 1e6,
            ..EstimatorConfig::knn_k3()
        };
        let global = fit(&train, &global_cfg).unwrap();
        let queries = random_rows(30, 3, 40);
        for q in &queries {
            let a = per_mac.predict(q).unwrap();
            let b = global.predict(q).unwrap();
            assert!((a - b).abs() < 1e-6, "per-mac {a}, global {b}");
        }
    }

    #[test]
    fn per_mac_unknown_mac_is_explicit_error() {
        let train = random_rows(20, 2, 3);
        let fitted = fit(&train, &EstimatorConfig::knn_per_mac()).unwrap();
        let q = query_row(1.0, 1.0, 1.0, 7, 8);
        assert!(matches!(
            fitted.predict(&q),
            Err(EstimatorError::NoModelForMac(7))
        ));
        let fallback = fitted.predict_or_fallback(&q);
        let mean = train.iter().map(|r| r.target_rssi).sum::<f64>() / 20.0;
        assert!((fallback - mean).abs() < 1e-12);
    }

    #[test]
    fn knn_affine_equivariance() {
        let train = random_rows(60, 3, 13);
        let shifted: Vec<FeatureRow> = train
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.target_rssi += 7.5;
                r
            })
            .collect();
        for cfg in [
            EstimatorConfig::baseline(),
            EstimatorConfig::knn_k3(),
            EstimatorConfig::knn_k16_factor3(),
            EstimatorConfig::knn_per_mac(),
        ] {
            let a = fit(&train, &cfg).unwrap();
            let b = fit(&shifted, &cfg).unwrap();
            for q in random_rows(20, 3, 14) {
                let pa = a.predict_or_fallback(&q);
                let pb = b.predict_or_fallback(&q);
                assert!((pb - pa - 7.5).abs() < 1e-9, "{}", cfg.label());
            }
        }
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let train = random_rows(5, 2, 55);
        let input_dim = 5;
        let hidden = 4;
        let xs: Vec<Vec<f64>> = train
            .iter()
            .map(|r| {
                let mut x = vec![r.x, r.y, r.z];
                for m in 0..2 {
                    x.push(if r.mac_index == m { 1.0 } else { 0.0 });
                }
                x
            })
            .collect();
        let ys: Vec<f64> = train.iter().map(|r| r.target_rssi / 50.0).collect();
        let params = mlp_init(input_dim, hidden, 99);
        let (_, grad) = mlp_loss_and_grad(&params, input_dim, hidden, &xs, &ys);
        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus[i] += h;
            let mut minus = params.clone();
            minus[i] -= h;
            let (lp, _) = mlp_loss_and_grad(&plus, input_dim, hidden, &xs, &ys);
            let (lm, _) = mlp_loss_and_grad(&minus, input_dim, hidden, &xs, &ys);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn mlp_zero_epochs_is_deterministic_initial_output() {
        let train = random_rows(30, 2, 5);
        let cfg = EstimatorConfig {
            kind: EstimatorKind::Mlp,
            mlp: MlpConfig {
                epochs: 0,
                seed: 3,
                ..MlpConfig::default()
            },
            ..EstimatorConfig::knn_k3()
        };
        let a = fit(&train, &cfg).unwrap();
        let b = fit(&train, &cfg).unwrap();
        let q = query_row(1.0, 1.0, 1.0, 0, 2);
        assert_eq!(a.predict(&q).unwrap(), b.predict(&q).unwrap());
        assert!(a.predict(&q).unwrap().is_finite());
    }

    #[test]
    fn mlp_fits_constant_target() {
        let mut train = random_rows(32, 2, 6);
        for r in &mut train {
            r.target_rssi = -64.0;
        }
        let cfg = EstimatorConfig {
            kind: EstimatorKind::Mlp,
            mlp: MlpConfig {
                epochs: 200,
                seed: 1,
                ..MlpConfig::default()
            },
            ..EstimatorConfig::knn_k3()
        };
        let fitted = fit(&train, &cfg).unwrap();
        // Constant target standardizes to zero with unit fallback std; the
        // bias-only solution exists, so training MSE collapses.
        let FittedEstimator::Mlp { state, .. } = &fitted else {
            panic!("wrong variant")
        };
        assert!(state.final_loss < 1e-3, "loss {}", state.final_loss);
        let p = fitted.predict(&query_row(2.0, 1.0, 1.0, 1, 2)).unwrap();
        assert!((p - -64.0).abs() < 0.5);
    }

    #[test]
    fn mlp_loss_decreases_over_training() {
        for seed in [1u64, 2, 3] {
            let train = random_rows(100, 3, 60 + seed);
            let cfg = EstimatorConfig {
                kind: EstimatorKind::Mlp,
                mlp: MlpConfig {
                    epochs: 50,
                    seed,
                    ..MlpConfig::default()
                },
                ..EstimatorConfig::knn_k3()
            };
            let FittedEstimator::Mlp { state, .. } = fit(&train, &cfg).unwrap() else {
                panic!("wrong variant")
            };
            assert!(
                state.final_loss < state.initial_loss,
                "seed {seed}: {} !< {}",
                state.final_loss,
                state.initial_loss
            );
        }
    }

    #[test]
    fn mlp_affine_equivariance_through_standardization() {
        let train = random_rows(50, 2, 70);
        let shifted: Vec<FeatureRow> = train
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.target_rssi += 10.0;
                r
            })
            .collect();
        let cfg = EstimatorConfig {
            kind: EstimatorKind::Mlp,
            mlp: MlpConfig {
                epochs: 50,
                seed: 4,
                ..MlpConfig::default()
            },
            ..EstimatorConfig::knn_k3()
        };
        let a = fit(&train, &cfg).unwrap();
        let b = fit(&shifted, &cfg).unwrap();
        for q in random_rows(10, 2, 71) {
            let pa = a.predict(&q).unwrap();
            let pb = b.predict(&q).unwrap();
            // Target standardization makes the training trajectory
            // identical, so the shift passes through exactly.
            assert!((pb - pa - 10.0).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_search_single_cell() {
        let train = random_rows(40, 2, 80);
        let val = random_rows(10, 2, 81);
        let grid = vec![EstimatorConfig::knn_k3()];
        let (best, table) = grid_search(&train, &val, &grid).unwrap();
        assert_eq!(best, grid[0]);
        assert_eq!(table.len(), 1);
    }

    #[test]
    fn grid_search_finds_planted_optimum() {
        // Validation queries duplicate training points, so k=1 with the
        // zero-distance rule is exact and provably optimal.
        let train = random_rows(50, 2, 90);
        let val: Vec<FeatureRow> = train[..10].to_vec();
        let grid: Vec<EstimatorConfig> = [1usize, 5, 20]
            .into_iter()
            .map(|k| EstimatorConfig {
                k,
                ..EstimatorConfig::knn_k3()
            })
            .collect();
        let (best, table) = grid_search(&train, &val, &grid).unwrap();
        assert_eq!(best.k, 1);
        assert_eq!(table[0].val_rmse, 0.0);
    }

    #[test]
    fn fitted_estimator_serializes_round_trip() {
        let train = random_rows(30, 2, 91);
        for cfg in [
            EstimatorConfig::baseline(),
            EstimatorConfig::knn_k3(),
            EstimatorConfig::knn_per_mac(),
            EstimatorConfig {
                kind: EstimatorKind::Mlp,
                mlp: MlpConfig {
                    epochs: 5,
                    ..MlpConfig::default()
                },
                ..EstimatorConfig::knn_k3()
            },
        ] {
            let fitted = fit(&train, &cfg).unwrap();
            let json = serde_json::to_string(&fitted).unwrap();
            let back: FittedEstimator = serde_json::from_str(&json).unwrap();
            assert_eq!(back, fitted);
            let q = query_row(1.0, 1.0, 1.0, 0, 2);
            assert_eq!(
                back.predict_or_fallback(&q),
                fitted.predict_or_fallback(&q)
            );
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad_k = EstimatorConfig {
            k: 0,
            ..EstimatorConfig::knn_k3()
        };
        assert!(bad_k.validate().is_err());
        let bad_p = EstimatorConfig {
            minkowski_p: 0.5,
            ..EstimatorConfig::knn_k3()
        };
        assert!(bad_p.validate().is_err());
    }
}
