//! Synthetic ground-truth radio environment.
//!
//! Access points, a log-distance path-loss model with a seeded deterministic
//! shadowing field, beacon-scan sensing with a detection floor, and the
//! control-radio self-interference model. The environment doubles as the
//! oracle that downstream map-accuracy checks compare against.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{derive_rng, round_half_away, splitmix64, Mac, Point3, Volume};

#[derive(Debug, Error)]
pub enum RadioEnvError {
    #[error("query point coincides with AP {0}")]
    CoincidentPoint(Mac),
    #[error("invalid access point {mac}: {reason}")]
    InvalidAp { mac: Mac, reason: String },
    #[error("scenario wants {ssids} SSIDs but only {aps} APs")]
    MoreSsidsThanAps { ssids: usize, aps: usize },
    #[error("scenario counts must be positive")]
    EmptyScenario,
}

/// One Wi-Fi access point of the synthetic environment. Positions typically
/// lie outside the scan volume (neighboring apartments, other floors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub mac: Mac,
    pub ssid: String,
    pub channel: u8,
    pub position: Point3,
    pub tx_power_dbm: f64,
    pub path_loss_exponent: f64,
    /// Walls between the AP and the scan volume; each adds a fixed
    /// attenuation.
    pub wall_count_toward_volume: u32,
    /// Seed of this AP's shadowing field.
    pub seed: u64,
}

impl AccessPoint {
    pub fn validate(&self) -> Result<(), RadioEnvError> {
        if !(1..=13).contains(&self.channel) {
            return Err(RadioEnvError::InvalidAp {
                mac: self.mac,
                reason: format!("channel {} outside [1, 13]", self.channel),
            });
        }
        if !(-10.0..=25.0).contains(&self.tx_power_dbm) {
            return Err(RadioEnvError::InvalidAp {
                mac: self.mac,
                reason: format!("tx power {} dBm outside [-10, 25]", self.tx_power_dbm),
            });
        }
        if !(1.5..=6.0).contains(&self.path_loss_exponent) {
            return Err(RadioEnvError::InvalidAp {
                mac: self.mac,
                reason: format!(
                    "path loss exponent {} outside [1.5, 6]",
                    self.path_loss_exponent
                ),
            });
        }
        Ok(())
    }
}

/// Propagation and sensing parameters shared by all APs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    /// Reference distance of the log-distance model, meters.
    pub d0_m: f64,
    /// Std-dev of the spatial shadowing field, dB.
    pub shadow_sigma_db: f64,
    /// Per-scan jitter std-dev, dB.
    pub temporal_sigma_db: f64,
    /// Attenuation per wall, dB.
    pub wall_attenuation_db: f64,
    /// Detection floor of the scanning chip, dBm.
    pub sensitivity_dbm: f64,
    /// Baseline probability of detecting an above-floor AP in one scan.
    pub detect_prob: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            d0_m: 1.0,
            shadow_sigma_db: 4.0,
            temporal_sigma_db: 1.5,
            wall_attenuation_db: 5.0,
            sensitivity_dbm: -92.0,
            detect_prob: 0.95,
        }
    }
}

/// Path loss at the reference distance, dB. Fixed free-space-like constant.
pub const REFERENCE_LOSS_DB: f64 = 40.0;

/// Shadow-field voxel resolution, meters.
pub const SHADOW_VOXEL_M: f64 = 0.25;

/// Control-radio self-interference model. Channels whose center frequency
/// falls within `overlap_halfwidth_mhz` of the radio carrier have their
/// detection probability multiplied by `suppression_factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterferenceModel {
    /// Carrier of the control radio, MHz; `None` when the radio is off.
    pub radio_freq_mhz: Option<u32>,
    pub overlap_halfwidth_mhz: f64,
    pub suppression_factor: f64,
}

impl Default for InterferenceModel {
    fn default() -> Self {
        InterferenceModel {
            radio_freq_mhz: None,
            overlap_halfwidth_mhz: 11.0,
            suppression_factor: 0.25,
        }
    }
}

impl InterferenceModel {
    pub fn off() -> Self {
        InterferenceModel::default()
    }

    pub fn at(freq_mhz: u32) -> Self {
        InterferenceModel {
            radio_freq_mhz: Some(freq_mhz),
            ..InterferenceModel::default()
        }
    }

    /// Detection-probability multiplier for a Wi-Fi channel under this model.
    pub fn suppression(&self, channel: u8) -> f64 {
        match self.radio_freq_mhz {
            Some(freq) => {
                let center = channel_center_mhz(channel);
                if (f64::from(freq) - center).abs() <= self.overlap_halfwidth_mhz {
                    self.suppression_factor
                } else {
                    1.0
                }
            }
            None => 1.0,
        }
    }
}

/// Center frequency of 2.4 GHz Wi-Fi channel `c`, MHz.
pub fn channel_center_mhz(channel: u8) -> f64 {
    2412.0 + 5.0 * f64::from(channel - 1)
}

/// The complete environment: AP population plus propagation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioEnvironment {
    pub aps: Vec<AccessPoint>,
    pub params: PropagationParams,
}

/// Deterministic zero-mean spatial shadowing, dB.
///
/// The value is a pure function of `(seed, voxel index)` at
/// [`SHADOW_VOXEL_M`] resolution: repeated scans at one location see a fixed
/// spatial bias plus only temporal jitter. The field is a seeded sum of
/// cosine plane waves (wavelengths 1 to 4 m), so nearby voxels are strongly
/// correlated; that spatial structure is what location-aware estimators
/// exploit. Over domains much larger than the longest wavelength the field
/// is zero-mean with std `sigma_db`.
pub fn shadow_field(seed: u64, p: &Point3, sigma_db: f64) -> f64 {
    if sigma_db == 0.0 {
        return 0.0;
    }
    // Quantize to the voxel center so every point in a voxel sees one value.
    let cx = ((p.x / SHADOW_VOXEL_M).floor() + 0.5) * SHADOW_VOXEL_M;
    let cy = ((p.y / SHADOW_VOXEL_M).floor() + 0.5) * SHADOW_VOXEL_M;
    let cz = ((p.z / SHADOW_VOXEL_M).floor() + 0.5) * SHADOW_VOXEL_M;
    const M: usize = 48;
    const TAU: f64 = std::f64::consts::TAU;
    let unit = |h: u64| (h >> 11) as f64 / (1u64 << 53) as f64;
    let mut state = splitmix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut acc = 0.0;
    for _ in 0..M {
        state = splitmix64(state);
        let u1 = unit(state);
        state = splitmix64(state);
        let u2 = unit(state);
        state = splitmix64(state);
        let u3 = unit(state);
        state = splitmix64(state);
        let u4 = unit(state);
        // Uniform direction on the sphere, log-uniform wavelength, uniform
        // phase.
        let zd = 2.0 * u1 - 1.0;
        let r = (1.0 - zd * zd).sqrt();
        let az = TAU * u2;
        let wavelength = 4.0f64.powf(u3);
        let k = TAU / wavelength;
        let phase = TAU * u4;
        acc += (k * (r * az.cos() * cx + r * az.sin() * cy + zd * cz) + phase).cos();
    }
    sigma_db * (2.0 / M as f64).sqrt() * acc
}

/// Noiseless mean RSS of `ap` at `p`, dBm: log-distance path loss with wall
/// attenuation plus the AP's deterministic shadowing bias.
pub fn mean_rss(
    ap: &AccessPoint,
    p: &Point3,
    params: &PropagationParams,
) -> Result<f64, RadioEnvError> {
    let d = ap.position.distance(p);
    if d <= 0.0 {
        return Err(RadioEnvError::CoincidentPoint(ap.mac));
    }
    let path_loss = REFERENCE_LOSS_DB
        + 10.0 * ap.path_loss_exponent * (d / params.d0_m).log10()
        + f64::from(ap.wall_count_toward_volume) * params.wall_attenuation_db;
    Ok(ap.tx_power_dbm - path_loss + shadow_field(ap.seed, p, params.shadow_sigma_db))
}

/// One entry of a scan result, mirroring the scan chip's output tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTuple {
    pub ssid: String,
    pub rssi_dbm: i32,
    pub mac: Mac,
    pub channel: u8,
}

/// Performs one beacon scan at `p`.
///
/// Every AP consumes the same number of rng draws whether or not it is
/// detected, so two scans with identical streams differ only through the
/// suppression decision: the radio-on detection set is always a subset of
/// the radio-off one.
pub fn perform_scan(
    env: &RadioEnvironment,
    p: &Point3,
    interference: &InterferenceModel,
    rng: &mut ChaCha8Rng,
) -> Vec<ScanTuple> {
    let jitter = Normal::new(0.0, env.params.temporal_sigma_db.max(f64::MIN_POSITIVE)).unwrap();
    let mut out = Vec::new();
    for ap in &env.aps {
        let noise = if env.params.temporal_sigma_db > 0.0 {
            jitter.sample(rng)
        } else {
            let _ = jitter.sample(rng);
            0.0
        };
        let u_detect: f64 = rng.gen();
        let u_suppress: f64 = rng.gen();
        let rss = match mean_rss(ap, p, &env.params) {
            Ok(m) => m + noise,
            Err(_) => continue,
        };
        if rss < env.params.sensitivity_dbm {
            continue;
        }
        if u_detect > env.params.detect_prob {
            continue;
        }
        let suppression = interference.suppression(ap.channel);
        if suppression < 1.0 && u_suppress > suppression {
            continue;
        }
        out.push(ScanTuple {
            ssid: ap.ssid.clone(),
            rssi_dbm: round_half_away(rss).clamp(-100, 0) as i32,
            mac: ap.mac,
            channel: ap.channel,
        });
    }
    out
}

/// Mean AP count per Wi-Fi channel for one radio frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceRow {
    pub radio_freq_mhz: Option<u32>,
    /// Index 0 is channel 1.
    pub mean_ap_count: [f64; 13],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceTable {
    pub scans_per_freq: u32,
    pub rows: Vec<InterferenceRow>,
}

/// The radio frequencies of the interference sweep: off plus the radio's
/// range in 25 MHz increments.
pub fn sweep_frequencies() -> Vec<Option<u32>> {
    let mut freqs = vec![None];
    freqs.extend((0..6).map(|i| Some(2400 + 25 * i)));
    freqs
}

/// Sweeps the control radio over `freqs` at a fixed position, averaging
/// per-channel detections over `scans_per_freq` scans.
///
/// Scan `i` uses the same rng stream for every frequency, so per-channel
/// means are exactly monotone in the suppression (radio off dominates).
pub fn interference_experiment(
    env: &RadioEnvironment,
    p: &Point3,
    freqs: &[Option<u32>],
    scans_per_freq: u32,
    master_seed: u64,
) -> InterferenceTable {
    let mut rows = Vec::new();
    for freq in freqs {
        let model = match freq {
            Some(f) => InterferenceModel::at(*f),
            None => InterferenceModel::off(),
        };
        let mut counts = [0.0f64; 13];
        for scan_idx in 0..scans_per_freq {
            let mut rng = derive_rng(master_seed, &format!("interference-scan-{scan_idx}"));
            for tuple in perform_scan(env, p, &model, &mut rng) {
                counts[usize::from(tuple.channel) - 1] += 1.0;
            }
        }
        for c in counts.iter_mut() {
            *c /= f64::from(scans_per_freq);
        }
        rows.push(InterferenceRow {
            radio_freq_mhz: *freq,
            mean_ap_count: counts,
        });
    }
    InterferenceTable {
        scans_per_freq,
        rows,
    }
}

impl InterferenceTable {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "radio_freq,channel,mean_ap_count")?;
        for row in &self.rows {
            let freq = match row.radio_freq_mhz {
                Some(f) => f.to_string(),
                None => "off".to_string(),
            };
            for (i, count) in row.mean_ap_count.iter().enumerate() {
                writeln!(w, "{},{},{}", freq, i + 1, count)?;
            }
        }
        Ok(())
    }
}

/// Scenario used to generate an environment. The defaults are calibrated so
/// the detected-RSS mean over the volume lands near -73 dBm and a scan sees
/// roughly half of the AP population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub ap_count: usize,
    pub ssid_count: usize,
    pub volume: Volume,
    pub tx_power_range: (f64, f64),
    pub path_loss_exponent: f64,
    /// Fraction of APs in the near tier (same building wing).
    pub near_fraction: f64,
    pub near_distance_m: (f64, f64),
    pub far_distance_m: (f64, f64),
    pub near_walls: (u32, u32),
    pub far_walls: (u32, u32),
    /// Direction toward the building center; AP placement is biased this way.
    pub gradient_direction: (f64, f64, f64),
    pub gradient_strength: f64,
    pub propagation: PropagationParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            ap_count: 73,
            ssid_count: 49,
            volume: Volume::default(),
            tx_power_range: (-4.0, 8.0),
            path_loss_exponent: 3.0,
            near_fraction: 0.55,
            near_distance_m: (4.0, 16.0),
            far_distance_m: (25.0, 90.0),
            near_walls: (1, 2),
            far_walls: (3, 6),
            gradient_direction: (1.0, -1.0, 0.0),
            gradient_strength: 0.8,
            propagation: PropagationParams::default(),
        }
    }
}

/// Generates a deterministic AP population from `master_seed`.
///
/// Placement directions are biased toward `gradient_direction`, which puts
/// more (and closer) APs on the building-center side of the volume and
/// reproduces the rising sample counts toward increasing x / decreasing y.
pub fn generate_environment(
    cfg: &ScenarioConfig,
    master_seed: u64,
) -> Result<RadioEnvironment, RadioEnvError> {
    if cfg.ap_count == 0 || cfg.ssid_count == 0 {
        return Err(RadioEnvError::EmptyScenario);
    }
    if cfg.ssid_count > cfg.ap_count {
        return Err(RadioEnvError::MoreSsidsThanAps {
            ssids: cfg.ssid_count,
            aps: cfg.ap_count,
        });
    }
    let mut rng = derive_rng(master_seed, "environment");
    let center = cfg.volume.center();
    let grad = Point3::new(
        cfg.gradient_direction.0,
        cfg.gradient_direction.1,
        cfg.gradient_direction.2,
    )
    .normalized();

    let mut macs = BTreeSet::new();
    while macs.len() < cfg.ap_count {
        macs.insert(Mac(rng.gen::<u64>() & 0x0000_ffff_ffff_ffff));
    }

    let mut aps = Vec::with_capacity(cfg.ap_count);
    for (i, mac) in macs.into_iter().enumerate() {
        let ssid_idx = if i < cfg.ssid_count {
            i
        } else {
            rng.gen_range(0..cfg.ssid_count)
        };
        let near = rng.gen::<f64>() < cfg.near_fraction;
        let (dlo, dhi) = if near {
            cfg.near_distance_m
        } else {
            cfg.far_distance_m
        };
        let distance = (rng.gen_range(dlo.ln()..dhi.ln())).exp();
        let (wlo, whi) = if near { cfg.near_walls } else { cfg.far_walls };
        let walls = rng.gen_range(wlo..=whi);

        // Isotropic direction nudged toward the building center; z flattened
        // so the population stays within a few floors.
        let dir = Point3::new(
            rng.gen_range(-1.0..1.0) + grad.x * cfg.gradient_strength,
            rng.gen_range(-1.0..1.0) + grad.y * cfg.gradient_strength,
            (rng.gen_range(-1.0..1.0) + grad.z * cfg.gradient_strength) * 0.35,
        )
        .normalized();
        let position = center.add(&dir.scale(distance));

        let channel = pick_channel(&mut rng);
        let ap = AccessPoint {
            mac,
            ssid: format!("net-{ssid_idx:02}"),
            channel,
            position,
            tx_power_dbm: rng.gen_range(cfg.tx_power_range.0..cfg.tx_power_range.1),
            path_loss_exponent: cfg.path_loss_exponent,
            wall_count_toward_volume: walls,
            seed: rng.gen(),
        };
        ap.validate()?;
        aps.push(ap);
    }
    Ok(RadioEnvironment {
        aps,
        params: cfg.propagation,
    })
}

// Real 2.4 GHz deployments pile onto 1/6/11.
fn pick_channel(rng: &mut ChaCha8Rng) -> u8 {
    if rng.gen::<f64>() < 0.6 {
        *[1u8, 6, 11].iter().nth(rng.gen_range(0..3)).unwrap()
    } else {
        rng.gen_range(1..=13)
    }
}
