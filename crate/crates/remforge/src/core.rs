//! Domain types shared by every stage: geometry, MAC addresses, the
//! location-annotated beacon sample and its JSONL log format, and seeded
//! RNG derivation helpers.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid MAC address {text:?}: {reason}")]
    InvalidMac { text: String, reason: String },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("volume extents must be positive, got {0} x {1} x {2}")]
    InvalidVolume(f64, f64, f64),
    #[error("at least 4 localization anchors are required, got {0}")]
    TooFewAnchors(usize),
    #[error("waypoint {0:?} lies outside the volume")]
    WaypointOutsideVolume(Point3),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A point in 3D space, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub const ORIGIN: Point3 = Point3::new(0.0, 0.0, 0.0);

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn add(&self, other: &Point3) -> Point3 {
        Point3::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    pub fn sub(&self, other: &Point3) -> Point3 {
        Point3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn scale(&self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn norm(&self) -> f64 {
        self.distance(&Point3::ORIGIN)
    }

    pub fn normalized(&self) -> Point3 {
        let n = self.norm();
        if n == 0.0 {
            *self
        } else {
            self.scale(1.0 / n)
        }
    }
}

/// L2 distance between two points.
pub fn euclidean_distance(a: &Point3, b: &Point3) -> f64 {
    a.distance(b)
}

/// Axis-aligned cuboid scan volume.
///
/// The default is a small lab room: 3.74 m (x) by 3.20 m (y) by 2.10 m (z)
/// with the origin at a corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    pub origin: Point3,
    pub extent_x: f64,
    pub extent_y: f64,
    pub extent_z: f64,
}

impl Volume {
    pub fn new(origin: Point3, ex: f64, ey: f64, ez: f64) -> Result<Self, CoreError> {
        if ex <= 0.0 || ey <= 0.0 || ez <= 0.0 {
            return Err(CoreError::InvalidVolume(ex, ey, ez));
        }
        Ok(Volume {
            origin,
            extent_x: ex,
            extent_y: ey,
            extent_z: ez,
        })
    }

    pub fn center(&self) -> Point3 {
        Point3::new(
            self.origin.x + self.extent_x / 2.0,
            self.origin.y + self.extent_y / 2.0,
            self.origin.z + self.extent_z / 2.0,
        )
    }

    /// True if `p` lies inside the volume, inflated by `slack` meters on
    /// every face. Use `slack = 0.0` for strict containment.
    pub fn contains(&self, p: &Point3, slack: f64) -> bool {
        p.x >= self.origin.x - slack
            && p.x <= self.origin.x + self.extent_x + slack
            && p.y >= self.origin.y - slack
            && p.y <= self.origin.y + self.extent_y + slack
            && p.z >= self.origin.z - slack
            && p.z <= self.origin.z + self.extent_z + slack
    }

    /// The 8 corner points, used for the default anchor deployment.
    pub fn corners(&self) -> [Point3; 8] {
        let o = self.origin;
        let (ex, ey, ez) = (self.extent_x, self.extent_y, self.extent_z);
        [
            Point3::new(o.x, o.y, o.z),
            Point3::new(o.x + ex, o.y, o.z),
            Point3::new(o.x, o.y + ey, o.z),
            Point3::new(o.x + ex, o.y + ey, o.z),
            Point3::new(o.x, o.y, o.z + ez),
            Point3::new(o.x + ex, o.y, o.z + ez),
            Point3::new(o.x, o.y + ey, o.z + ez),
            Point3::new(o.x + ex, o.y + ey, o.z + ez),
        ]
    }
}

impl Default for Volume {
    fn default() -> Self {
        Volume {
            origin: Point3::ORIGIN,
            extent_x: 3.74,
            extent_y: 3.20,
            extent_z: 2.10,
        }
    }
}

/// A localization anchor. Missions require at least 4 of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: u8,
    pub position: Point3,
}

/// Places one anchor at each corner of the volume, the default deployment.
pub fn corner_anchors(volume: &Volume) -> Vec<Anchor> {
    volume
        .corners()
        .iter()
        .enumerate()
        .map(|(i, &position)| Anchor {
            id: i as u8,
            position,
        })
        .collect()
}

/// A 48-bit MAC address. Canonical form is lowercase colon-separated hex;
/// ordering on the inner integer matches lexicographic order of that form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mac(pub u64);

impl Mac {
    pub fn parse(text: &str) -> Result<Mac, CoreError> {
        let hex: String = text.chars().filter(|c| *c != ':').collect();
        if hex.len() != 12 {
            return Err(CoreError::InvalidMac {
                text: text.to_string(),
                reason: format!("expected 12 hex digits, got {}", hex.len()),
            });
        }
        let value = u64::from_str_radix(&hex, 16).map_err(|_| CoreError::InvalidMac {
            text: text.to_string(),
            reason: "non-hex characters".to_string(),
        })?;
        Ok(Mac(value))
    }
}

impl fmt::Display for Mac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0.to_be_bytes();
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[2], b[3], b[4], b[5], b[6], b[7]
        )
    }
}

impl FromStr for Mac {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mac::parse(s)
    }
}

impl Serialize for Mac {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Mac {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Mac::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Validates and canonicalizes a MAC address string.
pub fn validate_mac(text: &str) -> Result<String, CoreError> {
    Ok(Mac::parse(text)?.to_string())
}

/// A single mission waypoint: where to hover, how long to scan, and the
/// per-hop transit budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Point3,
    pub dwell_scan_s: f64,
    pub transit_budget_s: f64,
}

impl Waypoint {
    pub fn new(position: Point3) -> Self {
        Waypoint {
            position,
            dwell_scan_s: 3.0,
            transit_budget_s: 4.0,
        }
    }

    pub fn validate(&self, volume: &Volume) -> Result<(), CoreError> {
        if !volume.contains(&self.position, 0.0) {
            return Err(CoreError::WaypointOutsideVolume(self.position));
        }
        if self.dwell_scan_s <= 0.0 || self.transit_budget_s <= 0.0 {
            return Err(CoreError::InvalidSample(
                "waypoint dwell and transit budget must be > 0".to_string(),
            ));
        }
        Ok(())
    }
}

/// One location-annotated beacon observation with UAV provenance.
///
/// Serialized as one JSON object per line; writers emit keys exactly in the
/// declared field order, readers accept any order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeaconSample {
    pub uav_id: String,
    pub seq: u64,
    pub t_ms: u64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_z: f64,
    pub ssid: String,
    pub mac: Mac,
    pub channel: u8,
    pub rssi_dbm: i32,
}

impl BeaconSample {
    pub fn est_position(&self) -> Point3 {
        Point3::new(self.est_x, self.est_y, self.est_z)
    }

    pub fn validate(&self, volume: &Volume) -> Result<(), CoreError> {
        if !(-100..=0).contains(&self.rssi_dbm) {
            return Err(CoreError::InvalidSample(format!(
                "rssi {} dBm outside [-100, 0]",
                self.rssi_dbm
            )));
        }
        if !(1..=13).contains(&self.channel) {
            return Err(CoreError::InvalidSample(format!(
                "channel {} outside [1, 13]",
                self.channel
            )));
        }
        // Localization noise may push the estimate slightly past the walls.
        if !volume.contains(&self.est_position(), 0.5) {
            return Err(CoreError::InvalidSample(format!(
                "estimated position {:?} outside volume (+0.5 m slack)",
                self.est_position()
            )));
        }
        Ok(())
    }
}

/// Writes samples as JSONL to `w`, one object per line, keys in field order.
pub fn write_samples<W: Write>(w: &mut W, samples: &[BeaconSample]) -> Result<(), CoreError> {
    for s in samples {
        serde_json::to_writer(&mut *w, s)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_samples_to_path(path: &Path, samples: &[BeaconSample]) -> Result<(), CoreError> {
    let mut buf = Vec::new();
    write_samples(&mut buf, samples)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a JSONL sample log. Returns the parsed samples together with
/// per-line diagnostics for malformed lines.
pub fn read_samples<R: BufRead>(
    r: R,
) -> Result<(Vec<BeaconSample>, Vec<(usize, String)>), CoreError> {
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<BeaconSample>(&line) {
            Ok(s) => samples.push(s),
            Err(e) => errors.push((i + 1, e.to_string())),
        }
    }
    Ok((samples, errors))
}

/// Rounds half away from zero, matching integer RSSI reporting of real
/// scan chips.
pub fn round_half_away(v: f64) -> i64 {
    if v >= 0.0 {
        (v + 0.5).floor() as i64
    } else {
        (v - 0.5).ceil() as i64
    }
}

/// splitmix64 step; the workhorse behind deterministic seed derivation and
/// the hashed shadowing field.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream label into an independent seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = splitmix64(master);
    for b in label.as_bytes() {
        h = splitmix64(h ^ u64::from(*b));
    }
    h
}

/// A ChaCha stream derived from `(master, label)`. Separate labels give
/// statistically independent streams; identical inputs give identical
/// streams.
pub fn derive_rng(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_identity() {
        let p = Point3::new(0.0, 0.0, 0.0);
        assert_eq!(euclidean_distance(&p, &p), 0.0);
    }

    #[test]
    fn distance_3_4_5() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(3.0, 4.0, 0.0);
        assert_eq!(euclidean_distance(&a, &b), 5.0);
    }

    #[test]
    fn distance_hand_computed() {
        // sqrt(0.81 + 1.44 + 0.64) = sqrt(2.89) = 1.7
        let a = Point3::new(1.1, 2.2, 0.5);
        let b = Point3::new(2.0, 1.0, 1.3);
        assert!((euclidean_distance(&a, &b) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn mac_case_normalization() {
        assert_eq!(validate_mac("AA:BB:CC:00:11:22").unwrap(), "aa:bb:cc:00:11:22");
    }

    #[test]
    fn mac_bare_form() {
        assert_eq!(validate_mac("aabbcc001122").unwrap(), "aa:bb:cc:00:11:22");
    }

    #[test]
    fn mac_invalid_hex() {
        assert!(validate_mac("zz:bb:cc:00:11:22").is_err());
    }

    #[test]
    fn mac_wrong_length() {
        assert!(validate_mac("aa:bb:cc").is_err());
    }

    #[test]
    fn mac_ordering_matches_lexicographic() {
        let a = Mac::parse("00:ff:00:00:00:00").unwrap();
        let b = Mac::parse("01:00:00:00:00:00").unwrap();
        assert!(a < b);
        assert!(a.to_string() < b.to_string());
    }

    #[test]
    fn volume_rejects_nonpositive_extent() {
        assert!(Volume::new(Point3::ORIGIN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn default_volume_matches_deployment() {
        let v = Volume::default();
        assert_eq!((v.extent_x, v.extent_y, v.extent_z), (3.74, 3.20, 2.10));
        assert_eq!(corner_anchors(&v).len(), 8);
    }

    #[test]
    fn round_half_away_from_zero() {
        assert_eq!(round_half_away(-72.5), -73);
        assert_eq!(round_half_away(72.5), 73);
        assert_eq!(round_half_away(-72.4), -72);
        assert_eq!(round_half_away(-72.6), -73);
    }

    #[test]
    fn sample_validation_bounds() {
        let v = Volume::default();
        let mut s = BeaconSample {
            uav_id: "A".into(),
            seq: 0,
            t_ms: 0,
            est_x: 1.0,
            est_y: 1.0,
            est_z: 1.0,
            ssid: "net".into(),
            mac: Mac(1),
            channel: 6,
            rssi_dbm: -70,
        };
        assert!(s.validate(&v).is_ok());
        s.rssi_dbm = -101;
        assert!(s.validate(&v).is_err());
        s.rssi_dbm = -70;
        s.channel = 14;
        assert!(s.validate(&v).is_err());
        s.channel = 6;
        s.est_x = 4.5; // > 3.74 + 0.5
        assert!(s.validate(&v).is_err());
    }

    #[test]
    fn jsonl_key_order_is_declared_order() {
        let s = BeaconSample {
            uav_id: "A".into(),
            seq: 3,
            t_ms: 12000,
            est_x: 1.0,
            est_y: 2.0,
            est_z: 0.5,
            ssid: "net01".into(),
            mac: Mac::parse("aa:bb:cc:00:11:22").unwrap(),
            channel: 6,
            rssi_dbm: -71,
        };
        let line = serde_json::to_string(&s).unwrap();
        let keys: Vec<usize> = [
            "uav_id", "seq", "t_ms", "est_x", "est_y", "est_z", "ssid", "mac", "channel",
            "rssi_dbm",
        ]
        .iter()
        .map(|k| line.find(&format!("\"{k}\"")).unwrap())
        .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn derive_rng_is_stable_and_label_sensitive() {
        use rand::RngCore;
        let mut a = derive_rng(7, "scan");
        let mut b = derive_rng(7, "scan");
        let mut c = derive_rng(7, "walk");
        assert_eq!(a.next_u64(), b.next_u64());
        assert_ne!(a.next_u64(), c.next_u64());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn triangle_inequality(
            ax in -50.0f64..50.0, ay in -50.0f64..50.0, az in -50.0f64..50.0,
            bx in -50.0f64..50.0, by in -50.0f64..50.0, bz in -50.0f64..50.0,
            cx in -50.0f64..50.0, cy in -50.0f64..50.0, cz in -50.0f64..50.0,
        ) {
            let a = Point3::new(ax, ay, az);
            let b = Point3::new(bx, by, bz);
            let c = Point3::new(cx, cy, cz);
            let eps = 1e-9;
            prop_assert!(a.distance(&c) <= a.distance(&b) + b.distance(&c) + eps);
            prop_assert!((a.distance(&b) - b.distance(&a)).abs() < eps);
            prop_assert!(a.distance(&b) >= 0.0);
        }

        #[test]
        fn sample_log_round_trips(
            seq in 0u64..1000,
            t_ms in 0u64..1_000_000,
            x in -0.4f64..4.1, y in -0.4f64..3.6, z in -0.4f64..2.5,
            mac in 0u64..0x0000_ffff_ffff_ffff,
            channel in 1u8..=13,
            rssi in -100i32..=0,
        ) {
            let s = BeaconSample {
                uav_id: "B".into(),
                seq, t_ms,
                est_x: x, est_y: y, est_z: z,
                ssid: format!("net{}", seq % 49),
                mac: Mac(mac),
                channel,
                rssi_dbm: rssi,
            };
            let mut buf = Vec::new();
            write_samples(&mut buf, std::slice::from_ref(&s)).unwrap();
            let (parsed, errs) = read_samples(&buf[..]).unwrap();
            prop_assert!(errs.is_empty());
            prop_assert_eq!(parsed, vec![s]);
        }
    }
}
