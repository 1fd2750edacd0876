//! Waypoint planning over the scan volume and the base-station campaign
//! driver that runs each UAV's mission in sequence and merges the logs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{BeaconSample, Point3, Volume, Waypoint};
use crate::fleetsim::{run_mission, FleetError, MissionConfig, MissionOutcome, MissionReport};
use crate::radioenv::RadioEnvironment;

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("margin {margin} m too large for volume (min extent {min_extent} m)")]
    MarginTooLarge { margin: f64, min_extent: f64 },
    #[error("waypoint count must be >= 1")]
    EmptyPlan,
    #[error("{uavs} UAVs but only {waypoints} waypoints")]
    MoreUavsThanWaypoints { uavs: usize, waypoints: usize },
    #[error(transparent)]
    Fleet(#[from] FleetError),
}

/// Default inset keeping waypoints clear of walls and anchors, meters.
pub const DEFAULT_MARGIN_M: f64 = 0.35;

/// Plans `count` waypoints evenly spread over the volume.
///
/// The layout is the near-cubic integer lattice `nx x ny x nz` with the
/// smallest product >= `count` and, among those, the least spacing
/// anisotropy; points sit at cell centers of the margin-inset box and are
/// emitted in boustrophedon order, truncated to `count`.
pub fn plan_waypoints(
    volume: &Volume,
    count: usize,
    margin_m: f64,
) -> Result<Vec<Waypoint>, MissionError> {
    if count == 0 {
        return Err(MissionError::EmptyPlan);
    }
    let min_extent = volume.extent_x.min(volume.extent_y).min(volume.extent_z);
    if margin_m >= min_extent / 2.0 {
        return Err(MissionError::MarginTooLarge {
            margin: margin_m,
            min_extent,
        });
    }
    let inner = (
        volume.extent_x - 2.0 * margin_m,
        volume.extent_y - 2.0 * margin_m,
        volume.extent_z - 2.0 * margin_m,
    );
    let (nx, ny, nz) = lattice_dims(count, inner);
    let mut points = Vec::with_capacity(nx * ny * nz);
    for iz in 0..nz {
        for iy in 0..ny {
            points.push((iz, iy));
        }
    }
    let mut waypoints = Vec::with_capacity(count);
    let mut row = 0usize;
    for iz in 0..nz {
        let ys: Vec<usize> = if iz % 2 == 0 {
            (0..ny).collect()
        } else {
            (0..ny).rev().collect()
        };
        for iy in ys {
            let xs: Vec<usize> = if row % 2 == 0 {
                (0..nx).collect()
            } else {
                (0..nx).rev().collect()
            };
            row += 1;
            for ix in xs {
                waypoints.push(Waypoint::new(Point3::new(
                    volume.origin.x + margin_m + (ix as f64 + 0.5) * inner.0 / nx as f64,
                    volume.origin.y + margin_m + (iy as f64 + 0.5) * inner.1 / ny as f64,
                    volume.origin.z + margin_m + (iz as f64 + 0.5) * inner.2 / nz as f64,
                )));
            }
        }
    }
    waypoints.truncate(count);
    Ok(waypoints)
}

/// Picks the lattice dimensions for `count` points over a box with inner
/// extents `(lx, ly, lz)`: smallest product covering `count`, ties broken by
/// the most isotropic cell spacing, then lexicographically.
pub fn lattice_dims(count: usize, inner: (f64, f64, f64)) -> (usize, usize, usize) {
    let mut best: Option<(usize, f64, (usize, usize, usize))> = None;
    for nx in 1..=count {
        for ny in 1..=count.div_ceil(nx) {
            let nz = count.div_ceil(nx * ny);
            let product = nx * ny * nz;
            let spacings = [
                inner.0 / nx as f64,
                inner.1 / ny as f64,
                inner.2 / nz as f64,
            ];
            let anisotropy = spacings.iter().cloned().fold(f64::MIN, f64::max)
                / spacings.iter().cloned().fold(f64::MAX, f64::min);
            let candidate = (product, anisotropy, (nx, ny, nz));
            let better = match &best {
                None => true,
                Some((bp, ba, bdims)) => {
                    product < *bp
                        || (product == *bp && anisotropy < *ba - 1e-12)
                        || (product == *bp
                            && (anisotropy - *ba).abs() <= 1e-12
                            && (nx, ny, nz) < *bdims)
                }
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    best.unwrap().2
}

/// Reorders an arbitrary set of lattice waypoints into boustrophedon
/// (lawnmower) order: z-planes ascending, y-rows snaking within a plane,
/// x snaking within a row.
pub fn boustrophedon_order(waypoints: &[Waypoint]) -> Vec<Waypoint> {
    let mut pts: Vec<Waypoint> = waypoints.to_vec();
    pts.sort_by(|a, b| {
        (a.position.z, a.position.y, a.position.x)
            .partial_cmp(&(b.position.z, b.position.y, b.position.x))
            .unwrap()
    });
    let mut out: Vec<Waypoint> = Vec::with_capacity(pts.len());
    let mut plane: Vec<Vec<Waypoint>> = Vec::new(); // rows of current z
    let mut rows_emitted = 0usize;
    let mut planes: Vec<Vec<Vec<Waypoint>>> = Vec::new();
    for wp in pts {
        let same_plane = plane
            .last()
            .and_then(|r| r.last())
            .map(|w| (w.position.z - wp.position.z).abs() < 1e-9);
        let same_row = plane
            .last()
            .and_then(|r| r.last())
            .map(|w| (w.position.y - wp.position.y).abs() < 1e-9);
        match (same_plane, same_row) {
            (Some(true), Some(true)) => plane.last_mut().unwrap().push(wp),
            (Some(true), _) => plane.push(vec![wp]),
            (Some(false), _) => {
                planes.push(std::mem::take(&mut plane));
                plane.push(vec![wp]);
            }
            (None, _) => plane.push(vec![wp]),
        }
    }
    if !plane.is_empty() {
        planes.push(plane);
    }
    for (pi, mut rows) in planes.into_iter().enumerate() {
        if pi % 2 == 1 {
            rows.reverse();
        }
        for mut r in rows {
            if rows_emitted % 2 == 1 {
                r.reverse();
            }
            rows_emitted += 1;
            out.extend(r);
        }
    }
    out
}

/// Total transit path length of a waypoint sequence.
pub fn path_length(waypoints: &[Waypoint]) -> f64 {
    waypoints
        .windows(2)
        .map(|w| w[0].position.distance(&w[1].position))
        .sum()
}

/// The split axis used to hand contiguous spatial blocks to UAVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitAxis {
    X,
    Y,
    Z,
}

/// One UAV's share of the campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavPlan {
    pub uav_id: String,
    pub waypoints: Vec<Waypoint>,
    pub radio_address: String,
    pub start_position: Point3,
    pub yaw_deg: f64,
}

/// Per-UAV ordered waypoint lists plus dispatch parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    pub per_uav: Vec<UavPlan>,
}

/// Splits waypoints into contiguous near-equal spatial blocks along `axis`
/// (default Y, giving each UAV its own slice of the room) and
/// boustrophedon-orders each UAV's block.
pub fn partition_plan(
    waypoints: &[Waypoint],
    uav_count: usize,
    axis: SplitAxis,
) -> Result<MissionPlan, MissionError> {
    if uav_count == 0 || waypoints.is_empty() {
        return Err(MissionError::EmptyPlan);
    }
    if uav_count > waypoints.len() {
        return Err(MissionError::MoreUavsThanWaypoints {
            uavs: uav_count,
            waypoints: waypoints.len(),
        });
    }
    let mut sorted: Vec<Waypoint> = waypoints.to_vec();
    sorted.sort_by(|a, b| {
        let ka = sort_key(a, axis);
        let kb = sort_key(b, axis);
        ka.partial_cmp(&kb).unwrap()
    });
    let n = sorted.len();
    let base = n / uav_count;
    let extra = n % uav_count;
    let mut per_uav = Vec::with_capacity(uav_count);
    let mut offset = 0usize;
    for i in 0..uav_count {
        let size = base + usize::from(i < extra);
        let block = boustrophedon_order(&sorted[offset..offset + size]);
        offset += size;
        let uav_id = uav_name(i);
        let first = block[0].position;
        per_uav.push(UavPlan {
            uav_id: uav_id.clone(),
            waypoints: block,
            radio_address: format!("radio://0/{}/2M/E7E7E7E7{:02X}", 80 + 10 * i, i),
            start_position: Point3::new(first.x, first.y, 0.0),
            yaw_deg: 0.0,
        });
    }
    Ok(MissionPlan { per_uav })
}

fn sort_key(wp: &Waypoint, axis: SplitAxis) -> (f64, f64, f64) {
    let p = wp.position;
    match axis {
        SplitAxis::X => (p.x, p.y, p.z),
        SplitAxis::Y => (p.y, p.x, p.z),
        SplitAxis::Z => (p.z, p.y, p.x),
    }
}

/// "A", "B", ..., "Z", "AA", ...
pub fn uav_name(index: usize) -> String {
    let mut n = index;
    let mut name = String::new();
    loop {
        name.insert(0, (b'A' + (n % 26) as u8) as char);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    name
}

/// Aggregated outcome of a sequential multi-UAV campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignReport {
    pub missions: Vec<MissionReport>,
    pub total_samples: usize,
    /// Sample count per global waypoint index, in dispatch order.
    pub samples_per_waypoint: Vec<(String, usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub samples: Vec<BeaconSample>,
    pub report: CampaignReport,
    pub missions: Vec<MissionOutcome>,
}

/// Runs every UAV's mission in sequence against the shared environment and
/// merges the sample logs, preserving each UAV's sequence order. A mission
/// abort does not prevent later UAVs from flying.
pub fn run_campaign(
    plan: &MissionPlan,
    env: &RadioEnvironment,
    cfg: &MissionConfig,
    master_seed: u64,
) -> Result<CampaignOutcome, MissionError> {
    let mut samples = Vec::new();
    let mut missions = Vec::new();
    let mut reports = Vec::new();
    let mut per_waypoint = Vec::new();
    for uav in &plan.per_uav {
        let outcome = run_mission(
            &uav.uav_id,
            uav.start_position,
            &uav.waypoints,
            env,
            cfg,
            master_seed,
        )?;
        samples.extend(outcome.received.iter().map(|r| r.sample.clone()));
        for (i, count) in outcome.report.samples_per_waypoint.iter().enumerate() {
            per_waypoint.push((uav.uav_id.clone(), i, *count));
        }
        reports.push(outcome.report.clone());
        missions.push(outcome);
    }
    let total_samples = samples.len();
    Ok(CampaignOutcome {
        samples,
        report: CampaignReport {
            missions: reports,
            total_samples,
            samples_per_waypoint: per_waypoint,
        },
        missions,
    })
}
