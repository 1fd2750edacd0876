//! Tick-based simulation of a single UAV executing its waypoint mission:
//! transit kinematics, battery drain, localization noise on recorded
//! positions, and the base-station protocol including the radio-blackout
//! scan sequence with its watchdog and stabilize timers.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{derive_rng, BeaconSample, Point3, Waypoint};
use crate::radioenv::{perform_scan, InterferenceModel, RadioEnvironment};

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("at least 4 localization anchors are required, got {0}")]
    TooFewAnchors(u32),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(
        "mission infeasible: reaching the first waypoint needs {needed_j:.0} J, only {available_j:.0} J usable"
    )]
    Infeasible { needed_j: f64, available_j: f64 },
    #[error("mission has no waypoints")]
    NoWaypoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlightMode {
    Idle,
    Takeoff,
    Transit,
    PositionHold,
    Scanning,
    Landing,
    Depleted,
    EmergencyShutdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadioLink {
    Up,
    Down,
}

/// Base-station protocol timing and buffering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolParams {
    /// No setpoint for longer than this shuts the UAV down.
    pub watchdog_timeout_ms: u64,
    /// No setpoint for longer than this zeroes the attitude (drift halts).
    pub stabilize_timeout_ms: u64,
    /// Period of the internal setpoint feedback task during a scan.
    pub internal_setpoint_period_ms: u64,
    /// Scan-result buffer capacity, samples.
    pub tx_queue_capacity: usize,
    pub scan_duration_ms: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            watchdog_timeout_ms: 10_000,
            stabilize_timeout_ms: 500,
            internal_setpoint_period_ms: 100,
            tx_queue_capacity: 128,
            scan_duration_ms: 3_000,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), FleetError> {
        if !(self.internal_setpoint_period_ms < self.stabilize_timeout_ms
            && self.stabilize_timeout_ms < self.watchdog_timeout_ms)
        {
            return Err(FleetError::InvalidParams(
                "need setpoint period < stabilize timeout < watchdog timeout".to_string(),
            ));
        }
        Ok(())
    }
}

/// Energy-bucket battery. Defaults are calibrated so the baseline hover
/// endurance scenario (periodic 8 s scan interval, 2 s scans) depletes to
/// reserve after 36 scans at roughly 6 min.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryModel {
    pub capacity_j: f64,
    pub hover_w: f64,
    pub transit_w: f64,
    pub scan_extra_w: f64,
    /// Fraction of capacity kept as landing reserve.
    pub reserve_fraction: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        BatteryModel {
            capacity_j: 3956.0,
            hover_w: 10.0,
            transit_w: 13.0,
            scan_extra_w: 1.5,
            reserve_fraction: 0.05,
        }
    }
}

impl BatteryModel {
    pub fn validate(&self) -> Result<(), FleetError> {
        if !(self.transit_w >= self.hover_w && self.hover_w > 0.0) {
            return Err(FleetError::InvalidParams(
                "need transit_w >= hover_w > 0".to_string(),
            ));
        }
        Ok(())
    }

    pub fn reserve_j(&self) -> f64 {
        self.capacity_j * self.reserve_fraction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalizationMode {
    Twr,
    Tdoa,
}

/// Statistical localization error model; the anchor-based positioning system
/// is not simulated at the signal level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizationModel {
    pub mode: LocalizationMode,
    pub sigma_hover_m: f64,
    pub sigma_transit_m: f64,
    pub anchor_count: u32,
}

impl Default for LocalizationModel {
    fn default() -> Self {
        LocalizationModel {
            mode: LocalizationMode::Tdoa,
            sigma_hover_m: 0.09,
            sigma_transit_m: 0.20,
            anchor_count: 8,
        }
    }
}

impl LocalizationModel {
    pub fn validate(&self) -> Result<(), FleetError> {
        if self.anchor_count < 4 {
            return Err(FleetError::TooFewAnchors(self.anchor_count));
        }
        if self.sigma_hover_m > self.sigma_transit_m {
            return Err(FleetError::InvalidParams(
                "need sigma_hover <= sigma_transit".to_string(),
            ));
        }
        Ok(())
    }

    fn sigma(&self, hovering: bool) -> f64 {
        let base = if hovering {
            self.sigma_hover_m
        } else {
            self.sigma_transit_m
        };
        // Fewer than the advised six anchors degrades robustness.
        if self.anchor_count < 6 {
            base * 1.5
        } else {
            base
        }
    }
}

/// Draws a noisy position estimate around the true position.
pub fn localize(
    true_position: &Point3,
    model: &LocalizationModel,
    hovering: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Point3, FleetError> {
    model.validate()?;
    let sigma = model.sigma(hovering);
    if sigma <= 0.0 {
        return Ok(*true_position);
    }
    let normal = Normal::new(0.0, sigma).unwrap();
    Ok(Point3::new(
        true_position.x + normal.sample(rng),
        true_position.y + normal.sample(rng),
        true_position.z + normal.sample(rng),
    ))
}

/// Outcome of a watchdog inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WatchdogAction {
    None,
    /// Attitude zeroed; position drift halts.
    Stabilize,
    EmergencyShutdown,
}

/// Applies the setpoint watchdog rules to the gap since the last setpoint.
pub fn watchdog_check(last_setpoint_ms: u64, now_ms: u64, params: &ProtocolParams) -> WatchdogAction {
    let gap = now_ms.saturating_sub(last_setpoint_ms);
    if gap > params.watchdog_timeout_ms {
        WatchdogAction::EmergencyShutdown
    } else if gap > params.stabilize_timeout_ms {
        WatchdogAction::Stabilize
    } else {
        WatchdogAction::None
    }
}

/// Full configuration of one simulated mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub protocol: ProtocolParams,
    pub battery: BatteryModel,
    pub localization: LocalizationModel,
    /// Interference model applied to mission scans. The radio is down during
    /// a scan, so the default is off; set a frequency to model a firmware
    /// that keeps the radio running.
    pub scan_interference: InterferenceModel,
    pub takeoff_ms: u64,
    pub landing_ms: u64,
    pub dt_ms: u64,
    /// Internal setpoint feedback task during blackout; disabling it makes
    /// any scan longer than the watchdog fatal.
    pub feedback_enabled: bool,
    /// Std-dev of the bounded position-hold drift, meters.
    pub hold_drift_std_m: f64,
    pub max_speed_mps: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        MissionConfig {
            protocol: ProtocolParams::default(),
            battery: BatteryModel::default(),
            localization: LocalizationModel::default(),
            scan_interference: InterferenceModel::off(),
            takeoff_ms: 8_000,
            landing_ms: 8_000,
            dt_ms: 100,
            feedback_enabled: true,
            hold_drift_std_m: 0.03,
            max_speed_mps: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Event {
    TakeoffComplete,
    TransitStarted { waypoint: usize },
    Arrived { waypoint: usize },
    RadioDown,
    RadioUp,
    ScanPerformed { waypoint: usize, detections: usize },
    SamplesFlushed { count: usize },
    BufferOverflow { dropped: usize },
    StabilizeEngaged,
    EmergencyShutdown,
    BatteryReserve,
    LandingComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t_ms: u64,
    pub event: Event,
}

/// A sample together with the sim time at which the base station received it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceivedSample {
    pub sample: BeaconSample,
    pub received_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub uav_id: String,
    pub scans_completed: usize,
    pub active_time_ms: u64,
    pub samples: usize,
    pub aborted: bool,
    pub abort_reason: Option<String>,
    pub waypoints_total: usize,
    pub waypoints_visited: usize,
    pub samples_per_waypoint: Vec<usize>,
    pub battery_remaining_j: f64,
}

#[derive(Debug, Clone)]
pub struct MissionOutcome {
    pub received: Vec<ReceivedSample>,
    pub report: MissionReport,
    pub events: Vec<EventRecord>,
    /// Closed intervals `[down, up]` during which the radio link was down.
    pub radio_down_intervals: Vec<(u64, u64)>,
}

/// Stepwise single-UAV simulation. `run_mission` drives it to completion;
/// tests can tick it manually.
pub struct UavSim<'a> {
    env: &'a RadioEnvironment,
    cfg: &'a MissionConfig,
    waypoints: &'a [Waypoint],
    rng: ChaCha8Rng,

    pub uav_id: String,
    pub t_ms: u64,
    pub mode: FlightMode,
    pub true_position: Point3,
    pub battery_j: f64,
    pub radio_link: RadioLink,
    pub last_setpoint_ms: u64,
    scan_buffer: Vec<BeaconSample>,
    seq: u64,

    wp_index: usize,
    hold_anchor: Point3,
    transit_target: Point3,
    transit_speed: f64,
    takeoff_end_ms: u64,
    landing_end_ms: u64,
    scan_start_ms: u64,
    scan_mid_done: bool,
    stabilized: bool,
    radio_down_since: Option<u64>,

    pub received: Vec<ReceivedSample>,
    pub events: Vec<EventRecord>,
    pub radio_down_intervals: Vec<(u64, u64)>,
    scans_completed: usize,
    samples_per_waypoint: Vec<usize>,
    aborted: bool,
    abort_reason: Option<String>,
    done: bool,
    active_time_ms: u64,
}

impl<'a> UavSim<'a> {
    pub fn new(
        uav_id: &str,
        start_position: Point3,
        waypoints: &'a [Waypoint],
        env: &'a RadioEnvironment,
        cfg: &'a MissionConfig,
        master_seed: u64,
    ) -> Result<Self, FleetError> {
        cfg.protocol.validate()?;
        cfg.battery.validate()?;
        cfg.localization.validate()?;
        if waypoints.is_empty() {
            return Err(FleetError::NoWaypoints);
        }
        // The mission must at least reach the first waypoint on a full
        // battery before committing to flight.
        let first = &waypoints[0];
        let climb = Point3::new(start_position.x, start_position.y, first.position.z);
        let hop = climb.distance(&first.position);
        let speed = (hop / first.transit_budget_s).min(cfg.max_speed_mps);
        let hop_s = if hop > 0.0 { hop / speed } else { 0.0 };
        let needed = cfg.battery.hover_w * (cfg.takeoff_ms as f64 / 1000.0)
            + cfg.battery.transit_w * hop_s;
        let available = cfg.battery.capacity_j - cfg.battery.reserve_j();
        if needed > available {
            return Err(FleetError::Infeasible {
                needed_j: needed,
                available_j: available,
            });
        }
        Ok(UavSim {
            env,
            cfg,
            waypoints,
            rng: derive_rng(master_seed, &format!("mission-{uav_id}")),
            uav_id: uav_id.to_string(),
            t_ms: 0,
            mode: FlightMode::Idle,
            true_position: start_position,
            battery_j: cfg.battery.capacity_j,
            radio_link: RadioLink::Up,
            last_setpoint_ms: 0,
            scan_buffer: Vec::new(),
            seq: 0,
            wp_index: 0,
            hold_anchor: start_position,
            transit_target: start_position,
            transit_speed: 0.0,
            takeoff_end_ms: 0,
            landing_end_ms: 0,
            scan_start_ms: 0,
            scan_mid_done: false,
            stabilized: false,
            radio_down_since: None,
            received: Vec::new(),
            events: Vec::new(),
            radio_down_intervals: Vec::new(),
            scans_completed: 0,
            samples_per_waypoint: vec![0; waypoints.len()],
            aborted: false,
            abort_reason: None,
            done: false,
            active_time_ms: 0,
        })
    }

    pub fn start(&mut self) {
        self.mode = FlightMode::Takeoff;
        self.takeoff_end_ms = self.t_ms + self.cfg.takeoff_ms;
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn emit(&mut self, event: Event) {
        self.events.push(EventRecord {
            t_ms: self.t_ms,
            event,
        });
    }

    fn drain_power_w(&self) -> f64 {
        let b = &self.cfg.battery;
        match self.mode {
            FlightMode::Idle | FlightMode::Depleted | FlightMode::EmergencyShutdown => 0.0,
            FlightMode::Takeoff | FlightMode::Landing | FlightMode::PositionHold => b.hover_w,
            FlightMode::Transit => b.transit_w,
            FlightMode::Scanning => b.hover_w + b.scan_extra_w,
        }
    }

    fn radio_down(&mut self) {
        self.radio_link = RadioLink::Down;
        self.radio_down_since = Some(self.t_ms);
        self.emit(Event::RadioDown);
    }

    fn radio_up(&mut self) {
        self.radio_link = RadioLink::Up;
        if let Some(since) = self.radio_down_since.take() {
            self.radio_down_intervals.push((since, self.t_ms));
        }
        self.emit(Event::RadioUp);
    }

    fn begin_transit(&mut self) {
        let wp = &self.waypoints[self.wp_index];
        let dist = self.true_position.distance(&wp.position);
        self.transit_target = wp.position;
        if dist <= 1e-9 {
            self.transit_speed = 0.0;
        } else {
            self.transit_speed = (dist / wp.transit_budget_s).min(self.cfg.max_speed_mps);
        }
        self.mode = FlightMode::Transit;
        self.emit(Event::TransitStarted {
            waypoint: self.wp_index,
        });
    }

    fn begin_landing(&mut self) {
        if self.radio_link == RadioLink::Down {
            self.flush_buffer();
            self.radio_up();
        }
        self.mode = FlightMode::Landing;
        self.landing_end_ms = self.t_ms + self.cfg.landing_ms;
    }

    fn flush_buffer(&mut self) -> usize {
        let flushed = self.scan_buffer.len();
        let received_at_ms = self.t_ms;
        for sample in self.scan_buffer.drain(..) {
            self.received.push(ReceivedSample {
                sample,
                received_at_ms,
            });
        }
        if flushed > 0 {
            self.emit(Event::SamplesFlushed { count: flushed });
        }
        flushed
    }

    fn do_scan_measurement(&mut self) {
        let wp_index = self.wp_index;
        let est = localize(&self.true_position, &self.cfg.localization, true, &mut self.rng)
            .expect("localization model validated at construction");
        let tuples = perform_scan(
            self.env,
            &self.true_position,
            &self.cfg.scan_interference,
            &mut self.rng,
        );
        let detections = tuples.len();
        let capacity = self.cfg.protocol.tx_queue_capacity;
        let mut dropped = 0usize;
        for t in tuples {
            if self.scan_buffer.len() >= capacity {
                dropped += 1;
                continue;
            }
            self.scan_buffer.push(BeaconSample {
                uav_id: self.uav_id.clone(),
                seq: self.seq,
                t_ms: self.t_ms,
                est_x: est.x,
                est_y: est.y,
                est_z: est.z,
                ssid: t.ssid,
                mac: t.mac,
                channel: t.channel,
                rssi_dbm: t.rssi_dbm,
            });
            self.seq += 1;
        }
        if dropped > 0 {
            self.emit(Event::BufferOverflow { dropped });
        }
        self.emit(Event::ScanPerformed {
            waypoint: wp_index,
            detections,
        });
    }

    fn hold_drift(&mut self) {
        if self.stabilized || self.cfg.hold_drift_std_m <= 0.0 {
            return;
        }
        // Mean-reverting jitter around the hold anchor, bounded by the pull
        // toward the anchor.
        let dt_s = self.cfg.dt_ms as f64 / 1000.0;
        let theta = 2.0;
        let noise = Normal::new(0.0, self.cfg.hold_drift_std_m * (2.0 * theta * dt_s).sqrt())
            .unwrap();
        let pull = self.hold_anchor.sub(&self.true_position).scale(theta * dt_s);
        self.true_position = self
            .true_position
            .add(&pull)
            .add(&Point3::new(
                noise.sample(&mut self.rng),
                noise.sample(&mut self.rng),
                noise.sample(&mut self.rng),
            ));
    }

    /// Advances the simulation by one tick of `cfg.dt_ms`.
    pub fn step(&mut self) {
        if self.done || self.mode == FlightMode::Idle && self.t_ms == 0 && self.takeoff_end_ms == 0
        {
            // Idle before start: time passes, nothing happens.
            if self.mode == FlightMode::Idle && !self.done {
                self.t_ms += self.cfg.dt_ms;
            }
            return;
        }
        let dt = self.cfg.dt_ms;
        self.t_ms += dt;

        // Battery drains first; hitting reserve forces a landing.
        self.battery_j -= self.drain_power_w() * dt as f64 / 1000.0;
        if self.battery_j <= self.cfg.battery.reserve_j()
            && !matches!(
                self.mode,
                FlightMode::Landing | FlightMode::Depleted | FlightMode::EmergencyShutdown
            )
        {
            self.emit(Event::BatteryReserve);
            self.aborted = true;
            self.abort_reason = Some("battery reserve reached".to_string());
            self.begin_landing();
            return;
        }

        // Setpoint bookkeeping: the base station streams setpoints whenever
        // the link is up; during a blackout the internal feedback task may
        // stand in.
        if self.radio_link == RadioLink::Up {
            self.last_setpoint_ms = self.t_ms;
            self.stabilized = false;
        } else if self.cfg.feedback_enabled
            && self.mode == FlightMode::Scanning
            && (self.t_ms - self.scan_start_ms) % self.cfg.protocol.internal_setpoint_period_ms == 0
        {
            self.last_setpoint_ms = self.t_ms;
        }

        match watchdog_check(self.last_setpoint_ms, self.t_ms, &self.cfg.protocol) {
            WatchdogAction::EmergencyShutdown => {
                // Record the shutdown at the instant the deadline expired.
                let expiry = self.last_setpoint_ms + self.cfg.protocol.watchdog_timeout_ms;
                if let Some(since) = self.radio_down_since.take() {
                    self.radio_down_intervals.push((since, expiry));
                }
                self.events.push(EventRecord {
                    t_ms: expiry,
                    event: Event::EmergencyShutdown,
                });
                self.mode = FlightMode::EmergencyShutdown;
                self.aborted = true;
                self.abort_reason = Some("watchdog timeout".to_string());
                self.active_time_ms = expiry;
                self.done = true;
                return;
            }
            WatchdogAction::Stabilize => {
                if !self.stabilized {
                    self.stabilized = true;
                    self.emit(Event::StabilizeEngaged);
                }
            }
            WatchdogAction::None => {}
        }

        match self.mode {
            FlightMode::Idle | FlightMode::Depleted | FlightMode::EmergencyShutdown => {}
            FlightMode::Takeoff => {
                // Climb to the first waypoint's altitude over the takeoff
                // window.
                let target_z = self.waypoints[0].position.z;
                let frac = 1.0
                    - (self.takeoff_end_ms.saturating_sub(self.t_ms)) as f64
                        / self.cfg.takeoff_ms as f64;
                self.true_position.z = target_z * frac.clamp(0.0, 1.0);
                if self.t_ms >= self.takeoff_end_ms {
                    self.true_position.z = target_z;
                    self.emit(Event::TakeoffComplete);
                    self.begin_transit();
                }
            }
            FlightMode::Transit => {
                let to_target = self.transit_target.sub(&self.true_position);
                let dist = to_target.norm();
                let step_len = self.transit_speed * dt as f64 / 1000.0;
                if dist <= step_len || self.transit_speed == 0.0 {
                    self.true_position = self.transit_target;
                    self.hold_anchor = self.transit_target;
                    self.mode = FlightMode::PositionHold;
                    self.emit(Event::Arrived {
                        waypoint: self.wp_index,
                    });
                } else {
                    self.true_position = self
                        .true_position
                        .add(&to_target.scale(step_len / dist));
                }
            }
            FlightMode::PositionHold => {
                // One hold tick, then the blackout scan sequence starts.
                self.hold_drift();
                self.radio_down();
                self.mode = FlightMode::Scanning;
                self.scan_start_ms = self.t_ms;
                self.scan_mid_done = false;
                self.last_setpoint_ms = self.t_ms;
            }
            FlightMode::Scanning => {
                self.hold_drift();
                let elapsed = self.t_ms - self.scan_start_ms;
                if !self.scan_mid_done && elapsed >= self.cfg.protocol.scan_duration_ms / 2 {
                    self.scan_mid_done = true;
                    self.do_scan_measurement();
                }
                if elapsed >= self.cfg.protocol.scan_duration_ms {
                    self.radio_up();
                    let flushed = self.flush_buffer();
                    self.samples_per_waypoint[self.wp_index] = flushed;
                    self.scans_completed += 1;
                    self.wp_index += 1;
                    if self.wp_index < self.waypoints.len() {
                        self.begin_transit();
                    } else {
                        self.begin_landing();
                    }
                }
            }
            FlightMode::Landing => {
                if self.t_ms >= self.landing_end_ms {
                    self.true_position.z = 0.0;
                    self.emit(Event::LandingComplete);
                    self.active_time_ms = self.t_ms;
                    self.mode = if self.aborted {
                        FlightMode::Depleted
                    } else {
                        FlightMode::Idle
                    };
                    self.done = true;
                }
            }
        }
    }

    pub fn into_outcome(self) -> MissionOutcome {
        let samples = self.received.len();
        MissionOutcome {
            report: MissionReport {
                uav_id: self.uav_id,
                scans_completed: self.scans_completed,
                active_time_ms: self.active_time_ms,
                samples,
                aborted: self.aborted,
                abort_reason: self.abort_reason,
                waypoints_total: self.waypoints.len(),
                waypoints_visited: self.wp_index.min(self.waypoints.len()),
                samples_per_waypoint: self.samples_per_waypoint,
                battery_remaining_j: self.battery_j,
            },
            received: self.received,
            events: self.events,
            radio_down_intervals: self.radio_down_intervals,
        }
    }
}

/// Flies one UAV through its waypoint list and returns the sample log,
/// event trace, and mission report.
pub fn run_mission(
    uav_id: &str,
    start_position: Point3,
    waypoints: &[Waypoint],
    env: &RadioEnvironment,
    cfg: &MissionConfig,
    master_seed: u64,
) -> Result<MissionOutcome, FleetError> {
    let mut sim = UavSim::new(uav_id, start_position, waypoints, env, cfg, master_seed)?;
    sim.start();
    // Hard cap well beyond any feasible mission, as a runaway guard.
    let max_ticks = 10_000_000 / cfg.dt_ms.max(1);
    for _ in 0..max_ticks {
        if sim.is_done() {
            break;
        }
        sim.step();
    }
    Ok(sim.into_outcome())
}

/// Result of the baseline hover-endurance scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnduranceReport {
    pub scans_completed: usize,
    pub depletion_time_ms: u64,
    pub scan_interval_ms: u64,
    pub scan_duration_ms: u64,
}

/// Hovers in place running periodic scans until the battery reaches its
/// reserve; reproduces the endurance baseline (36 scans in about 6 min).
pub fn run_endurance(
    battery: &BatteryModel,
    scan_interval_ms: u64,
    scan_duration_ms: u64,
    dt_ms: u64,
) -> Result<EnduranceReport, FleetError> {
    battery.validate()?;
    let cycle = scan_interval_ms + scan_duration_ms;
    let mut t_ms = 0u64;
    let mut energy = battery.capacity_j;
    let mut scans = 0usize;
    let reserve = battery.reserve_j();
    while energy > reserve {
        t_ms += dt_ms;
        // Scan k occupies [interval + (k-1)*cycle, interval + k*cycle).
        let phase = t_ms % cycle;
        let scanning = phase > scan_interval_ms || phase == 0;
        let w = battery.hover_w + if scanning { battery.scan_extra_w } else { 0.0 };
        energy -= w * dt_ms as f64 / 1000.0;
        if scanning && phase == 0 {
            scans += 1;
        }
        if t_ms > 100_000_000 {
            return Err(FleetError::InvalidParams(
                "endurance scenario does not deplete".to_string(),
            ));
        }
    }
    Ok(EnduranceReport {
        scans_completed: scans,
        depletion_time_ms: t_ms,
        scan_interval_ms,
        scan_duration_ms,
    })
}
