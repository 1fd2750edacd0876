//! Acceptance suite: one test per release criterion, each printing a single
//! pass/fail line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines.

use std::collections::BTreeMap;
use std::process::Command;

use rand::Rng;
use remforge::core::{derive_rng, read_samples, write_samples, BeaconSample, Mac, Point3, Volume};
use remforge::dataset::{preprocess, FeatureRow};
use remforge::estimators::{
    fit, mlp_init, mlp_loss_and_grad, query_row, EstimatorConfig, Weights,
};
use remforge::evalrem::{compare_estimators, generate_rem, rem_fidelity, RemGrid};
use remforge::fleetsim::{
    run_endurance, run_mission, BatteryModel, Event, MissionConfig, ProtocolParams,
};
use remforge::mission::{partition_plan, plan_waypoints, SplitAxis, DEFAULT_MARGIN_M};
use remforge::radioenv::{
    generate_environment, interference_experiment, sweep_frequencies, AccessPoint,
    InterferenceModel, PropagationParams, RadioEnvironment, ScenarioConfig,
};

fn report(n: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "criterion {n} ({name}): {}{}",
        if ok { "PASS" } else { "FAIL" },
        if detail.is_empty() {
            String::new()
        } else {
            format!(" [{detail}]")
        }
    );
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

#[test]
fn criterion_1_mission_timing() {
    let volume = Volume::default();
    let waypoints = plan_waypoints(&volume, 72, DEFAULT_MARGIN_M).unwrap();
    let plan = partition_plan(&waypoints, 2, SplitAxis::Y).unwrap();
    let env = generate_environment(&ScenarioConfig::default(), 7).unwrap();
    let cfg = MissionConfig::default();
    let mut ok = true;
    let mut detail = String::new();
    let mut logs: Vec<Vec<u8>> = Vec::new();
    for run in 0..2 {
        let mut run_log = Vec::new();
        for uav in &plan.per_uav {
            let outcome = run_mission(
                &uav.uav_id,
                uav.start_position,
                &uav.waypoints,
                &env,
                &cfg,
                7,
            )
            .unwrap();
            let active_s = outcome.report.active_time_ms as f64 / 1000.0;
            if run == 0 {
                detail = format!(
                    "36 waypoints per UAV, active {active_s:.1} s, {} scans",
                    outcome.report.scans_completed
                );
            }
            ok &= outcome.report.scans_completed == 36
                && (252.0..=300.0).contains(&active_s)
                && !outcome.report.aborted;
            let samples: Vec<BeaconSample> =
                outcome.received.iter().map(|r| r.sample.clone()).collect();
            write_samples(&mut run_log, &samples).unwrap();
        }
        logs.push(run_log);
    }
    ok &= logs[0] == logs[1];
    report(1, "mission timing", ok, &detail);
}

#[test]
fn criterion_2_endurance_calibration() {
    let r = run_endurance(&BatteryModel::default(), 8_000, 2_000, 100).unwrap();
    let t_s = r.depletion_time_ms as f64 / 1000.0;
    let ok = (35..=37).contains(&r.scans_completed) && (362.0..=382.0).contains(&t_s);
    report(
        2,
        "endurance calibration",
        ok,
        &format!("{} scans, reserve at {t_s:.1} s", r.scans_completed),
    );
}

#[test]
fn criterion_3_interference_reproduction() {
    // Radio-off dominance on the default population.
    let env = generate_environment(&ScenarioConfig::default(), 3).unwrap();
    let center = ScenarioConfig::default().volume.center();
    let table = interference_experiment(&env, &center, &sweep_frequencies(), 1000, 3);
    let off = &table.rows[0];
    let mut dominance = off.radio_freq_mhz.is_none();
    for row in &table.rows[1..] {
        for c in 0..13 {
            dominance &= off.mean_ap_count[c] >= row.mean_ap_count[c];
        }
    }

    // Detection-rate check on a controlled population: channel 9 overlaps a
    // 2450 MHz carrier, channel 1 does not.
    let mk_ap = |i: u64, channel: u8| AccessPoint {
        mac: Mac(0x1000 + i),
        ssid: format!("ap-{i}"),
        channel,
        position: Point3::new(2.0 + i as f64 * 0.5, -1.0, 1.0),
        tx_power_dbm: 20.0,
        path_loss_exponent: 2.0,
        wall_count_toward_volume: 0,
        seed: i,
    };
    let ctrl = RadioEnvironment {
        aps: (0..4).map(|i| mk_ap(i, 9)).chain((4..8).map(|i| mk_ap(i, 1))).collect(),
        params: PropagationParams::default(),
    };
    let p = Point3::new(1.0, 1.0, 1.0);
    let radio = InterferenceModel::at(2450);
    let scans = 1000;
    let mut hits9 = 0usize;
    let mut hits1 = 0usize;
    for i in 0..scans {
        let mut rng = derive_rng(11, &format!("acc3-{i}"));
        for t in remforge::radioenv::perform_scan(&ctrl, &p, &radio, &mut rng) {
            if t.channel == 9 {
                hits9 += 1;
            } else {
                hits1 += 1;
            }
        }
    }
    let rate9 = hits9 as f64 / (scans * 4) as f64;
    let rate1 = hits1 as f64 / (scans * 4) as f64;
    let expected = 0.95 * 0.25;
    let ok = dominance && (rate9 - expected).abs() < 0.05 && (rate1 - 0.95).abs() < 0.05;
    report(
        3,
        "interference reproduction",
        ok,
        &format!("overlapped rate {rate9:.3} (expect {expected:.3}), clear rate {rate1:.3}"),
    );
}

#[test]
fn criterion_4_blackout_integrity() {
    let volume = Volume::default();
    let waypoints = plan_waypoints(&volume, 12, DEFAULT_MARGIN_M).unwrap();
    let cfg = MissionConfig::default();
    let mut violations = 0usize;
    let mut campaigns = 0usize;
    for seed in 0..100u64 {
        let env = generate_environment(&ScenarioConfig::default(), seed).unwrap();
        let outcome = run_mission("A", Point3::new(1.0, 1.0, 0.0), &waypoints, &env, &cfg, seed)
            .unwrap();
        campaigns += 1;
        for r in &outcome.received {
            for (down, up) in &outcome.radio_down_intervals {
                if r.received_at_ms >= *down && r.received_at_ms < *up {
                    violations += 1;
                }
            }
        }
        assert!(!outcome.radio_down_intervals.is_empty());
    }

    // Watchdog fires iff feedback is disabled and the scan exceeds 10 s.
    let env = generate_environment(&ScenarioConfig::default(), 1).unwrap();
    let one_wp = plan_waypoints(&volume, 1, DEFAULT_MARGIN_M).unwrap();
    let fired = |feedback: bool, scan_ms: u64| {
        let cfg = MissionConfig {
            feedback_enabled: feedback,
            protocol: ProtocolParams {
                scan_duration_ms: scan_ms,
                ..ProtocolParams::default()
            },
            ..MissionConfig::default()
        };
        run_mission("A", Point3::new(1.0, 1.0, 0.0), &one_wp, &env, &cfg, 5)
            .unwrap()
            .events
            .iter()
            .any(|e| matches!(e.event, Event::EmergencyShutdown))
    };
    let watchdog_ok = !fired(true, 12_000) && fired(false, 12_000) && !fired(false, 3_000);
    let ok = violations == 0 && campaigns == 100 && watchdog_ok;
    report(
        4,
        "blackout integrity",
        ok,
        &format!("{campaigns} campaigns, {violations} blackout receptions"),
    );
}

#[test]
fn criterion_5_preprocessing() {
    let mut samples = Vec::new();
    for (mac, count) in [(0xaau64, 20usize), (0xbb, 16), (0xcc, 15)] {
        for i in 0..count {
            samples.push(BeaconSample {
                uav_id: "A".to_string(),
                seq: i as u64,
                t_ms: 0,
                est_x: i as f64 * 0.1,
                est_y: 1.0,
                est_z: 1.0,
                ssid: "net".to_string(),
                mac: Mac(mac),
                channel: 6,
                rssi_dbm: -70,
            });
        }
    }
    let (rows, rep) = preprocess(&samples, 16).unwrap();
    let ok = rows.len() == 36
        && rep.retained_macs == vec![Mac(0xaa), Mac(0xbb)]
        && rep.dropped_count == 15;
    report(
        5,
        "preprocessing",
        ok,
        &format!("{} rows, {} MACs retained", rows.len(), rep.retained_macs.len()),
    );
}

fn random_rows(n: usize, n_macs: usize, seed: u64) -> Vec<FeatureRow> {
    let mut rng = derive_rng(seed, "acceptance-rows");
    (0..n)
        .map(|_| {
            let mut r = query_row(
                rng.gen_range(0.0..4.0),
                rng.gen_range(0.0..3.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0..n_macs),
                n_macs,
            );
            r.target_rssi = rng.gen_range(-95.0..-40.0);
            r
        })
        .collect()
}

#[test]
fn criterion_6_knn_oracle_equivalence() {
    let train = random_rows(200, 5, 61);
    let queries = random_rows(50, 5, 62);
    let mut max_err = 0.0f64;
    for cfg in [EstimatorConfig::knn_k3(), EstimatorConfig::knn_k16_factor3()] {
        let fitted = fit(&train, &cfg).unwrap();
        for q in &queries {
            // Independent oracle over materialized feature vectors.
            let vecf = |r: &FeatureRow| {
                let mut v = vec![r.x, r.y, r.z];
                for i in 0..r.mac_onehot.len() {
                    v.push(if i == r.mac_index { cfg.onehot_factor } else { 0.0 });
                }
                v
            };
            let qv = vecf(q);
            let mut cand: Vec<(f64, usize, f64)> = train
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let d = vecf(r)
                        .iter()
                        .zip(&qv)
                        .map(|(a, b)| (a - b).abs().powf(cfg.minkowski_p))
                        .sum::<f64>()
                        .powf(1.0 / cfg.minkowski_p);
                    (d, i, r.target_rssi)
                })
                .collect();
            cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let top = &cand[..cfg.k];
            let exact: Vec<f64> = top.iter().filter(|c| c.0 == 0.0).map(|c| c.2).collect();
            let want = if !exact.is_empty() {
                exact.iter().sum::<f64>() / exact.len() as f64
            } else {
                match cfg.weights {
                    Weights::Uniform => top.iter().map(|c| c.2).sum::<f64>() / cfg.k as f64,
                    Weights::Distance => {
                        let den: f64 = top.iter().map(|c| 1.0 / c.0).sum();
                        top.iter().map(|c| c.2 / c.0).sum::<f64>() / den
                    }
                }
            };
            max_err = max_err.max((fitted.predict(q).unwrap() - want).abs());
        }
    }
    report(
        6,
        "knn oracle equivalence",
        max_err < 1e-9,
        &format!("max |model - oracle| = {max_err:.2e}"),
    );
}

#[test]
fn criterion_7_mlp_gradient_check() {
    let rows = random_rows(5, 2, 71);
    let (input_dim, hidden) = (5usize, 4usize);
    let xs: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut x = vec![r.x, r.y, r.z];
            for m in 0..2 {
                x.push(if r.mac_index == m { 1.0 } else { 0.0 });
            }
            x
        })
        .collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.target_rssi / 50.0).collect();
    let params = mlp_init(input_dim, hidden, 7);
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
        max_rel = max_rel.max((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-8));
    }
    report(
        7,
        "mlp gradient check",
        max_rel < 1e-4,
        &format!("max relative error {max_rel:.2e}"),
    );
}

#[test]
fn criterion_8_end_to_end_ordering() {
    let volume = Volume::default();
    let waypoints = plan_waypoints(&volume, 72, DEFAULT_MARGIN_M).unwrap();
    let plan = partition_plan(&waypoints, 2, SplitAxis::Y).unwrap();
    let mission_cfg = MissionConfig::default();
    let mut rmse_wins = 0usize;
    let mut fidelity_wins = 0usize;
    let seeds = 5u64;
    for seed in 0..seeds {
        let env = generate_environment(&ScenarioConfig::default(), seed).unwrap();
        let campaign =
            remforge::mission::run_campaign(&plan, &env, &mission_cfg, seed).unwrap();
        let (rows, rep) = preprocess(&campaign.samples, 16).unwrap();
        let configs = [
            EstimatorConfig::baseline(),
            EstimatorConfig::knn_k3(),
            EstimatorConfig::knn_k16_factor3(),
        ];
        let eval = compare_estimators(&rows, &configs, seed).unwrap();
        let rmse_of = |label: &str| {
            eval.rows
                .iter()
                .find(|r| r.estimator == label)
                .unwrap()
                .rmse_dbm
        };
        let best_knn = rmse_of("knn-k3-distance-f1").min(rmse_of("knn-k16-distance-f3"));
        if best_knn < rmse_of("baseline-mean") {
            rmse_wins += 1;
        }
        let knn = fit(&rows, &EstimatorConfig::knn_k3()).unwrap();
        let base = fit(&rows, &EstimatorConfig::baseline()).unwrap();
        let g_knn = generate_rem(&knn, &volume, 0.5, &rep.retained_macs, 0).unwrap();
        let g_base = generate_rem(&base, &volume, 0.5, &rep.retained_macs, 0).unwrap();
        let f_knn = rem_fidelity(&g_knn, &env).unwrap().aggregate_rmse;
        let f_base = rem_fidelity(&g_base, &env).unwrap().aggregate_rmse;
        if f_knn < f_base {
            fidelity_wins += 1;
        }
    }
    let ok = rmse_wins >= 4 && fidelity_wins >= 4;
    report(
        8,
        "end-to-end ordering",
        ok,
        &format!("kNN beats baseline on RMSE {rmse_wins}/{seeds} seeds, on fidelity {fidelity_wins}/{seeds}"),
    );
}

#[test]
fn criterion_9_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_remforge");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let status = Command::new(bin)
            .args([
                "e2e",
                "--seed",
                "7",
                "--resolution",
                "0.5",
                "--out",
                d.path().to_str().unwrap(),
            ])
            .env_remove("REMFORGE_SEED")
            .status()
            .unwrap();
        assert!(status.success(), "e2e run failed");
    }
    let tree = |d: &std::path::Path| -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(d)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect()
    };
    let (a, b) = (tree(dirs[0].path()), tree(dirs[1].path()));
    let ok = !a.is_empty() && a == b;
    report(
        9,
        "cli determinism",
        ok,
        &format!("{} files byte-identical across runs", a.len()),
    );
}

#[test]
fn criterion_10_serialization_round_trips() {
    let mut rng = derive_rng(101, "acc10");
    let samples: Vec<BeaconSample> = (0..1000)
        .map(|i| BeaconSample {
            uav_id: if i % 2 == 0 { "A" } else { "B" }.to_string(),
            seq: i as u64,
            t_ms: rng.gen_range(0..300_000),
            est_x: rng.gen_range(0.0..3.74),
            est_y: rng.gen_range(0.0..3.20),
            est_z: rng.gen_range(0.0..2.10),
            ssid: format!("net-{:02}", rng.gen_range(0..49)),
            mac: Mac(rng.gen::<u64>() & 0xffff_ffff_ffff),
            channel: rng.gen_range(1..=13),
            rssi_dbm: rng.gen_range(-100..0),
        })
        .collect();
    let mut log = Vec::new();
    write_samples(&mut log, &samples).unwrap();
    let (parsed, errs) = read_samples(&log[..]).unwrap();
    let mut log2 = Vec::new();
    write_samples(&mut log2, &parsed).unwrap();
    let samples_ok = errs.is_empty() && parsed == samples && log == log2;

    let rows = random_rows(300, 4, 103);
    let fitted = fit(&rows, &EstimatorConfig::knn_k3()).unwrap();
    let macs: Vec<Mac> = (0..4).map(|i| Mac(0x42 + i)).collect();
    let grid = generate_rem(&fitted, &Volume::default(), 0.5, &macs, 9).unwrap();
    let json = serde_json::to_string(&grid).unwrap();
    let back: RemGrid = serde_json::from_str(&json).unwrap();
    let grid_ok = back == grid && serde_json::to_string(&back).unwrap() == json;
    report(
        10,
        "serialization round trips",
        samples_ok && grid_ok,
        "1000-sample log and REM grid bit-exact",
    );
}
