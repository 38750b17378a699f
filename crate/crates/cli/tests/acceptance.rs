//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use sos_core::analysis::{loss_sweep, overhead_percent, recovery_worst_case, OverheadParams};
use sos_core::codec::{decode_frame, encode_frame, FRAME_LEN};
use sos_core::simulator::{
    run_scenario, AdversaryConfig, AircraftConfig, AntennaConfig, Coverage, ProtocolConfig,
    RunReport, ScenarioConfig, Strategy,
};
use sos_core::tesla::{
    chunk_value, derive_slot_key, hash_iter, reassemble_value, verify_slot_key, KeyChain,
};
use sos_core::verifier::VerificationVerdict;
use sos_core::{Es1090Frame, Key128};

type Criterion = (&'static str, fn() -> Vec<Check>);

struct Check {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Check {
    Check {
        passed,
        detail: detail.into(),
    }
}

fn scenario(seed: u64, slots: u64, d: f64, antennas: u16, loss: f64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        duration: slots as f64 * d,
        t0: 0.0,
        protocol: ProtocolConfig {
            slot_duration: d,
            data_rate: 6.0,
            chain_length: slots + 16,
            ..Default::default()
        },
        aircraft: vec![AircraftConfig {
            icao: "4840d6".into(),
            type_code: 11,
            altitude: 0xC38,
            latitude: 52_000,
            longitude: 13_000,
            lat_step: 5,
            lon_step: 9,
        }],
        antennas: AntennaConfig {
            count: antennas,
            loss,
            burst: None,
        },
        adversary: AdversaryConfig::default(),
    }
}

/// Binomial 3-sigma band around `q` for `n` trials.
fn within_3_sigma(observed: f64, q: f64, n: u64) -> (bool, f64) {
    let sigma = (q * (1.0 - q) / n as f64).sqrt();
    ((observed - q).abs() <= 3.0 * sigma, sigma)
}

fn c1_recovery_counts() -> Vec<Check> {
    let small = recovery_worst_case(12, 6).unwrap();
    let large = recovery_worst_case(24, 12).unwrap();
    let log2 = (large as f64).log2();
    vec![
        check(small == 924, format!("C(12,6) = {small}, expected 924")),
        check(
            large == 2_704_156 && (log2 - 21.0).abs() <= 0.5,
            format!("C(24,12) = {large} (log2 {log2:.2}), expected 2704156 within 2^21 +- 0.5"),
        ),
    ]
}

fn ghost_run(majority: bool) -> RunReport {
    let mut c = scenario(17, 100, 1.0, 10, 0.0);
    c.protocol.majority_filter = majority;
    c.adversary = AdversaryConfig {
        enabled: true,
        rate: 6.0,
        coverage: Some(Coverage::Count(2)),
        strategy: Strategy::Ghost,
        target: None,
    };
    run_scenario(&c).unwrap()
}

fn c2_recovery_experiment() -> Vec<Check> {
    let start = Instant::now();
    let filtered = ghost_run(true);
    let all_recovered = filtered.verdicts.len() == 100
        && filtered
            .verdicts
            .iter()
            .all(|v| matches!(v.verdict, VerificationVerdict::Recovered { .. }));
    let unfiltered = ghost_run(false);
    let max_tried = unfiltered.max_subsets_tried();
    let elapsed = start.elapsed();
    vec![
        check(
            all_recovered && filtered.slots_correct == 100 && filtered.verdicts_with_injected == 0,
            format!(
                "majority on: {}/100 Recovered with exactly the legitimate frames, {} injected, max subsets {}",
                filtered.slots_correct,
                filtered.injected_frames_sent,
                filtered.max_subsets_tried()
            ),
        ),
        check(
            unfiltered.slots_correct == 100 && max_tried <= 924 && unfiltered.verdicts_with_injected == 0,
            format!(
                "majority off: {}/100 legitimate sets found, max subsets tried {max_tried} <= 924",
                unfiltered.slots_correct
            ),
        ),
        check(elapsed < Duration::from_secs(60), format!("runtime {elapsed:.2?} < 60 s")),
    ]
}

fn c3_overhead() -> Vec<Check> {
    let o = overhead_percent(&OverheadParams::default());
    let digests = [64u32, 96, 128, 160, 192, 224, 256];
    let durations: Vec<f64> = (1..=10).map(f64::from).collect();
    let at = |digest: u32, d: f64| {
        overhead_percent(&OverheadParams {
            digest_bits: digest,
            slot_duration: d,
            ..Default::default()
        })
    };
    let mut violations = 0;
    for &g in &digests {
        for w in durations.windows(2) {
            violations += usize::from(at(g, w[1]) > at(g, w[0]));
        }
    }
    for &d in &durations {
        for w in digests.windows(2) {
            violations += usize::from(at(w[1], d) < at(w[0], d));
        }
    }
    vec![
        check(
            (o - 47.58).abs() <= 3.0,
            format!("overhead(128,128,d=2,r=6) = {o:.2}%, target 47.58% +- 3 pp"),
        ),
        check(
            violations == 0,
            format!(
                "monotonicity over {}x{} grid: {violations} violations",
                digests.len(),
                durations.len()
            ),
        ),
    ]
}

fn c4_loss_curves() -> Vec<Check> {
    let start = Instant::now();
    let mut out = Vec::new();

    let ps: Vec<f64> = (0..=30).map(|i| f64::from(i) / 100.0).collect();
    let table = loss_sweep(&ps, 2.0, 6.0).unwrap();
    let sos = table.column("sos_success").unwrap();
    let hibs = table.column("hibs_success").unwrap();
    let mut worst = 0.0f64;
    for (row, p) in table.rows.iter().zip(&ps) {
        let s: f64 = row[sos].parse().unwrap();
        let h: f64 = row[hibs].parse().unwrap();
        worst = worst
            .max((s - (1.0 - p).powi(15)).abs())
            .max((h - (1.0 - p).powi(23)).abs());
    }
    let csv = table.to_csv_string();
    out.push(check(
        csv.starts_with("loss_prob,sos_window,sos_success,hibs_window,hibs_success")
            && worst < 1e-6,
        format!(
            "CSV of {} rows matches (1-p)^15 and (1-p)^23 within {worst:.1e}",
            table.rows.len()
        ),
    ));

    let dominated = (1..1000).map(|i| f64::from(i) / 1000.0).all(|p| {
        sos_core::analysis::slot_success_prob(p, 15) >= sos_core::analysis::slot_success_prob(p, 23)
    });
    out.push(check(
        dominated,
        "SOS curve >= HIBS curve at 999 points in (0,1)",
    ));

    for (i, p) in [0.02, 0.05, 0.1].into_iter().enumerate() {
        let report = run_scenario(&scenario(400 + i as u64, 10_000, 2.0, 1, p)).unwrap();
        let q = (1.0 - p).powi(15);
        let rate = report.slot_success_rate();
        let (ok, sigma) = within_3_sigma(rate, q, report.slots_total);
        out.push(check(
            ok && report.slots_total >= 10_000,
            format!(
                "p={p}: simulated {rate:.4} over {} slots vs (1-p)^15 = {q:.4}, |diff| = {:.1} sigma",
                report.slots_total,
                (rate - q).abs() / sigma
            ),
        ));
    }
    let elapsed = start.elapsed();
    out.push(check(
        elapsed < Duration::from_secs(120),
        format!("runtime {elapsed:.2?} < 120 s"),
    ));
    out
}

fn c5_properties() -> Vec<Check> {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0x5055);
    let mut out = Vec::new();

    let mut bad = 0;
    for _ in 0..300 {
        let km = Key128::from_u128(rng.random());
        let n = rng.random_range(2..=2_000u64);
        let i = rng.random_range(1..=n);
        let j = rng.random_range(0..i);
        let ki = derive_slot_key(&km, n, i).unwrap().key;
        let kj = hash_iter(&km, n - j);
        bad += usize::from(hash_iter(&ki, i - j) != kj);
    }
    out.push(check(
        bad == 0,
        format!("(a) H^(i-j)(K_i) = K_j over 300 random (i,j,n): {bad} mismatches"),
    ));

    let chain = KeyChain::generate(Key128::from_u128(rng.random()), 256).unwrap();
    let root = chain.root();
    let mut accepted = 0;
    for _ in 0..10_000 {
        let idx = rng.random_range(1..=256u64);
        let k = chain.slot_key(idx).unwrap().key.to_u128();
        let corrupted = Key128::from_u128(k ^ (1u128 << rng.random_range(0..128)));
        accepted += usize::from(verify_slot_key(&corrupted, idx, &root));
    }
    out.push(check(
        accepted == 0,
        format!("(b) 10^4 single-bit key corruptions: {accepted} accepted"),
    ));

    let (mut round_trip_fail, mut undetected) = (0, 0);
    for _ in 0..100_000 {
        let f = Es1090Frame {
            df: 17,
            capability: rng.random_range(0..8),
            icao: rng.random_range(0..1 << 24),
            payload: rng.random_range(0..1u64 << 56),
            pi: 0,
        };
        let raw = encode_frame(&f).unwrap();
        let d = decode_frame(raw.as_bytes()).unwrap();
        if !d.parity_ok
            || d.frame.icao != f.icao
            || d.frame.payload != f.payload
            || d.frame.capability != f.capability
        {
            round_trip_fail += 1;
        }
        let bit = rng.random_range(0..FRAME_LEN * 8);
        let mut flipped = raw;
        flipped.0[bit / 8] ^= 0x80 >> (bit % 8);
        undetected += usize::from(decode_frame(flipped.as_bytes()).unwrap().parity_ok);
    }
    out.push(check(
        round_trip_fail == 0 && undetected == 0,
        format!("(c) 10^5 random frames: {round_trip_fail} round-trip failures, {undetected} undetected bit flips"),
    ));

    let mut chunk_fail = 0;
    for _ in 0..10_000 {
        let v: u128 = rng.random();
        chunk_fail += usize::from(reassemble_value(&chunk_value(v)) != Ok(v));
    }
    out.push(check(
        chunk_fail == 0,
        format!("(d) 10^4 chunk round-trips: {chunk_fail} failures"),
    ));

    let benign = run_scenario(&scenario(55, 60, 2.0, 4, 0.0)).unwrap();
    let authentic = benign
        .verdicts
        .iter()
        .filter(|v| matches!(v.verdict, VerificationVerdict::Authentic { .. }))
        .count();
    out.push(check(
        authentic == 60 && benign.verdicts.len() == 60 && benign.slots_correct == 60,
        format!("(e) benign lossless run: {authentic}/60 slots Authentic"),
    ));

    let mut dos = scenario(66, 60, 1.0, 6, 0.0);
    dos.adversary = AdversaryConfig {
        enabled: true,
        strategy: Strategy::EqualCoverage,
        ..Default::default()
    };
    let dos = run_scenario(&dos).unwrap();
    let rejected = dos
        .verdicts
        .iter()
        .filter(|v| matches!(v.verdict, VerificationVerdict::Rejected { .. }))
        .count();
    out.push(check(
        rejected == dos.verdicts.len() && rejected == 60 && dos.verdicts_with_injected == 0,
        format!(
            "(f) equal-coverage DoS: {rejected}/{} Rejected, {} verdicts with injected frames",
            dos.verdicts.len(),
            dos.verdicts_with_injected
        ),
    ));

    let elapsed = start.elapsed();
    out.push(check(
        elapsed < Duration::from_secs(120),
        format!("runtime {elapsed:.2?} < 120 s"),
    ));
    out
}

fn c6_fusion() -> Vec<Check> {
    let report = run_scenario(&scenario(606, 10_000, 2.0, 5, 0.2)).unwrap();
    let q = 1.0 - 0.2f64.powi(5);
    let rate = report.server_delivery_rate();
    let (ok, sigma) = within_3_sigma(rate, q, report.legit_frames);
    let best_single = (0..report.antennas.len())
        .map(|a| report.antenna_completeness(a))
        .fold(0.0, f64::max);
    let best_delivery = (0..report.antennas.len())
        .map(|a| report.antenna_delivery_rate(a))
        .fold(0.0, f64::max);
    vec![
        check(
            ok,
            format!(
                "server delivery {rate:.5} over {} frames vs 1-0.2^5 = {q:.5}, |diff| = {:.1} sigma",
                report.legit_frames,
                (rate - q).abs() / sigma
            ),
        ),
        check(
            report.slot_success_rate() > best_single && rate > best_delivery,
            format!(
                "server slot success {:.4} > best single antenna {best_single:.4}",
                report.slot_success_rate()
            ),
        ),
    ]
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_sos"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn c7_determinism() -> Vec<Check> {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let path = |name: &str| root.join(name).to_str().unwrap().to_string();
    let mut cfg = scenario(77, 120, 1.0, 7, 0.08);
    cfg.adversary = AdversaryConfig {
        enabled: true,
        rate: 5.0,
        coverage: Some(Coverage::Antennas(vec![1, 4])),
        strategy: Strategy::Flood,
        target: None,
    };
    fs::write(root.join("s.toml"), cfg.to_toml()).unwrap();
    let sim = |tag: &str| {
        run_cli(&[
            "simulate",
            "--config",
            &path("s.toml"),
            "--out-report",
            &path(&format!("report{tag}.csv")),
            "--out-feed",
            &path(&format!("feed{tag}.bin")),
            "--out-registry",
            &path("registry.txt"),
            "--out-summary",
            &path(&format!("summary{tag}.txt")),
        ])
    };
    let ran = sim("1") && sim("2");
    let same = |a: &str, b: &str| fs::read(root.join(a)).ok() == fs::read(root.join(b)).ok();
    let identical = ran
        && same("report1.csv", "report2.csv")
        && same("feed1.bin", "feed2.bin")
        && same("summary1.txt", "summary2.txt");

    let verified = run_cli(&[
        "verify",
        "--registry",
        &path("registry.txt"),
        "--feed",
        &path("feed1.bin"),
        "--out",
        &path("verify.csv"),
    ]);
    let replay = verified && same("verify.csv", "report1.csv");
    let rows = fs::read_to_string(root.join("report1.csv"))
        .map(|s| s.lines().count())
        .unwrap_or(0);
    let recovered = fs::read_to_string(root.join("report1.csv"))
        .map(|s| s.matches(",recovered,").count())
        .unwrap_or(0);
    vec![
        check(
            identical,
            "two simulate runs: report, feed and summary byte-identical",
        ),
        check(
            replay,
            format!(
                "verify on dumped feed reproduces all {} verdict rows ({recovered} recovered)",
                rows.saturating_sub(1)
            ),
        ),
    ]
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("recovery worst-case counts", c1_recovery_counts),
        ("end-to-end recovery experiment", c2_recovery_experiment),
        ("bandwidth overhead", c3_overhead),
        ("loss curves", c4_loss_curves),
        ("protocol property suite", c5_properties),
        ("antenna fusion", c6_fusion),
        ("determinism", c7_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let checks = run();
        let ok = checks.iter().all(|c| c.passed);
        failed += usize::from(!ok);
        println!(
            "[{}] criterion {}: {name} ({:.2?})",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed()
        );
        for c in &checks {
            println!(
                "       {} {}",
                if c.passed { "ok  " } else { "FAIL" },
                c.detail
            );
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
