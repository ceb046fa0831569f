use std::collections::BTreeSet;
use std::fs;

use coskg::channel_model::{CsiMatrix, C64};
use coskg::harness::artifacts::{secrets_csv, PUBLIC_SET};
use coskg::harness::config::{KEYS, PRESETS};
use coskg::harness::trace::read_trace;
use coskg::harness::*;
use coskg::reconciliation::{leakage, SyndromeMessage};
use coskg::{Error, ExperimentConfig, Stage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn desk(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        ..ExperimentConfig::desk()
    }
}

fn max_rel_diff(a: &CsiMatrix, b: &CsiMatrix) -> f64 {
    let (a, b) = (a.as_matrix(), b.as_matrix());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm() / y.norm().max(1e-300)).fold(0.0, f64::max)
}

/// A hand-rolled reciprocal pair: four slowly drifting multipath taps seen
/// through independent receiver noise on each side.
fn synthetic_pair(n: usize, k: usize, seed: u64) -> (CsiMatrix, CsiMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |s: f64| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * s;
    let mut taps: Vec<C64> = (0..4).map(|_| gauss(2.0)).collect();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for _ in 0..k {
        for t in taps.iter_mut() {
            *t = *t * 0.999 + gauss(0.05);
        }
        let h: Vec<C64> = (0..n)
            .map(|f| {
                taps.iter()
                    .enumerate()
                    .map(|(l, t)| t * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * (f * l) as f64 / n as f64))
                    .sum()
            })
            .collect();
        a.push(h.iter().map(|v| v + gauss(0.02)).collect::<Vec<_>>());
        b.push(h.iter().map(|v| v + gauss(0.02)).collect::<Vec<_>>());
    }
    (CsiMatrix::from_columns(&a).unwrap(), CsiMatrix::from_columns(&b).unwrap())
}

fn dir_listing(dir: &std::path::Path) -> BTreeSet<String> {
    fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect()
}

#[test]
fn defaults_match_optimal_parameters() {
    let c = ExperimentConfig::default();
    assert_eq!((c.antennas, c.subcarriers, c.rounds), (8, 512, 1000));
    assert_eq!(c.filter_len, 8);
    assert_eq!(c.eta, 0.999);
    assert_eq!(c.quantizer.first_component_bits, 2);
    assert_eq!(c.quantizer.window_len, 64);
    assert_eq!(c.mode, "random");
    assert_eq!(c.digest, "md5");
    c.validate().unwrap();
}

#[test]
fn presets() {
    for name in PRESETS {
        ExperimentConfig::preset(name).unwrap().validate().unwrap();
    }
    let d = ExperimentConfig::preset("desk").unwrap();
    assert_eq!((d.subcarriers, d.rounds), (128, 200));
    let o = ExperimentConfig::preset("outdoor").unwrap();
    let base = ExperimentConfig::default();
    assert_eq!(
        ExperimentConfig {
            snr_db: base.snr_db,
            tap_count: base.tap_count,
            ..o
        },
        base
    );
    let err = ExperimentConfig::preset("lab").unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn config_text_round_trip() {
    let mut c = ExperimentConfig::desk();
    c.set("beta", "0.05").unwrap();
    c.set("part_mode", "amplitude").unwrap();
    c.set("escalate_code", "false").unwrap();
    c.set("snr_db", "inf").unwrap();
    let text = c.to_text();
    assert_eq!(text.lines().count(), KEYS.len());
    assert_eq!(ExperimentConfig::from_text(&text).unwrap(), c);
    for key in KEYS {
        let mut d = ExperimentConfig::default();
        d.set(key, &c.get(key).unwrap()).unwrap();
        assert_eq!(d.get(key).unwrap(), c.get(key).unwrap(), "{key}");
    }
}

#[test]
fn config_text_errors() {
    let c = ExperimentConfig::from_text("# comment\n\nM = 4   # trailing\n").unwrap();
    assert_eq!(c.antennas, 4);
    let e = ExperimentConfig::from_text("M = 4\nwidth = 3\n").unwrap_err();
    assert!(e.to_string().contains("line 2"), "{e}");
    assert_eq!(e.exit_code(), 2);
    assert!(ExperimentConfig::from_text("M 4\n").is_err());
    assert!(ExperimentConfig::from_text("M = four\n").is_err());
    assert!(ExperimentConfig::default().get("width").is_err());
}

#[test]
fn validation_rejects_bad_settings() {
    let bad = [
        ("M", "0"),
        ("tap_count", "600"),
        ("rho_t", "1.5"),
        ("mode", "shuffle"),
        ("rr_offset", "8"),
        ("L_x", "100"),
        ("eta", "0"),
        ("selection", "largest"),
        ("beta", "0.9"),
        ("digest", "sha1"),
        ("group_size", "0"),
        ("kmeans_restarts", "0"),
    ];
    for (k, v) in bad {
        let mut c = ExperimentConfig::default();
        c.set(k, v).unwrap();
        let e = c.validate().unwrap_err();
        assert_eq!(e.exit_code(), 2, "{k} = {v}: {e}");
    }
}

#[test]
fn trace_round_trip() {
    let out = run_campaign(&desk(3)).unwrap();
    let traces = campaign_traces(&out);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    save_trace(&path, &traces).unwrap();
    let back = load_trace(&path).unwrap();
    for (x, y) in [(&back.alice, &traces.alice), (&back.bob, &traces.bob), (&back.eve, &traces.eve)] {
        assert!(max_rel_diff(x.as_ref().unwrap(), y.as_ref().unwrap()) < 1e-7);
    }
    // At least 9 significant digits in every value field.
    let text = fs::read_to_string(&path).unwrap();
    let row = text.lines().nth(1).unwrap();
    let re = row.split(',').nth(4).unwrap();
    assert!(re.split('e').next().unwrap().trim_start_matches('-').replace('.', "").len() >= 9);
}

#[test]
fn truncated_trace_names_line() {
    let out = run_campaign(&desk(4)).unwrap();
    let mut buf = Vec::new();
    coskg::harness::trace::write_trace(&mut buf, &campaign_traces(&out)).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();

    // Cut mid-row: the last row has too few fields.
    let mut cut = lines[..100].join("\n");
    cut.push_str("\n3,A,0,5,1.0");
    let e = read_trace(cut.as_bytes()).unwrap_err();
    assert!(matches!(e, Error::Parse { line: 101, .. }), "{e}");

    // Cut on a row boundary partway through round 2: its tail is missing.
    let e = read_trace(lines[..1 + 128 + 50].join("\n").as_bytes()).unwrap_err();
    assert!(matches!(e, Error::Parse { line: 179, .. }), "{e}");
    assert!(e.to_string().contains("truncated"), "{e}");

    // Cut after Bob's first round: Bob's shape no longer matches Alice's.
    let alice_rows = 128 * 200;
    let e = read_trace(lines[..1 + alice_rows + 128].join("\n").as_bytes()).unwrap_err();
    assert!(matches!(e, Error::Parse { .. }), "{e}");
}

#[test]
fn malformed_trace_rows() {
    let header = "round,party,antenna,subcarrier,re,im\n";
    let cases = [
        ("1,A,0,0,1.0,0.0\n1,X,0,0,1.0,0.0\n", 3),
        ("0,A,0,0,1.0,0.0\n", 2),
        ("1,A,0,0,nan,0.0\n", 2),
        ("1,A,0,0,1.0,0.0\n1,A,0,0,1.0,0.0\n", 3),
        ("1,A,0,zero,1.0,0.0\n", 2),
    ];
    for (body, line) in cases {
        let e = read_trace(format!("{header}{body}").as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: l, .. } if l == line), "{body}: {e}");
    }
    let e = read_trace("r,p,a,s,re,im\n".as_bytes()).unwrap_err();
    assert!(matches!(e, Error::Parse { line: 1, .. }));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn external_trace_ingestion() {
    let (a, b) = synthetic_pair(512, 1000, 5);
    let traces = TraceSet {
        alice: Some(a),
        bob: Some(b),
        eve: None,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("external.csv");
    save_trace(&path, &traces).unwrap();
    let exp = run_pipeline(&load_trace(&path).unwrap(), &ExperimentConfig::default()).unwrap();
    assert!(exp.report.metrics.bgr > 0.0);
    assert!(exp.report.keys_match);
    // No Eve trace given, so none is published.
    assert_eq!(exp.public.len(), PUBLIC_SET.len() - 1);
    let missing = TraceSet {
        bob: None,
        ..traces
    };
    assert!(run_pipeline(&missing, &ExperimentConfig::default()).is_err());
}

#[test]
fn public_artifact_manifest() {
    let exp = run_experiment(&desk(6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    exp.write_public(dir.path()).unwrap();
    let expected: BTreeSet<String> = PUBLIC_SET.iter().map(|s| s.to_string()).collect();
    assert_eq!(dir_listing(dir.path()), expected);
    assert_eq!(PUBLIC_SET.len(), 5);

    // The published trace holds Eve's view only.
    let eve = load_trace(&dir.path().join("eve_trace.csv")).unwrap();
    assert!(eve.alice.is_none() && eve.bob.is_none() && eve.eve.is_some());
}

#[test]
fn public_artifacts_hold_no_secrets() {
    let cfg = desk(7);
    let exp = run_experiment(&cfg).unwrap();
    let secrets = secrets_csv(&run_campaign(&cfg).unwrap().secrets);
    // Tap values are written with 16 fractional digits; none may leak.
    let tap_values: Vec<&str> = secrets
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(3))
        .filter(|v| *v != "1.0000000000000000e0" && *v != "0.0000000000000000e0")
        .collect();
    assert!(!tap_values.is_empty());
    let report = exp.report.to_json();
    for a in &exp.public {
        let text = String::from_utf8_lossy(&a.bytes);
        for v in tap_values.iter().take(200) {
            assert!(!text.contains(v), "{} leaks a tap", a.name);
        }
        assert!(!text.contains("m_k"));
    }
    assert!(!report.contains("m_k") && !report.contains("\"taps\""));
}

#[test]
fn determinism() {
    let run = || {
        let exp = run_experiment(&desk(8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        exp.write_public(dir.path()).unwrap();
        let files: Vec<(String, Vec<u8>)> = dir_listing(dir.path())
            .into_iter()
            .map(|n| {
                let bytes = fs::read(dir.path().join(&n)).unwrap();
                (n, bytes)
            })
            .collect();
        (exp.report.to_json(), files)
    };
    assert_eq!(run(), run());
    let other = run_experiment(&desk(9)).unwrap().report.to_json();
    assert_ne!(run().0, other);
}

#[test]
fn leakage_matches_emitted_artifacts() {
    let exp = run_experiment(&desk(10)).unwrap();
    let syndrome = exp.public.iter().find(|a| a.name == "syndrome.bin").unwrap();
    let msg = SyndromeMessage::from_bytes(&syndrome.bytes).unwrap();
    assert_eq!(msg, exp.reconciliation.message);
    let discard = exp.public.iter().find(|a| a.name == "discard.csv").unwrap();
    assert_eq!(String::from_utf8_lossy(&discard.bytes).lines().count(), 1 + exp.report.discarded_blocks);
    let expected = leakage(exp.report.reconciled_bits, msg.disclosed_bits(), exp.extraction.eta1).unwrap();
    assert_eq!(exp.report.leakage, expected);
    assert!(exp.report.reconciled_bits >= expected.required_len);
}

#[test]
fn default_run_agrees() {
    let exp = run_experiment(&ExperimentConfig::default()).unwrap();
    let r = &exp.report;
    assert!(r.metrics.bmr <= 0.05, "{}", r.metrics.bmr);
    assert!(r.metrics.bgr > 0.0);
    assert!(r.keys_match);
    assert_eq!(r.key_fingerprint_a, r.key_fingerprint_b);
    let digest = Sha256::digest(exp.keys.0 .0);
    let expected: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(r.key_fingerprint_a, expected);
    assert!(!r.to_json().contains(&exp.keys.0.hex()));
    assert!(r.nist.is_some());
    let stages: Vec<&str> = r.timings.iter().map(|(s, _)| s.as_str()).collect();
    assert_eq!(stages, ["campaign", "extract", "reconcile", "amplify"]);
}

#[test]
fn static_noiseless_channel_gives_degenerate_key() {
    let mut cfg = ExperimentConfig {
        seed: 11,
        ..ExperimentConfig::default()
    };
    for (k, v) in [("mode", "none"), ("rho_t", "1"), ("snr_db", "inf"), ("nist_bits", "1024")] {
        cfg.set(k, v).unwrap();
    }
    let (m, ex) = raw_key_metrics(&cfg).unwrap();
    assert_eq!(m.bmr, 0.0);
    assert!(ex.q_b.bits.len() >= 1024);
    let nist = coskg::statistics::nist_suite(&ex.q_b.bits[..1024]).unwrap();
    assert!(nist.failed_tests() >= 2, "{}", nist.to_csv());
}

#[test]
fn infeasible_reconciliation_is_stage_tagged() {
    let mut cfg = desk(12);
    cfg.set("snr_db", "-10").unwrap();
    let e = run_experiment(&cfg).unwrap_err();
    assert!(
        matches!(&e, Error::Stage { stage: Stage::Reconcile, source } if matches!(**source, Error::ReconciliationInfeasible { .. })),
        "{e}"
    );
    assert_eq!(e.exit_code(), 3);
    assert!(e.to_string().contains("BMR"));
}

#[test]
fn sweep_table() {
    let t = sweep(&desk(1), "L_f", &["0", "8"], 2).unwrap();
    assert_eq!(t.tag, "fig7");
    assert_eq!(t.rows.len(), 2);
    assert!(t.rows.iter().all(|r| r.trials == 2 && r.samples.len() == 2));
    let csv = t.to_csv();
    assert!(csv.starts_with("value,bmr_mean,bmr_std,bgr_mean,bgr_std,trials\n"));
    assert_eq!(csv.lines().count(), 3);
    // Trial i runs with seed + i, the same as a direct run.
    let mut c = desk(2);
    c.set("L_f", "8").unwrap();
    let (m, _) = raw_key_metrics(&c).unwrap();
    assert_eq!(t.rows[1].samples[1], (m.bmr, m.bgr));
}

#[test]
fn sweep_errors() {
    let e = sweep(&desk(1), "width", &["1"], 1).unwrap_err();
    assert!(matches!(e, Error::Unknown { .. }));
    assert_eq!(e.exit_code(), 2);
    assert!(sweep(&desk(1), "L_f", &["4"], 0).is_err());
    assert!(sweep(&desk(1), "eta", &["2"], 1).is_err());
}

#[test]
fn full_energy_raises_bmr() {
    let t = sweep(&desk(20), "eta", &["0.999", "1.0"], 4).unwrap();
    let b = t.bmr_means();
    assert!(b[1] > b[0], "{b:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trace_text_round_trip(seed in any::<u64>(), n in 1usize..6, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = || {
            let cols: Vec<Vec<C64>> = (0..k)
                .map(|_| (0..n).map(|_| C64::new(rng.random_range(-1e3..1e3), rng.random_range(-1e-3..1e-3))).collect())
                .collect();
            CsiMatrix::from_columns(&cols).unwrap()
        };
        let t = TraceSet { alice: Some(m()), bob: None, eve: Some(m()) };
        let mut buf = Vec::new();
        coskg::harness::trace::write_trace(&mut buf, &t).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        prop_assert!(back.bob.is_none());
        prop_assert!(max_rel_diff(back.alice.as_ref().unwrap(), t.alice.as_ref().unwrap()) < 1e-7);
        prop_assert!(max_rel_diff(back.eve.as_ref().unwrap(), t.eve.as_ref().unwrap()) < 1e-7);
    }
}
