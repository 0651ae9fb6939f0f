//! Drives the `credito` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use credito_core::rules::ClaimPolicy;
use credito_core::sim::Sim;
use credito_core::{Engine, EngineSettings};
use credito_gateway::{spawn, ServiceConfig};

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn credito(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_credito")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const BUNDLED: [&str; 5] = ["happy_path", "fraud_f1", "fraud_f2", "fraud_f3", "fraud_f4"];

#[test]
fn bundled_scenarios_pass_with_identical_transcripts() {
    for name in BUNDLED {
        let script = manifest(&format!("scenarios/{name}.toml"));
        let first = credito(&["run-scenario", script.to_str().unwrap()]);
        assert_eq!(first.status.code(), Some(0), "{name}: {}{}", stdout(&first), stderr(&first));
        assert!(stdout(&first).ends_with(&format!("PASS {name}\n")));
        let second = credito(&["--embedded", "run-scenario", script.to_str().unwrap()]);
        assert_eq!(first.stdout, second.stdout, "{name} transcript differs between runs");
    }
}

#[test]
fn redeem_before_mint_echoes_the_ledger_error() {
    let out = credito(&["run-scenario", manifest("tests/fixtures/redeem_before_mint.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL redeem_before_mint: expectation failed at step 3 (redeem_operator): UNKNOWN_BATCH"));
    // Execution stops at the first divergence.
    assert!(!stdout(&out).contains("[04]"));
}

#[test]
fn malformed_script_is_a_parse_error() {
    let out = credito(&["run-scenario", manifest("tests/fixtures/malformed.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown op `launch_rocket`"));
    assert!(stdout(&out).is_empty());
    let missing = credito(&["run-scenario", "/nonexistent/script.toml"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn show_tree_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("t.journal");
    let j = journal.to_str().unwrap();
    let run = credito(&["--journal", j, "run-scenario", manifest("tests/fixtures/two_transfers.toml").to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", stdout(&run));

    let tree = credito(&["--journal", j, "show-tree", "C7"]);
    assert_eq!(tree.status.code(), Some(0), "{}", stderr(&tree));
    assert_eq!(stdout(&tree), std::fs::read_to_string(manifest("tests/fixtures/two_transfers.tree")).unwrap());

    let unknown = credito(&["--journal", j, "show-tree", "C8"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(stderr(&unknown).contains("UNKNOWN_CREDIT_CODE"));

    let verify = credito(&["verify-journal", j]);
    assert_eq!(verify.status.code(), Some(0));
    assert!(stdout(&verify).starts_with("chain: PASS (8 records"));
}

#[test]
fn single_mint_tree_is_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("one.journal");
    let j = journal.to_str().unwrap();
    let run = credito(&["--journal", j, "run-scenario", manifest("tests/fixtures/single_mint.toml").to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", stdout(&run));
    assert_eq!(stdout(&credito(&["--journal", j, "show-tree", "C7"])), "Mint bank1 -> gc1 100000 cents seq=6\n");
}

#[test]
fn fraud_f3_journal_queries() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("f3.journal");
    let j = journal.to_str().unwrap();
    assert_eq!(credito(&["--journal", j, "run-scenario", manifest("scenarios/fraud_f3.toml").to_str().unwrap()]).status.code(), Some(0));
    let out = credito(&["--journal", j, "show-tree", "C1"]);
    assert_eq!(stdout(&out), "Mint bank1 -> gc1 500000 cents seq=7\n  Redeem gc1 -> bank1 500000 cents seq=8\n");

    let alerts = credito(&["--journal", j, "alerts"]);
    assert_eq!(stdout(&alerts), "critical F3_UNBACKED_REDEEM subjects=[bank1,gc1] evidence=[6,7,8] at=8\ncursor: 8\n");
    let none = credito(&["--journal", j, "alerts", "--since-seq", "8"]);
    assert_eq!(stdout(&none), "cursor: 8\n");
    let forecast = credito(&["--journal", j, "forecast", "--horizon", "2"]);
    assert_eq!(forecast.status.code(), Some(0));
    // Mint demand of 500000 at t=7, none at t=8: level 0.3 * 0 + 0.7 * 500000.
    assert!(stdout(&forecast).contains("history: [500000, 0]\n"), "{}", stdout(&forecast));
    assert!(stdout(&forecast).contains("forecast: [350000, 350000]\n"), "{}", stdout(&forecast));
}

#[test]
fn verify_journal_reports_fuzz_corruption_and_genesis() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fuzz.journal");
    {
        let mut engine = Engine::open(&path, EngineSettings::default()).unwrap();
        let mut sim = Sim::new(3, ClaimPolicy::default());
        for cmd in sim.registrations() {
            engine.execute(cmd, None).unwrap();
        }
        for _ in 0..300 {
            let cmd = sim.next_valid(engine.ledger());
            engine.execute(cmd, None).unwrap();
        }
    }
    let p = path.to_str().unwrap();
    let ok = credito(&["verify-journal", p]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    for name in ["coverage", "investor_conservation", "positive_amounts", "provenance_reconciliation"] {
        assert!(stdout(&ok).contains(&format!("{name}: PASS")), "{}", stdout(&ok));
    }

    let mut bytes = std::fs::read(&path).unwrap();
    let at = bytes.len() / 2;
    bytes[at] = if bytes[at] == b'7' { b'8' } else { b'7' };
    let bad = dir.path().join("bad.journal");
    std::fs::write(&bad, &bytes).unwrap();
    let out = credito(&["verify-journal", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).starts_with("chain: FAIL CORRUPT_CHAIN"), "{}", stdout(&out));

    let empty = dir.path().join("empty.journal");
    std::fs::write(&empty, b"").unwrap();
    let out = credito(&["--journal", empty.to_str().unwrap(), "verify-journal"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("chain: PASS (0 records"));
}

#[test]
fn remote_mode_runs_against_a_live_gateway() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let script = manifest("scenarios/fraud_f1.toml");
    let mut config = credito_cli::scenario::Script::load(&script).unwrap().service_config();
    config.listen = "127.0.0.1:0".into();
    let server = rt.block_on(spawn(&config)).unwrap();
    let url = server.url();

    let out = credito(&["--server", &url, "run-scenario", script.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}{}", stdout(&out), stderr(&out));
    let tree = credito(&["--server", &url, "alerts"]);
    assert!(stdout(&tree).starts_with("critical F1_AMOUNT_EXCEEDED subjects=[cust1] evidence=[3,4]"));

    // The server now has history and validation off: other scripts refuse to run.
    let out = credito(&["--server", &url, "run-scenario", manifest("scenarios/happy_path.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("claim_validation"), "{}", stderr(&out));
    rt.block_on(server.shutdown()).unwrap();

    let fresh = rt.block_on(spawn(&ServiceConfig { listen: "127.0.0.1:0".into(), ..ServiceConfig::default() })).unwrap();
    let out = credito(&["--server", &fresh.url(), "run-scenario", manifest("scenarios/fraud_f4.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}{}", stdout(&out), stderr(&out));
    rt.block_on(fresh.shutdown()).unwrap();

    let down = credito(&["--server", "http://127.0.0.1:9", "run-scenario", script.to_str().unwrap()]);
    assert_ne!(down.status.code(), Some(0));
}
