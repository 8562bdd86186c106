use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;
use threestage::formats::{read_jsonl, read_timing_csv};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_threestage"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

/// Starts a listening subcommand and returns it with the bound address.
#[allow(clippy::zombie_processes)]
fn spawn_listening(args: &[&str]) -> (Child, String) {
    let mut child = bin()
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    loop {
        line.clear();
        assert!(err.read_line(&mut line).unwrap() > 0, "exited before listening");
        if let Some(a) = line.trim().strip_prefix("listening on ") {
            let addr = a.to_owned();
            std::thread::spawn(move || std::io::copy(&mut err, &mut std::io::sink()));
            return (child, addr);
        }
    }
}

#[test]
fn bench_hello_succeeds() {
    let o = run(&["bench", "--message", "hello", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("decoded      hello"));
    assert!(stdout(&o).contains("bits         40\nbit errors   0\n"));
}

#[test]
fn bench_short_slot_is_a_timing_violation() {
    let o = run(&["bench", "--message", "hello", "--seed", "1", "--slot-ms", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("minimum on time"), "{}", stderr(&o));
}

#[test]
fn bench_empty_message_is_usage_error() {
    let o = run(&["bench", "--message", "", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty message"));
}

#[test]
fn bench_prints_seed_when_absent() {
    let o = run(&["bench", "--message", "hi"]);
    assert_eq!(o.status.code(), Some(0));
    let line = stderr(&o).lines().find(|l| l.starts_with("seed: ")).unwrap().to_owned();
    assert!(line[6..].parse::<u64>().is_ok());
}

#[test]
fn bench_out_files_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = run(&["bench", "--message", "hello", "--seed", "7", "--out", d.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["report.json", "decoded.txt", "timing.csv", "transcript.jsonl"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(std::fs::read(a.join("decoded.txt")).unwrap(), b"hello");

    let csv = std::fs::read_to_string(a.join("timing.csv")).unwrap();
    assert!(csv.starts_with("# tool: threestage"));
    assert!(csv.contains("# seed: 7"));
    assert_eq!(csv.lines().find(|l| !l.starts_with('#')), Some("event_type,t_start_ms,t_end_ms,detail"));
    assert!(!read_timing_csv(csv.as_bytes()).unwrap().is_empty());

    let jsonl = std::fs::read(a.join("transcript.jsonl")).unwrap();
    let (meta, records) = read_jsonl(&jsonl[..]).unwrap();
    assert_eq!((meta.subcommand.as_str(), meta.seed), ("bench", 7));
    assert_eq!(meta.config["message"], "hello");
    assert_eq!(records.len(), 3 * 40);
}

#[test]
fn config_file_merges_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "message = \"from file\"\nseed = 3\nslot_ms = 5.0\n").unwrap();
    let c = cfg.to_str().unwrap();

    let o = run(&["bench", "--config", c, "--json"]);
    assert_eq!(o.status.code(), Some(1), "file slot_ms is too short");

    let o = run(&["bench", "--config", c, "--slot-ms", "40", "--seed", "4", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = json(&o);
    assert_eq!(doc["decoded"], "from file");
    assert_eq!(doc["metadata"]["seed"], 4);
    assert_eq!(doc["metadata"]["config"]["slot_ms"], 40.0);

    std::fs::write(&cfg, "colour = \"red\"\n").unwrap();
    assert_eq!(run(&["bench", "--config", c, "--message", "x"]).status.code(), Some(2));
}

fn attack(args: &[&str]) -> Value {
    let mut all = vec!["attack", "--json"];
    all.extend_from_slice(args);
    let o = run(&all);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    json(&o)["report"].clone()
}

#[test]
fn attack_intercept_disturbs_bob() {
    let r = attack(&["--strategy", "intercept:stage=1,basis=0", "--trials", "100000", "--seed", "1"]);
    let e = r["bob_error_rate"].as_f64().unwrap();
    assert!((0.24..=0.26).contains(&e), "{e}");
}

#[test]
fn attack_without_eve_is_clean() {
    let r = attack(&["--strategy", "none", "--trials", "1000", "--seed", "2"]);
    assert_eq!(r["bob_error_rate"].as_f64(), Some(0.0));
}

#[test]
fn attack_beam_split_is_silent() {
    let r = attack(&["--strategy", "beamsplit:k=1,n=2,stage=1", "--trials", "100000", "--seed", "3"]);
    assert_eq!(r["bob_error_rate"].as_f64(), Some(0.0));
    let a = r["eve_bit_accuracy"].as_f64().unwrap();
    assert!((0.49..=0.51).contains(&a), "{a}");
}

#[test]
fn attack_csv_has_metadata_and_one_row() {
    let o = run(&["attack", "--csv", "--strategy", "none", "--trials", "100", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("# subcommand: attack"));
    let rows = threestage::formats::read_attack_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].trials, rows[0].bob_errors), (100, 0));
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(run(&["attack", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["attack", "--strategy", "teleport"]).status.code(), Some(2));
    assert_eq!(run(&["attack", "--strategy", "beamsplit:k=3,n=2"]).status.code(), Some(2));
    assert_eq!(run(&["attack", "--mode", "octonion"]).status.code(), Some(2));
}

#[test]
fn serve_and_send_over_loopback() {
    let (bob, addr) = spawn_listening(&["serve", "--listen", "127.0.0.1:0", "--seed", "9"]);
    let o = run(&["send", "--connect", &addr, "--message", "quantum", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("sent 7 bytes in "));
    assert!(stdout(&o).contains("bob decoded 7 bytes"));
    let bob = bob.wait_with_output().unwrap();
    assert_eq!(bob.status.code(), Some(0));
    assert_eq!(stdout(&bob).trim_end(), "quantum");
}

#[test]
fn send_to_closed_port_is_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = run(&["send", "--connect", &format!("127.0.0.1:{port}"), "--message", "x", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn transparent_proxy_preserves_the_message() {
    let (bob, baddr) = spawn_listening(&["serve", "--listen", "127.0.0.1:0", "--seed", "11"]);
    let (eve, eaddr) = spawn_listening(&[
        "proxy", "--listen", "127.0.0.1:0", "--connect", &baddr, "--strategy", "none", "--seed", "12", "--json",
    ]);
    let o = run(&["send", "--connect", &eaddr, "--message", "photons", "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let bob = bob.wait_with_output().unwrap();
    assert_eq!(stdout(&bob).trim_end(), "photons");
    let eve = eve.wait_with_output().unwrap();
    assert_eq!(eve.status.code(), Some(0));
    let doc = json(&eve);
    assert_eq!(doc["alice_to_bob"]["rewritten"], 0);
    assert_eq!(doc["bob_decoded_bytes"], 7);
}

#[test]
fn verify_suites_pass() {
    let o = run(&["verify", "--suite", "eq1", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("x=30 y=40"), "{}", stdout(&o));
    assert_eq!(run(&["verify", "--suite", "groups", "--seed", "1"]).status.code(), Some(0));
    let o = run(&["verify", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}
