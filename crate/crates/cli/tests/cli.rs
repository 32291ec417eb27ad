use std::path::Path;
use std::process::{Command, Output};

use pufkit::sram::{new_device, ErrorProfile};

fn pufkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pufkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pufkit(args);
    assert!(
        out.status.success(),
        "pufkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Simulated device plus a 25-cycle challenge in `dir`.
fn device_and_challenge(dir: &Path, seed: &str) -> (String, String) {
    let dev = dir.join(format!("dev{seed}.pufd"));
    let chal = dir.join(format!("chal{seed}.pufc"));
    ok(&["simulate", "--seed", seed, "--cells", "65536", "--out", p(&dev)]);
    ok(&["enroll", "--device", p(&dev), "--cycles", "25", "--out", p(&chal)]);
    (p(&dev).to_string(), p(&chal).to_string())
}

#[test]
fn simulate_and_enroll_with_curve() {
    let dir = tempfile::tempdir().unwrap();
    let dev = dir.path().join("dev.pufd");
    let out = ok(&["simulate", "--seed", "5", "--profile", "default", "--cells", "65536", "--out", p(&dev)]);
    assert!(out.contains("cells 65536"));
    let bytes = std::fs::read(&dev).unwrap();
    assert_eq!(&bytes[..4], b"PUFD");

    let chal = dir.path().join("chal.pufc");
    let curve = dir.path().join("curve.csv");
    ok(&[
        "enroll", "--device", p(&dev), "--reads", "20", "--cycles", "6", "--out", p(&chal), "--curve", p(&curve),
    ]);
    let csv = std::fs::read_to_string(&curve).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("cycle,surviving_cells,error_rate"));
    assert_eq!(lines.count(), 7);
    assert_eq!(&std::fs::read(&chal).unwrap()[..4], b"PUFC");
}

#[test]
fn enroll_needs_a_method() {
    let dir = tempfile::tempdir().unwrap();
    let dev = dir.path().join("dev.pufd");
    ok(&["simulate", "--seed", "1", "--cells", "1024", "--out", p(&dev)]);
    let out = pufkit(&["enroll", "--device", p(&dev), "--out", p(&dir.path().join("c.pufc"))]);
    assert!(!out.status.success());
}

#[test]
fn address_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (_, chal) = device_and_challenge(dir.path(), "2");
    let args = ["address", "--user", "alice", "--nonce-hex", "0a0b", "--budget", "16", "--challenge", &chal];
    let out = ok(&args);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "address,position,index");
    assert_eq!(lines.len(), 17);
    assert_eq!(out, ok(&args));
    assert!(!pufkit(&["address", "--user", "a", "--nonce-hex", "zz", "--budget", "1", "--challenge", &chal])
        .status
        .success());
}

#[test]
fn genkey_then_rekey() {
    let dir = tempfile::tempdir().unwrap();
    let (dev, chal) = device_and_challenge(dir.path(), "3");
    let helper = dir.path().join("k.pufh");
    let gen = ok(&[
        "genkey", "--challenge", &chal, "--user", "bob", "--nonce-hex", "01", "--scheme", "code-offset", "--code",
        "bch:255:t=10", "--key-bits", "128", "--helper", p(&helper), "--reveal-key",
    ]);
    let key_line = gen.lines().find(|l| l.starts_with("key ")).unwrap().to_string();
    assert!(dir.path().join("k.pufi").exists());

    let re = ok(&["rekey", "--device", &dev, "--helper", p(&helper), "--reveal-key"]);
    assert_eq!(re.lines().next(), Some("ACCEPT"));
    assert!(re.contains(&key_line));
    let quiet = ok(&["rekey", "--device", &dev, "--helper", p(&helper), "--read-seed", "9"]);
    assert_eq!(quiet.trim(), "ACCEPT");

    let (other, _) = device_and_challenge(dir.path(), "4");
    let re = ok(&["rekey", "--device", &other, "--helper", p(&helper), "--reveal-key"]);
    assert_eq!(re.trim(), "REJECT");
}

#[test]
fn genkey_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (_, chal) = device_and_challenge(dir.path(), "5");
    let run = |name: &str| {
        let helper = dir.path().join(name);
        let out = ok(&[
            "genkey", "--challenge", &chal, "--user", "u", "--scheme", "syndrome", "--code", "bch:127:t=10",
            "--helper", p(&helper), "--seed", "7", "--reveal-key",
        ]);
        (out, std::fs::read(&helper).unwrap())
    };
    let (a, ha) = run("a.pufh");
    let (b, hb) = run("b.pufh");
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    assert_eq!(&ha[..4], b"PUFH");
}

#[test]
fn polar_syndrome_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (_, chal) = device_and_challenge(dir.path(), "6");
    let out = pufkit(&[
        "genkey", "--challenge", &chal, "--user", "u", "--scheme", "syndrome", "--code", "polar:1024:128:p=0.15",
        "--helper", p(&dir.path().join("x.pufh")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn session_match_and_reject() {
    let dir = tempfile::tempdir().unwrap();
    let (dev, chal) = device_and_challenge(dir.path(), "7");
    let (other, _) = device_and_challenge(dir.path(), "8");
    let db = dir.path().join("db");
    let base = ["session", "--db", p(&db), "--user", "carol", "--nonce-hex", "beef"];
    let first = ok(&[&base[..], &["--device", &dev, "--enroll", &chal]].concat());
    assert_eq!(first.trim(), "MATCH");
    assert_eq!(std::fs::read_dir(&db).unwrap().count(), 3);
    let again = ok(&[&base[..], &["--device", &dev, "--seed", "4"]].concat());
    assert_eq!(again.trim(), "MATCH");
    let impostor = ok(&[&base[..], &["--device", &other]].concat());
    assert_eq!(impostor.trim(), "REJECT");
    let unknown = pufkit(&["session", "--db", p(&db), "--user", "dave", "--device", &dev]);
    assert!(!unknown.status.success());
}

#[test]
fn ingest_dump_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = new_device(9, &ErrorProfile::default(), 8192).unwrap();
    let reads: Vec<_> = (0..10).map(|i| d.power_cycle_read(i)).collect();
    let dumps = dir.path().join("captures");
    pufkit::ingest::write_dump_dir(&dumps, &reads, false).unwrap();
    let out_path = dir.path().join("c.pufc");
    let out = ok(&["ingest", "--dir", p(&dumps), "--reads", "10", "--out", p(&out_path)]);
    assert!(out.starts_with("reads 10 cells 8192"));
    let ch = pufkit::enrollment::TernaryChallenge::load_path(&out_path).unwrap();
    let cfg = pufkit::enrollment::EnrollmentConfig::thresholds(10, 0.3, 0.7).unwrap();
    let expect = pufkit::enrollment::enroll(&reads, &cfg, ch.source_device).unwrap();
    assert_eq!(ch, expect);
}

#[test]
fn eval_reports_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let (dev, chal) = device_and_challenge(dir.path(), "10");
    let (other, _) = device_and_challenge(dir.path(), "11");

    let frr_args = ["eval", "frr", "--device", &dev, "--challenge", &chal, "--trials", "300", "--json"];
    let frr = ok(&frr_args);
    let v: serde_json::Value = serde_json::from_str(&frr).unwrap();
    assert_eq!(v["frr"], 0.0);
    assert_eq!(v["trials"], 300);
    assert!(v["far"].is_null());
    assert_eq!(frr, ok(&frr_args));

    let far = ok(&["eval", "far", "--challenge", &chal, "--impostor", &other, "--trials", "200", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&far).unwrap();
    assert_eq!(v["far"], 0.0);
    let m = v["mean_key_bit_error_other"].as_f64().unwrap();
    assert!((0.4..0.6).contains(&m));

    let text = ok(&["eval", "frr", "--device", &dev, "--challenge", &chal, "--trials", "50"]);
    assert!(text.contains("frr             0.0000%"));
}

#[test]
fn eval_curves() {
    let dir = tempfile::tempdir().unwrap();
    let (dev, _) = device_and_challenge(dir.path(), "12");
    let cycles = ok(&["eval", "cycles", "--device", &dev, "--cycles", "5"]);
    assert!(cycles.starts_with("cycle,surviving_fraction,error_rate\n"));
    assert_eq!(cycles.lines().count(), 7);
    let json = ok(&["eval", "cycles", "--device", &dev, "--cycles", "5", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 6);

    let curve = ok(&["eval", "curve", "--device", &dev, "--cycles", "1,10", "--trials", "100", "--code", "bch:255:t=5"]);
    assert!(curve.starts_with("puf_error,key_error,trials\n"));
    assert_eq!(curve.lines().count(), 3);
}

#[test]
fn codes_list() {
    let out = ok(&["codes", "list"]);
    assert!(out.starts_with("code,family,n,k,t,blocks_for_128,leaked_bits_128\n"));
    assert!(out.contains("bch:255:t=10,BCH,255,179,10,1,76"));
    assert!(out.contains("polar:1024:128:p=0.15,polar,1024,128,0,1,896"));
    assert!(out.contains("rep:5,repetition,5,1,2,128,512"));
}
