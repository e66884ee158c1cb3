use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use ampic::harness::coupling::{encode_peer_message, parse_controller_message, ControllerMessage, PeerMessage};
use ampic::ising::IsingInstance;

fn ampic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ampic")).args(args).output().unwrap()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_prints_the_exact_ground_state() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("ring.txt");
    let text = "ising 4\nh 0 0.3\nh 3 -0.7\nj 0 1 1.0\nj 1 2 -0.4\nj 2 3 0.9\nj 0 3 0.2\noffset 2\n";
    std::fs::write(&file, text).unwrap();
    let inst = IsingInstance::parse_text(text).unwrap();

    let out = ampic(&["solve", path_arg(&file), "--solver", "exact"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["num_spins"], 4);

    let best = (0..16u32)
        .map(|bits| {
            let spins: Vec<i8> = (0..4).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect();
            inst.energy(&spins)
        })
        .fold(f64::INFINITY, f64::min);
    assert!((json["energy"].as_f64().unwrap() - best).abs() < 1e-12);
    let sigma: Vec<i8> = serde_json::from_value(json["sigma"].clone()).unwrap();
    assert_eq!(inst.energy(&sigma), json["energy"].as_f64().unwrap());
}

#[test]
fn run_writes_csvs_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    std::fs::write(
        &config,
        r#"{"network": {"type": "lattice", "rows": 4, "cols": 4}, "sim": {"duration": 600}, "seeds": [5, 6]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = ampic(&[
        "run",
        "--config",
        path_arg(&config),
        "--rows",
        "3",
        "--cols",
        "3",
        "--controller",
        "local",
        "--duration",
        "120",
        "--seeds",
        "2",
        "-o",
        path_arg(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 120);
    assert!(trace.lines().skip(1).all(|l| l.starts_with("2,")));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.lines().skip(1).all(|l| l.starts_with("local,") && l.contains(",9,")));
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.txt");
    std::fs::write(&file, "ising 2\nj 0 7 1.0\n").unwrap();
    let out = ampic(&["solve", path_arg(&file)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = ampic(&["run", "--controller", "nonsense"]);
    assert!(!out.status.success());
}

#[test]
fn couple_over_stdio() {
    let net = ampic::generate_lattice(3, 3, 100.0).unwrap();
    let q: Vec<(u32, u32, u32)> =
        net.roads().iter().map(|r| (net.intersections()[r.from].id, net.intersections()[r.to].id, 3)).collect();
    let mut input = String::new();
    for t in [0, 60] {
        input += &encode_peer_message(&PeerMessage::Counts { t, q: q.clone(), exits: vec![], turns: vec![] }).unwrap();
        input.push('\n');
    }
    input += &encode_peer_message(&PeerMessage::End {}).unwrap();
    input.push('\n');

    let mut child = Command::new(env!("CARGO_BIN_EXE_ampic"))
        .args(["couple", "--rows", "3", "--cols", "3", "--controller", "local"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let replies: Vec<ControllerMessage> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| parse_controller_message(l).unwrap()).collect();
    assert_eq!(replies.len(), 2);
    for (reply, want_t) in replies.iter().zip([0, 60]) {
        match reply {
            ControllerMessage::Signals { t, sigma } => {
                assert_eq!(*t, want_t);
                assert_eq!(sigma.len(), net.num_controlled());
            }
            other => panic!("unexpected reply {other:?}"),
        }
    }
}
