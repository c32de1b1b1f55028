use std::path::Path;
use std::process::{Command, Output};

fn scbicm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scbicm"))
        .arg("-q")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TABLE: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../core/data/lstar_16qam_mapping.txt"
);

#[test]
fn build_and_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("c.json");
    let o = scbicm(&[
        "ensemble",
        "build",
        "--family",
        "single",
        "--params",
        "3,6,10,2",
        "--out",
        path(&graph),
    ]);
    assert!(o.status.success(), "{o:?}");
    let o = scbicm(&["threshold", "--graph", path(&graph)]);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    let row: Vec<f64> = out
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert!((row[0] - 0.5036).abs() < 0.003, "{out}");
    assert!((row[2] - 3.16).abs() < 0.05, "{out}");
}

#[test]
fn bitmap_commands() {
    let o = scbicm(&["bitmap", "validate", "--bitmap", TABLE, "--rounded"]);
    assert!(o.status.success(), "{o:?}");
    let o = scbicm(&["bitmap", "validate", "--bitmap", TABLE]);
    assert_eq!(o.status.code(), Some(9));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[mapping]"));

    let o = scbicm(&[
        "bitmap", "expand", "--bitmap", TABLE, "--Q", "2000", "--seed", "3",
    ]);
    assert!(o.status.success(), "{o:?}");
    let a = scbicm_core::ChannelAssignment::parse(&stdout(&o)).unwrap();
    assert_eq!(a.totals(), vec![20_000; 4]);
}

#[test]
fn lift_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.json");
    let code = dir.path().join("h.txt");
    let map = dir.path().join("u.map");
    let assign = dir.path().join("a.txt");
    assert!(scbicm(&[
        "ensemble",
        "build",
        "--family",
        "loop",
        "--out",
        path(&graph)
    ])
    .status
    .success());
    assert!(scbicm(&[
        "lift",
        "--graph",
        path(&graph),
        "--Q",
        "25",
        "--seed",
        "4",
        "--out",
        path(&code)
    ])
    .status
    .success());
    std::fs::write(&map, scbicm_core::BitMapping::uniform(4, 40).to_text()).unwrap();
    assert!(scbicm(&[
        "bitmap",
        "expand",
        "--bitmap",
        path(&map),
        "--Q",
        "25",
        "--out",
        path(&assign)
    ])
    .status
    .success());
    let args = [
        "simulate",
        "--code",
        path(&code),
        "--assign",
        path(&assign),
        "--ebn0",
        "8:1:9",
        "--max-frames",
        "2",
    ];
    let o = scbicm(&args);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    assert!(out.starts_with("ebn0_db,frames,bit_errors,ber"));
    assert_eq!(out.lines().count(), 3);
    assert!(
        out.lines()
            .skip(1)
            .all(|l| l.split(',').nth(2) == Some("0")),
        "{out}"
    );
    assert_eq!(stdout(&scbicm(&args)), out);
}

#[test]
fn mapping_only_small_budget() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.json");
    let map = dir.path().join("m.txt");
    assert!(scbicm(&[
        "ensemble",
        "build",
        "--params",
        "3,6,6,2",
        "--out",
        path(&graph)
    ])
    .status
    .success());
    let o = scbicm(&[
        "optimize",
        "mapping",
        "--graph",
        path(&graph),
        "--population",
        "6",
        "--generations",
        "3",
        "--out-bitmap",
        path(&map),
    ]);
    assert!(o.status.success(), "{o:?}");
    let m = scbicm_core::BitMapping::parse(&std::fs::read_to_string(&map).unwrap()).unwrap();
    assert!(m.validate(scbicm_core::bitmap::Tolerances::STRICT).is_ok());
}

#[test]
fn errors_have_categories() {
    let o = scbicm(&["ensemble", "build", "--params", "3,6,10,4"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[invalid-params]"));
    let o = scbicm(&["lift", "--graph", "/nonexistent.json", "--Q", "4"]);
    assert_eq!(o.status.code(), Some(12));
    let o = scbicm(&[
        "ensemble",
        "build",
        "--family",
        "loop",
        "--positions",
        "3,4,5,6",
    ]);
    assert!(!o.status.success());
}
