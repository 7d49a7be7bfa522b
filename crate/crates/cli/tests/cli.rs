use std::path::Path;
use std::process::{Command, Output};

fn softsplat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softsplat"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn softsplat")
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.xyz"), "0 0 0\n1 0 0\n").unwrap();
    std::fs::write(dir.path().join("bad.xyz"), "0 0 banana\n").unwrap();
    std::fs::write(dir.path().join("empty.xyz"), "# nothing\n").unwrap();

    assert_eq!(
        softsplat(dir.path(), &["loss", "chamfer", "a.xyz", "a.xyz"])
            .status
            .code(),
        Some(0)
    );
    let bad = softsplat(dir.path(), &["loss", "chamfer", "bad.xyz", "a.xyz"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 1"));
    assert_eq!(
        softsplat(dir.path(), &["loss", "chamfer", "empty.xyz", "a.xyz"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        softsplat(dir.path(), &["loss", "chamfer", "missing.xyz", "a.xyz"])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(
        softsplat(dir.path(), &["splat", "--sigma", "-1", "-o", "g.raw"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(softsplat(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        softsplat(dir.path(), &["gen-synth", "sphere", "-o", "no/such/dir/x.xyz"])
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn flags_override_config_file_over_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "[splat]\nsigma = 2.0\nradius = 6\n\n[seeds]\ndata = 9\n",
    )
    .unwrap();
    let out = softsplat(
        dir.path(),
        &[
            "probe", "--mode", "soft", "--points", "32", "--config", "run.toml", "--sigma", "1.5", "-o", "p.json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = &report(&dir.path().join("p.json"))["provenance"]["config"]["run"];
    assert_eq!(run["splat"]["sigma"], 1.5);
    assert_eq!(run["splat"]["radius"], 6);
    assert_eq!(run["seeds"]["data"], 9);
    assert_eq!(run["seeds"]["probe"], 1);
    assert_eq!(run["analysis"]["bins"], 256);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[splat]\nsigmaa = 2.0\n").unwrap();
    let out = softsplat(dir.path(), &["splat", "--config", "run.toml", "-o", "g.raw"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("g.raw").exists());
}

#[test]
fn grids_use_the_documented_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| assert!(softsplat(dir.path(), args).status.success(), "{args:?}");
    run(&[
        "splat",
        "--height",
        "6",
        "--width",
        "5",
        "-o",
        "g.raw",
        "--weights",
        "w.raw",
    ]);
    let g = std::fs::read(dir.path().join("g.raw")).unwrap();
    assert_eq!(&g[..4], b"FGRD");
    assert_eq!(u32::from_le_bytes(g[4..8].try_into().unwrap()), 6);
    assert_eq!(u32::from_le_bytes(g[8..12].try_into().unwrap()), 5);
    assert_eq!(u32::from_le_bytes(g[12..16].try_into().unwrap()), 3);
    assert_eq!(g.len(), 16 + 6 * 5 * 3 * 8);
    assert_eq!(std::fs::read(dir.path().join("w.raw")).unwrap().len(), 16 + 6 * 5 * 8);

    run(&[
        "project", "--height", "6", "--width", "5", "--mode", "depth", "-o", "d.pgm",
    ]);
    let d = std::fs::read(dir.path().join("d.pgm")).unwrap();
    assert!(d.starts_with(b"P5\n5 6\n65535\n"));
    assert_eq!(d.len(), b"P5\n5 6\n65535\n".len() + 6 * 5 * 2);
}

#[test]
fn analyze_writes_panels_and_consistent_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = softsplat(
        dir.path(),
        &["analyze", "--out-dir", "o", "--height", "32", "--width", "48"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.path().join("o/report.json"));
    for side in ["hard", "soft"] {
        let s = &r["comparison"][side];
        let product = s["entropy"]["total_bits"].as_f64().unwrap() * s["coverage"].as_f64().unwrap();
        assert_eq!(s["cmit"].as_f64().unwrap(), product);
    }
    let panel = std::fs::read(dir.path().join("o/panel_c0.pgm")).unwrap();
    assert!(panel.starts_with(b"P5\n98 32\n65535\n"));
}

#[test]
fn zero_value_projection_blinds_the_fusion_block() {
    let dir = tempfile::tempdir().unwrap();
    let out = softsplat(
        dir.path(),
        &[
            "ablate",
            "--points",
            "64",
            "--height",
            "12",
            "--width",
            "12",
            "--zero-value-projection",
            "-o",
            "a.json",
        ],
    );
    assert!(out.status.success());
    let r = report(&dir.path().join("a.json"));
    assert_eq!(r["sensitivity"], 0.0);
    assert_eq!(r["value_path_only"], true);
}

#[test]
fn kitti_normalization_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("box.xyz"), "5 2 1\n3 2 1\n").unwrap();
    let out = softsplat(
        dir.path(),
        &[
            "normalize-kitti",
            "-i",
            "box.xyz",
            "-o",
            "n.xyz",
            "--center",
            "4",
            "2",
            "1",
            "--dims",
            "2",
            "1",
            "1",
        ],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("n.xyz")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows, vec![vec![0.5, 0.0, 0.0], vec![-0.5, 0.0, 0.0]]);
}
