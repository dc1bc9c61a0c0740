use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssrcbf::scenario::{IoData, Scenario};
use tempfile::TempDir;

fn ssrcbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssrcbf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn read(path: &str) -> String {
    std::fs::read_to_string(Path::new(path)).unwrap()
}

/// CSV body without the columns named in `drop`.
fn without_columns(text: &str, drop: &[&str]) -> Vec<String> {
    let mut lines = text.lines();
    let schema = lines.next().unwrap().to_string();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&k| !drop.contains(&header[k])).collect();
    let pick = |line: &str| {
        let cells: Vec<&str> = line.split(',').collect();
        keep.iter().map(|&k| cells[k]).collect::<Vec<_>>().join(",")
    };
    std::iter::once(schema)
        .chain(std::iter::once(pick(&header.join(","))))
        .chain(lines.map(pick))
        .collect()
}

fn states(csv: &str) -> Vec<DVector<f64>> {
    csv.lines()
        .skip(2)
        .map(|line| DVector::from_vec(line.split(',').skip(1).map(|v| v.parse().unwrap()).collect()))
        .collect()
}

#[test]
fn generated_data_reconstructs_the_true_state() {
    let dir = TempDir::new().unwrap();
    let (scen, data) = (path(&dir, "sc.json"), path(&dir, "data.json"));
    let out = ssrcbf(&[
        "generate",
        "--n",
        "3",
        "--p",
        "7",
        "--q",
        "3",
        "--s",
        "2",
        "--seed",
        "11",
        "--out",
        &scen,
        "--record",
        "6",
        "--data-out",
        &data,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sc = Scenario::load(Path::new(&scen)).unwrap();

    let mut found = Vec::new();
    for method in ["brute", "decomp-ssr"] {
        let csv = path(&dir, &format!("{method}.csv"));
        let out = ssrcbf(&[
            "ssr",
            "--scenario",
            &scen,
            "--data",
            &data,
            "--method",
            method,
            "--out",
            &csv,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = read(&csv);
        assert!(text.starts_with("# ssrcbf-ssr/1\nindex,x0,x1,x2\n"));
        let xs = states(&text);
        assert!(xs.iter().any(|x| (x - &sc.x_true).norm() < 1e-6));
        found.push(xs);
    }
    assert_eq!(found[0].len(), found[1].len());
    for x in &found[0] {
        assert!(found[1].iter().any(|y| (x - y).norm() < 1e-6));
    }
}

#[test]
fn closed_loop_csv_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let mut runs = Vec::new();
    for k in 0..2 {
        let csv = path(&dir, &format!("run{k}.csv"));
        let out = ssrcbf(&[
            "closedloop",
            "--fixture",
            "--method",
            "brute",
            "--method",
            "upper-bound",
            "--horizon",
            "12",
            "--out",
            &csv,
            "--svg",
            &path(&dir, "plot"),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        runs.push(without_columns(&read(&csv), &["seconds"]));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0][0], "# ssrcbf-closedloop/1");
    assert_eq!(
        runs[0][1],
        "tau,method,filtered,h_min,cost,set_size,x0,x1,x2,x3,u0,u1,u2,u3"
    );
    assert_eq!(runs[0].len(), 2 + 2 * 12);
    for plot in ["plot_h.svg", "plot_cost.svg"] {
        assert!(read(&path(&dir, plot)).contains("<polyline"));
    }
}

#[test]
fn bench_csv_is_reproducible_apart_from_timing() {
    let dir = TempDir::new().unwrap();
    let mut runs = Vec::new();
    for k in 0..2 {
        let csv = path(&dir, &format!("bench{k}.csv"));
        let out = ssrcbf(&[
            "bench-sensors",
            "--n",
            "3",
            "--s",
            "2",
            "--q",
            "3",
            "--p",
            "6..7",
            "--runs",
            "1",
            "--repeats",
            "1",
            "--seed",
            "5",
            "--out",
            &csv,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        runs.push(without_columns(&read(&csv), &["mean_s", "std_s"]));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0][0], "# ssrcbf-bench-sensors/1");
    assert_eq!(runs[0][1], "p,method,runs,work,bound");
    assert_eq!(runs[0].len(), 2 + 2 * 3);
}

#[test]
fn inconsistent_data_exits_with_attack_model_status() {
    let dir = TempDir::new().unwrap();
    let (scen, data) = (path(&dir, "sc.json"), path(&dir, "data.json"));
    let out = ssrcbf(&[
        "generate",
        "--n",
        "2",
        "--p",
        "5",
        "--q",
        "2",
        "--s",
        "1",
        "--seed",
        "3",
        "--out",
        &scen,
        "--record",
        "4",
        "--data-out",
        &data,
    ]);
    assert!(out.status.success());

    let mut io = IoData::from_json(&read(&data)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for y in io.outputs.iter_mut() {
        for v in y.iter_mut() {
            *v = rng.random_range(-100.0..100.0);
        }
    }
    std::fs::write(&data, io.to_json()).unwrap();
    let out = ssrcbf(&["ssr", "--scenario", &scen, "--data", &data, "--method", "brute"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_input_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let scen = path(&dir, "sc.json");
    std::fs::write(&scen, r#"{"version": 99}"#).unwrap();
    let out = ssrcbf(&["closedloop", "--scenario", &scen]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));

    assert_eq!(ssrcbf(&["closedloop", "--method", "brute"]).status.code(), Some(1));
    assert_eq!(
        ssrcbf(&["ssr", "--scenario", &scen, "--data", &scen, "--method", "guess"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(ssrcbf(&["--help"]).status.code(), Some(0));
}
