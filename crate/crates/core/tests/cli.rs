use std::path::Path;
use std::process::{Command, Output};

fn recon_dg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recon-dg"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("study.cfg");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const HEADER: &str = "level,h,dofs,err_l2,err_energy,err_h2broken,rate_l2,rate_energy,lambda_max,solver_residual";

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let cfg = write_config(
        dir.path(),
        &format!(
            "# small study\ncase = ex1-sin2\nlevels = 4,8\nm = 2,3\nout = {}\n",
            out.display()
        ),
    );
    let res = recon_dg(&["run", "--config", &cfg]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    for m in [2, 3] {
        let csv = std::fs::read_to_string(out.join(format!("ex1-sin2_reconstructed_m{m}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(HEADER));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.len() == 10));
        assert_eq!(rows[0][6], "");
        assert!(rows[1][6].parse::<f64>().unwrap() > 1.0);
        assert_eq!([rows[0][2], rows[1][2]], ["32", "128"]);
    }
    assert!(out.join("summary.txt").exists());
}

#[test]
fn identical_config_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let cfg = write_config(
            dir.path(),
            &format!(
                "case = ex3-ss\nmesh = mixed\nlevels = 4,8\nm = 3\nout = {}\n",
                out.display()
            ),
        );
        assert_eq!(code(&recon_dg(&["run", "--config", &cfg])), 0);
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let cfg = write_config(
        dir.path(),
        &format!("m = 4\nlevels = 4\nmode = reconstructed\nout = {}\n", out.display()),
    );
    let res = recon_dg(&[
        "run",
        "--config",
        &cfg,
        "--m",
        "2",
        "--mode",
        "baseline-full-dg",
        "--lambda",
        "false",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("ex1-sin2_baseline-full-dg_m2.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "192");
    assert_eq!(row[8], "");
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        "colour = blue\n",
        "case = no-such-case\n",
        "m = 2\nm = 3\n",
        "mu = -1\n",
        "levels\n",
    ] {
        let cfg = write_config(dir.path(), body);
        let res = recon_dg(&["run", "--config", &cfg]);
        assert_eq!(code(&res), 2, "{body:?}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(String::from_utf8_lossy(&res.stderr).starts_with("error: "));
    }
    assert_eq!(code(&recon_dg(&["dump-basis", "--cell", "10000"])), 2);
}

#[test]
fn numerical_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // four grid rows of barycenters cannot determine a quartic
    let res = recon_dg(&[
        "run",
        "--mesh",
        "quad",
        "--levels",
        "10",
        "--m",
        "4",
        "--patch",
        "example2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 3, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("not unique"));
}

#[test]
fn io_errors_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.cfg");
    assert_eq!(code(&recon_dg(&["run", "--config", missing.to_str().unwrap()])), 4);
    let res = recon_dg(&["mesh-info", dir.path().join("none.msh").to_str().unwrap()]);
    assert_eq!(code(&res), 4);
    assert!(String::from_utf8_lossy(&res.stderr).contains("none.msh"));
}

#[test]
fn mesh_info_and_dump_basis() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("square.mesh");
    std::fs::write(&path, "4 1\n0 0\n1 0\n1 1\n0 1\n4 0 1 2 3\n").unwrap();
    let res = recon_dg(&["mesh-info", path.to_str().unwrap()]);
    assert_eq!(code(&res), 0);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("cells: 1\n"));
    assert!(text.contains("faces: 4 (4 boundary)\n"));

    let res = recon_dg(&["dump-basis", "--cell", "0", "--m", "2", "--n", "4"]);
    assert_eq!(code(&res), 0);
    let text = String::from_utf8(res.stdout).unwrap();
    // the basis values at the center sum to one
    let sum: f64 = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix("lambda_"))
        .map(|l| l.split(" = ").nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-11, "{text}");
}
