use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vifbf_core::solvers::Status;
use vifbf_harness::{exit_code, parse_config, run, OUTPUT_ROOT_ENV, TRACE_COLUMNS};

fn vifbf(args: &[&str], output_root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vifbf"));
    cmd.args(args).env_remove(OUTPUT_ROOT_ENV);
    if let Some(root) = output_root {
        cmd.env(OUTPUT_ROOT_ENV, root);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

const BOX: &str = r#"
[problem]
builtin = "zero_operator_box"
dim = 3

[[solver]]
kind = "fbf"
"#;

const TOY: &str = r#"
[problem]
builtin = "due"
fixture = "two_path_toy"
penalty_coefficient = 0.0

[[solver]]
kind = "fbf"

[[solver]]
kind = "projected_gradient"

[[solver]]
kind = "extragradient"
"#;

#[test]
fn converged_run_exits_zero_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "box.toml", BOX);
    let out = vifbf(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(
        code(&out),
        exit_code::SUCCESS,
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("out/summary.csv").exists());
    assert!(dir.path().join("out/0_fbf.trace.csv").exists());
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_value = write_config(dir.path(), "rho.toml", &format!("{BOX}rho_step = 1.5\n"));
    let out = vifbf(&["validate", bad_value.to_str().unwrap()], None);
    assert_eq!(code(&out), exit_code::CONFIG);
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver[0].rho_step"));

    let unknown = write_config(
        dir.path(),
        "unknown.toml",
        &format!("{BOX}colour = \"red\"\n"),
    );
    let out = vifbf(&["run", unknown.to_str().unwrap()], None);
    assert_eq!(code(&out), exit_code::CONFIG);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 8"));

    let good = write_config(dir.path(), "good.toml", BOX);
    assert_eq!(
        code(&vifbf(&["validate", good.to_str().unwrap()], None)),
        exit_code::SUCCESS
    );
}

#[test]
fn non_converged_and_diverged_runs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let capped = write_config(
        dir.path(),
        "capped.toml",
        "[problem]\nbuiltin = \"linear_monotone\"\nseed = 3\ndim = 4\n[[solver]]\nkind = \"fbf\"\nkmax = 1\n",
    );
    assert_eq!(
        code(&vifbf(&["run", capped.to_str().unwrap()], None)),
        exit_code::NOT_CONVERGED
    );

    // Projected gradient with an oversized step on an effectively unbounded box.
    let diverging = write_config(
        dir.path(),
        "blowup.toml",
        "[problem]\nbuiltin = \"linear_monotone\"\nseed = 3\ndim = 4\nlower = -1e30\nupper = 1e30\n\
         [[solver]]\nkind = \"projected_gradient\"\ngamma = 100.0\nkmax = 1000\n",
    );
    let out = vifbf(&["run", diverging.to_str().unwrap()], None);
    assert_eq!(code(&out), exit_code::NOT_CONVERGED);
    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert!(summary.contains(",diverged,"), "{summary}");
}

#[test]
fn io_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    assert_eq!(
        code(&vifbf(&["run", missing.to_str().unwrap()], None)),
        exit_code::IO
    );

    // An output root that is a regular file cannot hold the output directory.
    let cfg = write_config(dir.path(), "box.toml", BOX);
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    assert_eq!(
        code(&vifbf(&["run", cfg.to_str().unwrap()], Some(&blocker))),
        exit_code::IO
    );

    let net = write_config(
        dir.path(),
        "net.toml",
        "[problem]\n[problem.network]\nnodes = \"n.csv\"\nlinks = \"l.csv\"\nod = \"o.csv\"\npaths = \"p.csv\"\n[[solver]]\nkind = \"fbf\"\n",
    );
    assert_eq!(
        code(&vifbf(&["run", net.to_str().unwrap()], None)),
        exit_code::IO
    );
}

#[test]
fn output_root_override() {
    let dir = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "box.toml", BOX);
    let out = vifbf(&["run", cfg.to_str().unwrap()], Some(root.path()));
    assert_eq!(code(&out), exit_code::SUCCESS);
    assert!(root.path().join("out/summary.csv").exists());
    assert!(!dir.path().join("out").exists());
}

fn trace_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".csv"))
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_are_byte_identical() {
    let text = format!("{TOY}\n[[solver]]\nkind = \"tseng\"\nseed = 11\n");
    let config = parse_config(&text).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&config, a.path(), a.path()).unwrap();
    run(&config, b.path(), b.path()).unwrap();
    let (fa, fb) = (
        trace_files(&a.path().join("out")),
        trace_files(&b.path().join("out")),
    );
    assert_eq!(fa.len(), 4 * 3 + 1);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(
            fs::read(x).unwrap(),
            fs::read(y).unwrap(),
            "{}",
            x.display()
        );
    }
}

#[test]
fn trace_schema_round_trips() {
    let text = "[problem]\nbuiltin = \"linear_monotone\"\nseed = 5\ndim = 4\n\
                [[solver]]\nkind = \"fbf\"\nseed = 2\n[[solver]]\nkind = \"extragradient\"\n\
                [output]\nrecord_wall_time = true\n";
    let config = parse_config(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run(&config, dir.path(), dir.path()).unwrap();
    for s in &report.solvers {
        let mut reader = csv::Reader::from_path(&s.trace_path).unwrap();
        let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, TRACE_COLUMNS);
        let col = |name: &str| header.iter().position(|h| h == name).unwrap();
        let mut rows = 0;
        let mut last_iter = None;
        for record in reader.records() {
            let r = record.unwrap();
            let num = |name: &str| r[col(name)].parse::<f64>().unwrap();
            let iter: usize = r[col("iter")].parse().unwrap();
            assert!(last_iter.is_none_or(|l| iter > l));
            last_iter = Some(iter);
            let (step, base) = (num("step_norm"), num("x_norm"));
            if base == 0.0 {
                // Degenerate gap at the origin.
                assert_eq!(num("eps"), if step == 0.0 { 0.0 } else { f64::INFINITY });
            } else {
                let expected = (step / base).powi(2);
                assert!(
                    (num("eps") - expected).abs() <= 1e-12 * expected,
                    "iter {iter}"
                );
            }
            assert!(num("dist_to_known") >= 0.0);
            assert!(num("ms") >= 0.0);
            rows += 1;
        }
        assert_eq!(rows, s.iterations);
        assert_eq!(last_iter, Some(s.iterations - 1));
    }
    let summary = fs::read_to_string(&report.summary_path).unwrap();
    assert_eq!(summary.lines().count(), 1 + report.solvers.len());
}

#[test]
fn wall_time_column_blank_by_default() {
    let config = parse_config(BOX).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run(&config, dir.path(), dir.path()).unwrap();
    let text = fs::read_to_string(&report.solvers[0].trace_path).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(',')));
}

#[test]
fn toy_equilibrium_has_small_gap() {
    let config = parse_config(TOY).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run(&config, dir.path(), dir.path()).unwrap();
    let fbf = &report.solvers[0];
    assert_eq!(fbf.status, Status::Converged);
    let gaps = fbf.gaps.as_ref().unwrap();
    assert_eq!(gaps.len(), 1);
    assert!(gaps[0] <= 1e-3, "gap {}", gaps[0]);
    let hist = fbf.histogram.as_ref().unwrap();
    assert_eq!(hist.iter().sum::<usize>(), 1);
    for s in &report.solvers {
        assert!(s.gap_path.as_ref().unwrap().exists());
        assert!(s.histogram_path.as_ref().unwrap().exists());
    }
}

#[test]
fn exported_fixture_runs_from_network_files() {
    let dir = tempfile::tempdir().unwrap();
    let net_dir = dir.path().join("nguyen");
    let out = vifbf(
        &[
            "fixtures",
            "export",
            "nguyen_topology",
            net_dir.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&out), exit_code::SUCCESS);
    let cfg = write_config(
        dir.path(),
        "net.toml",
        "[problem]\npenalty_coefficient = 0.0\n[problem.network]\nnodes = \"nguyen/nodes.csv\"\n\
         links = \"nguyen/links.csv\"\nod = \"nguyen/od.csv\"\npaths = \"nguyen/paths.csv\"\n\
         [grid]\nt0 = 0.0\nt1 = 2.0\nbins = 12\n[[solver]]\nkind = \"fbf\"\n",
    );
    let out = vifbf(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(
        code(&out),
        exit_code::SUCCESS,
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let gaps = fs::read_to_string(dir.path().join("out/0_fbf.gaps.csv")).unwrap();
    assert_eq!(gaps.lines().count(), 1 + 4);

    let listed = vifbf(&["fixtures", "list"], None);
    let names = String::from_utf8(listed.stdout).unwrap();
    assert!(names.lines().any(|l| l == "nguyen_topology"));

    let report = vifbf(
        &[
            "gaps",
            dir.path().join("out").to_str().unwrap(),
            "--edges",
            "0,0.01,1",
        ],
        None,
    );
    assert_eq!(code(&report), exit_code::SUCCESS);
    let text = String::from_utf8(report.stdout).unwrap();
    let total: usize = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 4);
}
