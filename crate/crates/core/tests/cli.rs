use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use opess::io::{read_histogram_csv, read_result, read_rows_csv, Payload};

const GAUSSIAN: &str =
    "[model]\nfamily = \"gaussian\"\nsigma2 = 1.0\nprior_mean = 0.0\nprior_var = 0.1\n";

fn opess(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opess"))
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn printed_mopess(o: &Output) -> f64 {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix("MOPESS: "))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn compute_writes_summary_pmf_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("y.txt"), "# twenty draws\n0.1\n-0.2\n0.3\n0.0\n0.2\n\n-0.1\n0.15\n0.05\n-0.3\n0.25\n0.1\n-0.05\n0.0\n0.2\n-0.15\n0.1\n0.05\n-0.2\n0.3\n0.0\n").unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{GAUSSIAN}[data]\npath = \"y.txt\"\n[engine]\nS = 500\nseed = 3\n"),
    );
    let out = dir.path().join("res.csv");
    let o = opess(&["compute", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for key in ["MOPESS: ", "q05: ", "q50: ", "q95: "] {
        assert!(text.contains(key), "{text}");
    }
    assert!(o.stderr.is_empty());
    let env = read_result(&out).unwrap();
    let Payload::Result(r) = env.payload else {
        panic!("expected a result payload")
    };
    assert_eq!(r.metadata.s, 500);
    assert_eq!(r.metadata.n, 20);
    assert_eq!(env.provenance.seed, 3);
    assert_eq!(env.provenance.timestamp, 1_700_000_000);
    assert_eq!(printed_mopess(&o), r.mopess);
    let pmf = read_histogram_csv(&dir.path().join("res.pmf.csv")).unwrap();
    assert_eq!(pmf.total(), 500);
    assert!(fs::read_to_string(&out)
        .unwrap()
        .starts_with("mopess,q05,q50,q95,"));
}

#[test]
fn seed_flag_changes_result_and_digest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{GAUSSIAN}[data.simulate]\nn = 20\nseed = 1\n[engine]\nS = 300\n"),
    );
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = opess(&[
            "compute",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        read_result(&out).unwrap().provenance
    };
    let (a, b, c) = (run("1", "a.csv"), run("2", "b.csv"), run("1", "c.csv"));
    assert_ne!(a.config_digest, b.config_digest);
    assert_eq!(a, c);
}

#[test]
fn boundary_warning_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{GAUSSIAN}[data.simulate]\nn = 20\nseed = 1\n[engine]\nS = 200\nL = 22\n"),
    );
    let o = opess(&["compute", "--config", &cfg]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: "));
}

#[test]
fn beta_half_mean_below_nominal() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<&str> = (0..20)
        .map(|i| if i % 2 == 0 { "1" } else { "0" })
        .collect();
    let cfg = write_config(
        dir.path(),
        &format!(
            "[model]\nfamily = \"beta_bernoulli\"\nalpha = 5.0\nbeta = 5.0\n[data]\nvalues = [{}]\n[engine]\nS = 500\n",
            values.join(", ")
        ),
    );
    let o = opess(&["compute", "--config", &cfg]);
    assert!(o.status.success());
    assert!(printed_mopess(&o) < 8.0);
}

#[test]
fn regression_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[model]\nfamily = \"regression\"\nsigma2 = 1.0\neta0 = [0.0, 0.0]\ntau2 = [0.1, 0.1]\n\
         [data.simulate]\nn = 20\nseed = 4\n[engine]\nS = 200\n",
    );
    let o = opess(&["compute", "--config", &cfg, "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(printed_mopess(&o).is_finite());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        &format!("{GAUSSIAN}[data]\nvalues = [1.0]\n").replace("0.1", "-1.0"),
    );
    let o = opess(&["compute", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("prior_var must be > 0"));

    let missing = write_config(
        dir.path(),
        &format!("{GAUSSIAN}[data]\npath = \"nope.txt\"\n"),
    );
    assert_eq!(
        opess(&["compute", "--config", &missing]).status.code(),
        Some(3)
    );

    fs::write(dir.path().join("bad.txt"), "1\n0\n0.5\n").unwrap();
    let bern = write_config(
        dir.path(),
        "[model]\nfamily = \"beta_bernoulli\"\nalpha = 5.0\nbeta = 5.0\n[data]\npath = \"bad.txt\"\n",
    );
    let o = opess(&["compute", "--config", &bern]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.txt:3"));

    assert_eq!(opess(&["study", "nope"]).status.code(), Some(1));
    assert_eq!(opess(&[]).status.code(), Some(1));
    assert_eq!(opess(&["--version"]).status.code(), Some(0));
}

#[test]
fn study_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    fs::write(
        &cfg,
        "study_id = \"small_mopess_appE\"\nn_datasets = 4\nS = 200\nseed = 2\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = opess(&[
        "study",
        "small_mopess_appE",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--bins",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows_csv(&out.join("small_mopess_appE.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.q05 <= r.q50 && r.q50 <= r.q95));
    assert_eq!(
        read_histogram_csv(&out.join("small_mopess_appE.hist.csv"))
            .unwrap()
            .total(),
        200
    );
    let bins = fs::read_to_string(out.join("small_mopess_appE.bins.csv")).unwrap();
    assert_eq!(bins.lines().count(), 3);

    let wrong = opess(&["study", "beta_fig4", "--config", cfg.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn conditional_study_histogram_has_theory_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "study_id = \"gaussian_conditional_fig3\"\nn_datasets = 1\nS = 300\nseed = 2\n[overrides]\ntheory_draws = 200\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = opess(&[
        "study",
        "gaussian_conditional_fig3",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--ybar",
        "0.45",
        "--mu",
        "0.45",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("total variation: "));
    let h = read_histogram_csv(&out.join("gaussian_conditional_fig3.hist.csv")).unwrap();
    assert!(h.has_theory());
    assert_eq!(h.total(), 300);
}

#[test]
fn theory_pmf_table_is_worker_invariant() {
    let args = [
        "theory-pmf",
        "--mu",
        "0",
        "--mu-draws",
        "1",
        "--t-draws",
        "100",
        "--l",
        "60",
        "--seed",
        "4",
    ];
    let a = opess(&args);
    let mut more = args.to_vec();
    more.extend(["--workers", "3"]);
    let b = opess(&more);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("v,probability,std_error\n"));
    assert_eq!(text.lines().count(), 1 + 81);
}

#[test]
fn theory_pmf_point_and_distance() {
    let o = opess(&["theory-pmf", "--v", "0", "--ybar", "2"]);
    assert_eq!(stdout(&o), "0\n");
    let o = opess(&["distance", "gaussian", "0", "1", "1", "4"]);
    assert_eq!(stdout(&o), "2\n");
    let o = opess(&["prop-check", "--mode", "prior", "--z", "7"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("m_n = 7\n"));
}
