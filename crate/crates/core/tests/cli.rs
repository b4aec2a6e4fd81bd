use sha2::{Digest, Sha256};
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_randsmap"));
    c.env_remove("RANDSMAP_SEED");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn hash(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn field(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{out}"))
        .trim()
        .to_owned()
}

#[test]
fn gen_swiss_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["gen", "--benchmark", "swiss", "--n", "1000", "--seed", "7", "--out", "a.mdec"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(field(&s, "M"), "3");
    assert_eq!(field(&s, "N"), "1000");
    assert_eq!(field(&s, "mass_preserving"), "false");
    let o = run(dir.path(), &["gen", "--benchmark", "swiss", "--n", "1000", "--seed", "7", "--out", "b.mdec"]);
    assert!(o.status.success());
    assert_eq!(hash(&dir.path().join("a.mdec")), hash(&dir.path().join("b.mdec")));
    assert_eq!(hash(&dir.path().join("a.mdec.json")), hash(&dir.path().join("b.mdec.json")));
    let o = run(dir.path(), &["gen", "--benchmark", "swiss", "--n", "1000", "--seed", "8", "--out", "c.mdec"]);
    assert!(o.status.success());
    assert_ne!(hash(&dir.path().join("a.mdec")), hash(&dir.path().join("c.mdec")));
}

#[test]
fn gen_lwr_reports_mass_drift() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["gen", "--benchmark", "lwr", "--traj", "10", "--snaps", "50", "--out", "l.mdec"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(field(&s, "M"), "400");
    assert_eq!(field(&s, "N"), "500");
    assert_eq!(field(&s, "mass_preserving"), "true");
    let drift: f64 = field(&s, "mass_drift").parse().unwrap();
    assert!(drift <= 1e-12, "drift {drift}");
}

#[test]
fn seed_falls_back_to_environment_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let env = |seed: &str, args: &[&str]| {
        let o = bin().current_dir(p).env("RANDSMAP_SEED", seed).args(args).output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
    };
    env("5", &["gen", "--n", "50", "--out", "env.mdec"]);
    assert!(run(p, &["gen", "--n", "50", "--seed", "5", "--out", "flag.mdec"]).status.success());
    assert_eq!(hash(&p.join("env.mdec")), hash(&p.join("flag.mdec")));
    env("5", &["gen", "--n", "50", "--seed", "6", "--out", "over.mdec"]);
    assert!(run(p, &["gen", "--n", "50", "--seed", "6", "--out", "six.mdec"]).status.success());
    assert_eq!(hash(&p.join("over.mdec")), hash(&p.join("six.mdec")));
    let o = bin().current_dir(p).env("RANDSMAP_SEED", "x").args(["gen", "--out", "z"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("c.json"), r#"{"benchmark": "scurve", "n": 30, "seed": 2}"#).unwrap();
    let o = run(p, &["gen", "--config", "c.json", "--n", "40", "--out", "a.mdec"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(field(&s, "M"), "20");
    assert_eq!(field(&s, "N"), "40");
    std::fs::write(p.join("bad.json"), r#"{"n": 30, "colour": 2}"#).unwrap();
    let o = run(p, &["gen", "--config", "bad.json", "--out", "a.mdec"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(run(p, &["gen", "--benchmark", "moon", "--out", "x"]).status.code(), Some(2));
    assert_eq!(run(p, &["gen", "--n", "10"]).status.code(), Some(2));
    assert_eq!(run(p, &["frobnicate"]).status.code(), Some(2));
    let o = run(p, &["gen", "--benchmark", "lwr", "--dt", "0.5", "--traj", "1", "--snaps", "2", "--out", "x"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(run(p, &["eval", "--truth", "missing.mdec", "--recon", "missing.mdec"]).status.code(), Some(4));
    std::fs::write(p.join("junk.mdec"), b"MDEC\x01\x00").unwrap();
    assert_eq!(run(p, &["eval", "--truth", "junk.mdec", "--recon", "junk.mdec"]).status.code(), Some(4));
}

#[test]
fn help_documents_defaults_on_every_subcommand() {
    for sub in ["gen", "encode", "fit", "decode", "eval", "tune", "repro", "kernel-bench"] {
        let o = bin().args([sub, "--help"]).output().unwrap();
        assert!(o.status.success());
        let s = stdout(&o);
        assert!(s.contains("--config") && s.contains("--jobs"), "{sub}");
        if sub != "decode" && sub != "eval" {
            assert!(s.contains("[default:"), "{sub} help lists no defaults");
        }
    }
}

#[test]
fn fit_decode_eval_pipeline_with_conservation_column() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let ok = |args: &[&str]| {
        let o = run(p, args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        stdout(&o)
    };
    ok(&["gen", "--benchmark", "lwr", "--traj", "4", "--snaps", "40", "--seed", "1", "--out", "d.mdec"]);
    ok(&[
        "encode",
        "--data",
        "d.mdec",
        "--alpha",
        "0",
        "--w1",
        "1",
        "--dim",
        "2",
        "--model-out",
        "dm.mdcb",
        "--out",
        "y.mdec",
    ]);
    let fit = ok(&[
        "fit",
        "--decoder",
        "randsmap-rff",
        "--data",
        "d.mdec",
        "--latent",
        "y.mdec",
        "--features",
        "N",
        "--lambda",
        "1e-3",
        "--hyper",
        "0.3",
        "--out",
        "m.mdcb",
    ]);
    let residual: f64 = field(&fit, "residual").parse().unwrap();
    let next: f64 = field(&fit, "sigma_next").parse().unwrap();
    assert!(residual <= next);
    ok(&["decode", "--model", "m.mdcb", "--latent", "y.mdec", "--out", "xh.mdec"]);
    let ev = ok(&["eval", "--truth", "d.mdec", "--recon", "xh.mdec", "--out", "r.json", "--csv", "r.csv"]);
    assert!(ev.lines().any(|l| l.starts_with("econ")));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("r.json")).unwrap()).unwrap();
    assert!(report["econ"]["mean"].as_f64().unwrap() <= 1e-6);
    assert!(std::fs::read_to_string(p.join("r.csv")).unwrap().starts_with("index,e2,einf,econ"));

    ok(&["decode", "--model", "m.mdcb", "--latent", "y.mdec", "--out", "xh2.mdec"]);
    assert_eq!(hash(&p.join("xh.mdec")), hash(&p.join("xh2.mdec")));

    let o = run(p, &["decode", "--model", "m.mdcb", "--latent", "y.mdec", "--feature-seed", "99", "--out", "bad.mdec"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("feature-map mismatch"));

    ok(&["fit", "--decoder", "pod", "--data", "d.mdec", "--dim", "3", "--out", "pod.mdcb"]);
    ok(&["encode", "--data", "d.mdec", "--pod", "pod.mdcb", "--out", "z.mdec"]);
    let ev = ok(&["eval", "--truth", "d.mdec", "--model", "pod.mdcb", "--latent", "z.mdec", "--out", "pod.json"]);
    assert!(ev.contains("econ"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("pod.json")).unwrap()).unwrap();
    assert!(report["econ"]["mean"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn repro_writes_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("c.json"), r#"{"grid_size": 3, "fit": {"knn_max_iter": 30}}"#).unwrap();
    let o = run(
        p,
        &[
            "--jobs",
            "2",
            "repro",
            "--config",
            "c.json",
            "--benchmark",
            "swiss",
            "--scale",
            "0.05",
            "--n-runs",
            "2",
            "--knn-max-points",
            "8",
            "--out",
            "res",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let test = std::fs::read_to_string(p.join("res/swiss_test.csv")).unwrap();
    let mut lines = test.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("decoder,p,hyper_name,hyper,e2_median,e2_p5,e2_p95"));
    let decoders: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(decoders.len(), 11);
    for d in ["RFNN-RFF", "RFNN-MS-RFF", "RFNN-Sig", "DDM", "k-NN"] {
        assert!(decoders.contains(&d), "missing {d}");
    }
    assert!(p.join("res/swiss_rfnn-sig_train.csv").exists());
    assert!(p.join("res/swiss.json").exists());
}

#[test]
fn tune_and_kernel_bench_reports() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = run(
        p,
        &["tune", "--benchmark", "swiss", "--scale", "0.05", "--grid-size", "4", "--decoder", "ddm", "--out", "t.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let t: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("t.json")).unwrap()).unwrap();
    assert_eq!(t["tune"]["grid"].as_array().unwrap().len(), 4);
    assert_eq!(t["hyper_name"], "w2");

    let o = run(p, &["kernel-bench", "--seeds", "4", "--p", "128,2048", "--out", "k.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let k: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("k.json")).unwrap()).unwrap();
    assert_eq!(k["rows"].as_array().unwrap().len(), 2);
    let o = run(p, &["kernel-bench", "--kind", "msrff", "--seeds", "2", "--p", "512", "--out", "m.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("m.json")).unwrap()).unwrap();
    assert_eq!(m["rows"][0]["p"], 510);
    assert_eq!(run(p, &["kernel-bench", "--kind", "sigmoid"]).status.code(), Some(2));
}
