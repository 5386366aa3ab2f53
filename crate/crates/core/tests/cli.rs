use std::path::Path;
use std::process::{Command, Output};

fn iavi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iavi"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn gen_env_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&iavi(
        d,
        &[
            "gen-env",
            "--n",
            "8",
            "--colors",
            "2",
            "--objects",
            "6",
            "--seed",
            "1",
            "--out",
            "a.json",
        ],
    ));
    ok(&iavi(
        d,
        &[
            "gen-env",
            "--n",
            "8",
            "--colors",
            "2",
            "--objects",
            "6",
            "--seed",
            "1",
            "--out",
            "b.json",
        ],
    ));
    let a = std::fs::read(d.join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.json")).unwrap());
    let text = ok(&iavi(d, &["inspect", "a.json"]));
    assert!(text.contains("objectworld 8x8") && text.contains("6 objects"), "{text}");
}

#[test]
fn invalid_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = iavi(d, &["gen-env", "--n", "8", "--objects", "100"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!iavi(d, &["run", "--algorithm", "nope", "--env", "missing.json"])
        .status
        .success());
    assert!(!iavi(d, &["inspect", "missing.json"]).status.success());
    ok(&iavi(
        d,
        &["gen-env", "--n", "5", "--objects", "4", "--out", "env.json"],
    ));
    let empty = iavi(d, &["curve", "--algorithm", "iql", "--env", "env.json", "--counts", ""]);
    assert!(!empty.status.success());
}

#[test]
fn run_with_audit_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&iavi(
        d,
        &[
            "gen-env",
            "--n",
            "6",
            "--objects",
            "6",
            "--seed",
            "3",
            "--out",
            "env.json",
        ],
    ));
    let text = ok(&iavi(
        d,
        &[
            "run",
            "--algorithm",
            "iavi",
            "--env",
            "env.json",
            "--seeds",
            "0,1,2,3,4",
            "--out",
            "runs",
            "--audit",
        ],
    ));
    assert!(text.contains("over 5 seeds"), "{text}");
    let summary = std::fs::read_to_string(d.join("runs/summary.csv")).unwrap();
    assert!(summary.starts_with("algorithm,n_seeds,n_failed,evd_mean,evd_sd"));
    let inspected = ok(&iavi(d, &["inspect", "runs/records.json"]));
    assert!(inspected.contains("audit ok"), "{inspected}");
    let evd = ok(&iavi(
        d,
        &["evd", "--env", "env.json", "--reward", "runs/seed-0/reward.json"],
    ));
    assert!(evd.trim().parse::<f64>().unwrap().abs() < 0.1);
}

#[test]
fn demos_manifest_and_config_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&iavi(
        d,
        &["gen-env", "--n", "5", "--objects", "5", "--out", "env.json"],
    ));
    ok(&iavi(
        d,
        &[
            "sample-demos",
            "--env",
            "env.json",
            "--episodes",
            "40",
            "--horizon",
            "6",
            "--out",
            "demos.json",
        ],
    ));
    assert!(ok(&iavi(d, &["inspect", "demos.json"])).contains("40 episodes"));
    std::fs::write(
        d.join("cfg.json"),
        r#"{"iql": {"alpha_r": 0.05, "alpha_sh": 0.05, "alpha_q": 0.05, "alpha_c": 0.05}}"#,
    )
    .unwrap();
    std::fs::write(
        d.join("manifest.json"),
        r#"{"algorithm": "ciql", "environment": "env.json", "demos": "demos.json", "seeds": [0, 1], "output": "m"}"#,
    )
    .unwrap();
    let text = ok(&iavi(d, &["run", "--manifest", "manifest.json", "--jobs", "2"]));
    assert!(text.contains("violations=0"), "{text}");
    let text = ok(&iavi(
        d,
        &[
            "run",
            "--algorithm",
            "ciql",
            "--env",
            "env.json",
            "--demos",
            "demos.json",
            "--config",
            "cfg.json",
            "--out",
            "c",
        ],
    ));
    assert!(text.contains("ciql seed=0"), "{text}");
    assert!(!iavi(
        d,
        &[
            "run",
            "--algorithm",
            "iql",
            "--env",
            "env.json",
            "--config",
            "absent.json"
        ]
    )
    .status
    .success());
}

#[test]
fn curve_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&iavi(
        d,
        &["gen-env", "--n", "5", "--objects", "5", "--out", "env.json"],
    ));
    let args = |out: &'static str| {
        [
            "curve",
            "--algorithm",
            "iql",
            "--env",
            "env.json",
            "--counts",
            "4,16",
            "--seeds",
            "0,1",
            "--out",
            out,
        ]
    };
    ok(&iavi(d, &args("a.csv")));
    ok(&iavi(d, &args("b.csv")));
    let a = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(d.join("b.csv")).unwrap());
    assert!(a.starts_with("traj_count,mean_evd,sd\n4,"));
}
