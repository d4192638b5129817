use std::path::Path;
use std::process::{Command, Output};

fn crowdmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdmix"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = crowdmix(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// 593×6 label CSV with a fixed, roughly balanced pattern.
fn write_truth(dir: &Path) -> std::path::PathBuf {
    let mut text = String::from("amazed,happy,relaxing,quiet,sad,angry\n");
    for i in 0..593u32 {
        let cells: Vec<&str> = (0..6)
            .map(|j| if (i * 7 + j * 3) % 5 < 2 { "1" } else { "0" })
            .collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    let path = dir.join("emotions.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_writes_expected_record_count_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_truth(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "simulate",
            "--dataset",
            p(&truth),
            "-R",
            "7:7:0",
            "-T",
            "5",
            "-L",
            "700",
            "--seed",
            "9",
            "--out",
            p(out),
        ]);
    }
    let ann = std::fs::read_to_string(a.join("annotations.csv")).unwrap();
    assert_eq!(ann.lines().count(), 1 + 3500);
    for f in ["annotations.csv", "profiles.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap()
        );
    }
    assert!(!a.join("truth.csv").exists());
}

#[test]
fn fit_eval_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_truth(dir.path());
    let sim = dir.path().join("sim");
    ok(&[
        "simulate",
        "--dataset",
        p(&truth),
        "-R",
        "1:1:1",
        "-T",
        "5",
        "-L",
        "593",
        "--seed",
        "1",
        "--out",
        p(&sim),
    ]);
    let ann = sim.join("annotations.csv");

    let mv = dir.path().join("mv.json");
    ok(&[
        "fit",
        "--model",
        "mv",
        "--annotations",
        p(&ann),
        "-N",
        "593",
        "-C",
        "6",
        "--out",
        p(&mv),
    ]);
    let mv_text = std::fs::read_to_string(&mv).unwrap();
    assert!(mv_text.contains("\"predictions\"") && !mv_text.contains("elbo_trace"));

    let bmmb = dir.path().join("bmmb.json");
    ok(&[
        "fit",
        "--model",
        "bmmb",
        "--annotations",
        p(&ann),
        "-N",
        "593",
        "-C",
        "6",
        "-K",
        "6",
        "--out",
        p(&bmmb),
    ]);
    let text = std::fs::read_to_string(&bmmb).unwrap();
    // 593·5 records over 593 instances: five per instance selects a = 4, b = 1.
    assert!(
        text.contains("\"a\": 4.0") && text.contains("\"b\": 1.0"),
        "{text}"
    );
    assert!(text.contains("\"converged\": true"));

    let report = ok(&[
        "eval",
        "--dataset",
        p(&truth),
        "--result",
        p(&bmmb),
        "--profiles",
        p(&sim.join("profiles.csv")),
    ]);
    for key in ["f1_micro", "f1_macro", "f1_example", "kl", "recovery"] {
        assert!(report.contains(key), "{report}");
    }
    let report = ok(&["eval", "--dataset", p(&truth), "--result", p(&mv)]);
    assert!(!report.contains("kl") && !report.contains("recovery"));

    let comps = ok(&["report-components", "--result", p(&bmmb)]);
    let weights: Vec<f64> = comps
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(weights.len(), 6);
    assert!(weights.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn perfect_result_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&[
        "simulate",
        "--planted",
        "80:4:2",
        "-R",
        "1:0:0",
        "-T",
        "80",
        "-L",
        "9",
        "--seed",
        "2",
        "--out",
        p(&sim),
    ]);
    let res = dir.path().join("bnc.json");
    ok(&[
        "fit",
        "--model",
        "bnc",
        "--annotations",
        p(&sim.join("annotations.csv")),
        "--out",
        p(&res),
    ]);
    let report = ok(&[
        "eval",
        "--dataset",
        p(&sim.join("truth.csv")),
        "--result",
        p(&res),
    ]);
    assert!(report.contains("\"f1_micro\": 1.0"), "{report}");
}

#[test]
fn sweep_rows_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let args = [
        "sweep",
        "--planted",
        "60:3:2",
        "--model",
        "mv,bmmb",
        "-T",
        "4,8",
        "-L",
        "40",
        "-K",
        "2",
        "--seed",
        "0,5,9",
        "--workers",
        "3",
        "--out",
    ];
    let mut full: Vec<&str> = args.to_vec();
    full.push(p(&csv));
    ok(&full);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().next().unwrap().starts_with('#'));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        body[0],
        "model,R,T,L,K,seed,f1_micro,f1_macro,f1_example,kl,recovery"
    );
    assert_eq!(body.len(), 1 + 12);

    // A row's seed and parameters are enough to rebuild it by hand.
    let row: Vec<&str> = body
        .iter()
        .find(|l| l.starts_with("bmmb,1:1:1,8,"))
        .unwrap()
        .split(',')
        .collect();
    let seed = row[5];
    let sim = dir.path().join("sim");
    ok(&[
        "simulate",
        "--planted",
        "60:3:2",
        "-T",
        "8",
        "-L",
        "40",
        "--seed",
        seed,
        "--out",
        p(&sim),
    ]);
    let res = dir.path().join("r.json");
    ok(&[
        "fit",
        "--model",
        "bmmb",
        "--annotations",
        p(&sim.join("annotations.csv")),
        "-N",
        "60",
        "-C",
        "3",
        "-K",
        "2",
        "--seed",
        seed,
        "--out",
        p(&res),
    ]);
    let report = ok(&[
        "eval",
        "--dataset",
        p(&sim.join("truth.csv")),
        "--result",
        p(&res),
    ]);
    assert!(
        report.contains(&format!("\"f1_micro\": {}", row[6])),
        "{report} vs {row:?}"
    );
}

#[test]
fn exit_codes() {
    assert_eq!(
        crowdmix(&["fit", "--model", "ibcc", "--annotations", "a", "--out", "b"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        crowdmix(&[
            "fit",
            "--model",
            "bmmb",
            "-K",
            "0",
            "--annotations",
            "a",
            "--out",
            "b"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        crowdmix(&["sweep", "--planted", "10:2:2", "-T", "1,2", "-L", "3,4"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(crowdmix(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        crowdmix(&[
            "fit",
            "--model",
            "bnc",
            "--annotations",
            "/no/such/file.csv",
            "--out",
            "b"
        ])
        .status
        .code(),
        Some(3)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("labels.csv");
    std::fs::write(&bad, "a,b\n1,2\n").unwrap();
    let out = crowdmix(&[
        "simulate",
        "--dataset",
        p(&bad),
        "-T",
        "1",
        "-L",
        "1",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));

    let truth = write_truth(dir.path());
    let out = crowdmix(&[
        "simulate",
        "--dataset",
        p(&truth),
        "-T",
        "600",
        "-L",
        "3",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
}
