use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ringfinder(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringfinder"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: [&str; 4] = ["--n-legit", "150", "--n-rings", "3"];

#[test]
fn generate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = ringfinder(&["generate", "--seed", "7", "--out", path(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["hard_links.tsv", "soft_links.tsv", "risk.tsv", "truth.tsv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    ringfinder(&["generate", "--seed", "8", "--out", path(&c)]);
    assert_ne!(
        fs::read(a.join("soft_links.tsv")).unwrap(),
        fs::read(c.join("soft_links.tsv")).unwrap()
    );
}

#[test]
fn pipeline_with_config_writes_a_sorted_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut args = vec!["generate", "--seed", "2", "--out", path(d)];
    args.extend(SMALL);
    assert_eq!(code(&ringfinder(&args)), 0);
    fs::write(
        d.join("c.toml"),
        "seed = 5\n[embedding]\ndim = 32\n[paths]\nhard_links = \"hard_links.tsv\"\n\
         soft_links = \"soft_links.tsv\"\nrisk = \"risk.tsv\"\nout_dir = \"out\"\n",
    )
    .unwrap();
    let o = ringfinder(&["--config", path(&d.join("c.toml")), "pipeline"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(d.join("out/report.tsv")).unwrap();
    let mut lines = report.lines();
    let m: usize = lines
        .next()
        .unwrap()
        .strip_prefix("#ranked_clusters ")
        .unwrap()
        .parse()
        .unwrap();
    let scores: Vec<f64> = lines.map(|l| l.split('\t').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(scores.len(), m);
    assert!(m > 0);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    for f in ["transformed.tsv", "embedding.tsv", "clusters.tsv", "cluster_scores.tsv"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn stages_chain_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut args = vec!["generate", "--seed", "4", "--out", path(d)];
    args.extend(SMALL);
    ringfinder(&args);
    let p = |f: &str| d.join(f).to_str().unwrap().to_owned();
    let run = |args: &[&str]| {
        let o = ringfinder(args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    run(&[
        "transform",
        "--hard",
        &p("hard_links.tsv"),
        "--soft",
        &p("soft_links.tsv"),
        "--out",
        &p("t.tsv"),
    ]);
    run(&[
        "--seed",
        "3",
        "embed",
        "--graph",
        &p("t.tsv"),
        "--out",
        &p("e.tsv"),
        "--dim",
        "16",
    ]);
    run(&[
        "cluster",
        "--embedding",
        &p("e.tsv"),
        "--out",
        &p("c.tsv"),
        "--graph",
        &p("t.tsv"),
        "--report",
        &p("r.tsv"),
    ]);
    assert!(fs::read_to_string(p("r.tsv")).unwrap().starts_with("#ranked_clusters"));
    let o = run(&[
        "evaluate",
        "--graph",
        &p("t.tsv"),
        "--clusters",
        &p("c.tsv"),
        "--truth",
        &p("truth.tsv"),
    ]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("coverage="), "{text}");
    let o = run(&[
        "evaluate",
        "--graph",
        &p("t.tsv"),
        "--baseline",
        "--truth",
        &p("truth.tsv"),
        "--format",
        "kv",
    ]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("fraud_accounts="));
    let o = run(&["stats", "--hard", &p("hard_links.tsv"), "--soft", &p("soft_links.tsv")]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("super_nodes="));
}

#[test]
fn perfect_assignment_has_full_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("t.tsv"), "#supernodes 3\nx\t0\ny\t0\nz\t1\nw\t2\n").unwrap();
    fs::write(d.join("c.tsv"), "0\t0\n1\t-1\n2\t-1\n").unwrap();
    fs::write(d.join("truth.tsv"), "x\t0\ny\t0\n").unwrap();
    let o = ringfinder(&[
        "evaluate",
        "--graph",
        path(&d.join("t.tsv")),
        "--clusters",
        path(&d.join("c.tsv")),
        "--truth",
        path(&d.join("truth.tsv")),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        String::from_utf8(o.stdout).unwrap(),
        "coverage=1.0000\nprecision=1.0000\npurity=1.0000\n"
    );
}

#[test]
fn replay_writes_graph_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut log = String::new();
    for i in 0..6 {
        log.push_str(&format!("A\tu{i}\t0\n"));
    }
    log.push_str("H\tu0\tphone\tu1\t1\n");
    for (a, b) in [(1, 2), (2, 3), (3, 4), (4, 5), (5, 2)] {
        log.push_str(&format!("S\tu{a}\tcookie\tu{b}\t1\t2\n"));
    }
    fs::write(d.join("events.tsv"), log).unwrap();
    let o = ringfinder(&[
        "replay",
        "--events",
        path(&d.join("events.tsv")),
        "--out-dir",
        path(&d.join("out")),
        "--weights",
        "undecayed",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = fs::read_to_string(d.join("out/transformed.tsv")).unwrap();
    assert!(t.starts_with("#supernodes 5\n"), "{t}");
    assert!(d.join("out/clusters.tsv").exists());
}

#[test]
fn exit_codes() {
    assert_eq!(code(&ringfinder(&["stats", "--bogus"])), 1);
    assert_eq!(code(&ringfinder(&["frobnicate"])), 1);
    assert_eq!(code(&ringfinder(&[])), 1);
    assert_eq!(code(&ringfinder(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.tsv"), "a\tnot_a_kind\tb\n").unwrap();
    let o = ringfinder(&["stats", "--hard", path(&d.join("bad.tsv"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.tsv"));
    let o = ringfinder(&["stats", "--hard", path(&d.join("missing.tsv"))]);
    assert_eq!(code(&o), 2);
    fs::write(d.join("c.toml"), "[risk]\nsize = 2.0\n").unwrap();
    let o = ringfinder(&[
        "--config",
        path(&d.join("c.toml")),
        "stats",
        "--hard",
        path(&d.join("bad.tsv")),
    ]);
    assert_eq!(code(&o), 2);
}
