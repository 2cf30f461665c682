//! The full group-analysis protocol through the binary: generate a cohort,
//! parcellate every subject, build the atlas, aggregate connectomes, and run
//! the similarity, edge-wise, and classifier analyses.

use std::path::{Path, PathBuf};
use std::process::Command;

fn parc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_parc"))
        .args(args)
        .output()
        .expect("spawn parc")
}

fn ok(args: &[&str]) {
    let out = parc(args);
    assert!(
        out.status.success(),
        "parc {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn cohort_protocol_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Two cohorts drawn from the same planted structure; cohort B gets a
    // noisier connectivity matrix (different seed and weaker contrast).
    let data_a = root.join("cohort_a");
    let data_b = root.join("cohort_b");
    ok(&[
        "synth",
        "--dims",
        "10x10x5",
        "--k",
        "4",
        "--mu-in",
        "10",
        "--mu-out",
        "1",
        "--sigma",
        "1",
        "--density",
        "0.4",
        "--seed",
        "21",
        "--out",
        data_a.to_str().unwrap(),
    ]);
    ok(&[
        "synth",
        "--dims",
        "10x10x5",
        "--k",
        "4",
        "--mu-in",
        "10",
        "--mu-out",
        "4",
        "--sigma",
        "3",
        "--density",
        "0.4",
        "--seed",
        "22",
        "--out",
        data_b.to_str().unwrap(),
    ]);

    // Three subjects per cohort: same connectivity, different pipeline seeds
    // (the paper-style per-subject variation at desk scale).
    let subject = |data: &Path, seed: u32, out: PathBuf| {
        ok(&[
            "parcellate",
            "--mask",
            data.join("mask.mask").to_str().unwrap(),
            "--conn",
            data.join("conn.conn").to_str().unwrap(),
            "--k",
            "4",
            "--init",
            "random:12",
            "--seed",
            &seed.to_string(),
            "--out",
            out.to_str().unwrap(),
        ]);
        out.join("parcellation.parc")
    };
    let group_a: Vec<PathBuf> = (0..3)
        .map(|s| subject(&data_a, s, root.join(format!("a{s}"))))
        .collect();
    let group_b: Vec<PathBuf> = (0..3)
        .map(|s| subject(&data_b, 10 + s, root.join(format!("b{s}"))))
        .collect();

    // Atlas over cohort A.
    let atlas_dir = root.join("atlas");
    let mut args: Vec<String> = vec![
        "atlas".into(),
        "--reference".into(),
        "0".into(),
        "--out".into(),
        atlas_dir.to_str().unwrap().into(),
    ];
    args.extend(group_a.iter().map(|p| p.to_str().unwrap().to_string()));
    let out = Command::new(env!("CARGO_BIN_EXE_parc"))
        .args(&args)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(atlas_dir.join("atlas.parc").exists());
    let conf = std::fs::read_to_string(atlas_dir.join("atlas.conf")).unwrap();
    assert!(conf.starts_with("CONF 500"));

    // Similarity t-tests between the cohorts.
    let mut args: Vec<String> = vec!["ttest".into(), "--group-a".into()];
    args.extend(group_a.iter().map(|p| p.to_str().unwrap().to_string()));
    args.push("--group-b".into());
    args.extend(group_b.iter().map(|p| p.to_str().unwrap().to_string()));
    let out = Command::new(env!("CARGO_BIN_EXE_parc"))
        .args(&args)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 4);

    // Connectomes: cohort A subjects against their own matrix, cohort B
    // against the noisier one.
    let mut conns_a = Vec::new();
    let mut conns_b = Vec::new();
    for (i, p) in group_a.iter().enumerate() {
        let out_path = root.join(format!("ca{i}.connectome"));
        ok(&[
            "connectome",
            "--mask",
            data_a.join("mask.mask").to_str().unwrap(),
            "--conn",
            data_a.join("conn.conn").to_str().unwrap(),
            "--parc",
            p.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ]);
        conns_a.push(out_path);
    }
    for (i, p) in group_b.iter().enumerate() {
        let out_path = root.join(format!("cb{i}.connectome"));
        ok(&[
            "connectome",
            "--mask",
            data_b.join("mask.mask").to_str().unwrap(),
            "--conn",
            data_b.join("conn.conn").to_str().unwrap(),
            "--parc",
            p.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ]);
        conns_b.push(out_path);
    }

    // Edge-wise report.
    let report = root.join("edges.tsv");
    let mut args: Vec<String> = vec!["edgetest".into(), "--group-a".into()];
    args.extend(conns_a.iter().map(|p| p.to_str().unwrap().to_string()));
    args.push("--group-b".into());
    args.extend(conns_b.iter().map(|p| p.to_str().unwrap().to_string()));
    args.push("--out".into());
    args.push(report.to_str().unwrap().into());
    let out = Command::new(env!("CARGO_BIN_EXE_parc"))
        .args(&args)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(
        text.lines().count(),
        1 + 10,
        "header plus C(4,2)+4 distinct entries"
    );

    // Classifier on the three most significant edges, 3-fold (6 subjects).
    let mut args: Vec<String> = vec!["classify".into(), "--group-a".into()];
    args.extend(conns_a.iter().map(|p| p.to_str().unwrap().to_string()));
    args.push("--group-b".into());
    args.extend(conns_b.iter().map(|p| p.to_str().unwrap().to_string()));
    args.extend(["--edges".into(), "3".into(), "--folds".into(), "3".into()]);
    let out = Command::new(env!("CARGO_BIN_EXE_parc"))
        .args(&args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("edges=")), "{stdout}");
    let acc_line = stdout
        .lines()
        .find(|l| l.starts_with("accuracy="))
        .expect("accuracy line");
    let acc: f64 = acc_line.trim_start_matches("accuracy=").parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}
