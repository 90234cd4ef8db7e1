//! CLI behavior: subcommands, artifacts, and exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dcats"))
}

fn synth_into(dir: &Path) {
    let status = bin()
        .args(["synth", "--out"])
        .arg(dir)
        .args(["--clusters", "2", "--per-cluster", "4", "--steps", "1200", "--seed", "5"])
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn synth_prepare_neighbors_pretrain_report_work() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    for f in ["data.csv", "data.bin", "meta.csv", "graph.csv", "clusters.csv"] {
        assert!(data.join(f).exists(), "{f}");
    }

    // prepare: CSV in, binary out, metadata cross-checked
    let prepared = tmp.path().join("prepared.bin");
    let status = bin()
        .args(["prepare", "--data"])
        .arg(data.join("data.csv"))
        .args(["--out"])
        .arg(&prepared)
        .args(["--meta"])
        .arg(data.join("meta.csv"))
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        std::fs::read(&prepared).unwrap(),
        std::fs::read(data.join("data.bin")).unwrap(),
        "prepare output differs from the generator's binary"
    );

    let neighbors_csv = tmp.path().join("neighbors.csv");
    let output = bin()
        .args(["neighbors", "--data"])
        .arg(data.join("data.bin"))
        .args(["--meta"])
        .arg(data.join("meta.csv"))
        .args(["--graph"])
        .arg(data.join("graph.csv"))
        .args(["--target", "0", "--out"])
        .arg(&neighbors_csv)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    for section in ["road:", "pattern:", "geodetic:"] {
        assert!(stdout.contains(section), "missing `{section}` in:\n{stdout}");
    }
    let csv = std::fs::read_to_string(&neighbors_csv).unwrap();
    assert!(csv.starts_with("target_id,kind,rank,neighbor_id,value"));

    let cfg = tmp.path().join("cfg.txt");
    std::fs::write(&cfg, "pretrain_epochs = 2\nfinetune_epochs = 1\n").unwrap();
    let ckpt = tmp.path().join("foundation.ckpt");
    let status = bin()
        .args(["pretrain", "--data"])
        .arg(data.join("data.bin"))
        .args(["--meta"])
        .arg(data.join("meta.csv"))
        .args(["--graph"])
        .arg(data.join("graph.csv"))
        .args(["--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&ckpt)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(ckpt.exists());

    // run + standalone report rebuild
    let workdir = tmp.path().join("run");
    let status = bin()
        .args(["run", "--data"])
        .arg(data.join("data.bin"))
        .args(["--meta"])
        .arg(data.join("meta.csv"))
        .args(["--graph"])
        .arg(data.join("graph.csv"))
        .args(["--config"])
        .arg(&cfg)
        .args(["--targets", "0", "--backend", "greedy", "--seed", "1", "--workdir"])
        .arg(&workdir)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["trace_0.json", "transcript_0.jsonl", "baseline_0.json", "report.txt", "report.csv", "word_freq.csv"] {
        assert!(workdir.join(f).exists(), "{f}");
    }
    let report_before = std::fs::read(workdir.join("report.csv")).unwrap();
    std::fs::remove_file(workdir.join("report.csv")).unwrap();
    let status = bin().args(["report", "--workdir"]).arg(&workdir).status().unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read(workdir.join("report.csv")).unwrap(), report_before);
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);

    // config error (bad settings file) -> 2
    let cfg = tmp.path().join("bad.txt");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let status = bin()
        .args(["neighbors", "--data"])
        .arg(data.join("data.bin"))
        .args(["--meta"])
        .arg(data.join("meta.csv"))
        .args(["--graph"])
        .arg(data.join("graph.csv"))
        .args(["--config"])
        .arg(&cfg)
        .args(["--target", "0"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // unknown backend name -> config error 2
    let status = bin()
        .args(["run", "--data"])
        .arg(data.join("data.bin"))
        .args(["--meta"])
        .arg(data.join("meta.csv"))
        .args(["--graph"])
        .arg(data.join("graph.csv"))
        .args(["--targets", "0", "--backend", "psychic", "--workdir"])
        .arg(tmp.path().join("w"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // missing data file -> data/io error 3
    let status = bin()
        .args(["prepare", "--data"])
        .arg(tmp.path().join("nope.csv"))
        .args(["--out"])
        .arg(tmp.path().join("out.bin"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}
