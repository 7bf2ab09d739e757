use std::path::Path;
use std::process::{Command, Output};

use psast_core::ast::{serialize_ast, FILE_EXTENSION};
use psast_core::embedding::{init_model, EmbeddingModel};
use psast_core::{Ast, NodeTypeTable, TrainConfig};
use serde_json::Value;

fn psast(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psast"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("psast runs")
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn write_tree(dir: &Path, name: &str, family: &str, entries: &[(Option<usize>, &str)]) {
    let ast = Ast::from_parents(name, Some(family.into()), entries).unwrap();
    std::fs::write(dir.join(format!("{name}{FILE_EXTENSION}")), serialize_ast(&ast)).unwrap();
}

const THREE: &[(Option<usize>, &str)] = &[(None, "ScriptBlockAst"), (Some(0), "CommandAst"), (Some(0), "StringConstantExpressionAst")];

#[test]
fn decode_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("enc.txt"), "ZABpAHIA\n").unwrap();
    assert!(psast(&["decode", "enc.txt", "--out", "dec.txt"], d).status.success());
    assert_eq!(read(d.join("dec.txt")), "dir");

    std::fs::write(d.join("empty.txt"), "").unwrap();
    assert!(psast(&["decode", "empty.txt", "--out", "empty.out"], d).status.success());
    assert_eq!(read(d.join("empty.out")), "");

    std::fs::write(d.join("bad.txt"), "not base64!").unwrap();
    let out = psast(&["decode", "bad.txt"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.txt"));
}

#[test]
fn stats_rows_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir_all(d.join("corpus")).unwrap();
    std::fs::create_dir_all(d.join("empty")).unwrap();

    let out = psast(&["stats", "empty", "--out", "s0"], d);
    assert!(out.status.success());
    assert_eq!(read(d.join("s0/stats.tsv")), "script_id\tfamily\tdepth\tnode_count\n");

    write_tree(&d.join("corpus"), "a", "F", THREE);
    write_tree(&d.join("corpus"), "b", "G", &[(None, "X"), (Some(0), "Y"), (Some(1), "Z")]);
    assert!(psast(&["stats", "corpus", "--out", "s1"], d).status.success());
    assert_eq!(
        read(d.join("s1/stats.tsv")),
        "script_id\tfamily\tdepth\tnode_count\na\tF\t2\t3\nb\tG\t3\t3\nTOTAL\t2\t3\t6\n"
    );

    std::fs::remove_file(d.join("corpus/b.ast.tsv")).unwrap();
    std::fs::write(d.join("corpus/broken.ast.tsv"), "0\t5\tX\n").unwrap();
    let out = psast(&["stats", "corpus", "--out", "s2"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.ast.tsv"));
    let tsv = read(d.join("s2/stats.tsv"));
    assert_eq!(tsv.lines().filter(|l| !l.starts_with("TOTAL")).count(), 2);
}

#[test]
fn subtree_counts_and_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir_all(d.join("one")).unwrap();
    write_tree(&d.join("one"), "a", "F", THREE);
    assert!(psast(&["subtrees", "one", "--out", "o1"], d).status.success());
    let m: Value = serde_json::from_str(&read(d.join("o1/manifest.json"))).unwrap();
    assert_eq!((m["summary"]["total"].as_u64(), m["summary"]["unique"].as_u64()), (Some(1), Some(1)));

    std::fs::create_dir_all(d.join("dup")).unwrap();
    for name in ["a", "b", "c"] {
        write_tree(&d.join("dup"), name, "F", THREE);
    }
    assert!(psast(&["subtrees", "dup", "--out", "o2"], d).status.success());
    let m: Value = serde_json::from_str(&read(d.join("o2/manifest.json"))).unwrap();
    assert_eq!((m["summary"]["total"].as_u64(), m["summary"]["unique"].as_u64()), (Some(3), Some(1)));

    assert!(psast(&["subtrees", "dup", "--sample", "3", "--out", "o3"], d).status.success());
    assert_eq!(read(d.join("o3/subtrees.json")), read(d.join("o2/subtrees.json")));
    assert!(!psast(&["subtrees", "dup", "--sample", "4", "--out", "o4"], d).status.success());
}

#[test]
fn neighbors_report_duplicate_columns_first() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let types = NodeTypeTable::from_names(["A", "B", "C", "D"]).unwrap();
    let mut model: EmbeddingModel =
        init_model(&types, &TrainConfig { n_f: 3, init_scale: 1.0, ..TrainConfig::default() }).unwrap();
    let copy = model.vectors.row(1).to_vec();
    model.vectors.row_mut(3).copy_from_slice(&copy);
    model.save(&d.join("model.json")).unwrap();
    assert!(psast(&["neighbors", "--model", "model.json", "-m", "2", "--out", "nb"], d).status.success());
    let tsv = read(d.join("nb/neighbors.tsv"));
    assert!(tsv.lines().any(|l| l == "B\t1\tD\t0"), "{tsv}");
    assert!(tsv.lines().any(|l| l == "D\t1\tB\t0"), "{tsv}");
}

#[test]
fn synth_writes_one_file_per_script() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(psast(&["synth", "--out", "corpus"], d).status.success());
    let files = std::fs::read_dir(d.join("corpus"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(FILE_EXTENSION))
        .count();
    assert_eq!(files, 800);
    assert!(!psast(&["synth", "--twin", "NoSuchAst,CommandAst", "--out", "bad"], d).status.success());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("config.json"),
        r#"{"seed": 9, "out_dir": "from_config", "synth": {"families": 2, "scripts_per_family": 3}}"#,
    )
    .unwrap();
    assert!(psast(&["synth", "--config", "config.json", "--scripts", "4"], d).status.success());
    let m: Value = serde_json::from_str(&read(d.join("from_config/manifest.json"))).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["summary"]["scripts"], 8);
    assert_eq!(m["config"]["synth"]["families"], 2);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);

    assert!(psast(&["synth", "--config", "config.json", "--seed", "1", "--out", "flag"], d).status.success());
    let m: Value = serde_json::from_str(&read(d.join("flag/manifest.json"))).unwrap();
    assert_eq!(m["seed"], 1);

    std::fs::write(d.join("typo.json"), r#"{"seeed": 1}"#).unwrap();
    assert_eq!(psast(&["synth", "--config", "typo.json"], d).status.code(), Some(2));
}

#[test]
fn classify_reports_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(psast(&["synth", "--scripts", "60", "--out", "corpus"], d).status.success());
    assert!(psast(&["classify", "corpus", "--trees", "20", "--out", "cls"], d).status.success());
    let report: Value = serde_json::from_str(&read(d.join("cls/report.json"))).unwrap();
    assert!(report["cv_mean_accuracy"].as_f64().unwrap() >= 0.85);
    assert_eq!(report["class_counts"].as_array().unwrap().len(), 8);
    let csv = read(d.join("cls/confusion.csv"));
    let total: usize = csv
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(1).map(|x| x.parse::<usize>().unwrap()))
        .sum();
    assert_eq!(total, report["test_size"].as_u64().unwrap() as usize);
    for f in ["forest.json", "heatmap.txt", "manifest.json"] {
        assert!(d.join("cls").join(f).exists());
    }
}
