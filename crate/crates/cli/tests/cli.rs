//! End-to-end checks of the `cces` binary: artifact sets, exit codes,
//! and byte-level determinism.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn cces(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cces"))
        .args(args)
        .output()
        .expect("failed to spawn cces")
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            out.insert(
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).unwrap(),
            );
        }
    }
    out
}

#[test]
fn pipeline_emits_full_artifact_set_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    let run = dir.path().join("run");

    assert_success(&cces(&[
        "generate",
        "--n",
        "6",
        "--seed",
        "11",
        "--out",
        tables.to_str().unwrap(),
    ]));
    assert_success(&cces(&[
        "pipeline",
        "--input",
        tables.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]));

    for file in [
        "stream_order.csv",
        "ccdf.csv",
        "technology.json",
        "tfp.csv",
        "equilibrium_t0.csv",
        "equilibrium_t1.csv",
        "equilibrium_thalf.csv",
        "A_t0.csv",
        "A_t1.csv",
        "A_thalf.csv",
        "labor_intensity.csv",
        "preferences.json",
        "estimation_report.json",
        "accounts.json",
        "effectiveness.csv",
        "manifest.json",
    ] {
        assert!(run.join(file).exists(), "missing artifact {file}");
    }

    // every emitted file is listed in the manifest with a content hash
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    let listed: Vec<String> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["path"].as_str().unwrap().to_string())
        .collect();
    for file in read_dir_bytes(&run).keys() {
        if file != "manifest.json" {
            assert!(listed.contains(file), "{file} missing from manifest");
        }
    }
    for entry in manifest["outputs"].as_array().unwrap() {
        assert_eq!(entry["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn same_config_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    assert_success(&cces(&[
        "generate",
        "--n",
        "5",
        "--seed",
        "3",
        "--out",
        tables.to_str().unwrap(),
    ]));

    let run_a = dir.path().join("a");
    let run_b = dir.path().join("b");
    for run in [&run_a, &run_b] {
        assert_success(&cces(&[
            "pipeline",
            "--input",
            tables.to_str().unwrap(),
            "--shock-size",
            "0.5",
            "--out",
            run.to_str().unwrap(),
        ]));
    }
    let bytes_a = read_dir_bytes(&run_a);
    let bytes_b = read_dir_bytes(&run_b);
    assert_eq!(bytes_a.keys().collect::<Vec<_>>(), bytes_b.keys().collect::<Vec<_>>());
    for (name, content) in &bytes_a {
        assert_eq!(content, &bytes_b[name], "{name} differs between runs");
    }
}

#[test]
fn generate_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert_success(&cces(&[
            "generate",
            "--n",
            "7",
            "--seed",
            "99",
            "--out",
            out.to_str().unwrap(),
        ]));
    }
    assert_eq!(read_dir_bytes(&a), read_dir_bytes(&b));
}

#[test]
fn missing_input_exits_with_io_code_and_names_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = cces(&[
        "order",
        "--input",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("primary_t0.csv"), "stderr: {stderr}");
}

#[test]
fn corrupted_tables_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    assert_success(&cces(&[
        "generate",
        "--n",
        "4",
        "--seed",
        "1",
        "--out",
        tables.to_str().unwrap(),
    ]));
    // break a row balance
    let primary = tables.join("primary_t0.csv");
    let text = std::fs::read_to_string(&primary).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut fields: Vec<String> = lines[1].split(',').map(str::to_string).collect();
    fields[1] = format!("{}", fields[1].parse::<f64>().unwrap() + 5.0);
    lines[1] = fields.join(",");
    std::fs::write(&primary, lines.join("\n") + "\n").unwrap();

    let out = cces(&[
        "calibrate",
        "--input",
        tables.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("balance"), "stderr: {stderr}");
}

#[test]
fn elasticities_emit_square_tables() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    let out = dir.path().join("elast");
    assert_success(&cces(&[
        "generate",
        "--n",
        "5",
        "--seed",
        "8",
        "--out",
        tables.to_str().unwrap(),
    ]));
    assert_success(&cces(&[
        "elasticities",
        "--input",
        tables.to_str().unwrap(),
        "--sector",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]));
    let aues = std::fs::read_to_string(out.join("aues_sector_5.csv")).unwrap();
    let lines: Vec<&str> = aues.lines().collect();
    let cols = lines[0].split(',').count();
    assert_eq!(lines.len(), cols, "square table with header");
    // diagonal is dashed
    for (i, line) in lines.iter().skip(1).enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[i + 1], "-");
    }
    assert!(out.join("mes_sector_5.csv").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(&config_path, "[generate]\nn = 3\nseed = 5\n").unwrap();

    // file only
    let a = dir.path().join("a");
    assert_success(&cces(&[
        "generate",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]));
    let primary_a = std::fs::read_to_string(a.join("primary_t0.csv")).unwrap();
    assert_eq!(primary_a.lines().count(), 4); // header + 3 sectors

    // flag overrides the file
    let b = dir.path().join("b");
    assert_success(&cces(&[
        "generate",
        "--config",
        config_path.to_str().unwrap(),
        "--n",
        "6",
        "--out",
        b.to_str().unwrap(),
    ]));
    let primary_b = std::fs::read_to_string(b.join("primary_t0.csv")).unwrap();
    assert_eq!(primary_b.lines().count(), 7);
}

#[test]
fn shock_accepts_explicit_eta_and_system_subset() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    let out = dir.path().join("shock");
    assert_success(&cces(&[
        "generate",
        "--n",
        "6",
        "--seed",
        "21",
        "--out",
        tables.to_str().unwrap(),
    ]));
    assert_success(&cces(&[
        "shock",
        "--input",
        tables.to_str().unwrap(),
        "--eta",
        "-0.8",
        "--systems",
        "ces,leontief",
        "--emit-outcomes",
        "--out",
        out.to_str().unwrap(),
    ]));
    let eff = std::fs::read_to_string(out.join("effectiveness.csv")).unwrap();
    assert_eq!(eff.lines().count(), 1 + 2 * 6);
    assert!(out.join("outcome_1.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["eta"], -0.8);
    assert_eq!(manifest["config"]["eta_measured"], false);
}
