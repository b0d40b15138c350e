use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use acoustic_sim::dataset::read_manifest;
use acoustic_sim::dsp::Signal;
use acoustic_sim::features::read_tensor;
use acoustic_sim::wav::{read_wav, write_wav};
use sha2::{Digest, Sha256};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acoustic-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["gen", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn digest(dir: &Path) -> String {
    let mut h = Sha256::new();
    h.update(fs::read(dir.join("manifest.jsonl")).unwrap());
    let mut wavs: Vec<_> = fs::read_dir(dir.join("audio")).unwrap().map(|e| e.unwrap().path()).collect();
    wavs.sort();
    for w in wavs {
        h.update(w.file_name().unwrap().to_string_lossy().as_bytes());
        h.update(fs::read(w).unwrap());
    }
    format!("{:x}", h.finalize())
}

#[test]
fn gen_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = gen(&a, &["--tasks", "all", "--n", "4", "--seed", "7", "--json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["written"], 20);
    assert_eq!(read_manifest(&a.join("manifest.jsonl")).unwrap().len(), 20);
    assert_eq!(code(&gen(&b, &["--tasks", "all", "--n", "4", "--seed", "7"])), 0);
    assert_eq!(digest(&a), digest(&b));

    // Rerunning resumes and leaves the files unchanged.
    let o = gen(&a, &["--tasks", "all", "--n", "4", "--seed", "7", "--json"]);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["written"], 0);
    assert_eq!(summary["resumed"], 20);
    assert_eq!(digest(&a), digest(&b));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(code(&gen(&out, &["--n", "2"])), 2);
    assert_eq!(code(&gen(&out, &["--seed", "1"])), 2);
    assert_eq!(code(&gen(&out, &["--seed", "1", "--n", "1", "--tasks", "sonar"])), 2);
    assert_eq!(code(&gen(&out, &["--seed", "1", "--n", "1", "--snr", "loud"])), 2);
    assert_eq!(code(&gen(&out, &["--seed", "1", "--n", "1", "--workers", "0"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["verify", dir.path().join("missing").to_str().unwrap()])), 2);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("ds");
    fs::write(
        &cfg,
        format!(
            r#"{{"master_seed": 3, "n": 2, "tasks": ["los_detection", "range_estimation"], "snr": {{"kind": "noiseless"}}, "out_dir": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = run(&["gen", "--config", cfg.to_str().unwrap(), "--n", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_manifest(&out.join("manifest.jsonl")).unwrap();
    assert_eq!(m.len(), 2);
    assert!(m.iter().all(|e| e.snr_db.is_none() && e.scenario_seed != 0));

    fs::write(&cfg, r#"{"master_seed": 3, "n": 2, "colour": "red"}"#).unwrap();
    assert_eq!(code(&run(&["gen", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn verify_passes_then_names_a_corrupt_file() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    assert_eq!(code(&gen(&ds, &["--n", "3", "--seed", "5", "--snr", "noiseless"])), 0);
    let o = run(&["verify", ds.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));

    let m = read_manifest(&ds.join("manifest.jsonl")).unwrap();
    let victim = &m[4];
    fs::write(ds.join(&victim.audio[0]), b"garbage").unwrap();
    let o = run(&["verify", ds.join("manifest.jsonl").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains(&victim.id));
}

#[test]
fn verify_empty_manifest_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.jsonl");
    fs::write(&m, "").unwrap();
    let o = run(&["verify", m.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));
}

#[test]
fn features_of_ten_seconds() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("x.wav");
    let x: Vec<f64> = (0..160_000).map(|i| (i as f64 * 0.05).sin() * 0.3).collect();
    write_wav(&wav, &[Signal::new(x).unwrap()]).unwrap();
    let t = dir.path().join("x.feat");
    assert_eq!(code(&run(&["features", wav.to_str().unwrap(), t.to_str().unwrap()])), 0);
    let (h, data) = read_tensor(&t).unwrap();
    assert_eq!(h.shape, [3, 1000, 128]);
    assert_eq!(data.len(), 3 * 1000 * 128);
    assert_eq!(code(&run(&["features", wav.to_str().unwrap(), t.to_str().unwrap(), "--channel", "1"])), 2);
}

#[test]
fn score_reference_answers() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    assert_eq!(code(&gen(&ds, &["--n", "4", "--seed", "2"])), 0);
    let m = read_manifest(&ds.join("manifest.jsonl")).unwrap();
    let preds: String = m
        .iter()
        .map(|e| serde_json::json!({"id": e.id, "answer_text": e.answer}).to_string() + "\n")
        .collect();
    let p = dir.path().join("pred.jsonl");
    fs::write(&p, preds).unwrap();
    let o = run(&["score", ds.to_str().unwrap(), p.to_str().unwrap(), "--json"]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for k in ["bca", "tca", "direction_accuracy", "side_accuracy"] {
        assert!(r[k].is_null() || r[k] == 1.0, "{k}: {}", r[k]);
    }
    for k in ["mae_f", "mae_t", "rep"] {
        assert!(r[k].is_null() || r[k] == 0.0, "{k}: {}", r[k]);
    }
    assert!(run(&["score", ds.to_str().unwrap(), p.to_str().unwrap()]).stdout.len() > 100);

    fs::write(&p, "{\"id\":\"nope\",\"answer_text\":\"Yes.\"}\n").unwrap();
    assert_eq!(code(&run(&["score", ds.to_str().unwrap(), p.to_str().unwrap()])), 1);
}

#[test]
fn render_one_doa() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = run(&["render-one", "--task", "doa", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_wav(&out.join("doa-1-0.wav")).unwrap().len(), 2);
    assert_eq!(read_wav(&out.join("doa-1-0-cir.wav")).unwrap().len(), 2);
    let params: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("doa-1-0-params.json")).unwrap()).unwrap();
    assert!(params["scenario"]["array"]["theta_deg"].is_number());
    assert!(params["ground_truth"]["tdoa_samples"].is_number());
    assert!(params["ground_truth"]["tdoa_quantized"].is_i64());
}

#[test]
fn render_one_matches_gen() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    assert_eq!(code(&gen(&ds, &["--n", "3", "--seed", "9", "--tasks", "multipath"])), 0);
    let out = dir.path().join("r");
    let o = run(&[
        "render-one", "--task", "multipath", "--seed", "9", "--index", "2", "--snr", "0:40", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        read_wav(&ds.join("audio/multipath-000002.wav")).unwrap(),
        read_wav(&out.join("multipath-9-2.wav")).unwrap()
    );
}
