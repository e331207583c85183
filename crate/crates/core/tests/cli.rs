use std::path::Path;
use std::process::{Command, Output};

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_audiorouter"))
        .current_dir(dir)
        .args(args)
        .env_remove("AUDIOROUTER_SEED")
        .env_remove("AUDIOROUTER_OUT")
        .env_remove("AUDIOROUTER_CONFIG")
        .env_remove("AUDIOROUTER_WORKERS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup(dir: &Path) {
    let o = bin(dir, &["world-gen", "--preset", "separable", "--seed", "7", "--out", "w.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("instances: 2000"));
    std::fs::write(dir.join("run.json"), r#"{"data":{"world":"w.json"},"seed":7}"#).unwrap();
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    assert_eq!(bin(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(bin(d, &["eval", "--config", "run.json", "--strategy", "bogus"]).status.code(), Some(2));
    assert_eq!(bin(d, &["eval", "--config", "run.json", "--strategy", "always_tool:nope"]).status.code(), Some(2));
    assert_eq!(bin(d, &["eval", "--config", "run.json", "--strategy", "learned"]).status.code(), Some(4));
    assert_eq!(
        bin(d, &["eval", "--config", "run.json", "--strategy", "learned", "--checkpoint", "none.json"]).status.code(),
        Some(4)
    );
    assert_eq!(bin(d, &["train", "--config", "missing.json"]).status.code(), Some(4));

    std::fs::write(d.join("noseed.json"), r#"{"data":{"world":"w.json"}}"#).unwrap();
    assert_eq!(bin(d, &["train", "--config", "noseed.json"]).status.code(), Some(2));
    std::fs::write(d.join("badspec.json"), r#"{"feature_dim": 2}"#).unwrap();
    assert_eq!(bin(d, &["world-gen", "--spec", "badspec.json", "--out", "x.json"]).status.code(), Some(2));
    std::fs::write(d.join("badlr.json"), r#"{"data":{"world":"w.json"},"seed":1,"grpo":{"learning_rate":-1}}"#).unwrap();
    assert_eq!(bin(d, &["train", "--config", "badlr.json"]).status.code(), Some(2));
}

#[test]
fn train_eval_compare_and_text_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let o = bin(d, &["train", "--config", "run.json", "--out", "mm"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["policy.json", "train_log.jsonl", "metrics.json", "run.json"] {
        assert!(d.join("mm").join(f).exists(), "{f}");
    }

    std::fs::write(d.join("text.json"), r#"{"data":{"world":"w.json"},"seed":7,"router_mode":"text_only"}"#).unwrap();
    assert!(bin(d, &["train", "--config", "text.json", "--out", "txt"]).status.success());
    let header: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("txt/run.json")).unwrap()).unwrap();
    assert_eq!(header["router_mode"], "text_only");
    assert!(!header["masked_features"].as_array().unwrap().is_empty());

    let acc = |p: &str| -> f64 {
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join(p)).unwrap()).unwrap();
        m["accuracy"].as_f64().unwrap()
    };
    // capability indicators are audio-derived; without them the router can
    // only follow keywords
    assert!(acc("mm/metrics.json") > acc("txt/metrics.json") + 0.1);

    let o = bin(
        d,
        &["compare", "--config", "run.json", "--out", "cmp", "--strategies", "random,oracle,learned", "--checkpoint", "mm/policy.json"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("cmp/compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(stdout(&o).contains("oracle"));

    let o = bin(d, &["curve", "--config", "run.json", "--out", "cv", "--budgets", "0,200,1600"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(d.join("cv/curve.csv")).unwrap().lines().count(), 4);
    assert_eq!(bin(d, &["curve", "--config", "run.json", "--budgets", "5000"]).status.code(), Some(2));
}

#[test]
fn trace_replay_matches_world_training() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    assert!(bin(d, &["export-traces", "--world", "w.json", "--out", "tr/t.jsonl"]).status.success());
    std::fs::write(
        d.join("replay.json"),
        r#"{"data":{"traces":{"path":"tr/t.jsonl","feature_dict":"tr/t.features.json","manifest":"tr/t.manifest.json"}},"seed":7}"#,
    )
    .unwrap();
    assert!(bin(d, &["train", "--config", "replay.json", "--out", "a"]).status.success());
    assert!(bin(d, &["train", "--config", "run.json", "--out", "b"]).status.success());
    // the traces carry the same realized bits, so training sees the same rewards
    assert_eq!(std::fs::read(d.join("a/metrics.json")).unwrap(), std::fs::read(d.join("b/metrics.json")).unwrap());
}

#[test]
fn tool_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bin(d, &["tool", "parse", "<tool_call> transcribe </tool_call>"]);
    assert_eq!(stdout(&o).trim(), "Tool(transcribe)");
    let o = bin(d, &["tool", "parse", "<tool_call> made_up </tool_call>"]);
    assert_eq!(stdout(&o).trim(), "Decoy(made_up)");
    assert_eq!(bin(d, &["tool", "parse", "<tool_call>transcribe</tool_call>"]).status.code(), Some(2));
    assert_eq!(bin(d, &["tool", "made_up", "x.wav"]).status.code(), Some(2));

    let o = bin(d, &["tool", "audio_features", "missing.wav"]);
    assert_eq!(o.status.code(), Some(0));
    let env: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(env["status"], "error");

    let wav = d.join("a.wav");
    audiorouter::dsp::write_wav_pcm16(&wav, &audiorouter::dsp::synth::sine(440.0, 1.0, 16_000, 0.5)).unwrap();
    let o = bin(d, &["tool", "audio_features", wav.to_str().unwrap()]);
    let env: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(env["status"], "ok");
    assert!((env["result"]["pitch"].as_f64().unwrap() - 440.0).abs() < 1.0);
}
