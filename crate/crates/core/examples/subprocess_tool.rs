//! A tool implemented as an external program speaking the line-delimited
//! JSON protocol, plus what happens when such a tool hangs.

use audiorouter::toolbus::{self, ToolRequest};
use audiorouter::types::Adapter;
use audiorouter::{ToolRegistry, ToolSpec};

const LOUDNESS: &str = r#"
import json, sys
req = json.loads(sys.stdin.readline())
print(json.dumps({"status": "ok", "result": {"file": req["audio_path"], "lufs": -14.0 + req["params"].get("offset", 0)}}))
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("audiorouter-subprocess-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let script = dir.join("loudness.py");
    std::fs::write(&script, LOUDNESS)?;
    let python = |args: &[&str]| args.iter().map(|s| s.to_string()).collect::<Vec<_>>();

    let registry = ToolRegistry::from_specs([
        ToolSpec::simulated("loudness", &["dynamics"])
            .with_description("integrated loudness")
            .with_adapter(Adapter::Subprocess { command: python(&["python3", &script.to_string_lossy()]), timeout_ms: 5000 }),
        ToolSpec::simulated("stuck", &["dynamics"])
            .with_adapter(Adapter::Subprocess { command: python(&["python3", "-c", "import time; time.sleep(30)"]), timeout_ms: 250 }),
        ToolSpec::simulated("crashes", &["dynamics"])
            .with_adapter(Adapter::Subprocess { command: python(&["python3", "-c", "import sys; sys.exit(3)"]), timeout_ms: 5000 }),
    ])?;
    let req = ToolRequest::with_audio("take_3.wav").param("offset", 1.5);
    for name in ["loudness", "stuck", "crashes"] {
        let res = toolbus::invoke(&registry, name, &req)?;
        println!("{}", serde_json::to_string(&res)?);
    }
    Ok(())
}
