//! The tool-call text format, the JSON request line sent to subprocess
//! tools, and the registry manifest.

use audiorouter::toolbus::{self, ToolRequest};
use audiorouter::{ActionId, ToolRegistry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = ToolRegistry::audio_toolkit();
    for text in [
        "<tool_call> chord_recognition </tool_call>",
        "  <tool_call>\ttranscribe\n</tool_call>  ",
        "<tool_call> lyrics_generator </tool_call>",
        "<tool_call>transcribe</tool_call>",
        "<tool_call> two words </tool_call>",
    ] {
        match toolbus::parse_tool_call(text, &registry) {
            Ok(a) => println!("{text:?} -> {a} -> {:?}", toolbus::serialize_tool_call(&a)?),
            Err(e) => println!("{text:?} -> error: {e}"),
        }
    }
    println!("Direct -> {:?}", toolbus::serialize_tool_call(&ActionId::direct()).map_err(|e| e.to_string()));

    let req = ToolRequest::with_audio("clips/q17.wav").param("window", 1024);
    println!("\nrequest line: {}", toolbus::request_line("audio_features", &req));
    println!("response ok:  {:?}", toolbus::parse_response("x", r#"{"status":"ok","result":{"tempo":129.2}}"#));
    println!("response bad: {:?}", toolbus::parse_response("x", "not json"));

    println!("\nmanifest:\n{}", toolbus::manifest_text(&registry));
    Ok(())
}
