//! Native DSP tools on synthesized audio: writes a few WAV files and runs
//! `audio_features`, `duration_analysis` and `temporal_analysis` on them.
//!
//! cargo run --example dsp_features -- [output_dir]

use audiorouter::dsp::{self, synth};
use audiorouter::toolbus::{self, ToolRequest};
use audiorouter::ToolRegistry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&dir)?;
    let sr = 22_050;
    let clips = [
        ("sine_440", synth::sine(440.0, 3.0, sr, 0.5)),
        ("clicks_120bpm", synth::click_track(120.0, 6.0, sr)),
        ("burst_1_2s", synth::tone_burst(660.0, 1.0, 2.0, 3.0, sr)),
        ("silence", synth::silence(2.0, sr)),
        ("clicks_over_tone", synth::mix(&synth::click_track(90.0, 6.0, sr), &synth::sine(220.0, 6.0, sr, 0.2))),
    ];
    let registry = ToolRegistry::audio_toolkit();
    for (name, buf) in &clips {
        let path = dir.join(format!("{name}.wav"));
        dsp::write_wav_pcm16(&path, buf)?;
        println!("== {name} ({:.1} s)", buf.duration_s());
        for tool in ["audio_features", "duration_analysis", "temporal_analysis"] {
            let res = toolbus::invoke(&registry, tool, &ToolRequest::with_audio(path.to_string_lossy()))?;
            match (&res.result, &res.message) {
                (Some(r), _) => println!("  {tool:<18} {}", serde_json::to_string(r)?),
                (None, m) => println!("  {tool:<18} error: {}", m.as_deref().unwrap_or("")),
            }
        }
    }
    Ok(())
}
