//! Writes synthetic walking references, a reaching target and a run config.
//!
//! cargo run --example demo_data -- DIR

use std::path::PathBuf;

use geomotion::io::write_clip;
use geomotion::synthetic::{humanoid, reaching_walk, walk_references};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    let top = humanoid();
    for clip in walk_references(12, 24, 30.0, 7) {
        write_clip(
            &dir.join("refs").join(format!("{}.json", clip.name)),
            &clip,
            &top,
        )?;
    }
    write_clip(
        &dir.join("target.json"),
        &reaching_walk("reach", 20, 30.0, 7),
        &top,
    )?;
    let config = r#"{
  "reference_dir": "refs",
  "target": "target.json",
  "output_dir": "out",
  "generation": { "optimizer": { "gradient_mode": "analytic" } }
}
"#;
    std::fs::write(dir.join("run.json"), config)?;
    println!("wrote demo data to {}", dir.display());
    Ok(())
}
