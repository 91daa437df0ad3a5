//! Regenerates `scenarios/*.json` from the built-in presets.

use std::path::Path;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    std::fs::create_dir_all(&dir)?;
    for s in trackreg_harness::presets::all() {
        let path = dir.join(format!("{}.json", s.name));
        std::fs::write(&path, serde_json::to_string_pretty(&s)? + "\n")?;
        println!("{}", path.display());
    }
    Ok(())
}
