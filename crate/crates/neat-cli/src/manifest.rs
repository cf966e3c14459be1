use std::fmt::Display;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

/// Append-only run record written next to a subcommand's outputs.
pub struct Manifest {
    entries: Vec<(String, String)>,
    started: Instant,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut manifest = Manifest {
            entries: Vec::new(),
            started: Instant::now(),
        };
        manifest.push("command", command);
        manifest.push("version", env!("CARGO_PKG_VERSION"));
        manifest
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// Append one `[run]` block to `manifest.txt` in `dir`.
    pub fn append_to(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join("manifest.txt");
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        writeln!(file, "[run]")?;
        for (key, value) in &self.entries {
            writeln!(file, "{key} = {value}")?;
        }
        writeln!(
            file,
            "elapsed_seconds = {:.3}\n",
            self.started.elapsed().as_secs_f64()
        )?;
        Ok(())
    }
}
