use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

/// File at `path`, or stdout.
pub fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `# config: {...}` line recording the command and its arguments.
pub fn config_header<T: Serialize>(command: &str, seed: u64, args: &T) -> String {
    let v = serde_json::json!({ "command": command, "seed": seed, "args": args });
    format!("config: {v}")
}

pub fn write_comment(w: &mut dyn Write, text: &str) -> io::Result<()> {
    for line in text.lines() {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

/// Full-precision float for CSV cells; empty for `None`.
pub fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
