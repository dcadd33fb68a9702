//! One-JSON-object-per-line records and the file-backed training observer.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use cipnn_core::training::{EpochMetrics, TrainObserver};
use serde::Serialize;

pub struct JsonlWriter {
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { out: BufWriter::new(f) })
    }

    /// Appends one record and flushes, so partial runs leave complete lines.
    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes every epoch to a JSONL file and a progress line to stderr.
pub struct FileObserver {
    start: Instant,
    writer: Option<JsonlWriter>,
    quiet: bool,
    pub error: Option<anyhow::Error>,
}

impl FileObserver {
    pub fn new(writer: Option<JsonlWriter>, quiet: bool) -> Self {
        Self {
            start: Instant::now(),
            writer,
            quiet,
            error: None,
        }
    }
}

impl TrainObserver for FileObserver {
    fn now(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_epoch(&mut self, m: &EpochMetrics) {
        if !self.quiet {
            let acc = m.test_acc.map(|a| format!(" test_acc {a:.4}")).unwrap_or_default();
            eprintln!("epoch {:>3}  l1 {:.5}  l2 {:.5}{acc}  ({:.1}s)", m.epoch, m.l1, m.l2, m.seconds);
        }
        if let Some(w) = self.writer.as_mut() {
            if let Err(e) = w.write(m) {
                self.error.get_or_insert(e);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let mut obs = FileObserver::new(Some(JsonlWriter::create(&p).unwrap()), true);
        for epoch in 1..=3 {
            obs.on_epoch(&EpochMetrics {
                epoch,
                l1: 0.5 / epoch as f64,
                l2: 0.1,
                test_acc: None,
                seconds: 0.0,
            });
        }
        let text = std::fs::read_to_string(&p).unwrap();
        let rows: Vec<EpochMetrics> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].l1, 0.5 / 3.0);
    }
}
