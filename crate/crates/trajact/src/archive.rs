//! Tracklet archives: newline-delimited JSON, one tracklet per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;
use trajact_core::data::Tracklet;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("line {line}: {source}")]
    Record { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_archive<W: Write>(mut out: W, tracklets: &[Tracklet]) -> Result<(), ArchiveError> {
    for t in tracklets {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn read_archive<R: BufRead>(input: R) -> Result<Vec<Tracklet>, ArchiveError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ArchiveError::Record { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn save(path: &Path, tracklets: &[Tracklet]) -> Result<(), ArchiveError> {
    write_archive(BufWriter::new(File::create(path)?), tracklets)
}

pub fn load(path: &Path) -> Result<Vec<Tracklet>, ArchiveError> {
    read_archive(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use trajact_core::data::State;
    use trajact_core::vocab::{ActionClass, AgentClass};

    #[test]
    fn round_trip() {
        let st = |k: usize| State { t: k as f64 * 0.4, x: 0.1 * k as f64, y: 1.0 / 3.0, vx: 0.25, vy: 0.0, action: ActionClass::WalkBox };
        let t = Tracklet {
            agent_id: "a".into(),
            agent_class: AgentClass::CarrierBox,
            observed: (0..8).map(st).collect(),
            future: (8..20).map(st).collect(),
            source_trajectory_id: "a".into(),
        };
        let mut buf = Vec::new();
        write_archive(&mut buf, &[t.clone(), t.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"source_trajectory_id\":\"a\""));
        assert_eq!(read_archive(buf.as_slice()).unwrap(), vec![t.clone(), t]);
    }

    #[test]
    fn bad_line_reports_its_number() {
        let err = read_archive("\n{\"agent_id\": 1}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, ArchiveError::Record { line: 2, .. }));
    }
}
