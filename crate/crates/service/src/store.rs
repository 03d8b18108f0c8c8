//! On-disk session persistence: one envelope and one transcript per session.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use mergebo_core::Session;

use crate::error::{ApiError, Result};
use crate::state::SessionRecordEnvelope;

fn io_err(path: &Path, e: impl std::fmt::Display) -> ApiError {
    ApiError::Internal(format!("{}: {e}", path.display()))
}

pub fn envelope_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.session.json"))
}

pub fn transcript_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

pub fn save_envelope(dir: &Path, envelope: &SessionRecordEnvelope) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = envelope_path(dir, &envelope.session_id);
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), envelope).map_err(|e| io_err(&path, e))
}

/// Writes the full transcript through a temporary file so a crash never
/// leaves a truncated log behind.
pub fn save_transcript(dir: &Path, id: &str, session: &Session) -> Result<()> {
    let path = transcript_path(dir, id);
    let tmp = path.with_extension("jsonl.tmp");
    let file = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    session
        .write_transcript(BufWriter::new(file))
        .map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))
}

/// Every persisted session, rebuilt by replaying its transcript.
pub fn load_all(dir: &Path) -> Result<Vec<(SessionRecordEnvelope, Session)>> {
    let mut out = Vec::new();
    let entries = match fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(io_err(dir, e)),
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".session.json"))
        .collect();
    paths.sort();
    for path in paths {
        let file = File::open(&path).map_err(|e| io_err(&path, e))?;
        let envelope: SessionRecordEnvelope =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| io_err(&path, e))?;
        let tpath = transcript_path(dir, &envelope.session_id);
        let file = File::open(&tpath).map_err(|e| io_err(&tpath, e))?;
        let session = Session::replay_jsonl(BufReader::new(file)).map_err(|e| io_err(&tpath, e))?;
        log::info!(
            "recovered session {} ({} events)",
            envelope.session_id,
            session.events().len()
        );
        out.push((envelope, session));
    }
    Ok(out)
}
