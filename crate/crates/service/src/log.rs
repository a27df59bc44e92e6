use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use sevscale::Timestamp;

use crate::error::ServiceError;
use crate::events::{Envelope, Event};

/// Append-only JSONL event log. Every append is flushed to disk before the
/// event is applied to in-memory state.
#[derive(Debug)]
pub struct EventLog {
    file: Option<File>,
    path: Option<PathBuf>,
    next_seq: u64,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self {
            file: None,
            path: None,
            next_seq: 1,
        }
    }

    /// Opens or creates the log and returns its events. A torn final line is
    /// cut off; a malformed line anywhere else is an error.
    pub fn open(path: &Path) -> Result<(Self, Vec<Envelope>), ServiceError> {
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)?;
        let complete = text.rfind('\n').map_or("", |end| &text[..=end]);
        if complete.len() != text.len() {
            tracing::warn!(path = %path.display(), dropped = text.len() - complete.len(), "truncating torn log tail");
            file.set_len(complete.len() as u64)?;
        }
        let mut events = Vec::new();
        for (n, line) in complete.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let envelope: Envelope = serde_json::from_str(line)
                .map_err(|e| ServiceError::Storage(format!("{}:{}: {e}", path.display(), n + 1)))?;
            let expected = events.len() as u64 + 1;
            if envelope.seq != expected {
                return Err(ServiceError::Storage(format!(
                    "{}:{}: sequence {} where {expected} was expected",
                    path.display(),
                    n + 1,
                    envelope.seq
                )));
            }
            events.push(envelope);
        }
        let next_seq = events.len() as u64 + 1;
        Ok((
            Self {
                file: Some(file),
                path: Some(path.to_owned()),
                next_seq,
            },
            events,
        ))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&mut self, at: Timestamp, event: Event) -> Result<Envelope, ServiceError> {
        let envelope = Envelope {
            seq: self.next_seq,
            at,
            event,
        };
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_vec(&envelope).map_err(|e| ServiceError::Storage(e.to_string()))?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        self.next_seq += 1;
        Ok(envelope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sevscale::CampaignPolicy;

    fn created() -> Event {
        Event::CampaignCreated {
            campaign_id: "c".into(),
            policy: CampaignPolicy::default(),
        }
    }

    #[test]
    fn reopen_returns_events_and_drops_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let (mut log, events) = EventLog::open(&path).unwrap();
        assert!(events.is_empty());
        log.append(Timestamp::default(), created()).unwrap();
        drop(log);
        std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .unwrap()
            .write_all(b"{\"seq\":2,\"at\":")
            .unwrap();

        let (mut log, events) = EventLog::open(&path).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].event, created());
        assert_eq!(log.append(Timestamp::default(), created()).unwrap().seq, 2);
        drop(log);
        assert_eq!(EventLog::open(&path).unwrap().1.len(), 2);
    }

    #[test]
    fn corrupt_interior_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(EventLog::open(&path), Err(ServiceError::Storage(_))));
    }
}
