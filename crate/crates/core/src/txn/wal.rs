//! Write-ahead log: length-prefixed records `{u64 txn_id, u8 phase, statement}`.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Begin,
    Commit,
    /// The transaction failed before touching any data.
    Abort,
}

impl Phase {
    fn tag(self) -> u8 {
        match self {
            Phase::Begin => 0,
            Phase::Commit => 1,
            Phase::Abort => 2,
        }
    }

    fn from_tag(t: u8) -> Option<Phase> {
        match t {
            0 => Some(Phase::Begin),
            1 => Some(Phase::Commit),
            2 => Some(Phase::Abort),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalRecord {
    pub txn_id: u64,
    pub phase: Phase,
    pub statement: String,
}

impl WalRecord {
    fn encode(&self) -> Vec<u8> {
        let body = 9 + self.statement.len();
        let mut out = Vec::with_capacity(4 + body);
        out.extend_from_slice(&(body as u32).to_le_bytes());
        out.extend_from_slice(&self.txn_id.to_le_bytes());
        out.push(self.phase.tag());
        out.extend_from_slice(self.statement.as_bytes());
        out
    }
}

/// Parses a whole log. A record cut short at the very end (a torn append)
/// is dropped with a warning; any other malformation is an error.
pub fn decode_records(bytes: &[u8]) -> Result<Vec<WalRecord>> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let corrupt = |reason: &str| Error::WalCorrupt {
            offset: pos as u64,
            reason: reason.to_string(),
        };
        if bytes.len() - pos < 4 {
            log::warn!("dropping torn record header at WAL offset {pos}");
            break;
        }
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        if len < 9 {
            return Err(corrupt("record shorter than its fixed fields"));
        }
        let Some(body) = bytes.get(pos + 4..pos + 4 + len) else {
            log::warn!("dropping torn record at WAL offset {pos}");
            break;
        };
        let txn_id = u64::from_le_bytes(body[..8].try_into().unwrap());
        let phase = Phase::from_tag(body[8]).ok_or_else(|| corrupt("unknown phase"))?;
        let statement =
            String::from_utf8(body[9..].to_vec()).map_err(|_| corrupt("statement is not UTF-8"))?;
        out.push(WalRecord {
            txn_id,
            phase,
            statement,
        });
        pos += 4 + len;
    }
    Ok(out)
}

enum Sink {
    File { writer: BufWriter<File>, sync: bool },
    Memory(Vec<u8>),
    Disabled,
}

pub struct Wal {
    sink: Mutex<Sink>,
    path: Option<PathBuf>,
}

impl Wal {
    /// Appends to the log at `path`, creating it if needed. With `sync` every
    /// append is flushed to stable storage.
    pub fn open(path: &Path, sync: bool) -> Result<Wal> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Wal {
            sink: Mutex::new(Sink::File {
                writer: BufWriter::new(file),
                sync,
            }),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn in_memory() -> Wal {
        Wal {
            sink: Mutex::new(Sink::Memory(Vec::new())),
            path: None,
        }
    }

    /// A log that records nothing; recovery then has nothing to replay.
    pub fn disabled() -> Wal {
        Wal {
            sink: Mutex::new(Sink::Disabled),
            path: None,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, txn_id: u64, phase: Phase, statement: &str) -> Result<()> {
        let rec = WalRecord {
            txn_id,
            phase,
            statement: statement.to_string(),
        }
        .encode();
        match &mut *self.sink.lock() {
            Sink::File { writer, sync } => {
                writer.write_all(&rec)?;
                writer.flush()?;
                if *sync {
                    writer.get_ref().sync_data()?;
                }
            }
            Sink::Memory(buf) => buf.extend_from_slice(&rec),
            Sink::Disabled => {}
        }
        Ok(())
    }

    /// Every record written so far.
    pub fn records(&self) -> Result<Vec<WalRecord>> {
        let mut sink = self.sink.lock();
        match &mut *sink {
            Sink::File { writer, .. } => {
                writer.flush()?;
                let mut bytes = Vec::new();
                File::open(self.path.as_ref().expect("file sink has a path"))?
                    .read_to_end(&mut bytes)?;
                decode_records(&bytes)
            }
            Sink::Memory(buf) => decode_records(buf),
            Sink::Disabled => Ok(Vec::new()),
        }
    }

    /// Highest transaction id present in the log.
    pub fn high_water_mark(&self) -> Result<u64> {
        Ok(self.records()?.iter().map(|r| r.txn_id).max().unwrap_or(0))
    }

    /// Discards all records, e.g. after a snapshot made them redundant.
    pub fn truncate(&self) -> Result<()> {
        match &mut *self.sink.lock() {
            Sink::File { writer, .. } => {
                writer.flush()?;
                writer.get_ref().set_len(0)?;
            }
            Sink::Memory(buf) => buf.clear(),
            Sink::Disabled => {}
        }
        Ok(())
    }
}
