//! Snapshot file: a stream of length-prefixed `(table, key, column, value)`
//! records. Every row contributes one record per cell plus a `_dirty` record,
//! so rows without cells survive a round trip.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Row, RowKey, Store, DIRTY_COLUMN};
use crate::error::{Error, Result};
use crate::value::{Cells, Value};

const MAGIC: &[u8; 8] = b"SYNSNAP1";

pub fn save_snapshot(store: &Store, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        let mut rec = Vec::new();
        for table in store.table_names() {
            for row in store.scan_all(&table)? {
                for (col, val) in &row.cells {
                    encode_record(&mut rec, &table, &row.key, col, val);
                    w.write_all(&rec)?;
                }
                encode_record(
                    &mut rec,
                    &table,
                    &row.key,
                    DIRTY_COLUMN,
                    &Value::Bool(row.dirty),
                );
                w.write_all(&rec)?;
            }
        }
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Loads records into `store`. Every table named in the file must already exist.
pub fn load_snapshot(store: &Store, path: &Path) -> Result<usize> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::SnapshotCorrupt("missing header".into()))?;
    if &magic != MAGIC {
        return Err(Error::SnapshotCorrupt("bad magic".into()));
    }

    let mut rows = 0;
    let mut current: Option<(String, Row)> = None;
    let mut len_buf = [0u8; 4];
    loop {
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let len = u32::from_le_bytes(len_buf) as usize;
        let mut body = vec![0u8; len];
        r.read_exact(&mut body)
            .map_err(|_| Error::SnapshotCorrupt("truncated record".into()))?;
        let (table, key, col, val) = decode_record(&body)?;

        let same_row = matches!(&current, Some((t, row)) if *t == table && row.key == key);
        if !same_row {
            if let Some((t, row)) = current.take() {
                store.put(&t, row)?;
                rows += 1;
            }
            current = Some((table, Row::new(key, Cells::new())));
        }
        let (_, row) = current.as_mut().expect("row started above");
        if col == DIRTY_COLUMN {
            row.dirty = val == Value::Bool(true);
        } else {
            row.cells.insert(col, val);
        }
    }
    if let Some((t, row)) = current {
        store.put(&t, row)?;
        rows += 1;
    }
    Ok(rows)
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

fn encode_record(out: &mut Vec<u8>, table: &str, key: &RowKey, col: &str, val: &Value) {
    out.clear();
    out.extend_from_slice(&[0; 4]);
    put_bytes(out, table.as_bytes());
    put_bytes(out, key.as_bytes());
    put_bytes(out, col.as_bytes());
    match val {
        Value::Int(v) => {
            out.push(0);
            out.extend_from_slice(&v.to_le_bytes());
        }
        Value::Str(s) => {
            out.push(1);
            put_bytes(out, s.as_bytes());
        }
        Value::Bool(b) => {
            out.push(2);
            out.push(*b as u8);
        }
    }
    let len = (out.len() - 4) as u32;
    out[..4].copy_from_slice(&len.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::SnapshotCorrupt("record shorter than declared".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize;
        self.take(n)
    }

    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec())
            .map_err(|_| Error::SnapshotCorrupt("non UTF-8 string".into()))
    }
}

fn decode_record(body: &[u8]) -> Result<(String, RowKey, String, Value)> {
    let mut c = Cursor { buf: body, pos: 0 };
    let table = c.string()?;
    let key = RowKey::from_bytes(c.bytes()?.to_vec());
    let col = c.string()?;
    let val = match c.take(1)?[0] {
        0 => Value::Int(i64::from_le_bytes(c.take(8)?.try_into().unwrap())),
        1 => Value::Str(c.string()?),
        2 => Value::Bool(c.take(1)?[0] != 0),
        t => return Err(Error::SnapshotCorrupt(format!("unknown value tag {t}"))),
    };
    if c.pos != body.len() {
        return Err(Error::SnapshotCorrupt("trailing bytes in record".into()));
    }
    Ok((table, key, col, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::{encode_key, TableHandle, TableKind};
    use crate::value::AttrType;

    fn setup() -> Store {
        let s = Store::new();
        for name in ["a", "b"] {
            s.create_table(TableHandle {
                name: name.into(),
                kind: TableKind::Base,
                key_columns: vec!["id".into()],
                key_types: vec![AttrType::Int],
            })
            .unwrap();
        }
        s
    }

    #[test]
    fn round_trip_preserves_rows_and_marks() {
        let s = setup();
        for i in 0..50 {
            let key = encode_key(&[Value::Int(i)]).unwrap();
            let mut cells = Cells::new();
            cells.insert("n".into(), Value::Int(i * 2));
            cells.insert("s".into(), Value::Str(format!("row{i}")));
            s.put(
                "a",
                Row {
                    key: key.clone(),
                    cells,
                    dirty: i % 7 == 0,
                },
            )
            .unwrap();
            if i % 3 == 0 {
                s.put("b", Row::new(key, Cells::new())).unwrap();
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.snap");
        save_snapshot(&s, &path).unwrap();

        let t = setup();
        assert_eq!(load_snapshot(&t, &path).unwrap(), 50 + 17);
        for name in ["a", "b"] {
            assert_eq!(s.scan_all(name).unwrap(), t.scan_all(name).unwrap());
        }
    }

    #[test]
    fn missing_table_or_garbage_fails() {
        let s = setup();
        s.put(
            "a",
            Row::new(encode_key(&[Value::Int(1)]).unwrap(), Cells::new()),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.snap");
        save_snapshot(&s, &path).unwrap();
        assert!(matches!(
            load_snapshot(&Store::new(), &path),
            Err(Error::UnknownTable(_))
        ));

        fs::write(&path, b"garbage!").unwrap();
        assert!(matches!(
            load_snapshot(&setup(), &path),
            Err(Error::SnapshotCorrupt(_))
        ));
    }
}
