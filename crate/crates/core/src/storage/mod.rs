//! Embedded ordered key-value store.
//!
//! Tables map encoded row keys to named cells. Every primitive is atomic for
//! the single row it touches. Nothing spans rows: a scan walks the key range
//! in batches and may observe rows written after it started.

mod key;
mod snapshot;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::ops::Bound;
use std::sync::Arc;

use parking_lot::RwLock;

use crate::error::{Error, Result};
use crate::value::{AttrType, Cells, Value};

pub use key::{decode_key, encode_key, RowKey, DELIMITER, ESCAPE};
pub use snapshot::{load_snapshot, save_snapshot};

/// Name of the pseudo-column carrying the dirty mark in snapshots and reports.
pub const DIRTY_COLUMN: &str = "_dirty";

/// Rows a scan copies out per hold of the table lock.
pub const SCAN_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TableKind {
    Base,
    View,
    Index,
    Lock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableHandle {
    pub name: String,
    pub kind: TableKind,
    pub key_columns: Vec<String>,
    pub key_types: Vec<AttrType>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub key: RowKey,
    pub cells: Cells,
    pub dirty: bool,
}

impl Row {
    pub fn new(key: RowKey, cells: Cells) -> Self {
        Row {
            key,
            cells,
            dirty: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Stored {
    cells: Cells,
    dirty: bool,
}

struct Table {
    handle: TableHandle,
    rows: RwLock<BTreeMap<RowKey, Stored>>,
}

#[derive(Default)]
pub struct Store {
    tables: RwLock<HashMap<String, Arc<Table>>>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates a table. Re-creating a table with an identical handle is a no-op.
    pub fn create_table(&self, handle: TableHandle) -> Result<()> {
        let mut tables = self.tables.write();
        if let Some(existing) = tables.get(&handle.name) {
            if existing.handle == handle {
                return Ok(());
            }
            return Err(Error::schema(format!(
                "table `{}` already exists with a different definition",
                handle.name
            )));
        }
        tables.insert(
            handle.name.clone(),
            Arc::new(Table {
                handle,
                rows: RwLock::new(BTreeMap::new()),
            }),
        );
        Ok(())
    }

    pub fn handle(&self, table: &str) -> Result<TableHandle> {
        Ok(self.table(table)?.handle.clone())
    }

    pub fn table_names(&self) -> Vec<String> {
        let mut names: Vec<_> = self.tables.read().keys().cloned().collect();
        names.sort();
        names
    }

    pub fn row_count(&self, table: &str) -> Result<usize> {
        Ok(self.table(table)?.rows.read().len())
    }

    fn table(&self, name: &str) -> Result<Arc<Table>> {
        self.tables
            .read()
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn get(&self, table: &str, key: &RowKey) -> Result<Option<Row>> {
        let t = self.table(table)?;
        let rows = t.rows.read();
        Ok(rows.get(key).map(|s| Row {
            key: key.clone(),
            cells: s.cells.clone(),
            dirty: s.dirty,
        }))
    }

    /// Writes the whole row, replacing any previous version.
    pub fn put(&self, table: &str, row: Row) -> Result<()> {
        let t = self.table(table)?;
        t.rows.write().insert(
            row.key,
            Stored {
                cells: row.cells,
                dirty: row.dirty,
            },
        );
        Ok(())
    }

    /// Returns whether a row was removed.
    pub fn delete(&self, table: &str, key: &RowKey) -> Result<bool> {
        let t = self.table(table)?;
        let removed = t.rows.write().remove(key).is_some();
        Ok(removed)
    }

    /// Overwrites the given cells of an existing row and optionally sets its
    /// dirty mark. Returns false without writing if the row does not exist.
    pub fn merge(
        &self,
        table: &str,
        key: &RowKey,
        cells: &Cells,
        dirty: Option<bool>,
    ) -> Result<bool> {
        let t = self.table(table)?;
        let mut rows = t.rows.write();
        match rows.get_mut(key) {
            Some(stored) => {
                for (c, v) in cells {
                    stored.cells.insert(c.clone(), v.clone());
                }
                if let Some(d) = dirty {
                    stored.dirty = d;
                }
                Ok(true)
            }
            None => Ok(false),
        }
    }

    pub fn set_dirty(&self, table: &str, key: &RowKey, dirty: bool) -> Result<bool> {
        let t = self.table(table)?;
        let mut rows = t.rows.write();
        match rows.get_mut(key) {
            Some(stored) => {
                stored.dirty = dirty;
                Ok(true)
            }
            None => Ok(false),
        }
    }

    /// Atomically adds `delta` to an integer column, creating the row and
    /// column at zero when absent.
    pub fn increment(&self, table: &str, key: &RowKey, column: &str, delta: i64) -> Result<i64> {
        let t = self.table(table)?;
        let mut rows = t.rows.write();
        let stored = rows.entry(key.clone()).or_insert_with(|| Stored {
            cells: Cells::new(),
            dirty: false,
        });
        let current = match stored.cells.get(column) {
            None => 0,
            Some(Value::Int(v)) => *v,
            Some(other) => {
                return Err(Error::TypeMismatch(format!(
                    "cannot increment non-integer column `{column}` holding {other}"
                )))
            }
        };
        let next = current.wrapping_add(delta);
        stored.cells.insert(column.to_string(), Value::Int(next));
        Ok(next)
    }

    /// Atomically writes `new` into `column` if its current value equals
    /// `expected`. `None` stands for an absent row or column.
    pub fn check_and_put(
        &self,
        table: &str,
        key: &RowKey,
        column: &str,
        expected: Option<&Value>,
        new: Value,
    ) -> Result<bool> {
        let t = self.table(table)?;
        let mut rows = t.rows.write();
        let current = rows.get(key).and_then(|s| s.cells.get(column));
        if current != expected {
            return Ok(false);
        }
        rows.entry(key.clone())
            .or_insert_with(|| Stored {
                cells: Cells::new(),
                dirty: false,
            })
            .cells
            .insert(column.to_string(), new);
        Ok(true)
    }

    /// Atomically deletes the row if `column` currently equals `expected`.
    pub fn check_and_delete(
        &self,
        table: &str,
        key: &RowKey,
        column: &str,
        expected: &Value,
    ) -> Result<bool> {
        let t = self.table(table)?;
        let mut rows = t.rows.write();
        if rows.get(key).and_then(|s| s.cells.get(column)) == Some(expected) {
            rows.remove(key);
            return Ok(true);
        }
        Ok(false)
    }

    /// Streams rows with keys in `[start, end)` in ascending key order.
    pub fn scan(
        &self,
        table: &str,
        start: Option<&[u8]>,
        end: Option<&[u8]>,
        filter: Option<RowFilter>,
    ) -> Result<Scanner> {
        let t = self.table(table)?;
        Ok(Scanner {
            table: t,
            next: start.map(|s| Bound::Included(RowKey::from_bytes(s.to_vec()))),
            end: end.map(|e| RowKey::from_bytes(e.to_vec())),
            filter,
            buffer: VecDeque::new(),
            done: false,
        })
    }

    /// Rows whose leading key components encode to `prefix`.
    pub fn scan_prefix(&self, table: &str, prefix: &RowKey) -> Result<Scanner> {
        let (start, end) = prefix.prefix_range();
        self.scan(table, Some(&start), Some(&end), None)
    }

    pub fn scan_all(&self, table: &str) -> Result<Vec<Row>> {
        self.scan(table, None, None, None)?.collect()
    }
}

/// Predicate on a row's cells, applied under the latch before copying.
/// Dirty rows bypass it so readers always notice in-flight writes.
pub type RowFilter = Box<dyn Fn(&Cells) -> bool + Send>;

/// Iterator over a key range. Rows are fetched in batches under a short read
/// latch, so the stream is not a point-in-time snapshot across batches.
pub struct Scanner {
    table: Arc<Table>,
    next: Option<Bound<RowKey>>,
    end: Option<RowKey>,
    filter: Option<RowFilter>,
    buffer: VecDeque<Row>,
    done: bool,
}

impl Scanner {
    fn fill(&mut self) {
        let lower = self.next.take().unwrap_or(Bound::Unbounded);
        let upper = match &self.end {
            Some(e) => Bound::Excluded(e.clone()),
            None => Bound::Unbounded,
        };
        if let (Bound::Included(l) | Bound::Excluded(l), Bound::Excluded(u)) = (&lower, &upper) {
            if l >= u {
                self.done = true;
                return;
            }
        }
        let rows = self.table.rows.read();
        let mut last = None;
        let mut fetched = 0;
        for (k, s) in rows.range((lower, upper)) {
            fetched += 1;
            last = Some(k.clone());
            if s.dirty || self.filter.as_ref().is_none_or(|f| f(&s.cells)) {
                self.buffer.push_back(Row {
                    key: k.clone(),
                    cells: s.cells.clone(),
                    dirty: s.dirty,
                });
            }
            if fetched == SCAN_BATCH {
                break;
            }
        }
        match last {
            Some(k) if fetched == SCAN_BATCH => self.next = Some(Bound::Excluded(k)),
            _ => self.done = true,
        }
    }
}

impl Iterator for Scanner {
    type Item = Result<Row>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.buffer.is_empty() && !self.done {
            self.fill();
        }
        self.buffer.pop_front().map(Ok)
    }
}

/// Read access used by planning code, so callers can instrument or redirect reads.
pub trait RowReader {
    fn read_row(&self, table: &str, key: &RowKey) -> Result<Option<Row>>;
    fn read_prefix(&self, table: &str, prefix: &RowKey) -> Result<Vec<Row>>;
    fn read_all(&self, table: &str) -> Result<Vec<Row>>;
}

impl RowReader for Store {
    fn read_row(&self, table: &str, key: &RowKey) -> Result<Option<Row>> {
        self.get(table, key)
    }

    fn read_prefix(&self, table: &str, prefix: &RowKey) -> Result<Vec<Row>> {
        self.scan_prefix(table, prefix)?.collect()
    }

    fn read_all(&self, table: &str) -> Result<Vec<Row>> {
        self.scan_all(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::thread;

    fn store_with(name: &str) -> Store {
        let s = Store::new();
        s.create_table(TableHandle {
            name: name.into(),
            kind: TableKind::Base,
            key_columns: vec!["k".into()],
            key_types: vec![AttrType::String],
        })
        .unwrap();
        s
    }

    fn k(s: &str) -> RowKey {
        encode_key(&[Value::Str(s.into())]).unwrap()
    }

    fn cells(pairs: &[(&str, Value)]) -> Cells {
        pairs
            .iter()
            .map(|(c, v)| (c.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn put_then_get_returns_identical_row() {
        let s = store_with("t");
        let row = Row::new(k("a"), cells(&[("x", Value::Int(1)), ("y", "z".into())]));
        s.put("t", row.clone()).unwrap();
        assert_eq!(s.get("t", &k("a")).unwrap(), Some(row));
        assert_eq!(s.get("t", &k("b")).unwrap(), None);
    }

    #[test]
    fn unknown_table_is_an_error() {
        let s = Store::new();
        assert!(matches!(
            s.get("nope", &k("a")),
            Err(Error::UnknownTable(_))
        ));
        assert!(matches!(
            s.check_and_put("nope", &k("a"), "c", None, Value::Bool(true)),
            Err(Error::UnknownTable(_))
        ));
    }

    #[test]
    fn scan_is_half_open_and_sorted() {
        let s = store_with("t");
        for key in ["B", "A", "AB", "C"] {
            s.put("t", Row::new(k(key), Cells::new())).unwrap();
        }
        let rows: Vec<_> = s
            .scan("t", Some(b"A"), Some(b"B"), None)
            .unwrap()
            .map(|r| r.unwrap().key)
            .collect();
        assert_eq!(rows, vec![k("A"), k("AB")]);
    }

    #[test]
    fn scan_crosses_batches_in_order() {
        let s = store_with("t");
        for i in 0..(SCAN_BATCH * 3 + 7) {
            s.put(
                "t",
                Row::new(k(&format!("{i:05}")), cells(&[("n", Value::Int(i as i64))])),
            )
            .unwrap();
        }
        let keys: Vec<_> = s
            .scan_all("t")
            .unwrap()
            .into_iter()
            .map(|r| r.key)
            .collect();
        assert_eq!(keys.len(), SCAN_BATCH * 3 + 7);
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        let filtered = s
            .scan(
                "t",
                None,
                None,
                Some(Box::new(|c: &Cells| c["n"].as_int().unwrap() % 10 == 0)),
            )
            .unwrap()
            .count();
        assert_eq!(filtered, (SCAN_BATCH * 3 + 7).div_ceil(10));
    }

    #[test]
    fn increment_rejects_strings() {
        let s = store_with("t");
        assert_eq!(s.increment("t", &k("a"), "n", 5).unwrap(), 5);
        s.merge("t", &k("a"), &cells(&[("s", "x".into())]), None)
            .unwrap();
        assert!(matches!(
            s.increment("t", &k("a"), "s", 1),
            Err(Error::TypeMismatch(_))
        ));
    }

    #[test]
    fn concurrent_increments_are_atomic() {
        let s = Arc::new(store_with("t"));
        let handles: Vec<_> = (0..2)
            .map(|_| {
                let s = s.clone();
                thread::spawn(move || {
                    for _ in 0..1000 {
                        s.increment("t", &k("c"), "n", 1).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(
            s.get("t", &k("c")).unwrap().unwrap().cells["n"],
            Value::Int(2000)
        );
    }

    #[test]
    fn check_and_put_semantics() {
        let s = store_with("lock");
        let key = k("r1");
        // absent row counts as the absent marker
        assert!(s
            .check_and_put("lock", &key, "lock_status", None, false.into())
            .unwrap());
        assert!(s
            .check_and_put(
                "lock",
                &key,
                "lock_status",
                Some(&false.into()),
                true.into()
            )
            .unwrap());
        assert_eq!(
            s.get("lock", &key).unwrap().unwrap().cells["lock_status"],
            Value::Bool(true)
        );
        assert!(!s
            .check_and_put(
                "lock",
                &key,
                "lock_status",
                Some(&false.into()),
                true.into()
            )
            .unwrap());
        assert_eq!(
            s.get("lock", &key).unwrap().unwrap().cells["lock_status"],
            Value::Bool(true)
        );
    }

    #[test]
    fn racing_cas_has_one_winner() {
        let s = Arc::new(store_with("lock"));
        s.put(
            "lock",
            Row::new(k("r"), cells(&[("lock_status", false.into())])),
        )
        .unwrap();
        let winners = Arc::new(AtomicUsize::new(0));
        let barrier = Arc::new(std::sync::Barrier::new(16));
        let handles: Vec<_> = (0..16)
            .map(|_| {
                let (s, w, b) = (s.clone(), winners.clone(), barrier.clone());
                thread::spawn(move || {
                    b.wait();
                    if s.check_and_put(
                        "lock",
                        &k("r"),
                        "lock_status",
                        Some(&false.into()),
                        true.into(),
                    )
                    .unwrap()
                    {
                        w.fetch_add(1, Ordering::SeqCst);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(winners.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn merge_and_dirty_marks() {
        let s = store_with("t");
        assert!(!s.merge("t", &k("a"), &Cells::new(), Some(true)).unwrap());
        s.put("t", Row::new(k("a"), cells(&[("x", Value::Int(1))])))
            .unwrap();
        assert!(s
            .merge("t", &k("a"), &cells(&[("x", Value::Int(2))]), Some(true))
            .unwrap());
        let r = s.get("t", &k("a")).unwrap().unwrap();
        assert!(r.dirty);
        assert_eq!(r.cells["x"], Value::Int(2));
        s.set_dirty("t", &k("a"), false).unwrap();
        assert!(!s.get("t", &k("a")).unwrap().unwrap().dirty);
    }
}
