//! Consistency check of a quiescent store: every view and index is
//! recomputed from the base tables and compared row by row.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::design::{lock_table_name, Design, LOCK_COLUMN};
use crate::error::Result;
use crate::storage::{RowKey, Store};
use crate::value::{Cells, Value};
use crate::viewgen::CandidateView;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TableDiff {
    pub table: String,
    pub expected: usize,
    pub missing: usize,
    pub unexpected: usize,
    pub mismatched: usize,
}

impl TableDiff {
    pub fn is_clean(&self) -> bool {
        self.missing == 0 && self.unexpected == 0 && self.mismatched == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerifyReport {
    pub tables: Vec<TableDiff>,
    pub dirty: BTreeMap<String, usize>,
    pub held_locks: usize,
    pub missing_lock_rows: usize,
    pub stale_lock_rows: usize,
}

impl VerifyReport {
    pub fn diffs(&self) -> usize {
        self.tables.iter().filter(|t| !t.is_clean()).count()
    }

    pub fn dirty_cells(&self) -> usize {
        self.dirty.values().sum()
    }

    pub fn is_clean(&self) -> bool {
        self.diffs() == 0
            && self.dirty_cells() == 0
            && self.held_locks == 0
            && self.missing_lock_rows == 0
            && self.stale_lock_rows == 0
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for t in &self.tables {
            let _ = writeln!(
                s,
                "{} rows={} missing={} unexpected={} mismatched={}",
                t.table, t.expected, t.missing, t.unexpected, t.mismatched
            );
        }
        let _ = writeln!(s, "dirty cells: {}", self.dirty_cells());
        let _ = writeln!(
            s,
            "locks: held={} missing={} stale={}",
            self.held_locks, self.missing_lock_rows, self.stale_lock_rows
        );
        let _ = writeln!(
            s,
            "{}",
            if self.is_clean() {
                "OK"
            } else {
                "INCONSISTENT"
            }
        );
        s
    }
}

/// Inner join of the base tables along the view path.
pub fn recompute_view(design: &Design, view: &CandidateView, store: &Store) -> Result<Vec<Cells>> {
    let mut acc: Vec<Cells> = store
        .scan_all(&view.relations[0])?
        .into_iter()
        .map(|r| r.cells)
        .collect();
    for edge in &view.edges {
        let mut by_fk: HashMap<Vec<Value>, Vec<Cells>> = HashMap::new();
        for r in store.scan_all(&edge.to)? {
            let k: Option<Vec<Value>> = edge.fk.iter().map(|f| r.cells.get(f).cloned()).collect();
            if let Some(k) = k {
                by_fk.entry(k).or_default().push(r.cells);
            }
        }
        let mut next = Vec::new();
        for parent in &acc {
            let k: Option<Vec<Value>> = edge.pk.iter().map(|p| parent.get(p).cloned()).collect();
            for child in k.and_then(|k| by_fk.get(&k)).into_iter().flatten() {
                let mut joined = parent.clone();
                joined.extend(child.iter().map(|(c, v)| (c.clone(), v.clone())));
                next.push(joined);
            }
        }
        acc = next;
    }
    let spec = design.spec(&view.name())?;
    Ok(acc.iter().map(|c| spec.project(c)).collect())
}

fn compare(table: &str, expected: BTreeMap<RowKey, Cells>, store: &Store) -> Result<TableDiff> {
    let mut diff = TableDiff {
        table: table.to_string(),
        expected: expected.len(),
        ..TableDiff::default()
    };
    let mut actual: BTreeMap<RowKey, Cells> = store
        .scan_all(table)?
        .into_iter()
        .map(|r| (r.key, r.cells))
        .collect();
    for (k, cells) in expected {
        match actual.remove(&k) {
            None => diff.missing += 1,
            Some(a) if a != cells => diff.mismatched += 1,
            Some(_) => {}
        }
    }
    diff.unexpected = actual.len();
    Ok(diff)
}

pub fn verify(design: &Design, store: &Store) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let mut contents: BTreeMap<String, BTreeMap<RowKey, Cells>> = BTreeMap::new();

    for rel in &design.schema.relations {
        let rows = store.scan_all(&rel.name)?;
        contents.insert(
            rel.name.clone(),
            rows.into_iter().map(|r| (r.key, r.cells)).collect(),
        );
    }
    for mv in design.views() {
        let spec = design.spec(&mv.name())?;
        let mut expected = BTreeMap::new();
        for cells in recompute_view(design, &mv.view, store)? {
            expected.insert(spec.key_of(&cells)?, cells);
        }
        report
            .tables
            .push(compare(spec.name(), expected.clone(), store)?);
        contents.insert(spec.name().to_string(), expected);
    }
    for ix in &design.catalog.indexes {
        let spec = design.spec(&ix.name)?;
        let mut expected = BTreeMap::new();
        for cells in contents.get(&ix.base).into_iter().flat_map(|m| m.values()) {
            expected.insert(spec.key_of(cells)?, spec.project(cells));
        }
        report.tables.push(compare(&ix.name, expected, store)?);
    }

    for t in &design.catalog.tables {
        let n = store.scan_all(t.name())?.iter().filter(|r| r.dirty).count();
        if n > 0 {
            report.dirty.insert(t.name().to_string(), n);
        }
    }

    for root in &design.roots {
        let lock = lock_table_name(root);
        let locks: BTreeMap<RowKey, Cells> = store
            .scan_all(&lock)?
            .into_iter()
            .map(|r| (r.key, r.cells))
            .collect();
        let roots = &contents[root];
        report.held_locks += locks
            .values()
            .filter(|c| c.get(LOCK_COLUMN) == Some(&Value::Bool(true)))
            .count();
        report.missing_lock_rows += roots.keys().filter(|k| !locks.contains_key(*k)).count();
        report.stale_lock_rows += locks.keys().filter(|k| !roots.contains_key(*k)).count();
    }
    Ok(report)
}
