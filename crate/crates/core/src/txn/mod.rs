//! Single-statement write transactions.
//!
//! Every write to a relation inside a rooted tree holds exactly one lock: the
//! lock-table row of the root tuple its row descends from. Inserts and
//! deletes lock, write one row per table, and release. Updates follow six
//! steps (lock, read, mark, apply, unmark, release) so concurrent readers can
//! detect and skip half-applied view rows. Each statement is logged before it
//! runs and replayed on recovery if its commit record is missing.

mod wal;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub use wal::{decode_records, Phase, Wal, WalRecord};

use crate::design::{lock_table_name, Design, LOCK_COLUMN};
use crate::error::{Error, Result};
use crate::maintenance::{
    build_delete_index_keys, build_insert_view_tuple, delete_applies, insert_applies, insert_tuple,
    key_values, plan_row_and_indexes, plan_update_rows, row_matches, update_assignments, RowChange,
};
use crate::schema::{write_rejection, RelationDef, SchemaEdge};
use crate::sqlparse::{parse_statement, render_statement, Filter, Statement};
use crate::storage::{encode_key, Row, RowKey, RowReader, Store, TableKind};
use crate::value::{Cells, Value};

/// Locates the root tuple whose lock covers a row of `relation` holding
/// `cells`, walking foreign keys upward through the rooted tree. `None` when
/// the relation lies in no tree.
pub fn resolve_root(
    design: &Design,
    relation: &str,
    cells: &Cells,
    reader: &dyn RowReader,
) -> Result<Option<(String, RowKey)>> {
    let Some(tree) = design.tree_of(relation) else {
        return Ok(None);
    };
    let path = tree.path_to(relation).expect("relation is in its tree");
    let mut current = cells.clone();
    for edge in path.edges.iter().rev() {
        let parent = design.schema.require(&edge.from)?;
        let key = foreign_key_target(parent, edge, &current)?;
        if edge.from == tree.root {
            return Ok(Some((tree.root.clone(), key)));
        }
        match reader.read_row(&edge.from, &key)? {
            Some(row) => current = row.cells,
            None => {
                return Err(Error::Orphan {
                    relation: edge.from.clone(),
                })
            }
        }
    }
    let root = design.spec(&tree.root)?;
    Ok(Some((tree.root.clone(), root.key_of(&current)?)))
}

fn foreign_key_target(parent: &RelationDef, edge: &SchemaEdge, child: &Cells) -> Result<RowKey> {
    let values = parent
        .primary_key
        .iter()
        .map(|pk| {
            let (_, fk) = edge
                .pairs()
                .find(|(p, _)| p == pk)
                .expect("foreign key covers the parent key");
            child
                .get(fk)
                .cloned()
                .ok_or_else(|| Error::UnknownAttribute(fk.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    encode_key(&values)
}

#[derive(Debug, Clone)]
pub struct LockConfig {
    pub timeout: Duration,
    pub min_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for LockConfig {
    fn default() -> Self {
        LockConfig {
            timeout: Duration::from_secs(10),
            min_backoff: Duration::from_micros(10),
            max_backoff: Duration::from_millis(1),
        }
    }
}

#[derive(Debug, Default)]
pub struct LockStats {
    pub acquisitions: AtomicU64,
    pub releases: AtomicU64,
    pub contended: AtomicU64,
}

/// Row locks kept in per-root lock tables, taken with check-and-put.
pub struct LockManager {
    store: Arc<Store>,
    config: LockConfig,
    pub stats: LockStats,
}

impl LockManager {
    pub fn new(store: Arc<Store>, config: LockConfig) -> Self {
        LockManager {
            store,
            config,
            stats: LockStats::default(),
        }
    }

    /// Spins on `false -> true` with exponential backoff. With `create`, an
    /// absent lock row is created already held (first insert of a root row).
    pub fn acquire(&self, table: &str, key: &RowKey, create: bool) -> Result<()> {
        let held = Value::Bool(true);
        let free = Value::Bool(false);
        let deadline = Instant::now() + self.config.timeout;
        let mut backoff = self.config.min_backoff;
        let mut first = true;
        loop {
            if create
                && self
                    .store
                    .check_and_put(table, key, LOCK_COLUMN, None, held.clone())?
            {
                break;
            }
            if self
                .store
                .check_and_put(table, key, LOCK_COLUMN, Some(&free), held.clone())?
            {
                break;
            }
            if !create && self.store.get(table, key)?.is_none() {
                return Err(Error::Orphan {
                    relation: table.to_string(),
                });
            }
            if first {
                self.stats.contended.fetch_add(1, Ordering::Relaxed);
                first = false;
            }
            if Instant::now() >= deadline {
                return Err(Error::LockTimeout {
                    table: table.to_string(),
                });
            }
            std::thread::sleep(backoff);
            backoff = (backoff * 2).min(self.config.max_backoff);
        }
        self.stats.acquisitions.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    pub fn release(&self, table: &str, key: &RowKey) -> Result<()> {
        self.store.check_and_put(
            table,
            key,
            LOCK_COLUMN,
            Some(&Value::Bool(true)),
            Value::Bool(false),
        )?;
        self.stats.releases.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    /// Releases a held lock by removing its row (the root row is gone).
    pub fn release_and_remove(&self, table: &str, key: &RowKey) -> Result<()> {
        self.store
            .check_and_delete(table, key, LOCK_COLUMN, &Value::Bool(true))?;
        self.stats.releases.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    pub fn is_held(&self, table: &str, key: &RowKey) -> Result<bool> {
        Ok(self
            .store
            .get(table, key)?
            .is_some_and(|r| r.cells.get(LOCK_COLUMN) == Some(&Value::Bool(true))))
    }
}

/// The six steps of an update, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UpdateStep {
    Lock,
    Read,
    Mark,
    Apply,
    Unmark,
    Release,
}

impl UpdateStep {
    pub const ALL: [UpdateStep; 6] = [
        UpdateStep::Lock,
        UpdateStep::Read,
        UpdateStep::Mark,
        UpdateStep::Apply,
        UpdateStep::Unmark,
        UpdateStep::Release,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteKind {
    Insert,
    Delete,
    Update,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxnResult {
    pub txn_id: u64,
    pub kind: WriteKind,
    pub relation: String,
    /// Root tuple whose lock covered the write.
    pub root: Option<(String, RowKey)>,
    /// Locks acquired by this transaction.
    pub locks: usize,
    /// Rows written or removed across base, view, index and lock tables.
    pub rows: usize,
    /// False when the targeted row did not exist (or did not match).
    pub applied: bool,
    /// Update steps completed, in order.
    pub steps: Vec<UpdateStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RecoveryReport {
    pub replayed: Vec<u64>,
    pub locks_cleared: usize,
}

enum Prepared {
    Insert {
        rel: String,
        tuple: Cells,
    },
    Delete {
        rel: String,
        pk: Vec<Value>,
        filters: Vec<Filter>,
    },
    Update {
        rel: String,
        pk: Vec<Value>,
        set: Cells,
        filters: Vec<Filter>,
    },
}

impl Prepared {
    fn relation(&self) -> &str {
        match self {
            Prepared::Insert { rel, .. }
            | Prepared::Delete { rel, .. }
            | Prepared::Update { rel, .. } => rel,
        }
    }

    fn kind(&self) -> WriteKind {
        match self {
            Prepared::Insert { .. } => WriteKind::Insert,
            Prepared::Delete { .. } => WriteKind::Delete,
            Prepared::Update { .. } => WriteKind::Update,
        }
    }
}

struct Ctx {
    replay: bool,
    crash_after: Option<UpdateStep>,
    result: TxnResult,
}

impl Ctx {
    fn step(&mut self, s: UpdateStep) -> Result<()> {
        self.result.steps.push(s);
        if self.crash_after == Some(s) {
            return Err(Error::Crashed(format!("{s:?}")));
        }
        Ok(())
    }
}

pub struct TxnManager {
    design: Arc<Design>,
    store: Arc<Store>,
    wal: Wal,
    next_id: AtomicU64,
    pub locks: LockManager,
}

impl TxnManager {
    pub fn new(design: Arc<Design>, store: Arc<Store>, wal: Wal) -> Result<TxnManager> {
        Self::with_config(design, store, wal, LockConfig::default())
    }

    pub fn with_config(
        design: Arc<Design>,
        store: Arc<Store>,
        wal: Wal,
        config: LockConfig,
    ) -> Result<TxnManager> {
        let next = wal.high_water_mark()? + 1;
        Ok(TxnManager {
            locks: LockManager::new(store.clone(), config),
            design,
            store,
            wal,
            next_id: AtomicU64::new(next),
        })
    }

    pub fn design(&self) -> &Arc<Design> {
        &self.design
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn wal(&self) -> &Wal {
        &self.wal
    }

    pub fn execute_write(&self, stmt: &Statement) -> Result<TxnResult> {
        self.execute_inner(stmt, None)
    }

    /// Runs a write but stops right after `step`, as if the process died:
    /// the lock stays held and no commit record is written. Inserts and
    /// deletes pass only through `Lock`, `Apply` and `Release`.
    pub fn execute_with_crash(&self, stmt: &Statement, step: UpdateStep) -> Result<TxnResult> {
        self.execute_inner(stmt, Some(step))
    }

    fn prepare(&self, stmt: &Statement) -> Result<Prepared> {
        if !stmt.is_write() {
            return Err(Error::Unsupported("SELECT is not a write".into()));
        }
        let needed = stmt.placeholder_count();
        if needed > 0 {
            return Err(Error::Parameters { needed, given: 0 });
        }
        if let Some(reason) = write_rejection(&self.design.schema, stmt) {
            return Err(Error::Unsupported(reason));
        }
        let schema = &self.design.schema;
        Ok(match stmt {
            Statement::Insert(i) => {
                let rel = schema.require(&i.table)?;
                Prepared::Insert {
                    rel: rel.name.clone(),
                    tuple: insert_tuple(rel, i)?,
                }
            }
            Statement::Delete(d) => {
                let rel = schema.require(&d.table)?;
                Prepared::Delete {
                    rel: rel.name.clone(),
                    pk: key_values(rel, &d.filters)?,
                    filters: d.filters.clone(),
                }
            }
            Statement::Update(u) => {
                let rel = schema.require(&u.table)?;
                Prepared::Update {
                    rel: rel.name.clone(),
                    pk: key_values(rel, &u.filters)?,
                    set: update_assignments(rel, u)?,
                    filters: u.filters.clone(),
                }
            }
            Statement::Select(_) => unreachable!(),
        })
    }

    fn execute_inner(
        &self,
        stmt: &Statement,
        crash_after: Option<UpdateStep>,
    ) -> Result<TxnResult> {
        let prepared = self.prepare(stmt)?;
        let txn_id = self.next_id.fetch_add(1, Ordering::SeqCst);
        self.wal
            .append(txn_id, Phase::Begin, &render_statement(stmt))?;
        let mut ctx = Ctx {
            replay: false,
            crash_after,
            result: self.empty_result(txn_id, &prepared),
        };
        match self.run(&prepared, &mut ctx) {
            Ok(()) => {
                self.wal.append(txn_id, Phase::Commit, "")?;
                Ok(ctx.result)
            }
            Err(e @ Error::Crashed(_)) => Err(e),
            Err(e) => {
                self.wal.append(txn_id, Phase::Abort, "")?;
                Err(e)
            }
        }
    }

    fn empty_result(&self, txn_id: u64, p: &Prepared) -> TxnResult {
        TxnResult {
            txn_id,
            kind: p.kind(),
            relation: p.relation().to_string(),
            root: None,
            locks: 0,
            rows: 0,
            applied: false,
            steps: Vec::new(),
        }
    }

    fn run(&self, p: &Prepared, ctx: &mut Ctx) -> Result<()> {
        match p {
            Prepared::Insert { rel, tuple } => self.run_insert(rel, tuple, ctx),
            Prepared::Delete { rel, pk, filters } => self.run_delete(rel, pk, filters, ctx),
            Prepared::Update {
                rel,
                pk,
                set,
                filters,
            } => self.run_update(rel, pk, set, filters, ctx),
        }
    }

    fn lock(&self, root: &Option<(String, RowKey)>, create: bool, ctx: &mut Ctx) -> Result<()> {
        if let (Some((r, key)), false) = (root, ctx.replay) {
            self.locks.acquire(&lock_table_name(r), key, create)?;
            ctx.result.locks += 1;
        }
        ctx.result.root = root.clone();
        Ok(())
    }

    fn unlock(&self, root: &Option<(String, RowKey)>, remove: bool, ctx: &mut Ctx) -> Result<()> {
        if let (Some((r, key)), false) = (root, ctx.replay) {
            let table = lock_table_name(r);
            if remove {
                self.locks.release_and_remove(&table, key)?;
            } else {
                self.locks.release(&table, key)?;
            }
        }
        Ok(())
    }

    /// Runs `body` while holding the lock, releasing it if `body` fails.
    fn locked<T>(
        &self,
        root: &Option<(String, RowKey)>,
        ctx: &mut Ctx,
        body: impl FnOnce(&mut Ctx) -> Result<T>,
    ) -> Result<T> {
        match body(ctx) {
            Err(e) if !matches!(e, Error::Crashed(_)) => {
                self.unlock(root, false, ctx)?;
                Err(e)
            }
            other => other,
        }
    }

    fn put_with_indexes(&self, table: &str, cells: &Cells, ctx: &mut Ctx) -> Result<()> {
        let spec = self.design.spec(table)?;
        for (_, ix) in self.design.catalog.indexes_of(table) {
            self.store
                .put(ix.name(), Row::new(ix.key_of(cells)?, ix.project(cells)))?;
            ctx.result.rows += 1;
        }
        self.store
            .put(table, Row::new(spec.key_of(cells)?, spec.project(cells)))?;
        ctx.result.rows += 1;
        Ok(())
    }

    fn run_insert(&self, rel: &str, tuple: &Cells, ctx: &mut Ctx) -> Result<()> {
        let design = &self.design;
        let is_root = design.tree_of(rel).is_some_and(|t| t.root == rel);
        let root = resolve_root(design, rel, tuple, &*self.store)?;
        self.lock(&root, is_root, ctx)?;
        ctx.step(UpdateStep::Lock)?;
        let key = design.spec(rel)?.key_of(tuple)?;
        self.locked(&root, ctx, |ctx| {
            if !ctx.replay && self.store.get(rel, &key)?.is_some() {
                return Err(Error::DuplicateKey {
                    table: rel.to_string(),
                });
            }
            self.put_with_indexes(rel, tuple, ctx)?;
            for mv in design
                .views_containing(rel)
                .filter(|v| insert_applies(&v.view, rel))
            {
                if let Some(row) = build_insert_view_tuple(design, &mv.view, tuple, &*self.store)? {
                    self.put_with_indexes(&mv.name(), &row.cells, ctx)?;
                }
            }
            ctx.step(UpdateStep::Apply)
        })?;
        if is_root && ctx.replay {
            // a replayed root insert leaves its lock row in place, free
            let (r, k) = root.as_ref().expect("root relation has a root");
            self.store.check_and_put(
                &lock_table_name(r),
                k,
                LOCK_COLUMN,
                None,
                Value::Bool(false),
            )?;
        }
        self.unlock(&root, false, ctx)?;
        ctx.step(UpdateStep::Release)?;
        ctx.result.applied = true;
        Ok(())
    }

    fn run_delete(&self, rel: &str, pk: &[Value], filters: &[Filter], ctx: &mut Ctx) -> Result<()> {
        let design = &self.design;
        let key = encode_key(pk)?;
        let before = self.store.get(rel, &key)?;
        let root = match &before {
            Some(row) if row_matches(&row.cells, filters)? => {
                resolve_root(design, rel, &row.cells, &*self.store)?
            }
            _ if ctx.replay => None,
            _ => return Ok(()),
        };
        self.lock(&root, false, ctx)?;
        ctx.step(UpdateStep::Lock)?;
        let is_root = design.tree_of(rel).is_some_and(|t| t.root == rel);
        let applied = self.locked(&root, ctx, |ctx| {
            let current = self.store.get(rel, &key)?;
            if !ctx.replay
                && !current
                    .as_ref()
                    .is_some_and(|r| row_matches(&r.cells, filters).unwrap_or(false))
            {
                return Ok(false);
            }
            for mv in design
                .views_containing(rel)
                .filter(|v| delete_applies(&v.view, rel))
            {
                for (ix, ix_key) in build_delete_index_keys(design, &mv.view, &key, &*self.store)? {
                    ctx.result.rows += self.store.delete(&ix, &ix_key)? as usize;
                }
                ctx.result.rows += self.store.delete(&mv.name(), &key)? as usize;
            }
            if let Some(row) = current {
                for (_, ix) in design.catalog.indexes_of(rel) {
                    ctx.result.rows +=
                        self.store.delete(ix.name(), &ix.key_of(&row.cells)?)? as usize;
                }
                ctx.result.rows += self.store.delete(rel, &key)? as usize;
            }
            ctx.step(UpdateStep::Apply)?;
            Ok(true)
        })?;
        if is_root && ctx.replay {
            self.store.delete(&lock_table_name(rel), &key)?;
        }
        self.unlock(&root, applied && is_root, ctx)?;
        if applied {
            ctx.step(UpdateStep::Release)?;
        }
        ctx.result.applied = applied;
        Ok(())
    }

    fn run_update(
        &self,
        rel: &str,
        pk: &[Value],
        set: &Cells,
        filters: &[Filter],
        ctx: &mut Ctx,
    ) -> Result<()> {
        let design = &self.design;
        let key = encode_key(pk)?;
        let Some(before) = self.store.get(rel, &key)? else {
            return Ok(());
        };
        let root = resolve_root(design, rel, &before.cells, &*self.store)?;

        self.lock(&root, false, ctx)?;
        ctx.step(UpdateStep::Lock)?;

        let plan = self.locked(&root, ctx, |ctx| {
            let Some(current) = self.store.get(rel, &key)? else {
                return Ok(None);
            };
            if !row_matches(&current.cells, filters)? {
                return Ok(None);
            }
            let mut plan: Vec<RowChange> = Vec::new();
            for mv in design.views_containing(rel) {
                plan.extend(plan_update_rows(
                    design,
                    &mv.view,
                    rel,
                    pk,
                    set,
                    &*self.store,
                )?);
            }
            plan.extend(plan_row_and_indexes(
                design,
                design.spec(rel)?,
                &current.cells,
                set,
            )?);
            ctx.step(UpdateStep::Read)?;
            Ok(Some(plan))
        })?;
        let Some(plan) = plan else {
            self.unlock(&root, false, ctx)?;
            return Ok(());
        };

        let marked = |c: &RowChange| {
            design
                .spec(&c.table)
                .map(|s| s.handle.kind != TableKind::Base)
                .unwrap_or(true)
        };
        for c in plan.iter().filter(|c| marked(c)) {
            self.store.set_dirty(&c.table, &c.old_key, true)?;
        }
        ctx.step(UpdateStep::Mark)?;

        for c in &plan {
            let row = Row {
                key: c.new_key.clone(),
                cells: c.cells.clone(),
                dirty: marked(c),
            };
            self.store.put(&c.table, row)?;
            if c.rekeys() {
                self.store.delete(&c.table, &c.old_key)?;
            }
            ctx.result.rows += 1;
        }
        ctx.step(UpdateStep::Apply)?;

        for c in plan.iter().filter(|c| marked(c)) {
            self.store.set_dirty(&c.table, &c.new_key, false)?;
        }
        ctx.step(UpdateStep::Unmark)?;

        self.unlock(&root, false, ctx)?;
        ctx.step(UpdateStep::Release)?;
        ctx.result.applied = true;
        Ok(())
    }

    /// Re-executes every logged transaction without a commit or abort
    /// record, then frees every lock left held. Must run before any new
    /// transaction starts.
    pub fn recover(&self) -> Result<RecoveryReport> {
        self.recover_with(false)
    }

    /// Recovery onto a store loaded from a snapshot taken when the log was
    /// last truncated: committed transactions are replayed too, in commit
    /// order, followed by the unfinished ones.
    pub fn recover_from_snapshot(&self) -> Result<RecoveryReport> {
        self.recover_with(true)
    }

    fn recover_with(&self, committed_too: bool) -> Result<RecoveryReport> {
        let mut begun: BTreeMap<u64, String> = BTreeMap::new();
        let mut todo: Vec<(u64, String, bool)> = Vec::new();
        for rec in self.wal.records()? {
            match rec.phase {
                Phase::Begin => {
                    begun.insert(rec.txn_id, rec.statement);
                }
                Phase::Commit => {
                    if let Some(text) = begun.remove(&rec.txn_id) {
                        if committed_too {
                            todo.push((rec.txn_id, text, false));
                        }
                    }
                }
                Phase::Abort => {
                    begun.remove(&rec.txn_id);
                }
            }
        }
        todo.extend(begun.into_iter().map(|(id, text)| (id, text, true)));
        let mut report = RecoveryReport::default();
        for (txn_id, text, unfinished) in todo {
            let stmt = parse_statement(&text)?;
            let prepared = self.prepare(&stmt)?;
            let mut ctx = Ctx {
                replay: true,
                crash_after: None,
                result: self.empty_result(txn_id, &prepared),
            };
            log::info!("replaying transaction {txn_id}: {text}");
            self.run(&prepared, &mut ctx)?;
            if unfinished {
                self.wal.append(txn_id, Phase::Commit, "")?;
            }
            report.replayed.push(txn_id);
        }
        for root in &self.design.roots {
            let table = lock_table_name(root);
            for row in self.store.scan_all(&table)? {
                if row.cells.get(LOCK_COLUMN) == Some(&Value::Bool(true)) {
                    self.locks.release(&table, &row.key)?;
                    report.locks_cleared += 1;
                }
            }
        }
        Ok(report)
    }
}
