//! Concurrent statement streams built from workload templates.
//!
//! Each client thread gets its own pre-generated list of bound statements.
//! The generator keeps every statement valid when threads run in any
//! interleaving:
//! - inserts use fresh keys private to the thread and reference parents
//!   that are never deleted;
//! - deletes only hit leaf relations (nothing references them), and only
//!   rows owned by the thread;
//! - updates touch non-key attributes, and leaf rows only when owned.
//!
//! Every integer assignment of one UPDATE gets the same value, and string
//! assignments get `s<value>`, so readers can detect torn rows.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::Design;
use crate::error::{Error, Result};
use crate::schema::resolve_column;
use crate::session::{Outcome, Session};
use crate::sqlparse::{CompareOp, Literal, Statement};
use crate::storage::Store;
use crate::value::{AttrType, Value};

#[derive(Debug, Clone)]
pub struct MixOptions {
    pub threads: usize,
    /// Total statements over all threads.
    pub statements: usize,
    pub seed: u64,
    /// Half of the row picks come from the first `hot` rows of a relation.
    pub hot: usize,
}

impl Default for MixOptions {
    fn default() -> Self {
        MixOptions {
            threads: 4,
            statements: 1000,
            seed: 42,
            hot: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Job {
    /// Index into the template list.
    pub template: usize,
    pub statement: Statement,
    pub params: Vec<Value>,
}

#[derive(Debug, Clone)]
pub struct Mix {
    pub templates: Vec<Statement>,
    pub threads: Vec<Vec<Job>>,
}

impl Mix {
    pub fn len(&self) -> usize {
        self.threads.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Relations no foreign key points at.
pub fn leaf_relations(design: &Design) -> HashSet<String> {
    let referenced: HashSet<&str> = design
        .schema
        .relations
        .iter()
        .flat_map(|r| r.foreign_keys.iter().map(|f| f.references.as_str()))
        .collect();
    design
        .schema
        .relations
        .iter()
        .filter(|r| !referenced.contains(r.name.as_str()))
        .map(|r| r.name.clone())
        .collect()
}

type Key = Vec<Value>;

/// Sampled contents of the store at generation time.
struct Snapshot {
    keys: HashMap<String, Vec<Key>>,
    columns: HashMap<(String, String), Vec<Value>>,
    next_int: HashMap<(String, String), i64>,
}

impl Snapshot {
    fn take(design: &Design, store: &Store) -> Result<Snapshot> {
        let mut snap = Snapshot {
            keys: HashMap::new(),
            columns: HashMap::new(),
            next_int: HashMap::new(),
        };
        for rel in &design.schema.relations {
            let mut keys = Vec::new();
            for row in store.scan_all(&rel.name)? {
                let key: Key = rel
                    .primary_key
                    .iter()
                    .map(|k| row.cells[k].clone())
                    .collect();
                keys.push(key);
                for a in &rel.attributes {
                    if let Some(Value::Int(v)) = row.cells.get(&a.name) {
                        let e = snap
                            .next_int
                            .entry((rel.name.clone(), a.name.clone()))
                            .or_insert(1);
                        *e = (*e).max(v + 1);
                    }
                }
            }
            keys.sort();
            snap.keys.insert(rel.name.clone(), keys);
        }
        Ok(snap)
    }

    /// Distinct values of one column, for SELECT parameters.
    fn column(&mut self, store: &Store, table: &str, column: &str) -> Result<&[Value]> {
        let key = (table.to_string(), column.to_string());
        if !self.columns.contains_key(&key) {
            let mut vals: Vec<Value> = store
                .scan_all(table)?
                .into_iter()
                .filter_map(|r| r.cells.get(column).cloned())
                .collect();
            vals.sort();
            vals.dedup();
            self.columns.insert(key.clone(), vals);
        }
        Ok(&self.columns[&key])
    }
}

fn pick<'a>(
    rng: &mut ChaCha8Rng,
    shared: &'a [Key],
    own: &'a [Key],
    hot: usize,
) -> Option<&'a Key> {
    let total = shared.len() + own.len();
    if total == 0 {
        return None;
    }
    let hot = hot.min(shared.len());
    let i = if hot > 0 && rng.gen_bool(0.5) {
        rng.gen_range(0..hot)
    } else {
        rng.gen_range(0..total)
    };
    Some(if i < shared.len() {
        &shared[i]
    } else {
        &own[i - shared.len()]
    })
}

struct ThreadState {
    id: usize,
    threads: usize,
    rng: ChaCha8Rng,
    /// Keys this thread inserted into non-leaf relations.
    inserted: HashMap<String, Vec<Key>>,
    /// Live leaf rows this thread may update or delete.
    owned: HashMap<String, Vec<Key>>,
    fresh: HashMap<(String, String), i64>,
}

impl ThreadState {
    fn fresh_value(&mut self, snap: &Snapshot, rel: &str, attr: &str, ty: AttrType) -> Value {
        let slot = (rel.to_string(), attr.to_string());
        let n = self.fresh.entry(slot.clone()).or_insert(0);
        let i = *n;
        *n += 1;
        match ty {
            AttrType::Int => {
                let base = snap.next_int.get(&slot).copied().unwrap_or(1);
                Value::Int(base + (i * self.threads as i64) + self.id as i64)
            }
            AttrType::String => Value::Str(format!("t{}n{i}", self.id)),
        }
    }
}

/// The value written for `v` into a column of type `ty`. Every non-key
/// column a statement writes carries the same `v`, so a reader can tell a
/// row written by one statement from a mix of two.
pub fn stamp(ty: AttrType, v: i64) -> Value {
    match ty {
        AttrType::Int => Value::Int(v),
        AttrType::String => Value::Str(format!("s{v}")),
    }
}

struct Generator<'a> {
    design: &'a Design,
    store: &'a Store,
    snap: Snapshot,
    leaves: HashSet<String>,
    hot: usize,
}

impl Generator<'_> {
    /// A key of a relation whose rows are never deleted.
    fn pick_stable(&self, st: &mut ThreadState, rel: &str) -> Option<Key> {
        let shared = self.snap.keys.get(rel).map(Vec::as_slice).unwrap_or(&[]);
        let own = st.inserted.get(rel).map(Vec::as_slice).unwrap_or(&[]);
        pick(&mut st.rng, shared, own, self.hot).cloned()
    }

    /// A row of `rel` the thread may write to.
    fn pick_row(&self, st: &mut ThreadState, rel: &str) -> Option<Key> {
        if self.leaves.contains(rel) {
            let owned = st.owned.get(rel)?;
            if owned.is_empty() {
                return None;
            }
            let i = st.rng.gen_range(0..owned.len());
            return Some(owned[i].clone());
        }
        self.pick_stable(st, rel)
    }

    fn key_params(
        &self,
        rel: &str,
        key: &Key,
        filters: &[crate::sqlparse::Filter],
    ) -> Option<Vec<Value>> {
        let def = self.design.schema.relation(rel)?;
        let mut out = Vec::new();
        for f in filters.iter().filter(|f| f.value == Literal::Placeholder) {
            if f.op != CompareOp::Eq {
                return None;
            }
            let pos = def.primary_key.iter().position(|k| *k == f.column.column)?;
            out.push(key[pos].clone());
        }
        Some(out)
    }

    fn job(&mut self, st: &mut ThreadState, idx: usize, tpl: &Statement) -> Result<Option<Job>> {
        let schema = &self.design.schema;
        let params = match tpl {
            Statement::Insert(ins) => {
                let rel = schema.require(&ins.table)?;
                let mut chosen: HashMap<&str, Value> = HashMap::new();
                for fk in &rel.foreign_keys {
                    let parent = schema.require(&fk.references)?;
                    let Some(pk) = self.pick_stable(st, &fk.references) else {
                        return Ok(None);
                    };
                    for (a, v) in fk.attributes.iter().zip(pk) {
                        chosen.insert(a, v);
                    }
                    debug_assert_eq!(parent.primary_key.len(), fk.attributes.len());
                }
                let stamp_value = st.rng.gen_range(1..1_000_000);
                let mut params = Vec::new();
                let mut row: BTreeMap<&str, Value> = BTreeMap::new();
                for (col, lit) in ins.columns.iter().zip(&ins.values) {
                    let ty = rel
                        .attr_type(col)
                        .ok_or_else(|| Error::UnknownAttribute(col.clone()))?;
                    let v = if let Some(v) = chosen.get(col.as_str()) {
                        v.clone()
                    } else if rel.primary_key.contains(col) {
                        st.fresh_value(&self.snap, &rel.name, col, ty)
                    } else {
                        stamp(ty, stamp_value)
                    };
                    if *lit == Literal::Placeholder {
                        params.push(v.clone());
                        row.insert(col, v);
                    } else {
                        row.insert(col, lit.to_value().expect("literal"));
                    }
                }
                let Some(key) = rel
                    .primary_key
                    .iter()
                    .map(|k| row.get(k.as_str()).cloned())
                    .collect::<Option<Key>>()
                else {
                    return Ok(None);
                };
                let slot = if self.leaves.contains(&rel.name) {
                    &mut st.owned
                } else {
                    &mut st.inserted
                };
                slot.entry(rel.name.clone()).or_default().push(key);
                params
            }
            Statement::Update(up) => {
                let Some(key) = self.pick_row(st, &up.table) else {
                    return Ok(None);
                };
                let rel = schema.require(&up.table)?;
                let v = st.rng.gen_range(1..1_000_000);
                let mut params = Vec::new();
                for (col, lit) in &up.assignments {
                    if *lit == Literal::Placeholder {
                        params.push(stamp(rel.attr_type(col).unwrap_or(AttrType::Int), v));
                    }
                }
                let Some(keys) = self.key_params(&up.table, &key, &up.filters) else {
                    return Ok(None);
                };
                params.extend(keys);
                params
            }
            Statement::Delete(del) => {
                if !self.leaves.contains(&del.table) {
                    return Ok(None);
                }
                let Some(key) = self.pick_row(st, &del.table) else {
                    return Ok(None);
                };
                let Some(params) = self.key_params(&del.table, &key, &del.filters) else {
                    return Ok(None);
                };
                if let Some(owned) = st.owned.get_mut(&del.table) {
                    owned.retain(|k| *k != key);
                }
                params
            }
            Statement::Select(sel) => {
                let catalog = &self.design.catalog;
                let mut params = Vec::new();
                for f in sel
                    .filters
                    .iter()
                    .filter(|f| f.value == Literal::Placeholder)
                {
                    let (binding, column) = resolve_column(sel, &f.column, |t| {
                        catalog.get(t).map(|s| s.column_names())
                    })?;
                    let table = sel
                        .table_for(&binding)
                        .expect("resolved binding")
                        .name
                        .clone();
                    let vals = self.snap.column(self.store, &table, &column)?;
                    let Some(v) = vals.choose(&mut st.rng).cloned() else {
                        return Ok(None);
                    };
                    params.push(v);
                }
                params
            }
        };
        Ok(Some(Job {
            template: idx,
            statement: tpl.clone(),
            params,
        }))
    }
}

/// Splits `opts.statements` statements over `opts.threads` threads, choosing
/// templates uniformly among those that can currently produce a valid
/// statement. Deterministic for a given store content and seed.
pub fn generate_mix(
    design: &Design,
    store: &Store,
    templates: &[Statement],
    opts: &MixOptions,
) -> Result<Mix> {
    let threads = opts.threads.max(1);
    let mut gen = Generator {
        design,
        store,
        snap: Snapshot::take(design, store)?,
        leaves: leaf_relations(design),
        hot: opts.hot,
    };
    let mut states: Vec<ThreadState> = (0..threads)
        .map(|id| ThreadState {
            id,
            threads,
            rng: ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(id as u64 * 0x9E37_79B9)),
            inserted: HashMap::new(),
            owned: HashMap::new(),
            fresh: HashMap::new(),
        })
        .collect();
    for rel in &gen.leaves {
        for (i, key) in gen.snap.keys.get(rel).into_iter().flatten().enumerate() {
            states[i % threads]
                .owned
                .entry(rel.clone())
                .or_default()
                .push(key.clone());
        }
    }
    let mut out: Vec<Vec<Job>> = vec![Vec::new(); threads];
    for n in 0..opts.statements {
        let t = n % threads;
        let st = &mut states[t];
        let mut order: Vec<usize> = (0..templates.len()).collect();
        order.shuffle(&mut st.rng);
        for idx in order {
            if let Some(job) = gen.job(st, idx, &templates[idx])? {
                out[t].push(job);
                break;
            }
        }
    }
    Ok(Mix {
        templates: templates.to_vec(),
        threads: out,
    })
}

#[derive(Debug, Clone)]
pub struct Record {
    pub thread: usize,
    pub template: usize,
    pub elapsed: Duration,
    pub outcome: std::result::Result<Outcome, String>,
}

/// Runs each thread's jobs on its own OS thread against one session.
pub fn run_mix(session: &Arc<Session>, mix: &Mix) -> Vec<Record> {
    run_mix_paced(session, mix, Duration::ZERO)
}

/// Like [`run_mix`], with each client pausing `think` between statements.
pub fn run_mix_paced(session: &Arc<Session>, mix: &Mix, think: Duration) -> Vec<Record> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = mix
            .threads
            .iter()
            .enumerate()
            .map(|(t, jobs)| {
                let session = Arc::clone(session);
                scope.spawn(move || {
                    jobs.iter()
                        .map(|job| {
                            if !think.is_zero() {
                                std::thread::sleep(think);
                            }
                            let start = Instant::now();
                            let outcome = session
                                .execute(&job.statement, &job.params)
                                .map_err(|e| e.to_string());
                            Record {
                                thread: t,
                                template: job.template,
                                elapsed: start.elapsed(),
                                outcome,
                            }
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("client thread panicked"))
            .collect()
    })
}

/// Mean and standard error of a sample, in milliseconds.
pub fn mean_stderr_ms(samples: &[Duration]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    let mean = ms.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatementStats {
    pub template: usize,
    pub statement: String,
    pub count: usize,
    pub errors: usize,
    pub mean_ms: f64,
    pub stderr_ms: f64,
}

pub fn summarize(mix: &Mix, records: &[Record]) -> Vec<StatementStats> {
    let mut by: BTreeMap<usize, (Vec<Duration>, usize)> = BTreeMap::new();
    for r in records {
        let e = by.entry(r.template).or_default();
        e.0.push(r.elapsed);
        e.1 += usize::from(r.outcome.is_err());
    }
    by.into_iter()
        .map(|(template, (times, errors))| {
            let (mean_ms, stderr_ms) = mean_stderr_ms(&times);
            StatementStats {
                template,
                statement: mix.templates[template].to_string(),
                count: times.len(),
                errors,
                mean_ms,
                stderr_ms,
            }
        })
        .collect()
}

pub fn stats_csv(stats: &[StatementStats]) -> String {
    let mut out = String::from("statement,count,errors,mean_ms,stderr_ms\n");
    for s in stats {
        out.push_str(&format!(
            "\"{}\",{},{},{:.4},{:.4}\n",
            s.statement.replace('"', "\"\""),
            s.count,
            s.errors,
            s.mean_ms,
            s.stderr_ms
        ));
    }
    out
}
