//! Response-time experiments: base-table joins against view scans, and the
//! cost of taking and releasing row locks.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::design::LOCK_COLUMN;
use crate::error::{Error, Result};
use crate::schema::resolve_column;
use crate::session::Session;
use crate::sqlparse::{Literal, Statement};
use crate::storage::{encode_key, Row, Store, TableHandle, TableKind};
use crate::txn::{LockConfig, LockManager};
use crate::value::{AttrType, Cells, Value};
use crate::workload::mean_stderr_ms;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// The query as written, joined over base tables.
    Join,
    /// The query rewritten over materialized views.
    View,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Join => "join",
            Mode::View => "view",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "join" => Some(Mode::Join),
            "view" => Some(Mode::View),
            _ => None,
        }
    }
}

/// A workload query in both forms.
#[derive(Debug, Clone)]
pub struct QueryPair {
    /// `Q1`, `Q2`, ... in workload order.
    pub label: String,
    pub join: Statement,
    pub view: Statement,
}

/// Pairs every SELECT of `original` with its rewrite. `original` must be
/// the workload the session's design was built from.
pub fn query_pairs(session: &Session, original: &[Statement]) -> Vec<QueryPair> {
    original
        .iter()
        .zip(&session.design().selection.rewritten)
        .filter(|(o, _)| matches!(o, Statement::Select(_)))
        .enumerate()
        .map(|(i, (o, r))| QueryPair {
            label: format!("Q{}", i + 1),
            join: o.clone(),
            view: r.clone(),
        })
        .collect()
}

/// One parameter list per run, drawn from the stored values of each
/// placeholder's column.
pub fn sample_params(
    session: &Session,
    stmt: &Statement,
    runs: usize,
    seed: u64,
) -> Result<Vec<Vec<Value>>> {
    let Statement::Select(sel) = stmt else {
        return Err(Error::Unsupported(
            "only SELECT statements are benchmarked".into(),
        ));
    };
    let catalog = &session.design().catalog;
    let mut pools = Vec::new();
    for f in sel
        .filters
        .iter()
        .filter(|f| f.value == Literal::Placeholder)
    {
        let (binding, column) =
            resolve_column(sel, &f.column, |t| catalog.get(t).map(|s| s.column_names()))?;
        let table = &sel.table_for(&binding).expect("resolved binding").name;
        let mut vals: Vec<Value> = session
            .store()
            .scan_all(table)?
            .into_iter()
            .filter_map(|r| r.cells.get(&column).cloned())
            .collect();
        vals.sort();
        vals.dedup();
        if vals.is_empty() {
            return Err(Error::Unsupported(format!(
                "no stored values for {table}.{column}"
            )));
        }
        pools.push(vals);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..runs)
        .map(|_| {
            pools
                .iter()
                .map(|p| p.choose(&mut rng).expect("non-empty").clone())
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinBench {
    pub scale: usize,
    pub query: String,
    pub mode: Mode,
    pub mean_ms: f64,
    pub stderr_ms: f64,
    /// Result rows of the last run.
    pub rows: usize,
}

/// Runs the query once per parameter list and reports the response time.
pub fn bench_query(
    session: &Session,
    stmt: &Statement,
    params: &[Vec<Value>],
) -> Result<(f64, f64, usize)> {
    let mut times = Vec::with_capacity(params.len());
    let mut rows = 0;
    for p in params {
        let start = Instant::now();
        rows = session.query(stmt, p)?.rows.len();
        times.push(start.elapsed());
    }
    let (m, e) = mean_stderr_ms(&times);
    Ok((m, e, rows))
}

/// Both modes of each pair, with the same parameters for both.
pub fn bench_join(
    session: &Session,
    pairs: &[QueryPair],
    modes: &[Mode],
    scale: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<JoinBench>> {
    let mut out = Vec::new();
    for pair in pairs {
        let params = sample_params(session, &pair.join, repeats, seed)?;
        for &mode in modes {
            let stmt = match mode {
                Mode::Join => &pair.join,
                Mode::View => &pair.view,
            };
            // one untimed run to warm caches
            if let Some(p) = params.first() {
                session.query(stmt, p)?;
            }
            let (mean_ms, stderr_ms, rows) = bench_query(session, stmt, &params)?;
            out.push(JoinBench {
                scale,
                query: pair.label.clone(),
                mode,
                mean_ms,
                stderr_ms,
                rows,
            });
        }
    }
    Ok(out)
}

pub fn join_csv(rows: &[JoinBench]) -> String {
    let mut out = String::from("scale,query,mode,mean_ms,stderr_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4}\n",
            r.scale,
            r.query,
            r.mode.name(),
            r.mean_ms,
            r.stderr_ms
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockBench {
    pub count: usize,
    pub mean_ms: f64,
    pub stderr_ms: f64,
}

const BENCH_LOCK_TABLE: &str = "LOCK_bench";

/// Time to acquire and then release `count` distinct, uncontended locks.
pub fn time_locks(count: usize) -> Result<Duration> {
    let store = Arc::new(Store::new());
    store.create_table(TableHandle {
        name: BENCH_LOCK_TABLE.into(),
        kind: TableKind::Lock,
        key_columns: vec!["id".into()],
        key_types: vec![AttrType::Int],
    })?;
    let keys = (0..count)
        .map(|i| encode_key(&[Value::Int(i as i64)]))
        .collect::<Result<Vec<_>>>()?;
    for k in &keys {
        let cells = Cells::from([(LOCK_COLUMN.to_string(), Value::Bool(false))]);
        store.put(BENCH_LOCK_TABLE, Row::new(k.clone(), cells))?;
    }
    let locks = LockManager::new(store, LockConfig::default());
    let start = Instant::now();
    for k in &keys {
        locks.acquire(BENCH_LOCK_TABLE, k, false)?;
    }
    for k in &keys {
        locks.release(BENCH_LOCK_TABLE, k)?;
    }
    Ok(start.elapsed())
}

/// Mean over `runs` runs per count, after one discarded warm-up run.
pub fn bench_locks(counts: &[usize], runs: usize) -> Result<Vec<LockBench>> {
    let mut out = Vec::new();
    for &count in counts {
        time_locks(count)?;
        let times = (0..runs)
            .map(|_| time_locks(count))
            .collect::<Result<Vec<_>>>()?;
        let (mean_ms, stderr_ms) = mean_stderr_ms(&times);
        out.push(LockBench {
            count,
            mean_ms,
            stderr_ms,
        });
    }
    Ok(out)
}

pub fn locks_csv(rows: &[LockBench]) -> String {
    let mut out = String::from("count,mean_ms,stderr_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            r.count, r.mean_ms, r.stderr_ms
        ));
    }
    out
}

/// Whitespace-separated columns with a `#` header line, for gnuplot.
pub fn csv_to_gnuplot(csv: &str) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = split_csv_line(line)
            .into_iter()
            .map(|f| {
                if f.contains(char::is_whitespace) {
                    format!("\"{f}\"")
                } else {
                    f
                }
            })
            .collect();
        if i == 0 {
            out.push_str("# ");
        }
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted && chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            '"' => quoted = !quoted,
            ',' if !quoted => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}
