//! SELECT planning and execution.
//!
//! Plans are left-deep nested loops. Each step reads one table by full key,
//! key prefix, index prefix or full scan, using constants and columns of
//! earlier steps. A read that meets a marked row starts over from scratch.

use std::collections::BTreeMap;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::schema::{resolve_column, StoreCatalog, TableSpec};
use crate::sqlparse::{CompareOp, Literal, Projection, Select, Statement};
use crate::storage::{encode_key, Row, RowFilter, RowKey, Store};
use crate::value::{Cells, Value};

pub const DEFAULT_MAX_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Const(Value),
    /// Positional query parameter.
    Param(usize),
    /// Column of an earlier step, or of the current row when `step` is its own.
    Column {
        step: usize,
        column: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Access {
    Get(Vec<Operand>),
    KeyPrefix(Vec<Operand>),
    IndexPrefix {
        index: String,
        values: Vec<Operand>,
        /// False when rows must be fetched from the base table by key.
        covering: bool,
    },
    Scan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub column: String,
    pub op: CompareOp,
    pub operand: Operand,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanStep {
    pub binding: String,
    pub table: String,
    pub access: Access,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPlan {
    pub steps: Vec<PlanStep>,
    /// Output column name, step and source column.
    pub output: Vec<(String, usize, String)>,
    pub params: usize,
}

impl QueryPlan {
    pub fn describe(&self) -> String {
        self.steps
            .iter()
            .map(|s| {
                let how = match &s.access {
                    Access::Get(_) => "get".to_string(),
                    Access::KeyPrefix(v) => format!("key prefix/{}", v.len()),
                    Access::IndexPrefix {
                        index, covering, ..
                    } => {
                        format!("index {index}{}", if *covering { "" } else { " + fetch" })
                    }
                    Access::Scan => "scan".to_string(),
                };
                format!("{} ({}) via {how}", s.table, s.binding)
            })
            .collect::<Vec<_>>()
            .join(" -> ")
    }
}

struct Cond {
    binding: String,
    column: String,
    op: CompareOp,
    rhs: Rhs,
}

enum Rhs {
    Value(Operand),
    Column { binding: String, column: String },
}

fn literal_operand(lit: &Literal, next_param: &mut usize) -> Result<Operand> {
    match lit {
        Literal::Placeholder => {
            *next_param += 1;
            Ok(Operand::Param(*next_param - 1))
        }
        other => Ok(Operand::Const(
            other.to_value().expect("non-placeholder literal"),
        )),
    }
}

pub fn plan_query(catalog: &StoreCatalog, sel: &Select) -> Result<QueryPlan> {
    let columns_of = |name: &str| catalog.get(name).map(|t| t.column_names());
    let mut seen = std::collections::HashSet::new();
    for t in &sel.tables {
        catalog
            .get(&t.name)
            .ok_or_else(|| Error::UnknownRelation(t.name.clone()))?;
        if !seen.insert(t.binding()) {
            return Err(Error::DuplicateRelation(t.binding().to_string()));
        }
    }

    let mut conds = Vec::new();
    let mut params = 0;
    for f in &sel.filters {
        let (binding, column) = resolve_column(sel, &f.column, columns_of)?;
        conds.push(Cond {
            binding,
            column,
            op: f.op,
            rhs: Rhs::Value(literal_operand(&f.value, &mut params)?),
        });
    }
    for j in &sel.joins {
        let (lb, lc) = resolve_column(sel, &j.left, columns_of)?;
        let (rb, rc) = resolve_column(sel, &j.right, columns_of)?;
        conds.push(Cond {
            binding: lb.clone(),
            column: lc.clone(),
            op: CompareOp::Eq,
            rhs: Rhs::Column {
                binding: rb.clone(),
                column: rc.clone(),
            },
        });
        conds.push(Cond {
            binding: rb,
            column: rc,
            op: CompareOp::Eq,
            rhs: Rhs::Column {
                binding: lb,
                column: lc,
            },
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut steps: Vec<PlanStep> = Vec::new();
    while order.len() < sel.tables.len() {
        let mut best: Option<((bool, u8, usize), PlanStep)> = None;
        for (pos, t) in sel.tables.iter().enumerate() {
            if order.iter().any(|b| b == t.binding()) {
                continue;
            }
            let spec = catalog.require(&t.name)?;
            let step_of = |b: &str| order.iter().position(|o| o == b);
            let resolve = |rhs: &Rhs| -> Option<Operand> {
                match rhs {
                    Rhs::Value(v) => Some(v.clone()),
                    Rhs::Column { binding, column } => {
                        step_of(binding).map(|step| Operand::Column {
                            step,
                            column: column.clone(),
                        })
                    }
                }
            };
            let mine: Vec<&Cond> = conds.iter().filter(|c| c.binding == t.binding()).collect();
            let equal_source = |col: &str| {
                mine.iter()
                    .filter(|c| c.column == col && c.op == CompareOp::Eq)
                    .find_map(|c| resolve(&c.rhs))
            };
            let connected = mine.iter().any(
                |c| matches!(&c.rhs, Rhs::Column { binding, .. } if step_of(binding).is_some()),
            );
            let has_const = mine.iter().any(|c| matches!(c.rhs, Rhs::Value(_)));
            let (rank, access) = choose_access(catalog, spec, &equal_source, has_const);
            let checks = mine
                .iter()
                .filter_map(|c| {
                    let operand = match &c.rhs {
                        // both sides on this table: compare within the row
                        Rhs::Column { binding, column } if binding == t.binding() => {
                            Some(Operand::Column {
                                step: order.len(),
                                column: column.clone(),
                            })
                        }
                        rhs => resolve(rhs),
                    };
                    operand.map(|operand| Check {
                        column: c.column.clone(),
                        op: c.op,
                        operand,
                    })
                })
                .collect();
            // prefer tables joined to what is already bound, then cheaper access
            let score = (!order.is_empty() && !connected, rank, pos);
            if best.as_ref().is_none_or(|(b, _)| score < *b) {
                best = Some((
                    score,
                    PlanStep {
                        binding: t.binding().to_string(),
                        table: t.name.clone(),
                        access,
                        checks,
                    },
                ));
            }
        }
        let (_, step) = best.expect("a table remains");
        order.push(step.binding.clone());
        steps.push(step);
    }

    let step_of = |b: &str| order.iter().position(|o| o == b).expect("planned binding");
    let mut output: Vec<(String, usize, String)> = Vec::new();
    match &sel.projection {
        Projection::Star => {
            for t in &sel.tables {
                for c in catalog.require(&t.name)?.column_names() {
                    output.push((c.clone(), step_of(t.binding()), c));
                }
            }
        }
        Projection::Columns(cols) => {
            for c in cols {
                let (b, col) = resolve_column(sel, c, columns_of)?;
                output.push((col.clone(), step_of(&b), col));
            }
        }
    }
    let mut names = std::collections::HashSet::new();
    for (name, _, _) in &output {
        if !names.insert(name.as_str()) {
            return Err(Error::Ambiguity(name.clone()));
        }
    }
    Ok(QueryPlan {
        steps,
        output,
        params,
    })
}

fn choose_access(
    catalog: &StoreCatalog,
    spec: &TableSpec,
    source: &dyn Fn(&str) -> Option<Operand>,
    has_const: bool,
) -> (u8, Access) {
    let prefix =
        |cols: &[String]| -> Vec<Operand> { cols.iter().map_while(|c| source(c)).collect() };
    let key = prefix(&spec.handle.key_columns);
    if key.len() == spec.handle.key_columns.len() {
        return (0, Access::Get(key));
    }
    if !key.is_empty() {
        return (1, Access::KeyPrefix(key));
    }
    let base_cols = spec.column_names();
    let best_index = catalog
        .indexes_of(spec.name())
        .map(|(ix, ix_spec)| (ix, ix_spec, prefix(&ix_spec.handle.key_columns)))
        .filter(|(_, _, p)| !p.is_empty())
        .max_by_key(|(ix, _, p)| (p.len(), std::cmp::Reverse(ix.name.clone())));
    if let Some((ix, ix_spec, values)) = best_index {
        let covering = base_cols.iter().all(|c| ix_spec.column_type(c).is_some());
        return (
            2,
            Access::IndexPrefix {
                index: ix.name.clone(),
                values,
                covering,
            },
        );
    }
    (if has_const { 3 } else { 4 }, Access::Scan)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Cells>,
    /// Times the read started over after meeting a marked row.
    pub rescans: usize,
}

enum Attempt {
    Rows(Vec<Cells>),
    Dirty,
}

struct Exec<'a> {
    store: &'a Store,
    catalog: &'a StoreCatalog,
    plan: &'a QueryPlan,
    params: &'a [Value],
}

impl Exec<'_> {
    fn value(&self, op: &Operand, env: &[Cells]) -> Result<Value> {
        match op {
            Operand::Const(v) => Ok(v.clone()),
            Operand::Param(i) => self.params.get(*i).cloned().ok_or(Error::Parameters {
                needed: self.plan.params,
                given: self.params.len(),
            }),
            Operand::Column { step, column } => env[*step]
                .get(column)
                .cloned()
                .ok_or_else(|| Error::UnknownAttribute(column.clone())),
        }
    }

    fn key(&self, ops: &[Operand], env: &[Cells]) -> Result<RowKey> {
        let vals = ops
            .iter()
            .map(|o| self.value(o, env))
            .collect::<Result<Vec<_>>>()?;
        encode_key(&vals)
    }

    /// Rows of one step, or `None` when a marked row was seen.
    fn fetch(&self, step: &PlanStep, env: &[Cells]) -> Result<Option<Vec<Row>>> {
        let rows: Vec<Row> = match &step.access {
            Access::Get(ops) => self
                .store
                .get(&step.table, &self.key(ops, env)?)?
                .into_iter()
                .collect(),
            Access::KeyPrefix(ops) => self.prefix(&step.table, &self.key(ops, env)?, ops.len())?,
            Access::Scan => {
                let mut conds = Vec::with_capacity(step.checks.len());
                for c in &step.checks {
                    if matches!(&c.operand, Operand::Column { step, .. } if *step >= env.len()) {
                        continue;
                    }
                    conds.push((c.column.clone(), c.op, self.value(&c.operand, env)?));
                }
                let filter: RowFilter = Box::new(move |cells: &Cells| {
                    conds
                        .iter()
                        .all(|(col, op, rhs)| cells.get(col).is_some_and(|v| op.eval(v, rhs)))
                });
                self.store
                    .scan(&step.table, None, None, Some(filter))?
                    .collect::<Result<_>>()?
            }
            Access::IndexPrefix {
                index,
                values,
                covering,
            } => {
                let entries = self.prefix(index, &self.key(values, env)?, values.len())?;
                if entries.iter().any(|r| r.dirty) {
                    return Ok(None);
                }
                if *covering {
                    entries
                } else {
                    let spec = self.catalog.require(&step.table)?;
                    let mut rows = Vec::with_capacity(entries.len());
                    for e in entries {
                        if let Some(r) = self.store.get(&step.table, &spec.key_of(&e.cells)?)? {
                            rows.push(r);
                        }
                    }
                    rows
                }
            }
        };
        if rows.iter().any(|r| r.dirty) {
            return Ok(None);
        }
        Ok(Some(rows))
    }

    fn prefix(&self, table: &str, prefix: &RowKey, components: usize) -> Result<Vec<Row>> {
        if components == self.store.handle(table)?.key_columns.len() {
            return Ok(self.store.get(table, prefix)?.into_iter().collect());
        }
        self.store.scan_prefix(table, prefix)?.collect()
    }

    fn run(&self, depth: usize, env: &mut Vec<Cells>, out: &mut Vec<Cells>) -> Result<bool> {
        let Some(step) = self.plan.steps.get(depth) else {
            out.push(
                self.plan
                    .output
                    .iter()
                    .map(|(name, s, c)| {
                        (
                            name.clone(),
                            env[*s].get(c).cloned().expect("planned column"),
                        )
                    })
                    .collect(),
            );
            return Ok(true);
        };
        let Some(rows) = self.fetch(step, env)? else {
            return Ok(false);
        };
        for row in rows {
            env.push(row.cells);
            let mut keep = true;
            for chk in &step.checks {
                let rhs = self.value(&chk.operand, env)?;
                if !env[depth]
                    .get(&chk.column)
                    .is_some_and(|v| chk.op.eval(v, &rhs))
                {
                    keep = false;
                    break;
                }
            }
            let clean = !keep || self.run(depth + 1, env, out)?;
            env.pop();
            if !clean {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn attempt(&self) -> Result<Attempt> {
        let mut out = Vec::new();
        if self.run(0, &mut Vec::new(), &mut out)? {
            Ok(Attempt::Rows(out))
        } else {
            Ok(Attempt::Dirty)
        }
    }
}

/// Runs a plan, starting over whenever a marked row shows up, at most
/// `max_retries` times.
pub fn execute_query(
    store: &Store,
    catalog: &StoreCatalog,
    plan: &QueryPlan,
    params: &[Value],
    max_retries: usize,
) -> Result<ResultSet> {
    if params.len() != plan.params {
        return Err(Error::Parameters {
            needed: plan.params,
            given: params.len(),
        });
    }
    let exec = Exec {
        store,
        catalog,
        plan,
        params,
    };
    let columns = plan.output.iter().map(|(n, _, _)| n.clone()).collect();
    for rescans in 0..=max_retries {
        match exec.attempt()? {
            Attempt::Rows(rows) => {
                return Ok(ResultSet {
                    columns,
                    rows,
                    rescans,
                })
            }
            Attempt::Dirty => {
                // yield first, then back off: a preempted writer may hold
                // its marks for a few scheduler slices
                if rescans < 8 {
                    std::thread::yield_now();
                } else {
                    let backoff = 50u64 << (rescans - 8).min(5);
                    std::thread::sleep(Duration::from_micros(backoff.min(2000)));
                }
            }
        }
    }
    Err(Error::DirtyReadTimeout {
        retries: max_retries,
    })
}

/// Plans and runs a SELECT statement.
pub fn query(
    store: &Store,
    catalog: &StoreCatalog,
    stmt: &Statement,
    params: &[Value],
) -> Result<ResultSet> {
    let Statement::Select(sel) = stmt else {
        return Err(Error::Unsupported(
            "only SELECT statements are queries".into(),
        ));
    };
    let plan = plan_query(catalog, sel)?;
    execute_query(store, catalog, &plan, params, DEFAULT_MAX_RETRIES)
}

/// Result rows as a sorted multiset, for comparisons.
pub fn multiset(rows: &[Cells]) -> BTreeMap<Vec<(String, Value)>, usize> {
    let mut m = BTreeMap::new();
    for r in rows {
        *m.entry(r.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
            .or_insert(0) += 1;
    }
    m
}
