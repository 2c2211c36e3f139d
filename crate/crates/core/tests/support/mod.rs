//! Randomized databases and a brute-force relational evaluator that shares
//! no code with the engine: tables are plain vectors of rows, queries are
//! nested loops over every binding.

#![allow(dead_code)]

pub mod chain;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synergy::design::Design;
use synergy::schema::{Attribute, ForeignKey, RelationDef, SchemaDef};
use synergy::session::Session;
use synergy::sqlparse::{parse_statement, CompareOp, Literal, Projection, Select, Statement};
use synergy::{AttrType, Cells, Value};

pub type Tables = BTreeMap<String, Vec<Cells>>;

fn id(rel: &str) -> String {
    format!("{rel}_id")
}

/// Up to five relations, each with an integer key, a small-domain integer,
/// a string, and zero to two foreign keys to earlier relations.
pub fn random_schema(rng: &mut ChaCha8Rng) -> SchemaDef {
    let n = rng.gen_range(2..=5);
    let mut relations = Vec::new();
    for i in 0..n {
        let name = format!("R{i}");
        let mut attributes = vec![
            Attribute::new(&id(&name), AttrType::Int),
            Attribute::new(&format!("{name}_x"), AttrType::Int),
            Attribute::new(&format!("{name}_s"), AttrType::String),
        ];
        let mut foreign_keys = Vec::new();
        if i > 0 && rng.gen_bool(0.85) {
            let mut parents: Vec<usize> = (0..i).collect();
            parents.shuffle(rng);
            let count = if i > 1 && rng.gen_bool(0.25) { 2 } else { 1 };
            for &p in parents.iter().take(count) {
                let attr = format!("{name}_p{p}");
                attributes.push(Attribute::new(&attr, AttrType::Int));
                foreign_keys.push(ForeignKey {
                    name: format!("fk_{name}_{p}"),
                    attributes: vec![attr],
                    references: format!("R{p}"),
                });
            }
        }
        relations.push(RelationDef {
            primary_key: vec![id(&name)],
            name,
            attributes,
            foreign_keys,
        });
    }
    let roots = relations
        .iter()
        .filter(|r| r.foreign_keys.is_empty())
        .map(|r| r.name.clone())
        .collect();
    SchemaDef {
        relations,
        indexes: vec![],
        roots,
    }
}

/// FK edges as (child, fk attribute, parent).
fn edges(schema: &SchemaDef) -> Vec<(String, String, String)> {
    schema
        .relations
        .iter()
        .flat_map(|r| {
            r.foreign_keys.iter().map(move |f| {
                (
                    r.name.clone(),
                    f.attributes[0].clone(),
                    f.references.clone(),
                )
            })
        })
        .collect()
}

const OPS: [&str; 5] = ["=", "<", ">", "<=", ">="];

/// A connected equi-join along foreign keys, sometimes with an extra join
/// on the small-domain columns or a same-row comparison, plus random
/// filters and projection.
pub fn random_query(schema: &SchemaDef, rng: &mut ChaCha8Rng) -> String {
    let all = edges(schema);
    let start = schema.relations.choose(rng).unwrap().name.clone();
    let mut used = vec![start];
    let mut conds = Vec::new();
    for _ in 0..rng.gen_range(0..=3) {
        let frontier: Vec<&(String, String, String)> = all
            .iter()
            .filter(|(c, _, p)| used.contains(c) != used.contains(p))
            .collect();
        let Some((c, fk, p)) = frontier.choose(rng).map(|e| (*e).clone()) else {
            break;
        };
        let new = if used.contains(&c) {
            p.clone()
        } else {
            c.clone()
        };
        used.push(new);
        conds.push((c, fk, p));
    }
    let alias = |r: &str| format!("a{}", &r[1..]);
    let aliased = rng.gen_bool(0.7);
    let q = |r: &str| if aliased { alias(r) } else { r.to_string() };

    let mut where_ = Vec::new();
    for (c, fk, p) in &conds {
        if rng.gen_bool(0.5) {
            where_.push(format!("{}.{fk} = {}.{}", q(c), q(p), id(p)));
        } else {
            where_.push(format!("{}.{} = {}.{fk}", q(p), id(p), q(c)));
        }
    }
    if used.len() >= 2 && rng.gen_bool(0.15) {
        where_.push(format!(
            "{}.{}_x = {}.{}_x",
            q(&used[0]),
            used[0],
            q(&used[1]),
            used[1]
        ));
    }
    if rng.gen_bool(0.1) {
        let r = used.choose(rng).unwrap();
        where_.push(format!("{}.{r}_x = {}.{}", q(r), q(r), id(r)));
    }
    for _ in 0..rng.gen_range(0..=2) {
        let r = used.choose(rng).unwrap();
        if rng.gen_bool(0.3) {
            where_.push(format!("{}.{r}_s = 's{}'", q(r), rng.gen_range(0..4)));
        } else {
            let op = OPS.choose(rng).unwrap();
            where_.push(format!("{}.{r}_x {op} {}", q(r), rng.gen_range(0..6)));
        }
    }
    let projection = if rng.gen_bool(0.6) {
        "*".to_string()
    } else {
        let mut cols = Vec::new();
        for r in &used {
            let rel = schema.relation(r).unwrap();
            for a in &rel.attributes {
                if rng.gen_bool(0.3) {
                    cols.push(format!("{}.{}", q(r), a.name));
                }
            }
        }
        if cols.is_empty() {
            cols.push(format!("{}.{}", q(&used[0]), id(&used[0])));
        }
        cols.join(", ")
    };
    let mut from: Vec<String> = used
        .iter()
        .map(|r| {
            if aliased {
                format!("{r} as {}", alias(r))
            } else {
                r.clone()
            }
        })
        .collect();
    from.shuffle(rng);
    let mut sql = format!("SELECT {projection} FROM {}", from.join(", "));
    if !where_.is_empty() {
        where_.shuffle(rng);
        sql.push_str(" WHERE ");
        sql.push_str(&where_.join(" AND "));
    }
    sql
}

fn sql_value(v: &Value) -> String {
    v.to_string()
}

/// Inserts (parents first), then updates of non-key columns and deletes
/// of rows nothing references. Applies every write to `tables` too.
pub fn random_writes(
    schema: &SchemaDef,
    rng: &mut ChaCha8Rng,
    max_rows: usize,
    tables: &mut Tables,
) -> Vec<String> {
    let mut out = Vec::new();
    let per = (max_rows / schema.relations.len()).max(1);
    for rel in &schema.relations {
        let rows = rng.gen_range(1..=per);
        for i in 1..=rows {
            let mut cells = Cells::new();
            cells.insert(id(&rel.name), Value::Int(i as i64));
            cells.insert(format!("{}_x", rel.name), Value::Int(rng.gen_range(0..6)));
            cells.insert(
                format!("{}_s", rel.name),
                Value::Str(format!("s{}", rng.gen_range(0..4))),
            );
            for fk in &rel.foreign_keys {
                let parents = &tables[&fk.references];
                let parent = parents.choose(rng).unwrap();
                cells.insert(
                    fk.attributes[0].clone(),
                    parent[&id(&fk.references)].clone(),
                );
            }
            let cols: Vec<&String> = cells.keys().collect();
            let vals: Vec<String> = cells.values().map(sql_value).collect();
            out.push(format!(
                "INSERT INTO {} ({}) VALUES ({})",
                rel.name,
                cols.iter()
                    .map(|c| c.as_str())
                    .collect::<Vec<_>>()
                    .join(", "),
                vals.join(", ")
            ));
            tables.entry(rel.name.clone()).or_default().push(cells);
        }
    }
    let referenced: Vec<&str> = schema
        .relations
        .iter()
        .flat_map(|r| r.foreign_keys.iter().map(|f| f.references.as_str()))
        .collect();
    for _ in 0..rng.gen_range(0..20) {
        let rel = schema.relations.choose(rng).unwrap();
        let rows = tables.get_mut(&rel.name).unwrap();
        if rows.is_empty() {
            continue;
        }
        let i = rng.gen_range(0..rows.len());
        let key = rows[i][&id(&rel.name)].clone();
        if !referenced.contains(&rel.name.as_str()) && rng.gen_bool(0.3) {
            rows.remove(i);
            out.push(format!(
                "DELETE FROM {} WHERE {} = {key}",
                rel.name,
                id(&rel.name)
            ));
        } else {
            let x = rng.gen_range(0..6);
            let s = format!("s{}", rng.gen_range(0..4));
            rows[i].insert(format!("{}_x", rel.name), Value::Int(x));
            rows[i].insert(format!("{}_s", rel.name), Value::Str(s.clone()));
            out.push(format!(
                "UPDATE {} SET {}_x = {x}, {}_s = '{s}' WHERE {} = {key}",
                rel.name,
                rel.name,
                rel.name,
                id(&rel.name)
            ));
        }
    }
    out
}

fn lit(l: &Literal) -> Value {
    match l {
        Literal::Int(i) => Value::Int(*i),
        Literal::Str(s) => Value::Str(s.clone()),
        Literal::Placeholder => panic!("evaluator needs bound statements"),
    }
}

fn holds(op: CompareOp, a: &Value, b: &Value) -> bool {
    match op {
        CompareOp::Eq => a == b,
        CompareOp::Lt => a < b,
        CompareOp::Gt => a > b,
        CompareOp::Le => a <= b,
        CompareOp::Ge => a >= b,
    }
}

/// Nested-loop evaluation with every column reference qualified.
pub fn evaluate(tables: &Tables, sel: &Select) -> Vec<Cells> {
    let bindings: Vec<(&str, &str)> = sel
        .tables
        .iter()
        .map(|t| (t.binding(), t.name.as_str()))
        .collect();
    let pos = |q: &Option<String>| -> usize {
        let q = q.as_deref().expect("qualified column");
        bindings
            .iter()
            .position(|(b, _)| *b == q)
            .expect("known binding")
    };
    let mut out = Vec::new();
    let mut chosen: Vec<&Cells> = Vec::new();
    fn go<'a>(
        depth: usize,
        tables: &'a Tables,
        bindings: &[(&str, &str)],
        sel: &Select,
        pos: &dyn Fn(&Option<String>) -> usize,
        chosen: &mut Vec<&'a Cells>,
        out: &mut Vec<Cells>,
    ) {
        let ok = |chosen: &Vec<&Cells>| {
            sel.joins.iter().all(|j| {
                let (l, r) = (pos(&j.left.qualifier), pos(&j.right.qualifier));
                l >= chosen.len()
                    || r >= chosen.len()
                    || chosen[l].get(&j.left.column) == chosen[r].get(&j.right.column)
            }) && sel.filters.iter().all(|f| {
                let p = pos(&f.column.qualifier);
                p >= chosen.len()
                    || chosen[p]
                        .get(&f.column.column)
                        .is_some_and(|v| holds(f.op, v, &lit(&f.value)))
            })
        };
        if depth == bindings.len() {
            let mut row = Cells::new();
            match &sel.projection {
                Projection::Star => {
                    for c in chosen.iter() {
                        row.extend(c.iter().map(|(k, v)| (k.clone(), v.clone())));
                    }
                }
                Projection::Columns(cols) => {
                    for c in cols {
                        row.insert(
                            c.column.clone(),
                            chosen[pos(&c.qualifier)][&c.column].clone(),
                        );
                    }
                }
            }
            out.push(row);
            return;
        }
        for r in tables.get(bindings[depth].1).into_iter().flatten() {
            chosen.push(r);
            if ok(chosen) {
                go(depth + 1, tables, bindings, sel, pos, chosen, out);
            }
            chosen.pop();
        }
    }
    go(0, tables, &bindings, sel, &pos, &mut chosen, &mut out);
    out
}

pub fn sorted(mut rows: Vec<Cells>) -> Vec<Cells> {
    rows.sort();
    rows
}

/// Builds a random case, loads it through the transaction layer and
/// compares engine results (base-table plan and view rewrite) with the
/// evaluator for every query. Returns the number of queries checked.
pub fn check_case(seed: u64, queries: usize, max_rows: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = random_schema(&mut rng);
    let texts: Vec<String> = (0..queries)
        .map(|_| random_query(&schema, &mut rng))
        .collect();
    let workload: Vec<Statement> = texts.iter().map(|t| parse_statement(t).unwrap()).collect();
    let design =
        Design::build(&schema, &workload, &[]).map_err(|e| format!("seed {seed}: design: {e}"))?;
    let session = Session::in_memory(design).map_err(|e| e.to_string())?;
    let mut tables = Tables::new();
    for w in random_writes(&schema, &mut rng, max_rows, &mut tables) {
        session
            .execute_sql(&w, &[])
            .map_err(|e| format!("seed {seed}: {w}: {e}"))?;
    }
    for (i, stmt) in workload.iter().enumerate() {
        let Statement::Select(sel) = stmt else {
            unreachable!()
        };
        let expected = sorted(evaluate(&tables, sel));
        let rewritten = &session.design().selection.rewritten[i];
        let reparsed = parse_statement(&rewritten.to_string())
            .map_err(|e| format!("seed {seed}: {rewritten}: {e}"))?;
        if &reparsed != rewritten {
            return Err(format!(
                "seed {seed}: rewrite does not round-trip: {rewritten}"
            ));
        }
        for (mode, s) in [("join", stmt), ("view", rewritten)] {
            let got = session
                .query(s, &[])
                .map_err(|e| format!("seed {seed} {mode}: {s}: {e}"))?;
            let got = sorted(got.rows);
            if got != expected {
                return Err(format!(
                    "seed {seed} {mode}: {s}\n  original: {stmt}\n  expected {} rows, got {}",
                    expected.len(),
                    got.len()
                ));
            }
        }
    }
    Ok(queries)
}
