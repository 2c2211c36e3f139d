//! A four-relation chain `A -> B -> C -> D` whose workload selects views of
//! two, three and four relations, and a reader that counts lookups.

use std::cell::Cell;

use synergy::design::Design;
use synergy::maintenance::{build_insert_view_tuple, insert_tuple};
use synergy::schema::SchemaDef;
use synergy::session::Session;
use synergy::sqlparse::{parse_statement, parse_workload, Statement};
use synergy::storage::{Row, RowKey, RowReader, Store};
use synergy::Result;

pub struct Counting<'a> {
    pub inner: &'a Store,
    pub reads: Cell<usize>,
}

impl RowReader for Counting<'_> {
    fn read_row(&self, table: &str, key: &RowKey) -> Result<Option<Row>> {
        self.reads.set(self.reads.get() + 1);
        self.inner.read_row(table, key)
    }
    fn read_prefix(&self, table: &str, prefix: &RowKey) -> Result<Vec<Row>> {
        self.reads.set(self.reads.get() + 1);
        self.inner.read_prefix(table, prefix)
    }
    fn read_all(&self, table: &str) -> Result<Vec<Row>> {
        self.reads.set(self.reads.get() + 1);
        self.inner.read_all(table)
    }
}

pub const SCHEMA: &str = r#"{
  "relations": [
    {"name": "A", "attrs": [{"name": "A_id", "type": "int"}, {"name": "A_v", "type": "string"}], "pk": ["A_id"], "fks": []},
    {"name": "B", "attrs": [{"name": "B_id", "type": "int"}, {"name": "B_a", "type": "int"}, {"name": "B_v", "type": "int"}],
     "pk": ["B_id"], "fks": [{"name": "fk_b_a", "attrs": ["B_a"], "references": "A"}]},
    {"name": "C", "attrs": [{"name": "C_id", "type": "int"}, {"name": "C_b", "type": "int"}, {"name": "C_v", "type": "int"}],
     "pk": ["C_id"], "fks": [{"name": "fk_c_b", "attrs": ["C_b"], "references": "B"}]},
    {"name": "D", "attrs": [{"name": "D_id", "type": "int"}, {"name": "D_c", "type": "int"}, {"name": "D_v", "type": "int"}],
     "pk": ["D_id"], "fks": [{"name": "fk_d_c", "attrs": ["D_c"], "references": "C"}]}
  ],
  "roots": ["A"]
}"#;

pub const WORKLOAD: &str = "\
SELECT * FROM A as a, B as b WHERE a.A_id = b.B_a AND a.A_id = ?
SELECT * FROM A as a, B as b, C as c WHERE a.A_id = b.B_a AND b.B_id = c.C_b AND a.A_id = ?
SELECT * FROM A as a, B as b, C as c, D as d WHERE a.A_id = b.B_a AND b.B_id = c.C_b AND c.C_id = d.D_c AND a.A_id = ?
";

pub struct ReadCount {
    pub view: String,
    pub relations: usize,
    pub reads: usize,
    /// Whether the row built from the counted reads equals the one the
    /// transaction layer stored for the same insert.
    pub matches_stored: bool,
}

/// For each selected view, builds the view row for a new tuple of its last
/// relation, counting lookups, then performs the insert for real.
pub fn chain_read_counts() -> std::result::Result<Vec<ReadCount>, String> {
    let e = |e: synergy::Error| e.to_string();
    let schema = SchemaDef::from_json(SCHEMA).map_err(e)?;
    let design = Design::build(&schema, &parse_workload(WORKLOAD).map_err(e)?, &[]).map_err(e)?;
    let session = Session::in_memory(design).map_err(e)?;
    for sql in [
        "INSERT INTO A (A_id, A_v) VALUES (1, 'one')",
        "INSERT INTO B (B_id, B_a, B_v) VALUES (1, 1, 10)",
        "INSERT INTO C (C_id, C_b, C_v) VALUES (1, 1, 100)",
    ] {
        session.execute_sql(sql, &[]).map_err(e)?;
    }
    let inserts = [
        ("B", "INSERT INTO B (B_id, B_a, B_v) VALUES (2, 1, 20)"),
        ("C", "INSERT INTO C (C_id, C_b, C_v) VALUES (2, 1, 200)"),
        ("D", "INSERT INTO D (D_id, D_c, D_v) VALUES (1, 1, 1000)"),
    ];
    let design = session.design().clone();
    let mut out = Vec::new();
    for mv in design.views() {
        let view = &mv.view;
        let (_, sql) = inserts
            .iter()
            .find(|(rel, _)| *rel == view.last())
            .ok_or_else(|| format!("no insert for {}", view.last()))?;
        let Statement::Insert(ins) = parse_statement(sql).map_err(e)? else {
            unreachable!()
        };
        let tuple =
            insert_tuple(design.schema.require(view.last()).map_err(e)?, &ins).map_err(e)?;
        let counting = Counting {
            inner: session.store(),
            reads: Cell::new(0),
        };
        let built = build_insert_view_tuple(&design, view, &tuple, &counting)
            .map_err(e)?
            .ok_or_else(|| format!("no row built for {}", view.name()))?;
        out.push((
            view.name(),
            view.relations.len(),
            counting.reads.get(),
            built,
        ));
    }
    let mut counts = Vec::new();
    for (_, sql) in inserts {
        session.execute_sql(sql, &[]).map_err(e)?;
    }
    for (view, relations, reads, built) in out {
        let stored = session.store().get(&view, &built.key).map_err(e)?;
        counts.push(ReadCount {
            view,
            relations,
            reads,
            matches_stored: stored.is_some_and(|r| r.cells == built.cells && !r.dirty),
        });
    }
    Ok(counts)
}
