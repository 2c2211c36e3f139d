//! Incremental view maintenance planning.
//!
//! Inserts and deletes touch a view only when the written relation is the
//! last one of the view; updates touch every view containing the relation.
//! Nothing here mutates the store; the transaction layer applies the plans.

use crate::design::Design;
use crate::error::{Error, Result};
use crate::schema::{RelationDef, TableSpec};
use crate::sqlparse::{CompareOp, Filter, Insert, Literal, Update};
use crate::storage::{encode_key, Row, RowKey, RowReader};
use crate::value::{Cells, Value};
use crate::viewgen::CandidateView;

pub fn insert_applies(view: &CandidateView, relation: &str) -> bool {
    view.last() == relation
}

pub fn delete_applies(view: &CandidateView, relation: &str) -> bool {
    view.last() == relation
}

pub fn update_applies(view: &CandidateView, relation: &str) -> bool {
    view.contains(relation)
}

fn literal_value(lit: &Literal) -> Result<Value> {
    lit.to_value().ok_or(Error::Parameters {
        needed: 1,
        given: 0,
    })
}

fn typed(rel: &RelationDef, attr: &str, v: Value) -> Result<Value> {
    let ty = rel
        .attr_type(attr)
        .ok_or_else(|| Error::UnknownAttribute(format!("{}.{attr}", rel.name)))?;
    if v.matches(ty) {
        Ok(v)
    } else {
        Err(Error::TypeMismatch(format!(
            "{}.{attr} expects {ty:?}, got {v}",
            rel.name
        )))
    }
}

/// The full tuple carried by an insert, type-checked against its relation.
pub fn insert_tuple(rel: &RelationDef, ins: &Insert) -> Result<Cells> {
    if ins.columns.len() != ins.values.len() {
        return Err(Error::Unsupported(format!(
            "INSERT INTO {} names {} columns but gives {} values",
            ins.table,
            ins.columns.len(),
            ins.values.len()
        )));
    }
    let mut cells = Cells::new();
    for (c, lit) in ins.columns.iter().zip(&ins.values) {
        if cells
            .insert(c.clone(), typed(rel, c, literal_value(lit)?)?)
            .is_some()
        {
            return Err(Error::Unsupported(format!("column {c} listed twice")));
        }
    }
    for a in &rel.attributes {
        if !cells.contains_key(&a.name) {
            return Err(Error::Unsupported(format!(
                "INSERT INTO {} must give every attribute; missing {}",
                rel.name, a.name
            )));
        }
    }
    Ok(cells)
}

/// Primary-key values fixed by the equality filters of a keyed write.
pub fn key_values(rel: &RelationDef, filters: &[Filter]) -> Result<Vec<Value>> {
    rel.primary_key
        .iter()
        .map(|k| {
            let f = filters
                .iter()
                .find(|f| f.column.column == *k && f.op == CompareOp::Eq)
                .ok_or_else(|| {
                    Error::Unsupported(format!("write on {} must fix key attribute {k}", rel.name))
                })?;
            typed(rel, k, literal_value(&f.value)?)
        })
        .collect()
}

/// Whether a stored row satisfies every filter of a write.
pub fn row_matches(cells: &Cells, filters: &[Filter]) -> Result<bool> {
    for f in filters {
        let v = literal_value(&f.value)?;
        match cells.get(&f.column.column) {
            Some(c) if f.op.eval(c, &v) => {}
            Some(_) => return Ok(false),
            None => return Err(Error::UnknownAttribute(f.column.to_string())),
        }
    }
    Ok(true)
}

/// Checked assignments of a non-key update.
pub fn update_assignments(rel: &RelationDef, upd: &Update) -> Result<Cells> {
    let mut out = Cells::new();
    for (attr, lit) in &upd.assignments {
        if !rel.has_attr(attr) {
            return Err(Error::UnknownAttribute(format!("{}.{attr}", rel.name)));
        }
        if rel.is_key_or_foreign_key(attr) {
            return Err(Error::UnsupportedUpdate {
                relation: rel.name.clone(),
                attribute: attr.clone(),
            });
        }
        out.insert(attr.clone(), typed(rel, attr, literal_value(lit)?)?);
    }
    Ok(out)
}

/// Key of the parent row referenced through the view edge entering `child`.
fn parent_key(design: &Design, view: &CandidateView, step: usize, child: &Cells) -> Result<RowKey> {
    let edge = &view.edges[step];
    let parent = design.schema.require(&edge.from)?;
    let values = parent
        .primary_key
        .iter()
        .map(|pk| {
            let fk = edge
                .pairs()
                .find(|(p, _)| p == pk)
                .map(|(_, f)| f)
                .expect("edge label covers the parent key");
            child
                .get(fk)
                .cloned()
                .ok_or_else(|| Error::UnknownAttribute(format!("{}.{fk}", edge.to)))
        })
        .collect::<Result<Vec<_>>>()?;
    encode_key(&values)
}

/// Builds the view row for a freshly inserted tuple of the last relation by
/// reading its ancestors one by one, last to first: exactly `k - 1` reads for
/// a view over `k` relations, or fewer when an ancestor is missing, in which
/// case no view row exists.
pub fn build_insert_view_tuple(
    design: &Design,
    view: &CandidateView,
    tuple: &Cells,
    reader: &dyn RowReader,
) -> Result<Option<Row>> {
    let mut combined = tuple.clone();
    let mut current = tuple.clone();
    for step in (0..view.edges.len()).rev() {
        let key = parent_key(design, view, step, &current)?;
        let Some(parent) = reader.read_row(&view.edges[step].from, &key)? else {
            return Ok(None);
        };
        for (c, v) in &parent.cells {
            combined.entry(c.clone()).or_insert_with(|| v.clone());
        }
        current = parent.cells;
    }
    let spec = design.spec(&view.name())?;
    Ok(Some(Row::new(
        spec.key_of(&combined)?,
        spec.project(&combined),
    )))
}

/// Reads the view row at `key` and derives the key of its row in every index
/// of the view. Empty when the view row is absent.
pub fn build_delete_index_keys(
    design: &Design,
    view: &CandidateView,
    key: &RowKey,
    reader: &dyn RowReader,
) -> Result<Vec<(String, RowKey)>> {
    let name = view.name();
    let Some(row) = reader.read_row(&name, key)? else {
        return Ok(Vec::new());
    };
    design
        .catalog
        .indexes_of(&name)
        .map(|(ix, spec)| Ok((ix.name.clone(), spec.key_of(&row.cells)?)))
        .collect()
}

/// One row rewritten by an update: the row at `old_key` becomes `cells`
/// stored at `new_key` (equal unless an indexed attribute changed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowChange {
    pub table: String,
    pub old_key: RowKey,
    pub new_key: RowKey,
    pub cells: Cells,
}

impl RowChange {
    pub fn rekeys(&self) -> bool {
        self.old_key != self.new_key
    }
}

/// Changes for one stored row of `spec` and for its rows in every index of
/// that table. Index changes come first.
pub fn plan_row_and_indexes(
    design: &Design,
    spec: &TableSpec,
    old: &Cells,
    set: &Cells,
) -> Result<Vec<RowChange>> {
    let mut new = old.clone();
    for (c, v) in set {
        if spec.column_type(c).is_some() {
            new.insert(c.clone(), v.clone());
        }
    }
    let mut out = Vec::new();
    for (_, ix) in design.catalog.indexes_of(spec.name()) {
        out.push(RowChange {
            table: ix.name().to_string(),
            old_key: ix.key_of(old)?,
            new_key: ix.key_of(&new)?,
            cells: ix.project(&new),
        });
    }
    let key = spec.key_of(old)?;
    out.push(RowChange {
        table: spec.name().to_string(),
        old_key: key.clone(),
        new_key: key,
        cells: new,
    });
    Ok(out)
}

/// Affected view rows and view-index rows for an update of the `relation`
/// row with primary key `pk` setting `set`. View rows are located through
/// the view key when the relation is last, else through an index on the
/// relation's key, else by scanning the view.
pub fn plan_update_rows(
    design: &Design,
    view: &CandidateView,
    relation: &str,
    pk: &[Value],
    set: &Cells,
    reader: &dyn RowReader,
) -> Result<Vec<RowChange>> {
    if !update_applies(view, relation) {
        return Ok(Vec::new());
    }
    let rel = design.schema.require(relation)?;
    let name = view.name();
    let spec = design.spec(&name)?;
    let key = encode_key(pk)?;
    let rows: Vec<Row> = if view.last() == relation {
        reader.read_row(&name, &key)?.into_iter().collect()
    } else if let Some((_, ix)) = design
        .catalog
        .indexes_of(&name)
        .find(|(ix, _)| ix.indexed_on == rel.primary_key)
    {
        let mut rows = Vec::new();
        for entry in reader.read_prefix(ix.name(), &key)? {
            if let Some(r) = reader.read_row(&name, &spec.key_of(&entry.cells)?)? {
                rows.push(r);
            }
        }
        rows
    } else {
        reader
            .read_all(&name)?
            .into_iter()
            .filter(|r| {
                rel.primary_key
                    .iter()
                    .zip(pk)
                    .all(|(k, v)| r.cells.get(k) == Some(v))
            })
            .collect()
    };
    let mut out = Vec::new();
    for r in rows {
        out.extend(plan_row_and_indexes(design, spec, &r.cells, set)?);
    }
    Ok(out)
}
