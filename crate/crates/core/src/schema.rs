//! Relations, keys, indexes and the key/foreign-key schema graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sqlparse::{ColumnRef, CompareOp, Select, Statement};
use crate::storage::{encode_key, RowKey, Store, TableHandle, TableKind};
use crate::value::{AttrType, Cells};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attribute {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: AttrType,
}

impl Attribute {
    pub fn new(name: &str, ty: AttrType) -> Self {
        Attribute {
            name: name.to_string(),
            ty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForeignKey {
    pub name: String,
    #[serde(rename = "attrs")]
    pub attributes: Vec<String>,
    /// Referenced relation; the foreign key points at its primary key.
    pub references: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationDef {
    pub name: String,
    #[serde(rename = "attrs")]
    pub attributes: Vec<Attribute>,
    #[serde(rename = "pk")]
    pub primary_key: Vec<String>,
    #[serde(rename = "fks", default)]
    pub foreign_keys: Vec<ForeignKey>,
}

impl RelationDef {
    pub fn attr_type(&self, name: &str) -> Option<AttrType> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.ty)
    }

    pub fn has_attr(&self, name: &str) -> bool {
        self.attr_type(name).is_some()
    }

    pub fn key_types(&self) -> Vec<AttrType> {
        self.primary_key
            .iter()
            .map(|k| self.attr_type(k).expect("validated primary key"))
            .collect()
    }

    pub fn is_key_or_foreign_key(&self, attr: &str) -> bool {
        self.primary_key.iter().any(|k| k == attr)
            || self
                .foreign_keys
                .iter()
                .any(|fk| fk.attributes.iter().any(|a| a == attr))
    }
}

/// Covered index over a relation or a view. Its row key is `indexed_on`
/// followed by the base key, with repeated attributes dropped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexDef {
    pub name: String,
    pub base: String,
    #[serde(rename = "attrs")]
    pub attributes: Vec<String>,
    #[serde(rename = "on")]
    pub indexed_on: Vec<String>,
}

impl IndexDef {
    pub fn key_attributes(&self, base_key: &[String]) -> Vec<String> {
        let mut key = self.indexed_on.clone();
        for k in base_key {
            if !key.contains(k) {
                key.push(k.clone());
            }
        }
        key
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaDef {
    pub relations: Vec<RelationDef>,
    #[serde(default)]
    pub indexes: Vec<IndexDef>,
    #[serde(default)]
    pub roots: Vec<String>,
}

impl SchemaDef {
    pub fn from_json(text: &str) -> Result<SchemaDef> {
        let schema: SchemaDef = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn relation(&self, name: &str) -> Option<&RelationDef> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&RelationDef> {
        self.relation(name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn is_root(&self, name: &str) -> bool {
        self.roots.iter().any(|r| r == name)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for r in &self.relations {
            if !names.insert(r.name.as_str()) {
                return Err(Error::schema(format!(
                    "relation `{}` defined twice",
                    r.name
                )));
            }
            let mut attrs = HashSet::new();
            for a in &r.attributes {
                if !attrs.insert(a.name.as_str()) {
                    return Err(Error::schema(format!(
                        "relation `{}`: attribute `{}` defined twice",
                        r.name, a.name
                    )));
                }
            }
            if r.primary_key.is_empty() {
                return Err(Error::schema(format!(
                    "relation `{}`: empty primary key",
                    r.name
                )));
            }
            for k in &r.primary_key {
                if !attrs.contains(k.as_str()) {
                    return Err(Error::schema(format!(
                        "relation `{}`: primary key attribute `{k}` is not an attribute",
                        r.name
                    )));
                }
            }
        }
        for r in &self.relations {
            let mut fk_names = HashSet::new();
            for fk in &r.foreign_keys {
                if !fk_names.insert(fk.name.as_str()) {
                    return Err(Error::schema(format!(
                        "relation `{}`: foreign key `{}` defined twice",
                        r.name, fk.name
                    )));
                }
                let target = self.relation(&fk.references).ok_or_else(|| {
                    Error::schema(format!(
                        "relation `{}`: foreign key `{}` references unknown relation `{}`",
                        r.name, fk.name, fk.references
                    ))
                })?;
                if fk.attributes.len() != target.primary_key.len() {
                    return Err(Error::schema(format!(
                        "relation `{}`: foreign key `{}` has {} attributes but the primary key of `{}` has {}",
                        r.name,
                        fk.name,
                        fk.attributes.len(),
                        target.name,
                        target.primary_key.len()
                    )));
                }
                for (a, pk) in fk.attributes.iter().zip(&target.primary_key) {
                    let ty = r.attr_type(a).ok_or_else(|| {
                        Error::schema(format!(
                            "relation `{}`: foreign key `{}` uses unknown attribute `{a}`",
                            r.name, fk.name
                        ))
                    })?;
                    if Some(ty) != target.attr_type(pk) {
                        return Err(Error::schema(format!(
                            "relation `{}`: foreign key `{}` attribute `{a}` does not match the type of `{}.{pk}`",
                            r.name, fk.name, target.name
                        )));
                    }
                }
            }
        }
        for root in &self.roots {
            if self.relation(root).is_none() {
                return Err(Error::schema(format!("root `{root}` is not a relation")));
            }
        }
        let mut index_names = HashSet::new();
        for ix in &self.indexes {
            if !index_names.insert(ix.name.as_str()) || names.contains(ix.name.as_str()) {
                return Err(Error::schema(format!(
                    "index name `{}` is not unique",
                    ix.name
                )));
            }
            let base = self.relation(&ix.base).ok_or_else(|| {
                Error::schema(format!(
                    "index `{}` on unknown relation `{}`",
                    ix.name, ix.base
                ))
            })?;
            if ix.indexed_on.is_empty() {
                return Err(Error::schema(format!(
                    "index `{}` is not indexed on anything",
                    ix.name
                )));
            }
            for a in ix.attributes.iter().chain(&ix.indexed_on) {
                if !base.has_attr(a) {
                    return Err(Error::schema(format!(
                        "index `{}`: `{a}` is not an attribute of `{}`",
                        ix.name, base.name
                    )));
                }
            }
            for a in &ix.indexed_on {
                if !ix.attributes.contains(a) {
                    return Err(Error::schema(format!(
                        "index `{}`: indexed attribute `{a}` is not covered",
                        ix.name
                    )));
                }
            }
        }
        build_schema_graph(self)?;
        Ok(())
    }

    /// Relation names bound by each alias of a SELECT.
    pub fn bindings(&self, sel: &Select) -> Result<HashMap<String, String>> {
        let mut out = HashMap::new();
        for t in &sel.tables {
            self.require(&t.name)?;
            out.insert(t.binding().to_string(), t.name.clone());
        }
        Ok(out)
    }
}

/// Directed key/foreign-key edge, from the referenced relation (primary key
/// side) to the referencing relation (foreign key side).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SchemaEdge {
    pub from: String,
    pub to: String,
    pub fk_name: String,
    pub pk: Vec<String>,
    pub fk: Vec<String>,
}

impl SchemaEdge {
    /// `(PK, FK)` pairs matched component-wise.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pk
            .iter()
            .map(String::as_str)
            .zip(self.fk.iter().map(String::as_str))
    }

    pub fn label(&self) -> String {
        let side = |v: &[String]| {
            if v.len() == 1 {
                v[0].clone()
            } else {
                format!("({})", v.join(", "))
            }
        };
        format!("({}, {})", side(&self.pk), side(&self.fk))
    }
}

impl fmt::Display for SchemaEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {} {}", self.from, self.to, self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SchemaGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<SchemaEdge>,
}

impl SchemaGraph {
    pub fn outgoing<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a SchemaEdge> + 'a {
        self.edges.iter().filter(move |e| e.from == node)
    }

    pub fn incoming<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a SchemaEdge> + 'a {
        self.edges.iter().filter(move |e| e.to == node)
    }

    pub fn contains(&self, node: &str) -> bool {
        self.nodes.iter().any(|n| n == node)
    }

    /// Returns a directed cycle if one exists.
    pub fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        fn visit<'a>(
            g: &'a SchemaGraph,
            n: &'a str,
            marks: &mut HashMap<&'a str, Mark>,
            stack: &mut Vec<&'a str>,
        ) -> Option<Vec<String>> {
            marks.insert(n, Mark::Active);
            stack.push(n);
            for e in g.outgoing(n) {
                match marks.get(e.to.as_str()).copied().unwrap_or(Mark::New) {
                    Mark::Active => {
                        let start = stack.iter().position(|s| *s == e.to).unwrap();
                        let mut cycle: Vec<String> =
                            stack[start..].iter().map(|s| s.to_string()).collect();
                        cycle.push(e.to.clone());
                        return Some(cycle);
                    }
                    Mark::New => {
                        if let Some(c) = visit(g, &e.to, marks, stack) {
                            return Some(c);
                        }
                    }
                    Mark::Done => {}
                }
            }
            stack.pop();
            marks.insert(n, Mark::Done);
            None
        }
        let mut marks = HashMap::new();
        for n in &self.nodes {
            if marks.get(n.as_str()).copied().unwrap_or(Mark::New) == Mark::New {
                if let Some(c) = visit(self, n, &mut marks, &mut Vec::new()) {
                    return Some(c);
                }
            }
        }
        None
    }
}

pub fn build_schema_graph(schema: &SchemaDef) -> Result<SchemaGraph> {
    let mut nodes: Vec<String> = schema.relations.iter().map(|r| r.name.clone()).collect();
    nodes.sort();
    let mut edges = Vec::new();
    for r in &schema.relations {
        for fk in &r.foreign_keys {
            let target = schema.require(&fk.references)?;
            edges.push(SchemaEdge {
                from: target.name.clone(),
                to: r.name.clone(),
                fk_name: fk.name.clone(),
                pk: target.primary_key.clone(),
                fk: fk.attributes.clone(),
            });
        }
    }
    let graph = SchemaGraph { nodes, edges };
    if let Some(cycle) = graph.find_cycle() {
        return Err(Error::Cycle(cycle));
    }
    Ok(graph)
}

// ---------------------------------------------------------------------------
// Baseline relational -> key-value transformation

/// A physical table together with the columns it stores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSpec {
    pub handle: TableHandle,
    pub columns: Vec<Attribute>,
}

impl TableSpec {
    pub fn name(&self) -> &str {
        &self.handle.name
    }

    pub fn column_type(&self, name: &str) -> Option<AttrType> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.ty)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Encoded key of the row holding `cells`.
    pub fn key_of(&self, cells: &Cells) -> Result<RowKey> {
        let values = self
            .handle
            .key_columns
            .iter()
            .map(|k| {
                cells
                    .get(k)
                    .cloned()
                    .ok_or_else(|| Error::UnknownAttribute(format!("{}.{k}", self.handle.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        encode_key(&values)
    }

    /// The subset of `cells` this table stores.
    pub fn project(&self, cells: &Cells) -> Cells {
        self.columns
            .iter()
            .filter_map(|c| cells.get(&c.name).map(|v| (c.name.clone(), v.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StoreCatalog {
    pub tables: Vec<TableSpec>,
    /// Definitions of the index tables, base and view alike.
    pub indexes: Vec<IndexDef>,
}

impl StoreCatalog {
    pub fn get(&self, name: &str) -> Option<&TableSpec> {
        self.tables.iter().find(|t| t.handle.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&TableSpec> {
        self.get(name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn push(&mut self, spec: TableSpec) -> Result<()> {
        if self.get(&spec.handle.name).is_some() {
            return Err(Error::schema(format!(
                "table name `{}` is used twice",
                spec.handle.name
            )));
        }
        self.tables.push(spec);
        Ok(())
    }

    /// Registers an index over a table already in the catalog.
    pub fn push_index(&mut self, ix: IndexDef) -> Result<()> {
        let base = self.require(&ix.base)?;
        let spec = index_table(&ix, &base.columns, &base.handle.key_columns)?;
        self.push(spec)?;
        self.indexes.push(ix);
        Ok(())
    }

    /// Index tables maintained alongside `table`.
    pub fn indexes_of<'a>(
        &'a self,
        table: &'a str,
    ) -> impl Iterator<Item = (&'a IndexDef, &'a TableSpec)> + 'a {
        self.indexes
            .iter()
            .filter(move |ix| ix.base == table)
            .map(|ix| (ix, self.get(&ix.name).expect("index table registered")))
    }

    pub fn create_in(&self, store: &Store) -> Result<()> {
        for t in &self.tables {
            store.create_table(t.handle.clone())?;
        }
        Ok(())
    }
}

pub fn relation_table(rel: &RelationDef) -> TableSpec {
    TableSpec {
        handle: TableHandle {
            name: rel.name.clone(),
            kind: TableKind::Base,
            key_columns: rel.primary_key.clone(),
            key_types: rel.key_types(),
        },
        columns: rel.attributes.clone(),
    }
}

/// Physical table of an index whose base stores `base_columns` under `base_key`.
pub fn index_table(
    ix: &IndexDef,
    base_columns: &[Attribute],
    base_key: &[String],
) -> Result<TableSpec> {
    let ty = |name: &str| {
        base_columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.ty)
            .ok_or_else(|| Error::UnknownAttribute(format!("{}.{name}", ix.base)))
    };
    let key_columns = ix.key_attributes(base_key);
    let key_types = key_columns
        .iter()
        .map(|k| ty(k))
        .collect::<Result<Vec<_>>>()?;
    let mut cover: Vec<String> = ix.attributes.clone();
    for k in &key_columns {
        if !cover.contains(k) {
            cover.push(k.clone());
        }
    }
    let columns = cover
        .iter()
        .map(|c| Ok(Attribute::new(c, ty(c)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TableSpec {
        handle: TableHandle {
            name: ix.name.clone(),
            kind: TableKind::Index,
            key_columns,
            key_types,
        },
        columns,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub statement: Statement,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineOutput {
    pub catalog: StoreCatalog,
    pub workload: Vec<Statement>,
    pub rejected: Vec<Rejection>,
}

fn equality_columns<'a>(
    filters: impl Iterator<Item = (&'a ColumnRef, CompareOp)>,
) -> BTreeSet<&'a str> {
    filters
        .filter(|(_, op)| *op == CompareOp::Eq)
        .map(|(c, _)| c.column.as_str())
        .collect()
}

/// Why a write cannot run as a single-row keyed statement, if it cannot.
pub fn write_rejection(schema: &SchemaDef, stmt: &Statement) -> Option<String> {
    let target = stmt.target()?;
    let Some(rel) = schema.relation(target) else {
        return Some(format!("unknown relation `{target}`"));
    };
    let specified: BTreeSet<&str> = match stmt {
        Statement::Insert(i) => i.columns.iter().map(String::as_str).collect(),
        Statement::Update(u) => equality_columns(u.filters.iter().map(|f| (&f.column, f.op))),
        Statement::Delete(d) => equality_columns(d.filters.iter().map(|f| (&f.column, f.op))),
        Statement::Select(_) => unreachable!(),
    };
    let missing: Vec<&str> = rel
        .primary_key
        .iter()
        .map(String::as_str)
        .filter(|k| !specified.contains(k))
        .collect();
    if missing.is_empty() {
        None
    } else {
        Some(format!(
            "does not specify key attribute(s) {} of `{}`",
            missing.join(", "),
            rel.name
        ))
    }
}

/// One key-value table per relation and per index; reads pass through and
/// writes are kept only when they name every key attribute of their relation.
pub fn baseline_transform(schema: &SchemaDef, workload: &[Statement]) -> Result<BaselineOutput> {
    let mut catalog = StoreCatalog::default();
    for r in &schema.relations {
        catalog.push(relation_table(r))?;
    }
    for ix in &schema.indexes {
        catalog.push_index(ix.clone())?;
    }
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for stmt in workload {
        match write_rejection(schema, stmt) {
            None => kept.push(stmt.clone()),
            Some(reason) => rejected.push(Rejection {
                statement: stmt.clone(),
                reason,
            }),
        }
    }
    Ok(BaselineOutput {
        catalog,
        workload: kept,
        rejected,
    })
}

/// Resolves a column reference of `sel` to `(binding, column)`, checking that
/// the column exists on the bound relation or view.
pub fn resolve_column<'a>(
    sel: &'a Select,
    col: &'a ColumnRef,
    columns_of: impl Fn(&str) -> Option<Vec<String>>,
) -> Result<(String, String)> {
    let binding = match &col.qualifier {
        Some(q) => q.clone(),
        None => {
            let mut found = sel
                .tables
                .iter()
                .filter(|t| columns_of(&t.name).is_some_and(|c| c.contains(&col.column)));
            let first = found
                .next()
                .ok_or_else(|| Error::UnknownAttribute(col.column.clone()))?;
            if found.next().is_some() {
                return Err(Error::Ambiguity(col.column.clone()));
            }
            first.binding().to_string()
        }
    };
    let table = sel
        .table_for(&binding)
        .ok_or_else(|| Error::UnknownAttribute(col.to_string()))?;
    let cols = columns_of(&table.name).ok_or_else(|| Error::UnknownRelation(table.name.clone()))?;
    if !cols.contains(&col.column) {
        return Err(Error::UnknownAttribute(col.to_string()));
    }
    Ok((binding, col.column.clone()))
}

/// Attribute names per relation, for [`resolve_column`].
pub fn relation_columns(schema: &SchemaDef) -> BTreeMap<String, Vec<String>> {
    schema
        .relations
        .iter()
        .map(|r| {
            (
                r.name.clone(),
                r.attributes.iter().map(|a| a.name.clone()).collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::sqlparse::parse_statement;

    #[test]
    fn company_graph_keeps_parallel_edges() {
        let schema = fixtures::company_schema();
        let g = build_schema_graph(&schema).unwrap();
        let mut labels: Vec<String> = g.edges.iter().map(|e| e.to_string()).collect();
        labels.sort();
        assert_eq!(
            labels,
            vec![
                "Address -> Employee (AID, EHome_AID)",
                "Address -> Employee (AID, EOffice_AID)",
                "Department -> Employee (DNo, E_DNo)",
                "Employee -> Works_On (EID, WO_EID)",
            ]
        );
        let fk_count: usize = schema.relations.iter().map(|r| r.foreign_keys.len()).sum();
        assert_eq!(g.edges.len(), fk_count);
    }

    fn rel(name: &str, fks: &[(&str, &str, &str)]) -> RelationDef {
        let mut attributes = vec![Attribute::new(&format!("{name}_id"), AttrType::Int)];
        for (_, a, _) in fks {
            attributes.push(Attribute::new(a, AttrType::Int));
        }
        RelationDef {
            name: name.into(),
            attributes,
            primary_key: vec![format!("{name}_id")],
            foreign_keys: fks
                .iter()
                .map(|(n, a, r)| ForeignKey {
                    name: n.to_string(),
                    attributes: vec![a.to_string()],
                    references: r.to_string(),
                })
                .collect(),
        }
    }

    #[test]
    fn single_relation_graph() {
        let schema = SchemaDef {
            relations: vec![rel("A", &[])],
            indexes: vec![],
            roots: vec![],
        };
        let g = build_schema_graph(&schema).unwrap();
        assert_eq!(g.nodes, vec!["A"]);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn self_reference_is_a_cycle() {
        let schema = SchemaDef {
            relations: vec![rel("A", &[("fk", "parent", "A")])],
            indexes: vec![],
            roots: vec![],
        };
        assert!(matches!(build_schema_graph(&schema), Err(Error::Cycle(_))));
        assert!(matches!(schema.validate(), Err(Error::Cycle(_))));
    }

    #[test]
    fn transitive_cycle_detected() {
        let schema = SchemaDef {
            relations: vec![
                rel("A", &[("f1", "b", "B")]),
                rel("B", &[("f2", "c", "C")]),
                rel("C", &[("f3", "a", "A")]),
            ],
            indexes: vec![],
            roots: vec![],
        };
        match build_schema_graph(&schema) {
            Err(Error::Cycle(path)) => assert_eq!(path.len(), 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_names_offenders() {
        let mut schema = fixtures::company_schema();
        schema.relations[2].foreign_keys[0].references = "Nowhere".into();
        let e = schema.validate().unwrap_err().to_string();
        assert!(e.contains("Employee") && e.contains("Nowhere"), "{e}");

        let mut schema = fixtures::company_schema();
        schema.roots.push("Ghost".into());
        assert!(schema.validate().is_err());

        let mut schema = fixtures::company_schema();
        schema.relations[0].primary_key.clear();
        assert!(schema.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let schema = fixtures::company_schema();
        let back = SchemaDef::from_json(&schema.to_json()).unwrap();
        assert_eq!(schema, back);
        assert!(SchemaDef::from_json(r#"{"relations": [], "bogus": 1}"#).is_err());
    }

    #[test]
    fn baseline_company_tables() {
        let schema = fixtures::company_schema();
        let out = baseline_transform(&schema, &[]).unwrap();
        assert_eq!(out.catalog.tables.len(), 4);
        assert!(out.workload.is_empty() && out.rejected.is_empty());
        let wo = out.catalog.get("Works_On").unwrap();
        assert_eq!(wo.handle.key_columns, vec!["WO_EID", "WO_PNo"]);
    }

    #[test]
    fn baseline_rejects_partial_key_writes() {
        let schema = SchemaDef {
            relations: vec![RelationDef {
                name: "shopping_cart_line".into(),
                attributes: vec![
                    Attribute::new("scl_sc_id", AttrType::Int),
                    Attribute::new("scl_i_id", AttrType::Int),
                    Attribute::new("scl_qty", AttrType::Int),
                ],
                primary_key: vec!["scl_sc_id".into(), "scl_i_id".into()],
                foreign_keys: vec![],
            }],
            indexes: vec![],
            roots: vec![],
        };
        let w = vec![
            parse_statement("DELETE FROM shopping_cart_line WHERE scl_sc_id = ?").unwrap(),
            parse_statement("DELETE FROM shopping_cart_line WHERE scl_sc_id = ? AND scl_i_id = ?")
                .unwrap(),
            parse_statement(
                "UPDATE shopping_cart_line SET scl_qty = 1 WHERE scl_sc_id = 1 AND scl_i_id > 2",
            )
            .unwrap(),
            parse_statement("SELECT * FROM shopping_cart_line WHERE scl_qty = 3").unwrap(),
            parse_statement(
                "INSERT INTO shopping_cart_line (scl_sc_id, scl_i_id, scl_qty) VALUES (1, 2, 3)",
            )
            .unwrap(),
        ];
        let out = baseline_transform(&schema, &w).unwrap();
        assert_eq!(out.workload, vec![w[1].clone(), w[3].clone(), w[4].clone()]);
        assert_eq!(out.rejected.len(), 2);
        assert_eq!(out.rejected[0].statement, w[0]);
        for r in &out.rejected {
            assert!(r.statement.is_write());
        }
    }

    #[test]
    fn index_key_is_indexed_on_then_base_key() {
        let ix = IndexDef {
            name: "i".into(),
            base: "T".into(),
            attributes: vec!["a".into()],
            indexed_on: vec!["a".into(), "k2".into()],
        };
        assert_eq!(
            ix.key_attributes(&["k1".into(), "k2".into()]),
            vec!["a", "k2", "k1"]
        );
    }
}
