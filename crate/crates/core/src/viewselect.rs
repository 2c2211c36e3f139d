//! Choosing which candidate views to materialize, rewriting queries over
//! them, and recommending view and maintenance indexes.
//!
//! For every join query the tree edges that the query's join conditions cover
//! are marked. Marked chains are cut into maximal root-to-leaf paths; each
//! path becomes a view used by the query.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::schema::{IndexDef, SchemaDef, SchemaEdge};
use crate::sqlparse::{
    ColumnRef, CompareOp, JoinCondition, Projection, Select, Statement, TableRef,
};
use crate::viewgen::{alias_joins, CandidateView, Generation, Path};

/// One view used by one query: the view and the query bindings it replaces,
/// in path order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewUse {
    pub view: CandidateView,
    pub bindings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct MarkedEdge {
    edge: SchemaEdge,
    from: String,
    to: String,
}

/// Views that answer the joins of `sel`, found by marking covered tree edges.
pub fn select_views_for_query(
    schema: &SchemaDef,
    generation: &Generation,
    sel: &Select,
) -> Result<Vec<ViewUse>> {
    let mut seen = HashSet::new();
    for t in &sel.tables {
        if !seen.insert(t.name.as_str()) {
            return Err(Error::DuplicateRelation(t.name.clone()));
        }
    }
    let stmt = Statement::Select(sel.clone());
    let joins = alias_joins(schema, &stmt)?;
    let bindings = schema.bindings(sel)?;

    let mut marked: Vec<MarkedEdge> = Vec::new();
    for tree in &generation.trees {
        for edge in &tree.edges {
            for aj in joins.iter().filter(|aj| aj.covers(edge)) {
                let (from, to) = if aj.left == edge.from {
                    (aj.left_binding.clone(), aj.right_binding.clone())
                } else {
                    (aj.right_binding.clone(), aj.left_binding.clone())
                };
                // a binding has at most one marked parent
                if !marked.iter().any(|m| m.to == to) {
                    marked.push(MarkedEdge {
                        edge: edge.clone(),
                        from,
                        to,
                    });
                }
            }
        }
    }

    let position = |b: &str| {
        sel.tables
            .iter()
            .position(|t| t.binding() == b)
            .unwrap_or(usize::MAX)
    };
    let mut consumed: HashSet<String> = HashSet::new();
    let mut uses = Vec::new();
    loop {
        let live: Vec<&MarkedEdge> = marked
            .iter()
            .filter(|m| !consumed.contains(&m.from) && !consumed.contains(&m.to))
            .collect();
        if live.is_empty() {
            break;
        }
        let start = live
            .iter()
            .filter(|m| !live.iter().any(|p| p.to == m.from))
            .map(|m| m.from.clone())
            .min_by_key(|b| (position(b), b.clone()))
            .expect("marked edges form a forest");

        let mut chain = vec![start.clone()];
        let mut edges = Vec::new();
        let mut cur = start;
        loop {
            let next = live.iter().filter(|m| m.from == cur).max_by(|a, b| {
                descent(&live, &a.to)
                    .cmp(&descent(&live, &b.to))
                    .then_with(|| bindings[&b.to].cmp(&bindings[&a.to]))
                    .then_with(|| b.to.cmp(&a.to))
            });
            let Some(m) = next else { break };
            edges.push(m.edge.clone());
            chain.push(m.to.clone());
            cur = m.to.clone();
        }
        consumed.extend(chain.iter().cloned());
        let path = Path {
            nodes: chain.iter().map(|b| bindings[b].clone()).collect(),
            edges,
        };
        uses.push(ViewUse {
            view: CandidateView::from_path(schema, &path)?,
            bindings: chain,
        });
    }
    uses.sort_by_key(|u| position(&u.bindings[0]));
    Ok(uses)
}

fn descent(live: &[&MarkedEdge], binding: &str) -> usize {
    1 + live
        .iter()
        .filter(|m| m.from == binding)
        .map(|m| descent(live, &m.to))
        .max()
        .unwrap_or(0)
}

/// Rewrites `sel` so each view use replaces its bindings with one alias
/// `v1`, `v2`, ... The join conditions realized by the view edges disappear.
pub fn rewrite_query(schema: &SchemaDef, sel: &Select, uses: &[ViewUse]) -> Result<Select> {
    if uses.is_empty() {
        return Ok(sel.clone());
    }
    let mut alias_of: BTreeMap<String, String> = BTreeMap::new();
    let mut view_edges: Vec<(String, &SchemaEdge, String, String)> = Vec::new();
    for (i, u) in uses.iter().enumerate() {
        let shared = u.view.shared_attributes(schema);
        if !shared.is_empty() {
            return Err(Error::Ambiguity(format!(
                "view {} repeats attribute(s) {}",
                u.view.name(),
                shared.join(", ")
            )));
        }
        let alias = format!("v{}", i + 1);
        for b in &u.bindings {
            alias_of.insert(b.clone(), alias.clone());
        }
        for (k, e) in u.view.edges.iter().enumerate() {
            view_edges.push((
                alias.clone(),
                e,
                u.bindings[k].clone(),
                u.bindings[k + 1].clone(),
            ));
        }
    }
    let requalify = |c: &ColumnRef| -> ColumnRef {
        match c.qualifier.as_deref().and_then(|q| alias_of.get(q)) {
            Some(a) => ColumnRef::new(a, &c.column),
            None => c.clone(),
        }
    };

    let mut tables = Vec::new();
    for t in &sel.tables {
        match alias_of.get(t.binding()) {
            None => tables.push(t.clone()),
            Some(alias) if !tables.iter().any(|x: &TableRef| x.binding() == alias) => {
                let idx: usize = alias[1..].parse::<usize>().expect("generated alias") - 1;
                tables.push(TableRef {
                    name: uses[idx].view.name(),
                    alias: Some(alias.clone()),
                });
            }
            Some(_) => {}
        }
    }

    let realized = |j: &JoinCondition| {
        let (Some(lq), Some(rq)) = (j.left.qualifier.as_deref(), j.right.qualifier.as_deref())
        else {
            return false;
        };
        view_edges.iter().any(|(_, e, from, to)| {
            e.pairs().any(|(p, f)| {
                (lq == from && rq == to && j.left.column == p && j.right.column == f)
                    || (lq == to && rq == from && j.left.column == f && j.right.column == p)
            })
        })
    };
    let joins = sel
        .joins
        .iter()
        .filter(|j| !realized(j))
        .map(|j| JoinCondition {
            left: requalify(&j.left),
            right: requalify(&j.right),
        })
        .collect();
    let filters = sel
        .filters
        .iter()
        .map(|f| {
            let mut f = f.clone();
            f.column = requalify(&f.column);
            f
        })
        .collect();
    let projection = match &sel.projection {
        Projection::Star => Projection::Star,
        Projection::Columns(cols) => Projection::Columns(cols.iter().map(requalify).collect()),
    };
    Ok(Select {
        projection,
        tables,
        joins,
        filters,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaterializedView {
    pub view: CandidateView,
    /// Workload positions of the queries that use the view.
    pub queries: Vec<usize>,
}

impl MaterializedView {
    pub fn name(&self) -> String {
        self.view.name()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub views: Vec<MaterializedView>,
    /// The workload with every query rewritten over the selected views.
    pub rewritten: Vec<Statement>,
    pub view_indexes: Vec<IndexDef>,
    pub maintenance_indexes: Vec<IndexDef>,
}

impl Selection {
    pub fn view(&self, name: &str) -> Option<&MaterializedView> {
        self.views.iter().find(|v| v.name() == name)
    }
}

pub fn select_views(
    schema: &SchemaDef,
    generation: &Generation,
    workload: &[Statement],
) -> Result<Selection> {
    let mut views: Vec<MaterializedView> = Vec::new();
    let mut rewritten = Vec::with_capacity(workload.len());
    for (i, stmt) in workload.iter().enumerate() {
        let Statement::Select(sel) = stmt else {
            rewritten.push(stmt.clone());
            continue;
        };
        let uses = select_views_for_query(schema, generation, sel)?;
        for u in &uses {
            match views.iter_mut().find(|v| v.view.name() == u.view.name()) {
                Some(v) => v.queries.push(i),
                None => views.push(MaterializedView {
                    view: u.view.clone(),
                    queries: vec![i],
                }),
            }
        }
        rewritten.push(Statement::Select(rewrite_query(schema, sel, &uses)?));
    }
    let view_indexes = recommend_view_indexes(&views, &rewritten);
    let maintenance_indexes =
        recommend_maintenance_indexes(schema, &views, &view_indexes, workload);
    Ok(Selection {
        views,
        rewritten,
        view_indexes,
        maintenance_indexes,
    })
}

fn index_name(view: &str, on: &[String]) -> String {
    format!("IX_{view}_{}", on.join("_"))
}

fn push_index(
    out: &mut Vec<IndexDef>,
    existing: &[IndexDef],
    view: &CandidateView,
    on: Vec<String>,
) {
    let name = view.name();
    if out
        .iter()
        .chain(existing)
        .any(|ix| ix.base == name && ix.indexed_on == on)
    {
        return;
    }
    out.push(IndexDef {
        name: index_name(&name, &on),
        base: name,
        attributes: view.attributes.iter().map(|a| a.name.clone()).collect(),
        indexed_on: on,
    });
}

/// A covering index for every view whose query selects on an attribute other
/// than the leading view key attribute. Equality filters win over ranges.
pub fn recommend_view_indexes(
    views: &[MaterializedView],
    rewritten: &[Statement],
) -> Vec<IndexDef> {
    let mut out = Vec::new();
    for stmt in rewritten {
        let Statement::Select(sel) = stmt else {
            continue;
        };
        for t in &sel.tables {
            let Some(mv) = views.iter().find(|v| v.name() == t.name) else {
                continue;
            };
            let on_view = sel
                .filters
                .iter()
                .filter(|f| f.column.qualifier.as_deref() == Some(t.binding()));
            let mut ranked: Vec<_> = on_view.collect();
            ranked.sort_by(|a, b| {
                (a.op != CompareOp::Eq, &a.column.column)
                    .cmp(&(b.op != CompareOp::Eq, &b.column.column))
            });
            let covered = |a: &str| {
                a == mv.view.key[0]
                    || out
                        .iter()
                        .any(|ix: &IndexDef| ix.base == t.name && ix.indexed_on[0] == a)
            };
            if ranked.iter().any(|f| covered(&f.column.column)) {
                continue;
            }
            if let Some(f) = ranked.first() {
                push_index(&mut out, &[], &mv.view, vec![f.column.column.clone()]);
            }
        }
    }
    out
}

/// For every update of a relation that is not the last one of a selected
/// view, an index on that relation's key over the view.
pub fn recommend_maintenance_indexes(
    schema: &SchemaDef,
    views: &[MaterializedView],
    view_indexes: &[IndexDef],
    workload: &[Statement],
) -> Vec<IndexDef> {
    let mut out = Vec::new();
    for stmt in workload {
        let Statement::Update(u) = stmt else { continue };
        let Some(rel) = schema.relation(&u.table) else {
            continue;
        };
        for mv in views {
            if mv.view.contains(&rel.name) && mv.view.last() != rel.name {
                push_index(&mut out, view_indexes, &mv.view, rel.primary_key.clone());
            }
        }
    }
    out
}
