//! Candidate view generation.
//!
//! The schema graph is reduced to a DAG with at most one edge per node pair,
//! ordered topologically, and every non-root relation is assigned to at most
//! one designer-chosen root. Each root's rooted graph is then thinned to a
//! rooted tree; every path of two or more relations in a tree is a candidate
//! view.
//!
//! All choices are weighted by the number of workload join conditions that
//! coincide with the edges involved. Ties are broken deterministically:
//! edges by foreign-key name, paths by length, then root position, then the
//! path signature.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::schema::{Attribute, SchemaDef, SchemaEdge, SchemaGraph};
use crate::sqlparse::Statement;

// ---------------------------------------------------------------------------
// Workload join profile

/// Join conditions between one pair of aliases of a query, oriented
/// `left -> right`, as `(left attr, right attr)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasJoin {
    pub left_binding: String,
    pub right_binding: String,
    pub left: String,
    pub right: String,
    pub pairs: BTreeSet<(String, String)>,
}

impl AliasJoin {
    /// Whether these conditions contain the edge's full `(PK, FK)` label.
    pub fn covers(&self, edge: &SchemaEdge) -> bool {
        let forward = self.left == edge.from
            && self.right == edge.to
            && edge
                .pairs()
                .all(|(p, f)| self.pairs.contains(&(p.to_string(), f.to_string())));
        let backward = self.right == edge.from
            && self.left == edge.to
            && edge
                .pairs()
                .all(|(p, f)| self.pairs.contains(&(f.to_string(), p.to_string())));
        forward || backward
    }
}

/// Per-query alias joins of every equi-join SELECT in a workload.
#[derive(Debug, Clone, Default)]
pub struct JoinProfile {
    pub queries: Vec<Vec<AliasJoin>>,
}

/// Groups the join conditions of a SELECT by alias pair.
pub fn alias_joins(schema: &SchemaDef, stmt: &Statement) -> Result<Vec<AliasJoin>> {
    let Statement::Select(sel) = stmt else {
        return Ok(Vec::new());
    };
    let bindings = schema.bindings(sel)?;
    let mut grouped: BTreeMap<(String, String), AliasJoin> = BTreeMap::new();
    for j in &sel.joins {
        let (lq, rq) = (
            j.left.qualifier.clone().unwrap_or_default(),
            j.right.qualifier.clone().unwrap_or_default(),
        );
        if lq == rq {
            continue;
        }
        let (lb, la, rb, ra) = if lq <= rq {
            (lq, &j.left.column, rq, &j.right.column)
        } else {
            (rq, &j.right.column, lq, &j.left.column)
        };
        let rel = |b: &str| {
            bindings
                .get(b)
                .cloned()
                .ok_or_else(|| Error::UnknownAttribute(format!("{b}.*")))
        };
        let entry = grouped
            .entry((lb.clone(), rb.clone()))
            .or_insert(AliasJoin {
                left_binding: lb.clone(),
                right_binding: rb.clone(),
                left: rel(&lb)?,
                right: rel(&rb)?,
                pairs: BTreeSet::new(),
            });
        entry.pairs.insert((la.clone(), ra.clone()));
    }
    Ok(grouped.into_values().collect())
}

impl JoinProfile {
    pub fn from_workload(schema: &SchemaDef, workload: &[Statement]) -> Result<JoinProfile> {
        let mut queries = Vec::new();
        for stmt in workload {
            if let Statement::Select(sel) = stmt {
                if !sel.joins.is_empty() {
                    queries.push(alias_joins(schema, stmt)?);
                }
            }
        }
        Ok(JoinProfile { queries })
    }

    fn edge_weight(&self, edge: &SchemaEdge) -> u64 {
        self.queries
            .iter()
            .flatten()
            .filter(|aj| aj.covers(edge))
            .count() as u64
    }
}

/// Number of workload join conditions that coincide with any of `edges`.
pub fn heuristic_weight(edges: &[SchemaEdge], profile: &JoinProfile) -> u64 {
    edges.iter().map(|e| profile.edge_weight(e)).sum()
}

// ---------------------------------------------------------------------------
// Paths

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    pub nodes: Vec<String>,
    pub edges: Vec<SchemaEdge>,
}

impl Path {
    fn single(node: &str) -> Path {
        Path {
            nodes: vec![node.to_string()],
            edges: Vec::new(),
        }
    }

    pub fn root(&self) -> &str {
        &self.nodes[0]
    }

    pub fn last(&self) -> &str {
        self.nodes.last().expect("paths are non-empty")
    }

    pub fn signature(&self) -> String {
        let mut s = self.nodes[0].clone();
        for (e, n) in self.edges.iter().zip(&self.nodes[1..]) {
            let _ = write!(s, " -[{}]-> {n}", e.fk_name);
        }
        s
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.nodes.join(" -> "))
    }
}

/// All directed paths from `from` to `to` using `edges` (exhaustive DFS).
pub fn enumerate_paths(edges: &[SchemaEdge], from: &str, to: &str) -> Vec<Path> {
    fn dfs(edges: &[SchemaEdge], cur: &mut Path, to: &str, out: &mut Vec<Path>) {
        if cur.last() == to {
            out.push(cur.clone());
            return;
        }
        let here = cur.last().to_string();
        for e in edges.iter().filter(|e| e.from == here) {
            if cur.nodes.contains(&e.to) {
                continue;
            }
            cur.nodes.push(e.to.clone());
            cur.edges.push(e.clone());
            dfs(edges, cur, to, out);
            cur.nodes.pop();
            cur.edges.pop();
        }
    }
    let mut out = Vec::new();
    dfs(edges, &mut Path::single(from), to, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Step 1: DAG

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagReport {
    pub dag: SchemaGraph,
    pub kept: Vec<(SchemaEdge, u64)>,
    pub dropped: Vec<(SchemaEdge, u64)>,
}

/// Keeps one maximum-weight edge per ordered node pair.
pub fn to_dag(graph: &SchemaGraph, profile: &JoinProfile) -> DagReport {
    let mut best: HashMap<(&str, &str), (u64, &SchemaEdge)> = HashMap::new();
    for e in &graph.edges {
        let w = profile.edge_weight(e);
        let slot = best
            .entry((e.from.as_str(), e.to.as_str()))
            .or_insert((w, e));
        if w > slot.0 || (w == slot.0 && e.fk_name < slot.1.fk_name) {
            *slot = (w, e);
        }
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for e in &graph.edges {
        let w = profile.edge_weight(e);
        if std::ptr::eq(best[&(e.from.as_str(), e.to.as_str())].1, e) {
            kept.push((e.clone(), w));
        } else {
            dropped.push((e.clone(), w));
        }
    }
    DagReport {
        dag: SchemaGraph {
            nodes: graph.nodes.clone(),
            edges: kept.iter().map(|(e, _)| e.clone()).collect(),
        },
        kept,
        dropped,
    }
}

// ---------------------------------------------------------------------------
// Step 2: topological order

/// Kahn's algorithm taking the smallest ready name first, which yields the
/// lexicographically smallest valid ordering.
pub fn topological_order(dag: &SchemaGraph) -> Result<Vec<String>> {
    let mut indegree: BTreeMap<&str, usize> = dag.nodes.iter().map(|n| (n.as_str(), 0)).collect();
    for e in &dag.edges {
        *indegree
            .get_mut(e.to.as_str())
            .ok_or_else(|| Error::UnknownRelation(e.to.clone()))? += 1;
    }
    let mut ready: BinaryHeap<Reverse<&str>> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| Reverse(*n))
        .collect();
    let mut order = Vec::with_capacity(dag.nodes.len());
    while let Some(Reverse(n)) = ready.pop() {
        order.push(n.to_string());
        for e in dag.outgoing(n) {
            let d = indegree.get_mut(e.to.as_str()).expect("edge endpoint");
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(e.to.as_str()));
            }
        }
    }
    if order.len() != dag.nodes.len() {
        let stuck: Vec<String> = indegree
            .into_iter()
            .filter(|(n, d)| *d > 0 && !order.iter().any(|o| o == n))
            .map(|(n, _)| n.to_string())
            .collect();
        return Err(Error::Cycle(stuck));
    }
    Ok(order)
}

// ---------------------------------------------------------------------------
// Step 3: assign relations to roots

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RootedGraph {
    pub root: String,
    pub nodes: Vec<String>,
    pub edges: Vec<SchemaEdge>,
}

impl RootedGraph {
    fn add_path(&mut self, path: &Path) {
        for n in &path.nodes {
            if !self.nodes.contains(n) {
                self.nodes.push(n.clone());
            }
        }
        for e in &path.edges {
            if !self.edges.contains(e) {
                self.edges.push(e.clone());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedPath {
    pub path: Path,
    pub weight: u64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub relation: String,
    /// Candidate paths in the order they were examined.
    pub candidates: Vec<WeightedPath>,
    pub root: Option<String>,
}

fn root_rank(roots: &[String], r: &str) -> usize {
    roots.iter().position(|q| q == r).unwrap_or(usize::MAX)
}

/// Assigns each non-root relation, in topological order, to the root of its
/// best admissible path. A path is admissible when it contains exactly one
/// root and none of its relations belongs to a different root already.
pub fn assign_to_roots(
    dag: &SchemaGraph,
    order: &[String],
    roots: &[String],
    profile: &JoinProfile,
) -> Result<(Vec<RootedGraph>, Vec<Assignment>)> {
    for r in roots {
        if !dag.contains(r) {
            return Err(Error::UnknownRelation(r.clone()));
        }
    }
    let mut graphs: Vec<RootedGraph> = roots
        .iter()
        .map(|r| RootedGraph {
            root: r.clone(),
            nodes: vec![r.clone()],
            edges: Vec::new(),
        })
        .collect();
    let mut owner: HashMap<String, String> = roots.iter().map(|r| (r.clone(), r.clone())).collect();
    let mut report = Vec::new();

    for rel in order.iter().filter(|n| !roots.contains(n)) {
        let mut candidates: Vec<(Path, u64)> = roots
            .iter()
            .flat_map(|r| enumerate_paths(&dag.edges, r, rel))
            .map(|p| {
                let w = heuristic_weight(&p.edges, profile);
                (p, w)
            })
            .collect();
        candidates.sort_by(|(a, wa), (b, wb)| {
            wb.cmp(wa)
                .then(a.nodes.len().cmp(&b.nodes.len()))
                .then(root_rank(roots, a.root()).cmp(&root_rank(roots, b.root())))
                .then(a.signature().cmp(&b.signature()))
        });

        let mut chosen = None;
        let mut examined = Vec::new();
        for (path, weight) in candidates {
            let root = path.root().to_string();
            let admissible = chosen.is_none()
                && path.nodes[1..].iter().all(|n| !roots.contains(n))
                && path
                    .nodes
                    .iter()
                    .all(|n| owner.get(n).is_none_or(|o| *o == root));
            if admissible {
                chosen = Some(path.clone());
            }
            examined.push(WeightedPath {
                path,
                weight,
                admissible,
            });
        }
        let root = chosen.as_ref().map(|p| p.root().to_string());
        if let Some(path) = &chosen {
            let g = graphs
                .iter_mut()
                .find(|g| g.root == path.root())
                .expect("root graph exists");
            g.add_path(path);
            for n in &path.nodes {
                owner.insert(n.clone(), path.root().to_string());
            }
        }
        report.push(Assignment {
            relation: rel.clone(),
            candidates: examined,
            root,
        });
    }
    Ok((graphs, report))
}

// ---------------------------------------------------------------------------
// Step 4: rooted graph -> rooted tree

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RootedTree {
    pub root: String,
    pub nodes: Vec<String>,
    pub edges: Vec<SchemaEdge>,
}

impl RootedTree {
    pub fn contains(&self, node: &str) -> bool {
        self.nodes.iter().any(|n| n == node)
    }

    pub fn parent_edge(&self, node: &str) -> Option<&SchemaEdge> {
        self.edges.iter().find(|e| e.to == node)
    }

    pub fn children<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a SchemaEdge> + 'a {
        self.edges.iter().filter(move |e| e.from == node)
    }

    /// The unique path from the root to `node`.
    pub fn path_to(&self, node: &str) -> Option<Path> {
        if !self.contains(node) {
            return None;
        }
        let mut nodes = vec![node.to_string()];
        let mut edges = Vec::new();
        let mut cur = node.to_string();
        while let Some(e) = self.parent_edge(&cur) {
            edges.push(e.clone());
            nodes.push(e.from.clone());
            cur = e.from.clone();
        }
        nodes.reverse();
        edges.reverse();
        Some(Path { nodes, edges })
    }

    /// Whether every node has exactly one path from the root.
    pub fn is_tree(&self) -> bool {
        let mut incoming: HashMap<&str, usize> = HashMap::new();
        for e in &self.edges {
            if !self.contains(&e.from) || !self.contains(&e.to) {
                return false;
            }
            *incoming.entry(e.to.as_str()).or_default() += 1;
        }
        self.nodes.iter().all(|n| {
            let inc = incoming.get(n.as_str()).copied().unwrap_or(0);
            if *n == self.root {
                inc == 0
            } else {
                inc == 1 && self.path_to(n).is_some_and(|p| p.root() == self.root)
            }
        })
    }
}

/// Thins a rooted graph to a tree: repeatedly take the last pending relation
/// in topological order and add its heaviest root path. Paths must agree with
/// the tree built so far wherever they touch it, which keeps every node's
/// root path unique.
pub fn to_rooted_tree(rg: &RootedGraph, order: &[String], profile: &JoinProfile) -> RootedTree {
    let mut tree = RootedTree {
        root: rg.root.clone(),
        nodes: vec![rg.root.clone()],
        edges: Vec::new(),
    };
    let mut pending: Vec<&String> = order
        .iter()
        .filter(|n| **n != rg.root && rg.nodes.contains(n))
        .collect();

    while let Some(target) = pending.last().copied() {
        let mut candidates: Vec<(Path, u64)> = enumerate_paths(&rg.edges, &rg.root, target)
            .into_iter()
            .filter(|p| consistent_with(&tree, p))
            .map(|p| {
                let w = heuristic_weight(&p.edges, profile);
                (p, w)
            })
            .collect();
        candidates.sort_by(|(a, wa), (b, wb)| {
            wb.cmp(wa)
                .then(a.nodes.len().cmp(&b.nodes.len()))
                .then(a.signature().cmp(&b.signature()))
        });
        let Some((path, _)) = candidates.into_iter().next() else {
            // unreachable for well-formed rooted graphs; drop the relation
            pending.pop();
            continue;
        };
        for (e, n) in path.edges.iter().zip(&path.nodes[1..]) {
            if !tree.contains(n) {
                tree.nodes.push(n.clone());
                tree.edges.push(e.clone());
            }
        }
        pending.retain(|n| !path.nodes.contains(n));
    }
    tree
}

fn consistent_with(tree: &RootedTree, path: &Path) -> bool {
    path.edges
        .iter()
        .all(|e| !tree.contains(&e.to) || tree.parent_edge(&e.to) == Some(e))
}

// ---------------------------------------------------------------------------
// Candidate views

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateView {
    pub relations: Vec<String>,
    pub edges: Vec<SchemaEdge>,
    pub attributes: Vec<Attribute>,
    pub key: Vec<String>,
}

impl CandidateView {
    pub fn from_path(schema: &SchemaDef, path: &Path) -> Result<CandidateView> {
        if path.nodes.len() < 2 {
            return Err(Error::schema("a view joins at least two relations"));
        }
        let mut attributes: Vec<Attribute> = Vec::new();
        for r in &path.nodes {
            for a in &schema.require(r)?.attributes {
                if !attributes.iter().any(|x| x.name == a.name) {
                    attributes.push(a.clone());
                }
            }
        }
        Ok(CandidateView {
            relations: path.nodes.clone(),
            edges: path.edges.clone(),
            attributes,
            key: schema.require(path.last())?.primary_key.clone(),
        })
    }

    pub fn name(&self) -> String {
        format!("V_{}", self.relations.join("_"))
    }

    pub fn last(&self) -> &str {
        self.relations.last().expect("views are non-empty")
    }

    pub fn contains(&self, relation: &str) -> bool {
        self.relations.iter().any(|r| r == relation)
    }

    /// Attribute names that more than one relation of the view defines.
    pub fn shared_attributes(&self, schema: &SchemaDef) -> Vec<String> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for r in &self.relations {
            if let Some(rel) = schema.relation(r) {
                for a in &rel.attributes {
                    *seen.entry(a.name.as_str()).or_default() += 1;
                }
            }
        }
        let mut out: Vec<String> = seen
            .into_iter()
            .filter(|(_, c)| *c > 1)
            .map(|(a, _)| a.to_string())
            .collect();
        out.sort();
        out
    }
}

/// Every directed path of at least two relations in every tree.
pub fn enumerate_candidate_views(
    schema: &SchemaDef,
    trees: &[RootedTree],
) -> Result<Vec<CandidateView>> {
    let mut out = Vec::new();
    for tree in trees {
        let mut paths = Vec::new();
        for start in &tree.nodes {
            for end in &tree.nodes {
                if start == end {
                    continue;
                }
                if let Some(p) = enumerate_paths(&tree.edges, start, end).into_iter().next() {
                    paths.push(p);
                }
            }
        }
        paths.sort_by(|a, b| {
            a.nodes
                .len()
                .cmp(&b.nodes.len())
                .then(a.signature().cmp(&b.signature()))
        });
        for p in paths {
            out.push(CandidateView::from_path(schema, &p)?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Whole mechanism

#[derive(Debug, Clone)]
pub struct Generation {
    pub graph: SchemaGraph,
    pub dag: DagReport,
    pub order: Vec<String>,
    pub rooted_graphs: Vec<RootedGraph>,
    pub assignments: Vec<Assignment>,
    pub trees: Vec<RootedTree>,
    pub unassigned: Vec<String>,
    pub candidates: Vec<CandidateView>,
}

impl Generation {
    pub fn tree_of(&self, relation: &str) -> Option<&RootedTree> {
        self.trees.iter().find(|t| t.contains(relation))
    }
}

pub fn generate(
    schema: &SchemaDef,
    workload: &[Statement],
    roots: &[String],
) -> Result<Generation> {
    let graph = crate::schema::build_schema_graph(schema)?;
    let profile = JoinProfile::from_workload(schema, workload)?;
    let dag = to_dag(&graph, &profile);
    let order = topological_order(&dag.dag)?;
    let (rooted_graphs, assignments) = assign_to_roots(&dag.dag, &order, roots, &profile)?;
    let trees: Vec<RootedTree> = rooted_graphs
        .iter()
        .map(|rg| to_rooted_tree(rg, &order, &profile))
        .collect();
    let unassigned = assignments
        .iter()
        .filter(|a| a.root.is_none())
        .map(|a| a.relation.clone())
        .collect();
    let candidates = enumerate_candidate_views(schema, &trees)?;
    Ok(Generation {
        graph,
        dag,
        order,
        rooted_graphs,
        assignments,
        trees,
        unassigned,
        candidates,
    })
}

/// Stable plain-text report of a generation run.
pub fn render_report(g: &Generation) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "== schema graph");
    for e in &g.graph.edges {
        let _ = writeln!(s, "edge {e}");
    }
    let _ = writeln!(s, "== dag");
    for (e, w) in &g.dag.kept {
        let _ = writeln!(s, "kept {e} weight={w}");
    }
    for (e, w) in &g.dag.dropped {
        let _ = writeln!(s, "dropped {e} weight={w}");
    }
    let _ = writeln!(s, "== topological order");
    let _ = writeln!(s, "{}", g.order.join(", "));
    let _ = writeln!(s, "== assignment");
    for a in &g.assignments {
        let _ = writeln!(
            s,
            "relation {} -> {}",
            a.relation,
            a.root.as_deref().unwrap_or("(unassigned)")
        );
        for c in &a.candidates {
            let _ = writeln!(
                s,
                "  path {} weight={}{}",
                c.path.signature(),
                c.weight,
                if c.admissible { " selected" } else { "" }
            );
        }
    }
    let _ = writeln!(s, "== rooted trees");
    for t in &g.trees {
        let _ = writeln!(s, "tree {} nodes=[{}]", t.root, t.nodes.join(", "));
        for e in &t.edges {
            let _ = writeln!(s, "  {e}");
        }
    }
    if !g.unassigned.is_empty() {
        let _ = writeln!(s, "unassigned [{}]", g.unassigned.join(", "));
    }
    let _ = writeln!(s, "== candidate views");
    for v in &g.candidates {
        let _ = writeln!(
            s,
            "{} [{}] key=({})",
            v.name(),
            v.relations.join(", "),
            v.key.join(", ")
        );
    }
    s
}
