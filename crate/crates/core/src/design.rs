//! The complete physical design: base tables and indexes, selected views,
//! view and maintenance indexes, and one lock table per root.

use crate::error::{Error, Result};
use crate::schema::{baseline_transform, Attribute, Rejection, SchemaDef, StoreCatalog, TableSpec};
use crate::sqlparse::Statement;
use crate::storage::{Store, TableHandle, TableKind};
use crate::value::AttrType;
use crate::viewgen::{self, Generation, RootedTree};
use crate::viewselect::{self, MaterializedView, Selection};

pub const LOCK_COLUMN: &str = "lock_status";

pub fn lock_table_name(root: &str) -> String {
    format!("LOCK_{root}")
}

#[derive(Debug, Clone)]
pub struct Design {
    pub schema: SchemaDef,
    pub roots: Vec<String>,
    pub generation: Generation,
    pub selection: Selection,
    pub catalog: StoreCatalog,
    /// Rewritten workload without the rejected writes.
    pub workload: Vec<Statement>,
    pub rejected: Vec<Rejection>,
}

impl Design {
    /// Runs candidate generation and view selection, then lays out every
    /// physical table. `roots` overrides the schema's own root list when
    /// non-empty.
    pub fn build(schema: &SchemaDef, workload: &[Statement], roots: &[String]) -> Result<Design> {
        schema.validate()?;
        let roots: Vec<String> = if roots.is_empty() {
            schema.roots.clone()
        } else {
            roots.to_vec()
        };
        let generation = viewgen::generate(schema, workload, &roots)?;
        let selection = viewselect::select_views(schema, &generation, workload)?;
        let baseline = baseline_transform(schema, &selection.rewritten)?;
        let mut catalog = baseline.catalog;

        for mv in &selection.views {
            let v = &mv.view;
            let shared = v.shared_attributes(schema);
            if !shared.is_empty() {
                return Err(Error::Ambiguity(format!(
                    "view {} repeats attribute(s) {}",
                    v.name(),
                    shared.join(", ")
                )));
            }
            let last = schema.require(v.last())?;
            catalog.push(TableSpec {
                handle: TableHandle {
                    name: v.name(),
                    kind: TableKind::View,
                    key_columns: v.key.clone(),
                    key_types: last.key_types(),
                },
                columns: v.attributes.clone(),
            })?;
        }
        for ix in selection
            .view_indexes
            .iter()
            .chain(&selection.maintenance_indexes)
        {
            catalog.push_index(ix.clone())?;
        }
        for root in &roots {
            let rel = schema.require(root)?;
            catalog.push(TableSpec {
                handle: TableHandle {
                    name: lock_table_name(root),
                    kind: TableKind::Lock,
                    key_columns: rel.primary_key.clone(),
                    key_types: rel.key_types(),
                },
                columns: Vec::<Attribute>::new(),
            })?;
        }
        Ok(Design {
            schema: schema.clone(),
            roots,
            generation,
            workload: baseline.workload,
            rejected: baseline.rejected,
            selection,
            catalog,
        })
    }

    pub fn create_tables(&self, store: &Store) -> Result<()> {
        self.catalog.create_in(store)
    }

    pub fn views(&self) -> &[MaterializedView] {
        &self.selection.views
    }

    pub fn views_containing<'a>(
        &'a self,
        relation: &'a str,
    ) -> impl Iterator<Item = &'a MaterializedView> + 'a {
        self.selection
            .views
            .iter()
            .filter(move |v| v.view.contains(relation))
    }

    pub fn tree_of(&self, relation: &str) -> Option<&RootedTree> {
        self.generation.tree_of(relation)
    }

    pub fn spec(&self, table: &str) -> Result<&TableSpec> {
        self.catalog.require(table)
    }

    /// DDL-style listing of the physical design: views with their defining
    /// joins, then indexes, then lock tables.
    pub fn render_ddl(&self) -> String {
        let mut out = String::new();
        for mv in self.views() {
            let v = &mv.view;
            let conds: Vec<String> = v
                .edges
                .iter()
                .flat_map(|e| {
                    e.pairs()
                        .map(move |(p, f)| format!("{}.{p} = {}.{f}", e.from, e.to))
                })
                .collect();
            let used: Vec<String> = mv.queries.iter().map(|q| format!("#{}", q + 1)).collect();
            out.push_str(&format!(
                "-- {} (used by statement {})\nCREATE MATERIALIZED VIEW {} ({}) PRIMARY KEY ({}) AS\n  SELECT * FROM {} WHERE {};\n",
                v.relations.join(" -> "),
                used.join(", "),
                v.name(),
                columns(&v.attributes),
                v.key.join(", "),
                v.relations.join(", "),
                conds.join(" AND "),
            ));
        }
        for ix in &self.catalog.indexes {
            let purpose = if self.selection.maintenance_indexes.contains(ix) {
                "maintenance"
            } else if self.selection.view_indexes.contains(ix) {
                "view"
            } else {
                "base"
            };
            out.push_str(&format!(
                "-- {purpose} index\nCREATE INDEX {} ON {} ({}) COVERING ({});\n",
                ix.name,
                ix.base,
                ix.indexed_on.join(", "),
                ix.attributes.join(", "),
            ));
        }
        for root in &self.roots {
            let rel = self.schema.relation(root).expect("validated root");
            out.push_str(&format!(
                "CREATE LOCK TABLE {} ({}) PRIMARY KEY ({});\n",
                lock_table_name(root),
                rel.primary_key.join(", "),
                rel.primary_key.join(", "),
            ));
        }
        for r in &self.rejected {
            out.push_str(&format!("-- rejected: {} ({})\n", r.statement, r.reason));
        }
        out
    }
}

fn columns(attrs: &[Attribute]) -> String {
    attrs
        .iter()
        .map(|a| {
            let ty = match a.ty {
                AttrType::Int => "int",
                AttrType::String => "string",
            };
            format!("{} {ty}", a.name)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::Fixture;

    #[test]
    fn company_catalog_layout() {
        let f = Fixture::Company;
        let d = Design::build(&f.schema(), &f.workload(), &[]).unwrap();
        let mut names: Vec<_> = d
            .catalog
            .tables
            .iter()
            .map(|t| t.name().to_string())
            .collect();
        names.sort();
        assert_eq!(
            names,
            vec![
                "Address",
                "Department",
                "Employee",
                "IX_V_Address_Employee_AID",
                "IX_V_Employee_Works_On_EID",
                "IX_V_Employee_Works_On_Hours",
                "LOCK_Address",
                "LOCK_Department",
                "V_Address_Employee",
                "V_Employee_Works_On",
                "Works_On",
            ]
        );
        let hours = d.spec("IX_V_Employee_Works_On_Hours").unwrap();
        assert_eq!(hours.handle.key_columns, vec!["Hours", "WO_EID", "WO_PNo"]);
        assert_eq!(
            hours.columns.len(),
            d.spec("V_Employee_Works_On").unwrap().columns.len()
        );
        assert_eq!(d.workload.len(), 11);
        assert!(d.rejected.is_empty());
    }

    #[test]
    fn ddl_lists_views_indexes_and_locks() {
        let f = Fixture::TpcwMicro;
        let d = Design::build(&f.schema(), &f.workload(), &[]).unwrap();
        let ddl = d.render_ddl();
        assert!(ddl.contains(
            "CREATE MATERIALIZED VIEW V_Customer_Order_Order_line (C_ID int, C_NAME string, C_BALANCE int, C_VERSION int, O_ID int, O_C_ID int, O_TOTAL int, O_STATUS string, OL_ID int, OL_O_ID int, OL_I_ID int, OL_QTY int) PRIMARY KEY (OL_ID) AS\n  SELECT * FROM Customer, Order, Order_line WHERE Customer.C_ID = Order.O_C_ID AND Order.O_ID = Order_line.OL_O_ID;"
        ), "{ddl}");
        assert!(ddl.contains("-- maintenance index\nCREATE INDEX IX_V_Customer_Order_Order_line_O_ID ON V_Customer_Order_Order_line (O_ID)"));
        assert!(ddl.ends_with("CREATE LOCK TABLE LOCK_Customer (C_ID) PRIMARY KEY (C_ID);\n"));
    }

    #[test]
    fn explicit_roots_override_schema() {
        let f = Fixture::Company;
        let d = Design::build(&f.schema(), &f.workload(), &["Department".to_string()]).unwrap();
        assert_eq!(d.roots, vec!["Department"]);
        assert!(d.spec("LOCK_Address").is_err());
        assert!(d
            .tree_of("Works_On")
            .is_some_and(|t| t.root == "Department"));
    }
}
