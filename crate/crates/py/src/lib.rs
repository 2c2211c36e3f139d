//! Python bindings: the `synergy` extension module.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyTypeError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};

use synergy::design::Design;
use synergy::fixtures::Fixture;
use synergy::schema::SchemaDef;
use synergy::session::{DesignInputs, Outcome, Session};
use synergy::sqlparse::{parse_statement, parse_workload, render_workload};
use synergy::viewgen::render_report;
use synergy::{Cells, Value};

create_exception!(synergy, SynergyError, PyException);

fn err(e: synergy::Error) -> PyErr {
    SynergyError::new_err(e.to_string())
}

fn to_value(ob: &Bound<'_, PyAny>) -> PyResult<Value> {
    if ob.is_instance_of::<PyBool>() {
        return Err(PyTypeError::new_err("boolean parameters are not supported"));
    }
    if let Ok(i) = ob.extract::<i64>() {
        return Ok(Value::Int(i));
    }
    if let Ok(s) = ob.extract::<String>() {
        return Ok(Value::Str(s));
    }
    Err(PyTypeError::new_err(format!(
        "parameters must be int or str, got {}",
        ob.get_type().name()?
    )))
}

fn from_value<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Int(i) => i.into_pyobject(py)?.into_any(),
        Value::Str(s) => s.into_pyobject(py)?.into_any(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
    })
}

fn row_dict<'py>(
    py: Python<'py>,
    columns: &[String],
    cells: &Cells,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for c in columns {
        if let Some(v) = cells.get(c) {
            d.set_item(c, from_value(py, v)?)?;
        }
    }
    Ok(d)
}

fn fixture(name: &str) -> PyResult<Fixture> {
    Fixture::parse(name).ok_or_else(|| SynergyError::new_err(format!("unknown fixture `{name}`")))
}

/// The physical design derived from a schema and workload.
#[pyclass(frozen, module = "synergy")]
struct Plan {
    design: Design,
}

#[pymethods]
impl Plan {
    #[new]
    #[pyo3(signature = (schema_json, workload, roots = Vec::new()))]
    fn new(schema_json: &str, workload: &str, roots: Vec<String>) -> PyResult<Self> {
        let schema = SchemaDef::from_json(schema_json).map_err(err)?;
        let stmts = parse_workload(workload).map_err(err)?;
        let design = Design::build(&schema, &stmts, &roots).map_err(err)?;
        Ok(Plan { design })
    }

    #[staticmethod]
    #[pyo3(signature = (name, roots = Vec::new()))]
    fn fixture(name: &str, roots: Vec<String>) -> PyResult<Self> {
        let f = fixture(name)?;
        let design = Design::build(&f.schema(), &f.workload(), &roots).map_err(err)?;
        Ok(Plan { design })
    }

    /// Schema graph, DAG, assignments, rooted trees and candidate views.
    fn report(&self) -> String {
        render_report(&self.design.generation)
    }

    fn ddl(&self) -> String {
        self.design.render_ddl()
    }

    #[getter]
    fn views(&self) -> Vec<String> {
        self.design.views().iter().map(|v| v.name()).collect()
    }

    #[getter]
    fn dropped_edges(&self) -> Vec<String> {
        self.design
            .generation
            .dag
            .dropped
            .iter()
            .map(|(e, _)| format!("{} -> {} {}", e.from, e.to, e.label()))
            .collect()
    }

    #[getter]
    fn rewritten(&self) -> Vec<String> {
        self.design
            .selection
            .rewritten
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[getter]
    fn tables(&self) -> Vec<String> {
        self.design
            .catalog
            .tables
            .iter()
            .map(|t| t.name().to_string())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Plan(views={:?})", self.views())
    }
}

/// An open store with views, indexes and the transaction layer.
#[pyclass(frozen, module = "synergy")]
struct Database {
    session: Session,
    /// Set when created from a fixture; the default for `populate`.
    fixture: Option<Fixture>,
}

#[pymethods]
impl Database {
    /// In-memory database for a built-in fixture (`company`, `tpcw-micro`).
    #[staticmethod]
    #[pyo3(signature = (name, roots = Vec::new()))]
    fn fixture(name: &str, roots: Vec<String>) -> PyResult<Self> {
        let f = fixture(name)?;
        let design = Design::build(&f.schema(), &f.workload(), &roots).map_err(err)?;
        Ok(Database {
            session: Session::in_memory(design).map_err(err)?,
            fixture: Some(f),
        })
    }

    /// In-memory database for a custom schema (JSON) and workload text.
    #[new]
    #[pyo3(signature = (schema_json, workload, roots = Vec::new()))]
    fn new(schema_json: &str, workload: &str, roots: Vec<String>) -> PyResult<Self> {
        let plan = Plan::new(schema_json, workload, roots)?;
        Ok(Database {
            session: Session::in_memory(plan.design).map_err(err)?,
            fixture: None,
        })
    }

    /// Opens a data directory created by `synergy populate`, running recovery.
    #[staticmethod]
    fn open(path: PathBuf) -> PyResult<Self> {
        let inputs = DesignInputs::load(&path).map_err(err)?;
        let (session, _) =
            Session::open_dir(inputs.build().map_err(err)?, &path, false).map_err(err)?;
        Ok(Database {
            session,
            fixture: None,
        })
    }

    /// Inserts a fixture's generated rows through the transaction layer.
    #[pyo3(signature = (scale, ratio, seed = 42, fixture = None))]
    fn populate(
        &self,
        py: Python<'_>,
        scale: usize,
        ratio: usize,
        seed: u64,
        fixture: Option<&str>,
    ) -> PyResult<usize> {
        let f = match fixture {
            Some(name) => self::fixture(name)?,
            None => self
                .fixture
                .ok_or_else(|| SynergyError::new_err("no fixture given for a custom schema"))?,
        };
        py.detach(|| self.session.populate(f, scale, ratio, seed))
            .map_err(err)
    }

    /// Runs one statement. SELECT returns a list of dicts; writes return a
    /// dict describing the transaction.
    #[pyo3(signature = (sql, params = Vec::new()))]
    fn execute<'py>(
        &self,
        py: Python<'py>,
        sql: &str,
        params: Vec<Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let stmt = parse_statement(sql).map_err(err)?;
        let params = params.iter().map(to_value).collect::<PyResult<Vec<_>>>()?;
        match py
            .detach(|| self.session.execute(&stmt, &params))
            .map_err(err)?
        {
            Outcome::Rows(rs) => {
                let rows = PyList::empty(py);
                for r in &rs.rows {
                    rows.append(row_dict(py, &rs.columns, r)?)?;
                }
                Ok(rows.into_any())
            }
            Outcome::Write(t) => {
                let d = PyDict::new(py);
                d.set_item("txn_id", t.txn_id)?;
                d.set_item("relation", t.relation)?;
                d.set_item("applied", t.applied)?;
                d.set_item("locks", t.locks)?;
                d.set_item("rows", t.rows)?;
                Ok(d.into_any())
            }
        }
    }

    /// The workload query at `index`, as rewritten over the views.
    fn rewritten(&self, index: usize) -> PyResult<String> {
        self.session
            .design()
            .selection
            .rewritten
            .get(index)
            .map(|s| s.to_string())
            .ok_or_else(|| SynergyError::new_err(format!("no workload statement #{index}")))
    }

    fn row_count(&self, table: &str) -> PyResult<usize> {
        self.session.store().row_count(table).map_err(err)
    }

    /// `(clean, report)` from recomputing every view and index.
    fn verify(&self) -> PyResult<(bool, String)> {
        let r = self.session.verify().map_err(err)?;
        Ok((r.is_clean(), r.render()))
    }

    fn checkpoint(&self, path: PathBuf) -> PyResult<()> {
        self.session.checkpoint(&path).map_err(err)
    }
}

/// Normalized text of one statement.
#[pyfunction]
fn normalize(sql: &str) -> PyResult<String> {
    Ok(parse_statement(sql).map_err(err)?.to_string())
}

/// Rewritten workload text for a schema and workload.
#[pyfunction]
#[pyo3(signature = (schema_json, workload, roots = Vec::new()))]
fn rewrite_workload(schema_json: &str, workload: &str, roots: Vec<String>) -> PyResult<String> {
    let plan = Plan::new(schema_json, workload, roots)?;
    Ok(render_workload(&plan.design.selection.rewritten))
}

#[pyfunction]
fn fixture_schema(name: &str) -> PyResult<String> {
    Ok(fixture(name)?.schema().to_json())
}

#[pyfunction]
fn fixture_workload(name: &str) -> PyResult<String> {
    Ok(fixture(name)?.workload_text().to_string())
}

#[pymodule]
#[pyo3(name = "synergy")]
fn synergy_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SynergyError", m.py().get_type::<SynergyError>())?;
    m.add_class::<Plan>()?;
    m.add_class::<Database>()?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(rewrite_workload, m)?)?;
    m.add_function(wrap_pyfunction!(fixture_schema, m)?)?;
    m.add_function(wrap_pyfunction!(fixture_workload, m)?)?;
    Ok(())
}
