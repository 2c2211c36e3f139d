//! One open database: a design, its store, and the transaction manager.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::engine::{self, ResultSet};
use crate::error::{Error, Result};
use crate::fixtures::Fixture;
use crate::schema::SchemaDef;
use crate::sqlparse::{parse_statement, parse_workload, Statement};
use crate::storage::{load_snapshot, save_snapshot, Store};
use crate::txn::{LockConfig, RecoveryReport, TxnManager, TxnResult, Wal};
use crate::value::Value;
use crate::verify::{verify, VerifyReport};

pub const SNAPSHOT_FILE: &str = "store.snap";
pub const WAL_FILE: &str = "wal.log";
pub const INPUTS_FILE: &str = "design.json";

/// What a data directory was built from, so later commands can rebuild
/// the same design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignInputs {
    pub schema: SchemaDef,
    /// Original (unrewritten) workload text.
    pub workload: String,
    #[serde(default)]
    pub roots: Vec<String>,
    #[serde(default)]
    pub population: Option<Population>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Population {
    pub scale: usize,
    pub ratio: usize,
    pub seed: u64,
}

impl DesignInputs {
    pub fn for_fixture(fixture: Fixture) -> DesignInputs {
        DesignInputs {
            schema: fixture.schema(),
            workload: fixture.workload_text().to_string(),
            roots: Vec::new(),
            population: None,
        }
    }

    pub fn original_workload(&self) -> Result<Vec<Statement>> {
        parse_workload(&self.workload)
    }

    pub fn build(&self) -> Result<Design> {
        Design::build(&self.schema, &self.original_workload()?, &self.roots)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))?;
        std::fs::write(dir.join(INPUTS_FILE), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<DesignInputs> {
        let text = std::fs::read_to_string(dir.join(INPUTS_FILE))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Rows(ResultSet),
    Write(TxnResult),
}

pub struct Session {
    txn: TxnManager,
    pub max_retries: usize,
}

impl Session {
    /// Fresh empty tables with an in-memory log.
    pub fn in_memory(design: Design) -> Result<Session> {
        let design = Arc::new(design);
        let store = Arc::new(Store::new());
        design.create_tables(&store)?;
        Self::from_parts(design, store, Wal::in_memory())
    }

    pub fn from_parts(design: Arc<Design>, store: Arc<Store>, wal: Wal) -> Result<Session> {
        Self::with_config(design, store, wal, LockConfig::default())
    }

    pub fn with_config(
        design: Arc<Design>,
        store: Arc<Store>,
        wal: Wal,
        config: LockConfig,
    ) -> Result<Session> {
        Ok(Session {
            txn: TxnManager::with_config(design, store, wal, config)?,
            max_retries: engine::DEFAULT_MAX_RETRIES,
        })
    }

    /// Opens the store kept in `dir`: loads the snapshot if there is one,
    /// then replays the log written since.
    pub fn open_dir(design: Design, dir: &Path, sync: bool) -> Result<(Session, RecoveryReport)> {
        std::fs::create_dir_all(dir)?;
        let design = Arc::new(design);
        let store = Arc::new(Store::new());
        design.create_tables(&store)?;
        let snap = dir.join(SNAPSHOT_FILE);
        if snap.exists() {
            let rows = load_snapshot(&store, &snap)?;
            log::info!("loaded {rows} rows from {}", snap.display());
        }
        let wal = Wal::open(&dir.join(WAL_FILE), sync)?;
        let session = Self::from_parts(design, store, wal)?;
        let report = session.txn.recover_from_snapshot()?;
        Ok((session, report))
    }

    /// Writes a snapshot into `dir` and empties the log. Callers must make
    /// sure no transaction is running.
    pub fn checkpoint(&self, dir: &Path) -> Result<()> {
        save_snapshot(self.store(), &dir.join(SNAPSHOT_FILE))?;
        self.txn.wal().truncate()
    }

    pub fn design(&self) -> &Arc<Design> {
        self.txn.design()
    }

    pub fn store(&self) -> &Arc<Store> {
        self.txn.store()
    }

    pub fn txn(&self) -> &TxnManager {
        &self.txn
    }

    pub fn execute(&self, stmt: &Statement, params: &[Value]) -> Result<Outcome> {
        match stmt {
            Statement::Select(sel) => {
                let catalog = &self.design().catalog;
                let plan = engine::plan_query(catalog, sel)?;
                let rows =
                    engine::execute_query(self.store(), catalog, &plan, params, self.max_retries)?;
                Ok(Outcome::Rows(rows))
            }
            _ if params.is_empty() => Ok(Outcome::Write(self.txn.execute_write(stmt)?)),
            _ => Ok(Outcome::Write(self.txn.execute_write(&stmt.bind(params)?)?)),
        }
    }

    pub fn execute_sql(&self, sql: &str, params: &[Value]) -> Result<Outcome> {
        self.execute(&parse_statement(sql)?, params)
    }

    pub fn query(&self, stmt: &Statement, params: &[Value]) -> Result<ResultSet> {
        match self.execute(stmt, params)? {
            Outcome::Rows(r) => Ok(r),
            Outcome::Write(_) => Err(Error::Unsupported("expected a SELECT".into())),
        }
    }

    /// Loads a fixture's generated rows through the transaction layer, so
    /// views and indexes fill as a side effect. Returns the statement count.
    pub fn populate(
        &self,
        fixture: Fixture,
        scale: usize,
        ratio: usize,
        seed: u64,
    ) -> Result<usize> {
        let stmts = fixture.population(scale, ratio, seed);
        for s in &stmts {
            self.txn.execute_write(s)?;
        }
        Ok(stmts.len())
    }

    pub fn verify(&self) -> Result<VerifyReport> {
        verify(self.design(), self.store())
    }
}
