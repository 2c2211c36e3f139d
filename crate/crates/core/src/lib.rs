//! Synergy: materialized-view generation and view-aware transactions over a
//! key-value store.

pub mod bench;
pub mod design;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod maintenance;
pub mod schema;
pub mod session;
pub mod sqlparse;
pub mod storage;
pub mod txn;
pub mod value;
pub mod verify;
pub mod viewgen;
pub mod viewselect;
pub mod workload;

pub use error::{Error, Result};
pub use value::{AttrType, Cells, Value};
