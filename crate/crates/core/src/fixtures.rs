//! Built-in schemas, workloads and deterministic data generators.
//!
//! `company` is the employee/address/department example with a composite-key
//! `Works_On` relation. `tpcw-micro` is the Customer/Order/Order_line slice of
//! TPC-W plus an `Item` relation that belongs to no rooted tree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::schema::{Attribute, ForeignKey, RelationDef, SchemaDef};
use crate::sqlparse::{parse_statement, parse_workload, Statement};
use crate::value::{AttrType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    Company,
    TpcwMicro,
}

impl Fixture {
    pub fn parse(name: &str) -> Option<Fixture> {
        match name {
            "company" => Some(Fixture::Company),
            "tpcw-micro" | "tpcw" => Some(Fixture::TpcwMicro),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Company => "company",
            Fixture::TpcwMicro => "tpcw-micro",
        }
    }

    pub fn schema(self) -> SchemaDef {
        match self {
            Fixture::Company => company_schema(),
            Fixture::TpcwMicro => tpcw_micro_schema(),
        }
    }

    pub fn workload_text(self) -> &'static str {
        match self {
            Fixture::Company => COMPANY_WORKLOAD,
            Fixture::TpcwMicro => TPCW_MICRO_WORKLOAD,
        }
    }

    pub fn workload(self) -> Vec<Statement> {
        parse_workload(self.workload_text()).expect("fixture workload parses")
    }

    /// Parent-first insert statements with bound values.
    pub fn population(self, scale: usize, ratio: usize, seed: u64) -> Vec<Statement> {
        match self {
            Fixture::Company => company_population(scale, ratio, seed),
            Fixture::TpcwMicro => tpcw_micro_population(scale, ratio, seed),
        }
    }
}

fn attrs(list: &[(&str, AttrType)]) -> Vec<Attribute> {
    list.iter().map(|(n, t)| Attribute::new(n, *t)).collect()
}

fn fk(name: &str, attr: &str, references: &str) -> ForeignKey {
    ForeignKey {
        name: name.into(),
        attributes: vec![attr.into()],
        references: references.into(),
    }
}

pub fn company_schema() -> SchemaDef {
    use AttrType::*;
    SchemaDef {
        relations: vec![
            RelationDef {
                name: "Address".into(),
                attributes: attrs(&[("AID", Int), ("Street", String), ("City", String)]),
                primary_key: vec!["AID".into()],
                foreign_keys: vec![],
            },
            RelationDef {
                name: "Department".into(),
                attributes: attrs(&[("DNo", Int), ("DName", String)]),
                primary_key: vec!["DNo".into()],
                foreign_keys: vec![],
            },
            RelationDef {
                name: "Employee".into(),
                attributes: attrs(&[
                    ("EID", Int),
                    ("EName", String),
                    ("Salary", Int),
                    ("EHome_AID", Int),
                    ("EOffice_AID", Int),
                    ("E_DNo", Int),
                ]),
                primary_key: vec!["EID".into()],
                foreign_keys: vec![
                    fk("fk_emp_home", "EHome_AID", "Address"),
                    fk("fk_emp_office", "EOffice_AID", "Address"),
                    fk("fk_emp_dept", "E_DNo", "Department"),
                ],
            },
            RelationDef {
                name: "Works_On".into(),
                attributes: attrs(&[("WO_EID", Int), ("WO_PNo", Int), ("Hours", Int)]),
                primary_key: vec!["WO_EID".into(), "WO_PNo".into()],
                foreign_keys: vec![fk("fk_wo_emp", "WO_EID", "Employee")],
            },
        ],
        indexes: vec![],
        roots: vec!["Address".into(), "Department".into()],
    }
}

pub const COMPANY_WORKLOAD: &str = "\
# W1: address details of an employee
SELECT * FROM Employee as e, Address as a WHERE a.AID = e.EHome_AID and e.EID = ?
# W2: employees and their hours in a department
SELECT * FROM Department as d, Employee as e, Works_On as wo WHERE d.DNo = e.E_DNo and e.EID = wo.WO_EID and d.DNo = ?
# W3: employees working a given number of hours
SELECT * FROM Employee as e, Works_On as wo WHERE e.EID = wo.WO_EID and wo.Hours = ?
INSERT INTO Address (AID, Street, City) VALUES (?, ?, ?)
INSERT INTO Department (DNo, DName) VALUES (?, ?)
INSERT INTO Employee (EID, EName, Salary, EHome_AID, EOffice_AID, E_DNo) VALUES (?, ?, ?, ?, ?, ?)
INSERT INTO Works_On (WO_EID, WO_PNo, Hours) VALUES (?, ?, ?)
UPDATE Employee SET Salary = ? WHERE EID = ?
UPDATE Address SET City = ? WHERE AID = ?
UPDATE Works_On SET Hours = ? WHERE WO_EID = ? AND WO_PNo = ?
DELETE FROM Works_On WHERE WO_EID = ? AND WO_PNo = ?
";

pub fn company_workload() -> Vec<Statement> {
    Fixture::Company.workload()
}

pub fn tpcw_micro_schema() -> SchemaDef {
    use AttrType::*;
    SchemaDef {
        relations: vec![
            RelationDef {
                name: "Customer".into(),
                attributes: attrs(&[
                    ("C_ID", Int),
                    ("C_NAME", String),
                    ("C_BALANCE", Int),
                    ("C_VERSION", Int),
                ]),
                primary_key: vec!["C_ID".into()],
                foreign_keys: vec![],
            },
            RelationDef {
                name: "Order".into(),
                attributes: attrs(&[
                    ("O_ID", Int),
                    ("O_C_ID", Int),
                    ("O_TOTAL", Int),
                    ("O_STATUS", String),
                ]),
                primary_key: vec!["O_ID".into()],
                foreign_keys: vec![fk("fk_order_customer", "O_C_ID", "Customer")],
            },
            RelationDef {
                name: "Order_line".into(),
                attributes: attrs(&[
                    ("OL_ID", Int),
                    ("OL_O_ID", Int),
                    ("OL_I_ID", Int),
                    ("OL_QTY", Int),
                ]),
                primary_key: vec!["OL_ID".into()],
                foreign_keys: vec![
                    fk("fk_line_order", "OL_O_ID", "Order"),
                    fk("fk_line_item", "OL_I_ID", "Item"),
                ],
            },
            RelationDef {
                name: "Item".into(),
                attributes: attrs(&[("I_ID", Int), ("I_TITLE", String), ("I_COST", Int)]),
                primary_key: vec!["I_ID".into()],
                foreign_keys: vec![],
            },
        ],
        indexes: vec![],
        roots: vec!["Customer".into()],
    }
}

pub const Q1: &str =
    "SELECT * FROM Customer as c, Order as o WHERE c.C_ID = o.O_C_ID and c.C_ID = ?";
pub const Q2: &str = "SELECT * FROM Customer as c, Order as o, Order_line as ol WHERE c.C_ID = o.O_C_ID and o.O_ID = ol.OL_O_ID and c.C_ID = ?";

pub const TPCW_MICRO_WORKLOAD: &str = "\
# Q1: customer with orders
SELECT * FROM Customer as c, Order as o WHERE c.C_ID = o.O_C_ID and c.C_ID = ?
# Q2: customer with orders and order lines
SELECT * FROM Customer as c, Order as o, Order_line as ol WHERE c.C_ID = o.O_C_ID and o.O_ID = ol.OL_O_ID and c.C_ID = ?
INSERT INTO Customer (C_ID, C_NAME, C_BALANCE, C_VERSION) VALUES (?, ?, ?, ?)
INSERT INTO Order (O_ID, O_C_ID, O_TOTAL, O_STATUS) VALUES (?, ?, ?, ?)
INSERT INTO Order_line (OL_ID, OL_O_ID, OL_I_ID, OL_QTY) VALUES (?, ?, ?, ?)
INSERT INTO Item (I_ID, I_TITLE, I_COST) VALUES (?, ?, ?)
UPDATE Customer SET C_BALANCE = ?, C_VERSION = ? WHERE C_ID = ?
UPDATE Order SET O_TOTAL = ?, O_STATUS = ? WHERE O_ID = ?
UPDATE Order_line SET OL_QTY = ? WHERE OL_ID = ?
UPDATE Item SET I_COST = ? WHERE I_ID = ?
DELETE FROM Order_line WHERE OL_ID = ?
DELETE FROM Item WHERE I_ID = ?
";

pub fn tpcw_micro_workload() -> Vec<Statement> {
    Fixture::TpcwMicro.workload()
}

fn template(text: &str) -> Statement {
    parse_statement(text).expect("fixture template parses")
}

fn insert(template: &Statement, values: Vec<Value>) -> Statement {
    template.bind(&values).expect("fixture insert binds")
}

const CITIES: &[&str] = &["Nashville", "Austin", "Boston", "Denver", "Seattle"];
const STATUSES: &[&str] = &["PENDING", "SHIPPED", "DENIED", "PROCESSING"];

fn company_population(scale: usize, ratio: usize, seed: u64) -> Vec<Statement> {
    let address = template("INSERT INTO Address (AID, Street, City) VALUES (?, ?, ?)");
    let department = template("INSERT INTO Department (DNo, DName) VALUES (?, ?)");
    let employee = template("INSERT INTO Employee (EID, EName, Salary, EHome_AID, EOffice_AID, E_DNo) VALUES (?, ?, ?, ?, ?, ?)");
    let works_on = template("INSERT INTO Works_On (WO_EID, WO_PNo, Hours) VALUES (?, ?, ?)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio = ratio.max(1);
    let mut out = Vec::new();
    for a in 1..=scale as i64 {
        out.push(insert(
            &address,
            vec![
                a.into(),
                format!("{} Main St", rng.gen_range(1..999)).into(),
                CITIES[rng.gen_range(0..CITIES.len())].into(),
            ],
        ));
    }
    for d in 1..=scale as i64 {
        out.push(insert(
            &department,
            vec![d.into(), format!("Dept{d}").into()],
        ));
    }
    let mut eid = 0i64;
    for home in 1..=scale as i64 {
        for _ in 0..ratio {
            eid += 1;
            out.push(insert(
                &employee,
                vec![
                    eid.into(),
                    format!("Emp{eid}").into(),
                    rng.gen_range(30_000..120_000i64).into(),
                    home.into(),
                    rng.gen_range(1..=scale as i64).into(),
                    rng.gen_range(1..=scale as i64).into(),
                ],
            ));
        }
    }
    for e in 1..=eid {
        for p in 1..=ratio as i64 {
            out.push(insert(
                &works_on,
                vec![e.into(), p.into(), rng.gen_range(1..=40i64).into()],
            ));
        }
    }
    out
}

fn tpcw_micro_population(scale: usize, ratio: usize, seed: u64) -> Vec<Statement> {
    let item = template("INSERT INTO Item (I_ID, I_TITLE, I_COST) VALUES (?, ?, ?)");
    let customer =
        template("INSERT INTO Customer (C_ID, C_NAME, C_BALANCE, C_VERSION) VALUES (?, ?, ?, ?)");
    let order = template("INSERT INTO Order (O_ID, O_C_ID, O_TOTAL, O_STATUS) VALUES (?, ?, ?, ?)");
    let order_line =
        template("INSERT INTO Order_line (OL_ID, OL_O_ID, OL_I_ID, OL_QTY) VALUES (?, ?, ?, ?)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio = ratio.max(1) as i64;
    let scale = scale as i64;
    let items = scale.max(1);
    let mut out = Vec::new();
    for i in 1..=items {
        out.push(insert(
            &item,
            vec![
                i.into(),
                format!("Item{i}").into(),
                rng.gen_range(1..500i64).into(),
            ],
        ));
    }
    for c in 1..=scale {
        out.push(insert(
            &customer,
            vec![
                c.into(),
                format!("Cust{c}").into(),
                0i64.into(),
                0i64.into(),
            ],
        ));
    }
    for o in 1..=scale * ratio {
        let c = (o - 1) / ratio + 1;
        out.push(insert(
            &order,
            vec![
                o.into(),
                c.into(),
                rng.gen_range(1..10_000i64).into(),
                STATUSES[rng.gen_range(0..STATUSES.len())].into(),
            ],
        ));
    }
    for l in 1..=scale * ratio * ratio {
        let o = (l - 1) / ratio + 1;
        out.push(insert(
            &order_line,
            vec![
                l.into(),
                o.into(),
                rng.gen_range(1..=items).into(),
                rng.gen_range(1..10i64).into(),
            ],
        ));
    }
    out
}
