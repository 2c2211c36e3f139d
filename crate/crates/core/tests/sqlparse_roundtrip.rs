use proptest::prelude::*;

use synergy::sqlparse::{
    parse_statement, parse_workload, render_workload, ColumnRef, CompareOp, Delete, Filter, Insert,
    JoinCondition, Literal, Projection, Select, Statement, TableRef, Update,
};

// Prefixed so no generated name collides with a keyword.
fn ident() -> impl Strategy<Value = String> {
    "[A-Z][A-Za-z0-9_]{0,6}".prop_map(|s| format!("x{s}"))
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        any::<i64>().prop_map(Literal::Int),
        "[a-z0-9 ',_]{0,8}".prop_map(Literal::Str),
        Just(Literal::Placeholder),
    ]
}

fn op() -> impl Strategy<Value = CompareOp> {
    prop_oneof![
        Just(CompareOp::Eq),
        Just(CompareOp::Lt),
        Just(CompareOp::Gt),
        Just(CompareOp::Le),
        Just(CompareOp::Ge),
    ]
}

/// A column of the binding picked by `pick`, qualified unless the
/// statement has a single table and `bare` is set.
fn column_of(bindings: &[String], pick: usize, bare: bool, column: String) -> ColumnRef {
    let qualifier = if bare && bindings.len() == 1 {
        None
    } else {
        Some(bindings[pick % bindings.len()].clone())
    };
    ColumnRef { qualifier, column }
}

type RawCol = (usize, bool, String);

fn raw_col() -> impl Strategy<Value = RawCol> {
    (any::<usize>(), any::<bool>(), ident())
}

fn single_table_filters(table: &str, raw: Vec<(RawCol, CompareOp, Literal)>) -> Vec<Filter> {
    let bindings = [table.to_string()];
    raw.into_iter()
        .map(|((i, bare, c), op, value)| Filter {
            column: column_of(&bindings, i, bare, c),
            op,
            value,
        })
        .collect()
}

fn statement() -> impl Strategy<Value = Statement> {
    let raw_filters = |min: usize| prop::collection::vec((raw_col(), op(), literal()), min..3);
    let select = (
        prop::option::of(prop::collection::vec(raw_col(), 1..4)),
        prop::collection::vec((ident(), any::<bool>()), 1..4),
        prop::collection::vec((raw_col(), raw_col()), 0..3),
        raw_filters(0),
    )
        .prop_map(|(cols, tables, joins, filters)| {
            // numbered names and aliases keep every binding distinct
            let tables: Vec<TableRef> = tables
                .into_iter()
                .enumerate()
                .map(|(i, (name, aliased))| TableRef {
                    name: format!("{name}{i}"),
                    alias: aliased.then(|| format!("a{i}")),
                })
                .collect();
            let b: Vec<String> = tables.iter().map(|t| t.binding().to_string()).collect();
            let col = |(i, bare, c): RawCol| column_of(&b, i, bare, c);
            Statement::Select(Select {
                projection: cols.map_or(Projection::Star, |cs| {
                    Projection::Columns(cs.into_iter().map(col).collect())
                }),
                joins: joins
                    .into_iter()
                    .map(|((li, _, lc), (ri, _, rc))| JoinCondition {
                        left: column_of(&b, li, false, lc),
                        right: column_of(&b, ri, false, rc),
                    })
                    .collect(),
                filters: filters
                    .into_iter()
                    .map(|(c, op, value)| Filter {
                        column: col(c),
                        op,
                        value,
                    })
                    .collect(),
                tables,
            })
        });
    let insert =
        (ident(), prop::collection::vec((ident(), literal()), 1..5)).prop_map(|(table, pairs)| {
            let (columns, values) = pairs.into_iter().unzip();
            Statement::Insert(Insert {
                table,
                columns,
                values,
            })
        });
    let update = (
        ident(),
        prop::collection::vec((ident(), literal()), 1..4),
        raw_filters(1),
    )
        .prop_map(|(table, assignments, raw)| {
            let filters = single_table_filters(&table, raw);
            Statement::Update(Update {
                table,
                assignments,
                filters,
            })
        });
    // writes must name the rows they touch
    let delete = (ident(), raw_filters(1)).prop_map(|(table, raw)| {
        let filters = single_table_filters(&table, raw);
        Statement::Delete(Delete { table, filters })
    });
    prop_oneof![select, insert, update, delete]
}

proptest! {
    #[test]
    fn render_then_parse_is_identity(stmt in statement()) {
        let text = stmt.to_string();
        let parsed = parse_statement(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(&parsed, &stmt);
        prop_assert_eq!(parsed.to_string(), text);
    }

    #[test]
    fn workloads_round_trip(stmts in prop::collection::vec(statement(), 0..6)) {
        let text = render_workload(&stmts);
        prop_assert_eq!(parse_workload(&text).unwrap(), stmts);
    }

    #[test]
    fn keyword_case_does_not_matter(stmt in statement()) {
        let text = stmt.to_string();
        let lowered = ["SELECT", "FROM", "WHERE", "AND", "INSERT", "INTO", "VALUES", "UPDATE", "SET", "DELETE"]
            .iter()
            .fold(text.clone(), |t, k| t.replace(&format!("{k} "), &format!("{} ", k.to_lowercase())));
        prop_assert_eq!(parse_statement(&lowered).unwrap(), stmt);
    }
}

#[test]
fn extreme_integers_survive() {
    for v in [i64::MIN, i64::MAX, 0, -1] {
        let text = format!("DELETE FROM T WHERE a = {v}");
        assert_eq!(parse_statement(&text).unwrap().to_string(), text);
    }
}
