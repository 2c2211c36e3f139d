//! Parser and renderer for the SQL subset used by workloads.
//!
//! Supported shapes:
//!
//! ```text
//! SELECT * | ref, ... FROM table [[AS] alias], ... [WHERE cond AND cond ...]
//! INSERT INTO table (col, ...) VALUES (lit, ...)
//! UPDATE table SET col = lit, ... WHERE cond AND ...
//! DELETE FROM table WHERE cond AND ...
//! ```
//!
//! A condition is either an equality `a.x = b.y` between qualified columns
//! (a join when the aliases differ, a same-row check when they match) or a filter `ref op literal` with `op` one of `= < > <= >=`. Literals are
//! 64-bit integers, single-quoted strings, or the positional placeholder `?`.
//! Keywords are case-insensitive; identifiers are case-sensitive.

use std::fmt;

use crate::error::{Error, Result};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Int(i64),
    Str(String),
    Placeholder,
}

impl Literal {
    pub fn to_value(&self) -> Option<Value> {
        match self {
            Literal::Int(v) => Some(Value::Int(*v)),
            Literal::Str(s) => Some(Value::Str(s.clone())),
            Literal::Placeholder => None,
        }
    }

    pub fn from_value(v: &Value) -> Result<Literal> {
        match v {
            Value::Int(i) => Ok(Literal::Int(*i)),
            Value::Str(s) => Ok(Literal::Str(s.clone())),
            Value::Bool(_) => Err(Error::TypeMismatch(
                "boolean parameters are not supported".into(),
            )),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Literal::Placeholder => f.write_str("?"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnRef {
    pub qualifier: Option<String>,
    pub column: String,
}

impl ColumnRef {
    pub fn new(qualifier: &str, column: &str) -> Self {
        ColumnRef {
            qualifier: Some(qualifier.to_string()),
            column: column.to_string(),
        }
    }

    pub fn bare(column: &str) -> Self {
        ColumnRef {
            qualifier: None,
            column: column.to_string(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{q}.{}", self.column),
            None => f.write_str(&self.column),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TableRef {
    pub name: String,
    pub alias: Option<String>,
}

impl TableRef {
    /// Name used to qualify columns of this table.
    pub fn binding(&self) -> &str {
        self.alias.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Lt => "<",
            CompareOp::Gt => ">",
            CompareOp::Le => "<=",
            CompareOp::Ge => ">=",
        }
    }

    fn flipped(self) -> Self {
        match self {
            CompareOp::Lt => CompareOp::Gt,
            CompareOp::Gt => CompareOp::Lt,
            CompareOp::Le => CompareOp::Ge,
            CompareOp::Ge => CompareOp::Le,
            CompareOp::Eq => CompareOp::Eq,
        }
    }

    pub fn eval(self, left: &Value, right: &Value) -> bool {
        match self {
            CompareOp::Eq => left == right,
            CompareOp::Lt => left < right,
            CompareOp::Gt => left > right,
            CompareOp::Le => left <= right,
            CompareOp::Ge => left >= right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Filter {
    pub column: ColumnRef,
    pub op: CompareOp,
    pub value: Literal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JoinCondition {
    pub left: ColumnRef,
    pub right: ColumnRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Projection {
    Star,
    Columns(Vec<ColumnRef>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Select {
    pub projection: Projection,
    pub tables: Vec<TableRef>,
    pub joins: Vec<JoinCondition>,
    pub filters: Vec<Filter>,
}

impl Select {
    pub fn table_for(&self, binding: &str) -> Option<&TableRef> {
        self.tables.iter().find(|t| t.binding() == binding)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Insert {
    pub table: String,
    pub columns: Vec<String>,
    pub values: Vec<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Update {
    pub table: String,
    pub assignments: Vec<(String, Literal)>,
    pub filters: Vec<Filter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Delete {
    pub table: String,
    pub filters: Vec<Filter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Statement {
    Select(Select),
    Insert(Insert),
    Update(Update),
    Delete(Delete),
}

impl Statement {
    pub fn is_write(&self) -> bool {
        !matches!(self, Statement::Select(_))
    }

    /// Target relation of a write statement.
    pub fn target(&self) -> Option<&str> {
        match self {
            Statement::Select(_) => None,
            Statement::Insert(i) => Some(&i.table),
            Statement::Update(u) => Some(&u.table),
            Statement::Delete(d) => Some(&d.table),
        }
    }

    fn literals_mut(&mut self) -> Vec<&mut Literal> {
        match self {
            Statement::Select(s) => s.filters.iter_mut().map(|f| &mut f.value).collect(),
            Statement::Insert(i) => i.values.iter_mut().collect(),
            Statement::Update(u) => u
                .assignments
                .iter_mut()
                .map(|(_, v)| v)
                .chain(u.filters.iter_mut().map(|f| &mut f.value))
                .collect(),
            Statement::Delete(d) => d.filters.iter_mut().map(|f| &mut f.value).collect(),
        }
    }

    pub fn placeholder_count(&self) -> usize {
        self.clone()
            .literals_mut()
            .into_iter()
            .filter(|l| **l == Literal::Placeholder)
            .count()
    }

    /// Substitutes positional parameters for `?` placeholders, in textual order.
    pub fn bind(&self, params: &[Value]) -> Result<Statement> {
        let needed = self.placeholder_count();
        if needed != params.len() {
            return Err(Error::Parameters {
                needed,
                given: params.len(),
            });
        }
        let mut out = self.clone();
        let mut it = params.iter();
        for lit in out.literals_mut() {
            if *lit == Literal::Placeholder {
                *lit = Literal::from_value(it.next().expect("count checked"))?;
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_statement(self))
    }
}

fn render_filters(out: &mut String, joins: &[JoinCondition], filters: &[Filter]) {
    let conds: Vec<String> = joins
        .iter()
        .map(|j| format!("{} = {}", j.left, j.right))
        .chain(
            filters
                .iter()
                .map(|f| format!("{} {} {}", f.column, f.op.symbol(), f.value)),
        )
        .collect();
    if !conds.is_empty() {
        out.push_str(" WHERE ");
        out.push_str(&conds.join(" AND "));
    }
}

pub fn render_statement(stmt: &Statement) -> String {
    let mut out = String::new();
    match stmt {
        Statement::Select(s) => {
            out.push_str("SELECT ");
            match &s.projection {
                Projection::Star => out.push('*'),
                Projection::Columns(cols) => out.push_str(
                    &cols
                        .iter()
                        .map(|c| c.to_string())
                        .collect::<Vec<_>>()
                        .join(", "),
                ),
            }
            out.push_str(" FROM ");
            let tables: Vec<String> = s
                .tables
                .iter()
                .map(|t| match &t.alias {
                    Some(a) => format!("{} as {a}", t.name),
                    None => t.name.clone(),
                })
                .collect();
            out.push_str(&tables.join(", "));
            render_filters(&mut out, &s.joins, &s.filters);
        }
        Statement::Insert(i) => {
            out.push_str(&format!(
                "INSERT INTO {} ({}) VALUES ({})",
                i.table,
                i.columns.join(", "),
                i.values
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
        Statement::Update(u) => {
            out.push_str(&format!("UPDATE {} SET ", u.table));
            out.push_str(
                &u.assignments
                    .iter()
                    .map(|(c, v)| format!("{c} = {v}"))
                    .collect::<Vec<_>>()
                    .join(", "),
            );
            render_filters(&mut out, &[], &u.filters);
        }
        Statement::Delete(d) => {
            out.push_str(&format!("DELETE FROM {}", d.table));
            render_filters(&mut out, &[], &d.filters);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const RESERVED: &[&str] = &[
    "SELECT", "FROM", "WHERE", "AND", "AS", "INSERT", "INTO", "VALUES", "UPDATE", "SET", "DELETE",
    "OR", "NOT", "NULL", "JOIN", "ON", "GROUP", "HAVING", "UNION", "LIMIT", "IN", "LIKE", "EXISTS",
    "BETWEEN", "DISTINCT",
];

fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, column, message: String| Error::Syntax {
        line,
        column,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit()
            || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            Tok::Int(
                s.parse()
                    .map_err(|_| err(tl, tc, format!("integer literal {s} out of range")))?,
            )
        } else if c == '\'' {
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(err(tl, tc, "unterminated string literal".into())),
                    Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(ch) => {
                        if *ch == '\n' {
                            line += 1;
                            col = 0;
                        }
                        s.push(*ch);
                        i += 1;
                    }
                }
            }
            Tok::Str(s)
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let sym = match two.as_str() {
                "<=" => Some("<="),
                ">=" => Some(">="),
                "<>" | "!=" => {
                    return Err(err(
                        tl,
                        tc,
                        "inequality comparisons are not supported".into(),
                    ))
                }
                _ => None,
            };
            match sym {
                Some(s) => {
                    i += 2;
                    Tok::Sym(s)
                }
                None => {
                    i += 1;
                    Tok::Sym(match c {
                        '*' => "*",
                        ',' => ",",
                        '.' => ".",
                        '(' => "(",
                        ')' => ")",
                        '=' => "=",
                        '<' => "<",
                        '>' => ">",
                        '?' => "?",
                        ';' => ";",
                        other => {
                            return Err(err(tl, tc, format!("unexpected character `{other}`")))
                        }
                    })
                }
            }
        };
        col += i - start;
        toks.push(Token {
            tok,
            line: tl,
            column: tc,
        });
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

enum Operand {
    Column(ColumnRef),
    Literal(Literal),
}

enum Condition {
    Join(JoinCondition),
    Filter(Filter),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|t| (t.line, t.column))
            .unwrap_or(self.end)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        let (line, column) = self.here();
        Err(Error::Syntax {
            line,
            column,
            message: message.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            None => "end of input".into(),
            Some(Tok::Ident(s)) => format!("`{s}`"),
            Some(Tok::Int(v)) => format!("`{v}`"),
            Some(Tok::Str(s)) => format!("'{s}'"),
            Some(Tok::Sym(s)) => format!("`{s}`"),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("expected {kw}"))
        }
    }

    fn unexpected<T>(&self, context: &str) -> Result<T> {
        if let Some(Tok::Ident(s)) = self.peek() {
            let upper = s.to_ascii_uppercase();
            let unsupported = match upper.as_str() {
                "OR" => Some("OR conditions are not supported"),
                "GROUP" | "HAVING" => Some("aggregation is not supported"),
                "JOIN" | "ON" => Some("explicit JOIN syntax is not supported; use comma joins"),
                "NULL" => Some("NULL literals are not supported"),
                "NOT" | "IN" | "LIKE" | "EXISTS" | "BETWEEN" => {
                    Some("only = < > <= >= comparisons are supported")
                }
                "ORDER" | "LIMIT" | "UNION" | "DISTINCT" => Some("clause is not supported"),
                _ => None,
            };
            if let Some(msg) = unsupported {
                return self.error(format!("{upper}: {msg}"));
            }
        }
        if self.peek() == Some(&Tok::Sym("(")) {
            return self.error(format!(
                "{context}, found `(`: subqueries and grouping are not supported"
            ));
        }
        self.error(format!("{context}, found {}", self.describe()))
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<()> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.unexpected(&format!("expected `{sym}`"))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) if !is_reserved(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.unexpected(&format!("expected {what}")),
        }
    }

    fn column_ref(&mut self) -> Result<ColumnRef> {
        let first = self.ident("column name")?;
        if self.eat_sym(".") {
            let column = self.ident("column name")?;
            Ok(ColumnRef {
                qualifier: Some(first),
                column,
            })
        } else {
            Ok(ColumnRef::bare(&first))
        }
    }

    fn literal(&mut self) -> Result<Literal> {
        let lit = match self.peek() {
            Some(Tok::Int(v)) => Literal::Int(*v),
            Some(Tok::Str(s)) => Literal::Str(s.clone()),
            Some(Tok::Sym("?")) => Literal::Placeholder,
            _ => return self.unexpected("expected literal or `?`"),
        };
        self.pos += 1;
        Ok(lit)
    }

    fn operand(&mut self) -> Result<Operand> {
        match self.peek() {
            Some(Tok::Ident(_)) => Ok(Operand::Column(self.column_ref()?)),
            _ => Ok(Operand::Literal(self.literal()?)),
        }
    }

    fn compare_op(&mut self) -> Result<CompareOp> {
        let op = match self.peek() {
            Some(Tok::Sym("=")) => CompareOp::Eq,
            Some(Tok::Sym("<")) => CompareOp::Lt,
            Some(Tok::Sym(">")) => CompareOp::Gt,
            Some(Tok::Sym("<=")) => CompareOp::Le,
            Some(Tok::Sym(">=")) => CompareOp::Ge,
            _ => return self.unexpected("expected comparison operator"),
        };
        self.pos += 1;
        Ok(op)
    }

    fn condition(&mut self) -> Result<Condition> {
        let start = self.here();
        let left = self.operand()?;
        let op = self.compare_op()?;
        let right = self.operand()?;
        let fail = |message: &str| {
            Err(Error::Syntax {
                line: start.0,
                column: start.1,
                message: message.to_string(),
            })
        };
        match (left, right) {
            (Operand::Column(l), Operand::Column(r)) => {
                if op != CompareOp::Eq {
                    return fail("non-equality join conditions are not supported");
                }
                if l.qualifier.is_none() || r.qualifier.is_none() {
                    return fail("column comparisons must qualify both columns");
                }
                Ok(Condition::Join(JoinCondition { left: l, right: r }))
            }
            (Operand::Column(column), Operand::Literal(value)) => {
                Ok(Condition::Filter(Filter { column, op, value }))
            }
            (Operand::Literal(value), Operand::Column(column)) => Ok(Condition::Filter(Filter {
                column,
                op: op.flipped(),
                value,
            })),
            (Operand::Literal(_), Operand::Literal(_)) => {
                fail("conditions must reference at least one column")
            }
        }
    }

    fn conditions(&mut self) -> Result<Vec<Condition>> {
        let mut out = vec![self.condition()?];
        while self.eat_keyword("AND") {
            out.push(self.condition()?);
        }
        Ok(out)
    }

    fn finish(&mut self) -> Result<()> {
        self.eat_sym(";");
        if self.pos != self.toks.len() {
            return self.unexpected("expected end of statement");
        }
        Ok(())
    }

    fn statement(&mut self) -> Result<Statement> {
        let stmt = if self.eat_keyword("SELECT") {
            self.select()?
        } else if self.eat_keyword("INSERT") {
            self.insert()?
        } else if self.eat_keyword("UPDATE") {
            self.update()?
        } else if self.eat_keyword("DELETE") {
            self.delete()?
        } else {
            return self.unexpected("expected SELECT, INSERT, UPDATE or DELETE");
        };
        self.finish()?;
        Ok(stmt)
    }

    fn select(&mut self) -> Result<Statement> {
        let projection = if self.eat_sym("*") {
            Projection::Star
        } else {
            let mut cols = vec![self.column_ref()?];
            while self.eat_sym(",") {
                cols.push(self.column_ref()?);
            }
            Projection::Columns(cols)
        };
        self.expect_keyword("FROM")?;
        let mut tables = Vec::new();
        loop {
            let name = self.ident("table name")?;
            let explicit = self.eat_keyword("AS");
            let alias = if explicit || matches!(self.peek(), Some(Tok::Ident(s)) if !is_reserved(s))
            {
                Some(self.ident("alias")?)
            } else {
                None
            };
            tables.push(TableRef { name, alias });
            if !self.eat_sym(",") {
                break;
            }
        }
        let conds = if self.eat_keyword("WHERE") {
            self.conditions()?
        } else {
            Vec::new()
        };

        let mut seen = std::collections::HashSet::new();
        for t in &tables {
            if !seen.insert(t.binding().to_string()) {
                return self.error(format!("alias `{}` is bound twice", t.binding()));
            }
        }
        let mut joins = Vec::new();
        let mut filters = Vec::new();
        for c in conds {
            match c {
                Condition::Join(j) => joins.push(j),
                Condition::Filter(f) => filters.push(f),
            }
        }
        let sel = Select {
            projection,
            tables,
            joins,
            filters,
        };
        self.check_select_refs(&sel)?;
        Ok(Statement::Select(sel))
    }

    fn check_select_refs(&self, sel: &Select) -> Result<()> {
        let mut refs: Vec<&ColumnRef> = sel.filters.iter().map(|f| &f.column).collect();
        for j in &sel.joins {
            refs.push(&j.left);
            refs.push(&j.right);
        }
        if let Projection::Columns(cols) = &sel.projection {
            refs.extend(cols.iter());
        }
        for r in refs {
            match &r.qualifier {
                Some(q) if sel.table_for(q).is_none() => {
                    return self.error(format!("alias `{q}` in `{r}` is not bound in FROM"));
                }
                None if sel.tables.len() > 1 => {
                    return self.error(format!(
                        "column `{r}` must be qualified when several tables are listed"
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn single_table_filters(&self, table: &str, conds: Vec<Condition>) -> Result<Vec<Filter>> {
        let mut out = Vec::new();
        for c in conds {
            match c {
                Condition::Join(_) => {
                    return self.error("joins are only supported in SELECT statements");
                }
                Condition::Filter(f) => {
                    if let Some(q) = &f.column.qualifier {
                        if q != table {
                            return self.error(format!(
                                "qualifier `{q}` does not name the target table `{table}`"
                            ));
                        }
                    }
                    out.push(f);
                }
            }
        }
        Ok(out)
    }

    fn insert(&mut self) -> Result<Statement> {
        self.expect_keyword("INTO")?;
        let table = self.ident("table name")?;
        self.expect_sym("(")?;
        let mut columns = vec![self.ident("column name")?];
        while self.eat_sym(",") {
            columns.push(self.ident("column name")?);
        }
        self.expect_sym(")")?;
        self.expect_keyword("VALUES")?;
        self.expect_sym("(")?;
        let mut values = vec![self.literal()?];
        while self.eat_sym(",") {
            values.push(self.literal()?);
        }
        self.expect_sym(")")?;
        if columns.len() != values.len() {
            return self.error(format!(
                "{} columns but {} values",
                columns.len(),
                values.len()
            ));
        }
        Ok(Statement::Insert(Insert {
            table,
            columns,
            values,
        }))
    }

    fn update(&mut self) -> Result<Statement> {
        let table = self.ident("table name")?;
        self.expect_keyword("SET")?;
        let mut assignments = Vec::new();
        loop {
            let col = self.ident("column name")?;
            self.expect_sym("=")?;
            assignments.push((col, self.literal()?));
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_keyword("WHERE")?;
        let conds = self.conditions()?;
        let filters = self.single_table_filters(&table, conds)?;
        Ok(Statement::Update(Update {
            table,
            assignments,
            filters,
        }))
    }

    fn delete(&mut self) -> Result<Statement> {
        self.expect_keyword("FROM")?;
        let table = self.ident("table name")?;
        self.expect_keyword("WHERE")?;
        let conds = self.conditions()?;
        let filters = self.single_table_filters(&table, conds)?;
        Ok(Statement::Delete(Delete { table, filters }))
    }
}

pub fn parse_statement(text: &str) -> Result<Statement> {
    let toks = lex(text)?;
    let last_line = text.lines().count().max(1);
    let last_col = text
        .lines()
        .last()
        .map(|l| l.chars().count() + 1)
        .unwrap_or(1);
    let mut p = Parser {
        toks,
        pos: 0,
        end: (last_line, last_col),
    };
    p.statement()
}

/// Parses a workload file: one statement per line, blank lines and `#`
/// comments skipped. Errors report the file line.
pub fn parse_workload(text: &str) -> Result<Vec<Statement>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_statement(line) {
            Ok(s) => out.push(s),
            Err(Error::Syntax {
                column, message, ..
            }) => {
                return Err(Error::Syntax {
                    line: n + 1,
                    column,
                    message,
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn render_workload(stmts: &[Statement]) -> String {
    let mut out = String::new();
    for s in stmts {
        out.push_str(&render_statement(s));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_employee_address_join() {
        let s = parse_statement(
            "SELECT * FROM Employee as e, Address as a WHERE a.AID = e.EHome_AID and e.EID = ?",
        )
        .unwrap();
        let Statement::Select(sel) = s else { panic!() };
        assert_eq!(sel.projection, Projection::Star);
        assert_eq!(
            sel.tables,
            vec![
                TableRef {
                    name: "Employee".into(),
                    alias: Some("e".into())
                },
                TableRef {
                    name: "Address".into(),
                    alias: Some("a".into())
                },
            ]
        );
        assert_eq!(
            sel.joins,
            vec![JoinCondition {
                left: ColumnRef::new("a", "AID"),
                right: ColumnRef::new("e", "EHome_AID")
            }]
        );
        assert_eq!(
            sel.filters,
            vec![Filter {
                column: ColumnRef::new("e", "EID"),
                op: CompareOp::Eq,
                value: Literal::Placeholder
            }]
        );
    }

    #[test]
    fn parses_keyed_delete() {
        let s = parse_statement("DELETE FROM Order WHERE O_ID = 7").unwrap();
        assert_eq!(
            s,
            Statement::Delete(Delete {
                table: "Order".into(),
                filters: vec![Filter {
                    column: ColumnRef::bare("O_ID"),
                    op: CompareOp::Eq,
                    value: Literal::Int(7)
                }],
            })
        );
        assert_eq!(render_statement(&s), "DELETE FROM Order WHERE O_ID = 7");
    }

    #[test]
    fn rejects_or() {
        let e = parse_statement("SELECT * FROM A WHERE A.x OR A.y").unwrap_err();
        assert!(
            matches!(
                e,
                Error::Syntax {
                    line: 1,
                    column: 27,
                    ..
                }
            ),
            "{e}"
        );
        let e = parse_statement("SELECT * FROM A WHERE A.x = 1 OR A.y = 2").unwrap_err();
        assert!(e.to_string().contains("OR"), "{e}");
    }

    #[test]
    fn same_alias_equality_is_a_row_check() {
        let Statement::Select(s) = parse_statement("SELECT * FROM A as a WHERE a.x = a.y").unwrap()
        else {
            unreachable!()
        };
        assert_eq!(s.joins.len(), 1);
        assert_eq!(s.joins[0].left.qualifier, s.joins[0].right.qualifier);
    }

    #[test]
    fn rejects_unsupported_constructs() {
        for bad in [
            "SELECT * FROM A as a, B as b WHERE a.x < b.y",
            "SELECT * FROM A WHERE A.x IN (SELECT y FROM B)",
            "SELECT * FROM A WHERE x = 1 GROUP BY x",
            "SELECT * FROM A WHERE x = NULL",
            "SELECT * FROM A as a, B as b WHERE x = 1",
            "SELECT * FROM A as a WHERE b.x = 1",
            "SELECT * FROM A WHERE x = y",
            "SELECT * FROM A JOIN B ON A.x = B.y",
            "INSERT INTO A (x, y) VALUES (1)",
            "UPDATE A SET x = 1",
            "DELETE FROM A WHERE B.x = 1",
            "SELECT * FROM A WHERE x <> 1",
            "SELECT * FROM A;;",
            "",
        ] {
            assert!(
                matches!(parse_statement(bad), Err(Error::Syntax { .. })),
                "accepted: {bad}"
            );
        }
    }

    #[test]
    fn keywords_case_insensitive_identifiers_not() {
        let a = parse_statement("select * from Works_On as wo where wo.Hours >= 3").unwrap();
        let b = parse_statement("SELECT * FROM Works_On AS wo WHERE wo.Hours >= 3").unwrap();
        assert_eq!(a, b);
        let c = parse_statement("SELECT * FROM works_on AS wo WHERE wo.Hours >= 3").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn literal_on_left_is_normalised() {
        let a = parse_statement("SELECT * FROM T WHERE 5 < x").unwrap();
        let b = parse_statement("SELECT * FROM T WHERE x > 5").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn insert_update_round_trip() {
        for text in [
            "INSERT INTO Customer (C_ID, C_NAME) VALUES (-3, 'O''Brien')",
            "UPDATE Employee SET Salary = ?, Name = 'x' WHERE EID = 5",
            "SELECT e.EID, wo.Hours FROM Employee as e, Works_On as wo WHERE e.EID = wo.WO_EID AND wo.Hours < 10",
        ] {
            let s = parse_statement(text).unwrap();
            assert_eq!(render_statement(&s), text);
        }
    }

    #[test]
    fn binding_is_positional() {
        let s = parse_statement("UPDATE T SET a = ?, b = 2 WHERE k = ? AND j = ?").unwrap();
        assert_eq!(s.placeholder_count(), 3);
        let b = s.bind(&[Value::Int(1), "x".into(), Value::Int(9)]).unwrap();
        assert_eq!(
            render_statement(&b),
            "UPDATE T SET a = 1, b = 2 WHERE k = 'x' AND j = 9"
        );
        assert!(matches!(
            s.bind(&[Value::Int(1)]),
            Err(Error::Parameters {
                needed: 3,
                given: 1
            })
        ));
    }

    #[test]
    fn workload_file_skips_comments_and_reports_lines() {
        let text = "# comment\n\nDELETE FROM A WHERE x = 1\nSELECT * FROM A WHERE A.x OR 1\n";
        match parse_workload(text) {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert_eq!(parse_workload("# only\n").unwrap(), vec![]);
    }
}
