//! In-process evaluation of accepted statements over the loaded tables.
//!
//! Semantics follow SQLite closely enough for the supported subset:
//! three-valued logic, integer arithmetic that widens to REAL on overflow,
//! NULL on division by zero, case-insensitive LIKE and NULLs first in
//! ascending order.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::*;
use super::validate::ValidatedSql;
use crate::knowledge::{StructuredStore, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowEvidence {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub row_count: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum ExecutionError {
    #[error("statement was not accepted by the guard")]
    NotAccepted,
    #[error("table `{0}` disappeared from the store")]
    MissingTable(String),
}

pub fn execute_sql(v: &ValidatedSql, store: &StructuredStore) -> Result<RowEvidence, ExecutionError> {
    let plan = v.plan.as_ref().ok_or(ExecutionError::NotAccepted)?;
    Executor::new(plan, store)?.run()
}

struct Executor<'a> {
    plan: &'a Select,
    layout: HashMap<(String, String), usize>,
    /// Per binding: (name, offset, width, column names)
    bindings: Vec<(String, usize, Vec<String>)>,
    sources: Vec<&'a [Vec<Value>]>,
}

type Row = Vec<Value>;

/// Evaluation scope: one joined row, or a group of them.
struct Scope<'r> {
    rows: &'r [&'r Row],
    /// Output values, for alias references in HAVING and ORDER BY.
    output: Option<&'r [Value]>,
}

impl<'a> Executor<'a> {
    fn new(plan: &'a Select, store: &'a StructuredStore) -> Result<Self, ExecutionError> {
        let mut ex = Executor {
            plan,
            layout: HashMap::new(),
            bindings: Vec::new(),
            sources: Vec::new(),
        };
        let mut offset = 0;
        for t in std::iter::once(&plan.from).chain(plan.joins.iter().map(|j| &j.table)) {
            let table = store
                .table(&t.name)
                .ok_or_else(|| ExecutionError::MissingTable(t.name.clone()))?;
            let binding = t.binding().to_ascii_lowercase();
            let cols: Vec<String> = table.decl.columns.iter().map(|c| c.name.clone()).collect();
            for (i, c) in cols.iter().enumerate() {
                ex.layout.insert((binding.clone(), c.to_ascii_lowercase()), offset + i);
            }
            ex.bindings.push((binding, offset, cols.clone()));
            ex.sources.push(&table.rows);
            offset += cols.len();
        }
        Ok(ex)
    }

    fn run(&self) -> Result<RowEvidence, ExecutionError> {
        let joined = self.join();
        let filtered: Vec<&Row> = joined
            .iter()
            .filter(|r| match &self.plan.selection {
                Some(w) => truthy(&self.eval(w, &row_scope(std::slice::from_ref(r)))),
                None => true,
            })
            .collect();

        let columns = self.output_columns();
        let aggregate = !self.plan.group_by.is_empty()
            || self.plan.having.is_some()
            || self.plan.items.iter().any(|i| matches!(i, SelectItem::Expr { expr, .. } if expr.contains_aggregate()))
            || self.plan.order_by.iter().any(|o| o.expr.contains_aggregate());

        // (output row, rows backing it)
        let mut records: Vec<(Row, Vec<&Row>)> = Vec::new();
        if aggregate {
            for group in self.groups(&filtered) {
                let scope = Scope {
                    rows: &group,
                    output: None,
                };
                let out = self.project(&scope);
                if let Some(h) = &self.plan.having {
                    let scope = Scope {
                        output: Some(&out),
                        ..scope
                    };
                    if !truthy(&self.eval(h, &scope)) {
                        continue;
                    }
                }
                records.push((out, group));
            }
        } else {
            for r in filtered {
                let group = vec![r];
                let out = self.project(&row_scope(&group));
                records.push((out, group));
            }
        }

        if self.plan.distinct {
            let mut seen: Vec<Row> = Vec::new();
            records.retain(|(out, _)| {
                if seen.iter().any(|s| rows_equal(s, out)) {
                    false
                } else {
                    seen.push(out.clone());
                    true
                }
            });
        }

        if !self.plan.order_by.is_empty() {
            let mut keyed: Vec<(Vec<Value>, Row)> = records
                .into_iter()
                .map(|(out, group)| {
                    let scope = Scope {
                        rows: &group,
                        output: Some(&out),
                    };
                    let keys = self.plan.order_by.iter().map(|o| self.order_key(o, &scope)).collect();
                    (keys, out)
                })
                .collect();
            keyed.sort_by(|(a, _), (b, _)| {
                for (o, (x, y)) in self.plan.order_by.iter().zip(a.iter().zip(b)) {
                    let ord = x.total_cmp(y);
                    let ord = if o.desc { ord.reverse() } else { ord };
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
                Ordering::Equal
            });
            records = keyed.into_iter().map(|(_, out)| (out, Vec::new())).collect();
        }

        let offset = self.plan.offset.unwrap_or(0) as usize;
        let limit = self.plan.limit.map_or(usize::MAX, |l| l as usize);
        let rows: Vec<Row> = records.into_iter().skip(offset).take(limit).map(|(o, _)| o).collect();
        Ok(RowEvidence {
            columns,
            row_count: rows.len(),
            rows,
        })
    }

    fn join(&self) -> Vec<Row> {
        let mut rows: Vec<Row> = self.sources[0].to_vec();
        for (j, join) in self.plan.joins.iter().enumerate() {
            let right = self.sources[j + 1];
            let width = self.bindings[j + 1].2.len();
            let mut next = Vec::new();
            for l in &rows {
                let mut matched = false;
                for r in right {
                    let mut combined = l.clone();
                    combined.extend(r.iter().cloned());
                    let keep = match &join.on {
                        Some(on) => truthy(&self.eval(on, &row_scope(&[&combined]))),
                        None => true,
                    };
                    if keep {
                        matched = true;
                        next.push(combined);
                    }
                }
                if !matched && join.kind == JoinKind::Left {
                    let mut combined = l.clone();
                    combined.extend(std::iter::repeat_n(Value::Null, width));
                    next.push(combined);
                }
            }
            rows = next;
        }
        rows
    }

    /// Groups in order of first appearance. Without GROUP BY the whole
    /// input is one group, even when empty.
    fn groups<'r>(&self, rows: &[&'r Row]) -> Vec<Vec<&'r Row>> {
        if self.plan.group_by.is_empty() {
            return vec![rows.to_vec()];
        }
        let mut keys: Vec<Vec<Value>> = Vec::new();
        let mut groups: Vec<Vec<&Row>> = Vec::new();
        for &r in rows {
            let key: Vec<Value> = self
                .plan
                .group_by
                .iter()
                .map(|e| self.eval(e, &row_scope(&[r])))
                .collect();
            match keys.iter().position(|k| rows_equal(k, &key)) {
                Some(i) => groups[i].push(r),
                None => {
                    keys.push(key);
                    groups.push(vec![r]);
                }
            }
        }
        groups
    }

    fn output_columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        for item in &self.plan.items {
            match item {
                SelectItem::Wildcard => {
                    for (_, _, names) in &self.bindings {
                        cols.extend(names.iter().cloned());
                    }
                }
                SelectItem::QualifiedWildcard(t) => {
                    if let Some((_, _, names)) = self.binding(t) {
                        cols.extend(names.iter().cloned());
                    }
                }
                SelectItem::Expr { expr, alias } => {
                    cols.push(alias.clone().unwrap_or_else(|| expr.label()));
                }
            }
        }
        cols
    }

    fn binding(&self, name: &str) -> Option<&(String, usize, Vec<String>)> {
        self.bindings.iter().find(|(b, _, _)| b.eq_ignore_ascii_case(name))
    }

    fn project(&self, scope: &Scope<'_>) -> Row {
        let first = scope.rows.first();
        let mut out = Vec::new();
        for item in &self.plan.items {
            match item {
                SelectItem::Wildcard => match first {
                    Some(r) => out.extend(r.iter().cloned()),
                    None => out.extend(std::iter::repeat_n(Value::Null, self.width())),
                },
                SelectItem::QualifiedWildcard(t) => {
                    let (_, off, names) = self.binding(t).expect("validated binding");
                    match first {
                        Some(r) => out.extend(r[*off..off + names.len()].iter().cloned()),
                        None => out.extend(std::iter::repeat_n(Value::Null, names.len())),
                    }
                }
                SelectItem::Expr { expr, .. } => out.push(self.eval(expr, scope)),
            }
        }
        out
    }

    fn width(&self) -> usize {
        self.bindings.iter().map(|(_, _, c)| c.len()).sum()
    }

    fn order_key(&self, o: &OrderItem, scope: &Scope<'_>) -> Value {
        match (&o.expr, scope.output) {
            (Expr::Literal(Value::Integer(pos)), Some(out)) => out[*pos as usize - 1].clone(),
            _ => self.eval(&o.expr, scope),
        }
    }

    fn alias_value(&self, name: &str, out: &[Value]) -> Option<Value> {
        // aliases only name plain expression items; locate by output position
        let mut idx = 0;
        for item in &self.plan.items {
            match item {
                SelectItem::Wildcard => idx += self.width(),
                SelectItem::QualifiedWildcard(t) => idx += self.binding(t).map_or(0, |b| b.2.len()),
                SelectItem::Expr { alias, .. } => {
                    if alias.as_deref().is_some_and(|a| a.eq_ignore_ascii_case(name)) {
                        return out.get(idx).cloned();
                    }
                    idx += 1;
                }
            }
        }
        None
    }

    fn eval(&self, e: &Expr, scope: &Scope<'_>) -> Value {
        match e {
            Expr::Column { table: Some(t), name } => {
                let idx = self.layout[&(t.to_ascii_lowercase(), name.to_ascii_lowercase())];
                scope.rows.first().map_or(Value::Null, |r| r[idx].clone())
            }
            Expr::Column { table: None, name } => scope
                .output
                .and_then(|out| self.alias_value(name, out))
                .unwrap_or(Value::Null),
            Expr::Literal(v) => v.clone(),
            Expr::Neg(inner) => match self.eval(inner, scope) {
                Value::Integer(i) => i.checked_neg().map_or(Value::Real(-(i as f64)), Value::Integer),
                Value::Real(r) => Value::Real(-r),
                Value::Text(t) => match numeric_prefix(&t) {
                    Value::Integer(i) => Value::Integer(-i),
                    Value::Real(r) => Value::Real(-r),
                    _ => Value::Integer(0),
                },
                Value::Null => Value::Null,
            },
            Expr::Not(inner) => not(truth(&self.eval(inner, scope))),
            Expr::Binary { op, left, right } => self.binary(*op, left, right, scope),
            Expr::Agg { func, distinct, arg } => self.aggregate(*func, *distinct, arg.as_deref(), scope),
            Expr::Func { func, args } => {
                let vals: Vec<Value> = args.iter().map(|a| self.eval(a, scope)).collect();
                scalar(*func, vals)
            }
            Expr::IsNull { expr, negated } => {
                let null = self.eval(expr, scope).is_null();
                Value::Integer((null != *negated) as i64)
            }
            Expr::InList { expr, list, negated } => {
                let v = self.eval(expr, scope);
                if v.is_null() {
                    return Value::Null;
                }
                let mut saw_null = false;
                for item in list {
                    let x = self.eval(item, scope);
                    match compare(&v, &x) {
                        Some(Ordering::Equal) => return Value::Integer(!*negated as i64),
                        None => saw_null = true,
                        _ => {}
                    }
                }
                if saw_null {
                    Value::Null
                } else {
                    Value::Integer(*negated as i64)
                }
            }
            Expr::Between {
                expr,
                low,
                high,
                negated,
            } => {
                let v = self.eval(expr, scope);
                let lo = compare(&v, &self.eval(low, scope)).map(|o| o != Ordering::Less);
                let hi = compare(&v, &self.eval(high, scope)).map(|o| o != Ordering::Greater);
                let within = and3(lo, hi);
                match within {
                    Some(b) => Value::Integer((b != *negated) as i64),
                    None => Value::Null,
                }
            }
            Expr::Like {
                expr,
                pattern,
                negated,
            } => {
                let v = self.eval(expr, scope);
                let p = self.eval(pattern, scope);
                if v.is_null() || p.is_null() {
                    return Value::Null;
                }
                let m = like(&p.to_string(), &v.to_string());
                Value::Integer((m != *negated) as i64)
            }
        }
    }

    fn binary(&self, op: BinaryOp, left: &Expr, right: &Expr, scope: &Scope<'_>) -> Value {
        match op {
            BinaryOp::And => {
                let l = truth(&self.eval(left, scope));
                if l == Some(false) {
                    return Value::Integer(0);
                }
                bool_value(and3(l, truth(&self.eval(right, scope))))
            }
            BinaryOp::Or => {
                let l = truth(&self.eval(left, scope));
                if l == Some(true) {
                    return Value::Integer(1);
                }
                let r = truth(&self.eval(right, scope));
                bool_value(match (l, r) {
                    (_, Some(true)) => Some(true),
                    (Some(false), Some(false)) => Some(false),
                    _ => None,
                })
            }
            _ => {
                let l = self.eval(left, scope);
                let r = self.eval(right, scope);
                match op {
                    BinaryOp::Eq => bool_value(compare(&l, &r).map(|o| o == Ordering::Equal)),
                    BinaryOp::NotEq => bool_value(compare(&l, &r).map(|o| o != Ordering::Equal)),
                    BinaryOp::Lt => bool_value(compare(&l, &r).map(|o| o == Ordering::Less)),
                    BinaryOp::LtEq => bool_value(compare(&l, &r).map(|o| o != Ordering::Greater)),
                    BinaryOp::Gt => bool_value(compare(&l, &r).map(|o| o == Ordering::Greater)),
                    BinaryOp::GtEq => bool_value(compare(&l, &r).map(|o| o != Ordering::Less)),
                    BinaryOp::Concat => {
                        if l.is_null() || r.is_null() {
                            Value::Null
                        } else {
                            Value::Text(format!("{l}{r}"))
                        }
                    }
                    _ => arithmetic(op, &l, &r),
                }
            }
        }
    }

    fn aggregate(&self, func: Aggregate, distinct: bool, arg: Option<&Expr>, scope: &Scope<'_>) -> Value {
        let Some(arg) = arg else {
            return Value::Integer(scope.rows.len() as i64);
        };
        let mut values: Vec<Value> = scope
            .rows
            .iter()
            .map(|r| self.eval(arg, &row_scope(&[*r])))
            .filter(|v| !v.is_null())
            .collect();
        if distinct {
            let mut uniq: Vec<Value> = Vec::new();
            for v in values {
                if !uniq.iter().any(|u| u.total_cmp(&v) == Ordering::Equal) {
                    uniq.push(v);
                }
            }
            values = uniq;
        }
        match func {
            Aggregate::Count => Value::Integer(values.len() as i64),
            Aggregate::Max => values.into_iter().max_by(|a, b| a.total_cmp(b)).unwrap_or(Value::Null),
            // min_by keeps the first minimum; ties are equal values anyway
            Aggregate::Min => values.into_iter().min_by(|a, b| a.total_cmp(b)).unwrap_or(Value::Null),
            Aggregate::Sum => {
                if values.is_empty() {
                    return Value::Null;
                }
                values
                    .iter()
                    .fold(Value::Integer(0), |acc, v| arithmetic(BinaryOp::Plus, &acc, &numeric(v)))
            }
            Aggregate::Avg => {
                if values.is_empty() {
                    return Value::Null;
                }
                let sum: f64 = values.iter().map(|v| numeric(v).as_f64().unwrap_or(0.0)).sum();
                Value::Real(sum / values.len() as f64)
            }
        }
    }
}

fn row_scope<'r>(rows: &'r [&'r Row]) -> Scope<'r> {
    Scope {
        rows,
        output: None,
    }
}

fn rows_equal(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.total_cmp(y) == Ordering::Equal)
}

/// SQL comparison: NULL yields unknown; a number against text compares as
/// text, matching SQLite's affinity rule for untyped operands.
fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Null, _) | (_, Value::Null) => None,
        (Value::Text(x), Value::Text(y)) => Some(x.cmp(y)),
        (Value::Text(x), n) => Some(x.as_str().cmp(n.to_string().as_str())),
        (n, Value::Text(y)) => Some(n.to_string().as_str().cmp(y.as_str())),
        _ => Some(a.total_cmp(b)),
    }
}

fn truth(v: &Value) -> Option<bool> {
    match v {
        Value::Null => None,
        Value::Integer(i) => Some(*i != 0),
        Value::Real(r) => Some(*r != 0.0),
        Value::Text(t) => Some(numeric_prefix(t).as_f64().unwrap_or(0.0) != 0.0),
    }
}

fn truthy(v: &Value) -> bool {
    truth(v) == Some(true)
}

fn not(b: Option<bool>) -> Value {
    bool_value(b.map(|b| !b))
}

fn and3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

fn bool_value(b: Option<bool>) -> Value {
    match b {
        Some(b) => Value::Integer(b as i64),
        None => Value::Null,
    }
}

/// Leading numeric part of a string, as SQLite casts text in arithmetic.
fn numeric_prefix(s: &str) -> Value {
    let t = s.trim_start();
    let mut end = 0;
    let mut seen_dot = false;
    let mut seen_digit = false;
    for (i, c) in t.char_indices() {
        match c {
            '+' | '-' if i == 0 => {}
            '0'..='9' => seen_digit = true,
            '.' if !seen_dot => seen_dot = true,
            _ => break,
        }
        end = i + c.len_utf8();
    }
    if !seen_digit {
        return Value::Integer(0);
    }
    let head = &t[..end];
    if !seen_dot {
        if let Ok(i) = head.parse::<i64>() {
            return Value::Integer(i);
        }
    }
    head.parse::<f64>().map_or(Value::Integer(0), Value::Real)
}

fn numeric(v: &Value) -> Value {
    match v {
        Value::Text(t) => numeric_prefix(t),
        other => other.clone(),
    }
}

fn arithmetic(op: BinaryOp, l: &Value, r: &Value) -> Value {
    if l.is_null() || r.is_null() {
        return Value::Null;
    }
    let (l, r) = (numeric(l), numeric(r));
    if let (Value::Integer(a), Value::Integer(b)) = (&l, &r) {
        let (a, b) = (*a, *b);
        let exact = match op {
            BinaryOp::Plus => a.checked_add(b),
            BinaryOp::Minus => a.checked_sub(b),
            BinaryOp::Mul => a.checked_mul(b),
            BinaryOp::Div | BinaryOp::Mod if b == 0 => return Value::Null,
            BinaryOp::Div => a.checked_div(b),
            BinaryOp::Mod => a.checked_rem(b),
            _ => unreachable!("not arithmetic"),
        };
        if let Some(v) = exact {
            return Value::Integer(v);
        }
    }
    let (a, b) = (l.as_f64().unwrap_or(0.0), r.as_f64().unwrap_or(0.0));
    match op {
        BinaryOp::Plus => Value::Real(a + b),
        BinaryOp::Minus => Value::Real(a - b),
        BinaryOp::Mul => Value::Real(a * b),
        BinaryOp::Div | BinaryOp::Mod if b == 0.0 => Value::Null,
        BinaryOp::Div => Value::Real(a / b),
        BinaryOp::Mod => Value::Real(a % b),
        _ => unreachable!("not arithmetic"),
    }
}

/// Scalar functions with SQLite's NULL and type rules.
fn scalar(func: Scalar, args: Vec<Value>) -> Value {
    let first = args.first().cloned().unwrap_or(Value::Null);
    if func != Scalar::Coalesce && first.is_null() {
        return Value::Null;
    }
    match func {
        Scalar::Coalesce => args.into_iter().find(|v| !v.is_null()).unwrap_or(Value::Null),
        Scalar::Round => {
            let digits = match args.get(1).map(numeric) {
                Some(Value::Null) => return Value::Null,
                Some(v) => v.as_f64().unwrap_or(0.0).clamp(0.0, 15.0) as i32,
                None => 0,
            };
            let x = numeric(&first).as_f64().unwrap_or(0.0);
            let scale = 10f64.powi(digits);
            Value::Real((x * scale).round() / scale)
        }
        Scalar::Abs => match numeric(&first) {
            Value::Integer(i) => i.checked_abs().map_or(Value::Real((i as f64).abs()), Value::Integer),
            Value::Real(r) => Value::Real(r.abs()),
            _ => Value::Integer(0),
        },
        Scalar::Lower => Value::Text(first.to_string().to_ascii_lowercase()),
        Scalar::Upper => Value::Text(first.to_string().to_ascii_uppercase()),
        Scalar::Length => Value::Integer(first.to_string().chars().count() as i64),
    }
}

/// `%` and `_` wildcards, ASCII case-insensitive.
fn like(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().map(|c| c.to_ascii_lowercase()).collect();
    let t: Vec<char> = text.chars().map(|c| c.to_ascii_lowercase()).collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '_' || (p[pi] != '%' && p[pi] == t[ti])) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '%' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '%')
}
