//! Allow-list guard: one SELECT over declared tables and columns, joined
//! only on declared join keys. Accepted statements come back with column
//! references qualified and spelled as declared.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::parser::{parse_select, ParseError};
use crate::knowledge::{StructuredStore, Table, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum RejectReason {
    ForbiddenOperation(String),
    SchemaMismatch(String),
    InvalidJoin(String),
    Unparsable(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::ForbiddenOperation(d) => write!(f, "forbidden operation: {d}"),
            RejectReason::SchemaMismatch(d) => write!(f, "schema mismatch: {d}"),
            RejectReason::InvalidJoin(d) => write!(f, "invalid join: {d}"),
            RejectReason::Unparsable(d) => write!(f, "unparsable: {d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason")]
pub enum Verdict {
    Accepted,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSql {
    /// Normalized text when accepted; the trimmed input otherwise.
    pub statement: String,
    pub tables_used: BTreeSet<String>,
    /// `table.column`, declared spelling.
    pub columns_used: BTreeSet<String>,
    pub verdict: Verdict,
    pub(crate) plan: Option<Select>,
}

impl ValidatedSql {
    pub fn is_accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }

    pub fn reject_reason(&self) -> Option<&RejectReason> {
        match &self.verdict {
            Verdict::Rejected(r) => Some(r),
            Verdict::Accepted => None,
        }
    }

    fn rejected(raw: &str, reason: RejectReason) -> Self {
        ValidatedSql {
            statement: raw.trim().to_owned(),
            tables_used: BTreeSet::new(),
            columns_used: BTreeSet::new(),
            verdict: Verdict::Rejected(reason),
            plan: None,
        }
    }
}

pub fn validate_sql(raw: &str, store: &StructuredStore) -> ValidatedSql {
    let select = match parse_select(raw) {
        Ok(s) => s,
        Err(ParseError::Forbidden(d)) => {
            return ValidatedSql::rejected(raw, RejectReason::ForbiddenOperation(d))
        }
        Err(ParseError::Syntax(d)) => return ValidatedSql::rejected(raw, RejectReason::Unparsable(d)),
    };
    let mut resolver = Resolver {
        store,
        bindings: Vec::new(),
        aliases: Vec::new(),
        tables_used: BTreeSet::new(),
        columns_used: BTreeSet::new(),
    };
    match resolver.select(select) {
        Ok(plan) => ValidatedSql {
            statement: plan.to_string(),
            tables_used: resolver.tables_used,
            columns_used: resolver.columns_used,
            verdict: Verdict::Accepted,
            plan: Some(plan),
        },
        Err(reason) => ValidatedSql::rejected(raw, reason),
    }
}

struct Binding<'s> {
    name: String,
    table: &'s Table,
}

#[derive(Clone, Copy, PartialEq)]
enum Clause {
    Where,
    On,
    GroupBy,
    Projection,
    Having,
    OrderBy,
}

struct Resolver<'s> {
    store: &'s StructuredStore,
    bindings: Vec<Binding<'s>>,
    aliases: Vec<String>,
    tables_used: BTreeSet<String>,
    columns_used: BTreeSet<String>,
}

type RResult<T> = Result<T, RejectReason>;

fn mismatch<T>(msg: impl Into<String>) -> RResult<T> {
    Err(RejectReason::SchemaMismatch(msg.into()))
}

fn unsupported<T>(msg: impl Into<String>) -> RResult<T> {
    Err(RejectReason::Unparsable(msg.into()))
}

impl<'s> Resolver<'s> {
    fn bind(&mut self, t: TableRef) -> RResult<TableRef> {
        let Some(table) = self.store.table(&t.name) else {
            return mismatch(format!("unknown table `{}`", t.name));
        };
        let canonical = TableRef {
            name: table.decl.name.clone(),
            alias: t.alias,
        };
        let binding = canonical.binding().to_owned();
        if self.bindings.iter().any(|b| b.name.eq_ignore_ascii_case(&binding)) {
            return mismatch(format!("table binding `{binding}` used twice; add an alias"));
        }
        self.tables_used.insert(table.decl.name.clone());
        self.bindings.push(Binding {
            name: binding,
            table,
        });
        Ok(canonical)
    }

    fn select(&mut self, s: Select) -> RResult<Select> {
        let from = self.bind(s.from)?;
        let mut joins = Vec::with_capacity(s.joins.len());
        for j in s.joins {
            if j.kind == JoinKind::Cross {
                return Err(RejectReason::InvalidJoin(format!(
                    "cross join with `{}` has no join key condition",
                    j.table.name
                )));
            }
            let table = self.bind(j.table)?;
            let on = j
                .on
                .map(|e| self.expr(e, Clause::On))
                .transpose()?
                .expect("inner/left joins carry ON");
            self.check_join(&on, table.binding())?;
            joins.push(Join {
                kind: j.kind,
                table,
                on: Some(on),
            });
        }

        self.aliases = s
            .items
            .iter()
            .filter_map(|i| match i {
                SelectItem::Expr { alias: Some(a), .. } => Some(a.clone()),
                _ => None,
            })
            .collect();

        let mut items = Vec::with_capacity(s.items.len());
        let mut width = 0;
        for item in s.items {
            items.push(match item {
                SelectItem::Wildcard => {
                    width += self.bindings.iter().map(|b| b.table.decl.columns.len()).sum::<usize>();
                    for b in &self.bindings {
                        for c in &b.table.decl.columns {
                            self.columns_used.insert(format!("{}.{}", b.table.decl.name, c.name));
                        }
                    }
                    SelectItem::Wildcard
                }
                SelectItem::QualifiedWildcard(t) => {
                    let Some(b) = self.bindings.iter().find(|b| b.name.eq_ignore_ascii_case(&t)) else {
                        return mismatch(format!("unknown table `{t}` in `{t}.*`"));
                    };
                    width += b.table.decl.columns.len();
                    for c in &b.table.decl.columns {
                        self.columns_used.insert(format!("{}.{}", b.table.decl.name, c.name));
                    }
                    SelectItem::QualifiedWildcard(b.name.clone())
                }
                SelectItem::Expr { expr, alias } => {
                    width += 1;
                    SelectItem::Expr {
                        expr: self.expr(expr, Clause::Projection)?,
                        alias,
                    }
                }
            });
        }

        let selection = s.selection.map(|e| self.expr(e, Clause::Where)).transpose()?;
        let group_by = s
            .group_by
            .into_iter()
            .map(|e| self.expr(e, Clause::GroupBy))
            .collect::<RResult<Vec<_>>>()?;
        let having = s.having.map(|e| self.expr(e, Clause::Having)).transpose()?;
        let mut order_by = Vec::with_capacity(s.order_by.len());
        for o in s.order_by {
            if let Expr::Literal(Value::Integer(pos)) = o.expr {
                if pos < 1 || pos as usize > width {
                    return mismatch(format!("ORDER BY position {pos} is out of range"));
                }
                order_by.push(o);
                continue;
            }
            order_by.push(OrderItem {
                expr: self.expr(o.expr, Clause::OrderBy)?,
                desc: o.desc,
            });
        }

        Ok(Select {
            distinct: s.distinct,
            items,
            from,
            joins,
            selection,
            group_by,
            having,
            order_by,
            limit: s.limit,
            offset: s.offset,
        })
    }

    fn check_join(&self, on: &Expr, joined: &str) -> RResult<()> {
        let mut conjuncts = Vec::new();
        flatten_and(on, &mut conjuncts);
        for c in conjuncts {
            let Expr::Binary {
                op: BinaryOp::Eq,
                left,
                right,
            } = c
            else {
                return Err(RejectReason::InvalidJoin(format!("join condition `{c}` is not a key equality")));
            };
            let (
                Expr::Column {
                    table: Some(lt),
                    name: ln,
                },
                Expr::Column {
                    table: Some(rt),
                    name: rn,
                },
            ) = (left.as_ref(), right.as_ref())
            else {
                return Err(RejectReason::InvalidJoin(format!("join condition `{c}` must compare two columns")));
            };
            for col in [ln, rn] {
                if !self.store.is_join_key(col) {
                    return Err(RejectReason::InvalidJoin(format!("`{col}` is not a declared join key")));
                }
            }
            let touches_new = lt.eq_ignore_ascii_case(joined) != rt.eq_ignore_ascii_case(joined);
            if !touches_new {
                return Err(RejectReason::InvalidJoin(format!(
                    "join condition `{c}` must link `{joined}` to an earlier table"
                )));
            }
        }
        Ok(())
    }

    fn column(&mut self, table: Option<String>, name: String, clause: Clause) -> RResult<Expr> {
        let is_alias = |r: &Resolver<'_>| r.aliases.iter().any(|a| a.eq_ignore_ascii_case(&name));
        if table.is_none() && clause == Clause::OrderBy && is_alias(self) {
            return Ok(Expr::Column { table: None, name });
        }
        let candidates: Vec<&Binding<'_>> = match &table {
            Some(t) => {
                let Some(b) = self.bindings.iter().find(|b| b.name.eq_ignore_ascii_case(t)) else {
                    return mismatch(format!("unknown table `{t}`"));
                };
                vec![b]
            }
            None => self
                .bindings
                .iter()
                .filter(|b| b.table.decl.column_index(&name).is_some())
                .collect(),
        };
        let hits: Vec<(&Binding<'_>, usize)> = candidates
            .into_iter()
            .filter_map(|b| b.table.decl.column_index(&name).map(|i| (b, i)))
            .collect();
        match hits.as_slice() {
            [(b, i)] => {
                let col = b.table.decl.columns[*i].name.clone();
                self.columns_used.insert(format!("{}.{}", b.table.decl.name, col));
                Ok(Expr::Column {
                    table: Some(b.name.clone()),
                    name: col,
                })
            }
            [] if table.is_none() && clause == Clause::Having && is_alias(self) => {
                Ok(Expr::Column { table: None, name })
            }
            [] => match table {
                Some(t) => mismatch(format!("unknown column `{t}.{name}`")),
                None => mismatch(format!("unknown column `{name}`")),
            },
            _ => mismatch(format!("column `{name}` is ambiguous; qualify it")),
        }
    }

    fn expr(&mut self, e: Expr, clause: Clause) -> RResult<Expr> {
        self.expr_in(e, clause, false)
    }

    fn expr_in(&mut self, e: Expr, clause: Clause, in_agg: bool) -> RResult<Expr> {
        let sub = |r: &mut Self, e: Box<Expr>| r.expr_in(*e, clause, in_agg).map(Box::new);
        Ok(match e {
            Expr::Column { table, name } => self.column(table, name, clause)?,
            Expr::Literal(v) => Expr::Literal(v),
            Expr::Neg(e) => Expr::Neg(sub(self, e)?),
            Expr::Not(e) => Expr::Not(sub(self, e)?),
            Expr::Binary { op, left, right } => Expr::Binary {
                op,
                left: sub(self, left)?,
                right: sub(self, right)?,
            },
            Expr::Agg { func, distinct, arg } => {
                if in_agg {
                    return unsupported("nested aggregate");
                }
                if matches!(clause, Clause::Where | Clause::On | Clause::GroupBy) {
                    return unsupported("aggregate outside SELECT, HAVING or ORDER BY");
                }
                let arg = match arg {
                    Some(a) => Some(Box::new(self.expr_in(*a, clause, true)?)),
                    None => None,
                };
                Expr::Agg { func, distinct, arg }
            }
            Expr::Func { func, args } => Expr::Func {
                func,
                args: args
                    .into_iter()
                    .map(|e| self.expr_in(e, clause, in_agg))
                    .collect::<RResult<_>>()?,
            },
            Expr::IsNull { expr, negated } => Expr::IsNull {
                expr: sub(self, expr)?,
                negated,
            },
            Expr::InList { expr, list, negated } => Expr::InList {
                expr: sub(self, expr)?,
                list: list
                    .into_iter()
                    .map(|e| self.expr_in(e, clause, in_agg))
                    .collect::<RResult<_>>()?,
                negated,
            },
            Expr::Between {
                expr,
                low,
                high,
                negated,
            } => Expr::Between {
                expr: sub(self, expr)?,
                low: sub(self, low)?,
                high: sub(self, high)?,
                negated,
            },
            Expr::Like {
                expr,
                pattern,
                negated,
            } => Expr::Like {
                expr: sub(self, expr)?,
                pattern: sub(self, pattern)?,
                negated,
            },
        })
    }
}

fn flatten_and<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match e {
        Expr::Binary {
            op: BinaryOp::And,
            left,
            right,
        } => {
            flatten_and(left, out);
            flatten_and(right, out);
        }
        other => out.push(other),
    }
}
