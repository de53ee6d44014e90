//! Parse tree for the supported SELECT subset. `Display` renders the
//! canonical form: upper-case keywords, single spaces, minimal parentheses.

use std::fmt;

use crate::knowledge::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub distinct: bool,
    pub items: Vec<SelectItem>,
    pub from: TableRef,
    pub joins: Vec<Join>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
    pub offset: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    QualifiedWildcard(String),
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRef {
    pub name: String,
    pub alias: Option<String>,
}

impl TableRef {
    /// Name columns are qualified with.
    pub fn binding(&self) -> &str {
        self.alias.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
    /// `CROSS JOIN` or a comma in FROM.
    Cross,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub kind: JoinKind,
    pub table: TableRef,
    pub on: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub expr: Expr,
    pub desc: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Count,
    Sum,
    Avg,
    Max,
    Min,
}

impl Aggregate {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name.to_ascii_uppercase().as_str() {
            "COUNT" => Aggregate::Count,
            "SUM" => Aggregate::Sum,
            "AVG" => Aggregate::Avg,
            "MAX" => Aggregate::Max,
            "MIN" => Aggregate::Min,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Aggregate::Count => "COUNT",
            Aggregate::Sum => "SUM",
            Aggregate::Avg => "AVG",
            Aggregate::Max => "MAX",
            Aggregate::Min => "MIN",
        }
    }
}

/// Row-level functions the guard allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scalar {
    Round,
    Abs,
    Lower,
    Upper,
    Length,
    Coalesce,
}

impl Scalar {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name.to_ascii_uppercase().as_str() {
            "ROUND" => Scalar::Round,
            "ABS" => Scalar::Abs,
            "LOWER" => Scalar::Lower,
            "UPPER" => Scalar::Upper,
            "LENGTH" => Scalar::Length,
            "COALESCE" => Scalar::Coalesce,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Scalar::Round => "ROUND",
            Scalar::Abs => "ABS",
            Scalar::Lower => "LOWER",
            Scalar::Upper => "UPPER",
            Scalar::Length => "LENGTH",
            Scalar::Coalesce => "COALESCE",
        }
    }

    pub fn accepts(self, argc: usize) -> bool {
        match self {
            Scalar::Round => (1..=2).contains(&argc),
            Scalar::Coalesce => argc >= 2,
            _ => argc == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Plus,
    Minus,
    Mul,
    Div,
    Mod,
    Concat,
}

impl BinaryOp {
    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::NotEq | BinaryOp::Lt | BinaryOp::LtEq | BinaryOp::Gt | BinaryOp::GtEq => 4,
            BinaryOp::Plus | BinaryOp::Minus => 5,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => 6,
            BinaryOp::Concat => 7,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "OR",
            BinaryOp::And => "AND",
            BinaryOp::Eq => "=",
            BinaryOp::NotEq => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::Plus => "+",
            BinaryOp::Minus => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "%",
            BinaryOp::Concat => "||",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column {
        table: Option<String>,
        name: String,
    },
    Literal(Value),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary {
        op: BinaryOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    /// `arg: None` is `COUNT(*)`.
    Agg {
        func: Aggregate,
        distinct: bool,
        arg: Option<Box<Expr>>,
    },
    Func {
        func: Scalar,
        args: Vec<Expr>,
    },
    IsNull {
        expr: Box<Expr>,
        negated: bool,
    },
    InList {
        expr: Box<Expr>,
        list: Vec<Expr>,
        negated: bool,
    },
    Between {
        expr: Box<Expr>,
        low: Box<Expr>,
        high: Box<Expr>,
        negated: bool,
    },
    Like {
        expr: Box<Expr>,
        pattern: Box<Expr>,
        negated: bool,
    },
}

// predicate-level forms (IS, IN, BETWEEN, LIKE) bind like comparisons
const PREDICATE: u8 = 4;
const NOT_PREC: u8 = 3;
const ATOM: u8 = 10;

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Not(_) => NOT_PREC,
            Expr::IsNull { .. } | Expr::InList { .. } | Expr::Between { .. } | Expr::Like { .. } => PREDICATE,
            Expr::Neg(_) => 8,
            Expr::Literal(Value::Integer(i)) if *i < 0 => 8,
            Expr::Literal(Value::Real(r)) if r.is_sign_negative() => 8,
            _ => ATOM,
        }
    }

    pub fn contains_aggregate(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::Agg { .. }));
        found
    }

    /// Pre-order traversal.
    pub fn walk(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Column { .. } | Expr::Literal(_) => {}
            Expr::Neg(e) | Expr::Not(e) => e.walk(f),
            Expr::Binary { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
            Expr::Agg { arg, .. } => {
                if let Some(a) = arg {
                    a.walk(f);
                }
            }
            Expr::Func { args, .. } => args.iter().for_each(|a| a.walk(f)),
            Expr::IsNull { expr, .. } => expr.walk(f),
            Expr::InList { expr, list, .. } => {
                expr.walk(f);
                list.iter().for_each(|e| e.walk(f));
            }
            Expr::Between { expr, low, high, .. } => {
                expr.walk(f);
                low.walk(f);
                high.walk(f);
            }
            Expr::Like { expr, pattern, .. } => {
                expr.walk(f);
                pattern.walk(f);
            }
        }
    }

    /// Rendering with column qualifiers dropped; used for result headers.
    pub fn label(&self) -> String {
        Unqualified(self).to_string()
    }
}

fn is_plain_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !super::parser::is_reserved(s)
}

pub(crate) fn write_ident(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    if is_plain_ident(s) {
        f.write_str(s)
    } else {
        write!(f, "\"{}\"", s.replace('"', "\"\""))
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Null => f.write_str("NULL"),
        Value::Integer(i) => write!(f, "{i}"),
        Value::Real(r) => write!(f, "{r:?}"),
        Value::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
    }
}

struct Printer<'a> {
    expr: &'a Expr,
    qualified: bool,
}

struct Unqualified<'a>(&'a Expr);

impl fmt::Display for Unqualified<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer {
            expr: self.0,
            qualified: false,
        }
        .fmt(f)
    }
}

impl Printer<'_> {
    fn child<'b>(&self, e: &'b Expr) -> Printer<'b> {
        Printer {
            expr: e,
            qualified: self.qualified,
        }
    }

    fn operand(&self, f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
        if e.precedence() < min_prec {
            write!(f, "({})", self.child(e))
        } else {
            write!(f, "{}", self.child(e))
        }
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let not = |n: bool| if n { "NOT " } else { "" };
        match self.expr {
            Expr::Column { table, name } => {
                if let (true, Some(t)) = (self.qualified, table) {
                    write_ident(f, t)?;
                    f.write_str(".")?;
                }
                write_ident(f, name)
            }
            Expr::Literal(v) => write_literal(f, v),
            Expr::Neg(e) => {
                f.write_str("-")?;
                self.operand(f, e, ATOM)
            }
            Expr::Not(e) => {
                f.write_str("NOT ")?;
                self.operand(f, e, NOT_PREC)
            }
            Expr::Binary { op, left, right } => {
                let p = op.precedence();
                self.operand(f, left, p)?;
                write!(f, " {} ", op.symbol())?;
                // left-associative: equal precedence on the right needs parens
                self.operand(f, right, p + 1)
            }
            Expr::Agg { func, distinct, arg } => {
                write!(f, "{}(", func.name())?;
                if *distinct {
                    f.write_str("DISTINCT ")?;
                }
                match arg {
                    None => f.write_str("*")?,
                    Some(a) => write!(f, "{}", self.child(a))?,
                }
                f.write_str(")")
            }
            Expr::Func { func, args } => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}", self.child(a))?;
                }
                f.write_str(")")
            }
            Expr::IsNull { expr, negated } => {
                self.operand(f, expr, PREDICATE + 1)?;
                write!(f, " IS {}NULL", not(*negated))
            }
            Expr::InList { expr, list, negated } => {
                self.operand(f, expr, PREDICATE + 1)?;
                write!(f, " {}IN (", not(*negated))?;
                for (i, e) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}", self.child(e))?;
                }
                f.write_str(")")
            }
            Expr::Between { expr, low, high, negated } => {
                self.operand(f, expr, PREDICATE + 1)?;
                write!(f, " {}BETWEEN ", not(*negated))?;
                self.operand(f, low, PREDICATE + 1)?;
                f.write_str(" AND ")?;
                self.operand(f, high, PREDICATE + 1)
            }
            Expr::Like { expr, pattern, negated } => {
                self.operand(f, expr, PREDICATE + 1)?;
                write!(f, " {}LIKE ", not(*negated))?;
                self.operand(f, pattern, PREDICATE + 1)
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer {
            expr: self,
            qualified: true,
        }
        .fmt(f)
    }
}

impl fmt::Display for TableRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_ident(f, &self.name)?;
        if let Some(a) = &self.alias {
            f.write_str(" AS ")?;
            write_ident(f, a)?;
        }
        Ok(())
    }
}

impl fmt::Display for Select {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        if self.distinct {
            f.write_str("DISTINCT ")?;
        }
        for (i, item) in self.items.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match item {
                SelectItem::Wildcard => f.write_str("*")?,
                SelectItem::QualifiedWildcard(t) => {
                    write_ident(f, t)?;
                    f.write_str(".*")?;
                }
                SelectItem::Expr { expr, alias } => {
                    write!(f, "{expr}")?;
                    if let Some(a) = alias {
                        f.write_str(" AS ")?;
                        write_ident(f, a)?;
                    }
                }
            }
        }
        write!(f, " FROM {}", self.from)?;
        for j in &self.joins {
            match j.kind {
                JoinKind::Inner => write!(f, " JOIN {}", j.table)?,
                JoinKind::Left => write!(f, " LEFT JOIN {}", j.table)?,
                JoinKind::Cross => write!(f, " CROSS JOIN {}", j.table)?,
            }
            if let Some(on) = &j.on {
                write!(f, " ON {on}")?;
            }
        }
        if let Some(w) = &self.selection {
            write!(f, " WHERE {w}")?;
        }
        if !self.group_by.is_empty() {
            f.write_str(" GROUP BY ")?;
            for (i, e) in self.group_by.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{e}")?;
            }
        }
        if let Some(h) = &self.having {
            write!(f, " HAVING {h}")?;
        }
        if !self.order_by.is_empty() {
            f.write_str(" ORDER BY ")?;
            for (i, o) in self.order_by.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", o.expr)?;
                if o.desc {
                    f.write_str(" DESC")?;
                }
            }
        }
        if let Some(l) = self.limit {
            write!(f, " LIMIT {l}")?;
        }
        if let Some(o) = self.offset {
            write!(f, " OFFSET {o}")?;
        }
        Ok(())
    }
}
