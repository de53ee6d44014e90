//! Recursive-descent parser for the supported SELECT subset.

use super::ast::*;
use super::lexer::{tokenize, Token};
use crate::knowledge::Value;

/// Leading words of statements other than SELECT.
pub const STATEMENT_KEYWORDS: &[&str] = &[
    "INSERT", "UPDATE", "DELETE", "DROP", "CREATE", "ALTER", "TRUNCATE", "REPLACE", "MERGE",
    "UPSERT", "GRANT", "REVOKE", "ATTACH", "DETACH", "PRAGMA", "VACUUM", "REINDEX", "ANALYZE",
    "EXPLAIN", "WITH", "CALL", "EXEC", "EXECUTE", "SET", "BEGIN", "COMMIT", "ROLLBACK",
    "SAVEPOINT", "RELEASE", "LOCK", "UNLOCK", "COPY", "LOAD", "USE", "SHOW", "DESCRIBE", "RENAME",
    "COMMENT", "DECLARE", "DO", "HANDLER", "IMPORT", "VALUES", "TABLE", "START", "END", "ABORT",
    "PREPARE", "DEALLOCATE", "LISTEN", "NOTIFY", "REFRESH", "CLUSTER", "DISCARD", "SECURITY",
    "OPTIMIZE", "FLUSH", "KILL", "SHUTDOWN", "INSTALL", "UNINSTALL", "RESET", "CHECKPOINT",
];

const RESERVED: &[&str] = &[
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "LIMIT", "OFFSET", "AS", "ON",
    "JOIN", "INNER", "LEFT", "OUTER", "CROSS", "AND", "OR", "NOT", "NULL", "IS", "IN", "BETWEEN",
    "LIKE", "ASC", "DESC", "DISTINCT", "ALL", "UNION", "INTERSECT", "EXCEPT", "INTO", "CASE",
    "WHEN", "THEN", "ELSE", "END", "TRUE", "FALSE", "RIGHT", "FULL", "NATURAL", "USING", "EXISTS",
    "INSERT", "UPDATE", "DELETE", "DROP", "CREATE", "ALTER", "TABLE", "VALUES", "SET", "WITH",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

pub fn is_statement_keyword(word: &str) -> bool {
    STATEMENT_KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseError {
    /// A statement other than a single SELECT.
    Forbidden(String),
    /// Not valid in the supported subset.
    Syntax(String),
}

/// Parses exactly one SELECT statement (an optional trailing `;` is allowed).
pub fn parse_select(src: &str) -> Result<Select, ParseError> {
    let tokens = tokenize(src).map_err(|e| ParseError::Syntax(e.0))?;
    let mut statements: Vec<&[Token]> = tokens
        .split(|t| *t == Token::Semicolon)
        .filter(|s| !s.is_empty())
        .collect();
    if statements.len() > 1 {
        return Err(ParseError::Forbidden("multiple statements".into()));
    }
    let Some(stmt) = statements.pop() else {
        return Err(ParseError::Syntax("empty statement".into()));
    };
    match &stmt[0] {
        t if t.is_word("SELECT") => {}
        Token::Word(w) if is_statement_keyword(w) => {
            return Err(ParseError::Forbidden(format!("{} statement", w.to_ascii_uppercase())));
        }
        t => return Err(ParseError::Syntax(format!("expected SELECT, found `{t}`"))),
    }
    let mut p = Parser { tokens: stmt, pos: 0 };
    let select = p.select()?;
    if let Some(t) = p.peek() {
        if let Token::Word(w) = t {
            if is_statement_keyword(w) {
                return Err(ParseError::Forbidden(format!(
                    "{} inside a query",
                    w.to_ascii_uppercase()
                )));
            }
        }
        return Err(ParseError::Syntax(format!("unexpected `{t}` after statement")));
    }
    Ok(select)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

fn syntax<T>(msg: impl Into<String>) -> PResult<T> {
    Err(ParseError::Syntax(msg.into()))
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&'a Token> {
        self.tokens.get(self.pos + n)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn at_word(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_word(kw))
    }

    fn eat_word(&mut self, kw: &str) -> bool {
        if self.at_word(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, kw: &str) -> PResult<()> {
        if self.eat_word(kw) {
            Ok(())
        } else {
            syntax(format!("expected {kw}"))
        }
    }

    fn eat(&mut self, tok: &Token) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Token) -> PResult<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            syntax(format!("expected `{tok}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.next() {
            Some(Token::Word(w)) if !is_reserved(w) => Ok(w.clone()),
            Some(Token::Quoted(q)) => Ok(q.clone()),
            Some(t) => syntax(format!("expected identifier, found `{t}`")),
            None => syntax("expected identifier"),
        }
    }

    fn uint(&mut self) -> PResult<u64> {
        match self.next() {
            Some(Token::Integer(i)) if *i >= 0 => Ok(*i as u64),
            _ => syntax("expected non-negative integer"),
        }
    }

    fn select(&mut self) -> PResult<Select> {
        self.expect_word("SELECT")?;
        let distinct = if self.eat_word("DISTINCT") {
            true
        } else {
            self.eat_word("ALL");
            false
        };
        let mut items = vec![self.select_item()?];
        while self.eat(&Token::Comma) {
            items.push(self.select_item()?);
        }
        if self.at_word("INTO") {
            return Err(ParseError::Forbidden("SELECT INTO".into()));
        }
        self.expect_word("FROM")?;
        let from = self.table_ref()?;
        let mut joins = Vec::new();
        loop {
            if self.eat(&Token::Comma) {
                joins.push(Join {
                    kind: JoinKind::Cross,
                    table: self.table_ref()?,
                    on: None,
                });
                continue;
            }
            let kind = if self.eat_word("JOIN") {
                JoinKind::Inner
            } else if self.at_word("INNER") {
                self.pos += 1;
                self.expect_word("JOIN")?;
                JoinKind::Inner
            } else if self.at_word("LEFT") {
                self.pos += 1;
                self.eat_word("OUTER");
                self.expect_word("JOIN")?;
                JoinKind::Left
            } else if self.at_word("CROSS") {
                self.pos += 1;
                self.expect_word("JOIN")?;
                JoinKind::Cross
            } else {
                break;
            };
            let table = self.table_ref()?;
            let on = if kind != JoinKind::Cross {
                self.expect_word("ON")?;
                Some(self.expr()?)
            } else {
                None
            };
            joins.push(Join { kind, table, on });
        }
        let selection = if self.eat_word("WHERE") {
            Some(self.expr()?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.eat_word("GROUP") {
            self.expect_word("BY")?;
            group_by.push(self.expr()?);
            while self.eat(&Token::Comma) {
                group_by.push(self.expr()?);
            }
        }
        let having = if self.eat_word("HAVING") {
            Some(self.expr()?)
        } else {
            None
        };
        let mut order_by = Vec::new();
        if self.eat_word("ORDER") {
            self.expect_word("BY")?;
            loop {
                let expr = self.expr()?;
                let desc = if self.eat_word("DESC") {
                    true
                } else {
                    self.eat_word("ASC");
                    false
                };
                order_by.push(OrderItem { expr, desc });
                if !self.eat(&Token::Comma) {
                    break;
                }
            }
        }
        let mut limit = None;
        let mut offset = None;
        if self.eat_word("LIMIT") {
            let first = self.uint()?;
            if self.eat(&Token::Comma) {
                // LIMIT offset, count
                offset = Some(first);
                limit = Some(self.uint()?);
            } else {
                limit = Some(first);
                if self.eat_word("OFFSET") {
                    offset = Some(self.uint()?);
                }
            }
        }
        for set_op in ["UNION", "INTERSECT", "EXCEPT"] {
            if self.at_word(set_op) {
                return syntax(format!("{set_op} is not supported"));
            }
        }
        Ok(Select {
            distinct,
            items,
            from,
            joins,
            selection,
            group_by,
            having,
            order_by,
            limit,
            offset,
        })
    }

    fn select_item(&mut self) -> PResult<SelectItem> {
        if self.eat(&Token::Star) {
            return Ok(SelectItem::Wildcard);
        }
        if matches!(self.peek(), Some(Token::Word(_) | Token::Quoted(_)))
            && self.peek_at(1) == Some(&Token::Dot)
            && self.peek_at(2) == Some(&Token::Star)
        {
            let t = self.ident()?;
            self.pos += 2;
            return Ok(SelectItem::QualifiedWildcard(t));
        }
        let expr = self.expr()?;
        let alias = self.alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    /// `AS name`, or a bare name that cannot start the next clause.
    fn alias(&mut self) -> PResult<Option<String>> {
        let bare = |t: Option<&Token>| match t {
            Some(Token::Word(w)) => !is_reserved(w) && !is_statement_keyword(w),
            Some(Token::Quoted(_)) => true,
            _ => false,
        };
        if self.eat_word("AS") || bare(self.peek()) {
            Ok(Some(self.ident()?))
        } else {
            Ok(None)
        }
    }

    fn table_ref(&mut self) -> PResult<TableRef> {
        if self.peek() == Some(&Token::LParen) {
            return syntax("subqueries are not supported");
        }
        let name = self.ident()?;
        if self.peek() == Some(&Token::Dot) {
            return syntax("schema-qualified tables are not supported");
        }
        let alias = self.alias()?;
        Ok(TableRef { name, alias })
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.or()
    }

    fn or(&mut self) -> PResult<Expr> {
        let mut left = self.and()?;
        while self.eat_word("OR") {
            let right = self.and()?;
            left = bin(BinaryOp::Or, left, right);
        }
        Ok(left)
    }

    fn and(&mut self) -> PResult<Expr> {
        let mut left = self.not()?;
        while self.eat_word("AND") {
            let right = self.not()?;
            left = bin(BinaryOp::And, left, right);
        }
        Ok(left)
    }

    fn not(&mut self) -> PResult<Expr> {
        if self.eat_word("NOT") {
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let left = self.additive()?;
        let op = match self.peek() {
            Some(Token::Eq) => Some(BinaryOp::Eq),
            Some(Token::NotEq) => Some(BinaryOp::NotEq),
            Some(Token::Lt) => Some(BinaryOp::Lt),
            Some(Token::LtEq) => Some(BinaryOp::LtEq),
            Some(Token::Gt) => Some(BinaryOp::Gt),
            Some(Token::GtEq) => Some(BinaryOp::GtEq),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let right = self.additive()?;
            return Ok(bin(op, left, right));
        }
        if self.eat_word("IS") {
            let negated = self.eat_word("NOT");
            self.expect_word("NULL")?;
            return Ok(Expr::IsNull {
                expr: Box::new(left),
                negated,
            });
        }
        let negated = if self.at_word("NOT")
            && self
                .peek_at(1)
                .is_some_and(|t| t.is_word("IN") || t.is_word("BETWEEN") || t.is_word("LIKE"))
        {
            self.pos += 1;
            true
        } else {
            false
        };
        if self.eat_word("IN") {
            self.expect(&Token::LParen)?;
            if self.at_word("SELECT") {
                return syntax("subqueries are not supported");
            }
            let mut list = vec![self.expr()?];
            while self.eat(&Token::Comma) {
                list.push(self.expr()?);
            }
            self.expect(&Token::RParen)?;
            return Ok(Expr::InList {
                expr: Box::new(left),
                list,
                negated,
            });
        }
        if self.eat_word("BETWEEN") {
            let low = self.additive()?;
            self.expect_word("AND")?;
            let high = self.additive()?;
            return Ok(Expr::Between {
                expr: Box::new(left),
                low: Box::new(low),
                high: Box::new(high),
                negated,
            });
        }
        if self.eat_word("LIKE") {
            let pattern = self.additive()?;
            return Ok(Expr::Like {
                expr: Box::new(left),
                pattern: Box::new(pattern),
                negated,
            });
        }
        if negated {
            return syntax("dangling NOT");
        }
        Ok(left)
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinaryOp::Plus,
                Some(Token::Minus) => BinaryOp::Minus,
                _ => break,
            };
            self.pos += 1;
            let right = self.multiplicative()?;
            left = bin(op, left, right);
        }
        Ok(left)
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut left = self.concat()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => BinaryOp::Mul,
                Some(Token::Slash) => BinaryOp::Div,
                Some(Token::Percent) => BinaryOp::Mod,
                _ => break,
            };
            self.pos += 1;
            let right = self.concat()?;
            left = bin(op, left, right);
        }
        Ok(left)
    }

    fn concat(&mut self) -> PResult<Expr> {
        let mut left = self.unary()?;
        while self.eat(&Token::Concat) {
            let right = self.unary()?;
            left = bin(BinaryOp::Concat, left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(&Token::Minus) {
            return Ok(match self.peek() {
                Some(Token::Integer(i)) => {
                    self.pos += 1;
                    Expr::Literal(Value::Integer(-i))
                }
                Some(Token::Real(r)) => {
                    self.pos += 1;
                    Expr::Literal(Value::Real(-r))
                }
                _ => Expr::Neg(Box::new(self.unary()?)),
            });
        }
        if self.eat(&Token::Plus) {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.next() {
            Some(Token::Integer(i)) => Ok(Expr::Literal(Value::Integer(*i))),
            Some(Token::Real(r)) => Ok(Expr::Literal(Value::Real(*r))),
            Some(Token::Str(s)) => Ok(Expr::Literal(Value::Text(s.clone()))),
            Some(Token::LParen) => {
                if self.at_word("SELECT") {
                    return syntax("subqueries are not supported");
                }
                let e = self.expr()?;
                self.expect(&Token::RParen)?;
                Ok(e)
            }
            Some(Token::Word(w)) => {
                if w.eq_ignore_ascii_case("NULL") {
                    return Ok(Expr::Literal(Value::Null));
                }
                if w.eq_ignore_ascii_case("TRUE") {
                    return Ok(Expr::Literal(Value::Integer(1)));
                }
                if w.eq_ignore_ascii_case("FALSE") {
                    return Ok(Expr::Literal(Value::Integer(0)));
                }
                if self.peek() == Some(&Token::LParen) {
                    if let Some(func) = Scalar::from_name(w) {
                        self.pos += 1;
                        let mut args = vec![self.expr()?];
                        while self.eat(&Token::Comma) {
                            args.push(self.expr()?);
                        }
                        self.expect(&Token::RParen)?;
                        if !func.accepts(args.len()) {
                            return syntax(format!("wrong number of arguments to {}", func.name()));
                        }
                        return Ok(Expr::Func { func, args });
                    }
                    let Some(func) = Aggregate::from_name(w) else {
                        return syntax(format!("unsupported function `{w}`"));
                    };
                    self.pos += 1;
                    let distinct = self.eat_word("DISTINCT");
                    let arg = if func == Aggregate::Count && !distinct && self.eat(&Token::Star) {
                        None
                    } else {
                        Some(Box::new(self.expr()?))
                    };
                    self.expect(&Token::RParen)?;
                    return Ok(Expr::Agg { func, distinct, arg });
                }
                self.pos -= 1;
                self.column()
            }
            Some(Token::Quoted(_)) => {
                self.pos -= 1;
                self.column()
            }
            Some(t) => syntax(format!("unexpected `{t}`")),
            None => syntax("unexpected end of statement"),
        }
    }

    fn column(&mut self) -> PResult<Expr> {
        let first = self.ident()?;
        if self.eat(&Token::Dot) {
            let name = self.ident()?;
            Ok(Expr::Column {
                table: Some(first),
                name,
            })
        } else {
            Ok(Expr::Column {
                table: None,
                name: first,
            })
        }
    }
}

fn bin(op: BinaryOp, left: Expr, right: Expr) -> Expr {
    Expr::Binary {
        op,
        left: Box::new(left),
        right: Box::new(right),
    }
}
