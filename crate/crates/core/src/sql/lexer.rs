use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    /// Unquoted word: keyword or identifier.
    Word(String),
    /// `"quoted"`, `` `quoted` `` or `[quoted]` identifier.
    Quoted(String),
    Integer(i64),
    Real(f64),
    Str(String),
    Comma,
    Dot,
    LParen,
    RParen,
    Semicolon,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Concat,
}

impl Token {
    pub fn is_word(&self, kw: &str) -> bool {
        matches!(self, Token::Word(w) if w.eq_ignore_ascii_case(kw))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Word(w) => f.write_str(w),
            Token::Quoted(w) => write!(f, "\"{w}\""),
            Token::Integer(i) => write!(f, "{i}"),
            Token::Real(r) => write!(f, "{r:?}"),
            Token::Str(s) => write!(f, "'{s}'"),
            Token::Comma => f.write_str(","),
            Token::Dot => f.write_str("."),
            Token::LParen => f.write_str("("),
            Token::RParen => f.write_str(")"),
            Token::Semicolon => f.write_str(";"),
            Token::Star => f.write_str("*"),
            Token::Plus => f.write_str("+"),
            Token::Minus => f.write_str("-"),
            Token::Slash => f.write_str("/"),
            Token::Percent => f.write_str("%"),
            Token::Eq => f.write_str("="),
            Token::NotEq => f.write_str("<>"),
            Token::Lt => f.write_str("<"),
            Token::LtEq => f.write_str("<="),
            Token::Gt => f.write_str(">"),
            Token::GtEq => f.write_str(">="),
            Token::Concat => f.write_str("||"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError(pub String);

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '-' if chars.get(i + 1) == Some(&'-') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '/' if chars.get(i + 1) == Some(&'*') => {
                i += 2;
                loop {
                    if i + 1 >= chars.len() {
                        return Err(LexError("unterminated block comment".into()));
                    }
                    if chars[i] == '*' && chars[i + 1] == '/' {
                        i += 2;
                        break;
                    }
                    i += 1;
                }
            }
            '\'' => {
                let (s, next) = quoted(&chars, i, '\'')?;
                out.push(Token::Str(s));
                i = next;
            }
            '"' | '`' => {
                let (s, next) = quoted(&chars, i, c)?;
                out.push(Token::Quoted(s));
                i = next;
            }
            '[' => {
                let end = chars[i + 1..]
                    .iter()
                    .position(|&c| c == ']')
                    .ok_or_else(|| LexError("unterminated [identifier]".into()))?;
                out.push(Token::Quoted(chars[i + 1..i + 1 + end].iter().collect()));
                i += end + 2;
            }
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let mut real = false;
                if i < chars.len() && chars[i] == '.' {
                    real = true;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        real = true;
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                if i < chars.len() && (chars[i].is_alphabetic() || chars[i] == '_') {
                    return Err(LexError("malformed number".into()));
                }
                let text: String = chars[start..i].iter().collect();
                let tok = if real {
                    Token::Real(text.parse().map_err(|_| LexError(format!("bad number {text}")))?)
                } else {
                    match text.parse::<i64>() {
                        Ok(v) => Token::Integer(v),
                        Err(_) => Token::Real(text.parse().map_err(|_| LexError(format!("bad number {text}")))?),
                    }
                };
                out.push(tok);
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                    i += 1;
                }
                out.push(Token::Word(chars[start..i].iter().collect()));
            }
            _ => {
                let next = chars.get(i + 1).copied();
                let (tok, len) = match (c, next) {
                    ('<', Some('=')) => (Token::LtEq, 2),
                    ('<', Some('>')) => (Token::NotEq, 2),
                    ('>', Some('=')) => (Token::GtEq, 2),
                    ('!', Some('=')) => (Token::NotEq, 2),
                    ('=', Some('=')) => (Token::Eq, 2),
                    ('|', Some('|')) => (Token::Concat, 2),
                    (',', _) => (Token::Comma, 1),
                    ('.', _) => (Token::Dot, 1),
                    ('(', _) => (Token::LParen, 1),
                    (')', _) => (Token::RParen, 1),
                    (';', _) => (Token::Semicolon, 1),
                    ('*', _) => (Token::Star, 1),
                    ('+', _) => (Token::Plus, 1),
                    ('-', _) => (Token::Minus, 1),
                    ('/', _) => (Token::Slash, 1),
                    ('%', _) => (Token::Percent, 1),
                    ('=', _) => (Token::Eq, 1),
                    ('<', _) => (Token::Lt, 1),
                    ('>', _) => (Token::Gt, 1),
                    _ => return Err(LexError(format!("unexpected character `{c}`"))),
                };
                out.push(tok);
                i += len;
            }
        }
    }
    Ok(out)
}

fn quoted(chars: &[char], start: usize, q: char) -> Result<(String, usize), LexError> {
    let mut s = String::new();
    let mut i = start + 1;
    loop {
        match chars.get(i) {
            None => return Err(LexError("unterminated quoted literal".into())),
            Some(&c) if c == q => {
                if chars.get(i + 1) == Some(&q) {
                    s.push(q);
                    i += 2;
                } else {
                    return Ok((s, i + 1));
                }
            }
            Some(&c) => {
                s.push(c);
                i += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_tokens() {
        let t = tokenize("SELECT a.b, MAX(x) FROM t WHERE y >= 1.5 AND z <> 'it''s' -- c\n;").unwrap();
        assert!(t[0].is_word("select"));
        assert!(t.contains(&Token::Real(1.5)));
        assert!(t.contains(&Token::Str("it's".into())));
        assert!(t.contains(&Token::GtEq));
        assert_eq!(t.last(), Some(&Token::Semicolon));
    }

    #[test]
    fn comments_and_quotes() {
        let t = tokenize("/* x */ SELECT \"Odd Name\" FROM [t]").unwrap();
        assert_eq!(t[1], Token::Quoted("Odd Name".into()));
        assert_eq!(t[3], Token::Quoted("t".into()));
    }

    #[test]
    fn numbers() {
        assert_eq!(tokenize("1e3").unwrap(), vec![Token::Real(1000.0)]);
        assert_eq!(tokenize("42").unwrap(), vec![Token::Integer(42)]);
        assert_eq!(tokenize(".5").unwrap(), vec![Token::Real(0.5)]);
        assert!(tokenize("12abc").is_err());
    }

    #[test]
    fn errors() {
        assert!(tokenize("'open").is_err());
        assert!(tokenize("SELECT #").is_err());
    }
}
