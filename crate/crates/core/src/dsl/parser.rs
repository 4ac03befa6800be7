use std::fmt;

use thiserror::Error;

use super::ast::{BinaryOp, Expr, RollingStat, UnaryOp};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnexpectedCharacter(char),
    UnexpectedToken { found: String, expected: String },
    UnexpectedEnd { expected: String },
    UnknownFunction(String),
    Arity { function: String, expected: String, found: usize },
    InvalidArgument { function: String, message: String },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedCharacter(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::UnexpectedToken { found, expected } => {
                write!(f, "expected {expected}, found {found}")
            }
            ParseErrorKind::UnexpectedEnd { expected } => {
                write!(f, "unexpected end of input, expected {expected}")
            }
            ParseErrorKind::UnknownFunction(name) => write!(f, "unknown function {name:?}"),
            ParseErrorKind::Arity {
                function,
                expected,
                found,
            } => write!(f, "{function} takes {expected} argument(s), got {found}"),
            ParseErrorKind::InvalidArgument { function, message } => {
                write!(f, "{function}: {message}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Eq,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier {s:?}"),
            Tok::Number(v) => format!("number {v}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Eq => "'='".into(),
            Tok::End => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut column) = (0, 1, 1);
    let err = |line, column, kind| ParseError { line, column, kind };
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, column);
        if c == '\n' {
            i += 1;
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            column += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '=' => Some(Tok::Eq),
            _ => None,
        };
        let tok = if let Some(tok) = single {
            i += 1;
            column += 1;
            tok
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let literal: String = chars[start..i].iter().collect();
            column += i - start;
            let value = literal.parse::<f64>().map_err(|_| {
                err(
                    start_line,
                    start_col,
                    ParseErrorKind::InvalidArgument {
                        function: "number".into(),
                        message: format!("malformed literal {literal:?}"),
                    },
                )
            })?;
            Tok::Number(value)
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            column += i - start;
            let word: String = chars[start..i].iter().collect();
            match word.as_str() {
                "inf" => Tok::Number(f64::INFINITY),
                "NaN" => Tok::Number(f64::NAN),
                _ => Tok::Ident(word),
            }
        } else if c == '"' || c == '\'' {
            let quote = c;
            i += 1;
            column += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(err(
                            start_line,
                            start_col,
                            ParseErrorKind::UnexpectedEnd {
                                expected: "closing quote".into(),
                            },
                        ))
                    }
                    Some('\\') if chars.get(i + 1).is_some() => {
                        s.push(chars[i + 1]);
                        i += 2;
                        column += 2;
                    }
                    Some(&ch) if ch == quote => {
                        i += 1;
                        column += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                        column += 1;
                    }
                }
            }
            Tok::Str(s)
        } else {
            return Err(err(line, column, ParseErrorKind::UnexpectedCharacter(c)));
        };
        out.push(Token {
            tok,
            line: start_line,
            column: start_col,
        });
    }
    out.push(Token {
        tok: Tok::End,
        line,
        column,
    });
    Ok(out)
}

/// Argument as written at a call site.
struct Arg {
    keyword: Option<String>,
    value: Expr,
    line: usize,
    column: usize,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn fail(&self, token: &Token, expected: &str) -> ParseError {
        let kind = if token.tok == Tok::End {
            ParseErrorKind::UnexpectedEnd {
                expected: expected.into(),
            }
        } else {
            ParseErrorKind::UnexpectedToken {
                found: token.tok.describe(),
                expected: expected.into(),
            }
        };
        ParseError {
            line: token.line,
            column: token.column,
            kind,
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<Token, ParseError> {
        let t = self.next();
        if t.tok == tok {
            Ok(t)
        } else {
            Err(self.fail(&t, expected))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().tok {
            Tok::Minus => {
                self.next();
                Ok(match self.unary()? {
                    Expr::Const(v) => Expr::Const(-v),
                    other => Expr::Unary {
                        op: UnaryOp::Neg,
                        arg: Box::new(other),
                    },
                })
            }
            Tok::Plus => {
                self.next();
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Number(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    self.next();
                    self.call(name, t.line, t.column)
                } else {
                    // Bare identifiers are column references.
                    Ok(Expr::Column(name))
                }
            }
            _ => Err(self.fail(&t, "an expression")),
        }
    }

    fn call(&mut self, name: String, line: usize, column: usize) -> Result<Expr, ParseError> {
        if name == "col" {
            let t = self.next();
            let column_name = match t.tok {
                Tok::Ident(s) | Tok::Str(s) => s,
                _ => return Err(self.fail(&t, "a column name")),
            };
            self.expect(Tok::RParen, "')'")?;
            return Ok(Expr::Column(column_name));
        }
        let mut args = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                let start = self.peek().clone();
                let keyword = match (&start.tok, &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)].tok) {
                    (Tok::Ident(k), Tok::Eq) => {
                        let k = k.clone();
                        self.next();
                        self.next();
                        Some(k)
                    }
                    _ => None,
                };
                let value = self.expr()?;
                args.push(Arg {
                    keyword,
                    value,
                    line: start.line,
                    column: start.column,
                });
                let t = self.next();
                match t.tok {
                    Tok::Comma => continue,
                    Tok::RParen => break,
                    _ => return Err(self.fail(&t, "',' or ')'")),
                }
            }
        } else {
            self.next();
        }
        build_call(&name, args, line, column)
    }
}

fn build_call(name: &str, args: Vec<Arg>, line: usize, column: usize) -> Result<Expr, ParseError> {
    let at = |kind| ParseError { line, column, kind };
    let arity = |expected: &str, found: usize| {
        at(ParseErrorKind::Arity {
            function: name.to_string(),
            expected: expected.to_string(),
            found,
        })
    };
    let invalid = |arg: &Arg, message: String| ParseError {
        line: arg.line,
        column: arg.column,
        kind: ParseErrorKind::InvalidArgument {
            function: name.to_string(),
            message,
        },
    };
    let allowed_keywords: &[&str] = match name {
        "rolling_mean" | "rolling_min" | "rolling_max" => &["min_periods"],
        "rolling_std" => &["min_periods", "ddof"],
        _ => &[],
    };
    let mut positional = Vec::new();
    let mut keywords: Vec<(String, Arg)> = Vec::new();
    for arg in args {
        match arg.keyword.clone() {
            Some(k) => {
                if !allowed_keywords.contains(&k.as_str()) {
                    return Err(invalid(&arg, format!("unexpected keyword argument {k:?}")));
                }
                if keywords.iter().any(|(seen, _)| *seen == k) {
                    return Err(invalid(&arg, format!("repeated keyword argument {k:?}")));
                }
                keywords.push((k, arg));
            }
            None => {
                if !keywords.is_empty() {
                    return Err(invalid(&arg, "positional argument after keyword argument".into()));
                }
                positional.push(arg);
            }
        }
    }
    let total = positional.len() + keywords.len();
    let integer = |arg: &Arg| -> Result<i64, ParseError> {
        match arg.value {
            Expr::Const(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
            _ => Err(invalid(arg, format!("expected an integer literal, found {}", arg.value))),
        }
    };
    let number = |arg: &Arg| -> Result<f64, ParseError> {
        match arg.value {
            Expr::Const(v) => Ok(v),
            _ => Err(invalid(arg, format!("expected a numeric literal, found {}", arg.value))),
        }
    };
    let mut rest = positional.into_iter();
    match name {
        "neg" | "abs" | "log" | "sqrt" | "cs_rank" | "cs_zscore" => {
            if total != 1 || rest.len() != 1 {
                return Err(arity("1", total));
            }
            let arg = Box::new(rest.next().expect("one argument").value);
            Ok(match name {
                "neg" => Expr::Unary { op: UnaryOp::Neg, arg },
                "abs" => Expr::Unary { op: UnaryOp::Abs, arg },
                "log" => Expr::Unary { op: UnaryOp::Log, arg },
                "sqrt" => Expr::Unary { op: UnaryOp::Sqrt, arg },
                "cs_rank" => Expr::CsRank(arg),
                _ => Expr::CsZScore(arg),
            })
        }
        "lag" | "ewm_mean" | "group_zscore" | "fillna" => {
            if total != 2 || rest.len() != 2 {
                return Err(arity("2", total));
            }
            let arg = Box::new(rest.next().expect("two arguments").value);
            let param = rest.next().expect("two arguments");
            Ok(match name {
                "lag" => Expr::Lag { arg, periods: integer(&param)? },
                "ewm_mean" => Expr::EwmMean { arg, span: integer(&param)? },
                "group_zscore" => Expr::GroupZScore { arg, window: integer(&param)? },
                _ => Expr::FillMissing { arg, value: number(&param)? },
            })
        }
        "rolling_mean" | "rolling_min" | "rolling_max" | "rolling_std" => {
            let max = if name == "rolling_std" { 4 } else { 3 };
            let positional_count = rest.len();
            if !(2..=max).contains(&total) || positional_count < 2 || positional_count > max {
                return Err(arity(&format!("2 to {max}"), total));
            }
            let arg = Box::new(rest.next().expect("argument").value);
            let window = integer(&rest.next().expect("window"))?;
            let mut min_periods = None;
            let mut ddof = None;
            if let Some(a) = rest.next() {
                min_periods = Some(integer(&a)?);
            }
            if let Some(a) = rest.next() {
                ddof = Some((integer(&a)?, a));
            }
            for (k, a) in keywords {
                match k.as_str() {
                    "min_periods" if min_periods.is_none() => min_periods = Some(integer(&a)?),
                    "ddof" if ddof.is_none() => ddof = Some((integer(&a)?, a)),
                    _ => return Err(invalid(&a, format!("{k} given twice"))),
                }
            }
            let stat = match name {
                "rolling_mean" => RollingStat::Mean,
                "rolling_min" => RollingStat::Min,
                "rolling_max" => RollingStat::Max,
                _ => {
                    let sample = match ddof {
                        None | Some((0, _)) => false,
                        Some((1, _)) => true,
                        Some((_, a)) => return Err(invalid(&a, "ddof must be 0 or 1".into())),
                    };
                    RollingStat::Std { sample }
                }
            };
            Ok(Expr::Rolling {
                stat,
                arg,
                window,
                min_periods: min_periods.unwrap_or(window),
            })
        }
        _ => Err(at(ParseErrorKind::UnknownFunction(name.to_string()))),
    }
}

/// Parses one feature expression.
///
/// Grammar (whitespace and `#` comments ignored):
///
/// ```text
/// expr    := term (('+' | '-') term)*
/// term    := unary (('*' | '/') unary)*
/// unary   := ('-' | '+') unary | primary
/// primary := number | ident | '(' expr ')' | ident '(' args? ')'
/// args    := arg (',' arg)*
/// arg     := (ident '=')? expr
/// ```
///
/// A bare identifier is a column reference; `col(name)` and `col("name")`
/// are the explicit forms.
pub fn parse_feature(text: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
    };
    let expr = parser.expr()?;
    let t = parser.next();
    if t.tok != Tok::End {
        return Err(parser.fail(&t, "end of input"));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rank_of_product() {
        let e = parse_feature("cs_rank(col(x) * col(y))").unwrap();
        assert_eq!(
            e,
            Expr::CsRank(Box::new(Expr::binary(BinaryOp::Mul, Expr::col("x"), Expr::col("y"))))
        );
    }

    #[test]
    fn parses_ratio_with_default_min_periods() {
        let e = parse_feature("rolling_mean(col(x), 5) / rolling_std(col(x), 20)").unwrap();
        let Expr::Binary { op: BinaryOp::Div, lhs, rhs } = e else {
            panic!("expected a ratio");
        };
        assert!(matches!(*lhs, Expr::Rolling { stat: RollingStat::Mean, window: 5, min_periods: 5, .. }));
        assert!(matches!(
            *rhs,
            Expr::Rolling { stat: RollingStat::Std { sample: false }, window: 20, min_periods: 20, .. }
        ));
    }

    #[test]
    fn eof_error_position() {
        let err = parse_feature("cs_rank(").unwrap_err();
        assert_eq!((err.line, err.column), (1, 9));
        assert!(matches!(err.kind, ParseErrorKind::UnexpectedEnd { .. }));
    }

    #[test]
    fn unknown_function_and_arity() {
        let err = parse_feature("cs_rnak(x)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownFunction("cs_rnak".into()));
        let err = parse_feature("lag(x)").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Arity { found: 1, .. }));
        let err = parse_feature("\n  rolling_mean(x)").unwrap_err();
        assert_eq!((err.line, err.column), (2, 3));
    }

    #[test]
    fn keywords_and_negative_integers() {
        let e = parse_feature("rolling_std(x, 21, ddof=1)").unwrap();
        assert!(matches!(
            e,
            Expr::Rolling { stat: RollingStat::Std { sample: true }, window: 21, min_periods: 21, .. }
        ));
        let e = parse_feature("rolling_std(x, 20, 1, 1)").unwrap();
        assert!(matches!(e, Expr::Rolling { stat: RollingStat::Std { sample: true }, min_periods: 1, .. }));
        assert!(matches!(parse_feature("lag(x, -1)").unwrap(), Expr::Lag { periods: -1, .. }));
        assert!(parse_feature("lag(x, 1.5)").is_err());
        assert!(parse_feature("rolling_std(x, 5, ddof=2)").is_err());
        assert!(parse_feature("lag(x, 1, min_periods=1)").is_err());
    }

    #[test]
    fn precedence_and_round_trip() {
        let e = parse_feature("a + b * c - -2").unwrap();
        assert_eq!(e.to_string(), "((col(a) + (col(b) * col(c))) - -2)");
        assert_eq!(parse_feature(&e.to_string()).unwrap(), e);
        let e = parse_feature("fillna(cs_rank(col(\"my col\") / lag(x, 2)), 0)").unwrap();
        assert_eq!(parse_feature(&e.to_string()).unwrap(), e);
    }
}
