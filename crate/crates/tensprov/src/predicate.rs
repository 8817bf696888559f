//! Column comparison predicates for filter operations.
//!
//! Grammar (keywords lowercase, columns bare identifiers or backtick-quoted):
//!
//! ```text
//! expr   := term ('or' term)*
//! term   := factor ('and' factor)*
//! factor := 'not' factor | '(' expr ')' | comparison
//! comparison := column ('=='|'!='|'<'|'<='|'>'|'>=') literal
//!             | column 'is' 'null' | column 'is' 'not' 'null'
//! literal := integer | real | string | 'true' | 'false' | 'null'
//! ```
//!
//! Equality is total (`== null` matches null cells); ordering comparisons
//! against a null cell are false.

use std::fmt;

use crate::dataset::Schema;
use crate::error::{Error, Result};
use crate::value::{CellType, CellValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Compare {
        column: String,
        op: CmpOp,
        value: CellValue,
    },
    IsNull {
        column: String,
        negated: bool,
    },
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn parse(input: &str) -> Result<Predicate> {
        let tokens = tokenize(input)?;
        let mut p = Parser { tokens, pos: 0 };
        let pred = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::PredicateParse(format!(
                "unexpected trailing input at token {:?}",
                p.tokens[p.pos]
            )));
        }
        Ok(pred)
    }

    /// Check column references and literal types against a schema.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        match self {
            Predicate::Compare { column, op, value } => {
                let pos = schema
                    .position(column)
                    .ok_or_else(|| Error::TypeMismatch(format!("unknown column '{column}'")))?;
                let ty = schema.attr(pos)?.ty;
                let ordered = !matches!(op, CmpOp::Eq | CmpOp::Ne);
                match value {
                    CellValue::Null if ordered => Err(Error::TypeMismatch(
                        "ordering comparison against null".to_string(),
                    )),
                    CellValue::Null => Ok(()),
                    CellValue::Int(_) | CellValue::Real(_)
                        if matches!(ty, CellType::Integer | CellType::Real) =>
                    {
                        Ok(())
                    }
                    CellValue::Text(_) if ty == CellType::Text => Ok(()),
                    CellValue::Bool(_) if ty == CellType::Boolean => Ok(()),
                    other => Err(Error::TypeMismatch(format!(
                        "column '{column}' is {ty}, literal is {:?}",
                        other
                    ))),
                }
            }
            Predicate::IsNull { column, .. } => schema
                .position(column)
                .map(|_| ())
                .ok_or_else(|| Error::TypeMismatch(format!("unknown column '{column}'"))),
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                a.validate(schema)?;
                b.validate(schema)
            }
            Predicate::Not(a) => a.validate(schema),
        }
    }

    /// Evaluate against one row. Call [`validate`](Self::validate) first;
    /// unknown columns are an error here too.
    pub fn eval(&self, schema: &Schema, row: &[CellValue]) -> Result<bool> {
        match self {
            Predicate::Compare { column, op, value } => {
                let pos = schema
                    .position(column)
                    .ok_or_else(|| Error::TypeMismatch(format!("unknown column '{column}'")))?;
                let cell = &row[pos];
                Ok(compare(cell, *op, value))
            }
            Predicate::IsNull { column, negated } => {
                let pos = schema
                    .position(column)
                    .ok_or_else(|| Error::TypeMismatch(format!("unknown column '{column}'")))?;
                Ok(row[pos].is_null() != *negated)
            }
            Predicate::And(a, b) => Ok(a.eval(schema, row)? && b.eval(schema, row)?),
            Predicate::Or(a, b) => Ok(a.eval(schema, row)? || b.eval(schema, row)?),
            Predicate::Not(a) => Ok(!a.eval(schema, row)?),
        }
    }
}

fn compare(cell: &CellValue, op: CmpOp, lit: &CellValue) -> bool {
    use std::cmp::Ordering;
    // Total equality; numeric comparisons coerce int and real.
    let ord: Option<Ordering> = match (cell, lit) {
        (CellValue::Null, CellValue::Null) => Some(Ordering::Equal),
        (CellValue::Null, _) | (_, CellValue::Null) => None,
        (a, b) => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => Some(x.total_cmp(&y)),
            _ => Some(a.cmp(b)),
        },
    };
    match (op, ord) {
        (CmpOp::Eq, Some(Ordering::Equal)) => true,
        (CmpOp::Eq, _) => false,
        (CmpOp::Ne, Some(Ordering::Equal)) => false,
        (CmpOp::Ne, _) => true,
        (_, None) => false,
        (CmpOp::Lt, Some(o)) => o == Ordering::Less,
        (CmpOp::Le, Some(o)) => o != Ordering::Greater,
        (CmpOp::Gt, Some(o)) => o == Ordering::Greater,
        (CmpOp::Ge, Some(o)) => o != Ordering::Less,
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Compare { column, op, value } => {
                write_column(f, column)?;
                write!(f, " {op} ")?;
                write_literal(f, value)
            }
            Predicate::IsNull { column, negated } => {
                write_column(f, column)?;
                if *negated {
                    write!(f, " is not null")
                } else {
                    write!(f, " is null")
                }
            }
            Predicate::And(a, b) => write!(f, "({a} and {b})"),
            Predicate::Or(a, b) => write!(f, "({a} or {b})"),
            Predicate::Not(a) => write!(f, "(not {a})"),
        }
    }
}

fn write_column(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    let bare = !name.is_empty()
        && name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(name, "and" | "or" | "not" | "is" | "null" | "true" | "false");
    if bare {
        f.write_str(name)
    } else {
        write!(f, "`{}`", name.replace('`', "``"))
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, v: &CellValue) -> fmt::Result {
    match v {
        CellValue::Null => f.write_str("null"),
        CellValue::Bool(b) => write!(f, "{b}"),
        CellValue::Int(i) => write!(f, "{i}"),
        CellValue::Real(r) => {
            if r.fract() == 0.0 && r.is_finite() {
                write!(f, "{r:.1}")
            } else {
                write!(f, "{r}")
            }
        }
        CellValue::Text(s) => write!(f, "\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"")),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Int(i64),
    Real(f64),
    Str(String),
    Op(CmpOp),
    LParen,
    RParen,
    And,
    Or,
    Not,
    Is,
    Null,
    True,
    False,
}

fn tokenize(input: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let bytes: Vec<char> = input.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            '=' => {
                if bytes.get(i + 1) == Some(&'=') {
                    tokens.push(Token::Op(CmpOp::Eq));
                    i += 2;
                } else {
                    return Err(Error::PredicateParse("use '==' for equality".to_string()));
                }
            }
            '!' => {
                if bytes.get(i + 1) == Some(&'=') {
                    tokens.push(Token::Op(CmpOp::Ne));
                    i += 2;
                } else {
                    return Err(Error::PredicateParse("unexpected '!'".to_string()));
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&'=') {
                    tokens.push(Token::Op(CmpOp::Le));
                    i += 2;
                } else {
                    tokens.push(Token::Op(CmpOp::Lt));
                    i += 1;
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&'=') {
                    tokens.push(Token::Op(CmpOp::Ge));
                    i += 2;
                } else {
                    tokens.push(Token::Op(CmpOp::Gt));
                    i += 1;
                }
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match bytes.get(i) {
                        None => {
                            return Err(Error::PredicateParse(
                                "unterminated string literal".to_string(),
                            ))
                        }
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            match bytes.get(i + 1) {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                other => {
                                    return Err(Error::PredicateParse(format!(
                                        "unknown escape {other:?}"
                                    )))
                                }
                            }
                            i += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                tokens.push(Token::Str(s));
            }
            '`' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match bytes.get(i) {
                        None => {
                            return Err(Error::PredicateParse(
                                "unterminated quoted column".to_string(),
                            ))
                        }
                        Some('`') if bytes.get(i + 1) == Some(&'`') => {
                            s.push('`');
                            i += 2;
                        }
                        Some('`') => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                tokens.push(Token::Ident(s));
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' => {
                let start = i;
                i += 1;
                let mut is_real = false;
                while i < bytes.len() {
                    let d = bytes[i];
                    if d.is_ascii_digit() {
                        i += 1;
                    } else if d == '.' || d == 'e' || d == 'E' {
                        is_real = true;
                        i += 1;
                        if (d == 'e' || d == 'E')
                            && matches!(bytes.get(i), Some('+') | Some('-'))
                        {
                            i += 1;
                        }
                    } else {
                        break;
                    }
                }
                let text: String = bytes[start..i].iter().collect();
                if is_real {
                    let v: f64 = text
                        .parse()
                        .map_err(|_| Error::PredicateParse(format!("bad number {text:?}")))?;
                    tokens.push(Token::Real(v));
                } else {
                    let v: i64 = text
                        .parse()
                        .map_err(|_| Error::PredicateParse(format!("bad number {text:?}")))?;
                    tokens.push(Token::Int(v));
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                let word: String = bytes[start..i].iter().collect();
                tokens.push(match word.as_str() {
                    "and" => Token::And,
                    "or" => Token::Or,
                    "not" => Token::Not,
                    "is" => Token::Is,
                    "null" => Token::Null,
                    "true" => Token::True,
                    "false" => Token::False,
                    _ => Token::Ident(word),
                });
            }
            other => {
                return Err(Error::PredicateParse(format!("unexpected character {other:?}")));
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Result<Token> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::PredicateParse("unexpected end of input".to_string()))?;
        self.pos += 1;
        Ok(t)
    }

    fn expr(&mut self) -> Result<Predicate> {
        let mut left = self.term()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            let right = self.term()?;
            left = Predicate::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Predicate> {
        let mut left = self.factor()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            let right = self.factor()?;
            left = Predicate::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn factor(&mut self) -> Result<Predicate> {
        match self.peek() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(Predicate::Not(Box::new(self.factor()?)))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.next()? {
                    Token::RParen => Ok(inner),
                    other => Err(Error::PredicateParse(format!(
                        "expected ')', found {other:?}"
                    ))),
                }
            }
            _ => self.comparison(),
        }
    }

    fn comparison(&mut self) -> Result<Predicate> {
        let column = match self.next()? {
            Token::Ident(name) => name,
            other => {
                return Err(Error::PredicateParse(format!(
                    "expected a column name, found {other:?}"
                )))
            }
        };
        match self.next()? {
            Token::Op(op) => {
                let value = match self.next()? {
                    Token::Int(v) => CellValue::Int(v),
                    Token::Real(v) => CellValue::Real(v),
                    Token::Str(s) => CellValue::Text(s),
                    Token::True => CellValue::Bool(true),
                    Token::False => CellValue::Bool(false),
                    Token::Null => CellValue::Null,
                    other => {
                        return Err(Error::PredicateParse(format!(
                            "expected a literal, found {other:?}"
                        )))
                    }
                };
                Ok(Predicate::Compare { column, op, value })
            }
            Token::Is => match self.next()? {
                Token::Null => Ok(Predicate::IsNull {
                    column,
                    negated: false,
                }),
                Token::Not => match self.next()? {
                    Token::Null => Ok(Predicate::IsNull {
                        column,
                        negated: true,
                    }),
                    other => Err(Error::PredicateParse(format!(
                        "expected 'null' after 'is not', found {other:?}"
                    ))),
                },
                other => Err(Error::PredicateParse(format!(
                    "expected 'null' after 'is', found {other:?}"
                ))),
            },
            other => Err(Error::PredicateParse(format!(
                "expected a comparison operator, found {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_csv_reader;

    fn gender_rows() -> crate::dataset::Dataset {
        load_csv_reader("dl",
            "ID,Birthdate,Gender\n10,1996-07-12,F\n20,1994-03-08,M\n30,,F\n40,1987-11-23,M\n".as_bytes(),
            true,
            None,
        )
        .unwrap()
    }

    #[test]
    fn parse_and_eval_equality() {
        let d = gender_rows();
        let p = Predicate::parse("Gender == \"M\"").unwrap();
        p.validate(d.schema()).unwrap();
        let kept: Vec<usize> = (0..d.row_count())
            .filter(|&i| p.eval(d.schema(), d.get_row(i).unwrap()).unwrap())
            .collect();
        assert_eq!(kept, vec![1, 3]);
    }

    #[test]
    fn null_handling() {
        let d = gender_rows();
        let p = Predicate::parse("Birthdate is null").unwrap();
        let kept: Vec<usize> = (0..d.row_count())
            .filter(|&i| p.eval(d.schema(), d.get_row(i).unwrap()).unwrap())
            .collect();
        assert_eq!(kept, vec![2]);
        let p = Predicate::parse("Birthdate == null").unwrap();
        let kept: Vec<usize> = (0..d.row_count())
            .filter(|&i| p.eval(d.schema(), d.get_row(i).unwrap()).unwrap())
            .collect();
        assert_eq!(kept, vec![2]);
    }

    #[test]
    fn numeric_coercion_and_boolean_ops() {
        let d = gender_rows();
        let p = Predicate::parse("ID >= 20 and not (Gender == \"F\")").unwrap();
        p.validate(d.schema()).unwrap();
        let kept: Vec<usize> = (0..d.row_count())
            .filter(|&i| p.eval(d.schema(), d.get_row(i).unwrap()).unwrap())
            .collect();
        assert_eq!(kept, vec![1, 3]);
        // Real literal against an integer column coerces.
        let p = Predicate::parse("ID < 25.5").unwrap();
        p.validate(d.schema()).unwrap();
    }

    #[test]
    fn type_mismatch_rejected() {
        let d = gender_rows();
        let p = Predicate::parse("ID == \"ten\"").unwrap();
        assert!(p.validate(d.schema()).is_err());
        let p = Predicate::parse("Gender < null").unwrap();
        assert!(p.validate(d.schema()).is_err());
        let p = Predicate::parse("Missing == 1").unwrap();
        assert!(p.validate(d.schema()).is_err());
    }

    #[test]
    fn parse_errors() {
        assert!(Predicate::parse("").is_err());
        assert!(Predicate::parse("Gender =").is_err());
        assert!(Predicate::parse("Gender == ").is_err());
        assert!(Predicate::parse("(Gender == \"M\"").is_err());
        assert!(Predicate::parse("Gender == \"M\" extra").is_err());
        assert!(Predicate::parse("Gender == \"unterminated").is_err());
    }

    #[test]
    fn display_round_trips() {
        for src in [
            "Gender == \"M\"",
            "a < 3 and b >= 1.5 or not c != true",
            "`weird col` is not null",
            "x == \"quote\\\"inside\"",
        ] {
            let p = Predicate::parse(src).unwrap();
            let round = Predicate::parse(&p.to_string()).unwrap();
            assert_eq!(p, round, "source: {src}");
        }
    }
}
