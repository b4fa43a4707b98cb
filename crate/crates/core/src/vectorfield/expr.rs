//! Arithmetic expression trees: lexer, recursive-descent parser and printer.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' '-'? integer)?
//! atom    := number | ident | ident '(' sum (',' sum)* ')' | '(' sum ')'
//! ```
//!
//! so `-x^2` is `-(x^2)` and `a - b - c` is `(a - b) - c`.

use std::fmt;

use super::signature::{FieldSignature, Var};
use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        match name {
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            "abs" => Some(Func::Abs),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
        }
    }
}

/// Expression tree over state and parameter variables.
///
/// Literals produced by the parser are never negative; a leading minus is
/// always a [`Expr::Neg`] node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Vec<Expr>),
}

/// Raised when a denominator evaluates to exactly zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionByZero;

impl Expr {
    pub fn num(value: f64) -> Expr {
        Expr::Num(value)
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn eval(&self, state: &[f64], params: &[f64]) -> Result<f64, DivisionByZero> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::State(i)) => state[*i],
            Expr::Var(Var::Param(i)) => params[*i],
            Expr::Neg(e) => -e.eval(state, params)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval(state, params)?;
                let b = b.eval(state, params)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(DivisionByZero);
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(base, exp) => {
                let b = base.eval(state, params)?;
                if *exp < 0 && b == 0.0 {
                    return Err(DivisionByZero);
                }
                b.powi(*exp)
            }
            Expr::Call(func, args) => match func {
                Func::Abs => args[0].eval(state, params)?.abs(),
                Func::Min => {
                    let mut acc = f64::INFINITY;
                    for a in args {
                        acc = acc.min(a.eval(state, params)?);
                    }
                    acc
                }
                Func::Max => {
                    let mut acc = f64::NEG_INFINITY;
                    for a in args {
                        acc = acc.max(a.eval(state, params)?);
                    }
                    acc
                }
            },
        })
    }

    /// Rewrites every variable through `map`.
    pub fn map_vars(&self, map: &impl Fn(Var) -> Var) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(v) => Expr::Var(map(*v)),
            Expr::Neg(e) => Expr::Neg(Box::new(e.map_vars(map))),
            Expr::Bin(op, a, b) => Expr::bin(*op, a.map_vars(map), b.map_vars(map)),
            Expr::Pow(b, k) => Expr::Pow(Box::new(b.map_vars(map)), *k),
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| a.map_vars(map)).collect()),
        }
    }

    pub fn visit_vars(&self, visit: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => visit(*v),
            Expr::Neg(e) | Expr::Pow(e, _) => e.visit_vars(visit),
            Expr::Bin(_, a, b) => {
                a.visit_vars(visit);
                b.visit_vars(visit);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_vars(visit)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            Expr::Pow(_, _) => 4,
            Expr::Num(v) if v.is_sign_negative() => 0,
            _ => 5,
        }
    }

    /// Renders the tree with the minimal parentheses needed to parse back
    /// into the identical tree.
    pub fn display<'a>(&'a self, sig: &'a FieldSignature) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, sig }
    }

    fn write(&self, sig: &FieldSignature, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if v.is_sign_negative() {
                    // Not produced by the parser; kept printable anyway.
                    write!(f, "(0-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Var(v) => f.write_str(&sig.var_name(*v)),
            Expr::Neg(e) => {
                f.write_str("-")?;
                wrap(e, e.precedence() < 3, sig, f)
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                wrap(a, a.precedence() < p, sig, f)?;
                write!(f, " {} ", op.symbol())?;
                wrap(b, b.precedence() <= p, sig, f)
            }
            Expr::Pow(base, k) => {
                wrap(base, base.precedence() < 5, sig, f)?;
                write!(f, "^{k}")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    a.write(sig, f)?;
                }
                f.write_str(")")
            }
        }
    }
}

fn wrap(e: &Expr, parens: bool, sig: &FieldSignature, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if parens {
        f.write_str("(")?;
        e.write(sig, f)?;
        f.write_str(")")
    } else {
        e.write(sig, f)
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    sig: &'a FieldSignature,
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.write(self.sig, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Int(i64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
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
            let text: String = chars[start..i].iter().collect();
            let is_int = text.chars().all(|d| d.is_ascii_digit());
            let tok = if is_int {
                match text.parse::<i64>() {
                    Ok(n) => Tok::Int(n),
                    Err(_) => Tok::Num(parse_float(&text, start)?),
                }
            } else {
                Tok::Num(parse_float(&text, start)?)
            };
            out.push(Token { tok, pos: start });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), pos: start });
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            other => {
                return Err(ParseError::Syntax { position: start, message: format!("unexpected character '{other}'") })
            }
        };
        out.push(Token { tok, pos: start });
        i += 1;
    }
    out.push(Token { tok: Tok::End, pos: chars.len() });
    Ok(out)
}

fn parse_float(text: &str, pos: usize) -> Result<f64, ParseError> {
    text.parse::<f64>().map_err(|_| ParseError::Syntax { position: pos, message: format!("malformed number '{text}'") })
}

struct Parser<'a> {
    toks: Vec<Token>,
    at: usize,
    sig: &'a FieldSignature,
}

/// Parses one component expression against `sig`.
pub fn parse_expr(src: &str, sig: &FieldSignature) -> Result<Expr, ParseError> {
    let mut p = Parser { toks: lex(src)?, at: 0, sig };
    let e = p.sum()?;
    match p.peek() {
        Tok::End => Ok(e),
        other => Err(p.unexpected(&other.clone())),
    }
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn pos(&self) -> usize {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if !matches!(t.tok, Tok::End) {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, tok: &Tok) -> ParseError {
        let found = match tok {
            Tok::End => "end of input".to_string(),
            Tok::Num(v) => format!("number {v}"),
            Tok::Int(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier {s}"),
            Tok::Op(c) => format!("'{c}'"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
        };
        ParseError::Syntax { position: self.pos(), message: format!("unexpected {found}") }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Tok::Op('-')) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if !matches!(self.peek(), Tok::Op('^')) {
            return Ok(base);
        }
        self.bump();
        let negative = if matches!(self.peek(), Tok::Op('-')) {
            self.bump();
            true
        } else {
            false
        };
        let pos = self.pos();
        match self.bump().tok {
            Tok::Int(k) => {
                let k = if negative { -k } else { k };
                let k = i32::try_from(k)
                    .map_err(|_| ParseError::Syntax { position: pos, message: "exponent out of range".into() })?;
                Ok(Expr::Pow(Box::new(base), k))
            }
            _ => Err(ParseError::Syntax { position: pos, message: "exponent must be an integer literal".into() }),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        let tok = self.bump();
        match tok.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Int(v) => Ok(Expr::Num(v as f64)),
            Tok::LParen => {
                let e = self.sum()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if matches!(self.peek(), Tok::LParen) {
                    let func = Func::from_name(&name)
                        .ok_or_else(|| ParseError::UnknownFunction { name: name.clone(), position: pos })?;
                    self.bump();
                    let mut args = vec![self.sum()?];
                    while matches!(self.peek(), Tok::Comma) {
                        self.bump();
                        args.push(self.sum()?);
                    }
                    self.expect_rparen()?;
                    let ok = match func {
                        Func::Abs => args.len() == 1,
                        Func::Min | Func::Max => args.len() >= 2,
                    };
                    if !ok {
                        return Err(ParseError::Syntax {
                            position: pos,
                            message: format!("wrong number of arguments to {}", func.name()),
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                self.sig.resolve(&name).map(Expr::Var).ok_or(ParseError::UndeclaredIdentifier { name, position: pos })
            }
            other => {
                self.at -= usize::from(!matches!(other, Tok::End));
                Err(self.unexpected(&other))
            }
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::RParen => {
                self.bump();
                Ok(())
            }
            other => Err(self.unexpected(&other.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig() -> FieldSignature {
        FieldSignature::new(2, vec![("u".into(), 1), ("v".into(), 2)]).unwrap()
    }

    fn eval(src: &str, x: &[f64], p: &[f64]) -> f64 {
        parse_expr(src, &sig()).unwrap().eval(x, p).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(eval("x1*x2 + 3", &[2.0, 5.0], &[0.0; 3]), 13.0);
        assert_eq!(eval("-x1^2", &[3.0, 0.0], &[0.0; 3]), -9.0);
        assert_eq!(eval("(-x1)^2", &[3.0, 0.0], &[0.0; 3]), 9.0);
        assert_eq!(eval("10 - 4 - 3", &[0.0; 2], &[0.0; 3]), 3.0);
        assert_eq!(eval("12 / 3 / 2", &[0.0; 2], &[0.0; 3]), 2.0);
        assert_eq!(eval("2 * -x2", &[0.0, 4.0], &[0.0; 3]), -8.0);
        assert_eq!(eval("x1^-2", &[2.0, 0.0], &[0.0; 3]), 0.25);
        assert_eq!(eval("1.5e1 + .5", &[0.0; 2], &[0.0; 3]), 15.5);
    }

    #[test]
    fn functions_and_params() {
        assert_eq!(eval("max(u, v1, v2)", &[0.0; 2], &[1.0, 3.0, 2.0]), 3.0);
        assert_eq!(eval("min(u1, -v2)", &[0.0; 2], &[1.0, 3.0, 2.0]), -2.0);
        assert_eq!(eval("abs(x1 - x2)", &[1.0, 4.0], &[0.0; 3]), 3.0);
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_expr("x1 + w", &sig()).unwrap_err();
        assert_eq!(err, ParseError::UndeclaredIdentifier { name: "w".into(), position: 5 });
        assert!(err.to_string().contains("undeclared identifier w"));

        assert!(matches!(parse_expr("x1 +", &sig()), Err(ParseError::Syntax { position: 4, .. })));
        assert!(matches!(parse_expr("(x1", &sig()), Err(ParseError::Syntax { position: 3, .. })));
        assert!(matches!(parse_expr("x1 ^ 0.5", &sig()), Err(ParseError::Syntax { position: 5, .. })));
        assert!(matches!(parse_expr("x1 $ 2", &sig()), Err(ParseError::Syntax { position: 3, .. })));
        assert!(matches!(parse_expr("sin(x1)", &sig()), Err(ParseError::UnknownFunction { .. })));
        assert!(matches!(parse_expr("abs(x1, x2)", &sig()), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_expr("x1 x2", &sig()), Err(ParseError::Syntax { position: 3, .. })));
    }

    #[test]
    fn division_by_zero_is_reported() {
        let e = parse_expr("1 / (x1 - x2)", &sig()).unwrap();
        assert_eq!(e.eval(&[1.0, 1.0], &[0.0; 3]), Err(DivisionByZero));
        let e = parse_expr("x1^-1", &sig()).unwrap();
        assert_eq!(e.eval(&[0.0, 1.0], &[0.0; 3]), Err(DivisionByZero));
    }

    #[test]
    fn printing_reparses() {
        let s = sig();
        for src in [
            "x1*x2 + 3",
            "-(x1 - x2)^3",
            "x1 - (x2 - u)",
            "--x1",
            "-x1^2 / (u - v1) * v2",
            "max(x1, min(x2, 1e-7), 3) - abs(-u)",
            "(x1^2)^3",
            "x1 - -x2",
        ] {
            let e = parse_expr(src, &s).unwrap();
            let printed = e.display(&s).to_string();
            let back = parse_expr(&printed, &s).unwrap();
            assert_eq!(e, back, "{src} -> {printed}");
        }
    }
}
