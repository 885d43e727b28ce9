use std::collections::BTreeSet;

use super::{BinaryOp, ExprAst, Func, Node, UnaryOp, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| Error::Syntax { pos: start, msg: format!("malformed number `{text}`") })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => return Err(Error::Syntax { pos: start, msg: format!("unexpected character `{c}`") }),
            };
            out.push((tok, start));
            i += 1;
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    n: usize,
    params: &'a BTreeSet<String>,
}

/// `x<k>` / `y<k>` with a decimal index; anything else is not a coordinate.
fn coordinate(name: &str) -> Option<(char, usize)> {
    let mut chars = name.chars();
    let kind = chars.next()?;
    if kind != 'x' && kind != 'y' {
        return None;
    }
    let digits = chars.as_str();
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((kind, digits.parse().ok()?))
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn here(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if t != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> Error {
        let found = match self.peek() {
            Tok::End => "end of input".to_string(),
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".to_string(),
            Tok::RParen => "`)`".to_string(),
        };
        Error::Syntax { pos: self.here(), msg: format!("expected {wanted}, found {found}") }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinaryOp::Add,
                Tok::Op('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinaryOp::Mul,
                Tok::Op('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(Node::Unary(UnaryOp::Neg, Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Node::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let pos = self.here();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(self.unexpected("`(` after function name"));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if let Some((kind, index)) = coordinate(&name) {
                    if index == 0 || index > self.n {
                        return Err(Error::VariableOutOfRange { name, pos, n: self.n });
                    }
                    let var = if kind == 'x' { Var::X(index - 1) } else { Var::Y(index - 1) };
                    return Ok(Node::Var(var));
                }
                if self.params.contains(&name) {
                    return Ok(Node::Param(name, 0));
                }
                Err(Error::UnknownIdentifier { name, pos })
            }
            _ => Err(self.unexpected("a number, variable, parameter, function call or `(`")),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected("`)`"))
        }
    }
}

/// Parses `source` over dimension `n` with the declared parameter names.
///
/// Parameter names must not collide with the coordinate pattern `x<k>`,
/// `y<k>` or with a function name.
pub fn parse(source: &str, n: usize, params: &[&str]) -> Result<ExprAst> {
    let params: BTreeSet<String> = params.iter().map(|p| p.to_string()).collect();
    for p in &params {
        if coordinate(p).is_some() || Func::from_name(p).is_some() {
            return Err(Error::Config(format!("parameter name `{p}` is reserved")));
        }
    }
    let toks = lex(source)?;
    let mut parser = Parser { toks, pos: 0, n, params: &params };
    let root = parser.expr()?;
    if *parser.peek() != Tok::End {
        return Err(parser.unexpected("an operator or end of input"));
    }
    Ok(ExprAst::from_node(root, n, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_two_coefficient() {
        let e = parse("y1^2/(2*x2)", 2, &[]).unwrap();
        let expected = Node::binary(
            BinaryOp::Div,
            Node::binary(BinaryOp::Pow, Node::Var(Var::Y(0)), Node::Const(2.0)),
            Node::binary(BinaryOp::Mul, Node::Const(2.0), Node::Var(Var::X(1))),
        );
        assert_eq!(e.root(), &expected);
    }

    #[test]
    fn zero_literal() {
        assert_eq!(parse("0", 2, &[]).unwrap().root(), &Node::Const(0.0));
    }

    #[test]
    fn truncated_input_is_a_syntax_error_at_the_end() {
        match parse("y1 +", 2, &[]) {
            Err(Error::Syntax { pos, msg }) => {
                assert_eq!(pos, 4);
                assert!(msg.contains("end of input"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identifier_errors() {
        assert!(matches!(parse("z1", 2, &[]), Err(Error::UnknownIdentifier { .. })));
        assert!(matches!(parse("x3 + 1", 2, &[]), Err(Error::VariableOutOfRange { pos: 0, .. })));
        assert!(matches!(parse("y0", 2, &[]), Err(Error::VariableOutOfRange { .. })));
        assert!(matches!(parse("sqrt x1", 2, &[]), Err(Error::Syntax { .. })));
        assert!(matches!(parse("(x1", 2, &[]), Err(Error::Syntax { .. })));
        assert!(matches!(parse("x1 # 2", 2, &[]), Err(Error::Syntax { pos: 3, .. })));
        assert!(parse("x1", 2, &["x2"]).is_err());
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse("2^3^2", 1, &[]).unwrap();
        assert_eq!(e.eval_f64(&[0.0], &[0.0], &[]).unwrap(), 512.0);
        let e = parse("-x1^2", 1, &[]).unwrap();
        assert_eq!(e.eval_f64(&[3.0], &[0.0], &[]).unwrap(), -9.0);
        let e = parse("8/4/2 - 1 - 1", 1, &[]).unwrap();
        assert_eq!(e.eval_f64(&[0.0], &[0.0], &[]).unwrap(), -1.0);
        let e = parse("2^-1 * mu", 1, &["mu"]).unwrap();
        assert_eq!(e.eval_f64(&[0.0], &[0.0], &[("mu", 3.0)]).unwrap(), 1.5);
        let e = parse("1.5e-1 + .5 + 2E2", 1, &[]).unwrap();
        assert_eq!(e.eval_f64(&[0.0], &[0.0], &[]).unwrap(), 200.65);
    }
}
