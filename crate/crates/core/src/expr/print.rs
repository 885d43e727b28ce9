use super::{BinaryOp, Node, UnaryOp};

const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const PREFIX: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => SUM,
        Node::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => PRODUCT,
        Node::Unary(UnaryOp::Neg, _) => PREFIX,
        Node::Const(c) if c.is_sign_negative() => PREFIX,
        Node::Binary(BinaryOp::Pow, ..) => POWER,
        _ => ATOM,
    }
}

/// Prints with the minimal parentheses the grammar needs to reparse the same tree.
pub(super) fn print(node: &Node) -> String {
    let mut out = String::new();
    write(node, 0, &mut out);
    out
}

fn write(node: &Node, min_prec: u8, out: &mut String) {
    let wrap = precedence(node) < min_prec;
    if wrap {
        out.push('(');
    }
    match node {
        Node::Const(c) if c.is_sign_negative() => {
            // only built programmatically; the parser yields Neg(Const)
            out.push_str(&format!("({c})"));
        }
        Node::Const(c) => out.push_str(&format!("{c}")),
        Node::Var(v) => out.push_str(&v.to_string()),
        Node::Param(name, _) => out.push_str(name),
        Node::Unary(UnaryOp::Neg, a) => {
            out.push('-');
            write(a, PREFIX, out);
        }
        Node::Call(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write(a, 0, out);
            out.push(')');
        }
        Node::Binary(op, a, b) => {
            let (sym, lhs, rhs) = match op {
                BinaryOp::Add => (" + ", SUM, PRODUCT),
                BinaryOp::Sub => (" - ", SUM, PRODUCT),
                BinaryOp::Mul => ("*", PRODUCT, PREFIX),
                BinaryOp::Div => ("/", PRODUCT, PREFIX),
                BinaryOp::Pow => ("^", ATOM, PREFIX),
            };
            write(a, lhs, out);
            out.push_str(sym);
            write(b, rhs, out);
        }
    }
    if wrap {
        out.push(')');
    }
}
