//! Closed-form expressions over chart coordinates `x1..xn`, `y1..yn` and
//! named real parameters.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?          right associative, -a^b = -(a^b)
//! atom  := number | x<i> | y<i> | param | func '(' expr ')' | '(' expr ')'
//! func  := sqrt | sin | cos | exp | log | abs
//! ```

mod eval;
mod parse;
mod print;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use eval::EvalError;
pub use parse::parse;

/// A chart coordinate, zero-based internally and printed one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Var {
    X(usize),
    Y(usize),
}

impl Var {
    /// Position in the stacked coordinate vector `(x, y)`.
    pub fn slot(self, n: usize) -> usize {
        match self {
            Var::X(i) => i,
            Var::Y(i) => n + i,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y(i) => write!(f, "y{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sqrt,
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    /// Named parameter with its slot in the owning [`ExprAst`]'s table.
    Param(String, usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    pub fn constant(c: f64) -> Node {
        Node::Const(c)
    }

    pub fn binary(op: BinaryOp, a: Node, b: Node) -> Node {
        Node::Binary(op, Box::new(a), Box::new(b))
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        match self {
            Node::Unary(_, a) | Node::Call(_, a) => a.visit(f),
            Node::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    fn visit_mut(&mut self, f: &mut impl FnMut(&mut Node)) {
        f(self);
        match self {
            Node::Unary(_, a) | Node::Call(_, a) => a.visit_mut(f),
            Node::Binary(_, a, b) => {
                a.visit_mut(f);
                b.visit_mut(f);
            }
            _ => {}
        }
    }
}

/// A parsed expression together with its dimension and parameter table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    root: Node,
    n: usize,
    params: Vec<String>,
}

impl ExprAst {
    /// Assembles an expression from a tree, re-resolving parameter slots
    /// against `params` (sorted and deduplicated).
    pub fn from_node(mut root: Node, n: usize, params: impl IntoIterator<Item = String>) -> ExprAst {
        let params: Vec<String> = params.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        root.visit_mut(&mut |node| {
            if let Node::Param(name, slot) = node {
                *slot = params.iter().position(|p| p == name).expect("parameter missing from table");
            }
        });
        ExprAst { root, n, params }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Parameter names in slot order.
    pub fn params(&self) -> &[String] {
        &self.params
    }

    /// Exactly the coordinates appearing in the tree.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.root.visit(&mut |node| {
            if let Node::Var(v) = node {
                out.insert(*v);
            }
        });
        out
    }

    /// Parameter names actually referenced.
    pub fn used_params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.root.visit(&mut |node| {
            if let Node::Param(name, _) = node {
                out.insert(name.clone());
            }
        });
        out
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::print(&self.root))
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::print(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_vars_scan() {
        let e = parse("y1^2/(2*x2)", 2, &[]).unwrap();
        assert_eq!(e.free_vars(), BTreeSet::from([Var::X(1), Var::Y(0)]));
        assert!(parse("0", 2, &[]).unwrap().free_vars().is_empty());
        let phi = parse("sqrt(x2*y1^2+y2^2)", 2, &[]).unwrap();
        assert_eq!(phi.free_vars(), BTreeSet::from([Var::X(1), Var::Y(0), Var::Y(1)]));
    }

    #[test]
    fn var_display_is_one_based() {
        assert_eq!(Var::X(0).to_string(), "x1");
        assert_eq!(Var::Y(2).to_string(), "y3");
        assert_eq!(Var::Y(1).slot(3), 4);
    }
}
