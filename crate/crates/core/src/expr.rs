//! Expression language for system right-hand sides.
//!
//! Grammar (Pratt parser): `+ -` bind loosest and associate left, then
//! `* /`, then unary minus, then `^` which associates right and takes a
//! nonnegative integer literal exponent. Calls are `sin`, `cos`, `exp`,
//! `sqrt`; the name `pi` is a built-in constant unless shadowed.
//!
//! Expressions are evaluated either by walking the tree with named bindings
//! ([`eval_jet`]) or after compiling to a small postfix program with fixed
//! variable slots ([`CompiledExpr`]), which is what the solvers use.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::jets::Jet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply_f64(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Sqrt => x.sqrt(),
        }
    }

    fn apply_jet(self, x: &Jet) -> Result<Jet> {
        match self {
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Exp => Ok(x.exp()),
            Func::Sqrt => x.sqrt(),
        }
    }
}

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

    fn apply_f64(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Ident(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    /// Returns the next token and the byte offset where it starts.
    fn next(&mut self) -> Result<(Tok, usize)> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[self.pos..];
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == '.' {
            let bytes = rest.as_bytes();
            let mut i = 0;
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
            let text = &rest[..i];
            let value: f64 = text.parse().map_err(|_| Error::Syntax {
                offset: start,
                expected: format!("valid number, found `{text}`"),
            })?;
            self.pos += i;
            return Ok((Tok::Num(value), start));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let len = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .unwrap_or(rest.len());
            self.pos += len;
            return Ok((Tok::Ident(rest[..len].to_string()), start));
        }
        self.pos += c.len_utf8();
        match c {
            '+' | '-' | '*' | '/' | '^' => Ok((Tok::Op(c), start)),
            '(' => Ok((Tok::LParen, start)),
            ')' => Ok((Tok::RParen, start)),
            _ => Err(Error::Syntax {
                offset: start,
                expected: format!("operator or operand, found `{c}`"),
            }),
        }
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    offset: usize,
}

const UNARY_BP: u8 = 30;

fn infix_bp(op: char) -> Option<(u8, u8)> {
    match op {
        '+' | '-' => Some((10, 11)),
        '*' | '/' => Some((20, 21)),
        '^' => Some((41, 40)),
        _ => None,
    }
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<()> {
        let (tok, offset) = self.lexer.next()?;
        self.tok = tok;
        self.offset = offset;
        Ok(())
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr> {
        let mut lhs = self.prefix()?;
        loop {
            let op = match &self.tok {
                Tok::Op(c) => *c,
                _ => break,
            };
            let (l_bp, r_bp) = infix_bp(op).expect("lexer only yields known operators");
            if l_bp < min_bp {
                break;
            }
            self.bump()?;
            if op == '^' {
                let at = self.offset;
                let exponent = self.expr(r_bp)?;
                let value = fold_constant(&exponent);
                let e = match value {
                    Some(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => v as u32,
                    _ => {
                        return Err(Error::Syntax {
                            offset: at,
                            expected: "nonnegative integer exponent".into(),
                        })
                    }
                };
                lhs = Expr::Pow(Box::new(lhs), e);
                continue;
            }
            let rhs = self.expr(r_bp)?;
            let bop = match op {
                '+' => BinOp::Add,
                '-' => BinOp::Sub,
                '*' => BinOp::Mul,
                _ => BinOp::Div,
            };
            lhs = Expr::Binary(bop, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr> {
        let offset = self.offset;
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Number(v))
            }
            Tok::Ident(name) => {
                self.bump()?;
                if self.tok == Tok::LParen {
                    let func = Func::from_name(&name).ok_or(Error::UnknownFunction {
                        name: name.clone(),
                        offset,
                    })?;
                    self.bump()?;
                    let arg = self.expr(0)?;
                    self.expect_rparen()?;
                    Ok(Expr::Call(func, Box::new(arg)))
                } else {
                    Ok(Expr::Ident(name))
                }
            }
            Tok::LParen => {
                self.bump()?;
                let inner = self.expr(0)?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Op('-') => {
                self.bump()?;
                let operand = self.expr(UNARY_BP)?;
                Ok(Expr::Neg(Box::new(operand)))
            }
            _ => Err(Error::Syntax {
                offset,
                expected: "expected expression".into(),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.tok == Tok::RParen {
            self.bump()
        } else {
            Err(Error::Syntax {
                offset: self.offset,
                expected: "expected `)`".into(),
            })
        }
    }
}

fn fold_constant(e: &Expr) -> Option<f64> {
    match e {
        Expr::Number(v) => Some(*v),
        Expr::Ident(_) => None,
        Expr::Neg(a) => fold_constant(a).map(|v| -v),
        Expr::Binary(op, a, b) => Some(op.apply_f64(fold_constant(a)?, fold_constant(b)?)),
        Expr::Pow(a, n) => fold_constant(a).map(|v| v.powi(*n as i32)),
        Expr::Call(f, a) => fold_constant(a).map(|v| f.apply_f64(v)),
    }
}

pub fn parse(source: &str) -> Result<Expr> {
    let mut parser = Parser {
        lexer: Lexer {
            src: source,
            pos: 0,
        },
        tok: Tok::End,
        offset: 0,
    };
    parser.bump()?;
    let e = parser.expr(0)?;
    if parser.tok != Tok::End {
        return Err(Error::Syntax {
            offset: parser.offset,
            expected: "expected operator or end of input".into(),
        });
    }
    Ok(e)
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    /// Names referenced by the expression, excluding function names.
    pub fn free_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Number(_) => {}
            Expr::Ident(n) => {
                out.insert(n.clone());
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.collect_names(out),
            Expr::Binary(_, a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => write!(f, "{v:?}"),
            Expr::Ident(n) => write!(f, "{n}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.write_child(f, 3)
            }
            Expr::Binary(op, a, b) => {
                let p = self.precedence();
                a.write_child(f, p)?;
                write!(f, " {} ", op.symbol())?;
                b.write_child(f, p + 1)
            }
            Expr::Pow(a, n) => {
                a.write_child(f, 5)?;
                write!(f, "^{n}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

fn lookup_constant(name: &str, params: &HashMap<String, f64>) -> Option<f64> {
    params
        .get(name)
        .copied()
        .or_else(|| (name == "pi").then_some(std::f64::consts::PI))
}

enum Val {
    Scalar(f64),
    Jet(Jet),
}

impl Val {
    fn unary(self, f: Func) -> Result<Val> {
        Ok(match self {
            Val::Scalar(x) => Val::Scalar(f.apply_f64(x)),
            Val::Jet(j) => Val::Jet(f.apply_jet(&j)?),
        })
    }

    fn neg(self) -> Val {
        match self {
            Val::Scalar(x) => Val::Scalar(-x),
            Val::Jet(j) => Val::Jet(j.neg()),
        }
    }

    fn powi(self, n: u32) -> Val {
        match self {
            Val::Scalar(x) => Val::Scalar(x.powi(n as i32)),
            Val::Jet(j) => Val::Jet(j.powi(n)),
        }
    }

    fn binary(op: BinOp, a: Val, b: Val) -> Result<Val> {
        Ok(match (a, b) {
            (Val::Scalar(x), Val::Scalar(y)) => Val::Scalar(op.apply_f64(x, y)),
            (Val::Jet(x), Val::Scalar(y)) => Val::Jet(match op {
                BinOp::Add => x.add_scalar(y),
                BinOp::Sub => x.add_scalar(-y),
                BinOp::Mul => x.scale(y),
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(Error::JetDomain("division by zero".into()));
                    }
                    x.scale(1.0 / y)
                }
            }),
            (Val::Scalar(x), Val::Jet(y)) => Val::Jet(match op {
                BinOp::Add => y.add_scalar(x),
                BinOp::Sub => y.neg().add_scalar(x),
                BinOp::Mul => y.scale(x),
                BinOp::Div => y.constant_like(x).try_div(&y)?,
            }),
            (Val::Jet(x), Val::Jet(y)) => Val::Jet(match op {
                BinOp::Add => x.try_add(&y)?,
                BinOp::Sub => x.try_sub(&y)?,
                BinOp::Mul => x.try_mul(&y)?,
                BinOp::Div => x.try_div(&y)?,
            }),
        })
    }

    fn into_jet(self, like: &Jet) -> Jet {
        match self {
            Val::Scalar(x) => like.constant_like(x),
            Val::Jet(j) => j,
        }
    }
}

/// Evaluates `ast` with every name resolved from `bindings` (jets) or
/// `params` (reals). All bound jets must share one shape.
pub fn eval_jet(
    ast: &Expr,
    bindings: &HashMap<String, Jet>,
    params: &HashMap<String, f64>,
) -> Result<Jet> {
    let mut iter = bindings.values();
    let like = match iter.next() {
        Some(j) => j.clone(),
        None => Jet::constant(0.0, 0, 1)?,
    };
    for j in iter {
        if !j.same_shape(&like) {
            return Err(Error::JetShape(
                like.order(),
                like.nvars(),
                j.order(),
                j.nvars(),
            ));
        }
    }
    fn walk(
        e: &Expr,
        bindings: &HashMap<String, Jet>,
        params: &HashMap<String, f64>,
    ) -> Result<Val> {
        match e {
            Expr::Number(v) => Ok(Val::Scalar(*v)),
            Expr::Ident(n) => {
                if let Some(j) = bindings.get(n) {
                    Ok(Val::Jet(j.clone()))
                } else {
                    lookup_constant(n, params)
                        .map(Val::Scalar)
                        .ok_or_else(|| Error::Unbound(n.clone()))
                }
            }
            Expr::Neg(a) => Ok(walk(a, bindings, params)?.neg()),
            Expr::Pow(a, n) => Ok(walk(a, bindings, params)?.powi(*n)),
            Expr::Call(f, a) => walk(a, bindings, params)?.unary(*f),
            Expr::Binary(op, a, b) => {
                let x = walk(a, bindings, params)?;
                let y = walk(b, bindings, params)?;
                Val::binary(*op, x, y)
            }
        }
    }
    Ok(walk(ast, bindings, params)?.into_jet(&like))
}

#[derive(Debug, Clone)]
enum Instr {
    Const(f64),
    Var(usize),
    Neg,
    Pow(u32),
    Call(Func),
    Bin(BinOp),
}

/// Postfix program with variables resolved to positional slots and
/// parameter-only subtrees folded to constants.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    code: Vec<Instr>,
    nslots: usize,
    depth: usize,
}

impl CompiledExpr {
    pub fn compile(ast: &Expr, vars: &[&str], params: &HashMap<String, f64>) -> Result<Self> {
        let mut code = Vec::new();
        emit(ast, vars, params, &mut code)?;
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for ins in &code {
            match ins {
                Instr::Const(_) | Instr::Var(_) => depth += 1,
                Instr::Bin(_) => depth -= 1,
                _ => {}
            }
            max_depth = max_depth.max(depth);
        }
        Ok(CompiledExpr {
            code,
            nslots: vars.len(),
            depth: max_depth,
        })
    }

    /// Parses and compiles in one step.
    pub fn from_source(src: &str, vars: &[&str], params: &HashMap<String, f64>) -> Result<Self> {
        Self::compile(&parse(src)?, vars, params)
    }

    pub fn nslots(&self) -> usize {
        self.nslots
    }

    /// True when the program does not depend on any variable.
    pub fn constant_value(&self) -> Option<f64> {
        match self.code.as_slice() {
            [Instr::Const(v)] => Some(*v),
            _ => None,
        }
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nslots);
        let mut stack: Vec<f64> = Vec::with_capacity(self.depth);
        for ins in &self.code {
            match ins {
                Instr::Const(v) => stack.push(*v),
                Instr::Var(i) => stack.push(x[*i]),
                Instr::Neg => {
                    let a = stack.last_mut().expect("stack");
                    *a = -*a;
                }
                Instr::Pow(n) => {
                    let a = stack.last_mut().expect("stack");
                    *a = a.powi(*n as i32);
                }
                Instr::Call(f) => {
                    let a = stack.last_mut().expect("stack");
                    *a = f.apply_f64(*a);
                }
                Instr::Bin(op) => {
                    let b = stack.pop().expect("stack");
                    let a = stack.last_mut().expect("stack");
                    *a = op.apply_f64(*a, b);
                }
            }
        }
        stack.pop().expect("nonempty program")
    }

    /// Jet evaluation; every slot must hold a jet of the same shape.
    pub fn eval_jet(&self, x: &[Jet]) -> Result<Jet> {
        if x.len() != self.nslots {
            return Err(Error::JetRange(format!(
                "expected {} arguments, got {}",
                self.nslots,
                x.len()
            )));
        }
        let like = match x.first() {
            Some(j) => j,
            None => return Ok(Jet::constant(self.constant_value().unwrap_or(0.0), 0, 1)?),
        };
        for j in x {
            if !j.same_shape(like) {
                return Err(Error::JetShape(
                    like.order(),
                    like.nvars(),
                    j.order(),
                    j.nvars(),
                ));
            }
        }
        let mut stack: Vec<Val> = Vec::with_capacity(self.depth);
        for ins in &self.code {
            match ins {
                Instr::Const(v) => stack.push(Val::Scalar(*v)),
                Instr::Var(i) => stack.push(Val::Jet(x[*i].clone())),
                Instr::Neg => {
                    let a = stack.pop().expect("stack");
                    stack.push(a.neg());
                }
                Instr::Pow(n) => {
                    let a = stack.pop().expect("stack");
                    stack.push(a.powi(*n));
                }
                Instr::Call(f) => {
                    let a = stack.pop().expect("stack");
                    stack.push(a.unary(*f)?);
                }
                Instr::Bin(op) => {
                    let b = stack.pop().expect("stack");
                    let a = stack.pop().expect("stack");
                    stack.push(Val::binary(*op, a, b)?);
                }
            }
        }
        Ok(stack.pop().expect("nonempty program").into_jet(like))
    }
}

fn emit(
    e: &Expr,
    vars: &[&str],
    params: &HashMap<String, f64>,
    code: &mut Vec<Instr>,
) -> Result<()> {
    if let Some(v) = fold_with_params(e, vars, params)? {
        code.push(Instr::Const(v));
        return Ok(());
    }
    match e {
        Expr::Number(v) => code.push(Instr::Const(*v)),
        Expr::Ident(n) => {
            let slot = vars
                .iter()
                .position(|v| v == n)
                .ok_or_else(|| Error::Unbound(n.clone()))?;
            code.push(Instr::Var(slot));
        }
        Expr::Neg(a) => {
            emit(a, vars, params, code)?;
            code.push(Instr::Neg);
        }
        Expr::Pow(a, n) => {
            emit(a, vars, params, code)?;
            code.push(Instr::Pow(*n));
        }
        Expr::Call(f, a) => {
            emit(a, vars, params, code)?;
            code.push(Instr::Call(*f));
        }
        Expr::Binary(op, a, b) => {
            emit(a, vars, params, code)?;
            emit(b, vars, params, code)?;
            code.push(Instr::Bin(*op));
        }
    }
    Ok(())
}

/// Value of a subtree that references no variable slot, or `None`.
fn fold_with_params(e: &Expr, vars: &[&str], params: &HashMap<String, f64>) -> Result<Option<f64>> {
    Ok(match e {
        Expr::Number(v) => Some(*v),
        Expr::Ident(n) => {
            if vars.contains(&n.as_str()) {
                None
            } else {
                Some(lookup_constant(n, params).ok_or_else(|| Error::Unbound(n.clone()))?)
            }
        }
        Expr::Neg(a) => fold_with_params(a, vars, params)?.map(|v| -v),
        Expr::Pow(a, n) => fold_with_params(a, vars, params)?.map(|v| v.powi(*n as i32)),
        Expr::Call(f, a) => fold_with_params(a, vars, params)?.map(|v| f.apply_f64(v)),
        Expr::Binary(op, a, b) => {
            let x = fold_with_params(a, vars, params)?;
            let y = fold_with_params(b, vars, params)?;
            match (x, y) {
                (Some(x), Some(y)) => Some(op.apply_f64(x, y)),
                _ => None,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn duffing_expression_values() {
        let ast = parse("-w1 - a*w1^3").unwrap();
        let p = params(&[("a", 0.25)]);
        let c = CompiledExpr::compile(&ast, &["w1"], &p).unwrap();
        assert_eq!(c.eval_f64(&[2.0]), -4.0);

        let w1 = Jet::variable(0, 1.0, 1, 1).unwrap();
        let b: HashMap<_, _> = [("w1".to_string(), w1.clone())].into();
        let j = eval_jet(&ast, &b, &p).unwrap();
        assert_relative_eq!(j.coeffs()[0], -1.25);
        assert_relative_eq!(j.coeffs()[1], -1.75);
        let j2 = c.eval_jet(&[w1]).unwrap();
        assert_eq!(j, j2);
    }

    #[test]
    fn structure() {
        let ast = parse("sin(z1)*g/l").unwrap();
        assert_eq!(
            ast.free_names().into_iter().collect::<Vec<_>>(),
            vec!["g", "l", "z1"]
        );
        match &ast {
            Expr::Binary(BinOp::Div, lhs, _) => {
                assert!(matches!(**lhs, Expr::Binary(BinOp::Mul, ..)))
            }
            other => panic!("unexpected tree {other:?}"),
        }
        assert_eq!(
            parse("2^3^2").unwrap(),
            Expr::Pow(Box::new(Expr::Number(2.0)), 9)
        );
        assert_eq!(
            parse("-x^2").unwrap(),
            Expr::Neg(Box::new(Expr::Pow(Box::new(Expr::Ident("x".into())), 2)))
        );
        assert_eq!(
            parse("1 - 2 - 3").map(|e| fold_constant(&e)).unwrap(),
            Some(-4.0)
        );
    }

    #[test]
    fn syntax_errors() {
        match parse("sin(") {
            Err(Error::Syntax { offset, expected }) => {
                assert_eq!(offset, 4);
                assert_eq!(expected, "expected expression");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse("foo(1)"),
            Err(Error::UnknownFunction { offset: 0, .. })
        ));
        assert!(matches!(
            parse("x^1.5"),
            Err(Error::Syntax { offset: 2, .. })
        ));
        assert!(matches!(parse("x^y"), Err(Error::Syntax { .. })));
        assert!(matches!(parse("(x"), Err(Error::Syntax { offset: 2, .. })));
        assert!(matches!(parse("x y"), Err(Error::Syntax { offset: 2, .. })));
        assert!(matches!(
            parse("x # 2"),
            Err(Error::Syntax { offset: 2, .. })
        ));
    }

    #[test]
    fn identity_binding() {
        let w2 = Jet::variable(1, 0.3, 2, 2).unwrap();
        let w1 = Jet::variable(0, 0.0, 2, 2).unwrap();
        let b: HashMap<_, _> = [("w1".to_string(), w1), ("w2".to_string(), w2.clone())].into();
        assert_eq!(
            eval_jet(&parse("w2").unwrap(), &b, &HashMap::new()).unwrap(),
            w2
        );
    }

    #[test]
    fn volcano_prebound() {
        let ast = parse("sin(x2+y2)*exp(1-x2-y2)").unwrap();
        let w1 = Jet::variable(0, 1.0, 2, 2).unwrap();
        let w2 = Jet::variable(1, 0.0, 2, 2).unwrap();
        let b: HashMap<_, _> = [
            ("x2".to_string(), w1.powi(2)),
            ("y2".to_string(), w2.powi(2)),
        ]
        .into();
        let j = eval_jet(&ast, &b, &HashMap::new()).unwrap();
        assert_relative_eq!(j.value(), 0.841470985, epsilon = 1e-9);
    }

    #[test]
    fn unbound_and_constants() {
        let ast = parse("x + k").unwrap();
        assert!(matches!(
            CompiledExpr::compile(&ast, &["x"], &HashMap::new()),
            Err(Error::Unbound(n)) if n == "k"
        ));
        let c = CompiledExpr::from_source("2*pi*k", &[], &params(&[("k", 0.5)])).unwrap();
        assert_relative_eq!(c.constant_value().unwrap(), std::f64::consts::PI);
        let c = CompiledExpr::from_source("x*(1+k)", &["x"], &params(&[("k", 1.0)])).unwrap();
        assert_eq!(c.eval_f64(&[3.0]), 6.0);
    }

    #[test]
    fn printer_examples() {
        for (src, printed) in [
            ("-(a*b)", "-(a * b)"),
            ("(-a)^2", "(-a)^2"),
            ("a-(b-c)", "a - (b - c)"),
            ("a/(b*c)", "a / (b * c)"),
            ("sin(x)^2", "sin(x)^2"),
        ] {
            let e = parse(src).unwrap();
            assert_eq!(e.to_string(), printed);
            assert_eq!(parse(&e.to_string()).unwrap(), e);
        }
    }
}
