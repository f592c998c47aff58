//! Interpreter for the C subset the emitter produces.
//!
//! Arithmetic is checked 64-bit: any overflow, out-of-bounds access or
//! division by zero panics, since in C it would be undefined behaviour.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(i64),
    Punct(&'static str),
}

const PUNCTS: &[&str] = &[
    "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "++", "{", "}", "(", ")", "[", "]", ";", ",", "=", "<", ">", "+",
    "-", "*", "/", "%", "&",
];

fn lex(src: &str) -> Vec<Tok> {
    let mut toks = Vec::new();
    let mut text = String::new();
    for line in src.lines() {
        if !line.trim_start().starts_with('#') {
            text.push_str(line);
        }
        text.push('\n');
    }
    let b = text.as_bytes();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if text[i..].starts_with("/*") {
            i += text[i..].find("*/").expect("unterminated comment") + 2;
        } else if text[i..].starts_with("//") {
            i += text[i..].find('\n').unwrap_or(text.len() - i);
        } else if c.is_ascii_digit() {
            let start = i;
            while i < b.len() && (b[i] as char).is_ascii_digit() {
                i += 1;
            }
            let digits = &text[start..i];
            while i < b.len() && matches!(b[i], b'L' | b'l' | b'U' | b'u') {
                i += 1;
            }
            // the magnitude of i64::MIN only appears negated; keep it as a wrapped value
            let v: u64 = digits.parse().expect("integer literal");
            assert!(v <= 1 << 63, "literal {digits} out of range");
            toks.push(Tok::Num(v as i64));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            toks.push(Tok::Ident(text[start..i].to_string()));
        } else {
            let p = PUNCTS
                .iter()
                .find(|p| text[i..].starts_with(**p))
                .unwrap_or_else(|| panic!("unexpected character `{c}`"));
            toks.push(Tok::Punct(p));
            i += p.len();
        }
    }
    toks
}

#[derive(Clone, Debug)]
enum Expr {
    Num(i64),
    Var(String),
    Index(String, Box<Expr>),
    Call(String, Vec<Expr>),
    Neg(Box<Expr>),
    Bin(&'static str, Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug)]
enum Stmt {
    Decl { name: String, len: Option<usize>, init: Option<Expr> },
    Assign { name: String, index: Option<Expr>, value: Expr },
    If { cond: Expr, then: Vec<Stmt>, other: Vec<Stmt> },
    For { var: String, start: Expr, cond: Expr, body: Vec<Stmt> },
    Return(Option<Expr>),
    Expr(Expr),
}

#[derive(Clone, Debug)]
struct Func {
    params: Vec<(String, bool)>,
    body: Vec<Stmt>,
}

#[derive(Clone, Debug)]
enum Val {
    Int(i64),
    Arr(Rc<RefCell<Vec<i64>>>),
}

/// A parsed translation unit.
pub struct Program {
    consts: HashMap<String, Rc<RefCell<Vec<i64>>>>,
    funcs: HashMap<String, Func>,
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

fn type_range(ty: &str) -> (i64, i64) {
    match ty {
        "int8_t" => (i8::MIN as i64, i8::MAX as i64),
        "int16_t" => (i16::MIN as i64, i16::MAX as i64),
        "int32_t" => (i32::MIN as i64, i32::MAX as i64),
        "int64_t" => (i64::MIN, i64::MAX),
        _ => panic!("unsupported type `{ty}`"),
    }
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Tok {
        let t = self.toks.get(self.pos).cloned().expect("unexpected end of input");
        self.pos += 1;
        t
    }

    fn is(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    fn is_ident(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(q)) if q == s)
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.is(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) {
        let t = self.next();
        assert_eq!(t, Tok::Punct(PUNCTS.iter().find(|q| **q == p).unwrap()), "expected `{p}` at token {}", self.pos);
    }

    fn ident(&mut self) -> String {
        match self.next() {
            Tok::Ident(s) => s,
            t => panic!("expected identifier, got {t:?}"),
        }
    }

    fn number(&mut self) -> i64 {
        let neg = self.eat("-");
        match self.next() {
            Tok::Num(n) => {
                if neg {
                    n.wrapping_neg()
                } else {
                    n
                }
            }
            t => panic!("expected number, got {t:?}"),
        }
    }

    fn program(&mut self) -> Program {
        let mut consts = HashMap::new();
        let mut funcs = HashMap::new();
        while self.peek().is_some() {
            if self.is_ident("static") {
                self.pos += 1;
            }
            if self.is_ident("const") {
                self.pos += 1;
                let ty = self.ident();
                let (lo, hi) = type_range(&ty);
                let name = self.ident();
                self.expect("[");
                let len = self.number() as usize;
                self.expect("]");
                self.expect("=");
                self.expect("{");
                let mut vals = Vec::new();
                while !self.eat("}") {
                    let v = self.number();
                    assert!(v >= lo && v <= hi, "{name}: {v} does not fit {ty}");
                    vals.push(v);
                    self.eat(",");
                }
                self.expect(";");
                assert_eq!(vals.len(), len, "{name}: declared {len}, initialized {}", vals.len());
                consts.insert(name, Rc::new(RefCell::new(vals)));
            } else {
                let _ret = self.ident();
                let name = self.ident();
                self.expect("(");
                let mut params = Vec::new();
                while !self.eat(")") {
                    if self.is_ident("const") {
                        self.pos += 1;
                    }
                    let ty = self.ident();
                    type_range(&ty);
                    let p = self.ident();
                    let is_arr = self.eat("[");
                    if is_arr {
                        self.number();
                        self.expect("]");
                    }
                    params.push((p, is_arr));
                    self.eat(",");
                }
                let body = self.block();
                funcs.insert(name, Func { params, body });
            }
        }
        Program { consts, funcs }
    }

    fn block(&mut self) -> Vec<Stmt> {
        self.expect("{");
        let mut out = Vec::new();
        while !self.eat("}") {
            out.push(self.stmt());
        }
        out
    }

    fn stmt(&mut self) -> Stmt {
        if self.is_ident("int64_t") {
            self.pos += 1;
            let name = self.ident();
            let len = if self.eat("[") {
                let n = self.number() as usize;
                self.expect("]");
                Some(n)
            } else {
                None
            };
            let init = if self.eat("=") { Some(self.expr()) } else { None };
            self.expect(";");
            return Stmt::Decl { name, len, init };
        }
        if self.is_ident("if") {
            self.pos += 1;
            self.expect("(");
            let cond = self.expr();
            self.expect(")");
            let then = self.block();
            let other = if self.is_ident("else") {
                self.pos += 1;
                if self.is_ident("if") {
                    vec![self.stmt()]
                } else {
                    self.block()
                }
            } else {
                Vec::new()
            };
            return Stmt::If { cond, then, other };
        }
        if self.is_ident("for") {
            self.pos += 1;
            self.expect("(");
            let var = self.ident();
            self.expect("=");
            let start = self.expr();
            self.expect(";");
            let cond = self.expr();
            self.expect(";");
            let v2 = self.ident();
            assert_eq!(v2, var, "for step must increment the loop variable");
            self.expect("++");
            self.expect(")");
            let body = self.block();
            return Stmt::For { var, start, cond, body };
        }
        if self.is_ident("return") {
            self.pos += 1;
            let e = if self.is(";") { None } else { Some(self.expr()) };
            self.expect(";");
            return Stmt::Return(e);
        }
        // assignment or call
        let save = self.pos;
        let name = self.ident();
        if self.is("(") {
            self.pos = save;
            let e = self.expr();
            self.expect(";");
            return Stmt::Expr(e);
        }
        let index = if self.eat("[") {
            let e = self.expr();
            self.expect("]");
            Some(e)
        } else {
            None
        };
        self.expect("=");
        let value = self.expr();
        self.expect(";");
        Stmt::Assign { name, index, value }
    }

    fn expr(&mut self) -> Expr {
        self.binary(0)
    }

    fn binary(&mut self, level: usize) -> Expr {
        const LEVELS: &[&[&str]] = &[
            &["||"],
            &["&&"],
            &["&"],
            &["==", "!="],
            &["<", ">", "<=", ">="],
            &["<<", ">>"],
            &["+", "-"],
            &["*", "/", "%"],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1);
        loop {
            let op = LEVELS[level].iter().find(|op| self.is(op));
            match op {
                Some(op) => {
                    self.pos += 1;
                    let rhs = self.binary(level + 1);
                    lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
                }
                None => return lhs,
            }
        }
    }

    fn unary(&mut self) -> Expr {
        if self.eat("-") {
            return Expr::Neg(Box::new(self.unary()));
        }
        if self.eat("(") {
            if self.is_ident("int64_t") {
                self.pos += 1;
                self.expect(")");
                return self.unary();
            }
            let e = self.expr();
            self.expect(")");
            return e;
        }
        match self.next() {
            Tok::Num(n) => Expr::Num(n),
            Tok::Ident(name) => {
                if self.eat("[") {
                    let i = self.expr();
                    self.expect("]");
                    Expr::Index(name, Box::new(i))
                } else if self.eat("(") {
                    let mut args = Vec::new();
                    while !self.eat(")") {
                        args.push(self.expr());
                        self.eat(",");
                    }
                    Expr::Call(name, args)
                } else {
                    Expr::Var(name)
                }
            }
            t => panic!("unexpected token {t:?}"),
        }
    }
}

enum Flow {
    Normal,
    Return(Option<i64>),
}

struct Frame {
    vars: HashMap<String, Val>,
}

impl Program {
    pub fn parse(src: &str) -> Self {
        let mut p = Parser { toks: lex(src), pos: 0 };
        p.program()
    }

    /// Contents of a constant array.
    pub fn const_array(&self, name: &str) -> Option<Vec<i64>> {
        self.consts.get(name).map(|a| a.borrow().clone())
    }

    pub fn const_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.consts.keys().cloned().collect();
        v.sort();
        v
    }

    /// Calls `func(input, output)` and returns the output array.
    pub fn run(&self, func: &str, input: &[i64], n_out: usize) -> Vec<i64> {
        let inp = Rc::new(RefCell::new(input.to_vec()));
        let out = Rc::new(RefCell::new(vec![0; n_out]));
        self.call(func, vec![Val::Arr(inp), Val::Arr(out.clone())]);
        let v = out.borrow().clone();
        v
    }

    fn call(&self, name: &str, args: Vec<Val>) -> Option<i64> {
        let f = self.funcs.get(name).unwrap_or_else(|| panic!("unknown function `{name}`"));
        assert_eq!(f.params.len(), args.len(), "{name}: arity");
        let mut frame = Frame { vars: HashMap::new() };
        for ((p, is_arr), a) in f.params.iter().zip(args) {
            assert_eq!(*is_arr, matches!(a, Val::Arr(_)), "{name}: argument `{p}` kind");
            frame.vars.insert(p.clone(), a);
        }
        match self.exec_block(&f.body, &mut frame) {
            Flow::Return(v) => v,
            Flow::Normal => None,
        }
    }

    fn exec_block(&self, body: &[Stmt], frame: &mut Frame) -> Flow {
        for s in body {
            if let Flow::Return(v) = self.exec(s, frame) {
                return Flow::Return(v);
            }
        }
        Flow::Normal
    }

    fn exec(&self, s: &Stmt, frame: &mut Frame) -> Flow {
        match s {
            Stmt::Decl { name, len, init } => {
                let v = match (len, init) {
                    (Some(n), None) => Val::Arr(Rc::new(RefCell::new(vec![0; *n]))),
                    (None, Some(e)) => Val::Int(self.eval(e, frame)),
                    (None, None) => Val::Int(0),
                    (Some(_), Some(_)) => panic!("array initializers in functions are not supported"),
                };
                frame.vars.insert(name.clone(), v);
            }
            Stmt::Assign { name, index, value } => {
                let v = self.eval(value, frame);
                match index {
                    None => {
                        let slot = frame.vars.get_mut(name).unwrap_or_else(|| panic!("undeclared `{name}`"));
                        assert!(matches!(slot, Val::Int(_)), "assigning to array `{name}`");
                        *slot = Val::Int(v);
                    }
                    Some(i) => {
                        let i = self.eval(i, frame);
                        assert!(!self.consts.contains_key(name), "write to constant `{name}`");
                        let Some(Val::Arr(a)) = frame.vars.get(name) else { panic!("`{name}` is not an array") };
                        let mut a = a.borrow_mut();
                        let len = a.len();
                        *a.get_mut(usize::try_from(i).unwrap_or(usize::MAX))
                            .unwrap_or_else(|| panic!("{name}[{i}] out of bounds ({len})")) = v;
                    }
                }
            }
            Stmt::If { cond, then, other } => {
                let b = self.eval(cond, frame) != 0;
                return self.exec_block(if b { then } else { other }, frame);
            }
            Stmt::For { var, start, cond, body } => {
                let v = self.eval(start, frame);
                frame.vars.insert(var.clone(), Val::Int(v));
                while self.eval(cond, frame) != 0 {
                    if let Flow::Return(v) = self.exec_block(body, frame) {
                        return Flow::Return(v);
                    }
                    let Some(Val::Int(i)) = frame.vars.get_mut(var) else { unreachable!() };
                    *i = i.checked_add(1).expect("loop counter overflow");
                }
            }
            Stmt::Return(e) => return Flow::Return(e.as_ref().map(|e| self.eval(e, frame))),
            Stmt::Expr(e) => {
                self.eval_call(e, frame);
            }
        }
        Flow::Normal
    }

    fn eval_call(&self, e: &Expr, frame: &mut Frame) -> Option<i64> {
        let Expr::Call(name, args) = e else { panic!("expression statement must be a call") };
        let vals = args
            .iter()
            .map(|a| match a {
                Expr::Var(v) if matches!(frame.vars.get(v), Some(Val::Arr(_))) => frame.vars[v].clone(),
                _ => Val::Int(self.eval(a, frame)),
            })
            .collect();
        self.call(name, vals)
    }

    fn eval(&self, e: &Expr, frame: &mut Frame) -> i64 {
        match e {
            Expr::Num(n) => *n,
            Expr::Var(v) => match frame.vars.get(v) {
                Some(Val::Int(i)) => *i,
                _ => panic!("`{v}` is not a scalar"),
            },
            Expr::Index(name, i) => {
                let i = self.eval(i, frame);
                let arr = match frame.vars.get(name) {
                    Some(Val::Arr(a)) => a.clone(),
                    Some(Val::Int(_)) => panic!("`{name}` is not an array"),
                    None => self.consts.get(name).unwrap_or_else(|| panic!("unknown array `{name}`")).clone(),
                };
                let a = arr.borrow();
                *a.get(usize::try_from(i).unwrap_or(usize::MAX))
                    .unwrap_or_else(|| panic!("{name}[{i}] out of bounds ({})", a.len()))
            }
            Expr::Call(..) => self.eval_call(e, frame).expect("call used as value returns nothing"),
            Expr::Neg(x) => {
                let v = self.eval(x, frame);
                v.checked_neg().unwrap_or_else(|| {
                    // `-9223372036854775808` is the only literal whose negation wraps
                    assert!(matches!(**x, Expr::Num(_)), "negation overflow");
                    v
                })
            }
            Expr::Bin(op, a, b) => {
                let x = self.eval(a, frame);
                if *op == "&&" {
                    return (x != 0 && self.eval(b, frame) != 0) as i64;
                }
                if *op == "||" {
                    return (x != 0 || self.eval(b, frame) != 0) as i64;
                }
                let y = self.eval(b, frame);
                let ovf = || panic!("overflow in {x} {op} {y}");
                match *op {
                    "+" => x.checked_add(y).unwrap_or_else(ovf),
                    "-" => x.checked_sub(y).unwrap_or_else(ovf),
                    "*" => x.checked_mul(y).unwrap_or_else(ovf),
                    "/" => x.checked_div(y).unwrap_or_else(ovf),
                    "%" => x.checked_rem(y).unwrap_or_else(ovf),
                    ">>" => {
                        assert!((0..64).contains(&y), "shift count {y}");
                        x >> y
                    }
                    "<<" => {
                        assert!((0..64).contains(&y) && x >= 0, "left shift {x} << {y}");
                        x.checked_mul(1i64.checked_shl(y as u32).unwrap_or_else(ovf)).unwrap_or_else(ovf)
                    }
                    "&" => x & y,
                    "<" => (x < y) as i64,
                    ">" => (x > y) as i64,
                    "<=" => (x <= y) as i64,
                    ">=" => (x >= y) as i64,
                    "==" => (x == y) as i64,
                    "!=" => (x != y) as i64,
                    _ => unreachable!(),
                }
            }
        }
    }
}
