//! Closed-form expression mini-language used for hard-constraint factors,
//! prescribed tractions and body forces.
//!
//! Grammar (loosest to tightest binding): `+ -`, `* /`, unary `-`, `^`
//! (right-associative), atoms. Identifiers are the coordinates `x1`, `x2`
//! and the fixed function set below; there are no user-defined symbols.
//! Evaluation returns the value together with its exact spatial gradient so
//! constraint factors enter the strain analytically.

use crate::scalar::{sgn, Scalar};
use std::fmt;

/// Unary functions available in constraint and load expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Sin,
    Cos,
    Tanh,
    Abs,
    Sqrt,
    Relu,
    Sgn,
}

impl UnaryFn {
    fn name(self) -> &'static str {
        match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Tanh => "tanh",
            UnaryFn::Abs => "abs",
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Relu => "relu",
            UnaryFn::Sgn => "sgn",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(UnaryFn::Sin),
            "cos" => Some(UnaryFn::Cos),
            "tanh" => Some(UnaryFn::Tanh),
            "abs" => Some(UnaryFn::Abs),
            "sqrt" => Some(UnaryFn::Sqrt),
            "relu" => Some(UnaryFn::Relu),
            "sgn" => Some(UnaryFn::Sgn),
            _ => None,
        }
    }
}

/// Expression tree. `Var(0)` is `x1`, `Var(1)` is `x2`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpressionAst {
    Constant(f64),
    Var(usize),
    Neg(Box<ExpressionAst>),
    Add(Box<ExpressionAst>, Box<ExpressionAst>),
    Sub(Box<ExpressionAst>, Box<ExpressionAst>),
    Mul(Box<ExpressionAst>, Box<ExpressionAst>),
    Div(Box<ExpressionAst>, Box<ExpressionAst>),
    Pow(Box<ExpressionAst>, Box<ExpressionAst>),
    Unary(UnaryFn, Box<ExpressionAst>),
    Min(Box<ExpressionAst>, Box<ExpressionAst>),
    Max(Box<ExpressionAst>, Box<ExpressionAst>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprError {
    /// Byte offset plus message; offsets are 0-based.
    Parse { at: usize, msg: String },
    /// Runtime domain failure naming the offending node.
    Eval { node: String, msg: String },
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprError::Parse { at, msg } => write!(f, "parse error at offset {at}: {msg}"),
            ExprError::Eval { node, msg } => write!(f, "evaluation error in '{node}': {msg}"),
        }
    }
}

impl std::error::Error for ExprError {}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Parse {
            at: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        match self.peek() {
            Some(got) if got == c => {
                self.pos += 1;
                Ok(())
            }
            Some(got) => self.err(format!("expected '{}', found '{}'", c as char, got as char)),
            None => self.err(format!("expected '{}', found end of input", c as char)),
        }
    }

    fn sum(&mut self) -> Result<ExpressionAst, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = ExpressionAst::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = ExpressionAst::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ExpressionAst, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = ExpressionAst::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = ExpressionAst::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<ExpressionAst, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(ExpressionAst::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // `^` binds tighter than unary minus and associates to the right:
    // -x^2 is -(x^2) and 2^3^2 is 2^(3^2).
    fn power(&mut self) -> Result<ExpressionAst, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // Allow a signed exponent: x^-2.
            let exp = self.unary()?;
            Ok(ExpressionAst::Pow(Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<ExpressionAst, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
            None => self.err("unexpected end of input"),
        }
    }

    fn number(&mut self) -> Result<ExpressionAst, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && self.pos > start {
                self.pos += 1;
                if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) => Ok(ExpressionAst::Constant(v)),
            Err(_) => {
                self.pos = start;
                self.err(format!("malformed number '{text}'"))
            }
        }
    }

    fn identifier(&mut self) -> Result<ExpressionAst, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_owned();
        match name.as_str() {
            "x1" => Ok(ExpressionAst::Var(0)),
            "x2" => Ok(ExpressionAst::Var(1)),
            "min" | "max" => {
                self.expect(b'(')?;
                let a = self.sum()?;
                self.expect(b',')?;
                let b = self.sum()?;
                self.expect(b')')?;
                Ok(if name == "min" {
                    ExpressionAst::Min(Box::new(a), Box::new(b))
                } else {
                    ExpressionAst::Max(Box::new(a), Box::new(b))
                })
            }
            _ => {
                if let Some(f) = UnaryFn::from_name(&name) {
                    self.expect(b'(')?;
                    let arg = self.sum()?;
                    self.expect(b')')?;
                    Ok(ExpressionAst::Unary(f, Box::new(arg)))
                } else {
                    self.pos = start;
                    self.err(format!("unknown identifier '{name}'"))
                }
            }
        }
    }
}

/// Parse an expression string into its AST.
pub fn parse_expression(text: &str) -> Result<ExpressionAst, ExprError> {
    let mut p = Parser::new(text);
    if p.peek().is_none() {
        return p.err("empty expression");
    }
    let ast = p.sum()?;
    match p.peek() {
        None => Ok(ast),
        Some(c) => p.err(format!("trailing input starting at '{}'", c as char)),
    }
}

// ---------------------------------------------------------------------------
// Evaluation with exact gradient
// ---------------------------------------------------------------------------

type ValGrad<T> = (T, [T; 2]);

fn eval_node<T: Scalar>(ast: &ExpressionAst, x: [T; 2]) -> Result<ValGrad<T>, ExprError> {
    let fin = |node: &str, v: T, g: [T; 2]| -> Result<ValGrad<T>, ExprError> {
        if v.is_finite() && g[0].is_finite() && g[1].is_finite() {
            Ok((v, g))
        } else {
            Err(ExprError::Eval {
                node: node.to_owned(),
                msg: "non-finite result".to_owned(),
            })
        }
    };
    match ast {
        ExpressionAst::Constant(c) => Ok((T::c(*c), [T::zero(); 2])),
        ExpressionAst::Var(i) => {
            let mut g = [T::zero(); 2];
            g[*i] = T::one();
            Ok((x[*i], g))
        }
        ExpressionAst::Neg(a) => {
            let (v, g) = eval_node(a, x)?;
            Ok((-v, [-g[0], -g[1]]))
        }
        ExpressionAst::Add(a, b) => {
            let (va, ga) = eval_node(a, x)?;
            let (vb, gb) = eval_node(b, x)?;
            Ok((va + vb, [ga[0] + gb[0], ga[1] + gb[1]]))
        }
        ExpressionAst::Sub(a, b) => {
            let (va, ga) = eval_node(a, x)?;
            let (vb, gb) = eval_node(b, x)?;
            Ok((va - vb, [ga[0] - gb[0], ga[1] - gb[1]]))
        }
        ExpressionAst::Mul(a, b) => {
            let (va, ga) = eval_node(a, x)?;
            let (vb, gb) = eval_node(b, x)?;
            Ok((va * vb, [ga[0] * vb + va * gb[0], ga[1] * vb + va * gb[1]]))
        }
        ExpressionAst::Div(a, b) => {
            let (va, ga) = eval_node(a, x)?;
            let (vb, gb) = eval_node(b, x)?;
            if vb == T::zero() {
                return Err(ExprError::Eval {
                    node: "/".to_owned(),
                    msg: "division by zero".to_owned(),
                });
            }
            let v = va / vb;
            let g = [(ga[0] - v * gb[0]) / vb, (ga[1] - v * gb[1]) / vb];
            fin("/", v, g)
        }
        ExpressionAst::Pow(a, b) => {
            let (va, ga) = eval_node(a, x)?;
            let (vb, gb) = eval_node(b, x)?;
            let v = va.powf(vb);
            if !v.is_finite() {
                return Err(ExprError::Eval {
                    node: "^".to_owned(),
                    msg: format!("{va} ^ {vb} is not finite"),
                });
            }
            // d(a^b) = a^b (b' ln a + b a'/a); constant exponents avoid the log.
            let grad_exp_const = gb[0] == T::zero() && gb[1] == T::zero();
            let g = if grad_exp_const {
                if va == T::zero() {
                    [T::zero(); 2]
                } else {
                    let s = vb * va.powf(vb - T::one());
                    [s * ga[0], s * ga[1]]
                }
            } else {
                if va <= T::zero() {
                    return Err(ExprError::Eval {
                        node: "^".to_owned(),
                        msg: "gradient of a^b needs a > 0 for variable exponent".to_owned(),
                    });
                }
                let ln = va.ln();
                let d0 = v * (gb[0] * ln + vb * ga[0] / va);
                let d1 = v * (gb[1] * ln + vb * ga[1] / va);
                [d0, d1]
            };
            fin("^", v, g)
        }
        ExpressionAst::Unary(f, a) => {
            let (v, g) = eval_node(a, x)?;
            let (fv, df) = match f {
                UnaryFn::Sin => (v.sin(), v.cos()),
                UnaryFn::Cos => (v.cos(), -v.sin()),
                UnaryFn::Tanh => {
                    let t = v.tanh();
                    (t, T::one() - t * t)
                }
                UnaryFn::Abs => (v.abs(), sgn(v)),
                UnaryFn::Sqrt => {
                    if v < T::zero() {
                        return Err(ExprError::Eval {
                            node: "sqrt".to_owned(),
                            msg: "sqrt of negative value".to_owned(),
                        });
                    }
                    if v == T::zero() {
                        // Value is fine; the one-sided slope blows up, report it.
                        return Err(ExprError::Eval {
                            node: "sqrt".to_owned(),
                            msg: "gradient of sqrt is unbounded at zero".to_owned(),
                        });
                    }
                    let s = v.sqrt();
                    (s, (T::one() + T::one()).recip() / s)
                }
                UnaryFn::Relu => {
                    if v > T::zero() {
                        (v, T::one())
                    } else {
                        (T::zero(), T::zero())
                    }
                }
                UnaryFn::Sgn => (sgn(v), T::zero()),
            };
            fin(f.name(), fv, [df * g[0], df * g[1]])
        }
        ExpressionAst::Min(a, b) => {
            let (va, ga) = eval_node(a, x)?;
            let (vb, gb) = eval_node(b, x)?;
            // Ties take the first argument's branch.
            Ok(if va <= vb { (va, ga) } else { (vb, gb) })
        }
        ExpressionAst::Max(a, b) => {
            let (va, ga) = eval_node(a, x)?;
            let (vb, gb) = eval_node(b, x)?;
            Ok(if va >= vb { (va, ga) } else { (vb, gb) })
        }
    }
}

/// Evaluate `ast` at the point `x`, returning the value and its exact
/// spatial gradient. `abs` differentiates with `d|v|/dv = sgn(v)` and the
/// shared `sgn(0) = -1` convention.
pub fn eval_expression<T: Scalar>(
    ast: &ExpressionAst,
    x: [T; 2],
) -> Result<(T, [T; 2]), ExprError> {
    eval_node(ast, x)
}

/// Value-only evaluation (same domain rules as [`eval_expression`]).
pub fn eval_value<T: Scalar>(ast: &ExpressionAst, x: [T; 2]) -> Result<T, ExprError> {
    eval_node(ast, x).map(|(v, _)| v)
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

/// Print with full parenthesization; `parse_expression(print(ast))`
/// reproduces the tree.
pub fn print_expression(ast: &ExpressionAst) -> String {
    match ast {
        ExpressionAst::Constant(c) => {
            if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                format!("({c})")
            } else {
                format!("{c}")
            }
        }
        ExpressionAst::Var(0) => "x1".to_owned(),
        ExpressionAst::Var(_) => "x2".to_owned(),
        ExpressionAst::Neg(a) => format!("(-{})", print_expression(a)),
        ExpressionAst::Add(a, b) => format!("({} + {})", print_expression(a), print_expression(b)),
        ExpressionAst::Sub(a, b) => format!("({} - {})", print_expression(a), print_expression(b)),
        ExpressionAst::Mul(a, b) => format!("({} * {})", print_expression(a), print_expression(b)),
        ExpressionAst::Div(a, b) => format!("({} / {})", print_expression(a), print_expression(b)),
        ExpressionAst::Pow(a, b) => format!("({} ^ {})", print_expression(a), print_expression(b)),
        ExpressionAst::Unary(f, a) => format!("{}({})", f.name(), print_expression(a)),
        ExpressionAst::Min(a, b) => format!("min({}, {})", print_expression(a), print_expression(b)),
        ExpressionAst::Max(a, b) => format!("max({}, {})", print_expression(a), print_expression(b)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(text: &str, x: [f64; 2]) -> (f64, [f64; 2]) {
        eval_expression(&parse_expression(text).unwrap(), x).unwrap()
    }

    #[test]
    fn variable_identity() {
        let (v, g) = eval("x1", [0.3, 0.7]);
        assert_eq!(v, 0.3);
        assert_eq!(g, [1.0, 0.0]);
    }

    #[test]
    fn edge_constraint_factor() {
        let ast = parse_expression("(x2 + 1) / 2").unwrap();
        assert_eq!(eval_value(&ast, [0.0, -1.0]).unwrap(), 0.0);
        assert_eq!(eval_value(&ast, [0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn power_is_right_associative() {
        let (v, _) = eval("2^3^2", [0.0, 0.0]);
        assert_eq!(v, 512.0);
    }

    #[test]
    fn power_binds_tighter_than_unary_minus() {
        let (v, _) = eval("-2^2", [0.0, 0.0]);
        assert_eq!(v, -4.0);
    }

    #[test]
    fn product_rule() {
        let (v, g) = eval("x1*x2", [2.0, 3.0]);
        assert_eq!(v, 6.0);
        assert_eq!(g, [3.0, 2.0]);
    }

    #[test]
    fn quartic_constraint_factor() {
        let (v, g) = eval("(x1+1)*(x1-1)/4", [0.0, 0.0]);
        assert_eq!(v, -0.25);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn abs_gradient_uses_sign_convention_at_zero() {
        let (v, g) = eval("abs(x2)", [0.5, 0.0]);
        assert_eq!(v, 0.0);
        assert_eq!(g, [0.0, -1.0]);
    }

    #[test]
    fn division_by_zero_names_the_node() {
        let ast = parse_expression("x1 / x2").unwrap();
        let err = eval_expression(&ast, [1.0, 0.0]).unwrap_err();
        assert!(matches!(err, ExprError::Eval { ref node, .. } if node == "/"), "{err}");
    }

    #[test]
    fn sqrt_of_negative_is_an_error() {
        let ast = parse_expression("sqrt(x1)").unwrap();
        assert!(eval_expression(&ast, [-1.0, 0.0]).is_err());
    }

    #[test]
    fn parse_errors() {
        assert!(parse_expression("").is_err());
        assert!(parse_expression("(x1 + 2").is_err());
        assert!(parse_expression("foo(x1)").is_err());
        assert!(parse_expression("x3").is_err());
        assert!(parse_expression("1 + ").is_err());
        assert!(parse_expression("x1 x2").is_err());
    }

    #[test]
    fn min_max_parse_and_select_branch_gradients() {
        let (v, g) = eval("min(x1, x2)", [2.0, 3.0]);
        assert_eq!((v, g), (2.0, [1.0, 0.0]));
        let (v, g) = eval("max(x1, 2*x2)", [2.0, 3.0]);
        assert_eq!((v, g), (6.0, [0.0, 2.0]));
        // Tie goes to the first argument.
        let (_, g) = eval("min(x1, x2)", [1.0, 1.0]);
        assert_eq!(g, [1.0, 0.0]);
    }

    /// Central finite differences with h = 1e-6 (1 + |x|), away from kinks.
    fn fd_gradient(ast: &ExpressionAst, x: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for i in 0..2 {
            let h = 1e-6 * (1.0 + x[i].abs());
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            g[i] = (eval_value(ast, xp).unwrap() - eval_value(ast, xm).unwrap()) / (2.0 * h);
        }
        g
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cases = [
            "x1^2 + 3*x2",
            "sin(x1)*cos(x2)",
            "tanh(x1*x2)",
            "sqrt(x1 + 2)",
            "abs(x1 - 0.25)",
            "relu(x1 - 0.25)",
            "(x1+1)*(x1-1)/4",
            "x1 / (x2 + 2)",
            "2^x1",
            "min(x1^2, x2 + 0.5)",
        ];
        // Points at least 1e-3 from abs/relu/min kinks of the cases above.
        let points = [[0.4, 0.7], [0.9, -0.3], [1.3, 0.2]];
        for text in cases {
            let ast = parse_expression(text).unwrap();
            for x in points {
                let (_, g) = eval_expression(&ast, x).unwrap();
                let fd = fd_gradient(&ast, x);
                for i in 0..2 {
                    let scale = fd[i].abs().max(1.0);
                    assert!(
                        (g[i] - fd[i]).abs() / scale <= 1e-6,
                        "{text} at {x:?}: analytic {} vs fd {}",
                        g[i],
                        fd[i]
                    );
                }
            }
        }
    }

    fn arb_ast() -> impl Strategy<Value = ExpressionAst> {
        let leaf = prop_oneof![
            (0.0..10.0f64).prop_map(ExpressionAst::Constant),
            Just(ExpressionAst::Var(0)),
            Just(ExpressionAst::Var(1)),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ExpressionAst::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ExpressionAst::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ExpressionAst::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ExpressionAst::Div(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ExpressionAst::Min(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ExpressionAst::Max(Box::new(a), Box::new(b))),
                inner.clone().prop_map(|a| ExpressionAst::Neg(Box::new(a))),
                (any::<u8>(), inner).prop_map(|(f, a)| {
                    let f = match f % 7 {
                        0 => UnaryFn::Sin,
                        1 => UnaryFn::Cos,
                        2 => UnaryFn::Tanh,
                        3 => UnaryFn::Abs,
                        4 => UnaryFn::Sqrt,
                        5 => UnaryFn::Relu,
                        _ => UnaryFn::Sgn,
                    };
                    ExpressionAst::Unary(f, Box::new(a))
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(ast in arb_ast()) {
            let printed = print_expression(&ast);
            let reparsed = parse_expression(&printed).unwrap();
            prop_assert_eq!(reparsed, ast);
        }
    }
}
