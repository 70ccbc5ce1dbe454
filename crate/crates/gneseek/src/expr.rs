//! Expression language for scenario-defined costs and constraints.
//!
//! The grammar covers exactly what time-varying polynomial/trigonometric
//! game data needs: +, -, *, integer ^, sin, cos, numeric constants, the
//! time symbol `t`, and action components written as `x<player>_<letter>`
//! with 1-based players (`x2_a` is player 2's first component). There is no
//! division and no implicit multiplication. Partial derivatives are taken
//! symbolically so scenario games get exact gradients, not finite
//! differences.

use crate::error::{Error, Result};

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    /// Action component, both indices 0-based.
    Var {
        player: usize,
        component: usize,
    },
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

// smart constructors folding constants so differentiation output stays small

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(0.0), b) => b,
        (a, Expr::Const(0.0)) => a,
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (a, Expr::Const(0.0)) => a,
        (Expr::Const(0.0), b) => neg(b),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(0.0), _) | (_, Expr::Const(0.0)) => Expr::Const(0.0),
        (Expr::Const(1.0), b) => b,
        (a, Expr::Const(1.0)) => a,
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(x) => Expr::Const(-x),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn pow(base: Expr, exponent: u32) -> Expr {
    match exponent {
        0 => Expr::Const(1.0),
        1 => base,
        _ => match base {
            Expr::Const(x) => Expr::Const(x.powi(exponent as i32)),
            b => Expr::Pow(Box::new(b), exponent),
        },
    }
}

impl Expr {
    /// Evaluates with action components resolved through `lookup(player,
    /// component)`, both 0-based.
    pub fn eval_with(&self, t: f64, lookup: &dyn Fn(usize, usize) -> f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Time => t,
            Expr::Var { player, component } => lookup(*player, *component),
            Expr::Add(a, b) => a.eval_with(t, lookup) + b.eval_with(t, lookup),
            Expr::Sub(a, b) => a.eval_with(t, lookup) - b.eval_with(t, lookup),
            Expr::Mul(a, b) => a.eval_with(t, lookup) * b.eval_with(t, lookup),
            Expr::Neg(a) => -a.eval_with(t, lookup),
            Expr::Pow(a, k) => a.eval_with(t, lookup).powi(*k as i32),
            Expr::Sin(a) => a.eval_with(t, lookup).sin(),
            Expr::Cos(a) => a.eval_with(t, lookup).cos(),
        }
    }

    /// Evaluates over a stacked profile with per-player dimension `d`.
    pub fn eval_profile(&self, t: f64, profile: &nalgebra::DVector<f64>, d: usize) -> f64 {
        self.eval_with(t, &|p, c| profile[p * d + c])
    }

    /// Symbolic partial derivative with respect to one action component.
    pub fn diff(&self, player: usize, component: usize) -> Expr {
        match self {
            Expr::Const(_) | Expr::Time => Expr::Const(0.0),
            Expr::Var {
                player: p,
                component: c,
            } => Expr::Const(if *p == player && *c == component {
                1.0
            } else {
                0.0
            }),
            Expr::Add(a, b) => add(a.diff(player, component), b.diff(player, component)),
            Expr::Sub(a, b) => sub(a.diff(player, component), b.diff(player, component)),
            Expr::Mul(a, b) => add(
                mul(a.diff(player, component), (**b).clone()),
                mul((**a).clone(), b.diff(player, component)),
            ),
            Expr::Neg(a) => neg(a.diff(player, component)),
            Expr::Pow(a, k) => mul(
                mul(Expr::Const(*k as f64), pow((**a).clone(), *k - 1)),
                a.diff(player, component),
            ),
            Expr::Sin(a) => mul(Expr::Cos(a.clone()), a.diff(player, component)),
            Expr::Cos(a) => neg(mul(Expr::Sin(a.clone()), a.diff(player, component))),
        }
    }

    /// Collects every referenced action component as (player, component),
    /// 0-based, deduplicated and sorted.
    pub fn variables(&self) -> Vec<(usize, usize)> {
        fn walk(e: &Expr, out: &mut Vec<(usize, usize)>) {
            match e {
                Expr::Const(_) | Expr::Time => {}
                Expr::Var { player, component } => out.push((*player, *component)),
                Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) => walk(a, out),
            }
        }
        let mut vars = Vec::new();
        walk(self, &mut vars);
        vars.sort_unstable();
        vars.dedup();
        vars
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Time,
    Var { player: usize, component: usize },
    Sin,
    Cos,
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn parse_error(position: usize, message: impl Into<String>) -> Error {
    Error::ExprParse {
        position,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Token)>> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let c = bytes[pos] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => pos += 1,
            '+' => {
                tokens.push((pos, Token::Plus));
                pos += 1;
            }
            '-' => {
                tokens.push((pos, Token::Minus));
                pos += 1;
            }
            '*' => {
                tokens.push((pos, Token::Star));
                pos += 1;
            }
            '^' => {
                tokens.push((pos, Token::Caret));
                pos += 1;
            }
            '(' => {
                tokens.push((pos, Token::LParen));
                pos += 1;
            }
            ')' => {
                tokens.push((pos, Token::RParen));
                pos += 1;
            }
            '0'..='9' | '.' => {
                let start = pos;
                while pos < bytes.len() && matches!(bytes[pos] as char, '0'..='9' | '.') {
                    pos += 1;
                }
                // exponent suffix like 1.5e-2
                if pos < bytes.len() && matches!(bytes[pos] as char, 'e' | 'E') {
                    let mut probe = pos + 1;
                    if probe < bytes.len() && matches!(bytes[probe] as char, '+' | '-') {
                        probe += 1;
                    }
                    if probe < bytes.len() && (bytes[probe] as char).is_ascii_digit() {
                        pos = probe;
                        while pos < bytes.len() && (bytes[pos] as char).is_ascii_digit() {
                            pos += 1;
                        }
                    }
                }
                let text = &src[start..pos];
                let value: f64 = text
                    .parse()
                    .map_err(|_| parse_error(start, format!("invalid number '{text}'")))?;
                tokens.push((start, Token::Num(value)));
            }
            'a'..='z' | 'A'..='Z' => {
                let start = pos;
                while pos < bytes.len()
                    && matches!(bytes[pos] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    pos += 1;
                }
                let word = &src[start..pos];
                let token = match word {
                    "t" => Token::Time,
                    "sin" => Token::Sin,
                    "cos" => Token::Cos,
                    _ => lex_var(word, start)?,
                };
                tokens.push((start, token));
            }
            other => {
                return Err(parse_error(pos, format!("unexpected character '{other}'")));
            }
        }
    }
    Ok(tokens)
}

/// Action variables look like x3_b: 1-based player index, then a letter
/// counted from 'a' for the component.
fn lex_var(word: &str, position: usize) -> Result<Token> {
    let hint = "variables look like x1_a";
    let rest = word
        .strip_prefix('x')
        .ok_or_else(|| parse_error(position, format!("unknown symbol '{word}' ({hint})")))?;
    let (digits, component_part) = rest
        .split_once('_')
        .ok_or_else(|| parse_error(position, format!("unknown symbol '{word}' ({hint})")))?;
    let player: usize = digits
        .parse()
        .map_err(|_| parse_error(position, format!("bad player index in '{word}' ({hint})")))?;
    if player == 0 {
        return Err(parse_error(
            position,
            format!("player indices are 1-based in '{word}'"),
        ));
    }
    let mut chars = component_part.chars();
    let letter = chars.next();
    match (letter, chars.next()) {
        (Some(l), None) if l.is_ascii_lowercase() => Ok(Token::Var {
            player: player - 1,
            component: (l as u8 - b'a') as usize,
        }),
        _ => Err(parse_error(
            position,
            format!("bad component in '{word}' ({hint})"),
        )),
    }
}

struct Parser<'a> {
    tokens: &'a [(usize, Token)],
    cursor: usize,
    src_len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.cursor).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens
            .get(self.cursor)
            .map_or(self.src_len, |(p, _)| *p)
    }

    fn advance(&mut self) -> Option<&Token> {
        let token = self.tokens.get(self.cursor).map(|(_, t)| t);
        self.cursor += 1;
        token
    }

    fn expect(&mut self, wanted: Token, what: &str) -> Result<()> {
        let pos = self.position();
        match self.advance() {
            Some(t) if *t == wanted => Ok(()),
            _ => Err(parse_error(pos, format!("expected {what}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.advance();
                    acc = add(acc, self.term()?);
                }
                Some(Token::Minus) => {
                    self.advance();
                    acc = sub(acc, self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.factor()?;
        while matches!(self.peek(), Some(Token::Star)) {
            self.advance();
            acc = mul(acc, self.factor()?);
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.advance();
            let pos = self.position();
            match self.advance() {
                Some(Token::Num(v)) if v.fract() == 0.0 && *v >= 0.0 && *v <= u32::MAX as f64 => {
                    Ok(pow(base, *v as u32))
                }
                _ => Err(parse_error(pos, "exponent must be a nonnegative integer")),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let pos = self.position();
        match self.advance().cloned() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::Time) => Ok(Expr::Time),
            Some(Token::Var { player, component }) => Ok(Expr::Var { player, component }),
            Some(Token::Minus) => Ok(neg(self.factor()?)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "closing parenthesis")?;
                Ok(inner)
            }
            Some(Token::Sin) => {
                self.expect(Token::LParen, "'(' after sin")?;
                let inner = self.expr()?;
                self.expect(Token::RParen, "closing parenthesis")?;
                Ok(Expr::Sin(Box::new(inner)))
            }
            Some(Token::Cos) => {
                self.expect(Token::LParen, "'(' after cos")?;
                let inner = self.expr()?;
                self.expect(Token::RParen, "closing parenthesis")?;
                Ok(Expr::Cos(Box::new(inner)))
            }
            _ => Err(parse_error(pos, "expected a number, variable, t, sin, cos, or '('")),
        }
    }
}

/// Parses one expression; errors carry the byte offset of the problem.
pub fn parse(src: &str) -> Result<Expr> {
    let tokens = lex(src)?;
    let mut parser = Parser {
        tokens: &tokens,
        cursor: 0,
        src_len: src.len(),
    };
    let expr = parser.expr()?;
    if parser.cursor != tokens.len() {
        return Err(parse_error(
            parser.position(),
            "unexpected trailing input (note: multiplication must be written with '*')",
        ));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn eval(src: &str, t: f64, profile: &[f64], d: usize) -> f64 {
        parse(src)
            .unwrap()
            .eval_profile(t, &DVector::from_row_slice(profile), d)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_abs_diff_eq!(eval("1 + 2 * 3", 0.0, &[], 1), 7.0, epsilon = 0.0);
        assert_abs_diff_eq!(eval("(1 + 2) * 3", 0.0, &[], 1), 9.0, epsilon = 0.0);
        assert_abs_diff_eq!(eval("2 * 3 ^ 2", 0.0, &[], 1), 18.0, epsilon = 0.0);
        assert_abs_diff_eq!(eval("-2 ^ 2", 0.0, &[], 1), -4.0, epsilon = 0.0);
        assert_abs_diff_eq!(eval("1 - -2", 0.0, &[], 1), 3.0, epsilon = 0.0);
    }

    #[test]
    fn variables_and_time() {
        // x2_b is player 2 (0-based 1), component b (1): index 1*2+1 = 3
        let profile = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(eval("x2_b", 0.0, &profile, 2), 4.0, epsilon = 0.0);
        assert_abs_diff_eq!(eval("x1_a + t", 0.5, &profile, 2), 1.5, epsilon = 0.0);
        assert_abs_diff_eq!(
            eval("sin(1.5 * t) + cos(t)", 2.0, &profile, 2),
            (3.0_f64).sin() + (2.0_f64).cos(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn paper_style_cost_evaluates() {
        let src = "2 * (x1_a - 2 * cos(10 * t) - 1)^2 + 2 * (x1_b - cos(15 * t) - 1.5)^2";
        let profile = [0.5, -0.5];
        let t = 0.3;
        let expected = 2.0 * (0.5 - 2.0 * (3.0_f64).cos() - 1.0).powi(2)
            + 2.0 * (-0.5 - (4.5_f64).cos() - 1.5).powi(2);
        assert_abs_diff_eq!(eval(src, t, &profile, 2), expected, epsilon = 1e-12);
    }

    #[test]
    fn parse_errors_carry_positions() {
        match parse("2 t") {
            Err(Error::ExprParse { position, .. }) => assert_eq!(position, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse("1 / 2") {
            Err(Error::ExprParse { position, .. }) => assert_eq!(position, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse("x0_a").is_err());
        assert!(parse("x1_ab").is_err());
        assert!(parse("y1_a").is_err());
        assert!(parse("sin 3").is_err());
        assert!(parse("2 ^ 1.5").is_err());
        assert!(parse("(1 + 2").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn derivative_of_squared_deviation() {
        // d/dx1_a of (x1_a - 2cos(10t) - 1)^2 = 2 (x1_a - 2cos(10t) - 1)
        let e = parse("(x1_a - 2 * cos(10 * t) - 1)^2").unwrap();
        let g = e.diff(0, 0);
        let profile = DVector::from_row_slice(&[0.7]);
        for &t in &[0.0f64, 0.4, 1.3] {
            let expected = 2.0 * (0.7 - 2.0 * (10.0 * t).cos() - 1.0);
            assert_abs_diff_eq!(g.eval_profile(t, &profile, 1), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let e = parse("x1_a * x2_a + 3 * sin(x1_b) * x1_a^3 - cos(2 * x2_b)").unwrap();
        let d = 2;
        let base = DVector::from_row_slice(&[0.4, -1.2, 2.0, 0.3]);
        let h = 1e-6;
        for player in 0..2 {
            for comp in 0..2 {
                let g = e.diff(player, comp);
                let mut up = base.clone();
                let mut down = base.clone();
                up[player * d + comp] += h;
                down[player * d + comp] -= h;
                let fd = (e.eval_profile(0.0, &up, d) - e.eval_profile(0.0, &down, d)) / (2.0 * h);
                assert_abs_diff_eq!(g.eval_profile(0.0, &base, d), fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn derivative_wrt_absent_variable_folds_to_zero() {
        let e = parse("2 * (x1_a - 1)^2 + sin(t)").unwrap();
        assert_eq!(e.diff(3, 1), Expr::Const(0.0));
    }

    #[test]
    fn variables_are_collected_sorted() {
        let e = parse("x2_b * x1_a + x2_b - t").unwrap();
        assert_eq!(e.variables(), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn lone_time_has_no_variables() {
        assert_eq!(parse("sin(t) + 1").unwrap().variables(), vec![]);
    }
}
