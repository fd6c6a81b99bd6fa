//! Recursive-descent parser.

use super::ast::{BinOp, Decl, DistinctObj, Expr, ExprKind, Param, Program, UnOp};
use super::lexer::{Tok, Token};
use super::{FrontError, Pos};

pub fn parse(tokens: &[Token]) -> Result<Program, FrontError> {
    let mut p = Parser { toks: tokens, i: 0 };
    let mut decls = Vec::new();
    while !p.at_end() {
        decls.push(p.decl()?);
    }
    Ok(Program { decls })
}

/// Parse a single expression (used by tests and the query tool).
pub fn parse_expr(tokens: &[Token]) -> Result<Expr, FrontError> {
    let mut p = Parser { toks: tokens, i: 0 };
    let e = p.expr()?;
    if !p.at_end() {
        return Err(p.unexpected(&["end of input"]));
    }
    Ok(e)
}

struct Parser<'a> {
    toks: &'a [Token],
    i: usize,
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.i >= self.toks.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.i + k).map(|t| &t.tok)
    }

    fn pos(&self) -> Pos {
        match self.toks.get(self.i) {
            Some(t) => t.pos,
            None => self.toks.last().map_or(Pos { line: 1, col: 1 }, |t| Pos { line: t.pos.line, col: t.pos.col + 1 }),
        }
    }

    fn unexpected(&self, expected: &[&str]) -> FrontError {
        FrontError::Syntax {
            pos: self.pos(),
            found: self.peek().map_or("end of input".to_string(), |t| t.to_string()),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> Result<(), FrontError> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(self.unexpected(&[&t.to_string()]))
        }
    }

    fn ident(&mut self) -> Result<String, FrontError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.i += 1;
                Ok(s)
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    fn int(&mut self) -> Result<i64, FrontError> {
        match self.peek() {
            Some(Tok::Int(k)) => {
                let k = *k;
                self.i += 1;
                Ok(k)
            }
            _ => Err(self.unexpected(&["integer"])),
        }
    }

    fn decl(&mut self) -> Result<Decl, FrontError> {
        let pos = self.pos();
        let d = match self.peek() {
            Some(Tok::Type) => {
                self.i += 1;
                Decl::Type { name: self.ident()?, pos }
            }
            Some(Tok::Distinct) => {
                self.i += 1;
                let ty = self.ident()?;
                let mut objs = vec![self.distinct_obj()?];
                while self.eat(&Tok::Comma) {
                    objs.push(self.distinct_obj()?);
                }
                Decl::Distinct { ty, objs, pos }
            }
            Some(Tok::Hash) => {
                self.i += 1;
                let ty = self.ident()?;
                self.expect(Tok::Tilde)?;
                Decl::Number { ty, body: self.expr()?, pos }
            }
            Some(Tok::Random) => {
                self.i += 1;
                let ret = self.ident()?;
                let name = self.ident()?;
                let params = self.params()?;
                self.expect(Tok::Tilde)?;
                Decl::Random { ret, name, params, body: self.expr()?, pos }
            }
            Some(Tok::Fixed) => {
                self.i += 1;
                let ret = self.ident()?;
                let name = self.ident()?;
                let params = self.params()?;
                self.expect(Tok::Assign)?;
                Decl::Fixed { ret, name, params, body: self.expr()?, pos }
            }
            Some(Tok::Obs) => {
                self.i += 1;
                let lhs = self.expr()?;
                self.expect(Tok::Assign)?;
                Decl::Obs { lhs, rhs: self.expr()?, pos }
            }
            Some(Tok::Query) => {
                self.i += 1;
                Decl::Query { expr: self.expr()?, pos }
            }
            _ => return Err(self.unexpected(&["type", "distinct", "#", "random", "fixed", "obs", "query"])),
        };
        self.expect(Tok::Semi)?;
        Ok(d)
    }

    fn distinct_obj(&mut self) -> Result<DistinctObj, FrontError> {
        let name = self.ident()?;
        if self.eat(&Tok::LBracket) {
            let pos = self.pos();
            let k = self.int()?;
            if !(1..=1 << 20).contains(&k) {
                return Err(FrontError::sem(super::SemanticKind::Unsupported, pos, "array size must be in 1..2^20"));
            }
            self.expect(Tok::RBracket)?;
            Ok(DistinctObj::Array(name, k as u32))
        } else {
            Ok(DistinctObj::Name(name))
        }
    }

    fn params(&mut self) -> Result<Vec<Param>, FrontError> {
        let mut ps = Vec::new();
        if !self.eat(&Tok::LParen) {
            return Ok(ps);
        }
        if self.eat(&Tok::RParen) {
            return Ok(ps);
        }
        loop {
            let ty = self.ident()?;
            let name = self.ident()?;
            ps.push(Param { ty, name });
            if self.eat(&Tok::RParen) {
                return Ok(ps);
            }
            if !self.eat(&Tok::Comma) {
                return Err(self.unexpected(&[",", ")"]));
            }
        }
    }

    pub fn expr(&mut self) -> Result<Expr, FrontError> {
        let pos = self.pos();
        match self.peek() {
            Some(Tok::If) => {
                self.i += 1;
                let c = self.expr()?;
                self.expect(Tok::Then)?;
                let t = self.expr()?;
                self.expect(Tok::Else)?;
                let e = self.expr()?;
                Ok(Expr::new(ExprKind::If(Box::new(c), Box::new(t), Box::new(e)), pos))
            }
            Some(Tok::Case) => {
                self.i += 1;
                let scrut = self.expr()?;
                self.expect(Tok::In)?;
                self.expect(Tok::LBrace)?;
                let mut arms = Vec::new();
                loop {
                    let k = self.expr()?;
                    self.expect(Tok::Arrow)?;
                    let v = self.expr()?;
                    arms.push((k, v));
                    if self.eat(&Tok::RBrace) {
                        break;
                    }
                    if !self.eat(&Tok::Comma) {
                        return Err(self.unexpected(&[",", "}"]));
                    }
                }
                Ok(desugar_case(scrut, arms, pos))
            }
            _ => self.binary(1),
        }
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek()? {
            Tok::Or => BinOp::Or,
            Tok::And => BinOp::And,
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            _ => return None,
        })
    }

    fn binary(&mut self, min: u8) -> Result<Expr, FrontError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            if op.prec() < min {
                break;
            }
            let pos = self.pos();
            self.i += 1;
            let rhs = self.binary(op.prec() + 1)?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FrontError> {
        let pos = self.pos();
        match self.peek() {
            Some(Tok::Bang) => {
                self.i += 1;
                Ok(Expr::new(ExprKind::Unary(UnOp::Not, Box::new(self.unary()?)), pos))
            }
            Some(Tok::Minus) => {
                self.i += 1;
                match self.peek() {
                    Some(Tok::Int(k)) => {
                        let k = *k;
                        self.i += 1;
                        Ok(Expr::new(ExprKind::Int(-k), pos))
                    }
                    Some(Tok::Real(x)) => {
                        let x = *x;
                        self.i += 1;
                        Ok(Expr::new(ExprKind::Real(-x), pos))
                    }
                    _ => Ok(Expr::new(ExprKind::Unary(UnOp::Neg, Box::new(self.unary()?)), pos)),
                }
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, FrontError> {
        let pos = self.pos();
        let kind = match self.peek().cloned() {
            Some(Tok::Int(k)) => {
                self.i += 1;
                ExprKind::Int(k)
            }
            Some(Tok::Real(x)) => {
                self.i += 1;
                ExprKind::Real(x)
            }
            Some(Tok::True) => {
                self.i += 1;
                ExprKind::Bool(true)
            }
            Some(Tok::False) => {
                self.i += 1;
                ExprKind::Bool(false)
            }
            Some(Tok::LParen) => {
                self.i += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                return Ok(e);
            }
            Some(Tok::If) | Some(Tok::Case) => return self.expr(),
            Some(Tok::Hash) => {
                self.i += 1;
                ExprKind::Count(self.ident()?)
            }
            Some(Tok::Ident(name)) => {
                self.i += 1;
                if name == "UniformChoice" && self.peek() == Some(&Tok::LParen) && self.peek_at(1) == Some(&Tok::LBrace) {
                    self.i += 2;
                    let ty = self.ident()?;
                    let var = self.ident()?;
                    self.expect(Tok::RBrace)?;
                    self.expect(Tok::RParen)?;
                    ExprKind::Choice { ty, var }
                } else if name == "Categorical" && self.peek() == Some(&Tok::LParen) && self.peek_at(1) == Some(&Tok::LBrace) {
                    self.i += 2;
                    let mut arms = Vec::new();
                    loop {
                        let k = self.expr()?;
                        self.expect(Tok::Arrow)?;
                        let p = self.expr()?;
                        arms.push((k, p));
                        if self.eat(&Tok::RBrace) {
                            break;
                        }
                        if !self.eat(&Tok::Comma) {
                            return Err(self.unexpected(&[",", "}"]));
                        }
                    }
                    self.expect(Tok::RParen)?;
                    ExprKind::Categorical(arms)
                } else if self.eat(&Tok::LParen) {
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&Tok::RParen) {
                                break;
                            }
                            if !self.eat(&Tok::Comma) {
                                return Err(self.unexpected(&[",", ")"]));
                            }
                        }
                    }
                    ExprKind::Call(name, args)
                } else if self.eat(&Tok::LBracket) {
                    let k = self.int()?;
                    if k < 0 || k > u32::MAX as i64 {
                        return Err(FrontError::sem(super::SemanticKind::Unsupported, pos, "negative index"));
                    }
                    self.expect(Tok::RBracket)?;
                    ExprKind::Indexed(name, k as u32)
                } else {
                    ExprKind::Name(name)
                }
            }
            _ => return Err(self.unexpected(&["expression"])),
        };
        Ok(Expr::new(kind, pos))
    }
}

/// `case s in {k1 -> c1, ..., kn -> cn}` becomes
/// `if s == k1 then c1 else if ... else cn`.
fn desugar_case(scrut: Expr, mut arms: Vec<(Expr, Expr)>, pos: Pos) -> Expr {
    let (_, mut acc) = arms.pop().expect("case has at least one arm");
    while let Some((k, c)) = arms.pop() {
        let cond = Expr::new(ExprKind::Binary(BinOp::Eq, Box::new(scrut.clone()), Box::new(k)), pos);
        acc = Expr::new(ExprKind::If(Box::new(cond), Box::new(c), Box::new(acc)), pos);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::super::lexer::tokenize;
    use super::*;

    fn p(src: &str) -> Result<Program, FrontError> {
        parse(&tokenize(src)?)
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr(&tokenize("1 + 2 * 3 - 4").unwrap()).unwrap();
        let ExprKind::Binary(BinOp::Sub, l, _) = e.kind else { panic!("{e:?}") };
        assert!(matches!(l.kind, ExprKind::Binary(BinOp::Add, _, _)));
    }

    #[test]
    fn case_becomes_nested_if() {
        let e = parse_expr(&tokenize("case x in {A -> 1, B -> 2, C -> 3}").unwrap()).unwrap();
        let ExprKind::If(c, t, e2) = e.kind else { panic!() };
        assert!(matches!(c.kind, ExprKind::Binary(BinOp::Eq, _, _)));
        assert_eq!(t.kind, ExprKind::Int(1));
        let ExprKind::If(_, t2, e3) = e2.kind else { panic!() };
        assert_eq!(t2.kind, ExprKind::Int(2));
        assert_eq!(e3.kind, ExprKind::Int(3));
    }

    #[test]
    fn missing_semicolon_points_at_next_token() {
        let err = p("type Ball\ntype Draw;").unwrap_err();
        match err {
            FrontError::Syntax { pos, expected, .. } => {
                assert_eq!(pos, Pos { line: 2, col: 1 });
                assert_eq!(expected, vec!["`;`".to_string()]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn set_expressions() {
        let prog = p("random Ball drawn(Draw d) ~ UniformChoice({Ball b});").unwrap();
        let Decl::Random { body, params, .. } = &prog.decls[0] else { panic!() };
        assert_eq!(params.len(), 1);
        assert_eq!(body.kind, ExprKind::Choice { ty: "Ball".into(), var: "b".into() });
    }
}
