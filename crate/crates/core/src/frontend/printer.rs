//! Pretty printer. `parse(print(p))` reproduces `p` up to positions.

use std::fmt::Write;

use super::ast::{Decl, DistinctObj, Expr, ExprKind, Param, Program, UnOp};

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.decls {
        out.push_str(&print_decl(d));
        out.push('\n');
    }
    out
}

fn params(ps: &[Param]) -> String {
    if ps.is_empty() {
        return String::new();
    }
    let inner: Vec<String> = ps.iter().map(|p| format!("{} {}", p.ty, p.name)).collect();
    format!("({})", inner.join(", "))
}

pub fn print_decl(d: &Decl) -> String {
    match d {
        Decl::Type { name, .. } => format!("type {name};"),
        Decl::Distinct { ty, objs, .. } => {
            let names: Vec<String> = objs
                .iter()
                .map(|o| match o {
                    DistinctObj::Name(n) => n.clone(),
                    DistinctObj::Array(n, k) => format!("{n}[{k}]"),
                })
                .collect();
            format!("distinct {ty} {};", names.join(", "))
        }
        Decl::Number { ty, body, .. } => format!("#{ty} ~ {};", print_expr(body)),
        Decl::Random { ret, name, params: ps, body, .. } => {
            format!("random {ret} {name}{} ~ {};", params(ps), print_expr(body))
        }
        Decl::Fixed { ret, name, params: ps, body, .. } => {
            format!("fixed {ret} {name}{} = {};", params(ps), print_expr(body))
        }
        Decl::Obs { lhs, rhs, .. } => format!("obs {} = {};", print_expr(lhs), print_expr(rhs)),
        Decl::Query { expr, .. } => format!("query {};", print_expr(expr)),
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn real(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'i', 'N']) {
        s
    } else {
        format!("{s}.0")
    }
}

/// `ctx` is the precedence of the surrounding operator (0 at top level).
fn write_expr(s: &mut String, e: &Expr, ctx: u8) {
    match &e.kind {
        ExprKind::Bool(b) => write!(s, "{b}").unwrap(),
        ExprKind::Int(k) => write!(s, "{k}").unwrap(),
        ExprKind::Real(x) => s.push_str(&real(*x)),
        ExprKind::Name(n) => s.push_str(n),
        ExprKind::Indexed(n, k) => write!(s, "{n}[{k}]").unwrap(),
        ExprKind::Count(t) => write!(s, "#{t}").unwrap(),
        ExprKind::Choice { ty, var } => write!(s, "UniformChoice({{{ty} {var}}})").unwrap(),
        ExprKind::Categorical(arms) => {
            s.push_str("Categorical({");
            for (i, (k, p)) in arms.iter().enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                write_expr(s, k, 0);
                s.push_str(" -> ");
                write_expr(s, p, 0);
            }
            s.push_str("})");
        }
        ExprKind::Call(f, args) => {
            s.push_str(f);
            s.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                write_expr(s, a, 0);
            }
            s.push(')');
        }
        ExprKind::If(c, t, f) => {
            if ctx > 0 {
                s.push('(');
            }
            s.push_str("if ");
            write_expr(s, c, 0);
            s.push_str(" then ");
            write_expr(s, t, 0);
            s.push_str(" else ");
            write_expr(s, f, 0);
            if ctx > 0 {
                s.push(')');
            }
        }
        ExprKind::Binary(op, l, r) => {
            let p = op.prec();
            let paren = ctx > p;
            if paren {
                s.push('(');
            }
            write_expr(s, l, p);
            write!(s, " {} ", op.symbol()).unwrap();
            // right operand binds one tighter: operators are left associative
            write_expr(s, r, p + 1);
            if paren {
                s.push(')');
            }
        }
        ExprKind::Unary(op, a) => {
            s.push(match op {
                UnOp::Not => '!',
                UnOp::Neg => '-',
            });
            let literal = matches!(a.kind, ExprKind::Int(_) | ExprKind::Real(_));
            if literal || matches!(a.kind, ExprKind::Binary(..)) {
                s.push('(');
                write_expr(s, a, 0);
                s.push(')');
            } else {
                write_expr(s, a, 7);
            }
        }
    }
}
