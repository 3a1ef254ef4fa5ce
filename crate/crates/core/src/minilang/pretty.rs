use super::ast::{Expr, Program, Stmt, UnOp};

/// Renders a program in the canonical single-line layout, e.g.
/// `s = 0; while (i <= in0) { s = s + i; i = i + 1; } print(s);`.
pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    write_stmts(&program.statements, &mut out);
    out
}

fn write_stmts(stmts: &[Stmt], out: &mut String) {
    for (i, stmt) in stmts.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write_stmt(stmt, out);
    }
}

fn write_block(stmts: &[Stmt], out: &mut String) {
    if stmts.is_empty() {
        out.push_str("{ }");
        return;
    }
    out.push_str("{ ");
    write_stmts(stmts, out);
    out.push_str(" }");
}

fn write_stmt(stmt: &Stmt, out: &mut String) {
    match stmt {
        Stmt::Assign(name, value) => {
            out.push_str(name);
            out.push_str(" = ");
            out.push_str(&print_expr(value));
            out.push(';');
        }
        Stmt::Print(value) => {
            out.push_str("print(");
            out.push_str(&print_expr(value));
            out.push_str(");");
        }
        Stmt::While(cond, body) => {
            out.push_str("while (");
            out.push_str(&print_expr(cond));
            out.push_str(") ");
            write_block(body, out);
        }
        Stmt::If(cond, then, otherwise) => {
            out.push_str("if (");
            out.push_str(&print_expr(cond));
            out.push_str(") ");
            write_block(then, out);
            if let Some(els) = otherwise {
                out.push_str(" else ");
                write_block(els, out);
            }
        }
    }
}

/// Prints an expression with the minimum parentheses needed to reparse to
/// the same tree.
pub fn print_expr(expr: &Expr) -> String {
    match expr {
        Expr::Lit(v) if *v < 0 => format!("({v})"),
        Expr::Lit(v) => v.to_string(),
        Expr::Var(name) => name.clone(),
        Expr::Input(slot) => format!("in{slot}"),
        Expr::Unary(op, inner) => {
            let sym = match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
            };
            match **inner {
                Expr::Binary(..) => format!("{sym}({})", print_expr(inner)),
                _ => format!("{sym}{}", print_expr(inner)),
            }
        }
        Expr::Binary(op, lhs, rhs) => {
            let prec = op.precedence();
            let left = match &**lhs {
                Expr::Binary(l, ..) if l.precedence() < prec => format!("({})", print_expr(lhs)),
                _ => print_expr(lhs),
            };
            let right = match &**rhs {
                Expr::Binary(r, ..) if r.precedence() <= prec => format!("({})", print_expr(rhs)),
                _ => print_expr(rhs),
            };
            format!("{left} {} {right}", op.symbol())
        }
    }
}
