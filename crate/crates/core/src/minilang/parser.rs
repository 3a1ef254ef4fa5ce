use super::ast::{BinOp, Expr, Program, Stmt, UnOp, MAX_DEPTH};
use super::lexer::{tokenize, Spanned, Tok};
use super::MinilangError;

/// Parses minilang source into a [`Program`].
pub fn parse(source: &str) -> Result<Program, MinilangError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser { tokens, pos: 0, nesting: 0 };
    let mut statements = Vec::new();
    while parser.peek() != &Tok::Eof {
        let (stmt, depth) = parser.statement()?;
        parser.check_depth(depth)?;
        statements.push(stmt);
    }
    Ok(Program { statements })
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    nesting: usize,
}

type Parsed<T> = Result<(T, usize), MinilangError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn advance(&mut self) -> Tok {
        let tok = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn error(&self, message: impl Into<String>) -> MinilangError {
        let at = &self.tokens[self.pos];
        MinilangError::Syntax { line: at.line, col: at.col, message: message.into() }
    }

    fn check_depth(&self, depth: usize) -> Result<(), MinilangError> {
        if depth > MAX_DEPTH {
            let at = &self.tokens[self.pos];
            return Err(MinilangError::DepthOverflow { line: at.line, col: at.col });
        }
        Ok(())
    }

    fn enter(&mut self) -> Result<(), MinilangError> {
        self.nesting += 1;
        if self.nesting > MAX_DEPTH {
            let at = &self.tokens[self.pos];
            return Err(MinilangError::DepthOverflow { line: at.line, col: at.col });
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.nesting -= 1;
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), MinilangError> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            Err(self.error(format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    fn statement(&mut self) -> Parsed<Stmt> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                self.expect(Tok::Assign, "`=`")?;
                let (value, depth) = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                Ok((Stmt::Assign(name, value), depth + 1))
            }
            Tok::Print => {
                self.advance();
                self.expect(Tok::LParen, "`(`")?;
                let (value, depth) = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                self.expect(Tok::Semi, "`;`")?;
                Ok((Stmt::Print(value), depth + 1))
            }
            Tok::While => {
                self.advance();
                let (cond, cond_depth) = self.condition()?;
                let (body, body_depth) = self.block()?;
                Ok((Stmt::While(cond, body), cond_depth.max(body_depth) + 1))
            }
            Tok::If => {
                self.advance();
                let (cond, cond_depth) = self.condition()?;
                let (then, then_depth) = self.block()?;
                let mut depth = cond_depth.max(then_depth);
                let otherwise = if *self.peek() == Tok::Else {
                    self.advance();
                    let (els, els_depth) = self.block()?;
                    depth = depth.max(els_depth);
                    Some(els)
                } else {
                    None
                };
                Ok((Stmt::If(cond, then, otherwise), depth + 1))
            }
            other => Err(self.error(format!("expected a statement, found {}", describe(&other)))),
        }
    }

    fn condition(&mut self) -> Parsed<Expr> {
        self.expect(Tok::LParen, "`(`")?;
        let parsed = self.expr()?;
        self.expect(Tok::RParen, "`)`")?;
        Ok(parsed)
    }

    fn block(&mut self) -> Parsed<Vec<Stmt>> {
        self.expect(Tok::LBrace, "`{`")?;
        self.enter()?;
        let mut body = Vec::new();
        let mut depth = 0;
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return Err(self.error("unterminated block, expected `}`"));
            }
            let (stmt, d) = self.statement()?;
            self.check_depth(d)?;
            depth = depth.max(d);
            body.push(stmt);
        }
        self.advance();
        self.leave();
        Ok((body, depth))
    }

    fn expr(&mut self) -> Parsed<Expr> {
        self.enter()?;
        let parsed = self.binary(1);
        self.leave();
        parsed
    }

    fn binary(&mut self, min_prec: u8) -> Parsed<Expr> {
        let (mut lhs, mut depth) = self.unary()?;
        while let Some(op) = binop(self.peek()) {
            if op.precedence() < min_prec {
                break;
            }
            self.advance();
            let (rhs, rhs_depth) = self.binary(op.precedence() + 1)?;
            depth = depth.max(rhs_depth) + 1;
            self.check_depth(depth)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok((lhs, depth))
    }

    fn unary(&mut self) -> Parsed<Expr> {
        let op = match self.peek() {
            Tok::Minus => Some(UnOp::Neg),
            Tok::Bang => Some(UnOp::Not),
            _ => None,
        };
        match op {
            Some(op) => {
                self.advance();
                self.enter()?;
                let (inner, depth) = self.unary()?;
                self.leave();
                self.check_depth(depth + 1)?;
                Ok((Expr::Unary(op, Box::new(inner)), depth + 1))
            }
            None => self.primary(),
        }
    }

    fn primary(&mut self) -> Parsed<Expr> {
        match self.advance() {
            Tok::Int(v) => Ok((Expr::Lit(v), 1)),
            Tok::Ident(name) => Ok((Expr::Var(name), 1)),
            Tok::Input(slot) => Ok((Expr::Input(slot), 1)),
            Tok::LParen => {
                let parsed = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(parsed)
            }
            other => {
                // report at the offending token, not the one after it
                self.pos = self.pos.saturating_sub(usize::from(other != Tok::Eof));
                Err(self.error(format!("expected an expression, found {}", describe(&other))))
            }
        }
    }
}

fn binop(tok: &Tok) -> Option<BinOp> {
    Some(match tok {
        Tok::Plus => BinOp::Add,
        Tok::Minus => BinOp::Sub,
        Tok::Star => BinOp::Mul,
        Tok::Slash => BinOp::Div,
        Tok::Percent => BinOp::Mod,
        Tok::EqEq => BinOp::Eq,
        Tok::NotEq => BinOp::Ne,
        Tok::Lt => BinOp::Lt,
        Tok::Le => BinOp::Le,
        Tok::Gt => BinOp::Gt,
        Tok::Ge => BinOp::Ge,
        Tok::AndAnd => BinOp::And,
        Tok::OrOr => BinOp::Or,
        _ => return None,
    })
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Eof => "end of input".to_string(),
        Tok::Int(v) => format!("integer `{v}`"),
        Tok::Ident(name) => format!("identifier `{name}`"),
        Tok::Input(slot) => format!("`in{slot}`"),
        other => format!("{other:?}"),
    }
}
