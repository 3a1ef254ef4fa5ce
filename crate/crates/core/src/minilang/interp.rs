use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ast::{BinOp, Expr, Program, Stmt, UnOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    RuntimeError,
    StepLimitExceeded,
}

/// Result of running a program. `steps` is the exact cost in interpreter units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub status: ExecStatus,
    pub outputs: Vec<i64>,
    pub steps: u64,
    pub error: Option<String>,
}

enum Halt {
    StepLimit,
    Fault(String),
}

struct Machine<'a> {
    inputs: &'a [i64],
    vars: HashMap<&'a str, i64>,
    outputs: Vec<i64>,
    steps: u64,
    limit: u64,
}

/// Runs `program` on `inputs` with a budget of `step_limit` cost units.
///
/// Each executed statement costs 1 and each evaluated expression node costs 1;
/// a loop condition is charged again on every iteration. `&&` and `||`
/// short-circuit, so unevaluated operands cost nothing.
pub fn run(program: &Program, inputs: &[i64], step_limit: u64) -> ExecOutcome {
    let mut machine = Machine {
        inputs,
        vars: HashMap::new(),
        outputs: Vec::new(),
        steps: 0,
        limit: step_limit,
    };
    let result = machine.exec_block(&program.statements);
    let (status, error) = match result {
        Ok(()) => (ExecStatus::Ok, None),
        Err(Halt::StepLimit) => (ExecStatus::StepLimitExceeded, None),
        Err(Halt::Fault(msg)) => (ExecStatus::RuntimeError, Some(msg)),
    };
    ExecOutcome { status, outputs: machine.outputs, steps: machine.steps, error }
}

impl<'a> Machine<'a> {
    fn tick(&mut self) -> Result<(), Halt> {
        if self.steps >= self.limit {
            return Err(Halt::StepLimit);
        }
        self.steps += 1;
        Ok(())
    }

    fn exec_block(&mut self, stmts: &'a [Stmt]) -> Result<(), Halt> {
        for stmt in stmts {
            self.exec(stmt)?;
        }
        Ok(())
    }

    fn exec(&mut self, stmt: &'a Stmt) -> Result<(), Halt> {
        self.tick()?;
        match stmt {
            Stmt::Assign(name, value) => {
                let v = self.eval(value)?;
                self.vars.insert(name.as_str(), v);
            }
            Stmt::Print(value) => {
                let v = self.eval(value)?;
                self.outputs.push(v);
            }
            Stmt::While(cond, body) => {
                while self.eval(cond)? != 0 {
                    self.exec_block(body)?;
                }
            }
            Stmt::If(cond, then, otherwise) => {
                if self.eval(cond)? != 0 {
                    self.exec_block(then)?;
                } else if let Some(els) = otherwise {
                    self.exec_block(els)?;
                }
            }
        }
        Ok(())
    }

    fn eval(&mut self, expr: &Expr) -> Result<i64, Halt> {
        self.tick()?;
        match expr {
            Expr::Lit(v) => Ok(*v),
            Expr::Var(name) => self
                .vars
                .get(name.as_str())
                .copied()
                .ok_or_else(|| Halt::Fault(format!("read of unassigned variable `{name}`"))),
            Expr::Input(slot) => self
                .inputs
                .get(*slot as usize)
                .copied()
                .ok_or_else(|| Halt::Fault(format!("input slot in{slot} not provided"))),
            Expr::Unary(op, inner) => {
                let v = self.eval(inner)?;
                match op {
                    UnOp::Neg => v.checked_neg().ok_or_else(overflow),
                    UnOp::Not => Ok(i64::from(v == 0)),
                }
            }
            Expr::Binary(BinOp::And, lhs, rhs) => {
                if self.eval(lhs)? == 0 {
                    return Ok(0);
                }
                Ok(i64::from(self.eval(rhs)? != 0))
            }
            Expr::Binary(BinOp::Or, lhs, rhs) => {
                if self.eval(lhs)? != 0 {
                    return Ok(1);
                }
                Ok(i64::from(self.eval(rhs)? != 0))
            }
            Expr::Binary(op, lhs, rhs) => {
                let a = self.eval(lhs)?;
                let b = self.eval(rhs)?;
                apply(*op, a, b)
            }
        }
    }
}

fn overflow() -> Halt {
    Halt::Fault("integer overflow".to_string())
}

fn apply(op: BinOp, a: i64, b: i64) -> Result<i64, Halt> {
    match op {
        BinOp::Add => a.checked_add(b).ok_or_else(overflow),
        BinOp::Sub => a.checked_sub(b).ok_or_else(overflow),
        BinOp::Mul => a.checked_mul(b).ok_or_else(overflow),
        BinOp::Div | BinOp::Mod if b == 0 => Err(Halt::Fault("division by zero".to_string())),
        // checked_div/rem truncate toward zero and only fail on MIN / -1
        BinOp::Div => a.checked_div(b).ok_or_else(overflow),
        BinOp::Mod => a.checked_rem(b).ok_or_else(overflow),
        BinOp::Eq => Ok(i64::from(a == b)),
        BinOp::Ne => Ok(i64::from(a != b)),
        BinOp::Lt => Ok(i64::from(a < b)),
        BinOp::Le => Ok(i64::from(a <= b)),
        BinOp::Gt => Ok(i64::from(a > b)),
        BinOp::Ge => Ok(i64::from(a >= b)),
        BinOp::And | BinOp::Or => unreachable!("short-circuit operators handled in eval"),
    }
}
