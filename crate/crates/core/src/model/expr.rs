//! Local expressions evaluated over a process's local valuation.

use super::LocalId;

/// Unary operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

/// Binary operators. Comparisons and logical operators yield 0 or 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }
}

/// An expression over integer literals and process-local variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(i64),
    Local(LocalId),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn negate(e: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(e))
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::Binary(BinOp::And, Box::new(a), Box::new(b))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Evaluates with wrapping 64-bit arithmetic.
    pub fn eval(&self, locals: &[i64]) -> i64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Local(v) => locals[v.index()],
            Expr::Unary(op, e) => {
                let x = e.eval(locals);
                match op {
                    UnOp::Neg => x.wrapping_neg(),
                    UnOp::Not => (x == 0) as i64,
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(locals);
                let y = b.eval(locals);
                match op {
                    BinOp::Add => x.wrapping_add(y),
                    BinOp::Sub => x.wrapping_sub(y),
                    BinOp::Mul => x.wrapping_mul(y),
                    BinOp::Eq => (x == y) as i64,
                    BinOp::Ne => (x != y) as i64,
                    BinOp::Lt => (x < y) as i64,
                    BinOp::Le => (x <= y) as i64,
                    BinOp::Gt => (x > y) as i64,
                    BinOp::Ge => (x >= y) as i64,
                    BinOp::And => (x != 0 && y != 0) as i64,
                    BinOp::Or => (x != 0 || y != 0) as i64,
                }
            }
        }
    }

    pub fn holds(&self, locals: &[i64]) -> bool {
        self.eval(locals) != 0
    }

    /// The constant value, if the expression mentions no locals.
    pub fn as_const(&self) -> Option<i64> {
        if self.locals().is_empty() {
            Some(self.eval(&[]))
        } else {
            None
        }
    }

    pub fn locals(&self) -> Vec<LocalId> {
        let mut out = Vec::new();
        self.collect_locals(&mut out);
        out
    }

    fn collect_locals(&self, out: &mut Vec<LocalId>) {
        match self {
            Expr::Const(_) => {}
            Expr::Local(v) => out.push(*v),
            Expr::Unary(_, e) => e.collect_locals(out),
            Expr::Binary(_, a, b) => {
                a.collect_locals(out);
                b.collect_locals(out);
            }
        }
    }

    /// Renders the expression, naming locals through `name`.
    pub fn render(&self, name: &dyn Fn(LocalId) -> String) -> String {
        self.render_prec(name, 0)
    }

    fn render_prec(&self, name: &dyn Fn(LocalId) -> String, ctx: u8) -> String {
        match self {
            Expr::Const(c) if *c < 0 => format!("({c})"),
            Expr::Const(c) => c.to_string(),
            Expr::Local(v) => name(*v),
            Expr::Unary(op, e) => {
                let sym = match op {
                    UnOp::Neg => "-",
                    UnOp::Not => "!",
                };
                format!("{sym}{}", e.render_prec(name, 7))
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let s = format!(
                    "{} {} {}",
                    a.render_prec(name, p),
                    op.symbol(),
                    b.render_prec(name, p + 1)
                );
                if p < ctx {
                    format!("({s})")
                } else {
                    s
                }
            }
        }
    }
}
