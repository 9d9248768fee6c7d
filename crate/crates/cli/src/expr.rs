use fasteval::{Compiler, Evaler, Instruction, Parser, Slab};

/// Compiled real-valued expression over named variables; `pi`, `e`, `sqrt`,
/// `exp` and `ln` are always defined.
pub struct Expr {
    slab: Slab,
    instr: Instruction,
    vars: &'static [&'static str],
}

impl Expr {
    pub fn parse(text: &str, vars: &'static [&'static str]) -> Result<Self, String> {
        let mut slab = Slab::new();
        let instr = Parser::new()
            .parse(text, &mut slab.ps)
            .map_err(|e| format!("cannot parse `{text}`: {e}"))?
            .from(&slab.ps)
            .compile(&slab.ps, &mut slab.cs);
        let expr = Self { slab, instr, vars };
        let probe = vec![0.25; vars.len()];
        expr.try_eval(&probe).map_err(|e| format!("cannot evaluate `{text}`: {e}"))?;
        Ok(expr)
    }

    fn try_eval(&self, values: &[f64]) -> Result<f64, fasteval::Error> {
        let mut ns = |name: &str, args: Vec<f64>| {
            if let Some(k) = self.vars.iter().position(|v| *v == name) {
                return Some(values[k]);
            }
            match (name, args.as_slice()) {
                ("pi", []) => Some(std::f64::consts::PI),
                ("e", []) => Some(std::f64::consts::E),
                ("sqrt", [x]) => Some(x.sqrt()),
                ("exp", [x]) => Some(x.exp()),
                ("ln", [x]) => Some(x.ln()),
                _ => None,
            }
        };
        self.instr.eval(&self.slab, &mut ns)
    }

    /// Values in the order of the variable list given to [`Expr::parse`].
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.try_eval(values).unwrap_or(f64::NAN)
    }
}

/// Evaluates a constant expression such as `1/64`.
pub fn constant(text: &str) -> Result<f64, String> {
    Ok(Expr::parse(text, &[])?.eval(&[]))
}
