//! Vector fields declared as arithmetic expressions.
//!
//! A [`VectorField`] is one expression per state component over the state
//! variables and the declared control groups. Fields can be evaluated,
//! differentiated by central differences and paired through the Lie
//! bracket `[F, G](x) = DG(x)·F(x) − DF(x)·G(x)`.

mod expr;
mod signature;

use std::fmt;

use thiserror::Error;

pub use expr::{parse_expr, BinOp, DivisionByZero, Expr, Func};
pub use signature::{FieldSignature, ParamGroup, Var};

/// Default relative step for [`jacobian_fd`] and [`lie_bracket`].
pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("state dimension must be at least 1")]
    ZeroStateDim,
    #[error("parameter group {0} has dimension 0")]
    ZeroGroupDim(String),
    #[error("name {0} declared twice")]
    Duplicate(String),
    #[error("{0:?} is not a valid identifier")]
    BadName(String),
    #[error("expected {expected} parameter groups, got {got}")]
    GroupCount { expected: usize, got: usize },
    #[error("group {group}: expected {expected} values, got {got}")]
    GroupDim { group: String, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("undeclared identifier {name} at position {position}")]
    UndeclaredIdentifier { name: String, position: usize },
    #[error("unknown function {name} at position {position}")]
    UnknownFunction { name: String, position: usize },
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("expected {expected} component expressions, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error("component {component}: {source}")]
    InComponent {
        component: usize,
        #[source]
        source: Box<ParseError>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero in component {component}")]
    DivisionByZero { component: usize },
    #[error("state has length {got}, field expects {expected}")]
    StateDim { expected: usize, got: usize },
    #[error("parameter vector has length {got}, field expects {expected}")]
    ParamDim { expected: usize, got: usize },
    #[error("fields disagree on state dimension ({0} vs {1})")]
    Mismatch(usize, usize),
}

/// Evaluable right-hand side `ẋ = F(x, params)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    signature: FieldSignature,
    components: Vec<Expr>,
}

impl VectorField {
    /// Assembles a field from already-resolved trees. Every variable must
    /// be a valid slot for `signature`.
    pub fn from_exprs(signature: FieldSignature, components: Vec<Expr>) -> Result<Self, ParseError> {
        if components.len() != signature.state_dim() {
            return Err(ParseError::ComponentCount { expected: signature.state_dim(), got: components.len() });
        }
        for (i, c) in components.iter().enumerate() {
            let mut bad = None;
            c.visit_vars(&mut |v| {
                let ok = match v {
                    Var::State(k) => k < signature.state_dim(),
                    Var::Param(k) => k < signature.param_len(),
                };
                if !ok && bad.is_none() {
                    bad = Some(v);
                }
            });
            if let Some(v) = bad {
                return Err(ParseError::InComponent {
                    component: i,
                    source: Box::new(ParseError::UndeclaredIdentifier { name: format!("{v:?}"), position: 0 }),
                });
            }
        }
        Ok(VectorField { signature, components })
    }

    /// A field whose every component is the literal 0.
    pub fn zero(signature: FieldSignature) -> Self {
        let components = vec![Expr::Num(0.0); signature.state_dim()];
        VectorField { signature, components }
    }

    pub fn signature(&self) -> &FieldSignature {
        &self.signature
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn state_dim(&self) -> usize {
        self.signature.state_dim()
    }

    pub fn param_len(&self) -> usize {
        self.signature.param_len()
    }

    /// Evaluates into `out` with parameters in the flat layout.
    pub fn eval_into(&self, x: &[f64], params: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        debug_assert_eq!(out.len(), self.state_dim());
        for (i, (c, o)) in self.components.iter().zip(out.iter_mut()).enumerate() {
            *o = c.eval(x, params).map_err(|_| EvalError::DivisionByZero { component: i })?;
        }
        Ok(())
    }

    /// Evaluates with the parameter vector in the flat layout.
    pub fn eval(&self, x: &[f64], params: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.check_dims(x, params)?;
        let mut out = vec![0.0; self.state_dim()];
        self.eval_into(x, params, &mut out)?;
        Ok(out)
    }

    /// Evaluates with one vector per parameter group.
    pub fn eval_groups(&self, x: &[f64], groups: &[&[f64]]) -> Result<Vec<f64>, EvalError> {
        let flat = self.signature.flatten(groups).map_err(|_| EvalError::ParamDim {
            expected: self.param_len(),
            got: groups.iter().map(|g| g.len()).sum(),
        })?;
        self.eval(x, &flat)
    }

    pub fn check_dims(&self, x: &[f64], params: &[f64]) -> Result<(), EvalError> {
        if x.len() != self.state_dim() {
            return Err(EvalError::StateDim { expected: self.state_dim(), got: x.len() });
        }
        if params.len() != self.param_len() {
            return Err(EvalError::ParamDim { expected: self.param_len(), got: params.len() });
        }
        Ok(())
    }

    /// Component expressions rendered back to source text.
    pub fn sources(&self) -> Vec<String> {
        self.components.iter().map(|c| c.display(&self.signature).to_string()).collect()
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", c.display(&self.signature))?;
        }
        f.write_str(")")
    }
}

/// Parses one source string per state component.
pub fn parse_field<S: AsRef<str>>(sources: &[S], sig: FieldSignature) -> Result<VectorField, ParseError> {
    if sources.len() != sig.state_dim() {
        return Err(ParseError::ComponentCount { expected: sig.state_dim(), got: sources.len() });
    }
    let components = sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            parse_expr(s.as_ref(), &sig).map_err(|e| ParseError::InComponent { component: i, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VectorField { signature: sig, components })
}

/// Row-major `n × n` matrix of partial derivatives `∂F_i/∂x_j`, by central
/// differences with step `h_rel · max(1, |x_j|)`.
pub fn jacobian_fd(field: &VectorField, x: &[f64], params: &[f64], h_rel: f64) -> Result<Vec<Vec<f64>>, EvalError> {
    field.check_dims(x, params)?;
    let n = field.state_dim();
    let mut jac = vec![vec![0.0; n]; n];
    let mut probe = x.to_vec();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for j in 0..n {
        let h = h_rel * x[j].abs().max(1.0);
        probe[j] = x[j] + h;
        field.eval_into(&probe, params, &mut plus)?;
        probe[j] = x[j] - h;
        field.eval_into(&probe, params, &mut minus)?;
        probe[j] = x[j];
        for i in 0..n {
            jac[i][j] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// `[F, G](x) = DG(x)·F(x) − DF(x)·G(x)`.
pub fn lie_bracket(
    f: &VectorField,
    g: &VectorField,
    x: &[f64],
    params_f: &[f64],
    params_g: &[f64],
    h_rel: f64,
) -> Result<Vec<f64>, EvalError> {
    if f.state_dim() != g.state_dim() {
        return Err(EvalError::Mismatch(f.state_dim(), g.state_dim()));
    }
    let fx = f.eval(x, params_f)?;
    let gx = g.eval(x, params_g)?;
    let df = jacobian_fd(f, x, params_f, h_rel)?;
    let dg = jacobian_fd(g, x, params_g, h_rel)?;
    Ok(mat_vec(&dg, &fx).iter().zip(mat_vec(&df, &gx)).map(|(a, b)| a - b).collect())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
