//! Initial data from named formulas or expressions in `x`, `y`.
//!
//! Expressions may use the variables `x, y, r, theta, mu, X, mean_u0, beta,
//! delta, eps, lambda1, lambda3, R` and the functions `sin, cos, tan, exp,
//! ln, sqrt, abs, J0, J1`. Write real literals with a decimal point: `1/10`
//! is integer division.

use std::f64::consts::PI;

use evalexpr::{
    ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes, EvalexprError, Function,
    HashMapContext, Node, Value,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kslocal_core::mesh::{mean_value, project_cell_averages_indexed, DiscreteField, Mesh, MeshError, Point};
use kslocal_core::scheme::{stationary_v_init, SchemeError, SchemeParams};

use crate::bessel::{first_derivative_zero, j0, j1};

#[derive(Debug, thiserror::Error)]
pub enum InitialError {
    #[error("cannot parse {text:?}: {source}")]
    Parse { text: String, source: EvalexprError },
    #[error("cannot evaluate {text:?}: {source}")]
    Eval { text: String, source: EvalexprError },
    #[error("{0} is not available for u0")]
    NotForU(&'static str),
    #[error("the expressions use mu but no value was given")]
    MissingMu,
    #[error("mean_u0 is only known once u0 is built")]
    MeanInU,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

/// A parsed initial-data formula.
#[derive(Debug, Clone)]
pub enum Formula {
    /// `15 x^2 (1 - x)^2`.
    Quartic,
    /// Solution of the stationary chemoattractant equation for `u0`.
    Stationary,
    /// Constant `<u0> / beta`.
    WellPrepared,
    /// `mu (1 + cos(theta) J1(j'_{1,1} r / R) / 10)`.
    FirstMode,
    /// `mu (1 + J0(j'_{0,1} r / R) / 10)`.
    RadialMode,
    /// `mu (0.5 + X)` with `X` uniform in (0, 1), one draw per cell.
    Random,
    Expr { text: String, node: Node<DefaultNumericTypes> },
}

impl Formula {
    pub fn parse(text: &str) -> Result<Self, InitialError> {
        Ok(match text.trim() {
            "tc1" => Formula::Quartic,
            "stationary" | "swp" => Formula::Stationary,
            "wp" => Formula::WellPrepared,
            "j1" => Formula::FirstMode,
            "j0" => Formula::RadialMode,
            "random" => Formula::Random,
            other => Formula::Expr {
                text: other.to_string(),
                node: evalexpr::build_operator_tree(other).map_err(|source| InitialError::Parse {
                    text: other.to_string(),
                    source,
                })?,
            },
        })
    }

    fn uses_mu(&self) -> bool {
        match self {
            Formula::FirstMode | Formula::RadialMode | Formula::Random => true,
            Formula::Expr { node, .. } => node.iter_variable_identifiers().any(|v| v == "mu"),
            _ => false,
        }
    }

    fn uses_mean(&self) -> bool {
        matches!(self, Formula::Expr { node, .. } if node.iter_variable_identifiers().any(|v| v == "mean_u0"))
    }
}

/// Everything the formulas may refer to besides the position.
#[derive(Debug, Clone, Copy)]
pub struct Setting<'a> {
    pub params: &'a SchemeParams,
    pub mu: Option<f64>,
    /// Center of the polar coordinates.
    pub origin: Point,
    /// Length scale: disk radius, square side or interval length.
    pub length: f64,
    pub seed: u64,
    pub quadrature_order: usize,
}

/// Uniform draws in (0, 1), one per cell in cell order.
pub fn uniform_draws(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| loop {
            let x: f64 = rng.random();
            if x > 0.0 {
                break x;
            }
        })
        .collect()
}

struct Evaluator<'a> {
    setting: Setting<'a>,
    a11: f64,
    a01: f64,
    draws: Vec<f64>,
    context: HashMapContext<DefaultNumericTypes>,
}

fn float_fn(f: fn(f64) -> f64) -> Function<DefaultNumericTypes> {
    Function::new(move |arg: &Value<DefaultNumericTypes>| Ok(Value::Float(f(arg.as_number()?))))
}

impl<'a> Evaluator<'a> {
    fn new(mesh: &Mesh, setting: Setting<'a>) -> Result<Self, InitialError> {
        let a11 = first_derivative_zero(1);
        let a01 = first_derivative_zero(0);
        let r = setting.length;
        let mut context = HashMapContext::<DefaultNumericTypes>::new();
        let functions: [(&str, fn(f64) -> f64); 9] = [
            ("sin", f64::sin),
            ("cos", f64::cos),
            ("tan", f64::tan),
            ("exp", f64::exp),
            ("ln", f64::ln),
            ("sqrt", f64::sqrt),
            ("abs", f64::abs),
            ("J0", j0),
            ("J1", j1),
        ];
        for (name, f) in functions {
            context.set_function(name.to_string(), float_fn(f)).expect("function names are valid");
        }
        let p = setting.params;
        let constants = [
            ("beta", p.beta),
            ("delta", p.delta),
            ("eps", p.eps),
            ("lambda1", (a11 / r).powi(2)),
            ("lambda3", (a01 / r).powi(2)),
            ("R", r),
            ("pi", PI),
        ];
        for (name, value) in constants {
            context.set_value(name.to_string(), Value::Float(value)).expect("variable names are valid");
        }
        if let Some(mu) = setting.mu {
            context.set_value("mu".into(), Value::Float(mu)).expect("variable names are valid");
        }
        Ok(Evaluator {
            setting,
            a11,
            a01,
            draws: uniform_draws(mesh.n_cells(), setting.seed),
            context,
        })
    }

    fn mu(&self) -> Result<f64, InitialError> {
        self.setting.mu.ok_or(InitialError::MissingMu)
    }

    fn project(&mut self, mesh: &Mesh, formula: &Formula) -> Result<DiscreteField, InitialError> {
        if formula.uses_mu() {
            self.mu()?;
        }
        let [ox, oy] = self.setting.origin;
        let length = self.setting.length;
        let order = self.setting.quadrature_order;
        match formula {
            Formula::Quartic => Ok(project_cell_averages_indexed(
                mesh,
                |_, p| 15.0 * p[0] * p[0] * (1.0 - p[0]).powi(2),
                order,
            )?),
            Formula::FirstMode => {
                let (mu, a) = (self.mu()?, self.a11);
                Ok(project_cell_averages_indexed(
                    mesh,
                    |_, p| {
                        let (x, y) = (p[0] - ox, p[1] - oy);
                        let r = x.hypot(y);
                        let cos = if r > 0.0 { x / r } else { 1.0 };
                        mu * (1.0 + cos / 10.0 * j1(a * r / length))
                    },
                    order,
                )?)
            }
            Formula::RadialMode => {
                let (mu, a) = (self.mu()?, self.a01);
                Ok(project_cell_averages_indexed(
                    mesh,
                    |_, p| mu * (1.0 + j0(a * (p[0] - ox).hypot(p[1] - oy) / length) / 10.0),
                    order,
                )?)
            }
            Formula::Random => {
                let mu = self.mu()?;
                let values = self.draws.iter().map(|x| mu * (0.5 + x)).collect();
                Ok(DiscreteField::new(mesh, values)?)
            }
            Formula::Expr { text, node } => {
                let draws = &self.draws;
                let context = &mut self.context;
                let mut failure = None;
                let field = project_cell_averages_indexed(
                    mesh,
                    |k, p| {
                        let (x, y) = (p[0] - ox, p[1] - oy);
                        let vars = [
                            ("x", p[0]),
                            ("y", p[1]),
                            ("r", x.hypot(y)),
                            ("theta", y.atan2(x)),
                            ("X", draws[k]),
                        ];
                        for (name, value) in vars {
                            context.set_value(name.to_string(), Value::Float(value)).expect("variable names are valid");
                        }
                        match node.eval_number_with_context(context) {
                            Ok(value) => value,
                            Err(source) => {
                                failure.get_or_insert(source);
                                f64::NAN
                            }
                        }
                    },
                    order,
                );
                if let Some(source) = failure {
                    return Err(InitialError::Eval { text: text.clone(), source });
                }
                Ok(field?)
            }
            Formula::Stationary => Err(InitialError::NotForU("stationary")),
            Formula::WellPrepared => Err(InitialError::NotForU("wp")),
        }
    }
}

/// Builds `u0` and `v0` on the mesh. `v0` is `None` only for `v = "none"`,
/// which asks the scheme to start from the stationary chemoattractant.
pub fn build_initial(
    mesh: &Mesh,
    setting: Setting<'_>,
    u: &str,
    v: &str,
) -> Result<(DiscreteField, Option<DiscreteField>), InitialError> {
    let mut eval = Evaluator::new(mesh, setting)?;
    let fu = Formula::parse(u)?;
    if fu.uses_mean() {
        return Err(InitialError::MeanInU);
    }
    let u0 = eval.project(mesh, &fu)?;
    if v.trim() == "none" {
        return Ok((u0, None));
    }
    let mean_u0 = mean_value(mesh, &u0)?;
    eval.context
        .set_value("mean_u0".into(), Value::Float(mean_u0))
        .expect("variable names are valid");
    let v0 = match Formula::parse(v)? {
        Formula::Stationary => stationary_v_init(mesh, setting.params, &u0)?,
        Formula::WellPrepared => DiscreteField::constant(mesh, mean_u0 / setting.params.beta),
        other => eval.project(mesh, &other)?,
    };
    Ok((u0, Some(v0)))
}

/// Continuous Neumann eigenvalues of the disk of radius `radius` used by the
/// mode formulas: the first nonzero one and the first radial one.
pub fn disk_eigenvalues(radius: f64) -> (f64, f64) {
    let ev = |order| (first_derivative_zero(order) / radius).powi(2);
    (ev(1), ev(0))
}
