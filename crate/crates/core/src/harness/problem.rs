//! The design objective `θ ↦ C(z(θ))`: generate the input, simulate its
//! periodic steady state, score the joint samples.

use crate::cost::{chain_param_gradient, SpaceFillingCost};
use crate::dynamics::{
    simulate_steady_state, simulate_steady_state_with_sensitivities, StateSpaceModel,
    SteadyStateOptions, Trajectory,
};
use crate::error::{Error, Result};
use crate::input::{direct_generate, direct_jacobian, DirectSpec, FreeParams, MultisineSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Parametrization {
    Multisine {
        spec: MultisineSpec,
        free: FreeParams,
    },
    Direct {
        spec: DirectSpec,
    },
}

impl Parametrization {
    pub fn params(&self) -> Vec<f64> {
        match self {
            Parametrization::Multisine { spec, free } => spec.params(*free),
            Parametrization::Direct { spec } => spec.samples().to_vec(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Parametrization::Multisine { spec, free } => spec.param_count(*free),
            Parametrization::Direct { spec } => spec.len(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Parametrization::Multisine { spec, .. } => spec.len(),
            Parametrization::Direct { spec } => spec.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bounds(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            // amplitudes must stay non-negative when they are free
            Parametrization::Multisine { spec, free } if free.amplitudes => {
                let mut b = vec![(f64::NEG_INFINITY, f64::INFINITY); spec.param_count(*free)];
                let offset = if free.phases { spec.line_count() } else { 0 };
                for v in &mut b[offset..] {
                    v.0 = 0.0;
                }
                Some(b)
            }
            Parametrization::Multisine { .. } => None,
            Parametrization::Direct { spec } => spec.param_bounds(),
        }
    }

    /// Same parametrization with parameters `theta`.
    pub fn with_params(&self, theta: &[f64]) -> Result<Self> {
        Ok(match self {
            Parametrization::Multisine { spec, free } => Parametrization::Multisine {
                spec: spec.with_params(*free, theta)?,
                free: *free,
            },
            Parametrization::Direct { spec } => {
                if theta.len() != spec.len() {
                    return Err(Error::DimensionMismatch {
                        context: "direct parameters",
                        expected: spec.len(),
                        actual: theta.len(),
                    });
                }
                Parametrization::Direct {
                    spec: DirectSpec::new(theta.to_vec(), spec.bounds())?,
                }
            }
        })
    }

    pub fn signal(&self) -> Vec<f64> {
        match self {
            Parametrization::Multisine { spec, .. } => spec.generate(),
            Parametrization::Direct { spec } => direct_generate(spec),
        }
    }

    /// `∂u_k/∂θ`, row-major `n × n_θ`.
    pub fn jacobian(&self) -> Vec<f64> {
        match self {
            Parametrization::Multisine { spec, free } => spec.jacobian(*free),
            Parametrization::Direct { spec } => direct_jacobian(spec),
        }
    }
}

/// Everything needed to evaluate the design cost of a parameter vector.
pub struct DesignProblem {
    model: Box<dyn StateSpaceModel>,
    param: Parametrization,
    cost: SpaceFillingCost,
    steady_state: SteadyStateOptions,
    x0: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub signal: Vec<f64>,
    pub trajectory: Trajectory,
    pub occupancy: Vec<f64>,
    pub periods: usize,
}

impl DesignProblem {
    /// Starts every steady-state simulation from the origin.
    pub fn new(
        model: Box<dyn StateSpaceModel>,
        param: Parametrization,
        cost: SpaceFillingCost,
        steady_state: SteadyStateOptions,
    ) -> Result<Self> {
        if model.input_dim() != 1 {
            return Err(Error::invalid(
                "model",
                "only single-input models are supported",
            ));
        }
        let n_z = model.input_dim() + model.state_dim();
        if cost.grid().dim() != n_z {
            return Err(Error::DimensionMismatch {
                context: "domain dimension",
                expected: n_z,
                actual: cost.grid().dim(),
            });
        }
        steady_state.validate("steady_state")?;
        let x0 = vec![0.0; model.state_dim()];
        Ok(Self {
            model,
            param,
            cost,
            steady_state,
            x0,
        })
    }

    pub fn model(&self) -> &dyn StateSpaceModel {
        self.model.as_ref()
    }

    pub fn parametrization(&self) -> &Parametrization {
        &self.param
    }

    pub fn cost_function(&self) -> &SpaceFillingCost {
        &self.cost
    }

    pub fn initial_params(&self) -> Vec<f64> {
        self.param.params()
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<Evaluation> {
        let p = self.param.with_params(theta)?;
        let signal = p.signal();
        let ss = simulate_steady_state(self.model.as_ref(), &signal, &self.x0, &self.steady_state)?;
        let occupancy = self.cost.occupancy(&ss.trajectory.joint_samples())?;
        Ok(Evaluation {
            cost: self.cost.value_from_occupancy(&occupancy),
            signal,
            trajectory: ss.trajectory,
            occupancy,
            periods: ss.periods,
        })
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.evaluate(theta)?.cost)
    }

    /// Cost and `∂C/∂θ` from one forward pass with sensitivities.
    pub fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.param.with_params(theta)?;
        let signal = p.signal();
        let jac = p.jacobian();
        let ss = simulate_steady_state_with_sensitivities(
            self.model.as_ref(),
            &signal,
            &jac,
            p.param_count(),
            &self.x0,
            &self.steady_state,
        )?;
        let sens = ss.sensitivities.expect("sensitivities requested");
        let (c, gz) = self
            .cost
            .value_and_gradient(&ss.trajectory.joint_samples())?;
        Ok((c, chain_param_gradient(&gz, &sens)?))
    }
}
