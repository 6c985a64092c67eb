"""dgparam: diesel-generator model simulation and parameter estimation."""

from .boxmap import (BoundSpec, beta_sensitivity, forward, inverse,
                     mapping_jacobian)
from .dynmodel import (AlgebraicOutputs, EngineParams, ExciterParams, GenParams,
                       NetworkOutputs, PARAM_NAMES, ParameterSet, STATE_NAMES,
                       algebraic_outputs, output_map, solve_network,
                       state_derivative, steady_state)
from .errors import (AllInfeasible, BadBounds, ConfigError, DGParamError,
                     NoEquilibrium, NonFiniteInput, NonFiniteState,
                     NonMonotonicTime, OutOfBounds, ParseError,
                     SimulationBlewUp, SingularNormalMatrix, StalledIteration)
from .golga import (Chromosome, GAConfig, GAResult, Population, crossover,
                    crossover_blend, evaluate_fitness, gol_mutate,
                    init_population, run_ga, select_parents)
from .hbclm import (FitReport, StoppingCriteria, bclm_solve, hbclm_fit,
                    lm_solve_unconstrained, low_sensitivity_parameters)
from .integrator import (LoadStepProfile, SimConfig, Trajectory, rk4_step,
                         rk4_update, simulate)
from .measurements import MeasurementSeries, parse_measurements, write_measurements
from .nlsq import (DampingState, Experiment, FitProblem, ResidualSet,
                   SensitivityMatrix, channel_rmse, choose_lambda,
                   fd_sensitivity, gn_step, hessian_spectrum, lm_step, objective)

__version__ = "0.1.0"
