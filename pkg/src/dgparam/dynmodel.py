"""Seventh-order diesel-generator model.

The plant is three coupled blocks plus an algebraic network:

* engine/governor: second-order actuator in controllable canonical form
  (states q1, q2) driven by the reference power plus the speed droop,
  producing mechanical power Pm with a numerator time constant T1;
* excitation: first-order AVR behind a PI regulator, folded into the
  canonical states xi1, xi2 with the field voltage Vf as output;
* machine: flux-decay synchronous generator (omega, Eqp, delta) feeding
  an isolated resistive load through the stator impedance.

The rotor angle delta integrates the slip but feeds back into nothing
under a purely resistive load; it is kept so the state layout matches
the physical model.

State vector layout: (q1, q2, xi1, xi2, omega, Eqp, delta).
Output channels: 0 = electrical frequency (p.u.), 1 = terminal voltage (p.u.).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from numba import njit

from .errors import NoEquilibrium, NonFiniteInput, NonFiniteState

N_STATES = 7
STATE_NAMES = ("q1", "q2", "xi1", "xi2", "omega", "Eqp", "delta")

# Canonical parameter order used by pack()/packed vectors everywhere.
PARAM_NAMES = (
    "m", "T1", "T2", "T3", "P_ref", "omega_ref",
    "T_V", "K_V", "K_pe", "K_ie", "V_tref", "vf_max",
    "H", "omega_s", "D_f", "X_d", "X_q", "X_dp", "T_dop", "R_s",
)
PARAM_INDEX = {name: i for i, name in enumerate(PARAM_NAMES)}

# Reference settings and the saturation ceiling are never part of the
# estimation vector.
NEVER_FREE = frozenset({"P_ref", "omega_ref", "V_tref", "omega_s", "vf_max"})

OUT_FREQ = 0
OUT_VOLT = 1


@dataclass(frozen=True)
class EngineParams:
    m: float  # Speed droop gain (p.u. power per p.u. speed)
    T1: float  # Actuator numerator time constant (s)
    T2: float  # Actuator pole time constant (s)
    T3: float  # Engine pole time constant (s)
    P_ref: float = 1.0  # Reference power setting (p.u.)
    omega_ref: float = 1.0  # Reference speed setting (p.u.)

    def validate(self):
        if not self.m >= 0.0:
            raise ValueError("m must be >= 0")
        if not self.T1 >= 0.0:
            raise ValueError("T1 must be >= 0")
        if not self.T2 > 0.0:
            raise ValueError("T2 must be > 0")
        if not self.T3 > 0.0:
            raise ValueError("T3 must be > 0")


@dataclass(frozen=True)
class ExciterParams:
    T_V: float  # AVR time constant (s)
    K_V: float  # AVR gain
    K_pe: float  # Voltage regulator proportional gain
    K_ie: float  # Voltage regulator integral gain
    V_tref: float = 1.0  # Terminal voltage setpoint (p.u.)
    vf_max: float = 10.0  # Field voltage ceiling (p.u.); floor is 0

    def validate(self):
        if not self.T_V > 0.0:
            raise ValueError("T_V must be > 0")
        if not self.vf_max > 0.0:
            raise ValueError("vf_max must be > 0")


@dataclass(frozen=True)
class GenParams:
    H: float  # Inertia constant (s)
    D_f: float  # Friction/damping factor (p.u.)
    X_d: float  # d-axis synchronous reactance (p.u.)
    X_q: float  # q-axis synchronous reactance (p.u.)
    X_dp: float  # d-axis transient reactance (p.u.)
    T_dop: float  # d-axis open-circuit transient time constant (s)
    R_s: float  # Stator resistance (p.u.)
    omega_s: float = 1.0  # Synchronous speed (p.u.)

    def validate(self):
        if not self.H > 0.0:
            raise ValueError("H must be > 0")
        if not self.T_dop > 0.0:
            raise ValueError("T_dop must be > 0")
        if not self.X_dp > 0.0:
            raise ValueError("X_dp must be > 0")
        if not self.X_d >= self.X_dp:
            raise ValueError("X_d must be >= X_dp")
        if not self.X_q > 0.0:
            raise ValueError("X_q must be > 0")
        if not self.R_s >= 0.0:
            raise ValueError("R_s must be >= 0")


_FIELD_OWNER = {}
for _cls, _attr in ((EngineParams, "engine"), (ExciterParams, "exciter"), (GenParams, "gen")):
    for _f in fields(_cls):
        _FIELD_OWNER[_f.name] = _attr


@dataclass(frozen=True)
class ParameterSet:
    """Full model parameterization plus the list of free (estimated) names."""

    engine: EngineParams
    exciter: ExciterParams
    gen: GenParams
    free: tuple = ()

    def __post_init__(self):
        seen = set()
        for name in self.free:
            if name not in PARAM_INDEX:
                raise ValueError(f"unknown parameter name: {name}")
            if name in NEVER_FREE:
                raise ValueError(f"parameter {name} is a fixed reference setting")
            if name in seen:
                raise ValueError(f"duplicate free parameter: {name}")
            seen.add(name)

    @classmethod
    def from_values(cls, values, free=()):
        eng = {f.name: values[f.name] for f in fields(EngineParams)}
        exc = {f.name: values[f.name] for f in fields(ExciterParams)}
        gen = {f.name: values[f.name] for f in fields(GenParams)}
        return cls(EngineParams(**eng), ExciterParams(**exc), GenParams(**gen),
                   free=tuple(free))

    def get(self, name):
        return getattr(getattr(self, _FIELD_OWNER[name]), name)

    def values(self):
        return {name: self.get(name) for name in PARAM_NAMES}

    def pack(self):
        """Parameter vector in canonical PARAM_NAMES order (float64)."""
        return np.array([self.get(name) for name in PARAM_NAMES], dtype=np.float64)

    def with_values(self, **updates):
        vals = self.values()
        for name, value in updates.items():
            if name not in vals:
                raise ValueError(f"unknown parameter name: {name}")
            vals[name] = float(value)
        return ParameterSet.from_values(vals, free=self.free)

    def free_vector(self):
        return np.array([self.get(name) for name in self.free], dtype=np.float64)

    def with_free(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (len(self.free),):
            raise ValueError("theta length does not match the free parameter list")
        return self.with_values(**dict(zip(self.free, theta)))

    def validate(self):
        self.engine.validate()
        self.exciter.validate()
        self.gen.validate()


def _as_packed(p):
    if isinstance(p, ParameterSet):
        return p.pack()
    pv = np.asarray(p, dtype=np.float64)
    if pv.shape != (len(PARAM_NAMES),):
        raise ValueError("packed parameter vector must have length %d" % len(PARAM_NAMES))
    return pv


@njit(cache=True, nogil=True, error_model="numpy")
def _network(eqp, r_load, rs, xq, xdp):
    """Stator currents and voltages for a resistive load r_load."""
    rt = rs + r_load
    det = rt * rt + xq * xdp
    iq = eqp * rt / det
    idd = eqp * xq / det
    vd = r_load * idd
    vq = r_load * iq
    vt = math.sqrt(vd * vd + vq * vq)
    return idd, iq, vd, vq, vt


@njit(cache=True, nogil=True, error_model="numpy")
def _field_voltage(xi1, xi2, tv, kv, kpe, kie, vf_max):
    vf = (kv * kie / tv) * xi1 + (kv * kpe / tv) * xi2
    # Saturation clamp applies before the field voltage reaches the flux
    # equation; the canonical exciter states themselves do not saturate.
    if vf < 0.0:
        vf = 0.0
    elif vf > vf_max:
        vf = vf_max
    return vf


@njit(cache=True, nogil=True, error_model="numpy")
def _derivative(x, r_load, pv, dx):
    m = pv[0]
    t1 = pv[1]
    t2 = pv[2]
    t3 = pv[3]
    p_ref = pv[4]
    w_ref = pv[5]
    tv = pv[6]
    kv = pv[7]
    kpe = pv[8]
    kie = pv[9]
    v_tref = pv[10]
    vf_max = pv[11]
    h_in = pv[12]
    w_s = pv[13]
    d_f = pv[14]
    xd = pv[15]
    xq = pv[16]
    xdp = pv[17]
    t_dop = pv[18]
    rs = pv[19]

    q1 = x[0]
    q2 = x[1]
    xi1 = x[2]
    xi2 = x[3]
    w = x[4]
    eqp = x[5]

    idd, iq, vd, vq, vt = _network(eqp, r_load, rs, xq, xdp)
    vf = _field_voltage(xi1, xi2, tv, kv, kpe, kie, vf_max)

    t23 = t2 * t3
    pm = (q1 + t1 * q2) / t23

    dx[0] = q2
    dx[1] = -q1 / t23 - (t2 + t3) / t23 * q2 + p_ref + m * (w_ref - w)
    dx[2] = xi2
    dx[3] = -xi2 / tv + (v_tref - vt)
    dx[4] = (w_s / (2.0 * h_in)) * (pm - eqp * iq - (xq - xdp) * idd * iq - d_f * w)
    dx[5] = (-eqp - (xd - xdp) * idd + vf) / t_dop
    dx[6] = w - w_s


@dataclass(frozen=True)
class NetworkOutputs:
    Id: float  # d-axis stator current (p.u.)
    Iq: float  # q-axis stator current (p.u.)
    Vd: float  # d-axis terminal voltage (p.u.)
    Vq: float  # q-axis terminal voltage (p.u.)
    Vt: float  # terminal voltage magnitude (p.u.)


@dataclass(frozen=True)
class AlgebraicOutputs(NetworkOutputs):
    Pm: float  # mechanical power (p.u.)
    Vf: float  # field voltage after the saturation clamp (p.u.)


def solve_network(Eqp, r_load, gen):
    """Solve the stator algebraic constraints for a resistive load."""
    args = (Eqp, r_load, gen.R_s, gen.X_q, gen.X_dp)
    if not all(math.isfinite(v) for v in args):
        raise NonFiniteInput("network solve received non-finite inputs")
    idd, iq, vd, vq, vt = _network(*args)
    return NetworkOutputs(idd, iq, vd, vq, vt)


def algebraic_outputs(x, r_load, p):
    """All algebraic quantities (currents, voltages, Pm, Vf) at a state."""
    pv = _as_packed(p)
    x = np.asarray(x, dtype=np.float64)
    net = _network(x[5], r_load, pv[19], pv[16], pv[17])
    vf = _field_voltage(x[2], x[3], pv[6], pv[7], pv[8], pv[9], pv[11])
    pm = (x[0] + pv[1] * x[1]) / (pv[2] * pv[3])
    return AlgebraicOutputs(*net, Pm=pm, Vf=vf)


def state_derivative(x, r_load, p):
    """Time derivative of the 7-component state under load r_load."""
    pv = _as_packed(p)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (N_STATES,):
        raise ValueError("state vector must have length %d" % N_STATES)
    dx = np.empty(N_STATES, dtype=np.float64)
    _derivative(x, float(r_load), pv, dx)
    if not np.all(np.isfinite(dx)):
        raise NonFiniteState("state derivative is not finite")
    return dx


def output_map(x, r_load, p):
    """Measured channels at a state: (frequency p.u., terminal voltage p.u.)."""
    pv = _as_packed(p)
    x = np.asarray(x, dtype=np.float64)
    _, _, _, _, vt = _network(x[5], float(r_load), pv[19], pv[16], pv[17])
    out = np.array([x[4], vt], dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("output map is not finite")
    return out


def _balance_residual(u, r_load, pv, dx):
    """Equilibrium residuals scaled to balance units.

    The raw derivatives of omega and Eqp carry 1/(2H) and 1/T_dop factors;
    multiplying them back out keeps every equation O(1) so one absolute
    tolerance works across wildly different parameter magnitudes.
    """
    x = np.array([u[0], u[1], u[2], u[3], u[4], u[5], 0.0])
    _derivative(x, r_load, pv, dx)
    g = dx[:6].copy()
    g[4] *= 2.0 * pv[12] / pv[13]
    g[5] *= pv[18]
    return g


def steady_state(r_load, p, tol=1e-12, max_iter=200):
    """Equilibrium state at constant load via damped Newton on 6 states.

    delta decouples under a resistive load and is fixed at 0. The seed
    comes from the steady-state algebra of the engine and exciter blocks
    with omega at its reference and unit flux.
    """
    pv = _as_packed(p)
    r_load = float(r_load)

    q1 = pv[2] * pv[3] * pv[4]
    idd, _, _, _, _ = _network(1.0, r_load, pv[19], pv[16], pv[17])
    vf0 = 1.0 + (pv[15] - pv[17]) * idd
    gain = pv[7] * pv[9]
    xi1 = pv[6] * vf0 / gain if abs(gain) > 1e-12 else 0.0
    u = np.array([q1, 0.0, xi1, 0.0, pv[5], 1.0])

    dx = np.empty(N_STATES, dtype=np.float64)
    g = _balance_residual(u, r_load, pv, dx)
    if not np.all(np.isfinite(g)):
        raise NoEquilibrium("equilibrium residual not finite at the seed")
    gnorm = np.max(np.abs(g))

    for _ in range(max_iter):
        if gnorm <= tol:
            return np.array([u[0], u[1], u[2], u[3], u[4], u[5], 0.0])
        jac = np.empty((6, 6))
        for j in range(6):
            step = 1e-7 * max(1.0, abs(u[j]))
            up = u.copy()
            up[j] += step
            um = u.copy()
            um[j] -= step
            jac[:, j] = (_balance_residual(up, r_load, pv, dx)
                         - _balance_residual(um, r_load, pv, dx)) / (2.0 * step)
        try:
            du = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            raise NoEquilibrium("equilibrium Jacobian is singular") from None
        if not np.all(np.isfinite(du)):
            raise NoEquilibrium("equilibrium Newton step is not finite")

        alpha = 1.0
        improved = False
        for _ in range(40):
            trial = u + alpha * du
            g_try = _balance_residual(trial, r_load, pv, dx)
            n_try = np.max(np.abs(g_try)) if np.all(np.isfinite(g_try)) else np.inf
            if n_try < gnorm:
                u, g, gnorm = trial, g_try, n_try
                improved = True
                break
            alpha *= 0.5
        if not improved:
            raise NoEquilibrium("damped Newton made no progress")

    if gnorm <= tol:
        return np.array([u[0], u[1], u[2], u[3], u[4], u[5], 0.0])
    raise NoEquilibrium(f"no convergence in {max_iter} iterations")
