"""Fixed-step RK4 integration of the generator model under a load step."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynmodel import N_STATES, _as_packed, _derivative, _network, steady_state
from .errors import SimulationBlewUp

STATE_LIMIT = 1e6  # any |state| beyond this counts as a blown-up run


@dataclass(frozen=True)
class LoadStepProfile:
    """Resistive load r_pre switching to r_post at the first grid point >= t_step."""

    r_pre: float  # pre-step load resistance (p.u.)
    r_post: float  # post-step load resistance (p.u.)
    t_step: float  # switch time (s)

    def __post_init__(self):
        if not (self.r_pre > 0.0 and self.r_post > 0.0):
            raise ValueError("load resistances must be positive")
        if not self.t_step >= 0.0:
            raise ValueError("t_step must be >= 0")

    @classmethod
    def from_power_fractions(cls, p_pre, p_post, t_step):
        """Build from load power fractions at rated voltage (r = V^2/P, V = 1)."""
        if not (p_pre > 0.0 and p_post > 0.0):
            raise ValueError("power fractions must be positive")
        return cls(1.0 / p_pre, 1.0 / p_post, t_step)


@dataclass(frozen=True)
class SimConfig:
    t_end: float = 5.0  # horizon (s)
    h: float = 1e-3  # integration step (s)
    sample_stride: int = 10  # emit every k-th grid point

    def __post_init__(self):
        if not self.t_end > 0.0:
            raise ValueError("t_end must be > 0")
        if not self.h > 0.0:
            raise ValueError("h must be > 0")
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ValueError("sample_stride must be a positive integer")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.h))

    def sample_times(self):
        idx = np.arange(0, self.n_steps + 1, self.sample_stride)
        return idx * self.h


@dataclass
class Trajectory:
    times: np.ndarray  # sample timestamps (s)
    outputs: np.ndarray  # (n_samples, 2): frequency p.u., terminal voltage p.u.
    final_state: np.ndarray  # full state at t_end


def rk4_update(f, t, x, h):
    """One classical RK4 step of dx/dt = f(t, x) for a generic system."""
    x = np.asarray(x, dtype=np.float64)
    k1 = np.asarray(f(t, x), dtype=np.float64)
    k2 = np.asarray(f(t + 0.5 * h, x + 0.5 * h * k1), dtype=np.float64)
    k3 = np.asarray(f(t + 0.5 * h, x + 0.5 * h * k2), dtype=np.float64)
    k4 = np.asarray(f(t + h, x + h * k3), dtype=np.float64)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True, nogil=True, error_model="numpy")
def _rk4_step(x, h, r_load, pv, k1, k2, k3, k4, xt, out):
    _derivative(x, r_load, pv, k1)
    for j in range(N_STATES):
        xt[j] = x[j] + 0.5 * h * k1[j]
    _derivative(xt, r_load, pv, k2)
    for j in range(N_STATES):
        xt[j] = x[j] + 0.5 * h * k2[j]
    _derivative(xt, r_load, pv, k3)
    for j in range(N_STATES):
        xt[j] = x[j] + h * k3[j]
    _derivative(xt, r_load, pv, k4)
    for j in range(N_STATES):
        out[j] = x[j] + (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


@njit(cache=True, nogil=True, error_model="numpy")
def _simulate(x0, pv, r_pre, r_post, h, n_steps, i_step, stride, limit):
    n_samp = n_steps // stride + 1
    times = np.empty(n_samp)
    outs = np.empty((n_samp, 2))
    x = x0.copy()
    nxt = np.empty(N_STATES)
    k1 = np.empty(N_STATES)
    k2 = np.empty(N_STATES)
    k3 = np.empty(N_STATES)
    k4 = np.empty(N_STATES)
    xt = np.empty(N_STATES)
    samp = 0
    for i in range(n_steps + 1):
        for j in range(N_STATES):
            v = x[j]
            if not np.isfinite(v) or abs(v) > limit:
                return times, outs, x, samp, 1, i * h
        r = r_pre if i < i_step else r_post
        if i % stride == 0:
            _, _, _, _, vt = _network(x[5], r, pv[19], pv[16], pv[17])
            times[samp] = i * h
            outs[samp, 0] = x[4]
            outs[samp, 1] = vt
            samp += 1
        if i == n_steps:
            break
        # the load input is held for the whole step so every RK4 stage
        # sees the same right-hand side
        _rk4_step(x, h, r, pv, k1, k2, k3, k4, xt, nxt)
        for j in range(N_STATES):
            x[j] = nxt[j]
    return times, outs, x, samp, 0, 0.0


def rk4_step(x, t, h, r_load, p):
    """One RK4 step of the generator model with the load held constant."""
    pv = _as_packed(p)
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(N_STATES)
    scratch = [np.empty(N_STATES) for _ in range(5)]
    _rk4_step(x, float(h), float(r_load), pv, *scratch, out)
    return out


def switch_index(profile, cfg):
    """First grid index at or after the switch time."""
    return int(math.ceil(profile.t_step / cfg.h - 1e-9))


def simulate(p, profile, cfg, x0=None):
    """Integrate a load-step test and return the sampled output channels.

    The initial state defaults to the pre-step equilibrium. Raises
    SimulationBlewUp with the first bad timestamp if any state becomes
    non-finite or exceeds the admissible magnitude.
    """
    pv = _as_packed(p)
    if x0 is None:
        x0 = steady_state(profile.r_pre, pv)
    else:
        x0 = np.asarray(x0, dtype=np.float64)
    times, outs, x, samp, status, t_fail = _simulate(
        x0, pv, float(profile.r_pre), float(profile.r_post),
        float(cfg.h), cfg.n_steps, switch_index(profile, cfg),
        int(cfg.sample_stride), STATE_LIMIT,
    )
    if status != 0:
        raise SimulationBlewUp(t_fail)
    return Trajectory(times=times, outputs=outs, final_state=x)
