"""Probabilistic phase synchronization: the per-node step-counter chain.

The chain lives on {HOLD, 0, 1, ..., phi-1}: from HOLD it stays put or moves
to 0 with equal probability (one coin per round), then climbs the ladder
deterministically and falls back to HOLD after phi-1.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from importlib import resources

import numpy as np


class _Hold:
    __slots__ = ()

    def __repr__(self):
        return "HOLD"


HOLD = _Hold()

_HOLD_CODE = -1  # array encoding used by the vectorized chain runners


def state_space(phi: int) -> tuple:
    return (HOLD, *range(phi))


@dataclass
class PpsState:
    step: object  # HOLD or int in [0, phi)
    phi: int

    def __post_init__(self):
        if self.phi < 2:
            raise ValueError(f"phase length must be >= 2, got {self.phi}")
        if self.step is not HOLD and not (0 <= self.step < self.phi):
            raise ValueError(f"step {self.step!r} outside state space")


def get_step(s: PpsState):
    return s.step


def step_counter(s: PpsState, rng: random.Random) -> PpsState:
    """One chain transition; consumes one coin iff the state is HOLD."""
    if s.step is HOLD:
        if rng.getrandbits(1):
            return PpsState(0, s.phi)
        return PpsState(HOLD, s.phi)
    if s.step == s.phi - 1:
        return PpsState(HOLD, s.phi)
    return PpsState(s.step + 1, s.phi)


def advance_step(step, phi: int, rng: random.Random):
    """Raw-value variant of step_counter used in the hot simulation loop."""
    if step is HOLD:
        return 0 if rng.getrandbits(1) else HOLD
    if step == phi - 1:
        return HOLD
    return step + 1


def random_step(phi: int, rng: random.Random):
    """Uniform draw from the state space (adversary corruption)."""
    k = rng.randrange(phi + 1)
    return HOLD if k == 0 else k - 1


def transition_matrix(phi: int) -> np.ndarray:
    """Row-stochastic matrix over the state order (HOLD, 0, ..., phi-1)."""
    n = phi + 1
    p = np.zeros((n, n))
    p[0, 0] = 0.5
    p[0, 1] = 0.5
    for j in range(phi - 1):
        p[1 + j, 2 + j] = 1.0
    p[phi, 0] = 1.0
    return p


def stationary_distribution(phi: int) -> np.ndarray:
    """Exact stationary vector: 2/(phi+2) on HOLD, 1/(phi+2) elsewhere."""
    pi = np.full(phi + 1, 1.0 / (phi + 2))
    pi[0] = 2.0 / (phi + 2)
    return pi


def _run_chains(phi: int, rounds: int, starts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Advance many chains in lockstep; states encoded with HOLD = -1."""
    states = starts.copy()
    for _ in range(rounds):
        held = states == _HOLD_CODE
        n_held = int(held.sum())
        if n_held:
            exits = rng.integers(0, 2, size=n_held, dtype=np.int8)
            new_held = np.where(exits == 1, 0, _HOLD_CODE).astype(states.dtype)
        ladder = states >= 0
        states[ladder] += 1
        states[states == phi] = _HOLD_CODE
        if n_held:
            states[held] = new_held
    return states


def _spread_starts(phi: int, samples: int) -> np.ndarray:
    """Initial states covering the whole space as evenly as possible."""
    n = phi + 1
    per = samples // n
    rem = samples % n
    chunks = [
        np.full(per + (1 if i < rem else 0), i - 1, dtype=np.int8) for i in range(n)
    ]
    return np.concatenate(chunks)


def mixing_profile(
    phi: int, warmup_rounds: int, samples: int, seed: int = 0
) -> dict:
    """Empirical state distribution after ``warmup_rounds`` transitions.

    Chains start evenly from every initial state.  Returns per-state
    frequency and binomial standard error, keyed by HOLD and 0..phi-1.
    """
    if warmup_rounds < 1 or samples < 1:
        raise ValueError("warmup_rounds and samples must be >= 1")
    rng = np.random.default_rng(seed)
    final = _run_chains(phi, warmup_rounds, _spread_starts(phi, samples), rng)
    result = {}
    for code, state in [(_HOLD_CODE, HOLD)] + [(j, j) for j in range(phi)]:
        freq = float((final == code).sum()) / samples
        stderr = float(np.sqrt(freq * (1 - freq) / samples))
        result[state] = (freq, stderr)
    return result


def phase_start_profile(phi: int, tau: int, chains: int, seed: int = 0) -> dict:
    """Empirical Pr(step = 0 after tau rounds) from each initial state."""
    rng = np.random.default_rng(seed)
    out = {}
    for code, state in [(_HOLD_CODE, HOLD)] + [(j, j) for j in range(phi)]:
        starts = np.full(chains, code, dtype=np.int8)
        final = _run_chains(phi, tau, starts, rng)
        out[state] = float((final == 0).sum()) / chains
    return out


# -- calibration of the phase-start time tau --


def calibrate_tau(phi: int) -> int:
    """Smallest t with Pr(step_t = 0 | step_0 = j) >= 1/(2 phi) for all j.

    Computed exactly from powers of the transition matrix; the bound holds
    for all later t as well (verified up to a safety horizon).  Requires
    phi >= 3: at phi = 2 the stationary mass on state 0 equals 1/(2 phi)
    exactly, so the bound is attained only in the limit.
    """
    if phi < 3:
        raise ValueError("tau calibration needs phi >= 3")
    p = transition_matrix(phi)
    bound = 1.0 / (2 * phi)
    pt = np.eye(phi + 1)
    horizon = 50 * phi**3
    t = 0
    candidate = None
    while t < horizon:
        t += 1
        pt = pt @ p
        if pt[:, 1].min() >= bound:
            if candidate is None:
                candidate = t
        else:
            candidate = None
        if candidate is not None and t >= candidate + 4 * phi:
            return candidate
    raise RuntimeError(f"calibration did not converge for phi={phi}")


def load_calibration() -> dict[int, int]:
    """Frozen tau values from the repo calibration file."""
    text = resources.files("stabsim").joinpath("calibration.json").read_text()
    data = json.loads(text)
    return {int(k): int(v) for k, v in data["tau"].items()}


def tau_for(phi: int) -> int:
    table = load_calibration()
    if phi in table:
        return table[phi]
    return calibrate_tau(phi)
