"""Forward CTMC on {0,1}^D with unit bit-flip rates.

Every Hamming-1 neighbor is reachable at rate 1 and the generator diagonal
is -D, so the transition kernel factorizes over bits: over an interval of
length dt each bit flips independently with probability (1 - e^(-2 dt))/2.
Dense helpers (rate matrix, marginals, KL) follow the column convention
R[y, y'] = rate from y' to y and the little-endian state/index map from
:mod:`hyperbin.bits`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bits import (
    MAX_DENSE_BITS,
    all_states,
    hamming_to_rows,
    index_to_state,
    state_to_index,
    validate_state,
)

MAX_RATE_MATRIX_BITS = 12

DISTRIBUTION_ATOL = 1e-12


def flip_probability(dt: float | np.ndarray) -> float | np.ndarray:
    """Per-bit flip probability over an interval of length dt >= 0."""
    return 0.5 * -np.expm1(-2.0 * np.asarray(dt, dtype=np.float64))


def transition_prob(D: int, s: float, t: float, start: np.ndarray, end: np.ndarray) -> float:
    """Probability that the chain sits at `end` at time t given `start` at
    time s <= t. Product of per-bit stay/flip factors."""
    if t < s:
        raise ValueError(f"need t >= s, got s={s}, t={t}")
    start = validate_state(start, D)
    end = validate_state(end, D)
    pf = float(flip_probability(t - s))
    flips = int(np.count_nonzero(start != end))
    return pf**flips * (1.0 - pf) ** (D - flips)


def sample_forward(
    D: int, y0: np.ndarray, s: float, t: float, rng: np.random.Generator
) -> np.ndarray:
    """Advance a state (or batch) from time s to t by independent bit flips."""
    if t < s:
        raise ValueError(f"need t >= s, got s={s}, t={t}")
    y0 = np.asarray(y0, dtype=np.uint8)
    if y0.shape[-1] != D:
        raise ValueError(f"state has {y0.shape[-1]} bits, expected {D}")
    pf = float(flip_probability(t - s))
    flips = (rng.random(y0.shape) < pf).astype(np.uint8)
    return y0 ^ flips


@dataclass(frozen=True)
class EmpiricalInitial:
    """Weighted support of the time-0 distribution: states (n, D) with
    positive weights summing to one."""

    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=np.uint8))
        weights = np.asarray(self.weights, dtype=np.float64)
        if states.shape[0] != weights.shape[0]:
            raise ValueError("states and weights disagree on support size")
        if not np.isin(states, (0, 1)).all():
            raise ValueError("states must be 0/1 arrays")
        if (weights <= 0).any():
            raise ValueError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", weights)

    @property
    def n_bits(self) -> int:
        return self.states.shape[1]

    @classmethod
    def from_dataset(cls, states: np.ndarray) -> "EmpiricalInitial":
        """Aggregate a quantized dataset (N, D) into unique states with
        frequency weights."""
        states = np.atleast_2d(np.asarray(states, dtype=np.uint8))
        uniq, counts = np.unique(states, axis=0, return_counts=True)
        return cls(states=uniq, weights=counts / counts.sum())

    @classmethod
    def from_dense(cls, probs: np.ndarray) -> "EmpiricalInitial":
        probs = check_distribution(probs)
        D = int(np.log2(len(probs)))
        support = np.flatnonzero(probs > 0)
        return cls(states=index_to_state(support, D), weights=probs[support])

    def to_dense(self) -> np.ndarray:
        """Explicit 2^D probability vector (D <= MAX_DENSE_BITS)."""
        D = self.n_bits
        if D > MAX_DENSE_BITS:
            raise ValueError(f"dense vector needs D <= {MAX_DENSE_BITS}, got {D}")
        probs = np.zeros(1 << D)
        np.add.at(probs, state_to_index(self.states), self.weights)
        return probs


def check_distribution(probs: np.ndarray) -> np.ndarray:
    """Validate a dense probability vector over 2^D states."""
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.shape[0]
    if n < 2 or n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    if (probs < 0).any():
        raise ValueError("negative probability entry")
    if abs(probs.sum() - 1.0) > DISTRIBUTION_ATOL:
        raise ValueError(f"probabilities sum to {probs.sum()}, not 1")
    return probs


def marginal_at(initial: EmpiricalInitial, t: float) -> np.ndarray:
    """Dense marginal at time t >= 0 of the chain started from `initial`.

    Mixture of factorized kernel rows over the support; returns a
    normalized 2^D vector.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    D = initial.n_bits
    if D > MAX_DENSE_BITS:
        raise ValueError(f"dense marginal needs D <= {MAX_DENSE_BITS}, got {D}")
    pf = float(flip_probability(t))
    if pf == 0.0:
        return initial.to_dense()
    ham = hamming_to_rows(all_states(D), initial.states)
    kernel = pf**ham * (1.0 - pf) ** (D - ham)
    probs = kernel @ initial.weights
    return probs / probs.sum()


def dense_rate_matrix(D: int) -> np.ndarray:
    """Generator as a dense matrix: entry (y, y') is 1 when Ham(y, y') = 1,
    -D on the diagonal; columns sum to zero."""
    if D > MAX_RATE_MATRIX_BITS:
        raise ValueError(f"dense rate matrix needs D <= {MAX_RATE_MATRIX_BITS}, got {D}")
    n = 1 << D
    R = np.zeros((n, n))
    idx = np.arange(n)
    for j in range(D):
        R[idx ^ (1 << j), idx] = 1.0
    R[idx, idx] = -float(D)
    return R


def kl_to_uniform(probs: np.ndarray) -> float:
    """KL(p || uniform) in nats, with 0 ln 0 = 0."""
    probs = check_distribution(probs)
    nz = probs > 0
    p = probs[nz]
    return float(np.sum(p * np.log(p * probs.shape[0])))


def uniform_distribution(D: int) -> np.ndarray:
    return np.full(1 << D, 1.0 / (1 << D))


def point_mass(D: int, index: int) -> np.ndarray:
    probs = np.zeros(1 << D)
    probs[index] = 1.0
    return probs


def write_distribution_csv(path, probs: np.ndarray, header_lines: list[str] | None = None) -> None:
    """Serialize a dense distribution as (state_index, bitstring, prob) rows."""
    probs = check_distribution(probs)
    D = int(np.log2(len(probs)))
    states = all_states(D)
    with open(path, "w", newline="") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["state_index", "bitstring", "prob"])
        for i, p in enumerate(probs):
            writer.writerow([i, "".join(map(str, states[i])), repr(float(p))])


def read_distribution_csv(path) -> np.ndarray:
    entries = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "state_index":
                continue
            entries[int(row[0])] = float(row[2])
    n = max(entries) + 1
    probs = np.zeros(n)
    for i, p in entries.items():
        probs[i] = p
    return check_distribution(probs)
