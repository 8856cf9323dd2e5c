"""DP-FTRL mathematical core: participation schemas, clipping, and correlated
noise from the matrix mechanism."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import RoundOutOfRange, SchemaViolation, SingularC

ONCE = "once"
MIN_SEPARATION = "min_separation"


@dataclass(frozen=True)
class ParticipationSchema:
    """Eligibility rule for per-client participation patterns.

    `once` permits a single round per client. `min_separation` requires gaps of
    at least `b` rounds between a client's submissions; b=1 permits every round.
    """

    variant: str = ONCE
    b: int = 1
    n_round: int = 1

    def __post_init__(self):
        if self.variant not in (ONCE, MIN_SEPARATION):
            raise ValueError(f"unknown schema variant {self.variant!r}")
        if self.b < 1:
            raise ValueError("b must be >= 1")

    def pattern_ok(self, pattern: set[int]) -> bool:
        """Whether one client's participation set is an admissible pattern."""
        if self.variant == ONCE:
            return len(pattern) <= 1
        rounds = sorted(pattern)
        return all(b2 - a >= self.b for a, b2 in zip(rounds, rounds[1:]))

    def client_qualifies(self, pattern: set[int], i: int) -> bool:
        if i in pattern:
            return False
        if self.variant == ONCE:
            return len(pattern) == 0
        return not pattern or i - max(pattern) >= self.b


def adheres_to(schema: ParticipationSchema, history: list[set[int]]) -> bool:
    return all(schema.pattern_ok(h) for h in history)


def f_qualify(schema: ParticipationSchema, history: list[set[int]], i: int) -> set[int]:
    """Maximal set of clients that can take round i without violating the schema."""
    if not 0 <= i < schema.n_round:
        raise RoundOutOfRange(f"round {i} outside [0, {schema.n_round})")
    return {j for j, h in enumerate(history) if schema.client_qualifies(h, i)}


def update_history(
    schema: ParticipationSchema, history: list[set[int]], cohort, i: int
) -> list[set[int]]:
    qualified = f_qualify(schema, history, i)
    bad = set(cohort) - qualified
    if bad:
        raise SchemaViolation(f"clients {sorted(bad)} not qualified for round {i}")
    return [h | {i} if j in cohort else set(h) for j, h in enumerate(history)]


def clip(v: np.ndarray, zeta: float) -> np.ndarray:
    """min(1, zeta/||v||) * v; the zero vector maps to itself."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return np.zeros_like(v)
    return min(1.0, zeta / norm) * v


@dataclass
class NoiseMatrix:
    """Lazily generated Gaussian noise, counter-based so access order cannot
    change values: row i always comes from a Philox stream keyed by (seed, i)."""

    seed: int
    sigma: float
    d: int
    _rows: dict = field(default_factory=dict, repr=False)

    def row(self, i: int) -> np.ndarray:
        if i not in self._rows:
            bits = np.random.Philox(key=self.seed & (2**64 - 1), counter=[0, i, 0, 0])
            rng = np.random.Generator(bits)
            self._rows[i] = self.sigma * rng.standard_normal(self.d)
        return self._rows[i]

    def entry(self, i: int, j: int) -> float:
        return float(self.row(i)[j])

    def block(self, n_rows: int) -> np.ndarray:
        return np.stack([self.row(i) for i in range(n_rows)])


class StrategyMatrix:
    """Lower-triangular invertible matrix defining the correlated-noise scheme."""

    def __init__(self, matrix: np.ndarray):
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("strategy matrix must be square")
        if not np.allclose(m, np.tril(m)):
            raise ValueError("strategy matrix must be lower-triangular")
        self.matrix = m

    @property
    def n_round(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, n_round: int) -> "StrategyMatrix":
        return cls(np.eye(n_round))

    @classmethod
    def prefix(cls, n_round: int) -> "StrategyMatrix":
        return cls(np.tril(np.ones((n_round, n_round))))

    @classmethod
    def from_csv(cls, path) -> "StrategyMatrix":
        return cls(np.loadtxt(path, delimiter=",", ndmin=2))

    @classmethod
    def preset(cls, name: str, n_round: int) -> "StrategyMatrix":
        if name == "identity":
            return cls.identity(n_round)
        if name == "prefix":
            return cls.prefix(n_round)
        return cls.from_csv(name)


def correlated_noise(
    Z: NoiseMatrix, C: StrategyMatrix, i: int, d: int, zeta: float
) -> np.ndarray:
    """Row i of zeta * C^-1 Z, by forward substitution on rows 0..i only."""
    if not 0 <= i < C.n_round:
        raise RoundOutOfRange(f"round {i} outside [0, {C.n_round})")
    if np.any(np.diag(C.matrix) == 0.0):
        raise SingularC("strategy matrix has a zero diagonal entry")
    if Z.d != d:
        raise ValueError("noise matrix dimension mismatch")
    block = C.matrix[: i + 1, : i + 1]
    solved = solve_triangular(block, Z.block(i + 1), lower=True)
    return zeta * solved[i]


@dataclass(frozen=True)
class ClientDataset:
    """Toy linear least-squares task: loss = sum_k (x_k . theta - y_k)^2."""

    X: np.ndarray
    y: np.ndarray

    @classmethod
    def synthetic(cls, seed: int, n_points: int, d: int) -> "ClientDataset":
        rng = np.random.Generator(np.random.Philox(key=seed & (2**64 - 1)))
        X = rng.standard_normal((n_points, d))
        theta_true = rng.standard_normal(d)
        y = X @ theta_true + 0.1 * rng.standard_normal(n_points)
        return cls(X=X, y=y)


def local_update(data: ClientDataset, theta: np.ndarray, zeta: float) -> np.ndarray:
    """Clipped gradient of the least-squares loss at theta."""
    theta = np.asarray(theta, dtype=np.float64)
    if data.X.size == 0:
        return np.zeros_like(theta)
    residual = data.X @ theta - data.y
    grad = 2.0 * data.X.T @ residual
    return clip(grad, zeta)
