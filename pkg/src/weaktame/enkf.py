"""Ensemble Kalman inversion with perturbed observations, linear forward map.

One discrete update per particle:

    u+ = u + h*Cup*(h*Cpp+Gamma)^-1 (y - G u) + sqrt(h)*Cup*(h*Cpp+Gamma)^-1 Gamma^(1/2) zeta

The state carries (mean, anomalies) rather than raw particles: the
two-particle reduction to the scalar weak-tamed scheme is a statement about
deviations from the mean, and carrying deviations makes their antisymmetry an
exact fixed point of the floating-point iteration. Noise enters the anomaly
update through pairwise centering, which is bitwise antisymmetric for J=2;
together with a scalar-division fast path for 1x1 solves, the reduced
q-sequence reproduces schemes.step(WEAK_TAMED_ENKF, ...) bit for bit.

States built with from_particles center at the rounded particle mean and are
not guaranteed to keep exact antisymmetry; the reduction identity is exact
for states whose anomalies are supplied directly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .brownian import standard_normals

__all__ = [
    "EnsembleState",
    "sym_sqrt",
    "cov_operators",
    "enkf_step",
    "run_chain",
    "reduce_to_q",
]


def _as_matrix(name: str, x, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise ValueError(f"{name} must have {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise ValueError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class EnsembleState:
    """Ensemble (mean, anomalies) plus the inverse-problem data it evolves under.

    particles = mean + anomalies row-wise. forward_map has shape (K, d) and
    acts as u -> forward_map @ u; observation lives in R^K; noise_cov is a
    symmetric positive-definite K x K matrix; h >= 0 (h = 0 is the documented
    no-op step).
    """

    mean: np.ndarray
    anomalies: np.ndarray
    forward_map: np.ndarray
    observation: np.ndarray
    noise_cov: np.ndarray
    h: float

    def __post_init__(self) -> None:
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        if mean.ndim != 1:
            raise ValueError(f"mean must be 1-d, got shape {mean.shape}")
        d = mean.shape[0]
        anomalies = _as_matrix("anomalies", self.anomalies, cols=d)
        if anomalies.shape[0] < 2:
            raise ValueError("need at least 2 ensemble members")
        forward_map = _as_matrix("forward_map", self.forward_map, cols=d)
        k = forward_map.shape[0]
        observation = np.ascontiguousarray(self.observation, dtype=np.float64)
        if observation.shape != (k,):
            raise ValueError(f"observation must have shape ({k},), got {observation.shape}")
        noise_cov = _as_matrix("noise_cov", self.noise_cov, rows=k, cols=k)
        h = float(self.h)
        if not np.isfinite(h) or h < 0.0:
            raise ValueError(f"h must be finite and nonnegative, got {h!r}")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "anomalies", anomalies)
        object.__setattr__(self, "forward_map", forward_map)
        object.__setattr__(self, "observation", observation)
        object.__setattr__(self, "noise_cov", noise_cov)
        object.__setattr__(self, "h", h)

    @property
    def n_members(self) -> int:
        return self.anomalies.shape[0]

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.forward_map.shape[0]

    @property
    def particles(self) -> np.ndarray:
        return self.mean + self.anomalies

    @classmethod
    def from_particles(
        cls, particles, forward_map, observation, noise_cov, h: float
    ) -> "EnsembleState":
        particles = _as_matrix("particles", particles)
        mean = particles.mean(axis=0)
        return cls(
            mean=mean,
            anomalies=particles - mean,
            forward_map=forward_map,
            observation=observation,
            noise_cov=noise_cov,
            h=h,
        )

    def spread(self) -> float:
        """Root mean squared anomaly norm."""
        return float(np.sqrt(np.mean(np.sum(self.anomalies**2, axis=1))))


def sym_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root of an SPD matrix via eigendecomposition."""
    matrix = _as_matrix("matrix", matrix)
    if matrix.shape[0] != matrix.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=0.0):
        raise ValueError("matrix must be exactly symmetric")
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    if eigenvalues.min() <= 0.0:
        raise ValueError(f"matrix is not positive definite (min eigenvalue {eigenvalues.min()})")
    return (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T


def cov_operators(state: EnsembleState) -> tuple[np.ndarray, np.ndarray]:
    """Empirical covariances (Cpp: K x K, Cup: d x K) with 1/J normalization.

    Built from the carried anomalies; for states constructed from particles
    this equals the about-the-mean formula up to one rounding of the mean.
    """
    mapped = state.anomalies @ state.forward_map.T  # (J, K)
    j = state.n_members
    cpp = (mapped.T @ mapped) / j
    cup = (state.anomalies.T @ mapped) / j
    return cpp, cup


def _gain(cpp: np.ndarray, cup: np.ndarray, noise_cov: np.ndarray, h: float) -> np.ndarray:
    """Kalman-style gain Cup (h Cpp + Gamma)^-1 via linear solve, no inversion."""
    system = h * cpp + noise_cov
    if system.shape == (1, 1):
        return cup / system[0, 0]  # keeps 1-d problems to a single division
    try:
        return np.linalg.solve(system, cup.T).T
    except np.linalg.LinAlgError as exc:  # pragma: no cover - SPD guard
        raise ValueError(f"singular innovation system: {exc}") from exc


def enkf_step(
    state: EnsembleState,
    perturbations: np.ndarray,
    _sqrt_noise: np.ndarray | None = None,
) -> EnsembleState:
    """One perturbed-observations update; one N(0,1) K-vector per member.

    run_chain passes the precomputed noise square root; direct callers get it
    computed on the fly.
    """
    perturbations = _as_matrix(
        "perturbations", perturbations, rows=state.n_members, cols=state.obs_dim
    )
    sqrt_noise = sym_sqrt(state.noise_cov) if _sqrt_noise is None else _sqrt_noise
    cpp, cup = cov_operators(state)
    gain = _gain(cpp, cup, state.noise_cov, state.h)
    h = state.h
    sqrt_h = np.sqrt(h)
    j = state.n_members

    innovation = state.observation - state.forward_map @ state.mean
    zeta_bar = perturbations.mean(axis=0)
    new_mean = (state.mean + gain @ (h * innovation)) + gain @ (
        sqrt_h * (sqrt_noise @ zeta_bar)
    )

    # Pairwise centering: delta_j = (1/J) sum_k (zeta_j - zeta_k). Equal to
    # zeta_j - zeta_bar in exact arithmetic, but bitwise antisymmetric for
    # J = 2, which the reduction identity needs.
    delta = (perturbations[:, None, :] - perturbations[None, :, :]).sum(axis=1) / j
    mapped = state.anomalies @ state.forward_map.T
    drift_term = (-(h * mapped)) @ gain.T
    noise_term = (sqrt_h * (delta @ sqrt_noise.T)) @ gain.T
    new_anomalies = (state.anomalies + drift_term) + noise_term
    return replace(state, mean=new_mean, anomalies=new_anomalies)


def run_chain(
    initial: EnsembleState, n_steps: int, seed: int, chain_index: int = 0
) -> list[EnsembleState]:
    """Iterate enkf_step n_steps times with replayable perturbations.

    Perturbations come from the same counter-based stream family as the
    Brownian module, keyed by (seed, chain_index), consumed in
    (step, member, component) order. Returns all n_steps+1 states.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    j, k = initial.n_members, initial.obs_dim
    draws = standard_normals(seed, chain_index, n_steps * j * k).reshape(n_steps, j, k)
    sqrt_noise = sym_sqrt(initial.noise_cov)
    states = [initial]
    current = initial
    for n in range(n_steps):
        current = enkf_step(current, draws[n], _sqrt_noise=sqrt_noise)
        states.append(current)
    return states


def reduce_to_q(state_sequence) -> np.ndarray:
    """Deviation coordinate q_n = u_n^(1) - mean_n for 2-member scalar ensembles."""
    out = np.empty(len(state_sequence), dtype=np.float64)
    for i, state in enumerate(state_sequence):
        if state.n_members != 2 or state.dim != 1:
            raise ValueError("reduction requires J=2 ensemble members and d=1")
        out[i] = state.anomalies[0, 0]
    return out
