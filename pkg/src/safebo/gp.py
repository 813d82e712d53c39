"""Gaussian process machinery over the extended domain X x {objective, constraint}.

Both the objective f and the safety constraint s are modeled jointly as one
latent function h(x, i) on the extended domain, with i selecting the channel.
The default kernel is block-diagonal across channels (independent GPs per
channel sharing one posterior object); a joint kernel can be plugged in via
the ExtendedKernel protocol.

Posteriors are immutable: conditioning returns a new object backed by a
bordered Cholesky factor, equivalent to a from-scratch rebuild.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cholesky, solve_triangular


class GPError(Exception):
    """Base error for posterior computations."""


class FactorizationError(GPError):
    """Covariance factorization failed even after jitter escalation."""

    def __init__(self, message: str, jitter: float):
        super().__init__(f"{message} (last jitter applied: {jitter:g})")
        self.jitter = jitter


class DegenerateCorrelationError(GPError):
    """Correlation requested at a point with (numerically) zero variance."""


class Channel(IntEnum):
    OBJECTIVE = 0
    CONSTRAINT = 1


@dataclass(frozen=True)
class ExtendedPoint:
    """A location in the extended domain: parameters plus output channel."""

    x: tuple[float, ...]
    channel: Channel

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        if self.channel not in (Channel.OBJECTIVE, Channel.CONSTRAINT):
            raise ValueError(f"channel must be 0 or 1, got {self.channel}")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.x, dtype=float)


@dataclass(frozen=True)
class KernelSpec:
    """Stationary RBF kernel: k(x, x') = outputscale * exp(-0.5 * sum ((dx/l)^2)).

    lengthscale may be a scalar or one positive value per input dimension.
    """

    lengthscale: float | tuple[float, ...]
    outputscale: float = 1.0
    family: str = "rbf"

    def __post_init__(self):
        if self.family != "rbf":
            raise ValueError(f"unsupported kernel family: {self.family}")
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        if np.any(ls <= 0):
            raise ValueError("lengthscale must be positive")
        if self.outputscale <= 0:
            raise ValueError("outputscale must be positive")

    def _scaled(self, X: np.ndarray) -> np.ndarray:
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        return np.atleast_2d(X) / ls

    def gram(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Kernel matrix between row-stacked point sets A (m,d) and B (k,d)."""
        As, Bs = self._scaled(A), self._scaled(B)
        # squared euclidean distances via the expanded form; clip tiny negatives
        d2 = (
            np.sum(As * As, axis=1)[:, None]
            + np.sum(Bs * Bs, axis=1)[None, :]
            - 2.0 * As @ Bs.T
        )
        np.clip(d2, 0.0, None, out=d2)
        return self.outputscale * np.exp(-0.5 * d2)

    def pair(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Elementwise k(A_i, B_i) for equal-length point sets."""
        As, Bs = self._scaled(A), self._scaled(B)
        d2 = np.sum((As - Bs) ** 2, axis=1)
        return self.outputscale * np.exp(-0.5 * d2)

    def diag(self, X: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(X).shape[0], self.outputscale)

    def normalized(self) -> "KernelSpec":
        """Copy with unit outputscale (so k <= 1 everywhere)."""
        return replace(self, outputscale=1.0)


@dataclass(frozen=True)
class ChannelKernels:
    """Per-channel kernels for the block-diagonal extended-domain default."""

    objective: KernelSpec
    constraint: KernelSpec

    @classmethod
    def shared(cls, spec: KernelSpec) -> "ChannelKernels":
        return cls(objective=spec, constraint=spec)

    def get(self, channel: int) -> KernelSpec:
        return self.objective if channel == Channel.OBJECTIVE else self.constraint


class BlockDiagonalKernel:
    """Extended-domain kernel with zero cross-channel covariance.

    k((x,i),(x',j)) = delta_ij * k_i(x, x'). This is the configuration the
    experiments use; cross-channel kernels can implement the same interface.
    """

    def __init__(self, kernels: ChannelKernels):
        self.kernels = kernels

    def gram(self, A: np.ndarray, cha: np.ndarray, B: np.ndarray, chb: np.ndarray) -> np.ndarray:
        out = np.zeros((len(A), len(B)))
        for ch in (Channel.OBJECTIVE, Channel.CONSTRAINT):
            ia = cha == ch
            ib = chb == ch
            if ia.any() and ib.any():
                out[np.ix_(ia, ib)] = self.kernels.get(ch).gram(A[ia], B[ib])
        return out

    def diag(self, X: np.ndarray, ch: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        for c in (Channel.OBJECTIVE, Channel.CONSTRAINT):
            m = ch == c
            if m.any():
                out[m] = self.kernels.get(c).diag(X[m])
        return out

    def pair(self, A: np.ndarray, cha: np.ndarray, B: np.ndarray, chb: np.ndarray) -> np.ndarray:
        out = np.zeros(len(A))
        same = cha == chb
        for c in (Channel.OBJECTIVE, Channel.CONSTRAINT):
            m = same & (cha == c)
            if m.any():
                out[m] = self.kernels.get(c).pair(A[m], B[m])
        return out


@dataclass(frozen=True)
class NoiseModel:
    """Observation-noise variance, constant or location dependent.

    variance is either a positive float (homoskedastic) or a callable mapping
    a batch of points (m,d) to positive variances (m,).
    """

    variance: float | Callable[[np.ndarray], np.ndarray]
    kind: str = "homoskedastic"

    def __post_init__(self):
        if self.kind not in ("homoskedastic", "heteroskedastic"):
            raise ValueError(f"unknown noise kind: {self.kind}")
        if self.kind == "homoskedastic" and not float(self.variance) > 0:
            raise ValueError("noise variance must be positive")

    @classmethod
    def homoskedastic(cls, variance: float) -> "NoiseModel":
        return cls(variance=float(variance), kind="homoskedastic")

    @classmethod
    def heteroskedastic(cls, fn: Callable[[np.ndarray], np.ndarray]) -> "NoiseModel":
        return cls(variance=fn, kind="heteroskedastic")

    def at(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "homoskedastic":
            return np.full(X.shape[0], float(self.variance))
        v = np.asarray(self.variance(X), dtype=float)
        if np.any(v <= 0):
            raise ValueError("heteroskedastic noise returned a non-positive variance")
        return v

    def at_point(self, x) -> float:
        return float(self.at(np.atleast_2d(x))[0])


@dataclass(frozen=True)
class Dataset:
    """Append-only record of extended-domain observations."""

    X: np.ndarray  # (n, d)
    channels: np.ndarray  # (n,) int
    y: np.ndarray  # (n,)
    noise_var: np.ndarray  # (n,)

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(
            X=np.zeros((0, dim)),
            channels=np.zeros(0, dtype=int),
            y=np.zeros(0),
            noise_var=np.zeros(0),
        )

    def __len__(self) -> int:
        return len(self.y)

    def __getitem__(self, i: int) -> tuple[ExtendedPoint, float, float]:
        return (
            ExtendedPoint(tuple(self.X[i]), Channel(int(self.channels[i]))),
            float(self.y[i]),
            float(self.noise_var[i]),
        )

    def append(self, x, channel: int, y: float, noise_var: float) -> "Dataset":
        if not noise_var > 0:
            raise ValueError("observation noise variance must be positive")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return Dataset(
            X=np.vstack([self.X, x[None, :]]) if len(self) else x[None, :],
            channels=np.append(self.channels, int(channel)),
            y=np.append(self.y, float(y)),
            noise_var=np.append(self.noise_var, float(noise_var)),
        )


_JITTER_BASE = 1e-10
_JITTER_RETRIES = 3


def _chol_with_jitter(K: np.ndarray, scale: float, what: str) -> tuple[np.ndarray, float]:
    """Cholesky with escalating diagonal jitter; raises FactorizationError."""
    jitter = 0.0
    for attempt in range(_JITTER_RETRIES + 1):
        try:
            L = cholesky(K + jitter * np.eye(len(K)) if jitter else K, lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        except Exception:
            pass
        jitter = _JITTER_BASE * scale * (10.0**attempt)
    raise FactorizationError(f"{what} is not positive definite", jitter)


class GaussianPosterior:
    """Immutable GP posterior over the extended domain with zero prior mean.

    Holds the dataset, the extended kernel and a cached Cholesky factor of
    (K + diag(noise)). Conditioning appends one bordered row to the factor;
    the result matches a from-scratch rebuild to fp accuracy.
    """

    def __init__(
        self,
        kernels: ChannelKernels,
        dim: int,
        data: Dataset | None = None,
        extended_kernel=None,
        _cache: tuple | None = None,
    ):
        self.kernels = kernels
        self.dim = int(dim)
        self.kernel = extended_kernel or BlockDiagonalKernel(kernels)
        self.data = data if data is not None else Dataset.empty(dim)
        if _cache is not None:
            self._L, self._w, self._jitter = _cache
        else:
            self._L, self._w, self._jitter = self._factorize(self.data)

    # -- construction ------------------------------------------------------

    @classmethod
    def prior(cls, kernels: ChannelKernels, dim: int) -> "GaussianPosterior":
        return cls(kernels, dim)

    def _scale(self) -> float:
        return max(self.kernels.objective.outputscale, self.kernels.constraint.outputscale)

    def _factorize(self, data: Dataset):
        n = len(data)
        if n == 0:
            return np.zeros((0, 0)), np.zeros(0), 0.0
        K = self.kernel.gram(data.X, data.channels, data.X, data.channels)
        K[np.diag_indices_from(K)] += data.noise_var
        L, jitter = _chol_with_jitter(K, self._scale(), "observation covariance")
        w = solve_triangular(L, data.y, lower=True)
        return L, w, jitter

    @classmethod
    def from_dataset(cls, kernels: ChannelKernels, dim: int, data: Dataset) -> "GaussianPosterior":
        """Batch (from scratch) conditioning on a whole dataset."""
        return cls(kernels, dim, data)

    def condition(self, x, channel: int, y: float, noise_var: float) -> "GaussianPosterior":
        """Return a new posterior conditioned on one extra observation."""
        data = self.data.append(x, channel, y, noise_var)
        n = len(self.data)
        if n == 0:
            return GaussianPosterior(self.kernels, self.dim, data, self.kernel)
        xa = np.atleast_2d(np.asarray(x, dtype=float))
        cha = np.array([int(channel)])
        k_vec = self.kernel.gram(self.data.X, self.data.channels, xa, cha)[:, 0]
        k_self = float(self.kernel.diag(xa, cha)[0]) + float(noise_var) + self._jitter
        b = solve_triangular(self._L, k_vec, lower=True)
        c2 = k_self - float(b @ b)
        if c2 <= 0:
            # border became indefinite; rebuild with the jitter policy
            return GaussianPosterior(self.kernels, self.dim, data, self.kernel)
        c = math.sqrt(c2)
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = self._L
        L[n, :n] = b
        L[n, n] = c
        w = np.append(self._w, (float(y) - float(b @ self._w)) / c)
        return GaussianPosterior(
            self.kernels, self.dim, data, self.kernel, _cache=(L, w, self._jitter)
        )

    def condition_point(self, p: ExtendedPoint, y: float, noise_var: float) -> "GaussianPosterior":
        return self.condition(p.array, p.channel, y, noise_var)

    # -- queries -----------------------------------------------------------

    def _cross_weights(self, X: np.ndarray, ch: np.ndarray) -> np.ndarray:
        """Q = L^{-1} K(data, query); (n, m)."""
        if len(self.data) == 0:
            return np.zeros((0, len(X)))
        Kq = self.kernel.gram(self.data.X, self.data.channels, X, ch)
        return solve_triangular(self._L, Kq, lower=True)

    def mean_var(self, X, channel: int) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at points X (m,d) on one channel."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ch = np.full(len(X), int(channel))
        prior = self.kernel.diag(X, ch)
        if len(self.data) == 0:
            return np.zeros(len(X)), prior
        Q = self._cross_weights(X, ch)
        mean = Q.T @ self._w
        var = np.clip(prior - np.einsum("ij,ij->j", Q, Q), 0.0, None)
        return mean, var

    def mean_var_point(self, p: ExtendedPoint) -> tuple[float, float]:
        m, v = self.mean_var(p.array[None, :], p.channel)
        return float(m[0]), float(v[0])

    def cov(self, A, cha: int, B, chb: int) -> np.ndarray:
        """Posterior covariance matrix between point sets A and B."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        ca = np.full(len(A), int(cha))
        cb = np.full(len(B), int(chb))
        prior = self.kernel.gram(A, ca, B, cb)
        if len(self.data) == 0:
            return prior
        Qa = self._cross_weights(A, ca)
        Qb = self._cross_weights(B, cb)
        return prior - Qa.T @ Qb

    def cov_pairs(self, A, cha: int, B, chb: int) -> np.ndarray:
        """Elementwise posterior covariance cov(h(A_i), h(B_i))."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        ca = np.full(len(A), int(cha))
        cb = np.full(len(B), int(chb))
        prior = self.kernel.pair(A, ca, B, cb)
        if len(self.data) == 0:
            return prior
        Qa = self._cross_weights(A, ca)
        Qb = self._cross_weights(B, cb)
        return prior - np.einsum("ij,ij->j", Qa, Qb)

    def correlation(self, a: ExtendedPoint, b: ExtendedPoint, tol: float = 1e-8) -> float:
        """Posterior correlation of h(a) and h(b); requires both variances > 0."""
        _, va = self.mean_var_point(a)
        _, vb = self.mean_var_point(b)
        if math.sqrt(max(va, 0.0)) <= tol or math.sqrt(max(vb, 0.0)) <= tol:
            raise DegenerateCorrelationError(
                "correlation undefined at a zero-variance point; treat the information gain as 0"
            )
        if a == b:
            return 1.0
        c = float(self.cov(a.array[None, :], a.channel, b.array[None, :], b.channel)[0, 0])
        rho = c / math.sqrt(va * vb)
        return float(np.clip(rho, -1.0, 1.0))

    def noise_correlation_factor(self, p: ExtendedPoint, noise_var: float) -> float:
        """sigma_n^2 / (sigma_n^2 + sigma_nu^2) at p; in [0, 1]."""
        if not noise_var > 0:
            raise ValueError("noise variance must be positive")
        _, v = self.mean_var_point(p)
        return float(v / (v + noise_var))

    @property
    def n_observations(self) -> int:
        return len(self.data)


def posterior_mean_var(gp: GaussianPosterior, p: ExtendedPoint) -> tuple[float, float]:
    """Operation-shaped wrapper around GaussianPosterior.mean_var_point."""
    return gp.mean_var_point(p)


def sample_prior_function(kernel: KernelSpec, grid, seed: int) -> np.ndarray:
    """Draw one prior sample at a finite set of points.

    Deterministic given the seed. Duplicate rows are factored out before the
    Cholesky so identical points always receive identical values.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    uniq, inverse = np.unique(grid, axis=0, return_inverse=True)
    K = kernel.gram(uniq, uniq)
    L, _ = _chol_with_jitter(K, kernel.outputscale, "prior Gram matrix")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(len(uniq))
    return (L @ z)[inverse]


def sample_prior_grid2d(
    kernel: KernelSpec, axis_x: np.ndarray, axis_y: np.ndarray, seed: int
) -> np.ndarray:
    """Draw one prior sample on a 2-D tensor grid, shape (len(axis_x), len(axis_y)).

    The RBF Gram matrix on a tensor grid is the Kronecker product of the
    per-axis Gram matrices, so the draw L1 @ G @ L2.T (G iid standard normal)
    has exactly the full grid covariance without forming it.
    """
    ls = np.atleast_1d(np.asarray(kernel.lengthscale, dtype=float))
    lsx = float(ls[0])
    lsy = float(ls[-1])
    k1 = KernelSpec(lengthscale=lsx, outputscale=1.0)
    k2 = KernelSpec(lengthscale=lsy, outputscale=1.0)
    ax = np.asarray(axis_x, dtype=float)[:, None]
    ay = np.asarray(axis_y, dtype=float)[:, None]
    L1, _ = _chol_with_jitter(k1.gram(ax, ax), 1.0, "axis-0 Gram matrix")
    L2, _ = _chol_with_jitter(k2.gram(ay, ay), 1.0, "axis-1 Gram matrix")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((len(ax), len(ay)))
    return math.sqrt(kernel.outputscale) * (L1 @ G @ L2.T)


class PosteriorQueryCache:
    """Incrementally maintained posterior statistics over fixed point sets.

    Registers static query sets (per channel) once, then updates mean/sd and
    optionally a cross-covariance block with O(n*m) work per conditioning
    step, instead of O(n^2 m) from-scratch solves. Must be advanced through
    the same chain of single-observation posteriors.
    """

    def __init__(self, gp: GaussianPosterior):
        self._gp = gp
        self._sets: dict[str, dict] = {}
        self._cov_blocks: dict[str, dict] = {}

    @property
    def gp(self) -> GaussianPosterior:
        return self._gp

    def add_set(self, name: str, X: np.ndarray, channel: int) -> None:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ch = np.full(len(X), int(channel))
        gp = self._gp
        Q = gp._cross_weights(X, ch)
        prior = gp.kernel.diag(X, ch)
        mean = Q.T @ gp._w if len(gp.data) else np.zeros(len(X))
        var = np.clip(prior - np.einsum("ij,ij->j", Q, Q), 0.0, None) if len(gp.data) else prior
        self._sets[name] = {"X": X, "ch": int(channel), "Q": Q, "mean": mean, "var": var}

    def add_cov_block(self, name: str, set_a: str, set_b: str) -> None:
        a, b = self._sets[set_a], self._sets[set_b]
        gp = self._gp
        ca = np.full(len(a["X"]), a["ch"])
        cb = np.full(len(b["X"]), b["ch"])
        prior = gp.kernel.gram(a["X"], ca, b["X"], cb)
        cov = prior - a["Q"].T @ b["Q"] if len(gp.data) else prior
        self._cov_blocks[name] = {"a": set_a, "b": set_b, "cov": cov}

    def advance(self, new_gp: GaussianPosterior) -> None:
        """Absorb a posterior produced by chained .condition() calls.

        Cholesky factors are nested, so the border rows of the new factor
        are replayed one at a time. A jitter change means the earlier rows
        were refactorized; the cache then rebuilds from scratch.
        """
        n_old = self._gp.n_observations
        n_new = new_gp.n_observations
        if n_new < n_old or new_gp._jitter != self._gp._jitter:
            self._rebuild(new_gp)
            return
        for k in range(n_old, n_new):
            b = new_gp._L[k, :k]
            c = new_gp._L[k, k]
            w_k = new_gp._w[k]
            x_new = new_gp.data.X[k][None, :]
            ch_new = np.array([new_gp.data.channels[k]])
            for s in self._sets.values():
                k_row = new_gp.kernel.gram(
                    x_new, ch_new, s["X"], np.full(len(s["X"]), s["ch"])
                )[0]
                q = (k_row - b @ s["Q"]) / c if k else k_row / c
                s["Q"] = np.vstack([s["Q"], q[None, :]])
                s["mean"] = s["mean"] + q * w_k
                s["var"] = np.clip(s["var"] - q * q, 0.0, None)
                s["_q_last"] = q
            for blk in self._cov_blocks.values():
                qa = self._sets[blk["a"]]["_q_last"]
                qb = self._sets[blk["b"]]["_q_last"]
                blk["cov"] = blk["cov"] - np.outer(qa, qb)
        self._gp = new_gp

    def _rebuild(self, new_gp: GaussianPosterior) -> None:
        self._gp = new_gp
        names = {n: (s["X"], s["ch"]) for n, s in self._sets.items()}
        blocks = {n: (b["a"], b["b"]) for n, b in self._cov_blocks.items()}
        self._sets.clear()
        self._cov_blocks.clear()
        for n, (X, ch) in names.items():
            self.add_set(n, X, ch)
        for n, (a, b) in blocks.items():
            self.add_cov_block(n, a, b)

    def mean_sd(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        s = self._sets[name]
        return s["mean"].copy(), np.sqrt(s["var"])

    def cov_block(self, name: str) -> np.ndarray:
        return self._cov_blocks[name]["cov"]

    def points(self, name: str) -> np.ndarray:
        return self._sets[name]["X"]
