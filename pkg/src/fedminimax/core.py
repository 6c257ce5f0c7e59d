"""Shared domain types and the theory-derived hyperparameter schedules.

Everything here is a plain value type: safe to share across threads and
cheap to copy with ``dataclasses.replace``.
"""

from __future__ import annotations

from dataclasses import dataclass

ALGORITHMS = ("nsgda-m", "muon-da", "local-sgda-m", "sgda-clip")
NOISE_FAMILIES = ("symmetrized-pareto", "student-t", "gaussian", "none")


@dataclass(frozen=True)
class Shape:
    """Shape of one parameter block: a vector of dimension d or an m-by-n matrix.

    A vector of dimension d is interchangeable with a d-by-1 matrix; the
    orthonormalized (Muon) update path treats vectors as single-column
    matrices, in which case both reduce to plain L2 normalization.
    """

    kind: str  # "vector" | "matrix"
    dims: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in ("vector", "matrix"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        want = 1 if self.kind == "vector" else 2
        if len(self.dims) != want:
            raise ValueError(f"{self.kind} shape needs {want} dims, got {self.dims}")
        if any(int(d) != d or d < 1 for d in self.dims):
            raise ValueError(f"shape dims must be positive integers, got {self.dims}")

    @staticmethod
    def vector(d: int) -> "Shape":
        return Shape("vector", (int(d),))

    @staticmethod
    def matrix(m: int, n: int) -> "Shape":
        return Shape("matrix", (int(m), int(n)))

    @property
    def size(self) -> int:
        out = 1
        for d in self.dims:
            out *= d
        return out

    @property
    def cols(self) -> int:
        """Column count when viewed as a matrix; 1 for vectors."""
        return 1 if self.kind == "vector" else self.dims[1]

    def as_matrix(self) -> "Shape":
        """Promote a vector(d) to the equivalent d-by-1 matrix shape."""
        if self.kind == "matrix":
            return self
        return Shape.matrix(self.dims[0], 1)


@dataclass(frozen=True)
class SmoothnessInfo:
    """Analytic smoothness constants of a minimax problem.

    ``L_f`` is the Lipschitz constant of the gradient, ``mu`` the
    gradient-dominance constant of the inner maximization.  The condition
    number and the smoothness of the primal envelope are derived, never
    stored.
    """

    L_f: float
    mu: float

    def __post_init__(self):
        if not (self.L_f > 0):
            raise ValueError(f"L_f must be positive, got {self.L_f}")
        if not (self.mu > 0):
            raise ValueError(f"mu must be positive, got {self.mu}")

    @property
    def kappa(self) -> float:
        return self.L_f / self.mu

    @property
    def L_phi(self) -> float:
        return self.L_f + self.L_f**2 / self.mu


@dataclass(frozen=True)
class NoiseModel:
    """Heavy-tailed gradient-noise specification.

    The noise added to a stochastic gradient has mean zero and its norm
    satisfies E[norm^s] = sigma^s exactly (the radius distribution is
    rescaled analytically).  With ``tail_exponent < 2`` the variance is
    genuinely unbounded. ``family="none"`` disables noise entirely.

    ``seed_policy`` names the scheme used to derive one independent random
    stream per (master seed, client, round, local step); only "counter"
    (a counter-keyed splittable stream) is defined.
    """

    s: float = 2.0
    sigma: float = 0.0
    family: str = "none"
    tail_exponent: float | None = None
    seed_policy: str = "counter"

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        if not (1.0 < self.s <= 2.0):
            raise ValueError(f"tail index s must lie in (1, 2], got {self.s}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.family == "gaussian" and self.s != 2.0:
            raise ValueError("gaussian noise is only valid with s=2")
        if self.family == "none" and self.sigma != 0.0:
            raise ValueError("family 'none' forces sigma=0")
        if self.seed_policy != "counter":
            raise ValueError(f"unknown seed policy {self.seed_policy!r}")
        if self.tail_exponent is None:
            # midway between s and 2: moments up to s finite, variance infinite for s<2
            object.__setattr__(self, "tail_exponent", (self.s + 2.0) / 2.0)
        if self.family in ("symmetrized-pareto", "student-t") and not (self.tail_exponent > self.s):
            raise ValueError(
                f"tail_exponent must exceed s, got {self.tail_exponent} <= {self.s}"
            )


@dataclass(frozen=True)
class HyperParams:
    """All knobs of one federated run.

    ``gamma_*`` are the server (global) step sizes, ``eta_*`` the client
    (local) step sizes, ``beta_*`` the momentum mixing weights on the fresh
    stochastic gradient, ``p`` the local steps per communication round,
    ``T`` the number of rounds and ``N`` the client count.  ``tau`` is only
    used by the clipping baseline.  ``ns_iters``/``ns_mode`` control the
    orthonormalization inside the Muon-style update.
    """

    gamma_x: float
    gamma_y: float
    eta_x: float
    eta_y: float
    beta_x: float
    beta_y: float
    p: int
    T: int
    N: int
    tau: float = 0.1
    ns_iters: int = 10
    ns_mode: str = "iterative"
    zero_momentum_policy: str = "skip"

    def __post_init__(self):
        for name in ("gamma_x", "gamma_y", "eta_x", "eta_y", "tau"):
            v = getattr(self, name)
            if not (v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        for name in ("beta_x", "beta_y"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        for name in ("p", "T", "N", "ns_iters"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v}")
        if self.ns_mode not in ("iterative", "exact-svd"):
            raise ValueError(f"ns_mode must be 'iterative' or 'exact-svd', got {self.ns_mode!r}")
        if self.zero_momentum_policy not in ("skip", "error"):
            raise ValueError(
                f"zero_momentum_policy must be 'skip' or 'error', got {self.zero_momentum_policy!r}"
            )


def theorem1_schedule(
    N: int,
    p: int,
    T: int,
    smooth: SmoothnessInfo,
    c: tuple[float, float, float] = (1.0, 1.0, 1.0),
    **overrides,
) -> HyperParams:
    """Hyperparameters under which the normalized method attains its guaranteed rate.

    With kappa = L_f/mu, the schedule is

        gamma_x = c1 * (N*p)^(1/4) / (kappa * T^(3/4)),   gamma_y = 10*kappa*gamma_x,
        beta_x  = beta_y = min(1, c2 * sqrt(N*p / T)),
        eta_x   = eta_y  = c3 / (p * sqrt(T)).

    The 10*kappa ratio between the two server rates is fixed exactly (it is
    the constant the convergence analysis uses); beta is capped at 1 since
    the momentum recursion requires beta in (0, 1].  The scale constants
    ``c`` default to 1 and are user-tunable.  Extra keyword arguments
    (tau, ns_iters, ...) pass through to :class:`HyperParams`.
    """
    if int(N) != N or N < 1 or int(p) != p or p < 1 or int(T) != T or T < 1:
        raise ValueError(f"N, p, T must be positive integers, got {(N, p, T)}")
    c1, c2, c3 = c
    if not (c1 > 0 and c2 > 0 and c3 > 0):
        raise ValueError(f"scale constants must be positive, got {c}")
    kappa = smooth.kappa
    gamma_x = c1 * (N * p) ** 0.25 / (kappa * T**0.75)
    gamma_y = (10.0 * kappa) * gamma_x
    beta = min(1.0, c2 * (N * p) ** 0.5 / T**0.5)
    eta = c3 / (p * T**0.5)
    return HyperParams(
        gamma_x=gamma_x,
        gamma_y=gamma_y,
        eta_x=eta,
        eta_y=eta,
        beta_x=beta,
        beta_y=beta,
        p=int(p),
        T=int(T),
        N=int(N),
        **overrides,
    )


def theorem2_schedule(
    N: int,
    p: int,
    T: int,
    smooth: SmoothnessInfo,
    c: tuple[float, float, float] = (1.0, 1.0, 1.0),
    **overrides,
) -> HyperParams:
    """Schedule for the orthonormalized (Muon-style) method.

    Identical functional form to :func:`theorem1_schedule`; the guarantee
    for the matrix update has the same orders in N, p, T and kappa.
    """
    return theorem1_schedule(N, p, T, smooth, c, **overrides)
