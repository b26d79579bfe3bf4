"""
Finite-difference solver for du = (theta/2) u'' dt + b(u) dt + dW on [-L, L]
with zero Dirichlet boundaries and zero initial condition.

Time stepping is implicit in the diffusion (Crank-Nicolson by default, backward
Euler on request) and explicit in drift and noise:

    (I - r Lap) u^{n+1} = (I + r' Lap) u^n + dt b(u^n) + sqrt(dt/dx) xi^n

The tridiagonal left-hand side is factored once with `cholesky_banded` and each
step is a multi right-hand-side `cho_solve_banded`, one column per replicate.
"""

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from src.core.config import Config
from src.models.params import ModelParams, TimeGrid
from src.sheq.errors import DomainError, GridMismatchError, SchemeError
from src.sheq.gaussian_sim import STREAM_FIELD, PathKind, PathSample, SeedSpec

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"SHEQFLD\x01"
# replicate columns advanced together; bounds the streamed noise block
FIELD_BATCH = 32


class Scheme(str, Enum):
    CRANK_NICOLSON = "crank_nicolson"
    BACKWARD_EULER = "backward_euler"


@dataclass(frozen=True)
class FieldGridSpec:
    """
    Truncated space-time grid.

    Nodes x_j = -L + j dx, j = 0..J, dx = 2L/J; simulation step dt = 1/S;
    observations every S/obs_N steps at the node x_obs.
    """

    obs_N: int
    half_width: float = 5.0
    cells: int = 1024
    steps_per_unit: int | None = None
    x_obs: float = 0.0
    scheme: Scheme = Scheme.CRANK_NICOLSON

    def __post_init__(self):
        if self.steps_per_unit is None:
            object.__setattr__(self, "steps_per_unit", 64 * self.obs_N)
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        TimeGrid(self.obs_N)
        if not self.half_width > 0:
            raise DomainError(f"half_width must be positive, got {self.half_width}")
        if self.cells < 2:
            raise DomainError(f"need at least 2 spatial cells, got {self.cells}")
        if self.steps_per_unit < 1 or self.steps_per_unit % self.obs_N != 0:
            raise DomainError(
                f"steps per unit time ({self.steps_per_unit}) must be a positive multiple of obs_N ({self.obs_N})"
            )
        position = (self.x_obs + self.half_width) / self.dx
        if abs(position - round(position)) > 1e-9 or not 0 < round(position) < self.cells:
            raise DomainError(f"x_obs={self.x_obs} is not an interior grid node")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.cells

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_unit

    @property
    def steps_per_observation(self) -> int:
        return self.steps_per_unit // self.obs_N

    @property
    def n_interior(self) -> int:
        return self.cells - 1

    @property
    def obs_node(self) -> int:
        """Index of x_obs among the interior nodes (0-based)."""
        return int(round((self.x_obs + self.half_width) / self.dx)) - 1

    def check_truncation(self, theta: float):
        if self.half_width < 4.0 * math.sqrt(theta):
            logger.warning(
                "Spatial truncation below diffusion length",
                extra={"half_width": self.half_width, "theta": theta},
            )


@dataclass
class FieldState:
    """Field on all J+1 nodes (boundaries included) after `step` steps."""

    values: np.ndarray
    step: int


def _laplacian(u: np.ndarray, dx: float) -> np.ndarray:
    """Second difference along axis 0 with zero Dirichlet boundaries."""
    lap = -2.0 * u
    lap[1:] += u[:-1]
    lap[:-1] += u[1:]
    return lap / (dx * dx)


class FieldSolver:
    """
    Advances R replicate columns of the interior field together.

    drift_mask selects the columns the drift acts on; masked-out columns follow
    the linear equation, which is how coupled linear/semilinear pairs share one
    noise realization.
    """

    def __init__(
        self,
        spec: FieldGridSpec,
        params: ModelParams,
        replicates: int = 1,
        initial: np.ndarray | None = None,
        drift_mask: np.ndarray | None = None,
        snapshot_path: str | Path | None = None,
        snapshot_every: int = 0,
    ):
        self.spec = spec
        self.params = params
        self.step = 0
        n = spec.n_interior
        self.u = np.zeros((n, replicates))
        if initial is not None:
            initial = np.asarray(initial, dtype=np.float64)
            if initial.shape != (spec.cells + 1,):
                raise DomainError(f"initial field needs {spec.cells + 1} nodes, got {initial.shape}")
            self.u[:] = initial[1:-1, None]
        self.drift_mask = (
            np.ones(replicates, dtype=bool) if drift_mask is None else np.asarray(drift_mask, dtype=bool)
        )
        self.noise_scale = math.sqrt(spec.dt / spec.dx)

        if spec.scheme is Scheme.CRANK_NICOLSON:
            self.r_implicit = params.theta * spec.dt / 4.0
            self.r_explicit = params.theta * spec.dt / 4.0
        else:
            self.r_implicit = params.theta * spec.dt / 2.0
            self.r_explicit = 0.0

        coupling = self.r_implicit / (spec.dx * spec.dx)
        banded = np.empty((2, n))
        banded[0, 0] = 0.0
        banded[0, 1:] = -coupling
        banded[1, :] = 1.0 + 2.0 * coupling
        try:
            self._factor = cholesky_banded(banded, lower=False)
        except LinAlgError as e:
            raise SchemeError(f"tridiagonal factorization failed: {e}") from e

        self._snapshot_file = None
        self.snapshot_every = snapshot_every
        if snapshot_path is not None and snapshot_every > 0:
            self._open_snapshot(Path(snapshot_path))

    def _open_snapshot(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        header = asdict(self.spec)
        header["scheme"] = self.spec.scheme.value
        header.update(theta=self.params.theta, drift=self.params.drift.label(), snapshot_every=self.snapshot_every)
        encoded = json.dumps(header, sort_keys=True).encode("utf-8")
        self._snapshot_file = open(path, "wb")
        self._snapshot_file.write(SNAPSHOT_MAGIC)
        self._snapshot_file.write(struct.pack("<I", len(encoded)))
        self._snapshot_file.write(encoded)
        self._write_snapshot_row()
        logger.info("Field snapshots enabled", extra={"path": str(path), "every": self.snapshot_every})

    def _write_snapshot_row(self):
        self._snapshot_file.write(self.state(0).values.astype("<f8").tobytes())

    def close(self):
        if self._snapshot_file is not None:
            self._snapshot_file.close()
            self._snapshot_file = None

    def advance(self, noise: np.ndarray | None, steps: int | None = None):
        """
        Run `steps` time steps; noise has shape (steps, n_interior, R) of standard
        normals, or is None for the deterministic equation.
        """
        if noise is not None:
            steps = noise.shape[0]
        elif steps is None:
            raise DomainError("steps is required when no noise is given")
        dx, dt = self.spec.dx, self.spec.dt
        drift = self.params.drift
        apply_drift = not drift.is_zero and bool(self.drift_mask.any())

        for k in range(steps):
            rhs = self.u.copy()
            if self.r_explicit:
                rhs += self.r_explicit * _laplacian(self.u, dx)
            if apply_drift:
                rhs[:, self.drift_mask] += dt * drift(self.u[:, self.drift_mask])
            if noise is not None:
                rhs += self.noise_scale * noise[k]
            self.u = cho_solve_banded((self._factor, False), rhs, check_finite=False)
            self.step += 1
            if self._snapshot_file is not None and self.step % self.snapshot_every == 0:
                self._write_snapshot_row()

        if not np.all(np.isfinite(self.u)):
            raise SchemeError(f"non-finite field after step {self.step}")

    def observe(self) -> np.ndarray:
        return self.u[self.spec.obs_node].copy()

    def mass(self) -> np.ndarray:
        return self.u.sum(axis=0) * self.spec.dx

    def state(self, column: int = 0) -> FieldState:
        values = np.zeros(self.spec.cells + 1)
        values[1:-1] = self.u[:, column]
        return FieldState(values=values, step=self.step)


def read_snapshot(path: str | Path) -> tuple[dict, np.ndarray]:
    """Header and (saved steps, J+1) field rows of a snapshot dump."""
    raw = Path(path).read_bytes()
    if not raw.startswith(SNAPSHOT_MAGIC):
        raise DomainError(f"{path} is not a field snapshot")
    offset = len(SNAPSHOT_MAGIC)
    (length,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    header = json.loads(raw[offset : offset + length].decode("utf-8"))
    rows = np.frombuffer(raw, dtype="<f8", offset=offset + length)
    return header, rows.reshape(-1, header["cells"] + 1)


def _noise_block(generators: list[np.random.Generator], steps: int, n: int) -> np.ndarray:
    return np.stack([g.standard_normal((steps, n)) for g in generators], axis=-1)


def _run_batch(
    spec: FieldGridSpec,
    params: ModelParams,
    master_seed: int,
    start: int,
    stop: int,
    coupled: bool,
    snapshot_path: str | Path | None = None,
    snapshot_every: int = 0,
) -> np.ndarray:
    """
    Observation paths for replicates start..stop-1.

    Returns shape (R, obs_N+1), or (2, R, obs_N+1) for coupled runs where [0]
    carries the drift and [1] is the linear solution on the same noise.
    """
    R = stop - start
    out = np.zeros((2 if coupled else 1, R, spec.obs_N + 1))
    p = spec.steps_per_observation
    n = spec.n_interior

    for lo in range(0, R, FIELD_BATCH):
        hi = min(lo + FIELD_BATCH, R)
        width = hi - lo
        generators = [
            SeedSpec(master_seed, start + r, STREAM_FIELD).generator() for r in range(lo, hi)
        ]
        mask = np.concatenate([np.ones(width, bool), np.zeros(width, bool)]) if coupled else None
        solver = FieldSolver(
            spec,
            params,
            replicates=2 * width if coupled else width,
            drift_mask=mask,
            snapshot_path=snapshot_path if lo == 0 else None,
            snapshot_every=snapshot_every,
        )
        try:
            for obs in range(1, spec.obs_N + 1):
                block = _noise_block(generators, p, n)
                if coupled:
                    block = np.concatenate([block, block], axis=-1)
                solver.advance(block)
                values = solver.observe()
                if coupled:
                    out[0, lo:hi, obs] = values[:width]
                    out[1, lo:hi, obs] = values[width:]
                else:
                    out[0, lo:hi, obs] = values
        finally:
            solver.close()
    return out if coupled else out[0]


def _snapshot_target(seed: SeedSpec, snapshot_path, every: int) -> Path | None:
    if every <= 0:
        return None
    if snapshot_path is not None:
        return Path(snapshot_path)
    return Path(Config.OUTPUT_DIR) / f"field_{seed.master_seed}_{seed.replicate}.bin"


def simulate_field_batch(
    spec: FieldGridSpec, params: ModelParams, master_seed: int, start: int, stop: int
) -> np.ndarray:
    spec.check_truncation(params.theta)
    return _run_batch(spec, params, master_seed, start, stop, coupled=False)


def simulate_coupled_batch(
    spec: FieldGridSpec, params: ModelParams, master_seed: int, start: int, stop: int
) -> tuple[np.ndarray, np.ndarray]:
    """(u paths, u0 paths) of replicates start..stop-1 driven by shared noise."""
    spec.check_truncation(params.theta)
    both = _run_batch(spec, params, master_seed, start, stop, coupled=True)
    return both[0], both[1]


def simulate_field(
    spec: FieldGridSpec,
    params: ModelParams,
    seed: SeedSpec,
    snapshot_path: str | Path | None = None,
    snapshot_every: int | None = None,
) -> PathSample:
    """
    One scheme path u(t_i, x_obs), i = 0..obs_N.

    Field snapshots are written every `snapshot_every` steps (default
    Config.SNAPSHOT_EVERY, 0 disables them).
    """
    every = Config.SNAPSHOT_EVERY if snapshot_every is None else snapshot_every
    spec.check_truncation(params.theta)
    values = _run_batch(
        spec,
        params,
        seed.master_seed,
        seed.replicate,
        seed.replicate + 1,
        coupled=False,
        snapshot_path=_snapshot_target(seed, snapshot_path, every),
        snapshot_every=every,
    )[0]
    return PathSample(values=values, grid=TimeGrid(spec.obs_N), kind=PathKind.SEMILINEAR_SCHEME, seed=seed)


def simulate_coupled(spec: FieldGridSpec, params: ModelParams, seed: SeedSpec) -> tuple[PathSample, PathSample]:
    u_paths, u0_paths = simulate_coupled_batch(spec, params, seed.master_seed, seed.replicate, seed.replicate + 1)
    grid = TimeGrid(spec.obs_N)
    return (
        PathSample(values=u_paths[0], grid=grid, kind=PathKind.SEMILINEAR_SCHEME, seed=seed),
        PathSample(values=u0_paths[0], grid=grid, kind=PathKind.SEMILINEAR_SCHEME, seed=seed),
    )


def decompose_path(u_path: PathSample, u0_path: PathSample) -> PathSample:
    """Remainder X = u - u0 of a coupled pair."""
    if u_path.grid != u0_path.grid:
        raise GridMismatchError(f"grids differ: N={u_path.N} vs N={u0_path.N}")
    if u_path.seed is not None and u0_path.seed is not None and u_path.seed != u0_path.seed:
        raise GridMismatchError("paths were driven by different noise realizations")
    return PathSample(
        values=u_path.values - u0_path.values,
        grid=u_path.grid,
        kind=PathKind.SEMILINEAR_SCHEME,
        seed=u_path.seed,
    )


def scheme_temporal_covariance(spec: FieldGridSpec, theta: float) -> np.ndarray:
    """
    Exact covariance of (u(t_i, x_obs))_{i=1..obs_N} produced by the linear scheme.

    The interior Dirichlet Laplacian is diagonal in the sine basis, so every
    mode is an independent AR(1) u_m <- g_m u_m + eta_m.
    """
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    J, n = spec.cells, spec.n_interior
    dx, dt = spec.dx, spec.dt
    m = np.arange(1, n + 1, dtype=np.float64)
    lam = -(4.0 / dx**2) * np.sin(math.pi * m / (2.0 * J)) ** 2
    node = spec.obs_node + 1
    weight = (2.0 / J) * np.sin(math.pi * m * node / J) ** 2

    if spec.scheme is Scheme.CRANK_NICOLSON:
        r = theta * dt / 4.0
        g = (1.0 + r * lam) / (1.0 - r * lam)
        one_minus_g = -2.0 * r * lam / (1.0 - r * lam)
        innovation = (dt / dx) / (1.0 - r * lam) ** 2
    else:
        r = theta * dt / 2.0
        g = 1.0 / (1.0 - r * lam)
        one_minus_g = -r * lam / (1.0 - r * lam)
        innovation = (dt / dx) * g * g

    p = spec.steps_per_observation
    steps = p * np.arange(1, spec.obs_N + 1)
    # mode variance after k steps from zero: innovation (1 - g^(2k)) / (1 - g^2)
    positive = g > 0
    decay = np.empty((n, steps.size))
    log_g = np.log(np.where(positive, g, 1.0))
    decay[positive] = -np.expm1(2.0 * np.outer(log_g[positive], steps))
    decay[~positive] = 1.0 - np.power.outer(g[~positive], 2 * steps)
    variance = (innovation / (one_minus_g * (1.0 + g)))[:, None] * decay

    N = spec.obs_N
    cov = np.zeros((N, N))
    for lag in range(N):
        coeff = weight * np.power(g, lag * p)
        diag = coeff @ variance[:, : N - lag]
        idx = np.arange(N - lag)
        cov[idx, idx + lag] = diag
        cov[idx + lag, idx] = diag
    return cov


def temporal_holder_exponent(paths: np.ndarray, lags=(1, 2, 4, 8, 16)) -> float:
    """
    Fitted exponent H in E|v(t + l h) - v(t)|^2 ~ (l h)^(2H), pooled over
    replicates and start times.
    """
    paths = np.atleast_2d(np.asarray(paths, dtype=np.float64))
    lags = [int(lag) for lag in lags if 0 < lag < paths.shape[1]]
    if len(lags) < 2:
        raise DomainError("need at least two admissible lags")
    msq = np.array([np.mean((paths[:, lag:] - paths[:, :-lag]) ** 2) for lag in lags])
    if np.any(msq <= 0):
        raise DomainError("path increments vanish; exponent undefined")
    slope, _ = np.polyfit(np.log(lags), np.log(msq), 1)
    return float(slope / 2.0)
