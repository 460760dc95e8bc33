"""Numerical checks of the cosine-similarity bounds for block-Gaussian features.

Two vectors ``X, Y`` are i.i.d. ``N(mu e1, diag(sigma^2, Sigma_V))``.  The
expected cosine between them is bracketed by

    upper = (Phi(mu/sigma) - Phi(-mu/sigma))^2
    lower = (Phi((1-eps) mu/sigma) - Phi(-(1+eps) mu/sigma))^2 / (1 + tr(Sigma_V)/(eps mu)^2)

for every ``eps > 0``, and it increases with ``mu``.  The expectation is
estimated two independent ways: Monte Carlo in any dimension, and adaptive
quadrature of ``(E[X1/|X|])^2`` in two dimensions.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ConfigError, ContractError, NumericalError, ParseError

BOUNDS_HOLD = "bounds-hold"
VIOLATED_UPPER = "violated-upper"
VIOLATED_LOWER = "violated-lower"

DEFAULT_EPSILON_GRID = tuple(np.geomspace(1e-3, 1.0, 20))
MC_CHUNK = 1 << 16
QUAD_TOL = 1e-8
LEMMA_TOL = 1e-6

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def phi(x: float) -> float:
    """Standard normal CDF through the complementary error function."""
    return 0.5 * math.erfc(-x / _SQRT2)


@dataclass(frozen=True)
class GaussianSpec:
    mu: float
    sigma: float
    sigma_v_sq: float
    dim: int
    # per-axis variances of the perpendicular block; empty means isotropic
    perp_profile: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError("dim must be at least 2")
        if self.mu < 0 or self.sigma <= 0 or self.sigma_v_sq < 0:
            raise ConfigError("need mu >= 0, sigma > 0, sigma_v_sq >= 0")
        profile = tuple(float(v) for v in self.perp_profile) or (self.sigma_v_sq / (self.dim - 1),) * (self.dim - 1)
        if len(profile) != self.dim - 1:
            raise ConfigError(f"perp_profile needs {self.dim - 1} entries, got {len(profile)}")
        if any(v < 0 for v in profile):
            raise ConfigError("perpendicular variances must be non-negative")
        if abs(math.fsum(profile) - self.sigma_v_sq) > 1e-12:
            raise ConfigError("perp_profile must sum to sigma_v_sq")
        object.__setattr__(self, "perp_profile", profile)

    @property
    def stds(self) -> np.ndarray:
        return np.sqrt(np.array((self.sigma**2, *self.perp_profile)))


@dataclass(frozen=True)
class BoundReport:
    spec: GaussianSpec
    estimate: float
    stderr: float
    upper: float
    lower: float
    epsilon_star: float
    n_samples: int
    verdict: str


@dataclass(frozen=True)
class TheoremCheck:
    reports: list[BoundReport]
    # (index_lo, index_hi) pairs along a fixed-(sigma, sigma_v_sq, dim) slice whose order is violated
    monotonicity_violations: list[tuple[int, int]]

    @property
    def passed(self) -> bool:
        return not self.monotonicity_violations and all(r.verdict == BOUNDS_HOLD for r in self.reports)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def _draw(rng: np.random.Generator, n: int, mean: np.ndarray, stds: np.ndarray) -> np.ndarray:
    x = mean + stds * rng.standard_normal((n, mean.size))
    # measure-zero event: redraw exact zero vectors
    bad = ~np.any(x != 0.0, axis=1)
    while bad.any():
        x[bad] = mean + stds * rng.standard_normal((int(bad.sum()), mean.size))
        bad = ~np.any(x != 0.0, axis=1)
    return x


def _chunk_moments(spec: GaussianSpec, n: int, seed: int, index: int) -> tuple[int, float, float]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    mean = np.zeros(spec.dim)
    mean[0] = spec.mu
    stds = spec.stds
    x = _draw(rng, n, mean, stds)
    y = _draw(rng, n, mean, stds)
    cos = np.einsum("ij,ij->i", x, y) / (np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1))
    m = float(cos.mean())
    return n, m, float(((cos - m) ** 2).sum())


def _pool(parts) -> tuple[int, float, float]:
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:
        total = n + nb
        delta = mb - mean
        mean += delta * nb / total
        m2 += m2b + delta * delta * n * nb / total
        n = total
    return n, mean, m2


def mc_expected_cosine(spec: GaussianSpec, n_samples: int, seed: int, workers: int = 1) -> tuple[float, float]:
    """``(estimate, stderr)`` of ``E<X/|X|, Y/|Y|>``.

    The budget is cut into fixed-size chunks, chunk ``i`` seeded from
    ``(seed, i)``, and pooled in chunk order, so the result does not depend on
    how many workers run the chunks.
    """
    if n_samples < 1000:
        raise ContractError(f"n_samples must be at least 1000, got {n_samples}")
    sizes = [MC_CHUNK] * (n_samples // MC_CHUNK)
    if n_samples % MC_CHUNK:
        sizes.append(n_samples % MC_CHUNK)
    jobs = [(spec, n, seed, i) for i, n in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _chunk_moments(*a), jobs))
    else:
        parts = [_chunk_moments(*a) for a in jobs]
    n, mean, m2 = _pool(parts)
    return mean, math.sqrt(m2 / (n - 1)) / math.sqrt(n)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def _quad(fn, a, b, tol, points=None) -> float:
    pts = [p for p in (points or ()) if a < p < b] or None
    res = integrate.quad(fn, a, b, epsabs=tol, epsrel=0.0, limit=500, points=pts, full_output=1)
    value, err = res[0], res[1]
    if len(res) == 4 or not math.isfinite(value) or err > tol:
        raise NumericalError(f"quadrature on [{a}, {b}] did not reach {tol:g} (estimated error {err:g})")
    return value


def lemma1_f(y: float, mu: float, sigma: float, tol: float = QUAD_TOL) -> float:
    """``int x / sqrt(x^2 + y) exp(-(x - mu)^2 / 2 sigma^2) dx`` over the real line.

    Evaluated in the folded form on ``[0, inf)``; the Gaussian tails past
    ``mu + 40 sigma`` are below double precision and are dropped.
    """
    if y < 0 or mu < 0 or sigma <= 0:
        raise ContractError("need y >= 0, mu >= 0, sigma > 0")
    if mu == 0.0:
        return 0.0
    s2 = 2.0 * sigma * sigma
    if y == 0.0:
        def g(x):
            return math.exp(-((x - mu) ** 2) / s2) - math.exp(-((x + mu) ** 2) / s2)
    else:
        def g(x):
            return x / math.sqrt(x * x + y) * (math.exp(-((x - mu) ** 2) / s2) - math.exp(-((x + mu) ** 2) / s2))
    return _quad(g, 0.0, mu + 40.0 * sigma, tol, points=[math.sqrt(y), mu])


def quadrature_expected_cosine(spec: GaussianSpec, tol: float = QUAD_TOL) -> float:
    """Expected cosine at ``dim == 2`` as ``(E[X1/|X|])^2``.

    The perpendicular coordinate is ``V ~ N(0, sigma_v_sq)``, so
    ``E[X1/|X|] = E_V f(V^2) / (sigma sqrt(2 pi))`` with ``f`` from
    :func:`lemma1_f`.
    """
    if spec.dim != 2:
        raise ContractError("quadrature oracle is limited to dim == 2")
    norm = 1.0 / (spec.sigma * _SQRT2PI)
    if spec.sigma_v_sq == 0.0:
        a = norm * lemma1_f(0.0, spec.mu, spec.sigma, tol * 1e-2)
        return a * a
    sv = math.sqrt(spec.sigma_v_sq)
    inner_tol = tol * 1e-3

    def outer(v):
        density = 2.0 * math.exp(-0.5 * (v / sv) ** 2) / (sv * _SQRT2PI)
        return density * lemma1_f(v * v, spec.mu, spec.sigma, inner_tol)

    a = norm * _quad(outer, 0.0, 40.0 * sv, tol * 1e-2 * spec.sigma * _SQRT2PI, points=[sv])
    return a * a


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def theorem1_upper(mu: float, sigma: float) -> float:
    gap = phi(mu / sigma) - phi(-mu / sigma)
    return gap * gap


def theorem1_lower(mu: float, sigma: float, sigma_v_sq: float, epsilon: float) -> float:
    if mu <= 0:
        raise ContractError("the lower bound needs mu > 0")
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    gap = phi((1.0 - epsilon) * mu / sigma) - phi(-(1.0 + epsilon) * mu / sigma)
    return gap * gap / (1.0 + sigma_v_sq / (epsilon * epsilon * mu * mu))


def best_lower(mu: float, sigma: float, sigma_v_sq: float, epsilon_grid=DEFAULT_EPSILON_GRID) -> tuple[float, float]:
    """Largest lower bound over the grid; ties go to the smaller epsilon."""
    grid = sorted(float(e) for e in epsilon_grid)
    if not grid or grid[0] <= 0:
        raise ContractError("epsilon grid must be non-empty and positive")
    best, arg = -math.inf, grid[0]
    for eps in grid:
        v = theorem1_lower(mu, sigma, sigma_v_sq, eps)
        if v > best:
            best, arg = v, eps
    return best, arg


def verify_theorem1(specs: Sequence[GaussianSpec], n_samples: int = 1_000_000, seed: int = 0,
                    epsilon_grid=DEFAULT_EPSILON_GRID, workers: int = 1) -> TheoremCheck:
    """Bound containment per grid point plus monotonicity in ``mu`` along each slice.

    At ``mu == 0`` the lower bound is undefined; the trivial bound 0 is used
    and ``epsilon_star`` is NaN.
    """
    reports = []
    for k, spec in enumerate(specs):
        est, se = mc_expected_cosine(spec, n_samples, int(np.random.SeedSequence([seed, k]).generate_state(1)[0]), workers)
        upper = theorem1_upper(spec.mu, spec.sigma)
        if spec.mu > 0:
            lower, eps = best_lower(spec.mu, spec.sigma, spec.sigma_v_sq, epsilon_grid)
        else:
            lower, eps = 0.0, math.nan
        if est > upper + 3.0 * se:
            verdict = VIOLATED_UPPER
        elif est < lower - 3.0 * se:
            verdict = VIOLATED_LOWER
        else:
            verdict = BOUNDS_HOLD
        reports.append(BoundReport(spec, est, se, upper, lower, eps, n_samples, verdict))

    slices: dict[tuple, list[int]] = {}
    for k, spec in enumerate(specs):
        slices.setdefault((spec.sigma, spec.sigma_v_sq, spec.dim, spec.perp_profile), []).append(k)
    violations = []
    for idx in slices.values():
        idx = sorted(idx, key=lambda k: specs[k].mu)
        for a_pos, a in enumerate(idx):
            for b in idx[a_pos + 1:]:
                if specs[b].mu == specs[a].mu:
                    continue
                ra, rb = reports[a], reports[b]
                if rb.estimate < ra.estimate - 3.0 * math.hypot(ra.stderr, rb.stderr):
                    violations.append((a, b))
    return TheoremCheck(reports, violations)


@dataclass(frozen=True)
class LemmaReport:
    mu: float
    sigma: float
    y_grid: tuple[float, ...]
    values: tuple[float, ...]
    non_increasing: bool
    convex: bool

    @property
    def passed(self) -> bool:
        return self.non_increasing and self.convex


def verify_lemma1(mu: float, sigma: float, y_grid: Sequence[float],
                  f: Callable[[float], float] | None = None, tol: float = LEMMA_TOL) -> LemmaReport:
    """Discrete monotonicity and convexity of ``f`` over an ascending grid.

    Convexity is tested on the non-uniform grid by comparing each interior
    value with the chord through its neighbours.  ``f`` defaults to
    :func:`lemma1_f`; pass another callable to test the harness itself.
    """
    ys = [float(y) for y in y_grid]
    if len(ys) < 3 or any(b <= a for a, b in zip(ys, ys[1:])):
        raise ContractError("y_grid must be strictly ascending with at least 3 points")
    fn = f if f is not None else (lambda y: lemma1_f(y, mu, sigma))
    vals = [float(fn(y)) for y in ys]
    non_inc = all(vals[i] >= vals[i + 1] - tol for i in range(len(vals) - 1))
    convex = True
    for i in range(1, len(ys) - 1):
        lam = (ys[i + 1] - ys[i]) / (ys[i + 1] - ys[i - 1])
        chord = lam * vals[i - 1] + (1.0 - lam) * vals[i + 1]
        if chord - vals[i] < -tol:
            convex = False
    return LemmaReport(mu, sigma, tuple(ys), tuple(vals), non_inc, convex)


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ["mu", "sigma", "sigma_v_sq", "dim", "estimate", "stderr", "lower", "epsilon_star", "upper", "verdict"]


def default_grid() -> list[GaussianSpec]:
    return [
        GaussianSpec(mu, 1.0, sv, dim)
        for dim in (2, 8)
        for sv in (0.0, 1.0, 4.0)
        for mu in (0.0, 0.5, 1.0, 2.0, 4.0)
    ]


def load_grid(path) -> list[GaussianSpec]:
    """CSV with header ``mu,sigma,sigma_v_sq,dim``."""
    lines = Path(path).read_text().splitlines()
    if not lines or [c.strip() for c in lines[0].split(",")] != ["mu", "sigma", "sigma_v_sq", "dim"]:
        raise ParseError("grid header must be mu,sigma,sigma_v_sq,dim", line=1)
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = line.split(",")
        if len(cells) != 4:
            raise ParseError(f"expected 4 columns, got {len(cells)}", line=lineno)
        try:
            out.append(GaussianSpec(float(cells[0]), float(cells[1]), float(cells[2]), int(cells[3])))
        except (ValueError, ConfigError) as exc:
            raise ParseError(str(exc), line=lineno) from None
    return out


def write_reports(path, reports: Sequence[BoundReport]) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            s = r.spec
            w.writerow([f"{s.mu:.17g}", f"{s.sigma:.17g}", f"{s.sigma_v_sq:.17g}", s.dim,
                        f"{r.estimate:.17g}", f"{r.stderr:.17g}", f"{r.lower:.17g}",
                        f"{r.epsilon_star:.17g}", f"{r.upper:.17g}", r.verdict])
