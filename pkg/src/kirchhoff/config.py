"""TOML problem configuration: parsing, validation, and construction of
grids, perturbations and solver settings.

Config files are human-edited; every validation failure names the field
path that caused it.  The KIRCHHOFF_SEED environment variable overrides
the configured random seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .constants import KirchhoffParams, critical_exponent
from .functional import PerturbationSpec
from .radial import RadialGrid, field_from_callable, make_grid, read_field_csv
from .solvers import SolverConfig


class ConfigError(ValueError):
    """Malformed configuration; the message carries the offending field path."""


def _g_sin(t):
    return np.sin(np.asarray(t))


def _g_tanh(t):
    return np.tanh(np.asarray(t))


def _make_g_power(q: float):
    def g(t):
        t = np.asarray(t)
        return np.abs(t) ** (q - 1.0) * np.sign(t)

    return g


# name -> (builder(cfg_section) -> (g, (M, q)))
_G_REGISTRY = {
    "sin": lambda sec: (_g_sin, (1.0, 2.0)),
    "tanh": lambda sec: (_g_tanh, (1.0, 2.0)),
    "power": lambda sec: (
        _make_g_power(float(sec.get("g_q", 2.5))),
        (float(sec.get("g_M", 1.0)), float(sec.get("g_q", 2.5))),
    ),
}


def _get(section: dict, key: str, path: str, cast, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"{path}.{key}: required field is missing")
        return default
    try:
        return cast(section[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.{key}: {exc}") from None


@dataclass(frozen=True)
class SourceSpec:
    """Source-term section for the threshold subcommands: either the power
    nonlinearity F = |t|^p / p or the separable alpha0 |t|^q / q form."""

    p: float
    alpha0: float
    t0: float
    sigma: Optional[float]
    cutoff_radius: Optional[float]


@dataclass(frozen=True)
class ProblemConfig:
    dimension: int
    radius: float
    grid_n: int
    grid_spacing: str
    grid_ratio: float
    grid_include: tuple
    params: KirchhoffParams
    h_const: Optional[float]
    h_file: Optional[str]
    lam: float
    p: float
    mu: float
    g_name: str
    g_section: dict
    solver: SolverConfig
    source: Optional[SourceSpec]
    out_result: Optional[str]
    out_field: Optional[str]

    def build_grid(self, include=()) -> RadialGrid:
        extra = tuple(self.grid_include) + tuple(include)
        return make_grid(
            self.dimension,
            self.radius,
            self.grid_n,
            spacing=self.grid_spacing,
            ratio=self.grid_ratio,
            include=extra,
        )

    def build_pert(self, grid: RadialGrid) -> PerturbationSpec:
        h = None
        if self.h_file is not None:
            h = read_field_csv(self.h_file, grid=grid, dirichlet=False)
        elif self.h_const is not None:
            c = self.h_const
            h = field_from_callable(grid, lambda r: np.full_like(r, c), dirichlet=False)
        g = None
        g_bound = None
        if self.g_name != "none":
            g, g_bound = _G_REGISTRY[self.g_name](self.g_section)
        return PerturbationSpec(
            h=h, lam=self.lam, p=self.p, mu=self.mu, g=g, g_bound=g_bound
        )


def load_config(path) -> ProblemConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    return parse_config(raw)


def parse_config(raw: dict) -> ProblemConfig:
    problem = raw.get("problem", {})
    dimension = _get(problem, "dimension", "problem", int, required=True)
    if dimension < 4:
        raise ConfigError("problem.dimension: must be an integer >= 4")
    radius = _get(problem, "radius", "problem", float, default=1.0)
    if radius <= 0.0:
        raise ConfigError("problem.radius: must be positive")

    grid = raw.get("grid", {})
    grid_n = _get(grid, "n", "grid", int, default=200)
    if grid_n < 8:
        raise ConfigError("grid.n: must be at least 8 elements")
    spacing = _get(grid, "spacing", "grid", str, default="uniform")
    if spacing not in ("uniform", "graded"):
        raise ConfigError("grid.spacing: must be 'uniform' or 'graded'")
    ratio = _get(grid, "ratio", "grid", float, default=1.05)
    if spacing == "graded" and ratio <= 1.0:
        raise ConfigError("grid.ratio: graded spacing needs ratio > 1")
    include = grid.get("include", [])
    if not isinstance(include, list):
        raise ConfigError("grid.include: must be a list of radii")
    include = tuple(float(x) for x in include)
    if any(not 0.0 < x <= radius for x in include):
        raise ConfigError("grid.include: entries must lie in (0, radius]")

    par = raw.get("params", {})
    a = _get(par, "a", "params", float, required=True)
    b = _get(par, "b", "params", float, required=True)
    if a <= 0.0:
        raise ConfigError("params.a: must be positive")
    if b <= 0.0:
        raise ConfigError("params.b: must be positive")
    params = KirchhoffParams(a=a, b=b)

    pert = raw.get("perturbation", {})
    h_const = _get(pert, "h", "perturbation", float)
    h_file = _get(pert, "h_file", "perturbation", str)
    if h_const is not None and h_file is not None:
        raise ConfigError("perturbation.h and perturbation.h_file are mutually exclusive")
    if h_const is not None and h_const <= 0.0:
        raise ConfigError("perturbation.h: the datum must be positive")
    lam = _get(pert, "lambda", "perturbation", float, default=0.0)
    if lam < 0.0:
        raise ConfigError("perturbation.lambda: must be nonnegative")
    p = _get(pert, "p", "perturbation", float, default=3.0)
    two_star = critical_exponent(dimension)
    if lam > 0.0 and not 2.0 < p < two_star:
        raise ConfigError(
            f"perturbation.p: must lie in (2, 2*) = (2, {two_star:.6g}) for "
            f"dimension {dimension}"
        )
    mu = _get(pert, "mu", "perturbation", float, default=0.0)
    if mu < 0.0:
        raise ConfigError("perturbation.mu: must be nonnegative")
    g_name = _get(pert, "g", "perturbation", str, default="none")
    if g_name not in ("none", *_G_REGISTRY):
        raise ConfigError(
            f"perturbation.g: unknown selector {g_name!r}; "
            f"expected one of none, {', '.join(_G_REGISTRY)}"
        )
    if mu > 0.0 and g_name == "none":
        raise ConfigError("perturbation.mu: positive mu needs a g selector")

    sol = raw.get("solver", {})
    seed = _get(sol, "seed", "solver", int, default=1512)
    env_seed = os.environ.get("KIRCHHOFF_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(
                f"KIRCHHOFF_SEED: not an integer: {env_seed!r}"
            ) from None
    try:
        solver = SolverConfig(
            tol=_get(sol, "tol", "solver", float, default=1e-8),
            max_iter=_get(sol, "max_iter", "solver", int, default=10_000),
            starts=_get(sol, "starts", "solver", int, default=10),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None

    source = None
    if "source" in raw:
        src = raw["source"]
        sp = _get(src, "p", "source", float, default=p if lam > 0.0 else 3.0)
        if not 2.0 < sp < two_star:
            raise ConfigError(
                f"source.p: must lie in (2, 2*) = (2, {two_star:.6g})"
            )
        alpha0 = _get(src, "alpha0", "source", float, default=1.0)
        if alpha0 <= 0.0:
            raise ConfigError("source.alpha0: must be positive")
        t0 = _get(src, "t0", "source", float, default=1.0)
        if t0 <= 0.0:
            raise ConfigError("source.t0: must be positive")
        sigma = _get(src, "sigma", "source", float)
        if sigma is not None and not 0.0 < sigma < 1.0:
            raise ConfigError("source.sigma: must lie in (0, 1)")
        cutoff_radius = _get(src, "cutoff_radius", "source", float)
        if cutoff_radius is not None and not 0.0 < cutoff_radius < radius:
            raise ConfigError(
                "source.cutoff_radius: must lie strictly inside the ball radius"
            )
        source = SourceSpec(
            p=sp, alpha0=alpha0, t0=t0, sigma=sigma, cutoff_radius=cutoff_radius
        )

    out = raw.get("output", {})
    return ProblemConfig(
        dimension=dimension,
        radius=radius,
        grid_n=grid_n,
        grid_spacing=spacing,
        grid_ratio=ratio,
        grid_include=include,
        params=params,
        h_const=h_const,
        h_file=h_file,
        lam=lam,
        p=p,
        mu=mu,
        g_name=g_name,
        g_section=dict(pert),
        solver=solver,
        source=source,
        out_result=_get(out, "result", "output", str),
        out_field=_get(out, "field", "output", str),
    )
