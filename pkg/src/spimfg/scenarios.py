"""Scenario presets and the flat key/value configuration format.

A scenario is fully described by a flat parameter dictionary; presets are
such dictionaries and config files override their entries::

    # comments and blank lines are ignored
    scenario = test1
    I = 100
    dt = 0.01

Keys naming solver options (``algorithm``, ``rate``, ``tol``, ``max-iter``,
``q0``, ``seed``, ``compat-discrete-step4``) are accepted and left to the
CLI.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .coupling import BoundCoupling, Kernel, LocalCoupling, NonlocalCoupling
from .grid import BC, GridSpec, mass
from .hamiltonian import DEFAULT_CAP, HamiltonianSpec


class ScenarioError(ValueError):
    """Unknown preset, malformed config file or out-of-domain parameter."""


# Diffusion for the 1D tests. Their parameter lists leave it open, so the
# 2D test's value is reused.
SIGMA_1D = 0.25

PRESETS: dict[str, dict] = {
    "test1": dict(dim=1, lower=-1.0, upper=1.0, I=200, T=1.0, dt=0.005, bc="periodic",
                  sigma=SIGMA_1D, R=DEFAULT_CAP, coupling="nonlocal", kernel="sinpi",
                  theta=1.0, eta=0.2, zeta=0.0, potential="zero", m0="cosine"),
    "test3": dict(dim=1, lower=-1.0, upper=1.0, I=200, T=1.0, dt=0.005, bc="neumann",
                  sigma=SIGMA_1D, R=DEFAULT_CAP, coupling="nonlocal", kernel="gaussian",
                  theta=1.0, eta=0.2, zeta=0.2, potential="shifted_quadratic", m0="cosine"),
    # Reference grid h = dt = 0.01; the acceptance runs use h = dt = 0.02 for runtime.
    "test2d": dict(dim=2, lower=0.0, upper=1.0, I=100, T=0.5, dt=0.01, bc="neumann",
                   sigma=0.25, R=DEFAULT_CAP, coupling="local", coefficient=-1.5,
                   exponent=0.8, potential="cosine2d", m0="bump2d", terminal="bump2d"),
}
PRESETS["test2"] = {**PRESETS["test1"], "eta": -0.5}

SOLVER_KEYS = {"algorithm", "rate", "tol", "max-iter", "q0", "seed", "compat-discrete-step4", "out"}
_FLOAT_KEYS = {"lower", "upper", "T", "dt", "h", "sigma", "R", "theta", "eta", "zeta",
               "coefficient", "exponent"}
_INT_KEYS = {"dim", "I"}
_STR_KEYS = {"bc", "coupling", "kernel", "potential", "m0", "terminal"}


def _profile(name: str, coords: tuple[np.ndarray, ...]) -> np.ndarray:
    if name == "cosine":
        return 0.5 * (np.cos(np.pi * coords[0]) + 1.0)
    if name == "uniform":
        return np.ones_like(coords[0])
    if name == "bump2d":
        x1, x2 = coords
        return np.exp(-20 * (x1 - 0.2) ** 2) + np.exp(-20 * (x2 - 0.2) ** 2)
    raise ScenarioError(f"unknown initial density {name!r}")


def _potential(name: str, coords: tuple[np.ndarray, ...]) -> np.ndarray:
    if name == "zero":
        return np.zeros_like(coords[0])
    if name == "shifted_quadratic":
        return (coords[0] + 0.5) ** 2
    if name == "cosine2d":
        x1, x2 = coords
        return 5.0 * (np.cos(2 * np.pi * x1) + np.cos(2 * np.pi * x2))
    raise ScenarioError(f"unknown state potential {name!r}")


def _terminal(name: str, coords: tuple[np.ndarray, ...]) -> np.ndarray:
    if name == "bump2d":
        x1, x2 = coords
        return -2.0 * (np.exp(-10 * (x1 - 0.8) ** 2) + np.exp(-10 * (x2 - 0.8) ** 2))
    if name == "zero":
        return np.zeros_like(coords[0])
    raise ScenarioError(f"unknown terminal cost {name!r}")


@dataclass(frozen=True)
class Scenario:
    name: str
    params: dict = field(repr=False)

    @cached_property
    def grid(self) -> GridSpec:
        p = self.params
        steps = int(round(p["T"] / p["dt"]))
        if steps < 1 or not np.isclose(steps * p["dt"], p["T"], rtol=1e-9):
            raise ScenarioError(f"dt={p['dt']} does not divide the horizon T={p['T']}")
        d = p["dim"]
        return GridSpec.uniform([p["lower"]] * d, [p["upper"]] * d, [p["I"]] * d,
                                p["T"], steps, p["bc"])

    @property
    def sigma(self) -> float:
        return self.params["sigma"]

    @property
    def horizon(self) -> float:
        return self.params["T"]

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return self.grid.coordinates()

    @cached_property
    def hamiltonian(self) -> HamiltonianSpec:
        return HamiltonianSpec(_potential(self.params["potential"], self.coords), self.params["R"])

    @property
    def cap(self) -> float:
        return self.hamiltonian.cap

    @cached_property
    def coupling_spec(self) -> NonlocalCoupling | LocalCoupling:
        p = self.params
        if p["coupling"] == "nonlocal":
            return NonlocalCoupling(Kernel(p["kernel"]), p["theta"], p["eta"], p["zeta"])
        return LocalCoupling(p["coefficient"], p["exponent"],
                             _terminal(p.get("terminal", "zero"), self.coords))

    @cached_property
    def coupling(self) -> BoundCoupling:
        return self.coupling_spec.bind(self.grid)

    def initial_profile(self) -> np.ndarray:
        """The initial density formula at the nodes, before normalization."""
        return _profile(self.params["m0"], self.coords)

    @cached_property
    def m0(self) -> np.ndarray:
        return sample_initial_density(self)

    def with_overrides(self, **overrides) -> Scenario:
        return build_scenario(self.name, {**self.params, **overrides})


def sample_initial_density(scenario: Scenario) -> np.ndarray:
    """Initial density at the nodes, rescaled to unit discrete mass."""
    raw = scenario.initial_profile()
    return raw / mass(raw, scenario.grid)


def _coerce(key: str, value):
    try:
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _INT_KEYS:
            as_float = float(value)
            if as_float != int(as_float):
                raise ValueError
            return int(as_float)
    except (TypeError, ValueError):
        raise ScenarioError(f"bad value for {key}: {value!r}") from None
    if key in _STR_KEYS:
        return str(value).strip().lower()
    raise ScenarioError(f"unknown scenario parameter {key!r}")


def build_scenario(name: str, params: dict) -> Scenario:
    p = dict(params)
    if "h" in p:
        h = p.pop("h")
        intervals = (p["upper"] - p["lower"]) / h
        if not np.isclose(intervals, round(intervals), rtol=1e-9):
            raise ScenarioError(f"h={h} does not divide the domain length")
        p["I"] = int(round(intervals))
    if p["sigma"] <= 0:
        raise ScenarioError(f"sigma must be positive, got {p['sigma']}")
    if p["T"] <= 0 or p["dt"] <= 0:
        raise ScenarioError("T and dt must be positive")
    if p["R"] <= 0:
        raise ScenarioError("R must be positive")
    if p["bc"] not in {b.value for b in BC}:
        raise ScenarioError(f"unknown boundary condition {p['bc']!r}")
    if p["coupling"] not in ("nonlocal", "local"):
        raise ScenarioError(f"unknown coupling {p['coupling']!r}")
    if p["coupling"] == "nonlocal":
        if p["dim"] != 1:
            raise ScenarioError("nonlocal couplings are 1D only")
        if p["kernel"] not in {k.value for k in Kernel}:
            raise ScenarioError(f"unknown kernel {p['kernel']!r}")
        if p["kernel"] == "gaussian" and p["zeta"] <= 0:
            raise ScenarioError("Gaussian kernel needs zeta > 0")
    elif p["exponent"] <= 0:
        raise ScenarioError("local coupling exponent must be positive")
    scenario = Scenario(name, p)
    try:
        scenario.grid
        scenario.hamiltonian
        _profile(p["m0"], scenario.coords)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    if np.any(scenario.initial_profile() < 0):
        raise ScenarioError("initial density must be nonnegative")
    return scenario


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    entries: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ScenarioError(f"{path}:{lineno}: expected 'key = value'")
        entries[key.strip().lstrip("-")] = value.strip()
    return entries


def load_scenario(name_or_path: str, overrides: dict | None = None) -> Scenario:
    """Preset by name, or a config file naming a preset plus overrides."""
    overrides = dict(overrides or {})
    if name_or_path in PRESETS:
        base = name_or_path
    elif Path(name_or_path).is_file():
        entries = read_config(name_or_path)
        base = entries.pop("scenario", entries.pop("base", None))
        if base is None:
            raise ScenarioError(f"{name_or_path}: config must name a base 'scenario'")
        file_overrides = {k: v for k, v in entries.items() if k not in SOLVER_KEYS}
        overrides = {**file_overrides, **overrides}
    else:
        raise ScenarioError(f"unknown scenario {name_or_path!r} (presets: {sorted(PRESETS)})")
    if base not in PRESETS:
        raise ScenarioError(f"unknown base scenario {base!r}")
    params = dict(PRESETS[base])
    for key, value in overrides.items():
        params[key] = _coerce(key, value)
    return build_scenario(base, params)
