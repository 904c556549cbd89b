"""Scenario registry and configuration loading.

A scenario is the pair (g, E) on an axis-aligned box, plus numerics.  Config
files are JSON documents with the schema::

    {
      "name": "warped_product",
      "n": 3,
      "r": 2,
      "metric": ["exp(2*x3)", "0", "0", "exp(2*x3)", "0", "1"],
      "frame": [["1", "0", "0"], ["0", "1", "0"]],
      "domain": {"lower": [-2, -2, -0.9], "upper": [2, 2, 0.9]},
      "numerics": {"h": 1e-3, "delta": 0.3, "eps": 0.5, "m": 9, "seed": 42}
    }

``metric`` lists the upper triangle of g row-major (g11, g12, .., g1n, g22,
..); ``frame`` lists the r spanning fields of E componentwise.  All numerics
fields are optional; ``h`` is the trajectory integrator step, ``h_grid`` the
step used for chart/leaf exponentials, and ``tolerances`` may override
individual check thresholds by id.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, FoliageError
from .expr import parse_expression
from .geometry import Box, DistributionSpec, MetricField, metric_at

__all__ = [
    "Numerics",
    "ScenarioConfig",
    "Scenario",
    "BUILTIN_SCENARIOS",
    "load_config",
    "get_scenario",
    "probe_points",
]


@dataclass(frozen=True)
class Numerics:
    h: float = 1e-3          # trajectory integrator step
    h_grid: float = 5e-2     # chart/leaf exponential step
    delta: float = 0.3       # chart radius
    eps: float = 0.5         # leaf parameter extent
    m: int = 9               # grid resolution per axis
    seed: int = 42
    tolerances: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    n: int
    r: int
    metric: tuple
    frame: tuple
    lower: tuple
    upper: tuple
    numerics: Numerics = field(default_factory=Numerics)
    involutive: bool = True  # registry annotation; verified by checks

    @property
    def center(self):
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))


class Scenario:
    """A validated, built scenario: parsed metric and distribution."""

    def __init__(self, config):
        c = config
        if not isinstance(c.n, int) or c.n < 1:
            raise ConfigError("n must be a positive integer")
        if not isinstance(c.r, int) or not 1 <= c.r <= c.n:
            raise ConfigError("r must satisfy 1 <= r <= n")
        if len(c.metric) != c.n * (c.n + 1) // 2:
            raise ConfigError(
                f"metric needs {c.n * (c.n + 1) // 2} upper-triangle entries, got {len(c.metric)}"
            )
        if len(c.frame) != c.r or any(len(row) != c.n for row in c.frame):
            raise ConfigError("frame must be an r x n array of expressions")
        try:
            box = Box(tuple(float(v) for v in c.lower), tuple(float(v) for v in c.upper))
        except ValueError as ex:
            raise ConfigError(f"domain: {ex}") from None
        if box.n != c.n:
            raise ConfigError("domain bounds must have n components")
        try:
            entries = [parse_expression(s, c.n) for s in c.metric]
            fields = [[parse_expression(s, c.n) for s in row] for row in c.frame]
        except FoliageError as ex:
            raise ConfigError(f"expression: {ex}") from None
        self.config = c
        self.g = MetricField(c.n, entries, box)
        self.E = DistributionSpec(c.n, fields)
        metric_at(self.g, c.center)  # SPD at box center
        self.E.values(c.center)      # independence at box center

    @property
    def name(self):
        return self.config.name

    @property
    def numerics(self):
        return self.config.numerics

    @property
    def center(self):
        return self.config.center


def _euclidean_metric(n):
    out = []
    for i in range(n):
        out.append("1")
        out.extend(["0"] * (n - 1 - i))
    return tuple(out)


BUILTIN_SCENARIOS = {
    "euclidean_planes": ScenarioConfig(
        name="euclidean_planes",
        n=3,
        r=2,
        metric=_euclidean_metric(3),
        frame=(("1", "0", "0"), ("0", "1", "0")),
        lower=(-2.0, -2.0, -2.0),
        upper=(2.0, 2.0, 2.0),
    ),
    "contact3d": ScenarioConfig(
        name="contact3d",
        n=3,
        r=2,
        metric=_euclidean_metric(3),
        frame=(("0", "1", "0"), ("1", "0", "x2")),
        lower=(-2.0, -2.0, -2.0),
        upper=(2.0, 2.0, 2.0),
        involutive=False,
    ),
    "sphere_foliation": ScenarioConfig(
        name="sphere_foliation",
        n=3,
        r=2,
        metric=_euclidean_metric(3),
        frame=(("0", "-x3", "x2"), ("x3", "0", "-x1")),
        lower=(-0.95, -0.95, 1.05),
        upper=(0.95, 0.95, 2.95),
    ),
    "warped_product": ScenarioConfig(
        name="warped_product",
        n=3,
        r=2,
        metric=("exp(2*x3)", "0", "0", "exp(2*x3)", "0", "1"),
        frame=(("1", "0", "0"), ("0", "1", "0")),
        lower=(-2.0, -2.0, -0.9),
        upper=(2.0, 2.0, 0.9),
    ),
    "full_tm": ScenarioConfig(
        name="full_tm",
        n=2,
        r=2,
        metric=("1", "0", "exp(2*x1)"),
        frame=(("1", "0"), ("0", "1")),
        lower=(-1.2, -1.2),
        upper=(1.2, 1.2),
    ),
    # 4d supplement: E involutive but E-perp is not, so the adapted connection
    # differs from Schouten-Van Kampen (impossible for the 3d built-ins, where
    # both splittings are involutive and the two connections coincide).
    "twisted4d": ScenarioConfig(
        name="twisted4d",
        n=4,
        r=2,
        metric=(
            "exp(2*x3)", "0", "0", "-x3*exp(2*x3)",
            "exp(2*x3)", "0", "0",
            "1", "0",
            "1 + x3^2*exp(2*x3)",
        ),
        frame=(("1", "0", "0", "0"), ("0", "1", "0", "0")),
        lower=(-1.0, -1.0, -0.8, -1.0),
        upper=(1.0, 1.0, 0.8, 1.0),
        numerics=Numerics(m=5),
    ),
}

INVOLUTIVE_BUILTINS = ("euclidean_planes", "sphere_foliation", "warped_product", "full_tm")


def load_config(path):
    """Load and validate a scenario config from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as ex:
        raise ConfigError(f"cannot read config: {ex}") from None
    except json.JSONDecodeError as ex:
        raise ConfigError(
            f"config parse error at line {ex.lineno}, column {ex.colno}: {ex.msg}"
        ) from None
    return config_from_dict(raw)


def config_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("n", "r", "metric", "frame", "domain"):
        if key not in raw:
            raise ConfigError(f"{key} required")
    domain = raw["domain"]
    if not isinstance(domain, dict) or "lower" not in domain or "upper" not in domain:
        raise ConfigError("domain must carry 'lower' and 'upper' bounds")
    numerics = dict(raw.get("numerics", {}))
    unknown = set(numerics) - {"h", "h_grid", "delta", "eps", "m", "seed", "tolerances"}
    if unknown:
        raise ConfigError(f"unknown numerics fields: {sorted(unknown)}")
    try:
        num = Numerics(**numerics)
    except TypeError as ex:
        raise ConfigError(f"numerics: {ex}") from None
    config = ScenarioConfig(
        name=str(raw.get("name", "unnamed")),
        n=raw["n"],
        r=raw["r"],
        metric=tuple(str(s) for s in raw["metric"]),
        frame=tuple(tuple(str(s) for s in row) for row in raw["frame"]),
        lower=tuple(domain["lower"]),
        upper=tuple(domain["upper"]),
        numerics=num,
    )
    return config


_SCENARIO_CACHE = {}


def get_scenario(name_or_path, seed=None, step=None):
    """Resolve a registry name or config-file path to a built Scenario."""
    if name_or_path in BUILTIN_SCENARIOS:
        config = BUILTIN_SCENARIOS[name_or_path]
    else:
        config = load_config(name_or_path)
    if seed is not None:
        config = replace(config, numerics=replace(config.numerics, seed=seed))
    if step is not None:
        config = replace(config, numerics=replace(config.numerics, h=step))
    key = (config.name, config.numerics.seed, config.numerics.h)
    cached = _SCENARIO_CACHE.get(key)
    if cached is not None and cached.config == config:
        return cached
    scenario = Scenario(config)
    _SCENARIO_CACHE[key] = scenario
    return scenario


def probe_points(scenario, count, seed=None):
    """Seeded uniform probe points over the domain box shrunk by 10% per axis."""
    num = scenario.numerics
    rng = np.random.default_rng(num.seed if seed is None else seed)
    box = scenario.g.domain.shrink(0.1)
    lo = np.asarray(box.lower)
    up = np.asarray(box.upper)
    return lo + rng.random((count, len(lo))) * (up - lo)
