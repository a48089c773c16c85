"""Run configuration: a sectioned INI file, validated completely at load time.

Every problem found is collected as a ``(field, value, constraint)`` triple
and raised together in one ``ConfigError``.  Field sources (initial data,
source, control, targets) are one of

* a number                   -> constant field
* ``file:<path>``            -> ``.npy`` array, path relative to the config file
* anything else              -> expression in ``x``, ``y``, ``t`` (see ``expr``)
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CHControlError, ConfigError
from .expr import Expression
from .geometry import Grid, TimeGrid
from .optimizer import ControlBounds, OptimizeConfig
from .potentials import VARIANTS, PotentialSpec, validate_compatibility
from .sensitivity import ADJOINT_MODES, CostData
from .state import InitialData, NewtonConfig, PhysicalParams

OUTPUT_ROOT_ENV = "CHCONTROL_OUTPUT_ROOT"

POSITIVE_CONSTANTS = "structural constants gamma, a, b, kappa1, kappa2, lam must be positive"
BOUNDS_ORDER = "u_min <= u_max at every node"
WEIGHTS = "cost weights alpha1..alpha6 and nu must be nonnegative and not all zero"
COMPATIBLE = "initial order parameter and source must stay strictly inside (-1, 1) for the logarithmic potential"

# section -> key -> default (as text, exactly as it would appear in a file)
DEFAULTS: dict[str, dict[str, str]] = {
    "grid": {"dim": "1", "length": "1.0", "n": "64"},
    "time": {"T": "0.5", "steps": "128"},
    "physics": {"gamma": "1.0", "a": "0.1", "b": "0.5", "kappa1": "1.0", "kappa2": "1.0", "lam": "1.0"},
    "potential": {"variant": "regular", "c1": "2.0", "clip": "1e-9"},
    "initial": {"phi0": "0", "w0": "0", "w1": "0"},
    "source": {"f": "0"},
    "control": {"u": "0", "u_min": "-10", "u_max": "10"},
    "cost": {
        "alpha1": "1", "alpha2": "0", "alpha3": "0", "alpha4": "0", "alpha5": "0", "alpha6": "0", "nu": "1e-2",
        "phi_Q": "0", "w_Q": "0", "wdot_Q": "0", "phi_Omega": "0", "w_Omega": "0", "wdot_Omega": "0",
    },
    "optimize": {"max_iters": "200", "sigma": "1e-4", "rho": "0.5", "initial_step": "1.0", "tol": "1e-4"},
    "newton": {"tol": "1e-10", "max_iter": "50", "max_halvings": "30"},
    "run": {
        "name": "run", "output_root": "runs", "stride": "1", "adjoint_mode": "transpose",
        "direction": "1 + cos(pi*x) + t*cos(2*pi*x)", "eps_list": "1e-2 1e-3 1e-4 1e-5 1e-6",
    },
}


@dataclass
class Source:
    """Where a field comes from: a constant, an expression or an ``.npy`` file."""

    text: str
    base_dir: Path = Path(".")

    @property
    def kind(self) -> str:
        s = self.text.strip()
        if s.startswith("file:"):
            return "file"
        try:
            float(s)
            return "constant"
        except ValueError:
            return "expression"

    def validate(self):
        if self.kind == "expression":
            Expression(self.text)
        elif self.kind == "file" and not self.path.is_file():
            raise FileNotFoundError(str(self.path))

    @property
    def path(self) -> Path:
        p = Path(self.text.strip()[len("file:"):].strip())
        return p if p.is_absolute() else self.base_dir / p

    def field(self, grid: Grid, t: float = 0.0) -> np.ndarray:
        if self.kind == "constant":
            return np.full(grid.shape, float(self.text))
        if self.kind == "file":
            return grid.check(np.load(self.path), str(self.path))
        coords = grid.coordinates()
        y = coords[1] if grid.dim == 2 else 0.0
        return np.array(np.broadcast_to(Expression(self.text)(coords[0], y, t), grid.shape), dtype=float)

    def series(self, grid: Grid, tgrid: TimeGrid) -> np.ndarray:
        if self.kind == "file":
            return grid.check_series(np.load(self.path), tgrid, str(self.path))
        return np.stack([self.field(grid, t) for t in tgrid.times])


@dataclass
class RunConfig:
    path: Path | None
    name: str
    grid: Grid
    tgrid: TimeGrid
    params: PhysicalParams
    spec: PotentialSpec
    init: InitialData
    f: np.ndarray
    u: np.ndarray
    bounds: ControlBounds
    cost: CostData
    optimize: OptimizeConfig
    newton: NewtonConfig
    adjoint_mode: str
    output_root: Path
    stride: int
    direction: np.ndarray
    eps_list: list[float]
    resolved: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.resolved, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_steps(self, steps: int) -> "RunConfig":
        """The same configuration on a different number of time steps."""
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser.read_dict(self.resolved)
        parser["time"]["steps"] = str(int(steps))
        return load_config(parser, self.base_dir, self.path)

    def problem(self):
        from .optimizer import ControlProblem

        return ControlProblem(
            self.grid, self.tgrid, self.params, self.spec, self.init, self.f, self.cost, self.bounds,
            self.newton, self.adjoint_mode,
        )


class _Reader:
    """Pulls typed values out of the parsed file and records every violation."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.violations: list[tuple[str, object, str]] = []
        self.resolved: dict[str, dict[str, str]] = {}

    def raw(self, section: str, key: str) -> str:
        value = self.parser.get(section, key, fallback=DEFAULTS[section][key])
        self.resolved.setdefault(section, {})[key] = value
        return value

    def number(self, section, key, check=None, constraint="", cast=float):
        text = self.raw(section, key)
        try:
            value = cast(text)
            if cast is int and str(value) != text.strip():
                raise ValueError
        except ValueError:
            self.violations.append((f"{section}.{key}", text, f"must be {'an integer' if cast is int else 'a number'}"))
            return None
        if cast is float and not np.isfinite(value):
            self.violations.append((f"{section}.{key}", text, "must be finite"))
            return None
        if check is not None and not check(value):
            self.violations.append((f"{section}.{key}", value, constraint))
            return None
        return value

    def source(self, section, key, base_dir: Path) -> Source | None:
        src = Source(self.raw(section, key), base_dir)
        try:
            src.validate()
        except FileNotFoundError as exc:
            self.violations.append((f"{section}.{key}", src.text, f"file does not exist: {exc}"))
            return None
        except CHControlError as exc:
            self.violations.append((f"{section}.{key}", src.text, str(exc)))
            return None
        return src

    def fail(self, name, value, constraint):
        self.violations.append((name, value, constraint))


def parse_config(path) -> RunConfig:
    """Read and validate a run configuration; raise ``ConfigError`` listing every violation."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive (T, phi_Q, ...)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError([("file", str(path), f"must be readable ({exc.strerror})")]) from None
    except configparser.Error as exc:
        raise ConfigError([("file", str(path), f"malformed: {exc.message.splitlines()[0]}")]) from None
    return load_config(parser, path.parent, path)


def parse_config_string(text: str, base_dir=".") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([("file", "<string>", f"malformed: {exc.message.splitlines()[0]}")]) from None
    return load_config(parser, Path(base_dir), None)


def load_config(parser: configparser.ConfigParser, base_dir: Path, path: Path | None) -> RunConfig:
    rd = _Reader(parser)
    for section in parser.sections():
        if section not in DEFAULTS:
            rd.fail(section, "", f"unknown section; expected one of {sorted(DEFAULTS)}")
            continue
        for key in parser[section]:
            if key not in DEFAULTS[section]:
                rd.fail(f"{section}.{key}", parser[section][key], "unknown key")

    pos = lambda v: v > 0
    dim = rd.number("grid", "dim", lambda v: v in (1, 2), "must be 1 or 2", int)
    length = rd.number("grid", "length", pos, "extent must be positive")
    n = rd.number("grid", "n", lambda v: v >= 4, "need at least 4 nodes per direction", int)
    T = rd.number("time", "T", pos, "final time must be positive")
    steps = rd.number("time", "steps", lambda v: v >= 2, "need at least 2 time steps", int)

    phys = {k: rd.number("physics", k, pos, POSITIVE_CONSTANTS) for k in DEFAULTS["physics"]}

    variant = rd.raw("potential", "variant")
    if variant not in VARIANTS:
        rd.fail("potential.variant", variant, f"must be one of {VARIANTS}")
    c1 = rd.number("potential", "c1")
    if variant == "logarithmic" and c1 is not None and not c1 > 1:
        rd.fail("potential.c1", c1, "logarithmic potential needs c1 > 1 (double well)")
    clip = rd.number("potential", "clip", lambda v: 0 < v < 0.5, "clip margin must lie in (0, 0.5)")

    sources = {}
    for section, keys in (
        ("initial", ("phi0", "w0", "w1")),
        ("source", ("f",)),
        ("control", ("u", "u_min", "u_max")),
        ("cost", ("phi_Q", "w_Q", "wdot_Q", "phi_Omega", "w_Omega", "wdot_Omega")),
        ("run", ("direction",)),
    ):
        for key in keys:
            sources[key] = rd.source(section, key, base_dir)

    alpha = [rd.number("cost", f"alpha{i}", lambda v: v >= 0, WEIGHTS) for i in range(1, 7)]
    nu = rd.number("cost", "nu", lambda v: v >= 0, WEIGHTS)
    if all(a is not None for a in alpha) and nu is not None and not any(alpha + [nu]):
        rd.fail("cost.alpha1..alpha6, cost.nu", 0.0, WEIGHTS)

    opt = {
        "max_iters": rd.number("optimize", "max_iters", lambda v: v >= 0, "must be nonnegative", int),
        "sigma": rd.number("optimize", "sigma", lambda v: 0 < v < 1, "Armijo slope must lie in (0, 1)"),
        "rho": rd.number("optimize", "rho", lambda v: 0 < v < 1, "backtracking factor must lie in (0, 1)"),
        "initial_step": rd.number("optimize", "initial_step", pos, "must be positive"),
        "tol": rd.number("optimize", "tol", pos, "must be positive"),
    }
    newton = {
        "tol": rd.number("newton", "tol", pos, "must be positive"),
        "max_iter": rd.number("newton", "max_iter", lambda v: v >= 1, "must be at least 1", int),
        "max_halvings": rd.number("newton", "max_halvings", lambda v: v >= 1, "must be at least 1", int),
    }

    name = rd.raw("run", "name").strip()
    if not name or os.sep in name or name in (".", ".."):
        rd.fail("run.name", name, "must be a plain directory name")
    stride = rd.number("run", "stride", lambda v: v >= 1, "must be at least 1", int)
    mode = rd.raw("run", "adjoint_mode")
    if mode not in ADJOINT_MODES:
        rd.fail("run.adjoint_mode", mode, f"must be one of {ADJOINT_MODES}")
    eps_text = rd.raw("run", "eps_list")
    try:
        eps_list = [float(e) for e in eps_text.replace(",", " ").split()]
        if not eps_list or any(not e > 0 for e in eps_list):
            raise ValueError
    except ValueError:
        rd.fail("run.eps_list", eps_text, "must be a list of positive numbers")
        eps_list = []
    output_root = Path(os.environ.get(OUTPUT_ROOT_ENV) or rd.raw("run", "output_root"))

    if rd.violations:
        raise ConfigError(rd.violations)

    # Everything below needs the scalar fields to be valid.
    grid = Grid.uniform(dim, length, n)
    tgrid = TimeGrid(T, steps)
    fields = {}
    series_keys = {"f", "u", "u_min", "u_max", "phi_Q", "w_Q", "wdot_Q", "direction"}
    section_of = {k: s for s, keys in DEFAULTS.items() for k in keys}
    for key, src in sources.items():
        try:
            fields[key] = src.series(grid, tgrid) if key in series_keys else src.field(grid)
        except (CHControlError, OSError, ValueError) as exc:
            rd.fail(f"{section_of[key]}.{key}", src.text, f"cannot build field: {exc}")
            continue
        if not np.all(np.isfinite(fields[key])):
            rd.fail(f"{section_of[key]}.{key}", src.text, "field must be finite everywhere")
    if rd.violations:
        raise ConfigError(rd.violations)

    bad = fields["u_min"] > fields["u_max"]
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        rd.fail("control.u_min, control.u_max", f"u_min > u_max at node {idx}", BOUNDS_ORDER)
    spec = PotentialSpec(variant, c1, clip)
    if spec.singular:
        report = validate_compatibility(spec, fields["phi0"], fields["f"], phys["gamma"])
        for item in report.items:
            if not item.ok:
                rd.fail(f"initial.phi0 / source.f ({item.name})", item.value, COMPATIBLE)
    if rd.violations:
        raise ConfigError(rd.violations)

    cost = CostData(
        tuple(alpha), nu, fields["phi_Q"], fields["w_Q"], fields["wdot_Q"],
        fields["phi_Omega"], fields["w_Omega"], fields["wdot_Omega"],
    )
    return RunConfig(
        path=path,
        name=name,
        grid=grid,
        tgrid=tgrid,
        params=PhysicalParams(**phys),
        spec=spec,
        init=InitialData(fields["phi0"], fields["w0"], fields["w1"]),
        f=fields["f"],
        u=fields["u"],
        bounds=ControlBounds(fields["u_min"], fields["u_max"]),
        cost=cost,
        optimize=OptimizeConfig(**opt),
        newton=NewtonConfig(**newton),
        adjoint_mode=mode,
        output_root=output_root,
        stride=stride,
        direction=fields["direction"],
        eps_list=eps_list,
        resolved=rd.resolved,
        base_dir=base_dir,
    )
