"""Scenario definition and the JSON scenario-file format."""

from __future__ import annotations

import json
import math
import numbers
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from ._validation import P_MAX, check_distinct
from .exceptions import ScenarioError

ORDERING_METHODS = ("exact", "heuristic", "as-given")
DEFAULT_STEP = 0.1
DEFAULT_LAMBDA0 = 0.05
DEFAULT_MERGE_THRESHOLD = 1e-3

SCENARIO_KEYS = (
    "heads", "start", "end", "p", "lambda0", "step_size", "merge_threshold",
    "target_lengths", "ordering", "seed",
)

BUNDLED_CASES = ("case1", "case2", "case3", "case4")


@dataclass(frozen=True)
class Scenario:
    """Everything needed for one continuation run."""

    heads: tuple
    start: tuple = (0.0, 0.0)
    end: tuple | None = None
    p: float = 2.0
    lambda0: float = DEFAULT_LAMBDA0
    step_size: float = DEFAULT_STEP
    merge_threshold: float = DEFAULT_MERGE_THRESHOLD
    target_lengths: tuple = ()
    ordering: str = "exact"
    seed: int = 0
    max_steps: int | None = None
    continue_after_merge: bool = False

    def __post_init__(self):
        heads = tuple((float(x), float(y)) for x, y in self.heads)
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "start", tuple(float(c) for c in self.start))
        end = self.start if self.end is None else tuple(float(c) for c in self.end)
        object.__setattr__(self, "end", end)
        object.__setattr__(self, "target_lengths",
                           tuple(float(t) for t in self.target_lengths))
        _validate(self)

    @property
    def J(self):
        return len(self.heads)

    @property
    def heads_array(self):
        return np.array(self.heads, dtype=float)

    def with_overrides(self, **kwargs):
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)

    def to_dict(self):
        d = asdict(self)
        d.pop("max_steps")
        d.pop("continue_after_merge")
        d["heads"] = [list(h) for h in self.heads]
        d["start"] = list(self.start)
        d["end"] = list(self.end)
        d["target_lengths"] = list(self.target_lengths)
        return d


def _finite(value, name, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ScenarioError(f"expected a number, got {value!r}", field=name)
    if not math.isfinite(value):
        raise ScenarioError(f"must be finite, got {value!r}", field=name)
    if positive and value <= 0:
        raise ScenarioError(f"must be > 0, got {value!r}", field=name)
    if integer and int(value) != value:
        raise ScenarioError(f"must be an integer, got {value!r}", field=name)
    return value


def _point(value, name):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"expected [x, y], got {value!r}", field=name)
    return tuple(float(_finite(c, name)) for c in value)


def _validate(sc):
    if len(sc.heads) < 1:
        raise ScenarioError("at least one cluster head is required", field="heads")
    for i, h in enumerate(sc.heads):
        _point(list(h), f"heads[{i}]")
    try:
        check_distinct(sc.heads_array)
    except ValueError as exc:
        raise ScenarioError(str(exc), field="heads") from None
    _point(list(sc.start), "start")
    _point(list(sc.end), "end")
    _finite(sc.p, "p")
    if not 2.0 <= sc.p <= P_MAX:
        raise ScenarioError(f"must lie in [2, {P_MAX:g}], got {sc.p!r}", field="p")
    _finite(sc.lambda0, "lambda0", positive=True)
    _finite(sc.step_size, "step_size", positive=True)
    _finite(sc.merge_threshold, "merge_threshold", positive=True)
    for i, t in enumerate(sc.target_lengths):
        _finite(t, f"target_lengths[{i}]", positive=True)
    if sc.ordering not in ORDERING_METHODS:
        raise ScenarioError(f"must be one of {ORDERING_METHODS}, got {sc.ordering!r}",
                            field="ordering")
    _finite(sc.seed, "seed", integer=True)
    if sc.max_steps is not None:
        _finite(sc.max_steps, "max_steps", positive=True, integer=True)


def parse_scenario(data):
    """Build a :class:`Scenario` from a decoded JSON mapping.

    Unknown keys are rejected so that typos do not silently fall back to
    defaults.
    """
    if not isinstance(data, dict):
        raise ScenarioError("top-level value must be an object")
    unknown = sorted(set(data) - set(SCENARIO_KEYS))
    if unknown:
        raise ScenarioError(f"unknown key(s): {', '.join(unknown)}", field=unknown[0])
    if "heads" not in data:
        raise ScenarioError("missing required key", field="heads")
    heads = data["heads"]
    if not isinstance(heads, list) or not heads:
        raise ScenarioError("expected a non-empty list of [x, y]", field="heads")
    kwargs = {"heads": tuple(_point(h, f"heads[{i}]") for i, h in enumerate(heads))}
    if "start" in data:
        kwargs["start"] = _point(data["start"], "start")
    if data.get("end") is not None:
        kwargs["end"] = _point(data["end"], "end")
    for key in ("p", "lambda0", "step_size", "merge_threshold"):
        if key in data:
            kwargs[key] = float(_finite(data[key], key))
    if "target_lengths" in data:
        tl = data["target_lengths"]
        if not isinstance(tl, list):
            raise ScenarioError("expected a list of numbers", field="target_lengths")
        kwargs["target_lengths"] = tuple(
            float(_finite(t, f"target_lengths[{i}]")) for i, t in enumerate(tl))
    if "ordering" in data:
        if not isinstance(data["ordering"], str):
            raise ScenarioError("expected a string", field="ordering")
        kwargs["ordering"] = data["ordering"]
    if "seed" in data:
        kwargs["seed"] = int(_finite(data["seed"], "seed", integer=True))
    return Scenario(**kwargs)


def _field_line(text, field_name):
    if field_name is None:
        return None
    key = field_name.split("[")[0]
    for lineno, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return lineno
    return None


def loads_scenario(text):
    """Parse scenario JSON text, attaching line numbers to diagnostics."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", line=exc.lineno,
                            column=exc.colno) from None
    try:
        return parse_scenario(data)
    except ScenarioError as exc:
        if exc.line is None:
            raise ScenarioError(exc.message, field=exc.field,
                                line=_field_line(text, exc.field)) from None
        raise


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    return loads_scenario(text)


def bundled_scenario(name):
    """One of the four reference layouts shipped with the package."""
    if name not in BUNDLED_CASES:
        raise KeyError(f"unknown bundled scenario {name!r}; choose from {BUNDLED_CASES}")
    text = resources.files("droneharvest").joinpath("data").joinpath(f"{name}.json").read_text()
    return loads_scenario(text)


def bundled_scenario_path(name):
    return Path(str(resources.files("droneharvest").joinpath("data").joinpath(f"{name}.json")))
