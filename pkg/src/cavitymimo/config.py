"""Experiment configuration: one JSON document plus command-line overrides.

Profile entries (``h0`` and ``loss``) accept

* a number, applied to every mode;
* a list with exactly ``n`` numbers;
* ``{"kind": "constant", "value": v}``, ``{"kind": "linspace", "start": a, "stop": b}``
  or ``{"kind": "list", "values": [...]}``;
* on the command line, ``constant:v``, ``linspace:a:b`` or ``list:v1,v2,...``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError
from .model import ChannelParams, DeterministicProfile
from .replica import SolverSettings


def parse_profile_spec(text: str, field_name: str):
    """Turn a ``kind:args`` string into the JSON profile form."""
    text = text.strip()
    if text.startswith("{") or text.startswith("["):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(field_name, f"invalid JSON profile: {exc}") from exc
    kind, _, rest = text.partition(":")
    try:
        if kind == "constant":
            return {"kind": "constant", "value": float(rest)}
        if kind == "linspace":
            start, stop = rest.split(":")
            return {"kind": "linspace", "start": float(start), "stop": float(stop)}
        if kind == "list":
            return {"kind": "list", "values": [float(v) for v in rest.split(",")]}
        if not rest:
            return float(kind)
    except ValueError as exc:
        raise ConfigError(field_name, f"cannot parse profile {text!r}: {exc}") from exc
    raise ConfigError(field_name, f"unknown profile kind {kind!r}; "
                                  "use constant:v, linspace:a:b or list:v1,v2,...")


def expand_profile(spec, n: int, field_name: str) -> np.ndarray:
    """Expand a profile spec to exactly ``n`` floats."""
    if isinstance(spec, bool):
        raise ConfigError(field_name, "profile must be numeric")
    if isinstance(spec, (int, float)):
        values = np.full(n, float(spec))
    elif isinstance(spec, list):
        values = np.asarray(spec, dtype=float)
    elif isinstance(spec, dict):
        kind = spec.get("kind")
        try:
            if kind == "constant":
                values = np.full(n, float(spec["value"]))
            elif kind == "linspace":
                values = np.linspace(float(spec["start"]), float(spec["stop"]), n)
            elif kind == "list":
                values = np.asarray(spec["values"], dtype=float)
            else:
                raise ConfigError(field_name, f"unknown profile kind {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(field_name, f"malformed {kind} profile: {exc}") from exc
    else:
        raise ConfigError(field_name, f"unsupported profile value {spec!r}")
    if values.ndim != 1 or values.size != n:
        raise ConfigError(field_name, f"profile has {values.size} entries, expected n={n}")
    if not np.all(np.isfinite(values)):
        raise ConfigError(field_name, "profile entries must be finite")
    return values


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 6
    alpha: float = 1.0 / (2.0 * math.pi)
    gamma: float = 0.5
    rho0: float = 2.0
    h0: object = None
    loss: object = 0.2
    runs: int = 100_000
    seed: int = 0
    chunks: int = 1
    threads: int | None = None
    out: str = "."
    continuation: bool = False
    damping: float = 0.5
    tol: float = 1e-12
    max_iter: int = 100_000
    fd_step: float = 1e-4
    grid_points: int = 401
    draws: int = 100
    figures: bool = False

    def __post_init__(self):
        if self.h0 is None:
            object.__setattr__(self, "h0", {"kind": "linspace", "start": 0.5, "stop": 1.5})
        for name in ("n", "runs", "seed", "chunks", "max_iter", "grid_points", "draws"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(name, f"must be an integer, got {value!r}")
        if self.threads is not None and (isinstance(self.threads, bool)
                                         or not isinstance(self.threads, int)):
            raise ConfigError("threads", f"must be an integer, got {self.threads!r}")
        for name in ("alpha", "gamma", "rho0", "damping", "tol", "fd_step"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(name, f"must be a number, got {value!r}")
        if self.grid_points < 2:
            raise ConfigError("grid_points", "must be >= 2")
        if self.draws < 1:
            raise ConfigError("draws", "must be >= 1")
        # Constructing these runs the remaining field checks.
        self.params()
        self.profile()
        self.solver_settings()

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration field")
        return cls(**data)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "ExperimentConfig":
        data = {}
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    data = json.load(fh)
            except OSError as exc:
                raise ConfigError("config", f"cannot read {path}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"invalid JSON in {path}: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError("config", "top level must be a JSON object")
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_mapping(data)

    def params(self) -> ChannelParams:
        return ChannelParams(self.n, float(self.alpha), float(self.gamma), float(self.rho0))

    def profile(self) -> DeterministicProfile:
        return DeterministicProfile(expand_profile(self.h0, self.n, "h0"),
                                    expand_profile(self.loss, self.n, "loss"))

    def solver_settings(self) -> SolverSettings:
        try:
            return SolverSettings(damping=float(self.damping), tol=float(self.tol),
                                  max_iter=self.max_iter, continuation=bool(self.continuation))
        except ValueError as exc:
            field_name = str(exc).split()[0]
            raise ConfigError(field_name, str(exc)) from exc

    def resolved(self) -> dict:
        """Config echo with profiles expanded to explicit per-mode lists."""
        out = asdict(self)
        profile = self.profile()
        out["h0"] = [float(v) for v in profile.h0_diag]
        out["loss"] = [float(v) for v in profile.gamma_diag]
        out["rho"] = self.params().rho
        out.pop("out")
        return out
