"""Scenario configuration: JSON documents validated against a schema."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .certify import GainSet, SynthesisOptions
from .dos import AssumptionParams, AttackScenario
from .plant import PlantModel
from .sim import DisturbanceSpec, SimConfig


class ConfigInputError(ValueError):
    pass


_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_matrix_list = {"type": "array", "items": _matrix}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_scalar_or_list = {"oneOf": [_pos, {"type": "array", "items": _pos}]}
_intervals = {"type": "array", "items": {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2}}
_seed = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}

SCHEMA = {
    "type": "object",
    "required": ["plant"],
    "properties": {
        "seed": _seed,
        "plant": {
            "type": "object",
            "required": ["A", "B", "C"],
            "properties": {"A": _matrix, "B": _matrix, "C": _matrix_list},
        },
        "gains": {
            "type": "object",
            "required": ["K"],
            "properties": {
                "K": _matrix, "L": _matrix_list, "P_p": _matrix_list, "P_e": _matrix_list,
                "psi1": _pos, "psi2": _pos,
                "eps1": _scalar_or_list, "eps2": _scalar_or_list,
                "eps3": _scalar_or_list, "eps4": _scalar_or_list,
            },
        },
        "synthesis": {
            "type": "object",
            "properties": {
                "enabled": {"type": "boolean"},
                "objective": {"enum": ["first", "omega1"]},
                "psi_grid": {"type": "array", "items": _pos, "minItems": 1},
                "scale_grid": {"type": "array", "items": _pos, "minItems": 1},
                "eps_grid": {"type": "array", "items": _pos, "minItems": 1},
                "shift_grid": {"type": "array", "items": _pos, "minItems": 1},
            },
        },
        "trigger": {
            "type": "object",
            "properties": {
                "v_threshold": _pos,
                "retry_period": {"oneOf": [_pos, {"type": "null"}]},
                "underline_Delta": {"oneOf": [_pos, {"type": "null"}]},
            },
        },
        "attack": {
            "type": "object",
            "properties": {
                "sensors": {"type": "array", "items": _intervals},
                "actuator": _intervals,
                "generator": {
                    "type": "object",
                    "properties": {
                        "seed": _seed,
                        "horizon": _pos,
                        "fsdos_attempts": {"type": "integer", "minimum": 0},
                        "mcdos_attempts": {"type": "integer", "minimum": 0},
                        "actuator_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                    },
                },
            },
        },
        "assumptions": {
            "type": "object",
            "required": ["kappa", "tau_D", "eta", "tau_F", "zeta", "T"],
            "properties": {
                "kappa": _nonneg, "tau_D": _pos, "eta": _nonneg, "tau_F": _pos, "zeta": _nonneg,
                "T": {"type": "number", "exclusiveMinimum": 1},
            },
        },
        "sim": {
            "type": "object",
            "required": ["dt", "horizon", "x0"],
            "properties": {
                "dt": _pos,
                "horizon": _pos,
                "x0": {"type": "array", "items": {"type": "number"}},
                "xe0": {"type": "array", "items": {"type": "number"}},
                "record_stride": {"type": "integer", "minimum": 1},
                "disturbance": {
                    "type": "object",
                    "properties": {
                        "kind": {"enum": ["zero", "constant", "sinusoid", "noise"]},
                        "amplitude": _nonneg,
                        "frequency": {"type": "number"},
                        "seed": _seed,
                    },
                },
            },
        },
    },
}


def derive_seeds(seed: int) -> tuple[int, int]:
    """Two independent 64-bit seeds (attack, disturbance) from one master seed."""
    a, b = np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)
    return int(a), int(b)


@dataclass
class ScenarioConfig:
    raw: dict

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigInputError(f"cannot read config: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInputError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigInputError(f"schema violation at {where}: {exc.message}") from exc
        return cls(data)

    def section(self, name: str) -> dict:
        if name not in self.raw:
            raise ConfigInputError(f"config section '{name}' is required for this command")
        return self.raw[name]

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    def plant(self) -> PlantModel:
        p = self.section("plant")
        try:
            return PlantModel(np.array(p["A"], float), np.array(p["B"], float),
                              tuple(np.array(c, float) for c in p["C"]))
        except ValueError as exc:
            raise ConfigInputError(f"plant: {exc}") from exc

    def synthesis_enabled(self) -> bool:
        return bool(self.raw.get("synthesis", {}).get("enabled", False))

    def synthesis_options(self) -> SynthesisOptions:
        s = dict(self.raw.get("synthesis", {}))
        s.pop("enabled", None)
        return SynthesisOptions(**{k: tuple(v) if isinstance(v, list) else v for k, v in s.items()})

    def gains(self) -> GainSet:
        g = self.section("gains")
        missing = [k for k in ("L", "P_p", "P_e", "psi1", "psi2", "eps1", "eps2") if k not in g]
        if missing:
            raise ConfigInputError(f"gains section lacks {', '.join(missing)}")
        try:
            return GainSet.from_dict(g)
        except ValueError as exc:
            raise ConfigInputError(f"gains: {exc}") from exc

    def raw_gains(self) -> tuple[np.ndarray, list[np.ndarray], float, float]:
        """K, L and the trigger weights, without requiring Lyapunov matrices."""
        g = self.section("gains")
        for k in ("L", "psi1", "psi2"):
            if k not in g:
                raise ConfigInputError(f"gains section lacks {k}")
        return np.array(g["K"], float), [np.array(x, float) for x in g["L"]], float(g["psi1"]), float(g["psi2"])

    def assumptions(self) -> AssumptionParams | None:
        a = self.raw.get("assumptions")
        if a is None:
            return None
        return AssumptionParams(a["kappa"], a["tau_D"], a["eta"], a["tau_F"], a["zeta"], a["T"])

    def trigger(self) -> dict:
        t = self.raw.get("trigger", {})
        return {
            "v_threshold": float(t.get("v_threshold", 1e-3)),
            "retry_period": t.get("retry_period"),
            "underline_Delta": t.get("underline_Delta"),
        }

    def has_explicit_attack(self) -> bool:
        a = self.raw.get("attack", {})
        return "sensors" in a or "actuator" in a

    def explicit_attack(self, n_s: int) -> AttackScenario:
        a = self.raw.get("attack", {})
        sensors = a.get("sensors", [[] for _ in range(n_s)])
        if len(sensors) != n_s:
            raise ConfigInputError(f"attack lists {len(sensors)} sensor channels, plant has {n_s}")
        try:
            return AttackScenario.from_dict({"sensors": sensors, "actuator": a.get("actuator", [])})
        except ValueError as exc:
            raise ConfigInputError(f"attack: {exc}") from exc

    def generator(self) -> dict | None:
        return self.raw.get("attack", {}).get("generator")

    def sim_config(self, seed: int | None = None, dt: float | None = None, horizon: float | None = None,
                   stride: int | None = None, underline_Delta: float | None = None) -> SimConfig:
        s = self.section("sim")
        trig = self.trigger()
        dist = dict(s.get("disturbance", {}))
        if "seed" not in dist or seed is not None:
            dist["seed"] = derive_seeds(self.seed if seed is None else seed)[1]
        return SimConfig(
            dt=float(dt if dt is not None else s["dt"]),
            horizon=float(horizon if horizon is not None else s["horizon"]),
            x_p0=np.array(s["x0"], float),
            x_e0=None if "xe0" not in s else np.array(s["xe0"], float),
            disturbance=DisturbanceSpec(
                kind=dist.get("kind", "zero"), amplitude=float(dist.get("amplitude", 0.0)),
                frequency=float(dist.get("frequency", 1.0)), seed=int(dist["seed"]),
            ),
            v_threshold=trig["v_threshold"],
            retry_period=trig["retry_period"],
            record_stride=int(stride if stride is not None else s.get("record_stride", 10)),
            underline_Delta=underline_Delta if underline_Delta is not None else trig["underline_Delta"],
        )
