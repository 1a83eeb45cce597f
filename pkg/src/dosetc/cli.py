"""Command-line interface.

Exit codes: 0 success, 1 analytic failure, 2 input error, 3 runtime divergence.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .certify import certify, synthesize_candidate_gains, underline_delta, verify_lmi
from .config import ConfigInputError, ScenarioConfig, derive_seeds
from .dos import GenerationError, generate_admissible_attack, validate_assumptions
from .linalg import DimensionError, RankError
from .observer import DegenerateSystemError, TriggerParams, min_inter_execution
from .sim import ConfigError, run

EXIT_OK, EXIT_ANALYTIC, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2, 3


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    return o


def write_json(path, obj) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _gains_or_synthesize(cfg: ScenarioConfig, plant):
    """Return (gains, synthesis report or None); gains is None when synthesis fails."""
    if cfg.synthesis_enabled():
        K = np.array(cfg.section("gains")["K"], float)
        res = synthesize_candidate_gains(plant, K, cfg.synthesis_options())
        return res.gains, res.to_dict()
    return cfg.gains(), None


def cmd_certify(config: str, out: str | None) -> int:
    try:
        cfg = ScenarioConfig.load(config)
        plant = cfg.plant()
        gains, synth = _gains_or_synthesize(cfg, plant)
        params = cfg.assumptions()
        retry = cfg.trigger()["retry_period"]
    except (ConfigInputError, DimensionError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except ValueError as exc:
        _err(str(exc))
        return EXIT_ANALYTIC
    if gains is None:
        report = {"passed": False, "synthesis": synth}
        code = EXIT_ANALYTIC
    else:
        try:
            rep = certify(plant, gains, params, retry)
        except DimensionError as exc:
            _err(str(exc))
            return EXIT_INPUT
        except (ValueError, ArithmeticError) as exc:
            _err(str(exc))
            report = {"passed": False, "errors": [str(exc)], "synthesis": synth}
            code = EXIT_ANALYTIC
        else:
            report = rep.to_dict()
            report["synthesis"] = synth
            code = EXIT_OK if rep.passed else EXIT_ANALYTIC
    if out:
        write_json(out, report)
    else:
        print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return code


def _underline_delta(cfg: ScenarioConfig, plant, gains=None) -> float:
    override = cfg.trigger()["underline_Delta"]
    if override is not None:
        return float(override)
    if gains is not None:
        return underline_delta(plant, gains)[1]
    K, L, p1, p2 = cfg.raw_gains()
    return min_inter_execution(plant, K, L, TriggerParams(p1, p2, 1.0))[1]


def _generate(cfg: ScenarioConfig, plant, d_min: float, seed: int | None, horizon: float | None):
    params = cfg.assumptions()
    if params is None:
        raise ConfigInputError("config section 'assumptions' is required for attack generation")
    gen = dict(cfg.generator() or {})
    if seed is not None or "seed" not in gen:
        gen["seed"] = derive_seeds(cfg.seed if seed is None else seed)[0]
    if horizon is None:
        horizon = gen.get("horizon") or cfg.raw.get("sim", {}).get("horizon")
    if horizon is None:
        raise ConfigInputError("attack generation needs a horizon (attack.generator.horizon or sim.horizon)")
    kw = {k: gen[k] for k in ("fsdos_attempts", "mcdos_attempts", "actuator_fraction") if k in gen}
    scen = generate_admissible_attack(plant, params, float(horizon), d_min, int(gen["seed"]), **kw)
    return scen, params, float(horizon), int(gen["seed"])


def cmd_generate_attack(config: str, out: str | None, seed: int | None) -> int:
    try:
        cfg = ScenarioConfig.load(config)
        plant = cfg.plant()
        d_min = _underline_delta(cfg, plant)
        scen, params, horizon, used = _generate(cfg, plant, d_min, seed, None)
    except (ConfigInputError, DimensionError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except (GenerationError, RankError, DegenerateSystemError) as exc:
        _err(str(exc))
        return EXIT_ANALYTIC
    val = validate_assumptions(scen, params, horizon, d_min)
    doc = {**scen.to_dict(), "seed": used, "horizon": horizon, "underline_Delta": d_min, "validation": val.to_dict()}
    if out:
        write_json(out, doc)
    else:
        print(json.dumps(_jsonable(doc), indent=2, sort_keys=True))
    return EXIT_OK if val.assumptions_hold else EXIT_ANALYTIC


def cmd_simulate(config: str, out: str | None, seed: int | None = None, dt: float | None = None,
                 horizon: float | None = None, stride: int | None = None, full_trace: bool = False) -> int:
    try:
        cfg = ScenarioConfig.load(config)
        plant = cfg.plant()
        gains, synth = _gains_or_synthesize(cfg, plant)
        if gains is None:
            _err("synthesis found no certified gains")
            return EXIT_ANALYTIC
        d_min = _underline_delta(cfg, plant, gains)
        sim_cfg = cfg.sim_config(seed=seed, dt=dt, horizon=horizon, stride=1 if full_trace else stride,
                                 underline_Delta=d_min)
        params = cfg.assumptions()
        if cfg.has_explicit_attack():
            scen = cfg.explicit_attack(plant.n_s)
            attack_seed = None
        elif cfg.generator() is not None:
            scen, params, _, attack_seed = _generate(cfg, plant, d_min, seed, sim_cfg.horizon)
        else:
            from .dos import AttackScenario
            scen, attack_seed = AttackScenario.quiet(plant.n_s), None
        trace = run(plant, gains, scen, sim_cfg)
    except (ConfigInputError, ConfigError, DimensionError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except (GenerationError, RankError, DegenerateSystemError) as exc:
        _err(str(exc))
        return EXIT_ANALYTIC
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INPUT
    summary = dict(trace.summary)
    summary["lmi_passed"] = verify_lmi(plant, gains).passed
    summary["attack"] = scen.to_dict()
    summary["attack_seed"] = attack_seed
    summary["disturbance_seed"] = sim_cfg.disturbance.seed
    if params is not None:
        summary["admissible"] = validate_assumptions(scen, params, sim_cfg.horizon, d_min).ok
    if synth is not None:
        summary["synthesis"] = synth
    out_dir = Path(out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.csv").write_text(trace.to_csv())
    write_json(out_dir / "summary.json", summary)
    return EXIT_DIVERGED if summary["verdict"] == "diverged" else EXIT_OK


def cmd_delta_min(config: str) -> int:
    try:
        cfg = ScenarioConfig.load(config)
        plant = cfg.plant()
        K, L, p1, p2 = cfg.raw_gains()
        per_mode, glob = min_inter_execution(plant, K, L, TriggerParams(p1, p2, 1.0))
    except (ConfigInputError, DimensionError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except (RankError, DegenerateSystemError) as exc:
        _err(str(exc))
        return EXIT_ANALYTIC
    for i, v in enumerate(per_mode, start=1):
        print(f"mode {i}: {v:#.12g}")
    print(f"global: {glob:#.12g}")
    return EXIT_OK


def _batch_job(args):
    cmd, path, out, kw = args
    if cmd == "simulate":
        return path, cmd_simulate(path, out, **kw)
    return path, cmd_certify(path, out)


def run_batch(cmd: str, directory: Path, out: str | None, kw: dict, workers: int | None = None) -> int:
    files = sorted(directory.glob("*.json"))
    if not files:
        _err(f"no *.json scenarios in {directory}")
        return EXIT_INPUT
    base = Path(out or "batch_out")
    jobs = []
    for f in files:
        target = base / f.stem if cmd == "simulate" else base / f"{f.stem}.json"
        jobs.append((cmd, str(f), str(target), kw))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_batch_job, jobs))
    codes = {Path(p).stem: c for p, c in results}
    write_json(base / "batch.json", codes)
    for name, c in codes.items():
        print(f"{name}: {c}")
    return max(codes.values())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dosetc", description="Event-triggered control under DoS: certification and simulation.")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="check the LMIs and stability conditions")
    c.add_argument("--config", required=True, help="config file or directory of configs")
    c.add_argument("--out", help="report path (directory in batch mode)")
    c.add_argument("--workers", type=int, default=None)

    s = sub.add_parser("simulate", help="simulate the closed loop")
    s.add_argument("--config", required=True, help="config file or directory of configs")
    s.add_argument("--out", help="output directory")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--dt", type=float, default=None)
    s.add_argument("--horizon", type=float, default=None)
    s.add_argument("--stride", type=int, default=None)
    s.add_argument("--full-trace", action="store_true")
    s.add_argument("--workers", type=int, default=None)

    g = sub.add_parser("generate-attack", help="draw an admissible DoS scenario")
    g.add_argument("--config", required=True)
    g.add_argument("--out")
    g.add_argument("--seed", type=int, default=None)

    d = sub.add_parser("delta-min", help="print the minimum inter-event times")
    d.add_argument("--config", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    seed = getattr(args, "seed", None)
    if seed is not None and not 0 <= seed < 2**64:
        _err("--seed must be an unsigned 64-bit integer")
        return EXIT_INPUT
    cfg_path = Path(args.config)
    if args.command in ("certify", "simulate") and cfg_path.is_dir():
        kw = {}
        if args.command == "simulate":
            kw = dict(seed=args.seed, dt=args.dt, horizon=args.horizon, stride=args.stride, full_trace=args.full_trace)
        return run_batch(args.command, cfg_path, args.out, kw, args.workers)
    if args.command == "certify":
        return cmd_certify(args.config, args.out)
    if args.command == "simulate":
        return cmd_simulate(args.config, args.out, args.seed, args.dt, args.horizon, args.stride, args.full_trace)
    if args.command == "generate-attack":
        return cmd_generate_attack(args.config, args.out, args.seed)
    return cmd_delta_min(args.config)


if __name__ == "__main__":
    sys.exit(main())
