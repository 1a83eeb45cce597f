"""Regenerate the JSON fixtures under tests/fixtures with the package's own synthesis."""
import json
import math
from pathlib import Path

import numpy as np

from dosetc.certify import SynthesisOptions, certify, synthesize_candidate_gains
from dosetc.plant import PlantModel

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def dump(name, obj):
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / name).write_text(json.dumps(obj, indent=2) + "\n")


def plant_dict(p):
    return {"A": p.A.tolist(), "B": p.B.tolist(), "C": [c.tolist() for c in p.channels]}


def floor_dt(x):
    """Largest 1-2-4-5 step not above x."""
    e = math.floor(math.log10(x))
    for m in (5, 4, 2, 1):
        if m * 10**e <= x:
            return m * 10**e
    return 10 ** (e - 1) * 5


def main():
    scalar = PlantModel([[1.0]], [[1.0]], ([[1.0]],))
    res = synthesize_candidate_gains(scalar, [[2.0]], SynthesisOptions(psi_grid=(0.01,), objective="omega1"))
    assert res.feasible
    rep = certify(scalar, res.gains)
    d, w1 = rep.underline_Delta, rep.modes[0].omega1
    base = {"plant": plant_dict(scalar), "gains": res.gains.to_dict(), "trigger": {"v_threshold": 1e-3}}
    dump("scalar.json", {**base, "seed": 7, "sim": {
        "dt": floor_dt(d / 4), "horizon": math.ceil(20 / w1), "x0": [1.0], "record_stride": 10}})
    dump("scalar_blackout.json", {**base, "seed": 11,
        "attack": {"sensors": [[[0.0, 1000.0]]], "actuator": [[0.0, 1000.0]]},
        "sim": {"dt": floor_dt(d / 4), "horizon": 40.0, "x0": [1.0], "record_stride": 50,
                "disturbance": {"kind": "noise", "amplitude": 0.1}}})

    dint = PlantModel([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], ([[1.0, 0.0]], [[1.0, 1.0]]))
    res = synthesize_candidate_gains(dint, [[2.0, 3.0]], SynthesisOptions(psi_grid=(0.005,), objective="omega1"))
    assert res.feasible
    rep = certify(dint, res.gains)
    d = rep.underline_Delta
    tau_D = 2 * rep.tau_D_lower_bound
    rhs = min(m.omega1 / (m.omega1 + m.omega2) for m in rep.modes)
    dump("dint.json", {
        "seed": 3,
        "plant": plant_dict(dint),
        "gains": res.gains.to_dict(),
        "trigger": {"v_threshold": 1e-3},
        "assumptions": {"kappa": 1 - d / tau_D, "tau_D": tau_D, "eta": 2.0,
                        "tau_F": 2 * (2 * d / rhs), "zeta": 0.5, "T": 2 * (2 / rhs)},
        "attack": {"generator": {"horizon": 30.0}},
        "sim": {"dt": floor_dt(d / 4), "horizon": 30.0, "x0": [1.0, 0.0], "record_stride": 10,
                "disturbance": {"kind": "sinusoid", "amplitude": 0.05, "frequency": 1.0}},
    })

    integ = {"A": [[0.0]], "B": [[1.0]], "C": [[[1.0]]]}
    for name, psi in (("ln2.json", 1.0), ("ln3.json", 4.0)):
        dump(name, {"plant": integ, "gains": {"K": [[0.0]], "L": [[[0.0]]], "psi1": psi, "psi2": psi}})


if __name__ == "__main__":
    main()
