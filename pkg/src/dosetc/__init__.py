"""Event-triggered control of multi-sensor LTI plants under denial-of-service.

The full certification entry point is ``dosetc.certify.certify``.
"""
from .certify import (
    GainSet,
    SwitchingRecord,
    SynthesisOptions,
    build_gamma1,
    build_gamma2,
    check_fsdos_condition,
    evaluate_iss_bound,
    rates,
    synthesize_candidate_gains,
    tau_d_lower_bound,
    varkappa_upper_bound,
    verify_lmi,
)
from .dos import AssumptionParams, AttackScenario, IntervalSet, generate_admissible_attack, validate_assumptions
from .observer import TriggerParams, min_inter_execution
from .plant import PlantModel
from .sim import DisturbanceSpec, SimConfig, run

__all__ = [
    "AssumptionParams", "AttackScenario", "DisturbanceSpec", "GainSet", "IntervalSet", "PlantModel",
    "SimConfig", "SwitchingRecord", "SynthesisOptions", "TriggerParams", "build_gamma1", "build_gamma2",
    "check_fsdos_condition", "evaluate_iss_bound", "generate_admissible_attack",
    "min_inter_execution", "rates", "run", "synthesize_candidate_gains", "tau_d_lower_bound",
    "validate_assumptions", "varkappa_upper_bound", "verify_lmi",
]
