"""Simulation toolkit for stochastic bandit linear optimization.

Domains, loss distributions (including the lower-bound constructions),
bandit and full-information players, a seeded experiment harness, and the
analysis helpers used to check scaling rates.
"""

from .adversary import (
    BinarySequence,
    CylinderConstruction,
    GenericGaussian,
    HypercubeConstruction,
    ShiftedBallConstruction,
    ShrinkToBounded,
    SimplexConstruction,
    ValidityReport,
    check_validity,
    select_mu,
    shrink_to_bounded,
)
from .analysis import ScalingFit, fit_scaling, kl_gaussian, lemma_dw_check, lower_bound_reference, pinsker_tv_bound
from .geometry import (
    CappedBall,
    Cylinder,
    Domain,
    Hypercube,
    L1Ball,
    ShiftedBall,
    Simplex,
    UnitBall,
    domain_from_spec,
)
from .harness import (
    RunResult,
    aggregate,
    average_iterate,
    derive_seed,
    run_error_protocol,
    run_regret_protocol,
    streams,
)
from .players import CornerEstimator, DigitDecoder, Exp3, FixedPoint, Hedge, digit_decode, digit_encode

__version__ = "0.1.0"
