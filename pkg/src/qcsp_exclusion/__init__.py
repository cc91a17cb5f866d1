"""Exclusion boxes for quadratic constraint satisfaction problems.

A box ``[u, v]`` is proven free of feasible points when a certificate
function built from interval bounds takes a negative value.
"""

from .certificate import CertPoint, OptMask, TChoice, TVariant, evaluate, f_value, verify
from .exclusion import (
    BoxMeasure,
    Excluded,
    ExclusionCertificate,
    FeasibleFound,
    FindOptions,
    Unknown,
    box_measure,
    enlarge_exclusion_box,
    find_exclusion_box,
    objective_cut,
    prune,
    split_complement,
)
from .interval import BoxVec, Interval
from .model import QuadraticCsp, eval_F, is_feasible, load_problem, parse_problem

__version__ = "0.1.0"
