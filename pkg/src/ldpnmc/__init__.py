"""Single-indexed LTL model checking for dynamic pushdown networks with nested locks."""

from ldpnmc.errors import (
    BoundExceeded,
    LtlSyntaxError,
    ModelError,
    ResourceLimit,
)
from ldpnmc.ltl import build_buchi, parse_ltl, to_nnf
from ldpnmc.model import load_formulas, load_model
from ldpnmc.check import CheckReport, CheckRequest, check_ldpn, check_ldpn_regular

__all__ = [
    "BoundExceeded",
    "CheckReport",
    "CheckRequest",
    "LtlSyntaxError",
    "ModelError",
    "ResourceLimit",
    "build_buchi",
    "check_ldpn",
    "check_ldpn_regular",
    "load_formulas",
    "load_model",
    "parse_ltl",
    "to_nnf",
]

__version__ = "0.1.0"
