"""Predictive monitoring of Signal Temporal Logic over uncertain (flowpipe) signals."""

__version__ = "0.1.0"

from .errors import (
    ContractError,
    DataParseError,
    FormulaSyntaxError,
    HorizonError,
    InsufficientSamplesError,
    NonFiniteValueError,
    ShapeError,
    SignalLookupError,
    StluError,
)
from .logic import (
    Always,
    And,
    Atom,
    Eventually,
    Interval,
    Not,
    Or,
    Until,
    horizon,
    parse,
    pretty,
)
from .monitor import (
    RobustInterval,
    SignalEnv,
    Verdict,
    max_star,
    min_star,
    neg_star,
    robustness,
    robustness_signal,
    trace_robustness,
    verdict,
)
from .signal import (
    Flowpipe,
    GaussianStep,
    SampleSet,
    Trace,
    fit_gaussians,
    flowpipe_from_samples,
    to_flowpipe,
)

__all__ = [name for name in dir() if not name.startswith("_")]
