"""Monte Carlo sample sets, per-step Gaussians and flowpipe signals."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ContractError,
    DataParseError,
    InsufficientSamplesError,
    NonFiniteValueError,
    ShapeError,
)

# Rational approximation of the normal quantile (P. J. Acklam), ~1e-9 relative
# error before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _freeze(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SampleSet:
    """N Monte Carlo runs over T steps, stored as an (N, T) matrix."""

    values: np.ndarray
    step_duration: float = 1.0
    channel: str = "value"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ShapeError(f"sample matrix must be 2-D, got shape {values.shape}")
        if values.shape[0] < 2:
            raise InsufficientSamplesError(f"need at least 2 runs, got {values.shape[0]}")
        if values.shape[1] < 1:
            raise ShapeError("sample matrix has no time steps")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("samples must be finite")
        if not self.step_duration > 0:
            raise ContractError("step_duration must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_runs(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class GaussianStep:
    mean: float
    std: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.std)):
            raise NonFiniteValueError("Gaussian parameters must be finite")
        if self.std < 0:
            raise ContractError("std must be non-negative")


@dataclass(frozen=True, eq=False)
class Flowpipe:
    """Discrete-time signal of confidence intervals ``[lower[t], upper[t]]``."""

    lower: np.ndarray
    upper: np.ndarray
    epsilon: float
    channel: str = "value"
    step_duration: float = 1.0

    def __post_init__(self):
        lower, upper = _freeze(self.lower), _freeze(self.upper)
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ShapeError("lower and upper must be 1-D arrays of equal length")
        if lower.size < 1:
            raise ShapeError("flowpipe must have at least one step")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise NonFiniteValueError("flowpipe bounds must be finite")
        if np.any(lower > upper):
            bad = int(np.argmax(lower > upper))
            raise ContractError(f"lower > upper at step {bad}")
        # epsilon == 1.0 is reserved for degenerate flowpipes built from traces
        if not (0.0 < self.epsilon <= 1.0):
            raise ContractError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.step_duration > 0:
            raise ContractError("step_duration must be positive")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_steps(cls, steps, epsilon, channel="value", step_duration=1.0) -> Flowpipe:
        steps = np.asarray(steps, dtype=float).reshape(-1, 2)
        return cls(steps[:, 0], steps[:, 1], epsilon, channel, step_duration)

    @property
    def steps(self) -> list[tuple[float, float]]:
        return list(zip(self.lower.tolist(), self.upper.tolist()))

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def __len__(self):
        return self.lower.size

    def __eq__(self, other):
        if not isinstance(other, Flowpipe):
            return NotImplemented
        return (
            self.epsilon == other.epsilon
            and self.channel == other.channel
            and self.step_duration == other.step_duration
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def to_json(self) -> dict:
        return {
            "channel": self.channel,
            "epsilon": self.epsilon,
            "step_duration_s": self.step_duration,
            "steps": [[lo, hi] for lo, hi in self.steps],
        }

    @classmethod
    def from_json(cls, obj: dict) -> Flowpipe:
        try:
            steps = obj["steps"]
            epsilon = float(obj["epsilon"])
            channel = str(obj["channel"])
            step_duration = float(obj["step_duration_s"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataParseError(f"invalid flowpipe JSON: {exc!r}") from None
        if not isinstance(steps, list) or not steps:
            raise ShapeError("flowpipe JSON needs a non-empty 'steps' list")
        for i, pair in enumerate(steps, start=1):
            if not isinstance(pair, list) or len(pair) != 2:
                raise ShapeError("each step must be a [lower, upper] pair", row=i)
            for j, v in enumerate(pair, start=1):
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    raise DataParseError(f"non-numeric bound {v!r}", row=i, column=j)
                if not math.isfinite(v):
                    raise NonFiniteValueError("non-finite bound", row=i, column=j)
        return cls.from_steps(steps, epsilon, channel, step_duration)


@dataclass(frozen=True, eq=False)
class Trace:
    values: np.ndarray
    channel: str = "value"
    step_duration: float = 1.0

    def __post_init__(self):
        values = _freeze(self.values)
        if values.ndim != 1:
            raise ShapeError("trace values must be 1-D")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("trace values must be finite")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


def fit_gaussians(samples: SampleSet) -> list[GaussianStep]:
    """Per-step sample mean and unbiased (N-1) standard deviation."""
    values = np.asarray(samples.values, dtype=float)
    if values.shape[0] < 2:
        raise InsufficientSamplesError(f"need at least 2 runs, got {values.shape[0]}")
    means = values.mean(axis=0)
    stds = values.std(axis=0, ddof=1)
    # identical samples have exactly zero spread; the mean can round otherwise
    stds[np.ptp(values, axis=0) == 0] = 0.0
    return [GaussianStep(float(m), float(s)) for m, s in zip(means, stds)]


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den
    q = p - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return num / den


def _lower_half_quantile(p: float) -> float:
    x = _acklam(p)
    # one Halley step against the erfc-based CDF
    e = 0.5 * math.erfc(-x / _SQRT2) - p
    u = e * _SQRT2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def inverse_normal_cdf(p: float) -> float:
    """Standard normal quantile, accurate to ~1e-9 absolute on [1e-12, 1-1e-12]."""
    if not (0.0 < p < 1.0):
        raise ContractError(f"probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        # 1 - p is exact here, so the upper tail keeps full precision
        return -_lower_half_quantile(1.0 - p)
    return _lower_half_quantile(p)


def to_flowpipe(
    gaussians: Sequence[GaussianStep],
    epsilon: float,
    channel: str = "value",
    step_duration: float = 1.0,
) -> Flowpipe:
    """Two-sided symmetric ``epsilon`` confidence band around each Gaussian."""
    if not (0.0 < epsilon < 1.0):
        raise ContractError(f"epsilon must lie in (0, 1), got {epsilon}")
    z = inverse_normal_cdf((1.0 + epsilon) / 2.0)
    mean = np.array([g.mean for g in gaussians], dtype=float)
    std = np.array([g.std for g in gaussians], dtype=float)
    return Flowpipe(mean - z * std, mean + z * std, epsilon, channel, step_duration)


def flowpipe_from_samples(samples: SampleSet, epsilon: float) -> Flowpipe:
    return to_flowpipe(fit_gaussians(samples), epsilon, samples.channel, samples.step_duration)


def trace_as_flowpipe(trace: Trace) -> Flowpipe:
    """Zero-width flowpipe around a single trace (epsilon recorded as 1.0)."""
    return Flowpipe(trace.values, trace.values, 1.0, trace.channel, trace.step_duration)


# --- file I/O ---------------------------------------------------------------

def _infer_format(path: Path, fmt: str | None) -> str:
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in ("csv", "json"):
        raise DataParseError(f"unsupported format {fmt!r} for {path}")
    return fmt


def _read_csv_matrix(path: Path, first_header: str) -> tuple[list[str], np.ndarray]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataParseError(f"cannot read {path}: {exc.strerror}") from None
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataParseError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if header[0] != first_header or len(header) < 2:
        raise DataParseError(f"header must start with '{first_header},'", row=1, column=1)
    width = len(header)
    out = np.empty((len(rows) - 1, width), dtype=float)
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ShapeError(f"expected {width} cells, found {len(row)}", row=i)
        for j, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise DataParseError(f"not a number: {cell!r}", row=i, column=j) from None
            if not math.isfinite(v):
                raise NonFiniteValueError(f"non-finite value {cell.strip()!r}", row=i, column=j)
            out[i - 2, j - 1] = v
    if out.shape[0] == 0:
        raise ShapeError(f"{path} has a header but no rows")
    return header, out


def _step_from_times(times: np.ndarray, default: float) -> float:
    if times.size < 2:
        return default
    diffs = np.diff(times)
    if np.any(diffs <= 0) or not np.allclose(diffs, diffs[0], rtol=1e-9, atol=0.0):
        raise DataParseError("time column must be uniformly increasing", column=1)
    return float(diffs[0])


def load_samples(path, format=None, channel=None, step_duration=None) -> SampleSet:
    """Read an N x T sample set.

    CSV layout is ``t,run_1,...,run_N`` with one row per time step; JSON is
    ``{"channel", "step_duration_s", "runs": [[...], ...]}`` with one list per run.
    """
    path = Path(path)
    if _infer_format(path, format) == "csv":
        _, matrix = _read_csv_matrix(path, "t")
        if matrix.shape[1] < 3:
            raise InsufficientSamplesError("sample CSV needs at least two run columns")
        dt = step_duration or _step_from_times(matrix[:, 0], 1.0)
        return SampleSet(matrix[:, 1:].T, dt, channel or path.stem)
    obj = _read_json(path)
    runs = obj.get("runs") if isinstance(obj, dict) else None
    if not isinstance(runs, list) or not runs:
        raise DataParseError("sample JSON needs a non-empty 'runs' list")
    lengths = {len(r) if isinstance(r, list) else -1 for r in runs}
    if len(lengths) != 1 or -1 in lengths:
        raise ShapeError("runs must be equal-length lists")
    matrix = _numeric_matrix(runs)
    return SampleSet(
        matrix,
        step_duration or float(obj.get("step_duration_s", 1.0)),
        channel or str(obj.get("channel", path.stem)),
    )


def load_trace(path, format=None, channel=None, step_duration=None) -> Trace:
    """Read a single trace from ``t,value`` CSV or ``{"values": [...]}`` JSON."""
    path = Path(path)
    if _infer_format(path, format) == "csv":
        header, matrix = _read_csv_matrix(path, "t")
        if len(header) != 2:
            raise ShapeError("trace CSV must have exactly two columns 't,value'", row=1)
        dt = step_duration or _step_from_times(matrix[:, 0], 1.0)
        return Trace(matrix[:, 1], channel or path.stem, dt)
    obj = _read_json(path)
    values = obj.get("values") if isinstance(obj, dict) else None
    if not isinstance(values, list) or not values:
        raise DataParseError("trace JSON needs a non-empty 'values' list")
    matrix = _numeric_matrix([values])
    return Trace(
        matrix[0],
        channel or str(obj.get("channel", path.stem)),
        step_duration or float(obj.get("step_duration_s", 1.0)),
    )


def load_flowpipe(path) -> Flowpipe:
    return Flowpipe.from_json(_read_json(Path(path)))


def save_flowpipe(flowpipe: Flowpipe, path) -> None:
    Path(path).write_text(json.dumps(flowpipe.to_json()) + "\n", encoding="utf-8")


def _read_json(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataParseError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataParseError(f"invalid JSON: {exc.msg}", row=exc.lineno, column=exc.colno) from None


def _numeric_matrix(rows) -> np.ndarray:
    out = np.empty((len(rows), len(rows[0])), dtype=float)
    for i, row in enumerate(rows, start=1):
        for j, v in enumerate(row, start=1):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise DataParseError(f"not a number: {v!r}", row=i, column=j)
            if not math.isfinite(v):
                raise NonFiniteValueError("non-finite value", row=i, column=j)
            out[i - 1, j - 1] = v
    return out
