"""STL-U formula AST, concrete syntax, pretty printer and horizon.

Concrete syntax::

    G[0,3](BG{0.90} > 70)            always
    F[2,inf](speed{0.95} < 30)       eventually, unbounded
    (a{0.9} > 0) U[0,5] (b{0.9} > 1)  until
    !phi   phi & psi   phi | psi     negation, conjunction, disjunction
    70 < BG{0.95} < 180              chained comparison, a conjunction
    2.5*BG{0.9} - 3 > 0              general affine predicate

Precedence from loosest to tightest: ``|``, ``&``, ``U`` (right associative),
then the prefix operators ``!``, ``G[..]``, ``F[..]``.  Interval endpoints are
integer step offsets.  Comparisons are strict; ``>=``/``<=`` are rejected.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator, Union

from .errors import ContractError, FormulaSyntaxError

INF = math.inf


@dataclass(frozen=True)
class Interval:
    lo: int
    hi: Union[int, float]

    def __post_init__(self):
        if not isinstance(self.lo, int) or self.lo < 0:
            raise ContractError(f"interval start must be a non-negative integer, got {self.lo!r}")
        if self.hi != INF and (not isinstance(self.hi, int) or self.hi < 0):
            raise ContractError(f"interval end must be a non-negative integer or inf, got {self.hi!r}")
        if self.lo > self.hi:
            raise ContractError(f"empty interval [{self.lo},{self.hi}]")

    @property
    def bounded(self) -> bool:
        return self.hi != INF

    def __str__(self):
        hi = "inf" if self.hi == INF else str(self.hi)
        return f"[{self.lo},{hi}]"


@dataclass(frozen=True)
class Atom:
    """Affine predicate ``a*x + b > 0`` on ``channel`` read at confidence ``epsilon``."""

    channel: str
    a: float
    b: float
    epsilon: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ContractError("predicate coefficients must be finite")
        if self.a == 0:
            raise ContractError("constant predicates are not allowed (a == 0)")
        if not (0.0 < self.epsilon < 1.0):
            raise ContractError(f"confidence level must lie in (0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class Not:
    arg: Formula


@dataclass(frozen=True)
class And:
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or:
    """Sugar for ``!(!left & !right)``; evaluated through that expansion."""

    left: Formula
    right: Formula


@dataclass(frozen=True)
class Always:
    interval: Interval
    arg: Formula


@dataclass(frozen=True)
class Eventually:
    interval: Interval
    arg: Formula


@dataclass(frozen=True)
class Until:
    interval: Interval
    left: Formula
    right: Formula


Formula = Union[Atom, Not, And, Or, Always, Eventually, Until]


def children(phi: Formula) -> tuple:
    if isinstance(phi, Atom):
        return ()
    if isinstance(phi, (Not, Always, Eventually)):
        return (phi.arg,)
    return (phi.left, phi.right)


def walk(phi: Formula) -> Iterator[Formula]:
    stack = [phi]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def atoms(phi: Formula) -> list[Atom]:
    return [node for node in walk(phi) if isinstance(node, Atom)]


def signal_keys(phi: Formula) -> set[tuple[str, float]]:
    """The (channel, epsilon) pairs the formula reads."""
    return {(a.channel, a.epsilon) for a in atoms(phi)}


def horizon(phi: Formula):
    """Steps of lookahead needed to evaluate at t = 0 (``math.inf`` if unbounded)."""
    if isinstance(phi, Atom):
        return 0
    if isinstance(phi, Not):
        return horizon(phi.arg)
    if isinstance(phi, (And, Or)):
        return max(horizon(phi.left), horizon(phi.right))
    if isinstance(phi, (Always, Eventually)):
        return phi.interval.hi + horizon(phi.arg)
    return phi.interval.hi + max(horizon(phi.left), horizon(phi.right))


def desugar(phi: Formula) -> Formula:
    """Replace every ``Or`` by its ``!(!a & !b)`` expansion."""
    if isinstance(phi, Atom):
        return phi
    if isinstance(phi, Not):
        return Not(desugar(phi.arg))
    if isinstance(phi, And):
        return And(desugar(phi.left), desugar(phi.right))
    if isinstance(phi, Or):
        return Not(And(Not(desugar(phi.left)), Not(desugar(phi.right))))
    if isinstance(phi, Always):
        return Always(phi.interval, desugar(phi.arg))
    if isinstance(phi, Eventually):
        return Eventually(phi.interval, desugar(phi.arg))
    return Until(phi.interval, desugar(phi.left), desugar(phi.right))


def rescale(phi: Formula, units_per_step: float) -> Formula:
    """Convert interval endpoints written in some time unit into steps.

    ``units_per_step`` is the step duration expressed in that unit; every
    finite endpoint must be an exact multiple of it.
    """

    def conv(iv: Interval) -> Interval:
        def one(v):
            if v == INF:
                return INF
            steps = v / units_per_step
            if abs(steps - round(steps)) > 1e-9:
                raise ContractError(f"interval endpoint {v} is not a multiple of the step ({units_per_step})")
            return int(round(steps))

        return Interval(one(iv.lo), one(iv.hi))

    if isinstance(phi, Atom):
        return phi
    if isinstance(phi, Not):
        return Not(rescale(phi.arg, units_per_step))
    if isinstance(phi, (And, Or)):
        return type(phi)(rescale(phi.left, units_per_step), rescale(phi.right, units_per_step))
    if isinstance(phi, (Always, Eventually)):
        return type(phi)(conv(phi.interval), rescale(phi.arg, units_per_step))
    return Until(conv(phi.interval), rescale(phi.left, units_per_step), rescale(phi.right, units_per_step))


# --- pretty printing --------------------------------------------------------

def _signal_text(atom: Atom) -> str:
    return f"{atom.channel}{{{atom.epsilon!r}}}"


def pretty(phi: Formula) -> str:
    """Fully parenthesised text that :func:`parse` maps back to ``phi``."""
    if isinstance(phi, Atom):
        sig = _signal_text(phi)
        if phi.a == 1.0:
            return f"{sig} > {-phi.b!r}"
        if phi.a == -1.0:
            return f"{sig} < {phi.b!r}"
        return f"{phi.a!r}*{sig} + {phi.b!r} > 0"
    if isinstance(phi, Not):
        return f"!({pretty(phi.arg)})"
    if isinstance(phi, And):
        return f"(({pretty(phi.left)}) & ({pretty(phi.right)}))"
    if isinstance(phi, Or):
        return f"(({pretty(phi.left)}) | ({pretty(phi.right)}))"
    if isinstance(phi, Always):
        return f"G{phi.interval}({pretty(phi.arg)})"
    if isinstance(phi, Eventually):
        return f"F{phi.interval}({pretty(phi.arg)})"
    return f"(({pretty(phi.left)}) U{phi.interval} ({pretty(phi.right)}))"


# --- parsing ----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<bad>>=|<=)
  | (?P<op>[!&|<>(){}\[\],+\-*%])
    """,
    re.VERBOSE,
)
_KEYWORDS = {"G", "F", "U", "inf"}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks, pos = [], 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind == "bad":
            raise FormulaSyntaxError(f"non-strict comparison {m.group()!r} is not supported", pos)
        if kind != "ws":
            word = m.group()
            if kind == "ident" and word in _KEYWORDS:
                kind = word
            toks.append(_Tok(kind, word, pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


@dataclass
class _Lin:
    """Affine expression ``coef*signal + const`` collected during parsing."""

    coef: float = 0.0
    const: float = 0.0
    signal: tuple | None = None  # (channel, epsilon)


class _Parser:
    def __init__(self, text: str, default_epsilon):
        self.toks = _tokenize(text)
        self.i = 0
        self.default_epsilon = default_epsilon

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text or self.tok.kind == "eof":
            found = self.tok.text or "end of input"
            raise FormulaSyntaxError(f"expected {text!r}, found {found!r}", self.tok.pos)
        return self.advance()

    def parse(self) -> Formula:
        phi = self.disjunction()
        if self.tok.kind != "eof":
            raise FormulaSyntaxError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return phi

    def disjunction(self) -> Formula:
        phi = self.conjunction()
        while self.tok.text == "|":
            self.advance()
            phi = Or(phi, self.conjunction())
        return phi

    def conjunction(self) -> Formula:
        phi = self.until()
        while self.tok.text == "&":
            self.advance()
            phi = And(phi, self.until())
        return phi

    def until(self) -> Formula:
        left = self.unary()
        if self.tok.kind == "U":
            self.advance()
            iv = self.interval()
            return Until(iv, left, self.until())
        return left

    def unary(self) -> Formula:
        tok = self.tok
        if tok.text == "!":
            self.advance()
            return Not(self.unary())
        if tok.kind in ("G", "F"):
            self.advance()
            iv = self.interval()
            arg = self.unary()
            return Always(iv, arg) if tok.kind == "G" else Eventually(iv, arg)
        if tok.text == "(":
            self.advance()
            phi = self.disjunction()
            self.expect(")")
            return phi
        return self.comparison()

    def interval(self) -> Interval:
        start = self.expect("[").pos
        lo = self.bound(allow_inf=False)
        self.expect(",")
        hi = self.bound(allow_inf=True)
        self.expect("]")
        if lo > hi:
            raise FormulaSyntaxError(f"interval lower bound {lo} exceeds upper bound {hi}", start)
        return Interval(lo, hi)

    def bound(self, allow_inf: bool):
        tok = self.advance()
        if tok.kind == "inf" and allow_inf:
            return INF
        if tok.kind != "num" or not re.fullmatch(r"\d+", tok.text):
            raise FormulaSyntaxError(f"interval bound must be a non-negative integer, found {tok.text!r}", tok.pos)
        return int(tok.text)

    def comparison(self) -> Formula:
        start = self.tok.pos
        terms = [self.linear()]
        ops = []
        while self.tok.text in ("<", ">"):
            ops.append(self.advance().text)
            terms.append(self.linear())
        if not ops:
            raise FormulaSyntaxError("expected a comparison", start)
        if len(ops) > 2:
            raise FormulaSyntaxError("at most two chained comparisons are allowed", start)
        preds = []
        for op, lhs, rhs in zip(ops, terms, terms[1:]):
            big, small = (lhs, rhs) if op == ">" else (rhs, lhs)
            preds.append(self.atom(big, small, start))
        return preds[0] if len(preds) == 1 else And(preds[0], preds[1])

    def atom(self, big: _Lin, small: _Lin, pos: int) -> Atom:
        sig = big.signal or small.signal
        if sig is None:
            raise FormulaSyntaxError("comparison mentions no signal", pos)
        if big.signal and small.signal and big.signal != small.signal:
            raise FormulaSyntaxError("a predicate may involve only one signal", pos)
        a = big.coef - small.coef
        if a == 0:
            raise FormulaSyntaxError("predicate does not depend on its signal", pos)
        return Atom(sig[0], a, big.const - small.const, sig[1])

    def linear(self) -> _Lin:
        out = _Lin()
        sign = 1.0
        if self.tok.text in ("+", "-"):
            sign = -1.0 if self.advance().text == "-" else 1.0
        self.term(out, sign)
        while self.tok.text in ("+", "-"):
            sign = -1.0 if self.advance().text == "-" else 1.0
            self.term(out, sign)
        return out

    def term(self, out: _Lin, sign: float) -> None:
        if self.tok.text == "-":
            self.advance()
            sign = -sign
        first = self.factor()
        if self.tok.text == "*":
            self.advance()
            second = self.factor()
            if isinstance(first, float) == isinstance(second, float):
                raise FormulaSyntaxError("products must be number * signal", self.tok.pos)
            scale, sig = (first, second) if isinstance(first, float) else (second, first)
            self.add_signal(out, sig, sign * scale)
        elif isinstance(first, float):
            out.const += sign * first
        else:
            self.add_signal(out, first, sign)

    def add_signal(self, out: _Lin, sig, coef) -> None:
        if out.signal is not None and out.signal != sig[:2]:
            raise FormulaSyntaxError("a predicate may involve only one signal", sig[2])
        out.signal = sig[:2]
        out.coef += coef

    def factor(self):
        tok = self.advance()
        if tok.kind == "num":
            return float(tok.text)
        if tok.kind == "ident":
            return (tok.text, self.confidence(tok), tok.pos)
        found = tok.text or "end of input"
        raise FormulaSyntaxError(f"expected a number or signal, found {found!r}", tok.pos)

    def confidence(self, name_tok: _Tok) -> float:
        if self.tok.text != "{":
            if self.default_epsilon is None:
                raise FormulaSyntaxError(f"signal {name_tok.text!r} needs a confidence level {{eps}}", name_tok.pos)
            return float(self.default_epsilon)
        self.advance()
        tok = self.advance()
        if tok.kind != "num":
            raise FormulaSyntaxError("confidence level must be a number", tok.pos)
        eps = float(tok.text)
        if self.tok.text == "%":
            self.advance()
            eps /= 100.0
        self.expect("}")
        if not (0.0 < eps < 1.0):
            raise FormulaSyntaxError(f"confidence level {eps} outside (0, 1)", tok.pos)
        return eps


def parse(text: str, default_epsilon: float | None = None) -> Formula:
    """Parse formula text into an AST.

    Signals without a ``{eps}`` annotation take ``default_epsilon``; when that
    is ``None`` the annotation is mandatory.
    """
    return _Parser(text, default_epsilon).parse()
