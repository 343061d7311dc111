"""Metric temporal logic: syntax tree, text parser and robustness monitor.

Formulas are evaluated over uniformly sampled traces.  Temporal intervals are
given in seconds and quantized to step ranges ``[ceil(lo/dt), floor(hi/dt)]``
(closed, rounded inward).  The ``Until`` operator uses the discrete reading

    rho(a U_I b, t) = max_{t' in t+I} min(rho(b, t'), min_{t <= t'' < t'} rho(a, t''))

Windows that run past the end of the trace are truncated.  A window with no
step inside the trace contributes the identity of its reduction (``-inf`` for a
supremum, ``+inf`` for an infimum) when it occurs below the root; at the
evaluation point itself it raises :class:`HorizonError`.

Infinity is IEEE ``inf``.  The monitor only ever applies ``max``, ``min`` and
negation to robustness values, which absorb it without producing NaN.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

INF = math.inf
_EPS = 1e-9


class MTLError(Exception):
    """Base class for MTL errors."""


class MTLSyntaxError(MTLError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class UnknownAtomError(MTLError):
    def __init__(self, name: str, position: int = -1):
        self.name = name
        self.position = position
        super().__init__(f"unknown atom {name!r}")


class HorizonError(MTLError):
    """A temporal window lies entirely beyond the end of the trace."""


# --------------------------------------------------------------------------
# Traces and predicates


@dataclass(frozen=True)
class Trace:
    """Uniformly sampled multi-signal trace.

    ``signals`` maps a field name (``gap``, ``v_ego``, ...) to a 1-D array; all
    arrays share the same length.
    """

    dt: float
    signals: Mapping[str, np.ndarray]

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.signals:
            raise ValueError("trace has no signals")
        arrays = {k: np.asarray(v, dtype=float) for k, v in self.signals.items()}
        lengths = {len(v) for v in arrays.values()}
        if len(lengths) != 1:
            raise ValueError(f"signals have different lengths: {sorted(lengths)}")
        if lengths.pop() == 0:
            raise ValueError("trace is empty")
        for k, v in arrays.items():
            if v.ndim != 1:
                raise ValueError(f"signal {k!r} is not one-dimensional")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"signal {k!r} has non-finite values")
        object.__setattr__(self, "signals", arrays)

    def __len__(self) -> int:
        return len(next(iter(self.signals.values())))

    def record(self, i: int) -> Dict[str, float]:
        return {k: float(v[i]) for k, v in self.signals.items()}

    @classmethod
    def from_records(cls, records, dt: float) -> "Trace":
        records = list(records)
        if not records:
            raise ValueError("trace is empty")
        keys = list(records[0])
        return cls(dt, {k: np.array([r[k] for r in records], dtype=float) for k in keys})


@dataclass(frozen=True)
class Predicate:
    """Atomic proposition with a signed distance to its boundary.

    ``distance`` maps a record (mapping of field name to value) to a signed
    real; positive means the proposition holds.  It is also called with the
    whole signal mapping of a trace, so it should be written with array-safe
    arithmetic.  ``member`` optionally gives the exact Boolean membership
    (needed when the proposition's set is closed, e.g. ``gap <= 0``).
    """

    name: str
    distance: Callable[[Mapping[str, Any]], Any]
    member: Optional[Callable[[Mapping[str, Any]], Any]] = None

    def holds(self, record: Mapping[str, float]) -> bool:
        if self.member is not None:
            return bool(self.member(record))
        return float(self.distance(record)) > 0

    def scaled(self, c: float) -> "Predicate":
        if not c > 0:
            raise ValueError("scale must be positive")
        dist = self.distance
        return Predicate(self.name, lambda r: c * dist(r), self.member)


# --------------------------------------------------------------------------
# Syntax tree


@dataclass(frozen=True)
class Interval:
    lo: float = 0.0
    hi: float = INF

    def __post_init__(self):
        if not (0 <= self.lo <= self.hi) or math.isnan(self.hi):
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")
        if math.isinf(self.lo):
            raise ValueError("interval lower bound must be finite")

    def steps(self, dt: float) -> Tuple[int, Optional[int]]:
        """Closed step range, rounded inward; ``hi`` is None when unbounded."""
        lo = math.ceil(self.lo / dt - _EPS)
        hi = None if math.isinf(self.hi) else math.floor(self.hi / dt + _EPS)
        return lo, hi

    def __str__(self) -> str:
        return f"[{_num(self.lo)},{_num(self.hi)}]"


def _num(x: float) -> str:
    if math.isinf(x):
        return "inf"
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


class Formula:
    """Base class of MTL syntax tree nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return format_formula(self)

    def children(self) -> Tuple["Formula", ...]:
        return ()

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children()), default=0)


@dataclass(frozen=True, eq=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class Atom(Formula):
    predicate: Predicate

    @property
    def name(self) -> str:
        return self.predicate.name


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Until(Formula):
    interval: Interval
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Globally(Formula):
    """Unbounded globally."""

    arg: Formula

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class GloballyI(Formula):
    interval: Interval
    arg: Formula

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class EventuallyI(Formula):
    interval: Interval
    arg: Formula

    def children(self):
        return (self.arg,)


def expand(f: Formula) -> Formula:
    """Rewrite derived connectives into the core syntax (true, atom, !, |, U, G).

    ``a & b`` becomes ``!(!a | !b)``, ``F_I a`` becomes ``true U_I a`` and
    ``G_I a`` becomes ``!(true U_I !a)``.
    """
    if isinstance(f, (TrueF, Atom)):
        return f
    if isinstance(f, Not):
        return Not(expand(f.arg))
    if isinstance(f, Or):
        return Or(expand(f.left), expand(f.right))
    if isinstance(f, And):
        return Not(Or(Not(expand(f.left)), Not(expand(f.right))))
    if isinstance(f, Until):
        return Until(f.interval, expand(f.left), expand(f.right))
    if isinstance(f, Globally):
        return Globally(expand(f.arg))
    if isinstance(f, EventuallyI):
        return Until(f.interval, TrueF(), expand(f.arg))
    if isinstance(f, GloballyI):
        return Not(Until(f.interval, TrueF(), Not(expand(f.arg))))
    raise TypeError(f"not a formula: {f!r}")


def format_formula(f: Formula) -> str:
    """Fully parenthesized text form; ``parse_formula`` inverts it exactly."""
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        return "!" + _unary_operand(f.arg)
    if isinstance(f, Or):
        return f"({format_formula(f.left)} | {format_formula(f.right)})"
    if isinstance(f, And):
        return f"({format_formula(f.left)} & {format_formula(f.right)})"
    if isinstance(f, Until):
        return f"({format_formula(f.left)} U{f.interval} {format_formula(f.right)})"
    if isinstance(f, Globally):
        return "G " + _unary_operand(f.arg)
    if isinstance(f, GloballyI):
        return f"G{f.interval} " + _unary_operand(f.arg)
    if isinstance(f, EventuallyI):
        return f"F{f.interval} " + _unary_operand(f.arg)
    raise TypeError(f"not a formula: {f!r}")


def _unary_operand(f: Formula) -> str:
    s = format_formula(f)
    return s if isinstance(f, (TrueF, Atom, Not, Or, And, Until)) else f"({s})"


# --------------------------------------------------------------------------
# Parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[!&|()\[\],]))"
)
_KEYWORDS = {"true", "G", "F", "U", "inf"}


@dataclass
class _Token:
    kind: str
    value: str
    pos: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise MTLSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(_Token(kind, m.group(kind), start))
        pos = m.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _Parser:
    # or    := and ('|' and)*
    # and   := until ('&' until)*
    # until := unary ('U' [interval] until)?
    # unary := '!' unary | 'G' [interval] unary | 'F' [interval] unary | primary
    # primary := 'true' | ident | '(' or ')'

    def __init__(self, text: str, predicates: Mapping[str, Predicate]):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.predicates = predicates

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def error(self, message: str) -> MTLSyntaxError:
        return MTLSyntaxError(message, self.tok.pos, self.text)

    def accept(self, value: str) -> bool:
        if self.tok.kind != "num" and self.tok.value == value:
            self.i += 1
            return True
        return False

    def expect(self, value: str) -> None:
        if not self.accept(value):
            found = self.tok.value or "end of input"
            raise self.error(f"expected {value!r}, found {found!r}")

    def parse(self) -> Formula:
        if self.tok.kind == "eof":
            raise self.error("empty formula")
        f = self.disjunction()
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.value!r}")
        return f

    def disjunction(self) -> Formula:
        f = self.conjunction()
        while self.accept("|"):
            f = Or(f, self.conjunction())
        return f

    def conjunction(self) -> Formula:
        f = self.until()
        while self.accept("&"):
            f = And(f, self.until())
        return f

    def until(self) -> Formula:
        f = self.unary()
        if self.accept("U"):
            interval = self.interval()
            f = Until(interval, f, self.until())
        return f

    def unary(self) -> Formula:
        if self.accept("!"):
            return Not(self.unary())
        if self.accept("G"):
            if self.tok.value == "[":
                interval = self.interval()
                return GloballyI(interval, self.unary())
            return Globally(self.unary())
        if self.accept("F"):
            return EventuallyI(self.interval(), self.unary())
        return self.primary()

    def primary(self) -> Formula:
        tok = self.tok
        if self.accept("("):
            f = self.disjunction()
            self.expect(")")
            return f
        if self.accept("true"):
            return TrueF()
        if tok.kind == "ident" and tok.value not in _KEYWORDS:
            self.i += 1
            if tok.value not in self.predicates:
                raise UnknownAtomError(tok.value, tok.pos)
            return Atom(self.predicates[tok.value])
        raise self.error(f"expected a formula, found {tok.value or 'end of input'!r}")

    def interval(self) -> Interval:
        # bare F / U mean [0, inf)
        if self.tok.value != "[":
            return Interval()
        start = self.tok.pos
        self.expect("[")
        lo = self.number(allow_inf=False)
        self.expect(",")
        hi = self.number(allow_inf=True)
        self.expect("]")
        try:
            return Interval(lo, hi)
        except ValueError as exc:
            raise MTLSyntaxError(str(exc), start, self.text) from None

    def number(self, allow_inf: bool) -> float:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return float(tok.value)
        if allow_inf and tok.value == "inf":
            self.i += 1
            return INF
        raise self.error(f"expected a number, found {tok.value or 'end of input'!r}")


def parse_formula(text: str, predicates: Mapping[str, Predicate]) -> Formula:
    """Parse an ASCII MTL formula.

    >>> preds = {"a": Predicate("a", lambda r: r["x"]), "b": Predicate("b", lambda r: -r["x"])}
    >>> parse_formula("a U[0,2] b", preds) == Until(Interval(0, 2), Atom(preds["a"]), Atom(preds["b"]))
    True
    """
    return _Parser(text, predicates).parse()


# --------------------------------------------------------------------------
# Quantitative semantics


def _window_reduce(x: np.ndarray, lo: int, hi: Optional[int], reduce, fill: float) -> np.ndarray:
    """out[t] = reduce(x[t+lo : t+hi+1]) clipped to the trace; ``fill`` if empty."""
    n = len(x)
    out = np.full(n, fill)
    if lo >= n or (hi is not None and hi < lo):
        return out
    if hi is None:
        suffix = reduce.accumulate(x[::-1])[::-1]
        out[: n - lo] = suffix[lo:]
        return out
    width = hi - lo + 1
    padded = np.concatenate([x, np.full(width, fill)])
    windows = sliding_window_view(padded, width)
    out[: n - lo] = reduce.reduce(windows[lo:n], axis=1)
    return out


def _until_signal(x1: np.ndarray, x2: np.ndarray, lo: int, hi: Optional[int]) -> np.ndarray:
    n = len(x1)
    out = np.full(n, -INF)
    if hi is not None and hi < lo:
        return out
    for t in range(n - lo):
        end = n - 1 if hi is None else min(t + hi, n - 1)
        # inner[k] = min x1[t .. t+k-1], +inf for k = 0
        inner = np.empty(end - t + 1)
        inner[0] = INF
        inner[1:] = np.minimum.accumulate(x1[t:end])
        out[t] = np.max(np.minimum(x2[t : end + 1], inner)[lo:])
    return out


def robustness_signal(f: Formula, tr: Trace) -> np.ndarray:
    """Robustness of ``f`` at every step of ``tr`` (no horizon check)."""
    cache: Dict[int, np.ndarray] = {}
    n = len(tr)

    def ev(g: Formula) -> np.ndarray:
        key = id(g)
        if key in cache:
            return cache[key]
        if isinstance(g, TrueF):
            out = np.full(n, INF)
        elif isinstance(g, Atom):
            d = np.asarray(g.predicate.distance(tr.signals), dtype=float)
            out = np.array(np.broadcast_to(d, (n,)), dtype=float)
        elif isinstance(g, Not):
            out = -ev(g.arg)
        elif isinstance(g, Or):
            out = np.maximum(ev(g.left), ev(g.right))
        elif isinstance(g, And):
            out = np.minimum(ev(g.left), ev(g.right))
        elif isinstance(g, Globally):
            out = _window_reduce(ev(g.arg), 0, None, np.minimum, INF)
        elif isinstance(g, GloballyI):
            lo, hi = g.interval.steps(tr.dt)
            out = _window_reduce(ev(g.arg), lo, hi, np.minimum, INF)
        elif isinstance(g, EventuallyI):
            lo, hi = g.interval.steps(tr.dt)
            out = _window_reduce(ev(g.arg), lo, hi, np.maximum, -INF)
        elif isinstance(g, Until):
            lo, hi = g.interval.steps(tr.dt)
            out = _until_signal(ev(g.left), ev(g.right), lo, hi)
        else:
            raise TypeError(f"not a formula: {g!r}")
        cache[key] = out
        return out

    return ev(f)


def _check_point(f: Formula, tr: Trace, t: int) -> None:
    n = len(tr)
    if not 0 <= t < n:
        raise IndexError(f"step {t} outside trace of length {n}")

    def check(g: Formula) -> None:
        if isinstance(g, (Not, Or, And)):
            for c in g.children():
                check(c)
        elif isinstance(g, (Until, GloballyI, EventuallyI)):
            lo, hi = g.interval.steps(tr.dt)
            if t + lo > n - 1 or (hi is not None and hi < lo):
                raise HorizonError(
                    f"interval {g.interval} at step {t} lies beyond a trace of {n} steps"
                )

    check(f)


def robustness(f: Formula, tr: Trace, t: int = 0) -> float:
    """Robustness value of ``tr`` with respect to ``f`` at step ``t``."""
    _check_point(f, tr, t)
    return float(robustness_signal(f, tr)[t])


def boolean_sat(f: Formula, tr: Trace, t: int = 0) -> bool:
    """Classical satisfaction by direct recursion; the sign oracle for :func:`robustness`."""
    _check_point(f, tr, t)
    n = len(tr)
    records = [tr.record(i) for i in range(n)]
    memo: Dict[Tuple[int, int], bool] = {}

    def window(interval: Interval, s: int) -> range:
        lo, hi = interval.steps(tr.dt)
        last = n - 1 if hi is None else min(s + hi, n - 1)
        return range(s + lo, last + 1)

    def sat(g: Formula, s: int) -> bool:
        key = (id(g), s)
        if key in memo:
            return memo[key]
        if isinstance(g, TrueF):
            r = True
        elif isinstance(g, Atom):
            r = g.predicate.holds(records[s])
        elif isinstance(g, Not):
            r = not sat(g.arg, s)
        elif isinstance(g, Or):
            r = sat(g.left, s) or sat(g.right, s)
        elif isinstance(g, And):
            r = sat(g.left, s) and sat(g.right, s)
        elif isinstance(g, Globally):
            r = all(sat(g.arg, u) for u in range(s, n))
        elif isinstance(g, GloballyI):
            r = all(sat(g.arg, u) for u in window(g.interval, s))
        elif isinstance(g, EventuallyI):
            r = any(sat(g.arg, u) for u in window(g.interval, s))
        elif isinstance(g, Until):
            r = any(
                sat(g.right, u) and all(sat(g.left, v) for v in range(s, u))
                for u in window(g.interval, s)
            )
        else:
            raise TypeError(f"not a formula: {g!r}")
        memo[key] = r
        return r

    return sat(f, t)


def atoms(f: Formula) -> Iterator[Atom]:
    if isinstance(f, Atom):
        yield f
    for c in f.children():
        yield from atoms(c)
