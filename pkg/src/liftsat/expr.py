"""Symbolic scalar expressions on chart coordinates.

Small expression kernel: exact differentiation, bounded simplification
(constant folding, 0/1 identities, flattening, like-term collection,
sin^2+cos^2 -> 1, exact shifts of sin/cos by multiples of pi), pointwise
and numpy-vectorized evaluation, and a parser/printer pair for the
grammar shipped in ``grammar.ebnf``.

Expressions are immutable; all operations return new trees.  Constants
are exact ``Fraction``s unless a float literal entered through user
input, in which case float contagion applies.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import numpy as np

__all__ = [
    "Expr", "Const", "Sym", "PiConst", "Add", "Mul", "Pow", "Func",
    "ExprError", "ParseError", "UnknownSymbolError", "EvalDomainError",
    "parse", "to_string", "simplify", "differentiate", "evaluate",
    "substitute", "free_symbols", "compile_numpy",
    "ZERO", "ONE", "PI", "const", "sym",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnknownSymbolError(ParseError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown symbol '{name}'", offset)
        self.name = name


class EvalDomainError(ExprError):
    """Evaluation hit a domain violation; carries the offending subtree."""

    def __init__(self, message: str, subexpr: "Expr"):
        super().__init__(f"{message}: {to_string(subexpr)}")
        self.subexpr = subexpr


class Expr:
    """Base node.  Subclasses are frozen dataclasses, hence hashable."""

    __slots__ = ()

    def __add__(self, other):
        return Add((self, _coerce(other)))

    def __radd__(self, other):
        return Add((_coerce(other), self))

    def __sub__(self, other):
        return Add((self, Mul((Const(Fraction(-1)), _coerce(other)))))

    def __rsub__(self, other):
        return Add((_coerce(other), Mul((Const(Fraction(-1)), self))))

    def __mul__(self, other):
        return Mul((self, _coerce(other)))

    def __rmul__(self, other):
        return Mul((_coerce(other), self))

    def __truediv__(self, other):
        return Mul((self, Pow(_coerce(other), -1)))

    def __rtruediv__(self, other):
        return Mul((_coerce(other), Pow(self, -1)))

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("only integer exponents are supported")
        return Pow(self, n)

    def __neg__(self):
        return Mul((Const(Fraction(-1)), self))

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Const(Expr):
    value: Fraction | float

    def __post_init__(self):
        if isinstance(self.value, int):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Sym(Expr):
    name: str


@dataclass(frozen=True)
class PiConst(Expr):
    """The circle constant; kept symbolic so shifts by pi stay exact."""


@dataclass(frozen=True)
class Add(Expr):
    terms: tuple[Expr, ...]


@dataclass(frozen=True)
class Mul(Expr):
    factors: tuple[Expr, ...]


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))
PI = PiConst()


def const(v) -> Const:
    if isinstance(v, (int, Fraction)):
        return Const(Fraction(v))
    return Const(float(v))


def sym(name: str) -> Sym:
    return Sym(name)


def _coerce(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, Fraction, float)):
        return const(v)
    raise TypeError(f"cannot use {type(v).__name__} in an expression")


# ---------------------------------------------------------------------------
# structural helpers

def _ckey(e: Expr) -> str:
    """Canonical sort key; deterministic across runs."""
    if isinstance(e, Const):
        return f"0C{e.value}"
    if isinstance(e, PiConst):
        return "1P"
    if isinstance(e, Sym):
        return f"2S{e.name}"
    if isinstance(e, Func):
        return f"3F{e.name}({_ckey(e.arg)})"
    if isinstance(e, Pow):
        return f"4P({_ckey(e.base)})^{e.exponent}"
    if isinstance(e, Mul):
        return "5M(" + ",".join(_ckey(f) for f in e.factors) + ")"
    if isinstance(e, Add):
        return "6A(" + ",".join(_ckey(t) for t in e.terms) + ")"
    raise TypeError(type(e))


def free_symbols(e: Expr) -> set[str]:
    out: set[str] = set()
    _collect_symbols(e, out)
    return out


def _collect_symbols(e: Expr, out: set[str]) -> None:
    if isinstance(e, Sym):
        out.add(e.name)
    elif isinstance(e, Add):
        for t in e.terms:
            _collect_symbols(t, out)
    elif isinstance(e, Mul):
        for f in e.factors:
            _collect_symbols(f, out)
    elif isinstance(e, Pow):
        _collect_symbols(e.base, out)
    elif isinstance(e, Func):
        _collect_symbols(e.arg, out)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    if isinstance(e, Sym):
        return mapping.get(e.name, e)
    if isinstance(e, Add):
        return Add(tuple(substitute(t, mapping) for t in e.terms))
    if isinstance(e, Mul):
        return Mul(tuple(substitute(f, mapping) for f in e.factors))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), e.exponent)
    if isinstance(e, Func):
        return Func(e.name, substitute(e.arg, mapping))
    return e


# ---------------------------------------------------------------------------
# simplification

def _is_const(e: Expr, v=None) -> bool:
    if not isinstance(e, Const):
        return False
    return True if v is None else e.value == v


def _split_coeff(e: Expr) -> tuple[Fraction | float, Expr | None]:
    """Split a simplified term into (numeric coefficient, residual factor)."""
    if isinstance(e, Const):
        return e.value, None
    if isinstance(e, Mul):
        if e.factors and isinstance(e.factors[0], Const):
            rest = e.factors[1:]
            rem = rest[0] if len(rest) == 1 else Mul(rest)
            return e.factors[0].value, rem
        return Fraction(1), e
    return Fraction(1), e


def _make_term(coeff, rest: Expr | None) -> Expr:
    if rest is None:
        return Const(coeff)
    if coeff == 1 and isinstance(coeff, Fraction):
        return rest
    if isinstance(rest, Mul):
        return Mul((Const(coeff),) + rest.factors)
    return Mul((Const(coeff), rest))


def _pi_multiple(e: Expr) -> Fraction | None:
    """Return k if e == k*pi for an exact rational k, else None."""
    if isinstance(e, PiConst):
        return Fraction(1)
    if isinstance(e, Mul) and len(e.factors) == 2:
        a, b = e.factors
        if isinstance(a, Const) and isinstance(a.value, Fraction) and isinstance(b, PiConst):
            return a.value
        if isinstance(b, Const) and isinstance(b.value, Fraction) and isinstance(a, PiConst):
            return b.value
    return None


def _extract_pi_shift(arg: Expr) -> tuple[Fraction, Expr]:
    """Write arg = rest + k*pi with k rational (k may be 0)."""
    if (k := _pi_multiple(arg)) is not None:
        return k, ZERO
    if isinstance(arg, Add):
        k_total = Fraction(0)
        rest = []
        for t in arg.terms:
            k = _pi_multiple(t)
            if k is None:
                rest.append(t)
            else:
                k_total += k
        if k_total != 0:
            if not rest:
                return k_total, ZERO
            return k_total, rest[0] if len(rest) == 1 else Add(tuple(rest))
    return Fraction(0), arg


def _sin_cos_exact(name: str, k2: int) -> Fraction | None:
    """Exact sin/cos at (k2/2)*pi; k2 integer."""
    k2 = k2 % 4
    table = {
        "sin": {0: Fraction(0), 1: Fraction(1), 2: Fraction(0), 3: Fraction(-1)},
        "cos": {0: Fraction(1), 1: Fraction(0), 2: Fraction(-1), 3: Fraction(0)},
    }
    return table[name][k2]


def _simplify_trig_shift(name: str, arg: Expr) -> Expr | None:
    """Reduce sin/cos(rest + k*pi) for half-integer k; exact values only."""
    k, rest = _extract_pi_shift(arg)
    if k == 0:
        return None
    if k.denominator not in (1, 2):
        return None
    k2 = int(k * 2)  # number of half-pi steps
    if _is_const(rest, 0):
        v = _sin_cos_exact(name, k2)
        return Const(v)
    # sin(x + j*pi/2), cos(x + j*pi/2) cycle through +-sin, +-cos
    j = k2 % 4
    cycle = {
        "sin": ((1, "sin"), (1, "cos"), (-1, "sin"), (-1, "cos")),
        "cos": ((1, "cos"), (-1, "sin"), (-1, "cos"), (1, "sin")),
    }
    sign, fname = cycle[name][j]
    inner = Func(fname, rest)
    return inner if sign == 1 else Mul((Const(Fraction(-1)), inner))


_EXPAND_POW_CAP = 8
_EXPAND_TERM_CAP = 200


def _distribute(coeff, factors: list[Expr]) -> Expr | None:
    """Distribute a product over its Add factors (bounded expansion).

    Returns the expanded Add, or None when there is nothing to expand
    or the expansion would exceed the term cap.
    """
    adds: list[tuple[Expr, ...]] = []
    keep: list[Expr] = []
    for f in factors:
        if isinstance(f, Add):
            adds.append(f.terms)
        elif isinstance(f, Pow) and isinstance(f.base, Add) \
                and 0 < f.exponent <= _EXPAND_POW_CAP \
                and len(f.base.terms) ** f.exponent <= _EXPAND_TERM_CAP:
            adds.extend([f.base.terms] * f.exponent)
        else:
            keep.append(f)
    if not adds:
        return None
    # distributing over a shared unexpandable power duplicates it per
    # term; keeping the product factored is both smaller and cheaper
    if any(isinstance(f, Pow) and isinstance(f.base, Add) for f in keep):
        return None
    count = 1
    for t in adds:
        count *= len(t)
        if count > _EXPAND_TERM_CAP:
            return None
    combos: list[list[Expr]] = [list(keep)]
    for terms in adds:
        combos = [c + [t] for c in combos for t in terms]
    out = []
    for c in combos:
        if coeff != 1 or not isinstance(coeff, Fraction):
            c = [Const(coeff)] + c
        if not c:
            out.append(ONE)
        elif len(c) == 1:
            out.append(c[0])
        else:
            out.append(Mul(tuple(c)))
    return Add(tuple(out))


def _fold_add(values) -> Fraction | float:
    frac = Fraction(0)
    flt = 0.0
    has_float = False
    for v in values:
        if isinstance(v, Fraction):
            frac += v
        else:
            flt += v
            has_float = True
    return float(frac) + flt if has_float else frac


def _fold_mul(values) -> Fraction | float:
    frac = Fraction(1)
    flt = 1.0
    has_float = False
    for v in values:
        if isinstance(v, Fraction):
            frac *= v
        else:
            flt *= v
            has_float = True
    return float(frac) * flt if has_float else frac


def _pythagoras(terms: list[Expr]) -> list[Expr] | None:
    """One rewrite c*sin(u)^2*R + c*cos(u)^2*R -> c*R inside a term list."""
    def peel(e: Expr):
        # returns (coeff, trig-name, trig-arg, other-factors) or None
        coeff, rest = _split_coeff(e)
        if rest is None:
            return None
        factors = rest.factors if isinstance(rest, Mul) else (rest,)
        for i, f in enumerate(factors):
            if isinstance(f, Pow) and f.exponent == 2 and isinstance(f.base, Func) \
                    and f.base.name in ("sin", "cos"):
                others = factors[:i] + factors[i + 1:]
                return coeff, f.base.name, f.base.arg, others
        return None

    peeled = [peel(t) for t in terms]
    for i in range(len(terms)):
        if peeled[i] is None or peeled[i][1] != "sin":
            continue
        ci, _, ui, oi = peeled[i]
        for j in range(len(terms)):
            if i == j or peeled[j] is None or peeled[j][1] != "cos":
                continue
            cj, _, uj, oj = peeled[j]
            if ci == cj and ui == uj and oi == oj:
                rest = None if not oi else (oi[0] if len(oi) == 1 else Mul(oi))
                new = [t for k, t in enumerate(terms) if k not in (i, j)]
                new.append(_make_term(ci, rest))
                return new
    return None


def simplify(e: Expr) -> Expr:
    """Bounded normal form; idempotent.  Not a full canonicalizer."""
    if isinstance(e, (Const, Sym, PiConst)):
        return e

    if isinstance(e, Func):
        arg = simplify(e.arg)
        if isinstance(arg, Const):
            v = _exact_func_value(e.name, arg.value)
            if v is not None:
                return Const(v)
        if e.name in ("sin", "cos"):
            shifted = _simplify_trig_shift(e.name, arg)
            if shifted is not None:
                return simplify(shifted)
        return Func(e.name, arg)

    if isinstance(e, Pow):
        base = simplify(e.base)
        n = e.exponent
        if n == 0:
            return ONE
        if n == 1:
            return base
        if isinstance(base, Const):
            if isinstance(base.value, Fraction):
                if base.value == 0 and n < 0:
                    return Pow(base, n)  # fold would divide by zero; leave for eval
                return Const(base.value ** n)
            return Const(base.value ** n)
        if isinstance(base, Pow):
            return simplify(Pow(base.base, base.exponent * n))
        if isinstance(base, Mul) and n > 0:
            return simplify(Mul(tuple(Pow(f, n) for f in base.factors)))
        if isinstance(base, Add) and 2 <= n <= _EXPAND_POW_CAP \
                and len(base.terms) ** n <= _EXPAND_TERM_CAP:
            return simplify(Mul(tuple([base] * n)))
        return Pow(base, n)

    if isinstance(e, Mul):
        factors: list[Expr] = []
        consts = []
        stack = list(e.factors)
        while stack:
            f = simplify(stack.pop(0))
            if isinstance(f, Mul):
                stack = list(f.factors) + stack
            elif isinstance(f, Const):
                consts.append(f.value)
            else:
                factors.append(f)
        coeff = _fold_mul(consts)
        if coeff == 0 and isinstance(coeff, Fraction):
            return ZERO
        # collect powers of a common base
        powers: dict[Expr, int] = {}
        order: list[Expr] = []
        for f in factors:
            base, exp = (f.base, f.exponent) if isinstance(f, Pow) else (f, 1)
            if base not in powers:
                powers[base] = 0
                order.append(base)
            powers[base] += exp
        out: list[Expr] = []
        for base in sorted(order, key=_ckey):
            exp = powers[base]
            if exp == 0:
                continue
            out.append(base if exp == 1 else Pow(base, exp))
        expanded = _distribute(coeff, out)
        if expanded is not None:
            return simplify(expanded)
        if not out:
            return Const(coeff)
        if coeff != 1 or not isinstance(coeff, Fraction):
            out.insert(0, Const(coeff))
        return out[0] if len(out) == 1 else Mul(tuple(out))

    if isinstance(e, Add):
        terms: list[Expr] = []
        consts = []
        stack = list(e.terms)
        while stack:
            t = simplify(stack.pop(0))
            if isinstance(t, Add):
                stack = list(t.terms) + stack
            elif isinstance(t, Const):
                consts.append(t.value)
            else:
                terms.append(t)
        # collect like terms
        collected: dict[Expr, list] = {}
        order: list[Expr] = []
        for t in terms:
            coeff, rest = _split_coeff(t)
            key = rest if rest is not None else ONE
            if key not in collected:
                collected[key] = []
                order.append(key)
            collected[key].append(coeff)
        terms = []
        for key in order:
            coeff = _fold_add(collected[key])
            if coeff == 0 and isinstance(coeff, Fraction):
                continue
            terms.append(_make_term(coeff, None if key == ONE else key))
        while (rewritten := _pythagoras(terms)) is not None:
            terms = rewritten
        const_val = _fold_add(consts)
        merged: list[Expr] = []
        extra = []
        for t in terms:
            if isinstance(t, Const):
                extra.append(t.value)
            else:
                merged.append(t)
        const_val = _fold_add([const_val] + extra)
        merged.sort(key=_ckey)
        if const_val != 0 or not isinstance(const_val, Fraction):
            merged.append(Const(const_val))
        if not merged:
            return ZERO
        return merged[0] if len(merged) == 1 else Add(tuple(merged))

    raise TypeError(type(e))


def _exact_func_value(name: str, v) -> Fraction | float | None:
    if isinstance(v, float):
        try:
            return float(getattr(math, name if name != "abs" else "fabs")(v))
        except ValueError:
            return None
    # exact rational argument
    if name == "abs":
        return abs(v)
    if v == 0:
        return {"sin": Fraction(0), "cos": Fraction(1), "exp": Fraction(1),
                "sqrt": Fraction(0), "log": None}[name]
    if name == "sqrt" and v >= 0:
        num, den = v.numerator, v.denominator
        rn, rd = math.isqrt(num), math.isqrt(den)
        if rn * rn == num and rd * rd == den:
            return Fraction(rn, rd)
    if name == "log" and v == 1:
        return Fraction(0)
    return None


def is_zero(e: Expr) -> bool:
    return simplify(e) == ZERO


# ---------------------------------------------------------------------------
# differentiation

def differentiate(e: Expr, name: str) -> Expr:
    """Exact partial derivative with respect to the symbol ``name``."""
    return simplify(_diff(simplify(e), name))


def _diff(e: Expr, v: str) -> Expr:
    if isinstance(e, (Const, PiConst)):
        return ZERO
    if isinstance(e, Sym):
        return ONE if e.name == v else ZERO
    if isinstance(e, Add):
        return Add(tuple(_diff(t, v) for t in e.terms))
    if isinstance(e, Mul):
        terms = []
        for i, f in enumerate(e.factors):
            df = _diff(f, v)
            if df == ZERO:
                continue
            rest = e.factors[:i] + (df,) + e.factors[i + 1:]
            terms.append(Mul(rest))
        return Add(tuple(terms)) if terms else ZERO
    if isinstance(e, Pow):
        db = _diff(e.base, v)
        if db == ZERO:
            return ZERO
        return Mul((Const(Fraction(e.exponent)), Pow(e.base, e.exponent - 1), db))
    if isinstance(e, Func):
        da = _diff(e.arg, v)
        if da == ZERO:
            return ZERO
        u = e.arg
        outer = {
            "sin": lambda: Func("cos", u),
            "cos": lambda: Mul((Const(Fraction(-1)), Func("sin", u))),
            "exp": lambda: e,
            "log": lambda: Pow(u, -1),
            "sqrt": lambda: Mul((Const(Fraction(1, 2)), Pow(Func("sqrt", u), -1))),
            "abs": lambda: Mul((u, Pow(Func("abs", u), -1))),
        }[e.name]()
        return Mul((outer, da))
    raise TypeError(type(e))


# ---------------------------------------------------------------------------
# evaluation

def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate at a point; raises EvalDomainError on domain violations."""
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, PiConst):
        return math.pi
    if isinstance(e, Sym):
        try:
            return float(env[e.name])
        except KeyError:
            raise EvalDomainError(f"no value supplied for symbol '{e.name}'", e) from None
    if isinstance(e, Add):
        return math.fsum(evaluate(t, env) for t in e.terms)
    if isinstance(e, Mul):
        out = 1.0
        for f in e.factors:
            out *= evaluate(f, env)
        return out
    if isinstance(e, Pow):
        b = evaluate(e.base, env)
        if b == 0.0 and e.exponent < 0:
            raise EvalDomainError("division by zero", e)
        try:
            return b ** e.exponent
        except OverflowError:
            raise EvalDomainError("overflow in power", e) from None
    if isinstance(e, Func):
        a = evaluate(e.arg, env)
        if e.name == "log":
            if a <= 0.0:
                raise EvalDomainError("log of a non-positive value", e)
            return math.log(a)
        if e.name == "sqrt":
            if a < 0.0:
                raise EvalDomainError("sqrt of a negative value", e)
            return math.sqrt(a)
        if e.name == "abs":
            return abs(a)
        try:
            return getattr(math, e.name)(a)
        except (ValueError, OverflowError):
            raise EvalDomainError(f"domain error in {e.name}", e) from None
    raise TypeError(type(e))


def _np_source(e: Expr) -> str:
    if isinstance(e, Const):
        if isinstance(e.value, Fraction):
            return f"({e.value.numerator}/{e.value.denominator})" if e.value.denominator != 1 \
                else f"({e.value.numerator})"
        return repr(e.value)
    if isinstance(e, PiConst):
        return "np.pi"
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Add):
        return "(" + "+".join(_np_source(t) for t in e.terms) + ")"
    if isinstance(e, Mul):
        return "(" + "*".join(_np_source(f) for f in e.factors) + ")"
    if isinstance(e, Pow):
        if e.exponent < 0:
            return f"({_np_source(e.base)}**{e.exponent}.0)"
        return f"({_np_source(e.base)}**{e.exponent})"
    if isinstance(e, Func):
        fn = {"abs": "np.abs", "sin": "np.sin", "cos": "np.cos",
              "exp": "np.exp", "log": "np.log", "sqrt": "np.sqrt"}[e.name]
        return f"{fn}({_np_source(e.arg)})"
    raise TypeError(type(e))


def compile_numpy(e: Expr, names: Iterable[str]) -> Callable:
    """Compile to a vectorized callable of positional array arguments.

    Subtrees occurring more than once become local variables (cheap
    common-subexpression elimination).  Domain violations produce
    nan/inf rather than exceptions; callers on this fast path are
    expected to stay inside the domain.
    """
    names = tuple(names)
    missing = free_symbols(e) - set(names)
    if missing:
        raise ExprError(f"expression uses undeclared symbols {sorted(missing)}")

    counts: dict[Expr, int] = {}

    def count(node: Expr) -> None:
        if isinstance(node, (Const, Sym, PiConst)):
            return
        counts[node] = counts.get(node, 0) + 1
        if counts[node] > 1:
            return
        if isinstance(node, Add):
            for t in node.terms:
                count(t)
        elif isinstance(node, Mul):
            for f in node.factors:
                count(f)
        elif isinstance(node, Pow):
            count(node.base)
        elif isinstance(node, Func):
            count(node.arg)

    count(e)
    memo: dict[Expr, str] = {}
    lines: list[str] = []

    def emit(node: Expr) -> str:
        if node in memo:
            return memo[node]
        if isinstance(node, Add):
            src = "(" + "+".join(emit(t) for t in node.terms) + ")"
        elif isinstance(node, Mul):
            src = "(" + "*".join(emit(f) for f in node.factors) + ")"
        elif isinstance(node, Pow):
            exp = f"{node.exponent}.0" if node.exponent < 0 else str(node.exponent)
            src = f"({emit(node.base)}**{exp})"
        elif isinstance(node, Func):
            fn = {"abs": "np.abs", "sin": "np.sin", "cos": "np.cos",
                  "exp": "np.exp", "log": "np.log", "sqrt": "np.sqrt"}[node.name]
            src = f"{fn}({emit(node.arg)})"
        else:
            return _np_source(node)
        if counts.get(node, 0) >= 2:
            var = f"_t{len(memo)}"
            lines.append(f"    {var} = {src}")
            memo[node] = var
            return var
        return src

    body = emit(e)
    args = ", ".join(names) if names else "_unused=None"
    zero = "+".join(f"0.0*{n}" for n in names) if names else "0.0"
    src = (f"def _compiled({args}):\n"
           + "\n".join(lines) + ("\n" if lines else "")
           + f"    return ({body}) + ({zero})\n")
    scope = {"np": np}
    exec(src, scope)  # noqa: S102 - source generated from our own AST
    return scope["_compiled"]


# ---------------------------------------------------------------------------
# parser / printer

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[()+\-*/^,]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise ParseError(f"unexpected character '{text[at]}'", at)
        if m.group("num") is not None:
            lit = m.group("num")
            if "." in lit or "e" in lit or "E" in lit:
                tokens.append(("num", float(lit), m.start("num")))
            else:
                tokens.append(("num", Fraction(int(lit)), m.start("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            op = m.group("op")
            tokens.append(("op", "^" if op == "**" else op, m.start("op")))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens, symbols):
        self.tokens = tokens
        self.i = 0
        self.symbols = symbols

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, off = self.next()
        if kind != "op" or val != op:
            raise ParseError(f"expected '{op}'", off)

    def parse_expr(self) -> Expr:
        e = self.parse_term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                rhs = self.parse_term()
                e = e + rhs if val == "+" else e - rhs
            else:
                return e

    def parse_term(self) -> Expr:
        e = self.parse_unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                rhs = self.parse_unary()
                e = e * rhs if val == "*" else e / rhs
            else:
                return e

    def parse_unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return -self.parse_unary()
        if kind == "op" and val == "+":
            self.next()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self) -> Expr:
        base = self.parse_atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.next()
            return Pow(base, self.parse_int_exponent())
        return base

    def parse_int_exponent(self) -> int:
        sign = 1
        kind, val, off = self.peek()
        parenthesized = kind == "op" and val == "("
        if parenthesized:
            self.next()
            kind, val, off = self.peek()
        if kind == "op" and val == "-":
            self.next()
            sign = -1
            kind, val, off = self.peek()
        if kind != "num" or not isinstance(val, Fraction) or val.denominator != 1:
            raise ParseError("exponent must be an integer literal", off)
        self.next()
        if parenthesized:
            self.expect_op(")")
        return sign * int(val)

    def parse_atom(self) -> Expr:
        kind, val, off = self.next()
        if kind == "num":
            return Const(val)
        if kind == "name":
            nk, nv, _ = self.peek()
            if nk == "op" and nv == "(":
                if val not in FUNCTIONS:
                    raise UnknownSymbolError(val, off)
                self.next()
                arg = self.parse_expr()
                self.expect_op(")")
                return Func(val, arg)
            if val == "pi":
                return PI
            if self.symbols is not None and val not in self.symbols:
                raise UnknownSymbolError(val, off)
            return Sym(val)
        if kind == "op" and val == "(":
            e = self.parse_expr()
            self.expect_op(")")
            return e
        raise ParseError("expected a value", off)


def parse(text: str, symbols: Iterable[str] | None = None) -> Expr:
    """Parse infix text into an Expr tree.

    If ``symbols`` is given, identifiers outside it (other than ``pi``
    and function names) raise :class:`UnknownSymbolError`.
    """
    sym_set = None if symbols is None else set(symbols)
    p = _Parser(_tokenize(text), sym_set)
    e = p.parse_expr()
    kind, _, off = p.peek()
    if kind != "end":
        raise ParseError("trailing input", off)
    return e


def _const_str(v: Fraction | float) -> str:
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return str(v.numerator)
        return f"{v.numerator}/{v.denominator}"
    return repr(v)


def _print_pow(e: Pow) -> str:
    base = to_string(e.base)
    if isinstance(e.base, (Add, Mul, Pow)) or (isinstance(e.base, Const)
                                               and (e.base.value < 0 or
                                                    (isinstance(e.base.value, Fraction)
                                                     and e.base.value.denominator != 1))):
        base = f"({base})"
    exp = str(e.exponent) if e.exponent >= 0 else f"(-{-e.exponent})"
    return f"{base}^{exp}"


def _print_factor(e: Expr) -> str:
    s = to_string(e)
    if isinstance(e, Add) or (isinstance(e, Const) and (e.value < 0 or
                              (isinstance(e.value, Fraction) and e.value.denominator != 1))):
        return f"({s})"
    if isinstance(e, Mul):
        return f"({s})"
    return s


def to_string(e: Expr) -> str:
    """Print in the shipped grammar; reparse-able."""
    if isinstance(e, Const):
        v = e.value
        if isinstance(v, Fraction) and v < 0:
            return f"-{_const_str(-v)}"
        if isinstance(v, float) and v < 0:
            return f"-{repr(-v)}"
        return _const_str(v)
    if isinstance(e, PiConst):
        return "pi"
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({to_string(e.arg)})"
    if isinstance(e, Pow):
        if e.exponent < 0:
            return f"1/{_print_pow(Pow(e.base, -e.exponent))}" if e.exponent != -1 \
                else f"1/{_print_factor(e.base)}"
        return _print_pow(e)
    if isinstance(e, Mul):
        num_parts: list[str] = []
        den_parts: list[str] = []
        sign = ""
        for f in e.factors:
            if isinstance(f, Const) and f.value == -1:
                sign = "-" if sign == "" else ""
                continue
            if isinstance(f, Pow) and f.exponent < 0:
                den_parts.append(_print_factor(f.base) if f.exponent == -1
                                 else _print_pow(Pow(f.base, -f.exponent)))
            else:
                num_parts.append(_print_factor(f))
        num = "*".join(num_parts) if num_parts else "1"
        out = sign + num
        for d in den_parts:
            out += f"/{d}"
        return out
    if isinstance(e, Add):
        out = to_string(e.terms[0])
        for t in e.terms[1:]:
            coeff, rest = _split_coeff(t)
            if (isinstance(coeff, Fraction) and coeff < 0) or (isinstance(coeff, float) and coeff < 0):
                out += f" - {to_string(_make_term(-coeff, rest))}"
            else:
                out += f" + {to_string(t)}"
        return out
    raise TypeError(type(e))
