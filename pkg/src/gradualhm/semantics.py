"""Small-step evaluation of the cast calculus.

Call-by-value, left to right.  Casts between matching shapes discharge
immediately; casts into `?` go through a ground type; projections out of
`?` succeed, fail with blame, or — in the default mode — instantiate a
type variable on the spot, threading the discovered substitution through
the whole configuration.  The `baseline` mode disables the two
instantiation rules and otherwise behaves identically, which is the right
comparison point for programs that mention no type variables.
"""
from __future__ import annotations

import sys
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .core import (
    ARROW_GROUND,
    BlameLabel,
    DAbs,
    DApp,
    DBlame,
    DCast,
    DConst,
    DFix,
    DIf,
    DLetP,
    DOp,
    DTerm,
    DVar,
    DYN,
    EMPTY_SUBST,
    Nu,
    StuckError,
    TyArrow,
    TyBase,
    TyDyn,
    TypeSubst,
    TyVar,
    apply_subst_term,
    delta,
    ground_of,
    is_ground,
)

DEFAULT_FUEL = 100_000
TRACE_RING_SIZE = 1000


def is_value(f: DTerm) -> bool:
    if isinstance(f, (DConst, DAbs, DFix)):
        return True
    if isinstance(f, DCast):
        if not is_value(f.expr):
            return False
        if isinstance(f.src, TyArrow) and isinstance(f.tgt, TyArrow):
            return True
        return is_ground(f.src) and isinstance(f.tgt, TyDyn)
    return False


def canonical_form(f: DTerm) -> Optional[str]:
    """Classify a value: 'const', 'lambda', 'wrapped', or 'injected'."""
    if isinstance(f, DConst):
        return "const"
    if isinstance(f, (DAbs, DFix)):
        return "lambda"
    if isinstance(f, DCast) and is_value(f):
        if isinstance(f.tgt, TyDyn):
            return "injected"
        return "wrapped"
    return None


# ---------------------------------------------------------------------------
# Term substitution
# ---------------------------------------------------------------------------


def subst_term(body: DTerm, name: str, value: DTerm) -> DTerm:
    """Capture-free `body[name := value]` for a monomorphic value."""
    if isinstance(body, DVar):
        if body.name == name:
            if body.targs:
                raise StuckError(f"{name!r} is monomorphic but used with type arguments")
            return value
        return body
    if isinstance(body, (DConst, DBlame)):
        return body
    if isinstance(body, DOp):
        return DOp(body.op, subst_term(body.left, name, value), subst_term(body.right, name, value))
    if isinstance(body, DAbs):
        if body.param == name:
            return body
        return DAbs(body.param, body.ty, subst_term(body.body, name, value))
    if isinstance(body, DApp):
        return DApp(subst_term(body.fn, name, value), subst_term(body.arg, name, value))
    if isinstance(body, DIf):
        return DIf(
            subst_term(body.cond, name, value),
            subst_term(body.then, name, value),
            subst_term(body.els, name, value),
        )
    if isinstance(body, DCast):
        return DCast(subst_term(body.expr, name, value), body.src, body.tgt, body.label)
    if isinstance(body, DLetP):
        bound = subst_term(body.bound, name, value)
        inner = body.body if body.name == name else subst_term(body.body, name, value)
        return DLetP(body.name, body.binders, bound, inner)
    if isinstance(body, DFix):
        if name in (body.fname, body.param):
            return body
        return DFix(body.fname, body.param, body.fnty, subst_term(body.body, name, value))
    raise TypeError(f"not a term: {body!r}")


def subst_poly(body: DTerm, name: str, binders: tuple[str, ...], value: DTerm, fresh) -> DTerm:
    """`body[name := /\\binders. value]`.

    Each occurrence instantiates the binders with its recorded type
    arguments; a `ν` argument draws a fresh runtime variable *per
    occurrence*, so separate uses stay independent.
    """
    if isinstance(body, DVar):
        if body.name != name:
            return body
        if len(body.targs) != len(binders):
            raise StuckError(
                f"{name!r} applied to {len(body.targs)} type arguments, expected {len(binders)}"
            )
        mapping = {}
        for binder, arg in zip(binders, body.targs):
            mapping[binder] = TyVar(fresh()) if isinstance(arg, Nu) else arg
        return apply_subst_term(TypeSubst(mapping), value)
    if isinstance(body, (DConst, DBlame)):
        return body
    if isinstance(body, DOp):
        return DOp(
            body.op,
            subst_poly(body.left, name, binders, value, fresh),
            subst_poly(body.right, name, binders, value, fresh),
        )
    if isinstance(body, DAbs):
        if body.param == name:
            return body
        return DAbs(body.param, body.ty, subst_poly(body.body, name, binders, value, fresh))
    if isinstance(body, DApp):
        return DApp(
            subst_poly(body.fn, name, binders, value, fresh),
            subst_poly(body.arg, name, binders, value, fresh),
        )
    if isinstance(body, DIf):
        return DIf(
            subst_poly(body.cond, name, binders, value, fresh),
            subst_poly(body.then, name, binders, value, fresh),
            subst_poly(body.els, name, binders, value, fresh),
        )
    if isinstance(body, DCast):
        return DCast(subst_poly(body.expr, name, binders, value, fresh), body.src, body.tgt, body.label)
    if isinstance(body, DLetP):
        bound = subst_poly(body.bound, name, binders, value, fresh)
        inner = body.body if body.name == name else subst_poly(body.body, name, binders, value, fresh)
        return DLetP(body.name, body.binders, bound, inner)
    if isinstance(body, DFix):
        if name in (body.fname, body.param):
            return body
        return DFix(body.fname, body.param, body.fnty, subst_poly(body.body, name, binders, value, fresh))
    raise TypeError(f"not a term: {body!r}")


# ---------------------------------------------------------------------------
# One step
# ---------------------------------------------------------------------------

_VALUE = ("value",)


class Evaluator:
    """Owns the runtime fresh-variable counter for one evaluation."""

    def __init__(self, mode: str = "dti", rvar_start: int = 0):
        if mode not in ("dti", "baseline"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.rvar_counter = rvar_start

    def fresh_rvar(self) -> str:
        name = f"r{self.rvar_counter}"
        self.rvar_counter += 1
        return name

    # The result of `step` is one of:
    #   ("value",)                      -- the term is a value
    #   ("blame", label)                -- the term is blame, or contains it
    #   ("step", term, rule, subst)     -- reduced; subst already applied
    def step(self, f: DTerm):
        if is_value(f):
            return _VALUE
        if isinstance(f, DBlame):
            return ("blame", f.label)
        if isinstance(f, DOp):
            sub = self.step(f.left)
            if sub[0] == "step":
                _, l2, rule, s = sub
                return ("step", DOp(f.op, l2, apply_subst_term(s, f.right)), rule, s)
            if sub[0] == "blame":
                return sub
            sub = self.step(f.right)
            if sub[0] == "step":
                _, r2, rule, s = sub
                return ("step", DOp(f.op, apply_subst_term(s, f.left), r2), rule, s)
            if sub[0] == "blame":
                return sub
            if not (isinstance(f.left, DConst) and isinstance(f.right, DConst)):
                raise StuckError(f"operator {f.op} applied to non-constants")
            return ("step", DConst(delta(f.op, f.left.value, f.right.value)), "R_Op", EMPTY_SUBST)
        if isinstance(f, DApp):
            sub = self.step(f.fn)
            if sub[0] == "step":
                _, fn2, rule, s = sub
                return ("step", DApp(fn2, apply_subst_term(s, f.arg)), rule, s)
            if sub[0] == "blame":
                return sub
            sub = self.step(f.arg)
            if sub[0] == "step":
                _, arg2, rule, s = sub
                return ("step", DApp(apply_subst_term(s, f.fn), arg2), rule, s)
            if sub[0] == "blame":
                return sub
            return self._apply(f.fn, f.arg)
        if isinstance(f, DIf):
            sub = self.step(f.cond)
            if sub[0] == "step":
                _, c2, rule, s = sub
                return (
                    "step",
                    DIf(c2, apply_subst_term(s, f.then), apply_subst_term(s, f.els)),
                    rule,
                    s,
                )
            if sub[0] == "blame":
                return sub
            if isinstance(f.cond, DConst) and f.cond.value is True:
                return ("step", f.then, "R_IfTrue", EMPTY_SUBST)
            if isinstance(f.cond, DConst) and f.cond.value is False:
                return ("step", f.els, "R_IfFalse", EMPTY_SUBST)
            raise StuckError("condition evaluated to a non-boolean")
        if isinstance(f, DCast):
            sub = self.step(f.expr)
            if sub[0] == "step":
                _, e2, rule, s = sub
                return ("step", DCast(e2, s.apply(f.src), s.apply(f.tgt), f.label), rule, s)
            if sub[0] == "blame":
                return sub
            return self._cast_step(f)
        if isinstance(f, DLetP):
            if not is_value(f.bound):
                raise StuckError("polymorphic let bound a non-value")
            out = subst_poly(f.body, f.name, f.binders, f.bound, self.fresh_rvar)
            return ("step", out, "R_LetP", EMPTY_SUBST)
        if isinstance(f, DVar):
            raise StuckError(f"free variable {f.name!r} reached evaluation")
        raise TypeError(f"not a term: {f!r}")

    def _apply(self, fn: DTerm, arg: DTerm):
        if isinstance(fn, DAbs):
            return ("step", subst_term(fn.body, fn.param, arg), "R_Beta", EMPTY_SUBST)
        if isinstance(fn, DFix):
            unrolled = subst_term(fn.body, fn.fname, fn)
            return ("step", subst_term(unrolled, fn.param, arg), "R_Unroll", EMPTY_SUBST)
        if isinstance(fn, DCast) and isinstance(fn.src, TyArrow) and isinstance(fn.tgt, TyArrow):
            inner = DCast(arg, fn.tgt.dom, fn.src.dom, fn.label.negate())
            out = DCast(DApp(fn.expr, inner), fn.src.cod, fn.tgt.cod, fn.label)
            return ("step", out, "R_AppCast", EMPTY_SUBST)
        raise StuckError("applied a non-function value")

    def _cast_step(self, f: DCast):
        w, src, tgt, lbl = f.expr, f.src, f.tgt, f.label
        if isinstance(src, TyBase) and src == tgt:
            return ("step", w, "R_IdBase", EMPTY_SUBST)
        if isinstance(src, TyDyn) and isinstance(tgt, TyDyn):
            return ("step", w, "R_IdStar", EMPTY_SUBST)
        if isinstance(tgt, TyDyn):
            # src is not `?` and not ground, else the cast would be a value.
            g = ground_of(src)
            if g is None or g == src:
                raise StuckError(f"no rule casts from {src!r} to ?")
            return ("step", DCast(DCast(w, src, g, lbl), g, DYN, lbl), "R_Ground", EMPTY_SUBST)
        if isinstance(src, TyDyn):
            if not (isinstance(w, DCast) and is_ground(w.src) and isinstance(w.tgt, TyDyn)):
                raise StuckError("projection from ? applied to a non-injected value")
            if is_ground(tgt):
                if w.src == tgt:
                    return ("step", w.expr, "R_Succeed", EMPTY_SUBST)
                return ("step", DBlame(lbl), "R_Fail", EMPTY_SUBST)
            if isinstance(tgt, TyVar):
                if self.mode == "baseline":
                    raise StuckError(
                        "baseline mode cannot instantiate type variables at run time"
                    )
                if isinstance(w.src, TyBase):
                    s = TypeSubst({tgt.name: w.src})
                    return ("step", apply_subst_term(s, w.expr), "R_InstBase", s)
                # w.src is the arrow ground: split the variable and retry.
                x1, x2 = TyVar(self.fresh_rvar()), TyVar(self.fresh_rvar())
                s = TypeSubst({tgt.name: TyArrow(x1, x2)})
                w2 = apply_subst_term(s, w)
                mid = DCast(w2, DYN, ARROW_GROUND, lbl)
                out = DCast(mid, ARROW_GROUND, TyArrow(x1, x2), lbl)
                return ("step", out, "R_InstArrow", s)
            if isinstance(tgt, TyArrow):
                mid = DCast(w, DYN, ARROW_GROUND, lbl)
                return ("step", DCast(mid, ARROW_GROUND, tgt, lbl), "R_Expand", EMPTY_SUBST)
            raise StuckError(f"no rule casts from ? to {tgt!r}")
        raise StuckError(f"no rule casts from {src!r} to {tgt!r}")


# ---------------------------------------------------------------------------
# The driver
# ---------------------------------------------------------------------------


@dataclass
class TraceEntry:
    index: int
    rule: str
    subst: TypeSubst
    term: DTerm


@dataclass
class Outcome:
    kind: str  # 'value' | 'blame' | 'timeout'
    term: Optional[DTerm]
    label: Optional[BlameLabel]
    steps: int
    accum_subst: TypeSubst
    trace: list = field(default_factory=list)
    rules: list = field(default_factory=list)

    @property
    def is_value(self) -> bool:
        return self.kind == "value"


def evaluate(
    f: DTerm,
    mode: str = "dti",
    fuel: int = DEFAULT_FUEL,
    trace: str = "ring",
    rvar_start: int = 0,
) -> Outcome:
    """Run `f` to a value, blame, or fuel exhaustion.

    Records, per step, the rule that fired and any substitution it
    produced.  `trace` is 'ring' (last 1000 entries), 'full', or 'off';
    the rule-name sequence is always kept in full.
    """
    if sys.getrecursionlimit() < 30_000:
        sys.setrecursionlimit(30_000)
    ev = Evaluator(mode, rvar_start)
    buf = deque(maxlen=TRACE_RING_SIZE) if trace == "ring" else [] if trace == "full" else None
    rules: list[str] = []
    accum = EMPTY_SUBST
    cur = f
    steps = 0
    while True:
        res = ev.step(cur)
        if res[0] == "value":
            return Outcome("value", cur, None, steps, accum, list(buf or []), rules)
        if res[0] == "blame":
            if isinstance(cur, DBlame):
                return Outcome("blame", cur, cur.label, steps, accum, list(buf or []), rules)
            if steps >= fuel:
                return Outcome("timeout", cur, None, steps, accum, list(buf or []), rules)
            # A nested blame aborts the surrounding context in one step.
            cur = DBlame(res[1])
            steps += 1
            rules.append("E_Abort")
            if buf is not None:
                buf.append(TraceEntry(steps, "E_Abort", EMPTY_SUBST, cur))
            continue
        if steps >= fuel:
            return Outcome("timeout", cur, None, steps, accum, list(buf or []), rules)
        _, cur, rule, s = res
        steps += 1
        rules.append(rule)
        if s.mapping:
            accum = s.compose(accum)
        if buf is not None:
            buf.append(TraceEntry(steps, rule, s, cur))


def run_program(f: DTerm, **kwargs) -> Outcome:
    return evaluate(f, **kwargs)
