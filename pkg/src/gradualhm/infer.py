"""Static type inference for the surface language.

Constraint-based Hindley-Milner inference extended with the dynamic type:
consistency constraints discard `?` (it is consistent with everything),
while equality constraints treat `?` as an ordinary constructor.  Type
variables always stand for static types, so binding a variable to a type
containing `?` is never admissible; where a consistency constraint pits a
variable against an arrow containing `?`, the variable is expanded into an
arrow of fresh variables and the pieces are constrained recursively.

Variables the solver never touches remain in the result as residuals; the
evaluator may instantiate them at run time.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .core import (
    Abs,
    App,
    BOOL,
    ClashError,
    Const,
    DYN,
    GradualType,
    If,
    Let,
    LetRec,
    OPS,
    OccursCheckError,
    Op,
    StaticTypeError,
    Term,
    TyArrow,
    TyBase,
    TyDyn,
    TypeSubst,
    TyVar,
    Var,
    ftv,
    is_static,
    type_of_const,
)


@dataclass(frozen=True)
class Scheme:
    """A type scheme; `binders` may be empty for monomorphic bindings."""

    binders: tuple[str, ...]
    body: GradualType

    def ftv(self) -> tuple[str, ...]:
        return tuple(n for n in ftv(self.body) if n not in self.binders)


TypeEnv = dict[str, Scheme]


@dataclass
class InferenceResult:
    term: Term  # the input term, annotated in place
    ty: GradualType
    subst: TypeSubst
    residuals: tuple[str, ...]
    env_names: tuple[str, ...] = ()


_AVAR_RE = re.compile(r"^a(\d+)$")


def _collect_annotation_vars(e: Term, out: set[str]) -> None:
    def add(u: Optional[GradualType]) -> None:
        if u is not None:
            out.update(ftv(u))

    if isinstance(e, Abs):
        add(e.annot)
        _collect_annotation_vars(e.body, out)
    elif isinstance(e, Op):
        _collect_annotation_vars(e.left, out)
        _collect_annotation_vars(e.right, out)
    elif isinstance(e, App):
        _collect_annotation_vars(e.fn, out)
        _collect_annotation_vars(e.arg, out)
    elif isinstance(e, If):
        for sub in (e.cond, e.then, e.els):
            _collect_annotation_vars(sub, out)
    elif isinstance(e, Let):
        _collect_annotation_vars(e.bound, out)
        _collect_annotation_vars(e.body, out)
    elif isinstance(e, LetRec):
        _collect_annotation_vars(e.body, out)
        _collect_annotation_vars(e.expr, out)


class Inferencer:
    """Runs inference over one term, owning the fresh-variable counter."""

    def __init__(self, term: Term):
        self.subst: dict[str, GradualType] = {}
        used: set[str] = set()
        _collect_annotation_vars(term, used)
        self.counter = 0
        for name in used:
            m = _AVAR_RE.match(name)
            if m:
                self.counter = max(self.counter, int(m.group(1)) + 1)

    # -- variables and resolution ----------------------------------------

    def fresh(self) -> TyVar:
        v = TyVar(f"a{self.counter}")
        self.counter += 1
        return v

    def resolve(self, u: GradualType) -> GradualType:
        """Fully apply the current substitution."""
        if isinstance(u, TyVar):
            t = self.subst.get(u.name)
            return u if t is None else self.resolve(t)
        if isinstance(u, TyArrow):
            d, c = self.resolve(u.dom), self.resolve(u.cod)
            if d is u.dom and c is u.cod:
                return u
            return TyArrow(d, c)
        return u

    def bind(self, name: str, t: GradualType) -> None:
        if isinstance(t, TyVar) and t.name == name:
            return
        if name in ftv(t):
            raise OccursCheckError(f"'{name} occurs in {t!r}")
        self.subst[name] = t

    # -- constraints ------------------------------------------------------

    def consist(self, a: GradualType, b: GradualType) -> None:
        a, b = self.resolve(a), self.resolve(b)
        if isinstance(a, TyDyn) or isinstance(b, TyDyn):
            return
        if isinstance(a, TyBase) and isinstance(b, TyBase):
            if a.name != b.name:
                raise ClashError(f"{a!r} is not consistent with {b!r}")
            return
        if isinstance(a, TyVar):
            self._consist_var(a, b)
            return
        if isinstance(b, TyVar):
            self._consist_var(b, a)
            return
        if isinstance(a, TyArrow) and isinstance(b, TyArrow):
            self.consist(a.dom, b.dom)
            self.consist(a.cod, b.cod)
            return
        raise ClashError(f"{a!r} is not consistent with {b!r}")

    def _consist_var(self, v: TyVar, t: GradualType) -> None:
        if isinstance(t, TyVar) and t.name == v.name:
            return
        if is_static(t):
            # A variable denotes a static type, and two static types are
            # consistent only when equal, so the binding is forced.
            self.bind(v.name, t)
            return
        # t is an arrow containing `?` (a bare `?` was discarded above).
        assert isinstance(t, TyArrow)
        if v.name in ftv(t):
            raise OccursCheckError(f"'{v.name} occurs in {t!r}")
        d, c = self.fresh(), self.fresh()
        self.bind(v.name, TyArrow(d, c))
        self.consist(d, t.dom)
        self.consist(c, t.cod)

    def equal(self, a: GradualType, b: GradualType) -> None:
        a, b = self.resolve(a), self.resolve(b)
        if a == b:
            return
        if isinstance(a, TyVar):
            self._equal_var(a, b)
            return
        if isinstance(b, TyVar):
            self._equal_var(b, a)
            return
        if isinstance(a, TyArrow) and isinstance(b, TyArrow):
            self.equal(a.dom, b.dom)
            self.equal(a.cod, b.cod)
            return
        raise ClashError(f"{a!r} does not equal {b!r}")

    def _equal_var(self, v: TyVar, t: GradualType) -> None:
        if not is_static(t):
            raise ClashError(
                f"'{v.name} stands for a static type and cannot equal {t!r}"
            )
        self.bind(v.name, t)

    # -- the checker -------------------------------------------------------

    def infer(self, env: TypeEnv, e: Term) -> GradualType:
        if isinstance(e, Var):
            if e.name not in env:
                raise StaticTypeError(f"unbound variable {e.name!r}")
            scheme = env[e.name]
            inst = [self.fresh() for _ in scheme.binders]
            e.inst = list(inst)
            if not scheme.binders:
                return scheme.body
            s = TypeSubst(dict(zip(scheme.binders, inst)))
            return s.apply(scheme.body)
        if isinstance(e, Const):
            return type_of_const(e.value)
        if isinstance(e, Op):
            sig = OPS[e.op]
            t1 = self.infer(env, e.left)
            t2 = self.infer(env, e.right)
            self.consist(t1, sig.arg1)
            self.consist(t2, sig.arg2)
            return sig.result
        if isinstance(e, Abs):
            if e.annot is not None:
                param_ty: GradualType = e.annot
            else:
                param_ty = self.fresh()
                e.inferred = param_ty
            inner = dict(env)
            inner[e.param] = Scheme((), param_ty)
            body_ty = self.infer(inner, e.body)
            return TyArrow(param_ty, body_ty)
        if isinstance(e, App):
            t1 = self.resolve(self.infer(env, e.fn))
            t2 = self.infer(env, e.arg)
            if isinstance(t1, TyDyn):
                self.consist(t2, DYN)
                return DYN
            if isinstance(t1, TyArrow):
                self.consist(t2, t1.dom)
                return t1.cod
            if isinstance(t1, TyVar):
                d, c = self.fresh(), self.fresh()
                self.equal(t1, TyArrow(d, c))
                self.consist(t2, d)
                return c
            raise StaticTypeError(f"cannot apply a value of type {t1!r}")
        if isinstance(e, If):
            t0 = self.infer(env, e.cond)
            self.consist(t0, BOOL)
            t1 = self.infer(env, e.then)
            t2 = self.infer(env, e.els)
            self.equal(t1, t2)
            return self.resolve(t1)
        if isinstance(e, Let):
            bound_ty = self.resolve(self.infer(env, e.bound))
            annot_vars: set[str] = set()
            _collect_annotation_vars(e.bound, annot_vars)
            annot_free: set[str] = set()
            for name in annot_vars:
                annot_free.update(ftv(self.resolve(TyVar(name))))
            env_free = self._env_ftv(env)
            binders = tuple(
                n for n in ftv(bound_ty) if n not in env_free and n not in annot_free
            )
            e.binders = list(binders)
            inner = dict(env)
            inner[e.name] = Scheme(binders, bound_ty)
            return self.infer(inner, e.body)
        if isinstance(e, LetRec):
            a, b = self.fresh(), self.fresh()
            fnty = TyArrow(a, b)
            inner = dict(env)
            inner[e.fname] = Scheme((), fnty)
            inner[e.param] = Scheme((), a)
            body_ty = self.infer(inner, e.body)
            self.equal(b, body_ty)
            resolved = self.resolve(fnty)
            assert isinstance(resolved, TyArrow)
            e.inferred = resolved
            outer = dict(env)
            outer[e.fname] = Scheme((), resolved)
            return self.infer(outer, e.expr)
        raise TypeError(f"not a term: {e!r}")

    def _env_ftv(self, env: TypeEnv) -> set[str]:
        out: set[str] = set()
        for scheme in env.values():
            for name in scheme.ftv():
                out.update(ftv(self.resolve(TyVar(name))))
        return out

    # -- finishing ---------------------------------------------------------

    def finalize(self, e: Term) -> None:
        """Write fully resolved types back into the annotated tree."""
        if isinstance(e, Var):
            if e.inst is not None:
                e.inst = [self.resolve(t) for t in e.inst]
        elif isinstance(e, Op):
            self.finalize(e.left)
            self.finalize(e.right)
        elif isinstance(e, Abs):
            if e.annot is not None:
                e.annot = self.resolve(e.annot)
            else:
                assert e.inferred is not None
                e.inferred = self.resolve(e.inferred)
            self.finalize(e.body)
        elif isinstance(e, App):
            self.finalize(e.fn)
            self.finalize(e.arg)
        elif isinstance(e, If):
            self.finalize(e.cond)
            self.finalize(e.then)
            self.finalize(e.els)
        elif isinstance(e, Let):
            self.finalize(e.bound)
            self.finalize(e.body)
        elif isinstance(e, LetRec):
            resolved = self.resolve(e.inferred)
            assert isinstance(resolved, TyArrow)
            e.inferred = resolved
            self.finalize(e.body)
            self.finalize(e.expr)


def _term_type_vars(e: Term, out: list[str]) -> None:
    def add(u: Optional[GradualType]) -> None:
        if u is None:
            return
        for n in ftv(u):
            if n not in out:
                out.append(n)

    if isinstance(e, Var):
        if e.inst:
            for t in e.inst:
                add(t)
    elif isinstance(e, Op):
        _term_type_vars(e.left, out)
        _term_type_vars(e.right, out)
    elif isinstance(e, Abs):
        add(e.param_type())
        _term_type_vars(e.body, out)
    elif isinstance(e, App):
        _term_type_vars(e.fn, out)
        _term_type_vars(e.arg, out)
    elif isinstance(e, If):
        for sub in (e.cond, e.then, e.els):
            _term_type_vars(sub, out)
    elif isinstance(e, Let):
        _term_type_vars(e.bound, out)
        _term_type_vars(e.body, out)
    elif isinstance(e, LetRec):
        add(e.inferred)
        _term_type_vars(e.body, out)
        _term_type_vars(e.expr, out)


def infer(e: Term, env: Optional[TypeEnv] = None) -> InferenceResult:
    """Infer the principal type of `e`, annotating it in place.

    Plain lambdas receive their inferred parameter types, polymorphic lets
    record their generalized binders, and every variable occurrence records
    the types it was instantiated at.  Raises StaticTypeError (ClashError,
    OccursCheckError) when no typing exists.
    """
    inf = Inferencer(e)
    ty = inf.infer(dict(env) if env else {}, e)
    ty = inf.resolve(ty)
    inf.finalize(e)
    solved = TypeSubst({n: inf.resolve(TyVar(n)) for n in inf.subst})
    residual_order: list[str] = []
    _term_type_vars(e, residual_order)
    for n in ftv(ty):
        if n not in residual_order:
            residual_order.append(n)
    residuals = tuple(n for n in residual_order if n not in solved.mapping)
    return InferenceResult(term=e, ty=ty, subst=solved, residuals=residuals)
