"""Compilation from the surface language into the cast calculus.

Every place where the static checker relied on consistency (rather than
equality) gets an explicit runtime cast.  A cast is materialized only when
its source and target differ syntactically; blame-label ids are allocated
in traversal order (function position before argument position), so label
numbering matches a left-to-right reading of the source.

Also holds the typechecker for the cast calculus itself, used by tests and
by the preservation instrumentation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .core import (
    Abs,
    App,
    BlameLabel,
    BOOL,
    Const,
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
    ARROW_GROUND,
    GradualType,
    If,
    LangError,
    Let,
    LetRec,
    Nu,
    OPS,
    Op,
    Term,
    TyArrow,
    TyDyn,
    TypeSubst,
    TyVar,
    Var,
    consistent,
    ftv,
    ftv_term,
    is_static,
    type_of_const,
)
from .infer import InferenceResult, Scheme, _collect_annotation_vars


class TranslationError(LangError):
    """Raised when a term lacks the annotations inference should have left."""


class CalculusTypeError(LangError):
    """A cast-calculus term violates its typing rules."""


@dataclass(frozen=True)
class _LetScheme:
    """Cast-insertion view of a let binding: which binders take `ν`."""

    type_binders: tuple[str, ...]
    extra_binders: tuple[str, ...]
    body: GradualType

    @property
    def binders(self) -> tuple[str, ...]:
        return self.type_binders + self.extra_binders

    def free(self) -> tuple[str, ...]:
        return tuple(n for n in ftv(self.body) if n not in self.binders)


@dataclass
class Translation:
    term: DTerm
    ty: GradualType
    labels: list[BlameLabel] = field(default_factory=list)


class CastInserter:
    def __init__(self) -> None:
        self.next_label = 1
        self.labels: list[BlameLabel] = []

    def _label(self, span) -> BlameLabel:
        lbl = BlameLabel(self.next_label, True, span)
        self.next_label += 1
        self.labels.append(lbl)
        return lbl

    def _cast(self, f: DTerm, src: GradualType, tgt: GradualType, span) -> DTerm:
        if src == tgt:
            return f
        return DCast(f, src, tgt, self._label(span))

    def insert(self, env: dict[str, _LetScheme], e: Term) -> tuple[DTerm, GradualType]:
        if isinstance(e, Var):
            sch = env.get(e.name)
            if sch is None:
                raise TranslationError(f"unbound variable {e.name!r}")
            if not sch.binders:
                return DVar(e.name), sch.body
            inst = e.inst or []
            if len(inst) != len(sch.type_binders):
                raise TranslationError(
                    f"use of {e.name!r} lacks instantiation for its binders"
                )
            targs = tuple(inst) + tuple(Nu() for _ in sch.extra_binders)
            s = TypeSubst(dict(zip(sch.type_binders, inst)))
            return DVar(e.name, targs), s.apply(sch.body)
        if isinstance(e, Const):
            return DConst(e.value), type_of_const(e.value)
        if isinstance(e, Op):
            sig = OPS[e.op]
            f1, u1 = self.insert(env, e.left)
            f2, u2 = self.insert(env, e.right)
            f1 = self._cast(f1, u1, sig.arg1, e.left.span)
            f2 = self._cast(f2, u2, sig.arg2, e.right.span)
            return DOp(e.op, f1, f2), sig.result
        if isinstance(e, Abs):
            ty = e.param_type()
            if ty is None:
                raise TranslationError("lambda parameter was never annotated")
            inner = dict(env)
            inner[e.param] = _LetScheme((), (), ty)
            body, body_ty = self.insert(inner, e.body)
            return DAbs(e.param, ty, body), TyArrow(ty, body_ty)
        if isinstance(e, App):
            f1, u1 = self.insert(env, e.fn)
            if isinstance(u1, TyDyn):
                f1 = self._cast(f1, u1, ARROW_GROUND, e.fn.span)
                dom, cod = DYN, DYN
            elif isinstance(u1, TyArrow):
                dom, cod = u1.dom, u1.cod
            else:
                raise TranslationError(f"application of non-function type {u1!r}")
            f2, u2 = self.insert(env, e.arg)
            f2 = self._cast(f2, u2, dom, e.arg.span)
            return DApp(f1, f2), cod
        if isinstance(e, If):
            f0, u0 = self.insert(env, e.cond)
            f0 = self._cast(f0, u0, BOOL, e.cond.span)
            f1, u1 = self.insert(env, e.then)
            f2, u2 = self.insert(env, e.els)
            if u1 != u2:
                raise TranslationError(
                    f"branch types {u1!r} and {u2!r} were not equalized"
                )
            return DIf(f0, f1, f2), u1
        if isinstance(e, Let):
            if e.binders is None:
                raise TranslationError("let binding was never analyzed for generalization")
            w1, u1 = self.insert(env, e.bound)
            type_binders = tuple(e.binders)
            annot_vars: set[str] = set()
            _collect_annotation_vars(e.bound, annot_vars)
            env_free: set[str] = set()
            for sch in env.values():
                env_free.update(sch.free())
            blocked = env_free | set(ftv(u1)) | annot_vars
            extras = tuple(n for n in ftv_term(w1) if n not in blocked)
            sch = _LetScheme(type_binders, extras, u1)
            inner = dict(env)
            inner[e.name] = sch
            body, body_ty = self.insert(inner, e.body)
            return DLetP(e.name, sch.binders, w1, body), body_ty
        if isinstance(e, LetRec):
            fnty = e.inferred
            if fnty is None:
                raise TranslationError("recursive binding was never annotated")
            inner = dict(env)
            inner[e.fname] = _LetScheme((), (), fnty)
            inner[e.param] = _LetScheme((), (), fnty.dom)
            body, body_ty = self.insert(inner, e.body)
            if body_ty != fnty.cod:
                raise TranslationError(
                    f"recursive body type {body_ty!r} does not match {fnty.cod!r}"
                )
            fix = DFix(e.fname, e.param, fnty, body)
            outer = dict(env)
            outer[e.fname] = _LetScheme((), (), fnty)
            rest, rest_ty = self.insert(outer, e.expr)
            return DLetP(e.fname, (), fix, rest), rest_ty
        raise TypeError(f"not a term: {e!r}")


def cast_insert(inferred: Union[InferenceResult, Term]) -> Translation:
    """Translate an inference-annotated term into the cast calculus."""
    e = inferred.term if isinstance(inferred, InferenceResult) else inferred
    ins = CastInserter()
    f, ty = ins.insert({}, e)
    return Translation(term=f, ty=ty, labels=ins.labels)


# ---------------------------------------------------------------------------
# Typechecking the cast calculus
# ---------------------------------------------------------------------------


class AnyType:
    """Type of `blame`; equal to and consistent with every type."""

    _instance: Optional["AnyType"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "<any>"


ANY = AnyType()


def teq(a, b) -> bool:
    return a is ANY or b is ANY or a == b


def tconsistent(a, b) -> bool:
    return a is ANY or b is ANY or consistent(a, b)


def typecheck_dterm(f: DTerm, env: Optional[dict[str, Scheme]] = None):
    """Synthesize the type of a cast-calculus term, or raise CalculusTypeError.

    `blame` subterms synthesize a wildcard that satisfies every check, since
    blame is typeable at any type.
    """
    from .semantics import is_value  # local import to avoid a cycle

    def synth(env: dict[str, Scheme], f: DTerm):
        if isinstance(f, DVar):
            sch = env.get(f.name)
            if sch is None:
                raise CalculusTypeError(f"unbound variable {f.name!r}")
            if len(f.targs) != len(sch.binders):
                raise CalculusTypeError(
                    f"{f.name!r} expects {len(sch.binders)} type arguments, got {len(f.targs)}"
                )
            body_vars = set(ftv(sch.body))
            mapping: dict[str, GradualType] = {}
            for binder, arg in zip(sch.binders, f.targs):
                if binder in body_vars:
                    if isinstance(arg, Nu):
                        raise CalculusTypeError(
                            f"binder '{binder} of {f.name!r} occurs in its type and needs a static type"
                        )
                    if not is_static(arg):
                        raise CalculusTypeError(f"type argument {arg!r} is not static")
                    mapping[binder] = arg
                else:
                    if not isinstance(arg, Nu):
                        raise CalculusTypeError(
                            f"binder '{binder} of {f.name!r} is absent from its type and must be _"
                        )
            return TypeSubst(mapping).apply(sch.body)
        if isinstance(f, DConst):
            return type_of_const(f.value)
        if isinstance(f, DOp):
            sig = OPS[f.op]
            t1 = synth(env, f.left)
            t2 = synth(env, f.right)
            if not (teq(t1, sig.arg1) and teq(t2, sig.arg2)):
                raise CalculusTypeError(f"operator {f.op} applied at {t1!r}, {t2!r}")
            return sig.result
        if isinstance(f, DAbs):
            inner = dict(env)
            inner[f.param] = Scheme((), f.ty)
            return TyArrow(f.ty, synth(inner, f.body))
        if isinstance(f, DApp):
            t1 = synth(env, f.fn)
            t2 = synth(env, f.arg)
            if t1 is ANY:
                return ANY
            if not isinstance(t1, TyArrow):
                raise CalculusTypeError(f"application of non-function type {t1!r}")
            if not teq(t2, t1.dom):
                raise CalculusTypeError(
                    f"argument type {t2!r} does not equal domain {t1.dom!r}"
                )
            return t1.cod
        if isinstance(f, DIf):
            t0 = synth(env, f.cond)
            if not teq(t0, BOOL):
                raise CalculusTypeError(f"condition has type {t0!r}, not bool")
            t1 = synth(env, f.then)
            t2 = synth(env, f.els)
            if not teq(t1, t2):
                raise CalculusTypeError(f"branch types {t1!r} and {t2!r} differ")
            return t2 if t1 is ANY else t1
        if isinstance(f, DCast):
            t = synth(env, f.expr)
            if not teq(t, f.src):
                raise CalculusTypeError(
                    f"cast source {f.src!r} does not match subject type {t!r}"
                )
            if not tconsistent(f.src, f.tgt):
                raise CalculusTypeError(f"cast between inconsistent types {f.src!r} and {f.tgt!r}")
            return f.tgt
        if isinstance(f, DBlame):
            return ANY
        if isinstance(f, DLetP):
            if not is_value(f.bound):
                raise CalculusTypeError("polymorphic let binds a non-value")
            env_free: set[str] = set()
            for sch in env.values():
                env_free.update(sch.ftv())
            bad = [b for b in f.binders if b in env_free]
            if bad:
                raise CalculusTypeError(f"generalized variables {bad} occur free in the environment")
            t1 = synth(env, f.bound)
            inner = dict(env)
            if t1 is ANY:
                raise CalculusTypeError("polymorphic let binds blame")
            inner[f.name] = Scheme(tuple(f.binders), t1)
            return synth(inner, f.body)
        if isinstance(f, DFix):
            inner = dict(env)
            inner[f.fname] = Scheme((), f.fnty)
            inner[f.param] = Scheme((), f.fnty.dom)
            t = synth(inner, f.body)
            if not teq(t, f.fnty.cod):
                raise CalculusTypeError(
                    f"recursive body type {t!r} does not match {f.fnty.cod!r}"
                )
            return f.fnty
        raise TypeError(f"not a term: {f!r}")

    return synth(dict(env) if env else {}, f)


def well_typed(f: DTerm, env: Optional[dict[str, Scheme]] = None) -> bool:
    try:
        typecheck_dterm(f, env)
        return True
    except CalculusTypeError:
        return False
