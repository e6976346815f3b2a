"""Precision relations: which programs carry more static type information.

Types: `u ⊑ u'` under a substitution S read "u is a more precise shape of
u'"; `?` is the least precise type, and a type variable on the imprecise
side stands for whatever S assigns it.  Relating a variable to itself
therefore needs the explicit binding [X := X].

Terms: structural compatibility plus the interesting asymmetries — an
unannotated lambda sits between `fun (x : ?)` and `fun (x : T)` for static
T, a cast may be dropped on either side, and `blame` on the precise side
relates to any well-typed term.

Each relation comes in two flavors: checking under a given substitution,
and searching for a witness substitution.
"""
from __future__ import annotations

from typing import Optional

from .core import (
    Abs,
    App,
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
    GradualType,
    If,
    Let,
    LetRec,
    Nu,
    OPS,
    Op,
    Term,
    TyArrow,
    TyBase,
    TyDyn,
    TypeSubst,
    TyVar,
    Var,
    is_static,
    type_of_const,
)
from .infer import Scheme
from .translate import ANY


class _Bindings:
    """A backtrackable store of variable bindings for witness search."""

    def __init__(self) -> None:
        self.mapping: dict[str, GradualType] = {}
        self.trail: list[str] = []

    def mark(self) -> int:
        return len(self.trail)

    def undo(self, mark: int) -> None:
        while len(self.trail) > mark:
            del self.mapping[self.trail.pop()]

    def bind(self, name: str, t: GradualType) -> bool:
        if name in self.mapping:
            return self.mapping[name] == t
        self.mapping[name] = t
        self.trail.append(name)
        return True


def type_prec(u: GradualType, up: GradualType, s: TypeSubst) -> bool:
    """Is `u` more precise than `up` under substitution `s`?"""
    if u is ANY:
        return True
    if isinstance(up, TyDyn):
        return True
    if isinstance(up, TyBase):
        return u == up
    if isinstance(up, TyVar):
        return up.name in s.mapping and s.mapping[up.name] == u
    if isinstance(up, TyArrow):
        return (
            isinstance(u, TyArrow)
            and type_prec(u.dom, up.dom, s)
            and type_prec(u.cod, up.cod, s)
        )
    return False


def _type_prec_infer(u: GradualType, up: GradualType, store: _Bindings) -> bool:
    if u is ANY:
        return True
    if isinstance(up, TyDyn):
        return True
    if isinstance(up, TyBase):
        return u == up
    if isinstance(up, TyVar):
        return is_static(u) and store.bind(up.name, u)
    if isinstance(up, TyArrow):
        return (
            isinstance(u, TyArrow)
            and _type_prec_infer(u.dom, up.dom, store)
            and _type_prec_infer(u.cod, up.cod, store)
        )
    return False


def infer_prec_subst(u: GradualType, up: GradualType) -> Optional[TypeSubst]:
    """The (unique minimal) witness making `u ⊑ up`, or None."""
    store = _Bindings()
    if _type_prec_infer(u, up, store):
        return TypeSubst(dict(store.mapping))
    return None


# ---------------------------------------------------------------------------
# Surface-term precision
# ---------------------------------------------------------------------------


def _itgl_prec(e: Term, ep: Term, tp) -> bool:
    """Shared structure; `tp(u, up)` decides annotation pairs."""
    if isinstance(e, Var) and isinstance(ep, Var):
        return e.name == ep.name
    if isinstance(e, Const) and isinstance(ep, Const):
        return e.value == ep.value and type(e.value) is type(ep.value)
    if isinstance(e, Op) and isinstance(ep, Op):
        return (
            e.op == ep.op
            and _itgl_prec(e.left, ep.left, tp)
            and _itgl_prec(e.right, ep.right, tp)
        )
    if isinstance(e, Abs) and isinstance(ep, Abs):
        if e.param != ep.param:
            return False
        if e.annot is None and ep.annot is None:
            pass  # both implicit
        elif e.annot is None:
            if not isinstance(ep.annot, TyDyn):
                return False  # implicit may only blur to `?`
        elif ep.annot is None:
            if not is_static(e.annot):
                return False
        else:
            if not tp(e.annot, ep.annot):
                return False
        return _itgl_prec(e.body, ep.body, tp)
    if isinstance(e, App) and isinstance(ep, App):
        return _itgl_prec(e.fn, ep.fn, tp) and _itgl_prec(e.arg, ep.arg, tp)
    if isinstance(e, If) and isinstance(ep, If):
        return (
            _itgl_prec(e.cond, ep.cond, tp)
            and _itgl_prec(e.then, ep.then, tp)
            and _itgl_prec(e.els, ep.els, tp)
        )
    if isinstance(e, Let) and isinstance(ep, Let):
        return (
            e.name == ep.name
            and _itgl_prec(e.bound, ep.bound, tp)
            and _itgl_prec(e.body, ep.body, tp)
        )
    if isinstance(e, LetRec) and isinstance(ep, LetRec):
        return (
            e.fname == ep.fname
            and e.param == ep.param
            and _itgl_prec(e.body, ep.body, tp)
            and _itgl_prec(e.expr, ep.expr, tp)
        )
    return False


def term_prec(e: Term, ep: Term, s: TypeSubst) -> bool:
    """Surface-term precision under a given substitution."""
    return _itgl_prec(e, ep, lambda u, up: type_prec(u, up, s))


def term_prec_witness(e: Term, ep: Term) -> Optional[TypeSubst]:
    store = _Bindings()
    if _itgl_prec(e, ep, lambda u, up: _type_prec_infer(u, up, store)):
        return TypeSubst(dict(store.mapping))
    return None


# ---------------------------------------------------------------------------
# Cast-calculus term precision
# ---------------------------------------------------------------------------


class _DPrec:
    """Decides the cast-calculus precision relation.

    Casts make the relation non-syntax-directed: a cast on the precise
    side may be related through its own cast on the other side or simply
    dropped, so the checker backtracks over those choices.  Returns the
    related types on success (the precise side may be the blame wildcard).

    Runs in one of two modes: checking against a fixed substitution, or
    collecting a witness into a backtrackable store.
    """

    def __init__(self, subst: Optional[TypeSubst], store: Optional[_Bindings]):
        self.subst = subst
        self.store = store

    def tp(self, u: GradualType, up: GradualType) -> bool:
        if self.store is not None:
            return _type_prec_infer(u, up, self.store)
        return type_prec(u, up, self.subst)

    def _try(self, thunk):
        mark = self.store.mark() if self.store else None
        result = thunk()
        if result is None and mark is not None:
            self.store.undo(mark)
        return result

    def rel(self, env, f: DTerm, envp, fp: DTerm):
        if isinstance(f, DBlame):
            # Blame on the more precise side relates to any well-typed term.
            from .translate import CalculusTypeError, typecheck_dterm

            try:
                tp_ty = typecheck_dterm(fp, envp)
            except CalculusTypeError:
                return None
            return (ANY, tp_ty)
        if isinstance(f, DCast):
            if isinstance(fp, DCast):
                res = self._try(lambda: self._both_casts(env, f, envp, fp))
                if res is not None:
                    return res
            res = self._try(lambda: self._cast_left(env, f, envp, fp))
            if res is not None:
                return res
        if isinstance(fp, DCast):
            res = self._try(lambda: self._cast_right(env, f, envp, fp))
            if res is not None:
                return res
        if isinstance(f, DCast) or isinstance(fp, DCast):
            return None
        return self._structural(env, f, envp, fp)

    def _both_casts(self, env, f: DCast, envp, fp: DCast):
        inner = self.rel(env, f.expr, envp, fp.expr)
        if inner is None:
            return None
        if not self.tp(f.tgt, fp.tgt):
            return None
        return (f.tgt, fp.tgt)

    def _cast_left(self, env, f: DCast, envp, fp: DTerm):
        inner = self.rel(env, f.expr, envp, fp)
        if inner is None:
            return None
        if not self.tp(f.tgt, inner[1]):
            return None
        return (f.tgt, inner[1])

    def _cast_right(self, env, f: DTerm, envp, fp: DCast):
        inner = self.rel(env, f, envp, fp.expr)
        if inner is None:
            return None
        if not self.tp(inner[0], fp.tgt):
            return None
        return (inner[0], fp.tgt)

    def _structural(self, env, f: DTerm, envp, fp: DTerm):
        if isinstance(f, DVar) and isinstance(fp, DVar):
            if f.name != fp.name or len(f.targs) != len(fp.targs):
                return None
            sch: Scheme = env.get(f.name)
            schp: Scheme = envp.get(fp.name)
            if sch is None or schp is None:
                return None
            m1: dict[str, GradualType] = {}
            m2: dict[str, GradualType] = {}
            for (b, a), (bp, ap) in zip(
                zip(sch.binders, f.targs), zip(schp.binders, fp.targs)
            ):
                if isinstance(ap, Nu):
                    # The imprecise side defers; the precise side may too,
                    # or may already have committed to a type.
                    if not isinstance(a, Nu):
                        m1[b] = a
                    continue
                if isinstance(a, Nu):
                    return None
                if not self.tp(a, ap):
                    return None
                m1[b] = a
                m2[bp] = ap
            return (
                TypeSubst(m1).apply(sch.body),
                TypeSubst(m2).apply(schp.body),
            )
        if isinstance(f, DConst) and isinstance(fp, DConst):
            if f.value != fp.value or type(f.value) is not type(fp.value):
                return None
            return (type_of_const(f.value), type_of_const(fp.value))
        if isinstance(f, DOp) and isinstance(fp, DOp):
            if f.op != fp.op:
                return None
            if self.rel(env, f.left, envp, fp.left) is None:
                return None
            if self.rel(env, f.right, envp, fp.right) is None:
                return None
            sig = OPS[f.op]
            return (sig.result, sig.result)
        if isinstance(f, DAbs) and isinstance(fp, DAbs):
            if f.param != fp.param or not self.tp(f.ty, fp.ty):
                return None
            env2 = dict(env)
            env2[f.param] = Scheme((), f.ty)
            envp2 = dict(envp)
            envp2[fp.param] = Scheme((), fp.ty)
            inner = self.rel(env2, f.body, envp2, fp.body)
            if inner is None:
                return None
            cod = ANY if inner[0] is ANY else TyArrow(f.ty, inner[0])
            return (cod, TyArrow(fp.ty, inner[1]))
        if isinstance(f, DApp) and isinstance(fp, DApp):
            fn = self.rel(env, f.fn, envp, fp.fn)
            if fn is None:
                return None
            if self.rel(env, f.arg, envp, fp.arg) is None:
                return None
            t, tpr = fn
            if t is not ANY and not isinstance(t, TyArrow):
                return None
            if not isinstance(tpr, TyArrow):
                return None
            return (ANY if t is ANY else t.cod, tpr.cod)
        if isinstance(f, DIf) and isinstance(fp, DIf):
            if self.rel(env, f.cond, envp, fp.cond) is None:
                return None
            a = self.rel(env, f.then, envp, fp.then)
            b = self.rel(env, f.els, envp, fp.els)
            if a is None or b is None:
                return None
            return b if a[0] is ANY else a
        if isinstance(f, DLetP) and isinstance(fp, DLetP):
            if f.name != fp.name or len(f.binders) != len(fp.binders):
                return None
            # Relate the bound values with the imprecise side's binders
            # read positionally as the precise side's.
            if self.store is not None:
                ok = True
                for b, bp in zip(f.binders, fp.binders):
                    if not self.store.bind(bp, TyVar(b)):
                        ok = False
                        break
                bound = self.rel(env, f.bound, envp, fp.bound) if ok else None
            else:
                extended = dict(self.subst.mapping)
                extended.update(
                    {bp: TyVar(b) for b, bp in zip(f.binders, fp.binders)}
                )
                inner_checker = _DPrec(TypeSubst(extended), None)
                bound = inner_checker.rel(env, f.bound, envp, fp.bound)
            if bound is None:
                return None
            env2 = dict(env)
            env2[f.name] = Scheme(f.binders, bound[0])
            envp2 = dict(envp)
            envp2[fp.name] = Scheme(fp.binders, bound[1])
            return self.rel(env2, f.body, envp2, fp.body)
        if isinstance(f, DFix) and isinstance(fp, DFix):
            if f.fname != fp.fname or f.param != fp.param:
                return None
            if not self.tp(f.fnty, fp.fnty):
                return None
            env2 = dict(env)
            env2[f.fname] = Scheme((), f.fnty)
            env2[f.param] = Scheme((), f.fnty.dom)
            envp2 = dict(envp)
            envp2[fp.fname] = Scheme((), fp.fnty)
            envp2[fp.param] = Scheme((), fp.fnty.dom)
            if self.rel(env2, f.body, envp2, fp.body) is None:
                return None
            return (f.fnty, fp.fnty)
        return None


def dterm_prec(f: DTerm, fp: DTerm, s: TypeSubst, env=None, envp=None) -> bool:
    """Cast-calculus term precision under a given substitution."""
    checker = _DPrec(s, None)
    return checker.rel(dict(env or {}), f, dict(envp or {}), fp) is not None


def dterm_prec_witness(f: DTerm, fp: DTerm, env=None, envp=None) -> Optional[TypeSubst]:
    """Search for a substitution relating the two terms."""
    store = _Bindings()
    checker = _DPrec(None, store)
    if checker.rel(dict(env or {}), f, dict(envp or {}), fp) is not None:
        return TypeSubst(dict(store.mapping))
    return None
