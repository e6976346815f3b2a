"""Shared syntax for the surface language and the cast calculus.

Types, blame labels, type substitutions, operator signatures, and the two
term representations: `Term` for the implicitly typed surface language and
`DTerm` for the explicitly typed cast calculus that programs are compiled
into before evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TyDyn:
    """The dynamic type, written `?`."""

    def __repr__(self) -> str:
        return "?"


@dataclass(frozen=True)
class TyBase:
    """A base type: int, bool, or unit."""

    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class TyVar:
    """A type variable; stands for a static type only."""

    name: str

    def __repr__(self) -> str:
        return "'" + self.name


@dataclass(frozen=True)
class TyArrow:
    dom: "GradualType"
    cod: "GradualType"

    def __repr__(self) -> str:
        d = repr(self.dom)
        if isinstance(self.dom, TyArrow):
            d = f"({d})"
        return f"{d} -> {self.cod!r}"


GradualType = Union[TyDyn, TyBase, TyVar, TyArrow]

DYN = TyDyn()
INT = TyBase("int")
BOOL = TyBase("bool")
UNIT = TyBase("unit")
BASE_TYPES = {"int": INT, "bool": BOOL, "unit": UNIT}

# Ground type for all function types.
ARROW_GROUND = TyArrow(DYN, DYN)


def is_static(u: GradualType) -> bool:
    """True when `u` contains no occurrence of the dynamic type."""
    if isinstance(u, TyDyn):
        return False
    if isinstance(u, TyArrow):
        return is_static(u.dom) and is_static(u.cod)
    return True


def is_ground(u: GradualType) -> bool:
    """Ground types are the base types and `? -> ?`; type variables are not."""
    if isinstance(u, TyBase):
        return True
    return u == ARROW_GROUND


def ground_of(u: GradualType) -> Optional[GradualType]:
    """The unique ground type consistent with `u`, if one exists.

    Base types are their own ground; every arrow grounds to `? -> ?`.
    `?` and type variables have none.
    """
    if isinstance(u, TyBase):
        return u
    if isinstance(u, TyArrow):
        return ARROW_GROUND
    return None


def matches(u: GradualType) -> Optional[tuple[GradualType, GradualType]]:
    """Function matching: `?` matches `? -> ?`, arrows match themselves."""
    if isinstance(u, TyDyn):
        return (DYN, DYN)
    if isinstance(u, TyArrow):
        return (u.dom, u.cod)
    return None


def consistent(a: GradualType, b: GradualType) -> bool:
    """Type consistency (reflexive, symmetric, not transitive)."""
    if isinstance(a, TyDyn) or isinstance(b, TyDyn):
        return True
    if isinstance(a, TyBase) and isinstance(b, TyBase):
        return a.name == b.name
    if isinstance(a, TyVar) and isinstance(b, TyVar):
        return a.name == b.name
    if isinstance(a, TyArrow) and isinstance(b, TyArrow):
        return consistent(a.dom, b.dom) and consistent(a.cod, b.cod)
    return False


def ftv(u: GradualType) -> tuple[str, ...]:
    """Free type variables of a type, in first-occurrence order."""
    out: list[str] = []
    _ftv_into(u, out)
    return tuple(out)


def _ftv_into(u: GradualType, out: list[str]) -> None:
    if isinstance(u, TyVar):
        if u.name not in out:
            out.append(u.name)
    elif isinstance(u, TyArrow):
        _ftv_into(u.dom, out)
        _ftv_into(u.cod, out)


# ---------------------------------------------------------------------------
# Type substitutions
# ---------------------------------------------------------------------------


@dataclass
class TypeSubst:
    """A finite map from type-variable names to *static* types."""

    mapping: dict[str, GradualType] = field(default_factory=dict)

    def apply(self, u: GradualType) -> GradualType:
        if isinstance(u, TyVar):
            return self.mapping.get(u.name, u)
        if isinstance(u, TyArrow):
            d = self.apply(u.dom)
            c = self.apply(u.cod)
            if d is u.dom and c is u.cod:
                return u
            return TyArrow(d, c)
        return u

    def compose(self, earlier: "TypeSubst") -> "TypeSubst":
        """`self . earlier`: apply `earlier` first, then `self`."""
        out = {name: self.apply(t) for name, t in earlier.mapping.items()}
        for name, t in self.mapping.items():
            if name not in out:
                out[name] = t
        return TypeSubst(out)

    def restrict(self, names) -> "TypeSubst":
        keep = set(names)
        return TypeSubst({n: t for n, t in self.mapping.items() if n in keep})

    def is_well_formed(self) -> bool:
        return all(is_static(t) for t in self.mapping.values())

    def __contains__(self, name: str) -> bool:
        return name in self.mapping

    def __bool__(self) -> bool:
        return bool(self.mapping)

    def __repr__(self) -> str:
        inner = ", ".join(f"'{n} := {t!r}" for n, t in self.mapping.items())
        return "[" + inner + "]"


EMPTY_SUBST = TypeSubst({})


# ---------------------------------------------------------------------------
# Blame labels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlameLabel:
    """Identifies a cast for blame; negation flips responsibility."""

    ident: int
    polarity: bool = True
    span: Optional[tuple[int, int]] = field(default=None, compare=False)

    def negate(self) -> "BlameLabel":
        return BlameLabel(self.ident, not self.polarity, self.span)

    def __repr__(self) -> str:
        return f"[{self.ident}{'+' if self.polarity else '-'}]"


# ---------------------------------------------------------------------------
# Primitive operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OpSig:
    arg1: GradualType
    arg2: GradualType
    result: GradualType


OPS: dict[str, OpSig] = {
    "+": OpSig(INT, INT, INT),
    "-": OpSig(INT, INT, INT),
    "*": OpSig(INT, INT, INT),
    "=": OpSig(INT, INT, BOOL),
    "<": OpSig(INT, INT, BOOL),
}

_OP_FUNCS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "=": lambda a, b: a == b,
    "<": lambda a, b: a < b,
}


def delta(op: str, a, b):
    """Meaning of a primitive operator on constants."""
    return _OP_FUNCS[op](a, b)


class UnitValue:
    """The sole inhabitant of `unit`, printed `()`."""

    _instance: Optional["UnitValue"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "()"


UNIT_VALUE = UnitValue()


def type_of_const(value) -> GradualType:
    if isinstance(value, bool):
        return BOOL
    if isinstance(value, int):
        return INT
    if isinstance(value, UnitValue):
        return UNIT
    raise ValueError(f"not a constant: {value!r}")


# ---------------------------------------------------------------------------
# Surface terms
# ---------------------------------------------------------------------------
#
# `span` fields carry source offsets for diagnostics and never take part in
# structural equality.  `inst`, `inferred`, and `binders` start out None and
# are filled in by type inference.


@dataclass(eq=True)
class Var:
    name: str
    span: Optional[tuple[int, int]] = field(default=None, compare=False)
    inst: Optional[list[GradualType]] = field(default=None, compare=False)


@dataclass(eq=True)
class Const:
    value: object
    span: Optional[tuple[int, int]] = field(default=None, compare=False)


@dataclass(eq=True)
class Op:
    op: str
    left: "Term"
    right: "Term"
    span: Optional[tuple[int, int]] = field(default=None, compare=False)


@dataclass(eq=True)
class Abs:
    """A lambda; `annot` is the user's annotation, absent for plain `fun x`."""

    param: str
    annot: Optional[GradualType]
    body: "Term"
    span: Optional[tuple[int, int]] = field(default=None, compare=False)
    inferred: Optional[GradualType] = field(default=None, compare=False)

    def param_type(self) -> Optional[GradualType]:
        return self.annot if self.annot is not None else self.inferred


@dataclass(eq=True)
class App:
    fn: "Term"
    arg: "Term"
    span: Optional[tuple[int, int]] = field(default=None, compare=False)


@dataclass(eq=True)
class If:
    cond: "Term"
    then: "Term"
    els: "Term"
    span: Optional[tuple[int, int]] = field(default=None, compare=False)


@dataclass(eq=True)
class Let:
    """`let x = v in e` where `v` is a syntactic value (parser enforces)."""

    name: str
    bound: "Term"
    body: "Term"
    span: Optional[tuple[int, int]] = field(default=None, compare=False)
    binders: Optional[list[str]] = field(default=None, compare=False)


@dataclass(eq=True)
class LetRec:
    """`let rec f x = e in e'`; f is monomorphic in both e and e'."""

    fname: str
    param: str
    body: "Term"
    expr: "Term"
    span: Optional[tuple[int, int]] = field(default=None, compare=False)
    inferred: Optional[TyArrow] = field(default=None, compare=False)


Term = Union[Var, Const, Op, Abs, App, If, Let, LetRec]


def is_syntactic_value(e: Term) -> bool:
    return isinstance(e, (Const, Abs))


# ---------------------------------------------------------------------------
# Cast-calculus terms
# ---------------------------------------------------------------------------


class Nu:
    """Placeholder type argument, expanded to a fresh variable per use."""

    _instance: Optional["Nu"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "_"


NU = Nu()

TyArg = Union[GradualType, Nu]


@dataclass(eq=True)
class DVar:
    name: str
    targs: tuple[TyArg, ...] = ()


@dataclass(eq=True)
class DConst:
    value: object


@dataclass(eq=True)
class DOp:
    op: str
    left: "DTerm"
    right: "DTerm"


@dataclass(eq=True)
class DAbs:
    param: str
    ty: GradualType
    body: "DTerm"


@dataclass(eq=True)
class DApp:
    fn: "DTerm"
    arg: "DTerm"


@dataclass(eq=True)
class DIf:
    cond: "DTerm"
    then: "DTerm"
    els: "DTerm"


@dataclass(eq=True)
class DCast:
    expr: "DTerm"
    src: GradualType
    tgt: GradualType
    label: BlameLabel


@dataclass(eq=True)
class DBlame:
    label: BlameLabel


@dataclass(eq=True)
class DLetP:
    """`let x = /\\binders. bound in body` with `bound` a syntactic value."""

    name: str
    binders: tuple[str, ...]
    bound: "DTerm"
    body: "DTerm"


@dataclass(eq=True)
class DFix:
    """Monomorphic recursive function, evaluated by unrolling."""

    fname: str
    param: str
    fnty: TyArrow
    body: "DTerm"


DTerm = Union[DVar, DConst, DOp, DAbs, DApp, DIf, DCast, DBlame, DLetP, DFix]


def ftv_term(f: DTerm) -> tuple[str, ...]:
    """Free type variables of a cast-calculus term, first-occurrence order.

    Binders of a polymorphic let scope over its bound value only.
    """
    out: list[str] = []
    _ftv_term_into(f, out, frozenset())
    return tuple(out)


def _ftv_term_into(f: DTerm, out: list[str], bound: frozenset) -> None:
    def add_ty(u: GradualType) -> None:
        for name in ftv(u):
            if name not in bound and name not in out:
                out.append(name)

    if isinstance(f, DVar):
        for t in f.targs:
            if not isinstance(t, Nu):
                add_ty(t)
    elif isinstance(f, DOp):
        _ftv_term_into(f.left, out, bound)
        _ftv_term_into(f.right, out, bound)
    elif isinstance(f, DAbs):
        add_ty(f.ty)
        _ftv_term_into(f.body, out, bound)
    elif isinstance(f, DApp):
        _ftv_term_into(f.fn, out, bound)
        _ftv_term_into(f.arg, out, bound)
    elif isinstance(f, DIf):
        _ftv_term_into(f.cond, out, bound)
        _ftv_term_into(f.then, out, bound)
        _ftv_term_into(f.els, out, bound)
    elif isinstance(f, DCast):
        _ftv_term_into(f.expr, out, bound)
        add_ty(f.src)
        add_ty(f.tgt)
    elif isinstance(f, DLetP):
        _ftv_term_into(f.bound, out, bound | frozenset(f.binders))
        _ftv_term_into(f.body, out, bound)
    elif isinstance(f, DFix):
        add_ty(f.fnty)
        _ftv_term_into(f.body, out, bound)


def apply_subst_term(s: TypeSubst, f: DTerm) -> DTerm:
    """Apply a type substitution to every type position of a term.

    Shares unchanged subtrees; a step that binds nothing returns `f` itself.
    """
    if not s.mapping:
        return f
    return _apply_term(s, f)


def _apply_term(s: TypeSubst, f: DTerm) -> DTerm:
    if isinstance(f, DVar):
        if not f.targs:
            return f
        new = tuple(t if isinstance(t, Nu) else s.apply(t) for t in f.targs)
        if all(a is b for a, b in zip(new, f.targs)):
            return f
        return DVar(f.name, new)
    if isinstance(f, (DConst, DBlame)):
        return f
    if isinstance(f, DOp):
        l, r = _apply_term(s, f.left), _apply_term(s, f.right)
        if l is f.left and r is f.right:
            return f
        return DOp(f.op, l, r)
    if isinstance(f, DAbs):
        ty = s.apply(f.ty)
        body = _apply_term(s, f.body)
        if ty is f.ty and body is f.body:
            return f
        return DAbs(f.param, ty, body)
    if isinstance(f, DApp):
        fn, arg = _apply_term(s, f.fn), _apply_term(s, f.arg)
        if fn is f.fn and arg is f.arg:
            return f
        return DApp(fn, arg)
    if isinstance(f, DIf):
        c = _apply_term(s, f.cond)
        t = _apply_term(s, f.then)
        e = _apply_term(s, f.els)
        if c is f.cond and t is f.then and e is f.els:
            return f
        return DIf(c, t, e)
    if isinstance(f, DCast):
        e = _apply_term(s, f.expr)
        src, tgt = s.apply(f.src), s.apply(f.tgt)
        if e is f.expr and src is f.src and tgt is f.tgt:
            return f
        return DCast(e, src, tgt, f.label)
    if isinstance(f, DLetP):
        inner = s
        if any(b in s.mapping for b in f.binders):
            inner = TypeSubst({n: t for n, t in s.mapping.items() if n not in f.binders})
        bound = apply_subst_term(inner, f.bound)
        body = _apply_term(s, f.body)
        if bound is f.bound and body is f.body:
            return f
        return DLetP(f.name, f.binders, bound, body)
    if isinstance(f, DFix):
        ty = s.apply(f.fnty)
        body = _apply_term(s, f.body)
        if ty is f.fnty and body is f.body:
            return f
        return DFix(f.fname, f.param, ty, body)
    raise TypeError(f"not a term: {f!r}")


def iter_subterms(f: DTerm) -> Iterator[DTerm]:
    """Preorder walk over a cast-calculus term."""
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, DOp):
            stack.extend((node.right, node.left))
        elif isinstance(node, DAbs):
            stack.append(node.body)
        elif isinstance(node, DApp):
            stack.extend((node.arg, node.fn))
        elif isinstance(node, DIf):
            stack.extend((node.els, node.then, node.cond))
        elif isinstance(node, DCast):
            stack.append(node.expr)
        elif isinstance(node, DLetP):
            stack.extend((node.body, node.bound))
        elif isinstance(node, DFix):
            stack.append(node.body)


# ---------------------------------------------------------------------------
# Errors shared across the pipeline
# ---------------------------------------------------------------------------


class LangError(Exception):
    """Base class for user-facing errors."""


class StaticTypeError(LangError):
    pass


class ClashError(StaticTypeError):
    pass


class OccursCheckError(StaticTypeError):
    pass


class StuckError(LangError):
    """Evaluation reached a configuration no rule covers; signals misuse."""
