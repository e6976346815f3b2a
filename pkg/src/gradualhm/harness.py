"""Oracle-based checking of the evaluator's metatheory.

The central idea: a program with leftover type variables can be *grounded*
by substituting concrete static types, and its behaviour under runtime
instantiation must agree with the behaviour of every grounding.  The
checks here enumerate groundings over a small stratified vocabulary of
types, run both sides, and compare outcomes (values up to a canonical
renaming of the runtime-variable namespace).

Timeouts are always counted inconclusive, never as failures.
"""
from __future__ import annotations

import copy
import itertools
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .core import (
    ARROW_GROUND,
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
    GradualType,
    INT,
    If,
    Let,
    Nu,
    Op,
    StuckError,
    Term,
    TyArrow,
    TyBase,
    TyDyn,
    TypeSubst,
    TyVar,
    UNIT_VALUE,
    Var,
    apply_subst_term,
    ftv_term,
    is_static,
)
from .infer import InferenceResult, StaticTypeError, infer
from .precision import dterm_prec_witness, infer_prec_subst, term_prec_witness
from .semantics import Evaluator, Outcome, evaluate, is_value
from .translate import ANY, CalculusTypeError, Translation, cast_insert, teq, typecheck_dterm


# ---------------------------------------------------------------------------
# Vocabulary and groundings
# ---------------------------------------------------------------------------


def subst_vocabulary(depth: int = 2, bases: tuple[GradualType, ...] = (INT, BOOL)) -> tuple[GradualType, ...]:
    """Stratified static types: bases, arrows over bases, arrows over those.

    depth 2 over {int, bool} yields 2 + 4 + 16 = 22 types.
    """
    out: list[GradualType] = list(bases)
    level: list[GradualType] = list(bases)
    for _ in range(depth):
        level = [TyArrow(a, b) for a in level for b in level]
        out.extend(level)
    return tuple(out)


def groundings(names: Iterable[str], vocab: tuple[GradualType, ...]) -> Iterable[TypeSubst]:
    names = list(names)
    if not names:
        yield TypeSubst({})
        return
    for combo in itertools.product(vocab, repeat=len(names)):
        yield TypeSubst(dict(zip(names, combo)))


def _is_rvar(name: str) -> bool:
    return name.startswith("r") and name[1:].isdigit()


def canon_rvars(f: DTerm) -> DTerm:
    """Rename runtime variables by first occurrence: r7, r3 -> c0, c1."""
    mapping: dict[str, GradualType] = {}
    for name in ftv_term(f):
        if _is_rvar(name):
            mapping[name] = TyVar(f"c{len(mapping)}")
    if not mapping:
        return f
    return apply_subst_term(TypeSubst(mapping), f)


def match_onto(general: DTerm, ground: DTerm) -> Optional[TypeSubst]:
    """Find S with S(general) == ground, mapping type variables only."""
    bindings: dict[str, GradualType] = {}

    def mty(a: GradualType, b: GradualType) -> bool:
        if isinstance(a, TyVar):
            if a.name in bindings:
                return bindings[a.name] == b
            if not is_static(b):
                return False
            bindings[a.name] = b
            return True
        if isinstance(a, TyArrow) and isinstance(b, TyArrow):
            return mty(a.dom, b.dom) and mty(a.cod, b.cod)
        return a == b

    def mt(a: DTerm, b: DTerm) -> bool:
        if isinstance(a, DVar) and isinstance(b, DVar):
            if a.name != b.name or len(a.targs) != len(b.targs):
                return False
            for x, y in zip(a.targs, b.targs):
                if isinstance(x, Nu) or isinstance(y, Nu):
                    if not (isinstance(x, Nu) and isinstance(y, Nu)):
                        return False
                elif not mty(x, y):
                    return False
            return True
        if isinstance(a, DConst) and isinstance(b, DConst):
            return a.value == b.value and type(a.value) is type(b.value)
        if isinstance(a, DOp) and isinstance(b, DOp):
            return a.op == b.op and mt(a.left, b.left) and mt(a.right, b.right)
        if isinstance(a, DAbs) and isinstance(b, DAbs):
            return a.param == b.param and mty(a.ty, b.ty) and mt(a.body, b.body)
        if isinstance(a, DApp) and isinstance(b, DApp):
            return mt(a.fn, b.fn) and mt(a.arg, b.arg)
        if isinstance(a, DIf) and isinstance(b, DIf):
            return mt(a.cond, b.cond) and mt(a.then, b.then) and mt(a.els, b.els)
        if isinstance(a, DCast) and isinstance(b, DCast):
            return (
                a.label == b.label
                and mty(a.src, b.src)
                and mty(a.tgt, b.tgt)
                and mt(a.expr, b.expr)
            )
        if isinstance(a, DBlame) and isinstance(b, DBlame):
            return a.label == b.label
        if isinstance(a, DLetP) and isinstance(b, DLetP):
            return (
                a.name == b.name
                and a.binders == b.binders
                and mt(a.bound, b.bound)
                and mt(a.body, b.body)
            )
        if isinstance(a, DFix) and isinstance(b, DFix):
            return (
                a.fname == b.fname
                and a.param == b.param
                and mty(a.fnty, b.fnty)
                and mt(a.body, b.body)
            )
        return False

    if mt(general, ground):
        return TypeSubst(bindings)
    return None


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class PropertyReport:
    name: str
    total: int = 0
    passed: int = 0
    failed: int = 0
    inconclusive: int = 0
    failures: list[str] = field(default_factory=list)
    elapsed: float = 0.0

    def record(self, status: str, detail: str = "") -> None:
        self.total += 1
        if status == "pass":
            self.passed += 1
        elif status == "inconclusive":
            self.inconclusive += 1
        else:
            self.failed += 1
            if len(self.failures) < 20:
                self.failures.append(detail)

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def summary(self) -> str:
        return (
            f"{self.name}: {self.passed}/{self.total} passed, "
            f"{self.failed} failed, {self.inconclusive} inconclusive "
            f"({self.elapsed:.1f}s)"
        )


# ---------------------------------------------------------------------------
# Program generation
# ---------------------------------------------------------------------------


class TermGen:
    """Type-directed random generation of closed surface programs.

    Best effort: candidates occasionally fail inference, so generation
    retries (up to 100 times) until a candidate typechecks and has at
    most `max_residuals` leftover variables.
    """

    def __init__(
        self,
        rng: random.Random,
        star_prob: float = 0.3,
        annot_prob: float = 0.5,
        allow_let: bool = True,
    ):
        self.rng = rng
        self.star_prob = star_prob
        self.annot_prob = annot_prob
        self.allow_let = allow_let

    def gen_type(self, depth: int = 2) -> GradualType:
        r = self.rng
        if r.random() < self.star_prob:
            return DYN
        if depth > 0 and r.random() < 0.35:
            return TyArrow(self.gen_type(depth - 1), self.gen_type(depth - 1))
        return r.choice((INT, BOOL))

    def _const_of(self, ty: GradualType):
        r = self.rng
        if isinstance(ty, TyDyn):
            ty = r.choice((INT, BOOL))
        if ty == INT:
            return Const(r.randrange(0, 10))
        if ty == BOOL:
            return Const(r.random() < 0.5)
        if ty == UNIT_TYPE:
            return Const(UNIT_VALUE)
        return None

    def gen_term(self, env: dict[str, GradualType], target: GradualType, budget: int) -> Optional[Term]:
        r = self.rng
        matching = [n for n, t in env.items() if t == target]
        if budget <= 0:
            if matching and r.random() < 0.6:
                return Var(r.choice(matching))
            c = self._const_of(target)
            if c is not None:
                return c
            if isinstance(target, TyArrow):
                # smallest function of this type: constant or identity
                if target.dom == target.cod:
                    return Abs("z", target.dom if r.random() < 0.7 else None, Var("z"))
                body = self.gen_term(env, target.cod, 0)
                return Abs("z", target.dom, body) if body else None
            return Var(r.choice(matching)) if matching else None
        production = r.random()
        if production < 0.18 and matching:
            return Var(r.choice(matching))
        if production < 0.30:
            c = self._const_of(target)
            if c is not None:
                return c
        if isinstance(target, TyArrow) or (isinstance(target, TyDyn) and production < 0.45):
            dom = target.dom if isinstance(target, TyArrow) else self.gen_type(1)
            cod = target.cod if isinstance(target, TyArrow) else DYN
            name = f"v{len(env)}"
            inner = dict(env)
            inner[name] = dom
            body = self.gen_term(inner, cod, budget - 1)
            if body is None:
                return None
            annot = dom if r.random() < self.annot_prob else None
            return Abs(name, annot, body)
        if target == INT and production < 0.55:
            op = r.choice(("+", "-", "*"))
            a = self.gen_term(env, INT, budget // 2)
            b = self.gen_term(env, INT, budget // 2)
            return Op(op, a, b) if a and b else None
        if target == BOOL and production < 0.55:
            op = r.choice(("=", "<"))
            a = self.gen_term(env, INT, budget // 2)
            b = self.gen_term(env, INT, budget // 2)
            return Op(op, a, b) if a and b else None
        if production < 0.68:
            cond = self.gen_term(env, BOOL, budget // 2)
            t1 = self.gen_term(env, target, budget // 2)
            t2 = self.gen_term(env, target, budget // 2)
            return If(cond, t1, t2) if cond and t1 and t2 else None
        if production < 0.80 and self.allow_let:
            bound_ty = self.gen_type(1)
            name = f"v{len(env)}"
            bound = self.gen_term(env, bound_ty, min(budget - 1, 2))
            if bound is None or not isinstance(bound, (Const, Abs)):
                bound = self._const_of(bound_ty if not isinstance(bound_ty, TyDyn) else INT)
            if bound is None:
                return None
            inner = dict(env)
            inner[name] = bound_ty
            body = self.gen_term(inner, target, budget - 1)
            return Let(name, bound, body) if body else None
        # application
        arg_ty = self.gen_type(1)
        fn = self.gen_term(env, TyArrow(arg_ty, target), budget // 2)
        arg = self.gen_term(env, arg_ty, budget // 2)
        return App(fn, arg) if fn and arg else None


UNIT_TYPE = TyBase("unit")


def generate_well_typed(
    rng: random.Random,
    size: int = 6,
    star_prob: float = 0.3,
    annot_prob: float = 0.5,
    max_residuals: int = 2,
    retries: int = 100,
) -> Optional[tuple[Term, InferenceResult]]:
    gen = TermGen(rng, star_prob=star_prob, annot_prob=annot_prob)
    for _ in range(retries):
        target = gen.gen_type(2)
        candidate = gen.gen_term({}, target, size)
        if candidate is None:
            continue
        try:
            result = infer(candidate)
        except StaticTypeError:
            continue
        if len(result.residuals) > max_residuals:
            continue
        return candidate, result
    return None


def generate_closed_dterm(rng: random.Random, size: int = 6, retries: int = 100) -> Optional[Translation]:
    """A closed cast-calculus program with no type variables anywhere."""
    gen = TermGen(rng, star_prob=0.35, annot_prob=1.0, allow_let=True)
    for _ in range(retries):
        target = gen.gen_type(2)
        candidate = gen.gen_term({}, target, size)
        if candidate is None:
            continue
        try:
            result = infer(candidate)
        except StaticTypeError:
            continue
        if result.residuals:
            continue
        trans = cast_insert(result)
        if ftv_term(trans.term):
            continue
        return trans
    return None


# ---------------------------------------------------------------------------
# Property checks
# ---------------------------------------------------------------------------

_MAX_ENUM_VARS = 2


def check_soundness(f: DTerm, vocab, fuel: int = 10_000) -> tuple[str, str]:
    """Runtime instantiation never invents answers its groundings lack."""
    main = evaluate(f, "dti", fuel, trace="off")
    if main.kind == "timeout":
        return ("inconclusive", "main run hit the fuel limit")
    if main.kind == "value":
        sf = apply_subst_term(main.accum_subst, f)
        resid = ftv_term(sf)
        if len(resid) > _MAX_ENUM_VARS:
            return ("inconclusive", f"{len(resid)} free variables is beyond the enumeration cap")
        saw_timeout = False
        for s in groundings(resid, vocab):
            run = evaluate(apply_subst_term(s, sf), "dti", fuel, trace="off")
            if run.kind == "timeout":
                saw_timeout = True
                continue
            if run.kind != "value":
                return ("fail", f"grounding {s!r} gave {run.kind}, main run gave a value")
            want = canon_rvars(apply_subst_term(s, main.term))
            got = canon_rvars(run.term)
            if want != got:
                return ("fail", f"grounding {s!r}: value mismatch")
        return ("inconclusive", "some groundings timed out") if saw_timeout else ("pass", "")
    # blame: every grounding must blame as well (label may differ)
    resid = ftv_term(f)
    if len(resid) > _MAX_ENUM_VARS:
        return ("inconclusive", f"{len(resid)} free variables is beyond the enumeration cap")
    saw_timeout = False
    for s in groundings(resid, vocab):
        run = evaluate(apply_subst_term(s, f), "dti", fuel, trace="off")
        if run.kind == "timeout":
            saw_timeout = True
            continue
        if run.kind != "blame":
            return ("fail", f"main run blamed but grounding {s!r} gave {run.kind}")
    return ("inconclusive", "some groundings timed out") if saw_timeout else ("pass", "")


def check_completeness(f: DTerm, vocab, fuel: int = 10_000) -> tuple[str, str]:
    """Whatever a grounding can do, runtime instantiation can match."""
    resid = ftv_term(f)
    if len(resid) > _MAX_ENUM_VARS:
        return ("inconclusive", f"{len(resid)} free variables is beyond the enumeration cap")
    main = evaluate(f, "dti", fuel, trace="off")
    status, detail = "pass", ""
    for s in groundings(resid, vocab):
        run = evaluate(apply_subst_term(s, f), "dti", fuel, trace="off")
        if run.kind == "value":
            if main.kind == "timeout":
                status, detail = "inconclusive", "main run hit the fuel limit"
                continue
            if main.kind != "value":
                return ("fail", f"grounding {s!r} gave a value but main run gave {main.kind}")
            if match_onto(canon_rvars(main.term), canon_rvars(run.term)) is None:
                # The general value must instantiate to the grounded one.
                if match_onto(main.term, run.term) is None:
                    return ("fail", f"grounding {s!r}: value does not instantiate the main value")
        elif run.kind == "timeout":
            if main.kind == "value":
                status, detail = "inconclusive", "a grounding timed out"
    return (status, detail)


def check_conservative(f: DTerm, fuel: int = 1000) -> tuple[str, str]:
    """Without type variables, instantiation never fires: both modes agree."""
    a = evaluate(f, "dti", fuel, trace="off")
    try:
        b = evaluate(f, "baseline", fuel, trace="off")
    except StuckError as exc:
        return ("fail", f"baseline run got stuck: {exc}")
    if a.kind == "timeout" or b.kind == "timeout":
        return ("inconclusive", "fuel limit hit")
    if a.rules != b.rules:
        return ("fail", "rule sequences differ")
    if a.kind != b.kind:
        return ("fail", f"outcomes differ: {a.kind} vs {b.kind}")
    if a.kind == "value" and a.term != b.term:
        return ("fail", "final values differ")
    if a.kind == "blame" and a.label != b.label:
        return ("fail", "blame labels differ")
    return ("pass", "")


def check_type_safety(f: DTerm, fuel: int = 1000) -> tuple[str, str]:
    """Every intermediate configuration stays well typed at the evolving type."""
    try:
        cur_ty = typecheck_dterm(f)
    except CalculusTypeError as exc:
        return ("fail", f"initial term ill-typed: {exc}")
    ev = Evaluator("dti")
    cur = f
    for _ in range(fuel):
        try:
            res = ev.step(cur)
        except StuckError as exc:
            return ("fail", f"progress violated: {exc}")
        if res[0] == "value":
            return ("pass", "")
        if res[0] == "blame":
            if isinstance(cur, DBlame):
                return ("pass", "")
            cur = DBlame(res[1])
            continue
        _, cur, _rule, s = res
        cur_ty = s.apply(cur_ty)
        try:
            new_ty = typecheck_dterm(cur)
        except CalculusTypeError as exc:
            return ("fail", f"preservation violated after a step: {exc}")
        if not teq(new_ty, cur_ty):
            return ("fail", f"type changed from {cur_ty!r} to {new_ty!r}")
    return ("inconclusive", "fuel limit hit")


def check_translation_preserves_types(e: Term) -> tuple[str, str]:
    """Cast insertion emits a term of exactly the inferred type."""
    try:
        result = infer(e)
    except StaticTypeError as exc:
        return ("inconclusive", f"source does not typecheck: {exc}")
    trans = cast_insert(result)
    if trans.ty != result.ty:
        return ("fail", f"translation type {trans.ty!r} differs from inferred {result.ty!r}")
    try:
        synth = typecheck_dterm(trans.term)
    except CalculusTypeError as exc:
        return ("fail", f"translated term ill-typed: {exc}")
    if synth != trans.ty:
        return ("fail", f"translated term has type {synth!r}, expected {trans.ty!r}")
    return ("pass", "")


def check_gradual_guarantee(e: Term, ep: Term, fuel: int = 10_000) -> tuple[str, str]:
    """Blurring types preserves static typing and only changes behaviour
    by introducing blame on the more precise side."""
    witness = term_prec_witness(e, ep)
    if witness is None:
        raise ValueError("the two programs are not related by precision")
    e, ep = copy.deepcopy(e), copy.deepcopy(ep)
    try:
        r1 = infer(e)
    except StaticTypeError:
        return ("inconclusive", "the precise program does not typecheck")
    try:
        r2 = infer(ep)
    except StaticTypeError as exc:
        return ("fail", f"static guarantee violated: imprecise program rejected ({exc})")
    if infer_prec_subst(r1.ty, r2.ty) is None:
        return ("fail", f"inferred types not related: {r1.ty!r} vs {r2.ty!r}")
    o1 = evaluate(cast_insert(r1).term, "dti", fuel, trace="off")
    o2 = evaluate(cast_insert(r2).term, "dti", fuel, trace="off")
    if o1.kind == "timeout" or o2.kind == "timeout":
        return ("inconclusive", "fuel limit hit")
    if o1.kind == "value":
        if o2.kind == "blame":
            return ("fail", "precise side has a value but imprecise side blamed")
        if o2.kind == "value" and dterm_prec_witness(o1.term, o2.term) is None:
            return ("fail", "result values are not related by precision")
    if o2.kind == "value" and o1.kind == "value":
        pass  # already checked above
    if o2.kind == "blame" and o1.kind == "value":
        return ("fail", "imprecise side blamed but precise side has a value")
    return ("pass", "")


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def _suite(name: str, n: int, seed: int, body: Callable[[PropertyReport, random.Random], None]) -> PropertyReport:
    report = PropertyReport(name)
    rng = random.Random(seed)
    start = time.perf_counter()
    body(report, rng)
    report.elapsed = time.perf_counter() - start
    return report


def run_soundness_suite(n: int = 200, seed: int = 0, fuel: int = 10_000) -> PropertyReport:
    vocab = subst_vocabulary()

    def body(report: PropertyReport, rng: random.Random) -> None:
        while report.total < n:
            made = generate_well_typed(rng)
            if made is None:
                continue
            _, result = made
            trans = cast_insert(result)
            status, detail = check_soundness(trans.term, vocab, fuel)
            report.record(status, detail)

    return _suite("soundness", n, seed, body)


def run_completeness_suite(n: int = 200, seed: int = 0, fuel: int = 10_000) -> PropertyReport:
    vocab = subst_vocabulary()

    def body(report: PropertyReport, rng: random.Random) -> None:
        while report.total < n:
            made = generate_well_typed(rng)
            if made is None:
                continue
            _, result = made
            trans = cast_insert(result)
            status, detail = check_completeness(trans.term, vocab, fuel)
            report.record(status, detail)

    return _suite("completeness", n, seed, body)


def run_conservative_suite(n: int = 1000, seed: int = 0, fuel: int = 1000) -> PropertyReport:
    def body(report: PropertyReport, rng: random.Random) -> None:
        while report.total < n:
            trans = generate_closed_dterm(rng)
            if trans is None:
                continue
            status, detail = check_conservative(trans.term, fuel)
            report.record(status, detail)

    return _suite("conservative-extension", n, seed, body)


def run_type_safety_suite(n: int = 1000, seed: int = 0, fuel: int = 1000) -> PropertyReport:
    def body(report: PropertyReport, rng: random.Random) -> None:
        while report.total < n:
            made = generate_well_typed(rng)
            if made is None:
                continue
            _, result = made
            trans = cast_insert(result)
            status, detail = check_type_safety(trans.term, fuel)
            report.record(status, detail)

    return _suite("type-safety", n, seed, body)


def run_translation_suite(n: int = 1000, seed: int = 0) -> PropertyReport:
    def body(report: PropertyReport, rng: random.Random) -> None:
        while report.total < n:
            made = generate_well_typed(rng)
            if made is None:
                continue
            candidate, _ = made
            status, detail = check_translation_preserves_types(copy.deepcopy(candidate))
            report.record(status, detail)

    return _suite("translation-types", n, seed, body)


def curated_guarantee_pairs() -> list[tuple[str, str]]:
    """Precision ladders around an identity function crossing a `?` boundary."""
    base = "(fun (x : ? -> ?) -> x 2) (fun (y : {0}) -> y)"
    blurred = "(fun (x : ?) -> x 2) (fun (y : ?) -> y)"
    return [
        (base.format("int"), base.format("?")),
        (base.format("bool"), base.format("?")),
        (base.format("?"), base.format("?")),
        (base.format("int"), blurred),
        (base.format("bool"), blurred),
    ]


def run_guarantee_suite(fuel: int = 10_000) -> PropertyReport:
    from .syntax import parse

    def body(report: PropertyReport, rng: random.Random) -> None:
        for precise, imprecise in curated_guarantee_pairs():
            status, detail = check_gradual_guarantee(parse(precise), parse(imprecise), fuel)
            report.record(status, f"{precise} vs {imprecise}: {detail}")

    return _suite("gradual-guarantee", 0, 0, body)


# ---------------------------------------------------------------------------
# A closed diverging program
# ---------------------------------------------------------------------------


def divergence_witness() -> DTerm:
    """Self-application through `?` with one polymorphic annotation.

    Under runtime instantiation the variable keeps splitting into fresh
    arrows and the program never terminates, yet every grounding of the
    variable fails a cast and blames.
    """
    lbl = BlameLabel(1, True)
    x_var = TyVar("a0")

    def cast(e, src, tgt):
        return DCast(e, src, tgt, lbl)

    left_body = DApp(
        cast(cast(DVar("x"), x_var, DYN), DYN, ARROW_GROUND),
        cast(DVar("x"), x_var, DYN),
    )
    left = cast(DAbs("x", x_var, left_body), TyArrow(x_var, DYN), ARROW_GROUND)
    right_body = DApp(cast(DVar("x"), DYN, ARROW_GROUND), DVar("x"))
    right = cast(DAbs("x", DYN, right_body), ARROW_GROUND, DYN)
    return DApp(left, right)
