"""Concrete syntax: lexer, parser, and printers.

The parser reads surface programs only; cast-calculus terms are printed
(for traces and results) but never parsed back.  `--` starts a comment
that runs to the end of the line.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import (
    Abs,
    App,
    BASE_TYPES,
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
    If,
    LangError,
    Let,
    LetRec,
    Nu,
    Op,
    Term,
    TyArrow,
    TyBase,
    TyDyn,
    TypeSubst,
    TyVar,
    UNIT_VALUE,
    Var,
    is_syntactic_value,
)


class ParseError(LangError):
    def __init__(self, message: str, pos: int, text: str = ""):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{message} (line {line}, column {col})")
        self.pos = pos


KEYWORDS = {"fun", "let", "rec", "in", "if", "then", "else", "true", "false"}

_PUNCT = ["->", "(", ")", ":", "+", "-", "*", "=", "<", "?", ","]


@dataclass
class Token:
    kind: str  # 'int' | 'ident' | 'tyvar' | keyword | punctuation | 'eof'
    text: str
    pos: int


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
            continue
        if text.startswith("--", i):
            j = text.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("int", text[i:j], i))
            i = j
            continue
        if c == "'":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            if j == i + 1:
                raise ParseError("expected a type-variable name after '", i, text)
            toks.append(Token("tyvar", text[i + 1 : j], i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            toks.append(Token(word if word in KEYWORDS else "ident", word, i))
            i = j
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                toks.append(Token(p, p, i))
                i += len(p)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", i, text)
    toks.append(Token("eof", "", n))
    return toks


class Parser:
    """Recursive-descent parser for the surface language."""

    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.diagnostics: list[str] = []

    # -- token plumbing ---------------------------------------------------

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise ParseError(f"expected {kind!r}, found {t.text or 'end of input'!r}", t.pos, self.text)
        return self.next()

    def at(self, kind: str) -> bool:
        return self.peek().kind == kind

    # -- types ------------------------------------------------------------

    def parse_type(self) -> GradualType:
        left = self.type_atom()
        if self.at("->"):
            self.next()
            return TyArrow(left, self.parse_type())
        return left

    def type_atom(self) -> GradualType:
        t = self.peek()
        if t.kind == "?":
            self.next()
            return DYN
        if t.kind == "tyvar":
            self.next()
            return TyVar(t.text)
        if t.kind == "ident" and t.text in BASE_TYPES:
            self.next()
            return BASE_TYPES[t.text]
        if t.kind == "(":
            self.next()
            inner = self.parse_type()
            self.expect(")")
            return inner
        raise ParseError(f"expected a type, found {t.text or 'end of input'!r}", t.pos, self.text)

    # -- terms ------------------------------------------------------------

    def parse_expr(self) -> Term:
        t = self.peek()
        if t.kind == "fun":
            return self.parse_fun()
        if t.kind == "let":
            return self.parse_let()
        if t.kind == "if":
            self.next()
            cond = self.parse_expr()
            self.expect("then")
            then = self.parse_expr()
            self.expect("else")
            els = self.parse_expr()
            return If(cond, then, els, span=(t.pos, self._end()))
        return self.parse_cmp()

    def parse_fun(self) -> Term:
        start = self.expect("fun").pos
        params = self.parse_params(at_least_one=True)
        self.expect("->")
        body = self.parse_expr()
        return self._nest_params(params, body, start)

    def parse_params(self, at_least_one: bool) -> list[tuple[str, Optional[GradualType]]]:
        params: list[tuple[str, Optional[GradualType]]] = []
        while True:
            t = self.peek()
            if t.kind == "ident":
                self.next()
                params.append((t.text, None))
            elif t.kind == "(" and self.toks[self.i + 1].kind == "ident" and self.toks[self.i + 2].kind == ":":
                self.next()
                name = self.next().text
                self.next()
                ty = self.parse_type()
                self.expect(")")
                params.append((name, ty))
            else:
                break
        if at_least_one and not params:
            raise ParseError("expected a parameter", self.peek().pos, self.text)
        return params

    def _nest_params(self, params, body: Term, start: int) -> Term:
        for name, ty in reversed(params):
            body = Abs(name, ty, body, span=(start, self._end()))
        return body

    def parse_let(self) -> Term:
        start = self.expect("let").pos
        if self.at("rec"):
            self.next()
            fname = self.expect("ident").text
            params = self.parse_params(at_least_one=True)
            self.expect("=")
            body = self.parse_expr()
            self.expect("in")
            rest = self.parse_expr()
            first, *others = params
            if first[1] is not None:
                self.diagnostics.append(
                    f"annotation on recursive parameter {first[0]!r} ignored; let rec is inferred monomorphically"
                )
            inner = self._nest_params(others, body, start)
            return LetRec(fname, first[0], inner, rest, span=(start, self._end()))
        name = self.expect("ident").text
        params = self.parse_params(at_least_one=False)
        self.expect("=")
        bound = self.parse_expr()
        self.expect("in")
        rest = self.parse_expr()
        if params:
            bound = self._nest_params(params, bound, start)
        if is_syntactic_value(bound):
            return Let(name, bound, rest, span=(start, self._end()))
        self.diagnostics.append(
            f"let-bound expression for {name!r} is not a value; "
            "desugared to an application (no polymorphism)"
        )
        return App(Abs(name, None, rest, span=(start, self._end())), bound, span=(start, self._end()))

    def parse_cmp(self) -> Term:
        left = self.parse_add()
        t = self.peek()
        if t.kind in ("=", "<"):
            self.next()
            right = self.parse_add()
            return Op(t.kind, left, right, span=(t.pos, t.pos + 1))
        return left

    def parse_add(self) -> Term:
        left = self.parse_mul()
        while self.peek().kind in ("+", "-"):
            t = self.next()
            right = self.parse_mul()
            left = Op(t.kind, left, right, span=(t.pos, t.pos + 1))
        return left

    def parse_mul(self) -> Term:
        left = self.parse_app()
        while self.at("*"):
            t = self.next()
            right = self.parse_app()
            left = Op("*", left, right, span=(t.pos, t.pos + 1))
        return left

    def parse_app(self) -> Term:
        fn = self.parse_atom()
        while self._atom_starts():
            arg = self.parse_atom()
            fn = App(fn, arg, span=self._merge_spans(fn, arg))
        return fn

    def _atom_starts(self) -> bool:
        k = self.peek().kind
        return k in ("int", "ident", "true", "false", "(")

    def parse_atom(self) -> Term:
        t = self.peek()
        if t.kind == "int":
            self.next()
            return Const(int(t.text), span=(t.pos, t.pos + len(t.text)))
        if t.kind == "true":
            self.next()
            return Const(True, span=(t.pos, t.pos + 4))
        if t.kind == "false":
            self.next()
            return Const(False, span=(t.pos, t.pos + 5))
        if t.kind == "ident":
            self.next()
            return Var(t.text, span=(t.pos, t.pos + len(t.text)))
        if t.kind == "(":
            self.next()
            if self.at(")"):
                end = self.next()
                return Const(UNIT_VALUE, span=(t.pos, end.pos + 1))
            inner = self.parse_expr()
            if self.at(":"):
                # Ascription: (e : U) is sugar for (fun (x : U) -> x) e.
                self.next()
                ty = self.parse_type()
                end = self.expect(")")
                span = (t.pos, end.pos + 1)
                ident = Abs("_asc", ty, Var("_asc", span=span), span=span)
                return App(ident, inner, span=span)
            self.expect(")")
            return inner
        raise ParseError(f"expected an expression, found {t.text or 'end of input'!r}", t.pos, self.text)

    def _end(self) -> int:
        return self.toks[self.i - 1].pos + len(self.toks[self.i - 1].text) if self.i else 0

    @staticmethod
    def _merge_spans(a: Term, b: Term) -> Optional[tuple[int, int]]:
        if a.span and b.span:
            return (a.span[0], b.span[1])
        return a.span or b.span


def parse(text: str) -> Term:
    p = Parser(text)
    e = p.parse_expr()
    p.expect("eof")
    return e


def parse_with_diagnostics(text: str) -> tuple[Term, list[str]]:
    p = Parser(text)
    e = p.parse_expr()
    p.expect("eof")
    return e, p.diagnostics


# ---------------------------------------------------------------------------
# Printers
# ---------------------------------------------------------------------------


def print_type(u: GradualType) -> str:
    if isinstance(u, TyDyn):
        return "?"
    if isinstance(u, TyBase):
        return u.name
    if isinstance(u, TyVar):
        return "'" + u.name
    if isinstance(u, TyArrow):
        dom = print_type(u.dom)
        if isinstance(u.dom, TyArrow):
            dom = f"({dom})"
        return f"{dom} -> {print_type(u.cod)}"
    raise TypeError(f"not a type: {u!r}")


def _const_str(value) -> str:
    if value is True:
        return "true"
    if value is False:
        return "false"
    return repr(value)


# Precedence levels, loosest to tightest.
_LOW, _CMP, _ADD, _MUL, _APP, _ATOM = range(6)


def print_term(e: Term) -> str:
    """Render a surface term; output parses back to an equal term."""
    return _pt(e, _LOW)


def _pt(e: Term, prec: int) -> str:
    def wrap(s: str, level: int) -> str:
        return f"({s})" if level < prec else s

    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        return _const_str(e.value)
    if isinstance(e, Op):
        if e.op in ("=", "<"):
            return wrap(f"{_pt(e.left, _ADD)} {e.op} {_pt(e.right, _ADD)}", _CMP)
        if e.op in ("+", "-"):
            return wrap(f"{_pt(e.left, _ADD)} {e.op} {_pt(e.right, _MUL)}", _ADD)
        return wrap(f"{_pt(e.left, _MUL)} * {_pt(e.right, _APP)}", _MUL)
    if isinstance(e, Abs):
        if e.annot is None:
            return wrap(f"fun {e.param} -> {_pt(e.body, _LOW)}", _LOW)
        return wrap(f"fun ({e.param} : {print_type(e.annot)}) -> {_pt(e.body, _LOW)}", _LOW)
    if isinstance(e, App):
        return wrap(f"{_pt(e.fn, _APP)} {_pt(e.arg, _ATOM)}", _APP)
    if isinstance(e, If):
        return wrap(
            f"if {_pt(e.cond, _LOW)} then {_pt(e.then, _LOW)} else {_pt(e.els, _LOW)}", _LOW
        )
    if isinstance(e, Let):
        return wrap(f"let {e.name} = {_pt(e.bound, _LOW)} in {_pt(e.body, _LOW)}", _LOW)
    if isinstance(e, LetRec):
        return wrap(
            f"let rec {e.fname} {e.param} = {_pt(e.body, _LOW)} in {_pt(e.expr, _LOW)}", _LOW
        )
    raise TypeError(f"not a term: {e!r}")


def print_label(label) -> str:
    return f"[{label.ident}{'+' if label.polarity else '-'}]"


def print_targ(t) -> str:
    return "_" if isinstance(t, Nu) else print_type(t)


def print_dterm(f: DTerm) -> str:
    """Render a cast-calculus term (one way; not parsed back)."""
    return _pd(f, _LOW)


def _pd(f: DTerm, prec: int) -> str:
    def wrap(s: str, level: int) -> str:
        return f"({s})" if level < prec else s

    if isinstance(f, DVar):
        if not f.targs:
            return f.name
        return f.name + "[" + ", ".join(print_targ(t) for t in f.targs) + "]"
    if isinstance(f, DConst):
        return _const_str(f.value)
    if isinstance(f, DOp):
        if f.op in ("=", "<"):
            return wrap(f"{_pd(f.left, _ADD)} {f.op} {_pd(f.right, _ADD)}", _CMP)
        if f.op in ("+", "-"):
            return wrap(f"{_pd(f.left, _ADD)} {f.op} {_pd(f.right, _MUL)}", _ADD)
        return wrap(f"{_pd(f.left, _MUL)} * {_pd(f.right, _APP)}", _MUL)
    if isinstance(f, DAbs):
        return wrap(f"fun ({f.param} : {print_type(f.ty)}) -> {_pd(f.body, _LOW)}", _LOW)
    if isinstance(f, DApp):
        return wrap(f"{_pd(f.fn, _APP)} {_pd(f.arg, _ATOM)}", _APP)
    if isinstance(f, DIf):
        return wrap(
            f"if {_pd(f.cond, _LOW)} then {_pd(f.then, _LOW)} else {_pd(f.els, _LOW)}", _LOW
        )
    if isinstance(f, DCast):
        # Flatten a nested cast chain: w : U0 =>[l1] U1 =>[l2] U2 ...
        segs: list[str] = []
        node: DTerm = f
        while isinstance(node, DCast):
            segs.append(f"=>{print_label(node.label)} {print_type(node.tgt)}")
            node = node.expr
        segs.append(print_type(f_innermost_src(f)))
        segs.reverse()
        return wrap(f"{_pd(node, _APP)} : " + " ".join(segs), _LOW)
    if isinstance(f, DBlame):
        return wrap(f"blame {print_label(f.label)}", _APP)
    if isinstance(f, DLetP):
        head = f"let {f.name} = "
        if f.binders:
            head += "/\\" + " ".join("'" + b for b in f.binders) + ". "
        return wrap(head + f"{_pd(f.bound, _LOW)} in {_pd(f.body, _LOW)}", _LOW)
    if isinstance(f, DFix):
        return wrap(
            f"fix {f.fname} ({f.param} : {print_type(f.fnty.dom)}) -> {_pd(f.body, _LOW)}", _LOW
        )
    raise TypeError(f"not a term: {f!r}")


def f_innermost_src(f: DCast) -> GradualType:
    node: DTerm = f
    src = f.src
    while isinstance(node, DCast):
        src = node.src
        node = node.expr
    return src


def print_subst(s: TypeSubst) -> str:
    inner = ", ".join(f"'{n} := {print_type(t)}" for n, t in s.mapping.items())
    return "[" + inner + "]"
