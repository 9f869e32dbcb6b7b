"""Parser and printer for a guarded-command MDP language and a PCTL reachability fragment.

The model grammar is a subset of PRISM: one ``mdp`` module with bounded
integer variables, guarded probabilistic commands, labels, constants and a
single reward structure.  Constant subexpressions are folded at parse time,
so the resulting AST only references state variables.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, NamedTuple, Union

from policymc.errors import ModelError, ModelSyntaxError

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Num:
    value: Union[int, Fraction, bool]


@dataclass(frozen=True)
class Var:
    name: str
    pos: tuple[int, int] = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str  # min, max, mod
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Unary, Binary, Call]

RELATIONAL = ("=", "!=", "<", "<=", ">", ">=")
ARITH = ("+", "-", "*", "/")
FUNCTIONS = ("min", "max", "mod")

# ---------------------------------------------------------------------------
# model AST


@dataclass(frozen=True)
class VarDecl:
    name: str
    low: int
    high: int
    init: int


@dataclass(frozen=True)
class Branch:
    prob: Fraction
    updates: tuple[tuple[str, Expr], ...]


@dataclass(frozen=True)
class Command:
    action: str
    guard: Expr
    branches: tuple[Branch, ...]
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class RewardItem:
    action: str | None
    guard: Expr
    value: Fraction


@dataclass(frozen=True)
class ModelAst:
    model_kind: str
    module_name: str
    constants: tuple[tuple[str, str, Union[int, Fraction]], ...]
    variables: tuple[VarDecl, ...]
    commands: tuple[Command, ...]
    labels: tuple[tuple[str, Expr], ...]
    rewards: tuple[RewardItem, ...]
    reward_name: str | None = None

    @property
    def var_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def label_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.labels)

    @property
    def action_names(self) -> tuple[str, ...]:
        return tuple(sorted({c.action for c in self.commands}))


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<num>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*")
  | (?P<op>->|\.\.|<=|>=|!=|[\[\]();:+\-*/=<>&|!,'?])
    """,
    re.VERBOSE,
)


class Token(NamedTuple):
    kind: str  # num, ident, string, op, eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    append = tokens.append
    line, line_start, pos = 1, 0, 0
    for m in _TOKEN_RE.finditer(text):
        start = m.start()
        if start != pos:
            raise ModelSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        pos = m.end()
        if kind == "nl":
            line += 1
            line_start = pos
        elif kind != "ws" and kind != "comment":
            append(Token(kind, m.group(), line, start - line_start + 1))
    if pos != len(text):
        raise ModelSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
    append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# recursive-descent parser


def _parse_number(text: str) -> Union[int, Fraction]:
    if re.fullmatch(r"\d+", text):
        return int(text)
    return Fraction(text)


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, message: str, tok: Token | None = None) -> ModelSyntaxError:
        tok = tok or self.tok
        return ModelSyntaxError(message, tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            found = self.tok.text or "end of input"
            raise self.error(f"expected {what}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    # expressions: | < & < ! < relational < additive < multiplicative < unary minus
    def expr(self) -> Expr:
        left = self.conj()
        while self.at("|"):
            self.i += 1
            left = Binary("|", left, self.conj())
        return left

    def conj(self) -> Expr:
        left = self.neg()
        while self.at("&"):
            self.i += 1
            left = Binary("&", left, self.neg())
        return left

    def neg(self) -> Expr:
        if self.accept("!"):
            return Unary("!", self.neg())
        return self.rel()

    def rel(self) -> Expr:
        left = self.additive()
        if self.tok.kind == "op" and self.tok.text in RELATIONAL:
            op = self.tok.text
            self.i += 1
            left = Binary(op, left, self.additive())
            if self.tok.kind == "op" and self.tok.text in RELATIONAL:
                raise self.error("relational operators do not chain; add parentheses")
        return left

    def additive(self) -> Expr:
        left = self.mult()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.tok.text
            self.i += 1
            left = Binary(op, left, self.mult())
        return left

    def mult(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.tok.text
            self.i += 1
            left = Binary(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.accept("-"):
            return Unary("-", self.unary())
        return self.primary()

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(_parse_number(tok.text))
        if tok.kind == "ident":
            if tok.text in ("true", "false"):
                self.i += 1
                return Num(tok.text == "true")
            if tok.text in FUNCTIONS and self.peek().text == "(":
                self.i += 2
                args = [self.expr()]
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
                if tok.text == "mod" and len(args) != 2:
                    raise self.error("mod takes exactly two arguments", tok)
                if len(args) < 2 and tok.text != "mod":
                    raise self.error(f"{tok.text} takes at least two arguments", tok)
                return Call(tok.text, tuple(args))
            if tok.text in _KEYWORDS:
                raise self.error(f"unexpected keyword {tok.text!r}")
            if self.peek().text == "'":
                raise self.error(f"primed variable {tok.text}' is only allowed on the left of an update")
            self.i += 1
            return Var(tok.text, (tok.line, tok.col))
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        raise self.error(f"unexpected {tok.text or 'end of input'!r} in expression")

    # model structure
    def model(self) -> "_RawModel":
        raw = _RawModel()
        kind_tok = self.tok
        if kind_tok.kind != "ident" or kind_tok.text not in ("mdp", "dtmc", "ctmc", "pta", "pomdp", "smg", "probabilistic", "nondeterministic", "stochastic", "markov"):
            raise self.error("model must start with a model type ('mdp')")
        if kind_tok.text not in ("mdp", "nondeterministic"):
            raise self.error(f"unsupported model type {kind_tok.text!r}; only 'mdp' is supported")
        self.i += 1
        raw.kind = "mdp"
        while self.tok.kind != "eof":
            if self.at("const"):
                self.const_decl(raw)
            elif self.at("module"):
                if raw.module_name is not None:
                    raise self.error("only a single module is supported")
                self.module(raw)
            elif self.at("label"):
                self.label(raw)
            elif self.at("rewards"):
                if raw.rewards_seen:
                    raise self.error("only a single reward structure is supported")
                self.rewards(raw)
            elif self.tok.text in ("global", "formula", "init", "system"):
                raise self.error(f"{self.tok.text!r} declarations are not supported")
            else:
                raise self.error(f"unexpected {self.tok.text!r} at top level")
        if raw.module_name is None:
            raise self.error("model declares no module")
        return raw

    def const_decl(self, raw: "_RawModel") -> None:
        self.expect("const")
        ctype = "int"
        if self.tok.text in ("int", "double", "bool"):
            ctype = self.tok.text
            self.i += 1
        name = self.expect_kind("ident", "constant name")
        self.expect("=")
        value = self.expr()
        self.expect(";")
        raw.constants.append((name, ctype, value))

    def module(self, raw: "_RawModel") -> None:
        self.expect("module")
        raw.module_name = self.expect_kind("ident", "module name").text
        if self.at("="):
            raise self.error("module renaming is not supported")
        while not self.at("endmodule"):
            if self.tok.kind == "eof":
                raise self.error("missing 'endmodule'")
            if self.at("["):
                self.command(raw)
            elif self.tok.kind == "ident" and self.peek().text == ":":
                self.var_decl(raw)
            else:
                raise self.error(f"expected variable declaration or command, found {self.tok.text!r}")
        self.expect("endmodule")

    def var_decl(self, raw: "_RawModel") -> None:
        name = self.expect_kind("ident", "variable name")
        self.expect(":")
        if self.at("bool"):
            raise self.error("bool variables are not supported; use [0..1]")
        self.expect("[")
        low = self.expr()
        self.expect("..")
        high = self.expr()
        self.expect("]")
        init = None
        if self.accept("init"):
            init = self.expr()
        self.expect(";")
        raw.variables.append((name, low, high, init))

    def command(self, raw: "_RawModel") -> None:
        start = self.expect("[")
        if self.tok.kind != "ident":
            raise self.error("command action label must be nonempty")
        action = self.tok.text
        self.i += 1
        self.expect("]")
        guard = self.expr()
        self.expect("->")
        branches = []
        if self._at_update_start():
            branches.append((None, self.update()))
        else:
            while True:
                ptok = self.tok
                prob = self.expr()
                self.expect(":")
                branches.append(((prob, ptok), self.update()))
                if not self.accept("+"):
                    break
        self.expect(";")
        raw.commands.append((action, guard, branches, start))

    def _at_update_start(self) -> bool:
        if self.at("true"):
            return self.peek().text in (";", "+")
        return self.at("(") and self.peek().kind == "ident" and self.peek(2).text == "'"

    def update(self) -> list:
        if self.accept("true"):
            return []
        assigns = [self.assignment()]
        while self.accept("&"):
            assigns.append(self.assignment())
        return assigns

    def assignment(self) -> tuple:
        self.expect("(")
        name = self.expect_kind("ident", "variable name")
        self.expect("'")
        self.expect("=")
        value = self.expr()
        self.expect(")")
        return (name, value)

    def label(self, raw: "_RawModel") -> None:
        self.expect("label")
        name = self.expect_kind("string", "quoted label name")
        self.expect("=")
        e = self.expr()
        self.expect(";")
        raw.labels.append((name, e))

    def rewards(self, raw: "_RawModel") -> None:
        self.expect("rewards")
        raw.rewards_seen = True
        if self.tok.kind == "string":
            raw.reward_name = self.tok.text[1:-1]
            self.i += 1
        while not self.at("endrewards"):
            if self.tok.kind == "eof":
                raise self.error("missing 'endrewards'")
            action = None
            start = self.tok
            if self.accept("["):
                if self.tok.kind == "ident":
                    action = self.tok.text
                    self.i += 1
                self.expect("]")
            guard = self.expr()
            self.expect(":")
            value = self.expr()
            self.expect(";")
            raw.rewards.append((action, guard, value, start))
        self.expect("endrewards")


_KEYWORDS = {
    "mdp", "module", "endmodule", "const", "int", "double", "bool", "init", "label",
    "rewards", "endrewards", "global", "formula",
}


@dataclass
class _RawModel:
    kind: str = "mdp"
    module_name: str | None = None
    constants: list = field(default_factory=list)
    variables: list = field(default_factory=list)
    commands: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    rewards_seen: bool = False
    reward_name: str | None = None


# ---------------------------------------------------------------------------
# constant folding and type checking


def _check_int64(value, pos) -> None:
    if isinstance(value, int) and not isinstance(value, bool):
        if not INT64_MIN <= value <= INT64_MAX:
            raise ModelSyntaxError("integer overflow in constant expression", *pos)


def _apply(op: str, a, b, pos):
    if op in ("&", "|"):
        if not (isinstance(a, bool) and isinstance(b, bool)):
            raise ModelSyntaxError(f"operator {op!r} needs boolean operands", *pos)
        return (a and b) if op == "&" else (a or b)
    if isinstance(a, bool) or isinstance(b, bool):
        if op in ("=", "!=") and isinstance(a, bool) and isinstance(b, bool):
            return (a == b) if op == "=" else (a != b)
        raise ModelSyntaxError(f"operator {op!r} needs numeric operands", *pos)
    if op == "+":
        r = a + b
    elif op == "-":
        r = a - b
    elif op == "*":
        r = a * b
    elif op == "/":
        if b == 0:
            raise ModelSyntaxError("division by zero", *pos)
        r = Fraction(a) / Fraction(b)
    elif op == "=":
        return a == b
    elif op == "!=":
        return a != b
    elif op == "<":
        return a < b
    elif op == "<=":
        return a <= b
    elif op == ">":
        return a > b
    elif op == ">=":
        return a >= b
    else:  # pragma: no cover
        raise AssertionError(op)
    if isinstance(r, Fraction) and r.denominator == 1 and op != "/":
        r = int(r)
    _check_int64(r, pos)
    return r


def _call(fn: str, args: list, pos):
    if any(isinstance(a, bool) for a in args):
        raise ModelSyntaxError(f"{fn} needs numeric arguments", *pos)
    if fn == "min":
        return min(args)
    if fn == "max":
        return max(args)
    a, b = args
    if not (isinstance(a, int) and isinstance(b, int)):
        raise ModelSyntaxError("mod needs integer arguments", *pos)
    if b == 0:
        raise ModelSyntaxError("mod by zero", *pos)
    return a % b


def _first_pos(e: Expr) -> tuple[int, int]:
    if isinstance(e, Var):
        return e.pos
    if isinstance(e, Unary):
        return _first_pos(e.operand)
    if isinstance(e, Binary):
        p = _first_pos(e.left)
        return p if p != (0, 0) else _first_pos(e.right)
    if isinstance(e, Call):
        for a in e.args:
            p = _first_pos(a)
            if p != (0, 0):
                return p
    return (0, 0)


def _fold(e: Expr, consts: dict, variables: set, pos: tuple[int, int]) -> Expr:
    """Substitute constants, fold constant subtrees and check that every name is declared."""
    if isinstance(e, Num):
        return e
    if isinstance(e, Var):
        if e.name in consts:
            return Num(consts[e.name])
        if e.name not in variables:
            raise ModelSyntaxError(f"undeclared variable {e.name!r}", *(e.pos if e.pos != (0, 0) else pos))
        return e
    here = _first_pos(e)
    here = here if here != (0, 0) else pos
    if isinstance(e, Unary):
        inner = _fold(e.operand, consts, variables, here)
        if isinstance(inner, Num):
            v = inner.value
            if e.op == "!":
                if not isinstance(v, bool):
                    raise ModelSyntaxError("'!' needs a boolean operand", *here)
                return Num(not v)
            if isinstance(v, bool):
                raise ModelSyntaxError("unary '-' needs a numeric operand", *here)
            _check_int64(-v, here)
            return Num(-v)
        return Unary(e.op, inner)
    if isinstance(e, Binary):
        left = _fold(e.left, consts, variables, here)
        right = _fold(e.right, consts, variables, here)
        if isinstance(left, Num) and isinstance(right, Num):
            return Num(_apply(e.op, left.value, right.value, here))
        return Binary(e.op, left, right)
    if isinstance(e, Call):
        args = [_fold(a, consts, variables, here) for a in e.args]
        if all(isinstance(a, Num) for a in args):
            return Num(_call(e.fn, [a.value for a in args], here))
        return Call(e.fn, tuple(args))
    raise AssertionError(e)  # pragma: no cover


def expr_type(e: Expr, pos=(0, 0)) -> str:
    """Return 'bool', 'int' or 'num' (rational); raise on ill-typed expressions."""
    if isinstance(e, Num):
        if isinstance(e.value, bool):
            return "bool"
        if isinstance(e.value, int):
            return "int"
        return "num"
    if isinstance(e, Var):
        return "int"
    here = _first_pos(e)
    here = here if here != (0, 0) else pos
    if isinstance(e, Unary):
        t = expr_type(e.operand, here)
        if e.op == "!":
            if t != "bool":
                raise ModelSyntaxError("'!' needs a boolean operand", *here)
            return "bool"
        if t == "bool":
            raise ModelSyntaxError("unary '-' needs a numeric operand", *here)
        return t
    if isinstance(e, Binary):
        lt, rt = expr_type(e.left, here), expr_type(e.right, here)
        if e.op in ("&", "|"):
            if lt != "bool" or rt != "bool":
                raise ModelSyntaxError(f"operator {e.op!r} needs boolean operands", *here)
            return "bool"
        if e.op in ("=", "!="):
            if (lt == "bool") != (rt == "bool"):
                raise ModelSyntaxError(f"cannot compare boolean with number using {e.op!r}", *here)
            return "bool"
        if lt == "bool" or rt == "bool":
            raise ModelSyntaxError(f"operator {e.op!r} needs numeric operands", *here)
        if e.op in RELATIONAL:
            return "bool"
        if e.op == "/":
            raise ModelSyntaxError("division is only allowed in constant expressions", *here)
        return "num" if "num" in (lt, rt) else "int"
    if isinstance(e, Call):
        ts = [expr_type(a, here) for a in e.args]
        if "bool" in ts:
            raise ModelSyntaxError(f"{e.fn} needs numeric arguments", *here)
        if e.fn == "mod" and "num" in ts:
            raise ModelSyntaxError("mod needs integer arguments", *here)
        return "num" if "num" in ts else "int"
    raise AssertionError(e)  # pragma: no cover


def expr_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Unary):
        return expr_vars(e.operand)
    if isinstance(e, Binary):
        return expr_vars(e.left) | expr_vars(e.right)
    if isinstance(e, Call):
        return set().union(*(expr_vars(a) for a in e.args))
    return set()


def _const_value(e: Expr, consts: dict, pos, what: str):
    folded = _fold(e, consts, set(), pos)
    if not isinstance(folded, Num):
        raise ModelSyntaxError(f"{what} must be a constant expression", *pos)
    return folded.value


def _tok_pos(tok: Token) -> tuple[int, int]:
    return (tok.line, tok.col)


def _fmt_number(x: Fraction) -> str:
    return format(float(x), ".15g")


def _build(raw: _RawModel) -> ModelAst:
    consts: dict[str, Union[int, Fraction, bool]] = {}
    const_list = []
    for name_tok, ctype, e in raw.constants:
        name = name_tok.text
        pos = _tok_pos(name_tok)
        if name in consts:
            raise ModelSyntaxError(f"duplicate constant {name!r}", *pos)
        value = _const_value(e, consts, pos, f"constant {name}")
        if ctype == "int":
            if isinstance(value, bool) or (isinstance(value, Fraction) and value.denominator != 1):
                raise ModelSyntaxError(f"constant {name} is declared int but has value {value}", *pos)
            value = int(value)
        elif ctype == "double":
            if isinstance(value, bool):
                raise ModelSyntaxError(f"constant {name} is declared double but is boolean", *pos)
            value = Fraction(value)
        elif not isinstance(value, bool):
            raise ModelSyntaxError(f"constant {name} is declared bool but is numeric", *pos)
        consts[name] = value
        const_list.append((name, ctype, value))

    variables = []
    seen: dict[str, VarDecl] = {}
    for name_tok, low_e, high_e, init_e in raw.variables:
        name = name_tok.text
        pos = _tok_pos(name_tok)
        if name in seen:
            raise ModelError(f"duplicate variable {name!r} (line {name_tok.line})")
        if name in consts:
            raise ModelError(f"variable {name!r} clashes with a constant (line {name_tok.line})")
        low = _const_value(low_e, consts, pos, "range bound")
        high = _const_value(high_e, consts, pos, "range bound")
        if not (isinstance(low, int) and isinstance(high, int)) or isinstance(low, bool) or isinstance(high, bool):
            raise ModelSyntaxError(f"range of {name} must have integer bounds", *pos)
        if low > high:
            raise ModelError(f"variable {name!r} has empty range [{low}..{high}]")
        init = low if init_e is None else _const_value(init_e, consts, pos, "init value")
        if not isinstance(init, int) or isinstance(init, bool):
            raise ModelSyntaxError(f"init value of {name} must be an integer", *pos)
        if not low <= init <= high:
            raise ModelError(f"init value {init} of variable {name!r} is outside [{low}..{high}] (line {name_tok.line})")
        decl = VarDecl(name, low, high, init)
        seen[name] = decl
        variables.append(decl)
    var_set = set(seen)

    commands = []
    for action, guard_e, branches, start in raw.commands:
        pos = _tok_pos(start)
        guard = _fold(guard_e, consts, var_set, pos)
        if expr_type(guard, pos) != "bool":
            raise ModelSyntaxError(f"guard of [{action}] is not boolean", *pos)
        built = []
        total = Fraction(0)
        for prob_info, updates in branches:
            if prob_info is None:
                prob = Fraction(1)
            else:
                prob_e, ptok = prob_info
                ppos = _tok_pos(ptok)
                value = _const_value(prob_e, consts, ppos, "probability")
                if isinstance(value, bool):
                    raise ModelSyntaxError("probability must be numeric", *ppos)
                prob = Fraction(value)
                if not 0 < prob <= 1:
                    raise ModelSyntaxError(f"probability {_fmt_number(prob)} is outside (0,1]", *ppos)
            total += prob
            assigned = []
            names = set()
            for name_tok, value_e in updates:
                upos = _tok_pos(name_tok)
                vname = name_tok.text
                if vname not in var_set:
                    raise ModelSyntaxError(f"update of undeclared variable {vname!r}", *upos)
                if vname in names:
                    raise ModelSyntaxError(f"variable {vname!r} assigned twice in one update", *upos)
                names.add(vname)
                v = _fold(value_e, consts, var_set, upos)
                if expr_type(v, upos) != "int":
                    raise ModelSyntaxError(f"update of {vname} must be an integer expression", *upos)
                decl = seen[vname]
                if isinstance(v, Num) and not decl.low <= v.value <= decl.high:
                    raise ModelError(
                        f"update ({vname}'={v.value}) is outside [{decl.low}..{decl.high}] (line {name_tok.line})"
                    )
                assigned.append((vname, v))
            built.append(Branch(prob, tuple(assigned)))
        if abs(total - 1) > Fraction(1, 10**12):
            raise ModelSyntaxError(f"probabilities sum to {_fmt_number(total)}, not 1, in command [{action}]", *pos)
        commands.append(Command(action, guard, tuple(built), line=start.line))

    labels = []
    label_names = set()
    for name_tok, e in raw.labels:
        name = name_tok.text[1:-1]
        pos = _tok_pos(name_tok)
        if not name:
            raise ModelSyntaxError("label name must be nonempty", *pos)
        if name in label_names:
            raise ModelSyntaxError(f"duplicate label {name!r}", *pos)
        label_names.add(name)
        folded = _fold(e, consts, var_set, pos)
        if expr_type(folded, pos) != "bool":
            raise ModelSyntaxError(f"label {name!r} is not a boolean expression", *pos)
        labels.append((name, folded))

    rewards = []
    for action, guard_e, value_e, start in raw.rewards:
        pos = _tok_pos(start)
        guard = _fold(guard_e, consts, var_set, pos)
        if expr_type(guard, pos) != "bool":
            raise ModelSyntaxError("reward guard is not boolean", *pos)
        value = _const_value(value_e, consts, pos, "reward value")
        if isinstance(value, bool):
            raise ModelSyntaxError("reward value must be numeric", *pos)
        rewards.append(RewardItem(action, guard, Fraction(value)))

    return ModelAst(
        model_kind=raw.kind,
        module_name=raw.module_name,
        constants=tuple(const_list),
        variables=tuple(variables),
        commands=tuple(commands),
        labels=tuple(labels),
        rewards=tuple(rewards),
        reward_name=raw.reward_name,
    )


def parse_model(source_text: str) -> ModelAst:
    """Parse model source into a validated, constant-folded :class:`ModelAst`."""
    parser = _Parser(source_text)
    return _build(parser.model())


# ---------------------------------------------------------------------------
# pretty printing

_LEVEL = {"|": 1, "&": 2, "!": 3, "=": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
          "+": 5, "-": 5, "*": 6, "/": 6}


def format_value(v: Union[int, Fraction, bool]) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if v.denominator == 1:
        # keep the rational type on reparse
        return f"{v.numerator}.0"
    d = v.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d != 1:
        return f"{v.numerator}/{v.denominator}"
    sign = "-" if v < 0 else ""
    num, den = abs(v.numerator), v.denominator
    digits = 0
    while den != 1 and 10**digits % den != 0:
        digits += 1
    scaled = num * (10**digits // den)
    s = str(scaled).rjust(digits + 1, "0")
    return f"{sign}{s[:-digits]}.{s[-digits:]}"


def format_expr(e: Expr) -> str:
    return _fmt(e, 0)


def _fmt(e: Expr, need: int) -> str:
    if isinstance(e, Num):
        s = format_value(e.value)
        # negative literals and fractions reparse as operator trees; parenthesize where it matters
        if (s.startswith("-") and need > 5) or ("/" in s and need >= 6):
            return f"({s})"
        return s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(_fmt(a, 0) for a in e.args)})"
    if isinstance(e, Unary):
        if e.op == "!":
            s, lvl = f"!{_fmt(e.operand, 3)}", 3
        else:
            s, lvl = f"-{_fmt(e.operand, 7)}", 7
        return f"({s})" if lvl < need else s
    lvl = _LEVEL[e.op]
    if lvl == 4:
        s = f"{_fmt(e.left, 5)}{e.op}{_fmt(e.right, 5)}"
    else:
        sep = " " if e.op in ("&", "|") else ""
        s = f"{_fmt(e.left, lvl)}{sep}{e.op}{sep}{_fmt(e.right, lvl + 1)}"
    return f"({s})" if lvl < need else s


def _format_update(updates) -> str:
    if not updates:
        return "true"
    return "&".join(f"({name}'={format_expr(v)})" for name, v in updates)


def format_model(ast: ModelAst) -> str:
    """Render an AST as model source; :func:`parse_model` of the result gives back an equal AST."""
    out = [ast.model_kind, ""]
    for name, ctype, value in ast.constants:
        out.append(f"const {ctype} {name} = {format_value(value)};")
    if ast.constants:
        out.append("")
    out.append(f"module {ast.module_name}")
    for v in ast.variables:
        out.append(f"  {v.name} : [{v.low}..{v.high}] init {v.init};")
    for c in ast.commands:
        if len(c.branches) == 1 and c.branches[0].prob == 1:
            rhs = _format_update(c.branches[0].updates)
        else:
            rhs = " + ".join(f"{format_value(b.prob)}:{_format_update(b.updates)}" for b in c.branches)
        out.append(f"  [{c.action}] {format_expr(c.guard)} -> {rhs};")
    out.append("endmodule")
    out.append("")
    for name, e in ast.labels:
        out.append(f'label "{name}" = {format_expr(e)};')
    if ast.rewards or ast.reward_name is not None:
        out.append("")
        out.append("rewards" + (f' "{ast.reward_name}"' if ast.reward_name is not None else ""))
        for r in ast.rewards:
            prefix = f"[{r.action}] " if r.action is not None else ""
            out.append(f"  {prefix}{format_expr(r.guard)} : {format_value(r.value)};")
        out.append("endrewards")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# PCTL fragment


@dataclass(frozen=True)
class PctlQuery:
    """``P=? [psi]`` or ``P~p [psi]`` with psi one of F, F<=B or U over labels."""

    comparator: str | None  # None for P=?, else one of <, <=, >, >=
    bound: float | None
    path: str  # eventually | bounded_eventually | until
    target: str
    constraint: str | None = None
    steps: int | None = None

    @property
    def kind(self) -> str:
        return "exact_probability" if self.comparator is None else "threshold"

    @property
    def labels(self) -> tuple[str, ...]:
        return (self.target,) if self.constraint is None else (self.constraint, self.target)


def _prop_error(msg: str, tok: Token) -> ModelSyntaxError:
    return ModelSyntaxError(msg, tok.line, tok.col)


def parse_property(text: str) -> PctlQuery:
    p = _Parser(text)
    start = p.tok
    if not (start.kind == "ident" and start.text == "P"):
        raise _prop_error("property must start with 'P'", start)
    p.i += 1
    comparator = None
    bound = None
    if p.at("="):
        p.i += 1
        p.expect("?")
    elif p.tok.kind == "op" and p.tok.text in ("<", "<=", ">", ">="):
        comparator = p.tok.text
        p.i += 1
        neg = p.accept("-")
        btok = p.expect_kind("num", "probability bound")
        bound = float(btok.text)
        if neg:
            bound = -bound
        if not 0.0 <= bound <= 1.0:
            raise _prop_error(f"probability bound {bound:g} is outside [0,1]", btok)
    else:
        raise _prop_error("expected '=?' or a comparison after 'P'", p.tok)
    p.expect("[")
    if p.at("F"):
        p.i += 1
        if p.accept("<="):
            neg = p.accept("-")
            stok = p.expect_kind("num", "step bound")
            if neg:
                raise _prop_error("step bound must be a nonnegative integer", stok)
            if not re.fullmatch(r"\d+", stok.text):
                raise _prop_error("step bound must be a nonnegative integer", stok)
            target = _label_token(p)
            q = PctlQuery(comparator, bound, "bounded_eventually", target, steps=int(stok.text))
        else:
            q = PctlQuery(comparator, bound, "eventually", _label_token(p))
    else:
        left = _label_token(p)
        p.expect("U")
        q = PctlQuery(comparator, bound, "until", _label_token(p), constraint=left)
    p.expect("]")
    if p.tok.kind != "eof":
        raise _prop_error(f"unexpected {p.tok.text!r} after property", p.tok)
    return q


def _label_token(p: _Parser) -> str:
    tok = p.expect_kind("string", "quoted label")
    name = tok.text[1:-1]
    if not name:
        raise _prop_error("empty label name", tok)
    return name


def format_property(q: PctlQuery) -> str:
    head = "P=?" if q.comparator is None else f"P{q.comparator}{q.bound!r}"
    if q.path == "eventually":
        body = f'F "{q.target}"'
    elif q.path == "bounded_eventually":
        body = f'F<={q.steps} "{q.target}"'
    else:
        body = f'"{q.constraint}" U "{q.target}"'
    return f"{head} [ {body} ]"


def iter_exprs(ast: ModelAst) -> Iterator[Expr]:
    for c in ast.commands:
        yield c.guard
        for b in c.branches:
            for _, v in b.updates:
                yield v
    for _, e in ast.labels:
        yield e
    for r in ast.rewards:
        yield r.guard
