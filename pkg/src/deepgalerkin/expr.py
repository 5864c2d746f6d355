"""Expression language for PDE forms and boundary/initial data.

Grammar (the on-disk syntax used by `form`, `boundary_condition`,
`initial_condition` and `initial_rate` fields):

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ('-')? atom ('^' atom)?
    atom   := number | 'pi' | variable | 'u'
            | fn '(' expr ')' | 'D' '(' expr ',' variable ')' | '(' expr ')'
    fn     := 'sin' | 'cos' | 'exp' | 'log' | 'sqrt'

`u` is the trial function. `D(e, v)` is resolved symbolically at parse
time, so finished trees contain no derivative operator -- only `TrialFn`
leaves tagged with a multi-index (a sorted tuple of variable names).
`^` accepts constant integer exponents 0..4 only. `pi` is the 64-bit
float literal. Derivative order is capped at 3 for spatial variables
and 2 for the reserved time variable `t`.
"""

import math
import re
from dataclasses import dataclass

__all__ = [
    "Const", "Var", "TrialFn", "Unary", "Binary", "VarList",
    "ParseError", "EvalError", "OrderLimitError",
    "parse", "differentiate", "eval_pointwise", "to_source", "fold",
    "collect_tags", "collect_vars", "substitute_trial", "intern_expr",
    "add", "sub", "mul", "div", "neg", "power", "apply", "trial",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
RESERVED = set(FUNCTIONS) | {"u", "pi", "D"}
TIME_VAR = "t"
SPATIAL_ORDER_MAX = 3
TIME_ORDER_MAX = 2


class ParseError(ValueError):
    """Syntax or vocabulary error, carrying a character position."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (position {position})"
        super().__init__(message)
        self.position = position


class EvalError(ValueError):
    """Domain error raised while evaluating an expression."""


class OrderLimitError(ValueError):
    """Requested derivative exceeds the supported order caps."""


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class TrialFn:
    """The trial function, differentiated per its multi-index tag."""

    tag: tuple = ()


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or one of FUNCTIONS
    child: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # '+', '-', '*', '/', 'pow'
    left: "Expr"
    right: "Expr"


Expr = Const | Var | TrialFn | Unary | Binary

ZERO = Const(0.0)
ONE = Const(1.0)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*\Z")


@dataclass(frozen=True)
class VarList:
    """Ordered variable names; the time variable `t`, if present, is last."""

    names: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ValueError("variable names must be unique")
        for name in self.names:
            if not _IDENT_RE.match(name):
                raise ValueError(f"invalid variable name '{name}'")
            if name in RESERVED:
                raise ValueError(f"'{name}' is reserved and cannot name a variable")
        if TIME_VAR in self.names and self.names[-1] != TIME_VAR:
            raise ValueError("the time variable 't' must come last")

    @property
    def has_time(self):
        return TIME_VAR in self.names

    @property
    def spatial(self):
        return tuple(n for n in self.names if n != TIME_VAR)

    def index(self, name):
        return self.names.index(name)

    def __len__(self):
        return len(self.names)


# -- folding constructors ----------------------------------------------------
# Value-preserving rewrites only: constant arithmetic, 0/1 identities and
# e + e -> 2*e. No general simplification.

def _const(value):
    return Const(float(value) + 0.0)  # +0.0 normalises -0.0


def add(left, right):
    if isinstance(left, Const) and isinstance(right, Const):
        return _const(left.value + right.value)
    if left == ZERO:
        return right
    if right == ZERO:
        return left
    if left == right:
        return mul(Const(2.0), left)
    return Binary("+", left, right)


def sub(left, right):
    if isinstance(left, Const) and isinstance(right, Const):
        return _const(left.value - right.value)
    if right == ZERO:
        return left
    if left == ZERO:
        return neg(right)
    return Binary("-", left, right)


def mul(left, right):
    if isinstance(left, Const) and isinstance(right, Const):
        return _const(left.value * right.value)
    if left == ZERO or right == ZERO:
        return ZERO
    if left == ONE:
        return right
    if right == ONE:
        return left
    return Binary("*", left, right)


def div(left, right):
    if isinstance(right, Const) and right.value == 1.0:
        return left
    if isinstance(left, Const) and isinstance(right, Const) and right.value != 0.0:
        return _const(left.value / right.value)
    return Binary("/", left, right)


def neg(e):
    if isinstance(e, Const):
        return _const(-e.value)
    if isinstance(e, Unary) and e.op == "neg":
        return e.child
    return Unary("neg", e)


def power(base, exponent):
    """`base ^ exponent` for integer exponents 0..4."""
    n = int(exponent)
    if n != exponent or not 0 <= n <= 4:
        raise ParseError("exponent must be a constant integer between 0 and 4")
    if n == 0:
        return ONE
    if n == 1:
        return base
    if isinstance(base, Const):
        return _const(base.value ** n)
    return Binary("pow", base, Const(float(n)))


_UNARY_MATH = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
}


def apply(fn, child):
    if fn not in _UNARY_MATH:
        raise ValueError(f"unknown function '{fn}'")
    if isinstance(child, Const):
        try:
            return _const(_UNARY_MATH[fn](child.value))
        except (ValueError, OverflowError):
            pass  # leave unfolded; eval_pointwise reports the domain error
    return Unary(fn, child)


def trial():
    return TrialFn(())


def fold(e):
    """Rebuild `e` bottom-up through the folding constructors."""
    if isinstance(e, (Const, Var, TrialFn)):
        return _const(e.value) if isinstance(e, Const) else e
    if isinstance(e, Unary):
        child = fold(e.child)
        return neg(child) if e.op == "neg" else apply(e.op, child)
    left, right = fold(e.left), fold(e.right)
    if e.op == "+":
        return add(left, right)
    if e.op == "-":
        return sub(left, right)
    if e.op == "*":
        return mul(left, right)
    if e.op == "/":
        return div(left, right)
    if e.op == "pow":
        return power(left, right.value)
    raise ValueError(f"unknown operator '{e.op}'")


# -- differentiation ---------------------------------------------------------

def _extend_tag(tag, v):
    new = tuple(sorted(tag + (v,)))
    time_order = sum(1 for n in new if n == TIME_VAR)
    spatial_order = len(new) - time_order
    if time_order > TIME_ORDER_MAX:
        raise OrderLimitError(f"time derivative order {time_order} exceeds the cap of {TIME_ORDER_MAX}")
    if spatial_order > SPATIAL_ORDER_MAX:
        raise OrderLimitError(f"spatial derivative order {spatial_order} exceeds the cap of {SPATIAL_ORDER_MAX}")
    return new


def differentiate(e, v):
    """Exact symbolic derivative of `e` with respect to variable `v`."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == v else ZERO
    if isinstance(e, TrialFn):
        return TrialFn(_extend_tag(e.tag, v))
    if isinstance(e, Unary):
        dc = differentiate(e.child, v)
        if e.op == "neg":
            return neg(dc)
        if e.op == "sin":
            return mul(apply("cos", e.child), dc)
        if e.op == "cos":
            return neg(mul(apply("sin", e.child), dc))
        if e.op == "exp":
            return mul(e, dc)
        if e.op == "log":
            return div(dc, e.child)
        if e.op == "sqrt":
            return div(dc, mul(Const(2.0), e))
        raise ValueError(f"unknown operator '{e.op}'")
    dl = differentiate(e.left, v)
    dr = differentiate(e.right, v)
    if e.op == "+":
        return add(dl, dr)
    if e.op == "-":
        return sub(dl, dr)
    if e.op == "*":
        return add(mul(dl, e.right), mul(e.left, dr))
    if e.op == "/":
        return div(sub(mul(dl, e.right), mul(e.left, dr)), power(e.right, 2))
    if e.op == "pow":
        n = int(e.right.value)
        return mul(mul(Const(float(n)), power(e.left, n - 1)), dl)
    raise ValueError(f"unknown operator '{e.op}'")


# -- parsing -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<sym>[-+*/^(),])"
)


def _tokenize(source):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character '{source[pos]}'", pos)
        if m.lastgroup == "num":
            tokens.append(("num", float(m.group()), pos))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group(), pos))
        else:
            tokens.append(("sym", m.group(), pos))
        pos = m.end()
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, source, variables):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_sym(self, symbol):
        kind, value, pos = self.advance()
        if kind != "sym" or value != symbol:
            raise ParseError(f"expected '{symbol}'", pos)

    def parse(self):
        e = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input '{value}'", pos)
        return e

    def expr(self):
        left = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "sym" and value in "+-":
                self.advance()
                right = self.term()
                left = add(left, right) if value == "+" else sub(left, right)
            else:
                return left

    def term(self):
        left = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "sym" and value in "*/":
                self.advance()
                right = self.factor()
                left = mul(left, right) if value == "*" else div(left, right)
            else:
                return left

    def factor(self):
        kind, value, _ = self.peek()
        negate = False
        if kind == "sym" and value == "-":
            self.advance()
            negate = True
        node = self.atom()
        kind, value, pos = self.peek()
        if kind == "sym" and value == "^":
            self.advance()
            exponent = self.atom()
            if not isinstance(exponent, Const) or exponent.value != int(exponent.value) \
                    or not 0 <= exponent.value <= 4:
                raise ParseError("exponent must be a constant integer between 0 and 4", pos)
            node = power(node, int(exponent.value))
        return neg(node) if negate else node

    def atom(self):
        kind, value, pos = self.advance()
        if kind == "num":
            return _const(value)
        if kind == "sym" and value == "(":
            e = self.expr()
            self.expect_sym(")")
            return e
        if kind == "ident":
            if value == "pi":
                return Const(math.pi)
            if value == "u":
                return trial()
            if value in FUNCTIONS:
                self.expect_sym("(")
                e = self.expr()
                self.expect_sym(")")
                return apply(value, e)
            if value == "D":
                self.expect_sym("(")
                e = self.expr()
                self.expect_sym(",")
                vkind, vname, vpos = self.advance()
                if vkind != "ident" or vname not in self.variables.names:
                    raise ParseError("second argument of D(...) must be a variable", vpos)
                self.expect_sym(")")
                return differentiate(e, vname)
            if value in self.variables.names:
                return Var(value)
            raise ParseError(f"unknown identifier '{value}'", pos)
        raise ParseError("expected a number, variable or '('", pos)


def parse(source, variables):
    """Parse `source` against the declared `variables`; returns a folded Expr."""
    return _Parser(str(source), variables).parse()


# -- printing ----------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 10, 20, 25, 30, 40


def _prec(e):
    if isinstance(e, Binary):
        return _PREC_POW if e.op == "pow" else (_PREC_ADD if e.op in "+-" else _PREC_MUL)
    if isinstance(e, Unary) and e.op == "neg":
        return _PREC_NEG
    if isinstance(e, Const) and e.value < 0:
        return _PREC_NEG
    return _PREC_ATOM


def _wrap(e, minimum):
    s = to_source(e)
    return f"({s})" if _prec(e) < minimum else s


def _format_number(v):
    return str(int(v)) if v == int(v) and abs(v) < 1e16 else repr(v)


def to_source(e):
    """Render `e` in the grammar; parsing the result reproduces `e`."""
    if isinstance(e, Const):
        return f"-{_format_number(-e.value)}" if e.value < 0 else _format_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, TrialFn):
        s = "u"
        for v in e.tag:
            s = f"D({s}, {v})"
        return s
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"-{_wrap(e.child, _PREC_POW)}"
        return f"{e.op}({to_source(e.child)})"
    if e.op == "pow":
        return f"{_wrap(e.left, _PREC_ATOM)} ^ {_wrap(e.right, _PREC_ATOM)}"
    op_prec = _PREC_ADD if e.op in "+-" else _PREC_MUL
    return f"{_wrap(e.left, op_prec)} {e.op} {_wrap(e.right, op_prec + 1)}"


# -- evaluation --------------------------------------------------------------

def eval_pointwise(e, point, trial_fn=None):
    """Evaluate at a single point (a name->float mapping).

    `trial_fn(tag, point)` supplies trial-function values for TrialFn
    leaves; domain errors raise EvalError naming the offending subtree.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(point[e.name])
        except KeyError:
            raise EvalError(f"no value supplied for variable '{e.name}'") from None
    if isinstance(e, TrialFn):
        if trial_fn is None:
            raise EvalError("expression contains the trial function but no callback was given")
        return float(trial_fn(e.tag, point))
    if isinstance(e, Unary):
        v = eval_pointwise(e.child, point, trial_fn)
        if e.op == "neg":
            return -v
        if e.op == "log" and v <= 0.0:
            raise EvalError(f"log of non-positive value in '{to_source(e)}'")
        if e.op == "sqrt" and v < 0.0:
            raise EvalError(f"sqrt of negative value in '{to_source(e)}'")
        try:
            return _UNARY_MATH[e.op](v)
        except OverflowError:
            raise EvalError(f"overflow in '{to_source(e)}'") from None
    left = eval_pointwise(e.left, point, trial_fn)
    right = eval_pointwise(e.right, point, trial_fn)
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    if e.op == "*":
        return left * right
    if e.op == "/":
        if right == 0.0:
            raise EvalError(f"division by zero in '{to_source(e)}'")
        return left / right
    if e.op == "pow":
        return left ** int(right)
    raise ValueError(f"unknown operator '{e.op}'")


# -- tree utilities ----------------------------------------------------------

def collect_tags(e):
    """Set of TrialFn multi-indices appearing in `e`."""
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, TrialFn):
            out.add(node.tag)
        elif isinstance(node, Unary):
            stack.append(node.child)
        elif isinstance(node, Binary):
            stack.extend((node.left, node.right))
    return out


def collect_vars(e):
    """Set of variable names used by `e` (including derivative tags)."""
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, TrialFn):
            out.update(node.tag)
        elif isinstance(node, Unary):
            stack.append(node.child)
        elif isinstance(node, Binary):
            stack.extend((node.left, node.right))
    return out


def substitute_trial(e, replacement):
    """Replace every TrialFn[tag] in `e` with the tag-derivative of `replacement`."""
    derived = {}

    def for_tag(tag):
        if tag not in derived:
            d = replacement
            for v in tag:
                d = differentiate(d, v)
            derived[tag] = d
        return derived[tag]

    def walk(node):
        if isinstance(node, TrialFn):
            return for_tag(node.tag)
        if isinstance(node, (Const, Var)):
            return node
        if isinstance(node, Unary):
            child = walk(node.child)
            return neg(child) if node.op == "neg" else apply(node.op, child)
        left, right = walk(node.left), walk(node.right)
        if node.op == "+":
            return add(left, right)
        if node.op == "-":
            return sub(left, right)
        if node.op == "*":
            return mul(left, right)
        if node.op == "/":
            return div(left, right)
        return power(left, right.value)

    return walk(e)


def intern_expr(e, pool=None):
    """Hash-cons `e` so structurally equal subtrees share one instance."""
    if pool is None:
        pool = {}

    def rec(node):
        if isinstance(node, Unary):
            node = Unary(node.op, rec(node.child))
        elif isinstance(node, Binary):
            node = Binary(node.op, rec(node.left), rec(node.right))
        return pool.setdefault(node, node)

    return rec(e)
