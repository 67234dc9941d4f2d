"""Parenthesized prefix expressions for custom fields, e.g. ``(mul (coord 1) (exp (mul -0.5 (coord 2))))``."""

from dataclasses import dataclass
import math
import re

from app.errors import ExpressionError

_TOKEN = re.compile(r"\(|\)|[^\s()]+")

# operator -> (min arity, max arity or None for variadic)
OPERATORS: dict[str, tuple[int, int | None]] = {
    "add": (2, None),
    "mul": (2, None),
    "pow": (2, 2),
    "exp": (1, 1),
    "sin": (1, 1),
    "cos": (1, 1),
}


@dataclass(frozen=True, slots=True)
class Number:
    value: float


@dataclass(frozen=True, slots=True)
class Coord:
    index: int


@dataclass(frozen=True, slots=True)
class Apply:
    op: str
    args: tuple["Expr", ...]


type Expr = Number | Coord | Apply


def _parse_number(token: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ExpressionError(f"Unknown symbol {token!r}") from None
    if not math.isfinite(value):
        raise ExpressionError(f"Non-finite literal {token!r}")
    return value


def parse_expression(text: str) -> Expr:
    """Parse a prefix expression, rejecting anything outside the supported operators."""
    tokens = _TOKEN.findall(text)
    if not tokens:
        raise ExpressionError("Empty expression")

    position = 0

    def parse() -> Expr:
        nonlocal position
        if position >= len(tokens):
            raise ExpressionError("Unexpected end of expression")

        token = tokens[position]
        position += 1
        if token == ")":
            raise ExpressionError("Unexpected ')'")
        if token != "(":
            return Number(_parse_number(token))

        if position >= len(tokens):
            raise ExpressionError("Unexpected end of expression")
        head = tokens[position]
        position += 1

        if head == "coord":
            if position + 1 >= len(tokens) or tokens[position + 1] != ")":
                raise ExpressionError("coord takes exactly one integer index")
            index_token = tokens[position]
            if not index_token.isdigit():
                raise ExpressionError(f"coord index must be a non-negative integer, got {index_token!r}")
            position += 2
            return Coord(int(index_token))

        if head not in OPERATORS:
            raise ExpressionError(f"Unknown operator {head!r}; allowed: coord, {', '.join(OPERATORS)}")

        args: list[Expr] = []
        while position < len(tokens) and tokens[position] != ")":
            args.append(parse())
        if position >= len(tokens):
            raise ExpressionError(f"Missing ')' after {head}")
        position += 1

        lowest, highest = OPERATORS[head]
        if len(args) < lowest or (highest is not None and len(args) > highest):
            raise ExpressionError(f"{head} takes {lowest if highest == lowest else f'at least {lowest}'} arguments")
        if head == "pow" and not isinstance(args[1], Number):
            raise ExpressionError("pow exponent must be a numeric literal")

        return Apply(head, tuple(args))

    expr = parse()
    if position != len(tokens):
        raise ExpressionError(f"Trailing tokens after expression: {' '.join(tokens[position:])}")
    return expr


def coordinates(expr: Expr) -> set[int]:
    """Coordinate indices referenced by an expression."""
    match expr:
        case Coord(index=index):
            return {index}
        case Apply(args=args):
            return set().union(*(coordinates(arg) for arg in args))
        case _:
            return set()
