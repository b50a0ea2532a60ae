"""
Concrete and symbolic value domains, path constraints and the formula
helpers used at branch and send time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from core.lang import BinOp, Lambda, ParseError, tokenize


class SortError(TypeError):
    """Raised when a symbolic term is built from operands of the wrong sort."""


class Sort(Enum):
    INT = 'Int'
    BOOL = 'Bool'


@dataclass(frozen=True, order=True)
class InputId:
    ordinal: int

    def __str__(self):
        return f'in{self.ordinal}'


@dataclass(eq=False)
class Closure:
    function: Lambda
    env: object
    closure_id: int

    def __repr__(self):
        return f'<closure #{self.closure_id}>'


def is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


# Symbolic values

@dataclass(frozen=True)
class SymInt:
    value: int


@dataclass(frozen=True)
class SymBool:
    value: bool


@dataclass(frozen=True)
class SymInput:
    input_id: InputId
    sort: Sort = Sort.INT


@dataclass(frozen=True)
class SymEmpty:
    pass


EMPTY = SymEmpty()

_COMPARISONS = (BinOp.EQ, BinOp.LT, BinOp.LE)


def sort_of(value):
    if isinstance(value, SymInt):
        return Sort.INT
    if isinstance(value, SymBool):
        return Sort.BOOL
    if isinstance(value, SymInput):
        return value.sort
    if isinstance(value, SymBinary):
        return Sort.BOOL if value.op in _COMPARISONS else Sort.INT
    if isinstance(value, SymNot):
        return Sort.BOOL
    return None


@dataclass(frozen=True)
class SymBinary:
    op: BinOp
    left: object
    right: object

    def __post_init__(self):
        if self.op.concretised:
            raise SortError(f'{self.op.value} is concretised and has no symbolic form')
        left, right = sort_of(self.left), sort_of(self.right)
        if self.op is BinOp.EQ:
            if left is None or left is not right:
                raise SortError(f'cannot compare {left} with {right}')
        elif left is not Sort.INT or right is not Sort.INT:
            raise SortError(f'{self.op.value} expects Int operands, got {left} and {right}')


@dataclass(frozen=True)
class SymNot:
    inner: object

    def __post_init__(self):
        if sort_of(self.inner) is not Sort.BOOL:
            raise SortError('not expects a Bool operand')


@dataclass(frozen=True)
class ValuePair:
    concrete: object
    symbolic: object

    def __str__(self):
        return f'<{render_concrete(self.concrete)}, {render_symbolic(self.symbolic)}>'


@dataclass(frozen=True)
class HandlerRef:
    """
    A registered handler. Identity is (handler_type, registration_ordinal);
    an omitted ordinal selects the first registration of that type.
    """
    handler_type: str
    registration_ordinal: int | None = None
    closure: Closure | None = field(default=None, compare=False, repr=False)
    arity: int | None = field(default=None, compare=False)

    @property
    def key(self):
        return (self.handler_type, self.registration_ordinal)

    def matches(self, other):
        if self.handler_type != other.handler_type:
            return False
        return self.registration_ordinal is None or self.registration_ordinal == other.registration_ordinal

    def __str__(self):
        if self.registration_ordinal is None:
            return self.handler_type
        return f'{self.handler_type}#{self.registration_ordinal}'


# Constraints

@dataclass(frozen=True)
class BranchTaken:
    cond: object
    span: object = field(default=None, compare=False)


@dataclass(frozen=True)
class Registered:
    handler: HandlerRef


def lift(concrete):
    if isinstance(concrete, bool):
        return SymBool(concrete)
    if is_int(concrete):
        return SymInt(concrete)
    return EMPTY


def negate(value):
    if isinstance(value, SymBool):
        return SymBool(not value.value)
    if isinstance(value, SymNot):
        return value.inner
    if sort_of(value) is not Sort.BOOL:
        raise SortError('only Bool-sorted values can be negated')
    return SymNot(value)


def branch_formula(pc):
    return tuple(entry.cond for entry in pc if isinstance(entry, BranchTaken))


def join_for_send(client_formula, bindings, server_formula):
    """
    Join a client path with a server record at a send.

    ``bindings`` pairs each mock input id with the payload slot bound to it:
    either a symbolic value or a ValuePair. Slots whose symbolic part is
    empty are concretised; slots that cannot be lifted (closures) bind
    nothing.
    """
    equalities = []
    for mock_id, payload in bindings:
        if isinstance(payload, ValuePair):
            symbolic = payload.symbolic
            if symbolic == EMPTY:
                symbolic = lift(payload.concrete)
        else:
            symbolic = payload
        if symbolic == EMPTY:
            continue
        equalities.append(SymBinary(BinOp.EQ, SymInput(mock_id, sort_of(symbolic)), symbolic))
    return tuple(client_formula) + tuple(equalities) + tuple(server_formula)


def _walk(value):
    stack = [value]
    while stack:
        current = stack.pop()
        yield current
        if isinstance(current, SymBinary):
            stack.append(current.right)
            stack.append(current.left)
        elif isinstance(current, SymNot):
            stack.append(current.inner)


def input_sorts(formula):
    """Map every input id occurring in ``formula`` to its sort."""
    sorts = {}
    for conjunct in formula:
        for node in _walk(conjunct):
            if isinstance(node, SymInput):
                known = sorts.setdefault(node.input_id, node.sort)
                if known is not node.sort:
                    raise SortError(f'{node.input_id} used as both {known.value} and {node.sort.value}')
    return sorts


def free_inputs(formula):
    return tuple(sorted(input_sorts(formula)))


def rename_inputs(value, mapping):
    if isinstance(value, SymInput):
        return SymInput(mapping.get(value.input_id, value.input_id), value.sort)
    if isinstance(value, SymBinary):
        return SymBinary(value.op, rename_inputs(value.left, mapping), rename_inputs(value.right, mapping))
    if isinstance(value, SymNot):
        return SymNot(rename_inputs(value.inner, mapping))
    return value


def shift_inputs(formula, offset):
    mapping = {input_id: InputId(input_id.ordinal + offset) for input_id in free_inputs(formula)}
    return tuple(rename_inputs(conjunct, mapping) for conjunct in formula)


# Canonical text

def render_concrete(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, Closure):
        return f'#<closure {value.closure_id}>'
    return str(value)


def render_symbolic(value):
    if isinstance(value, SymInt):
        return str(value.value)
    if isinstance(value, SymBool):
        return 'true' if value.value else 'false'
    if isinstance(value, SymInput):
        return str(value.input_id)
    if isinstance(value, SymBinary):
        return f'({value.op.value} {render_symbolic(value.left)} {render_symbolic(value.right)})'
    if isinstance(value, SymNot):
        return f'(not {render_symbolic(value.inner)})'
    if isinstance(value, SymEmpty):
        return 'empty'
    raise TypeError(f'not a symbolic value: {value!r}')


def render_formula(formula):
    return [render_symbolic(conjunct) for conjunct in formula]


def render_constraint(constraint):
    if isinstance(constraint, BranchTaken):
        return render_symbolic(constraint.cond)
    handler = constraint.handler
    return f'register {handler.handler_type}#{handler.registration_ordinal}/{handler.arity}'


def parse_symbolic(text):
    """Read a canonical symbolic rendering back into a value."""
    tokens = tokenize(text, '<symbolic>')
    position = 0

    def fail(message, token):
        raise ParseError(message, '<symbolic>', token.line, token.col)

    def term():
        nonlocal position
        token = tokens[position]
        position += 1
        if token.kind == 'int':
            return SymInt(int(token.text))
        if token.kind == 'ident':
            if token.text in ('true', 'false'):
                return SymBool(token.text == 'true')
            if token.text == 'empty':
                return EMPTY
            if token.text.startswith('in') and token.text[2:].isdigit():
                return SymInput(InputId(int(token.text[2:])))
            fail(f'unknown symbol {token.text!r}', token)
        if token.kind != 'lparen':
            fail(f'unexpected {token.text or "end of input"!r}', token)
        head = tokens[position]
        position += 1
        if head.kind == 'ident' and head.text == 'not':
            value = SymNot(term())
        elif head.kind == 'op':
            op = BinOp(head.text)
            value = SymBinary(op, term(), term())
        else:
            fail(f'unknown operator {head.text!r}', head)
        closing = tokens[position]
        if closing.kind != 'rparen':
            fail("expected ')'", closing)
        position += 1
        return value

    value = term()
    if tokens[position].kind != 'eof':
        fail('trailing input', tokens[position])
    return value


def parse_constraint(text):
    if text.startswith('register '):
        ref, _, arity = text[len('register '):].rpartition('/')
        handler_type, _, ordinal = ref.rpartition('#')
        return Registered(HandlerRef(handler_type, int(ordinal), arity=int(arity)))
    return BranchTaken(parse_symbolic(text))
