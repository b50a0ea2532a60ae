"""Syntax tree, parser, renderer and fault injection for ``.sfl`` programs."""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path

from core.constants import INJECTED_FAULT_LABEL, KEYWORDS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SourceSpan:
    file: str
    start_line: int
    start_col: int
    end_line: int
    end_col: int

    def contains(self, other):
        """True when ``other`` lies inside this span (same file)."""
        if self.file != other.file:
            return False
        return (
            (self.start_line, self.start_col) <= (other.start_line, other.start_col)
            and (other.end_line, other.end_col) <= (self.end_line, self.end_col)
        )

    def __str__(self):
        return f'{self.file}:{self.start_line}:{self.start_col}'


NO_SPAN = SourceSpan('<generated>', 1, 1, 1, 1)


def _span():
    return field(default=NO_SPAN, compare=False, repr=False, kw_only=True)


class BinOp(Enum):
    ADD = '+'
    SUB = '-'
    MUL = '*'
    DIV = '/'
    MOD = 'mod'
    EQ = '='
    LT = '<'
    LE = '<='

    @property
    def concretised(self):
        return self in (BinOp.DIV, BinOp.MOD)

    @property
    def arithmetic(self):
        return self in (BinOp.ADD, BinOp.SUB, BinOp.MUL, BinOp.DIV, BinOp.MOD)


class Role(Enum):
    CLIENT = 'client'
    SERVER = 'server'


class Arm(Enum):
    THEN = 'then'
    ELSE = 'else'


# Atomic expressions

@dataclass(frozen=True)
class IntLit:
    value: int
    span: SourceSpan = _span()


@dataclass(frozen=True)
class BoolLit:
    value: bool
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Lambda:
    params: tuple
    body: object
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Var:
    name: str
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Input:
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Binary:
    op: BinOp
    left: object
    right: object
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Register:
    handler_type: str
    function: Lambda
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Assign:
    name: str
    value: object
    span: SourceSpan = _span()


@dataclass(frozen=True)
class ErrorExpr:
    label: str
    span: SourceSpan = _span()


ATOMIC_TYPES = (IntLit, BoolLit, Lambda, Var, Input, Binary, Register, Assign, ErrorExpr)


# Expressions

@dataclass(frozen=True)
class Atomic:
    atom: object
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Let:
    name: str
    bound: object
    body: object
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Apply:
    fn: object
    args: tuple
    span: SourceSpan = _span()


@dataclass(frozen=True)
class If:
    cond: object
    then: object
    orelse: object
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Send:
    handler_type: str
    payload: tuple
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Program:
    role: Role
    body: object
    name: str


class ViolationKind(Enum):
    ILLEGAL_SEND = 'IllegalSend'
    UNBOUND_VARIABLE = 'UnboundVariable'


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    message: str
    span: SourceSpan

    def __str__(self):
        return f'{self.span}: {self.kind.value}: {self.message}'


@dataclass(frozen=True)
class FaultDescriptor:
    fault_id: int
    site: SourceSpan
    branch_arm: Arm
    label: str


class ParseError(ValueError):
    def __init__(self, message, file='<input>', line=1, col=1, expected=None):
        self.message = message
        self.file = file
        self.line = line
        self.col = col
        self.expected = expected
        text = f'{file}:{line}:{col}: {message}'
        if expected:
            text += f' (expected {expected})'
        super().__init__(text)


# Tokenizer

_TOKEN_RE = re.compile(r'''
    (?P<ws>\s+)
  | (?P<comment>;[^\n]*)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<int>-?[0-9]+(?![A-Za-z0-9_!?-]))
  | (?P<op><=|<|=|\+|-|\*|/)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_!?-]*)
''', re.VERBOSE)

_ATOMIC_FORMS = frozenset(['input', 'lambda', 'register', 'set!', 'error', 'mod'])


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int
    end_line: int
    end_col: int


def tokenize(text, file='<input>'):
    tokens = []
    pos = 0
    line, col = 1, 1
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if not match:
            raise ParseError(f'unexpected character {text[pos]!r}', file, line, col)
        kind = match.lastgroup
        chunk = match.group()
        newlines = chunk.count('\n')
        if newlines:
            end_line = line + newlines
            end_col = len(chunk) - chunk.rfind('\n') - 1
        else:
            end_line = line
            end_col = col + len(chunk) - 1
        if kind not in ('ws', 'comment'):
            tokens.append(Token(kind, chunk, line, col, end_line, end_col))
        line, col = end_line, end_col + 1
        pos = match.end()
    tokens.append(Token('eof', '', line, col, line, col))
    return tokens


def _unescape(raw):
    return re.sub(r'\\(.)', r'\1', raw[1:-1])


def _escape(label):
    return label.replace('\\', '\\\\').replace('"', '\\"')


def _is_keyword(token):
    return token.kind == 'op' or (token.kind == 'ident' and token.text in KEYWORDS)


class _Parser:
    def __init__(self, text, file):
        self.file = file
        self.tokens = tokenize(text, file)
        self.index = 0
        self.reserved = {tok.text for tok in self.tokens if tok.kind == 'ident'}
        self.fresh_counter = 0

    # token helpers

    def peek(self, offset=0):
        return self.tokens[min(self.index + offset, len(self.tokens) - 1)]

    def advance(self):
        token = self.tokens[self.index]
        if token.kind != 'eof':
            self.index += 1
        return token

    def fail(self, message, token=None, expected=None):
        token = token or self.peek()
        raise ParseError(message, self.file, token.line, token.col, expected)

    def expect(self, kind, expected):
        token = self.peek()
        if token.kind != kind:
            found = token.text or 'end of input'
            self.fail(f'unexpected {found!r}', token, expected)
        return self.advance()

    def expect_name(self, what):
        token = self.peek()
        if token.kind != 'ident':
            self.fail(f'unexpected {token.text or "end of input"!r}', token, what)
        if token.text in KEYWORDS:
            self.fail(f'keyword {token.text!r} cannot be used as {what}', token)
        return self.advance().text

    def span(self, start, end):
        return SourceSpan(self.file, start.line, start.col, end.end_line, end.end_col)

    def fresh_name(self):
        while True:
            name = f'_seq{self.fresh_counter}'
            self.fresh_counter += 1
            if name not in self.reserved:
                self.reserved.add(name)
                return name

    # grammar

    def parse(self):
        expr = self.parse_expr()
        if self.peek().kind != 'eof':
            self.fail(f'unexpected {self.peek().text!r} after program', expected='end of input')
        return expr

    def parse_expr(self):
        start = self.peek()
        if start.kind != 'lparen':
            atom = self.parse_aexpr()
            return Atomic(atom, span=atom.span)
        head = self.peek(1)
        if head.kind == 'ident' and head.text == 'let':
            return self.parse_let()
        if head.kind == 'ident' and head.text == 'if':
            return self.parse_if()
        if head.kind == 'ident' and head.text == 'send':
            return self.parse_send()
        if head.kind == 'ident' and head.text == 'begin':
            return self.parse_begin()
        if head.kind == 'op' or (head.kind == 'ident' and head.text in _ATOMIC_FORMS):
            atom = self.parse_aexpr()
            return Atomic(atom, span=atom.span)
        if head.kind == 'rparen':
            self.fail('empty form', head, 'an expression')
        if _is_keyword(head):
            self.fail(f'keyword {head.text!r} cannot head an application', head)
        return self.parse_apply()

    def parse_let(self):
        start = self.advance()
        self.advance()
        name = self.expect_name('a variable name')
        bound = self.parse_expr()
        body = self.parse_expr()
        end = self.expect('rparen', "')' closing let")
        return Let(name, bound, body, span=self.span(start, end))

    def parse_if(self):
        start = self.advance()
        self.advance()
        cond = self.parse_aexpr()
        then = self.parse_expr()
        orelse = self.parse_expr()
        end = self.expect('rparen', "')' closing if")
        return If(cond, then, orelse, span=self.span(start, end))

    def parse_send(self):
        start = self.advance()
        self.advance()
        handler_type = self.expect_name('a handler type')
        payload = []
        while self.peek().kind != 'rparen':
            if self.peek().kind == 'eof':
                self.fail('unterminated send', expected="')'")
            payload.append(self.parse_aexpr())
        if not payload:
            self.fail('send needs at least one payload value', expected='an atomic expression')
        end = self.advance()
        return Send(handler_type, tuple(payload), span=self.span(start, end))

    def parse_begin(self):
        start = self.advance()
        self.advance()
        exprs = []
        while self.peek().kind != 'rparen':
            if self.peek().kind == 'eof':
                self.fail('unterminated begin', expected="')'")
            exprs.append(self.parse_expr())
        if not exprs:
            self.fail('begin needs at least one expression', expected='an expression')
        end = self.advance()
        span = self.span(start, end)
        result = exprs[-1]
        for expr in reversed(exprs[:-1]):
            result = Let(self.fresh_name(), expr, result, span=span)
        return result

    def parse_apply(self):
        start = self.advance()
        fn = self.parse_aexpr()
        args = []
        while self.peek().kind != 'rparen':
            if self.peek().kind == 'eof':
                self.fail('unterminated application', expected="')'")
            args.append(self.parse_aexpr())
        if not args:
            self.fail('application needs at least one argument', expected='an atomic expression')
        end = self.advance()
        return Apply(fn, tuple(args), span=self.span(start, end))

    def parse_aexpr(self):
        token = self.peek()
        if token.kind == 'int':
            self.advance()
            return IntLit(int(token.text), span=self.span(token, token))
        if token.kind == 'ident':
            self.advance()
            if token.text in ('true', 'false'):
                return BoolLit(token.text == 'true', span=self.span(token, token))
            if token.text in KEYWORDS:
                self.fail(f'keyword {token.text!r} cannot be used as a variable', token)
            return Var(token.text, span=self.span(token, token))
        if token.kind != 'lparen':
            self.fail(f'unexpected {token.text or "end of input"!r}', token, 'an atomic expression')

        head = self.peek(1)
        if head.kind == 'op' or (head.kind == 'ident' and head.text == 'mod'):
            self.advance()
            op = BinOp(self.advance().text)
            left = self.parse_aexpr()
            right = self.parse_aexpr()
            end = self.expect('rparen', f"')' closing {op.value}")
            return Binary(op, left, right, span=self.span(token, end))
        if head.kind != 'ident' or head.text not in _ATOMIC_FORMS:
            self.fail('expected an atomic expression', head)

        self.advance()
        self.advance()
        if head.text == 'input':
            end = self.expect('rparen', "')' closing input")
            return Input(span=self.span(token, end))
        if head.text == 'lambda':
            self.expect('lparen', "'(' opening the parameter list")
            params = []
            while self.peek().kind != 'rparen':
                name_token = self.peek()
                name = self.expect_name('a parameter name')
                if name in params:
                    self.fail(f'duplicate parameter {name!r}', name_token)
                params.append(name)
            if not params:
                self.fail('lambda needs at least one parameter', expected='a parameter name')
            self.advance()
            body = self.parse_expr()
            end = self.expect('rparen', "')' closing lambda")
            return Lambda(tuple(params), body, span=self.span(token, end))
        if head.text == 'register':
            handler_type = self.expect_name('a handler type')
            function_token = self.peek()
            function = self.parse_aexpr()
            if not isinstance(function, Lambda):
                self.fail('register expects a lambda', function_token, '(lambda ...)')
            end = self.expect('rparen', "')' closing register")
            return Register(handler_type, function, span=self.span(token, end))
        if head.text == 'set!':
            name = self.expect_name('a variable name')
            value = self.parse_aexpr()
            end = self.expect('rparen', "')' closing set!")
            return Assign(name, value, span=self.span(token, end))
        # error
        label_token = self.expect('string', 'a string label')
        label = _unescape(label_token.text)
        if not label:
            self.fail('error label must not be empty', label_token)
        end = self.expect('rparen', "')' closing error")
        return ErrorExpr(label, span=self.span(token, end))


def parse_program(text, role, name, file=None):
    """
    Parse source text into a Program.

    Args:
        text: program source
        role: Role or its string value ('client' / 'server')
        name: program name (used as the span file when ``file`` is omitted)

    Raises ParseError on malformed input.
    """
    role = Role(role) if not isinstance(role, Role) else role
    body = _Parser(text, file or name).parse()
    return Program(role, body, name)


def infer_role(path):
    stem = Path(path).stem
    return Role.SERVER if stem.endswith('-server') or stem.endswith('_server') else Role.CLIENT


def read_program(path, role=None):
    """Read and parse an ``.sfl`` file; the role defaults to the file-name convention."""
    path = Path(path)
    text = path.read_text(encoding='utf-8')
    return parse_program(text, role or infer_role(path), path.name)


# Traversal

def children(node):
    if isinstance(node, Atomic):
        return (node.atom,)
    if isinstance(node, Let):
        return (node.bound, node.body)
    if isinstance(node, Apply):
        return (node.fn,) + node.args
    if isinstance(node, If):
        return (node.cond, node.then, node.orelse)
    if isinstance(node, Send):
        return node.payload
    if isinstance(node, Lambda):
        return (node.body,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    if isinstance(node, Register):
        return (node.function,)
    if isinstance(node, Assign):
        return (node.value,)
    return ()


def iter_nodes(node):
    """Depth-first pre-order walk over every expression and atom."""
    if isinstance(node, Program):
        node = node.body
    stack = [node]
    while stack:
        current = stack.pop()
        yield current
        stack.extend(reversed(children(current)))


def _bound_names(node):
    names = set()
    for item in iter_nodes(node):
        if isinstance(item, (Var, Assign, Let)):
            names.add(item.name)
        elif isinstance(item, Lambda):
            names.update(item.params)
    return names


def validate(program):
    """Return the list of violations; an empty list means the program is runnable."""
    violations = []

    def visit(node, scope):
        if isinstance(node, Var) and node.name not in scope:
            violations.append(Violation(
                ViolationKind.UNBOUND_VARIABLE, f'unbound variable {node.name!r}', node.span))
        elif isinstance(node, Assign) and node.name not in scope:
            violations.append(Violation(
                ViolationKind.UNBOUND_VARIABLE, f'assignment to unbound variable {node.name!r}', node.span))
        elif isinstance(node, Send) and program.role is Role.SERVER:
            violations.append(Violation(
                ViolationKind.ILLEGAL_SEND, f'server program sends {node.handler_type!r}', node.span))

        if isinstance(node, Let):
            visit(node.bound, scope)
            visit(node.body, scope | {node.name})
        elif isinstance(node, Lambda):
            visit(node.body, scope | set(node.params))
        else:
            for child in children(node):
                visit(child, scope)

    visit(program.body, frozenset())
    return violations


def enumerate_branch_arms(program):
    arms = []
    for node in iter_nodes(program):
        if isinstance(node, If):
            arms.append((node.then.span, Arm.THEN))
            arms.append((node.orelse.span, Arm.ELSE))
    return arms


# Fault injection

class _FaultInjector:
    def __init__(self, rng, probability, reserved):
        self.rng = rng
        self.probability = probability
        self.reserved = set(reserved)
        self.faults = []

    def _draw(self, arm_body, arm):
        if not self.rng.random() < self.probability:
            return None
        fault_id = len(self.faults)
        descriptor = FaultDescriptor(
            fault_id=fault_id,
            site=arm_body.span,
            branch_arm=arm,
            label=INJECTED_FAULT_LABEL.format(fault_id=fault_id),
        )
        self.faults.append(descriptor)
        return descriptor

    def _fresh(self, fault_id):
        name = f'_fault{fault_id}'
        while name in self.reserved:
            name += '_'
        self.reserved.add(name)
        return name

    def _wrap(self, body, descriptor):
        if descriptor is None:
            return body
        marker = ErrorExpr(descriptor.label, span=body.span)
        return Let(self._fresh(descriptor.fault_id), Atomic(marker, span=body.span), body, span=body.span)

    def expr(self, node):
        if isinstance(node, Atomic):
            return replace(node, atom=self.atom(node.atom))
        if isinstance(node, Let):
            return replace(node, bound=self.expr(node.bound), body=self.expr(node.body))
        if isinstance(node, Apply):
            return replace(node, fn=self.atom(node.fn), args=tuple(self.atom(a) for a in node.args))
        if isinstance(node, Send):
            return replace(node, payload=tuple(self.atom(a) for a in node.payload))
        if isinstance(node, If):
            then_fault = self._draw(node.then, Arm.THEN)
            else_fault = self._draw(node.orelse, Arm.ELSE)
            return replace(
                node,
                cond=self.atom(node.cond),
                then=self._wrap(self.expr(node.then), then_fault),
                orelse=self._wrap(self.expr(node.orelse), else_fault),
            )
        raise TypeError(f'not an expression: {node!r}')

    def atom(self, node):
        if isinstance(node, Lambda):
            return replace(node, body=self.expr(node.body))
        if isinstance(node, Binary):
            return replace(node, left=self.atom(node.left), right=self.atom(node.right))
        if isinstance(node, Register):
            return replace(node, function=self.atom(node.function))
        if isinstance(node, Assign):
            return replace(node, value=self.atom(node.value))
        return node


def inject_faults(program, seed, probability):
    """
    Wrap each branch arm in an explicit error with the given probability.

    Every arm gets one independent draw from ``random.Random(seed)`` in
    pre-order, so the result depends only on (program, seed, probability).

    Returns:
        (injected Program, list of FaultDescriptor)
    """
    probability = Fraction(probability)
    if not 0 <= probability <= 1:
        raise ValueError('Fault probability must lie in [0, 1]')
    injector = _FaultInjector(random.Random(seed), probability, _bound_names(program))
    body = injector.expr(program.body)
    logger.debug(f'Injected {len(injector.faults)} fault(s) into {program.name} (seed={seed})')
    return replace(program, body=body), injector.faults


# Rendering

def _render_atom(node):
    if isinstance(node, IntLit):
        return str(node.value)
    if isinstance(node, BoolLit):
        return 'true' if node.value else 'false'
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Input):
        return '(input)'
    if isinstance(node, Lambda):
        return f'(lambda ({" ".join(node.params)}) {_render_expr(node.body)})'
    if isinstance(node, Binary):
        return f'({node.op.value} {_render_atom(node.left)} {_render_atom(node.right)})'
    if isinstance(node, Register):
        return f'(register {node.handler_type} {_render_atom(node.function)})'
    if isinstance(node, Assign):
        return f'(set! {node.name} {_render_atom(node.value)})'
    if isinstance(node, ErrorExpr):
        return f'(error "{_escape(node.label)}")'
    raise TypeError(f'not an atomic expression: {node!r}')


def _render_expr(node):
    if isinstance(node, Atomic):
        return _render_atom(node.atom)
    if isinstance(node, Let):
        return f'(let {node.name} {_render_expr(node.bound)} {_render_expr(node.body)})'
    if isinstance(node, Apply):
        return f'({" ".join(_render_atom(a) for a in (node.fn,) + node.args)})'
    if isinstance(node, If):
        return f'(if {_render_atom(node.cond)} {_render_expr(node.then)} {_render_expr(node.orelse)})'
    if isinstance(node, Send):
        return f'(send {node.handler_type} {" ".join(_render_atom(a) for a in node.payload)})'
    raise TypeError(f'not an expression: {node!r}')


def _pretty_atom(node, indent):
    pad = ' ' * (indent + 2)
    if isinstance(node, Lambda):
        return f'(lambda ({" ".join(node.params)})\n{pad}{_pretty_expr(node.body, indent + 2)})'
    if isinstance(node, Register):
        function = node.function
        return (
            f'(register {node.handler_type} (lambda ({" ".join(function.params)})\n'
            f'{pad}{_pretty_expr(function.body, indent + 2)}))'
        )
    return _render_atom(node)


def _pretty_expr(node, indent):
    if isinstance(node, Atomic):
        return _pretty_atom(node.atom, indent)
    if isinstance(node, Let):
        pad = ' ' * (indent + 2)
        bound = _pretty_expr(node.bound, indent + 2)
        return f'(let {node.name} {bound}\n{pad}{_pretty_expr(node.body, indent + 2)})'
    if isinstance(node, If):
        pad = ' ' * (indent + 4)
        return (
            f'(if {_render_atom(node.cond)}\n'
            f'{pad}{_pretty_expr(node.then, indent + 4)}\n'
            f'{pad}{_pretty_expr(node.orelse, indent + 4)})'
        )
    return _render_expr(node)


def render(program, pretty=False):
    """Render a Program (or bare expression) back to source text."""
    body = program.body if isinstance(program, Program) else program
    if pretty:
        return _pretty_expr(body, 0)
    return _render_expr(body)
