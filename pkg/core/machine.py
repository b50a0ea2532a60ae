"""
Small-step concolic interpreter.

A run keeps a control expression, a linked environment, a store of
concrete/symbolic value pairs, a stack made only of let frames and the path
constraint. Handler boundaries are reached whenever control is atomic and
the stack is empty; the scheduled handler is then fired with fresh symbolic
parameters.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from enum import Enum

from core.constants import DEFAULT_INPUT_BOUND, DEFAULT_STEP_LIMIT, TOP_LEVEL
from core.lang import (
    Apply,
    Assign,
    Atomic,
    BinOp,
    Binary,
    BoolLit,
    ErrorExpr,
    If,
    Input,
    IntLit,
    Lambda,
    Let,
    Program,
    Register,
    Send,
    Var,
)
from core.symbolic import (
    EMPTY,
    BranchTaken,
    Closure,
    HandlerRef,
    InputId,
    Registered,
    Sort,
    SymBinary,
    SymBool,
    SymInput,
    SymInt,
    ValuePair,
    is_int,
    lift,
    negate,
    render_concrete,
    render_constraint,
    render_symbolic,
)

logger = logging.getLogger(__name__)


class ErrorKind(Enum):
    UNBOUND_VARIABLE = 'UnboundVariable'
    TYPE_MISMATCH = 'TypeMismatch'
    ARITY_MISMATCH = 'ArityMismatch'
    DIVISION_BY_ZERO = 'DivisionByZero'
    EXPLICIT_ERROR = 'ExplicitError'


class ExecutionError(Exception):
    """A runtime error of the interpreted program; carried as data in RunOutcome."""

    def __init__(self, kind, span, label):
        super().__init__(label)
        self.kind = kind
        self.span = span
        self.label = label

    @property
    def identity(self):
        return (self.kind, self.label, self.span)

    def __eq__(self, other):
        return isinstance(other, ExecutionError) and self.identity == other.identity

    def __hash__(self):
        return hash(self.identity)

    def __repr__(self):
        return f'ExecutionError({self.kind.value}, {self.label!r}, {self.span})'


class TerminationKind(Enum):
    COMPLETED = 'completed'
    FAILED = 'failed'
    STOPPED_AT_SEND = 'stopped-at-send'
    SCHEDULE_MISMATCH = 'schedule-mismatch'
    STEP_BUDGET_EXCEEDED = 'step-budget-exceeded'


class Environment:
    """One binding per node, chained to the enclosing scope."""

    __slots__ = ('name', 'address', 'parent')

    def __init__(self, name=None, address=None, parent=None):
        self.name = name
        self.address = address
        self.parent = parent

    def extend(self, name, address):
        return Environment(name, address, self)

    def lookup(self, name):
        env = self
        while env is not None:
            if env.name == name:
                return env.address
            env = env.parent
        return None


@dataclass(frozen=True)
class LetK:
    address: int
    body: object
    env: Environment


# Trace events

@dataclass(frozen=True)
class InputDrawn:
    input_id: InputId
    value: object
    source: str


@dataclass(frozen=True)
class BranchRecorded:
    cond: object
    taken: bool
    span: object
    inputs_consumed: int
    handler_position: int

    @property
    def constraint(self):
        return self.cond if self.taken else negate(self.cond)


@dataclass(frozen=True)
class HandlerRegistered:
    handler: HandlerRef


@dataclass(frozen=True)
class HandlerFired:
    handler: HandlerRef
    available: tuple
    param_ids: tuple
    inputs_consumed: int
    position: int


@dataclass(frozen=True)
class NoMoreHandlers:
    available: tuple
    inputs_consumed: int


@dataclass(frozen=True)
class SendObservation:
    handler_type: str
    payload: tuple
    pc_at_send: tuple
    occurrence_index: int
    inputs_consumed: int = 0
    span: object = field(default=None, compare=False)


@dataclass(frozen=True)
class MessageSent:
    observation: SendObservation


@dataclass(frozen=True)
class RunOutcome:
    termination: TerminationKind
    pc: tuple
    realized_inputs: tuple
    sends: tuple
    rw_profile: dict = field(hash=False)
    handler_input_ids: dict = field(hash=False)
    events: tuple = ()
    fired_handlers: tuple = ()
    registrations: tuple = ()
    error: ExecutionError | None = None
    failed_handler: str | None = None
    stopped_send: SendObservation | None = None
    matched: tuple = ()
    detail: str = ''
    steps: int = 0

    @property
    def completed(self):
        return self.termination is TerminationKind.COMPLETED

    @property
    def failed(self):
        return self.termination is TerminationKind.FAILED


# Step results

@dataclass
class Next:
    state: object


@dataclass(frozen=True)
class Fail:
    pc: tuple
    handler: str
    error: ExecutionError


@dataclass(frozen=True)
class Stop:
    reason: TerminationKind
    observation: SendObservation | None = None
    matched: tuple = ()
    detail: str = ''


class RecordSends:
    """Send policy that only observes: every send evaluates to true and the run goes on."""

    def inspect(self, observation):
        return None


@dataclass
class MachineState:
    control: object
    env: Environment
    store: dict
    kstack: list
    pc: list
    pending_inputs: list
    pending_handlers: list
    rng: random.Random
    input_bound: int = DEFAULT_INPUT_BOUND
    current_handler_type: str = TOP_LEVEL
    next_input_ordinal: int = 0
    realized_inputs: list = field(default_factory=list)
    input_cursor: int = 0
    handler_cursor: int = 0
    next_address: int = 0
    next_closure_id: int = 0
    registrations: list = field(default_factory=list)
    handler_position: int = -1
    handler_start_address: int = 0
    rw: dict = field(default_factory=dict)
    handler_input_ids: dict = field(default_factory=dict)
    sends: list = field(default_factory=list)
    events: list = field(default_factory=list)
    fired: list = field(default_factory=list)
    steps: int = 0

    def alloc(self, value=None):
        address = self.next_address
        self.next_address += 1
        if value is not None:
            self.store[address] = value
        return address

    def draw_input(self):
        if self.input_cursor < len(self.pending_inputs):
            value = self.pending_inputs[self.input_cursor]
            self.input_cursor += 1
            source = 'pending'
        else:
            value = self.rng.randint(-self.input_bound, self.input_bound)
            source = 'random'
        input_id = InputId(self.next_input_ordinal)
        self.next_input_ordinal += 1
        self.realized_inputs.append(value)
        self.events.append(InputDrawn(input_id, value, source))
        sort = Sort.BOOL if isinstance(value, bool) else Sort.INT
        return ValuePair(value, SymInput(input_id, sort))

    def note_access(self, name, address, write):
        """Record a read or write of a binding created before the current handler fired."""
        if self.handler_position < 0 or address >= self.handler_start_address:
            return
        reads, writes = self.rw[self.handler_position]
        (writes if write else reads).add(name)


def inject(body, inputs=(), handlers=(), seed=0, input_bound=DEFAULT_INPUT_BOUND):
    """Build the initial state for ``body``."""
    if isinstance(body, Program):
        body = body.body
    return MachineState(
        control=body,
        env=Environment(),
        store={},
        kstack=[],
        pc=[],
        pending_inputs=list(inputs),
        pending_handlers=list(handlers),
        rng=random.Random(seed),
        input_bound=input_bound,
    )


def _binary(op, left, right, span):
    lc, rc = left.concrete, right.concrete
    if op is BinOp.EQ:
        if isinstance(lc, bool) and isinstance(rc, bool) or is_int(lc) and is_int(rc):
            result = lc == rc
        else:
            raise ExecutionError(ErrorKind.TYPE_MISMATCH, span, '= expects operands of the same sort')
    else:
        if not (is_int(lc) and is_int(rc)):
            raise ExecutionError(ErrorKind.TYPE_MISMATCH, span, f'{op.value} expects Int operands')
        if op.concretised and rc == 0:
            raise ExecutionError(ErrorKind.DIVISION_BY_ZERO, span, 'division by zero')
        if op is BinOp.ADD:
            result = lc + rc
        elif op is BinOp.SUB:
            result = lc - rc
        elif op is BinOp.MUL:
            result = lc * rc
        elif op is BinOp.DIV:
            result = lc // rc
        elif op is BinOp.MOD:
            result = lc % rc
        elif op is BinOp.LT:
            result = lc < rc
        else:
            result = lc <= rc

    if op.concretised or left.symbolic == EMPTY or right.symbolic == EMPTY:
        return ValuePair(result, lift(result))
    return ValuePair(result, SymBinary(op, left.symbolic, right.symbolic))


def atomic_eval(atom, state):
    """
    Evaluate an atomic expression in the current environment.

    Input draws, registrations and assignments update ``state`` in place.
    Raises ExecutionError.
    """
    if isinstance(atom, IntLit):
        return ValuePair(atom.value, SymInt(atom.value))
    if isinstance(atom, BoolLit):
        return ValuePair(atom.value, SymBool(atom.value))
    if isinstance(atom, Var):
        address = state.env.lookup(atom.name)
        if address is None:
            raise ExecutionError(ErrorKind.UNBOUND_VARIABLE, atom.span, f'unbound variable {atom.name}')
        state.note_access(atom.name, address, write=False)
        return state.store[address]
    if isinstance(atom, Binary):
        left = atomic_eval(atom.left, state)
        right = atomic_eval(atom.right, state)
        return _binary(atom.op, left, right, atom.span)
    if isinstance(atom, Input):
        return state.draw_input()
    if isinstance(atom, Lambda):
        closure = Closure(atom, state.env, state.next_closure_id)
        state.next_closure_id += 1
        return ValuePair(closure, EMPTY)
    if isinstance(atom, Register):
        closure = atomic_eval(atom.function, state).concrete
        handler = HandlerRef(
            atom.handler_type,
            len(state.registrations),
            closure=closure,
            arity=len(atom.function.params),
        )
        state.registrations.append(handler)
        state.pc.append(Registered(handler))
        state.events.append(HandlerRegistered(handler))
        return ValuePair(True, SymBool(True))
    if isinstance(atom, Assign):
        address = state.env.lookup(atom.name)
        if address is None:
            raise ExecutionError(ErrorKind.UNBOUND_VARIABLE, atom.span, f'unbound variable {atom.name}')
        value = atomic_eval(atom.value, state)
        state.store[address] = value
        state.note_access(atom.name, address, write=True)
        return value
    if isinstance(atom, ErrorExpr):
        raise ExecutionError(ErrorKind.EXPLICIT_ERROR, atom.span, atom.label)
    raise AssertionError(f'no atomic rule for {atom!r}')


def _fire_next_handler(state):
    wanted = state.pending_handlers[state.handler_cursor]
    state.handler_cursor += 1
    handler = next((h for h in state.registrations if wanted.matches(h)), None)
    if handler is None:
        return Stop(TerminationKind.SCHEDULE_MISMATCH, detail=f'{wanted} was never registered')

    closure = handler.closure
    params = closure.function.params
    position = state.handler_position + 1
    first_id = state.next_input_ordinal
    param_ids = tuple(InputId(first_id + offset) for offset in range(len(params)))
    state.events.append(HandlerFired(
        handler, tuple(state.registrations), param_ids, first_id, position))
    state.fired.append(handler)
    state.handler_position = position
    state.handler_start_address = state.next_address
    state.current_handler_type = handler.handler_type
    state.rw[position] = (set(), set())
    state.handler_input_ids[position] = param_ids

    env = closure.env
    for param in params:
        env = env.extend(param, state.alloc(state.draw_input()))
    state.env = env
    state.control = closure.function.body
    return Next(state)


def _deliver(state, value):
    if state.kstack:
        frame = state.kstack.pop()
        state.store[frame.address] = value
        state.note_access(frame.env.name, frame.address, write=True)
        state.control = frame.body
        state.env = frame.env
        return Next(state)
    if state.handler_cursor < len(state.pending_handlers):
        return _fire_next_handler(state)
    state.events.append(NoMoreHandlers(tuple(state.registrations), state.next_input_ordinal))
    return Stop(TerminationKind.COMPLETED)


def step(state, send_policy=None):
    """Apply exactly one rule; the state is updated in place."""
    control = state.control
    try:
        if isinstance(control, Atomic):
            return _deliver(state, atomic_eval(control.atom, state))

        if isinstance(control, Let):
            address = state.alloc()
            state.kstack.append(LetK(address, control.body, state.env.extend(control.name, address)))
            state.control = control.bound
            return Next(state)

        if isinstance(control, Apply):
            fn = atomic_eval(control.fn, state)
            args = [atomic_eval(arg, state) for arg in control.args]
            if not isinstance(fn.concrete, Closure):
                raise ExecutionError(ErrorKind.TYPE_MISMATCH, control.span, 'application of a non-function')
            params = fn.concrete.function.params
            if len(params) != len(args):
                raise ExecutionError(
                    ErrorKind.ARITY_MISMATCH, control.span,
                    f'expected {len(params)} argument(s), got {len(args)}',
                )
            env = fn.concrete.env
            for param, arg in zip(params, args):
                env = env.extend(param, state.alloc(arg))
            state.env = env
            state.control = fn.concrete.function.body
            return Next(state)

        if isinstance(control, If):
            cond = atomic_eval(control.cond, state)
            if not isinstance(cond.concrete, bool):
                raise ExecutionError(ErrorKind.TYPE_MISMATCH, control.span, 'if expects a Bool condition')
            taken = cond.concrete
            if cond.symbolic != EMPTY:
                state.pc.append(BranchTaken(
                    cond.symbolic if taken else negate(cond.symbolic), span=control.span))
                state.events.append(BranchRecorded(
                    cond.symbolic, taken, control.span, state.next_input_ordinal, state.handler_position))
            state.control = control.then if taken else control.orelse
            return Next(state)

        if isinstance(control, Send):
            payload = tuple(atomic_eval(slot, state) for slot in control.payload)
            observation = SendObservation(
                control.handler_type,
                payload,
                tuple(state.pc),
                len(state.sends),
                state.next_input_ordinal,
                span=control.span,
            )
            state.sends.append(observation)
            state.events.append(MessageSent(observation))
            matched = send_policy.inspect(observation) if send_policy is not None else None
            if matched:
                return Stop(TerminationKind.STOPPED_AT_SEND, observation, tuple(matched))
            state.control = Atomic(BoolLit(True, span=control.span), span=control.span)
            return Next(state)
    except ExecutionError as error:
        return Fail(tuple(state.pc), state.current_handler_type, error)

    raise AssertionError(f'no rule applies to {control!r}')


def _outcome(state, termination, **extra):
    return RunOutcome(
        termination=termination,
        pc=tuple(state.pc),
        realized_inputs=tuple(state.realized_inputs),
        sends=tuple(state.sends),
        rw_profile={
            position: (frozenset(reads), frozenset(writes))
            for position, (reads, writes) in state.rw.items()
        },
        handler_input_ids=dict(state.handler_input_ids),
        events=tuple(state.events),
        fired_handlers=tuple(state.fired),
        registrations=tuple(state.registrations),
        steps=state.steps,
        **extra,
    )


def run(
    program,
    inputs=(),
    handlers=(),
    seed=0,
    send_policy=None,
    step_limit=DEFAULT_STEP_LIMIT,
    input_bound=DEFAULT_INPUT_BOUND,
):
    """
    Execute one test run.

    Args:
        program: a validated Program
        inputs: concrete values consumed, in order, by inputs and handler parameters
        handlers: HandlerRef sequence fired at successive handler boundaries
        seed: seed for values drawn once ``inputs`` is exhausted
        send_policy: object with ``inspect(observation)``; defaults to RecordSends

    Returns:
        RunOutcome
    """
    state = inject(program, inputs, handlers, seed, input_bound)
    policy = send_policy or RecordSends()
    while True:
        if state.steps >= step_limit:
            return _outcome(state, TerminationKind.STEP_BUDGET_EXCEEDED, detail=f'{step_limit} steps')
        state.steps += 1
        result = step(state, policy)
        if isinstance(result, Next):
            continue
        if isinstance(result, Fail):
            return _outcome(
                state, TerminationKind.FAILED, error=result.error, failed_handler=result.handler)
        return _outcome(
            state,
            result.reason,
            stopped_send=result.observation,
            matched=result.matched,
            detail=result.detail,
        )


def inputs_by_handler(outcome):
    """
    Split realized inputs per fired handler.

    Returns (top-level inputs, [(HandlerRef, inputs consumed while it ran)]).
    """
    boundaries = [event for event in outcome.events if isinstance(event, HandlerFired)]
    realized = list(outcome.realized_inputs)
    top_end = boundaries[0].inputs_consumed if boundaries else len(realized)
    steps = []
    for index, event in enumerate(boundaries):
        end = boundaries[index + 1].inputs_consumed if index + 1 < len(boundaries) else len(realized)
        steps.append((event.handler, realized[event.inputs_consumed:end]))
    return realized[:top_end], steps


def _render_event(event):
    if isinstance(event, InputDrawn):
        suffix = ' (random)' if event.source == 'random' else ''
        return f'input {event.input_id} = {render_concrete(event.value)}{suffix}'
    if isinstance(event, HandlerRegistered):
        return f'register {event.handler}/{event.handler.arity}'
    if isinstance(event, HandlerFired):
        params = ' '.join(str(input_id) for input_id in event.param_ids)
        return f'handler {event.handler} params {params}'
    if isinstance(event, BranchRecorded):
        return f'branch {render_symbolic(event.constraint)} at {event.span}'
    if isinstance(event, MessageSent):
        obs = event.observation
        concrete = ', '.join(render_concrete(pair.concrete) for pair in obs.payload)
        symbolic = ', '.join(render_symbolic(pair.symbolic) for pair in obs.payload)
        return f'send {obs.handler_type} #{obs.occurrence_index} payload [{concrete}] symbolic [{symbolic}]'
    return None


def render_trace(outcome):
    """Canonical line-oriented rendering of a run; byte-stable for identical runs."""
    lines = [line for line in map(_render_event, outcome.events) if line]
    lines.extend(f'pc {render_constraint(entry)}' for entry in outcome.pc)
    termination = outcome.termination
    if termination is TerminationKind.COMPLETED:
        lines.append('completed')
    elif termination is TerminationKind.FAILED:
        error = outcome.error
        lines.append(
            f'ERROR: {error.label} ({error.kind.value}) at {error.span} in handler {outcome.failed_handler}')
    elif termination is TerminationKind.STOPPED_AT_SEND:
        matched = ', '.join(str(record_id) for record_id in outcome.matched)
        lines.append(
            f'stopped at send {outcome.stopped_send.handler_type} '
            f'#{outcome.stopped_send.occurrence_index} matching record(s) {matched}')
    elif termination is TerminationKind.SCHEDULE_MISMATCH:
        lines.append(f'stopped: schedule mismatch, {outcome.detail}')
    else:
        lines.append(f'stopped: step limit exceeded after {outcome.detail}')
    return '\n'.join(lines) + '\n'


def path_key(outcome):
    return (
        tuple(handler.key for handler in outcome.fired_handlers),
        tuple(render_constraint(entry) for entry in outcome.pc),
    )


def count_feasible_paths(program, max_events, input_bound, step_limit=DEFAULT_STEP_LIMIT):
    """
    Count distinct (fired handler sequence, path constraint) pairs over every
    handler sequence up to ``max_events`` and every input vector in
    [-input_bound, input_bound]. Exponential; meant for small programs.
    """
    seen = set()
    values = range(-input_bound, input_bound + 1)

    def explore(inputs, handlers):
        outcome = run(program, inputs, handlers, seed=0, step_limit=step_limit, input_bound=input_bound)
        if len(outcome.realized_inputs) > len(inputs):
            for value in values:
                explore(inputs + [value], handlers)
            return
        if outcome.termination is TerminationKind.SCHEDULE_MISMATCH:
            return
        seen.add(path_key(outcome))
        if outcome.completed and len(handlers) < max_events:
            for handler in outcome.registrations:
                explore(inputs, handlers + [HandlerRef(handler.handler_type, handler.registration_ordinal)])

    explore([], [])
    return len(seen)
