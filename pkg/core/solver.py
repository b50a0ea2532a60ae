"""
Bounded model search over symbolic formulas.

Integer inputs are enumerated in growing L-infinity shells (0, 1, 2, ...);
inside a shell, assignments follow lexicographic order over the inputs
sorted by ordinal, each input running through 0, 1, -1, 2, -2, ...
The first satisfying assignment wins, so models are as small as possible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from core.constants import DEFAULT_MAX_ASSIGNMENTS, DEFAULT_SOLVER_BOUND
from core.lang import BinOp
from core.symbolic import (
    Sort,
    SymBinary,
    SymBool,
    SymEmpty,
    SymInput,
    SymInt,
    SymNot,
    free_inputs,
    input_sorts,
    is_int,
)

logger = logging.getLogger(__name__)


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    bound: int = DEFAULT_SOLVER_BOUND
    max_assignments: int = DEFAULT_MAX_ASSIGNMENTS

    def __post_init__(self):
        if self.bound < 1:
            raise ValueError('Solver bound must be at least 1')
        if self.max_assignments < 1:
            raise ValueError('max_assignments must be at least 1')


@dataclass(frozen=True)
class Sat:
    model: dict = field(hash=False)


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class Unknown:
    reason: str = 'BudgetExceeded'


class _BudgetExceeded(Exception):
    pass


def evaluate(value, model):
    """Evaluate a symbolic value under ``model`` (InputId -> int/bool)."""
    if isinstance(value, SymInt):
        return value.value
    if isinstance(value, SymBool):
        return value.value
    if isinstance(value, SymInput):
        if value.input_id not in model:
            raise EvalError(f'{value.input_id} is not covered by the model')
        concrete = model[value.input_id]
        if value.sort is Sort.INT and not is_int(concrete):
            raise EvalError(f'{value.input_id} expects an Int, got {concrete!r}')
        if value.sort is Sort.BOOL and not isinstance(concrete, bool):
            raise EvalError(f'{value.input_id} expects a Bool, got {concrete!r}')
        return concrete
    if isinstance(value, SymNot):
        inner = evaluate(value.inner, model)
        if not isinstance(inner, bool):
            raise EvalError('not applied to a non-Bool value')
        return not inner
    if isinstance(value, SymBinary):
        left = evaluate(value.left, model)
        right = evaluate(value.right, model)
        if value.op is BinOp.EQ:
            if isinstance(left, bool) != isinstance(right, bool):
                raise EvalError('= applied to values of different sorts')
            return left == right
        if not (is_int(left) and is_int(right)):
            raise EvalError(f'{value.op.value} applied to non-Int values')
        return _INT_OPS[value.op](left, right)
    if isinstance(value, SymEmpty):
        raise EvalError('empty symbolic values cannot be evaluated')
    raise EvalError(f'not a symbolic value: {value!r}')


_INT_OPS = {
    BinOp.ADD: lambda a, b: a + b,
    BinOp.SUB: lambda a, b: a - b,
    BinOp.MUL: lambda a, b: a * b,
    BinOp.EQ: lambda a, b: a == b,
    BinOp.LT: lambda a, b: a < b,
    BinOp.LE: lambda a, b: a <= b,
}


def compile_symbolic(value, index):
    """
    Compile a sort-correct symbolic value into a closure over an assignment
    list; ``index`` maps each InputId to its slot in that list.
    """
    if isinstance(value, (SymInt, SymBool)):
        constant = value.value
        return lambda a: constant
    if isinstance(value, SymInput):
        slot = index[value.input_id]
        return lambda a: a[slot]
    if isinstance(value, SymNot):
        inner = compile_symbolic(value.inner, index)
        return lambda a: not inner(a)
    if isinstance(value, SymBinary):
        left = compile_symbolic(value.left, index)
        right = compile_symbolic(value.right, index)
        op = _INT_OPS[value.op]
        return lambda a: op(left(a), right(a))
    raise EvalError(f'cannot compile {value!r}')


def _inputs_of(value):
    return free_inputs((value,))


def value_order(shell):
    """Values with |v| <= shell in enumeration order: 0, 1, -1, 2, -2, ..."""
    order = [0]
    for magnitude in range(1, shell + 1):
        order.extend((magnitude, -magnitude))
    return order


def _determining_term(conjunct, input_id, position, index):
    """If ``conjunct`` fixes ``input_id`` from earlier inputs, return that term."""
    if not (isinstance(conjunct, SymBinary) and conjunct.op is BinOp.EQ):
        return None
    for target, term in ((conjunct.left, conjunct.right), (conjunct.right, conjunct.left)):
        if isinstance(target, SymInput) and target.input_id == input_id:
            if all(index[other] < position for other in _inputs_of(term)):
                return term
    return None


class _Search:
    def __init__(self, formula, sorts, cfg, counter):
        self.inputs = sorted(sorts)
        self.sorts = [sorts[input_id] for input_id in self.inputs]
        self.index = {input_id: slot for slot, input_id in enumerate(self.inputs)}
        self.cfg = cfg
        self.counter = counter
        self.checks = [[] for _ in self.inputs]
        self.determined = [None] * len(self.inputs)
        for conjunct in formula:
            slots = [self.index[input_id] for input_id in _inputs_of(conjunct)]
            position = max(slots)
            self.checks[position].append(compile_symbolic(conjunct, self.index))
            if self.determined[position] is None:
                term = _determining_term(conjunct, self.inputs[position], position, self.index)
                if term is not None:
                    self.determined[position] = compile_symbolic(term, self.index)
        int_slots = [slot for slot, sort in enumerate(self.sorts) if sort is Sort.INT]
        self.last_int = int_slots[-1] if int_slots else -1
        self.assignment = [None] * len(self.inputs)

    def run(self):
        shells = range(self.cfg.bound + 1) if self.last_int >= 0 else range(1)
        for shell in shells:
            self.order = value_order(shell)
            if self._extend(0, shell, False):
                return dict(zip(self.inputs, self.assignment))
        return None

    def _candidates(self, slot, shell, reached):
        if self.sorts[slot] is Sort.BOOL:
            if self.determined[slot] is not None:
                return [self.determined[slot](self.assignment)]
            return [False, True]
        if self.determined[slot] is not None:
            value = self.determined[slot](self.assignment)
            return [value] if abs(value) <= shell else []
        if slot == self.last_int and not reached:
            return [shell, -shell] if shell else [0]
        return self.order

    def _extend(self, slot, shell, reached):
        if slot == len(self.inputs):
            return reached or self.last_int < 0
        is_int_slot = self.sorts[slot] is Sort.INT
        checks = self.checks[slot]
        for value in self._candidates(slot, shell, reached):
            self.counter[0] += 1
            if self.counter[0] > self.cfg.max_assignments:
                raise _BudgetExceeded()
            self.assignment[slot] = value
            if all(check(self.assignment) for check in checks):
                now_reached = reached or (is_int_slot and abs(value) == shell)
                if self._extend(slot + 1, shell, now_reached):
                    return True
        self.assignment[slot] = None
        return False


def _components(formula):
    """Split conjuncts into groups that share no input."""
    parent = {}

    def find(item):
        while parent[item] != item:
            parent[item] = parent[parent[item]]
            item = parent[item]
        return item

    for conjunct in formula:
        ids = _inputs_of(conjunct)
        for input_id in ids:
            parent.setdefault(input_id, input_id)
        for other in ids[1:]:
            parent[find(other)] = find(ids[0])
    groups = {}
    for conjunct in formula:
        ids = _inputs_of(conjunct)
        groups.setdefault(find(ids[0]), []).append(conjunct)
    return list(groups.values())


def check_sat(formula, cfg=None):
    """
    Decide ``formula`` within the configured bound.

    Returns Sat(model), Unsat() or Unknown(); raises SortError for an
    ill-sorted formula.
    """
    cfg = cfg or SolverConfig()
    formula = tuple(formula)
    sorts = input_sorts(formula)
    ground = [conjunct for conjunct in formula if not _inputs_of(conjunct)]
    if not all(evaluate(conjunct, {}) for conjunct in ground):
        return Unsat()
    open_conjuncts = [conjunct for conjunct in formula if _inputs_of(conjunct)]
    if not open_conjuncts:
        return Sat({})

    counter = [0]
    try:
        groups = _components(open_conjuncts)
        if len(groups) > 1:
            for group in groups:
                group_sorts = input_sorts(group)
                if _Search(group, group_sorts, cfg, counter).run() is None:
                    logger.debug(f'Unsat component after {counter[0]} assignment(s)')
                    return Unsat()
        model = _Search(open_conjuncts, sorts, cfg, counter).run()
    except _BudgetExceeded:
        logger.warning(f'Solver gave up after {cfg.max_assignments} assignments on {len(sorts)} input(s)')
        return Unknown()
    if model is None:
        return Unsat()
    return Sat(model)


def _smt_term(value):
    if isinstance(value, SymInt):
        return str(value.value) if value.value >= 0 else f'(- {-value.value})'
    if isinstance(value, SymBool):
        return 'true' if value.value else 'false'
    if isinstance(value, SymInput):
        return str(value.input_id)
    if isinstance(value, SymNot):
        return f'(not {_smt_term(value.inner)})'
    if isinstance(value, SymBinary):
        return f'({value.op.value} {_smt_term(value.left)} {_smt_term(value.right)})'
    raise EvalError(f'cannot export {value!r}')


def to_smtlib(formula):
    """SMT-LIB 2 script for ``formula``. An empty formula declares and asserts nothing."""
    formula = tuple(formula)
    sorts = input_sorts(formula)
    lines = [f'(declare-const {input_id} {sorts[input_id].value})' for input_id in sorted(sorts)]
    lines.extend(f'(assert {_smt_term(conjunct)})' for conjunct in formula)
    lines.extend(['(check-sat)', '(get-model)'])
    return '\n'.join(lines) + '\n'
