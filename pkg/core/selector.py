"""
Execution tree and test selection.

Runs are merged into a tree of branch nodes (one per recorded condition)
and event-choice nodes (one per handler boundary). Unexplored branch sides
and unexplored handler options form the frontier from which the next run
is proposed.
"""

from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum

from core.machine import BranchRecorded, HandlerFired, NoMoreHandlers, TerminationKind
from core.solver import Sat, Unsat, check_sat
from core.symbolic import HandlerRef, InputId, SortError, free_inputs, negate, render_symbolic

logger = logging.getLogger(__name__)


class TreeConflict(RuntimeError):
    """Two runs disagree about the same tree position; the interpreter is not deterministic."""


class StrategyKind(Enum):
    BRUTE_FORCE = 'brute-force'
    READ_WRITE_CONFLICT = 'rw-conflict'


class SideStatus(Enum):
    UNEXPLORED = 'unexplored'
    INFEASIBLE = 'infeasible'
    ABANDONED = 'abandoned'


STOP = 'stop'


def _strip(handler):
    return HandlerRef(handler.handler_type, handler.registration_ordinal, arity=handler.arity)


class BranchNode:
    def __init__(self, cond, span, depth, witness, inputs_consumed, parent, edge):
        self.cond = cond
        self.span = span
        self.depth = depth
        self.witness = witness
        self.inputs_consumed = inputs_consumed
        self.parent = parent
        self.edge = edge
        self.children = {True: SideStatus.UNEXPLORED, False: SideStatus.UNEXPLORED}

    def slot(self, edge):
        return self.children[edge]

    def attach(self, edge, child):
        self.children[edge] = child


class EventChoiceNode:
    def __init__(self, depth, witness, inputs_consumed, parent, edge):
        self.depth = depth
        self.witness = witness
        self.inputs_consumed = inputs_consumed
        self.parent = parent
        self.edge = edge
        self.available = []
        self.children = {}

    def slot(self, edge):
        return self.children.get(edge)

    def attach(self, edge, child):
        self.children[edge] = child


@dataclass
class Leaf:
    termination: TerminationKind
    label: str = ''
    partial: bool = False
    parent: object = field(default=None, repr=False)
    edge: object = None


@dataclass(eq=False)
class _Target:
    kind: str
    node: object
    edge: object
    depth: int
    seq: int
    unknowns: int = 0

    @property
    def open(self):
        if self.kind == 'branch':
            return self.node.children[self.edge] is SideStatus.UNEXPLORED
        return self.edge not in self.node.children

    def describe(self):
        if self.kind == 'branch':
            side = 'then' if self.edge else 'else'
            return f'negate branch {render_symbolic(self.node.cond)} at {self.node.span} ({side} side)'
        if self.edge == STOP:
            return f'stop after {self.depth} event(s)'
        return f'fire {self.edge} as event {self.depth}'


@dataclass(frozen=True)
class PathSuggestion:
    handlers: tuple
    inputs: tuple
    model: dict = field(hash=False)
    target: str = 'initial run'
    target_ref: object = field(default=None, compare=False, repr=False)


def conflict_score(sequence, profile):
    """Count ordered handler pairs (i < j) that share a variable with at least one write."""
    accesses = [profile.get(_strip(handler) if isinstance(handler, HandlerRef) else handler,
                            (frozenset(), frozenset()))
                for handler in sequence]
    score = 0
    for (reads_i, writes_i), (reads_j, writes_j) in itertools.combinations(accesses, 2):
        if writes_i & reads_j or writes_i & writes_j or reads_i & writes_j:
            score += 1
    return score


def _compatible(types, prefixes):
    if not prefixes:
        return True
    for prefix in prefixes:
        shared = min(len(types), len(prefix))
        if tuple(types[:shared]) == tuple(prefix[:shared]):
            return True
    return False


class ExecutionTree:
    """Symbolic execution tree plus the frontier and read/write profile built from recorded runs."""

    def __init__(self):
        self.root = None
        self.profile = {}
        self.runs_recorded = 0
        self._frontier = []
        self._seq = itertools.count()
        self._in_flight = set()
        self._initial_issued = False
        self._lock = threading.RLock()

    # recording

    def _new_target(self, kind, node, edge, depth):
        self._frontier.append(_Target(kind, node, edge, depth, next(self._seq)))

    def _slot(self, parent, edge):
        return self.root if parent is None else parent.slot(edge)

    def _attach(self, parent, edge, child):
        if parent is None:
            self.root = child
        else:
            parent.attach(edge, child)

    def _replaceable(self, current):
        if current is None or isinstance(current, SideStatus):
            if current in (SideStatus.INFEASIBLE, SideStatus.ABANDONED):
                logger.warning(f'A run reached a side previously marked {current.value}')
            return True
        return isinstance(current, Leaf) and current.partial

    def record_run(self, outcome, suggestion=None):
        """
        Merge a run into the tree.

        Returns the number of frontier targets the run added.
        """
        with self._lock:
            before = len(self._frontier)
            self._merge(outcome)
            self.runs_recorded += 1
            for position, (reads, writes) in outcome.rw_profile.items():
                handler = _strip(outcome.fired_handlers[position])
                known_reads, known_writes = self.profile.setdefault(handler, (set(), set()))
                known_reads.update(reads)
                known_writes.update(writes)
            if suggestion is not None:
                self._settle(suggestion)
            return len(self._frontier) - before

    def _merge(self, outcome):
        parent, edge = None, None
        fired = 0
        witness = tuple(outcome.realized_inputs)
        for event in outcome.events:
            if isinstance(event, BranchRecorded):
                current = self._slot(parent, edge)
                if self._replaceable(current):
                    current = BranchNode(
                        event.cond, event.span, fired, witness, event.inputs_consumed, parent, edge)
                    self._attach(parent, edge, current)
                    if free_inputs((event.cond,)):
                        self._new_target('branch', current, not event.taken, fired)
                elif not isinstance(current, BranchNode):
                    raise TreeConflict(f'branch {render_symbolic(event.cond)} at {event.span} '
                                       f'conflicts with the recorded tree')
                elif current.cond != event.cond:
                    # concretised operands make the recorded condition input-dependent
                    logger.debug(f'Condition at {event.span} differs from the recorded one')
                parent, edge = current, event.taken
            elif isinstance(event, (HandlerFired, NoMoreHandlers)):
                current = self._slot(parent, edge)
                if self._replaceable(current):
                    current = EventChoiceNode(fired, witness, event.inputs_consumed, parent, edge)
                    self._attach(parent, edge, current)
                elif not isinstance(current, EventChoiceNode):
                    raise TreeConflict(f'handler boundary after {fired} event(s) conflicts with the recorded tree')
                chosen = _strip(event.handler) if isinstance(event, HandlerFired) else STOP
                for option in [_strip(h) for h in event.available] + [STOP]:
                    if option not in current.available:
                        current.available.append(option)
                        if option != chosen and option not in current.children:
                            depth = fired if option == STOP else fired + 1
                            self._new_target('event', current, option, depth)
                parent, edge = current, chosen
                if chosen != STOP:
                    fired += 1

        if outcome.termination is TerminationKind.SCHEDULE_MISMATCH:
            return
        current = self._slot(parent, edge)
        leaf = Leaf(
            outcome.termination,
            label=outcome.error.label if outcome.error else '',
            partial=outcome.termination is TerminationKind.STOPPED_AT_SEND,
            parent=parent,
            edge=edge,
        )
        if self._replaceable(current):
            self._attach(parent, edge, leaf)
        elif isinstance(current, Leaf):
            if current.termination is not outcome.termination and not leaf.partial:
                logger.warning('Two runs ended differently on the same recorded path')
        elif not leaf.partial:
            logger.warning('A run ended where another run on the same recorded path continued')

    def _settle(self, suggestion):
        target = suggestion.target_ref
        self._in_flight.discard(target)
        if target is None or not target.open:
            return
        logger.warning(f'Suggested run diverged before reaching its target: {target.describe()}')
        target.node.attach(target.edge, SideStatus.ABANDONED)

    # selection

    def _path_to(self, node):
        """Constraints and handlers on the way from the root to ``node`` (exclusive)."""
        constraints, handlers = [], []
        child = node
        while child.parent is not None:
            parent = child.parent
            if isinstance(parent, BranchNode):
                if free_inputs((parent.cond,)):
                    constraints.append(parent.cond if child.edge else negate(parent.cond))
            elif child.edge != STOP:
                handlers.append(child.edge)
            child = parent
        constraints.reverse()
        handlers.reverse()
        return constraints, handlers

    def _handler_types(self, target):
        _, handlers = self._path_to(target.node)
        if target.kind == 'event' and target.edge != STOP:
            handlers.append(target.edge)
        return handlers

    def _priority(self, target, strategy):
        if strategy is StrategyKind.READ_WRITE_CONFLICT:
            if target.kind == 'branch':
                return (0, target.depth, 0, 0, target.seq)
            sequence = self._handler_types(target)
            ordinal = target.edge.registration_ordinal if target.edge != STOP else -1
            return (1, -conflict_score(sequence, self.profile), target.depth, ordinal, target.seq)
        return (target.depth, 0 if target.kind == 'branch' else 1, target.seq)

    def _eligible(self, target, max_events, prefixes):
        if target.depth > max_events or target in self._in_flight or not target.open:
            return False
        types = [handler.handler_type for handler in self._handler_types(target)]
        return _compatible(types, prefixes)

    def next_suggestion(self, strategy=StrategyKind.BRUTE_FORCE, solver_config=None, max_events=6, prefixes=()):
        """Return the next PathSuggestion, or None when the frontier is exhausted."""
        strategy = StrategyKind(strategy)
        prefixes = [tuple(prefix) for prefix in prefixes]
        with self._lock:
            if self.root is None:
                if self._initial_issued:
                    return None
                self._initial_issued = True
                return PathSuggestion(handlers=(), inputs=(), model={})

            while True:
                self._frontier = [target for target in self._frontier if target.open]
                candidates = [t for t in self._frontier if self._eligible(t, max_events, prefixes)]
                if not candidates:
                    return None
                target = min(candidates, key=lambda t: self._priority(t, strategy))
                suggestion = self._build(target, solver_config)
                if suggestion is not None:
                    self._in_flight.add(target)
                    logger.debug(f'Suggesting: {target.describe()}')
                    return suggestion

    def _build(self, target, solver_config):
        node = target.node
        constraints, handlers = self._path_to(node)
        witness = node.witness[:node.inputs_consumed]

        if target.kind == 'event':
            if target.edge != STOP:
                handlers.append(target.edge)
            model = {InputId(ordinal): value for ordinal, value in enumerate(witness)}
            return PathSuggestion(tuple(handlers), tuple(witness), model, target.describe(), target)

        wanted = node.cond if target.edge else negate(node.cond)
        try:
            result = check_sat(constraints + [wanted], solver_config)
        except SortError as exc:
            logger.warning(f'Ill-sorted branch formula treated as infeasible: {exc}')
            result = Unsat()
        if isinstance(result, Unsat):
            node.attach(target.edge, SideStatus.INFEASIBLE)
            return None
        if not isinstance(result, Sat):
            target.unknowns += 1
            if target.unknowns >= 2:
                logger.warning(f'Giving up on {target.describe()} after repeated solver budget exhaustion')
                node.attach(target.edge, SideStatus.ABANDONED)
            else:
                target.seq = next(self._seq)
            return None
        inputs = tuple(result.model.get(InputId(ordinal), value) for ordinal, value in enumerate(witness))
        return PathSuggestion(tuple(handlers), inputs, result.model, target.describe(), target)

    # inspection

    def leaves(self):
        found = []

        def visit(node):
            if isinstance(node, Leaf):
                found.append(node)
            elif isinstance(node, (BranchNode, EventChoiceNode)):
                for child in node.children.values():
                    visit(child)

        if self.root is not None:
            visit(self.root)
        return found

    def leaf_paths(self):
        """Rendered branch constraints from the root to every leaf."""
        paths = []
        for leaf in self.leaves():
            constraints, _ = self._path_to(leaf)
            paths.append(tuple(render_symbolic(c) for c in constraints))
        return paths

    def unexplored_count(self):
        return sum(1 for target in self._frontier if target.open)

    def dump(self):
        lines = []

        def visit(node, indent, label):
            pad = '  ' * indent
            if isinstance(node, BranchNode):
                lines.append(f'{pad}{label}branch {render_symbolic(node.cond)}')
                for edge in (True, False):
                    visit(node.children[edge], indent + 1, 'then: ' if edge else 'else: ')
            elif isinstance(node, EventChoiceNode):
                lines.append(f'{pad}{label}events after {node.depth}')
                for option in node.available:
                    child = node.children.get(option, SideStatus.UNEXPLORED)
                    visit(child, indent + 1, f'{option}: ')
            elif isinstance(node, Leaf):
                suffix = f' {node.label}' if node.label else ''
                lines.append(f'{pad}{label}leaf {node.termination.value}{suffix}')
            else:
                lines.append(f'{pad}{label}{node.value}')

        if self.root is not None:
            visit(self.root, 0, '')
        return '\n'.join(lines) + '\n'
