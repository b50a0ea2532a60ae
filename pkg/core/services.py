from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from core.constants import (
    CLASSIFICATION_HIGH,
    CLASSIFICATION_LOW,
    DEFAULT_INPUT_BOUND,
    DEFAULT_INTER_BUDGET,
    DEFAULT_INTRA_BUDGET,
    DEFAULT_JOBS,
    DEFAULT_MAX_EVENTS,
    DEFAULT_SEED,
    DEFAULT_STEP_LIMIT,
    TOP_LEVEL,
)
from core.lang import Role, validate
from core.machine import BranchRecorded, TerminationKind, inputs_by_handler, run
from core.selector import ExecutionTree, PathSuggestion, StrategyKind
from core.solver import Sat, SolverConfig, check_sat
from core.symbolic import (
    HandlerRef,
    InputId,
    SortError,
    branch_formula,
    join_for_send,
    render_formula,
    render_symbolic,
    rename_inputs,
    shift_inputs,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CampaignConfig:
    intra_budget: int = DEFAULT_INTRA_BUDGET
    inter_budget: int = DEFAULT_INTER_BUDGET
    seed: int = DEFAULT_SEED
    solver: SolverConfig = field(default_factory=SolverConfig)
    max_events: int = DEFAULT_MAX_EVENTS
    step_limit: int = DEFAULT_STEP_LIMIT
    strategy: StrategyKind = StrategyKind.BRUTE_FORCE
    input_bound: int = DEFAULT_INPUT_BOUND
    prefixes: tuple = ()
    jobs: int = DEFAULT_JOBS

    def __post_init__(self):
        if self.intra_budget < 1 or self.inter_budget < 1:
            raise ValueError('Budgets must be at least 1')
        if self.max_events < 0:
            raise ValueError('max_events must not be negative')
        if self.step_limit < 1:
            raise ValueError('step_limit must be at least 1')
        if self.jobs < 1:
            raise ValueError('jobs must be at least 1')
        if not isinstance(self.strategy, StrategyKind):
            object.__setattr__(self, 'strategy', StrategyKind(self.strategy))

    def with_changes(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return {
            'seed': self.seed,
            'intra_budget': self.intra_budget,
            'inter_budget': self.inter_budget,
            'bound': self.solver.bound,
            'max_assignments': self.solver.max_assignments,
            'max_events': self.max_events,
            'step_limit': self.step_limit,
            'strategy': self.strategy.value,
            'input_bound': self.input_bound,
            'prefixes': [list(prefix) for prefix in self.prefixes],
        }


@dataclass(frozen=True)
class ServerErrorRecord:
    record_id: int
    handler_type: str
    mock_input_ids: tuple
    pc: tuple
    error: object
    arity: int
    server_handlers: tuple = ()
    discovery_inputs: tuple = ()

    @property
    def formula(self):
        return branch_formula(self.pc)

    @property
    def top_level(self):
        return self.handler_type == TOP_LEVEL


@dataclass
class ServerErrorCatalog:
    server: str
    records: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def get(self, record_id):
        for record in self.records:
            if record.record_id == record_id:
                return record
        return None

    def by_type(self, handler_type):
        return [record for record in self.records if record.handler_type == handler_type]


@dataclass(frozen=True)
class ReproductionTrace:
    client_inputs: tuple
    handler_sequence: tuple
    send_occurrence: int
    concrete_payload: tuple
    server_record_id: int
    server_handlers: tuple = ()
    server_inputs: tuple = ()
    steps: tuple = field(default=(), compare=False)


@dataclass(frozen=True)
class High:
    reproduction: ReproductionTrace | None

    label = CLASSIFICATION_HIGH


@dataclass(frozen=True)
class Low:
    label = CLASSIFICATION_LOW


@dataclass(frozen=True)
class Confirmed:
    trace: ReproductionTrace
    replay: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class NotReproduced:
    reason: str
    replay: object = field(default=None, compare=False, repr=False)


@dataclass
class Exploration:
    tree: ExecutionTree
    catalog: ServerErrorCatalog
    runs: int


@dataclass
class CampaignResult:
    catalog: ServerErrorCatalog
    classifications: dict
    config: CampaignConfig | None = None
    client_name: str | None = None
    server_name: str | None = None
    intra_runs: int = 0
    inter_runs: int = 0
    runs_to_reproduce: dict = field(default_factory=dict)
    unclassified_at_budget: list = field(default_factory=list)

    def by_label(self):
        """Label -> 'high' when any record with that label is High, else 'low'."""
        labels = {}
        for record in self.catalog:
            classification = self.classifications[record.record_id]
            if isinstance(classification, High):
                labels[record.error.label] = CLASSIFICATION_HIGH
            else:
                labels.setdefault(record.error.label, CLASSIFICATION_LOW)
        return labels


def _run_seed(seed, phase, index):
    return seed * 1_000_003 + phase * 100_003 + index


def _require_valid(program, role=None):
    if role is not None and program.role is not role:
        program = replace(program, role=role)
    violations = validate(program)
    if violations:
        details = '; '.join(str(violation) for violation in violations)
        raise ValueError(f'{program.name} is not a valid {program.role.value} program: {details}')
    return program


def _next_batch(tree, cfg, limit):
    batch = []
    while len(batch) < limit:
        suggestion = tree.next_suggestion(cfg.strategy, cfg.solver, cfg.max_events, cfg.prefixes)
        if suggestion is None:
            break
        batch.append(suggestion)
    return batch


def _execute(program, batch, seeds, cfg, policy=None):
    def one(item):
        suggestion, seed = item
        return run(
            program,
            suggestion.inputs,
            suggestion.handlers,
            seed=seed,
            send_policy=policy,
            step_limit=cfg.step_limit,
            input_bound=cfg.input_bound,
        )

    items = list(zip(batch, seeds))
    if len(items) == 1:
        return [one(items[0])]
    with ThreadPoolExecutor(max_workers=len(items)) as pool:
        return list(pool.map(one, items))


def _strip(handler):
    return HandlerRef(handler.handler_type, handler.registration_ordinal, arity=handler.arity)


class IntraProcessService:
    """Exploration of a single program with every handler parameter mocked."""

    @staticmethod
    def failure_key(outcome):
        """
        Deduplication key of a failing run: the error identity, the failing
        handler type and the conditions recorded inside the failing handler,
        with that handler's inputs renamed positionally.
        """
        position = len(outcome.fired_handlers) - 1
        mock_ids = outcome.handler_input_ids.get(position, ())
        constraints = [
            event.constraint for event in outcome.events
            if isinstance(event, BranchRecorded) and event.handler_position == position
        ]
        if mock_ids:
            first = mock_ids[0].ordinal
            mapping = {
                InputId(ordinal): InputId(-1 - (ordinal - first))
                for ordinal in range(first, len(outcome.realized_inputs))
            }
            constraints = [rename_inputs(constraint, mapping) for constraint in constraints]
        return (
            outcome.error.identity,
            outcome.failed_handler,
            tuple(render_symbolic(constraint) for constraint in constraints),
        )

    @staticmethod
    def explore(program, cfg):
        """Explore ``program`` for up to ``cfg.intra_budget`` runs and catalog every distinct failure."""
        tree = ExecutionTree()
        catalog = ServerErrorCatalog(program.name)
        seen = set()
        runs = 0
        if cfg.jobs > 1:
            logger.warning(f'Running {cfg.jobs} jobs: run ordering may differ between invocations')
        logger.info(f'Exploring {program.name} (budget={cfg.intra_budget}, strategy={cfg.strategy.value})')

        while runs < cfg.intra_budget:
            batch = _next_batch(tree, cfg, min(cfg.jobs, cfg.intra_budget - runs))
            if not batch:
                logger.info(f'Exploration of {program.name} exhausted after {runs} run(s)')
                break
            seeds = [_run_seed(cfg.seed, 0, runs + offset) for offset in range(len(batch))]
            for suggestion, outcome in zip(batch, _execute(program, batch, seeds, cfg)):
                runs += 1
                tree.record_run(outcome, suggestion)
                logger.debug(f'Run {runs}: {suggestion.target} -> {outcome.termination.value}')
                if not outcome.failed:
                    continue
                key = IntraProcessService.failure_key(outcome)
                if key in seen:
                    continue
                seen.add(key)
                position = len(outcome.fired_handlers) - 1
                mock_ids = tuple(outcome.handler_input_ids.get(position, ()))
                record = ServerErrorRecord(
                    record_id=len(catalog.records),
                    handler_type=outcome.failed_handler,
                    mock_input_ids=mock_ids,
                    pc=outcome.pc,
                    error=outcome.error,
                    arity=len(mock_ids),
                    server_handlers=tuple(_strip(h) for h in outcome.fired_handlers),
                    discovery_inputs=tuple(outcome.realized_inputs),
                )
                catalog.records.append(record)
                logger.info(
                    f'Recorded error #{record.record_id} in {record.handler_type}: {record.error.label}')
        return Exploration(tree, catalog, runs)

    @staticmethod
    def intra_phase(server, cfg):
        server = _require_valid(server, Role.SERVER)
        return IntraProcessService.explore(server, cfg.with_changes(prefixes=())).catalog


@dataclass(frozen=True)
class SendMatch:
    record: ServerErrorRecord
    model: dict = field(hash=False)
    formula: tuple = ()
    offset: int = 0

    @property
    def server_model(self):
        """Model values for the server-side inputs, keyed by their original ordinal."""
        return {
            input_id.ordinal - self.offset: value
            for input_id, value in self.model.items()
            if input_id.ordinal >= self.offset
        }


class CatalogSendPolicy:
    """Stops a client run at the first send that can reach an unclassified server error."""

    def __init__(self, catalog, classifications, solver_config):
        self.catalog = catalog
        self.classifications = classifications
        self.solver_config = solver_config
        self._results = {}
        self._failed = set()
        self._lock = threading.Lock()

    def candidates(self, handler_type, arity):
        return [
            record for record in self.catalog
            if record.handler_type == handler_type
            and record.arity == arity
            and record.record_id not in self.classifications
        ]

    def match(self, observation):
        client_formula = branch_formula(observation.pc_at_send)
        offset = observation.inputs_consumed
        for record in self.candidates(observation.handler_type, len(observation.payload)):
            bindings = [
                (InputId(mock_id.ordinal + offset), pair)
                for mock_id, pair in zip(record.mock_input_ids, observation.payload)
            ]
            try:
                joined = join_for_send(client_formula, bindings, shift_inputs(record.formula, offset))
            except SortError as exc:
                logger.debug(f'Record #{record.record_id} skipped, payload cannot bind: {exc}')
                continue
            key = tuple(render_formula(joined))
            with self._lock:
                if (record.record_id, key) in self._failed:
                    continue
                result = self._results.get(key)
            if result is None:
                try:
                    result = check_sat(joined, self.solver_config)
                except SortError as exc:
                    logger.debug(f'Record #{record.record_id} skipped, payload sort differs from the server use: {exc}')
                    continue
                with self._lock:
                    self._results[key] = result
            if isinstance(result, Sat):
                return SendMatch(record, result.model, joined, offset)
        return None

    def inspect(self, observation):
        found = self.match(observation)
        return (found.record.record_id,) if found else None

    def mark_failed(self, found):
        with self._lock:
            self._failed.add((found.record.record_id, tuple(render_formula(found.formula))))


class InterProcessService:
    """Client exploration against a server error catalog."""

    @staticmethod
    def replay_and_confirm(client, server, suggestion, target, send_occurrence, cfg, server_model=None):
        """
        Re-run the client along ``suggestion``, then feed the targeted send's
        payload to the server handler that failed during discovery.
        """
        replay = run(
            client,
            suggestion.inputs,
            suggestion.handlers,
            seed=cfg.seed,
            step_limit=cfg.step_limit,
            input_bound=cfg.input_bound,
        )
        if send_occurrence >= len(replay.sends):
            return NotReproduced('targeted send was not reached', replay)
        observation = replay.sends[send_occurrence]
        if observation.handler_type != target.handler_type or len(observation.payload) != target.arity:
            return NotReproduced('targeted send has a different type or arity', replay)

        payload = tuple(pair.concrete for pair in observation.payload)
        server_inputs = list(target.discovery_inputs)
        for ordinal, value in (server_model or {}).items():
            if ordinal < len(server_inputs):
                server_inputs[ordinal] = value
        for mock_id, value in zip(target.mock_input_ids, payload):
            server_inputs[mock_id.ordinal] = value

        outcome = run(
            server,
            server_inputs,
            target.server_handlers,
            seed=cfg.seed,
            step_limit=cfg.step_limit,
            input_bound=cfg.input_bound,
        )
        if not outcome.failed or outcome.error != target.error:
            return NotReproduced('server run did not raise the recorded error', replay)

        top_inputs, per_handler = inputs_by_handler(replay)
        steps = []
        if top_inputs:
            steps.append((TOP_LEVEL, tuple(top_inputs)))
        steps.extend((handler.handler_type, tuple(values)) for handler, values in per_handler)
        trace = ReproductionTrace(
            client_inputs=tuple(replay.realized_inputs[:observation.inputs_consumed]),
            handler_sequence=tuple(_strip(h) for h in replay.fired_handlers),
            send_occurrence=send_occurrence,
            concrete_payload=payload,
            server_record_id=target.record_id,
            server_handlers=tuple(target.server_handlers),
            server_inputs=tuple(server_inputs),
            steps=tuple(steps),
        )
        return Confirmed(trace, replay)

    @staticmethod
    def inter_phase(client, server, catalog, cfg):
        client = _require_valid(client, Role.CLIENT)
        server = _require_valid(server, Role.SERVER)
        confirmations = {}
        settled = {record.record_id: High(None) for record in catalog if record.top_level}
        runs_to_reproduce = {}
        policy = CatalogSendPolicy(catalog, settled, cfg.solver)
        tree = ExecutionTree()
        runs = 0

        def pending():
            return any(record.record_id not in settled for record in catalog)

        logger.info(
            f'Inter-process phase: {client.name} against {len(catalog)} record(s) '
            f'(budget={cfg.inter_budget})'
        )
        while runs < cfg.inter_budget and pending():
            batch = _next_batch(tree, cfg, min(cfg.jobs, cfg.inter_budget - runs))
            if not batch:
                logger.info(f'Client exploration exhausted after {runs} run(s)')
                break
            seeds = [_run_seed(cfg.seed, 1, runs + offset) for offset in range(len(batch))]
            outcomes = _execute(client, batch, seeds, cfg, policy)
            for position, (suggestion, outcome) in enumerate(zip(batch, outcomes)):
                runs += 1
                tree.record_run(outcome, suggestion)
                if outcome.termination is not TerminationKind.STOPPED_AT_SEND:
                    continue
                found = policy.match(outcome.stopped_send)
                if found is None:
                    continue
                # the rest of the batch has already run and is still owed to the budget
                owed = len(batch) - position - 1
                if runs + 2 + owed > cfg.inter_budget:
                    logger.info(f'Not enough budget left to confirm a send for record #{found.record.record_id}')
                    continue
                observation = outcome.stopped_send
                client_inputs = tuple(
                    found.model.get(InputId(ordinal), value)
                    for ordinal, value in enumerate(outcome.realized_inputs[:observation.inputs_consumed])
                )
                replay_suggestion = PathSuggestion(
                    handlers=tuple(_strip(h) for h in outcome.fired_handlers),
                    inputs=client_inputs,
                    model=found.model,
                    target=f'confirm record #{found.record.record_id}',
                )
                result = InterProcessService.replay_and_confirm(
                    client, server, replay_suggestion, found.record,
                    observation.occurrence_index, cfg, found.server_model,
                )
                runs += 2
                if result.replay is not None:
                    tree.record_run(result.replay)
                if isinstance(result, Confirmed):
                    record_id = found.record.record_id
                    confirmations[record_id] = result.trace
                    settled[record_id] = High(result.trace)
                    runs_to_reproduce[record_id] = runs
                    logger.info(f'Record #{record_id} reproduced from the client after {runs} run(s)')
                else:
                    policy.mark_failed(found)
                    logger.warning(f'Record #{found.record.record_id} not confirmed: {result.reason}')

        classifications = InterProcessService.classify(catalog, confirmations)
        return CampaignResult(
            catalog=catalog,
            classifications=classifications,
            config=cfg,
            client_name=client.name,
            server_name=server.name,
            inter_runs=runs,
            runs_to_reproduce=runs_to_reproduce,
            unclassified_at_budget=[
                record_id for record_id, value in classifications.items() if isinstance(value, Low)
            ],
        )

    @staticmethod
    def classify(catalog, confirmations, budget_state=None):
        """High for confirmed and top-level records, Low for everything else."""
        classifications = {}
        for record in catalog:
            if record.top_level:
                classifications[record.record_id] = High(None)
            elif record.record_id in confirmations:
                classifications[record.record_id] = High(confirmations[record.record_id])
            else:
                classifications[record.record_id] = Low()
        return classifications


class CampaignService:
    @staticmethod
    def run_campaign(client, server, cfg, catalog=None):
        """Both phases; an existing catalog skips the intra-process phase."""
        intra_runs = 0
        if catalog is None:
            server = _require_valid(server, Role.SERVER)
            exploration = IntraProcessService.explore(server, cfg.with_changes(prefixes=()))
            catalog, intra_runs = exploration.catalog, exploration.runs
        result = InterProcessService.inter_phase(client, server, catalog, cfg)
        result.intra_runs = intra_runs
        return result

    @staticmethod
    def replay_trace(client, server, trace, step_limit=DEFAULT_STEP_LIMIT):
        """
        Re-execute a persisted reproduction trace.

        Returns the server RunOutcome, or None when the client never reaches the send.
        """
        replay = run(client, trace.client_inputs, trace.handler_sequence, step_limit=step_limit)
        if trace.send_occurrence >= len(replay.sends):
            return None
        payload = tuple(pair.concrete for pair in replay.sends[trace.send_occurrence].payload)
        if payload != tuple(trace.concrete_payload):
            return None
        return run(server, trace.server_inputs, trace.server_handlers, step_limit=step_limit)
