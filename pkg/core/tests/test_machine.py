from django.test import SimpleTestCase

from core.corpus import PROGRAMS_DIR
from core.lang import Binary, BinOp, Input, IntLit, parse_program, read_program
from core.machine import (
    ErrorKind,
    HandlerFired,
    TerminationKind,
    atomic_eval,
    count_feasible_paths,
    inject,
    inputs_by_handler,
    render_trace,
    run,
)
from core.symbolic import HandlerRef, InputId, SymInput, SymInt, ValuePair, render_constraint, render_symbolic


def rendered_pc(outcome):
    return [render_constraint(entry) for entry in outcome.pc]


class AtomicEvalTest(SimpleTestCase):
    def test_input_consumes_pending_value(self):
        state = inject(IntLit(0), inputs=[3])
        self.assertEqual(atomic_eval(Input(), state), ValuePair(3, SymInput(InputId(0))))
        self.assertEqual(state.realized_inputs, [3])

    def test_input_falls_back_to_seeded_draw(self):
        first = inject(IntLit(0), seed=7, input_bound=5)
        second = inject(IntLit(0), seed=7, input_bound=5)
        value = atomic_eval(Input(), first).concrete
        self.assertEqual(value, atomic_eval(Input(), second).concrete)
        self.assertLessEqual(abs(value), 5)

    def test_mod_is_concretised(self):
        state = inject(IntLit(0))
        result = atomic_eval(Binary(BinOp.MOD, IntLit(7), IntLit(2)), state)
        self.assertEqual(result, ValuePair(1, SymInt(1)))

    def test_floor_division(self):
        state = inject(IntLit(0))
        result = atomic_eval(Binary(BinOp.DIV, IntLit(-7), IntLit(2)), state)
        self.assertEqual(result.concrete, -4)


class RunTest(SimpleTestCase):
    def setUp(self):
        self.twice = read_program(PROGRAMS_DIR / 'twice.sfl')

    def test_constant_program_completes(self):
        outcome = run(parse_program('1', 'client', 't'))
        self.assertIs(outcome.termination, TerminationKind.COMPLETED)
        self.assertEqual(outcome.pc, ())

    def test_unregistered_handler_is_a_schedule_mismatch(self):
        outcome = run(parse_program('1', 'client', 't'), handlers=[HandlerRef('click')])
        self.assertIs(outcome.termination, TerminationKind.SCHEDULE_MISMATCH)

    def test_twice_first_run(self):
        outcome = run(self.twice, [3, 5])
        self.assertTrue(outcome.completed)
        self.assertEqual(rendered_pc(outcome), ['(not (= (* in1 2) in0))'])

    def test_twice_second_run(self):
        outcome = run(self.twice, [2, 1])
        self.assertTrue(outcome.completed)
        self.assertEqual(rendered_pc(outcome), ['(= (* in1 2) in0)', '(not (< (+ in1 10) in0))'])

    def test_twice_error(self):
        outcome = run(self.twice, [30, 15])
        self.assertTrue(outcome.failed)
        self.assertIs(outcome.error.kind, ErrorKind.EXPLICIT_ERROR)
        self.assertEqual(outcome.error.label, 'Reached the error')
        self.assertEqual(outcome.failed_handler, 'TopLevel')
        self.assertEqual(rendered_pc(outcome), ['(= (* in1 2) in0)', '(< (+ in1 10) in0)'])

    def test_division_by_zero(self):
        outcome = run(parse_program('(let x (input) (/ 10 x))', 'client', 't'), [0])
        self.assertIs(outcome.error.kind, ErrorKind.DIVISION_BY_ZERO)

    def test_runtime_errors(self):
        unbound = run(parse_program('y', 'client', 't'))
        self.assertIs(unbound.error.kind, ErrorKind.UNBOUND_VARIABLE)
        mismatch = run(parse_program('(+ 1 true)', 'client', 't'))
        self.assertIs(mismatch.error.kind, ErrorKind.TYPE_MISMATCH)
        arity = run(parse_program('(let f (lambda (a b) a) (f 1))', 'client', 't'))
        self.assertIs(arity.error.kind, ErrorKind.ARITY_MISMATCH)

    def test_step_limit(self):
        loop = parse_program('(let f (lambda (g) (g g)) (f f))', 'client', 't')
        outcome = run(loop, step_limit=100)
        self.assertIs(outcome.termination, TerminationKind.STEP_BUDGET_EXCEEDED)


class HandlerTest(SimpleTestCase):
    def setUp(self):
        self.counter = read_program(PROGRAMS_DIR / 'counter.sfl')
        self.message = read_program(PROGRAMS_DIR / 'message-client.sfl')

    def test_reads_shared_counter(self):
        outcome = run(self.counter, [0, 4], [HandlerRef('button1')])
        self.assertTrue(outcome.completed)
        self.assertEqual(outcome.rw_profile[0], (frozenset({'counter'}), frozenset()))
        self.assertEqual(len(outcome.sends), 1)

    def test_writes_shared_counter(self):
        outcome = run(self.counter, [0], [HandlerRef('button2')])
        self.assertIn('counter', outcome.rw_profile[0][1])

    def test_handler_parameters_are_fresh_inputs(self):
        outcome = run(self.message, [0, 20, 1], [HandlerRef('click', 0)])
        self.assertEqual(outcome.handler_input_ids[0], (InputId(0),))
        fired = [event for event in outcome.events if isinstance(event, HandlerFired)]
        self.assertEqual(len(fired), 1)
        self.assertEqual(fired[0].param_ids, (InputId(0),))

    def test_send_observation(self):
        outcome = run(self.message, [0, 20, 1], [HandlerRef('click')])
        observation = outcome.sends[0]
        self.assertEqual(observation.handler_type, 'msg')
        self.assertEqual([pair.concrete for pair in observation.payload], [21, 1])
        self.assertEqual([render_symbolic(pair.symbolic) for pair in observation.payload], ['(+ in1 1)', 'in2'])
        self.assertEqual(observation.inputs_consumed, 3)
        self.assertEqual(
            [render_constraint(entry) for entry in observation.pc_at_send],
            ['register click#0/1', '(< 10 in1)'],
        )

    def test_inputs_by_handler(self):
        outcome = run(self.message, [0, 20, 1, 4, 2, 2], [HandlerRef('click'), HandlerRef('click')])
        top, steps = inputs_by_handler(outcome)
        self.assertEqual(top, [])
        self.assertEqual([values for _, values in steps], [[0, 20, 1], [4, 2, 2]])


class TraceTest(SimpleTestCase):
    def test_trace_is_stable(self):
        program = read_program(PROGRAMS_DIR / 'calculator-client.sfl')
        handlers = [HandlerRef('digit'), HandlerRef('operator'), HandlerRef('digit'), HandlerRef('compute')]
        first = render_trace(run(program, handlers=handlers, seed=5))
        second = render_trace(run(program, handlers=handlers, seed=5))
        self.assertEqual(first, second)

    def test_trace_termination_lines(self):
        twice = read_program(PROGRAMS_DIR / 'twice.sfl')
        self.assertTrue(render_trace(run(twice, [3, 5])).endswith('completed\n'))
        failed = render_trace(run(twice, [30, 15]))
        self.assertIn('ERROR: Reached the error (ExplicitError)', failed)
        self.assertIn('pc (< (+ in1 10) in0)', failed)

    def test_replay_with_realized_inputs(self):
        program = read_program(PROGRAMS_DIR / 'counter.sfl')
        handlers = [HandlerRef('button2'), HandlerRef('button1'), HandlerRef('button2')]
        original = run(program, handlers=handlers, seed=42)
        replay = run(program, original.realized_inputs, handlers, seed=999)
        self.assertEqual(rendered_pc(replay), rendered_pc(original))


class FeasiblePathsTest(SimpleTestCase):
    def test_twice_has_three_paths(self):
        program = read_program(PROGRAMS_DIR / 'twice.sfl')
        self.assertEqual(count_feasible_paths(program, max_events=0, input_bound=24), 3)

    def test_single_branch(self):
        program = parse_program('(let x (input) (let c (= x 0) (if c 1 2)))', 'client', 't')
        self.assertEqual(count_feasible_paths(program, max_events=0, input_bound=2), 2)

    def test_counter_one_event(self):
        program = read_program(PROGRAMS_DIR / 'counter.sfl')
        self.assertEqual(count_feasible_paths(program, max_events=1, input_bound=2), 4)
