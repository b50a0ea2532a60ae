"""End-to-end properties over the bundled programs."""

import random

from django.test import SimpleTestCase

from core.constants import CLASSIFICATION_HIGH
from core.corpus import CORPUS, PROGRAMS_DIR, program_paths, run_entry
from core.lang import enumerate_branch_arms, inject_faults, read_program
from core.machine import path_key, render_trace, run
from core.services import CampaignConfig, CampaignService
from core.solver import evaluate
from core.symbolic import HandlerRef, InputId, branch_formula


def random_handlers(program, rng, seed):
    types = sorted({handler.handler_type for handler in run(program, seed=seed).registrations})
    if not types:
        return ()
    return tuple(HandlerRef(rng.choice(types)) for _ in range(rng.randint(0, 4)))


class ConcolicConsistencyTest(SimpleTestCase):
    def test_pc_holds_under_realized_inputs(self):
        rng = random.Random(2024)
        programs = [read_program(path) for path in program_paths()]
        for index in range(200):
            program = rng.choice(programs)
            seed = rng.randrange(10_000)
            outcome = run(program, (), random_handlers(program, rng, seed), seed=seed, input_bound=16)
            model = {InputId(ordinal): value for ordinal, value in enumerate(outcome.realized_inputs)}
            with self.subTest(program=program.name, seed=seed):
                for conjunct in branch_formula(outcome.pc):
                    self.assertIs(evaluate(conjunct, model), True)


class ReplayDeterminismTest(SimpleTestCase):
    def test_same_seed_same_trace(self):
        rng = random.Random(7)
        for path in program_paths():
            program = read_program(path)
            for seed in range(10):
                handlers = random_handlers(program, rng, seed)
                first = run(program, (), handlers, seed=seed)
                second = run(program, (), handlers, seed=seed)
                replayed = run(program, first.realized_inputs, handlers, seed=seed + 1)
                with self.subTest(program=program.name, seed=seed):
                    self.assertEqual(render_trace(first), render_trace(second))
                    self.assertEqual(path_key(first), path_key(replayed))


class CorpusTest(SimpleTestCase):
    def test_every_entry_matches(self):
        cfg = CampaignConfig(intra_budget=50, inter_budget=200)
        elapsed = 0.0
        for entry in CORPUS:
            with self.subTest(entry=entry.name):
                outcome = run_entry(entry, cfg)
                elapsed += outcome.elapsed
                self.assertEqual(outcome.observed, entry.expected)
        self.assertLess(elapsed, 60.0)


class InjectedFaultTest(SimpleTestCase):
    """Faults in a region the client cannot reach stay low; reachable ones are found."""

    pairs = (
        ('subsumed-a-client.sfl', 'subsumed-a-server.sfl'),
        ('subsumed-b-client.sfl', 'subsumed-b-server.sfl'),
    )
    seeds = range(10)

    def test_injected_faults(self):
        cfg = CampaignConfig(intra_budget=50, inter_budget=200)
        injections = 0
        live_misses = []
        for client_name, server_name in self.pairs:
            client = read_program(PROGRAMS_DIR / client_name)
            server = read_program(PROGRAMS_DIR / server_name)
            dead_region = enumerate_branch_arms(server)[1][0]
            for seed in self.seeds:
                injected, faults = inject_faults(server, seed, '1/2')
                injections += 1
                observed = CampaignService.run_campaign(client, injected, cfg).by_label()
                for fault in faults:
                    high = observed.get(fault.label) == CLASSIFICATION_HIGH
                    if dead_region.contains(fault.site):
                        with self.subTest(server=server_name, seed=seed, fault=fault.fault_id):
                            self.assertFalse(high)
                        continue
                    # a fault nested inside another fault's arm can never run
                    shadowed = any(
                        other is not fault and other.site.contains(fault.site) and other.site != fault.site
                        for other in faults
                    )
                    if not shadowed and not high:
                        live_misses.append((client, injected, seed, fault))
        self.assertEqual(injections, 20)
        self.assertLessEqual(len(live_misses), 2)

        doubled = cfg.with_changes(inter_budget=cfg.inter_budget * 2)
        for client, injected, seed, fault in live_misses:
            with self.subTest(server=injected.name, seed=seed, fault=fault.fault_id):
                observed = CampaignService.run_campaign(client, injected, doubled).by_label()
                self.assertEqual(observed.get(fault.label), CLASSIFICATION_HIGH)
