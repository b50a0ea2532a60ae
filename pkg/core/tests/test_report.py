from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from core.constants import CLASSIFICATION_HIGH, CLASSIFICATION_LOW, TOP_LEVEL
from core.corpus import PROGRAMS_DIR
from core.lang import Role, inject_faults, parse_program, read_program
from core.report import (
    dump_catalog,
    dump_fault_manifest,
    load_catalog,
    load_fault_manifest,
    parse_handler_ref,
    parse_report_json,
    render_json,
    render_text,
    trace_from_data,
)
from core.services import CampaignConfig, CampaignResult, CampaignService, High, IntraProcessService
from core.symbolic import HandlerRef, render_constraint
from core.tests import GOLDEN_DIR


def load(name):
    return read_program(PROGRAMS_DIR / name)


class EmptyReportTest(SimpleTestCase):
    def test_empty_json(self):
        self.assertEqual(render_json(None), '{"schema":"stackful-mini/1","records":[]}')

    def test_empty_text(self):
        self.assertEqual(render_text(None), '')

    def test_empty_json_parses(self):
        self.assertEqual(parse_report_json(render_json(None))['records'], [])


class GoldenReportTest(SimpleTestCase):
    def test_message_campaign_json(self):
        # zero-width input draws keep the document independent of the random stream
        cfg = CampaignConfig(seed=0, input_bound=0)
        result = CampaignService.run_campaign(load('message-client.sfl'), load('message-server.sfl'), cfg)
        golden = (GOLDEN_DIR / 'message-campaign.json').read_text(encoding='utf-8')
        self.assertEqual(render_json(result), golden)
        self.assertEqual(result.inter_runs, 5)


class HandlerRefTextTest(SimpleTestCase):
    def test_parse(self):
        self.assertEqual(parse_handler_ref('click#2'), HandlerRef('click', 2))
        self.assertEqual(parse_handler_ref('click'), HandlerRef('click'))
        self.assertEqual(parse_handler_ref('a#b'), HandlerRef('a#b'))


class CatalogDocumentTest(SimpleTestCase):
    def setUp(self):
        self.catalog = IntraProcessService.intra_phase(load('calculator-server.sfl'), CampaignConfig())

    def test_round_trip(self):
        loaded = load_catalog(dump_catalog(self.catalog))
        self.assertEqual(loaded.server, 'calculator-server.sfl')
        self.assertEqual(len(loaded), len(self.catalog))
        for original, restored in zip(self.catalog, loaded):
            self.assertEqual(restored.record_id, original.record_id)
            self.assertEqual(restored.handler_type, original.handler_type)
            self.assertEqual(restored.mock_input_ids, original.mock_input_ids)
            self.assertEqual(restored.error, original.error)
            self.assertEqual(restored.server_handlers, original.server_handlers)
            self.assertEqual(restored.discovery_inputs, original.discovery_inputs)
            self.assertEqual(
                [render_constraint(c) for c in restored.pc],
                [render_constraint(c) for c in original.pc],
            )

    def test_rejects_wrong_schema(self):
        with self.assertRaises(ValidationError):
            load_catalog('{"schema": "other", "version": 1, "server": "s", "records": []}')

    def test_rejects_malformed_json(self):
        with self.assertRaises(ValidationError):
            load_catalog('{"schema": ')

    def test_rejects_malformed_constraint(self):
        text = dump_catalog(self.catalog).replace('(= in1 4)', '(= in1', 1)
        with self.assertRaises(ValidationError):
            load_catalog(text)

    def test_loaded_catalog_drives_campaign(self):
        loaded = load_catalog(dump_catalog(self.catalog))
        result = CampaignService.run_campaign(
            load('calculator-client.sfl'), load('calculator-server.sfl'),
            CampaignConfig(inter_budget=200), catalog=loaded)
        self.assertEqual(result.by_label()['Dividing by zero'], CLASSIFICATION_HIGH)


class CampaignReportTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.client_program = load('calculator-client.sfl')
        cls.server_program = load('calculator-server.sfl')
        cls.result = CampaignService.run_campaign(
            cls.client_program, cls.server_program, CampaignConfig(intra_budget=50, inter_budget=200))

    def record_id(self, label):
        return next(r.record_id for r in self.result.catalog if r.error.label == label)

    def test_json_document(self):
        data = parse_report_json(render_json(self.result))
        self.assertEqual(data['program'], {'client': 'calculator-client.sfl', 'server': 'calculator-server.sfl'})
        self.assertEqual(data['config']['inter_budget'], 200)
        by_id = {record['id']: record for record in data['records']}
        high = by_id[self.record_id('Dividing by zero')]
        low = by_id[self.record_id('Unknown operator')]
        self.assertEqual(high['classification'], CLASSIFICATION_HIGH)
        self.assertEqual(low['classification'], CLASSIFICATION_LOW)
        self.assertIsNone(low['trace'])
        self.assertIsNone(low['runs_to_reproduce'])
        self.assertEqual(high['trace']['payload'][1], 4)
        self.assertEqual(high['trace']['payload'][2], 0)

    def test_trace_from_json_replays(self):
        data = parse_report_json(render_json(self.result, pretty=True))
        record_id = self.record_id('Dividing by zero')
        raw = next(record for record in data['records'] if record['id'] == record_id)
        trace = trace_from_data(raw['trace'], record_id)
        outcome = CampaignService.replay_trace(self.client_program, self.server_program, trace)
        self.assertTrue(outcome.failed)
        self.assertEqual(outcome.error.label, 'Dividing by zero')

    def test_text_blocks(self):
        text = render_text(self.result)
        self.assertTrue(text.endswith('\n'))
        blocks = text.rstrip('\n').split('\n\n')
        self.assertEqual(len(blocks), 2)
        high = next(block for block in blocks if 'Dividing by zero' in block).splitlines()
        self.assertTrue(high[0].startswith('(Server): Tester detected error in file "calculator-server.sfl"'))
        self.assertEqual(high[1], 'ERROR: Dividing by zero')
        self.assertEqual(high[2], 'classification: high-priority')
        self.assertEqual(high[3], 'Error encountered by triggering the following user events:')
        steps = high[4:-1]
        self.assertEqual(len(steps), 4)
        self.assertTrue(steps[1].startswith('Triggered handler operator with input(s) 4'))
        self.assertTrue(steps[-1].startswith('Triggered handler compute'))
        self.assertTrue(high[-1].startswith('Sent message compute with payload '))
        self.assertTrue(high[-1].endswith(', 4, 0'))

        low = next(block for block in blocks if 'Unknown operator' in block).splitlines()
        self.assertEqual(low[2], 'classification: low-priority')
        self.assertEqual(low[3], 'Server path constraint:')
        self.assertIn('  (not (= in1 1))', low)


class TopLevelTextTest(SimpleTestCase):
    def test_top_level_block(self):
        server = parse_program('(error "ERROR: broken")', Role.SERVER, 'broken.sfl')
        catalog = IntraProcessService.intra_phase(server, CampaignConfig())
        result = CampaignResult(catalog=catalog, classifications={0: High(None)})
        lines = render_text(result).splitlines()
        self.assertEqual(lines[0], '(Server): Tester detected error in file "broken.sfl", at position (1:1)')
        self.assertEqual(lines[1], 'ERROR: broken')
        self.assertEqual(
            lines[3], f'Error raised by the server program itself ({TOP_LEVEL}); no user events needed.')


class FaultManifestTest(SimpleTestCase):
    def test_round_trip(self):
        program = load('calculator-server.sfl')
        _, faults = inject_faults(program, 3, '1/2')
        data = load_fault_manifest(dump_fault_manifest(program.name, 3, '1/2', faults))
        self.assertEqual(data['probability'], '1/2')
        self.assertEqual([f['fault_id'] for f in data['faults']], [f.fault_id for f in faults])
        self.assertEqual([f['label'] for f in data['faults']], [f.label for f in faults])
