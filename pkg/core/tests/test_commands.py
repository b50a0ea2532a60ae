import io
import json
import tempfile
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from core.corpus import PROGRAMS_DIR
from core.lang import ErrorExpr, iter_nodes, read_program
from core.report import load_catalog, load_fault_manifest, parse_report_json


def program(name):
    return str(PROGRAMS_DIR / name)


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def call(self, *args, **kwargs):
        out, err = io.StringIO(), io.StringIO()
        call_command(*args, stdout=out, stderr=err, **kwargs)
        return out.getvalue()

    def assertExitCode(self, code, *args, **kwargs):
        with self.assertRaises(CommandError) as ctx:
            self.call(*args, **kwargs)
        self.assertEqual(ctx.exception.returncode, code)
        return ctx.exception


class RunCommandTest(CommandTestCase):
    def test_completed_run(self):
        out = self.call('run', program('twice.sfl'), inputs='3,5')
        self.assertIn('pc (not (= (* in1 2) in0))', out)
        self.assertTrue(out.endswith('completed\n'))

    def test_failing_run_exits_1(self):
        exc = self.assertExitCode(1, 'run', program('twice.sfl'), inputs='24,12')
        self.assertIn('Reached the error', str(exc))

    def test_trace_is_byte_stable(self):
        first = self.call('run', program('counter.sfl'), handlers='button2,button1', seed=7)
        second = self.call('run', program('counter.sfl'), handlers='button2,button1', seed=7)
        self.assertEqual(first, second)

    def test_missing_file_exits_2(self):
        self.assertExitCode(2, 'run', str(self.tmp / 'missing.sfl'))

    def test_parse_error_exits_2(self):
        broken = self.tmp / 'broken.sfl'
        broken.write_text('(let x', encoding='utf-8')
        self.assertExitCode(2, 'run', str(broken))

    def test_invalid_input_list_exits_2(self):
        self.assertExitCode(2, 'run', program('twice.sfl'), inputs='3,x')


class TestServerCommandTest(CommandTestCase):
    def test_writes_catalog(self):
        out_path = self.tmp / 'catalog.json'
        out = self.call('test_server', program('message-server.sfl'), out=str(out_path))
        self.assertIn('1 error recorded', out)
        self.assertIn('Invalid message', out)
        catalog = load_catalog(out_path.read_text(encoding='utf-8'))
        self.assertEqual(len(catalog), 1)

    def test_plural_message(self):
        out = self.call('test_server', program('calculator-server.sfl'), out=str(self.tmp / 'c.json'))
        self.assertIn('2 errors recorded', out)

    def test_bad_config_exits_2(self):
        conf = self.tmp / 'stackful.conf'
        conf.write_text('bound = zero\n', encoding='utf-8')
        self.assertExitCode(
            2, 'test_server', program('message-server.sfl'), out=str(self.tmp / 'c.json'), config=str(conf))


class ExportSmtCommandTest(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.catalog = self.tmp / 'catalog.json'
        self.call('test_server', program('message-server.sfl'), out=str(self.catalog))

    def test_export(self):
        out = self.call('export_smt', str(self.catalog), 0)
        self.assertEqual(out, (
            '(declare-const in0 Int)\n'
            '(declare-const in1 Int)\n'
            '(assert (= in1 1))\n'
            '(assert (< 15 in0))\n'
            '(check-sat)\n'
            '(get-model)\n'
        ))

    def test_record_with_empty_pc(self):
        server = self.tmp / 'broken-server.sfl'
        server.write_text('(error "Broken server")\n', encoding='utf-8')
        catalog = self.tmp / 'broken-catalog.json'
        self.call('test_server', str(server), out=str(catalog))
        self.assertEqual(self.call('export_smt', str(catalog), 0), '(check-sat)\n(get-model)\n')

    def test_unknown_record_exits_2(self):
        self.assertExitCode(2, 'export_smt', str(self.catalog), 9)


class TestFullCommandTest(CommandTestCase):
    def test_report(self):
        report = self.tmp / 'report.json'
        out = self.call(
            'test_full', program('message-client.sfl'), program('message-server.sfl'),
            intra_budget=50, inter_budget=50, report=str(report),
        )
        self.assertIn('classification: high-priority', out)
        self.assertIn('1 record(s): 1 high, 0 low', out)
        data = parse_report_json(report.read_text(encoding='utf-8'))
        self.assertEqual(data['records'][0]['classification'], 'high')

    def test_reuses_catalog(self):
        catalog = self.tmp / 'catalog.json'
        self.call('test_server', program('message-server.sfl'), out=str(catalog))
        out = self.call(
            'test_full', program('message-client.sfl'), program('message-server.sfl'),
            catalog=str(catalog), inter_budget=50,
        )
        self.assertIn('intra runs=0', out)

    def test_prefix_excluding_every_sequence(self):
        out = self.call(
            'test_full', program('message-client.sfl'), program('message-server.sfl'),
            inter_budget=50, prefix=['nothing'],
        )
        self.assertIn('classification: low-priority', out)

    def test_corrupt_catalog_exits_2(self):
        catalog = self.tmp / 'catalog.json'
        catalog.write_text(json.dumps({'schema': 'other'}), encoding='utf-8')
        self.assertExitCode(
            2, 'test_full', program('message-client.sfl'), program('message-server.sfl'),
            catalog=str(catalog),
        )


class InjectCommandTest(CommandTestCase):
    def test_inject_writes_program_and_manifest(self):
        out_path = self.tmp / 'injected-server.sfl'
        self.call('inject', program('calculator-server.sfl'), seed=1, prob='1', out=str(out_path))
        injected = read_program(out_path)
        labels = {node.label for node in iter_nodes(injected) if isinstance(node, ErrorExpr)}
        manifest = load_fault_manifest(
            (self.tmp / 'injected-server.sfl.faults.json').read_text(encoding='utf-8'))
        self.assertGreater(len(manifest['faults']), 0)
        self.assertTrue({fault['label'] for fault in manifest['faults']} <= labels)

    def test_zero_probability_copies_source(self):
        out_path = self.tmp / 'copy-server.sfl'
        self.call('inject', program('calculator-server.sfl'), prob='0', out=str(out_path))
        self.assertEqual(
            out_path.read_text(encoding='utf-8'),
            Path(program('calculator-server.sfl')).read_text(encoding='utf-8'),
        )

    def test_bad_probability_exits_2(self):
        self.assertExitCode(2, 'inject', program('calculator-server.sfl'), prob='2', out=str(self.tmp / 'x.sfl'))


class RunCorpusCommandTest(CommandTestCase):
    def test_single_entry(self):
        out = self.call('run_corpus', entry=['message'])
        self.assertIn('message: ok', out)
        self.assertIn('1 entry in', out)

    def test_unknown_entry_exits_2(self):
        self.assertExitCode(2, 'run_corpus', entry=['nope'])
