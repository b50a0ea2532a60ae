"""
Bug reports and persisted documents.

Text reports list one block per catalog record. JSON documents (campaign
reports, server error catalogs and fault manifests) are produced with DRF's
JSONRenderer, which writes compact UTF-8 JSON in insertion order, and read
back through JSONParser plus the validating serializers in core.serializers.
"""

import io
import logging

from rest_framework.exceptions import ParseError as JSONParseError
from rest_framework.exceptions import ValidationError
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer

from core.constants import (
    CATALOG_SCHEMA,
    CATALOG_VERSION,
    FAULT_MANIFEST_SCHEMA,
    REPORT_SCHEMA,
    TOP_LEVEL,
)
from core.lang import SourceSpan
from core.machine import ErrorKind, ExecutionError
from core.serializers import CatalogSerializer, FaultManifestSerializer, ReportSerializer
from core.services import High, ReproductionTrace, ServerErrorCatalog, ServerErrorRecord
from core.symbolic import HandlerRef, InputId, parse_constraint, render_concrete, render_constraint

logger = logging.getLogger(__name__)


# Helpers

def _json_value(value):
    if isinstance(value, (bool, int)):
        return value
    return render_concrete(value)


def _handler_text(handler):
    return str(handler)


def parse_handler_ref(text):
    handler_type, sep, ordinal = text.rpartition('#')
    if sep and ordinal.isdigit():
        return HandlerRef(handler_type, int(ordinal))
    return HandlerRef(text)


def _error_data(error, full=False):
    data = {
        'kind': error.kind.value,
        'label': error.label,
        'file': error.span.file,
        'line': error.span.start_line,
        'col': error.span.start_col,
    }
    if full:
        data['end_line'] = error.span.end_line
        data['end_col'] = error.span.end_col
    return data


def _error_from_data(data):
    span = SourceSpan(
        data['file'],
        data['line'],
        data['col'],
        data.get('end_line', data['line']),
        data.get('end_col', data['col']),
    )
    return ExecutionError(ErrorKind(data['kind']), span, data['label'])


def _render(data, pretty=False):
    renderer_context = {'indent': 2} if pretty else None
    text = JSONRenderer().render(data, renderer_context=renderer_context).decode('utf-8')
    return text + '\n' if pretty else text


def _parse(text, serializer_class):
    if isinstance(text, str):
        text = text.encode('utf-8')
    try:
        data = JSONParser().parse(io.BytesIO(text))
    except JSONParseError as exc:
        raise ValidationError(f'Invalid JSON document: {exc.detail}') from exc
    serializer = serializer_class(data=data)
    serializer.is_valid(raise_exception=True)
    return serializer.validated_data


# Catalog

def catalog_to_data(catalog):
    return {
        'schema': CATALOG_SCHEMA,
        'version': CATALOG_VERSION,
        'server': catalog.server,
        'records': [
            {
                'id': record.record_id,
                'handler_type': record.handler_type,
                'arity': record.arity,
                'mock_inputs': [input_id.ordinal for input_id in record.mock_input_ids],
                'pc': [render_constraint(entry) for entry in record.pc],
                'error': _error_data(record.error, full=True),
                'server_handlers': [_handler_text(h) for h in record.server_handlers],
                'discovery_inputs': [_json_value(v) for v in record.discovery_inputs],
            }
            for record in catalog
        ],
    }


def dump_catalog(catalog, pretty=True):
    return _render(catalog_to_data(catalog), pretty=pretty)


def load_catalog(text):
    """Parse and validate a catalog document. Raises ValidationError."""
    data = _parse(text, CatalogSerializer)
    records = [
        ServerErrorRecord(
            record_id=item['id'],
            handler_type=item['handler_type'],
            mock_input_ids=tuple(InputId(ordinal) for ordinal in item['mock_inputs']),
            pc=tuple(parse_constraint(entry) for entry in item['pc']),
            error=_error_from_data(item['error']),
            arity=item['arity'],
            server_handlers=tuple(parse_handler_ref(h) for h in item['server_handlers']),
            discovery_inputs=tuple(item['discovery_inputs']),
        )
        for item in sorted(data['records'], key=lambda item: item['id'])
    ]
    return ServerErrorCatalog(data['server'], records)


# Campaign report

def _trace_data(trace):
    return {
        'inputs': [_json_value(v) for v in trace.client_inputs],
        'handlers': [_handler_text(h) for h in trace.handler_sequence],
        'send_occurrence': trace.send_occurrence,
        'payload': [_json_value(v) for v in trace.concrete_payload],
        'server_handlers': [_handler_text(h) for h in trace.server_handlers],
        'server_inputs': [_json_value(v) for v in trace.server_inputs],
        'steps': [
            {'handler': handler_type, 'inputs': [_json_value(v) for v in values]}
            for handler_type, values in trace.steps
        ],
    }


def trace_from_data(data, record_id):
    return ReproductionTrace(
        client_inputs=tuple(data['inputs']),
        handler_sequence=tuple(parse_handler_ref(h) for h in data['handlers']),
        send_occurrence=data['send_occurrence'],
        concrete_payload=tuple(data['payload']),
        server_record_id=record_id,
        server_handlers=tuple(parse_handler_ref(h) for h in data['server_handlers']),
        server_inputs=tuple(data['server_inputs']),
        steps=tuple((step['handler'], tuple(step['inputs'])) for step in data.get('steps', [])),
    )


def report_to_data(result):
    data = {'schema': REPORT_SCHEMA}
    if result is None:
        data['records'] = []
        return data
    if result.client_name or result.server_name:
        data['program'] = {'client': result.client_name or '', 'server': result.server_name or ''}
    if result.config is not None:
        data['config'] = result.config.as_dict()
    records = []
    for record in sorted(result.catalog, key=lambda record: record.record_id):
        classification = result.classifications[record.record_id]
        trace = classification.reproduction if isinstance(classification, High) else None
        records.append({
            'id': record.record_id,
            'handler_type': record.handler_type,
            'error': _error_data(record.error),
            'classification': classification.label,
            'runs_to_reproduce': result.runs_to_reproduce.get(record.record_id),
            'trace': _trace_data(trace) if trace is not None else None,
            'server_pc': [render_constraint(entry) for entry in record.pc],
        })
    data['records'] = records
    return data


def render_json(result, pretty=False):
    return _render(report_to_data(result), pretty=pretty)


def parse_report_json(text):
    """Validated report document; raises ValidationError."""
    return _parse(text, ReportSerializer)


def _describe_values(values):
    if not values:
        return 'no input'
    return ', '.join(render_concrete(value) for value in values)


def render_text(result):
    if result is None:
        return ''
    blocks = []
    for record in sorted(result.catalog, key=lambda record: record.record_id):
        span = record.error.span
        label = record.error.label
        lines = [
            f'(Server): Tester detected error in file "{span.file}", '
            f'at position ({span.start_line}:{span.start_col})',
            label if label.startswith('ERROR:') else f'ERROR: {label}',
        ]
        classification = result.classifications[record.record_id]
        if isinstance(classification, High):
            lines.append('classification: high-priority')
            trace = classification.reproduction
            if trace is None:
                lines.append(f'Error raised by the server program itself ({TOP_LEVEL}); no user events needed.')
            else:
                lines.append('Error encountered by triggering the following user events:')
                for handler_type, values in trace.steps:
                    if handler_type == TOP_LEVEL:
                        lines.append(f'Started client with input(s) {_describe_values(values)}')
                    else:
                        lines.append(f'Triggered handler {handler_type} with input(s) {_describe_values(values)}')
                lines.append(
                    f'Sent message {record.handler_type} with payload {_describe_values(trace.concrete_payload)}')
        else:
            lines.append('classification: low-priority')
            lines.append('Server path constraint:')
            if record.pc:
                lines.extend(f'  {render_constraint(entry)}' for entry in record.pc)
            else:
                lines.append('  true')
        blocks.append('\n'.join(lines))
    return '\n\n'.join(blocks) + '\n' if blocks else ''


# Fault manifests

def fault_manifest_data(program_name, seed, probability, faults):
    return {
        'schema': FAULT_MANIFEST_SCHEMA,
        'program': program_name,
        'seed': seed,
        'probability': str(probability),
        'faults': [
            {
                'fault_id': fault.fault_id,
                'label': fault.label,
                'arm': fault.branch_arm.value,
                'file': fault.site.file,
                'line': fault.site.start_line,
                'col': fault.site.start_col,
                'end_line': fault.site.end_line,
                'end_col': fault.site.end_col,
            }
            for fault in faults
        ],
    }


def dump_fault_manifest(program_name, seed, probability, faults):
    return _render(fault_manifest_data(program_name, seed, probability, faults), pretty=True)


def load_fault_manifest(text):
    return _parse(text, FaultManifestSerializer)
