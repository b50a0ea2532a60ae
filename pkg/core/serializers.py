from rest_framework import serializers

from core.constants import (
    CATALOG_SCHEMA,
    CLASSIFICATION_HIGH,
    CLASSIFICATION_LOW,
    FAULT_MANIFEST_SCHEMA,
    REPORT_SCHEMA,
)
from core.lang import Arm, ParseError
from core.machine import ErrorKind
from core.symbolic import SortError, parse_constraint


def _check_constraints(values):
    for text in values:
        try:
            parse_constraint(text)
        except (ParseError, SortError, ValueError) as exc:
            raise serializers.ValidationError(f'Malformed constraint {text!r}: {exc}')
    return values


def _check_handler_refs(values):
    for text in values:
        handler_type, sep, ordinal = text.rpartition('#')
        if sep and not (handler_type and ordinal.isdigit()):
            raise serializers.ValidationError(f'Malformed handler reference {text!r}')
    return values


class ErrorSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=[kind.value for kind in ErrorKind])
    label = serializers.CharField(allow_blank=True, trim_whitespace=False)
    file = serializers.CharField()
    line = serializers.IntegerField(min_value=1)
    col = serializers.IntegerField(min_value=1)
    end_line = serializers.IntegerField(min_value=1, required=False)
    end_col = serializers.IntegerField(min_value=1, required=False)


class CatalogRecordSerializer(serializers.Serializer):
    id = serializers.IntegerField(min_value=0)
    handler_type = serializers.CharField()
    arity = serializers.IntegerField(min_value=0)
    mock_inputs = serializers.ListField(child=serializers.IntegerField(min_value=0))
    pc = serializers.ListField(child=serializers.CharField())
    error = ErrorSerializer()
    server_handlers = serializers.ListField(child=serializers.CharField(), required=False, default=list)
    discovery_inputs = serializers.ListField(child=serializers.JSONField(), required=False, default=list)

    def validate_pc(self, value):
        return _check_constraints(value)

    def validate_server_handlers(self, value):
        return _check_handler_refs(value)

    def validate(self, attrs):
        if len(attrs['mock_inputs']) != attrs['arity']:
            raise serializers.ValidationError('mock_inputs must have one entry per handler parameter')
        if any(ordinal >= len(attrs['discovery_inputs']) for ordinal in attrs['mock_inputs']):
            if attrs['discovery_inputs']:
                raise serializers.ValidationError('mock_inputs refer past discovery_inputs')
        return attrs


class CatalogSerializer(serializers.Serializer):
    schema = serializers.ChoiceField(choices=[CATALOG_SCHEMA])
    version = serializers.IntegerField(min_value=1)
    server = serializers.CharField()
    records = CatalogRecordSerializer(many=True)

    def validate_records(self, value):
        ids = [record['id'] for record in value]
        if len(ids) != len(set(ids)):
            raise serializers.ValidationError('Record ids must be unique')
        return value


class TraceStepSerializer(serializers.Serializer):
    handler = serializers.CharField()
    inputs = serializers.ListField(child=serializers.JSONField())


class TraceSerializer(serializers.Serializer):
    inputs = serializers.ListField(child=serializers.JSONField())
    handlers = serializers.ListField(child=serializers.CharField())
    send_occurrence = serializers.IntegerField(min_value=0)
    payload = serializers.ListField(child=serializers.JSONField())
    server_handlers = serializers.ListField(child=serializers.CharField())
    server_inputs = serializers.ListField(child=serializers.JSONField())
    steps = TraceStepSerializer(many=True, required=False, default=list)

    def validate_handlers(self, value):
        return _check_handler_refs(value)

    def validate_server_handlers(self, value):
        return _check_handler_refs(value)


class ReportRecordSerializer(serializers.Serializer):
    id = serializers.IntegerField(min_value=0)
    handler_type = serializers.CharField()
    error = ErrorSerializer()
    classification = serializers.ChoiceField(choices=[CLASSIFICATION_HIGH, CLASSIFICATION_LOW])
    runs_to_reproduce = serializers.IntegerField(min_value=0, allow_null=True)
    trace = TraceSerializer(allow_null=True)
    server_pc = serializers.ListField(child=serializers.CharField())

    def validate_server_pc(self, value):
        return _check_constraints(value)

    def validate(self, attrs):
        if attrs['classification'] == CLASSIFICATION_LOW and attrs['trace'] is not None:
            raise serializers.ValidationError('Low records carry no reproduction trace')
        return attrs


class ReportSerializer(serializers.Serializer):
    schema = serializers.ChoiceField(choices=[REPORT_SCHEMA])
    program = serializers.DictField(child=serializers.CharField(), required=False)
    config = serializers.DictField(required=False)
    records = ReportRecordSerializer(many=True)


class FaultSerializer(serializers.Serializer):
    fault_id = serializers.IntegerField(min_value=0)
    label = serializers.CharField()
    arm = serializers.ChoiceField(choices=[arm.value for arm in Arm])
    file = serializers.CharField()
    line = serializers.IntegerField(min_value=1)
    col = serializers.IntegerField(min_value=1)
    end_line = serializers.IntegerField(min_value=1)
    end_col = serializers.IntegerField(min_value=1)


class FaultManifestSerializer(serializers.Serializer):
    schema = serializers.ChoiceField(choices=[FAULT_MANIFEST_SCHEMA])
    program = serializers.CharField()
    seed = serializers.IntegerField()
    probability = serializers.CharField()
    faults = FaultSerializer(many=True)
