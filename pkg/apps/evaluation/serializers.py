from rest_framework import serializers

from apps.evaluation.services.evaluators import EVALUATOR_KINDS
from apps.evaluation.services.scenarios import SCENARIOS

ERE_TOLERANCE = 1e-9


class UnitFloatField(serializers.FloatField):
    def __init__(self, **kwargs):
        kwargs.setdefault('min_value', 0.0)
        kwargs.setdefault('max_value', 1.0)
        super().__init__(**kwargs)


class EvalReportSerializer(serializers.Serializer):
    model = serializers.CharField(max_length=100)
    evaluator_kind = serializers.CharField(max_length=32)
    adver_suc = UnitFloatField(allow_null=True, required=False)
    scenario_adver_suc = serializers.DictField(child=UnitFloatField(), required=False)
    deviations = serializers.DictField(child=UnitFloatField(), required=False)
    ere = UnitFloatField(allow_null=True, required=False)
    machine_vs_random = UnitFloatField(allow_null=True, required=False)
    seeds = serializers.ListField(child=serializers.IntegerField(), allow_empty=False)
    config_hash = serializers.CharField(max_length=64, allow_blank=True)

    def validate_evaluator_kind(self, value):
        if value not in EVALUATOR_KINDS and value != 'CONSTANT':
            raise serializers.ValidationError(f"unknown evaluator kind {value!r}")
        return value

    def validate_deviations(self, value):
        unknown = set(value) - set(SCENARIOS)
        if unknown:
            raise serializers.ValidationError(f"unknown scenarios: {', '.join(sorted(unknown))}")
        return value

    def validate(self, data):
        deviations = data.get('deviations') or {}
        if set(deviations) != set(data.get('scenario_adver_suc') or {}):
            raise serializers.ValidationError('deviations and scenario_adver_suc must cover the same scenarios')
        ere = data.get('ere')
        if ere is not None:
            if not deviations:
                raise serializers.ValidationError('ere needs per-scenario deviations')
            mean = sum(deviations.values()) / len(deviations)
            if abs(mean - ere) > ERE_TOLERANCE:
                raise serializers.ValidationError('ere must equal the mean per-scenario deviation')
        return data
