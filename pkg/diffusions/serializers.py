from rest_framework import serializers

from .library import MODEL_LIBRARY


class DeclaredSerializer(serializers.Serializer):
    """Declared constants overriding the library values"""

    k0 = serializers.FloatField(required=False, min_value=0.0)
    c0 = serializers.FloatField(required=False)
    kappa_max = serializers.FloatField(required=False, min_value=0.0)
    period = serializers.FloatField(required=False)

    def validate_c0(self, value):
        if value <= 0:
            raise serializers.ValidationError('c0 must be positive.')
        return value

    def validate_period(self, value):
        if value <= 0:
            raise serializers.ValidationError('The period must be positive.')
        return value


class ModelSpecSerializer(serializers.Serializer):
    """Serializer for {name, params} model references"""

    name = serializers.CharField(max_length=100)
    params = serializers.DictField(required=False, default=dict)

    def validate_name(self, value):
        if value not in MODEL_LIBRARY:
            raise serializers.ValidationError(
                f'Unknown model "{value}". Available: {", ".join(sorted(MODEL_LIBRARY))}.'
            )
        return value
