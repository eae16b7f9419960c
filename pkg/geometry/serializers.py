from rest_framework import serializers

from utils.exceptions import SimulationError
from .domains import DOMAIN_TYPES, domain_from_descriptor


class DomainSerializer(serializers.Serializer):
    """Serializer for domain descriptors in scenario files"""

    type = serializers.ChoiceField(choices=sorted(DOMAIN_TYPES))
    a = serializers.FloatField(required=False)
    b = serializers.FloatField(required=False)
    center = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    radius = serializers.FloatField(required=False, min_value=0.0)
    semi_axes = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False, min_length=1)
    lower = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    upper = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)

    REQUIRED_FIELDS = {
        'interval': ('a', 'b'),
        'ball': ('center', 'radius'),
        'ellipsoid': ('center', 'semi_axes'),
        'box': ('lower', 'upper'),
    }

    def validate(self, data):
        """Check the fields required by the chosen shape"""
        missing = [name for name in self.REQUIRED_FIELDS[data['type']] if name not in data]
        if missing:
            raise serializers.ValidationError({name: 'This field is required for this domain type.' for name in missing})

        try:
            data['domain'] = domain_from_descriptor(data)
        except SimulationError as exc:
            raise serializers.ValidationError({'non_field_errors': [exc.detail]})
        return data

    def create(self, validated_data):
        return validated_data['domain']
