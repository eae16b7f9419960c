from rest_framework import serializers

from diffusions.serializers import DeclaredSerializer, ModelSpecSerializer
from geometry.serializers import DomainSerializer

EXPERIMENT_KINDS = (
    'fv-run',
    'conditioned-mc',
    'mixing-curve',
    'fv-vs-mc',
    'coupling-sweep',
    'check-model',
    'survival',
    'fv-scaling',
    'horizon-mc',
)

# fields that may hold a list expanded into a sweep
SWEEP_FIELDS = ('N', 'dt')


class ScalarOrListField(serializers.ListField):
    """Accepts a single value or a non-empty list of values; always yields a list"""

    def to_internal_value(self, data):
        if not isinstance(data, (list, tuple)):
            data = [data]
        return super().to_internal_value(data)


def _check_sorted(values, name):
    if list(values) != sorted(values):
        raise serializers.ValidationError({name: 'Values must be sorted in increasing order.'})


class InitialLawSerializer(serializers.Serializer):
    type = serializers.ChoiceField(choices=['uniform', 'point', 'points'], default='uniform')
    x = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    points = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=1), required=False, min_length=1,
    )
    resample = serializers.BooleanField(default=True)

    def validate(self, data):
        if data['type'] == 'point' and 'x' not in data:
            raise serializers.ValidationError({'x': 'A point law needs x.'})
        if data['type'] == 'points' and 'points' not in data:
            raise serializers.ValidationError({'points': 'A points law needs points.'})
        return data


class CouplingSpecSerializer(serializers.Serializer):
    lambda0 = serializers.FloatField(required=False, min_value=0.0)
    epsilon_couple = serializers.FloatField(required=False, min_value=0.0)
    center = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    direction = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)

    def validate(self, data):
        for name in ('lambda0', 'epsilon_couple'):
            if name in data and data[name] <= 0:
                raise serializers.ValidationError({name: 'Must be positive.'})
        return data


class ScenarioSerializer(serializers.Serializer):
    """One experiment: domain, model, kind and its numeric parameters"""

    kind = serializers.ChoiceField(choices=EXPERIMENT_KINDS)
    name = serializers.CharField(required=False, max_length=200)
    domain = DomainSerializer(required=False)
    model = ModelSpecSerializer()
    declared = DeclaredSerializer(required=False)
    seed = serializers.IntegerField(default=0, min_value=0)
    workers = serializers.IntegerField(required=False, min_value=1)
    output = serializers.CharField(required=False)

    dt = ScalarOrListField(child=serializers.FloatField(min_value=0.0), required=False, min_length=1)
    N = ScalarOrListField(child=serializers.IntegerField(min_value=2), required=False, min_length=1)
    s = serializers.FloatField(default=0.0)
    t_end = serializers.FloatField(required=False)
    checkpoints = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    times = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    init = InitialLawSerializer(required=False)
    bridge_correction = serializers.BooleanField(default=True)

    replicas = serializers.IntegerField(required=False, min_value=1)
    survivors = serializers.IntegerField(required=False, min_value=1)
    max_replicas = serializers.IntegerField(required=False, min_value=1)
    runs = serializers.IntegerField(required=False, min_value=1)
    samples = serializers.IntegerField(required=False, min_value=1)

    bins = serializers.IntegerField(required=False, min_value=1)
    alpha = serializers.FloatField(required=False)
    noise_floor = serializers.FloatField(required=False, min_value=0.0)
    pool_from = serializers.FloatField(required=False)

    x_left = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    x_right = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    horizon = serializers.FloatField(required=False)
    reference_window = serializers.FloatField(required=False)
    noise_allowance = serializers.FloatField(required=False, min_value=0.0)
    reference_survivors = serializers.IntegerField(required=False, min_value=1)
    separations = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False, min_length=1)
    coupling = CouplingSpecSerializer(required=False)

    REQUIRED_BY_KIND = {
        'fv-run': ('N', 't_end'),
        'conditioned-mc': ('t_end', 'survivors'),
        'mixing-curve': ('times', 'x_left', 'x_right', 'survivors'),
        'fv-vs-mc': ('N', 'checkpoints', 'survivors'),
        'coupling-sweep': ('separations', 'times', 'replicas'),
        'check-model': (),
        'survival': ('t_end', 'replicas'),
        'fv-scaling': ('N', 't_end', 'runs'),
        'horizon-mc': ('t_end', 'horizon', 'survivors'),
    }

    def validate_dt(self, value):
        if any(dt <= 0 for dt in value):
            raise serializers.ValidationError('Time steps must be positive.')
        return value

    def validate_alpha(self, value):
        if value <= 0:
            raise serializers.ValidationError('The collar width must be positive.')
        return value

    def validate_reference_window(self, value):
        if value <= 0:
            raise serializers.ValidationError('The reference window must be positive.')
        return value

    def validate(self, data):
        kind = data['kind']
        missing = [name for name in self.REQUIRED_BY_KIND[kind] if name not in data]
        if missing:
            raise serializers.ValidationError(
                {name: f'This field is required for {kind} experiments.' for name in missing}
            )

        for name in ('checkpoints', 'times', 'separations'):
            if name in data:
                _check_sorted(data[name], name)
        s = data['s']
        for name in ('checkpoints', 'times'):
            if name in data and data[name][0] < s:
                raise serializers.ValidationError({name: 'Times must not precede s.'})
        if 't_end' in data and data['t_end'] < s:
            raise serializers.ValidationError({'t_end': 't_end must not precede s.'})
        if 't_end' in data and 'checkpoints' in data and data['checkpoints'][-1] > data['t_end']:
            raise serializers.ValidationError({'checkpoints': 'Checkpoints must not exceed t_end.'})
        if 'horizon' in data and data['horizon'] < data.get('t_end', s):
            raise serializers.ValidationError({'horizon': 'The horizon must not precede t_end.'})
        if kind == 'fv-scaling' and len(data['N']) < 2:
            raise serializers.ValidationError({'N': 'The scaling experiment needs at least two population sizes.'})
        if 'survivors' in data and 'max_replicas' in data and data['max_replicas'] < data['survivors']:
            raise serializers.ValidationError({'max_replicas': 'max_replicas must be at least survivors.'})
        return data
