from rest_framework import serializers

from apps.decoding.services import STRATEGIES
from apps.evaluation.services import EVALUATOR_KINDS
from apps.training.services import MODES, REGS_PARTIAL, TEACHER_FORCING_MODES

# Run config keys are dotted ("train.d_steps"); serializer fields spell the
# dot as a double underscore.
KEY_SEPARATOR = '.'
FIELD_SEPARATOR = '__'


def field_name(key: str) -> str:
    return key.replace(KEY_SEPARATOR, FIELD_SEPARATOR)


def config_key(name: str) -> str:
    return name.replace(FIELD_SEPARATOR, KEY_SEPARATOR)


class IntegerListField(serializers.Field):
    """Comma separated integers, e.g. ``1,2,3``."""

    default_error_messages = {
        'invalid': 'Expected comma separated integers.',
        'empty': 'At least one value is required.',
    }

    def to_internal_value(self, data):
        items = data.split(',') if isinstance(data, str) else data
        try:
            values = [int(str(item).strip()) for item in items if str(item).strip()]
        except (TypeError, ValueError):
            self.fail('invalid')
        if not values:
            self.fail('empty')
        return values

    def to_representation(self, value):
        return ','.join(str(v) for v in value)


class RunConfigSerializer(serializers.Serializer):
    seed = serializers.IntegerField(min_value=0)
    out = serializers.CharField(allow_blank=True)

    paths__corpus = serializers.CharField(allow_blank=True)

    corpus__n = serializers.IntegerField(min_value=1)
    corpus__heldout_fraction = serializers.FloatField(min_value=0.0, max_value=0.5)
    corpus__min_length = serializers.IntegerField(min_value=0)
    corpus__tfidf_cap = serializers.FloatField(min_value=0.0)

    model__embed = serializers.IntegerField(min_value=1)
    model__hidden = serializers.IntegerField(min_value=1)

    pretrain__epochs = serializers.IntegerField(min_value=0)
    pretrain__batch_size = serializers.IntegerField(min_value=1)
    pretrain__lr = serializers.FloatField(min_value=0.0)
    pretrain__disc_epochs = serializers.IntegerField(min_value=0)
    pretrain__partial = serializers.BooleanField()

    train__d_steps = serializers.IntegerField(min_value=1)
    train__g_steps = serializers.IntegerField(min_value=1)
    train__teacher_forcing = serializers.ChoiceField(choices=TEACHER_FORCING_MODES)
    train__iterations = serializers.IntegerField(min_value=0)
    train__mode = serializers.ChoiceField(choices=MODES)
    train__rollouts = serializers.IntegerField(min_value=1)
    train__checkpoint_every = serializers.IntegerField(min_value=1)
    train__clip_advantage = serializers.BooleanField()
    train__rl_lr = serializers.FloatField(min_value=0.0)
    train__critic_lr = serializers.FloatField(min_value=0.0)
    train__disc_lr = serializers.FloatField(min_value=0.0)
    train__workers = serializers.IntegerField(min_value=1)

    decode__strategy = serializers.ChoiceField(choices=STRATEGIES)
    decode__beam_width = serializers.IntegerField(min_value=1)
    decode__sibling_penalty = serializers.FloatField(min_value=0.0)
    decode__repeat_penalty = serializers.FloatField(min_value=0.0)
    decode__temperature = serializers.FloatField()
    decode__mmi_weight = serializers.FloatField(min_value=0.0, max_value=1.0)
    decode__anti_lm_weight = serializers.FloatField(min_value=0.0)
    decode__max_len = serializers.IntegerField(min_value=1)

    eval__evaluator = serializers.ChoiceField(choices=EVALUATOR_KINDS)
    eval__epochs = serializers.IntegerField(min_value=1)
    eval__seeds = IntegerListField()
    eval__dialogues = serializers.IntegerField(min_value=4)

    def validate_decode__temperature(self, value):
        if not value > 0:
            raise serializers.ValidationError('temperature must be > 0')
        return value

    def validate(self, data):
        if data['train__mode'] == REGS_PARTIAL and data['pretrain__disc_epochs'] == 0:
            raise serializers.ValidationError('REGS_PARTIAL needs a pretrained partial-sequence discriminator')
        return data
