"""
Decoding Configuration.
"""

from dataclasses import asdict, dataclass

from django.conf import settings

from apps.decoding.exceptions import InvalidDecodeConfig

BEAM_WIDTH = getattr(settings, 'LAB_BEAM_WIDTH', 5)
SIBLING_PENALTY = getattr(settings, 'LAB_SIBLING_PENALTY', 1.0)
REPEAT_PENALTY = getattr(settings, 'LAB_REPEAT_PENALTY', 1.0)
MMI_WEIGHT = getattr(settings, 'LAB_MMI_WEIGHT', 0.5)
ANTI_LM_WEIGHT = getattr(settings, 'LAB_ANTI_LM_WEIGHT', 0.1)
MAX_DECODE_LEN = getattr(settings, 'LAB_MAX_DECODE_LEN', 20)

GREEDY, SAMPLE, BEAM, MMI_BACKWARD, ANTI_LM = 'greedy', 'sample', 'beam', 'mmi_backward', 'anti_lm'
STRATEGIES = (GREEDY, SAMPLE, BEAM, MMI_BACKWARD, ANTI_LM)


@dataclass(frozen=True)
class DecodeConfig:
    strategy: str = BEAM
    beam_width: int = BEAM_WIDTH
    sibling_penalty: float = SIBLING_PENALTY
    repeat_penalty: float = REPEAT_PENALTY
    temperature: float = 1.0
    mmi_weight: float = MMI_WEIGHT
    anti_lm_weight: float = ANTI_LM_WEIGHT
    max_len: int = MAX_DECODE_LEN

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidDecodeConfig('strategy', f"must be one of {', '.join(STRATEGIES)}")
        if self.beam_width < 1:
            raise InvalidDecodeConfig('beam_width', 'must be >= 1')
        if self.max_len < 1:
            raise InvalidDecodeConfig('max_len', 'must be >= 1')
        if self.sibling_penalty < 0 or self.repeat_penalty < 0:
            raise InvalidDecodeConfig('penalty', 'penalties must be >= 0')
        if not self.temperature > 0:
            raise InvalidDecodeConfig('temperature', 'must be > 0')
        if not 0.0 <= self.mmi_weight <= 1.0:
            raise InvalidDecodeConfig('mmi_weight', 'must lie in [0, 1]')
        if self.anti_lm_weight < 0:
            raise InvalidDecodeConfig('anti_lm_weight', 'must be >= 0')

    def to_dict(self) -> dict:
        return asdict(self)
