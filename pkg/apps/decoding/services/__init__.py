from .config import (
    ANTI_LM,
    BEAM,
    GREEDY,
    MMI_BACKWARD,
    SAMPLE,
    STRATEGIES,
    DecodeConfig,
)
from .search import (
    BeamHypothesis,
    anti_lm_decode,
    beam_search,
    complete,
    greedy_decode,
    masked_log_probs,
    sample_decode,
    sibling_adjusted,
)
from .mmi import RerankedHypothesis, backward_score, mmi_backward_rerank
from .output import (
    DecodedResponse,
    decode_contexts,
    decode_one,
    read_decodes,
    write_decodes,
)

__all__ = [
    'ANTI_LM',
    'BEAM',
    'GREEDY',
    'MMI_BACKWARD',
    'SAMPLE',
    'STRATEGIES',
    'DecodeConfig',
    'BeamHypothesis',
    'anti_lm_decode',
    'beam_search',
    'complete',
    'greedy_decode',
    'masked_log_probs',
    'sample_decode',
    'sibling_adjusted',
    'RerankedHypothesis',
    'backward_score',
    'mmi_backward_rerank',
    'DecodedResponse',
    'decode_contexts',
    'decode_one',
    'read_decodes',
    'write_decodes',
]
