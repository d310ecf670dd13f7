import numpy as np
import pytest

from send_diar.send import SendConfig
from send_diar.sendti import SendTiConfig

TINY = dict(feature_dim=6, embedding_dim=5, encoding_dim=8, capacity=4, max_overlap=2, filter_size=3,
            speech_blocks=1, speech_hidden=8, speech_projection=4, speaker_layers=2, speaker_hidden=8,
            postnet_blocks=1, postnet_hidden=6, postnet_fcn_hidden=8)


def tiny_send_config(**changes) -> SendConfig:
    return SendConfig(**{**TINY, **changes})


def tiny_sendti_config(**changes) -> SendTiConfig:
    base = dict(TINY, vocab_size=7, text_blocks=1, text_heads=2, text_ffn=8)
    return SendTiConfig(**{**base, **changes})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
