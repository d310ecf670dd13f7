from .dataset import (
    Dataset,
    apply_frontend,
    load_dataset,
    make_world,
    save_dataset,
    simulate_dataset,
    split_speakers,
)
from .frontend import frontend, stack_frames, subsample_labels
from .rttm import RttmError, RttmSegment, frame_labels_to_rttm, rttm_emit, rttm_parse, rttm_to_frame_labels
from .simulate import (
    SEPARATOR,
    MixtureSample,
    SimConfig,
    SpeakerWorld,
    enroll,
    simulate_mixture,
    synth_speaker_bank,
    synth_world,
)
