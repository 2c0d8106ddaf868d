from .clip import (
    AudioClip,
    Spectrogram,
    add_white_noise,
    frame_count,
    mix,
    modified_hann,
    resample,
    signal_to_distortion,
    stft,
)
from .wav import read_wav, write_wav
