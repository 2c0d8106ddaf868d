from .features import FeatureChain, features, features_tensor, mel_filterbank
from .model import (
    AcousticModel,
    Transcription,
    decode,
    forward,
    grad_input,
    load_model,
    loss,
    save_model,
    transcribe,
    uniform_alignment,
)
from .training import (
    LabeledClip,
    TokenRecipe,
    TrainConfig,
    TrainReport,
    augment_clip,
    default_recipes,
    read_manifest,
    synth_corpus,
    train,
    write_manifest,
)
