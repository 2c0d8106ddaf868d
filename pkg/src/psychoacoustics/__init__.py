from .model import (
    Masker,
    MaskingThreshold,
    PSDFrame,
    ath,
    ath_extended,
    bark,
    bin_to_freq,
    find_maskers,
    global_threshold,
    individual_threshold,
    masking_threshold,
    normalize_psd,
    psd,
    relative_psd,
    spreading,
    threshold_rows,
)
