from .footage import TIMBRES, FootageBank, MusicFootage, synth_footage
from .search import (
    MaskedSample,
    SearchConfig,
    coverage,
    frame_grid,
    score,
    search,
    threshold_gap,
)
