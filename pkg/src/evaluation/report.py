"""
Per-condition SRoA rows for the `evaluate` command.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..asr.model import transcribe
from ..audio.clip import signal_to_distortion
from ..manager import INLINE
from .defense import relay_chain
from .metrics import COARSE, FINE, sroa

logger = logging.getLogger(__name__)

DIGITAL = "digital"

EVALUATION_FIELDS = [
    "sample_id",
    "target",
    "decoded",
    "sroa_coarse",
    "sroa_fine",
    "condition",
    "sdr_db",
]


@dataclass(frozen=True)
class EvaluationRow:
    sample_id: str
    target: str
    decoded: str
    sroa_coarse: float
    sroa_fine: float
    condition: str
    sdr_db: float

    def to_dict(self):
        return asdict(self)


def relay_condition(hop):
    return f"relay_{hop}"


def evaluate_sample(sample, model, hops, params):
    """Digital condition plus one row per relay hop"""
    clips = [(DIGITAL, sample.clip)]
    if hops > 0:
        clips += [
            (relay_condition(h + 1), clip)
            for h, clip in enumerate(relay_chain(sample.clip, hops, params))
        ]
    rows = []
    for condition, clip in clips:
        decoded = transcribe(model, clip)
        rows.append(
            EvaluationRow(
                sample_id=sample.sample_id,
                target=sample.target.text,
                decoded=decoded.text,
                sroa_coarse=sroa(sample.target, decoded, COARSE),
                sroa_fine=sroa(sample.target, decoded, FINE),
                condition=condition,
                sdr_db=signal_to_distortion(sample.clip, clip),
            )
        )
    return rows


def evaluate_samples(samples, model, hops, params, pool=INLINE):
    """Rows for every sample in input order"""
    per_sample = pool.map(lambda s: evaluate_sample(s, model, hops, params), samples)
    return [row for rows in per_sample for row in rows]


def summarize(rows):
    """Mean SRoA and exact-decode rate per condition"""
    summary = {}
    for condition in dict.fromkeys(row.condition for row in rows):
        selected = [row for row in rows if row.condition == condition]
        summary[condition] = {
            "samples": len(selected),
            "sroa_coarse": float(np.mean([r.sroa_coarse for r in selected])),
            "sroa_fine": float(np.mean([r.sroa_fine for r in selected])),
            "exact": float(np.mean([r.decoded == r.target for r in selected])),
        }
    return summary
