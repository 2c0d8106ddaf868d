import csv
import json
import math
import os

import numpy as np

from ..asr.model import save_model
from ..audio.wav import write_wav
from ..config.constants import ARTIFACT_HASHES_FILE, LOGS_SUBDIR, RESOLVED_CONFIG_FILE
from ..utils.image_dump import file_digest, save_pgm, spectrogram_pgm


def _jsonable(value):
    """Plain JSON types; NaN/inf become null so the output stays strict JSON"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class RunStorage:
    """Owns one run's output directory and records every artifact it writes"""

    def __init__(self, output_dir):
        self.setup_storage_directory(output_dir)
        self.artifacts = []

    def setup_storage_directory(self, output_dir):
        self.output_dir = os.path.abspath(os.path.expanduser(output_dir))
        self.logs_dir = os.path.join(self.output_dir, LOGS_SUBDIR)
        os.makedirs(self.output_dir, exist_ok=True)
        os.makedirs(self.logs_dir, exist_ok=True)
        print(f"[STORAGE] Output directory: {self.output_dir}")

    def path(self, name):
        """Absolute path of an artifact; parent directories are created"""
        full = os.path.join(self.output_dir, name)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        return full

    def _record(self, name):
        if name not in self.artifacts:
            self.artifacts.append(name)
        return self.path(name)

    def save_wav(self, name, clip):
        path = self._record(name)
        write_wav(clip, path)
        return path

    def save_json(self, name, data):
        path = self._record(name)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(_jsonable(data), f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
        return path

    def save_csv(self, name, fieldnames, rows):
        """Header row plus one line per dict row, minimal quoting"""
        path = self._record(name)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(
                f, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n"
            )
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        return path

    def save_pgm(self, name, matrix_db, low=None, high=None, highlight=None):
        path = self._record(name)
        return save_pgm(matrix_db, path, low=low, high=high, highlight=highlight)

    def save_spectrogram(self, name, spectrogram):
        path = self._record(name)
        return spectrogram_pgm(spectrogram, path)

    def save_model(self, name, model):
        path = self._record(name)
        return save_model(model, path)

    def save_resolved_config(self, config):
        path = self._record(RESOLVED_CONFIG_FILE)
        config.save_resolved(path)
        print(f"[STORAGE] Resolved config saved to {path}")
        return path

    def finalize(self):
        """Write artifact_hashes.json: SHA-256 of every artifact of this run"""
        hashes = {name: file_digest(self.path(name)) for name in sorted(self.artifacts)}
        path = self.path(ARTIFACT_HASHES_FILE)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(hashes, f, indent=2, sort_keys=True)
            f.write("\n")
        print(f"[STORAGE] {len(hashes)} artifact hashes written to {path}")
        return hashes
