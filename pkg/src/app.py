import argparse
import logging
import os
import sys
import traceback
from dataclasses import asdict

import numpy as np

from .asr.features import FeatureChain
from .asr.model import Transcription, load_model, transcribe
from .asr.training import (
    MANIFEST_FIELDS,
    TrainConfig,
    default_recipes,
    read_manifest,
    synth_corpus,
    train,
)
from .attack.engine import AttackConfig, generate, noise_robustness
from .audio.clip import stft
from .audio.wav import read_wav
from .config.constants import (
    APP_VERSION,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    EXIT_PRECONDITION_FAILURE,
    EXIT_TRAINING_FAILURE,
)
from .config.experiment_config import ExperimentConfig
from .config.vocabulary import token_mapper
from .errors import (
    AudioFormatError,
    ConfigError,
    DomainError,
    PreconditionError,
    RateMismatchError,
    ShapeError,
    TrainingError,
)
from .evaluation.defense import (
    DefenseSample,
    RelayParams,
    defense_downsample,
    defense_noise_probe,
)
from .evaluation.report import EVALUATION_FIELDS, evaluate_samples, summarize
from .logging.storage import RunStorage
from .manager import WorkerPool, default_jobs
from .masking.footage import FootageBank, synth_footage
from .masking.search import SearchConfig, search, threshold_gap
from .psychoacoustics.model import masking_threshold, threshold_rows

logger = logging.getLogger(__name__)

THRESHOLD_FIELDS = ["frame_index", "bin_index", "freq_hz", "psd_db", "theta_db"]
DEFENSE_FIELDS = [
    "set",
    "sample_id",
    "target",
    "before",
    "after",
    "success_before",
    "success_after",
]
NOISE_CURVE_FIELDS = ["set", "sample_id", "sigma", "rate"]


def exit_code_for(error):
    """Exit code for a known failure, None for unexpected errors"""
    if isinstance(error, TrainingError):
        return EXIT_TRAINING_FAILURE
    if isinstance(error, PreconditionError):
        return EXIT_PRECONDITION_FAILURE
    if isinstance(
        error,
        (
            ConfigError,
            AudioFormatError,
            FileNotFoundError,
            ShapeError,
            RateMismatchError,
            DomainError,
        ),
    ):
        return EXIT_CONFIG_ERROR
    return None


def _setting(parser, flag, section, key, **kwargs):
    """Flag that overrides config key section.key when given"""
    parser.add_argument(flag, dest=f"{section}__{key}", default=None, **kwargs)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="maskattack",
        description="Masking-music adversarial audio toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON experiment config")
    _setting(common, "--output-dir", "paths", "output_dir", help="run output directory")
    _setting(common, "--seed", "run", "seed", type=int, help="run seed")
    _setting(common, "--jobs", "run", "jobs", type=int, help="worker threads")
    _setting(common, "--log-interval", "run", "log_interval", type=int)

    p = commands.add_parser("train-asr", parents=[common], help="train the toy recognizer")
    _setting(p, "--manifest", "paths", "train_manifest", help="train on a corpus manifest")
    _setting(p, "--corpus-size", "corpus", "size", type=int)
    _setting(p, "--corpus-seed", "corpus", "seed", type=int)
    _setting(p, "--write-corpus", "corpus", "write_wavs", action="store_const", const=True)
    _setting(p, "--epochs", "train", "epochs", type=int)
    _setting(p, "--batch-size", "train", "batch_size", type=int)
    _setting(p, "--learning-rate", "train", "learning_rate", type=float)
    _setting(p, "--hidden-sizes", "train", "hidden_sizes", type=int, nargs="+")
    _setting(p, "--context", "train", "context", type=int)
    _setting(p, "--holdout", "train", "holdout", type=float)
    _setting(p, "--include-dct", "train", "include_dct", action="store_const", const=True)
    _setting(
        p, "--augment-copies", "train", "augment_copies", type=int,
        help="augmented copies per training utterance",
    )
    _setting(p, "--train-seed", "train", "seed", type=int)

    p = commands.add_parser("attack", parents=[common], help="generate an adversarial perturbation")
    _setting(p, "--model", "paths", "model")
    _setting(p, "--target", "attack", "target", help="command text or space-separated tokens")
    _setting(p, "--epsilon", "attack", "epsilon", type=float)
    _setting(p, "--lr", "attack", "lr", type=float)
    _setting(p, "--sigma", "attack", "sigma", type=float)
    _setting(p, "--max-iters", "attack", "max_iters", type=int)
    _setting(p, "--alpha-value", "attack", "alpha_value", type=float)
    _setting(p, "--alpha-init", "attack", "alpha_init", type=float)
    _setting(p, "--duration", "attack", "duration", type=int, help="samples of delta")
    _setting(p, "--check-interval", "attack", "check_interval", type=int)
    _setting(p, "--stage2-iters", "attack", "stage2_iters", type=int)
    _setting(p, "--robust-checks", "attack", "robust_checks", type=int)
    _setting(
        p, "--patience", "attack", "patience", type=int,
        help="stage-1 iterations without a new best loss before the step decays",
    )
    _setting(p, "--lr-decay", "attack", "lr_decay", type=float)
    _setting(p, "--min-lr", "attack", "min_lr", type=float)
    _setting(p, "--attack-seed", "attack", "seed", type=int)

    p = commands.add_parser("search-mask", parents=[common], help="hide a perturbation under music")
    _setting(p, "--model", "paths", "model")
    _setting(p, "--delta", "paths", "input_wav", help="adversarial perturbation WAV")
    _setting(p, "--target", "attack", "target")
    _setting(p, "--bank", "paths", "bank", help="footage bank JSON")
    _setting(p, "--k", "search", "k", type=int)
    _setting(p, "--frame-len-ms", "search", "frame_len_ms", type=float)
    _setting(p, "--max-iters", "search", "max_iters", type=int)
    _setting(
        p, "--level", "search", "level", type=float, help="footage peak per unit of delta peak"
    )
    _setting(p, "--amplitude", "search", "amplitude", type=float)
    _setting(p, "--level-backoff", "search", "level_backoff", type=int)
    _setting(p, "--batch", "search", "batch", type=int)
    _setting(p, "--hinge", "search", "hinge", action="store_const", const=True)
    _setting(p, "--search-seed", "search", "seed", type=int)

    p = commands.add_parser("threshold-dump", parents=[common], help="dump masking thresholds")
    p.add_argument("wav", help="input WAV")
    _setting(p, "--window", "run", "threshold_window", type=int)
    _setting(p, "--hop", "run", "threshold_hop", type=int)

    p = commands.add_parser("evaluate", parents=[common], help="SRoA under digital and relay conditions")
    _setting(p, "--model", "paths", "model")
    _setting(p, "--samples", "paths", "samples_manifest", help="manifest of samples")
    _setting(p, "--hops", "relay", "hops", type=int)
    _setting(p, "--relay-low-rate", "relay", "low_rate", type=int)
    _setting(p, "--gain-jitter-db", "relay", "gain_jitter_db", type=float)
    _setting(p, "--noise-sigma", "relay", "noise_sigma", type=float)
    _setting(p, "--reverb-decay-ms", "relay", "reverb_decay_ms", type=float)
    _setting(p, "--reverb-wet", "relay", "reverb_wet", type=float)
    _setting(p, "--relay-seed", "relay", "seed", type=int)

    p = commands.add_parser("defense", parents=[common], help="down/up sampling and noise defenses")
    _setting(p, "--model", "paths", "model")
    _setting(p, "--samples", "paths", "samples_manifest", help="adversarial samples manifest")
    _setting(p, "--benign", "paths", "benign_manifest", help="benign samples manifest")
    _setting(p, "--low-rate", "defense", "low_rate", type=int)
    _setting(p, "--restore-rate", "defense", "restore_rate", type=int)
    _setting(p, "--sigma-grid", "defense", "sigma_grid", type=float, nargs="+")
    _setting(p, "--trials", "defense", "trials", type=int)
    _setting(p, "--benign-count", "defense", "benign_count", type=int)
    _setting(p, "--defense-seed", "defense", "seed", type=int)

    p = commands.add_parser("synth-footage", parents=[common], help="render one footage clip")
    p.add_argument("--tone", type=float, required=True, help="fundamental in Hz")
    p.add_argument("--timbre", default="piano")
    p.add_argument("--duration-ms", type=float, default=400.0)
    _setting(p, "--amplitude", "search", "amplitude", type=float)
    _setting(p, "--sample-rate", "corpus", "sample_rate", type=int)

    return parser


class MaskAttackApp:
    """One CLI invocation: parse flags, resolve the config, run a command into a RunStorage"""

    def __init__(self, argv=None):
        self.argv = list(sys.argv[1:] if argv is None else argv)
        self.parser = build_parser()
        self.args = None
        self.config = None
        self.storage = None

    @property
    def command(self):
        return self.args.command if self.args else None

    @property
    def output_dir(self):
        return self.config.get_setting("paths", "output_dir")

    @property
    def jobs(self):
        jobs = self.config.get_setting("run", "jobs")
        return default_jobs() if jobs is None else jobs

    def prepare(self):
        """
        Parse flags and resolve the config.

        Returns:
            int | None: exit code on failure, None when ready to run
        """
        try:
            self.args = self.parser.parse_args(self.argv)
        except SystemExit as e:
            return e.code if isinstance(e.code, int) else EXIT_CONFIG_ERROR
        try:
            self.config = ExperimentConfig(self.args.config)
            self.apply_overrides()
        except Exception as e:
            return self.report_error(e)
        return None

    def apply_overrides(self):
        for dest, value in sorted(vars(self.args).items()):
            if "__" not in dest or value is None:
                continue
            section, key = dest.split("__", 1)
            self.config.set_setting(section, key, value)
        if self.command == "threshold-dump":
            self.config.set_setting("paths", "input_wav", self.args.wav)

    def report_error(self, error):
        code = exit_code_for(error)
        if code is None:
            print(f"[ERROR] Unexpected failure: {error}")
            print(f"Traceback: {traceback.format_exc()}")
            raise error
        print(f"[ERROR] {type(error).__name__}: {error}")
        return code

    def run(self):
        """Run the parsed command; returns the process exit code"""
        try:
            self.storage = RunStorage(self.output_dir)
            self.storage.save_resolved_config(self.config)
            handler = getattr(self, "cmd_" + self.command.replace("-", "_"))
            with WorkerPool(self.jobs, name=self.command) as pool:
                handler(pool)
            self.storage.finalize()
            print(f"[APP] {self.command} completed")
            return EXIT_OK
        except Exception as e:
            return self.report_error(e)

    def execute(self):
        code = self.prepare()
        if code is not None:
            return code
        return self.run()

    # Helpers

    def section(self, name):
        return self.config.get_section(name)

    def required_path(self, key):
        path = self.config.get_setting("paths", key)
        if not path:
            raise ConfigError(f"paths.{key}", "a path is required for this command")
        return path

    def load_model(self):
        return load_model(self.required_path("model"))

    def target(self):
        return Transcription(token_mapper.map(self.config.get_setting("attack", "target")))

    def defense_samples(self, key):
        path = self.required_path(key)
        corpus = read_manifest(path)
        if not corpus:
            raise ConfigError(f"paths.{key}", f"no samples listed in {path}")
        return [
            DefenseSample(f"sample_{index:04d}", item.clip, Transcription(item.tokens))
            for index, item in enumerate(corpus)
        ]

    def save_manifest(self, name, wav_name, target):
        self.storage.save_csv(
            name, MANIFEST_FIELDS, [{"wav_path": wav_name, "tokens": target.text, "segments": ""}]
        )

    # Commands

    def cmd_train_asr(self, pool):
        corpus_cfg = self.section("corpus")
        train_cfg = self.section("train")
        log_interval = self.config.get_setting("run", "log_interval")
        chain = FeatureChain(
            window=train_cfg["window"],
            hop=train_cfg["hop"],
            mel_filter_count=train_cfg["mel_filters"],
            log_floor_db=train_cfg["log_floor_db"],
            include_dct=train_cfg["include_dct"],
            sample_rate=corpus_cfg["sample_rate"],
        )

        manifest = self.config.get_setting("paths", "train_manifest")
        if manifest:
            corpus = read_manifest(manifest)
        else:
            corpus = synth_corpus(
                default_recipes(),
                corpus_cfg["size"],
                self.config.seed_for("corpus"),
                corpus_cfg["sample_rate"],
            )
            if corpus_cfg["write_wavs"]:
                entries = []
                for index, item in enumerate(corpus):
                    name = f"utt_{index:05d}.wav"
                    self.storage.save_wav(os.path.join("corpus", name), item.clip)
                    entries.append(
                        {
                            "wav_path": name,
                            "tokens": " ".join(item.tokens),
                            "segments": " ".join(f"{s}:{e}" for s, e in item.segments),
                        }
                    )
                self.storage.save_csv(os.path.join("corpus", "manifest.csv"), MANIFEST_FIELDS, entries)

        config = TrainConfig(
            epochs=train_cfg["epochs"],
            batch_size=train_cfg["batch_size"],
            learning_rate=train_cfg["learning_rate"],
            hidden_sizes=tuple(train_cfg["hidden_sizes"]),
            context=train_cfg["context"],
            holdout=train_cfg["holdout"],
            seed=self.config.seed_for("train"),
            augment_copies=train_cfg["augment_copies"],
            log_interval=log_interval,
        )
        model, report = train(corpus, config, chain, pool=pool)
        self.storage.save_model("model.json", model)
        metrics = report.to_dict()
        rows = [
            {"metric": key, "value": metrics[key]}
            for key in metrics
            if key != "loss_trace"
        ]
        self.storage.save_csv("metrics.csv", ["metric", "value"], rows)
        self.storage.save_json("training_report.json", metrics)

    def cmd_attack(self, pool):
        model = self.load_model()
        target = self.target()
        attack_cfg = self.section("attack")
        cfg = AttackConfig(
            epsilon=attack_cfg["epsilon"],
            lr=attack_cfg["lr"],
            sigma=attack_cfg["sigma"],
            max_iters=attack_cfg["max_iters"],
            alpha_value=attack_cfg["alpha_value"],
            alpha_init=attack_cfg["alpha_init"],
            seed=self.config.seed_for("attack"),
            duration=attack_cfg["duration"],
            check_interval=attack_cfg["check_interval"],
            stage2_iters=attack_cfg["stage2_iters"],
            robust_checks=attack_cfg["robust_checks"],
            patience=attack_cfg["patience"],
            lr_decay=attack_cfg["lr_decay"],
            min_lr=attack_cfg["min_lr"],
            log_interval=self.config.get_setting("run", "log_interval"),
        )
        result = generate(model, target, cfg)
        wav_path = self.storage.save_wav("delta.wav", result.delta)

        telemetry = result.telemetry(target)
        telemetry["config"] = cfg.to_dict()
        telemetry["decoded_pcm16"] = transcribe(model, read_wav(wav_path)).text
        telemetry["noise_robustness"] = (
            noise_robustness(
                model, result.delta, target, cfg.sigma, attack_cfg["robustness_draws"], cfg.seed
            )
            if result.success
            else None
        )
        self.storage.save_json("attack.json", telemetry)
        self.save_manifest("attack_manifest.csv", "delta.wav", target)
        print(
            f"[ATTACK] success={result.success} achieved='{result.achieved.text}' "
            f"energy={result.l2_energy:.3e}"
        )

    def bank(self):
        path = self.config.get_setting("paths", "bank")
        if path:
            return FootageBank.load(path)
        return FootageBank.from_dict(self.section("bank"))

    def cmd_search_mask(self, pool):
        model = self.load_model()
        delta = read_wav(self.required_path("input_wav"))
        target = self.target()
        search_cfg = self.section("search")
        bank = self.bank()
        cfg = SearchConfig(
            k=search_cfg["k"],
            frame_len_ms=search_cfg["frame_len_ms"],
            max_iters=search_cfg["max_iters"],
            seed=self.config.seed_for("search"),
            bank=bank,
            level=search_cfg["level"],
            amplitude=search_cfg["amplitude"],
            level_backoff=search_cfg["level_backoff"],
            batch=search_cfg["batch"],
            hinge=search_cfg["hinge"],
            max_saturation=search_cfg["max_saturation"],
            log_interval=self.config.get_setting("run", "log_interval"),
        )
        masked = search(delta, target, model, cfg, pool=pool)
        self.storage.save_wav("mixture.wav", masked.mixture)

        theta, theta_delta, in_range = threshold_gap(masked.mixture, delta, pool)
        self.storage.save_pgm(
            "overlay.pgm", theta, highlight=(theta_delta > theta) & in_range[None, :]
        )
        telemetry = masked.telemetry()
        telemetry["target"] = target.text
        telemetry["bank"] = bank.to_dict()
        self.storage.save_json("placements.json", telemetry)
        self.save_manifest("mixture_manifest.csv", "mixture.wav", target)
        if masked.no_mask:
            print(f"[SEARCH] no placement kept '{target.text}'; wrote the bare perturbation")
            return
        print(
            f"[SEARCH] v {masked.initial_score:.3f} -> {masked.score:.3f}, coverage "
            f"{masked.coverage_before:.3f} -> {masked.coverage_after:.3f}"
        )

    def cmd_threshold_dump(self, pool):
        clip = read_wav(self.required_path("input_wav"))
        threshold = masking_threshold(
            clip,
            self.config.get_setting("run", "threshold_window"),
            self.config.get_setting("run", "threshold_hop"),
            pool=pool,
        )
        rows = (dict(zip(THRESHOLD_FIELDS, row)) for row in threshold_rows(threshold))
        self.storage.save_csv("threshold.csv", THRESHOLD_FIELDS, rows)
        self.storage.save_pgm("threshold.pgm", threshold.theta)
        self.storage.save_spectrogram(
            "spectrogram.pgm", stft(clip, threshold.window_size, threshold.hop)
        )
        print(f"[THRESHOLD] {threshold.n_frames} frames dumped")

    def relay_params(self):
        relay = self.section("relay")
        return RelayParams(
            low_rate=relay["low_rate"],
            gain_jitter_db=relay["gain_jitter_db"],
            noise_sigma=relay["noise_sigma"],
            reverb_decay_ms=relay["reverb_decay_ms"],
            reverb_wet=relay["reverb_wet"],
            seed=self.config.seed_for("relay"),
        )

    def cmd_evaluate(self, pool):
        model = self.load_model()
        samples = self.defense_samples("samples_manifest")
        params = self.relay_params()
        hops = self.config.get_setting("relay", "hops")
        rows = evaluate_samples(samples, model, hops, params, pool)
        self.storage.save_csv("evaluation.csv", EVALUATION_FIELDS, [r.to_dict() for r in rows])
        summary = summarize(rows)
        self.storage.save_json(
            "evaluation.json", {"hops": hops, "relay": params.to_dict(), "conditions": summary}
        )
        for condition, values in summary.items():
            print(
                f"[EVALUATE] {condition}: SRoA coarse={values['sroa_coarse']:.3f} "
                f"fine={values['sroa_fine']:.3f}"
            )

    def benign_samples(self, sample_rate):
        if self.config.get_setting("paths", "benign_manifest"):
            return self.defense_samples("benign_manifest")
        corpus = synth_corpus(
            default_recipes(),
            self.config.get_setting("defense", "benign_count"),
            self.config.seed_for("defense"),
            sample_rate,
        )
        return [
            DefenseSample(f"benign_{index:04d}", item.clip, Transcription(item.tokens))
            for index, item in enumerate(corpus)
        ]

    def cmd_defense(self, pool):
        model = self.load_model()
        defense = self.section("defense")
        seed = self.config.seed_for("defense")
        sets = {
            "adversarial": self.defense_samples("samples_manifest"),
            "benign": self.benign_samples(model.chain.sample_rate),
        }

        defense_rows, curve_rows, summary = [], [], {}
        for set_name, samples in sets.items():
            report = defense_downsample(
                samples, model, defense["low_rate"], defense["restore_rate"], pool
            )
            defense_rows += [dict(asdict(row), set=set_name) for row in report.rows]
            curves = pool.map(
                lambda s: defense_noise_probe(
                    s.clip, model, s.target, defense["sigma_grid"], defense["trials"], seed
                ),
                samples,
            )
            for sample, curve in zip(samples, curves):
                curve_rows += [
                    {"set": set_name, "sample_id": sample.sample_id, "sigma": s, "rate": r}
                    for s, r in zip(curve.sigmas, curve.rates)
                ]
            mean_curve = np.mean([curve.rates for curve in curves], axis=0)
            summary[set_name] = dict(
                report.to_dict(),
                sigma_grid=list(defense["sigma_grid"]),
                noise_curve=mean_curve.tolist(),
            )
            print(
                f"[DEFENSE] {set_name}: down/up {report.rate_before:.3f} -> "
                f"{report.rate_after:.3f}"
            )

        self.storage.save_csv("defense.csv", DEFENSE_FIELDS, defense_rows)
        self.storage.save_csv("noise_curves.csv", NOISE_CURVE_FIELDS, curve_rows)
        self.storage.save_json("defense.json", summary)

    def cmd_synth_footage(self, pool):
        footage = synth_footage(
            self.args.tone,
            self.args.timbre,
            self.args.duration_ms,
            self.config.get_setting("search", "amplitude"),
            self.config.get_setting("corpus", "sample_rate"),
        )
        self.storage.save_wav("footage.wav", footage.rendered)
        self.storage.save_json("footage.json", footage.describe())
        print(f"[FOOTAGE] {footage.timbre} {footage.tone:g} Hz, {len(footage.rendered)} samples")


def main(argv=None):
    """Entry point without log mirroring; see main.py for the logged variant"""
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stdout)
    return MaskAttackApp(argv).execute()
