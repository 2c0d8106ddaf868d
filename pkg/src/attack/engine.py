"""
Two-stage targeted attack on the toy recognizer.

Stage 1 starts from silence and takes sign-gradient steps on the targeted loss of
the noisy input (fresh Gaussian noise every iteration), clipping the perturbation
to an infinity-norm ball. Stage 2 starts from the stage-1 perturbation and trades
loss against energy, keeping the lowest-energy iterate that still transcribes to
the target.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from ..asr.model import Transcription, loss_tensor, target_labels, transcribe_samples
from ..audio.clip import AudioClip
from ..config.constants import (
    ATTACK_ALPHA_INIT,
    ATTACK_ALPHA_VALUE,
    ATTACK_CHECK_INTERVAL,
    ATTACK_DURATION,
    ATTACK_EPSILON,
    ATTACK_LR,
    ATTACK_LR_DECAY,
    ATTACK_MAX_ITERS,
    ATTACK_MIN_LR,
    ATTACK_PATIENCE,
    ATTACK_ROBUST_CHECKS,
    ATTACK_SIGMA,
    ATTACK_STAGE2_ITERS,
    LOG_INTERVAL,
)
from ..errors import ConfigError, PreconditionError

logger = logging.getLogger(__name__)

# Independent random streams derived from one seed
STAGE1_STREAM = 1
STAGE2_STREAM = 2
ROBUST_STREAM = 3
FRESH_STREAM = 4


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = ATTACK_EPSILON
    lr: float = ATTACK_LR
    sigma: float = ATTACK_SIGMA
    max_iters: int = ATTACK_MAX_ITERS
    alpha_value: float = ATTACK_ALPHA_VALUE
    alpha_init: float = ATTACK_ALPHA_INIT
    seed: int = 0
    duration: int = ATTACK_DURATION
    check_interval: int = ATTACK_CHECK_INTERVAL
    stage2_iters: int = ATTACK_STAGE2_ITERS
    robust_checks: int = ATTACK_ROBUST_CHECKS
    patience: int = ATTACK_PATIENCE  # 0 keeps the stage-1 step fixed
    lr_decay: float = ATTACK_LR_DECAY
    min_lr: float = ATTACK_MIN_LR
    log_interval: int = LOG_INTERVAL

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("attack.epsilon", f"must be > 0, got {self.epsilon}")
        if self.lr < 0:
            raise ConfigError("attack.lr", f"must be >= 0, got {self.lr}")
        if self.sigma < 0:
            raise ConfigError("attack.sigma", f"must be >= 0, got {self.sigma}")
        if self.alpha_init < 0 or self.alpha_value < 0:
            raise ConfigError("attack.alpha_init", "alpha must be >= 0")
        if self.max_iters < 0 or self.stage2_iters < 0:
            raise ConfigError("attack.max_iters", "iteration budgets must be >= 0")
        if self.check_interval < 1:
            raise ConfigError("attack.check_interval", "must be >= 1")
        if self.duration <= 0:
            raise ConfigError("attack.duration", "must be > 0")
        if self.robust_checks < 0:
            raise ConfigError("attack.robust_checks", "must be >= 0")
        if self.patience < 0:
            raise ConfigError("attack.patience", "must be >= 0")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError("attack.lr_decay", f"must be in (0, 1], got {self.lr_decay}")
        if self.min_lr < 0:
            raise ConfigError("attack.min_lr", f"must be >= 0, got {self.min_lr}")

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class AttackResult:
    delta: AudioClip
    achieved: Transcription
    success: bool
    iterations_used: int
    loss_trace: list = field(default_factory=list)
    l2_energy: float = 0.0
    stage1_iterations: int = 0
    stage1_energy: float = 0.0
    energy_trace: list = field(default_factory=list)
    alpha: float = 0.0
    final_lr: float = 0.0

    def telemetry(self, target):
        return {
            "target": target.text,
            "achieved": self.achieved.text,
            "success": self.success,
            "iterations_used": self.iterations_used,
            "stage1_iterations": self.stage1_iterations,
            "stage1_energy": self.stage1_energy,
            "l2_energy": self.l2_energy,
            "alpha": self.alpha,
            "final_lr": self.final_lr,
            "loss_trace": self.loss_trace,
            "energy_trace": self.energy_trace,
        }


def _stream_seed(seed, stream):
    return int(np.random.SeedSequence([int(seed), stream]).generate_state(1)[0])


def _generator(seed, stream):
    return torch.Generator().manual_seed(_stream_seed(seed, stream))


def _energy(delta):
    """l_theta: mean squared amplitude"""
    return float(torch.mean(delta**2)) if delta.numel() else 0.0


def _noise(generator, length, sigma):
    if sigma == 0:
        return torch.zeros(length, dtype=torch.float64)
    return torch.randn(length, generator=generator, dtype=torch.float64) * sigma


def _clip_of(delta, model):
    return AudioClip(delta.detach().numpy().copy(), model.chain.sample_rate)


def stage1(model, target, cfg):
    """
    Sign-gradient stage from silence under an infinity-norm clip.

    Transcription is checked noise-free every check_interval iterations (iteration 0
    included) and once more after the last iteration. The step shrinks by lr_decay
    (not below min_lr) after `patience` iterations without a new lowest loss.
    Budget exhaustion is reported with success=False.
    """
    labels = target_labels(model, cfg.duration, target)
    generator = _generator(cfg.seed, STAGE1_STREAM)
    delta = torch.zeros(cfg.duration, dtype=torch.float64)
    loss_trace = []
    achieved = None
    iterations = 0
    step = cfg.lr
    floor = min(cfg.min_lr, cfg.lr)
    best_loss = float("inf")
    stale = 0

    for iteration in range(cfg.max_iters):
        if iteration % cfg.check_interval == 0:
            achieved = transcribe_samples(model, delta)
            if achieved == target:
                break
            achieved = None
        noisy = (delta + _noise(generator, cfg.duration, cfg.sigma)).requires_grad_(True)
        value = loss_tensor(model, noisy, labels)
        (gradient,) = torch.autograd.grad(value, noisy)
        loss = value.item()
        loss_trace.append(loss)
        with torch.no_grad():
            delta = torch.clamp(
                delta - step * torch.sign(gradient), -cfg.epsilon, cfg.epsilon
            )
        iterations = iteration + 1
        if loss < best_loss:
            best_loss, stale = loss, 0
        elif cfg.patience and cfg.lr_decay < 1.0:
            stale += 1
            if stale >= cfg.patience and step > floor:
                step = max(step * cfg.lr_decay, floor)
                stale = 0
                logger.info(f"[ATTACK] stage 1 step -> {step:.2e} at iteration {iterations}")
        if iterations % max(1, cfg.log_interval) == 0:
            logger.info(f"[ATTACK] stage 1 iteration {iterations} loss={loss:.4f}")

    if achieved is None:
        achieved = transcribe_samples(model, delta)
    success = achieved == target
    energy = _energy(delta)
    logger.info(
        f"[ATTACK] stage 1 {'succeeded' if success else 'failed'} after {iterations} "
        f"iterations: '{achieved.text}' (target '{target.text}')"
    )
    return AttackResult(
        delta=_clip_of(delta, model),
        achieved=achieved,
        success=success,
        iterations_used=iterations,
        loss_trace=loss_trace,
        l2_energy=energy,
        stage1_iterations=iterations,
        stage1_energy=energy,
        final_lr=step,
    )


def _robust_noise(cfg):
    generator = _generator(cfg.seed, ROBUST_STREAM)
    return [_noise(generator, cfg.duration, cfg.sigma) for _ in range(cfg.robust_checks)]


def _still_on_target(model, candidate, target, noise_draws):
    if transcribe_samples(model, candidate) != target:
        return False
    return all(transcribe_samples(model, candidate + z) == target for z in noise_draws)


def stage2(model, start, target, cfg, alpha=None):
    """
    Energy-shrinking stage: Adam on l_net + alpha * l_theta at the inherited learning rate.

    An iterate replaces the current best only if its energy is lower and it still
    transcribes to the target noise-free and under every fixed robustness draw.

    Args:
        alpha (float): energy weight; defaults to cfg.alpha_init

    Returns:
        AttackResult: the best iterate (`start`'s perturbation if none improved)
    """
    if not start.success:
        raise PreconditionError("stage2 needs a successful stage-1 result")
    alpha = cfg.alpha_init if alpha is None else alpha
    labels = target_labels(model, len(start.delta), target)
    generator = _generator(cfg.seed, STAGE2_STREAM)
    noise_draws = _robust_noise(cfg) if cfg.sigma > 0 else []

    delta = torch.tensor(start.delta.samples, dtype=torch.float64, requires_grad=True)
    optimizer = torch.optim.Adam([delta], lr=cfg.lr)
    best = delta.detach().clone()
    best_energy = start.l2_energy
    loss_trace = list(start.loss_trace)
    energy_trace = []

    for iteration in range(cfg.stage2_iters):
        noisy = delta + _noise(generator, len(best), cfg.sigma)
        net_loss = loss_tensor(model, noisy, labels)
        energy_loss = torch.mean(delta**2)
        optimizer.zero_grad()
        (net_loss + alpha * energy_loss).backward()
        optimizer.step()

        candidate = delta.detach().clone()
        energy = _energy(candidate)
        loss_trace.append(float(net_loss))
        energy_trace.append(energy)
        if energy < best_energy and _still_on_target(model, candidate, target, noise_draws):
            best, best_energy = candidate, energy
        if (iteration + 1) % max(1, cfg.log_interval) == 0:
            logger.info(
                f"[ATTACK] stage 2 iteration {iteration + 1} loss={float(net_loss):.4f} "
                f"energy={energy:.3e} best={best_energy:.3e}"
            )

    logger.info(
        f"[ATTACK] stage 2 energy {start.l2_energy:.3e} -> {best_energy:.3e} (alpha={alpha})"
    )
    return AttackResult(
        delta=_clip_of(best, model),
        achieved=transcribe_samples(model, best),
        success=True,
        iterations_used=start.iterations_used + cfg.stage2_iters,
        loss_trace=loss_trace,
        l2_energy=best_energy,
        stage1_iterations=start.stage1_iterations,
        stage1_energy=start.stage1_energy,
        energy_trace=energy_trace,
        alpha=alpha,
        final_lr=start.final_lr,
    )


def generate(model, target, cfg):
    """Stage 1, then stage 2 with alpha switched to alpha_value once the target is reached"""
    first = stage1(model, target, cfg)
    if not first.success:
        return first
    return stage2(model, first, target, cfg, alpha=cfg.alpha_value)


def noise_robustness(model, delta, target, sigma, draws, seed):
    """
    Fraction of fresh Gaussian noise draws under which `delta` still transcribes to `target`.
    """
    if draws <= 0:
        return float("nan")
    generator = _generator(seed, FRESH_STREAM)
    samples = torch.from_numpy(np.array(delta.samples))
    hits = sum(
        transcribe_samples(model, samples + _noise(generator, len(samples), sigma)) == target
        for _ in range(draws)
    )
    return hits / draws
