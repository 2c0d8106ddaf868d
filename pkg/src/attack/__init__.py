from .engine import AttackConfig, AttackResult, generate, noise_robustness, stage1, stage2
