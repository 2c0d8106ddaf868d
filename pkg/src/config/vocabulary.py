"""
Token vocabulary for the toy recognizer
Maps target command strings to synthetic syllable tokens
"""

from ..errors import ConfigError
from .constants import BLANK_TOKEN

# Syllable-like tokens the recognizer can emit (blank excluded)
TOKENS = (
    "hui",
    "huo",
    "che",
    "da",
    "kai",
    "guan",
    "bo",
    "fang",
    "yin",
    "yue",
    "sou",
    "suo",
)


class TokenMapper:
    """Maps target instructions to token sequences and tokens to sub-units"""

    def __init__(self, tokens=TOKENS, blank=BLANK_TOKEN):
        self.tokens = tuple(tokens)
        self.blank = blank
        self.commands = {}
        self.load_commands()
        self.validate()

    def load_commands(self):
        """Command table, 2-4 tokens per instruction"""
        self.commands = {
            "enter": ("hui", "che"),
            "play music": ("bo", "fang", "yin", "yue"),
            "restart": ("huo", "che", "kai"),
            "open document": ("da", "kai"),
            "close computer": ("guan", "da"),
            "shut down": ("guan", "huo"),
            "browser": ("sou", "yue"),
            "search": ("sou", "suo"),
            "increase brightness": ("kai", "da", "yin"),
            "chat app": ("hui", "yue", "bo"),
        }

    def validate(self):
        if len(self.tokens) < 2:
            raise ConfigError("vocabulary", "at least two tokens are required")
        if self.blank in self.tokens:
            raise ConfigError("vocabulary", f"blank token '{self.blank}' listed as a token")
        seen = {}
        for text, sequence in self.commands.items():
            self.check_sequence(sequence, key=f"command '{text}'")
            if sequence in seen:
                raise ConfigError(
                    "vocabulary", f"'{text}' and '{seen[sequence]}' map to the same tokens"
                )
            seen[sequence] = text

    def check_sequence(self, sequence, key="target"):
        """Target sequences must be non-empty, known, and free of adjacent repeats"""
        if not sequence:
            raise ConfigError(key, "empty token sequence")
        unknown = [token for token in sequence if token not in self.tokens]
        if unknown:
            raise ConfigError(key, f"unknown token(s): {', '.join(unknown)}")
        for first, second in zip(sequence, sequence[1:]):
            if first == second:
                # greedy collapse could never produce this
                raise ConfigError(key, f"adjacent repeated token '{first}'")
        return tuple(sequence)

    def map(self, text):
        """
        Resolve a target string: a command from the table, or raw space-separated tokens.

        Returns:
            tuple[str]: token sequence
        """
        normalized = " ".join(str(text).lower().split())
        if normalized in self.commands:
            return self.commands[normalized]
        return self.check_sequence(tuple(normalized.split()))

    def sub_units(self, token):
        """Fine-grained units of a token (its letters)"""
        if token not in self.tokens:
            raise ConfigError("token", f"unknown token: {token}")
        return tuple(token)

    def expand(self, sequence):
        """Sub-unit sequence of a whole token sequence"""
        return tuple(unit for token in sequence for unit in self.sub_units(token))

    def get_vocabulary(self):
        """Model vocabulary: blank first, then the tokens"""
        return (self.blank,) + self.tokens

    def get_available_commands(self):
        return list(self.commands.keys())


# Global token mapper instance
token_mapper = TokenMapper()


def map_target(text):
    """Convenience function to resolve a target string"""
    return token_mapper.map(text)
