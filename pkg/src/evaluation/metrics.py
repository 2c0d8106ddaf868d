"""
Success rate of attack (SRoA) under an optimal token alignment.
"""

from dataclasses import dataclass

from ..config.vocabulary import token_mapper
from ..errors import ConfigError, DomainError

COARSE = "coarse"
FINE = "fine"
GRANULARITIES = (COARSE, FINE)

# Edit operations
MATCH = "match"
SUBSTITUTE = "substitute"
DELETE = "delete"
INSERT = "insert"


@dataclass(frozen=True)
class Alignment:
    """Edit script between reference and hypothesis; ops are (op, ref_index, hyp_index)"""

    operations: tuple
    distance: int
    matches: int


def align(reference, hypothesis):
    """
    Levenshtein alignment minimizing edits, then maximizing matches.

    Args:
        reference (Sequence): reference units
        hypothesis (Sequence): hypothesis units

    Returns:
        Alignment
    """
    ref, hyp = list(reference), list(hypothesis)
    n, m = len(ref), len(hyp)
    # cost[i][j] = (edits, -matches) for ref[:i] vs hyp[:j]
    cost = [[(0, 0)] * (m + 1) for _ in range(n + 1)]
    back = [[None] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = (i, 0)
        back[i][0] = DELETE
    for j in range(1, m + 1):
        cost[0][j] = (j, 0)
        back[0][j] = INSERT

    for i in range(1, n + 1):
        for j in range(1, m + 1):
            edits, neg_matches = cost[i - 1][j - 1]
            if ref[i - 1] == hyp[j - 1]:
                diagonal = ((edits, neg_matches - 1), MATCH)
            else:
                diagonal = ((edits + 1, neg_matches), SUBSTITUTE)
            up = cost[i - 1][j]
            left = cost[i][j - 1]
            options = [
                diagonal,
                ((up[0] + 1, up[1]), DELETE),
                ((left[0] + 1, left[1]), INSERT),
            ]
            cost[i][j], back[i][j] = min(options, key=lambda option: option[0])

    operations = []
    i, j = n, m
    while i > 0 or j > 0:
        op = back[i][j]
        if op in (MATCH, SUBSTITUTE):
            i, j = i - 1, j - 1
            operations.append((op, i, j))
        elif op == DELETE:
            i -= 1
            operations.append((op, i, None))
        else:
            j -= 1
            operations.append((op, None, j))
    operations.reverse()
    distance, neg_matches = cost[n][m]
    return Alignment(tuple(operations), distance, -neg_matches)


def units(tokens, granularity=COARSE, mapper=token_mapper):
    """Tokens themselves (coarse) or their sub-units from the token mapper (fine)"""
    if granularity == COARSE:
        return tuple(tokens)
    if granularity == FINE:
        return mapper.expand(tokens)
    raise ConfigError("granularity", f"expected one of {GRANULARITIES}, got {granularity}")


def sroa(reference, hypothesis, granularity=COARSE):
    """
    Matched units under the optimal alignment divided by the reference unit count.

    Args:
        reference (Transcription): target transcription, non-empty
        hypothesis (Transcription): recognized transcription
        granularity (str): "coarse" (tokens) or "fine" (letters)

    Returns:
        float: in [0, 1]
    """
    ref = units(reference.tokens, granularity)
    if not ref:
        raise DomainError("SRoA needs a non-empty reference")
    hyp = units(hypothesis.tokens, granularity)
    return align(ref, hyp).matches / len(ref)
