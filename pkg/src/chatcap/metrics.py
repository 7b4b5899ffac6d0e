"""Dialogue diagnostics and human-evaluation arithmetic.

Question uniqueness is exact-match over normalized text; the hard-coded first
question of each dialogue is excluded from uniqueness counting. Ballot
aggregation is majority-of-five, reported per corpus and averaged unweighted.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

YES_NO_LEADS = frozenset(
    "is are was were do does did can could will would has have had should shall am".split()
)

VOTES_PER_BALLOT = 5


def normalize_question(text: str) -> str:
    """Lowercase, collapse whitespace, trim, strip one trailing ``?``/``.``/``!``."""
    collapsed = " ".join(text.lower().split())
    if collapsed and collapsed[-1] in "?.!":
        collapsed = collapsed[:-1]
    return collapsed.strip()


def classify_yes_no(question: str) -> bool:
    """True iff the question opens with an auxiliary verb (yes/no heuristic)."""
    normalized = normalize_question(question)
    if not normalized:
        return False
    first = normalized.split(" ", 1)[0].rstrip("?.!")
    return first in YES_NO_LEADS


def whole_percent(numerator: float, denominator: float) -> int:
    """Ratio as a whole percent, rounding halves up."""
    if denominator == 0:
        return 100
    return int(numerator / denominator * 100 + 0.5)


def report_for_turns(turns: Sequence, n_frames: int | None = None) -> dict:
    """Per-dialogue metrics dict embedded in the transcript.

    ``turns`` need ``frame_id`` and ``question_text`` attributes. The first
    turn is excluded from uniqueness and yes/no counting; frame coverage
    spans all turns.
    """
    counted = [normalize_question(t.question_text) for t in turns[1:]]
    unique = len(set(counted))
    coverage: dict[int, int] = (
        {k: 0 for k in range(1, n_frames + 1)} if n_frames else {}
    )
    for turn in turns:
        coverage[turn.frame_id] = coverage.get(turn.frame_id, 0) + 1
    return {
        "unique_questions": unique,
        "counted_questions": len(counted),
        "uniqueness_ratio": unique / len(counted) if counted else 1.0,
        "yes_no_count": sum(classify_yes_no(q) for q in counted),
        "frame_coverage": {str(k): coverage[k] for k in sorted(coverage)},
    }


def uniqueness(
    transcripts: Iterable,
) -> tuple[list[tuple[int, int]], tuple[int, int]]:
    """Distinct-question counts per dialogue and pooled over the corpus.

    The first (hard-coded) turn of every dialogue is excluded. Transcripts
    must be non-aborted.
    """
    per_dialogue: list[tuple[int, int]] = []
    pooled: set[str] = set()
    pooled_total = 0
    for transcript in transcripts:
        if getattr(transcript, "aborted", False):
            raise ValueError(
                f"aborted transcript {transcript.video_id!r} cannot be scored"
            )
        questions = [normalize_question(t.question_text) for t in transcript.turns[1:]]
        per_dialogue.append((len(set(questions)), len(questions)))
        pooled.update(questions)
        pooled_total += len(questions)
    return per_dialogue, (len(pooled), pooled_total)


@dataclass(frozen=True)
class Ballot:
    """One pairwise caption comparison; ``generated`` says which side is ours."""

    item_id: str
    caption_a: str
    caption_b: str
    generated: str
    corpus: str = "default"
    votes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.generated not in ("a", "b"):
            raise ValueError(f"generated must be 'a' or 'b', got {self.generated!r}")

    def with_votes(self, votes: Sequence[str]) -> "Ballot":
        return Ballot(
            self.item_id, self.caption_a, self.caption_b, self.generated,
            self.corpus, tuple(votes),
        )


def aggregate_votes(ballots: Sequence[Ballot]) -> dict:
    """Majority-vote preference per corpus plus the unweighted overall mean."""
    if not ballots:
        raise ValueError("no ballots to aggregate")
    wins: dict[str, list[int]] = {}
    for ballot in ballots:
        if len(ballot.votes) != VOTES_PER_BALLOT:
            raise ValueError(
                f"ballot {ballot.item_id!r} has {len(ballot.votes)} votes, "
                f"expected {VOTES_PER_BALLOT}"
            )
        if any(v not in ("a", "b") for v in ballot.votes):
            raise ValueError(f"ballot {ballot.item_id!r} has votes outside a/b")
        winner = "a" if ballot.votes.count("a") > VOTES_PER_BALLOT // 2 else "b"
        entry = wins.setdefault(ballot.corpus, [0, 0])
        entry[0] += winner == ballot.generated
        entry[1] += 1
    per_corpus = {
        corpus: {
            "ballots": total,
            "generated_pct": generated_won / total * 100,
            "reference_pct": (total - generated_won) / total * 100,
        }
        for corpus, (generated_won, total) in sorted(wins.items())
    }
    overall_generated = sum(c["generated_pct"] for c in per_corpus.values()) / len(per_corpus)
    return {
        "per_corpus": per_corpus,
        "overall": {
            "generated_pct": overall_generated,
            "reference_pct": 100 - overall_generated,
        },
    }


def export_ballots(
    pairs: Sequence[tuple], seed: int
) -> list[Ballot]:
    """Randomize (seeded) which side each generated caption lands on.

    ``pairs`` items are ``(reference, generated)`` or
    ``(reference, generated, corpus)``.
    """
    if not pairs:
        raise ValueError("no caption pairs to export")
    rng = random.Random(seed)
    ballots = []
    for i, pair in enumerate(pairs, start=1):
        reference, generated = pair[0], pair[1]
        corpus = pair[2] if len(pair) > 2 else "default"
        slot = rng.choice(("a", "b"))
        caption_a, caption_b = (
            (generated, reference) if slot == "a" else (reference, generated)
        )
        ballots.append(
            Ballot(
                item_id=f"item_{i:04d}",
                caption_a=caption_a,
                caption_b=caption_b,
                generated=slot,
                corpus=corpus,
            )
        )
    return ballots


def ballots_csv(ballots: Sequence[Ballot]) -> str:
    """Rater-facing CSV; the generated/reference assignment is withheld."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["item_id", "caption_a", "caption_b"])
    for ballot in ballots:
        writer.writerow([ballot.item_id, ballot.caption_a, ballot.caption_b])
    return buffer.getvalue()


def ballots_key(ballots: Sequence[Ballot]) -> dict:
    """Private key file payload mapping items to their hidden assignment."""
    return {
        "items": {
            b.item_id: {"generated": b.generated, "corpus": b.corpus}
            for b in ballots
        }
    }
