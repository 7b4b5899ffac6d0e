"""Dialogue engine: question rounds, frame-ID repair, summarization, transcripts.

The questioner is asked for ``Frame_k: question`` lines; the answerer answers
each question against the selected frame's image. Malformed or out-of-bounds
frame references trigger repair retries and, after exhaustion, a fallback to
the least-queried frame, so every recorded turn stays within [1, n].
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import metrics as metrics_mod
from .errors import BackendError, ChatCapError, ConfigError
from .frames import FrameRef, FrameSet
from .prompts import (
    DEFAULT_MAX_CONTEXT_CHARS,
    FALLBACK_QUESTION,
    ChatMessage,
    PromptPack,
    conversation_context,
    fill_frames,
    render_answer_prompt,
    render_question_context,
    render_summary_context,
)

log = logging.getLogger("chatcap.engine")

SCHEMA_VERSION = 1
VIDEO_CENTRIC = "video_centric"
FRAME_CENTRIC = "frame_centric"
STRATEGIES = (VIDEO_CENTRIC, FRAME_CENTRIC)

_FRAME_RE = re.compile(r"frame[_ ]?(\d+)", re.IGNORECASE)


class ParseFailure(ChatCapError):
    """The questioner's output does not yield a usable frame question."""


class MalformedFormat(ParseFailure):
    """No Frame_ID token present."""


class OutOfBounds(ParseFailure):
    """Frame id outside [1, n]."""

    def __init__(self, frame_id: int):
        super().__init__(f"frame id {frame_id} outside the sampled range")
        self.frame_id = frame_id


class EmptyQuestion(ParseFailure):
    """Frame_ID token present but no question text follows."""


def parse_frame_question(raw: str, n: int) -> tuple[int, str]:
    """Extract (frame_id, question) from a raw questioner line.

    Matches the first ``Frame[_ ]?<digits>`` token case-insensitively; the
    question is whatever follows it, after an optional ``:`` or ``,``.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    match = _FRAME_RE.search(raw)
    if match is None:
        raise MalformedFormat(f"no Frame_ID token in {raw!r}")
    frame_id = int(match.group(1))
    if frame_id < 1 or frame_id > n:
        raise OutOfBounds(frame_id)
    rest = raw[match.end():].lstrip()
    if rest[:1] in (":", ","):
        rest = rest[1:]
    question = rest.strip()
    if not question:
        raise EmptyQuestion(f"no question text in {raw!r}")
    return frame_id, question


def format_frame_question(frame_id: int, question: str) -> str:
    return f"Frame_{frame_id}: {question}"


@dataclass(frozen=True)
class Turn:
    round: int
    raw_question: str
    frame_id: int
    question_text: str
    answer: str
    retries: int
    repaired: bool


@dataclass
class DialogueState:
    frameset: FrameSet
    turns: list[Turn] = field(default_factory=list)
    rounds_target: int = 30
    strategy: str = VIDEO_CENTRIC

    @property
    def n_frames(self) -> int:
        return self.frameset.n

    def qa_triples(self) -> list[tuple[int, str, str]]:
        return [(t.frame_id, t.question_text, t.answer) for t in self.turns]


@dataclass
class EngineConfig:
    """Run parameters snapshotted into the transcript."""

    frameset: FrameSet
    rounds: int = 30
    strategy: str = VIDEO_CENTRIC
    max_retries: int = 3
    max_context_chars: int = DEFAULT_MAX_CONTEXT_CHARS
    temperature: float = 0.6
    max_tokens_question: int = 128
    max_tokens_summary: int = 256

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy: {self.strategy!r}")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")


@dataclass
class Transcript:
    schema_version: int
    video_id: str
    config: dict
    frames: list[FrameRef]
    turns: list[Turn]
    summary: str | None
    aborted: bool
    ablation: dict | None
    metrics: dict

    def to_canonical_json(self) -> str:
        # Key order below is the wire contract; timestamps are deliberately absent.
        payload = {
            "schema_version": self.schema_version,
            "video_id": self.video_id,
            "config": self.config,
            "frames": [
                {
                    "frame_id": f.frame_id,
                    "source_index": f.source_index,
                    "image_path": f.image_path,
                }
                for f in self.frames
            ],
            "turns": [
                {
                    "round": t.round,
                    "raw_question": t.raw_question,
                    "frame_id": t.frame_id,
                    "question": t.question_text,
                    "answer": t.answer,
                    "retries": t.retries,
                    "repaired": t.repaired,
                }
                for t in self.turns
            ],
            "summary": self.summary,
            "aborted": self.aborted,
            "ablation": self.ablation,
            "metrics": self.metrics,
        }
        return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_canonical_json(), encoding="utf-8")

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ChatCapError(f"transcript is not valid JSON: {exc}") from exc
        if payload.get("schema_version") != SCHEMA_VERSION:
            raise ChatCapError(
                f"unsupported transcript schema_version: {payload.get('schema_version')!r}"
            )
        try:
            frames = [
                FrameRef(f["frame_id"], f["source_index"], f["image_path"])
                for f in payload["frames"]
            ]
            turns = [
                Turn(
                    round=t["round"],
                    raw_question=t["raw_question"],
                    frame_id=t["frame_id"],
                    question_text=t["question"],
                    answer=t["answer"],
                    retries=t["retries"],
                    repaired=t["repaired"],
                )
                for t in payload["turns"]
            ]
            return cls(
                schema_version=payload["schema_version"],
                video_id=payload["video_id"],
                config=payload["config"],
                frames=frames,
                turns=turns,
                summary=payload["summary"],
                aborted=payload["aborted"],
                ablation=payload["ablation"],
                metrics=payload["metrics"],
            )
        except (KeyError, TypeError) as exc:
            raise ChatCapError(f"transcript missing required field: {exc}") from exc

    @classmethod
    def read(cls, path: str | Path) -> "Transcript":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def least_queried_frame(state: DialogueState) -> int:
    """Fallback target: least-queried frame id, lowest id on ties."""
    counts = {k: 0 for k in range(1, state.n_frames + 1)}
    for turn in state.turns:
        counts[turn.frame_id] += 1
    return min(counts, key=lambda k: (counts[k], k))


def run_round(
    state: DialogueState,
    pack: PromptPack,
    questioner,
    answerer,
    *,
    max_retries: int = 3,
    max_context_chars: int = DEFAULT_MAX_CONTEXT_CHARS,
) -> Turn:
    """Execute one question/answer round and append the resulting Turn."""
    if len(state.turns) >= state.rounds_target:
        raise ChatCapError("dialogue already reached rounds_target")
    round_no = len(state.turns) + 1
    n = state.n_frames

    if round_no == 1:
        raw = pack.first_question
        frame_id, question = parse_frame_question(raw, n)
        retries = 0
        fallback = False
    else:
        context = render_question_context(pack, state, max_context_chars)
        attempt = list(context)
        retries = 0
        fallback = False
        raw = questioner.ask(attempt)
        while True:
            try:
                frame_id, question = parse_frame_question(raw, n)
                break
            except ParseFailure as failure:
                if retries >= max_retries:
                    frame_id = least_queried_frame(state)
                    question = FALLBACK_QUESTION
                    fallback = True
                    log.warning(
                        "round %d: retries exhausted (%s); falling back to frame %d",
                        round_no,
                        failure,
                        frame_id,
                    )
                    break
                retries += 1
                attempt = attempt + [
                    ChatMessage("assistant", raw if raw.strip() else "(empty response)"),
                    ChatMessage("user", fill_frames(pack.repair_prompt, n)),
                ]
                raw = questioner.ask(attempt)

    answer = answerer.answer(
        state.frameset.image_for(frame_id), render_answer_prompt(pack, question)
    )
    turn = Turn(
        round=round_no,
        raw_question=raw,
        frame_id=frame_id,
        question_text=question,
        answer=answer,
        retries=retries,
        repaired=retries > 0 or fallback,
    )
    state.turns.append(turn)
    return turn


def run_dialogue(
    config: EngineConfig, pack: PromptPack, questioner, answerer
) -> Transcript:
    """Video-centric dialogue: the questioner picks frames across all rounds."""
    config.frameset.check_readable()
    state = DialogueState(
        frameset=config.frameset,
        rounds_target=config.rounds,
        strategy=VIDEO_CENTRIC,
    )
    summary: str | None = None
    aborted = False
    try:
        for _ in range(config.rounds):
            run_round(
                state,
                pack,
                questioner,
                answerer,
                max_retries=config.max_retries,
                max_context_chars=config.max_context_chars,
            )
        summary = questioner.summarize(
            render_summary_context(pack, state, config.max_context_chars)
        )
    except BackendError as exc:
        log.warning("dialogue aborted after %d turns: %s", len(state.turns), exc)
        aborted = True
    return _build_transcript(
        config, pack, questioner, answerer, state.turns, summary, aborted, None,
        strategy=VIDEO_CENTRIC,
    )


def run_frame_centric(
    config: EngineConfig, pack: PromptPack, questioner, answerer
) -> Transcript:
    """Ablation strategy: one independent mini-dialogue per frame.

    Each frame gets ceil(rounds / n) questions asked against it alone, then a
    per-frame caption; the final summary is synthesized from those captions.
    """
    config.frameset.check_readable()
    n = config.frameset.n
    per_frame_rounds = math.ceil(config.rounds / n)
    all_turns: list[Turn] = []
    captions: list[dict] = []
    summary: str | None = None
    aborted = False
    try:
        for frame in config.frameset.frames:
            sub_state = DialogueState(
                frameset=_single_frame_set(config.frameset, frame),
                rounds_target=per_frame_rounds,
                strategy=FRAME_CENTRIC,
            )
            for _ in range(per_frame_rounds):
                run_round(
                    sub_state,
                    pack,
                    questioner,
                    answerer,
                    max_retries=config.max_retries,
                    max_context_chars=config.max_context_chars,
                )
            caption = questioner.summarize(
                render_summary_context(pack, sub_state, config.max_context_chars)
            )
            captions.append({"frame_id": frame.frame_id, "caption": caption})
            for turn in sub_state.turns:
                all_turns.append(
                    Turn(
                        round=len(all_turns) + 1,
                        raw_question=turn.raw_question,
                        frame_id=frame.frame_id,
                        question_text=turn.question_text,
                        answer=turn.answer,
                        retries=turn.retries,
                        repaired=turn.repaired,
                    )
                )
        summary = questioner.summarize(
            conversation_context(
                pack,
                n,
                [(c["frame_id"], FALLBACK_QUESTION, c["caption"]) for c in captions],
                pack.summary_prompt,
                config.max_context_chars,
            )
        )
    except BackendError as exc:
        log.warning("frame-centric run aborted after %d turns: %s", len(all_turns), exc)
        aborted = True
    ablation = {"rounds_per_frame": per_frame_rounds, "per_frame_captions": captions}
    return _build_transcript(
        config, pack, questioner, answerer, all_turns, summary, aborted, ablation,
        strategy=FRAME_CENTRIC,
    )


def _single_frame_set(frameset: FrameSet, frame: FrameRef) -> FrameSet:
    # The mini-dialogue sees a one-frame video, so in-range parsing pins every
    # question to this frame.
    return FrameSet(
        video_id=frameset.video_id,
        n=1,
        frames=(FrameRef(1, frame.source_index, frame.image_path),),
        total_source_frames=frameset.total_source_frames,
    )


def _build_transcript(
    config: EngineConfig,
    pack: PromptPack,
    questioner,
    answerer,
    turns: list[Turn],
    summary: str | None,
    aborted: bool,
    ablation: dict | None,
    *,
    strategy: str,
) -> Transcript:
    snapshot = {
        "n_frames": config.frameset.n,
        "rounds": config.rounds,
        "strategy": strategy,
        "questioner": questioner.describe(),
        "answerer": answerer.describe(),
        "prompt_pack_hash": pack.digest(),
        "max_retries": config.max_retries,
        "max_context_chars": config.max_context_chars,
        "temperature": config.temperature,
        "max_tokens_question": config.max_tokens_question,
        "max_tokens_summary": config.max_tokens_summary,
    }
    return Transcript(
        schema_version=SCHEMA_VERSION,
        video_id=config.frameset.video_id,
        config=snapshot,
        frames=list(config.frameset.frames),
        turns=turns,
        summary=summary,
        aborted=aborted,
        ablation=ablation,
        metrics=metrics_mod.report_for_turns(turns, config.frameset.n),
    )
