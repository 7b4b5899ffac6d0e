"""Prompt pack: templates for the questioner, answerer, and summarizer.

Templates use ``{n_frames}`` / ``{question}`` placeholders substituted by plain
string replacement, so braces inside user content pass through literally.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import PromptError

FIRST_QUESTION = "Frame_1: Describe it in details."
FALLBACK_QUESTION = "Describe it in details."
TRUNCATION_MARKER = "(earlier conversation truncated)"
DEFAULT_MAX_CONTEXT_CHARS = 32_000

# One clause per question restriction; rule wording is part of the contract.
QUESTION_RESTRICTIONS = (
    "The questions format must be Frame_ID: question.",
    "The frame ID must fall between 1 and {n_frames}.",
    "Do not ask about individuals or objects that have not been mentioned in the conversation.",
    "Do not ask yes/no questions.",
)

REPAIR_CLAUSES = (
    "You must ask questions from frame 1 to frame {n_frames}.",
    "The questions format must be Frame_ID: question.",
)

_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise PromptError(f"unknown chat role: {self.role!r}")
        if not self.content:
            raise PromptError("chat message content must be non-empty")


@dataclass(frozen=True)
class PromptPack:
    """The six prompt texts driving one dialogue."""

    task_instruction: str
    first_question: str
    question_prompt: str
    answer_prompt: str
    summary_prompt: str
    repair_prompt: str

    FIELDS = (
        "task_instruction",
        "first_question",
        "question_prompt",
        "answer_prompt",
        "summary_prompt",
        "repair_prompt",
    )

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for name in self.FIELDS:
            if not getattr(self, name).strip():
                raise PromptError(f"prompt pack field {name!r} must be non-empty")
        if self.first_question != FIRST_QUESTION:
            raise PromptError(
                f"first_question must be exactly {FIRST_QUESTION!r}"
            )
        if "{n_frames}" not in self.task_instruction:
            raise PromptError("task_instruction must contain the {n_frames} slot")
        qp = self.question_prompt
        if "{n_frames}" not in qp:
            raise PromptError("question_prompt must state the frame range via {n_frames}")
        if "Frame_ID" not in qp:
            raise PromptError("question_prompt must state the Frame_ID format restriction")
        if "mention" not in qp.lower():
            raise PromptError("question_prompt must restrict unmentioned individuals/objects")
        if "yes/no" not in qp.lower():
            raise PromptError("question_prompt must prohibit yes/no questions")
        if "{question}" not in self.answer_prompt:
            raise PromptError("answer_prompt must contain the {question} slot")
        if "do not know" not in self.answer_prompt:
            raise PromptError('answer_prompt must allow the "do not know" escape hatch')
        rp = self.repair_prompt
        if "{n_frames}" not in rp or "frame 1" not in rp.lower():
            raise PromptError("repair_prompt must restate the frame 1..{n_frames} range")
        if "Frame_ID: question" not in rp:
            raise PromptError("repair_prompt must restate the Frame_ID: question format")

    def digest(self) -> str:
        """Stable identity of the pack, recorded in transcript config."""
        payload = "\x00".join(getattr(self, name) for name in self.FIELDS)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptPack":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def from_text(cls, text: str) -> "PromptPack":
        """Parse ``key = \"\"\"multiline text\"\"\"`` blocks.

        Keys not present in the file keep the default pack's text.
        """
        values = dict(_default_fields())
        open_re = re.compile(r'^\s*(\w+)\s*=\s*"""(.*)$', re.DOTALL)
        lines = text.split("\n")
        i = 0
        while i < len(lines):
            line = lines[i]
            if not line.strip() or line.lstrip().startswith("#"):
                i += 1
                continue
            m = open_re.match(line)
            if not m:
                raise PromptError(f"unparseable prompt pack line: {line!r}")
            key, rest = m.group(1), m.group(2)
            if key not in cls.FIELDS:
                raise PromptError(f"unknown prompt pack key: {key!r}")
            if rest.endswith('"""'):
                values[key] = rest[:-3]
                i += 1
                continue
            block = [rest] if rest else []
            i += 1
            while i < len(lines) and not lines[i].endswith('"""'):
                block.append(lines[i])
                i += 1
            if i >= len(lines):
                raise PromptError(f"unterminated block for prompt pack key {key!r}")
            block.append(lines[i][:-3])
            values[key] = "\n".join(block)
            i += 1
        return cls(**values)


def fill_frames(template: str, n_frames: int) -> str:
    return template.replace("{n_frames}", str(n_frames))


def question_restrictions(n_frames: int) -> tuple[str, ...]:
    return tuple(fill_frames(clause, n_frames) for clause in QUESTION_RESTRICTIONS)


def render_answer_prompt(pack: PromptPack, question: str) -> str:
    if not question:
        raise PromptError("question must be non-empty")
    return pack.answer_prompt.replace("{question}", question)


def render_question_context(
    pack: PromptPack,
    state,
    max_context_chars: int = DEFAULT_MAX_CONTEXT_CHARS,
) -> list[ChatMessage]:
    """System instruction, the conversation so far, then the question prompt.

    ``state`` must expose ``n_frames`` and ``qa_triples()`` yielding
    ``(frame_id, question, answer)`` in chronological order.
    """
    return conversation_context(
        pack,
        state.n_frames,
        state.qa_triples(),
        fill_frames(pack.question_prompt, state.n_frames),
        max_context_chars,
    )


def render_summary_context(
    pack: PromptPack,
    state,
    max_context_chars: int = DEFAULT_MAX_CONTEXT_CHARS,
) -> list[ChatMessage]:
    """Same conversation serialization, terminated with the summary request."""
    triples = list(state.qa_triples())
    if not triples:
        raise PromptError("cannot request a summary of an empty dialogue")
    return conversation_context(
        pack, state.n_frames, triples, pack.summary_prompt, max_context_chars
    )


def conversation_context(
    pack: PromptPack,
    n_frames: int,
    triples: Iterable[tuple[int, str, str]],
    final_prompt: str,
    max_context_chars: int = DEFAULT_MAX_CONTEXT_CHARS,
) -> list[ChatMessage]:
    system = ChatMessage("system", fill_frames(pack.task_instruction, n_frames))
    tail = ChatMessage("user", final_prompt)
    pairs = [
        (
            ChatMessage("assistant", f"Frame_{frame_id}: {question}"),
            ChatMessage("user", f"Answer: {answer}"),
        )
        for frame_id, question, answer in triples
    ]

    def assemble(kept: Sequence[tuple[ChatMessage, ChatMessage]], truncated: bool):
        out = [system]
        if truncated:
            out.append(ChatMessage("user", TRUNCATION_MARKER))
        for asked, answered in kept:
            out.append(asked)
            out.append(answered)
        out.append(tail)
        return out

    kept = pairs
    truncated = False
    messages = assemble(kept, truncated)
    # Drop oldest QA pairs pairwise until the context fits; recent turns drive
    # the next question.
    while kept and sum(len(m.content) for m in messages) > max_context_chars:
        kept = kept[1:]
        truncated = True
        messages = assemble(kept, truncated)
    return messages


def _default_fields() -> dict[str, str]:
    restrictions = "\n".join(
        f"{i}. {clause}" for i, clause in enumerate(QUESTION_RESTRICTIONS, start=1)
    )
    return {
        "task_instruction": (
            "You are collecting information about a video in order to describe it.\n"
            "The video is represented by {n_frames} frames sampled at equal intervals "
            "and numbered from 1 to {n_frames} in temporal order.\n"
            "You cannot see the frames yourself. You ask questions about individual "
            "frames, and an assistant who can see the chosen frame answers each one.\n"
            "Gather as much visual detail as you can about people, objects, actions, "
            "and how the scene changes over time."
        ),
        "first_question": FIRST_QUESTION,
        "question_prompt": (
            "Considering the conversation so far, select the frame that will reveal "
            "the most new information about the video and ask one new question about it.\n"
            "Follow every rule below:\n"
            f"{restrictions}\n"
            "Reply with the single question only."
        ),
        "answer_prompt": (
            "Answer the question using only what is visible in this frame. "
            'If you are not sure about the answer, reply exactly "do not know".\n'
            "Question: {question}\n"
            "Answer:"
        ),
        "summary_prompt": (
            "Now summarize the whole video in a few sentences, based only on the "
            "conversation above.\n"
            "Describe the people, objects, actions, and how the scene develops over time.\n"
            'Leave out anything that was answered with "do not know" and anything '
            "uncertain, and do not mention frame numbers."
        ),
        "repair_prompt": (
            "Your last message was not a valid question. Remember:\n"
            f"(1) {REPAIR_CLAUSES[0]}\n"
            f"(2) {REPAIR_CLAUSES[1]}\n"
            "Ask your next question again, following these rules exactly."
        ),
    }


DEFAULT_PACK = PromptPack(**_default_fields())
