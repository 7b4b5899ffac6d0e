import pytest

from chatcap.errors import PromptError
from chatcap.prompts import (
    DEFAULT_PACK,
    FIRST_QUESTION,
    TRUNCATION_MARKER,
    ChatMessage,
    PromptPack,
    question_restrictions,
    render_answer_prompt,
    render_question_context,
    render_summary_context,
)


class FakeState:
    def __init__(self, n_frames, triples):
        self.n_frames = n_frames
        self.triples = triples

    def qa_triples(self):
        return list(self.triples)


def state_with(n_turns, n_frames=9):
    triples = [
        (k % n_frames + 1, f"question number {k}", f"answer number {k}")
        for k in range(n_turns)
    ]
    return FakeState(n_frames, triples)


def test_first_question_is_fixed():
    assert DEFAULT_PACK.first_question == "Frame_1: Describe it in details."
    assert FIRST_QUESTION == "Frame_1: Describe it in details."


def test_question_context_one_turn_shape():
    messages = render_question_context(DEFAULT_PACK, state_with(1))
    assert len(messages) == 4
    assert [m.role for m in messages] == ["system", "assistant", "user", "user"]
    assert messages[1].content == "Frame_1: question number 0"
    assert messages[2].content == "Answer: answer number 0"


def test_question_context_three_turns_shape():
    messages = render_question_context(DEFAULT_PACK, state_with(3))
    assert len(messages) == 8


def test_question_context_empty_state_is_total():
    messages = render_question_context(DEFAULT_PACK, state_with(0))
    assert [m.role for m in messages] == ["system", "user"]


def test_question_context_substitutes_frame_count():
    messages = render_question_context(DEFAULT_PACK, state_with(0, n_frames=7))
    assert "7" in messages[0].content
    assert "{n_frames}" not in messages[0].content
    assert "{n_frames}" not in messages[-1].content


def test_restriction_clauses_present_verbatim():
    for n_turns in (0, 1, 5):
        messages = render_question_context(DEFAULT_PACK, state_with(n_turns))
        rendered = "\n".join(m.content for m in messages)
        for clause in question_restrictions(9):
            assert clause in rendered


def test_qa_pairs_round_trip_in_order():
    state = state_with(6)
    for render in (render_question_context, render_summary_context):
        text = "\n".join(m.content for m in render(DEFAULT_PACK, state))
        positions = []
        for frame_id, question, answer in state.qa_triples():
            line = f"Frame_{frame_id}: {question}"
            assert text.count(line) == 1
            assert text.count(f"Answer: {answer}") == 1
            positions.append(text.index(line))
        assert positions == sorted(positions)


def test_summary_context_thirty_turns():
    messages = render_summary_context(DEFAULT_PACK, state_with(30))
    assert len(messages) == 62
    assert messages[-1].content == DEFAULT_PACK.summary_prompt


def test_summary_context_keeps_do_not_know_pairs():
    state = FakeState(9, [(2, "what is behind the door", "do not know")])
    messages = render_summary_context(DEFAULT_PACK, state)
    assert any("do not know" in m.content for m in messages[1:-1])


def test_summary_context_rejects_empty_state():
    with pytest.raises(PromptError):
        render_summary_context(DEFAULT_PACK, state_with(0))


def test_answer_prompt_contains_question_and_escape_hatch():
    rendered = render_answer_prompt(DEFAULT_PACK, "What color is the hat?")
    assert "What color is the hat?" in rendered
    assert "do not know" in rendered


def test_answer_prompt_rejects_empty_question():
    with pytest.raises(PromptError):
        render_answer_prompt(DEFAULT_PACK, "")


def test_answer_prompt_passes_braces_literally():
    rendered = render_answer_prompt(DEFAULT_PACK, "what is {weird} here?")
    assert "what is {weird} here?" in rendered


def test_truncation_drops_oldest_pairs_and_marks():
    state = state_with(10)
    full = render_question_context(DEFAULT_PACK, state)
    budget = sum(len(m.content) for m in full) - 1
    messages = render_question_context(DEFAULT_PACK, state, max_context_chars=budget)
    assert messages[1].content == TRUNCATION_MARKER
    assert messages[1].role == "user"
    assert sum(len(m.content) for m in messages) <= budget
    # oldest pair dropped first, most recent retained
    text = "\n".join(m.content for m in messages)
    assert "question number 0" not in text
    assert "question number 9" in text


def test_truncation_keeps_pairs_whole():
    state = state_with(10)
    messages = render_question_context(DEFAULT_PACK, state, max_context_chars=2000)
    bodies = [m.content for m in messages]
    asked = [b for b in bodies if b.startswith("Frame_")]
    answered = [b for b in bodies if b.startswith("Answer:")]
    assert len(asked) == len(answered)


def test_untruncated_context_has_no_marker():
    messages = render_question_context(DEFAULT_PACK, state_with(3))
    assert all(m.content != TRUNCATION_MARKER for m in messages)


def test_chat_message_validation():
    with pytest.raises(PromptError):
        ChatMessage("robot", "hello")
    with pytest.raises(PromptError):
        ChatMessage("user", "")


def test_pack_digest_stable_and_content_sensitive():
    assert DEFAULT_PACK.digest() == DEFAULT_PACK.digest()
    modified = PromptPack(
        task_instruction=DEFAULT_PACK.task_instruction + " Extra.",
        first_question=DEFAULT_PACK.first_question,
        question_prompt=DEFAULT_PACK.question_prompt,
        answer_prompt=DEFAULT_PACK.answer_prompt,
        summary_prompt=DEFAULT_PACK.summary_prompt,
        repair_prompt=DEFAULT_PACK.repair_prompt,
    )
    assert modified.digest() != DEFAULT_PACK.digest()


def test_pack_file_overrides_and_inherits(tmp_path):
    pack_file = tmp_path / "pack.txt"
    pack_file.write_text(
        '# alternate wording\n'
        'summary_prompt = """Give one tight paragraph describing the video.\n'
        'Skip anything answered with "do not know"."""\n'
        '\n'
        'answer_prompt = """{question} If unsure, answer "do not know"."""\n',
        encoding="utf-8",
    )
    pack = PromptPack.from_file(pack_file)
    assert pack.summary_prompt.startswith("Give one tight paragraph")
    assert pack.answer_prompt == '{question} If unsure, answer "do not know".'
    assert pack.question_prompt == DEFAULT_PACK.question_prompt
    assert pack.first_question == FIRST_QUESTION


def test_pack_file_rejects_unknown_key(tmp_path):
    bad = tmp_path / "pack.txt"
    bad.write_text('mystery = """x"""\n', encoding="utf-8")
    with pytest.raises(PromptError, match="unknown prompt pack key"):
        PromptPack.from_file(bad)


def test_pack_file_rejects_unterminated_block(tmp_path):
    bad = tmp_path / "pack.txt"
    bad.write_text('summary_prompt = """never closed\n', encoding="utf-8")
    with pytest.raises(PromptError, match="unterminated"):
        PromptPack.from_file(bad)


@pytest.mark.parametrize(
    "field,value,complaint",
    [
        ("first_question", "Frame_1: Describe.", "first_question"),
        ("answer_prompt", "Just answer: {question}", "do not know"),
        ("answer_prompt", "If unsure say do not know.", "{question}"),
        ("question_prompt", "Ask about frames 1..{n_frames}, no yes/no, nothing unmentioned.", "Frame_ID"),
        ("repair_prompt", "Fix your format.", "frame 1"),
        ("task_instruction", "Describe a video.", "{n_frames}"),
    ],
)
def test_pack_validation_rejects_broken_fields(field, value, complaint):
    fields = {name: getattr(DEFAULT_PACK, name) for name in PromptPack.FIELDS}
    fields[field] = value
    with pytest.raises(PromptError):
        PromptPack(**fields)
