"""Staged chat prompts: task instruction, demonstrations, quiz, extraction query."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import AnnotatedSentence, Sentence, load_jsonl
from .parsing import format_triplet

ROLES = ("system", "user", "assistant")
DEMO_MODES = ("none", "fixed", "selected")
QUERY_PREFIX = "Identify as many combinations as possible in the following sentence: "
CORRECTION_PREFIX = "Correct answers:"
QUIZ_HEADER = ("Quiz: extract the triplets from each of the following sentences. "
               "Use the same output format.")
DEMO_HEADER = "Here are some example sentences with their triplets."


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise PromptError(f"unknown role {self.role!r}")
        if not self.content:
            raise PromptError("message content must be non-empty")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class Transcript:
    """Ordered chat messages.

    ``quiz_at`` is set while a quiz is pending: the first ``quiz_at`` messages form
    the quiz turn, and ``quiz_correction`` is the user message to send after the
    model's quiz answer.
    """

    messages: tuple[ChatMessage, ...] = ()
    quiz_at: int | None = None
    quiz_correction: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))

    @property
    def awaiting_quiz_answer(self) -> bool:
        return self.quiz_at is not None

    def __len__(self) -> int:
        return len(self.messages)

    def append(self, *messages: ChatMessage) -> "Transcript":
        return replace(self, messages=self.messages + tuple(messages))

    def roles(self) -> list[str]:
        return [m.role for m in self.messages]


@dataclass(frozen=True)
class PromptConfig:
    instruction_text: str
    quiz: tuple[AnnotatedSentence, ...] = ()
    demo_count: int = 3
    demo_mode: str = "none"
    fixed_demos: tuple[AnnotatedSentence, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.demo_mode not in DEMO_MODES:
            raise PromptError(f"demo_mode must be one of {DEMO_MODES}, got {self.demo_mode!r}")
        if self.demo_count < 0:
            raise PromptError("demo_count must be non-negative")
        object.__setattr__(self, "quiz", tuple(self.quiz))
        object.__setattr__(self, "fixed_demos", tuple(self.fixed_demos))


def render_demonstration(a: AnnotatedSentence) -> str:
    if not a.gold:
        raise PromptError(f"sentence {a.id!r} has no gold triplets to demonstrate")
    lines = [f"Sentence: {a.text}", "Triplets:"]
    lines += [format_triplet(t, i) for i, t in enumerate(a.gold, start=1)]
    return "\n".join(lines)


def extraction_query(target: Sentence) -> ChatMessage:
    return ChatMessage("user", QUERY_PREFIX + target.text)


def query_target(message: ChatMessage) -> str | None:
    """Inverse of :func:`extraction_query`; ``None`` for any other message."""
    if message.role == "user" and message.content.startswith(QUERY_PREFIX):
        return message.content[len(QUERY_PREFIX):]
    return None


def build_preamble(config: PromptConfig, demos: Sequence[AnnotatedSentence] = ()) -> Transcript:
    demos = list(demos)
    if config.demo_mode == "none" and demos:
        raise PromptError("demo_mode 'none' takes no demonstrations")
    messages = [ChatMessage("system", config.instruction_text)]
    if demos:
        blocks = [render_demonstration(d) for d in demos]
        messages.append(ChatMessage("user", DEMO_HEADER + "\n\n" + "\n\n".join(blocks)))
    if not config.quiz:
        return Transcript(tuple(messages))

    for q in config.quiz:
        if not q.gold:
            raise PromptError(f"quiz sentence {q.id!r} has no gold answer")
    quiz_lines = [f"{i}. {q.text}" for i, q in enumerate(config.quiz, start=1)]
    messages.append(ChatMessage("user", QUIZ_HEADER + "\n" + "\n".join(quiz_lines)))
    correction = CORRECTION_PREFIX + "\n\n" + "\n\n".join(render_demonstration(q) for q in config.quiz)
    return Transcript(tuple(messages), quiz_at=len(messages), quiz_correction=correction)


@dataclass(frozen=True)
class PromptAssets:
    instruction_text: str
    quiz: tuple[AnnotatedSentence, ...]
    fixed_demos: tuple[AnnotatedSentence, ...]


def load_assets(directory: str | Path | None = None) -> PromptAssets:
    """Read ``instruction.txt``, ``quiz.jsonl`` and ``fixed_demos.jsonl``.

    Files missing from ``directory`` fall back to the packaged defaults.
    """
    packaged = resources.files("fewshot_oie") / "assets"

    def pick(name):
        if directory is not None and (Path(directory) / name).exists():
            return Path(directory) / name
        return packaged / name

    with resources.as_file(pick("instruction.txt")) as p:
        instruction = Path(p).read_text(encoding="utf-8").strip()
    with resources.as_file(pick("quiz.jsonl")) as p:
        quiz = tuple(load_jsonl(p))
    with resources.as_file(pick("fixed_demos.jsonl")) as p:
        fixed = tuple(load_jsonl(p))
    return PromptAssets(instruction, quiz, fixed)


def make_config(assets: PromptAssets, demo_mode: str, demo_count: int = 3, quiz: bool = True,
                quiz_items: Iterable[AnnotatedSentence] | None = None) -> PromptConfig:
    items = tuple(quiz_items) if quiz_items is not None else assets.quiz
    return PromptConfig(
        instruction_text=assets.instruction_text,
        quiz=items if quiz else (),
        demo_count=demo_count,
        demo_mode=demo_mode,
        fixed_demos=assets.fixed_demos,
    )
