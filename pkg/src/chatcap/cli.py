"""Command-line entry point: run dialogues, score transcripts, manage ballots.

Exit codes: 0 success, 1 dialogue aborted (partial transcript written),
2 configuration or input error. stdout carries machine-readable output only;
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

from . import backends, engine, metrics
from .errors import ChatCapError, ConfigError
from .frames import DEFAULT_DECODER_CMD, load_frameset
from .prompts import DEFAULT_MAX_CONTEXT_CHARS, DEFAULT_PACK, PromptPack

ENV_API_KEY = "CHATCAP_API_KEY"
ENV_QUESTIONER_URL = "CHATCAP_QUESTIONER_URL"
ENV_ANSWERER_URL = "CHATCAP_ANSWERER_URL"

MODES = ("live", "replay", "record")

_DEFAULTS = {
    "n_frames": 9,
    "rounds": 30,
    "strategy": engine.VIDEO_CENTRIC,
    "mode": "live",
    "model": "gpt-3.5-turbo",
    "timeout": 60.0,
    "max_retries": 3,
    "max_context_chars": DEFAULT_MAX_CONTEXT_CHARS,
    "temperature": 0.6,
    "max_tokens_question": 128,
    "max_tokens_summary": 256,
    "decoder_cmd": DEFAULT_DECODER_CMD,
    "seed": 0,
}

_INT_KEYS = {"n_frames", "rounds", "max_retries", "max_context_chars",
             "max_tokens_question", "max_tokens_summary", "seed"}
_FLOAT_KEYS = {"timeout", "temperature"}


@dataclass
class RunConfig:
    input: str
    out: str
    n_frames: int
    rounds: int
    strategy: str
    mode: str
    script: str | None
    prompt_pack: str | None
    questioner_url: str | None
    answerer_url: str | None
    model: str
    api_key: str
    timeout: float
    max_retries: int
    max_context_chars: int
    temperature: float
    max_tokens_question: int
    max_tokens_summary: int
    decoder_cmd: str
    workdir: str | None
    seed: int

    def validate(self) -> None:
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.n_frames < 1:
            raise ConfigError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.strategy not in engine.STRATEGIES:
            raise ConfigError(f"unknown strategy: {self.strategy!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode: {self.mode!r}")
        if self.mode in ("replay", "record") and not self.script:
            raise ConfigError(f"--mode {self.mode} requires a --script path")


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ChatCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chatcap",
        description="Enriched video captions from a questioner/answerer dialogue.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one dialogue over a video or frame directory")
    run.add_argument("--input", required=True, help="video file or image directory")
    run.add_argument("--out", required=True, help="transcript JSON output path")
    run.add_argument("--config", help="key=value config file")
    run.add_argument("--n-frames", type=int, dest="n_frames")
    run.add_argument("--rounds", type=int)
    run.add_argument("--strategy", choices=engine.STRATEGIES)
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--script", help="script file for replay/record")
    run.add_argument("--replay", metavar="SCRIPT",
                     help="shorthand for --mode replay --script SCRIPT")
    run.add_argument("--record", metavar="SCRIPT",
                     help="shorthand for --mode record --script SCRIPT")
    run.add_argument("--prompt-pack", dest="prompt_pack", help="prompt pack file")
    run.add_argument("--questioner-url", dest="questioner_url")
    run.add_argument("--answerer-url", dest="answerer_url")
    run.add_argument("--model")
    run.add_argument("--api-key", dest="api_key")
    run.add_argument("--timeout", type=float)
    run.add_argument("--max-retries", type=int, dest="max_retries")
    run.add_argument("--max-context-chars", type=int, dest="max_context_chars")
    run.add_argument("--temperature", type=float)
    run.add_argument("--video-id", dest="video_id", help="override the transcript video id")
    run.add_argument("--workdir", help="frame extraction directory for video input")
    run.add_argument("--decoder-cmd", dest="decoder_cmd",
                     help="video decoder template with {input} and {outdir}")
    run.add_argument("--seed", type=int, help="reserved; the dialogue loop is deterministic")
    run.set_defaults(func=cmd_run)

    met = sub.add_parser("metrics", help="aggregate uniqueness/coverage over transcripts")
    met.add_argument("transcripts", nargs="+", help="transcript JSON files")
    met.set_defaults(func=cmd_metrics)

    bal = sub.add_parser("ballots", help="export pairwise caption ballots as CSV")
    bal.add_argument("--pairs", required=True,
                     help='JSON list of {"reference","generated","corpus"?}')
    bal.add_argument("--out", required=True, help="ballot CSV output path")
    bal.add_argument("--key", required=True, help="assignment key JSON output path")
    bal.add_argument("--seed", type=int, default=0)
    bal.set_defaults(func=cmd_ballots)

    tal = sub.add_parser("tally", help="aggregate majority votes against a key file")
    tal.add_argument("--votes", required=True,
                     help="CSV: item_id,vote_1..vote_5 (votes are 'a' or 'b')")
    tal.add_argument("--key", required=True, help="key JSON from 'ballots'")
    tal.set_defaults(func=cmd_tally)

    return parser


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _coerce(key: str, value):
    if isinstance(value, str):
        try:
            if key in _INT_KEYS:
                return int(value)
            if key in _FLOAT_KEYS:
                return float(value)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r} has non-numeric value {value!r}") from exc
    return value


def _resolve_run_config(args: argparse.Namespace) -> RunConfig:
    """Precedence: CLI flags > environment > config file > defaults."""
    file_values = _read_config_file(args.config) if args.config else {}
    env_values = {
        "api_key": os.environ.get(ENV_API_KEY),
        "questioner_url": os.environ.get(ENV_QUESTIONER_URL),
        "answerer_url": os.environ.get(ENV_ANSWERER_URL),
    }

    def pick(key: str, default=None):
        cli = getattr(args, key, None)
        if cli is not None:
            return cli
        env = env_values.get(key)
        if env is not None:
            return env
        if key in file_values:
            return _coerce(key, file_values[key])
        return _DEFAULTS.get(key, default)

    mode = pick("mode")
    script = pick("script")
    if args.replay:
        mode, script = "replay", args.replay
    if args.record:
        if args.replay:
            raise ConfigError("--replay and --record are mutually exclusive")
        mode, script = "record", args.record

    config = RunConfig(
        input=args.input,
        out=args.out,
        n_frames=pick("n_frames"),
        rounds=pick("rounds"),
        strategy=pick("strategy"),
        mode=mode,
        script=script,
        prompt_pack=pick("prompt_pack"),
        questioner_url=pick("questioner_url"),
        answerer_url=pick("answerer_url"),
        model=pick("model"),
        api_key=pick("api_key") or "",
        timeout=pick("timeout"),
        max_retries=pick("max_retries"),
        max_context_chars=pick("max_context_chars"),
        temperature=pick("temperature"),
        max_tokens_question=pick("max_tokens_question"),
        max_tokens_summary=pick("max_tokens_summary"),
        decoder_cmd=pick("decoder_cmd"),
        workdir=pick("workdir"),
        seed=pick("seed"),
    )
    config.validate()
    return config


def _build_backends(config: RunConfig):
    """Wire questioner/answerer per mode.

    In replay mode, roles present in the script are replayed; roles absent
    fall back to live endpoints, so a replayed questioner can drive a live
    answerer service.
    """
    record_script: dict[str, list[str]] | None = None

    def live_questioner() -> backends.ChatBackend:
        if not config.questioner_url:
            raise ConfigError(
                f"questioner endpoint required: set --questioner-url or {ENV_QUESTIONER_URL}"
            )
        endpoint = backends.ChatEndpoint(
            base_url=config.questioner_url,
            model_name=config.model,
            api_key=config.api_key,
            timeout=config.timeout,
            temperature=config.temperature,
            max_tokens=config.max_tokens_question,
        )
        return backends.ChatBackend(endpoint, summary_max_tokens=config.max_tokens_summary)

    def live_answerer() -> backends.VqaBackend:
        if not config.answerer_url:
            raise ConfigError(
                f"answerer endpoint required: set --answerer-url or {ENV_ANSWERER_URL}"
            )
        return backends.VqaBackend(
            backends.VqaEndpoint(base_url=config.answerer_url, timeout=config.timeout)
        )

    if config.mode == "replay":
        script = backends.load_script(config.script)
        if script["questioner"] or script["summary"]:
            questioner = backends.ScriptedQuestioner(script["questioner"], script["summary"])
        else:
            questioner = live_questioner()
        if script["answerer"]:
            answerer = backends.ScriptedAnswerer(script["answerer"])
        else:
            answerer = live_answerer()
    elif config.mode == "record":
        record_script = backends.new_script()
        questioner = backends.RecordingQuestioner(live_questioner(), record_script)
        answerer = backends.RecordingAnswerer(live_answerer(), record_script)
    else:
        questioner = live_questioner()
        answerer = live_answerer()
    return questioner, answerer, record_script


def cmd_run(args: argparse.Namespace) -> int:
    config = _resolve_run_config(args)
    workdir = config.workdir
    if workdir is None and Path(config.input).is_file():
        workdir = tempfile.mkdtemp(prefix="chatcap_frames_")
    frameset = load_frameset(
        config.input,
        config.n_frames,
        video_id=args.video_id,
        workdir=workdir,
        decoder_cmd=config.decoder_cmd,
    )
    pack = PromptPack.from_file(config.prompt_pack) if config.prompt_pack else DEFAULT_PACK
    questioner, answerer, record_script = _build_backends(config)

    engine_config = engine.EngineConfig(
        frameset=frameset,
        rounds=config.rounds,
        strategy=config.strategy,
        max_retries=config.max_retries,
        max_context_chars=config.max_context_chars,
        temperature=config.temperature,
        max_tokens_question=config.max_tokens_question,
        max_tokens_summary=config.max_tokens_summary,
    )
    if config.strategy == engine.FRAME_CENTRIC:
        transcript = engine.run_frame_centric(engine_config, pack, questioner, answerer)
    else:
        transcript = engine.run_dialogue(engine_config, pack, questioner, answerer)

    transcript.write(config.out)
    print(f"wrote transcript to {config.out}", file=sys.stderr)
    if record_script is not None:
        backends.save_script(config.script, record_script)
        print(f"recorded script to {config.script}", file=sys.stderr)
    if transcript.aborted:
        print("dialogue aborted; transcript is partial", file=sys.stderr)
        return 1
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    transcripts = []
    for path in args.transcripts:
        try:
            transcripts.append(engine.Transcript.read(path))
        except OSError as exc:
            raise ConfigError(f"cannot read transcript {path}: {exc}") from exc
    per_dialogue, corpus = metrics.uniqueness(transcripts)
    avg_unique = sum(u for u, _ in per_dialogue) / len(per_dialogue)
    avg_counted = sum(c for _, c in per_dialogue) / len(per_dialogue)
    yes_no_total = sum(t.metrics.get("yes_no_count", 0) for t in transcripts)
    report = {
        "transcripts": len(transcripts),
        "per_dialogue": [
            {
                "video_id": t.video_id,
                "unique": u,
                "counted": c,
                "ratio": u / c if c else 1.0,
            }
            for t, (u, c) in zip(transcripts, per_dialogue)
        ],
        "average_unique": avg_unique,
        "average_counted": avg_counted,
        "per_dialogue_percent": metrics.whole_percent(avg_unique, avg_counted),
        "corpus": {
            "unique": corpus[0],
            "counted": corpus[1],
            "ratio": corpus[0] / corpus[1] if corpus[1] else 1.0,
            "percent": metrics.whole_percent(corpus[0], corpus[1]),
        },
        "yes_no_total": yes_no_total,
    }
    print(json.dumps(report, ensure_ascii=False, indent=2))
    return 0


def cmd_ballots(args: argparse.Namespace) -> int:
    try:
        payload = json.loads(Path(args.pairs).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read pairs file {args.pairs}: {exc}") from exc
    if not isinstance(payload, list) or not payload:
        raise ConfigError("pairs file must hold a non-empty JSON list")
    pairs = []
    for item in payload:
        try:
            pairs.append(
                (item["reference"], item["generated"], item.get("corpus", "default"))
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"pairs entries need reference/generated fields: {exc}") from exc
    ballots = metrics.export_ballots(pairs, args.seed)
    Path(args.out).write_text(metrics.ballots_csv(ballots), encoding="utf-8")
    Path(args.key).write_text(
        json.dumps(metrics.ballots_key(ballots), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"wrote {len(ballots)} ballots to {args.out} (key: {args.key})", file=sys.stderr)
    return 0


def cmd_tally(args: argparse.Namespace) -> int:
    try:
        key_payload = json.loads(Path(args.key).read_text(encoding="utf-8"))
        items = key_payload["items"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read key file {args.key}: {exc}") from exc
    ballots = []
    try:
        with open(args.votes, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None or header[0] != "item_id":
                raise ConfigError("votes CSV must start with an item_id header row")
            for row in reader:
                if not row:
                    continue
                item_id, votes = row[0], tuple(row[1:])
                if item_id not in items:
                    raise ConfigError(f"vote row for unknown item {item_id!r}")
                entry = items[item_id]
                ballots.append(
                    metrics.Ballot(
                        item_id=item_id,
                        caption_a="",
                        caption_b="",
                        generated=entry["generated"],
                        corpus=entry.get("corpus", "default"),
                        votes=votes,
                    )
                )
    except OSError as exc:
        raise ConfigError(f"cannot read votes file {args.votes}: {exc}") from exc
    table = metrics.aggregate_votes(ballots)
    print(json.dumps(table, ensure_ascii=False, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
