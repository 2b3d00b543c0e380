"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import yaml

from appealgate.config import AppConfig, ConfigError, load_config

log = logging.getLogger("appealgate")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flags or inputs the user must fix; maps to exit code 2."""


def _out(text: str = "") -> None:
    print(text)


def cmd_simulate(args, cfg: AppConfig) -> int:
    from appealgate.simulator import generate_population, run_simulation

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.n_users is not None:
        overrides["n_users"] = args.n_users
    try:
        behavior = cfg.behavior_config(**overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pop = generate_population(behavior)
    result = run_simulation(pop, scorer=cfg.scorer(), templates=cfg.templates.templates())
    out = Path(args.out or cfg.paths.log)
    result.log.write_jsonl(out)

    records = list(result.runtime.engine.records.values())
    trt = [r for r in records if r.group.value == "treatment" and not r.bypassed]
    done = sum(r.completed_at is not None for r in trt)
    granted = sum(r.decision is not None and r.decision.value == "granted" for r in records)
    _out(f"users            {len(pop)}")
    _out(f"appeals          {len(records)}")
    _out(f"control          {sum(r.group.value == 'control' for r in records)}")
    _out(f"treatment        {sum(r.group.value == 'treatment' for r in records)}")
    if trt:
        _out(f"forms completed  {done} ({100 * done / len(trt):.1f}% of treatment)")
    _out(f"granted          {granted} ({100 * granted / max(len(records), 1):.1f}%)")
    _out(f"events           {len(result.log)}")
    _out(f"log written to {out}")
    return EXIT_OK


def cmd_report(args, cfg: AppConfig) -> int:
    from appealgate.experiment.eventlog import EventLog
    from appealgate.experiment.report import build_report, to_markdown, write_report
    from appealgate.pps import LogisticModel

    threshold = args.threshold if args.threshold is not None else cfg.toxicity.threshold
    if not 0.0 < threshold < 1.0:
        raise UsageError("--threshold must lie strictly between 0 and 1")
    path = Path(args.log or cfg.paths.log)
    if not path.is_file():
        raise UsageError(f"log file not found: {path}")
    events = EventLog.read_jsonl(path)
    model_path = args.model or cfg.paths.model
    model = LogisticModel.load(model_path) if model_path else None
    report = build_report(events, threshold, model, scorer=cfg.scorer())
    out_dir = Path(args.out or cfg.paths.report_dir)
    written = write_report(report, out_dir)
    _out(to_markdown(report))
    _out(f"wrote {len(written)} files to {out_dir}")
    return EXIT_OK


def cmd_train_pps(args, cfg: AppConfig) -> int:
    from appealgate.pps import CorpusError, build_vocabulary, cross_validate, read_corpus, train, transform

    p = cfg.pps
    if not Path(args.corpus).is_file():
        raise UsageError(f"corpus not found: {args.corpus}")
    try:
        texts, labels = read_corpus(args.corpus)
    except CorpusError as exc:
        raise UsageError(f"corpus schema error: {exc}") from None
    vocab = build_vocabulary(texts, p.min_df)
    X = transform(texts, vocab)
    seed = args.seed if args.seed is not None else p.seed
    cv = cross_validate(X, labels, p.folds, l2=p.l2, seed=seed, threshold=p.threshold)
    model = train(X, labels, p.l2, vocabulary=vocab, min_df=p.min_df)
    out = Path(args.out or cfg.paths.model or "pps-model.json")
    model.save(out)
    _out(f"documents   {len(texts)} ({int(labels.sum())} positive)")
    _out(f"vocabulary  {len(vocab)}")
    for i, (neg, pos) in enumerate(cv.folds, 1):
        _out(f"fold {i}      F(0)={neg.f1:.3f} F(1)={pos.f1:.3f}")
    _out(f"macro F     {cv.macro_f:.4f}")
    _out(f"model written to {out}")
    return EXIT_OK


def cmd_score(args, cfg: AppConfig) -> int:
    from appealgate.toxicity import classify

    threshold = args.threshold if args.threshold is not None else cfg.toxicity.threshold
    if args.file:
        texts = [t for t in Path(args.file).read_text(encoding="utf-8").splitlines() if t.strip()]
    elif args.text:
        texts = [args.text]
    else:
        raise UsageError("give a text argument or --file")
    scorer = cfg.scorer()
    for text in texts:
        s = scorer.score(text)
        label = "toxic" if classify(s, threshold) else "ok"
        _out(f"{s:.4f}\t{label}\t{text}")
    return EXIT_OK


def _read_steps(path: Path) -> list[dict]:
    raw = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        steps = [json.loads(line) for line in raw.splitlines() if line.strip()]
    else:
        steps = yaml.safe_load(raw)  # JSON is valid YAML
    if isinstance(steps, dict):
        steps = steps.get("steps")
    if not isinstance(steps, list) or not all(isinstance(s, dict) for s in steps):
        raise UsageError(f"{path}: expected a list of step mappings")
    return steps


def cmd_run_bot(args, cfg: AppConfig) -> int:
    from appealgate.audit import audit_log
    from appealgate.runtime import AppealBot, Runtime, run_script

    path = Path(args.script)
    if not path.is_file():
        raise UsageError(f"script not found: {path}")
    steps = _read_steps(path)
    seed = args.seed if args.seed is not None else cfg.experiment.seed
    rt = Runtime(seed=seed, ratio=cfg.experiment.ratio, templates=cfg.templates.templates(),
                 definition=cfg.form_definition())
    bot = AppealBot(rt, scorer=cfg.scorer())
    for tr in run_script(rt, bot, steps):
        state = tr.record.state.value if tr.record is not None else (tr.previous.value if tr.previous else "-")
        _out(f"{tr.cause:<12} {state:<24} " + ", ".join(a.kind.value for a in tr.actions))
    if args.out:
        rt.log.write_jsonl(args.out)
        _out(f"log written to {args.out}")
    violations = audit_log(rt.log)
    for v in violations:
        _out(f"violation: {v.kind} at seq {v.seq}: {v.detail}")
    return EXIT_FAILURE if violations else EXIT_OK


def cmd_fixture(args, cfg: AppConfig) -> int:
    from appealgate.fixtures import reference_log

    events = reference_log()
    events.write_jsonl(args.out)
    _out(f"{len(events)} events written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="appealgate", description="Appeal triage bot and experiment tooling.")
    parser.add_argument("--config", help="YAML config file (defaults apply when omitted)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the behavioral simulator and write an event log")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-users", type=int)
    p.add_argument("--out", help="event log path (JSONL)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="compute the hypothesis report from an event log")
    p.add_argument("--log")
    p.add_argument("--threshold", type=float)
    p.add_argument("--model", help="PPS model file for records without a PPS")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("train-pps", help="train the PPS classifier on a CSV corpus")
    p.add_argument("corpus")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="model file path")
    p.set_defaults(func=cmd_train_pps)

    p = sub.add_parser("score", help="score text with the configured toxicity backend")
    p.add_argument("text", nargs="?")
    p.add_argument("--file", help="score each non-empty line of a file")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("run-bot", help="drive the bot over a scripted list of platform events")
    p.add_argument("--script", required=True, help="YAML, JSON or JSONL list of steps")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the resulting event log here")
    p.set_defaults(func=cmd_run_bot)

    p = sub.add_parser("fixture", help="write the reference event log")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        log.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
