"""Command-line interface over the scoring engine.

Machine-readable JSON on stdout (canonical key order, compact separators) so
runs are byte-stable; `--pretty` re-indents for humans. Exit codes: 0 success,
1 usage error, 2 validation/schema error, 3 verifier/transport error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import PolicyError, SchemaError, TemplateError, VerifierError, VocabularyError
from .grpo import evaluate_objective, load_group
from .parsing import parse
from .rectify import DEFAULT_THRESHOLD, run_trr
from .rewards import DEFAULT_EPSILON, RewardConfig, Stage, score_transcript, stage_config
from .sim import PolicyKind, ScriptedPolicy, VerifierSet, generate_studies, run_experiment
from .studies import load_study
from .templates import bundled_template_dir, load_templates, retrieve
from .verifiers import RemoteVerifier
from .vocab import load_vocabulary

_POLICY_CHOICES = [kind.value for kind in PolicyKind]


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for validation."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _emit(payload: dict, args: argparse.Namespace) -> None:
    if getattr(args, "pretty", False):
        text = json.dumps(payload, sort_keys=True, indent=2)
    else:
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _load_templates(args: argparse.Namespace):
    vocab = load_vocabulary()
    directory = args.templates or bundled_template_dir()
    return load_templates(directory, vocab), vocab


def _verifier_set(args: argparse.Namespace) -> VerifierSet:
    spec = getattr(args, "verifier", "mock")
    if spec == "mock":
        return VerifierSet.mock()
    return VerifierSet.remote(RemoteVerifier(spec))


def _stage(args: argparse.Namespace) -> Stage:
    return Stage.STAGE1 if args.stage == "1" else Stage.STAGE2


def _pick_template(templates, template_id, query, embedder):
    if template_id:
        by_id = {t.id: t for t in templates}
        if template_id not in by_id:
            raise SchemaError(f"unknown template id {template_id!r}")
        return by_id[template_id]
    if not query:
        raise SchemaError("study has no query; pass --template-id")
    chosen = retrieve(query, templates, embedder).template_id
    return next(t for t in templates if t.id == chosen)


def cmd_crt_validate(args: argparse.Namespace) -> int:
    templates, _ = _load_templates(args)
    _emit(
        {
            "status": "ok",
            "count": len(templates),
            "templates": [{"id": t.id, "name": t.name, "steps": t.step_count} for t in templates],
        },
        args,
    )
    return 0


def cmd_crt_retrieve(args: argparse.Namespace) -> int:
    templates, _ = _load_templates(args)
    result = retrieve(args.query, templates, _verifier_set(args).embedder)
    _emit(
        {
            "query": args.query,
            "template_id": result.template_id,
            "similarity": result.similarity,
            "ranked_rest": [
                {"template_id": r.template_id, "similarity": r.similarity}
                for r in result.ranked_rest
            ],
        },
        args,
    )
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    templates, vocab = _load_templates(args)
    verifiers = _verifier_set(args)
    study = load_study(args.study)
    template = _pick_template(templates, args.template_id, study.query, verifiers.embedder)
    transcript = parse(Path(args.transcript).read_text(encoding="utf-8"), vocab)
    config = RewardConfig.for_stage(
        _stage(args), epsilon=args.epsilon, on_verifier_error=args.on_verifier_error
    )
    breakdown = score_transcript(
        transcript, template, study, verifiers.judge, verifiers.scorer, config
    )
    _emit({"template_id": template.id, "rewards": breakdown.to_dict()}, args)
    return 0


def cmd_grpo_eval(args: argparse.Namespace) -> int:
    group = load_group(args.group)
    _emit(evaluate_objective(group).to_dict(), args)
    return 0


def cmd_stage_config(args: argparse.Namespace) -> int:
    _emit(stage_config(_stage(args)).to_dict(), args)
    return 0


def cmd_trr(args: argparse.Namespace) -> int:
    templates, vocab = _load_templates(args)
    verifiers = _verifier_set(args)
    study = load_study(args.study)
    template = _pick_template(templates, args.template_id, study.query, verifiers.embedder)
    policy = ScriptedPolicy(kind=PolicyKind(args.policy), seed=args.seed)
    trace = run_trr(
        study,
        template,
        verifiers.judge,
        policy,
        args.threshold,
        view_vocab=vocab,
        on_verifier_error=args.on_verifier_error,
    )
    _emit({"template_id": template.id, "trace": trace.to_dict()}, args)
    return 0


def cmd_sim_run(args: argparse.Namespace) -> int:
    templates, vocab = _load_templates(args)
    verifiers = _verifier_set(args)
    studies = generate_studies(args.seed, args.cases, templates)
    policy = ScriptedPolicy(kind=PolicyKind(args.policy), seed=args.seed, epsilon=args.epsilon)
    report = run_experiment(
        studies,
        templates,
        policy,
        verifiers,
        stage=_stage(args),
        threshold=args.threshold,
        enable_trr=args.trr,
        epsilon=args.epsilon,
        on_verifier_error=args.on_verifier_error,
        view_vocab=vocab,
    )
    _emit(report.to_dict(), args)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(args.templates), host=args.host, port=args.port)
    return 0


def _add_common(parser: argparse.ArgumentParser, *, verifier: bool = True) -> None:
    parser.add_argument("--templates", help="template directory (default: bundled exemplars)")
    parser.add_argument("--pretty", action="store_true", help="indent JSON output")
    parser.add_argument("--out", help="write JSON to this file instead of stdout")
    if verifier:
        parser.add_argument(
            "--verifier",
            default="mock",
            help="'mock' or the base URL of a verifier service",
        )
        parser.add_argument(
            "--on-verifier-error",
            choices=["fail", "zero"],
            default="fail",
            help="propagate verifier failures or score them as 0",
        )


def _add_scoring_knobs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--stage", choices=["1", "2"], default="2", help="weight schedule stage")
    parser.add_argument(
        "--epsilon", type=int, default=DEFAULT_EPSILON, help="verbosity slack in steps"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="echoreason", description=__doc__)
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    crt = subparsers.add_parser("crt", help="template library operations")
    crt_sub = crt.add_subparsers(dest="crt_command", required=True, parser_class=_Parser)

    validate = crt_sub.add_parser("validate", help="load and schema-check a template directory")
    _add_common(validate, verifier=False)
    validate.set_defaults(func=cmd_crt_validate)

    retrieve_p = crt_sub.add_parser("retrieve", help="rank templates against a disease query")
    retrieve_p.add_argument("query")
    _add_common(retrieve_p)
    retrieve_p.set_defaults(func=cmd_crt_retrieve)

    score = subparsers.add_parser("score", help="score a transcript against a study")
    score.add_argument("--study", required=True, help="study JSON file")
    score.add_argument("--transcript", required=True, help="raw transcript text file")
    score.add_argument("--template-id", help="skip retrieval and use this template")
    _add_scoring_knobs(score)
    _add_common(score)
    score.set_defaults(func=cmd_score)

    grpo = subparsers.add_parser("grpo-eval", help="evaluate a rollout group file")
    grpo.add_argument("group", help="rollout group JSON file")
    grpo.add_argument("--pretty", action="store_true", help="indent JSON output")
    grpo.add_argument("--out", help="write JSON to this file instead of stdout")
    grpo.set_defaults(func=cmd_grpo_eval)

    stage = subparsers.add_parser("stage-config", help="print a stage's weight schedule")
    stage.add_argument("--stage", choices=["1", "2"], default="2")
    stage.add_argument("--pretty", action="store_true", help="indent JSON output")
    stage.add_argument("--out", help="write JSON to this file instead of stdout")
    stage.set_defaults(func=cmd_stage_config)

    trr = subparsers.add_parser("trr", help="run rectification for one study")
    trr.add_argument("--study", required=True, help="study JSON file")
    trr.add_argument("--policy", choices=_POLICY_CHOICES, required=True)
    trr.add_argument("--template-id", help="skip retrieval and use this template")
    trr.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    trr.add_argument("--seed", type=int, default=0, help="policy seed")
    _add_common(trr)
    trr.set_defaults(func=cmd_trr)

    sim = subparsers.add_parser("sim", help="synthetic experiments")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True, parser_class=_Parser)
    run = sim_sub.add_parser("run", help="generate studies and score them end to end")
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--cases", type=int, default=50)
    run.add_argument("--policy", choices=_POLICY_CHOICES, default="faithful")
    run.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    run.add_argument("--trr", action="store_true", help="run rectification per case")
    _add_scoring_knobs(run)
    _add_common(run)
    run.set_defaults(func=cmd_sim_run)

    serve = subparsers.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--templates", help="template directory (default: bundled exemplars)")
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, TemplateError, VocabularyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (VerifierError, PolicyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
