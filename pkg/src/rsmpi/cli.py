"""Command-line entry point: ``rsmpi {generate,validate,solve,brute,eval,rerun}``.

Exit codes: 0 success, 2 input error, 3 non-convergence, 4 size cap.

Every command except ``validate`` and ``rerun`` writes a JSON manifest holding
the argv it ran with. ``rsmpi rerun MANIFEST`` replays it; ``--out-dir`` sends
the regenerated files elsewhere so they can be compared with the originals.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
from pathlib import Path
from typing import Callable

from . import __version__
from .approx import ApproxConfig, check_approx_sandwich, run_approx_mpi
from .errors import ConvergenceError, DiagnosticUnavailable, DomainError, ParameterError, SizeCapError
from .io import format_float, load_model, save_model, trace_csv
from .model import (
    MdpModel,
    RiskParams,
    check_policy,
    format_policy,
    generate_random,
    parse_policy,
    validate_model,
)
from .mpi import MpiConfig, check_sandwich, run_mpi
from .oracles import brute_force_optimal, evaluate_policy
from .transform import invert_cost, positivity_horizon, transform

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3
EXIT_SIZE_CAP = 4
EXIT_MISMATCH = 1

# option dests that name files a command writes; rerun --out-dir relocates them
OUTPUT_DESTS = ("out", "trace_out", "report")


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_text(path: str | Path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror or exc}") from None


def _load_valid(path: str) -> MdpModel:
    try:
        model = load_model(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    report = validate_model(model)
    if not report.ok:
        raise InputError("invalid model " + path + ":\n" + "\n".join(f"  {v}" for v in report))
    return model


def _params(ns) -> RiskParams:
    return RiskParams(ns.alpha, ns.kappa)


def _schedule(text: str):
    try:
        parts = [int(x) for x in text.split(",")]
    except ValueError:
        raise InputError(f"--m expects an integer or a comma list such as 1,20; got {text!r}") from None
    return parts[0] if len(parts) == 1 else tuple(parts)


# --------------------------------------------------------------------------
# manifests

def _manifest(ns, command: str, model_path: str | None, outputs: list[str],
              params: RiskParams | None = None, config: dict | None = None) -> dict:
    return {
        "command": command,
        "argv": ns._argv,
        "model_path": str(Path(model_path).resolve()) if model_path else None,
        "params": {"alpha": params.alpha, "kappa": params.kappa} if params else None,
        "config": config,
        "seed": getattr(ns, "seed", None),
        "tool_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "outputs": {str(Path(p).resolve()): _sha256(Path(p)) for p in outputs},
    }


def _write_manifest(ns, default: str, body: dict) -> None:
    path = ns.manifest or default
    _write_text(path, json.dumps(body, indent=2, sort_keys=True) + "\n")


def _maybe_report(ns, text: str) -> list[str]:
    print(text, end="")
    if getattr(ns, "report", None):
        _write_text(ns.report, text)
        return [ns.report]
    return []


# --------------------------------------------------------------------------
# commands

def cmd_generate(ns) -> int:
    if ns.n_states < 1 or ns.n_actions < 1:
        raise InputError("--n-states and --n-actions must be >= 1")
    model = generate_random(ns.seed, ns.n_states, ns.n_actions, (ns.cost_lo, ns.cost_hi), ns.epsilon_mix)
    try:
        save_model(model, ns.out)
    except OSError as exc:
        raise InputError(f"cannot write {ns.out}: {exc.strerror or exc}") from None
    print(f"wrote {ns.n_states}-state {ns.n_actions}-action model to {ns.out}")
    _write_manifest(ns, ns.out + ".manifest.json", _manifest(ns, "generate", ns.out, [ns.out]))
    return EXIT_OK


def cmd_validate(ns) -> int:
    try:
        model = load_model(ns.model)
    except OSError as exc:
        raise InputError(f"cannot read {ns.model}: {exc.strerror or exc}") from None
    report = validate_model(model)
    if report.ok:
        print(f"{ns.model}: ok ({model.n_states} states, {model.n_actions} actions)")
        return EXIT_OK
    for v in report:
        print(v)
    return EXIT_INPUT


def cmd_solve(ns) -> int:
    model = _load_valid(ns.model)
    params = _params(ns)
    config = MpiConfig(_schedule(ns.m), None, ns.tol, ns.max_outer, "lowest", ns.diagnostics)
    tmdp = transform(model, params)
    approx = ns.mode == "approx"
    if approx:
        acfg = ApproxConfig(ns.epsilon, ns.delta1, ns.delta2, ns.seed)
        trace = run_approx_mpi(tmdp, config, acfg)
    else:
        trace = run_mpi(tmdp, config)
    lam_tilde = trace.final_lambda_tilde
    lines = [
        f"policy {format_policy(trace.final_policy)}",
        f"iterations {len(trace.records)}",
        f"converged {str(trace.converged).lower()}",
        f"lambda_tilde {format_float(lam_tilde)} +/- {format_float(trace.half_width)}",
    ]
    try:
        lines.append(f"lambda {format_float(invert_cost(lam_tilde, params.kappa))}")
    except DomainError as exc:
        lines.append(f"lambda unavailable ({exc})")
    if ns.diagnostics:
        lines += _diagnostic_lines(trace, tmdp, acfg.epsilon if approx else 1.0)
    print("\n".join(lines))
    outputs = []
    if ns.trace_out:
        _write_text(ns.trace_out, trace_csv(trace, approx))
        outputs.append(ns.trace_out)
    config_body = config.snapshot()
    config_body["mode"] = ns.mode
    if approx:
        config_body["approx"] = acfg.snapshot()
    default = (ns.trace_out or ns.model + ".solve") + ".manifest.json"
    _write_manifest(ns, default, _manifest(ns, "solve", ns.model, outputs, params, config_body))
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def _diagnostic_lines(trace, tmdp, epsilon: float) -> list[str]:
    out = [f"positivity_horizon {positivity_horizon(tmdp).horizon}",
           f"min_value_entry {format_float(trace.beta_observed)}"]
    try:
        brute = brute_force_optimal(tmdp)
    except SizeCapError:
        out.append("sandwich skipped (too many policies to enumerate)")
        return out
    report = check_approx_sandwich(trace, tmdp, brute, epsilon) if epsilon > 1.0 else check_sandwich(trace, tmdp, brute)
    out.append(f"sandwich {'ok' if report.ok else 'VIOLATED'} ({len(report.violations)} violations)")
    out.append(f"in_optimal_set {str(trace.final_policy in brute.optimal_policies).lower()}")
    return out


def cmd_brute(ns) -> int:
    model = _load_valid(ns.model)
    params = _params(ns)
    tmdp = transform(model, params)
    result = brute_force_optimal(tmdp, cap=ns.cap)
    lines = [f"{format_policy(p)} {format_float(lam)}" for p, lam in result.per_policy.items()]
    lines.append("argmin " + " ".join(format_policy(p) for p in sorted(result.optimal_policies)))
    lines.append(f"lambda_tilde_star {format_float(result.optimal_lambda_tilde)}")
    lines.append(f"lambda_star {format_float(invert_cost(result.optimal_lambda_tilde, params.kappa))}")
    outputs = _maybe_report(ns, "\n".join(lines) + "\n")
    _write_manifest(ns, ns.model + ".brute.manifest.json",
                    _manifest(ns, "brute", ns.model, outputs, params, {"cap": ns.cap}))
    return EXIT_OK


def cmd_eval(ns) -> int:
    model = _load_valid(ns.model)
    params = _params(ns)
    policy = parse_policy(ns.policy)
    check_policy(policy, model.n_states, model.n_actions)
    tmdp = transform(model, params)
    ev = evaluate_policy(tmdp, policy)
    vec = ev.value.w / ev.value.w.sum()
    lines = [
        f"policy {format_policy(policy)}",
        f"lambda_tilde {format_float(ev.lambda_tilde)}",
        f"lambda {format_float(invert_cost(ev.lambda_tilde, params.kappa))}",
        "eigenvector " + " ".join(format_float(x) for x in vec),
        f"residual {format_float(ev.residual)}",
    ]
    outputs = _maybe_report(ns, "\n".join(lines) + "\n")
    _write_manifest(ns, ns.model + ".eval.manifest.json",
                    _manifest(ns, "eval", ns.model, outputs, params, {"policy": ns.policy}))
    return EXIT_OK


def cmd_rerun(ns) -> int:
    try:
        body = json.loads(Path(ns.manifest_file).read_text(encoding="utf-8"))
        argv = list(body["argv"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read manifest {ns.manifest_file}: {exc}") from None
    sub = build_parser().parse_args(argv)
    sub._argv = argv
    if ns.out_dir:
        out_dir = Path(ns.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for dest in OUTPUT_DESTS:
            value = getattr(sub, dest, None)
            if value:
                setattr(sub, dest, str(out_dir / Path(value).name))
        sub.manifest = str(out_dir / Path(ns.manifest_file).name)
    code = _dispatch(sub)
    if code not in (EXIT_OK, EXIT_NOT_CONVERGED) or not ns.verify:
        return code
    old = list(body.get("outputs", {}).values())
    new_manifest = json.loads(Path(sub.manifest or _default_manifest(sub)).read_text(encoding="utf-8"))
    new = list(new_manifest["outputs"].values())
    if old != new:
        print("rerun outputs differ from the manifest", file=sys.stderr)
        return EXIT_MISMATCH
    print(f"verified {len(new)} output file(s) byte-identical")
    return code


def _default_manifest(ns) -> str:
    if ns.command == "generate":
        return ns.out + ".manifest.json"
    if ns.command == "solve":
        return (ns.trace_out or ns.model + ".solve") + ".manifest.json"
    return f"{ns.model}.{ns.command}.manifest.json"


# --------------------------------------------------------------------------
# parser

def _risk_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("model", help="JSON model file")
    p.add_argument("--alpha", type=float, required=True, help="risk factor (> 0)")
    p.add_argument("--kappa", type=float, default=0.5, help="self-loop weight of the transform, in (0, 1)")
    p.add_argument("--manifest", default=None, help="manifest path (default: next to the main output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsmpi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rsmpi {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    g = subs.add_parser("generate", help="write a seeded random model")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--n-states", type=int, required=True)
    g.add_argument("--n-actions", type=int, required=True)
    g.add_argument("--cost-lo", type=float, default=0.0)
    g.add_argument("--cost-hi", type=float, default=1.0)
    g.add_argument("--epsilon-mix", type=float, default=1e-3, help="uniform mixing weight")
    g.add_argument("--out", required=True)
    g.add_argument("--manifest", default=None)

    v = subs.add_parser("validate", help="check a model file")
    v.add_argument("model")

    s = subs.add_parser("solve", help="run (approximate) modified policy iteration")
    _risk_flags(s)
    s.add_argument("--mode", choices=("exact", "approx"), default="exact")
    s.add_argument("--m", default="5", help="evaluation depth, or a comma list cycled over iterations")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-outer", type=int, default=10_000)
    s.add_argument("--epsilon", type=float, default=1.0, help="improvement error factor (approx mode)")
    s.add_argument("--delta1", type=float, default=1.0, help="lower evaluation error factor (approx mode)")
    s.add_argument("--delta2", type=float, default=1.0, help="upper evaluation error factor (approx mode)")
    s.add_argument("--seed", type=int, default=0, help="error RNG seed (approx mode)")
    s.add_argument("--diagnostics", action="store_true", help="record policy costs and check bounds")
    s.add_argument("--trace-out", default=None, help="CSV trace path")

    b = subs.add_parser("brute", help="enumerate every deterministic policy")
    _risk_flags(b)
    b.add_argument("--cap", type=int, default=10 ** 6, help="largest policy count to enumerate")
    b.add_argument("--report", default=None, help="also write the printed table here")

    e = subs.add_parser("eval", help="evaluate one policy exactly")
    _risk_flags(e)
    e.add_argument("--policy", required=True, help="dash-joined actions, e.g. 0-1-1")
    e.add_argument("--report", default=None, help="also write the printed lines here")

    r = subs.add_parser("rerun", help="replay a manifest")
    r.add_argument("manifest_file")
    r.add_argument("--out-dir", default=None, help="write regenerated files here instead")
    r.add_argument("--verify", action="store_true", help="exit 1 unless outputs hash identically")
    return parser


COMMANDS: dict[str, Callable] = {
    "generate": cmd_generate,
    "validate": cmd_validate,
    "solve": cmd_solve,
    "brute": cmd_brute,
    "eval": cmd_eval,
    "rerun": cmd_rerun,
}


def _dispatch(ns) -> int:
    try:
        return COMMANDS[ns.command](ns)
    except (InputError, ParameterError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SizeCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIZE_CAP
    except (ConvergenceError, DiagnosticUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    ns._argv = argv
    return _dispatch(ns)


if __name__ == "__main__":
    sys.exit(main())
