"""Command-line front end.

Exit codes: 0 success, 2 when the command ran but the answer is negative (no
certificate, infeasible synthesis, failing self-test), 1 on errors.

Numeric flags accept fractions (``2/3``).  Matrix and transfer-function flags
take inline values or ``@path`` to a JSON file; when that file holds an
object, the relevant key (``t``, ``m``, ``num``/``den``) is picked out, so the
JSON emitted by one subcommand can be fed to the next.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import csv
import io
import json
import math
import os
import re
import sys
import time

import numpy as np

from ._numeric import parse_number
from .cones import (
    PassivityIndexPair,
    build_s,
    check_mimo,
    check_siso,
    decompose_siso,
    map_cone_into_cone,
)
from .lti import (
    RationalTransferFunction,
    find_storage_realization,
    frequency_indices,
    hinf_norm,
    is_stable,
    poles,
    transform_tf,
    verify_dissipativity_fixed_storage,
    zeros,
)
from .netsim import (
    CASE_STUDY_MODES,
    CASE_STUDY_PROBS,
    CASE_STUDY_T,
    SwitchedAgentBank,
    build_cycle_graph,
    case_study_bank,
    case_study_config,
    config_from_dict,
    plot_script,
    sample_mode_schedule,
    simulate,
    transformed_mode_check,
    write_trace_csv,
)
from .synthesize import (
    SimultaneousSpec,
    closest_transform,
    hinf_min_feedback_feedthrough,
    simultaneous_passivation,
)

THREADS_ENV = "PASSIVIZE_THREADS"
EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2

_FRACTION = re.compile(r"(?<![\w.])(-?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)\s*/\s*(\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)")


class CliError(Exception):
    """Bad input reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _load_json_text(text):
    if text.startswith("@"):
        path = text[1:]
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise CliError(f"cannot read {path}: {exc}") from exc
    text = _FRACTION.sub(lambda m: repr(parse_number(f"{m.group(1)}/{m.group(2)}")), text)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"invalid JSON value: {exc}") from exc


def parse_matrix(text, key="t"):
    data = _load_json_text(text)
    if isinstance(data, dict):
        for k in (key, "t", "m", "s"):
            if k in data and data[k] is not None:
                data = data[k]
                break
        else:
            raise CliError(f"no matrix under key {key!r}")
    m = np.asarray(data, dtype=float)
    if m.ndim != 2:
        raise CliError(f"expected a matrix (list of rows), got shape {m.shape}")
    return m


def parse_indices(text):
    parts = [p for p in re.split(r"[,\s]+", text.strip().strip("()[]")) if p]
    if len(parts) != 2:
        raise CliError(f"indices must be 'rho,nu', got {text!r}")
    try:
        return PassivityIndexPair(parse_number(parts[0]), parse_number(parts[1]))
    except ValueError as exc:
        raise CliError(f"invalid indices {text!r}: {exc}") from exc


def parse_poly(text):
    return [parse_number(p) for p in re.split(r"[,\s]+", text.strip().strip("[]")) if p]


def _tf_from_args(args):
    if getattr(args, "tf", None):
        data = _load_json_text(args.tf)
        if isinstance(data, dict) and isinstance(data.get("tf"), dict):
            data = data["tf"]
        if not isinstance(data, dict) or "num" not in data or "den" not in data:
            raise CliError("transfer function JSON needs 'num' and 'den'")
        return RationalTransferFunction.from_dict(data)
    if args.num is None or args.den is None:
        raise CliError("give --tf or both --num and --den")
    return RationalTransferFunction(parse_poly(args.num), parse_poly(args.den))


def _emit(obj, args, csv_rows=None):
    fmt = getattr(args, "format", "json")
    if fmt == "csv":
        if csv_rows is None:
            raise CliError("csv output is not available for this subcommand")
        buf = io.StringIO()
        csv.writer(buf).writerows(csv_rows)
        text = buf.getvalue()
    else:
        text = json.dumps(obj, indent=2) + "\n"
    if getattr(args, "output", None):
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _matrix_rows(m):
    return [[f"{v:.17g}" for v in row] for row in np.asarray(m)]


def cmd_check(args):
    t = parse_matrix(args.t)
    src, dst = parse_indices(args.source), parse_indices(args.target)
    if t.shape == (2, 2):
        cert = check_siso(t, src, dst)
        kind = "siso"
    else:
        cert = check_mimo(t, src, dst)
        kind = "mimo"
    if cert is None:
        _emit({"certified": False, "kind": kind, "message": "no certificate"}, args)
        return EXIT_NEGATIVE
    out = {"certified": True, "kind": kind, "t": t.tolist()}
    out.update(cert.to_dict())
    _emit(out, args, _matrix_rows(cert.m))
    return EXIT_OK


def cmd_decompose(args):
    t = parse_matrix(args.t)
    m = decompose_siso(t, parse_indices(args.source), parse_indices(args.target))
    _emit({"m": m.tolist()}, args, _matrix_rows(m))
    return EXIT_OK


def cmd_build_s(args):
    ind = parse_indices(args.indices)
    s = map_cone_into_cone((0, 0), ind) if args.method == "boundary" else build_s(ind)
    _emit({"s": s.tolist(), "indices": ind.to_list()}, args, _matrix_rows(s))
    return EXIT_OK


def cmd_transform_tf(args):
    g = _tf_from_args(args)
    gt = transform_tf(g, parse_matrix(args.t))
    _emit(gt.to_dict(), args)
    return EXIT_OK


def cmd_indices(args):
    g = _tf_from_args(args)
    fi = frequency_indices(g)
    _emit({"rho": fi.rho, "nu": fi.nu, "rho_degenerate": fi.rho_degenerate}, args)
    return EXIT_OK


def cmd_hinf(args):
    _emit({"hinf": hinf_norm(_tf_from_args(args))}, args)
    return EXIT_OK


def cmd_synth_multi(args):
    if args.input:
        data = _load_json_text(args.input if args.input.startswith("@") else "@" + args.input)
        spec = SimultaneousSpec.from_dict(data)
    elif args.modes:
        modes = [parse_indices(p) for p in args.modes.split(";")]
        targets = [parse_indices(p) for p in args.targets.split(";")] if args.targets else None
        ref = parse_matrix(args.reference) if args.reference else None
        spec = SimultaneousSpec(modes, targets, ref)
    else:
        raise CliError("give --input or --modes")
    res = simultaneous_passivation(spec)
    _emit(res.to_dict(), args)
    return EXIT_OK if res.feasible else EXIT_NEGATIVE


def cmd_synth_closest(args):
    t0 = parse_matrix(args.t0) if args.t0 else np.eye(2)
    res = closest_transform(t0, parse_indices(args.source), parse_indices(args.target))
    _emit(res.to_dict(), args)
    return EXIT_OK


def cmd_synth_hinf(args):
    res = hinf_min_feedback_feedthrough(_tf_from_args(args), parse_indices(args.indices),
                                        grid_points=args.grid)
    _emit(res.to_dict(), args)
    return EXIT_OK


def _thread_count():
    raw = os.environ.get(THREADS_ENV, "")
    if not raw:
        return min(8, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError as exc:
        raise CliError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise CliError(f"{THREADS_ENV} must be >= 1")
    return n


def cmd_simulate(args):
    if args.config:
        data = _load_json_text(args.config if args.config.startswith("@") else "@" + args.config)
        base = config_from_dict(data)
        t = base.transformation
    else:
        bank = case_study_bank(args.realization)
        t = None if args.no_transform else (
            parse_matrix(args.t) if args.t else CASE_STUDY_T)
        base = case_study_config(0, t, bank, t_end=args.t_end, step=args.step,
                                 record_every=args.record_every)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [base.seed]
    os.makedirs(args.output_dir, exist_ok=True)

    def run(seed):
        cfg = type(base)(base.graph, base.agents, base.controller_tau, t, base.t_end,
                         base.step, seed, base.initial_states, base.record_every)
        return seed, simulate(cfg)

    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        traces = list(pool.map(run, seeds))

    summary = []
    for seed, tr in traces:
        if args.format == "json":
            path = os.path.join(args.output_dir, f"trace_seed{seed}.json")
            with open(path, "w") as fh:
                json.dump({"seed": seed, "times": tr.times.tolist(),
                           "outputs": tr.outputs.tolist(),
                           "disagreement": tr.disagreement.tolist(),
                           "mode_log": tr.mode_log.tolist(),
                           "switch_times": tr.switch_times.tolist(),
                           "initial_states": tr.initial_states.tolist()}, fh)
        else:
            path = os.path.join(args.output_dir, f"trace_seed{seed}.csv")
            write_trace_csv(tr, path)
            if args.plot:
                with open(os.path.join(args.output_dir, f"plot_seed{seed}.gp"), "w") as fh:
                    fh.write(plot_script(os.path.basename(path), tr.outputs.shape[0],
                                         f"seed{seed}"))
        summary.append({"seed": seed, "path": path,
                        "final_disagreement": float(tr.disagreement[-1]),
                        "max_disagreement": float(tr.disagreement.max())})
    sys.stdout.write(json.dumps({"runs": summary}, indent=2) + "\n")
    return EXIT_OK


def _close(a, b, tol):
    return bool(np.all(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) <= tol))


def _roots_close(found, expected, tol):
    found = np.sort_complex(np.asarray(found, dtype=complex))
    expected = np.sort_complex(np.asarray(expected, dtype=complex))
    return len(found) == len(expected) and bool(np.all(np.abs(found - expected) <= tol))


def selftest_cases():
    """Named checks against the published example values."""
    t = np.array([[1.0, 0.4], [0.4, 0.2]])
    g = RationalTransferFunction([2, 3], [1, 3, 2])
    g1 = RationalTransferFunction([1, -1], [1, 1])
    cases = []

    def case(name):
        def deco(fn):
            cases.append((name, fn))
            return fn
        return deco

    @case("S for (rho, nu) = (2, 0)")
    def _():
        return _close(build_s((2, 0)), [[1, 2], [0, 1]], 1e-12)

    @case("decompose T from (2/3, 0) to (2, 0)")
    def _():
        return _close(decompose_siso(t, (2 / 3, 0), (2, 0)),
                      np.array([[3, 2], [6, 7]]) / 15, 1e-12)

    @case("decompose T from (0, -5/4) to (0, 0)")
    def _():
        return _close(decompose_siso(t, (0, -1.25), (0, 0)), [[0.4, 0.4], [0.12, 0.2]], 1e-12)

    @case("certificate from (2/3, 0) to (2, 0)")
    def _():
        c = check_siso(t, (2 / 3, 0), (2, 0))
        return c is not None and c.theta == 1 and _close(c.m, np.array([[3, 2], [6, 7]]) / 15, 1e-12)

    @case("transformed nominal plant")
    def _():
        gt = transform_tf(g, t)
        return _close(gt.num, [0.4, 1.6, 1.4], 1e-9) and _close(gt.den, [1, 3.8, 3.2], 1e-9)

    @case("transformed fault plant")
    def _():
        gt = transform_tf(g1, t)
        return _close(gt.num, [0.6 / 1.4, 0.2 / 1.4], 1e-9) and _close(gt.den, [1, 0.6 / 1.4], 1e-9)

    @case("poles of s^2 + 3s + 2")
    def _():
        return _roots_close(poles(g), [-1, -2], 1e-9)

    @case("fault mode 1 is unstable")
    def _():
        return not is_stable(RationalTransferFunction(*CASE_STUDY_MODES[1][:2]))

    @case("H-infinity norm of (s-1)/(s+1)")
    def _():
        return abs(hinf_norm(g1) - 1.0) <= 1e-6

    @case("rho of nominal plant")
    def _():
        return abs(frequency_indices(g).rho - 2 / 3) <= 1e-3

    @case("rho of transformed nominal plant")
    def _():
        return abs(frequency_indices(transform_tf(g, t)).rho - 2.2857) <= 1e-2

    @case("rho of transformed fault plant")
    def _():
        return abs(frequency_indices(transform_tf(g1, t)).rho - 2.333) <= 1e-2

    for k in (1, 2, 3):
        @case(f"fixed-storage realisation of fault mode {k}")
        def _(k=k):
            num, den, ind = CASE_STUDY_MODES[k]
            found = find_storage_realization(RationalTransferFunction(num, den), ind)
            return found.found and verify_dissipativity_fixed_storage(found.model, ind)

    @case("simultaneous passivation of the four modes")
    def _():
        res = simultaneous_passivation(SimultaneousSpec([m[2] for m in CASE_STUDY_MODES]))
        return res.feasible and _close(res.t, CASE_STUDY_T, 1e-3)

    @case("closest transform from (0, -1) to (1, 0)")
    def _():
        res = closest_transform(np.eye(2), (0, -1), (1, 0))
        return _close(res.t, [[1.5, 0.5], [0.5, 0.5]], 1e-2) and abs(res.norm - 1 / math.sqrt(2)) <= 1e-3

    @case("baseline transform distance")
    def _():
        return abs(np.linalg.norm(np.array([[1, 1], [1, 2]]) - np.eye(2), 2) - 1.618) <= 1e-3

    @case("feedback/feedthrough synthesis at kappa = 0.5")
    def _():
        r = hinf_min_feedback_feedthrough(RationalTransferFunction([0.5, -1], [1, 1]), (0, -1))
        return _close([r.b, r.c, r.cost], [0, 1, 1.5], 1e-3)

    @case("ten-agent cycle graph")
    def _():
        gr = build_cycle_graph(10)
        return gr.n_edges == 10 and _close(gr.incidence().sum(axis=0), np.zeros(10), 0)

    @case("mode schedule over 150 s")
    def _():
        bank = SwitchedAgentBank(tuple(case_study_bank("canonical").modes), 5.0, CASE_STUDY_PROBS)
        s = sample_mode_schedule(bank, 150.0, 0, 0)
        return len(s) == 30 and s[0] == 0

    @case("transformed modes match printed factored forms")
    def _():
        expected = [
            ([-3.24, -1.356], [-3.003, -1.334]),
            ([-2.506, -0.4232], [-2.389, -0.2809]),
            ([-4.595, -0.0011], [-4.259, -0.0774]),
            ([-0.3774, -0.3185], [-0.2181 + 0.2926j, -0.2181 - 0.2926j]),
        ]
        tfs = [RationalTransferFunction(n, d) for n, d, _ in CASE_STUDY_MODES]
        ok = True
        for gt, (z, p) in zip(transformed_mode_check(tfs, CASE_STUDY_T), expected):
            ok &= abs(gt.num[0] - 0.7058) <= 1e-2
            ok &= _roots_close(zeros(gt), z, 1e-2) and _roots_close(poles(gt), p, 1e-2)
            ok &= is_stable(gt) and frequency_indices(gt).nu >= -1e-6
        return bool(ok)

    @case("case-study network synchronises with T")
    def _():
        tr = simulate(case_study_config(0, CASE_STUDY_T, case_study_bank(), record_every=100))
        return tr.disagreement[-1] <= 1e-2 * tr.disagreement.max()

    return cases


def cmd_selftest(args):
    failures = 0
    results = []
    for name, fn in selftest_cases():
        start = time.perf_counter()
        try:
            ok = bool(fn())
            detail = ""
        except Exception as exc:  # a crash is a failed check, not a CLI error
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failures += not ok
        results.append({"name": name, "passed": ok, "seconds": time.perf_counter() - start,
                        "detail": detail})
        if args.format != "json":
            print(f"{'PASS' if ok else 'FAIL'}  {name}{'  ' + detail if detail else ''}")
    if args.format == "json":
        print(json.dumps({"results": results, "failures": failures}, indent=2))
    else:
        print(f"{len(results) - failures}/{len(results)} passed")
    return EXIT_OK if failures == 0 else EXIT_NEGATIVE


def build_parser():
    p = _Parser(prog="passivize", description="Passivizing input-output transformations.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_, fmt=False):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--output", help="write the result here instead of stdout")
        if fmt:
            sp.add_argument("--format", choices=["json", "csv"], default="json")
        return sp

    def tf_args(sp):
        sp.add_argument("--tf", help="JSON {num, den} inline or @file")
        sp.add_argument("--num", help="numerator coefficients, descending powers")
        sp.add_argument("--den", help="denominator coefficients, descending powers")

    sp = add("check", cmd_check, "certify that T maps one cone into another", fmt=True)
    sp.add_argument("--t", required=True)
    sp.add_argument("--source", required=True)
    sp.add_argument("--target", required=True)

    sp = add("decompose", cmd_decompose, "inv(S_target) T S_source", fmt=True)
    sp.add_argument("--t", required=True)
    sp.add_argument("--source", required=True)
    sp.add_argument("--target", required=True)

    sp = add("build-s", cmd_build_s, "canonical cone map for given indices", fmt=True)
    sp.add_argument("--indices", required=True)
    sp.add_argument("--method", choices=["closed", "boundary"], default="closed")

    sp = add("transform-tf", cmd_transform_tf, "transfer function after a transformation")
    tf_args(sp)
    sp.add_argument("--t", required=True)

    sp = add("indices", cmd_indices, "frequency-domain passivity indices")
    tf_args(sp)

    sp = add("hinf", cmd_hinf, "H-infinity norm")
    tf_args(sp)

    sp = add("synth-multi", cmd_synth_multi, "simultaneous passivation QP")
    sp.add_argument("--input", help="JSON file with modes, targets, reference")
    sp.add_argument("--modes", help="'rho,nu;rho,nu;...'")
    sp.add_argument("--targets", help="'rho,nu;...' (default all 0,0)")
    sp.add_argument("--reference", help="reference matrix (default identity)")

    sp = add("synth-closest", cmd_synth_closest, "closest transformation in operator norm")
    sp.add_argument("--t0", help="starting matrix (default identity)")
    sp.add_argument("--source", required=True)
    sp.add_argument("--target", required=True)

    sp = add("synth-hinf", cmd_synth_hinf, "H-infinity-optimal feedback/feedthrough")
    tf_args(sp)
    sp.add_argument("--indices", required=True)
    sp.add_argument("--grid", type=int, default=2001)

    sp = sub.add_parser("simulate", help="network simulation, one trace per seed")
    sp.set_defaults(func=cmd_simulate)
    sp.add_argument("--config", help="JSON simulation config (default: ten-agent case study)")
    sp.add_argument("--seeds", help="comma-separated seeds")
    sp.add_argument("--output-dir", default=".")
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.add_argument("--plot", action="store_true", help="also write gnuplot scripts")
    sp.add_argument("--t", help="transformation for the case study")
    sp.add_argument("--no-transform", action="store_true")
    sp.add_argument("--realization", choices=["storage", "canonical"], default="storage")
    sp.add_argument("--t-end", type=float, default=150.0)
    sp.add_argument("--step", type=float, default=1e-3)
    sp.add_argument("--record-every", type=int, default=10)

    sp = sub.add_parser("selftest", help="regression table of published example values")
    sp.set_defaults(func=cmd_selftest)
    sp.add_argument("--format", choices=["text", "json"], default="text")
    return p


def _attach_negative_values(argv):
    """``--source -2/3,0`` -> ``--source=-2/3,0`` so argparse keeps the value."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if tok.startswith("--") and "=" not in tok and nxt is not None and re.match(r"^-[\d.]", nxt):
            out.append(f"{tok}={nxt}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_attach_negative_values(argv))
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError, KeyError, TypeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
