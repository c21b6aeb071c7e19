"""Command-line front end: ``spttn optimize|explain|run|verify|bench|gen``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .costs import all_models, eval_cost, parse_cost_model
from .errors import ResourceLimitError, SpttnError
from .executor import execute, execute_unfactorized, flops_estimate, prepare
from .kernel import KERNELS, infer_dims, kernel_refs, parse_kernel
from .loopnest import build_forest, render, validate_order
from .optimizer import candidate_paths, joint_search, order_dp, rank_candidates
from .paths import parse_path
from .report import RunReport, buffer_table, path_dict
from .tensor import DenseTensor, build_csf
from .tns import format_tns, gen_dense, gen_random, parse_tns, shape_comment

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_RESOURCE = 3

DEFAULT_COST = "max-buf-dim"
DEFAULT_TOL = 1e-10


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_dims(text):
    """``"i=3,j=4"`` -> ``{"i": 3, "j": 4}``."""
    out = {}
    if not text:
        return out
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, val = part.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"bad --dims entry {part!r}; expected name=size")
        try:
            out[key.strip()] = int(val)
        except ValueError:
            raise UsageError(f"bad size in --dims entry {part!r}") from None
    return out


def parse_order(text):
    """``"i,j,s,k;i,j,s,r"`` -> ``(("i","j","s","k"), ("i","j","s","r"))``."""
    return tuple(tuple(x.strip() for x in term.split(",") if x.strip()) for term in text.split(";"))


def kernel_text(arg):
    return KERNELS.get(arg.lower(), arg)


def _add_common(p, tensors=False):
    p.add_argument("--kernel", required=True, help="kernel text or one of: " + ", ".join(KERNELS))
    p.add_argument("--dims", default="", help="index sizes, e.g. i=8,j=8,a=4")
    p.add_argument("--tns", help="sparse input tensor (.tns)")
    p.add_argument("--cost", default=DEFAULT_COST, help="max-buf-dim | max-buf-size | cache:D=<d> | dense-loops:bound=<b>")
    p.add_argument("--path", help='contraction path expression, e.g. "(T*V)*U"')
    p.add_argument("--no-depth-filter", action="store_true", help="search all paths, not only minimum-depth ones")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--report", help="also write the report to this file")
    if tensors:
        p.add_argument("--order", help='loop order "i,j,k;i,j,r", or a preset: best, scalar-opt')
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--density", type=float, default=0.1, help="density of the generated sparse tensor when --tns is absent")
        p.add_argument("--factor", action="append", default=[], metavar="NAME=FILE", help="dense input from .npy")
        p.add_argument("--buffer-limit-bytes", type=int)


def build_parser():
    parser = _Parser(prog="spttn", description="Plan and run sparse tensor times tensor network kernels.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("optimize", help="choose a contraction path and loop order")
    _add_common(p)

    p = sub.add_parser("explain", help="print the fused loop nest")
    _add_common(p)
    p.add_argument("--order", help='loop order "i,j,k;i,j,r", or a preset: best, scalar-opt')
    p.add_argument("--hooks", action="store_true", help="annotate terms with their micro-kernel")

    for name, text in (("run", "execute the chosen plan"), ("verify", "execute and compare with the unfactorized oracle")):
        p = sub.add_parser(name, help=text)
        _add_common(p, tensors=True)
        p.add_argument("--out", help="write the output tensor (.tns)")
        if name == "verify":
            p.add_argument("--tol", type=float, default=DEFAULT_TOL)

    p = sub.add_parser("bench", help="time the top-k model-ranked plans")
    _add_common(p, tensors=True)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--include", action="append", default=[], help="extra order (or preset) to time on --path")

    p = sub.add_parser("gen", help="write a random sparse tensor")
    p.add_argument("--dims", required=True, help="mode sizes, e.g. 8,8,8")
    p.add_argument("--density", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _load_sparse(args, spec_text):
    """``(name, tensor)`` from --tns, or ``None``.

    Mode sizes come from --dims, then a ``# shape`` comment, then the
    largest coordinate in the file.
    """
    if not getattr(args, "tns", None):
        return None
    try:
        text = Path(args.tns).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {args.tns}: {e.strerror}") from None
    name, indices = kernel_refs(spec_text)[0]
    dims = parse_dims(args.dims)
    shape = shape_comment(text)
    if all(i in dims for i in indices):
        shape = tuple(dims[i] for i in indices)
    elif shape is None:
        if not text_has_data(text):
            raise UsageError("empty tensor file: give every sparse index size with --dims")
        coo = parse_tns(text, indices)
        shape = tuple(dims.get(i, s) for i, s in zip(indices, coo.shape))
    else:
        shape = tuple(dims.get(i, s) for i, s in zip(indices, shape))
    return name, parse_tns(text, indices, shape)


def text_has_data(text):
    return any(line.strip() and not line.lstrip().startswith("#") for line in text.splitlines())


def _setup(args):
    text = kernel_text(args.kernel)
    dims = parse_dims(args.dims)
    loaded = _load_sparse(args, text)
    shapes = {}
    if loaded:
        shapes[loaded[0]] = loaded[1].shape
    for spec_arg in getattr(args, "factor", []):
        name, sep, file = spec_arg.partition("=")
        if not sep:
            raise UsageError(f"bad --factor {spec_arg!r}; expected NAME=FILE")
        try:
            shapes[name] = np.load(file).shape
        except OSError as e:
            raise UsageError(f"cannot read {file}: {e}") from None
    try:
        dims = infer_dims(text, shapes, dims)
    except KeyError as e:
        raise UsageError(f"unknown tensor {e} in --factor") from None
    spec = parse_kernel(text, dims)
    model = parse_cost_model(args.cost, spec.index_dims)
    return spec, model, loaded[1] if loaded else None


def _tensors(spec, args, sparse):
    seed = getattr(args, "seed", 0)
    if sparse is None:
        ref = spec.sparse
        sparse = gen_random(spec.shape_of(ref), args.density, seed, ref.indices)
    tensors = {spec.sparse.name: sparse}
    files = dict(f.partition("=")[::2] for f in getattr(args, "factor", []))
    for k, ref in enumerate(spec.inputs[1:], 1):
        if ref.name in files:
            tensors[ref.name] = np.load(files[ref.name])
        else:
            tensors[ref.name] = gen_dense(spec.shape_of(ref), seed + k)
    return tensors


def _plan(spec, model, args):
    """``(path, order, search info)`` from --path/--order or the optimizer."""
    order_arg = getattr(args, "order", None) or "best"
    if order_arg == "scalar-opt":
        model = parse_cost_model("max-buf-dim", spec.index_dims)
        order_arg = "best"
    if args.path:
        path = parse_path(spec, args.path)
        if order_arg == "best":
            res = order_dp(path, model)
            return path, res.order, _search_info(res, 1)
        return path, validate_order(path, parse_order(order_arg), check_csf=True), {}
    if order_arg != "best":
        raise UsageError("an explicit --order needs --path")
    paths = candidate_paths(spec, not args.no_depth_filter)
    path, res = joint_search(spec, model, not args.no_depth_filter)
    return path, res.order, _search_info(res, len(paths))


def _search_info(res, n_paths):
    st = res.stats
    return {
        "candidate_paths": n_paths,
        "subproblems": st.subproblems,
        "memo_hits": st.memo_hits,
        "wall_time": st.wall_time,
        "second_best_diff_root": None
        if res.second_best_diff_root is None
        else {"orders": [list(a) for a in res.second_best_diff_root[0]], "cost": res.second_best_diff_root[1]},
    }


def _report(command, spec, model, path, order, search, csf=None):
    forest = build_forest(path, order)
    costs = [{"model": m.name, "value": eval_cost(m, path, order)} for m in all_models(spec.index_dims)]
    rep = RunReport(
        command=command,
        kernel=spec.canonical(),
        dims=dict(spec.index_dims),
        cost_model=model.name,
        path=path_dict(path),
        orders=[list(a) for a in order],
        cost=eval_cost(model, path, order),
        costs=costs,
        buffers=buffer_table(forest),
        search=search,
    )
    if csf is not None:
        rep.flops_estimate = flops_estimate(path, order, csf)
    return rep


def _emit(args, rep, out):
    text = rep.to_json() if args.format == "json" else rep.to_text()
    out.write(text)
    if args.report:
        Path(args.report).write_text(text)


def cmd_optimize(args, out):
    spec, model, sparse = _setup(args)
    path, order, search = _plan(spec, model, args)
    csf = build_csf(sparse, path.csf_order) if sparse is not None else None
    _emit(args, _report("optimize", spec, model, path, order, search, csf), out)
    return EXIT_OK


def cmd_explain(args, out):
    spec, model, _ = _setup(args)
    path, order, _ = _plan(spec, model, args)
    forest = build_forest(path, order)
    hooks = None
    if args.hooks:
        from .executor import assign_hooks

        hooks = {t: h.describe() for t, h in assign_hooks(forest).items() if h.kind != "none"}
    out.write(f"# path: {path_dict(path)['expression']}\n")
    out.write(f"# order: {';'.join(','.join(a) for a in order)}\n")
    out.write(render(forest, hooks))
    return EXIT_OK


def _execute(args, spec, model):
    path, order, search = _plan(spec, model, args)
    sparse = getattr(args, "_sparse", None)
    tensors = _tensors(spec, args, sparse)
    plan = prepare(path, order, tensors, buffer_limit_bytes=args.buffer_limit_bytes)
    result, stats = execute(plan)
    rep = _report(args.command, spec, model, path, order, search, plan.csf)
    rep.hooks = [plan.hooks[t].describe() for t in range(path.n_terms)]
    rep.stats = {
        "ops": stats.ops,
        "resets": stats.resets,
        "peak_buffer_bytes": stats.peak_buffer_bytes,
        "wall_time": stats.wall_time,
    }
    return rep, result, tensors


def cmd_run(args, out):
    spec, model, args._sparse = _setup(args)
    rep, result, _ = _execute(args, spec, model)
    if args.out:
        Path(args.out).write_text(format_tns(result))
    _emit(args, rep, out)
    return EXIT_OK


def max_delta(a, b):
    x = a.array if isinstance(a, DenseTensor) else a.todense()
    y = b.array if isinstance(b, DenseTensor) else b.todense()
    return float(np.max(np.abs(x - y))) if x.size else 0.0, float(np.max(np.abs(y))) if y.size else 0.0


def cmd_verify(args, out):
    spec, model, args._sparse = _setup(args)
    rep, result, tensors = _execute(args, spec, model)
    oracle, ostats = execute_unfactorized(spec, tensors)
    delta, scale = max_delta(result, oracle)
    bound = args.tol * (1.0 + scale)
    ok = delta <= bound
    if not spec.output_sparse or isinstance(result, DenseTensor):
        pattern_ok = True
    else:
        pattern_ok = bool(np.array_equal(result.coords, oracle.coords))
    rep.verification = {
        "max_abs_delta": delta,
        "max_abs_oracle": scale,
        "tolerance": args.tol,
        "bound": bound,
        "pattern_match": pattern_ok,
        "oracle_ops": ostats.ops,
        "passed": ok and pattern_ok,
    }
    if args.out:
        Path(args.out).write_text(format_tns(result))
    _emit(args, rep, out)
    return EXIT_OK if ok and pattern_ok else EXIT_VERIFY


def _inversions(model_rank, times):
    """Pairs the model orders one way and the measurement the other."""
    n = 0
    for a in range(len(times)):
        for b in range(a + 1, len(times)):
            if model_rank[a] < model_rank[b] and times[a] > times[b]:
                n += 1
    return n


def cmd_bench(args, out):
    spec, model, sparse = _setup(args)
    tensors = _tensors(spec, args, sparse)
    cands = [(c, p, o) for c, p, o in rank_candidates(spec, model, args.top_k, not args.no_depth_filter)]
    if args.path:
        path = parse_path(spec, args.path)
        for inc in args.include:
            if inc in ("best", "scalar-opt"):
                m = model if inc == "best" else parse_cost_model("max-buf-dim", spec.index_dims)
                order = order_dp(path, m).order
            else:
                order = validate_order(path, parse_order(inc), check_csf=True)
            cands.append((eval_cost(model, path, order), path, order))
    elif args.include:
        raise UsageError("--include needs --path")
    rows = []
    for cost, path, order in cands:
        plan = prepare(path, order, tensors, buffer_limit_bytes=args.buffer_limit_bytes)
        best = None
        for _ in range(max(1, args.repeat)):
            _, stats = execute(plan)
            best = stats.wall_time if best is None else min(best, stats.wall_time)
        rows.append(
            {
                "path": path_dict(path)["expression"],
                "orders": [list(a) for a in order],
                "cost": cost,
                "wall_time": best,
                "ops": stats.ops,
            }
        )
    ranks = sorted(range(len(rows)), key=lambda k: (rows[k]["cost"], k))
    model_rank = [ranks.index(k) for k in range(len(rows))]
    for k, row in enumerate(rows):
        row["model_rank"] = model_rank[k]
    times = [r["wall_time"] for r in rows]
    rep = RunReport(command="bench", kernel=spec.canonical(), dims=dict(spec.index_dims), cost_model=model.name, bench=rows)
    rep.search = {"ranking_inversions": _inversions(model_rank, times), "candidates": len(rows)}
    _emit(args, rep, out)
    return EXIT_OK


def cmd_gen(args, out):
    try:
        dims = tuple(int(x) for x in args.dims.split(","))
    except ValueError:
        raise UsageError(f"bad --dims {args.dims!r}; expected sizes like 8,8,8") from None
    t = gen_random(dims, args.density, args.seed)
    Path(args.out).write_text(format_tns(t))
    out.write(f"wrote {t.nnz} nonzeros to {args.out}\n")
    return EXIT_OK


COMMANDS = {
    "optimize": cmd_optimize,
    "explain": cmd_explain,
    "run": cmd_run,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "gen": cmd_gen,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except ResourceLimitError as e:
        print(f"spttn: resource limit: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except (UsageError, SpttnError, ValueError, OSError) as e:
        print(f"spttn: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
