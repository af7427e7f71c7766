from __future__ import annotations

import argparse
from pathlib import Path
from typing import Any, Callable, Sequence

import pandas as pd

from sofic_dim.acceptance import run_checks
from sofic_dim.betti import betti_table
from sofic_dim.cache import CellCache
from sofic_dim.config import TREE_OPS, Manifest, load_manifest, manifest_hash
from sofic_dim.errors import ManifestError
from sofic_dim.groups import parse_group_spec
from sofic_dim.outputs import (
    approx_summary,
    epsdim_summary,
    stamp_fields,
    write_json,
    write_table,
)
from sofic_dim.parallel import rng_stream
from sofic_dim.pipeline import (
    PipelineProblem,
    approx_table,
    defect_quantiles,
    dim_pipeline,
    finite_dimension_value,
    parse_coefficients,
    parse_schedule_entry,
    probe_table,
    rep_from_spec,
    summarize_brackets,
    tuple_from_spec,
)
from sofic_dim.tree_calculus import (
    EdgeFunction,
    averaging_operator,
    cohomology_push,
    edge_frame,
    embed_via_phi,
    flow_generator,
    flow_power_sum,
    hodge_decompose,
    interpolated_constant,
    source_push,
    source_push_limit,
    tree_ball,
    tree_flow,
    write_dot,
)

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_MANIFEST = "manifest.yml"
DOT_DEPTH = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", type=str, default="", help="清单文件路径（YAML 或 JSON）")
    parser.add_argument("--output-dir", type=str, default=None, help="输出目录")
    parser.add_argument("--no-cache", action="store_true", help="不读写单元缓存")
    parser.add_argument("--force-refresh", action="store_true", help="忽略已有缓存，重新计算")


def _parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Sofic covering-dimension experiments")
    commands = parser.add_subparsers(dest="command", required=True)

    approx = commands.add_parser("approx", help="置换模型缺陷与自由度报告")
    _add_common(approx)
    approx.add_argument("--group", type=str, default=None, help="群，例如 free:2、cyclic:5")
    approx.add_argument("--degrees", type=str, default=None, help="度数列表，例如 50,100,200")
    approx.add_argument("--seeds", type=str, default=None, help="种子：1..10、1,4,9 或 N")
    approx.add_argument("--radius", type=int, default=None, help="检验词的球半径")

    epsdim = commands.add_parser("epsdim", help="ε-维数上下界")
    _add_common(epsdim)
    epsdim.add_argument("--group", type=str, default=None, help="群")
    epsdim.add_argument("--rep", type=str, default=None, help="表示：character:1,2 或 trivial[:k]")
    epsdim.add_argument("--vectors", type=str, default=None, help="生成组系数，例如 1,2")
    epsdim.add_argument("--degrees", type=str, default=None, help="度数列表")
    epsdim.add_argument("--seeds", type=str, default=None, help="种子")
    epsdim.add_argument(
        "--schedule", type=str, action="append", default=None, help="(F,m,δ)，例如 generators:2:0.1"
    )
    epsdim.add_argument("--epsilons", type=str, default=None, help="ε 网格，例如 0.5,0.25,0.1")
    epsdim.add_argument("--witnesses", type=int, default=None, help="每个单元的随机见证个数")
    epsdim.add_argument("--compression", type=str, default=None, help="ℤ 情形的分块数列表")
    epsdim.add_argument("--folner-window", type=int, default=None, help="Følner 平均窗口长度")
    epsdim.add_argument("--period", type=int, default=None, help="等差块的周期")
    epsdim.add_argument("--modes", type=str, default=None, help="hom、vect 或 hom,vect")
    epsdim.add_argument("--p", type=float, default=None, help="ℓᵖ 指数")
    epsdim.add_argument("--coefficients", type=str, default=None, help="群代数探针，例如 0:0.5,2:0.5")
    epsdim.add_argument("--samples", type=int, default=None, help="探针的算子样本数")

    tree = commands.add_parser("tree", help="自由群树上的链计算")
    _add_common(tree)
    tree.add_argument("--op", type=str, choices=TREE_OPS, default=None, help="运算")
    tree.add_argument("--rank", type=int, default=None, help="自由群秩 n")
    tree.add_argument("--radius", type=int, default=None, help="球半径 R")
    tree.add_argument("--level", type=int, default=None, help="推移层数 k")
    tree.add_argument("--seeds", type=str, default=None, help="随机边函数的种子")
    tree.add_argument("--p", type=float, default=None, help="插值常数的 p")
    tree.add_argument("--exact", action="store_true", help="有理数精确运算")

    betti = commands.add_parser("betti", help="Schreier 复形的 β₁ 估计")
    _add_common(betti)
    betti.add_argument("--n", type=int, default=None, help="自由群秩 n")
    betti.add_argument("--degrees", type=str, default=None, help="度数列表")
    betti.add_argument("--seeds", type=str, default=None, help="种子")

    verify = commands.add_parser("verify", help="运行验收检查")
    _add_common(verify)
    verify.add_argument("--quick", action="store_true", help="缩小样本规模")
    verify.add_argument("--check", type=str, action="append", default=None, help="只运行指定检查")

    return parser.parse_args(argv)


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    mapping = {
        "group": "group",
        "rep": "rep",
        "vectors": "vectors",
        "degrees": "degrees",
        "seeds": "seeds",
        "schedule": "schedule",
        "epsilons": "epsilons",
        "witnesses": "witnesses",
        "compression": "compression",
        "folner_window": "folner_window",
        "period": "period",
        "modes": "modes",
        "p": "p",
        "coefficients": "coefficients",
        "samples": "samples",
        "radius": "radius",
        "op": "op",
        "rank": "rank",
        "level": "level",
        "n": "n",
        "output_dir": "output_dir",
    }
    overrides = {key: getattr(args, attr) for attr, key in mapping.items() if hasattr(args, attr)}
    if getattr(args, "exact", False):
        overrides["arithmetic"] = "exact"
    return overrides


def _resolve_manifest_path(raw: str) -> Path | None:
    if raw:
        return Path(raw)
    default = ROOT / DEFAULT_MANIFEST
    return default if default.exists() else None


def _run_approx(manifest: Manifest, digest: str, output_dir: Path, _cache: CellCache) -> int:
    group = parse_group_spec(manifest.group, Path.cwd())
    table = approx_table(group, manifest.degrees, manifest.seeds, radius=manifest.radius)
    write_table(output_dir / "approx.csv", table, digest)
    write_table(output_dir / "approx_quantiles.csv", defect_quantiles(table), digest)
    summary = write_json(output_dir / "approx.json", approx_summary(table, group.text), digest)
    print(
        f"近似报告已保存：{output_dir}，共 {summary['cells']} 个单元，"
        f"最大缺陷 {summary.get('max_defect', 0.0):.4g}"
    )
    return 0


def _run_probe(manifest: Manifest, digest: str, output_dir: Path) -> int:
    group = parse_group_spec(manifest.group, Path.cwd())
    table = probe_table(
        group,
        parse_coefficients(manifest.coefficients),
        manifest.degrees,
        manifest.seeds,
        manifest.epsilons,
        samples=manifest.samples,
        p=manifest.p,
    )
    write_table(output_dir / "probe.csv", table, digest)
    print(f"探针结果已保存：{output_dir / 'probe.csv'}，共 {len(table)} 行")
    return 0


def _run_epsdim(manifest: Manifest, digest: str, output_dir: Path, cache: CellCache) -> int:
    if manifest.coefficients:
        return _run_probe(manifest, digest, output_dir)
    group = parse_group_spec(manifest.group, Path.cwd())
    rep = rep_from_spec(manifest.rep, group)
    problem = PipelineProblem(
        generating=tuple_from_spec(manifest.vectors or None, rep, manifest.p),
        degrees=manifest.degrees,
        seeds=manifest.seeds,
        schedule=tuple(parse_schedule_entry(text) for text in manifest.schedule),
        epsilons=manifest.epsilons,
        witnesses=manifest.witnesses,
        folner=manifest.folner_window,
        compression=manifest.compression,
        period=manifest.period,
        modes=manifest.modes,
        p=manifest.p,
    )
    table = dim_pipeline(problem, cache=cache, manifest_hash=digest)
    write_table(output_dir / "epsdim.csv", table, digest)
    write_table(output_dir / "epsdim_summary.csv", summarize_brackets(table), digest)
    summary = epsdim_summary(table)
    if group.is_finite:
        summary["closed_form"] = finite_dimension_value(rep)
    write_json(output_dir / "epsdim.json", summary, digest)
    print(f"ε-维数表已保存：{output_dir / 'epsdim.csv'}，共 {len(table)} 行")
    return 0


def _tree_edges(
    name: str, f: EdgeFunction, digest: str, output_dir: Path, extra: dict[str, Any]
) -> int:
    write_table(output_dir / f"tree_{name}.csv", edge_frame(f), digest)
    dot_path = output_dir / f"tree_{name}.dot"
    write_dot(f, dot_path, max_depth=DOT_DEPTH, header=stamp_fields(digest))
    write_json(output_dir / f"tree_{name}.json", extra, digest)
    print(f"边函数已保存：{output_dir / f'tree_{name}.csv'}，共 {f.ball.edge_count} 条边")
    return 0


def _run_tree(manifest: Manifest, digest: str, output_dir: Path, _cache: CellCache) -> int:
    op, exact = manifest.op, manifest.exact
    if op == "generator":
        f = flow_generator(tree_ball(2, manifest.radius), exact)
        extra = {"power_sum": f.power_sum(2), "closed_form": flow_power_sum(2, manifest.radius)}
        return _tree_edges(op, f, digest, output_dir, extra)
    if op == "flow":
        f = tree_flow(tree_ball(manifest.rank, manifest.radius), exact)
        extra = {"power_sum": f.power_sum(2)}
        return _tree_edges(op, f, digest, output_dir, extra)
    if op == "push":
        f = flow_generator(tree_ball(2, manifest.radius), exact)
        push = source_push(f, manifest.level)
        extra = {"central": push.central_values(), "limit": source_push_limit()}
        return _tree_edges(op, push.result, digest, output_dir, extra)
    if op == "cohomology":
        ball = tree_ball(manifest.rank, manifest.radius)
        push = cohomology_push(manifest.rank, manifest.level, ball)
        extra = {"translates": len(push.translates), "level": manifest.level}
        return _tree_edges(op, push.remainder, digest, output_dir, extra)
    if op == "embed":
        f = flow_generator(tree_ball(2, manifest.radius), exact)
        frames = []
        for shift in range(1, manifest.rank):
            embedded = embed_via_phi(f, shift, manifest.rank)
            frame = edge_frame(embedded).assign(shift=shift)
            frames.append(frame[embedded.values != 0])
        table = pd.concat(frames, ignore_index=True)
        write_table(output_dir / "tree_embed.csv", table, digest)
        print(f"嵌入边函数已保存：{output_dir / 'tree_embed.csv'}，共 {len(table)} 行")
        return 0
    if op == "hodge":
        ball = tree_ball(manifest.rank, manifest.radius)
        rows = []
        for seed in manifest.seeds:
            values = rng_stream(seed, "tree-hodge").standard_normal(ball.edge_count)
            parts = hodge_decompose(EdgeFunction(ball, values))
            rows.append(
                {
                    "seed": seed,
                    "residual": parts.interior_residual,
                    "norm": float((values**2).sum() ** 0.5),
                    "harmonic_norm": parts.harmonic.norm(2),
                    "exact_norm": parts.exact_part.norm(2),
                }
            )
        table = pd.DataFrame(rows)
        write_table(output_dir / "tree_hodge.csv", table, digest)
        print(f"Hodge 分解已保存：最大残差 {table['residual'].max():.3g}")
        return 0
    radii = list(range(2, manifest.radius + 1, 2)) or [manifest.radius]
    rows = []
    for radius in radii:
        operator = averaging_operator(tree_ball(manifest.rank, radius))
        rows.append(
            {
                "radius": radius,
                "truncated_norm": operator.truncated_norm,
                "limit": operator.limit,
                "iterations": operator.iterations,
                "p": manifest.p,
                "c_p": interpolated_constant(operator.truncated_norm, manifest.p),
            }
        )
    table = pd.DataFrame(rows)
    write_table(output_dir / "tree_spectral.csv", table, digest)
    print(f"平均算子范数已保存：极限估计 {table['limit'].iloc[-1]:.6f}")
    return 0


def _run_betti(manifest: Manifest, digest: str, output_dir: Path, _cache: CellCache) -> int:
    table = betti_table(manifest.n, manifest.degrees, manifest.seeds)
    write_table(output_dir / "betti.csv", table, digest)
    connected = int((table["components"] == 1).sum())
    payload = {"n": manifest.n, "rows": len(table), "connected": connected, "limit": manifest.n - 1}
    write_json(output_dir / "betti.json", payload, digest)
    print(f"β₁ 估计已保存：{output_dir / 'betti.csv'}，连通样本 {connected}/{len(table)}")
    return 0


def _run_verify(quick: bool, names: Sequence[str] | None) -> int:
    results = run_checks(quick, tuple(names or ()))
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.name}: {result.detail}")
    failed = [result.name for result in results if not result.passed]
    if failed:
        print(f"验收未通过：{', '.join(failed)}")
        return 1
    print(f"验收全部通过，共 {len(results)} 项。")
    return 0


RUNNERS: dict[str, Callable[[Manifest, str, Path, CellCache], int]] = {
    "approx": _run_approx,
    "epsdim": _run_epsdim,
    "tree": _run_tree,
    "betti": _run_betti,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = _parse_args(argv)
    if args.command == "verify":
        return _run_verify(args.quick, args.check)

    manifest_path = _resolve_manifest_path(args.manifest)
    if manifest_path is not None and not manifest_path.exists():
        print(f"清单文件不存在：{manifest_path}")
        return 2
    try:
        manifest = load_manifest(manifest_path, args.command, _overrides(args))
    except ManifestError as exc:
        print(f"清单无效：{exc}")
        return 2

    digest = manifest_hash(manifest)
    output_dir = Path(manifest.output_dir)
    cache = CellCache(
        Path(manifest.cache_dir) if manifest.cache_dir else None,
        use_cache=not args.no_cache,
        force_refresh=args.force_refresh,
    )
    try:
        return RUNNERS[args.command](manifest, digest, output_dir, cache)
    except Exception as exc:
        print(f"运行失败：{exc}")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
