"""``hss`` command-line front end."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from .baselines import BaselineKind, best_of_swap
from .codec import encode_blocked_csr, encode_hier_cp, metadata_bits, save_encoding
from .cost import CostTable, ed2, edp, energy_of, geomean
from .highlight import ArchConfig, SimReport, UnsupportedWorkload, simulate, simulate_dsso
from .pattern import PatternError, as_pattern, enumerate_degrees, ratio_set
from .tensor import AT_MOST, EXACT, conforms, load_tensor, save_tensor, sparsify
from .workloads import (
    DEFAULT_A_PATTERNS,
    DEFAULT_B_DENSITIES,
    MMWorkload,
    load_workload,
    workload_from_manifest,
)

DESIGNS = ("tc", "stc", "dstc", "s2ta", "highlight", "highlight-dsso")
EXIT_OK, EXIT_ERROR, EXIT_UNSUPPORTED = 0, 1, 2

CSV_COLUMNS = ("id", "design", "cycles", "energy_buffers_pj", "energy_compute_pj",
               "energy_saf_pj", "energy_total_pj", "edp", "ed2", "speedup_vs_tc",
               "utilization", "supported")


def run_design(design: str, w: MMWorkload, cfg: ArchConfig, table: CostTable,
               functional: bool = False) -> SimReport:
    if design == "highlight":
        return simulate(w, cfg, functional)
    if design == "highlight-dsso":
        return simulate_dsso(w, replace(cfg, dsso_enabled=True), functional)
    if design in {k.value for k in BaselineKind}:
        return best_of_swap(design, w, cfg, table, functional)
    raise ValueError(f"unknown design {design!r}; choose from {', '.join(DESIGNS)}")


# ---------------------------------------------------------------- sweep

@dataclass
class SweepManifest:
    workloads: list[dict]
    designs: list[str]
    arch: ArchConfig = field(default_factory=ArchConfig)
    costs: CostTable = field(default_factory=CostTable.default)
    out: str | None = None
    skip_unsupported: bool = True
    functional: bool = False

    def __post_init__(self):
        if not self.workloads:
            raise ValueError("sweep manifest has no workloads")
        if not self.designs:
            raise ValueError("sweep manifest has no designs")
        for d in self.designs:
            if d not in DESIGNS:
                raise ValueError(f"unknown design {d!r}")


def grid_workloads(a_patterns=DEFAULT_A_PATTERNS, b_densities=DEFAULT_B_DENSITIES,
                   dims=((1024, 1024, 1024),), seeds=(0,)) -> list[dict]:
    out = []
    for m, k, n in dims:
        for seed in seeds:
            for p in a_patterns:
                for d in b_densities:
                    out.append({"m": m, "k": k, "n": n, "seed": seed,
                                "a_pattern": str(p), "b_density": str(Fraction(d))})
    return out


def _resolve(base: Path, p):
    path = Path(p)
    return path if path.is_absolute() else base / path


def load_manifest(path) -> SweepManifest:
    """Read a sweep manifest.

    Keys: ``designs`` (list), then either ``workloads`` (list of workload
    objects) or ``grid`` (``a_patterns``, ``b_densities``, ``dims``,
    ``seeds``), plus optional ``arch`` and ``costs`` file paths, ``out``,
    ``skip_unsupported`` and ``functional``.
    """
    path = Path(path)
    obj = json.loads(path.read_text())
    if not isinstance(obj, dict):
        raise ValueError("manifest must be a JSON object")
    base = path.parent
    if "workloads" in obj:
        works = list(obj["workloads"])
    elif "grid" in obj:
        g = obj["grid"]
        works = grid_workloads(g.get("a_patterns", DEFAULT_A_PATTERNS),
                               [Fraction(str(d)) for d in g.get("b_densities", DEFAULT_B_DENSITIES)],
                               [tuple(d) for d in g.get("dims", [[1024, 1024, 1024]])],
                               g.get("seeds", [0]))
    else:
        raise ValueError("manifest needs 'workloads' or 'grid'")
    return SweepManifest(
        workloads=works,
        designs=list(obj.get("designs", DESIGNS)),
        arch=ArchConfig.load(_resolve(base, obj["arch"])) if "arch" in obj else ArchConfig(),
        costs=CostTable.load(_resolve(base, obj["costs"])) if "costs" in obj else CostTable.default(),
        out=str(_resolve(base, obj["out"])) if "out" in obj else None,
        skip_unsupported=bool(obj.get("skip_unsupported", True)),
        functional=bool(obj.get("functional", False)),
    )


def _num(x) -> str:
    return repr(float(x))


def run_sweep(manifest: SweepManifest) -> tuple[list[dict], dict]:
    """One row per (workload, design) in manifest order, plus per-design geomeans."""
    rows = []
    for spec in manifest.workloads:
        w = workload_from_manifest(spec)
        tc_cycles = run_design("tc", w, manifest.arch, manifest.costs).cycles
        for design in manifest.designs:
            try:
                rep = run_design(design, w, manifest.arch, manifest.costs, manifest.functional)
            except UnsupportedWorkload as exc:
                if not manifest.skip_unsupported:
                    raise
                rows.append({"id": w.id, "design": design, "supported": False, "reason": str(exc)})
                continue
            e = energy_of(rep.counts, manifest.costs)
            rows.append({
                "id": w.id, "design": design, "cycles": rep.cycles,
                "energy_buffers_pj": e.buffers_pj, "energy_compute_pj": e.compute_pj,
                "energy_saf_pj": e.saf_pj, "energy_total_pj": e.total_pj,
                "edp": edp(rep, manifest.costs), "ed2": ed2(rep, manifest.costs),
                "speedup_vs_tc": tc_cycles / rep.cycles,
                "utilization": float(rep.utilization), "supported": True,
            })
    summary = {}
    for design in manifest.designs:
        ok = [r for r in rows if r["design"] == design and r["supported"]]
        if not ok:
            summary[design] = {"supported_rows": 0}
            continue
        summary[design] = {
            "supported_rows": len(ok),
            "cycles": geomean(r["cycles"] for r in ok),
            "energy_total_pj": geomean(r["energy_total_pj"] for r in ok),
            "edp": geomean(r["edp"] for r in ok),
            "ed2": geomean(r["ed2"] for r in ok),
            "speedup_vs_tc": geomean(r["speedup_vs_tc"] for r in ok),
        }
    return rows, summary


def sweep_csv(rows: list[dict], summary: dict) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for r in rows:
        if not r["supported"]:
            wr.writerow([r["id"], r["design"]] + [""] * (len(CSV_COLUMNS) - 3) + ["false"])
            continue
        wr.writerow([r["id"], r["design"], r["cycles"]]
                    + [_num(r[c]) for c in CSV_COLUMNS[3:11]] + ["true"])
    # footer: geomeans over the supported rows of each design
    wr.writerow([])
    wr.writerow(["GEOMEAN", "design", "cycles", "energy_total_pj", "edp", "ed2",
                 "speedup_vs_tc", "supported_rows"])
    for design, s in summary.items():
        if not s["supported_rows"]:
            wr.writerow(["GEOMEAN", design, "", "", "", "", "", 0])
            continue
        wr.writerow(["GEOMEAN", design] + [_num(s[c]) for c in
                    ("cycles", "energy_total_pj", "edp", "ed2", "speedup_vs_tc")]
                    + [s["supported_rows"]])
    return buf.getvalue()


def write_sweep(rows, summary, out) -> tuple[Path, Path]:
    out = Path(out)
    out.write_text(sweep_csv(rows, summary))
    js = out.with_suffix(".json")
    js.write_text(json.dumps({"rows": rows, "geomean": summary}, indent=2, sort_keys=True) + "\n")
    return out, js


# ---------------------------------------------------------------- helpers

def parse_rank_ranges(text: str) -> list[set[Fraction]]:
    """``"2:2..8,2:2..4"`` -> one set of G/H ratios per rank."""
    sets = []
    for part in text.split(","):
        part = part.strip()
        try:
            g, hs = part.split(":")
            if ".." in hs:
                lo, hi = hs.split("..")
                h_values = range(int(lo), int(hi) + 1)
            else:
                h_values = [int(hs)]
            g = int(g)
        except ValueError as exc:
            raise PatternError(f"cannot parse rank range {part!r}") from exc
        if not h_values or min(h_values) < g:
            raise PatternError(f"rank range {part!r} needs H >= G")
        sets.append(ratio_set(g, h_values))
    return sets


def infer_pattern(t, cfg: ArchConfig | None = None):
    """Largest-block C1(g1:h1)->C0(g0:h0) (within hardware ranges) that ``t`` conforms to."""
    cfg = cfg or ArchConfig()
    best = None
    for h0 in range(cfg.h0_max, 1, -1):
        for h1 in range(cfg.h1_max, 0, -1):
            if t.cols % (h0 * h1):
                continue
            text = (f"C1({cfg.rank1_g}:{h1})->C0({cfg.rank0_g}:{h0})" if h1 > 1
                    else f"C0({cfg.rank0_g}:{h0})")
            if h1 > 1 and cfg.rank1_g > h1:
                continue
            spec = as_pattern(text)
            if conforms(t, spec, AT_MOST) and (best is None or h0 * h1 > best[0]):
                best = (h0 * h1, spec)
    if best is None:
        raise PatternError("tensor conforms to no supported G:H pattern; pass --pattern")
    return best[1]


def _load_arch(path):
    return ArchConfig.load(path) if path else ArchConfig()


def _load_costs(path):
    return CostTable.load(path) if path else CostTable.default()


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    w = load_workload(args.workload)
    cfg, table = _load_arch(args.arch), _load_costs(args.costs)
    rep = run_design(args.design, w, cfg, table, functional=not args.counts_only)
    out = rep.to_dict(include_output=args.include_output)
    out["energy"] = energy_of(rep.counts, table).to_dict()
    out["edp"] = edp(rep, table)
    out["ed2"] = ed2(rep, table)
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.manifest:
        man = load_manifest(args.manifest)
    else:
        m = k = n = args.size
        man = SweepManifest(grid_workloads(dims=((m, k, n),), seeds=(args.seed,)), list(DESIGNS))
    if args.designs is not None:
        man.designs = [d.strip() for d in args.designs.split(",") if d.strip()]
        man.__post_init__()
    if args.arch:
        man.arch = _load_arch(args.arch)
    if args.costs:
        man.costs = _load_costs(args.costs)
    if args.strict:
        man.skip_unsupported = False
    out = args.out or man.out
    if not out:
        raise ValueError("no output path: pass --out or set 'out' in the manifest")
    rows, summary = run_sweep(man)
    csv_path, json_path = write_sweep(rows, summary, out)
    print(f"wrote {len(rows)} rows to {csv_path} and {json_path}")
    for design, s in summary.items():
        if s["supported_rows"]:
            print(f"  {design:15s} geomean EDP {s['edp']:.6g} over {s['supported_rows']} rows")
        else:
            print(f"  {design:15s} no supported rows")
    return EXIT_OK


def cmd_sparsify(args) -> int:
    t = load_tensor(args.input)
    out = sparsify(t, args.pattern, occupancy_mode=args.mode, pad=args.pad)
    save_tensor(args.out, out)
    print(f"density {out.density()} ({out.nnz()} of {out.rows * out.cols} kept)")
    return EXIT_OK


def cmd_encode(args) -> int:
    t = load_tensor(args.input)
    if args.format == "hiercp":
        spec = as_pattern(args.pattern) if args.pattern else infer_pattern(t, _load_arch(args.arch))
        enc = encode_hier_cp(t, spec)
        label = str(spec)
    else:
        enc = encode_blocked_csr(t, args.block, pad=True)
        label = f"block {args.block}"
    save_encoding(args.out, enc)
    print(f"{args.format} ({label}): {enc.nnz()} values, {metadata_bits(enc)} metadata bits")
    return EXIT_OK


def cmd_degrees(args) -> int:
    ds = enumerate_degrees(parse_rank_ranges(args.ranks))
    if args.json:
        print(json.dumps({"count": len(ds), "densities": [str(d) for d in ds]}))
    else:
        print(f"{len(ds)} distinct densities")
        for d in ds:
            print(f"  density {str(d):>6s}  sparsity {float(1 - d):.2%}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hss", description="Hierarchical structured sparsity tools")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one workload on one design")
    s.add_argument("--workload", required=True, help="workload manifest (JSON)")
    s.add_argument("--arch", help="architecture config (JSON)")
    s.add_argument("--costs", help="cost table (JSON)")
    s.add_argument("--design", choices=DESIGNS, default="highlight")
    s.add_argument("--out", help="write the report here instead of stdout")
    s.add_argument("--counts-only", action="store_true", help="skip the functional output")
    s.add_argument("--include-output", action="store_true", help="embed the output matrix")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run a workload x design grid and write CSV + JSON")
    s.add_argument("--manifest", help="sweep manifest (JSON); default is the 3x4 synthetic grid")
    s.add_argument("--out", help="CSV path; the JSON mirror goes next to it")
    s.add_argument("--designs", help="comma-separated design list override")
    s.add_argument("--arch")
    s.add_argument("--costs")
    s.add_argument("--size", type=int, default=1024, help="M=K=N for the default grid")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--strict", action="store_true", help="fail on unsupported pairs")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("sparsify", help="prune a tensor to a pattern")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--pattern", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=(EXACT, AT_MOST), default=EXACT)
    s.add_argument("--pad", action="store_true", help="zero-pad K up to the block size")
    s.set_defaults(func=cmd_sparsify)

    s = sub.add_parser("encode", help="compress a sparse tensor")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--format", choices=("hiercp", "bcsr"), required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--pattern", help="pattern for hiercp (inferred when omitted)")
    s.add_argument("--block", type=int, default=4, help="block width for bcsr")
    s.add_argument("--arch", help="hardware ranges used when inferring the pattern")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("degrees", help="enumerate the densities a rank configuration supports")
    s.add_argument("--ranks", required=True, help='per-rank ranges, e.g. "2:2..8,2:2..4"')
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_degrees)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UnsupportedWorkload as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
