"""Command-line pipelines: cuts, analyze, dtn, flow, verify, circle, interval.

Exit codes: 0 when all requested identities pass (or are flagged
inconclusive with a recorded reason), 2 on configuration or input errors,
3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import exact1d, fem, flow, glued, dtn
from . import partition as pt
from .mesh import generate_mesh, read_mesh

SCHEMA_VERSION = 1


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    mesh_path: str = None
    shape: tuple = None
    h: float = 0.1
    eig_index: int = None
    partition_path: str = None
    weight_source: str = "maximal"   # maximal | minimal | random[:seed] | all | path
    sigma_max: float = None
    grid_n: int = 25
    tol: float = None
    out_dir: str = None
    exact: str = None
    k: int = None
    length: float = math.pi
    points: list = None
    seed: int = 0

    def validate(self):
        if self.exact is None:
            if (self.mesh_path is None) == (self.shape is None):
                raise ConfigError("choose exactly one of --mesh and --shape")
            if (self.eig_index is None) == (self.partition_path is None):
                raise ConfigError("choose exactly one of --eig and --partition")
        if self.tol is not None and self.tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.grid_n < 3:
            raise ConfigError("--grid needs at least 3 points")


def _parse_shape(spec: str):
    kind, _, rest = spec.partition(":")
    try:
        if kind == "rect":
            a, b = (float(x) for x in rest.split(","))
            return ("rectangle", a, b)
        if kind == "disk":
            return ("disk", float(rest))
    except ValueError as exc:
        raise ConfigError(f"bad shape spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown shape {spec!r} (use rect:a,b or disk:r)")


def _load_mesh(cfg: RunConfig):
    if cfg.mesh_path is not None:
        mesh, regions = read_mesh(cfg.mesh_path)
        return mesh, regions
    shape = cfg.shape
    if shape[0] == "rectangle":
        # round subdivisions up to multiples of 12 so low separable modes
        # stay mesh-aligned
        _, a, b = shape
        nx = max(12, 12 * math.ceil(a / cfg.h / 12))
        ny = max(12, 12 * math.ceil(b / cfg.h / 12))
        from .mesh import rect_mesh
        return rect_mesh(a, b, nx, ny), None
    return generate_mesh(shape, cfg.h), None


def _load_partition(cfg: RunConfig, mesh, regions):
    if cfg.partition_path is not None:
        with open(cfg.partition_path) as f:
            try:
                doc = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed partition JSON: {exc}") from exc
        p, w = pt.partition_from_json(doc)
        pt.validate_partition(mesh, p)
        return p, w
    if cfg.eig_index is not None:
        pencil = fem.assemble_dirichlet(mesh, range(mesh.num_cells))
        pairs = fem.eigensolve(pencil, ("lowest", cfg.eig_index + 3))
        lam = pairs[cfg.eig_index - 1].value
        cluster = [p.vector for p in pairs
                   if abs(p.value - lam) <= 1e-7 * (1.0 + abs(lam))]
        vec = glued.align_cluster_representative(cluster) if len(cluster) > 1 \
            else pairs[cfg.eig_index - 1].vector
        full = np.zeros(mesh.num_nodes)
        full[pencil.free_nodes] = vec
        return glued.extract_nodal_partition(mesh, full), None
    if regions is not None:
        return pt.partition_from_labels(mesh, regions), None
    raise ConfigError("no partition source given")


def _pick_weights(cfg: RunConfig, mesh, p, provided):
    src = cfg.weight_source
    if src == "explicit":
        if provided is None:
            raise ConfigError("partition file carries no signs but --weights explicit given")
        return provided
    if src == "maximal":
        return pt.maximal_cut_weights(p, mesh)
    if src == "minimal":
        return pt.minimal_cut_weights(p, mesh)
    if src.startswith("random"):
        seed = cfg.seed
        if ":" in src:
            seed = int(src.split(":", 1)[1])
        return pt.random_valid_weights(p, mesh, np.random.default_rng(seed))
    if os.path.exists(src):
        with open(src) as f:
            return pt.weights_from_json(json.load(f))
    raise ConfigError(f"unknown weight source {src!r}")


def _emit(doc: dict, cfg: RunConfig, name: str = "report.json"):
    text = json.dumps(doc, indent=2, default=_json_default)
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        with open(os.path.join(cfg.out_dir, name), "w") as f:
            f.write(text + "\n")
    print(text)


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, frozenset):
        return sorted(x)
    raise TypeError(f"not JSON serializable: {type(x)}")


def _write_csv(cfg: RunConfig, name: str, header: list, rows: list):
    if not cfg.out_dir:
        return
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, name), "w", newline="") as f:
        wtr = csv.writer(f)
        wtr.writerow(header)
        wtr.writerows(rows)


def emit_plot_data(cfg: RunConfig, flow_set=None, dtn_op=None, mesh=None, p=None):
    """CSV files for external plotting: flow branches, DtN spectrum,
    partition segment geometry."""
    if flow_set is not None:
        header = ["sigma"] + [f"g{m + 1}" for m in range(flow_set.n_branches)]
        rows = [[s] + list(flow_set.branches[:, t])
                for t, s in enumerate(flow_set.sigma_grid)]
        _write_csv(cfg, "branches.csv", header, rows)
    if dtn_op is not None:
        _write_csv(cfg, "dtn_spectrum.csv", ["eigenvalue"],
                   [[v] for v in np.sort(dtn_op.eigenvalues)])
        _write_csv(cfg, "dtn_matrix.csv",
                   [f"c{j}" for j in range(dtn_op.matrix.shape[1])],
                   [list(row) for row in dtn_op.matrix])
    if mesh is not None and p is not None and p.dim == 2:
        rows = []
        for seg in p.segments:
            for n in seg.nodes:
                rows.append([seg.id, float(mesh.nodes[n][0]), float(mesh.nodes[n][1])])
        _write_csv(cfg, "partition.csv", ["segment", "x", "y"], rows)


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------

def cmd_circle(cfg: RunConfig) -> int:
    rep = exact1d.circle_report(cfg.k)
    doc = rep.to_json()
    _emit(doc, cfg, "circle_report.json")
    return 0 if all(rep.identities.values()) else 1


def cmd_interval(cfg: RunConfig) -> int:
    rep = exact1d.interval_report(cfg.k, cfg.length, cfg.points)
    doc = rep.to_json()
    _emit(doc, cfg, "interval_report.json")
    if not rep.is_chi_nodal:
        return 0  # a clean negative answer is a successful run
    return 0 if all(rep.identities.values()) else 1


def cmd_cuts(cfg: RunConfig) -> int:
    if cfg.partition_path is None:
        raise ConfigError("cuts needs --partition")
    with open(cfg.partition_path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed partition JSON: {exc}") from exc
    p, w = pt.partition_from_json(doc)
    g = pt.build_neighbor_graph(p)
    coloring = pt.is_bipartite(g)
    minimal = pt.minimal_valid_cut(p)
    out = {
        "schema_version": SCHEMA_VERSION,
        "k": p.k,
        "segments": len(p.segments),
        "neighbor_edges": [list(e) for e in g.edges],
        "bipartite": coloring is not None,
        "two_coloring": coloring,
        "minimal_cut": {
            "members": sorted(minimal.members),
            "cardinality": len(minimal.members),
            "complement_connected": True,
            "witness": minimal.witness,
        },
        "maximal_cut": sorted(s.id for s in p.segments),
    }
    if w is not None:
        cut = pt.cut_from_weights(p, w)
        out["provided_weights"] = {
            "valid": cut.witness is not None,
            "induced_cut": sorted(cut.members),
        }
    _emit(out, cfg, "cuts.json")
    return 0


def _fem_pipeline(cfg: RunConfig):
    mesh, regions = _load_mesh(cfg)
    p, provided = _load_partition(cfg, mesh, regions)
    return mesh, p, provided


def cmd_analyze(cfg: RunConfig) -> int:
    mesh, p, provided = _fem_pipeline(cfg)
    w = _pick_weights(cfg, mesh, p, provided) if cfg.weight_source != "all" else None
    kwargs = {}
    if cfg.tol is not None:
        kwargs["equip_rtol"] = cfg.tol
    rep = glued.check_spcc(mesh, p, w, **kwargs)
    doc = rep.to_json()
    doc["weights"] = pt.weights_to_json(w) if w is not None else None
    _emit(doc, cfg, "analyze.json")
    emit_plot_data(cfg, mesh=mesh, p=p)
    return 0


def _dtn_bundle(cfg: RunConfig, mesh, p, w):
    ground = glued.compute_ground_data(mesh, p)
    space = glued.build_glued_space(mesh, p, w)
    rep = glued.check_spcc(mesh, p, w)
    if not rep.is_chi_nodal:
        raise fem.FemError("partition is not pair compatible: " + "; ".join(rep.messages))
    op = dtn.assemble_dtn(mesh, p, w, ground=ground, space=space)
    counts = dtn.index_and_kernel(op)
    return ground, space, rep, op, counts


def cmd_dtn(cfg: RunConfig) -> int:
    mesh, p, provided = _fem_pipeline(cfg)
    w = _pick_weights(cfg, mesh, p, provided)
    ground, space, rep, op, counts = _dtn_bundle(cfg, mesh, p, w)
    ok_def = rep.defect == counts["morse"]
    ok_mult = rep.multiplicity == counts["kernel_dim"] + 1
    doc = {
        "schema_version": SCHEMA_VERSION,
        "k": p.k,
        "ell": rep.label,
        "delta": rep.defect,
        "lambda_star": ground.lambda_star,
        "dim_S": op.matrix.shape[0],
        "eigenvalues": sorted(op.eigenvalues.tolist()),
        "morse": counts["morse"],
        "kernel_dim": counts["kernel_dim"],
        "multiplicity": rep.multiplicity,
        "tol_kernel": op.tol_kernel,
        "asymmetry": op.asymmetry,
        "identities": {
            "defect_equals_morse": ok_def,
            "multiplicity_equals_kernel_plus_one": ok_mult,
        },
    }
    _emit(doc, cfg, "dtn.json")
    emit_plot_data(cfg, dtn_op=op, mesh=mesh, p=p)
    print(f"defect == morse: {'PASS' if ok_def else 'FAIL'}")
    print(f"multiplicity == kernel + 1: {'PASS' if ok_mult else 'FAIL'}")
    return 0 if (ok_def and ok_mult) else 1


def _run_flow(cfg, mesh, p, w, ground, space, rep, op, counts):
    lam = ground.lambda_star
    phi = glued.phi_star_vector(space, ground)
    band = glued.lambda_band(space.K, space.M, phi, lam)
    sigma_max = cfg.sigma_max
    if sigma_max is None:
        scale = float(np.abs(op.eigenvalues).max()) if op.eigenvalues.size else 0.0
        sigma_max = 10.0 * max(scale, 0.1 * (1.0 + abs(lam)))
    nev = max(rep.label + 2, p.k + 1)
    fset = flow.trace_branches(space, phi, lam, band, nev=nev,
                               sigma_max=sigma_max, grid_n=cfg.grid_n)
    cc = flow.crossing_count(fset)
    dual = flow.robin_duality_check(fset, op.eigenvalues, op.tol_kernel)
    return fset, cc, dual


def cmd_flow(cfg: RunConfig) -> int:
    mesh, p, provided = _fem_pipeline(cfg)
    w = _pick_weights(cfg, mesh, p, provided)
    ground, space, rep, op, counts = _dtn_bundle(cfg, mesh, p, w)
    fset, cc, dual = _run_flow(cfg, mesh, p, w, ground, space, rep, op, counts)
    ok = (cc["count"] == counts["morse"]) and cc["inconclusive"] == 0 and dual["ok"]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "crossings": cc["count"],
        "crossing_sigmas": cc["sigmas"],
        "inconclusive": cc["inconclusive"],
        "morse": counts["morse"],
        "morse_check": "pass" if ok else "fail",
        "branches_below_at_zero": fset.below_at_zero(),
        "ell_minus_one": rep.label - 1,
        "monotonicity_violation": fset.monotonicity_violation(),
        "robin_duality": dual,
    }
    _emit(doc, cfg, "flow.json")
    emit_plot_data(cfg, flow_set=fset, dtn_op=op, mesh=mesh, p=p)
    return 0 if ok else 1


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.exact == "circle":
        rep = exact1d.circle_report(cfg.k)
        doc = rep.to_json()
        doc["pass"] = all(rep.identities.values())
        _emit(doc, cfg, "report.json")
        for name, ok in rep.identities.items():
            print(f"{name}: {'PASS' if ok else 'FAIL'}")
        return 0 if doc["pass"] else 1
    if cfg.exact == "interval":
        rep = exact1d.interval_report(cfg.k, cfg.length, cfg.points)
        doc = rep.to_json()
        doc["pass"] = not rep.is_chi_nodal or all(rep.identities.values())
        _emit(doc, cfg, "report.json")
        return 0 if doc["pass"] else 1

    mesh, p, provided = _fem_pipeline(cfg)
    sources = ["maximal", "minimal", f"random:{cfg.seed}"] \
        if cfg.weight_source == "all" else [cfg.weight_source]
    results = []
    chi_records = []
    for src in sources:
        sub = RunConfig(**{**cfg.__dict__, "weight_source": src})
        w = _pick_weights(sub, mesh, p, provided)
        ground, space, rep, op, counts = _dtn_bundle(cfg, mesh, p, w)
        results.append((w, ground, space, rep, op, counts))
        chi_records.append({"weights": src, "morse": counts["morse"],
                            "kernel_dim": counts["kernel_dim"]})
    w, ground, space, rep, op, counts = results[0]
    fset, cc, dual = _run_flow(cfg, mesh, p, w, ground, space, rep, op, counts)

    identities = {
        "defect_equals_morse": rep.defect == counts["morse"],
        "multiplicity_equals_kernel_plus_one":
            rep.multiplicity == counts["kernel_dim"] + 1,
        "crossings_equal_morse": cc["count"] == counts["morse"],
        "branches_below_equal_ell_minus_one": fset.below_at_zero() == rep.label - 1,
        "robin_duality": dual["ok"],
    }
    chi_independent = len({(r["morse"], r["kernel_dim"]) for r in chi_records}) == 1
    if cfg.weight_source == "all":
        identities["chi_independence"] = chi_independent
    inconclusive = cc["inconclusive"] > 0
    doc = {
        "schema_version": SCHEMA_VERSION,
        "k": p.k,
        "ell": rep.label,
        "delta": rep.defect,
        "lambda_star": ground.lambda_star,
        "morse": counts["morse"],
        "kernel_dim": counts["kernel_dim"],
        "multiplicity": rep.multiplicity,
        "crossings": cc["count"],
        "chi_independence": chi_records,
        "identities": identities,
        "inconclusive": inconclusive,
        "pass": all(identities.values()),
    }
    _emit(doc, cfg, "report.json")
    emit_plot_data(cfg, flow_set=fset, dtn_op=op, mesh=mesh, p=p)
    for name, ok in identities.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    if doc["pass"] or inconclusive:
        return 0
    return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nodaldtn",
        description="Sign-weighted Laplacians and two-sided Dirichlet-to-Neumann "
                    "operators on partitions; verifies the defect/Morse-index and "
                    "multiplicity/kernel identities.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, mesh_opts=True):
        sp.add_argument("--out", dest="out_dir", help="output directory for reports and CSV")
        if mesh_opts:
            sp.add_argument("--mesh", dest="mesh_path", help="mesh file (text format)")
            sp.add_argument("--shape", help="rect:a,b or disk:r")
            sp.add_argument("--h", type=float, default=0.1, help="target edge length")
            sp.add_argument("--eig", dest="eig_index", type=int,
                            help="1-based eigenfunction index for nodal partition")
            sp.add_argument("--partition", dest="partition_path",
                            help="partition JSON document")
            sp.add_argument("--weights", dest="weight_source", default="maximal",
                            help="maximal | minimal | random[:seed] | explicit | all | file")
            sp.add_argument("--tol", type=float, help="equipartition tolerance override")
            sp.add_argument("--sigma-max", dest="sigma_max", type=float)
            sp.add_argument("--grid", dest="grid_n", type=int, default=25)
            sp.add_argument("--seed", type=int, default=0)

    spc = sub.add_parser("circle", help="exact circle equipartition verification")
    spc.add_argument("--k", type=int, required=True)
    spc.add_argument("--out", dest="out_dir")

    spi = sub.add_parser("interval", help="exact interval partition verification")
    spi.add_argument("--k", type=int, required=True)
    spi.add_argument("--length", type=float, default=math.pi)
    spi.add_argument("--points", help="comma-separated division points incl. endpoints")
    spi.add_argument("--out", dest="out_dir")

    spk = sub.add_parser("cuts", help="cut combinatorics of a partition document")
    spk.add_argument("--partition", dest="partition_path", required=True)
    spk.add_argument("--out", dest="out_dir")

    for name, fn in (("analyze", "pair-compatibility analysis"),
                     ("dtn", "Dirichlet-to-Neumann assembly"),
                     ("flow", "Robin eigenvalue flow")):
        spx = sub.add_parser(name, help=fn)
        common(spx)

    spv = sub.add_parser("verify", help="full identity verification pipeline")
    common(spv)
    spv.add_argument("--exact", choices=["circle", "interval"],
                     help="use the closed-form 1D route instead of FEM")
    spv.add_argument("--k", type=int, help="number of subdomains (exact route)")
    spv.add_argument("--length", type=float, default=math.pi)
    spv.add_argument("--points", help="comma-separated division points (exact interval)")
    return ap


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    for name in vars(cfg):
        if hasattr(args, name) and getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    if getattr(args, "shape", None):
        cfg.shape = _parse_shape(args.shape)
    if getattr(args, "points", None):
        cfg.points = [float(x) for x in args.points.split(",")]
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "circle": cmd_circle,
        "interval": cmd_interval,
        "cuts": cmd_cuts,
        "analyze": cmd_analyze,
        "dtn": cmd_dtn,
        "flow": cmd_flow,
        "verify": cmd_verify,
    }
    try:
        cfg = _config_from_args(args)
        if args.command == "verify" and getattr(args, "exact", None):
            cfg.exact = args.exact
            if cfg.k is None:
                raise ConfigError("--exact needs --k")
        if args.command in ("analyze", "dtn", "flow") or (
                args.command == "verify" and cfg.exact is None):
            cfg.validate()
        return handlers[args.command](cfg)
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (fem.FemError, dtn.BvpCompatibilityError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
