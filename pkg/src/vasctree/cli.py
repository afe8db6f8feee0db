"""Command-line entry point: ``vasctree <command> ...``.

Every command accepts ``--config FILE`` (JSON, keys as in ``PipelineConfig``) and
``--threads N``; explicit flags override the config file, which overrides the
built-in defaults. Errors print ``vasctree: [stage] Type: message`` and exit 1.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import InvalidParameter, StageError, VasctreeError

EXIT_ERROR = 1


def _ints3(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected i,j,k, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def _floats(n: int):
    def parse(text: str):
        parts = text.split(",")
        if len(parts) == 1 and n == 3:
            parts = parts * 3
        if len(parts) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None
    return parse


def _config(args, **overrides):
    from .pipeline import PipelineConfig

    return PipelineConfig.from_json(getattr(args, "config", None), threads=args.threads, **overrides)


def _window(args):
    if args.dmin is None and args.dmax is None:
        return None
    if args.dmin is None or args.dmax is None:
        raise InvalidParameter("--dmin and --dmax must be given together")
    return (args.dmin, args.dmax)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_segment(args) -> None:
    from .io import read_volume, write_mask
    from .pipeline import segment_tissue, segment_vessel, set_threads

    preset = args.preset
    if preset == "tissue":
        cfg = _config(args, tissue_lo=args.lo, tissue_hi=args.hi, tissue_seed=args.seed,
                      tissue_conn=args.conn)
    else:
        cfg = _config(args, vessel_lo=args.lo, vessel_hi=args.hi, vessel_seed=args.seed,
                      vessel_conn=args.conn)
    set_threads(cfg.threads)
    with _stage("read"):
        vol = read_volume(args.input)
    with _stage("segment"):
        mask = segment_tissue(vol, cfg) if preset == "tissue" else segment_vessel(vol, cfg)
        if mask is None:
            raise InvalidParameter("no voxels inside the tissue range")
        write_mask(mask, args.output)
    print(f"{args.output}: {mask.count} voxels")


def cmd_skeletonize(args) -> None:
    from .io import read_mask, write_mask
    from .pipeline import set_threads
    from .skeleton import thin

    set_threads(_config(args).threads)
    with _stage("read"):
        mask = read_mask(args.input)
    with _stage("skeletonize"):
        skel = thin(mask)
        write_mask(skel.mask, args.output)
    print(f"{args.output}: {skel.mask.count} centreline voxels")


def cmd_tree(args) -> None:
    from .io import read_mask
    from .pipeline import extract_tree, set_threads, write_segments
    from .skeleton import Skeleton, thin

    cfg = _config(args, root_hint=args.root_hint, prune_factor=args.prune_factor)
    set_threads(cfg.threads)
    with _stage("read"):
        vessel = read_mask(args.mask)
        skel = Skeleton(read_mask(args.skeleton)) if args.skeleton else None
    if skel is None:
        with _stage("skeletonize"):
            skel = thin(vessel)
    with _stage("tree"):
        tree = extract_tree(vessel, skel, cfg.root_hint, cfg.prune_factor)
        write_segments(tree, args.output)
    for w in tree.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{args.output}: {len(tree)} segments, generations {tree.generation_counts()}")


def cmd_stats(args) -> None:
    from .pipeline import read_segments, tree_stats, write_stats

    cfg = _config(args, fit_window=_window(args))
    with _stage("read"):
        tree = read_segments(args.segments)
    with _stage("stats"):
        st = tree_stats(tree, cfg.fit_window)
        paths = write_stats(st, args.prefix)
    for w in st.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if st.power_law is not None:
        print(f"gamma = {st.power_law.gamma:.4f} (r2 = {st.power_law.r2:.4f})")
    print("\n".join(paths))


def cmd_maps(args) -> None:
    from .fieldmaps import local_diameter_map, perfusion_histogram, perfusion_map
    from .io import read_mask
    from .pipeline import set_threads, write_histogram, write_map
    from .skeleton import Skeleton, thin

    cfg = _config(args, bin_width_um=args.bin_width, name=args.name, output_dir=args.out_dir)
    set_threads(cfg.threads)
    prefix = Path(cfg.output_dir) / cfg.name
    with _stage("read"):
        vessel = read_mask(args.vessel)
        skel = Skeleton(read_mask(args.skeleton)) if args.skeleton else None
        tissue = read_mask(args.tissue) if args.tissue else None
    with _stage("maps"):
        if skel is None:
            skel = thin(vessel)
        write_map(local_diameter_map(vessel, skel), f"{prefix}_diam.json")
        print(f"{prefix}_diam.json")
        if tissue is not None:
            pmap = perfusion_map(tissue, vessel)
            write_map(pmap, f"{prefix}_perf.json")
            write_histogram(perfusion_histogram(pmap, cfg.bin_width_um), f"{prefix}_perf_hist.csv")
            print(f"{prefix}_perf.json\n{prefix}_perf_hist.csv")


def cmd_aggregate(args) -> None:
    from .fieldmaps import aggregate_specimens
    from .pipeline import read_histogram, write_aggregate

    with _stage("aggregate"):
        agg = aggregate_specimens([read_histogram(p) for p in args.histograms])
        write_aggregate(agg, args.output)
    print(f"{args.output}: {agg.n_specimens} specimens, {len(agg.mean)} bins")


def cmd_phantom(args) -> None:
    from . import phantom as ph
    from .io import write_json, write_volume

    with _stage("phantom"):
        spec = ph.PhantomSpec(
            generations=args.generations, d0_um=args.d0_um, length0_um=args.length0_um,
            ratio=args.ratio, ratio2=args.ratio2, length_ratio=args.length_ratio,
            angles_deg=args.angles, seed=args.seed, jitter=args.jitter)
        gt = ph.generate(spec)
        spacing = args.spacing_um
        dims = args.dims or ph.required_dims(gt, spacing, args.margin_um)
        gt = ph.fit_to_grid(gt, dims, spacing)
        vol = ph.rasterize(gt, dims, spacing, args.margin_um)
        out = Path(args.output)
        write_volume(vol, out, "u16")
        truth = out.with_name(out.stem + "_truth.json")
        doc = gt.to_dict()
        doc["root_seed"] = list(ph.root_seed(gt, spacing))
        doc["dims"] = list(dims)
        write_json(truth, doc)
    print(f"{out} ({'x'.join(map(str, dims))}), truth: {truth}, root seed {doc['root_seed']}")


def cmd_run(args) -> None:
    from .pipeline import run_pipeline

    cfg = _config(
        args, input=args.input, output_dir=args.out_dir, name=args.name,
        vessel_lo=args.lo, vessel_hi=args.hi, vessel_seed=args.seed, vessel_conn=args.conn,
        tissue_lo=args.tissue_lo, tissue_hi=args.tissue_hi, tissue_seed=args.tissue_seed,
        tissue_conn=args.tissue_conn, root_hint=args.root_hint, prune_factor=args.prune_factor,
        fit_window=_window(args), bin_width_um=args.bin_width,
        maps=False if args.no_maps else None, spacing_um=args.spacing_um)
    if not cfg.input:
        raise InvalidParameter("no input volume (use --input or the config file)")
    res = run_pipeline(cfg)
    for w in res.manifest.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps(res.manifest.summary, sort_keys=True))


class _stage:
    """Tag any error raised in the block with a stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, et, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, (VasctreeError, OSError, ValueError)):
            raise StageError(self.name, exc) from exc
        return False


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .phantom import MURRAY_RATIO

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--threads", type=int, default=None, help="worker threads, 0 = auto")

    seg = argparse.ArgumentParser(add_help=False)
    seg.add_argument("--lo", type=float, help="lower threshold (inclusive)")
    seg.add_argument("--hi", type=float, help="upper threshold (inclusive)")
    seg.add_argument("--seed", type=_ints3, help="seed voxel i,j,k")
    seg.add_argument("--conn", type=int, choices=(6, 18, 26))

    win = argparse.ArgumentParser(add_help=False)
    win.add_argument("--dmin", type=float, help="power-law window lower diameter (µm)")
    win.add_argument("--dmax", type=float, help="power-law window upper diameter (µm)")

    p = argparse.ArgumentParser(prog="vasctree", description="Vascular tree morphometry.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("segment", parents=[common, seg], help="seeded region growing")
    s.add_argument("--input", "-i", required=True)
    s.add_argument("--output", "-o", required=True)
    s.add_argument("--preset", choices=("vessel", "tissue"), default="vessel")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("skeletonize", parents=[common], help="topology-preserving thinning")
    s.add_argument("--input", "-i", required=True)
    s.add_argument("--output", "-o", required=True)
    s.set_defaults(func=cmd_skeletonize)

    s = sub.add_parser("tree", parents=[common], help="rooted segment tree with lengths and diameters")
    s.add_argument("--mask", required=True, help="vessel mask volume")
    s.add_argument("--skeleton", help="centreline mask (computed when omitted)")
    s.add_argument("--root-hint", type=_ints3)
    s.add_argument("--prune-factor", type=float)
    s.add_argument("--output", "-o", required=True, help="segments CSV")
    s.set_defaults(func=cmd_tree)

    s = sub.add_parser("stats", parents=[common, win], help="generation, power-law and Murray statistics")
    s.add_argument("--segments", required=True)
    s.add_argument("--prefix", required=True, help="output path prefix")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("maps", parents=[common], help="local-diameter and perfusion maps")
    s.add_argument("--vessel", required=True)
    s.add_argument("--skeleton")
    s.add_argument("--tissue")
    s.add_argument("--name")
    s.add_argument("--out-dir")
    s.add_argument("--bin-width", type=float, help="histogram bin width (µm)")
    s.set_defaults(func=cmd_maps)

    s = sub.add_parser("aggregate", parents=[common], help="mean/std over perfusion histograms")
    s.add_argument("histograms", nargs="+")
    s.add_argument("--output", "-o", required=True)
    s.set_defaults(func=cmd_aggregate)

    s = sub.add_parser("phantom", parents=[common], help="synthetic bifurcating tree volume")
    s.add_argument("--generations", type=int, default=4)
    s.add_argument("--d0-um", type=float, default=240.0)
    s.add_argument("--length0-um", type=float, default=1000.0)
    s.add_argument("--ratio", type=float, default=MURRAY_RATIO)
    s.add_argument("--ratio2", type=float)
    s.add_argument("--length-ratio", type=float, default=0.8)
    s.add_argument("--angles", type=_floats(2), default=(40.0, 40.0), help="half-angles a,b in degrees")
    s.add_argument("--jitter", type=float, default=0.0)
    s.add_argument("--dims", type=_ints3, help="nx,ny,nz (smallest fitting grid when omitted)")
    s.add_argument("--spacing-um", type=_floats(3), default=(20.0, 20.0, 20.0))
    s.add_argument("--margin-um", type=float, default=100.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output", "-o", required=True)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("run", parents=[common, seg, win], help="full pipeline")
    s.add_argument("--input", "-i")
    s.add_argument("--out-dir")
    s.add_argument("--name")
    s.add_argument("--spacing-um", type=_floats(3), help="override header spacing")
    s.add_argument("--tissue-lo", type=float)
    s.add_argument("--tissue-hi", type=float)
    s.add_argument("--tissue-seed", type=_ints3)
    s.add_argument("--tissue-conn", type=int, choices=(6, 18, 26))
    s.add_argument("--root-hint", type=_ints3)
    s.add_argument("--prune-factor", type=float)
    s.add_argument("--bin-width", type=float)
    s.add_argument("--no-maps", action="store_true")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except StageError as exc:
        print(f"vasctree: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (VasctreeError, OSError, ValueError) as exc:
        print(f"vasctree: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
