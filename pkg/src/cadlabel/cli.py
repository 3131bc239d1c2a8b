"""Command line front end.

Exit codes: 0 success, 1 I/O error, 2 validation error, 3 internal error.
Failures print a single ``error: <Kind>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .cloud import (MAGIC, class_histogram, decode_cloud, format_ascii, parse_ascii,
                    voxel_subsample, write_cloud)
from .errors import CadLabelError, InvariantViolation, ValidationError
from .labeler import default_policy, pseudo_label
from .meshio import ClassManifest, load_scene, save_scene
from .metrics import (confusion, format_matrix, format_table, report, round_rows,
                      row_normalize)
from .scenegen import RoomSpec, build_scene, sample_cloud, standard_room
from .taxonomy import UNLABELED, simplify_labels

log = logging.getLogger("cadlabel")

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_INTERNAL = 0, 1, 2, 3


def parse_length(text: str) -> float:
    """Meters, or centimeters with a ``cm`` suffix (``4cm`` -> 0.04)."""
    t = text.strip().lower()
    try:
        if t.endswith("cm"):
            v = float(t[:-2]) / 100.0
        elif t.endswith("m"):
            v = float(t[:-1])
        else:
            v = float(t)
    except ValueError:
        raise ValidationError(f"bad length {text!r}") from None
    if not v >= 0:
        raise ValidationError(f"length {text!r} must be >= 0")
    return v


def _length_arg(text):
    try:
        return parse_length(text)
    except ValidationError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_policy(taxonomy, overrides):
    policy = default_policy(taxonomy)
    default = policy.default_tau
    by_class = {}
    for item in overrides or []:
        if "=" not in item:
            raise ValidationError(f"threshold override {item!r} must be CLASS=LENGTH")
        name, value = (s.strip() for s in item.split("=", 1))
        tau = parse_length(value)
        if name.lower() == "default":
            default = tau
            continue
        try:
            by_class[taxonomy.index(name)] = tau
        except KeyError:
            raise ValidationError(f"class {name!r} is not in {taxonomy.id}") from None
    merged = dict(policy.overrides)
    merged.update(by_class)
    return type(policy)(default, merged)


def _read(path):
    path = Path(path)
    data = path.read_bytes()
    if data[:len(MAGIC)] == MAGIC or not data.startswith(b"#"):
        return decode_cloud(data, scan_id=path.stem)
    return parse_ascii(data.decode("utf-8"))


def _emit(args, payload, text):
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)


def cmd_gen(args):
    spec = RoomSpec.load(args.spec) if args.spec else standard_room(args.seed or 0)
    if args.seed is not None and args.spec:
        spec.seed = args.seed
    scene = build_scene(spec)
    cloud = sample_cloud(scene, spec)
    out = Path(args.out)
    save_scene(scene, out / "scene")
    write_cloud(cloud, out / "cloud.pcl")
    (out / "room.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    _emit(args, {"objects": len(scene), "points": len(cloud), "out": str(out)},
          f"wrote {len(scene)} objects and {len(cloud)} points to {out}")


def cmd_label(args):
    cloud = _read(args.cloud)
    scene_dir = Path(args.scene)
    manifest = ClassManifest.load(args.manifest or scene_dir / "manifest.txt")
    scene = load_scene(scene_dir, manifest, cloud.taxonomy)
    policy = build_policy(cloud.taxonomy, args.tau)
    out, rep = pseudo_label(cloud, scene, policy, threads=args.threads)
    hist = class_histogram(out, "pseudo")
    if not np.array_equal(hist.counts, rep.class_counts):
        raise InvariantViolation("report class counts disagree with label histogram")
    write_cloud(out, args.out)
    if args.json:
        print(json.dumps(rep.to_dict(), sort_keys=True))
    else:
        sys.stdout.write(rep.format_text())
        for name, secs in sorted(rep.per_class_seconds().items(), key=lambda kv: -kv[1]):
            print(f"class {name!r} seconds={secs:.6f}")
        print(f"points={len(out)} clutter_fallback={rep.unclaimed} "
              f"nonfinite={rep.nonfinite} seconds={rep.seconds:.3f}")


def cmd_simplify(args):
    cloud = _read(args.cloud)
    which = [c for c in ("real", "pseudo") if np.any(cloud.labels(c) != UNLABELED)]
    out = simplify_labels(cloud, which)
    write_cloud(out, args.out)
    _emit(args, {"columns": which, "points": len(out)},
          f"simplified {', '.join(which) or 'no'} label column(s) of {len(out)} points")


def cmd_eval(args):
    if args.pred:
        ref_cloud, pred_cloud = _read(args.cloud), _read(args.pred)
        if ref_cloud.taxonomy is not pred_cloud.taxonomy:
            raise ValidationError("reference and prediction use different taxonomies")
        ref, pred = ref_cloud.real_label, pred_cloud.pseudo_label
        tax = ref_cloud.taxonomy
    else:
        cloud = _read(args.cloud)
        ref, pred = cloud.real_label, cloud.pseudo_label
        tax = cloud.taxonomy
    m = confusion(ref, pred, len(tax))
    rep = report(m)
    rows = row_normalize(m)
    if args.json:
        payload = rep.to_dict(list(tax.names))
        payload["confusion"] = m.counts.tolist()
        payload["row_normalized"] = round_rows(rows, 1).tolist()
        payload["skipped_unlabeled"] = m.skipped
        print(json.dumps(payload, sort_keys=True))
    else:
        print(format_table(rep, tax.names))
        print()
        print(format_matrix(rows, tax.names))


def cmd_stats(args):
    cloud = _read(args.cloud)
    tax = cloud.taxonomy
    real = class_histogram(cloud, "real")
    pseudo = class_histogram(cloud, "pseudo")
    ext = cloud.extent()
    payload = {
        "points": len(cloud), "taxonomy": tax.id, "scan_id": cloud.scan_id,
        "extent": None if ext is None else [ext.min.tolist(), ext.max.tolist()],
        "real": real.as_dict(tax), "real_unlabeled": real.unlabeled,
        "pseudo": pseudo.as_dict(tax), "pseudo_unlabeled": pseudo.unlabeled,
    }
    if args.json:
        print(json.dumps(payload, sort_keys=True))
        return
    width = max(len(n) for n in tax.names)
    lines = [f"points {len(cloud)}  taxonomy {tax.id}  scan {cloud.scan_id!r}"]
    if ext is not None:
        lines.append(f"extent {ext.min.tolist()} .. {ext.max.tolist()}")
    lines.append(f"{'id':>3} {'class':<{width}} {'real':>10} {'pseudo':>10}")
    for i, n in enumerate(tax.names):
        lines.append(f"{i:>3} {n:<{width}} {real.counts[i]:>10} {pseudo.counts[i]:>10}")
    lines.append(f"{'':>3} {'UNLABELED':<{width}} {real.unlabeled:>10} {pseudo.unlabeled:>10}")
    print("\n".join(lines))


def cmd_subsample(args):
    cloud = _read(args.cloud)
    out = voxel_subsample(cloud, args.cell, args.seed)
    write_cloud(out, args.out)
    _emit(args, {"before": len(cloud), "after": len(out), "cell": args.cell},
          f"{len(cloud)} -> {len(out)} points at cell {args.cell} m")


def cmd_convert(args):
    data = Path(args.input).read_bytes()
    if data[:len(MAGIC)] == MAGIC:
        cloud = decode_cloud(data, scan_id=Path(args.input).stem)
        Path(args.output).write_text(format_ascii(cloud), encoding="utf-8")
        kind = "ascii"
    else:
        cloud = parse_ascii(data.decode("utf-8"))
        write_cloud(cloud, args.output)
        kind = "binary"
    _emit(args, {"points": len(cloud), "format": kind},
          f"wrote {len(cloud)} points as {kind} to {args.output}")


def make_parser():
    p = argparse.ArgumentParser(prog="cadlabel",
                                description="Pseudo-label point clouds from classed CAD meshes.")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", parents=[common], help="generate a synthetic room")
    s.add_argument("out", help="output directory")
    s.add_argument("--spec", help="room spec JSON (default: built-in standard room)")
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("label", parents=[common], help="pseudo-label a cloud")
    s.add_argument("cloud")
    s.add_argument("scene", help="directory of .obj object meshes")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--manifest", help="class manifest (default: SCENE/manifest.txt)")
    s.add_argument("--tau", action="append", metavar="CLASS=LENGTH",
                   help="threshold override, e.g. Door=10cm or default=0.05")
    s.add_argument("--threads", type=int, default=None)
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("simplify", parents=[common], help="Gold -> Silver labels")
    s.add_argument("cloud")
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_simplify)

    s = sub.add_parser("eval", parents=[common], help="score pseudo against real labels")
    s.add_argument("cloud", help="cloud with real labels (and pseudo labels unless --pred)")
    s.add_argument("--pred", help="cloud whose pseudo labels are the prediction")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", parents=[common], help="class histograms and extent")
    s.add_argument("cloud")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("subsample", parents=[common], help="voxel subsampling")
    s.add_argument("cloud")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--cell", type=_length_arg, default=0.01, help="voxel edge (default 0.01 m)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_subsample)

    s = sub.add_parser("convert", parents=[common], help="binary <-> ASCII interchange")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_convert)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    warnings.filterwarnings("ignore", message=".*TBB.*")
    if args.command == "label" and args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except InvariantViolation as e:
        print(f"error: InvariantViolation: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except CadLabelError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (KeyError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_IO
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
