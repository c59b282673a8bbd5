"""Command-line surface: barcodes, matchings, losses, metrics, sweeps,
and the oracle self-check.

Exit codes: 0 on success, 1 on validation errors (bad files, bad flags,
shape mismatches), 2 on internal invariant violations.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .grid import (
    GridError,
    LabelGrid,
    LikelihoodGrid,
    MulticlassPrediction,
    build_filtration,
    channel_project,
    make_filtration,
    one_hot,
)
from .losses import LossConfig, LossConfigError, total_loss
from .matching import MatchingError, betti_match, compose_matching
from .metrics import evaluate
from .oracle import barcode_oracle, image_barcode_oracle
from .persistence import Bar, Barcode, compute_barcode, image_barcode
from .tensorio import (
    REPORT_SCHEMA_VERSION,
    TensorFormatError,
    read_tensor,
    write_report,
    write_tensor,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INTERNAL = 2

_SWEEP_PARAMS = ("gamma_m", "gamma_u", "alpha_max", "step")


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as validation errors (exit 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliValidationError(message)


class CliValidationError(ValueError):
    pass


def _parse_dims(text: str) -> tuple:
    try:
        dims = tuple(sorted({int(d) for d in text.split(",") if d != ""}))
    except ValueError as exc:
        raise CliValidationError(f"bad --dims value {text!r}") from exc
    if not dims or any(d not in (0, 1) for d in dims):
        raise CliValidationError("--dims must be a subset of {0,1}")
    return dims


def _parse_classes(text: str | None, num_classes: int):
    if text is None:
        return list(range(num_classes))
    try:
        ids = [int(c) for c in text.split(",") if c != ""]
    except ValueError as exc:
        raise CliValidationError(f"bad --classes value {text!r}") from exc
    for c in ids:
        if not 0 <= c < num_classes:
            raise CliValidationError(
                f"class {c} out of range for {num_classes} classes"
            )
    return ids


def _parse_values(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise CliValidationError(f"bad --values list {text!r}") from exc


def _load_prediction(path) -> MulticlassPrediction:
    data = read_tensor(path)
    if isinstance(data, LabelGrid):
        return one_hot(data, max(2, int(data.labels.max()) + 1))
    return data


def _load_labels(path) -> LabelGrid:
    data = read_tensor(path)
    if not isinstance(data, LabelGrid):
        raise CliValidationError(
            f"{path}: expected a uint8 2D label file for --gt"
        )
    return data


def _config_from_args(args) -> LossConfig:
    return LossConfig(
        alpha_max=args.alpha_max,
        warmup_alpha=args.warmup,
        total_steps=args.total_steps,
        gamma_matched=args.gamma_m,
        gamma_unmatched=args.gamma_u,
        ignore_background=args.ignore_background,
        filtration_flip=args.flip_filtration,
    )


def _bar_dict(bar: Bar, cells) -> dict:
    def pixel(flat):
        if flat is None:
            return None
        return {"x": int(flat % cells.width), "y": int(flat // cells.width)}

    return {
        "dim": bar.dim,
        "birth": bar.birth,
        "death": bar.death,
        "birth_cell": None
        if bar.birth_cell is None
        else cells.describe(bar.birth_cell),
        "death_cell": None
        if bar.death_cell is None
        else cells.describe(bar.death_cell),
        "birth_pixel": pixel(bar.birth_pixel),
        "death_pixel": pixel(bar.death_pixel),
    }


def _envelope(kind: str, args, config: LossConfig | None = None) -> dict:
    payload = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": kind,
        "inputs": {
            "pred": getattr(args, "pred", None),
            "gt": getattr(args, "gt", None),
        },
        "flags": {
            "classes": getattr(args, "classes", None),
            "dims": list(getattr(args, "dims", (0, 1))),
            "seed": getattr(args, "seed", None),
        },
    }
    if config is not None:
        payload["config"] = config.to_dict()
    return payload


def _cmd_barcodes(args) -> dict:
    pred = _load_prediction(args.pred)
    classes = _parse_classes(args.classes, pred.num_classes)
    out = []
    for c in classes:
        filt = build_filtration(
            channel_project(pred, c), flip=args.flip_filtration
        )
        bc = compute_barcode(filt, dims=args.dims)
        out.append(
            {
                "class": c,
                "bars": [_bar_dict(b, filt.cells) for b in bc.bars],
            }
        )
    payload = _envelope("barcodes", args)
    payload["classes"] = out
    return payload


def _cmd_match(args) -> dict:
    pred = _load_prediction(args.pred)
    gt = _load_labels(args.gt)
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise CliValidationError("prediction and ground truth shapes disagree")
    if gt.labels.max() >= pred.num_classes:
        raise CliValidationError("ground-truth label out of prediction range")
    gt_onehot = one_hot(gt, pred.num_classes)
    classes = _parse_classes(args.classes, pred.num_classes)
    out = []
    for c in classes:
        filt_p = build_filtration(
            channel_project(pred, c), flip=args.flip_filtration
        )
        filt_g = build_filtration(
            LikelihoodGrid(gt_onehot.values[c]), flip=args.flip_filtration
        )
        m = betti_match(filt_p, filt_g, dims=args.dims)
        cells = filt_p.cells
        entry = {"class": c, "dims": {}}
        for dim in args.dims:
            entry["dims"][str(dim)] = {
                "matched": [
                    {"pred": _bar_dict(p, cells), "gt": _bar_dict(g, cells)}
                    for p, g in m.matched[dim]
                ],
                "unmatched_pred": [
                    _bar_dict(b, cells) for b in m.unmatched_pred[dim]
                ],
                "unmatched_gt": [
                    _bar_dict(b, cells) for b in m.unmatched_gt[dim]
                ],
            }
        entry["n_matched"] = m.n_matched()
        entry["n_unmatched_pred"] = m.n_unmatched_pred()
        entry["n_unmatched_gt"] = m.n_unmatched_gt()
        # class carries no topology on either side
        entry["degenerate"] = (
            m.n_matched() + m.n_unmatched_pred() + m.n_unmatched_gt() == 0
        )
        out.append(entry)
    payload = _envelope("match", args)
    payload["classes"] = out
    return payload


def _gradient_path(out: str) -> Path:
    p = Path(out)
    stem = p.name[: -len(p.suffix)] if p.suffix else p.name
    return p.with_name(stem + ".grad.mcbm")


def _cmd_loss(args) -> dict:
    pred = _load_prediction(args.pred)
    gt = _load_labels(args.gt)
    config = _config_from_args(args)
    report = total_loss(pred, gt, step=args.step, config=config, dims=args.dims)
    payload = _envelope("loss", args, config)
    payload["step"] = args.step
    payload["loss"] = report.to_dict()
    if args.out:
        grad_path = _gradient_path(args.out)
        write_tensor(grad_path, report.gradient)
        payload["gradient_file"] = grad_path.name
    return payload


def _cmd_eval(args) -> dict:
    pred = _load_prediction(args.pred)
    gt = _load_labels(args.gt)
    report = evaluate(pred, gt)
    payload = _envelope("eval", args)
    payload["metrics"] = report.to_dict()
    return payload


def _cmd_sweep(args) -> dict:
    pred = _load_prediction(args.pred)
    gt = _load_labels(args.gt)
    values = _parse_values(args.values)
    if not values:
        raise CliValidationError("--values must list at least one number")
    base = _config_from_args(args)
    entries = []
    for v in values:
        cfg = base
        step = args.step
        if args.param == "gamma_m":
            cfg = LossConfig(**{**base.to_dict(), "gamma_matched": v})
        elif args.param == "gamma_u":
            cfg = LossConfig(**{**base.to_dict(), "gamma_unmatched": v})
        elif args.param == "alpha_max":
            cfg = LossConfig(**{**base.to_dict(), "alpha_max": v})
        elif args.param == "step":
            step = int(v)
        report = total_loss(pred, gt, step=step, config=cfg, dims=args.dims)
        entries.append(
            {
                "value": v,
                "total": report.total,
                "dice_component": report.dice_component,
                "topo_matched": report.topo_matched,
                "topo_unmatched": report.topo_unmatched,
                "alpha": report.alpha,
            }
        )
    metrics = evaluate(pred, gt)
    payload = _envelope("sweep", args, base)
    payload["param"] = args.param
    payload["entries"] = entries
    payload["metrics"] = metrics.to_dict()
    return payload


def _oracle_check_instance(rng, size: int) -> list:
    """One randomized equivalence check; returns failure descriptions."""
    fails = []
    h = int(rng.integers(3, size + 1))
    w = int(rng.integers(3, size + 1))
    if rng.integers(0, 2) == 0:
        vals = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=(h, w))
    else:
        vals = rng.uniform(0.0, 1.0, size=(h, w))
    filt = make_filtration(vals)
    want = barcode_oracle(filt)
    for method in ("fast", "reduction"):
        got = compute_barcode(filt, method=method)
        for dim in (0, 1):
            if got.value_multiset(dim) != want.value_multiset(dim):
                fails.append(f"barcode[{method}] dim {dim} on {h}x{w}")

    ih = min(h, 6)
    iw = min(w, 6)
    a = vals[:ih, :iw]
    b = (
        rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=(ih, iw))
        if rng.integers(0, 2) == 0
        else rng.uniform(0.0, 1.0, size=(ih, iw))
    )
    targ = make_filtration(a)
    other = make_filtration(b)
    comp = make_filtration(np.maximum(a, b))
    want_img = image_barcode_oracle(comp, targ)
    for method in ("fast", "reduction"):
        got = image_barcode(comp, targ, method=method)
        for dim in (0, 1):
            if got.value_multiset(dim) != want_img.value_multiset(dim):
                fails.append(f"image[{method}] dim {dim} on {ih}x{iw}")

    m = betti_match(targ, other)
    o_matched, o_up, o_ug = compose_matching(
        barcode_oracle(comp),
        barcode_oracle(targ),
        barcode_oracle(other),
        want_img,
        image_barcode_oracle(comp, other),
    )
    for dim in (0, 1):
        got_pairs = sorted(
            (p.endpoints(), g.endpoints()) for p, g in m.matched[dim]
        )
        want_pairs = sorted(
            (p.endpoints(), g.endpoints()) for p, g in o_matched[dim]
        )
        if got_pairs != want_pairs:
            fails.append(f"matching dim {dim} on {ih}x{iw}")
    return fails


def _cmd_oracle_check(args) -> dict:
    if args.size < 3 or args.size > 8:
        raise CliValidationError("--size must be between 3 and 8")
    if args.count < 1:
        raise CliValidationError("--count must be positive")
    rng = np.random.default_rng(args.seed)
    failures = []
    for i in range(args.count):
        for f in _oracle_check_instance(rng, args.size):
            failures.append({"instance": i, "what": f})
    payload = _envelope("oracle-check", args)
    payload["count"] = args.count
    payload["size"] = args.size
    payload["passed"] = args.count - len({f["instance"] for f in failures})
    payload["failures"] = failures
    print(f"{payload['passed']}/{args.count} pass")
    if failures:
        raise MatchingError(f"{len(failures)} oracle-equivalence failures")
    return payload


def _add_common(p, with_gt=True):
    p.add_argument("--pred", required=True, help="prediction tensor file")
    if with_gt:
        p.add_argument("--gt", required=True, help="ground-truth label file")
    p.add_argument("--classes", default=None, help="comma list of class ids")
    p.add_argument("--dims", default="0,1", help="homology dims, e.g. 0,1")
    p.add_argument("--flip-filtration", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="report output path")


def _add_loss_flags(p):
    p.add_argument("--ignore-background", action="store_true")
    p.add_argument("--alpha-max", type=float, default=0.05)
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("--total-steps", type=int, default=1000)
    p.add_argument("--step", type=int, default=0)
    p.add_argument("--gamma-m", type=float, default=1.0)
    p.add_argument("--gamma-u", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bmseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("barcodes", help="per-class persistence barcodes")
    _add_common(p, with_gt=False)

    p = sub.add_parser("match", help="induced matching dump")
    _add_common(p)

    p = sub.add_parser("loss", help="combined loss report plus gradient")
    _add_common(p)
    _add_loss_flags(p)

    p = sub.add_parser("eval", help="metric report")
    _add_common(p)

    p = sub.add_parser("sweep", help="loss curves over a parameter list")
    _add_common(p)
    _add_loss_flags(p)
    p.add_argument("--param", required=True, choices=_SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma list of values")

    p = sub.add_parser("oracle-check", help="randomized oracle equivalence")
    p.add_argument("--size", type=int, default=6)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    return parser


_COMMANDS = {
    "barcodes": _cmd_barcodes,
    "match": _cmd_match,
    "loss": _cmd_loss,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "oracle-check": _cmd_oracle_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if hasattr(args, "dims"):
            args.dims = _parse_dims(args.dims)
        payload = _COMMANDS[args.command](args)
        if getattr(args, "out", None):
            write_report(args.out, payload)
        else:
            print(json.dumps(payload, sort_keys=True, indent=1))
    except (
        CliValidationError,
        TensorFormatError,
        GridError,
        LossConfigError,
        FileNotFoundError,
        PermissionError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (MatchingError, AssertionError) as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
