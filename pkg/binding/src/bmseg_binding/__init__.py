"""In-memory loss forward/backward for training environments.

BoundLossHandle captures a loss configuration once and exposes a single
call operating on caller-provided arrays. The handle drives the bmseg
command-line tool through its wire formats (MCBM tensors in, a JSON
report plus an MCBM gradient tensor out), so results are bit-identical
to the CLI by construction and the handle keeps no state between calls.

Gradients are returned with respect to the class likelihoods; chaining
through a softmax is the host framework's job.
"""

from __future__ import annotations

import json
import shutil
import struct
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "BindingError",
    "BoundLossHandle",
    "LossComponents",
    "ShapeDtypeError",
]

_MAGIC = b"MCBM"
_VERSION = 1
_DTYPE_F32 = 0
_DTYPE_U8 = 1


class BindingError(RuntimeError):
    """The underlying loss tool failed or produced an unreadable result."""


class ShapeDtypeError(ValueError):
    """Caller buffers violate the expected shapes, dtypes, or layout."""


@dataclass(frozen=True)
class LossComponents:
    total: float
    dice_component: float
    topo_matched: float
    topo_unmatched: float
    alpha: float
    per_class: tuple


def _write_mcbm(path: Path, arr: np.ndarray) -> None:
    if arr.dtype == np.float32:
        code = _DTYPE_F32
        payload = arr
    elif arr.dtype == np.uint8:
        code = _DTYPE_U8
        payload = arr
    else:
        raise ShapeDtypeError(f"unsupported dtype {arr.dtype}")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(bytes([_VERSION, code, arr.ndim]))
        fh.write(struct.pack("<" + "I" * arr.ndim, *arr.shape))
        fh.write(payload.tobytes(order="C"))


def _read_mcbm_f32(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC or data[4] != _VERSION or data[5] != _DTYPE_F32:
        raise BindingError(f"unexpected tensor header in {path}")
    ndim = data[6]
    dims = struct.unpack("<" + "I" * ndim, data[7 : 7 + 4 * ndim])
    return np.frombuffer(data[7 + 4 * ndim :], dtype="<f4").reshape(dims)


def _resolve_cli() -> list[str]:
    exe = shutil.which("bmseg")
    if exe:
        return [exe]
    return [sys.executable, "-m", "bmseg.cli"]


class BoundLossHandle:
    """Immutable loss configuration bound to an in-memory call surface.

    Configuration semantics are identical to the CLI flags of the same
    names. Safe to call concurrently on distinct buffers; the prediction
    and gradient buffers must not alias.
    """

    def __init__(
        self,
        alpha_max: float = 0.05,
        warmup_alpha: int = 0,
        total_steps: int = 1000,
        gamma_matched: float = 1.0,
        gamma_unmatched: float = 1.0,
        ignore_background: bool = False,
        filtration_flip: bool = False,
        cli_command: list[str] | None = None,
    ):
        self._flags = [
            "--alpha-max", repr(float(alpha_max)),
            "--warmup", str(int(warmup_alpha)),
            "--total-steps", str(int(total_steps)),
            "--gamma-m", repr(float(gamma_matched)),
            "--gamma-u", repr(float(gamma_unmatched)),
        ]
        if ignore_background:
            self._flags.append("--ignore-background")
        if filtration_flip:
            self._flags.append("--flip-filtration")
        self._cli = list(cli_command) if cli_command else _resolve_cli()

    def loss_forward_backward(
        self,
        pred: np.ndarray,
        gt_labels: np.ndarray,
        step: int,
        out: np.ndarray | None = None,
    ) -> tuple[LossComponents, np.ndarray]:
        """Evaluate the loss and write the gradient for one sample.

        pred is a contiguous float32 (classes, H, W) likelihood buffer;
        gt_labels a contiguous uint8 (H, W) label buffer. The float32
        gradient lands in out when provided (same shape as pred).
        """
        pred = self._check_pred(pred)
        gt_labels = self._check_labels(gt_labels, pred)
        if out is not None:
            if (
                not isinstance(out, np.ndarray)
                or out.shape != pred.shape
                or out.dtype != np.float32
                or not out.flags["C_CONTIGUOUS"]
                or not out.flags["WRITEABLE"]
            ):
                raise ShapeDtypeError(
                    "out must be a writable C-contiguous float32 buffer "
                    "shaped like pred"
                )
            if np.shares_memory(out, pred):
                raise ShapeDtypeError("out must not alias the prediction")

        with tempfile.TemporaryDirectory(prefix="bmseg-bind-") as tmp:
            tmpdir = Path(tmp)
            pred_path = tmpdir / "pred.mcbm"
            gt_path = tmpdir / "gt.mcbm"
            report_path = tmpdir / "loss.json"
            _write_mcbm(pred_path, pred)
            _write_mcbm(gt_path, gt_labels)
            cmd = (
                self._cli
                + [
                    "loss",
                    "--pred", str(pred_path),
                    "--gt", str(gt_path),
                    "--step", str(int(step)),
                    "--out", str(report_path),
                ]
                + self._flags
            )
            proc = subprocess.run(cmd, capture_output=True, text=True)
            if proc.returncode == 1:
                raise ShapeDtypeError(proc.stderr.strip() or "validation error")
            if proc.returncode != 0:
                raise BindingError(
                    f"loss tool exited {proc.returncode}: {proc.stderr.strip()}"
                )
            report = json.loads(report_path.read_text())
            gradient = _read_mcbm_f32(tmpdir / "loss.grad.mcbm")

        loss = report["loss"]
        components = LossComponents(
            total=loss["total"],
            dice_component=loss["dice_component"],
            topo_matched=loss["topo_matched"],
            topo_unmatched=loss["topo_unmatched"],
            alpha=loss["alpha"],
            per_class=tuple(
                (e["class"], e["topo_matched"], e["topo_unmatched"])
                for e in loss["per_class"]
            ),
        )
        if out is None:
            out = gradient.copy()
        else:
            np.copyto(out, gradient)
        return components, out

    @staticmethod
    def _check_pred(pred: np.ndarray) -> np.ndarray:
        if not isinstance(pred, np.ndarray):
            raise ShapeDtypeError("pred must be a numpy array")
        if pred.dtype != np.float32:
            raise ShapeDtypeError(f"pred must be float32, got {pred.dtype}")
        if pred.ndim != 3:
            raise ShapeDtypeError(
                f"pred must be (classes, H, W), got {pred.ndim}D"
            )
        if not pred.flags["C_CONTIGUOUS"]:
            raise ShapeDtypeError("pred must be C-contiguous")
        return pred

    @staticmethod
    def _check_labels(gt_labels: np.ndarray, pred: np.ndarray) -> np.ndarray:
        if not isinstance(gt_labels, np.ndarray):
            raise ShapeDtypeError("gt_labels must be a numpy array")
        if gt_labels.dtype != np.uint8:
            raise ShapeDtypeError(
                f"gt_labels must be uint8, got {gt_labels.dtype}"
            )
        if gt_labels.ndim != 2 or gt_labels.shape != pred.shape[1:]:
            raise ShapeDtypeError(
                f"gt_labels shape {gt_labels.shape} does not match "
                f"prediction grid {pred.shape[1:]}"
            )
        if not gt_labels.flags["C_CONTIGUOUS"]:
            raise ShapeDtypeError("gt_labels must be C-contiguous")
        return gt_labels
