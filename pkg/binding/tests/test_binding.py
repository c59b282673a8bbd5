import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from bmseg_binding import (
    BoundLossHandle,
    LossComponents,
    ShapeDtypeError,
    _write_mcbm,
)


def make_fixture(rng, n_classes=3, shape=(8, 8)):
    labels = rng.integers(0, n_classes, size=shape).astype(np.uint8)
    raw = rng.dirichlet(np.ones(n_classes), size=shape).transpose(2, 0, 1)
    return np.ascontiguousarray(raw.astype(np.float32)), labels


def one_hot_f32(labels, n_classes):
    out = np.zeros((n_classes,) + labels.shape, dtype=np.float32)
    for c in range(n_classes):
        out[c] = labels == c
    return np.ascontiguousarray(out)


def run_cli_loss(tmpdir: Path, pred, labels, step, flags):
    pred_path = tmpdir / "pred.mcbm"
    gt_path = tmpdir / "gt.mcbm"
    out_path = tmpdir / "loss.json"
    _write_mcbm(pred_path, pred)
    _write_mcbm(gt_path, labels)
    cmd = [
        sys.executable, "-m", "bmseg.cli", "loss",
        "--pred", str(pred_path), "--gt", str(gt_path),
        "--step", str(step), "--out", str(out_path),
    ] + flags
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    report = json.loads(out_path.read_text())
    grad_bytes = (tmpdir / "loss.grad.mcbm").read_bytes()
    return report, grad_bytes


def test_binding_parity_with_cli(tmp_path):
    # acceptance: bitwise-equal components and gradients on 20 fixtures
    rng = np.random.default_rng(11)
    handle = BoundLossHandle(
        alpha_max=0.1, total_steps=100, gamma_matched=0.5, gamma_unmatched=2.0
    )
    flags = [
        "--alpha-max", repr(0.1), "--warmup", "0", "--total-steps", "100",
        "--gamma-m", repr(0.5), "--gamma-u", repr(2.0),
    ]
    for i in range(20):
        pred, labels = make_fixture(rng)
        step = int(rng.integers(0, 200))
        components, grad = handle.loss_forward_backward(pred, labels, step)
        sub = tmp_path / f"case{i}"
        sub.mkdir()
        report, grad_bytes = run_cli_loss(sub, pred, labels, step, flags)
        loss = report["loss"]
        assert components.total == loss["total"]
        assert components.dice_component == loss["dice_component"]
        assert components.topo_matched == loss["topo_matched"]
        assert components.topo_unmatched == loss["topo_unmatched"]
        assert components.alpha == loss["alpha"]
        # gradient payload must match the CLI's tensor file to the last bit
        header = 7 + 4 * 3
        assert grad.tobytes() == grad_bytes[header:]


def test_one_hot_input_gives_zero_components():
    rng = np.random.default_rng(1)
    labels = rng.integers(0, 3, size=(6, 6)).astype(np.uint8)
    pred = one_hot_f32(labels, 3)
    handle = BoundLossHandle(alpha_max=0.2, total_steps=10)
    components, _ = handle.loss_forward_backward(pred, labels, step=5)
    assert components.total == 0.0
    assert components.dice_component == 0.0
    assert components.topo_matched == 0.0
    assert components.topo_unmatched == 0.0


def test_call_order_independence():
    rng = np.random.default_rng(2)
    fixtures = [make_fixture(rng) for _ in range(10)]
    handle = BoundLossHandle(alpha_max=0.05, total_steps=50)
    first = [
        handle.loss_forward_backward(p, l, step=3) for p, l in fixtures
    ]
    second = [
        handle.loss_forward_backward(*fixtures[i], step=3)
        for i in reversed(range(10))
    ]
    for i in range(10):
        a, ga = first[i]
        b, gb = second[9 - i]
        assert a == b
        assert ga.tobytes() == gb.tobytes()


def test_gradient_written_into_caller_buffer():
    rng = np.random.default_rng(3)
    pred, labels = make_fixture(rng)
    out = np.full_like(pred, np.nan)
    handle = BoundLossHandle()
    _, returned = handle.loss_forward_backward(pred, labels, 0, out=out)
    assert returned is out
    assert np.all(np.isfinite(out))


def test_shape_dtype_errors():
    handle = BoundLossHandle()
    rng = np.random.default_rng(4)
    pred, labels = make_fixture(rng)
    with pytest.raises(ShapeDtypeError):
        handle.loss_forward_backward(pred.astype(np.float64), labels, 0)
    with pytest.raises(ShapeDtypeError):
        handle.loss_forward_backward(pred[0], labels, 0)
    with pytest.raises(ShapeDtypeError):
        handle.loss_forward_backward(pred, labels[:4], 0)
    with pytest.raises(ShapeDtypeError):
        handle.loss_forward_backward(
            pred, labels.astype(np.int64), 0
        )
    with pytest.raises(ShapeDtypeError):
        handle.loss_forward_backward(
            np.asfortranarray(pred), labels, 0
        )
    with pytest.raises(ShapeDtypeError):
        out = pred  # aliasing the input is rejected
        handle.loss_forward_backward(pred, labels, 0, out=out)


def test_label_out_of_range_surfaces_as_validation_error():
    handle = BoundLossHandle()
    pred = np.full((2, 4, 4), 0.5, dtype=np.float32)
    labels = np.full((4, 4), 7, dtype=np.uint8)
    with pytest.raises(ShapeDtypeError):
        handle.loss_forward_backward(pred, labels, 0)
