"""The grid detector network, its weight file, SGD training and inference."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .._util import check_feature_batch
from ..pnm import write_atomic
from .boxes import BBox, Detection, nms
from .layers import Conv2D, PoolLeakyReLU
from .loss import LossConfig, yolo_loss

INPUT_SIZE = 208
WIDTHS = (16, 32, 64, 128)
WEIGHT_MAGIC = b"SSW1"


class WeightFileError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 64
    iterations: int = 2000
    seed: int = 1
    hflip: bool = True
    chunk: int = 16  # images per forward/backward pass; does not change the result


def _uniform_init(rng, shape, dtype):
    fan_in = int(np.prod(shape[1:]))
    lim = np.sqrt(6.0 / fan_in)
    return rng.uniform(-lim, lim, size=shape).astype(dtype)


class DetectorNet:
    """Four [3x3 conv, 2x2 max-pool, leaky ReLU] blocks and a 1x1 conv head.

    Pooling and activation run fused (see :class:`PoolLeakyReLU`).
    """

    def __init__(self, convs, loss_config=LossConfig()):
        self.loss_config = loss_config
        self.layers = []
        for i, (w, b) in enumerate(convs):
            conv = Conv2D(w, b, input_grad=i > 0)
            if w.shape[-1] == 3:
                self.layers += [conv, PoolLeakyReLU(0.1)]
            else:
                self.layers.append(conv)

    @classmethod
    def initialize(cls, seed=1, widths=WIDTHS, in_channels=3, loss_config=LossConfig(),
                   dtype=np.float32):
        rng = np.random.default_rng(seed)
        convs = []
        c = in_channels
        for k in widths:
            convs.append((_uniform_init(rng, (k, c, 3, 3), dtype), np.zeros(k, dtype)))
            c = k
        out = loss_config.depth
        convs.append((_uniform_init(rng, (out, c, 1, 1), dtype), np.zeros(out, dtype)))
        return cls(convs, loss_config)

    @property
    def convs(self):
        return [l for l in self.layers if isinstance(l, Conv2D)]

    @property
    def params(self):
        return [p for l in self.layers for p in l.params]

    @property
    def dtype(self):
        return self.convs[0].weight.dtype

    def forward(self, x, keep=False):
        """Raw grid outputs for (N, H, W, 3) inputs scaled to [0, 1]; (N, S, S, depth)."""
        h = np.ascontiguousarray(np.asarray(x, dtype=self.dtype).transpose(3, 0, 1, 2))
        for layer in self.layers:
            h = layer.forward(h, keep=keep)
        return h.transpose(1, 2, 3, 0)

    def backward(self, grad_out):
        """Parameter gradients, in :attr:`params` order, from d loss / d raw output."""
        g = np.ascontiguousarray(np.asarray(grad_out, dtype=self.dtype).transpose(3, 0, 1, 2))
        grads = []
        for layer in reversed(self.layers):
            g, pg = layer.backward(g)
            grads[:0] = pg
        return grads


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def decode_grid(raw):
    """Decoded grid: sigmoid on every component."""
    return sigmoid(raw)


def forward(net, features):
    """Raw (N, 13, 13, 26) output for byte feature images already at 208x208."""
    X = check_feature_batch(features)
    return net.forward(X.astype(np.float32) / 255.0)


def resize_nearest(img, size=INPUT_SIZE):
    """Nearest-neighbour resize of an (H, W, ...) image to size x size."""
    a = np.asarray(img)
    H, W = a.shape[:2]
    rows = np.minimum(((np.arange(size) + 0.5) * H / size).astype(np.int64), H - 1)
    cols = np.minimum(((np.arange(size) + 0.5) * W / size).astype(np.int64), W - 1)
    return a[rows][:, cols]


def prepare_inputs(features, size=INPUT_SIZE):
    X = check_feature_batch(features)
    if X.shape[1:3] == (size, size):
        return X
    return np.stack([resize_nearest(f, size) for f in X])


def batch_loss_and_grads(net, X, targets, chunk=16, iou_grad=False):
    """Mean loss over the batch and the matching parameter gradients.

    Images run through the net ``chunk`` at a time; gradients are summed in
    a fixed order so the result does not depend on ``chunk`` beyond float
    rounding. ``iou_grad`` is passed to :func:`yolo_loss`.
    """
    cfg = net.loss_config
    n = len(X)
    total = 0.0
    acc = None
    for s in range(0, n, chunk):
        xb = X[s:s + chunk]
        raw = net.forward(xb, keep=True)
        dec = decode_grid(raw)
        g_dec = np.empty_like(dec)
        for i in range(len(xb)):
            loss, g_dec[i] = yolo_loss(dec[i], targets[s + i], cfg, iou_grad)
            total += loss
        g_raw = g_dec * dec * (1.0 - dec) / n
        grads = net.backward(g_raw)
        acc = grads if acc is None else [a + g for a, g in zip(acc, grads)]
    return total / n, acc


def sgd_step(net, grads, velocity, config: TrainConfig):
    """v <- momentum * v - lr * (g + wd * theta); theta <- theta + v (in place)."""
    lr = net.dtype.type(config.learning_rate)
    mom = net.dtype.type(config.momentum)
    wd = net.dtype.type(config.weight_decay)
    for p, g, v in zip(net.params, grads, velocity):
        v *= mom
        v -= lr * (g + wd * p)
        p += v


def _flip_boxes(boxes):
    return [BBox(1.0 - b.cx, b.cy, b.w, b.h) for b in boxes]


def train(features, targets, config=TrainConfig(), loss_config=LossConfig(), log_path=None,
          callback=None):
    """Mini-batch SGD from a seeded initialisation.

    ``features`` are byte feature images (resized to 208x208 here if needed),
    ``targets`` one list of BBox per image. Returns ``(net, losses)``.
    """
    X = prepare_inputs(features)
    targets = [list(map(lambda b: BBox(*b), t)) for t in targets]
    if len(X) != len(targets):
        raise ValueError("features and targets differ in length")
    if len(X) == 0:
        raise ValueError("no training images")
    rng = np.random.default_rng(config.seed)
    net = DetectorNet.initialize(int(rng.integers(2 ** 63)), loss_config=loss_config)
    velocity = [np.zeros_like(p) for p in net.params]
    order = rng.permutation(len(X))
    pos = 0
    losses = []
    for it in range(config.iterations):
        idx = []
        while len(idx) < config.batch_size:
            if pos == len(order):
                order = rng.permutation(len(X))
                pos = 0
            take = min(config.batch_size - len(idx), len(order) - pos)
            idx.extend(order[pos:pos + take].tolist())
            pos += take
        flips = rng.random(len(idx)) < 0.5 if config.hflip else np.zeros(len(idx), bool)
        xb = X[idx].astype(np.float32) / np.float32(255.0)
        xb[flips] = xb[flips][:, :, ::-1]
        tb = [_flip_boxes(targets[i]) if f else targets[i] for i, f in zip(idx, flips)]
        loss, grads = batch_loss_and_grads(net, xb, tb, chunk=config.chunk)
        sgd_step(net, grads, velocity, config)
        losses.append(loss)
        if callback is not None:
            callback(it, loss)
    if log_path is not None:
        write_loss_log(log_path, losses)
    return net, losses


def write_loss_log(path, losses):
    lines = ["iteration,loss"] + [f"{i},{float(l)!r}" for i, l in enumerate(losses)]
    write_atomic(path, ("\n".join(lines) + "\n").encode())


def read_loss_log(path):
    with open(path, newline="") as fh:
        return [float(r["loss"]) for r in csv.DictReader(fh)]


def grid_detections(decoded, config=LossConfig()):
    """Every box slot of one decoded grid as a Detection."""
    S, B = config.S, config.B
    g = np.asarray(decoded).reshape(S, S, config.depth)
    boxes = g[..., :B * 5].reshape(S, S, B, 5)
    cls = g[..., B * 5]
    out = []
    for row in range(S):
        for col in range(S):
            for j in range(B):
                x, y, w, h, c = boxes[row, col, j].tolist()
                box = BBox((col + x) / S, (row + y) / S, w, h)
                out.append(Detection(box, c, float(cls[row, col]), (row * S + col) * B + j))
    return out


def detect(net, feature_image, conf_threshold=0.25, nms_threshold=0.4):
    """Detections for one feature image: threshold on confidence x class, then NMS."""
    X = prepare_inputs(feature_image)
    if len(X) != 1:
        raise ValueError("detect takes a single feature image")
    dec = decode_grid(forward(net, X))[0]
    dets = [d for d in grid_detections(dec, net.loss_config) if d.score >= conf_threshold]
    return nms(dets, nms_threshold)


# -- weight file --------------------------------------------------------------
# "SSW1", u32 layer count, then per conv layer: u32 ndim, u32 dims, float32
# weights (row-major), float32 bias (dims[0] values). All little-endian.


def save_weights(net, path=None) -> bytes:
    parts = [WEIGHT_MAGIC, struct.pack("<I", len(net.convs))]
    for conv in net.convs:
        w = conv.weight
        parts.append(struct.pack("<I", w.ndim) + struct.pack(f"<{w.ndim}I", *w.shape))
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(conv.bias, dtype="<f4").tobytes())
    data = b"".join(parts)
    if path is not None:
        write_atomic(path, data)
    return data


def load_weights(source, loss_config=LossConfig()) -> DetectorNet:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if data[:4] != WEIGHT_MAGIC:
        raise WeightFileError("not a detector weight file (bad magic)")
    try:
        (n,) = struct.unpack_from("<I", data, 4)
        pos = 8
        convs = []
        for _ in range(n):
            (ndim,) = struct.unpack_from("<I", data, pos)
            shape = struct.unpack_from(f"<{ndim}I", data, pos + 4)
            pos += 4 + 4 * ndim
            count = int(np.prod(shape))
            w = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape)
            pos += 4 * count
            b = np.frombuffer(data, dtype="<f4", count=shape[0], offset=pos)
            pos += 4 * shape[0]
            convs.append((w.astype(np.float32), b.astype(np.float32)))
    except (struct.error, ValueError) as exc:
        raise WeightFileError(f"truncated weight file: {exc}") from None
    if pos != len(data):
        raise WeightFileError("trailing bytes in weight file")
    if not convs or convs[-1][0].shape[0] != loss_config.depth:
        raise WeightFileError("weight file does not end in a detection head")
    return DetectorNet(convs, loss_config)
