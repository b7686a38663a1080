"""Encoder-decoder map predictors.

Static networks are U-Nets: per stage, conv -> ReLU -> 2x2 maxpool on
the way down, and upsample -> concat(skip) -> transpose-conv -> ReLU on
the way up, with a final 1x1 projection to one output channel. The
transient network keeps two conv/pool stages and runs two convolutional
LSTM cells (one closing the encoder, one opening the decoder) that carry
state across the frame sequence.

Because only kernel weights are stored, a trained model applies to any
die size: inference pads inputs up to a multiple of 2^depth with edge
replication and crops the prediction back.
"""

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import DataError
from .features import LABEL_KIND, NormStats, apply_norm
from .gridio import GridMap, GridSequence, pad_to_multiple
from .nn import ops
from .rng import TAG_INIT, case_rng

MODEL_MAGIC = b"EDGEMDL1"


@dataclass(frozen=True)
class StaticEdgeConfig:
    """Encoder stages as (kernel, filters); the decoder mirrors them."""

    stages: tuple = ((5, 64), (3, 32), (3, 16))
    in_channels: int = 1

    def __post_init__(self):
        if not self.stages:
            raise ValueError("at least one encoder stage required")
        for (k, f) in self.stages:
            if k % 2 == 0 or k < 1 or f < 1:
                raise ValueError(f"bad stage ({k}, {f}): kernel must be odd")

    @property
    def depth(self):
        return len(self.stages)

    @classmethod
    def thermal(cls):
        return cls(stages=((5, 64), (3, 32), (3, 16)), in_channels=1)

    @classmethod
    def ir(cls):
        return cls(stages=((3, 64), (3, 32), (3, 16)), in_channels=3)


@dataclass(frozen=True)
class TransientEdgeConfig:
    """Two conv/pool stages around a pair of ConvLSTM cells."""

    stages: tuple = ((5, 64), (3, 32))
    lstm_kernel: int = 7
    lstm_filters: int = 16
    in_channels: int = 1
    frames: int = 200
    dt_seconds: float = 15.0

    def __post_init__(self):
        for (k, f) in self.stages:
            if k % 2 == 0 or k < 1 or f < 1:
                raise ValueError(f"bad stage ({k}, {f}): kernel must be odd")
        if self.lstm_kernel % 2 == 0:
            raise ValueError("lstm kernel must be odd")

    @property
    def depth(self):
        return len(self.stages)


def receptive_field(cfg):
    """Input-pixel extent feeding one bottleneck pixel, from the stacked
    conv/pool (and, for transient, ConvLSTM) kernel ledger."""
    rf, jump = 1, 1
    for (k, _) in cfg.stages:
        rf += (k - 1) * jump
        rf += jump  # 2x2 pool, stride 2
        jump *= 2
    if isinstance(cfg, TransientEdgeConfig):
        rf += 2 * (cfg.lstm_kernel - 1) * jump
    return rf


class _EncoderDecoder:
    """Shared U-Net machinery: stage construction plus forward/backward
    of the conv/pool encoder and upsample/concat/transpose decoder."""

    def __init__(self, cfg, rng, dtype):
        self.cfg = cfg
        self.dtype = dtype
        self.enc = []
        c_in = cfg.in_channels
        for s, (k, f) in enumerate(cfg.stages):
            self.enc.append(nn.ConvLayer(c_in, f, k, rng=rng, dtype=dtype,
                                         name=f"enc{s + 1}"))
            c_in = f
        self.bottleneck_channels = c_in

    def _build_decoder(self, rng, top_channels):
        """Decoder stages deepest-first; stage s consumes the previous
        stage's output concatenated with encoder skip s."""
        self.dec = []
        c_prev = top_channels
        for s in range(len(self.cfg.stages) - 1, -1, -1):
            k, f = self.cfg.stages[s]
            self.dec.append(nn.ConvTransposeLayer(c_prev + f, f, k, rng=rng,
                                                  dtype=self.dtype,
                                                  name=f"dec{s + 1}"))
            c_prev = f
        self.final = nn.ConvLayer(c_prev, 1, 1, rng=rng, dtype=self.dtype,
                                  name="project")

    def _encode(self, x):
        h = x
        ctx = []
        for layer in self.enc:
            pre = layer.forward(h)
            act = ops.relu(pre)
            pooled, idx = ops.maxpool2(act)
            ctx.append((h, pre, act, idx))
            h = pooled
        return h, ctx

    def _decode(self, h, enc_ctx):
        ctx = []
        for d, layer in enumerate(self.dec):
            s = len(self.enc) - 1 - d
            up = ops.upsample2(h)
            z = ops.concat_channels(up, enc_ctx[s][2])
            pre = layer.forward(z)
            h = ops.relu(pre)
            ctx.append((z, pre, up.shape[1]))
        y = self.final.forward(h)
        ctx.append(h)
        return y, ctx

    def _decode_backward(self, dy, dec_ctx):
        """Returns (d_bottleneck, per-stage skip gradients indexed like enc)."""
        dh = self.final.backward(dec_ctx[-1], dy)
        dskips = [None] * len(self.enc)
        for d in range(len(self.dec) - 1, -1, -1):
            s = len(self.enc) - 1 - d
            z, pre, up_channels = dec_ctx[d]
            dpre = ops.relu_backward(pre, dh)
            dz = self.dec[d].backward(z, dpre)
            dup, dskips[s] = ops.split_channels(dz, up_channels)
            dh = ops.upsample2_backward(dup)
        return dh, dskips

    def _encode_backward(self, dh, dskips, enc_ctx):
        for s in range(len(self.enc) - 1, -1, -1):
            h_in, pre, act, idx = enc_ctx[s]
            dact = ops.maxpool2_backward(idx, dh)
            if dskips[s] is not None:
                dact = dact + dskips[s]
            dpre = ops.relu_backward(pre, dact)
            dh = self.enc[s].backward(h_in, dpre)
        return dh

    def _layers(self):
        return [*self.enc, *self.dec, self.final]

    def zero_grad(self):
        for layer in self._layers():
            layer.zero_grad()

    def params(self):
        out = []
        for layer in self._layers():
            out.extend(layer.params())
        return out

    def parameter_count(self):
        return sum(int(w.size) for (_, w, _) in self.params())


class StaticEdgeNet(_EncoderDecoder):
    def __init__(self, cfg, rng, dtype=np.float32):
        super().__init__(cfg, rng, dtype)
        self._build_decoder(rng, self.bottleneck_channels)
        self._ctx = None

    def forward(self, x, train=False):
        h, enc_ctx = self._encode(x)
        y, dec_ctx = self._decode(h, enc_ctx)
        self._ctx = (enc_ctx, dec_ctx) if train else None
        return y

    def backward(self, dy):
        if self._ctx is None:
            raise RuntimeError("backward requires forward(train=True)")
        enc_ctx, dec_ctx = self._ctx
        dh, dskips = self._decode_backward(dy, dec_ctx)
        dx = self._encode_backward(dh, dskips, enc_ctx)
        self._ctx = None
        return dx


class TransientEdgeNet(_EncoderDecoder):
    def __init__(self, cfg, rng, dtype=np.float32):
        super().__init__(cfg, rng, dtype)
        self.lstm_enc = nn.ConvLstmCell(self.bottleneck_channels, cfg.lstm_filters,
                                        cfg.lstm_kernel, rng=rng, dtype=dtype,
                                        name="lstm_enc")
        self.lstm_dec = nn.ConvLstmCell(cfg.lstm_filters, cfg.lstm_filters,
                                        cfg.lstm_kernel, rng=rng, dtype=dtype,
                                        name="lstm_dec")
        self._build_decoder(rng, cfg.lstm_filters)
        self._ctx = None

    def _layers(self):
        return [*self.enc, self.lstm_enc, self.lstm_dec, *self.dec, self.final]

    def forward_sequence(self, xs, train=False):
        """xs: (N, T, C, H, W) -> (N, T, 1, H, W); LSTM state persists
        across the frame axis."""
        n, t, c, h, w = xs.shape
        hb = h >> self.cfg.depth
        wb = w >> self.cfg.depth
        state1 = self.lstm_enc.init_state(n, hb, wb, dtype=xs.dtype)
        state2 = self.lstm_dec.init_state(n, hb, wb, dtype=xs.dtype)
        ys = np.empty((n, t, 1, h, w), dtype=xs.dtype)
        steps = []
        for i in range(t):
            b, enc_ctx = self._encode(np.ascontiguousarray(xs[:, i]))
            h1, state1, ctx1 = self.lstm_enc.step(b, state1)
            h2, state2, ctx2 = self.lstm_dec.step(h1, state2)
            y, dec_ctx = self._decode(h2, enc_ctx)
            ys[:, i] = y
            if train:
                steps.append((enc_ctx, ctx1, ctx2, dec_ctx))
        self._ctx = steps if train else None
        return ys

    def backward_sequence(self, dys):
        if self._ctx is None:
            raise RuntimeError("backward requires forward_sequence(train=True)")
        steps = self._ctx
        dh1_carry = dc1_carry = dh2_carry = dc2_carry = None
        for i in range(len(steps) - 1, -1, -1):
            enc_ctx, ctx1, ctx2, dec_ctx = steps[i]
            dh2, dskips = self._decode_backward(np.ascontiguousarray(dys[:, i]),
                                                dec_ctx)
            if dh2_carry is not None:
                dh2 = dh2 + dh2_carry
            if dc2_carry is None:
                dc2_carry = np.zeros_like(dh2)
            dh1, dh2_carry, dc2_carry = self.lstm_dec.step_backward(
                ctx2, dh2, dc2_carry)
            if dh1_carry is not None:
                dh1 = dh1 + dh1_carry
            if dc1_carry is None:
                dc1_carry = np.zeros_like(dh1)
            db, dh1_carry, dc1_carry = self.lstm_enc.step_backward(
                ctx1, dh1, dc1_carry)
            self._encode_backward(db, dskips, enc_ctx)
        self._ctx = None


def build_static(cfg, seed, dtype=np.float32):
    """Deterministic build: same (cfg, seed) gives identical parameters."""
    return StaticEdgeNet(cfg, case_rng(seed, 0, TAG_INIT), dtype=dtype)


def build_transient(cfg, seed, dtype=np.float32):
    return TransientEdgeNet(cfg, case_rng(seed, 0, TAG_INIT), dtype=dtype)


@dataclass
class ModelBundle:
    """Everything inference needs: architecture, weights, and the
    normalization fitted at training time."""

    task: str
    config: object
    net: object
    norm: NormStats

    @property
    def pad_multiple(self):
        return 1 << self.config.depth


def _pad_channels(channels, multiple):
    padded = []
    rec = None
    for ch in channels:
        p, rec = pad_to_multiple(ch, multiple)
        padded.append(p.values)
    return np.stack(padded), rec


def infer(bundle, features, dt_seconds=None):
    """Run one case end to end: pad to 2^depth, normalize with the
    stored stats, forward, de-normalize, crop to the input window.

    ``features`` is a FeatureTensor for static tasks or a sequence of
    per-frame FeatureTensors for the transient task (returning a
    GridSequence at ``dt_seconds``, default the config's dt).
    """
    norm = bundle.norm
    kind = LABEL_KIND[bundle.task]
    if bundle.task == "thermal_transient":
        frames = list(features)
        first = frames[0].channels[0]
        arrs = []
        rec = None
        for ft in frames:
            if len(ft.channels) != bundle.config.in_channels:
                raise DataError(
                    f"model expects {bundle.config.in_channels} channels, "
                    f"got {len(ft.channels)}")
            arr, rec = _pad_channels(ft.channels, bundle.pad_multiple)
            arrs.append(apply_norm(norm, arr))
        xs = np.stack(arrs)[None].astype(np.float32)  # (1, T, C, H, W)
        ys = bundle.net.forward_sequence(xs, train=False)
        out = []
        for i in range(ys.shape[1]):
            pred = norm.denormalize_label(ys[0, i, 0].astype(np.float64))
            out.append(GridMap(first.rows, first.cols, first.pixel_size_um,
                               kind, rec.crop_array(pred).copy()))
        dt = dt_seconds if dt_seconds is not None else bundle.config.dt_seconds
        return GridSequence(tuple(out), dt)

    if len(features.channels) != bundle.config.in_channels:
        raise DataError(f"model expects {bundle.config.in_channels} channels, "
                        f"got {len(features.channels)}")
    first = features.channels[0]
    arr, rec = _pad_channels(features.channels, bundle.pad_multiple)
    x = apply_norm(norm, arr)[None].astype(np.float32)
    y = bundle.net.forward(x, train=False)
    pred = norm.denormalize_label(y[0, 0].astype(np.float64))
    return GridMap(first.rows, first.cols, first.pixel_size_um, kind,
                   rec.crop_array(pred).copy())


def _arch_header(bundle):
    cfg = bundle.config
    if isinstance(cfg, StaticEdgeConfig):
        arch = {"kind": "static", "stages": [list(s) for s in cfg.stages],
                "in_channels": cfg.in_channels}
    else:
        arch = {"kind": "transient", "stages": [list(s) for s in cfg.stages],
                "lstm_kernel": cfg.lstm_kernel, "lstm_filters": cfg.lstm_filters,
                "in_channels": cfg.in_channels, "frames": cfg.frames,
                "dt_seconds": cfg.dt_seconds}
    norm = bundle.norm
    return {"format": "EDGEMODEL", "version": 1, "task": bundle.task,
            "arch": arch,
            "norm": {"channel_mean": list(norm.channel_mean),
                     "channel_std": list(norm.channel_std),
                     "label_mean": norm.label_mean,
                     "label_std": norm.label_std}}


def save(bundle, path):
    """EDGEMODEL v1 container: magic, JSON header, per-layer records of
    little-endian float32, trailing CRC32 of all preceding bytes."""
    header = json.dumps(_arch_header(bundle)).encode()
    blob = bytearray()
    blob += MODEL_MAGIC
    blob += struct.pack("<I", len(header))
    blob += header
    for name, w, _ in bundle.net.params():
        enc = name.encode()
        blob += struct.pack("<H", len(enc))
        blob += enc
        blob += struct.pack("<B", w.ndim)
        blob += struct.pack(f"<{w.ndim}I", *w.shape)
        blob += np.ascontiguousarray(w, dtype="<f4").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(bytes(blob))


def _rebuild(header):
    arch = header["arch"]
    stages = tuple(tuple(s) for s in arch["stages"])
    if arch["kind"] == "static":
        cfg = StaticEdgeConfig(stages=stages, in_channels=arch["in_channels"])
        net = StaticEdgeNet(cfg, rng=None)
    else:
        cfg = TransientEdgeConfig(stages=stages, lstm_kernel=arch["lstm_kernel"],
                                  lstm_filters=arch["lstm_filters"],
                                  in_channels=arch["in_channels"],
                                  frames=arch["frames"],
                                  dt_seconds=arch["dt_seconds"])
        net = TransientEdgeNet(cfg, rng=None)
    return cfg, net


def load(path):
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise DataError(f"cannot read model file {path}: {e}") from e
    if len(blob) < len(MODEL_MAGIC) + 8:
        raise DataError(f"{path}: truncated model file")
    if blob[:7] != MODEL_MAGIC[:7]:
        raise DataError(f"{path}: bad magic, not an EDGEMODEL file")
    if blob[7:8] != MODEL_MAGIC[7:8]:
        raise DataError(f"{path}: unsupported version {blob[7:8]!r}")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise DataError(f"{path}: checksum failure")
    off = len(MODEL_MAGIC)
    (hlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    try:
        header = json.loads(blob[off:off + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: unreadable header: {e}") from e
    off += hlen
    if header.get("format") != "EDGEMODEL" or header.get("version") != 1:
        raise DataError(f"{path}: unsupported header version")
    cfg, net = _rebuild(header)
    expected = {name: w for (name, w, _) in net.params()}
    end = len(blob) - 4
    seen = set()
    while off < end:
        if off + 2 > end:
            raise DataError(f"{path}: truncated model file")
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        off += 4 * count
        if name not in expected:
            raise DataError(f"{path}: unexpected layer record {name!r}")
        w = expected[name]
        if tuple(shape) != w.shape:
            raise DataError(f"{path}: shape mismatch for {name!r}")
        w[...] = data.reshape(shape).astype(w.dtype)
        seen.add(name)
    if seen != set(expected):
        raise DataError(f"{path}: missing layer records: {sorted(set(expected) - seen)}")
    norm = NormStats(tuple(header["norm"]["channel_mean"]),
                     tuple(header["norm"]["channel_std"]),
                     header["norm"]["label_mean"], header["norm"]["label_std"])
    return ModelBundle(header["task"], cfg, net, norm)
