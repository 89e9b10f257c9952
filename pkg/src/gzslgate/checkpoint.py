"""Model checkpoint file.

Layout: magic "GAE1"; dims dim_v, dim_a, dim_z, h_v, h_a as little-endian
uint32; then the weight/bias tensors of the four networks in fixed order
f_v, g_v, f_a, g_a (per network: W1, b1, W2, b2) as little-endian float64,
row-major. The shapes are implied by the dims, so tensors carry no
headers. A trained seen classifier is appended under the tag "SCLS":
uint32 class count K, then W (dim_v x K) and b (K) with the same tensor
encoding, then K little-endian uint32 global class ids.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autoencoder import TwoStreamAE
from .errors import DataError
from .experts import SeenClassifier
from .nn import Mlp2

GAE_MAGIC = b"GAE1"
SCLS_TAG = b"SCLS"


def _net_shapes(dim_in: int, hidden: int, dim_out: int) -> list:
    return [(dim_in, hidden), (hidden,), (hidden, dim_out), (dim_out,)]


def _all_shapes(dim_v, dim_a, dim_z, h_v, h_a) -> list:
    return (_net_shapes(dim_v, h_v, dim_z) + _net_shapes(dim_z, h_v, dim_v)
            + _net_shapes(dim_a, h_a, dim_z) + _net_shapes(dim_z, h_a, dim_a))


def save_model(path, ae: TwoStreamAE, clf: SeenClassifier | None = None) -> None:
    ae.validate()
    h_v = ae.f_v.dim_hidden
    h_a = ae.f_a.dim_hidden
    chunks = [GAE_MAGIC,
              struct.pack("<IIIII", ae.dim_v, ae.dim_a, ae.dim_z, h_v, h_a)]
    for net in (ae.f_v, ae.g_v, ae.f_a, ae.g_a):
        for arr in (net.W1, net.b1, net.W2, net.b2):
            chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    if clf is not None:
        chunks.append(SCLS_TAG)
        chunks.append(struct.pack("<I", clf.n_classes))
        chunks.append(np.ascontiguousarray(clf.W, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(clf.b, dtype="<f8").tobytes())
        chunks.append(clf.class_ids.astype("<u4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path) -> tuple[TwoStreamAE, SeenClassifier | None]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 24:
        raise DataError(f"{path}: truncated header, {len(raw)} bytes < 24")
    if raw[:4] != GAE_MAGIC:
        raise DataError(f"{path}: bad magic {raw[:4]!r} at offset 0")
    dim_v, dim_a, dim_z, h_v, h_a = struct.unpack("<IIIII", raw[4:24])

    offset = 24
    tensors = []
    for shape in _all_shapes(dim_v, dim_a, dim_z, h_v, h_a):
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(raw):
            raise DataError(
                f"{path}: truncated tensor at offset {offset}, need {end} bytes")
        tensors.append(np.frombuffer(raw, dtype="<f8", count=count,
                                     offset=offset).reshape(shape).copy())
        offset = end

    def take_net() -> Mlp2:
        W1, b1, W2, b2 = tensors[:4]
        del tensors[:4]
        return Mlp2(W1=W1, b1=b1, W2=W2, b2=b2)

    ae = TwoStreamAE(f_v=take_net(), g_v=take_net(),
                     f_a=take_net(), g_a=take_net())
    ae.validate()

    clf = None
    if offset < len(raw):
        if raw[offset:offset + 4] != SCLS_TAG:
            raise DataError(
                f"{path}: unexpected trailing bytes at offset {offset}")
        if offset + 8 > len(raw):
            raise DataError(f"{path}: truncated classifier header at offset {offset}")
        (k,) = struct.unpack("<I", raw[offset + 4:offset + 8])
        offset += 8
        need = 8 * dim_v * k + 8 * k + 4 * k
        if offset + need != len(raw):
            raise DataError(
                f"{path}: classifier block at offset {offset} needs {need} "
                f"bytes, file has {len(raw) - offset}")
        W = np.frombuffer(raw, dtype="<f8", count=dim_v * k,
                          offset=offset).reshape(dim_v, k).copy()
        offset += 8 * dim_v * k
        b = np.frombuffer(raw, dtype="<f8", count=k, offset=offset).copy()
        offset += 8 * k
        ids = np.frombuffer(raw, dtype="<u4", count=k,
                            offset=offset).astype(np.int64)
        clf = SeenClassifier(W=W, b=b, class_ids=ids)
    return ae, clf
