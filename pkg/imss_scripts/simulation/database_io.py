"""数据库二进制文件读写

小端格式，布局见 docs/file_formats.md：
    "IMSS" | u16 版本 | u32 向量数 | u32 码长 | u16 标签 × N | 打包码字（每行补齐到字节）
    | u8 是否物化
    [物化时] u32 tile_bits | u32 tile_cols | f64 v_read | f64 r_access | f64 i_match | f64 i_mismatch
             | 逐段：f32 上器件阻值 (tile_bits × N, 行优先) | f32 下器件阻值 (同上)
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from imss_scripts.devices.crossbar_array import ArrayTile, padding_mask
from imss_scripts.errors import DataFormatError, DomainError
from imss_scripts.simulation.imss_engine import SearchDatabase, TilingMap, pad_bits

logger = logging.getLogger(__name__)

MAGIC = b"IMSS"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHII")
_TILING = struct.Struct("<IIdddd")
_MAX_LABEL = np.iinfo(np.uint16).max


def encode_database(db: SearchDatabase) -> bytes:
    if db.labels.size and (db.labels.min() < 0 or db.labels.max() > _MAX_LABEL):
        raise DomainError(f"标签必须在 [0, {_MAX_LABEL}] 内才能写入 u16")
    parts = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, db.n_vectors, db.n_bits),
        db.labels.astype("<u2").tobytes(),
        db.codes.tobytes(),
    ]
    if db.is_materialized:
        t = db.tiling
        parts.append(b"\x01")
        parts.append(_TILING.pack(t.tile_bits, t.tile_cols, t.v_read, t.r_access, t.i_match, t.i_mismatch))
        for tile in db.tiles:
            parts.append(tile.r_top.astype("<f4").tobytes())
            parts.append(tile.r_bottom.astype("<f4").tobytes())
    else:
        parts.append(b"\x00")
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataFormatError(f"文件被截断：偏移 {self.pos} 处需要 {n} 字节")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        return np.frombuffer(self.take(size), dtype=dtype, count=count)


def decode_database(data: bytes) -> SearchDatabase:
    reader = _Reader(data)
    magic, version, n_vectors, n_bits = _HEADER.unpack(reader.take(_HEADER.size))
    if magic != MAGIC:
        raise DataFormatError(f"魔数错误: {magic!r}")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"不支持的格式版本: {version}")
    if n_bits < 1:
        raise DataFormatError(f"码长非法: {n_bits}")

    n_bytes = (n_bits + 7) // 8
    labels = reader.array("<u2", n_vectors).astype(np.int64)
    codes = reader.array("u1", n_vectors * n_bytes).reshape(n_vectors, n_bytes).copy()
    dirty = np.flatnonzero(codes[:, -1] & padding_mask(n_bits))
    if dirty.size:
        raise DataFormatError(f"第 {int(dirty[0])} 行码字的补齐位不为 0")
    flag = reader.take(1)[0]
    db = SearchDatabase(codes=codes, labels=labels, n_bits=n_bits)

    if flag == 1:
        tile_bits, tile_cols, v_read, r_access, i_match, i_mismatch = _TILING.unpack(reader.take(_TILING.size))
        if tile_bits < 1 or tile_cols < 1:
            raise DataFormatError(f"阵列尺寸非法: {tile_bits}×{tile_cols}")
        tiling = TilingMap(
            n_bits=n_bits, n_vectors=n_vectors, tile_bits=tile_bits, tile_cols=tile_cols,
            v_read=v_read, r_access=r_access, i_match=i_match, i_mismatch=i_mismatch,
        )
        bits = pad_bits(db.bits(), tiling.padded_bits)
        tiles = []
        for s in range(tiling.n_segments):
            lo, hi = tiling.segment_bits(s)
            r_top = reader.array("<f4", tile_bits * n_vectors).reshape(tile_bits, n_vectors)
            r_bottom = reader.array("<f4", tile_bits * n_vectors).reshape(tile_bits, n_vectors)
            if not (np.isfinite(r_top).all() and np.isfinite(r_bottom).all() and (r_top > 0).all() and (r_bottom > 0).all()):
                raise DataFormatError(f"第 {s} 段阻值非法（非正或非有限）")
            tiles.append(ArrayTile(
                stored=bits[:, lo:hi].T.astype(bool),
                r_top=r_top.astype(np.float64),
                r_bottom=r_bottom.astype(np.float64),
                v_read=v_read,
                r_access=r_access,
            ))
        db = SearchDatabase(codes=codes, labels=labels, n_bits=n_bits, tiles=tiles, tiling=tiling)
    elif flag != 0:
        raise DataFormatError(f"物化标志非法: {flag}")

    if reader.pos != len(data):
        raise DataFormatError(f"文件末尾有 {len(data) - reader.pos} 字节多余数据")
    return db


def write_database(db: SearchDatabase, path: Union[str, Path]) -> Path:
    """
    把数据库（含物化阻值）写成二进制文件，父目录不存在时自动创建

    Args:
        db: 数据库
        path: 输出路径

    Returns:
        写入的文件路径
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_database(db))
    logger.info("数据库已写入 %s (%d 个向量, %d 位, 物化=%s)", path, db.n_vectors, db.n_bits, db.is_materialized)
    return path


def read_database(path: Union[str, Path]) -> SearchDatabase:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"数据库文件不存在: {path}")
    return decode_database(path.read_bytes())
