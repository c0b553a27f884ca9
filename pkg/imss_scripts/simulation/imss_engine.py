"""存内相似性搜索引擎

温度计编码、数据库构建与分块物化、数字汉明距离检索（精确参考）、
模拟检索（列电流 -> SA -> 量化 -> 按段求和）以及 top-k 众数匹配。

排序约定：距离升序，距离相同时下标小者优先；众数并列时取排名最靠前的那个标签。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from imss_scripts.devices.crossbar_array import ArrayTile, BinaryVector, padding_mask, parallel_search_currents
from imss_scripts.devices.device_model import SeedLike, VariabilityModel, make_rng, nominal_currents
from imss_scripts.errors import ConfigurationError, DimensionError, DomainError, IndexOutOfRangeError, StateError
from imss_scripts.simulation.analog_readout import SenseAmpModel, quantize_hd, select_gain, sense

logger = logging.getLogger(__name__)

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


class ThermometricCode(BaseModel):
    """温度计编码：第 i 位 = v > (resolution−1) + resolution·i"""

    model_config = ConfigDict(frozen=True)

    bits_per_value: int = Field(default=8, ge=1, description="每个分量的编码位数")
    resolution: int = Field(default=32, ge=1, description="相邻阈值间距")

    @property
    def thresholds(self) -> np.ndarray:
        i = np.arange(self.bits_per_value, dtype=np.int64)
        return (self.resolution - 1) + self.resolution * i

    @property
    def max_value(self) -> int:
        return self.bits_per_value * self.resolution - 1


def _check_value(v, code: ThermometricCode) -> int:
    if isinstance(v, (bool, np.bool_)) or not float(v).is_integer():
        raise DomainError(f"编码值必须是整数: {v!r}")
    v = int(v)
    if not 0 <= v <= code.max_value:
        raise DomainError(f"编码值 {v} 超出 [0, {code.max_value}]")
    return v


def count_thresholds(v: int, code: Optional[ThermometricCode] = None) -> int:
    """v 越过的阈值个数"""
    code = code or ThermometricCode()
    v = _check_value(v, code)
    return int((v > code.thresholds).sum())


def thermometric_encode(v: int, code: Optional[ThermometricCode] = None) -> BinaryVector:
    code = code or ThermometricCode()
    v = _check_value(v, code)
    return BinaryVector.from_bits((v > code.thresholds).astype(np.uint8))


def thermometric_encode_array(values: np.ndarray, code: Optional[ThermometricCode] = None) -> np.ndarray:
    """(..., C) 整数数组 -> (..., C·bits_per_value) 比特数组，按分量依次拼接"""
    code = code or ThermometricCode()
    values = np.asarray(values)
    if values.size and (values.min() < 0 or values.max() > code.max_value):
        raise DomainError(f"编码值超出 [0, {code.max_value}]")
    bits = values[..., None].astype(np.int64) > code.thresholds
    return bits.reshape(*values.shape[:-1], values.shape[-1] * code.bits_per_value).astype(np.uint8)


def hamming_distance(a: BinaryVector, b: BinaryVector) -> int:
    """
    两个码字的汉明距离

    Args:
        a: 码字
        b: 与 a 等长的码字

    Returns:
        不同位的个数
    """
    if a.length != b.length:
        raise DimensionError(f"码字长度不一致: {a.length} vs {b.length}")
    xa = np.frombuffer(a.packed, dtype=np.uint8)
    xb = np.frombuffer(b.packed, dtype=np.uint8)
    return int(_POPCOUNT[np.bitwise_xor(xa, xb)].sum())


@dataclass(frozen=True)
class TilingMap:
    """码字分段到物理阵列块的映射

    第 s 段（比特 [s·tile_bits, (s+1)·tile_bits)）存放在虚拟阵列块 s 中，向量 v 占其第 v 列；
    物理上每 tile_cols 列组成一个阵列块，编号 s·n_col_groups + v // tile_cols。
    """
    n_bits: int
    n_vectors: int
    tile_bits: int
    tile_cols: int
    v_read: float
    r_access: float
    i_match: float
    i_mismatch: float

    @property
    def n_segments(self) -> int:
        return math.ceil(self.n_bits / self.tile_bits)

    @property
    def padded_bits(self) -> int:
        return self.n_segments * self.tile_bits

    @property
    def n_col_groups(self) -> int:
        return math.ceil(self.n_vectors / self.tile_cols)

    @property
    def n_physical_tiles(self) -> int:
        return self.n_segments * self.n_col_groups

    def segment_bits(self, segment: int) -> Tuple[int, int]:
        if not 0 <= segment < self.n_segments:
            raise IndexOutOfRangeError(f"段号 {segment} 越界 [0, {self.n_segments})")
        return segment * self.tile_bits, (segment + 1) * self.tile_bits

    def locate(self, vector: int, segment: int) -> Tuple[int, int]:
        """(物理阵列块编号, 块内列号)"""
        if not 0 <= vector < self.n_vectors:
            raise IndexOutOfRangeError(f"向量下标 {vector} 越界 [0, {self.n_vectors})")
        self.segment_bits(segment)
        return segment * self.n_col_groups + vector // self.tile_cols, vector % self.tile_cols


@dataclass
class SearchDatabase:
    """存储向量库：按行打包的码字 + 类别标签，可选物化后的阵列块"""
    codes: np.ndarray
    labels: np.ndarray
    n_bits: int
    tiles: Optional[List[ArrayTile]] = None
    tiling: Optional[TilingMap] = None

    def __post_init__(self):
        self.codes = np.ascontiguousarray(self.codes, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.n_bits < 1:
            raise DimensionError(f"码字长度必须为正: {self.n_bits}")
        n_bytes = (self.n_bits + 7) // 8
        if self.codes.ndim != 2 or self.codes.shape[1] != n_bytes:
            raise DimensionError(f"打包码字形状 {self.codes.shape} 与 n_bits={self.n_bits} 不符")
        if self.labels.shape != (self.codes.shape[0],):
            raise DimensionError(f"标签数 {self.labels.shape} 与向量数 {self.codes.shape[0]} 不一致")
        dirty = np.flatnonzero(self.codes[:, -1] & padding_mask(self.n_bits))
        if dirty.size:
            raise DimensionError(f"第 {int(dirty[0])} 行码字的补齐位不为 0")
        if (self.tiles is None) != (self.tiling is None):
            raise StateError("阵列块与映射表必须同时存在")

    @classmethod
    def from_bits(cls, bits: np.ndarray, labels: Sequence[int]) -> "SearchDatabase":
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise DimensionError("比特矩阵必须是 (n_vectors, n_bits)")
        return cls(codes=np.packbits(bits.astype(np.uint8), axis=1), labels=np.asarray(labels), n_bits=int(bits.shape[1]))

    @classmethod
    def from_vectors(cls, vectors: Sequence[BinaryVector], labels: Sequence[int]) -> "SearchDatabase":
        if not vectors:
            raise StateError("向量列表为空")
        n_bits = vectors[0].length
        if any(v.length != n_bits for v in vectors):
            raise DimensionError("所有码字长度必须一致")
        codes = np.stack([np.frombuffer(v.packed, dtype=np.uint8) for v in vectors])
        return cls(codes=codes, labels=np.asarray(labels), n_bits=n_bits)

    @property
    def n_vectors(self) -> int:
        return int(self.codes.shape[0])

    @property
    def is_materialized(self) -> bool:
        return self.tiles is not None

    def code(self, index: int) -> BinaryVector:
        if not 0 <= index < self.n_vectors:
            raise IndexOutOfRangeError(f"向量下标 {index} 越界 [0, {self.n_vectors})")
        return BinaryVector(packed=self.codes[index].tobytes(), length=self.n_bits)

    def bits(self) -> np.ndarray:
        """解包后的 (n_vectors, n_bits) 比特矩阵"""
        return np.unpackbits(self.codes, axis=1, count=self.n_bits)


@dataclass(frozen=True)
class MatchResult:
    distances: np.ndarray
    topk_indices: np.ndarray
    predicted_label: int
    mode_count: int


@dataclass(frozen=True)
class BatchMatch:
    """批量检索结果，第 m 行对应第 m 个查询"""
    topk_indices: np.ndarray
    topk_distances: np.ndarray
    predicted_labels: np.ndarray
    mode_counts: np.ndarray


def _vote(top_labels: np.ndarray) -> Tuple[int, int]:
    # top_labels 已按 (距离, 下标) 排好序，并列时取最先出现的标签
    uniq, first, counts = np.unique(top_labels, return_index=True, return_counts=True)
    best = counts.max()
    tied = np.flatnonzero(counts == best)
    winner = tied[np.argmin(first[tied])]
    return int(uniq[winner]), int(best)


def _check_search(db: SearchDatabase, n_query_bits: int, k: int) -> None:
    if db.n_vectors == 0:
        raise StateError("数据库为空")
    if n_query_bits != db.n_bits:
        raise DimensionError(f"查询长度 {n_query_bits} 与数据库码长 {db.n_bits} 不符")
    if not 1 <= k <= db.n_vectors:
        raise ConfigurationError(f"k={k} 超出 [1, {db.n_vectors}]")


def _rank(distances: np.ndarray, labels: np.ndarray, k: int) -> MatchResult:
    order = np.argsort(distances, kind="stable")
    topk = order[:k]
    label, count = _vote(labels[topk])
    return MatchResult(distances=distances, topk_indices=topk, predicted_label=label, mode_count=count)


def _rank_batch(distances: np.ndarray, labels: np.ndarray, k: int) -> BatchMatch:
    n = distances.shape[1]
    key = distances.astype(np.int64) * n + np.arange(n, dtype=np.int64)
    if k < n:
        part = np.argpartition(key, k - 1, axis=1)[:, :k]
        part_keys = np.take_along_axis(key, part, axis=1)
        topk = np.take_along_axis(part, np.argsort(part_keys, axis=1), axis=1)
    else:
        topk = np.argsort(key, axis=1)
    topk_d = np.take_along_axis(distances, topk, axis=1)
    top_labels = labels[topk]
    if k == 1:
        predicted = top_labels[:, 0].copy()
        counts = np.ones(len(predicted), dtype=np.int64)
    else:
        votes = [_vote(row) for row in top_labels]
        predicted = np.array([v[0] for v in votes], dtype=np.int64)
        counts = np.array([v[1] for v in votes], dtype=np.int64)
    return BatchMatch(topk_indices=topk, topk_distances=topk_d, predicted_labels=predicted, mode_counts=counts)


def search_digital(db: SearchDatabase, query: BinaryVector, k: int = 1) -> MatchResult:
    """精确汉明距离检索"""
    _check_search(db, query.length, k)
    q = np.frombuffer(query.packed, dtype=np.uint8)
    distances = _POPCOUNT[np.bitwise_xor(db.codes, q)].sum(axis=1)
    return _rank(distances, db.labels, k)


def _as_query_bits(db: SearchDatabase, queries: np.ndarray) -> np.ndarray:
    queries = np.asarray(queries)
    if queries.ndim != 2:
        raise DimensionError("批量查询必须是 (n_queries, n_bits) 比特矩阵")
    return queries.astype(np.uint8)


def _chunks(n_queries: int, n_vectors: int):
    step = max(1, (1 << 22) // max(n_vectors, 1))
    for start in range(0, n_queries, step):
        yield slice(start, min(start + step, n_queries))


def search_digital_batch(db: SearchDatabase, queries: np.ndarray, k: int = 1) -> BatchMatch:
    """
    批量精确检索：HD = |q| + |d| − 2·q·d（float32 矩阵乘在码长 < 2^24 时精确）

    Args:
        db: 非空数据库
        queries: (M, n_bits) 的 0/1 矩阵
        k: top-k，1 ≤ k ≤ 库向量数

    Returns:
        BatchMatch，并列距离按库内下标从小到大排序
    """
    queries = _as_query_bits(db, queries)
    _check_search(db, queries.shape[1], k)
    d = db.bits().astype(np.float32)
    pop_d = d.sum(axis=1)
    parts = []
    for sl in _chunks(len(queries), db.n_vectors):
        q = queries[sl].astype(np.float32)
        hd = q.sum(axis=1)[:, None] + pop_d[None, :] - 2.0 * (q @ d.T)
        parts.append(_rank_batch(np.rint(hd).astype(np.int64), db.labels, k))
    return _concat(parts, k)


def _concat(parts: List[BatchMatch], k: int) -> BatchMatch:
    if not parts:
        empty = np.empty((0, k), dtype=np.int64)
        return BatchMatch(empty, empty.copy(), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    return BatchMatch(
        topk_indices=np.concatenate([p.topk_indices for p in parts]),
        topk_distances=np.concatenate([p.topk_distances for p in parts]),
        predicted_labels=np.concatenate([p.predicted_labels for p in parts]),
        mode_counts=np.concatenate([p.mode_counts for p in parts]),
    )


def materialize(
    db: SearchDatabase,
    tile_bits: int,
    model: VariabilityModel,
    seed: SeedLike = None,
    tile_cols: int = 8,
    v_read: float = 0.2,
    r_access: float = 0.0,
) -> SearchDatabase:
    """把码字分段编程到阵列块；最后一段在存储和查询两侧都补 0（补位恒为匹配，HD 贡献为 0）

    阻值按 float32 取整后保存，保证数据库文件读写无损。
    """
    if tile_bits < 1 or tile_cols < 1:
        raise ConfigurationError(f"阵列尺寸非法: {tile_bits}×{tile_cols}")
    if db.n_vectors == 0:
        raise StateError("数据库为空")
    model.check()
    i_match, i_mismatch = nominal_currents(model, v_read, r_access)
    tiling = TilingMap(
        n_bits=db.n_bits, n_vectors=db.n_vectors, tile_bits=tile_bits, tile_cols=tile_cols,
        v_read=v_read, r_access=r_access, i_match=i_match, i_mismatch=i_mismatch,
    )
    bits = pad_bits(db.bits(), tiling.padded_bits)
    rng = make_rng(seed)
    tiles = []
    for s in range(tiling.n_segments):
        lo, hi = tiling.segment_bits(s)
        tile = ArrayTile.from_words(bits[:, lo:hi].T, model, rng, v_read=v_read, r_access=r_access)
        tile.r_top = tile.r_top.astype(np.float32).astype(np.float64)
        tile.r_bottom = tile.r_bottom.astype(np.float32).astype(np.float64)
        tiles.append(tile)
    logger.info(
        "物化数据库: %d 个向量 × %d 位 -> %d 段 × %d 列组 (%d 个 %d×%d 阵列块)",
        db.n_vectors, db.n_bits, tiling.n_segments, tiling.n_col_groups,
        tiling.n_physical_tiles, tile_bits, tile_cols,
    )
    return SearchDatabase(codes=db.codes.copy(), labels=db.labels.copy(), n_bits=db.n_bits, tiles=tiles, tiling=tiling)


def pad_bits(bits: np.ndarray, padded: int) -> np.ndarray:
    extra = padded - bits.shape[-1]
    if extra == 0:
        return bits
    pad = [(0, 0)] * (bits.ndim - 1) + [(0, extra)]
    return np.pad(bits, pad)


def physical_tile(db: SearchDatabase, index: int) -> ArrayTile:
    """按映射表取出一个物理阵列块（最后一个列组可能不满 tile_cols 列）"""
    tiling = _require_tiles(db)
    if not 0 <= index < tiling.n_physical_tiles:
        raise IndexOutOfRangeError(f"阵列块编号 {index} 越界 [0, {tiling.n_physical_tiles})")
    segment, group = divmod(index, tiling.n_col_groups)
    lo = group * tiling.tile_cols
    hi = min(lo + tiling.tile_cols, db.n_vectors)
    virtual = db.tiles[segment]
    return ArrayTile(
        stored=virtual.stored[:, lo:hi], r_top=virtual.r_top[:, lo:hi], r_bottom=virtual.r_bottom[:, lo:hi],
        v_read=virtual.v_read, r_access=virtual.r_access,
        labels=[int(x) for x in db.labels[lo:hi]],
    )


def read_back_codes(db: SearchDatabase) -> np.ndarray:
    """从阵列块读回存储符号，返回与 db.codes 同形状的打包码字"""
    _require_tiles(db)
    bits = np.concatenate([tile.stored.T for tile in db.tiles], axis=1)[:, :db.n_bits]
    return np.packbits(bits.astype(np.uint8), axis=1)


def _require_tiles(db: SearchDatabase) -> TilingMap:
    if not db.is_materialized:
        raise StateError("数据库尚未物化到阵列块")
    return db.tiling


def default_sense_amp(db: SearchDatabase, v_dd: float = 1.8, v_offset: float = 0.0, transfer: str = "linear") -> SenseAmpModel:
    """按列长和名义失配电流选择增益的 SA"""
    tiling = _require_tiles(db)
    gain = select_gain(tiling.tile_bits, tiling.i_mismatch, v_dd)
    return SenseAmpModel(v_dd=v_dd, gain=gain, v_offset=v_offset, transfer=transfer)


def search_analog(db: SearchDatabase, query: BinaryVector, k: int = 1, sa: Optional[SenseAmpModel] = None) -> MatchResult:
    """模拟检索：每段一个读周期，SA 输出量化成该段 HD，再对各段整数求和"""
    tiling = _require_tiles(db)
    _check_search(db, query.length, k)
    sa = sa or default_sense_amp(db)
    q_bits = pad_bits(query.to_bits(), tiling.padded_bits)
    distances = np.zeros(db.n_vectors, dtype=np.int64)
    for s, tile in enumerate(db.tiles):
        lo, hi = tiling.segment_bits(s)
        segment_query = BinaryVector.from_bits(q_bits[lo:hi])
        currents = parallel_search_currents(tile, segment_query)
        v_out = sense(currents, sa)
        distances += quantize_hd(v_out, tiling.tile_bits, sa, tiling.i_match, tiling.i_mismatch)
    return _rank(distances, db.labels, k)


def search_analog_batch(db: SearchDatabase, queries: np.ndarray, k: int = 1, sa: Optional[SenseAmpModel] = None) -> BatchMatch:
    """批量模拟检索：I = V·(Σ G_bottom + q·(G_top − G_bottom))"""
    tiling = _require_tiles(db)
    queries = _as_query_bits(db, queries)
    _check_search(db, queries.shape[1], k)
    sa = sa or default_sense_amp(db)
    q_all = pad_bits(queries, tiling.padded_bits).astype(np.float64)

    conductance = []
    for tile in db.tiles:
        g_top = 1.0 / (tile.r_top + tile.r_access)
        g_bottom = 1.0 / (tile.r_bottom + tile.r_access)
        conductance.append((g_bottom.sum(axis=0), g_top - g_bottom))

    parts = []
    for sl in _chunks(len(queries), db.n_vectors):
        distances = np.zeros((sl.stop - sl.start, db.n_vectors), dtype=np.int64)
        for s, (g_base, g_delta) in enumerate(conductance):
            lo, hi = tiling.segment_bits(s)
            q = q_all[sl, lo:hi]
            currents = tiling.v_read * (g_base[None, :] + np.einsum("mb,bn->mn", q, g_delta))
            v_out = sense(currents, sa)
            distances += quantize_hd(v_out, tiling.tile_bits, sa, tiling.i_match, tiling.i_mismatch)
        parts.append(_rank_batch(distances, db.labels, k))
    return _concat(parts, k)
