"""2T-2R XOR 位单元与阵列块
数据向量以差分形式沿列存储：'-1' 编码为 上=LRS/下=HRS，'+1' 编码为 上=HRS/下=LRS；
查询位由 WL 译码器转成差分字线对：'-1' -> [0,1]，'+1' -> [1,0]。
同一列所有 XOR 单元的电流按 KCL 在位线上求和，得到与汉明距离成正比的模拟量。

约定：比特 1 <-> PLUS_ONE，比特 0 <-> MINUS_ONE。
不建模潜行电流、导线电阻和晶体管漏电；未选中的器件不贡献电流。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from imss_scripts.devices.device_model import (
    DeviceCell,
    ResistanceState,
    SeedLike,
    VariabilityModel,
    make_rng,
    read_current,
    sample_resistances,
)
from imss_scripts.errors import ConfigurationError, DimensionError, IndexOutOfRangeError

logger = logging.getLogger(__name__)

# 实验判据：匹配电流 < 1 µA，失配电流 ≥ 6 µA，感测裕度 ≥ 5 µA
MATCH_CURRENT_LIMIT = 1e-6
MISMATCH_CURRENT_FLOOR = 6e-6
SENSE_MARGIN_FLOOR = 5e-6


class StoredBit(int, Enum):
    MINUS_ONE = -1
    PLUS_ONE = 1

    @classmethod
    def from_bit(cls, bit: int) -> "StoredBit":
        return cls.PLUS_ONE if int(bit) else cls.MINUS_ONE

    @property
    def bit(self) -> int:
        return 1 if self is StoredBit.PLUS_ONE else 0

    @property
    def device_states(self) -> Tuple[ResistanceState, ResistanceState]:
        """(上器件, 下器件) 阻态"""
        if self is StoredBit.MINUS_ONE:
            return ResistanceState.LRS, ResistanceState.HRS
        return ResistanceState.HRS, ResistanceState.LRS


class QueryBit(int, Enum):
    MINUS_ONE = -1
    PLUS_ONE = 1

    @classmethod
    def from_bit(cls, bit: int) -> "QueryBit":
        return cls.PLUS_ONE if int(bit) else cls.MINUS_ONE

    @property
    def bit(self) -> int:
        return 1 if self is QueryBit.PLUS_ONE else 0

    @property
    def wl_pair(self) -> Tuple[int, int]:
        """(上字线, 下字线) 电平"""
        return (1, 0) if self is QueryBit.PLUS_ONE else (0, 1)


def padding_mask(length: int) -> int:
    """末字节中补齐位的掩码（MSB 在前打包）"""
    return (1 << (-length % 8)) - 1


@dataclass(frozen=True)
class BinaryVector:
    """按位打包的码字（存储数据或查询）"""
    packed: bytes
    length: int

    def __post_init__(self):
        if self.length <= 0:
            raise DimensionError(f"码字长度必须为正: {self.length}")
        if len(self.packed) != (self.length + 7) // 8:
            raise DimensionError(f"打包字节数 {len(self.packed)} 与长度 {self.length} 不符")
        if self.packed[-1] & padding_mask(self.length):
            raise DimensionError(f"末字节的补齐位必须为 0: {self.packed[-1]:#04x}")

    @classmethod
    def from_bits(cls, bits: Union[Sequence[int], np.ndarray]) -> "BinaryVector":
        arr = np.asarray(bits)
        if arr.ndim != 1:
            raise DimensionError(f"码字必须是一维比特序列，实际维度 {arr.ndim}")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise DimensionError("码字只能包含 0/1")
        return cls(packed=np.packbits(arr.astype(np.uint8)).tobytes(), length=int(arr.size))

    @classmethod
    def from_string(cls, text: str) -> "BinaryVector":
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise DimensionError(f"非法比特串: {text!r}")
        return cls.from_bits([int(ch) for ch in text])

    def to_bits(self) -> np.ndarray:
        return np.unpackbits(np.frombuffer(self.packed, dtype=np.uint8), count=self.length)

    def to_string(self) -> str:
        return "".join(str(int(b)) for b in self.to_bits())

    def complement(self) -> "BinaryVector":
        return BinaryVector.from_bits(1 - self.to_bits())

    def popcount(self) -> int:
        return int(self.to_bits().sum())

    def __len__(self) -> int:
        return self.length


@dataclass(frozen=True)
class XorBitcell:
    """2T-2R XOR 位单元"""
    top: DeviceCell
    bottom: DeviceCell
    stored: StoredBit

    def __post_init__(self):
        if (self.top.state, self.bottom.state) != self.stored.device_states:
            raise ConfigurationError(
                f"器件阻态 ({self.top.state.value}, {self.bottom.state.value}) 与存储符号 {self.stored.name} 不一致"
            )


@dataclass
class ArrayTile:
    """n_bits × n_cols 的 XOR 位单元阵列块（物理上 2·n_bits 行）

    stored[r, c] 为 True 表示该位存 PLUS_ONE；r_top / r_bottom 为两只器件的采样阻值。
    搜索期间视为只读，写操作返回新的阵列块。
    """
    stored: np.ndarray
    r_top: np.ndarray
    r_bottom: np.ndarray
    v_read: float = 0.2
    r_access: float = 0.0
    labels: Optional[List[Optional[int]]] = None

    def __post_init__(self):
        self.stored = np.asarray(self.stored, dtype=bool)
        self.r_top = np.asarray(self.r_top, dtype=np.float64)
        self.r_bottom = np.asarray(self.r_bottom, dtype=np.float64)
        if self.stored.ndim != 2:
            raise DimensionError("阵列块必须是二维")
        if self.r_top.shape != self.stored.shape or self.r_bottom.shape != self.stored.shape:
            raise DimensionError("阻值矩阵与存储矩阵形状不一致")
        if self.v_read < 0 or self.r_access < 0:
            raise ConfigurationError("读电压和访问电阻不能为负")
        if self.labels is not None and len(self.labels) != self.n_cols:
            raise DimensionError(f"列标签数 {len(self.labels)} 与列数 {self.n_cols} 不符")

    @property
    def n_bits(self) -> int:
        return int(self.stored.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.stored.shape[1])

    @classmethod
    def create(
        cls,
        n_bits: int = 4,
        n_cols: int = 8,
        model: Optional[VariabilityModel] = None,
        v_read: float = 0.2,
        r_access: float = 0.0,
    ) -> "ArrayTile":
        """新建阵列块：所有位存 MINUS_ONE，阻值取名义均值"""
        if n_bits < 1 or n_cols < 1:
            raise ConfigurationError(f"阵列尺寸非法: {n_bits}×{n_cols}")
        model = model or VariabilityModel()
        shape = (n_bits, n_cols)
        return cls(
            stored=np.zeros(shape, dtype=bool),
            r_top=np.full(shape, model.lrs_mean),
            r_bottom=np.full(shape, model.hrs_mean),
            v_read=v_read,
            r_access=r_access,
        )

    @classmethod
    def from_words(
        cls,
        words: np.ndarray,
        model: VariabilityModel,
        rng: SeedLike = None,
        v_read: float = 0.2,
        r_access: float = 0.0,
        labels: Optional[List[Optional[int]]] = None,
    ) -> "ArrayTile":
        """按列批量编程：words 形状 (n_bits, n_cols)，每列一个码字"""
        words = np.asarray(words)
        if words.ndim != 2:
            raise DimensionError("words 必须是 (n_bits, n_cols) 矩阵")
        rng = make_rng(rng)
        stored = words.astype(bool)
        r_top, r_bottom = _program_devices(stored, model, rng)
        return cls(stored=stored, r_top=r_top, r_bottom=r_bottom, v_read=v_read, r_access=r_access, labels=labels)

    def bitcell(self, row: int, col: int) -> XorBitcell:
        self._check_col(col)
        if not 0 <= row < self.n_bits:
            raise IndexOutOfRangeError(f"行号 {row} 越界 [0, {self.n_bits})")
        stored = StoredBit.from_bit(int(self.stored[row, col]))
        top_state, bottom_state = stored.device_states
        return XorBitcell(
            top=DeviceCell(top_state, float(self.r_top[row, col])),
            bottom=DeviceCell(bottom_state, float(self.r_bottom[row, col])),
            stored=stored,
        )

    def read_word(self, col: int) -> BinaryVector:
        """读回某列存储的符号"""
        self._check_col(col)
        return BinaryVector.from_bits(self.stored[:, col].astype(np.uint8))

    def sense_word(self, col: int) -> BinaryVector:
        """差分读出：上器件阻值大于下器件即为 PLUS_ONE"""
        self._check_col(col)
        return BinaryVector.from_bits((self.r_top[:, col] > self.r_bottom[:, col]).astype(np.uint8))

    def device_states(self) -> Tuple[np.ndarray, np.ndarray]:
        """(上器件是否为LRS, 下器件是否为LRS) 布尔矩阵"""
        return ~self.stored, self.stored.copy()

    def _check_col(self, col: int) -> None:
        if not 0 <= col < self.n_cols:
            raise IndexOutOfRangeError(f"列号 {col} 越界 [0, {self.n_cols})")


def _program_devices(stored: np.ndarray, model: VariabilityModel, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    # 每个 XOR 单元恰好一只 LRS、一只 HRS
    n = stored.size
    lrs = sample_resistances(ResistanceState.LRS, model, n, rng).reshape(stored.shape)
    hrs = sample_resistances(ResistanceState.HRS, model, n, rng).reshape(stored.shape)
    r_top = np.where(stored, hrs, lrs)
    r_bottom = np.where(stored, lrs, hrs)
    return r_top, r_bottom


def write_column(tile: ArrayTile, col: int, word: BinaryVector, model: VariabilityModel, seed: SeedLike) -> ArrayTile:
    """将码字差分编程到指定列，其他列保持不变"""
    if word.length != tile.n_bits:
        raise DimensionError(f"码字长度 {word.length} 与阵列位数 {tile.n_bits} 不符")
    tile._check_col(col)
    bits = word.to_bits().astype(bool)[:, None]
    r_top_col, r_bottom_col = _program_devices(bits, model, make_rng(seed))

    stored = tile.stored.copy()
    r_top = tile.r_top.copy()
    r_bottom = tile.r_bottom.copy()
    stored[:, col] = bits[:, 0]
    r_top[:, col] = r_top_col[:, 0]
    r_bottom[:, col] = r_bottom_col[:, 0]
    return replace(tile, stored=stored, r_top=r_top, r_bottom=r_bottom,
                   labels=list(tile.labels) if tile.labels is not None else None)


def xor_bitcell_current(cell: XorBitcell, q: QueryBit, v_read: float, r_access: float = 0.0) -> float:
    """被置位字线选中的器件上的电流：匹配选中 HRS（小电流），失配选中 LRS（大电流）"""
    top_wl, _ = q.wl_pair
    selected = cell.top if top_wl else cell.bottom
    return read_current(selected, v_read, r_access)


def _query_bits(tile: ArrayTile, query: BinaryVector) -> np.ndarray:
    if query.length != tile.n_bits:
        raise DimensionError(f"查询长度 {query.length} 与阵列位数 {tile.n_bits} 不符")
    return query.to_bits().astype(bool)


def bitcell_currents(tile: ArrayTile, query: BinaryVector) -> np.ndarray:
    """每个位单元在差分查询下的电流矩阵 (n_bits, n_cols)"""
    q = _query_bits(tile, query)
    selected = np.where(q[:, None], tile.r_top, tile.r_bottom)
    return tile.v_read / (selected + tile.r_access)


def column_current(tile: ArrayTile, col: int, query: BinaryVector) -> float:
    """某列位线电流：该列所有 XOR 单元电流的 KCL 求和"""
    tile._check_col(col)
    currents = bitcell_currents(tile, query)
    return float(currents[:, col:col + 1].sum(axis=0)[0])


def parallel_search_currents(tile: ArrayTile, query: BinaryVector) -> np.ndarray:
    """一次读周期：查询广播到所有列，返回每列位线电流"""
    return bitcell_currents(tile, query).sum(axis=0)


def truth_table(model: Optional[VariabilityModel] = None, v_read: float = 0.2, r_access: float = 0.0) -> List[Dict]:
    """名义参数下 XOR 位单元的四种输入组合"""
    model = model or VariabilityModel()
    rows = []
    for stored in (StoredBit.MINUS_ONE, StoredBit.PLUS_ONE):
        top_state, bottom_state = stored.device_states
        cell = XorBitcell(
            top=DeviceCell(top_state, model.lrs_mean if top_state == ResistanceState.LRS else model.hrs_mean),
            bottom=DeviceCell(bottom_state, model.lrs_mean if bottom_state == ResistanceState.LRS else model.hrs_mean),
            stored=stored,
        )
        for q in (QueryBit.MINUS_ONE, QueryBit.PLUS_ONE):
            current = xor_bitcell_current(cell, q, v_read, r_access)
            match = q.value == stored.value
            top_wl, _ = q.wl_pair
            selected = cell.top if top_wl else cell.bottom
            passed = current < MATCH_CURRENT_LIMIT if match else current >= MISMATCH_CURRENT_FLOOR
            rows.append({
                "stored": stored.value,
                "query": q.value,
                "wl_pair": list(q.wl_pair),
                "selected_device": "top" if top_wl else "bottom",
                "selected_state": selected.state.value,
                "xor": 0 if match else 1,
                "current": current,
                "passed": bool(passed),
            })
    return rows


def sampled_truth_table(
    model: VariabilityModel,
    n_cells: int = 32,
    seed: SeedLike = None,
    v_read: float = 0.2,
    r_access: float = 0.0,
) -> Dict:
    """在 n_cells 个采样位单元上重复真值表实验，统计各组合电流分布

    位单元在两种存储值之间平分（奇数时存 −1 的多一个），每个位单元施加两种查询。

    Args:
        model: 器件涨落模型
        n_cells: 位单元总数，至少 2
        seed: 随机种子或 Generator

    Returns:
        combinations 为四种 (存储, 查询) 组合的电流统计，另含匹配/失配均值、最小裕度和 passed
    """
    if n_cells < 2:
        raise ConfigurationError(f"位单元数至少为 2: {n_cells}")
    counts = {StoredBit.MINUS_ONE: (n_cells + 1) // 2, StoredBit.PLUS_ONE: n_cells // 2}
    rng = make_rng(seed)
    combos = []
    separations = []
    match_all, mismatch_all = [], []
    for stored in (StoredBit.MINUS_ONE, StoredBit.PLUS_ONE):
        n_stored = counts[stored]
        words = np.full((n_stored, 1), stored.bit, dtype=np.uint8)
        tile = ArrayTile.from_words(words, model, rng, v_read=v_read, r_access=r_access)
        per_query = {}
        for q in (QueryBit.MINUS_ONE, QueryBit.PLUS_ONE):
            query = BinaryVector.from_bits(np.full(n_stored, q.bit, dtype=np.uint8))
            currents = bitcell_currents(tile, query)[:, 0]
            per_query[q] = currents
            match = q.value == stored.value
            (match_all if match else mismatch_all).append(currents)
            combos.append({
                "stored": stored.value,
                "query": q.value,
                "xor": 0 if match else 1,
                "n_cells": n_stored,
                "mean": float(currents.mean()),
                "std": float(currents.std()),
                "min": float(currents.min()),
                "max": float(currents.max()),
            })
        matched = per_query[QueryBit(stored.value)]
        mismatched = per_query[QueryBit(-stored.value)]
        separations.append(mismatched - matched)

    separation = np.concatenate(separations)
    match_all = np.concatenate(match_all)
    mismatch_all = np.concatenate(mismatch_all)
    summary = {
        "n_cells": n_cells,
        "combinations": combos,
        "mean_match": float(match_all.mean()),
        "mean_mismatch": float(mismatch_all.mean()),
        "max_match": float(match_all.max()),
        "min_mismatch": float(mismatch_all.min()),
        "min_separation": float(separation.min()),
        "mean_separation": float(separation.mean()),
    }
    summary["passed"] = bool(
        summary["mean_match"] < MATCH_CURRENT_LIMIT
        and summary["mean_mismatch"] >= MISMATCH_CURRENT_FLOOR
        and summary["min_separation"] >= SENSE_MARGIN_FLOOR
    )
    logger.info(
        "采样真值表: 匹配均值 %.3g A, 失配均值 %.3g A, 最小裕度 %.3g A",
        summary["mean_match"], summary["mean_mismatch"], summary["min_separation"],
    )
    return summary
