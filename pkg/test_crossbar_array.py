"""2T-2R XOR 位单元与阵列块测试"""

import numpy as np
import pytest

from imss_scripts.devices.crossbar_array import (
    MATCH_CURRENT_LIMIT,
    MISMATCH_CURRENT_FLOOR,
    ArrayTile,
    BinaryVector,
    QueryBit,
    StoredBit,
    XorBitcell,
    bitcell_currents,
    column_current,
    parallel_search_currents,
    sampled_truth_table,
    truth_table,
    write_column,
    xor_bitcell_current,
)
from imss_scripts.devices.device_model import DeviceCell, ResistanceState
from imss_scripts.errors import ConfigurationError, DimensionError, IndexOutOfRangeError

# 8 个不同的 4 位码字，模拟 4×8 阵列的实验场景
WORDS = ["0000", "0001", "0011", "0100", "0111", "1010", "1100", "1111"]


def _tile(words, model, seed=0):
    matrix = np.array([[int(ch) for ch in w] for w in words], dtype=np.uint8).T
    return ArrayTile.from_words(matrix, model, seed)


def test_nominal_truth_table_passes():
    rows = truth_table()
    assert len(rows) == 4
    for row in rows:
        if row["xor"] == 0:
            assert row["current"] < MATCH_CURRENT_LIMIT
            assert row["selected_state"] == "HRS"
        else:
            assert row["current"] >= MISMATCH_CURRENT_FLOOR
            assert row["selected_state"] == "LRS"
        assert row["passed"]


def test_truth_table_mismatch_current_is_20ua():
    rows = {(r["stored"], r["query"]): r for r in truth_table()}
    assert rows[(-1, 1)]["current"] == pytest.approx(20e-6)
    assert rows[(1, -1)]["current"] == pytest.approx(20e-6)
    assert rows[(-1, -1)]["wl_pair"] == [0, 1]
    assert rows[(1, 1)]["wl_pair"] == [1, 0]


def test_zero_read_voltage_fails_mismatch_rows():
    rows = truth_table(v_read=0.0)
    assert all(r["current"] == 0.0 for r in rows)
    assert [r["passed"] for r in rows if r["xor"] == 1] == [False, False]


def test_sampled_truth_table_meets_thresholds(measured_model):
    summary = sampled_truth_table(measured_model, n_cells=32, seed=2022)
    assert summary["mean_match"] < 1e-6
    assert summary["mean_mismatch"] >= 6e-6
    assert summary["min_separation"] >= 5e-6
    assert summary["passed"]
    assert len(summary["combinations"]) == 4


def test_bit_encodings():
    assert StoredBit.MINUS_ONE.device_states == (ResistanceState.LRS, ResistanceState.HRS)
    assert StoredBit.PLUS_ONE.device_states == (ResistanceState.HRS, ResistanceState.LRS)
    assert QueryBit.from_bit(1) is QueryBit.PLUS_ONE
    assert QueryBit.MINUS_ONE.wl_pair == (0, 1)


def test_binary_vector_text_and_complement():
    v = BinaryVector.from_string("0100")
    assert v.to_string() == "0100"
    assert len(v) == 4
    assert v.popcount() == 1
    assert v.complement().to_string() == "1011"
    with pytest.raises(DimensionError):
        BinaryVector.from_string("01a0")
    with pytest.raises(DimensionError):
        BinaryVector.from_bits([0, 2, 1])


def test_bitcell_rejects_inconsistent_states():
    with pytest.raises(ConfigurationError):
        XorBitcell(
            top=DeviceCell(ResistanceState.LRS, 10e3),
            bottom=DeviceCell(ResistanceState.LRS, 10e3),
            stored=StoredBit.MINUS_ONE,
        )


def test_new_tile_stores_minus_one():
    tile = ArrayTile.create()
    assert (tile.n_bits, tile.n_cols) == (4, 8)
    assert tile.read_word(3).to_string() == "0000"
    assert tile.bitcell(0, 0).stored is StoredBit.MINUS_ONE


def test_write_column_returns_new_tile(measured_model):
    tile = ArrayTile.create()
    written = write_column(tile, 2, BinaryVector.from_string("1011"), measured_model, seed=9)
    assert written.read_word(2).to_string() == "1011"
    assert written.sense_word(2).to_string() == "1011"
    assert tile.read_word(2).to_string() == "0000"
    for col in (0, 1, 3, 7):
        assert np.array_equal(written.r_top[:, col], tile.r_top[:, col])
    top_lrs, bottom_lrs = written.device_states()
    # 每个位单元恰好一只 LRS
    assert np.all(top_lrs ^ bottom_lrs)


def test_write_column_validates_inputs(ideal_model):
    tile = ArrayTile.create()
    with pytest.raises(DimensionError):
        write_column(tile, 0, BinaryVector.from_string("101"), ideal_model, 0)
    with pytest.raises(IndexOutOfRangeError):
        write_column(tile, 8, BinaryVector.from_string("1010"), ideal_model, 0)


def test_column_currents_follow_hamming_distance(ideal_model):
    tile = _tile(WORDS, ideal_model)
    query = BinaryVector.from_string("0100")
    currents = parallel_search_currents(tile, query)
    i_match, i_mismatch = 0.2 / 330e3, 0.2 / 10e3
    for col, word in enumerate(WORDS):
        hd = sum(a != b for a, b in zip(word, "0100"))
        assert currents[col] == pytest.approx(hd * i_mismatch + (4 - hd) * i_match)
        assert column_current(tile, col, query) == pytest.approx(currents[col])
    assert int(np.argmin(currents)) == WORDS.index("0100")


def test_bitcell_current_matches_array_path(measured_model):
    tile = _tile(WORDS, measured_model, seed=4)
    query = BinaryVector.from_string("1100")
    matrix = bitcell_currents(tile, query)
    for row, q in enumerate("1100"):
        for col in range(tile.n_cols):
            cell = tile.bitcell(row, col)
            expected = xor_bitcell_current(cell, QueryBit.from_bit(int(q)), tile.v_read, tile.r_access)
            assert matrix[row, col] == pytest.approx(expected)


def test_mismatch_always_exceeds_match_within_bounds(measured_model):
    tile = _tile(WORDS * 64, measured_model, seed=5)
    ones = BinaryVector.from_string("1111")
    currents = bitcell_currents(tile, ones)
    stored = tile.stored
    assert currents[~stored].min() > currents[stored].max()


def test_query_length_must_match(ideal_model):
    tile = _tile(WORDS, ideal_model)
    with pytest.raises(DimensionError):
        parallel_search_currents(tile, BinaryVector.from_string("01"))


def test_binary_vector_rejects_dirty_padding():
    with pytest.raises(DimensionError):
        BinaryVector(b"\xff", 4)
    assert BinaryVector(b"\xf0", 4).to_string() == "1111"
    assert BinaryVector(b"\xff", 8).popcount() == 8


def test_sampled_cells_split_between_stored_values(measured_model):
    summary = sampled_truth_table(measured_model, n_cells=33, seed=1)
    per_stored = {c["stored"]: c["n_cells"] for c in summary["combinations"]}
    assert per_stored == {-1: 17, 1: 16}
    assert summary["n_cells"] == 33
    with pytest.raises(ConfigurationError):
        sampled_truth_table(measured_model, n_cells=1)
