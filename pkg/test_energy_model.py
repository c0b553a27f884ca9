"""功耗/能耗核算测试"""

import pytest

from imss_scripts.errors import ConfigurationError, DomainError
from imss_scripts.simulation.energy_model import (
    TechProfile,
    compare_profiles,
    energy_per_search,
    energy_per_xor,
    energy_report,
    load_tech_file,
    search_latency,
    storage_footprint_bytes,
    total_power,
)
from imss_scripts.settings import DEFAULT_PROFILE_PATH


@pytest.fixture(scope="module")
def tech():
    return load_tech_file(DEFAULT_PROFILE_PATH)


def test_total_power_130nm(tech):
    assert total_power(tech.profile("130nm")) == pytest.approx(145.2e-6, rel=1e-12)


def test_search_energy_per_node(tech):
    assert energy_per_search(tech.profile("130nm"), 128, 32) == pytest.approx(71.26e-12, rel=0.005)
    assert energy_per_search(tech.profile("28nm"), 128, 32) == pytest.approx(28.67e-12, rel=0.005)


def test_node_ratio(tech):
    ratio = compare_profiles(tech.profile("130nm"), tech.profile("28nm"))
    assert ratio == pytest.approx(2.49, abs=0.05)


def test_reference_row_against_28nm(tech):
    ratio = compare_profiles(tech.profile("hfox_40nm"), tech.profile("28nm"), 128, 32)
    assert ratio == pytest.approx(1.49, abs=0.01)
    assert ratio == pytest.approx(42.76 / 28.67, rel=0.005)


def test_formula_path_is_reported_separately(tech):
    profile = tech.profile("130nm")
    assert energy_per_xor(profile, use_override=False) == pytest.approx(90.75e-15, rel=1e-9)
    assert energy_per_xor(profile) == pytest.approx(17.4e-15, rel=0.01)
    report = energy_report(profile)
    assert report.e_xor_formula == pytest.approx(90.75e-15, rel=1e-9)
    assert report.note
    assert report.workload == {"bits_per_vector": 128, "n_vectors": 32}


def test_28nm_has_no_formula_discrepancy_note(tech):
    report = energy_report(tech.profile("28nm"))
    assert report.e_xor_formula == 0.0
    assert report.note == ""


def test_empty_workload_costs_nothing(tech):
    assert energy_per_search(tech.profile("130nm"), 128, 0) == 0.0


def test_negative_workload_is_rejected(tech):
    with pytest.raises(DomainError):
        energy_per_search(tech.profile("130nm"), -1, 32)


def test_ratio_against_zero_energy_profile(tech):
    with pytest.raises(DomainError):
        compare_profiles(tech.profile("130nm"), TechProfile(name="idle"))


def test_unknown_profile(tech):
    with pytest.raises(ConfigurationError):
        tech.profile("7nm")


def test_reference_rows(tech):
    assert energy_per_search(tech.profile("hfox_40nm"), 128, 32) == pytest.approx(42.76e-12)
    assert tech.reference_rows["fefet_45nm"].simulated
    with pytest.raises(DomainError):
        tech.profile("mram_140nm")


def test_latency_and_storage(tech):
    latency = search_latency(tech.profile("130nm"), 128, 32, tile_bits=4, tile_cols=8)
    assert latency["cycles"] == 128
    assert latency["latency"] == pytest.approx(128 * 20e-9)
    assert storage_footprint_bytes(32, 128) == {"devices": 8192, "bytes": 1024, "payload_bytes": 512}


def test_invalid_tech_file(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("profiles:\n  broken:\n    t_read: 0\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_tech_file(bad)
    negative = tmp_path / "negative.yaml"
    negative.write_text("profiles:\n  broken:\n    p_sa: -1.0\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_tech_file(negative)
    with pytest.raises(ConfigurationError):
        load_tech_file(tmp_path / "missing.yaml")


def test_custom_tech_file_names_profiles_by_key(tmp_path):
    path = tmp_path / "tech.yaml"
    path.write_text(
        "profiles:\n  demo:\n    t_read: 1.0e-8\n    p_read: 3.2e-6\n    array_size: 16\n",
        encoding="utf-8",
    )
    tech = load_tech_file(path)
    profile = tech.profile("demo")
    assert profile.name == "demo"
    assert energy_per_xor(profile) == pytest.approx(3.2e-6 * 1e-8 / 16)
