import math

import pytest
from hypothesis import given, strategies as st

from noc3d.common import InputError
from noc3d.reliability import (BOLTZMANN_EV, Black, Hrd4, TableDriven, acceleration, defect_map,
                               fit_activation_energy, mttf_map, normalized_rate, read_reliability_csv,
                               write_defect_csv, write_reliability_csv)
from noc3d.thermal import RegionTemp

# normalised copper fault rate vs temperature, reference 343.15 K
RATE_TABLE = [
    (303.15, 0.011537), (313.15, 0.039174), (323.15, 0.123317), (333.15, 0.362371),
    (343.15, 1.0), (353.15, 2.605435), (363.15, 6.439561), (373.15, 13.94691),
]
T_REF = 343.15


def test_black_direct_formula():
    assert acceleration(Black(1.0), 343.15) == pytest.approx(math.exp(-1.0 / (8.617333e-5 * 343.15)), rel=1e-6)


def test_black_ratio_353():
    r = acceleration(Black(1.0), 353.15) / acceleration(Black(1.0), 343.15)
    assert r == pytest.approx(2.605435, rel=1e-5)


def test_hrd4_flat_below_threshold():
    m = Hrd4()
    assert acceleration(m, 320.0) == acceleration(m, 343.15)
    assert acceleration(m, 353.15) > acceleration(m, 343.15)
    # continuous at the threshold
    assert acceleration(m, 343.15 + 1e-9) == pytest.approx(acceleration(m, 343.15), rel=1e-9)


@pytest.mark.parametrize("t,expected", RATE_TABLE[:-1])
def test_normalized_rate_black(t, expected):
    assert normalized_rate(Black(1.0), t, T_REF) == pytest.approx(expected, rel=1e-3)


@pytest.mark.xfail(strict=True, reason="tabulated 373.15 K rate equals the Black value at 372.15 K")
def test_normalized_rate_black_373():
    assert normalized_rate(Black(1.0), 373.15, T_REF) == pytest.approx(13.94691, rel=1e-3)


def test_rate_table_last_row_offset():
    assert normalized_rate(Black(1.0), 373.15, T_REF) == pytest.approx(15.1625, rel=1e-4)
    assert normalized_rate(Black(1.0), 372.15, T_REF) == pytest.approx(13.94691, rel=1e-5)


@pytest.mark.parametrize("model", [Black(0.7), Hrd4(), TableDriven("t", ((300, 0.1), (400, 10)))])
def test_normalized_rate_identity(model):
    assert normalized_rate(model, 331.0, 331.0) == pytest.approx(1.0, rel=1e-12)


def test_fit_rate_table():
    assert fit_activation_energy(RATE_TABLE, T_REF) == pytest.approx(1.0, abs=1e-3)
    # least squares is pulled off by the inconsistent last row
    assert fit_activation_energy(RATE_TABLE, T_REF, loss="lsq") == pytest.approx(0.9952, abs=1e-4)
    assert fit_activation_energy(RATE_TABLE[:-1], T_REF, loss="lsq") == pytest.approx(1.0, abs=1e-3)


def test_fit_exact_two_points():
    pairs = [(t, normalized_rate(Black(0.7), t, 330.0)) for t in (310.0, 360.0)]
    assert fit_activation_energy(pairs, 330.0) == pytest.approx(0.7, abs=1e-9)
    assert fit_activation_energy(pairs, 330.0, loss="lsq") == pytest.approx(0.7, abs=1e-9)


def test_fit_degenerate():
    with pytest.raises(InputError):
        fit_activation_energy([(340.0, 2.0), (340.0, 2.0)], 330.0)
    with pytest.raises(InputError):
        fit_activation_energy([(340.0, 2.0)], 330.0)


@given(st.floats(0.1, 2.0), st.lists(st.floats(280, 420), min_size=2, max_size=8, unique=True))
def test_fit_recovers_ea(ea, temps):
    t_ref = 343.15
    temps = [t for t in temps if abs(t - t_ref) > 0.5]
    if len(temps) < 2:
        return
    pairs = [(t, normalized_rate(Black(ea), t, t_ref)) for t in temps]
    assert fit_activation_energy(pairs, t_ref) == pytest.approx(ea, rel=1e-9)
    assert fit_activation_energy(pairs, t_ref, loss="lsq") == pytest.approx(ea, rel=1e-9)


def test_table_driven_interpolates_log_linear():
    m = TableDriven("t", ((300.0, 1.0), (310.0, 100.0)))
    assert m(305.0) == pytest.approx(10.0)
    assert m(320.0) == pytest.approx(1e4)
    with pytest.raises(InputError):
        TableDriven("bad", ((300.0, 1.0),))


def _temps(values, kind="logic"):
    return [RegionTemp((i, 0, 0), 0, kind, t, t) for i, t in enumerate(values)]


def test_mttf_all_at_reference():
    rel = mttf_map(_temps([T_REF] * 4), {"logic": Black(1.0)}, T_REF)
    assert all(e.normalized_mttf == pytest.approx(1.0) for e in rel.entries)


def test_mttf_ten_kelvin_hotter():
    rel = mttf_map(_temps([T_REF, T_REF + 10]), {"logic": Black(1.0)}, T_REF)
    assert rel.entries[1].normalized_mttf == pytest.approx(1 / 2.605435, rel=1e-5)
    assert rel.entries[1].normalized_mttf == pytest.approx(0.3838, abs=1e-4)


def test_mttf_layer_ratio_in_band():
    temps = {((0, 0, 0), 0): 348.0, ((0, 0, 1), 2): 338.0}
    rel = mttf_map(temps, {"logic": Black(1.0)}, T_REF)
    lm = rel.layer_mttf()
    ratio = lm[1] / lm[0]
    assert 2.0 <= ratio <= 3.0 and ratio == pytest.approx(2.6, abs=0.1)


def test_mttf_material_mapping():
    temps = _temps([330.0]) + _temps([330.0], kind="tsv")
    rel = mttf_map(temps, {"logic": Black(0.7), "copper": Black(1.0)}, 320.0)
    by_mat = {e.material: e for e in rel.entries}
    assert by_mat["copper"].normalized_rate > by_mat["logic"].normalized_rate > 1
    with pytest.raises(InputError):
        mttf_map(temps, {"logic": Black(0.7)}, 320.0)


def test_defect_map_thresholds():
    rel = mttf_map(_temps([330.0] * 5), {"logic": Black(1.0)}, 330.0)
    assert len(defect_map(rel, 1.0)) == 5
    assert defect_map(rel, 1.01) == []


def test_defect_map_rate_table_rows():
    rel = mttf_map(_temps([t for t, _ in RATE_TABLE]), {"logic": Black(1.0)}, T_REF)
    hits = defect_map(rel, 1.0)
    assert sorted(e.temperature for e in hits) == [343.15, 353.15, 363.15, 373.15]
    rates = [e.normalized_rate for e in hits]
    assert rates == sorted(rates, reverse=True)


def test_reliability_csv_round_trip(tmp_path):
    rel = mttf_map(_temps([320.0, 340.0, 360.0]), {"logic": Black(0.7)}, 323.15)
    p = tmp_path / "rel.csv"
    write_reliability_csv(rel, p)
    back = read_reliability_csv(p)
    assert [e.router for e in back] == [e.router for e in rel.entries]
    for a, b in zip(back, rel.entries):
        assert a.normalized_mttf == pytest.approx(b.normalized_mttf, rel=1e-8)
    write_defect_csv(defect_map(rel, 1.0), tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0].startswith("rank,") and lines[1].startswith("1,2,0,0")


def test_boltzmann_constant():
    assert BOLTZMANN_EV == pytest.approx(8.617333e-5, rel=1e-6)
