import math

import pytest
from hypothesis import given, strategies as st

from solvsearch.errors import DuplicateName, InvalidHsp, ParseError, UnknownSolvent
from solvsearch.hsp import (
    DEFAULT_PROHIBITED,
    Formulation,
    HspVector,
    MaterialTarget,
    SolventLibrary,
    hsp_distance,
    load_library,
    mix_hsp,
    red,
)

from conftest import make_solvent


def lib_of(*hsps):
    return SolventLibrary([
        make_solvent(f"S{i}", *h) for i, h in enumerate(hsps)
    ])


class TestHspVector:
    def test_rejects_negative(self):
        with pytest.raises(InvalidHsp):
            HspVector(15.0, -0.1, 3.0)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidHsp):
            HspVector(float("nan"), 0.0, 3.0)


class TestMixHsp:
    def test_single_component_identity(self):
        lib = lib_of((15.8, 3.7, 6.3))
        f = Formulation(("S0",), (1.0,))
        assert mix_hsp(f, lib).as_tuple() == (15.8, 3.7, 6.3)

    def test_midpoint(self):
        lib = lib_of((16.0, 0.0, 0.0), (18.0, 8.0, 4.0))
        f = Formulation(("S0", "S1"), (0.5, 0.5))
        assert mix_hsp(f, lib).as_tuple() == (17.0, 4.0, 2.0)

    def test_ethyl_lactate_pgmea_60_40(self, shipped_library):
        f = Formulation(("Ethyl lactate", "PGMEA"), (0.6, 0.4))
        mix = mix_hsp(f, shipped_library)
        assert mix.delta_d == pytest.approx(15.84, abs=1e-12)
        assert mix.delta_p == pytest.approx(6.76, abs=1e-12)
        assert mix.delta_h == pytest.approx(10.42, abs=1e-12)

    def test_unknown_solvent(self, shipped_library):
        f = Formulation(("NoSuchThing", "PGMEA"), (0.5, 0.5))
        with pytest.raises(UnknownSolvent):
            mix_hsp(f, shipped_library)

    @given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=5),
           st.lists(st.tuples(st.floats(10, 25), st.floats(0, 25), st.floats(0, 25)),
                    min_size=5, max_size=5))
    def test_linearity_on_random_simplices(self, weights, hsps):
        total = sum(weights)
        fractions = tuple(w / total for w in weights)
        if abs(math.fsum(fractions) - 1.0) > 1e-9:
            return
        lib = lib_of(*hsps)
        names = tuple(f"S{i}" for i in range(len(fractions)))
        f = Formulation(names, fractions)
        mix = mix_hsp(f, lib)
        expected = [
            math.fsum(fr * getattr(lib.get(n).hsp, axis)
                      for fr, n in zip(fractions, names))
            for axis in ("delta_d", "delta_p", "delta_h")
        ]
        for got, want in zip(mix.as_tuple(), expected):
            assert got == pytest.approx(want, abs=1e-12)

    def test_permutation_invariance(self):
        lib = lib_of((16, 2, 3), (18, 7, 9), (20, 1, 0))
        a = mix_hsp(Formulation(("S0", "S1", "S2"), (0.2, 0.3, 0.5)), lib)
        b = mix_hsp(Formulation(("S2", "S0", "S1"), (0.5, 0.2, 0.3)), lib)
        assert a.as_tuple() == pytest.approx(b.as_tuple(), abs=1e-12)


class TestHspDistance:
    def test_zero_distance(self):
        a = HspVector(18.27, 7.11, 8.20)
        assert hsp_distance(a, a) == 0.0

    def test_dispersion_axis_weighting(self):
        assert hsp_distance(HspVector(16, 5, 7), HspVector(18, 5, 7)) == 4.0

    def test_butyl_acetate_vs_target(self, shipped_library, target):
        nba = shipped_library.get("n-Butyl acetate")
        assert hsp_distance(nba.hsp, target.hsp) == pytest.approx(6.296165, abs=1e-5)

    @given(st.tuples(st.floats(0, 30), st.floats(0, 30), st.floats(0, 30)),
           st.tuples(st.floats(0, 30), st.floats(0, 30), st.floats(0, 30)))
    def test_symmetry_and_nonnegativity(self, a, b):
        va, vb = HspVector(*a), HspVector(*b)
        assert hsp_distance(va, vb) == hsp_distance(vb, va)
        assert hsp_distance(va, vb) >= 0.0


class TestRed:
    def test_zero_at_center(self, target):
        assert red(target.hsp, target) == 0.0

    def test_one_at_radius(self):
        material = MaterialTarget("m", HspVector(10, 10, 10), 4.0)
        mix = HspVector(10, 10, 14.0)  # Ra exactly 4
        assert red(mix, material) == 1.0

    def test_butyl_acetate_red(self, shipped_library, target):
        nba = shipped_library.get("n-Butyl acetate")
        assert red(nba.hsp, target) == pytest.approx(1.0026, abs=2e-4)

    @given(st.floats(0.5, 20))
    def test_radius_scale_covariance(self, r0):
        mix = HspVector(12, 3, 4)
        m1 = MaterialTarget("m", HspVector(15, 5, 5), r0)
        m2 = MaterialTarget("m", HspVector(15, 5, 5), 2 * r0)
        assert red(mix, m1) == pytest.approx(2 * red(mix, m2), rel=1e-12)


class TestLoadLibrary:
    def test_small_file(self, library_csv):
        lib = load_library(library_csv)
        assert len(lib) == 3
        assert lib.get("Toluene").safety_class == "warn"

    def test_duplicate_name_reports_row(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text(
            "name,smiles,delta_d,delta_p,delta_h,molar_volume,boiling_point,"
            "flash_point,roles,safety_class\n"
            "Acetone,CC(C)=O,15.5,10.4,7.0,,,,,\n"
            "Acetone,CC(C)=O,15.5,10.4,7.0,,,,,\n"
        )
        with pytest.raises(DuplicateName) as exc:
            load_library(path)
        assert "row 3" in str(exc.value)

    def test_negative_hsp_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "name,smiles,delta_d,delta_p,delta_h,molar_volume,boiling_point,"
            "flash_point,roles,safety_class\n"
            "Weird,,15.5,-1.0,7.0,,,,,\n"
        )
        with pytest.raises(InvalidHsp):
            load_library(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "hdr.csv"
        path.write_text("name,delta_d\nAcetone,15.5\n")
        with pytest.raises(ParseError):
            load_library(path)

    def test_shipped_table(self, shipped_library):
        dmso = shipped_library.get("Dimethyl sulfoxide (DMSO)")
        assert dmso.hsp.as_tuple() == (18.4, 16.4, 10.2)
        assert len(shipped_library) >= 60

    def test_prohibited_list_is_authoritative(self, shipped_library):
        for name in DEFAULT_PROHIBITED:
            assert shipped_library.get(name).prohibited

    def test_unlisted_prohibited_row_demoted_to_warn(self, tmp_path):
        path = tmp_path / "demote.csv"
        path.write_text(
            "name,smiles,delta_d,delta_p,delta_h,molar_volume,boiling_point,"
            "flash_point,roles,safety_class\n"
            "Mystery,,15.5,1.0,7.0,,,,,prohibited\n"
        )
        lib = load_library(path, prohibited=[])
        assert lib.get("Mystery").safety_class == "warn"

    def test_restrict(self, shipped_library):
        sub = shipped_library.restrict(["PGMEA", "Ethyl lactate"])
        assert sub.names == ["PGMEA", "Ethyl lactate"]


class TestFormulation:
    def test_fraction_sum_enforced(self):
        with pytest.raises(ParseError):
            Formulation(("A", "B"), (0.6, 0.5))

    def test_positive_fractions_enforced(self):
        with pytest.raises(ParseError):
            Formulation(("A", "B"), (1.0, 0.0))

    def test_duplicate_component_rejected(self):
        with pytest.raises(ParseError):
            Formulation(("A", "A"), (0.5, 0.5))

    def test_singleton_allowed_pre_finalization(self):
        f = Formulation(("A",), (1.0,))
        assert not f.meets_sparsity()
        assert Formulation(("A", "B"), (0.5, 0.5)).meets_sparsity()
