import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import helpers
from xtalmet import (
    Crystal,
    Lattice,
    ParseError,
    Site,
    apply_isometry,
    make_supercell,
    niggli_reduce,
    parse_cif_lite,
    parse_jsonl,
    perturb_sites,
    primitive_reduce,
    serialize_jsonl,
)
from xtalmet.amd import amd_vector

PO_LINE = json.dumps(
    {
        "id": "po-sc",
        "lattice": [[3.35, 0, 0], [0, 3.35, 0], [0, 0, 3.35]],
        "species": ["Po"],
        "frac_coords": [[0, 0, 0]],
    }
)

WZ_ZNO_CIF = """
data_ZnO
_cell_length_a 3.24
_cell_length_b 3.24
_cell_length_c 5.22
_cell_angle_alpha 90
_cell_angle_beta 90
_cell_angle_gamma 120
loop_
_atom_site_label
_atom_site_type_symbol
_atom_site_fract_x
_atom_site_fract_y
_atom_site_fract_z
Zn1 Zn 0.33333333 0.66666667 0.0
Zn2 Zn 0.66666667 0.33333333 0.5
O1 O 0.33333333 0.66666667 0.38
O2 O 0.66666667 0.33333333 0.88
"""


class TestLatticeAndSites:
    def test_degenerate_lattice_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            Lattice(np.zeros((3, 3)))
        with pytest.raises(ValueError, match="degenerate"):
            Lattice(-np.eye(3))  # left-handed

    def test_unknown_element_rejected(self):
        with pytest.raises(ValueError, match="unknown element"):
            Site("Xx", np.zeros(3))

    def test_frac_wrapped_to_unit_cell(self):
        site = Site("Fe", np.array([1.25, -0.25, 1.0]))
        assert np.allclose(site.frac, [0.25, 0.75, 0.0])

    def test_duplicate_site_guard(self):
        lat = Lattice(np.eye(3) * 4)
        with pytest.raises(ValueError, match="duplicate"):
            Crystal("dup", lat, (Site("Fe", np.zeros(3)), Site("Fe", np.array([1e-6, 0, 0]))))
        # same position, different element: allowed by the guard
        Crystal("ok", lat, (Site("Fe", np.zeros(3)), Site("Co", np.array([0.5, 0.5, 0.5]))))

    def test_lattice_parameters_roundtrip(self):
        lat = Lattice.from_parameters(3.24, 3.24, 5.22, 90, 90, 120)
        assert np.allclose(lat.lengths, [3.24, 3.24, 5.22])
        assert np.allclose(lat.angles, [90, 90, 120])


class TestParseJsonl:
    def test_minimal_po_record(self):
        samples = parse_jsonl(PO_LINE)
        assert len(samples) == 1
        assert samples[0].id == "po-sc"
        assert samples[0].species == ("Po",)

    def test_empty_stream(self):
        with pytest.raises(ParseError, match="empty sample set"):
            parse_jsonl("")

    def test_unknown_element_with_line_number(self):
        bad = PO_LINE.replace('"Po"', '"Xx"')
        with pytest.raises(ParseError, match="unknown element at line 1"):
            parse_jsonl(bad)

    def test_malformed_json_line_number(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_jsonl(PO_LINE + "\n{broken")

    def test_missing_field(self):
        record = json.loads(PO_LINE)
        del record["species"]
        with pytest.raises(ParseError, match="species"):
            parse_jsonl(json.dumps(record))

    def test_order_preserved_and_metadata(self):
        lines = []
        for i in range(5):
            record = json.loads(PO_LINE)
            record["id"] = f"c{i}"
            record["e_hull"] = 0.01 * i
            record["symmetry"] = {"spacegroup": 221, "wyckoff": ["a"]}
            lines.append(json.dumps(record))
        samples = parse_jsonl("\n".join(lines))
        assert [c.id for c in samples] == [f"c{i}" for i in range(5)]
        assert samples[3].e_hull == pytest.approx(0.03)
        assert samples[0].symmetry.spacegroup == 221

    def test_roundtrip_12_digits_and_order(self, wz_zno, rs_zno):
        from xtalmet import SampleSet

        original = SampleSet("pair", (wz_zno, rs_zno))
        text = serialize_jsonl(original)
        reparsed = parse_jsonl(text, label="pair")
        assert [c.id for c in reparsed] == [c.id for c in original]
        again = serialize_jsonl(reparsed)
        assert again == text  # serialization is a fixed point at 12 digits
        for a, b in zip(original, reparsed):
            assert np.allclose(a.lattice.basis, b.lattice.basis, rtol=1e-11, atol=0)
            assert np.allclose(a.frac_coords, b.frac_coords, rtol=1e-11, atol=1e-11)


class TestParseCifLite:
    def test_wz_zno(self):
        crystal = parse_cif_lite(WZ_ZNO_CIF)
        assert crystal.num_sites == 4
        assert crystal.lattice.angles[2] == pytest.approx(120.0)
        assert sorted(crystal.species) == ["O", "O", "Zn", "Zn"]

    def test_missing_cell_parameter(self):
        bad = WZ_ZNO_CIF.replace("_cell_length_a 3.24\n", "")
        with pytest.raises(ParseError, match="_cell_length_a"):
            parse_cif_lite(bad)

    def test_identity_symmetry_op_accepted(self):
        text = WZ_ZNO_CIF + "\nloop_\n_symmetry_equiv_pos_as_xyz\n'x, y, z'\n"
        assert parse_cif_lite(text).num_sites == 4

    def test_expanded_symmetry_rejected(self):
        text = WZ_ZNO_CIF + "\nloop_\n_symmetry_equiv_pos_as_xyz\n'x, y, z'\n'-x, -y, z+1/2'\n"
        with pytest.raises(ParseError, match="symmetry-expanded CIF unsupported"):
            parse_cif_lite(text)

    def test_missing_site_loop(self):
        head = WZ_ZNO_CIF.split("loop_")[0]
        with pytest.raises(ParseError, match="atom_site"):
            parse_cif_lite(head)


class TestMakeSupercell:
    def test_identity(self, wz_zno):
        same = make_supercell(wz_zno, 1, 1, 1)
        assert same.id == wz_zno.id
        assert np.allclose(same.lattice.basis, wz_zno.lattice.basis)
        assert np.allclose(same.frac_coords, wz_zno.frac_coords)

    def test_2x2x2_of_wurtzite(self, wz_zno, wz_supercell):
        assert wz_supercell.num_sites == 32
        assert wz_supercell.lattice.volume == pytest.approx(8 * wz_zno.lattice.volume)

    def test_1x1x3_stack(self):
        cell = Crystal("sc", Lattice(np.eye(3)), (Site("Po", np.zeros(3)),))
        stacked = make_supercell(cell, 1, 1, 3)
        assert stacked.num_sites == 3
        assert np.allclose(stacked.lattice.basis[2], [0, 0, 3])

    def test_site_cap(self):
        cell = Crystal("sc", Lattice(np.eye(3)), (Site("Po", np.zeros(3)),))
        with pytest.raises(ValueError, match="cap"):
            make_supercell(cell, 30, 30, 30)


class TestNiggliReduce:
    def test_already_reduced_cube(self):
        lat = Lattice(np.eye(3))
        assert np.allclose(niggli_reduce(lat).basis, np.eye(3))

    def test_recovers_cube_from_sheared_basis(self):
        basis = np.array([[1.0, 0, 0], [1.0, 1.0, 0], [0, 0, 1.0]])
        reduced = niggli_reduce(Lattice(basis))
        assert reduced.volume == pytest.approx(1.0)
        # same lattice, cubic metric recovered up to row signs/permutation
        metric = reduced.basis @ reduced.basis.T
        assert np.allclose(np.sort(np.diag(metric)), [1, 1, 1], atol=1e-12)
        assert np.allclose(metric - np.diag(np.diag(metric)), 0, atol=1e-12)

    def test_skewed_cell_angles_in_range(self):
        basis = np.array([[5.0, 0, 0], [4.9, 0.9, 0], [4.8, 0.85, 0.8]])
        reduced = niggli_reduce(Lattice(basis))
        assert reduced.volume == pytest.approx(Lattice(basis).volume, rel=1e-9)
        assert np.all(reduced.angles >= 60 - 1e-9) and np.all(reduced.angles <= 120 + 1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_volume_preserved_and_conditions(self, seed):
        rng = np.random.default_rng(seed)
        lat = helpers.random_lattice(rng)
        # shear by a random unimodular integer matrix to hide the reduced cell
        shear = np.eye(3, dtype=int)
        shear[0, 1], shear[1, 2] = rng.integers(-3, 4, size=2)
        skewed = Lattice(shear @ lat.basis if np.linalg.det(shear @ lat.basis) > 0 else lat.basis)
        reduced = niggli_reduce(skewed)
        assert reduced.volume == pytest.approx(skewed.volume, rel=1e-9)
        a, b, c = reduced.basis
        big_a, big_b, big_c = a @ a, b @ b, c @ c
        eps = 1e-5 * reduced.volume ** (2 / 3)
        assert big_a <= big_b + eps and big_b <= big_c + eps
        assert abs(2 * (b @ c)) <= big_b + eps
        assert abs(2 * (a @ c)) <= big_a + eps
        assert abs(2 * (a @ b)) <= big_a + eps


class TestPrimitiveReduce:
    def test_supercell_recovers_site_count_and_amd(self, wz_zno, wz_supercell):
        prim = primitive_reduce(wz_supercell)
        assert prim.num_sites == 4
        ref = amd_vector(wz_zno, 40).values
        out = amd_vector(prim, 40).values
        assert np.max(np.abs(ref - out)) < 1e-9

    def test_already_primitive_unchanged(self):
        cell = Crystal("sc", Lattice(np.eye(3)), (Site("Po", np.zeros(3)),))
        prim = primitive_reduce(cell)
        assert prim.num_sites == 1
        assert prim.lattice.volume == pytest.approx(1.0)

    def test_1x1x2_stack_halves_volume(self):
        cell = Crystal("sc", Lattice(np.eye(3)), (Site("Po", np.zeros(3)),))
        stacked = make_supercell(cell, 1, 1, 2)
        prim = primitive_reduce(stacked)
        assert prim.num_sites == 1
        assert prim.lattice.volume == pytest.approx(stacked.lattice.volume / 2)

    def test_site_count_divides_input(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            crystal = helpers.random_crystal(rng, max_sites=3)
            sup = make_supercell(crystal, 2, 1, 2)
            prim = primitive_reduce(sup)
            assert sup.num_sites % prim.num_sites == 0

    def test_metadata_carried(self, wz_zno):
        prim = primitive_reduce(make_supercell(wz_zno, 2, 1, 1))
        assert prim.symmetry == wz_zno.symmetry


class TestApplyIsometry:
    def test_identity(self, wz_zno):
        same = apply_isometry(wz_zno, np.eye(3), np.zeros(3))
        assert np.allclose(same.frac_coords, wz_zno.frac_coords, atol=1e-12)

    def test_non_orthogonal_rejected(self, wz_zno):
        with pytest.raises(ValueError, match="orthogonal"):
            apply_isometry(wz_zno, np.eye(3) * 1.001, np.zeros(3))

    def test_interatomic_distances_preserved(self, wz_zno):
        rng = np.random.default_rng(3)
        rotation = helpers.random_rotation(rng)
        moved = apply_isometry(wz_zno, rotation, rng.uniform(-5, 5, size=3))

        def shortest_distances(crystal, count=20):
            from xtalmet.amd import neighbor_distances

            return np.sort(neighbor_distances(crystal, count).ravel())[:count]

        assert np.allclose(
            shortest_distances(wz_zno), shortest_distances(moved), atol=1e-9
        )

    def test_improper_rotation_keeps_right_handed_cell(self, wz_zno):
        mirror = np.diag([1.0, 1.0, -1.0])
        moved = apply_isometry(wz_zno, mirror, np.zeros(3))
        assert moved.lattice.volume > 0
        assert moved.num_sites == wz_zno.num_sites


class TestPerturbSites:
    def test_eps_zero_identity(self, wz_zno):
        assert perturb_sites(wz_zno, 0.0, seed=1) is wz_zno

    def test_deterministic(self, wz_zno):
        a = perturb_sites(wz_zno, 0.1, seed=42)
        b = perturb_sites(wz_zno, 0.1, seed=42)
        assert np.array_equal(a.frac_coords, b.frac_coords)

    def test_displacement_bounded(self, wz_zno):
        for seed in range(20):
            moved = perturb_sites(wz_zno, 0.1, seed=seed)
            delta = moved.frac_coords - wz_zno.frac_coords
            delta -= np.round(delta)
            assert np.linalg.norm(delta @ wz_zno.lattice.basis, axis=1).max() <= 0.1 + 1e-12

    def test_negative_eps_rejected(self, wz_zno):
        with pytest.raises(ValueError):
            perturb_sites(wz_zno, -0.1, seed=0)
