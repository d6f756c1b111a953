"""Material table and stack geometry: invariants, JSON round-trips, errors."""

import math

import pytest

import thermkit as tk
from thermkit.errors import FormatError, GeometryError
from thermkit.materials import DEFAULT_MATERIALS, Material, get_material
from thermkit.stack import (BoundaryCondition, CoreRegion, InterconnectArray,
                            Layer, PackageStack, PowerAssignment,
                            PowerWaveform, load_stack, mm, require_valid,
                            save_stack, stack_from_json, stack_to_json, to_mm,
                            validate_stack)


# ---------------------------------------------------------------------------
# materials


def test_default_table_positive_properties():
    assert set(DEFAULT_MATERIALS) >= {
        "silicon", "copper", "oxide", "solder", "underfill", "substrate"}
    for m in DEFAULT_MATERIALS.values():
        assert m.k > 0 and m.rho > 0 and m.cp > 0
        assert m.cv == pytest.approx(m.rho * m.cp)


def test_get_material_unknown_name():
    with pytest.raises(GeometryError):
        get_material("unobtainium")


def test_material_rejects_nonpositive():
    with pytest.raises(GeometryError):
        Material("bad", k=-1.0, rho=1000.0, cp=700.0)
    with pytest.raises(GeometryError):
        Material("bad", k=1.0, rho=0.0, cp=700.0)


# ---------------------------------------------------------------------------
# units


def test_mm_round_trip():
    assert mm(0.1) == pytest.approx(1e-4)
    assert to_mm(mm(2.5)) == pytest.approx(2.5)


# ---------------------------------------------------------------------------
# stack validation


def _one_layer(**overrides):
    si = get_material("silicon")
    fields = dict(
        name="t",
        layers=(Layer("die", 0.5e-3, 1e-3, 1e-3, si,
                      power_regions=(CoreRegion(id="c", rect=(0, 0, 1e-3, 1e-3)),)),),
        bc_top=BoundaryCondition.convective(h=1000.0, t_inf=293.15),
        bc_bottom=BoundaryCondition.adiabatic(),
        ambient=293.15,
        power_range=(0.0, 1.0),
    )
    fields.update(overrides)
    return PackageStack(**fields)


def test_valid_stack_has_no_violations(tiny_stack):
    assert validate_stack(tiny_stack) == []
    require_valid(tiny_stack)  # should not raise


def test_all_adiabatic_is_flagged():
    bad = _one_layer(bc_top=BoundaryCondition.adiabatic())
    msgs = validate_stack(bad)
    assert any("adiabatic" in m for m in msgs)
    with pytest.raises(GeometryError):
        require_valid(bad)


def test_region_outside_footprint_is_flagged():
    si = get_material("silicon")
    bad = _one_layer(layers=(
        Layer("die", 0.5e-3, 1e-3, 1e-3, si,
              power_regions=(CoreRegion(id="c", rect=(0, 0, 2e-3, 1e-3)),)),))
    assert any("footprint" in m for m in validate_stack(bad))


def test_overlapping_regions_flagged():
    si = get_material("silicon")
    r1 = CoreRegion(id="a", rect=(0, 0, 0.6e-3, 1e-3))
    r2 = CoreRegion(id="b", rect=(0.4e-3, 0, 1e-3, 1e-3))
    bad = _one_layer(layers=(
        Layer("die", 0.5e-3, 1e-3, 1e-3, si, power_regions=(r1, r2)),))
    assert any("overlap" in m for m in validate_stack(bad))


def test_duplicate_core_ids_flagged():
    si = get_material("silicon")
    r1 = CoreRegion(id="a", rect=(0, 0, 0.4e-3, 1e-3))
    r2 = CoreRegion(id="a", rect=(0.6e-3, 0, 1e-3, 1e-3))
    bad = _one_layer(layers=(
        Layer("die", 0.5e-3, 1e-3, 1e-3, si, power_regions=(r1, r2)),))
    assert any("duplicate" in m for m in validate_stack(bad))


def test_array_coarser_than_layer_flagged():
    si = get_material("silicon")
    arr = InterconnectArray(kind="tsv", pitch=2e-3, count_x=1, count_y=1,
                            r_core=0.2e-3, t_shell=0.1e-3,
                            core_material=get_material("copper"),
                            shell_material=get_material("oxide"),
                            matrix_material=si)
    bad = _one_layer(layers=(
        Layer("die", 0.5e-3, 1e-3, 1e-3, si, array=arr,
              power_regions=(CoreRegion(id="c", rect=(0, 0, 1e-3, 1e-3)),)),))
    assert validate_stack(bad)


def test_nonpositive_dimensions_rejected():
    si = get_material("silicon")
    bad = _one_layer(layers=(Layer("die", -1e-3, 1e-3, 1e-3, si),))
    assert any("thickness" in m for m in validate_stack(bad))
    bad = _one_layer(layers=(Layer("die", 1e-3, 0.0, 1e-3, si),))
    assert any("extents" in m for m in validate_stack(bad))
    with pytest.raises(GeometryError):
        require_valid(bad)


def test_interconnect_array_geometry_errors():
    cu, ox, si = (get_material(n) for n in ("copper", "oxide", "silicon"))

    def stack_with(arr):
        return _one_layer(layers=(Layer("die", 0.5e-3, 1e-3, 1e-3, si, array=arr),))

    touching = InterconnectArray(kind="tsv", pitch=1e-4, count_x=1, count_y=1,
                                 r_core=6e-5, t_shell=0.0, core_material=cu,
                                 shell_material=ox, matrix_material=si)
    assert any("overlapping" in m for m in validate_stack(stack_with(touching)))

    empty = InterconnectArray(kind="tsv", pitch=1e-4, count_x=0, count_y=1,
                              r_core=2e-5, t_shell=0.0, core_material=cu,
                              shell_material=ox, matrix_material=si)
    assert any("counts" in m for m in validate_stack(stack_with(empty)))


# ---------------------------------------------------------------------------
# power containers


def test_waveform_requires_increasing_times(tiny_stack):
    a = PowerAssignment(powers={"die:c00": 0.1}, seed=0)
    with pytest.raises(GeometryError):
        PowerWaveform(segments=((0.0, a), (0.0, a)))
    wf = PowerWaveform(segments=((0.0, a), (1.0, a)))
    assert wf.at(0.5)["die:c00"] == pytest.approx(0.1)


def test_waveform_must_start_at_zero(tiny_stack):
    a = PowerAssignment(powers={"die:c00": 0.1}, seed=0)
    with pytest.raises(GeometryError):
        PowerWaveform(segments=((0.5, a),))


# ---------------------------------------------------------------------------
# JSON round-trips


def test_stack_json_round_trip_meters_exact():
    from thermkit.bench import make_case

    stack = make_case("ind8c")
    back = stack_from_json(stack_to_json(stack, unit="m"))
    assert back == stack


def test_stack_json_round_trip_mm_approx():
    # mm serialization divides/multiplies by 1e-3, which may cost an ulp,
    # so equality is structural with float tolerance rather than exact.
    from thermkit.bench import make_case

    stack = make_case("ind8c")
    back = stack_from_json(stack_to_json(stack, unit="mm"))
    assert _approx_same(stack_to_json(back), stack_to_json(stack))


def _approx_same(a, b, rel=1e-12):
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_approx_same(a[k], b[k], rel) for k in a)
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(_approx_same(x, y, rel) for x, y in zip(a, b))
    if isinstance(a, float) and not isinstance(a, bool):
        return a == pytest.approx(b, rel=rel, abs=0.0)
    return a == b


def test_save_load_round_trip(tmp_path, tiny_stack):
    p = tmp_path / "s.json"
    save_stack(tiny_stack, p, unit="mm")
    assert load_stack(p) == tiny_stack


def test_from_json_rejects_bad_unit(tiny_stack):
    doc = stack_to_json(tiny_stack)
    doc["unit"] = "furlong"
    with pytest.raises(FormatError):
        stack_from_json(doc)


def test_from_json_rejects_missing_fields(tiny_stack):
    doc = stack_to_json(tiny_stack)
    del doc["layers"]
    with pytest.raises(FormatError):
        stack_from_json(doc)


def test_core_ids_sorted_and_complete():
    from thermkit.bench import make_case

    stack = make_case("ind8c")
    ids = stack.core_ids()
    assert len(ids) == 8
    assert ids == sorted(ids)
    assert ids[0].startswith("bottom_core:")


def test_r_shell_is_core_plus_shell():
    cu, ox, si = (get_material(n) for n in ("copper", "oxide", "silicon"))
    arr = InterconnectArray(kind="tsv", pitch=1e-4, count_x=2, count_y=2,
                            r_core=2e-5, t_shell=1e-5, core_material=cu,
                            shell_material=ox, matrix_material=si)
    assert arr.r_shell == pytest.approx(3e-5)
    xs, ys = arr.centers(0.0, 0.0, 2e-4, 2e-4)
    assert xs == pytest.approx([0.5e-4, 1.5e-4])
    assert ys == pytest.approx([0.5e-4, 1.5e-4])


def test_total_thickness_and_layer_z0():
    from thermkit.bench import make_case

    stack = make_case("ind8c")
    assert stack.total_thickness == pytest.approx(
        sum(l.thickness for l in stack.layers))
    assert stack.layer_z0(0) == 0.0
    assert stack.layer_z0(2) == pytest.approx(1.1e-3)
