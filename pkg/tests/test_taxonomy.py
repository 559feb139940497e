import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shipprompt.pnm import write_pnm
from shipprompt.taxonomy import (
    ClassDescriptor,
    DatasetManifest,
    ManifestError,
    load_manifest,
    make_base_new_split,
    manifest_from_dict,
    validate_hierarchy,
)

from helpers import tiny_manifest


def _doc(classes, records=None):
    return {
        "name": "t",
        "classes": [dict(class_id=i, primary=p, secondary=s, final=f) for i, p, s, f in classes],
        "records": records if records is not None else [
            {"image_ref": "inline:AAAA", "class_id": classes[0][0], "height": 1, "width": 1}],
    }


def _write(tmp_path, doc):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    return path


def test_loads_two_classes_four_records(tmp_path):
    recs = [{"image_ref": "inline:AAAA", "class_id": c, "height": 1, "width": 1} for c in (0, 0, 1, 1)]
    m = load_manifest(_write(tmp_path, _doc([(0, "a", "b", "c"), (1, "a", "b", "d")], recs)))
    assert len(m.classes) == 2 and len(m.records) == 4


def test_unresolved_class(tmp_path):
    recs = [{"image_ref": "inline:AAAA", "class_id": 99, "height": 1, "width": 1}]
    with pytest.raises(ManifestError, match="unresolved class"):
        load_manifest(_write(tmp_path, _doc([(0, "a", "b", "c"), (1, "a", "b", "d")], recs)))


def test_final_under_two_primaries(tmp_path):
    doc = _doc([(0, "warship", "carrier", "Nimitz"), (1, "merchant", "carrier", "Nimitz")])
    with pytest.raises(ManifestError, match="hierarchy violation"):
        load_manifest(_write(tmp_path, doc))


def test_duplicate_final_and_parse_errors(tmp_path):
    with pytest.raises(ManifestError, match="duplicate final"):
        manifest_from_dict(_doc([(0, "a", "b", "c"), (1, "a", "b", "c")]))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ManifestError, match="parse error"):
        load_manifest(bad)
    with pytest.raises(ManifestError, match="at least 2"):
        manifest_from_dict(_doc([(0, "a", "b", "c")]))


def test_validate_hierarchy_cases():
    ok = DatasetManifest((ClassDescriptor(0, "a", "b", "c"), ClassDescriptor(1, "a", "e", "f")), ())
    assert validate_hierarchy(ok) == []
    two_secondaries = DatasetManifest((ClassDescriptor(0, "a", "b", "x"), ClassDescriptor(1, "a", "e", "x")), ())
    problems = validate_hierarchy(two_secondaries)
    assert len(problems) == 1 and "'x'" in problems[0]
    empty = DatasetManifest((ClassDescriptor(0, "", "b", "c"), ClassDescriptor(1, "a", "e", "f")), ())
    assert validate_hierarchy(empty) == ["empty level name in class 0"]


def test_round_trip_through_file(tmp_path, ships):
    path = tmp_path / "ships.json"
    ships.save(path)
    again = load_manifest(path)
    assert again == ships
    np.testing.assert_array_equal(again.load_image(5), ships.load_image(5))


def test_pnm_records_load_relative_to_manifest(tmp_path):
    pixels = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    write_pnm(tmp_path / "img.ppm", pixels)
    recs = [{"image_ref": "img.ppm", "class_id": 0, "height": 2, "width": 3}]
    m = load_manifest(_write(tmp_path, _doc([(0, "a", "b", "c"), (1, "a", "b", "d")], recs)))
    np.testing.assert_array_equal(m.load_image(0), pixels)


def _named(finals):
    return DatasetManifest(tuple(ClassDescriptor(i, "p", "s", f) for i, f in enumerate(finals)), ())


def test_alphabetical_split_by_hand():
    m = _named(["delta", "alpha", "echo", "charlie", "bravo"])
    split = make_base_new_split(m)
    # sorted finals: alpha(1) bravo(4) charlie(3) delta(0) echo(2); ceil(5/2) = 3 base
    assert split.base_class_ids == (1, 4, 3)
    assert split.new_class_ids == (0, 2)
    assert make_base_new_split(m, ordering="manifest-order").base_class_ids == (0, 1, 2)


def test_split_of_42_and_2_and_1():
    m = _named([f"class{i:02d}" for i in range(42)][::-1])
    split = make_base_new_split(m, 0.5)
    assert len(split.base_class_ids) == 21 and len(split.new_class_ids) == 21
    assert sorted(m.class_by_id(c).final for c in split.base_class_ids) == [f"class{i:02d}" for i in range(21)]
    s2 = make_base_new_split(_named(["a", "b"]))
    assert (len(s2.base_class_ids), len(s2.new_class_ids)) == (1, 1)
    with pytest.raises(ValueError):
        make_base_new_split(_named(["a"]))
    with pytest.raises(ValueError):
        make_base_new_split(_named(["a", "b"]), Fraction(99, 100))


@given(st.integers(2, 40), st.fractions(Fraction(1, 100), Fraction(99, 100)))
def test_split_partitions_classes(C, frac):
    m = tiny_manifest(C, per_class=0)
    try:
        split = make_base_new_split(m, frac)
    except ValueError:
        assert -(-C * frac.numerator // frac.denominator) >= C
        return
    base, new = set(split.base_class_ids), set(split.new_class_ids)
    assert not base & new
    assert base | new == set(m.class_ids)
    assert base and new
    assert make_base_new_split(m, frac) == split
