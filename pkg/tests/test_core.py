import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from unlock.core import (
    ClassTable, area, bbox, iou, mask_algebra, mask_and, mask_diff, mask_or, match_by_overlap,
    rle_decode, rle_encode,
)
from unlock.errors import DimensionMismatch, FormatError, SumMismatch
from unlock.formats import (
    mask_from_bytes, mask_to_bytes, read_mask, read_pnm, read_probs, read_segments,
    write_mask, write_pnm, write_probs, write_segments,
)


def m(bits, h=1):
    return np.array([int(b) for b in bits], dtype=bool).reshape(h, -1)


masks = st.tuples(st.integers(1, 64), st.integers(1, 64)).flatmap(
    lambda hw: hnp.arrays(np.bool_, hw))
mask_pairs = st.tuples(st.integers(1, 16), st.integers(1, 16)).flatmap(
    lambda hw: st.tuples(hnp.arrays(np.bool_, hw), hnp.arrays(np.bool_, hw)))


def test_rle_examples():
    assert rle_encode(np.zeros((2, 2), bool)) == [4]
    assert rle_encode(np.ones((2, 2), bool)) == [0, 4]
    assert rle_encode(m("0110")) == [1, 2, 1]


def test_rle_decode_examples():
    assert not rle_decode([4], 2, 2).any()
    np.testing.assert_array_equal(rle_decode([1, 2, 1], 1, 4), m("0110"))
    with pytest.raises(SumMismatch):
        rle_decode([3], 2, 2)


@settings(max_examples=300)
@given(masks)
def test_rle_round_trip(mask):
    runs = rle_encode(mask)
    assert sum(runs) == mask.size
    # canonical: only the first run may be empty
    assert all(r > 0 for r in runs[1:])
    np.testing.assert_array_equal(rle_decode(runs, *mask.shape), mask)


def test_algebra_examples():
    a = m("0110")
    assert not mask_and(a, ~a).any()
    np.testing.assert_array_equal(mask_and(m("0110"), m("0011")), m("0010"))
    np.testing.assert_array_equal(mask_algebra(m("0110"), m("0011"), "or"), m("0111"))
    np.testing.assert_array_equal(mask_algebra(m("0110"), m("0011"), "diff"), m("0100"))
    assert area(m("0110")) == 2
    with pytest.raises(DimensionMismatch):
        mask_or(m("01"), m("011"))
    with pytest.raises(ValueError):
        mask_algebra(a, a, "xor")


@given(mask_pairs)
def test_inclusion_exclusion(pair):
    a, b = pair
    assert area(mask_and(a, b)) + area(mask_or(a, b)) == area(a) + area(b)


@given(mask_pairs)
def test_diff_is_and_not(pair):
    a, b = pair
    np.testing.assert_array_equal(mask_diff(a, b), mask_and(a, ~b))


def test_iou_and_bbox():
    assert iou(m("0110"), m("0011")) == pytest.approx(1 / 3)
    assert iou(m("0000"), m("0000")) == 0.0
    assert bbox(m("000001100000", h=3)) == (1, 1, 2, 3)
    assert bbox(m("0000")) is None


def test_match_by_overlap_prefers_global_pairing():
    # a deep object's amodal mask overlaps the front object's visible part
    # more than its own; the joint pairing must still be the right one
    deep_amodal = np.zeros((4, 8), bool)
    deep_amodal[:, :6] = True
    front = np.zeros((4, 8), bool)
    front[:, 1:6] = True
    deep_visible = deep_amodal & ~front
    pairs = match_by_overlap([(1, deep_amodal), (1, front)], [(1, front), (1, deep_visible)])
    assert pairs == {0: 1, 1: 0}
    assert match_by_overlap([(1, front)], [(2, front)]) == {}


def test_class_table():
    t = ClassTable(("road", "car"), {1})
    assert t.kind(0) == "stuff" and t.kind(1) == "thing"
    assert ClassTable.from_dict(t.to_dict()) == t
    with pytest.raises(ValueError):
        ClassTable(("road",), {3})


# --- file formats --------------------------------------------------------

def test_mask_file_golden_bytes(tmp_path):
    expected = bytes.fromhex("554c4b4d" "01000000" "04000000" "03000000" "01000000" "02000000" "01000000")
    assert mask_to_bytes(m("0110")) == expected
    write_mask(tmp_path / "a.ulkm", m("0110"))
    assert (tmp_path / "a.ulkm").read_bytes() == expected
    np.testing.assert_array_equal(read_mask(tmp_path / "a.ulkm"), m("0110"))


def test_mask_file_full_mask_golden():
    assert mask_to_bytes(np.ones((2, 2), bool)) == bytes.fromhex(
        "554c4b4d" "02000000" "02000000" "02000000" "00000000" "04000000")


@settings(max_examples=100)
@given(masks)
def test_mask_bytes_round_trip(mask):
    np.testing.assert_array_equal(mask_from_bytes(mask_to_bytes(mask)), mask)


def test_mask_file_errors(tmp_path):
    with pytest.raises(FormatError, match="magic"):
        mask_from_bytes(b"XXXX" + bytes(12))
    bad = b"ULKM" + bytes.fromhex("020000000200000001000000" "03000000")
    with pytest.raises(FormatError, match="runs"):
        mask_from_bytes(bad)
    with pytest.raises(FormatError, match="missing.ulkm"):
        read_mask(tmp_path / "missing.ulkm")


def test_prob_file_golden(tmp_path):
    probs = np.array([[[0.25, 0.75], [1.0, 0.0]]])
    write_probs(tmp_path / "p.ulkp", probs)
    assert (tmp_path / "p.ulkp").read_bytes() == bytes.fromhex(
        "554c4b50" "01000000" "02000000" "02000000" "0000803e" "0000803f" "0000403f" "00000000")
    np.testing.assert_array_equal(read_probs(tmp_path / "p.ulkp"), probs)


def test_pnm_golden(tmp_path):
    gray = np.array([[0, 255], [7, 9]], dtype=np.uint8)
    write_pnm(tmp_path / "g.pgm", gray)
    assert (tmp_path / "g.pgm").read_bytes() == b"P5\n2 2\n255\n\x00\xff\x07\x09"
    np.testing.assert_array_equal(read_pnm(tmp_path / "g.pgm"), gray)
    rgb = np.arange(6, dtype=np.uint8).reshape(1, 2, 3)
    write_pnm(tmp_path / "c.ppm", rgb)
    assert (tmp_path / "c.ppm").read_bytes() == b"P6\n2 1\n255\n\x00\x01\x02\x03\x04\x05"
    np.testing.assert_array_equal(read_pnm(tmp_path / "c.ppm"), rgb)


def test_pnm_reader_accepts_comments_and_rejects_other_maxval(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P5\n# made by hand\n1 1\n255\n\x2a")
    assert read_pnm(tmp_path / "a.pgm")[0, 0] == 42
    (tmp_path / "b.pgm").write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(FormatError, match="maxval"):
        read_pnm(tmp_path / "b.pgm")


def test_segment_grid(tmp_path):
    seg = np.array([[0, 1], [2, 70000]])
    write_segments(tmp_path / "s.seg", seg)
    assert (tmp_path / "s.seg").read_bytes()[:8] == bytes.fromhex("0000000001000000")
    np.testing.assert_array_equal(read_segments(tmp_path / "s.seg", 2, 2), seg)
