import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from satforge.errors import MaskDecodeError
from satforge.grids import LabelMask
from satforge.rle import RleAnnotation, decode_rle, encode_rle


def decode_by_enumeration(runs, rows, cols):
    """Paint pixel by pixel: flat index k (1-based) maps to
    (row (k-1) % rows, col (k-1) // rows). Independent of the vectorized path."""
    out = np.zeros((rows, cols), np.uint8)
    for start, length in runs:
        for k in range(start, start + length):
            out[(k - 1) % rows, (k - 1) // rows] = 1
    return out


def test_single_pixel_run_is_top_left():
    mask = decode_rle(RleAnnotation(runs=((1, 1),), rows=4, cols=3))
    assert mask.values[0, 0] == 1
    assert mask.values.sum() == 1
    assert mask.class_map == {1: "foreground"}


def test_flattening_is_column_major():
    # pixel 2 sits below pixel 1, not to its right
    mask = decode_rle(RleAnnotation(runs=((2, 1),), rows=4, cols=3))
    assert mask.values[1, 0] == 1
    # pixel rows+1 is the top of the second column
    mask = decode_rle(RleAnnotation(runs=((5, 1),), rows=4, cols=3))
    assert mask.values[0, 1] == 1


def test_full_cover_run():
    mask = decode_rle(RleAnnotation(runs=((1, 589_824),), rows=768, cols=768))
    assert mask.values.shape == (768, 768)
    assert (mask.values == 1).all()


def test_empty_encoding_is_all_background():
    mask = decode_rle(RleAnnotation(runs=(), rows=5, cols=7))
    assert (mask.values == 0).all()


def test_checkerboard_2x2():
    # 2x2 board with ones at (0,0) and (1,1): column-major pixels 1 and 4
    values = np.array([[1, 0], [0, 1]], np.uint8)
    ann = encode_rle(LabelMask(values=values, class_map={1: "foreground"}))
    assert ann.runs == ((1, 1), (4, 1))
    np.testing.assert_array_equal(decode_rle(ann).values, values)


def test_run_crossing_column_boundary():
    runs = ((3, 4),)  # pixels 3,4 end column one; 5,6 start column two
    got = decode_rle(RleAnnotation(runs=runs, rows=4, cols=3)).values
    np.testing.assert_array_equal(got, decode_by_enumeration(runs, 4, 3))
    assert got[2, 0] == got[3, 0] == got[0, 1] == got[1, 1] == 1


def test_decode_errors_name_the_run():
    with pytest.raises(MaskDecodeError, match="run 0"):
        decode_rle(RleAnnotation(runs=((0, 5),), rows=4, cols=4))
    with pytest.raises(MaskDecodeError, match="run 1.*overlaps"):
        decode_rle(RleAnnotation(runs=((1, 4), (3, 2)), rows=4, cols=4))
    with pytest.raises(MaskDecodeError, match="run 1.*16 pixels"):
        decode_rle(RleAnnotation(runs=((1, 2), (15, 3)), rows=4, cols=4))
    with pytest.raises(MaskDecodeError, match="length"):
        decode_rle(RleAnnotation(runs=((1, 0),), rows=4, cols=4))


def test_unsorted_runs_rejected():
    with pytest.raises(MaskDecodeError, match="precedes"):
        decode_rle(RleAnnotation(runs=((9, 2), (1, 2)), rows=4, cols=4))


def test_dimension_validation():
    with pytest.raises(MaskDecodeError):
        RleAnnotation(runs=(), rows=0, cols=5)


def test_string_roundtrip():
    ann = RleAnnotation.from_string("1 3 9 2", rows=4, cols=4)
    assert ann.runs == ((1, 3), (9, 2))
    assert ann.to_string() == "1 3 9 2"
    assert RleAnnotation.from_string("", rows=4, cols=4).runs == ()


def test_string_parse_errors():
    with pytest.raises(MaskDecodeError, match="pairs"):
        RleAnnotation.from_string("1 2 3", rows=4, cols=4)
    with pytest.raises(MaskDecodeError, match="non-integer"):
        RleAnnotation.from_string("1 x", rows=4, cols=4)


def test_encode_rejects_non_binary():
    values = np.array([[0, 2]], np.uint8)
    with pytest.raises(ValueError, match="not binary"):
        encode_rle(LabelMask(values=values, class_map={2: "x"}))


def test_encode_decode_identity_seeded_batch():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        values = (rng.random((64, 64)) < rng.uniform(0.02, 0.9)).astype(np.uint8)
        mask = LabelMask(values=values, class_map={1: "foreground"})
        back = decode_rle(encode_rle(mask))
        np.testing.assert_array_equal(back.values, values)


@settings(max_examples=200)
@given(
    rows=st.integers(1, 12),
    cols=st.integers(1, 12),
    seed=st.integers(0, 2**31),
    density=st.floats(0.0, 1.0),
)
def test_decode_matches_enumeration_oracle(rows, cols, seed, density):
    rng = np.random.default_rng(seed)
    values = (rng.random((rows, cols)) < density).astype(np.uint8)
    ann = encode_rle(LabelMask(values=values, class_map={1: "foreground"}))
    np.testing.assert_array_equal(
        decode_rle(ann).values, decode_by_enumeration(ann.runs, rows, cols)
    )
    np.testing.assert_array_equal(decode_rle(ann).values, values)
