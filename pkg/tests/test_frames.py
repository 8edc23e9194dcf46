"""SYNCP preamble patterns and mode classification."""

import pytest

from pmacsim import classify_preamble, encode_preamble


def test_data_mode_is_four_consecutive_syncps():
    assert encode_preamble("data") == (True, True, True, True)


def test_pte_mode_drops_one_syncp():
    assert encode_preamble("pte") == (True, True, False, True)


def test_classify_canonical_patterns():
    assert classify_preamble((True, True, True, True)) == "data"
    assert classify_preamble((True, True, False, True)) == "pte"


def test_unknown_patterns_are_invalid_values_not_errors():
    assert classify_preamble((True, False, False, True)) == "invalid"
    assert classify_preamble((False, False, False, False)) == "invalid"


@pytest.mark.parametrize("mode", ["pte", "data"])
def test_encode_classify_round_trip(mode):
    assert classify_preamble(encode_preamble(mode)) == mode


def test_encode_rejects_unknown_mode():
    with pytest.raises(ValueError):
        encode_preamble("bogus")
