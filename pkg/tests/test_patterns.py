import json
from pathlib import Path

import numpy as np
import pytest

from common.errors import CorpusLoadError, DataError
from patterns.utils.config import PatternConfig
from patterns.utils.pattern_corpus import (
    Pattern,
    canonical_corpus,
    encode_schedule,
    find_pattern,
    parse_fixtures,
    parse_pattern_key,
    pattern_similarity,
    similarity_matrix,
)


FIXTURES = Path(__file__).parent / "fixtures"


def _brute_force_similarity(a, b, shifts):
    best = 0.0
    for s in shifts:
        match = total = 0
        for r in range(3):
            for c in range(5):
                if 0 <= c + s < 5:
                    total += 1
                    match += a.grid[r][c] == b.grid[r][c + s]
        if total:
            best = max(best, 100.0 * match / total)
    return best


def test_corpus_has_ten_variants_per_class(corpus):
    assert len(corpus) == 80
    for label in PatternConfig.CLASS_LABELS:
        variants = [p.variant_id for p in corpus if p.class_label == label]
        assert variants == list(range(1, 11))


def test_every_grid_is_binary_three_by_five(corpus):
    for p in corpus:
        assert p.array.shape == (3, 5)
        assert set(np.unique(p.array)) <= {0, 1}


def test_corpus_is_deterministic():
    a, b = canonical_corpus(), canonical_corpus()
    assert [p.grid for p in a] == [p.grid for p in b]
    assert [p.key for p in a] == [p.key for p in b]


def test_variants_are_distinct_within_class(corpus):
    for label in PatternConfig.CLASS_LABELS:
        grids = [p.grid for p in corpus if p.class_label == label]
        assert len(set(grids)) == 10


def test_shifted_variant_is_canonical_moved_right(corpus):
    canonical = find_pattern(corpus, "PN", 1).array
    shifted = find_pattern(corpus, "PN", 10).array
    assert np.array_equal(shifted[:, 1:], canonical[:, :4])
    assert not shifted[:, 0].any()


def test_find_pattern_unknown_raises(corpus):
    with pytest.raises(DataError):
        find_pattern(corpus, "P1", 11)


def test_encode_all_zero_grid_is_all_off():
    sched = encode_schedule(Pattern.from_rows(["00000"] * 3, "P1", 1))
    assert len(sched) == 1800
    assert not sched.frames.any()


def test_encode_all_one_grid():
    sched = encode_schedule(Pattern.from_rows(["11111"] * 3, "P1", 1))
    assert sched.frames[:1500].all()
    assert not sched.frames[1500:].any()


def test_encode_single_cell_red_last_column():
    sched = encode_schedule(Pattern.from_rows(["00001", "00000", "00000"], "P1", 1))
    expected = np.zeros((1800, 3), dtype=bool)
    for t in range(1200, 1500):
        expected[t, 0] = True
    assert np.array_equal(sched.frames, expected)
    assert sched.pump_on(0, 1200) and not sched.pump_on(0, 1199)


def test_schedule_frames_are_read_only(corpus):
    sched = encode_schedule(corpus[0])
    with pytest.raises(ValueError):
        sched.frames[0, 0] = True


def test_decode_recovers_grid_for_whole_corpus(corpus):
    for p in corpus:
        assert np.array_equal(encode_schedule(p).decode_grid(), p.array)


def test_similarity_identity_and_complement():
    a = Pattern.from_rows(["10101", "01010", "11100"], "P1", 1)
    comp = Pattern.from_rows(["01010", "10101", "00011"], "P2", 1)
    assert pattern_similarity(a, a) == 100.0
    assert pattern_similarity(a, comp) == 0.0


def test_similarity_symmetric_and_bounded(corpus):
    for a in corpus[::7]:
        for b in corpus[::11]:
            for shift in (False, True):
                v = pattern_similarity(a, b, shift)
                assert v == pattern_similarity(b, a, shift)
                assert 0.0 <= v <= 100.0


def test_similarity_hundred_iff_equal_grids(corpus):
    for a in corpus[::5]:
        for b in corpus[::3]:
            assert (pattern_similarity(a, b) == 100.0) == (a.grid == b.grid)


def test_shifted_pn_against_pu_matches_brute_force(corpus):
    pn10, pu1 = find_pattern(corpus, "PN", 10), find_pattern(corpus, "PU", 1)
    assert pattern_similarity(pn10, pu1) == pytest.approx(_brute_force_similarity(pn10, pu1, [0]))
    assert pattern_similarity(pn10, pu1, max_over_shifts=True) == pytest.approx(
        _brute_force_similarity(pn10, pu1, range(-2, 3))
    )


def test_shift_search_recognises_shifted_variant(corpus):
    pn1, pn10 = find_pattern(corpus, "PN", 1), find_pattern(corpus, "PN", 10)
    assert pattern_similarity(pn1, pn10) < 100.0
    assert pattern_similarity(pn1, pn10, max_over_shifts=True) == 100.0


def test_single_pattern_matrix(corpus):
    m = similarity_matrix(corpus[:1])
    assert m.values.shape == (1, 1)
    assert m.values[0, 0] == 100.0


def test_variant_matrix_symmetric_with_hundred_diagonal(corpus):
    m = similarity_matrix(corpus)
    assert m.values.shape == (80, 80)
    assert np.array_equal(m.values, m.values.T)
    assert np.all(np.diag(m.values) == 100.0)
    assert m.labels[69] == "PN_V10"


def test_class_mode_entry_is_mean_of_variant_pairs(corpus):
    m = similarity_matrix(corpus, by="class")
    pn = [p for p in corpus if p.class_label == "PN"]
    pl = [p for p in corpus if p.class_label == "PL"]
    total = 0.0
    for a in pn:
        for b in pl:
            total += pattern_similarity(a, b)
    i, j = m.labels.index("PN"), m.labels.index("PL")
    assert m.values[i, j] == pytest.approx(total / 100)
    assert m.values[j, i] == m.values[i, j]
    assert np.all(np.diag(m.values) == 100.0)


def test_class_mode_within_spread(corpus):
    m = similarity_matrix(corpus, by="class")
    p1 = [p for p in corpus if p.class_label == "P1"]
    pairs = [pattern_similarity(a, b) for i, a in enumerate(p1) for b in p1[i + 1:]]
    assert m.within[m.labels.index("P1")] == pytest.approx(np.mean(pairs))
    assert m.within_frame().shape == (8, 1)


def test_parse_malformed_row_names_entry_and_line():
    text = "P1 1\n10001\n01010\n00100\n\nP1 2\n10001\n0101\n00100\n"
    with pytest.raises(CorpusLoadError) as exc:
        parse_fixtures(text, source="bad.txt")
    assert "P1 2" in str(exc.value)
    assert "bad.txt:6" in str(exc.value)


def test_parse_bad_header():
    with pytest.raises(CorpusLoadError, match="expected"):
        parse_fixtures("P1\n10001\n01010\n00100\n")


def test_parse_unknown_class():
    with pytest.raises(CorpusLoadError, match="PX 1"):
        parse_fixtures("PX 1\n10001\n01010\n00100\n")


def test_missing_fixture_file(tmp_path):
    with pytest.raises(CorpusLoadError, match="not found"):
        canonical_corpus(str(tmp_path / "nope.txt"))


def test_incomplete_fixture_file(tmp_path):
    path = tmp_path / "short.txt"
    path.write_text("P1 1\n10001\n01010\n00100\n", encoding="utf-8")
    with pytest.raises(CorpusLoadError, match="missing entry"):
        canonical_corpus(str(path))


def test_pattern_rejects_non_binary():
    with pytest.raises(DataError):
        Pattern(grid=((0, 1, 2, 0, 0), (0,) * 5, (0,) * 5), class_label="P1", variant_id=1)


def test_pn10_pu1_similarity_golden(corpus):
    golden = json.loads((FIXTURES / "similarity_pn10_pu1.json").read_text(encoding="utf-8"))
    a, b = (find_pattern(corpus, *parse_pattern_key(name)) for name in (golden["a"], golden["b"]))
    assert pattern_similarity(a, b) == pytest.approx(golden["agreement"])
    assert pattern_similarity(a, b, max_over_shifts=True) == pytest.approx(golden["max_over_shifts"])
    matrix = similarity_matrix([a, b], max_over_shifts=True)
    assert matrix.values[0, 1] == pytest.approx(golden["max_over_shifts"])


@pytest.mark.parametrize("text, key", [("PN:10", ("PN", 10)), ("PN_V10", ("PN", 10)), ("P1:1", ("P1", 1))])
def test_parse_pattern_key(text, key):
    assert parse_pattern_key(text) == key


@pytest.mark.parametrize("text", ["PN-10", "PN:", ":3", "PN_Vx"])
def test_parse_pattern_key_rejects_bad_forms(text):
    with pytest.raises(DataError):
        parse_pattern_key(text)
