import numpy as np

from m1plots.overlay import BLACK, NORMAL, WHITE, classify_overlay


def test_rules_per_row():
    psi0 = np.array([1.0, 1.0, -0.5, 0.8, -1.0])
    f = np.array([0.3, 1.5, 0.2, 1.0, 2.0])
    codes = classify_overlay(psi0, f)
    assert codes[0] == NORMAL
    assert codes[1] == BLACK  # |phi1| > 1
    assert codes[2] == WHITE  # psi0 < 0
    assert codes[3] == NORMAL  # f == 1 is still admissible
    assert codes[4] == WHITE  # white wins over black


def test_all_realizable_has_no_overlay():
    rng = np.random.default_rng(1)
    psi0 = rng.uniform(0.1, 2.0, 1000)
    f = rng.uniform(0.0, 1.0, 1000)
    assert np.all(classify_overlay(psi0, f) == NORMAL)


def test_counts_on_synthetic_rows():
    rng = np.random.default_rng(2)
    n = 500
    psi0 = rng.uniform(0.5, 1.5, n)
    f = rng.uniform(0.0, 0.9, n)
    black_rows = [7, 100, 333]
    white_rows = [12, 400]
    f[black_rows] = 1.5
    psi0[white_rows] = -0.25
    codes = classify_overlay(psi0, f)
    assert sorted(np.flatnonzero(codes == BLACK)) == black_rows
    assert sorted(np.flatnonzero(codes == WHITE)) == white_rows
