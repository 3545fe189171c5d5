import json

import numpy as np
import pytest

from latentshape.metrics import (MetricReport, energy_distance, hoyer_score,
                                 mc_kl, mode_stats)


# -- hoyer ------------------------------------------------------------------

def test_hoyer_frozen_value():
    # rows (3,4) and (-3,4): stds are equal so normalization cancels;
    # per-row score (sqrt(2) - 7/5) / (sqrt(2) - 1)
    z = np.array([[3.0, 4.0], [-3.0, 4.0]])
    assert abs(hoyer_score(z) - 0.4865495857663417) < 1e-15


def test_hoyer_one_hot_is_one():
    rows = np.zeros((6, 4))
    rows[np.arange(6), [0, 1, 2, 3, 0, 1]] = np.array(
        [1.0, -2.0, 3.0, 0.5, 2.0, 1.0])
    assert hoyer_score(rows) == 1.0


def test_hoyer_dense_uniform_is_zero():
    rows = np.array([[1.0, 1.0, 1.0], [-1.0, 1.0, -1.0], [1.0, -1.0, 1.0],
                     [-1.0, -1.0, -1.0]])
    assert abs(hoyer_score(rows)) < 1e-12


def test_hoyer_scale_invariance():
    z = np.random.default_rng(0).normal(size=(50, 6))
    assert abs(hoyer_score(z) - hoyer_score(1e6 * z)) < 1e-12
    assert abs(hoyer_score(z) - hoyer_score(1e-6 * z)) < 1e-12


def test_hoyer_per_dimension_standardization():
    """A dimension with huge scale must not dominate once standardized."""
    z = np.random.default_rng(1).normal(size=(200, 3))
    scaled = z * np.array([1.0, 1e8, 1e-8])
    assert abs(hoyer_score(z) - hoyer_score(scaled)) < 1e-9


def test_hoyer_zero_rows_and_constant_dims():
    # first dim is constant zero (std treated as 1); rows score 0 (all-zero)
    # and 1 (one-hot), so the mean is exactly one half
    z = np.array([[0.0, 0.0], [0.0, 5.0]])
    assert hoyer_score(z) == 0.5
    cz = np.array([[5.0, 1.0], [5.0, -1.0]])  # constant nonzero dim
    assert np.isfinite(hoyer_score(cz))


def test_hoyer_validation():
    with pytest.raises(ValueError, match="matrix"):
        hoyer_score(np.zeros(3))
    with pytest.raises(ValueError, match="at least one row"):
        hoyer_score(np.zeros((0, 3)))
    with pytest.raises(ValueError, match="D < 2"):
        hoyer_score(np.zeros((3, 1)))


# -- energy distance --------------------------------------------------------

def test_energy_distance_hand_value():
    a = np.array([[0.0], [0.0]])
    b = np.array([[1.0], [1.0]])
    # cross mean 1, within means 0 -> 2*1 - 0 - 0
    assert energy_distance(a, b) == 2.0


def test_energy_distance_self_is_nonpositive():
    """With within-set means over ordered pairs i != j, the self distance is
    2S/n^2 - 2S/(n(n-1)) <= 0, not exactly zero."""
    x = np.random.default_rng(2).normal(size=(40, 3))
    n = len(x)
    s = np.sqrt(((x[:, None] - x[None]) ** 2).sum(2)).sum()
    expected = 2 * s / n**2 - 2 * s / (n * (n - 1))
    got = energy_distance(x, x)
    assert got <= 1e-12
    assert abs(got - expected) < 1e-12


def test_energy_distance_symmetry():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(30, 2)), rng.normal(size=(45, 2)) + 1.0
    assert abs(energy_distance(a, b) - energy_distance(b, a)) < 1e-12


def test_energy_distance_separates_distributions():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(200, 2))
    near = rng.normal(size=(200, 2))
    far = rng.normal(size=(200, 2)) + 3.0
    assert energy_distance(a, far) > energy_distance(a, near)


def test_energy_distance_chunking_matches_direct():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(150, 2)), rng.normal(size=(130, 2))
    direct = (2 * np.sqrt(((a[:, None] - b[None]) ** 2).sum(2)).mean()
              - np.sqrt(((a[:, None] - a[None]) ** 2).sum(2)).sum() / (150 * 149)
              - np.sqrt(((b[:, None] - b[None]) ** 2).sum(2)).sum() / (130 * 129))
    assert abs(energy_distance(a, b) - direct) < 1e-12


def test_energy_distance_singletons_contribute_no_within_term():
    a = np.array([[0.0, 0.0]])
    b = np.array([[3.0, 4.0]])
    assert energy_distance(a, b) == 10.0


def test_energy_distance_validation():
    with pytest.raises(ValueError, match="dimension mismatch"):
        energy_distance(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError, match="nonempty"):
        energy_distance(np.zeros((0, 2)), np.zeros((3, 2)))


# -- monte carlo KL ---------------------------------------------------------

def _normal_logpdf(mu, sigma):
    def f(x):
        return (-0.5 * ((x[:, 0] - mu) / sigma) ** 2
                - np.log(sigma) - 0.5 * np.log(2 * np.pi))
    return f


def test_mc_kl_agrees_with_closed_form():
    # KL(N(1, 0.5^2) || N(0, 1)) = 0.8181471805599453
    rng = np.random.default_rng(6)
    mean, err = mc_kl(_normal_logpdf(1.0, 0.5), _normal_logpdf(0.0, 1.0),
                      lambda n: 1.0 + 0.5 * rng.normal(size=(n, 1)),
                      200_000)
    assert abs(mean - 0.8181471805599453) < 4 * err
    assert err < 0.01


def test_mc_kl_stderr_shrinks_with_n():
    def run(n, seed):
        rng = np.random.default_rng(seed)
        return mc_kl(_normal_logpdf(0.5, 1.0), _normal_logpdf(0.0, 1.0),
                     lambda m: 0.5 + rng.normal(size=(m, 1)), n)[1]
    assert run(40_000, 7) < run(400, 7) / 5


def test_mc_kl_validation_and_failure_reporting():
    with pytest.raises(ValueError, match="n >= 100"):
        mc_kl(lambda x: x[:, 0], lambda x: x[:, 0],
              lambda n: np.zeros((n, 1)), 50)
    with pytest.raises(ValueError, match="sampler returned"):
        mc_kl(lambda x: x[:, 0], lambda x: x[:, 0],
              lambda n: np.zeros((n - 1, 1)), 200)

    def log_p_with_hole(x):
        out = np.zeros(len(x))
        out[17] = -np.inf
        return out

    with pytest.raises(FloatingPointError, match="index 17"):
        mc_kl(lambda x: np.zeros(len(x)), log_p_with_hole,
              lambda n: np.zeros((n, 1)), 200)


# -- mode accounting --------------------------------------------------------

def test_mode_stats_hand_case():
    means = np.array([[-2.0, 0.0], [2.0, 0.0]])
    samples = np.array([
        [-2.1, 0.0],   # mode 0
        [-1.8, 0.1],   # mode 0
        [2.0, 0.05],   # mode 1
        [0.0, 0.0],    # 2.0 from both -> uncertain at threshold 0.9
    ])
    frac, props = mode_stats(samples, means, std=0.3, band=3.0)
    assert frac == 0.25
    assert np.allclose(props, [2 / 3, 1 / 3])


def test_mode_stats_boundary_is_inclusive():
    means = np.array([[0.0]])
    frac, props = mode_stats(np.array([[1.0]]), means, std=0.5, band=2.0)
    assert frac == 0.0 and props[0] == 1.0
    frac, _ = mode_stats(np.array([[1.0000001]]), means, std=0.5, band=2.0)
    assert frac == 1.0


def test_mode_stats_nothing_confident():
    frac, props = mode_stats(np.array([[50.0, 50.0]]),
                             np.array([[0.0, 0.0]]), std=0.1)
    assert frac == 1.0
    assert np.array_equal(props, [0.0])


def test_mode_stats_validation():
    with pytest.raises(ValueError, match="dimension"):
        mode_stats(np.zeros((3, 2)), np.zeros((2, 3)), std=1.0)
    with pytest.raises(ValueError, match="positive"):
        mode_stats(np.zeros((3, 2)), np.zeros((2, 2)), std=0.0)
    with pytest.raises(ValueError, match="positive"):
        mode_stats(np.zeros((3, 2)), np.zeros((2, 2)), std=1.0, band=-1.0)


# -- report record ----------------------------------------------------------

def test_metric_report_json_shape():
    rec = MetricReport("hoyer", 0.5, 100)
    parsed = json.loads(rec.to_json())
    assert parsed == {"name": "hoyer", "value": 0.5, "n": 100}
    rec2 = MetricReport("energy", 0.1, 50, stderr=0.02, details={"seed": 3})
    parsed2 = json.loads(rec2.to_json())
    assert parsed2["stderr"] == 0.02 and parsed2["details"] == {"seed": 3}
    # keys come out sorted so reports diff cleanly
    assert rec2.to_json().index('"details"') < rec2.to_json().index('"name"')
