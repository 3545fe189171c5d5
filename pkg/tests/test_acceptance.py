"""End-to-end acceptance criteria.

One test per criterion, each asserting the stated tolerance and printing a
single line with the measured values (visible with -s or on failure).  The
training-based criteria pin every seed, so the whole file is deterministic;
expect roughly twenty minutes on a single CPU core.
"""

import json
import os
import time

import numpy as np

import latentshape.autodiff as ad
from latentshape.autodiff import Tensor, finite_diff_check
from latentshape.cli import main as cli_main
from latentshape.data import gen_synthetic, MogSpec
from latentshape.divergence import (GaussianSpec, InvertibleTestMap,
                                    check_affine_invariance,
                                    check_elbo_equivalence,
                                    check_marginal_inequality)
from latentshape.mappings import make_mapping
from latentshape.metrics import energy_distance, hoyer_score, mode_stats
from latentshape.rng import Rng, derive_seed
from latentshape.vae import (TrainConfig, VaeModel, generate, represent,
                             train)


def _report(num, ok, detail):
    line = f"criterion {num:02d}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line, flush=True)
    return line


# -- 1: gradient suite ------------------------------------------------------

_SMOOTH = [
    ad.tanh,
    ad.sigmoid,
    lambda t: ad.exp(0.3 * t),
    lambda t: ad.log(ad.sigmoid(t) + 0.5),
    lambda t: ad.power(t * t + 0.5, 0.7),
    ad.sin,
    lambda t: ad.relu(t + 0.25),
    lambda t: ad.softmax(t),
    lambda t: t * ad.sigmoid(t),
    ad.cos,
]


def _random_graph(i):
    rng = np.random.default_rng(1000 + i)
    m, k, n, p = rng.integers(2, 5, size=4)
    first, second = rng.integers(0, len(_SMOOTH), size=2)
    inputs = {"x": rng.normal(size=(m, k)),
              "w1": rng.normal(size=(k, n)) / np.sqrt(k),
              "w2": rng.normal(size=(n, p)) / np.sqrt(n)}
    reduce_mean = bool(rng.integers(0, 2))

    def fn(t):
        h = _SMOOTH[first](t["x"] @ t["w1"])
        h = _SMOOTH[second](h @ t["w2"])
        sq = h * h
        return ad.tmean(sq) if reduce_mean else ad.tsum(sq)

    return fn, inputs


def test_criterion_01_gradient_suite():
    start = time.monotonic()
    worst = 0.0
    for i in range(50):
        fn, inputs = _random_graph(i)
        worst = max(worst, finite_diff_check(fn, inputs))
    ok = worst < 1e-4
    detail = (f"50 composed graphs, max relative gradient error "
              f"{worst:.3e} (< 1e-4) [{time.monotonic() - start:.1f}s]")
    assert ok, _report(1, ok, detail)
    _report(1, ok, detail)


# -- 2: invariance equality -------------------------------------------------

def test_criterion_02_affine_invariance_and_route_equivalence():
    start = time.monotonic()
    rng = Rng(derive_seed(0, "accept", "affine"))
    worst = 0.0
    for _ in range(100):
        d = 2 + int(rng.integers_below(3, 1)[0])
        lq = np.tril(rng.normals(d * d).reshape(d, d)) * 0.5
        lp = np.tril(rng.normals(d * d).reshape(d, d)) * 0.5
        np.fill_diagonal(lq, np.abs(np.diagonal(lq)) + 0.5)
        np.fill_diagonal(lp, np.abs(np.diagonal(lp)) + 0.5)
        q = GaussianSpec(2.0 * rng.normals(d), lq @ lq.T)
        p = GaussianSpec(2.0 * rng.normals(d), lp @ lp.T)
        while True:
            a_mat = rng.normals(d * d).reshape(d, d)
            if abs(np.linalg.det(a_mat)) > 0.1:
                break
        _, _, delta = check_affine_invariance(q, p, a_mat, rng.normals(d))
        worst = max(worst, delta)

    model = VaeModel.build(dim_x=2, dim_latent=2, hidden=[8, 8],
                           seed=derive_seed(0, "accept", "toy"))
    res = check_elbo_equivalence(
        model, InvertibleTestMap("smooth_elementwise", a=0.5),
        np.array([[0.3, -0.2]]), n_mc=100000,
        seed=derive_seed(0, "accept", "mc"))
    ok = worst < 1e-9 and abs(res.delta) < 3.0 * res.stderr
    detail = (f"affine max |delta| {worst:.2e} (< 1e-9); route delta "
              f"{res.delta:+.5f} vs 3*stderr {3 * res.stderr:.5f} "
              f"[{time.monotonic() - start:.1f}s]")
    assert ok, _report(2, ok, detail)
    _report(2, ok, detail)


# -- 3: marginalization inequality ------------------------------------------

def test_criterion_03_marginal_inequality():
    start = time.monotonic()
    rng = Rng(derive_seed(0, "accept", "marginal"))
    violations = 0
    strict_ok = True
    informative = 0
    for _ in range(1000):
        d = 2 + int(rng.integers_below(7, 1)[0])
        q = GaussianSpec(rng.normals(d), np.exp(rng.normals(d)))
        keep = sorted(set(rng.integers_below(d, max(1, d // 2)).tolist()))
        if len(keep) == d:
            keep = keep[:-1]
        kl_m, kl_f = check_marginal_inequality(q, keep)
        if kl_m > kl_f:
            violations += 1
        if kl_f - kl_m > 1e-6:
            informative += 1
            if not kl_m < kl_f:
                strict_ok = False
    ok = violations == 0 and strict_ok
    detail = (f"1000 diagonal Gaussians, {violations} violations; strict on "
              f"all {informative} informative drops "
              f"[{time.monotonic() - start:.1f}s]")
    assert ok, _report(3, ok, detail)
    _report(3, ok, detail)


# -- 4: sparsity score exactness --------------------------------------------

def test_criterion_04_hoyer_exactness():
    one_hot = np.tile(np.eye(4), (3, 1))
    dense = np.tile(np.array([[0.5, 0.5, 0.5, 0.5],
                              [-0.5, -0.5, -0.5, -0.5]]), (2, 1))
    h1 = hoyer_score(one_hot)
    h0 = hoyer_score(dense)
    scale_gap = abs(hoyer_score(one_hot * 1e6) - h1)
    ok = abs(h1 - 1.0) < 1e-9 and abs(h0) < 1e-9 and scale_gap < 1e-12
    detail = (f"one-hot rows {h1:.12f} (=1), dense rows {h0:.1e} (=0), "
              f"scale drift {scale_gap:.1e} (< 1e-12)")
    assert ok, _report(4, ok, detail)
    _report(4, ok, detail)


# -- 5: circle topology -----------------------------------------------------

def test_criterion_05_circle_topology():
    start = time.monotonic()
    data = gen_synthetic("circle", 10000, seed=1).samples
    held = gen_synthetic("circle", 5000, seed=101).samples
    wins = 0
    drifts = []
    lines = []
    for s in range(5):
        eds = {}
        for kind in ("radial", "identity"):
            m = VaeModel.build(dim_x=2, dim_latent=2, mapping_kind=kind,
                               hidden=[10, 10, 10], sigma_x=0.1,
                               seed=derive_seed(s, "model", kind))
            train(m, data, TrainConfig(epochs=200, batch_size=50, seed=s))
            samples, _ = generate(m, 5000, seed=1000 + s)
            eds[kind] = energy_distance(samples, held)
            if kind == "radial":
                z = represent(m, held)
                drifts.append(float(np.mean(
                    np.abs(np.linalg.norm(z, axis=1) - 1.0))))
        wins += eds["radial"] < eds["identity"]
        lines.append(f"seed {s} {eds['radial']:.5f}v{eds['identity']:.5f}")
    drift = max(drifts)
    ok = wins >= 4 and drift < 1e-2
    detail = (f"radial beats identity {wins}/5 (need >= 4); max mean "
              f"||z|-1| {drift:.2e} (< 1e-2); {'; '.join(lines)} "
              f"[{time.monotonic() - start:.0f}s]")
    assert ok, _report(5, ok, detail)
    _report(5, ok, detail)


# -- 6: two-cluster mixture gap ---------------------------------------------

_MOG_MEANS = np.array([[-2.0, 0.0], [2.0, 0.0]])


def test_criterion_06_mixture_uncertain_fraction():
    start = time.monotonic()
    data = gen_synthetic("mog", 4000, seed=2).samples
    wins = 0
    prop_ok = True
    lines = []
    for s in range(5):
        frac = {}
        for kind in ("clustered", "identity"):
            m = VaeModel.build(dim_x=2, dim_latent=1, mapping_kind=kind,
                               hidden=[32, 32], sigma_x=0.3,
                               seed=derive_seed(s, "model", kind))
            train(m, data, TrainConfig(epochs=600, seed=s))
            samples, _ = generate(m, 5000, seed=500 + s)
            frac[kind], props = mode_stats(samples, _MOG_MEANS, 0.3,
                                           band=3.0)
            if kind == "clustered":
                prop_ok = prop_ok and bool(np.all(np.abs(props - 0.5) < 0.1))
        wins += frac["clustered"] < frac["identity"]
        lines.append(f"seed {s} {frac['clustered']:.4f}v{frac['identity']:.4f}")
    ok = wins >= 4 and prop_ok
    detail = (f"clustered beats identity {wins}/5 (need >= 4); per-mode "
              f"proportions within 0.1 of 0.5: {prop_ok}; "
              f"{'; '.join(lines)} [{time.monotonic() - start:.0f}s]")
    assert ok, _report(6, ok, detail)
    _report(6, ok, detail)


# -- 7: learnable cluster proportions ---------------------------------------

def test_criterion_07_learned_minority_proportion():
    start = time.monotonic()
    spec = MogSpec(weights=np.array([0.25, 0.75]))
    data = gen_synthetic("mog", 4000, seed=3, mog=spec).samples
    minorities = []
    for s in range(3):
        m = VaeModel.build(dim_x=2, dim_latent=2, mapping_kind="clustered",
                           mapping_options={"factors": [2],
                                            "learn_proportions": True},
                           hidden=[32, 32], sigma_x=0.3,
                           seed=derive_seed(s, "model", "clustered"))
        train(m, data, TrainConfig(epochs=2000, seed=s))
        samples, _ = generate(m, 5000, seed=500 + s)
        _, props = mode_stats(samples, _MOG_MEANS, 0.3, band=3.0)
        minorities.append(float(np.min(props)))
    median = float(np.median(minorities))
    ok = abs(median - 0.25) <= 0.10
    detail = (f"generated minority proportions {np.round(minorities, 3)}, "
              f"median {median:.3f} within 0.25 +/- 0.10 "
              f"[{time.monotonic() - start:.0f}s]")
    assert ok, _report(7, ok, detail)
    _report(7, ok, detail)


# -- 8 & 9: sparsity regularizer --------------------------------------------

def _sparse_data():
    data = gen_synthetic("sparse2d", 4000, seed=4).samples
    held = gen_synthetic("sparse2d", 2000, seed=104).samples
    return data, held


def _sparse_run(kind, gamma, sigma_x, beta, selector, data, held):
    m = VaeModel.build(dim_x=2, dim_latent=6, mapping_kind=kind,
                       mapping_options=({"selector_hidden": selector}
                                        if kind == "sparse" else None),
                       hidden=[10, 10, 10], sigma_x=sigma_x,
                       seed=derive_seed(0, "model", kind))
    train(m, data, TrainConfig(epochs=300, seed=0, gamma_sparsity=gamma,
                               beta_kl=beta))
    z = represent(m, held)
    decoded = m.decode(Tensor(z))
    recon = float(np.mean(m.recon_log_lik(Tensor(held), decoded).value))
    return hoyer_score(z), recon


def test_criterion_08_sparsity_monotone_with_cheap_recon():
    start = time.monotonic()
    data, held = _sparse_data()
    h0, r0 = _sparse_run("sparse", 0.0, 0.1, 1.0, [32], data, held)
    h30, r30 = _sparse_run("sparse", 30.0, 0.1, 1.0, [32], data, held)
    gap = h30 - h0
    degradation = (r0 - r30) / abs(r0)
    ok = gap > 0.10 and degradation < 0.20
    detail = (f"sparse-map Hoyer {h0:.4f}->{h30:.4f} (gap {gap:+.4f} > 0.10); "
              f"recon {r0:.4f}->{r30:.4f} (degradation {degradation:+.2%} "
              f"< 20%) [{time.monotonic() - start:.0f}s]")
    assert ok, _report(8, ok, detail)
    _report(8, ok, detail)


def test_criterion_09_regularizer_alone_is_insufficient():
    # strong KL pricing: silencing an identity coordinate costs KL, while the
    # sparse map's gates are free, so only the latter can move under gamma
    start = time.monotonic()
    data, held = _sparse_data()
    runs = {(kind, gamma): _sparse_run(kind, gamma, 0.05, 8.0, [16],
                                       data, held)
            for kind in ("sparse", "identity") for gamma in (0.0, 30.0)}
    ident_change = abs(runs["identity", 30.0][0] - runs["identity", 0.0][0])
    sparse_change = runs["sparse", 30.0][0] - runs["sparse", 0.0][0]
    ok = ident_change < 0.05 and sparse_change > 0.10
    detail = (f"identity Hoyer change {ident_change:.4f} (< 0.05) vs "
              f"sparse-map change {sparse_change:+.4f} (> 0.10) "
              f"[{time.monotonic() - start:.0f}s]")
    assert ok, _report(9, ok, detail)
    _report(9, ok, detail)


# -- 10: hierarchical causal ordering ---------------------------------------

def _image(mapping, pts):
    z, _ = mapping.apply(Tensor(np.atleast_2d(np.asarray(pts, float))))
    return z.value


def test_criterion_10_hierarchical_block_triangularity():
    start = time.monotonic()
    worst = 0.0
    rng = np.random.default_rng(77)
    for trial in range(20):
        blocks = [int(b) for b in rng.integers(1, 3, size=rng.integers(2, 4))]
        dim = sum(blocks)
        mapping = make_mapping("hierarchical", dim,
                               Rng(derive_seed(trial, "accept", "hier")),
                               layer_dims=blocks)
        y = rng.normal(size=(1, dim))
        h = 1e-6
        jac = np.zeros((dim, dim))
        for j in range(dim):
            up, dn = y.copy(), y.copy()
            up[0, j] += h
            dn[0, j] -= h
            jac[:, j] = (_image(mapping, up) - _image(mapping, dn))[0] \
                / (2 * h)
        starts = np.cumsum([0] + blocks)
        for bi in range(len(blocks)):
            for bj in range(bi + 1, len(blocks)):
                block = jac[starts[bi]:starts[bi + 1],
                            starts[bj]:starts[bj + 1]]
                worst = max(worst, float(np.max(np.abs(block))))
    ok = worst < 1e-6
    detail = (f"20 random models, max |dz_i/dy_j| above the diagonal "
              f"{worst:.2e} (< 1e-6) [{time.monotonic() - start:.1f}s]")
    assert ok, _report(10, ok, detail)
    _report(10, ok, detail)


# -- 11: fold identification ------------------------------------------------

def test_criterion_11_glue_identifies_the_pole_pair():
    unit = make_mapping("glue", 2, Rng(0))
    top = _image(unit, [0.0, 1e8])[0]
    bottom = _image(unit, [0.0, -1e8])[0]
    gap_unit = float(np.linalg.norm(top - bottom))

    # continuity: perturbing the direction around either pole moves the
    # image only O(sqrt(eps)) away from the shared point
    eps = 1e-7
    target = np.array([0.0, -1.0 / np.sqrt(3.0)])
    pert_gap = 0.0
    for pole in (1.0, -1.0):
        for dx in (eps, -eps):
            img = _image(unit, [dx * 1e6, pole * 1e6])[0]
            pert_gap = max(pert_gap, float(np.linalg.norm(img - target)))

    wide = make_mapping("glue", 2, Rng(0), variant="wide")
    wtop = _image(wide, [0.0, 1e8])[0]
    wbottom = _image(wide, [0.0, -1e8])[0]
    gap_wide = float(np.linalg.norm(wtop - wbottom))

    readme = open(os.path.join(os.path.dirname(__file__), os.pardir,
                               "README.md")).read()
    documented = 'variant="unit"' in readme and 'variant="wide"' in readme
    ok = (gap_unit < 1e-9 and pert_gap < 1e-3
          and abs(gap_wide - 2.0 / np.sqrt(3.0)) < 1e-3 and documented)
    detail = (f"unit-variant pole gap {gap_unit:.1e} (< 1e-9), pole "
              f"perturbation drift {pert_gap:.1e} (< 1e-3), wide-variant "
              f"gap {gap_wide:.6f} (= 2/sqrt(3)), documented in README: "
              f"{documented}")
    assert ok, _report(11, ok, detail)
    _report(11, ok, detail)


# -- 12: pipeline determinism -----------------------------------------------

def test_criterion_12_pipeline_byte_determinism(tmp_path):
    start = time.monotonic()
    blobs = []
    for tag in ("first", "second"):
        root = tmp_path / tag
        root.mkdir()
        data = str(root / "data.csv")
        run = str(root / "run")
        gen = str(root / "generated.csv")
        lat = str(root / "latents.csv")
        metrics = str(root / "metrics.jsonl")
        cfg = str(root / "cfg.json")
        with open(cfg, "w") as f:
            json.dump({
                "schema_version": 1,
                "dataset": {"csv": data},
                "model": {"dim_latent": 2, "hidden": [16, 16],
                          "sigma_x": 0.3, "mapping": {"kind": "radial"}},
                "train": {"epochs": 25, "batch_size": 100, "seed": 0},
            }, f)
        assert cli_main(["gen-data", "--shape", "mog", "--n", "400",
                         "--seed", "2", "--out", data, "--no-plot"]) == 0
        assert cli_main(["train", "--config", cfg, "--out-dir", run,
                         "--no-plot"]) == 0
        ckpt = os.path.join(run, "checkpoint.json")
        assert cli_main(["generate", "--checkpoint", ckpt, "--n", "300",
                         "--seed", "7", "--out", gen, "--latents-out", lat,
                         "--no-plot"]) == 0
        assert cli_main(["eval", "--checkpoint", ckpt,
                         "--data", data, "--metrics", "hoyer,energy",
                         "--gen-n", "500", "--out", metrics,
                         "--no-plot"]) == 0
        blobs.append(tuple(
            open(p, "rb").read()
            for p in (data, ckpt,
                      os.path.join(run, "train_report.json"),
                      gen, lat, metrics)))
    ok = blobs[0] == blobs[1]
    detail = (f"gen-data->train->generate->eval repeated: all CSV/JSON "
              f"outputs byte-identical: {ok} "
              f"[{time.monotonic() - start:.0f}s]")
    assert ok, _report(12, ok, detail)
    _report(12, ok, detail)
