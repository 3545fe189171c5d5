"""Command line interface.

Subcommands: gen-data, train, generate, eval, check-theorem, sweep.
Runs are config-driven (JSON with a schema_version field) with individual
flag overrides.  All file outputs are append-never: an existing path makes
the command fail unless --force is given.  Exit codes: 0 success, 2 usage
or config errors, 1 runtime failures.  Report paths write PNG figures next
to the CSV/JSON outputs; --no-plot suppresses them.  The environment
variable INTEL_LATENT_THREADS caps sweep worker processes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import data as dat
from . import metrics as met
from . import vae
from .divergence import (GaussianSpec, InvertibleTestMap,
                         check_affine_invariance, check_elbo_equivalence,
                         check_marginal_inequality, kl_gaussian_closed_form)
from .rng import Rng, derive_seed

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class OutputExists(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# config handling

_TOP_KEYS = {"schema_version", "dataset", "model", "train"}
_DATASET_KEYS = {"shape", "n", "seed", "noise_std", "star_points", "mog",
                 "csv", "idx"}
_MODEL_KEYS = {"dim_latent", "hidden", "likelihood", "sigma_x", "mapping"}
_TRAIN_KEYS = {"epochs", "batch_size", "lr", "beta_kl", "gamma_sparsity",
               "seed", "flip_sparsity_sign"}


def load_config(path: str) -> dict:
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    if "schema_version" not in cfg:
        raise ConfigError("config field 'schema_version' is missing")
    if cfg["schema_version"] != CONFIG_SCHEMA_VERSION:
        raise ConfigError(
            f"config field 'schema_version' is {cfg['schema_version']!r}; "
            f"this build reads version {CONFIG_SCHEMA_VERSION}")
    for section, keys in (("", _TOP_KEYS), ("dataset", _DATASET_KEYS),
                          ("model", _MODEL_KEYS), ("train", _TRAIN_KEYS)):
        block = cfg if section == "" else cfg.get(section, {})
        if not isinstance(block, dict):
            raise ConfigError(f"config field '{section}' must be an object")
        unknown = set(block) - keys
        if unknown:
            where = section or "top level"
            raise ConfigError(
                f"unknown config field '{sorted(unknown)[0]}' in {where}")
    return cfg


def _mog_from_config(block: dict) -> dat.MogSpec:
    spec = dat.MogSpec()
    if "means" in block:
        spec.means = np.asarray(block["means"], dtype=np.float64)
        k = spec.means.shape[0]
        spec.stds = np.full(k, 0.3)
        spec.weights = np.full(k, 1.0 / k)
    if "stds" in block:
        spec.stds = np.asarray(block["stds"], dtype=np.float64)
    if "weights" in block:
        spec.weights = np.asarray(block["weights"], dtype=np.float64)
    return spec


def dataset_from_config(block: dict) -> dat.LabeledBatch:
    sources = [k for k in ("shape", "csv", "idx") if k in block]
    if len(sources) != 1:
        raise ConfigError("config field 'dataset' needs exactly one of "
                          "'shape', 'csv', 'idx'")
    if "csv" in block:
        return dat.read_csv(block["csv"])
    if "idx" in block:
        idx = block["idx"]
        if "images" not in idx:
            raise ConfigError("config field 'dataset.idx.images' is missing")
        return dat.load_idx(
            idx["images"], classes=idx.get("classes"),
            binarize_threshold=idx.get("binarize_threshold", 0.5),
            downsample=idx.get("downsample", False),
            labels_path=idx.get("labels"))
    mog = _mog_from_config(block.get("mog", {})) if block["shape"] == "mog" \
        else None
    return dat.gen_synthetic(
        block["shape"], int(block.get("n", 1000)),
        int(block.get("seed", 0)), float(block.get("noise_std", 0.0)),
        star_points=int(block.get("star_points", 5)), mog=mog)


def model_from_config(block: dict, dim_x: int, seed: int) -> vae.VaeModel:
    mapping = dict(block.get("mapping", {"kind": "identity"}))
    kind = mapping.pop("kind", "identity")
    try:
        return vae.VaeModel.build(
            dim_x=dim_x,
            dim_latent=int(block.get("dim_latent", 2)),
            mapping_kind=kind, mapping_options=mapping,
            hidden=block.get("hidden"),
            likelihood=block.get("likelihood", "gaussian"),
            sigma_x=float(block.get("sigma_x", 0.1)),
            seed=seed)
    except ValueError as exc:
        raise ConfigError(f"config field 'model': {exc}") from exc


def train_config_from(block: dict, overrides: dict) -> vae.TrainConfig:
    merged = dict(block)
    for key, val in overrides.items():
        if val is not None:
            merged[key] = val
    try:
        return vae.TrainConfig(
            epochs=int(merged.get("epochs", 100)),
            batch_size=int(merged.get("batch_size", 100)),
            lr=float(merged.get("lr", 1e-3)),
            beta_kl=float(merged.get("beta_kl", 1.0)),
            gamma_sparsity=float(merged.get("gamma_sparsity", 0.0)),
            seed=int(merged.get("seed", 0)),
            flip_sparsity_sign=bool(merged.get("flip_sparsity_sign", False)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field 'train': {exc}") from exc


# ---------------------------------------------------------------------------
# shared plumbing

def _claim_outputs(paths: list[str], force: bool) -> None:
    for p in paths:
        if p and os.path.exists(p) and not force:
            raise OutputExists(f"refusing to overwrite {p} (use --force)")


def _write_json(payload: dict, path: str) -> None:
    with open(path, "w", newline="\n") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def _png_for(path: str, suffix: str = "") -> str:
    base, _ = os.path.splitext(path)
    return f"{base}{suffix}.png"


# ---------------------------------------------------------------------------
# subcommands

def _cmd_gen_data(args) -> int:
    mog = None
    if args.shape == "mog":
        mog = dat.MogSpec()
        if args.mog_means:
            mog.means = _parse_points(args.mog_means)
            k = mog.means.shape[0]
            mog.stds = np.full(k, 0.3)
            mog.weights = np.full(k, 1.0 / k)
        if args.mog_stds:
            mog.stds = np.asarray([float(v) for v in args.mog_stds.split(",")])
        if args.mog_weights:
            mog.weights = np.asarray(
                [float(v) for v in args.mog_weights.split(",")])
    batch = dat.gen_synthetic(args.shape, args.n, args.seed, args.noise_std,
                              star_points=args.star_points, mog=mog)
    outputs = [args.out]
    if not args.no_plot:
        outputs.append(_png_for(args.out))
    _claim_outputs(outputs, args.force)
    dat.write_csv(batch, args.out)
    if not args.no_plot:
        from . import plots
        plots.save_scatter(_png_for(args.out), batch.samples, batch.labels,
                           title=f"{args.shape} (n={args.n}, seed={args.seed})")
    print(f"wrote {args.out}: {batch.samples.shape[0]} samples, "
          f"dim {batch.samples.shape[1]}")
    return 0


def _parse_points(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip()]
    return np.asarray([[float(v) for v in r.split(",")] for r in rows])


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    batch = dataset_from_config(cfg.get("dataset", {}))
    overrides = {"epochs": args.epochs, "batch_size": args.batch_size,
                 "lr": args.lr, "beta_kl": args.beta_kl,
                 "gamma_sparsity": args.gamma, "seed": args.seed}
    tcfg = train_config_from(cfg.get("train", {}), overrides)
    model = model_from_config(cfg.get("model", {}), batch.samples.shape[1],
                              seed=derive_seed(tcfg.seed, "model"))

    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, "checkpoint.json")
    report_path = os.path.join(out_dir, "train_report.json")
    curves = os.path.join(out_dir, "train_curves.png")
    outputs = [ckpt, report_path] + ([] if args.no_plot else [curves])
    _claim_outputs(outputs, args.force)

    report = vae.train(model, batch.samples, tcfg)
    vae.save_checkpoint(model, ckpt)
    _write_json(report.to_dict(), report_path)
    if not args.no_plot:
        from . import plots
        plots.save_curves(curves, {"neg_elbo": report.neg_elbo,
                                   "kl": report.kl,
                                   "recon": report.recon},
                          ylabel="nats", title="training curves")
    last = report.neg_elbo[-1] if report.neg_elbo else float("nan")
    print(f"trained {tcfg.epochs} epochs in {report.wall_clock_s:.1f}s, "
          f"final neg ELBO {last:.4f}")
    print(f"wrote {ckpt}")
    return 0


def _cmd_generate(args) -> int:
    model = vae.load_checkpoint(args.checkpoint)
    samples, latents = vae.generate(model, args.n, args.seed)
    outputs = [args.out]
    if args.latents_out:
        outputs.append(args.latents_out)
    if not args.no_plot:
        outputs.append(_png_for(args.out))
    _claim_outputs(outputs, args.force)
    dat.write_csv(dat.LabeledBatch(samples), args.out)
    if args.latents_out:
        dat.write_csv(dat.LabeledBatch(latents), args.latents_out)
    if not args.no_plot:
        from . import plots
        plots.save_scatter(_png_for(args.out), samples,
                           title=f"generated (n={args.n}, seed={args.seed})")
    print(f"wrote {args.out}: {args.n} samples")
    return 0


def _cmd_eval(args) -> int:
    model = vae.load_checkpoint(args.checkpoint)
    batch = dat.read_csv(args.data)
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    valid = {"hoyer", "energy", "modes"}
    unknown = set(wanted) - valid
    if unknown:
        raise ConfigError(f"unknown metric {sorted(unknown)[0]!r}; "
                          f"choose from {sorted(valid)}")
    outputs = [args.out]
    if not args.no_plot:
        outputs.append(_png_for(args.out, "_samples"))
        outputs.append(_png_for(args.out, "_latents"))
    _claim_outputs(outputs, args.force)

    gen_samples, gen_latents = vae.generate(model, args.gen_n, args.gen_seed)
    reports: list[met.MetricReport] = []
    if "hoyer" in wanted:
        reps = vae.represent(model, batch.samples)
        reports.append(met.MetricReport(
            "hoyer_representations", met.hoyer_score(reps), len(reps)))
    if "energy" in wanted:
        value = met.energy_distance(gen_samples, batch.samples)
        reports.append(met.MetricReport(
            "energy_distance_generated_vs_data", value,
            len(gen_samples), details={"n_data": len(batch.samples)}))
    if "modes" in wanted:
        if not args.mode_means:
            raise ConfigError("--mode-means is required for the modes metric")
        means = _parse_points(args.mode_means)
        frac, props = met.mode_stats(gen_samples, means, args.mode_std,
                                     args.band)
        reports.append(met.MetricReport(
            "mode_uncertain_fraction", frac, len(gen_samples),
            details={"proportions": [float(p) for p in props],
                     "band": args.band, "std": args.mode_std}))
    with open(args.out, "w", newline="\n") as f:
        for rep in reports:
            f.write(rep.to_json() + "\n")
    if not args.no_plot:
        from . import plots
        plots.save_overlay(_png_for(args.out, "_samples"), batch.samples,
                           gen_samples, "data", "generated",
                           title="data vs generated")
        plots.save_scatter(_png_for(args.out, "_latents"), gen_latents,
                           title="generated latents")
    for rep in reports:
        print(rep.to_json())
    return 0


def _cmd_check_theorem(args) -> int:
    rng = Rng(derive_seed(args.seed, "theorem"))
    lines = []
    ok = True

    worst = 0.0
    for _ in range(args.pairs):
        d = 2 + int(rng.integers_below(3, 1)[0])
        mu_q = 2.0 * rng.normals(d)
        mu_p = 2.0 * rng.normals(d)
        lq = np.tril(rng.normals(d * d).reshape(d, d)) * 0.5
        lp = np.tril(rng.normals(d * d).reshape(d, d)) * 0.5
        np.fill_diagonal(lq, np.abs(np.diagonal(lq)) + 0.5)
        np.fill_diagonal(lp, np.abs(np.diagonal(lp)) + 0.5)
        q = GaussianSpec(mu_q, lq @ lq.T)
        p = GaussianSpec(mu_p, lp @ lp.T)
        while True:
            a_mat = rng.normals(d * d).reshape(d, d)
            if abs(np.linalg.det(a_mat)) > 0.1:
                break
        b_vec = rng.normals(d)
        _, _, delta = check_affine_invariance(q, p, a_mat, b_vec)
        worst = max(worst, delta)
    lines.append(met.MetricReport("affine_invariance_max_delta", worst,
                                  args.pairs).to_json())

    violations = 0
    strict_ok = True
    for _ in range(args.gaussians):
        d = 2 + int(rng.integers_below(7, 1)[0])
        mu = rng.normals(d)
        sd = np.exp(0.5 * rng.normals(d))
        q = GaussianSpec(mu, sd ** 2)
        keep = sorted(set(rng.integers_below(d, max(1, d // 2)).tolist()))
        if len(keep) == d:
            keep = keep[:-1]
        kl_m, kl_f = check_marginal_inequality(q, keep)
        if kl_m > kl_f:
            violations += 1
        dropped = [i for i in range(d) if i not in set(keep)]
        dropped_kl = kl_f - kl_m
        if dropped_kl > 1e-6 and not kl_m < kl_f:
            strict_ok = False
    ok = ok and violations == 0 and strict_ok
    lines.append(met.MetricReport(
        "marginal_inequality_violations", float(violations), args.gaussians,
        details={"strict_when_informative": strict_ok}).to_json())

    model = vae.VaeModel.build(dim_x=2, dim_latent=2, hidden=[8, 8],
                               seed=derive_seed(args.seed, "toy"))
    x = np.array([[0.3, -0.2]])
    try:
        res = check_elbo_equivalence(
            model, InvertibleTestMap("smooth_elementwise", a=0.5), x,
            n_mc=args.n_mc, seed=derive_seed(args.seed, "mc"))
        lines.append(met.MetricReport(
            "elbo_route_delta", res.delta, args.n_mc, stderr=res.stderr,
            details={"elbo_y_route": res.elbo_y_route,
                     "elbo_z_route": res.elbo_z_route}).to_json())
    except AssertionError as exc:
        ok = False
        lines.append(json.dumps({"name": "elbo_route_delta",
                                 "error": str(exc)}))

    sanity = kl_gaussian_closed_form(
        GaussianSpec(np.zeros(2), 4.0 * np.ones(2)),
        GaussianSpec(np.zeros(2), np.ones(2)))
    lines.append(met.MetricReport("kl_closed_form_reference", sanity, 1,
                                  details={"expected": 3.0 - 2.0 * np.log(2.0)}
                                  ).to_json())

    if args.out:
        _claim_outputs([args.out], args.force)
        with open(args.out, "w", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0 if ok else 1


def _sweep_one(payload: tuple) -> dict:
    config_path, gamma, seed, out_dir, no_plot = payload
    cfg = load_config(config_path)
    batch = dataset_from_config(cfg.get("dataset", {}))
    tcfg = train_config_from(cfg.get("train", {}),
                             {"gamma_sparsity": gamma, "seed": seed})
    model = model_from_config(cfg.get("model", {}), batch.samples.shape[1],
                              seed=derive_seed(seed, "model"))
    run_dir = os.path.join(out_dir, f"gamma_{gamma:g}_seed_{seed}")
    os.makedirs(run_dir, exist_ok=True)
    report = vae.train(model, batch.samples, tcfg)
    vae.save_checkpoint(model, os.path.join(run_dir, "checkpoint.json"))
    _write_json(report.to_dict(), os.path.join(run_dir, "train_report.json"))
    reps = vae.represent(model, batch.samples)
    row = {"gamma": gamma, "seed": seed,
           "hoyer": met.hoyer_score(reps),
           "recon_ll": report.recon[-1] if report.recon else float("nan"),
           "neg_elbo": report.neg_elbo[-1] if report.neg_elbo else float("nan")}
    if not no_plot:
        from . import plots
        plots.save_curves(os.path.join(run_dir, "train_curves.png"),
                          {"neg_elbo": report.neg_elbo, "kl": report.kl,
                           "recon": report.recon},
                          ylabel="nats",
                          title=f"gamma={gamma:g} seed={seed}")
    return row


def _cmd_sweep(args) -> int:
    gammas = [float(g) for g in args.gammas.split(",") if g.strip()]
    if not gammas:
        raise ConfigError("--gammas needs at least one value")
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    load_config(args.config)  # validate before any work
    os.makedirs(args.out_dir, exist_ok=True)
    summary = os.path.join(args.out_dir, "sweep_summary.csv")
    figure = os.path.join(args.out_dir, "sweep_hoyer.png")
    outputs = [summary] + ([] if args.no_plot else [figure])
    _claim_outputs(outputs, args.force)

    jobs = [(args.config, g, s, args.out_dir, args.no_plot)
            for g in gammas for s in seeds]
    workers = args.jobs
    cap = os.environ.get("INTEL_LATENT_THREADS")
    if cap is not None:
        try:
            workers = max(1, min(workers, int(cap)))
        except ValueError as exc:
            raise ConfigError(
                f"INTEL_LATENT_THREADS must be an integer, got {cap!r}"
            ) from exc
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]

    cols = ["gamma", "seed", "hoyer", "recon_ll", "neg_elbo"]
    with open(summary, "w", newline="\n") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(
                str(int(row[c])) if c == "seed" else format(row[c], ".17g")
                for c in cols) + "\n")
    if not args.no_plot:
        from . import plots
        by_seed = {}
        for row in rows:
            by_seed.setdefault(row["seed"], {})[row["gamma"]] = row["hoyer"]
        series = {f"seed {s}": [vals[g] for g in gammas]
                  for s, vals in sorted(by_seed.items())}
        plots.save_xy(figure, gammas, series, xlabel="gamma",
                      ylabel="hoyer", title="sparsity sweep")
    print(f"wrote {summary} ({len(rows)} runs)")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentshape",
        description="Train and probe VAEs with shaped latent spaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--force", action="store_true",
                       help="overwrite existing output files")
        p.add_argument("--no-plot", action="store_true",
                       help="skip PNG figure output")

    p = sub.add_parser("gen-data", help="sample a synthetic dataset to CSV")
    p.add_argument("--shape", required=True, choices=dat.SHAPES)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--star-points", type=int, default=5)
    p.add_argument("--mog-means", help="semicolon-separated points, "
                   "e.g. '-2,0;2,0'")
    p.add_argument("--mog-stds", help="comma-separated stds per component")
    p.add_argument("--mog-weights", help="comma-separated mixture weights")
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--beta-kl", type=float)
    p.add_argument("--gamma", type=float, help="sparsity regularizer weight")
    p.add_argument("--seed", type=int)
    add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("generate", help="sample from a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--latents-out")
    add_common(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("eval", help="score a checkpoint against a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="CSV dataset")
    p.add_argument("--metrics", default="hoyer,energy")
    p.add_argument("--gen-n", type=int, default=2000)
    p.add_argument("--gen-seed", type=int, default=12345)
    p.add_argument("--mode-means", help="mode centers for the modes metric")
    p.add_argument("--mode-std", type=float, default=0.3)
    p.add_argument("--band", type=float, default=3.0)
    p.add_argument("--out", required=True, help="JSON-lines metrics file")
    add_common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("check-theorem",
                       help="run the pushforward KL checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--gaussians", type=int, default=1000)
    p.add_argument("--n-mc", type=int, default=100000)
    p.add_argument("--out", help="optional JSON-lines report file")
    add_common(p)
    p.set_defaults(func=_cmd_check_theorem)

    p = sub.add_parser("sweep", help="train across sparsity weights")
    p.add_argument("--config", required=True)
    p.add_argument("--gammas", required=True,
                   help="comma-separated weights, e.g. '0,10,30'")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes (capped by INTEL_LATENT_THREADS)")
    p.add_argument("--out-dir", required=True)
    add_common(p)
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, vae.TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    except OutputExists as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, FloatingPointError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
