"""VAE with a deterministic map between the Gaussian latent and the decoder.

The encoder posterior and the KL term live in y-space, so the usual
closed-form Gaussian KL applies unchanged no matter which map shapes the
latent the decoder sees:

    objective(x) = E_q [ log p(x | map(y)) ] - beta * KL(q(y|x) || N(0, I))

plus an optional sparsity regularizer on the gate activations of the sparse
map (weight gamma, added to the maximized objective).

Checkpoints are versioned JSON holding the structural config and every named
parameter as decimal lists; save -> load round-trips bit-exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .mappings import Mapping, make_mapping
from .nn import Adam, Mlp
from .rng import Rng, derive_seed

LOG_STD_MIN = -6.0
LOG_STD_MAX = 2.0
BERNOULLI_EPS = 1e-7
GATE_EPS = 1e-7
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


def _entropy(v: Tensor, axis: int) -> Tensor:
    """Shannon entropy of v normalized to sum 1 along axis; v must be > 0."""
    p = ad.div(v, ad.tsum(v, axis=axis, keepdims=True))
    return ad.neg(ad.tsum(ad.mul(p, ad.log(p)), axis=axis))

def sparsity_penalty(gates: Tensor, flip: bool = False) -> Tensor:
    """Entropy gap of a gate batch (M, D): H(batch mean) - mean_i H(gates_i).

    Maximizing it drives each sample's gates toward one dominant coordinate
    while keeping usage balanced across the batch.  Gates are clamped to
    >= 1e-7 first.  flip negates the value (diagnostic orientation).
    """
    if gates.value.ndim != 2:
        raise ValueError("gates must be a (M, D) matrix")
    m = gates.value.shape[0]
    if m < 2:
        raise ValueError("sparsity penalty needs a batch of at least 2 rows")
    g = ad.clip(gates, GATE_EPS, None)
    gap = ad.sub(_entropy(ad.tmean(g, axis=0), axis=0),
                 ad.tmean(_entropy(g, axis=1)))
    return ad.neg(gap) if flip else gap


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 100
    lr: float = 1e-3
    beta_kl: float = 1.0
    gamma_sparsity: float = 0.0
    seed: int = 0
    flip_sparsity_sign: bool = False


@dataclass
class TrainReport:
    epochs: int
    neg_elbo: list = field(default_factory=list)
    kl: list = field(default_factory=list)
    recon: list = field(default_factory=list)
    penalty: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    final_params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """JSON-safe summary.  Timing is deliberately left out so repeated
        seeded runs serialize byte-identically."""
        return {
            "epochs": self.epochs,
            "neg_elbo": self.neg_elbo,
            "kl": self.kl,
            "recon": self.recon,
            "penalty": self.penalty,
        }


class VaeModel:
    def __init__(self, dim_x: int, dim_latent: int, hidden: list[int],
                 likelihood: str, sigma_x: float, mapping: Mapping,
                 encoder: Mlp, decoder: Mlp):
        if likelihood not in ("gaussian", "bernoulli"):
            raise ValueError("likelihood must be 'gaussian' or 'bernoulli'")
        if likelihood == "gaussian" and sigma_x <= 0:
            raise ValueError("gaussian likelihood needs sigma_x > 0")
        self.dim_x = dim_x
        self.dim_latent = dim_latent
        self.hidden = list(hidden)
        self.likelihood = likelihood
        self.sigma_x = sigma_x
        self.mapping = mapping
        self.encoder = encoder
        self.decoder = decoder

    @classmethod
    def build(cls, dim_x: int, dim_latent: int, mapping_kind: str = "identity",
              mapping_options: dict | None = None,
              hidden: list[int] | None = None, likelihood: str = "gaussian",
              sigma_x: float = 0.1, seed: int = 0) -> "VaeModel":
        """Construct with deterministic init: the seed is split into separate
        streams for encoder, mapping and decoder parameters."""
        if dim_x < 1 or dim_latent < 1:
            raise ValueError("dim_x and dim_latent must be >= 1")
        hidden = [10, 10, 10] if hidden is None else list(hidden)
        mapping = make_mapping(mapping_kind, dim_latent,
                               Rng(derive_seed(seed, "mapping")),
                               **(mapping_options or {}))
        encoder = Mlp([dim_x, *hidden, 2 * dim_latent],
                      Rng(derive_seed(seed, "encoder")), name="encoder")
        decoder = Mlp([mapping.dim_out, *hidden, dim_x],
                      Rng(derive_seed(seed, "decoder")), name="decoder")
        return cls(dim_x, dim_latent, hidden, likelihood, sigma_x,
                   mapping, encoder, decoder)

    # -- pieces ------------------------------------------------------------

    def encode(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Posterior mean and log-std, the latter clamped to [-6, 2]."""
        if x.value.ndim != 2 or x.value.shape[1] != self.dim_x:
            raise ValueError(f"encode expects (n, {self.dim_x}), "
                             f"got {x.value.shape}")
        h = self.encoder(x)
        mu = ad.narrow(h, 1, 0, self.dim_latent)
        log_std = ad.clip(ad.narrow(h, 1, self.dim_latent, self.dim_latent),
                          LOG_STD_MIN, LOG_STD_MAX)
        return mu, log_std

    @staticmethod
    def reparameterize(mu: Tensor, log_std: Tensor, noise: np.ndarray) -> Tensor:
        noise = np.asarray(noise, dtype=np.float64)
        if noise.shape != mu.value.shape:
            raise ValueError(f"noise shape {noise.shape} does not match "
                             f"posterior shape {mu.value.shape}")
        return ad.add(mu, ad.mul(ad.exp(log_std), Tensor(noise)))

    @staticmethod
    def kl_standard_normal(mu: Tensor, log_std: Tensor) -> Tensor:
        """Per-sample KL(N(mu, diag exp(2 log_std)) || N(0, I)), shape (n,)."""
        var = ad.exp(ad.mul(log_std, Tensor(2.0)))
        terms = ad.sub(ad.add(ad.mul(mu, mu), var),
                       ad.add(Tensor(1.0), ad.mul(log_std, Tensor(2.0))))
        return ad.mul(ad.tsum(terms, axis=1), Tensor(0.5))

    def decode(self, z: Tensor) -> Tensor:
        """Decoder output: mean for gaussian, probabilities for bernoulli."""
        out = self.decoder(z)
        if self.likelihood == "bernoulli":
            out = ad.clip(ad.sigmoid(out), BERNOULLI_EPS, 1.0 - BERNOULLI_EPS)
        return out

    def recon_log_lik(self, x: Tensor, decoded: Tensor) -> Tensor:
        """Per-sample log p(x | z), shape (n,)."""
        if self.likelihood == "gaussian":
            resid = ad.sub(x, decoded)
            sq = ad.tsum(ad.mul(resid, resid), axis=1)
            d = x.value.shape[1]
            const = d * np.log(2.0 * np.pi * self.sigma_x ** 2)
            return ad.mul(ad.add(ad.div(sq, Tensor(self.sigma_x ** 2)),
                                 Tensor(const)), Tensor(-0.5))
        if np.any((x.value < 0.0) | (x.value > 1.0)):
            raise ValueError("bernoulli likelihood needs x in [0, 1]")
        p = decoded
        ll = ad.add(ad.mul(x, ad.log(p)),
                    ad.mul(ad.sub(Tensor(1.0), x),
                           ad.log(ad.sub(Tensor(1.0), p))))
        return ad.tsum(ll, axis=1)

    def elbo_terms(self, x: Tensor, noise: np.ndarray
                   ) -> tuple[Tensor, Tensor, Tensor | None, Tensor]:
        """Single-draw ELBO pieces: (recon, kl) per sample, gates, z."""
        mu, log_std = self.encode(x)
        y = self.reparameterize(mu, log_std, noise)
        z, gates = self.mapping.apply(y)
        recon = self.recon_log_lik(x, self.decode(z))
        kl = self.kl_standard_normal(mu, log_std)
        return recon, kl, gates, z

    def parameters_named(self) -> list[tuple[str, Tensor]]:
        """All trainable parameters in fixed order: encoder, mapping, decoder."""
        params = (self.encoder.parameters() + self.mapping.parameters()
                  + self.decoder.parameters())
        return [(p.name, p) for p in params]

    def config_dict(self) -> dict:
        return {
            "dim_x": self.dim_x,
            "dim_latent": self.dim_latent,
            "hidden": self.hidden,
            "likelihood": self.likelihood,
            "sigma_x": self.sigma_x,
            "mapping": {"kind": self.mapping.kind, **self.mapping.config},
        }


def elbo_y(model: VaeModel, x: np.ndarray, noise: np.ndarray
           ) -> tuple[float, tuple[float, float]]:
    """Single-draw ELBO for one sample or a batch (mean over the batch).

    Returns (elbo, (recon, kl)).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
    recon, kl, _, _ = model.elbo_terms(Tensor(x), noise)
    r = float(recon.value.mean())
    k = float(kl.value.mean())
    return r - k, (r, k)


def represent(model: VaeModel, x: np.ndarray) -> np.ndarray:
    """Deterministic representation: the map applied to the posterior mean."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mu, _ = model.encode(Tensor(x))
    z, _ = model.mapping.apply(mu)
    return z.value.copy()


def generate(model: VaeModel, n: int, seed: int
             ) -> tuple[np.ndarray, np.ndarray]:
    """Sample n points from the generative side.

    Draws y from N(0, I) (n * dim_latent normals, row-major), maps to z,
    decodes.  Returns (samples, z) so latent diagnostics can reuse the draw.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = Rng(seed)
    y = rng.normals(n * model.dim_latent).reshape(n, model.dim_latent)
    z, _ = model.mapping.apply(Tensor(y))
    decoded = model.decode(z)
    return decoded.value.copy(), z.value.copy()


def train(model: VaeModel, samples: np.ndarray, config: TrainConfig
          ) -> TrainReport:
    """Minibatch Adam ascent on the single-draw objective.

    Per epoch: one permutation of the data (argsort of uniforms from the
    permutation stream), then one (n, dim_latent) block of posterior noise
    consumed in shuffled order from the noise stream.  Both streams derive
    from config.seed, so a rerun reproduces every batch bit for bit.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != model.dim_x:
        raise ValueError(f"training data must be (n, {model.dim_x}), "
                         f"got {samples.shape}")
    n = samples.shape[0]
    if n < 1:
        raise ValueError("training data is empty")
    if config.batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if config.epochs < 0:
        raise ValueError("epochs must be >= 0")
    if config.gamma_sparsity != 0.0 and config.batch_size < 2:
        raise ValueError("sparsity penalty needs batch_size >= 2")

    params = [p for _, p in model.parameters_named()]
    opt = Adam(params, lr=config.lr)
    perm_rng = Rng(derive_seed(config.seed, "perm"))
    noise_rng = Rng(derive_seed(config.seed, "noise"))

    report = TrainReport(epochs=config.epochs)
    start_time = time.perf_counter()
    for epoch in range(config.epochs):
        perm = perm_rng.permutation(n)
        noise = noise_rng.normals(n * model.dim_latent)
        noise = noise.reshape(n, model.dim_latent)
        sums = np.zeros(3)  # recon, kl, penalty, weighted by batch size
        for bi, lo in enumerate(range(0, n, config.batch_size)):
            rows = perm[lo:lo + config.batch_size]
            xb = Tensor(samples[rows])
            recon, kl, gates, z = model.elbo_terms(xb, noise[lo:lo + len(rows)])
            objective = ad.sub(ad.tmean(recon),
                               ad.mul(ad.tmean(kl), Tensor(config.beta_kl)))
            pen_val = 0.0
            if config.gamma_sparsity != 0.0:
                basis = gates if gates is not None else ad.clip(
                    ad.absolute(z), GATE_EPS, None)
                pen = sparsity_penalty(basis, flip=config.flip_sparsity_sign)
                objective = ad.add(objective,
                                   ad.mul(pen, Tensor(config.gamma_sparsity)))
                pen_val = float(pen.value)
            loss = ad.neg(objective)
            if not np.isfinite(loss.value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {bi}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            w = len(rows)
            sums += (w * float(recon.value.mean()),
                     w * float(kl.value.mean()), w * pen_val)
        report.recon.append(float(sums[0] / n))
        report.kl.append(float(sums[1] / n))
        report.penalty.append(float(sums[2] / n))
        report.neg_elbo.append(float(sums[1] / n - sums[0] / n))
    report.wall_clock_s = time.perf_counter() - start_time
    report.final_params = {name: p.value.copy()
                           for name, p in model.parameters_named()}
    return report


# ---------------------------------------------------------------------------
# checkpoints

def checkpoint_dict(model: VaeModel) -> dict:
    params = {}
    for name, p in model.parameters_named():
        params[name] = {"shape": list(p.value.shape),
                        "data": p.value.reshape(-1).tolist()}
    return {"format_version": CHECKPOINT_VERSION,
            "model": model.config_dict(),
            "params": params}


def save_checkpoint(model: VaeModel, path: str) -> None:
    with open(path, "w", newline="\n") as f:
        json.dump(checkpoint_dict(model), f, indent=1)
        f.write("\n")


def model_from_dict(payload: dict) -> VaeModel:
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}; "
                         f"this build reads version {CHECKPOINT_VERSION}")
    cfg = payload["model"]
    mapping_cfg = dict(cfg["mapping"])
    kind = mapping_cfg.pop("kind")
    model = VaeModel.build(
        dim_x=cfg["dim_x"], dim_latent=cfg["dim_latent"],
        mapping_kind=kind, mapping_options=mapping_cfg,
        hidden=cfg["hidden"], likelihood=cfg["likelihood"],
        sigma_x=cfg["sigma_x"], seed=0)
    saved = payload["params"]
    names = [name for name, _ in model.parameters_named()]
    if set(saved) != set(names):
        missing = sorted(set(names) - set(saved))
        extra = sorted(set(saved) - set(names))
        raise ValueError(f"checkpoint parameter mismatch: missing {missing}, "
                         f"unexpected {extra}")
    for name, p in model.parameters_named():
        entry = saved[name]
        arr = np.asarray(entry["data"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape)) or shape != p.value.shape:
            raise ValueError(f"checkpoint parameter {name} has shape "
                             f"{shape}, expected {p.value.shape}")
        p.value = arr.reshape(shape)
    return model


def load_checkpoint(path: str) -> VaeModel:
    with open(path) as f:
        payload = json.load(f)
    return model_from_dict(payload)
