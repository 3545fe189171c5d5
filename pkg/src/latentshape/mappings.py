"""Deterministic differentiable maps applied between the Gaussian latent and
the decoder.

Each map reshapes where prior mass lives without touching the Gaussian
structure the encoder sees:

* ``identity``      passthrough (plain VAE behaviour);
* ``radial``        y / (||y|| + eps), pushes mass onto the unit circle;
* ``glue``          radial image folded so two boundary points coincide,
                    giving a two-hole topology;
* ``clustered``     splits the plane into angular sectors and pushes each
                    sector radially outward along its bisector, carving the
                    prior into K clusters;
* ``sparse``        gates each coordinate with a learned sigmoid selector;
* ``hierarchical``  chains per-layer combiners so coordinate i depends only
                    on y_0..y_i (lower-triangular structure).

Maps with trainable parts (clustered proportions/bias, sparse selector,
hierarchical combiners) expose them through ``parameters()`` so the trainer
can update them jointly with encoder and decoder.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Mlp
from .rng import Rng

TWO_PI = 2.0 * np.pi

GLUE_VARIANTS = ("unit", "wide")


class Mapping:
    """A configured latent map.  Build via make_mapping()."""

    def __init__(self, kind: str, dim_in: int, dim_out: int, config: dict):
        self.kind = kind
        self.dim_in = dim_in
        self.dim_out = dim_out
        self.config = config
        self._trainable = []

    def parameters(self) -> list[Tensor]:
        return list(self._trainable)

    def __call__(self, y: Tensor) -> Tensor:
        z, _ = self.apply(y)
        return z

    def apply(self, y: Tensor) -> tuple[Tensor, Tensor | None]:
        """Map a batch (n, dim_in) -> (n, dim_out).

        Second element is the gate activation matrix for the sparse map
        (needed by the sparsity regularizer) and None otherwise.
        """
        if y.value.ndim != 2 or y.value.shape[1] != self.dim_in:
            raise ValueError(
                f"{self.kind} map expects shape (n, {self.dim_in}), "
                f"got {y.value.shape}")
        return self._apply(y)


# ---------------------------------------------------------------------------
# projection family

class _Identity(Mapping):
    def _apply(self, y):
        return y, None


class _Radial(Mapping):
    def _apply(self, y):
        eps = self.config["smoothing"]
        n = ad.l2norm(y, axis=1, keepdims=True)
        return ad.div(y, ad.add(n, Tensor(eps))), None


def _glue_fold(g1: Tensor, variant: str) -> Tensor:
    """Fold the radial image so (0, 1) and (0, -1) share an image.

    First coordinate passes through.  The second is rescaled by
    sqrt(R - (1 - |x1|)^2) and shifted down by 1/sqrt(3), where R = 1 for
    the ``unit`` variant and R = 4/3 for ``wide``.  Only ``unit`` actually
    glues the two points (see tests); ``wide`` is kept for comparison.
    """
    x1 = ad.narrow(g1, 1, 0, 1)
    x2 = ad.narrow(g1, 1, 1, 1)
    r = 1.0 if variant == "unit" else 4.0 / 3.0
    inner = ad.sub(Tensor(r), ad.power(ad.sub(Tensor(1.0), ad.absolute(x1)), 2))
    if np.any(inner.value < -1e-12):
        raise AssertionError("glue: negative radicand, radial image left "
                             "the unit disk")
    scale = ad.power(ad.clip(inner, 0.0, None), 0.5)
    out2 = ad.sub(ad.mul(x2, scale), Tensor(1.0 / np.sqrt(3.0)))
    return ad.concat([x1, out2], axis=1)


class _Glue(Mapping):
    def _apply(self, y):
        eps = self.config["smoothing"]
        n = ad.l2norm(y, axis=1, keepdims=True)
        g1 = ad.div(y, ad.add(n, Tensor(eps)))
        if self.config["holes"] == 1:
            return g1, None
        return _glue_fold(g1, self.config["variant"]), None


# ---------------------------------------------------------------------------
# clustered family

class _Clustered(Mapping):
    """Push each angular sector outward along its bisector.

    2-D pairs: with sector starts theta_k (sector 0 starts at angle 0,
    widths 2*pi*softmax(u) when proportions are learnable, equal otherwise)
    a point in sector k moves by

        c1 * dis(y)^c2 * (cos(mid_k), sin(mid_k)),

    where dis is the distance to the nearer of the two bounding rays and
    mid_k the sector bisector.  Points exactly on a boundary ray do not move.

    1-D (dim_in == 1, two sectors): g(t) = t + c1 * |t|^c2 * sign(t) applied
    to t = y + b with a learnable bias b when enabled.
    """

    def __init__(self, kind, dim_in, dim_out, config, rng: Rng):
        super().__init__(kind, dim_in, dim_out, config)
        self.factors = config["factors"]
        if config["learn_proportions"]:
            # start at equal widths
            self.u = Tensor(np.zeros(self.factors[0]), trainable=True,
                            name="mapping.u")
            self._trainable.append(self.u)
        else:
            self.u = None
        if config["learn_bias"]:
            self.b = Tensor(np.zeros(1), trainable=True, name="mapping.b")
            self._trainable.append(self.b)
        else:
            self.b = None

    def _apply(self, y):
        c1 = self.config["push_strength"]
        c2 = self.config["push_exponent"]
        if self.dim_in == 1:
            t = y if self.b is None else ad.add(y, self.b)
            # sign enters as a constant factor; the map is odd around -b
            sgn = np.sign(t.value)
            push = ad.mul(ad.power(ad.absolute(t), c2), Tensor(c1))
            return ad.add(t, ad.mul(push, Tensor(sgn))), None
        parts = []
        for i, k in enumerate(self.factors):
            pair = ad.narrow(y, 1, 2 * i, 2)
            parts.append(self._push_pair(pair, k, self.u if i == 0 else None))
        rest = self.dim_in - 2 * len(self.factors)
        if rest:
            parts.append(ad.narrow(y, 1, 2 * len(self.factors), rest))
        return (parts[0] if len(parts) == 1 else ad.concat(parts, axis=1)), None

    def _push_pair(self, pair: Tensor, k: int, u: Tensor | None) -> Tensor:
        c1 = self.config["push_strength"]
        c2 = self.config["push_exponent"]
        if u is None:
            widths = Tensor(np.full(k, TWO_PI / k))
        else:
            widths = ad.mul(ad.softmax(u), Tensor(TWO_PI))
        ends = ad.cumsum(widths)
        starts = ad.sub(ends, widths)
        mids = ad.sub(ends, ad.mul(widths, Tensor(0.5)))

        y1 = ad.narrow(pair, 1, 0, 1)
        y2 = ad.narrow(pair, 1, 1, 1)
        ang = np.mod(np.arctan2(y2.value[:, 0], y1.value[:, 0]), TWO_PI)
        # mod can round up to exactly 2*pi; that point sits on sector 0's
        # lower boundary, so folding it into the last sector is harmless
        idx = np.minimum(np.searchsorted(ends.value, ang, side="right"), k - 1)

        col = lambda t: ad.reshape(t, (k, 1))
        lo = ad.gather_rows(col(starts), idx)
        hi = ad.gather_rows(col(ends), idx)
        d_lo = ad.absolute(ad.sub(ad.mul(y1, ad.sin(lo)),
                                  ad.mul(y2, ad.cos(lo))))
        d_hi = ad.absolute(ad.sub(ad.mul(y1, ad.sin(hi)),
                                  ad.mul(y2, ad.cos(hi))))
        dis = ad.minimum(d_lo, d_hi)

        mid = ad.gather_rows(col(mids), idx)
        direction = ad.concat([ad.cos(mid), ad.sin(mid)], axis=1)
        push = ad.mul(ad.power(dis, c2), Tensor(c1))
        return ad.add(pair, ad.mul(push, direction))


# ---------------------------------------------------------------------------
# sparse family

class _Sparse(Mapping):
    """z = y * sigmoid(selector(y)); the gate matrix rides along for the
    sparsity regularizer."""

    def __init__(self, kind, dim_in, dim_out, config, rng: Rng):
        super().__init__(kind, dim_in, dim_out, config)
        hidden = config["selector_hidden"]
        self.selector = Mlp([dim_in, *hidden, dim_in], rng,
                            hidden_activation="relu",
                            output_activation="sigmoid",
                            name="mapping.selector")
        self._trainable.extend(self.selector.parameters())

    def _apply(self, y):
        gates = self.selector(y)
        return ad.mul(y, gates), gates


# ---------------------------------------------------------------------------
# hierarchical family

class _Hierarchical(Mapping):
    """z_i = combiner_i(z_{i-1}, y_i): later blocks see earlier ones, never
    the reverse, so d z_i / d y_j = 0 for j in a later block."""

    def __init__(self, kind, dim_in, dim_out, config, rng: Rng):
        super().__init__(kind, dim_in, dim_out, config)
        dims = config["layer_dims"]
        act = config["combiner_activation"]
        self.combiners = []
        prev_out = 0
        for i, d in enumerate(dims):
            fan_in = d if i == 0 else prev_out + d
            net = Mlp([fan_in, d], rng, output_activation=act,
                      name=f"mapping.combiner{i}")
            self.combiners.append(net)
            self._trainable.extend(net.parameters())
            prev_out = d
        self.layer_dims = dims

    def _apply(self, y):
        outs = []
        offset = 0
        prev = None
        for i, d in enumerate(self.layer_dims):
            block = ad.narrow(y, 1, offset, d)
            offset += d
            inp = block if prev is None else ad.concat([prev, block], axis=1)
            prev = self.combiners[i](inp)
            outs.append(prev)
        return (outs[0] if len(outs) == 1 else ad.concat(outs, axis=1)), None


# ---------------------------------------------------------------------------

def _clustered_dims(dim_in: int, config: dict) -> None:
    factors = config["factors"]
    if dim_in == 1:
        if factors != [2]:
            raise ValueError("1-D clustered map supports exactly 2 sectors")
        if config["learn_proportions"]:
            raise ValueError("1-D clustered map learns proportions through "
                             "its bias, not through sector widths")
        return
    if config["learn_bias"]:
        raise ValueError("clustered bias applies to the 1-D map only")
    if any(k < 2 for k in factors):
        raise ValueError("each sector count must be >= 2")
    if 2 * len(factors) > dim_in:
        raise ValueError(
            f"{len(factors)} sector groups need >= {2 * len(factors)} "
            f"dimensions, have {dim_in}")
    if config["learn_proportions"] and len(factors) != 1:
        raise ValueError("learnable proportions support a single sector group")


def make_mapping(kind: str, dim_in: int, rng: Rng | None = None,
                 **options) -> Mapping:
    """Build a mapping.

    Options by kind:
      radial:        smoothing (default 1e-4)
      glue:          smoothing, holes in {1, 2} (default 2),
                     variant in {"unit", "wide"} (default "unit")
      clustered:     sectors (int, default 2) or factors (list of ints),
                     push_strength (5.0), push_exponent (0.2),
                     learn_proportions (False), learn_bias (False)
      sparse:        selector_hidden (default [10, 10])
      hierarchical:  layer_dims (default [1] * dim_in),
                     combiner_activation ("tanh")

    rng is required for kinds with trainable parameters.
    """
    if dim_in < 1:
        raise ValueError("dim_in must be >= 1")
    allowed = {
        "identity": set(),
        "radial": {"smoothing"},
        "glue": {"smoothing", "holes", "variant"},
        "clustered": {"sectors", "factors", "push_strength", "push_exponent",
                      "learn_proportions", "learn_bias"},
        "sparse": {"selector_hidden"},
        "hierarchical": {"layer_dims", "combiner_activation"},
    }
    if kind not in allowed:
        raise ValueError(f"unknown mapping kind {kind!r}; "
                         f"choose from {sorted(allowed)}")
    extra = set(options) - allowed[kind]
    if extra:
        raise ValueError(f"options {sorted(extra)} not valid for {kind!r}")

    if kind == "identity":
        return _Identity(kind, dim_in, dim_in, {})

    if kind == "radial":
        cfg = {"smoothing": float(options.get("smoothing", 1e-4))}
        return _Radial(kind, dim_in, dim_in, cfg)

    if kind == "glue":
        holes = int(options.get("holes", 2))
        if holes not in (1, 2):
            raise ValueError("glue supports 1 or 2 holes")
        variant = options.get("variant", "unit")
        if variant not in GLUE_VARIANTS:
            raise ValueError(f"glue variant must be one of {GLUE_VARIANTS}")
        if dim_in != 2:
            raise ValueError("glue map is defined on 2-D latents")
        cfg = {"smoothing": float(options.get("smoothing", 1e-4)),
               "holes": holes, "variant": variant}
        return _Glue(kind, dim_in, 2, cfg)

    if kind == "clustered":
        if "factors" in options and "sectors" in options:
            raise ValueError("give either sectors or factors, not both")
        if "factors" in options:
            factors = [int(k) for k in options["factors"]]
        else:
            factors = [int(options.get("sectors", 2))]
        cfg = {
            "factors": factors,
            "push_strength": float(options.get("push_strength", 5.0)),
            "push_exponent": float(options.get("push_exponent", 0.2)),
            "learn_proportions": bool(options.get("learn_proportions", False)),
            "learn_bias": bool(options.get("learn_bias", False)),
        }
        _clustered_dims(dim_in, cfg)
        if (cfg["learn_proportions"] or cfg["learn_bias"]) and rng is None:
            raise ValueError("trainable clustered map needs an rng")
        return _Clustered(kind, dim_in, dim_in, cfg, rng)

    if kind == "sparse":
        hidden = [int(h) for h in options.get("selector_hidden", [10, 10])]
        cfg = {"selector_hidden": hidden}
        if rng is None:
            raise ValueError("sparse map needs an rng for its selector")
        return _Sparse(kind, dim_in, dim_in, cfg, rng)

    # hierarchical
    dims = [int(d) for d in options.get("layer_dims", [1] * dim_in)]
    if sum(dims) != dim_in or any(d < 1 for d in dims):
        raise ValueError(
            f"layer_dims {dims} must be positive and sum to dim_in={dim_in}")
    act = options.get("combiner_activation", "tanh")
    cfg = {"layer_dims": dims, "combiner_activation": act}
    if rng is None:
        raise ValueError("hierarchical map needs an rng for its combiners")
    return _Hierarchical(kind, dim_in, dim_in, cfg, rng)
