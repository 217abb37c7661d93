"""Per-view autoencoders with softmax cluster heads."""
from dataclasses import dataclass

import numpy as np

from cvcl.core import ParamStore, Sequential, init_dense
from cvcl.errors import CheckpointError, ConfigurationError, UsageError

CHECKPOINT_VERSION = 1

# hidden widths before the embedding layer, keyed by total encoder depth
DEPTH_PRESETS = {
    3: (256, 512),
    4: (256, 512, 1024),
    5: (256, 512, 1024, 2048),
}


@dataclass
class ModelConfig:
    hidden: tuple = DEPTH_PRESETS[3]
    r1: int = 512
    r2: int = 256
    head_relu: bool = False
    head_init_scale: float = 1.0
    dtype: str = "float64"

    @classmethod
    def with_depth(cls, depth, **kw):
        if depth not in DEPTH_PRESETS:
            raise ConfigurationError(f"encoder depth must be one of {sorted(DEPTH_PRESETS)}")
        return cls(hidden=DEPTH_PRESETS[depth], **kw)

    def validate(self):
        if any(int(h) < 1 for h in self.hidden) or self.r1 < 1 or self.r2 < 1:
            raise ConfigurationError("layer widths must be positive")
        if self.head_init_scale <= 0:
            raise ConfigurationError("head_init_scale must be positive")
        if self.dtype not in ("float64", "float32"):
            raise ConfigurationError(f"unsupported precision {self.dtype!r}")


class ViewNetwork:
    def __init__(self, store, v, d_in, n_clusters, config, rng):
        dt = np.dtype(config.dtype)
        enc_widths = [d_in, *config.hidden, config.r1]
        self.encoder = Sequential([
            init_dense(store, f"view{v}.enc{i}", a, b, rng,
                       "relu" if i < len(enc_widths) - 2 else "identity", dt)
            for i, (a, b) in enumerate(zip(enc_widths, enc_widths[1:]))
        ])
        dec_widths = enc_widths[::-1]
        self.decoder = Sequential([
            init_dense(store, f"view{v}.dec{i}", a, b, rng,
                       "relu" if i < len(dec_widths) - 2 else "identity", dt)
            for i, (a, b) in enumerate(zip(dec_widths, dec_widths[1:]))
        ])
        self.head = Sequential([
            init_dense(store, f"view{v}.head0", config.r1, config.r2, rng,
                       "relu" if config.head_relu else "identity", dt),
            # head_init_scale < 1 starts the assignments closer to uniform
            init_dense(store, f"view{v}.head1", config.r2, n_clusters, rng, "softmax", dt,
                       scale=config.head_init_scale),
        ])
        self.d_in = d_in


class CvclModel:
    """One autoencoder and cluster head per view; parameters live in ``store``."""

    def __init__(self, dims, n_clusters, config=None, seed=0):
        config = config or ModelConfig()
        config.validate()
        if len(dims) < 2:
            raise ConfigurationError(f"a multiview model needs at least 2 views, got {len(dims)}")
        if n_clusters < 2:
            raise ConfigurationError("n_clusters must be at least 2")
        self.config = config
        self.n_clusters = n_clusters
        self.dims = list(dims)
        self.dtype = np.dtype(config.dtype)
        self.store = ParamStore()
        rng = np.random.default_rng(seed)
        self.view_nets = [
            ViewNetwork(self.store, v, d, n_clusters, config, rng) for v, d in enumerate(dims)
        ]

    @property
    def n_views(self):
        return len(self.view_nets)

    def autoencoder_params(self):
        return self.store.select(lambda name: ".head" not in name)

    def _check(self, v, X, width, what):
        if not 0 <= v < self.n_views:
            raise ConfigurationError(f"view index {v} out of range")
        if X.ndim != 2 or X.shape[1] != width:
            raise ConfigurationError(
                f"view {v + 1} {what} expects {width} columns, got shape {X.shape}"
            )

    def encode(self, v, X, cache=False):
        self._check(v, X, self.dims[v], "encoder")
        return self.view_nets[v].encoder.forward(np.asarray(X, dtype=self.dtype), cache=cache)

    def decode(self, v, Z, cache=False):
        self._check(v, Z, self.config.r1, "decoder")
        return self.view_nets[v].decoder.forward(np.asarray(Z, dtype=self.dtype), cache=cache)

    def cluster_probabilities(self, v, Z, cache=False):
        self._check(v, Z, self.config.r1, "cluster head")
        return self.view_nets[v].head.forward(np.asarray(Z, dtype=self.dtype), cache=cache)

    def forward_all(self, batches, heads=True, cache=True):
        """Embeddings, reconstructions and (optionally) soft assignments per view."""
        if len(batches) != self.n_views:
            raise UsageError(f"expected {self.n_views} view batches, got {len(batches)}")
        if len({b.shape[0] for b in batches}) != 1:
            raise UsageError("view batches are not row-aligned")
        Zs, Xts, Hs = [], [], []
        for v, X in enumerate(batches):
            Z = self.encode(v, X, cache=cache)
            Zs.append(Z)
            Xts.append(self.decode(v, Z, cache=cache))
            if heads:
                Hs.append(self.cluster_probabilities(v, Z, cache=cache))
        return Zs, Xts, Hs

    def backward_view(self, v, dXt, dH=None):
        """Backpropagate reconstruction and assignment gradients of one view."""
        net = self.view_nets[v]
        dZ = net.decoder.backward(dXt)
        if dH is not None:
            dZ = dZ + net.head.backward(dH)
        net.encoder.backward(dZ)

    def layer_widths(self, v):
        net = self.view_nets[v]
        return net.encoder.widths, net.head.widths


def save_checkpoint(model, path, extra=None):
    """Text header, a ``---`` separator, then one parameter array per line."""
    cfg = model.config
    header = {
        "format_version": CHECKPOINT_VERSION,
        "n_views": model.n_views,
        "n_clusters": model.n_clusters,
        "dims": ",".join(map(str, model.dims)),
        "hidden": ",".join(map(str, cfg.hidden)),
        "r1": cfg.r1,
        "r2": cfg.r2,
        "head_relu": int(cfg.head_relu),
        "dtype": cfg.dtype,
    }
    for v in range(model.n_views):
        enc, head = model.layer_widths(v)
        header[f"view_{v + 1}_widths"] = ",".join(map(str, enc + head[1:]))
    for k, val in (extra or {}).items():
        header[k] = val
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for k, val in header.items():
            f.write(f"{k}={val}\n")
        f.write("---\n")
        for p in model.store:
            f.write(" ".join(f"{x:.17g}" for x in p.value.reshape(-1).astype(np.float64)) + "\n")


def _ints(s):
    return tuple(int(x) for x in s.split(",") if x)


def load_checkpoint(path):
    """Return ``(model, header)``; header holds any extra keys written at save time."""
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    try:
        sep = lines.index("---")
    except ValueError:
        raise CheckpointError(f"{path}: missing '---' header separator") from None
    header = dict(line.split("=", 1) for line in lines[:sep])
    try:
        if int(header["format_version"]) != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported format_version {header['format_version']}")
        config = ModelConfig(
            hidden=_ints(header["hidden"]),
            r1=int(header["r1"]),
            r2=int(header["r2"]),
            head_relu=bool(int(header["head_relu"])),
            dtype=header["dtype"],
        )
        dims = _ints(header["dims"])
        model = CvclModel(dims, int(header["n_clusters"]), config)
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing header key {exc}") from None
    arrays = lines[sep + 1:]
    if len(arrays) != len(model.store):
        raise CheckpointError(
            f"{path}: {len(arrays)} parameter arrays, model needs {len(model.store)}"
        )
    for p, line in zip(model.store, arrays):
        vals = np.array([float(x) for x in line.split()], dtype=np.float64)
        if vals.size != p.value.size:
            raise CheckpointError(f"{path}: {p.name} has {vals.size} values, expected {p.value.size}")
        p.value[...] = vals.reshape(p.value.shape)
    return model, header
