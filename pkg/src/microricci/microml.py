"""The two tiny learned modules and everything around them: feature
assembly, the offline trace collector with the 3-step lookahead step-size
oracle, plain-SGD training, portable model files, and the self-tuning solve
loop that plugs both models into the greedy engine.

Labels: the selector's positive vertex is the greedy argmax (the residual
norm that gates termination is the max entry, and every cheaper alternative
measured worse); the step-size label is the candidate maximizing the local
(closed one-ring) l2 residual drop after a 3-step lookahead. Both choices are
recorded in the dataset metadata.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelFormatError
from .laplacian import build_cotan_laplacian
from .mesh import _check_log_radii
from .solver import SolveConfig, _solve_engine, max_safe_step, solve_greedy

logger = logging.getLogger("microricci")

__all__ = [
    "Mlp",
    "SelectorModel",
    "RegressorModel",
    "OracleSelector",
    "ConstantRegressor",
    "TrainingSample",
    "TraceDataset",
    "SelectorHyper",
    "RegressorHyper",
    "selector_features",
    "regressor_features",
    "lookahead_optimal_step",
    "default_step_candidates",
    "collect_traces",
    "train_selector",
    "train_regressor",
    "save_model",
    "load_model",
    "save_dataset",
    "load_dataset",
    "solve_microricci",
]

FEATURE_SPEC_VERSION = 1
FORMAT_VERSION = 1
ACTIVATION = "tanh"
EPS_MAX_FACTOR = 2.5          # eps_max = 2.5 / ||H||inf (see decisions ledger)
SELECTOR_DIMS = (7, 28, 24, 1)   # 945 parameters
REGRESSOR_DIMS = (2, 16, 8, 1)   # 193 parameters
LOOKAHEAD_HORIZON = 3


# -- tiny MLP --------------------------------------------------------------------


class Mlp:
    """Fully connected net, tanh hidden activations, identity output."""

    def __init__(self, layer_dims, weights=None, seed=0):
        self.layer_dims = tuple(int(d) for d in layer_dims)
        if weights is not None:
            self.weights = [(np.asarray(W, dtype=np.float64),
                             np.asarray(b, dtype=np.float64)) for W, b in weights]
        else:
            rng = np.random.default_rng(seed)
            self.weights = []
            for din, dout in zip(self.layer_dims[:-1], self.layer_dims[1:]):
                limit = np.sqrt(6.0 / (din + dout))
                W = rng.uniform(-limit, limit, size=(dout, din))
                self.weights.append((W, np.zeros(dout)))

    @property
    def param_count(self):
        return sum(W.size + b.size for W, b in self.weights)

    def forward(self, X):
        a = np.atleast_2d(np.asarray(X, dtype=np.float64))
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(self.weights):
            a = a @ W.T + b
            if k != last:
                a = np.tanh(a)
        return a

    def forward_cached(self, X):
        """Forward pass keeping per-layer activations, for backprop."""
        a = np.atleast_2d(np.asarray(X, dtype=np.float64))
        acts = [a]
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(self.weights):
            a = a @ W.T + b
            if k != last:
                a = np.tanh(a)
            acts.append(a)
        return acts

    def backward(self, acts, grad_out):
        """Parameter gradients given d(loss)/d(output)."""
        grads = [None] * len(self.weights)
        g = np.asarray(grad_out, dtype=np.float64)
        for k in range(len(self.weights) - 1, -1, -1):
            W, _ = self.weights[k]
            a_in = acts[k]
            grads[k] = (g.T @ a_in, g.sum(axis=0))
            if k > 0:
                g = (g @ W) * (1.0 - acts[k] ** 2)
        return grads

    def sgd_step(self, grads, lr, clip=1.0):
        total = 0.0
        for gW, gb in grads:
            total += float((gW * gW).sum() + (gb * gb).sum())
        total = np.sqrt(total)
        scale = lr if total <= clip else lr * clip / total
        new = []
        for (W, b), (gW, gb) in zip(self.weights, grads):
            new.append((W - scale * gW, b - scale * gb))
        self.weights = new


# -- models ----------------------------------------------------------------------


@dataclass
class SelectorModel:
    mlp: Mlp
    feature_spec_version: int = FEATURE_SPEC_VERSION
    loss_curve: list = field(default_factory=list)

    @property
    def param_count(self):
        return self.mlp.param_count

    def score_batch(self, F):
        return self.mlp.forward(F)[:, 0]


@dataclass
class RegressorModel:
    mlp: Mlp
    eps_max: float
    loss_curve: list = field(default_factory=list)

    @property
    def param_count(self):
        return self.mlp.param_count

    def predict(self, g):
        raw = self.mlp.forward(np.asarray(g, dtype=np.float64))[:, 0]
        return np.clip(raw, 0.0, self.eps_max)

    def predict_one(self, s_i, deg_i):
        return float(self.predict(np.array([[s_i, deg_i]]))[0])


class OracleSelector:
    """Reference selector scoring each vertex by |s_i| exactly; reproduces the
    pure-greedy choice bit for bit."""

    feature_spec_version = FEATURE_SPEC_VERSION
    param_count = 0


class ConstantRegressor:
    """Reference regressor predicting one constant step size."""

    param_count = 0

    def __init__(self, eps):
        if eps < 0:
            raise ValueError("step size must be nonnegative")
        self.eps = float(eps)
        self.eps_max = float(eps)

    def predict_one(self, s_i, deg_i):
        return self.eps


# -- features --------------------------------------------------------------------


def _features_batch(s, abs_s, mesh):
    """(n, 7) selector features: [s_i, ring min, ring max, ring mean, ring std,
    deg(i), s_i normalized by ||s||inf]."""
    off = mesh.ring_offsets
    idx = mesh.ring_indices
    deg = np.diff(off).astype(np.float64)
    sv = s[idx]
    starts = off[:-1]
    rmin = np.minimum.reduceat(sv, starts)
    rmax = np.maximum.reduceat(sv, starts)
    rsum = np.add.reduceat(sv, starts)
    rmean = rsum / deg
    dev = sv - np.repeat(rmean, np.diff(off))
    rvar = np.add.reduceat(dev * dev, starts) / deg
    rstd = np.sqrt(np.maximum(rvar, 0.0))
    norm = float(abs_s.max())
    f7 = s / norm if norm > 0.0 else np.zeros_like(s)
    return np.column_stack([s, rmin, rmax, rmean, rstd, deg, f7])


def selector_features(s, mesh, i):
    """7-feature encoding of vertex ``i`` (see :func:`_features_batch`)."""
    s = np.asarray(s, dtype=np.float64)
    ring = mesh.one_ring(i)
    if len(ring) == 0:
        raise ValueError(f"vertex {i} has no neighbors")
    sv = s[ring]
    mean = sv.mean()
    std = float(np.sqrt(np.maximum(((sv - mean) ** 2).mean(), 0.0)))
    norm = float(np.max(np.abs(s)))
    f7 = s[i] / norm if norm > 0.0 else 0.0
    return np.array([s[i], sv.min(), sv.max(), mean, std, float(len(ring)), f7])


def regressor_features(s, mesh, i):
    """(s_i, deg(i))."""
    s = np.asarray(s, dtype=np.float64)
    return np.array([s[i], float(len(mesh.one_ring(i)))])


# -- lookahead step oracle -------------------------------------------------------


def default_step_candidates(eps_max, count=16, span=256.0):
    """``count`` log-spaced candidates in [eps_max/span, eps_max], ascending."""
    k = np.arange(count - 1, -1, -1, dtype=np.float64)
    return eps_max * (1.0 / span) ** (k / (count - 1))


def lookahead_optimal_step(H, s, i, candidates, eps_greedy,
                           horizon=LOOKAHEAD_HORIZON):
    """Best step size at vertex ``i`` by replay.

    For each candidate eps: apply the step at ``i``, run ``horizon - 1``
    pure-greedy steps at the safe step size, and measure the l2 residual over
    the closed one-ring of ``i``. Returns the candidate with the smallest
    final value; ties go to the smallest eps. The probe works on copies, the
    caller's state is untouched. Non-finite probes are skipped with a log note.
    """
    cols_i, vals_i = H.row(i)
    best_val = None
    best_eps = None
    s_i = s[i]
    for eps in sorted(float(e) for e in candidates):
        if eps <= 0:
            raise ValueError("candidates must be positive")
        s2 = np.array(s, copy=True)
        s2[cols_i] -= (eps * s_i) * vals_i
        for _ in range(horizon - 1):
            j = int(np.argmax(np.abs(s2)))
            cols, vals = H.row(j)
            s2[cols] -= (eps_greedy * s2[j]) * vals
        local = s2[cols_i]
        if not np.all(np.isfinite(local)):
            logger.warning("lookahead probe at vertex %d, eps=%g was non-finite; "
                           "candidate skipped", i, eps)
            continue
        val = float(local @ local)
        if best_val is None or val < best_val:
            best_val, best_eps = val, eps
    if best_eps is None:
        raise ValueError("no finite lookahead candidate")
    return best_eps


# -- trace collection ------------------------------------------------------------


@dataclass
class TrainingSample:
    mesh_id: int
    iteration: int
    vertex: int
    features_selector: list
    features_regressor: list
    label_best: int
    label_eps: float

    def to_json(self):
        return {
            "mesh_id": self.mesh_id,
            "iteration": self.iteration,
            "vertex": self.vertex,
            "features_selector": [float(v) for v in self.features_selector],
            "features_regressor": [float(v) for v in self.features_regressor],
            "label_best": int(self.label_best),
            "label_eps": float(self.label_eps),
        }


@dataclass
class TraceDataset:
    samples: list
    meta: dict


def collect_traces(corpus, config=None, stride=1, negatives=8,
                   candidate_count=16, candidate_span=256.0):
    """Run the pure greedy solver over ``corpus`` (a list of (mesh, x0)) and
    record, at every ``stride``-th iteration, the greedy vertex as the positive
    sample plus the ``negatives`` next-largest residual vertices, each with
    selector/regressor features and its lookahead-ideal step size.

    Collection is frozen-H syndrome decoding; it is fully deterministic (the
    negatives are the top residual magnitudes, no sampling involved).
    """
    config = config or SolveConfig()
    if config.residual_mode != "syndrome" or config.h_policy != "frozen":
        raise ValueError("trace collection requires frozen-H syndrome mode")
    if config.epsilon_mode == "learned":
        raise ValueError("trace collection runs the plain greedy solver")
    if not corpus:
        raise ValueError("empty corpus")
    samples = []
    eps_max_by_mesh = {}
    reports = []
    for mesh_id, (mesh, x0) in enumerate(corpus):
        x0 = _check_log_radii(mesh, x0)
        H = build_cotan_laplacian(mesh, np.zeros(mesh.n_vertices),
                                  clamp=config.clamp_angles)
        eps_safe = max_safe_step(H)
        eps_max = EPS_MAX_FACTOR * eps_safe
        eps_max_by_mesh[mesh_id] = eps_max
        cands = default_step_candidates(eps_max, candidate_count, candidate_span)

        def observer(t, s, abs_s, imax, _mid=mesh_id, _H=H, _cands=cands,
                     _eps_safe=eps_safe, _mesh=mesh):
            if t % stride != 0:
                return
            order = np.argsort(-abs_s, kind="stable")
            negs = [int(v) for v in order if v != imax][:negatives]
            for v, is_best in [(imax, 1)] + [(v, 0) for v in negs]:
                samples.append(TrainingSample(
                    mesh_id=_mid, iteration=t, vertex=v,
                    features_selector=selector_features(s, _mesh, v).tolist(),
                    features_regressor=regressor_features(s, _mesh, v).tolist(),
                    label_best=is_best,
                    label_eps=lookahead_optimal_step(_H, s, v, _cands, _eps_safe),
                ))

        reports.append(_solve_engine(mesh, x0, config, observer=observer))

    meta = {
        "feature_spec_version": FEATURE_SPEC_VERSION,
        "label_norm": "linf_greedy",
        "lookahead_objective": "local_l2",
        "lookahead_horizon": LOOKAHEAD_HORIZON,
        "eps_max_factor": EPS_MAX_FACTOR,
        "eps_max_by_mesh": {str(k): v for k, v in eps_max_by_mesh.items()},
        "eps_max_model": max(eps_max_by_mesh.values()),
        "stride": stride,
        "negatives": negatives,
        "candidate_count": candidate_count,
        "candidate_span": candidate_span,
        "corpus_size": len(corpus),
        "iterations_by_mesh": {str(i): r.iterations_used
                               for i, r in enumerate(reports)},
        "config": config.to_dict(),
    }
    return TraceDataset(samples=samples, meta=meta)


def save_dataset(dataset, path):
    """NDJSON samples at ``path``; metadata sidecar at ``path + '.meta.json'``."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in dataset.samples:
            fh.write(json.dumps(s.to_json(), sort_keys=True) + "\n")
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(dataset.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path):
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            samples.append(TrainingSample(**d))
    try:
        with open(str(path) + ".meta.json", "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        meta = {}
    _group_samples(samples)  # validates the one-positive-per-group invariant
    return TraceDataset(samples=samples, meta=meta)


def _group_samples(samples):
    groups = {}
    for k, s in enumerate(samples):
        groups.setdefault((s.mesh_id, s.iteration), []).append(k)
    for key, idxs in groups.items():
        npos = sum(1 for k in idxs if samples[k].label_best == 1)
        if npos != 1:
            raise ValueError(
                f"group {key} has {npos} positive labels; exactly 1 required")
    return groups


# -- training --------------------------------------------------------------------


@dataclass
class SelectorHyper:
    lr: float = 0.05
    epochs: int = 16
    batch_groups: int = 64
    margin: float = 1.0
    seed: int = 0


@dataclass
class RegressorHyper:
    lr: float = 0.02
    epochs: int = 60
    batch: int = 256
    seed: int = 0


def train_selector(dataset, hyper=None):
    """Binary cross-entropy on the per-vertex best/other label plus a pairwise
    hinge ranking loss between each group's positive and its negatives.
    Plain seeded SGD, gradient-norm clip at 1.0, single-threaded; zero epochs
    returns the seeded initialization untouched."""
    hyper = hyper or SelectorHyper()
    groups = _group_samples(dataset.samples)
    X = np.array([s.features_selector for s in dataset.samples])
    y = np.array([float(s.label_best) for s in dataset.samples])
    model = Mlp(SELECTOR_DIMS, seed=hyper.seed)
    keys = sorted(groups.keys())
    rng = np.random.default_rng(hyper.seed)
    curve = []
    for _ in range(hyper.epochs):
        order = rng.permutation(len(keys))
        losses = []
        for start in range(0, len(order), hyper.batch_groups):
            gsel = [keys[k] for k in order[start:start + hyper.batch_groups]]
            idxs = [k for g in gsel for k in groups[g]]
            Xb, yb = X[idxs], y[idxs]
            acts = model.forward_cached(Xb)
            z = acts[-1][:, 0]
            # stable BCE on logits
            bce = np.maximum(z, 0.0) - z * yb + np.log1p(np.exp(-np.abs(z)))
            gz = (1.0 / (1.0 + np.exp(-z)) - yb) / len(z)
            # pairwise hinge: margin - z_pos + z_neg over each group's pairs
            pos_of = {}
            row = 0
            rows_of = {}
            for g in gsel:
                rows_of[g] = list(range(row, row + len(groups[g])))
                for j, k in enumerate(groups[g]):
                    if dataset.samples[k].label_best == 1:
                        pos_of[g] = row + j
                row += len(groups[g])
            npairs = sum(len(rows_of[g]) - 1 for g in gsel)
            hinge = 0.0
            if npairs:
                for g in gsel:
                    p = pos_of[g]
                    for r in rows_of[g]:
                        if r == p:
                            continue
                        viol = hyper.margin - z[p] + z[r]
                        if viol > 0.0:
                            hinge += viol
                            gz[p] -= 1.0 / npairs
                            gz[r] += 1.0 / npairs
                hinge /= npairs
            loss = float(bce.mean() + hinge)
            losses.append(loss)
            grads = model.backward(acts, gz[:, None])
            model.sgd_step(grads, hyper.lr)
            if not np.isfinite(loss):
                raise ValueError(
                    f"non-finite selector loss at epoch {len(curve)}, "
                    f"batch {start // hyper.batch_groups}")
        curve.append(float(np.mean(losses)))
    return SelectorModel(mlp=model, loss_curve=curve)


def train_regressor(dataset, hyper=None, eps_max=None):
    """MSE on the lookahead-ideal step size over all recorded samples.
    Predictions are clipped at inference time only. ``eps_max`` defaults to the
    dataset metadata's value."""
    hyper = hyper or RegressorHyper()
    if not dataset.samples:
        raise ValueError("empty dataset")
    if eps_max is None:
        eps_max = dataset.meta.get("eps_max_model")
        if eps_max is None:
            raise ValueError("eps_max not given and missing from dataset meta")
    X = np.array([s.features_regressor for s in dataset.samples])
    y = np.array([s.label_eps for s in dataset.samples])
    model = Mlp(REGRESSOR_DIMS, seed=hyper.seed)
    rng = np.random.default_rng(hyper.seed)
    curve = []
    for _ in range(hyper.epochs):
        order = rng.permutation(len(y))
        losses = []
        for start in range(0, len(order), hyper.batch):
            b = order[start:start + hyper.batch]
            acts = model.forward_cached(X[b])
            pred = acts[-1][:, 0]
            err = pred - y[b]
            loss = float((err * err).mean())
            losses.append(loss)
            if not np.isfinite(loss):
                raise ValueError(
                    f"non-finite regressor loss at epoch {len(curve)}, "
                    f"batch {start // hyper.batch}")
            grads = model.backward(acts, (2.0 * err / len(b))[:, None])
            model.sgd_step(grads, hyper.lr)
        curve.append(float(np.mean(losses)))
    return RegressorModel(mlp=model, eps_max=float(eps_max), loss_curve=curve)


# -- model files -----------------------------------------------------------------


def _canon(value):
    """Deterministic JSON rendering; floats always carry 17 significant digits."""
    if isinstance(value, dict):
        inner = ",".join(f"{json.dumps(k)}:{_canon(value[k])}"
                         for k in sorted(value))
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_canon(v) for v in value) + "]"
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return json.dumps(value)


def _model_payload(model):
    if isinstance(model, SelectorModel):
        kind, eps_max, fsv = "selector", None, model.feature_spec_version
    elif isinstance(model, RegressorModel):
        kind, eps_max, fsv = "regressor", model.eps_max, None
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {
        "format_version": FORMAT_VERSION,
        "model_kind": kind,
        "feature_spec_version": fsv,
        "activation": ACTIVATION,
        "eps_max": eps_max,
        "layer_dims": list(model.mlp.layer_dims),
        "weights": [{"W": [[float(v) for v in row] for row in W],
                     "b": [float(v) for v in b]}
                    for W, b in model.mlp.weights],
    }


def model_checksum(payload):
    return "sha256:" + hashlib.sha256(_canon(payload).encode("ascii")).hexdigest()


def save_model(model, path):
    """Write the portable JSON form: header, row-major weights at 17
    significant digits, and a trailing integrity checksum."""
    payload = _model_payload(model)
    payload_with = dict(payload)
    payload_with["checksum"] = model_checksum(payload)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_canon(payload_with))
        fh.write("\n")


def load_model(path):
    """Round-trip-exact loader; raises :class:`ModelFormatError` on version
    mismatch, truncation, or checksum failure."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or "checksum" not in doc:
        raise ModelFormatError("model file lacks a checksum")
    stored = doc.pop("checksum")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format_version {doc.get('format_version')!r}; "
            f"this library reads {FORMAT_VERSION}")
    if model_checksum(doc) != stored:
        raise ModelFormatError("checksum mismatch: file corrupt or edited")
    if doc.get("activation") != ACTIVATION:
        raise ModelFormatError(f"unsupported activation {doc.get('activation')!r}")
    weights = [(np.array(layer["W"]), np.array(layer["b"]))
               for layer in doc["weights"]]
    mlp = Mlp(doc["layer_dims"], weights=weights)
    if doc["model_kind"] == "selector":
        fsv = doc.get("feature_spec_version")
        if fsv != FEATURE_SPEC_VERSION:
            raise ModelFormatError(
                f"feature_spec_version {fsv} not supported "
                f"(library speaks {FEATURE_SPEC_VERSION})")
        return SelectorModel(mlp=mlp)
    if doc["model_kind"] == "regressor":
        return RegressorModel(mlp=mlp, eps_max=float(doc["eps_max"]))
    raise ModelFormatError(f"unknown model_kind {doc['model_kind']!r}")


# -- self-tuning solve -----------------------------------------------------------


def solve_microricci(mesh, x0, selector, regressor, config=None):
    """Self-tuning loop: residual, tolerance test, selector scores over all
    vertices, argmax (ties to the lowest index), regressor step size clipped
    to [0, eps_max], single-coordinate update."""
    config = config or SolveConfig(epsilon_mode="learned")
    if not isinstance(selector, OracleSelector):
        if selector.feature_spec_version != FEATURE_SPEC_VERSION:
            raise ModelFormatError(
                f"selector feature_spec_version {selector.feature_spec_version} "
                f"does not match library {FEATURE_SPEC_VERSION}")

    deg = np.diff(mesh.ring_offsets).astype(np.float64)

    if isinstance(selector, OracleSelector):
        def scorer(s, abs_s):
            return abs_s
    elif config.select_top_k:
        k = int(config.select_top_k)

        def scorer(s, abs_s):
            cand = np.sort(np.argpartition(abs_s, -k)[-k:])
            F = _features_batch(s, abs_s, mesh)
            scores = np.full(len(s), -np.inf)
            scores[cand] = selector.score_batch(F[cand])
            return scores
    else:
        def scorer(s, abs_s):
            return selector.score_batch(_features_batch(s, abs_s, mesh))

    def eps_provider(s, i):
        return regressor.predict_one(s[i], deg[i])

    return _solve_engine(mesh, x0, config, scorer=scorer,
                         eps_provider=eps_provider)
