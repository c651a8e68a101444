"""Score-producing networks with hand-rolled reverse-mode gradients.

Two architectures, both mapping an instance to a flat score table:

* TSP: linear embeddings of coordinates and sparse-edge lengths feed an
  anisotropic message-passing stack with sigmoid edge gates, batch
  normalization, SiLU and residual connections; a small MLP head reads the
  final edge features into one score per sparse directed edge.
* MIS: a graph convolution stack over the symmetric-normalized adjacency
  (all-ones input features, ReLU), then a residual MLP head giving one
  score per node.

The backward pass covers exactly the operation set used here (linear maps,
segment means, gather/scatter, gates, BN) rather than a general tape.  The
tensor feeding the head is exposed as the "backbone output" so fine-tuning
can treat it as a free parameter sheet (scope label GNNOut).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .containers import read_container, write_container
from .errors import ParameterError, ShapeError, StateError, TrainingError
from .instances import rng_for
from .solution_space import Theta

BN_EPS = 1e-5

SCOPE_GNN = "GNN"
SCOPE_GNNOUT = "GNNOut"
SCOPE_MLP = "MLP"
GNN_OUT_KEY = "gnn_out"  # pseudo-tensor name for the backbone output sheet

TSP_DEFAULTS = {"width": 32, "gnn_layers": 12, "mlp_layers": 3}
MIS_DEFAULTS = {"width": 32, "gcn_layers": 3, "mlp_blocks": 10}


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x):
    return x * sigmoid(x)


def silu_grad(x):
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def scope_of(name):
    return SCOPE_MLP if name.startswith("mlp") else SCOPE_GNN


@dataclass
class NetParams:
    problem: str
    arch: dict
    tensors: dict

    def copy(self):
        return NetParams(self.problem, dict(self.arch), {k: v.copy() for k, v in self.tensors.items()})

    def names(self, scope=None):
        if scope is None:
            return list(self.tensors)
        return [k for k in self.tensors if scope_of(k) in scope]

    def flat(self, names=None):
        names = list(self.tensors) if names is None else names
        return np.concatenate([self.tensors[k].ravel() for k in names])

    def check_finite(self):
        for k, v in self.tensors.items():
            if not np.isfinite(v).all():
                raise ParameterError(f"non-finite values in tensor {k}")


def _tsp_names(arch):
    d = arch["width"]
    names = [("embed_node.w", (2, d)), ("embed_node.b", (d,)),
             ("embed_edge.w", (1, d)), ("embed_edge.b", (d,))]
    for l in range(arch["gnn_layers"]):
        for m in ("U", "V", "P", "Q", "R"):
            names.append((f"gnn{l}.{m}", (d, d)))
        for bn in ("bn_h", "bn_e"):
            names.append((f"gnn{l}.{bn}.scale", (d,)))
            names.append((f"gnn{l}.{bn}.shift", (d,)))
    L = arch["mlp_layers"]
    for i in range(L):
        dout = 1 if i == L - 1 else d
        names.append((f"mlp{i}.w", (d, dout)))
        names.append((f"mlp{i}.b", (dout,)))
    return names


def _mis_names(arch):
    c = arch["width"]
    names = []
    for l in range(arch["gcn_layers"]):
        cin = 1 if l == 0 else c
        names.append((f"gcn{l}.self.w", (cin, c)))
        names.append((f"gcn{l}.prop.w", (cin, c)))
    for i in range(arch["mlp_blocks"]):
        names.append((f"mlp{i}.w", (c, c)))
        names.append((f"mlp{i}.b", (c,)))
    names.append(("mlp_out.w", (c, 1)))
    names.append(("mlp_out.b", (1,)))
    return names


def init_params(problem, seed, **overrides):
    """Fresh parameters; weights ~ uniform(+-1/sqrt(fan_in)), biases zero,
    BN scale one / shift zero.  Same seed gives bit-identical tensors."""
    if problem == "tsp":
        arch = dict(TSP_DEFAULTS)
    elif problem == "mis":
        arch = dict(MIS_DEFAULTS)
    else:
        raise ParameterError(f"unknown problem {problem!r}")
    for k, v in overrides.items():
        if k not in arch:
            raise ParameterError(f"unknown arch field {k!r}")
        arch[k] = int(v)
    rng = rng_for(seed, 55)
    tensors = {}
    for name, shape in (_tsp_names(arch) if problem == "tsp" else _mis_names(arch)):
        if name.endswith(".scale"):
            tensors[name] = np.ones(shape)
        elif name.endswith(".shift") or name.endswith(".b"):
            tensors[name] = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return NetParams(problem, arch, tensors)


# ---------------------------------------------------------------------------
# batch norm over the leading axis


def bn_forward(x, scale, shift):
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean) * inv_std
    return scale * xhat + shift, (xhat, inv_std)


def bn_backward(dy, scale, cache):
    xhat, inv_std = cache
    n = xhat.shape[0]
    dscale = (dy * xhat).sum(axis=0)
    dshift = dy.sum(axis=0)
    dxhat = dy * scale
    dx = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dscale, dshift


# ---------------------------------------------------------------------------
# forward traces


@dataclass
class ForwardTrace:
    problem: str
    theta: np.ndarray
    gnn_out: np.ndarray
    head: tuple
    layers: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    deep: bool = True
    consumed: bool = False

    def take(self):
        if self.consumed:
            raise StateError("forward trace already consumed by a backward pass")
        self.consumed = True


def _edge_lengths(inst):
    flat = inst.nbr.reshape(-1)
    src = np.repeat(np.arange(inst.n), inst.deg)
    diff = inst.coords[src] - inst.coords[flat]
    return np.sqrt((diff * diff).sum(axis=1))[:, None]


def tsp_forward(params, inst, need_trace=True):
    """Scores for every sparse directed edge: (Theta, ForwardTrace)."""
    if params.problem != "tsp":
        raise ShapeError("parameters are not for the tour problem")
    t = params.tensors
    n, deg = inst.n, inst.deg
    flat = inst.nbr.reshape(-1).astype(np.int64)
    elen = _edge_lengths(inst)
    h = inst.coords @ t["embed_node.w"] + t["embed_node.b"]
    e = elen @ t["embed_edge.w"] + t["embed_edge.b"]
    caches = []
    for l in range(params.arch["gnn_layers"]):
        gate = sigmoid(e)
        vh = (h @ t[f"gnn{l}.V"])[flat]
        msg = gate * vh
        agg = msg.reshape(n, deg, -1).mean(axis=1)
        pre_h = h @ t[f"gnn{l}.U"] + agg
        y_h, bn_h = bn_forward(pre_h, t[f"gnn{l}.bn_h.scale"], t[f"gnn{l}.bn_h.shift"])
        pre_e = e @ t[f"gnn{l}.P"] + np.repeat(h @ t[f"gnn{l}.Q"], deg, axis=0) + (h @ t[f"gnn{l}.R"])[flat]
        y_e, bn_e = bn_forward(pre_e, t[f"gnn{l}.bn_e.scale"], t[f"gnn{l}.bn_e.shift"])
        h_new = h + silu(y_h)
        e_new = e + silu(y_e)
        if need_trace:
            caches.append((h, e, gate, vh, y_h, bn_h, y_e, bn_e))
        h, e = h_new, e_new
    theta, head_cache = head_forward(params, e)
    trace = ForwardTrace(
        problem="tsp",
        theta=theta.values,
        gnn_out=e,
        head=head_cache,
        layers=caches,
        inputs={"coords": inst.coords, "elen": elen, "flat": flat, "n": n, "deg": deg},
        deep=need_trace,
    )
    return theta, trace


def head_forward(params, z):
    """Head only: backbone output sheet -> Theta.  Used on its own when
    fine-tuning treats the sheet as free parameters."""
    t = params.tensors
    if params.problem == "tsp":
        acts = []
        x = z
        for i in range(params.arch["mlp_layers"]):
            a = x @ t[f"mlp{i}.w"] + t[f"mlp{i}.b"]
            acts.append((x, a))
            x = a if i == params.arch["mlp_layers"] - 1 else silu(a)
        return Theta("tsp", x.ravel()), ("tsp", z, acts)
    blocks = []
    x = z
    for i in range(params.arch["mlp_blocks"]):
        a = x @ t[f"mlp{i}.w"] + t[f"mlp{i}.b"]
        blocks.append((x, a))
        x = x + np.maximum(a, 0.0)
    out = x @ t["mlp_out.w"] + t["mlp_out.b"]
    return Theta("mis", out.ravel()), ("mis", z, blocks, x)


def head_backward(params, head_cache, dtheta):
    """Gradients of the head: (dict of MLP tensor grads, gradient on the
    backbone output sheet)."""
    t = params.tensors
    grads = {}
    if head_cache[0] == "tsp":
        _, z, acts = head_cache
        L = params.arch["mlp_layers"]
        d = dtheta.reshape(-1, 1)
        for i in reversed(range(L)):
            x, a = acts[i]
            da = d if i == L - 1 else d * silu_grad(a)
            grads[f"mlp{i}.w"] = x.T @ da
            grads[f"mlp{i}.b"] = da.sum(axis=0)
            d = da @ t[f"mlp{i}.w"].T
        return grads, d
    _, z, blocks, x_final = head_cache
    d = dtheta.reshape(-1, 1)
    grads["mlp_out.w"] = x_final.T @ d
    grads["mlp_out.b"] = d.sum(axis=0)
    dz = d @ t["mlp_out.w"].T
    for i in reversed(range(params.arch["mlp_blocks"])):
        x, a = blocks[i]
        da = dz * (a > 0.0)
        grads[f"mlp{i}.w"] = x.T @ da
        grads[f"mlp{i}.b"] = da.sum(axis=0)
        dz = dz + da @ t[f"mlp{i}.w"].T
    return grads, dz


def _tsp_backbone_backward(params, trace, de):
    t = params.tensors
    n, deg = trace.inputs["n"], trace.inputs["deg"]
    flat = trace.inputs["flat"]
    grads = {}
    dh = np.zeros((n, de.shape[1]))
    for l in reversed(range(params.arch["gnn_layers"])):
        h_in, e_in, gate, vh, y_h, bn_h, y_e, bn_e = trace.layers[l]
        # edge path: e_out = e_in + silu(BN(P e_in + Q h_src + R h_dst))
        dy_e = de * silu_grad(y_e)
        dpre_e, dsc, dsh = bn_backward(dy_e, t[f"gnn{l}.bn_e.scale"], bn_e)
        grads[f"gnn{l}.bn_e.scale"] = dsc
        grads[f"gnn{l}.bn_e.shift"] = dsh
        grads[f"gnn{l}.P"] = e_in.T @ dpre_e
        de_in = de + dpre_e @ t[f"gnn{l}.P"].T
        by_src = dpre_e.reshape(n, deg, -1).sum(axis=1)
        grads[f"gnn{l}.Q"] = h_in.T @ by_src
        dh_in = dh + by_src @ t[f"gnn{l}.Q"].T
        by_dst = np.zeros_like(by_src)
        np.add.at(by_dst, flat, dpre_e)
        grads[f"gnn{l}.R"] = h_in.T @ by_dst
        dh_in += by_dst @ t[f"gnn{l}.R"].T
        # node path: h_out = h_in + silu(BN(U h_in + mean_slots(gate * vh)))
        dy_h = dh * silu_grad(y_h)
        dpre_h, dsc, dsh = bn_backward(dy_h, t[f"gnn{l}.bn_h.scale"], bn_h)
        grads[f"gnn{l}.bn_h.scale"] = dsc
        grads[f"gnn{l}.bn_h.shift"] = dsh
        grads[f"gnn{l}.U"] = h_in.T @ dpre_h
        dh_in += dpre_h @ t[f"gnn{l}.U"].T
        dmsg = np.repeat(dpre_h / deg, deg, axis=0)
        de_in += dmsg * vh * gate * (1.0 - gate)
        dvh = np.zeros_like(by_src)
        np.add.at(dvh, flat, dmsg * gate)
        grads[f"gnn{l}.V"] = h_in.T @ dvh
        dh_in += dvh @ t[f"gnn{l}.V"].T
        dh, de = dh_in, de_in
    grads["embed_node.w"] = trace.inputs["coords"].T @ dh
    grads["embed_node.b"] = dh.sum(axis=0)
    grads["embed_edge.w"] = trace.inputs["elen"].T @ de
    grads["embed_edge.b"] = de.sum(axis=0)
    return grads


def _sym_norm_prop(indptr, indices, dinv, x):
    out = np.zeros_like(x)
    if len(indices):
        rows = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
        np.add.at(out, rows, dinv[indices, None] * x[indices])
    return dinv[:, None] * out


def mis_forward(params, inst, need_trace=True):
    """Scores for every node: (Theta, ForwardTrace)."""
    if params.problem != "mis":
        raise ShapeError("parameters are not for the node-set problem")
    t = params.tensors
    indptr, indices = inst.csr()
    degs = np.diff(indptr).astype(np.float64)
    dinv = np.where(degs > 0, 1.0 / np.sqrt(np.maximum(degs, 1.0)), 0.0)
    h = np.ones((inst.n, 1))
    caches = []
    for l in range(params.arch["gcn_layers"]):
        hp = _sym_norm_prop(indptr, indices, dinv, h)
        pre = h @ t[f"gcn{l}.self.w"] + hp @ t[f"gcn{l}.prop.w"]
        if need_trace:
            caches.append((h, hp, pre > 0.0))
        h = np.maximum(pre, 0.0)
    theta, head_cache = head_forward(params, h)
    trace = ForwardTrace(
        problem="mis",
        theta=theta.values,
        gnn_out=h,
        head=head_cache,
        layers=caches,
        inputs={"indptr": indptr, "indices": indices, "dinv": dinv},
        deep=need_trace,
    )
    return theta, trace


def _mis_backbone_backward(params, trace, dh):
    t = params.tensors
    indptr = trace.inputs["indptr"]
    indices = trace.inputs["indices"]
    dinv = trace.inputs["dinv"]
    grads = {}
    for l in reversed(range(params.arch["gcn_layers"])):
        h_in, hp, mask = trace.layers[l]
        dpre = dh * mask
        grads[f"gcn{l}.self.w"] = h_in.T @ dpre
        grads[f"gcn{l}.prop.w"] = hp.T @ dpre
        dh = dpre @ t[f"gcn{l}.self.w"].T
        # the normalized propagation operator is symmetric, so it is its own adjoint
        dh += _sym_norm_prop(indptr, indices, dinv, dpre @ t[f"gcn{l}.prop.w"].T)
    return grads


def backbone_backward(params, trace, dz):
    """Gradients of the backbone tensors given an upstream gradient on the
    backbone output sheet.  Consumes the trace.  Used when the head has been
    fine-tuned away from the traced parameters: the sheet gradient comes from
    the adapted head while the backbone is differentiated at its own trace."""
    trace.take()
    if not trace.deep:
        raise StateError("trace was built without backbone caches")
    if trace.problem == "tsp":
        return _tsp_backbone_backward(params, trace, dz)
    return _mis_backbone_backward(params, trace, dz)


def backward(params, trace, dtheta, scope=(SCOPE_GNN, SCOPE_MLP)):
    """Reverse-mode gradients for the tensors in scope.

    Returns a dict of gradients keyed like params.tensors; when GNNOut is in
    scope the dict also carries GNN_OUT_KEY, the gradient with respect to the
    backbone output sheet.  Consumes the trace.
    """
    scope = set(scope)
    bad = scope - {SCOPE_GNN, SCOPE_GNNOUT, SCOPE_MLP}
    if bad:
        raise ParameterError(f"unknown scope labels {sorted(bad)}")
    if SCOPE_GNN in scope and SCOPE_GNNOUT in scope:
        raise ParameterError("GNN and GNNOut scopes are mutually exclusive")
    trace.take()
    dtheta = np.asarray(dtheta, dtype=np.float64)
    if dtheta.shape != trace.theta.shape:
        raise ShapeError(f"upstream shape {dtheta.shape} != theta shape {trace.theta.shape}")
    head_grads, dz = head_backward(params, trace.head, dtheta)
    grads = {}
    if SCOPE_MLP in scope:
        grads.update(head_grads)
    if SCOPE_GNNOUT in scope:
        grads[GNN_OUT_KEY] = dz
    if SCOPE_GNN in scope:
        if not trace.deep:
            raise StateError("trace was built without backbone caches")
        if trace.problem == "tsp":
            grads.update(_tsp_backbone_backward(params, trace, dz))
        else:
            grads.update(_mis_backbone_backward(params, trace, dz))
    return grads


# ---------------------------------------------------------------------------
# optimizer


class AdamW:
    """Decoupled weight decay Adam with bias correction.

    Decay touches only the names passed in `decay`; free sheets and
    biases/BN affines stay undecayed by construction of that set.
    """

    def __init__(self, lr, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8, decay=()):
        if not lr > 0:
            raise ParameterError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.wd = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.decay = set(decay)
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, tensors, grads):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for name in grads:
            g = grads[name]
            if not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient for {name}")
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p = tensors[name]
            if self.wd > 0.0 and name in self.decay:
                p *= 1.0 - self.lr * self.wd
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_arrays(self, prefix="adam"):
        out = {f"{prefix}.t": np.array([self.t], dtype=np.float64)}
        for k, arr in self.m.items():
            out[f"{prefix}.m.{k}"] = arr
        for k, arr in self.v.items():
            out[f"{prefix}.v.{k}"] = arr
        return out

    def load_state_arrays(self, arrays, prefix="adam"):
        self.t = int(arrays[f"{prefix}.t"][0])
        self.m = {}
        self.v = {}
        mlead = f"{prefix}.m."
        vlead = f"{prefix}.v."
        for k, arr in arrays.items():
            if k.startswith(mlead):
                self.m[k[len(mlead):]] = arr.copy()
            elif k.startswith(vlead):
                self.v[k[len(vlead):]] = arr.copy()


def weight_matrix_names(params):
    """Names subject to weight decay: the 2-D weight matrices."""
    return {k for k, v in params.tensors.items() if v.ndim == 2}


# ---------------------------------------------------------------------------
# checkpoints


def save_params(path, params, extra_meta=None, extra_arrays=None):
    meta = {"kind": "checkpoint", "problem": params.problem}
    for k, v in params.arch.items():
        meta[f"arch.{k}"] = v
    if extra_meta:
        meta.update(extra_meta)
    arrays = {f"param.{k}": v for k, v in params.tensors.items()}
    if extra_arrays:
        arrays.update(extra_arrays)
    write_container(path, meta, arrays)


def load_params(path):
    """Returns (NetParams, meta, leftover arrays not part of the params)."""
    meta, arrays = read_container(path)
    if meta.get("kind") != "checkpoint":
        raise ParameterError(f"{path} is not a checkpoint container")
    problem = meta["problem"]
    arch = {k[len("arch."):]: int(v) for k, v in meta.items() if k.startswith("arch.")}
    tensors = {}
    rest = {}
    for k, arr in arrays.items():
        if k.startswith("param."):
            tensors[k[len("param."):]] = arr.astype(np.float64)
        else:
            rest[k] = arr
    return NetParams(problem, arch, tensors), meta, rest
