"""GRU cell with exact forward/backward passes and bidirectional encoding.

One cell step computes

    z = sigmoid(W_z x + U_z h_prev + b_z)          (update gate)
    r = sigmoid(W_r x + U_r h_prev + b_r)          (reset gate)
    h~ = tanh(W_h x + r * (U_h h_prev) + b_h)      (candidate state)
    h  = z * h_prev + (1 - z) * h~

Note the candidate couples the reset gate as r * (U_h h_prev), i.e. the
gate multiplies the already-projected previous state.  The backward pass
differentiates these four lines exactly; gradients accumulate across
time steps, so full unrolls stay checkable against finite differences.

The bidirectional encoder runs one parameter set forward over the
sequence and an independent set over the reversed sequence, then
concatenates the two final hidden states.  Both directions start from
the zero vector.
"""

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import kernel


@dataclass
class GruParams:
    """Six weight matrices and three bias vectors of one direction."""

    w_z: np.ndarray
    w_r: np.ndarray
    w_h: np.ndarray
    u_z: np.ndarray
    u_r: np.ndarray
    u_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        h, d = self.w_z.shape
        for name in ("w_z", "w_r", "w_h"):
            if getattr(self, name).shape != (h, d):
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {(h, d)}")
        for name in ("u_z", "u_r", "u_h"):
            if getattr(self, name).shape != (h, h):
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {(h, h)}")
        for name in ("b_z", "b_r", "b_h"):
            if getattr(self, name).shape != (h,):
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {(h,)}")

    @property
    def input_size(self) -> int:
        return self.w_z.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w_z.shape[0]

    def tensors(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict(
            (name, getattr(self, name))
            for name in ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h")
        )

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "GruParams":
        h, d = hidden_size, input_size
        return cls(
            w_z=np.zeros((h, d)), w_r=np.zeros((h, d)), w_h=np.zeros((h, d)),
            u_z=np.zeros((h, h)), u_r=np.zeros((h, h)), u_h=np.zeros((h, h)),
            b_z=np.zeros(h), b_r=np.zeros(h), b_h=np.zeros(h),
        )


@dataclass
class GruCellTrace:
    """Everything one step needs for its exact backward pass.

    hu is the projected previous state U_h @ h_prev, kept so the reset
    gate's gradient does not recompute it.
    """

    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    h_tilde: np.ndarray
    h_new: np.ndarray
    hu: np.ndarray


@dataclass
class GruGrads:
    """Gradients of one cell step: nine parameter tensors plus inputs."""

    d_w_z: np.ndarray
    d_w_r: np.ndarray
    d_w_h: np.ndarray
    d_u_z: np.ndarray
    d_u_r: np.ndarray
    d_u_h: np.ndarray
    d_b_z: np.ndarray
    d_b_r: np.ndarray
    d_b_h: np.ndarray
    d_x: np.ndarray
    d_h_prev: np.ndarray


@dataclass
class BiRnnParams:
    """Forward- and backward-direction parameter sets (shapes must match)."""

    fwd: GruParams
    bwd: GruParams

    def __post_init__(self):
        if (self.fwd.input_size, self.fwd.hidden_size) != (self.bwd.input_size, self.bwd.hidden_size):
            raise ValueError(
                f"direction shape mismatch: fwd {self.fwd.input_size}x{self.fwd.hidden_size}, "
                f"bwd {self.bwd.input_size}x{self.bwd.hidden_size}"
            )

    @property
    def input_size(self) -> int:
        return self.fwd.input_size

    @property
    def hidden_size(self) -> int:
        return self.fwd.hidden_size

    def tensors(self, prefix: str = "") -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for name, arr in self.fwd.tensors().items():
            out[f"{prefix}fwd.{name}"] = arr
        for name, arr in self.bwd.tensors().items():
            out[f"{prefix}bwd.{name}"] = arr
        return out


@dataclass
class BiRnnTrace:
    fwd: list
    bwd: list


def gru_forward(p: GruParams, x: np.ndarray, h_prev: np.ndarray) -> GruCellTrace:
    """One cell step; returns the full trace (h_new is trace.h_new)."""
    if x.shape != (p.input_size,):
        raise ValueError(f"x shape {x.shape} != ({p.input_size},)")
    if h_prev.shape != (p.hidden_size,):
        raise ValueError(f"h_prev shape {h_prev.shape} != ({p.hidden_size},)")
    hu = p.u_h @ h_prev
    z = kernel.sigmoid(p.w_z @ x + p.u_z @ h_prev + p.b_z)
    r = kernel.sigmoid(p.w_r @ x + p.u_r @ h_prev + p.b_r)
    h_tilde = np.tanh(p.w_h @ x + r * hu + p.b_h)
    h_new = z * h_prev + (1.0 - z) * h_tilde
    kernel.require_finite("gru_forward", h_new)
    return GruCellTrace(x=x, h_prev=h_prev, z=z, r=r, h_tilde=h_tilde, h_new=h_new, hu=hu)


def gru_backward(p: GruParams, trace: GruCellTrace, d_h_new: np.ndarray) -> GruGrads:
    """Exact gradients of one step given the upstream gradient on h_new."""
    if d_h_new.shape != trace.h_new.shape:
        raise ValueError(f"d_h_new shape {d_h_new.shape} != {trace.h_new.shape}")
    t = trace
    d_z = d_h_new * (t.h_prev - t.h_tilde)
    d_h_tilde = d_h_new * (1.0 - t.z)
    d_a_h = d_h_tilde * (1.0 - t.h_tilde * t.h_tilde)
    d_r = d_a_h * t.hu
    d_hu = d_a_h * t.r
    d_a_z = d_z * t.z * (1.0 - t.z)
    d_a_r = d_r * t.r * (1.0 - t.r)
    d_x = p.w_z.T @ d_a_z + p.w_r.T @ d_a_r + p.w_h.T @ d_a_h
    d_h_prev = d_h_new * t.z + p.u_z.T @ d_a_z + p.u_r.T @ d_a_r + p.u_h.T @ d_hu
    x_row = t.x[None, :]
    h_row = t.h_prev[None, :]
    return GruGrads(
        d_w_z=d_a_z[:, None] * x_row,
        d_w_r=d_a_r[:, None] * x_row,
        d_w_h=d_a_h[:, None] * x_row,
        d_u_z=d_a_z[:, None] * h_row,
        d_u_r=d_a_r[:, None] * h_row,
        d_u_h=d_hu[:, None] * h_row,
        d_b_z=d_a_z,
        d_b_r=d_a_r,
        d_b_h=d_a_h,
        d_x=d_x,
        d_h_prev=d_h_prev,
    )


def rnn_unroll(p: GruParams, xs, h0: np.ndarray) -> list:
    """Run the cell over xs starting from h0; trace[t].h_prev is trace[t-1].h_new."""
    if len(xs) == 0:
        raise ValueError("rnn_unroll requires a non-empty sequence")
    traces = []
    h = h0
    for x in xs:
        tr = gru_forward(p, x, h)
        traces.append(tr)
        h = tr.h_new
    return traces


def rnn_backward(p: GruParams, traces: list, d_h_last: np.ndarray):
    """Backpropagation through time when only the final state feeds the loss.

    The recurrent chain walks the steps in reverse exactly as
    gru_backward does (see the cross-check test), but the per-step outer
    products fold into a handful of whole-sequence matmuls.

    Returns (param gradient dict keyed like GruParams.tensors(),
    per-step input gradients, gradient w.r.t. h0).
    """
    n = len(traces)
    h, d = p.hidden_size, p.input_size
    d_az = np.empty((n, h))
    d_ar = np.empty((n, h))
    d_ah = np.empty((n, h))
    d_hu = np.empty((n, h))
    xs = np.empty((n, d))
    h_prevs = np.empty((n, h))
    uz_t, ur_t, uh_t = p.u_z.T, p.u_r.T, p.u_h.T
    d_h = d_h_last
    for t in range(n - 1, -1, -1):
        tr = traces[t]
        a_h = (d_h * (1.0 - tr.z)) * (1.0 - tr.h_tilde * tr.h_tilde)
        a_z = (d_h * (tr.h_prev - tr.h_tilde)) * tr.z * (1.0 - tr.z)
        a_r = (a_h * tr.hu) * tr.r * (1.0 - tr.r)
        hu = a_h * tr.r
        d_az[t] = a_z
        d_ar[t] = a_r
        d_ah[t] = a_h
        d_hu[t] = hu
        xs[t] = tr.x
        h_prevs[t] = tr.h_prev
        d_h = d_h * tr.z + uz_t @ a_z + ur_t @ a_r + uh_t @ hu
    acc = {
        "w_z": d_az.T @ xs, "w_r": d_ar.T @ xs, "w_h": d_ah.T @ xs,
        "u_z": d_az.T @ h_prevs, "u_r": d_ar.T @ h_prevs, "u_h": d_hu.T @ h_prevs,
        "b_z": d_az.sum(axis=0), "b_r": d_ar.sum(axis=0), "b_h": d_ah.sum(axis=0),
    }
    d_xs = list(d_az @ p.w_z + d_ar @ p.w_r + d_ah @ p.w_h)
    return acc, d_xs, d_h


def birnn_forward(p: BiRnnParams, xs) -> BiRnnTrace:
    """Unroll both directions; the backward direction consumes reversed xs."""
    if len(xs) == 0:
        raise ValueError("birnn_forward requires a non-empty sequence")
    h0 = np.zeros(p.hidden_size)
    return BiRnnTrace(
        fwd=rnn_unroll(p.fwd, xs, h0),
        bwd=rnn_unroll(p.bwd, list(reversed(xs)), h0),
    )


def birnn_output(trace: BiRnnTrace) -> np.ndarray:
    """[final forward state ; backward state at sequence position 1]."""
    return kernel.concat(trace.fwd[-1].h_new, trace.bwd[-1].h_new)


def birnn_encode(p: BiRnnParams, xs) -> np.ndarray:
    """Encode a sequence into a 2h vector (inference path, no trace kept)."""
    return birnn_output(birnn_forward(p, xs))


def birnn_backward(p: BiRnnParams, trace: BiRnnTrace, d_out: np.ndarray):
    """Gradients of birnn_output w.r.t. both directions and the inputs.

    Returns (grad dict keyed fwd.*/bwd.*, per-position input gradients in
    original sequence order).
    """
    h = p.hidden_size
    if d_out.shape != (2 * h,):
        raise ValueError(f"d_out shape {d_out.shape} != ({2 * h},)")
    g_fwd, d_xs_fwd, _ = rnn_backward(p.fwd, trace.fwd, d_out[:h])
    g_bwd, d_xs_bwd, _ = rnn_backward(p.bwd, trace.bwd, d_out[h:])
    d_xs = [a + b for a, b in zip(d_xs_fwd, reversed(d_xs_bwd))]
    grads = {f"fwd.{k}": v for k, v in g_fwd.items()}
    grads.update({f"bwd.{k}": v for k, v in g_bwd.items()})
    return grads, d_xs
