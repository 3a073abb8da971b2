"""GRU recurrence with a linear readout and hand-written reverse-mode gradients.

One cell is shared across the ``w`` input sequences of a sample; the final
hidden state of every sequence (taken at its true, unpadded length) is
concatenated and passed to the readout.  The spectral variant reads complex
Fourier terms as ``(re, im)`` pairs and its readout emits the half-spectrum of
the forecast, which an inverse real FFT turns into time-domain values.

Arrays are laid out as ``seqs[B, w, T, d]`` with ``lengths[B, w]``.
"""

import numpy as np

from ..exceptions import InvalidInputError

VARIANTS = ("standard", "sigmoid-update")
CELL_PARAMS = ("W_z", "W_r", "W_h", "V_z", "V_r", "V_h", "b_z", "b_r", "b_h")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _cell(xp, h, V_zr, V_h, variant):
    """One step given the input projections ``xp = W x + b`` (``[..., 3H]``)."""
    H = h.shape[-1]
    g = h @ V_zr.T
    z = sigmoid(xp[..., :H] + g[..., :H])
    r = sigmoid(xp[..., H : 2 * H] + g[..., H:])
    c = np.tanh(xp[..., 2 * H :] + (r * h) @ V_h.T)
    h_new = z * h + (1.0 - z) * c
    if variant == "sigmoid-update":
        h_new = sigmoid(h_new)
    return z, r, c, h_new


def cgru_step(params, x, h_prev, variant="standard"):
    """Single recurrence step; ``x`` holds the real-valued input features (``[..., d]``)."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    W = np.concatenate([params["W_z"], params["W_r"], params["W_h"]])
    b = np.concatenate([params["b_z"], params["b_r"], params["b_h"]])
    if x.shape[-1] != W.shape[1] or h_prev.shape[-1] != params["V_h"].shape[0]:
        raise InvalidInputError(
            f"input/hidden shapes {x.shape}/{h_prev.shape} do not fit the cell "
            f"({W.shape[1]} inputs, {params['V_h'].shape[0]} hidden)"
        )
    V_zr = np.concatenate([params["V_z"], params["V_r"]])
    return _cell(x @ W.T + b, h_prev, V_zr, params["V_h"], variant)[3]


def half_spectrum_weights(s):
    """Conjugate multiplicities of the ``s/2 + 1`` bins of a length-``s`` real signal."""
    m = np.full(s // 2 + 1, 2.0)
    m[0] = m[-1] = 1.0
    return m


class GRUNetwork:
    """Parameters and forward/backward passes of a (spectral or time-domain) GRU forecaster.

    Parameters
    ----------
    input_dim : int
        Features per recurrence step (2 for complex terms, 1 for raw values).
    hidden_size : int
    n_sequences : int
        Input sequences per sample whose final states are concatenated (``w``).
    horizon : int
        Forecast length ``s``.
    spectral_head : bool
        Readout emits ``s + 2`` reals forming ``s/2 + 1`` complex bins, scaled by
        ``s`` and inverted with an inverse real FFT.  Otherwise it emits ``s``
        values directly.
    """

    def __init__(self, input_dim, hidden_size, n_sequences, horizon, spectral_head,
                 variant="standard", params=None, seed=None):
        if variant not in VARIANTS:
            raise InvalidInputError(f"variant must be one of {VARIANTS}, got {variant!r}")
        if spectral_head and horizon % 2:
            raise InvalidInputError("a spectral readout needs an even horizon")
        self.input_dim = input_dim
        self.hidden_size = hidden_size
        self.n_sequences = n_sequences
        self.horizon = horizon
        self.spectral_head = spectral_head
        self.variant = variant
        self.params = params if params is not None else self.init_params(np.random.default_rng(seed))

    @property
    def output_dim(self):
        return self.horizon + 2 if self.spectral_head else self.horizon

    def param_shapes(self):
        H, d = self.hidden_size, self.input_dim
        shapes = {}
        for g in "zrh":
            shapes[f"W_{g}"] = (H, d)
        for g in "zrh":
            shapes[f"V_{g}"] = (H, H)
        for g in "zrh":
            shapes[f"b_{g}"] = (H,)
        shapes["W_out"] = (self.output_dim, self.n_sequences * H)
        shapes["b_out"] = (self.output_dim,)
        return shapes

    def init_params(self, rng):
        params = {}
        for name, shape in self.param_shapes().items():
            if name.startswith("b"):
                params[name] = np.zeros(shape)
            else:
                bound = np.sqrt(1.0 / shape[1])
                params[name] = rng.uniform(-bound, bound, size=shape)
        return params

    def zero_params(self):
        self.params = {k: np.zeros(s) for k, s in self.param_shapes().items()}
        return self

    @property
    def n_params(self):
        return int(sum(np.prod(s) for s in self.param_shapes().values()))

    # -- passes ---------------------------------------------------------------

    def forward(self, seqs, lengths):
        """Predictions ``[B, s]`` and the activation cache for :meth:`backward`."""
        p = self.params
        B, w, T, d = seqs.shape
        if d != self.input_dim or w != self.n_sequences:
            raise InvalidInputError(
                f"expected {self.n_sequences} sequences of {self.input_dim} features, got {w} of {d}"
            )
        H = self.hidden_size
        S = B * w
        X = seqs.reshape(S, T, d)
        lens = np.asarray(lengths).reshape(S)
        W = np.concatenate([p["W_z"], p["W_r"], p["W_h"]])
        b = np.concatenate([p["b_z"], p["b_r"], p["b_h"]])
        V_zr = np.concatenate([p["V_z"], p["V_r"]])
        V_h = p["V_h"]

        Xp = X @ W.T + b
        hs = np.empty((T + 1, S, H))
        hs[0] = 0.0
        zs = np.empty((T, S, H))
        rs = np.empty((T, S, H))
        cs = np.empty((T, S, H))
        for t in range(T):
            zs[t], rs[t], cs[t], hs[t + 1] = _cell(Xp[:, t], hs[t], V_zr, V_h, self.variant)

        final = hs[lens, np.arange(S)]
        hcat = final.reshape(B, w * H)
        out = hcat @ p["W_out"].T + p["b_out"]
        pred = self._readout(out)
        cache = dict(X=X, lens=lens, hs=hs, zs=zs, rs=rs, cs=cs, hcat=hcat, shape=(B, w, T, d))
        return pred, cache

    def _readout(self, out):
        if not self.spectral_head:
            return out
        s = self.horizon
        coeffs = out[:, 0::2] + 1j * out[:, 1::2]
        coeffs[:, 0] = coeffs[:, 0].real
        coeffs[:, -1] = coeffs[:, -1].real
        return np.fft.irfft(s * coeffs, n=s, axis=1)

    def _readout_grad(self, dpred):
        if not self.spectral_head:
            return dpred
        G = np.fft.rfft(dpred, axis=1) * half_spectrum_weights(self.horizon)
        dout = np.empty((dpred.shape[0], self.horizon + 2))
        dout[:, 0::2] = G.real
        dout[:, 1::2] = G.imag
        dout[:, 1] = 0.0
        dout[:, -1] = 0.0
        return dout

    def backward(self, cache, dpred):
        """Gradients of a scalar loss given ``dpred = dLoss/dpred``."""
        p = self.params
        B, w, T, d = cache["shape"]
        H = self.hidden_size
        S = B * w
        X, lens, hs, zs, rs, cs = (cache[k] for k in ("X", "lens", "hs", "zs", "rs", "cs"))
        V_zr = np.concatenate([p["V_z"], p["V_r"]])
        V_h = p["V_h"]

        dout = self._readout_grad(dpred)
        grads = {
            "W_out": dout.T @ cache["hcat"],
            "b_out": dout.sum(axis=0),
        }
        dfinal = (dout @ p["W_out"]).reshape(S, H)

        dXp = np.zeros((S, T, 3 * H))
        dV_zr = np.zeros_like(V_zr)
        dV_h = np.zeros_like(V_h)
        dh = np.zeros((S, H))
        for t in range(T - 1, -1, -1):
            hit = lens == t + 1
            if hit.any():
                dh[hit] += dfinal[hit]
            h_prev, z, r, c = hs[t], zs[t], rs[t], cs[t]
            if self.variant == "sigmoid-update":
                h_new = hs[t + 1]
                dpre = dh * h_new * (1.0 - h_new)
            else:
                dpre = dh
            dz = dpre * (h_prev - c)
            dc = dpre * (1.0 - z)
            dh_prev = dpre * z
            dac = dc * (1.0 - c * c)
            rh = r * h_prev
            dV_h += dac.T @ rh
            drh = dac @ V_h
            dh_prev += drh * r
            dar = drh * h_prev * r * (1.0 - r)
            daz = dz * z * (1.0 - z)
            dg = np.concatenate([daz, dar], axis=1)
            dV_zr += dg.T @ h_prev
            dh_prev += dg @ V_zr
            dXp[:, t, : 2 * H] = dg
            dXp[:, t, 2 * H :] = dac
            dh = dh_prev

        flat = dXp.reshape(S * T, 3 * H)
        dW = flat.T @ X.reshape(S * T, d)
        db = flat.sum(axis=0)
        for i, g in enumerate("zrh"):
            grads[f"W_{g}"] = dW[i * H : (i + 1) * H]
            grads[f"b_{g}"] = db[i * H : (i + 1) * H]
        grads["V_z"] = dV_zr[:H]
        grads["V_r"] = dV_zr[H:]
        grads["V_h"] = dV_h
        return grads


def mse_loss(pred, target):
    """Training loss and its gradient with respect to ``pred``."""
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def prediction_rmse(pred, target):
    """Time- and machine-averaged forecast RMSE over all rows of ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.sqrt(np.mean((pred - target) ** 2)))
