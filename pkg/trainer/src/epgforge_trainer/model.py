"""Torch implementation of the stacked-GRU surrogate.

Cell convention (must match the inference side, recorded as convention byte 1
in the weight file):

    z  = sigmoid(Wz x + Uz h + bz)
    r  = sigmoid(Wr x + Ur h + br)
    hc = tanh(Wh x + Uh (r * h) + bh)
    h' = (1 - z) * h + z * hc

Gate tensors are packed (z, r, h) row blocks for speed; export unpacks them
into the per-gate layout of the weight file.  Inputs per TR are
(log T1, log T2, TR_s, TE_s, flip_rad) under the affine scaling stored with
the weights.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn

from .formats import WeightBundle

DEFAULT_IN_SCALE = np.array([1.0, 1.0, 100.0, 100.0, 1.0])
DEFAULT_IN_OFFSET = np.zeros(5)


class GruLayer(nn.Module):
    def __init__(self, n_in: int, hidden: int):
        super().__init__()
        self.hidden = hidden
        k_in = 1.0 / math.sqrt(n_in)
        k_h = 1.0 / math.sqrt(hidden)
        self.W = nn.Parameter(torch.empty(3 * hidden, n_in).uniform_(-k_in, k_in))
        self.Uzr = nn.Parameter(torch.empty(2 * hidden, hidden).uniform_(-k_h, k_h))
        self.Uh = nn.Parameter(torch.empty(hidden, hidden).uniform_(-k_h, k_h))
        self.b = nn.Parameter(torch.zeros(3 * hidden))

    def forward(self, x, h):
        hid = self.hidden
        gx = x @ self.W.T + self.b
        uzr = h @ self.Uzr.T
        z = torch.sigmoid(gx[:, :hid] + uzr[:, :hid])
        r = torch.sigmoid(gx[:, hid:2 * hid] + uzr[:, hid:])
        hc = torch.tanh(gx[:, 2 * hid:] + (r * h) @ self.Uh.T)
        return (1.0 - z) * h + z * hc


class GruSurrogate(nn.Module):
    """Three stacked cells between the M0 initializer and the output head."""

    def __init__(self, hidden: int = 32, n_in: int = 5, n_out: int = 6,
                 n_layers: int = 3):
        super().__init__()
        self.hidden = hidden
        self.layers = nn.ModuleList(
            [GruLayer(n_in if i == 0 else hidden, hidden) for i in range(n_layers)])
        self.init_linear = nn.Linear(3, n_layers * hidden)
        self.out_linear = nn.Linear(hidden, n_out)
        self.register_buffer("in_scale", torch.tensor(DEFAULT_IN_SCALE,
                                                      dtype=torch.float32))
        self.register_buffer("in_offset", torch.tensor(DEFAULT_IN_OFFSET,
                                                       dtype=torch.float32))

    def scale_inputs(self, theta, tr_ms, te_ms, flip_deg):
        """Raw physical inputs -> scaled (B, T, 5) network inputs."""
        b, t = tr_ms.shape
        x = torch.empty(b, t, 5, dtype=torch.float32)
        x[:, :, 0] = theta[:, 0:1]
        x[:, :, 1] = theta[:, 1:2]
        x[:, :, 2] = tr_ms * 1e-3
        x[:, :, 3] = te_ms * 1e-3
        x[:, :, 4] = torch.deg2rad(flip_deg)
        return x * self.in_scale + self.in_offset

    def forward(self, x_scaled, m0):
        hs = list(self.init_linear(m0).split(self.hidden, dim=-1))
        outs = []
        for t in range(x_scaled.shape[1]):
            inp = x_scaled[:, t]
            for li, layer in enumerate(self.layers):
                hs[li] = layer(inp, hs[li])
                inp = hs[li]
            outs.append(inp)
        return self.out_linear(torch.stack(outs, dim=1))

    # -- weight-file interchange --------------------------------------------

    def to_bundle(self, deriv_scale=(1.0, 1.0)) -> WeightBundle:
        layers = []
        for layer in self.layers:
            hid = layer.hidden
            W = layer.W.detach().numpy()
            Uzr = layer.Uzr.detach().numpy()
            Uh = layer.Uh.detach().numpy()
            b = layer.b.detach().numpy()
            layers.append({
                "w_z": W[:hid], "w_r": W[hid:2 * hid], "w_h": W[2 * hid:],
                "u_z": Uzr[:hid], "u_r": Uzr[hid:], "u_h": Uh,
                "b_z": b[:hid], "b_r": b[hid:2 * hid], "b_h": b[2 * hid:]})
        return WeightBundle(
            layers,
            init_w=self.init_linear.weight.detach().numpy(),
            init_b=self.init_linear.bias.detach().numpy(),
            out_w=self.out_linear.weight.detach().numpy(),
            out_b=self.out_linear.bias.detach().numpy(),
            in_scale=self.in_scale.numpy().astype(float),
            in_offset=self.in_offset.numpy().astype(float),
            deriv_scale=np.asarray(deriv_scale, dtype=float))

    @classmethod
    def from_bundle(cls, bundle: WeightBundle) -> "GruSurrogate":
        net = cls(hidden=bundle.hidden, n_in=bundle.n_in, n_out=bundle.n_out,
                  n_layers=len(bundle.layers))
        with torch.no_grad():
            for layer, tensors in zip(net.layers, bundle.layers):
                layer.W.copy_(torch.from_numpy(np.concatenate(
                    [tensors["w_z"], tensors["w_r"], tensors["w_h"]])))
                layer.Uzr.copy_(torch.from_numpy(np.concatenate(
                    [tensors["u_z"], tensors["u_r"]])))
                layer.Uh.copy_(torch.from_numpy(tensors["u_h"].copy()))
                layer.b.copy_(torch.from_numpy(np.concatenate(
                    [tensors["b_z"], tensors["b_r"], tensors["b_h"]])))
            net.init_linear.weight.copy_(torch.from_numpy(bundle.init_w.copy()))
            net.init_linear.bias.copy_(torch.from_numpy(bundle.init_b.copy()))
            net.out_linear.weight.copy_(torch.from_numpy(bundle.out_w.copy()))
            net.out_linear.bias.copy_(torch.from_numpy(bundle.out_b.copy()))
            net.in_scale.copy_(torch.from_numpy(bundle.in_scale.astype(np.float32)))
            net.in_offset.copy_(torch.from_numpy(bundle.in_offset.astype(np.float32)))
        return net


def predict_dataset(net: GruSurrogate, ds, deriv_scale=(1.0, 1.0),
                    batch: int = 256):
    """Physical-unit predictions (signal, d/dlogT1, d/dlogT2) over a dataset."""
    theta = torch.tensor(np.stack([np.log(ds.t1), np.log(ds.t2)], axis=1),
                         dtype=torch.float32)
    m0 = torch.zeros(ds.n_records, 3)
    m0[:, 2] = torch.tensor(np.where(ds.inversion, -1.0, 1.0),
                            dtype=torch.float32)
    sig = np.empty((ds.n_records, ds.n_tr), dtype=complex)
    d1 = np.empty_like(sig)
    d2 = np.empty_like(sig)
    net.eval()
    with torch.no_grad():
        for lo in range(0, ds.n_records, batch):
            sl = slice(lo, min(lo + batch, ds.n_records))
            x = net.scale_inputs(theta[sl],
                                 torch.tensor(ds.tr_ms[sl], dtype=torch.float32),
                                 torch.tensor(ds.te_ms[sl], dtype=torch.float32),
                                 torch.tensor(ds.flip_deg[sl], dtype=torch.float32))
            out = net(x, m0[sl]).numpy().astype(float)
            sig[sl] = out[:, :, 0] + 1j * out[:, :, 1]
            d1[sl] = (out[:, :, 2] + 1j * out[:, :, 3]) * deriv_scale[0]
            d2[sl] = (out[:, :, 4] + 1j * out[:, :, 5]) * deriv_scale[1]
    return sig, d1, d2
