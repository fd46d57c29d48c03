"""Finite-difference verification of every analytic gradient in the package."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses
from .data import encoder_inputs
from .losses import LabelSets
from .model import C2AEModel, objective, objective_and_grads
from .nn import backward, finite_diff_grad, forward, init_network, relative_error

FD_STEP = 1e-5
# Cases with a pre-activation this close to the leaky-ReLU kink are redrawn:
# the central difference would straddle the kink.
KINK_MARGIN = 1e-3


@dataclass
class CheckResult:
    name: str
    cases: int
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: {self.cases} cases, "
                f"max rel error {self.max_error:.3e} (tol {self.tolerance:.0e})")


def random_ternary(rng, m, n, p_pos=0.35, p_missing=0.2):
    u = rng.random((m, n))
    labels = np.where(u < p_pos, 1, 0)
    labels = np.where(u > 1.0 - p_missing, -1, labels)
    return labels.astype(np.int8)


def latent_case_error(rng, grad_fn=losses.latent_grads, normalize=False):
    """One random latent batch; returns the gradient error against finite differences."""
    l = int(rng.integers(1, 9))
    n = int(rng.integers(1, 17))
    lam = float(rng.uniform(0.1, 1.0))
    cx = rng.normal(0.0, 0.5, (l, n))
    cy = rng.normal(0.0, 0.5, (l, n))
    d_cx, d_cy = grad_fn(cx, cy, lam, normalize)
    flat = np.concatenate([cx.ravel(), cy.ravel()])

    def f(v):
        return losses.latent_loss(v[:l * n].reshape(l, n), v[l * n:].reshape(l, n), lam, normalize)

    fd = finite_diff_grad(f, flat, FD_STEP)
    return relative_error(np.concatenate([d_cx.ravel(), d_cy.ravel()]), fd)


def output_case_error(rng):
    m = int(rng.integers(2, 13))
    n = int(rng.integers(1, 17))
    sets = LabelSets.from_ternary(random_ternary(rng, m, n))
    scores = rng.normal(0.0, 1.0, (m, n))
    analytic = losses.output_grad(scores, sets)
    fd = finite_diff_grad(lambda v: losses.output_loss(v.reshape(m, n), sets), scores.ravel(), FD_STEP)
    return relative_error(analytic.ravel(), fd)


def bce_case_error(rng):
    m = int(rng.integers(2, 13))
    n = int(rng.integers(1, 17))
    sets = LabelSets.from_ternary(random_ternary(rng, m, n))
    scores = rng.normal(0.0, 2.0, (m, n))
    _, analytic = losses.bce_loss(scores, sets)
    fd = finite_diff_grad(lambda v: losses.bce_loss(v.reshape(m, n), sets)[0], scores.ravel(), FD_STEP)
    return relative_error(analytic.ravel(), fd)


def _near_kink(*caches):
    return any(np.min(np.abs(z)) < KINK_MARGIN for cache in caches for _, z in cache)


def network_case_error(rng):
    """Random small network, scalar loss sum(R * out) for a random R."""
    while True:
        err = _network_case(rng)
        if err is not None:
            return err


def _network_case(rng):
    depth = int(rng.integers(1, 4))
    dims = [int(k) for k in rng.integers(1, 17, size=depth + 1)]
    n = int(rng.integers(1, 9))
    net = init_network(dims, rng, output_activation="leaky_relu" if rng.random() < 0.5 else "linear",
                       slope=float(rng.uniform(0.01, 0.3)))
    for layer in net.layers:
        layer.bias[:] = rng.normal(0.0, 0.1, layer.bias.shape)
    x = rng.normal(0.0, 1.0, (dims[0], n))
    r = rng.normal(0.0, 1.0, (dims[-1], n))
    out, cache = forward(net, x)
    if _near_kink(cache):
        return None
    grads, grad_in = backward(net, cache, r)
    analytic = np.concatenate([g.ravel() for g in grads] + [grad_in.ravel()])
    base = net.get_flat()
    n_params = base.size

    def f(v):
        probe = net.copy()
        probe.set_flat(v[:n_params])
        y, _ = forward(probe, v[n_params:].reshape(x.shape))
        return float(np.sum(r * y))

    fd = finite_diff_grad(f, np.concatenate([base, x.ravel()]), FD_STEP)
    return relative_error(analytic, fd)


def tiny_model(rng, loss_mode="c2ae"):
    d = int(rng.integers(1, 7))
    m = int(rng.integers(2, 7))
    l = int(rng.integers(1, 4))
    hidden = [int(rng.integers(1, 7))] if rng.random() < 0.7 else []
    fx = init_network([d, *hidden, l], rng, slope=0.1)
    fd = init_network([l, m], rng)
    fe = init_network([m, l], rng) if loss_mode == "c2ae" else None
    for net in (fx, fd, fe):
        if net is not None:
            for layer in net.layers:
                layer.bias[:] = rng.normal(0.0, 0.1, layer.bias.shape)
    return C2AEModel(fx=fx, fd=fd, fe=fe, alpha=float(rng.uniform(0.1, 10.0)),
                     lam=float(rng.uniform(0.1, 1.0)), loss_mode=loss_mode,
                     missing_mode=bool(rng.random() < 0.5),
                     normalize_whitening=bool(rng.random() < 0.5))


def objective_case_error(rng, loss_mode="c2ae"):
    """Gradient of the full training objective w.r.t. every network parameter."""
    while True:
        err = _objective_case(rng, loss_mode)
        if err is not None:
            return err


def _objective_case(rng, loss_mode):
    model = tiny_model(rng, loss_mode)
    n = int(rng.integers(1, 5))
    x = rng.normal(0.0, 1.0, (model.n_features, n))
    labels = random_ternary(rng, model.n_labels, n, p_pos=0.5, p_missing=0.15)
    enc = encoder_inputs(labels, model.missing_mode)
    sets = LabelSets.from_ternary(labels)
    if _near_kink(forward(model.fx, x)[1]):
        return None
    _, _, _, grads = objective_and_grads(model, x, enc, sets)
    names = list(model.networks())
    analytic = np.concatenate([g.ravel() for name in names for g in grads[name]])
    sizes = [model.networks()[name].get_flat().size for name in names]
    base = np.concatenate([model.networks()[name].get_flat() for name in names])

    def f(v):
        probe = model.copy()
        offset = 0
        for name, size in zip(names, sizes):
            probe.networks()[name].set_flat(v[offset:offset + size])
            offset += size
        return objective(probe, x, enc, sets)[2]

    return relative_error(analytic, finite_diff_grad(f, base, FD_STEP))


def _run(name, fn, rng, cases, tol):
    errors = [fn(rng) for _ in range(cases)]
    return CheckResult(name, cases, max(errors), tol)


def run_suite(seed=0, cases=200):
    """Run every gradient check; returns a list of :class:`CheckResult`."""
    rng = np.random.default_rng(seed)
    results = [
        _run("network backward", network_case_error, rng, max(100, cases // 2), 1e-6),
        _run("latent loss", latent_case_error, rng, cases, 1e-6),
        _run("latent loss, 1/n whitening",
             lambda r: latent_case_error(r, normalize=True), rng, cases, 1e-6),
        _run("ranking loss", output_case_error, rng, cases, 1e-6),
        _run("bce loss", bce_case_error, rng, cases, 1e-6),
    ]
    for mode in ("c2ae", "bpmll", "bce"):
        results.append(_run(f"objective ({mode})",
                            lambda r, mode=mode: objective_case_error(r, mode), rng, 20, 1e-4))
    return results
