import contextlib

import numpy as np
import pytest

from handpose.micronet import network as _network


def finite_diff(f, x, h=1e-5, idx=None):
    """Central difference of scalar ``f`` w.r.t. the flat entries ``idx`` of ``x`` (modified in place)."""
    flat = x.reshape(-1)
    idx = range(flat.size) if idx is None else idx
    out = []
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out.append((fp - fm) / (2 * h))
    return np.array(out)


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))


@contextlib.contextmanager
def _recording_relu(store):
    orig = _network.leaky_relu

    def rec(z):
        store.append(z > 0)
        return orig(z)

    _network.leaky_relu = rec
    try:
        yield
    finally:
        _network.leaky_relu = orig


def crosses_kink(f, x, i, h=1e-5):
    """True if moving flat entry ``i`` of ``x`` by +-h flips any leaky-ReLU input sign in ``f``.

    Central differences are only valid where the loss is smooth over the
    whole step; such coordinates are resampled, not scored.
    """
    flat = x.reshape(-1)
    old = flat[i]
    signs = []
    for v in (old + h, old - h):
        flat[i] = v
        store = []
        with _recording_relu(store):
            f()
        signs.append(store)
    flat[i] = old
    return any(not np.array_equal(a, b) for a, b in zip(*signs))


def network_fd_check(params, loss_fn, grads, rng, n_coords, h=1e-5):
    """Relative error of analytic ``grads`` on ``n_coords`` random smooth coordinates, plus skip count."""
    names = list(params.arrays)
    an, num, skipped = [], [], 0
    while len(an) < n_coords:
        name = names[rng.integers(len(names))]
        flat = params.arrays[name].reshape(-1)
        i = int(rng.integers(flat.size))
        if crosses_kink(loss_fn, params.arrays[name], i, h):
            skipped += 1
            continue
        an.append(grads[name].reshape(-1)[i])
        num.append(finite_diff(loss_fn, params.arrays[name], h, [i])[0])
    return rel_err(an, num), skipped


def flood_components(mask):
    """Oracle labelling: repeated min-label propagation over 4-neighbours until stable."""
    h, w = mask.shape
    big = h * w + 1
    lab = np.where(mask, np.arange(h * w).reshape(h, w), big)
    while True:
        p = np.pad(lab, 1, constant_values=big)
        nb = np.minimum.reduce([p[1:-1, 1:-1], p[:-2, 1:-1], p[2:, 1:-1], p[1:-1, :-2], p[1:-1, 2:]])
        new = np.where(mask, nb, big)
        if np.array_equal(new, lab):
            break
        lab = new
    return [np.argwhere(lab == v) for v in np.unique(lab[mask])]


def mann_whitney(pos, neg):
    s = 0.0
    for p in pos:
        for n in neg:
            s += 1.0 if p > n else 0.5 if p == n else 0.0
    return s / (len(pos) * len(neg))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
