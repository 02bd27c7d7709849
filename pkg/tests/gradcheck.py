import numpy as np

from swarmdensity.geometry import GridSpec
from swarmdensity.regressor import ArchSpec, RegressorParams, backward_batch, batch_loss, forward_batch


def toy_instance(seed):
    """Small float64 network with randomized shapes, tail and non-zero biases."""
    rng = np.random.default_rng([seed, 77])
    tail = ("one_by_one_conv", "fully_connected")[seed % 2]
    grid = [GridSpec(1, 1), GridSpec(2, 2), GridSpec(3, 2)][seed % 3]
    stages = [((3, 2), (4, 1)), ((2, 1), (3, 1)), ((4, 1),)][seed % 3]
    h_in = int(rng.integers(4, 7)) * 2 ** len(stages) + int(rng.integers(0, 2))
    w_in = int(rng.integers(4, 7)) * 2 ** len(stages) + int(rng.integers(0, 2))
    arch = ArchSpec(w_in=w_in, h_in=h_in, n_bin=4, grid=grid, stages=stages, tail=tail)
    rp = RegressorParams.initial(arch, seed, np.float64)
    for k, v in rp.tensors.items():
        if k.endswith(".b"):
            v[...] = rng.normal(0, 0.1, v.shape)
    x = rng.random((2, h_in, w_in, 3))
    y = rng.random((2, arch.n_out)) * 2
    w = rng.uniform(0.5, 3.0, arch.n_bin)
    return rp, x, y, w


def signature(caches):
    """ReLU masks and pooling choices; identical signatures mean the same linear region."""
    parts = []
    for kind, _, _, c2 in caches:
        if kind == "conv":
            c_relu, c_pool = c2
            parts.append(c_relu.tobytes())
            if c_pool is not None:
                parts.extend(m.tobytes() for m in c_pool[1])
    return hash(tuple(parts))


def objective(rp, x, y, w):
    out, caches = forward_batch(rp, x, keep=True)
    norms, _ = batch_loss(out, y, w)
    return float(np.mean(norms ** 2)), signature(caches)


def finite_difference_check(seeds, h=1e-3):
    """Central differences on every parameter of every toy instance.

    Perturbations that flip a ReLU mask or a pooling choice straddle a kink
    and are skipped.  Returns ``(worst relative error, checked, skipped,
    tails seen, layer kinds seen)``.
    """
    worst, checked, skipped = 0.0, 0, 0
    tails, kinds = set(), set()
    for seed in seeds:
        rp, x, y, w = toy_instance(seed)
        tails.add(rp.arch.tail)
        _, sig0 = objective(rp, x, y, w)
        out, caches = forward_batch(rp, x, keep=True)
        _, dout = batch_loss(out, y, w)
        grads = backward_batch(rp, caches, dout)
        for name, p in rp.tensors.items():
            kinds.add(name.split(".")[0].rstrip("0123456789_"))
            flat = p.reshape(-1)
            g = grads[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp, sp = objective(rp, x, y, w)
                flat[i] = orig - h
                fm, sm = objective(rp, x, y, w)
                flat[i] = orig
                if sp != sig0 or sm != sig0:
                    skipped += 1
                    continue
                num = (fp - fm) / (2 * h)
                rel = abs(num - g[i]) / max(abs(num), abs(g[i]), 1e-6)
                worst = max(worst, rel)
                checked += 1
    return worst, checked, skipped, tails, kinds
