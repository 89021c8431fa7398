"""Smoke test for the pyhetsense extension module.

Build and run:
    cargo build --release -p hetsense-py --features extension-module
    cp target/release/libpyhetsense.so python/pyhetsense.so
    python3 python/smoke_test.py
(or `maturin develop -m crates/py/Cargo.toml` inside a virtualenv).
"""

import cmath
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyhetsense as hs


def close(a, b, tol=1e-8):
    return abs(a - b) <= tol


def main():
    print("pyhetsense", hs.__version__)

    # exact recovery on a noise-free linear system
    eigs = [complex(-0.2, 2.0), complex(-0.2, -2.0), complex(-0.7, 0.0)]
    snaps = hs.lti_field(5, 4, eigs, 1, 40, 0.1)
    assert len(snaps) == 40 and len(snaps[0]) == 20
    model = hs.DmdModel.fit(snaps, 0.1)
    assert model.rank == 3, model
    omegas = model.continuous_eigenvalues()
    for e in eigs:
        assert min(abs(w - e) for w in omegas) < 1e-8, (e, omegas)
    rec = model.reconstruct(7)
    assert max(abs(p - q) for p, q in zip(rec, snaps[7])) < 1e-8

    # placement and gappy reconstruction from the chosen points
    centers, weights = hs.optimal_placement(model, 5, 4, 0.0, 3)
    assert len(set(centers)) == 3 and len(weights) == 3
    truth = snaps[11]
    est = model.reconstruct_from(sorted(centers), [truth[i] for i in sorted(centers)])
    assert max(abs(p - q) for p, q in zip(est, truth)) < 1e-6
    assert hs.DmdModel.fit(snaps, 0.1).placement_objective(centers) > float("-inf")

    # online updates against batch
    grid = [complex(-0.5, 0), complex(-1, 0), complex(-2, 0), complex(-3, 0)]
    data = hs.lti_field(2, 2, grid, 3, 30, 0.1)
    lt = hs.LongTermOnline(data[:10], 0.1)
    lt.update(data[10:])
    gen = hs.GeneralOnline(data[:10], 0.1)
    gen.update(data[10:])
    batch = sorted(hs.DmdModel.fit(data, 0.1).continuous_eigenvalues(), key=lambda z: z.real)
    for m in (lt.model(), gen.model()):
        got = sorted(m.continuous_eigenvalues(), key=lambda z: z.real)
        assert all(abs(a - b) < 1e-8 for a, b in zip(got, batch)), (got, batch)

    # checkpoints
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "lt.hsmd")
        lt.save(path)
        again = hs.LongTermOnline.load(path)
        assert again.pairs_seen == lt.pairs_seen == 29
        model.save(os.path.join(d, "m.hsmd"))
        assert hs.DmdModel.load(os.path.join(d, "m.hsmd")).rank == 3

    # coverage: the two-robot line converges to the segment centroids
    pos, costs = hs.lloyd(10, 1, [(0.0, 0.0), (1.0, 0.0)], max_iters=200, tol=1e-9)
    xs = sorted(p[0] for p in pos)
    assert close(xs[0], 2.0, 1e-6) and close(xs[1], 7.0, 1e-6), xs
    assert all(b <= a + 1e-12 for a, b in zip(costs, costs[1:]))

    # closed loop, deterministic per seed
    a = hs.scenario(3, "t_total = 40")
    b = hs.scenario(3, "t_total = 40")
    strip = lambda s: [",".join(l.split(",")[:-1]) for l in s.splitlines()]
    assert strip(a) == strip(b)
    assert a.splitlines()[0].startswith("step,time,mse_heterogeneous")

    noisy = hs.inject_noise([0.0] * 5, 0.1, 7)
    assert noisy == hs.inject_noise([0.0] * 5, 0.1, 7) and any(v != 0 for v in noisy)
    assert cmath.isfinite(model.dominant_omega())
    print("smoke test passed")


if __name__ == "__main__":
    main()
