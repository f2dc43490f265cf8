"""Smoke test for the `indiff` Python extension.

Build and install with `maturin develop --release -m crates/python/Cargo.toml`
(or `pip install ./crates/python`), then run `python python/smoke_test.py`.
"""

import math

import indiff


def norm_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    sigma = indiff.SpdMatrix([[1.0]])
    model = indiff.BachelierModel([0.0], [0.0], [[1.0]], 1.0)
    call = indiff.Payoff.basket_call([1.0], 0.0)

    for a in (0.25, 1.0, 4.0):
        pricer = indiff.Pricer(a, model, call)
        z = math.sqrt(a) / 2.0
        expected = z * norm_cdf(z) + norm_pdf(z)
        close(pricer.indifference_limit([0.0]), expected, 1e-8)
        close(pricer.dual_lower_bound([0.0], "optimal"), pricer.limit_value([0.0]), 1e-5)
        close(pricer.g([0.3]), indiff.sup_convolve_g(call, a, sigma, [0.3]), 1e-4)

    pricer = indiff.Pricer(1.0, model, call)
    close(pricer.dual_lower_bound([0.0], "zero"), 1.0 / math.sqrt(2.0 * math.pi), 1e-6)
    assert abs(pricer.pde_residual(0.3, [0.2])) < 1e-3
    assert 0.0 < pricer.delta(0.5, [0.1])[0] < 1.0

    straddle = indiff.Payoff.named("straddle", 1, [1.0], 0.0)
    assert straddle([-2.0]) == 2.0
    assert indiff.Pricer(1.0, model, straddle).price(0.0, [0.0]) > 0.0

    close(indiff.kernel_limit_integral(1.0, 0.05, sigma, 1.0, 0.5, "K")[0][0], 0.25, 1e-6)
    g = indiff.kernel_g(1.0, 0.2, sigma, 1.0, 0.5)[0][0]
    assert 0.0 < g < 1.0

    hedger = indiff.Hedger(pricer, 0.4)
    traj = hedger.integrate_strategy([0.0], seed=7, n_steps=200)
    assert len(traj["positions"]) == 201
    assert math.isfinite(traj["terminal_wealth"])
    ce, se = hedger.certainty_equivalent([0.0], 2000, seed=1, n_steps=200)
    assert ce <= pricer.limit_value([0.0]) + 3.0 * se
    ratio, rse = hedger.supermartingale_ratio([0.0], 2000, seed=2, n_steps=200)
    assert ratio <= 1.0 + 3.0 * rse

    try:
        indiff.SpdMatrix([[1.0, 2.0], [2.0, 1.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("indefinite matrix accepted")

    print(f"smoke test passed (ce = {ce:.6f} +/- {se:.6f}, M ratio = {ratio:.4f})")


if __name__ == "__main__":
    main()
