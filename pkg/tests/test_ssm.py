import numpy as np
import pytest

from ssmamba.autograd import (ContractViolation, Parameter, Tensor,
                              gradient_check)
from ssmamba.ssm import (Backbone, ScanState, SsmParams, compute_gates,
                         discretize, inject_context, layer_forward,
                         selective_scan)


def naive_gates(xproj, params):
    """Per-timestep loop reference for compute_gates."""
    B, L, D = xproj.shape
    N = params.state_size
    Bt = np.zeros((B, L, N))
    Ct = np.zeros((B, L, N))
    dt = np.zeros((B, L))
    sB = params.s_B.data.astype(np.float64)
    sC = params.s_C.data.astype(np.float64)
    sd = params.s_delta.data.astype(np.float64)
    bias = float(params.delta_bias.data[0])
    for b in range(B):
        for l in range(L):
            Bt[b, l] = sB @ xproj[b, l]
            Ct[b, l] = sC @ xproj[b, l]
            pre = bias + float(sd[0] @ xproj[b, l])
            dt[b, l] = np.log1p(np.exp(-abs(pre))) + max(pre, 0.0)
    return Bt, Ct, dt


def naive_scan(a, b, c, x, h0=None):
    """Literal per-step recurrence in float64."""
    B, L, N = a.shape
    D = x.shape[-1]
    h = np.zeros((B, D, N)) if h0 is None else h0.astype(np.float64).copy()
    y = np.zeros((B, L, D))
    for l in range(L):
        for bb in range(B):
            for d in range(D):
                h[bb, d] = a[bb, l] * h[bb, d] + b[bb, l] * x[bb, l, d]
                y[bb, l, d] = c[bb, l] @ h[bb, d]
    return y, h


def test_gates_zero_input_softplus_bias():
    params = SsmParams(state_size=4, channels=3, seed=0)
    params.delta_bias.data[:] = 0.0
    x = Tensor(np.zeros((2, 5, 3), dtype=np.float32))
    B_t, C_t, delta = compute_gates(x, params)
    assert np.allclose(delta.data, np.log(2.0), atol=1e-6)


def test_gates_zero_sB_gives_zero_B():
    params = SsmParams(state_size=4, channels=3, seed=0)
    params.s_B.data[:] = 0.0
    x = Tensor(np.random.default_rng(0).standard_normal((2, 5, 3)).astype(np.float32))
    B_t, _, _ = compute_gates(x, params)
    assert np.all(B_t.data == 0.0)


def test_gates_match_naive_loop():
    rng = np.random.default_rng(1)
    params = SsmParams(state_size=6, channels=4, seed=1)
    x64 = rng.standard_normal((3, 7, 4))
    for p in params.parameters():
        p.data = p.data.astype(np.float64)
    B_t, C_t, delta = compute_gates(Tensor(x64), params)
    rB, rC, rd = naive_gates(x64, params)
    assert np.max(np.abs(B_t.data - rB)) < 1e-6
    assert np.max(np.abs(C_t.data - rC)) < 1e-6
    assert np.max(np.abs(delta.data - rd)) < 1e-6


def test_discretize_limits():
    A = Tensor(np.array([-1.0, -2.0]))
    delta = Tensor(np.full((1, 3), 1e-9, dtype=np.float32))
    B_t = Tensor(np.ones((1, 3, 2), dtype=np.float32))
    Abar, Bbar = discretize(delta, A, B_t)
    assert np.allclose(Abar.data, 1.0, atol=1e-6)
    assert np.allclose(Bbar.data, 0.0, atol=1e-6)


def test_discretize_exact_half():
    A = Tensor(np.array([-1.0]))
    delta = Tensor(np.full((1, 1), np.log(2.0), dtype=np.float64))
    B_t = Tensor(np.ones((1, 1, 1), dtype=np.float64))
    Abar, _ = discretize(delta, A, B_t)
    assert Abar.data[0, 0, 0] == pytest.approx(0.5, abs=1e-12)


def test_discretize_range_and_contract():
    rng = np.random.default_rng(2)
    A = Tensor(-rng.uniform(0.1, 5.0, 8))
    delta = Tensor(rng.uniform(0.01, 2.0, (2, 9)))
    B_t = Tensor(rng.standard_normal((2, 9, 8)))
    Abar, _ = discretize(delta, A, B_t)
    assert np.all((Abar.data > 0.0) & (Abar.data < 1.0))
    with pytest.raises(ContractViolation):
        discretize(Tensor(np.zeros((1, 1))), A, Tensor(np.zeros((1, 1, 8))))


def test_inject_context_identity_cases():
    rng = np.random.default_rng(3)
    Bbar = Tensor(rng.standard_normal((2, 4, 3)).astype(np.float32))
    e = Tensor(np.zeros((2, 3), dtype=np.float32))
    k = Tensor(np.zeros((2, 4, 3), dtype=np.float32))
    out = inject_context(Bbar, e, k, 1.0, 1.0)
    assert np.array_equal(out.data, Bbar.data)
    # scales-off ablation is the exact same tensor
    out2 = inject_context(Bbar, e, k, 0.0, 0.0)
    assert out2 is Bbar


def test_inject_context_single_element():
    Bbar = Tensor(np.full((1, 1, 1), 1.0, dtype=np.float32))
    e = Tensor(np.full((1, 1), 2.0, dtype=np.float32))
    k = Tensor(np.full((1, 1, 1), 3.0, dtype=np.float32))
    out = inject_context(Bbar, e, k, 1.0, 1.0)
    assert out.data[0, 0, 0] == pytest.approx(6.0)


def test_inject_context_shape_contract():
    Bbar = Tensor(np.zeros((2, 4, 3), dtype=np.float32))
    bad_e = Tensor(np.zeros((3, 3), dtype=np.float32))
    with pytest.raises(ContractViolation):
        inject_context(Bbar, bad_e, None, 1.0, 0.0)


def test_scan_memoryless_when_A_zero():
    rng = np.random.default_rng(4)
    B, L, N, D = 2, 6, 3, 2
    a = np.zeros((B, L, N))
    b = rng.standard_normal((B, L, N))
    c = rng.standard_normal((B, L, N))
    x = rng.standard_normal((B, L, D))
    y, _ = selective_scan(Tensor(a), Tensor(b), Tensor(c), Tensor(x))
    expect = np.einsum("bln,bln,bld->bld", c, b, x)
    assert np.max(np.abs(y.data - expect)) < 1e-9


def test_scan_running_sum():
    ones = np.ones((1, 3, 1))
    x = np.ones((1, 3, 1))
    y, h = selective_scan(Tensor(ones), Tensor(ones), Tensor(ones), Tensor(x))
    assert y.data.reshape(-1).tolist() == [1.0, 2.0, 3.0]
    assert h.position == 3
    assert h.h[0, 0, 0] == pytest.approx(3.0)


@pytest.mark.parametrize("seed", range(8))
def test_scan_matches_naive_recurrence(seed):
    rng = np.random.default_rng(seed)
    B = int(rng.integers(1, 4))
    L = int(rng.integers(2, 65))
    N = int(rng.integers(1, 17))
    D = int(rng.integers(1, 5))
    a = rng.uniform(0.0, 1.0, (B, L, N))
    b = rng.standard_normal((B, L, N))
    c = rng.standard_normal((B, L, N))
    x = rng.standard_normal((B, L, D))
    y, hL = selective_scan(Tensor(a), Tensor(b), Tensor(c), Tensor(x))
    ry, rh = naive_scan(a, b, c, x)
    assert np.max(np.abs(y.data - ry)) < 1e-6
    assert np.max(np.abs(hL.h - rh)) < 1e-6


def test_scan_respects_initial_state():
    rng = np.random.default_rng(9)
    a = rng.uniform(0, 1, (1, 4, 2))
    b = rng.standard_normal((1, 4, 2))
    c = rng.standard_normal((1, 4, 2))
    x = rng.standard_normal((1, 4, 3))
    h0 = rng.standard_normal((1, 3, 2))
    y, _ = selective_scan(Tensor(a), Tensor(b), Tensor(c), Tensor(x),
                          h0=ScanState(h0))
    ry, _ = naive_scan(a, b, c, x, h0=h0)
    assert np.max(np.abs(y.data - ry)) < 1e-6


def test_scan_gradients_pass_fd():
    rng = np.random.default_rng(11)
    B, L, N, D = 2, 5, 3, 2
    a = Parameter(rng.uniform(0.1, 0.9, (B, L, N)), "a", dtype=np.float64)
    b = Parameter(rng.standard_normal((B, L, N)), "b", dtype=np.float64)
    c = Parameter(rng.standard_normal((B, L, N)), "c", dtype=np.float64)
    x = Parameter(rng.standard_normal((B, L, D)), "x", dtype=np.float64)

    def f():
        y, _ = selective_scan(a, b, c, x)
        return (y * y).mean()

    reports = gradient_check(f, [a, b, c, x], h=1e-5)
    assert all(r.passed for r in reports), reports


def test_stability_bounded_over_long_horizon():
    # A < 0, delta > 0, bounded inputs, context off: state stays bounded
    rng = np.random.default_rng(13)
    N, D = 8, 2
    A = -rng.uniform(0.5, 4.0, N)
    steps, chunk = 10000, 500
    h = ScanState(np.zeros((1, D, N)))
    for _ in range(steps // chunk):
        delta = rng.uniform(0.01, 1.0, (1, chunk))
        abar = np.exp(delta[..., None] * A)
        bbar = rng.uniform(-1.0, 1.0, (1, chunk, N))
        bbar /= max(1.0, np.max(np.abs(bbar)))
        c = rng.standard_normal((1, chunk, N))
        x = rng.uniform(-1.0, 1.0, (1, chunk, D))
        _, h = selective_scan(Tensor(abar), Tensor(bbar), Tensor(c), Tensor(x),
                              h0=h)
        assert np.all(np.isfinite(h.h))
        # geometric-series bound: |h| <= |B|max * |x|max / (1 - max Abar)
        bound = 1.0 / (1.0 - np.exp(0.01 * A.max()))
        assert np.max(np.abs(h.h)) <= bound


def test_layer_forward_all_zero_except_out_proj_gives_zero():
    params = SsmParams(state_size=4, channels=3, seed=5)
    for p in params.parameters():
        if p is not params.out_proj:
            p.data[:] = 0.0
    x = Tensor(np.random.default_rng(0).standard_normal((2, 6)).astype(np.float32))
    y = layer_forward(x, None, None, params)
    assert np.all(y.data == 0.0)


def test_layer_forward_skip_only_is_persistence():
    params = SsmParams(state_size=4, channels=3, seed=5)
    params.out_proj.data[:] = 0.0    # skip stays at its identity init
    x = Tensor(np.random.default_rng(0).standard_normal((2, 6)).astype(np.float32))
    y = layer_forward(x, None, None, params)
    assert np.array_equal(y.data, x.data)


def test_batch_independence_and_permutation():
    rng = np.random.default_rng(14)
    bb = Backbone(state_size=6, channels=3, seed=6)
    x = rng.standard_normal((3, 8)).astype(np.float32)
    e = rng.standard_normal((3, 6)).astype(np.float32)
    tev = rng.standard_normal((3, 8, 6)).astype(np.float32)
    y = bb.forward(Tensor(x), Tensor(e), Tensor(tev)).data
    perm = [2, 0, 1]
    y_perm = bb.forward(Tensor(x[perm]), Tensor(e[perm]), Tensor(tev[perm])).data
    assert np.array_equal(y_perm, y[perm])
    # row 0 output unchanged when other rows change
    x2 = x.copy()
    x2[1:] = rng.standard_normal((2, 8))
    y2 = bb.forward(Tensor(x2), Tensor(e), Tensor(tev)).data
    assert np.array_equal(y2[0], y[0])


def test_context_off_matches_plain_backbone_bitwise():
    rng = np.random.default_rng(15)
    x = rng.standard_normal((2, 7)).astype(np.float32)
    e = rng.standard_normal((2, 5)).astype(np.float32)
    tev = rng.standard_normal((2, 7, 5)).astype(np.float32)
    on = Backbone(state_size=5, channels=2, e_scale=0.0, k_scale=0.0, seed=7)
    off = Backbone(state_size=5, channels=2, e_scale=1.0, k_scale=1.0, seed=7)
    y_ctx_zeroed = on.forward(Tensor(x), Tensor(e), Tensor(tev)).data
    y_plain = off.forward(Tensor(x), None, None).data
    assert np.array_equal(y_ctx_zeroed, y_plain)


def test_backbone_gradcheck_with_context():
    rng = np.random.default_rng(16)
    bb = Backbone(state_size=4, channels=2, seed=8)
    for p in bb.parameters():
        p.data = p.data.astype(np.float64)
    x = rng.standard_normal((2, 5))
    e = Parameter(rng.standard_normal((2, 4)), "e", dtype=np.float64)
    tev = Parameter(rng.standard_normal((2, 5, 4)), "tev", dtype=np.float64)
    tg = rng.standard_normal((2, 5))

    def f():
        d = bb.forward(Tensor(x), e, tev) - Tensor(tg)
        return (d * d).mean()

    reports = gradient_check(f, bb.parameters() + [e, tev], h=1e-5)
    assert all(r.passed for r in reports), reports


def test_negative_A_invariant():
    params = SsmParams(state_size=16, channels=4)
    params.check_stability()
    assert np.all(params.A.data < 0.0)
    with pytest.raises(ContractViolation):
        SsmParams(state_size=0, channels=1)
