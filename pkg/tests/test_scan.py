"""Selective-scan kernels against a from-scratch recurrence oracle."""

import numpy as np
import pytest
import torch

from ctenhance.models.scan import SsmParams, selective_scan_1d


def naive_scan(x, delta, A, B, C, D=None):
    """Literal per-element recurrence in numpy, written independently."""
    x, delta, A, B, C = (np.asarray(t, dtype=np.float64) for t in (x, delta, A, B, C))
    batch, channels, length = x.shape
    state = A.shape[1]
    y = np.zeros((batch, channels, length))
    for b in range(batch):
        for d in range(channels):
            h = np.zeros(state)
            for t in range(length):
                h = np.exp(delta[b, d, t] * A[d]) * h + delta[b, d, t] * B[b, :, t] * x[b, d, t]
                y[b, d, t] = float(np.dot(C[b, :, t], h))
    if D is not None:
        y = y + np.asarray(D, dtype=np.float64)[None, :, None] * x
    return y


def random_params(batch, channels, length, state, seed=0, dtype=torch.float64, with_skip=True):
    g = torch.Generator().manual_seed(seed)

    def r(*shape):
        return torch.rand(shape, generator=g, dtype=dtype) * 2 - 1

    x = r(batch, channels, length)
    params = SsmParams(
        A=-torch.rand((channels, state), generator=g, dtype=dtype) - 0.05,
        B=r(batch, state, length),
        C=r(batch, state, length),
        delta=torch.rand((batch, channels, length), generator=g, dtype=dtype) * 0.9 + 0.05,
        D=r(channels) if with_skip else None,
    )
    return x, params


BACKENDS = ("reference", "numba")


class TestForwardOracle:
    @pytest.mark.parametrize("backend", BACKENDS)
    @pytest.mark.parametrize("with_skip", [False, True])
    def test_matches_naive_recurrence(self, backend, with_skip):
        x, p = random_params(2, 3, 17, 4, seed=1, with_skip=with_skip)
        got = selective_scan_1d(x, p, backend=backend).numpy()
        want = naive_scan(x, p.delta, p.A, p.B, p.C, p.D)
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("shape", [(1, 1, 1, 1), (1, 2, 300, 8), (3, 5, 64, 2)])
    def test_backends_agree(self, shape):
        batch, channels, length, state = shape
        x, p = random_params(batch, channels, length, state, seed=2)
        ref = selective_scan_1d(x, p, backend="reference")
        fast = selective_scan_1d(x, p, backend="numba")
        torch.testing.assert_close(ref, fast, rtol=1e-9, atol=1e-11)

    def test_float32_inputs_supported(self):
        x, p = random_params(1, 2, 40, 4, seed=3, dtype=torch.float32)
        out = selective_scan_1d(x, p, backend="numba")
        assert out.dtype == torch.float32
        ref = selective_scan_1d(x, p, backend="reference")
        torch.testing.assert_close(out, ref, rtol=1e-4, atol=1e-5)

    def test_auto_backend_dispatch(self):
        # both branches must produce the oracle's answer
        for length in (8, 600):
            x, p = random_params(1, 1, length, 3, seed=4)
            got = selective_scan_1d(x, p, backend="auto").numpy()
            want = naive_scan(x, p.delta, p.A, p.B, p.C, p.D)
            np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-11)


class TestBackward:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_numba_gradients_match_reference_autograd(self, seed):
        x, p = random_params(2, 3, 25, 4, seed=seed)
        leaves = {}
        outs = {}
        for backend in BACKENDS:
            xx = x.clone().requires_grad_(True)
            pp = SsmParams(
                A=p.A.clone().requires_grad_(True),
                B=p.B.clone().requires_grad_(True),
                C=p.C.clone().requires_grad_(True),
                delta=p.delta.clone().requires_grad_(True),
                D=p.D.clone().requires_grad_(True),
            )
            y = selective_scan_1d(xx, pp, backend=backend)
            # weighted sum makes every output position matter
            w = torch.linspace(0.5, 2.0, y.numel(), dtype=y.dtype).reshape(y.shape)
            (y * w).sum().backward()
            leaves[backend] = (xx, pp)
            outs[backend] = y
        torch.testing.assert_close(outs["numba"], outs["reference"])
        for name in ("A", "B", "C", "delta"):
            torch.testing.assert_close(
                getattr(leaves["numba"][1], name).grad,
                getattr(leaves["reference"][1], name).grad,
                rtol=1e-8,
                atol=1e-10,
                msg=f"grad mismatch for {name}",
            )
        torch.testing.assert_close(leaves["numba"][0].grad, leaves["reference"][0].grad)

    def test_gradcheck_numba(self):
        x, p = random_params(1, 2, 7, 3, seed=5)
        x = x.requires_grad_(True)
        A = p.A.clone().requires_grad_(True)
        B = p.B.clone().requires_grad_(True)
        C = p.C.clone().requires_grad_(True)
        delta = p.delta.clone().requires_grad_(True)

        def fn(x, A, B, C, delta):
            return selective_scan_1d(x, SsmParams(A=A, B=B, C=C, delta=delta), backend="numba")

        assert torch.autograd.gradcheck(fn, (x, A, B, C, delta), eps=1e-6, atol=1e-7)


class TestStability:
    def test_long_sequence_stays_bounded(self):
        # negative A keeps the propagator in (0, 1): no blowup over 10k steps
        x, p = random_params(1, 2, 10_000, 4, seed=6)
        y = selective_scan_1d(x, p, backend="numba")
        assert torch.all(torch.isfinite(y))
        # crude bound: |y_t| <= |C| |h| + |D x|, h a geometric sum
        assert y.abs().max() < 1e3


class TestValidation:
    def test_param_shape_checks(self):
        x, p = random_params(2, 3, 5, 4)
        with pytest.raises(ValueError, match="A must be"):
            SsmParams(A=p.A[0], B=p.B, C=p.C, delta=p.delta)
        with pytest.raises(ValueError, match="B must be"):
            SsmParams(A=p.A, B=p.B[:, :2], C=p.C, delta=p.delta)
        with pytest.raises(ValueError, match="C must match"):
            SsmParams(A=p.A, B=p.B, C=p.C[:1], delta=p.delta)
        with pytest.raises(ValueError, match="delta must be \\(batch"):
            SsmParams(A=p.A, B=p.B, C=p.C, delta=p.delta[:, :2])
        with pytest.raises(ValueError, match="D must be"):
            SsmParams(A=p.A, B=p.B, C=p.C, delta=p.delta, D=p.D[:2])

    def test_positive_delta_enforced(self):
        x, p = random_params(1, 2, 5, 3)
        with pytest.raises(ValueError, match="strictly positive"):
            SsmParams(A=p.A, B=p.B, C=p.C, delta=torch.zeros_like(p.delta))

    def test_scan_input_checks(self):
        x, p = random_params(1, 2, 5, 3)
        with pytest.raises(ValueError, match="backend"):
            selective_scan_1d(x, p, backend="cuda")
        with pytest.raises(ValueError, match="must match delta"):
            selective_scan_1d(x[:, :1], p)
        with pytest.raises(ValueError, match="batch, channels, length"):
            selective_scan_1d(x[0], p)
