import math

import numpy as np
import pytest

from psrelay.channel import (ChannelPair, SystemParams, dbm_to_mw, decompose,
                             generate_channel_pair, load_channel_file,
                             snr_pair)


def make_params(m=4, l=4, n=4, d=4, **kw):
    defaults = dict(p_source=1000.0, sigma1_sq=10.0, sigma2_sq=1.0, eta=1.0)
    defaults.update(kw)
    return SystemParams(m_src=m, l_relay=l, n_dst=n, d_streams=d, **defaults)


class TestDbmToMw:
    def test_reference_points(self):
        assert dbm_to_mw(0.0) == 1.0
        assert dbm_to_mw(30.0) == 1000.0
        assert dbm_to_mw(20.0) == 100.0

    def test_strictly_increasing_and_decade_rule(self):
        rng = np.random.default_rng(0)
        xs = np.sort(rng.uniform(-40, 40, 200))
        vals = [dbm_to_mw(float(x)) for x in xs]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        for x in rng.uniform(-30, 30, 50):
            a = dbm_to_mw(float(x))
            b = dbm_to_mw(float(x) + 10.0)
            assert abs(b - 10.0 * a) <= 1e-12 * abs(b)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            dbm_to_mw(float("nan"))


class TestSystemParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            make_params(p_source=0.0)
        with pytest.raises(ValueError):
            make_params(eta=1.5)
        with pytest.raises(ValueError):
            make_params(d=5)  # exceeds min(M, L, N)

    def test_snr_pair_identity(self):
        params = make_params()
        snr = snr_pair(params)
        per_stream = params.p_source / params.d_streams
        assert snr.rho1 > 0 and snr.rho2 > 0
        assert math.isclose(snr.rho1 * params.sigma1_sq, per_stream, rel_tol=1e-14)
        assert math.isclose(snr.rho2 * params.sigma2_sq, per_stream, rel_tol=1e-14)


class TestGeneration:
    def test_shapes_and_determinism(self):
        params = make_params()
        a = generate_channel_pair(7, params, 100.0)
        b = generate_channel_pair(7, params, 100.0)
        assert a.h1.shape == (4, 4) and a.h2.shape == (4, 4)
        assert np.array_equal(a.h1, b.h1) and np.array_equal(a.h2, b.h2)

    def test_seed_sensitivity(self):
        params = make_params()
        a = generate_channel_pair(7, params, 100.0)
        b = generate_channel_pair(8, params, 100.0)
        assert not np.array_equal(a.h1, b.h1)

    def test_pooled_variance_within_5_percent(self):
        params = SystemParams(p_source=1.0, sigma1_sq=1.0, sigma2_sq=1.0, eta=1.0,
                              m_src=50, l_relay=50, n_dst=50, d_streams=1)
        pooled = []
        seed = 0
        while len(pooled) < 10_000:
            ch = generate_channel_pair(seed, params, 100.0)
            pooled.extend(np.abs(ch.h1.ravel()) ** 2)
            pooled.extend(np.abs(ch.h2.ravel()) ** 2)
            seed += 1
        var = float(np.mean(pooled[:10_000]))
        assert abs(var - 100.0) <= 5.0

    def test_rician_preserves_second_moment_and_adds_mean(self):
        params = SystemParams(p_source=1.0, sigma1_sq=1.0, sigma2_sq=1.0, eta=1.0,
                              m_src=60, l_relay=60, n_dst=60, d_streams=1)
        ch = generate_channel_pair(3, params, 100.0, rician_k=5.0)
        entries = np.concatenate([ch.h1.ravel(), ch.h2.ravel()])
        second = float(np.mean(np.abs(entries) ** 2))
        mean = complex(np.mean(entries))
        assert abs(second - 100.0) < 6.0
        assert abs(mean) > 5.0  # deterministic line-of-sight component

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(ValueError):
            generate_channel_pair(0, make_params(), 0.0)


class TestDecompose:
    def test_identity_channels(self):
        ch = ChannelPair(h1=np.eye(2, dtype=complex), h2=np.eye(2, dtype=complex))
        eig = decompose(ch, 2)
        np.testing.assert_allclose(eig.alpha, [1.0, 1.0])
        np.testing.assert_allclose(eig.beta, [1.0, 1.0])

    def test_diagonal_squared_singular_values(self):
        ch = ChannelPair(h1=np.diag([2.0, 1.0]).astype(complex),
                         h2=np.eye(2, dtype=complex))
        eig = decompose(ch, 2)
        np.testing.assert_allclose(eig.alpha, [4.0, 1.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_reconstruction_unitarity_and_trace(self, seed):
        params = make_params(m=3, l=3, n=3, d=3)
        ch = generate_channel_pair(seed, params, 100.0)
        eig = decompose(ch, 3)
        h1_rec = eig.u1 @ np.diag(eig.sigma1_diag).astype(complex) @ eig.v1.conj().T
        h2_rec = eig.u2 @ np.diag(eig.sigma2_diag).astype(complex) @ eig.v2.conj().T
        assert np.linalg.norm(ch.h1 - h1_rec) <= 1e-9 * np.linalg.norm(ch.h1)
        assert np.linalg.norm(ch.h2 - h2_rec) <= 1e-9 * np.linalg.norm(ch.h2)
        for u in (eig.u1, eig.v1, eig.u2, eig.v2):
            gram = u.conj().T @ u
            assert np.linalg.norm(gram - np.eye(u.shape[1])) <= 1e-9
        trace = float(np.trace(ch.h1 @ ch.h1.conj().T).real)
        assert abs(np.sum(eig.sigma1_diag ** 2) - trace) <= 1e-9 * trace

    def test_descending_and_length(self):
        params = make_params()
        eig = decompose(generate_channel_pair(11, params, 100.0), 4)
        assert len(eig.alpha) == 4 and len(eig.beta) == 4
        assert all(a >= b >= 0 for a, b in zip(eig.alpha, eig.alpha[1:]))
        assert all(a >= b >= 0 for a, b in zip(eig.beta, eig.beta[1:]))

    def test_rejects_oversized_d(self):
        ch = ChannelPair(h1=np.eye(2, dtype=complex), h2=np.eye(2, dtype=complex))
        with pytest.raises(ValueError):
            decompose(ch, 3)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            ChannelPair(h1=np.array([[np.nan + 0j, 0], [0, 1]]),
                        h2=np.eye(2, dtype=complex))


class TestChannelFile:
    def write(self, tmp_path, text):
        path = tmp_path / "chan.txt"
        path.write_text(text)
        return str(path)

    def test_round_trip(self, tmp_path):
        text = ("2 2\n1:0 0:1\n-1:0.5 2:-2\n"
                "\n2 2\n1:1 0:0\n0:0 1:-1\n")
        ch = load_channel_file(self.write(tmp_path, text))
        np.testing.assert_allclose(ch.h1, [[1, 1j], [-1 + 0.5j, 2 - 2j]])
        np.testing.assert_allclose(ch.h2, [[1 + 1j, 0], [0, 1 - 1j]])

    def test_wrong_entry_count_reports_line(self, tmp_path):
        path = self.write(tmp_path, "2 2\n1:0 0:1\n1:0\n2 2\n1:0 0:0\n0:0 1:0\n")
        with pytest.raises(ValueError, match="line 3"):
            load_channel_file(path)

    def test_bad_entry_format(self, tmp_path):
        path = self.write(tmp_path, "1 1\n1+2j\n1 1\n0:0\n")
        with pytest.raises(ValueError, match="re:im"):
            load_channel_file(path)

    def test_missing_second_block(self, tmp_path):
        path = self.write(tmp_path, "1 1\n1:0\n")
        with pytest.raises(ValueError, match="end of file"):
            load_channel_file(path)

    def test_trailing_content_rejected(self, tmp_path):
        path = self.write(tmp_path, "1 1\n1:0\n1 1\n2:0\nextra\n")
        with pytest.raises(ValueError, match="trailing"):
            load_channel_file(path)
